use proptest::prelude::*;
use rangeinv_cli::expr::{BinOp, Expr, Func};
use rangeinv_cli::parse_expr;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0..100.0f64).prop_map(Expr::Num),
        (0u32..1000).prop_map(|k| Expr::Num(k as f64 * 0.25)),
        Just(Expr::X),
        Just(Expr::Y),
        Just(Expr::Pi),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow)
        ];
        let func = prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp), Just(Func::Tanh)];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (func, inner.clone()).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
            (op, inner.clone(), inner).prop_map(|(op, a, b)| Expr::Bin(op, Box::new(a), Box::new(b))),
        ]
    })
}

fn same(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= 1e-14 * a.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn pretty_print_round_trips(e in expr()) {
        let printed = e.to_string();
        let back = parse_expr(&printed).map_err(|err| TestCaseError::fail(format!("{printed}: {err}")))?;
        prop_assert_eq!(&back, &e);
        for i in 0..10 {
            for j in 0..10 {
                let (x, y) = (i as f64 / 9.0, j as f64 / 9.0);
                prop_assert!(same(e.eval(x, y), back.eval(x, y)), "{} at ({}, {})", printed, x, y);
            }
        }
    }

    #[test]
    fn whitespace_is_ignored(e in expr()) {
        let printed = e.to_string();
        let tight: String = printed.chars().filter(|c| !c.is_whitespace()).collect();
        let spaced = printed.replace('(', " (\t").replace(')', "\n) ");
        prop_assert_eq!(parse_expr(&tight).unwrap(), e.clone());
        prop_assert_eq!(parse_expr(&spaced).unwrap(), e);
    }
}

#[test]
fn left_associative_chains() {
    let e = parse_expr("1 - 2 - 3").unwrap();
    assert_eq!(e.to_string(), "((1e0 - 2e0) - 3e0)");
    assert_eq!(parse_expr("2^3^2").unwrap().to_string(), "(2e0 ^ (3e0 ^ 2e0))");
}
