//! Problem instances from configuration blocks.

use nalgebra::DVector;
use rangeinv::pde::{make_grid, BoundaryPartition, Field};
use rangeinv::problems::{
    build_diffabs_problem, build_potential_problem, build_robin_problem, Coefficients, InverseProblem, PhiKind, ProblemKind,
};
use rangeinv::{Error, Grid, Problem, Result};

use crate::config::{CoefficientBlock, ExperimentConfig, ProblemBlock};
use crate::expr::parse_expr;

/// Where the Robin coefficient lives.
const ROBIN_SEGMENT: &str = "bottom";

fn eval_on(grid: &Grid, nodes: Option<&[usize]>, src: &str) -> Result<DVector<f64>> {
    let expr = parse_expr(src).map_err(|e| Error::Configuration(format!("`{src}`: {e}")))?;
    let eval = |node: usize| {
        let (x, y) = grid.coord(node);
        expr.eval(x, y)
    };
    Ok(match nodes {
        Some(nodes) => DVector::from_iterator(nodes.len(), nodes.iter().map(|&k| eval(k))),
        None => DVector::from_fn(grid.node_count(), |k, _| eval(k)),
    })
}

fn coefficients(grid: &Grid, kind: ProblemKind, block: &CoefficientBlock) -> Result<Coefficients<f64>> {
    let get = |name: &str| {
        block
            .exprs
            .get(name)
            .ok_or_else(|| Error::Configuration(format!("missing coefficient `{name}`")))
    };
    Ok(match kind {
        ProblemKind::Robin => Coefficients::single(eval_on(grid, Some(grid.segment(ROBIN_SEGMENT)?), get("q")?)?),
        ProblemKind::DiffAbs => Coefficients {
            extended: eval_on(grid, None, get("c")?)?,
            shared: vec![eval_on(grid, None, get("a")?)?],
        },
        _ => Coefficients::single(eval_on(grid, None, get("q")?)?),
    })
}

/// Builds the instance with `init` as linearization point, then installs the
/// truth.
pub fn build_instance(problem: &ProblemBlock, truth: &CoefficientBlock, init: &CoefficientBlock) -> Result<Problem> {
    let partition = match problem.kind {
        ProblemKind::Robin => BoundaryPartition::Sides,
        _ => BoundaryPartition::Whole,
    };
    let grid: Grid = make_grid(problem.dim, problem.n, &partition)?;
    let x0 = coefficients(&grid, problem.kind, init)?;
    let mut instance = match problem.kind {
        ProblemKind::Potential => {
            let q0 = Field::new(&grid, x0.extended)?;
            build_potential_problem(grid.clone(), problem.m, q0, problem.formulation)?
        }
        ProblemKind::Robin => {
            let phi: PhiKind = problem.phi.parse()?;
            build_robin_problem(grid.clone(), x0.extended, phi, problem.formulation)?
        }
        ProblemKind::DiffAbs => {
            let c0 = Field::new(&grid, x0.extended)?;
            let a0 = Field::new(&grid, x0.shared[0].clone())?;
            build_diffabs_problem(grid.clone(), problem.lambdas.clone(), problem.m, c0, a0, problem.formulation)?
        }
        ProblemKind::Toy => return Err(Error::Configuration("the toy problem is not configurable".into())),
    };
    instance.set_truth(&coefficients(&grid, problem.kind, truth)?)?;
    Ok(instance)
}

pub fn build_from_config(cfg: &ExperimentConfig) -> Result<Problem> {
    build_instance(&cfg.problem, &cfg.truth, &cfg.init)
}
