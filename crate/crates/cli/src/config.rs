//! Experiment configuration files.
//!
//! ```text
//! # 1-D potential, noise-free
//! [problem]
//! kind = "potential"
//! dim = 1
//! n = 33
//!
//! [truth]
//! q = "1 + 0.5*sin(pi*x)"
//!
//! [noise]
//! delta = 0, 1e-3
//! seed = 1
//!
//! [solver]
//! method = "frozen_newton"
//! max_iter = 30
//! ```
//!
//! Section headers in brackets, `key = value` lines, `#` comments, strings in
//! double quotes, lists separated by commas. Unknown sections and keys are
//! rejected.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rangeinv::problems::{Formulation, PhiKind, ProblemKind};
use rangeinv::solvers::{Method, SolverConfig, StopRule};
use serde::Serialize;

use crate::expr::{parse_expr, ExprError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("[{section}] {key}: {message}")]
    Value { section: String, key: String, message: String },
    #[error("[{section}] {key}: {source}")]
    Expr {
        section: String,
        key: String,
        #[source]
        source: ExprError,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

type Result<T, E = ConfigError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
struct Item {
    text: String,
    quoted: bool,
}

#[derive(Debug, Default)]
struct Document {
    sections: BTreeMap<String, BTreeMap<String, (usize, Vec<Item>)>>,
}

fn split_items(raw: &str, line: usize) -> Result<Vec<Item>> {
    let syntax = |message: String| ConfigError::Syntax { line, message };
    let mut items = Vec::new();
    let mut chars = raw.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let mut text = String::new();
        let quoted = chars.peek() == Some(&'"');
        if quoted {
            chars.next();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some(c @ ('"' | '\\')) => text.push(c),
                        Some(c) => return Err(syntax(format!("unknown escape `\\{c}`"))),
                        None => return Err(syntax("unterminated string".into())),
                    },
                    Some(c) => text.push(c),
                    None => return Err(syntax("unterminated string".into())),
                }
            }
            while chars.peek().is_some_and(|c| c.is_whitespace()) {
                chars.next();
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c == ',' || c == '"' {
                    break;
                }
                text.push(c);
                chars.next();
            }
            text = text.trim().to_string();
            if text.is_empty() {
                return Err(syntax("empty value".into()));
            }
        }
        items.push(Item { text, quoted });
        match chars.next() {
            None => return Ok(items),
            Some(',') => continue,
            Some(c) => return Err(syntax(format!("unexpected `{c}` after value"))),
        }
    }
}

/// Removes a trailing `#` comment outside quotes.
fn strip_comment(line: &str) -> &str {
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            '\\' if in_string && !escaped => {
                escaped = true;
                continue;
            }
            '"' if !escaped => in_string = !in_string,
            '#' if !in_string => return &line[..i],
            _ => {}
        }
        escaped = false;
    }
    line
}

fn parse_document(src: &str) -> Result<Document> {
    let mut doc = Document::default();
    let mut current: Option<String> = None;
    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        let text = strip_comment(raw).trim();
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: "unterminated section header".into(),
                })?
                .trim();
            if name.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    message: "empty section name".into(),
                });
            }
            if doc.sections.contains_key(name) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("section [{name}] repeated"),
                });
            }
            doc.sections.insert(name.to_string(), BTreeMap::new());
            current = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = text.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                message: "expected `key = value`".into(),
            });
        };
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(ConfigError::Syntax {
                line,
                message: format!("invalid key `{key}`"),
            });
        }
        let Some(section) = &current else {
            return Err(ConfigError::Syntax {
                line,
                message: "key outside of any section".into(),
            });
        };
        let items = split_items(value, line)?;
        let entries = doc.sections.get_mut(section).expect("section inserted");
        if entries.insert(key.to_string(), (line, items)).is_some() {
            return Err(ConfigError::Syntax {
                line,
                message: format!("key `{key}` repeated"),
            });
        }
    }
    Ok(doc)
}

/// Typed access to one section; every key must be consumed.
struct Section {
    name: &'static str,
    entries: BTreeMap<String, (usize, Vec<Item>)>,
}

impl Section {
    fn take(doc: &mut Document, name: &'static str) -> Self {
        Section {
            name,
            entries: doc.sections.remove(name).unwrap_or_default(),
        }
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            section: self.name.to_string(),
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn list(&mut self, key: &str) -> Option<Vec<Item>> {
        self.entries.remove(key).map(|(_, items)| items)
    }

    fn single(&mut self, key: &str) -> Result<Option<Item>> {
        match self.list(key) {
            None => Ok(None),
            Some(mut items) if items.len() == 1 => Ok(items.pop()),
            Some(items) => Err(self.err(key, format!("expected a single value, got {}", items.len()))),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.single(key)? {
            None => Ok(None),
            Some(item) if item.quoted => Ok(Some(item.text)),
            Some(item) => Err(self.err(key, format!("expected a quoted string, got `{}`", item.text))),
        }
    }

    fn strings(&mut self, key: &str) -> Result<Option<Vec<String>>> {
        let Some(items) = self.list(key) else { return Ok(None) };
        items
            .into_iter()
            .map(|item| {
                if item.quoted {
                    Ok(item.text)
                } else {
                    Err(self.err(key, format!("expected a quoted string, got `{}`", item.text)))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn parsed<V: FromStr>(&self, key: &str, item: &Item) -> Result<V>
    where
        V::Err: std::fmt::Display,
    {
        if item.quoted {
            return Err(self.err(key, format!("expected an unquoted value, got \"{}\"", item.text)));
        }
        item.text
            .parse::<V>()
            .map_err(|e| self.err(key, format!("cannot parse `{}`: {e}", item.text)))
    }

    fn value<V: FromStr>(&mut self, key: &str) -> Result<Option<V>>
    where
        V::Err: std::fmt::Display,
    {
        match self.single(key)? {
            None => Ok(None),
            Some(item) => self.parsed(key, &item).map(Some),
        }
    }

    fn values<V: FromStr>(&mut self, key: &str) -> Result<Option<Vec<V>>>
    where
        V::Err: std::fmt::Display,
    {
        let Some(items) = self.list(key) else { return Ok(None) };
        items
            .iter()
            .map(|item| self.parsed(key, item))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Named choice, quoted or bare.
    fn choice<V: FromStr>(&mut self, key: &str) -> Result<Option<V>>
    where
        V::Err: std::fmt::Display,
    {
        match self.single(key)? {
            None => Ok(None),
            Some(item) => item.text.parse::<V>().map(Some).map_err(|e| self.err(key, e.to_string())),
        }
    }

    fn choices<V: FromStr>(&mut self, key: &str) -> Result<Option<Vec<V>>>
    where
        V::Err: std::fmt::Display,
    {
        let Some(items) = self.list(key) else { return Ok(None) };
        items
            .iter()
            .map(|item| item.text.parse::<V>().map_err(|e| self.err(key, e.to_string())))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(ConfigError::Syntax {
                line,
                message: format!("unknown key `{key}` in [{}]", self.name),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemBlock {
    pub kind: ProblemKind,
    pub dim: usize,
    pub n: usize,
    pub m: usize,
    pub lambdas: Vec<f64>,
    pub phi: String,
    pub formulation: Formulation,
}

/// Coefficient expressions by name: `q` (potential, robin), `c` and `a`
/// (diffabs).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientBlock {
    pub exprs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseBlock {
    pub delta: Vec<f64>,
    pub seed: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverBlock {
    pub methods: Vec<Method>,
    pub alpha0: f64,
    pub theta: f64,
    pub tau: f64,
    pub tau_apriori: f64,
    pub c_estimate: f64,
    pub max_iter: usize,
    pub stop: String,
    pub fd_step: Option<f64>,
    pub record_timing: bool,
    pub inner_iter: usize,
    pub mu: f64,
    pub eta: Option<f64>,
    pub var_alpha: Option<f64>,
    pub var_beta: Option<f64>,
    #[serde(skip)]
    stop_rule: StopRule,
}

impl SolverBlock {
    pub fn solver_config(&self, method: Method) -> SolverConfig<f64> {
        let mut cfg = SolverConfig::with_method(method);
        cfg.alpha0 = self.alpha0;
        cfg.theta = self.theta;
        cfg.tau = self.tau;
        cfg.tau_apriori = self.tau_apriori;
        cfg.c_estimate = self.c_estimate;
        cfg.max_iter = self.max_iter;
        cfg.stop = self.stop_rule;
        cfg.fd_step = self.fd_step;
        cfg.record_timing = self.record_timing;
        cfg.variational.inner_iter = self.inner_iter;
        cfg.variational.mu = self.mu;
        cfg.variational.eta = self.eta;
        cfg.variational.alpha = self.var_alpha;
        cfg.variational.beta = self.var_beta;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputBlock {
    pub dir: String,
    pub formats: Vec<String>,
    pub workers: usize,
}

impl OutputBlock {
    pub fn csv(&self) -> bool {
        self.formats.iter().any(|f| f == "csv")
    }

    pub fn json(&self) -> bool {
        self.formats.iter().any(|f| f == "json")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub problem: ProblemBlock,
    pub truth: CoefficientBlock,
    pub init: CoefficientBlock,
    pub noise: NoiseBlock,
    pub solver: SolverBlock,
    pub output: OutputBlock,
}

/// `(coefficient, expression)` pairs.
pub type Exprs = Vec<(&'static str, &'static str)>;

/// Truth and initial-guess expressions used when a block is omitted.
pub fn default_exprs(kind: ProblemKind, dim: usize) -> (Exprs, Exprs) {
    match kind {
        ProblemKind::Potential if dim == 1 => (vec![("q", "1 + 0.5*sin(pi*x)")], vec![("q", "1")]),
        ProblemKind::Potential => (vec![("q", "1 + 0.5*sin(pi*x)*sin(pi*y)")], vec![("q", "1")]),
        ProblemKind::Robin => (vec![("q", "1 + 0.5*x*(1 - x)")], vec![("q", "1")]),
        ProblemKind::DiffAbs => (
            vec![("c", "5 + sin(pi*x)*sin(pi*y)"), ("a", "1 + 0.2*sin(pi*x)*sin(pi*y)")],
            vec![("c", "5"), ("a", "1")],
        ),
        ProblemKind::Toy => (vec![], vec![]),
    }
}

fn coefficient_block(doc: &mut Document, name: &'static str, dim: usize, defaults: Exprs, suffix: &str) -> Result<CoefficientBlock> {
    let mut section = Section::take(doc, name);
    let mut exprs = BTreeMap::new();
    for (coef, default) in defaults {
        // The init block accepts both `q` and `q0`.
        let alias = format!("{coef}{suffix}");
        let a = section.string(coef)?;
        let b = if suffix.is_empty() { None } else { section.string(&alias)? };
        if a.is_some() && b.is_some() {
            return Err(section.err(&alias, format!("both `{coef}` and `{alias}` given")));
        }
        let src = a.or(b).unwrap_or_else(|| default.to_string());
        let expr = parse_expr(&src).map_err(|source| ConfigError::Expr {
            section: name.to_string(),
            key: coef.to_string(),
            source,
        })?;
        expr.validate(dim).map_err(|source| ConfigError::Expr {
            section: name.to_string(),
            key: coef.to_string(),
            source,
        })?;
        exprs.insert(coef.to_string(), src);
    }
    section.finish()?;
    Ok(CoefficientBlock { exprs })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&src)
    }

    pub fn parse(src: &str) -> Result<Self> {
        let mut doc = parse_document(src)?;

        let mut s = Section::take(&mut doc, "problem");
        let kind: ProblemKind = s
            .choice("kind")?
            .ok_or_else(|| ConfigError::Invalid("[problem] kind is required".into()))?;
        if kind == ProblemKind::Toy {
            return Err(s.err("kind", "the toy problem is not configurable"));
        }
        let dim = s.value("dim")?.unwrap_or(if kind == ProblemKind::Potential { 1 } else { 2 });
        if !(dim == 1 || dim == 2) {
            return Err(s.err("dim", format!("must be 1 or 2, got {dim}")));
        }
        let n = s.value("n")?.unwrap_or(if dim == 1 { 33 } else { 17 });
        let m = s.value("m")?.unwrap_or(4);
        let lambdas = s.values("lambdas")?.unwrap_or_else(|| vec![0.0, 1.0, 2.0, 4.0]);
        let phi = s.string("phi")?.unwrap_or_else(|| "linear".into());
        phi.parse::<PhiKind>().map_err(|e| s.err("phi", e.to_string()))?;
        let formulation = s.choice("formulation")?.unwrap_or(Formulation::Reduced);
        s.finish()?;
        let problem = ProblemBlock {
            kind,
            dim,
            n,
            m,
            lambdas,
            phi,
            formulation,
        };

        let (truth_defaults, init_defaults) = default_exprs(kind, dim);
        let truth = coefficient_block(&mut doc, "truth", dim, truth_defaults, "")?;
        let init = coefficient_block(&mut doc, "init", dim, init_defaults, "0")?;

        let mut s = Section::take(&mut doc, "noise");
        let delta: Vec<f64> = s.values("delta")?.unwrap_or_else(|| vec![0.0]);
        if let Some(bad) = delta.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(s.err("delta", format!("noise levels must be finite and non-negative, got {bad}")));
        }
        let seed = s.values("seed")?.unwrap_or_else(|| vec![1]);
        if delta.is_empty() || seed.is_empty() {
            return Err(s.err("delta", "delta and seed lists must be non-empty"));
        }
        s.finish()?;
        let noise = NoiseBlock { delta, seed };

        let mut s = Section::take(&mut doc, "solver");
        let d = SolverConfig::<f64>::default();
        let single: Option<Method> = s.choice("method")?;
        let many: Option<Vec<Method>> = s.choices("methods")?;
        let methods = match (single, many) {
            (Some(_), Some(_)) => return Err(s.err("methods", "give either `method` or `methods`")),
            (Some(m), None) => vec![m],
            (None, Some(ms)) if !ms.is_empty() => ms,
            (None, Some(_)) => return Err(s.err("methods", "empty list")),
            (None, None) => vec![d.method],
        };
        let stop = s.string("stop")?.unwrap_or_else(|| "discrepancy".into());
        let stop_rule: StopRule = stop.parse().map_err(|e: rangeinv::Error| s.err("stop", e.to_string()))?;
        let solver = SolverBlock {
            methods,
            alpha0: s.value("alpha0")?.unwrap_or(d.alpha0),
            theta: s.value("theta")?.unwrap_or(d.theta),
            tau: s.value("tau")?.unwrap_or(d.tau),
            tau_apriori: s.value("tau_apriori")?.unwrap_or(d.tau_apriori),
            c_estimate: s.value("c_estimate")?.unwrap_or(d.c_estimate),
            max_iter: s.value("max_iter")?.unwrap_or(d.max_iter),
            stop,
            fd_step: s.value("fd_step")?,
            record_timing: s.value("record_timing")?.unwrap_or(false),
            inner_iter: s.value("inner_iter")?.unwrap_or(d.variational.inner_iter),
            mu: s.value("mu")?.unwrap_or(d.variational.mu),
            eta: s.value("eta")?,
            var_alpha: s.value("var_alpha")?,
            var_beta: s.value("var_beta")?,
            stop_rule,
        };
        s.finish()?;
        for &method in &solver.methods {
            solver
                .solver_config(method)
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("[solver] {e}")))?;
        }

        let mut s = Section::take(&mut doc, "output");
        let output = OutputBlock {
            dir: s.string("dir")?.unwrap_or_else(|| "output".into()),
            formats: s.strings("formats")?.unwrap_or_else(|| vec!["csv".into(), "json".into()]),
            workers: s.value("workers")?.unwrap_or(1),
        };
        if let Some(bad) = output.formats.iter().find(|f| *f != "csv" && *f != "json") {
            return Err(s.err("formats", format!("unknown format `{bad}` (csv, json)")));
        }
        if output.workers == 0 {
            return Err(s.err("workers", "must be at least 1"));
        }
        s.finish()?;

        if let Some(name) = doc.sections.keys().next() {
            return Err(ConfigError::Invalid(format!("unknown section [{name}]")));
        }
        Ok(ExperimentConfig {
            problem,
            truth,
            init,
            noise,
            solver,
            output,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_everything() {
        let cfg = ExperimentConfig::parse("[problem]\nkind = \"potential\"\n").unwrap();
        assert_eq!(cfg.problem.dim, 1);
        assert_eq!(cfg.problem.n, 33);
        assert_eq!(cfg.truth.exprs["q"], "1 + 0.5*sin(pi*x)");
        assert_eq!(cfg.init.exprs["q"], "1");
        assert_eq!(cfg.noise.delta, vec![0.0]);
        assert_eq!(cfg.solver.methods, vec![Method::FrozenNewton]);
        assert_eq!(cfg.output.workers, 1);
        let cfg = ExperimentConfig::parse("[problem]\nkind = diffabs\n").unwrap();
        assert_eq!(cfg.problem.dim, 2);
        assert_eq!(cfg.init.exprs["c"], "5");
    }

    #[test]
    fn full_file() {
        let src = r#"
            # comment
            [problem]
            kind = "robin"   # trailing comment
            phi = "tanh"
            formulation = all_at_once
            [init]
            q0 = "1 + 0.1*x"
            [noise]
            delta = 1e-2, 1e-3,1e-4
            seed = 3, 4
            [solver]
            methods = frozen_newton, "variational"
            stop = "apriori"
            max_iter = 12
            var_alpha = 0.1
            [output]
            dir = "out # not a comment"
            formats = "csv"
            workers = 3
        "#;
        let cfg = ExperimentConfig::parse(src).unwrap();
        assert_eq!(cfg.problem.formulation, Formulation::AllAtOnce);
        assert_eq!(cfg.init.exprs["q"], "1 + 0.1*x");
        assert_eq!(cfg.noise.delta, vec![1e-2, 1e-3, 1e-4]);
        assert_eq!(cfg.noise.seed, vec![3, 4]);
        assert_eq!(cfg.solver.methods, vec![Method::FrozenNewton, Method::Variational]);
        let sc = cfg.solver.solver_config(Method::Variational);
        assert_eq!(sc.stop, StopRule::Apriori);
        assert_eq!(sc.max_iter, 12);
        assert_eq!(sc.variational.alpha, Some(0.1));
        assert_eq!(cfg.output.dir, "out # not a comment");
        assert!(cfg.output.csv() && !cfg.output.json());
    }

    #[test]
    fn rejections() {
        let bad = [
            "kind = \"potential\"",
            "[problem]\nkind = \"potential\"\nfoo = 1",
            "[problem]\nkind = \"potential\"\n[bogus]\n",
            "[problem]\nkind = \"potential\"\n[noise]\ndelta = -1",
            "[problem]\nkind = \"potential\"\n[truth]\nq = \"1 + y\"",
            "[problem]\nkind = \"potential\"\n[truth]\nq = \"1 + \"",
            "[problem]\nkind = \"potential\"\n[truth]\nq = 1",
            "[problem]\nkind = \"potential\"\n[solver]\ntheta = 0.1",
            "[problem]\nkind = \"potential\"\nkind = \"robin\"",
            "[problem]\nkind = \"potential\"\ndim = \"1\"",
            "[problem]\nkind = \"potential\"\n[output]\ndir = \"open",
            "[problem]\n",
        ];
        for src in bad {
            assert!(ExperimentConfig::parse(src).is_err(), "{src}");
        }
        let err = ExperimentConfig::parse("[problem]\nkind = \"potential\"\n[truth]\nq = \"1 + zz\"").unwrap_err();
        assert!(err.to_string().contains("zz"), "{err}");
    }
}
