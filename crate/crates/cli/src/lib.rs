//! Configuration, orchestration and reporting for `rangeinv` experiments.

pub mod config;
pub mod expr;
pub mod instance;
pub mod noise;
pub mod run;
pub mod suite;

pub use config::ExperimentConfig;
pub use expr::{parse_expr, Expr};
pub use noise::make_noise;
