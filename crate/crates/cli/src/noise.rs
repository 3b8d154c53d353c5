//! Data perturbation at an exact noise level.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rangeinv::{Error, Result, Space};

/// `y + δ e / |e|_Y` with `e` standard normal from `seed`, so that
/// `|y^δ - y|_Y = δ`. `δ = 0` returns `y` unchanged.
pub fn make_noise(y: &DVector<f64>, space: &Space, delta: f64, seed: u64) -> Result<DVector<f64>> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Argument(format!("noise level must be non-negative, got {delta}")));
    }
    if y.len() != space.dim() {
        return Err(Error::Dimension {
            expected: space.dim(),
            got: y.len(),
        });
    }
    if delta == 0.0 {
        return Ok(y.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let e = DVector::from_fn(y.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = space.norm(&e)?;
        if norm > 0.0 {
            return Ok(y + e * (delta / norm));
        }
    }
}
