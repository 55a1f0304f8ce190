use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::DataVector;

/// `b + e` with `e = delta ||b|| w / ||w||`, `w` standard Gaussian drawn
/// from a generator seeded with `seed`. Norms are taken on the real stacked
/// form (unit balance); real-valued components are perturbed on their real
/// parts only.
pub fn add_noise(b: &DataVector, delta: f64, seed: u64) -> Result<DataVector> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::invalid("inversion.noise_delta", format!("must be >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(b.clone());
    }
    let complex = b.component.is_complex();
    let m = b.len();
    let len = if complex { 2 * m } else { m };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let wnorm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bnorm = b.stacked(1.0).norm();
    let scale = if wnorm > 0.0 { delta * bnorm / wnorm } else { 0.0 };
    let mut out = b.clone();
    for (k, v) in out.values.iter_mut().enumerate() {
        let e = if complex {
            Complex64::new(w[k], w[m + k])
        } else {
            Complex64::new(w[k], 0.0)
        };
        *v += e * scale;
    }
    Ok(out)
}
