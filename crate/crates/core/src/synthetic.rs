//! Synthetic soundings used by the simulator and the test suites.

use crate::error::Result;
use crate::model::{DeviceConfig, Discretization, Orientation};

/// Layers of the synthetic column.
pub const DRIVER_LAYERS: usize = 35;
/// Depth covered by the bounded layers, m.
pub const DRIVER_DEPTH: f64 = 3.5;
/// Operating frequencies of the synthetic instrument, Hz.
pub const DRIVER_FREQUENCIES: [f64; 6] = [500.0, 2000.0, 8000.0, 24000.0, 48000.0, 96000.0];
/// Inter-coil distance, m.
pub const DRIVER_RHO: f64 = 4.0;
/// Instrument height, m.
pub const DRIVER_HEIGHT: f64 = 0.1;

pub fn driver_discretization() -> Discretization {
    Discretization::equal(DRIVER_LAYERS, DRIVER_DEPTH).expect("valid discretization")
}

/// One coil pair, six frequencies, one height, both orientations.
pub fn driver_device() -> DeviceConfig {
    DeviceConfig::from_hz(vec![DRIVER_RHO], vec![DRIVER_HEIGHT], &DRIVER_FREQUENCIES, Orientation::Both)
        .expect("valid device")
}

/// `0.05 + 0.15 exp(-(z - 1.2)^2 / 0.18)` S/m at the layer midpoints.
pub fn bump_profile(disc: &Discretization) -> Vec<f64> {
    disc.midpoints()
        .iter()
        .map(|z| 0.05 + 0.15 * (-(z - 1.2) * (z - 1.2) / 0.18).exp())
        .collect()
}

/// Two-step blocky profile: a conductive slab between `top` and `bottom`
/// (m) in a resistive background.
pub fn blocky_profile(disc: &Discretization, background: f64, slab: f64, top: f64, bottom: f64) -> Vec<f64> {
    disc.midpoints()
        .iter()
        .map(|z| if *z >= top && *z < bottom { slab } else { background })
        .collect()
}

/// Depth of the conductor in each of `columns` soundings: a linear trend
/// from `from` to `to` metres.
pub fn conductor_depths(columns: usize, from: f64, to: f64) -> Vec<f64> {
    if columns == 1 {
        return vec![from];
    }
    (0..columns)
        .map(|c| from + (to - from) * c as f64 / (columns - 1) as f64)
        .collect()
}

/// Gaussian conductor of peak `0.05 + 0.25` S/m centred at `depth`.
pub fn conductor_profile(disc: &Discretization, depth: f64) -> Vec<f64> {
    disc.midpoints()
        .iter()
        .map(|z| 0.05 + 0.25 * (-(z - depth) * (z - depth) / 0.08).exp())
        .collect()
}

/// Profiles of a section whose conductor deepens from left to right.
pub fn section_profiles(disc: &Discretization, columns: usize) -> Result<Vec<Vec<f64>>> {
    Ok(conductor_depths(columns, 0.6, 1.6)
        .into_iter()
        .map(|d| conductor_profile(disc, d))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn driver_shapes() {
        let disc = driver_discretization();
        assert_eq!(disc.layers(), 35);
        assert_eq!(driver_device().readings(), 12);
        let p = bump_profile(&disc);
        let (k, max) = p
            .iter()
            .enumerate()
            .fold((0, 0.0), |b, (k, v)| if *v > b.1 { (k, *v) } else { b });
        assert!((disc.midpoints()[k] - 1.2).abs() <= 0.1);
        assert!(max <= 0.2 && p.iter().all(|v| *v >= 0.05));
    }
}
