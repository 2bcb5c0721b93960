//! Noise injection and reconstruction metrics.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::spatial::{estimate_diameter, Metric, SpatialIndex};

/// Adds i.i.d. Gaussian noise with standard deviation
/// `sigma_level · estimate_diameter(cloud)` to every coordinate.
///
/// Draws come from ChaCha8 seeded with `seed`, in point order and x, y, z
/// order within each point, so results are reproducible across platforms.
pub fn add_gaussian_noise(cloud: &PointCloud, sigma_level: f64, seed: u64) -> Result<PointCloud> {
    if !(sigma_level >= 0.0 && sigma_level.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise level must be nonnegative, got {sigma_level}"
        )));
    }
    if sigma_level == 0.0 {
        return Ok(cloud.clone());
    }
    let std = sigma_level * estimate_diameter(cloud);
    if std == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            let dx = normal.sample(&mut rng);
            let dy = normal.sample(&mut rng);
            let dz = normal.sample(&mut rng);
            Point::new(p.x + dx, p.y + dy, p.z + dz)
        })
        .collect();
    PointCloud::new(points)
}

/// Mean over `from` of the nearest-neighbor distance key in `to`, where
/// the key is squared Euclidean or city-block distance.
fn directed_mean(from: &PointCloud, to: &SpatialIndex, metric: Metric) -> f64 {
    let terms: Vec<f64> = from
        .points()
        .par_iter()
        .map(|p| {
            let nb = to.nearest(p, metric);
            match metric {
                Metric::Euclidean => nb.distance * nb.distance,
                Metric::Manhattan => nb.distance,
            }
        })
        .collect();
    terms.iter().sum::<f64>() / from.len() as f64
}

fn two_sided(truth: &PointCloud, estimate: &PointCloud, metric: Metric) -> f64 {
    let truth_index = SpatialIndex::from_cloud(truth);
    let estimate_index = SpatialIndex::from_cloud(estimate);
    0.5 * directed_mean(truth, &estimate_index, metric) + 0.5 * directed_mean(estimate, &truth_index, metric)
}

/// Two-sided mean squared nearest-neighbor distance.
pub fn mse(truth: &PointCloud, estimate: &PointCloud) -> f64 {
    two_sided(truth, estimate, Metric::Euclidean)
}

/// Two-sided mean city-block distance, nearest neighbor chosen by the same metric.
pub fn mcd(truth: &PointCloud, estimate: &PointCloud) -> f64 {
    two_sided(truth, estimate, Metric::Manhattan)
}

/// Mean squared norm of the estimate's points.
pub fn signal_power(estimate: &PointCloud) -> f64 {
    estimate.points().iter().map(|p| p.coords.norm_squared()).sum::<f64>() / estimate.len() as f64
}

/// `10 log10(signal_power / mse)` in dB. `+∞` when the MSE is zero; `-∞`
/// (with a warning) when the estimate has zero power but nonzero MSE.
pub fn snr_from_parts(power: f64, mse: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    if power == 0.0 {
        warn!("estimate has zero signal power; SNR is -inf");
        return f64::NEG_INFINITY;
    }
    10.0 * (power / mse).log10()
}

pub fn snr(truth: &PointCloud, estimate: &PointCloud) -> f64 {
    snr_from_parts(signal_power(estimate), mse(truth, estimate))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsResult {
    pub mse: f64,
    pub snr_db: f64,
    pub mcd: f64,
}

pub fn evaluate(truth: &PointCloud, estimate: &PointCloud) -> MetricsResult {
    let mse = mse(truth, estimate);
    MetricsResult {
        mse,
        snr_db: snr_from_parts(signal_power(estimate), mse),
        mcd: mcd(truth, estimate),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(p: [f64; 3]) -> PointCloud {
        PointCloud::from_xyz(&[p]).unwrap()
    }

    #[test]
    fn spec_examples() {
        let a = one([0.0; 3]);
        assert_eq!(mse(&a, &a), 0.0);
        assert_eq!(mse(&a, &one([1.0, 0.0, 0.0])), 1.0);
        assert_eq!(mse(&a, &one([3.0, 4.0, 0.0])), 25.0);
        assert_eq!(mcd(&a, &one([3.0, 4.0, 0.0])), 7.0);
        assert_eq!(snr(&a, &one([1.0, 0.0, 0.0])), 0.0);
        let b = one([1.0, 2.0, 3.0]);
        assert_eq!(snr(&b, &b), f64::INFINITY);
        assert_eq!(snr(&b, &a), f64::NEG_INFINITY);
    }

    #[test]
    fn noise_determinism_and_zero_level() {
        let pts: Vec<[f64; 3]> = (0..50).map(|i| [i as f64, 0.0, 1.0]).collect();
        let c = PointCloud::from_xyz(&pts).unwrap();
        assert_eq!(add_gaussian_noise(&c, 0.0, 3).unwrap(), c);
        let a = add_gaussian_noise(&c, 0.02, 7).unwrap();
        assert_eq!(a, add_gaussian_noise(&c, 0.02, 7).unwrap());
        assert_ne!(a, add_gaussian_noise(&c, 0.02, 8).unwrap());
        assert!(add_gaussian_noise(&c, -1.0, 0).is_err());
    }
}
