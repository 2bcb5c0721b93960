//! Denoising parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patchdist::InterpolationWeighting;

/// Which Laplacian the solve uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplacianKind {
    #[default]
    Combinatorial,
    /// `D^(-1/2) L D^(-1/2)` over patch slots. Does not preserve constant
    /// signals; kept only for comparison.
    Normalized,
}

/// Schedule denominator `r` used when neither it nor σ is given.
pub const DEFAULT_SCHEDULE_R: f64 = 7.0;

/// `r` for a known noise level: 0.02 → 4, 0.03 → 7, 0.04 → 12, otherwise 7.
pub fn schedule_r_for_sigma(sigma: f64) -> f64 {
    const TABLE: [(f64, f64); 3] = [(0.02, 4.0), (0.03, 7.0), (0.04, 12.0)];
    TABLE
        .iter()
        .find(|(s, _)| (s - sigma).abs() < 1e-9)
        .map_or(DEFAULT_SCHEDULE_R, |&(_, r)| r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    /// Noise ratio σ, when known. Only used to pick `schedule_r`.
    pub sigma_level: Option<f64>,
    pub patch_size: usize,
    pub patch_neighbors: usize,
    pub center_fraction: f64,
    pub tau: f64,
    pub gamma: f64,
    /// Explicit schedule denominator; derived from `sigma_level` when unset.
    pub schedule_r: Option<f64>,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub pcg_tol: f64,
    pub pcg_max_iters: usize,
    pub rng_seed: u64,
    /// `r = C_r · ε`; unbounded when unset.
    pub radius_multiplier: Option<f64>,
    pub weighting: InterpolationWeighting,
    pub laplacian: LaplacianKind,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            sigma_level: None,
            patch_size: 30,
            patch_neighbors: 16,
            center_fraction: 0.5,
            tau: 1.0,
            gamma: 0.5,
            schedule_r: None,
            max_iterations: 15,
            convergence_tol: 1e-4,
            pcg_tol: 1e-8,
            pcg_max_iters: 1000,
            rng_seed: 0,
            radius_multiplier: None,
            weighting: InterpolationWeighting::Proportional,
            laplacian: LaplacianKind::Combinatorial,
        }
    }
}

impl DenoiseConfig {
    pub fn effective_schedule_r(&self) -> f64 {
        self.schedule_r
            .unwrap_or_else(|| self.sigma_level.map_or(DEFAULT_SCHEDULE_R, schedule_r_for_sigma))
    }

    pub fn validate(&self, points: usize) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        if let Some(s) = self.sigma_level {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("sigma must be nonnegative, got {s}")));
            }
        }
        if self.patch_size == 0 {
            return Err(Error::InvalidParameter("patch size must be positive".into()));
        }
        if self.patch_neighbors == 0 {
            return Err(Error::InvalidParameter("patch neighbors must be positive".into()));
        }
        if !(self.center_fraction > 0.0 && self.center_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "center fraction must be in (0, 1], got {}",
                self.center_fraction
            )));
        }
        positive("tau", self.tau)?;
        positive("gamma", self.gamma)?;
        positive("schedule r", self.effective_schedule_r())?;
        positive("convergence tolerance", self.convergence_tol)?;
        positive("pcg tolerance", self.pcg_tol)?;
        if self.pcg_max_iters == 0 {
            return Err(Error::InvalidParameter("pcg iteration cap must be positive".into()));
        }
        if let Some(c) = self.radius_multiplier {
            positive("radius multiplier", c)?;
        }
        if points < self.patch_size {
            return Err(Error::PatchLargerThanCloud {
                k: self.patch_size,
                points,
            });
        }
        Ok(())
    }
}
