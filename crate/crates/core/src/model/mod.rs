//! Latent-time multivariate mixed model and its log-posterior.
//!
//! Each subject `i` has a latent onset time `T*_i`; marker values are
//! modelled on the disease timescale `s = t - T*_i` as
//!
//! ```text
//! y_ijk = (1, s) . beta_k + x_i . gamma_k + (1, s) . u_ik + e_ijk,   e ~ N(0, sigma_k^2)
//! ```
//!
//! with `beta_k >= 0`, marker-specific random effects `u_ik ~ N(0, B_k)`
//! independent across markers, and `ln(T*_i + eps_L) ~ N(mu, sigma^2)`.
//! In anchored mode `T*_i` is restricted to `(T_diag - eps_L, T_diag + eps_U)`
//! for diagnosed subjects and to `(T_last - eps_L, inf)` otherwise.

mod density;
mod design;
mod layout;
mod params;

pub use density::{
    log_jacobian, log_likelihood, log_prior, marker_mean, DpamPosterior, SUBJECTS_PER_BLOCK,
};
pub use design::{ModelData, ObsRow, SubjectData};
pub use layout::{Layout, MarkerSlots, CENTERING_STEPS};
pub use params::{MarkerParams, ParameterVector, TimeBounds};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disease timescale: `s_i(t) = t - T*_i`.
pub fn latent_time(t: f64, t_star: f64) -> f64 {
    t - t_star
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorMode {
    #[default]
    Anchored,
    /// Gaussian `T*` without diagnosis constraints.
    NonAnchored,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeBasis {
    /// `F(s) = (1, s)`
    #[default]
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Priors {
    /// SD of the Normal prior on every `beta` (half-normal) and `gamma` element.
    pub fixed_effect_sd: f64,
    /// Scale of the half-Cauchy prior on all standard deviations.
    pub half_cauchy_scale: f64,
    pub mu_t_mean: f64,
    pub mu_t_sd: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            fixed_effect_sd: 10.0,
            half_cauchy_scale: 2.5,
            mu_t_mean: 10.0,
            mu_t_sd: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerModel {
    pub name: String,
    #[serde(default)]
    pub random_slope: bool,
    /// Adds a first-visit (practice effect) indicator to this marker's covariates.
    #[serde(default)]
    pub first_visit_effect: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub markers: Vec<MarkerModel>,
    pub n_covariates: usize,
    pub eps_l: f64,
    pub eps_u: f64,
    pub mode: AnchorMode,
    pub priors: Priors,
    pub time_basis: TimeBasis,
}

impl ModelSpec {
    pub fn new(markers: Vec<MarkerModel>, n_covariates: usize) -> Self {
        ModelSpec {
            markers,
            n_covariates,
            eps_l: 1.5,
            eps_u: 1.5,
            mode: AnchorMode::Anchored,
            priors: Priors::default(),
            time_basis: TimeBasis::Linear,
        }
    }

    pub fn n_markers(&self) -> usize {
        self.markers.len()
    }

    pub fn n_gamma(&self, k: usize) -> usize {
        self.n_covariates + usize::from(self.markers[k].first_visit_effect)
    }

    pub fn n_random_effects(&self, k: usize) -> usize {
        if self.markers[k].random_slope {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.markers.is_empty() {
            return Err(Error::Model("model needs at least one marker".into()));
        }
        if !(self.eps_l > 0.0
            && self.eps_l.is_finite()
            && self.eps_u > 0.0
            && self.eps_u.is_finite())
        {
            return Err(Error::Model(format!(
                "eps_l and eps_u must be positive (got {}, {})",
                self.eps_l, self.eps_u
            )));
        }
        let p = &self.priors;
        if !(p.fixed_effect_sd > 0.0 && p.half_cauchy_scale > 0.0 && p.mu_t_sd > 0.0) {
            return Err(Error::Model("prior scales must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_time_anchor() {
        assert_eq!(latent_time(3.0, 3.0), 0.0);
        assert_eq!(latent_time(0.0, 3.0), -3.0);
        assert_eq!(latent_time(5.0, -1.0), 6.0);
    }

    #[test]
    fn spec_validation() {
        let mut spec = ModelSpec::new(
            vec![MarkerModel {
                name: "a".into(),
                random_slope: true,
                first_visit_effect: true,
            }],
            2,
        );
        assert!(spec.validate().is_ok());
        assert_eq!(spec.n_gamma(0), 3);
        assert_eq!(spec.n_random_effects(0), 2);
        spec.eps_l = 0.0;
        assert!(spec.validate().is_err());
    }
}
