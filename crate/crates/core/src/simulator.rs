//! Synthetic cohorts drawn from a fully specified model.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CohortData, Diagnosis, Observation, Subject};
use crate::error::{Error, Result};
use crate::model::{AnchorMode, Layout, MarkerModel, MarkerParams, ModelSpec, ParameterVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimMarker {
    pub name: String,
    #[serde(default)]
    pub flip: bool,
    /// Scheduled visit times in years from entry.
    pub visits: Vec<f64>,
    /// Probability that a subject has this marker measured at all.
    #[serde(default = "one")]
    pub subsample: f64,
    #[serde(default)]
    pub random_slope: bool,
    #[serde(default)]
    pub first_visit_effect: bool,
    pub beta: [f64; 2],
    /// Covariate effects, then the first-visit effect when enabled.
    pub gamma: Vec<f64>,
    pub sigma_eps: f64,
    pub sd_u: Vec<f64>,
    #[serde(default)]
    pub cor_u: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CovariateDist {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimCovariate {
    pub name: String,
    pub dist: CovariateDist,
    #[serde(default)]
    pub center: f64,
}

/// Offset between the observed diagnosis time and the true onset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosisNoise {
    /// `T_diag = T* + U`, `U ~ Uniform(-eps_U, eps_L)`.
    #[default]
    Uniform,
    /// `U = +0.999 eps_L` or `-0.999 eps_U` with equal probability.
    Edge,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emission {
    /// Values on the normalized (Gaussian) scale.
    #[default]
    Normalized,
    /// `exp` of the normalized value (of its negation for flipped markers).
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_subjects: usize,
    pub seed: u64,
    pub markers: Vec<SimMarker>,
    pub covariates: Vec<SimCovariate>,
    pub mu_t_eps: f64,
    pub sigma_t_eps: f64,
    pub eps_l: f64,
    pub eps_u: f64,
    pub horizon: f64,
    /// Exponential dropout hazard per year.
    pub dropout_rate: f64,
    #[serde(default)]
    pub diagnosis_noise: DiagnosisNoise,
    /// Clinical-stage weights for onset more than 10, 5-10, 2-5 and under 2 years after entry.
    pub stage_weights: [f64; 4],
    #[serde(default)]
    pub emission: Emission,
}

/// 300 subjects and 4 markers: a two-visit imaging-like marker, a two-visit
/// fluid marker on a 20% subsample, and two annual cognitive scores with
/// random slopes and a practice effect.
pub fn default_scenario() -> SimConfig {
    let imaging = |name: &str, beta: [f64; 2], gamma: Vec<f64>, subsample: f64| SimMarker {
        name: name.into(),
        flip: false,
        visits: vec![0.0, 2.0],
        subsample,
        random_slope: false,
        first_visit_effect: false,
        beta,
        gamma,
        sigma_eps: 0.4,
        sd_u: vec![0.5],
        cor_u: None,
    };
    let annual: Vec<f64> = (0..6).map(f64::from).collect();
    SimConfig {
        n_subjects: 300,
        seed: 20240101,
        markers: vec![
            imaging("imaging", [1.0, 0.12], vec![0.02, 0.1], 1.0),
            imaging("csf", [1.5, 0.1], vec![0.01, -0.1], 0.2),
            SimMarker {
                name: "memory".into(),
                flip: true,
                visits: annual.clone(),
                subsample: 1.0,
                random_slope: true,
                first_visit_effect: true,
                beta: [0.8, 0.15],
                gamma: vec![0.02, 0.2, -0.2],
                sigma_eps: 0.35,
                sd_u: vec![0.5, 0.12],
                cor_u: Some(0.3),
            },
            SimMarker {
                name: "fluency".into(),
                flip: true,
                visits: annual,
                subsample: 1.0,
                random_slope: true,
                first_visit_effect: true,
                beta: [0.6, 0.1],
                gamma: vec![0.015, -0.1, -0.15],
                sigma_eps: 0.4,
                sd_u: vec![0.6, 0.1],
                cor_u: Some(0.2),
            },
        ],
        covariates: vec![
            SimCovariate {
                name: "age".into(),
                dist: CovariateDist::Normal {
                    mean: 70.0,
                    sd: 8.7,
                },
                center: 70.0,
            },
            SimCovariate {
                name: "female".into(),
                dist: CovariateDist::Bernoulli { p: 0.6 },
                center: 0.0,
            },
        ],
        mu_t_eps: 2.4,
        sigma_t_eps: 0.5,
        eps_l: 1.5,
        eps_u: 1.5,
        horizon: 5.0,
        dropout_rate: 0.05,
        diagnosis_noise: DiagnosisNoise::Uniform,
        stage_weights: [2.80, 2.74, 6.81, 7.57],
        emission: Emission::Normalized,
    }
}

/// Two random-intercept markers without covariates whose reference mean
/// severity reaches 0.5 at `s = -10` ("early") and `s = -5` ("late").
pub fn ordering_scenario() -> SimConfig {
    let marker = |name: &str, b0: f64| SimMarker {
        name: name.into(),
        flip: false,
        visits: vec![0.0, 1.0, 2.0, 3.0, 4.0],
        subsample: 1.0,
        random_slope: false,
        first_visit_effect: false,
        beta: [b0, 0.1],
        gamma: vec![],
        sigma_eps: 0.3,
        sd_u: vec![0.3],
        cor_u: None,
    };
    SimConfig {
        n_subjects: 200,
        markers: vec![marker("early", 1.0), marker("late", 0.5)],
        covariates: vec![],
        ..default_scenario()
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Simulation(m));
        if self.n_subjects == 0 || self.markers.is_empty() {
            return bad("need at least one subject and one marker".into());
        }
        if !(self.eps_l > 0.0 && self.eps_u > 0.0) {
            return bad("eps_l and eps_u must be positive".into());
        }
        if !(self.sigma_t_eps > 0.0) || !self.mu_t_eps.is_finite() {
            return bad("invalid latent-time distribution".into());
        }
        if !(self.horizon > 0.0) || !(self.dropout_rate >= 0.0) {
            return bad("horizon must be positive and dropout_rate non-negative".into());
        }
        if self.stage_weights.iter().any(|w| !(*w > 0.0)) {
            return bad("stage weights must be positive".into());
        }
        let p = self.covariates.len();
        for m in &self.markers {
            let name = &m.name;
            if m.visits.is_empty() || m.visits.iter().any(|t| !(*t >= 0.0)) {
                return bad(format!("marker {name}: visit times must be non-negative"));
            }
            if m.visits.iter().cloned().fold(f64::INFINITY, f64::min) > self.horizon {
                return bad(format!(
                    "marker {name}: horizon {} precedes the first visit",
                    self.horizon
                ));
            }
            if !(m.subsample > 0.0 && m.subsample <= 1.0) {
                return bad(format!("marker {name}: subsample must be in (0, 1]"));
            }
            if m.beta.iter().any(|b| !(*b >= 0.0)) {
                return bad(format!("marker {name}: beta must be non-negative"));
            }
            if m.gamma.len() != p + usize::from(m.first_visit_effect) {
                return bad(format!(
                    "marker {name}: expected {} gamma entries",
                    p + usize::from(m.first_visit_effect)
                ));
            }
            if !(m.sigma_eps >= 0.0) {
                return bad(format!("marker {name}: sigma_eps must be non-negative"));
            }
            let n_re = 1 + usize::from(m.random_slope);
            if m.sd_u.len() != n_re || m.sd_u.iter().any(|s| !(*s >= 0.0)) {
                return bad(format!(
                    "marker {name}: expected {n_re} non-negative sd_u entries"
                ));
            }
            if m.random_slope != m.cor_u.is_some() {
                return bad(format!(
                    "marker {name}: cor_u is required exactly when random_slope is set"
                ));
            }
            if let Some(r) = m.cor_u {
                if !(r > -1.0 && r < 1.0) {
                    return bad(format!("marker {name}: cor_u must lie in (-1, 1)"));
                }
            }
        }
        Ok(())
    }

    pub fn marker_models(&self) -> Vec<MarkerModel> {
        self.markers
            .iter()
            .map(|m| MarkerModel {
                name: m.name.clone(),
                random_slope: m.random_slope,
                first_visit_effect: m.first_visit_effect,
            })
            .collect()
    }

    /// Anchored model matching the generator's structure.
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            eps_l: self.eps_l,
            eps_u: self.eps_u,
            mode: AnchorMode::Anchored,
            ..ModelSpec::new(self.marker_models(), self.covariates.len())
        }
    }

    fn stage_weight(&self, t_star: f64) -> f64 {
        match t_star {
            t if t > 10.0 => self.stage_weights[0],
            t if t > 5.0 => self.stage_weights[1],
            t if t > 2.0 => self.stage_weights[2],
            _ => self.stage_weights[3],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulated {
    pub cohort: CohortData,
    pub truth: ParameterVector,
}

fn normal(mean: f64, sd: f64) -> Result<Normal<f64>> {
    Normal::new(mean, sd).map_err(|e| Error::Simulation(e.to_string()))
}

pub fn simulate(config: &SimConfig) -> Result<Simulated> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p = config.covariates.len();
    let log_onset = normal(config.mu_t_eps, config.sigma_t_eps)?;
    let dropout = (config.dropout_rate > 0.0)
        .then(|| Exp::new(config.dropout_rate))
        .transpose()
        .map_err(|e| Error::Simulation(e.to_string()))?;

    let mut subjects = Vec::with_capacity(config.n_subjects);
    let mut observations = Vec::new();
    let mut t_star = Vec::with_capacity(config.n_subjects);
    let mut u_all = Vec::with_capacity(config.n_subjects);

    for i in 0..config.n_subjects {
        let id = format!("S{:04}", i + 1);
        let mut raw_x = Vec::with_capacity(p);
        for c in &config.covariates {
            raw_x.push(match c.dist {
                CovariateDist::Normal { mean, sd } => normal(mean, sd)?.sample(&mut rng),
                CovariateDist::Bernoulli { p } => {
                    let b = Bernoulli::new(p).map_err(|e| Error::Simulation(e.to_string()))?;
                    f64::from(u8::from(b.sample(&mut rng)))
                }
            });
        }
        let x: Vec<f64> = raw_x
            .iter()
            .zip(&config.covariates)
            .map(|(v, c)| v - c.center)
            .collect();
        let ts = log_onset.sample(&mut rng).exp() - config.eps_l;

        let u: Vec<[f64; 2]> = config
            .markers
            .iter()
            .map(|m| {
                let z0: f64 = StandardNormal.sample(&mut rng);
                let z1: f64 = StandardNormal.sample(&mut rng);
                let u0 = m.sd_u[0] * z0;
                match m.cor_u {
                    Some(r) => [u0, m.sd_u[1] * (r * z0 + (1.0 - r * r).sqrt() * z1)],
                    None => [u0, 0.0],
                }
            })
            .collect();

        let leave = dropout.map_or(f64::INFINITY, |d| d.sample(&mut rng));
        let end = leave.min(config.horizon);
        let shift = match config.diagnosis_noise {
            DiagnosisNoise::Uniform => rng.random_range(-config.eps_u..config.eps_l),
            DiagnosisNoise::Edge => {
                if rng.random_bool(0.5) {
                    0.999 * config.eps_l
                } else {
                    -0.999 * config.eps_u
                }
            }
        };
        // clamping to follow-up only moves t_diag towards T*
        let diagnosis = if ts <= end {
            Diagnosis::Diagnosed {
                t_diag: (ts + shift).clamp(0.0, end),
            }
        } else {
            Diagnosis::CensoredFree { t_last: end }
        };

        for (k, m) in config.markers.iter().enumerate() {
            let measured = m.subsample >= 1.0 || rng.random_bool(m.subsample);
            let first = m.visits.iter().cloned().fold(f64::INFINITY, f64::min);
            for &t in &m.visits {
                let e: f64 = StandardNormal.sample(&mut rng);
                if !measured || t > end {
                    continue;
                }
                let s = t - ts;
                let first_visit = t == first;
                let mut y = m.beta[0] + m.beta[1] * s + u[k][0] + u[k][1] * s + m.sigma_eps * e;
                y += x.iter().zip(&m.gamma).map(|(a, b)| a * b).sum::<f64>();
                if m.first_visit_effect && first_visit {
                    y += m.gamma[p];
                }
                let value = match config.emission {
                    Emission::Normalized => y,
                    Emission::Raw if m.flip => (-y).exp(),
                    Emission::Raw => y.exp(),
                };
                observations.push(Observation {
                    subject_id: id.clone(),
                    marker: k,
                    t,
                    value,
                    is_first_visit: first_visit,
                });
            }
        }

        subjects.push(Subject {
            id,
            covariates: raw_x,
            diagnosis,
            weight: config.stage_weight(ts),
        });
        t_star.push(ts);
        u_all.push(u);
    }

    let (cohort, dropped) = CohortData::new(
        subjects,
        observations,
        config.markers.iter().map(|m| m.name.clone()).collect(),
        config.markers.iter().map(|m| m.flip).collect(),
        config.covariates.iter().map(|c| c.name.clone()).collect(),
        config.covariates.iter().map(|c| c.center).collect(),
    )?;
    let (t_star, u_all) = if dropped > 0 {
        let kept: std::collections::HashSet<&str> =
            cohort.subjects.iter().map(|s| s.id.as_str()).collect();
        let keep: Vec<bool> = (0..config.n_subjects)
            .map(|i| kept.contains(format!("S{:04}", i + 1).as_str()))
            .collect();
        (
            t_star
                .into_iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(t, _)| t)
                .collect(),
            u_all
                .into_iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(u, _)| u)
                .collect(),
        )
    } else {
        (t_star, u_all)
    };
    let truth = ParameterVector {
        markers: config
            .markers
            .iter()
            .map(|m| MarkerParams {
                beta: m.beta,
                gamma: m.gamma.clone(),
                sigma_eps: m.sigma_eps,
                sd_u: m.sd_u.clone(),
                cor_u: m.cor_u,
            })
            .collect(),
        mu_t_eps: config.mu_t_eps,
        sigma_t_eps: config.sigma_t_eps,
        t_star,
        u: u_all,
    };
    Ok(Simulated { cohort, truth })
}

/// Writes `param,value` for every model parameter.
pub fn write_truth_csv(path: &Path, layout: &Layout, truth: &ParameterVector) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["param", "value"])?;
    for (name, v) in layout.names().iter().zip(truth.to_flat(layout)) {
        w.write_record([name.clone(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    let file = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.records()
        .enumerate()
        .map(|(n, rec)| {
            let rec = rec?;
            let v = rec[1].parse::<f64>().map_err(|_| Error::Parse {
                file: file.clone(),
                row: n + 2,
                msg: format!("bad value '{}'", &rec[1]),
            })?;
            Ok((rec[0].to_string(), v))
        })
        .collect()
}
