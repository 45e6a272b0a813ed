//! Severity-scale mean trajectories, threshold crossings and residual RMSE.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagnostics::quantile;
use crate::error::{Error, Result};
use crate::model::{marker_mean, Layout, MarkerSlots, ModelData, ParameterVector};
use crate::normal;
use crate::par::{map_indexed, Execution};
use crate::sampler::PosteriorDraws;

/// Latent-time grid `start, start + step, ..., end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            start: -30.0,
            end: 5.0,
            step: 0.25,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0
            && self.end > self.start
            && self.start.is_finite()
            && self.end.is_finite())
        {
            return Err(Error::Prediction(format!("invalid grid {self:?}")));
        }
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|j| self.start + j as f64 * self.step).collect())
    }
}

/// One marker's parameters from one posterior draw, for a fixed covariate profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkerDraw {
    /// `beta_0 + x . gamma`
    pub intercept: f64,
    pub slope: f64,
    pub sd0: f64,
    pub sd1: f64,
    pub rho: f64,
    pub sigma: f64,
}

impl MarkerDraw {
    /// Reads marker `slots` from a constrained draw row; `x` is the centred profile
    /// (the first-visit indicator is off).
    pub fn from_row(row: &[f64], slots: &MarkerSlots, x: &[f64]) -> Self {
        let xg: f64 = x
            .iter()
            .zip(&row[slots.gamma..slots.gamma + slots.n_gamma])
            .map(|(a, b)| a * b)
            .sum();
        MarkerDraw {
            intercept: row[slots.beta] + xg,
            slope: row[slots.beta + 1],
            sd0: row[slots.sd_u],
            sd1: if slots.n_re == 2 {
                row[slots.sd_u + 1]
            } else {
                0.0
            },
            rho: slots.cor_u.map_or(0.0, |c| row[c]),
            sigma: row[slots.sigma_eps],
        }
    }

    pub fn mean(&self, s: f64) -> f64 {
        self.intercept + self.slope * s
    }

    /// Marginal variance `F(s)' B F(s) + sigma^2`.
    pub fn variance(&self, s: f64) -> f64 {
        self.sd0 * self.sd0
            + 2.0 * s * self.rho * self.sd0 * self.sd1
            + s * s * self.sd1 * self.sd1
            + self.sigma * self.sigma
    }
}

/// `E[Phi(Y)]` for `Y ~ N(mean, var)`, averaged over the supplied standard normals.
pub fn mean_severity(mean: f64, var: f64, normals: &[f64]) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Prediction(format!(
            "non-positive predictive variance {var}"
        )));
    }
    if normals.is_empty() {
        return Err(Error::Prediction(
            "need at least one Monte Carlo draw".into(),
        ));
    }
    let sd = var.sqrt();
    Ok(normals
        .iter()
        .map(|z| normal::cdf(mean + sd * z))
        .sum::<f64>()
        / normals.len() as f64)
}

/// Closed form of [`mean_severity`] as the number of draws grows.
pub fn mean_severity_exact(mean: f64, var: f64) -> f64 {
    normal::cdf(mean / (1.0 + var).sqrt())
}

/// `m` standard normals; with `antithetic`, the second half mirrors the first.
pub fn standard_normals(rng: &mut ChaCha8Rng, m: usize, antithetic: bool) -> Vec<f64> {
    if !antithetic {
        return (0..m).map(|_| StandardNormal.sample(rng)).collect();
    }
    let half = m.div_ceil(2);
    let base: Vec<f64> = (0..half).map(|_| StandardNormal.sample(rng)).collect();
    let mut out = base.clone();
    out.extend(base.iter().take(m - half).map(|z| -z));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictionConfig {
    pub grid: GridSpec,
    /// Monte Carlo draws per posterior draw.
    pub mc_draws: usize,
    pub antithetic: bool,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        PredictionConfig {
            grid: GridSpec::default(),
            mc_draws: 1000,
            antithetic: true,
            threshold: 0.5,
            seed: 1,
        }
    }
}

/// Mean-severity curves of one marker for one covariate profile.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub marker: usize,
    pub s: Vec<f64>,
    /// `per_draw[d][j]` is the mean severity of posterior draw `d` at `s[j]`.
    pub per_draw: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
}

/// Posterior mean-severity trajectory of marker `k` for centred profile `x`.
///
/// Each posterior draw `d` uses its own stream of standard normals, shared by
/// every grid point, so curves are smooth in `s`.
pub fn trajectory(
    draws: &PosteriorDraws,
    layout: &Layout,
    x: &[f64],
    k: usize,
    config: &PredictionConfig,
    exec: Execution,
) -> Result<Trajectory> {
    if draws.n_draws() == 0 {
        return Err(Error::Prediction("no posterior draws".into()));
    }
    let slots = layout
        .markers
        .get(k)
        .ok_or_else(|| Error::Prediction(format!("marker {} not in the model", k + 1)))?;
    let s = config.grid.points()?;
    let per_draw = map_indexed(exec, draws.n_draws(), |d| {
        let md = MarkerDraw::from_row(draws.row(d), slots, x);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(d as u64);
        let z = standard_normals(&mut rng, config.mc_draws, config.antithetic);
        s.iter()
            .map(|&sj| mean_severity(md.mean(sj), md.variance(sj), &z))
            .collect::<Result<Vec<f64>>>()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut mean = Vec::with_capacity(s.len());
    let mut lo95 = Vec::with_capacity(s.len());
    let mut hi95 = Vec::with_capacity(s.len());
    let mut col = vec![0.0; per_draw.len()];
    for j in 0..s.len() {
        for (c, curve) in col.iter_mut().zip(&per_draw) {
            *c = curve[j];
        }
        mean.push(col.iter().sum::<f64>() / col.len() as f64);
        col.sort_by(f64::total_cmp);
        lo95.push(quantile(&col, 0.025));
        hi95.push(quantile(&col, 0.975));
    }
    Ok(Trajectory {
        marker: k,
        s,
        per_draw,
        mean,
        lo95,
        hi95,
    })
}

/// First upward crossing of `threshold` by linear interpolation on the grid.
/// A curve starting exactly at the threshold crosses at the first grid point.
pub fn crossing_time(s: &[f64], values: &[f64], threshold: f64) -> Option<f64> {
    if values.first() == Some(&threshold) {
        return Some(s[0]);
    }
    (1..values.len()).find_map(|j| {
        let (a, b) = (values[j - 1], values[j]);
        (a < threshold && threshold <= b)
            .then(|| s[j - 1] + (threshold - a) / (b - a) * (s[j] - s[j - 1]))
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossingSummary {
    pub marker: usize,
    /// Per posterior draw; `None` when the curve never reaches the threshold.
    pub times: Vec<Option<f64>>,
    pub mean_s: f64,
    pub lo95: f64,
    pub hi95: f64,
    /// One-based rank by `mean_s` among the summarized markers.
    pub rank: usize,
    pub frac_no_cross: f64,
}

/// Crossing-time posterior of each trajectory, ranked by posterior mean.
pub fn crossing_times(trajectories: &[Trajectory], threshold: f64) -> Result<Vec<CrossingSummary>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Prediction(format!(
            "threshold {threshold} outside (0, 1)"
        )));
    }
    let mut out: Vec<CrossingSummary> = trajectories
        .iter()
        .map(|tr| {
            let times: Vec<Option<f64>> = tr
                .per_draw
                .iter()
                .map(|curve| crossing_time(&tr.s, curve, threshold))
                .collect();
            let mut hit: Vec<f64> = times.iter().flatten().copied().collect();
            let frac_no_cross = 1.0 - hit.len() as f64 / times.len().max(1) as f64;
            hit.sort_by(f64::total_cmp);
            let mean_s = if hit.is_empty() {
                f64::NAN
            } else {
                hit.iter().sum::<f64>() / hit.len() as f64
            };
            CrossingSummary {
                marker: tr.marker,
                times,
                mean_s,
                lo95: quantile(&hit, 0.025),
                hi95: quantile(&hit, 0.975),
                rank: 0,
                frac_no_cross,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..out.len()).collect();
    // markers that never cross go last
    order.sort_by(|&a, &b| {
        let (x, y) = (out[a].mean_s, out[b].mean_s);
        match (x.is_nan(), y.is_nan()) {
            (false, false) => x.total_cmp(&y),
            (a_nan, b_nan) => a_nan.cmp(&b_nan),
        }
    });
    for (r, i) in order.into_iter().enumerate() {
        out[i].rank = r + 1;
    }
    Ok(out)
}

/// Fraction of draws in which `a` crosses strictly before `b`; draws where
/// `a` never crosses count against it.
pub fn order_agreement(a: &CrossingSummary, b: &CrossingSummary) -> f64 {
    let n = a.times.len().min(b.times.len());
    let hits = (0..n)
        .filter(|&d| match (a.times[d], b.times[d]) {
            (Some(x), Some(y)) => x < y,
            (Some(_), None) => true,
            _ => false,
        })
        .count();
    hits as f64 / n.max(1) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmseTable {
    pub per_marker: Vec<f64>,
    pub overall: f64,
    pub counts: Vec<usize>,
}

/// Root-mean-square percentile residual `P_ijk - Phi(fitted mean)`, with every
/// parameter (including `T*` and the random effects) at its posterior mean.
pub fn rmse(data: &ModelData, draws: &PosteriorDraws, layout: &Layout) -> Result<RmseTable> {
    if draws.n_draws() == 0 {
        return Err(Error::Prediction("no posterior draws".into()));
    }
    if draws.n_params() != layout.dim() {
        return Err(Error::Prediction(format!(
            "draws have {} parameters, model expects {}",
            draws.n_params(),
            layout.dim()
        )));
    }
    let theta = ParameterVector::from_flat(&draws.posterior_mean(), layout);
    Ok(rmse_at(data, &theta))
}

/// Residual RMSE at a fixed parameter value.
pub fn rmse_at(data: &ModelData, theta: &ParameterVector) -> RmseTable {
    let k = data.n_markers;
    let mut ss = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (i, subj) in data.subjects.iter().enumerate() {
        for o in &subj.obs {
            let m = &theta.markers[o.marker];
            let s = o.t - theta.t_star[i];
            let fitted = normal::cdf(marker_mean(
                m,
                &subj.x,
                o.first_visit,
                s,
                theta.u[i][o.marker],
            ));
            ss[o.marker] += (o.percentile - fitted).powi(2);
            counts[o.marker] += 1;
        }
    }
    let per_marker = ss
        .iter()
        .zip(&counts)
        .map(|(s, &n)| {
            if n > 0 {
                (s / n as f64).sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    let total: usize = counts.iter().sum();
    RmseTable {
        per_marker,
        overall: (ss.iter().sum::<f64>() / total.max(1) as f64).sqrt(),
        counts,
    }
}

pub fn write_trajectories_csv(
    path: &Path,
    names: &[String],
    trajectories: &[Trajectory],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["marker", "s", "mean", "lo95", "hi95"])?;
    for tr in trajectories {
        for j in 0..tr.s.len() {
            w.write_record([
                names[tr.marker].clone(),
                tr.s[j].to_string(),
                tr.mean[j].to_string(),
                tr.lo95[j].to_string(),
                tr.hi95[j].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_crossings_csv(
    path: &Path,
    names: &[String],
    crossings: &[CrossingSummary],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["marker", "mean_s", "lo95", "hi95", "rank", "frac_no_cross"])?;
    for c in crossings {
        w.write_record([
            names[c.marker].clone(),
            c.mean_s.to_string(),
            c.lo95.to_string(),
            c.hi95.to_string(),
            c.rank.to_string(),
            c.frac_no_cross.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_rmse_csv(path: &Path, names: &[String], table: &RmseTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["marker", "rmse"])?;
    for (n, r) in names.iter().zip(&table.per_marker) {
        w.write_record([n.clone(), r.to_string()])?;
    }
    w.write_record(["__overall__".to_string(), table.overall.to_string()])?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
