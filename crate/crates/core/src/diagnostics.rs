//! Convergence diagnostics, posterior summaries and the fit gate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::sampler::PosteriorDraws;

/// Splits each chain in half (dropping the middle draw of odd-length chains),
/// truncating all chains to the shortest length.
fn split_chains(chains: &[Vec<f64>]) -> Result<Vec<&[f64]>> {
    if chains.is_empty() {
        return Err(Error::Diagnostics("no chains".into()));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::Diagnostics(format!(
            "need at least 4 draws per chain, got {n}"
        )));
    }
    let half = n / 2;
    Ok(chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..n]])
        .collect())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

fn is_degenerate(parts: &[&[f64]]) -> bool {
    parts.iter().all(|c| {
        let first = c[0];
        c.iter().all(|v| *v == first)
    })
}

/// Split potential scale reduction factor; `+inf` when the within-chain variance is zero.
pub fn compute_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let parts = split_chains(chains)?;
    let n = parts[0].len() as f64;
    let means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let w = parts.iter().map(|c| sample_var(c)).sum::<f64>() / parts.len() as f64;
    let b = n * sample_var(&means);
    if !(w > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok((((n - 1.0) / n * w + b / n) / w).sqrt())
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence,
/// computed on split chains and capped at the number of draws.
/// `NaN` for a degenerate parameter.
pub fn compute_ess(chains: &[Vec<f64>]) -> Result<f64> {
    let parts = split_chains(chains)?;
    if is_degenerate(&parts) {
        return Ok(f64::NAN);
    }
    let m = parts.len();
    let n = parts[0].len();
    let nf = n as f64;
    let centred: Vec<Vec<f64>> = parts
        .iter()
        .map(|c| {
            let mu = mean(c);
            c.iter().map(|v| v - mu).collect()
        })
        .collect();
    let acov = |t: usize| -> f64 {
        centred
            .iter()
            .map(|c| {
                c[..n - t]
                    .iter()
                    .zip(&c[t..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / nf
            })
            .sum::<f64>()
            / m as f64
    };
    let chain_means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let mean_var = acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_var(&chain_means);
    }
    if !(var_plus > 0.0) {
        return Ok(f64::NAN);
    }
    let rho_at = |t: usize| 1.0 - (mean_var - acov(t)) / var_plus;

    let mut rho = vec![0.0; n + 2];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = rho_at(1);
    rho[1] = rho_odd;
    let mut t = 1;
    while t + 4 < n && rho_even + rho_odd > 0.0 {
        rho_even = rho_at(t + 1);
        rho_odd = rho_at(t + 2);
        if rho_even + rho_odd >= 0.0 {
            rho[t + 1] = rho_even;
            rho[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t;
    if rho_even > 0.0 {
        rho[max_t + 1] = rho_even;
    }
    let mut t = 1;
    while t + 4 <= max_t {
        let prev = rho[t - 1] + rho[t];
        if rho[t + 1] + rho[t + 2] > prev {
            rho[t + 1] = prev / 2.0;
            rho[t + 2] = prev / 2.0;
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau =
        (-1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t + 1]).max(1.0 / total.log10());
    Ok((total / tau).min(total))
}

/// Type-7 (linear interpolation) sample quantile.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub rhat: f64,
    pub ess: f64,
    pub ess_ratio: f64,
    /// No variation within any half-chain.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsReport {
    pub params: Vec<ParamSummary>,
    pub n_draws: usize,
    pub n_chains: usize,
    pub divergences: Vec<usize>,
}

pub fn summarize_param(name: &str, chains: &[Vec<f64>], n_draws: usize) -> Result<ParamSummary> {
    let mut all: Vec<f64> = chains.iter().flatten().copied().collect();
    let m = mean(&all);
    let sd = sample_var(&all).max(0.0).sqrt();
    all.sort_by(f64::total_cmp);
    let rhat = compute_rhat(chains)?;
    let ess = compute_ess(chains)?;
    let degenerate = ess.is_nan() || rhat.is_infinite();
    Ok(ParamSummary {
        name: name.to_string(),
        mean: m,
        sd,
        q025: quantile(&all, 0.025),
        q975: quantile(&all, 0.975),
        rhat,
        ess,
        ess_ratio: ess / n_draws as f64,
        degenerate,
    })
}

pub fn diagnose(draws: &PosteriorDraws, exec: Execution) -> Result<DiagnosticsReport> {
    let params = map_indexed(exec, draws.n_params(), |j| {
        summarize_param(&draws.names[j], &draws.by_chain(j), draws.n_draws())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticsReport {
        params,
        n_draws: draws.n_draws(),
        n_chains: draws.n_chains,
        divergences: draws.stats.iter().map(|s| s.divergences).collect(),
    })
}

impl DiagnosticsReport {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Writes `param,mean,sd,q2.5,q97.5,rhat,ess,ess_ratio`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "param",
            "mean",
            "sd",
            "q2.5",
            "q97.5",
            "rhat",
            "ess",
            "ess_ratio",
        ])?;
        for p in &self.params {
            w.write_record([
                p.name.clone(),
                p.mean.to_string(),
                p.sd.to_string(),
                p.q025.to_string(),
                p.q975.to_string(),
                p.rhat.to_string(),
                p.ess.to_string(),
                p.ess_ratio.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateThresholds {
    pub rhat_max: f64,
    pub ess_ratio_min: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        GateThresholds {
            rhat_max: 1.05,
            ess_ratio_min: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateFailure {
    pub param: String,
    pub rhat: f64,
    pub ess_ratio: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateResult {
    pub pass: bool,
    pub failures: Vec<GateFailure>,
}

/// Passes iff every parameter has `rhat < rhat_max` and `ess_ratio >= ess_ratio_min`.
pub fn gate_fit(report: &DiagnosticsReport, thresholds: &GateThresholds) -> GateResult {
    let failures: Vec<GateFailure> = report
        .params
        .iter()
        .filter_map(|p| {
            let reason = if p.degenerate {
                "degenerate (no within-chain variation)".to_string()
            } else if !(p.rhat < thresholds.rhat_max) {
                format!("rhat {:.4} >= {}", p.rhat, thresholds.rhat_max)
            } else if !(p.ess_ratio >= thresholds.ess_ratio_min) {
                format!("ESS/D {:.4} < {}", p.ess_ratio, thresholds.ess_ratio_min)
            } else {
                return None;
            };
            Some(GateFailure {
                param: p.name.clone(),
                rhat: p.rhat,
                ess_ratio: p.ess_ratio,
                reason,
            })
        })
        .collect();
    GateResult {
        pass: failures.is_empty(),
        failures,
    }
}
