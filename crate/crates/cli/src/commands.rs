use std::fs;
use std::path::{Path, PathBuf};

use dpam::data::{load_cohort, write_cohort, CohortData, Schema};
use dpam::diagnostics::{diagnose, gate_fit, DiagnosticsReport, GateResult};
use dpam::model::{DpamPosterior, MarkerModel, ModelData, ModelSpec, TimeBasis};
use dpam::prediction::{
    crossing_times, rmse, trajectory, write_crossings_csv, write_rmse_csv, write_trajectories_csv,
    RmseTable,
};
use dpam::sampler::{initialize_chains, run_nuts, Init, PosteriorDraws};
use dpam::simulator::{simulate, write_truth_csv, Emission};
use dpam::target::LogDensity;
use dpam::transform::{as_normalized, export_ecdf_csv, fit_transform, normalize_cohort};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Scale};
use crate::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const PREDICT_CONFIG: &str = "predict_config.toml";
pub const DIAGNOSE_CONFIG: &str = "diagnose_config.toml";
pub const COMPARE_CONFIG: &str = "compare_config.toml";
pub const DRAWS: &str = "draws.csv";
pub const REPORT: &str = "report.toml";

/// Largest tolerated relative error of the gradient self-check.
const GRADIENT_TOLERANCE: f64 = 1e-4;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))
}

/// Writes the resolved configuration as `dir/name` and returns its hash.
fn write_resolved(cfg: &RunConfig, dir: &Path, name: &str) -> Result<String, CliError> {
    let text = cfg.to_toml()?;
    let path = dir.join(name);
    fs::write(&path, &text)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    let hash = sha256_hex(text.as_bytes());
    println!("config {} sha256 {hash}", path.display());
    Ok(hash)
}

fn write_toml<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = toml::to_string(value)
        .map_err(|e| CliError::usage(format!("cannot render {}: {e}", path.display())))?;
    fs::write(path, text)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

/// Cohort and model assembled from a run configuration.
pub struct Prepared {
    pub cohort: CohortData,
    pub data: ModelData,
    pub spec: ModelSpec,
    pub transform: Option<dpam::transform::TransformSpec>,
}

impl Prepared {
    pub fn posterior(&self) -> Result<DpamPosterior, CliError> {
        Ok(DpamPosterior::new(self.spec.clone(), self.data.clone())?)
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let (cohort, scale, structure) = match (&cfg.data, &cfg.simulation) {
        (Some(d), _) => {
            let (cohort, report) =
                load_cohort(&d.observations, &d.subjects, &d.schema, &d.markers)?;
            if report.dropped_subjects > 0 || report.skipped_missing > 0 {
                log::info!(
                    "dropped {} subjects without observations, skipped {} empty values",
                    report.dropped_subjects,
                    report.skipped_missing
                );
            }
            (cohort, d.scale, Vec::new())
        }
        (None, Some(sim)) => {
            let out = simulate(sim)?;
            let scale = match sim.emission {
                Emission::Normalized => Scale::Normalized,
                Emission::Raw => Scale::Raw,
            };
            (out.cohort, scale, sim.marker_models())
        }
        (None, None) => {
            return Err(CliError::usage(
                "config has neither [data] nor [simulation]",
            ))
        }
    };
    let markers = marker_models(&cohort, &cfg.model.markers, &structure)?;
    let (normalized, transform) = match scale {
        Scale::Normalized => (as_normalized(&cohort), None),
        Scale::Raw => {
            let t = fit_transform(&cohort)?;
            (normalize_cohort(&cohort, &t)?, Some(t))
        }
    };
    let data = ModelData::build(&cohort, &normalized)?;
    let spec = ModelSpec {
        markers,
        n_covariates: cohort.n_covariates(),
        eps_l: cfg.model.eps_l,
        eps_u: cfg.model.eps_u,
        mode: cfg.model.mode,
        priors: cfg.model.priors.clone(),
        time_basis: TimeBasis::Linear,
    };
    spec.validate()?;
    Ok(Prepared {
        cohort,
        data,
        spec,
        transform,
    })
}

fn marker_models(
    cohort: &CohortData,
    declared: &[MarkerModel],
    fallback: &[MarkerModel],
) -> Result<Vec<MarkerModel>, CliError> {
    if let Some(m) = declared
        .iter()
        .find(|m| !cohort.marker_names.contains(&m.name))
    {
        return Err(CliError::usage(format!(
            "model marker '{}' is not in the data",
            m.name
        )));
    }
    let source = if declared.is_empty() {
        fallback
    } else {
        declared
    };
    Ok(cohort
        .marker_names
        .iter()
        .map(|name| {
            source
                .iter()
                .find(|m| &m.name == name)
                .cloned()
                .unwrap_or_else(|| MarkerModel {
                    name: name.clone(),
                    random_slope: false,
                    first_visit_effect: false,
                })
        })
        .collect())
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let sim = cfg
        .simulation
        .as_ref()
        .ok_or_else(|| CliError::usage("simulate needs a [simulation] section"))?;
    let out = simulate(sim)?;
    let dir = &cfg.out_dir;
    create_dir(dir)?;
    write_resolved(cfg, dir, RESOLVED_CONFIG)?;
    let schema = Schema {
        covariates: out.cohort.covariate_names.clone(),
        ..Schema::default()
    };
    write_cohort(
        &out.cohort,
        &dir.join("observations.csv"),
        &dir.join("subjects.csv"),
        &schema,
    )?;
    let layout = dpam::model::Layout::new(&sim.model_spec(), out.truth.t_star.len());
    write_truth_csv(&dir.join("truth.csv"), &layout, &out.truth)?;
    println!(
        "simulated {} subjects, {} observations into {}",
        out.cohort.subjects.len(),
        out.cohort.observations.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChainReport {
    pub step_size: f64,
    pub mean_accept_stat: f64,
    pub mean_tree_depth: f64,
    pub divergences: usize,
    pub leapfrog_steps: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GateLine {
    pub param: String,
    pub reason: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub config_hash: String,
    pub dataset_hash: String,
    pub draws_hash: String,
    pub n_subjects: usize,
    pub n_observations: usize,
    pub n_params: usize,
    pub gradient_check_error: f64,
    pub max_rhat: f64,
    pub min_ess_ratio: f64,
    pub gate_pass: bool,
    pub chains: Vec<ChainReport>,
    pub gate_failures: Vec<GateLine>,
}

/// Largest relative deviation between the analytic gradient and five-point
/// central differences at `z`.
///
/// Log-densities far from the mode can reach 1e7 in magnitude, so the step is
/// large enough to keep cancellation error well below the tolerance.
pub fn gradient_check<M: LogDensity>(model: &M, z: &[f64]) -> Result<f64, CliError> {
    let d = model.dim();
    let mut g = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let fail = |e| CliError::usage(format!("gradient self-check: log-density failed ({e:?})"));
    model.logp_grad(z, &mut g).map_err(fail)?;
    let mut zp = z.to_vec();
    let mut worst: f64 = 0.0;
    for j in 0..d {
        let h = 3e-3 * z[j].abs().max(1.0);
        let mut f = [0.0; 4];
        for (fk, step) in f.iter_mut().zip([2.0, 1.0, -1.0, -2.0]) {
            zp[j] = z[j] + step * h;
            *fk = model.logp_grad(&zp, &mut scratch).map_err(fail)?;
        }
        zp[j] = z[j];
        let fd = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h);
        worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1.0));
    }
    Ok(worst)
}

fn summarize(report: &DiagnosticsReport) -> (f64, f64) {
    let max_rhat = report.params.iter().map(|p| p.rhat).fold(0.0, f64::max);
    let min_ess = report
        .params
        .iter()
        .map(|p| p.ess_ratio)
        .fold(f64::INFINITY, f64::min);
    (max_rhat, min_ess)
}

fn print_gate(gate: &GateResult) {
    if gate.pass {
        println!("diagnostics gate: pass");
    } else {
        println!(
            "diagnostics gate: FAIL ({} parameters)",
            gate.failures.len()
        );
        for f in gate.failures.iter().take(20) {
            println!("  {}: {}", f.param, f.reason);
        }
    }
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = &cfg.out_dir;
    create_dir(dir)?;
    let config_hash = write_resolved(cfg, dir, RESOLVED_CONFIG)?;
    let prep = prepare(cfg)?;
    if let Some(t) = &prep.transform {
        export_ecdf_csv(t, &dir.join("ecdf.csv"))?;
    }
    let post = prep.posterior()?;
    let starts = initialize_chains(&post, &cfg.sampler)?;
    let grad_err = gradient_check(&post, &starts[0])?;
    if !(grad_err < GRADIENT_TOLERANCE) {
        return Err(CliError::usage(format!(
            "gradient self-check failed: relative error {grad_err:.3e}"
        )));
    }
    log::info!(
        "fitting {} parameters, gradient check error {grad_err:.2e}",
        post.dim()
    );
    let draws = run_nuts(&post, &cfg.sampler, &Init::Points(starts))?;
    let draws_path = dir.join(DRAWS);
    draws.write_csv(&draws_path)?;
    let report = diagnose(&draws, cfg.sampler.exec)?;
    report.write_csv(&dir.join("diagnostics.csv"))?;
    let gate = gate_fit(&report, &cfg.gate);
    let (max_rhat, min_ess_ratio) = summarize(&report);
    let draws_bytes = fs::read(&draws_path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", draws_path.display())))?;
    let fit = FitReport {
        config_hash,
        dataset_hash: prep.data.dataset_hash(),
        draws_hash: sha256_hex(&draws_bytes),
        n_subjects: prep.data.n_subjects(),
        n_observations: prep.data.n_observations(),
        n_params: post.dim(),
        gradient_check_error: grad_err,
        max_rhat,
        min_ess_ratio,
        gate_pass: gate.pass,
        chains: draws
            .stats
            .iter()
            .map(|s| ChainReport {
                step_size: s.step_size,
                mean_accept_stat: s.mean_accept_stat,
                mean_tree_depth: s.mean_tree_depth,
                divergences: s.divergences,
                leapfrog_steps: s.n_leapfrog,
            })
            .collect(),
        gate_failures: gate
            .failures
            .iter()
            .map(|f| GateLine {
                param: f.param.clone(),
                reason: f.reason.clone(),
            })
            .collect(),
    };
    write_toml(&fit, &dir.join(REPORT))?;
    println!(
        "{} draws of {} parameters written to {} (max rhat {max_rhat:.4}, min ESS/D {min_ess_ratio:.3}, {} divergences)",
        draws.n_draws(),
        post.dim(),
        dir.display(),
        draws.total_divergences()
    );
    print_gate(&gate);
    if gate.pass {
        Ok(())
    } else {
        Err(CliError::Gate)
    }
}

/// A completed fit on disk.
pub struct FitDir {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub prepared: Prepared,
    pub draws: PosteriorDraws,
}

pub fn load_fit(dir: &Path) -> Result<FitDir, CliError> {
    let cfg_path = dir.join(RESOLVED_CONFIG);
    let text = fs::read_to_string(&cfg_path)
        .map_err(|e| CliError::usage(format!("{} is not a fit directory: {e}", dir.display())))?;
    let config = RunConfig::from_toml(&text, &cfg_path)?;
    let draws_path = dir.join(DRAWS);
    if !draws_path.is_file() {
        return Err(CliError::usage(format!(
            "no draws found at {}",
            draws_path.display()
        )));
    }
    let draws = PosteriorDraws::read_csv(&draws_path)?;
    let prepared = prepare(&config)?;
    let layout = dpam::model::Layout::new(&prepared.spec, prepared.data.n_subjects());
    if draws.names != layout.names() {
        return Err(CliError::usage(format!(
            "{} does not match the model of its configuration",
            draws_path.display()
        )));
    }
    Ok(FitDir {
        dir: dir.to_path_buf(),
        config,
        prepared,
        draws,
    })
}

fn fit_rmse(fit: &FitDir) -> Result<RmseTable, CliError> {
    let layout = dpam::model::Layout::new(&fit.prepared.spec, fit.prepared.data.n_subjects());
    Ok(rmse(&fit.prepared.data, &fit.draws, &layout)?)
}

/// Centred covariate row of a prediction profile.
fn profile_row(
    cohort: &CohortData,
    covariates: &std::collections::BTreeMap<String, f64>,
) -> Result<Vec<f64>, CliError> {
    if let Some(name) = covariates
        .keys()
        .find(|n| !cohort.covariate_names.contains(n))
    {
        return Err(CliError::usage(format!(
            "unknown covariate '{name}' in profile"
        )));
    }
    Ok(cohort
        .covariate_names
        .iter()
        .zip(&cohort.covariate_centers)
        .map(|(n, c)| covariates.get(n).map_or(0.0, |v| v - c))
        .collect())
}

pub fn cmd_predict(fit: &FitDir, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    create_dir(out)?;
    write_resolved(cfg, out, PREDICT_CONFIG)?;
    let prep = &fit.prepared;
    let layout = dpam::model::Layout::new(&prep.spec, prep.data.n_subjects());
    let settings = cfg.prediction.settings();
    let names = &prep.cohort.marker_names;
    let several = cfg.prediction.profiles.len() > 1;
    for profile in &cfg.prediction.profiles {
        let x = profile_row(&prep.cohort, &profile.covariates)?;
        let trajectories = (0..prep.spec.n_markers())
            .map(|k| trajectory(&fit.draws, &layout, &x, k, &settings, cfg.sampler.exec))
            .collect::<dpam::Result<Vec<_>>>()?;
        let crossings = crossing_times(&trajectories, settings.threshold)?;
        let suffix = if several {
            format!("_{}", profile.name)
        } else {
            String::new()
        };
        write_trajectories_csv(
            &out.join(format!("trajectories{suffix}.csv")),
            names,
            &trajectories,
        )?;
        write_crossings_csv(
            &out.join(format!("crossings{suffix}.csv")),
            names,
            &crossings,
        )?;
        println!("profile {}:", profile.name);
        let mut ranked: Vec<_> = crossings.iter().collect();
        ranked.sort_by_key(|c| c.rank);
        for c in ranked {
            println!(
                "  {:>2}. {:<16} reaches {} at s = {:.2} [{:.2}, {:.2}]",
                c.rank, names[c.marker], settings.threshold, c.mean_s, c.lo95, c.hi95
            );
        }
    }
    let table = fit_rmse(fit)?;
    write_rmse_csv(&out.join("rmse.csv"), names, &table)?;
    println!("overall RMSE {:.4}", table.overall);
    Ok(())
}

pub fn cmd_compare(fits: &[FitDir], cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    if fits.len() < 2 {
        return Err(CliError::usage(
            "compare needs at least two --fit directories",
        ));
    }
    let hash = fits[0].prepared.data.dataset_hash();
    for f in &fits[1..] {
        if f.prepared.data.dataset_hash() != hash {
            return Err(CliError::usage(format!(
                "{} and {} were fitted on different data",
                fits[0].dir.display(),
                f.dir.display()
            )));
        }
    }
    let mut labels: Vec<String> = fits
        .iter()
        .map(|f| {
            f.dir.file_name().map_or_else(
                || f.dir.display().to_string(),
                |n| n.to_string_lossy().into_owned(),
            )
        })
        .collect();
    let unique: std::collections::BTreeSet<_> = labels.iter().collect();
    if unique.len() != labels.len() {
        labels = (1..=fits.len()).map(|i| format!("fit{i}")).collect();
    }
    let tables = fits.iter().map(fit_rmse).collect::<Result<Vec<_>, _>>()?;
    create_dir(out)?;
    write_resolved(cfg, out, COMPARE_CONFIG)?;
    let path = out.join("rmse_comparison.csv");
    let mut w = csv::Writer::from_path(&path).map_err(dpam::Error::from)?;
    let mut header = vec!["marker".to_string()];
    header.extend(labels.iter().map(|l| format!("rmse_{l}")));
    header.extend(labels[1..].iter().map(|l| format!("diff_{l}")));
    w.write_record(&header).map_err(dpam::Error::from)?;
    let names = &fits[0].prepared.cohort.marker_names;
    let rows = names
        .iter()
        .enumerate()
        .map(|(k, n)| {
            (
                n.clone(),
                tables.iter().map(|t| t.per_marker[k]).collect::<Vec<_>>(),
            )
        })
        .chain(std::iter::once((
            "__overall__".to_string(),
            tables.iter().map(|t| t.overall).collect(),
        )));
    for (name, vals) in rows {
        let mut rec = vec![name.clone()];
        rec.extend(vals.iter().map(|v| v.to_string()));
        rec.extend(vals[1..].iter().map(|v| (v - vals[0]).to_string()));
        w.write_record(&rec).map_err(dpam::Error::from)?;
        println!(
            "{:<16} {}",
            name,
            vals.iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join("  ")
        );
    }
    w.flush()
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

pub fn cmd_diagnose(fit: &FitDir, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    create_dir(out)?;
    write_resolved(cfg, out, DIAGNOSE_CONFIG)?;
    let thresholds = &cfg.gate;
    let report = diagnose(&fit.draws, fit.config.sampler.exec)?;
    report.write_csv(&out.join("diagnostics.csv"))?;
    let gate = gate_fit(&report, thresholds);
    let (max_rhat, min_ess) = summarize(&report);
    println!(
        "{} draws, {} chains: max rhat {max_rhat:.4}, min ESS/D {min_ess:.3}",
        report.n_draws, report.n_chains
    );
    print_gate(&gate);
    if gate.pass {
        Ok(())
    } else {
        Err(CliError::Gate)
    }
}
