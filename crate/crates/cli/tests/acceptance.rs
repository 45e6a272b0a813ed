//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! `DPAM_ACCEPTANCE=1,7,8` runs a subset. The process exits non-zero when a
//! check panics, and also on any FAIL when `DPAM_ACCEPTANCE_STRICT=1`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use dpam::data::Diagnosis;
use dpam::diagnostics::{diagnose, gate_fit, GateThresholds};
use dpam::model::{DpamPosterior, Layout, ModelData, TimeBounds};
use dpam::par::Execution;
use dpam::prediction::{
    crossing_times, mean_severity, mean_severity_exact, order_agreement, standard_normals,
    trajectory, PredictionConfig,
};
use dpam::sampler::{run_nuts, Init, PosteriorDraws, SamplerConfig};
use dpam::simulator::{
    default_scenario, ordering_scenario, simulate, DiagnosisNoise, SimConfig, Simulated,
};
use dpam::target::{LogDensity, NealFunnel, StdGaussian};
use dpam::transform::{as_normalized, fit_weighted_ecdf};
use dpam_cli::commands::{gradient_check, load_fit};
use dpam_cli::config::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn posterior(sim: &Simulated, cfg: &SimConfig) -> DpamPosterior {
    let data = ModelData::build(&sim.cohort, &as_normalized(&sim.cohort)).unwrap();
    DpamPosterior::new(cfg.model_spec(), data).unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cfg = default_scenario();
    let sim = simulate(&cfg).unwrap();
    let post = posterior(&sim, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let z = post.initial_point(&mut rng);
        worst = worst.max(gradient_check(&post, &z).unwrap());
    }
    let took = start.elapsed();
    outcome(
        worst < 1e-5 && took < Duration::from_secs(60),
        format!(
            "max relative error {worst:.2e} over 20 points, dim {}, {took:.1?}",
            post.dim()
        ),
    )
}

fn calibrated(draws: &PosteriorDraws) -> (bool, f64, f64) {
    let report = diagnose(draws, Execution::default()).unwrap();
    let mut worst_z: f64 = 0.0;
    let mut worst_rhat: f64 = 0.0;
    for p in &report.params {
        worst_z = worst_z.max(p.mean.abs() / (p.sd / p.ess.sqrt()));
        worst_rhat = worst_rhat.max(p.rhat);
    }
    (worst_z < 3.0 && worst_rhat < 1.01, worst_z, worst_rhat)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let gauss_cfg = SamplerConfig {
        chains: 4,
        warmup_iters: 1000,
        sampling_iters: 1000,
        thin: 1,
        seed: 3,
        ..Default::default()
    };
    let gauss = run_nuts(&StdGaussian { dim: 10 }, &gauss_cfg, &Init::Model).unwrap();
    let g_time = start.elapsed();
    let (g_ok, g_z, g_r) = calibrated(&gauss);
    let start = Instant::now();
    let funnel_cfg = SamplerConfig {
        target_acceptance: 0.99,
        warmup_iters: 2000,
        sampling_iters: 100_000,
        seed: 1,
        ..gauss_cfg
    };
    let funnel = run_nuts(&NealFunnel { dim: 10 }, &funnel_cfg, &Init::Model).unwrap();
    let f_time = start.elapsed();
    let (f_ok, f_z, f_r) = calibrated(&funnel);
    let limit = Duration::from_secs(120);
    outcome(
        g_ok && f_ok && g_time < limit && f_time < limit,
        format!(
            "gaussian max |mean|/MCSE {g_z:.2}, max rhat {g_r:.4}, {g_time:.1?}; \
             funnel max |mean|/MCSE {f_z:.2}, max rhat {f_r:.4}, {f_time:.1?}"
        ),
    )
}

/// One fit of the recovery protocol.
struct RecoveryFit {
    seed: u64,
    sim: Simulated,
    post: DpamPosterior,
    draws: PosteriorDraws,
    covered: usize,
    checked: usize,
    gate_pass: bool,
    gate_summary: String,
}

fn recovery_fit(seed: u64) -> RecoveryFit {
    let mut cfg = default_scenario();
    cfg.seed = seed;
    let sim = simulate(&cfg).unwrap();
    let post = posterior(&sim, &cfg);
    let sampler = SamplerConfig {
        chains: 4,
        warmup_iters: 1500,
        sampling_iters: 500,
        thin: 1,
        seed,
        ..Default::default()
    };
    let draws = run_nuts(&post, &sampler, &Init::Model).unwrap();
    let report = diagnose(&draws, sampler.exec).unwrap();
    let gate = gate_fit(&report, &GateThresholds::default());
    let truth = sim.truth.to_flat(&post.layout);
    let (mut covered, mut checked) = (0, 0);
    for (j, p) in report.params.iter().enumerate().take(post.layout.n_global) {
        if p.name.starts_with("sd_u") || p.name.starts_with("cor_u") {
            continue;
        }
        checked += 1;
        covered += usize::from(p.q025 <= truth[j] && truth[j] <= p.q975);
    }
    let max_rhat = report.params.iter().map(|p| p.rhat).fold(0.0, f64::max);
    let min_ess = report
        .params
        .iter()
        .map(|p| p.ess_ratio)
        .fold(f64::INFINITY, f64::min);
    let gate_summary = format!("max rhat {max_rhat:.4}, min ESS/D {min_ess:.3}");
    RecoveryFit {
        seed,
        sim,
        post,
        draws,
        covered,
        checked,
        gate_pass: gate.pass,
        gate_summary,
    }
}

fn criterion_3(fits: &[RecoveryFit], took: Duration) -> Outcome {
    let covered: usize = fits.iter().map(|f| f.covered).sum();
    let checked: usize = fits.iter().map(|f| f.checked).sum();
    let rate = covered as f64 / checked as f64;
    let failed: Vec<String> = fits
        .iter()
        .filter(|f| !f.gate_pass)
        .map(|f| format!("seed {} ({})", f.seed, f.gate_summary))
        .collect();
    let gate_note = if failed.is_empty() {
        "gate passed on every seed".to_string()
    } else {
        format!("gate failed on {}", failed.join(", "))
    };
    outcome(
        rate >= 0.9 && failed.is_empty() && took < Duration::from_secs(30 * 60),
        format!(
            "coverage {covered}/{checked} ({:.1}%) over {} seeds; {gate_note}; {took:.1?}",
            100.0 * rate,
            fits.len()
        ),
    )
}

fn criterion_4(fits: &[RecoveryFit]) -> Outcome {
    let (mut checked, mut violations) = (0usize, 0usize);
    for f in fits {
        let spec = &f.post.spec;
        for (i, subj) in f.post.data.subjects.iter().enumerate() {
            let col = f.draws.index_of(&format!("T_star[{}]", i + 1)).unwrap();
            let (lo, hi) = match subj.diagnosis {
                Diagnosis::Diagnosed { t_diag } => (t_diag - spec.eps_l, t_diag + spec.eps_u),
                Diagnosis::CensoredFree { t_last } => (t_last - spec.eps_l, f64::INFINITY),
            };
            for t in f.draws.column(col) {
                checked += 1;
                violations += usize::from(!(t > lo && t < hi));
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations among {checked} retained latent times"),
    )
}

fn criterion_5(fits: &[RecoveryFit]) -> Outcome {
    let (mut est, mut truth) = (Vec::new(), Vec::new());
    for f in fits {
        let pm = f.draws.posterior_mean();
        for (i, subj) in f.post.data.subjects.iter().enumerate() {
            if subj.diagnosis.is_diagnosed() {
                est.push(pm[f.post.layout.t_star(i)]);
                truth.push(f.sim.truth.t_star[i]);
            }
        }
    }
    let r = pearson(&est, &truth);
    let mae = est
        .iter()
        .zip(&truth)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / est.len() as f64;
    let eps_l = default_scenario().eps_l;
    outcome(
        r >= 0.8 && mae <= eps_l,
        format!(
            "{} diagnosed subjects: correlation {r:.3}, MAE {mae:.3} years",
            est.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let cfg = ordering_scenario();
    let sim = simulate(&cfg).unwrap();
    let post = posterior(&sim, &cfg);
    let sampler = SamplerConfig {
        chains: 4,
        warmup_iters: 1000,
        sampling_iters: 500,
        thin: 1,
        seed: 6,
        ..Default::default()
    };
    let draws = run_nuts(&post, &sampler, &Init::Model).unwrap();
    let layout = Layout::new(&post.spec, post.data.n_subjects());
    let settings = PredictionConfig::default();
    let trs: Vec<_> = (0..2)
        .map(|k| trajectory(&draws, &layout, &[], k, &settings, Execution::default()).unwrap())
        .collect();
    let cr = crossing_times(&trs, 0.5).unwrap();
    let agree = order_agreement(&cr[0], &cr[1]);
    outcome(
        agree >= 0.95,
        format!(
            "early before late in {:.1}% of {} draws (mean crossings {:.2} and {:.2})",
            100.0 * agree,
            draws.n_draws(),
            cr[0].mean_s,
            cr[1].mean_s
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut equal_exact = true;
    for _ in 0..1000 {
        let n = rng.random_range(2..80);
        let grid = rng.random_range(2..30) as f64;
        let mut values: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(-4.0..4.0) * grid).round() / grid)
            .collect();
        if values.iter().all(|v| *v == values[0]) {
            values[0] += 1.0;
        }
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..10.0)).collect();
        let e = fit_weighted_ecdf(&values, &weights).unwrap();
        let total: f64 = weights.iter().sum();
        let eq = fit_weighted_ecdf(&values, &vec![weights[0]; n]).unwrap();
        for &y in values.iter().chain(&[-9.0, 9.0, 0.3]) {
            let (mut below, mut at, mut nb, mut na) = (0.0, 0.0, 0usize, 0usize);
            for (v, w) in values.iter().zip(&weights) {
                if *v < y {
                    below += w;
                    nb += 1;
                } else if *v == y {
                    at += w;
                    na += 1;
                }
            }
            worst = worst.max((e.midpoint(y) - (below + 0.5 * at) / total).abs());
            equal_exact &= eq.midpoint(y) == (nb as f64 + 0.5 * na as f64) / n as f64;
        }
    }
    outcome(
        worst < 1e-12 && equal_exact,
        format!(
            "max deviation from brute force {worst:.1e} on 1000 instances; equal weights exact: {equal_exact}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let z = standard_normals(&mut rng, 1_000_000, true);
    let mut worst: f64 = 0.0;
    for mu in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        for v in [0.1, 0.5, 1.0, 2.0, 4.0] {
            let mc = mean_severity(mu, v, &z).unwrap();
            worst = worst.max((mc - mean_severity_exact(mu, v)).abs());
        }
    }
    outcome(
        worst < 1e-3,
        format!("max |MC - closed form| {worst:.2e} on a 5x5 grid with M = 10^6"),
    )
}

fn dpam(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_dpam"))
        .args(args)
        .output()
        .expect("dpam runs");
    if !matches!(out.status.code(), Some(0 | 1)) {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap_or(-1)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, cfg.to_toml().unwrap()).unwrap();
    p
}

fn criterion_9(dir: &Path) -> Outcome {
    let mut sim = default_scenario();
    sim.diagnosis_noise = DiagnosisNoise::Edge;
    let cfg = RunConfig {
        simulation: Some(sim),
        sampler: SamplerConfig {
            chains: 4,
            warmup_iters: 500,
            sampling_iters: 250,
            thin: 1,
            seed: 9,
            ..Default::default()
        },
        ..Default::default()
    };
    let config = write_config(dir, "c9.toml", &cfg);
    let runs = [
        ("anchored", vec![]),
        ("non_anchored", vec!["--mode", "non-anchored"]),
        ("eps3", vec!["--eps", "3"]),
    ];
    let mut dirs = Vec::new();
    for (label, extra) in &runs {
        let out = dir.join(label);
        let mut args = vec!["fit", "--config", s(&config), "--out", s(&out)];
        args.extend(extra);
        let code = dpam(&args);
        if !matches!(code, 0 | 1) {
            return outcome(false, format!("fit {label} exited with {code}"));
        }
        dirs.push(out);
    }
    let cmp = dir.join("compare");
    let mut args = vec!["compare", "--out", s(&cmp)];
    for d in &dirs {
        args.extend(["--fit", s(d)]);
    }
    let code = dpam(&args);
    let table = fs::read_to_string(cmp.join("rmse_comparison.csv")).unwrap_or_default();
    let k = default_scenario().markers.len();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    let complete = code == 0
        && rows.len() == k + 1
        && rows.iter().all(|r| {
            let cells: Vec<&str> = r.split(',').collect();
            cells.len() == 1 + 3 + 2
                && cells[1..]
                    .iter()
                    .all(|c| c.parse::<f64>().is_ok_and(f64::is_finite))
        });

    let fit = load_fit(&dirs[1]).unwrap();
    let anchored_spec = dpam::model::ModelSpec {
        mode: dpam::model::AnchorMode::Anchored,
        ..fit.prepared.spec.clone()
    };
    let (mut violating_draws, mut violations) = (BTreeSet::new(), 0usize);
    for (i, subj) in fit.prepared.data.subjects.iter().enumerate() {
        if !subj.diagnosis.is_diagnosed() {
            continue;
        }
        let bounds = TimeBounds::for_subject(&subj.diagnosis, &anchored_spec);
        let col = fit.draws.index_of(&format!("T_star[{}]", i + 1)).unwrap();
        for (d, t) in fit.draws.column(col).into_iter().enumerate() {
            if !bounds.contains(t) {
                violations += 1;
                violating_draws.insert(d);
            }
        }
    }
    let overall: Vec<&str> = rows
        .last()
        .map(|r| r.split(',').skip(1).take(3).collect())
        .unwrap_or_default();
    outcome(
        complete && !violating_draws.is_empty(),
        format!(
            "RMSE table with {} rows (overall anchored/non-anchored/eps=3: {}); \
             non-anchored: {} of {} draws leave a diagnosed interval ({violations} subject-draws)",
            rows.len(),
            overall.join(" / "),
            violating_draws.len(),
            fit.draws.n_draws()
        ),
    )
}

fn files_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file())
        .map(|e| {
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn criterion_10(dir: &Path) -> Outcome {
    let mut sim = default_scenario();
    sim.n_subjects = 60;
    let cfg = RunConfig {
        simulation: Some(sim),
        sampler: SamplerConfig {
            chains: 4,
            warmup_iters: 200,
            sampling_iters: 100,
            thin: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    let config = write_config(dir, "c10.toml", &cfg);
    let mut compared = 0;
    let mut mismatched = Vec::new();
    let mut failed = Vec::new();
    for rep in ["a", "b"] {
        let root = dir.join(rep);
        let steps: Vec<Vec<String>> = vec![
            vec!["simulate".into(), "--seed".into(), "4".into()],
            vec!["fit".into(), "--seed".into(), "4".into()],
            vec![
                "predict".into(),
                "--fit".into(),
                s(&root.join("fit")).into(),
            ],
            vec![
                "diagnose".into(),
                "--fit".into(),
                s(&root.join("fit")).into(),
            ],
            vec![
                "compare".into(),
                "--fit".into(),
                s(&root.join("fit")).into(),
                "--fit".into(),
                s(&root.join("fit")).into(),
            ],
        ];
        for step in steps {
            let out = root.join(&step[0]);
            let mut args: Vec<&str> = step.iter().map(String::as_str).collect();
            args.extend(["--config", s(&config), "--out", s(&out)]);
            let code = dpam(&args);
            if !matches!(code, 0 | 1) {
                failed.push(format!("{} exited with {code}", step[0]));
            }
        }
    }
    for step in ["simulate", "fit", "predict", "diagnose", "compare"] {
        let a = files_of(&dir.join("a").join(step));
        let b = files_of(&dir.join("b").join(step));
        if a.len() != b.len() || a.is_empty() {
            mismatched.push(format!("{step}: file sets differ"));
            continue;
        }
        for ((na, ca), (nb, cb)) in a.iter().zip(&b) {
            compared += 1;
            if na != nb || ca != cb {
                mismatched.push(format!("{step}/{na}"));
            }
        }
    }
    outcome(
        failed.is_empty() && mismatched.is_empty(),
        format!(
            "{compared} output files compared across repeated simulate/fit/predict/diagnose/compare runs; \
             mismatches: {:?}; errors: {:?}",
            mismatched, failed
        ),
    )
}

fn main() {
    let selected: BTreeSet<u32> = std::env::var("DPAM_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_else(|| (1..=10).collect());
    let strict = std::env::var("DPAM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let scratch = tempfile::tempdir().unwrap();
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |n: u32, o: Outcome| {
        println!(
            "{} criterion {n:>2}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, o));
    };

    let simple: [(u32, fn() -> Outcome); 5] = [
        (1, criterion_1),
        (2, criterion_2),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    for (n, f) in simple {
        if selected.contains(&n) {
            report(n, f());
        }
    }
    if [3, 4, 5].iter().any(|n| selected.contains(n)) {
        let start = Instant::now();
        let fits: Vec<RecoveryFit> = (1..=10).map(recovery_fit).collect();
        let took = start.elapsed();
        if selected.contains(&3) {
            report(3, criterion_3(&fits, took));
        }
        if selected.contains(&4) {
            report(4, criterion_4(&fits));
        }
        if selected.contains(&5) {
            report(5, criterion_5(&fits));
        }
    }
    if selected.contains(&9) {
        let d = scratch.path().join("c9");
        fs::create_dir_all(&d).unwrap();
        report(9, criterion_9(&d));
    }
    if selected.contains(&10) {
        let d = scratch.path().join("c10");
        fs::create_dir_all(&d).unwrap();
        report(10, criterion_10(&d));
    }

    let passed = results.iter().filter(|(_, o)| o.pass).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if strict && passed < results.len() {
        std::process::exit(1);
    }
}
