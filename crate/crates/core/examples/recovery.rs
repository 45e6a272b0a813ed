//! Simulates the default scenario, fits it and prints coverage of the generating values.

use std::time::Instant;

use dpam::diagnostics::{diagnose, gate_fit, GateThresholds};
use dpam::model::{DpamPosterior, ModelData};
use dpam::sampler::{run_nuts, Init, SamplerConfig};
use dpam::simulator::{default_scenario, simulate};
use dpam::transform::as_normalized;

fn env_or(key: &str, default: usize) -> usize {
    std::env::var(key)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn main() -> dpam::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let mut sim = default_scenario();
    sim.seed = seed;
    let out = simulate(&sim)?;
    let data = ModelData::build(&out.cohort, &as_normalized(&out.cohort))?;
    let post = DpamPosterior::new(sim.model_spec(), data)?;
    let cfg = SamplerConfig {
        warmup_iters: env_or("WARMUP", 1500),
        sampling_iters: env_or("SAMPLES", 500),
        thin: 1,
        seed,
        ..Default::default()
    };
    let start = Instant::now();
    let draws = run_nuts(&post, &cfg, &Init::Model)?;
    println!("sampling took {:.1?}", start.elapsed());
    for (c, s) in draws.stats.iter().enumerate() {
        println!(
            "chain {}: step {:.4} accept {:.3} depth {:.2} divergences {}",
            c + 1,
            s.step_size,
            s.mean_accept_stat,
            s.mean_tree_depth,
            s.divergences
        );
    }
    let report = diagnose(&draws, cfg.exec)?;
    let gate = gate_fit(&report, &GateThresholds::default());
    println!(
        "gate pass: {} ({} failures)",
        gate.pass,
        gate.failures.len()
    );
    for f in gate.failures.iter().take(10) {
        println!("  {}: {}", f.param, f.reason);
    }
    let truth = out.truth.to_flat(&post.layout);
    let (mut covered, mut total) = (0, 0);
    for (j, p) in report.params.iter().enumerate().take(post.layout.n_global) {
        if p.name.starts_with("sd_u") || p.name.starts_with("cor_u") {
            continue;
        }
        let hit = p.q025 <= truth[j] && truth[j] <= p.q975;
        covered += usize::from(hit);
        total += 1;
        println!(
            "{:<14} truth {:>8.4} mean {:>8.4} [{:>8.4}, {:>8.4}] rhat {:.3} ess {:>6.0} {}",
            p.name,
            truth[j],
            p.mean,
            p.q025,
            p.q975,
            p.rhat,
            p.ess,
            if hit { "" } else { "MISS" }
        );
    }
    println!("coverage {covered}/{total}");
    let worst = report.params.iter().map(|p| p.rhat).fold(0.0, f64::max);
    let min_ess = report
        .params
        .iter()
        .map(|p| p.ess_ratio)
        .fold(f64::INFINITY, f64::min);
    println!("max rhat {worst:.4}, min ESS/D {min_ess:.3}");
    let mut by_ess: Vec<_> = report.params.iter().collect();
    by_ess.sort_by(|a, b| a.ess_ratio.total_cmp(&b.ess_ratio));
    for p in by_ess.iter().take(8) {
        println!(
            "  low ess {} {:.3} degenerate {}",
            p.name, p.ess_ratio, p.degenerate
        );
    }
    Ok(())
}
