//! Multi-chain NUTS with windowed warm-up adaptation.

mod adapt;
mod draws;
mod nuts;

pub use adapt::{DualAveraging, MetricAdaptation, Welford};
pub use draws::{ChainStats, PosteriorDraws};
pub use nuts::{Nuts, Point, TransitionInfo};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::target::LogDensity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup_iters: usize,
    pub sampling_iters: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    pub max_tree_depth: usize,
    /// Starting step size before the warm-up heuristic.
    pub init_step_size: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup_iters: 6000,
            sampling_iters: 2000,
            thin: 4,
            seed: 1,
            target_acceptance: 0.8,
            max_tree_depth: 10,
            init_step_size: 1.0,
            exec: Execution::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Sampler("chains must be at least 1".into()));
        }
        if self.thin == 0 || !self.sampling_iters.is_multiple_of(self.thin) {
            return Err(Error::Sampler(format!(
                "sampling_iters ({}) must be a positive multiple of thin ({})",
                self.sampling_iters, self.thin
            )));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Sampler(
                "target_acceptance must lie in (0, 1)".into(),
            ));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::Sampler("max_tree_depth must be at least 1".into()));
        }
        if !(self.init_step_size > 0.0 && self.init_step_size.is_finite()) {
            return Err(Error::Sampler("init_step_size must be positive".into()));
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        self.sampling_iters / self.thin
    }
}

/// How chains obtain their starting points.
#[derive(Clone, Debug, Default)]
pub enum Init {
    /// The model's own initialization, retried until the density is finite.
    #[default]
    Model,
    /// One unconstrained starting point per chain.
    Points(Vec<Vec<f64>>),
}

fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Unconstrained starting point of every chain, each with a finite log-density.
pub fn initialize_chains<M: LogDensity + ?Sized>(
    model: &M,
    config: &SamplerConfig,
) -> Result<Vec<Vec<f64>>> {
    let mut grad = vec![0.0; model.dim()];
    (0..config.chains)
        .map(|c| {
            let mut rng = chain_rng(config.seed, 2 * c as u64);
            for _ in 0..100 {
                let z = model.initial_point(&mut rng);
                if let Ok(lp) = model.logp_grad(&z, &mut grad) {
                    if lp.is_finite() {
                        return Ok(z);
                    }
                }
            }
            Err(Error::Sampler(format!(
                "chain {}: no starting point with finite log-density after 100 attempts",
                c + 1
            )))
        })
        .collect()
}

struct ChainOutput {
    values: Vec<f64>,
    iters: Vec<usize>,
    stats: ChainStats,
}

fn run_chain<M: LogDensity + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    chain: usize,
    start: &[f64],
) -> Result<ChainOutput> {
    let dim = model.dim();
    let mut rng = chain_rng(config.seed, 2 * chain as u64 + 1);
    let mut grad = vec![0.0; dim];
    let logp = model.logp_grad(start, &mut grad).map_err(|e| {
        Error::Sampler(format!(
            "chain {}: initial point rejected ({e:?})",
            chain + 1
        ))
    })?;
    let mut current = Point {
        q: start.to_vec(),
        logp,
        grad,
    };
    let mut nuts = Nuts {
        model,
        step_size: config.init_step_size,
        inv_metric: vec![1.0; dim],
        max_depth: config.max_tree_depth,
    };
    let mut stats = ChainStats::default();
    if config.warmup_iters > 0 {
        nuts.init_step_size(&current, &mut rng);
    }
    let mut da = DualAveraging::new(config.target_acceptance, nuts.step_size);
    let mut metric = MetricAdaptation::new(dim, config.warmup_iters);

    for _ in 0..config.warmup_iters {
        let info = nuts.transition(&mut current, &mut rng);
        stats.warmup_divergences += usize::from(info.divergent);
        stats.warmup_leapfrog += info.n_leapfrog;
        nuts.step_size = da.update(info.accept_stat);
        if metric.learn(&mut nuts.inv_metric, &current.q) {
            nuts.init_step_size(&current, &mut rng);
            da.restart(nuts.step_size);
        }
    }
    if config.warmup_iters > 0 {
        nuts.step_size = da.final_step_size();
    }

    let keep = config.retained_per_chain();
    let mut values = Vec::with_capacity(keep * dim);
    let mut iters = Vec::with_capacity(keep);
    let mut accept_sum = 0.0;
    let mut depth_sum = 0usize;
    for it in 1..=config.sampling_iters {
        let info = nuts.transition(&mut current, &mut rng);
        stats.divergences += usize::from(info.divergent);
        stats.n_leapfrog += info.n_leapfrog;
        accept_sum += info.accept_stat;
        depth_sum += info.depth;
        if it % config.thin == 0 {
            values.extend(model.constrain(&current.q));
            iters.push(it);
        }
    }
    let n = config.sampling_iters.max(1) as f64;
    stats.step_size = nuts.step_size;
    stats.mean_accept_stat = accept_sum / n;
    stats.mean_tree_depth = depth_sum as f64 / n;
    if config.sampling_iters > 0 && stats.divergences == config.sampling_iters {
        return Err(Error::Sampler(format!(
            "chain {}: every post-warm-up transition diverged",
            chain + 1
        )));
    }
    Ok(ChainOutput {
        values,
        iters,
        stats,
    })
}

/// Runs `config.chains` independent chains (concurrently under `config.exec`).
///
/// Chain `c` uses RNG stream `2c + 1` of `config.seed` for its transitions, so
/// output depends only on the seed and configuration.
pub fn run_nuts<M: LogDensity + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    init: &Init,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let starts = match init {
        Init::Model => initialize_chains(model, config)?,
        Init::Points(p) => {
            if p.len() != config.chains || p.iter().any(|z| z.len() != model.dim()) {
                return Err(Error::Sampler(format!(
                    "expected {} starting points of length {}",
                    config.chains,
                    model.dim()
                )));
            }
            p.clone()
        }
    };
    let outputs = map_indexed(config.exec, config.chains, |c| {
        run_chain(model, config, c, &starts[c])
    });
    let names = model.param_names();
    let mut draws = PosteriorDraws::new(names, config.chains);
    for (c, out) in outputs.into_iter().enumerate() {
        let out = out?;
        let frac = out.stats.divergences as f64 / config.sampling_iters.max(1) as f64;
        if frac > 0.01 {
            log::warn!(
                "chain {}: {} divergent transitions after warm-up ({:.1}%)",
                c + 1,
                out.stats.divergences,
                100.0 * frac
            );
        }
        draws.push_chain(c, &out.iters, out.values, out.stats);
    }
    Ok(draws)
}
