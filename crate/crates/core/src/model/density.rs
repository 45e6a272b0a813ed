use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::normal::{ln_pdf_scaled, LN_SQRT_2PI};
use crate::par::{map_chunks_mut, Execution};
use crate::target::{LogDensity, LogpError};

use super::params::{constrain, ln_sech2, unconstrain};
use super::{
    latent_time, AnchorMode, Layout, MarkerParams, ModelData, ModelSpec, ParameterVector,
    TimeBounds, CENTERING_STEPS,
};

/// Subjects per work block in the posterior evaluation.
pub const SUBJECTS_PER_BLOCK: usize = 16;

/// Centring weights (in quarters) of a subject's random intercept and slope
/// given how many observations of the marker it has, and whether the
/// intercept is stored at the subject's mean visit time.
fn default_centering(n: usize, slope: bool) -> ([u8; 2], bool) {
    if slope && n >= 3 {
        return ([CENTERING_STEPS; 2], true);
    }
    let w0 = match n {
        0 => 0,
        1 => 2,
        _ => 3,
    };
    let w1 = match n {
        0..=2 => 0,
        3 | 4 => 2,
        _ => 3,
    };
    ([w0, w1], false)
}

fn ln_half_normal(x: f64, sd: f64) -> f64 {
    LN_2 + ln_pdf_scaled(x, 0.0, sd)
}

fn ln_half_cauchy(x: f64, scale: f64) -> f64 {
    LN_2 - (PI * scale).ln() - (x / scale).powi(2).ln_1p()
}

fn d_ln_half_cauchy(x: f64, scale: f64) -> f64 {
    -2.0 * x / (scale * scale + x * x)
}

/// Mean of a normalized marker value at latent time `s`.
pub fn marker_mean(m: &MarkerParams, x: &[f64], first_visit: bool, s: f64, u: [f64; 2]) -> f64 {
    let mut mean = m.beta[0] + m.beta[1] * s + u[0] + u[1] * s;
    for (xi, g) in x.iter().zip(&m.gamma) {
        mean += xi * g;
    }
    if first_visit && m.gamma.len() > x.len() {
        mean += m.gamma[x.len()];
    }
    mean
}

/// Gaussian log-likelihood of every observation given constrained parameters.
pub fn log_likelihood(data: &ModelData, theta: &ParameterVector, _spec: &ModelSpec) -> f64 {
    let mut lp = 0.0;
    for (i, subj) in data.subjects.iter().enumerate() {
        for o in &subj.obs {
            let m = &theta.markers[o.marker];
            let s = latent_time(o.t, theta.t_star[i]);
            let mean = marker_mean(m, &subj.x, o.first_visit, s, theta.u[i][o.marker]);
            lp += ln_pdf_scaled(o.y, mean, m.sigma_eps);
        }
    }
    lp
}

fn ln_mvn_re(m: &MarkerParams, u: [f64; 2]) -> f64 {
    match m.cor_u {
        None => ln_pdf_scaled(u[0], 0.0, m.sd_u[0]),
        Some(rho) => {
            let (s0, s1) = (m.sd_u[0], m.sd_u[1]);
            let c01 = rho * s0 * s1;
            let det = s0 * s0 * s1 * s1 - c01 * c01;
            let quad =
                (s1 * s1 * u[0] * u[0] - 2.0 * c01 * u[0] * u[1] + s0 * s0 * u[1] * u[1]) / det;
            -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * quad
        }
    }
}

/// Log prior density on the constrained scale; `-inf` outside the support.
pub fn log_prior(theta: &ParameterVector, spec: &ModelSpec, bounds: &[TimeBounds]) -> f64 {
    if theta.check_support(bounds).is_err() {
        return f64::NEG_INFINITY;
    }
    let p = &spec.priors;
    let mut lp = 0.0;
    for m in &theta.markers {
        lp += m
            .beta
            .iter()
            .map(|b| ln_half_normal(*b, p.fixed_effect_sd))
            .sum::<f64>();
        lp += m
            .gamma
            .iter()
            .map(|g| ln_pdf_scaled(*g, 0.0, p.fixed_effect_sd))
            .sum::<f64>();
        lp += ln_half_cauchy(m.sigma_eps, p.half_cauchy_scale);
        lp += m
            .sd_u
            .iter()
            .map(|s| ln_half_cauchy(*s, p.half_cauchy_scale))
            .sum::<f64>();
        if m.cor_u.is_some() {
            lp -= LN_2;
        }
    }
    lp += ln_pdf_scaled(theta.mu_t_eps, p.mu_t_mean, p.mu_t_sd);
    lp += ln_half_cauchy(theta.sigma_t_eps, p.half_cauchy_scale);
    for (i, &t) in theta.t_star.iter().enumerate() {
        lp += match spec.mode {
            AnchorMode::Anchored => {
                let w = (t + spec.eps_l).ln();
                ln_pdf_scaled(w, theta.mu_t_eps, theta.sigma_t_eps) - w
            }
            AnchorMode::NonAnchored => ln_pdf_scaled(t, theta.mu_t_eps, theta.sigma_t_eps),
        };
        for (m, u) in theta.markers.iter().zip(&theta.u[i]) {
            lp += ln_mvn_re(m, *u);
        }
    }
    lp
}

/// Log absolute Jacobian determinant of the map from `z` to the constrained parameters.
pub fn log_jacobian(z: &[f64], layout: &Layout, bounds: &[TimeBounds]) -> f64 {
    let mut lj = 0.0;
    for s in &layout.markers {
        lj += z[s.beta] + z[s.beta + 1] + z[s.sigma_eps];
        lj += z[s.sd_u..s.sd_u + s.n_re].iter().sum::<f64>();
        if let Some(c) = s.cor_u {
            lj += ln_sech2(z[c]);
        }
    }
    lj += z[layout.sigma_t];
    for (i, b) in bounds.iter().enumerate() {
        lj += b.constrain(z[layout.t_star(i)]).2;
        for (k, s) in layout.markers.iter().enumerate() {
            // u = sd0^(1 - w0) v0, and likewise for the conditional slope
            let w = layout
                .centering(i, k)
                .map(|w| f64::from(w) / f64::from(CENTERING_STEPS));
            lj += (1.0 - w[0]) * z[s.sd_u];
            if let Some(c) = s.cor_u {
                lj += (1.0 - w[1]) * (z[s.sd_u + 1] + 0.5 * ln_sech2(z[c]));
            }
        }
    }
    lj
}

/// Per-call decoded global parameters of one marker.
struct MarkerState {
    beta: [f64; 2],
    gamma: Vec<f64>,
    sigma: f64,
    inv_var: f64,
    ln_sigma: f64,
    sd: [f64; 2],
    rho: f64,
    c: f64,
    /// `ln sd0` and `ln(sd1 c)`
    ln_scale: [f64; 2],
    /// `scale^(-j / CENTERING_STEPS)` for each centring step `j`
    pow: [[f64; CENTERING_STEPS as usize + 1]; 2],
    slope: bool,
    fv: Option<usize>,
}

struct Shared<'a> {
    markers: Vec<MarkerState>,
    mu: f64,
    sigma_t: f64,
    layout: &'a Layout,
}

/// Unnormalized log-posterior over the unconstrained space.
///
/// Random effects are sampled through their whitened coordinates `eta`
/// (`u = L eta`), which leaves the target density unchanged but removes the
/// funnel between `u` and its scale parameters.
pub struct DpamPosterior {
    pub spec: ModelSpec,
    pub data: ModelData,
    pub layout: Layout,
    pub bounds: Vec<TimeBounds>,
    pub exec: Execution,
    packed: Packed,
}

/// Observations flattened by subject then marker, with `seg[i * K + k]`
/// marking where subject `i`, marker `k` starts.
struct Packed {
    t: Vec<f64>,
    y: Vec<f64>,
    /// 1.0 where a first-visit effect applies.
    fv: Vec<f64>,
    seg: Vec<usize>,
}

impl Packed {
    fn new(data: &ModelData, spec: &ModelSpec) -> Self {
        let k_n = data.n_markers;
        let n = data.n_observations();
        let mut p = Packed {
            t: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            fv: Vec::with_capacity(n),
            seg: Vec::with_capacity(data.n_subjects() * k_n + 1),
        };
        for subj in &data.subjects {
            for k in 0..k_n {
                p.seg.push(p.t.len());
                for o in subj.obs.iter().filter(|o| o.marker == k) {
                    p.t.push(o.t);
                    p.y.push(o.y);
                    let on = o.first_visit && spec.markers[k].first_visit_effect;
                    p.fv.push(if on { 1.0 } else { 0.0 });
                }
            }
        }
        p.seg.push(p.t.len());
        p
    }
}

impl DpamPosterior {
    pub fn new(spec: ModelSpec, data: ModelData) -> crate::error::Result<Self> {
        spec.validate()?;
        if data.n_markers != spec.n_markers() {
            return Err(crate::error::Error::Model(format!(
                "data has {} markers, model declares {}",
                data.n_markers,
                spec.n_markers()
            )));
        }
        if data.n_covariates != spec.n_covariates {
            return Err(crate::error::Error::Model(format!(
                "data has {} covariates, model declares {}",
                data.n_covariates, spec.n_covariates
            )));
        }
        let k_n = spec.n_markers();
        let mut flags = Vec::with_capacity(data.n_subjects() * k_n);
        let mut shear = Vec::with_capacity(data.n_subjects() * k_n);
        for subj in &data.subjects {
            for k in 0..k_n {
                let ts: Vec<f64> = subj
                    .obs
                    .iter()
                    .filter(|o| o.marker == k)
                    .map(|o| o.t)
                    .collect();
                let slope = spec.markers[k].random_slope;
                let (w, t_ref) = default_centering(ts.len(), slope);
                flags.push(w);
                shear.push(t_ref.then(|| ts.iter().sum::<f64>() / ts.len() as f64));
            }
        }
        let layout = Layout::new(&spec, data.n_subjects())
            .with_centering(flags)
            .with_shear(shear);
        let bounds = data
            .subjects
            .iter()
            .map(|s| TimeBounds::for_subject(&s.diagnosis, &spec))
            .collect();
        let packed = Packed::new(&data, &spec);
        Ok(DpamPosterior {
            spec,
            data,
            layout,
            bounds,
            exec: Execution::default(),
            packed,
        })
    }

    /// Overrides the data-driven centring of the random-effect coordinates.
    /// The target density is unchanged; only the sampling geometry differs.
    pub fn with_centering(mut self, weights: Vec<[u8; 2]>) -> Self {
        self.layout = self.layout.with_centering(weights);
        self
    }

    /// Overrides the data-driven reference times of sheared intercepts.
    pub fn with_shear(mut self, t_ref: Vec<Option<f64>>) -> Self {
        self.layout = self.layout.with_shear(t_ref);
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn to_parameters(&self, z: &[f64]) -> ParameterVector {
        constrain(z, &self.layout, &self.bounds)
    }

    pub fn to_unconstrained(&self, theta: &ParameterVector) -> crate::error::Result<Vec<f64>> {
        unconstrain(theta, &self.layout, &self.bounds)
    }

    fn decode_globals(&self, z: &[f64], g: &mut [f64]) -> Result<(f64, Shared<'_>), LogpError> {
        let p = &self.spec.priors;
        let hc = p.half_cauchy_scale;
        let mut lp = 0.0;
        let mut markers = Vec::with_capacity(self.layout.markers.len());
        for (k, s) in self.layout.markers.iter().enumerate() {
            let beta = [z[s.beta].exp(), z[s.beta + 1].exp()];
            for d in 0..2 {
                lp += ln_half_normal(beta[d], p.fixed_effect_sd) + z[s.beta + d];
                g[s.beta + d] = -beta[d] / (p.fixed_effect_sd * p.fixed_effect_sd);
            }
            let gamma = z[s.gamma..s.gamma + s.n_gamma].to_vec();
            for (c, gm) in gamma.iter().enumerate() {
                lp += ln_pdf_scaled(*gm, 0.0, p.fixed_effect_sd);
                g[s.gamma + c] = -gm / (p.fixed_effect_sd * p.fixed_effect_sd);
            }
            let sigma = z[s.sigma_eps].exp();
            lp += ln_half_cauchy(sigma, hc) + z[s.sigma_eps];
            g[s.sigma_eps] = d_ln_half_cauchy(sigma, hc);
            let mut sd = [0.0; 2];
            for d in 0..s.n_re {
                sd[d] = z[s.sd_u + d].exp();
                lp += ln_half_cauchy(sd[d], hc) + z[s.sd_u + d];
                g[s.sd_u + d] = d_ln_half_cauchy(sd[d], hc);
            }
            let (rho, c, ln_c) = match s.cor_u {
                Some(ci) => {
                    let rho = z[ci].tanh();
                    if rho.abs() >= 1.0 {
                        return Err(LogpError::OutOfSupport);
                    }
                    let ls = ln_sech2(z[ci]);
                    lp += -LN_2 + ls;
                    g[ci] = 0.0;
                    (rho, (1.0 - rho * rho).sqrt(), 0.5 * ls)
                }
                None => (0.0, 1.0, 0.0),
            };
            let ln_scale = [
                z[s.sd_u],
                if s.n_re == 2 {
                    z[s.sd_u + 1] + ln_c
                } else {
                    0.0
                },
            ];
            let pow = ln_scale.map(|l| {
                std::array::from_fn(|j| (-l * j as f64 / f64::from(CENTERING_STEPS)).exp())
            });
            if !(sigma > 0.0 && sigma.is_finite() && sd.iter().all(|v| v.is_finite())) {
                return Err(LogpError::OutOfSupport);
            }
            markers.push(MarkerState {
                beta,
                gamma,
                sigma,
                inv_var: 1.0 / (sigma * sigma),
                ln_sigma: sigma.ln(),
                sd,
                rho,
                c,
                ln_scale,
                pow,
                slope: s.n_re == 2,
                fv: self.spec.markers[k]
                    .first_visit_effect
                    .then_some(self.spec.n_covariates),
            });
        }
        let mu = z[self.layout.mu_t];
        let sigma_t = z[self.layout.sigma_t].exp();
        if !(sigma_t > 0.0 && sigma_t.is_finite()) {
            return Err(LogpError::OutOfSupport);
        }
        lp += ln_pdf_scaled(mu, p.mu_t_mean, p.mu_t_sd);
        g[self.layout.mu_t] = -(mu - p.mu_t_mean) / (p.mu_t_sd * p.mu_t_sd);
        lp += ln_half_cauchy(sigma_t, hc) + z[self.layout.sigma_t];
        g[self.layout.sigma_t] = d_ln_half_cauchy(sigma_t, hc);
        Ok((
            lp,
            Shared {
                markers,
                mu,
                sigma_t,
                layout: &self.layout,
            },
        ))
    }

    /// Contribution of subjects `first..first + n`; `gz` is their slice of the
    /// gradient and `gg` receives constrained-scale partials of the globals.
    fn subject_block(
        &self,
        sh: &Shared<'_>,
        z: &[f64],
        first: usize,
        gz: &mut [f64],
        gg: &mut [f64],
    ) -> Result<f64, LogpError> {
        let lay = sh.layout;
        let nb = lay.block;
        let k_n = sh.markers.len();
        let pk = &self.packed;
        let mut lp = 0.0;
        let (mu, sig_t) = (sh.mu, sh.sigma_t);
        let inv_vt = 1.0 / (sig_t * sig_t);
        let t_norm = -LN_SQRT_2PI - sig_t.ln();
        let (mut g_mu, mut g_sig) = (0.0, 0.0);
        for (bi, gsub) in gz.chunks_mut(nb).enumerate() {
            let i = first + bi;
            let x = &self.data.subjects[i].x;
            let base = lay.t_star(i);
            let zs = &z[base..base + nb];
            let bound = &self.bounds[i];
            let (t_star, dt_dz, log_j, dlog_j) = bound.constrain(zs[0]);
            if !bound.contains(t_star) {
                return Err(LogpError::OutOfSupport);
            }
            let mut d_t = 0.0;
            match self.spec.mode {
                AnchorMode::Anchored => {
                    let a = t_star + self.spec.eps_l;
                    if a <= 0.0 {
                        return Err(LogpError::OutOfSupport);
                    }
                    let w = a.ln();
                    let r = w - mu;
                    lp += t_norm - 0.5 * r * r * inv_vt - w;
                    d_t += (-r * inv_vt - 1.0) / a;
                    g_mu += r * inv_vt;
                    g_sig += r * r * inv_vt - 1.0;
                }
                AnchorMode::NonAnchored => {
                    let r = t_star - mu;
                    lp += t_norm - 0.5 * r * r * inv_vt;
                    d_t -= r * inv_vt;
                    g_mu += r * inv_vt;
                    g_sig += r * r * inv_vt - 1.0;
                }
            }
            lp += log_j;
            gsub[0] = 0.0;

            for (k, m) in sh.markers.iter().enumerate() {
                let sl = &lay.markers[k];
                let off = lay.re_offset(k);
                let cw = lay.centering(i, k);
                let w = cw.map(|w| f64::from(w) / f64::from(CENTERING_STEPS));
                let shift = lay.shear_shift(i, k, t_star);
                let v1 = if m.slope { zs[off + 1] } else { 0.0 };
                let a = (zs[off] - shift * v1) * m.pow[0][usize::from(cw[0])];
                let p1 = m.pow[1][usize::from(cw[1])];
                let eta = if m.slope {
                    (v1 - w[1] * m.sd[1] * m.rho * a) * p1
                } else {
                    0.0
                };
                lp -=
                    0.5 * (a * a + eta * eta) + LN_SQRT_2PI * (1.0 + f64::from(u8::from(m.slope)));
                lp -= w[0] * m.ln_scale[0] + w[1] * m.ln_scale[1];
                let u0 = m.sd[0] * a;
                let u1 = if m.slope {
                    m.sd[1] * (m.rho * a + m.c * eta)
                } else {
                    0.0
                };

                let seg = i * k_n + k;
                let (lo, hi) = (pk.seg[seg], pk.seg[seg + 1]);
                let (d0, d1) = if lo == hi {
                    (0.0, 0.0)
                } else {
                    let xg: f64 = x.iter().zip(&m.gamma).map(|(a, b)| a * b).sum();
                    let b0 = m.beta[0] + u0 + xg;
                    let b1 = m.beta[1] + u1;
                    let fvs = m.fv.map_or(0.0, |f| m.gamma[f]);
                    let (ts, ys, fvm) = (&pk.t[lo..hi], &pk.y[lo..hi], &pk.fv[lo..hi]);
                    let (mut sr, mut srs, mut srr, mut sfv) = (0.0, 0.0, 0.0, 0.0);
                    for j in 0..ts.len() {
                        let s = latent_time(ts[j], t_star);
                        let r = ys[j] - (b0 + b1 * s + fvm[j] * fvs);
                        sr += r;
                        srs += r * s;
                        srr += r * r;
                        sfv += fvm[j] * r;
                    }
                    let n = (hi - lo) as f64;
                    let iv = m.inv_var;
                    let g0 = sr * iv;
                    let g1 = srs * iv;
                    lp -= n * (LN_SQRT_2PI + m.ln_sigma) + 0.5 * srr * iv;
                    gg[sl.beta] += g0;
                    gg[sl.beta + 1] += g1;
                    for (c, xi) in x.iter().enumerate() {
                        gg[sl.gamma + c] += g0 * xi;
                    }
                    if let Some(f) = m.fv {
                        gg[sl.gamma + f] += sfv * iv;
                    }
                    gg[sl.sigma_eps] += (srr * iv - n) / m.sigma;
                    d_t -= g0 * b1;
                    (g0, g1)
                };

                // partials with respect to (a, eta), then through the centring weights
                let mut fa = d0 * m.sd[0] - a;
                if m.slope {
                    fa += d1 * m.sd[1] * m.rho;
                    let fe = d1 * m.sd[1] * m.c - eta;
                    gsub[off + 1] = fe * p1;
                    fa -= fe * w[1] * m.sd[1] * m.rho * p1;
                    let c2 = m.c * m.c;
                    gg[sl.sd_u + 1] += d1 * (m.rho * a + m.c * eta)
                        - w[1] * (fe * (p1 * m.rho * a + eta / m.sd[1]) + 1.0 / m.sd[1]);
                    if let Some(ci) = sl.cor_u {
                        gg[ci] += d1 * m.sd[1] * (a - m.rho * eta / m.c)
                            + w[1] * (fe * (eta * m.rho / c2 - m.sd[1] * a * p1) + m.rho / c2);
                    }
                }
                let g0 = fa * m.pow[0][usize::from(cw[0])];
                gsub[off] = g0;
                gg[sl.sd_u] += d0 * a - w[0] * (fa * a + 1.0) / m.sd[0];
                if lay.shear(i, k).is_some() {
                    gsub[off + 1] -= shift * g0;
                    d_t += g0 * v1;
                }
            }
            gsub[0] = d_t * dt_dz + dlog_j;
        }
        gg[lay.mu_t] += g_mu;
        gg[lay.sigma_t] += g_sig / sig_t;
        Ok(lp)
    }
}

impl LogDensity for DpamPosterior {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn logp_grad(&self, z: &[f64], grad: &mut [f64]) -> Result<f64, LogpError> {
        let lay = &self.layout;
        let ng = lay.n_global;
        let (g_glob, g_subj) = grad.split_at_mut(ng);
        let (mut lp, sh) = self.decode_globals(z, g_glob)?;
        // g_glob now holds constrained-scale prior partials (plus 0 for correlations)
        let block_len = SUBJECTS_PER_BLOCK * lay.block;
        let parts = map_chunks_mut(self.exec, g_subj, block_len, |b, chunk| {
            let mut gg = vec![0.0; ng];
            let r = self.subject_block(&sh, z, b * SUBJECTS_PER_BLOCK, chunk, &mut gg);
            r.map(|lp| (lp, gg))
        });
        for part in parts {
            let (blp, gg) = part?;
            lp += blp;
            for (a, b) in g_glob.iter_mut().zip(&gg) {
                *a += b;
            }
        }
        // chain rule to the unconstrained globals
        for (m, s) in sh.markers.iter().zip(&lay.markers) {
            for d in 0..2 {
                g_glob[s.beta + d] = g_glob[s.beta + d] * m.beta[d] + 1.0;
            }
            g_glob[s.sigma_eps] = g_glob[s.sigma_eps] * m.sigma + 1.0;
            for d in 0..s.n_re {
                g_glob[s.sd_u + d] = g_glob[s.sd_u + d] * m.sd[d] + 1.0;
            }
            if let Some(ci) = s.cor_u {
                g_glob[ci] = g_glob[ci] * (1.0 - m.rho * m.rho) - 2.0 * m.rho;
            }
        }
        g_glob[lay.sigma_t] = g_glob[lay.sigma_t] * sh.sigma_t + 1.0;

        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(LogpError::NonFinite);
        }
        Ok(lp)
    }

    fn param_names(&self) -> Vec<String> {
        self.layout.names()
    }

    fn constrain(&self, z: &[f64]) -> Vec<f64> {
        self.to_parameters(z).to_flat(&self.layout)
    }

    /// Globals and whitened random effects uniform on `[-2, 2]`; each `T*`
    /// starts near its anchor (`T_diag`, or `T_last + 2` when censored) and
    /// the latent-time population parameters start at the moments of those
    /// starting values.
    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let lay = &self.layout;
        let mut z: Vec<f64> = (0..lay.dim())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let jitter = 0.2 * self.spec.eps_l.min(self.spec.eps_u);
        let mut w = Vec::with_capacity(lay.n_subjects);
        for (i, subj) in self.data.subjects.iter().enumerate() {
            let anchor = match subj.diagnosis {
                crate::data::Diagnosis::Diagnosed { t_diag } => t_diag,
                crate::data::Diagnosis::CensoredFree { t_last } => t_last + 2.0,
            };
            let t = anchor + rng.random_range(-jitter..jitter);
            z[lay.t_star(i)] = self.bounds[i].unconstrain(t).unwrap_or(0.0);
            w.push(match self.spec.mode {
                AnchorMode::Anchored => (t + self.spec.eps_l).max(1e-3).ln(),
                AnchorMode::NonAnchored => t,
            });
        }
        if !w.is_empty() {
            let n = w.len() as f64;
            let mean = w.iter().sum::<f64>() / n;
            let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            z[lay.mu_t] = mean;
            z[lay.sigma_t] = var.sqrt().max(0.1).ln();
        }
        z
    }
}
