use crate::data::Diagnosis;
use crate::error::{Error, Result};

use super::{AnchorMode, Layout, ModelSpec, CENTERING_STEPS};

/// Support of one subject's latent onset time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeBounds {
    Free,
    /// `T* > lower`
    Lower(f64),
    /// `lower < T* < upper`
    Interval(f64, f64),
}

/// `ln(1 - tanh(z)^2) = -2 ln cosh z`
pub(crate) fn ln_sech2(z: f64) -> f64 {
    let a = z.abs();
    -2.0 * (a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2)
}

impl TimeBounds {
    pub fn for_subject(diagnosis: &Diagnosis, spec: &ModelSpec) -> Self {
        match (spec.mode, diagnosis) {
            (AnchorMode::NonAnchored, _) => TimeBounds::Free,
            (AnchorMode::Anchored, Diagnosis::Diagnosed { t_diag }) => {
                TimeBounds::Interval(t_diag - spec.eps_l, t_diag + spec.eps_u)
            }
            (AnchorMode::Anchored, Diagnosis::CensoredFree { t_last }) => {
                TimeBounds::Lower(t_last - spec.eps_l)
            }
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        if !t.is_finite() {
            return false;
        }
        match *self {
            TimeBounds::Free => true,
            TimeBounds::Lower(a) => t > a,
            TimeBounds::Interval(a, b) => t > a && t < b,
        }
    }

    /// Returns `(T*, dT*/dz, ln |dT*/dz|, d ln|dT*/dz| / dz)`.
    pub fn constrain(&self, z: f64) -> (f64, f64, f64, f64) {
        match *self {
            TimeBounds::Free => (z, 1.0, 0.0, 0.0),
            TimeBounds::Lower(a) => {
                let e = z.exp();
                (a + e, e, z, 1.0)
            }
            TimeBounds::Interval(a, b) => {
                let w = b - a;
                let e = (-z.abs()).exp();
                let r = 1.0 / (1.0 + e);
                let (p, q) = if z >= 0.0 { (r, e * r) } else { (e * r, r) };
                let log_j = w.ln() - z.abs() - 2.0 * e.ln_1p();
                (a + w * p, w * p * q, log_j, q - p)
            }
        }
    }

    pub fn unconstrain(&self, t: f64) -> Result<f64> {
        if !self.contains(t) {
            return Err(Error::Model(format!(
                "T* = {t} outside its support {self:?}"
            )));
        }
        Ok(match *self {
            TimeBounds::Free => t,
            TimeBounds::Lower(a) => (t - a).ln(),
            TimeBounds::Interval(a, b) => {
                let p = (t - a) / (b - a);
                p.ln() - (-p).ln_1p()
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkerParams {
    pub beta: [f64; 2],
    pub gamma: Vec<f64>,
    pub sigma_eps: f64,
    /// Random intercept SD, then random slope SD when present.
    pub sd_u: Vec<f64>,
    pub cor_u: Option<f64>,
}

impl MarkerParams {
    /// `F(s)' B F(s)` for `F(s) = (1, s)`.
    pub fn re_variance(&self, s: f64) -> f64 {
        let v0 = self.sd_u[0] * self.sd_u[0];
        match (self.sd_u.get(1), self.cor_u) {
            (Some(&sd1), rho) => {
                let rho = rho.unwrap_or(0.0);
                v0 + 2.0 * s * rho * self.sd_u[0] * sd1 + s * s * sd1 * sd1
            }
            (None, _) => v0,
        }
    }
}

/// All unknowns on their natural (constrained) scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    pub markers: Vec<MarkerParams>,
    pub mu_t_eps: f64,
    pub sigma_t_eps: f64,
    pub t_star: Vec<f64>,
    /// `u[i][k] = (intercept, slope)`; the slope is 0 for intercept-only markers.
    pub u: Vec<Vec<[f64; 2]>>,
}

impl ParameterVector {
    pub fn to_flat(&self, layout: &Layout) -> Vec<f64> {
        let mut out = vec![0.0; layout.dim()];
        for (m, s) in self.markers.iter().zip(&layout.markers) {
            out[s.beta..s.beta + 2].copy_from_slice(&m.beta);
            out[s.gamma..s.gamma + s.n_gamma].copy_from_slice(&m.gamma);
            out[s.sigma_eps] = m.sigma_eps;
            out[s.sd_u..s.sd_u + s.n_re].copy_from_slice(&m.sd_u);
            if let (Some(c), Some(r)) = (s.cor_u, m.cor_u) {
                out[c] = r;
            }
        }
        out[layout.mu_t] = self.mu_t_eps;
        out[layout.sigma_t] = self.sigma_t_eps;
        for i in 0..layout.n_subjects {
            out[layout.t_star(i)] = self.t_star[i];
            for (k, s) in layout.markers.iter().enumerate() {
                let at = layout.re(i, k);
                out[at..at + s.n_re].copy_from_slice(&self.u[i][k][..s.n_re]);
            }
        }
        out
    }

    pub fn from_flat(flat: &[f64], layout: &Layout) -> Self {
        let markers = layout
            .markers
            .iter()
            .map(|s| MarkerParams {
                beta: [flat[s.beta], flat[s.beta + 1]],
                gamma: flat[s.gamma..s.gamma + s.n_gamma].to_vec(),
                sigma_eps: flat[s.sigma_eps],
                sd_u: flat[s.sd_u..s.sd_u + s.n_re].to_vec(),
                cor_u: s.cor_u.map(|c| flat[c]),
            })
            .collect();
        let t_star = (0..layout.n_subjects)
            .map(|i| flat[layout.t_star(i)])
            .collect();
        let u = (0..layout.n_subjects)
            .map(|i| {
                layout
                    .markers
                    .iter()
                    .enumerate()
                    .map(|(k, s)| {
                        let at = layout.re(i, k);
                        if s.n_re == 2 {
                            [flat[at], flat[at + 1]]
                        } else {
                            [flat[at], 0.0]
                        }
                    })
                    .collect()
            })
            .collect();
        ParameterVector {
            markers,
            mu_t_eps: flat[layout.mu_t],
            sigma_t_eps: flat[layout.sigma_t],
            t_star,
            u,
        }
    }

    /// Checks every support constraint, including the anchoring bounds.
    pub fn check_support(&self, bounds: &[TimeBounds]) -> Result<()> {
        let bad = |what: String| Err(Error::Model(format!("parameter outside support: {what}")));
        for (k, m) in self.markers.iter().enumerate() {
            if m.beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                return bad(format!("beta of marker {}", k + 1));
            }
            if m.gamma.iter().any(|g| !g.is_finite()) {
                return bad(format!("gamma of marker {}", k + 1));
            }
            if !(m.sigma_eps > 0.0 && m.sigma_eps.is_finite()) {
                return bad(format!("sigma_eps of marker {}", k + 1));
            }
            if m.sd_u.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return bad(format!("sd_u of marker {}", k + 1));
            }
            if let Some(r) = m.cor_u {
                if !(r > -1.0 && r < 1.0) {
                    return bad(format!("cor_u of marker {}", k + 1));
                }
            }
        }
        if !self.mu_t_eps.is_finite() || !(self.sigma_t_eps > 0.0 && self.sigma_t_eps.is_finite()) {
            return bad("latent-time population parameters".into());
        }
        for (i, (t, b)) in self.t_star.iter().zip(bounds).enumerate() {
            if !b.contains(*t) {
                return bad(format!("T_star[{}] = {t} vs {b:?}", i + 1));
            }
        }
        if self.u.iter().flatten().flatten().any(|x| !x.is_finite()) {
            return bad("random effects".into());
        }
        Ok(())
    }
}

/// One subject's random effects for one marker in whitened form.
///
/// With `u0 = sd0 a` and `u1 = sd1 (rho a + c eta)`, `c = sqrt(1 - rho^2)`,
/// the stored coordinates are `v0 = sd0^w0 a` and
/// `v1 = w1 sd1 rho a + (sd1 c)^w1 eta`: whitened at `w = 0`, the random
/// effect itself at `w = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct ReCoords {
    pub a: f64,
    pub eta: f64,
    pub u: [f64; 2],
}

fn weights(centering: [u8; 2]) -> [f64; 2] {
    centering.map(|w| f64::from(w) / f64::from(CENTERING_STEPS))
}

impl ReCoords {
    /// `shift` is the layout's shear shift; the intercept coordinate is
    /// unsheared first.
    pub fn decode(v: [f64; 2], m: &MarkerParams, centering: [u8; 2], shift: f64) -> Self {
        let w = weights(centering);
        let v = [v[0] - shift * v[1], v[1]];
        let a = v[0] * m.sd_u[0].powf(-w[0]);
        let u0 = m.sd_u[0] * a;
        match m.cor_u {
            Some(rho) => {
                let c = (1.0 - rho * rho).sqrt();
                let sd1 = m.sd_u[1];
                let eta = (v[1] - w[1] * sd1 * rho * a) * (sd1 * c).powf(-w[1]);
                ReCoords {
                    a,
                    eta,
                    u: [u0, sd1 * (rho * a + c * eta)],
                }
            }
            None => ReCoords {
                a,
                eta: 0.0,
                u: [u0, 0.0],
            },
        }
    }

    pub fn encode(u: [f64; 2], m: &MarkerParams, centering: [u8; 2], shift: f64) -> [f64; 2] {
        let w = weights(centering);
        let a = u[0] / m.sd_u[0];
        let v0 = a * m.sd_u[0].powf(w[0]);
        let v1 = match m.cor_u {
            Some(rho) => {
                let c = (1.0 - rho * rho).sqrt();
                let eta = (u[1] / m.sd_u[1] - rho * a) / c;
                w[1] * m.sd_u[1] * rho * a + eta * (m.sd_u[1] * c).powf(w[1])
            }
            None => 0.0,
        };
        [v0 + shift * v1, v1]
    }
}

/// Maps an unconstrained vector to parameters.
///
/// Positive scalars use `exp`, correlations `tanh`, `T*` the bound-specific
/// bijection. Random effects are `u = L (a, eta)` with `L` the Cholesky factor
/// of `B_k`; see [`ReCoords`] for how the layout's centring flags pick the
/// stored coordinates.
pub fn constrain(z: &[f64], layout: &Layout, bounds: &[TimeBounds]) -> ParameterVector {
    let markers: Vec<MarkerParams> = layout
        .markers
        .iter()
        .map(|s| MarkerParams {
            beta: [z[s.beta].exp(), z[s.beta + 1].exp()],
            gamma: z[s.gamma..s.gamma + s.n_gamma].to_vec(),
            sigma_eps: z[s.sigma_eps].exp(),
            sd_u: z[s.sd_u..s.sd_u + s.n_re].iter().map(|v| v.exp()).collect(),
            cor_u: s.cor_u.map(|c| z[c].tanh()),
        })
        .collect();
    let mut t_star = Vec::with_capacity(layout.n_subjects);
    let mut u = Vec::with_capacity(layout.n_subjects);
    for (i, b) in bounds.iter().enumerate().take(layout.n_subjects) {
        let ts = b.constrain(z[layout.t_star(i)]).0;
        t_star.push(ts);
        let ui = markers
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let at = layout.re(i, k);
                let v1 = if m.cor_u.is_some() { z[at + 1] } else { 0.0 };
                let shift = layout.shear_shift(i, k, ts);
                ReCoords::decode([z[at], v1], m, layout.centering(i, k), shift).u
            })
            .collect();
        u.push(ui);
    }
    ParameterVector {
        markers,
        mu_t_eps: z[layout.mu_t],
        sigma_t_eps: z[layout.sigma_t].exp(),
        t_star,
        u,
    }
}

/// Inverse of [`constrain`]; fails when `theta` is outside the support.
pub fn unconstrain(
    theta: &ParameterVector,
    layout: &Layout,
    bounds: &[TimeBounds],
) -> Result<Vec<f64>> {
    theta.check_support(bounds)?;
    let mut z = vec![0.0; layout.dim()];
    for (m, s) in theta.markers.iter().zip(&layout.markers) {
        z[s.beta] = m.beta[0].ln();
        z[s.beta + 1] = m.beta[1].ln();
        z[s.gamma..s.gamma + s.n_gamma].copy_from_slice(&m.gamma);
        z[s.sigma_eps] = m.sigma_eps.ln();
        for d in 0..s.n_re {
            z[s.sd_u + d] = m.sd_u[d].ln();
        }
        if let (Some(c), Some(r)) = (s.cor_u, m.cor_u) {
            z[c] = r.atanh();
        }
    }
    z[layout.mu_t] = theta.mu_t_eps;
    z[layout.sigma_t] = theta.sigma_t_eps.ln();
    for i in 0..layout.n_subjects {
        z[layout.t_star(i)] = bounds[i].unconstrain(theta.t_star[i])?;
        for (k, m) in theta.markers.iter().enumerate() {
            let at = layout.re(i, k);
            let v = ReCoords::encode(
                theta.u[i][k],
                m,
                layout.centering(i, k),
                layout.shear_shift(i, k, theta.t_star[i]),
            );
            z[at] = v[0];
            if m.cor_u.is_some() {
                z[at + 1] = v[1];
            }
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bounds_from_diagnosis() {
        let spec = ModelSpec::new(vec![], 0);
        assert_eq!(
            TimeBounds::for_subject(&Diagnosis::Diagnosed { t_diag: 3.0 }, &spec),
            TimeBounds::Interval(1.5, 4.5)
        );
        assert_eq!(
            TimeBounds::for_subject(&Diagnosis::CensoredFree { t_last: 4.0 }, &spec),
            TimeBounds::Lower(2.5)
        );
        let free = ModelSpec {
            mode: AnchorMode::NonAnchored,
            ..spec
        };
        assert_eq!(
            TimeBounds::for_subject(&Diagnosis::Diagnosed { t_diag: 3.0 }, &free),
            TimeBounds::Free
        );
    }

    #[test]
    fn interval_log_jacobian_matches_derivative() {
        let b = TimeBounds::Interval(-0.5, 2.5);
        for &z in &[-30.0f64, -3.0, 0.0, 0.7, 12.0] {
            let (_, d, lj, dlj) = b.constrain(z);
            assert!((lj - d.ln()).abs() < 1e-10, "z={z}");
            let h = 1e-5;
            let fd = (b.constrain(z + h).2 - b.constrain(z - h).2) / (2.0 * h);
            assert!((fd - dlj).abs() < 1e-7);
        }
    }

    #[test]
    fn sech2_identity() {
        for &z in &[-5.0f64, -0.3, 0.0, 1.1, 20.0] {
            let direct = (1.0 - z.tanh().powi(2)).ln();
            if direct.is_finite() && z.abs() < 10.0 {
                assert!((ln_sech2(z) - direct).abs() < 1e-12);
            }
        }
        assert!(ln_sech2(400.0).is_finite());
    }

    proptest! {
        #[test]
        fn time_bijection_round_trips(z in -15.0f64..15.0, a in -1.4f64..6.0, w in 0.5f64..6.0) {
            for b in [TimeBounds::Free, TimeBounds::Lower(a), TimeBounds::Interval(a, a + w)] {
                let (t, ..) = b.constrain(z);
                prop_assume!(b.contains(t));
                let back = b.unconstrain(t).unwrap();
                let (t2, ..) = b.constrain(back);
                prop_assert!((t2 - t).abs() <= 1e-12 * t.abs().max(1.0));
            }
        }
    }
}
