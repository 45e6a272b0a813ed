use super::ModelSpec;

/// Positions of one marker's global parameters in the flat vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkerSlots {
    pub beta: usize,
    pub gamma: usize,
    pub n_gamma: usize,
    pub sigma_eps: usize,
    pub sd_u: usize,
    pub n_re: usize,
    pub cor_u: Option<usize>,
}

/// Flat parameter ordering shared by the unconstrained and constrained vectors:
/// all global parameters first, then one contiguous block per subject holding
/// `T*_i` followed by its random effects, marker by marker.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub markers: Vec<MarkerSlots>,
    pub mu_t: usize,
    pub sigma_t: usize,
    pub n_global: usize,
    pub n_subjects: usize,
    /// Length of one subject block.
    pub block: usize,
    re_offset: Vec<usize>,
    centering: Vec<[u8; 2]>,
    shear: Vec<Option<f64>>,
}

/// Centring weights are stored in units of `1 / CENTERING_STEPS`.
pub const CENTERING_STEPS: u8 = 4;

impl Layout {
    pub fn new(spec: &ModelSpec, n_subjects: usize) -> Self {
        let mut next = 0;
        let mut markers = Vec::with_capacity(spec.n_markers());
        for k in 0..spec.n_markers() {
            let n_gamma = spec.n_gamma(k);
            let n_re = spec.n_random_effects(k);
            let beta = next;
            let gamma = beta + 2;
            let sigma_eps = gamma + n_gamma;
            let sd_u = sigma_eps + 1;
            next = sd_u + n_re;
            let cor_u = (n_re == 2).then(|| {
                next += 1;
                next - 1
            });
            markers.push(MarkerSlots {
                beta,
                gamma,
                n_gamma,
                sigma_eps,
                sd_u,
                n_re,
                cor_u,
            });
        }
        let mu_t = next;
        let sigma_t = next + 1;
        let n_global = next + 2;
        let mut re_offset = Vec::with_capacity(markers.len());
        let mut off = 1;
        for m in &markers {
            re_offset.push(off);
            off += m.n_re;
        }
        Layout {
            markers,
            mu_t,
            sigma_t,
            n_global,
            n_subjects,
            block: off,
            re_offset,
            centering: vec![[0; 2]; n_subjects * spec.n_markers()],
            shear: vec![None; n_subjects * spec.n_markers()],
        }
    }

    /// Sets, per subject and marker, how far the intercept and slope
    /// coordinates are centred: 0 stores whitened values, `CENTERING_STEPS`
    /// stores the random effects themselves.
    pub fn with_centering(mut self, weights: Vec<[u8; 2]>) -> Self {
        assert_eq!(
            weights.len(),
            self.centering.len(),
            "one weight pair per subject and marker"
        );
        assert!(weights.iter().flatten().all(|w| *w <= CENTERING_STEPS));
        self.centering = weights;
        self
    }

    /// Centring weights of `u_ik`, in units of `1 / CENTERING_STEPS`.
    pub fn centering(&self, i: usize, k: usize) -> [u8; 2] {
        self.centering[i * self.markers.len() + k]
    }

    /// Stores the intercept coordinate of a random-slope marker as the
    /// subject's level at calendar time `t_ref` rather than at `T*`:
    /// `v0' = v0 + (t_ref - T*) v1`. Entries for markers without a random
    /// slope must be `None`.
    pub fn with_shear(mut self, t_ref: Vec<Option<f64>>) -> Self {
        assert_eq!(
            t_ref.len(),
            self.shear.len(),
            "one entry per subject and marker"
        );
        let k_n = self.markers.len();
        assert!(t_ref
            .iter()
            .enumerate()
            .all(|(j, t)| t.is_none_or(|t| t.is_finite() && self.markers[j % k_n].n_re == 2)));
        self.shear = t_ref;
        self
    }

    /// Reference time of the sheared intercept of `u_ik`, if any.
    pub fn shear(&self, i: usize, k: usize) -> Option<f64> {
        self.shear[i * self.markers.len() + k]
    }

    /// Shift `t_ref - T*` of the sheared intercept, 0 when unsheared.
    pub fn shear_shift(&self, i: usize, k: usize, t_star: f64) -> f64 {
        self.shear(i, k).map_or(0.0, |t| t - t_star)
    }

    pub fn dim(&self) -> usize {
        self.n_global + self.n_subjects * self.block
    }

    pub fn t_star(&self, i: usize) -> usize {
        self.n_global + i * self.block
    }

    /// Offset of marker `k`'s random effects inside a subject block.
    pub fn re_offset(&self, k: usize) -> usize {
        self.re_offset[k]
    }

    pub fn re(&self, i: usize, k: usize) -> usize {
        self.t_star(i) + self.re_offset[k]
    }

    /// Parameter names with one-based indices.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.dim()];
        for (k, m) in self.markers.iter().enumerate() {
            let k1 = k + 1;
            for d in 0..2 {
                names[m.beta + d] = format!("beta[{k1},{}]", d + 1);
            }
            for c in 0..m.n_gamma {
                names[m.gamma + c] = format!("gamma[{k1},{}]", c + 1);
            }
            names[m.sigma_eps] = format!("sigma_eps[{k1}]");
            for d in 0..m.n_re {
                names[m.sd_u + d] = format!("sd_u[{k1},{}]", d + 1);
            }
            if let Some(c) = m.cor_u {
                names[c] = format!("cor_u[{k1}]");
            }
        }
        names[self.mu_t] = "mu_T_eps".into();
        names[self.sigma_t] = "sigma_T_eps".into();
        for i in 0..self.n_subjects {
            names[self.t_star(i)] = format!("T_star[{}]", i + 1);
            for (k, m) in self.markers.iter().enumerate() {
                for d in 0..m.n_re {
                    names[self.re(i, k) + d] = format!("u[{},{},{}]", i + 1, k + 1, d + 1);
                }
            }
        }
        names
    }
}
