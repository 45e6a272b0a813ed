use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::target::LogDensity;

const MAX_DELTA_H: f64 = 1000.0;

/// Position with its log-density and gradient.
#[derive(Clone, Debug)]
pub struct Point {
    pub q: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Phase {
    q: Vec<f64>,
    p: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TransitionInfo {
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
    pub n_leapfrog: usize,
}

pub struct Nuts<'a, M: LogDensity + ?Sized> {
    pub model: &'a M,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub max_depth: usize,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

/// Generalized U-turn check against `rho`, or against `rho + extra` when given.
fn no_u_turn(
    p_sharp_minus: &[f64],
    p_sharp_plus: &[f64],
    rho: &[f64],
    extra: Option<&[f64]>,
) -> bool {
    let (mut a, mut b) = (dot(p_sharp_plus, rho), dot(p_sharp_minus, rho));
    if let Some(e) = extra {
        a += dot(p_sharp_plus, e);
        b += dot(p_sharp_minus, e);
    }
    a > 0.0 && b > 0.0
}

/// Buffers for one level of the tree recursion, reused across doublings.
struct Level {
    p_sharp_init_end: Vec<f64>,
    p_init_end: Vec<f64>,
    rho_init: Vec<f64>,
    p_sharp_final_beg: Vec<f64>,
    p_final_beg: Vec<f64>,
    rho_final: Vec<f64>,
    propose_final: Point,
}

impl Level {
    fn new(dim: usize) -> Self {
        Level {
            p_sharp_init_end: vec![0.0; dim],
            p_init_end: vec![0.0; dim],
            rho_init: vec![0.0; dim],
            p_sharp_final_beg: vec![0.0; dim],
            p_final_beg: vec![0.0; dim],
            rho_final: vec![0.0; dim],
            propose_final: Point {
                q: vec![0.0; dim],
                logp: 0.0,
                grad: vec![0.0; dim],
            },
        }
    }
}

/// Book-keeping shared across one trajectory.
struct Tree {
    h0: f64,
    n_leapfrog: usize,
    sum_metro: f64,
    divergent: bool,
}

impl<M: LogDensity + ?Sized> Nuts<'_, M> {
    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p
            .iter()
            .zip(&self.inv_metric)
            .map(|(p, m)| p * p * m)
            .sum::<f64>()
    }

    fn hamiltonian(&self, z: &Phase) -> f64 {
        let h = -z.logp + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn sample_momentum(&self, rng: &mut ChaCha8Rng, p: &mut [f64]) {
        for (pi, m) in p.iter_mut().zip(&self.inv_metric) {
            let z: f64 = rng.sample(StandardNormal);
            *pi = z / m.sqrt();
        }
    }

    /// One leapfrog step; `false` when the density could not be evaluated.
    fn leapfrog(&self, z: &mut Phase, eps: f64) -> bool {
        let half = 0.5 * eps;
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += half * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        match self.model.logp_grad(&z.q, &mut z.grad) {
            Ok(lp) => {
                z.logp = lp;
                for (p, g) in z.p.iter_mut().zip(&z.grad) {
                    *p += half * g;
                }
                true
            }
            Err(_) => {
                z.logp = f64::NEG_INFINITY;
                false
            }
        }
    }

    /// Doubles the step size until the one-step acceptance crosses 0.8.
    pub fn init_step_size(&mut self, start: &Point, rng: &mut ChaCha8Rng) {
        let log_target = 0.8f64.ln();
        let dim = start.q.len();
        let mut z = Phase {
            q: start.q.clone(),
            p: vec![0.0; dim],
            logp: start.logp,
            grad: start.grad.clone(),
        };
        let mut direction = 0i32;
        for _ in 0..100 {
            z.q.copy_from_slice(&start.q);
            z.grad.copy_from_slice(&start.grad);
            z.logp = start.logp;
            self.sample_momentum(rng, &mut z.p);
            let h0 = self.hamiltonian(&z);
            let ok = self.leapfrog(&mut z, self.step_size);
            let h = if ok {
                self.hamiltonian(&z)
            } else {
                f64::INFINITY
            };
            let delta_h = h0 - h;
            if direction == 0 {
                direction = if delta_h > log_target { 1 } else { -1 };
            }
            if direction == 1 && !(delta_h > log_target) {
                break;
            }
            if direction == -1 && !(delta_h < log_target) {
                break;
            }
            self.step_size *= if direction == 1 { 2.0 } else { 0.5 };
            if !(self.step_size > 1e-12 && self.step_size < 1e7) {
                self.step_size = self.step_size.clamp(1e-12, 1e7);
                break;
            }
        }
    }

    /// One NUTS transition from `current`, which is replaced by the new state.
    pub fn transition(&self, current: &mut Point, rng: &mut ChaCha8Rng) -> TransitionInfo {
        let dim = current.q.len();
        let mut z0 = Phase {
            q: current.q.clone(),
            p: vec![0.0; dim],
            logp: current.logp,
            grad: current.grad.clone(),
        };
        self.sample_momentum(rng, &mut z0.p);
        let mut tree = Tree {
            h0: self.hamiltonian(&z0),
            n_leapfrog: 0,
            sum_metro: 0.0,
            divergent: false,
        };

        let mut z_fwd = z0.clone();
        let mut z_bck = z0.clone();
        let mut sample = Point {
            q: z0.q.clone(),
            logp: z0.logp,
            grad: z0.grad.clone(),
        };
        let mut propose = sample.clone();
        let mut levels: Vec<Level> = (0..self.max_depth).map(|_| Level::new(dim)).collect();

        let p0_sharp = self.p_sharp(&z0.p);
        let mut p_fwd_fwd = z0.p.clone();
        let mut p_sharp_fwd_fwd = p0_sharp.clone();
        let mut p_fwd_bck = z0.p.clone();
        let mut p_sharp_fwd_bck = p0_sharp.clone();
        let mut p_bck_fwd = z0.p.clone();
        let mut p_sharp_bck_fwd = p0_sharp.clone();
        let mut p_bck_bck = z0.p.clone();
        let mut p_sharp_bck_bck = p0_sharp;
        let mut rho = z0.p.clone();
        let mut rho_fwd = vec![0.0; dim];
        let mut rho_bck = vec![0.0; dim];
        let mut log_sum_weight = 0.0;
        let mut depth = 0;

        while depth < self.max_depth {
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid = if rng.random::<f64>() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                rho_fwd.fill(0.0);
                p_bck_fwd.copy_from_slice(&p_fwd_bck);
                p_sharp_bck_fwd.copy_from_slice(&p_sharp_fwd_bck);
                self.build_tree(
                    depth,
                    &mut levels,
                    &mut z_fwd,
                    &mut propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    1.0,
                    &mut lsw_subtree,
                    &mut tree,
                    rng,
                )
            } else {
                rho_fwd.copy_from_slice(&rho);
                rho_bck.fill(0.0);
                p_fwd_bck.copy_from_slice(&p_bck_fwd);
                p_sharp_fwd_bck.copy_from_slice(&p_sharp_bck_fwd);
                self.build_tree(
                    depth,
                    &mut levels,
                    &mut z_bck,
                    &mut propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    -1.0,
                    &mut lsw_subtree,
                    &mut tree,
                    rng,
                )
            };
            if !valid {
                break;
            }
            depth += 1;
            if lsw_subtree > log_sum_weight {
                std::mem::swap(&mut sample, &mut propose);
            } else {
                let accept = (lsw_subtree - log_sum_weight).exp();
                if rng.random::<f64>() < accept {
                    std::mem::swap(&mut sample, &mut propose);
                }
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

            for ((r, b), f) in rho.iter_mut().zip(&rho_bck).zip(&rho_fwd) {
                *r = b + f;
            }
            let persist = no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho, None)
                && no_u_turn(
                    &p_sharp_bck_bck,
                    &p_sharp_fwd_bck,
                    &rho_bck,
                    Some(&p_fwd_bck),
                )
                && no_u_turn(
                    &p_sharp_bck_fwd,
                    &p_sharp_fwd_fwd,
                    &rho_fwd,
                    Some(&p_bck_fwd),
                );
            if !persist {
                break;
            }
        }

        *current = sample;
        TransitionInfo {
            accept_stat: if tree.n_leapfrog > 0 {
                tree.sum_metro / tree.n_leapfrog as f64
            } else {
                0.0
            },
            divergent: tree.divergent,
            depth,
            n_leapfrog: tree.n_leapfrog,
        }
    }

    /// Extends the trajectory by `2^depth` leapfrog steps; `rho` must start at zero.
    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &self,
        depth: usize,
        levels: &mut [Level],
        z: &mut Phase,
        propose: &mut Point,
        p_sharp_beg: &mut [f64],
        p_sharp_end: &mut [f64],
        rho: &mut [f64],
        p_beg: &mut [f64],
        p_end: &mut [f64],
        sign: f64,
        log_sum_weight: &mut f64,
        tree: &mut Tree,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        if depth == 0 {
            let ok = self.leapfrog(z, sign * self.step_size);
            tree.n_leapfrog += 1;
            let h = if ok {
                self.hamiltonian(z)
            } else {
                f64::INFINITY
            };
            if !ok || h - tree.h0 > MAX_DELTA_H {
                tree.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, tree.h0 - h);
            tree.sum_metro += if tree.h0 - h > 0.0 {
                1.0
            } else {
                (tree.h0 - h).exp()
            };
            propose.q.copy_from_slice(&z.q);
            propose.logp = z.logp;
            propose.grad.copy_from_slice(&z.grad);
            for (((sb, se), r), ((pb, pe), (p, m))) in p_sharp_beg
                .iter_mut()
                .zip(p_sharp_end.iter_mut())
                .zip(rho.iter_mut())
                .zip(
                    p_beg
                        .iter_mut()
                        .zip(p_end.iter_mut())
                        .zip(z.p.iter().zip(&self.inv_metric)),
                )
            {
                *sb = p * m;
                *se = *sb;
                *r += p;
                *pb = *p;
                *pe = *p;
            }
            return !tree.divergent;
        }

        let (below, here) = levels.split_at_mut(depth);
        let lv = &mut here[0];
        lv.rho_init.fill(0.0);
        let mut lsw_init = f64::NEG_INFINITY;
        if !self.build_tree(
            depth - 1,
            below,
            z,
            propose,
            p_sharp_beg,
            &mut lv.p_sharp_init_end,
            &mut lv.rho_init,
            p_beg,
            &mut lv.p_init_end,
            sign,
            &mut lsw_init,
            tree,
            rng,
        ) {
            return false;
        }

        lv.rho_final.fill(0.0);
        let mut lsw_final = f64::NEG_INFINITY;
        if !self.build_tree(
            depth - 1,
            below,
            z,
            &mut lv.propose_final,
            &mut lv.p_sharp_final_beg,
            p_sharp_end,
            &mut lv.rho_final,
            &mut lv.p_final_beg,
            p_end,
            sign,
            &mut lsw_final,
            tree,
            rng,
        ) {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree {
            std::mem::swap(propose, &mut lv.propose_final);
        } else {
            let accept = (lsw_final - lsw_subtree).exp();
            if rng.random::<f64>() < accept {
                std::mem::swap(propose, &mut lv.propose_final);
            }
        }

        let persist_ext = no_u_turn(
            p_sharp_beg,
            &lv.p_sharp_final_beg,
            &lv.rho_init,
            Some(&lv.p_final_beg),
        ) && no_u_turn(
            &lv.p_sharp_init_end,
            p_sharp_end,
            &lv.rho_final,
            Some(&lv.p_init_end),
        );
        // rho_init becomes the subtree total
        add_into(&mut lv.rho_init, &lv.rho_final);
        add_into(rho, &lv.rho_init);
        no_u_turn(p_sharp_beg, p_sharp_end, &lv.rho_init, None) && persist_ext
    }
}
