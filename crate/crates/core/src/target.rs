//! Interface between log-densities and the sampler, plus two reference targets.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogpError {
    /// The point maps outside the parameter support.
    OutOfSupport,
    /// The value or gradient is NaN or infinite.
    NonFinite,
}

/// A differentiable log-density on an unconstrained real space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log-density.
    fn logp_grad(&self, position: &[f64], grad: &mut [f64]) -> Result<f64, LogpError>;

    fn param_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("x[{i}]")).collect()
    }

    /// Maps an unconstrained position to the reported (constrained) values.
    fn constrain(&self, position: &[f64]) -> Vec<f64> {
        position.to_vec()
    }

    /// Starting point for a chain; uniform on `[-2, 2]` per coordinate by default.
    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dim())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect()
    }
}

/// Independent standard normals.
#[derive(Clone, Debug)]
pub struct StdGaussian {
    pub dim: usize,
}

impl LogDensity for StdGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, LogpError> {
        let mut lp = 0.0;
        for (g, &xi) in grad.iter_mut().zip(x) {
            *g = -xi;
            lp -= 0.5 * xi * xi;
        }
        Ok(lp)
    }
}

/// Neal's funnel: `v ~ N(0, 3^2)`, `x_j | v ~ N(0, e^v)` for `j = 1..dim-1`.
/// Coordinate 0 is `v`.
#[derive(Clone, Debug)]
pub struct NealFunnel {
    pub dim: usize,
}

impl LogDensity for NealFunnel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, LogpError> {
        let v = x[0];
        let n = (self.dim - 1) as f64;
        let inv = (-v).exp();
        let mut ss = 0.0;
        for j in 1..self.dim {
            ss += x[j] * x[j];
            grad[j] = -x[j] * inv;
        }
        let lp = -v * v / 18.0 - 0.5 * n * v - 0.5 * ss * inv;
        grad[0] = -v / 9.0 - 0.5 * n + 0.5 * ss * inv;
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            Ok(lp)
        } else {
            Err(LogpError::NonFinite)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(target: &dyn LogDensity, x: &[f64]) {
        let mut g = vec![0.0; x.len()];
        target.logp_grad(x, &mut g).unwrap();
        let mut scratch = vec![0.0; x.len()];
        for j in 0..x.len() {
            let h = 1e-6;
            let mut xp = x.to_vec();
            xp[j] += h;
            let fp = target.logp_grad(&xp, &mut scratch).unwrap();
            xp[j] -= 2.0 * h;
            let fm = target.logp_grad(&xp, &mut scratch).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-6 * g[j].abs().max(1.0), "coord {j}");
        }
    }

    #[test]
    fn funnel_gradient() {
        fd_check(&NealFunnel { dim: 4 }, &[0.3, -1.0, 0.5, 2.0]);
        fd_check(&StdGaussian { dim: 3 }, &[0.3, -1.0, 0.5]);
    }
}
