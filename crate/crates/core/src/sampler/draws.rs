use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainStats {
    /// Divergent transitions after warm-up.
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub step_size: f64,
    pub mean_accept_stat: f64,
    pub mean_tree_depth: f64,
    pub n_leapfrog: usize,
    pub warmup_leapfrog: usize,
}

/// Retained draws on the constrained scale, one row per draw.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub n_chains: usize,
    /// Zero-based chain of each row.
    pub chain: Vec<usize>,
    /// One-based post-warm-up iteration of each row.
    pub iter: Vec<usize>,
    /// Row-major `n_draws x n_params`.
    pub values: Vec<f64>,
    pub stats: Vec<ChainStats>,
}

impl PosteriorDraws {
    pub fn new(names: Vec<String>, n_chains: usize) -> Self {
        PosteriorDraws {
            names,
            n_chains,
            chain: Vec::new(),
            iter: Vec::new(),
            values: Vec::new(),
            stats: vec![ChainStats::default(); n_chains],
        }
    }

    pub(crate) fn push_chain(
        &mut self,
        c: usize,
        iters: &[usize],
        values: Vec<f64>,
        stats: ChainStats,
    ) {
        self.chain.extend(std::iter::repeat_n(c, iters.len()));
        self.iter.extend_from_slice(iters);
        self.values.extend(values);
        self.stats[c] = stats;
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_draws(&self) -> usize {
        self.chain.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let p = self.n_params();
        &self.values[r * p..(r + 1) * p]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_draws())
            .map(|r| self.values[r * self.n_params() + j])
            .collect()
    }

    /// Column `j` split by chain, in chain order.
    pub fn by_chain(&self, j: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains];
        let p = self.n_params();
        for r in 0..self.n_draws() {
            out[self.chain[r]].push(self.values[r * p + j]);
        }
        out
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let p = self.n_params();
        let mut m = vec![0.0; p];
        for r in 0..self.n_draws() {
            for (a, v) in m.iter_mut().zip(self.row(r)) {
                *a += v;
            }
        }
        let n = self.n_draws().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    pub fn total_divergences(&self) -> usize {
        self.stats.iter().map(|s| s.divergences).sum()
    }

    /// Writes `chain,iter,<params>` with one-based chain numbers.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["chain".to_string(), "iter".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(self.n_params() + 2);
        for r in 0..self.n_draws() {
            rec.clear();
            rec.push((self.chain[r] + 1).to_string());
            rec.push(self.iter[r].to_string());
            rec.extend(self.row(r).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a file written by [`write_csv`](Self::write_csv); chain statistics are not stored there.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(f);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "chain" || &headers[1] != "iter" {
            return Err(Error::Parse {
                file,
                row: 1,
                msg: "expected leading columns chain,iter".into(),
            });
        }
        let names: Vec<String> = headers.iter().skip(2).map(String::from).collect();
        let mut chain = Vec::new();
        let mut iter = Vec::new();
        let mut values = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = n + 2;
            let bad = |msg: String| Error::Parse {
                file: file.clone(),
                row,
                msg,
            };
            let c: usize = rec[0]
                .parse()
                .map_err(|_| bad(format!("bad chain '{}'", &rec[0])))?;
            if c == 0 {
                return Err(bad("chain numbers start at 1".into()));
            }
            chain.push(c - 1);
            iter.push(
                rec[1]
                    .parse()
                    .map_err(|_| bad(format!("bad iter '{}'", &rec[1])))?,
            );
            for v in rec.iter().skip(2) {
                values.push(
                    v.parse::<f64>()
                        .map_err(|_| bad(format!("bad value '{v}'")))?,
                );
            }
        }
        let n_chains = chain.iter().max().map_or(0, |m| m + 1);
        Ok(PosteriorDraws {
            names,
            n_chains,
            chain,
            iter,
            values,
            stats: vec![ChainStats::default(); n_chains],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut d = PosteriorDraws::new(vec!["a".into(), "b[1,2]".into()], 2);
        d.push_chain(
            0,
            &[1, 2],
            vec![0.1, 1.0 / 3.0, -2.5e-300, 7.0],
            ChainStats::default(),
        );
        d.push_chain(
            1,
            &[1, 2],
            vec![1e10, -0.0, 0.1 + 0.2, 2.0f64.sqrt()],
            ChainStats::default(),
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("draws.csv");
        d.write_csv(&p).unwrap();
        let back = PosteriorDraws::read_csv(&p).unwrap();
        assert_eq!(back.names, d.names);
        assert_eq!(back.chain, d.chain);
        assert!(back
            .values
            .iter()
            .zip(&d.values)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(
            back.by_chain(1),
            vec![vec![1.0 / 3.0, 7.0], vec![-0.0, 2.0f64.sqrt()]]
        );
    }
}
