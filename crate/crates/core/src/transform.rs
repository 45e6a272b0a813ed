//! Severity (percentile) scale and normalized Gaussian scale.
//!
//! Each marker gets a weighted empirical CDF fitted on all of its
//! observations, every observation weighted by its subject's clinical-stage
//! weight. Observed points map to the middle of their own mass block, so the
//! extremes never reach 0 or 1; percentiles are then clipped to
//! `[delta, 1 - delta]` with `delta = 1 / (4 N_k)` and sent through the
//! standard normal quantile function.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::CohortData;
use crate::error::{Error, Result};
use crate::normal;

/// Weighted step CDF over the distinct support points of a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedEcdf {
    support: Vec<f64>,
    /// Running (unnormalized) weight sum at each support point, inclusive.
    cum: Vec<f64>,
}

impl WeightedEcdf {
    pub fn fit(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::Transform(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Transform(format!("weight {w} is not positive")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Transform("non-finite value".into()));
        }
        // equal weights are counted as 1 so the result matches the unweighted ECDF bit for bit
        let equal = weights.iter().all(|w| *w == weights[0]);
        let mut pairs: Vec<(f64, f64)> = values
            .iter()
            .copied()
            .zip(weights.iter().map(|&w| if equal { 1.0 } else { w }))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::new();
        let mut cum: Vec<f64> = Vec::new();
        let mut running = 0.0;
        for (v, w) in pairs {
            running += w;
            if support.last() == Some(&v) {
                *cum.last_mut().unwrap() = running;
            } else {
                support.push(v);
                cum.push(running);
            }
        }
        if support.len() < 2 {
            return Err(Error::Transform(
                "degenerate marker: fewer than two distinct values".into(),
            ));
        }
        Ok(WeightedEcdf { support, cum })
    }

    /// Rebuilds from support points and running weight sums (as exported).
    pub fn from_parts(support: Vec<f64>, cum: Vec<f64>) -> Result<Self> {
        if support.len() != cum.len() || support.len() < 2 {
            return Err(Error::Transform(
                "ECDF needs >= 2 aligned support points".into(),
            ));
        }
        let ok = support.windows(2).all(|w| w[0] < w[1])
            && cum.windows(2).all(|w| w[0] < w[1])
            && cum[0] > 0.0
            && cum.iter().chain(&support).all(|x| x.is_finite());
        if !ok {
            return Err(Error::Transform(
                "ECDF support and cumulative weights must be finite and strictly increasing".into(),
            ));
        }
        Ok(WeightedEcdf { support, cum })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// Running weight sums; the last entry is the total weight.
    pub fn running_weights(&self) -> &[f64] {
        &self.cum
    }

    pub fn total_weight(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Normalized cumulative weights, ending at 1.
    pub fn cumulative(&self) -> Vec<f64> {
        let total = self.total_weight();
        self.cum.iter().map(|c| c / total).collect()
    }

    /// Right-continuous `F(y) = sum_{v <= y} w / sum w`.
    pub fn cdf(&self, y: f64) -> f64 {
        let n_le = self.support.partition_point(|&v| v <= y);
        if n_le == 0 {
            0.0
        } else {
            self.cum[n_le - 1] / self.total_weight()
        }
    }

    /// `F(y-) + mass(y) / 2` at support points, `F(y)` elsewhere.
    pub fn midpoint(&self, y: f64) -> f64 {
        let j = self.support.partition_point(|&v| v < y);
        if j < self.support.len() && self.support[j] == y {
            let below = if j == 0 { 0.0 } else { self.cum[j - 1] };
            (below + 0.5 * (self.cum[j] - below)) / self.total_weight()
        } else if j == 0 {
            0.0
        } else {
            self.cum[j - 1] / self.total_weight()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkerTransform {
    pub ecdf: WeightedEcdf,
    pub flip: bool,
    pub delta: f64,
}

impl MarkerTransform {
    pub fn percentile(&self, raw: f64) -> f64 {
        let v = if self.flip { -raw } else { raw };
        self.ecdf.midpoint(v).clamp(self.delta, 1.0 - self.delta)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformSpec {
    pub markers: Vec<MarkerTransform>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedObservation {
    pub subject_id: String,
    pub marker: usize,
    pub t: f64,
    pub percentile: f64,
    pub normalized: f64,
    pub is_first_visit: bool,
}

pub fn fit_weighted_ecdf(values: &[f64], weights: &[f64]) -> Result<WeightedEcdf> {
    WeightedEcdf::fit(values, weights)
}

fn marker_weights(data: &CohortData) -> Vec<(Vec<f64>, Vec<f64>)> {
    let weight_of: BTreeMap<&str, f64> = data
        .subjects
        .iter()
        .map(|s| (s.id.as_str(), s.weight))
        .collect();
    let mut out = vec![(Vec::new(), Vec::new()); data.n_markers()];
    for o in &data.observations {
        let v = if data.marker_flip[o.marker] {
            -o.value
        } else {
            o.value
        };
        out[o.marker].0.push(v);
        out[o.marker].1.push(weight_of[o.subject_id.as_str()]);
    }
    out
}

/// Fits one weighted ECDF per marker on the flipped raw values.
pub fn fit_transform(data: &CohortData) -> Result<TransformSpec> {
    let markers = marker_weights(data)
        .into_iter()
        .enumerate()
        .map(|(k, (values, weights))| {
            let n = values.len();
            let ecdf = WeightedEcdf::fit(&values, &weights)
                .map_err(|e| Error::Transform(format!("marker {}: {e}", data.marker_names[k])))?;
            Ok(MarkerTransform {
                ecdf,
                flip: data.marker_flip[k],
                delta: 1.0 / (4.0 * n as f64),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransformSpec { markers })
}

pub fn normalize_cohort(
    data: &CohortData,
    spec: &TransformSpec,
) -> Result<Vec<NormalizedObservation>> {
    data.observations
        .iter()
        .map(|o| {
            let mt = spec.markers.get(o.marker).ok_or_else(|| {
                Error::Transform(format!("marker {} absent from the transform", o.marker + 1))
            })?;
            let percentile = mt.percentile(o.value);
            Ok(NormalizedObservation {
                subject_id: o.subject_id.clone(),
                marker: o.marker,
                t: o.t,
                percentile,
                normalized: normal::quantile(percentile),
                is_first_visit: o.is_first_visit,
            })
        })
        .collect()
}

/// Treats the cohort values as already on the normalized scale.
pub fn as_normalized(data: &CohortData) -> Vec<NormalizedObservation> {
    data.observations
        .iter()
        .map(|o| NormalizedObservation {
            subject_id: o.subject_id.clone(),
            marker: o.marker,
            t: o.t,
            percentile: normal::cdf(o.value),
            normalized: o.value,
            is_first_visit: o.is_first_visit,
        })
        .collect()
}

pub fn severity_of(normalized: f64) -> f64 {
    normal::cdf(normalized)
}

/// Writes `marker_id,value,cum_weight`; `value` is on the flipped scale and
/// `cum_weight` is the running weight sum (divide by the last row of the
/// marker to normalize). Re-importing reproduces the transform bit for bit.
pub fn export_ecdf_csv(spec: &TransformSpec, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["marker_id", "value", "cum_weight"])?;
    for (k, m) in spec.markers.iter().enumerate() {
        for (v, c) in m.ecdf.support().iter().zip(m.ecdf.running_weights()) {
            w.write_record([(k + 1).to_string(), v.to_string(), c.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads an exported ECDF; `delta` is recomputed from `data`'s per-marker counts.
pub fn import_ecdf_csv(path: &Path, data: &CohortData) -> Result<TransformSpec> {
    let file = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut parts: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = n + 2;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    file: file.clone(),
                    row,
                    msg: format!("bad field {i}"),
                })
        };
        let k = parse(0)? as usize;
        let e = parts.entry(k).or_default();
        e.0.push(parse(1)?);
        e.1.push(parse(2)?);
    }
    let mut counts = vec![0usize; data.n_markers()];
    for o in &data.observations {
        counts[o.marker] += 1;
    }
    let markers = (0..data.n_markers())
        .map(|k| {
            let (support, cum) = parts.remove(&(k + 1)).ok_or_else(|| {
                Error::Transform(format!("marker {} absent from {}", k + 1, file))
            })?;
            Ok(MarkerTransform {
                ecdf: WeightedEcdf::from_parts(support, cum)?,
                flip: data.marker_flip[k],
                delta: 1.0 / (4.0 * counts[k].max(1) as f64),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransformSpec { markers })
}
