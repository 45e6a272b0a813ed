use std::collections::HashMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::data::{CohortData, Diagnosis};
use crate::error::{Error, Result};
use crate::transform::NormalizedObservation;

#[derive(Clone, Debug, PartialEq)]
pub struct ObsRow {
    pub marker: usize,
    pub t: f64,
    /// Normalized value.
    pub y: f64,
    pub percentile: f64,
    pub first_visit: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectData {
    pub id: String,
    /// Centred covariate row.
    pub x: Vec<f64>,
    pub diagnosis: Diagnosis,
    /// Sorted by marker, then time.
    pub obs: Vec<ObsRow>,
}

/// Model-ready data: one entry per subject in cohort order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelData {
    pub subjects: Vec<SubjectData>,
    pub n_markers: usize,
    pub n_covariates: usize,
}

impl ModelData {
    pub fn build(data: &CohortData, normalized: &[NormalizedObservation]) -> Result<Self> {
        let index = data.subject_index();
        let mut subjects: Vec<SubjectData> = data
            .subjects
            .iter()
            .map(|s| SubjectData {
                id: s.id.clone(),
                x: s.covariates
                    .iter()
                    .zip(&data.covariate_centers)
                    .map(|(v, c)| v - c)
                    .collect(),
                diagnosis: s.diagnosis,
                obs: Vec::new(),
            })
            .collect();
        for o in normalized {
            let &i = index.get(o.subject_id.as_str()).ok_or_else(|| {
                Error::Validation(format!("observation for unknown subject {}", o.subject_id))
            })?;
            if o.marker >= data.n_markers() {
                return Err(Error::Validation(format!(
                    "marker {} out of range",
                    o.marker + 1
                )));
            }
            if !o.normalized.is_finite() {
                return Err(Error::Validation(format!(
                    "subject {} marker {}: non-finite normalized value",
                    o.subject_id,
                    o.marker + 1
                )));
            }
            subjects[i].obs.push(ObsRow {
                marker: o.marker,
                t: o.t,
                y: o.normalized,
                percentile: o.percentile,
                first_visit: o.is_first_visit,
            });
        }
        for s in &mut subjects {
            s.obs
                .sort_by(|a, b| a.marker.cmp(&b.marker).then(a.t.total_cmp(&b.t)));
        }
        Ok(ModelData {
            subjects,
            n_markers: data.n_markers(),
            n_covariates: data.n_covariates(),
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_observations(&self) -> usize {
        self.subjects.iter().map(|s| s.obs.len()).sum()
    }

    /// Observation count per marker.
    pub fn marker_counts(&self) -> Vec<usize> {
        let mut n = vec![0; self.n_markers];
        for o in self.subjects.iter().flat_map(|s| &s.obs) {
            n[o.marker] += 1;
        }
        n
    }

    pub fn position_of(&self) -> HashMap<&str, usize> {
        self.subjects
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect()
    }

    /// SHA-256 over a canonical rendering of everything the likelihood sees.
    pub fn dataset_hash(&self) -> String {
        let mut canon = String::new();
        let _ = writeln!(canon, "K={} P={}", self.n_markers, self.n_covariates);
        for s in &self.subjects {
            let (tag, te) = match s.diagnosis {
                Diagnosis::Diagnosed { t_diag } => ("D", t_diag),
                Diagnosis::CensoredFree { t_last } => ("C", t_last),
            };
            let _ = write!(canon, "S {} {tag} {:016x}", s.id, te.to_bits());
            for x in &s.x {
                let _ = write!(canon, " {:016x}", x.to_bits());
            }
            canon.push('\n');
            for o in &s.obs {
                let _ = writeln!(
                    canon,
                    "O {} {:016x} {:016x} {:016x} {}",
                    o.marker,
                    o.t.to_bits(),
                    o.y.to_bits(),
                    o.percentile.to_bits(),
                    u8::from(o.first_visit)
                );
            }
        }
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }
}
