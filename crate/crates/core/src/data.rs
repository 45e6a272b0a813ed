//! Cohort representation, validation and long-format CSV ingestion.
//!
//! Times are in years from study entry. Covariates are stored in the units
//! they were read in; the per-covariate centring constants travel with the
//! cohort and are applied when the model design is built.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Diagnosis {
    /// Clinical diagnosis observed at `t_diag`.
    Diagnosed { t_diag: f64 },
    /// Left follow-up free of diagnosis; last clinical evaluation at `t_last`.
    CensoredFree { t_last: f64 },
}

impl Diagnosis {
    pub fn is_diagnosed(&self) -> bool {
        matches!(self, Diagnosis::Diagnosed { .. })
    }

    pub fn event_time(&self) -> f64 {
        match *self {
            Diagnosis::Diagnosed { t_diag } => t_diag,
            Diagnosis::CensoredFree { t_last } => t_last,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: String,
    pub covariates: Vec<f64>,
    pub diagnosis: Diagnosis,
    /// Clinical-stage weight used by the severity transform.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub subject_id: String,
    /// Zero-based marker index.
    pub marker: usize,
    pub t: f64,
    pub value: f64,
    pub is_first_visit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerDecl {
    pub name: String,
    /// `true` when higher raw values mean better condition.
    #[serde(default)]
    pub flip: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortData {
    pub subjects: Vec<Subject>,
    pub observations: Vec<Observation>,
    pub marker_names: Vec<String>,
    pub marker_flip: Vec<bool>,
    pub covariate_names: Vec<String>,
    /// Reference value subtracted from each covariate in the model design.
    pub covariate_centers: Vec<f64>,
}

/// Column mapping for the two input files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schema {
    pub subject_id: String,
    pub marker_id: String,
    pub t: String,
    pub value: String,
    pub is_first_visit: String,
    pub diagnosis_status: String,
    pub t_event: String,
    pub weight: String,
    pub covariates: Vec<String>,
    pub centers: BTreeMap<String, f64>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            subject_id: "subject_id".into(),
            marker_id: "marker_id".into(),
            t: "t".into(),
            value: "value".into(),
            is_first_visit: "is_first_visit".into(),
            diagnosis_status: "diagnosis_status".into(),
            t_event: "t_event".into(),
            weight: "weight".into(),
            covariates: Vec::new(),
            centers: BTreeMap::from([("age".to_string(), 70.0)]),
        }
    }
}

impl Schema {
    pub fn center_of(&self, covariate: &str) -> f64 {
        self.centers.get(covariate).copied().unwrap_or(0.0)
    }
}

/// What `load_cohort` discarded on the way in.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub dropped_subjects: usize,
    pub skipped_missing: usize,
}

impl CohortData {
    /// Builds a cohort, dropping subjects without any observation, then validates.
    pub fn new(
        subjects: Vec<Subject>,
        observations: Vec<Observation>,
        marker_names: Vec<String>,
        marker_flip: Vec<bool>,
        covariate_names: Vec<String>,
        covariate_centers: Vec<f64>,
    ) -> Result<(Self, usize)> {
        let with_obs: HashSet<&str> = observations.iter().map(|o| o.subject_id.as_str()).collect();
        let before = subjects.len();
        let subjects: Vec<Subject> = subjects
            .into_iter()
            .filter(|s| with_obs.contains(s.id.as_str()))
            .collect();
        let dropped = before - subjects.len();
        if dropped > 0 {
            log::warn!("dropped {dropped} subject(s) without any marker observation");
        }
        let data = CohortData {
            subjects,
            observations,
            marker_names,
            marker_flip,
            covariate_names,
            covariate_centers,
        };
        data.validate()?;
        Ok((data, dropped))
    }

    pub fn n_markers(&self) -> usize {
        self.marker_names.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn subject_index(&self) -> HashMap<&str, usize> {
        self.subjects
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.marker_flip.len() != self.marker_names.len() {
            return Err(Error::Validation(
                "marker_flip and marker_names differ in length".into(),
            ));
        }
        if self.covariate_centers.len() != self.covariate_names.len() {
            return Err(Error::Validation(
                "covariate_centers and covariate_names differ in length".into(),
            ));
        }
        let p = self.covariate_names.len();
        let mut ids = HashSet::new();
        for s in &self.subjects {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Validation(format!("duplicate subject id {}", s.id)));
            }
            if s.covariates.len() != p {
                return Err(Error::Validation(format!(
                    "subject {} has {} covariates, expected {p}",
                    s.id,
                    s.covariates.len()
                )));
            }
            if s.covariates.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!(
                    "subject {} has a non-finite covariate",
                    s.id
                )));
            }
            let te = s.diagnosis.event_time();
            if !(te.is_finite() && te >= 0.0) {
                return Err(Error::Validation(format!(
                    "subject {} has event time {te}; must be finite and >= 0",
                    s.id
                )));
            }
            if !(s.weight.is_finite() && s.weight > 0.0) {
                return Err(Error::Validation(format!(
                    "subject {} has non-positive weight {}",
                    s.id, s.weight
                )));
            }
        }
        let mut seen = HashSet::new();
        let mut has_obs = HashSet::new();
        for o in &self.observations {
            if !ids.contains(o.subject_id.as_str()) {
                return Err(Error::Validation(format!(
                    "observation refers to unknown subject {}",
                    o.subject_id
                )));
            }
            if o.marker >= self.marker_names.len() {
                return Err(Error::Validation(format!(
                    "marker index {} out of range (K = {})",
                    o.marker + 1,
                    self.marker_names.len()
                )));
            }
            if !(o.t.is_finite() && o.t >= 0.0) {
                return Err(Error::Validation(format!(
                    "subject {} marker {}: time {} must be finite and >= 0",
                    o.subject_id,
                    o.marker + 1,
                    o.t
                )));
            }
            if !o.value.is_finite() {
                return Err(Error::Validation(format!(
                    "subject {} marker {} t={}: non-finite value",
                    o.subject_id,
                    o.marker + 1,
                    o.t
                )));
            }
            if !seen.insert((o.subject_id.as_str(), o.marker, o.t.to_bits())) {
                return Err(Error::Validation(format!(
                    "duplicate observation (subject {}, marker {}, t={})",
                    o.subject_id,
                    o.marker + 1,
                    o.t
                )));
            }
            has_obs.insert(o.subject_id.as_str());
        }
        if let Some(s) = self
            .subjects
            .iter()
            .find(|s| !has_obs.contains(s.id.as_str()))
        {
            return Err(Error::Validation(format!(
                "subject {} has no observation",
                s.id
            )));
        }
        Ok(())
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn column(headers: &csv::StringRecord, name: &str, file: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Parse {
            file: file.to_string(),
            row: 1,
            msg: format!("missing column '{name}'"),
        })
}

fn parse_f64(raw: &str, file: &str, row: usize, what: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        file: file.to_string(),
        row,
        msg: format!("cannot parse {what} '{raw}' as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            file: file.to_string(),
            row,
            msg: format!("{what} '{raw}' is not finite"),
        });
    }
    Ok(v)
}

fn parse_flag(raw: &str, file: &str, row: usize, what: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" | "" => Ok(false),
        other => Err(Error::Parse {
            file: file.to_string(),
            row,
            msg: format!("cannot parse {what} '{other}' as a boolean"),
        }),
    }
}

fn record_row(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

/// Reads the subject and observation files.
///
/// `markers` names the K markers; `marker_id` cells may hold either the
/// one-based marker index or the marker name. Rows with an empty value cell
/// are skipped, and subjects left without observations are dropped.
pub fn load_cohort(
    observations_path: &Path,
    subjects_path: &Path,
    schema: &Schema,
    markers: &[MarkerDecl],
) -> Result<(CohortData, LoadReport)> {
    if markers.is_empty() {
        return Err(Error::Validation(
            "at least one marker must be declared".into(),
        ));
    }
    let subj_file = subjects_path.display().to_string();
    let mut rdr = open_reader(subjects_path)?;
    let headers = rdr.headers()?.clone();
    let c_id = column(&headers, &schema.subject_id, &subj_file)?;
    let c_status = column(&headers, &schema.diagnosis_status, &subj_file)?;
    let c_event = column(&headers, &schema.t_event, &subj_file)?;
    let c_weight = headers.iter().position(|h| h.trim() == schema.weight);
    let c_cov: Vec<usize> = schema
        .covariates
        .iter()
        .map(|c| column(&headers, c, &subj_file))
        .collect::<Result<_>>()?;

    let mut subjects = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            file: subj_file.clone(),
            row: n + 2,
            msg: e.to_string(),
        })?;
        let row = record_row(&rec, n + 2);
        let get = |c: usize| rec.get(c).unwrap_or("");
        let id = get(c_id).trim().to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                file: subj_file.clone(),
                row,
                msg: "empty subject id".into(),
            });
        }
        let status = get(c_status).trim().to_ascii_lowercase();
        let diagnosed = match status.as_str() {
            "1" | "diagnosed" | "true" => true,
            "0" | "censored" | "censoredfree" | "censored_free" | "false" => false,
            other => {
                return Err(Error::Parse {
                    file: subj_file.clone(),
                    row,
                    msg: format!("unknown diagnosis status '{other}'"),
                })
            }
        };
        let event_raw = get(c_event);
        if event_raw.trim().is_empty() {
            let which = if diagnosed { "t_diag" } else { "t_last" };
            return Err(Error::Validation(format!(
                "subject {id} (row {row}): {which} missing"
            )));
        }
        let t_event = parse_f64(event_raw, &subj_file, row, "t_event")?;
        let diagnosis = if diagnosed {
            Diagnosis::Diagnosed { t_diag: t_event }
        } else {
            Diagnosis::CensoredFree { t_last: t_event }
        };
        let weight = match c_weight.map(get) {
            Some(w) if !w.trim().is_empty() => parse_f64(w, &subj_file, row, "weight")?,
            _ => 1.0,
        };
        let covariates = c_cov
            .iter()
            .zip(&schema.covariates)
            .map(|(&c, name)| parse_f64(get(c), &subj_file, row, name))
            .collect::<Result<Vec<_>>>()?;
        subjects.push(Subject {
            id,
            covariates,
            diagnosis,
            weight,
        });
    }

    let name_to_idx: HashMap<&str, usize> = markers
        .iter()
        .enumerate()
        .map(|(i, m)| (m.name.as_str(), i))
        .collect();
    let obs_file = observations_path.display().to_string();
    let mut rdr = open_reader(observations_path)?;
    let headers = rdr.headers()?.clone();
    let c_sid = column(&headers, &schema.subject_id, &obs_file)?;
    let c_mid = column(&headers, &schema.marker_id, &obs_file)?;
    let c_t = column(&headers, &schema.t, &obs_file)?;
    let c_val = column(&headers, &schema.value, &obs_file)?;
    let c_fv = column(&headers, &schema.is_first_visit, &obs_file)?;

    let mut observations = Vec::new();
    let mut skipped_missing = 0;
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            file: obs_file.clone(),
            row: n + 2,
            msg: e.to_string(),
        })?;
        let row = record_row(&rec, n + 2);
        let get = |c: usize| rec.get(c).unwrap_or("");
        let value_raw = get(c_val);
        if value_raw.trim().is_empty() {
            skipped_missing += 1;
            continue;
        }
        let mid_raw = get(c_mid).trim();
        let marker = match mid_raw.parse::<usize>() {
            Ok(k) if k >= 1 && k <= markers.len() => k - 1,
            Ok(k) => {
                return Err(Error::Validation(format!(
                    "row {row}: marker_id {k} outside 1..={}",
                    markers.len()
                )))
            }
            Err(_) => *name_to_idx.get(mid_raw).ok_or_else(|| Error::Parse {
                file: obs_file.clone(),
                row,
                msg: format!("unknown marker '{mid_raw}'"),
            })?,
        };
        observations.push(Observation {
            subject_id: get(c_sid).trim().to_string(),
            marker,
            t: parse_f64(get(c_t), &obs_file, row, "t")?,
            value: parse_f64(value_raw, &obs_file, row, "value")?,
            is_first_visit: parse_flag(get(c_fv), &obs_file, row, "is_first_visit")?,
        });
    }
    if skipped_missing > 0 {
        log::info!("skipped {skipped_missing} row(s) with a missing marker value");
    }

    let centers = schema
        .covariates
        .iter()
        .map(|c| schema.center_of(c))
        .collect();
    let (data, dropped_subjects) = CohortData::new(
        subjects,
        observations,
        markers.iter().map(|m| m.name.clone()).collect(),
        markers.iter().map(|m| m.flip).collect(),
        schema.covariates.clone(),
        centers,
    )?;
    Ok((
        data,
        LoadReport {
            dropped_subjects,
            skipped_missing,
        },
    ))
}

/// Writes the cohort in the layout `load_cohort` reads (with `schema` column names).
pub fn write_cohort(
    data: &CohortData,
    observations_path: &Path,
    subjects_path: &Path,
    schema: &Schema,
) -> Result<()> {
    let mut w = csv::Writer::from_path(subjects_path)?;
    let mut header = vec![
        schema.subject_id.clone(),
        schema.diagnosis_status.clone(),
        schema.t_event.clone(),
        schema.weight.clone(),
    ];
    header.extend(data.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for s in &data.subjects {
        let mut rec = vec![
            s.id.clone(),
            if s.diagnosis.is_diagnosed() { "1" } else { "0" }.to_string(),
            s.diagnosis.event_time().to_string(),
            s.weight.to_string(),
        ];
        rec.extend(s.covariates.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(subjects_path, e))?;

    let mut w = csv::Writer::from_path(observations_path)?;
    w.write_record([
        &schema.subject_id,
        &schema.marker_id,
        &schema.t,
        &schema.value,
        &schema.is_first_visit,
    ])?;
    for o in &data.observations {
        w.write_record([
            o.subject_id.clone(),
            (o.marker + 1).to_string(),
            o.t.to_string(),
            o.value.to_string(),
            if o.is_first_visit { "1" } else { "0" }.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(observations_path, e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkerSummary {
    pub name: String,
    /// Subjects with at least one measure.
    pub n_subjects: usize,
    pub n_observations: usize,
    /// Mean and SD (denominator N - 1) of each subject's first measure.
    pub baseline_mean: f64,
    pub baseline_sd: f64,
    pub repeat_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovariateSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Share of ones when the covariate is a 0/1 indicator.
    pub proportion: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortSummary {
    pub n_subjects: usize,
    pub n_diagnosed: usize,
    pub markers: Vec<MarkerSummary>,
    pub covariates: Vec<CovariateSummary>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

pub fn summarize_cohort(data: &CohortData) -> Result<CohortSummary> {
    if data.subjects.is_empty() || data.observations.is_empty() {
        return Err(Error::Validation("cannot summarize an empty cohort".into()));
    }
    let k = data.n_markers();
    // (subject, marker) -> (earliest t, its value, count)
    let mut first: HashMap<(&str, usize), (f64, f64, usize)> = HashMap::new();
    let mut n_obs = vec![0usize; k];
    for o in &data.observations {
        n_obs[o.marker] += 1;
        first
            .entry((o.subject_id.as_str(), o.marker))
            .and_modify(|e| {
                if o.t < e.0 {
                    e.0 = o.t;
                    e.1 = o.value;
                }
                e.2 += 1;
            })
            .or_insert((o.t, o.value, 1));
    }
    let mut baselines: Vec<Vec<(&str, f64)>> = vec![Vec::new(); k];
    for (&(sid, m), &(_, v, _)) in &first {
        baselines[m].push((sid, v));
    }
    let markers = (0..k)
        .map(|m| {
            // deterministic order for the floating-point sums
            baselines[m].sort_by(|a, b| a.0.cmp(b.0));
            let vals: Vec<f64> = baselines[m].iter().map(|x| x.1).collect();
            let (mean, sd) = mean_sd(&vals);
            let n_subjects = vals.len();
            MarkerSummary {
                name: data.marker_names[m].clone(),
                n_subjects,
                n_observations: n_obs[m],
                baseline_mean: mean,
                baseline_sd: sd,
                repeat_mean: if n_subjects > 0 {
                    n_obs[m] as f64 / n_subjects as f64
                } else {
                    f64::NAN
                },
            }
        })
        .collect();
    let covariates = data
        .covariate_names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let xs: Vec<f64> = data.subjects.iter().map(|s| s.covariates[c]).collect();
            let (mean, sd) = mean_sd(&xs);
            let binary = xs.iter().all(|&x| x == 0.0 || x == 1.0);
            CovariateSummary {
                name: name.clone(),
                mean,
                sd,
                proportion: binary.then_some(mean),
            }
        })
        .collect();
    Ok(CohortSummary {
        n_subjects: data.subjects.len(),
        n_diagnosed: data
            .subjects
            .iter()
            .filter(|s| s.diagnosis.is_diagnosed())
            .count(),
        markers,
        covariates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn markers(k: usize) -> Vec<MarkerDecl> {
        (1..=k)
            .map(|i| MarkerDecl {
                name: format!("m{i}"),
                flip: false,
            })
            .collect()
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    const SUBJECTS: &str = "subject_id,diagnosis_status,t_event,weight,age,female\n\
        S1,1,3.5,2.8,72,1\n\
        S2,0,5,2.74,65,0\n\
        S3,censored,4.0,,80,1\n";

    #[test]
    fn loads_well_formed_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", SUBJECTS);
        let o = write(
            dir.path(),
            "o.csv",
            "subject_id,marker_id,t,value,is_first_visit\n\
             S1,1,0,0.5,1\nS1,1,1,0.7,0\nS2,2,0,-0.3,1\nS3,m1,0,1.2,1\nS3,2,2,,0\n",
        );
        let schema = Schema {
            covariates: vec!["age".into(), "female".into()],
            ..Schema::default()
        };
        let (data, report) = load_cohort(&o, &s, &schema, &markers(2)).unwrap();
        assert_eq!(data.subjects.len(), 3);
        assert_eq!(data.observations.len(), 4);
        assert_eq!(report.skipped_missing, 1);
        assert_eq!(report.dropped_subjects, 0);
        assert_eq!(data.subjects[2].weight, 1.0);
        assert_eq!(data.covariate_centers, vec![70.0, 0.0]);
        assert_eq!(
            data.subjects[0].diagnosis,
            Diagnosis::Diagnosed { t_diag: 3.5 }
        );
        assert_eq!(data.observations[3].marker, 0);
    }

    #[test]
    fn drops_subjects_without_rows() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", SUBJECTS);
        let o = write(
            dir.path(),
            "o.csv",
            "subject_id,marker_id,t,value,is_first_visit\nS1,1,0,0.5,1\nS3,1,0,0.1,1\n",
        );
        let schema = Schema {
            covariates: vec!["age".into()],
            ..Schema::default()
        };
        let (data, report) = load_cohort(&o, &s, &schema, &markers(1)).unwrap();
        assert_eq!(report.dropped_subjects, 1);
        assert!(data.subjects.iter().all(|s| s.id != "S2"));
    }

    #[test]
    fn duplicate_observation_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", SUBJECTS);
        let o = write(
            dir.path(),
            "o.csv",
            "subject_id,marker_id,t,value,is_first_visit\nS1,1,0.0,0.5,1\nS1,1,0,0.6,1\n",
        );
        let err = load_cohort(&o, &s, &Schema::default(), &markers(1)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicate") && msg.contains("S1"), "{msg}");
    }

    #[test]
    fn missing_diagnosis_time_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(
            dir.path(),
            "s.csv",
            "subject_id,diagnosis_status,t_event\nS1,1,\n",
        );
        let o = write(
            dir.path(),
            "o.csv",
            "subject_id,marker_id,t,value,is_first_visit\nS1,1,0,0.5,1\n",
        );
        let err = load_cohort(&o, &s, &Schema::default(), &markers(1)).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("t_diag")),
            "{err}"
        );
    }

    #[test]
    fn malformed_number_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", SUBJECTS);
        let o = write(
            dir.path(),
            "o.csv",
            "subject_id,marker_id,t,value,is_first_visit\nS1,1,0,0.5,1\nS1,1,abc,0.5,0\n",
        );
        match load_cohort(&o, &s, &Schema::default(), &markers(1)).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn summary_counts_and_moments() {
        let subj = |id: &str| Subject {
            id: id.into(),
            covariates: vec![],
            diagnosis: Diagnosis::CensoredFree { t_last: 5.0 },
            weight: 1.0,
        };
        let obs = |id: &str, t: f64, v: f64| Observation {
            subject_id: id.into(),
            marker: 0,
            t,
            value: v,
            is_first_visit: t == 0.0,
        };
        let (data, _) = CohortData::new(
            vec![subj("A"), subj("B")],
            vec![
                obs("A", 0.0, 1.0),
                obs("A", 1.0, 9.0),
                obs("B", 0.0, 3.0),
                obs("B", 2.0, 0.0),
            ],
            vec!["m".into()],
            vec![false],
            vec![],
            vec![],
        )
        .unwrap();
        let s = summarize_cohort(&data).unwrap();
        let m = &s.markers[0];
        assert_eq!(m.n_subjects, 2);
        assert_eq!(m.repeat_mean, 2.0);
        assert_eq!(m.baseline_mean, 2.0);
        assert!((m.baseline_sd - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_cohort_cannot_be_summarized() {
        let data = CohortData {
            subjects: vec![],
            observations: vec![],
            marker_names: vec!["m".into()],
            marker_flip: vec![false],
            covariate_names: vec![],
            covariate_centers: vec![],
        };
        assert!(summarize_cohort(&data).is_err());
    }
}
