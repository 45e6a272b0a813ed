use dpam::data::{load_cohort, write_cohort, Diagnosis, MarkerDecl, Schema};
use dpam::model::{DpamPosterior, Layout, ModelData};
use dpam::simulator::{
    default_scenario, ordering_scenario, read_truth_csv, simulate, write_truth_csv, DiagnosisNoise,
    Emission,
};
use dpam::transform::as_normalized;

#[test]
fn log_onset_matches_its_distribution() {
    let mut cfg = default_scenario();
    cfg.n_subjects = 10_000;
    cfg.seed = 5;
    let sim = simulate(&cfg).unwrap();
    let logs: Vec<f64> = sim
        .truth
        .t_star
        .iter()
        .map(|t| (t + cfg.eps_l).ln())
        .collect();
    assert_eq!(logs.len(), 10_000);
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - cfg.mu_t_eps).abs() < 3.0 * cfg.sigma_t_eps / n.sqrt());
    assert!((var.sqrt() / cfg.sigma_t_eps - 1.0).abs() < 0.05);
}

#[test]
fn diagnoses_respect_the_anchoring_window() {
    for noise in [DiagnosisNoise::Uniform, DiagnosisNoise::Edge] {
        let mut cfg = default_scenario();
        cfg.diagnosis_noise = noise;
        let sim = simulate(&cfg).unwrap();
        let mut diagnosed = 0;
        for (s, ts) in sim.cohort.subjects.iter().zip(&sim.truth.t_star) {
            match s.diagnosis {
                Diagnosis::Diagnosed { t_diag } => {
                    diagnosed += 1;
                    // clamping to follow-up can only move T_diag towards T*
                    assert!(t_diag > ts - cfg.eps_l && t_diag < ts + cfg.eps_u);
                }
                Diagnosis::CensoredFree { t_last } => assert!(*ts > t_last),
            }
        }
        assert!(diagnosed > 5, "{diagnosed}");
    }
}

#[test]
fn noiseless_values_lie_on_the_mean_curve() {
    let mut cfg = default_scenario();
    cfg.n_subjects = 40;
    for m in &mut cfg.markers {
        m.sigma_eps = 0.0;
        m.sd_u.iter_mut().for_each(|s| *s = 0.0);
        m.gamma.iter_mut().for_each(|g| *g = 0.0);
    }
    let sim = simulate(&cfg).unwrap();
    let index = sim.cohort.subject_index();
    for o in &sim.cohort.observations {
        let ts = sim.truth.t_star[index[o.subject_id.as_str()]];
        let b = cfg.markers[o.marker].beta;
        let want = b[0] + b[1] * (o.t - ts);
        assert!((o.value - want).abs() < 1e-12);
    }
}

#[test]
fn raw_emission_is_monotone_in_the_normalized_value() {
    let cfg = default_scenario();
    let a = simulate(&cfg).unwrap();
    let b = simulate(&dpam::simulator::SimConfig {
        emission: Emission::Raw,
        ..cfg.clone()
    })
    .unwrap();
    for (x, y) in a.cohort.observations.iter().zip(&b.cohort.observations) {
        let flip = cfg.markers[x.marker].flip;
        let back = if flip { -y.value.ln() } else { y.value.ln() };
        assert!((x.value - back).abs() < 1e-9);
    }
}

#[test]
fn written_cohort_reloads_and_validates() {
    let cfg = default_scenario();
    let sim = simulate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (obs, subj) = (dir.path().join("obs.csv"), dir.path().join("subj.csv"));
    let schema = Schema {
        covariates: cfg.covariates.iter().map(|c| c.name.clone()).collect(),
        centers: cfg
            .covariates
            .iter()
            .map(|c| (c.name.clone(), c.center))
            .collect(),
        ..Default::default()
    };
    write_cohort(&sim.cohort, &obs, &subj, &schema).unwrap();
    let decls: Vec<MarkerDecl> = cfg
        .markers
        .iter()
        .map(|m| MarkerDecl {
            name: m.name.clone(),
            flip: m.flip,
        })
        .collect();
    let (back, report) = load_cohort(&obs, &subj, &schema, &decls).unwrap();
    assert_eq!(report.dropped_subjects, 0);
    back.validate().unwrap();
    assert_eq!(back.subjects.len(), sim.cohort.subjects.len());
    assert_eq!(back.observations.len(), sim.cohort.observations.len());
    let a = ModelData::build(&sim.cohort, &as_normalized(&sim.cohort)).unwrap();
    let b = ModelData::build(&back, &as_normalized(&back)).unwrap();
    assert_eq!(a.dataset_hash(), b.dataset_hash());
}

#[test]
fn truth_round_trips_through_csv() {
    let cfg = ordering_scenario();
    let sim = simulate(&cfg).unwrap();
    let layout = Layout::new(&cfg.model_spec(), sim.truth.t_star.len());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("truth.csv");
    write_truth_csv(&path, &layout, &sim.truth).unwrap();
    let rows = read_truth_csv(&path).unwrap();
    let flat = sim.truth.to_flat(&layout);
    assert_eq!(rows.len(), flat.len());
    for ((name, v), (want_name, want)) in rows.iter().zip(layout.names().iter().zip(&flat)) {
        assert_eq!(name, want_name);
        assert_eq!(v, want);
    }
}

#[test]
fn truth_is_inside_the_model_support() {
    let cfg = default_scenario();
    let sim = simulate(&cfg).unwrap();
    let data = ModelData::build(&sim.cohort, &as_normalized(&sim.cohort)).unwrap();
    let post = DpamPosterior::new(cfg.model_spec(), data).unwrap();
    let z = post.to_unconstrained(&sim.truth).unwrap();
    assert!(z.iter().all(|v| v.is_finite()));
}

#[test]
fn seeds_are_reproducible() {
    let cfg = default_scenario();
    assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    let other = dpam::simulator::SimConfig {
        seed: cfg.seed + 1,
        ..cfg.clone()
    };
    assert_ne!(simulate(&cfg).unwrap(), simulate(&other).unwrap());
}
