use dpam::data::Diagnosis;
use dpam::model::{
    log_jacobian, log_likelihood, log_prior, AnchorMode, DpamPosterior, MarkerModel, ModelData,
    ModelSpec, ObsRow, SubjectData, CENTERING_STEPS,
};
use dpam::par::Execution;
use dpam::target::LogDensity;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_problem(n: usize, seed: u64) -> (ModelSpec, ModelData) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ModelSpec::new(
        vec![
            MarkerModel {
                name: "img".into(),
                random_slope: false,
                first_visit_effect: false,
            },
            MarkerModel {
                name: "cog".into(),
                random_slope: true,
                first_visit_effect: true,
            },
        ],
        2,
    );
    let subjects = (0..n)
        .map(|i| {
            let diagnosis = if i % 3 == 0 {
                Diagnosis::Diagnosed {
                    t_diag: rng.random_range(0.5..4.0),
                }
            } else {
                Diagnosis::CensoredFree {
                    t_last: rng.random_range(1.0..5.0),
                }
            };
            let mut obs = Vec::new();
            // visit counts vary so both centred and whitened coordinates occur
            let img_visits: &[f64] = if i % 4 == 2 { &[0.0] } else { &[0.0, 2.0] };
            for &t in img_visits {
                obs.push(ObsRow {
                    marker: 0,
                    t,
                    y: rng.random_range(-1.5..1.5),
                    percentile: 0.5,
                    first_visit: false,
                });
            }
            // subject 1 has no marker-2 data
            if i != 1 {
                for t in 0..(1 + i % 6) {
                    obs.push(ObsRow {
                        marker: 1,
                        t: t as f64,
                        y: rng.random_range(-1.5..1.5),
                        percentile: 0.5,
                        first_visit: t == 0,
                    });
                }
            }
            SubjectData {
                id: format!("s{i}"),
                x: vec![
                    rng.random_range(-10.0..10.0),
                    f64::from(rng.random_bool(0.5)),
                ],
                diagnosis,
                obs,
            }
        })
        .collect();
    (
        spec,
        ModelData {
            subjects,
            n_markers: 2,
            n_covariates: 2,
        },
    )
}

/// The default posterior and one with random centring weights and shears.
fn variants(spec: ModelSpec, data: ModelData, seed: u64) -> Vec<DpamPosterior> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..data.n_subjects() * spec.n_markers())
        .map(|_| {
            [
                rng.random_range(0..=CENTERING_STEPS),
                rng.random_range(0..=CENTERING_STEPS),
            ]
        })
        .collect();
    let shear = (0..data.n_subjects() * spec.n_markers())
        .map(|j| {
            let slope = spec.markers[j % spec.n_markers()].random_slope;
            (slope && rng.random_bool(0.5)).then(|| rng.random_range(-3.0..6.0))
        })
        .collect();
    vec![
        DpamPosterior::new(spec.clone(), data.clone()).unwrap(),
        DpamPosterior::new(spec, data)
            .unwrap()
            .with_centering(weights)
            .with_shear(shear),
    ]
}

fn random_point(post: &DpamPosterior, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..post.dim())
        .map(|_| rng.random_range(-1.5..1.5))
        .collect()
}

#[test]
fn gradient_matches_central_differences() {
    for mode in [AnchorMode::Anchored, AnchorMode::NonAnchored] {
        let (mut spec, data) = small_problem(7, 3);
        spec.mode = mode;
        for post in variants(spec, data, 4) {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let d = post.dim();
            let mut g = vec![0.0; d];
            let mut scratch = vec![0.0; d];
            for _ in 0..20 {
                let z = random_point(&post, &mut rng);
                post.logp_grad(&z, &mut g).unwrap();
                let mut worst: f64 = 0.0;
                for j in 0..d {
                    let h = 1e-5 * z[j].abs().max(1.0);
                    let mut zp = z.clone();
                    zp[j] += h;
                    let fp = post.logp_grad(&zp, &mut scratch).unwrap();
                    zp[j] -= 2.0 * h;
                    let fm = post.logp_grad(&zp, &mut scratch).unwrap();
                    let fd = (fp - fm) / (2.0 * h);
                    worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1.0));
                }
                assert!(worst < 1e-5, "{mode:?}: max relative error {worst}");
            }
        }
    }
}

#[test]
fn decomposes_into_likelihood_prior_and_jacobian() {
    for mode in [AnchorMode::Anchored, AnchorMode::NonAnchored] {
        let (mut spec, data) = small_problem(6, 5);
        spec.mode = mode;
        for post in variants(spec, data, 6) {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let mut g = vec![0.0; post.dim()];
            for _ in 0..5 {
                let z = random_point(&post, &mut rng);
                let lp = post.logp_grad(&z, &mut g).unwrap();
                let theta = post.to_parameters(&z);
                let parts = log_likelihood(&post.data, &theta, &post.spec)
                    + log_prior(&theta, &post.spec, &post.bounds)
                    + log_jacobian(&z, &post.layout, &post.bounds);
                assert!(
                    (lp - parts).abs() < 1e-9 * lp.abs().max(1.0),
                    "{lp} vs {parts}"
                );
            }
        }
    }
}

#[test]
fn unconstrain_round_trips() {
    let (spec, data) = small_problem(6, 8);
    for post in variants(spec, data, 9) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let z = random_point(&post, &mut rng);
            let theta = post.to_parameters(&z);
            let back = post.to_parameters(&post.to_unconstrained(&theta).unwrap());
            let a = theta.to_flat(&post.layout);
            let b = back.to_flat(&post.layout);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
            }
        }
    }
}

#[test]
fn untouched_random_effect_sees_only_its_prior() {
    let (spec, data) = small_problem(4, 9);
    let post = DpamPosterior::new(spec, data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let z = random_point(&post, &mut rng);
    let mut g = vec![0.0; post.dim()];
    post.logp_grad(&z, &mut g).unwrap();
    // subject index 1 has no observation of marker 2
    let at = post.layout.re(1, 1);
    assert_eq!(g[at], -z[at]);
    assert_eq!(g[at + 1], -z[at + 1]);
}

#[test]
fn single_observation_random_intercept_score() {
    // one subject, one observation of an intercept-only marker
    let spec = ModelSpec::new(
        vec![MarkerModel {
            name: "m".into(),
            random_slope: false,
            first_visit_effect: false,
        }],
        0,
    );
    let data = ModelData {
        subjects: vec![SubjectData {
            id: "a".into(),
            x: vec![],
            diagnosis: Diagnosis::Diagnosed { t_diag: 2.0 },
            obs: vec![ObsRow {
                marker: 0,
                t: 1.0,
                y: 0.7,
                percentile: 0.5,
                first_visit: false,
            }],
        }],
        n_markers: 1,
        n_covariates: 0,
    };
    let post = DpamPosterior::new(spec, data)
        .unwrap()
        .with_centering(vec![[0, 0]]);
    let z = vec![-0.3, -1.0, 0.2, -0.5, 2.0, -0.4, 0.1, 0.8];
    assert_eq!(z.len(), post.dim());
    let mut g = vec![0.0; post.dim()];
    post.logp_grad(&z, &mut g).unwrap();
    let th = post.to_parameters(&z);
    let m = &th.markers[0];
    let s = 1.0 - th.t_star[0];
    let mean = m.beta[0] + m.beta[1] * s + th.u[0][0][0];
    let score_u = (0.7 - mean) / (m.sigma_eps * m.sigma_eps);
    let eta = z[post.layout.re(0, 0)];
    // d/d eta = score_u * sd - eta
    let expected = score_u * m.sd_u[0] - eta;
    assert!((g[post.layout.re(0, 0)] - expected).abs() < 1e-12);
}

#[test]
fn likelihood_is_translation_invariant() {
    let (spec, data) = small_problem(5, 12);
    let post = DpamPosterior::new(spec.clone(), data.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let theta = post.to_parameters(&random_point(&post, &mut rng));
    let base = log_likelihood(&data, &theta, &spec);
    let mut shifted_data = data.clone();
    for s in &mut shifted_data.subjects {
        for o in &mut s.obs {
            o.t += 3.25;
        }
    }
    let mut shifted = theta.clone();
    for t in &mut shifted.t_star {
        *t += 3.25;
    }
    let moved = log_likelihood(&shifted_data, &shifted, &spec);
    assert!((base - moved).abs() < 1e-9 * base.abs());
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    let (spec, data) = small_problem(40, 21);
    let seq = DpamPosterior::new(spec.clone(), data.clone())
        .unwrap()
        .with_execution(Execution::Sequential);
    let par = DpamPosterior::new(spec, data)
        .unwrap()
        .with_execution(Execution::Parallel);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = random_point(&seq, &mut rng);
    let mut g1 = vec![0.0; seq.dim()];
    let mut g2 = vec![0.0; seq.dim()];
    let a = seq.logp_grad(&z, &mut g1).unwrap();
    let b = par.logp_grad(&z, &mut g2).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert!(g1.iter().zip(&g2).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn initial_points_respect_anchors() {
    let (spec, data) = small_problem(12, 30);
    let post = DpamPosterior::new(spec, data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut g = vec![0.0; post.dim()];
    for _ in 0..10 {
        let z = post.initial_point(&mut rng);
        assert!(post.logp_grad(&z, &mut g).is_ok());
        let th = post.to_parameters(&z);
        for (i, s) in post.data.subjects.iter().enumerate() {
            match s.diagnosis {
                Diagnosis::Diagnosed { t_diag } => {
                    assert!(th.t_star[i] > t_diag - 1.5 && th.t_star[i] < t_diag + 1.5)
                }
                Diagnosis::CensoredFree { t_last } => assert!(th.t_star[i] > t_last - 1.5),
            }
        }
    }
}
