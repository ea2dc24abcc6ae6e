use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zlab_core::catalog::{catalog_entries, entry};
use zlab_core::config::RunConfig;
use zlab_core::marty::marty_quotient;
use zlab_core::pipeline::{load_catalog_dir, rescale, run_catalog_entry, scan};
use zlab_core::rescale::{
    evaluate_rescaled, propose_rescaling, test_convergence, ProposeOptions, RescaledSamples, Strategy,
};
use zlab_core::{Complex64, ConvergenceOutcome, Domain, HolomorphicFamily, TargetMetric, Verdict};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn bounded_quotient_forces_small_spread() {
    let d = Domain::UnitDisc;
    let f = HolomorphicFamily::parse(&["z1/n"], 1, d.clone(), BTreeMap::new(), "").unwrap();
    let metric = TargetMetric::Euclidean(1);
    let p0 = [c(0.3, -0.2)];
    let strategy = Strategy::explicit(&["0.3 - 0.2*i".into()], "1/sqrt(n)", &BTreeMap::new()).unwrap();
    let opts = ProposeOptions {
        override_check: true,
        ..ProposeOptions::default()
    };
    let schedule = [16, 64, 256, 1024, 4096];
    let seq = propose_rescaling(&f, &d, metric, &p0, &strategy, &schedule, &opts).unwrap();
    let radius = 1.0;
    let samples = evaluate_rescaled(&f, &seq, radius, 9).unwrap();

    // Bound |f_j'| on the rescaled discs through the quotient: on the disc
    // |f'| = quotient / (1 - |z|^2).
    let mut bound = 0.0f64;
    for (k, &j) in schedule.iter().enumerate() {
        for xi in &samples.points {
            let z = [seq.centers[k][0] + xi[0] * seq.scales[k]];
            let q = marty_quotient(&f, j, &z, &d, metric).unwrap();
            bound = bound.max(q / (1.0 - z[0].norm_sqr()));
        }
    }
    let verdict = test_convergence(&samples, metric, 0.05, 1e3).unwrap();
    let ConvergenceOutcome::ConvergesUniformly { spread, nonconstant, .. } = verdict.outcome else {
        panic!("z/n rescaling did not converge: {:?}", verdict.outcome);
    };
    let rho = *seq.scales.last().unwrap();
    assert!(spread < rho * bound * 2.0 * radius + 1e-9, "spread {spread} vs bound {}", rho * bound * 2.0 * radius);
    assert!(!nonconstant);
}

#[test]
fn stated_nonconstant_limits_are_nonconstant() {
    for e in catalog_entries() {
        let Some(spec) = &e.rescaling else { continue };
        if e.disputed || spec.nonconstant != Some(true) {
            continue;
        }
        let result = run_catalog_entry(&e, 0);
        assert_eq!(result.rescale_nonconstant, Some(true), "{}: {:?}", e.name, result.rescale_outcome);
    }
}

/// Tail samples on a fixed grid; `shift` moves every value of index `t` by
/// `t * shift`, `noise` perturbs them.
fn synthetic(rng: &mut ChaCha8Rng, base: Complex64, shift: Complex64, noise: f64) -> RescaledSamples {
    let points: Vec<Vec<Complex64>> = (0..9).map(|k| vec![c(k as f64 / 8.0 - 0.5, 0.0)]).collect();
    let schedule: Vec<u64> = (0..6).map(|t| 4u64.pow(t)).collect();
    let values = (0..schedule.len())
        .map(|t| {
            points
                .iter()
                .map(|xi| {
                    let wobble = c(rng.random_range(-noise..noise), rng.random_range(-noise..noise));
                    Some(vec![base + xi[0] + shift * t as f64 + wobble])
                })
                .collect()
        })
        .collect();
    RescaledSamples {
        grid_radius: 0.5,
        points,
        schedule,
        values,
    }
}

#[test]
fn convergence_and_divergence_are_exclusive() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let tol = 0.05;
    for case in 0..50 {
        let escape = [0.5, 5.0, 1e3][case % 3];
        let base = c(rng.random_range(0.0..2.0 * escape), rng.random_range(-1.0..1.0));
        let step = [0.0, 0.5 * tol, tol, 2.0 * tol, 10.0][case % 5];
        let noise = rng.random_range(1e-6..tol);
        let samples = synthetic(&mut rng, base, c(step, 0.0), noise);
        let v = test_convergence(&samples, TargetMetric::Euclidean(1), tol, escape).unwrap();
        let cauchy = v.cauchy_defect < tol;
        let escapes = v.min_modulus.iter().all(|&m| m > escape)
            && v.min_modulus.windows(2).all(|w| w[1] >= w[0] + tol);
        assert!(!(cauchy && escapes), "case {case}: both conditions hold: {v:?}");
    }
}

#[test]
fn lemma_centers_stay_in_the_shrinking_ball() {
    for (name, p0) in [
        ("n_z1z2", vec![c(0.0, 0.0), c(0.3, 0.1)]),
        ("z1_pow_n", vec![c(0.999, 0.0), c(0.2, 0.0)]),
        ("n_z", vec![c(0.1, 0.0), c(-0.2, 0.3)]),
    ] {
        let e = entry(name).unwrap();
        let (f, d) = (e.family().unwrap(), e.domain().unwrap());
        let opts = ProposeOptions {
            override_check: true,
            ..ProposeOptions::default()
        };
        let schedule = [1, 4, 16, 64, 256, 1024];
        let seq = propose_rescaling(&f, &d, e.metric, &p0, &Strategy::Lemma, &schedule, &opts).unwrap();
        for (w, &j) in seq.centers.iter().zip(&schedule) {
            let dist = w.iter().zip(&p0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(dist <= 0.5 / (j as f64).sqrt(), "{name} j={j}: {dist}");
        }
    }
}

#[test]
fn shipped_catalog_matches_builtin_entries() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../catalog");
    let shipped = load_catalog_dir(&dir).unwrap();
    let builtin = catalog_entries();
    assert_eq!(shipped.len(), builtin.len());
    for e in &builtin {
        let text = std::fs::read_to_string(dir.join(e.file_name())).unwrap();
        assert_eq!(text, e.to_toml(), "{}", e.name);
        assert!(shipped.contains(e));
    }
}

#[test]
fn scan_of_n_z1z2_is_quasi_normal() {
    let cfg = RunConfig::from_toml(
        "[family]\ncomponents = [\"n*z1*z2\"]\ndim = 2\n\n[domain]\nname = \"polydisc\"\ncenter = [[0.0, 0.0], [0.0, 0.0]]\nradii = [1.0, 1.0]\n",
    )
    .unwrap();
    let report = scan(&cfg.resolve().unwrap()).unwrap();
    assert_eq!(report.verdict, Verdict::NotNormalQuasiNormal);
    assert_eq!(report.verdict.is_quasi_normal(), Some(true));
}

#[test]
fn exp_rescaling_is_exact() {
    let r = RunConfig::from_toml("[family]\ncatalog = \"exp_n_z1z2\"\n").unwrap().resolve().unwrap();
    let spec = r.rescaling.clone().unwrap();
    let summary = rescale(&r, &spec).unwrap();
    assert_eq!(summary.outcome, "ConvergesUniformly");
    assert!(summary.deviation.unwrap() < 1e-12, "{:?}", summary.deviation);
}
