use std::collections::BTreeMap;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zlab_core::catalog::catalog_entries;
use zlab_core::{parse, Complex64, DualComplex, Domain, HolomorphicFamily};

const STEP: f64 = 1e-5;

/// Central differences with the complex steps `±h` and `±ih`, averaged.
/// For holomorphic maps the `h^2` terms of the two cancel.
fn complex_central(f: &HolomorphicFamily, p: &[Complex64], j: u64, h: f64) -> DMatrix<Complex64> {
    let (k, n) = (f.target_dim(), f.ambient_dim());
    let mut m = DMatrix::zeros(k, n);
    for b in 0..n {
        let at = |step: Complex64| {
            let mut q = p.to_vec();
            q[b] += step;
            f.eval(&q, j).unwrap()
        };
        let hr = Complex64::new(h, 0.0);
        let hi = Complex64::new(0.0, h);
        let (rp, rm, ip, im) = (at(hr), at(-hr), at(hi), at(-hi));
        for a in 0..k {
            m[(a, b)] = ((rp[a] - rm[a]) / (2.0 * hr) + (ip[a] - im[a]) / (2.0 * hi)) / 2.0;
        }
    }
    m
}

fn random_point(domain: &Domain, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    loop {
        let p: Vec<Complex64> = (0..domain.dim())
            .map(|_| Complex64::new(rng.random_range(-0.95..0.95), rng.random_range(-0.95..0.95)))
            .collect();
        if domain.contains(&p) {
            return p;
        }
    }
}

#[test]
fn catalog_jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for e in catalog_entries() {
        let f = e.family().unwrap();
        for _ in 0..20 {
            let p = random_point(f.domain(), &mut rng);
            for j in [1u64, 5, 50] {
                let exact = f.jacobian(&p, j).unwrap();
                let approx = complex_central(&f, &p, j, STEP);
                let scale = exact.iter().map(|z| z.norm()).fold(0.0, f64::max);
                let err = (&exact - &approx).iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(
                    err <= 1e-6 * scale,
                    "{} j={j} p={p:?}: error {err:e} vs scale {scale:e}",
                    e.name
                );
            }
        }
    }
}

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("z1".to_string()),
        Just("z2".to_string()),
        Just("n".to_string()),
        Just("i".to_string()),
        (-2.0f64..2.0).prop_map(|v| format!("{v:.3}")),
    ]
}

fn expr() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) * ({b})")),
            inner.clone().prop_map(|a| format!("({a})^2")),
            inner.clone().prop_map(|a| format!("exp({a})")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.prop_map(|a| format!("cos({a})")),
        ]
    })
}

fn family(src: &str) -> HolomorphicFamily {
    HolomorphicFamily::parse(&[src], 2, Domain::full_space(2), BTreeMap::new(), "").unwrap()
}

fn point() -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-0.8f64..0.8, -0.8f64..0.8).prop_map(|(a, b)| Complex64::new(a, b)), 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn jacobian_is_additive(f in expr(), g in expr(), p in point(), j in 1u64..8) {
        let sum = family(&format!("({f}) + ({g})"));
        let (jf, jg) = (family(&f).jacobian(&p, j).unwrap(), family(&g).jacobian(&p, j).unwrap());
        let js = sum.jacobian(&p, j).unwrap();
        prop_assume!(jf.iter().chain(jg.iter()).all(|z| z.is_finite()));
        for b in 0..2 {
            let want = jf[(0, b)] + jg[(0, b)];
            let tol = 1e-12 * (1.0 + jf[(0, b)].norm() + jg[(0, b)].norm());
            prop_assert!((js[(0, b)] - want).norm() <= tol, "{} vs {}", js[(0, b)], want);
        }
    }

    #[test]
    fn eval_is_deterministic(f in expr(), p in point(), j in 1u64..50) {
        let fam = family(&f);
        let a = fam.eval_with_jacobian(&p, j).unwrap();
        let b = fam.eval_with_jacobian(&p, j).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
            prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
        for (x, y) in a.1.iter().zip(b.1.iter()) {
            prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
            prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }
}

fn dual() -> impl Strategy<Value = DualComplex> {
    (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0)
        .prop_map(|(a, b, c, d)| DualComplex::new(Complex64::new(a, b), Complex64::new(c, d)))
}

proptest! {
    #[test]
    fn print_then_parse_is_a_fixed_point(src in expr()) {
        let once = parse(&src, 2).unwrap();
        let printed = once.to_string();
        let twice = parse(&printed, 2).unwrap();
        prop_assert_eq!(&once, &twice, "{} printed as {}", src, printed);
        prop_assert_eq!(printed, twice.to_string());
    }

    #[test]
    fn dual_product_rule_is_exact(a in dual(), b in dual()) {
        let p = a * b;
        prop_assert_eq!(p.value, a.value * b.value);
        prop_assert_eq!(p.derivative, a.value * b.derivative + a.derivative * b.value);
    }
}
