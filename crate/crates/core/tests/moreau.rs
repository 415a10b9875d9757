use proptest::prelude::*;
use wcopt::linalg::{dist, norm};
use wcopt::moreau::{envelope_value, prox, MoreauConfig};
use wcopt::problems::{generate_instance, PoolSpec, ProblemInstance, Risk, Sample};

fn instance(kind: &str, d: usize, size: usize) -> ProblemInstance<f64> {
    let spec = PoolSpec {
        size,
        seed: 17,
        noise: 0.1,
        outlier_fraction: 0.1,
        anchor_norm: 1.0,
        warm_start: None,
    };
    let mut inst = generate_instance(kind, d, &spec).unwrap();
    inst.certify(1.0);
    inst
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn smooth_certificate_holds(w in point(3)) {
        let inst = instance("smoothed_regression", 3, 200);
        let rho = inst.constants.as_ref().unwrap().weak_convexity;
        let risk = Risk::new(&inst.loss, inst.pool.examples(), rho);
        let cfg = MoreauConfig::for_weak_convexity(rho, 1e-8).unwrap();
        let r = prox(&risk, &w, &cfg).unwrap();
        prop_assert!(r.inner_residual <= 1e-8);
        let (_, g) = risk.value_grad(&r.prox_point);
        let opt: Vec<f64> = g.iter().zip(&r.prox_point).zip(&w).map(|((g, p), w)| g + (p - w) / cfg.lambda).collect();
        prop_assert!(norm(&opt) <= 1e-8 + 1e-12);
    }

    #[test]
    fn envelope_identity_and_gradient(w in point(4), lambda in 0.05f64..0.2) {
        let inst = instance("phase_retrieval", 4, 100);
        let rho = inst.constants.as_ref().unwrap().weak_convexity;
        let risk = Risk::new(&inst.loss, inst.pool.examples(), rho);
        let cfg = MoreauConfig::new(lambda.min(0.9 / rho), 1e-8);
        let r = prox(&risk, &w, &cfg).unwrap();
        let gap = dist(&w, &r.prox_point);
        let identity = risk.value(&r.prox_point) + gap * gap / (2.0 * cfg.lambda);
        prop_assert!((r.envelope_value - identity).abs() <= 1e-10);
        for ((g, a), b) in r.envelope_gradient.iter().zip(&w).zip(&r.prox_point) {
            prop_assert_eq!(*g, (a - b) / cfg.lambda);
        }
    }

    #[test]
    fn convex_prox_is_nonexpansive(u in point(3), w in point(3), lambda in 0.01f64..5.0) {
        let inst = instance("absolute_regression", 3, 200);
        let risk = Risk::new(&inst.loss, inst.pool.examples(), 0.0);
        let cfg = MoreauConfig::new(lambda, 1e-8);
        let pu = prox(&risk, &u, &cfg).unwrap().prox_point;
        let pw = prox(&risk, &w, &cfg).unwrap().prox_point;
        prop_assert!(dist(&pu, &pw) <= dist(&u, &w) + 4.0 * 1e-8 * lambda);
    }
}

#[test]
fn envelope_gradient_matches_finite_differences_in_two_dimensions() {
    let inst = instance("phase_retrieval", 2, 50);
    let rho = inst.constants.as_ref().unwrap().weak_convexity;
    let risk = Risk::new(&inst.loss, inst.pool.examples(), rho);
    let cfg = MoreauConfig::for_weak_convexity(rho, 1e-8).unwrap();
    let h = 1e-5;
    for k in 0..50 {
        let t = k as f64 * 0.37;
        let w = vec![0.8 * t.cos() * (k as f64 / 50.0), 0.8 * t.sin()];
        let g = prox(&risk, &w, &cfg).unwrap().envelope_gradient;
        let fd: Vec<f64> = (0..2)
            .map(|j| {
                let (mut up, mut down) = (w.clone(), w.clone());
                up[j] += h;
                down[j] -= h;
                (envelope_value(&risk, &up, &cfg).unwrap() - envelope_value(&risk, &down, &cfg).unwrap()) / (2.0 * h)
            })
            .collect();
        let err = dist(&g, &fd) / norm(&g);
        assert!(err <= 1e-4, "point {k}: relative error {err}");
    }
}

#[test]
fn population_prox_converges_on_large_pool() {
    let inst = instance("phase_retrieval", 5, 20_000);
    let rho = inst.constants.as_ref().unwrap().weak_convexity;
    let risk = Risk::new(&inst.loss, inst.pool.examples(), rho);
    let cfg = MoreauConfig::for_weak_convexity(rho, 1e-8).unwrap();
    let r = prox(&risk, &[0.1, -0.2, 0.3, 0.0, 0.05], &cfg).unwrap();
    assert!(r.inner_residual <= 1e-8);
}
