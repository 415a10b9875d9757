use proptest::prelude::*;
use wcopt::generalization::{fit_rate, gap_for_dataset, generalization_gap, stability_bound_rhs, BoundTheorem};
use wcopt::moreau::MoreauConfig;
use wcopt::optimizers::{OptimizerConfig, OutputSelector, StepSchedule};
use wcopt::problems::{generate_instance, PoolSpec, Sample};
use wcopt::rng::{derive_seed, tag};
use wcopt::stability::{coupled_stability_estimate, neighbor_dataset, Measure};
use wcopt::GapKind;

fn spec(size: usize, seed: u64) -> PoolSpec {
    PoolSpec {
        size,
        seed,
        noise: 0.1,
        outlier_fraction: 0.1,
        anchor_norm: 1.0,
        warm_start: Some(0.25),
    }
}

proptest! {
    #[test]
    fn planted_power_laws_are_recovered(slope in -2.0f64..2.0, scale in 0.01f64..100.0) {
        let pts: Vec<(f64, f64)> = [250.0, 500.0, 1000.0, 2000.0, 4000.0].iter().map(|&n: &f64| (n, scale * n.powf(slope))).collect();
        let fit = fit_rate(&pts).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-12);
        prop_assert!((fit.r_squared - 1.0).abs() < 1e-12);
        prop_assert!((fit.intercept - scale.ln()).abs() < 1e-9);
    }
}

#[test]
fn gradient_gap_respects_stability_bound() {
    let mut inst = generate_instance::<f64>("smoothed_regression", 3, &spec(3000, 1)).unwrap();
    let c = inst.certify(1.0);
    let n = 100;
    let cfg = OptimizerConfig::sgd(50, StepSchedule::constant(0.1), OutputSelector::Last, 4).with_projection(1.0);
    let s = inst.pool.draw_dataset(n, 5).unwrap();
    let z = inst.pool.draw_replacement(s.get(0), 6);
    let pair = neighbor_dataset(&s, 1, z).unwrap();
    let st = coupled_stability_estimate(&inst.loss, &pair, &cfg, Measure::Gradients, 400, &inst.pool.examples()[..500], None)
        .unwrap();
    let gap = generalization_gap(&inst.loss, &c, &inst.pool, n, &cfg, GapKind::Gradients, 100, None).unwrap();
    let v = gap.variance_term.unwrap();
    let rhs = stability_bound_rhs(BoundTheorem::GradGap, st.epsilon_hat + 3.0 * st.std_error, &c, n, Some(v)).unwrap();
    assert!(gap.gap_estimate <= rhs + 3.0 * gap.std_error, "gap {} rhs {rhs}", gap.gap_estimate);
}

#[test]
fn moreau_decomposition_holds_per_draw() {
    let mut inst = generate_instance::<f64>("phase_retrieval", 3, &spec(5000, 2)).unwrap();
    let c = inst.certify(1.0);
    let moreau = MoreauConfig::for_weak_convexity(c.weak_convexity, 1e-8).unwrap();
    let cfg = OptimizerConfig::sgd(100, StepSchedule::constant(0.02), OutputSelector::RandomIterate, 3).with_projection(1.0);
    for k in 0..20u64 {
        let data = inst.pool.draw_dataset(200, derive_seed(9, &[tag::DATASET, k])).unwrap();
        let run = cfg.with_seed(derive_seed(9, &[tag::DRAW_RUN, k]));
        let w = wcopt::optimizers::run_optimizer(&inst.loss, &data, &run).unwrap().output;
        let r = gap_for_dataset(&inst.loss, &c, &inst.pool, &data, &w, GapKind::MoreauGradients, Some(&moreau)).unwrap();
        let slack = 4.0 * r.inner_residual.unwrap() / moreau.lambda;
        assert!(r.population <= r.gap + r.empirical + slack, "draw {k}: {r:?}");
    }
}

#[test]
fn moreau_gap_quantile_shrinks_with_n() {
    let mut inst = generate_instance::<f64>("phase_retrieval", 3, &spec(5000, 3)).unwrap();
    let c = inst.certify(1.0);
    let moreau = MoreauConfig::for_weak_convexity(c.weak_convexity, 1e-6).unwrap();
    let q: Vec<f64> = [500usize, 1000, 2000]
        .iter()
        .map(|&n| {
            let cfg = OptimizerConfig::sgd(100, StepSchedule::constant(0.02), OutputSelector::RandomIterate, 4)
                .with_projection(1.0);
            let rep = generalization_gap(&inst.loss, &c, &inst.pool, n, &cfg, GapKind::MoreauGradients, 40, Some(&moreau))
                .unwrap();
            rep.quantile_90
        })
        .collect();
    assert!(q.iter().all(|x| x.is_finite()));
    assert!(q[0] > q[1] && q[1] > q[2], "{q:?}");
}
