//! Generalization gaps at trained models, the stability-based right-hand
//! sides they are compared against, and log-log rate fits.
//!
//! Population quantities are computed exactly over the finite pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::moreau::{prox, MoreauConfig};
use crate::optimizers::{run_optimizer, OptimizerConfig};
use crate::problems::{Dataset, Loss, PopulationPool, ProblemConstants, Risk, Sample};
use crate::rng::{derive_seed, tag};
use crate::scalar::{widen, Scalar};
use crate::stats::{mean_se, quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    /// `F(A(S)) - F_S(A(S))`
    FunctionValues,
    /// `||grad F(A(S)) - grad F_S(A(S))||`, smooth losses only.
    Gradients,
    /// `||grad F_lambda(A(S)) - grad F_{S,lambda}(A(S))||`
    MoreauGradients,
}

impl GapKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GapKind::FunctionValues => "function_values",
            GapKind::Gradients => "gradients",
            GapKind::MoreauGradients => "moreau_gradients",
        }
    }
}

/// Quantities measured at one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub gap: f64,
    /// `F(A(S))`, `||grad F(A(S))||` or `||grad F_lambda(A(S))||`.
    pub population: f64,
    /// The same quantity for the empirical risk.
    pub empirical: f64,
    /// Gradient variance over the pool (gradient gaps only).
    pub variance: Option<f64>,
    /// Larger of the two prox certificates (Moreau gaps only).
    pub inner_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gap_kind: GapKind,
    pub gap_estimate: f64,
    pub std_error: f64,
    pub variance_term: Option<f64>,
    pub rhs_bound: Option<f64>,
    pub datasets_sampled: usize,
    pub n: usize,
    pub population_mean: f64,
    pub population_std_error: f64,
    pub empirical_mean: f64,
    pub empirical_std_error: f64,
    pub quantile_90: f64,
    pub max_inner_residual: Option<f64>,
    #[serde(skip)]
    pub draws: Vec<DrawRecord>,
}

impl GapReport {
    fn from_draws(kind: GapKind, n: usize, draws: Vec<DrawRecord>) -> Self {
        let gaps: Vec<f64> = draws.iter().map(|r| r.gap).collect();
        let pops: Vec<f64> = draws.iter().map(|r| r.population).collect();
        let emps: Vec<f64> = draws.iter().map(|r| r.empirical).collect();
        let (gap_estimate, std_error) = mean_se(&gaps);
        let (population_mean, population_std_error) = mean_se(&pops);
        let (empirical_mean, empirical_std_error) = mean_se(&emps);
        let variances: Vec<f64> = draws.iter().filter_map(|r| r.variance).collect();
        let variance_term = (!variances.is_empty()).then(|| mean_se(&variances).0);
        let max_inner_residual = draws
            .iter()
            .filter_map(|r| r.inner_residual)
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
        Self {
            gap_kind: kind,
            gap_estimate,
            std_error,
            variance_term,
            rhs_bound: None,
            datasets_sampled: draws.len(),
            n,
            population_mean,
            population_std_error,
            empirical_mean,
            empirical_std_error,
            quantile_90: quantile(&gaps, 0.9),
            max_inner_residual,
            draws,
        }
    }

    pub fn with_bound(mut self, rhs: f64) -> Self {
        self.rhs_bound = Some(rhs);
        self
    }
}

/// Gap quantities for a model `w` trained on `data`.
pub fn gap_for_dataset<T: Scalar>(
    loss: &Loss<T>,
    constants: &ProblemConstants<T>,
    pool: &PopulationPool<T>,
    data: &Dataset<T>,
    w: &[T],
    kind: GapKind,
    moreau: Option<&MoreauConfig<T>>,
) -> Result<DrawRecord> {
    let rho = constants.weak_convexity;
    let population = Risk::new(loss, pool.examples(), rho);
    let empirical = Risk::new(loss, data.examples(), rho);
    Ok(match kind {
        GapKind::FunctionValues => {
            let f = widen(population.value(w));
            let fs = widen(empirical.value(w));
            DrawRecord {
                gap: f - fs,
                population: f,
                empirical: fs,
                variance: None,
                inner_residual: None,
            }
        }
        GapKind::Gradients => {
            if !loss.is_smooth() {
                return Err(Error::Unsupported(format!("gradient gap of nonsmooth loss `{}`", loss.name())));
            }
            let (_, g) = population.value_grad(w);
            let (_, gs) = empirical.value_grad(w);
            DrawRecord {
                gap: widen(dist(&g, &gs)),
                population: widen(norm(&g)),
                empirical: widen(norm(&gs)),
                variance: Some(widen(population.gradient_variance(w))),
                inner_residual: None,
            }
        }
        GapKind::MoreauGradients => {
            let cfg = moreau.ok_or_else(|| Error::Config("the Moreau gap needs a Moreau configuration".into()))?;
            let p = prox(&population, w, cfg)?;
            let ps = prox(&empirical, w, cfg)?;
            DrawRecord {
                gap: widen(dist(&p.envelope_gradient, &ps.envelope_gradient)),
                population: widen(norm(&p.envelope_gradient)),
                empirical: widen(norm(&ps.envelope_gradient)),
                variance: None,
                inner_residual: Some(widen(p.inner_residual.max(ps.inner_residual))),
            }
        }
    })
}

/// Averages a gap over `draws` datasets of size `n` drawn with replacement
/// from the pool. Draw `k` uses dataset seed `(seed, DATASET, k)` and run
/// seed `(seed, DRAW_RUN, k)`.
#[allow(clippy::too_many_arguments)]
pub fn generalization_gap<T: Scalar>(
    loss: &Loss<T>,
    constants: &ProblemConstants<T>,
    pool: &PopulationPool<T>,
    n: usize,
    config: &OptimizerConfig<T>,
    kind: GapKind,
    draws: usize,
    moreau: Option<&MoreauConfig<T>>,
) -> Result<GapReport> {
    if draws == 0 {
        return Err(Error::Config("at least one dataset draw is required".into()));
    }
    if kind == GapKind::Gradients && !loss.is_smooth() {
        return Err(Error::Unsupported(format!("gradient gap of nonsmooth loss `{}`", loss.name())));
    }
    if kind == GapKind::MoreauGradients && moreau.is_none() {
        return Err(Error::Config("the Moreau gap needs a Moreau configuration".into()));
    }
    if n > pool.size() {
        return Err(Error::Config(format!("n = {n} exceeds the pool size {}", pool.size())));
    }
    config.validate(n)?;
    let records = (0..draws)
        .into_par_iter()
        .map(|k| {
            let data = pool.draw_dataset(n, derive_seed(config.seed, &[tag::DATASET, k as u64]))?;
            let cfg = config.with_seed(derive_seed(config.seed, &[tag::DRAW_RUN, k as u64]));
            let trace = run_optimizer(loss, &data, &cfg)?;
            gap_for_dataset(loss, constants, pool, &data, &trace.output, kind, moreau)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapReport::from_draws(kind, n, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundTheorem {
    /// `4 eps + sqrt(V / n)`
    GradGap,
    /// `4 G / sqrt(n) + sqrt(32 G eps rho)`
    MoreauGap,
}

pub fn stability_bound_rhs<T: Scalar>(
    theorem: BoundTheorem,
    epsilon: f64,
    constants: &ProblemConstants<T>,
    n: usize,
    variance: Option<f64>,
) -> Result<f64> {
    if !(epsilon >= 0.0) || n == 0 {
        return Err(Error::Config("epsilon must be nonnegative and n positive".into()));
    }
    let nf = n as f64;
    match theorem {
        BoundTheorem::GradGap => {
            let v = variance.ok_or_else(|| Error::Config("the gradient-gap bound needs V".into()))?;
            if !(v >= 0.0) {
                return Err(Error::Config("V must be nonnegative".into()));
            }
            Ok(4.0 * epsilon + (v / nf).sqrt())
        }
        BoundTheorem::MoreauGap => {
            let g = widen(constants.lipschitz);
            let rho = widen(constants.weak_convexity);
            Ok(4.0 * g / nf.sqrt() + (32.0 * g * epsilon * rho).sqrt())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

/// Least squares line through `(ln n, ln value)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(Error::Config(format!("a rate fit needs at least 4 points, got {}", points.len())));
    }
    if let Some(&(x, y)) = points.iter().find(|&&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::Domain(format!("rate fit point ({x}, {y}) is not positive")));
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("rate fit needs at least two distinct n".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::{OutputSelector, StepSchedule};
    use crate::problems::Example;

    fn constants(g: f64, rho: f64) -> ProblemConstants<f64> {
        ProblemConstants {
            lipschitz: g,
            weak_convexity: rho,
            smoothness: None,
            value_bound: None,
            radius: None,
            sgc_rho: None,
        }
    }

    #[test]
    fn rhs_examples() {
        let c = constants(1.0, 1.0);
        let v = stability_bound_rhs(BoundTheorem::GradGap, 0.0, &c, 100, Some(1.0)).unwrap();
        assert!((v - 0.1).abs() < 1e-15);
        let v = stability_bound_rhs(BoundTheorem::MoreauGap, 0.01, &c, 100, None).unwrap();
        assert!((v - 0.965685424949238).abs() < 1e-12);
        let c = constants(3.0, 2.0);
        assert_eq!(stability_bound_rhs(BoundTheorem::MoreauGap, 0.0, &c, 25, None).unwrap(), 12.0 / 5.0);
        assert!(stability_bound_rhs(BoundTheorem::GradGap, 0.1, &c, 25, None).is_err());
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [1e2, 1e3, 1e4, 1e5].iter().map(|&n: &f64| (n, 3.0 * n.powf(-1.0 / 6.0))).collect();
        let fit = fit_rate(&pts).unwrap();
        assert!((fit.slope + 1.0 / 6.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 4.0].iter().map(|&n| (n, 0.7)).collect();
        let fit = fit_rate(&flat).unwrap();
        assert_eq!(fit.slope, 0.0);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_rate(&[(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]).is_err());
        assert!(matches!(
            fit_rate(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0)]),
            Err(Error::Domain(_))
        ));
    }

    fn small_pool() -> PopulationPool<f64> {
        PopulationPool::new(
            (0..20)
                .map(|i| Example::new(vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()], 0.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_loss_has_no_gap() {
        let loss = Loss::Constant { d: 2, value: 1.5 };
        let pool = small_pool();
        let c = constants(0.0, 0.0);
        let cfg = OptimizerConfig::sgd(10, StepSchedule::constant(0.1), OutputSelector::Average, 3);
        for kind in [GapKind::FunctionValues, GapKind::Gradients] {
            let r = generalization_gap(&loss, &c, &pool, 5, &cfg, kind, 4, None).unwrap();
            assert_eq!(r.gap_estimate, 0.0);
            assert_eq!(r.datasets_sampled, 4);
        }
    }

    #[test]
    fn full_pool_dataset_has_no_gap() {
        let loss = Loss::Quadratic { d: 2 };
        let pool = small_pool();
        let c = constants(2.0, 0.0);
        let data = pool.as_dataset();
        let moreau = MoreauConfig::new(0.5, 1e-12);
        for kind in [GapKind::FunctionValues, GapKind::Gradients, GapKind::MoreauGradients] {
            let r = gap_for_dataset(&loss, &c, &pool, &data, &[0.0, 0.0], kind, Some(&moreau)).unwrap();
            assert_eq!(r.gap, 0.0);
        }
    }

    #[test]
    fn gap_errors() {
        let pool = small_pool();
        let c = constants(1.0, 0.0);
        let cfg = OptimizerConfig::sgd(3, StepSchedule::constant(0.1), OutputSelector::Last, 1);
        let abs = Loss::AbsoluteRegression { d: 2 };
        assert!(matches!(
            generalization_gap(&abs, &c, &pool, 5, &cfg, GapKind::Gradients, 2, None),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            generalization_gap(&abs, &c, &pool, 5, &cfg, GapKind::MoreauGradients, 2, None),
            Err(Error::Config(_))
        ));
    }
}
