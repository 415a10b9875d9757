//! Proximal points and Moreau envelopes of empirical and population risks.
//!
//! For a `rho`-weakly convex risk `psi` and `lambda < 1/rho` the subproblem
//! `min_v psi(v) + ||w - v||^2 / (2 lambda)` is `(1/lambda - rho)`-strongly
//! convex. It is solved by damped Newton steps on a Huber smoothing of every
//! `|.|` kink, with the Huber width shrunk geometrically down to
//! [`Scalar::kink_tolerance`]. At the final width the smoothed gradient is a
//! subgradient of `psi` in which every term within the kink tolerance takes
//! its coefficient from `[-1, 1]`; its optimality residual is the reported
//! certificate.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, norm, SymMatrix};
use crate::problems::{sign0, ParamVector, Risk};
use crate::scalar::{lit, widen, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoreauConfig<T> {
    pub lambda: T,
    pub inner_tolerance: T,
    pub inner_max_iters: usize,
}

impl<T: Scalar> MoreauConfig<T> {
    pub fn new(lambda: T, inner_tolerance: T) -> Self {
        Self {
            lambda,
            inner_tolerance,
            inner_max_iters: 100_000,
        }
    }

    /// `lambda = 1 / (2 rho)`.
    pub fn for_weak_convexity(rho: T, inner_tolerance: T) -> Result<Self> {
        if !(rho > T::zero()) {
            return Err(Error::Domain("default lambda needs rho > 0".into()));
        }
        Ok(Self::new(T::one() / (rho + rho), inner_tolerance))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoreauResult<T> {
    pub prox_point: ParamVector<T>,
    pub envelope_value: T,
    pub envelope_gradient: ParamVector<T>,
    pub inner_residual: T,
    pub inner_iters: usize,
}

impl<T: Scalar> MoreauResult<T> {
    fn assemble(w: &[T], prox_point: ParamVector<T>, psi_at_prox: T, lambda: T, residual: T, iters: usize) -> Self {
        let gap = dist(w, &prox_point);
        let envelope_value = psi_at_prox + gap * gap / (lambda + lambda);
        let envelope_gradient = w.iter().zip(&prox_point).map(|(&a, &b)| (a - b) / lambda).collect();
        Self {
            prox_point,
            envelope_value,
            envelope_gradient,
            inner_residual: residual,
            inner_iters: iters,
        }
    }
}

/// Shrink factor between Huber widths.
const WIDTH_SHRINK: f64 = 0.01;
const MAX_BISECTIONS: usize = 200;
/// Newton steps allowed without a new smallest gradient norm in a stage.
const MAX_NONIMPROVING: usize = 20;

#[derive(Clone)]
struct Point<T> {
    v: Vec<T>,
    value: T,
    grad: Vec<T>,
    hess: SymMatrix<T>,
}

fn evaluate<T: Scalar>(risk: &Risk<T>, w: &[T], v: Vec<T>, mu: T, inv_lambda: T) -> Point<T> {
    let d = v.len();
    let mut grad = vec![T::zero(); d];
    let mut hess = SymMatrix::zeros(d);
    let mut value = risk.smoothed(&v, mu, &mut grad, &mut hess);
    let mut prox_sq = T::zero();
    for ((g, &vi), &wi) in grad.iter_mut().zip(&v).zip(w) {
        let diff = vi - wi;
        prox_sq = prox_sq + diff * diff;
        *g = *g + diff * inv_lambda;
    }
    value = value + prox_sq * inv_lambda / lit(2.0);
    hess.add_diagonal(inv_lambda);
    Point { v, value, grad, hess }
}

/// Directional derivative of the smoothed subproblem at `v + alpha p`.
fn directional<T: Scalar>(risk: &Risk<T>, w: &[T], v: &[T], p: &[T], alpha: T, mu: T, inv_lambda: T) -> T {
    let x: Vec<T> = v.iter().zip(p).map(|(&a, &b)| a + alpha * b).collect();
    let weight = T::one() / lit(risk.examples.len() as f64);
    let mut g = vec![T::zero(); x.len()];
    for z in risk.examples {
        risk.loss.smoothed(&x, z, mu, weight, Some(&mut g), None);
    }
    g.iter()
        .zip(&x)
        .zip(w)
        .zip(p)
        .fold(T::zero(), |acc, (((&gi, &xi), &wi), &pi)| acc + (gi + (xi - wi) * inv_lambda) * pi)
}

/// Minimizes the (strongly convex) subproblem along `p` by bisection on the
/// directional derivative. Returns `None` when no decrease is found.
fn exact_line_search<T: Scalar>(
    risk: &Risk<T>,
    w: &[T],
    cur: &Point<T>,
    p: &[T],
    mu: T,
    inv_lambda: T,
) -> Option<Point<T>> {
    let two = lit::<T>(2.0);
    let (mut lo, mut hi) = (T::zero(), T::one());
    while directional(risk, w, &cur.v, p, hi, mu, inv_lambda) < T::zero() {
        lo = hi;
        hi = hi * two;
        if hi > lit(1e12) {
            break;
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let d = directional(risk, w, &cur.v, p, mid, mu, inv_lambda);
        if d < T::zero() {
            lo = mid;
        } else if d > T::zero() {
            hi = mid;
        } else {
            lo = mid;
            hi = mid;
        }
    }
    // The derivative is negative on [0, lo], so any lo > 0 decreases the
    // objective even when the decrease is below the round-off of its value.
    [lo, hi]
        .into_iter()
        .filter(|&a| a > T::zero() && (a == lo || hi - lo <= lit::<T>(4.0) * T::epsilon() * hi))
        .map(|a| {
            let v: Vec<T> = cur.v.iter().zip(p).map(|(&x, &pi)| x + a * pi).collect();
            evaluate(risk, w, v, mu, inv_lambda)
        })
        .min_by(|a, b| norm(&a.grad).partial_cmp(&norm(&b.grad)).unwrap_or(std::cmp::Ordering::Equal))
}

/// Largest kink set the certificate polish will handle.
const MAX_POLISH_TERMS: usize = 512;

/// Optimality residual after re-choosing, within `[-1, 1]`, the coefficients
/// of the terms whose kink argument lies inside the Huber zone.
///
/// Inside the zone the smoothed coefficient `c / mu` is only resolved to
/// about `ulp(c) / mu`, which at the final width can dwarf the tolerance.
fn polished_residual<T: Scalar>(risk: &Risk<T>, cur: &Point<T>, mu: T) -> T {
    let weight = T::one() / lit(risk.examples.len() as f64);
    let mut coef = Vec::new();
    let mut cols: Vec<Vec<T>> = Vec::new();
    for z in risk.examples {
        if let Some((c, dc)) = risk.loss.kink(&cur.v, z) {
            if c.abs() <= mu {
                if cols.len() == MAX_POLISH_TERMS {
                    return norm(&cur.grad);
                }
                coef.push(c / mu);
                cols.push(dc.into_iter().map(|x| x * weight).collect());
            }
        }
    }
    if cols.is_empty() {
        return norm(&cur.grad);
    }
    let k = cols.len();
    let mut g = cur.grad.clone();
    let mut free = vec![true; k];
    for _ in 0..4 {
        // Least squares for the free corrections, min ||g + sum_j delta_j col_j||.
        let idx: Vec<usize> = (0..k).filter(|&j| free[j]).collect();
        if idx.is_empty() {
            break;
        }
        let mut gram = SymMatrix::zeros(idx.len());
        let mut trace = T::zero();
        for (p, &i) in idx.iter().enumerate() {
            for (q, &j) in idx.iter().enumerate().skip(p) {
                let v = cols[i].iter().zip(&cols[j]).fold(T::zero(), |a, (&x, &y)| a + x * y);
                gram.set(p, q, v);
                if p == q {
                    trace = trace + v;
                }
            }
        }
        gram.add_diagonal(trace * lit(1e-14) + T::min_positive_value());
        let rhs: Vec<T> = idx
            .iter()
            .map(|&i| -cols[i].iter().zip(&g).fold(T::zero(), |a, (&x, &y)| a + x * y))
            .collect();
        let Some(delta) = gram.cholesky_solve(&rhs) else { break };
        let mut clipped = false;
        for (&i, &di) in idx.iter().zip(&delta) {
            let target = coef[i] + di;
            let bounded = target.max(-T::one()).min(T::one());
            if bounded != target {
                free[i] = false;
                clipped = true;
            }
            let applied = bounded - coef[i];
            coef[i] = bounded;
            for (gi, &x) in g.iter_mut().zip(&cols[i]) {
                *gi = *gi + applied * x;
            }
        }
        if !clipped {
            break;
        }
    }
    norm(&g).min(norm(&cur.grad))
}

/// `prox_{lambda psi}(w)` with envelope value and gradient.
pub fn prox<T: Scalar>(objective: &Risk<T>, w: &[T], config: &MoreauConfig<T>) -> Result<MoreauResult<T>> {
    let lambda = config.lambda;
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if lambda * objective.weak_convexity >= T::one() {
        return Err(Error::Domain(format!(
            "lambda {lambda} is not below 1/rho for rho = {}",
            objective.weak_convexity
        )));
    }
    if !(config.inner_tolerance > T::zero()) {
        return Err(Error::Config("inner tolerance must be positive".into()));
    }
    if w.len() != objective.dim() {
        return Err(Error::Config(format!(
            "point has dimension {}, expected {}",
            w.len(),
            objective.dim()
        )));
    }
    if objective.examples.is_empty() {
        return Err(Error::Config("prox of a risk over an empty sample".into()));
    }

    let inv_lambda = T::one() / lambda;
    let tol = config.inner_tolerance;
    let kink = T::kink_tolerance();
    let smooth = objective.loss.is_smooth();
    let mut mu = if smooth { T::zero() } else { T::one() };
    let mut iters = 0usize;
    let mut cur = evaluate(objective, w, w.to_vec(), mu, inv_lambda);

    loop {
        let last_stage = smooth || mu <= kink;
        let stage_tol = if last_stage { tol } else { tol.max(mu) };
        let mut stalled = false;
        let mut best = cur.clone();
        let mut since_best = 0usize;
        while norm(&cur.grad) > stage_tol {
            if iters >= config.inner_max_iters {
                stalled = true;
                break;
            }
            iters += 1;
            let rhs: Vec<T> = cur.grad.iter().map(|&g| -g).collect();
            let step = cur.hess.cholesky_solve(&rhs).unwrap_or_else(|| {
                rhs.iter().map(|&g| g * lambda).collect()
            });
            let slope: T = step.iter().zip(&cur.grad).fold(T::zero(), |a, (&p, &g)| a + p * g);
            let full: Vec<T> = cur.v.iter().zip(&step).map(|(&x, &p)| x + p).collect();
            let trial = evaluate(objective, w, full, mu, inv_lambda);
            let accepted = if trial.value <= cur.value + lit::<T>(1e-4) * slope {
                Some(trial)
            } else {
                exact_line_search(objective, w, &cur, &step, mu, inv_lambda)
            };
            match accepted {
                Some(next) if next.v != cur.v => cur = next,
                _ => {
                    stalled = true;
                    break;
                }
            }
            if norm(&cur.grad) < norm(&best.grad) {
                best = cur.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= MAX_NONIMPROVING {
                    stalled = true;
                    break;
                }
            }
        }
        if norm(&best.grad) < norm(&cur.grad) {
            cur = best;
        }
        if last_stage {
            let mut residual = norm(&cur.grad);
            if residual > tol && !smooth {
                residual = residual.min(polished_residual(objective, &cur, mu));
            }
            if stalled && residual > tol {
                return Err(Error::NonConverged {
                    best: cur.v.iter().map(|&x| widen(x)).collect(),
                    residual: widen(residual),
                    iters,
                });
            }
            let psi = objective.value(&cur.v);
            return Ok(MoreauResult::assemble(w, cur.v, psi, lambda, residual, iters));
        }
        mu = (mu * lit(WIDTH_SHRINK)).max(kink);
        cur = evaluate(objective, w, cur.v, mu, inv_lambda);
    }
}

/// Moreau envelope value `psi_lambda(w)`.
pub fn envelope_value<T: Scalar>(objective: &Risk<T>, w: &[T], config: &MoreauConfig<T>) -> Result<T> {
    prox(objective, w, config).map(|r| r.envelope_value)
}

/// Envelope gradient `(w - prox(w)) / lambda`.
pub fn envelope_gradient<T: Scalar>(objective: &Risk<T>, w: &[T], config: &MoreauConfig<T>) -> Result<ParamVector<T>> {
    prox(objective, w, config).map(|r| r.envelope_gradient)
}

/// Approximate minimizer of a risk by proximal-point iterations
/// `v <- prox_{lambda psi}(v)`, stopped once a step is shorter than `tol`,
/// the risk stops decreasing, or after `max_outer` steps. Returns the last point and its risk.
pub fn minimize_risk<T: Scalar>(
    objective: &Risk<T>,
    start: &[T],
    config: &MoreauConfig<T>,
    tol: T,
    max_outer: usize,
) -> Result<(ParamVector<T>, T)> {
    let mut v = start.to_vec();
    let mut value = objective.value(&v);
    for _ in 0..max_outer {
        let next = prox(objective, &v, config)?.prox_point;
        let next_value = objective.value(&next);
        if next_value >= value {
            break;
        }
        let step = dist(&next, &v);
        v = next;
        value = next_value;
        if step <= tol {
            break;
        }
    }
    Ok((v, value))
}

/// One-dimensional functions with closed-form proximal maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedFormKind {
    /// `psi(w) = w^2 / 2`
    Quadratic,
    /// `psi(w) = |w|`
    Absolute,
}

impl FromStr for ClosedFormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(Self::Quadratic),
            "absolute" => Ok(Self::Absolute),
            other => Err(Error::Unsupported(format!("no closed-form prox for `{other}`"))),
        }
    }
}

/// Exact prox of a 1-D quadratic or absolute value. `lambda = 0` returns
/// the identity map with the gradient taken as the `lambda -> 0` limit.
pub fn prox_oracle_1d<T: Scalar>(kind: ClosedFormKind, lambda: T, w: T) -> Result<MoreauResult<T>> {
    if lambda < T::zero() || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
    }
    let (p, psi) = match kind {
        ClosedFormKind::Quadratic => {
            let p = w / (T::one() + lambda);
            (p, p * p / lit(2.0))
        }
        ClosedFormKind::Absolute => {
            let p = sign0(w) * (w.abs() - lambda).max(T::zero());
            (p, p.abs())
        }
    };
    if lambda == T::zero() {
        let grad = match kind {
            ClosedFormKind::Quadratic => w,
            ClosedFormKind::Absolute => sign0(w),
        };
        return Ok(MoreauResult {
            prox_point: vec![w],
            envelope_value: psi,
            envelope_gradient: vec![grad],
            inner_residual: T::zero(),
            inner_iters: 0,
        });
    }
    Ok(MoreauResult::assemble(&[w], vec![p], psi, lambda, T::zero(), 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Example, Loss};

    fn half_square() -> (Loss<f64>, Vec<Example<f64>>) {
        (Loss::Quadratic { d: 2 }, vec![Example::new(vec![0.0, 0.0], 0.0)])
    }

    fn abs_1d() -> (Loss<f64>, Vec<Example<f64>>) {
        (Loss::AbsoluteRegression { d: 1 }, vec![Example::new(vec![1.0], 0.0)])
    }

    #[test]
    fn quadratic_prox() {
        let (loss, ex) = half_square();
        let risk = Risk::new(&loss, &ex, 0.0);
        let r = prox(&risk, &[2.0, 0.0], &MoreauConfig::new(1.0, 1e-10)).unwrap();
        assert!((r.prox_point[0] - 1.0).abs() < 1e-12);
        assert!(r.prox_point[1].abs() < 1e-12);
        assert!((r.envelope_value - 1.0).abs() < 1e-12);
        assert!((r.envelope_gradient[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absolute_prox_soft_threshold() {
        let (loss, ex) = abs_1d();
        let risk = Risk::new(&loss, &ex, 0.0);
        let cfg = MoreauConfig::new(0.5, 1e-10);
        let r = prox(&risk, &[2.0], &cfg).unwrap();
        assert!((r.prox_point[0] - 1.5).abs() < 1e-10);
        assert!((r.envelope_value - 1.75).abs() < 1e-10);
        let r = prox(&risk, &[0.3], &cfg).unwrap();
        assert!(r.prox_point[0].abs() < 1e-10);
        assert!((r.envelope_value - 0.09).abs() < 1e-10);
        assert!(r.inner_residual <= 1e-10);
    }

    #[test]
    fn minimizer_is_fixed_point() {
        let (loss, ex) = half_square();
        let risk = Risk::new(&loss, &ex, 0.0);
        let tol = 1e-8;
        let g = envelope_gradient(&risk, &[0.0, 0.0], &MoreauConfig::new(0.7, tol)).unwrap();
        assert!(norm(&g) <= 2.0 * tol / 0.7);
    }

    #[test]
    fn lambda_too_large_is_domain_error() {
        let loss = Loss::PhaseRetrieval { d: 1, anchor: None };
        let ex = vec![Example::new(vec![1.0], 1.0)];
        let risk = Risk::new(&loss, &ex, 2.0);
        assert!(matches!(
            prox(&risk, &[0.5], &MoreauConfig::new(0.5, 1e-8)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        // The prox sits on the kink, so several widths must be visited.
        let (loss, ex) = abs_1d();
        let risk = Risk::new(&loss, &ex, 0.0);
        let cfg = MoreauConfig { lambda: 0.5, inner_tolerance: 1e-12, inner_max_iters: 1 };
        match prox(&risk, &[0.3], &cfg) {
            Err(Error::NonConverged { best, residual, iters }) => {
                assert_eq!(best.len(), 1);
                assert!(residual > 1e-12);
                assert_eq!(iters, 1);
            }
            other => panic!("expected nonconvergence, got {other:?}"),
        }
    }

    #[test]
    fn proximal_point_finds_median() {
        let loss = Loss::AbsoluteRegression { d: 1 };
        let ex: Vec<Example<f64>> = [1.0, 2.0, 7.0].iter().map(|&b| Example::new(vec![1.0], b)).collect();
        let risk = Risk::new(&loss, &ex, 0.0);
        let (v, val) = minimize_risk(&risk, &[0.0], &MoreauConfig::new(10.0, 1e-12), 1e-12, 200).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-9);
        assert!((val - 2.0).abs() < 1e-9);
    }

    #[test]
    fn oracle_cases() {
        let r = prox_oracle_1d(ClosedFormKind::Absolute, 0.5, -2.0).unwrap();
        assert_eq!(r.prox_point, vec![-1.5]);
        let r = prox_oracle_1d(ClosedFormKind::Quadratic, 0.0, 3.7).unwrap();
        assert_eq!(r.prox_point, vec![3.7]);
        let r = prox_oracle_1d(ClosedFormKind::Absolute, 3.0, 2.0).unwrap();
        assert_eq!(r.prox_point, vec![0.0]);
        assert!(matches!("huber".parse::<ClosedFormKind>(), Err(Error::Unsupported(_))));
    }
}
