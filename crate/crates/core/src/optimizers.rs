//! Projected SGD, AdaGrad-Norm and DP-SGD with fully recorded randomness.
//!
//! All three read the dataset only at the sampled indices, so a run on `S`
//! and a run on a neighbor `S'` with the same seed produce bit-identical
//! traces whenever the replaced position is never drawn.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, norm_sq, project_ball};
use crate::problems::{Dataset, Loss, ParamVector, ProblemConstants, Sample};
use crate::rng::RunStreams;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    /// `eta_t = eta / (1 + c (t - 1))`
    InverseT,
    /// `eta / b_t`, AdaGrad-Norm only.
    Adagrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule<T> {
    pub kind: ScheduleKind,
    pub eta: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<T>,
}

impl<T: Scalar> StepSchedule<T> {
    pub fn constant(eta: T) -> Self {
        Self { kind: ScheduleKind::Constant, eta, c: None }
    }

    pub fn inverse_t(eta: T, c: T) -> Self {
        Self { kind: ScheduleKind::InverseT, eta, c: Some(c) }
    }

    pub fn adagrad(eta: T) -> Self {
        Self { kind: ScheduleKind::Adagrad, eta, c: None }
    }

    /// Step size at 1-based iteration `t` (the base `eta` for AdaGrad).
    pub fn step(&self, t: usize) -> T {
        match self.kind {
            ScheduleKind::Constant | ScheduleKind::Adagrad => self.eta,
            ScheduleKind::InverseT => {
                let c = self.c.unwrap_or_else(T::one);
                self.eta / (T::one() + c * lit((t - 1) as f64))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero()) || !self.eta.is_finite() {
            return Err(Error::Config(format!("step size must be positive, got {}", self.eta)));
        }
        if self.kind == ScheduleKind::InverseT {
            match self.c {
                Some(c) if c > T::zero() => {}
                _ => return Err(Error::Config("inverse_t schedule needs c > 0".into())),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[serde(rename = "adagrad_norm")]
    AdaGradNorm,
    DpSgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSelector {
    /// Mean of `w_1 .. w_T`.
    Average,
    /// `w_r` with `r` uniform over `1..=T`.
    RandomIterate,
    /// `w_{T+1}`.
    Last,
}

/// Calibrated DP-SGD noise; only constructible through [`PrivacyBudget::calibrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget<T> {
    pub epsilon: T,
    pub delta: T,
    pub beta: T,
    pub sigma2: T,
    pub lipschitz: T,
    pub iterations: usize,
    pub n: usize,
}

impl<T: Scalar> PrivacyBudget<T> {
    /// Runs the privacy precheck and computes `sigma^2` with the canonical
    /// `beta = 7T / (3 n^2 epsilon)`.
    pub fn calibrate(lipschitz: T, iterations: usize, n: usize, epsilon: T, delta: T) -> Result<Self> {
        let (ok, beta) = dp_privacy_precheck(iterations, n, epsilon, delta)?;
        if !ok {
            return Err(Error::PrivacyRefused(format!(
                "T={iterations}, n={n}, epsilon={epsilon}, delta={delta} violate the precondition"
            )));
        }
        let sigma2 = dp_noise_scale_canonical(lipschitz, iterations, n, epsilon, delta)?;
        Ok(Self { epsilon, delta, beta, sigma2, lipschitz, iterations, n })
    }

    fn check(&self, iterations: usize, n: usize) -> Result<()> {
        if self.iterations != iterations || self.n != n {
            return Err(Error::PrivacyRefused(format!(
                "budget calibrated for T={}, n={} but run uses T={iterations}, n={n}",
                self.iterations, self.n
            )));
        }
        let (ok, beta) = dp_privacy_precheck(iterations, n, self.epsilon, self.delta)?;
        let expect = dp_noise_scale_canonical(self.lipschitz, iterations, n, self.epsilon, self.delta)?;
        if !ok || beta != self.beta || expect != self.sigma2 {
            return Err(Error::PrivacyRefused("budget does not match its calibration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig<T> {
    pub kind: OptimizerKind,
    pub iterations: usize,
    pub schedule: StepSchedule<T>,
    #[serde(default)]
    pub projection_radius: Option<T>,
    pub output: OutputSelector,
    /// AdaGrad-Norm initial accumulator `b_0`.
    #[serde(default)]
    pub b0: Option<T>,
    #[serde(default)]
    pub privacy: Option<PrivacyBudget<T>>,
    pub seed: u64,
}

impl<T: Scalar> OptimizerConfig<T> {
    pub fn sgd(iterations: usize, schedule: StepSchedule<T>, output: OutputSelector, seed: u64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            iterations,
            schedule,
            projection_radius: None,
            output,
            b0: None,
            privacy: None,
            seed,
        }
    }

    pub fn adagrad_norm(iterations: usize, eta: T, b0: T, output: OutputSelector, seed: u64) -> Self {
        Self {
            kind: OptimizerKind::AdaGradNorm,
            iterations,
            schedule: StepSchedule::adagrad(eta),
            projection_radius: None,
            output,
            b0: Some(b0),
            privacy: None,
            seed,
        }
    }

    pub fn dp_sgd(
        iterations: usize,
        schedule: StepSchedule<T>,
        budget: PrivacyBudget<T>,
        output: OutputSelector,
        seed: u64,
    ) -> Self {
        Self {
            kind: OptimizerKind::DpSgd,
            iterations,
            schedule,
            projection_radius: None,
            output,
            b0: None,
            privacy: Some(budget),
            seed,
        }
    }

    pub fn with_projection(mut self, radius: T) -> Self {
        self.projection_radius = Some(radius);
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.schedule.validate()?;
        if let Some(r) = self.projection_radius {
            if !(r > T::zero()) {
                return Err(Error::Config("projection radius must be positive".into()));
            }
        }
        let adagrad_schedule = self.schedule.kind == ScheduleKind::Adagrad;
        match self.kind {
            OptimizerKind::AdaGradNorm => {
                if !adagrad_schedule {
                    return Err(Error::Config("AdaGrad-Norm requires the adagrad schedule".into()));
                }
                match self.b0 {
                    Some(b0) if b0 > T::zero() => {}
                    _ => return Err(Error::Config("AdaGrad-Norm requires b0 > 0".into())),
                }
            }
            OptimizerKind::Sgd | OptimizerKind::DpSgd if adagrad_schedule => {
                return Err(Error::Config("the adagrad schedule is only valid for AdaGrad-Norm".into()));
            }
            _ => {}
        }
        match (self.kind, &self.privacy) {
            (OptimizerKind::DpSgd, None) => {
                return Err(Error::PrivacyRefused("DP-SGD requires a privacy budget".into()))
            }
            (OptimizerKind::DpSgd, Some(b)) => b.check(self.iterations, n)?,
            (_, Some(_)) => {
                return Err(Error::Config("privacy budget given for a non-private optimizer".into()))
            }
            _ => {}
        }
        Ok(())
    }

    /// True when the algorithm reads the data only at sampled indices.
    pub fn is_sampling_determined(&self) -> bool {
        matches!(self.kind, OptimizerKind::Sgd | OptimizerKind::AdaGradNorm | OptimizerKind::DpSgd)
    }
}

/// Full record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace<T> {
    /// `w_1 .. w_{T+1}`.
    pub iterates: Vec<ParamVector<T>>,
    /// Sampled positions `i_1 .. i_T`, 1-based.
    pub index_sequence: Vec<usize>,
    /// DP-SGD Gaussian perturbations, one per step.
    pub noise_draws: Vec<ParamVector<T>>,
    /// AdaGrad-Norm accumulators `b_0 .. b_T`.
    pub b_values: Vec<T>,
    /// 1-based `r` for the random-iterate selector.
    pub output_index: Option<usize>,
    pub output: ParamVector<T>,
}

#[derive(Serialize)]
struct TraceView<'a, T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    iterates: Option<&'a [ParamVector<T>]>,
    index_sequence: &'a [usize],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    noise_draws: &'a [ParamVector<T>],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    b_values: &'a [T],
    output_index: Option<usize>,
    output: &'a [T],
}

impl<T: Scalar + Serialize> Trace<T> {
    /// JSON form; iterates are included only on request.
    pub fn to_json(&self, include_iterates: bool) -> String {
        let view = TraceView {
            iterates: include_iterates.then_some(self.iterates.as_slice()),
            index_sequence: &self.index_sequence,
            noise_draws: &self.noise_draws,
            b_values: &self.b_values,
            output_index: self.output_index,
            output: &self.output,
        };
        serde_json::to_string(&view).expect("trace serializes")
    }
}

impl<T: Scalar> Trace<T> {
    /// True when position `index0` (0-based) was never sampled.
    pub fn omits(&self, index0: usize) -> bool {
        !self.index_sequence.contains(&(index0 + 1))
    }
}

/// Source of the run's randomness.
trait Randomness<T> {
    fn index(&mut self, n: usize) -> usize;
    fn noise(&mut self, out: &mut [T], sigma: T);
    fn selector(&mut self, t: usize) -> usize;
}

impl<T: Scalar> Randomness<T> for RunStreams {
    fn index(&mut self, n: usize) -> usize {
        self.index.gen_range(0..n)
    }

    fn noise(&mut self, out: &mut [T], sigma: T) {
        for x in out.iter_mut() {
            let z: f64 = self.noise.sample(StandardNormal);
            *x = lit::<T>(z) * sigma;
        }
    }

    fn selector(&mut self, t: usize) -> usize {
        self.index.gen_range(0..t)
    }
}

/// Replays a fixed index sequence and selector; noise-free.
struct Scripted<'a> {
    indices: &'a [usize],
    pos: usize,
    r: Option<usize>,
}

impl<T: Scalar> Randomness<T> for Scripted<'_> {
    fn index(&mut self, _n: usize) -> usize {
        let i = self.indices[self.pos];
        self.pos += 1;
        i
    }

    fn noise(&mut self, out: &mut [T], _sigma: T) {
        out.iter_mut().for_each(|x| *x = T::zero());
    }

    fn selector(&mut self, _t: usize) -> usize {
        self.r.unwrap_or(0)
    }
}

/// Runs the configured optimizer from `w_1 = 0`.
pub fn run_optimizer<T: Scalar>(loss: &Loss<T>, data: &Dataset<T>, config: &OptimizerConfig<T>) -> Result<Trace<T>> {
    config.validate(data.n())?;
    check_data(loss, data)?;
    let mut streams = RunStreams::new(config.seed);
    Ok(execute(loss, data, config, &mut streams))
}

/// Runs a noise-free optimizer on a prescribed 0-based index sequence and
/// (for the random-iterate selector) a prescribed 0-based `r`.
pub fn run_with_indices<T: Scalar>(
    loss: &Loss<T>,
    data: &Dataset<T>,
    config: &OptimizerConfig<T>,
    indices: &[usize],
    r: Option<usize>,
) -> Result<Trace<T>> {
    if config.kind == OptimizerKind::DpSgd {
        return Err(Error::Unsupported("scripted runs of DP-SGD".into()));
    }
    config.validate(data.n())?;
    check_data(loss, data)?;
    if indices.len() != config.iterations || indices.iter().any(|&i| i >= data.n()) {
        return Err(Error::Config("scripted index sequence has the wrong length or range".into()));
    }
    let mut script = Scripted { indices, pos: 0, r };
    Ok(execute(loss, data, config, &mut script))
}

fn check_data<T: Scalar>(loss: &Loss<T>, data: &Dataset<T>) -> Result<()> {
    if data.examples().iter().any(|z| z.features.len() != loss.dim()) {
        return Err(Error::Config("dataset dimension does not match the loss".into()));
    }
    Ok(())
}

fn execute<T: Scalar, R: Randomness<T>>(
    loss: &Loss<T>,
    data: &Dataset<T>,
    config: &OptimizerConfig<T>,
    rng: &mut R,
) -> Trace<T> {
    let d = loss.dim();
    let n = data.n();
    let iters = config.iterations;
    let mut w = vec![T::zero(); d];
    let mut iterates = Vec::with_capacity(iters + 1);
    iterates.push(w.clone());
    let mut index_sequence = Vec::with_capacity(iters);
    let mut noise_draws = Vec::new();
    let mut b_values = Vec::new();
    let mut b_sq = T::zero();
    if config.kind == OptimizerKind::AdaGradNorm {
        let b0 = config.b0.unwrap_or_else(T::one);
        b_sq = b0 * b0;
        b_values.push(b0);
    }
    let sigma = config.privacy.map(|p| p.sigma2.sqrt()).unwrap_or_else(T::zero);
    let mut g = vec![T::zero(); d];

    for t in 1..=iters {
        let i = rng.index(n);
        index_sequence.push(i + 1);
        g.iter_mut().for_each(|x| *x = T::zero());
        loss.accumulate(&w, data.get(i), T::one(), &mut g);
        match config.kind {
            OptimizerKind::Sgd => axpy(-config.schedule.step(t), &g, &mut w),
            OptimizerKind::AdaGradNorm => {
                b_sq = b_sq + norm_sq(&g);
                let b = b_sq.sqrt();
                b_values.push(b);
                axpy(-config.schedule.eta / b, &g, &mut w);
            }
            OptimizerKind::DpSgd => {
                let mut noise = vec![T::zero(); d];
                rng.noise(&mut noise, sigma);
                axpy(T::one(), &noise, &mut g);
                axpy(-config.schedule.step(t), &g, &mut w);
                noise_draws.push(noise);
            }
        }
        if let Some(radius) = config.projection_radius {
            project_ball(&mut w, radius);
        }
        iterates.push(w.clone());
    }

    let (output_index, output) = match config.output {
        _ if iters == 0 => (None, iterates[0].clone()),
        OutputSelector::Last => (None, iterates[iters].clone()),
        OutputSelector::Average => {
            let mut avg = vec![T::zero(); d];
            for it in &iterates[..iters] {
                axpy(T::one(), it, &mut avg);
            }
            let inv = T::one() / lit(iters as f64);
            avg.iter_mut().for_each(|x| *x = *x * inv);
            (None, avg)
        }
        OutputSelector::RandomIterate => {
            let r = rng.selector(iters);
            (Some(r + 1), iterates[r].clone())
        }
    };

    Trace {
        iterates,
        index_sequence,
        noise_draws,
        b_values,
        output_index,
        output,
    }
}

/// `sigma^2 = 14 G^2 T / (beta n^2 eps) * (ln(1/delta) / ((1 - beta) eps) + 1)`.
pub fn dp_noise_scale<T: Scalar>(lipschitz: T, iterations: usize, n: usize, epsilon: T, delta: T, beta: T) -> Result<T> {
    check_dp_args(iterations, n, epsilon, delta)?;
    if !(beta > T::zero()) || beta >= T::one() {
        return Err(Error::Domain(format!("beta must lie in (0, 1), got {beta}")));
    }
    if lipschitz < T::zero() {
        return Err(Error::Domain("Lipschitz constant must be nonnegative".into()));
    }
    let nf = lit::<T>(n as f64);
    let leading = lit::<T>(14.0) * lipschitz * lipschitz * lit(iterations as f64) / (beta * nf * nf * epsilon);
    Ok(leading * (delta.recip().ln() / ((T::one() - beta) * epsilon) + T::one()))
}

/// [`dp_noise_scale`] at the canonical `beta = 7T / (3 n^2 eps)`, where the
/// leading factor reduces to exactly `6 G^2`.
pub fn dp_noise_scale_canonical<T: Scalar>(lipschitz: T, iterations: usize, n: usize, epsilon: T, delta: T) -> Result<T> {
    check_dp_args(iterations, n, epsilon, delta)?;
    let beta = canonical_beta(iterations, n, epsilon);
    if beta >= T::one() {
        return Err(Error::Domain(format!("canonical beta {beta} is not below 1")));
    }
    let leading = lit::<T>(6.0) * lipschitz * lipschitz;
    Ok(leading * (delta.recip().ln() / ((T::one() - beta) * epsilon) + T::one()))
}

fn canonical_beta<T: Scalar>(iterations: usize, n: usize, epsilon: T) -> T {
    let nf = lit::<T>(n as f64);
    lit::<T>(7.0) * lit(iterations as f64) / (lit::<T>(3.0) * nf * nf * epsilon)
}

fn check_dp_args<T: Scalar>(iterations: usize, n: usize, epsilon: T, delta: T) -> Result<()> {
    if iterations == 0 || n == 0 {
        return Err(Error::Domain("T and n must be positive".into()));
    }
    if !(epsilon > T::zero()) {
        return Err(Error::Domain("epsilon must be positive".into()));
    }
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::Domain("delta must lie in (0, 1)".into()));
    }
    Ok(())
}

/// Checks `eps >= 14T/(3n^2)` and `ln(1/delta)/eps <= sqrt(n)/(3 sqrt 3) - 5/3`;
/// always returns the canonical `beta`.
pub fn dp_privacy_precheck<T: Scalar>(iterations: usize, n: usize, epsilon: T, delta: T) -> Result<(bool, T)> {
    check_dp_args(iterations, n, epsilon, delta)?;
    let nf = lit::<T>(n as f64);
    let first = epsilon >= lit::<T>(14.0) * lit(iterations as f64) / (lit::<T>(3.0) * nf * nf);
    let three = lit::<T>(3.0);
    let second = delta.recip().ln() / epsilon <= nf.sqrt() / (three * three.sqrt()) - lit::<T>(5.0) / three;
    Ok((first && second, canonical_beta(iterations, n, epsilon)))
}

/// Problem regimes with a tuned `(T, eta)` prescription.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Convex,
    NonconvexSmooth,
    Sgc,
    WeaklyConvex,
    Adagrad,
}

/// `ceil`, tolerant of round-off just above an integer.
fn ceil_iters(x: f64) -> usize {
    let r = x.round();
    let v = if (x - r).abs() <= 1e-9 * r.abs().max(1.0) { r } else { x.ceil() };
    v.max(1.0) as usize
}

fn need<T: Scalar>(v: Option<T>, what: &str, regime: Regime) -> Result<T> {
    match v {
        Some(x) if x > T::zero() && x.is_finite() => Ok(x),
        _ => Err(Error::Config(format!("{regime:?} schedule needs a positive {what}"))),
    }
}

/// Iteration count and step schedule for a regime, with every
/// proportionality constant set to one. The domain radius stands in for
/// `||w*||` in the convex prescription.
pub fn tuned_schedule<T: Scalar>(regime: Regime, n: usize, c: &ProblemConstants<T>) -> Result<(usize, StepSchedule<T>)> {
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let nf = n as f64;
    let f = |x: T| x.to_f64().unwrap_or(f64::NAN);
    let g = need(Some(c.lipschitz), "Lipschitz constant", regime);
    match regime {
        Regime::Convex => {
            let g = f(g?);
            let r = f(need(c.radius, "radius", regime)?);
            let b = f(need(c.value_bound, "value bound", regime)?);
            let t = ceil_iters(nf.powf(2.0 / 3.0) * g * r / b);
            Ok((t, StepSchedule::constant(lit(nf.powf(-1.0 / 3.0) * r / g))))
        }
        Regime::NonconvexSmooth => {
            let g = f(g?);
            let t = ceil_iters(nf.powf(2.0 / 3.0) / g.powf(2.0 / 3.0));
            Ok((t, StepSchedule::constant(lit(1.0 / (g * (t as f64).sqrt())))))
        }
        Regime::Sgc => {
            let g = f(g?);
            let l = f(need(c.smoothness, "smoothness", regime)?);
            let rho = f(need(c.sgc_rho, "strong growth constant", regime)?);
            let t = ceil_iters((l * rho * nf).sqrt() / g);
            Ok((t, StepSchedule::constant(lit(1.0 / (rho * l)))))
        }
        Regime::WeaklyConvex => {
            let g = f(g?);
            let rho = f(need(Some(c.weak_convexity), "weak convexity", regime)?);
            let r = f(need(c.radius, "radius", regime)?);
            let t = ceil_iters(nf.powf(2.0 / 3.0) / (r.powf(2.0 / 3.0) * rho.cbrt()));
            Ok((t, StepSchedule::constant(lit(1.0 / (g * (rho * t as f64).sqrt())))))
        }
        Regime::Adagrad => {
            let eta = c.radius.filter(|r| *r > T::zero()).unwrap_or_else(T::one);
            Ok((ceil_iters(nf.powf(2.0 / 3.0)), StepSchedule::adagrad(eta)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Example;

    fn quad_data(targets: &[f64]) -> (Loss<f64>, Dataset<f64>) {
        let loss = Loss::Quadratic { d: 1 };
        let data = Dataset::new(targets.iter().map(|&t| Example::new(vec![t], 0.0)).collect()).unwrap();
        (loss, data)
    }

    #[test]
    fn sgd_one_step() {
        let (loss, data) = quad_data(&[2.0]);
        let cfg = OptimizerConfig::sgd(1, StepSchedule::constant(0.5), OutputSelector::Last, 1);
        let tr = run_optimizer(&loss, &data, &cfg).unwrap();
        assert_eq!(tr.output, vec![1.0]);
        assert_eq!(tr.index_sequence, vec![1]);
    }

    #[test]
    fn adagrad_one_step() {
        let (loss, data) = quad_data(&[2.0]);
        let cfg = OptimizerConfig::adagrad_norm(1, 1.0, 1.0, OutputSelector::Last, 1);
        let tr = run_optimizer(&loss, &data, &cfg).unwrap();
        assert!((tr.b_values[1] - 5f64.sqrt()).abs() < 1e-15);
        assert!((tr.output[0] - 2.0 / 5f64.sqrt()).abs() < 1e-15);
        assert!((tr.output[0] - 0.8944).abs() < 1e-4);
    }

    #[test]
    fn projection_clips_step() {
        let (loss, data) = quad_data(&[2.0]);
        let cfg = OptimizerConfig::sgd(1, StepSchedule::constant(0.5), OutputSelector::Last, 1).with_projection(0.5);
        assert_eq!(run_optimizer(&loss, &data, &cfg).unwrap().output, vec![0.5]);
    }

    #[test]
    fn zero_iterations_output_origin() {
        let (loss, data) = quad_data(&[2.0, 3.0]);
        for sel in [OutputSelector::Average, OutputSelector::Last, OutputSelector::RandomIterate] {
            let cfg = OptimizerConfig::sgd(0, StepSchedule::constant(0.5), sel, 1);
            let tr = run_optimizer(&loss, &data, &cfg).unwrap();
            assert_eq!(tr.output, vec![0.0]);
            assert!(tr.index_sequence.is_empty());
        }
    }

    #[test]
    fn inverse_t_schedule() {
        let s = StepSchedule::inverse_t(1.0, 0.5);
        assert_eq!(s.step(1), 1.0);
        assert_eq!(s.step(3), 0.5);
    }

    #[test]
    fn dp_without_budget_refuses() {
        let (loss, data) = quad_data(&[2.0]);
        let mut cfg = OptimizerConfig::sgd(1, StepSchedule::constant(0.5), OutputSelector::Last, 1);
        cfg.kind = OptimizerKind::DpSgd;
        assert!(matches!(run_optimizer(&loss, &data, &cfg), Err(Error::PrivacyRefused(_))));
    }

    #[test]
    fn dp_budget_for_wrong_shape_refuses() {
        let budget = PrivacyBudget::calibrate(1.0, 1000, 10_000, 1.0, 1e-3).unwrap();
        let (loss, data) = quad_data(&[2.0, 1.0]);
        let cfg = OptimizerConfig::dp_sgd(1000, StepSchedule::constant(0.01), budget, OutputSelector::Last, 3);
        assert!(matches!(run_optimizer(&loss, &data, &cfg), Err(Error::PrivacyRefused(_))));
    }

    #[test]
    fn precheck_failure_blocks_calibration() {
        assert!(matches!(
            PrivacyBudget::<f64>::calibrate(1.0, 100, 1000, 1.0, 1e-5),
            Err(Error::PrivacyRefused(_))
        ));
    }

    #[test]
    fn dp_noise_scale_worked_value() {
        let t = 1000;
        let n = 10_000;
        let beta = 7.0 * t as f64 / (3.0 * (n as f64).powi(2));
        let s: f64 = dp_noise_scale(1.0, t, n, 1.0, 1e-3, beta).unwrap();
        let expected = 6.0 * ((1000f64).ln() / (1.0 - beta) + 1.0);
        assert!(((s - expected) / expected).abs() < 1e-12);
        assert!((s - 47.447).abs() < 1e-3);
        assert!(matches!(dp_noise_scale(1.0, t, n, 1.0, 1e-3, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn dp_noise_linear_in_t_at_fixed_beta() {
        let a: f64 = dp_noise_scale(2.0, 100, 1000, 0.5, 1e-2, 0.1).unwrap();
        let b: f64 = dp_noise_scale(2.0, 200, 1000, 0.5, 1e-2, 0.1).unwrap();
        assert!((b / a - 2.0).abs() < 1e-14);
    }

    #[test]
    fn dp_delta_limit() {
        let s: f64 = dp_noise_scale_canonical(1.5, 10, 1000, 1.0, 1.0 - 1e-16).unwrap();
        assert!((s - 6.0 * 2.25).abs() < 1e-12);
    }

    #[test]
    fn precheck_cases() {
        let (ok, beta): (bool, f64) = dp_privacy_precheck(1000, 10_000, 1.0, 1e-3).unwrap();
        assert!(ok);
        assert!((beta - 7.0 * 1000.0 / (3.0 * 1e8)).abs() < 1e-18);
        assert!(!dp_privacy_precheck(100, 1000, 1.0, 1e-5).unwrap().0);
        let eps_edge = 14.0 * 1000.0 / (3.0 * 1e8);
        assert!(!dp_privacy_precheck(1000, 10_000, eps_edge * 0.99, 0.5).unwrap().0);
    }

    #[test]
    fn tuned_schedules() {
        let c = ProblemConstants {
            lipschitz: 1.0,
            weak_convexity: 1.0,
            smoothness: Some(1.0),
            value_bound: Some(1.0),
            radius: Some(1.0),
            sgc_rho: Some(1.0),
        };
        let (t, s): (usize, StepSchedule<f64>) = tuned_schedule(Regime::WeaklyConvex, 1_000_000, &c).unwrap();
        assert_eq!(t, 10_000);
        assert!((s.eta - 0.01).abs() < 1e-15);
        let (t, s): (usize, StepSchedule<f64>) = tuned_schedule(Regime::NonconvexSmooth, 1_000_000, &c).unwrap();
        assert_eq!(t, 10_000);
        assert!((s.eta - 0.01).abs() < 1e-15);
        let (_, s1) = tuned_schedule(Regime::Sgc, 100, &c).unwrap();
        let (_, s2) = tuned_schedule(Regime::Sgc, 10_000, &c).unwrap();
        assert_eq!(s1.eta, 1.0);
        assert_eq!(s2.eta, 1.0);
        let mut no_rho = c;
        no_rho.weak_convexity = 0.0;
        assert!(matches!(tuned_schedule(Regime::WeaklyConvex, 100, &no_rho), Err(Error::Config(_))));
        no_rho.sgc_rho = None;
        assert!(tuned_schedule(Regime::Sgc, 100, &no_rho).is_err());
    }
}
