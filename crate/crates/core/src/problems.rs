//! Loss families, datasets over a finite population pool, and risk oracles.
//!
//! Every built-in loss is hand-differentiated. At a kink of `|.|` the
//! subgradient selection uses `sign(0) = 0`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq, pairwise_sum, SymMatrix};
use crate::scalar::{lit, Scalar};

/// Model parameters `w`.
pub type ParamVector<T> = Vec<T>;

/// One data point `z = (a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(Vec<T>, T)", into = "(Vec<T>, T)")]
pub struct Example<T: Clone> {
    pub features: Vec<T>,
    pub target: T,
}

impl<T: Clone> From<(Vec<T>, T)> for Example<T> {
    fn from((features, target): (Vec<T>, T)) -> Self {
        Self { features, target }
    }
}

impl<T: Clone> From<Example<T>> for (Vec<T>, T) {
    fn from(z: Example<T>) -> Self {
        (z.features, z.target)
    }
}

impl<T: Scalar> Example<T> {
    pub fn new(features: Vec<T>, target: T) -> Self {
        Self { features, target }
    }

    pub fn is_finite(&self) -> bool {
        self.target.is_finite() && self.features.iter().all(|x| x.is_finite())
    }
}

/// Anything that holds a list of examples a risk can be averaged over.
pub trait Sample<T: Scalar> {
    fn examples(&self) -> &[Example<T>];

    fn len(&self) -> usize {
        self.examples().len()
    }

    fn is_empty(&self) -> bool {
        self.examples().is_empty()
    }
}

impl<T: Scalar> Sample<T> for [Example<T>] {
    fn examples(&self) -> &[Example<T>] {
        self
    }
}

/// Training sample `S`; positions are 1-based in reports, 0-based in code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T: Scalar> {
    examples: Vec<Example<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(examples: Vec<Example<T>>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Config("dataset must contain at least one example".into()));
        }
        if let Some(k) = examples.iter().position(|z| !z.is_finite()) {
            return Err(Error::Config(format!("example {} has non-finite entries", k + 1)));
        }
        Ok(Self { examples })
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn get(&self, index0: usize) -> &Example<T> {
        &self.examples[index0]
    }

    pub fn into_examples(self) -> Vec<Example<T>> {
        self.examples
    }
}

impl<T: Scalar> Sample<T> for Dataset<T> {
    fn examples(&self) -> &[Example<T>] {
        &self.examples
    }
}

/// Finite support of the data distribution; the population is uniform over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PopulationPool<T: Scalar> {
    examples: Vec<Example<T>>,
}

impl<T: Scalar> PopulationPool<T> {
    pub fn new(examples: Vec<Example<T>>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Config("population pool must be nonempty".into()));
        }
        if let Some(k) = examples.iter().position(|z| !z.is_finite()) {
            return Err(Error::Config(format!("pool entry {} has non-finite entries", k + 1)));
        }
        Ok(Self { examples })
    }

    pub fn size(&self) -> usize {
        self.examples.len()
    }

    /// Draws `n` examples uniformly with replacement.
    pub fn draw_dataset(&self, n: usize, seed: u64) -> Result<Dataset<T>> {
        if n == 0 {
            return Err(Error::Config("dataset size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.examples.len();
        let examples = (0..n)
            .map(|_| self.examples[rng.gen_range(0..m)].clone())
            .collect();
        Dataset::new(examples)
    }

    /// Uniform draw from the pool, skipping entries equal to `exclude`.
    pub fn draw_replacement(&self, exclude: &Example<T>, seed: u64) -> Example<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let candidates: Vec<&Example<T>> =
            self.examples.iter().filter(|z| *z != exclude).collect();
        match candidates.choose(&mut rng) {
            Some(z) => (*z).clone(),
            None => exclude.clone(),
        }
    }

    /// The whole pool viewed as a dataset (`n = M`).
    pub fn as_dataset(&self) -> Dataset<T> {
        Dataset {
            examples: self.examples.clone(),
        }
    }
}

impl<T: Scalar> Sample<T> for PopulationPool<T> {
    fn examples(&self) -> &[Example<T>] {
        &self.examples
    }
}

/// Regularity constants certified on a ball of radius `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants<T> {
    pub lipschitz: T,
    pub weak_convexity: T,
    pub smoothness: Option<T>,
    pub value_bound: Option<T>,
    pub radius: Option<T>,
    /// Strong growth constant; kept apart from `weak_convexity`.
    #[serde(default)]
    pub sgc_rho: Option<T>,
}

/// `E||grad f||^2 <= b1 * E f + b2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthCondition<T> {
    pub b1: T,
    pub b2: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthCheck<T> {
    pub holds: bool,
    /// Largest `lhs - rhs` over the probe points; `<= 0` when the condition holds.
    pub max_violation: T,
}

/// Built-in loss families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss<T: Scalar> {
    /// `|<a, w + anchor>^2 - b|`: weakly convex, nonsmooth.
    PhaseRetrieval {
        d: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anchor: Option<Vec<T>>,
    },
    /// `|<a, w> - b|`: convex, nonsmooth.
    AbsoluteRegression { d: usize },
    /// `ln(1 + (<a, w> - b)^2)`: nonconvex, smooth.
    SmoothedRegression { d: usize },
    /// `0.5 ||w - a||^2`, target ignored.
    Quadratic { d: usize },
    /// Constant loss, zero gradient.
    Constant { d: usize, value: T },
}

/// Huber smoothing of `|c|`: value, first and second derivative.
#[inline]
fn huber<T: Scalar>(c: T, mu: T) -> (T, T, T) {
    if mu <= T::zero() {
        return (c.abs(), sign0(c), T::zero());
    }
    if c.abs() <= mu {
        (c * c / (mu + mu), c / mu, T::one() / mu)
    } else {
        (c.abs() - mu / lit(2.0), sign0(c), T::zero())
    }
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign0<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

impl<T: Scalar> Loss<T> {
    pub fn dim(&self) -> usize {
        match *self {
            Loss::PhaseRetrieval { d, .. }
            | Loss::AbsoluteRegression { d }
            | Loss::SmoothedRegression { d }
            | Loss::Quadratic { d }
            | Loss::Constant { d, .. } => d,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loss::PhaseRetrieval { .. } => "phase_retrieval",
            Loss::AbsoluteRegression { .. } => "absolute_regression",
            Loss::SmoothedRegression { .. } => "smoothed_regression",
            Loss::Quadratic { .. } => "quadratic",
            Loss::Constant { .. } => "constant",
        }
    }

    /// Differentiable everywhere (gradients are true gradients).
    pub fn is_smooth(&self) -> bool {
        matches!(
            self,
            Loss::SmoothedRegression { .. } | Loss::Quadratic { .. } | Loss::Constant { .. }
        )
    }

    pub fn is_convex(&self) -> bool {
        matches!(
            self,
            Loss::AbsoluteRegression { .. } | Loss::Quadratic { .. } | Loss::Constant { .. }
        )
    }

    fn check_dims(&self, w: &[T], z: &Example<T>) -> Result<()> {
        let d = self.dim();
        if w.len() != d {
            return Err(Error::Config(format!("parameter has dimension {}, expected {d}", w.len())));
        }
        if z.features.len() != d {
            return Err(Error::Config(format!(
                "example has {} features, expected {d}",
                z.features.len()
            )));
        }
        if let Loss::PhaseRetrieval { anchor: Some(u), .. } = self {
            if u.len() != d {
                return Err(Error::Config(format!("anchor has dimension {}, expected {d}", u.len())));
            }
        }
        Ok(())
    }

    /// Argument `c` of the `|c|` kink at `(w, z)` and its gradient in `w`,
    /// for losses of the form `|c(w; z)|`.
    pub fn kink(&self, w: &[T], z: &Example<T>) -> Option<(T, ParamVector<T>)> {
        let a = &z.features;
        match self {
            Loss::PhaseRetrieval { anchor, .. } => {
                let s = match anchor {
                    Some(u) => a
                        .iter()
                        .zip(w.iter().zip(u))
                        .fold(T::zero(), |acc, (&ai, (&wi, &ui))| acc + ai * (wi + ui)),
                    None => dot(a, w),
                };
                let two_s = s + s;
                Some((s * s - z.target, a.iter().map(|&x| two_s * x).collect()))
            }
            Loss::AbsoluteRegression { .. } => Some((dot(a, w) - z.target, a.clone())),
            _ => None,
        }
    }

    /// Loss value and subgradient at `(w, z)`.
    pub fn eval(&self, w: &[T], z: &Example<T>) -> Result<(T, ParamVector<T>)> {
        self.check_dims(w, z)?;
        let mut grad = vec![T::zero(); w.len()];
        let v = self.accumulate(w, z, T::one(), &mut grad);
        Ok((v, grad))
    }

    /// Loss value only.
    pub fn value(&self, w: &[T], z: &Example<T>) -> T {
        self.smoothed(w, z, T::zero(), T::zero(), None, None)
    }

    /// Adds `weight * subgradient` into `grad` and returns the loss value.
    /// Dimensions are assumed checked.
    #[inline]
    pub fn accumulate(&self, w: &[T], z: &Example<T>, weight: T, grad: &mut [T]) -> T {
        self.smoothed(w, z, T::zero(), weight, Some(grad), None)
    }

    /// Huber-smoothed loss (width `mu`; `mu = 0` gives the exact loss).
    /// Adds `weight *` gradient and Hessian into the optional accumulators
    /// and returns the smoothed value.
    pub fn smoothed(
        &self,
        w: &[T],
        z: &Example<T>,
        mu: T,
        weight: T,
        grad: Option<&mut [T]>,
        hess: Option<&mut SymMatrix<T>>,
    ) -> T {
        let a = &z.features;
        let two = lit::<T>(2.0);
        match self {
            Loss::PhaseRetrieval { anchor, .. } => {
                let s = match anchor {
                    Some(u) => a
                        .iter()
                        .zip(w.iter().zip(u))
                        .fold(T::zero(), |acc, (&ai, (&wi, &ui))| acc + ai * (wi + ui)),
                    None => dot(a, w),
                };
                let c = s * s - z.target;
                let (h, h1, h2) = huber(c, mu);
                if let Some(g) = grad {
                    axpy(weight * h1 * two * s, a, g);
                }
                if let Some(hm) = hess {
                    hm.rank_one_update(weight * (lit::<T>(4.0) * s * s * h2 + two * h1), a);
                }
                h
            }
            Loss::AbsoluteRegression { .. } => {
                let c = dot(a, w) - z.target;
                let (h, h1, h2) = huber(c, mu);
                if let Some(g) = grad {
                    axpy(weight * h1, a, g);
                }
                if let Some(hm) = hess {
                    hm.rank_one_update(weight * h2, a);
                }
                h
            }
            Loss::SmoothedRegression { .. } => {
                let r = dot(a, w) - z.target;
                let q = T::one() + r * r;
                if let Some(g) = grad {
                    axpy(weight * two * r / q, a, g);
                }
                if let Some(hm) = hess {
                    hm.rank_one_update(weight * two * (T::one() - r * r) / (q * q), a);
                }
                (r * r).ln_1p()
            }
            Loss::Quadratic { .. } => {
                let mut v = T::zero();
                match grad {
                    Some(g) => {
                        for ((gi, &wi), &ai) in g.iter_mut().zip(w).zip(a) {
                            let diff = wi - ai;
                            v = v + diff * diff;
                            *gi = *gi + weight * diff;
                        }
                    }
                    None => {
                        for (&wi, &ai) in w.iter().zip(a) {
                            v = v + (wi - ai) * (wi - ai);
                        }
                    }
                }
                if let Some(hm) = hess {
                    hm.add_diagonal(weight);
                }
                v / two
            }
            Loss::Constant { value, .. } => *value,
        }
    }

    /// Certified constants on the ball of radius `domain_radius`, computed
    /// from the largest feature norm and target magnitude in `examples`.
    pub fn constants(&self, examples: &[Example<T>], domain_radius: T) -> ProblemConstants<T> {
        let a_max = examples
            .iter()
            .map(|z| norm(&z.features))
            .fold(T::zero(), T::max);
        let b_max = examples
            .iter()
            .map(|z| z.target.abs())
            .fold(T::zero(), T::max);
        let r = domain_radius;
        let two = lit::<T>(2.0);
        let (lipschitz, weak_convexity, smoothness, value_bound) = match self {
            Loss::PhaseRetrieval { anchor, .. } => {
                let rx = r + anchor.as_ref().map(|u| norm(u)).unwrap_or_else(T::zero);
                let a2 = a_max * a_max;
                (two * rx * a2, two * a2, None, a2 * rx * rx + b_max)
            }
            Loss::AbsoluteRegression { .. } => (a_max, T::zero(), None, a_max * r + b_max),
            Loss::SmoothedRegression { .. } => {
                let res = a_max * r + b_max;
                (
                    a_max,
                    a_max * a_max / lit(4.0),
                    Some(two * a_max * a_max),
                    (res * res).ln_1p(),
                )
            }
            Loss::Quadratic { .. } => {
                let g = r + a_max;
                (g, T::zero(), Some(T::one()), g * g / two)
            }
            Loss::Constant { value, .. } => (T::zero(), T::zero(), Some(T::zero()), value.abs()),
        };
        ProblemConstants {
            lipschitz,
            weak_convexity,
            smoothness,
            value_bound: Some(value_bound),
            radius: Some(r),
            sgc_rho: None,
        }
    }
}

/// Loss paired with the sample it is averaged over: the empirical risk `F_S`
/// for a dataset, the population risk `F` for a pool.
#[derive(Debug, Clone, Copy)]
pub struct Risk<'a, T: Scalar> {
    pub loss: &'a Loss<T>,
    pub examples: &'a [Example<T>],
    /// Certified weak-convexity modulus of the averaged risk.
    pub weak_convexity: T,
}

impl<'a, T: Scalar> Risk<'a, T> {
    pub fn new(loss: &'a Loss<T>, examples: &'a [Example<T>], weak_convexity: T) -> Self {
        Self {
            loss,
            examples,
            weak_convexity,
        }
    }

    pub fn dim(&self) -> usize {
        self.loss.dim()
    }

    pub fn value(&self, w: &[T]) -> T {
        let m = self.examples.len();
        let s = if m * self.dim() > 1_000_000 {
            pairwise_sum(m, &|i| self.loss.value(w, &self.examples[i]))
        } else {
            self.examples
                .iter()
                .fold(T::zero(), |acc, z| acc + self.loss.value(w, z))
        };
        s / lit(m as f64)
    }

    /// Mean value and mean subgradient, summed in ascending index order
    /// (pairwise blocks once `d * m` exceeds 10^6).
    pub fn value_grad(&self, w: &[T]) -> (T, ParamVector<T>) {
        let m = self.examples.len();
        let d = self.dim();
        let (v, mut g) = if m * d > 1_000_000 {
            self.pairwise_block(w, 0, m)
        } else {
            self.sequential_block(w, 0, m)
        };
        let inv = T::one() / lit(m as f64);
        g.iter_mut().for_each(|x| *x = *x * inv);
        (v * inv, g)
    }

    fn sequential_block(&self, w: &[T], lo: usize, hi: usize) -> (T, Vec<T>) {
        let mut g = vec![T::zero(); self.dim()];
        let mut v = T::zero();
        for z in &self.examples[lo..hi] {
            v = v + self.loss.accumulate(w, z, T::one(), &mut g);
        }
        (v, g)
    }

    fn pairwise_block(&self, w: &[T], lo: usize, hi: usize) -> (T, Vec<T>) {
        if hi - lo <= 128 {
            return self.sequential_block(w, lo, hi);
        }
        let mid = lo + (hi - lo) / 2;
        let (v1, mut g1) = self.pairwise_block(w, lo, mid);
        let (v2, g2) = self.pairwise_block(w, mid, hi);
        axpy(T::one(), &g2, &mut g1);
        (v1 + v2, g1)
    }

    /// Huber-smoothed risk with gradient and Hessian, used by the prox solver.
    pub fn smoothed(&self, w: &[T], mu: T, grad: &mut [T], hess: &mut SymMatrix<T>) -> T {
        let m = self.examples.len();
        let weight = T::one() / lit(m as f64);
        let mut v = T::zero();
        for z in self.examples {
            v = v + self.loss.smoothed(w, z, mu, weight, Some(&mut *grad), Some(&mut *hess));
        }
        v * weight
    }

    /// Smoothed value only.
    pub fn smoothed_value(&self, w: &[T], mu: T) -> T {
        let weight = T::one() / lit(self.examples.len() as f64);
        self.examples.iter().fold(T::zero(), |acc, z| {
            acc + self.loss.smoothed(w, z, mu, T::zero(), None, None)
        }) * weight
    }

    /// `E_Z ||grad f(w; Z) - E_Z grad f(w; Z)||^2` over the sample.
    pub fn gradient_variance(&self, w: &[T]) -> T {
        let (_, mean_grad) = self.value_grad(w);
        let d = self.dim();
        let mut g = vec![T::zero(); d];
        let mut acc = T::zero();
        for z in self.examples {
            g.iter_mut().for_each(|x| *x = T::zero());
            self.loss.accumulate(w, z, T::one(), &mut g);
            acc = acc
                + g.iter()
                    .zip(&mean_grad)
                    .fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y));
        }
        acc / lit(self.examples.len() as f64)
    }
}

/// Mean loss and mean subgradient over a sample.
pub fn risk_eval<T: Scalar, S: Sample<T> + ?Sized>(
    loss: &Loss<T>,
    w: &[T],
    sample: &S,
) -> Result<(T, ParamVector<T>)> {
    let examples = sample.examples();
    if examples.is_empty() {
        return Err(Error::Config("risk over an empty sample".into()));
    }
    loss.check_dims(w, &examples[0])?;
    if let Some(k) = examples.iter().position(|z| z.features.len() != loss.dim()) {
        return Err(Error::Config(format!("example {} has the wrong dimension", k + 1)));
    }
    Ok(Risk::new(loss, examples, T::zero()).value_grad(w))
}

/// Strong growth ratio `(1/n) sum ||grad f_i||^2 / ||grad F_S||^2`.
///
/// Infinite when the full gradient vanishes but some per-example gradient
/// does not; `1` when both vanish.
pub fn sgc_ratio<T: Scalar>(loss: &Loss<T>, data: &Dataset<T>, w: &[T]) -> Result<T> {
    let (_, full) = risk_eval(loss, w, data)?;
    let mut g = vec![T::zero(); w.len()];
    let mut num = T::zero();
    for z in data.examples() {
        g.iter_mut().for_each(|x| *x = T::zero());
        loss.accumulate(w, z, T::one(), &mut g);
        num = num + norm_sq(&g);
    }
    num = num / lit(data.n() as f64);
    let den = norm_sq(&full);
    Ok(if den == T::zero() {
        if num == T::zero() {
            T::one()
        } else {
            T::infinity()
        }
    } else {
        num / den
    })
}

/// Checks `E_i ||grad f(w; z_i)||^2 <= b1 E_i f(w; z_i) + b2` at each probe.
pub fn relaxed_growth_check<T: Scalar>(
    loss: &Loss<T>,
    data: &Dataset<T>,
    probes: &[ParamVector<T>],
    cond: GrowthCondition<T>,
) -> Result<GrowthCheck<T>> {
    if cond.b1 < T::zero() || cond.b2 < T::zero() {
        return Err(Error::Config("growth constants must be nonnegative".into()));
    }
    let mut worst = T::neg_infinity();
    let mut g = vec![T::zero(); loss.dim()];
    let inv = T::one() / lit(data.n() as f64);
    for w in probes {
        if w.len() != loss.dim() || w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("probe point has wrong dimension or non-finite entries".into()));
        }
        let mut sq = T::zero();
        let mut val = T::zero();
        for z in data.examples() {
            g.iter_mut().for_each(|x| *x = T::zero());
            val = val + loss.accumulate(w, z, T::one(), &mut g);
            sq = sq + norm_sq(&g);
        }
        let violation = sq * inv - (cond.b1 * val * inv + cond.b2);
        worst = worst.max(violation);
    }
    if probes.is_empty() {
        worst = T::zero();
    }
    Ok(GrowthCheck {
        holds: worst <= T::zero(),
        max_violation: worst,
    })
}

/// Recipe for a synthetic population pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub size: usize,
    pub seed: u64,
    /// Standard deviation of additive target noise.
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Fraction of targets replaced by gross outliers.
    #[serde(default)]
    pub outlier_fraction: f64,
    /// Norm of the phase-retrieval anchor (the loss is evaluated at
    /// `w + anchor`); zero disables it.
    #[serde(default = "default_anchor")]
    pub anchor_norm: f64,
    /// When set, the anchor is `w* + warm_start * u` for a random unit `u`
    /// instead, so that `w = 0` starts at this distance from the signal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<f64>,
}

fn default_noise() -> f64 {
    0.1
}

fn default_anchor() -> f64 {
    1.0
}

/// A loss together with its population pool; the unit that serializes to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance<T: Scalar> {
    #[serde(flatten)]
    pub loss: Loss<T>,
    pub pool: PopulationPool<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ProblemConstants<T>>,
}

impl<T: Scalar> ProblemInstance<T> {
    pub fn new(loss: Loss<T>, pool: PopulationPool<T>) -> Result<Self> {
        if let Some(k) = pool.examples().iter().position(|z| z.features.len() != loss.dim()) {
            return Err(Error::Config(format!("pool entry {} has the wrong dimension", k + 1)));
        }
        Ok(Self {
            loss,
            pool,
            constants: None,
        })
    }

    /// Certifies and stores constants on the ball of radius `radius`.
    pub fn certify(&mut self, radius: T) -> ProblemConstants<T> {
        let c = self.loss.constants(self.pool.examples(), radius);
        self.constants = Some(c);
        c
    }

    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string(self).expect("problem instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let inst: Self =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("problem JSON: {e}")))?;
        Self::new(inst.loss, inst.pool).map(|mut p| {
            p.constants = inst.constants;
            p
        })
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Generates a synthetic instance of the named loss family.
///
/// Features are uniform on the unit sphere. A ground-truth `w*` with unit
/// norm drives the targets: `<a, w*>^2` for phase retrieval, `<a, w*>` for
/// the regressions, plus Gaussian noise; an `outlier_fraction` of targets is
/// replaced by `3 |N(0, 1)|`-scale gross errors. Quadratic pools scatter the
/// features around `w*` instead.
pub fn generate_instance<T: Scalar>(kind: &str, d: usize, spec: &PoolSpec) -> Result<ProblemInstance<T>> {
    if d == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    if spec.size == 0 {
        return Err(Error::Config("pool size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&spec.outlier_fraction) {
        return Err(Error::Config("outlier_fraction must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w_star = unit_vector(&mut rng, d);
    let anchor_dir = unit_vector(&mut rng, d);
    let loss = match kind {
        "phase_retrieval" => Loss::PhaseRetrieval {
            d,
            anchor: match spec.warm_start {
                Some(r) => Some(w_star.iter().zip(&anchor_dir).map(|(&s, &u)| lit(s + r * u)).collect()),
                None => (spec.anchor_norm > 0.0)
                    .then(|| anchor_dir.iter().map(|&x| lit(x * spec.anchor_norm)).collect()),
            },
        },
        "absolute_regression" => Loss::AbsoluteRegression { d },
        "smoothed_regression" => Loss::SmoothedRegression { d },
        "quadratic" => Loss::Quadratic { d },
        other => return Err(Error::Config(format!("unknown problem kind `{other}`"))),
    };
    let mut examples = Vec::with_capacity(spec.size);
    for _ in 0..spec.size {
        let noise: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise;
        let outlier = rng.gen::<f64>() < spec.outlier_fraction;
        let gross: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
        let (features, target) = if kind == "quadratic" {
            let f: Vec<f64> = w_star
                .iter()
                .map(|&x| x + spec.noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            (f, 0.0)
        } else {
            let a = unit_vector(&mut rng, d);
            let s: f64 = a.iter().zip(&w_star).map(|(x, y)| x * y).sum();
            let clean = if kind == "phase_retrieval" { s * s } else { s };
            let b = if outlier {
                if kind == "phase_retrieval" {
                    gross.abs()
                } else {
                    gross
                }
            } else {
                clean + noise
            };
            (a, b)
        };
        examples.push(Example::new(features.into_iter().map(lit).collect(), lit(target)));
    }
    ProblemInstance::new(loss, PopulationPool::new(examples)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(f: &[f64], t: f64) -> Example<f64> {
        Example::new(f.to_vec(), t)
    }

    #[test]
    fn phase_retrieval_value_and_subgradient() {
        let loss = Loss::PhaseRetrieval { d: 2, anchor: None };
        let (v, g) = loss.eval(&[1.0, 0.0], &ex(&[1.0, 1.0], 0.0)).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(g, vec![2.0, 2.0]);
        let (v, g) = loss.eval(&[1.0, 0.0], &ex(&[1.0, 1.0], 1.0)).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_closed_form() {
        let loss = Loss::Quadratic { d: 1 };
        let (v, g) = loss.eval(&[0.0], &ex(&[2.0], 0.0)).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(g, vec![-2.0]);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let loss = Loss::<f64>::AbsoluteRegression { d: 2 };
        assert!(matches!(loss.eval(&[1.0], &ex(&[1.0, 1.0], 0.0)), Err(Error::Config(_))));
        assert!(matches!(loss.eval(&[1.0, 0.0], &ex(&[1.0], 0.0)), Err(Error::Config(_))));
    }

    #[test]
    fn risk_is_mean_of_losses() {
        let loss = Loss::Quadratic { d: 1 };
        let s = Dataset::new(vec![ex(&[0.0], 0.0), ex(&[2.0], 0.0)]).unwrap();
        let (v, g) = risk_eval(&loss, &[0.0], &s).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(g, vec![-1.0]);
    }

    #[test]
    fn constant_risk() {
        let loss = Loss::Constant { d: 3, value: 2.5 };
        let s = Dataset::new(vec![ex(&[1.0, 2.0, 3.0], 0.0), ex(&[0.0, 0.0, 1.0], 4.0)]).unwrap();
        let (v, g) = risk_eval(&loss, &[0.3, -1.0, 2.0], &s).unwrap();
        assert_eq!(v, 2.5);
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn identical_pool_equals_single_example() {
        let loss = Loss::PhaseRetrieval { d: 2, anchor: None };
        let z = ex(&[0.3, -0.7], 0.2);
        let pool = PopulationPool::new(vec![z.clone(); 64]).unwrap();
        let w = [0.5, 1.5];
        let (v, g) = risk_eval(&loss, &w, &pool).unwrap();
        let (v1, g1) = loss.eval(&w, &z).unwrap();
        assert!((v - v1).abs() < 1e-14);
        assert!((g[0] - g1[0]).abs() < 1e-14 && (g[1] - g1[1]).abs() < 1e-14);
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(Dataset::<f64>::new(vec![]).is_err());
        let loss = Loss::Quadratic { d: 1 };
        let empty: Vec<Example<f64>> = vec![];
        assert!(risk_eval(&loss, &[0.0], empty.as_slice()).is_err());
    }

    #[test]
    fn certified_constants() {
        let pr = Loss::PhaseRetrieval { d: 2, anchor: None };
        let c = pr.constants(&[ex(&[1.0, 1.0], 0.0)], 1.0);
        assert!((c.weak_convexity - 4.0).abs() < 1e-12);
        assert!(c.smoothness.is_none());

        let q = Loss::Quadratic { d: 1 };
        let c = q.constants(&[ex(&[2.0], 0.0), ex(&[-1.5], 0.0)], 3.0);
        assert_eq!(c.smoothness, Some(1.0));
        assert_eq!(c.lipschitz, 5.0);
        assert_eq!(c.weak_convexity, 0.0);

        let abs = Loss::AbsoluteRegression { d: 2 };
        let c = abs.constants(&[ex(&[3.0, 4.0], 1.0), ex(&[1.0, 0.0], -2.0)], 1.0);
        assert_eq!(c.lipschitz, 5.0);
        assert_eq!(c.weak_convexity, 0.0);
        assert!(c.smoothness.is_none());
    }

    #[test]
    fn sgc_cases() {
        let q = Loss::Quadratic { d: 1 };
        let same = Dataset::new(vec![ex(&[1.0], 0.0), ex(&[1.0], 0.0)]).unwrap();
        assert_eq!(sgc_ratio(&q, &same, &[0.0]).unwrap(), 1.0);
        let opposed = Dataset::new(vec![ex(&[1.0], 0.0), ex(&[-1.0], 0.0)]).unwrap();
        assert!(sgc_ratio(&q, &opposed, &[0.0]).unwrap().is_infinite());
        let single = Dataset::new(vec![ex(&[0.7], 0.0)]).unwrap();
        assert_eq!(sgc_ratio(&q, &single, &[-2.0]).unwrap(), 1.0);
        assert_eq!(sgc_ratio(&q, &single, &[0.7]).unwrap(), 1.0);
    }

    #[test]
    fn relaxed_growth_cases() {
        let q = Loss::Quadratic { d: 1 };
        let s = Dataset::new(vec![ex(&[1.0], 0.0), ex(&[-0.5], 0.0)]).unwrap();
        let probes: Vec<Vec<f64>> = vec![vec![-3.0], vec![0.0], vec![0.25], vec![10.0]];
        let ok = relaxed_growth_check(&q, &s, &probes, GrowthCondition { b1: 2.0, b2: 0.0 }).unwrap();
        assert!(ok.holds);
        let bad = relaxed_growth_check(&q, &s, &[vec![50.0]], GrowthCondition { b1: 1.0, b2: 0.0 }).unwrap();
        assert!(!bad.holds && bad.max_violation > 0.0);
        let loose = relaxed_growth_check(&q, &s, &probes, GrowthCondition { b1: 0.0, b2: 200.0 }).unwrap();
        assert!(loose.holds);
    }

    #[test]
    fn example_json_shape() {
        let inst = ProblemInstance::new(
            Loss::AbsoluteRegression { d: 2 },
            PopulationPool::new(vec![ex(&[1.0, 2.0], 3.0)]).unwrap(),
        )
        .unwrap();
        let js = inst.to_json();
        assert_eq!(js, r#"{"kind":"absolute_regression","d":2,"pool":[[[1.0,2.0],3.0]]}"#);
        assert_eq!(ProblemInstance::<f64>::from_json(&js).unwrap(), inst);
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = PoolSpec { size: 50, seed: 9, noise: 0.1, outlier_fraction: 0.1, anchor_norm: 1.0, warm_start: None };
        let a = generate_instance::<f64>("phase_retrieval", 4, &spec).unwrap();
        let b = generate_instance::<f64>("phase_retrieval", 4, &spec).unwrap();
        assert_eq!(a, b);
        for z in a.pool.examples() {
            assert!((norm(&z.features) - 1.0).abs() < 1e-12);
        }
    }
}
