//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wcopt::generalization::GapKind;
use wcopt::optimizers::{OptimizerKind, OutputSelector, Regime, ScheduleKind};
use wcopt::problems::PoolSpec;
use wcopt::stability::Measure;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub master_seed: u64,
    /// Thread budget; not part of the report.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    /// Output path; not part of the report.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    pub problem: ProblemSection,
    pub optimizer: OptimizerSection,
    pub grid: Grid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<GapSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: String,
    pub d: usize,
    /// Projection radius; constants are certified on this ball.
    pub radius: f64,
    pub pool: PoolSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: OptimizerKind,
    pub output: OutputSelector,
    /// Derives `(T, eta)` from `n` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    /// Decay `c` of the inverse-t schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

fn default_schedule() -> ScheduleKind {
    ScheduleKind::Constant
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n: Vec<usize>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub iterations: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    pub measures: Vec<Measure>,
    pub trials: usize,
    /// Number of pool examples the supremum over `z` ranges over;
    /// defaults to `min(1000, pool size)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
    /// 1-based position of the replaced example; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replaced_index: Option<usize>,
}

impl StabilitySection {
    pub fn probe_count(&self, pool_size: usize) -> usize {
        self.probes.unwrap_or(1000.min(pool_size))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSection {
    pub kinds: Vec<GapKind>,
    pub draws: usize,
    #[serde(default = "default_inner_tolerance")]
    pub inner_tolerance: f64,
    /// Envelope parameter; defaults to `1 / (2 rho)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Also report `F(A(S)) - min F` (convex losses).
    #[serde(default)]
    pub excess_risk: bool,
}

fn default_inner_tolerance() -> f64 {
    1e-8
}

const KINDS: [&str; 5] = [
    "phase_retrieval",
    "absolute_regression",
    "smoothed_regression",
    "quadratic",
    "constant",
];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every cross-field invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        let p = &self.problem;
        if !KINDS.contains(&p.kind.as_str()) {
            v.push(format!("problem.kind `{}` is not one of {}", p.kind, KINDS.join(", ")));
        }
        if p.kind == "constant" {
            v.push("problem.kind `constant` has no pool generator".into());
        }
        if p.d == 0 {
            v.push("problem.d must be at least 1".into());
        }
        if !(p.radius > 0.0 && p.radius.is_finite()) {
            v.push("problem.radius must be positive".into());
        }
        if p.pool.size == 0 {
            v.push("problem.pool.size must be positive".into());
        }
        if self.grid.n.is_empty() {
            v.push("grid.n must list at least one sample size".into());
        }
        for &n in &self.grid.n {
            if n == 0 {
                v.push("grid.n entries must be positive".into());
            } else if n > p.pool.size {
                v.push(format!("grid.n entry {n} exceeds the pool size {}", p.pool.size));
            }
        }
        if !strictly_increasing(&self.grid.n) {
            v.push("grid.n must be strictly increasing".into());
        }
        if let Some(ts) = &self.grid.iterations {
            if !strictly_increasing(ts) {
                v.push("grid.T must be strictly increasing".into());
            }
        }
        if let Some(es) = &self.grid.eta {
            if !strictly_increasing(es) || es.iter().any(|&e| !(e > 0.0)) {
                v.push("grid.eta must be positive and strictly increasing".into());
            }
        }
        let o = &self.optimizer;
        if o.regime.is_none() && (o.iterations.is_none() || o.eta.is_none()) {
            v.push("optimizer needs either a regime or both T and eta".into());
        }
        if let Some(e) = o.eta {
            if !(e > 0.0 && e.is_finite()) {
                v.push("optimizer.eta must be positive".into());
            }
        }
        if o.schedule == ScheduleKind::InverseT && o.decay.is_none() {
            v.push("optimizer.decay is required for the inverse_t schedule".into());
        }
        if o.kind == OptimizerKind::DpSgd && (o.epsilon.is_none() || o.delta.is_none()) {
            v.push("dp_sgd needs optimizer.epsilon and optimizer.delta".into());
        }
        if let Some(s) = &self.stability {
            if s.trials == 0 {
                v.push("stability.trials must be at least 1".into());
            }
            if s.measures.is_empty() {
                v.push("stability.measures must not be empty".into());
            }
            if s.probes.is_some_and(|m| m == 0 || m > p.pool.size) {
                v.push("stability.probes must lie between 1 and the pool size".into());
            }
            if let Some(i) = s.replaced_index {
                if i == 0 || self.grid.n.iter().any(|&n| i > n) {
                    v.push(format!("stability.replaced_index {i} is outside 1..=n"));
                }
            }
        }
        if let Some(g) = &self.gap {
            if g.draws == 0 {
                v.push("gap.draws must be at least 1".into());
            }
            if g.kinds.is_empty() {
                v.push("gap.kinds must not be empty".into());
            }
            if !(g.inner_tolerance > 0.0) {
                v.push("gap.inner_tolerance must be positive".into());
            }
            let smooth = matches!(p.kind.as_str(), "smoothed_regression" | "quadratic" | "constant");
            if g.kinds.contains(&GapKind::Gradients) && !smooth {
                v.push(format!("gradient gap is undefined for the nonsmooth problem `{}`", p.kind));
            }
            let convex = matches!(p.kind.as_str(), "absolute_regression" | "quadratic" | "constant");
            if g.excess_risk && !convex {
                v.push("gap.excess_risk needs a convex problem".into());
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Validation(v))
        }
    }
}

fn strictly_increasing<T: PartialOrd>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
master_seed = 7

[problem]
kind = "absolute_regression"
d = 3
radius = 1.0
pool = { size = 500, seed = 1 }

[optimizer]
kind = "sgd"
output = "average"
T = 10
eta = 0.1

[grid]
n = [20, 40]

[stability]
measures = ["arguments"]
trials = 10
"#;

    #[test]
    fn parses_sample() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.grid.n, vec![20, 40]);
        assert_eq!(cfg.stability.unwrap().probe_count(500), 500);
    }

    #[test]
    fn lists_every_violation() {
        let text = SAMPLE.replace("n = [20, 40]", "n = [40, 20, 900]").replace("trials = 10", "trials = 0");
        match ExperimentConfig::from_toml(&text) {
            Err(HarnessError::Validation(v)) => {
                assert_eq!(v.len(), 3, "{v:?}");
                assert!(v.iter().any(|m| m.contains("900")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SAMPLE.replace("master_seed = 7", "master_seed = 7\nbogus = 1");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(HarnessError::Validation(_))));
    }
}
