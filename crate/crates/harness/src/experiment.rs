//! Grid execution: stability estimates, generalization gaps and rate fits.

use serde::{Deserialize, Serialize};
use wcopt::generalization::{fit_rate, generalization_gap, stability_bound_rhs, BoundTheorem, GapKind, GapReport};
use wcopt::moreau::{minimize_risk, MoreauConfig};
use wcopt::optimizers::{OptimizerConfig, OptimizerKind, PrivacyBudget, ScheduleKind, StepSchedule};
use wcopt::problems::{generate_instance, Example, ProblemConstants, ProblemInstance, Risk, Sample};
use wcopt::rng::{derive_seed, tag};
use wcopt::stability::{coupled_stability_estimate, exact_expectation_enumerate, neighbor_dataset, Measure, NeighborPair, StabilityReport};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::report::{Report, Row};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Axis {
    #[value(name = "n")]
    N,
    #[value(name = "T")]
    T,
    #[value(name = "eta")]
    Eta,
}

/// Problem instance with everything derived from it once per experiment.
pub struct Setup {
    pub instance: ProblemInstance<f64>,
    pub constants: ProblemConstants<f64>,
    pub moreau: Option<MoreauConfig<f64>>,
    /// `min F` over the pool, when excess risk is requested.
    pub min_risk: Option<f64>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let p = &cfg.problem;
        let mut instance = generate_instance::<f64>(&p.kind, p.d, &p.pool)?;
        let constants = instance.certify(p.radius);
        let mut moreau = None;
        let mut min_risk = None;
        if let Some(g) = &cfg.gap {
            if g.kinds.contains(&GapKind::MoreauGradients) {
                moreau = Some(match g.lambda {
                    Some(l) => MoreauConfig::new(l, g.inner_tolerance),
                    None => MoreauConfig::for_weak_convexity(constants.weak_convexity, g.inner_tolerance)
                        .map_err(|_| HarnessError::invalid("gap.lambda is required when the problem is convex"))?,
                });
            }
            if g.excess_risk {
                let risk = Risk::new(&instance.loss, instance.pool.examples(), constants.weak_convexity);
                let outer = MoreauConfig::new(100.0 * p.radius, g.inner_tolerance.min(1e-10));
                let (_, v) = minimize_risk(&risk, &vec![0.0; p.d], &outer, 1e-10, 1000)?;
                min_risk = Some(v);
            }
        }
        Ok(Self {
            instance,
            constants,
            moreau,
            min_risk,
        })
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub index: usize,
    pub n: usize,
    pub iterations: usize,
    pub schedule: StepSchedule<f64>,
}

impl Point {
    fn axis_value(&self, axis: Axis) -> f64 {
        match axis {
            Axis::N => self.n as f64,
            Axis::T => self.iterations as f64,
            Axis::Eta => self.schedule.eta,
        }
    }
}

fn fixed_schedule(cfg: &ExperimentConfig, eta: f64) -> StepSchedule<f64> {
    let o = &cfg.optimizer;
    match (o.kind, o.schedule) {
        (OptimizerKind::AdaGradNorm, _) | (_, ScheduleKind::Adagrad) => StepSchedule::adagrad(eta),
        (_, ScheduleKind::InverseT) => StepSchedule::inverse_t(eta, o.decay.unwrap_or(1.0)),
        _ => StepSchedule::constant(eta),
    }
}

fn point_for_n(cfg: &ExperimentConfig, setup: &Setup, index: usize, n: usize) -> Result<Point> {
    let (iterations, schedule) = match cfg.optimizer.regime {
        Some(regime) => {
            let (t, s) = wcopt::optimizers::tuned_schedule(regime, n, &setup.constants)?;
            (t, if cfg.optimizer.kind == OptimizerKind::AdaGradNorm { StepSchedule::adagrad(s.eta) } else { s })
        }
        None => (
            cfg.optimizer.iterations.unwrap_or_default(),
            fixed_schedule(cfg, cfg.optimizer.eta.unwrap_or_default()),
        ),
    };
    Ok(Point {
        index,
        n,
        iterations,
        schedule,
    })
}

/// Grid points along `axis`.
pub fn grid_points(cfg: &ExperimentConfig, setup: &Setup, axis: Axis) -> Result<Vec<Point>> {
    let single_n = || -> Result<usize> {
        match cfg.grid.n.as_slice() {
            [n] => Ok(*n),
            _ => Err(HarnessError::invalid("sweeping T or eta needs exactly one n in grid.n")),
        }
    };
    match axis {
        Axis::N => cfg
            .grid
            .n
            .iter()
            .enumerate()
            .map(|(i, &n)| point_for_n(cfg, setup, i, n))
            .collect(),
        Axis::T => {
            let mut v = Vec::new();
            if cfg.optimizer.regime.is_some() {
                v.push("optimizer.regime fixes T; remove it to sweep over T".to_string());
            }
            if cfg.grid.iterations.is_none() {
                v.push("grid.T is required for a sweep over T".to_string());
            }
            if cfg.optimizer.eta.is_none() {
                v.push("optimizer.eta is required for a sweep over T".to_string());
            }
            if !v.is_empty() {
                return Err(HarnessError::Validation(v));
            }
            let n = single_n()?;
            let s = fixed_schedule(cfg, cfg.optimizer.eta.unwrap_or_default());
            Ok(cfg
                .grid
                .iterations
                .iter()
                .flatten()
                .enumerate()
                .map(|(i, &t)| Point {
                    index: i,
                    n,
                    iterations: t,
                    schedule: s,
                })
                .collect())
        }
        Axis::Eta => {
            let mut v = Vec::new();
            if cfg.optimizer.regime.is_some() {
                v.push("optimizer.regime fixes eta; remove it to sweep over eta".to_string());
            }
            if cfg.grid.eta.is_none() {
                v.push("grid.eta is required for a sweep over eta".to_string());
            }
            if cfg.optimizer.iterations.is_none() {
                v.push("optimizer.T is required for a sweep over eta".to_string());
            }
            if !v.is_empty() {
                return Err(HarnessError::Validation(v));
            }
            let n = single_n()?;
            let t = cfg.optimizer.iterations.unwrap_or_default();
            Ok(cfg
                .grid
                .eta
                .iter()
                .flatten()
                .enumerate()
                .map(|(i, &e)| Point {
                    index: i,
                    n,
                    iterations: t,
                    schedule: fixed_schedule(cfg, e),
                })
                .collect())
        }
    }
}

/// Optimizer configuration at a grid point (projection onto the problem ball).
pub fn optimizer_at(cfg: &ExperimentConfig, setup: &Setup, point: &Point, seed: u64) -> Result<OptimizerConfig<f64>> {
    let o = &cfg.optimizer;
    let radius = cfg.problem.radius;
    let oc = match o.kind {
        OptimizerKind::Sgd => OptimizerConfig::sgd(point.iterations, point.schedule, o.output, seed),
        OptimizerKind::AdaGradNorm => OptimizerConfig::adagrad_norm(
            point.iterations,
            point.schedule.eta,
            o.b0.unwrap_or(1.0),
            o.output,
            seed,
        ),
        OptimizerKind::DpSgd => {
            let budget = PrivacyBudget::calibrate(
                setup.constants.lipschitz,
                point.iterations,
                point.n,
                o.epsilon.unwrap_or_default(),
                o.delta.unwrap_or_default(),
            )?;
            OptimizerConfig::dp_sgd(point.iterations, point.schedule, budget, o.output, seed)
        }
    };
    let oc = oc.with_projection(radius);
    oc.validate(point.n)?;
    Ok(oc)
}

/// Dataset, neighbor and probe set used by the stability estimates at a point.
pub fn stability_inputs(cfg: &ExperimentConfig, setup: &Setup, point: &Point) -> Result<(NeighborPair<f64>, Vec<Example<f64>>)> {
    let pool = &setup.instance.pool;
    let master = cfg.master_seed;
    let gi = point.index as u64;
    let s = pool.draw_dataset(point.n, derive_seed(master, &[tag::PAIR, gi]))?;
    let index = cfg.stability.as_ref().and_then(|s| s.replaced_index).unwrap_or(1);
    let replacement = pool.draw_replacement(s.get(index - 1), derive_seed(master, &[tag::REPLACEMENT, gi]));
    let pair = neighbor_dataset(&s, index, replacement)?;
    let m = cfg.stability.as_ref().map_or(1, |s| s.probe_count(pool.size()));
    let probes = pool.draw_dataset(m, derive_seed(master, &[tag::POOL, gi]))?.into_examples();
    Ok((pair, probes))
}

/// Everything measured at one grid point.
pub struct PointResult {
    pub point: Point,
    pub stability: Vec<StabilityReport>,
    pub gaps: Vec<GapReport>,
    pub rows: Vec<Row>,
}

pub fn run_point(cfg: &ExperimentConfig, setup: &Setup, point: &Point) -> Result<PointResult> {
    let master = cfg.master_seed;
    let gi = point.index as u64;
    let at = |row: Row| row.at(point.n, point.iterations, point.schedule.eta);
    let mut rows = Vec::new();
    let mut stability = Vec::new();
    if let Some(st) = &cfg.stability {
        let (pair, probes) = stability_inputs(cfg, setup, point)?;
        let oc = optimizer_at(cfg, setup, point, derive_seed(master, &[tag::TRIAL, gi]))?;
        for &m in &st.measures {
            let r = coupled_stability_estimate(
                &setup.instance.loss,
                &pair,
                &oc,
                m,
                st.trials,
                &probes,
                Some(&setup.constants),
            )?;
            rows.push(at(Row::new("stability", m.as_str()))
                .estimate(r.epsilon_hat, Some(r.std_error))
                .bound(r.theoretical_bound));
            stability.push(r);
        }
    }
    let eps = |m: Measure| stability.iter().find(|r| r.measure == m).map(|r| r.epsilon_hat);
    let mut gaps = Vec::new();
    if let Some(g) = &cfg.gap {
        let oc = optimizer_at(cfg, setup, point, derive_seed(master, &[tag::DATASET, gi]))?;
        for &kind in &g.kinds {
            let mut r = generalization_gap(
                &setup.instance.loss,
                &setup.constants,
                &setup.instance.pool,
                point.n,
                &oc,
                kind,
                g.draws,
                setup.moreau.as_ref(),
            )?;
            let rhs = match kind {
                GapKind::FunctionValues => eps(Measure::FunctionValues),
                GapKind::Gradients => match eps(Measure::Gradients) {
                    Some(e) => Some(stability_bound_rhs(BoundTheorem::GradGap, e, &setup.constants, point.n, r.variance_term)?),
                    None => None,
                },
                GapKind::MoreauGradients => match eps(Measure::Arguments) {
                    Some(e) => Some(stability_bound_rhs(BoundTheorem::MoreauGap, e, &setup.constants, point.n, None)?),
                    None => None,
                },
            };
            if let Some(b) = rhs {
                r = r.with_bound(b);
            }
            let name = kind.as_str();
            rows.push(at(Row::new("gap", name)).estimate(r.gap_estimate, Some(r.std_error)).bound(r.rhs_bound));
            rows.push(at(Row::new("gap", format!("{name}.population"))).estimate(r.population_mean, Some(r.population_std_error)));
            rows.push(at(Row::new("gap", format!("{name}.empirical"))).estimate(r.empirical_mean, Some(r.empirical_std_error)));
            rows.push(at(Row::new("gap", format!("{name}.q90"))).estimate(r.quantile_90, None));
            if let Some(v) = r.variance_term {
                rows.push(at(Row::new("gap", format!("{name}.variance"))).estimate(v, None));
            }
            if let Some(res) = r.max_inner_residual {
                rows.push(at(Row::new("gap", format!("{name}.inner_residual"))).estimate(res, None));
            }
            if let (GapKind::FunctionValues, Some(f_min)) = (kind, setup.min_risk) {
                rows.push(at(Row::new("gap", "excess_risk")).estimate(r.population_mean - f_min, Some(r.population_std_error)));
            }
            gaps.push(r);
        }
    }
    Ok(PointResult {
        point: *point,
        stability,
        gaps,
        rows,
    })
}

/// Log-log fits of every gap-derived series along the axis.
fn rate_fits(results: &[PointResult], axis: Axis) -> Vec<Row> {
    if results.len() < 4 {
        return Vec::new();
    }
    let mut measures: Vec<String> = Vec::new();
    for row in &results[0].rows {
        if row.kind == "gap" && !row.measure.ends_with(".q90") && !row.measure.ends_with(".inner_residual") {
            measures.push(row.measure.clone());
        }
    }
    let mut out = Vec::new();
    for m in measures {
        let pts: Option<Vec<(f64, f64)>> = results
            .iter()
            .map(|r| {
                r.rows
                    .iter()
                    .find(|row| row.kind == "gap" && row.measure == m)
                    .and_then(|row| row.estimate)
                    .map(|y| (r.point.axis_value(axis), y))
            })
            .collect();
        if let Some(fit) = pts.and_then(|p| fit_rate(&p).ok()) {
            out.push(Row::new("fit", m).fit(fit.slope, fit.r_squared));
        }
    }
    out
}

pub fn config_echo(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

pub fn sweep(cfg: &ExperimentConfig, axis: Axis) -> Result<Report> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    let points = grid_points(cfg, &setup, axis)?;
    let results = points
        .iter()
        .map(|p| run_point(cfg, &setup, p))
        .collect::<Result<Vec<_>>>()?;
    let mut report = Report::new(Some(config_echo(cfg)));
    for r in &results {
        report.rows.extend(r.rows.iter().cloned());
    }
    report.rows.extend(rate_fits(&results, axis));
    Ok(report)
}

pub fn run_config(cfg: &ExperimentConfig) -> Result<Report> {
    sweep(cfg, Axis::N)
}

/// Exact coupled expectations by enumerating all index sequences.
pub fn enumerate(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let st = cfg
        .stability
        .as_ref()
        .ok_or_else(|| HarnessError::invalid("enumerate needs a [stability] section"))?;
    let setup = Setup::new(cfg)?;
    let mut report = Report::new(Some(config_echo(cfg)));
    for point in grid_points(cfg, &setup, Axis::N)? {
        let (pair, probes) = stability_inputs(cfg, &setup, &point)?;
        let oc = optimizer_at(cfg, &setup, &point, cfg.master_seed)?;
        for &m in &st.measures {
            let v = exact_expectation_enumerate(&setup.instance.loss, &pair, &oc, m, &probes)?;
            report.rows.push(
                Row::new("enumeration", m.as_str())
                    .at(point.n, point.iterations, point.schedule.eta)
                    .estimate(v, Some(0.0)),
            );
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"
master_seed = 3

[problem]
kind = "absolute_regression"
d = 2
radius = 1.0
pool = {{ size = 300, seed = 2 }}

[optimizer]
kind = "sgd"
output = "average"
T = 0
eta = 0.1

[grid]
n = [20]

[stability]
measures = ["function_values", "gradients", "arguments"]
trials = 1
probes = 10
{extra}
"#
        );
        ExperimentConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn zero_iterations_are_perfectly_stable() {
        let report = run_config(&cfg("")).unwrap();
        let stab: Vec<&Row> = report.rows.iter().filter(|r| r.kind == "stability").collect();
        assert_eq!(stab.len(), 3);
        assert!(stab.iter().all(|r| r.estimate == Some(0.0)));
    }

    #[test]
    fn conflicting_sweep_is_rejected() {
        let c = cfg("");
        assert!(matches!(sweep(&c, Axis::T), Err(HarnessError::Validation(_))));
    }
}
