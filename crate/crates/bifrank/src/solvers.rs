//! Projection-free solver loops and baselines.
//!
//! Four drivers share one skeleton — estimate a gradient direction, call
//! the linear minimization oracle, move by a convex combination — and
//! differ in how the direction is produced:
//!
//! * `run_sbfw`: bilevel loop (inner SGD step → hypergradient tracking →
//!   LMO → convex step),
//! * `run_scfw`: compositional loop (inner-map tracking → gradient
//!   tracking → LMO → convex step),
//! * `run_sfw`: single-level momentum-averaged stochastic Frank-Wolfe
//!   baseline,
//! * `run_projected`: projection-based bilevel baseline (same trackers as
//!   SBFW, projected gradient step instead of LMO) for wall-clock
//!   comparison.
//!
//! Every run owns five labeled randomness streams derived from one seed, so
//! equal configurations reproduce bitwise-equal trajectories. Metric
//! evaluation draws only from the dedicated metrics stream: changing the
//! recording cadence never perturbs the trajectory.

use crate::constraint::{ConstraintSet, MEMBERSHIP_TOL};
use crate::error::{Error, Result};
use crate::lmo::{fw_gap, lmo};
use crate::oracles::{BilevelOracle, CompositionalOracle, GradientOracle, OracleCallCounter};
use crate::point::{convex_step, Point};
use crate::rng::{labels, RngStream};
use crate::schedule::{schedule, Regime, Schedule, ScheduleSpec};
use crate::trackers::{
    bilevel_track, compositional_track_d, compositional_track_y, inner_sgd_step, TrackerState,
};
use serde::Serialize;
use std::time::Instant;

/// Which driver a config is meant for (reported in summaries; the run
/// functions themselves are separate entry points).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sbfw,
    Scfw,
    Sfw,
    ProjectedBilevel,
}

/// Convexity regime selecting the step-size schedule family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convexity {
    Convex,
    Nonconvex,
}

/// Which iterate a run returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputRule {
    /// The final iterate `x_{T+1}` (convex guarantees).
    LastIterate,
    /// An iterate chosen uniformly from `{x_1, …, x_{T+1}}`, drawn once at
    /// run end from the data stream (nonconvex guarantees).
    UniformIterate,
}

/// Optional constants replacing the scheduled `δ_t / ρ_t / η_t / k_t`.
/// Weights must lie in (0, 1]; `k` must be ≥ 1. The Neumann estimator keeps
/// using the oracle's declared `L_g` internally regardless of overrides —
/// the contraction bound is not negotiable.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ScheduleOverrides {
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub eta: Option<f64>,
    pub k: Option<u64>,
}

impl ScheduleOverrides {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("delta", self.delta), ("rho", self.rho), ("eta", self.eta)] {
            if let Some(v) = v {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::Config(format!(
                        "schedule override {name} must lie in (0, 1], got {v}"
                    )));
                }
            }
        }
        if let Some(k) = self.k {
            if k < 1 {
                return Err(Error::Config("schedule override k must be >= 1".into()));
            }
        }
        Ok(())
    }

    fn apply(&self, s: Schedule) -> Schedule {
        Schedule {
            delta: self.delta.unwrap_or(s.delta),
            rho: self.rho.unwrap_or(s.rho),
            eta: self.eta.unwrap_or(s.eta),
            k: self.k.unwrap_or(s.k),
        }
    }
}

/// Everything a driver needs besides the problem itself.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub regime: Convexity,
    /// Iteration count T (each iteration makes exactly one LMO call and one
    /// outer update).
    pub horizon: u64,
    pub seed: u64,
    /// Record metrics every this many iterations (1 records all; the first
    /// and last iterations are always recorded).
    pub record_every: u64,
    pub output: OutputRule,
    pub overrides: ScheduleOverrides,
    /// Constants fed to the schedule in place of the oracle-declared ones
    /// (the declared ones still govern the Neumann estimator).
    pub sched_mu_g: Option<f64>,
    pub sched_l_g: Option<f64>,
    /// Inner-gradient variance bound entering the convex-regime `a0`.
    pub sigma_g_sq: f64,
    /// Step scale for the projected baseline: `α_t = α0/√t`.
    pub alpha0: f64,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, regime: Convexity, horizon: u64, seed: u64) -> Self {
        SolverConfig {
            algorithm,
            regime,
            horizon,
            seed,
            record_every: 1,
            output: match regime {
                Convexity::Convex => OutputRule::LastIterate,
                Convexity::Nonconvex => OutputRule::UniformIterate,
            },
            overrides: ScheduleOverrides::default(),
            sched_mu_g: None,
            sched_l_g: None,
            sigma_g_sq: 1.0,
            alpha0: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.record_every < 1 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        if !(self.sigma_g_sq >= 0.0 && self.sigma_g_sq.is_finite()) {
            return Err(Error::Config("sigma_g_sq must be finite and >= 0".into()));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::Config("alpha0 must be finite and > 0".into()));
        }
        self.overrides.validate()
    }

    fn regime_for(&self, alg: Algorithm) -> Regime {
        match (alg, self.regime) {
            (Algorithm::Scfw, Convexity::Convex) => Regime::ScfwConvex,
            (Algorithm::Scfw, Convexity::Nonconvex) => Regime::ScfwNonconvex,
            // The projected baseline reuses the bilevel schedules.
            (_, Convexity::Convex) => Regime::SbfwConvex,
            (_, Convexity::Nonconvex) => Regime::SbfwNonconvex,
        }
    }
}

/// One metrics snapshot. `objective`, `normalized_error`, and `fw_gap`
/// describe the post-step iterate `x_{t+1}`; `inner_gap` pairs the inner
/// state `y_t` with the pre-step iterate it was chasing. Fields a problem
/// does not define stay `None` (empty CSV cells) rather than being filled
/// with noisy stand-ins.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub iteration: u64,
    pub wall_clock_ms: f64,
    pub objective: Option<f64>,
    pub normalized_error: Option<f64>,
    pub fw_gap: Option<f64>,
    pub inner_gap: Option<f64>,
    pub counters: OracleCallCounter,
}

impl RunRecord {
    /// Equality for determinism checks; wall-clock time is excluded.
    pub fn same_trajectory(&self, other: &RunRecord) -> bool {
        self.iteration == other.iteration
            && self.objective == other.objective
            && self.normalized_error == other.normalized_error
            && self.fw_gap == other.fw_gap
            && self.inner_gap == other.inner_gap
            && self.counters == other.counters
    }
}

/// Problem-side hooks for metric recording. Every hook is optional;
/// testbeds expose exact quantities, production problems expose what they
/// honestly can.
pub trait ProblemMetrics {
    /// Population (or best-available) objective value at `x`.
    fn objective(&self, _x: &Point) -> Option<f64> {
        None
    }
    /// Problem-defined normalized error at `x`.
    fn normalized_error(&self, _x: &Point) -> Option<f64> {
        None
    }
    /// Exact population gradient at `x`, enabling the FW-gap column.
    fn exact_gradient(&self, _x: &Point) -> Option<Point> {
        None
    }
    /// Exact inner solution `y*(x)` (bilevel) or inner-map value `h̄(x)`
    /// (compositional), enabling the inner-gap column.
    fn inner_optimum(&self, _x: &Point) -> Option<Point> {
        None
    }
}

/// Metrics implementation for problems that expose nothing.
pub struct NoMetrics;

impl ProblemMetrics for NoMetrics {}

/// A finished (or aborted) run: the selected output point, the metric
/// records accumulated up to the end or the abort, and the abort reason if
/// the trajectory lost finiteness.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub x: Point,
    pub records: Vec<RunRecord>,
    /// Index of the returned iterate in `{x_1, …, x_{T+1}}`.
    pub selected_iteration: u64,
    pub aborted: Option<String>,
}

impl RunOutput {
    pub fn final_counters(&self) -> OracleCallCounter {
        self.records.last().map(|r| r.counters).unwrap_or_default()
    }
}

/// The five labeled streams a run draws from.
struct Streams {
    theta: RngStream,
    xi: RngStream,
    hess: RngStream,
    data: RngStream,
    metrics: RngStream,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Streams {
            theta: RngStream::new(seed, labels::THETA),
            xi: RngStream::new(seed, labels::XI),
            hess: RngStream::new(seed, labels::HESSIAN),
            data: RngStream::new(seed, labels::DATA),
            metrics: RngStream::new(seed, labels::METRICS),
        }
    }
}

/// Shared per-run bookkeeping: cadence, record assembly, feasibility
/// checks, and uniform-iterate storage.
struct RunDriver<'a> {
    set: &'a ConstraintSet,
    metrics: &'a dyn ProblemMetrics,
    config: &'a SolverConfig,
    records: Vec<RunRecord>,
    started: Instant,
    counter: OracleCallCounter,
    /// Retained iterates (uniform output rule only).
    kept: Vec<Point>,
    /// Number of iterates seen so far (`x_1` onward), independent of the
    /// output rule; identifies the returned iterate on abort.
    seen: u64,
}

/// Refuse uniform-iterate storage beyond ~160 MB of retained iterates.
const UNIFORM_KEEP_LIMIT: u64 = 20_000_000;

impl<'a> RunDriver<'a> {
    fn new(
        set: &'a ConstraintSet,
        metrics: &'a dyn ProblemMetrics,
        config: &'a SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        if config.output == OutputRule::UniformIterate {
            let cost = (config.horizon + 1).saturating_mul(set.dim() as u64);
            if cost > UNIFORM_KEEP_LIMIT {
                return Err(Error::Config(format!(
                    "uniform-iterate output would retain {cost} floats; \
                     use last-iterate output or a shorter horizon"
                )));
            }
        }
        Ok(RunDriver {
            set,
            metrics,
            config,
            records: Vec::new(),
            started: Instant::now(),
            counter: OracleCallCounter::default(),
            kept: Vec::new(),
            seen: 0,
        })
    }

    fn start_point(&self, x_init: Option<&Point>) -> Result<Point> {
        let x1 = match x_init {
            Some(x) => {
                if !self.set.contains(x, MEMBERSHIP_TOL) {
                    return Err(Error::Usage("provided starting point is infeasible".into()));
                }
                x.clone()
            }
            None => self.set.canonical_vertex(),
        };
        Ok(x1)
    }

    fn keep(&mut self, x: &Point) {
        self.seen += 1;
        if self.config.output == OutputRule::UniformIterate {
            self.kept.push(x.clone());
        }
    }

    fn should_record(&self, t: u64) -> bool {
        t == 1 || t == self.config.horizon || t % self.config.record_every == 0
    }

    /// Record metrics after iteration `t` produced `x_new` from `x_pre`
    /// with inner state `y`. Feasibility is enforced here: an escaped
    /// iterate is a numeric failure, not a metric.
    fn record(
        &mut self,
        t: u64,
        x_new: &Point,
        x_pre: &Point,
        y: Option<&Point>,
        mrng: &mut RngStream,
    ) -> Result<()> {
        if !self.should_record(t) {
            return Ok(());
        }
        if !self.set.contains(x_new, MEMBERSHIP_TOL) {
            return Err(Error::Numeric(format!(
                "iterate left the feasible set at iteration {t}"
            )));
        }
        let fw = match self.metrics.exact_gradient(x_new) {
            Some(g) => Some(fw_gap(self.set, x_new, &g, mrng)?),
            None => None,
        };
        let inner_gap = match (y, self.metrics.inner_optimum(x_pre)) {
            (Some(y), Some(y_star)) => Some(y.sub(&y_star)?.norm()),
            _ => None,
        };
        self.records.push(RunRecord {
            iteration: t,
            wall_clock_ms: self.started.elapsed().as_secs_f64() * 1e3,
            objective: self.metrics.objective(x_new),
            normalized_error: self.metrics.normalized_error(x_new),
            fw_gap: fw,
            inner_gap,
            counters: self.counter,
        });
        Ok(())
    }

    /// Select the output iterate: the last one, or a uniform draw over the
    /// retained trajectory (index drawn once, at run end, from the data
    /// stream so it replays with the seed).
    fn finish(mut self, x_last: Point, data: &mut RngStream, aborted: Option<String>) -> RunOutput {
        self.keep(&x_last);
        let (x, selected) = match self.config.output {
            OutputRule::LastIterate => (x_last, self.seen),
            OutputRule::UniformIterate => {
                let j = data.below(self.kept.len());
                (self.kept.swap_remove(j), j as u64 + 1)
            }
        };
        RunOutput { x, records: self.records, selected_iteration: selected, aborted }
    }
}

/// Branch on numeric failures: they abort the run but keep the partial
/// records; anything else propagates as a hard error.
macro_rules! try_numeric {
    ($driver:ident, $streams:ident, $x:ident, $expr:expr) => {
        match $expr {
            Ok(v) => v,
            Err(Error::Numeric(msg)) => {
                return Ok($driver.finish($x, &mut $streams.data, Some(msg)));
            }
            Err(e) => return Err(e),
        }
    };
}

fn check_shapes(set: &ConstraintSet, outer: (usize, usize)) -> Result<()> {
    if set.shape() != outer {
        return Err(Error::Config(format!(
            "constraint set shape {:?} does not match the problem's outer shape {:?}",
            set.shape(),
            outer
        )));
    }
    Ok(())
}

/// Bilevel Frank-Wolfe: per iteration, one inner SGD step, one tracked
/// hypergradient update (two replayed estimator evaluations), one LMO call,
/// one convex step.
pub fn run_sbfw<O: BilevelOracle + ?Sized>(
    oracle: &O,
    set: &ConstraintSet,
    metrics: &dyn ProblemMetrics,
    config: &SolverConfig,
    x_init: Option<&Point>,
    y_init: Option<&Point>,
) -> Result<RunOutput> {
    check_shapes(set, oracle.outer_shape())?;
    let mut driver = RunDriver::new(set, metrics, config)?;
    let mut streams = Streams::new(config.seed);
    let spec = ScheduleSpec {
        regime: config.regime_for(Algorithm::Sbfw),
        mu_g: config.sched_mu_g.unwrap_or_else(|| oracle.mu_g()),
        l_g: config.sched_l_g.unwrap_or_else(|| oracle.l_g()),
        sigma_g_sq: config.sigma_g_sq,
        horizon_t: config.horizon,
    };
    spec.validate()?;

    let mut x = driver.start_point(x_init)?;
    let (n, nc) = oracle.inner_shape();
    let y1 = match y_init {
        Some(y) => {
            if y.shape() != (n, nc) {
                return Err(Error::Usage("y_init shape does not match the inner problem".into()));
            }
            y.clone()
        }
        None => Point::zeros(n, nc),
    };

    let sched1 = config.overrides.apply(schedule(&spec, 1)?);
    let mut state = {
        let init = TrackerState::init_bilevel(
            oracle,
            &x,
            &y1,
            sched1.k,
            &mut streams.theta,
            &mut streams.hess,
            &mut driver.counter,
        );
        try_numeric!(driver, streams, x, init)
    };
    let mut x_prev = x.clone();

    for t in 1..=config.horizon {
        let sched = config.overrides.apply(schedule(&spec, t)?);
        if t > 1 {
            let y_prev = state.y.clone();
            try_numeric!(
                driver,
                streams,
                x,
                inner_sgd_step(
                    oracle,
                    &mut state,
                    &x_prev,
                    sched.delta,
                    t,
                    &mut streams.xi,
                    &mut driver.counter,
                )
            );
            let y_t = state.y.clone();
            try_numeric!(
                driver,
                streams,
                x,
                bilevel_track(
                    oracle,
                    &mut state,
                    &x,
                    &x_prev,
                    &y_t,
                    &y_prev,
                    sched.rho,
                    sched.k,
                    &mut streams.theta,
                    &mut streams.hess,
                    &mut driver.counter,
                )
            );
        }
        let step = lmo(set, &state.d, &mut streams.data)
            .and_then(|r| convex_step(&x, &r.vertex, sched.eta));
        let x_next = try_numeric!(driver, streams, x, step);
        driver.keep(&x);
        let y_now = state.y.clone();
        state.advance(&x, &y_now);
        x_prev = std::mem::replace(&mut x, x_next);
        try_numeric!(
            driver,
            streams,
            x,
            driver.record(t, &x, &x_prev, Some(&state.y), &mut streams.metrics)
        );
    }
    Ok(driver.finish(x, &mut streams.data, None))
}

/// Compositional Frank-Wolfe: per iteration, inner-map tracking and
/// gradient tracking (sharing one ξ draw at the solver level), then LMO and
/// convex step. The first iteration starts at `x_1 = x_0`, so its tracker
/// updates take the duplicate-point path.
pub fn run_scfw<O: CompositionalOracle + ?Sized>(
    oracle: &O,
    set: &ConstraintSet,
    metrics: &dyn ProblemMetrics,
    config: &SolverConfig,
    x_init: Option<&Point>,
) -> Result<RunOutput> {
    check_shapes(set, oracle.outer_shape())?;
    let mut driver = RunDriver::new(set, metrics, config)?;
    let mut streams = Streams::new(config.seed);
    let spec = ScheduleSpec {
        regime: config.regime_for(Algorithm::Scfw),
        // The compositional schedules do not involve inner constants, but
        // the spec type carries them; fixed at the adapter's values.
        mu_g: 1.0,
        l_g: 1.0,
        sigma_g_sq: config.sigma_g_sq,
        horizon_t: config.horizon,
    };
    spec.validate()?;

    let mut x = driver.start_point(x_init)?;
    let mut state = {
        let init = TrackerState::init_compositional(
            oracle,
            &x,
            &mut streams.theta,
            &mut streams.xi,
            &mut driver.counter,
        );
        try_numeric!(driver, streams, x, init)
    };
    let mut x_prev = x.clone();

    for t in 1..=config.horizon {
        let sched = config.overrides.apply(schedule(&spec, t)?);
        let y_prev = state.y.clone();
        // Both trackers observe the same ξ_t: rewind the stream between
        // them, then leave it past whichever tracker consumed more.
        let xi_at = streams.xi.checkpoint();
        try_numeric!(
            driver,
            streams,
            x,
            compositional_track_y(
                oracle,
                &mut state,
                &x,
                &x_prev,
                sched.delta,
                &mut streams.xi,
                &mut driver.counter,
            )
        );
        let y_t = state.y.clone();
        let xi_after_y = streams.xi.checkpoint();
        streams.xi.restore(xi_at);
        try_numeric!(
            driver,
            streams,
            x,
            compositional_track_d(
                oracle,
                &mut state,
                &x,
                &x_prev,
                &y_t,
                &y_prev,
                sched.rho,
                &mut streams.theta,
                &mut streams.xi,
                &mut driver.counter,
            )
        );
        let xi_after_d = streams.xi.checkpoint();
        streams.xi.restore(xi_after_y.max(xi_after_d));
        let step = lmo(set, &state.d, &mut streams.data)
            .and_then(|r| convex_step(&x, &r.vertex, sched.eta));
        let x_next = try_numeric!(driver, streams, x, step);
        driver.keep(&x);
        let y_now = state.y.clone();
        state.advance(&x, &y_now);
        x_prev = std::mem::replace(&mut x, x_next);
        try_numeric!(
            driver,
            streams,
            x,
            driver.record(t, &x, &x_prev, Some(&state.y), &mut streams.metrics)
        );
    }
    Ok(driver.finish(x, &mut streams.data, None))
}

/// Momentum-averaged single-level stochastic Frank-Wolfe baseline:
/// `d_t = (1 − ρ_t) d_{t−1} + ρ_t ∇f(x_t; θ_t)` with `ρ_t = 4/(t+8)^{2/3}`
/// and `η_t = 2/(t+8)` unless overridden.
pub fn run_sfw<O: GradientOracle + ?Sized>(
    oracle: &O,
    set: &ConstraintSet,
    metrics: &dyn ProblemMetrics,
    config: &SolverConfig,
    x_init: Option<&Point>,
) -> Result<RunOutput> {
    check_shapes(set, oracle.shape())?;
    let mut driver = RunDriver::new(set, metrics, config)?;
    let mut streams = Streams::new(config.seed);
    let mut x = driver.start_point(x_init)?;
    let mut d = Point::zeros(set.shape().0, set.shape().1);

    for t in 1..=config.horizon {
        let rho = config.overrides.rho.unwrap_or(4.0 / ((t + 8) as f64).powf(2.0 / 3.0));
        let eta = config.overrides.eta.unwrap_or(2.0 / (t + 8) as f64);
        let g = {
            let sample = oracle.sample_grad(&x, &mut streams.theta);
            let g = try_numeric!(driver, streams, x, sample);
            driver.counter.outer_grad += 1;
            g
        };
        let tracked = d.scale(1.0 - rho).axpy(rho, &g).and_then(|d| {
            if d.is_finite() {
                Ok(d)
            } else {
                Err(Error::Numeric("gradient average lost finiteness".into()))
            }
        });
        d = try_numeric!(driver, streams, x, tracked);
        let step =
            lmo(set, &d, &mut streams.data).and_then(|r| convex_step(&x, &r.vertex, eta));
        let x_next = try_numeric!(driver, streams, x, step);
        driver.keep(&x);
        let x_prev = std::mem::replace(&mut x, x_next);
        try_numeric!(
            driver,
            streams,
            x,
            driver.record(t, &x, &x_prev, None, &mut streams.metrics)
        );
    }
    Ok(driver.finish(x, &mut streams.data, None))
}

/// Projection-based bilevel baseline: identical inner step and gradient
/// tracker to SBFW, but the outer update is `x_{t+1} = Proj(x_t − α_t d_t)`
/// with `α_t = α0/√t`. Exists for wall-clock comparison against the LMO.
pub fn run_projected<O: BilevelOracle + ?Sized>(
    oracle: &O,
    set: &ConstraintSet,
    metrics: &dyn ProblemMetrics,
    config: &SolverConfig,
    x_init: Option<&Point>,
    y_init: Option<&Point>,
) -> Result<RunOutput> {
    check_shapes(set, oracle.outer_shape())?;
    let mut driver = RunDriver::new(set, metrics, config)?;
    let mut streams = Streams::new(config.seed);
    let spec = ScheduleSpec {
        regime: config.regime_for(Algorithm::ProjectedBilevel),
        mu_g: config.sched_mu_g.unwrap_or_else(|| oracle.mu_g()),
        l_g: config.sched_l_g.unwrap_or_else(|| oracle.l_g()),
        sigma_g_sq: config.sigma_g_sq,
        horizon_t: config.horizon,
    };
    spec.validate()?;

    let mut x = driver.start_point(x_init)?;
    let (n, nc) = oracle.inner_shape();
    let y1 = match y_init {
        Some(y) => y.clone(),
        None => Point::zeros(n, nc),
    };
    let sched1 = config.overrides.apply(schedule(&spec, 1)?);
    let mut state = {
        let init = TrackerState::init_bilevel(
            oracle,
            &x,
            &y1,
            sched1.k,
            &mut streams.theta,
            &mut streams.hess,
            &mut driver.counter,
        );
        try_numeric!(driver, streams, x, init)
    };
    let mut x_prev = x.clone();

    for t in 1..=config.horizon {
        let sched = config.overrides.apply(schedule(&spec, t)?);
        if t > 1 {
            let y_prev = state.y.clone();
            try_numeric!(
                driver,
                streams,
                x,
                inner_sgd_step(
                    oracle,
                    &mut state,
                    &x_prev,
                    sched.delta,
                    t,
                    &mut streams.xi,
                    &mut driver.counter,
                )
            );
            let y_t = state.y.clone();
            try_numeric!(
                driver,
                streams,
                x,
                bilevel_track(
                    oracle,
                    &mut state,
                    &x,
                    &x_prev,
                    &y_t,
                    &y_prev,
                    sched.rho,
                    sched.k,
                    &mut streams.theta,
                    &mut streams.hess,
                    &mut driver.counter,
                )
            );
        }
        let alpha = config.alpha0 / (t as f64).sqrt();
        let step = x.axpy(-alpha, &state.d).and_then(|moved| set.project(&moved));
        let x_next = try_numeric!(driver, streams, x, step);
        driver.keep(&x);
        let y_now = state.y.clone();
        state.advance(&x, &y_now);
        x_prev = std::mem::replace(&mut x, x_next);
        try_numeric!(
            driver,
            streams,
            x,
            driver.record(t, &x, &x_prev, Some(&state.y), &mut streams.metrics)
        );
    }
    Ok(driver.finish(x, &mut streams.data, None))
}
