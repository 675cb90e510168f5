//! Step-size and sample-count schedules for each solver regime.
//!
//! The four regimes pair the two solvers with convex/nonconvex objectives.
//! Convex schedules decay per iteration; nonconvex ones use a constant
//! Frank-Wolfe step determined by the horizon `T`. The bilevel regimes also
//! emit `k_t`, the Hessian-sample budget of the inverse-Hessian estimator
//! at iteration `t`; the compositional regimes use no Hessian samples.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Solver/objective pairing that selects a schedule family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    SbfwConvex,
    SbfwNonconvex,
    ScfwConvex,
    ScfwNonconvex,
}

/// Constants a schedule needs: inner strong convexity `mu_g`, inner
/// smoothness `l_g`, inner gradient variance bound `sigma_g_sq`, and the
/// run horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub regime: Regime,
    pub mu_g: f64,
    pub l_g: f64,
    pub sigma_g_sq: f64,
    pub horizon_t: u64,
}

/// The four per-iteration schedule values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    /// Inner step size δ_t.
    pub delta: f64,
    /// Tracker momentum ρ_t.
    pub rho: f64,
    /// Frank-Wolfe step η_t.
    pub eta: f64,
    /// Hessian-sample budget k_t (0 for compositional regimes).
    pub k: u64,
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_g > 0.0) || !self.mu_g.is_finite() {
            return Err(Error::Config(format!("mu_g must be positive, got {}", self.mu_g)));
        }
        if self.l_g < self.mu_g || !self.l_g.is_finite() {
            return Err(Error::Config(format!(
                "l_g must satisfy l_g >= mu_g, got l_g={} mu_g={}",
                self.l_g, self.mu_g
            )));
        }
        if !(self.sigma_g_sq >= 0.0) {
            return Err(Error::Config(format!(
                "sigma_g_sq must be nonnegative, got {}",
                self.sigma_g_sq
            )));
        }
        if self.horizon_t < 1 {
            return Err(Error::Config("horizon_t must be >= 1".into()));
        }
        Ok(())
    }

    /// Base inner step size `a0 = min{2/(3·mu), mu/(2(1+sigma²)·L²)}`.
    pub fn a0(&self) -> f64 {
        let first = 2.0 / (3.0 * self.mu_g);
        let second = self.mu_g / (2.0 * (1.0 + self.sigma_g_sq) * self.l_g * self.l_g);
        first.min(second)
    }
}

fn clamp_step(v: f64) -> f64 {
    v.min(1.0)
}

/// Schedule values at iteration `t >= 1`.
pub fn schedule(spec: &ScheduleSpec, t: u64) -> Result<Schedule> {
    spec.validate()?;
    if t < 1 {
        return Err(Error::Usage("schedule: t must be >= 1".into()));
    }
    let tf = t as f64;
    let total = spec.horizon_t as f64;
    let a0 = spec.a0();
    // Hessian budget grows logarithmically; a sample count must be a
    // positive integer, so take the ceiling with floor 1.
    let k_of = |coeff: f64| -> u64 {
        let raw = coeff * (1.0 + tf).ln();
        (raw.ceil() as u64).max(1)
    };
    let s = match spec.regime {
        Regime::SbfwConvex => Schedule {
            delta: clamp_step(a0 / tf.powf(2.0 / 3.0)),
            rho: clamp_step(2.0 / tf.powf(2.0 / 3.0)),
            eta: clamp_step(2.0 / (tf + 1.0)),
            k: k_of(2.0 * spec.l_g / (3.0 * spec.mu_g)),
        },
        Regime::SbfwNonconvex => Schedule {
            delta: clamp_step(a0 / tf.sqrt()),
            rho: clamp_step(2.0 / tf.sqrt()),
            eta: clamp_step(2.0 / (total + 1.0).powf(0.75)),
            k: k_of(spec.l_g / (2.0 * spec.mu_g)),
        },
        Regime::ScfwConvex => Schedule {
            delta: clamp_step(2.0 / tf),
            rho: clamp_step(2.0 / tf),
            eta: clamp_step(2.0 / (tf + 1.0)),
            k: 0,
        },
        Regime::ScfwNonconvex => Schedule {
            delta: clamp_step(2.0 / tf.powf(2.0 / 3.0)),
            rho: clamp_step(2.0 / tf.powf(2.0 / 3.0)),
            eta: clamp_step(2.0 / (total + 1.0).powf(2.0 / 3.0)),
            k: 0,
        },
    };
    Ok(s)
}
