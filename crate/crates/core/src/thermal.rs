//! Linear relaxation model of the building's internal temperature.
//!
//! The temperature relaxes exponentially with time constant `tau` towards
//! `X_off + (X_on - X_off) u`, where `u` in `[0, 1]` is the normalized cooling
//! power. Under piecewise-constant control the trajectory is known in closed
//! form, so propagation is exact at every breakpoint.
//!
//! The landmark functions give the approximate switching times of the optimal
//! schedules. They are used as oracles when checking solver output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::Scenario;
use crate::profiles::ControlProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Thermal time constant (min).
    pub tau: f64,
    /// Asymptotic temperature with the cooling off (°C).
    #[serde(rename = "X_off")]
    pub x_off: f64,
    /// Asymptotic temperature with the cooling at full power (°C).
    #[serde(rename = "X_on")]
    pub x_on: f64,
    /// Maximum cooling power (kW).
    #[serde(rename = "C_max")]
    pub c_max: f64,
}

impl ThermalParams {
    pub fn new(tau: f64, x_off: f64, x_on: f64, c_max: f64) -> Result<Self> {
        let p = Self { tau, x_off, x_on, c_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::param("tau", "must be positive"));
        }
        if !(self.x_off.is_finite() && self.x_on.is_finite()) {
            return Err(Error::param("X_on", "temperatures must be finite"));
        }
        if self.x_on >= self.x_off {
            return Err(Error::param("X_on", "must be strictly below X_off"));
        }
        if !(self.c_max.is_finite() && self.c_max > 0.0) {
            return Err(Error::param("C_max", "must be positive"));
        }
        Ok(())
    }

    /// `X_off - X_on`, the temperature span of the control authority.
    #[inline]
    pub fn span(&self) -> f64 {
        self.x_off - self.x_on
    }

    /// Temperature the building settles at under constant control `u`.
    #[inline]
    pub fn equilibrium(&self, u: f64) -> f64 {
        self.x_off + (self.x_on - self.x_off) * u
    }

    pub(crate) fn check_model_temperature(&self, x: f64, name: &str) -> Result<()> {
        if !x.is_finite() || x < self.x_on || x > self.x_off {
            return Err(Error::Domain(format!(
                "{name} = {x} lies outside [X_on, X_off] = [{}, {}]",
                self.x_on, self.x_off
            )));
        }
        Ok(())
    }
}

/// Sampled temperature path over `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureTrajectory {
    pub samples: Vec<(f64, f64)>,
}

impl TemperatureTrajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }

    pub fn temperatures(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn final_temperature(&self) -> f64 {
        self.samples.last().map(|s| s.1).unwrap_or(f64::NAN)
    }

    /// Temperature at `t`, interpolated linearly between samples.
    pub fn at(&self, t: f64) -> f64 {
        let idx = self.samples.partition_point(|s| s.0 < t);
        if idx == 0 {
            return self.samples[0].1;
        }
        if idx >= self.samples.len() {
            return self.final_temperature();
        }
        let (t0, x0) = self.samples[idx - 1];
        let (t1, x1) = self.samples[idx];
        if t1 == t0 {
            return x1;
        }
        x0 + (x1 - x0) * (t - t0) / (t1 - t0)
    }

    pub fn min(&self) -> f64 {
        self.temperatures().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.temperatures().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Constant control that holds the temperature at `x_level`.
pub fn steady_state_control(x_level: f64, p: &ThermalParams) -> Result<f64> {
    p.check_model_temperature(x_level, "x_level")?;
    Ok(((p.x_off - x_level) / p.span()).clamp(0.0, 1.0))
}

/// Exact temperature after holding control `u` for `dt` minutes from `x0`.
pub fn propagate(x0: f64, u: f64, dt: f64, p: &ThermalParams) -> f64 {
    debug_assert!((0.0..=1.0).contains(&u), "control {u} outside [0, 1]");
    debug_assert!(dt >= 0.0);
    let decay = (-dt / p.tau).exp();
    decay * x0 + (1.0 - decay) * p.equilibrium(u)
}

/// Samples the exact trajectory of `profile` from `x0`.
///
/// Each interval contributes `sub_samples` equally spaced points starting at its
/// left breakpoint; the horizon end is appended last. Interval endpoints are
/// obtained by chaining [`propagate`], so there is no integration error.
pub fn simulate(
    profile: &ControlProfile,
    x0: f64,
    p: &ThermalParams,
    sub_samples: usize,
) -> Result<TemperatureTrajectory> {
    if sub_samples == 0 {
        return Err(Error::param("sub_samples", "must be at least 1"));
    }
    p.check_model_temperature(x0, "x0")?;
    let bp = profile.breakpoints();
    let mut samples = Vec::with_capacity(profile.len() * sub_samples + 1);
    let mut x = x0;
    for (k, &u) in profile.values().iter().enumerate() {
        let (a, b) = (bp[k], bp[k + 1]);
        let h = (b - a) / sub_samples as f64;
        for j in 0..sub_samples {
            samples.push((a + j as f64 * h, propagate(x, u, j as f64 * h, p)));
        }
        x = propagate(x, u, b - a, p);
    }
    samples.push((profile.horizon(), x));
    Ok(TemperatureTrajectory { samples })
}

/// Approximate time at which the optimal reference schedule switches to full
/// power so that it lands on `X_hat` at the horizon end.
pub fn landmark_t2(s: &Scenario) -> Result<f64> {
    let p = &s.thermal;
    if s.x_hat <= p.x_on {
        return Err(Error::Domain(format!(
            "X_hat = {} must exceed X_on = {}",
            s.x_hat, p.x_on
        )));
    }
    Ok(s.horizon - p.tau * ((s.x_max - p.x_on) / (s.x_hat - p.x_on)).ln())
}

/// Start of the sustained maximal-capacity window that ends at `t2`.
pub fn landmark_t_hat(s: &Scenario, t2: f64) -> Result<f64> {
    if !(t2 > 0.0 && t2 <= s.horizon) {
        return Err(Error::Domain(format!("t2 = {t2} must lie in (0, {}]", s.horizon)));
    }
    Ok(t2 - full_power_descent_time(s)?)
}

/// First time the temperature reaches `X_min` when full power is applied from
/// `X_max` at the start of the horizon.
pub fn landmark_t_check(s: &Scenario) -> Result<f64> {
    full_power_descent_time(s)
}

fn full_power_descent_time(s: &Scenario) -> Result<f64> {
    let p = &s.thermal;
    if s.x_min <= p.x_on {
        return Err(Error::Domain(format!(
            "X_min = {} must exceed X_on = {}",
            s.x_min, p.x_on
        )));
    }
    Ok(p.tau * ((s.x_max - p.x_on) / (s.x_min - p.x_on)).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapacityCase {
    /// Utilization payment below the electricity price.
    Case1,
    /// Utilization payment above the electricity price.
    Case3,
}

/// Approximate normalized level of sustained reserve capacity.
pub fn sustained_capacity_level(case: CapacityCase, s: &Scenario) -> f64 {
    let p = &s.thermal;
    match case {
        CapacityCase::Case1 => (s.x_max - p.x_on) / p.span(),
        CapacityCase::Case3 => (s.x_max - s.x_min) / p.span(),
    }
}
