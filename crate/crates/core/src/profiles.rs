//! Step-function power profiles, reserve instructions, and the economic
//! functionals evaluated on them.
//!
//! Every integral here is exact: profiles are piecewise constant, and pointwise
//! arithmetic between two profiles is carried out on the union of their
//! breakpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermal::ThermalParams;

/// Relative tolerance under which two breakpoints are treated as the same time.
const BREAKPOINT_TOL: f64 = 1e-9;

/// Piecewise-constant function on `[0, T]` with arbitrary real values.
///
/// Value `values[k]` holds on `[breakpoints[k], breakpoints[k + 1])`; the last
/// value also holds at `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

/// One piece of the common refinement of two step profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedPiece {
    pub start: f64,
    pub end: f64,
    pub left: f64,
    pub right: f64,
}

impl MergedPiece {
    #[inline]
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

impl StepProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidProfile("profile needs at least one interval".into()));
        }
        if breakpoints.len() != values.len() + 1 {
            return Err(Error::InvalidProfile(format!(
                "{} breakpoints cannot bound {} intervals",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidProfile(format!(
                "first breakpoint must be 0, got {}",
                breakpoints[0]
            )));
        }
        for (k, w) in breakpoints.windows(2).enumerate() {
            if !(w[1].is_finite() && w[1] > w[0]) {
                return Err(Error::InvalidProfile(format!(
                    "breakpoints must be finite and strictly increasing (index {})",
                    k + 1
                )));
            }
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile(format!("value {k} is not finite")));
        }
        Ok(Self { breakpoints, values })
    }

    /// `n` equal intervals over `[0, horizon]`.
    pub fn uniform(horizon: f64, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(uniform_breakpoints(horizon, n)?, values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().expect("validated profile")
    }

    pub fn durations(&self) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints.windows(2).map(|w| w[1] - w[0])
    }

    /// Index of the interval containing `t` (the last one for `t >= T`).
    pub fn interval_index(&self, t: f64) -> usize {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        idx.saturating_sub(1).min(self.values.len() - 1)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.interval_index(t)]
    }

    pub fn integral(&self) -> f64 {
        self.durations().zip(&self.values).map(|(d, v)| d * v).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { breakpoints: self.breakpoints.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pieces of the union refinement of `self` and `other`.
    pub fn merge(&self, other: &StepProfile) -> Result<Vec<MergedPiece>> {
        let (ta, tb) = (self.horizon(), other.horizon());
        if (ta - tb).abs() > BREAKPOINT_TOL * ta.max(tb) {
            return Err(Error::HorizonMismatch { left: ta, right: tb });
        }
        let times = union_breakpoints(&self.breakpoints, &other.breakpoints, ta);
        Ok(times
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                MergedPiece {
                    start: w[0],
                    end: w[1],
                    left: self.value_at(mid),
                    right: other.value_at(mid),
                }
            })
            .collect())
    }

    /// Pointwise combination on the union of breakpoints.
    pub fn zip_with(&self, other: &StepProfile, f: impl Fn(f64, f64) -> f64) -> Result<StepProfile> {
        let pieces = self.merge(other)?;
        let mut bps = Vec::with_capacity(pieces.len() + 1);
        bps.push(0.0);
        bps.extend(pieces.iter().map(|p| p.end));
        StepProfile::new(bps, pieces.iter().map(|p| f(p.left, p.right)).collect())
    }

    /// Same function expressed on a finer partition containing every breakpoint
    /// of `self` and of `times`.
    pub fn refine(&self, times: &[f64]) -> Result<StepProfile> {
        let mut extra: Vec<f64> = times.iter().copied().filter(|t| *t > 0.0 && *t < self.horizon()).collect();
        extra.sort_by(f64::total_cmp);
        let bps = union_breakpoints(&self.breakpoints, &extra, self.horizon());
        let values = bps.windows(2).map(|w| self.value_at(0.5 * (w[0] + w[1]))).collect();
        StepProfile::new(bps, values)
    }
}

pub(crate) fn uniform_breakpoints(horizon: f64, n: usize) -> Result<Vec<f64>> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::param("T", "horizon must be positive"));
    }
    if n == 0 {
        return Err(Error::param("n_p", "need at least one interval"));
    }
    let mut bps: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
    bps[n] = horizon;
    Ok(bps)
}

/// Sorted union of two breakpoint lists, collapsing times closer than the
/// breakpoint tolerance. The result starts at 0 and ends at `horizon`.
pub(crate) fn union_breakpoints(a: &[f64], b: &[f64], horizon: f64) -> Vec<f64> {
    let tol = BREAKPOINT_TOL * horizon.max(1.0);
    let mut all: Vec<f64> = a.iter().chain(b).copied().filter(|t| *t >= 0.0 && *t <= horizon + tol).collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for t in all {
        match out.last() {
            Some(&last) if t - last <= tol => {}
            _ => out.push(t),
        }
    }
    if out.first() != Some(&0.0) {
        out.insert(0, 0.0);
    }
    let last = out.len() - 1;
    if (out[last] - horizon).abs() <= tol {
        out[last] = horizon;
    } else {
        out.push(horizon);
    }
    out
}

/// Normalized cooling power schedule: a step profile with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepProfile", into = "StepProfile")]
pub struct ControlProfile(StepProfile);

impl TryFrom<StepProfile> for ControlProfile {
    type Error = Error;

    fn try_from(p: StepProfile) -> Result<Self> {
        if let Some(k) = p.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidProfile(format!(
                "control value {} at interval {k} lies outside [0, 1]",
                p.values[k]
            )));
        }
        Ok(Self(p))
    }
}

impl From<ControlProfile> for StepProfile {
    fn from(c: ControlProfile) -> Self {
        c.0
    }
}

impl std::ops::Deref for ControlProfile {
    type Target = StepProfile;

    fn deref(&self) -> &StepProfile {
        &self.0
    }
}

impl ControlProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        StepProfile::new(breakpoints, values)?.try_into()
    }

    pub fn uniform(horizon: f64, values: Vec<f64>) -> Result<Self> {
        StepProfile::uniform(horizon, values)?.try_into()
    }

    pub fn constant(horizon: f64, u: f64, n: usize) -> Result<Self> {
        Self::uniform(horizon, vec![u; n])
    }

    pub fn as_step(&self) -> &StepProfile {
        &self.0
    }

    /// Same control on a new partition with the given values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.0.breakpoints.clone(), values)
    }

    /// First breakpoint after which the control stays at or above `level`
    /// through the horizon end. Returns `T` when the final interval is below.
    pub fn sustained_onset(&self, level: f64) -> f64 {
        let mut onset = self.horizon();
        for k in (0..self.len()).rev() {
            if self.values()[k] >= level {
                onset = self.breakpoints()[k];
            } else {
                break;
            }
        }
        onset
    }
}

/// Prices and the minimum-profit floor for the capacity problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicsParams {
    /// Night-time electricity price (p/kWh).
    #[serde(rename = "P")]
    pub price: f64,
    /// Utilization payment for consumption above the reference (p/kWh).
    #[serde(rename = "R")]
    pub payment: f64,
    /// Normalized minimum net profit required of the alternative profile.
    #[serde(default)]
    pub gamma: f64,
}

impl EconomicsParams {
    pub fn new(price: f64, payment: f64, gamma: f64) -> Result<Self> {
        let e = Self { price, payment, gamma };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.price.is_finite() && self.price > 0.0) {
            return Err(Error::param("P", "must be positive"));
        }
        if !(self.payment.is_finite() && self.payment > 0.0) {
            return Err(Error::param("R", "must be positive"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::param("gamma", "must be non-negative"));
        }
        Ok(())
    }

    /// Benefit-cost ratio `R / P`.
    pub fn ratio(&self) -> f64 {
        self.payment / self.price
    }

    /// Pence per unit of normalized-power-minute: `C_max * P / 60`.
    pub fn pence_per_unit(&self, p: &ThermalParams) -> f64 {
        p.c_max * self.price / 60.0
    }
}

/// One reserve instruction: raise usage by `ask` above reference on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    /// Normalized delivery amount.
    pub ask: f64,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstructionSequence {
    items: Vec<Instruction>,
}

impl InstructionSequence {
    pub fn new(items: Vec<Instruction>) -> Result<Self> {
        for (i, it) in items.iter().enumerate() {
            if !(it.ask.is_finite() && it.ask >= 0.0) {
                return Err(Error::InvalidInstructions(format!(
                    "instruction {i}: delivery amount must be non-negative"
                )));
            }
            if !(it.start >= 0.0 && it.start < it.end && it.end.is_finite()) {
                return Err(Error::InvalidInstructions(format!(
                    "instruction {i}: need 0 <= start < end, got [{}, {})",
                    it.start, it.end
                )));
            }
            if i > 0 && items[i - 1].end != it.start {
                return Err(Error::InvalidInstructions(format!(
                    "instruction {i} starts at {} but the previous one ends at {}",
                    it.start,
                    items[i - 1].end
                )));
            }
        }
        Ok(Self { items })
    }

    /// Builds a sequence from amounts in kW, converting with `C_max`.
    pub fn from_kw(items: &[(f64, f64, f64)], c_max: f64) -> Result<Self> {
        let items = items
            .iter()
            .map(|&(c, start, end)| Ok(Instruction { ask: normalize(c, c_max)?, start, end }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(items)
    }

    pub fn items(&self) -> &[Instruction] {
        &self.items
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn check_horizon(&self, horizon: f64) -> Result<()> {
        match self.items.last() {
            Some(last) if last.end > horizon * (1.0 + BREAKPOINT_TOL) => Err(Error::InvalidInstructions(
                format!("instructions end at {} after the horizon {horizon}", last.end),
            )),
            _ => Ok(()),
        }
    }

    /// Every start and end time.
    pub fn times(&self) -> Vec<f64> {
        self.items.iter().flat_map(|i| [i.start, i.end]).collect()
    }
}

/// Power as a fraction of `C_max`.
pub fn normalize(c: f64, c_max: f64) -> Result<f64> {
    if !(c_max > 0.0) {
        return Err(Error::Domain(format!("C_max = {c_max} must be positive")));
    }
    if !(0.0..=c_max).contains(&c) {
        return Err(Error::Domain(format!("power {c} kW outside [0, {c_max}] kW")));
    }
    Ok(c / c_max)
}

/// Instantaneous reserve capacity `u_alt - u_ref`; may be negative.
pub fn capacity_profile(u_alt: &ControlProfile, u_ref: &ControlProfile) -> Result<StepProfile> {
    u_alt.zip_with(u_ref, |a, r| a - r)
}

/// Whether a capacity profile delivers non-negative reserve over the horizon.
pub fn has_total_decremental_reserve(cap: &StepProfile) -> bool {
    cap.integral() >= 0.0
}

/// Cost (pence) of following `u` at price `P`.
pub fn total_cost(u: &ControlProfile, econ: &EconomicsParams, p: &ThermalParams) -> f64 {
    econ.pence_per_unit(p) * u.integral()
}

/// Cost (pence) of following `u_alt`, less the utilization payment for usage
/// above `u_ref`.
pub fn total_net_cost(
    u_alt: &ControlProfile,
    u_ref: &ControlProfile,
    econ: &EconomicsParams,
    p: &ThermalParams,
) -> Result<f64> {
    let pieces = u_alt.merge(u_ref)?;
    let integral: f64 = pieces
        .iter()
        .map(|q| q.duration() * (econ.price * q.left - econ.payment * (q.left - q.right).max(0.0)))
        .sum();
    Ok(p.c_max / 60.0 * integral)
}

/// Saving plus payment of `u_alt` relative to `u_ref`, in normalized units.
/// Multiply by `C_max * P / 60` for pence.
pub fn normalized_net_profit(u_alt: &ControlProfile, u_ref: &ControlProfile, ratio: f64) -> Result<f64> {
    let pieces = u_alt.merge(u_ref)?;
    Ok(pieces
        .iter()
        .map(|q| q.duration() * (q.right - q.left + ratio * (q.left - q.right).max(0.0)))
        .sum())
}

/// Lowest usage that honours every instruction: `u_ref + ask` inside each
/// instruction window and zero outside.
pub fn instructed_min_profile(u_ref: &ControlProfile, ins: &InstructionSequence) -> Result<ControlProfile> {
    let horizon = u_ref.horizon();
    ins.check_horizon(horizon)?;
    let refined = u_ref.refine(&ins.times())?;
    let mut values = vec![0.0; refined.len()];
    for (k, w) in refined.breakpoints().windows(2).enumerate() {
        let mid = 0.5 * (w[0] + w[1]);
        if let Some((i, it)) = ins.items().iter().enumerate().find(|(_, it)| it.start <= mid && mid < it.end) {
            let level = refined.values()[k] + it.ask;
            if level > 1.0 + 1e-12 {
                return Err(Error::InfeasibleInstruction { index: i, time: w[0], level });
            }
            values[k] = level.min(1.0);
        }
    }
    ControlProfile::new(refined.breakpoints().to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> ThermalParams {
        ThermalParams::new(120.0, 35.0, 10.0, 100.0).unwrap()
    }

    fn econ(ratio: f64) -> EconomicsParams {
        EconomicsParams::new(10.0, 10.0 * ratio, 0.0).unwrap()
    }

    #[test]
    fn profile_validation() {
        assert!(StepProfile::new(vec![0.0, 1.0], vec![]).is_err());
        assert!(StepProfile::new(vec![1.0, 2.0], vec![0.0]).is_err());
        assert!(StepProfile::new(vec![0.0, 2.0, 2.0], vec![0.0, 1.0]).is_err());
        assert!(ControlProfile::new(vec![0.0, 2.0], vec![1.5]).is_err());
        assert!(ControlProfile::new(vec![0.0, 2.0], vec![-0.1]).is_err());
        assert!(ControlProfile::new(vec![0.0, 2.0], vec![1.0]).is_ok());
    }

    #[test]
    fn value_lookup_is_right_continuous() {
        let p = StepProfile::new(vec![0.0, 10.0, 20.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(p.value_at(0.0), 1.0);
        assert_eq!(p.value_at(9.999), 1.0);
        assert_eq!(p.value_at(10.0), 2.0);
        assert_eq!(p.value_at(20.0), 2.0);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(0.0, 100.0).unwrap(), 0.0);
        assert_eq!(normalize(100.0, 100.0).unwrap(), 1.0);
        assert_relative_eq!(normalize(32.0, 100.0).unwrap(), 0.32);
        assert!(normalize(101.0, 100.0).is_err());
        assert!(normalize(-1.0, 100.0).is_err());
    }

    #[test]
    fn capacity_examples() {
        let r = ControlProfile::constant(360.0, 0.32, 72).unwrap();
        let cap = capacity_profile(&r, &r).unwrap();
        assert!(cap.values().iter().all(|&v| v == 0.0));

        let one = ControlProfile::constant(360.0, 1.0, 3).unwrap();
        let cap = capacity_profile(&one, &r).unwrap();
        assert!(cap.values().iter().all(|&v| (v - 0.68).abs() < 1e-12));
        assert_eq!(cap.len(), 72);

        let zero = ControlProfile::constant(360.0, 0.0, 1).unwrap();
        let cap = capacity_profile(&zero, &r).unwrap();
        assert!(cap.values().iter().all(|&v| (v + 0.32).abs() < 1e-12));
        assert!(!has_total_decremental_reserve(&cap));

        let short = ControlProfile::constant(300.0, 0.0, 1).unwrap();
        assert!(matches!(capacity_profile(&short, &r), Err(Error::HorizonMismatch { .. })));
    }

    #[test]
    fn cost_examples() {
        let p = params();
        let e = econ(1.0);
        assert_eq!(total_cost(&ControlProfile::constant(360.0, 0.0, 4).unwrap(), &e, &p), 0.0);
        assert_relative_eq!(
            total_cost(&ControlProfile::constant(360.0, 0.32, 4).unwrap(), &e, &p),
            1920.0,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            total_cost(&ControlProfile::constant(360.0, 1.0, 4).unwrap(), &e, &p),
            6000.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn net_cost_examples() {
        let p = params();
        let r = ControlProfile::constant(360.0, 0.32, 72).unwrap();
        let e = econ(1.25);
        assert_relative_eq!(
            total_net_cost(&r, &r, &e, &p).unwrap(),
            total_cost(&r, &e, &p),
            epsilon = 1e-9
        );
        let up = ControlProfile::constant(360.0, 0.42, 10).unwrap();
        assert_relative_eq!(
            total_net_cost(&up, &r, &econ(1.0), &p).unwrap(),
            total_cost(&r, &e, &p),
            epsilon = 1e-9
        );
        let one = ControlProfile::constant(360.0, 1.0, 1).unwrap();
        // (100/60) * (10 * 360 - 12.5 * 0.68 * 360)
        assert_relative_eq!(total_net_cost(&one, &r, &e, &p).unwrap(), 900.0, epsilon = 1e-9);
    }

    #[test]
    fn nnp_examples() {
        let r = ControlProfile::constant(360.0, 0.32, 72).unwrap();
        assert_eq!(normalized_net_profit(&r, &r, 1.25).unwrap(), 0.0);

        let mut v = vec![0.32; 4];
        v[1] = 1.0;
        let alt = ControlProfile::new(vec![0.0, 90.0, 180.0, 270.0, 360.0], v).unwrap();
        assert_relative_eq!(normalized_net_profit(&alt, &r, 1.25).unwrap(), 15.3, epsilon = 1e-9);

        let low = ControlProfile::constant(360.0, 0.1, 5).unwrap();
        assert!(normalized_net_profit(&low, &r, 1.25).unwrap() > 0.0);
    }

    #[test]
    fn instructed_min_examples() {
        let r = ControlProfile::constant(360.0, 0.32, 72).unwrap();
        let empty = instructed_min_profile(&r, &InstructionSequence::default()).unwrap();
        assert!(empty.values().iter().all(|&v| v == 0.0));

        let ins = InstructionSequence::new(vec![
            Instruction { ask: 0.5, start: 15.0, end: 75.0 },
            Instruction { ask: 0.2, start: 75.0, end: 240.0 },
        ])
        .unwrap();
        let u = instructed_min_profile(&r, &ins).unwrap();
        for (t, want) in [(0.0, 0.0), (14.9, 0.0), (15.0, 0.82), (74.9, 0.82), (75.0, 0.52), (239.9, 0.52), (240.0, 0.0), (360.0, 0.0)] {
            assert_relative_eq!(u.value_at(t), want, epsilon = 1e-12);
        }

        let high = ControlProfile::constant(360.0, 0.6, 6).unwrap();
        let ins = InstructionSequence::new(vec![Instruction { ask: 0.5, start: 0.0, end: 60.0 }]).unwrap();
        assert!(matches!(
            instructed_min_profile(&high, &ins),
            Err(Error::InfeasibleInstruction { index: 0, .. })
        ));
    }

    #[test]
    fn instruction_validation() {
        let bad_gap = InstructionSequence::new(vec![
            Instruction { ask: 0.1, start: 0.0, end: 10.0 },
            Instruction { ask: 0.1, start: 20.0, end: 30.0 },
        ]);
        assert!(bad_gap.is_err());
        assert!(InstructionSequence::new(vec![Instruction { ask: 0.1, start: 10.0, end: 10.0 }]).is_err());
        assert!(InstructionSequence::new(vec![Instruction { ask: -0.1, start: 0.0, end: 10.0 }]).is_err());
        let kw = InstructionSequence::from_kw(&[(50.0, 15.0, 75.0)], 100.0).unwrap();
        assert_relative_eq!(kw.items()[0].ask, 0.5);
        let late = InstructionSequence::new(vec![Instruction { ask: 0.1, start: 0.0, end: 400.0 }]).unwrap();
        assert!(late.check_horizon(360.0).is_err());
    }

    #[test]
    fn sustained_onset_finds_final_full_power_phase() {
        let mut v = vec![0.32; 72];
        for x in v.iter_mut().skip(54) {
            *x = 1.0;
        }
        v[53] = 0.7;
        let u = ControlProfile::uniform(360.0, v).unwrap();
        assert_relative_eq!(u.sustained_onset(0.99), 270.0, epsilon = 1e-9);
        let flat = ControlProfile::constant(360.0, 0.3, 4).unwrap();
        assert_eq!(flat.sustained_onset(0.99), 360.0);
    }
}
