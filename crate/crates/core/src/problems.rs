//! The reference, capacity and delivery problems as finite-dimensional
//! programs over the values of a step control.
//!
//! Every problem has box bounds `[0, 1]` on each parameter, a smooth objective,
//! and a short list of inequality constraints `value <= bound`. The running
//! objective integrals are closed-form sums over the partition; only the
//! temperature loss needs quadrature.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constraints::{
    smooth_ramp, smooth_ramp_derivative, DeliveryLoss, LossConfig, StateLoss,
};
use crate::error::{Error, Result};
use crate::profiles::{
    instructed_min_profile, uniform_breakpoints, union_breakpoints, ControlProfile, EconomicsParams,
    InstructionSequence, StepProfile,
};
use crate::thermal::{landmark_t2, steady_state_control, ThermalParams};

pub const DEFAULT_SUB_SAMPLES: usize = 10;

/// Everything that defines one night: physics, comfort band, prices and weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Control horizon length `T` (min).
    pub horizon: f64,
    pub thermal: ThermalParams,
    pub x_min: f64,
    pub x_max: f64,
    /// Pre-cooling bound on the final temperature.
    pub x_hat: f64,
    /// Initial temperature.
    pub x0: f64,
    pub econ: EconomicsParams,
    pub alpha_ref: f64,
    pub alpha_alt: f64,
    pub alpha_del: f64,
    pub loss: LossConfig,
}

impl Scenario {
    /// The desk-scale building: six-hour night, two-hour time constant, 18-27 °C band.
    pub fn baseline() -> Self {
        Self {
            horizon: 360.0,
            thermal: ThermalParams { tau: 120.0, x_off: 35.0, x_on: 10.0, c_max: 100.0 },
            x_min: 18.0,
            x_max: 27.0,
            x_hat: 18.0,
            x0: 27.0,
            econ: EconomicsParams { price: 10.0, payment: 12.5, gamma: 0.0 },
            alpha_ref: 0.01,
            alpha_alt: 0.01,
            alpha_del: 0.01,
            loss: LossConfig::for_horizon(360.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::param("T", "horizon must be positive"));
        }
        self.thermal.validate()?;
        self.econ.validate()?;
        self.loss.validate()?;
        let p = &self.thermal;
        if !(self.x_min > p.x_on) {
            return Err(Error::param("X_min", format!("must exceed X_on = {}", p.x_on)));
        }
        if !(self.x_min < self.x_max) {
            return Err(Error::param("X_min", format!("must be below X_max = {}", self.x_max)));
        }
        if !(self.x_max < p.x_off) {
            return Err(Error::param("X_max", format!("must be below X_off = {}", p.x_off)));
        }
        if !(self.x_hat >= self.x_min && self.x_hat <= self.x_max) {
            return Err(Error::param("X_hat", format!("must lie in [{}, {}]", self.x_min, self.x_max)));
        }
        if !(self.x0 >= self.x_min && self.x0 <= self.x_max) {
            return Err(Error::param("x0", format!("must lie in [{}, {}]", self.x_min, self.x_max)));
        }
        for (key, a) in [("alpha_ref", self.alpha_ref), ("alpha_alt", self.alpha_alt), ("alpha_del", self.alpha_del)] {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::param(key, "must be positive"));
            }
        }
        Ok(())
    }

    pub fn ratio(&self) -> f64 {
        self.econ.ratio()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Reference,
    Capacity,
    Delivery,
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::Reference => "reference",
            ProblemKind::Capacity => "capacity",
            ProblemKind::Delivery => "delivery",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Temperature loss `<= epsilon_state`.
    StateLoss,
    /// Smoothed financial constraint `<= -gamma`.
    Financial,
    /// Delivery loss `<= epsilon_delivery`.
    DeliveryLoss,
}

impl ConstraintKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintKind::StateLoss => "state_loss",
            ConstraintKind::Financial => "financial",
            ConstraintKind::DeliveryLoss => "delivery_loss",
        }
    }

    /// Loss constraints are sums of squared violations, zero when satisfied.
    pub fn is_loss(&self) -> bool {
        !matches!(self, ConstraintKind::Financial)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintValue {
    pub kind: ConstraintKind,
    pub value: f64,
    pub bound: f64,
    pub gradient: Vec<f64>,
}

impl ConstraintValue {
    pub fn satisfied(&self) -> bool {
        self.value <= self.bound
    }
}

/// Objective and constraint values with first derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub objective_gradient: Vec<f64>,
    pub constraints: Vec<ConstraintValue>,
}

/// Evaluation plus positive semidefinite curvature models for a Newton-type solver.
///
/// Loss curvature is exact. Curvature of the smoothed ramp terms is concave and
/// left out of the models.
#[derive(Debug, Clone)]
pub struct SecondOrder {
    pub eval: Evaluation,
    pub objective_hessian: DMatrix<f64>,
    pub constraint_hessians: Vec<DMatrix<f64>>,
}

/// Exact (unsmoothed) feasibility report for a parameter vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// Largest excursion outside `[X_min, X_max]` on the sampling grid (°C).
    pub band_violation: f64,
    /// Excursion of `x(T)` outside `[X_min, X_hat]` (°C).
    pub terminal_violation: f64,
    pub min_temperature: f64,
    pub max_temperature: f64,
    pub final_temperature: f64,
    pub state_loss: f64,
    /// Largest shortfall below the instructed minimum (delivery only).
    pub delivery_shortfall: Option<f64>,
    pub delivery_loss: Option<f64>,
    /// Exact-ramp normalized net profit relative to the reference (capacity only).
    pub nnp: Option<f64>,
    /// Amount by which the exact financial constraint exceeds `-gamma` (capacity only).
    pub financial_violation: Option<f64>,
}

impl ConstraintReport {
    /// Largest violation across families, each in its natural units.
    pub fn worst_violation(&self) -> f64 {
        [
            self.band_violation,
            self.terminal_violation,
            self.delivery_shortfall.unwrap_or(0.0),
            self.financial_violation.unwrap_or(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn feasible(&self, tol: f64) -> bool {
        self.worst_violation() <= tol
    }

    pub fn total_loss(&self) -> f64 {
        self.state_loss + self.delivery_loss.unwrap_or(0.0) + self.financial_violation.unwrap_or(0.0)
    }
}

/// Capacity-problem context: the reference usage on each interval.
#[derive(Debug, Clone)]
struct CapacityTerms {
    /// `(interval, duration, u_ref)` pieces of the common refinement.
    pieces: Vec<(usize, f64, f64)>,
    ratio: f64,
    gamma: f64,
    theta: f64,
}

/// One of the three problems, ready for evaluation.
#[derive(Debug, Clone)]
pub struct AssembledProblem {
    kind: ProblemKind,
    scenario: Scenario,
    breakpoints: Vec<f64>,
    durations: Vec<f64>,
    alpha: f64,
    sub_samples: usize,
    state: StateLoss,
    capacity: Option<CapacityTerms>,
    delivery: Option<DeliveryLoss>,
    u_ref: Option<ControlProfile>,
    u_ins: Option<ControlProfile>,
    instructions: Option<InstructionSequence>,
    financial_margin: f64,
    state_enabled: bool,
}

fn check_dimension(n_p: usize) -> Result<()> {
    if n_p < 2 {
        return Err(Error::param("n_p", "need at least 2 intervals"));
    }
    Ok(())
}

impl AssembledProblem {
    fn assemble(kind: ProblemKind, s: &Scenario, breakpoints: Vec<f64>, alpha: f64) -> Result<Self> {
        let state = StateLoss::new(s, &breakpoints, DEFAULT_SUB_SAMPLES)?;
        let durations = breakpoints.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            kind,
            scenario: s.clone(),
            breakpoints,
            durations,
            alpha,
            sub_samples: DEFAULT_SUB_SAMPLES,
            state,
            capacity: None,
            delivery: None,
            u_ref: None,
            u_ins: None,
            instructions: None,
            financial_margin: 0.0,
            state_enabled: true,
        })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.durations.len()
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn sub_samples(&self) -> usize {
        self.sub_samples
    }

    /// Regularizer weight of this problem's objective.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn u_ref(&self) -> Option<&ControlProfile> {
        self.u_ref.as_ref()
    }

    pub fn u_ins(&self) -> Option<&ControlProfile> {
        self.u_ins.as_ref()
    }

    pub fn instructions(&self) -> Option<&InstructionSequence> {
        self.instructions.as_ref()
    }

    pub fn constraint_kinds(&self) -> Vec<ConstraintKind> {
        let mut kinds = Vec::new();
        if self.state_enabled {
            kinds.push(ConstraintKind::StateLoss);
        }
        match self.kind {
            ProblemKind::Reference => {}
            ProblemKind::Capacity => kinds.push(ConstraintKind::Financial),
            ProblemKind::Delivery => kinds.push(ConstraintKind::DeliveryLoss),
        }
        kinds
    }

    /// Rebuilds the quadrature with `k` sub-samples per interval.
    pub fn with_sub_samples(mut self, k: usize) -> Result<Self> {
        if k != self.sub_samples {
            self.state = StateLoss::new(&self.scenario, &self.breakpoints, k)?;
            self.sub_samples = k;
        }
        Ok(self)
    }

    /// Replaces the regularizer weight. Used for diagnostics such as the
    /// unregularized variant in gradient checks; zero is allowed here.
    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::param("alpha", "must be non-negative"));
        }
        self.alpha = alpha;
        Ok(self)
    }

    /// Drops the temperature constraint, leaving only the box. The result is a
    /// convex program with a known optimum, handy for testing the solver.
    pub fn without_state_constraint(mut self) -> Self {
        self.state_enabled = false;
        self
    }

    /// Tightens the smoothed financial bound by `margin` (capacity only).
    pub(crate) fn with_financial_margin(mut self, margin: f64) -> Self {
        self.financial_margin = margin.max(0.0);
        self
    }

    pub(crate) fn financial_margin(&self) -> f64 {
        self.financial_margin
    }

    /// Control profile on this problem's partition.
    pub fn profile(&self, params: &[f64]) -> Result<ControlProfile> {
        ControlProfile::new(self.breakpoints.clone(), params.to_vec())
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.dimension() {
            return Err(Error::Domain(format!(
                "expected {} parameters, got {}",
                self.dimension(),
                params.len()
            )));
        }
        for (i, &v) in params.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("parameter {i} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Objective, constraint values and their gradients at `params`.
    ///
    /// Pure and deterministic: identical inputs give bit-identical outputs.
    pub fn evaluate(&self, params: &[f64]) -> Result<Evaluation> {
        Ok(self.evaluate_inner(params, false)?.eval)
    }

    /// As [`evaluate`](Self::evaluate), plus curvature models.
    pub fn evaluate_second_order(&self, params: &[f64]) -> Result<SecondOrder> {
        self.evaluate_inner(params, true)
    }

    /// Objective value only.
    pub fn objective(&self, params: &[f64]) -> f64 {
        let mut f = 0.0;
        for (&u, &d) in params.iter().zip(&self.durations) {
            f += d * (u + self.alpha * u * u);
        }
        if let Some(cap) = &self.capacity {
            for &(k, d, r) in &cap.pieces {
                f -= cap.ratio * d * smooth_ramp(params[k] - r, cap.theta);
            }
        }
        f
    }

    fn evaluate_inner(&self, params: &[f64], second: bool) -> Result<SecondOrder> {
        self.check_params(params)?;
        let n = self.dimension();

        let mut grad = vec![0.0; n];
        let mut obj_hess = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let (u, d) = (params[k], self.durations[k]);
            grad[k] = d * (1.0 + 2.0 * self.alpha * u);
            obj_hess[(k, k)] = 2.0 * self.alpha * d;
        }

        let mut constraints = Vec::new();
        let mut hessians = Vec::new();
        if self.state_enabled {
            let state = self.state.evaluate(params, true, second);
            constraints.push(ConstraintValue {
                kind: ConstraintKind::StateLoss,
                value: state.value,
                bound: self.scenario.loss.epsilon_state,
                gradient: state.gradient.expect("requested"),
            });
            if let Some(h) = state.hessian {
                hessians.push(h);
            }
        }

        if let Some(cap) = &self.capacity {
            let mut fin = cap.gamma;
            let mut fin_grad = vec![0.0; n];
            for &(k, d, r) in &cap.pieces {
                let y = params[k] - r;
                let slope = smooth_ramp_derivative(y, cap.theta);
                grad[k] -= cap.ratio * d * slope;
                fin += d * (y - cap.ratio * smooth_ramp(y, cap.theta));
                fin_grad[k] += d * (1.0 - cap.ratio * slope);
            }
            constraints.push(ConstraintValue {
                kind: ConstraintKind::Financial,
                value: fin - cap.gamma,
                bound: -cap.gamma - self.financial_margin,
                gradient: fin_grad,
            });
            if second {
                hessians.push(DMatrix::zeros(n, n));
            }
        }

        if let Some(del) = &self.delivery {
            let e = del.evaluate(params, true, second);
            constraints.push(ConstraintValue {
                kind: ConstraintKind::DeliveryLoss,
                value: e.value,
                bound: self.scenario.loss.epsilon_delivery,
                gradient: e.gradient.expect("requested"),
            });
            if second {
                hessians.push(e.hessian.expect("requested"));
            }
        }

        let objective = self.objective(params);
        if !objective.is_finite() {
            let index = grad.iter().position(|g| !g.is_finite()).unwrap_or(0);
            return Err(Error::NonFinite { index });
        }
        for c in &constraints {
            if !c.value.is_finite() {
                let index = c.gradient.iter().position(|g| !g.is_finite()).unwrap_or(0);
                return Err(Error::NonFinite { index });
            }
            if let Some(index) = c.gradient.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite { index });
            }
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { index });
        }

        Ok(SecondOrder {
            eval: Evaluation { objective, objective_gradient: grad, constraints },
            objective_hessian: obj_hess,
            constraint_hessians: if second { hessians } else { Vec::new() },
        })
    }

    /// Exact-ramp financial constraint value `∫[u - u_ref - (R/P)(u - u_ref)^+] dt`.
    pub fn exact_financial(&self, params: &[f64]) -> Option<f64> {
        self.capacity.as_ref().map(|cap| {
            cap.pieces
                .iter()
                .map(|&(k, d, r)| {
                    let y = params[k] - r;
                    d * (y - cap.ratio * y.max(0.0))
                })
                .sum()
        })
    }

    /// Exact constraint check, independent of smoothing.
    pub fn report(&self, params: &[f64]) -> Result<ConstraintReport> {
        self.check_params(params)?;
        let (band, terminal) = if self.state_enabled { self.state.violations(params) } else { (0.0, 0.0) };
        let profile = self.profile(params)?;
        let traj = crate::thermal::simulate(&profile, self.scenario.x0, &self.scenario.thermal, self.sub_samples)?;
        let mut rep = ConstraintReport {
            band_violation: band,
            terminal_violation: terminal,
            min_temperature: traj.min(),
            max_temperature: traj.max(),
            final_temperature: traj.final_temperature(),
            state_loss: if self.state_enabled { self.state.evaluate(params, false, false).value } else { 0.0 },
            ..Default::default()
        };
        if let Some(del) = &self.delivery {
            rep.delivery_shortfall = Some(del.max_shortfall(params));
            rep.delivery_loss = Some(del.evaluate(params, false, false).value);
        }
        if let (Some(cap), Some(fin)) = (&self.capacity, self.exact_financial(params)) {
            rep.nnp = Some(-fin);
            rep.financial_violation = Some((fin + cap.gamma).max(0.0));
        }
        Ok(rep)
    }

    /// Constant control holding the initial temperature.
    pub fn steady_state_guess(&self) -> Vec<f64> {
        let u = steady_state_control(self.scenario.x0, &self.scenario.thermal).unwrap_or(0.5);
        vec![u.clamp(0.0, 1.0); self.dimension()]
    }

    /// Plateau at the steady-state control, then full power from the analytic
    /// switching time to the end.
    pub fn analytic_reference_guess(&self) -> Vec<f64> {
        let mut u = self.steady_state_guess();
        let t2 = landmark_t2(&self.scenario).unwrap_or(self.scenario.horizon);
        for (k, w) in self.breakpoints.windows(2).enumerate() {
            if w[0] >= t2 {
                u[k] = 1.0;
            } else if w[1] > t2 {
                let frac = (w[1] - t2) / (w[1] - w[0]);
                u[k] = (frac + (1.0 - frac) * u[k]).clamp(0.0, 1.0);
            }
        }
        u
    }

    /// Interval means of `f` over this problem's partition.
    fn interval_means(&self, f: &StepProfile) -> Result<Vec<f64>> {
        let grid = StepProfile::new(self.breakpoints.clone(), (0..self.dimension()).map(|k| k as f64).collect())?;
        let mut acc = vec![0.0; self.dimension()];
        for piece in grid.merge(f)? {
            acc[piece.left as usize] += piece.duration() * piece.right;
        }
        Ok(acc.iter().zip(&self.durations).map(|(a, d)| (a / d).clamp(0.0, 1.0)).collect())
    }

    /// Step shape through `(end_time, level)` segments, starting at 0. Segments
    /// that collapse to zero length are skipped; the last must end at `T`.
    fn segments(&self, segs: &[(f64, f64)]) -> Result<Vec<f64>> {
        let horizon = self.scenario.horizon;
        let mut bps = vec![0.0];
        let mut vals = Vec::new();
        for &(end, level) in segs {
            let end = end.clamp(0.0, horizon);
            if end > *bps.last().expect("non-empty") + 1e-9 {
                bps.push(end);
                vals.push(level);
            }
        }
        self.interval_means(&StepProfile::new(bps, vals)?)
    }

    /// Problem-specific starting points built from the analytic landmarks.
    ///
    /// Capacity: follow the reference; a full-power window ending at the
    /// reference switching time; full power down to `X_min` then hold it.
    /// Delivery: the instructed minimum topped up to the reference; the
    /// instructed minimum followed by a rest and a final full-power phase.
    pub fn structured_guesses(&self) -> Result<Vec<Vec<f64>>> {
        let s = &self.scenario;
        let hold = steady_state_control(s.x_min, &s.thermal)?.clamp(0.0, 1.0);
        let t2 = landmark_t2(s)?;
        let mut out = Vec::new();
        match (self.kind, &self.u_ref, &self.u_ins) {
            (ProblemKind::Capacity, Some(u_ref), _) => {
                let base = self.interval_means(u_ref)?;
                out.push(base.clone());
                let t_hat = crate::thermal::landmark_t_hat(s, t2)?.max(0.0);
                let window = self.segments(&[(t_hat, 0.0), (t2, 1.0), (s.horizon, hold)])?;
                let before = self.segments(&[(t_hat, 1.0), (s.horizon, 0.0)])?;
                out.push(window.iter().zip(&before).zip(&base).map(|((w, b), r)| w + b * r).collect());
                let t_check = crate::thermal::landmark_t_check(s)?;
                out.push(self.segments(&[(t_check, 1.0), (s.horizon, hold)])?);
                // the smoothed payment is concave in u, so on/off patterns with
                // the same running mean are often cheaper than flat levels
                let dithered: Vec<Vec<f64>> = out.iter().map(|g| dither(g, &self.durations)).collect();
                out.extend(dithered);
            }
            (ProblemKind::Delivery, Some(u_ref), Some(u_ins)) => {
                let ins = self.interval_means(u_ins)?;
                let base = self.interval_means(u_ref)?;
                out.push(ins.iter().zip(&base).map(|(a, b)| a.max(*b)).collect());
                let last_end = self.instructions.as_ref().and_then(|i| i.items().last().map(|l| l.end)).unwrap_or(0.0);
                let tail = self.segments(&[(last_end, 0.0), (t2.max(last_end), 0.0), (s.horizon, 1.0)])?;
                out.push(ins.iter().zip(&tail).map(|(a, b)| a.max(*b)).collect());
            }
            _ => {}
        }
        Ok(out)
    }
}

/// Rounds a control to 0/1 values while tracking its running integral
/// (first-order error diffusion).
fn dither(u: &[f64], durations: &[f64]) -> Vec<f64> {
    let mut carry = 0.0;
    u.iter()
        .zip(durations)
        .map(|(&v, &d)| {
            carry += v * d;
            let on = carry >= 0.5 * d;
            if on {
                carry -= d;
            }
            if on { 1.0 } else { 0.0 }
        })
        .collect()
}

/// Problem 1: cheapest schedule when no reserve is called.
pub fn build_reference(s: &Scenario, n_p: usize) -> Result<AssembledProblem> {
    s.validate()?;
    check_dimension(n_p)?;
    AssembledProblem::assemble(ProblemKind::Reference, s, uniform_breakpoints(s.horizon, n_p)?, s.alpha_ref)
}

/// Problem 2: alternative schedule minimizing net cost given the reference.
pub fn build_capacity(s: &Scenario, u_ref: &ControlProfile, n_p: usize) -> Result<AssembledProblem> {
    s.validate()?;
    check_dimension(n_p)?;
    let bps = uniform_breakpoints(s.horizon, n_p)?;
    let mut problem = AssembledProblem::assemble(ProblemKind::Capacity, s, bps.clone(), s.alpha_alt)?;
    let grid = StepProfile::new(bps, (0..n_p).map(|k| k as f64).collect())?;
    let pieces = grid
        .merge(u_ref)?
        .into_iter()
        .map(|p| (p.left as usize, p.duration(), p.right))
        .collect();
    problem.capacity = Some(CapacityTerms {
        pieces,
        ratio: s.ratio(),
        gamma: s.econ.gamma,
        theta: s.loss.theta,
    });
    problem.u_ref = Some(u_ref.clone());
    Ok(problem)
}

/// Problem 3: cheapest schedule honouring the reserve instructions. The
/// uniform partition is refined so every instruction start and end is a
/// breakpoint.
pub fn build_delivery(
    s: &Scenario,
    u_ref: &ControlProfile,
    ins: &InstructionSequence,
    n_p: usize,
) -> Result<AssembledProblem> {
    s.validate()?;
    check_dimension(n_p)?;
    if (u_ref.horizon() - s.horizon).abs() > 1e-9 * s.horizon {
        return Err(Error::HorizonMismatch { left: s.horizon, right: u_ref.horizon() });
    }
    let u_ins = instructed_min_profile(u_ref, ins)?;
    let bps = union_breakpoints(&uniform_breakpoints(s.horizon, n_p)?, &ins.times(), s.horizon);
    let mut problem = AssembledProblem::assemble(ProblemKind::Delivery, s, bps.clone(), s.alpha_del)?;
    problem.delivery = Some(DeliveryLoss::new(&bps, &u_ins)?);
    problem.u_ref = Some(u_ref.clone());
    problem.u_ins = Some(u_ins);
    problem.instructions = Some(ins.clone());
    Ok(problem)
}
