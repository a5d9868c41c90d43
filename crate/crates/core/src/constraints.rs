//! Constraint residuals, squared-violation losses, and smooth surrogates for
//! ramp and indicator functions.
//!
//! The temperature constraints are folded into a single loss per family:
//! the time integral of the squared negative part of a running residual plus a
//! weighted squared negative part of a terminal residual. A loss is zero exactly
//! when its constraints hold on the sampling grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::Scenario;
use crate::profiles::{ControlProfile, StepProfile};
use crate::thermal::{propagate, ThermalParams};

/// Weights, tolerances and smoothing sharpness for the constraint losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Terminal-loss weight of the temperature family.
    pub lambda_state: f64,
    /// Terminal-loss weight of the delivery family (its terminal residual is zero).
    pub lambda_delivery: f64,
    /// Loss tolerance of the temperature family (°C²·min).
    pub epsilon_state: f64,
    /// Loss tolerance of the delivery family (min).
    pub epsilon_delivery: f64,
    /// Sharpness of the smooth ramp and indicator.
    pub theta: f64,
}

impl LossConfig {
    pub const DEFAULT_EPSILON: f64 = 1e-10;
    pub const DEFAULT_THETA: f64 = 50.0;

    /// Defaults for a horizon of `horizon` minutes: terminal weights equal to
    /// the horizon length so terminal and running losses are comparable.
    pub fn for_horizon(horizon: f64) -> Self {
        Self {
            lambda_state: horizon,
            lambda_delivery: horizon,
            epsilon_state: Self::DEFAULT_EPSILON,
            epsilon_delivery: Self::DEFAULT_EPSILON,
            theta: Self::DEFAULT_THETA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("lambda_state", self.lambda_state), ("lambda_delivery", self.lambda_delivery)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(key, "must be positive"));
            }
        }
        for (key, v) in [("epsilon_state", self.epsilon_state), ("epsilon_delivery", self.epsilon_delivery)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(key, "must be non-negative"));
            }
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::param("theta", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    /// Comfort band on `[0, T]` and the pre-cooling bound at `T`.
    State,
    /// Instructed minimum usage.
    Delivery,
}

/// Running and terminal temperature residuals `(psi, phi)`.
///
/// `psi >= 0` iff `X_min <= x <= X_max`; `phi >= 0` iff `X_min <= x <= X_hat`.
pub fn state_residuals(_t: f64, x: f64, s: &Scenario) -> (f64, f64) {
    ((s.x_max - x) * (x - s.x_min), (s.x_hat - x) * (x - s.x_min))
}

/// Excess of usage over the instructed minimum; negative means a shortfall.
pub fn delivery_residual(_t: f64, u: f64, u_ins_at_t: f64) -> f64 {
    u - u_ins_at_t
}

/// Numerically stable `1 / (1 + e^{-z})`.
#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Softplus approximation of `max(0, y)`.
#[inline]
pub fn smooth_ramp(y: f64, theta: f64) -> f64 {
    let z = theta * y;
    if z > 30.0 {
        y + (-z).exp().ln_1p() / theta
    } else {
        z.exp().ln_1p() / theta
    }
}

/// First derivative of [`smooth_ramp`] in `y`.
#[inline]
pub fn smooth_ramp_derivative(y: f64, theta: f64) -> f64 {
    logistic(theta * y)
}

/// Second derivative of [`smooth_ramp`] in `y`.
#[inline]
pub fn smooth_ramp_second_derivative(y: f64, theta: f64) -> f64 {
    let s = logistic(theta * y);
    theta * s * (1.0 - s)
}

/// Smooth approximation of the indicator of `[a, b]`.
pub fn smooth_indicator(y: f64, a: f64, b: f64, theta: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::Domain(format!("indicator interval needs a < b, got [{a}, {b}]")));
    }
    Ok(logistic(theta * (y - a)) * logistic(theta * (b - y)))
}

/// Loss value with optional first and second derivatives in the control values.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    /// Exact Hessian where the loss is twice differentiable; positive semidefinite.
    pub hessian: Option<DMatrix<f64>>,
}

/// Temperature-family loss on a fixed partition, differentiable in the control values.
///
/// The running integral uses the composite trapezoid rule on `sub_samples`
/// equally spaced points per interval. Temperatures at the nodes are affine in
/// the control values, so derivatives are propagated backwards through the
/// exponential decay factors.
#[derive(Debug, Clone)]
pub struct StateLoss {
    thermal: ThermalParams,
    x0: f64,
    x_min: f64,
    x_max: f64,
    x_hat: f64,
    lambda: f64,
    breakpoints: Vec<f64>,
    sub: usize,
    /// `exp(-j h_k / tau)` for `j = 1..=sub`, per interval.
    decay: Vec<Vec<f64>>,
    /// Trapezoid weight of each interior node `j = 1..=sub`, per interval.
    weights: Vec<Vec<f64>>,
    /// Weight of the node at `t = 0`.
    w0: f64,
}

impl StateLoss {
    pub fn new(s: &Scenario, breakpoints: &[f64], sub_samples: usize) -> Result<Self> {
        if sub_samples == 0 {
            return Err(Error::param("sub_samples", "must be at least 1"));
        }
        let n = breakpoints.len() - 1;
        let tau = s.thermal.tau;
        let h: Vec<f64> = breakpoints.windows(2).map(|w| (w[1] - w[0]) / sub_samples as f64).collect();
        let decay = h
            .iter()
            .map(|hk| (1..=sub_samples).map(|j| (-(j as f64) * hk / tau).exp()).collect())
            .collect();
        let weights = (0..n)
            .map(|k| {
                (1..=sub_samples)
                    .map(|j| {
                        if j < sub_samples {
                            h[k]
                        } else if k + 1 < n {
                            0.5 * (h[k] + h[k + 1])
                        } else {
                            0.5 * h[k]
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            thermal: s.thermal,
            x0: s.x0,
            x_min: s.x_min,
            x_max: s.x_max,
            x_hat: s.x_hat,
            lambda: s.loss.lambda_state,
            breakpoints: breakpoints.to_vec(),
            sub: sub_samples,
            decay,
            weights,
            w0: 0.5 * h[0],
        })
    }

    pub fn dimension(&self) -> usize {
        self.breakpoints.len() - 1
    }

    #[inline]
    fn running(&self, x: f64) -> (f64, f64) {
        ((self.x_max - x) * (x - self.x_min), self.x_max + self.x_min - 2.0 * x)
    }

    #[inline]
    fn terminal(&self, x: f64) -> (f64, f64) {
        ((self.x_hat - x) * (x - self.x_min), self.x_hat + self.x_min - 2.0 * x)
    }

    /// Node temperatures, interval by interval (`sub` nodes each).
    fn nodes(&self, u: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(u.len() * self.sub);
        let mut x = self.x0;
        for (k, &uk) in u.iter().enumerate() {
            let eq = self.thermal.equilibrium(uk);
            for &a in &self.decay[k] {
                out.push(a * x + (1.0 - a) * eq);
            }
            x = *out.last().expect("sub >= 1");
        }
        out
    }

    pub fn evaluate(&self, u: &[f64], gradient: bool, hessian: bool) -> LossEval {
        let n = self.dimension();
        debug_assert_eq!(u.len(), n);
        let s = self.sub;
        let nodes = self.nodes(u);
        // dC/dx and d2C/dx2 per node
        let mut q = vec![0.0; n * s];
        let mut c = vec![0.0; n * s];

        let (r0, _) = self.running(self.x0);
        let mut value = self.w0 * r0.min(0.0).powi(2);
        for k in 0..n {
            for j in 0..s {
                let i = k * s + j;
                let (psi, dpsi) = self.running(nodes[i]);
                if psi < 0.0 {
                    let w = self.weights[k][j];
                    value += w * psi * psi;
                    q[i] = 2.0 * w * psi * dpsi;
                    c[i] = 2.0 * w * (dpsi * dpsi - 2.0 * psi);
                }
            }
        }
        let last = n * s - 1;
        let (phi, dphi) = self.terminal(nodes[last]);
        if phi < 0.0 {
            value += self.lambda * phi * phi;
            q[last] += 2.0 * self.lambda * phi * dphi;
            c[last] += 2.0 * self.lambda * (dphi * dphi - 2.0 * phi);
        }

        if !(gradient || hessian) {
            return LossEval { value, gradient: None, hessian: None };
        }

        let span = self.thermal.span();
        let tau = self.thermal.tau;
        let interval_decay: Vec<f64> =
            self.breakpoints.windows(2).map(|w| (-(w[1] - w[0]) / tau).exp()).collect();
        // d x(t) / d u_k for t past the end of interval k, before further decay
        let gamma: Vec<f64> = interval_decay.iter().map(|e| -(1.0 - e) * span).collect();

        let grad = gradient.then(|| {
            let mut g = vec![0.0; n];
            let mut downstream = 0.0;
            for k in (0..n).rev() {
                let mut local = 0.0;
                let mut carried = 0.0;
                for j in 0..s {
                    let a = self.decay[k][j];
                    local += q[k * s + j] * (-(1.0 - a) * span);
                    carried += q[k * s + j] * a;
                }
                g[k] = local + gamma[k] * downstream;
                downstream = interval_decay[k] * downstream + carried;
            }
            g
        });

        let hess = hessian.then(|| {
            let mut h = DMatrix::<f64>::zeros(n, n);
            // K[l] couples interval l with any earlier interval; E is the
            // discounted curvature of nodes after interval l.
            let mut coupling = vec![0.0; n];
            let mut downstream = 0.0;
            for l in (0..n).rev() {
                let mut diag = 0.0;
                let mut cross = 0.0;
                let mut carried = 0.0;
                for j in 0..s {
                    let a = self.decay[l][j];
                    let beta = -(1.0 - a) * span;
                    let ci = c[l * s + j];
                    diag += ci * beta * beta;
                    cross += ci * beta * a;
                    carried += ci * a * a;
                }
                h[(l, l)] = diag + gamma[l] * gamma[l] * downstream;
                coupling[l] = cross + gamma[l] * interval_decay[l] * downstream;
                downstream = interval_decay[l] * interval_decay[l] * downstream + carried;
            }
            for m in 0..n {
                let mut factor = 1.0;
                for l in (m + 1)..n {
                    let v = gamma[m] * factor * coupling[l];
                    h[(m, l)] = v;
                    h[(l, m)] = v;
                    factor *= interval_decay[l];
                    if factor == 0.0 {
                        break;
                    }
                }
            }
            h
        });

        LossEval { value, gradient: grad, hessian: hess }
    }

    /// Largest violation (°C) of the comfort band over the nodes, and of the
    /// terminal bound. Zero when satisfied.
    pub fn violations(&self, u: &[f64]) -> (f64, f64) {
        let nodes = self.nodes(u);
        let band = std::iter::once(self.x0)
            .chain(nodes.iter().copied())
            .map(|x| (self.x_min - x).max(x - self.x_max).max(0.0))
            .fold(0.0, f64::max);
        let xt = *nodes.last().expect("non-empty");
        let terminal = (self.x_min - xt).max(xt - self.x_hat).max(0.0);
        (band, terminal)
    }

    /// Temperature at the horizon end.
    pub fn final_temperature(&self, u: &[f64]) -> f64 {
        let mut x = self.x0;
        for (w, &uk) in self.breakpoints.windows(2).zip(u) {
            x = propagate(x, uk, w[1] - w[0], &self.thermal);
        }
        x
    }
}

/// Delivery-family loss on a fixed partition: the integral of the squared
/// shortfall below the instructed minimum. Exact for step controls.
#[derive(Debug, Clone)]
pub struct DeliveryLoss {
    /// `(interval, duration, instructed level)` pieces.
    pieces: Vec<(usize, f64, f64)>,
    n: usize,
}

impl DeliveryLoss {
    pub fn new(breakpoints: &[f64], u_ins: &StepProfile) -> Result<Self> {
        let n = breakpoints.len() - 1;
        let horizon = breakpoints[n];
        let grid = StepProfile::new(breakpoints.to_vec(), (0..n).map(|k| k as f64).collect())?;
        if (u_ins.horizon() - horizon).abs() > 1e-9 * horizon {
            return Err(Error::HorizonMismatch { left: horizon, right: u_ins.horizon() });
        }
        let pieces = grid
            .merge(u_ins)?
            .into_iter()
            .filter(|p| p.right > 0.0)
            .map(|p| (p.left as usize, p.duration(), p.right))
            .collect();
        Ok(Self { pieces, n })
    }

    pub fn evaluate(&self, u: &[f64], gradient: bool, hessian: bool) -> LossEval {
        let mut value = 0.0;
        let mut g = gradient.then(|| vec![0.0; self.n]);
        let mut h = hessian.then(|| DMatrix::<f64>::zeros(self.n, self.n));
        for &(k, d, level) in &self.pieces {
            let r = u[k] - level;
            if r < 0.0 {
                value += d * r * r;
                if let Some(g) = g.as_mut() {
                    g[k] += 2.0 * d * r;
                }
                if let Some(h) = h.as_mut() {
                    h[(k, k)] += 2.0 * d;
                }
            }
        }
        LossEval { value, gradient: g, hessian: h }
    }

    /// Largest shortfall below the instructed minimum.
    pub fn max_shortfall(&self, u: &[f64]) -> f64 {
        self.pieces.iter().map(|&(k, _, level)| (level - u[k]).max(0.0)).fold(0.0, f64::max)
    }
}

/// Total loss of one constraint family for `profile`.
///
/// The delivery family needs the instructed minimum profile `u_ins`.
pub fn total_loss(
    family: LossFamily,
    profile: &ControlProfile,
    s: &Scenario,
    u_ins: Option<&ControlProfile>,
    sub_samples: usize,
) -> Result<f64> {
    match family {
        LossFamily::State => {
            let loss = StateLoss::new(s, profile.breakpoints(), sub_samples)?;
            Ok(loss.evaluate(profile.values(), false, false).value)
        }
        LossFamily::Delivery => {
            let u_ins = u_ins.ok_or_else(|| Error::Domain("delivery loss needs the instructed profile".into()))?;
            let loss = DeliveryLoss::new(profile.breakpoints(), u_ins)?;
            Ok(loss.evaluate(profile.values(), false, false).value)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Scenario;
    use approx::assert_relative_eq;

    fn baseline() -> Scenario {
        Scenario::baseline()
    }

    #[test]
    fn residual_examples() {
        let s = baseline();
        assert_eq!(state_residuals(0.0, 18.0, &s), (0.0, 0.0));
        assert_relative_eq!(state_residuals(0.0, 22.5, &s).0, 20.25);
        assert_relative_eq!(state_residuals(0.0, 30.0, &s).0, -36.0);
        assert_eq!(delivery_residual(0.0, 0.5, 0.5), 0.0);
        assert_relative_eq!(delivery_residual(0.0, 0.9, 0.82), 0.08, epsilon = 1e-12);
        assert_relative_eq!(delivery_residual(0.0, 0.5, 0.82), -0.32, epsilon = 1e-12);
    }

    #[test]
    fn ramp_examples() {
        assert_relative_eq!(smooth_ramp(0.0, 50.0), 2f64.ln() / 50.0, epsilon = 1e-15);
        assert_relative_eq!(smooth_ramp(0.0, 50.0), 0.013863, epsilon = 1e-6);
        assert_relative_eq!(smooth_ramp(10.0, 50.0), 10.0, max_relative = f64::EPSILON);
        assert!(smooth_ramp(-10.0, 50.0).abs() < 1e-200);
        assert!(smooth_ramp(1e6, 50.0).is_finite());
        assert_eq!(smooth_ramp(-1e6, 50.0), 0.0);
    }

    #[test]
    fn indicator_examples() {
        assert!((smooth_indicator(5.0, 0.0, 10.0, 50.0).unwrap() - 1.0).abs() < 1e-12);
        let at_a = smooth_indicator(0.0, 0.0, 10.0, 50.0).unwrap();
        assert_relative_eq!(at_a, 0.5 * logistic(500.0), epsilon = 1e-15);
        assert_relative_eq!(at_a, 0.5, epsilon = 1e-12);
        assert!(smooth_indicator(-5.0, 0.0, 10.0, 50.0).unwrap() < 1e-100);
        assert!(smooth_indicator(1.0, 2.0, 2.0, 50.0).is_err());
    }

    #[test]
    fn feasible_profile_has_zero_loss() {
        let s = baseline();
        let u = ControlProfile::constant(360.0, 0.32, 72).unwrap();
        let mut s18 = s.clone();
        s18.x_hat = 27.0;
        assert_eq!(total_loss(LossFamily::State, &u, &s18, None, 10).unwrap(), 0.0);
    }

    #[test]
    fn terminal_only_violation() {
        // hold at X_hat + 0.5 throughout: interior feasible, terminal residual negative
        let mut s = baseline();
        s.x_hat = 20.0;
        s.x0 = 20.5;
        let u0 = crate::thermal::steady_state_control(20.5, &s.thermal).unwrap();
        let u = ControlProfile::constant(360.0, u0, 12).unwrap();
        let loss = total_loss(LossFamily::State, &u, &s, None, 10).unwrap();
        let phi: f64 = (20.0 - 20.5) * (20.5 - 18.0);
        assert_relative_eq!(loss, s.loss.lambda_state * phi.powi(2), max_relative = 1e-9);
    }

    #[test]
    fn delivery_loss_is_exact() {
        let u_ins = ControlProfile::new(vec![0.0, 15.0, 75.0, 240.0, 360.0], vec![0.0, 0.82, 0.52, 0.0]).unwrap();
        let bps: Vec<f64> = (0..=72).map(|k| 5.0 * k as f64).collect();
        let loss = DeliveryLoss::new(&bps, &u_ins).unwrap();
        let u = vec![0.5; 72];
        let want = 60.0 * 0.32f64.powi(2) + 165.0 * 0.02f64.powi(2);
        assert_relative_eq!(loss.evaluate(&u, false, false).value, want, epsilon = 1e-12);
        assert_relative_eq!(loss.max_shortfall(&u), 0.32, epsilon = 1e-12);
    }
}
