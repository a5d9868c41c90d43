//! Box-constrained augmented-Lagrangian solver with projected Newton inner
//! iterations and parallel multistart.
//!
//! Loss constraints `C(u) <= eps` are sums of squared violations, so `C` is
//! already a quadratic-type penalty; each gets a weight that grows until the
//! bound holds. The financial constraint is a general inequality and uses the
//! classic shifted-penalty multiplier update.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{AssembledProblem, ConstraintKind, ConstraintReport, ProblemKind, SecondOrder};
use crate::profiles::{normalized_net_profit, total_cost, total_net_cost, ControlProfile};
use crate::thermal::{simulate, TemperatureTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Number of equal control intervals.
    pub n_p: usize,
    /// Newton iterations allowed per inner solve.
    pub max_iterations: usize,
    /// Relative merit decrease below which an inner solve stops.
    pub convergence_tol: f64,
    /// Allowed exact-constraint violation, in °C or control units.
    pub constraint_tol: f64,
    pub multistart: usize,
    pub rng_seed: u64,
    /// Quadrature nodes per control interval.
    pub sub_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_p: 72,
            max_iterations: 500,
            convergence_tol: 1e-8,
            constraint_tol: 1e-3,
            multistart: 5,
            rng_seed: 0,
            sub_samples: crate::problems::DEFAULT_SUB_SAMPLES,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_p < 2 {
            return Err(Error::param("n_p", "need at least 2 intervals"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be positive"));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::param("convergence_tol", "must be positive"));
        }
        if !(self.constraint_tol > 0.0 && self.constraint_tol.is_finite()) {
            return Err(Error::param("constraint_tol", "must be positive"));
        }
        if self.multistart == 0 {
            return Err(Error::param("multistart", "need at least one start"));
        }
        if self.sub_samples == 0 {
            return Err(Error::param("sub_samples", "must be positive"));
        }
        Ok(())
    }
}

/// Money figures for a solved schedule, in pence, with the exact ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Economics {
    pub total_cost: f64,
    /// Cost net of reserve payments, relative to the reference schedule.
    pub net_cost: Option<f64>,
    pub nnp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub index: usize,
    pub objective: f64,
    pub feasible: bool,
    pub worst_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub kind: ProblemKind,
    pub control: ControlProfile,
    pub trajectory: TemperatureTrajectory,
    pub objective: f64,
    pub report: ConstraintReport,
    pub economics: Economics,
    pub iterations: usize,
    pub converged: bool,
    pub start_index: usize,
    pub starts: Vec<StartOutcome>,
}

/// Largest relative disagreement between analytic gradients and central
/// differences, over the objective and every constraint.
pub fn check_gradients(problem: &AssembledProblem, params: &[f64], h: f64) -> Result<f64> {
    let base = problem.evaluate(params)?;
    let mut worst = 0.0f64;
    let mut probe = params.to_vec();
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let up = problem.evaluate(&probe)?;
        probe[i] = params[i] - h;
        let down = problem.evaluate(&probe)?;
        probe[i] = params[i];

        let mut compare = |analytic: f64, hi: f64, lo: f64| {
            let fd = (hi - lo) / (2.0 * h);
            worst = worst.max((analytic - fd).abs() / analytic.abs().max(1.0));
        };
        compare(base.objective_gradient[i], up.objective, down.objective);
        for (j, c) in base.constraints.iter().enumerate() {
            compare(c.gradient[i], up.constraints[j].value, down.constraints[j].value);
        }
    }
    Ok(worst)
}

/// Steady-state constant, analytic reference shape, then seeded uniform draws.
pub fn initial_guesses(problem: &AssembledProblem, cfg: &SolverConfig) -> Vec<Vec<f64>> {
    let n = problem.dimension();
    let mut guesses = vec![problem.steady_state_guess()];
    if cfg.multistart > 1 {
        guesses.push(problem.analytic_reference_guess());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    while guesses.len() < cfg.multistart {
        guesses.push((0..n).map(|_| rng.gen_range(0.0..=1.0)).collect());
    }
    guesses
}

pub fn solve(problem: &AssembledProblem, cfg: &SolverConfig) -> Result<Solution> {
    solve_with_guesses(problem, cfg, &[])
}

/// As [`solve`], with extra starting points appended after the standard and
/// problem-specific ones.
/// Sweeps use this to warm-start from a neighbouring solution.
pub fn solve_with_guesses(problem: &AssembledProblem, cfg: &SolverConfig, extra: &[Vec<f64>]) -> Result<Solution> {
    cfg.validate()?;
    let problem = problem.clone().with_sub_samples(cfg.sub_samples)?;
    let n = problem.dimension();
    let mut guesses = initial_guesses(&problem, cfg);
    guesses.extend(problem.structured_guesses()?);
    for g in extra {
        if g.len() != n {
            return Err(Error::Domain(format!("warm start has {} values, expected {n}", g.len())));
        }
        guesses.push(g.iter().map(|v| v.clamp(0.0, 1.0)).collect());
    }

    let runs: Vec<Result<StartRun>> = guesses
        .par_iter()
        .map(|g| run_start(&problem, cfg, g.clone()))
        .collect();
    let runs: Vec<StartRun> = runs.into_iter().collect::<Result<_>>()?;

    let starts: Vec<StartOutcome> = runs
        .iter()
        .enumerate()
        .map(|(index, r)| StartOutcome {
            index,
            objective: r.objective,
            feasible: r.report.feasible(cfg.constraint_tol),
            worst_violation: r.report.worst_violation(),
            iterations: r.iterations,
            converged: r.converged,
        })
        .collect();

    let best = starts
        .iter()
        .filter(|s| s.feasible)
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.index.cmp(&b.index)))
        .map(|s| s.index);

    let Some(best) = best else {
        let run = runs
            .iter()
            .min_by(|a, b| a.report.total_loss().total_cmp(&b.report.total_loss()))
            .expect("at least one start");
        return Err(Error::Infeasible {
            control: Box::new(problem.profile(&run.params)?),
            total_loss: run.report.total_loss(),
            state_loss: run.report.state_loss,
            delivery_loss: run.report.delivery_loss.unwrap_or(0.0),
        });
    };

    let run = &runs[best];
    let control = problem.profile(&run.params)?;
    let s = problem.scenario();
    let trajectory = simulate(&control, s.x0, &s.thermal, cfg.sub_samples)?;
    let economics = economics(&problem, &control)?;
    Ok(Solution {
        kind: problem.kind(),
        control,
        trajectory,
        objective: run.objective,
        report: run.report.clone(),
        economics,
        iterations: run.iterations,
        converged: run.converged,
        start_index: best,
        starts,
    })
}

fn economics(problem: &AssembledProblem, control: &ControlProfile) -> Result<Economics> {
    let s = problem.scenario();
    let total = total_cost(control, &s.econ, &s.thermal);
    match (problem.kind(), problem.u_ref()) {
        (ProblemKind::Reference, _) | (_, None) => Ok(Economics { total_cost: total, net_cost: None, nnp: None }),
        (_, Some(u_ref)) => Ok(Economics {
            total_cost: total,
            net_cost: Some(total_net_cost(control, u_ref, &s.econ, &s.thermal)?),
            nnp: Some(normalized_net_profit(control, u_ref, s.ratio())?),
        }),
    }
}

struct StartRun {
    params: Vec<f64>,
    objective: f64,
    report: ConstraintReport,
    iterations: usize,
    converged: bool,
}

const MAX_OUTER: usize = 60;
const MAX_WEIGHT: f64 = 1e24;
const MAX_LEAK_ROUNDS: usize = 6;

fn run_start(problem: &AssembledProblem, cfg: &SolverConfig, start: Vec<f64>) -> Result<StartRun> {
    let mut problem = problem.clone();
    let mut u = start;
    let mut iterations = 0;
    let mut converged;
    let mut leak_rounds = 0;
    loop {
        let out = augmented_lagrangian(&problem, cfg, u)?;
        u = out.params;
        iterations += out.iterations;
        converged = out.converged;

        // smoothing can hide a violation of the exact financial constraint
        let report = problem.report(&u)?;
        let leaking = report.financial_violation.is_some_and(|v| v > cfg.constraint_tol);
        if !leaking || leak_rounds == MAX_LEAK_ROUNDS {
            let objective = problem.objective(&u);
            return Ok(StartRun { params: u, objective, report, iterations, converged });
        }
        let eval = problem.evaluate(&u)?;
        let smooth = eval
            .constraints
            .iter()
            .find(|c| c.kind == ConstraintKind::Financial)
            .map_or(0.0, |c| c.value);
        let exact = problem.exact_financial(&u).unwrap_or(0.0);
        let margin = problem.financial_margin() + (exact - smooth).max(0.0) + cfg.constraint_tol;
        problem = problem.with_financial_margin(margin);
        leak_rounds += 1;
    }
}

struct AlOutcome {
    params: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Multiplier state for the merit function.
#[derive(Debug, Clone)]
struct Weights {
    /// Linear weights on loss constraints, aligned with `kinds`.
    loss: Vec<f64>,
    /// Multiplier and penalty for the financial constraint.
    fin_mult: f64,
    fin_rho: f64,
    kinds: Vec<ConstraintKind>,
}

impl Weights {
    fn merit(&self, so: &crate::problems::Evaluation) -> f64 {
        let mut m = so.objective;
        for (c, w) in so.constraints.iter().zip(&self.loss) {
            if c.kind.is_loss() {
                m += w * c.value;
            } else {
                let g = c.value - c.bound;
                let shifted = (self.fin_mult + self.fin_rho * g).max(0.0);
                m += (shifted * shifted - self.fin_mult * self.fin_mult) / (2.0 * self.fin_rho);
            }
        }
        m
    }

    fn merit_derivatives(&self, so: &SecondOrder) -> (DVector<f64>, DMatrix<f64>) {
        let n = so.eval.objective_gradient.len();
        let mut g = DVector::from_column_slice(&so.eval.objective_gradient);
        let mut h = so.objective_hessian.clone();
        for ((c, w), ch) in so.eval.constraints.iter().zip(&self.loss).zip(&so.constraint_hessians) {
            let cg = DVector::from_column_slice(&c.gradient);
            if c.kind.is_loss() {
                g.axpy(*w, &cg, 1.0);
                h += ch * *w;
            } else {
                let shifted = (self.fin_mult + self.fin_rho * (c.value - c.bound)).max(0.0);
                if shifted > 0.0 {
                    g.axpy(shifted, &cg, 1.0);
                    h.ger(self.fin_rho, &cg, &cg, 1.0);
                }
            }
        }
        debug_assert_eq!(g.len(), n);
        (g, h)
    }
}

fn augmented_lagrangian(problem: &AssembledProblem, cfg: &SolverConfig, start: Vec<f64>) -> Result<AlOutcome> {
    let kinds = problem.constraint_kinds();
    let mut weights = Weights { loss: vec![1.0; kinds.len()], fin_mult: 0.0, fin_rho: 1.0, kinds };
    let mut u = start;
    let mut iterations = 0;
    let mut last_fin_violation = f64::INFINITY;
    let mut last_objective = f64::INFINITY;
    let mut satisfied_rounds = 0;

    for _ in 0..MAX_OUTER {
        let inner = projected_newton(problem, cfg, &weights, u)?;
        u = inner.params;
        iterations += inner.iterations;
        let inner_converged = inner.converged;

        let eval = problem.evaluate(&u)?;
        let mut satisfied = true;
        let mut saturated = false;
        for (j, c) in eval.constraints.iter().enumerate() {
            match weights.kinds[j] {
                ConstraintKind::Financial => {
                    let g = c.value - c.bound;
                    let old = weights.fin_mult;
                    weights.fin_mult = (old + weights.fin_rho * g).max(0.0);
                    let violation = g.max(0.0);
                    let scale = problem.scenario().horizon;
                    if violation > 1e-9 * scale || (weights.fin_mult - old).abs() > 1e-7 * old.max(1.0) {
                        satisfied = false;
                    }
                    if violation > 0.25 * last_fin_violation {
                        weights.fin_rho = (weights.fin_rho * 10.0).min(1e12);
                    }
                    last_fin_violation = violation;
                }
                _ => {
                    if c.value > c.bound {
                        satisfied = false;
                        let factor = (c.value / c.bound).powf(0.75).clamp(2.0, 1e4);
                        weights.loss[j] *= factor;
                        if weights.loss[j] > MAX_WEIGHT {
                            weights.loss[j] = MAX_WEIGHT;
                            saturated = true;
                        }
                    }
                }
            }
        }
        if (satisfied && inner_converged) || saturated {
            return Ok(AlOutcome { params: u, iterations, converged: satisfied && inner_converged });
        }
        // a feasible point whose inner solve keeps crawling: give it two more
        // rounds, then accept it once the objective has settled
        if satisfied {
            satisfied_rounds += 1;
            let settled = (eval.objective - last_objective).abs() <= 1e-6 * (1.0 + eval.objective.abs());
            if satisfied_rounds >= 2 && (settled || satisfied_rounds >= 4) {
                return Ok(AlOutcome { params: u, iterations, converged: settled });
            }
        } else {
            satisfied_rounds = 0;
        }
        last_objective = eval.objective;
    }
    Ok(AlOutcome { params: u, iterations, converged: false })
}

struct InnerOutcome {
    params: Vec<f64>,
    iterations: usize,
    converged: bool,
}

const ARMIJO: f64 = 1e-4;
const STALL_WINDOW: usize = 20;
const MAX_BACKTRACK: usize = 60;

fn project(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Projected Newton on `[0, 1]^n` with an epsilon-active set.
fn projected_newton(
    problem: &AssembledProblem,
    cfg: &SolverConfig,
    weights: &Weights,
    start: Vec<f64>,
) -> Result<InnerOutcome> {
    let n = start.len();
    let mut u = start;
    let mut so = problem.evaluate_second_order(&u)?;
    let mut merit = weights.merit(&so.eval);
    let mut history = vec![merit];

    for it in 0..cfg.max_iterations {
        let (g, h) = weights.merit_derivatives(&so);

        let pg: f64 = (0..n).map(|i| (u[i] - project(u[i] - g[i])).abs()).fold(0.0, f64::max);
        if pg <= 1e-12 {
            return Ok(InnerOutcome { params: u, iterations: it, converged: true });
        }

        let eps = pg.min(1e-3);
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((u[i] <= eps && g[i] > 0.0) || (u[i] >= 1.0 - eps && g[i] < 0.0)))
            .collect();

        let mut dir = vec![0.0; n];
        for i in 0..n {
            let hii = h[(i, i)].max(1e-12 * (1.0 + g[i].abs()));
            dir[i] = -g[i] / hii;
        }
        if !free.is_empty() {
            let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let gf = DVector::from_fn(free.len(), |a, _| g[free[a]]);
            let step = newton_direction(hf, &gf);
            for (a, &i) in free.iter().enumerate() {
                dir[i] = step[a];
            }
        }

        // Newton decrement on the free block plus the scaled-gradient move
        // of the nearly active coordinates
        let mut model = 0.0;
        for i in 0..n {
            model -= if free.contains(&i) { g[i] * dir[i] } else { g[i] * (project(u[i] + dir[i]) - u[i]) };
        }
        if model <= cfg.convergence_tol * (1.0 + so.eval.objective.abs()) {
            return Ok(InnerOutcome { params: u, iterations: it, converged: true });
        }

        let mut accepted = line_search(problem, weights, &u, &g, &dir, merit)?;
        if accepted.is_none() {
            // fall back to scaled projected gradient
            let scale = (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1e-12);
            let grad_dir: Vec<f64> = g.iter().map(|gi| -gi / scale).collect();
            accepted = line_search(problem, weights, &u, &g, &grad_dir, merit)?;
        }
        let Some((next, next_merit)) = accepted else {
            // no decrease available at working precision
            return Ok(InnerOutcome { params: u, iterations: it + 1, converged: true });
        };
        assert!(next_merit <= merit, "merit increased from {merit} to {next_merit}");
        debug_assert!(next.iter().all(|v| (0.0..=1.0).contains(v)));

        u = next;
        merit = next_merit;
        so = problem.evaluate_second_order(&u)?;

        // kinks in the loss curvature can make Newton crawl; stop once the
        // average decrease over a window is negligible
        history.push(merit);
        if history.len() > STALL_WINDOW {
            let old = history[history.len() - 1 - STALL_WINDOW];
            let per_step = (old - merit) / STALL_WINDOW as f64;
            if per_step <= cfg.convergence_tol * (1.0 + so.eval.objective.abs()) {
                return Ok(InnerOutcome { params: u, iterations: it + 1, converged: true });
            }
        }
    }
    Ok(InnerOutcome { params: u, iterations: cfg.max_iterations, converged: false })
}

/// Solves `H d = -g` by Cholesky, shifting the diagonal until it factors.
fn newton_direction(h: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let dim = h.nrows();
    let max_diag = (0..dim).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 0.0;
    loop {
        let mut m = h.clone();
        for i in 0..dim {
            m[(i, i)] += shift;
        }
        if let Some(chol) = m.cholesky() {
            let d = -chol.solve(g);
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        shift = if shift == 0.0 { 1e-12 * max_diag } else { shift * 100.0 };
        if shift > 1e30 * max_diag {
            return -g / max_diag;
        }
    }
}

type Step = Option<(Vec<f64>, f64)>;

fn line_search(
    problem: &AssembledProblem,
    weights: &Weights,
    u: &[f64],
    g: &DVector<f64>,
    dir: &[f64],
    merit: f64,
) -> Result<Step> {
    let mut a = 1.0;
    for _ in 0..MAX_BACKTRACK {
        let trial: Vec<f64> = u.iter().zip(dir).map(|(ui, di)| project(ui + a * di)).collect();
        let predicted: f64 = (0..u.len()).map(|i| g[i] * (trial[i] - u[i])).sum();
        if predicted >= 0.0 {
            if trial.iter().zip(u).all(|(a, b)| a == b) {
                return Ok(None);
            }
            a *= 0.5;
            continue;
        }
        let eval = problem.evaluate(&trial)?;
        let m = weights.merit(&eval);
        if m <= merit + ARMIJO * predicted {
            return Ok(Some((trial, m)));
        }
        a *= 0.5;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_reference, Scenario};

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { multistart: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { n_p: 1, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn guesses() {
        let p = build_reference(&Scenario::baseline(), 72).unwrap();
        let one = initial_guesses(&p, &SolverConfig { multistart: 1, ..Default::default() });
        assert_eq!(one.len(), 1);
        assert!(one[0].iter().all(|&v| (v - 0.32).abs() < 1e-12));
        let cfg = SolverConfig { rng_seed: 7, ..Default::default() };
        let a = initial_guesses(&p, &cfg);
        assert_eq!(a.len(), 5);
        assert_eq!(a, initial_guesses(&p, &cfg));
        assert!(a[2..].iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn box_only_surrogate_reaches_zero() {
        let p = build_reference(&Scenario::baseline(), 12).unwrap().without_state_constraint();
        let cfg = SolverConfig { n_p: 12, ..Default::default() };
        let sol = solve(&p, &cfg).unwrap();
        assert!(sol.control.values().iter().all(|&v| v <= cfg.convergence_tol));
        assert!(sol.converged);
    }
}
