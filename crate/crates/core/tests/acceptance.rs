//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Built with `harness = false` so the lines are
//! always visible.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reserve_opt::cli::{self, empirical_onset, RunRequest, Subcommand};
use reserve_opt::problems::{build_capacity, build_delivery, build_reference, AssembledProblem, Scenario};
use reserve_opt::profiles::{
    normalized_net_profit, total_cost, total_net_cost, ControlProfile, Instruction, InstructionSequence,
};
use reserve_opt::solver::{check_gradients, solve, Solution, SolverConfig};
use reserve_opt::thermal::{simulate, steady_state_control, ThermalParams};

const N_P: usize = 72;
const SOLVE_LIMIT: Duration = Duration::from_secs(120);
const SUITE_LIMIT: Duration = Duration::from_secs(15 * 60);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Times every solve so the per-solve limit can be checked at the end.
#[derive(Default)]
struct Timings {
    slowest: Duration,
    label: String,
}

impl Timings {
    fn solve(&mut self, label: &str, problem: &AssembledProblem) -> Solution {
        let start = Instant::now();
        let sol = solve(problem, &SolverConfig { n_p: N_P, ..SolverConfig::default() })
            .unwrap_or_else(|e| panic!("{label}: {e}"));
        let took = start.elapsed();
        if took > self.slowest {
            self.slowest = took;
            self.label = label.to_string();
        }
        sol
    }
}

// Independent oracles, written from the model equations rather than the library.

fn rk4(x0: f64, u: f64, duration: f64, p: &ThermalParams) -> f64 {
    let f = |x: f64| -(x - (p.x_off + (p.x_on - p.x_off) * u)) / p.tau;
    let steps = (duration / 0.01).round().max(1.0) as usize;
    let h = duration / steps as f64;
    let mut x = x0;
    for _ in 0..steps {
        let k1 = f(x);
        let k2 = f(x + 0.5 * h * k1);
        let k3 = f(x + 0.5 * h * k2);
        let k4 = f(x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    x
}

fn full_power_time(s: &Scenario) -> f64 {
    let p = &s.thermal;
    s.horizon - p.tau * ((s.x_max - p.x_on) / (s.x_hat - p.x_on)).ln()
}

fn descent_time(s: &Scenario) -> f64 {
    let p = &s.thermal;
    p.tau * ((s.x_max - p.x_on) / (s.x_min - p.x_on)).ln()
}

fn holding_level(x: f64, p: &ThermalParams) -> f64 {
    (p.x_off - x) / (p.x_off - p.x_on)
}

/// Time average of a step profile over `[a, b]`.
fn window_average(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let n = 4000;
    (0..n).map(|i| f(a + (b - a) * (i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64
}

/// Longest run of consecutive intervals satisfying `pred`, as `(start, end)`.
fn longest_run(u: &ControlProfile, pred: impl Fn(f64, f64) -> bool) -> Option<(f64, f64)> {
    let bp = u.breakpoints();
    let mut best: Option<(f64, f64)> = None;
    let mut open: Option<f64> = None;
    for (k, &v) in u.values().iter().enumerate() {
        if pred(bp[k], v) {
            let start = *open.get_or_insert(bp[k]);
            let end = bp[k + 1];
            if best.map_or(true, |(a, b)| end - start > b - a) {
                best = Some((start, end));
            }
        } else {
            open = None;
        }
    }
    best
}

fn switch_count(values: &[f64]) -> usize {
    values.windows(2).filter(|w| (w[0] >= 0.5) != (w[1] >= 0.5)).count()
}

fn random_profile(rng: &mut ChaCha8Rng, horizon: f64) -> ControlProfile {
    let n = rng.gen_range(1..=40);
    let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.0..horizon)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let mut bp = vec![0.0];
    bp.extend(cuts.into_iter().filter(|&c| c > 1e-3 && c < horizon - 1e-3));
    bp.push(horizon);
    let values = (0..bp.len() - 1).map(|_| rng.gen_range(0.0..=1.0)).collect();
    ControlProfile::new(bp, values).unwrap()
}

fn baseline_instructions() -> InstructionSequence {
    InstructionSequence::new(vec![
        Instruction { ask: 0.5, start: 15.0, end: 75.0 },
        Instruction { ask: 0.2, start: 75.0, end: 240.0 },
    ])
    .unwrap()
}

fn criterion_propagation() -> Outcome {
    let s = Scenario::baseline();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let u = random_profile(&mut rng, s.horizon);
        let x0 = rng.gen_range(s.x_min..=s.x_max);
        let traj = simulate(&u, x0, &s.thermal, 1).unwrap();
        let mut x = x0;
        let bp = u.breakpoints();
        for (k, &v) in u.values().iter().enumerate() {
            x = rk4(x, v, bp[k + 1] - bp[k], &s.thermal);
            worst = worst.max((traj.samples[k + 1].1 - x).abs());
        }
    }
    outcome(worst <= 1e-6, format!("max |simulate - rk4| = {worst:.2e} over 100 profiles"))
}

fn criterion_steady_state() -> Outcome {
    let s = Scenario::baseline();
    let mut worst = 0.0f64;
    for x in [18.0, 22.5, 27.0] {
        let u = steady_state_control(x, &s.thermal).unwrap();
        let oracle = holding_level(x, &s.thermal);
        worst = worst.max((u - oracle).abs());
        let profile = ControlProfile::constant(360.0, u, 72).unwrap();
        let traj = simulate(&profile, x, &s.thermal, 10).unwrap();
        worst = worst.max(traj.temperatures().map(|v| (v - x).abs()).fold(0.0, f64::max));
    }
    outcome(worst <= 1e-9, format!("max drift {worst:.2e} degC"))
}

fn criterion_reference(t: &mut Timings) -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (x_hat, published) in [(18.0, 269.55), (20.0, 296.32)] {
        let s = Scenario { x_hat, ..Scenario::baseline() };
        let t2 = full_power_time(&s);
        pass &= (t2 - published).abs() < 0.01;
        let sol = t.solve(&format!("reference X_hat={x_hat}"), &build_reference(&s, N_P).unwrap());
        // end of the initial hold at the upper comfort limit
        let t1 = sol
            .trajectory
            .samples
            .iter()
            .find(|&&(_, x)| x < s.x_max - 0.01)
            .map_or(s.horizon, |&(t, _)| t);
        let plateau = 0.32;
        let u = &sol.control;
        let worst = u
            .breakpoints()
            .iter()
            .zip(u.values())
            .filter(|(&a, _)| a < t1 - 10.0)
            .map(|(_, &v)| (v - plateau).abs())
            .fold(0.0, f64::max);
        let onset = empirical_onset(u).unwrap_or(f64::NAN);
        pass &= worst <= 0.05 && (onset - t2).abs() <= 10.0;
        details.push(format!(
            "X_hat={x_hat}: |u-0.32| <= {worst:.3} on [0,{:.1}], onset {onset:.1} vs t2 {t2:.2}",
            t1 - 10.0
        ));
    }
    outcome(pass, details.join("; "))
}

struct CapacityRuns {
    reference: Solution,
    by_ratio: Vec<(f64, Solution)>,
}

fn capacity_runs(t: &mut Timings) -> CapacityRuns {
    let s = Scenario::baseline();
    let reference = t.solve("reference", &build_reference(&s, N_P).unwrap());
    let by_ratio = [0.75, 1.0, 1.25]
        .into_iter()
        .map(|ratio| {
            let mut sr = s.clone();
            sr.econ.payment = ratio * sr.econ.price;
            let p = build_capacity(&sr, &reference.control, N_P).unwrap();
            (ratio, t.solve(&format!("capacity ratio={ratio}"), &p))
        })
        .collect();
    CapacityRuns { reference, by_ratio }
}

fn criterion_case3(runs: &CapacityRuns) -> Outcome {
    let s = Scenario::baseline();
    let level = holding_level(s.x_min, &s.thermal) - holding_level(s.x_max, &s.thermal);
    let (a, b) = (descent_time(&s) + 10.0, full_power_time(&s) - 10.0);
    let sol = &runs.by_ratio[2].1;
    let avg = window_average(|t| sol.control.value_at(t) - runs.reference.control.value_at(t), a, b);
    outcome(
        (level - 0.36).abs() < 1e-12 && (avg - level).abs() <= 0.05,
        format!("mean u_cap {avg:.3} on [{a:.2},{b:.2}] vs {level:.2}"),
    )
}

fn criterion_case1(runs: &CapacityRuns) -> Outcome {
    let s = Scenario::baseline();
    let level = 1.0 - holding_level(s.x_max, &s.thermal);
    let t2 = full_power_time(&s);
    let need = 0.8 * descent_time(&s);
    let sol = &runs.by_ratio[0].1;
    let cap = |t: f64| sol.control.value_at(t) - runs.reference.control.value_at(t);
    let window = longest_run(&sol.control, |t, _| (cap(t) - level).abs() <= 0.05);
    let pass = window.is_some_and(|(a, b)| b - a >= need && (b - t2).abs() <= 15.0);
    let detail = match window {
        Some((a, b)) => format!("window [{a},{b}] length {:.1} (need {need:.1}), end vs t2 {t2:.2}", b - a),
        None => "no window at the maximal level".into(),
    };
    outcome(pass, detail)
}

fn criterion_nnp(runs: &CapacityRuns) -> Outcome {
    let nnp: Vec<f64> = runs.by_ratio.iter().map(|(_, s)| s.economics.nnp.unwrap()).collect();
    let exact: Vec<f64> = runs
        .by_ratio
        .iter()
        .map(|(r, s)| normalized_net_profit(&s.control, &runs.reference.control, *r).unwrap())
        .collect();
    let monotone = nnp.windows(2).all(|w| w[1] >= w[0]);
    let floor = exact.iter().all(|&v| v >= -1e-3);
    outcome(monotone && floor, format!("NNP {:.3?} for ratios [0.75, 1, 1.25]", nnp))
}

fn criterion_delivery(t: &mut Timings) -> Outcome {
    let ins = baseline_instructions();
    let mut windows = Vec::new();
    let mut pass = true;
    let mut details = Vec::new();
    for x_hat in [18.0, 20.0] {
        let s = Scenario { x_hat, ..Scenario::baseline() };
        let reference = t.solve(&format!("reference X_hat={x_hat}"), &build_reference(&s, N_P).unwrap());
        let p = build_delivery(&s, &reference.control, &ins, N_P).unwrap();
        let sol = t.solve(&format!("delivery X_hat={x_hat}"), &p);
        let u = &sol.control;
        let u_ins = p.u_ins().unwrap();
        let shortfall = u
            .breakpoints()
            .iter()
            .zip(u.values())
            .map(|(&a, &v)| u_ins.value_at(a) - v)
            .fold(f64::NEG_INFINITY, f64::max);
        let band = (s.x_min - sol.trajectory.min()).max(sol.trajectory.max() - s.x_max).max(0.0);
        let terminal = sol.trajectory.final_temperature() - s.x_hat;
        let off = longest_run(u, |a, v| a >= 240.0 && v <= 0.02).map_or(0.0, |(a, b)| b - a);
        pass &= shortfall <= 1e-3 && band <= 1e-3 && terminal <= 1e-3 && off >= 10.0;
        windows.push(off);
        details.push(format!(
            "X_hat={x_hat}: shortfall {shortfall:.1e}, band {band:.1e}, x(T)-X_hat {terminal:.1e}, off {off} min"
        ));
    }
    pass &= windows[1] > windows[0];
    outcome(pass, details.join("; "))
}

fn criterion_regularizer(t: &mut Timings) -> Outcome {
    let mut s = Scenario { x0: 25.0, ..Scenario::baseline() };
    s.econ.payment = s.econ.price;
    let reference = t.solve("reference x0=25", &build_reference(&s, N_P).unwrap());
    let counts: Vec<usize> = [10.0, 1.0, 0.1, 0.01]
        .into_iter()
        .map(|alpha| {
            let sa = Scenario { alpha_alt: alpha, ..s.clone() };
            let p = build_capacity(&sa, &reference.control, N_P).unwrap();
            switch_count(t.solve(&format!("capacity alpha={alpha}"), &p).control.values())
        })
        .collect();
    let pass = counts.windows(2).all(|w| w[1] >= w[0]);
    outcome(pass, format!("switch counts {counts:?} for alpha_alt [10, 1, 0.1, 0.01]"))
}

fn criterion_gradients() -> Outcome {
    let s = Scenario::baseline();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u_ref = ControlProfile::uniform(s.horizon, (0..N_P).map(|_| rng.gen_range(0.1..0.5)).collect()).unwrap();
    let problems = [
        build_reference(&s, N_P).unwrap(),
        build_capacity(&s, &u_ref, N_P).unwrap(),
        build_delivery(&s, &u_ref, &baseline_instructions(), N_P).unwrap(),
    ];
    let mut worst = 0.0f64;
    for p in &problems {
        for _ in 0..10 {
            let x: Vec<f64> = (0..p.dimension()).map(|_| rng.gen_range(0.05..0.95)).collect();
            worst = worst.max(check_gradients(p, &x, 1e-6).unwrap());
        }
    }
    outcome(worst <= 1e-4, format!("max relative gradient error {worst:.2e}"))
}

fn criterion_accounting() -> Outcome {
    let s = Scenario::baseline();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let u_alt = random_profile(&mut rng, s.horizon);
        let u_ref = random_profile(&mut rng, s.horizon);
        let mut econ = s.econ;
        econ.payment = rng.gen_range(0.25..2.0) * econ.price;
        let net = total_net_cost(&u_alt, &u_ref, &econ, &s.thermal).unwrap();
        let nnp = normalized_net_profit(&u_alt, &u_ref, econ.ratio()).unwrap();
        let base = total_cost(&u_ref, &econ, &s.thermal);
        let lhs = net + s.thermal.c_max * econ.price / 60.0 * nnp;
        worst = worst.max((lhs - base).abs() / base.abs().max(1e-12));
    }
    outcome(worst <= 1e-9, format!("max relative residual {worst:.2e}"))
}

fn criterion_determinism(t: &mut Timings) -> Outcome {
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/baseline.json");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (i, d) in dirs.iter().enumerate() {
        let req = RunRequest {
            subcommand: Subcommand::SolveCapacity,
            config_path: config.clone(),
            output_dir: d.path().to_path_buf(),
            overrides: vec!["R_over_P=1".into()],
            n_p: Some(N_P),
            seed: Some(7),
            ratios: None,
            alphas: None,
        };
        let start = Instant::now();
        cli::run(&req).unwrap();
        let took = start.elapsed();
        if took > t.slowest {
            t.slowest = took;
            t.label = format!("cli run {i}");
        }
    }
    let mut same = true;
    for file in ["trajectory.csv", "control.csv", "summary.csv"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        same &= !a.is_empty() && a == b;
    }
    outcome(same, "trajectory.csv, control.csv, summary.csv compared byte for byte")
}

fn main() {
    let suite = Instant::now();
    let mut timings = Timings::default();
    let mut results: Vec<(&str, Outcome)> = Vec::new();

    results.push(("1 propagation matches RK4", criterion_propagation()));
    results.push(("2 steady-state fixed point", criterion_steady_state()));
    results.push(("3 reference structure", criterion_reference(&mut timings)));
    let runs = capacity_runs(&mut timings);
    results.push(("4 case-3 sustained capacity", criterion_case3(&runs)));
    results.push(("5 case-1 maximal window", criterion_case1(&runs)));
    results.push(("6 NNP monotone and non-negative", criterion_nnp(&runs)));
    results.push(("7 delivery", criterion_delivery(&mut timings)));
    results.push(("8 regularizer sensitivity", criterion_regularizer(&mut timings)));
    results.push(("9 gradient check", criterion_gradients()));
    results.push(("10 accounting identity", criterion_accounting()));
    results.push(("11 deterministic CSV output", criterion_determinism(&mut timings)));

    let total = suite.elapsed();
    let timing_ok = timings.slowest <= SOLVE_LIMIT && total <= SUITE_LIMIT;
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "{} timing: slowest solve {:.1?} ({}), suite {:.1?}",
        if timing_ok { "PASS" } else { "FAIL" },
        timings.slowest,
        timings.label,
        total
    );
    failed += usize::from(!timing_ok);
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
