//! Scenario files, subcommand dispatch and CSV output for the `reserve-opt` tool.
//!
//! Precedence for every setting: the config file, then each `--set key=value`
//! in order, then the dedicated `--np` / `--seed` / `--ratios` / `--alphas` flags.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::constraints::LossConfig;
use crate::error::{Error, Result};
use crate::problems::{build_capacity, build_delivery, build_reference, ProblemKind, Scenario};
use crate::profiles::{ControlProfile, EconomicsParams, Instruction, InstructionSequence};
use crate::solver::{solve, Solution, SolverConfig};
use crate::thermal::{landmark_t2, ThermalParams};

/// Level above which the control counts as full power for the empirical onset.
pub const FULL_POWER_LEVEL: f64 = 0.99;

const BASELINE: &str = include_str!("../data/baseline.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    #[serde(rename = "T")]
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    pub tau: f64,
    #[serde(rename = "X_off")]
    pub x_off: f64,
    #[serde(rename = "X_on")]
    pub x_on: f64,
    #[serde(rename = "C_max")]
    pub c_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComfortSection {
    #[serde(rename = "X_min")]
    pub x_min: f64,
    #[serde(rename = "X_max")]
    pub x_max: f64,
    #[serde(rename = "X_hat")]
    pub x_hat: f64,
    pub x0: f64,
}

/// Prices. The payment is given either directly as `R` or as `R_over_P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicsSection {
    #[serde(rename = "P")]
    pub price: f64,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub payment: Option<f64>,
    #[serde(rename = "R_over_P", default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSection {
    pub alpha_ref: f64,
    pub alpha_alt: f64,
    pub alpha_del: f64,
}

/// Loss settings; anything left out takes the horizon-dependent default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_state: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_delivery: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_state: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_delivery: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InstructionUnits {
    #[default]
    #[serde(rename = "normalized")]
    Normalized,
    #[serde(rename = "kW")]
    Kilowatt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionSection {
    #[serde(default)]
    pub units: InstructionUnits,
    pub items: Vec<Instruction>,
}

/// Benefit-cost ratios to sweep, optionally crossed with `alpha_alt` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub ratios: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { ratios: vec![0.75, 1.0, 1.25], alphas: None }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() {
            return Err(Error::param("ratios", "need at least one ratio"));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::param("ratios", format!("ratio {r} must be positive")));
        }
        if let Some(alphas) = &self.alphas {
            if alphas.is_empty() {
                return Err(Error::param("alphas", "need at least one value when given"));
            }
            if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
                return Err(Error::param("alphas", format!("alpha {a} must be positive")));
            }
        }
        Ok(())
    }
}

/// The on-disk config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub horizon: HorizonSection,
    pub thermal: ThermalSection,
    pub comfort: ComfortSection,
    pub economics: EconomicsSection,
    pub regularizers: RegularizerSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instructions: Option<InstructionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Config {
    /// The bundled desk-scale scenario.
    pub fn baseline() -> Self {
        Self::from_json(BASELINE).expect("bundled config parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Loads `path` and applies `key=value` overrides on the raw document.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut doc: Value = serde_json::from_str(&text)?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_value(doc)
    }

    fn from_value(doc: Value) -> Result<Self> {
        let cfg: Config = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario()?;
        self.solver.validate()?;
        self.instruction_sequence()?;
        if let Some(sweep) = &self.sweep {
            sweep.validate()?;
        }
        Ok(())
    }

    /// Writes the config back out from a scenario. The payment is stored as `R`
    /// so the scenario reloads bit for bit.
    pub fn from_parts(s: &Scenario, solver: SolverConfig, instructions: Option<&InstructionSequence>) -> Self {
        Self {
            horizon: HorizonSection { t: s.horizon },
            thermal: ThermalSection {
                tau: s.thermal.tau,
                x_off: s.thermal.x_off,
                x_on: s.thermal.x_on,
                c_max: s.thermal.c_max,
            },
            comfort: ComfortSection { x_min: s.x_min, x_max: s.x_max, x_hat: s.x_hat, x0: s.x0 },
            economics: EconomicsSection {
                price: s.econ.price,
                payment: Some(s.econ.payment),
                ratio: None,
                gamma: s.econ.gamma,
            },
            regularizers: RegularizerSection {
                alpha_ref: s.alpha_ref,
                alpha_alt: s.alpha_alt,
                alpha_del: s.alpha_del,
            },
            loss: LossSection {
                lambda_state: Some(s.loss.lambda_state),
                lambda_delivery: Some(s.loss.lambda_delivery),
                epsilon_state: Some(s.loss.epsilon_state),
                epsilon_delivery: Some(s.loss.epsilon_delivery),
                theta: Some(s.loss.theta),
            },
            solver,
            instructions: instructions.map(|ins| InstructionSection {
                units: InstructionUnits::Normalized,
                items: ins.items().to_vec(),
            }),
            sweep: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let e = &self.economics;
        let payment = match (e.payment, e.ratio) {
            (Some(r), None) => r,
            (None, Some(ratio)) => ratio * e.price,
            (Some(_), Some(_)) => return Err(Error::param("R_over_P", "give either R or R_over_P, not both")),
            (None, None) => return Err(Error::param("R_over_P", "missing; give R or R_over_P")),
        };
        let defaults = LossConfig::for_horizon(self.horizon.t);
        let l = &self.loss;
        let s = Scenario {
            horizon: self.horizon.t,
            thermal: ThermalParams {
                tau: self.thermal.tau,
                x_off: self.thermal.x_off,
                x_on: self.thermal.x_on,
                c_max: self.thermal.c_max,
            },
            x_min: self.comfort.x_min,
            x_max: self.comfort.x_max,
            x_hat: self.comfort.x_hat,
            x0: self.comfort.x0,
            econ: EconomicsParams { price: e.price, payment, gamma: e.gamma },
            alpha_ref: self.regularizers.alpha_ref,
            alpha_alt: self.regularizers.alpha_alt,
            alpha_del: self.regularizers.alpha_del,
            loss: LossConfig {
                lambda_state: l.lambda_state.unwrap_or(defaults.lambda_state),
                lambda_delivery: l.lambda_delivery.unwrap_or(defaults.lambda_delivery),
                epsilon_state: l.epsilon_state.unwrap_or(defaults.epsilon_state),
                epsilon_delivery: l.epsilon_delivery.unwrap_or(defaults.epsilon_delivery),
                theta: l.theta.unwrap_or(defaults.theta),
            },
        };
        s.validate()?;
        Ok(s)
    }

    /// Instructions in normalized units, or an empty sequence.
    pub fn instruction_sequence(&self) -> Result<InstructionSequence> {
        let Some(sec) = &self.instructions else {
            return Ok(InstructionSequence::default());
        };
        let seq = match sec.units {
            InstructionUnits::Normalized => InstructionSequence::new(sec.items.clone())?,
            InstructionUnits::Kilowatt => {
                let raw: Vec<_> = sec.items.iter().map(|i| (i.ask, i.start, i.end)).collect();
                InstructionSequence::from_kw(&raw, self.thermal.c_max)?
            }
        };
        seq.check_horizon(self.horizon.t)?;
        Ok(seq)
    }
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    Config::load(path)?.scenario()
}

/// Applies one `key=value` override. `key` is `section.field` or a bare field
/// name that occurs in exactly one section. The value is read as JSON when it
/// parses and as a string otherwise.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    let value: Value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let root = doc
        .as_object_mut()
        .ok_or_else(|| Error::Config("config root must be an object".into()))?;

    let (section, field) = match key.split_once('.') {
        Some((s, f)) => (s.to_string(), f.to_string()),
        None => {
            let owners: Vec<String> = root
                .iter()
                .filter(|(_, v)| v.as_object().is_some_and(|o| o.contains_key(key)))
                .map(|(k, _)| k.clone())
                .collect();
            match owners.as_slice() {
                [one] => (one.clone(), key.to_string()),
                [] => match known_section(key) {
                    Some(s) => (s.to_string(), key.to_string()),
                    None => return Err(Error::Config(format!("unknown override key `{key}`"))),
                },
                _ => {
                    return Err(Error::Config(format!(
                        "override key `{key}` is ambiguous; qualify it as one of {}",
                        owners.iter().map(|o| format!("{o}.{key}")).collect::<Vec<_>>().join(", ")
                    )))
                }
            }
        }
    };

    let entry = root.entry(section.clone()).or_insert_with(|| Value::Object(Default::default()));
    let obj = entry
        .as_object_mut()
        .ok_or_else(|| Error::Config(format!("config section `{section}` is not an object")))?;
    // the two payment spellings are exclusive
    match field.as_str() {
        "R" => {
            obj.remove("R_over_P");
        }
        "R_over_P" => {
            obj.remove("R");
        }
        _ => {}
    }
    obj.insert(field, value);
    Ok(())
}

/// Section of a bare key that may be absent from the file.
fn known_section(key: &str) -> Option<&'static str> {
    match key {
        "T" => Some("horizon"),
        "R" | "R_over_P" | "gamma" => Some("economics"),
        "lambda_state" | "lambda_delivery" | "epsilon_state" | "epsilon_delivery" | "theta" => Some("loss"),
        "n_p" | "max_iterations" | "convergence_tol" | "constraint_tol" | "multistart" | "rng_seed"
        | "sub_samples" => Some("solver"),
        "ratios" | "alphas" => Some("sweep"),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    SolveReference,
    SolveCapacity,
    SolveDelivery,
    Sweep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub subcommand: Subcommand,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub overrides: Vec<String>,
    pub n_p: Option<usize>,
    pub seed: Option<u64>,
    pub ratios: Option<Vec<f64>>,
    pub alphas: Option<Vec<f64>>,
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub kind: ProblemKind,
    pub ratio: Option<f64>,
    pub alpha: f64,
    pub objective: Option<f64>,
    pub nnp: Option<f64>,
    pub feasible: bool,
    pub converged: bool,
    pub t2_analytic: Option<f64>,
    pub t2_empirical: Option<f64>,
    /// Output subdirectory for sweep entries.
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<SummaryRow>,
    /// Loss reports of solves that found no feasible point.
    pub failures: Vec<String>,
}

impl RunReport {
    /// True iff every solve converged to a feasible point.
    pub fn success(&self) -> bool {
        self.failures.is_empty() && self.rows.iter().all(|r| r.feasible && r.converged)
    }
}

/// Resolves the request into a config with every override applied.
pub fn resolve_config(req: &RunRequest) -> Result<Config> {
    let mut cfg = Config::load_with_overrides(&req.config_path, &req.overrides)?;
    if let Some(n) = req.n_p {
        cfg.solver.n_p = n;
    }
    if let Some(seed) = req.seed {
        cfg.solver.rng_seed = seed;
    }
    if req.ratios.is_some() || req.alphas.is_some() {
        let mut sweep = cfg.sweep.clone().unwrap_or_default();
        if let Some(r) = &req.ratios {
            sweep.ratios = r.clone();
        }
        if let Some(a) = &req.alphas {
            sweep.alphas = Some(a.clone());
        }
        cfg.sweep = Some(sweep);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one request and writes its artifacts under `req.output_dir`.
pub fn run(req: &RunRequest) -> Result<RunReport> {
    let cfg = resolve_config(req)?;
    let s = cfg.scenario()?;
    fs::create_dir_all(&req.output_dir)?;
    let out = req.output_dir.as_path();

    let mut report = RunReport { rows: Vec::new(), failures: Vec::new() };
    let reference = match solve(&build_reference(&s, cfg.solver.n_p)?, &cfg.solver) {
        Ok(sol) => sol,
        Err(e) => return infeasible_stop(report, ProblemKind::Reference, &s, e, out),
    };
    report.rows.push(summary_row(&s, &reference, None));

    match req.subcommand {
        Subcommand::SolveReference => {
            write_outputs(out, &reference, None, None)?;
        }
        Subcommand::SolveCapacity => match solve(&build_capacity(&s, &reference.control, cfg.solver.n_p)?, &cfg.solver) {
            Ok(sol) => {
                write_outputs(out, &sol, Some(&reference.control), None)?;
                report.rows.push(summary_row(&s, &sol, None));
            }
            Err(e) => return infeasible_stop(report, ProblemKind::Capacity, &s, e, out),
        },
        Subcommand::SolveDelivery => {
            let ins = cfg.instruction_sequence()?;
            let problem = build_delivery(&s, &reference.control, &ins, cfg.solver.n_p)?;
            match solve(&problem, &cfg.solver) {
                Ok(sol) => {
                    write_outputs(out, &sol, Some(&reference.control), problem.u_ins())?;
                    report.rows.push(summary_row(&s, &sol, None));
                }
                Err(e) => return infeasible_stop(report, ProblemKind::Delivery, &s, e, out),
            }
        }
        Subcommand::Sweep => {
            let spec = cfg.sweep.clone().unwrap_or_default();
            let entries = sweep_entries(&s, &spec);
            let results: Vec<(String, Scenario, Result<Solution>)> = entries
                .into_par_iter()
                .map(|(label, es)| {
                    let sol = build_capacity(&es, &reference.control, cfg.solver.n_p)
                        .and_then(|p| solve(&p, &cfg.solver));
                    (label, es, sol)
                })
                .collect();
            for (label, es, sol) in results {
                match sol {
                    Ok(sol) => {
                        let dir = out.join(&label);
                        fs::create_dir_all(&dir)?;
                        write_outputs(&dir, &sol, Some(&reference.control), None)?;
                        report.rows.push(summary_row(&es, &sol, Some(label)));
                    }
                    Err(e @ Error::Infeasible { .. }) => {
                        report.failures.push(format!("{label}: {e}"));
                        report.rows.push(failed_row(&es, ProblemKind::Capacity, Some(label)));
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    write_summary(&out.join("summary.csv"), &report.rows)?;
    Ok(report)
}

/// Ratio and alpha combinations of a sweep, each with its own scenario and label.
pub fn sweep_entries(s: &Scenario, spec: &SweepSpec) -> Vec<(String, Scenario)> {
    let mut entries = Vec::new();
    for &ratio in &spec.ratios {
        let mut es = s.clone();
        es.econ.payment = ratio * es.econ.price;
        match &spec.alphas {
            None => entries.push((format!("ratio_{ratio}"), es)),
            Some(alphas) => {
                for &alpha in alphas {
                    let mut ea = es.clone();
                    ea.alpha_alt = alpha;
                    entries.push((format!("ratio_{ratio}_alpha_{alpha}"), ea));
                }
            }
        }
    }
    entries
}

fn infeasible_stop(mut report: RunReport, kind: ProblemKind, s: &Scenario, e: Error, out: &Path) -> Result<RunReport> {
    if !matches!(e, Error::Infeasible { .. }) {
        return Err(e);
    }
    report.failures.push(format!("{}: {e}", kind.as_str()));
    report.rows.push(failed_row(s, kind, None));
    write_summary(&out.join("summary.csv"), &report.rows)?;
    Ok(report)
}

fn alpha_for(s: &Scenario, kind: ProblemKind) -> f64 {
    match kind {
        ProblemKind::Reference => s.alpha_ref,
        ProblemKind::Capacity => s.alpha_alt,
        ProblemKind::Delivery => s.alpha_del,
    }
}

fn summary_row(s: &Scenario, sol: &Solution, label: Option<String>) -> SummaryRow {
    let is_ref = sol.kind == ProblemKind::Reference;
    SummaryRow {
        kind: sol.kind,
        ratio: (sol.kind == ProblemKind::Capacity).then(|| s.ratio()),
        alpha: alpha_for(s, sol.kind),
        objective: Some(sol.objective),
        nnp: sol.economics.nnp,
        feasible: true,
        converged: sol.converged,
        t2_analytic: if is_ref { landmark_t2(s).ok() } else { None },
        t2_empirical: if is_ref { empirical_onset(&sol.control) } else { None },
        label,
    }
}

fn failed_row(s: &Scenario, kind: ProblemKind, label: Option<String>) -> SummaryRow {
    SummaryRow {
        kind,
        ratio: (kind == ProblemKind::Capacity).then(|| s.ratio()),
        alpha: alpha_for(s, kind),
        objective: None,
        nnp: None,
        feasible: false,
        converged: false,
        t2_analytic: None,
        t2_empirical: None,
        label,
    }
}

/// First grid time after which the control stays at full power through `T`.
pub fn empirical_onset(u: &ControlProfile) -> Option<f64> {
    let last = *u.values().last()?;
    (last >= FULL_POWER_LEVEL).then(|| u.sustained_onset(FULL_POWER_LEVEL))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "kind", "ratio", "objective", "nnp", "feasible", "t2_analytic", "t2_empirical", "alpha", "converged", "label",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.kind.as_str().to_string(),
            opt(r.ratio),
            opt(r.objective),
            opt(r.nnp),
            r.feasible.to_string(),
            opt(r.t2_analytic),
            opt(r.t2_empirical),
            r.alpha.to_string(),
            r.converged.to_string(),
            r.label.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trajectory.csv` and `control.csv` for one solution.
pub fn write_outputs(
    dir: &Path,
    sol: &Solution,
    u_ref: Option<&ControlProfile>,
    u_ins: Option<&ControlProfile>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("trajectory.csv")).map_err(csv_err)?;
    w.write_record(["t_min", "x_degC"]).map_err(csv_err)?;
    for &(t, x) in &sol.trajectory.samples {
        w.write_record([t.to_string(), x.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;

    let u = &sol.control;
    let with_cap = sol.kind == ProblemKind::Capacity;
    let mut w = csv::Writer::from_path(dir.join("control.csv")).map_err(csv_err)?;
    w.write_record(["t_min", "u", "u_ref", "u_ins", "u_cap"]).map_err(csv_err)?;
    // each row holds the values on [t, next t); the final row at T repeats the last interval
    for &t in u.breakpoints() {
        let v = u.value_at(t);
        let r = u_ref.map(|p| p.value_at(t));
        w.write_record([
            t.to_string(),
            v.to_string(),
            opt(r),
            opt(u_ins.map(|p| p.value_at(t))),
            opt(r.filter(|_| with_cap).map(|r| v - r)),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Human-readable summary printed by the binary.
pub fn render_report(report: &RunReport, mut out: impl Write) -> std::io::Result<()> {
    for r in &report.rows {
        write!(out, "{:<9}", r.kind.as_str())?;
        if let Some(label) = &r.label {
            write!(out, " {label}")?;
        }
        match r.objective {
            Some(obj) => write!(out, " objective={obj:.6}")?,
            None => write!(out, " objective=-")?,
        }
        if let Some(nnp) = r.nnp {
            write!(out, " nnp={nnp:.4}")?;
        }
        if let (Some(a), Some(e)) = (r.t2_analytic, r.t2_empirical) {
            write!(out, " t2={a:.2} onset={e:.2}")?;
        }
        writeln!(out, " feasible={} converged={}", r.feasible, r.converged)?;
    }
    for f in &report.failures {
        writeln!(out, "infeasible {f}")?;
    }
    Ok(())
}
