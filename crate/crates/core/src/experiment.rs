//! Experiment registry behind the `shearlab` command: flat key=value
//! configuration, dispatch to the numerical modules, CSV and plot-script
//! artifacts, and a report whose verdict comes only from documented thresholds.

use crate::acceptance::run_all;
use crate::certificate::certify;
use crate::numerics::{geomspace, linspace};
use crate::planner::{build_plan, instability_time, leading_corrector, usbound_sweep};
use crate::profile::{by_name, check_assumptions, inflection_data, ProbeGrid, Regime as AssumptionRegime, ShearProfile};
use crate::rayleigh::{growth_oracle_with, scan_sigma_with, solve_mode, OracleGrid, ScanOptions, ORACLE_SEED};
use crate::robin::{
    asympt_ratio, constant_data_reference, envelope_check, extend, extend_unchecked, gronwall_bound, rate_experiment, solve_extended,
    Coefficient, Envelope, Limit, Norm, SpaceGrid,
};
use num_complex::Complex64;
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

/// Output directory when neither `--out` nor `SHEARLAB_OUT` is given.
pub const DEFAULT_OUT: &str = "shearlab-out";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error for '{key}': {message}")]
    Config { key: String, message: String },
    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: crate::Error,
    },
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl RunError {
    /// 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } => 2,
            _ => 1,
        }
    }

    fn config(key: &str, message: impl Into<String>) -> Self {
        RunError::Config { key: key.to_string(), message: message.into() }
    }
}

trait Context<T> {
    fn context(self, what: &str) -> Result<T, RunError>;
}

impl<T> Context<T> for crate::Result<T> {
    fn context(self, what: &str) -> Result<T, RunError> {
        self.map_err(|source| RunError::Numerical { context: what.to_string(), source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    RobinRates,
    ErfReference,
    Envelope,
    Gronwall,
    ProfileCheck,
    Certify,
    Dispersion,
    GrowthOracle,
    Plan,
    InstabilityTime,
    Corrector,
    UsboundSweep,
    Acceptance,
}

impl Experiment {
    pub const ALL: [Experiment; 13] = [
        Experiment::RobinRates,
        Experiment::ErfReference,
        Experiment::Envelope,
        Experiment::Gronwall,
        Experiment::ProfileCheck,
        Experiment::Certify,
        Experiment::Dispersion,
        Experiment::GrowthOracle,
        Experiment::Plan,
        Experiment::InstabilityTime,
        Experiment::Corrector,
        Experiment::UsboundSweep,
        Experiment::Acceptance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::RobinRates => "robin-rates",
            Experiment::ErfReference => "erf-reference",
            Experiment::Envelope => "envelope",
            Experiment::Gronwall => "gronwall",
            Experiment::ProfileCheck => "profile-check",
            Experiment::Certify => "certify",
            Experiment::Dispersion => "dispersion",
            Experiment::GrowthOracle => "growth-oracle",
            Experiment::Plan => "plan",
            Experiment::InstabilityTime => "instability-time",
            Experiment::Corrector => "corrector",
            Experiment::UsboundSweep => "usbound-sweep",
            Experiment::Acceptance => "acceptance",
        }
    }

    /// `(key, default, description)` for every accepted parameter.
    pub fn schema(self) -> &'static [(&'static str, &'static str, &'static str)] {
        const PROFILE: [(&str, &str, &str); 5] = [
            ("profile", "gevrey", "catalog profile: gevrey, two-inflection, exp-flat, exp-raw, constant"),
            ("rho", "2", "Gevrey index (gevrey)"),
            ("y1", "1", "first inflection point (two-inflection)"),
            ("y2", "3", "second inflection point (two-inflection)"),
            ("amplitude", "1", "amplitude (two-inflection)"),
        ];
        macro_rules! with_profile {
            ($($extra:expr),* $(,)?) => {{
                const S: &[(&str, &str, &str)] = &[PROFILE[0], PROFILE[1], PROFILE[2], PROFILE[3], PROFILE[4], $($extra),*];
                S
            }};
        }
        match self {
            Experiment::RobinRates => with_profile![
                ("limit", "dirichlet", "dirichlet (a -> inf) or neumann (a -> 0)"),
                ("norm", "linf", "linf, l1, l2 or wkp"),
                ("k", "1", "derivative order for norm=wkp"),
                ("p", "inf", "integrability exponent for norm=wkp"),
                ("a_min", "auto", "smallest coefficient; auto is 10 (dirichlet) or 1e-4 (neumann)"),
                ("a_max", "auto", "largest coefficient; auto is 1e4 (dirichlet) or 1e-1 (neumann)"),
                ("points", "7", "number of geometric coefficients"),
                ("t", "0", "time; 0 compares the extensions"),
                ("expected_slope", "auto", "auto is -1 (dirichlet), 0.5 (neumann, l2) or 1 (neumann, other norms)"),
                ("tolerance", "0.1", "allowed |slope - expected_slope|"),
            ],
            Experiment::ErfReference => &[
                ("alpha", "0.5,1", "Robin coefficients"),
                ("t", "0.5,1", "times"),
                ("y", "0,0.5,1,2", "positions"),
                ("tolerance", "1e-6", "allowed pointwise deviation"),
            ],
            Experiment::Envelope => with_profile![
                ("a", "1", "Robin coefficient; inf for Dirichlet"),
                ("alpha", "0.1", "envelope rate"),
                ("beta", "0", "envelope algebraic power"),
                ("constant", "1", "envelope constant"),
                ("t_min", "0.1", "first sample time"),
                ("t_max", "30", "last sample time"),
                ("samples", "31", "number of sample times"),
            ],
            Experiment::Gronwall => &[
                ("lambda", "0.5", "linear growth rate, below alpha"),
                ("alpha", "1", "forcing rate"),
                ("beta", "0.25", "forcing algebraic power"),
                ("c", "1", "forcing constant"),
                ("phi0", "0", "initial value"),
                ("t", "30", "time of the asymptotic ratio check"),
                ("tolerance", "0.05", "allowed relative distance of the ratio from 1/alpha"),
            ],
            Experiment::ProfileCheck => with_profile![
                ("regime", "above", "above (gamma > 1/2) or below (gamma < 1/2)"),
                ("k_max", "6", "highest derivative order checked"),
                ("tolerance", "1e-10", "flatness and tail tolerance"),
            ],
            Experiment::Certify => with_profile![],
            Experiment::Dispersion => with_profile![
                ("k_min", "0.05", "smallest wavenumber"),
                ("k_max", "5", "largest wavenumber"),
                ("points", "30", "number of geometric wavenumbers"),
            ],
            Experiment::GrowthOracle => with_profile![
                ("k", "0.658", "wavenumber"),
                ("t_end", "300", "final time"),
                ("dt", "0.01", "time step"),
                ("cells", "4000", "grid cells on [0, 40]"),
                ("sigma_ref", "0", "reference growth rate; 0 skips the comparison"),
                ("tolerance", "0.05", "allowed relative deviation from sigma_ref"),
            ],
            Experiment::Plan => &[("gamma", "1", "friction exponent"), ("N", "1", "initial perturbation order"), ("M", "3", "number of correction terms")],
            Experiment::InstabilityTime => &[
                ("nu", "1e-2,1e-4,1e-6,1e-8", "viscosities"),
                ("theta", "0.25", "target exponent"),
                ("N", "1", "initial perturbation order"),
                ("sigma0", "1", "maximal growth rate"),
                ("tau", "0", "time shift"),
            ],
            Experiment::Corrector => with_profile![
                ("k", "0.65", "wavenumber of the interior mode"),
                ("c_re", "0.147", "seed for Re c"),
                ("c_im", "0.052", "seed for Im c"),
                ("gamma", "1", "friction exponent"),
                ("t", "1,2,3,4,5", "times"),
                ("y_max", "15", "largest Y reported"),
                ("y_points", "61", "number of reported Y"),
                ("tolerance", "1e-5", "allowed wall-condition violation"),
            ],
            Experiment::UsboundSweep => with_profile![
                ("gamma", "1", "friction exponent"),
                ("nu", "1e-2,1e-3,1e-4,1e-5", "viscosities"),
                ("t", "0.1,0.3,1,3,10,30,100", "times before the sqrt(nu) rescaling"),
            ],
            Experiment::Acceptance => &[],
        }
    }
}

impl FromStr for Experiment {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| RunError::config("experiment", format!("unknown experiment '{s}'")))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    parameters: BTreeMap<String, String>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, output_dir: PathBuf) -> Self {
        let parameters = experiment.schema().iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect();
        ExperimentConfig { experiment, parameters, output_dir, seed: ORACLE_SEED }
    }

    /// Overrides one parameter; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), RunError> {
        match key {
            "seed" => {
                self.seed = value.parse().map_err(|_| RunError::config(key, format!("not an unsigned integer: '{value}'")))?;
            }
            "out" => self.output_dir = PathBuf::from(value),
            _ => {
                let slot = self
                    .parameters
                    .get_mut(key)
                    .ok_or_else(|| RunError::config(key, format!("not a parameter of {}", self.experiment)))?;
                *slot = value.trim().to_string();
            }
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), RunError> {
        let text = fs::read_to_string(path).map_err(|e| RunError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| RunError::config(&format!("{}:{}", path.display(), i + 1), "expected key = value"))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn parameters(&self) -> &BTreeMap<String, String> {
        &self.parameters
    }

    fn raw(&self, key: &str) -> &str {
        self.parameters.get(key).map(String::as_str).unwrap_or("")
    }

    fn f64(&self, key: &str) -> Result<f64, RunError> {
        parse_scalar(self.raw(key)).ok_or_else(|| RunError::config(key, format!("not a number: '{}'", self.raw(key))))
    }

    fn usize(&self, key: &str) -> Result<usize, RunError> {
        self.raw(key).parse().map_err(|_| RunError::config(key, format!("not a non-negative integer: '{}'", self.raw(key))))
    }

    fn list(&self, key: &str) -> Result<Vec<f64>, RunError> {
        let raw = self.raw(key);
        raw.split(',')
            .map(|s| parse_scalar(s.trim()))
            .collect::<Option<Vec<_>>>()
            .filter(|v| !v.is_empty())
            .ok_or_else(|| RunError::config(key, format!("not a comma-separated list of numbers: '{raw}'")))
    }

    /// `None` when the value is `auto`.
    fn auto_f64(&self, key: &str) -> Result<Option<f64>, RunError> {
        if self.raw(key) == "auto" {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    fn profile(&self) -> Result<ShearProfile, RunError> {
        let bad = RefCell::new(None);
        let get = |k: &str, default: f64| match self.parameters.get(k) {
            Some(v) => parse_scalar(v).unwrap_or_else(|| {
                bad.borrow_mut().get_or_insert_with(|| k.to_string());
                default
            }),
            None => default,
        };
        let name = self.raw("profile").to_string();
        let result = by_name(&name, &get);
        if let Some(k) = bad.into_inner() {
            return Err(RunError::config(&k, format!("not a number: '{}'", self.raw(&k))));
        }
        result.map_err(|e| RunError::config("profile", e.to_string()))
    }
}

fn parse_scalar(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        _ => s.parse().ok(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub experiment: Experiment,
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
    pub artifacts: Vec<PathBuf>,
    pub wall_time: f64,
    /// Free-form lines for the terminal.
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn summary(&self) -> String {
        let mut s = format!("{}: {}\n", self.experiment, if self.pass { "PASS" } else { "FAIL" });
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "  {k} = {v:.6e}");
        }
        for n in &self.notes {
            let _ = writeln!(s, "  {n}");
        }
        for a in &self.artifacts {
            let _ = writeln!(s, "  wrote {}", a.display());
        }
        let _ = writeln!(s, "  wall time {:.2} s", self.wall_time);
        s
    }
}

/// Collects artifacts for one run in `<out>/<experiment>/`.
struct Sink {
    dir: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Sink {
    fn new(config: &ExperimentConfig) -> Result<Self, RunError> {
        let dir = config.output_dir.join(config.experiment.name());
        fs::create_dir_all(&dir).map_err(|e| RunError::Io { path: dir.clone(), message: e.to_string() })?;
        Ok(Sink { dir, artifacts: vec![] })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| RunError::Io { path: path.clone(), message: e.to_string() })?;
        self.artifacts.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &str, rows: &[Vec<String>]) -> Result<(), RunError> {
        let mut text = format!("{header}\n");
        for r in rows {
            text += &r.join(",");
            text.push('\n');
        }
        self.write(name, &text)
    }

    /// Gnuplot script drawing `y` against `x` columns of `data`.
    fn plot(&mut self, data: &str, x: usize, ys: &[(usize, &str)], log: &str, title: &str) -> Result<(), RunError> {
        let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\n");
        if !log.is_empty() {
            let _ = writeln!(s, "set logscale {log}");
        }
        let _ = writeln!(s, "set title '{title}'");
        let curves: Vec<String> = ys.iter().map(|(c, w)| format!("'{data}' using {x}:{c} with {w}")).collect();
        let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
        let stem = data.trim_end_matches(".csv");
        self.write(&format!("{stem}.gp"), &s)
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn summary_row(name: &str, slope: f64, intercept: f64, r2: f64, expected: f64, tol: f64, pass: bool) -> Vec<String> {
    vec![name.to_string(), num(slope), num(intercept), num(r2), num(expected), num(tol), pass.to_string()]
}

const SUMMARY_HEADER: &str = "experiment,slope,intercept,r2,expected_slope,tolerance,pass";

/// Runs one experiment and writes its artifacts.
pub fn run(config: &ExperimentConfig) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let mut sink = Sink::new(config)?;
    let mut metrics = BTreeMap::new();
    let mut notes = vec![];
    let pass = match config.experiment {
        Experiment::RobinRates => robin_rates(config, &mut sink, &mut metrics, &mut notes)?,
        Experiment::ErfReference => erf_reference(config, &mut sink, &mut metrics)?,
        Experiment::Envelope => envelope(config, &mut sink, &mut metrics)?,
        Experiment::Gronwall => gronwall(config, &mut sink, &mut metrics)?,
        Experiment::ProfileCheck => profile_check(config, &mut sink, &mut metrics, &mut notes)?,
        Experiment::Certify => certificate(config, &mut sink, &mut metrics)?,
        Experiment::Dispersion => dispersion(config, &mut sink, &mut metrics)?,
        Experiment::GrowthOracle => growth(config, &mut sink, &mut metrics)?,
        Experiment::Plan => plan(config, &mut sink, &mut notes)?,
        Experiment::InstabilityTime => times(config, &mut sink, &mut metrics)?,
        Experiment::Corrector => corrector(config, &mut sink, &mut metrics, &mut notes)?,
        Experiment::UsboundSweep => usbound(config, &mut sink, &mut metrics)?,
        Experiment::Acceptance => acceptance(config, &mut sink, &mut metrics, &mut notes)?,
    };
    Ok(RunReport {
        experiment: config.experiment,
        pass,
        metrics,
        artifacts: sink.artifacts,
        wall_time: start.elapsed().as_secs_f64(),
        notes,
    })
}

/// Runs independent experiments concurrently; reports come back sorted by
/// experiment name. Configs must not share an output subdirectory.
pub fn run_many(configs: &[ExperimentConfig]) -> Vec<Result<RunReport, RunError>> {
    use rayon::prelude::*;
    let mut order: Vec<usize> = (0..configs.len()).collect();
    order.sort_by_key(|&i| configs[i].experiment);
    order.par_iter().map(|&i| run(&configs[i])).collect()
}

type Metrics = BTreeMap<String, f64>;

fn robin_rates(cfg: &ExperimentConfig, sink: &mut Sink, m: &mut Metrics, notes: &mut Vec<String>) -> Result<bool, RunError> {
    let u0 = cfg.profile()?;
    let limit = match cfg.raw("limit") {
        "dirichlet" => Limit::ToInfinity,
        "neumann" => Limit::ToZero,
        other => return Err(RunError::config("limit", format!("expected dirichlet or neumann, got '{other}'"))),
    };
    let norm = match cfg.raw("norm") {
        "linf" => Norm::Linf,
        "l1" => Norm::L1,
        "l2" => Norm::L2,
        "wkp" => Norm::Wkp { k: cfg.usize("k")?, p: cfg.f64("p")? },
        other => return Err(RunError::config("norm", format!("expected linf, l1, l2 or wkp, got '{other}'"))),
    };
    let (lo, hi, expected) = match (limit, norm) {
        (Limit::ToInfinity, _) => (10.0, 1e4, -1.0),
        (Limit::ToZero, Norm::L2) => (1e-4, 1e-1, 0.5),
        (Limit::ToZero, _) => (1e-4, 1e-1, 1.0),
    };
    let a_min = cfg.auto_f64("a_min")?.unwrap_or(lo);
    let a_max = cfg.auto_f64("a_max")?.unwrap_or(hi);
    let expected = cfg.auto_f64("expected_slope")?.unwrap_or(expected);
    let tol = cfg.f64("tolerance")?;
    let t = cfg.f64("t")?;
    let a_values = geomspace(a_min, a_max, cfg.usize("points")?);
    let r = rate_experiment(&u0, &a_values, norm, limit, t).map_err(|e| match e {
        crate::Error::InvalidParameter(msg) => RunError::config("a_min", msg),
        source => RunError::Numerical { context: "rate experiment".into(), source },
    })?;
    let rows: Vec<Vec<String>> = r.rows.iter().map(|row| vec![num(row.a), num(row.norm_value), norm.label(), num(t)]).collect();
    sink.csv("rates.csv", "a,norm_value,norm_kind,t", &rows)?;
    sink.plot("rates.csv", 1, &[(2, "linespoints")], "xy", "distance to the limiting solution")?;
    if let Some(adv) = &r.advisory {
        notes.push(format!("advisory: {adv}"));
        sink.csv("summary.csv", SUMMARY_HEADER, &[])?;
        return Ok(false);
    }
    let fit = r.fit.expect("fit present without advisory");
    let pass = (fit.slope - expected).abs() <= tol;
    m.insert("slope".into(), fit.slope);
    m.insert("r2".into(), fit.r2);
    sink.csv("summary.csv", SUMMARY_HEADER, &[summary_row("robin-rates", fit.slope, fit.intercept, fit.r2, expected, tol, pass)])?;
    Ok(pass)
}

fn erf_reference(cfg: &ExperimentConfig, sink: &mut Sink, m: &mut Metrics) -> Result<bool, RunError> {
    let one = crate::profile::constant(1.0);
    let ys = cfg.list("y")?;
    if ys.iter().any(|&y| !(y >= 0.0)) {
        return Err(RunError::config("y", "positions must be >= 0"));
    }
    let tol = cfg.f64("tolerance")?;
    let mut rows = vec![];
    let mut worst: f64 = 0.0;
    for alpha in cfg.list("alpha")? {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(RunError::config("alpha", "coefficients must be positive and finite"));
        }
        let ext = extend_unchecked(&one, Coefficient::Finite(alpha)).context("extension")?;
        for t in cfg.list("t")? {
            if !(t > 0.0) {
                return Err(RunError::config("t", "times must be positive"));
            }
            let field = solve_extended(&ext, t, &SpaceGrid::points(ys.clone())).context("heat solve")?;
            for (&y, &v) in ys.iter().zip(&field.values) {
                let r = constant_data_reference(alpha, t, y);
                worst = worst.max((v - r).abs());
                rows.push(vec![num(alpha), num(t), num(y), num(v), num(r), num((v - r).abs())]);
            }
        }
    }
    sink.csv("erf_reference.csv", "alpha,t,y,numeric,reference,abs_error", &rows)?;
    sink.plot("erf_reference.csv", 3, &[(4, "points"), (5, "lines")], "", "constant data under the Robin condition")?;
    m.insert("max_abs_error".into(), worst);
    Ok(worst < tol)
}

fn coefficient(cfg: &ExperimentConfig, key: &str) -> Result<Coefficient, RunError> {
    let a = cfg.f64(key)?;
    if a.is_infinite() && a > 0.0 {
        Ok(Coefficient::Infinite)
    } else if a >= 0.0 {
        Ok(Coefficient::Finite(a))
    } else {
        Err(RunError::config(key, "coefficient must be >= 0"))
    }
}

fn envelope(cfg: &ExperimentConfig, sink: &mut Sink, m: &mut Metrics) -> Result<bool, RunError> {
    let u0 = cfg.profile()?;
    let a = coefficient(cfg, "a")?;
    let env = Envelope { alpha: cfg.f64("alpha")?, beta: cfg.f64("beta")?, constant: cfg.f64("constant")? };
    if !(env.alpha > 0.0 && env.beta >= 0.0 && env.constant > 0.0) {
        return Err(RunError::config("alpha", "envelope needs alpha > 0, beta >= 0, constant > 0"));
    }
    let t_min = cfg.f64("t_min")?;
    if !(t_min > 0.0) {
        return Err(RunError::config("t_min", "sample times must be positive"));
    }
    let ext = extend(&u0, a).context("extension")?;
    let grid = SpaceGrid::standard();
    let mut samples = vec![];
    for t in linspace(t_min, cfg.f64("t_max")?, cfg.usize("samples")?) {
        let f = solve_extended(&ext, t, &grid).context("heat solve")?;
        samples.push((t, f.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))));
    }
    let check = envelope_check(&samples, &env);
    let rows: Vec<Vec<String>> = samples.iter().map(|&(t, v)| vec![num(t), num(v), num(env.eval(t))]).collect();
    sink.csv("envelope.csv", "t,norm_linf,envelope", &rows)?;
    sink.plot("envelope.csv", 1, &[(2, "points"), (3, "lines")], "y", "sup norm against the envelope")?;
    m.insert("worst_ratio".into(), check.worst_ratio);
    m.insert("worst_time".into(), check.worst_time);
    Ok(check.pass)
}

fn gronwall(cfg: &ExperimentConfig, sink: &mut Sink, m: &mut Metrics) -> Result<bool, RunError> {
    let (lambda, alpha, beta) = (cfg.f64("lambda")?, cfg.f64("alpha")?, cfg.f64("beta")?);
    let r = gronwall_bound(lambda, alpha, beta, cfg.f64("c")?, cfg.f64("phi0")?).map_err(|e| RunError::config("lambda", e.to_string()))?;
    let ratio = asympt_ratio(alpha, beta, cfg.f64("t")?).context("asymptotic ratio")?;
    let rows: Vec<Vec<String>> = r.trajectory.iter().map(|&(t, phi)| vec![num(t), num(phi), num(r.envelope.eval(t))]).collect();
    sink.csv("gronwall.csv", "t,phi,envelope", &rows)?;
    sink.plot("gronwall.csv", 1, &[(2, "lines"), (3, "lines")], "y", "Gronwall trajectory and fitted envelope")?;
    let tol = cfg.f64("tolerance")?;
    m.insert("envelope_constant".into(), r.envelope.constant);
    m.insert("asympt_ratio".into(), ratio);
    Ok(r.envelope.constant.is_finite() && (ratio * alpha - 1.0).abs() < tol)
}

fn profile_check(cfg: &ExperimentConfig, sink: &mut Sink, m: &mut Metrics, notes: &mut Vec<String>) -> Result<bool, RunError> {
    let u0 = cfg.profile()?;
    let regime = match cfg.raw("regime") {
        "above" => AssumptionRegime::GammaAboveHalf,
        "below" => AssumptionRegime::GammaBelowHalf,
        other => return Err(RunError::config("regime", format!("expected above or below, got '{other}'"))),
    };
    let r = check_assumptions(&u0, regime, cfg.usize("k_max")?, cfg.f64("tolerance")?).context("assumption check")?;
    let rows: Vec<Vec<String>> = r
        .l1
        .iter()
        .map(|e| vec![e.order.to_string(), num(r.derivative_at_zero[e.order]), num(e.integral), num(e.tail_exponent), e.integrable.to_string()])
        .collect();
    sink.csv("assumptions.csv", "order,derivative_at_zero,l1_integral,tail_exponent,integrable", &rows)?;
    m.insert("max_derivative_at_zero".into(), r.max_derivative_at_zero);
    if let Ok(d) = inflection_data(&u0, ProbeGrid::default()) {
        let pts: Vec<String> = d.inflection_points.iter().map(|p| format!("{:.6}", p.y)).collect();
        notes.push(format!("inflection points [{}], K+ = {}", pts.join(", "), d.kplus));
        m.insert("kplus".into(), if d.kplus { 1.0 } else { 0.0 });
        let rows: Vec<Vec<String>> = d.k_samples.iter().step_by(10).map(|&(y, k)| vec![num(y), num(k)]).collect();
        sink.csv("k_samples.csv", "y,k", &rows)?;
        sink.plot("k_samples.csv", 1, &[(2, "lines")], "", "K = -U''/(U - U0)")?;
    }
    Ok(r.pass)
}

fn certificate(cfg: &ExperimentConfig, sink: &mut Sink, m: &mut Metrics) -> Result<bool, RunError> {
    let c = certify(&cfg.profile()?).context("certificate")?;
    let row = vec![
        c.profile.clone(),
        num(c.eta0),
        c.n.to_string(),
        num(c.q_value),
        num(c.y0),
        num(c.q_at_y0),
        num(c.q_prime_at_y0),
        num(c.min_eig),
        c.pass().to_string(),
    ];
    sink.csv("certificate.csv", "profile,eta0,n,q_value,y0,q_at_y0,q_prime_at_y0,min_eig,pass", &[row])?;
    sink.plot("certificate.csv", 2, &[(8, "points")], "", "minimal eigenvalue against the cutoff height")?;
    m.insert("q_value".into(), c.q_value);
    m.insert("min_eig".into(), c.min_eig);
    Ok(c.q_value < 0.0 && c.min_eig < 0.0)
}

fn dispersion(cfg: &ExperimentConfig, sink: &mut Sink, m: &mut Metrics) -> Result<bool, RunError> {
    let p = cfg.profile()?;
    let ks = geomspace(cfg.f64("k_min")?, cfg.f64("k_max")?, cfg.usize("points")?);
    let curve = scan_sigma_with(&p, &ks, &ScanOptions::default()).map_err(|e| match e {
        crate::Error::InvalidParameter(msg) => RunError::config("k_min", msg),
        source => RunError::Numerical { context: "dispersion scan".into(), source },
    })?;
    let rows: Vec<Vec<String>> = curve
        .k_values
        .iter()
        .zip(&curve.sigma_values)
        .zip(&curve.modes)
        .map(|((&k, &s), mode)| match mode {
            Some(md) => vec![num(k), num(s), num(md.phase_speed.re), num(md.phase_speed.im), num(md.residual), "true".into()],
            None => vec![num(k), num(s), String::new(), String::new(), String::new(), "false".into()],
        })
        .collect();
    sink.csv("dispersion.csv", "k,sigma,re_c,im_c,residual,found", &rows)?;
    sink.plot("dispersion.csv", 1, &[(2, "linespoints")], "x", "growth rate")?;
    let (k0, s0) = curve.refined_peak.unwrap_or((curve.k0, curve.sigma0));
    if let Some(mode) = curve.nearest_mode(curve.k0) {
        let rows: Vec<Vec<String>> = mode.y.iter().zip(&mode.phi).map(|(&y, z)| vec![num(y), num(z.re), num(z.im)]).collect();
        sink.csv("mode.csv", "y,re_phi,im_phi", &rows)?;
        sink.plot("mode.csv", 1, &[(2, "lines"), (3, "lines")], "", "eigenfunction at the grid peak")?;
    }
    m.insert("k0".into(), k0);
    m.insert("sigma0".into(), s0);
    Ok(curve.sigma0 > 0.0)
}

fn growth(cfg: &ExperimentConfig, sink: &mut Sink, m: &mut Metrics) -> Result<bool, RunError> {
    let p = cfg.profile()?;
    let grid = OracleGrid { cells: cfg.usize("cells")?, seed: cfg.seed, ..OracleGrid::default() };
    if grid.cells < 16 {
        return Err(RunError::config("cells", "need at least 16 cells"));
    }
    let r = growth_oracle_with(&p, cfg.f64("k")?, cfg.f64("t_end")?, cfg.f64("dt")?, &grid).map_err(|e| match e {
        crate::Error::InvalidParameter(msg) => RunError::config("dt", msg),
        source => RunError::Numerical { context: "growth oracle".into(), source },
    })?;
    let rows: Vec<Vec<String>> = r.history.iter().map(|&(t, l)| vec![num(t), num(l)]).collect();
    sink.csv("oracle.csv", "t,log_norm", &rows)?;
    sink.plot("oracle.csv", 1, &[(2, "lines")], "", "log of the perturbation norm")?;
    m.insert("slope".into(), r.slope);
    m.insert("quarter_slope".into(), r.quarter_slope);
    let reference = cfg.f64("sigma_ref")?;
    if reference > 0.0 {
        let err = (r.slope - reference).abs() / reference;
        m.insert("relative_error".into(), err);
        Ok(err < cfg.f64("tolerance")?)
    } else {
        Ok(r.slope.is_finite())
    }
}

fn plan(cfg: &ExperimentConfig, sink: &mut Sink, notes: &mut Vec<String>) -> Result<bool, RunError> {
    let order = u32::try_from(cfg.usize("N")?).map_err(|_| RunError::config("N", "too large"))?;
    let terms = u32::try_from(cfg.usize("M")?).map_err(|_| RunError::config("M", "too large"))?;
    let p = build_plan(cfg.f64("gamma")?, order, terms).map_err(|e| RunError::config("gamma", e.to_string()))?;
    sink.write("plan.txt", &p.dump())?;
    let rows: Vec<Vec<String>> = p.order_table().into_iter().map(|(j, k, oi, ob)| vec![j.to_string(), k.to_string(), oi.to_string(), ob.to_string()]).collect();
    sink.csv("order_table.csv", "j,k_j,nu_order_uI,nu_order_ub", &rows)?;
    sink.plot("order_table.csv", 1, &[(3, "linespoints"), (4, "linespoints")], "", "viscosity orders of the correction terms")?;
    notes.push(format!("n = {}, theta = {}, a = {}, regime {}", p.n, p.theta, p.amplitude_a, p.regime));
    Ok(true)
}

fn times(cfg: &ExperimentConfig, sink: &mut Sink, m: &mut Metrics) -> Result<bool, RunError> {
    let (theta, sigma0, tau) = (cfg.f64("theta")?, cfg.f64("sigma0")?, cfg.f64("tau")?);
    let order = u32::try_from(cfg.usize("N")?).map_err(|_| RunError::config("N", "too large"))?;
    let mut rows = vec![];
    let mut worst: f64 = 0.0;
    for nu in cfg.list("nu")? {
        let it = instability_time(nu, theta, order, sigma0, tau).map_err(|e| RunError::config("nu", e.to_string()))?;
        worst = worst.max(it.residual);
        rows.push(vec![num(nu), num(it.root), num(it.time), num(it.scaled), num(it.residual)]);
    }
    sink.csv("instability_time.csv", "nu,T,T_nu,sqrt_nu_T,residual", &rows)?;
    sink.plot("instability_time.csv", 1, &[(2, "linespoints"), (4, "linespoints")], "x", "instability time")?;
    m.insert("max_residual".into(), worst);
    Ok(worst < 1e-12)
}

fn corrector(cfg: &ExperimentConfig, sink: &mut Sink, m: &mut Metrics, notes: &mut Vec<String>) -> Result<bool, RunError> {
    let p = cfg.profile()?;
    let mode = solve_mode(&p, cfg.f64("k")?, Complex64::new(cfg.f64("c_re")?, cfg.f64("c_im")?)).context("interior mode")?;
    let ys = linspace(0.0, cfg.f64("y_max")?, cfg.usize("y_points")?);
    let gamma = cfg.f64("gamma")?;
    let tol = cfg.f64("tolerance")?;
    let mut rows = vec![];
    let (mut worst, mut mu_min): (f64, f64) = (0.0, f64::INFINITY);
    let mut nonzero = false;
    for t in cfg.list("t")? {
        let f = leading_corrector(&mode, gamma, t, &ys).map_err(|e| match e {
            crate::Error::OutOfScope(msg) => RunError::config("gamma", msg),
            source => RunError::Numerical { context: "corrector".into(), source },
        })?;
        worst = worst.max(f.wall_residual).max(if f.regime == crate::planner::Regime::Dirichlet { f.cancellation() } else { 0.0 });
        if let Some(mu) = f.decay_rate {
            nonzero = true;
            mu_min = mu_min.min(mu);
        }
        if t == cfg.list("t")?[0] {
            notes.push(format!("regime {}, c = {:.6}", f.regime, mode.phase_speed));
        }
        for (i, &y) in f.y.iter().enumerate() {
            rows.push(vec![num(t), num(y), num(f.u[i].re), num(f.u[i].im), num(f.v[i].re), num(f.v[i].im)]);
        }
    }
    sink.csv("corrector.csv", "t,y,re_u,im_u,re_v,im_v", &rows)?;
    sink.plot("corrector.csv", 2, &[(3, "points"), (4, "points")], "", "leading boundary-layer corrector")?;
    m.insert("max_wall_violation".into(), worst);
    if nonzero {
        m.insert("min_decay_rate".into(), mu_min);
    }
    Ok(worst < tol && (!nonzero || mu_min > 0.0))
}

fn usbound(cfg: &ExperimentConfig, sink: &mut Sink, m: &mut Metrics) -> Result<bool, RunError> {
    let r = usbound_sweep(&cfg.profile()?, cfg.f64("gamma")?, &cfg.list("nu")?, &cfg.list("t")?, &SpaceGrid::standard()).map_err(|e| match e {
        crate::Error::InvalidParameter(msg) | crate::Error::OutOfScope(msg) => RunError::config("nu", msg),
        source => RunError::Numerical { context: "uniformity sweep".into(), source },
    })?;
    let rows: Vec<Vec<String>> = r.rows.iter().map(|row| vec![num(row.nu), num(row.coefficient), num(row.sup_gap), num(row.normalized)]).collect();
    sink.csv("usbound.csv", "nu,coefficient,sup_gap,normalized", &rows)?;
    sink.plot("usbound.csv", 1, &[(4, "linespoints")], "x", "normalized gap to the limiting flow")?;
    sink.csv("summary.csv", SUMMARY_HEADER, &[summary_row("usbound-sweep", r.slope, f64::NAN, f64::NAN, 0.0, r.tolerance, r.pass)])?;
    m.insert("slope".into(), r.slope);
    Ok(r.pass)
}

fn acceptance(cfg: &ExperimentConfig, sink: &mut Sink, m: &mut Metrics, notes: &mut Vec<String>) -> Result<bool, RunError> {
    let outcomes = run_all(cfg.seed);
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| vec![o.id.to_string(), format!("\"{}\"", o.title), o.pass.to_string(), format!("\"{}\"", o.detail.replace('"', "'"))])
        .collect();
    sink.csv("acceptance.csv", "id,title,pass,detail", &rows)?;
    for o in &outcomes {
        notes.push(o.line());
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    m.insert("passed".into(), passed as f64);
    m.insert("criteria".into(), outcomes.len() as f64);
    Ok(passed == outcomes.len())
}
