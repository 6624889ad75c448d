//! Scenario files: a TOML description of one simulation run.
//!
//! A scenario names its rate source (a `[qnm]` medium block, or a `[rates]`
//! block overriding the rates directly; exactly one of the two) plus a
//! `[run]` block with the operating mode and its parameters. Loading is
//! strict by default: unknown keys are rejected with their full path, so a
//! typo cannot silently fall back to a default. Every default that loading
//! fills in is echoed into the output headers, which makes any artifact
//! sufficient to reproduce itself.
//!
//! Unit conventions. QNM scenarios state dephasing, pump, and time in units
//! of Gamma(0), the zero-gain decay rate of emitter 0 at the working
//! frequency; rate-override scenarios are taken at face value and use
//! `gamma_ref` (default: the first diagonal decay entry) only to normalize
//! the output axes.

use std::collections::BTreeSet;
use std::path::Path;

use amped_core::qnm::{QnmModel, RateSet};
use amped_core::C64;
use ndarray::Array2;
use toml::Value;

use crate::error::{validation, CliError};

/// Where the rates come from.
#[derive(Clone, Debug)]
pub enum Source {
    Qnm { model: QnmModel, anchors: Option<Vec<(f64, f64)>> },
    Rates { rates: RateSet, gamma_ref: f64 },
}

/// Initial density matrix for time evolution.
#[derive(Clone, Debug)]
pub enum Initial {
    Ground,
    ExcitedA,
    Plus,
    Minus,
    Custom(Array2<C64>),
}

impl Initial {
    pub fn label(&self) -> &'static str {
        match self {
            Initial::Ground => "ground",
            Initial::ExcitedA => "e_a",
            Initial::Plus => "plus",
            Initial::Minus => "minus",
            Initial::Custom(_) => "custom",
        }
    }
}

/// Operating mode, one per subcommand that runs a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Rates,
    Dynamics,
    Steady,
    Spectrum,
    Sweep,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Rates => "rates",
            Mode::Dynamics => "dynamics",
            Mode::Steady => "steady",
            Mode::Spectrum => "spectrum",
            Mode::Sweep => "sweep",
        }
    }

    fn parse(s: &str) -> Result<Mode, CliError> {
        match s {
            "rates" => Ok(Mode::Rates),
            "dynamics" => Ok(Mode::Dynamics),
            "steady" => Ok(Mode::Steady),
            "spectrum" => Ok(Mode::Spectrum),
            "sweep" => Ok(Mode::Sweep),
            other => Err(validation(format!(
                "`run.mode` must be one of rates, dynamics, steady, spectrum, sweep; got `{other}`"
            ))),
        }
    }
}

/// Which spectrum route the CLI runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Resolvent,
    TimeDomain,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Resolvent => "resolvent",
            Method::TimeDomain => "time-domain",
        }
    }
}

/// The `[run]` block with all defaults resolved.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    /// Working frequency, eV. QNM scenarios only.
    pub omega0_ev: f64,
    /// Gain strengths to iterate. QNM scenarios only.
    pub alpha_g: Vec<f64>,
    /// Pure dephasing in units of Gamma(0). QNM scenarios only.
    pub gamma_dephase: f64,
    /// Pump rates to iterate, units of Gamma(0). QNM scenarios only.
    pub gamma_pump: Vec<f64>,
    /// Cross-pump settings to iterate (`both` expands to true, false).
    pub include_cross_pump: Vec<bool>,
    pub initial: Initial,
    /// Trajectory horizon in units of 1/Gamma(0).
    pub t_max: f64,
    pub n_points: usize,
    pub negativity: bool,
    /// Emit time and detuning axes in raw rate-set units instead of
    /// Gamma(0) units.
    pub raw_time: bool,
    pub omega_grid_half_width: f64,
    pub omega_grid_points: usize,
    /// Frequency sweep bounds for the rates mode, eV.
    pub omega_min_ev: f64,
    pub omega_max_ev: f64,
    pub n_omega: usize,
    /// Averaging window for the sweep mode's plateau column, 1/Gamma(0).
    pub plateau_t_min: f64,
    pub plateau_t_max: f64,
    pub method: Method,
}

/// A fully resolved scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub source: Source,
    pub run: RunConfig,
}

/// One (alpha_g, pump, cross-pump) point of the run's parameter product.
#[derive(Clone, Copy, Debug)]
pub struct Combo {
    /// Gain strength; `None` for rate-override scenarios.
    pub alpha_g: Option<f64>,
    /// Pump in Gamma(0) units; `None` for rate-override scenarios.
    pub pump: Option<f64>,
    pub cross_pump: bool,
}

impl Combo {
    /// Deterministic file-name fragment, e.g. `a0.22_p0.001_cross`.
    pub fn tag(&self) -> String {
        let mut parts = Vec::new();
        if let Some(a) = self.alpha_g {
            parts.push(format!("a{a}"));
        }
        if let Some(p) = self.pump {
            parts.push(format!("p{p}"));
        }
        parts.push(if self.cross_pump { "cross".to_string() } else { "nocross".to_string() });
        parts.join("_")
    }
}

impl Scenario {
    pub fn load(path: &Path, strict: bool) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            validation(format!("cannot read scenario `{}`: {e}", path.display()))
        })?;
        Scenario::parse(&text, strict)
    }

    pub fn parse(text: &str, strict: bool) -> Result<Scenario, CliError> {
        let root: Value = text
            .parse()
            .map_err(|e| validation(format!("scenario is not valid TOML: {e}")))?;
        let root = as_table(&root, "scenario")?;
        check_keys(root, "", &["qnm", "rates", "run"], strict)?;

        let qnm_block = root.get("qnm");
        let rates_block = root.get("rates");
        let source = match (qnm_block, rates_block) {
            (Some(q), None) => parse_qnm(as_table(q, "qnm")?, strict)?,
            (None, Some(r)) => parse_rates(as_table(r, "rates")?, strict)?,
            (Some(_), Some(_)) => {
                return Err(validation(
                    "scenario has both a [qnm] and a [rates] block; use exactly one".to_string(),
                ))
            }
            (None, None) => {
                return Err(validation(
                    "scenario needs a rate source: either a [qnm] or a [rates] block".to_string(),
                ))
            }
        };

        let run_table = match root.get("run") {
            Some(r) => as_table(r, "run")?.clone(),
            None => toml::map::Map::new(),
        };
        let run = parse_run(&run_table, &source, strict)?;
        let scenario = Scenario { source, run };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<(), CliError> {
        let r = &self.run;
        if !(r.t_max > 0.0) {
            return Err(validation(format!("`run.t_max` must be > 0, got {}", r.t_max)));
        }
        if r.n_points < 2 {
            return Err(validation(format!("`run.n_points` must be >= 2, got {}", r.n_points)));
        }
        if r.omega_grid_points < 2 {
            return Err(validation(format!(
                "`run.omega_grid_points` must be >= 2, got {}",
                r.omega_grid_points
            )));
        }
        if !(r.omega_grid_half_width > 0.0) {
            return Err(validation(format!(
                "`run.omega_grid_half_width` must be > 0, got {}",
                r.omega_grid_half_width
            )));
        }
        if r.n_omega < 2 {
            return Err(validation(format!("`run.n_omega` must be >= 2, got {}", r.n_omega)));
        }
        if !(r.omega_min_ev < r.omega_max_ev) {
            return Err(validation(format!(
                "`run.omega_min_ev` must be below `run.omega_max_ev`, got {} vs {}",
                r.omega_min_ev, r.omega_max_ev
            )));
        }
        if !(r.plateau_t_min < r.plateau_t_max) {
            return Err(validation(format!(
                "`run.plateau_t_min` must be below `run.plateau_t_max`, got {} vs {}",
                r.plateau_t_min, r.plateau_t_max
            )));
        }
        if r.plateau_t_max > r.t_max {
            return Err(validation(format!(
                "`run.plateau_t_max` ({}) exceeds the trajectory horizon `run.t_max` ({})",
                r.plateau_t_max, r.t_max
            )));
        }
        if let Source::Qnm { .. } = self.source {
            if r.alpha_g.is_empty() {
                return Err(validation("`run.alpha_g` must not be empty"));
            }
            if r.gamma_pump.is_empty() {
                return Err(validation("`run.gamma_pump` must not be empty"));
            }
            if !(r.omega0_ev > 0.0) {
                return Err(validation(format!(
                    "`run.omega0_ev` must be > 0 eV, got {}",
                    r.omega0_ev
                )));
            }
            if r.gamma_dephase < 0.0 {
                return Err(validation(format!(
                    "`run.gamma_dephase` must be >= 0, got {}",
                    r.gamma_dephase
                )));
            }
            if let Some(p) = r.gamma_pump.iter().find(|p| **p < 0.0) {
                return Err(validation(format!("`run.gamma_pump` must be >= 0, got {p}")));
            }
        }
        Ok(())
    }

    /// Number of emitters described by the source.
    pub fn n_emitters(&self) -> usize {
        match &self.source {
            Source::Qnm { model, .. } => model.n_emitters(),
            Source::Rates { rates, .. } => rates.n(),
        }
    }

    /// Zero-gain decay rate of emitter 0 at the working frequency, in the
    /// units of the rate source. This is the normalization constant for all
    /// time and detuning axes.
    pub fn gamma0(&self) -> Result<f64, CliError> {
        match &self.source {
            Source::Qnm { model, .. } => {
                let mut bare = model.clone();
                bare.alpha_g = 0.0;
                let n = bare.n_emitters();
                let rs = bare.rate_set(self.run.omega0_ev, &vec![0.0; n], &vec![0.0; n])?;
                Ok(rs.gamma_down[(0, 0)])
            }
            Source::Rates { gamma_ref, .. } => Ok(*gamma_ref),
        }
    }

    /// The parameter product the run iterates over, in deterministic order:
    /// alpha_g outermost, then pump, then cross-pump.
    pub fn combos(&self) -> Vec<Combo> {
        match &self.source {
            Source::Qnm { .. } => {
                let mut out = Vec::new();
                for &a in &self.run.alpha_g {
                    for &p in &self.run.gamma_pump {
                        for &c in &self.run.include_cross_pump {
                            out.push(Combo { alpha_g: Some(a), pump: Some(p), cross_pump: c });
                        }
                    }
                }
                out
            }
            Source::Rates { .. } => self
                .run
                .include_cross_pump
                .iter()
                .map(|&c| Combo { alpha_g: None, pump: None, cross_pump: c })
                .collect(),
        }
    }

    /// Rate set of one parameter point, in the units of the rate source.
    pub fn rate_set_for(&self, combo: &Combo) -> Result<RateSet, CliError> {
        match &self.source {
            Source::Qnm { model, .. } => {
                let gamma0 = self.gamma0()?;
                let mut m = model.clone();
                m.alpha_g = combo.alpha_g.expect("qnm combos carry alpha_g");
                let n = m.n_emitters();
                let dephase = self.run.gamma_dephase * gamma0;
                let pump = combo.pump.expect("qnm combos carry a pump") * gamma0;
                Ok(m.rate_set(self.run.omega0_ev, &vec![dephase; n], &vec![pump; n])?)
            }
            Source::Rates { rates, .. } => Ok(rates.clone()),
        }
    }

    /// Per-emitter detection amplitudes for the optional weighted spectrum
    /// column, when the medium block provides a detector amplitude.
    pub fn detector_weights(&self) -> Option<Vec<C64>> {
        match &self.source {
            Source::Qnm { model, .. } => model.detector_amp.map(|fd| {
                model
                    .mode_amp
                    .iter()
                    .zip(&model.dipole_scale)
                    .map(|(f, s)| fd * f * *s)
                    .collect()
            }),
            Source::Rates { .. } => None,
        }
    }

    /// Initial density matrix on the full Hilbert space.
    pub fn initial_density(&self) -> Result<Array2<C64>, CliError> {
        use amped_core::bloch::{BareState, DressedState};
        let n = self.n_emitters();
        if let Initial::Custom(rho) = &self.run.initial {
            let d = 1usize << n;
            if rho.dim() != (d, d) {
                return Err(validation(format!(
                    "`run.initial_matrix` must be {d}x{d} for {n} emitters, got {:?}",
                    rho.dim()
                )));
            }
            return Ok(rho.clone());
        }
        if n != 2 {
            return Err(validation(format!(
                "named initial states are defined for 2 emitters, scenario has {n}; \
                 use `initial = \"custom\"` with an explicit matrix"
            )));
        }
        let bare = match self.run.initial {
            Initial::Ground => BareState::ground(),
            Initial::ExcitedA => BareState::excited_a(),
            Initial::Plus => DressedState::plus().to_bare(),
            Initial::Minus => DressedState::minus().to_bare(),
            Initial::Custom(_) => unreachable!(),
        };
        Ok(bare.to_density())
    }

    /// Header lines documenting the resolved scenario, one `key = value`
    /// per line in valid TOML syntax.
    pub fn echo_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        match &self.source {
            Source::Qnm { model, anchors } => {
                out.push("[qnm]".to_string());
                out.push(format!("omega_c_ev = {}", fmt_f(model.omega_c)));
                out.push(format!("gamma_c_ev = {}", fmt_f(model.gamma_c)));
                out.push(format!(
                    "mode_amp = [{}]",
                    model.mode_amp.iter().map(|z| fmt_f(z.re)).collect::<Vec<_>>().join(", ")
                ));
                out.push(format!("gain_overlap = {}", fmt_f(model.gain_overlap)));
                out.push(format!("n_b = {}", fmt_f(model.n_b)));
                out.push(format!(
                    "dipole_scale = [{}]",
                    model.dipole_scale.iter().map(|s| fmt_f(*s)).collect::<Vec<_>>().join(", ")
                ));
                if let Some(fd) = model.detector_amp {
                    out.push(format!("detector_amp = {}", fmt_f(fd.re)));
                }
                if let Some(anchors) = anchors {
                    out.push(format!(
                        "anchors = [{}]",
                        anchors
                            .iter()
                            .map(|(w, t)| format!("[{}, {}]", fmt_f(*w), fmt_f(*t)))
                            .collect::<Vec<_>>()
                            .join(", ")
                    ));
                    out.push("# mode_amp above is already calibrated to the anchors".to_string());
                }
            }
            Source::Rates { rates, gamma_ref } => {
                out.push("[rates]".to_string());
                out.push(format!("omega0_ev = {}", fmt_f(rates.omega0)));
                for (name, m) in [
                    ("gamma_down", &rates.gamma_down),
                    ("gamma_up", &rates.gamma_up),
                    ("delta_down", &rates.delta_down),
                    ("delta_up", &rates.delta_up),
                ] {
                    out.push(format!("{name} = {}", fmt_matrix(m)));
                }
                out.push(format!("gamma_dephase = {}", fmt_list(&rates.gamma_dephase)));
                out.push(format!("gamma_pump = {}", fmt_list(&rates.gamma_pump)));
                out.push(format!("gamma_ref = {}", fmt_f(*gamma_ref)));
            }
        }
        let r = &self.run;
        out.push("[run]".to_string());
        if let Some(mode) = r.mode {
            out.push(format!("mode = \"{}\"", mode.label()));
        }
        if matches!(self.source, Source::Qnm { .. }) {
            out.push(format!("omega0_ev = {}", fmt_f(r.omega0_ev)));
            out.push(format!("alpha_g = {}", fmt_list(&r.alpha_g)));
            out.push(format!("gamma_dephase = {}", fmt_f(r.gamma_dephase)));
            out.push(format!("gamma_pump = {}", fmt_list(&r.gamma_pump)));
        }
        out.push(format!(
            "include_cross_pump = {}",
            if r.include_cross_pump.len() == 2 {
                "\"both\"".to_string()
            } else {
                r.include_cross_pump[0].to_string()
            }
        ));
        out.push(format!("initial = \"{}\"", r.initial.label()));
        if let Initial::Custom(rho) = &r.initial {
            let rows: Vec<String> = rho
                .rows()
                .into_iter()
                .map(|row| {
                    let cells: Vec<String> = row
                        .iter()
                        .map(|z| format!("[{}, {}]", fmt_f(z.re), fmt_f(z.im)))
                        .collect();
                    format!("[{}]", cells.join(", "))
                })
                .collect();
            out.push(format!("initial_matrix = [{}]", rows.join(", ")));
        }
        out.push(format!("t_max = {}", fmt_f(r.t_max)));
        out.push(format!("n_points = {}", r.n_points));
        out.push(format!("negativity = {}", r.negativity));
        out.push(format!("raw_time = {}", r.raw_time));
        out.push(format!("omega_grid_half_width = {}", fmt_f(r.omega_grid_half_width)));
        out.push(format!("omega_grid_points = {}", r.omega_grid_points));
        out.push(format!("omega_min_ev = {}", fmt_f(r.omega_min_ev)));
        out.push(format!("omega_max_ev = {}", fmt_f(r.omega_max_ev)));
        out.push(format!("n_omega = {}", r.n_omega));
        out.push(format!("plateau_t_min = {}", fmt_f(r.plateau_t_min)));
        out.push(format!("plateau_t_max = {}", fmt_f(r.plateau_t_max)));
        out.push(format!("method = \"{}\"", r.method.label()));
        out
    }
}

/// Shortest round-trip float formatting, with a `.0` forced onto integral
/// values so the echo stays valid TOML.
pub fn fmt_f(x: f64) -> String {
    let s = format!("{x}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("nan") {
        s
    } else {
        format!("{s}.0")
    }
}

fn fmt_list(xs: &[f64]) -> String {
    format!("[{}]", xs.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(", "))
}

fn fmt_matrix(m: &Array2<f64>) -> String {
    let rows: Vec<String> = m
        .rows()
        .into_iter()
        .map(|r| format!("[{}]", r.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", rows.join(", "))
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a float",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

fn as_table<'v>(v: &'v Value, path: &str) -> Result<&'v toml::map::Map<String, Value>, CliError> {
    v.as_table()
        .ok_or_else(|| validation(format!("`{path}` must be a table, got {}", type_name(v))))
}

fn check_keys(
    table: &toml::map::Map<String, Value>,
    prefix: &str,
    allowed: &[&str],
    strict: bool,
) -> Result<(), CliError> {
    let allowed_set: BTreeSet<&str> = allowed.iter().copied().collect();
    for key in table.keys() {
        if !allowed_set.contains(key.as_str()) {
            let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
            let msg =
                format!("unknown key `{path}` (expected one of: {})", allowed.join(", "));
            if strict {
                return Err(validation(msg));
            }
            log::warn!("{msg} (ignored in lenient mode)");
        }
    }
    Ok(())
}

fn get_f64(
    table: &toml::map::Map<String, Value>,
    prefix: &str,
    key: &str,
) -> Result<Option<f64>, CliError> {
    match table.get(key) {
        None => Ok(None),
        Some(v) => Ok(Some(value_f64(v, &format!("{prefix}.{key}"))?)),
    }
}

fn value_f64(v: &Value, path: &str) -> Result<f64, CliError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(validation(format!("`{path}` must be a number, got {}", type_name(v)))),
    }
}

fn get_usize(
    table: &toml::map::Map<String, Value>,
    prefix: &str,
    key: &str,
) -> Result<Option<usize>, CliError> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
        Some(v) => Err(validation(format!(
            "`{prefix}.{key}` must be a non-negative integer, got {}",
            type_name(v)
        ))),
    }
}

fn get_bool(
    table: &toml::map::Map<String, Value>,
    prefix: &str,
    key: &str,
) -> Result<Option<bool>, CliError> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Boolean(b)) => Ok(Some(*b)),
        Some(v) => Err(validation(format!(
            "`{prefix}.{key}` must be a boolean, got {}",
            type_name(v)
        ))),
    }
}

fn get_string(
    table: &toml::map::Map<String, Value>,
    prefix: &str,
    key: &str,
) -> Result<Option<String>, CliError> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(v) => Err(validation(format!(
            "`{prefix}.{key}` must be a string, got {}",
            type_name(v)
        ))),
    }
}

fn get_f64_list(
    table: &toml::map::Map<String, Value>,
    prefix: &str,
    key: &str,
) -> Result<Option<Vec<f64>>, CliError> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Array(items)) => {
            let path = format!("{prefix}.{key}");
            items
                .iter()
                .enumerate()
                .map(|(i, v)| value_f64(v, &format!("{path}[{i}]")))
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
        }
        Some(v) => Err(validation(format!(
            "`{prefix}.{key}` must be an array of numbers, got {}",
            type_name(v)
        ))),
    }
}

/// A scalar is promoted to a one-element list; used for sweep parameters.
fn get_f64_scalar_or_list(
    table: &toml::map::Map<String, Value>,
    prefix: &str,
    key: &str,
) -> Result<Option<Vec<f64>>, CliError> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Array(_)) => get_f64_list(table, prefix, key),
        Some(v) => Ok(Some(vec![value_f64(v, &format!("{prefix}.{key}"))?])),
    }
}

fn get_matrix(
    table: &toml::map::Map<String, Value>,
    prefix: &str,
    key: &str,
) -> Result<Option<Array2<f64>>, CliError> {
    let path = format!("{prefix}.{key}");
    match table.get(key) {
        None => Ok(None),
        Some(Value::Array(rows)) => {
            let mut data: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                match row {
                    Value::Array(cells) => {
                        let r = cells
                            .iter()
                            .enumerate()
                            .map(|(j, v)| value_f64(v, &format!("{path}[{i}][{j}]")))
                            .collect::<Result<Vec<_>, _>>()?;
                        data.push(r);
                    }
                    v => {
                        return Err(validation(format!(
                            "`{path}[{i}]` must be an array row, got {}",
                            type_name(v)
                        )))
                    }
                }
            }
            let n = data.len();
            if n == 0 || data.iter().any(|r| r.len() != n) {
                return Err(validation(format!("`{path}` must be a square matrix")));
            }
            let flat: Vec<f64> = data.into_iter().flatten().collect();
            Ok(Some(Array2::from_shape_vec((n, n), flat).expect("checked square")))
        }
        Some(v) => Err(validation(format!(
            "`{path}` must be an array of array rows, got {}",
            type_name(v)
        ))),
    }
}

fn parse_qnm(
    table: &toml::map::Map<String, Value>,
    strict: bool,
) -> Result<Source, CliError> {
    check_keys(
        table,
        "qnm",
        &[
            "omega_c_ev",
            "gamma_c_ev",
            "mode_amp",
            "gain_overlap",
            "n_b",
            "dipole_scale",
            "detector_amp",
            "anchors",
        ],
        strict,
    )?;
    let require = |key: &str| -> Result<f64, CliError> {
        get_f64(table, "qnm", key)?
            .ok_or_else(|| validation(format!("`qnm.{key}` is required")))
    };
    let omega_c = require("omega_c_ev")?;
    let gamma_c = require("gamma_c_ev")?;
    let gain_overlap = require("gain_overlap")?;
    let n_b = require("n_b")?;
    let mode_amp = get_f64_list(table, "qnm", "mode_amp")?
        .ok_or_else(|| validation("`qnm.mode_amp` is required"))?;
    if mode_amp.is_empty() {
        return Err(validation("`qnm.mode_amp` must not be empty"));
    }
    let dipole_scale =
        get_f64_list(table, "qnm", "dipole_scale")?.unwrap_or_else(|| vec![1.0; mode_amp.len()]);
    let detector_amp = get_f64(table, "qnm", "detector_amp")?.map(|x| C64::new(x, 0.0));

    let anchors = match table.get("anchors") {
        None => None,
        Some(Value::Array(items)) => {
            let mut pairs = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let pair = match item {
                    Value::Array(p) if p.len() == 2 => (
                        value_f64(&p[0], &format!("qnm.anchors[{i}][0]"))?,
                        value_f64(&p[1], &format!("qnm.anchors[{i}][1]"))?,
                    ),
                    v => {
                        return Err(validation(format!(
                            "`qnm.anchors[{i}]` must be an [omega_ev, purcell] pair, got {}",
                            type_name(v)
                        )))
                    }
                };
                pairs.push(pair);
            }
            Some(pairs)
        }
        Some(v) => {
            return Err(validation(format!(
                "`qnm.anchors` must be an array of [omega_ev, purcell] pairs, got {}",
                type_name(v)
            )))
        }
    };

    let model = QnmModel {
        omega_c,
        gamma_c,
        mode_amp: mode_amp.iter().map(|x| C64::new(*x, 0.0)).collect(),
        gain_overlap,
        // The gain strength is a run parameter; combos overwrite it.
        alpha_g: 0.0,
        n_b,
        dipole_scale,
        detector_amp,
    };
    model.validate().map_err(CliError::from)?;
    let model = match &anchors {
        Some(a) => model.calibrate(a).map_err(CliError::from)?,
        None => model,
    };
    Ok(Source::Qnm { model, anchors })
}

fn parse_rates(
    table: &toml::map::Map<String, Value>,
    strict: bool,
) -> Result<Source, CliError> {
    check_keys(
        table,
        "rates",
        &[
            "omega0_ev",
            "gamma_down",
            "gamma_up",
            "delta_down",
            "delta_up",
            "gamma_dephase",
            "gamma_pump",
            "gamma_ref",
        ],
        strict,
    )?;
    let require_m = |key: &str| -> Result<Array2<f64>, CliError> {
        get_matrix(table, "rates", key)?
            .ok_or_else(|| validation(format!("`rates.{key}` is required")))
    };
    let gamma_down = require_m("gamma_down")?;
    let n = gamma_down.nrows();
    let gamma_up = get_matrix(table, "rates", "gamma_up")?.unwrap_or_else(|| Array2::zeros((n, n)));
    let delta_down =
        get_matrix(table, "rates", "delta_down")?.unwrap_or_else(|| Array2::zeros((n, n)));
    let delta_up = get_matrix(table, "rates", "delta_up")?.unwrap_or_else(|| Array2::zeros((n, n)));
    let gamma_dephase =
        get_f64_list(table, "rates", "gamma_dephase")?.unwrap_or_else(|| vec![0.0; n]);
    let gamma_pump = get_f64_list(table, "rates", "gamma_pump")?.unwrap_or_else(|| vec![0.0; n]);
    let omega0 = get_f64(table, "rates", "omega0_ev")?.unwrap_or(1.0);
    let rates = RateSet {
        omega0,
        gamma_down,
        gamma_up,
        delta_down,
        delta_up,
        gamma_dephase,
        gamma_pump,
    };
    rates.validate().map_err(CliError::from)?;
    let gamma_ref = match get_f64(table, "rates", "gamma_ref")? {
        Some(g) if g > 0.0 => g,
        Some(g) => {
            return Err(validation(format!("`rates.gamma_ref` must be > 0, got {g}")))
        }
        None => rates.gamma_down[(0, 0)],
    };
    if !(gamma_ref > 0.0) {
        return Err(validation(
            "`rates.gamma_down[0][0]` is zero; set `rates.gamma_ref` to normalize axes".to_string(),
        ));
    }
    Ok(Source::Rates { rates, gamma_ref })
}

fn parse_run(
    table: &toml::map::Map<String, Value>,
    source: &Source,
    strict: bool,
) -> Result<RunConfig, CliError> {
    check_keys(
        table,
        "run",
        &[
            "mode",
            "omega0_ev",
            "alpha_g",
            "gamma_dephase",
            "gamma_pump",
            "include_cross_pump",
            "initial",
            "initial_matrix",
            "t_max",
            "n_points",
            "negativity",
            "raw_time",
            "omega_grid_half_width",
            "omega_grid_points",
            "omega_min_ev",
            "omega_max_ev",
            "n_omega",
            "plateau_t_min",
            "plateau_t_max",
            "method",
        ],
        strict,
    )?;

    let is_qnm = matches!(source, Source::Qnm { .. });
    // Rate overrides already carry frequency, dephasing, pump, and gain
    // inside the [rates] block; the run-level sweep keys only make sense
    // with a medium model behind them.
    if !is_qnm {
        for key in ["omega0_ev", "alpha_g", "gamma_dephase", "gamma_pump"] {
            if table.contains_key(key) {
                return Err(validation(format!(
                    "`run.{key}` requires a [qnm] block; a [rates] block fixes it directly"
                )));
            }
        }
    }

    let mode = match get_string(table, "run", "mode")? {
        Some(s) => Some(Mode::parse(&s)?),
        None => None,
    };
    let omega0_ev = match source {
        Source::Qnm { .. } => get_f64(table, "run", "omega0_ev")?
            .ok_or_else(|| validation("`run.omega0_ev` is required with a [qnm] block"))?,
        Source::Rates { rates, .. } => rates.omega0,
    };
    let alpha_g = if is_qnm {
        get_f64_list(table, "run", "alpha_g")?.unwrap_or_else(|| vec![0.0])
    } else {
        Vec::new()
    };
    let gamma_dephase = if is_qnm { get_f64(table, "run", "gamma_dephase")?.unwrap_or(0.0) } else { 0.0 };
    let gamma_pump = if is_qnm {
        get_f64_scalar_or_list(table, "run", "gamma_pump")?.unwrap_or_else(|| vec![0.0])
    } else {
        Vec::new()
    };

    let include_cross_pump = match table.get("include_cross_pump") {
        None => vec![true],
        Some(Value::Boolean(b)) => vec![*b],
        Some(Value::String(s)) if s == "both" => vec![true, false],
        Some(v) => {
            return Err(validation(format!(
                "`run.include_cross_pump` must be a boolean or \"both\", got {}",
                type_name(v)
            )))
        }
    };

    let initial_name = get_string(table, "run", "initial")?.unwrap_or_else(|| "e_a".to_string());
    let initial = match initial_name.as_str() {
        "ground" => Initial::Ground,
        "e_a" => Initial::ExcitedA,
        "plus" => Initial::Plus,
        "minus" => Initial::Minus,
        "custom" => {
            let rho = parse_initial_matrix(table)?
                .ok_or_else(|| validation("`initial = \"custom\"` needs `run.initial_matrix`"))?;
            Initial::Custom(rho)
        }
        other => {
            return Err(validation(format!(
                "`run.initial` must be one of ground, e_a, plus, minus, custom; got `{other}`"
            )))
        }
    };
    if table.contains_key("initial_matrix") && !matches!(initial, Initial::Custom(_)) {
        return Err(validation(
            "`run.initial_matrix` is only read with `initial = \"custom\"`".to_string(),
        ));
    }

    let method = match get_string(table, "run", "method")?.as_deref() {
        None | Some("resolvent") => Method::Resolvent,
        Some("time-domain") => Method::TimeDomain,
        Some(other) => {
            return Err(validation(format!(
                "`run.method` must be `resolvent` or `time-domain`, got `{other}`"
            )))
        }
    };

    Ok(RunConfig {
        mode,
        omega0_ev,
        alpha_g,
        gamma_dephase,
        gamma_pump,
        include_cross_pump,
        initial,
        t_max: get_f64(table, "run", "t_max")?.unwrap_or(10.0),
        n_points: get_usize(table, "run", "n_points")?.unwrap_or(501),
        negativity: get_bool(table, "run", "negativity")?.unwrap_or(false),
        raw_time: get_bool(table, "run", "raw_time")?.unwrap_or(false),
        omega_grid_half_width: get_f64(table, "run", "omega_grid_half_width")?.unwrap_or(4.0),
        omega_grid_points: get_usize(table, "run", "omega_grid_points")?.unwrap_or(1201),
        omega_min_ev: get_f64(table, "run", "omega_min_ev")?.unwrap_or(1.05),
        omega_max_ev: get_f64(table, "run", "omega_max_ev")?.unwrap_or(1.65),
        n_omega: get_usize(table, "run", "n_omega")?.unwrap_or(221),
        plateau_t_min: get_f64(table, "run", "plateau_t_min")?.unwrap_or(3.0),
        plateau_t_max: get_f64(table, "run", "plateau_t_max")?.unwrap_or(10.0),
        method,
    })
}

/// `initial_matrix` rows hold `[re, im]` cell pairs. The matrix must be
/// Hermitian with unit trace; positivity is left to the evolution's own
/// checks.
fn parse_initial_matrix(
    table: &toml::map::Map<String, Value>,
) -> Result<Option<Array2<C64>>, CliError> {
    let rows = match table.get("initial_matrix") {
        None => return Ok(None),
        Some(Value::Array(rows)) => rows,
        Some(v) => {
            return Err(validation(format!(
                "`run.initial_matrix` must be an array of rows, got {}",
                type_name(v)
            )))
        }
    };
    let n = rows.len();
    let mut data = Vec::with_capacity(n * n);
    for (i, row) in rows.iter().enumerate() {
        let cells = match row {
            Value::Array(cells) if cells.len() == n => cells,
            _ => {
                return Err(validation(format!(
                    "`run.initial_matrix[{i}]` must be a row of {n} [re, im] pairs"
                )))
            }
        };
        for (j, cell) in cells.iter().enumerate() {
            match cell {
                Value::Array(p) if p.len() == 2 => {
                    let re = value_f64(&p[0], &format!("run.initial_matrix[{i}][{j}][0]"))?;
                    let im = value_f64(&p[1], &format!("run.initial_matrix[{i}][{j}][1]"))?;
                    data.push(C64::new(re, im));
                }
                v => {
                    return Err(validation(format!(
                        "`run.initial_matrix[{i}][{j}]` must be an [re, im] pair, got {}",
                        type_name(v)
                    )))
                }
            }
        }
    }
    let rho = Array2::from_shape_vec((n, n), data).expect("checked rectangular");
    let mut herm_err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            herm_err = herm_err.max((rho[(i, j)] - rho[(j, i)].conj()).norm());
        }
    }
    if herm_err > 1e-12 {
        return Err(validation(format!(
            "`run.initial_matrix` must be Hermitian (worst asymmetry {herm_err:.3e})"
        )));
    }
    let tr: C64 = (0..n).map(|i| rho[(i, i)]).sum();
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(validation(format!("`run.initial_matrix` must have unit trace, got {tr}")));
    }
    Ok(Some(rho))
}
