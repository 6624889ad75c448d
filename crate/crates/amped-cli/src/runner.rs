//! Mode execution: turn a loaded scenario into CSV artifacts.
//!
//! Every file starts with the resolved scenario echoed as `# `-prefixed
//! TOML, followed by the normalization constant and the parameter point the
//! file belongs to, so a single artifact is enough to rerun the case. Files
//! are written atomically (tmp file + rename) and all formatting is
//! shortest-round-trip, which makes byte-identical reruns the expected
//! behavior rather than a lucky accident.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use amped_core::bloch::BareState;
use amped_core::liouvillian::LindbladModel;
use amped_core::observables::{
    default_delta_grid, detect_peaks, log_negativity, spectrum, SpectrumMethod, SpectrumOptions,
};
use amped_core::ode::OdeOptions;
use amped_core::qnm::QnmModel;

use crate::error::{validation, CliError};
use crate::scenario::{fmt_f, Combo, Method, Mode, Scenario, Source};
use crate::table::read_rate_table;

/// Relative prominence floor below which a local maximum is not reported.
const PEAK_PROMINENCE_REL: f64 = 1e-3;

pub fn execute(mode: Mode, scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out_dir)?;
    match mode {
        Mode::Rates => run_rates(scenario, out_dir),
        Mode::Dynamics => run_dynamics(scenario, out_dir),
        Mode::Steady => run_steady(scenario, out_dir),
        Mode::Spectrum => run_spectrum(scenario, out_dir),
        Mode::Sweep => run_sweep(scenario, out_dir),
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Resolved-scenario header plus per-file context lines, all as comments.
fn header(scenario: &Scenario, extra: &[String]) -> String {
    let mut out = String::from("# amped scenario (resolved)\n");
    for line in scenario.echo_lines() {
        out.push_str("# ");
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("#\n");
    for line in extra {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn combo_line(combo: &Combo) -> String {
    let mut s = String::from("combo:");
    if let Some(a) = combo.alpha_g {
        let _ = write!(s, " alpha_g = {}", fmt_f(a));
    }
    if let Some(p) = combo.pump {
        let _ = write!(s, " gamma_pump = {}", fmt_f(p));
    }
    let _ = write!(s, " include_cross_pump = {}", combo.cross_pump);
    s
}

fn time_unit_line(scenario: &Scenario) -> String {
    if scenario.run.raw_time {
        "time unit = raw (inverse rate-set units)".to_string()
    } else {
        "time unit = 1/Gamma(0)".to_string()
    }
}

fn qnm_model(scenario: &Scenario, mode: Mode) -> Result<&QnmModel, CliError> {
    match &scenario.source {
        Source::Qnm { model, .. } => Ok(model),
        Source::Rates { .. } => Err(validation(format!(
            "{} mode sweeps the medium-derived rates and needs a [qnm] block",
            mode.label()
        ))),
    }
}

fn require_two_emitters(scenario: &Scenario, what: &str) -> Result<(), CliError> {
    let n = scenario.n_emitters();
    if n != 2 {
        return Err(validation(format!(
            "{what} columns are defined for two emitters, scenario has {n}"
        )));
    }
    Ok(())
}

fn model_for(scenario: &Scenario, combo: &Combo) -> Result<LindbladModel, CliError> {
    let rates = scenario.rate_set_for(combo)?;
    Ok(LindbladModel::new(rates, combo.cross_pump)?)
}

/// Frequency sweep of the seven headline rate columns, one file per gain
/// strength. Values are reported without building a Lindblad generator, so
/// the sweep can cross regimes where the collective rate matrices stop
/// being valid dissipators.
fn run_rates(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let model = qnm_model(scenario, Mode::Rates)?;
    require_two_emitters(scenario, "rate-sweep")?;
    let r = &scenario.run;
    let omegas = linspace(r.omega_min_ev, r.omega_max_ev, r.n_omega);
    let mut files = Vec::new();
    for &alpha in &r.alpha_g {
        let m = QnmModel { alpha_g: alpha, ..model.clone() };
        let mut body = header(
            scenario,
            &[
                format!("combo: alpha_g = {}", fmt_f(alpha)),
                "rates in background-Purcell units of the sweep frequency".to_string(),
            ],
        );
        body.push_str(
            "omega_eV,gamma_down_aa,gamma_up_aa,gamma_down_ab,gamma_up_ab,\
             delta_down_ab,delta_up_ab\n",
        );
        for &w in &omegas {
            let cols = [
                w,
                m.gamma_down_total(w, 0, 0),
                m.gamma_up(w, 0, 0),
                m.gamma_down_total(w, 0, 1),
                m.gamma_up(w, 0, 1),
                m.delta_down_total(w, 0, 1),
                m.delta_up(w, 0, 1),
            ];
            push_row(&mut body, &cols);
        }
        let path = out_dir.join(format!("rates_a{alpha}.csv"));
        write_atomic(&path, &body)?;
        files.push(path);
    }
    Ok(files)
}

/// Density-matrix trajectory per parameter point.
fn run_dynamics(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    require_two_emitters(scenario, "trajectory")?;
    let r = &scenario.run;
    let gamma0 = scenario.gamma0()?;
    let rho0 = scenario.initial_density()?;
    let t_cfg = linspace(0.0, r.t_max, r.n_points);
    let t_abs: Vec<f64> = t_cfg.iter().map(|t| t / gamma0).collect();
    let mut files = Vec::new();
    for combo in scenario.combos() {
        let model = model_for(scenario, &combo)?;
        model.assert_stable()?;
        let states = model.evolve(&rho0, &t_abs, &OdeOptions::default())?;
        let mut body = header(
            scenario,
            &[
                format!("gamma0 = {}", fmt_f(gamma0)),
                combo_line(&combo),
                time_unit_line(scenario),
            ],
        );
        body.push_str(
            "t,rho11,rho22,rho33,rho44,re_rho23,im_rho23,rho_aa,rho_bb,rho_pp,rho_mm,rho_tt",
        );
        if r.negativity {
            body.push_str(",negativity");
        }
        body.push('\n');
        for (i, rho) in states.iter().enumerate() {
            let bare = BareState::from_density(rho);
            let dressed = bare.to_dressed();
            let t = if r.raw_time { t_abs[i] } else { t_cfg[i] };
            let mut cols = vec![
                t,
                bare.rho11,
                bare.rho22,
                bare.rho33,
                bare.rho44,
                bare.rho23.re,
                bare.rho23.im,
                bare.pop_a(),
                bare.pop_b(),
                dressed.rho_pp,
                dressed.rho_mm,
                dressed.rho_tt,
            ];
            if r.negativity {
                cols.push(log_negativity(rho, 2, &[0])?);
            }
            push_row(&mut body, &cols);
        }
        let path = out_dir.join(format!("dynamics_{}.csv", combo.tag()));
        write_atomic(&path, &body)?;
        files.push(path);
    }
    Ok(files)
}

/// Stationary state per parameter point, one row each.
fn run_steady(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    require_two_emitters(scenario, "stationary-state")?;
    let r = &scenario.run;
    let gamma0 = scenario.gamma0()?;
    let is_qnm = matches!(scenario.source, Source::Qnm { .. });
    let mut body = header(
        scenario,
        &[format!("gamma0 = {}", fmt_f(gamma0)), "one row per parameter point".to_string()],
    );
    if is_qnm {
        body.push_str("alpha_g,gamma_pump,");
    }
    body.push_str("include_cross_pump,rho_gg,rho_pp,rho_mm,rho_tt,re_rho_pm,im_rho_pm,rho_aa,rho_bb");
    if r.negativity {
        body.push_str(",negativity");
    }
    body.push('\n');
    for combo in scenario.combos() {
        let model = model_for(scenario, &combo)?;
        let ss = model.steady_state()?;
        let bare = BareState::from_density(&ss);
        let dressed = bare.to_dressed();
        let mut cols = Vec::new();
        if is_qnm {
            cols.push(combo.alpha_g.expect("qnm combo"));
            cols.push(combo.pump.expect("qnm combo"));
        }
        cols.extend_from_slice(&[
            if combo.cross_pump { 1.0 } else { 0.0 },
            dressed.rho_gg,
            dressed.rho_pp,
            dressed.rho_mm,
            dressed.rho_tt,
            dressed.rho_pm.re,
            dressed.rho_pm.im,
            bare.pop_a(),
            bare.pop_b(),
        ]);
        if r.negativity {
            cols.push(log_negativity(&ss, 2, &[0])?);
        }
        push_row(&mut body, &cols);
    }
    let path = out_dir.join("steady.csv");
    write_atomic(&path, &body)?;
    Ok(vec![path])
}

/// Stationary emission spectrum and its detected lines per parameter point.
fn run_spectrum(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    require_two_emitters(scenario, "spectrum")?;
    let r = &scenario.run;
    let gamma0 = scenario.gamma0()?;
    let weights = scenario.detector_weights();
    let method = match r.method {
        Method::Resolvent => SpectrumMethod::Resolvent,
        Method::TimeDomain => SpectrumMethod::TimeDomain,
    };
    let mut files = Vec::new();
    for combo in scenario.combos() {
        let model = model_for(scenario, &combo)?;
        let ss = model.steady_state()?;
        let delta = default_delta_grid(model.rates(), r.omega_grid_half_width, r.omega_grid_points);
        let series = spectrum(
            &model,
            &ss,
            &delta,
            method,
            &SpectrumOptions::default(),
            weights.as_deref(),
        )?;
        // Detuning axis in output units; detection runs on the same axis so
        // reported positions and widths match the file.
        let axis: Vec<f64> = if r.raw_time {
            delta.clone()
        } else {
            delta.iter().map(|d| d / gamma0).collect()
        };
        let axis_name = if r.raw_time { "delta_omega" } else { "delta_omega_over_Gamma0" };

        let mut body = header(
            scenario,
            &[
                format!("gamma0 = {}", fmt_f(gamma0)),
                combo_line(&combo),
                format!("spectrum method = {}", r.method.label()),
                time_unit_line(scenario),
            ],
        );
        let _ = write!(body, "{axis_name},S_total,S_aa,S_ab_cross");
        if series.weighted.is_some() {
            body.push_str(",S_detector");
        }
        body.push('\n');
        for i in 0..axis.len() {
            let mut cols = vec![axis[i], series.total[i], series.diagonal[i], series.cross[i]];
            if let Some(w) = &series.weighted {
                cols.push(w[i]);
            }
            push_row(&mut body, &cols);
        }
        let path = out_dir.join(format!("spectrum_{}.csv", combo.tag()));
        write_atomic(&path, &body)?;
        files.push(path);

        let peaks = detect_peaks(&axis, &series.total, PEAK_PROMINENCE_REL);
        let mut pbody = header(
            scenario,
            &[
                format!("gamma0 = {}", fmt_f(gamma0)),
                combo_line(&combo),
                format!("lines detected on S_total at relative prominence {PEAK_PROMINENCE_REL}"),
                format!("positions and widths share the {axis_name} axis"),
            ],
        );
        pbody.push_str("position,height,prominence,fwhm\n");
        for p in &peaks {
            push_row(&mut pbody, &[p.position, p.height, p.prominence, p.fwhm]);
        }
        let ppath = out_dir.join(format!("spectrum_{}_peaks.csv", combo.tag()));
        write_atomic(&ppath, &pbody)?;
        files.push(ppath);
    }
    Ok(files)
}

/// One summary row per parameter point: plateau and stationary populations.
fn run_sweep(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    require_two_emitters(scenario, "sweep")?;
    let r = &scenario.run;
    let gamma0 = scenario.gamma0()?;
    let rho0 = scenario.initial_density()?;
    let t_cfg = linspace(0.0, r.t_max, r.n_points);
    let t_abs: Vec<f64> = t_cfg.iter().map(|t| t / gamma0).collect();
    let window: Vec<usize> = (0..t_cfg.len())
        .filter(|&i| t_cfg[i] >= r.plateau_t_min && t_cfg[i] <= r.plateau_t_max)
        .collect();
    if window.is_empty() {
        return Err(validation(format!(
            "no trajectory samples fall in the plateau window [{}, {}]",
            r.plateau_t_min, r.plateau_t_max
        )));
    }
    let is_qnm = matches!(scenario.source, Source::Qnm { .. });
    let mut body = header(
        scenario,
        &[
            format!("gamma0 = {}", fmt_f(gamma0)),
            format!(
                "plateau_rho_aa averages rho_aa over t in [{}, {}] (units 1/Gamma(0))",
                fmt_f(r.plateau_t_min),
                fmt_f(r.plateau_t_max)
            ),
        ],
    );
    if is_qnm {
        body.push_str("alpha_g,gamma_pump,");
    }
    body.push_str(
        "include_cross_pump,gamma_down_aa_over_gamma0,gamma_up_aa_over_gamma0,\
         plateau_rho_aa,steady_rho_aa,steady_rho_tt\n",
    );
    for combo in scenario.combos() {
        let model = model_for(scenario, &combo)?;
        model.assert_stable()?;
        let states = model.evolve(&rho0, &t_abs, &OdeOptions::default())?;
        let plateau = window
            .iter()
            .map(|&i| BareState::from_density(&states[i]).pop_a())
            .sum::<f64>()
            / window.len() as f64;
        let ss = model.steady_state()?;
        let bare = BareState::from_density(&ss);
        let mut cols = Vec::new();
        if is_qnm {
            cols.push(combo.alpha_g.expect("qnm combo"));
            cols.push(combo.pump.expect("qnm combo"));
        }
        cols.extend_from_slice(&[
            if combo.cross_pump { 1.0 } else { 0.0 },
            model.rates().gamma_down[(0, 0)] / gamma0,
            model.rates().gamma_up[(0, 0)] / gamma0,
            plateau,
            bare.pop_a(),
            bare.to_dressed().rho_tt,
        ]);
        push_row(&mut body, &cols);
    }
    let path = out_dir.join("sweep.csv");
    write_atomic(&path, &body)?;
    Ok(vec![path])
}

/// Check an external rate table against the scenario's medium, column by
/// column. Deviations are relative to the column's own scale, so a sign
/// crossing in a shift column cannot blow up the report.
pub fn run_compare(
    scenario: &Scenario,
    table_path: &Path,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out_dir)?;
    let model = qnm_model(scenario, Mode::Rates)?;
    require_two_emitters(scenario, "rate-table")?;
    let r = &scenario.run;
    if r.alpha_g.len() != 1 {
        return Err(validation(format!(
            "compare needs exactly one `run.alpha_g` entry, got {}",
            r.alpha_g.len()
        )));
    }
    let m = QnmModel { alpha_g: r.alpha_g[0], ..model.clone() };
    let table = read_rate_table(table_path)?;

    let expected: [(&str, Box<dyn Fn(f64) -> f64>); 6] = [
        ("gamma_down_aa", Box::new(|w| m.gamma_down_total(w, 0, 0))),
        ("gamma_up_aa", Box::new(|w| m.gamma_up(w, 0, 0))),
        ("gamma_down_ab", Box::new(|w| m.gamma_down_total(w, 0, 1))),
        ("gamma_up_ab", Box::new(|w| m.gamma_up(w, 0, 1))),
        ("delta_down_ab", Box::new(|w| m.delta_down_total(w, 0, 1))),
        ("delta_up_ab", Box::new(|w| m.delta_up(w, 0, 1))),
    ];

    let mut body = header(
        scenario,
        &[
            format!("table = {}", table_path.display()),
            format!("combo: alpha_g = {}", fmt_f(r.alpha_g[0])),
            "max_rel_dev is relative to the largest expected magnitude per column".to_string(),
        ],
    );
    body.push_str("column,max_abs_dev,max_rel_dev,at_omega_eV\n");
    let mut summary = Vec::new();
    for (ci, (name, f)) in expected.iter().enumerate() {
        let got = &table.columns[ci];
        let exp: Vec<f64> = table.omega.iter().map(|&w| f(w)).collect();
        let scale = exp.iter().fold(0.0_f64, |s, &x| s.max(x.abs())).max(1e-300);
        let mut max_abs = 0.0_f64;
        let mut at = table.omega[0];
        for i in 0..exp.len() {
            let d = (got[i] - exp[i]).abs();
            if d > max_abs {
                max_abs = d;
                at = table.omega[i];
            }
        }
        let rel = max_abs / scale;
        body.push_str(name);
        push_row(&mut body, &[max_abs, rel, at]);
        summary.push(format!("{name}: max rel dev {rel:.3e} at omega = {} eV", fmt_f(at)));
    }
    for line in &summary {
        println!("{line}");
    }
    let path = out_dir.join("compare.csv");
    write_atomic(&path, &body)?;
    Ok(vec![path])
}

fn push_row(body: &mut String, cols: &[f64]) {
    // The first column may already carry a name prefix (compare rows).
    let joined: Vec<String> = cols.iter().map(|x| format!("{x}")).collect();
    if body.ends_with('\n') || body.is_empty() {
        body.push_str(&joined.join(","));
    } else {
        body.push(',');
        body.push_str(&joined.join(","));
    }
    body.push('\n');
}
