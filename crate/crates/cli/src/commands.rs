use std::path::Path;

use bsquant::affine_lattice::{
    is_globally_labelable, ActionBox, ChartAtlas, ChartId, LatticeError, LatticeLabel,
};
use bsquant::io::atomic_write;
use bsquant::observable::Observable;
use bsquant::pendulum::{bs_spectrum, monodromy, PendulumError};
use bsquant::prequant_grid::{dirac_default_pairs, dirac_suite, shift_flow_single_valuedness, GridError};
use bsquant::shift_ops::{apply_word, parse_word, ShiftError};
use bsquant::state_space::QuantumState;
use bsquant::tolerances::{DIRAC_EXACT_FLOOR, DIRAC_MIN_ORDER, MONODROMY_RESIDUAL_TOL, MULTIVALUED_CONTROL_MIN, SINGLE_VALUED_TOL};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

/// What a finished command reports back for the manifest.
#[derive(Debug)]
pub struct Outcome {
    pub summary: Value,
    /// File names written into the output directory.
    pub outputs: Vec<String>,
    /// Set when the command ran to completion but a check did not pass.
    pub failure: Option<String>,
}

impl Outcome {
    fn ok(summary: Value, outputs: Vec<String>) -> Self {
        Self { summary, outputs, failure: None }
    }
}

fn grid_err(e: GridError) -> CliError {
    match e {
        GridError::InvalidSpec(_)
        | GridError::Dimension { .. }
        | GridError::NotCommensurate { .. }
        | GridError::BoxTooNarrow { .. }
        | GridError::SliceNotOnGrid(_) => CliError::Config(e.to_string()),
        other => CliError::Failure(other.to_string()),
    }
}

fn pendulum_err(e: PendulumError) -> CliError {
    match e {
        PendulumError::InvalidLoop(_) | PendulumError::InvalidWindow(_) | PendulumError::NotFinite => {
            CliError::Config(e.to_string())
        }
        other => CliError::Failure(other.to_string()),
    }
}

fn is_input_error(e: &ShiftError) -> bool {
    match e {
        ShiftError::Parse(_) | ShiftError::Dimension { .. } => true,
        ShiftError::Lattice(LatticeError::UnknownChart(_) | LatticeError::Dimension { .. }) => true,
        ShiftError::Step { source, .. } => is_input_error(source),
        _ => false,
    }
}

fn shift_err(e: ShiftError) -> CliError {
    if is_input_error(&e) {
        CliError::Config(e.to_string())
    } else {
        CliError::Failure(e.to_string())
    }
}

fn write(out: &Path, name: &str, bytes: &[u8], outputs: &mut Vec<String>) -> Result<(), CliError> {
    let path = out.join(name);
    atomic_write(&path, bytes).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    info!("wrote {}", path.display());
    outputs.push(name.to_string());
    Ok(())
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serialises");
    s.push('\n');
    s
}

/// Splits `s` at commas that are not inside parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

/// Parses `f=<obs>,g=<obs>`; several pairs may be joined with `;`.
pub fn parse_pairs(spec: &str) -> Result<Vec<(String, String)>, CliError> {
    let bad = |m: String| CliError::Config(format!("malformed pair spec {spec:?}: {m}"));
    let mut out = Vec::new();
    for chunk in spec.split(';').filter(|c| !c.trim().is_empty()) {
        let (mut f, mut g) = (None, None);
        for part in split_top_level(chunk) {
            let (k, v) = part.split_once('=').ok_or_else(|| bad(format!("expected key=value in {part:?}")))?;
            let v = v.trim();
            if v.is_empty() {
                return Err(bad(format!("empty value for {}", k.trim())));
            }
            let slot = match k.trim() {
                "f" => &mut f,
                "g" => &mut g,
                other => return Err(bad(format!("unknown key {other:?}"))),
            };
            if slot.replace(v.to_string()).is_some() {
                return Err(bad(format!("repeated key {}", k.trim())));
            }
        }
        match (f, g) {
            (Some(f), Some(g)) => out.push((f, g)),
            _ => return Err(bad("both f and g are required".into())),
        }
    }
    if out.is_empty() {
        return Err(bad("no pairs given".into()));
    }
    Ok(out)
}

#[derive(Serialize)]
struct DiracReportRow {
    f: String,
    g: String,
    coarse: f64,
    fine: f64,
    order: Option<f64>,
    exact_required: bool,
    pass: bool,
}

pub fn dirac_check(cfg: &RunConfig, pairs: &[String], out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.grid_spec()?;
    let names = if pairs.is_empty() {
        dirac_default_pairs()
    } else {
        let mut v = Vec::new();
        for p in pairs {
            v.extend(parse_pairs(p)?);
        }
        v
    };
    let parse = |s: &str| Observable::parse(spec.dim, s).map_err(|e| CliError::Config(format!("{s:?}: {e}")));
    let obs = names.iter().map(|(f, g)| Ok((parse(f)?, parse(g)?))).collect::<Result<Vec<_>, CliError>>()?;
    info!("dirac check: {} pairs on {} action points", obs.len(), spec.action_points);
    let rows = dirac_suite(&spec, &obs).map_err(grid_err)?;
    let mut report = Vec::new();
    for ((f, g), ((fo, go), row)) in names.iter().zip(obs.iter().zip(&rows)) {
        let exact_required = fo.is_action_only() && go.is_action_only();
        let pass = if exact_required {
            row.coarse < DIRAC_EXACT_FLOOR && row.fine < DIRAC_EXACT_FLOOR
        } else {
            row.passes(DIRAC_MIN_ORDER)
        };
        let order = row.order.map_or("exact".to_string(), |p| format!("{p:.2}"));
        println!(
            "{:<12} {:<12} {:>10.3e} {:>10.3e} {:>6}  {}",
            f,
            g,
            row.coarse,
            row.fine,
            order,
            if pass { "ok" } else { "FAIL" }
        );
        report.push(DiracReportRow {
            f: f.clone(),
            g: g.clone(),
            coarse: row.coarse,
            fine: row.fine,
            order: row.order,
            exact_required,
            pass,
        });
    }
    let mut outputs = Vec::new();
    write(out, "dirac.json", pretty(&report).as_bytes(), &mut outputs)?;
    let failed: Vec<String> = report.iter().filter(|r| !r.pass).map(|r| format!("({}, {})", r.f, r.g)).collect();
    let summary = json!({ "pairs": report.len(), "failed": failed });
    let failure = (!failed.is_empty()).then(|| format!("Dirac check failed for {}", failed.join(" ")));
    Ok(Outcome { summary, outputs, failure })
}

pub fn shift_check(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.grid_spec()?;
    let h = spec.planck_h;
    let mut axes = Vec::new();
    let mut pass = true;
    for axis in 0..spec.dim {
        let at_h = shift_flow_single_valuedness(&spec, axis, h).map_err(grid_err)?;
        let control = shift_flow_single_valuedness(&spec, axis, 0.5 * h).map_err(grid_err)?;
        let ok = at_h < SINGLE_VALUED_TOL && control > MULTIVALUED_CONTROL_MIN;
        pass &= ok;
        println!("axis {axis}: t = h discrepancy {at_h:.3e}, t = h/2 control {control:.3e}  {}", if ok { "ok" } else { "FAIL" });
        axes.push(json!({ "axis": axis, "discrepancy_at_h": at_h, "control_at_half_h": control, "pass": ok }));
    }
    let report = json!({ "planck_h": h, "axes": axes });
    let mut outputs = Vec::new();
    write(out, "shift_check.json", pretty(&report).as_bytes(), &mut outputs)?;
    let failure = (!pass).then(|| "shift flow single-valuedness check failed".to_string());
    Ok(Outcome { summary: report, outputs, failure })
}

/// Parses `chart:n1,...,nk`.
pub fn parse_label(s: &str) -> Result<LatticeLabel, CliError> {
    let bad = || CliError::Config(format!("malformed label {s:?}, expected chart:n1,...,nk"));
    let (chart, rest) = s.split_once(':').ok_or_else(bad)?;
    let chart: u32 = chart.trim().parse().map_err(|_| bad())?;
    let n = rest.split(',').map(|x| x.trim().parse::<i64>().map_err(|_| bad())).collect::<Result<Vec<_>, _>>()?;
    Ok(LatticeLabel::new(ChartId(chart), n))
}

fn load_atlas(path: &Path) -> Result<ChartAtlas, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    ChartAtlas::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn shift(cfg: &RunConfig, word: &str, label: &str, out: &Path) -> Result<Outcome, CliError> {
    let label = parse_label(label)?;
    let word = parse_word(word).map_err(shift_err)?;
    let atlas = match &cfg.shift.atlas {
        Some(p) => load_atlas(p)?,
        None => {
            let b = ActionBox::cube(label.dim(), cfg.shift_box()?).map_err(|e| CliError::Config(e.to_string()))?;
            ChartAtlas::single_chart(cfg.shift_planck()?, b).map_err(|e| CliError::Config(e.to_string()))?
        }
    };
    if !atlas.label_in_chart(&label).map_err(|e| CliError::Config(e.to_string()))? {
        return Err(CliError::Config(format!("label {label} lies outside its chart")));
    }
    let state = apply_word(&atlas, &word, &QuantumState::basis(label.clone())).map_err(shift_err)?;
    let mut text = state.to_json();
    text.push('\n');
    print!("{text}");
    let mut outputs = Vec::new();
    write(out, "shift.json", text.as_bytes(), &mut outputs)?;
    let labels: Vec<String> = state.iter().map(|(l, _)| l.to_string()).collect();
    Ok(Outcome::ok(json!({ "input": label.to_string(), "steps": word.len(), "labels": labels }), outputs))
}

pub fn atlas_validate(path: &Path, out: &Path) -> Result<Outcome, CliError> {
    let atlas = load_atlas(path)?;
    let l = is_globally_labelable(&atlas).map_err(|e| CliError::Failure(e.to_string()))?;
    let witness = l.witness.as_ref().map(|w| {
        json!({
            "charts": w.charts,
            "transitions": w.transitions,
            "holonomy_matrix": w.holonomy.matrix().entries(),
            "holonomy_offset": w.holonomy.offset(),
        })
    });
    let report = json!({
        "dim": atlas.dim(),
        "planck_h": atlas.planck_h(),
        "charts": atlas.charts().len(),
        "transitions": atlas.transitions().len(),
        "oriented": atlas.oriented(),
        "globally_labelable": l.labelable,
        "witness": witness,
    });
    println!(
        "valid atlas: {} charts, {} transitions, {}",
        atlas.charts().len(),
        atlas.transitions().len(),
        if l.labelable { "globally labelable" } else { "not globally labelable (non-trivial holonomy)" }
    );
    let mut outputs = Vec::new();
    write(out, "atlas_report.json", pretty(&report).as_bytes(), &mut outputs)?;
    Ok(Outcome::ok(report, outputs))
}

pub fn pendulum_spectrum(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let window = cfg.window()?;
    let h_planck = cfg.h_planck()?;
    let opts = cfg.spectrum_options()?;
    let s = bs_spectrum(&window, h_planck, &opts).map_err(pendulum_err)?;
    for k in &s.skipped {
        warn!("skipped ({}, {}): {}", k.n1, k.n2, k.reason);
    }
    let mut outputs = Vec::new();
    write(out, "spectrum.csv", s.to_csv().as_bytes(), &mut outputs)?;
    write(out, "spectrum.svg", s.to_svg(&window).as_bytes(), &mut outputs)?;
    println!("{} Bohr-Sommerfeld points, {} skipped", s.points.len(), s.skipped.len());
    Ok(Outcome::ok(json!({ "points": s.points.len(), "skipped": s.skipped }), outputs))
}

pub fn pendulum_monodromy(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.loop_spec()?;
    let r = monodromy(&spec).map_err(pendulum_err)?;
    let mut outputs = Vec::new();
    let mut text = r.to_json();
    text.push('\n');
    write(out, "monodromy.json", text.as_bytes(), &mut outputs)?;
    println!("M = {:?}, residual {:.3e}, {} refinements", r.matrix, r.residual, r.refinements);
    let summary = json!({
        "matrix": r.matrix,
        "delta_theta": r.delta_theta,
        "residual": r.residual,
        "refinements": r.refinements,
    });
    let failure = (r.residual >= MONODROMY_RESIDUAL_TOL)
        .then(|| format!("residual {:.3e} exceeds {MONODROMY_RESIDUAL_TOL}", r.residual));
    Ok(Outcome { summary, outputs, failure })
}
