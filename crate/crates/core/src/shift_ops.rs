//! Shifting operators on the Bohr-Sommerfeld lattice.
//!
//! For an integer direction `c` the flow of `X = -c·∂/∂j` for time `h`
//! moves the torus `j = n h` to `j = (n - c) h`. Its prequantum lift,
//! `e^{-2πi c·ϑ} e^{h lift X}`, is single valued and maps `σ_n` to
//! `σ_{n-c}` ([`lower`]); the inverse maps `σ_n` to `σ_{n+c}` ([`raise`]).
//!
//! When the flow leaves a chart, the remaining time is spent in the next
//! chart with the transformed direction `c' = A c`. The phase picked up at a
//! break time `t₁` is `e^{-2πi t₁ (c·ϑ - c'·ϑ')/h}` for the chosen branch
//! representatives `ϑ`, `ϑ'`; it vanishes exactly when the representatives
//! are matched, `c·ϑ = c'·ϑ'`.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::affine_lattice::{AffineMap, ChartAtlas, ChartId, ChartTransition, LatticeError, LatticeLabel};
use crate::state_space::{QuantumState, StateError};
use crate::tolerances::BS_LABEL_REL_TOL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShiftError {
    #[error("shift leaves the chart's action box at {label}: the flow is not globally defined")]
    Incomplete { label: LatticeLabel },
    #[error("word step {step}: {source}")]
    Step { step: usize, source: Box<ShiftError> },
    #[error("break point {actions:?} at hop {hop} is not in the overlap of the two charts")]
    OverlapViolation { hop: usize, actions: Vec<f64> },
    #[error("no matched branch representatives at hop {hop}")]
    Infeasible { hop: usize },
    #[error("bad chain or break times: {0}")]
    Chain(String),
    #[error("loop does not close: started at {start}, ended at {end}")]
    LoopNotClosed { start: LatticeLabel, end: LatticeLabel },
    #[error("direction has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("cannot parse word: {0}")]
    Parse(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    State(#[from] StateError),
}

pub type Result<T> = std::result::Result<T, ShiftError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftKind {
    Lower,
    Raise,
}

/// One letter of a shift word: `a_c` (lower) or `b_c` (raise).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftStep {
    pub kind: ShiftKind,
    pub direction: Vec<i64>,
}

impl ShiftStep {
    pub fn lower(direction: Vec<i64>) -> Self {
        Self { kind: ShiftKind::Lower, direction }
    }

    pub fn raise(direction: Vec<i64>) -> Self {
        Self { kind: ShiftKind::Raise, direction }
    }

    /// The label displacement `-c` for a lowering step, `+c` for raising.
    pub fn displacement(&self) -> Vec<i64> {
        match self.kind {
            ShiftKind::Lower => self.direction.iter().map(|x| -x).collect(),
            ShiftKind::Raise => self.direction.clone(),
        }
    }
}

/// Word along the coordinate axes taking `σ_from` to `σ_to`: one step per
/// axis where the labels differ, raising for positive differences.
pub fn connecting_word(from: &[i64], to: &[i64]) -> Result<Vec<ShiftStep>> {
    if from.len() != to.len() {
        return Err(ShiftError::Dimension { expected: from.len(), got: to.len() });
    }
    let k = from.len();
    let mut word = Vec::new();
    for (i, (a, b)) in from.iter().zip(to).enumerate() {
        let d = b.checked_sub(*a).ok_or(LatticeError::Overflow)?;
        if d == 0 {
            continue;
        }
        let mut c = vec![0i64; k];
        c[i] = d.abs();
        word.push(if d > 0 { ShiftStep::raise(c) } else { ShiftStep::lower(c) });
    }
    Ok(word)
}

/// Parses words like `"a:1,0 b:0,1"`; letters apply left to right.
pub fn parse_word(text: &str) -> Result<Vec<ShiftStep>> {
    text.split_whitespace()
        .map(|tok| {
            let (kind, rest) = tok.split_once(':').ok_or_else(|| ShiftError::Parse(format!("missing ':' in {tok:?}")))?;
            let kind = match kind {
                "a" => ShiftKind::Lower,
                "b" => ShiftKind::Raise,
                other => return Err(ShiftError::Parse(format!("unknown letter {other:?}"))),
            };
            let direction = rest
                .split(',')
                .map(|x| x.trim().parse::<i64>().map_err(|e| ShiftError::Parse(format!("{x:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            Ok(ShiftStep { kind, direction })
        })
        .collect()
}

fn displaced(atlas: &ChartAtlas, label: &LatticeLabel, delta: &[i64]) -> Result<LatticeLabel> {
    if delta.len() != label.dim() {
        return Err(ShiftError::Dimension { expected: label.dim(), got: delta.len() });
    }
    let n = label
        .n
        .iter()
        .zip(delta)
        .map(|(a, b)| a.checked_add(*b).ok_or(LatticeError::Overflow))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let out = LatticeLabel::new(label.chart, n);
    if !atlas.label_in_chart(&out)? {
        return Err(ShiftError::Incomplete { label: out });
    }
    Ok(out)
}

fn shift(atlas: &ChartAtlas, delta: &[i64], u: &QuantumState) -> Result<QuantumState> {
    u.map_labels(|l| displaced(atlas, l, delta))
}

/// `a_c`: `σ_n ↦ σ_{n-c}`.
pub fn lower(atlas: &ChartAtlas, c: &[i64], u: &QuantumState) -> Result<QuantumState> {
    let delta: Vec<i64> = c.iter().map(|x| -x).collect();
    shift(atlas, &delta, u)
}

/// `b_c = a_c⁻¹`: `σ_n ↦ σ_{n+c}`.
pub fn raise(atlas: &ChartAtlas, c: &[i64], u: &QuantumState) -> Result<QuantumState> {
    shift(atlas, c, u)
}

/// Applies a word left to right; failures report the zero-based step.
pub fn apply_word(atlas: &ChartAtlas, word: &[ShiftStep], u: &QuantumState) -> Result<QuantumState> {
    let mut cur = u.clone();
    for (i, s) in word.iter().enumerate() {
        cur = shift(atlas, &s.displacement(), &cur).map_err(|e| ShiftError::Step { step: i, source: Box::new(e) })?;
    }
    Ok(cur)
}

/// How branch representatives are chosen at a chart break.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RepresentativeRule {
    /// `ϑ'` solves `c'·ϑ' = c·ϑ` exactly; the break contributes no phase.
    Matched,
    /// Both representatives reduced to `[0,1)^k` independently. Kept as a
    /// negative control: the break then leaves a spurious phase.
    Canonical,
}

/// Default angle point at which break phases are evaluated.
pub fn default_reference_angles(dim: usize) -> Vec<f64> {
    let g = 0.618_033_988_749_894_9;
    (1..=dim).map(|i| (i as f64 * g).fract()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transport {
    /// Label of the image torus in the last chart of the chain.
    pub label: LatticeLabel,
    /// Shift direction as seen in the last chart.
    pub direction: Vec<i64>,
    /// Accumulated phase angle (radians, not reduced).
    pub phase: f64,
    /// Indices of the transitions used at each break.
    pub transitions: Vec<usize>,
}

fn dot_i(c: &[i64], x: &[f64]) -> f64 {
    c.iter().zip(x).map(|(a, b)| *a as f64 * b).sum()
}

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a.abs(), a.signum(), 0)
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

/// Integer `l` with `c·l = k`, if one exists.
fn solve_linear_diophantine(c: &[i64], k: i64) -> Option<Vec<i64>> {
    let mut l = vec![0i64; c.len()];
    if k == 0 {
        return Some(l);
    }
    // Fold the gcd across the entries, keeping Bézout coefficients.
    let mut g = 0i64;
    let mut coeffs: Vec<i64> = vec![0; c.len()];
    for (i, &ci) in c.iter().enumerate() {
        let (ng, x, y) = ext_gcd(g, ci);
        for v in coeffs.iter_mut().take(i) {
            *v *= x;
        }
        coeffs[i] = y;
        g = ng;
    }
    if g == 0 || k % g != 0 {
        return None;
    }
    let s = k / g;
    for (v, cf) in l.iter_mut().zip(&coeffs) {
        *v = cf * s;
    }
    Some(l)
}

/// Representative in chart `to` for the point with representative `theta`.
fn next_representative(
    t: &ChartTransition,
    c_next: &[i64],
    theta: &[f64],
    rule: RepresentativeRule,
    hop: usize,
) -> Result<Vec<f64>> {
    let b = t.map.angle_matrix()?;
    let raw = b.mul_vec_f64(theta)?;
    let floors: Vec<i64> = raw.iter().map(|x| x.floor() as i64).collect();
    let canonical: Vec<f64> = raw.iter().zip(&floors).map(|(x, f)| x - *f as f64).collect();
    match rule {
        RepresentativeRule::Canonical => Ok(canonical),
        RepresentativeRule::Matched => {
            // c·ϑ - c'·ϑ'_canonical is the integer c'·⌊Bϑ⌋ (because c'ᵀB = cᵀ);
            // shift ϑ' by an integer vector that absorbs it.
            let k: i64 = c_next.iter().zip(&floors).map(|(a, b)| a * b).sum();
            let l = solve_linear_diophantine(c_next, k).ok_or(ShiftError::Infeasible { hop })?;
            Ok(canonical.iter().zip(&l).map(|(x, d)| x + *d as f64).collect())
        }
    }
}

/// Moves the torus `start` along `-c` for time `h`, switching charts along
/// `chain` at the given break times (strictly increasing, inside `(0, h)`).
pub fn transport_across_charts(
    atlas: &ChartAtlas,
    start: &LatticeLabel,
    c: &[i64],
    chain: &[ChartId],
    break_times: &[f64],
) -> Result<Transport> {
    transport_with(atlas, start, c, chain, break_times, RepresentativeRule::Matched, &default_reference_angles(atlas.dim()))
}

/// [`transport_across_charts`] with an explicit representative rule and
/// reference angle point (given in the starting chart).
pub fn transport_with(
    atlas: &ChartAtlas,
    start: &LatticeLabel,
    c: &[i64],
    chain: &[ChartId],
    break_times: &[f64],
    rule: RepresentativeRule,
    reference_angles: &[f64],
) -> Result<Transport> {
    let k = atlas.dim();
    let h = atlas.planck_h();
    if c.len() != k || start.dim() != k || reference_angles.len() != k {
        return Err(ShiftError::Dimension { expected: k, got: c.len() });
    }
    if chain.first() != Some(&start.chart) {
        return Err(ShiftError::Chain("chain must begin at the label's chart".into()));
    }
    if chain.len() != break_times.len() + 1 {
        return Err(ShiftError::Chain("need one break time per chart change".into()));
    }
    let mut prev = 0.0;
    for &t in break_times {
        if !(t > prev && t < h) {
            return Err(ShiftError::Chain(format!("break time {t} out of order or outside (0, h)")));
        }
        prev = t;
    }
    if !atlas.label_in_chart(start)? {
        return Err(ShiftError::Incomplete { label: start.clone() });
    }

    let mut j = atlas.label_actions(start);
    let mut dir = c.to_vec();
    let mut theta: Vec<f64> = reference_angles.to_vec();
    let mut composite = AffineMap::identity(k);
    let mut segments: Vec<(f64, f64)> = Vec::new();
    let mut used = Vec::new();
    let mut t_prev = 0.0;
    for (hop, (&t_b, pair)) in break_times.iter().zip(chain.windows(2)).enumerate() {
        let dt = t_b - t_prev;
        let jb: Vec<f64> = j.iter().zip(&dir).map(|(x, ci)| x - dt * *ci as f64).collect();
        if !atlas.chart(pair[0])?.action_box.contains_open(&jb) {
            return Err(ShiftError::OverlapViolation { hop, actions: jb });
        }
        let next_box = &atlas.chart(pair[1])?.action_box;
        let mut chosen = None;
        for (ti, t) in atlas.transitions().iter().enumerate() {
            if t.from == pair[0] && t.to == pair[1] {
                let img = t.map.apply_actions(&jb, h)?;
                if next_box.contains_open(&img) {
                    chosen = Some((ti, t, img));
                    break;
                }
            }
        }
        let (ti, t, img) = chosen.ok_or(ShiftError::OverlapViolation { hop, actions: jb.clone() })?;
        segments.push((dt, dot_i(&dir, &theta)));
        let dir_next = t.map.apply_direction(&dir)?;
        theta = next_representative(t, &dir_next, &theta, rule, hop)?;
        composite = composite.then(&t.map)?;
        dir = dir_next;
        j = img;
        used.push(ti);
        t_prev = t_b;
    }
    let dt = h - t_prev;
    let last = dot_i(&dir, &theta);
    segments.push((dt, last));
    let j_end: Vec<f64> = j.iter().zip(&dir).map(|(x, ci)| x - dt * *ci as f64).collect();

    let image = composite.apply_label(&start.n)?;
    let n_end: Vec<i64> = image.iter().zip(&dir).map(|(a, b)| a - b).collect();
    let label = LatticeLabel::new(*chain.last().expect("non-empty chain"), n_end);
    let consistent = label
        .n
        .iter()
        .zip(&j_end)
        .all(|(n, x)| (x - *n as f64 * h).abs() <= BS_LABEL_REL_TOL * x.abs().max(h) * 10.0);
    if !consistent {
        return Err(ShiftError::Chain("end point is off the lattice".into()));
    }
    if !atlas.label_in_chart(&label)? {
        return Err(ShiftError::Incomplete { label });
    }
    // The factor e^{-2πi c_last·ϑ_last} is absorbed by the relabelling
    // σ_m ↦ σ_{m - c_last}; what remains is the mismatch between segments.
    let phase = -2.0 * PI / h * segments.iter().map(|(dt, cv)| dt * (cv - last)).sum::<f64>();
    Ok(Transport { label, direction: dir, phase, transitions: used })
}

/// One step of a multi-chart shift word.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportStep {
    pub step: ShiftStep,
    pub chain: Vec<ChartId>,
    pub break_times: Vec<f64>,
}

impl TransportStep {
    pub fn within(chart: ChartId, step: ShiftStep) -> Self {
        Self { step, chain: vec![chart], break_times: Vec::new() }
    }
}

/// Transports a state label by label, attaching the accumulated phases.
pub fn transport_state(atlas: &ChartAtlas, u: &QuantumState, step: &TransportStep) -> Result<QuantumState> {
    let c: Vec<i64> = step.step.displacement().iter().map(|x| -x).collect();
    let mut out = QuantumState::zero(u.dim());
    for (l, a) in u.iter() {
        let tr = transport_across_charts(atlas, l, &c, &step.chain, &step.break_times)?;
        out.add_amplitude(tr.label, a * Complex64::from_polar(1.0, tr.phase))?;
    }
    Ok(out)
}

/// Phase `φ ∈ (-π, π]` with which a closed word of multi-chart shifts maps
/// `σ_start` back to itself.
pub fn loop_phase(atlas: &ChartAtlas, start: &LatticeLabel, steps: &[TransportStep]) -> Result<f64> {
    loop_phase_with(atlas, start, steps, RepresentativeRule::Matched)
}

pub fn loop_phase_with(
    atlas: &ChartAtlas,
    start: &LatticeLabel,
    steps: &[TransportStep],
    rule: RepresentativeRule,
) -> Result<f64> {
    let k = atlas.dim();
    let mut label = start.clone();
    let mut theta = default_reference_angles(k);
    let mut phase = 0.0;
    for (i, s) in steps.iter().enumerate() {
        let c: Vec<i64> = s.step.displacement().iter().map(|x| -x).collect();
        let tr = transport_with(atlas, &label, &c, &s.chain, &s.break_times, rule, &theta)
            .map_err(|e| ShiftError::Step { step: i, source: Box::new(e) })?;
        // Carry the reference point into the chart where the next step starts.
        for &ti in &tr.transitions {
            theta = atlas.transitions()[ti].map.apply_angles(&theta)?;
        }
        phase += tr.phase;
        label = tr.label;
    }
    if label != *start {
        return Err(ShiftError::LoopNotClosed { start: start.clone(), end: label });
    }
    Ok(wrap_phase(phase))
}

/// Reduces an angle to `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Checks `relabel(a_c n) = a_{A c}(relabel n)` for one transition.
pub fn chart_independence_check(t: &ChartTransition, c: &[i64], n: &[i64]) -> Result<bool> {
    if c.len() != t.dim() || n.len() != t.dim() {
        return Err(ShiftError::Dimension { expected: t.dim(), got: c.len() });
    }
    let lowered: Vec<i64> = n.iter().zip(c).map(|(a, b)| a - b).collect();
    let lhs = t.map.apply_label(&lowered)?;
    let c2 = t.map.apply_direction(c)?;
    let rhs: Vec<i64> = t.map.apply_label(n)?.iter().zip(&c2).map(|(a, b)| a - b).collect();
    Ok(lhs == rhs)
}
