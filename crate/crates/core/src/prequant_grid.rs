//! Prequantization of `T*T^k` on a tensor grid.
//!
//! Sections of the trivial line bundle are sampled on a box of actions times
//! the full angle torus. Angle derivatives are spectral, action derivatives
//! use fourth-order central differences, and nodes whose stencil would leave
//! the box are flagged invalid.
//!
//! Sign conventions. Hamiltonian vector fields satisfy `X_f ⌟ ω = -df` with
//! `ω = Σ dj_i ∧ dϑ_i`, so
//!
//! ```text
//! X_f = Σ ∂f/∂j_i ∂/∂ϑ_i - ∂f/∂ϑ_i ∂/∂j_i,        X_{ϑ_i} = -∂/∂j_i,
//! {f, g} = X_g f = Σ ∂f/∂ϑ_i ∂g/∂j_i - ∂f/∂j_i ∂g/∂ϑ_i.
//! ```
//!
//! The connection has curvature `-ω/h`, which with these conventions is what
//! makes `P_f = -iħ∇_{X_f} + f` satisfy `[P_f, P_g] = iħ P_{f,g}`:
//!
//! ```text
//! ∇_X ψ = X ψ - (2πi/h) (Σ j_i dϑ_i)(X) ψ .
//! ```
//!
//! The covariantly constant sections over the torus `j = n h` are then
//! `σ_n = e^{2πi n·ϑ}`.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

use crate::observable::Observable;
use crate::tolerances::{DIRAC_EXACT_FLOOR, SUPPORT_TOL};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("sections live on different grids")]
    GridMismatch,
    #[error("observable must depend on the actions only")]
    UnsupportedObservable,
    #[error("section is not supported away from the action boundary (relative size {0:e})")]
    SupportViolation(f64),
    #[error("time {t} is not a whole number of action spacings ({spacing})")]
    NotCommensurate { t: f64, spacing: f64 },
    #[error("action box along axis {axis} is too narrow for a shift by {t}")]
    BoxTooNarrow { axis: usize, t: f64 },
    #[error("no grid slice at actions {0:?}")]
    SliceNotOnGrid(Vec<f64>),
    #[error("no valid nodes remain")]
    NoValidNodes,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, GridError>;

/// Half-width of the action-difference stencil.
pub const STENCIL_HALF_WIDTH: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub action_lower: Vec<f64>,
    pub action_upper: Vec<f64>,
    pub action_points: usize,
    pub angle_points: usize,
    pub planck_h: f64,
}

impl GridSpec {
    pub const DEFAULT_ACTION_POINTS: usize = 129;
    pub const DEFAULT_ANGLE_POINTS: usize = 64;

    pub fn new(action_lower: Vec<f64>, action_upper: Vec<f64>, planck_h: f64) -> Result<Self> {
        let spec = Self {
            dim: action_lower.len(),
            action_lower,
            action_upper,
            action_points: Self::DEFAULT_ACTION_POINTS,
            angle_points: Self::DEFAULT_ANGLE_POINTS,
            planck_h,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_points(mut self, action_points: usize, angle_points: usize) -> Result<Self> {
        self.action_points = action_points;
        self.angle_points = angle_points;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GridError::InvalidSpec(m.to_string()));
        if self.dim == 0 {
            return bad("dimension must be positive");
        }
        if self.action_lower.len() != self.dim || self.action_upper.len() != self.dim {
            return bad("box bounds must have one entry per axis");
        }
        if self.action_lower.iter().zip(&self.action_upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
            return bad("box bounds must be finite with lower < upper");
        }
        if self.action_points < 8 || self.angle_points < 8 {
            return bad("need at least 8 points per axis");
        }
        if !(self.planck_h.is_finite() && self.planck_h > 0.0) {
            return bad("planck_h must be positive");
        }
        Ok(())
    }

    pub fn hbar(&self) -> f64 {
        self.planck_h / (2.0 * PI)
    }

    pub fn action_spacing(&self, axis: usize) -> f64 {
        (self.action_upper[axis] - self.action_lower[axis]) / (self.action_points - 1) as f64
    }

    pub fn action_coord(&self, axis: usize, i: usize) -> f64 {
        if i == self.action_points - 1 {
            self.action_upper[axis]
        } else {
            self.action_lower[axis] + i as f64 * self.action_spacing(axis)
        }
    }

    pub fn angle_coord(&self, i: usize) -> f64 {
        i as f64 / self.angle_points as f64
    }

    pub fn action_nodes(&self) -> usize {
        self.action_points.pow(self.dim as u32)
    }

    pub fn angle_nodes(&self) -> usize {
        self.angle_points.pow(self.dim as u32)
    }

    pub fn len(&self) -> usize {
        self.action_nodes() * self.angle_nodes()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The nested grid with twice as many action intervals per axis.
    pub fn refined(&self) -> Self {
        Self { action_points: 2 * self.action_points - 1, ..self.clone() }
    }

    /// Per-axis indices of an action multi-index (axis 0 slowest).
    pub fn action_multi(&self, mut ai: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            out[axis] = ai % self.action_points;
            ai /= self.action_points;
        }
        out
    }

    pub fn angle_multi(&self, mut ti: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            out[axis] = ti % self.angle_points;
            ti /= self.angle_points;
        }
        out
    }

    pub fn actions_at(&self, ai: usize) -> Vec<f64> {
        self.action_multi(ai).iter().enumerate().map(|(a, &i)| self.action_coord(a, i)).collect()
    }

    pub fn angles_at(&self, ti: usize) -> Vec<f64> {
        self.angle_multi(ti).iter().map(|&i| self.angle_coord(i)).collect()
    }

    fn action_stride(&self, axis: usize) -> usize {
        self.action_points.pow((self.dim - 1 - axis) as u32)
    }

    fn angle_stride(&self, axis: usize) -> usize {
        self.angle_points.pow((self.dim - 1 - axis) as u32)
    }

    /// Action multi-index of the node closest to `j`, if `j` is a grid point.
    pub fn action_index_of(&self, j: &[f64]) -> Option<usize> {
        let mut ai = 0;
        for (axis, x) in j.iter().enumerate() {
            let dj = self.action_spacing(axis);
            let r = (x - self.action_lower[axis]) / dj;
            let i = r.round();
            if (r - i).abs() > 1e-9 || i < 0.0 || i as usize >= self.action_points {
                return None;
            }
            ai = ai * self.action_points + i as usize;
        }
        Some(ai)
    }
}

/// Values of a field on every node of a grid.
fn observable_field(spec: &GridSpec, f: &Observable) -> Vec<Complex64> {
    let (na, nt) = (spec.action_nodes(), spec.angle_nodes());
    let actions: Vec<Vec<f64>> = (0..na).map(|ai| spec.actions_at(ai)).collect();
    let angles: Vec<Vec<f64>> = (0..nt).map(|ti| spec.angles_at(ti)).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); na * nt];
    for term in f.terms() {
        let apart: Vec<Complex64> = actions
            .iter()
            .map(|j| term.coeff * term.alpha.iter().zip(j).map(|(p, x)| x.powi(*p as i32)).product::<f64>())
            .collect();
        let tpart: Vec<Complex64> = angles
            .iter()
            .map(|t| {
                let ph: f64 = term.m.iter().zip(t).map(|(k, x)| *k as f64 * x).sum();
                Complex64::from_polar(1.0, 2.0 * PI * ph)
            })
            .collect();
        for (ai, a) in apart.iter().enumerate() {
            let row = &mut out[ai * nt..(ai + 1) * nt];
            for (v, t) in row.iter_mut().zip(&tpart) {
                *v += a * t;
            }
        }
    }
    // Observables are real; drop the rounding-level imaginary part.
    for v in &mut out {
        v.im = 0.0;
    }
    out
}

/// Vector field with components given as observables.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    /// `dj_i/dt`.
    pub action: Vec<Observable>,
    /// `dϑ_i/dt`.
    pub angle: Vec<Observable>,
}

impl VectorField {
    /// The coordinate field `∂/∂ϑ_axis`.
    pub fn angle_direction(dim: usize, axis: usize) -> Self {
        let mut angle = vec![Observable::zero(dim); dim];
        angle[axis] = Observable::constant(dim, 1.0);
        Self { action: vec![Observable::zero(dim); dim], angle }
    }

    /// The coordinate field `∂/∂j_axis`.
    pub fn action_direction(dim: usize, axis: usize) -> Self {
        let mut action = vec![Observable::zero(dim); dim];
        action[axis] = Observable::constant(dim, 1.0);
        Self { action, angle: vec![Observable::zero(dim); dim] }
    }

    /// Evaluates the components at a point, actions first.
    pub fn eval(&self, j: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            self.action.iter().map(|c| c.eval(j, theta)).collect(),
            self.angle.iter().map(|c| c.eval(j, theta)).collect(),
        )
    }
}

/// `X_f` with `dϑ_i/dt = ∂f/∂j_i` and `dj_i/dt = -∂f/∂ϑ_i`.
pub fn hamiltonian_vf(f: &Observable) -> VectorField {
    let k = f.dim();
    VectorField {
        action: (0..k).map(|i| f.d_angle(i).scale(-1.0)).collect(),
        angle: (0..k).map(|i| f.d_action(i)).collect(),
    }
}

/// `{f, g} = Σ ∂f/∂ϑ_i ∂g/∂j_i - ∂f/∂j_i ∂g/∂ϑ_i`.
pub fn poisson(f: &Observable, g: &Observable) -> Observable {
    let mut out = Observable::zero(f.dim());
    for i in 0..f.dim() {
        out = out.add(&f.d_angle(i).mul(&g.d_action(i)));
        out = out.sub(&f.d_action(i).mul(&g.d_angle(i)));
    }
    out
}

/// Complex section sampled on a grid, with a validity flag per action node.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSection {
    spec: GridSpec,
    values: Vec<Complex64>,
    valid: Vec<bool>,
}

impl GridSection {
    pub fn new(spec: GridSpec, values: Vec<Complex64>, valid: Vec<bool>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(GridError::Dimension { expected: spec.len(), got: values.len() });
        }
        if valid.len() != spec.action_nodes() {
            return Err(GridError::Dimension { expected: spec.action_nodes(), got: valid.len() });
        }
        Ok(Self { spec, values, valid })
    }

    pub fn from_fn(spec: &GridSpec, f: impl Fn(&[f64], &[f64]) -> Complex64) -> Self {
        let (na, nt) = (spec.action_nodes(), spec.angle_nodes());
        let angles: Vec<Vec<f64>> = (0..nt).map(|ti| spec.angles_at(ti)).collect();
        let mut values = Vec::with_capacity(na * nt);
        for ai in 0..na {
            let j = spec.actions_at(ai);
            for t in &angles {
                values.push(f(&j, t));
            }
        }
        Self { spec: spec.clone(), values, valid: vec![true; na] }
    }

    /// Gaussian in the actions times a trigonometric polynomial in the
    /// angles, `exp(-|j - c|²/2w²) Σ a_m e^{2πi m·ϑ}`.
    pub fn wave_packet(spec: &GridSpec, center: &[f64], width: f64, modes: &[(Vec<i64>, Complex64)]) -> Self {
        Self::from_fn(spec, |j, t| {
            let r2: f64 = j.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
            let env = (-r2 / (2.0 * width * width)).exp();
            let s: Complex64 = modes
                .iter()
                .map(|(m, a)| {
                    let ph: f64 = m.iter().zip(t).map(|(k, x)| *k as f64 * x).sum();
                    a * Complex64::from_polar(1.0, 2.0 * PI * ph)
                })
                .sum();
            env * s
        })
    }

    /// `e^{2πi n·ϑ}` on every node.
    pub fn basis_section(spec: &GridSpec, n: &[i64]) -> Self {
        Self::from_fn(spec, |_, t| {
            let ph: f64 = n.iter().zip(t).map(|(k, x)| *k as f64 * x).sum();
            Complex64::from_polar(1.0, 2.0 * PI * ph)
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Validity per action node (angles never invalidate a node).
    pub fn valid_actions(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, node: usize) -> bool {
        self.valid[node / self.spec.angle_nodes()]
    }

    pub fn value_at(&self, ai: usize, ti: usize) -> Complex64 {
        self.values[ai * self.spec.angle_nodes() + ti]
    }

    fn same_grid(&self, other: &GridSection) -> Result<()> {
        if self.spec != other.spec {
            return Err(GridError::GridMismatch);
        }
        Ok(())
    }

    fn zip_with(&self, other: &GridSection, op: impl Fn(Complex64, Complex64) -> Complex64) -> Result<GridSection> {
        self.same_grid(other)?;
        Ok(GridSection {
            spec: self.spec.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| op(*a, *b)).collect(),
            valid: self.valid.iter().zip(&other.valid).map(|(a, b)| *a && *b).collect(),
        })
    }

    pub fn add(&self, other: &GridSection) -> Result<GridSection> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridSection) -> Result<GridSection> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: Complex64) -> GridSection {
        GridSection { spec: self.spec.clone(), values: self.values.iter().map(|v| v * c).collect(), valid: self.valid.clone() }
    }

    pub fn mul_observable(&self, f: &Observable) -> GridSection {
        let field = observable_field(&self.spec, f);
        GridSection {
            spec: self.spec.clone(),
            values: self.values.iter().zip(&field).map(|(a, b)| a * b).collect(),
            valid: self.valid.clone(),
        }
    }

    /// Discrete `L²` inner product `⟨self, other⟩` (antilinear in `self`)
    /// over nodes valid in both sections.
    pub fn inner(&self, other: &GridSection) -> Result<Complex64> {
        self.same_grid(other)?;
        let nt = self.spec.angle_nodes();
        let cell: f64 = (0..self.spec.dim).map(|a| self.spec.action_spacing(a)).product::<f64>()
            / self.spec.angle_nodes() as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for ai in 0..self.spec.action_nodes() {
            if !(self.valid[ai] && other.valid[ai]) {
                continue;
            }
            for ti in 0..nt {
                let n = ai * nt + ti;
                acc += self.values[n].conj() * other.values[n];
            }
        }
        Ok(acc * cell)
    }

    /// `L²` norm over the valid nodes.
    pub fn norm(&self) -> f64 {
        self.inner(self).map(|c| c.re.max(0.0).sqrt()).unwrap_or(0.0)
    }

    /// Largest modulus over valid nodes.
    pub fn sup_norm(&self) -> f64 {
        let nt = self.spec.angle_nodes();
        self.values
            .iter()
            .enumerate()
            .filter(|(n, _)| self.valid[n / nt])
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Writes the node values as CSV (`j1..jk, t1..tk, re, im, valid`, nodes
    /// in storage order) plus a JSON sidecar `<path>.json` holding the grid parameters.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let k = self.spec.dim;
        let cols: Vec<String> = (1..=k)
            .map(|i| format!("j{i}"))
            .chain((1..=k).map(|i| format!("t{i}")))
            .chain(["re", "im", "valid"].iter().map(|s| s.to_string()))
            .collect();
        out.push_str(&cols.join(","));
        out.push('\n');
        let nt = self.spec.angle_nodes();
        for ai in 0..self.spec.action_nodes() {
            let j = self.spec.actions_at(ai);
            for ti in 0..nt {
                let t = self.spec.angles_at(ti);
                let v = self.values[ai * nt + ti];
                let mut row: Vec<String> = j.iter().chain(&t).map(|x| format!("{x:?}")).collect();
                row.push(format!("{:?}", v.re));
                row.push(format!("{:?}", v.im));
                row.push(if self.valid[ai] { "1".into() } else { "0".into() });
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        crate::io::atomic_write(path, out.as_bytes())?;
        let sidecar = serde_json::to_string_pretty(&self.spec).map_err(|e| GridError::Format(e.to_string()))?;
        crate::io::atomic_write(&sidecar_path(path), sidecar.as_bytes())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let sidecar = std::fs::read_to_string(sidecar_path(path))?;
        let spec: GridSpec = serde_json::from_str(&sidecar).map_err(|e| GridError::Format(e.to_string()))?;
        spec.validate()?;
        let k = spec.dim;
        let nt = spec.angle_nodes();
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut values = Vec::with_capacity(spec.len());
        let mut valid = vec![true; spec.action_nodes()];
        for (i, line) in file.lines().enumerate().skip(1) {
            let line = line?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 * k + 3 {
                return Err(GridError::Format(format!("line {}: expected {} fields", i + 1, 2 * k + 3)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| GridError::Format(format!("line {}: {e}", i + 1)));
            values.push(Complex64::new(num(fields[2 * k])?, num(fields[2 * k + 1])?));
            let node = values.len() - 1;
            if fields[2 * k + 2] == "0" {
                valid[node / nt] = false;
            }
        }
        Self::new(spec, values, valid)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Fourth-order central difference along an action axis.
pub fn d_action(psi: &GridSection, axis: usize) -> GridSection {
    let spec = &psi.spec;
    let nt = spec.angle_nodes();
    let stride = spec.action_stride(axis);
    let n = spec.action_points;
    let inv = 1.0 / (12.0 * spec.action_spacing(axis));
    let mut values = vec![Complex64::new(0.0, 0.0); spec.len()];
    let mut valid = vec![false; spec.action_nodes()];
    for ai in 0..spec.action_nodes() {
        let i = (ai / stride) % n;
        if i < STENCIL_HALF_WIDTH || i + STENCIL_HALF_WIDTH >= n {
            continue;
        }
        let nbr = [ai - 2 * stride, ai - stride, ai + stride, ai + 2 * stride];
        if !psi.valid[ai] || nbr.iter().any(|&b| !psi.valid[b]) {
            continue;
        }
        valid[ai] = true;
        let row = |b: usize| &psi.values[b * nt..(b + 1) * nt];
        let (m2, m1, p1, p2) = (row(nbr[0]), row(nbr[1]), row(nbr[2]), row(nbr[3]));
        let out = &mut values[ai * nt..(ai + 1) * nt];
        for t in 0..nt {
            out[t] = (m2[t] - p2[t] + 8.0 * (p1[t] - m1[t])) * inv;
        }
    }
    GridSection { spec: spec.clone(), values, valid }
}

/// Signed Fourier mode of FFT bin `p` on `n` points.
fn mode(p: usize, n: usize) -> i64 {
    if p <= n / 2 {
        if p == n / 2 && n % 2 == 0 {
            -(p as i64)
        } else {
            p as i64
        }
    } else {
        p as i64 - n as i64
    }
}

struct AngleFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl AngleFft {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    /// Applies `multiplier(mode)` to the Fourier coefficients of every line
    /// of `values` along angle axis `axis`.
    fn filter_axis(&self, spec: &GridSpec, values: &mut [Complex64], axis: usize, multiplier: &[Complex64]) {
        let n = self.n;
        let nt = spec.angle_nodes();
        let stride = spec.angle_stride(axis);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let scale = 1.0 / n as f64;
        for block in values.chunks_mut(nt) {
            for base in 0..nt {
                if (base / stride) % n != 0 {
                    continue;
                }
                for p in 0..n {
                    line[p] = block[base + p * stride];
                }
                self.forward.process(&mut line);
                for p in 0..n {
                    line[p] *= multiplier[p];
                }
                self.inverse.process(&mut line);
                for p in 0..n {
                    block[base + p * stride] = line[p] * scale;
                }
            }
        }
    }
}

/// Spectral derivative along an angle axis. The Nyquist mode is dropped.
pub fn d_angle(psi: &GridSection, axis: usize) -> GridSection {
    let spec = &psi.spec;
    let n = spec.angle_points;
    let fft = AngleFft::new(n);
    let mult: Vec<Complex64> = (0..n)
        .map(|p| {
            if n % 2 == 0 && p == n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, 2.0 * PI * mode(p, n) as f64)
            }
        })
        .collect();
    let mut values = psi.values.clone();
    fft.filter_axis(spec, &mut values, axis, &mult);
    GridSection { spec: spec.clone(), values, valid: psi.valid.clone() }
}

fn accumulate(acc: &mut Option<GridSection>, term: GridSection) {
    *acc = Some(match acc.take() {
        None => term,
        Some(a) => a.add(&term).expect("same grid"),
    });
}

/// `∇_X ψ = X ψ - (2πi/h) (Σ j_i X^{ϑ_i}) ψ`.
pub fn covariant_derivative(psi: &GridSection, x: &VectorField) -> Result<GridSection> {
    let k = psi.spec.dim;
    if x.action.len() != k || x.angle.len() != k {
        return Err(GridError::Dimension { expected: k, got: x.action.len() });
    }
    let mut acc: Option<GridSection> = None;
    for i in 0..k {
        if !x.action[i].is_zero() {
            accumulate(&mut acc, d_action(psi, i).mul_observable(&x.action[i]));
        }
        if !x.angle[i].is_zero() {
            accumulate(&mut acc, d_angle(psi, i).mul_observable(&x.angle[i]));
        }
    }
    let mut potential = Observable::zero(k);
    for i in 0..k {
        potential = potential.add(&Observable::action(k, i).mul(&x.angle[i]));
    }
    if !potential.is_zero() {
        let c = Complex64::new(0.0, -2.0 * PI / psi.spec.planck_h);
        accumulate(&mut acc, psi.mul_observable(&potential).scale(c));
    }
    Ok(acc.unwrap_or_else(|| psi.scale(Complex64::new(0.0, 0.0))))
}

/// `P_f ψ = -iħ ∇_{X_f} ψ + f ψ`.
pub fn prequant_apply(f: &Observable, psi: &GridSection) -> Result<GridSection> {
    if f.dim() != psi.spec.dim {
        return Err(GridError::Dimension { expected: psi.spec.dim, got: f.dim() });
    }
    let hbar = psi.spec.hbar();
    let nab = covariant_derivative(psi, &hamiltonian_vf(f))?;
    nab.scale(Complex64::new(0.0, -hbar)).add(&psi.mul_observable(f))
}

/// Fails unless `psi` is negligible within three stencil widths of the
/// action faces.
pub fn check_support(psi: &GridSection) -> Result<()> {
    let spec = &psi.spec;
    let margin = 3 * STENCIL_HALF_WIDTH;
    let nt = spec.angle_nodes();
    let peak = psi.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(());
    }
    let mut edge = 0.0f64;
    for ai in 0..spec.action_nodes() {
        let near = spec.action_multi(ai).iter().any(|&i| i < margin || i + margin >= spec.action_points);
        if near || !psi.valid[ai] {
            for v in &psi.values[ai * nt..(ai + 1) * nt] {
                edge = edge.max(v.norm());
            }
        }
    }
    if edge > SUPPORT_TOL * peak {
        return Err(GridError::SupportViolation(edge / peak));
    }
    Ok(())
}

/// Relative residual `‖[P_f,P_g]ψ - iħP_{f,g}ψ‖ / ‖ψ‖` over the nodes where
/// every stencil stayed inside the box.
pub fn dirac_residual(f: &Observable, g: &Observable, psi: &GridSection) -> Result<f64> {
    check_support(psi)?;
    let hbar = psi.spec.hbar();
    let pf_pg = prequant_apply(f, &prequant_apply(g, psi)?)?;
    let pg_pf = prequant_apply(g, &prequant_apply(f, psi)?)?;
    let rhs = prequant_apply(&poisson(f, g), psi)?.scale(Complex64::new(0.0, hbar));
    let r = pf_pg.sub(&pg_pf)?.sub(&rhs)?;
    if r.valid_count() == 0 {
        return Err(GridError::NoValidNodes);
    }
    let mut base = psi.clone();
    base.valid = r.valid.clone();
    let denom = base.norm();
    if denom == 0.0 {
        return Err(GridError::NoValidNodes);
    }
    Ok(r.norm() / denom)
}

/// Dirac residual on a grid and on its refinement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiracRow {
    pub coarse: f64,
    pub fine: f64,
    /// `log2(coarse / fine)`, absent when both residuals are at rounding level.
    pub order: Option<f64>,
}

impl DiracRow {
    pub fn is_exact(&self) -> bool {
        self.order.is_none()
    }

    /// Exact to rounding, or converging at least at order `min_order`.
    pub fn passes(&self, min_order: f64) -> bool {
        match self.order {
            None => true,
            Some(p) => p >= min_order,
        }
    }
}

/// Measures the Dirac residual of `(f, g)` on `spec` and on its refinement
/// with the section produced by `make_psi`.
pub fn dirac_refinement(
    f: &Observable,
    g: &Observable,
    spec: &GridSpec,
    make_psi: impl Fn(&GridSpec) -> GridSection,
) -> Result<DiracRow> {
    let coarse = dirac_residual(f, g, &make_psi(spec))?;
    let fine = dirac_residual(f, g, &make_psi(&spec.refined()))?;
    let order = if coarse < DIRAC_EXACT_FLOOR && fine < DIRAC_EXACT_FLOOR {
        None
    } else {
        Some((coarse / fine).log2())
    };
    Ok(DiracRow { coarse, fine, order })
}

/// Observables of the standard Dirac check, in the two-dimensional model.
pub const DIRAC_FAMILY: [&str; 6] = ["j1", "j2", "j1^2", "cos(t1)", "sin(t2)", "j1*cos(t2)"];

/// One row of a Dirac suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiracSuiteRow {
    pub f: String,
    pub g: String,
    #[serde(flatten)]
    pub row: DiracRow,
}

/// Grid of the standard Dirac check: `[-1, 1]²`, 65 action points per axis
/// (refined to 129) and 8 angle points, which resolve every angular mode the
/// family can produce from the test section exactly.
pub fn dirac_default_spec() -> GridSpec {
    GridSpec::new(vec![-1.0, -1.0], vec![1.0, 1.0], 1.0)
        .and_then(|s| s.with_points(65, 8))
        .expect("default Dirac grid is valid")
}

/// Test section of the Dirac check: a Gaussian packet of width 5% of the box,
/// slightly off centre, carrying angular modes `{0, 1}` on the first two axes.
pub fn dirac_test_section(spec: &GridSpec) -> GridSection {
    let k = spec.dim;
    let span: Vec<f64> = (0..k).map(|a| spec.action_upper[a] - spec.action_lower[a]).collect();
    let offsets = [0.05, -0.025];
    let center: Vec<f64> = (0..k)
        .map(|a| 0.5 * (spec.action_lower[a] + spec.action_upper[a]) + offsets.get(a).copied().unwrap_or(0.0) * span[a])
        .collect();
    let width = 0.05 * span.iter().copied().fold(f64::INFINITY, f64::min);
    let unit = |axes: &[usize]| {
        let mut m = vec![0i64; k];
        for &a in axes {
            if a < k {
                m[a] = 1;
            }
        }
        m
    };
    let modes = [
        (unit(&[]), Complex64::new(1.0, 0.0)),
        (unit(&[0]), Complex64::new(0.5, 0.2)),
        (unit(&[1]), Complex64::new(-0.3, 0.4)),
        (unit(&[0, 1]), Complex64::new(0.2, -0.1)),
    ];
    let mut uniq: Vec<(Vec<i64>, Complex64)> = Vec::new();
    for (m, c) in modes {
        match uniq.iter_mut().find(|(u, _)| *u == m) {
            Some(entry) => entry.1 += c,
            None => uniq.push((m, c)),
        }
    }
    GridSection::wave_packet(spec, &center, width, &uniq)
}

/// All pairs `(f, g)` with `f` before `g` in [`DIRAC_FAMILY`].
pub fn dirac_default_pairs() -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (i, f) in DIRAC_FAMILY.iter().enumerate() {
        for g in &DIRAC_FAMILY[i + 1..] {
            out.push((f.to_string(), g.to_string()));
        }
    }
    out
}

/// Runs [`dirac_refinement`] with [`dirac_test_section`] for each pair,
/// spreading the pairs over the available cores.
pub fn dirac_suite(spec: &GridSpec, pairs: &[(Observable, Observable)]) -> Result<Vec<DiracRow>> {
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(pairs.len().max(1));
    let per = pairs.len().div_ceil(workers).max(1);
    let mut results: Vec<Option<Result<DiracRow>>> = (0..pairs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (w, chunk) in results.chunks_mut(per).enumerate() {
            let base = w * per;
            scope.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    let (f, g) = &pairs[base + i];
                    *slot = Some(dirac_refinement(f, g, spec, dirac_test_section));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every pair is evaluated")).collect()
}

/// Sup over the slice `j = n h` of `|∇_{∂/∂ϑ_i} σ_n|`, maximised over `i`.
pub fn covariant_constancy_defect(spec: &GridSpec, n: &[i64]) -> Result<f64> {
    if n.len() != spec.dim {
        return Err(GridError::Dimension { expected: spec.dim, got: n.len() });
    }
    let j: Vec<f64> = n.iter().map(|&x| x as f64 * spec.planck_h).collect();
    let ai = spec.action_index_of(&j).ok_or_else(|| GridError::SliceNotOnGrid(j.clone()))?;
    let sigma = GridSection::basis_section(spec, n);
    let nt = spec.angle_nodes();
    let mut worst = 0.0f64;
    for axis in 0..spec.dim {
        let d = covariant_derivative(&sigma, &VectorField::angle_direction(spec.dim, axis))?;
        for v in &d.values[ai * nt..(ai + 1) * nt] {
            worst = worst.max(v.norm());
        }
    }
    Ok(worst)
}

/// Flow of the quantomorphism generated by an action-only observable,
/// `e^{-itP_f/ħ}`. Along `X_f` the angles advance by `t ∇f(j)` while the
/// actions stay fixed, so with the connection above
///
/// ```text
/// (e^{-itP_f/ħ} ψ)(j, ϑ) = e^{-2πi t (f - j·∇f)/h} ψ(j, ϑ - t∇f(j)).
/// ```
///
/// The factor `e^{-2πi t f/h}` is the vertical part of the flow and
/// `e^{2πi t j·∇f/h}` the parallel transport along the horizontal lift. The
/// angle translation is an exact Fourier phase shift.
pub fn quantomorphism_flow(f: &Observable, t: f64, psi: &GridSection) -> Result<GridSection> {
    if !f.is_action_only() {
        return Err(GridError::UnsupportedObservable);
    }
    let spec = &psi.spec;
    let k = spec.dim;
    if f.dim() != k {
        return Err(GridError::Dimension { expected: k, got: f.dim() });
    }
    let grad: Vec<Observable> = (0..k).map(|i| f.d_action(i)).collect();
    let n = spec.angle_points;
    let nt = spec.angle_nodes();
    let fft = AngleFft::new(n);
    let zero = vec![0.0; k];
    let mut values = psi.values.clone();
    let h = spec.planck_h;
    for (ai, block) in values.chunks_mut(nt).enumerate() {
        let j = spec.actions_at(ai);
        let gvals: Vec<f64> = grad.iter().map(|g| g.eval(&j, &zero)).collect();
        for (axis, g) in gvals.iter().enumerate() {
            let shift = t * g;
            if shift == 0.0 {
                continue;
            }
            let mult: Vec<Complex64> =
                (0..n).map(|p| Complex64::from_polar(1.0, -2.0 * PI * mode(p, n) as f64 * shift)).collect();
            fft.filter_axis(spec, block, axis, &mult);
        }
        let fval = f.eval(&j, &zero);
        let jg: f64 = j.iter().zip(&gvals).map(|(a, b)| a * b).sum();
        let phase = Complex64::from_polar(1.0, -2.0 * PI * t * (fval - jg) / h);
        for v in block.iter_mut() {
            *v *= phase;
        }
    }
    Ok(GridSection { spec: spec.clone(), values, valid: psi.valid.clone() })
}

/// Representative of `x` in the branch window `[lower, lower + 1)`.
fn representative(x: f64, lower: f64) -> f64 {
    lower + (x - lower).rem_euclid(1.0)
}

/// Time-`t` flow of the prequantum lift of the multivalued observable `ϑ_axis`,
/// with `ϑ_axis` read in the branch window `[window_lower, window_lower + 1)`.
/// `X_{ϑ} = -∂/∂j` carries no connection term, so
///
/// ```text
/// ψ_t(j, ϑ) = e^{-2πi t ϑ_rep / h} ψ(j + t e_axis, ϑ).
/// ```
///
/// `t` must be a whole number of action spacings. Nodes whose source lies
/// outside the box become invalid.
pub fn shift_flow(psi: &GridSection, axis: usize, t: f64, window_lower: f64) -> Result<GridSection> {
    let spec = &psi.spec;
    if axis >= spec.dim {
        return Err(GridError::Dimension { expected: spec.dim, got: axis + 1 });
    }
    let dj = spec.action_spacing(axis);
    let steps_f = t / dj;
    let steps = steps_f.round();
    if (steps_f - steps).abs() > 1e-9 * steps_f.abs().max(1.0) {
        return Err(GridError::NotCommensurate { t, spacing: dj });
    }
    let width = spec.action_upper[axis] - spec.action_lower[axis];
    if t.abs() >= width {
        return Err(GridError::BoxTooNarrow { axis, t });
    }
    let steps = steps as i64;
    let nt = spec.angle_nodes();
    let n = spec.action_points as i64;
    let stride = spec.action_stride(axis);
    let h = spec.planck_h;
    let phases: Vec<Complex64> = (0..nt)
        .map(|ti| {
            let theta = spec.angles_at(ti)[axis];
            Complex64::from_polar(1.0, -2.0 * PI * t * representative(theta, window_lower) / h)
        })
        .collect();
    let mut values = vec![Complex64::new(0.0, 0.0); spec.len()];
    let mut valid = vec![false; spec.action_nodes()];
    for ai in 0..spec.action_nodes() {
        let i = ((ai / stride) % spec.action_points) as i64;
        let src_i = i + steps;
        if src_i < 0 || src_i >= n {
            continue;
        }
        let src = (ai as i64 + steps * stride as i64) as usize;
        if !psi.valid[src] {
            continue;
        }
        valid[ai] = true;
        for ti in 0..nt {
            values[ai * nt + ti] = psi.values[src * nt + ti] * phases[ti];
        }
    }
    if !valid.iter().any(|v| *v) {
        return Err(GridError::BoxTooNarrow { axis, t });
    }
    Ok(GridSection { spec: spec.clone(), values, valid })
}

/// Branch windows compared by [`shift_flow_single_valuedness`].
pub const BRANCH_WINDOWS: (f64, f64) = (0.0, -0.5);

/// Relative sup-norm discrepancy between the time-`t` shift flows computed
/// with two different branch windows for `ϑ_axis`. At `t = h` the flow is
/// single valued and the discrepancy is rounding only; at `t = h/2` it is
/// of order one.
pub fn shift_flow_single_valuedness(spec: &GridSpec, axis: usize, t: f64) -> Result<f64> {
    spec.validate()?;
    let center: Vec<f64> = (0..spec.dim).map(|a| 0.5 * (spec.action_lower[a] + spec.action_upper[a])).collect();
    let width = (0..spec.dim).map(|a| spec.action_upper[a] - spec.action_lower[a]).fold(f64::INFINITY, f64::min) / 10.0;
    let mut m = vec![0i64; spec.dim];
    m[axis] = 1;
    let modes = [(vec![0i64; spec.dim], Complex64::new(1.0, 0.0)), (m, Complex64::new(0.5, 0.25))];
    let psi = GridSection::wave_packet(spec, &center, width, &modes);
    branch_discrepancy(&psi, axis, t, BRANCH_WINDOWS.0, BRANCH_WINDOWS.1)
}

/// Relative sup-norm difference of two branch choices of the shift flow.
pub fn branch_discrepancy(psi: &GridSection, axis: usize, t: f64, lower_a: f64, lower_b: f64) -> Result<f64> {
    let a = shift_flow(psi, axis, t, lower_a)?;
    let b = shift_flow(psi, axis, t, lower_b)?;
    let peak = psi.sup_norm();
    if peak == 0.0 {
        return Err(GridError::NoValidNodes);
    }
    Ok(a.sub(&b)?.sup_norm() / peak)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec1(points: usize) -> GridSpec {
        GridSpec::new(vec![-1.0], vec![1.0], 1.0).unwrap().with_points(points, 16).unwrap()
    }

    fn obs(dim: usize, s: &str) -> Observable {
        Observable::parse(dim, s).unwrap()
    }

    fn max_diff(a: &GridSection, b: &GridSection) -> f64 {
        a.sub(b).unwrap().sup_norm()
    }

    #[test]
    fn spec_validation() {
        assert!(GridSpec::new(vec![0.0], vec![1.0], 1.0).unwrap().with_points(7, 16).is_err());
        assert!(GridSpec::new(vec![0.0], vec![1.0], 1.0).unwrap().with_points(8, 4).is_err());
        assert!(GridSpec::new(vec![1.0], vec![0.0], 1.0).is_err());
        assert!(GridSpec::new(vec![0.0], vec![1.0], 0.0).is_err());
        let s = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], 1.0).unwrap();
        assert_eq!((s.action_points, s.angle_points), (129, 64));
    }

    #[test]
    fn hamiltonian_vector_field_of_action() {
        let x = hamiltonian_vf(&obs(1, "j1"));
        assert!(x.action[0].is_zero());
        assert_eq!(x.angle[0], Observable::constant(1, 1.0));
        let y = hamiltonian_vf(&obs(1, "cos(t1)"));
        let (a, b) = y.eval(&[0.3], &[0.125]);
        assert!((a[0] - 2.0 * PI * (2.0 * PI * 0.125).sin()).abs() < 1e-12);
        assert_eq!(b[0], 0.0);
    }

    #[test]
    fn angle_flow_points_down_the_actions() {
        // X_{ϑ} = -∂/∂j on a one-valued stand-in with the same derivative.
        let x = hamiltonian_vf(&obs(1, "sin(t1)"));
        let (a, _) = x.eval(&[0.0], &[0.0]);
        assert!((a[0] + 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn poisson_brackets() {
        assert!(poisson(&obs(2, "j1"), &obs(2, "j2")).is_zero());
        let pb = poisson(&obs(1, "j1"), &obs(1, "cos(t1)"));
        assert_eq!(pb, obs(1, "cos(t1)").d_angle(0).scale(-1.0));
        assert_eq!(pb, obs(1, "2*3.141592653589793*sin(t1)"));
    }

    #[test]
    fn bracket_sign_matches_finite_differences() {
        // {f, g} = X_g f with f = j1, g = cos 2πϑ1: differentiate f along the
        // flow of X_g by central differences.
        let (f, g) = (obs(1, "j1"), obs(1, "cos(t1)"));
        let xg = hamiltonian_vf(&g);
        let (p_j, p_t) = ([0.4], [0.1]);
        let (vj, vt) = xg.eval(&p_j, &p_t);
        let eps = 1e-6;
        let fwd = f.eval(&[p_j[0] + eps * vj[0]], &[p_t[0] + eps * vt[0]]);
        let bwd = f.eval(&[p_j[0] - eps * vj[0]], &[p_t[0] - eps * vt[0]]);
        let fd = (fwd - bwd) / (2.0 * eps);
        assert!((fd - poisson(&f, &g).eval(&p_j, &p_t)).abs() < 1e-6);
        // Jacobi-consistent Lie bracket: [X_f, X_g] = -X_{f,g}.
        let jf = obs(1, "j1^2");
        let pb = poisson(&jf, &g);
        let (lie_j, lie_t) = lie_bracket(&hamiltonian_vf(&jf), &xg, &[0.4], &[0.1]);
        let (xj, xt) = hamiltonian_vf(&pb).eval(&[0.4], &[0.1]);
        assert!((lie_j + xj[0]).abs() < 1e-9 && (lie_t + xt[0]).abs() < 1e-9);
    }

    fn lie_bracket(x: &VectorField, y: &VectorField, j: &[f64], t: &[f64]) -> (f64, f64) {
        // [X, Y]^a = X(Y^a) - Y(X^a) for one degree of freedom.
        let d = |c: &Observable, v: &VectorField| {
            let (vj, vt) = v.eval(j, t);
            c.d_action(0).eval(j, t) * vj[0] + c.d_angle(0).eval(j, t) * vt[0]
        };
        (d(&y.action[0], x) - d(&x.action[0], y), d(&y.angle[0], x) - d(&x.angle[0], y))
    }

    #[test]
    fn covariant_derivative_of_constant_section() {
        let spec = spec1(33);
        let one = GridSection::from_fn(&spec, |_, _| Complex64::new(1.0, 0.0));
        let d = covariant_derivative(&one, &VectorField::angle_direction(1, 0)).unwrap();
        let expect = GridSection::from_fn(&spec, |j, _| Complex64::new(0.0, -2.0 * PI * j[0] / spec.planck_h));
        assert!(max_diff(&d, &expect) < 1e-12);
    }

    #[test]
    fn basis_section_is_flat_on_its_slice() {
        let spec = GridSpec::new(vec![-4.0], vec![4.0], 1.0).unwrap().with_points(33, 64).unwrap();
        for n in -3..=3 {
            assert!(covariant_constancy_defect(&spec, &[n]).unwrap() < 1e-10);
        }
        assert!(matches!(covariant_constancy_defect(&spec, &[9]), Err(GridError::SliceNotOnGrid(_))));
    }

    #[test]
    fn prequant_of_action_on_constant_section() {
        // P_{j1} 1 = -iħ(-(2πi/h) j1) + j1 = 0.
        let spec = spec1(33);
        let one = GridSection::from_fn(&spec, |_, _| Complex64::new(1.0, 0.0));
        let p = prequant_apply(&obs(1, "j1"), &one).unwrap();
        assert!(p.sup_norm() < 1e-14);
    }

    #[test]
    fn prequant_of_action_is_eigen_on_basis_slices() {
        let spec = GridSpec::new(vec![-4.0], vec![4.0], 1.0).unwrap().with_points(33, 16).unwrap();
        let sigma = GridSection::basis_section(&spec, &[3]);
        let p = prequant_apply(&obs(1, "j1"), &sigma).unwrap();
        let ai = spec.action_index_of(&[3.0]).unwrap();
        for ti in 0..spec.angle_nodes() {
            assert!((p.value_at(ai, ti) - 3.0 * sigma.value_at(ai, ti)).norm() < 1e-12);
        }
    }

    #[test]
    fn spectral_derivative_is_exact_for_band_limited_data() {
        let spec = spec1(9);
        let psi = GridSection::from_fn(&spec, |j, t| Complex64::from_polar(1.0 + j[0], 2.0 * PI * 3.0 * t[0]));
        let d = d_angle(&psi, 0);
        let expect = psi.scale(Complex64::new(0.0, 6.0 * PI));
        assert!(max_diff(&d, &expect) < 1e-12);
    }

    #[test]
    fn action_difference_is_exact_on_quartics_and_flags_edges() {
        let spec = spec1(17);
        let psi = GridSection::from_fn(&spec, |j, _| Complex64::new(j[0].powi(4) - j[0], 0.0));
        let d = d_action(&psi, 0);
        let expect = GridSection::from_fn(&spec, |j, _| Complex64::new(4.0 * j[0].powi(3) - 1.0, 0.0));
        let mut e = expect.clone();
        e.valid = d.valid.clone();
        assert!(max_diff(&d, &e) < 1e-12);
        assert_eq!(d.valid_count(), 17 - 4);
        assert!(!d.valid_actions()[1] && d.valid_actions()[2]);
    }

    #[test]
    fn dirac_residual_rejects_wide_support() {
        let spec = spec1(33);
        let one = GridSection::from_fn(&spec, |_, _| Complex64::new(1.0, 0.0));
        assert!(matches!(dirac_residual(&obs(1, "j1"), &obs(1, "cos(t1)"), &one), Err(GridError::SupportViolation(_))));
    }

    #[test]
    fn dirac_exact_for_actions() {
        let spec = GridSpec::new(vec![-1.0, -1.0], vec![1.0, 1.0], 1.0).unwrap().with_points(33, 8).unwrap();
        let modes = [(vec![0, 0], Complex64::new(1.0, 0.0)), (vec![1, 1], Complex64::new(0.3, 0.2))];
        let psi = GridSection::wave_packet(&spec, &[0.0, 0.0], 0.08, &modes);
        assert!(dirac_residual(&obs(2, "j1"), &obs(2, "j2"), &psi).unwrap() < 1e-12);
    }

    #[test]
    fn quantomorphism_flow_of_action() {
        // f = j1: P_f = -iħ∂/∂ϑ1, so the flow is a pure angle translation.
        let spec = spec1(9);
        let psi = GridSection::basis_section(&spec, &[2]);
        let t = 0.15;
        let out = quantomorphism_flow(&obs(1, "j1"), t, &psi).unwrap();
        let expect = psi.scale(Complex64::from_polar(1.0, -2.0 * PI * 2.0 * t));
        assert!(max_diff(&out, &expect) < 1e-12);
        assert!(matches!(quantomorphism_flow(&obs(1, "cos(t1)"), t, &psi), Err(GridError::UnsupportedObservable)));
    }

    #[test]
    fn quantomorphism_flow_unitary_and_group_law() {
        let spec = spec1(17);
        let modes = [(vec![0], Complex64::new(1.0, 0.0)), (vec![-2], Complex64::new(0.2, 0.7))];
        let psi = GridSection::wave_packet(&spec, &[0.1], 0.3, &modes);
        let f = obs(1, "j1^2 + 0.5*j1");
        let a = quantomorphism_flow(&f, 0.3, &psi).unwrap();
        assert!((a.norm() - psi.norm()).abs() < 1e-12 * psi.norm());
        let ab = quantomorphism_flow(&f, 0.4, &a).unwrap();
        let direct = quantomorphism_flow(&f, 0.7, &psi).unwrap();
        assert!(max_diff(&ab, &direct) < 1e-11);
    }

    #[test]
    fn quantomorphism_flow_generator_is_prequant_operator() {
        let spec = spec1(33);
        let modes = [(vec![1], Complex64::new(1.0, 0.0)), (vec![-1], Complex64::new(0.4, 0.0))];
        let psi = GridSection::wave_packet(&spec, &[0.0], 0.25, &modes);
        let f = obs(1, "j1^2");
        let eps = 1e-5;
        let fwd = quantomorphism_flow(&f, eps, &psi).unwrap();
        let bwd = quantomorphism_flow(&f, -eps, &psi).unwrap();
        let deriv = fwd.sub(&bwd).unwrap().scale(Complex64::new(1.0 / (2.0 * eps), 0.0));
        let gen = prequant_apply(&f, &psi).unwrap().scale(Complex64::new(0.0, -1.0 / spec.hbar()));
        assert!(max_diff(&deriv, &gen) < 1e-6 * gen.sup_norm());
    }

    #[test]
    fn shift_flow_single_valued_at_planck_time() {
        let spec = GridSpec::new(vec![-4.0], vec![4.0], 1.0).unwrap().with_points(129, 64).unwrap();
        assert!(shift_flow_single_valuedness(&spec, 0, 1.0).unwrap() < 1e-12);
        assert!(shift_flow_single_valuedness(&spec, 0, 0.5).unwrap() > 0.1);
        let psi = GridSection::wave_packet(&spec, &[0.0], 0.5, &[(vec![1], Complex64::new(1.0, 0.0))]);
        assert_eq!(branch_discrepancy(&psi, 0, 0.5, 0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(shift_flow_single_valuedness(&spec, 0, 8.0), Err(GridError::BoxTooNarrow { .. })));
        assert!(matches!(shift_flow_single_valuedness(&spec, 0, 0.3), Err(GridError::NotCommensurate { .. })));
    }

    #[test]
    fn shift_flow_lowers_basis_sections() {
        // e^{hZ_ϑ} maps σ_n on j = n h to σ_{n-1} on j = (n-1) h.
        let spec = GridSpec::new(vec![-4.0], vec![4.0], 1.0).unwrap().with_points(33, 16).unwrap();
        let sigma = GridSection::basis_section(&spec, &[2]);
        let out = shift_flow(&sigma, 0, 1.0, 0.0).unwrap();
        let lowered = GridSection::basis_section(&spec, &[1]);
        let ai = spec.action_index_of(&[1.0]).unwrap();
        for ti in 0..spec.angle_nodes() {
            assert!((out.value_at(ai, ti) - lowered.value_at(ai, ti)).norm() < 1e-12);
        }
        assert!(covariant_constancy_defect(&spec, &[1]).unwrap() < 1e-10);
    }

    #[test]
    fn csv_round_trip() {
        let spec = GridSpec::new(vec![-1.0, 0.0], vec![1.0, 2.0], 0.5).unwrap().with_points(8, 8).unwrap();
        let psi = d_action(&GridSection::wave_packet(&spec, &[0.0, 1.0], 0.4, &[(vec![1, -1], Complex64::new(0.3, 0.9))]), 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.csv");
        psi.write_csv(&path).unwrap();
        let back = GridSection::read_csv(&path).unwrap();
        assert_eq!(back, psi);
    }
}
