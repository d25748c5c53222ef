//! Python bindings: spherical pendulum quadratures, spectrum and monodromy,
//! shift words on a single chart, and the grid checks.

use bsquant::affine_lattice::{ActionBox, ChartAtlas, ChartId, LatticeLabel};
use bsquant::observable::Observable;
use bsquant::pendulum::{self, EMValue, LoopSpec, Orientation, PendulumError, SpectrumOptions, SpectrumWindow};
use bsquant::prequant_grid::{self, dirac_default_spec, dirac_test_section, GridError};
use bsquant::shift_ops::{apply_word, parse_word, ShiftError};
use bsquant::state_space::QuantumState;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn pendulum_err(e: PendulumError) -> PyErr {
    match e {
        PendulumError::InvalidLoop(_) | PendulumError::InvalidWindow(_) | PendulumError::NotFinite => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn grid_err(e: GridError) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn shift_err(e: ShiftError) -> PyErr {
    match e {
        ShiftError::Parse(_) | ShiftError::Dimension { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn em(h: f64, j: f64) -> PyResult<EMValue> {
    EMValue::new(h, j).map_err(pendulum_err)
}

#[pyclass(get_all, frozen, skip_from_py_object)]
#[derive(Clone, Debug)]
struct ActionData {
    i1: f64,
    i2: f64,
    theta: Option<f64>,
    period: f64,
}

#[pymethods]
impl ActionData {
    fn __repr__(&self) -> String {
        format!("ActionData(i1={}, i2={}, theta={:?}, period={})", self.i1, self.i2, self.theta, self.period)
    }
}

/// Region of `(h, j)`: `regular`, `isolated_critical`, `boundary` or `empty`.
#[pyfunction]
fn classify(h: f64, j: f64) -> PyResult<String> {
    let r = pendulum::classify(em(h, j)?);
    Ok(serde_json::to_value(r).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
}

/// Actions, rotation angle and period at a regular value.
#[pyfunction]
fn action_data(h: f64, j: f64) -> PyResult<ActionData> {
    let a = pendulum::action_data(em(h, j)?).map_err(pendulum_err)?;
    Ok(ActionData { i1: a.i1, i2: a.i2, theta: a.theta, period: a.period })
}

/// Bohr-Sommerfeld points `(n1, n2, h, j)` sorted by `(n2, n1)`.
#[pyfunction]
#[pyo3(signature = (h_min=-0.9, h_max=0.9, j_min=-0.9, j_max=0.9, h_planck=0.1, critical_margin=0.05))]
fn bs_spectrum(
    py: Python<'_>,
    h_min: f64,
    h_max: f64,
    j_min: f64,
    j_max: f64,
    h_planck: f64,
    critical_margin: f64,
) -> PyResult<Vec<(i64, i64, f64, f64)>> {
    let w = SpectrumWindow::new(h_min, h_max, j_min, j_max).map_err(pendulum_err)?;
    let opts = SpectrumOptions { critical_margin };
    let s = py.detach(|| pendulum::bs_spectrum(&w, h_planck, &opts)).map_err(pendulum_err)?;
    Ok(s.points.iter().map(|p| (p.n1, p.n2, p.h, p.j)).collect())
}

#[pyclass(get_all, frozen, skip_from_py_object)]
#[derive(Clone, Debug)]
struct Monodromy {
    matrix: [[i64; 2]; 2],
    delta_theta: f64,
    residual: f64,
    refinements: usize,
}

#[pymethods]
impl Monodromy {
    fn __repr__(&self) -> String {
        format!("Monodromy(matrix={:?}, residual={:e})", self.matrix, self.residual)
    }

    /// `M (n1, n2)`.
    fn transport(&self, n1: i64, n2: i64) -> (i64, i64) {
        let m = self.matrix;
        (m[0][0] * n1 + m[0][1] * n2, m[1][0] * n1 + m[1][1] * n2)
    }
}

/// Monodromy of the circle of `radius` around `center`.
#[pyfunction]
#[pyo3(signature = (radius=0.5, samples=256, clockwise=false, center=(1.0, 0.0), start_angle=0.0))]
fn monodromy(radius: f64, samples: usize, clockwise: bool, center: (f64, f64), start_angle: f64) -> PyResult<Monodromy> {
    let spec = LoopSpec {
        center: em(center.0, center.1)?,
        radius,
        samples,
        orientation: if clockwise { Orientation::Clockwise } else { Orientation::Counterclockwise },
        start_angle,
    };
    let r = pendulum::monodromy(&spec).map_err(pendulum_err)?;
    Ok(Monodromy { matrix: r.matrix, delta_theta: r.delta_theta, residual: r.residual, refinements: r.refinements })
}

/// Applies a shift word to the basis state at `n` in a single cubical
/// chart; returns `[(n, re, im)]`.
#[pyfunction]
#[pyo3(signature = (word, n, box_half_width=10.0, planck_h=1.0))]
fn shift(word: &str, n: Vec<i64>, box_half_width: f64, planck_h: f64) -> PyResult<Vec<(Vec<i64>, f64, f64)>> {
    let b = ActionBox::cube(n.len(), box_half_width).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let atlas = ChartAtlas::single_chart(planck_h, b).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let word = parse_word(word).map_err(shift_err)?;
    let u = QuantumState::basis(LatticeLabel::new(ChartId(0), n));
    let v = apply_word(&atlas, &word, &u).map_err(shift_err)?;
    Ok(v.iter().map(|(l, a)| (l.n.clone(), a.re, a.im)).collect())
}

/// Dirac residuals `(coarse, fine, order)` of a pair on the standard grid.
#[pyfunction]
fn dirac_residual(py: Python<'_>, f: &str, g: &str) -> PyResult<(f64, f64, Option<f64>)> {
    let spec = dirac_default_spec();
    let parse = |s: &str| Observable::parse(spec.dim, s).map_err(|e| PyValueError::new_err(e.to_string()));
    let (f, g) = (parse(f)?, parse(g)?);
    let row = py.detach(|| prequant_grid::dirac_refinement(&f, &g, &spec, dirac_test_section)).map_err(grid_err)?;
    Ok((row.coarse, row.fine, row.order))
}

#[pymodule]
fn bsquant_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ActionData>()?;
    m.add_class::<Monodromy>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(action_data, m)?)?;
    m.add_function(wrap_pyfunction!(bs_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(monodromy, m)?)?;
    m.add_function(wrap_pyfunction!(shift, m)?)?;
    m.add_function(wrap_pyfunction!(dirac_residual, m)?)?;
    Ok(())
}
