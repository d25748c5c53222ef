//! The spherical pendulum.
//!
//! With `H = ½|p|² + q₃` and `J = q₁p₂ - q₂p₁` on `T*S²`, the height `z = q₃`
//! obeys `ż² = P(z)` with the reduced cubic
//!
//! ```text
//! P(z) = 2(h - z)(1 - z²) - j²
//! ```
//!
//! The actions are `I₁ = j` and
//! `I₂ = (1/π) ∫_{z₁}^{z₂} √P(z) / (1 - z²) dz`, normalised so that the
//! Bohr-Sommerfeld conditions read `I₁ = n₂ h_planck`, `I₂ = n₁ h_planck`.
//! The rotation angle `Θ` and period `T` give the derivatives
//! `∂I₂/∂h = T/2π` and `∂I₂/∂j = -Θ/2π`.
//!
//! Integrals use `z = z₁ + (z₂ - z₁) sin²u`, which cancels the square-root
//! endpoint singularities, and adaptive Gauss-Kronrod quadrature.

mod numerics;
pub mod monodromy;
pub mod spectrum;

pub use monodromy::{label_transport, monodromy, LoopSpec, MonodromyReport, MonodromySample, Orientation};
pub use numerics::{brent, integrate, Quadrature};
pub use spectrum::{bs_spectrum, SkipRecord, Spectrum, SpectrumOptions, SpectrumPoint, SpectrumWindow};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::tolerances::CLASSIFY_TOL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PendulumError {
    #[error("({h}, {j}) is {region:?}, not a regular value")]
    NotRegular { h: f64, j: f64, region: Region },
    #[error("rotation angle is undefined at j = 0")]
    ZeroMomentum,
    #[error("quadrature did not converge for {what} at ({h}, {j}): error estimate {error:e}")]
    Quadrature { what: &'static str, h: f64, j: f64, error: f64 },
    #[error("non-finite energy-momentum value")]
    NotFinite,
    #[error("invalid loop: {0}")]
    InvalidLoop(String),
    #[error("branch tracking of the rotation angle failed near loop angle {phi}")]
    BranchAmbiguity { phi: f64 },
    #[error("invalid spectrum window: {0}")]
    InvalidWindow(String),
}

pub type Result<T> = std::result::Result<T, PendulumError>;

/// A point `(h, j)` of the energy-momentum plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EMValue {
    pub h: f64,
    pub j: f64,
}

impl EMValue {
    pub fn new(h: f64, j: f64) -> Result<Self> {
        if !(h.is_finite() && j.is_finite()) {
            return Err(PendulumError::NotFinite);
        }
        Ok(Self { h, j })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Regular,
    IsolatedCritical,
    Boundary,
    Empty,
}

/// `P(z) = 2(h - z)(1 - z²) - j²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedCubic {
    pub h: f64,
    pub j: f64,
}

impl ReducedCubic {
    pub fn new(v: EMValue) -> Self {
        Self { h: v.h, j: v.j }
    }

    /// Coefficients of `z³, z², z, 1`.
    pub fn coefficients(&self) -> [f64; 4] {
        [2.0, -2.0 * self.h, -2.0, 2.0 * self.h - self.j * self.j]
    }

    pub fn eval(&self, z: f64) -> f64 {
        2.0 * (self.h - z) * (1.0 - z * z) - self.j * self.j
    }

    pub fn derivative(&self, z: f64) -> f64 {
        -2.0 * (1.0 - z * z) - 4.0 * z * (self.h - z)
    }

    /// Size of the coefficients, used to scale residual tolerances.
    pub fn scale(&self) -> f64 {
        2.0 * (1.0 + self.h.abs()) + self.j * self.j
    }

    /// Local maximum of `P`, at `z₋ = (h - √(h² + 3))/3`.
    pub fn local_max_point(&self) -> f64 {
        (self.h - (self.h * self.h + 3.0).sqrt()) / 3.0
    }
}

pub fn classify(v: EMValue) -> Region {
    let (h, j) = (v.h, v.j);
    if (h - 1.0).abs() <= CLASSIFY_TOL && j.abs() <= CLASSIFY_TOL {
        return Region::IsolatedCritical;
    }
    if j == 0.0 {
        return if h < -1.0 - CLASSIFY_TOL {
            Region::Empty
        } else if h <= -1.0 + CLASSIFY_TOL {
            Region::Boundary
        } else {
            Region::Regular
        };
    }
    let p = ReducedCubic::new(v);
    let zm = p.local_max_point();
    if zm <= -1.0 {
        return Region::Empty;
    }
    let top = p.eval(zm);
    let tol = CLASSIFY_TOL * p.scale();
    if top < -tol {
        Region::Empty
    } else if top <= tol {
        Region::Boundary
    } else {
        Region::Regular
    }
}

/// Roots `z₁ ≤ z₂` of `P` bounding the motion, and the third root `z₃ ≥ 1`.
/// Distances to the poles are kept separately so that they stay accurate
/// when a turning point approaches `±1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurningInterval {
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
    pub one_plus_z1: f64,
    pub one_minus_z2: f64,
    pub one_minus_z3: f64,
}

impl TurningInterval {
    pub fn width(&self) -> f64 {
        2.0 - self.one_plus_z1 - self.one_minus_z2
    }
}

pub fn turning_points(v: EMValue) -> Result<TurningInterval> {
    let region = classify(v);
    if region != Region::Regular {
        return Err(PendulumError::NotRegular { h: v.h, j: v.j, region });
    }
    Ok(roots_unchecked(v))
}

fn newton(mut x: f64, g: impl Fn(f64) -> (f64, f64), steps: usize) -> f64 {
    for _ in 0..steps {
        let (val, der) = g(x);
        if der == 0.0 || !der.is_finite() {
            break;
        }
        let next = x - val / der;
        if !next.is_finite() {
            break;
        }
        x = next;
    }
    x
}

/// `P(w - 1)` and its derivative, for `w = 1 + z`.
fn p_near_south(h: f64, j: f64, w: f64) -> (f64, f64) {
    let a = h + 1.0 - w;
    let b = w * (2.0 - w);
    (2.0 * a * b - j * j, 2.0 * (-b + a * (2.0 - 2.0 * w)))
}

/// `P(1 - v)` and its derivative, for `v = 1 - z`.
fn p_near_north(h: f64, j: f64, v: f64) -> (f64, f64) {
    let a = h - 1.0 + v;
    let b = v * (2.0 - v);
    (2.0 * a * b - j * j, 2.0 * (b + a * (2.0 - 2.0 * v)))
}

/// Turning points for any non-empty value, including `(1, 0)` and the
/// boundary (where `z₁ = z₂`).
fn roots_unchecked(v: EMValue) -> TurningInterval {
    let (h, j) = (v.h, v.j);
    if j == 0.0 {
        let (z2, z3) = if h < 1.0 { (h, 1.0) } else { (1.0, h) };
        return TurningInterval { z1: -1.0, z2, z3, one_plus_z1: 0.0, one_minus_z2: 1.0 - z2, one_minus_z3: 1.0 - z3 };
    }
    let p = -1.0 - h * h / 3.0;
    let q = -2.0 * h * h * h / 27.0 + 2.0 * h / 3.0 - j * j / 2.0;
    let m = 2.0 * (-p / 3.0).sqrt();
    let arg = ((3.0 * q / (2.0 * p)) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
    let phi = arg.acos() / 3.0;
    let mut r: Vec<f64> = (0..3).map(|k| m * (phi - 2.0 * PI * k as f64 / 3.0).cos() + h / 3.0).collect();
    r.sort_by(f64::total_cmp);
    let w1 = newton(1.0 + r[0], |w| p_near_south(h, j, w), 2);
    let v2 = newton(1.0 - r[1], |x| p_near_north(h, j, x), 2);
    let v3 = newton(1.0 - r[2], |x| p_near_north(h, j, x), 2);
    TurningInterval { z1: w1 - 1.0, z2: 1.0 - v2, z3: 1.0 - v3, one_plus_z1: w1, one_minus_z2: v2, one_minus_z3: v3 }
}

/// Actions, rotation angle and period of a regular torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionData {
    pub i1: f64,
    pub i2: f64,
    /// Undefined (`None`) on `j = 0`.
    pub theta: Option<f64>,
    pub period: f64,
}

const QUAD_TARGET: f64 = 1e-13;
const QUAD_ACCEPT: f64 = 1e-10;
const QUAD_MAX_INTERVALS: usize = 4000;

#[derive(Clone, Copy)]
enum Integral {
    Period,
    Rotation,
    Action,
}

fn ratio(num: f64, den: f64, limit: f64) -> f64 {
    if den == 0.0 {
        limit
    } else {
        num / den
    }
}

fn quad(tp: &TurningInterval, v: EMValue, which: Integral) -> Result<f64> {
    let d = tp.width();
    let gap = tp.one_minus_z2 - tp.one_minus_z3;
    let f = |u: f64| {
        let (s, c) = u.sin_cos();
        let (s2, c2) = (s * s, c * c);
        let south = tp.one_plus_z1 + d * s2;
        let north = tp.one_minus_z2 + d * c2;
        let root = (2.0 * (gap + d * c2)).sqrt();
        match which {
            Integral::Period => 1.0 / root,
            Integral::Rotation => 1.0 / (south * north * root),
            Integral::Action => ratio(s2, south, 1.0 / d) * ratio(c2, north, 1.0 / d) * root,
        }
    };
    let q = integrate(f, 0.0, 0.5 * PI, QUAD_TARGET, QUAD_MAX_INTERVALS);
    let what = match which {
        Integral::Period => "period",
        Integral::Rotation => "rotation angle",
        Integral::Action => "action",
    };
    if !q.value.is_finite() || q.error > QUAD_ACCEPT * q.value.abs() {
        return Err(PendulumError::Quadrature { what, h: v.h, j: v.j, error: q.error });
    }
    Ok(match which {
        Integral::Period => 4.0 * q.value,
        Integral::Rotation => 4.0 * v.j * q.value,
        Integral::Action => 2.0 * d * d / PI * q.value,
    })
}

/// `I₂` without the regularity check; defined on the closure of the regular
/// set, including `(1, 0)`. Vanishes on the boundary curve.
pub(crate) fn i2_unchecked(v: EMValue) -> Result<f64> {
    let tp = roots_unchecked(v);
    if tp.width() <= 0.0 {
        return Ok(0.0);
    }
    quad(&tp, v, Integral::Action)
}

pub fn action_i2(v: EMValue) -> Result<f64> {
    let tp = turning_points(v)?;
    quad(&tp, v, Integral::Action)
}

pub fn rotation_angle(v: EMValue) -> Result<f64> {
    let tp = turning_points(v)?;
    if v.j == 0.0 {
        return Err(PendulumError::ZeroMomentum);
    }
    quad(&tp, v, Integral::Rotation)
}

pub fn period(v: EMValue) -> Result<f64> {
    let tp = turning_points(v)?;
    quad(&tp, v, Integral::Period)
}

pub fn action_data(v: EMValue) -> Result<ActionData> {
    let tp = turning_points(v)?;
    let theta = if v.j == 0.0 { None } else { Some(quad(&tp, v, Integral::Rotation)?) };
    Ok(ActionData { i1: v.j, i2: quad(&tp, v, Integral::Action)?, theta, period: quad(&tp, v, Integral::Period)? })
}

/// Point of the boundary curve (relative equilibria) at height `z₀ ∈ (-1, 0)`,
/// with `j ≥ 0`.
pub fn boundary_point(z0: f64) -> EMValue {
    let s = 1.0 - z0 * z0;
    EMValue { h: z0 - s / (2.0 * z0), j: (-s * s / z0).sqrt() }
}

/// Lowest energy at momentum `j`: the boundary curve, `-1` at `j = 0`.
pub fn boundary_energy(j: f64) -> f64 {
    if j == 0.0 {
        return -1.0;
    }
    let j2 = j * j;
    let g = |z: f64| -(1.0 - z * z).powi(2) / z - j2;
    let mut hi = -0.5;
    while g(hi) <= 0.0 {
        hi *= 0.5;
    }
    let lo = -1.0;
    let z0 = brent(g, lo, hi, -j2, g(hi), 1e-16).unwrap_or(hi);
    boundary_point(z0).h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tolerances::{PENDULUM_REL_TOL, TURNING_POINT_TOL};

    fn em(h: f64, j: f64) -> EMValue {
        EMValue::new(h, j).unwrap()
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify(em(1.0, 0.0)), Region::IsolatedCritical);
        assert_eq!(classify(em(-1.0, 0.0)), Region::Boundary);
        assert_eq!(classify(em(0.0, 0.0)), Region::Regular);
        assert_eq!(classify(em(-1.5, 0.0)), Region::Empty);
        assert_eq!(classify(em(-0.5, 2.0)), Region::Empty);
        assert_eq!(classify(em(2.0, 0.3)), Region::Regular);
        let b = boundary_point(-0.4);
        assert_eq!(classify(b), Region::Boundary);
    }

    #[test]
    fn turning_point_examples() {
        let t = turning_points(em(0.0, 0.0)).unwrap();
        assert_eq!((t.z1, t.z2), (-1.0, 0.0));
        let t = turning_points(em(1.5, 0.0)).unwrap();
        assert_eq!((t.z1, t.z2), (-1.0, 1.0));
        let mut prev = turning_points(em(0.0, 0.2)).unwrap();
        for j in [0.1, 0.05, 0.01, 0.001] {
            let t = turning_points(em(0.0, j)).unwrap();
            assert!(t.z1 > -1.0 && t.z2 < 0.0 && t.z1 < t.z2);
            assert!(t.z1 < prev.z1 && t.z2 > prev.z2);
            prev = t;
        }
        assert!(prev.one_plus_z1 < 1e-6 && prev.z2 > -1e-6);
        for &(h, j) in &[(0.0, 0.3), (0.5, 0.2), (1.7, -0.4), (-0.2, 0.6), (3.0, 1.5), (0.99, 1e-4)] {
            let v = em(h, j);
            let t = turning_points(v).unwrap();
            let p = ReducedCubic::new(v);
            for z in [t.z1, t.z2, t.z3] {
                assert!(p.eval(z).abs() <= TURNING_POINT_TOL * p.scale(), "({h},{j}) z={z} P={}", p.eval(z));
            }
            assert!(-1.0 < t.z1 && t.z1 < t.z2 && t.z2 < 1.0 && t.z3 > 1.0);
        }
    }

    #[test]
    fn rotation_angle_is_odd_and_signals_zero_momentum() {
        for &(h, j) in &[(0.2, 0.3), (1.5, 0.4), (0.5, 1e-3)] {
            let a = rotation_angle(em(h, j)).unwrap();
            let b = rotation_angle(em(h, -j)).unwrap();
            assert!((a + b).abs() <= PENDULUM_REL_TOL * a.abs());
        }
        assert_eq!(rotation_angle(em(0.3, 0.0)), Err(PendulumError::ZeroMomentum));
        assert!(matches!(action_i2(em(1.0, 0.0)), Err(PendulumError::NotRegular { .. })));
    }

    #[test]
    fn action_derivatives_match_period_and_rotation() {
        for &(h, j) in &[(0.3, 0.4), (1.6, 0.2), (0.8, -0.5)] {
            let d = 1e-5;
            let dh = (action_i2(em(h + d, j)).unwrap() - action_i2(em(h - d, j)).unwrap()) / (2.0 * d);
            let dj = (action_i2(em(h, j + d)).unwrap() - action_i2(em(h, j - d)).unwrap()) / (2.0 * d);
            let t = period(em(h, j)).unwrap();
            let th = rotation_angle(em(h, j)).unwrap();
            assert!((dh - t / (2.0 * PI)).abs() < 1e-8);
            assert!((dj + th / (2.0 * PI)).abs() < 1e-8);
        }
    }

    #[test]
    fn action_vanishes_at_the_boundary() {
        for z0 in [-0.3, -0.6, -0.9] {
            let b = boundary_point(z0);
            assert!((boundary_energy(b.j) - b.h).abs() < 1e-12);
            let mut last = f64::INFINITY;
            for eps in [1e-2, 1e-4, 1e-6] {
                let i = action_i2(em(b.h + eps, b.j)).unwrap();
                assert!(i < last && i > 0.0);
                last = i;
            }
            assert!(last < 1e-5);
        }
    }

    #[test]
    fn monotone_in_energy() {
        assert!(action_i2(em(0.5, 0.2)).unwrap() > action_i2(em(0.0, 0.2)).unwrap());
    }
}
