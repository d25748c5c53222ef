//! Monodromy of the action lattice around the critical value `(1, 0)`.
//!
//! The rotation angle is sampled along a circle in the `(h, j)` plane and
//! continued by unwrapping. Its net change `ΔΘ` after one circuit is a
//! multiple of `2π`; since `∂I₂/∂j = -Θ/2π`, the continued second action
//! returns as `I₂ - (ΔΘ/2π) j`, so labels transform by
//!
//! ```text
//! M = [[1, -ΔΘ/2π], [0, 1]]   acting on (n₁, n₂).
//! ```

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{action_data, classify, i2_unchecked, EMValue, PendulumError, Region, Result, Spectrum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Counterclockwise,
    Clockwise,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Counterclockwise => 1.0,
            Orientation::Clockwise => -1.0,
        }
    }
}

/// A circle `(h, j) = center + radius (cos φ, sin φ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSpec {
    pub center: EMValue,
    pub radius: f64,
    pub samples: usize,
    pub orientation: Orientation,
    /// Angle of the first sample's cell, in radians.
    pub start_angle: f64,
}

impl Default for LoopSpec {
    fn default() -> Self {
        Self { center: EMValue { h: 1.0, j: 0.0 }, radius: 0.5, samples: 256, orientation: Orientation::Counterclockwise, start_angle: 0.0 }
    }
}

/// Smallest number of samples accepted for a loop.
pub const MIN_LOOP_SAMPLES: usize = 8;

/// Successive unwrapped angles further apart than this trigger refinement.
const UNWRAP_STEP: f64 = PI / 4.0;

const MAX_REFINE_DEPTH: u32 = 40;

impl LoopSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            return Err(PendulumError::InvalidLoop("radius must be finite and non-negative".into()));
        }
        if self.samples < MIN_LOOP_SAMPLES {
            return Err(PendulumError::InvalidLoop(format!("need at least {MIN_LOOP_SAMPLES} samples")));
        }
        if !(self.center.h.is_finite() && self.center.j.is_finite() && self.start_angle.is_finite()) {
            return Err(PendulumError::InvalidLoop("non-finite loop parameters".into()));
        }
        Ok(())
    }

    /// Loop angle of sample `k`; sample `samples` closes the loop.
    pub fn angle(&self, k: usize) -> f64 {
        self.start_angle + self.orientation.sign() * 2.0 * PI * (k as f64 + 0.25) / self.samples as f64
    }

    pub fn point(&self, phi: f64) -> EMValue {
        EMValue { h: self.center.h + self.radius * phi.cos(), j: self.center.j + self.radius * phi.sin() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonodromySample {
    pub phi: f64,
    pub h: f64,
    pub j: f64,
    pub i2: f64,
    pub period: f64,
    pub theta: f64,
    pub theta_unwrapped: f64,
    /// Inserted by step refinement rather than part of the regular sampling.
    pub refined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonodromyReport {
    #[serde(rename = "loop")]
    pub loop_spec: LoopSpec,
    pub delta_theta: f64,
    /// `ΔΘ / 2π` before rounding.
    pub winding: f64,
    pub residual: f64,
    /// Label transformation `(n₁, n₂) ↦ M (n₁, n₂)`.
    pub matrix: [[i64; 2]; 2],
    pub max_step: f64,
    pub refinements: usize,
    pub samples: Vec<MonodromySample>,
}

impl MonodromyReport {
    pub fn determinant(&self) -> i64 {
        let m = self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> i64 {
        self.matrix[0][0] + self.matrix[1][1]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

struct Tracker<'a> {
    spec: &'a LoopSpec,
    samples: Vec<MonodromySample>,
    refinements: usize,
    max_step: f64,
}

impl Tracker<'_> {
    fn evaluate(&self, phi: f64) -> Result<(EMValue, f64, f64, f64)> {
        let v = self.spec.point(phi);
        if v.j == 0.0 {
            return Err(PendulumError::InvalidLoop(format!("sample at loop angle {phi} lies on j = 0")));
        }
        let region = classify(v);
        if region != Region::Regular {
            return Err(PendulumError::InvalidLoop(format!("loop leaves the regular set at ({}, {}): {region:?}", v.h, v.j)));
        }
        let a = action_data(v)?;
        Ok((v, a.i2, a.period, a.theta.expect("j is non-zero")))
    }

    fn push(&mut self, phi: f64, prev: Option<f64>, refined: bool, depth: u32) -> Result<f64> {
        let (v, i2, period, theta) = self.evaluate(phi)?;
        let unwrapped = match prev {
            None => theta,
            Some(u) => {
                let cand = theta + 2.0 * PI * ((u - theta) / (2.0 * PI)).round();
                let step = (cand - u).abs();
                if step >= UNWRAP_STEP {
                    if depth >= MAX_REFINE_DEPTH {
                        return Err(PendulumError::BranchAmbiguity { phi });
                    }
                    let last_phi = self.samples.last().expect("a previous sample").phi;
                    self.refinements += 1;
                    self.push(0.5 * (last_phi + phi), prev, true, depth + 1)?;
                    let u_mid = self.samples.last().expect("midpoint was pushed").theta_unwrapped;
                    return self.push(phi, Some(u_mid), refined, depth + 1);
                }
                self.max_step = self.max_step.max(step);
                cand
            }
        };
        self.samples.push(MonodromySample { phi, h: v.h, j: v.j, i2, period, theta, theta_unwrapped: unwrapped, refined });
        Ok(unwrapped)
    }
}

/// Tracks the rotation angle once around `spec` and reads off the
/// monodromy of the action lattice.
pub fn monodromy(spec: &LoopSpec) -> Result<MonodromyReport> {
    spec.validate()?;
    let mut t = Tracker { spec, samples: Vec::with_capacity(spec.samples + 1), refinements: 0, max_step: 0.0 };
    let first = t.push(spec.angle(0), None, false, 0)?;
    let mut u = first;
    for k in 1..=spec.samples {
        u = t.push(spec.angle(k), Some(u), false, 0)?;
    }
    let delta_theta = u - first;
    let winding = delta_theta / (2.0 * PI);
    let n = winding.round();
    Ok(MonodromyReport {
        loop_spec: *spec,
        delta_theta,
        winding,
        residual: (winding - n).abs(),
        matrix: [[1, -(n as i64)], [0, 1]],
        max_step: t.max_step,
        refinements: t.refinements,
        samples: t.samples,
    })
}

/// `M (n₁, n₂)`.
pub fn label_transport(n: [i64; 2], report: &MonodromyReport) -> [i64; 2] {
    let m = report.matrix;
    [m[0][0] * n[0] + m[0][1] * n[1], m[1][0] * n[0] + m[1][1] * n[1]]
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShearCheck {
    /// Spectrum points near the loop that were examined.
    pub checked: usize,
    /// Points whose image label is itself a computed spectrum point.
    pub mapped: usize,
    /// Points whose image torus lies outside the window or margins.
    pub outside: usize,
    /// Labels whose image should be in the spectrum but is not.
    pub failures: Vec<[i64; 2]>,
    /// Largest deviation of the continued second action from `n₁′ h_planck`.
    pub max_action_defect: f64,
}

/// Transports the labels of spectrum points within `band` of the loop once
/// around it and checks that each image is another spectrum point.
pub fn lattice_shear_check(
    spectrum: &Spectrum,
    window: &super::SpectrumWindow,
    h_planck: f64,
    report: &MonodromyReport,
    band: f64,
) -> Result<ShearCheck> {
    let spec = &report.loop_spec;
    let mut out = ShearCheck::default();
    for p in &spectrum.points {
        let dist = (p.h - spec.center.h).hypot(p.j - spec.center.j);
        if (dist - spec.radius).abs() > band {
            continue;
        }
        out.checked += 1;
        let img = label_transport([p.n1, p.n2], report);
        let continued = i2_unchecked(EMValue { h: p.h, j: p.j })? - report.winding * p.j;
        out.max_action_defect = out.max_action_defect.max((continued - img[0] as f64 * h_planck).abs());
        if spectrum.find(img[0], img[1]).is_some() {
            out.mapped += 1;
            continue;
        }
        let skipped = spectrum.skipped.iter().any(|s| s.n1 == img[0] && s.n2 == img[1]);
        let j = img[1] as f64 * h_planck;
        let top = i2_unchecked(EMValue { h: window.h_max, j })?;
        let bottom = if window.h_min > super::boundary_energy(j) { i2_unchecked(EMValue { h: window.h_min, j })? } else { 0.0 };
        let target = img[0] as f64 * h_planck;
        if skipped || img[0] < 1 || target > top || target < bottom {
            out.outside += 1;
        } else {
            out.failures.push([p.n1, p.n2]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(m12: i64) -> MonodromyReport {
        MonodromyReport {
            loop_spec: LoopSpec::default(),
            delta_theta: 0.0,
            winding: 0.0,
            residual: 0.0,
            matrix: [[1, m12], [0, 1]],
            max_step: 0.0,
            refinements: 0,
            samples: Vec::new(),
        }
    }

    #[test]
    fn label_transport_examples() {
        assert_eq!(label_transport([2, 1], &report(1)), [3, 1]);
        assert_eq!(label_transport([2, 1], &report(0)), [2, 1]);
        assert_eq!(label_transport(label_transport([5, -3], &report(1)), &report(-1)), [5, -3]);
    }

    #[test]
    fn degenerate_loop_is_trivial() {
        let spec = LoopSpec { center: EMValue { h: 0.3, j: 0.4 }, radius: 0.0, samples: 16, ..LoopSpec::default() };
        let r = monodromy(&spec).unwrap();
        assert_eq!(r.matrix, [[1, 0], [0, 1]]);
        assert_eq!(r.delta_theta, 0.0);
    }

    #[test]
    fn invalid_loops() {
        assert!(monodromy(&LoopSpec { radius: -1.0, ..LoopSpec::default() }).is_err());
        assert!(monodromy(&LoopSpec { samples: 3, ..LoopSpec::default() }).is_err());
        assert!(monodromy(&LoopSpec { radius: 0.0, ..LoopSpec::default() }).is_err());
        // Radius 3 crosses the boundary curve.
        assert!(matches!(monodromy(&LoopSpec { radius: 3.0, ..LoopSpec::default() }), Err(PendulumError::InvalidLoop(_))));
    }

    #[test]
    fn default_loop_gives_the_shear() {
        let r = monodromy(&LoopSpec::default()).unwrap();
        assert_eq!(r.matrix, [[1, 1], [0, 1]]);
        assert!(r.residual < 1e-9);
        let cw = monodromy(&LoopSpec { orientation: Orientation::Clockwise, ..LoopSpec::default() }).unwrap();
        assert_eq!(cw.matrix, [[1, -1], [0, 1]]);
    }
}
