//! Bohr-Sommerfeld joint spectrum: `j = n₂ h_planck`, `I₂(h, j) = n₁ h_planck`.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use super::{action_i2, boundary_energy, boundary_point, brent, classify, i2_unchecked, EMValue, PendulumError, Region, Result};
use crate::tolerances::SPECTRUM_REL_TOL;

/// Relative slack when deciding whether `n₂ h_planck` lies on a window edge.
const WINDOW_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumWindow {
    pub h_min: f64,
    pub h_max: f64,
    pub j_min: f64,
    pub j_max: f64,
}

impl Default for SpectrumWindow {
    fn default() -> Self {
        Self { h_min: -0.9, h_max: 0.9, j_min: -0.9, j_max: 0.9 }
    }
}

impl SpectrumWindow {
    pub fn new(h_min: f64, h_max: f64, j_min: f64, j_max: f64) -> Result<Self> {
        let w = Self { h_min, h_max, j_min, j_max };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.h_min, self.h_max, self.j_min, self.j_max];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(PendulumError::InvalidWindow("bounds must be finite".into()));
        }
        if self.h_min > self.h_max || self.j_min > self.j_max {
            return Err(PendulumError::InvalidWindow("lower bound exceeds upper bound".into()));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.h_min >= self.h_max
    }

    /// Closed containment; `j` gets a relative slack so that lattice values
    /// `n₂ h_planck` on an edge count as inside.
    pub fn contains(&self, v: EMValue) -> bool {
        let s = WINDOW_SLACK * v.j.abs().max(1.0);
        v.h >= self.h_min && v.h <= self.h_max && v.j >= self.j_min - s && v.j <= self.j_max + s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumOptions {
    /// Points closer than this to `(1, 0)` are skipped.
    pub critical_margin: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { critical_margin: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub n1: i64,
    pub n2: i64,
    pub h: f64,
    pub j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub n1: i64,
    pub n2: i64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Sorted by `(n2, n1)`.
    pub points: Vec<SpectrumPoint>,
    pub skipped: Vec<SkipRecord>,
}

/// Rounds to 12 significant digits and prints the shortest representation
/// of the rounded value.
pub fn format_sig12(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        "0".into()
    } else {
        format!("{rounded}")
    }
}

impl Spectrum {
    pub fn find(&self, n1: i64, n2: i64) -> Option<&SpectrumPoint> {
        self.points.binary_search_by(|p| (p.n2, p.n1).cmp(&(n2, n1))).ok().map(|i| &self.points[i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n1,n2,h,j\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{}", p.n1, p.n2, format_sig12(p.h), format_sig12(p.j));
        }
        s
    }

    /// Scatter plot in the `(j, h)` plane with the boundary curve and the
    /// critical value `(1, 0)` marked.
    pub fn to_svg(&self, window: &SpectrumWindow) -> String {
        let (w, ht, pad) = (640.0, 480.0, 40.0);
        let (mut jlo, mut jhi) = (window.j_min.min(-0.1), window.j_max.max(0.1));
        let (mut hlo, mut hhi) = (window.h_min.min(-1.0), window.h_max.max(1.1));
        let (dj, dh) = (0.05 * (jhi - jlo), 0.05 * (hhi - hlo));
        jlo -= dj;
        jhi += dj;
        hlo -= dh;
        hhi += dh;
        let x = |j: f64| pad + (j - jlo) / (jhi - jlo) * (w - 2.0 * pad);
        let y = |h: f64| ht - pad - (h - hlo) / (hhi - hlo) * (ht - 2.0 * pad);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{ht}" viewBox="0 0 {w} {ht}">"#);
        let _ = writeln!(s, r#"<rect width="{w}" height="{ht}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#999" stroke-dasharray="4 3"/>"##,
            x(window.j_min),
            y(window.h_max),
            x(window.j_max) - x(window.j_min),
            y(window.h_min) - y(window.h_max)
        );
        let mut curve = Vec::new();
        for k in 0..=200 {
            let z0 = -1.0 + 1e-3 + (1.0 - 2e-3) * k as f64 / 200.0;
            let b = boundary_point(z0);
            if b.h <= hhi {
                curve.push((b.j, b.h));
            }
        }
        let mut pts: Vec<String> = curve.iter().rev().map(|&(j, h)| format!("{:.2},{:.2}", x(-j), y(h))).collect();
        pts.extend(curve.iter().map(|&(j, h)| format!("{:.2},{:.2}", x(j), y(h))));
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#333"/>"##, pts.join(" "));
        for p in &self.points {
            let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="2" fill="#1f4e9c"/>"##, x(p.j), y(p.h));
        }
        let (cx, cy) = (x(0.0), y(1.0));
        let _ = writeln!(
            s,
            r##"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="#c00" stroke-width="2"/>"##,
            cx - 5.0,
            cy - 5.0,
            cx + 5.0,
            cy + 5.0,
            cx - 5.0,
            cy + 5.0,
            cx + 5.0,
            cy - 5.0
        );
        s.push_str("</svg>\n");
        s
    }
}

/// All Bohr-Sommerfeld points in `window`, sorted by `(n2, n1)`.
pub fn bs_spectrum(window: &SpectrumWindow, h_planck: f64, opts: &SpectrumOptions) -> Result<Spectrum> {
    window.validate()?;
    if !(h_planck.is_finite() && h_planck > 0.0) {
        return Err(PendulumError::InvalidWindow("h_planck must be positive".into()));
    }
    if !(opts.critical_margin.is_finite() && opts.critical_margin >= 0.0) {
        return Err(PendulumError::InvalidWindow("critical margin must be non-negative".into()));
    }
    let mut out = Spectrum::default();
    if window.is_empty() {
        return Ok(out);
    }
    let n2_lo = (window.j_min / h_planck - WINDOW_SLACK).ceil() as i64;
    let n2_hi = (window.j_max / h_planck + WINDOW_SLACK).floor() as i64;
    for n2 in n2_lo..=n2_hi {
        let j = n2 as f64 * h_planck;
        let hb = boundary_energy(j);
        let lo = window.h_min.max(hb);
        if lo >= window.h_max {
            continue;
        }
        let i_lo = if window.h_min > hb { i2_unchecked(EMValue { h: window.h_min, j })? } else { 0.0 };
        let i_hi = i2_unchecked(EMValue { h: window.h_max, j })?;
        let n1_lo = ((i_lo / h_planck).floor() as i64 + 1).max(1);
        let n1_hi = (i_hi / h_planck).floor() as i64;
        for n1 in n1_lo..=n1_hi {
            let target = n1 as f64 * h_planck;
            let g = |h: f64| i2_unchecked(EMValue { h, j }).map(|i| i - target).unwrap_or(f64::NAN);
            let skip = |reason: &str| SkipRecord { n1, n2, reason: reason.into() };
            let Some(h) = brent(g, lo, window.h_max, i_lo - target, i_hi - target, 1e-15) else {
                out.skipped.push(skip("root finding failed"));
                continue;
            };
            let v = EMValue { h, j };
            if (h - 1.0).hypot(j) < opts.critical_margin {
                out.skipped.push(skip("within the critical margin of (1, 0)"));
                continue;
            }
            if classify(v) != Region::Regular {
                out.skipped.push(skip("not a regular value"));
                continue;
            }
            match action_i2(v) {
                Ok(i) if (i - target).abs() <= SPECTRUM_REL_TOL * target => {
                    out.points.push(SpectrumPoint { n1, n2, h, j });
                }
                _ => out.skipped.push(skip("Bohr-Sommerfeld condition not met")),
            }
        }
    }
    Ok(out)
}
