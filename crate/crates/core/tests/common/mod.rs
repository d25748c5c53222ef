#![allow(dead_code)]

//! Independent oracles shared by the integration tests. None of them call
//! into the quadrature, root finding or transport code under test.

use std::f64::consts::PI;

pub fn cubic(h: f64, j: f64, z: f64) -> f64 {
    2.0 * (h - z) * (1.0 - z * z) - j * j
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Turning points by bisection on either side of the local maximum of the
/// cubic. `None` when the motion is empty or degenerate.
pub fn oracle_turning_points(h: f64, j: f64) -> Option<(f64, f64, f64)> {
    let f = |z: f64| cubic(h, j, z);
    if j == 0.0 {
        if h <= -1.0 {
            return None;
        }
        return Some(if h < 1.0 { (-1.0, h, 1.0) } else { (-1.0, 1.0, h) });
    }
    let zm = (h - (h * h + 3.0).sqrt()) / 3.0;
    if zm <= -1.0 || f(zm) <= 0.0 {
        return None;
    }
    let z1 = bisect(f, -1.0, zm);
    let z2 = bisect(f, zm, 1.0);
    let mut hi = 2.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    Some((z1, z2, bisect(f, 1.0, hi)))
}

/// `I₂` by the midpoint rule in `z = c + (Δ/2) cos φ`, which turns the
/// integrand into a smooth periodic function of `φ`.
pub fn oracle_i2(h: f64, j: f64, nodes: usize) -> f64 {
    let Some((z1, z2, z3)) = oracle_turning_points(h, j) else {
        return 0.0;
    };
    let (c, r) = (0.5 * (z1 + z2), 0.5 * (z2 - z1));
    let mut sum = 0.0;
    for k in 0..nodes {
        let phi = PI * (k as f64 + 0.5) / nodes as f64;
        let (s, co) = phi.sin_cos();
        let z = c + r * co;
        sum += r * r * s * s * (2.0 * (z3 - z)).sqrt() / ((1.0 - z) * (1.0 + z));
    }
    // (1/π) · (π/N) · Σ
    sum / nodes as f64
}

/// Result of integrating the reduced motion `z̈ = P'(z)/2` over one period.
#[derive(Debug, Clone, Copy)]
pub struct Trajectory {
    pub period: f64,
    pub i2: f64,
    pub theta: f64,
    pub max_energy_defect: f64,
}

#[derive(Clone, Copy)]
struct State {
    z: f64,
    v: f64,
    area: f64,
    angle: f64,
}

fn rhs(h: f64, j: f64, s: State) -> State {
    let dp = -2.0 * (1.0 - s.z * s.z) - 4.0 * s.z * (h - s.z);
    let q = 1.0 - s.z * s.z;
    // At j = 0 the motion starts on a pole, where q vanishes.
    let (centrifugal, angle) = if j == 0.0 { (0.0, 0.0) } else { (j * j / q, j / q) };
    State { z: s.v, v: 0.5 * dp, area: 2.0 * (h - s.z) - centrifugal, angle }
}

fn axpy(a: State, t: f64, b: State) -> State {
    State { z: a.z + t * b.z, v: a.v + t * b.v, area: a.area + t * b.area, angle: a.angle + t * b.angle }
}

fn rk4(h: f64, j: f64, s: State, dt: f64) -> State {
    let k1 = rhs(h, j, s);
    let k2 = rhs(h, j, axpy(s, 0.5 * dt, k1));
    let k3 = rhs(h, j, axpy(s, 0.5 * dt, k2));
    let k4 = rhs(h, j, axpy(s, dt, k3));
    State {
        z: s.z + dt / 6.0 * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z),
        v: s.v + dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
        area: s.area + dt / 6.0 * (k1.area + 2.0 * k2.area + 2.0 * k3.area + k4.area),
        angle: s.angle + dt / 6.0 * (k1.angle + 2.0 * k2.angle + 2.0 * k3.angle + k4.angle),
    }
}

/// Integrates from the lower turning point to the upper one with classical
/// RK4 and doubles: `T`, `I₂ = (1/2π) ∮ p_z dz`, `Θ = ∮ j/(1 - z²) dt`.
pub fn oracle_trajectory(h: f64, j: f64, dt: f64) -> Trajectory {
    let (z1, _, _) = oracle_turning_points(h, j).expect("regular value");
    let mut s = State { z: z1, v: 0.0, area: 0.0, angle: 0.0 };
    let mut t = 0.0;
    let mut worst = 0.0f64;
    let mut moving_up = false;
    loop {
        let next = rk4(h, j, s, dt);
        if moving_up && next.v <= 0.0 {
            // Locate v = 0 inside this step by bisection on the step length.
            let (mut lo, mut hi) = (0.0, dt);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if rk4(h, j, s, mid).v > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let end = rk4(h, j, s, lo);
            t += lo;
            return Trajectory { period: 2.0 * t, i2: end.area / PI, theta: 2.0 * end.angle, max_energy_defect: worst };
        }
        s = next;
        t += dt;
        moving_up |= s.v > 0.0;
        worst = worst.max((s.v * s.v - cubic(h, j, s.z)).abs());
        assert!(t < 1e3, "trajectory oracle did not reach the upper turning point");
    }
}

/// Labels `(n1, n2)` of the Bohr-Sommerfeld points in a window, found by
/// scanning `I₂` on a dense energy grid for each admissible `j` and counting
/// crossings of the levels `n₁ h_planck`. Points within `margin` of `(1, 0)`
/// are dropped.
pub fn oracle_spectrum_labels(
    (h_min, h_max, j_min, j_max): (f64, f64, f64, f64),
    h_planck: f64,
    margin: f64,
    grid: usize,
) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let n2_lo = (j_min / h_planck - 1e-9).ceil() as i64;
    let n2_hi = (j_max / h_planck + 1e-9).floor() as i64;
    for n2 in n2_lo..=n2_hi {
        let j = n2 as f64 * h_planck;
        let hs: Vec<f64> = (0..=grid).map(|k| h_min + (h_max - h_min) * k as f64 / grid as f64).collect();
        let is: Vec<f64> = hs.iter().map(|&h| oracle_i2(h, j, 400)).collect();
        for k in 0..grid {
            let (a, b) = (is[k] / h_planck, is[k + 1] / h_planck);
            let first = (a.floor() as i64 + 1).max(1);
            for n1 in first..=(b.floor() as i64) {
                let frac = (n1 as f64 - a) / (b - a);
                let h = hs[k] + frac * (hs[k + 1] - hs[k]);
                if (h - 1.0).hypot(j) >= margin {
                    out.push((n1, n2));
                }
            }
        }
    }
    out.sort_by_key(|&(n1, n2)| (n2, n1));
    out
}

use bsquant::affine_lattice::{
    ActionAngleChart, ActionBox, ChartAtlas, ChartId, ChartTransition, IntMatrix, LatticeLabel,
};
use bsquant::shift_ops::{ShiftStep, TransportStep};
use rand::Rng;

/// Integer determinant by cofactor expansion.
pub fn det(rows: &[Vec<i64>]) -> i64 {
    let n = rows.len();
    if n == 1 {
        return rows[0][0];
    }
    (0..n)
        .map(|c| {
            let minor: Vec<Vec<i64>> =
                rows[1..].iter().map(|r| r.iter().enumerate().filter(|(k, _)| *k != c).map(|(_, v)| *v).collect()).collect();
            let sign = if c % 2 == 0 { 1 } else { -1 };
            sign * rows[0][c] * det(&minor)
        })
        .sum()
}

/// Uniform over integer matrices with entries in `[-bound, bound]` and
/// determinant `±1` (`+1` only when `oriented`), by rejection.
pub fn random_unimodular(rng: &mut impl Rng, dim: usize, bound: i64, oriented: bool) -> IntMatrix {
    loop {
        let rows: Vec<Vec<i64>> = (0..dim).map(|_| (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect()).collect();
        let d = det(&rows);
        if d == 1 || (d == -1 && !oriented) {
            let refs: Vec<&[i64]> = rows.iter().map(|r| r.as_slice()).collect();
            return IntMatrix::from_rows(&refs).unwrap();
        }
    }
}

pub fn mat_vec(m: &IntMatrix, v: &[i64]) -> Vec<i64> {
    (0..v.len()).map(|r| (0..v.len()).map(|c| m.get(r, c) * v[c]).sum()).collect()
}

pub const EAST: ChartId = ChartId(0);
pub const NORTH: ChartId = ChartId(1);
pub const WEST: ChartId = ChartId(2);
pub const SOUTH: ChartId = ChartId(3);

/// Four strip charts around a hole at the origin (`h = 1`). Three overlaps
/// are glued by the identity; the south-to-east overlap by the shear
/// `[[1,1],[0,1]]`, so the loop east → north → west → south → east has that
/// holonomy. Each ordered pair of neighbours has exactly one transition.
pub fn ring_atlas() -> ChartAtlas {
    let bx = |lo: [f64; 2], hi: [f64; 2]| ActionBox::new(lo.to_vec(), hi.to_vec()).unwrap();
    let charts = vec![
        ActionAngleChart::new(EAST, bx([1.0, -9.0], [9.0, 9.0])),
        ActionAngleChart::new(NORTH, bx([-9.0, 1.0], [9.0, 9.0])),
        ActionAngleChart::new(WEST, bx([-9.0, -9.0], [-1.0, 9.0])),
        ActionAngleChart::new(SOUTH, bx([-9.0, -9.0], [9.0, -1.0])),
    ];
    let id = IntMatrix::identity(2);
    let shear = IntMatrix::from_rows(&[&[1, 1], &[0, 1]]).unwrap();
    let mut transitions = Vec::new();
    for (from, to, m) in [(EAST, NORTH, &id), (NORTH, WEST, &id), (WEST, SOUTH, &id), (SOUTH, EAST, &shear)] {
        transitions.extend(ChartTransition::linear(from, to, m.clone()).unwrap().with_inverse().unwrap());
    }
    ChartAtlas::new(1.0, charts, transitions, true).unwrap()
}

/// A closed word of four multi-chart shifts starting and ending at
/// `east:(5, 0)`, once around the hole of [`ring_atlas`].
pub fn ring_loop() -> (LatticeLabel, Vec<TransportStep>) {
    let start = LatticeLabel::new(EAST, vec![5, 0]);
    let steps = vec![
        TransportStep { step: ShiftStep::raise(vec![0, 6]), chain: vec![EAST, NORTH], break_times: vec![0.5] },
        TransportStep { step: ShiftStep::lower(vec![10, 0]), chain: vec![NORTH, WEST], break_times: vec![0.9] },
        TransportStep { step: ShiftStep::lower(vec![0, 12]), chain: vec![WEST, SOUTH], break_times: vec![0.9] },
        TransportStep { step: ShiftStep::lower(vec![-10, -6]), chain: vec![SOUTH, EAST], break_times: vec![0.8] },
    ];
    (start, steps)
}
