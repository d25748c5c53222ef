//! Integral affine structure of the action space.
//!
//! A chart carries action-angle coordinates `(j, ϑ)` over a box of actions.
//! Two charts are glued by
//!
//! ```text
//! j_to = A j_from + h·offset        ϑ_to = B ϑ_from  (mod 1),   B = (A⁻¹)ᵀ
//! ```
//!
//! with `A` an integer matrix of determinant ±1, which keeps `Σ dj ∧ dϑ`
//! invariant. Bohr-Sommerfeld tori sit at `j = n·h`, so their integer labels
//! move under the same affine map `n ↦ A n + offset`. The stored matrix of a
//! transition always points from its source chart to its target chart; it is
//! used unchanged for actions, labels and shift directions.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use thiserror::Error;

use crate::tolerances::BS_LABEL_REL_TOL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("matrix has {got} entries, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("matrix is not unimodular (determinant {0})")]
    NotUnimodular(i128),
    #[error("orientation-reversing transition {from} -> {to} in an oriented atlas")]
    OrientationReversing { from: ChartId, to: ChartId },
    #[error("path is not chainable at step {0}")]
    NotChainable(usize),
    #[error("no transition from chart {from} to chart {to}")]
    MissingTransition { from: ChartId, to: ChartId },
    #[error("transition {from} -> {to} has no registered inverse")]
    MissingInverse { from: ChartId, to: ChartId },
    #[error("unknown chart {0}")]
    UnknownChart(ChartId),
    #[error("duplicate chart {0}")]
    DuplicateChart(ChartId),
    #[error("a loop needs at least one step and must end where it starts")]
    OpenLoop,
    #[error("planck constant must be positive and finite, got {0}")]
    PlanckConstant(f64),
    #[error("invalid action box: {0}")]
    InvalidBox(String),
    #[error("actions {0:?} lie outside the chart's action box")]
    OutsideBox(Vec<f64>),
    #[error("integer overflow in lattice arithmetic")]
    Overflow,
    #[error("atlas json: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, LatticeError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChartId(pub u32);

impl fmt::Display for ChartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Square integer matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IntMatrix {
    dim: usize,
    entries: Vec<i64>,
}

impl IntMatrix {
    pub fn new(dim: usize, entries: Vec<i64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(LatticeError::Shape { expected: dim * dim, got: entries.len() });
        }
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[&[i64]]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(LatticeError::Shape { expected: dim, got: row.len() });
            }
            entries.extend_from_slice(row);
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.entries[row * self.dim + col]
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.dim)
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut entries = vec![0; d * d];
        for r in 0..d {
            for c in 0..d {
                entries[c * d + r] = self.get(r, c);
            }
        }
        Self { dim: d, entries }
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &IntMatrix) -> Result<IntMatrix> {
        check_dim(self.dim, other.dim)?;
        let d = self.dim;
        let mut entries = vec![0i64; d * d];
        for r in 0..d {
            for c in 0..d {
                let mut acc: i64 = 0;
                for k in 0..d {
                    let p = self.get(r, k).checked_mul(other.get(k, c)).ok_or(LatticeError::Overflow)?;
                    acc = acc.checked_add(p).ok_or(LatticeError::Overflow)?;
                }
                entries[r * d + c] = acc;
            }
        }
        Ok(IntMatrix { dim: d, entries })
    }

    pub fn mul_vec(&self, v: &[i64]) -> Result<Vec<i64>> {
        check_dim(self.dim, v.len())?;
        (0..self.dim)
            .map(|r| {
                let mut acc: i64 = 0;
                for (c, x) in v.iter().enumerate() {
                    let p = self.get(r, c).checked_mul(*x).ok_or(LatticeError::Overflow)?;
                    acc = acc.checked_add(p).ok_or(LatticeError::Overflow)?;
                }
                Ok(acc)
            })
            .collect()
    }

    pub fn mul_vec_f64(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, v.len())?;
        Ok((0..self.dim)
            .map(|r| v.iter().enumerate().map(|(c, x)| self.get(r, c) as f64 * x).sum())
            .collect())
    }

    /// Exact determinant by fraction-free elimination.
    pub fn det(&self) -> i128 {
        let n = self.dim;
        if n == 0 {
            return 1;
        }
        let mut m: Vec<Vec<i128>> =
            (0..n).map(|r| (0..n).map(|c| self.get(r, c) as i128).collect()).collect();
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..n - 1 {
            if m[k][k] == 0 {
                match (k + 1..n).find(|&r| m[r][k] != 0) {
                    Some(r) => {
                        m.swap(k, r);
                        sign = -sign;
                    }
                    None => return 0,
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
                }
            }
            prev = m[k][k];
        }
        sign * m[n - 1][n - 1]
    }

    fn minor(&self, skip_row: usize, skip_col: usize) -> IntMatrix {
        let d = self.dim;
        let mut entries = Vec::with_capacity((d - 1) * (d - 1));
        for r in (0..d).filter(|&r| r != skip_row) {
            for c in (0..d).filter(|&c| c != skip_col) {
                entries.push(self.get(r, c));
            }
        }
        IntMatrix { dim: d - 1, entries }
    }

    /// Adjugate (transposed cofactor matrix).
    pub fn adjugate(&self) -> Result<IntMatrix> {
        let d = self.dim;
        if d == 1 {
            return Ok(IntMatrix::identity(1));
        }
        let mut entries = vec![0i64; d * d];
        for r in 0..d {
            for c in 0..d {
                let cof = self.minor(r, c).det();
                let signed = if (r + c) % 2 == 0 { cof } else { -cof };
                entries[c * d + r] = i64::try_from(signed).map_err(|_| LatticeError::Overflow)?;
            }
        }
        Ok(IntMatrix { dim: d, entries })
    }

    /// Integer inverse of a unimodular matrix, `A⁻¹ = det(A)·adj(A)`.
    pub fn inverse(&self) -> Result<IntMatrix> {
        let det = self.det();
        if det.abs() != 1 {
            return Err(LatticeError::NotUnimodular(det));
        }
        let adj = self.adjugate()?;
        let entries = adj.entries.iter().map(|&e| e * det as i64).collect();
        Ok(IntMatrix { dim: self.dim, entries })
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(LatticeError::Dimension { expected, got });
    }
    Ok(())
}

fn reduce_mod_one(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Element of `GL(k,Z) ⋉ Z^k` acting on labels by `n ↦ A n + offset`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AffineMap {
    matrix: IntMatrix,
    offset: Vec<i64>,
}

impl AffineMap {
    pub fn new(matrix: IntMatrix, offset: Vec<i64>) -> Result<Self> {
        check_dim(matrix.dim(), offset.len())?;
        let det = matrix.det();
        if det.abs() != 1 {
            return Err(LatticeError::NotUnimodular(det));
        }
        Ok(Self { matrix, offset })
    }

    pub fn linear(matrix: IntMatrix) -> Result<Self> {
        let dim = matrix.dim();
        Self::new(matrix, vec![0; dim])
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: IntMatrix::identity(dim), offset: vec![0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &IntMatrix {
        &self.matrix
    }

    pub fn offset(&self) -> &[i64] {
        &self.offset
    }

    pub fn determinant(&self) -> i64 {
        self.matrix.det() as i64
    }

    pub fn is_identity(&self) -> bool {
        self.matrix.is_identity() && self.offset.iter().all(|&o| o == 0)
    }

    /// `n ↦ A n + offset`.
    pub fn apply_label(&self, n: &[i64]) -> Result<Vec<i64>> {
        let an = self.matrix.mul_vec(n)?;
        an.iter()
            .zip(&self.offset)
            .map(|(a, o)| a.checked_add(*o).ok_or(LatticeError::Overflow))
            .collect()
    }

    /// `j ↦ A j + h·offset`.
    pub fn apply_actions(&self, j: &[f64], planck_h: f64) -> Result<Vec<f64>> {
        let aj = self.matrix.mul_vec_f64(j)?;
        Ok(aj.iter().zip(&self.offset).map(|(a, o)| a + planck_h * *o as f64).collect())
    }

    /// The matrix `B = (A⁻¹)ᵀ` acting on angles.
    pub fn angle_matrix(&self) -> Result<IntMatrix> {
        Ok(self.matrix.inverse()?.transpose())
    }

    /// `ϑ ↦ B ϑ mod 1`.
    pub fn apply_angles(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let b = self.angle_matrix()?;
        Ok(b.mul_vec_f64(theta)?.into_iter().map(reduce_mod_one).collect())
    }

    /// Image of an integer shift direction, `c ↦ A c`.
    pub fn apply_direction(&self, c: &[i64]) -> Result<Vec<i64>> {
        self.matrix.mul_vec(c)
    }

    /// The composite `next ∘ self`.
    pub fn then(&self, next: &AffineMap) -> Result<AffineMap> {
        check_dim(self.dim(), next.dim())?;
        let matrix = next.matrix.mul(&self.matrix)?;
        let offset = next.apply_label(&self.offset)?;
        Ok(AffineMap { matrix, offset })
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let inv = self.matrix.inverse()?;
        let offset = inv.mul_vec(&self.offset)?.into_iter().map(|x| -x).collect();
        Ok(AffineMap { matrix: inv, offset })
    }
}

/// Axis-aligned box of actions `lower < j < upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ActionBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// The cube `(-half_width, half_width)^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(LatticeError::InvalidBox("bound lengths differ".into()));
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(LatticeError::InvalidBox(format!("bad interval [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Membership in the closed box, with an absolute slack.
    pub fn contains_closed(&self, j: &[f64], slack: f64) -> bool {
        j.len() == self.dim()
            && j.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *x >= lo - slack && *x <= hi + slack)
    }

    pub fn contains_open(&self, j: &[f64]) -> bool {
        j.len() == self.dim()
            && j.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (lo, hi))| x > lo && x < hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionAngleChart {
    pub id: ChartId,
    pub action_box: ActionBox,
}

impl ActionAngleChart {
    pub fn new(id: ChartId, action_box: ActionBox) -> Self {
        Self { id, action_box }
    }

    pub fn dim(&self) -> usize {
        self.action_box.dim()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChartTransition {
    pub from: ChartId,
    pub to: ChartId,
    pub map: AffineMap,
}

impl ChartTransition {
    pub fn new(from: ChartId, to: ChartId, matrix: IntMatrix, offset: Vec<i64>) -> Result<Self> {
        Ok(Self { from, to, map: AffineMap::new(matrix, offset)? })
    }

    pub fn linear(from: ChartId, to: ChartId, matrix: IntMatrix) -> Result<Self> {
        Ok(Self { from, to, map: AffineMap::linear(matrix)? })
    }

    pub fn inverse(&self) -> Result<Self> {
        Ok(Self { from: self.to, to: self.from, map: self.map.inverse()? })
    }

    /// The transition together with its inverse, ready for registration.
    pub fn with_inverse(self) -> Result<[Self; 2]> {
        let inv = self.inverse()?;
        Ok([self, inv])
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }
}

/// `j_to = A j_from + h·offset`.
pub fn map_actions(t: &ChartTransition, j_from: &[f64], planck_h: f64) -> Result<Vec<f64>> {
    t.map.apply_actions(j_from, planck_h)
}

/// `ϑ_to = B ϑ_from mod 1` with `B = (A⁻¹)ᵀ`.
pub fn map_angles(t: &ChartTransition, theta_from: &[f64]) -> Result<Vec<f64>> {
    t.map.apply_angles(theta_from)
}

/// `n ↦ A n + offset`.
pub fn relabel(t: &ChartTransition, n: &[i64]) -> Result<Vec<i64>> {
    t.map.apply_label(n)
}

/// Composite of a chainable path of transitions, first element applied first.
/// The empty path composes to the identity of dimension `dim`.
pub fn compose_transitions(dim: usize, path: &[ChartTransition]) -> Result<AffineMap> {
    let mut acc = AffineMap::identity(dim);
    for (i, t) in path.iter().enumerate() {
        if i > 0 && path[i - 1].to != t.from {
            return Err(LatticeError::NotChainable(i));
        }
        acc = acc.then(&t.map)?;
    }
    Ok(acc)
}

/// Bohr-Sommerfeld label `(chart, n)` with `j = n·h` in that chart.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LatticeLabel {
    pub chart: ChartId,
    pub n: Vec<i64>,
}

impl LatticeLabel {
    pub fn new(chart: ChartId, n: Vec<i64>) -> Self {
        Self { chart, n }
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }
}

impl fmt::Display for LatticeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n: Vec<String> = self.n.iter().map(|x| x.to_string()).collect();
        write!(f, "{}:{}", self.chart, n.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartAtlas {
    planck_h: f64,
    dim: usize,
    charts: Vec<ActionAngleChart>,
    transitions: Vec<ChartTransition>,
    oriented: bool,
}

impl ChartAtlas {
    /// Builds and validates an atlas. Every transition needs its inverse
    /// registered as well; in an oriented atlas all determinants are `+1`.
    pub fn new(
        planck_h: f64,
        charts: Vec<ActionAngleChart>,
        transitions: Vec<ChartTransition>,
        oriented: bool,
    ) -> Result<Self> {
        if !(planck_h.is_finite() && planck_h > 0.0) {
            return Err(LatticeError::PlanckConstant(planck_h));
        }
        let dim = charts.first().map(|c| c.dim()).unwrap_or(0);
        for (i, c) in charts.iter().enumerate() {
            check_dim(dim, c.dim())?;
            c.action_box.validate()?;
            if charts[..i].iter().any(|o| o.id == c.id) {
                return Err(LatticeError::DuplicateChart(c.id));
            }
        }
        let atlas = Self { planck_h, dim, charts, transitions, oriented };
        for t in &atlas.transitions {
            atlas.chart(t.from)?;
            atlas.chart(t.to)?;
            check_dim(dim, t.dim())?;
            if oriented && t.map.determinant() != 1 {
                return Err(LatticeError::OrientationReversing { from: t.from, to: t.to });
            }
            let has_inverse = atlas.transitions.iter().any(|u| {
                u.from == t.to && u.to == t.from && t.map.then(&u.map).map(|m| m.is_identity()).unwrap_or(false)
            });
            if !has_inverse {
                return Err(LatticeError::MissingInverse { from: t.from, to: t.to });
            }
        }
        Ok(atlas)
    }

    /// Atlas with a single chart and no transitions.
    pub fn single_chart(planck_h: f64, action_box: ActionBox) -> Result<Self> {
        Self::new(planck_h, vec![ActionAngleChart::new(ChartId(0), action_box)], Vec::new(), false)
    }

    pub fn planck_h(&self) -> f64 {
        self.planck_h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn oriented(&self) -> bool {
        self.oriented
    }

    pub fn charts(&self) -> &[ActionAngleChart] {
        &self.charts
    }

    pub fn transitions(&self) -> &[ChartTransition] {
        &self.transitions
    }

    pub fn chart(&self, id: ChartId) -> Result<&ActionAngleChart> {
        self.charts.iter().find(|c| c.id == id).ok_or(LatticeError::UnknownChart(id))
    }

    /// All transitions from `from` to `to`, in registration order.
    pub fn transitions_between(&self, from: ChartId, to: ChartId) -> impl Iterator<Item = &ChartTransition> {
        self.transitions.iter().filter(move |t| t.from == from && t.to == to)
    }

    /// First registered transition from `from` to `to`.
    pub fn transition(&self, from: ChartId, to: ChartId) -> Result<&ChartTransition> {
        self.transitions_between(from, to).next().ok_or(LatticeError::MissingTransition { from, to })
    }

    /// Actions `n·h` of a label.
    pub fn label_actions(&self, label: &LatticeLabel) -> Vec<f64> {
        label.n.iter().map(|&x| x as f64 * self.planck_h).collect()
    }

    /// Whether the label's torus lies in the closure of its chart's box.
    pub fn label_in_chart(&self, label: &LatticeLabel) -> Result<bool> {
        let chart = self.chart(label.chart)?;
        check_dim(self.dim, label.dim())?;
        let slack = BS_LABEL_REL_TOL * self.planck_h;
        Ok(chart.action_box.contains_closed(&self.label_actions(label), slack))
    }

    pub fn to_json(&self) -> String {
        let doc = AtlasDoc::from(self);
        serde_json::to_string_pretty(&doc).expect("atlas serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: AtlasDoc = serde_json::from_str(text).map_err(|e| LatticeError::Json(e.to_string()))?;
        doc.into_atlas()
    }
}

/// Holonomy of a closed chain of charts `[c0, c1, ..., c0]`, resolving each
/// hop by the first registered transition between the two charts.
pub fn holonomy_of_loop(atlas: &ChartAtlas, chain: &[ChartId]) -> Result<AffineMap> {
    if chain.len() < 2 || chain.first() != chain.last() {
        return Err(LatticeError::OpenLoop);
    }
    let mut path = Vec::with_capacity(chain.len() - 1);
    for w in chain.windows(2) {
        path.push(atlas.transition(w[0], w[1])?.clone());
    }
    compose_transitions(atlas.dim(), &path)
}

/// Holonomy along an explicit sequence of transition indices.
pub fn holonomy_of_path(atlas: &ChartAtlas, path: &[usize]) -> Result<AffineMap> {
    let ts: Vec<ChartTransition> = path
        .iter()
        .map(|&i| atlas.transitions.get(i).cloned().ok_or(LatticeError::NotChainable(i)))
        .collect::<Result<_>>()?;
    if let (Some(a), Some(b)) = (ts.first(), ts.last()) {
        if a.from != b.to {
            return Err(LatticeError::OpenLoop);
        }
    }
    compose_transitions(atlas.dim(), &ts)
}

/// The label whose torus carries the actions `j` in `chart`, if `j` sits on
/// the lattice `h·Z^k` to within `rel_tol` (relative to `max(|j_i|, h)`).
pub fn bs_label_of_actions(
    atlas: &ChartAtlas,
    chart: ChartId,
    j: &[f64],
    rel_tol: f64,
) -> Result<Option<LatticeLabel>> {
    let c = atlas.chart(chart)?;
    check_dim(atlas.dim(), j.len())?;
    let h = atlas.planck_h();
    if !c.action_box.contains_closed(j, rel_tol * h) {
        return Err(LatticeError::OutsideBox(j.to_vec()));
    }
    let mut n = Vec::with_capacity(j.len());
    for &x in j {
        let k = (x / h).round();
        if (x - k * h).abs() > rel_tol * x.abs().max(h) {
            return Ok(None);
        }
        n.push(k as i64);
    }
    Ok(Some(LatticeLabel::new(chart, n)))
}

/// A closed path of transitions with non-trivial affine holonomy.
#[derive(Clone, Debug, PartialEq)]
pub struct WitnessLoop {
    pub charts: Vec<ChartId>,
    pub transitions: Vec<usize>,
    pub holonomy: AffineMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Labelability {
    pub labelable: bool,
    pub witness: Option<WitnessLoop>,
}

/// Decides whether labels can be chosen consistently on every chart, i.e.
/// whether all loops of the transition graph have trivial affine holonomy.
/// Each component gets a spanning tree; every transition then closes a
/// fundamental cycle, and these cycles generate all loops.
pub fn is_globally_labelable(atlas: &ChartAtlas) -> Result<Labelability> {
    let n = atlas.charts.len();
    let index = |id: ChartId| atlas.charts.iter().position(|c| c.id == id).expect("validated chart id");
    // Per chart: the tree path from its root as transition indices, and the
    // composite map from the root's labels to this chart's labels.
    let mut tree: Vec<Option<(Vec<usize>, AffineMap)>> = vec![None; n];
    let mut roots = vec![0usize; n];
    for start in 0..n {
        if tree[start].is_some() {
            continue;
        }
        tree[start] = Some((Vec::new(), AffineMap::identity(atlas.dim)));
        roots[start] = start;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let (path_u, map_u) = tree[u].clone().expect("visited");
            for (ti, t) in atlas.transitions.iter().enumerate() {
                if t.from != atlas.charts[u].id {
                    continue;
                }
                let v = index(t.to);
                if tree[v].is_none() {
                    let mut p = path_u.clone();
                    p.push(ti);
                    tree[v] = Some((p, map_u.then(&t.map)?));
                    roots[v] = start;
                    queue.push_back(v);
                }
            }
        }
    }
    for (ti, t) in atlas.transitions.iter().enumerate() {
        let (u, v) = (index(t.from), index(t.to));
        let (path_u, map_u) = tree[u].clone().expect("visited");
        let (path_v, map_v) = tree[v].clone().expect("visited");
        let holonomy = map_u.then(&t.map)?.then(&map_v.inverse()?)?;
        if holonomy.is_identity() {
            continue;
        }
        // Walk back from v to the root along the inverses of the tree edges.
        let mut transitions = path_u.clone();
        transitions.push(ti);
        for &e in path_v.iter().rev() {
            let te = &atlas.transitions[e];
            let back = atlas
                .transitions
                .iter()
                .position(|x| x.from == te.to && x.to == te.from && te.map.then(&x.map).map(|m| m.is_identity()).unwrap_or(false))
                .ok_or(LatticeError::MissingInverse { from: te.from, to: te.to })?;
            transitions.push(back);
        }
        let mut charts = vec![atlas.charts[roots[u]].id];
        charts.extend(transitions.iter().map(|&e| atlas.transitions[e].to));
        return Ok(Labelability { labelable: false, witness: Some(WitnessLoop { charts, transitions, holonomy }) });
    }
    Ok(Labelability { labelable: true, witness: None })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtlasDoc {
    planck_h: f64,
    #[serde(default)]
    oriented: bool,
    charts: Vec<ChartDoc>,
    transitions: Vec<TransitionDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChartDoc {
    id: ChartId,
    dim: usize,
    #[serde(rename = "box")]
    bounds: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionDoc {
    from: ChartId,
    to: ChartId,
    matrix: Vec<i64>,
    #[serde(default)]
    offset: Option<Vec<i64>>,
}

impl From<&ChartAtlas> for AtlasDoc {
    fn from(a: &ChartAtlas) -> Self {
        AtlasDoc {
            planck_h: a.planck_h,
            oriented: a.oriented,
            charts: a
                .charts
                .iter()
                .map(|c| ChartDoc {
                    id: c.id,
                    dim: c.dim(),
                    bounds: c.action_box.lower.iter().zip(&c.action_box.upper).map(|(l, u)| [*l, *u]).collect(),
                })
                .collect(),
            transitions: a
                .transitions
                .iter()
                .map(|t| TransitionDoc {
                    from: t.from,
                    to: t.to,
                    matrix: t.map.matrix().entries().to_vec(),
                    offset: Some(t.map.offset().to_vec()),
                })
                .collect(),
        }
    }
}

impl AtlasDoc {
    fn into_atlas(self) -> Result<ChartAtlas> {
        let charts = self
            .charts
            .into_iter()
            .map(|c| {
                if c.bounds.len() != c.dim {
                    return Err(LatticeError::Dimension { expected: c.dim, got: c.bounds.len() });
                }
                let (lower, upper) = c.bounds.iter().map(|b| (b[0], b[1])).unzip();
                Ok(ActionAngleChart::new(c.id, ActionBox::new(lower, upper)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let transitions = self
            .transitions
            .into_iter()
            .map(|t| {
                let dim = (t.matrix.len() as f64).sqrt().round() as usize;
                let matrix = IntMatrix::new(dim, t.matrix)?;
                let offset = t.offset.unwrap_or_else(|| vec![0; dim]);
                ChartTransition::new(t.from, t.to, matrix, offset)
            })
            .collect::<Result<Vec<_>>>()?;
        ChartAtlas::new(self.planck_h, charts, transitions, self.oriented)
    }
}
