//! Finite superpositions of Bohr-Sommerfeld basis sections.
//!
//! A [`QuantumState`] maps lattice labels to complex amplitudes. The basis
//! `{σ_label}` is treated as orthonormal, so the inner product is a sum over
//! common labels. Exact zeros are pruned and nothing else, which keeps the
//! representation canonical.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::affine_lattice::{ChartId, LatticeLabel};
use crate::observable::ActionObservable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("label dimension {got} does not match state dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("states have different dimensions ({0} and {1})")]
    Mismatch(usize, usize),
    #[error("state json: {0}")]
    Json(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    dim: usize,
    amps: BTreeMap<LatticeLabel, Complex64>,
}

impl QuantumState {
    pub fn zero(dim: usize) -> Self {
        Self { dim, amps: BTreeMap::new() }
    }

    pub fn basis(label: LatticeLabel) -> Self {
        let mut s = Self::zero(label.dim());
        s.amps.insert(label, Complex64::new(1.0, 0.0));
        s
    }

    /// Sum of `amplitude · σ_label` over the given pairs.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (LatticeLabel, Complex64)>) -> Result<Self, StateError> {
        let mut s = Self::zero(dim);
        for (l, a) in pairs {
            s.add_amplitude(l, a)?;
        }
        Ok(s)
    }

    pub fn add_amplitude(&mut self, label: LatticeLabel, a: Complex64) -> Result<(), StateError> {
        if label.dim() != self.dim {
            return Err(StateError::Dimension { expected: self.dim, got: label.dim() });
        }
        let v = self.amps.get(&label).copied().unwrap_or_default() + a;
        if v == Complex64::new(0.0, 0.0) {
            self.amps.remove(&label);
        } else {
            self.amps.insert(label, v);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amplitude(&self, label: &LatticeLabel) -> Complex64 {
        self.amps.get(label).copied().unwrap_or_default()
    }

    /// Labels and amplitudes in label order.
    pub fn iter(&self) -> impl Iterator<Item = (&LatticeLabel, &Complex64)> {
        self.amps.iter()
    }

    pub fn add(&self, other: &QuantumState) -> Result<QuantumState, StateError> {
        if self.dim != other.dim {
            return Err(StateError::Mismatch(self.dim, other.dim));
        }
        let mut out = self.clone();
        for (l, a) in &other.amps {
            out.add_amplitude(l.clone(), *a)?;
        }
        Ok(out)
    }

    pub fn scale(&self, c: Complex64) -> QuantumState {
        let mut out = Self::zero(self.dim);
        for (l, a) in &self.amps {
            let v = a * c;
            if v != Complex64::new(0.0, 0.0) {
                out.amps.insert(l.clone(), v);
            }
        }
        out
    }

    /// `⟨self, other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &QuantumState) -> Result<Complex64, StateError> {
        if self.dim != other.dim {
            return Err(StateError::Mismatch(self.dim, other.dim));
        }
        Ok(self
            .amps
            .iter()
            .filter_map(|(l, a)| other.amps.get(l).map(|b| a.conj() * b))
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rebuilds the state label by label; used by the shifting operators.
    pub fn map_labels<E>(&self, mut f: impl FnMut(&LatticeLabel) -> Result<LatticeLabel, E>) -> Result<QuantumState, E>
    where
        E: From<StateError>,
    {
        let mut out = Self::zero(self.dim);
        for (l, a) in &self.amps {
            out.add_amplitude(f(l)?, *a)?;
        }
        Ok(out)
    }

    /// Serialises as a list of `{chart, n, re, im}` sorted by `(chart, n)`.
    pub fn to_json(&self) -> String {
        let entries: Vec<StateEntry> = self
            .amps
            .iter()
            .map(|(l, a)| StateEntry { chart: l.chart, n: l.n.clone(), re: a.re, im: a.im })
            .collect();
        serde_json::to_string_pretty(&entries).expect("state serialises")
    }

    pub fn from_json(dim: usize, text: &str) -> Result<QuantumState, StateError> {
        let entries: Vec<StateEntry> = serde_json::from_str(text).map_err(|e| StateError::Json(e.to_string()))?;
        Self::from_pairs(dim, entries.into_iter().map(|e| (LatticeLabel::new(e.chart, e.n), Complex64::new(e.re, e.im))))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateEntry {
    chart: ChartId,
    n: Vec<i64>,
    re: f64,
    im: f64,
}

/// The diagonal operator `σ_n ↦ f(n h) σ_n`.
pub fn quantize(f: &ActionObservable, u: &QuantumState, planck_h: f64) -> QuantumState {
    let mut out = QuantumState::zero(u.dim());
    for (l, a) in u.iter() {
        let j: Vec<f64> = l.n.iter().map(|&x| x as f64 * planck_h).collect();
        let v = a * f.eval(&j);
        if v != Complex64::new(0.0, 0.0) {
            out.amps.insert(l.clone(), v);
        }
    }
    out
}
