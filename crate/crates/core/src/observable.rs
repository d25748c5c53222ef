//! Real observables on `T*T^k` written as finite sums of terms
//! `c · j^α · e^{2πi m·ϑ}`.
//!
//! Real-valuedness is enforced at construction: every term `(c, α, m)` must be
//! matched by `(c̄, α, -m)`. The canonical form merges repeated `(α, m)` keys
//! and drops zero coefficients, so equal observables compare equal.
//!
//! A small text syntax is accepted by [`Observable::parse`]:
//! `j1`, `j2^2`, `cos(t1)`, `sin(t1-2*t2)`, numbers, `*`, `+`, `-` and
//! parentheses. `tN` is the angle `ϑ_N` and `cos(t1)` means `cos 2πϑ₁`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("term has wrong dimension (expected {expected})")]
    Dimension { expected: usize },
    #[error("observable is not real: term alpha={alpha:?} m={m:?} lacks its conjugate partner")]
    NotReal { alpha: Vec<u32>, m: Vec<i64> },
    #[error("observable depends on the angles")]
    AngleDependent,
    #[error("parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

/// One term `coeff · j^alpha · e^{2πi m·ϑ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: Complex64,
    pub alpha: Vec<u32>,
    pub m: Vec<i64>,
}

type Key = (Vec<u32>, Vec<i64>);

#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    dim: usize,
    terms: BTreeMap<Key, Complex64>,
}

const REAL_TOL: f64 = 1e-12;

impl Observable {
    pub fn new(dim: usize, terms: Vec<Term>) -> Result<Self, ObservableError> {
        let mut obs = Self::zero(dim);
        for t in terms {
            if t.alpha.len() != dim || t.m.len() != dim {
                return Err(ObservableError::Dimension { expected: dim });
            }
            obs.add_term(t.alpha, t.m, t.coeff);
        }
        obs.check_real()?;
        Ok(obs)
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut o = Self::zero(dim);
        o.add_term(vec![0; dim], vec![0; dim], Complex64::new(c, 0.0));
        o
    }

    /// The action `j_i` (zero-based axis).
    pub fn action(dim: usize, axis: usize) -> Self {
        Self::action_power(dim, axis, 1)
    }

    pub fn action_power(dim: usize, axis: usize, p: u32) -> Self {
        let mut alpha = vec![0; dim];
        alpha[axis] = p;
        let mut o = Self::zero(dim);
        o.add_term(alpha, vec![0; dim], Complex64::new(1.0, 0.0));
        o
    }

    /// `cos 2π m·ϑ`.
    pub fn cos_angle(m: Vec<i64>) -> Self {
        let dim = m.len();
        let neg: Vec<i64> = m.iter().map(|x| -x).collect();
        let mut o = Self::zero(dim);
        o.add_term(vec![0; dim], m, Complex64::new(0.5, 0.0));
        o.add_term(vec![0; dim], neg, Complex64::new(0.5, 0.0));
        o
    }

    /// `sin 2π m·ϑ`.
    pub fn sin_angle(m: Vec<i64>) -> Self {
        let dim = m.len();
        let neg: Vec<i64> = m.iter().map(|x| -x).collect();
        let mut o = Self::zero(dim);
        o.add_term(vec![0; dim], m, Complex64::new(0.0, -0.5));
        o.add_term(vec![0; dim], neg, Complex64::new(0.0, 0.5));
        o
    }

    fn add_term(&mut self, alpha: Vec<u32>, m: Vec<i64>, c: Complex64) {
        let key = (alpha, m);
        let v = self.terms.get(&key).copied().unwrap_or_default() + c;
        if v == Complex64::new(0.0, 0.0) {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, v);
        }
    }

    fn check_real(&self) -> Result<(), ObservableError> {
        let scale = self.terms.values().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        for ((alpha, m), c) in &self.terms {
            let partner_key = (alpha.clone(), m.iter().map(|x| -x).collect::<Vec<_>>());
            let partner = self.terms.get(&partner_key).copied().unwrap_or_default();
            if (partner - c.conj()).norm() > REAL_TOL * scale {
                return Err(ObservableError::NotReal { alpha: alpha.clone(), m: m.clone() });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|((alpha, m), c)| Term { coeff: *c, alpha: alpha.clone(), m: m.clone() })
            .collect()
    }

    /// Whether the observable depends on the actions only.
    pub fn is_action_only(&self) -> bool {
        self.terms.keys().all(|(_, m)| m.iter().all(|&x| x == 0))
    }

    /// Largest `|m_i|` over all terms and axes.
    pub fn angle_bandwidth(&self) -> i64 {
        self.terms.keys().flat_map(|(_, m)| m.iter().map(|x| x.abs())).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Observable) -> Observable {
        let mut o = self.clone();
        for ((a, m), c) in &other.terms {
            o.add_term(a.clone(), m.clone(), *c);
        }
        o
    }

    pub fn sub(&self, other: &Observable) -> Observable {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Observable {
        let mut o = Self::zero(self.dim);
        for ((a, m), c) in &self.terms {
            o.add_term(a.clone(), m.clone(), *c * s);
        }
        o
    }

    pub fn mul(&self, other: &Observable) -> Observable {
        let mut o = Self::zero(self.dim);
        for ((a1, m1), c1) in &self.terms {
            for ((a2, m2), c2) in &other.terms {
                let a = a1.iter().zip(a2).map(|(x, y)| x + y).collect();
                let m = m1.iter().zip(m2).map(|(x, y)| x + y).collect();
                o.add_term(a, m, c1 * c2);
            }
        }
        o
    }

    /// `∂/∂j_axis`.
    pub fn d_action(&self, axis: usize) -> Observable {
        let mut o = Self::zero(self.dim);
        for ((a, m), c) in &self.terms {
            if a[axis] == 0 {
                continue;
            }
            let mut a2 = a.clone();
            a2[axis] -= 1;
            o.add_term(a2, m.clone(), *c * a[axis] as f64);
        }
        o
    }

    /// `∂/∂ϑ_axis`.
    pub fn d_angle(&self, axis: usize) -> Observable {
        let mut o = Self::zero(self.dim);
        for ((a, m), c) in &self.terms {
            if m[axis] == 0 {
                continue;
            }
            o.add_term(a.clone(), m.clone(), *c * Complex64::new(0.0, 2.0 * PI * m[axis] as f64));
        }
        o
    }

    /// Complex value of the term sum; the imaginary part vanishes up to
    /// rounding for real observables.
    pub fn eval_complex(&self, j: &[f64], theta: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .map(|((a, m), c)| {
                let mono: f64 = a.iter().zip(j).map(|(p, x)| x.powi(*p as i32)).product();
                let phase: f64 = m.iter().zip(theta).map(|(k, t)| *k as f64 * t).sum();
                c * mono * Complex64::from_polar(1.0, 2.0 * PI * phase)
            })
            .sum()
    }

    pub fn eval(&self, j: &[f64], theta: &[f64]) -> f64 {
        self.eval_complex(j, theta).re
    }

    /// Parses the text syntax described in the module docs.
    pub fn parse(dim: usize, text: &str) -> Result<Observable, ObservableError> {
        let mut p = Parser { s: text.as_bytes(), pos: 0, dim };
        let o = p.expr()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.err("unexpected trailing input"));
        }
        o.check_real()?;
        Ok(o)
    }
}

/// An observable that depends on the actions only.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionObservable(Observable);

impl ActionObservable {
    pub fn new(obs: Observable) -> Result<Self, ObservableError> {
        if !obs.is_action_only() {
            return Err(ObservableError::AngleDependent);
        }
        Ok(Self(obs))
    }

    pub fn inner(&self) -> &Observable {
        &self.0
    }

    pub fn eval(&self, j: &[f64]) -> f64 {
        let zeros = vec![0.0; j.len()];
        self.0.eval(j, &zeros)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ObservableError {
        ObservableError::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Observable, ObservableError> {
        let neg = self.eat(b'-');
        let mut acc = self.product()?;
        if neg {
            acc = acc.scale(-1.0);
        }
        loop {
            if self.eat(b'+') {
                acc = acc.add(&self.product()?);
            } else if self.eat(b'-') {
                acc = acc.sub(&self.product()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<Observable, ObservableError> {
        let mut acc = self.factor()?;
        while self.eat(b'*') {
            acc = acc.mul(&self.factor()?);
        }
        Ok(acc)
    }

    fn number(&mut self) -> Result<f64, ObservableError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.s.len() && (self.s[self.pos] == b'e' || self.s[self.pos] == b'E') {
            self.pos += 1;
            if self.pos < self.s.len() && (self.s[self.pos] == b'-' || self.s[self.pos] == b'+') {
                self.pos += 1;
            }
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("bad number"))
    }

    fn index(&mut self) -> Result<usize, ObservableError> {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let i: usize = std::str::from_utf8(&self.s[start..self.pos])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("expected axis index"))?;
        if i == 0 || i > self.dim {
            return Err(self.err(&format!("axis index {i} outside 1..={}", self.dim)));
        }
        Ok(i - 1)
    }

    fn keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        if self.s[self.pos..].starts_with(kw.as_bytes()) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    /// Integer combination of angles, e.g. `t1 - 2*t2`.
    fn angle_combination(&mut self) -> Result<Vec<i64>, ObservableError> {
        let mut m = vec![0i64; self.dim];
        let mut sign = if self.eat(b'-') { -1 } else { 1 };
        loop {
            let mut k = 1i64;
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                let v = self.number()?;
                if v.fract() != 0.0 {
                    return Err(self.err("angle coefficients must be integers"));
                }
                k = v as i64;
                if !self.eat(b'*') {
                    return Err(self.err("expected '*'"));
                }
            }
            if !self.keyword("t") {
                return Err(self.err("expected angle tN"));
            }
            let i = self.index()?;
            m[i] += sign * k;
            if self.eat(b'+') {
                sign = 1;
            } else if self.eat(b'-') {
                sign = -1;
            } else {
                return Ok(m);
            }
        }
    }

    fn factor(&mut self) -> Result<Observable, ObservableError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Observable::constant(self.dim, self.number()?)),
            Some(b'j') => {
                self.pos += 1;
                let i = self.index()?;
                let mut p = 1u32;
                if self.eat(b'^') {
                    let v = self.number()?;
                    if v.fract() != 0.0 || v < 0.0 {
                        return Err(self.err("powers must be non-negative integers"));
                    }
                    p = v as u32;
                }
                Ok(Observable::action_power(self.dim, i, p))
            }
            _ => {
                let is_cos = self.keyword("cos");
                if !is_cos && !self.keyword("sin") {
                    return Err(self.err("expected a factor"));
                }
                if !self.eat(b'(') {
                    return Err(self.err("expected '('"));
                }
                let m = self.angle_combination()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(if is_cos { Observable::cos_angle(m) } else { Observable::sin_angle(m) })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form_merges_and_drops_zeros() {
        let a = Observable::parse(2, "j1 + j1 - j1").unwrap();
        assert_eq!(a, Observable::action(2, 0));
        assert!(Observable::parse(2, "j2 - j2").unwrap().is_zero());
    }

    #[test]
    fn rejects_non_real_terms() {
        let t = Term { coeff: Complex64::new(1.0, 0.0), alpha: vec![0], m: vec![1] };
        assert!(matches!(Observable::new(1, vec![t]), Err(ObservableError::NotReal { .. })));
    }

    #[test]
    fn parse_and_evaluate() {
        let f = Observable::parse(2, "2*j1^2*cos(t2) - sin(t1+t2) + 0.5").unwrap();
        let (j, th) = ([0.7, -0.3], [0.11, 0.37]);
        let expect = 2.0 * 0.49 * (2.0 * PI * 0.37).cos() - (2.0 * PI * 0.48).sin() + 0.5;
        assert!((f.eval(&j, &th) - expect).abs() < 1e-14);
        assert!(Observable::parse(2, "j3").is_err());
        assert!(Observable::parse(2, "cos(0.5*t1)").is_err());
        assert!(Observable::parse(1, "j1 +").is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let f = Observable::parse(2, "j1^3*sin(t1-t2) + j2*cos(2*t2)").unwrap();
        let (j, th) = ([0.4, 1.3], [0.21, 0.64]);
        let eps = 1e-6;
        for axis in 0..2 {
            let mut jp = j;
            jp[axis] += eps;
            let mut jm = j;
            jm[axis] -= eps;
            let fd = (f.eval(&jp, &th) - f.eval(&jm, &th)) / (2.0 * eps);
            assert!((f.d_action(axis).eval(&j, &th) - fd).abs() < 1e-7);
            let mut tp = th;
            tp[axis] += eps;
            let mut tm = th;
            tm[axis] -= eps;
            let fd = (f.eval(&j, &tp) - f.eval(&j, &tm)) / (2.0 * eps);
            assert!((f.d_angle(axis).eval(&j, &th) - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn action_observables() {
        assert!(ActionObservable::new(Observable::parse(2, "j1^2 + j2").unwrap()).is_ok());
        assert_eq!(
            ActionObservable::new(Observable::parse(2, "cos(t1)").unwrap()),
            Err(ObservableError::AngleDependent)
        );
    }
}
