//! Flat parameter-vector algebra.
//!
//! A [`ParamVector`] is the single currency between the model, the optimizers
//! and the PROFIT step: weights, gradients and displacements all share the same
//! flat layout. Entries are always finite.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Below this squared norm a displacement is treated as zero and
/// [`orthogonal_reject`] returns the gradient unchanged.
pub const DEGENERATE_EPS: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "parameter vector")?;
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    /// Wraps values already known to be finite.
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Exclusive in-place access for update paths inside this crate. Callers
    /// must restore the finiteness invariant (see [`ParamVector::ensure_finite`]).
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn ensure_finite(&self, what: &'static str) -> Result<()> {
        check_finite(&self.values, what)
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        same_len(self, other)?;
        Ok(dot_slices(&self.values, &other.values))
    }

    pub fn norm_sq(&self) -> f64 {
        dot_slices(&self.values, &self.values)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_sq())
    }

    /// `self - other`.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        same_len(self, other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        finite_or_err(values, "difference")
    }

    pub fn scaled(&self, alpha: f64) -> Result<ParamVector> {
        let values = self.values.iter().map(|v| alpha * v).collect();
        finite_or_err(values, "scaled vector")
    }

    /// `self += alpha * x`.
    pub fn add_scaled(&mut self, alpha: f64, x: &ParamVector) -> Result<()> {
        same_len(self, x)?;
        for (y, x) in self.values.iter_mut().zip(&x.values) {
            *y += alpha * x;
        }
        self.ensure_finite("axpy result")
    }

    /// Copies `other` into `self` without reallocating.
    pub fn assign(&mut self, other: &ParamVector) -> Result<()> {
        same_len(self, other)?;
        self.values.copy_from_slice(&other.values);
        Ok(())
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

/// Result of [`orthogonal_reject`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub vector: ParamVector,
    /// The displacement was numerically zero and the input was passed through.
    pub degenerate: bool,
}

pub fn dot(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    a.dot(b)
}

/// `alpha * x + y`.
pub fn axpy(alpha: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    if !alpha.is_finite() {
        return Err(Error::NonFinite { what: "axpy scale", index: 0 });
    }
    let mut out = y.clone();
    out.add_scaled(alpha, x)?;
    Ok(out)
}

/// Removes from `g` its component along `delta`: `g - (<g,d>/<d,d>) d`.
///
/// When heavy cancellation leaves less than half of `g`'s norm, a second
/// rejection pass cleans up the rounding residue along `delta`.
pub fn orthogonal_reject(g: &ParamVector, delta: &ParamVector) -> Result<Rejection> {
    same_len(g, delta)?;
    let dd = delta.norm_sq();
    if dd < DEGENERATE_EPS {
        return Ok(Rejection { vector: g.clone(), degenerate: true });
    }
    let mut out = g.values.clone();
    remove_component(&mut out, &delta.values, dd);
    let g_sq = g.norm_sq();
    if 4.0 * dot_slices(&out, &out) < g_sq {
        remove_component(&mut out, &delta.values, dd);
        // Still leaning on delta after two passes: the residue is rounding
        // noise inside span(delta) (always the case in one dimension).
        let lean = dot_slices(&out, &delta.values).abs();
        if lean > 1e-8 * libm::sqrt(dot_slices(&out, &out) * dd) {
            out.fill(0.0);
        }
    }
    Ok(Rejection { vector: finite_or_err(out, "rejection")?, degenerate: false })
}

fn remove_component(v: &mut [f64], d: &[f64], dd: f64) {
    let coef = dot_slices(v, d) / dd;
    for (x, d) in v.iter_mut().zip(d) {
        *x -= coef * d;
    }
}

pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn same_len(a: &ParamVector, b: &ParamVector) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left: a.len(), right: b.len() })
    }
}

fn finite_or_err(values: Vec<f64>, what: &'static str) -> Result<ParamVector> {
    check_finite(&values, what)?;
    Ok(ParamVector { values })
}

pub(crate) fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}
