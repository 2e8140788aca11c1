//! Finite weighted measure spaces and the fields that live on them.
//!
//! A [`WeightedSpace`] is a finite set of points `0..n` carrying strictly
//! positive point masses. A [`Field`] is a complex-valued function on such a
//! space. Every field belongs to every `L^p`, so norms are plain weighted sums.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative bisection tolerance for the Luxemburg norm.
pub const LLOGL_REL_TOL: f64 = 1e-10;

/// Finite set with strictly positive point masses `dx_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedSpace {
    weights: Vec<f64>,
    total_mass: f64,
}

impl WeightedSpace {
    pub fn new(weights: Vec<f64>) -> Result<Arc<Self>> {
        if weights.is_empty() {
            return Err(Error::InvalidSpace("a space needs at least one point".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::InvalidSpace(format!("weight {i} is {w}, must be finite and > 0")));
        }
        let total_mass: f64 = weights.iter().sum();
        if !total_mass.is_finite() {
            return Err(Error::InvalidSpace("total mass overflows".into()));
        }
        Ok(Arc::new(Self { weights, total_mass }))
    }

    /// `n` points of mass `1/n`.
    pub fn uniform_probability(n: usize) -> Result<Arc<Self>> {
        Self::new(vec![1.0 / n.max(1) as f64; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Same points, masses rescaled to total mass one.
    pub fn normalized(&self) -> Arc<Self> {
        let weights = self.weights.iter().map(|w| w / self.total_mass).collect();
        // rescaling keeps every weight positive and finite
        Self::new(weights).expect("normalized weights are valid")
    }

    pub fn same_as(&self, other: &Self) -> bool {
        std::ptr::eq(self, other) || self.weights == other.weights
    }
}

/// A complex-valued function on a [`WeightedSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    space: Arc<WeightedSpace>,
    values: DVector<C64>,
}

impl Field {
    pub fn new(space: &Arc<WeightedSpace>, values: Vec<C64>) -> Result<Self> {
        Self::from_vector(space, DVector::from_vec(values))
    }

    pub fn from_vector(space: &Arc<WeightedSpace>, values: DVector<C64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::LengthMismatch { expected: space.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidField(format!("value {i} is not finite")));
        }
        Ok(Self { space: Arc::clone(space), values })
    }

    pub fn from_real(space: &Arc<WeightedSpace>, values: &[f64]) -> Result<Self> {
        Self::new(space, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn zeros(space: &Arc<WeightedSpace>) -> Self {
        Self { space: Arc::clone(space), values: DVector::zeros(space.len()) }
    }

    pub fn constant(space: &Arc<WeightedSpace>, c: C64) -> Self {
        Self { space: Arc::clone(space), values: DVector::from_element(space.len(), c) }
    }

    pub fn space(&self) -> &Arc<WeightedSpace> {
        &self.space
    }

    pub fn values(&self) -> &DVector<C64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn scale(&self, a: C64) -> Self {
        Self { space: Arc::clone(&self.space), values: &self.values * a }
    }

    pub fn add(&self, other: &Field) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(Self { space: Arc::clone(&self.space), values: &self.values + &other.values })
    }

    pub fn sub(&self, other: &Field) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(Self { space: Arc::clone(&self.space), values: &self.values - &other.values })
    }

    /// Same values, viewed on another space with the same number of points.
    pub fn with_space(&self, space: &Arc<WeightedSpace>) -> Result<Self> {
        Self::from_vector(space, self.values.clone())
    }

    pub(crate) fn check_same_space(&self, other: &Field) -> Result<()> {
        if self.space.same_as(&other.space) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.check_same_space(other)?;
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// Weighted `L^p` norm; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    lp_norm_of(f.space.weights(), f.values.iter().map(|v| v.norm()), p)
}

pub(crate) fn lp_norm_of(
    weights: &[f64],
    moduli: impl Iterator<Item = f64>,
    p: f64,
) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    if p == f64::INFINITY {
        return Ok(moduli.fold(0.0, f64::max));
    }
    let moduli: Vec<f64> = moduli.collect();
    // scale by the max modulus so large p does not overflow
    let scale = moduli.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = moduli
        .iter()
        .zip(weights)
        .map(|(m, w)| (m / scale).powf(p) * w)
        .sum();
    Ok(scale * sum.powf(1.0 / p))
}

/// `<f, g> = sum_i f_i conj(g_i) dx_i`.
pub fn weighted_inner(f: &Field, g: &Field) -> Result<C64> {
    f.check_same_space(g)?;
    Ok(f.values
        .iter()
        .zip(g.values.iter())
        .zip(f.space.weights())
        .map(|((a, b), w)| a * b.conj() * *w)
        .sum())
}

/// Young function of the `L log L` class.
pub fn young_llogl(s: f64) -> f64 {
    s * (std::f64::consts::E + s).ln()
}

/// Luxemburg norm `inf { k > 0 : sum_i Phi(|f_i| / k) dx_i <= 1 }` with
/// `Phi(s) = s log(e + s)`.
pub fn llogl_norm(f: &Field) -> f64 {
    let moduli: Vec<f64> = f.values.iter().map(|v| v.norm()).collect();
    llogl_norm_of(f.space.weights(), &moduli)
}

pub(crate) fn llogl_norm_of(weights: &[f64], moduli: &[f64]) -> f64 {
    let sup = moduli.iter().copied().fold(0.0, f64::max);
    if sup == 0.0 {
        return 0.0;
    }
    let modular = |k: f64| -> f64 {
        moduli.iter().zip(weights).map(|(m, w)| young_llogl(m / k) * w).sum()
    };
    // bracket with powers of two times the sup so that scaling f by 2^j
    // scales every iterate exactly
    let mut hi = sup;
    while modular(hi) > 1.0 {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    while modular(lo) <= 1.0 {
        hi = lo;
        lo /= 2.0;
    }
    while hi - lo > LLOGL_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if modular(mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
