//! Weighted symmetric eigendecomposition of a reversible generator and the
//! functional calculus built on it.
//!
//! The generator is self-adjoint in `L^2(dx)`, so conjugating by `D^{1/2}`
//! (with `D = diag(dx)`) yields an ordinary symmetric matrix. Its orthonormal
//! eigenvectors `v_k` map back to weighted-orthonormal eigenfields
//! `u_k = D^{-1/2} v_k`, and the resolution of the identity is the family of
//! rank-one projections `f -> <f, u_k> u_k` summed over `lambda_k <= lambda`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::semigroup::{MarkovKernel, ReversibleGenerator};
use crate::space::{Field, WeightedSpace, C64};

/// Eigenvalues in `[-EIGEN_FLOOR, 0)` are clamped to zero.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Heat-kernel entries within this distance outside `[0, 1]` are clipped.
pub const CLIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    space: Arc<WeightedSpace>,
    eigenvalues: Vec<f64>,
    /// Column `k` is the eigenfield `u_k`.
    eigenfields: DMatrix<f64>,
}

pub fn decompose(a: &ReversibleGenerator) -> Result<SpectralDecomposition> {
    let space = a.space();
    let n = space.len();
    let sqrt_w: Vec<f64> = space.weights().iter().map(|w| w.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| sqrt_w[i] * a.entries()[(i, j)] / sqrt_w[j]);
    let eig = symmetric_eigen(&s)?;
    let mut eigenvalues = eig.eigenvalues;
    for (k, lambda) in eigenvalues.iter_mut().enumerate() {
        if *lambda < -EIGEN_FLOOR * a.entries().amax().max(1.0) {
            return Err(Error::InvalidGenerator(format!(
                "eigenvalue {k} is {lambda:e}, generator is not nonnegative"
            )));
        }
        if *lambda < 0.0 {
            *lambda = 0.0;
        }
    }
    let eigenfields = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, k)] / sqrt_w[i]);
    Ok(SpectralDecomposition { space: Arc::clone(space), eigenvalues, eigenfields })
}

impl SpectralDecomposition {
    pub fn space(&self) -> &Arc<WeightedSpace> {
        &self.space
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfields(&self) -> &DMatrix<f64> {
        &self.eigenfields
    }

    pub fn eigenfield(&self, k: usize) -> Field {
        let values = self.eigenfields.column(k).iter().map(|&x| C64::new(x, 0.0)).collect();
        Field::new(&self.space, values).expect("eigenfields are finite")
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `<f, u_k>` for every `k`.
    pub fn coefficients(&self, f: &Field) -> Result<DVector<C64>> {
        if !self.space.same_as(f.space()) {
            return Err(Error::SpaceMismatch);
        }
        let w = self.space.weights();
        let n = self.len();
        Ok(DVector::from_fn(n, |k, _| {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..n {
                acc += f.values()[i] * (self.eigenfields[(i, k)] * w[i]);
            }
            acc
        }))
    }

    fn symbol_values(&self, phi: impl Fn(f64) -> C64) -> Result<Vec<C64>> {
        self.eigenvalues
            .iter()
            .map(|&lambda| {
                let v = phi(lambda);
                if v.re.is_finite() && v.im.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteSpectralValue(lambda))
                }
            })
            .collect()
    }

    /// Matrix of `phi(A) = sum_k phi(lambda_k) u_k <., u_k>`.
    pub fn operator(&self, phi: impl Fn(f64) -> C64) -> Result<DMatrix<C64>> {
        let values = self.symbol_values(phi)?;
        Ok(self.operator_from_values(&values))
    }

    pub(crate) fn operator_from_values(&self, values: &[C64]) -> DMatrix<C64> {
        let n = self.len();
        let w = self.space.weights();
        DMatrix::from_fn(n, n, |i, j| {
            let mut acc = C64::new(0.0, 0.0);
            for (k, v) in values.iter().enumerate() {
                acc += v * (self.eigenfields[(i, k)] * self.eigenfields[(j, k)]);
            }
            acc * w[j]
        })
    }

    pub(crate) fn apply_values(&self, values: &[C64], f: &Field) -> Result<Field> {
        let coeffs = self.coefficients(f)?;
        let n = self.len();
        let out = DVector::from_fn(n, |i, _| {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n {
                acc += values[k] * coeffs[k] * self.eigenfields[(i, k)];
            }
            acc
        });
        Field::from_vector(&self.space, out)
    }

    /// `T^t = e^{-tA}` as a Markov kernel.
    pub fn heat_kernel(&self, t: f64) -> Result<MarkovKernel> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
        }
        let n = self.len();
        if t == 0.0 {
            return MarkovKernel::unchecked(&self.space, DMatrix::identity(n, n), 0.0);
        }
        let decay: Vec<f64> = self.eigenvalues.iter().map(|l| (-t * l).exp()).collect();
        let w = self.space.weights();
        let mut m = DMatrix::from_fn(n, n, |i, j| {
            let mut acc = 0.0;
            for (k, d) in decay.iter().enumerate() {
                acc += d * self.eigenfields[(i, k)] * self.eigenfields[(j, k)];
            }
            acc * w[j]
        });
        for x in m.iter_mut() {
            if *x < 0.0 {
                if *x < -CLIP_TOL {
                    return Err(Error::NegativeKernelEntry { value: *x });
                }
                *x = 0.0;
            } else if *x > 1.0 {
                if *x > 1.0 + CLIP_TOL {
                    return Err(Error::InvalidKernel(format!("heat kernel entry {x} exceeds 1")));
                }
                *x = 1.0;
            }
        }
        MarkovKernel::unchecked(&self.space, m, t)
    }

    pub fn record(&self) -> DecompositionRecord {
        DecompositionRecord {
            weights: self.space.weights().to_vec(),
            eigenvalues: self.eigenvalues.clone(),
            eigenfields: (0..self.len())
                .map(|k| self.eigenfields.column(k).iter().copied().collect())
                .collect(),
        }
    }
}

/// Serializable snapshot of a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRecord {
    pub weights: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenfields: Vec<Vec<f64>>,
}

/// `sum_k phi(lambda_k) <f, u_k> u_k`.
pub fn spectral_apply(dec: &SpectralDecomposition, phi: impl Fn(f64) -> C64, f: &Field) -> Result<Field> {
    let values = dec.symbol_values(phi)?;
    dec.apply_values(&values, f)
}

/// Atoms `(lambda_k, <f, u_k> conj(<g, u_k>))` of the measure
/// `d<E(lambda) f, g>`, one per eigenvalue.
pub fn spectral_measure(dec: &SpectralDecomposition, f: &Field, g: &Field) -> Result<Vec<(f64, C64)>> {
    let cf = dec.coefficients(f)?;
    let cg = dec.coefficients(g)?;
    Ok(dec
        .eigenvalues
        .iter()
        .zip(cf.iter().zip(cg.iter()))
        .map(|(&l, (a, b))| (l, a * b.conj()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::{heat_operator, random_reversible_generator};
    use crate::space::{lp_norm, weighted_inner};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn two_state(a: f64) -> ReversibleGenerator {
        let s = WeightedSpace::new(vec![0.5, 0.5]).unwrap();
        ReversibleGenerator::new(&s, DMatrix::from_row_slice(2, 2, &[a, -a, -a, a])).unwrap()
    }

    #[test]
    fn zero_generator() {
        let s = WeightedSpace::new(vec![0.3, 0.9]).unwrap();
        let a = ReversibleGenerator::new(&s, DMatrix::zeros(2, 2)).unwrap();
        let dec = decompose(&a).unwrap();
        assert_eq!(dec.eigenvalues(), &[0.0, 0.0]);
        for j in 0..2 {
            for k in 0..2 {
                let ip = weighted_inner(&dec.eigenfield(j), &dec.eigenfield(k)).unwrap();
                assert!((ip - c(if j == k { 1.0 } else { 0.0 })).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn two_state_by_hand() {
        let a = 0.8;
        let dec = decompose(&two_state(a)).unwrap();
        assert!(dec.eigenvalues()[0].abs() < 1e-15);
        assert!((dec.eigenvalues()[1] - 2.0 * a).abs() < 1e-14);
        // weighted-unit eigenfields: +-(1, 1) and +-(1, -1)
        let u0 = dec.eigenfields().column(0);
        let u1 = dec.eigenfields().column(1);
        assert!((u0[0].abs() - 1.0).abs() < 1e-14 && (u0[0] - u0[1]).abs() < 1e-14);
        assert!((u1[0].abs() - 1.0).abs() < 1e-14 && (u1[0] + u1[1]).abs() < 1e-14);
    }

    #[test]
    fn decomposition_invariants_on_random_chains() {
        for seed in 0..10 {
            let (_, a) = random_reversible_generator(seed, 3 + seed as usize, 1.0).unwrap();
            let dec = decompose(&a).unwrap();
            let n = dec.len();
            assert!(dec.eigenvalues().iter().all(|&l| l >= 0.0));
            assert!(dec.eigenvalues()[0].abs() < 1e-10);
            let u0 = dec.eigenfields().column(0);
            assert!(u0.iter().all(|x| (x - u0[0]).abs() < 1e-9), "lowest eigenfield is constant");
            for k in 0..n {
                let uk = dec.eigenfields().column(k);
                let au = a.entries() * uk;
                assert!((au - uk * dec.eigenvalues()[k]).amax() < 1e-9);
                for j in 0..n {
                    let ip = weighted_inner(&dec.eigenfield(j), &dec.eigenfield(k)).unwrap();
                    assert!((ip - c(if j == k { 1.0 } else { 0.0 })).norm() < 1e-10);
                }
            }
            let recon = dec.operator(c).unwrap();
            assert!((recon - crate::linalg::to_complex(a.entries())).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-9);
        }
    }

    #[test]
    fn apply_examples() {
        let a = 0.4;
        let dec = decompose(&two_state(a)).unwrap();
        let f = Field::from_real(dec.space(), &[1.0, -1.0]).unwrap();
        let same = spectral_apply(&dec, |_| c(1.0), &f).unwrap();
        assert!(same.max_abs_diff(&f).unwrap() < 1e-15);
        let zero = spectral_apply(&dec, |_| c(0.0), &f).unwrap();
        assert_eq!(zero, Field::zeros(dec.space()));
        let t = 1.7;
        let heat = spectral_apply(&dec, |l| c((-t * l).exp()), &f).unwrap();
        let expected = f.scale(c((-2.0 * a * t).exp()));
        assert!(heat.max_abs_diff(&expected).unwrap() < 1e-15);
        assert!(matches!(
            spectral_apply(&dec, |l| c(1.0 / l), &f),
            Err(Error::NonFiniteSpectralValue(_))
        ));
    }

    #[test]
    fn measure_examples() {
        let dec = decompose(&two_state(1.1)).unwrap();
        let u0 = dec.eigenfield(0);
        let atoms = spectral_measure(&dec, &u0, &u0).unwrap();
        assert!((atoms[0].1 - c(1.0)).norm() < 1e-15 && atoms[1].1.norm() < 1e-15);
        // (1, 0) and (0, 1) are weighted-orthogonal; masses (1/4, -1/4)
        let f = Field::from_real(dec.space(), &[1.0, 0.0]).unwrap();
        let g = Field::from_real(dec.space(), &[0.0, 1.0]).unwrap();
        let atoms = spectral_measure(&dec, &f, &g).unwrap();
        assert!((atoms[0].1 - c(0.25)).norm() < 1e-15);
        assert!((atoms[1].1 + c(0.25)).norm() < 1e-15);
        let total: C64 = atoms.iter().map(|a| a.1).sum();
        assert!(total.norm() < 1e-15);
    }

    #[test]
    fn heat_consistency_and_parseval() {
        let (space, a) = random_reversible_generator(7, 9, 1.0).unwrap();
        let dec = decompose(&a).unwrap();
        let f = Field::new(&space, (0..9).map(|i| C64::new(i as f64 - 4.0, 0.5 * i as f64)).collect()).unwrap();
        for t in [0.0, 0.1, 1.0, 10.0] {
            let via_calculus = spectral_apply(&dec, |l| c((-t * l).exp()), &f).unwrap();
            let via_kernel = heat_operator(&a, t).unwrap().apply(&f).unwrap();
            assert!(via_calculus.max_abs_diff(&via_kernel).unwrap() < 1e-10);
        }
        let parseval: f64 = dec.coefficients(&f).unwrap().iter().map(|z| z.norm_sqr()).sum();
        let norm2 = lp_norm(&f, 2.0).unwrap().powi(2);
        assert!((parseval - norm2).abs() < 1e-10 * norm2);
    }

    #[test]
    fn record_serializes() {
        let dec = decompose(&two_state(1.0)).unwrap();
        let json = serde_json::to_string(&dec.record()).unwrap();
        assert!(json.contains("\"eigenvalues\""));
    }
}
