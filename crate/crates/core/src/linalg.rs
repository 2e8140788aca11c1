//! Dense symmetric eigensolver (cyclic Jacobi) and small matrix helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::space::C64;

pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending, eigenvectors
/// as orthonormal columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// Cyclic Jacobi rotations on a symmetric matrix. Only the upper triangle is
/// read; the input is symmetrized first.
///
/// Converges quadratically once the off-diagonal mass is small and delivers
/// eigenvectors orthonormal to working precision, which the exact identities
/// downstream rely on.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= 1 || scale == 0.0 {
        return Ok(sorted(m.diagonal().iter().copied().collect(), v));
    }
    let target = f64::EPSILON * scale * 1e-2;

    let off = |m: &DMatrix<f64>| -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut sweeps = 0;
    loop {
        let residual = off(&m);
        if residual <= target {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            // a stall at roundoff level is convergence in practice
            if residual <= 1e3 * f64::EPSILON * scale {
                break;
            }
            return Err(Error::EigenNonConvergence { sweeps, residual });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Ok(sorted(m.diagonal().iter().copied().collect(), v))
}

fn sorted(values: Vec<f64>, vectors: DMatrix<f64>) -> SymmetricEigen {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    let eigenvectors = DMatrix::from_fn(vectors.nrows(), order.len(), |r, c| vectors[(r, order[c])]);
    SymmetricEigen { eigenvalues, eigenvectors }
}

/// Largest eigenvalue of a Hermitian matrix via the real symmetric
/// embedding `[[Re, -Im], [Im, Re]]`.
pub fn hermitian_max_eigenvalue(h: &DMatrix<C64>) -> Result<f64> {
    let n = h.nrows();
    let emb = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let eig = symmetric_eigen(&emb)?;
    Ok(eig.eigenvalues.last().copied().unwrap_or(0.0))
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

pub fn real_mat_vec(m: &DMatrix<f64>, v: &DVector<C64>) -> DVector<C64> {
    let n = m.nrows();
    DVector::from_fn(n, |i, _| {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..m.ncols() {
            acc += v[j] * m[(i, j)];
        }
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random_range(-1.0..1.0);
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        m
    }

    #[test]
    fn matches_nalgebra_spectrum() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (16, 4), (40, 5)] {
            let a = random_symmetric(n, seed);
            let ours = symmetric_eigen(&a).unwrap();
            let mut theirs: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(f64::total_cmp);
            for (x, y) in ours.eigenvalues.iter().zip(&theirs) {
                assert!((x - y).abs() < 1e-12, "n={n}: {x} vs {y}");
            }
            let v = &ours.eigenvectors;
            let gram = v.transpose() * v;
            assert!((gram - DMatrix::identity(n, n)).amax() < 1e-13);
            let recon = v * DMatrix::from_diagonal(&DVector::from_vec(ours.eigenvalues.clone())) * v.transpose();
            assert!((recon - a).amax() < 1e-13);
        }
    }

    #[test]
    fn zero_matrix_is_already_diagonal() {
        let e = symmetric_eigen(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e.eigenvalues, vec![0.0; 3]);
    }

    #[test]
    fn hermitian_embedding() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(2.0, 0.0)],
        );
        assert!((hermitian_max_eigenvalue(&h).unwrap() - 3.0).abs() < 1e-14);
    }
}
