//! Reversible continuous-time generators, their heat kernels, and a checker
//! for the four Markovian semigroup conditions (contraction, symmetry,
//! positivity, conservation) on a finite weighted space.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inequalities::{linf_operator_norm, weighted_l1_operator_norm};
use crate::linalg::real_mat_vec;
use crate::space::{Field, WeightedSpace};
use crate::spectral::decompose;

/// Default tolerance for exact identities.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Structural tolerance used when validating constructor input.
const STRUCTURE_TOL: f64 = 1e-10;

/// Generator `A` of a reversible chain: off-diagonal entries nonpositive,
/// rows summing to zero, and `dx_i A_ij = dx_j A_ji`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversibleGenerator {
    space: Arc<WeightedSpace>,
    entries: DMatrix<f64>,
}

impl ReversibleGenerator {
    pub fn new(space: &Arc<WeightedSpace>, entries: DMatrix<f64>) -> Result<Self> {
        let n = space.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::InvalidGenerator(format!(
                "expected {n}x{n} entries, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGenerator("non-finite entry".into()));
        }
        let scale = entries.amax().max(1.0);
        let w = space.weights();
        for i in 0..n {
            if entries[(i, i)] < 0.0 {
                return Err(Error::InvalidGenerator(format!("diagonal entry {i} is negative")));
            }
            let row: f64 = entries.row(i).iter().sum();
            if row.abs() > STRUCTURE_TOL * scale {
                return Err(Error::InvalidGenerator(format!("row {i} sums to {row:e}, not 0")));
            }
            for j in 0..n {
                if i != j && entries[(i, j)] > 0.0 {
                    return Err(Error::InvalidGenerator(format!("off-diagonal entry ({i},{j}) is positive")));
                }
                let defect = w[i] * entries[(i, j)] - w[j] * entries[(j, i)];
                if defect.abs() > STRUCTURE_TOL * scale * w[i].max(w[j]) {
                    return Err(Error::InvalidGenerator(format!(
                        "detailed balance fails at ({i},{j}) by {defect:e}"
                    )));
                }
            }
        }
        Ok(Self { space: Arc::clone(space), entries })
    }

    /// `A_ij = -c_ij / dx_i` off the diagonal, `A_ii = sum_{j != i} c_ij / dx_i`,
    /// for symmetric nonnegative conductances `c`.
    pub fn from_conductances(space: &Arc<WeightedSpace>, conductances: &DMatrix<f64>) -> Result<Self> {
        let n = space.len();
        if conductances.nrows() != n || conductances.ncols() != n {
            return Err(Error::InvalidGenerator("conductance matrix has wrong shape".into()));
        }
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            let dx = space.weight(i);
            let mut diag = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let c = conductances[(i, j)];
                if c < 0.0 || c != conductances[(j, i)] {
                    return Err(Error::InvalidGenerator(format!(
                        "conductance ({i},{j}) must be symmetric and nonnegative"
                    )));
                }
                a[(i, j)] = -c / dx;
                diag += c / dx;
            }
            a[(i, i)] = diag;
        }
        Self::new(space, a)
    }

    pub fn space(&self) -> &Arc<WeightedSpace> {
        &self.space
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }
}

/// One-step transition kernel `Q`, playing the role of `T^step`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovKernel {
    space: Arc<WeightedSpace>,
    entries: DMatrix<f64>,
    step: f64,
}

impl MarkovKernel {
    /// Validated constructor: nonnegative entries, unit row sums, detailed
    /// balance, all within `1e-10`.
    pub fn new(space: &Arc<WeightedSpace>, entries: DMatrix<f64>, step: f64) -> Result<Self> {
        let kernel = Self::unchecked(space, entries, step)?;
        let report = verify_markov_conditions(&kernel, STRUCTURE_TOL);
        if !report.pass {
            return Err(Error::InvalidKernel(format!(
                "positivity {:e}, conservation {:e}, symmetry {:e}",
                report.positivity, report.conservation, report.symmetry
            )));
        }
        Ok(kernel)
    }

    /// Shape and finiteness checks only. Used to hand candidate kernels to
    /// [`verify_markov_conditions`].
    pub fn unchecked(space: &Arc<WeightedSpace>, entries: DMatrix<f64>, step: f64) -> Result<Self> {
        let n = space.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::InvalidKernel(format!(
                "expected {n}x{n} entries, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidKernel("non-finite entry".into()));
        }
        Ok(Self { space: Arc::clone(space), entries, step })
    }

    pub fn identity(space: &Arc<WeightedSpace>) -> Self {
        let n = space.len();
        Self { space: Arc::clone(space), entries: DMatrix::identity(n, n), step: 0.0 }
    }

    pub fn space(&self) -> &Arc<WeightedSpace> {
        &self.space
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    /// `(Qf)(x) = sum_y Q(x, y) f(y)`.
    pub fn apply(&self, f: &Field) -> Result<Field> {
        if !self.space.same_as(f.space()) {
            return Err(Error::SpaceMismatch);
        }
        Field::from_vector(&self.space, real_mat_vec(&self.entries, f.values()))
    }

    /// `Q^k` as a matrix.
    pub fn power(&self, k: usize) -> DMatrix<f64> {
        let n = self.len();
        let mut acc = DMatrix::identity(n, n);
        for _ in 0..k {
            acc = &self.entries * acc;
        }
        acc
    }
}

/// Samples point masses in `[0.5, 1.5)` and symmetric conductances in
/// `[0, conductance_scale)` on the complete graph, then builds the generator.
pub fn random_reversible_generator(
    seed: u64,
    n: usize,
    conductance_scale: f64,
) -> Result<(Arc<WeightedSpace>, ReversibleGenerator)> {
    if n == 0 {
        return Err(Error::InvalidArgument("a chain needs at least one state".into()));
    }
    if !(conductance_scale.is_finite() && conductance_scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "conductance scale must be positive, got {conductance_scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let space = WeightedSpace::new(weights)?;
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let x = conductance_scale * rng.random::<f64>();
            c[(i, j)] = x;
            c[(j, i)] = x;
        }
    }
    let generator = ReversibleGenerator::from_conductances(&space, &c)?;
    Ok((space, generator))
}

/// `T^t = e^{-tA}`, computed through the weighted spectral decomposition.
pub fn heat_operator(a: &ReversibleGenerator, t: f64) -> Result<MarkovKernel> {
    decompose(a)?.heat_kernel(t)
}

/// Per-condition maximal violations of a candidate kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `max(0, -min_ij Q_ij)`.
    pub positivity: f64,
    /// `max_i |sum_j Q_ij - 1|`.
    pub conservation: f64,
    /// `max_ij |dx_i Q_ij - dx_j Q_ji|`.
    pub symmetry: f64,
    /// `max(0, ||Q||_{1,1} - 1)` in the weighted norm.
    pub contraction_l1: f64,
    /// `max(0, ||Q||_{inf,inf} - 1)`.
    pub contraction_linf: f64,
    pub tol: f64,
    pub pass: bool,
    pub note: String,
}

pub const INTERPOLATION_NOTE: &str = "contraction for 1 < p < inf follows from the p = 1 and p = inf \
     endpoints by Riesz-Thorin interpolation; intermediate p are probed, not certified";

pub fn verify_markov_conditions(q: &MarkovKernel, tol: f64) -> ConditionReport {
    let m = &q.entries;
    let w = q.space.weights();
    let n = q.len();
    let positivity = (-m.min()).max(0.0);
    let conservation = (0..n)
        .map(|i| (m.row(i).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let mut symmetry = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            symmetry = symmetry.max((w[i] * m[(i, j)] - w[j] * m[(j, i)]).abs());
        }
    }
    let complex = crate::linalg::to_complex(m);
    let contraction_l1 = (weighted_l1_operator_norm(&q.space, &complex) - 1.0).max(0.0);
    let contraction_linf = (linf_operator_norm(&complex) - 1.0).max(0.0);
    let pass = [positivity, conservation, symmetry, contraction_l1, contraction_linf]
        .iter()
        .all(|v| *v <= tol);
    ConditionReport {
        positivity,
        conservation,
        symmetry,
        contraction_l1,
        contraction_linf,
        tol,
        pass,
        note: INTERPOLATION_NOTE.to_string(),
    }
}
