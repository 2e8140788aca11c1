//! Operator norms on weighted `L^p` and empirical checks of the multiplier
//! bound, the martingale-transform step, the Davis / `L log L` chain and the
//! limiting argument.
//!
//! Exact norms are available for `p` in `{1, 2, inf}`. For other `p` only
//! lower bounds are produced (random probes refined by a dual power
//! iteration), which is the sound direction for testing upper-bound
//! theorems: an observed ratio above the threshold is a genuine violation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dilation::{
    hat_expectation, martingale_transform, path_lp_norm, reverse_martingale, square_and_maximal, EvalMode,
    PathSpace,
};
use crate::error::{Error, Result};
use crate::linalg::hermitian_max_eigenvalue;
use crate::multiplier::{
    apply_tm, approximate_by_steps, symbol_of_sampled, symbol_of_step, tm_matrix, Multiplier,
    MultiplierSymbol, SampledMultiplier,
};
use crate::semigroup::{random_reversible_generator, MarkovKernel};
use crate::space::{llogl_norm, lp_norm, Field, WeightedSpace, C64};
use crate::spectral::{decompose, SpectralDecomposition};

/// Relative slack in every pass/fail comparison.
pub const RATIO_SLACK: f64 = 1e-9;
/// Two ascent objectives closer than this count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// A dense linear operator on fields over a weighted space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: Arc<WeightedSpace>,
    matrix: DMatrix<C64>,
}

impl Operator {
    pub fn new(space: &Arc<WeightedSpace>, matrix: DMatrix<C64>) -> Result<Self> {
        let n = space.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::LengthMismatch { expected: n, got: matrix.nrows() });
        }
        Ok(Self { space: Arc::clone(space), matrix })
    }

    pub fn identity(space: &Arc<WeightedSpace>) -> Self {
        let n = space.len();
        Self { space: Arc::clone(space), matrix: DMatrix::identity(n, n) }
    }

    pub fn from_kernel(q: &MarkovKernel) -> Self {
        Self { space: Arc::clone(q.space()), matrix: crate::linalg::to_complex(q.entries()) }
    }

    /// `T_m` as an operator.
    pub fn multiplier(dec: &SpectralDecomposition, m: &MultiplierSymbol) -> Self {
        Self { space: Arc::clone(dec.space()), matrix: tm_matrix(dec, m) }
    }

    pub fn space(&self) -> &Arc<WeightedSpace> {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn is_real(&self) -> bool {
        self.matrix.iter().all(|z| z.im == 0.0)
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        if !self.space.same_as(f.space()) {
            return Err(Error::SpaceMismatch);
        }
        Field::from_vector(&self.space, &self.matrix * f.values())
    }

    /// Adjoint in `L^2(dx)`: `(T*)_ji = dx_i conj(T_ij) / dx_j`.
    pub fn adjoint(&self) -> Self {
        let w = self.space.weights();
        let n = self.space.len();
        let matrix = DMatrix::from_fn(n, n, |j, i| self.matrix[(i, j)].conj() * (w[i] / w[j]));
        Self { space: Arc::clone(&self.space), matrix }
    }
}

/// Max absolute row sum.
pub fn linf_operator_norm(m: &DMatrix<C64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `max_j (1 / dx_j) sum_i dx_i |T_ij|`.
pub fn weighted_l1_operator_norm(space: &WeightedSpace, m: &DMatrix<C64>) -> f64 {
    let w = space.weights();
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| w[i] * m[(i, j)].norm()).sum::<f64>() / w[j])
        .fold(0.0, f64::max)
}

/// Largest singular value of `D^{1/2} T D^{-1/2}`.
pub fn weighted_l2_operator_norm(space: &WeightedSpace, m: &DMatrix<C64>) -> Result<f64> {
    let s: Vec<f64> = space.weights().iter().map(|w| w.sqrt()).collect();
    let n = space.len();
    let b = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * (s[i] / s[j]));
    let gram = b.adjoint() * &b;
    Ok(hermitian_max_eigenvalue(&gram)?.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Exact,
    LowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub kind: NormKind,
    pub method: String,
    pub probes_used: usize,
    /// Probe whose ascent attained the value (earliest among ties).
    pub argmax: Option<usize>,
}

pub fn opnorm_exact(t: &Operator, p: f64) -> Result<NormEstimate> {
    let (value, method) = if p == 1.0 {
        (weighted_l1_operator_norm(&t.space, &t.matrix), "weighted column sum")
    } else if p == 2.0 {
        (weighted_l2_operator_norm(&t.space, &t.matrix)?, "weighted singular value")
    } else if p == f64::INFINITY {
        (linf_operator_norm(&t.matrix), "row sum")
    } else {
        return Err(Error::InvalidExponent(p));
    };
    Ok(NormEstimate { value, kind: NormKind::Exact, method: method.into(), probes_used: 0, argmax: None })
}

/// `|z|^{r-1} z / |z|` entrywise (zero at zero).
fn duality_map(v: &DVector<C64>, r: f64) -> DVector<C64> {
    v.map(|z| {
        let a = z.norm();
        if a == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            z * (a.powf(r - 2.0))
        }
    })
}

fn weighted_lp(weights: &[f64], v: &DVector<C64>, p: f64) -> f64 {
    crate::space::lp_norm_of(weights, v.iter().map(|z| z.norm()), p).expect("p >= 1")
}

/// Lower bound on `||T||_{p,p}`: the best ratio `||Tf||_p / ||f||_p` over
/// seeded Gaussian probes, their sign (phase) patterns, and the iterates of
/// the dual power iteration `f <- psi_q(T* psi_p(T f))` started from each.
/// Adding probes or ascent steps never lowers the value.
pub fn opnorm_lower_estimate(
    t: &Operator,
    p: f64,
    probes: usize,
    ascent_steps: usize,
    seed: u64,
) -> Result<NormEstimate> {
    if !(p > 1.0 && p < f64::INFINITY) {
        return Err(Error::InvalidExponent(p));
    }
    let q = p / (p - 1.0);
    let n = t.space.len();
    let w = t.space.weights().to_vec();
    let adjoint = t.adjoint();
    let real = t.is_real();
    let objective = |x: &DVector<C64>| -> f64 {
        let nx = weighted_lp(&w, x, p);
        if nx == 0.0 {
            0.0
        } else {
            weighted_lp(&w, &(&t.matrix * x), p) / nx
        }
    };
    let per_probe: Vec<f64> = (0..probes)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let start = DVector::from_fn(n, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = if real { 0.0 } else { rng.sample(StandardNormal) };
                C64::new(re, im)
            });
            let signs = start.map(|z| if z.norm() == 0.0 { C64::new(1.0, 0.0) } else { z / z.norm() });
            let mut best = 0.0_f64;
            for candidate in [start, signs] {
                let mut x = candidate;
                best = best.max(objective(&x));
                for _ in 0..ascent_steps {
                    let y = &t.matrix * &x;
                    let z = &adjoint.matrix * duality_map(&y, p);
                    let next = duality_map(&z, q);
                    let norm = weighted_lp(&w, &next, p);
                    if norm == 0.0 || !norm.is_finite() {
                        break;
                    }
                    x = next / C64::new(norm, 0.0);
                    best = best.max(objective(&x));
                }
            }
            best
        })
        .collect();
    let mut value = 0.0_f64;
    let mut argmax = None;
    let mut leader = f64::NEG_INFINITY;
    for (i, &v) in per_probe.iter().enumerate() {
        value = value.max(v);
        if v > leader + TIE_TOL {
            leader = v;
            argmax = Some(i);
        }
    }
    Ok(NormEstimate {
        value,
        kind: NormKind::LowerBound,
        method: format!("probes + dual power ascent ({ascent_steps} steps)"),
        probes_used: probes,
        argmax,
    })
}

/// Where a pass/fail threshold comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdProvenance {
    Proven,
    ReferenceConstant,
    ReportOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// `None` for report-only records.
    pub threshold: Option<f64>,
    pub provenance: ThresholdProvenance,
    pub pass: bool,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, threshold: Option<f64>, provenance: ThresholdProvenance) -> Self {
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        let pass = match threshold {
            None => true,
            Some(c) => lhs <= c * rhs * (1.0 + RATIO_SLACK),
        };
        let threshold = if provenance == ThresholdProvenance::ReportOnly { None } else { threshold };
        Self { name: name.into(), lhs, rhs, ratio, threshold, provenance, pass }
    }

    pub fn report_only(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, rhs, None, ThresholdProvenance::ReportOnly)
    }
}

/// `p* - 1` with `p* = max(p, p / (p - 1))`.
pub fn reference_constant(p: f64) -> f64 {
    p.max(p / (p - 1.0)) - 1.0
}

/// Threshold used for martingale-transform style bounds. The `p* - 1`
/// constant is for real multipliers; complex ones are split into real and
/// imaginary parts, doubling it, except at `p = 2` where orthogonality of
/// increments gives 1 regardless.
pub fn transform_threshold(p: f64, real: bool) -> f64 {
    if real || p == 2.0 {
        reference_constant(p)
    } else {
        2.0 * reference_constant(p)
    }
}

/// Least-squares fit `ratio ~ intercept + slope / (p - 1)` over `p <= 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthFit {
    pub intercept: f64,
    pub slope: f64,
    pub points: usize,
}

pub fn growth_fit(points: &[(f64, f64)]) -> Option<GrowthFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(p, _)| *p > 1.0 && *p <= 2.0)
        .map(|&(p, r)| (1.0 / (p - 1.0), r))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Some(GrowthFit { intercept: my - slope * mx, slope, points: pts.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierBoundOutcome {
    pub reports: Vec<InequalityReport>,
    pub growth_fit: Option<GrowthFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeBudget {
    pub probes: usize,
    pub ascent_steps: usize,
    pub seed: u64,
}

/// For each `p`: `lhs` is a lower bound on `||T_m||_{p,p}`, `rhs` is
/// `||M||_inf` (plus the largest quadrature error for sampled multipliers).
/// At `p = 2` the threshold is exactly 1; elsewhere it is the reference
/// martingale-transform constant. Endpoints `p = 1, inf` are report-only.
pub fn multiplier_bound_check(
    dec: &SpectralDecomposition,
    m: &Multiplier,
    p_grid: &[f64],
    budget: ProbeBudget,
) -> Result<MultiplierBoundOutcome> {
    let symbol = m.symbol()?;
    let op = Operator::multiplier(dec, &symbol);
    let real = m.is_real();
    let rhs = m.sup_norm() + symbol.max_error(dec);
    let mut reports = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        if p == 1.0 || p == f64::INFINITY {
            // no multiplier bound at the endpoints; exact norm for reference
            let lhs = opnorm_exact(&op, p)?.value;
            reports.push(InequalityReport::report_only(format!("multiplier bound p={p} {}", m.name()), lhs, rhs));
            continue;
        }
        if !(p > 1.0 && p < f64::INFINITY) {
            return Err(Error::InvalidExponent(p));
        }
        let lhs = opnorm_lower_estimate(&op, p, budget.probes, budget.ascent_steps, budget.seed)?.value;
        let (threshold, provenance) = if p == 2.0 {
            (1.0, ThresholdProvenance::Proven)
        } else {
            (transform_threshold(p, real), ThresholdProvenance::ReferenceConstant)
        };
        reports.push(InequalityReport::new(
            format!("multiplier bound p={p} {}", m.name()),
            lhs,
            rhs,
            Some(threshold),
            provenance,
        ));
    }
    let points: Vec<(f64, f64)> = p_grid
        .iter().zip(&reports).map(|(&p, r)| (p, r.ratio)).collect();
    Ok(MultiplierBoundOutcome { reports, growth_fit: growth_fit(&points) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BgOutcome {
    pub report: InequalityReport,
    /// `||E[S | x_0]||_{L^p(nu)}`.
    pub hat_norm: f64,
    /// `hat_norm - lhs`; the contraction holds when this is at most `1e-10`.
    pub contraction_slack: f64,
    pub contraction_ok: bool,
}

pub const CONTRACTION_SLACK: f64 = 1e-10;

fn normalized(m: &[C64]) -> (Vec<C64>, f64) {
    let sup = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if sup == 0.0 {
        (m.to_vec(), 0.0)
    } else {
        (m.iter().map(|v| v / sup).collect(), sup)
    }
}

/// `||sum_i M_i (f_{i+1} - f_i)||_{L^p(P)}` against `||f||_{L^p(nu)}` with
/// `M` normalized to `max |M_i| = 1`, by exact enumeration.
pub fn bg_transform_check(ps: &PathSpace, m: &[C64], f: &Field, p: f64) -> Result<BgOutcome> {
    if !(p > 1.0 && p < f64::INFINITY) {
        return Err(Error::InvalidExponent(p));
    }
    let (m, _) = normalized(m);
    let real = m.iter().all(|v| v.im == 0.0);
    let s = martingale_transform(ps, &m, f)?;
    let lhs = path_lp_norm(ps, &s, p, EvalMode::Exact)?.value;
    let rhs = lp_norm(&f.with_space(ps.law())?, p)?;
    let hat = hat_expectation(ps, &s, EvalMode::Exact)?.field;
    let hat_norm = lp_norm(&hat.with_space(ps.law())?, p)?;
    let contraction_slack = hat_norm - lhs;
    let report = InequalityReport::new(
        format!("burkholder-gundy p={p}"),
        lhs,
        rhs,
        Some(transform_threshold(p, real)),
        ThresholdProvenance::ReferenceConstant,
    );
    Ok(BgOutcome { report, hat_norm, contraction_slack, contraction_ok: contraction_slack <= CONTRACTION_SLACK })
}

/// The four report-only links of the `L log L` chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DavisChain {
    /// `E|S|` vs `E[square function]`.
    pub davis: InequalityReport,
    /// `E[square function]` vs `E[max_i |f_i|]`.
    pub square_vs_maximal: InequalityReport,
    /// `E[max_i |f_i|]` vs `||f||_{L log L}`.
    pub doob: InequalityReport,
    /// `||T_m f||_1` vs `||M||_inf ||f||_{L log L}`.
    pub end_to_end: InequalityReport,
}

impl DavisChain {
    pub fn ratios(&self) -> [f64; 4] {
        [self.davis.ratio, self.square_vs_maximal.ratio, self.doob.ratio, self.end_to_end.ratio]
    }

    pub fn finite(&self) -> bool {
        self.ratios().iter().all(|r| r.is_finite())
    }
}

/// All expectations are under the normalized path measure; `T_m f` is
/// realized as `E[S | x_0]`.
pub fn davis_llogl_check(ps: &PathSpace, m: &[C64], f: &Field) -> Result<DavisChain> {
    let (unit, sup) = normalized(m);
    let family = reverse_martingale(ps, f)?;
    let s = martingale_transform(ps, &unit, f)?;
    let (square, maximal) = square_and_maximal(&family, &unit)?;
    let e_s = path_lp_norm(ps, &s, 1.0, EvalMode::Exact)?.value;
    let e_square = path_lp_norm(ps, &square, 1.0, EvalMode::Exact)?.value;
    let e_max = path_lp_norm(ps, &maximal, 1.0, EvalMode::Exact)?.value;
    let on_law = f.with_space(ps.law())?;
    let llogl = llogl_norm(&on_law);
    let tm_f = hat_expectation(ps, &martingale_transform(ps, m, f)?, EvalMode::Exact)?.field;
    let tm_l1 = lp_norm(&tm_f.with_space(ps.law())?, 1.0)?;
    Ok(DavisChain {
        davis: InequalityReport::report_only("davis", e_s, e_square),
        square_vs_maximal: InequalityReport::report_only("square vs maximal", e_square, e_max),
        doob: InequalityReport::report_only("doob llogl", e_max, llogl),
        end_to_end: InequalityReport::report_only("llogl end-to-end", tm_l1, sup * llogl),
    })
}

/// Parameters of a seeded family of small chains for the `L log L` chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilySpec {
    pub seed: u64,
    pub chains: usize,
    pub fields: usize,
    pub states: usize,
    pub horizon: usize,
    pub epsilon: f64,
    pub conductance_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilySummary {
    pub instances: usize,
    /// Family maxima of the Davis, square-vs-maximal, Doob and end-to-end
    /// ratios, in that order.
    pub max_ratios: [f64; 4],
    pub all_finite: bool,
}

/// Seed of family member `i`; members are prefix-stable, so a larger family
/// contains the smaller one.
pub fn member_seed(seed: u64, i: u64) -> u64 {
    seed ^ (i.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn davis_family(spec: &FamilySpec) -> Result<FamilySummary> {
    let per_chain: Vec<Result<Vec<DavisChain>>> = (0..spec.chains)
        .into_par_iter()
        .map(|c| {
            let chain_seed = member_seed(spec.seed, c as u64);
            let (space, a) = random_reversible_generator(chain_seed, spec.states, spec.conductance_scale)?;
            let dec = Arc::new(decompose(&a)?);
            let ps = PathSpace::from_heat(dec, spec.epsilon, spec.horizon)?;
            let mut rng = ChaCha8Rng::seed_from_u64(chain_seed);
            rng.set_stream(1);
            (0..spec.fields)
                .map(|_| {
                    let values: Vec<C64> =
                        (0..spec.states).map(|_| C64::new(rng.sample(StandardNormal), 0.0)).collect();
                    let m: Vec<C64> = (0..spec.horizon).map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
                    let f = Field::new(&space, values)?;
                    davis_llogl_check(&ps, &m, &f)
                })
                .collect()
        })
        .collect();
    let mut max_ratios = [0.0_f64; 4];
    let mut all_finite = true;
    let mut instances = 0;
    for chain in per_chain {
        for report in chain? {
            instances += 1;
            all_finite &= report.finite();
            for (slot, r) in max_ratios.iter_mut().zip(report.ratios()) {
                *slot = slot.max(r);
            }
        }
    }
    Ok(FamilySummary { instances, max_ratios, all_finite })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FatouReport {
    pub p: f64,
    pub pieces: Vec<usize>,
    /// `||T_n f||_p` per approximation.
    pub norms: Vec<f64>,
    /// `c_p ||M^n||_inf ||f||_p` per approximation.
    pub bounds: Vec<f64>,
    pub bounds_ok: bool,
    /// `||T_m f||_p` under the reference symbol.
    pub limit_norm: f64,
    /// `max` of `||T_n f||_p` over the last half of the approximations.
    pub tail_max: f64,
    pub tol: f64,
    pub limit_ok: bool,
    pub pass: bool,
}

/// Numerical form of the Fatou step: each step approximation obeys the
/// multiplier bound, and the limit norm does not exceed the tail of the
/// approximating norms by more than `tol`.
pub fn fatou_limit_check(
    dec: &SpectralDecomposition,
    m: &SampledMultiplier,
    f: &Field,
    pieces: &[usize],
    p: f64,
    tol: f64,
) -> Result<FatouReport> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    if pieces.is_empty() {
        return Err(Error::InvalidArgument("need at least one approximation".into()));
    }
    let c_p = if p == 2.0 { 1.0 } else { transform_threshold(p, Multiplier::Sampled(m.clone()).is_real()) };
    let f_norm = lp_norm(f, p)?;
    let mut norms = Vec::with_capacity(pieces.len());
    let mut bounds = Vec::with_capacity(pieces.len());
    for &n in pieces {
        let step = approximate_by_steps(m, n)?;
        norms.push(lp_norm(&apply_tm(dec, &symbol_of_step(&step), f)?, p)?);
        bounds.push(c_p * step.sup_norm() * f_norm);
    }
    let bounds_ok = norms.iter().zip(&bounds).all(|(n, b)| *n <= b * (1.0 + RATIO_SLACK) + 1e-14);
    let reference = match m.analytic_symbol() {
        Some(s) => s,
        None => symbol_of_sampled(m)?,
    };
    let limit_norm = lp_norm(&apply_tm(dec, &reference, f)?, p)?;
    let tail_max = norms[norms.len() / 2..].iter().copied().fold(0.0, f64::max);
    let limit_ok = limit_norm <= tail_max + tol;
    Ok(FatouReport {
        p,
        pieces: pieces.to_vec(),
        norms,
        bounds,
        bounds_ok,
        limit_norm,
        tail_max,
        tol,
        limit_ok,
        pass: bounds_ok && limit_ok,
    })
}

/// Imaginary powers `A^{i gamma}` realized through the quadrature symbol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImaginaryPowerReport {
    pub gamma: f64,
    /// `max_k (|m(lambda_k) - lambda_k^{i gamma}| - reported error_k)` over
    /// positive eigenvalues; nonpositive when every error bound holds.
    pub worst_excess: f64,
    pub max_reported_error: f64,
    pub sup_norm: f64,
    /// `||T_m||_{2,2}`.
    pub norm2: f64,
    pub pass: bool,
}

pub fn imaginary_power_check(dec: &SpectralDecomposition, m: &SampledMultiplier, gamma: f64) -> Result<ImaginaryPowerReport> {
    let symbol = symbol_of_sampled(m)?;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut max_reported_error = 0.0_f64;
    for &l in dec.eigenvalues().iter().filter(|&&l| l > 0.0) {
        let v = symbol.eval(l);
        let exact = C64::new(0.0, gamma * l.ln()).exp();
        worst_excess = worst_excess.max((v.value - exact).norm() - v.error);
        max_reported_error = max_reported_error.max(v.error);
    }
    let norm2 = opnorm_exact(&Operator::multiplier(dec, &symbol), 2.0)?.value;
    let sup_norm = m.declared_sup();
    let pass = worst_excess <= 0.0 && norm2 <= (sup_norm + max_reported_error) * (1.0 + RATIO_SLACK);
    Ok(ImaginaryPowerReport { gamma, worst_excess, max_reported_error, sup_norm, norm2, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiplier::StepMultiplier;
    use crate::semigroup::{heat_operator, ReversibleGenerator};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn identity_norms() {
        let s = WeightedSpace::new(vec![0.2, 1.0, 3.0]).unwrap();
        let id = Operator::identity(&s);
        for p in [1.0, 2.0, f64::INFINITY] {
            assert!((opnorm_exact(&id, p).unwrap().value - 1.0).abs() < 1e-14);
        }
        for p in [1.1, 1.5, 3.0, 7.0] {
            assert!(opnorm_lower_estimate(&id, p, 5, 3, 1).unwrap().value >= 1.0 - 1e-12);
        }
        assert!(opnorm_exact(&id, 3.0).is_err());
        assert!(opnorm_lower_estimate(&id, 1.0, 5, 3, 1).is_err());
    }

    #[test]
    fn heat_kernels_contract() {
        for seed in 0..5 {
            let (_, a) = random_reversible_generator(seed, 7, 1.0).unwrap();
            for t in [0.05, 0.5, 5.0] {
                let op = Operator::from_kernel(&heat_operator(&a, t).unwrap());
                for p in [1.0, 2.0, f64::INFINITY] {
                    assert!(opnorm_exact(&op, p).unwrap().value <= 1.0 + 1e-10);
                }
            }
        }
    }

    #[test]
    fn two_state_tm_norm() {
        let a = 0.9;
        let t = 0.4;
        let s = WeightedSpace::new(vec![0.5, 0.5]).unwrap();
        let g = ReversibleGenerator::new(&s, DMatrix::from_row_slice(2, 2, &[a, -a, -a, a])).unwrap();
        let dec = decompose(&g).unwrap();
        let op = Operator::multiplier(&dec, &symbol_of_step(&StepMultiplier::indicator(t).unwrap()));
        let want = 1.0 - (-2.0 * a * t).exp();
        assert!((opnorm_exact(&op, 2.0).unwrap().value - want).abs() < 1e-14);
    }

    #[test]
    fn lower_estimate_tracks_exact_l2() {
        for seed in 0..6 {
            let (space, a) = random_reversible_generator(seed, 6, 1.0).unwrap();
            let dec = decompose(&a).unwrap();
            let step = StepMultiplier::new(vec![0.0, 0.3, 0.9, 1.5], vec![c(1.0), c(-0.7), C64::new(0.2, 0.5)]).unwrap();
            for op in [
                Operator::multiplier(&dec, &symbol_of_step(&step)),
                Operator::from_kernel(&heat_operator(&a, 0.3).unwrap()),
            ] {
                let exact = opnorm_exact(&op, 2.0).unwrap().value;
                let lower = opnorm_lower_estimate(&op, 2.0, 20, 50, seed).unwrap();
                assert!(lower.value <= exact + 1e-9);
                assert!(exact - lower.value < 1e-6, "seed {seed}: {exact} vs {}", lower.value);
                assert_eq!(lower.kind, NormKind::LowerBound);
            }
            let _ = space;
        }
    }

    #[test]
    fn lower_estimate_is_monotone() {
        let (_, a) = random_reversible_generator(9, 8, 1.0).unwrap();
        let dec = decompose(&a).unwrap();
        let step = StepMultiplier::uniform(0.4, vec![c(1.0), c(-1.0), c(1.0), c(-1.0)]).unwrap();
        let op = Operator::multiplier(&dec, &symbol_of_step(&step));
        for p in [1.3, 3.0] {
            let mut prev = 0.0;
            for steps in [0, 1, 5, 20] {
                let v = opnorm_lower_estimate(&op, p, 10, steps, 4).unwrap().value;
                assert!(v >= prev);
                prev = v;
            }
            let mut prev = 0.0;
            for probes in [1, 4, 16, 64] {
                let v = opnorm_lower_estimate(&op, p, probes, 5, 4).unwrap().value;
                assert!(v >= prev);
                prev = v;
            }
            let again = opnorm_lower_estimate(&op, p, 16, 5, 4).unwrap();
            assert_eq!(again, opnorm_lower_estimate(&op, p, 16, 5, 4).unwrap());
        }
    }

    #[test]
    fn inequality_report_rule() {
        let r = InequalityReport::new("x", 2.0, 1.0, Some(2.0), ThresholdProvenance::Proven);
        assert!(r.pass);
        let r = InequalityReport::new("x", 2.1, 1.0, Some(2.0), ThresholdProvenance::Proven);
        assert!(!r.pass);
        let r = InequalityReport::report_only("x", 1e9, 1.0);
        assert!(r.pass && r.threshold.is_none());
        assert_eq!(InequalityReport::report_only("z", 0.0, 0.0).ratio, 0.0);
    }

    #[test]
    fn reference_constants() {
        assert_eq!(reference_constant(2.0), 1.0);
        assert_eq!(reference_constant(3.0), 2.0);
        assert!((reference_constant(1.5) - 2.0).abs() < 1e-15);
        assert!((reference_constant(1.25) - 4.0).abs() < 1e-15);
        assert_eq!(transform_threshold(3.0, false), 4.0);
        assert_eq!(transform_threshold(2.0, false), 1.0);
    }

    #[test]
    fn growth_fit_recovers_line() {
        let pts: Vec<(f64, f64)> = [1.1, 1.25, 1.5, 2.0, 3.0].iter().map(|&p| (p, 0.5 + 2.0 / (p - 1.0))).collect();
        let fit = growth_fit(&pts).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12 && (fit.intercept - 0.5).abs() < 1e-12);
        assert_eq!(fit.points, 4);
        assert!(growth_fit(&[(3.0, 1.0)]).is_none());
    }

    #[test]
    fn multiplier_bound_zero_and_l2() {
        let (_, a) = random_reversible_generator(7, 6, 1.0).unwrap();
        let dec = decompose(&a).unwrap();
        let budget = ProbeBudget { probes: 50, ascent_steps: 20, seed: 2 };
        let zero = multiplier_bound_check(&dec, &Multiplier::Step(StepMultiplier::zero()), &[1.5, 2.0], budget).unwrap();
        assert!(zero.reports.iter().all(|r| r.ratio == 0.0 && r.pass));
        let step = StepMultiplier::uniform(0.5, vec![c(1.0), c(-1.0), c(0.5), c(-0.25)]).unwrap();
        let out = multiplier_bound_check(&dec, &Multiplier::Step(step), &[1.25, 2.0, 4.0], budget).unwrap();
        let l2 = &out.reports[1];
        assert_eq!(l2.threshold, Some(1.0));
        assert_eq!(l2.provenance, ThresholdProvenance::Proven);
        assert!(out.reports.iter().all(|r| r.pass), "{:?}", out.reports);
        assert_eq!(out.reports[0].provenance, ThresholdProvenance::ReferenceConstant);
    }

    fn path_instance(seed: u64, n: usize, horizon: usize) -> (PathSpace, Field) {
        let (space, a) = random_reversible_generator(seed, n, 1.0).unwrap();
        let ps = PathSpace::from_heat(Arc::new(decompose(&a).unwrap()), 0.5, horizon).unwrap();
        let f = Field::new(&space, (0..n).map(|i| c((i as f64 * 2.3).cos() * (1.0 + i as f64))).collect()).unwrap();
        (ps, f)
    }

    #[test]
    fn bg_examples() {
        let (ps, f) = path_instance(7, 4, 5);
        let zero = bg_transform_check(&ps, &[c(0.0); 5], &f, 3.0).unwrap();
        assert_eq!(zero.report.lhs, 0.0);
        let ones = bg_transform_check(&ps, &[c(1.0); 5], &f, 3.0).unwrap();
        assert!(ones.report.lhs <= 2.0 * ones.report.rhs);
        assert!(ones.contraction_ok);
        let signs = [c(1.0), c(-1.0), c(-1.0), c(1.0), c(-1.0)];
        let r = bg_transform_check(&ps, &signs, &f, 3.0).unwrap();
        assert!(r.report.pass && r.report.ratio <= 2.0);
        // homogeneity in f
        let scaled = bg_transform_check(&ps, &signs, &f.scale(C64::new(-3.5, 1.0)), 3.0).unwrap();
        assert!((scaled.report.ratio - r.report.ratio).abs() < 1e-12 * r.report.ratio);
        // scaling M does not change the normalized transform
        let big: Vec<C64> = signs.iter().map(|v| v * 4.0).collect();
        assert_eq!(bg_transform_check(&ps, &big, &f, 3.0).unwrap().report.lhs, r.report.lhs);
    }

    #[test]
    fn davis_chain_examples() {
        let (ps, f) = path_instance(7, 4, 4);
        let one = Field::constant(f.space(), c(2.0));
        let chain = davis_llogl_check(&ps, &[c(1.0); 4], &one).unwrap();
        assert!(chain.davis.lhs < 1e-13);
        assert!((chain.doob.lhs - 2.0).abs() < 1e-14);
        assert!(chain.finite());
        let chain = davis_llogl_check(&ps, &[c(0.5), c(-1.0), c(1.0), c(0.2)], &f).unwrap();
        assert!(chain.finite());
        assert!([&chain.davis, &chain.square_vs_maximal, &chain.doob, &chain.end_to_end]
            .iter()
            .all(|r| r.provenance == ThresholdProvenance::ReportOnly && r.pass));
        // |Delta_i| <= 2 max_i |f_i|, so square <= 2 sqrt(N) maximal pathwise
        assert!(chain.square_vs_maximal.ratio <= 2.0 * 2.0);
    }

    #[test]
    fn fatou_examples() {
        let (space, a) = random_reversible_generator(7, 6, 0.5).unwrap();
        let dec = decompose(&a).unwrap();
        let f = Field::from_real(&space, &[1.0, 0.5, -1.0, 2.0, 0.0, -0.5]).unwrap();
        let zero = SampledMultiplier::zero(10.0, 8).unwrap();
        let r = fatou_limit_check(&dec, &zero, &f, &[4, 8], 3.0, 1e-12).unwrap();
        assert!(r.norms.iter().all(|&n| n == 0.0) && r.limit_norm == 0.0 && r.pass);
        // midpoint steps converge at O(h^2), so at n = 64 on [0, 10] the gap is
        // a few parts in 1e3 rather than 1e-6
        let exp = SampledMultiplier::exp_decay(10.0, 64).unwrap();
        let r = fatou_limit_check(&dec, &exp, &f, &[4, 8, 16, 32, 64], 2.0, 1e-2).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.limit_norm - r.norms[4]).abs() < 1e-2 * r.limit_norm);
        let r = fatou_limit_check(&dec, &exp, &f, &[8, 16, 32, 64], 1.5, 1e-2).unwrap();
        assert!(r.pass, "{r:?}");
        // step-aligned: every approximation reproduces T_m exactly
        let step = StepMultiplier::uniform(2.5, vec![c(1.0), c(-0.5), c(0.25), c(-1.0)]).unwrap();
        let aligned = SampledMultiplier::from_step(&step, 10.0, 16).unwrap();
        let r = fatou_limit_check(&dec, &aligned, &f, &[4, 8, 16], 3.0, 1e-12).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.norms.iter().all(|n| (n - r.limit_norm).abs() < 1e-12));
    }

    #[test]
    fn imaginary_powers() {
        let (_, a) = random_reversible_generator(7, 8, 1.0).unwrap();
        let dec = decompose(&a).unwrap();
        for gamma in [0.5, 1.0, 2.0] {
            let m = crate::multiplier::imaginary_power_preset(gamma).unwrap();
            let r = imaginary_power_check(&dec, &m, gamma).unwrap();
            assert!(r.pass, "{r:?}");
            assert!((r.norm2 - 1.0).abs() <= r.max_reported_error + 1e-12);
        }
    }
}
