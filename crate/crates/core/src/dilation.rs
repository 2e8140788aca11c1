//! Rota's dilation on a finite path space.
//!
//! Paths `(x_0, ..., x_N)` carry the measure
//! `P(x) = nu(x_0) Q(x_0, x_1) ... Q(x_{N-1}, x_N)` with `nu` the normalized
//! point masses. The reverse filtration is `F_k = sigma(x_k, ..., x_N)`, the
//! hat expectation conditions on `x_0`. By reversibility
//! `E[f(x_0) | F_k] = (Q^k f)(x_k)`, hence `E[E[f(x_0) | F_k] | x_0] = Q^{2k} f`.
//!
//! Exact quantities come from full enumeration of the `n^{N+1}` paths, split
//! by starting state and run in parallel; each stratum accumulates
//! sequentially and strata are combined in index order, so results do not
//! depend on the thread count. Monte Carlo estimates stratify on `x_0` with a
//! seeded ChaCha stream per stratum.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::multiplier::{telescoping_tm_with, StepMultiplier};
use crate::semigroup::{verify_markov_conditions, MarkovKernel, DEFAULT_TOL};
use crate::space::{lp_norm, Field, WeightedSpace, C64};
use crate::spectral::SpectralDecomposition;

pub const DEFAULT_ENUMERATION_BUDGET: u64 = 1_000_000;

/// How path-space expectations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Exact,
    MonteCarlo { seed: u64, samples: usize },
}

/// The heat semigroup a path space was dilated from: `Q = T^{epsilon / 2}`.
#[derive(Debug, Clone)]
pub struct HeatOrigin {
    pub decomposition: Arc<SpectralDecomposition>,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct PathSpace {
    kernel: MarkovKernel,
    horizon: usize,
    law: Arc<WeightedSpace>,
    origin: Option<HeatOrigin>,
    budget: u64,
}

impl PathSpace {
    pub fn new(kernel: MarkovKernel, horizon: usize) -> Result<Self> {
        let report = verify_markov_conditions(&kernel, DEFAULT_TOL);
        if !report.pass {
            return Err(Error::InvalidKernel(format!("kernel fails Markov conditions: {report:?}")));
        }
        let law = kernel.space().normalized();
        Ok(Self { kernel, horizon, law, origin: None, budget: DEFAULT_ENUMERATION_BUDGET })
    }

    /// Dilation of `T^t` with level spacing `epsilon`: `Q = T^{epsilon / 2}`,
    /// so level `i` corresponds to time `i * epsilon`.
    pub fn from_heat(dec: Arc<SpectralDecomposition>, epsilon: f64, horizon: usize) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        let kernel = dec.heat_kernel(epsilon / 2.0)?;
        let mut ps = Self::new(kernel, horizon)?;
        ps.origin = Some(HeatOrigin { decomposition: dec, epsilon });
        Ok(ps)
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn kernel(&self) -> &MarkovKernel {
        &self.kernel
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn states(&self) -> usize {
        self.kernel.len()
    }

    /// The initial law `nu` as a probability space on the same points.
    pub fn law(&self) -> &Arc<WeightedSpace> {
        &self.law
    }

    pub fn origin(&self) -> Option<&HeatOrigin> {
        self.origin.as_ref()
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn path_count(&self) -> u128 {
        (self.states() as u128).saturating_pow(self.horizon as u32 + 1)
    }

    pub fn check_budget(&self) -> Result<()> {
        let paths = self.path_count();
        if paths > self.budget as u128 {
            Err(Error::BudgetExceeded { paths, budget: self.budget })
        } else {
            Ok(())
        }
    }

    fn check_field(&self, f: &Field) -> Result<()> {
        if self.kernel.space().same_as(f.space()) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    /// Visits every positive-probability path, one accumulator per starting
    /// state. `visit` receives the path and its probability conditional on
    /// `x_0`.
    fn sweep<T, I, V>(&self, init: I, visit: V) -> Result<Vec<T>>
    where
        T: Send,
        I: Fn() -> T + Sync,
        V: Fn(&mut T, &[usize], f64) + Sync,
    {
        self.check_budget()?;
        let n = self.states();
        let q = self.kernel.entries();
        Ok((0..n)
            .into_par_iter()
            .map(|x0| {
                let mut acc = init();
                let mut path = vec![x0; self.horizon + 1];
                descend(q, &mut path, 1, 1.0, &mut acc, &visit);
                acc
            })
            .collect())
    }
}

fn descend<T>(
    q: &DMatrix<f64>,
    path: &mut [usize],
    k: usize,
    prob: f64,
    acc: &mut T,
    visit: &(impl Fn(&mut T, &[usize], f64) + ?Sized),
) {
    if k == path.len() {
        visit(acc, path, prob);
        return;
    }
    let prev = path[k - 1];
    for y in 0..q.ncols() {
        let p = q[(prev, y)];
        if p == 0.0 {
            continue;
        }
        path[k] = y;
        descend(q, path, k + 1, prob * p, acc, visit);
    }
}

type PathFn = Arc<dyn Fn(&[usize]) -> C64 + Send + Sync>;

/// A scalar function of a whole path.
#[derive(Clone)]
pub struct PathFunctional {
    evaluator: PathFn,
    description: String,
}

impl fmt::Debug for PathFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathFunctional").field("description", &self.description).finish()
    }
}

impl PathFunctional {
    pub fn new(description: impl Into<String>, evaluator: impl Fn(&[usize]) -> C64 + Send + Sync + 'static) -> Self {
        Self { evaluator: Arc::new(evaluator), description: description.into() }
    }

    /// `omega -> g(x_k)`.
    pub fn at_level(g: &Field, k: usize) -> Self {
        let values = g.values().clone();
        Self::new(format!("level {k}"), move |path| values[path[k]])
    }

    /// `omega -> f(x_0)`.
    pub fn of_start(f: &Field) -> Self {
        Self::at_level(f, 0)
    }

    pub fn constant(c: C64) -> Self {
        Self::new("constant", move |_| c)
    }

    pub fn eval(&self, path: &[usize]) -> C64 {
        (self.evaluator)(path)
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

/// `g_k = Q^k f` for `k = 0..=N`; the reverse martingale is `f_k = g_k(x_k)`.
#[derive(Debug, Clone)]
pub struct ReverseMartingaleFamily {
    levels: Vec<Field>,
}

impl ReverseMartingaleFamily {
    pub fn levels(&self) -> &[Field] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &Field {
        &self.levels[k]
    }

    pub fn functional(&self, k: usize) -> PathFunctional {
        PathFunctional::at_level(&self.levels[k], k)
    }

    pub fn horizon(&self) -> usize {
        self.levels.len() - 1
    }
}

pub fn reverse_martingale(ps: &PathSpace, f: &Field) -> Result<ReverseMartingaleFamily> {
    ps.check_field(f)?;
    let mut levels = Vec::with_capacity(ps.horizon + 1);
    levels.push(f.clone());
    for k in 1..=ps.horizon {
        let next = ps.kernel.apply(&levels[k - 1])?;
        levels.push(next);
    }
    Ok(ReverseMartingaleFamily { levels })
}

/// `x -> E[S | x_0 = x]`, with per-state standard errors in Monte Carlo mode.
#[derive(Debug, Clone)]
pub struct HatExpectation {
    pub field: Field,
    pub std_errors: Option<Vec<f64>>,
}

pub fn hat_expectation(ps: &PathSpace, s: &PathFunctional, mode: EvalMode) -> Result<HatExpectation> {
    match mode {
        EvalMode::Exact => {
            let sums = ps.sweep(|| C64::new(0.0, 0.0), |acc, path, p| *acc += s.eval(path) * p)?;
            Ok(HatExpectation { field: Field::new(ps.kernel.space(), sums)?, std_errors: None })
        }
        EvalMode::MonteCarlo { seed, samples } => {
            let strata = monte_carlo(ps, seed, samples, |path| s.eval(path))?;
            let values = strata.iter().map(|st| st.mean).collect();
            let errors = strata.iter().map(|st| st.std_error).collect();
            Ok(HatExpectation { field: Field::new(ps.kernel.space(), values)?, std_errors: Some(errors) })
        }
    }
}

/// `||S||_{L^p(P)}`, with a delta-method standard error in Monte Carlo mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathNorm {
    pub value: f64,
    pub std_error: Option<f64>,
}

pub fn path_lp_norm(ps: &PathSpace, s: &PathFunctional, p: f64, mode: EvalMode) -> Result<PathNorm> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    let nu = ps.law.weights();
    match mode {
        EvalMode::Exact if p == f64::INFINITY => {
            let maxima = ps.sweep(|| 0.0_f64, |acc, path, _| *acc = acc.max(s.eval(path).norm()))?;
            Ok(PathNorm { value: maxima.into_iter().fold(0.0, f64::max), std_error: None })
        }
        EvalMode::Exact => {
            let moments = ps.sweep(|| 0.0_f64, |acc, path, prob| *acc += s.eval(path).norm().powf(p) * prob)?;
            let total: f64 = moments.iter().zip(nu).map(|(m, w)| m * w).sum();
            Ok(PathNorm { value: total.powf(1.0 / p), std_error: None })
        }
        EvalMode::MonteCarlo { seed, samples } if p == f64::INFINITY => {
            let strata = monte_carlo(ps, seed, samples, |path| C64::new(s.eval(path).norm(), 0.0))?;
            let value = strata.iter().map(|st| st.max_re).fold(0.0, f64::max);
            Ok(PathNorm { value, std_error: None })
        }
        EvalMode::MonteCarlo { seed, samples } => {
            let strata = monte_carlo(ps, seed, samples, |path| C64::new(s.eval(path).norm().powf(p), 0.0))?;
            let moment: f64 = strata.iter().zip(nu).map(|(st, w)| st.mean.re * w).sum();
            let var: f64 = strata.iter().zip(nu).map(|(st, w)| (st.std_error * w).powi(2)).sum();
            let value = moment.powf(1.0 / p);
            let std_error = if moment > 0.0 { var.sqrt() * value / (p * moment) } else { 0.0 };
            Ok(PathNorm { value, std_error: Some(std_error) })
        }
    }
}

struct Stratum {
    mean: C64,
    std_error: f64,
    max_re: f64,
}

/// Samples per stratum are `max(2, round(samples * nu(x_0)))`.
fn monte_carlo(
    ps: &PathSpace,
    seed: u64,
    samples: usize,
    s: impl Fn(&[usize]) -> C64 + Sync,
) -> Result<Vec<Stratum>> {
    if samples == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one sample".into()));
    }
    let n = ps.states();
    let q = ps.kernel.entries();
    let cumulative: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            q.row(i)
                .iter()
                .scan(0.0, |acc, &x| {
                    *acc += x;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let nu = ps.law.weights();
    Ok((0..n)
        .into_par_iter()
        .map(|x0| {
            let count = ((samples as f64 * nu[x0]).round() as usize).max(2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(x0 as u64);
            let mut path = vec![x0; ps.horizon + 1];
            let mut mean = C64::new(0.0, 0.0);
            let mut m2 = 0.0;
            let mut max_re = f64::NEG_INFINITY;
            for i in 0..count {
                for k in 1..=ps.horizon {
                    let row = &cumulative[path[k - 1]];
                    let u: f64 = rng.random::<f64>() * row[n - 1];
                    path[k] = row.partition_point(|&c| c <= u).min(n - 1);
                }
                let v = s(&path);
                max_re = max_re.max(v.re);
                let delta = v - mean;
                mean += delta / (i + 1) as f64;
                m2 += delta.norm() * (v - mean).norm();
            }
            let var = m2 / (count - 1) as f64;
            Stratum { mean, std_error: (var / count as f64).sqrt(), max_re }
        })
        .collect())
}

/// `E[S | F_k]` by enumeration, tabulated over tails `(x_k, ..., x_N)`.
pub fn conditional_on_tail(ps: &PathSpace, s: &PathFunctional, k: usize) -> Result<PathFunctional> {
    if k > ps.horizon {
        return Err(Error::InvalidArgument(format!("level {k} beyond horizon {}", ps.horizon)));
    }
    let n = ps.states();
    let tail_len = ps.horizon + 1 - k;
    let size = n.pow(tail_len as u32);
    let code = move |path: &[usize]| path[k..].iter().fold(0usize, |acc, &x| acc * n + x);
    let nu = ps.law.weights().to_vec();
    let parts = ps.sweep(
        || (vec![C64::new(0.0, 0.0); size], vec![0.0_f64; size]),
        |acc, path, p| {
            let weight = p * nu[path[0]];
            let c = code(path);
            acc.0[c] += s.eval(path) * weight;
            acc.1[c] += weight;
        },
    )?;
    let mut num = vec![C64::new(0.0, 0.0); size];
    let mut den = vec![0.0_f64; size];
    for (pn, pd) in parts {
        for c in 0..size {
            num[c] += pn[c];
            den[c] += pd[c];
        }
    }
    let table: Vec<C64> = num
        .iter()
        .zip(&den)
        .map(|(a, &d)| if d > 0.0 { a / d } else { C64::new(0.0, 0.0) })
        .collect();
    Ok(PathFunctional::new(format!("E[{} | F_{k}]", s.description()), move |path| table[code(path)]))
}

/// Two computations of the reverse martingale: matrix powers `Q g_k = g_{k+1}`
/// and direct enumeration of `E[f(x_0) | F_k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    /// `max_k |Q g_k - g_{k+1}|`.
    pub matrix_defect: f64,
    /// `max_k max_path |E[f_k | F_{k+1}] - f_{k+1}|` by enumeration.
    pub martingale_defect: f64,
    /// `max_k max_path |E[f(x_0) | F_k] - g_k(x_k)|`.
    pub agreement: f64,
}

pub fn reverse_martingale_report(ps: &PathSpace, f: &Field) -> Result<MartingaleReport> {
    let family = reverse_martingale(ps, f)?;
    let mut matrix_defect = 0.0_f64;
    for k in 0..ps.horizon {
        let next = ps.kernel.apply(family.level(k))?;
        matrix_defect = matrix_defect.max(next.max_abs_diff(family.level(k + 1))?);
    }
    let start = PathFunctional::of_start(f);
    let mut by_enumeration = Vec::with_capacity(ps.horizon + 1);
    for k in 0..=ps.horizon {
        by_enumeration.push(conditional_on_tail(ps, &start, k)?);
    }
    let mut martingale_defect = 0.0_f64;
    for k in 0..ps.horizon {
        let cond = conditional_on_tail(ps, &by_enumeration[k], k + 1)?;
        let next = family.functional(k + 1);
        martingale_defect = martingale_defect.max(max_path_diff(ps, &cond, &next)?);
    }
    let mut agreement = 0.0_f64;
    for (k, fk) in by_enumeration.iter().enumerate() {
        agreement = agreement.max(max_path_diff(ps, fk, &family.functional(k))?);
    }
    Ok(MartingaleReport { matrix_defect, martingale_defect, agreement })
}

fn max_path_diff(ps: &PathSpace, a: &PathFunctional, b: &PathFunctional) -> Result<f64> {
    let parts = ps.sweep(|| 0.0_f64, |acc, path, _| *acc = acc.max((a.eval(path) - b.eval(path)).norm()))?;
    Ok(parts.into_iter().fold(0.0, f64::max))
}

/// Check of `E[E[f(x_0) | F_k] | x_0] = Q^{2k} f`, and `= T^{k epsilon} f`
/// when the path space was dilated from a heat semigroup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DilationReport {
    pub k: usize,
    pub defect_kernel_power: f64,
    pub defect_heat: Option<f64>,
    pub tol: f64,
    pub pass: bool,
}

pub fn dilation_identity_check(ps: &PathSpace, f: &Field, k: usize, tol: f64) -> Result<DilationReport> {
    ps.check_field(f)?;
    let fk = conditional_on_tail(ps, &PathFunctional::of_start(f), k)?;
    let lhs = hat_expectation(ps, &fk, EvalMode::Exact)?.field;
    let power = ps.kernel.power(2 * k);
    let rhs = Field::from_vector(f.space(), crate::linalg::real_mat_vec(&power, f.values()))?;
    let defect_kernel_power = lhs.max_abs_diff(&rhs)?;
    let defect_heat = match &ps.origin {
        Some(o) => {
            let heat = o.decomposition.heat_kernel(k as f64 * o.epsilon)?.apply(f)?;
            Some(lhs.max_abs_diff(&heat)?)
        }
        None => None,
    };
    let scale = lp_norm(f, f64::INFINITY)?.max(1.0);
    let pass = defect_kernel_power <= tol * scale && defect_heat.is_none_or(|d| d <= tol * scale);
    Ok(DilationReport { k, defect_kernel_power, defect_heat, tol, pass })
}

/// `S = sum_i M_i (f_{i+1} - f_i)` with `f_i = g_i(x_i)`.
pub fn martingale_transform(ps: &PathSpace, m: &[C64], f: &Field) -> Result<PathFunctional> {
    if m.len() != ps.horizon {
        return Err(Error::LengthMismatch { expected: ps.horizon, got: m.len() });
    }
    let family = reverse_martingale(ps, f)?;
    let levels: Vec<Vec<C64>> = family.levels.iter().map(|g| g.values().iter().copied().collect()).collect();
    let m = m.to_vec();
    Ok(PathFunctional::new("martingale transform", move |path| {
        m.iter()
            .enumerate()
            .map(|(i, mi)| mi * (levels[i + 1][path[i + 1]] - levels[i][path[i]]))
            .sum()
    }))
}

/// Check of `E[S | x_0] = sum_i M_i (Q^{2(i+1)} - Q^{2i}) f`, and of its
/// agreement with the telescoping heat-operator sum when `Q = T^{epsilon/2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformReport {
    pub defect_kernel_powers: f64,
    pub defect_telescoping: Option<f64>,
    pub tol: f64,
    pub pass: bool,
}

pub fn transform_expectation_identity(ps: &PathSpace, m: &[C64], f: &Field, tol: f64) -> Result<TransformReport> {
    let s = martingale_transform(ps, m, f)?;
    let lhs = hat_expectation(ps, &s, EvalMode::Exact)?.field;
    let q2 = ps.kernel.entries() * ps.kernel.entries();
    let mut power = DMatrix::<f64>::identity(ps.states(), ps.states());
    let mut rhs = Field::zeros(f.space());
    for mi in m {
        let next = &q2 * &power;
        let diff = &next - &power;
        let term = Field::from_vector(f.space(), crate::linalg::real_mat_vec(&diff, f.values()))?;
        rhs = rhs.add(&term.scale(*mi))?;
        power = next;
    }
    let defect_kernel_powers = lhs.max_abs_diff(&rhs)?;
    let defect_telescoping = match &ps.origin {
        Some(o) => {
            let step = StepMultiplier::uniform(o.epsilon, m.to_vec())
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let tel = telescoping_tm_with(&o.decomposition, &step, f)?;
            Some(lhs.max_abs_diff(&tel)?)
        }
        None => None,
    };
    let m_sup = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let scale = (lp_norm(f, f64::INFINITY)? * m_sup).max(1.0);
    let pass = defect_kernel_powers <= tol * scale && defect_telescoping.is_none_or(|d| d <= tol * scale);
    Ok(TransformReport { defect_kernel_powers, defect_telescoping, tol, pass })
}

/// Square function `(sum_i |M_i (f_{i+1} - f_i)|^2)^{1/2}` of the transform
/// increments and maximal function `max_i |f_i|` of the levels.
pub fn square_and_maximal(
    family: &ReverseMartingaleFamily,
    m: &[C64],
) -> Result<(PathFunctional, PathFunctional)> {
    let horizon = family.horizon();
    if m.len() != horizon {
        return Err(Error::LengthMismatch { expected: horizon, got: m.len() });
    }
    let levels: Vec<Vec<C64>> = family.levels.iter().map(|g| g.values().iter().copied().collect()).collect();
    let m = m.to_vec();
    let lv = levels.clone();
    let square = PathFunctional::new("square function", move |path| {
        let s: f64 = m
            .iter()
            .enumerate()
            .map(|(i, mi)| (mi * (lv[i + 1][path[i + 1]] - lv[i][path[i]])).norm_sqr())
            .sum();
        C64::new(s.sqrt(), 0.0)
    });
    let maximal = PathFunctional::new("maximal function", move |path| {
        let s = levels.iter().enumerate().map(|(i, g)| g[path[i]].norm()).fold(0.0, f64::max);
        C64::new(s, 0.0)
    });
    Ok((square, maximal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::random_reversible_generator;
    use crate::spectral::decompose;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn flip_chain(q: f64, horizon: usize) -> PathSpace {
        let s = WeightedSpace::new(vec![0.5, 0.5]).unwrap();
        let k = MarkovKernel::new(&s, DMatrix::from_row_slice(2, 2, &[1.0 - q, q, q, 1.0 - q]), 1.0).unwrap();
        PathSpace::new(k, horizon).unwrap()
    }

    fn seeded(seed: u64, n: usize, horizon: usize, epsilon: f64) -> (PathSpace, Field) {
        let (space, a) = random_reversible_generator(seed, n, 1.0).unwrap();
        let dec = Arc::new(decompose(&a).unwrap());
        let ps = PathSpace::from_heat(dec, epsilon, horizon).unwrap();
        let f = Field::new(&space, (0..n).map(|i| C64::new((i as f64 * 1.7).sin(), (i as f64).cos())).collect()).unwrap();
        (ps, f)
    }

    #[test]
    fn levels_of_reverse_martingale() {
        let q = 0.2;
        let ps = flip_chain(q, 1);
        let f = Field::from_real(ps.kernel().space(), &[1.0, -1.0]).unwrap();
        let fam = reverse_martingale(&ps, &f).unwrap();
        assert_eq!(fam.level(0), &f);
        assert!(fam.level(1).max_abs_diff(&f.scale(c(1.0 - 2.0 * q))).unwrap() < 1e-15);
        let one = Field::constant(ps.kernel().space(), c(2.0));
        let fam = reverse_martingale(&flip_chain(q, 4), &one).unwrap();
        assert!(fam.levels().iter().all(|g| g.max_abs_diff(&one).unwrap() < 1e-15));
    }

    #[test]
    fn hat_expectation_examples() {
        let (ps, f) = seeded(7, 4, 3, 0.5);
        let start = hat_expectation(&ps, &PathFunctional::of_start(&f), EvalMode::Exact).unwrap();
        assert!(start.field.max_abs_diff(&f).unwrap() < 1e-14);
        for k in 0..=3 {
            let got = hat_expectation(&ps, &PathFunctional::at_level(&f, k), EvalMode::Exact).unwrap();
            let want = Field::from_vector(f.space(), crate::linalg::real_mat_vec(&ps.kernel().power(k), f.values())).unwrap();
            assert!(got.field.max_abs_diff(&want).unwrap() < 1e-14);
        }
    }

    #[test]
    fn monte_carlo_agrees_with_enumeration() {
        let (ps, f) = seeded(7, 4, 4, 0.8);
        let s = martingale_transform(&ps, &[c(1.0), c(-1.0), c(0.5), c(1.0)], &f).unwrap();
        let exact = hat_expectation(&ps, &s, EvalMode::Exact).unwrap().field;
        let mc = hat_expectation(&ps, &s, EvalMode::MonteCarlo { seed: 3, samples: 20_000 }).unwrap();
        let se = mc.std_errors.unwrap();
        for x in 0..4 {
            let gap = (mc.field.values()[x] - exact.values()[x]).norm();
            assert!(gap <= 4.0 * se[x], "state {x}: gap {gap} se {}", se[x]);
        }
        for p in [1.0, 2.0, 3.0] {
            let exact = path_lp_norm(&ps, &s, p, EvalMode::Exact).unwrap().value;
            let mc = path_lp_norm(&ps, &s, p, EvalMode::MonteCarlo { seed: 9, samples: 20_000 }).unwrap();
            assert!((mc.value - exact).abs() <= 4.0 * mc.std_error.unwrap(), "p = {p}");
        }
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let (ps, f) = seeded(2, 3, 3, 0.4);
        let s = PathFunctional::at_level(&f, 3);
        let mode = EvalMode::MonteCarlo { seed: 5, samples: 500 };
        let a = hat_expectation(&ps, &s, mode).unwrap();
        let b = hat_expectation(&ps, &s, mode).unwrap();
        assert_eq!(a.field, b.field);
    }

    #[test]
    fn path_norm_examples() {
        let (ps, f) = seeded(4, 3, 2, 1.0);
        let k = path_lp_norm(&ps, &PathFunctional::constant(C64::new(3.0, 4.0)), 2.5, EvalMode::Exact).unwrap();
        assert!((k.value - 5.0).abs() < 1e-14);
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            let got = path_lp_norm(&ps, &PathFunctional::of_start(&f), p, EvalMode::Exact).unwrap().value;
            let want = lp_norm(&f.with_space(ps.law()).unwrap(), p).unwrap();
            assert!((got - want).abs() < 1e-14 * want.max(1.0), "p = {p}");
        }
    }

    #[test]
    fn budget_is_enforced() {
        let ps = flip_chain(0.3, 25);
        let s = PathFunctional::constant(c(1.0));
        assert!(matches!(hat_expectation(&ps, &s, EvalMode::Exact), Err(Error::BudgetExceeded { .. })));
        assert!(hat_expectation(&ps, &s, EvalMode::MonteCarlo { seed: 1, samples: 10 }).is_ok());
        let small = flip_chain(0.3, 3).with_budget(8);
        assert!(path_lp_norm(&small, &s, 2.0, EvalMode::Exact).is_err());
    }

    #[test]
    fn two_state_dilation_by_hand() {
        // four paths (x0, x1); E[f(x0) | x1] = (Qf)(x1) and E[(Qf)(x1) | x0] = Q^2 f
        let q = 0.3;
        let ps = flip_chain(q, 1);
        let f = Field::from_real(ps.kernel().space(), &[2.0, -1.0]).unwrap();
        let qm = [[1.0 - q, q], [q, 1.0 - q]];
        let fv = [2.0, -1.0];
        let mut by_hand = [0.0; 2];
        for x0 in 0..2 {
            for x1 in 0..2 {
                // nu is uniform, so P(x0 | x1) = Q(x1, x0)
                let cond: f64 = (0..2).map(|y| qm[x1][y] * fv[y]).sum();
                by_hand[x0] += qm[x0][x1] * cond;
            }
        }
        let r = dilation_identity_check(&ps, &f, 1, 1e-12).unwrap();
        assert!(r.pass, "{r:?}");
        let fk = conditional_on_tail(&ps, &PathFunctional::of_start(&f), 1).unwrap();
        let got = hat_expectation(&ps, &fk, EvalMode::Exact).unwrap().field;
        for x in 0..2 {
            assert!((got.values()[x].re - by_hand[x]).abs() < 1e-15);
        }
        let r0 = dilation_identity_check(&ps, &f, 0, 1e-15).unwrap();
        assert_eq!(r0.defect_kernel_power, 0.0);
    }

    #[test]
    fn dilation_on_seeded_chain() {
        let (ps, f) = seeded(7, 5, 3, 0.6);
        for k in 0..=3 {
            let r = dilation_identity_check(&ps, &f, k, 1e-12).unwrap();
            assert!(r.pass, "{r:?}");
            assert!(r.defect_heat.unwrap() < 1e-12);
        }
    }

    #[test]
    fn reverse_martingale_two_ways() {
        let (ps, f) = seeded(11, 4, 4, 0.7);
        let r = reverse_martingale_report(&ps, &f).unwrap();
        assert!(r.matrix_defect < 1e-12 && r.martingale_defect < 1e-12 && r.agreement < 1e-12, "{r:?}");
    }

    #[test]
    fn transform_examples() {
        let q = 0.25;
        let ps = flip_chain(q, 1);
        let f = Field::from_real(ps.kernel().space(), &[1.5, -0.5]).unwrap();
        let zero = martingale_transform(&ps, &[c(0.0)], &f).unwrap();
        let m0 = C64::new(0.7, -0.2);
        let s = martingale_transform(&ps, &[m0], &f).unwrap();
        let qf = [(1.0 - q) * 1.5 + q * -0.5, q * 1.5 + (1.0 - q) * -0.5];
        let fv = [1.5, -0.5];
        for x0 in 0..2 {
            for x1 in 0..2 {
                assert_eq!(zero.eval(&[x0, x1]), c(0.0));
                let want = m0 * (qf[x1] - fv[x0]);
                assert!((s.eval(&[x0, x1]) - want).norm() < 1e-15);
            }
        }
        assert!(martingale_transform(&ps, &[c(1.0), c(1.0)], &f).is_err());
        let (ps, f) = seeded(3, 3, 4, 0.5);
        let fam = reverse_martingale(&ps, &f).unwrap();
        let tele = martingale_transform(&ps, &[c(1.0); 4], &f).unwrap();
        let path = [0, 2, 1, 1, 0];
        let want = fam.level(4).values()[0] - fam.level(0).values()[0];
        assert!((tele.eval(&path) - want).norm() < 1e-15);
    }

    #[test]
    fn transform_identity_single_piece() {
        let (ps, f) = seeded(5, 4, 1, 0.9);
        let r = transform_expectation_identity(&ps, &[c(1.0)], &f, 1e-12).unwrap();
        assert!(r.pass, "{r:?}");
        let zero = transform_expectation_identity(&ps, &[c(0.0)], &f, 1e-15).unwrap();
        assert_eq!(zero.defect_kernel_powers, 0.0);
    }

    #[test]
    fn square_and_maximal_examples() {
        let ps = flip_chain(0.4, 3);
        let one = Field::constant(ps.kernel().space(), C64::new(0.0, -2.0));
        let fam = reverse_martingale(&ps, &one).unwrap();
        let (sq, mx) = square_and_maximal(&fam, &[c(1.0); 3]).unwrap();
        assert!(sq.eval(&[0, 1, 1, 0]).norm() < 1e-15);
        assert!((mx.eval(&[0, 1, 1, 0]).re - 2.0).abs() < 1e-15);

        // N = 1 two-state: square = |(Qf)(x1) - f(x0)|, maximal = max(|f(x0)|, |(Qf)(x1)|)
        let q = 0.1;
        let ps = flip_chain(q, 1);
        let f = Field::from_real(ps.kernel().space(), &[3.0, -1.0]).unwrap();
        let fam = reverse_martingale(&ps, &f).unwrap();
        let (sq, mx) = square_and_maximal(&fam, &[c(1.0)]).unwrap();
        let qf: [f64; 2] = [0.9 * 3.0 - 0.1, 0.1 * 3.0 - 0.9];
        let fv: [f64; 2] = [3.0, -1.0];
        for x0 in 0..2 {
            for x1 in 0..2 {
                let path = [x0, x1];
                assert!((sq.eval(&path).re - (qf[x1] - fv[x0]).abs()).abs() < 1e-15);
                let m = f64::max(fv[x0].abs(), qf[x1].abs());
                assert!((mx.eval(&path).re - m).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pathwise_cauchy_schwarz() {
        let (ps, f) = seeded(8, 3, 4, 0.6);
        let m = [c(1.0); 4];
        let s = martingale_transform(&ps, &m, &f).unwrap();
        let fam = reverse_martingale(&ps, &f).unwrap();
        let (sq, _) = square_and_maximal(&fam, &m).unwrap();
        let worst = ps
            .sweep(|| f64::NEG_INFINITY, |acc, path, _| {
                *acc = acc.max(s.eval(path).norm() - 2.0 * sq.eval(path).re - 1e-14)
            })
            .unwrap();
        assert!(worst.into_iter().all(|w| w <= 0.0), "|S| <= sqrt(N) * square");
    }

    #[test]
    fn law_of_start_is_nu() {
        let (ps, _) = seeded(6, 4, 3, 0.5);
        let mass = ps.sweep(|| 0.0, |acc, _, p| *acc += p).unwrap();
        for (x, m) in mass.iter().enumerate() {
            assert!((m - 1.0).abs() < 1e-13, "conditional mass at {x}");
        }
        let total: f64 = ps.law().weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }
}
