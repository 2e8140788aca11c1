//! Laplace-transform-type multipliers.
//!
//! A bounded function `M` on `(0, inf)` induces the symbol
//! `m(lambda) = -lambda * int_0^inf M(t) e^{-t lambda} dt` (with `m(0) = 0`)
//! and the operator `T_m = m(A)`. Step functions have a closed-form symbol;
//! general samplers go through a certified composite quadrature.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{gamma_complex, gauss_legendre};
use crate::semigroup::ReversibleGenerator;
use crate::space::{lp_norm, Field, C64};
use crate::spectral::{decompose, SpectralDecomposition};

/// Gauss-Legendre points per quadrature panel.
const PANEL_ORDER: usize = 10;
/// `[0, HEAD_RATIO * t_max]` is covered by a single panel with an a priori bound.
const HEAD_RATIO: f64 = 1e-15;
/// Floor on the reported quadrature error, in units of the absolute sum.
const ROUNDOFF_FACTOR: f64 = 64.0 * f64::EPSILON;

pub const IMAGINARY_POWER_T_MAX: f64 = 500.0;
pub const IMAGINARY_POWER_GRID: usize = 400;
pub const MAX_IMAGINARY_ORDER: f64 = 10.0;

/// `M = sum_i M_i 1_{[t_i, t_{i+1})}`, zero on `[t_N, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepMultiplier {
    breakpoints: Vec<f64>,
    values: Vec<C64>,
}

impl StepMultiplier {
    /// `breakpoints` are `t_0 = 0 <= t_1 <= ... <= t_N`, `values` are the
    /// `N` piece values.
    pub fn new(breakpoints: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 {
            return Err(Error::InvalidMultiplier(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len().saturating_sub(1),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidMultiplier("first breakpoint must be 0".into()));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidMultiplier("breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidMultiplier("breakpoints must be nondecreasing".into()));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidMultiplier("values must be finite".into()));
        }
        Ok(Self { breakpoints, values })
    }

    /// Pieces of equal length `epsilon`: `t_i = i * epsilon`.
    pub fn uniform(epsilon: f64, values: Vec<C64>) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidMultiplier(format!("step length must be positive, got {epsilon}")));
        }
        let breakpoints = (0..=values.len()).map(|i| i as f64 * epsilon).collect();
        Self::new(breakpoints, values)
    }

    /// `1_{[0, t)}`.
    pub fn indicator(t: f64) -> Result<Self> {
        Self::new(vec![0.0, t], vec![C64::new(1.0, 0.0)])
    }

    pub fn zero() -> Self {
        Self { breakpoints: vec![0.0], values: vec![] }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn pieces(&self) -> usize {
        self.values.len()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// `M(t)`, right-continuous at breakpoints.
    pub fn eval(&self, t: f64) -> C64 {
        if t < 0.0 {
            return C64::new(0.0, 0.0);
        }
        // last piece whose left end is <= t and whose right end is > t
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        if idx == 0 || idx > self.values.len() {
            C64::new(0.0, 0.0)
        } else {
            self.values[idx - 1]
        }
    }

    /// `sum_j c_j M_j` on the merged breakpoint set.
    pub fn linear_combination(terms: &[(C64, &StepMultiplier)]) -> Result<Self> {
        let mut breaks: Vec<f64> = terms.iter().flat_map(|(_, m)| m.breakpoints.iter().copied()).collect();
        breaks.push(0.0);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let values = breaks
            .windows(2)
            .map(|w| terms.iter().map(|(c, m)| c * m.eval(w[0])).sum())
            .collect();
        Self::new(breaks, values)
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { breakpoints: self.breakpoints.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }
}

pub type Sampler = Arc<dyn Fn(f64) -> C64 + Send + Sync>;
pub type SymbolFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

/// A bounded `M` known through a sampler on `(0, t_max]`; treated as zero
/// beyond `t_max`, with the neglected tail charged to the error bound.
#[derive(Clone)]
pub struct SampledMultiplier {
    name: String,
    sampler: Sampler,
    t_max: f64,
    grid_size: usize,
    declared_sup: f64,
    breaks: Vec<f64>,
    analytic: Option<SymbolFn>,
}

impl fmt::Debug for SampledMultiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledMultiplier")
            .field("name", &self.name)
            .field("t_max", &self.t_max)
            .field("grid_size", &self.grid_size)
            .field("declared_sup", &self.declared_sup)
            .field("breaks", &self.breaks)
            .field("analytic", &self.analytic.is_some())
            .finish()
    }
}

impl SampledMultiplier {
    pub fn new(
        name: impl Into<String>,
        sampler: Sampler,
        t_max: f64,
        grid_size: usize,
        declared_sup: f64,
    ) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::InvalidMultiplier(format!("t_max must be positive, got {t_max}")));
        }
        if !(declared_sup.is_finite() && declared_sup >= 0.0) {
            return Err(Error::InvalidMultiplier(format!("declared sup must be finite, got {declared_sup}")));
        }
        Ok(Self {
            name: name.into(),
            sampler,
            t_max,
            grid_size,
            declared_sup,
            breaks: Vec::new(),
            analytic: None,
        })
    }

    /// Known discontinuities; they become panel boundaries.
    pub fn with_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        self
    }

    /// Closed-form symbol of the untruncated `M`, when one is known.
    pub fn with_analytic_symbol(mut self, symbol: SymbolFn) -> Self {
        self.analytic = Some(symbol);
        self
    }

    /// `M(t) = e^{-t}`, symbol `-lambda / (lambda + 1)`.
    pub fn exp_decay(t_max: f64, grid_size: usize) -> Result<Self> {
        Ok(Self::new("exp", Arc::new(|t: f64| C64::new((-t).exp(), 0.0)), t_max, grid_size, 1.0)?
            .with_analytic_symbol(Arc::new(|l: f64| C64::new(-l / (l + 1.0), 0.0))))
    }

    /// `M = 0`.
    pub fn zero(t_max: f64, grid_size: usize) -> Result<Self> {
        Ok(Self::new("zero", Arc::new(|_| C64::new(0.0, 0.0)), t_max, grid_size, 0.0)?
            .with_analytic_symbol(Arc::new(|_| C64::new(0.0, 0.0))))
    }

    /// Constant `M = c` on `(0, inf)`, symbol `-c` for `lambda > 0`.
    pub fn constant(c: C64, t_max: f64, grid_size: usize) -> Result<Self> {
        Ok(Self::new("constant", Arc::new(move |_| c), t_max, grid_size, c.norm())?
            .with_analytic_symbol(Arc::new(move |l| if l > 0.0 { -c } else { C64::new(0.0, 0.0) })))
    }

    /// A step function seen through its sampler. Requires `t_max` past the
    /// last breakpoint; the closed form serves as analytic symbol.
    pub fn from_step(step: &StepMultiplier, t_max: f64, grid_size: usize) -> Result<Self> {
        let last = *step.breakpoints().last().expect("at least one breakpoint");
        if t_max < last {
            return Err(Error::InvalidMultiplier(format!("t_max {t_max} precedes last breakpoint {last}")));
        }
        let sampled = step.clone();
        let closed = step.clone();
        Ok(Self::new("step", Arc::new(move |t| sampled.eval(t)), t_max, grid_size, step.sup_norm())?
            .with_breaks(step.breakpoints().to_vec())
            .with_analytic_symbol(Arc::new(move |l| step_symbol_value(&closed, l))))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn declared_sup(&self) -> f64 {
        self.declared_sup
    }

    pub fn sample(&self, t: f64) -> C64 {
        (self.sampler)(t)
    }

    pub fn analytic_symbol(&self) -> Option<MultiplierSymbol> {
        self.analytic
            .as_ref()
            .map(|f| MultiplierSymbol::analytic(Arc::clone(f), self.declared_sup))
    }
}

/// Either kind of multiplier source.
#[derive(Debug, Clone)]
pub enum Multiplier {
    Step(StepMultiplier),
    Sampled(SampledMultiplier),
}

impl Multiplier {
    pub fn name(&self) -> String {
        match self {
            Multiplier::Step(m) => format!("step({} pieces)", m.pieces()),
            Multiplier::Sampled(m) => m.name().to_string(),
        }
    }

    /// Closed form for steps, quadrature for samplers.
    pub fn symbol(&self) -> Result<MultiplierSymbol> {
        match self {
            Multiplier::Step(m) => Ok(symbol_of_step(m)),
            Multiplier::Sampled(m) => symbol_of_sampled(m),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Multiplier::Step(m) => m.sup_norm(),
            Multiplier::Sampled(m) => m.declared_sup(),
        }
    }

    /// Real-valuedness, checked on the pieces or on a sampling grid.
    pub fn is_real(&self) -> bool {
        match self {
            Multiplier::Step(m) => m.is_real(),
            Multiplier::Sampled(m) => (0..256).all(|i| m.sample((i as f64 + 0.5) / 256.0 * m.t_max()).im == 0.0),
        }
    }
}

/// `M(t) = -t^{-i gamma} / Gamma(1 - i gamma)`, whose symbol is
/// `lambda^{i gamma}`: indeed `int_0^inf t^{-i gamma} e^{-t lambda} dt =
/// Gamma(1 - i gamma) lambda^{i gamma - 1}`.
pub fn imaginary_power_preset(gamma: f64) -> Result<SampledMultiplier> {
    imaginary_power(gamma, IMAGINARY_POWER_T_MAX, IMAGINARY_POWER_GRID)
}

pub fn imaginary_power(gamma: f64, t_max: f64, grid_size: usize) -> Result<SampledMultiplier> {
    if !gamma.is_finite() || gamma.abs() > MAX_IMAGINARY_ORDER {
        return Err(Error::InvalidMultiplier(format!("imaginary order must lie in [-10, 10], got {gamma}")));
    }
    let norm = gamma_complex(C64::new(1.0, -gamma));
    let scale = -1.0 / norm;
    let sup = if gamma == 0.0 { 1.0 } else { ((PI * gamma).sinh() / (PI * gamma)).sqrt() };
    // the closed-form modulus is used for the declared bound; the sampler's
    // exact modulus is 1/|Gamma|, equal up to roundoff
    let sup = sup.max(scale.norm());
    let sampler: Sampler = Arc::new(move |t: f64| scale * C64::new(0.0, -gamma * t.ln()).exp());
    let symbol: SymbolFn = Arc::new(move |l: f64| {
        if l > 0.0 {
            C64::new(0.0, gamma * l.ln()).exp()
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(SampledMultiplier::new(format!("imaginary_power({gamma})"), sampler, t_max, grid_size, sup)?
        .with_analytic_symbol(symbol))
}

/// `n` equal pieces on `[0, t_max]`, each valued at its midpoint.
pub fn approximate_by_steps(m: &SampledMultiplier, n: usize) -> Result<StepMultiplier> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one piece".into()));
    }
    let h = m.t_max / n as f64;
    let breakpoints: Vec<f64> = (0..=n).map(|i| if i == n { m.t_max } else { i as f64 * h }).collect();
    let values = (0..n).map(|i| m.sample((i as f64 + 0.5) * h)).collect();
    StepMultiplier::new(breakpoints, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    StepClosedForm,
    Quadrature,
    Analytic,
}

/// Value of a symbol together with a bound on its deviation from the exact
/// symbol of the source multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolValue {
    pub value: C64,
    pub error: f64,
}

#[derive(Clone)]
enum SymbolKind {
    Step(StepMultiplier),
    Quadrature(Arc<QuadraturePlan>),
    Analytic(SymbolFn),
}

/// The symbol `m(lambda)` as an evaluator; only ever evaluated at
/// eigenvalues.
#[derive(Clone)]
pub struct MultiplierSymbol {
    kind: SymbolKind,
    source_sup: f64,
}

impl fmt::Debug for MultiplierSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiplierSymbol")
            .field("provenance", &self.provenance())
            .field("source_sup", &self.source_sup)
            .finish()
    }
}

impl MultiplierSymbol {
    /// Wraps a closed-form symbol; `m(0)` is forced to zero.
    pub fn analytic(f: SymbolFn, source_sup: f64) -> Self {
        Self { kind: SymbolKind::Analytic(f), source_sup }
    }

    pub fn provenance(&self) -> Provenance {
        match self.kind {
            SymbolKind::Step(_) => Provenance::StepClosedForm,
            SymbolKind::Quadrature(_) => Provenance::Quadrature,
            SymbolKind::Analytic(_) => Provenance::Analytic,
        }
    }

    /// `||M||_inf` of the multiplier this symbol came from.
    pub fn source_sup(&self) -> f64 {
        self.source_sup
    }

    pub fn eval(&self, lambda: f64) -> SymbolValue {
        if lambda <= 0.0 {
            return SymbolValue { value: C64::new(0.0, 0.0), error: 0.0 };
        }
        match &self.kind {
            SymbolKind::Step(m) => SymbolValue { value: step_symbol_value(m, lambda), error: 0.0 },
            SymbolKind::Quadrature(plan) => plan.eval(lambda),
            SymbolKind::Analytic(f) => SymbolValue { value: f(lambda), error: 0.0 },
        }
    }

    pub fn value(&self, lambda: f64) -> C64 {
        self.eval(lambda).value
    }

    pub fn at_eigenvalues(&self, dec: &SpectralDecomposition) -> Vec<SymbolValue> {
        dec.eigenvalues().iter().map(|&l| self.eval(l)).collect()
    }

    /// Largest reported error over the eigenvalues of `dec`.
    pub fn max_error(&self, dec: &SpectralDecomposition) -> f64 {
        self.at_eigenvalues(dec).iter().map(|v| v.error).fold(0.0, f64::max)
    }

    /// Fails with [`Error::InsufficientGrid`] if any reported error at the
    /// given points exceeds `tol`.
    pub fn certify(&self, lambdas: &[f64], tol: f64) -> Result<()> {
        let bound = lambdas.iter().map(|&l| self.eval(l).error).fold(0.0, f64::max);
        if bound > tol {
            Err(Error::InsufficientGrid { bound, requested: tol })
        } else {
            Ok(())
        }
    }
}

fn step_symbol_value(m: &StepMultiplier, lambda: f64) -> C64 {
    if lambda <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let t = m.breakpoints();
    m.values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * ((-lambda * t[i]).exp() * (-lambda * (t[i + 1] - t[i])).exp_m1()))
        .sum()
}

/// `m(lambda) = sum_i M_i (e^{-lambda t_{i+1}} - e^{-lambda t_i})`, exact.
pub fn symbol_of_step(m: &StepMultiplier) -> MultiplierSymbol {
    MultiplierSymbol { kind: SymbolKind::Step(m.clone()), source_sup: m.sup_norm() }
}

/// Composite quadrature for `-lambda int_0^{t_max} M(t) e^{-t lambda} dt`.
///
/// Panels are geometrically graded from `HEAD_RATIO * t_max` to `t_max`, so
/// samplers oscillating in `log t` (imaginary powers) are resolved near zero,
/// with declared discontinuities inserted as panel boundaries. Each panel is
/// integrated by 10-point Gauss-Legendre on the whole panel and on its two
/// halves; the halves are reported and their difference from the whole panel
/// is the error estimate. The head `[0, t_min]` and the tail beyond `t_max`
/// are charged analytically.
pub fn symbol_of_sampled(m: &SampledMultiplier) -> Result<MultiplierSymbol> {
    if m.grid_size < 2 {
        return Err(Error::InvalidMultiplier(format!("grid size must be >= 2, got {}", m.grid_size)));
    }
    let plan = QuadraturePlan::build(m)?;
    Ok(MultiplierSymbol { kind: SymbolKind::Quadrature(Arc::new(plan)), source_sup: m.declared_sup })
}

struct QuadraturePlan {
    t_min: f64,
    t_max: f64,
    sup: f64,
    /// (node, weight * M(node)) over all coarse panels.
    coarse: Vec<(f64, C64)>,
    /// Same on the halved panels.
    fine: Vec<(f64, C64)>,
    /// Panel index ranges into `coarse` / `fine`.
    panels: usize,
}

impl QuadraturePlan {
    fn build(m: &SampledMultiplier) -> Result<Self> {
        let t_max = m.t_max;
        let t_min = HEAD_RATIO * t_max;
        let ratio = (t_max / t_min).ln() / m.grid_size as f64;
        let mut edges: Vec<f64> = (0..=m.grid_size)
            .map(|j| if j == m.grid_size { t_max } else { t_min * (ratio * j as f64).exp() })
            .collect();
        edges.insert(0, 0.0);
        edges.extend(m.breaks.iter().copied().filter(|&b| b > 0.0 && b < t_max));
        edges.sort_by(f64::total_cmp);
        edges.dedup();

        let (x, w) = gauss_legendre(PANEL_ORDER);
        let bound = m.declared_sup * (1.0 + 1e-12) + 1e-300;
        let sample = |t: f64| -> Result<C64> {
            let v = m.sample(t);
            if !(v.re.is_finite() && v.im.is_finite()) || v.norm() > bound {
                return Err(Error::InvalidMultiplier(format!(
                    "sampler value {v} at t = {t} exceeds declared sup {}",
                    m.declared_sup
                )));
            }
            Ok(v)
        };
        let mut coarse = Vec::with_capacity(edges.len() * PANEL_ORDER);
        let mut fine = Vec::with_capacity(2 * edges.len() * PANEL_ORDER);
        let rule = |a: f64, b: f64, out: &mut Vec<(f64, C64)>| -> Result<()> {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (xi, wi) in x.iter().zip(&w) {
                let t = mid + half * xi;
                out.push((t, sample(t)? * (wi * half)));
            }
            Ok(())
        };
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let c = 0.5 * (a + b);
            rule(a, b, &mut coarse)?;
            rule(a, c, &mut fine)?;
            rule(c, b, &mut fine)?;
        }
        Ok(Self { t_min, t_max, sup: m.declared_sup, coarse, fine, panels: edges.len() - 1 })
    }

    fn eval(&self, lambda: f64) -> SymbolValue {
        let mut fine_total = C64::new(0.0, 0.0);
        let mut abs_total = 0.0;
        let mut estimate = 0.0;
        for p in 0..self.panels {
            let coarse: C64 = self.coarse[p * PANEL_ORDER..(p + 1) * PANEL_ORDER]
                .iter()
                .map(|(t, wm)| wm * (-lambda * t).exp())
                .sum();
            let mut fine = C64::new(0.0, 0.0);
            for (t, wm) in &self.fine[2 * p * PANEL_ORDER..2 * (p + 1) * PANEL_ORDER] {
                let term = wm * (-lambda * t).exp();
                abs_total += term.norm();
                fine += term;
            }
            estimate += (coarse - fine).norm();
            fine_total += fine;
        }
        let value = -lambda * fine_total;
        let error = lambda * (estimate + ROUNDOFF_FACTOR * abs_total)
            + 2.0 * lambda * self.sup * self.t_min
            + self.sup * (-lambda * self.t_max).exp();
        SymbolValue { value, error }
    }
}

/// `T_m f = sum_k m(lambda_k) <f, u_k> u_k`.
pub fn apply_tm(dec: &SpectralDecomposition, m: &MultiplierSymbol, f: &Field) -> Result<Field> {
    let values: Vec<C64> = m.at_eigenvalues(dec).iter().map(|v| v.value).collect();
    dec.apply_values(&values, f)
}

/// Matrix of `T_m` in the standard basis.
pub fn tm_matrix(dec: &SpectralDecomposition, m: &MultiplierSymbol) -> DMatrix<C64> {
    let values: Vec<C64> = m.at_eigenvalues(dec).iter().map(|v| v.value).collect();
    dec.operator_from_values(&values)
}

/// `sum_i M_i (T^{t_{i+1}} f - T^{t_i} f)` through heat kernels.
pub fn telescoping_tm(a: &ReversibleGenerator, m: &StepMultiplier, f: &Field) -> Result<Field> {
    telescoping_tm_with(&decompose(a)?, m, f)
}

pub fn telescoping_tm_with(dec: &SpectralDecomposition, m: &StepMultiplier, f: &Field) -> Result<Field> {
    let t = m.breakpoints();
    let mut heat_f = Vec::with_capacity(t.len());
    for &ti in t {
        heat_f.push(dec.heat_kernel(ti)?.apply(f)?);
    }
    let mut acc = Field::zeros(dec.space());
    for (i, v) in m.values().iter().enumerate() {
        acc = acc.add(&heat_f[i + 1].sub(&heat_f[i])?.scale(*v))?;
    }
    Ok(acc)
}

/// Error curve of step approximations against a reference symbol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepConvergenceReport {
    pub multiplier: String,
    pub reference: Provenance,
    pub pieces: Vec<usize>,
    pub errors: Vec<f64>,
    pub f_norm: f64,
    /// Absolute tolerance on the last error: `rel_tol * ||f||_2`.
    pub tol: f64,
    /// Largest reported reference-symbol error at the eigenvalues.
    pub reference_error: f64,
    pub monotone: bool,
    pub converged: bool,
    pub pass: bool,
}

/// Allowed growth between consecutive errors before the curve counts as
/// increasing.
pub const JITTER: f64 = 0.10;

/// `e_n = ||T_{M^n} f - T_m f||_2` with `M^n = approximate_by_steps(M, n)`.
/// The reference is the closed-form symbol when the multiplier carries one,
/// the quadrature symbol otherwise.
pub fn step_convergence_check(
    dec: &SpectralDecomposition,
    m: &SampledMultiplier,
    f: &Field,
    pieces: &[usize],
    rel_tol: f64,
) -> Result<StepConvergenceReport> {
    let reference = match m.analytic_symbol() {
        Some(s) => s,
        None => symbol_of_sampled(m)?,
    };
    let reference_error = reference.max_error(dec);
    let target = apply_tm(dec, &reference, f)?;
    let mut errors = Vec::with_capacity(pieces.len());
    for &n in pieces {
        let step = approximate_by_steps(m, n)?;
        let approx = apply_tm(dec, &symbol_of_step(&step), f)?;
        errors.push(lp_norm(&approx.sub(&target)?, 2.0)?);
    }
    let f_norm = lp_norm(f, 2.0)?;
    let tol = rel_tol * f_norm;
    let floor = reference_error * f_norm + 1e-14 * f_norm;
    let monotone = errors.windows(2).all(|w| w[1] <= (1.0 + JITTER) * w[0] + floor);
    let converged = errors.last().is_none_or(|&e| e < tol || e <= floor);
    Ok(StepConvergenceReport {
        multiplier: m.name.clone(),
        reference: reference.provenance(),
        pieces: pieces.to_vec(),
        errors,
        f_norm,
        tol,
        reference_error,
        monotone,
        converged,
        pass: monotone && converged,
    })
}
