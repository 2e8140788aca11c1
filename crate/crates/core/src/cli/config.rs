//! JSON experiment configuration and its validation.
//!
//! Every randomized component takes an explicit seed; there are no seed
//! defaults. [`Experiment::build`] validates the whole config and constructs
//! every instance before any check runs.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dilation::{EvalMode, PathSpace, DEFAULT_ENUMERATION_BUDGET};
use crate::error::Error;
use crate::multiplier::{imaginary_power, Multiplier, SampledMultiplier, StepMultiplier, IMAGINARY_POWER_GRID, IMAGINARY_POWER_T_MAX};
use crate::semigroup::{random_reversible_generator, ReversibleGenerator};
use crate::space::{Field, WeightedSpace, C64};
use crate::spectral::{decompose, SpectralDecomposition};

use super::CliError;

pub const CONFIG_SCHEMA: &str = "semigroup-lab/config/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "config_schema")]
    pub schema: String,
    pub name: String,
    pub chain: ChainSpec,
    pub field: FieldSpec,
    #[serde(default)]
    pub multipliers: Vec<MultiplierSpec>,
    #[serde(default)]
    pub dilation: Option<DilationSpec>,
    #[serde(default)]
    pub p_grid: Vec<f64>,
    #[serde(default)]
    pub probes: Option<ProbeSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub checks: Vec<CheckSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn config_schema() -> String {
    CONFIG_SCHEMA.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainSpec {
    /// Complete graph with seeded conductances.
    Random { seed: u64, n: usize, conductance_scale: f64 },
    /// Pinned instance: point masses and generator rows.
    Explicit { weights: Vec<f64>, generator: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// Standard Gaussian entries (real and imaginary parts if `complex`).
    Random { seed: u64, #[serde(default)] complex: bool },
    /// Values as `[re, im]` pairs.
    Explicit { values: Vec<C64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MultiplierSpec {
    Step { name: String, breakpoints: Vec<f64>, values: Vec<C64> },
    Sampled {
        name: String,
        sampler: SamplerSpec,
        #[serde(default)]
        t_max: Option<f64>,
        #[serde(default)]
        grid: Option<usize>,
    },
}

impl MultiplierSpec {
    pub fn name(&self) -> &str {
        match self {
            Self::Step { name, .. } | Self::Sampled { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    /// `M(t) = e^{-t}`.
    ExpDecay,
    Zero,
    Constant { value: C64 },
    /// `M(t) = -t^{-i gamma} / Gamma(1 - i gamma)`, symbol `lambda^{i gamma}`.
    ImaginaryPower { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilationSpec {
    pub horizon: usize,
    pub epsilon: f64,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub mode: ModeSpec,
}

fn default_budget() -> u64 {
    DEFAULT_ENUMERATION_BUDGET
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSpec {
    #[default]
    Exact,
    MonteCarlo { seed: u64, samples: usize },
}

impl From<ModeSpec> for EvalMode {
    fn from(m: ModeSpec) -> Self {
        match m {
            ModeSpec::Exact => EvalMode::Exact,
            ModeSpec::MonteCarlo { seed, samples } => EvalMode::MonteCarlo { seed, samples },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub count: usize,
    pub ascent_steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Exact identities (Markov conditions, step formula, dilation).
    pub identity: f64,
    /// `e_n < convergence_rel * ||f||_2` at the finest approximation.
    pub convergence_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { identity: 1e-10, convergence_rel: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Report file name inside the output directory (`<name>.json` if unset).
    pub json: Option<String>,
    /// Table file name inside the output directory (`<name>.csv` if unset).
    pub csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    MarkovConditions {
        #[serde(default = "one")]
        t: f64,
    },
    /// Every step multiplier.
    StepIdentity,
    /// Every multiplier.
    L2Bound,
    DilationIdentity,
    TransformIdentity { multiplier: String },
    LpBound {
        #[serde(default)]
        multiplier: Option<String>,
    },
    BurkholderGundy { multiplier: String },
    StepConvergence { multiplier: String, pieces: Vec<usize> },
    DavisChain { multiplier: String },
    DavisFamily {
        seed: u64,
        chains: usize,
        fields: usize,
        states: usize,
        horizon: usize,
        epsilon: f64,
        conductance_scale: f64,
        #[serde(default)]
        doubling: bool,
    },
    Fatou { multiplier: String, pieces: Vec<usize>, p: f64, tol: f64 },
    ImaginaryPower { gammas: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl CheckSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::MarkovConditions { .. } => "markov_conditions",
            Self::StepIdentity => "step_identity",
            Self::L2Bound => "l2_bound",
            Self::DilationIdentity => "dilation_identity",
            Self::TransformIdentity { .. } => "transform_identity",
            Self::LpBound { .. } => "lp_bound",
            Self::BurkholderGundy { .. } => "burkholder_gundy",
            Self::StepConvergence { .. } => "step_convergence",
            Self::DavisChain { .. } => "davis_chain",
            Self::DavisFamily { .. } => "davis_family",
            Self::Fatou { .. } => "fatou",
            Self::ImaginaryPower { .. } => "imaginary_power",
        }
    }

    fn needs_dilation(&self) -> bool {
        matches!(
            self,
            Self::DilationIdentity | Self::TransformIdentity { .. } | Self::BurkholderGundy { .. } | Self::DavisChain { .. }
        )
    }
}

/// Validated config with every instance constructed.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub generator: ReversibleGenerator,
    pub decomposition: Arc<SpectralDecomposition>,
    pub field: Field,
    pub multipliers: BTreeMap<String, Multiplier>,
    pub path_space: Option<PathSpace>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn numeric(context: &str, e: Error) -> CliError {
    match e {
        Error::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
        _ => CliError::Config(format!("{context}: {e}")),
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    serde_json::from_str(text).map_err(|e| invalid(format!("parse error: {e}")))
}

impl Experiment {
    pub fn build(config: ExperimentConfig) -> Result<Self, CliError> {
        if config.schema != CONFIG_SCHEMA {
            return Err(invalid(format!("unsupported schema {:?}", config.schema)));
        }
        if config.name.is_empty() || config.name.contains(['/', '\\']) {
            return Err(invalid("name must be a non-empty file stem"));
        }
        positive("tolerances.identity", config.tolerances.identity)?;
        positive("tolerances.convergence_rel", config.tolerances.convergence_rel)?;
        for &p in &config.p_grid {
            if p.is_nan() || p < 1.0 {
                return Err(invalid(format!("p_grid entry {p} outside [1, inf]")));
            }
        }
        if config.checks.is_empty() {
            return Err(invalid("no checks requested"));
        }

        let generator = build_chain(&config.chain)?;
        let space = Arc::clone(generator.space());
        let decomposition = Arc::new(decompose(&generator).map_err(|e| numeric("chain", e))?);
        let field = build_field(&config.field, &space)?;

        let mut multipliers = BTreeMap::new();
        for spec in &config.multipliers {
            let built = build_multiplier(spec)?;
            if multipliers.insert(spec.name().to_string(), built).is_some() {
                return Err(invalid(format!("duplicate multiplier name {:?}", spec.name())));
            }
        }

        let path_space = match &config.dilation {
            Some(d) => {
                positive("dilation.epsilon", d.epsilon)?;
                if d.horizon == 0 {
                    return Err(invalid("dilation.horizon must be at least 1"));
                }
                if let ModeSpec::MonteCarlo { samples, .. } = d.mode {
                    if samples == 0 {
                        return Err(invalid("dilation.mode.samples must be positive"));
                    }
                }
                let ps = PathSpace::from_heat(Arc::clone(&decomposition), d.epsilon, d.horizon)
                    .map_err(|e| numeric("dilation", e))?
                    .with_budget(d.budget);
                Some(ps)
            }
            None => None,
        };

        let step_named = |name: &str| -> Result<(), CliError> {
            match multipliers.get(name) {
                Some(Multiplier::Step(_)) => Ok(()),
                Some(Multiplier::Sampled(_)) => Err(invalid(format!("multiplier {name:?} must be a step multiplier"))),
                None => Err(invalid(format!("unknown multiplier {name:?}"))),
            }
        };
        let sampled_named = |name: &str| -> Result<(), CliError> {
            match multipliers.get(name) {
                Some(Multiplier::Sampled(_)) => Ok(()),
                Some(Multiplier::Step(_)) => Err(invalid(format!("multiplier {name:?} must be a sampled multiplier"))),
                None => Err(invalid(format!("unknown multiplier {name:?}"))),
            }
        };
        let pieces_ok = |pieces: &[usize]| -> Result<(), CliError> {
            if pieces.is_empty() || pieces.contains(&0) {
                Err(invalid("pieces must be a non-empty list of positive integers"))
            } else {
                Ok(())
            }
        };

        for check in &config.checks {
            if check.needs_dilation() {
                match &path_space {
                    Some(ps) => ps.check_budget().map_err(|e| numeric("dilation", e))?,
                    None => return Err(invalid(format!("check {} needs a dilation block", check.kind()))),
                }
            }
            match check {
                CheckSpec::MarkovConditions { t } => {
                    if !(t.is_finite() && *t >= 0.0) {
                        return Err(invalid(format!("markov_conditions.t must be finite and nonnegative, got {t}")));
                    }
                }
                CheckSpec::StepIdentity | CheckSpec::L2Bound | CheckSpec::DilationIdentity => {}
                CheckSpec::TransformIdentity { multiplier } | CheckSpec::DavisChain { multiplier } => {
                    step_named(multiplier)?
                }
                CheckSpec::BurkholderGundy { multiplier } => {
                    step_named(multiplier)?;
                    if !config.p_grid.iter().any(|&p| p > 1.0 && p < f64::INFINITY) {
                        return Err(invalid("burkholder_gundy needs a p_grid entry in (1, inf)"));
                    }
                }
                CheckSpec::LpBound { multiplier } => {
                    if let Some(name) = multiplier {
                        if !multipliers.contains_key(name) {
                            return Err(invalid(format!("unknown multiplier {name:?}")));
                        }
                    } else if multipliers.is_empty() {
                        return Err(invalid("lp_bound needs at least one multiplier"));
                    }
                    if config.p_grid.is_empty() {
                        return Err(invalid("lp_bound needs a p_grid"));
                    }
                    let probes = config.probes.ok_or_else(|| invalid("lp_bound needs a probes block (with seed)"))?;
                    if probes.count == 0 {
                        return Err(invalid("probes.count must be positive"));
                    }
                }
                CheckSpec::StepConvergence { multiplier, pieces } => {
                    sampled_named(multiplier)?;
                    pieces_ok(pieces)?;
                }
                CheckSpec::Fatou { multiplier, pieces, p, tol } => {
                    sampled_named(multiplier)?;
                    pieces_ok(pieces)?;
                    positive("fatou.tol", *tol)?;
                    if p.is_nan() || *p < 1.0 {
                        return Err(invalid(format!("fatou.p must be in [1, inf], got {p}")));
                    }
                }
                CheckSpec::DavisFamily { chains, fields, states, horizon, epsilon, conductance_scale, doubling, .. } => {
                    if *chains == 0 || *fields == 0 || *states == 0 || *horizon == 0 {
                        return Err(invalid("davis_family sizes must be positive"));
                    }
                    positive("davis_family.epsilon", *epsilon)?;
                    if !(conductance_scale.is_finite() && *conductance_scale >= 0.0) {
                        return Err(invalid("davis_family.conductance_scale must be finite and nonnegative"));
                    }
                    let paths = (*states as u128).checked_pow(*horizon as u32 + 1).unwrap_or(u128::MAX);
                    if paths > DEFAULT_ENUMERATION_BUDGET as u128 {
                        return Err(CliError::Budget(
                            Error::BudgetExceeded { paths, budget: DEFAULT_ENUMERATION_BUDGET }.to_string(),
                        ));
                    }
                    let _ = doubling;
                }
                CheckSpec::ImaginaryPower { gammas } => {
                    if gammas.is_empty() {
                        return Err(invalid("imaginary_power needs at least one gamma"));
                    }
                    for &g in gammas {
                        imaginary_power(g, IMAGINARY_POWER_T_MAX, IMAGINARY_POWER_GRID)
                            .map_err(|e| numeric("imaginary_power", e))?;
                    }
                }
            }
        }

        Ok(Self { config, generator, decomposition, field, multipliers, path_space })
    }

    /// Values `M_i = M(i epsilon)` of a step multiplier on the dilation grid.
    pub fn transform_values(&self, name: &str) -> Vec<C64> {
        let ps = self.path_space.as_ref().expect("validated");
        let eps = self.config.dilation.as_ref().expect("validated").epsilon;
        match &self.multipliers[name] {
            Multiplier::Step(m) => (0..ps.horizon()).map(|i| m.eval(i as f64 * eps)).collect(),
            Multiplier::Sampled(_) => unreachable!("validated as step"),
        }
    }
}

fn build_chain(spec: &ChainSpec) -> Result<ReversibleGenerator, CliError> {
    match spec {
        ChainSpec::Random { seed, n, conductance_scale } => {
            if !(conductance_scale.is_finite() && *conductance_scale >= 0.0) {
                return Err(invalid("chain.conductance_scale must be finite and nonnegative"));
            }
            let (_, a) = random_reversible_generator(*seed, *n, *conductance_scale).map_err(|e| numeric("chain", e))?;
            Ok(a)
        }
        ChainSpec::Explicit { weights, generator } => {
            let space = WeightedSpace::new(weights.clone()).map_err(|e| numeric("chain.weights", e))?;
            let n = weights.len();
            if generator.len() != n || generator.iter().any(|r| r.len() != n) {
                return Err(invalid(format!("chain.generator must be {n} x {n}")));
            }
            let entries = DMatrix::from_fn(n, n, |i, j| generator[i][j]);
            ReversibleGenerator::new(&space, entries).map_err(|e| numeric("chain.generator", e))
        }
    }
}

fn build_field(spec: &FieldSpec, space: &Arc<WeightedSpace>) -> Result<Field, CliError> {
    let values = match spec {
        FieldSpec::Random { seed, complex } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..space.len())
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = if *complex { rng.sample(StandardNormal) } else { 0.0 };
                    C64::new(re, im)
                })
                .collect()
        }
        FieldSpec::Explicit { values } => values.clone(),
    };
    Field::new(space, values).map_err(|e| numeric("field", e))
}

fn build_multiplier(spec: &MultiplierSpec) -> Result<Multiplier, CliError> {
    let context = format!("multiplier {:?}", spec.name());
    match spec {
        MultiplierSpec::Step { name, breakpoints, values } => {
            if name.is_empty() {
                return Err(invalid("multiplier name must be non-empty"));
            }
            StepMultiplier::new(breakpoints.clone(), values.clone())
                .map(Multiplier::Step)
                .map_err(|e| numeric(&context, e))
        }
        MultiplierSpec::Sampled { name, sampler, t_max, grid } => {
            if name.is_empty() {
                return Err(invalid("multiplier name must be non-empty"));
            }
            let built = match sampler {
                SamplerSpec::ExpDecay => SampledMultiplier::exp_decay(t_max.unwrap_or(30.0), grid.unwrap_or(64)),
                SamplerSpec::Zero => SampledMultiplier::zero(t_max.unwrap_or(1.0), grid.unwrap_or(8)),
                SamplerSpec::Constant { value } => {
                    SampledMultiplier::constant(*value, t_max.unwrap_or(30.0), grid.unwrap_or(64))
                }
                SamplerSpec::ImaginaryPower { gamma } => imaginary_power(
                    *gamma,
                    t_max.unwrap_or(IMAGINARY_POWER_T_MAX),
                    grid.unwrap_or(IMAGINARY_POWER_GRID),
                ),
            };
            built.map(Multiplier::Sampled).map_err(|e| numeric(&context, e))
        }
    }
}
