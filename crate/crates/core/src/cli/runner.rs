use serde::Serialize;
use serde_json::{json, Value};

use crate::dilation::{
    dilation_identity_check, hat_expectation, reverse_martingale, reverse_martingale_report,
    transform_expectation_identity, EvalMode, PathFunctional,
};
use crate::inequalities::{
    bg_transform_check, davis_family, davis_llogl_check, fatou_limit_check, imaginary_power_check, opnorm_exact,
    multiplier_bound_check, FamilySpec, InequalityReport, Operator, ProbeBudget, ThresholdProvenance, CONTRACTION_SLACK,
};
use crate::multiplier::{
    apply_tm, imaginary_power_preset, step_convergence_check, symbol_of_step, telescoping_tm_with, Multiplier,
};
use crate::semigroup::verify_markov_conditions;
use crate::space::lp_norm;

use super::config::{CheckSpec, Experiment, ExperimentConfig};
use super::CliError;

pub const REPORT_SCHEMA: &str = "semigroup-lab/report/v1";

/// Build facts that affect floating-point output. No clocks or hostnames,
/// so identical configs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub arch: String,
    pub os: String,
    pub float: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            arch: std::env::consts::ARCH.into(),
            os: std::env::consts::OS.into(),
            float: "ieee754-binary64".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub kind: String,
    pub pass: bool,
    pub records: Vec<InequalityReport>,
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema: String,
    pub config: ExperimentConfig,
    pub environment: Environment,
    pub checks: Vec<CheckOutcome>,
    pub overall_pass: bool,
}

fn exact(name: impl Into<String>, defect: f64, bound: f64) -> InequalityReport {
    InequalityReport::new(name, defect, bound, Some(1.0), ThresholdProvenance::Proven)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn outcome(kind: &str, records: Vec<InequalityReport>, flags: bool, details: Value) -> CheckOutcome {
    let pass = flags && records.iter().all(|r| r.pass);
    CheckOutcome { kind: kind.into(), pass, records, details }
}

/// Runs the checks in config order.
pub fn run_experiment(ex: &Experiment) -> Result<RunReport, CliError> {
    let mut checks = Vec::with_capacity(ex.config.checks.len());
    for check in &ex.config.checks {
        checks.push(run_check(ex, check)?);
    }
    let overall_pass = checks.iter().all(|c| c.pass);
    Ok(RunReport {
        schema: REPORT_SCHEMA.into(),
        config: ex.config.clone(),
        environment: Environment::current(),
        checks,
        overall_pass,
    })
}

fn run_check(ex: &Experiment, check: &CheckSpec) -> Result<CheckOutcome, CliError> {
    let dec = ex.decomposition.as_ref();
    let f = &ex.field;
    let tol = ex.config.tolerances.identity;
    let kind = check.kind();
    let f_sup = lp_norm(f, f64::INFINITY)?;
    Ok(match check {
        CheckSpec::MarkovConditions { t } => {
            let mut kernels = vec![(format!("T^{t}"), dec.heat_kernel(*t)?)];
            if let Some(ps) = &ex.path_space {
                kernels.push(("Q".into(), ps.kernel().clone()));
            }
            let mut records = Vec::new();
            let mut details = Vec::new();
            for (label, q) in kernels {
                let r = verify_markov_conditions(&q, tol);
                for (what, v) in [
                    ("positivity", r.positivity),
                    ("conservation", r.conservation),
                    ("symmetry", r.symmetry),
                    ("contraction l1", r.contraction_l1),
                    ("contraction linf", r.contraction_linf),
                ] {
                    records.push(exact(format!("{label} {what}"), v, tol));
                }
                details.push(json!({ "kernel": label, "report": r }));
            }
            outcome(kind, records, true, Value::Array(details))
        }
        CheckSpec::StepIdentity => {
            let f_norm = lp_norm(f, 2.0)?;
            let mut records = Vec::new();
            for (name, m) in &ex.multipliers {
                if let Multiplier::Step(step) = m {
                    let tel = telescoping_tm_with(dec, step, f)?;
                    let app = apply_tm(dec, &symbol_of_step(step), f)?;
                    let diff = lp_norm(&tel.sub(&app)?, 2.0)?;
                    let scale = step.sup_norm() * f_norm;
                    let dev = if scale > 0.0 { diff / scale } else { diff };
                    records.push(exact(format!("step identity {name}"), dev, tol));
                }
            }
            outcome(kind, records, true, Value::Null)
        }
        CheckSpec::L2Bound => {
            let f_norm = lp_norm(f, 2.0)?;
            let mut records = Vec::new();
            for (name, m) in &ex.multipliers {
                let symbol = m.symbol()?;
                let bound = m.sup_norm() + symbol.max_error(dec);
                let tm_f = lp_norm(&apply_tm(dec, &symbol, f)?, 2.0)?;
                records.push(exact(format!("||T_m f||_2 {name}"), tm_f, bound * f_norm));
                let norm = opnorm_exact(&Operator::multiplier(dec, &symbol), 2.0)?.value;
                records.push(exact(format!("||T_m||_2,2 {name}"), norm, bound));
            }
            outcome(kind, records, true, Value::Null)
        }
        CheckSpec::DilationIdentity => {
            let ps = ex.path_space.as_ref().expect("validated");
            let scale = f_sup.max(1.0);
            let mut records = Vec::new();
            let mut reports = Vec::new();
            for k in 0..=ps.horizon() {
                let r = dilation_identity_check(ps, f, k, tol)?;
                records.push(exact(format!("hat E f_{k} vs Q^{}f", 2 * k), r.defect_kernel_power, tol * scale));
                if let Some(d) = r.defect_heat {
                    records.push(exact(format!("hat E f_{k} vs heat"), d, tol * scale));
                }
                reports.push(r);
            }
            let mr = reverse_martingale_report(ps, f)?;
            records.push(exact("Q g_k vs g_{k+1}", mr.matrix_defect, tol * scale));
            records.push(exact("reverse martingale property", mr.martingale_defect, tol * scale));
            records.push(exact("conditional expectation vs g_k(x_k)", mr.agreement, tol * scale));
            let mode: EvalMode = ex.config.dilation.as_ref().expect("validated").mode.into();
            let mut mc = Value::Null;
            if let EvalMode::MonteCarlo { .. } = mode {
                let family = reverse_martingale(ps, f)?;
                let top: PathFunctional = family.functional(ps.horizon());
                let exact_hat = hat_expectation(ps, &top, EvalMode::Exact)?.field;
                let est = hat_expectation(ps, &top, mode)?;
                let dev = est.field.max_abs_diff(&exact_hat)?;
                let se = est.std_errors.iter().flatten().copied().fold(0.0, f64::max);
                records.push(InequalityReport::report_only("monte carlo deviation vs 4 SE", dev, 4.0 * se));
                mc = json!({ "max_deviation": dev, "max_std_error": se });
            }
            outcome(kind, records, true, json!({ "levels": reports, "martingale": mr, "monte_carlo": mc }))
        }
        CheckSpec::TransformIdentity { multiplier } => {
            let ps = ex.path_space.as_ref().expect("validated");
            let m = ex.transform_values(multiplier);
            let r = transform_expectation_identity(ps, &m, f, tol)?;
            let m_sup = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let scale = (f_sup * m_sup).max(1.0);
            let mut records = vec![exact("hat E S vs kernel powers", r.defect_kernel_powers, tol * scale)];
            if let Some(d) = r.defect_telescoping {
                records.push(exact("hat E S vs telescoping heat sum", d, tol * scale));
            }
            outcome(kind, records, true, to_value(&r))
        }
        CheckSpec::LpBound { multiplier } => {
            let probes = ex.config.probes.expect("validated");
            let budget = ProbeBudget { probes: probes.count, ascent_steps: probes.ascent_steps, seed: probes.seed };
            let mut records = Vec::new();
            let mut fits = serde_json::Map::new();
            for (name, m) in &ex.multipliers {
                if multiplier.as_ref().is_some_and(|want| want != name) {
                    continue;
                }
                let out = multiplier_bound_check(dec, m, &ex.config.p_grid, budget)?;
                for (mut r, p) in out.reports.into_iter().zip(&ex.config.p_grid) {
                    r.name = format!("||T_m||_p,p p={p} {name}");
                    records.push(r);
                }
                fits.insert(name.clone(), to_value(&out.growth_fit));
            }
            outcome(kind, records, true, json!({ "growth_fit": fits }))
        }
        CheckSpec::BurkholderGundy { multiplier } => {
            let ps = ex.path_space.as_ref().expect("validated");
            let m = ex.transform_values(multiplier);
            let mut records = Vec::new();
            let mut details = Vec::new();
            for &p in ex.config.p_grid.iter().filter(|&&p| p > 1.0 && p < f64::INFINITY) {
                let out = bg_transform_check(ps, &m, f, p)?;
                records.push(out.report.clone());
                records.push(exact(
                    format!("conditional expectation contraction p={p}"),
                    out.hat_norm,
                    out.report.lhs + CONTRACTION_SLACK,
                ));
                details.push(json!({ "p": p, "hat_norm": out.hat_norm, "contraction_slack": out.contraction_slack }));
            }
            outcome(kind, records, true, Value::Array(details))
        }
        CheckSpec::StepConvergence { multiplier, pieces } => {
            let Multiplier::Sampled(m) = &ex.multipliers[multiplier] else { unreachable!("validated") };
            let r = step_convergence_check(dec, m, f, pieces, ex.config.tolerances.convergence_rel)?;
            let mut records: Vec<InequalityReport> = r
                .pieces
                .iter()
                .zip(&r.errors)
                .map(|(n, e)| InequalityReport::report_only(format!("e_{n} / ||f||_2"), *e, r.f_norm))
                .collect();
            let floor = r.reference_error * r.f_norm + 1e-14 * r.f_norm;
            let last = *r.errors.last().expect("validated non-empty");
            records.push(exact(format!("e_{} vs tolerance", pieces[pieces.len() - 1]), last, r.tol.max(floor)));
            outcome(kind, records, r.monotone, to_value(&r))
        }
        CheckSpec::DavisChain { multiplier } => {
            let ps = ex.path_space.as_ref().expect("validated");
            let m = ex.transform_values(multiplier);
            let chain = davis_llogl_check(ps, &m, f)?;
            let nonfinite = chain.ratios().iter().filter(|r| !r.is_finite()).count() as f64;
            let records = vec![
                chain.davis.clone(),
                chain.square_vs_maximal.clone(),
                chain.doob.clone(),
                chain.end_to_end.clone(),
                InequalityReport::new("non-finite ratios", nonfinite, 1.0, Some(0.0), ThresholdProvenance::Proven),
            ];
            outcome(kind, records, true, Value::Null)
        }
        CheckSpec::DavisFamily { seed, chains, fields, states, horizon, epsilon, conductance_scale, doubling } => {
            let spec = FamilySpec {
                seed: *seed,
                chains: *chains,
                fields: *fields,
                states: *states,
                horizon: *horizon,
                epsilon: *epsilon,
                conductance_scale: *conductance_scale,
            };
            let base = davis_family(&spec)?;
            let labels = ["davis", "square vs maximal", "doob llogl", "llogl end-to-end"];
            let mut records: Vec<InequalityReport> = labels
                .iter()
                .zip(base.max_ratios)
                .map(|(l, r)| InequalityReport::report_only(format!("family max {l}"), r, 1.0))
                .collect();
            let mut nonfinite = if base.all_finite { 0.0 } else { 1.0 };
            let mut doubled_summary = Value::Null;
            if *doubling {
                let doubled = davis_family(&FamilySpec { chains: 2 * chains, ..spec })?;
                for ((l, a), b) in labels.iter().zip(base.max_ratios).zip(doubled.max_ratios) {
                    records.push(InequalityReport::report_only(format!("doubled / base max {l}"), b, a));
                }
                if !doubled.all_finite {
                    nonfinite = 1.0;
                }
                doubled_summary = to_value(&doubled);
            }
            records.push(InequalityReport::new(
                "non-finite ratios",
                nonfinite,
                1.0,
                Some(0.0),
                ThresholdProvenance::Proven,
            ));
            outcome(kind, records, true, json!({ "base": base, "doubled": doubled_summary }))
        }
        CheckSpec::Fatou { multiplier, pieces, p, tol } => {
            let Multiplier::Sampled(m) = &ex.multipliers[multiplier] else { unreachable!("validated") };
            let r = fatou_limit_check(dec, m, f, pieces, *p, *tol)?;
            let provenance = if *p == 2.0 { ThresholdProvenance::Proven } else { ThresholdProvenance::ReferenceConstant };
            let mut records: Vec<InequalityReport> = r
                .pieces
                .iter()
                .zip(r.norms.iter().zip(&r.bounds))
                .map(|(n, (v, b))| InequalityReport::new(format!("||T_{n} f||_p"), *v, *b, Some(1.0), provenance))
                .collect();
            records.push(exact("limit vs tail of approximations", r.limit_norm, r.tail_max + r.tol));
            outcome(kind, records, r.pass, to_value(&r))
        }
        CheckSpec::ImaginaryPower { gammas } => {
            let mut records = Vec::new();
            let mut details = Vec::new();
            for &g in gammas {
                let m = imaginary_power_preset(g)?;
                let r = imaginary_power_check(dec, &m, g)?;
                records.push(InequalityReport::new(
                    format!("symbol error beyond reported bound gamma={g}"),
                    r.worst_excess.max(0.0),
                    1.0,
                    Some(0.0),
                    ThresholdProvenance::Proven,
                ));
                records.push(exact(format!("||A^(i{g})||_2,2"), r.norm2, r.sup_norm + r.max_reported_error));
                details.push(to_value(&r));
            }
            outcome(kind, records, true, Value::Array(details))
        }
    })
}
