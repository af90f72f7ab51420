//! Scenario execution.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentConfig, Scenario};
use crate::experiment::plot::emit_plot_data;
use crate::experiment::records::{mean_and_se, Check, Summary, TrialTable};
use crate::gauss::{bhat_ggm, kl_ggm, renyi_divergence_ggm, SymMatrix};
use crate::ggm::{ggm_risk_experiment, risk_validity_experiment};
use crate::lattice::{kraft_sum_truncated, LatticeSpec};
use crate::linalg::Matrix;
use crate::regression::{log_normalizer_bound, regression_risk_experiment};
use crate::rng::stream;
use crate::subset::{
    projection_dominance_check, riemann_check, scaled_gaussian_design, split_data, verify_code3, ConditionalCode,
    SupportSet,
};

/// Result of one run before anything is written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: TrialTable,
    pub summary: Summary,
    /// `(file stem, x column, series)` for the optional plot files.
    pub plots: Vec<(&'static str, &'static str, Vec<&'static str>)>,
}

/// Executes the configured scenario.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let hash = config.hash();
    let mut extra = BTreeMap::new();
    let mut checks = Vec::new();
    let (table, plots) = match config.scenario {
        Scenario::KraftAudit => kraft_audit(config, &hash, &mut extra, &mut checks)?,
        Scenario::GgmRisk => ggm_risk(config, &hash, &mut checks)?,
        Scenario::RiskValidity => risk_validity(config, &hash, &mut checks)?,
        Scenario::SubsetCodeAudit => subset_code_audit(config, &hash, &mut checks)?,
        Scenario::RegressionRisk => regression_risk(config, &hash, &mut checks)?,
        Scenario::DivergenceTable => divergence_table(config, &hash, &mut checks)?,
    };
    let mut means = BTreeMap::new();
    let mut std_errors = BTreeMap::new();
    for &c in &table.columns {
        let (m, se) = mean_and_se(&table.column(c)?);
        means.insert(c.to_string(), m);
        std_errors.insert(c.to_string(), se);
    }
    let passed = checks.iter().all(|c| !c.hard || c.passed);
    let summary = Summary {
        scenario: config.scenario.name().to_string(),
        config_hash: hash,
        config: serde_json::to_value(config)?,
        trials: table.rows.len(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        means,
        std_errors,
        extra,
        checks,
        passed,
    };
    Ok(RunOutput { table, summary, plots })
}

/// Runs and writes `trials.csv`, `summary.json` and, when enabled,
/// `plotdata/*.tsv` under the configured output directory.
pub fn run_and_write(config: &ExperimentConfig) -> Result<Summary> {
    let out = run(config)?;
    std::fs::create_dir_all(&config.out_dir)?;
    out.table.save_csv(&config.out_dir.join("trials.csv"))?;
    out.summary.save_json(&config.out_dir.join("summary.json"))?;
    if config.plot {
        let dir = config.out_dir.join("plotdata");
        std::fs::create_dir_all(&dir)?;
        for (stem, x, series) in &out.plots {
            emit_plot_data(&out.table, x, series, &dir.join(format!("{stem}.tsv")))?;
        }
    }
    Ok(out.summary)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn all_rows(table: &TrialTable, column: &str) -> Result<(usize, usize)> {
    let v = table.column(column)?;
    Ok((v.iter().filter(|&&x| x == 1.0).count(), v.len()))
}

fn count_check(table: &TrialTable, column: &str, name: &str, hard: bool) -> Result<Check> {
    let (ok, total) = all_rows(table, column)?;
    Ok(Check { name: name.into(), hard, passed: ok == total, detail: format!("{ok}/{total}") })
}

/// `mean(a) ≤ mean(b) + 2·SE(a − b)`.
fn mean_le_check(table: &TrialTable, a: &str, b: &str, name: &str) -> Result<Check> {
    let va = table.column(a)?;
    let vb = table.column(b)?;
    let diff: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x - y).collect();
    let (md, se) = mean_and_se(&diff);
    let (ma, _) = mean_and_se(&va);
    let (mb, _) = mean_and_se(&vb);
    let se = if se.is_nan() { 0.0 } else { se };
    Ok(Check {
        name: name.into(),
        hard: false,
        passed: md <= 2.0 * se,
        detail: format!("mean {a} = {ma:.6}, mean {b} = {mb:.6}, 2·SE(diff) = {:.6}", 2.0 * se),
    })
}

type Plots = Vec<(&'static str, &'static str, Vec<&'static str>)>;

fn kraft_audit(
    config: &ExperimentConfig,
    hash: &str,
    extra: &mut BTreeMap<String, f64>,
    checks: &mut Vec<Check>,
) -> Result<(TrialTable, Plots)> {
    let vector = LatticeSpec::vector(1.0, config.p)?;
    let symmetric = LatticeSpec::symmetric(1.0, config.p)?;
    let mut table = TrialTable::new(
        hash.to_string(),
        vec!["k_max", "partial_sum", "tail_bound", "total", "holds", "sym_partial_sum", "sym_total", "sym_holds"],
    );
    for k in 0..=config.k_max {
        let v = kraft_sum_truncated(&vector, k);
        let s = kraft_sum_truncated(&symmetric, k);
        let limit = 1.0 + 1e-12;
        table.push(
            config.seed,
            k as u64,
            vec![
                k as f64,
                v.partial_sum,
                v.tail_bound,
                v.total(),
                flag(v.total() <= limit),
                s.partial_sum,
                s.total(),
                flag(s.total() <= limit),
            ],
        );
    }
    let last = kraft_sum_truncated(&vector, config.k_max);
    extra.insert("partial_sum".into(), last.partial_sum);
    extra.insert("total".into(), last.total());
    checks.push(count_check(&table, "holds", "kraft_vector", true)?);
    checks.push(count_check(&table, "sym_holds", "kraft_symmetric", true)?);
    Ok((table, vec![("kraft", "k_max", vec!["partial_sum", "total", "sym_total"])]))
}

fn ggm_risk(config: &ExperimentConfig, hash: &str, checks: &mut Vec<Check>) -> Result<(TrialTable, Plots)> {
    let theta_star = config.precision_matrix()?;
    let trials = ggm_risk_experiment(&theta_star, config.n, config.reps, config.seed)?;
    let mut table = TrialTable::new(
        hash.to_string(),
        vec![
            "loss",
            "redundancy",
            "redundancy_bound",
            "resolvability",
            "redundancy_at_resolvability_argmin",
            "chain_holds",
            "below_resolvability",
            "lambda",
            "iterations",
            "converged",
        ],
    );
    for t in &trials {
        table.push(
            config.seed,
            t.replicate,
            vec![
                t.loss,
                t.redundancy,
                t.redundancy_bound,
                t.resolvability,
                t.redundancy_at_resolvability_argmin,
                flag(t.redundancy <= t.redundancy_at_resolvability_argmin),
                flag(t.redundancy <= t.resolvability),
                t.lambda,
                t.iterations as f64,
                flag(t.converged),
            ],
        );
    }
    checks.push(mean_le_check(&table, "loss", "redundancy_bound", "mean_loss_within_redundancy_bound")?);
    checks.push(count_check(&table, "chain_holds", "redundancy_le_value_at_resolvability_argmin", false)?);
    let resolvability = table.column("resolvability")?[0];
    let (m, se) = mean_and_se(&table.column("redundancy_at_resolvability_argmin")?);
    let se = if se.is_nan() { 0.0 } else { se };
    checks.push(Check {
        name: "value_at_resolvability_argmin_unbiased".into(),
        hard: false,
        passed: (m - resolvability).abs() <= 2.0 * se,
        detail: format!("mean {m:.6} vs resolvability {resolvability:.6}, 2·SE = {:.6}", 2.0 * se),
    });
    let (below, total) = all_rows(&table, "below_resolvability")?;
    checks.push(Check {
        name: "redundancy_below_resolvability_per_trial".into(),
        hard: false,
        passed: below == total,
        detail: format!("{below}/{total} (holds in expectation, not per trial)"),
    });
    checks.push(count_check(&table, "converged", "solver_converged", false)?);
    Ok((table, vec![("risk", "replicate", vec!["loss", "redundancy_bound", "resolvability"])]))
}

fn risk_validity(config: &ExperimentConfig, hash: &str, checks: &mut Vec<Check>) -> Result<(TrialTable, Plots)> {
    let theta_star = config.precision_matrix()?;
    let trials = risk_validity_experiment(&theta_star, config.n, config.reps, config.seed, config.conservative)?;
    let mut table = TrialTable::new(hash.to_string(), vec!["lhs", "rhs", "holds", "holds_half_lambda"]);
    for t in &trials {
        table.push(config.seed, t.replicate, vec![t.lhs, t.rhs, flag(t.holds), flag(t.holds_half_lambda)]);
    }
    checks.push(count_check(&table, "holds", "risk_validity", true)?);
    let (half_ok, total) = all_rows(&table, "holds_half_lambda")?;
    checks.push(Check {
        name: "half_lambda_holds".into(),
        hard: false,
        passed: half_ok == total,
        detail: format!("{half_ok}/{total} with λ halved"),
    });
    Ok((table, vec![("risk_validity", "replicate", vec!["lhs", "rhs"])]))
}

struct AuditRow {
    values: Vec<f64>,
}

fn subset_audit_replicate(config: &ExperimentConfig, r: u64) -> Result<AuditRow> {
    let (n, p) = (config.n, config.p);
    let mut rng = stream(config.seed, r);
    let x = scaled_gaussian_design(n, p, &mut rng);
    let theta_star = &config.coefficients;
    let s_star = SupportSet::of_vector(theta_star);
    let mean = x.matvec(theta_star)?;
    let y: Vec<f64> = mean.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect();
    let split = split_data(&y, &x)?;
    let code = ConditionalCode::build(&split, theta_star, &s_star, config.delta, config.box_radius, config.k_max)?;

    let supports = SupportSet::all_up_to(p, config.k_max);
    let mut riemann_ok = true;
    let mut dominance_ok = true;
    for s in &supports {
        riemann_ok &= riemann_check(&split, s, theta_star, &s_star, config.delta, config.box_radius)?.holds;
        dominance_ok &= projection_dominance_check(&split, s, &s_star, theta_star)?.holds;
    }
    let s = &supports[rng.random_range(0..supports.len())];
    let mut theta = vec![0.0; p];
    for &j in s.indices() {
        theta[j] = rng.sample::<f64, _>(StandardNormal);
    }
    let code3 = verify_code3(&split, &theta, &code)?;
    let report = code.report();
    Ok(AuditRow {
        values: vec![
            report.ln_m,
            report.ln_m_bound,
            code.kraft_sum(),
            flag(code.kraft_sum() <= 1.0 + 1e-12),
            flag(riemann_ok),
            code3.lhs,
            code3.rhs,
            flag(code3.holds),
            s.len() as f64,
            flag(dominance_ok),
            report.capped_supports as f64,
        ],
    })
}

fn subset_code_audit(config: &ExperimentConfig, hash: &str, checks: &mut Vec<Check>) -> Result<(TrialTable, Plots)> {
    let rows: Vec<AuditRow> =
        (0..config.reps as u64).into_par_iter().map(|r| subset_audit_replicate(config, r)).collect::<Result<_>>()?;
    let mut table = TrialTable::new(
        hash.to_string(),
        vec![
            "ln_m",
            "ln_m_bound",
            "kraft_sum",
            "kraft_holds",
            "riemann_holds",
            "code3_lhs",
            "code3_rhs",
            "code3_holds",
            "theta_support_size",
            "projection_dominance",
            "capped_supports",
        ],
    );
    for (r, row) in rows.into_iter().enumerate() {
        table.push(config.seed, r as u64, row.values);
    }
    checks.push(count_check(&table, "kraft_holds", "kraft_conditional_code", true)?);
    checks.push(count_check(&table, "riemann_holds", "riemann_sum_below_integral", true)?);
    checks.push(count_check(&table, "code3_holds", "codelength_validity", true)?);
    checks.push(count_check(&table, "projection_dominance", "projection_dominance", false)?);
    let (m, se) = mean_and_se(&table.column("ln_m")?);
    let se = if se.is_nan() { 0.0 } else { se };
    let bound = log_normalizer_bound();
    checks.push(Check {
        name: "mean_log_normalizer_bound".into(),
        hard: false,
        passed: m <= bound + 2.0 * se,
        detail: format!("mean log M = {m:.6}, bound = {bound:.6}, 2·SE = {:.6}", 2.0 * se),
    });
    Ok((table, vec![("subset_code", "replicate", vec!["code3_lhs", "code3_rhs", "ln_m"])]))
}

fn regression_risk(config: &ExperimentConfig, hash: &str, checks: &mut Vec<Check>) -> Result<(TrialTable, Plots)> {
    let mut rng = stream(config.design_seed, u64::MAX);
    let x: Matrix<f64> = scaled_gaussian_design(config.n, config.p, &mut rng);
    let trials = regression_risk_experiment(&config.coefficients, &x, config.sigma, config.reps, config.seed)?;
    let mut table =
        TrialTable::new(hash.to_string(), vec!["loss", "redundancy", "bound", "selected_size", "rss"]);
    for t in &trials {
        table.push(config.seed, t.replicate, vec![t.loss, t.redundancy, t.bound, t.selected_size as f64, t.rss]);
    }
    checks.push(mean_le_check(&table, "loss", "bound", "mean_loss_within_bound")?);
    Ok((table, vec![("regression_risk", "replicate", vec!["loss", "bound"])]))
}

fn random_precision<R: Rng + ?Sized>(p: usize, rng: &mut R) -> SymMatrix<f64> {
    let a = Matrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let g = a.gram();
    SymMatrix::from_fn(p, |i, j| g[(i, j)] / p as f64 + if i == j { 0.5 } else { 0.0 })
}

fn divergence_table(config: &ExperimentConfig, hash: &str, checks: &mut Vec<Check>) -> Result<(TrialTable, Plots)> {
    let rows: Vec<Vec<f64>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(config.seed, r);
            let t1 = random_precision(config.p, &mut rng);
            let t2 = random_precision(config.p, &mut rng);
            let b = bhat_ggm(&t1, &t2);
            let k = kl_ggm(&t1, &t2);
            let r_half = renyi_divergence_ggm(&t1, &t2, 0.5)?;
            Ok::<_, Error>(vec![b, k, r_half, flag(k >= b - 1e-12 && b >= 0.0), flag((r_half - 2.0 * b).abs() <= 1e-9 * (1.0 + b))])
        })
        .collect::<Result<_>>()?;
    let mut table = TrialTable::new(hash.to_string(), vec!["bhattacharyya", "kl", "renyi_half", "ordered", "renyi_matches"]);
    for (r, v) in rows.into_iter().enumerate() {
        table.push(config.seed, r as u64, v);
    }
    checks.push(count_check(&table, "ordered", "kl_ge_bhattacharyya_ge_0", false)?);
    checks.push(count_check(&table, "renyi_matches", "renyi_half_is_twice_bhattacharyya", false)?);
    Ok((table, vec![("divergence", "replicate", vec!["bhattacharyya", "kl"])]))
}
