//! `verify`: exact and Monte Carlo checks, one CSV row per configuration.

use std::fs;

use pcst::image::Tensor;
use pcst::rng::{derive_seed, Rng};
use pcst::verify::{
    mc_delta, mc_syr_scenarios, rho_report, toeplitz_identity_check, SyrConfig, SyrScenario,
};
use serde_json::{json, Map, Value};

use crate::args::{Check, VerifyArgs};
use crate::{CmdResult, Failure, Outcome};

const EXACT_TOL: f64 = 1e-9;
const LEMMA11_TOL: f64 = 1e-10;
const LEMMA11_DRAWS: u64 = 1000;
const SE_LIMIT: f64 = 3.0;
const VAR_REL_LIMIT: f64 = 0.05;
const SKEW_LIMIT: f64 = 0.1;
const KURT_LIMIT: f64 = 0.2;
const DELTA_THETAS: [f64; 3] = [1.0, 2.0, 4.0];
/// Covariances injected in the dependent scenarios; both keep Var(w) feasible.
const TYPE_I_SIGMA_ZW: f64 = 40.0;
const TYPE_II_SIGMA_XW: f64 = -80.0;

struct Row {
    config: String,
    metric: &'static str,
    value: f64,
    limit: f64,
    passed: bool,
}

impl Row {
    /// Passes when `value <= limit`.
    fn at_most(config: String, metric: &'static str, value: f64, limit: f64) -> Row {
        Row {
            config,
            metric,
            value,
            limit,
            passed: value <= limit,
        }
    }

    /// Passes when `value >= limit`.
    fn at_least(config: String, metric: &'static str, value: f64, limit: f64) -> Row {
        Row {
            config,
            metric,
            value,
            limit,
            passed: value >= limit,
        }
    }
}

struct CheckResult {
    rows: Vec<Row>,
    extra: Map<String, Value>,
}

fn check_rho(max_n: usize) -> CheckResult {
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for n in 1..=max_n {
        let white = rho_report(n, 1.0);
        let full = rho_report(n, n as f64);
        let nf = n as f64;
        let closed = 0.25 * (nf + 1.0 / nf).powi(2);
        let errs = [
            ("theta=1", "|rho-1|", (white.rho_exact - 1.0).abs()),
            (
                "theta=n",
                "|rho-closed_form|",
                (full.rho_exact - closed).abs(),
            ),
            (
                "theta=n",
                "|exact-separable|",
                (full.rho_exact - full.rho_separable).abs(),
            ),
        ];
        for (label, metric, err) in errs {
            worst = worst.max(err);
            rows.push(Row::at_most(
                format!("n={n},{label}"),
                metric,
                err,
                EXACT_TOL,
            ));
        }
    }
    let mut extra = Map::new();
    extra.insert("max_error".into(), json!(worst));
    CheckResult { rows, extra }
}

fn check_bound(max_n: usize) -> CheckResult {
    let mut rows = Vec::new();
    let mut min_gap = f64::INFINITY;
    for n in 1..=max_n {
        for theta in 1..=max_n {
            let r = rho_report(n, theta as f64);
            min_gap = min_gap.min(r.equality_gap);
            rows.push(Row::at_least(
                format!("n={n},theta={theta}"),
                "rho_exact-rho_bound",
                r.equality_gap,
                -EXACT_TOL,
            ));
        }
    }
    let mut extra = Map::new();
    extra.insert("min_gap".into(), json!(min_gap));
    CheckResult { rows, extra }
}

fn check_lemma11(max_n: usize, seed: u64) -> CheckResult {
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for t in 0..LEMMA11_DRAWS {
        let mut rng = Rng::new(derive_seed(seed, "lemma11", t));
        let n = 1 + rng.below(max_n as u64) as usize;
        let values: Vec<f64> = (0..2 * n - 1).map(|_| rng.gaussian()).collect();
        let err = toeplitz_identity_check(n, |tau| values[(tau + n as i64 - 1) as usize]);
        worst = worst.max(err);
        rows.push(Row::at_most(
            format!("draw={t},n={n}"),
            "discrepancy",
            err,
            LEMMA11_TOL,
        ));
    }
    let mut extra = Map::new();
    extra.insert("draws".into(), json!(LEMMA11_DRAWS));
    extra.insert("max_discrepancy".into(), json!(worst));
    CheckResult { rows, extra }
}

fn check_delta(n: usize, sigma: f64, trials: usize, seed: u64) -> CmdResult<CheckResult> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (j, &theta) in DELTA_THETAS.iter().enumerate() {
        let zero = Tensor::zeros(vec![n, n]);
        let r = mc_delta(
            n,
            theta,
            sigma,
            &zero,
            trials,
            derive_seed(seed, "delta-zero", j as u64),
        )?;
        let cfg = format!("n={n},theta={theta},clean_diff=0");
        rows.push(Row::at_most(
            cfg.clone(),
            "|bias-2sigma^2|/se",
            r.bias_z().abs(),
            SE_LIMIT,
        ));
        rows.push(Row::at_most(
            cfg,
            "|var/bound-1|",
            r.var_rel_error().abs(),
            VAR_REL_LIMIT,
        ));
        reports.push(r);

        let mut rng = Rng::new(derive_seed(seed, "delta-clean", j as u64));
        let diff = Tensor::new(
            vec![n, n],
            (0..n * n)
                .map(|_| (rng.gaussian() * sigma) as f32)
                .collect(),
        )?;
        let r = mc_delta(
            n,
            theta,
            sigma,
            &diff,
            trials,
            derive_seed(seed, "delta-random", j as u64),
        )?;
        rows.push(Row::at_least(
            format!("n={n},theta={theta},clean_diff=random"),
            "var+3se-bound",
            r.var_est + SE_LIMIT * r.var_se - r.var_bound,
            0.0,
        ));
        reports.push(r);
    }
    let mut extra = Map::new();
    extra.insert("reports".into(), json!(reports));
    Ok(CheckResult { rows, extra })
}

fn check_syr(a: &VerifyArgs) -> CmdResult<CheckResult> {
    let scenarios = [
        (SyrScenario::Independent, a.pairs),
        (
            SyrScenario::TypeI {
                sigma_zw: TYPE_I_SIGMA_ZW,
            },
            a.dependent_pairs,
        ),
        (
            SyrScenario::TypeII {
                sigma_xw: TYPE_II_SIGMA_XW,
            },
            a.dependent_pairs,
        ),
    ];
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (j, (scenario, pairs)) in scenarios.into_iter().enumerate() {
        let cfg = SyrConfig::new(a.side, a.sigma, pairs);
        let r = mc_syr_scenarios(scenario, &cfg, derive_seed(a.seed, "syr", j as u64))?;
        let label = format!("{},side={},pairs={pairs}", scenario_name(scenario), a.side);
        rows.push(Row::at_most(
            label.clone(),
            "|mean-expected|/se",
            ((r.mean - r.expected_finite) / r.se_mean).abs(),
            SE_LIMIT,
        ));
        if scenario == SyrScenario::Independent {
            rows.push(Row::at_most(
                label.clone(),
                "|skewness|",
                r.skewness.abs(),
                SKEW_LIMIT,
            ));
            rows.push(Row::at_most(
                label,
                "|excess_kurtosis|",
                r.excess_kurtosis.abs(),
                KURT_LIMIT,
            ));
        }
        reports.push(r);
    }
    let mut extra = Map::new();
    extra.insert("reports".into(), json!(reports));
    Ok(CheckResult { rows, extra })
}

fn scenario_name(s: SyrScenario) -> &'static str {
    match s {
        SyrScenario::Independent => "independent",
        SyrScenario::TypeI { .. } => "type_i",
        SyrScenario::TypeII { .. } => "type_ii",
    }
}

fn check_name(c: Check) -> &'static str {
    match c {
        Check::Rho => "rho",
        Check::Bound => "bound",
        Check::Lemma11 => "lemma11",
        Check::Delta => "delta",
        Check::Syr => "syr",
        Check::All => "all",
    }
}

fn run_check(c: Check, a: &VerifyArgs) -> CmdResult<CheckResult> {
    Ok(match c {
        Check::Rho => check_rho(a.n.unwrap_or(32)),
        Check::Bound => check_bound(a.n.unwrap_or(16)),
        Check::Lemma11 => check_lemma11(a.n.unwrap_or(32), a.seed),
        Check::Delta => check_delta(a.n.unwrap_or(8), a.sigma, a.trials, a.seed)?,
        Check::Syr => check_syr(a)?,
        Check::All => unreachable!("expanded by the caller"),
    })
}

pub fn verify(a: &VerifyArgs) -> CmdResult<Outcome> {
    if a.n == Some(0) {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let checks = match a.check {
        Check::All => vec![
            Check::Rho,
            Check::Bound,
            Check::Lemma11,
            Check::Delta,
            Check::Syr,
        ],
        c => vec![c],
    };
    let mut csv = String::from("check,config,metric,value,limit,passed\n");
    let mut summaries = Map::new();
    let mut all_passed = true;
    for c in checks {
        let result = run_check(c, a)?;
        let failures = result.rows.iter().filter(|r| !r.passed).count();
        all_passed &= failures == 0;
        for r in &result.rows {
            csv.push_str(&format!(
                "{},\"{}\",{},{:e},{:e},{}\n",
                check_name(c),
                r.config,
                r.metric,
                r.value,
                r.limit,
                r.passed
            ));
        }
        let mut s = Map::new();
        s.insert("passed".into(), json!(failures == 0));
        s.insert("configs".into(), json!(result.rows.len()));
        s.insert("failures".into(), json!(failures));
        if let Some(first) = result.rows.iter().find(|r| !r.passed) {
            s.insert(
                "first_failure".into(),
                json!({ "config": first.config, "metric": first.metric, "value": first.value, "limit": first.limit }),
            );
        }
        s.extend(result.extra);
        summaries.insert(check_name(c).into(), Value::Object(s));
    }
    if let Some(path) = &a.csv {
        fs::write(path, csv)?;
    }
    Ok(Outcome {
        summary: json!({
            "command": "verify",
            "check": check_name(a.check),
            "passed": all_passed,
            "checks": summaries,
        }),
        passed: all_passed,
    })
}
