//! Fast invariant suite. Every check is deterministic, so the CSV it writes
//! is byte-stable across runs and thread counts.

use std::path::Path;

use qsdlab_core::kernel::first_passage_survival;
use qsdlab_core::simulate::simulate_conditioned;
use qsdlab_core::stats::FnCdf;
use qsdlab_core::{
    classify, dkw_band, ks_distance, Conditioning, InitialMeasure, Kernel, QsdDensity, Regime, SimConfig,
};

use crate::config::catalog;
use crate::error::CliResult;
use crate::output::{Cell, Table};

pub const SELFTEST_FILE: &str = "selftest.csv";
pub const HEADER: &[&str] = &["check", "value", "threshold", "pass"];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    pub fn pass(&self) -> bool {
        self.value <= self.threshold
    }
}

fn check(name: impl Into<String>, value: f64, threshold: f64) -> Check {
    Check {
        name: name.into(),
        value,
        threshold,
    }
}

fn max_of(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter()
        .fold(0.0, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

/// Runs every check; a numerical failure shows up as `value = inf`.
pub fn run_checks(seed: u64) -> Vec<Check> {
    let alpha = 1.0;
    let kernel = Kernel::new(alpha).expect("alpha = 1 is valid");
    let mut out = Vec::new();

    let residual = max_of([0.0, 0.25, 0.5, 0.75].into_iter().flat_map(|g| {
        let q = QsdDensity::new(g, alpha).expect("gamma below alpha");
        (1..=1000).map(move |i| q.eigen_residual(i as f64 * 0.02))
    }));
    out.push(check("eigen_relation_rel_residual", residual, 1e-8));

    let dirac = InitialMeasure::dirac(1.0).expect("valid");
    let gap = max_of([0.5, 1.0, 5.0].into_iter().map(|t| {
        kernel
            .survival(&dirac, t)
            .map(|s| (s.value() - first_passage_survival(1.0, t, alpha)).abs())
            .unwrap_or(f64::INFINITY)
    }));
    out.push(check("dirac_survival_vs_closed_form", gap, 1e-8));

    let expo = InitialMeasure::exponential(0.5).expect("valid");
    let routes = match (kernel.survival(&expo, 5.0), kernel.survival_via_h(&expo, 5.0)) {
        (Ok(a), Ok(b)) => (a.ln_value - b.ln_value).abs(),
        _ => f64::INFINITY,
    };
    out.push(check("survival_routes_log_gap", routes, 1e-7));

    for gamma in [0.0, 0.5] {
        let q = QsdDensity::new(gamma, alpha).expect("valid");
        let mu = InitialMeasure::Qsd(q);
        let (ks, surv) = match kernel.conditional_law(&mu, 1.0) {
            Ok(est) => {
                let exact = (-q.absorption_rate()).exp();
                (ks_distance(&est, &q), (est.survival().value() - exact).abs() / exact)
            }
            Err(_) => (f64::INFINITY, f64::INFINITY),
        };
        out.push(check(format!("qsd_fixed_point_ks_gamma_{gamma}"), ks, 1e-6));
        out.push(check(format!("qsd_survival_rel_err_gamma_{gamma}"), surv, 1e-6));
    }

    let e1 = FnCdf::analytic(|y: f64| -(-y).exp_m1());
    let e2 = FnCdf::analytic(|y: f64| -(-2.0 * y).exp_m1());
    out.push(check(
        "ks_exp1_exp2_minus_quarter",
        (ks_distance(&e1, &e2) - 0.25).abs(),
        1e-9,
    ));
    out.push(check(
        "dkw_1e6_99_minus_reference",
        (dkw_band(1_000_000, 0.99) - 1.628e-3).abs(),
        1e-6,
    ));

    let mismatches = [0.5, 1.0, 2.0]
        .into_iter()
        .flat_map(|a| catalog(a).into_iter().map(move |mu| (a, mu)))
        .filter(|(a, mu)| {
            let got = classify(mu, *a).map(|p| p.regime);
            match (mu, got) {
                (InitialMeasure::Weibull { shape, .. }, Ok(Regime::Unknown)) => !(0.5..1.0).contains(shape),
                (_, Ok(Regime::AttractedTo { gamma })) => {
                    let rho = qsdlab_core::tails::exp_rate(mu).map(|r| r.0).unwrap_or(f64::NAN);
                    gamma != a - rho.min(*a)
                }
                (_, Ok(Regime::HeavyScaled(_))) => !matches!(
                    mu,
                    InitialMeasure::Weibull { .. }
                        | InitialMeasure::Pareto { .. }
                        | InitialMeasure::HalfCauchy { .. }
                        | InitialMeasure::LogTail
                ),
                _ => true,
            }
        })
        .count();
    out.push(check("classification_mismatches", mismatches as f64, 0.0));

    let cfg = SimConfig::new(1.0, 200_000, Conditioning::Rejection).with_seed(seed);
    let mc = match simulate_conditioned(&dirac, alpha, &cfg) {
        Ok(s) => {
            let exact = first_passage_survival(1.0, 1.0, alpha);
            // distance outside the interval, 0 when covered
            (s.survival.lower - exact).max(exact - s.survival.upper).max(0.0)
        }
        Err(_) => f64::INFINITY,
    };
    out.push(check("mc_survival_ci_miss", mc, 0.0));

    out
}

/// Writes `selftest.csv` into `dir`; returns the checks.
pub fn run(dir: &Path, seed: u64) -> CliResult<Vec<Check>> {
    std::fs::create_dir_all(dir).map_err(crate::error::io_error(dir))?;
    let checks = run_checks(seed);
    let mut table = Table::new(SELFTEST_FILE, "invariant suite", HEADER);
    for c in &checks {
        table.push(vec![
            c.name.as_str().into(),
            c.value.into(),
            c.threshold.into(),
            Cell::Text(c.pass().to_string()),
        ]);
    }
    table.write(dir)?;
    Ok(checks)
}
