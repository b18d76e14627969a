//! One runner per experiment kind. Each fills its tables row by row so a
//! failure part-way still leaves the rows computed so far.

use qsdlab_core::simulate::{estimate_survival_curve, simulate_conditioned};
use qsdlab_core::tails::{exp_rate, limit_law};
use qsdlab_core::{classify, ks_distance, Error, InitialMeasure, Kernel, QsdDensity, Regime, SimConfig, Tolerance};

use crate::config::{ExperimentKind, ExperimentSpec, Method};
use crate::output::{Cell, Table};

pub const LAW_HEADER: &[&str] = &["t", "ks_to_target", "target_gamma", "survival", "survival_err"];
pub const NU_HEADER: &[&str] = &["t", "nu_median", "predicted_gamma"];
pub const SURVIVAL_HEADER: &[&str] = &["t", "survival", "lower_bound_eighth_tail", "ratio_to_tail"];
pub const SCALED_HEADER: &[&str] = &["t", "c", "empirical_tail", "predicted_tail", "abs_err"];
pub const CLASSIFY_HEADER: &[&str] = &[
    "family",
    "params",
    "rho_inf",
    "rho_sup",
    "beta",
    "kappa",
    "regime",
    "gamma_or_law",
];

fn comment(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Invariance => "reproduces: QSD fixed point (conditioned law of a QSD start stays put)",
        ExperimentKind::Yaglom => "reproduces: Yaglom limit (compact start conditioned toward pi_0)",
        ExperimentKind::Subcritical => {
            "reproduces: subcritical attraction (exponential tail of rate rho < alpha toward pi_{alpha-rho})"
        }
        ExperimentKind::NuEvolution => "reproduces: concentration of the reweighted initial law nu_t",
        ExperimentKind::SurvivalCurve => {
            "reproduces: conditioned vs unconditioned contrast (survival against the initial tail at alpha*t)"
        }
        ExperimentKind::HeavyScaled => "reproduces: heavy-tail scaled limit law of the conditioned position",
        ExperimentKind::Classify => "reproduces: domain-of-attraction tables by exponential rate and tail index",
    }
}

pub struct Context {
    pub tolerance: Tolerance,
    /// Replaces every experiment's seed when set.
    pub seed: Option<u64>,
}

impl Context {
    fn kernel(&self, spec: &ExperimentSpec) -> Result<Kernel, Error> {
        let tol = match spec.tolerance {
            Some(rel) => Tolerance::with_rel(rel),
            None => self.tolerance,
        };
        Ok(Kernel::new(spec.alpha)?.with_tolerance(tol))
    }

    /// Simulation settings for grid point `i`; each point gets its own stream.
    fn sim(&self, spec: &ExperimentSpec, t: f64, i: usize) -> SimConfig {
        let mut cfg = spec.sim.clone();
        cfg.t = t;
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.stream_id = cfg.stream_id.wrapping_add(i as u64);
        cfg
    }
}

/// Tables of one experiment plus the error that stopped it, if any.
pub struct Outcome {
    pub tables: Vec<Table>,
    pub error: Option<Error>,
}

pub fn run(spec: &ExperimentSpec, ctx: &Context) -> Outcome {
    let name = &spec.name;
    let header = match spec.kind {
        ExperimentKind::Invariance | ExperimentKind::Yaglom | ExperimentKind::Subcritical => LAW_HEADER,
        ExperimentKind::NuEvolution => NU_HEADER,
        ExperimentKind::SurvivalCurve => SURVIVAL_HEADER,
        ExperimentKind::HeavyScaled => SCALED_HEADER,
        ExperimentKind::Classify => CLASSIFY_HEADER,
    };
    let note = comment(spec.kind);
    let mut main = Table::new(format!("{name}.csv"), note, header);
    let mut mc = Table::new(format!("{name}.mc.csv"), format!("{note}; Monte Carlo"), header);
    let result = match spec.kind {
        ExperimentKind::Invariance | ExperimentKind::Yaglom | ExperimentKind::Subcritical => {
            conditioned_law(spec, ctx, &mut main, &mut mc)
        }
        ExperimentKind::NuEvolution => nu_evolution(spec, ctx, &mut main),
        ExperimentKind::SurvivalCurve => survival_curve(spec, ctx, &mut main, &mut mc),
        ExperimentKind::HeavyScaled => heavy_scaled(spec, ctx, &mut main, &mut mc),
        ExperimentKind::Classify => classify_all(spec, &mut main),
    };
    let tables = match spec.method {
        Method::Mc => vec![Table { file: main.file, ..mc }],
        Method::Both => vec![main, mc],
        Method::Quadrature | Method::Prediction => vec![main],
    };
    Outcome {
        tables,
        error: result.err(),
    }
}

fn target_gamma(mu: &InitialMeasure, alpha: f64) -> Result<f64, Error> {
    match classify(mu, alpha)?.regime {
        Regime::AttractedTo { gamma } => Ok(gamma),
        other => Err(Error::Regime(format!("{mu} has no QSD target ({other})"))),
    }
}

fn conditioned_law(spec: &ExperimentSpec, ctx: &Context, main: &mut Table, mc: &mut Table) -> Result<(), Error> {
    let mu = &spec.mus[0];
    let gamma = target_gamma(mu, spec.alpha)?;
    let target = QsdDensity::new(gamma, spec.alpha)?;
    let kernel = ctx.kernel(spec)?;
    for (i, &t) in spec.t_grid.iter().enumerate() {
        if spec.method.quadrature() {
            let est = kernel.conditional_law(mu, t)?;
            let s = est.survival();
            main.push(vec![
                t.into(),
                ks_distance(&est, &target).into(),
                gamma.into(),
                s.value().into(),
                s.abs_error().into(),
            ]);
        }
        if spec.method.mc() {
            let sample = simulate_conditioned(mu, spec.alpha, &ctx.sim(spec, t, i))?;
            mc.push(vec![
                t.into(),
                ks_distance(&sample, &target).into(),
                gamma.into(),
                sample.survival.estimate.into(),
                sample.survival.half_width().into(),
            ]);
        }
    }
    Ok(())
}

fn nu_evolution(spec: &ExperimentSpec, ctx: &Context, main: &mut Table) -> Result<(), Error> {
    let mu = &spec.mus[0];
    let (rho_inf, _) = exp_rate(mu)?;
    let predicted = spec.alpha - rho_inf.min(spec.alpha);
    let kernel = ctx.kernel(spec)?;
    for &t in &spec.t_grid {
        main.push(vec![t.into(), kernel.nu_concentration(mu, t)?.into(), predicted.into()]);
    }
    Ok(())
}

fn survival_curve(spec: &ExperimentSpec, ctx: &Context, main: &mut Table, mc: &mut Table) -> Result<(), Error> {
    let mu = &spec.mus[0];
    let tail = |t: f64| mu.log_tail(spec.alpha * t).map(f64::exp);
    if spec.method.quadrature() {
        let kernel = ctx.kernel(spec)?;
        for &t in &spec.t_grid {
            let s = kernel.survival(mu, t)?.value();
            let q = tail(t)?;
            main.push(vec![t.into(), s.into(), (q / 8.0).into(), (s / q).into()]);
        }
    }
    if spec.method.mc() {
        let cfg = ctx.sim(spec, spec.t_grid[spec.t_grid.len() - 1], 0);
        let curve = estimate_survival_curve(mu, spec.alpha, &spec.t_grid, &cfg)?;
        for (&t, ci) in spec.t_grid.iter().zip(&curve) {
            let q = tail(t)?;
            mc.push(vec![
                t.into(),
                ci.estimate.into(),
                (q / 8.0).into(),
                (ci.estimate / q).into(),
            ]);
        }
    }
    Ok(())
}

fn heavy_scaled(spec: &ExperimentSpec, ctx: &Context, main: &mut Table, mc: &mut Table) -> Result<(), Error> {
    let mu = &spec.mus[0];
    let law = limit_law(mu, spec.alpha)?;
    let kernel = ctx.kernel(spec)?;
    let push = |table: &mut Table, t: f64, c: f64, empirical: f64| {
        let predicted = law.tail(c);
        table.push(vec![
            t.into(),
            c.into(),
            empirical.into(),
            predicted.into(),
            (empirical - predicted).abs().into(),
        ]);
    };
    for (i, &t) in spec.t_grid.iter().enumerate() {
        match spec.method {
            Method::Prediction => {
                let ln_base = mu.log_tail(spec.alpha * t)?;
                for &c in &spec.c_grid {
                    let a = law.scaling.evaluate(t, c)?;
                    let ln_joint = qsdlab_core::tails::joint_tail_prediction(mu, t, a, spec.alpha)?.ln_probability;
                    push(main, t, c, (ln_joint - ln_base).exp().min(1.0));
                }
            }
            _ => {
                if spec.method.quadrature() {
                    let s = kernel.survival(mu, t)?;
                    for &c in &spec.c_grid {
                        let j = kernel.joint_tail(mu, t, law.scaling.evaluate(t, c)?)?;
                        push(main, t, c, (j.ln_value - s.ln_value).exp().min(1.0));
                    }
                }
                if spec.method.mc() {
                    let sample = simulate_conditioned(mu, spec.alpha, &ctx.sim(spec, t, i))?;
                    for &c in &spec.c_grid {
                        push(mc, t, c, sample.exceedance(law.scaling.evaluate(t, c)?));
                    }
                }
            }
        }
    }
    Ok(())
}

fn classify_all(spec: &ExperimentSpec, main: &mut Table) -> Result<(), Error> {
    for mu in &spec.mus {
        let (family, params) = (mu.family().into(), mu.params().into());
        match classify(mu, spec.alpha) {
            Ok(p) => main.push(vec![
                family,
                params,
                p.rho_inf.into(),
                p.rho_sup.into(),
                p.beta.into(),
                p.kappa.into(),
                p.regime.label().into(),
                p.regime.detail().into(),
            ]),
            Err(Error::ClassificationRefused { liminf, limsup, .. }) => main.push(vec![
                family,
                params,
                liminf.into(),
                limsup.into(),
                f64::NAN.into(),
                f64::NAN.into(),
                "Refused".into(),
                Cell::Text(String::new()),
            ]),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
