//! Spec-file experiment runner for the absorbed drifted Brownian motion.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod plot;
pub mod selftest;

use std::path::{Path, PathBuf};

use qsdlab_core::Tolerance;

use crate::config::{parse_spec, ExperimentSpec};
use crate::error::{io_error, CliError, CliResult};
use crate::experiments::Context;
use crate::output::{Manifest, ManifestEntry, Status};

pub use crate::error::CliError as Error;

pub const MANIFEST_FILE: &str = "manifest.txt";

const SCALE_NOTE: &str = "desk-scale analogues (alpha = 1, t <= 1e3) stand in for the illustration-scale \
sample path (drift -0.02, x0 = 2000, t = 1e5)";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
}

/// Runs `f` on a pool of `threads` workers (`None`: rayon's default).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn describe(spec: &ExperimentSpec, ctx: &Context) -> Vec<(String, String)> {
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
    let mut f = vec![
        ("experiment".to_string(), spec.kind.name().to_string()),
        ("method".into(), spec.method.name().into()),
        ("alpha".into(), spec.alpha.to_string()),
        (
            "mu".into(),
            spec.mus.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "),
        ),
    ];
    if !spec.t_grid.is_empty() {
        f.push(("t_grid".into(), join(&spec.t_grid)));
    }
    if !spec.c_grid.is_empty() {
        f.push(("c_grid".into(), join(&spec.c_grid)));
    }
    f.push((
        "tolerance".into(),
        spec.tolerance.unwrap_or(ctx.tolerance.rel).to_string(),
    ));
    if spec.method.mc() {
        let s = &spec.sim;
        f.push(("seed".into(), ctx.seed.unwrap_or(s.seed).to_string()));
        f.push(("stream_id".into(), s.stream_id.to_string()));
        f.push(("sim.n".into(), s.n_particles.to_string()));
        f.push(("sim.dt".into(), s.dt.to_string()));
        f.push((
            "sim.conditioning".into(),
            format!("{:?}", s.conditioning).to_lowercase(),
        ));
        f.push(("sim.replicas".into(), s.replicas.to_string()));
        f.push(("sim.bridge_correction".into(), s.bridge_correction.to_string()));
    }
    f
}

/// Parses and runs a spec file, writing CSVs and the manifest into
/// `opts.out`. Every experiment runs; the first failure is returned after
/// all of them have written what they could.
pub fn run_spec_file(path: &Path, opts: &RunOptions) -> CliResult<Manifest> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    run_spec_text(&text, &path.display().to_string(), opts)
}

pub fn run_spec_text(text: &str, origin: &str, opts: &RunOptions) -> CliResult<Manifest> {
    let spec = parse_spec(text, origin)?;
    if let Some(rel) = opts.tolerance {
        if !(rel > 0.0 && rel < 1.0) {
            return Err(CliError::Usage(format!("--tolerance must lie in (0, 1), got {rel}")));
        }
    }
    std::fs::create_dir_all(&opts.out).map_err(io_error(&opts.out))?;
    let ctx = Context {
        tolerance: opts.tolerance.map_or_else(Tolerance::default, Tolerance::with_rel),
        seed: opts.seed,
    };
    let mut manifest = Manifest {
        header: vec![
            ("spec".into(), origin.into()),
            ("qsdlab_core_version".into(), qsdlab_core::VERSION.into()),
            ("qsdlab_cli_version".into(), env!("CARGO_PKG_VERSION").into()),
            ("seed".into(), opts.seed.unwrap_or(spec.seed).to_string()),
            ("seed_overridden".into(), opts.seed.is_some().to_string()),
            ("tolerance_rel".into(), ctx.tolerance.rel.to_string()),
            ("tolerance_max_evals".into(), ctx.tolerance.max_evals.to_string()),
            ("threads".into(), rayon::current_num_threads().to_string()),
            ("scale_substitution".into(), SCALE_NOTE.into()),
        ],
        entries: Vec::new(),
    };
    let mut first_error = None;
    for exp in &spec.experiments {
        let outcome = experiments::run(exp, &ctx);
        let mut fields = describe(exp, &ctx);
        for table in &outcome.tables {
            table.write(&opts.out)?;
        }
        fields.push((
            "files".into(),
            outcome
                .tables
                .iter()
                .map(|t| t.file.as_str())
                .collect::<Vec<_>>()
                .join(", "),
        ));
        fields.push((
            "rows".into(),
            outcome
                .tables
                .iter()
                .map(|t| t.rows.len().to_string())
                .collect::<Vec<_>>()
                .join(", "),
        ));
        let status = match outcome.error {
            None => Status::Complete,
            Some(e) => {
                let status = Status::Partial(e.to_string());
                first_error.get_or_insert(CliError::Experiment {
                    experiment: exp.name.clone(),
                    source: e,
                });
                status
            }
        };
        manifest.entries.push(ManifestEntry {
            name: exp.name.clone(),
            fields,
            status,
        });
    }
    manifest.write(&opts.out.join(MANIFEST_FILE))?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

/// `name  parameter syntax` for every family the spec parser accepts.
pub fn family_listing() -> Vec<(&'static str, &'static str)> {
    vec![
        ("dirac", "dirac(x0=<pos>)"),
        ("exponential", "exponential(rate=<pos>)"),
        ("half-normal", "half-normal(sigma=<pos>)"),
        ("weibull", "weibull(scale=<pos>; shape=<pos>)"),
        ("pareto", "pareto(xm=<pos>; kappa=<pos>)"),
        ("half-cauchy", "half-cauchy(scale=<pos>)"),
        ("log-tail", "log-tail"),
        ("qsd", "qsd(gamma=<[0,alpha)>; alpha=<pos, default: section alpha>)"),
        (
            "tabulated",
            "tabulated(points=x:tail/x:tail/...; power=<index> | stretched=<coeff>:<shape>)",
        ),
    ]
}
