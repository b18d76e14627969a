//! Monte Carlo ground truth for the absorbed process.
//!
//! Increments are exact Gaussians; the only discretisation error is a crossing
//! of zero strictly inside a step, which the Brownian-bridge correction
//! removes. Each particle owns a ChaCha8 stream keyed by
//! `(seed, stream_id, replica)` and selected by its index, so results are
//! bit-identical for any number of worker threads.

use crate::error::{Error, Result};
use crate::model::{DriftModel, InitialMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Two-sided confidence of every interval reported here.
pub const CONFIDENCE: f64 = 0.99;

const MIN_SURVIVORS: usize = 100;
/// Stream reserved for the relocation draws of a resampling replica.
const RELOCATION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    Rejection,
    Resampling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t: f64,
    /// Total particles; resampling splits them evenly across replicas.
    pub n_particles: usize,
    pub conditioning: Conditioning,
    pub seed: u64,
    pub stream_id: u64,
    /// Independent resampling populations used for the batch-means interval.
    pub replicas: usize,
    /// Apply the per-step bridge crossing test. Off only to measure its effect.
    pub bridge_correction: bool,
}

impl SimConfig {
    pub fn new(t: f64, n_particles: usize, conditioning: Conditioning) -> Self {
        Self {
            dt: (t / 1000.0).min(0.01),
            t,
            n_particles,
            conditioning,
            seed: 0,
            stream_id: 0,
            replicas: 8,
            bridge_correction: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Simulation(m));
        if !(self.t > 0.0 && self.t.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.t));
        }
        if !(self.dt > 0.0 && self.dt <= self.t) {
            return bad(format!("dt must lie in (0, t], got {}", self.dt));
        }
        if self.n_particles == 0 {
            return bad("need at least one particle".into());
        }
        if self.conditioning == Conditioning::Resampling && (self.replicas < 2 || self.n_particles < 2 * self.replicas)
        {
            return bad(format!(
                "resampling needs at least 2 replicas of 2 particles, got {} particles over {} replicas",
                self.n_particles, self.replicas
            ));
        }
        Ok(())
    }

    /// Step count; the step is shrunk so that it divides `t` exactly.
    pub fn steps(&self) -> usize {
        ((self.t / self.dt).round() as usize).max(1)
    }

    pub fn effective_dt(&self) -> f64 {
        self.t / self.steps() as f64
    }
}

fn particle_rng(seed: u64, stream_id: u64, replica: u64, particle: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream_id.to_le_bytes());
    key[16..24].copy_from_slice(&replica.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(particle);
    rng
}

/// Probability that a bridge from `x` to `x1` over `dt` touched zero.
pub fn bridge_absorption_probability(x: f64, x1: f64, dt: f64) -> f64 {
    if x <= 0.0 || x1 <= 0.0 {
        1.0
    } else {
        (-2.0 * x * x1 / dt).exp()
    }
}

/// One exact step of drift `-α`; returns the new position and whether the
/// path hit zero during the step.
pub fn step_with_absorption<R: Rng + ?Sized>(x: f64, dt: f64, alpha: f64, rng: &mut R) -> (f64, bool) {
    step(x, dt, alpha, true, rng)
}

fn step<R: Rng + ?Sized>(x: f64, dt: f64, alpha: f64, bridge: bool, rng: &mut R) -> (f64, bool) {
    let z: f64 = rng.sample(StandardNormal);
    let x1 = x - alpha * dt + dt.sqrt() * z;
    if x1 <= 0.0 {
        return (x1, true);
    }
    if bridge {
        let u: f64 = rng.random();
        if u < bridge_absorption_probability(x, x1, dt) {
            return (x1, true);
        }
    }
    (x1, false)
}

/// A survival probability with a two-sided interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalCi {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
}

impl SurvivalCi {
    pub fn covers(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    /// Wilson interval for `survivors` out of `trials`.
    pub fn binomial(survivors: u64, trials: u64) -> Self {
        let z = Normal::standard().inverse_cdf(0.5 + CONFIDENCE / 2.0);
        let n = trials as f64;
        let p = survivors as f64 / n;
        let denom = 1.0 + z * z / n;
        let centre = (p + z * z / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
        Self {
            estimate: p,
            lower: (centre - half).max(0.0),
            upper: (centre + half).min(1.0),
            confidence: CONFIDENCE,
        }
    }

    /// Student-t interval from independent replica estimates. The values are
    /// sorted first, so the result does not depend on their order.
    pub fn from_replicas(estimates: &[f64]) -> Result<Self> {
        if estimates.len() < 2 {
            return Err(Error::Simulation("batch means need at least two replicas".into()));
        }
        let mut v = estimates.to_vec();
        v.sort_by(f64::total_cmp);
        let r = v.len() as f64;
        let mean = v.iter().sum::<f64>() / r;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
        let q = StudentsT::new(0.0, 1.0, r - 1.0)
            .map_err(|e| Error::Simulation(e.to_string()))?
            .inverse_cdf(0.5 + CONFIDENCE / 2.0);
        let half = q * (var / r).sqrt();
        Ok(Self {
            estimate: mean,
            lower: (mean - half).max(0.0),
            upper: (mean + half).min(1.0),
            confidence: CONFIDENCE,
        })
    }
}

/// Conditioned endpoint sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSample {
    /// Sorted ascending.
    pub values: Vec<f64>,
    pub effective_size: f64,
    pub survival: SurvivalCi,
    pub t: f64,
}

impl EmpiricalSample {
    fn new(mut values: Vec<f64>, survival: SurvivalCi, t: f64) -> Self {
        values.sort_by(f64::total_cmp);
        Self {
            effective_size: values.len() as f64,
            values,
            survival,
            t,
        }
    }

    /// Fraction of values `≤ y`.
    pub fn cdf(&self, y: f64) -> f64 {
        self.values.partition_point(|&v| v <= y) as f64 / self.values.len().max(1) as f64
    }

    /// Fraction of values `< y`.
    pub fn cdf_left(&self, y: f64) -> f64 {
        self.values.partition_point(|&v| v < y) as f64 / self.values.len().max(1) as f64
    }

    /// Fraction of values `> y`.
    pub fn exceedance(&self, y: f64) -> f64 {
        1.0 - self.cdf(y)
    }
}

/// Runs one particle to the horizon; returns the step at which it was
/// absorbed, or its final position.
fn run_particle(
    mu: &InitialMeasure,
    alpha: f64,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<std::result::Result<f64, usize>> {
    let dt = cfg.effective_dt();
    let mut x = mu.sample(rng)?;
    for k in 0..cfg.steps() {
        let (x1, absorbed) = step(x, dt, alpha, cfg.bridge_correction, rng);
        if absorbed {
            return Ok(Err(k));
        }
        x = x1;
    }
    Ok(Ok(x))
}

fn rejection_outcomes(
    mu: &InitialMeasure,
    alpha: f64,
    cfg: &SimConfig,
) -> Result<Vec<std::result::Result<f64, usize>>> {
    (0..cfg.n_particles as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = particle_rng(cfg.seed, cfg.stream_id, 0, i);
            run_particle(mu, alpha, cfg, &mut rng)
        })
        .collect()
}

fn rejection(mu: &InitialMeasure, alpha: f64, cfg: &SimConfig) -> Result<EmpiricalSample> {
    let outcomes = rejection_outcomes(mu, alpha, cfg)?;
    let values: Vec<f64> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    if values.len() < MIN_SURVIVORS {
        return Err(Error::Simulation(format!(
            "only {} of {} paths survived to t = {}; use resampling",
            values.len(),
            cfg.n_particles,
            cfg.t
        )));
    }
    let ci = SurvivalCi::binomial(values.len() as u64, cfg.n_particles as u64);
    Ok(EmpiricalSample::new(values, ci, cfg.t))
}

/// One Fleming–Viot population: returns final positions and `ln` of the
/// survival estimate `∏ (1 - k_s/N)`.
fn resampling_replica(
    mu: &InitialMeasure,
    alpha: f64,
    cfg: &SimConfig,
    replica: u64,
    n: usize,
) -> Result<(Vec<f64>, f64)> {
    let dt = cfg.effective_dt();
    let mut rngs: Vec<ChaCha8Rng> = (0..n as u64)
        .map(|i| particle_rng(cfg.seed, cfg.stream_id, replica, i))
        .collect();
    let mut xs: Vec<f64> = rngs.iter_mut().map(|r| mu.sample(r)).collect::<Result<_>>()?;
    let mut relocate = particle_rng(cfg.seed, cfg.stream_id, replica, RELOCATION_STREAM);
    let mut dead = vec![false; n];
    let mut live: Vec<usize> = Vec::with_capacity(n);
    let mut ln_survival = 0.0;
    for k in 0..cfg.steps() {
        xs.par_iter_mut()
            .zip(rngs.par_iter_mut())
            .zip(dead.par_iter_mut())
            .for_each(|((x, rng), d)| {
                let (x1, absorbed) = step(*x, dt, alpha, cfg.bridge_correction, rng);
                *x = x1;
                *d = absorbed;
            });
        live.clear();
        live.extend((0..n).filter(|&i| !dead[i]));
        let killed = n - live.len();
        if killed == 0 {
            continue;
        }
        if live.is_empty() {
            return Err(Error::Extinction { t: (k + 1) as f64 * dt });
        }
        ln_survival += (-(killed as f64) / n as f64).ln_1p();
        for i in 0..n {
            if dead[i] {
                let j = live[relocate.random_range(0..live.len())];
                xs[i] = xs[j];
            }
        }
    }
    Ok((xs, ln_survival))
}

fn resampling(mu: &InitialMeasure, alpha: f64, cfg: &SimConfig) -> Result<EmpiricalSample> {
    let r = cfg.replicas;
    let mut values = Vec::with_capacity(cfg.n_particles);
    let mut estimates = Vec::with_capacity(r);
    for rep in 0..r {
        let n = cfg.n_particles / r + usize::from(rep < cfg.n_particles % r);
        let (xs, ln_s) = resampling_replica(mu, alpha, cfg, rep as u64, n)?;
        values.extend(xs);
        estimates.push(ln_s.exp());
    }
    let ci = SurvivalCi::from_replicas(&estimates)?;
    Ok(EmpiricalSample::new(values, ci, cfg.t))
}

/// Endpoints of paths started from `μ`, conditioned on survival to `cfg.t`.
pub fn simulate_conditioned(mu: &InitialMeasure, alpha: f64, cfg: &SimConfig) -> Result<EmpiricalSample> {
    DriftModel::new(alpha)?;
    cfg.validate()?;
    match cfg.conditioning {
        Conditioning::Rejection => rejection(mu, alpha, cfg),
        Conditioning::Resampling => resampling(mu, alpha, cfg),
    }
}

pub fn estimate_survival(mu: &InitialMeasure, alpha: f64, cfg: &SimConfig) -> Result<SurvivalCi> {
    Ok(simulate_conditioned(mu, alpha, cfg)?.survival)
}

/// Survival fractions at each time of `times` from one batch of independent
/// paths run to the largest of them. Times are rounded to the step grid.
pub fn estimate_survival_curve(
    mu: &InitialMeasure,
    alpha: f64,
    times: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<SurvivalCi>> {
    DriftModel::new(alpha)?;
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let cfg = SimConfig {
        t: horizon,
        conditioning: Conditioning::Rejection,
        ..cfg.clone()
    };
    cfg.validate()?;
    let outcomes = rejection_outcomes(mu, alpha, &cfg)?;
    let dt = cfg.effective_dt();
    Ok(times
        .iter()
        .map(|&s| {
            let steps = (s / dt).round() as usize;
            let alive = outcomes
                .iter()
                .filter(|o| match o {
                    Ok(_) => true,
                    Err(k) => *k >= steps,
                })
                .count();
            SurvivalCi::binomial(alive as u64, cfg.n_particles as u64)
        })
        .collect())
}
