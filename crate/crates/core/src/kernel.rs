//! The absorbed transition kernel and its integrals against an initial law.
//!
//! Every quantity is carried in log space. Ratios such as the conditioned
//! density are formed as `exp(ln numerator - ln survival)`, so nothing here
//! underflows before the final exponentiation, even when the survival
//! probability is far below `1e-250`.

use crate::chebyshev::PiecewiseChebyshev;
use crate::error::{domain, Error, Result};
use crate::model::{DriftModel, InitialMeasure};
use crate::quadrature::{integrate_log, log_sum, partition, LogEstimate, Tolerance};
use crate::special::{ln_add_exp, ln_normal_cdf, ln_one_minus_exp, LN_SQRT_2PI};
use std::cell::RefCell;

/// Gaussian widths past the bulk at which a kernel integral is truncated
/// (`11²/2 ≈ 60` nats below the peak).
const TRUNCATION_SDS: f64 = 11.0;

/// Beyond `αt + 9√t` a path is absorbed with probability below `2Φ(-9) ≈ 2e-19`.
const SURE_SURVIVAL_SDS: f64 = 9.0;

/// Log-drop past the running peak that ends a domain search.
const LOG_DROP: f64 = 40.0;

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("time must be positive and finite, got {t}")))
    }
}

/// `ln f(t, x, y)` with `f(t,x,y) dy = P_x(X_t ∈ dy, τ > t)`.
///
/// The Girsanov factor and the reflected Gaussian pair are merged into
/// `φ_t(y - x + αt)·(1 - e^{-2xy/t})`, so no intermediate exponent can overflow.
pub fn ln_defect_kernel(t: f64, x: f64, y: f64, alpha: f64) -> f64 {
    if !(x > 0.0 && y > 0.0) {
        return f64::NEG_INFINITY;
    }
    let d = y - x + alpha * t;
    -d * d / (2.0 * t) - 0.5 * t.ln() - LN_SQRT_2PI + ln_one_minus_exp(-2.0 * x * y / t)
}

/// Sub-probability density of `X_t` on `{τ > t}` started from `x`.
pub fn defect_kernel(t: f64, x: f64, y: f64, alpha: f64) -> Result<f64> {
    check_time(t)?;
    DriftModel::new(alpha)?;
    if !(x >= 0.0 && y >= 0.0) {
        return Err(domain(format!("positions must be nonnegative, got x={x}, y={y}")));
    }
    Ok(ln_defect_kernel(t, x, y, alpha).exp())
}

/// Closed-form first-passage survival `P_x(τ > t)` of a point start,
/// `Φ((x-αt)/√t) - e^{2αx} Φ(-(x+αt)/√t)`, in log space.
///
/// This is the reference the quadrature routes are checked against; none of
/// them call it.
pub fn ln_first_passage_survival(x: f64, t: f64, alpha: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let s = t.sqrt();
    let a = ln_normal_cdf((x - alpha * t) / s);
    let b = 2.0 * alpha * x + ln_normal_cdf(-(x + alpha * t) / s);
    a + ln_one_minus_exp(b - a)
}

pub fn first_passage_survival(x: f64, t: f64, alpha: f64) -> f64 {
    ln_first_passage_survival(x, t, alpha).exp()
}

/// A probability held as its logarithm plus a relative error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability {
    pub ln_value: f64,
    pub rel_error: f64,
}

impl Probability {
    pub fn value(&self) -> f64 {
        self.ln_value.exp()
    }

    pub fn abs_error(&self) -> f64 {
        self.value() * self.rel_error
    }

    fn from_log(est: LogEstimate) -> Self {
        Self {
            ln_value: est.ln_value.min(0.0),
            rel_error: est.rel_error,
        }
    }
}

/// Breakpoints, as offsets `u = y - y_lo`, for a `y`-integral of the kernel
/// from a point start `x`. Offsets keep the integrand resolvable when `y_lo`
/// sits so far past the bulk that its decay length is below the spacing of
/// floats near `y_lo`.
fn y_offsets(x: f64, t: f64, alpha: f64, y_lo: f64) -> Vec<f64> {
    let sd = t.sqrt();
    // centre of the Gaussian factor, relative to y_lo
    let c = x - alpha * t - y_lo;
    let hi = c.max(0.0) + TRUNCATION_SDS * sd;
    let mut cands: Vec<f64> = [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|k| c + k * sd)
        .collect();
    if c < 0.0 {
        let decay = t / -c;
        cands.extend([0.25, 1.0, 4.0, 16.0].iter().map(|k| k * decay));
    }
    if x > 0.0 {
        let knee = t / (2.0 * x);
        cands.extend([0.1, 1.0, 10.0].iter().map(|k| k * knee - y_lo));
    }
    partition(0.0, hi, cands)
}

/// Breakpoints for an integral against `dμ` on `[lo, hi]`.
fn measure_partition(mu: &InitialMeasure, lo: f64, hi: f64, features: &[f64]) -> Vec<f64> {
    let mut cands: Vec<f64> = features.to_vec();
    for p in [1e-12, 1e-9, 1e-6, 1e-3, 0.1, 0.5] {
        if let Ok(x) = mu.mass_quantile(p) {
            cands.push(x);
        }
    }
    let mut ln_q = -1.0;
    while ln_q >= -1024.0 {
        match mu.tail_quantile_ln(ln_q) {
            Ok(x) if x < hi => cands.push(x),
            _ => break,
        }
        ln_q *= 2.0;
    }
    if let InitialMeasure::Tabulated(tab) = mu {
        cands.extend_from_slice(tab.grid());
    }
    partition(lo, hi, cands)
}

/// Collects the first error raised inside a closure handed to the quadrature.
struct ErrorSlot(RefCell<Option<Error>>);

impl ErrorSlot {
    fn new() -> Self {
        Self(RefCell::new(None))
    }

    fn catch(&self, r: Result<f64>) -> f64 {
        match r {
            Ok(v) => v,
            Err(e) => {
                let mut slot = self.0.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                f64::NEG_INFINITY
            }
        }
    }

    fn check(self) -> Result<()> {
        match self.0.into_inner() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Recovers the partial value of an inner quadrature that ran out of budget.
fn tolerate(r: Result<LogEstimate>) -> Result<f64> {
    match r {
        Ok(est) => Ok(est.ln_value),
        Err(Error::Accuracy { value, error, .. }) if value.is_finite() && error < 1e-4 => Ok(value),
        Err(e) => Err(e),
    }
}

/// Absorbed-kernel integrals for a fixed drift and tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    alpha: f64,
    tol: Tolerance,
}

impl Kernel {
    pub fn new(alpha: f64) -> Result<Self> {
        Ok(Self {
            alpha: DriftModel::new(alpha)?.alpha(),
            tol: Tolerance::default(),
        })
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tol
    }

    /// `ln ∫_{y_lo}^∞ f(t, x, y) dy` by quadrature.
    fn ln_kernel_mass(&self, x: f64, t: f64, y_lo: f64, tol: &Tolerance) -> Result<f64> {
        if x <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let a = self.alpha;
        let d0 = y_lo - x + a * t;
        let breaks = y_offsets(x, t, a, y_lo);
        let integrand = |u: f64| {
            let d = d0 + u;
            -d * d / (2.0 * t) - 0.5 * t.ln() - LN_SQRT_2PI + ln_one_minus_exp(-2.0 * x * (y_lo + u) / t)
        };
        tolerate(integrate_log(integrand, &breaks, tol))
    }

    /// `ln h(t,x)` with `h(t,x) = ∫_0^∞ e^{-y²/2t} e^{-αy} (e^{xy/t} - e^{-xy/t}) dy`.
    fn ln_h(&self, x: f64, t: f64, tol: &Tolerance) -> Result<f64> {
        if x <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let a = self.alpha;
        let breaks = y_offsets(x, t, a, 0.0);
        let integrand = |y: f64| -y * y / (2.0 * t) - a * y + x * y / t + ln_one_minus_exp(-2.0 * x * y / t);
        tolerate(integrate_log(integrand, &breaks, tol))
    }

    /// `ln ∫ φ(x) dμ(x)` over `[max(support lo, x_floor), x_cut]`, plus
    /// `μ([x_cut, ∞))` when `phi_to_one` says `φ ≈ 1` beyond the cut.
    #[allow(clippy::too_many_arguments)]
    fn integrate_measure<F>(
        &self,
        mu: &InitialMeasure,
        ln_phi: F,
        x_floor: f64,
        x_cut: f64,
        phi_to_one: bool,
        features: &[f64],
    ) -> Result<LogEstimate>
    where
        F: Fn(f64) -> Result<f64>,
    {
        if let Some(x0) = mu.atom() {
            return Ok(LogEstimate {
                ln_value: ln_phi(x0)?,
                rel_error: self.tol.inner().rel,
                evals: 1,
            });
        }
        let (lo, _) = mu.support();
        let hi = x_cut.max(lo);
        let lo = lo.max(x_floor).min(hi);
        let mut parts = Vec::with_capacity(2);
        if hi > lo {
            let breaks = measure_partition(mu, lo, hi, features);
            let slot = ErrorSlot::new();
            let integrand = |x: f64| {
                let ld = slot.catch(mu.log_density(x));
                if ld == f64::NEG_INFINITY {
                    return ld;
                }
                ld + slot.catch(ln_phi(x))
            };
            let est = integrate_log(integrand, &breaks, &self.tol)?;
            slot.check()?;
            parts.push(est);
        }
        if phi_to_one {
            parts.push(LogEstimate {
                ln_value: mu.log_tail(hi)?,
                rel_error: 1e-15,
                evals: 0,
            });
        }
        Ok(log_sum(&parts))
    }

    fn time_features(&self, t: f64, shift: f64) -> Vec<f64> {
        let sd = t.sqrt();
        [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0]
            .iter()
            .map(|k| shift + self.alpha * t + k * sd)
            .collect()
    }

    /// `P_μ(τ > t) = ∫ dμ(x) ∫ f(t,x,y) dy`, inner integral in `y` first.
    pub fn survival(&self, mu: &InitialMeasure, t: f64) -> Result<Probability> {
        check_time(t)?;
        let inner = self.tol.inner();
        let x_cut = self.alpha * t + SURE_SURVIVAL_SDS * t.sqrt();
        let est = self.integrate_measure(
            mu,
            |x| self.ln_kernel_mass(x, t, 0.0, &inner),
            0.0,
            x_cut,
            true,
            &self.time_features(t, 0.0),
        )?;
        Ok(Probability::from_log(est))
    }

    /// The same survival probability through the factorisation
    /// `e^{-α²t/2}/√(2πt) ∫ e^{-x²/2t} e^{αx} h(t,x) dμ(x)`.
    pub fn survival_via_h(&self, mu: &InitialMeasure, t: f64) -> Result<Probability> {
        check_time(t)?;
        let a = self.alpha;
        let inner = self.tol.inner();
        let prefactor = -a * a * t / 2.0 - 0.5 * t.ln() - LN_SQRT_2PI;
        let x_cut = a * t + SURE_SURVIVAL_SDS * t.sqrt();
        let est = self.integrate_measure(
            mu,
            |x| Ok(prefactor - x * x / (2.0 * t) + a * x + self.ln_h(x, t, &inner)?),
            0.0,
            x_cut,
            true,
            &self.time_features(t, 0.0),
        )?;
        Ok(Probability::from_log(est))
    }

    /// `P_μ(X_t > a, τ > t)`.
    pub fn joint_tail(&self, mu: &InitialMeasure, t: f64, a: f64) -> Result<Probability> {
        check_time(t)?;
        if !(a >= 0.0) {
            return Err(domain(format!("threshold must be nonnegative, got {a}")));
        }
        let inner = self.tol.inner();
        let x_cut = a + self.alpha * t + SURE_SURVIVAL_SDS * t.sqrt();
        // Starts below a - k√t reach a with probability under e^{-k²/2}; pick k
        // so that is negligible next to μ([x_cut, ∞)).
        let ln_floor = mu.log_tail(x_cut)?.max(-700.0) + self.tol.rel.ln() - 5.0;
        let x_floor = a - (-2.0 * ln_floor).sqrt() * t.sqrt();
        let est = self.integrate_measure(
            mu,
            |x| self.ln_kernel_mass(x, t, a, &inner),
            x_floor,
            x_cut,
            true,
            &self.time_features(t, a),
        )?;
        Ok(Probability::from_log(est))
    }

    /// `ln ∫ f(t, x, y) dμ(x)`: the unnormalised conditioned density at `y`.
    pub fn ln_joint_density(&self, mu: &InitialMeasure, t: f64, y: f64) -> Result<f64> {
        self.with_tolerance(self.tol.inner()).joint_density_at_tol(mu, t, y)
    }

    fn joint_density_at_tol(&self, mu: &InitialMeasure, t: f64, y: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let a = self.alpha;
        let x_cut = y + a * t + TRUNCATION_SDS * t.sqrt();
        let mut features = self.time_features(t, y);
        features.extend([0.1, 1.0, 10.0].iter().map(|k| k * t / (2.0 * y)));
        let est = self.integrate_measure(mu, |x| Ok(ln_defect_kernel(t, x, y, a)), 0.0, x_cut, false, &features)?;
        Ok(est.ln_value)
    }

    /// The law of `X_t` given `τ > t`.
    pub fn conditional_law(&self, mu: &InitialMeasure, t: f64) -> Result<ConditionedEstimate> {
        check_time(t)?;
        let survival = self.survival(mu, t)?;
        if survival.ln_value == f64::NEG_INFINITY || survival.ln_value.is_nan() {
            return Err(Error::Degenerate(format!("survival probability vanished at t = {t}")));
        }
        let ln_s = survival.ln_value;

        // Geometric probe grid: locate the bulk and the point where the
        // density has fallen LOG_DROP nats below its running peak.
        let scale = (1.0 / self.alpha).min(t.sqrt()) * 1e-3;
        let mut grid = vec![0.0];
        let mut peak = f64::NEG_INFINITY;
        let mut y = scale;
        let mut y_hi = y;
        for _ in 0..90 {
            let v = self.ln_joint_density(mu, t, y)?;
            grid.push(y);
            peak = peak.max(v);
            y_hi = y;
            if peak > f64::NEG_INFINITY && v < peak - LOG_DROP {
                break;
            }
            y *= 2.0;
        }
        if peak == f64::NEG_INFINITY {
            return Err(Error::Degenerate(format!("conditioned density vanished at t = {t}")));
        }
        let density_scale = (peak - ln_s).exp();
        let density = PiecewiseChebyshev::build(
            |y| Ok((self.ln_joint_density(mu, t, y)? - ln_s).exp()),
            &grid,
            self.tol.rel * density_scale,
            20_000,
        )?;
        let upper = self.joint_tail(mu, t, y_hi)?;
        let upper_mass = (upper.ln_value - ln_s).exp();
        let error_bound = density.error() + survival.rel_error + upper_mass * upper.rel_error + 10.0 * self.tol.rel;
        Ok(ConditionedEstimate {
            t,
            survival,
            density,
            upper_mass,
            y_hi,
            error_bound,
            tail_source: (upper_mass > 1e-15).then(|| (mu.clone(), *self)),
        })
    }

    /// The reweighted law `ν_t` with cdf `C_t ∫_{[0,zt]} e^{-x²/2t} e^{αx} dμ(x)`.
    pub fn nu_family(&self, mu: &InitialMeasure, t: f64) -> Result<NuMeasure> {
        check_time(t)?;
        let ln_norm = self.ln_nu_mass(mu, t, f64::INFINITY)?;
        if ln_norm == f64::NEG_INFINITY || ln_norm.is_nan() {
            return Err(Error::Degenerate(format!("nu_t carries no mass at t = {t}")));
        }
        Ok(NuMeasure {
            t,
            ln_normalizer: -ln_norm,
            mu: mu.clone(),
            kernel: *self,
        })
    }

    /// `ln ∫_{[0, x_max]} e^{-x²/2t} e^{αx} dμ(x)`.
    fn ln_nu_mass(&self, mu: &InitialMeasure, t: f64, x_max: f64) -> Result<f64> {
        let a = self.alpha;
        let weight = |x: f64| -x * x / (2.0 * t) + a * x;
        if let Some(x0) = mu.atom() {
            return Ok(if x0 <= x_max { weight(x0) } else { f64::NEG_INFINITY });
        }
        let x_cut = (a * t + TRUNCATION_SDS * t.sqrt()).min(x_max);
        let est = self.integrate_measure(mu, |x| Ok(weight(x)), 0.0, x_cut, false, &self.time_features(t, 0.0))?;
        Ok(est.ln_value)
    }

    /// Median of `ν_t`: where the δ-limit of `ν_t` sits.
    pub fn nu_concentration(&self, mu: &InitialMeasure, t: f64) -> Result<f64> {
        self.nu_family(mu, t)?.median()
    }
}

/// `f(t,x,y)` integrated against `μ` and normalised by the survival probability.
#[derive(Debug, Clone)]
pub struct ConditionedEstimate {
    t: f64,
    survival: Probability,
    density: PiecewiseChebyshev,
    upper_mass: f64,
    y_hi: f64,
    error_bound: f64,
    tail_source: Option<(InitialMeasure, Kernel)>,
}

impl ConditionedEstimate {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn survival(&self) -> Probability {
        self.survival
    }

    pub fn density(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y > self.y_hi {
            if let Some((mu, k)) = &self.tail_source {
                if let Ok(v) = k.ln_joint_density(mu, self.t, y) {
                    return (v - self.survival.ln_value).exp();
                }
            }
            return 0.0;
        }
        self.density.value(y).max(0.0)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y <= self.y_hi {
            return self.density.integral_to(y).clamp(0.0, 1.0);
        }
        let upper = match &self.tail_source {
            Some((mu, k)) => k
                .joint_tail(mu, self.t, y)
                .map(|p| (p.ln_value - self.survival.ln_value).exp())
                .unwrap_or(0.0),
            None => 0.0,
        };
        (1.0 - upper).clamp(0.0, 1.0)
    }

    /// Total mass of the represented density (1 up to `error_bound`).
    pub fn mass(&self) -> f64 {
        self.density.total() + self.upper_mass
    }

    pub fn error_bound(&self) -> f64 {
        self.error_bound
    }

    /// End of the tabulated range; beyond it values come from fresh quadratures.
    pub fn support_hi(&self) -> f64 {
        self.y_hi
    }

    /// `y` with `cdf(y) = p`, by bisection.
    pub fn quantile(&self, p: f64) -> f64 {
        if p >= 1.0 {
            return f64::INFINITY;
        }
        if p <= 0.0 {
            return 0.0;
        }
        let (mut a, mut b) = (0.0, self.y_hi);
        while self.cdf(b) < p && b < 1e300 {
            a = b;
            b *= 2.0;
        }
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if self.cdf(m) < p {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}

/// The reweighted initial law `ν_t`, in the rescaled variable `z = x/t`.
#[derive(Debug, Clone)]
pub struct NuMeasure {
    t: f64,
    ln_normalizer: f64,
    mu: InitialMeasure,
    kernel: Kernel,
}

impl NuMeasure {
    pub fn t(&self) -> f64 {
        self.t
    }

    /// `ln C_t`.
    pub fn ln_normalizer(&self) -> f64 {
        self.ln_normalizer
    }

    pub fn cdf(&self, z: f64) -> Result<f64> {
        if z < 0.0 {
            return Ok(0.0);
        }
        let ln_mass = self.kernel.ln_nu_mass(&self.mu, self.t, z * self.t)?;
        Ok((ln_mass + self.ln_normalizer).exp().min(1.0))
    }

    pub fn median(&self) -> Result<f64> {
        if let Some(x0) = self.mu.atom() {
            return Ok(x0 / self.t);
        }
        let (mut a, mut b) = (0.0, 2.0 * self.kernel.alpha + 1.0);
        while self.cdf(b)? < 0.5 {
            a = b;
            b *= 2.0;
            if b > 1e12 {
                return Err(Error::Degenerate("nu_t median not bracketed".into()));
            }
        }
        while b - a > 1e-7 * b.max(1e-3) {
            let m = 0.5 * (a + b);
            if self.cdf(m)? < 0.5 {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }
}

pub fn survival(mu: &InitialMeasure, t: f64, alpha: f64) -> Result<Probability> {
    Kernel::new(alpha)?.survival(mu, t)
}

pub fn survival_via_h(mu: &InitialMeasure, t: f64, alpha: f64) -> Result<Probability> {
    Kernel::new(alpha)?.survival_via_h(mu, t)
}

pub fn conditional_law(mu: &InitialMeasure, t: f64, alpha: f64) -> Result<ConditionedEstimate> {
    Kernel::new(alpha)?.conditional_law(mu, t)
}

pub fn nu_family(mu: &InitialMeasure, t: f64, alpha: f64) -> Result<NuMeasure> {
    Kernel::new(alpha)?.nu_family(mu, t)
}

pub fn nu_concentration(mu: &InitialMeasure, t: f64, alpha: f64) -> Result<f64> {
    Kernel::new(alpha)?.nu_concentration(mu, t)
}

/// `L(z) = ∫_z^∞ e^{-w²/2} dw`.
pub fn mills_tail(z: f64) -> f64 {
    crate::special::mills_tail(z)
}

/// `ln(P + Q)` for two log-probabilities; handy when splicing partial results.
pub fn ln_add(a: f64, b: f64) -> f64 {
    ln_add_exp(a, b)
}
