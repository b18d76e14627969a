//! Domain types: the drift, the catalog of initial laws, and the
//! quasi-stationary family `π_γ`.

use crate::error::{domain, Error, Result};
use crate::special::{ln_mills_tail, LN_SQRT_2PI};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use statrs::function::erf::erf_inv;
use std::f64::consts::{E, FRAC_2_PI, PI};
use std::fmt;

/// Brownian motion with drift `-alpha`, killed on hitting 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftModel {
    alpha: f64,
}

impl DriftModel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(domain(format!("drift magnitude must be positive, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// `-expm1(-2γy) / (2γ)`, i.e. `e^{-γy} sinh(γy)/γ`, continuous at `γ = 0`.
fn damped_sinhc(gamma: f64, y: f64) -> f64 {
    if gamma == 0.0 {
        y
    } else {
        -(-2.0 * gamma * y).exp_m1() / (2.0 * gamma)
    }
}

/// A member `π_γ` of the quasi-stationary family for drift `-alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsdDensity {
    gamma: f64,
    alpha: f64,
}

impl QsdDensity {
    pub fn new(gamma: f64, alpha: f64) -> Result<Self> {
        DriftModel::new(alpha)?;
        if !(gamma >= 0.0 && gamma < alpha) {
            return Err(domain(format!(
                "gamma must lie in [0, alpha) = [0, {alpha}), got {gamma}"
            )));
        }
        Ok(Self { gamma, alpha })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `λ_π = (α² - γ²)/2`, the exponential rate of the absorption time under `π_γ`.
    pub fn absorption_rate(&self) -> f64 {
        0.5 * (self.alpha - self.gamma) * (self.alpha + self.gamma)
    }

    fn norm(&self) -> f64 {
        (self.alpha - self.gamma) * (self.alpha + self.gamma)
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.norm() * (-(self.alpha - self.gamma) * x).exp() * damped_sinhc(self.gamma, x)
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.norm().ln() - (self.alpha - self.gamma) * x + damped_sinhc(self.gamma, x).ln()
    }

    /// `ln π_γ([x, ∞))`; the tail is `e^{-αx}(α sinh(γx)/γ + cosh(γx))`.
    pub fn ln_tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let (a, g) = (self.alpha, self.gamma);
        let cosh_part = 0.5 * (1.0 + (-2.0 * g * x).exp());
        -(a - g) * x + (a * damped_sinhc(g, x) + cosh_part).ln()
    }

    pub fn tail(&self, x: f64) -> f64 {
        self.ln_tail(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        -self.ln_tail(x).exp_m1()
    }

    /// `(π, π', π'')` from the closed form.
    pub fn derivatives(&self, x: f64) -> (f64, f64, f64) {
        let (a, g) = (self.alpha, self.gamma);
        let c = self.norm();
        // π = c e^{-αx} s(x) with s = sinh(γx)/γ, s' = cosh(γx), s'' = γ² s
        let (s, s1) = if g == 0.0 {
            (x, 1.0)
        } else {
            ((g * x).sinh() / g, (g * x).cosh())
        };
        let s2 = g * g * s;
        let e = (-a * x).exp();
        (c * e * s, c * e * (s1 - a * s), c * e * (s2 - 2.0 * a * s1 + a * a * s))
    }

    /// Relative residual of `½π'' + απ' + λπ = 0` at `x`.
    pub fn eigen_residual(&self, x: f64) -> f64 {
        let (p0, p1, p2) = self.derivatives(x);
        let lambda = self.absorption_rate();
        let r = 0.5 * p2 + self.alpha * p1 + lambda * p0;
        let scale = 0.5 * p2.abs() + self.alpha * p1.abs() + lambda * p0.abs();
        if scale == 0.0 {
            0.0
        } else {
            r.abs() / scale
        }
    }
}

/// Density of `π_γ` at `x`.
pub fn qsd_density(gamma: f64, alpha: f64, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(domain(format!("x must be nonnegative, got {x}")));
    }
    Ok(QsdDensity::new(gamma, alpha)?.density(x))
}

/// `λ_π = (α² − γ²)/2`.
pub fn absorption_rate(gamma: f64, alpha: f64) -> Result<f64> {
    Ok(QsdDensity::new(gamma, alpha)?.absorption_rate())
}

/// Analytic continuation of a tabulated log-tail past its last grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailExtension {
    /// `ln tail(x) = ln tail(x_n) - coeff·(x^shape - x_n^shape)`.
    Stretched { coeff: f64, shape: f64 },
    /// `ln tail(x) = ln tail(x_n) - index·ln(x/x_n)`.
    PowerLaw { index: f64 },
}

impl TailExtension {
    fn validate(&self) -> Result<()> {
        match *self {
            TailExtension::Stretched { coeff, shape } if coeff > 0.0 && shape > 0.0 => Ok(()),
            TailExtension::PowerLaw { index } if index > 0.0 => Ok(()),
            other => Err(domain(format!("invalid tail extension {other:?}"))),
        }
    }

    fn ln_tail(&self, x_n: f64, ln_tail_n: f64, x: f64) -> f64 {
        match *self {
            TailExtension::Stretched { coeff, shape } => ln_tail_n - coeff * (x.powf(shape) - x_n.powf(shape)),
            TailExtension::PowerLaw { index } => ln_tail_n - index * (x / x_n).ln(),
        }
    }

    fn ln_tail_slope(&self, x: f64) -> f64 {
        match *self {
            TailExtension::Stretched { coeff, shape } => -coeff * shape * x.powf(shape - 1.0),
            TailExtension::PowerLaw { index } => -index / x,
        }
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(domain("monotone interpolation needs at least two (x, y) pairs"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("interpolation abscissae must be strictly increasing"));
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = Self::edge_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = Self::edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { xs, ys, slopes: d })
    }

    fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
        let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
        if d.signum() != m0.signum() {
            0.0
        } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
            3.0 * m0
        } else {
            d
        }
    }

    pub fn lo(&self) -> f64 {
        self.xs[0]
    }

    pub fn hi(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn last_value(&self) -> f64 {
        *self.ys.last().unwrap()
    }

    fn segment(&self, x: f64) -> usize {
        self.xs.partition_point(|&k| k <= x).clamp(1, self.xs.len() - 1) - 1
    }

    /// Value and derivative at `x ∈ [lo, hi]`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (y0, y1, d0, d1) = (self.ys[i], self.ys[i + 1], self.slopes[i], self.slopes[i + 1]);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dh00 = 6.0 * s * s - 6.0 * s;
        let dh10 = 3.0 * s * s - 4.0 * s + 1.0;
        let dh01 = -dh00;
        let dh11 = 3.0 * s * s - 2.0 * s;
        let dv = (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1;
        (v, dv)
    }
}

/// Tail given on a grid, interpolated monotonically in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedTail {
    ln_tail: MonotoneCubic,
    extension: Option<TailExtension>,
}

impl TabulatedTail {
    /// `points` are `(x, μ([x,∞)))` pairs: strictly increasing `x ≥ 0`,
    /// nonincreasing tail starting at 1 and ending strictly positive.
    pub fn new(points: &[(f64, f64)], extension: Option<TailExtension>) -> Result<Self> {
        if points.len() < 2 {
            return Err(domain("a tabulated tail needs at least two points"));
        }
        if points[0].0 < 0.0 {
            return Err(domain("tabulated tail must start at x >= 0"));
        }
        if (points[0].1 - 1.0).abs() > 1e-12 {
            return Err(domain("tabulated tail must equal 1 at its first point"));
        }
        if points.windows(2).any(|w| w[1].1 > w[0].1) {
            return Err(domain("tabulated tail must be nonincreasing"));
        }
        let last = points.last().unwrap().1;
        if !(last > 0.0) {
            return Err(domain("tabulated tail must end strictly positive"));
        }
        if let Some(ext) = &extension {
            ext.validate()?;
        }
        let xs = points.iter().map(|p| p.0).collect();
        let ys = points.iter().map(|p| p.1.min(1.0).ln()).collect();
        Ok(Self {
            ln_tail: MonotoneCubic::new(xs, ys)?,
            extension,
        })
    }

    pub fn grid(&self) -> &[f64] {
        self.ln_tail.knots()
    }

    pub fn extension(&self) -> Option<TailExtension> {
        self.extension
    }

    fn ln_tail_and_slope(&self, x: f64) -> Result<(f64, f64)> {
        let (lo, hi) = (self.ln_tail.lo(), self.ln_tail.hi());
        if x < lo {
            return Ok((0.0, 0.0));
        }
        if x <= hi {
            let (v, d) = self.ln_tail.eval(x);
            return Ok((v.min(0.0), d.min(0.0)));
        }
        match &self.extension {
            Some(ext) => Ok((ext.ln_tail(hi, self.ln_tail.last_value(), x), ext.ln_tail_slope(x))),
            None => Err(Error::Extrapolation { x, lo, hi }),
        }
    }
}

/// Catalog of initial distributions on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialMeasure {
    Dirac {
        x0: f64,
    },
    Exponential {
        rate: f64,
    },
    HalfNormal {
        sigma: f64,
    },
    Weibull {
        scale: f64,
        shape: f64,
    },
    Pareto {
        xm: f64,
        kappa: f64,
    },
    HalfCauchy {
        scale: f64,
    },
    /// Tail `min(1, 1/ln x)`, equal to 1 below `x = e`.
    LogTail,
    /// A quasi-stationary law `π_γ` used as the initial law.
    Qsd(QsdDensity),
    Tabulated(TabulatedTail),
}

/// `(density, tail, ln tail)` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurePoint {
    pub density: f64,
    pub tail: f64,
    pub log_tail: f64,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(domain(format!("{name} must be positive and finite, got {v}")))
    }
}

impl InitialMeasure {
    pub fn dirac(x0: f64) -> Result<Self> {
        Ok(Self::Dirac {
            x0: positive("x0", x0)?,
        })
    }
    pub fn exponential(rate: f64) -> Result<Self> {
        Ok(Self::Exponential {
            rate: positive("rate", rate)?,
        })
    }
    pub fn half_normal(sigma: f64) -> Result<Self> {
        Ok(Self::HalfNormal {
            sigma: positive("sigma", sigma)?,
        })
    }
    pub fn weibull(scale: f64, shape: f64) -> Result<Self> {
        Ok(Self::Weibull {
            scale: positive("scale", scale)?,
            shape: positive("shape", shape)?,
        })
    }
    pub fn pareto(xm: f64, kappa: f64) -> Result<Self> {
        Ok(Self::Pareto {
            xm: positive("xm", xm)?,
            kappa: positive("kappa", kappa)?,
        })
    }
    pub fn half_cauchy(scale: f64) -> Result<Self> {
        Ok(Self::HalfCauchy {
            scale: positive("scale", scale)?,
        })
    }
    pub fn log_tail_law() -> Self {
        Self::LogTail
    }
    pub fn qsd(gamma: f64, alpha: f64) -> Result<Self> {
        Ok(Self::Qsd(QsdDensity::new(gamma, alpha)?))
    }
    pub fn tabulated(points: &[(f64, f64)], extension: Option<TailExtension>) -> Result<Self> {
        Ok(Self::Tabulated(TabulatedTail::new(points, extension)?))
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Dirac { .. } => "dirac",
            Self::Exponential { .. } => "exponential",
            Self::HalfNormal { .. } => "half-normal",
            Self::Weibull { .. } => "weibull",
            Self::Pareto { .. } => "pareto",
            Self::HalfCauchy { .. } => "half-cauchy",
            Self::LogTail => "log-tail",
            Self::Qsd(_) => "qsd",
            Self::Tabulated(_) => "tabulated",
        }
    }

    /// Location of a point mass, if the law is one.
    pub fn atom(&self) -> Option<f64> {
        match self {
            Self::Dirac { x0 } => Some(*x0),
            _ => None,
        }
    }

    /// Closed support `[lo, hi]` of the law.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Dirac { x0 } => (*x0, *x0),
            Self::Pareto { xm, .. } => (*xm, f64::INFINITY),
            Self::LogTail => (E, f64::INFINITY),
            Self::Tabulated(t) => (t.ln_tail.lo(), f64::INFINITY),
            _ => (0.0, f64::INFINITY),
        }
    }

    /// `ln μ([x, ∞))`, computed directly rather than as `ln(tail)`.
    pub fn log_tail(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(domain("x is NaN"));
        }
        if x <= self.support().0 && self.atom().is_none() {
            return Ok(0.0);
        }
        Ok(match self {
            Self::Dirac { x0 } => {
                if x <= *x0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::Exponential { rate } => -rate * x,
            Self::HalfNormal { sigma } => ln_mills_tail(x / sigma) + std::f64::consts::LN_2 - LN_SQRT_2PI,
            Self::Weibull { scale, shape } => -(x / scale).powf(*shape),
            Self::Pareto { xm, kappa } => -kappa * (x / xm).ln(),
            Self::HalfCauchy { scale } => (FRAC_2_PI * (scale / x).atan()).ln(),
            Self::LogTail => -x.ln().ln(),
            Self::Qsd(q) => q.ln_tail(x),
            Self::Tabulated(t) => t.ln_tail_and_slope(x)?.0,
        })
    }

    /// `ln` of the Lebesgue density; `-∞` off the support. Not defined for an atom.
    pub fn log_density(&self, x: f64) -> Result<f64> {
        let (lo, _) = self.support();
        if x < lo {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(match self {
            Self::Dirac { .. } => f64::NEG_INFINITY,
            Self::Exponential { rate } => rate.ln() - rate * x,
            Self::HalfNormal { sigma } => (2.0 / PI).sqrt().ln() - sigma.ln() - 0.5 * (x / sigma).powi(2),
            Self::Weibull { scale, shape } => {
                let z = x / scale;
                let power = if *shape == 1.0 { 0.0 } else { (shape - 1.0) * z.ln() };
                (shape / scale).ln() + power - z.powf(*shape)
            }
            Self::Pareto { xm, kappa } => kappa.ln() + kappa * xm.ln() - (kappa + 1.0) * x.ln(),
            Self::HalfCauchy { scale } => (FRAC_2_PI * scale).ln() - (scale * scale + x * x).ln(),
            Self::LogTail => -x.ln() - 2.0 * x.ln().ln(),
            Self::Qsd(q) => q.ln_density(x),
            Self::Tabulated(t) => {
                let (lt, slope) = t.ln_tail_and_slope(x)?;
                if slope >= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    lt + (-slope).ln()
                }
            }
        })
    }

    /// `d/dx ln μ([x,∞)) = -F'(x)`; exact for analytic families, a central
    /// difference quotient for tabulated tails.
    pub fn log_tail_slope(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Self::Dirac { .. } => 0.0,
            Self::Exponential { rate } => -rate,
            Self::HalfNormal { .. } | Self::HalfCauchy { .. } | Self::Qsd(_) => {
                // -density/tail, stable in log space
                -(self.log_density(x)? - self.log_tail(x)?).exp()
            }
            Self::Weibull { scale, shape } => -shape / scale * (x / scale).powf(shape - 1.0),
            Self::Pareto { xm, kappa } => {
                if x < *xm {
                    0.0
                } else {
                    -kappa / x
                }
            }
            Self::LogTail => {
                if x < E {
                    0.0
                } else {
                    -1.0 / (x * x.ln())
                }
            }
            Self::Tabulated(_) => {
                let h = 1e-4 * x.abs().max(1e-8);
                let lo = (x - h).max(0.0);
                (self.log_tail(x + h)? - self.log_tail(lo)?) / (x + h - lo)
            }
        })
    }

    pub fn eval(&self, x: f64) -> Result<MeasurePoint> {
        if !(x >= 0.0) {
            return Err(domain(format!("x must be nonnegative, got {x}")));
        }
        let log_tail = self.log_tail(x)?;
        let density = match self.atom() {
            Some(_) => 0.0,
            None => self.log_density(x)?.exp(),
        };
        Ok(MeasurePoint {
            density,
            tail: log_tail.exp(),
            log_tail,
        })
    }

    /// Smallest `x` with `ln μ([x,∞)) ≤ ln_q`.
    pub fn tail_quantile_ln(&self, ln_q: f64) -> Result<f64> {
        if !(ln_q <= 0.0) {
            return Err(domain(format!("log-probability must be <= 0, got {ln_q}")));
        }
        let (lo, _) = self.support();
        if ln_q == 0.0 {
            return Ok(lo);
        }
        Ok(match self {
            Self::Dirac { x0 } => *x0,
            Self::Exponential { rate } => -ln_q / rate,
            Self::Weibull { scale, shape } => scale * (-ln_q).powf(1.0 / shape),
            Self::Pareto { xm, kappa } => xm * (-ln_q / kappa).exp(),
            Self::HalfCauchy { scale } => {
                let q = ln_q.exp();
                scale / (0.5 * PI * q).tan()
            }
            Self::LogTail => (-ln_q).exp().exp(),
            _ => self.invert_log_tail(ln_q)?,
        })
    }

    /// Smallest `x` with `μ([0, x]) ≥ p`.
    pub fn mass_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(domain(format!("probability must lie in (0,1), got {p}")));
        }
        let ln_surv = (-p).ln_1p();
        Ok(match self {
            Self::HalfNormal { sigma } => sigma * std::f64::consts::SQRT_2 * erf_inv(p),
            Self::HalfCauchy { scale } => scale * (0.5 * PI * p).tan(),
            _ => self.tail_quantile_ln(ln_surv)?,
        })
    }

    fn invert_log_tail(&self, ln_q: f64) -> Result<f64> {
        let (lo, _) = self.support();
        let mut a = lo;
        let mut b = lo.max(1.0);
        let mut guard = 0;
        while self.log_tail(b)? > ln_q {
            a = b;
            b *= 2.0;
            guard += 1;
            if guard > 1100 || !b.is_finite() {
                return Ok(f64::INFINITY);
            }
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if !(m > a && m < b) {
                break;
            }
            if self.log_tail(m)? > ln_q {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(b)
    }

    /// Draws one variate. Heavy-tailed families use exact inverse transforms;
    /// values beyond `f64::MAX` saturate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let x = match self {
            Self::Dirac { x0 } => *x0,
            Self::HalfNormal { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z.abs()
            }
            Self::Qsd(q) => {
                let e1 = Exp::new(q.alpha - q.gamma).expect("positive rate").sample(rng);
                let e2 = Exp::new(q.alpha + q.gamma).expect("positive rate").sample(rng);
                e1 + e2
            }
            _ => {
                // u ∈ (0, 1]
                let u = 1.0 - rng.random::<f64>();
                self.tail_quantile_ln(u.ln())?
            }
        };
        Ok(if x.is_finite() { x } else { f64::MAX })
    }

    /// Short parameter string, e.g. `rate=0.5`.
    pub fn params(&self) -> String {
        match self {
            Self::Dirac { x0 } => format!("x0={x0}"),
            Self::Exponential { rate } => format!("rate={rate}"),
            Self::HalfNormal { sigma } => format!("sigma={sigma}"),
            Self::Weibull { scale, shape } => format!("scale={scale};shape={shape}"),
            Self::Pareto { xm, kappa } => format!("xm={xm};kappa={kappa}"),
            Self::HalfCauchy { scale } => format!("scale={scale}"),
            Self::LogTail => String::new(),
            Self::Qsd(q) => format!("gamma={};alpha={}", q.gamma, q.alpha),
            Self::Tabulated(t) => format!("points={}", t.grid().len()),
        }
    }
}

impl fmt::Display for InitialMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.family(), self.params())
    }
}

/// `(density, tail, log_tail)` of `mu` at `x`.
pub fn measure_eval(mu: &InitialMeasure, x: f64) -> Result<MeasurePoint> {
    mu.eval(x)
}
