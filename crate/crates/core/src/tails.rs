//! Tail indices of an initial law and the regime they select.
//!
//! With `F(x) = -ln μ([x, ∞))`:
//! - `ρ = lim F(x)/x` decides attraction to a QSD,
//! - `β` with `F(λx)/F(x) → λ^β` governs stretched-exponential tails,
//! - `κ` with `μ([x,∞)) = x^{-κ} L(x)` covers regularly varying tails.
//!
//! Analytic families report exact indices. Tabulated laws go through the
//! numeric path: finite-difference estimates on `x = 2^j`, `j ≤ 40`, accepted
//! only when the last eight agree to within `1e-3`.

use crate::error::{Error, Result};
use crate::model::{DriftModel, InitialMeasure};
use std::fmt;

const GRID_POINTS: i32 = 41;
const WINDOW: usize = 8;
const SLACK: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
struct Window {
    min: f64,
    max: f64,
    mean: f64,
    diverging: bool,
}

impl Window {
    fn of(values: &[f64]) -> Self {
        let w = &values[values.len() - WINDOW..];
        let min = w.iter().copied().fold(f64::INFINITY, f64::min);
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = w.iter().sum::<f64>() / WINDOW as f64;
        let increasing = w.windows(2).all(|p| p[1] > p[0]);
        let diverging = increasing && w[0] > 0.0 && w[WINDOW - 1] / w[0] >= 2.0;
        Self {
            min,
            max,
            mean,
            diverging,
        }
    }

    fn stable(&self) -> bool {
        self.max - self.min <= SLACK * self.mean.abs().max(1.0)
    }
}

fn grid_values(log_tail: &dyn Fn(f64) -> Result<f64>) -> Result<Vec<(f64, f64)>> {
    (0..GRID_POINTS)
        .map(|j| {
            let x = 2f64.powi(j);
            Ok((x, -log_tail(x)?))
        })
        .collect()
}

/// Numeric `(liminf, limsup)` of `F(x)/x` from a log-tail function.
pub fn exp_rate_numeric(log_tail: &dyn Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let pts = grid_values(log_tail)?;
    let ratios: Vec<f64> = pts.iter().map(|&(x, f)| f / x).collect();
    if ratios.iter().any(|r| r.is_infinite()) {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let w = Window::of(&ratios);
    if w.diverging {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    if w.max < SLACK {
        return Ok((0.0, 0.0));
    }
    if w.stable() {
        return Ok((w.mean, w.mean));
    }
    Err(Error::IndeterminateRate { lo: w.min, hi: w.max })
}

/// Numeric `(β, κ)`: `κ` is the slope of `F` against `ln x` when that settles
/// (then `β = 0`); otherwise `β` is the slope of `ln F` against `ln x`.
pub fn tail_indices_numeric(log_tail: &dyn Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let pts = grid_values(log_tail)?;
    let tail = &pts[pts.len() - WINDOW - 1..];
    if tail.iter().any(|p| p.1.is_infinite()) {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    if !(tail.windows(2).all(|p| p[1].1 > p[0].1) && tail[0].1 > 0.0) {
        return Err(Error::NotSmoothlyVarying(
            "-ln tail is not positive and increasing on the probe grid".into(),
        ));
    }
    let ln2 = std::f64::consts::LN_2;
    let kappa: Vec<f64> = pts.windows(2).map(|p| (p[1].1 - p[0].1) / ln2).collect();
    let wk = Window::of(&kappa);
    if wk.stable() && !wk.diverging {
        return Ok((0.0, wk.mean));
    }
    let beta: Vec<f64> = pts.windows(2).map(|p| (p[1].1.ln() - p[0].1.ln()) / ln2).collect();
    let wb = Window::of(&beta);
    if wb.stable() {
        return Ok((wb.mean.max(0.0), f64::INFINITY));
    }
    Err(Error::NotSmoothlyVarying(format!(
        "log-log slope of -ln tail wanders in [{}, {}]",
        wb.min, wb.max
    )))
}

/// `(liminf, limsup)` of `-ln μ([x,∞))/x`.
pub fn exp_rate(mu: &InitialMeasure) -> Result<(f64, f64)> {
    let inf = f64::INFINITY;
    Ok(match mu {
        InitialMeasure::Dirac { .. } | InitialMeasure::HalfNormal { .. } => (inf, inf),
        InitialMeasure::Exponential { rate } => (*rate, *rate),
        InitialMeasure::Weibull { scale, shape } => {
            let r = if *shape > 1.0 {
                inf
            } else if *shape == 1.0 {
                1.0 / scale
            } else {
                0.0
            };
            (r, r)
        }
        InitialMeasure::Pareto { .. } | InitialMeasure::HalfCauchy { .. } | InitialMeasure::LogTail => (0.0, 0.0),
        InitialMeasure::Qsd(q) => {
            let r = q.alpha() - q.gamma();
            (r, r)
        }
        InitialMeasure::Tabulated(_) => exp_rate_numeric(&|x| mu.log_tail(x))?,
    })
}

fn indices(mu: &InitialMeasure) -> Result<(f64, f64)> {
    let inf = f64::INFINITY;
    Ok(match mu {
        InitialMeasure::Dirac { .. } => (inf, inf),
        InitialMeasure::Exponential { .. } | InitialMeasure::Qsd(_) => (1.0, inf),
        InitialMeasure::HalfNormal { .. } => (2.0, inf),
        InitialMeasure::Weibull { shape, .. } => (*shape, inf),
        InitialMeasure::Pareto { kappa, .. } => (0.0, *kappa),
        InitialMeasure::HalfCauchy { .. } => (0.0, 1.0),
        InitialMeasure::LogTail => (0.0, 0.0),
        InitialMeasure::Tabulated(_) => tail_indices_numeric(&|x| mu.log_tail(x))?,
    })
}

/// Smooth-variation index `β` of `F = -ln tail`.
pub fn sv_index(mu: &InitialMeasure) -> Result<f64> {
    Ok(indices(mu)?.0)
}

/// Regular-variation index `κ` of the tail; infinite for tails lighter than
/// any power.
pub fn rv_index(mu: &InitialMeasure) -> Result<f64> {
    Ok(indices(mu)?.1)
}

/// Spatial scale `a_t = R(t, c)` of a heavy-scaled limit.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalingRule {
    /// `c·t`.
    Linear,
    /// `c / F′(αt)`.
    Power {
        mu: Box<InitialMeasure>,
        alpha: f64,
    },
    /// `c·t^exponent`.
    PowerOfTime {
        exponent: f64,
    },
    /// `t^c`.
    LogPower,
    None,
}

impl ScalingRule {
    pub fn evaluate(&self, t: f64, c: f64) -> Result<f64> {
        match self {
            ScalingRule::Linear => Ok(c * t),
            ScalingRule::Power { mu, alpha } => {
                let slope = -mu.log_tail_slope(alpha * t)?;
                if !(slope > 0.0) {
                    return Err(Error::NotSmoothlyVarying(format!("F′({}) = {slope}", alpha * t)));
                }
                Ok(c / slope)
            }
            ScalingRule::PowerOfTime { exponent } => Ok(c * t.powf(*exponent)),
            ScalingRule::LogPower => Ok(t.powf(c)),
            ScalingRule::None => Err(Error::Regime("no scaling rule".into())),
        }
    }
}

impl fmt::Display for ScalingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalingRule::Linear => write!(f, "c*t"),
            ScalingRule::Power { alpha, .. } => write!(f, "c/F'({alpha}*t)"),
            ScalingRule::PowerOfTime { exponent } => write!(f, "c*t^{exponent}"),
            ScalingRule::LogPower => write!(f, "t^c"),
            ScalingRule::None => write!(f, "none"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LawFamily {
    Exponential {
        rate: f64,
    },
    /// Tail `((α+c)/α)^{-κ}`.
    Lomax {
        kappa: f64,
        alpha: f64,
    },
    /// Tail `min(1, 1/c)`.
    ParetoLog,
}

/// Limit of `P(X_t > scaling(t, c) | τ > t)` as a function of `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitLaw {
    pub family: LawFamily,
    pub scaling: ScalingRule,
}

impl LimitLaw {
    pub fn tail(&self, c: f64) -> f64 {
        if c <= 0.0 {
            return 1.0;
        }
        match self.family {
            LawFamily::Exponential { rate } => (-rate * c).exp(),
            LawFamily::Lomax { kappa, alpha } => ((alpha + c) / alpha).powf(-kappa),
            LawFamily::ParetoLog => (1.0 / c).min(1.0),
        }
    }
}

impl fmt::Display for LimitLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            LawFamily::Exponential { rate } => write!(f, "Exponential(rate={rate})")?,
            LawFamily::Lomax { kappa, alpha } => write!(f, "Lomax(kappa={kappa};scale={alpha})")?,
            LawFamily::ParetoLog => write!(f, "ParetoLog(shape=1;scale=1)")?,
        }
        write!(f, " at a_t={}", self.scaling)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regime {
    AttractedTo { gamma: f64 },
    HeavyScaled(LimitLaw),
    Unknown,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::AttractedTo { .. } => "AttractedTo",
            Regime::HeavyScaled(_) => "HeavyScaled",
            Regime::Unknown => "Unknown",
        }
    }

    /// `γ` for attraction, the law for heavy scaling, empty otherwise.
    pub fn detail(&self) -> String {
        match self {
            Regime::AttractedTo { gamma } => format!("{gamma}"),
            Regime::HeavyScaled(law) => law.to_string(),
            Regime::Unknown => String::new(),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::AttractedTo { gamma } => write!(f, "AttractedTo({gamma})"),
            Regime::HeavyScaled(law) => write!(f, "HeavyScaled({law})"),
            Regime::Unknown => write!(f, "Unknown"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailProfile {
    pub rho_inf: f64,
    pub rho_sup: f64,
    pub beta: f64,
    pub kappa: f64,
    pub regime: Regime,
}

fn heavy_law(mu: &InitialMeasure, alpha: f64, beta: f64, kappa: f64) -> Option<LimitLaw> {
    if beta == 0.0 {
        return Some(if kappa > 0.0 {
            LimitLaw {
                family: LawFamily::Lomax { kappa, alpha },
                scaling: ScalingRule::Linear,
            }
        } else {
            LimitLaw {
                family: LawFamily::ParetoLog,
                scaling: ScalingRule::LogPower,
            }
        });
    }
    if !(beta > 0.0 && beta < 0.5) {
        return None;
    }
    Some(match mu {
        // F(x) = (x/λ)^β: in units of t^{1-β} the rate is βλ^{-β}α^{β-1}.
        InitialMeasure::Weibull { scale, shape } => LimitLaw {
            family: LawFamily::Exponential {
                rate: shape * scale.powf(-shape) * alpha.powf(shape - 1.0),
            },
            scaling: ScalingRule::PowerOfTime { exponent: 1.0 - shape },
        },
        _ => LimitLaw {
            family: LawFamily::Exponential { rate: 1.0 },
            scaling: ScalingRule::Power {
                mu: Box::new(mu.clone()),
                alpha,
            },
        },
    })
}

/// Regime of `μ` under drift `-α`.
pub fn classify(mu: &InitialMeasure, alpha: f64) -> Result<TailProfile> {
    let alpha = DriftModel::new(alpha)?.alpha();
    let (rho_inf, rho_sup) = match exp_rate(mu) {
        Ok(r) => r,
        Err(Error::IndeterminateRate { lo, hi }) => {
            if lo >= alpha {
                (lo, hi)
            } else if hi > alpha {
                return Err(Error::ClassificationRefused {
                    liminf: lo,
                    limsup: hi,
                    alpha,
                });
            } else {
                return Err(Error::IndeterminateRate { lo, hi });
            }
        }
        Err(e) => return Err(e),
    };
    let (beta, kappa) = match indices(mu) {
        Ok(v) => v,
        // indices only matter once the rate vanishes
        Err(_) if rho_inf > 0.0 => (f64::NAN, f64::NAN),
        Err(e) => return Err(e),
    };
    let regime = if rho_inf >= alpha {
        Regime::AttractedTo { gamma: 0.0 }
    } else if rho_inf > 0.0 && rho_inf == rho_sup {
        Regime::AttractedTo { gamma: alpha - rho_inf }
    } else if rho_inf > 0.0 {
        return Err(Error::IndeterminateRate {
            lo: rho_inf,
            hi: rho_sup,
        });
    } else {
        match heavy_law(mu, alpha, beta, kappa) {
            Some(law) => Regime::HeavyScaled(law),
            None => Regime::Unknown,
        }
    };
    Ok(TailProfile {
        rho_inf,
        rho_sup,
        beta,
        kappa,
        regime,
    })
}

fn heavy(mu: &InitialMeasure, alpha: f64) -> Result<LimitLaw> {
    match classify(mu, alpha)?.regime {
        Regime::HeavyScaled(law) => Ok(law),
        other => Err(Error::Regime(other.to_string())),
    }
}

pub fn scaling_rule(mu: &InitialMeasure, alpha: f64) -> Result<ScalingRule> {
    let law = heavy(mu, alpha)?;
    Ok(match law.family {
        LawFamily::Exponential { .. } => ScalingRule::Power {
            mu: Box::new(mu.clone()),
            alpha,
        },
        _ => law.scaling,
    })
}

pub fn limit_law(mu: &InitialMeasure, alpha: f64) -> Result<LimitLaw> {
    heavy(mu, alpha)
}

/// Asymptotic `P_μ(X_t > a, τ > t) ≈ μ([αt + a, ∞))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTailPrediction {
    pub ln_probability: f64,
    /// `a ≥ 3√t`; below that the Gaussian spread is not negligible.
    pub in_asymptotic_range: bool,
}

impl JointTailPrediction {
    pub fn probability(&self) -> f64 {
        self.ln_probability.exp()
    }
}

pub fn joint_tail_prediction(mu: &InitialMeasure, t: f64, a: f64, alpha: f64) -> Result<JointTailPrediction> {
    Ok(JointTailPrediction {
        ln_probability: mu.log_tail(alpha * t + a)?,
        in_asymptotic_range: a >= 3.0 * t.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TailExtension;

    fn gamma_of(mu: &InitialMeasure, alpha: f64) -> Option<f64> {
        match classify(mu, alpha).unwrap().regime {
            Regime::AttractedTo { gamma } => Some(gamma),
            _ => None,
        }
    }

    #[test]
    fn rates() {
        assert_eq!(
            exp_rate(&InitialMeasure::exponential(0.5).unwrap()).unwrap(),
            (0.5, 0.5)
        );
        assert_eq!(
            exp_rate(&InitialMeasure::half_normal(1.0).unwrap()).unwrap(),
            (f64::INFINITY, f64::INFINITY)
        );
        assert_eq!(
            exp_rate(&InitialMeasure::pareto(1.0, 1.0).unwrap()).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn indices_of_catalog() {
        assert_eq!(sv_index(&InitialMeasure::weibull(1.0, 0.3).unwrap()).unwrap(), 0.3);
        assert_eq!(sv_index(&InitialMeasure::half_cauchy(1.0).unwrap()).unwrap(), 0.0);
        assert_eq!(sv_index(&InitialMeasure::half_normal(1.0).unwrap()).unwrap(), 2.0);
    }

    #[test]
    fn numeric_path_agrees_with_analytic() {
        let cases = [
            InitialMeasure::exponential(0.5).unwrap(),
            InitialMeasure::half_normal(1.0).unwrap(),
            InitialMeasure::weibull(1.0, 0.3).unwrap(),
            InitialMeasure::weibull(2.0, 0.7).unwrap(),
            InitialMeasure::pareto(1.0, 1.5).unwrap(),
            InitialMeasure::half_cauchy(1.0).unwrap(),
            InitialMeasure::qsd(0.25, 1.0).unwrap(),
        ];
        for mu in &cases {
            let lt = |x: f64| mu.log_tail(x);
            let (ri, rs) = exp_rate_numeric(&lt).unwrap();
            let (ai, as_) = exp_rate(mu).unwrap();
            for (n, a) in [(ri, ai), (rs, as_)] {
                assert!(n == a || (n - a).abs() < 2e-3 * a.max(1.0), "{mu}: rate {n} vs {a}");
            }
            if ai == 0.0 {
                let (b, k) = tail_indices_numeric(&lt).unwrap();
                assert!((b - sv_index(mu).unwrap()).abs() < 2e-3, "{mu}: beta {b}");
                let ka = rv_index(mu).unwrap();
                assert!(k == ka || (k - ka).abs() < 2e-3, "{mu}: kappa {k}");
            }
        }
    }

    #[test]
    fn tabulated_extensions_classify() {
        let pts: Vec<(f64, f64)> = (0..=20).map(|i| (i as f64, (-(i as f64).powf(0.3)).exp())).collect();
        let mu = InitialMeasure::tabulated(&pts, Some(TailExtension::Stretched { coeff: 1.0, shape: 0.3 })).unwrap();
        let p = classify(&mu, 1.0).unwrap();
        assert!((p.beta - 0.3).abs() < 2e-3, "{p:?}");
        assert!(matches!(
            p.regime,
            Regime::HeavyScaled(LimitLaw {
                family: LawFamily::Exponential { .. },
                ..
            })
        ));

        let pts: Vec<(f64, f64)> = (0..=20).map(|i| (i as f64, 1.0 / (1.0 + i as f64))).collect();
        let mu = InitialMeasure::tabulated(&pts, Some(TailExtension::PowerLaw { index: 1.0 })).unwrap();
        let p = classify(&mu, 1.0).unwrap();
        assert_eq!(p.beta, 0.0);
        assert!((p.kappa - 1.0).abs() < 1e-9);

        let pts: Vec<(f64, f64)> = (0..=20).map(|i| (i as f64, (-0.4 * i as f64).exp())).collect();
        let mu = InitialMeasure::tabulated(&pts, Some(TailExtension::Stretched { coeff: 0.4, shape: 1.0 })).unwrap();
        let g = gamma_of(&mu, 1.0).unwrap();
        assert!((g - 0.6).abs() < 1e-9, "{g}");
    }

    #[test]
    fn oscillating_rate_is_refused() {
        // F(x)/x alternates between about 0.5 and 1.5 on dyadic scales
        let lt = |x: f64| -> Result<f64> {
            let j = x.log2().round() as i64;
            Ok(-x * if j % 2 == 0 { 0.5 } else { 1.5 })
        };
        match exp_rate_numeric(&lt) {
            Err(Error::IndeterminateRate { lo, hi }) => assert!(lo < 1.0 && hi > 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn classification_examples() {
        assert_eq!(gamma_of(&InitialMeasure::exponential(2.0).unwrap(), 1.0), Some(0.0));
        assert_eq!(gamma_of(&InitialMeasure::exponential(0.5).unwrap(), 1.0), Some(0.5));
        assert_eq!(gamma_of(&InitialMeasure::exponential(1.0).unwrap(), 1.0), Some(0.0));
        assert_eq!(
            classify(&InitialMeasure::weibull(1.0, 0.7).unwrap(), 1.0)
                .unwrap()
                .regime,
            Regime::Unknown
        );
        assert!(matches!(
            classify(&InitialMeasure::half_cauchy(1.0).unwrap(), 1.0)
                .unwrap()
                .regime,
            Regime::HeavyScaled(LimitLaw {
                family: LawFamily::Lomax { .. },
                ..
            })
        ));
    }

    #[test]
    fn scaling_examples() {
        let rule = ScalingRule::Power {
            mu: Box::new(InitialMeasure::weibull(1.0, 0.5).unwrap()),
            alpha: 1.0,
        };
        assert!((rule.evaluate(100.0, 1.0).unwrap() - 20.0).abs() < 1e-12);
        let hc = InitialMeasure::half_cauchy(1.0).unwrap();
        assert_eq!(scaling_rule(&hc, 1.0).unwrap().evaluate(50.0, 2.0).unwrap(), 100.0);
        let lt = InitialMeasure::log_tail_law();
        let v = scaling_rule(&lt, 1.0).unwrap().evaluate(10f64.exp(), 1.5).unwrap();
        assert!((v / 15f64.exp() - 1.0).abs() < 1e-12);
        assert!(scaling_rule(&InitialMeasure::exponential(0.5).unwrap(), 1.0).is_err());
    }

    #[test]
    fn limit_law_examples() {
        let w = limit_law(&InitialMeasure::weibull(1.0, 0.3).unwrap(), 1.0).unwrap();
        assert!((w.tail(1.0) - (-0.3f64).exp()).abs() < 1e-15);
        let p = limit_law(&InitialMeasure::pareto(1.0, 1.0).unwrap(), 1.0).unwrap();
        assert!((p.tail(1.0) - 0.5).abs() < 1e-15);
        let l = limit_law(&InitialMeasure::log_tail_law(), 1.0).unwrap();
        assert_eq!(l.tail(2.0), 0.5);
        assert_eq!(l.tail(0.5), 1.0);
    }

    #[test]
    fn weibull_rate_uses_scale() {
        // F(x) = (x/2)^0.25, α = 1.5
        let law = limit_law(&InitialMeasure::weibull(2.0, 0.25).unwrap(), 1.5).unwrap();
        let LawFamily::Exponential { rate } = law.family else {
            panic!()
        };
        let expect = 0.25 * 2f64.powf(-0.25) * 1.5f64.powf(-0.75);
        assert!((rate - expect).abs() < 1e-15);
    }

    #[test]
    fn prediction_examples() {
        let p = joint_tail_prediction(&InitialMeasure::pareto(1.0, 1.0).unwrap(), 100.0, 100.0, 1.0).unwrap();
        assert!((p.probability() - 0.005).abs() < 1e-15);
        assert!(p.in_asymptotic_range);
    }
}
