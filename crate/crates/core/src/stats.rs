//! Distances and bands between analytic, quadrature and empirical laws.

use crate::error::{Error, Result};
use crate::kernel::{ConditionedEstimate, Kernel};
use crate::model::{InitialMeasure, QsdDensity};
use crate::simulate::EmpiricalSample;
use crate::tails::ScalingRule;

/// Quantile probes per continuous side in [`ks_distance`].
pub const KS_GRID: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfKind {
    Analytic,
    Quadrature,
    Empirical,
}

/// A distribution function on `[0, ∞)`.
pub trait CdfView {
    fn evaluate(&self, y: f64) -> f64;

    fn kind(&self) -> CdfKind;

    /// `P(X < y)`; equal to `evaluate` wherever the law has no atom.
    fn evaluate_left(&self, y: f64) -> f64 {
        self.evaluate(y)
    }

    /// Atoms, for laws that have them.
    fn jumps(&self) -> &[f64] {
        &[]
    }

    /// Smallest probed `y` with `evaluate(y) ≥ p`, by bisection.
    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        let mut hi = 1.0;
        while self.evaluate(hi) < p {
            hi *= 2.0;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.evaluate(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// A continuous cdf given by a closure.
pub struct FnCdf<F: Fn(f64) -> f64> {
    f: F,
    kind: CdfKind,
}

impl<F: Fn(f64) -> f64> FnCdf<F> {
    pub fn analytic(f: F) -> Self {
        Self {
            f,
            kind: CdfKind::Analytic,
        }
    }
}

impl<F: Fn(f64) -> f64> CdfView for FnCdf<F> {
    fn evaluate(&self, y: f64) -> f64 {
        (self.f)(y)
    }

    fn kind(&self) -> CdfKind {
        self.kind
    }
}

/// Unit mass at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMass {
    at: [f64; 1],
}

impl PointMass {
    pub fn new(x: f64) -> Self {
        Self { at: [x] }
    }
}

impl CdfView for PointMass {
    fn evaluate(&self, y: f64) -> f64 {
        if y >= self.at[0] {
            1.0
        } else {
            0.0
        }
    }

    fn evaluate_left(&self, y: f64) -> f64 {
        if y > self.at[0] {
            1.0
        } else {
            0.0
        }
    }

    fn kind(&self) -> CdfKind {
        CdfKind::Analytic
    }

    fn jumps(&self) -> &[f64] {
        &self.at
    }
}

impl CdfView for QsdDensity {
    fn evaluate(&self, y: f64) -> f64 {
        self.cdf(y)
    }

    fn kind(&self) -> CdfKind {
        CdfKind::Analytic
    }
}

impl CdfView for InitialMeasure {
    fn evaluate(&self, y: f64) -> f64 {
        if y < self.support().0 {
            return 0.0;
        }
        self.log_tail(y).map(|l| -l.exp_m1()).unwrap_or(f64::NAN)
    }

    fn evaluate_left(&self, y: f64) -> f64 {
        match self.atom() {
            Some(x0) if y <= x0 => 0.0,
            _ => self.evaluate(y),
        }
    }

    fn kind(&self) -> CdfKind {
        CdfKind::Analytic
    }

    fn jumps(&self) -> &[f64] {
        match self {
            InitialMeasure::Dirac { x0 } => std::slice::from_ref(x0),
            _ => &[],
        }
    }
}

impl CdfView for ConditionedEstimate {
    fn evaluate(&self, y: f64) -> f64 {
        self.cdf(y)
    }

    fn kind(&self) -> CdfKind {
        CdfKind::Quadrature
    }

    fn quantile(&self, p: f64) -> f64 {
        ConditionedEstimate::quantile(self, p)
    }
}

impl CdfView for EmpiricalSample {
    fn evaluate(&self, y: f64) -> f64 {
        self.cdf(y)
    }

    fn evaluate_left(&self, y: f64) -> f64 {
        self.cdf_left(y)
    }

    fn kind(&self) -> CdfKind {
        CdfKind::Empirical
    }

    fn jumps(&self) -> &[f64] {
        &self.values
    }
}

fn probes(view: &dyn CdfView, out: &mut Vec<f64>) {
    out.extend_from_slice(view.jumps());
    if view.kind() != CdfKind::Empirical {
        out.extend(
            (0..=KS_GRID)
                .map(|i| view.quantile(i as f64 / KS_GRID as f64))
                .filter(|y| y.is_finite()),
        );
    }
}

/// `sup_y |A(y) - B(y)|` over both sides' atoms and a quantile grid of each
/// continuous side, with left limits checked at every probe.
pub fn ks_distance(a: &dyn CdfView, b: &dyn CdfView) -> f64 {
    let mut ys = Vec::new();
    probes(a, &mut ys);
    probes(b, &mut ys);
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    ys.iter()
        .map(|&y| {
            let right = (a.evaluate(y) - b.evaluate(y)).abs();
            let left = (a.evaluate_left(y) - b.evaluate_left(y)).abs();
            right.max(left)
        })
        .fold(0.0, f64::max)
        .min(1.0)
}

/// Dvoretzky–Kiefer–Wolfowitz half-width for `n` samples.
pub fn dkw_band(n: usize, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * n as f64)).sqrt()
}

/// `(c, fraction of the sample above rule(t, c))` for each `c`.
pub fn scaled_tail_curve(
    sample: &EmpiricalSample,
    rule: &ScalingRule,
    t: f64,
    c_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if sample.values.is_empty() {
        return Err(Error::EmptySample);
    }
    c_grid
        .iter()
        .map(|&c| Ok((c, sample.exceedance(rule.evaluate(t, c)?))))
        .collect()
}

/// `(c, P_μ(X_t > rule(t, c) | τ > t))` by kernel quadrature.
pub fn scaled_tail_curve_quadrature(
    kernel: &Kernel,
    mu: &InitialMeasure,
    rule: &ScalingRule,
    t: f64,
    c_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let s = kernel.survival(mu, t)?;
    c_grid
        .iter()
        .map(|&c| {
            let j = kernel.joint_tail(mu, t, rule.evaluate(t, c)?)?;
            Ok((c, (j.ln_value - s.ln_value).exp().min(1.0)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::SurvivalCi;

    fn sample(values: Vec<f64>) -> EmpiricalSample {
        EmpiricalSample {
            effective_size: values.len() as f64,
            values,
            survival: SurvivalCi::binomial(1, 1),
            t: 1.0,
        }
    }

    #[test]
    fn ks_examples() {
        let e1 = FnCdf::analytic(|y: f64| -(-y).exp_m1());
        let e2 = FnCdf::analytic(|y: f64| -(-2.0 * y).exp_m1());
        assert_eq!(ks_distance(&e1, &e1), 0.0);
        assert!((ks_distance(&e1, &e2) - 0.25).abs() < 1e-9);
        let unif = FnCdf::analytic(|y: f64| y.clamp(0.0, 1.0));
        assert_eq!(ks_distance(&PointMass::new(0.0), &unif), 1.0);
        assert_eq!(ks_distance(&unif, &PointMass::new(0.0)), 1.0);
    }

    #[test]
    fn empirical_ks_is_exact() {
        // sample {0.25, 0.5, 0.75} against U(0,1): sup at the left limit of 0.25 or right of 0.75
        let s = sample(vec![0.25, 0.5, 0.75]);
        let unif = FnCdf::analytic(|y: f64| y.clamp(0.0, 1.0));
        assert!((ks_distance(&s, &unif) - 0.25).abs() < 1e-12);
        let t = sample(vec![0.25, 0.5, 0.75]);
        assert_eq!(ks_distance(&s, &t), 0.0);
    }

    #[test]
    fn dkw_values() {
        assert!((dkw_band(1_000_000, 0.99) - 1.628e-3).abs() < 1e-6);
        assert!((dkw_band(100, 0.95) - 0.1358).abs() < 1e-4);
        assert!((dkw_band(400, 0.95) * 2.0 - dkw_band(100, 0.95)).abs() < 1e-15);
    }

    #[test]
    fn step_curve() {
        let t = 50.0;
        let s = sample(vec![t; 10]);
        let curve = scaled_tail_curve(&s, &ScalingRule::Linear, t, &[0.5, 0.99, 1.01, 2.0]).unwrap();
        let fr: Vec<f64> = curve.iter().map(|p| p.1).collect();
        assert_eq!(fr, vec![1.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            scaled_tail_curve(&sample(vec![]), &ScalingRule::Linear, t, &[1.0]),
            Err(Error::EmptySample)
        ));
    }
}
