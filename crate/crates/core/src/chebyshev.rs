//! Piecewise Chebyshev interpolation with an exact running integral.
//!
//! Conditional densities are expensive to evaluate (each value is itself a
//! quadrature), so they are sampled once on adaptively refined panels and
//! the cdf is read off the antiderivative of the interpolant.

use crate::error::{Error, Result};
use std::f64::consts::PI;

const DEGREE: usize = 32;

#[derive(Debug, Clone)]
struct Panel {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
    anti: Vec<f64>,
    anti_at_left: f64,
    cum: f64,
}

/// Interpolant of a nonnegative function on `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct PiecewiseChebyshev {
    panels: Vec<Panel>,
    total: f64,
    error: f64,
}

fn lobatto(n: usize) -> Vec<f64> {
    (0..=n).map(|j| (PI * j as f64 / n as f64).cos()).collect()
}

fn coefficients(values: &[f64]) -> Vec<f64> {
    let n = values.len() - 1;
    let mut c = vec![0.0; n + 1];
    for (k, ck) in c.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, v) in values.iter().enumerate() {
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            s += w * v * (PI * (j * k) as f64 / n as f64).cos();
        }
        *ck = 2.0 * s / n as f64;
    }
    c[0] *= 0.5;
    c[n] *= 0.5;
    c
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ck in c.iter().skip(1).rev() {
        let b0 = ck + 2.0 * x * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c[0] + x * b1 - b2
}

fn antiderivative(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut d = vec![0.0; n + 1];
    for (k, &ck) in c.iter().enumerate() {
        match k {
            0 => d[1] += ck,
            1 => d[2] += ck / 4.0,
            _ => {
                d[k + 1] += ck / (2.0 * (k + 1) as f64);
                d[k - 1] -= ck / (2.0 * (k - 1) as f64);
            }
        }
    }
    d
}

impl PiecewiseChebyshev {
    /// Samples `f` on panels refined from `breaks` until the degree-16
    /// interpolant predicts the odd nodes of the degree-32 one within `abs_tol`.
    pub fn build<F: FnMut(f64) -> Result<f64>>(
        mut f: F,
        breaks: &[f64],
        abs_tol: f64,
        max_panels: usize,
    ) -> Result<Self> {
        let nodes = lobatto(DEGREE);
        let mut stack: Vec<(f64, f64)> = breaks.windows(2).rev().map(|w| (w[0], w[1])).collect();
        let mut done: Vec<(f64, f64, Vec<f64>, f64)> = Vec::new();
        let span = breaks.last().unwrap() - breaks[0];
        while let Some((a, b)) = stack.pop() {
            if !(b > a) {
                continue;
            }
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            let mut values = Vec::with_capacity(DEGREE + 1);
            for x in &nodes {
                let v = f(mid + half * x)?;
                values.push(v);
            }
            let coarse: Vec<f64> = values.iter().step_by(2).copied().collect();
            let cc = coefficients(&coarse);
            let mut err: f64 = 0.0;
            for j in (1..DEGREE).step_by(2) {
                err = err.max((clenshaw(&cc, nodes[j]) - values[j]).abs());
            }
            let too_small = (b - a) <= 1e-13 * span.max(mid.abs());
            if err <= abs_tol || too_small {
                done.push((a, b, values, err * (b - a)));
            } else {
                if done.len() + stack.len() > max_panels {
                    return Err(Error::Accuracy {
                        value: f64::NAN,
                        error: err,
                        evals: (done.len() + stack.len()) * (DEGREE + 1),
                    });
                }
                stack.push((mid, b));
                stack.push((a, mid));
            }
        }
        done.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut panels = Vec::with_capacity(done.len());
        let mut cum = 0.0;
        let mut error = 0.0;
        for (a, b, values, e) in done {
            let coeffs = coefficients(&values);
            let anti = antiderivative(&coeffs);
            let anti_at_left = clenshaw(&anti, -1.0);
            let mass = (clenshaw(&anti, 1.0) - anti_at_left) * 0.5 * (b - a);
            panels.push(Panel {
                a,
                b,
                coeffs,
                anti,
                anti_at_left,
                cum,
            });
            cum += mass;
            error += e;
        }
        Ok(Self {
            panels,
            total: cum,
            error,
        })
    }

    fn locate(&self, y: f64) -> Option<&Panel> {
        if self.panels.is_empty() || y < self.panels[0].a || y > self.panels.last().unwrap().b {
            return None;
        }
        let i = self.panels.partition_point(|p| p.b < y);
        self.panels.get(i)
    }

    pub fn lo(&self) -> f64 {
        self.panels.first().map_or(0.0, |p| p.a)
    }

    pub fn hi(&self) -> f64 {
        self.panels.last().map_or(0.0, |p| p.b)
    }

    pub fn value(&self, y: f64) -> f64 {
        match self.locate(y) {
            Some(p) => {
                let x = (2.0 * y - p.a - p.b) / (p.b - p.a);
                clenshaw(&p.coeffs, x.clamp(-1.0, 1.0))
            }
            None => 0.0,
        }
    }

    /// `∫_lo^y` of the interpolant.
    pub fn integral_to(&self, y: f64) -> f64 {
        if y <= self.lo() {
            return 0.0;
        }
        match self.locate(y) {
            Some(p) => {
                let x = ((2.0 * y - p.a - p.b) / (p.b - p.a)).clamp(-1.0, 1.0);
                p.cum + (clenshaw(&p.anti, x) - p.anti_at_left) * 0.5 * (p.b - p.a)
            }
            None => self.total,
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Accumulated interpolation error bound for the integral.
    pub fn error(&self) -> f64 {
        self.error
    }

    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }
}
