//! Globally adaptive Gauss–Kronrod (10/21) quadrature.
//!
//! Integrands in this crate routinely live at scales like `e^{-500}`, so the
//! workhorse is [`integrate_log`], which takes `ln f` and returns `ln ∫ f`.
//! The integrand is rescaled by a probed peak before any exponentiation.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_963_046,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerance and budget for one 1-D quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_evals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-9,
            abs: 0.0,
            max_evals: 1_000_000,
        }
    }
}

impl Tolerance {
    pub fn with_rel(rel: f64) -> Self {
        Self { rel, ..Self::default() }
    }

    /// Tolerance for an integral nested inside another one.
    pub fn inner(&self) -> Self {
        Self {
            rel: (self.rel * 1e-2).max(1e-14),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

/// `ln ∫ f` with the relative error of the underlying integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEstimate {
    pub ln_value: f64,
    pub rel_error: f64,
    pub evals: usize,
}

impl LogEstimate {
    pub fn zero() -> Self {
        Self {
            ln_value: f64::NEG_INFINITY,
            rel_error: 0.0,
            evals: 0,
        }
    }

    pub fn value(&self) -> f64 {
        self.ln_value.exp()
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let err = (res_k - res_g) * half;
    let abs_half = half.abs();
    (res_k * half, rescale_error(err, res_abs * abs_half, res_asc * abs_half))
}

/// Integrates `f` over `[breaks[0], breaks.last()]`, starting from the
/// partition given by `breaks` (sorted, finite).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], tol: &Tolerance) -> Result<Estimate> {
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evals = 0usize;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        let (v, e) = gk21(&mut f, a, b);
        evals += 21;
        total += v;
        total_err += e;
        heap.push(Segment {
            a,
            b,
            value: v,
            error: e,
        });
    }
    // Segments too narrow to split keep their error; it is reported, not refined.
    let mut frozen: Vec<Segment> = Vec::new();
    let mut splits = 0usize;
    loop {
        let target = tol.abs.max(tol.rel * total.abs());
        if total_err <= target {
            break;
        }
        if heap.is_empty() {
            return Err(Error::Accuracy {
                value: total,
                error: total_err,
                evals,
            });
        }
        if evals + 42 > tol.max_evals {
            return Err(Error::Accuracy {
                value: total,
                error: total_err,
                evals,
            });
        }
        let seg = heap.pop().expect("nonempty");
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) || (seg.b - seg.a) < 4.0 * f64::EPSILON * mid.abs() {
            frozen.push(seg);
            continue;
        }
        let (v1, e1) = gk21(&mut f, seg.a, mid);
        let (v2, e2) = gk21(&mut f, mid, seg.b);
        evals += 42;
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
        // Re-sum occasionally so the running totals do not drift.
        splits += 1;
        if splits % 64 == 0 {
            total = heap.iter().chain(&frozen).map(|s| s.value).sum();
            total_err = heap.iter().chain(&frozen).map(|s| s.error).sum();
        }
    }
    let value: f64 = heap.iter().chain(&frozen).map(|s| s.value).sum();
    let error = heap.iter().chain(&frozen).map(|s| s.error).sum();
    Ok(Estimate { value, error, evals })
}

/// Integrates `exp(ln_f)` over the partition `breaks`, returning the log of
/// the integral. The integrand is shifted by its largest probed log value,
/// so integrals far below `f64::MIN_POSITIVE` are still resolved.
pub fn integrate_log<F: Fn(f64) -> f64>(ln_f: F, breaks: &[f64], tol: &Tolerance) -> Result<LogEstimate> {
    const PROBES: usize = 24;
    let mut shift = f64::NEG_INFINITY;
    let mut probes = 0usize;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        // Interior probes only: integrable endpoint singularities are common.
        for k in 0..PROBES {
            let x = a + (b - a) * ((k as f64 + 0.5) / PROBES as f64);
            let v = ln_f(x);
            probes += 1;
            if v.is_finite() && v > shift {
                shift = v;
            }
        }
    }
    if shift == f64::NEG_INFINITY {
        return Ok(LogEstimate {
            evals: probes,
            ..LogEstimate::zero()
        });
    }
    let mut evals = probes;
    for _ in 0..4 {
        let est = integrate(|x| (ln_f(x) - shift).exp(), breaks, tol);
        let est = match est {
            Ok(e) => e,
            Err(Error::Accuracy { value, error, evals }) => {
                if value > 0.0 && value.is_finite() {
                    return Err(Error::Accuracy {
                        value: value.ln() + shift,
                        error: error / value,
                        evals,
                    });
                }
                return Err(Error::Accuracy { value, error, evals });
            }
            Err(e) => return Err(e),
        };
        evals += est.evals;
        if !est.value.is_finite() || est.value > 1e250 {
            // Probing missed a much higher peak; rescale and retry.
            shift += if est.value.is_finite() { est.value.ln() } else { 600.0 };
            continue;
        }
        if est.value <= 0.0 {
            return Ok(LogEstimate {
                evals,
                ..LogEstimate::zero()
            });
        }
        return Ok(LogEstimate {
            ln_value: est.value.ln() + shift,
            rel_error: est.error / est.value,
            evals,
        });
    }
    Err(Error::Accuracy {
        value: f64::INFINITY,
        error: f64::INFINITY,
        evals,
    })
}

/// Combines log-scale partial integrals into one.
pub fn log_sum(parts: &[LogEstimate]) -> LogEstimate {
    let peak = parts.iter().map(|p| p.ln_value).fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return LogEstimate {
            evals: parts.iter().map(|p| p.evals).sum(),
            ..LogEstimate::zero()
        };
    }
    let mut sum = 0.0;
    let mut err = 0.0;
    for p in parts {
        let w = (p.ln_value - peak).exp();
        sum += w;
        err += w * p.rel_error;
    }
    LogEstimate {
        ln_value: peak + sum.ln(),
        rel_error: err / sum,
        evals: parts.iter().map(|p| p.evals).sum(),
    }
}

/// Sorts, deduplicates and clips candidate breakpoints to `[lo, hi]`.
pub fn partition(lo: f64, hi: f64, candidates: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = candidates
        .into_iter()
        .filter(|x| x.is_finite() && *x > lo && *x < hi)
        .collect();
    v.push(lo);
    v.push(hi);
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * a.abs().max(b.abs()).max(1e-300));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let est = integrate(|x| 3.0 * x * x - x + 1.0, &[0.0, 2.0], &Tolerance::default()).unwrap();
        assert!((est.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 x^{-0.7} dx = 1/0.3
        let est = integrate(|x| x.powf(-0.7), &[0.0, 1.0], &Tolerance::with_rel(1e-8)).unwrap();
        assert!((est.value - 1.0 / 0.3).abs() < 1e-7 * (1.0 / 0.3), "{est:?}");
    }

    #[test]
    fn log_scaled_gaussian_far_below_underflow() {
        // ∫ exp(-2000 - (x-3)²/2) dx = e^{-2000} √(2π)
        let est = integrate_log(
            |x| -2000.0 - 0.5 * (x - 3.0) * (x - 3.0),
            &[-40.0, 3.0, 46.0],
            &Tolerance::default(),
        )
        .unwrap();
        let exact = -2000.0 + 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((est.ln_value - exact).abs() < 1e-10);
    }

    #[test]
    fn narrow_peak_missed_by_probes_is_recovered() {
        let est = integrate_log(
            |x| 800.0 * (-(x - 0.5013).powi(2) * 1e4).exp() - 5.0,
            &[0.0, 1.0],
            &Tolerance::default(),
        );
        assert!(est.is_ok());
    }

    #[test]
    fn budget_exhaustion_reports_partial_value() {
        let tol = Tolerance {
            rel: 1e-14,
            abs: 0.0,
            max_evals: 200,
        };
        match integrate(|x| (1.0 / x).sin(), &[1e-6, 1.0], &tol) {
            Err(Error::Accuracy { evals, .. }) => assert!(evals <= 200),
            other => panic!("expected accuracy error, got {other:?}"),
        }
    }

    #[test]
    fn partition_clips_and_sorts() {
        let p = partition(0.0, 10.0, [5.0, -1.0, 12.0, 5.0, 2.0, f64::NAN]);
        assert_eq!(p, vec![0.0, 2.0, 5.0, 10.0]);
    }
}
