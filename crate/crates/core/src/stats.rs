//! Small statistical helpers: binomial confidence intervals, the Gaussian
//! 10-90 width factor, chi-square tail probabilities, and a monotone cubic
//! interpolant used for level crossings on S-curves.

use statrs::distribution::{Beta, ChiSquared, Continuous, ContinuousCDF};

use crate::error::{KerrError, Result};

/// z(0.9) - z(0.1): converts a Gaussian RMS into a 10-90 width.
pub const GAUSS_10_90: f64 = 2.563_103_131_089_2;

/// Beta quantile polished by Newton iterations; the library inverse alone is
/// only accurate to about 1e-5.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let dist = Beta::new(a, b).unwrap();
    let mut x = dist.inverse_cdf(p);
    for _ in 0..4 {
        let pdf = dist.pdf(x);
        if !pdf.is_finite() || pdf <= 0.0 {
            break;
        }
        x = (x - (dist.cdf(x) - p) / pdf).clamp(0.0, 1.0);
    }
    x
}

/// Exact (Clopper-Pearson) two-sided binomial confidence interval.
pub fn binomial_ci(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    assert!(trials > 0 && successes <= trials);
    let alpha = 1.0 - confidence;
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        beta_quantile(k, n - k + 1.0, alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        beta_quantile(k + 1.0, n - k, 1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Upper tail probability of a chi-square variate with `dof` degrees of
/// freedom.
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    1.0 - ChiSquared::new(dof).unwrap().cdf(x)
}

/// Pool-adjacent-violators isotonic regression for a non-increasing sequence,
/// weighted by counts.
pub fn pav_non_increasing(ys: &[f64], weights: &[f64]) -> Vec<f64> {
    // Work on the negated sequence as a non-decreasing problem.
    let mut blocks: Vec<(f64, f64)> = Vec::with_capacity(ys.len()); // (mean, weight)
    let mut sizes: Vec<usize> = Vec::with_capacity(ys.len());
    for (&y, &w) in ys.iter().zip(weights) {
        blocks.push((-y, w));
        sizes.push(1);
        while blocks.len() > 1 {
            let last = blocks.len() - 1;
            if blocks[last - 1].0 <= blocks[last].0 {
                break;
            }
            let (m2, w2) = blocks.pop().unwrap();
            let s2 = sizes.pop().unwrap();
            let (m1, w1) = blocks.pop().unwrap();
            let s1 = sizes.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w));
            sizes.push(s1 + s2);
        }
    }
    let mut out = Vec::with_capacity(ys.len());
    for ((m, _), s) in blocks.iter().zip(&sizes) {
        out.extend(std::iter::repeat(-m).take(*s));
    }
    out
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
/// Input abscissae must be strictly increasing; ordinates monotone.
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(KerrError::DegenerateData(
                "need at least two interpolation points".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KerrError::DegenerateData(
                "abscissae must be strictly increasing".into(),
            ));
        }
        let n = xs.len();
        let deltas: Vec<f64> = (0..n - 1)
            .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = deltas[0];
        slopes[n - 1] = deltas[n - 2];
        for i in 1..n - 1 {
            if deltas[i - 1] * deltas[i] <= 0.0 {
                slopes[i] = 0.0;
            } else {
                // Harmonic mean preserves monotonicity.
                let w1 = 2.0 * (xs[i + 1] - xs[i]) + (xs[i] - xs[i - 1]);
                let w2 = (xs[i + 1] - xs[i]) + 2.0 * (xs[i] - xs[i - 1]);
                slopes[i] = (w1 + w2) / (w1 / deltas[i - 1] + w2 / deltas[i]);
            }
        }
        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            slopes,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = match self.xs.partition_point(|&xi| xi <= x) {
            0 => 0,
            p => p - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * (t3 - t2)
    }

    /// Abscissa where the interpolant crosses `level`, by bisection. The
    /// ordinates must bracket the level.
    pub fn crossing(&self, level: f64) -> Result<f64> {
        let n = self.xs.len();
        let (y0, y1) = (self.ys[0], self.ys[n - 1]);
        let (lo_y, hi_y) = if y0 < y1 { (y0, y1) } else { (y1, y0) };
        if !(lo_y <= level && level <= hi_y) {
            return Err(KerrError::RangeNotSpanned { lo: lo_y, hi: hi_y });
        }
        let rising = y1 >= y0;
        let (mut lo, mut hi) = (self.xs[0], self.xs[n - 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = self.eval(mid);
            let below = if rising { v < level } else { v > level };
            if below {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}
