//! Quantiles of the cumulative discounted cost, with a Weibull model of the
//! upper tail.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::perf::empirical_quantile;

pub const MIN_TAIL_SAMPLES: usize = 30;
pub const DEFAULT_TAIL_THRESHOLD: f64 = 0.8;

/// Weibull fit of the exceedances over `threshold_value`, the empirical
/// `threshold_q` quantile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeibullTail {
    pub shape: f64,
    pub scale: f64,
    pub threshold_q: f64,
    pub threshold_value: f64,
}

/// Coefficient of variation of a Weibull with shape `k`.
fn weibull_cv(k: f64) -> f64 {
    let g1 = gamma(1.0 + 1.0 / k);
    let g2 = gamma(1.0 + 2.0 / k);
    (g2 / (g1 * g1) - 1.0).max(0.0).sqrt()
}

impl WeibullTail {
    /// Method-of-moments fit on the shifted exceedances above the empirical
    /// `threshold_q` quantile. `None` when the tail is degenerate.
    pub fn fit(samples: &[f64], threshold_q: f64) -> Option<WeibullTail> {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let u = empirical_quantile(&s, threshold_q).ok()?;
        let exc: Vec<f64> = s.iter().filter(|x| **x > u).map(|x| x - u).collect();
        if exc.len() < 2 {
            return None;
        }
        let n = exc.len() as f64;
        let mean = exc.iter().sum::<f64>() / n;
        let var = exc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if !(mean > 0.0 && var > 0.0) {
            return None;
        }
        let cv = var.sqrt() / mean;
        // cv is decreasing in k
        let (mut lo, mut hi) = (0.05_f64, 100.0_f64);
        if cv >= weibull_cv(lo) {
            hi = lo;
        } else if cv <= weibull_cv(hi) {
            lo = hi;
        } else {
            for _ in 0..200 {
                let mid = (lo * hi).sqrt();
                if weibull_cv(mid) > cv {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        let shape = 0.5 * (lo + hi);
        let scale = mean / gamma(1.0 + 1.0 / shape);
        Some(WeibullTail { shape, scale, threshold_q, threshold_value: u })
    }

    /// Quantile `w > threshold_q` of the full distribution implied by the tail.
    pub fn quantile(&self, w: f64) -> f64 {
        let p = (1.0 - w) / (1.0 - self.threshold_q);
        self.threshold_value + self.scale * (-p.ln()).max(0.0).powf(1.0 / self.shape)
    }
}

/// `inf{x : P(X <= x) >= w}`: empirical below the tail threshold, Weibull
/// tail above it, empirical again when the tail fit is degenerate.
pub fn cumulative_cost_quantile(samples: &[f64], w: f64, threshold_q: f64) -> Result<f64> {
    if samples.len() < MIN_TAIL_SAMPLES {
        return Err(Error::TooFewSamples { need: MIN_TAIL_SAMPLES, got: samples.len() });
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidParameter(format!("quantile level {w} outside [0,1]")));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    if w <= threshold_q || w >= 1.0 {
        return empirical_quantile(&s, w);
    }
    match WeibullTail::fit(&s, threshold_q) {
        Some(t) => Ok(t.quantile(w)),
        None => empirical_quantile(&s, w),
    }
}
