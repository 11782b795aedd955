//! Small numerical helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `log σ(x) = -log(1 + e^{-x})`, stable for large |x|.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Returns `-inf` for an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    #[inline]
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY || !self.max.is_finite() {
            self.max
        } else {
            self.max + self.sum.ln()
        }
    }
}

#[inline]
pub fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("valid normal").cdf(x)
}

pub fn normal_quantile(p: f64, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("valid normal").inverse_cdf(p)
}

/// Two-sided Student-t critical value, e.g. `t_critical(0.95, 4)`.
pub fn t_critical(confidence: f64, dof: usize) -> f64 {
    let t = StudentsT::new(0.0, 1.0, dof as f64).expect("valid dof");
    t.inverse_cdf(0.5 + confidence / 2.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Linear-interpolation quantile of already sorted values (R type 7).
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn ln_choose(n: u32, k: u32) -> f64 {
    statrs::function::factorial::ln_binomial(n as u64, k as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_sigmoid_is_stable_at_extremes() {
        assert_abs_diff_eq!(log_sigmoid(40.0), 0.0, epsilon = 1e-17);
        assert_abs_diff_eq!(log_sigmoid(-800.0), -800.0, epsilon = 1e-9);
        assert!(log_sigmoid(800.0).is_finite());
        assert_abs_diff_eq!(log_sigmoid(0.0), -std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(sigmoid(1.0), 0.731_058_578_630_004_9, epsilon = 1e-15);
    }

    #[test]
    fn streaming_logsumexp_matches_batch() {
        let xs = [-3.0, 10.0, 2.5, -1000.0, 9.99, f64::NEG_INFINITY];
        let mut acc = LogSumExp::default();
        xs.iter().for_each(|&x| acc.push(x));
        assert_abs_diff_eq!(acc.value(), logsumexp(&xs), epsilon = 1e-12);
        assert_eq!(LogSumExp::default().value(), f64::NEG_INFINITY);
    }

    #[test]
    fn logsumexp_shift_invariance() {
        let xs = [0.3, -1.2, 4.0];
        let shifted: Vec<f64> = xs.iter().map(|x| x + 500.0).collect();
        assert_abs_diff_eq!(logsumexp(&shifted) - 500.0, logsumexp(&xs), epsilon = 1e-12);
    }

    #[test]
    fn type7_quantile() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(sorted_quantile(&s, 0.5), 2.5);
        assert_eq!(sorted_quantile(&s, 0.0), 1.0);
        assert_eq!(sorted_quantile(&s, 1.0), 4.0);
    }
}
