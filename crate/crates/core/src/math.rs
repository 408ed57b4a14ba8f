//! Scalar numerics shared by every module. All probabilities are handled in
//! the natural-log domain.

/// Logistic function `1 / (1 + e^-z)`, evaluated without overflow for any
/// finite `z`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^a)` via `max(a, 0) + log1p(e^-|a|)`.
#[inline]
pub fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

/// `log σ(z) = -softplus(-z)`.
#[inline]
pub fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

/// Inverse of [`sigmoid`]; `p` must lie in (0, 1).
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log Σ e^v`, `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let mut acc = LogSumExp::new();
    for &v in values {
        acc.push(v);
    }
    acc.value()
}

/// Streaming log-sum-exp with a running max shift and Neumaier-compensated
/// accumulation of the shifted terms.
///
/// Suitable for millions of terms in the -100 nat range, where a naive
/// `exp` sum underflows to zero.
#[derive(Debug, Clone)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
    compensation: f64,
    count: u64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
            compensation: 0.0,
            count: 0,
        }
    }

    pub fn push(&mut self, v: f64) {
        self.count += 1;
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            // rescale everything accumulated so far to the new shift
            let scale = (self.max - v).exp();
            self.sum *= scale;
            self.compensation *= scale;
            self.max = v;
        }
        self.add_shifted((v - self.max).exp());
    }

    fn add_shifted(&mut self, term: f64) {
        let t = self.sum + term;
        if self.sum.abs() >= term.abs() {
            self.compensation += (self.sum - t) + term;
        } else {
            self.compensation += (term - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `log Σ e^v` over everything pushed.
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.max + (self.sum + self.compensation).ln()
    }

    /// `log mean e^v`; `-inf` when nothing was pushed.
    pub fn mean_value(&self) -> f64 {
        if self.count == 0 {
            return f64::NEG_INFINITY;
        }
        self.value() - (self.count as f64).ln()
    }
}

/// Compensated (Neumaier) sum of a sequence of reals.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(50.0) - 1.0).abs() <= 1e-15);
        // 1 / (1 + e)
        assert!((sigmoid(-1.0) - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!(sigmoid(-700.0) > 0.0);
        assert!(sigmoid(700.0) <= 1.0);
        assert!(sigmoid(-700.0).is_finite() && sigmoid(700.0).is_finite());
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
        for &a in &[-30.0, -2.5, -0.1, 0.3, 4.0, 25.0] {
            let naive = (1.0 + f64::exp(a)).ln();
            assert!((softplus(a) - naive).abs() < 1e-12, "a = {a}");
        }
    }

    #[test]
    fn log_sigmoid_matches_log_of_sigmoid() {
        for &z in &[-20.0, -1.0, 0.0, 2.0, 15.0] {
            assert!((log_sigmoid(z) - sigmoid(z).ln()).abs() < 1e-12);
        }
        assert!((log_sigmoid(2.0) + 0.126_928_011_042_972_6).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_large_and_small() {
        let v = [1234.0, 1232.0];
        let expected = 1232.0 + (2f64.exp() + 1.0).ln();
        assert!((log_sum_exp(&v) - expected).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let tiny = [-1000.0; 4];
        assert!((log_sum_exp(&tiny) - (-1000.0 + 4f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn log_mean_exp_over_many_terms() {
        let mut acc = LogSumExp::new();
        for k in 0..1_000_000u32 {
            acc.push(-100.0 + if k % 2 == 0 { 0.0 } else { 2f64.ln() });
        }
        let expected = -100.0 + 1.5f64.ln();
        assert!((acc.mean_value() - expected).abs() < 1e-10);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1e16];
        v.extend(std::iter::repeat_n(1.0, 1000));
        v.push(-1e16);
        assert_eq!(compensated_sum(v), 1000.0);
    }
}
