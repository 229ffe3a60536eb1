//! Log-domain accumulation.

/// Streaming `log Σ exp(x_i)` that keeps a running maximum and rescales the
/// partial sum whenever the maximum moves. `-inf` terms are skipped.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            // sum is 0 when max is still -inf
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    /// Largest term seen so far.
    #[inline]
    pub fn max(&self) -> f64 {
        self.max
    }

    #[inline]
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl FromIterator<f64> for LogSumExp {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = LogSumExp::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// `log Σ exp(x_i)` over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<LogSumExp>().value()
}

/// `log Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// `log n!`
pub fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_naive(xs in proptest::collection::vec(-30f64..30f64, 1..50)) {
            let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
            let got = log_sum_exp(&xs);
            prop_assert!((naive - got).abs() < 1e-12 * naive.abs().max(1.0));
        }

        #[test]
        fn order_insensitive(mut xs in proptest::collection::vec(-700f64..700f64, 1..40)) {
            let a = log_sum_exp(&xs);
            xs.reverse();
            let b = log_sum_exp(&xs);
            prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn neg_infinity_terms() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 2.0]), 2.0);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn huge_magnitudes_do_not_overflow() {
        let v = log_sum_exp(&[-1e5, -1e5]);
        assert!((v - (-1e5 + 2f64.ln())).abs() < 1e-9);
    }
}
