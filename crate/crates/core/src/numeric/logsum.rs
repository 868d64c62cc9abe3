//! Log-domain accumulation.

/// Streaming log-sum-exp: holds log(sum of e^x) without materializing e^x.
#[derive(Clone, Copy, Debug)]
pub struct LogSum {
    max: f64,
    acc: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSum {
    pub const fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            acc: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.acc += (x - self.max).exp();
        } else {
            self.acc = self.acc * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn merge(&mut self, other: &LogSum) {
        if other.acc == 0.0 {
            return;
        }
        if self.acc == 0.0 {
            *self = *other;
            return;
        }
        if other.max <= self.max {
            self.acc += other.acc * (other.max - self.max).exp();
        } else {
            self.acc = self.acc * (self.max - other.max).exp() + other.acc;
            self.max = other.max;
        }
    }

    /// log of the accumulated sum; -inf when empty.
    #[inline]
    pub fn value(&self) -> f64 {
        if self.acc == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }
}

/// log(e^a + e^b).
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// log(e^a - e^b) for a >= b.
#[inline]
pub fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + (-(b - a).exp()).ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut s = LogSum::new();
    for &x in xs {
        s.add(x);
    }
    s.value()
}

/// Prefix log-sums: out[k] = log sum_{j<k} e^{xs[j]}, length xs.len()+1.
pub fn prefix_log_sums(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len() + 1);
    let mut s = LogSum::new();
    out.push(s.value());
    for &x in xs {
        s.add(x);
        out.push(s.value());
    }
    out
}

/// Suffix log-sums: out[k] = log sum_{j>=k} e^{xs[j]}, length xs.len()+1.
pub fn suffix_log_sums(xs: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; xs.len() + 1];
    let mut s = LogSum::new();
    for k in (0..xs.len()).rev() {
        s.add(xs[k]);
        out[k] = s.value();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sum_for_moderate_values() {
        let xs = [0.3, -1.2, 2.5, 0.0, -7.0];
        let direct: f64 = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn survives_huge_exponents() {
        let xs = [800.0, 800.0, 799.0];
        let v = log_sum_exp(&xs);
        let expect = 800.0 + (2.0 + (-1.0f64).exp()).ln();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_is_negative_infinity() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_add(f64::NEG_INFINITY, 1.5), 1.5);
    }

    #[test]
    fn merge_equals_sequential() {
        let mut a = LogSum::new();
        let mut b = LogSum::new();
        let mut c = LogSum::new();
        for i in 0..10 {
            let x = (i as f64 * 0.77).sin() * 30.0;
            if i % 2 == 0 {
                a.add(x)
            } else {
                b.add(x)
            }
            c.add(x);
        }
        a.merge(&b);
        assert!((a.value() - c.value()).abs() < 1e-12);
    }

    #[test]
    fn log_sub_inverts_log_add() {
        let s = log_add(2.0, 1.0);
        assert!((log_sub(s, 1.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn prefix_and_suffix_agree_with_totals() {
        let xs = [1.0, 2.0, -3.0];
        let p = prefix_log_sums(&xs);
        let s = suffix_log_sums(&xs);
        assert_eq!(p[0], f64::NEG_INFINITY);
        assert!((p[3] - s[0]).abs() < 1e-14);
        assert!((s[2] - (-3.0)).abs() < 1e-14);
    }
}
