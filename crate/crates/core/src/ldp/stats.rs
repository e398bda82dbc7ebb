//! Exact binomial intervals.

/// Two-sided confidence level of every reported interval.
pub const CONFIDENCE: f64 = 0.95;

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if libm::fabs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..100_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if libm::fabs(del - 1.0) < 1e-15 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * libm::log(x) + b * libm::log1p(-x) - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        libm::exp(ln_front) * beta_cf(a, b, x) / a
    } else {
        1.0 - libm::exp(ln_front) * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Quantile of the Beta(a, b) distribution by bisection.
pub fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact (Clopper–Pearson) two-sided interval for `hits` successes in `n` trials.
pub fn clopper_pearson(hits: usize, n: usize, confidence: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let alpha = 1.0 - confidence;
    let (k, n) = (hits as f64, n as f64);
    let lo = if hits == 0 {
        0.0
    } else {
        beta_quantile(k, n - k + 1.0, 0.5 * alpha)
    };
    let hi = if hits as f64 >= n {
        1.0
    } else {
        beta_quantile(k + 1.0, n - k, 1.0 - 0.5 * alpha)
    };
    (lo, hi)
}

/// One-sided 95% upper bound on `p` after zero hits in `n` trials.
pub fn zero_hit_bound(n: usize) -> f64 {
    1.0 - libm::pow(0.05, 1.0 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_statrs_incomplete_beta() {
        for &(a, b) in &[(1.0, 1.0), (2.5, 7.0), (30.0, 9970.0), (500.0, 99_501.0), (0.5, 0.5)] {
            for &x in &[1e-4, 0.003, 0.01, 0.2, 0.5, 0.9] {
                let ours = beta_reg(a, b, x);
                let reference = statrs::function::beta::beta_reg(a, b, x);
                assert!((ours - reference).abs() < 1e-10, "a={a} b={b} x={x}: {ours} vs {reference}");
            }
        }
    }

    #[test]
    fn interval_contains_estimate_and_is_exact_at_edges() {
        for &(k, n) in &[(0usize, 10usize), (3, 10), (10, 10), (17, 100_000), (50_000, 100_000)] {
            let (lo, hi) = clopper_pearson(k, n, CONFIDENCE);
            let p = k as f64 / n as f64;
            assert!(lo <= p && p <= hi);
        }
        // k = 0: upper limit solves (1 − p)^n = α/2
        let (_, hi) = clopper_pearson(0, 20, CONFIDENCE);
        assert!((libm::pow(1.0 - hi, 20.0) - 0.025).abs() < 1e-10);
    }

    #[test]
    fn zero_hit_bound_solves_binomial_equation() {
        let b = zero_hit_bound(1000);
        assert!((libm::pow(1.0 - b, 1000.0) - 0.05).abs() < 1e-12);
    }
}
