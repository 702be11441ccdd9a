//! Integer-order Bessel functions of the first kind.
//!
//! Small arguments (relative to the order) use the ascending power series,
//! which has no cancellation in that regime. Everything else uses Miller's
//! downward recurrence normalized with `J_0 + 2 sum_k J_2k = 1`.

/// `J_n(x)` for integer `n`, absolute error below 1e-12 for `|x| <= 50`.
pub fn bessel_j(order: i32, x: f64) -> f64 {
    let n = order.unsigned_abs() as usize;
    let mut sign = 1.0;
    // J_{-n}(x) = (-1)^n J_n(x) and J_n(-x) = (-1)^n J_n(x)
    if n % 2 == 1 && (order < 0) != (x < 0.0) {
        sign = -1.0;
    }
    sign * j_nonneg(n, x.abs())
}

/// `[J_0(x), J_1(x), ..., J_max_order(x)]`.
pub fn bessel_j_sequence(max_order: usize, x: f64) -> Vec<f64> {
    let ax = x.abs();
    let mut out = if ax == 0.0 {
        let mut v = vec![0.0; max_order + 1];
        v[0] = 1.0;
        v
    } else if ax <= 1.0 {
        (0..=max_order).map(|n| series(n, ax)).collect()
    } else {
        miller(max_order, ax)
    };
    if x < 0.0 {
        for v in out.iter_mut().skip(1).step_by(2) {
            *v = -*v;
        }
    }
    out
}

fn j_nonneg(n: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if 0.25 * x * x <= (n + 1) as f64 {
        series(n, x)
    } else {
        miller(n, x)[n]
    }
}

fn series(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut lead = 1.0;
    for k in 1..=n {
        lead *= half / k as f64;
        if lead == 0.0 {
            return 0.0;
        }
    }
    let q = half * half;
    let mut term = lead;
    let mut sum = lead;
    for k in 1..500 {
        term *= -q / (k as f64 * (n + k) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn miller(max_order: usize, x: f64) -> Vec<f64> {
    let top = max_order.max(x.ceil() as usize);
    let mut start = top + 30 + (60.0 * top as f64).sqrt().ceil() as usize;
    start += start % 2;

    let mut vals = vec![0.0; max_order + 1];
    let mut next = 0.0;
    let mut cur = 1e-30;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        if k <= max_order {
            vals[k] = cur;
        }
        if k % 2 == 0 {
            norm += 2.0 * cur;
        }
        let prev = (2.0 * k as f64 / x) * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            for v in vals.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    vals[0] = cur;
    norm += cur;
    for v in vals.iter_mut() {
        *v /= norm;
    }
    vals
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_parity() {
        assert_eq!(bessel_j(0, 0.0), 1.0);
        assert_eq!(bessel_j(3, 0.0), 0.0);
        for &x in &[0.3, 2.0, 4.4, 17.5, 49.0] {
            for n in 1..12 {
                assert_eq!(bessel_j(-n, x), (-1f64).powi(n) * bessel_j(n, x));
                assert_eq!(bessel_j(n, -x), (-1f64).powi(n) * bessel_j(n, x));
            }
        }
    }

    #[test]
    fn sequence_matches_pointwise() {
        for &x in &[0.0, 0.5, 1.0, 3.7, 7.9, 20.0, 50.0] {
            let seq = bessel_j_sequence(80, x);
            for (n, &v) in seq.iter().enumerate() {
                assert!((v - bessel_j(n as i32, x)).abs() < 1e-13, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn closure_identity() {
        for i in 0..=40 {
            let x = 0.5 * i as f64;
            let seq = bessel_j_sequence(120, x);
            let total: f64 = seq[0] * seq[0] + 2.0 * seq[1..].iter().map(|v| v * v).sum::<f64>();
            assert!((total - 1.0).abs() < 1e-10, "x={x} total={total}");
        }
    }
}
