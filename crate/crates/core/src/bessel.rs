//! Modified Bessel functions of the first kind of integer order.
//!
//! Small arguments use the power series; larger ones use Miller's backward
//! recurrence normalized by `I_0(x) + 2 sum_k I_k(x) = exp(x)`. Everything
//! is computed in exponentially scaled form so arguments in the hundreds do
//! not overflow.

const SERIES_LIMIT: f64 = 15.0;

/// `exp(-|x|) * I_n(x)`.
pub fn bessel_i_scaled(n: i64, x: f64) -> f64 {
    let n = n.unsigned_abs();
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let sign = if x < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
    let ax = x.abs();
    let v = if ax <= SERIES_LIMIT {
        series(n, ax) * (-ax).exp()
    } else {
        miller(n, ax)
    };
    sign * v
}

/// `I_n(x)`; overflows to infinity for `|x|` beyond about 700.
pub fn bessel_i(n: i64, x: f64) -> f64 {
    bessel_i_scaled(n, x) * x.abs().exp()
}

fn series(n: u64, x: f64) -> f64 {
    let half = 0.5 * x;
    // leading term (x/2)^n / n!, built multiplicatively to avoid overflow
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
        if term == 0.0 {
            return 0.0;
        }
    }
    let q = half * half;
    let mut sum = term;
    for k in 1..500u64 {
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

fn miller(n: u64, x: f64) -> f64 {
    let big = n.max(x.ceil() as u64);
    let start = big + 40 + (40.0 * big as f64).sqrt() as u64;
    let two_over_x = 2.0 / x;
    let (mut above, mut current) = (0.0f64, 1e-300f64);
    let mut wanted = 0.0;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let below = above + k as f64 * two_over_x * current;
        above = current;
        current = below;
        // `current` now holds I_{k-1}, `above` holds I_k
        if k == n + 1 {
            wanted = current;
        }
        norm += 2.0 * above;
        if current > 1e250 {
            above *= 1e-250;
            current *= 1e-250;
            wanted *= 1e-250;
            norm *= 1e-250;
        }
    }
    if n == 0 {
        wanted = current;
    }
    norm += current;
    wanted / norm
}

#[cfg(test)]
mod tests {
    use super::*;

    // reference values from an independent arbitrary-order implementation
    const REFERENCE: [(i64, f64, f64); 7] = [
        (0, 2.0, 2.2795853023360673),
        (1, 1.0, 0.565159103992485),
        (5, 20.0, 23018392.213413667),
        (0, 30.0, 781672297823.9779),
        (3, 0.5, 0.002645111968990286),
        (10, 50.0, 1.0715971594776371e20),
        (0, 100.0, 1.0737517071310736e42),
    ];

    #[test]
    fn matches_reference_values() {
        for (n, x, want) in REFERENCE {
            let got = bessel_i(n, x);
            assert!(
                ((got - want) / want).abs() < 1e-13,
                "I_{n}({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn parity_and_zero() {
        assert_eq!(bessel_i(0, 0.0), 1.0);
        assert_eq!(bessel_i(7, 0.0), 0.0);
        assert_eq!(bessel_i(-3, 2.5), bessel_i(3, 2.5));
        assert!((bessel_i(3, -2.5) + bessel_i(3, 2.5)).abs() < 1e-15);
        assert!((bessel_i(2, -2.5) - bessel_i(2, 2.5)).abs() < 1e-15);
    }

    #[test]
    fn series_and_recurrence_agree_at_the_switch() {
        for n in 0..30 {
            let a = series(n, SERIES_LIMIT) * (-SERIES_LIMIT).exp();
            let b = miller(n, SERIES_LIMIT);
            assert!(((a - b) / a).abs() < 1e-12, "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn recurrence_identity() {
        // I_{n-1}(x) - I_{n+1}(x) = (2n/x) I_n(x)
        for &x in &[0.3, 4.0, 14.0, 16.0, 80.0, 400.0] {
            for n in 1..25 {
                let lhs = bessel_i_scaled(n - 1, x) - bessel_i_scaled(n + 1, x);
                let rhs = 2.0 * n as f64 / x * bessel_i_scaled(n, x);
                assert!(
                    (lhs - rhs).abs() <= 1e-13 * bessel_i_scaled(n - 1, x),
                    "x={x} n={n}"
                );
            }
        }
    }

    #[test]
    fn scaled_sum_rule() {
        for &x in &[0.5, 10.0, 60.0, 600.0] {
            let s: f64 =
                bessel_i_scaled(0, x) + 2.0 * (1..2000).map(|k| bessel_i_scaled(k, x)).sum::<f64>();
            assert!((s - 1.0).abs() < 1e-12, "x={x}: {s}");
        }
    }
}
