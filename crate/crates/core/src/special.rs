//! Modified Bessel functions of the first kind, orders 0 and 1.
//!
//! Below [`SERIES_CUTOFF`] the defining power series is summed directly (all
//! terms are positive, so there is no cancellation). Above it the Hankel
//! asymptotic expansion is used in exponentially scaled form, which keeps
//! `e^{-x} I_n(x)` finite for arbitrarily large arguments.

use crate::error::{Error, Result};

/// Argument at which evaluation switches from the power series to the
/// asymptotic expansion.
pub const SERIES_CUTOFF: f64 = 15.0;

/// Bessel order. Only `I_0` and `I_1` occur in the field solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Zero,
    One,
}

fn check_arg(x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain {
            what: "modified Bessel argument",
            value: x,
        });
    }
    Ok(())
}

/// Power series of `I_n(x)`; `x` must be below the cutoff.
fn series(order: Order, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut term, k_offset) = match order {
        Order::Zero => (1.0, 0.0),
        Order::One => (0.5 * x, 1.0),
    };
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + k_offset));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        k += 1.0;
        if k > 500.0 {
            break;
        }
    }
    sum
}

/// Scaled asymptotic expansion `e^{-x} I_n(x)` for large `x`.
fn asymptotic_scaled(order: Order, x: f64) -> f64 {
    let mu = match order {
        Order::Zero => 0.0,
        Order::One => 4.0,
    };
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= -(mu - odd * odd) / (k as f64 * 8.0 * x);
        // The series is asymptotic: stop before the terms start growing.
        if term.abs() >= prev {
            break;
        }
        sum += term;
        prev = term.abs();
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// `I_n(x)`. Overflows to `+inf` for `x` beyond roughly 713.
pub fn bessel_i(order: Order, x: f64) -> Result<f64> {
    check_arg(x)?;
    if x < SERIES_CUTOFF {
        Ok(series(order, x))
    } else {
        Ok(asymptotic_scaled(order, x) * x.exp())
    }
}

/// Exponentially scaled `e^{-x} I_n(x)`; finite for every finite `x >= 0`.
pub fn bessel_i_scaled(order: Order, x: f64) -> Result<f64> {
    check_arg(x)?;
    if x < SERIES_CUTOFF {
        Ok(series(order, x) * (-x).exp())
    } else {
        Ok(asymptotic_scaled(order, x))
    }
}

pub fn i0(x: f64) -> Result<f64> {
    bessel_i(Order::Zero, x)
}

pub fn i1(x: f64) -> Result<f64> {
    bessel_i(Order::One, x)
}

/// `2 I_1(a) / a`, continuous through `a = 0` where it equals 1.
///
/// This is the combination that appears in the `G_s`/`G_e` kernels once the
/// square-root prefactors are folded into the Bessel argument.
pub fn i1_ratio(a: f64) -> Result<f64> {
    check_arg(a)?;
    if a < crate::kernels::SINGULAR_SWITCH {
        // 1 + a^2/8 + a^4/192
        let a2 = a * a;
        return Ok(1.0 + a2 / 8.0 + a2 * a2 / 192.0);
    }
    Ok(2.0 * bessel_i(Order::One, a)? / a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Straight power-series oracle, written independently of `series`.
    fn oracle(order: Order, x: f64, terms: usize) -> f64 {
        let n = match order {
            Order::Zero => 0,
            Order::One => 1,
        };
        let ln_fact = |m: usize| (1..=m).map(|j| (j as f64).ln()).sum::<f64>();
        let mut total = 0.0;
        for k in 0..terms {
            if x == 0.0 {
                if k + n == 0 {
                    total += 1.0;
                }
                continue;
            }
            let ln_term = (2 * k + n) as f64 * (x / 2.0).ln() - ln_fact(k) - ln_fact(k + n);
            total += ln_term.exp();
        }
        total
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(i0(0.0).unwrap(), 1.0);
        assert_eq!(i1(0.0).unwrap(), 0.0);
        assert_eq!(i1_ratio(0.0).unwrap(), 1.0);
    }

    #[test]
    fn i0_of_one_matches_thirty_term_series() {
        let expected = oracle(Order::Zero, 1.0, 30);
        assert_relative_eq!(expected, 1.2660658777520082, max_relative = 1e-15);
        assert_relative_eq!(i0(1.0).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn series_region_matches_oracle() {
        for &x in &[0.1, 0.5, 1.0, 2.5, 7.0, 11.0, 14.99] {
            for order in [Order::Zero, Order::One] {
                let want = oracle(order, x, 80);
                let got = bessel_i(order, x).unwrap();
                assert_relative_eq!(got, want, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn asymptotic_region_matches_long_series() {
        // Plain positive series stays accurate in f64 well past the cutoff.
        for &x in &[15.0, 15.1, 20.0, 30.0, 50.0, 100.0] {
            for order in [Order::Zero, Order::One] {
                let want = oracle(order, x, 400);
                let got = bessel_i(order, x).unwrap();
                assert_relative_eq!(got, want, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn scaled_matches_high_precision_references() {
        // e^{-x} I_n(x) evaluated with 40-digit arithmetic.
        let table = [
            (1.0, 0.4657596075936404365, 0.20791041534970844887),
            (14.9, 0.10425387282429125373, 0.1006922988117705442),
            (15.0, 0.10389953144882272143, 0.10037417504516665529),
            (30.0, 0.073145946482237293929, 0.071916330598647554706),
            (700.0, 0.015081295651531357587, 0.015070519444716846949),
            (1000.0, 0.012617240455891256586, 0.01261093025692862947),
            (1.0e6, 0.00039894233026924577878, 0.00039894213079803077631),
        ];
        for (x, s0, s1) in table {
            assert_relative_eq!(
                bessel_i_scaled(Order::Zero, x).unwrap(),
                s0,
                max_relative = 1e-12
            );
            assert_relative_eq!(
                bessel_i_scaled(Order::One, x).unwrap(),
                s1,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn scaled_and_unscaled_agree_up_to_thirty() {
        let mut x = 0.0;
        while x <= 30.0 {
            for order in [Order::Zero, Order::One] {
                let plain = bessel_i(order, x).unwrap();
                let scaled = bessel_i_scaled(order, x).unwrap() * x.exp();
                assert_relative_eq!(plain, scaled, max_relative = 1e-10, epsilon = 1e-300);
            }
            x += 0.37;
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(i0(-1.0).is_err());
        assert!(i1(f64::NAN).is_err());
        assert!(bessel_i_scaled(Order::Zero, f64::INFINITY).is_err());
    }

    #[test]
    fn ratio_is_smooth_through_switch() {
        let below = i1_ratio(0.999e-6).unwrap();
        let above = i1_ratio(1.001e-6).unwrap();
        assert_relative_eq!(below, above, max_relative = 1e-12);
        assert_relative_eq!(
            i1_ratio(2.0).unwrap(),
            i1(2.0).unwrap(),
            max_relative = 1e-14
        );
    }
}
