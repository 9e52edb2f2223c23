//! Error function.
//!
//! Backed by `libm` (a port of the FreeBSD msun routines, below one ulp on the
//! whole real line; returns exactly ±1 for |x| >= 6).

pub use libm::erf;

/// `erf` without the call where the result is already exactly ±1.
#[inline]
pub fn erf_saturating(x: f64) -> f64 {
    if x >= 6.0 {
        1.0
    } else if x <= -6.0 {
        -1.0
    } else {
        erf(x)
    }
}

/// sqrt(pi / 2): `∫ exp(-t²/(2σ²)) dt` over the real line is `2 σ sqrt(pi/2)`.
pub const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_3;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturating_variant_is_identical() {
        let mut x = -9.0;
        while x < 9.0 {
            assert_eq!(erf_saturating(x).to_bits(), erf(x).to_bits(), "{x}");
            x += 0.001_37;
        }
        for x in [6.0, -6.0, 5.999_999_999_999_999, f64::INFINITY, f64::NEG_INFINITY, 1e300] {
            assert_eq!(erf_saturating(x).to_bits(), erf(x).to_bits(), "{x}");
        }
        assert!(erf_saturating(f64::NAN).is_nan());
    }

    #[test]
    fn erf_reference_values() {
        // 30-digit reference values.
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-16);
        assert!((erf(0.5) - 0.520_499_877_813_046_5).abs() < 1e-16);
        assert!((erf(2.0) - 0.995_322_265_018_952_7).abs() < 1e-16);
        assert_eq!(erf(0.0), 0.0);
        assert_eq!(erf(-1.0), -erf(1.0));
        assert_eq!(erf(6.0), 1.0);
        assert_eq!(erf(-7.5), -1.0);
    }

    #[test]
    fn erf_matches_maclaurin_series() {
        // erf(x) = 2/sqrt(pi) * sum_n (-1)^n x^(2n+1) / (n! (2n+1))
        for &x in &[0.1, 0.3, 0.7, 1.2, 1.9] {
            let mut term = x;
            let mut sum = x;
            for n in 1..80 {
                term *= -x * x / n as f64;
                sum += term / (2 * n + 1) as f64;
            }
            let series = sum * 2.0 / std::f64::consts::PI.sqrt();
            let rel = (erf(x) - series).abs() / series;
            assert!(rel < 1e-15, "x={x} rel={rel}");
        }
    }

    #[test]
    fn half_pi_constant() {
        // sqrt(pi/2) = 1.25331413731550025120788...
        assert!((SQRT_HALF_PI - 1.253_314_137_315_500_3).abs() < 2e-16);
        assert!((SQRT_HALF_PI - (std::f64::consts::PI / 2.0).sqrt()).abs() < 4e-16);
    }
}
