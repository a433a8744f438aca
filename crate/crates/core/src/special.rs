//! Scalar special functions shared by the Laplace-exponent machinery.

use crate::error::{Error, Result};

const SERIES_THRESHOLD: f64 = 1e-4;

/// `H(z) = e^{-z} - 1 + z`, the integrand kernel of every Laplace exponent here.
///
/// Below `z = 1e-4` a four-term series replaces the closed form, which would
/// otherwise lose most of its digits to cancellation.
pub fn h_func(z: f64) -> f64 {
    if z.abs() < SERIES_THRESHOLD {
        let z2 = z * z;
        z2 * (0.5 - z / 6.0 + z2 / 24.0)
    } else {
        (-z).exp_m1() + z
    }
}

/// First derivative of [`h_func`], `1 - e^{-z}`.
pub fn h_prime(z: f64) -> f64 {
    -(-z).exp_m1()
}

/// `C_alpha = Gamma(2 - alpha) / (alpha (alpha - 1))`, so that
/// `int_0^inf (e^{-uy} - 1 + uy) y^{-1-alpha} dy = C_alpha u^alpha`.
pub fn stable_constant(alpha: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::Domain(format!("stable index must lie in (1, 2), got {alpha}")));
    }
    Ok(gamma(2.0 - alpha) / (alpha * (alpha - 1.0)))
}

/// Laplace-exponent coefficient of a unit-scale index-`alpha` component:
/// `C_alpha` for `alpha` in (1,2) and `1/2` for the Wiener case `alpha = 2`.
pub fn unit_laplace_coefficient(alpha: f64) -> Result<f64> {
    if alpha == 2.0 {
        Ok(0.5)
    } else {
        stable_constant(alpha)
    }
}

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}
