//! Standard normal tail and quantile functions.

use statrs::function::erf::erfc_inv;

use crate::scalar::Real;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Φ(z).
pub fn normal_cdf<T: Real>(z: T) -> T {
    T::lit(0.5 * libm::erfc(-z.as_f64() / std::f64::consts::SQRT_2))
}

/// Upper tail 1 − Φ(z), evaluated without cancellation.
pub fn normal_sf<T: Real>(z: T) -> T {
    T::lit(0.5 * libm::erfc(z.as_f64() / std::f64::consts::SQRT_2))
}

/// Upper α-quantile z_α, i.e. 1 − Φ(z_α) = α. Requires 0 < α < 1.
pub fn upper_quantile<T: Real>(alpha: T) -> T {
    let a = alpha.as_f64();
    let mut z = std::f64::consts::SQRT_2 * erfc_inv(2.0 * a);
    // the series inverse is good to ~1e-9; polish against the libm tail
    for _ in 0..2 {
        let density = FRAC_1_SQRT_2PI * (-0.5 * z * z).exp();
        if density == 0.0 {
            break;
        }
        z += (normal_sf(z) - a) / density;
    }
    T::lit(z)
}
