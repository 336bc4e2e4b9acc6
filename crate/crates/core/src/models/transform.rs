//! Scaled arcsine transform of step lengths.

use crate::scalar::Real;

use super::ModelError;

/// `asin(sqrt(s / s_max))`, mapping `[0, s_max]` onto `[0, pi/2]`.
pub fn arcsine_transform<T: Real>(s: T, s_max: T) -> Result<T, ModelError> {
    if !(s_max > T::zero()) || !(s >= T::zero()) || s > s_max {
        return Err(ModelError::OutOfRange(s.to_f64().unwrap_or(f64::NAN)));
    }
    Ok((s / s_max).sqrt().asin())
}

/// `s_max * sin^2(z)` with `z` first clamped into `[0, pi/2]`; the flag
/// reports whether the clamp fired.
pub fn inverse_arcsine_transform<T: Real>(z: T, s_max: T) -> (T, bool) {
    let hi = T::FRAC_PI_2();
    let zc = if z < T::zero() {
        T::zero()
    } else if z > hi {
        hi
    } else {
        z
    };
    // sin(pi/2)^2 is not exactly 1 in floating point
    let s = if zc == hi { s_max } else { s_max * zc.sin().powi(2) };
    (s, zc != z)
}
