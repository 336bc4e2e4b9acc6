//! Circular links and the von Mises density.
//!
//! `log I0` and the ratio `I1/I0` use their power series up to
//! [`BESSEL_SEAM`] and the large-argument asymptotic expansion above it.

use crate::scalar::Real;

use super::ModelError;

/// Concentration at which the Bessel routines switch to the asymptotic expansion.
pub const BESSEL_SEAM: f64 = 50.0;

/// Mean direction from a real linear predictor: `2 atan(eta)`.
pub fn tan_half_inverse_link<T: Real>(eta: T) -> T {
    T::lit(2.0) * eta.atan()
}

fn series<T: Real>(kappa: T) -> (T, T) {
    // I0 = sum q^k / (k!)^2, I1 = (kappa/2) sum q^k / (k! (k+1)!), q = kappa^2 / 4
    let q = kappa * kappa / T::lit(4.0);
    let (mut t0, mut t1) = (T::one(), T::one());
    let (mut s0, mut s1) = (T::one(), T::one());
    let mut k = T::zero();
    loop {
        k = k + T::one();
        t0 = t0 * q / (k * k);
        t1 = t1 * q / (k * (k + T::one()));
        s0 = s0 + t0;
        s1 = s1 + t1;
        if t0 <= s0 * T::epsilon() * T::lit(0.25) && t1 <= s1 * T::epsilon() * T::lit(0.25) {
            break;
        }
    }
    (s0, s1 * kappa / T::lit(2.0))
}

/// Scaled asymptotic sums `S0`, `S1` with `I_nu(k) ~ e^k / sqrt(2 pi k) * S_nu`.
fn asymptotic<T: Real>(kappa: T) -> (T, T) {
    let eight_k = T::lit(8.0) * kappa;
    let (mut a0, mut a1) = (T::one(), T::one());
    let (mut s0, mut s1) = (T::one(), T::one());
    for k in 1..40 {
        let odd = T::lit((2 * k - 1) as f64);
        let kk = T::lit(k as f64);
        // a_k(nu) = prod (4 nu^2 - (2j-1)^2) / (k! 8^k), with alternating sign
        let n0 = a0 * (odd * odd) / (kk * eight_k);
        let n1 = -a1 * (T::lit(4.0) - odd * odd) / (kk * eight_k);
        if n0.abs() >= a0.abs() {
            break;
        }
        a0 = n0;
        a1 = n1;
        s0 = s0 + a0;
        s1 = s1 + a1;
        if a0.abs() < s0 * T::epsilon() * T::lit(0.25) && a1.abs() < s1.abs() * T::epsilon() * T::lit(0.25) {
            break;
        }
    }
    (s0, s1)
}

/// `ln I0(kappa)` for `kappa >= 0`.
pub fn log_bessel_i0<T: Real>(kappa: T) -> T {
    if kappa <= T::lit(BESSEL_SEAM) {
        series(kappa).0.ln()
    } else {
        let (s0, _) = asymptotic(kappa);
        kappa - T::lit(0.5) * (T::TAU() * kappa).ln() + s0.ln()
    }
}

/// Mean resultant length of a von Mises distribution, `I1(kappa)/I0(kappa)`.
pub fn bessel_ratio<T: Real>(kappa: T) -> T {
    if kappa <= T::lit(BESSEL_SEAM) {
        let (i0, i1) = series(kappa);
        i1 / i0
    } else {
        let (s0, s1) = asymptotic(kappa);
        s1 / s0
    }
}

/// `ln I0` and `I1/I0` together.
pub fn log_bessel_i0_and_ratio<T: Real>(kappa: T) -> (T, T) {
    if kappa <= T::lit(BESSEL_SEAM) {
        let (i0, i1) = series(kappa);
        (i0.ln(), i1 / i0)
    } else {
        let (s0, s1) = asymptotic(kappa);
        (kappa - T::lit(0.5) * (T::TAU() * kappa).ln() + s0.ln(), s1 / s0)
    }
}

const ASYM_TERMS: usize = 16;

const fn asymptotic_coefficients(four_nu2: f64) -> [f64; ASYM_TERMS] {
    let mut c = [0.0; ASYM_TERMS];
    c[0] = 1.0;
    let mut k = 1;
    while k < ASYM_TERMS {
        let odd = (2 * k - 1) as f64;
        c[k] = -c[k - 1] * (four_nu2 - odd * odd) / (8.0 * k as f64);
        k += 1;
    }
    c
}

const ASYM_I0: [f64; ASYM_TERMS] = asymptotic_coefficients(0.0);
const ASYM_I1: [f64; ASYM_TERMS] = asymptotic_coefficients(4.0);
const LN_TAU: f64 = 1.837_877_066_409_345_5;

/// `ln I0` and `I1/I0` for `f64` when `ln kappa` is already known. Above the
/// seam the expansion is a fixed-length polynomial in `1/kappa`.
pub fn log_i0_and_ratio_f64(kappa: f64, log_kappa: f64) -> (f64, f64) {
    if kappa <= BESSEL_SEAM {
        return log_bessel_i0_and_ratio(kappa);
    }
    let x = 1.0 / kappa;
    let (mut s0, mut s1) = (0.0, 0.0);
    for k in (0..ASYM_TERMS).rev() {
        s0 = s0 * x + ASYM_I0[k];
        s1 = s1 * x + ASYM_I1[k];
    }
    (kappa - 0.5 * (LN_TAU + log_kappa) + s0.ln(), s1 / s0)
}

pub fn von_mises_log_density<T: Real>(phi: T, mu: T, kappa: T) -> Result<T, ModelError> {
    if !(kappa > T::zero()) {
        return Err(ModelError::NonPositiveKappa(kappa.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(kappa * (phi - mu).cos() - T::TAU().ln() - log_bessel_i0(kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    /// Independent I0 by direct summation of `(x/2)^(2k) / (k!)^2` in log space.
    fn i0_oracle(x: f64) -> f64 {
        let mut total = 0.0;
        let mut log_fact = 0.0;
        for k in 0..400 {
            if k > 0 {
                log_fact += (k as f64).ln();
            }
            total += (2.0 * k as f64 * (x / 2.0).ln() - 2.0 * log_fact).exp();
        }
        total
    }

    #[test]
    fn fixed_expansion_matches_general_path() {
        for kappa in [0.3, 12.0, 50.0, 50.0001, 63.0, 148.0, 2000.0, 1e6] {
            let (l, r) = log_bessel_i0_and_ratio(kappa);
            let (lf, rf) = log_i0_and_ratio_f64(kappa, f64::ln(kappa));
            assert!((l - lf).abs() < 1e-12 * l.abs().max(1.0), "{kappa}");
            assert!((r - rf).abs() < 1e-13, "{kappa}");
        }
    }

    #[test]
    fn link_cases() {
        assert_eq!(tan_half_inverse_link(0.0), 0.0);
        assert!((tan_half_inverse_link(1.0) - FRAC_PI_2).abs() < 1e-15);
        assert!((tan_half_inverse_link(-1.0) + FRAC_PI_2).abs() < 1e-15);
        assert!(tan_half_inverse_link(1e12) < PI);
    }

    #[test]
    fn density_at_small_kappa_is_uniform() {
        let v = von_mises_log_density(0.4, 0.4, 1e-9).unwrap();
        assert!((v + TAU.ln()).abs() < 1e-8);
        assert!((v + 1.8379).abs() < 1e-4);
    }

    #[test]
    fn density_kappa_two_matches_series_oracle() {
        let v = von_mises_log_density(0.0, 0.0, 2.0).unwrap();
        let expect = 2.0 - TAU.ln() - i0_oracle(2.0).ln();
        assert!((v - expect).abs() < 1e-13);
    }

    #[test]
    fn unimodal() {
        for k in [0.01, 0.5, 3.0, 70.0, 900.0] {
            assert!(von_mises_log_density(0.2, 0.2, k).unwrap() > von_mises_log_density(1.2, 0.2, k).unwrap());
        }
    }

    #[test]
    fn non_positive_kappa() {
        assert!(matches!(von_mises_log_density(0.0, 0.0, 0.0), Err(ModelError::NonPositiveKappa(_))));
        assert!(matches!(von_mises_log_density(0.0, 0.0, -1.0), Err(ModelError::NonPositiveKappa(_))));
    }

    #[test]
    fn periodic() {
        for k in [0.3, 5.0, 80.0] {
            let a = von_mises_log_density(0.7, -0.2, k).unwrap();
            let b = von_mises_log_density(crate::scalar::wrap_angle(0.7 + TAU), -0.2, k).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_i0_matches_oracle_across_seam() {
        for &k in &[1e-6, 0.01, 0.5, 1.0, 2.0, 10.0, 30.0, 49.0, 49.999, 50.0, 50.001, 51.0, 60.0, 100.0, 300.0] {
            let got = log_bessel_i0(k);
            let want = i0_oracle(k).ln();
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "k={k}: {got} vs {want}");
        }
        let below = log_bessel_i0(BESSEL_SEAM);
        let above = log_bessel_i0(BESSEL_SEAM + 1e-9);
        assert!((below - above).abs() < 1e-8);
    }

    #[test]
    fn ratio_matches_oracle() {
        // I1 = dI0/dx; oracle by central difference of the independent series
        for &k in &[0.1f64, 2.0, 10.0, 45.0, 55.0, 120.0] {
            let h = 1e-5 * k.max(1.0);
            let d = (i0_oracle(k + h).ln() - i0_oracle(k - h).ln()) / (2.0 * h);
            assert!((bessel_ratio(k) - d).abs() < 1e-8, "k={k}");
            let (l, r) = log_bessel_i0_and_ratio(k);
            assert_eq!(l, log_bessel_i0(k));
            assert_eq!(r, bessel_ratio(k));
        }
        assert!((bessel_ratio(2.0f32) - 0.697_774_7).abs() < 1e-5);
    }

    #[test]
    fn density_integrates_to_one() {
        for &k in &[0.01, 1.0, 10.0, 100.0] {
            let n = 20_000;
            let h = TAU / n as f64;
            // Simpson's rule on [-pi, pi]
            let f = |x: f64| von_mises_log_density(x, 0.3, k).unwrap().exp();
            let mut s = f(-PI) + f(PI);
            for i in 1..n {
                let x = -PI + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            assert!((s * h / 3.0 - 1.0).abs() < 1e-6, "k={k}");
        }
    }
}
