//! CMOD5.N C-band VV geophysical model function (Hersbach, 2010).
//!
//! Maps 10 m neutral wind speed, incidence angle and wind direction relative
//! to the radar look direction to the normalized radar cross-section in
//! linear units.

use crate::error::{Error, Result};

/// The 28 published CMOD5.N coefficients, c1..c28.
pub const CMOD5N_COEFFS: [f64; 28] = [
    -0.6878, -0.7957, 0.3380, -0.1728, 0.0000, 0.0040, 0.1103, 0.0159, 6.7329, 2.7713, -2.2885,
    0.4971, -0.7250, 0.0450, 0.0066, 0.3222, 0.0120, 22.7000, 2.0813, 3.0000, 8.3659, -3.3428,
    1.3236, 6.2437, 2.3893, 0.3249, 4.1590, 1.6930,
];

pub const INCIDENCE_MIN_DEG: f64 = 15.0;
pub const INCIDENCE_MAX_DEG: f64 = 50.0;
pub const WIND_MAX_MS: f64 = 50.0;

/// Reference incidence and spread of the normalized incidence variable.
const THETA_REF: f64 = 40.0;
const THETA_SPREAD: f64 = 25.0;
const ZPOW: f64 = 1.6;

/// NRCS for wind speed (m/s), incidence (deg) and relative azimuth (deg).
pub fn cmod5n(wind_speed_ms: f64, incidence_deg: f64, rel_azimuth_deg: f64) -> Result<f64> {
    if !wind_speed_ms.is_finite() || !incidence_deg.is_finite() || !rel_azimuth_deg.is_finite() {
        return Err(Error::Input("cmod5n: non-finite argument".into()));
    }
    if !(wind_speed_ms > 0.0 && wind_speed_ms <= WIND_MAX_MS) {
        return Err(Error::Domain(format!(
            "cmod5n: wind speed {wind_speed_ms} m/s outside (0, {WIND_MAX_MS}]"
        )));
    }
    if !(INCIDENCE_MIN_DEG..=INCIDENCE_MAX_DEG).contains(&incidence_deg) {
        return Err(Error::Domain(format!(
            "cmod5n: incidence {incidence_deg} deg outside [{INCIDENCE_MIN_DEG}, {INCIDENCE_MAX_DEG}]"
        )));
    }
    Ok(eval(wind_speed_ms, incidence_deg, rel_azimuth_deg))
}

fn eval(v: f64, theta: f64, phi: f64) -> f64 {
    let c = |i: usize| CMOD5N_COEFFS[i - 1];

    let y0 = c(19);
    let pn = c(20);
    let a = y0 - (y0 - 1.0) / pn;
    let b = 1.0 / (pn * (y0 - 1.0).powf(pn - 1.0));

    let cos_phi = phi.to_radians().cos();
    let cos_2phi = 2.0 * cos_phi * cos_phi - 1.0;

    let x = (theta - THETA_REF) / THETA_SPREAD;
    let xx = x * x;

    let a0 = c(1) + c(2) * x + c(3) * xx + c(4) * x * xx;
    let a1 = c(5) + c(6) * x;
    let a2 = c(7) + c(8) * x;
    let gam = c(9) + c(10) * x + c(11) * xx;
    let s0 = c(12) + c(13) * x;

    // upwind/isotropic term
    let s = a2 * v;
    let a3 = if s < s0 {
        let sig = 1.0 / (1.0 + (-s0).exp());
        sig * (s / s0).powf(s0 * (1.0 - sig))
    } else {
        1.0 / (1.0 + (-s).exp())
    };
    let b0 = a3.powf(gam) * 10f64.powf(a0 + a1 * v);

    // first harmonic
    let mut b1 = c(15) * v * (0.5 + x - (4.0 * (x + c(16) + c(17) * v)).tanh());
    b1 = c(14) * (1.0 + x) - b1;
    b1 /= (0.34 * (v - c(18))).exp() + 1.0;

    // second harmonic
    let v0 = c(21) + c(22) * x + c(23) * xx;
    let d1 = c(24) + c(25) * x + c(26) * xx;
    let d2 = c(27) + c(28) * x;
    let mut v2 = v / v0 + 1.0;
    if v2 < y0 {
        v2 = a + b * (v2 - 1.0).powf(pn);
    }
    let b2 = (-d1 + d2 * v2) * (-v2).exp();

    b0 * (1.0 + b1 * cos_phi + b2 * cos_2phi).powf(ZPOW)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_and_decreasing_with_incidence() {
        let wv1 = cmod5n(10.0, 23.8, 45.0).unwrap();
        let wv2 = cmod5n(10.0, 36.8, 45.0).unwrap();
        assert!(wv1 > 0.0 && wv1.is_finite());
        assert!(wv2 > 0.0 && wv2 < wv1);
    }

    #[test]
    fn azimuth_period_360() {
        let a = cmod5n(10.0, 23.8, 45.0).unwrap();
        let b = cmod5n(10.0, 23.8, 405.0).unwrap();
        assert!((a - b).abs() <= 1e-14 * a);
    }

    #[test]
    fn upwind_exceeds_crosswind() {
        let up = cmod5n(10.0, 30.0, 0.0).unwrap();
        let cross = cmod5n(10.0, 30.0, 90.0).unwrap();
        assert!(up > cross);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(cmod5n(10.0, 10.0, 45.0), Err(Error::Domain(_))));
        assert!(matches!(cmod5n(10.0, 55.0, 45.0), Err(Error::Domain(_))));
        assert!(matches!(cmod5n(0.0, 30.0, 45.0), Err(Error::Domain(_))));
        assert!(matches!(cmod5n(f64::NAN, 30.0, 45.0), Err(Error::Input(_))));
    }
}
