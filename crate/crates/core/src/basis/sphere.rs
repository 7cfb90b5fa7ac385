//! Real orthonormal spherical harmonics on the unit sphere.

use std::f64::consts::PI;

/// Highest supported degree.
pub const MAX_DEGREE: u32 = 100;

/// Fully normalized associated Legendre values `P̄_l^m(cos θ)` for
/// `0 ≤ m ≤ l ≤ l_max`, stored at `l * (l + 1) / 2 + m`.
///
/// Normalized so that `P̄_l^m(cos θ) · e^{i m φ}` is orthonormal on the sphere;
/// the Condon–Shortley phase is omitted.
pub fn normalized_legendre(l_max: u32, cos_theta: f64, sin_theta: f64) -> Vec<f64> {
    let lm = l_max as usize;
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut p = vec![0.0; (lm + 1) * (lm + 2) / 2];
    p[0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=lm {
        let mf = m as f64;
        p[idx(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * sin_theta * p[idx(m - 1, m - 1)];
    }
    for m in 0..lm {
        p[idx(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * cos_theta * p[idx(m, m)];
    }
    for m in 0..=lm {
        let mf = m as f64;
        for l in (m + 2)..=lm {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            p[idx(l, m)] = a * (cos_theta * p[idx(l - 1, m)] - b * p[idx(l - 2, m)]);
        }
    }
    p
}

/// Real harmonic `Y_{l,m}` at latitude/longitude (radians) given precomputed
/// Legendre values for that point.
pub fn real_harmonic(legendre: &[f64], l: u32, m: i32, lon: f64) -> f64 {
    let (l, am) = (l as usize, m.unsigned_abs() as usize);
    let p = legendre[l * (l + 1) / 2 + am];
    match m {
        0 => p,
        m if m > 0 => std::f64::consts::SQRT_2 * p * (am as f64 * lon).cos(),
        _ => std::f64::consts::SQRT_2 * p * (am as f64 * lon).sin(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn low_degree_closed_forms() {
        let lat: f64 = 0.3;
        let (c, s) = (lat.sin(), lat.cos());
        let p = normalized_legendre(2, c, s);
        assert_relative_eq!(p[0], 0.5 / PI.sqrt(), max_relative = 1e-15);
        // P̄_1^0 = sqrt(3/4π) cos θ
        assert_relative_eq!(p[1], (3.0 / (4.0 * PI)).sqrt() * c, max_relative = 1e-14);
        // P̄_1^1 = sqrt(3/8π) sin θ
        assert_relative_eq!(p[2], (3.0 / (8.0 * PI)).sqrt() * s, max_relative = 1e-14);
        // P̄_2^0 = sqrt(5/4π) (3cos²θ - 1)/2
        assert_relative_eq!(p[3], (5.0 / (4.0 * PI)).sqrt() * 0.5 * (3.0 * c * c - 1.0), max_relative = 1e-13);
        // P̄_2^2 = sqrt(15/32π) sin²θ
        assert_relative_eq!(p[5], (15.0 / (32.0 * PI)).sqrt() * s * s, max_relative = 1e-13);
    }

    #[test]
    fn high_degree_stays_finite() {
        let p = normalized_legendre(MAX_DEGREE, 0.2, (1.0f64 - 0.04).sqrt());
        assert!(p.iter().all(|v| v.is_finite()));
    }
}
