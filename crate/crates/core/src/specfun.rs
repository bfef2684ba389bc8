//! Special functions: integer-order Bessel J, thermal factors, and complex
//! polygamma functions used by the analytic frequency integrals.

use num_complex::Complex64;

use crate::constants::{HBAR, K_B};
use crate::error::{Error, Result};

pub const MAX_BESSEL_ORDER: i32 = 64;

/// J_order(x) for |order| <= 64.
pub fn bessel_j(order: i32, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("bessel_j: non-finite argument {x}")));
    }
    if order.abs() > MAX_BESSEL_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    let n = order.unsigned_abs() as usize;
    let table = bessel_j_table(n, x.abs());
    let mut v = table[n];
    // J_{-n}(x) = (-1)^n J_n(x) and J_n(-x) = (-1)^n J_n(x).
    if order < 0 && n % 2 == 1 {
        v = -v;
    }
    if x < 0.0 && n % 2 == 1 {
        v = -v;
    }
    Ok(v)
}

/// J_0(x) ..= J_nmax(x) for x >= 0.
///
/// Miller's downward recurrence normalized with J0 + 2 Σ J_2k = 1. The start
/// index grows with x so the same routine covers the oscillatory regime
/// (k < x) and the evanescent one (k > x). The start never depends on nmax
/// below 64, so tables of any length agree bit for bit with [`bessel_j`].
pub fn bessel_j_table(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let reach = (nmax.max(MAX_BESSEL_ORDER as usize) as f64).max(x);
    let mut start = (reach + 30.0 + 12.0 * x.cbrt()).ceil() as usize;
    start += start % 2;

    const BIG: f64 = 1e250;
    let two_over_x = 2.0 / x;
    let mut j_next = 0.0; // J_{k+1}
    let mut j_cur = 1e-300; // J_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let j_prev = k as f64 * two_over_x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        // j_next now holds order k, j_cur order k-1.
        if k <= nmax {
            out[k] = j_next;
        }
        if k % 2 == 0 {
            norm += 2.0 * j_next;
        }
        if j_cur.abs() > BIG {
            j_cur /= BIG;
            j_next /= BIG;
            norm /= BIG;
            for v in out.iter_mut() {
                *v /= BIG;
            }
        }
    }
    out[0] = j_cur;
    norm += j_cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// coth(x), switching to the Laurent leading term 1/x below 1e-6.
pub fn coth_reduced(x: f64) -> f64 {
    if x < 1e-6 {
        1.0 / x
    } else if x > 20.0 {
        1.0 + 2.0 * (-2.0 * x).exp()
    } else {
        1.0 / x.tanh()
    }
}

/// coth(ħω / 2kBT).
pub fn thermal_coth(omega: f64, temperature: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("thermal_coth: omega must be > 0, got {omega}")));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Domain(format!("thermal_coth: temperature must be > 0, got {temperature}")));
    }
    Ok(coth_reduced(HBAR * omega / (2.0 * K_B * temperature)))
}

/// Fermi function of the reduced energy y = E / kBT.
#[inline]
pub fn fermi_reduced(y: f64) -> f64 {
    if y > 0.0 {
        let e = (-y).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + y.exp())
    }
}

/// 1 / (exp(E / kBT) + 1) with energy in joules.
pub fn fermi_dirac(energy: f64, temperature: f64) -> Result<f64> {
    if !energy.is_finite() || !temperature.is_finite() || !(temperature > 0.0) {
        return Err(Error::Domain(format!("fermi_dirac: bad inputs energy={energy}, temperature={temperature}")));
    }
    Ok(fermi_reduced(energy / (K_B * temperature)))
}

// Bernoulli numbers B_2 .. B_16.
const BERNOULLI: [f64; 8] =
    [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0, -3617.0 / 510.0];

const ASYMPTOTIC_RADIUS: f64 = 16.0;

fn check_half_plane(z: Complex64) {
    debug_assert!(z.re > 0.0, "polygamma evaluated at Re z <= 0: {z}");
}

/// Digamma ψ(z) for Re z > 0.
pub fn digamma(mut z: Complex64) -> Complex64 {
    check_half_plane(z);
    let mut acc = Complex64::new(0.0, 0.0);
    while z.norm() < ASYMPTOTIC_RADIUS {
        acc -= z.inv();
        z += 1.0;
    }
    let inv = z.inv();
    let inv2 = inv * inv;
    let mut series = Complex64::new(0.0, 0.0);
    let mut pow = inv2;
    for (k, b) in BERNOULLI.iter().enumerate() {
        series += pow * (*b / (2.0 * (k as f64 + 1.0)));
        pow *= inv2;
    }
    acc + z.ln() - 0.5 * inv - series
}

/// Trigamma ψ'(z) for Re z > 0.
pub fn trigamma(mut z: Complex64) -> Complex64 {
    check_half_plane(z);
    let mut acc = Complex64::new(0.0, 0.0);
    while z.norm() < ASYMPTOTIC_RADIUS {
        acc += (z * z).inv();
        z += 1.0;
    }
    let inv = z.inv();
    let inv2 = inv * inv;
    let mut series = inv + 0.5 * inv2;
    let mut pow = inv2 * inv;
    for b in BERNOULLI.iter() {
        series += pow * *b;
        pow *= inv2;
    }
    acc + series
}

/// Tetragamma ψ''(z) for Re z > 0.
pub fn tetragamma(mut z: Complex64) -> Complex64 {
    check_half_plane(z);
    let mut acc = Complex64::new(0.0, 0.0);
    while z.norm() < ASYMPTOTIC_RADIUS {
        acc -= 2.0 * (z * z * z).inv();
        z += 1.0;
    }
    let inv = z.inv();
    let inv2 = inv * inv;
    let mut series = -inv2 - inv2 * inv;
    let mut pow = inv2 * inv2;
    for (k, b) in BERNOULLI.iter().enumerate() {
        series -= pow * (*b * (2.0 * k as f64 + 3.0));
        pow *= inv2;
    }
    acc + series
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    /// Power series oracle, 40 terms.
    fn bessel_series(n: u32, x: f64) -> f64 {
        let h = x / 2.0;
        let mut term = h.powi(n as i32);
        for k in 1..=n {
            term /= k as f64;
        }
        let mut sum = term;
        for k in 1..40 {
            term *= -h * h / (k as f64 * (k + n) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn bessel_examples() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(2, 0.0).unwrap(), 0.0);
        let oracle = bessel_series(1, 1.0);
        assert!((oracle - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((bessel_j(1, 1.0).unwrap() - oracle).abs() < 1e-14);
        assert!(bessel_j(0, 2.404_825_56).unwrap().abs() < 1e-7);
    }

    #[test]
    fn bessel_matches_series_small_x() {
        for n in 0..20u32 {
            for &x in &[0.01, 0.3, 1.0, 2.5, 5.0, 8.0] {
                let a = bessel_j(n as i32, x).unwrap();
                let b = bessel_series(n, x);
                assert!((a - b).abs() <= 1e-13 * b.abs().max(1e-3), "n={n} x={x} {a} {b}");
            }
        }
    }

    #[test]
    fn bessel_frozen_large_argument() {
        // mpmath.besselj at 30 digits, frozen.
        let cases = [
            (0, 100.0, 0.019_985_850_304_223_122),
            (5, 150.0, -0.064_998_631_740_725_846),
            (16, 200.0, 0.020_074_740_412_495_575),
            (64, 50.0, 6.358_383_300_675_205_9e-5),
            (3, 60.0, -0.040_396_711_521_655_157),
        ];
        for (n, x, v) in cases {
            let got = bessel_j(n, x).unwrap();
            assert!((got - v).abs() <= 1e-12 * v.abs() + 1e-16, "J_{n}({x}) = {got}, want {v}");
        }
    }

    #[test]
    fn bessel_negative_order_and_errors() {
        let j3 = bessel_j(3, 2.0).unwrap();
        assert_eq!(bessel_j(-3, 2.0).unwrap(), -j3);
        assert_eq!(bessel_j(-4, 2.0).unwrap(), bessel_j(4, 2.0).unwrap());
        assert!(matches!(bessel_j(65, 1.0), Err(Error::UnsupportedOrder(65))));
        assert!(matches!(bessel_j(1, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn table_prefix_is_bitwise_stable() {
        for &x in &[0.3, 7.0, 140.0] {
            let long = bessel_j_table(64, x);
            let short = bessel_j_table(5, x);
            assert_eq!(&long[..6], &short[..]);
            assert_eq!(bessel_j(17, x).unwrap(), long[17]);
        }
    }

    #[test]
    fn recurrence_residuals() {
        for &x in &[0.5, 3.0, 25.0, 180.0] {
            let t = bessel_j_table(64, x);
            for k in 1..63 {
                let r = t[k - 1] + t[k + 1] - 2.0 * k as f64 / x * t[k];
                assert!(r.abs() < 1e-10, "x={x} k={k} residual {r}");
            }
        }
    }

    #[test]
    fn coth_examples() {
        assert!((coth_reduced(50.0) - 1.0).abs() < 1e-12);
        assert!((coth_reduced(1e-9) - 1e9).abs() < 1.0);
        assert!((coth_reduced(1.0) - 1.313_035_285_499_331_3).abs() < 1e-12);
        assert!(thermal_coth(0.0, 1.0).is_err());
        assert!(thermal_coth(1.0, -1.0).is_err());
    }

    #[test]
    fn fermi_examples() {
        assert_eq!(fermi_reduced(0.0), 0.5);
        assert_eq!(fermi_reduced(1000.0), 0.0);
        assert!((fermi_reduced(1.0) - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!(fermi_dirac(1e-20, 0.0).is_err());
        let e = K_B * 300.0;
        assert!((fermi_dirac(e, 300.0).unwrap() - fermi_reduced(1.0)).abs() < 1e-15);
    }

    #[test]
    fn polygamma_frozen() {
        // mpmath.psi(k, z), frozen.
        let z = Complex64::new(0.5, 3.0);
        let d = digamma(z);
        assert!((d - Complex64::new(1.093_886_531_678_844_0, 1.570_796_306_335_550_6)).norm() < 1e-13);
        let t = trigamma(z);
        assert!((t - Complex64::new(1.285_498_612_855_845_2e-7, -0.336_552_753_309_577_81)).norm() < 1e-13);
        let q = tetragamma(z);
        assert!((q - Complex64::new(0.114_430_198_442_575_75, 8.077_025_891_493_742e-7)).norm() < 1e-13);
        let w = Complex64::new(0.503, -7.0);
        let t = trigamma(w);
        assert!((t - Complex64::new(6.154_065_426_966_552e-5, 0.143_101_834_926_347_95)).norm() < 1e-13);
    }

    #[test]
    fn polygamma_recurrences() {
        let z = Complex64::new(0.7, -0.4);
        assert!((digamma(z + 1.0) - digamma(z) - z.inv()).norm() < 1e-13);
        assert!((trigamma(z) - trigamma(z + 1.0) - (z * z).inv()).norm() < 1e-12);
        let h = 1e-5;
        let fd = (trigamma(z + h) - trigamma(z - h)) / (2.0 * h);
        assert!((fd - tetragamma(z)).norm() < 1e-7);
    }
}
