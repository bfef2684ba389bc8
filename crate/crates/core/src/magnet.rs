//! Spin-diffusion susceptibility of 2D antiferromagnets and d-wave
//! altermagnets. Momenta are in units of 1/l_s, frequencies in units of Γ_m.
//!
//! The field response seen by the qubits is O = q² Im χᴺ cos²(θ_q − θ_N),
//! which is the large-q limit of the reflection coefficient
//! r_ss ≈ q μ₀ χᴺ cos²θ_q / 2.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{GAMMA_E, HBAR};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagParams {
    /// D₂/D₀ in [0, 1); zero gives the antiferromagnet.
    pub d2_over_d0: f64,
    /// Magnon relaxation rate Γ_m, 1/s.
    pub gamma_m: f64,
    /// Isotropic diffusion constant D₀, m²/s.
    pub d0: f64,
    /// ħχ₀γ², SI.
    pub chi0_hbar_gamma2: f64,
    /// Néel axis angle θ_N (0 = x axis).
    #[serde(default)]
    pub neel_angle: f64,
}

impl MagParams {
    /// α-Fe₂O₃-like defaults: D₀ = 8.9 cm²/s, l_s = 3 µm, χ₀ = 1 (SI).
    pub fn hematite(d2_over_d0: f64) -> Self {
        let d0 = 8.9e-4;
        let l_s: f64 = 3e-6;
        MagParams {
            d2_over_d0,
            gamma_m: d0 / (l_s * l_s),
            d0,
            chi0_hbar_gamma2: HBAR * GAMMA_E * GAMMA_E,
            neel_angle: 0.0,
        }
    }

    /// Spin diffusion length sqrt(D₀/Γ_m), m.
    pub fn l_s(&self) -> f64 {
        (self.d0 / self.gamma_m).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_m > 0.0) || !(self.d0 > 0.0) {
            return Err(Error::Invalid("gamma_m and d0 must be > 0".into()));
        }
        if !(self.d2_over_d0 >= 0.0 && self.d2_over_d0 < 1.0) {
            return Err(Error::Invalid(format!("d2_over_d0 must lie in [0, 1), got {}", self.d2_over_d0)));
        }
        if !(self.chi0_hbar_gamma2 > 0.0) || !self.neel_angle.is_finite() {
            return Err(Error::Invalid("chi0_hbar_gamma2 must be > 0 and neel_angle finite".into()));
        }
        Ok(())
    }
}

/// D̃(q̃, θ_q, ω̃) in units of Γ_m.
pub fn diffusion_kernel(params: &MagParams, q_tilde: f64, theta_q: f64, omega_tilde: f64) -> Complex64 {
    let q2 = q_tilde * q_tilde;
    if params.d2_over_d0 == 0.0 {
        return Complex64::new(q2, 0.0);
    }
    let r = params.d2_over_d0;
    let c = (2.0 * theta_q).cos();
    let den = Complex64::new(1.0 + q2, -omega_tilde);
    Complex64::new(q2, 0.0) - r * r * q2 * q2 * c * c / den
}

/// χᴺ / (ħχ₀γ²) = (1 + D̃) / (−iω̃ + 1 + D̃).
pub fn chi_neel(params: &MagParams, q_tilde: f64, theta_q: f64, omega_tilde: f64) -> Complex64 {
    let n = 1.0 + diffusion_kernel(params, q_tilde, theta_q, omega_tilde);
    n / (n - Complex64::new(0.0, omega_tilde))
}

/// q̃² Im[χᴺ/(ħχ₀γ²)] cos²(θ_q − θ_N).
pub fn response_o_magnet(params: &MagParams, q_tilde: f64, theta_q: f64, omega_tilde: f64) -> f64 {
    let c = (theta_q - params.neel_angle).cos();
    q_tilde * q_tilde * chi_neel(params, q_tilde, theta_q, omega_tilde).im * c * c
}

/// q̃² Im χ̃ / ω̃ without the Néel projection, finite as ω̃ → 0.
pub fn reduced_response(params: &MagParams, q_tilde: f64, theta_q: f64, omega_tilde: f64) -> f64 {
    let q2 = q_tilde * q_tilde;
    if omega_tilde < 1e-12 {
        let n = 1.0 + diffusion_kernel(params, q_tilde, theta_q, 0.0).re;
        return q2 / n;
    }
    q2 * chi_neel(params, q_tilde, theta_q, omega_tilde).im / omega_tilde
}

/// One row of the exported magnet map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetMapRow {
    pub q_tilde: f64,
    pub theta_q: f64,
    pub im_chi_norm: f64,
    #[serde(rename = "response_O")]
    pub response_o: f64,
}

/// Samples Im χᴺ and O on a (q̃, θ_q) grid, q̃ major.
pub fn magnet_map(
    params: &MagParams,
    q_grid: &[f64],
    theta_grid: &[f64],
    omega_tilde: f64,
) -> Result<Vec<MagnetMapRow>> {
    params.validate()?;
    let mut rows = Vec::with_capacity(q_grid.len() * theta_grid.len());
    for &q in q_grid {
        if !(q >= 0.0) {
            return Err(Error::Domain(format!("q_tilde must be >= 0, got {q}")));
        }
        for &t in theta_grid {
            rows.push(MagnetMapRow {
                q_tilde: q,
                theta_q: t,
                im_chi_norm: chi_neel(params, q, t, omega_tilde).im,
                response_o: response_o_magnet(params, q, t, omega_tilde),
            });
        }
    }
    Ok(rows)
}

/// Writes rows as CSV with header q_tilde,theta_q,im_chi_norm,response_O.
pub fn write_magnet_map<W: std::io::Write>(rows: &[MagnetMapRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}
