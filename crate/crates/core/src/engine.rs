//! Dephasing observables: Φ_s, Φ_c and Ψ_c harmonics, Bell-state decay
//! exponents, coherence phases and characteristic timescales.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{E_CHARGE, GAMMA_E, HBAR, K_B, M0, MU0, M_E};
use crate::error::{Diagnostics, Error, Result, Warning};
use crate::filters::{filter_integral, filter_weight, FrequencyIntegralConfig, PulseSequence};
use crate::kernel::{
    channel_sign, even_indices, odd_indices, orientation_constants, AngularSpectrum, KernelOptions,
    OrientationConstants, PairGeometry, QubitOrientation, ResponseField,
};

/// Pulse sequence, evaluation time and bath temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub seq: PulseSequence,
    /// Evaluation time, s.
    pub t: f64,
    /// Temperature entering coth(ħω/2kBT), K.
    pub temperature: f64,
    pub freq: FrequencyIntegralConfig,
}

impl Measurement {
    pub fn validate(&self) -> Result<()> {
        self.seq.validate()?;
        self.freq.validate()?;
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::Invalid(format!("evaluation time must be > 0, got {}", self.t)));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Invalid(format!("temperature must be > 0, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// μ₀²m₀²/4ħπ³.
pub fn dephasing_prefactor() -> f64 {
    MU0 * MU0 * M0 * M0 / (4.0 * HBAR * PI.powi(3))
}

/// Harmonic tables for one response, height and measurement. Building it is
/// the expensive step; every geometry and orientation reuses it.
pub struct Dephasometer<'a> {
    response: &'a ResponseField,
    meas: Measurement,
    kernel: KernelOptions,
    z: f64,
    m_max: usize,
    /// Quasi-static table at the reference frequency and the filter weight.
    quasi_static: Option<(AngularSpectrum, f64)>,
    diagnostics: Diagnostics,
}

impl<'a> Dephasometer<'a> {
    /// Prepares tables for Φ harmonics up to |m| = 2N (+1 when the response
    /// has odd harmonics).
    pub fn new(response: &'a ResponseField, z: f64, meas: Measurement, kernel: KernelOptions) -> Result<Self> {
        meas.validate()?;
        kernel.validate()?;
        if !(z > 0.0) {
            return Err(Error::Invalid(format!("height z must be > 0, got {z}")));
        }
        let n = kernel.truncation;
        let m_max = if response.is_inversion_symmetric() { 2 * n } else { 2 * n + 1 };
        let mut diagnostics = Diagnostics::default();
        let quasi_static = if meas.freq.quasi_static {
            let omega = meas.seq.reference_frequency(meas.t);
            let spectrum = AngularSpectrum::build(response, z, omega, m_max, &kernel)?;
            diagnostics.extend(spectrum.diagnostics.clone());
            let weight = filter_weight(&meas.seq, meas.t, &meas.freq, meas.temperature)?;
            Some((spectrum, weight))
        } else {
            None
        };
        Ok(Dephasometer { response, meas, kernel, z, m_max, quasi_static, diagnostics })
    }

    pub fn measurement(&self) -> &Measurement {
        &self.meas
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn truncation(&self) -> usize {
        self.kernel.truncation
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    /// ∫dω ω coth F ∫dq q e^{−2qz} W_m(qD) R^m for each m, times P.
    fn filtered_integrals(&self, d: f64, c: &OrientationConstants, ms: &[i32]) -> Result<Vec<Complex64>> {
        let p = self.response.units.prefactor;
        if let Some((spectrum, weight)) = &self.quasi_static {
            let v = spectrum.channel_integrals(d, c, ms)?;
            return Ok(v.into_iter().map(|x| x * weight * p).collect());
        }
        // Full frequency quadrature: one table per frequency node, shared by
        // every channel through the memo.
        let mut memo: HashMap<u64, Vec<Complex64>> = HashMap::new();
        let mut failure: Option<Error> = None;
        let mut out = Vec::with_capacity(ms.len());
        for (idx, _) in ms.iter().enumerate() {
            let mut parts = [0.0; 2];
            for (part, slot) in parts.iter_mut().enumerate() {
                let value = filter_integral(
                    &self.meas.seq,
                    self.meas.t,
                    &self.meas.freq,
                    |omega| {
                        if failure.is_some() {
                            return 0.0;
                        }
                        let key = omega.to_bits();
                        if let Entry::Vacant(slot) = memo.entry(key) {
                            let row = AngularSpectrum::build(
                                self.response,
                                self.z,
                                omega.max(1e-300),
                                self.m_max,
                                &self.kernel,
                            )
                            .and_then(|s| s.channel_integrals(d, c, ms));
                            match row {
                                Ok(r) => {
                                    slot.insert(r);
                                }
                                Err(e) => {
                                    failure = Some(e);
                                    return 0.0;
                                }
                            }
                        }
                        let v = memo[&key][idx];
                        if part == 0 {
                            v.re
                        } else {
                            v.im
                        }
                    },
                    self.meas.temperature,
                )?;
                *slot = value;
            }
            if let Some(e) = failure.take() {
                return Err(e);
            }
            out.push(Complex64::new(parts[0], parts[1]) * p);
        }
        Ok(out)
    }

    /// Φ_c^{2n} for n = −N..=N as (2n, value).
    pub fn phi_c_harmonics(
        &self,
        d: f64,
        oi: &QubitOrientation,
        oj: &QubitOrientation,
    ) -> Result<Vec<(i32, Complex64)>> {
        self.signed_channels(d, oi, oj, &even_indices(self.kernel.truncation))
    }

    /// Ψ_c^{2n+1} for n = −N−1..=N as (2n+1, value). Identically zero for
    /// inversion-symmetric responses.
    pub fn psi_c_harmonics(
        &self,
        d: f64,
        oi: &QubitOrientation,
        oj: &QubitOrientation,
    ) -> Result<Vec<(i32, Complex64)>> {
        let ms = odd_indices(self.kernel.truncation);
        if self.response.is_inversion_symmetric() {
            return Ok(ms.into_iter().map(|m| (m, Complex64::new(0.0, 0.0))).collect());
        }
        self.signed_channels(d, oi, oj, &ms)
    }

    fn signed_channels(
        &self,
        d: f64,
        oi: &QubitOrientation,
        oj: &QubitOrientation,
        ms: &[i32],
    ) -> Result<Vec<(i32, Complex64)>> {
        oi.validate()?;
        oj.validate()?;
        if !(d >= 0.0) {
            return Err(Error::Invalid(format!("separation D must be >= 0, got {d}")));
        }
        let c = orientation_constants(oi, oj);
        let v = self.filtered_integrals(d, &c, ms)?;
        let pre = dephasing_prefactor();
        Ok(ms.iter().zip(v).map(|(&m, x)| (m, pre * channel_sign(m) * x)).collect())
    }

    /// Φ_s^{2n} for 2n ∈ {−2, 0, 2} of a qubit whose azimuth is measured in
    /// the material frame. Weights 𝒦′₀ = cos²φ + ½sin²φ, 𝒦′_{±2} = ¼sin²φ.
    pub fn phi_s_harmonics(&self, o: &QubitOrientation) -> Result<[Complex64; 3]> {
        o.validate()?;
        let (s, c) = o.phi.sin_cos();
        let k0 = c * c + 0.5 * s * s;
        let k2 = 0.25 * s * s;
        let raw = self.radial_moments()?;
        let pre = dephasing_prefactor();
        Ok([pre * k2 * raw[0], pre * k0 * raw[1], pre * k2 * raw[2]])
    }

    /// Filtered ∫dq q e^{−2qz} R^m for m = −2, 0, 2 (times P). At D = 0 only
    /// J₀ survives, so constant sets that place J₀ on each channel give the
    /// bare moments.
    fn radial_moments(&self) -> Result<Vec<Complex64>> {
        [(-2, unit_constants(0.0, 0.0, -1.0)), (0, unit_constants(1.0, 0.0, 0.0)), (2, unit_constants(0.0, -1.0, 0.0))]
            .iter()
            .map(|(m, c)| Ok(self.filtered_integrals(0.0, c, &[*m])?[0]))
            .collect()
    }

    /// Φ_s at absolute azimuth α (material frame).
    pub fn phi_s(&self, o: &QubitOrientation) -> Result<f64> {
        let h = self.phi_s_harmonics(o)?;
        Ok(resum_phi_s(&h, o.alpha))
    }

    /// Full result for one geometry. Orientation azimuths are relative to
    /// the pair axis; single-qubit values use α + β.
    pub fn evaluate(
        &self,
        geom: &PairGeometry,
        oi: &QubitOrientation,
        oj: &QubitOrientation,
    ) -> Result<DephasingResult> {
        geom.validate()?;
        if (geom.z - self.z).abs() > 1e-12 * self.z {
            return Err(Error::Invalid("geometry height differs from the prepared tables".into()));
        }
        let phi_c_harmonics = self.phi_c_harmonics(geom.d, oi, oj)?;
        let psi_c_harmonics = self.psi_c_harmonics(geom.d, oi, oj)?;
        let hi = self.phi_s_harmonics(oi)?;
        let hj = self.phi_s_harmonics(oj)?;
        let mut result = DephasingResult {
            phi_s_i: resum_phi_s(&hi, oi.alpha + geom.beta),
            phi_s_j: resum_phi_s(&hj, oj.alpha + geom.beta),
            phi_s_i_harmonics: hi,
            phi_s_j_harmonics: hj,
            alpha_i: oi.alpha,
            alpha_j: oj.alpha,
            phi_c_harmonics,
            psi_c_harmonics,
            t: self.meas.t,
            diagnostics: self.diagnostics.clone(),
        };
        result.check_truncation(self.kernel.truncation);
        let beta = geom.beta;
        let mut d = Diagnostics::default();
        let _ = result.phi_c_checked(beta, &mut d);
        let _ = result.psi_c_checked(beta, &mut d);
        result.diagnostics.extend(d);
        result.check_cauchy_schwarz(beta);
        Ok(result)
    }
}

fn unit_constants(k0: f64, k1: f64, k2: f64) -> OrientationConstants {
    OrientationConstants {
        k0,
        k1: Complex64::new(k1, 0.0),
        k2: Complex64::new(k2, 0.0),
        k3: Complex64::new(0.0, 0.0),
        k4: Complex64::new(0.0, 0.0),
    }
}

fn resum_phi_s(h: &[Complex64; 3], alpha: f64) -> f64 {
    let e = Complex64::from_polar(1.0, 2.0 * alpha);
    (h[1] + h[2] * e + h[0] * e.conj()).re
}

/// Harmonic tables and single-qubit values of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DephasingResult {
    pub phi_s_i: f64,
    pub phi_s_j: f64,
    /// Φ_s^{−2}, Φ_s^0, Φ_s^2 of each qubit.
    pub phi_s_i_harmonics: [Complex64; 3],
    pub phi_s_j_harmonics: [Complex64; 3],
    /// Pair-relative azimuths, so Φ_s(β) can be re-evaluated.
    pub alpha_i: f64,
    pub alpha_j: f64,
    pub phi_c_harmonics: Vec<(i32, Complex64)>,
    pub psi_c_harmonics: Vec<(i32, Complex64)>,
    /// Evaluation time, s.
    pub t: f64,
    pub diagnostics: Diagnostics,
}

fn resum(h: &[(i32, Complex64)], beta: f64, diagnostics: &mut Diagnostics) -> f64 {
    let sum: Complex64 = h.iter().map(|(m, v)| v * Complex64::from_polar(1.0, *m as f64 * beta)).sum();
    let scale = h.iter().map(|(_, v)| v.norm()).sum::<f64>();
    if scale > 0.0 && sum.im.abs() > 1e-10 * scale {
        diagnostics.push(Warning::ImaginaryResidual { ratio: sum.im.abs() / scale });
    }
    sum.re
}

impl DephasingResult {
    /// Φ_c(β) = Σ e^{i2nβ} Φ_c^{2n}.
    pub fn phi_c(&self, beta: f64) -> f64 {
        self.phi_c_checked(beta, &mut Diagnostics::default())
    }

    /// Ψ_c(β) = Σ e^{i(2n+1)β} Ψ_c^{2n+1}.
    pub fn psi_c(&self, beta: f64) -> f64 {
        self.psi_c_checked(beta, &mut Diagnostics::default())
    }

    pub fn phi_c_checked(&self, beta: f64, d: &mut Diagnostics) -> f64 {
        resum(&self.phi_c_harmonics, beta, d)
    }

    pub fn psi_c_checked(&self, beta: f64, d: &mut Diagnostics) -> f64 {
        resum(&self.psi_c_harmonics, beta, d)
    }

    /// Single-qubit exponents at pair angle β.
    pub fn phi_s_at(&self, beta: f64) -> (f64, f64) {
        (
            resum_phi_s(&self.phi_s_i_harmonics, self.alpha_i + beta),
            resum_phi_s(&self.phi_s_j_harmonics, self.alpha_j + beta),
        )
    }

    /// Φ_c^{2n} for a given 2n (zero if outside the table).
    pub fn phi_c_harmonic(&self, m: i32) -> Complex64 {
        self.phi_c_harmonics.iter().find(|(k, _)| *k == m).map(|(_, v)| *v).unwrap_or_default()
    }

    pub fn psi_c_harmonic(&self, m: i32) -> Complex64 {
        self.psi_c_harmonics.iter().find(|(k, _)| *k == m).map(|(_, v)| *v).unwrap_or_default()
    }

    fn check_truncation(&mut self, n: usize) {
        let total: f64 = self.phi_c_harmonics.iter().map(|(_, v)| v.norm()).sum();
        let edge = self.phi_c_harmonic(2 * n as i32).norm();
        if total > 0.0 && edge > 1e-4 * total {
            self.diagnostics.push(Warning::Truncation { order: 2 * n as i32, relative_weight: edge / total });
        }
    }

    /// Warns when |Φ_c| exceeds sqrt(Φ_s(i)Φ_s(j)) by more than 1e-6.
    pub fn check_cauchy_schwarz(&mut self, beta: f64) {
        let (si, sj) = self.phi_s_at(beta);
        let bound = (si.max(0.0) * sj.max(0.0)).sqrt();
        let c = self.phi_c(beta).abs();
        if c > bound * (1.0 + 1e-6) + f64::MIN_POSITIVE {
            let excess = if bound > 0.0 { c / bound - 1.0 } else { f64::INFINITY };
            self.diagnostics.push(Warning::CauchySchwarz { excess });
        }
    }
}

/// Φ(|00⟩+|11⟩) and Φ(|01⟩+|10⟩).
pub fn bell_decays(phi_s_i: f64, phi_s_j: f64, phi_c: f64) -> Result<(f64, f64)> {
    if !(phi_s_i >= 0.0) || !(phi_s_j >= 0.0) {
        return Err(Error::Domain("single-qubit exponents must be >= 0".into()));
    }
    let s = phi_s_i + phi_s_j;
    Ok((s + 2.0 * phi_c, s - 2.0 * phi_c))
}

/// Phase factor acquired by the two-qubit coherence ρ_ab, ab ∈ {12, 13, 24, 34}.
pub fn coherence_phase_evolution(psi_c: f64, index: u32) -> Result<Complex64> {
    match index {
        12 | 34 => Ok(Complex64::from_polar(1.0, psi_c)),
        13 | 24 => Ok(Complex64::from_polar(1.0, -psi_c)),
        other => Err(Error::Invalid(format!("coherence index must be one of 12, 13, 24, 34, got {other}"))),
    }
}

/// Dominant nonzero β-harmonic index |2n| of Φ_c and its dominance ratio
/// over every other nonzero index. Index 0 when no nonzero index carries
/// weight.
pub fn dominant_harmonic(harmonics: &[(i32, Complex64)]) -> (i32, f64) {
    let mut by_index: HashMap<i32, f64> = HashMap::new();
    for (m, v) in harmonics {
        if *m != 0 {
            let e = by_index.entry(m.abs()).or_insert(0.0);
            *e = e.max(v.norm());
        }
    }
    let mut ranked: Vec<(i32, f64)> = by_index.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    match ranked.as_slice() {
        [] => (0, f64::INFINITY),
        [(_, top), ..] if *top == 0.0 => (0, f64::INFINITY),
        [(m, _)] => (*m, f64::INFINITY),
        [(m, top), (_, second), ..] => (*m, if *second > 0.0 { top / second } else { f64::INFINITY }),
    }
}

/// Inputs of the superconductor timescale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScTimescaleInputs {
    /// Carrier density, m⁻².
    pub n2d: f64,
    /// Mobility, m²/(V·s).
    pub mobility: f64,
    /// Film temperature, K.
    pub temperature: f64,
    /// Qubit height, m.
    pub z: f64,
    /// m*/m_e.
    pub effective_mass_ratio: f64,
}

impl ScTimescaleInputs {
    /// FeSe-like: n = 1.8e14 cm⁻², 39 cm²/Vs, 30 K, z = 10 nm, m* = m_e.
    pub fn fese() -> Self {
        ScTimescaleInputs { n2d: 1.8e18, mobility: 39e-4, temperature: 30.0, z: 10e-9, effective_mass_ratio: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        let v = [self.n2d, self.mobility, self.temperature, self.z, self.effective_mass_ratio];
        if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::Invalid("superconductor timescale inputs must all be > 0".into()));
        }
        Ok(())
    }
}

/// t_sc = 2πzħμ / (k_F σ_n Γ_p m₀² μ₀² k_BT) with k_F = sqrt(2πn),
/// σ_n = n e mobility, μ = ħ²k_F²/2m*, Γ_p = e/(2m* mobility).
pub fn timescale_sc(inputs: &ScTimescaleInputs) -> Result<f64> {
    inputs.validate()?;
    let m_star = inputs.effective_mass_ratio * M_E;
    let k_f = (2.0 * PI * inputs.n2d).sqrt();
    let sigma_n = inputs.n2d * E_CHARGE * inputs.mobility;
    let mu = HBAR * HBAR * k_f * k_f / (2.0 * m_star);
    let gamma_p = E_CHARGE / (2.0 * m_star * inputs.mobility);
    Ok(2.0 * PI * inputs.z * HBAR * mu / (k_f * sigma_n * gamma_p * M0 * M0 * MU0 * MU0 * K_B * inputs.temperature))
}

/// Inputs of the magnet timescale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmTimescaleInputs {
    /// Diffusion constant D₀, m²/s.
    pub d0: f64,
    /// χ₀, SI.
    pub chi0: f64,
    /// Gyromagnetic ratio γ, rad/(s·T).
    pub gamma: f64,
    /// Qubit height, m.
    pub z: f64,
    /// Temperature, K.
    pub temperature: f64,
}

impl AmTimescaleInputs {
    /// α-Fe₂O₃-like: D₀ = 8.9 cm²/s, z = 10 nm, T = 200 K, electron γ.
    pub fn hematite(chi0: f64) -> Self {
        AmTimescaleInputs { d0: 8.9e-4, chi0, gamma: GAMMA_E, z: 10e-9, temperature: 200.0 }
    }

    fn validate(&self, need_chi0: bool) -> Result<()> {
        let mut v = vec![self.d0, self.gamma, self.z, self.temperature];
        if need_chi0 {
            v.push(self.chi0);
        }
        if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::Invalid("magnet timescale inputs must all be > 0".into()));
        }
        Ok(())
    }

    fn numerator(&self) -> f64 {
        16.0 * PI * HBAR * self.z * self.z * self.d0
    }

    fn denominator_without_chi0(&self) -> f64 {
        MU0 * MU0 * K_B * self.temperature * self.gamma * self.gamma * M0 * M0
    }
}

/// t_am = 16πħz²D₀ / (μ₀² k_BT χ₀ γ² m₀²).
pub fn timescale_am(inputs: &AmTimescaleInputs) -> Result<f64> {
    inputs.validate(true)?;
    Ok(inputs.numerator() / (inputs.denominator_without_chi0() * inputs.chi0))
}

/// χ₀ for which [`timescale_am`] equals `target` seconds.
pub fn chi0_for_timescale(inputs: &AmTimescaleInputs, target: f64) -> Result<f64> {
    inputs.validate(false)?;
    if !(target > 0.0) {
        return Err(Error::Invalid(format!("target timescale must be > 0, got {target}")));
    }
    Ok(inputs.numerator() / (inputs.denominator_without_chi0() * target))
}
