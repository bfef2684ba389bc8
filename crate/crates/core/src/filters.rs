//! Pulse-sequence filter functions and the thermal-weighted frequency
//! integral that turns a noise spectrum into a dephasing exponent.
//!
//! Spectra handed to [`filter_integral`] are *reduced*: the physical noise
//! spectrum divided by ω. The integrand is therefore
//! `ω · coth(ħω / 2kBT) · F(ω, t) · spectrum(ω)`, which keeps the classical
//! limit finite at ω → 0.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, K_B};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive, AdaptiveOptions};
use crate::specfun::coth_reduced;

/// Shape of the control sequence. The evaluation time `t` is passed
/// separately so one sequence can be swept over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseSequence {
    Ramsey,
    Cpmg { n: u32 },
    NarrowBand { omega_dd: f64, b: f64 },
}

impl PulseSequence {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PulseSequence::Ramsey => Ok(()),
            PulseSequence::Cpmg { n } if n >= 1 => Ok(()),
            PulseSequence::Cpmg { .. } => Err(Error::Invalid("CPMG needs n >= 1 pulses".into())),
            PulseSequence::NarrowBand { omega_dd, b } => {
                if !(omega_dd > 0.0) || !omega_dd.is_finite() {
                    return Err(Error::Invalid(format!("narrowband omega_dd must be > 0, got {omega_dd}")));
                }
                if !(b > 0.0 && b <= 0.5) {
                    return Err(Error::Invalid(format!("narrowband bandwidth b must lie in (0, 0.5], got {b}")));
                }
                Ok(())
            }
        }
    }

    /// Toggling times 0 = t0 < t1 < ... < t_{n+1} = t. Empty for NarrowBand.
    pub fn toggling_times(&self, t: f64) -> Vec<f64> {
        match *self {
            PulseSequence::Ramsey => vec![0.0, t],
            PulseSequence::Cpmg { n } => {
                let mut v = Vec::with_capacity(n as usize + 2);
                v.push(0.0);
                for k in 1..=n {
                    v.push((2 * k - 1) as f64 * t / (2 * n) as f64);
                }
                v.push(t);
                v
            }
            PulseSequence::NarrowBand { .. } => Vec::new(),
        }
    }

    /// Frequency at which quasi-static mode samples the spectrum.
    pub fn reference_frequency(&self, t: f64) -> f64 {
        match *self {
            PulseSequence::Ramsey => PI / t,
            PulseSequence::Cpmg { n } => PI * n as f64 / t,
            PulseSequence::NarrowBand { omega_dd, .. } => omega_dd.max(PI / t),
        }
    }

    /// Default cutoff 100·max(πn/t, 1/t); narrowband also covers its box.
    pub fn default_cutoff(&self, t: f64) -> f64 {
        let n = match *self {
            PulseSequence::Cpmg { n } => n as f64,
            _ => 0.0,
        };
        let base = 100.0 * (PI * n / t).max(1.0 / t);
        match *self {
            PulseSequence::NarrowBand { omega_dd, b } => base.max(omega_dd * (1.0 + b)),
            _ => base,
        }
    }
}

#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// F(ω, t) = ½ |∫0^t y(s) e^{iωs} ds|² for the toggling function y.
pub fn filter_value(seq: &PulseSequence, omega: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("filter_value: t must be > 0, got {t}")));
    }
    if !(omega >= 0.0) {
        return Err(Error::Domain(format!("filter_value: omega must be >= 0, got {omega}")));
    }
    Ok(match *seq {
        PulseSequence::Ramsey => {
            let s = sinc(0.5 * omega * t);
            0.5 * t * t * s * s
        }
        PulseSequence::Cpmg { .. } => toggling_filter(&seq.toggling_times(t), omega),
        PulseSequence::NarrowBand { omega_dd, b } => {
            let width = b * omega_dd;
            if (omega - omega_dd).abs() <= 0.5 * width {
                0.5 * PI * t / width
            } else {
                0.0
            }
        }
    })
}

/// Generic toggling-function filter for arbitrary switching times.
pub fn toggling_filter(times: &[f64], omega: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    let mut sign = 1.0;
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d = b - a;
        let amp = sign * d * sinc(0.5 * omega * d);
        let phase = 0.5 * omega * (a + b);
        re += amp * phase.cos();
        im += amp * phase.sin();
        sign = -sign;
    }
    0.5 * (re * re + im * im)
}

/// How the thermal factor enters the frequency integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThermalFactor {
    /// coth(ħω / 2kBT).
    #[default]
    Quantum,
    /// The Laurent term 2kBT / ħω only.
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyIntegralConfig {
    /// ω_c in rad/s; `None` uses [`PulseSequence::default_cutoff`].
    pub cutoff: Option<f64>,
    /// Node budget for the adaptive rule.
    pub nodes: usize,
    pub quasi_static: bool,
    pub thermal: ThermalFactor,
}

impl Default for FrequencyIntegralConfig {
    fn default() -> Self {
        FrequencyIntegralConfig { cutoff: None, nodes: 4_000_000, quasi_static: true, thermal: ThermalFactor::Quantum }
    }
}

impl FrequencyIntegralConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.cutoff {
            if !(c > 0.0) {
                return Err(Error::Invalid(format!("cutoff must be > 0, got {c}")));
            }
        }
        if self.nodes < 16 {
            return Err(Error::Invalid(format!("node budget must be >= 16, got {}", self.nodes)));
        }
        Ok(())
    }
}

fn thermal(mode: ThermalFactor, omega: f64, temperature: f64) -> f64 {
    let x = HBAR * omega / (2.0 * K_B * temperature);
    match mode {
        ThermalFactor::Quantum => coth_reduced(x),
        ThermalFactor::Classical => 1.0 / x,
    }
}

/// ∫0^ωc dω ω coth(ħω/2kBT) F(ω,t) spectrum(ω), or its quasi-static form
/// spectrum(ω_ref) · ∫ ω coth F.
pub fn filter_integral<S: FnMut(f64) -> f64>(
    seq: &PulseSequence,
    t: f64,
    cfg: &FrequencyIntegralConfig,
    mut spectrum: S,
    temperature: f64,
) -> Result<f64> {
    seq.validate()?;
    cfg.validate()?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("filter_integral: t must be > 0, got {t}")));
    }
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!("filter_integral: temperature must be > 0, got {temperature}")));
    }
    if cfg.quasi_static {
        let s = spectrum(seq.reference_frequency(t));
        if s == 0.0 {
            return Ok(0.0);
        }
        return Ok(s * weighted_filter_integral(seq, t, cfg, temperature, |_| 1.0)?);
    }
    weighted_filter_integral(seq, t, cfg, temperature, spectrum)
}

/// Filter weight ∫ ω coth F with unit spectrum. Shared by every quasi-static
/// evaluation at one time point.
pub fn filter_weight(seq: &PulseSequence, t: f64, cfg: &FrequencyIntegralConfig, temperature: f64) -> Result<f64> {
    weighted_filter_integral(seq, t, cfg, temperature, |_| 1.0)
}

fn weighted_filter_integral<S: FnMut(f64) -> f64>(
    seq: &PulseSequence,
    t: f64,
    cfg: &FrequencyIntegralConfig,
    temperature: f64,
    mut spectrum: S,
) -> Result<f64> {
    let cutoff = cfg.cutoff.unwrap_or_else(|| seq.default_cutoff(t));
    let mode = cfg.thermal;
    let breaks: Vec<f64> = match *seq {
        PulseSequence::NarrowBand { omega_dd, b } => {
            let lo = (omega_dd * (1.0 - 0.5 * b)).min(cutoff);
            let hi = (omega_dd * (1.0 + 0.5 * b)).min(cutoff);
            if hi <= lo {
                return Ok(0.0);
            }
            vec![lo, hi]
        }
        _ => {
            // One breakpoint per oscillation period of F keeps the rule
            // from straddling many oscillations.
            let period = 2.0 * PI / t;
            let count = ((cutoff / period).ceil() as usize).clamp(1, 200_000);
            (0..=count).map(|k| cutoff * k as f64 / count as f64).collect()
        }
    };
    let opts = AdaptiveOptions { abs_tol: 0.0, rel_tol: 1e-10, max_segments: (cfg.nodes / 15).max(breaks.len()) };
    let integrand = |w: f64| {
        if w <= 0.0 {
            // ω·coth → 2kBT/ħ at ω → 0 for both thermal modes.
            let f0 = filter_value(seq, 0.0, t).unwrap_or(0.0);
            return 2.0 * K_B * temperature / HBAR * f0 * spectrum(w.max(0.0));
        }
        let f = filter_value(seq, w, t).unwrap_or(0.0);
        if f == 0.0 {
            return 0.0;
        }
        w * thermal(mode, w, temperature) * f * spectrum(w)
    };
    let (v, _) = adaptive(integrand, &breaks, opts)?;
    Ok(v)
}
