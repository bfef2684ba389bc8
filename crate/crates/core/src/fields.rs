//! Response fields for the built-in material models.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::Result;
use crate::kernel::{FieldSpec, ProbeScales, ResponseField, ResponseModel, Rotation, Sampling, Symmetry, Units};
use crate::magnet::{reduced_response, MagParams};
use crate::superconductor::{transverse_conductivity, ConductivityCache, GapKind, ScParams};

/// Default coarse q grid for quadrature-backed responses: 24 log nodes on
/// [0.05, 40]/z.
pub const SC_SAMPLING: Sampling = Sampling::LogGrid { nodes: 24, lo: 0.05, hi: 40.0 };

struct ScModel {
    params: ScParams,
    caches: Mutex<HashMap<u64, ConductivityCache>>,
}

impl ScModel {
    fn cache(&self, omega: f64) -> ConductivityCache {
        let mut caches = self.caches.lock().expect("cache lock poisoned");
        caches.entry(omega.to_bits()).or_insert_with(|| ConductivityCache::new(self.params, omega)).clone()
    }
}

impl ResponseModel for ScModel {
    fn eval(&self, q: f64, theta: f64, omega: f64) -> Result<f64> {
        self.cache(omega).get(q, theta)
    }

    fn eval_raw(&self, q: f64, theta: f64, omega: f64) -> Result<f64> {
        transverse_conductivity(&self.params, q, theta, omega)
    }
}

/// ω Re σᵀ of the BdG superconductor: R = Re σᵀ/σ_n in units of k_F and ħ/μ
/// with prefactor σ_n.
pub fn superconductor_field(params: &ScParams, sampling: Sampling) -> Result<ResponseField> {
    params.validate()?;
    let rotation = match params.gap_kind {
        GapKind::S => Rotation::Isotropic,
        kind => Rotation::Order(kind.symmetry_order().expect("anisotropic gaps declare an order")),
    };
    let spec = FieldSpec {
        label: format!("{:?}-wave superconductor", params.gap_kind).to_lowercase(),
        symmetry: Symmetry { rotation, inversion: true, mirror: true },
        neel_axis: None,
        units: Units { length: 1.0 / params.k_f, time: params.time_unit(), prefactor: params.sigma_n },
        sampling,
        quadrature_backed: true,
        probe: ProbeScales { q: 0.03, omega: 1e-7 },
    };
    ResponseField::new(ScModel { params: *params, caches: Mutex::new(HashMap::new()) }, spec)
}

/// q² Im χᴺ cos²(θ − θ_N) of the spin-diffusion magnet: R = q̃² Im χ̃/ω̃ in
/// units of l_s and 1/Γ_m with prefactor ħχ₀γ²/D₀.
pub fn magnet_field(params: &MagParams) -> Result<ResponseField> {
    params.validate()?;
    let rotation = if params.d2_over_d0 == 0.0 { Rotation::Isotropic } else { Rotation::Order(4) };
    let p = *params;
    let spec = FieldSpec {
        label: if params.d2_over_d0 == 0.0 { "antiferromagnet".into() } else { "altermagnet".into() },
        symmetry: Symmetry { rotation, inversion: true, mirror: true },
        neel_axis: Some(params.neel_angle),
        units: Units {
            length: params.l_s(),
            time: 1.0 / params.gamma_m,
            prefactor: params.chi0_hbar_gamma2 / params.d0,
        },
        sampling: Sampling::Direct,
        quadrature_backed: false,
        probe: ProbeScales { q: 1.0, omega: 1e-3 },
    };
    ResponseField::new(move |q: f64, t: f64, w: f64| reduced_response(&p, q, t, w), spec)
}
