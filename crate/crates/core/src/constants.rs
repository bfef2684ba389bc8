//! CODATA 2018 constants in SI units.

/// Fundamental constants. Only the associated consts are used; the struct
/// exists so the set can be passed around or printed as a unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub mu0: f64,
    pub hbar: f64,
    pub k_b: f64,
    pub electron_gyromagnetic_ratio: f64,
    pub electron_charge: f64,
    pub electron_mass: f64,
}

pub const MU0: f64 = 1.256_637_062_12e-6;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;
pub const GAMMA_E: f64 = 1.760_859_630_23e11;
pub const E_CHARGE: f64 = 1.602_176_634e-19;
pub const M_E: f64 = 9.109_383_701_5e-31;

/// Magnetic moment scale of a spin qubit, m0 = ħγe/2.
pub const M0: f64 = HBAR * GAMMA_E / 2.0;

impl PhysicalConstants {
    pub const SI: PhysicalConstants = PhysicalConstants {
        mu0: MU0,
        hbar: HBAR,
        k_b: K_B,
        electron_gyromagnetic_ratio: GAMMA_E,
        electron_charge: E_CHARGE,
        electron_mass: M_E,
    };

    pub fn m0(&self) -> f64 {
        self.hbar * self.electron_gyromagnetic_ratio / 2.0
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}
