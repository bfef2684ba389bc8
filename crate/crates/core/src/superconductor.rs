//! Mean-field BdG model of a 2D superconductor and its transverse
//! conductivity.
//!
//! Energies are in units of the chemical potential μ and momenta in units of
//! k_F, so the normal dispersion is ε̃ = k̃² − 1. The conductivity is the
//! Kubo bubble of two Nambu spectral functions, normalized to the Drude
//! value σ_n.
//!
//! The ω̃₁ integral is done in closed form. Each spectral function is a sum of
//! two Lorentzians with projector weights, so the frequency integral reduces
//! to ∫ L_Γ(x−a) L_Γ(x−b) w(x) dx, where w is the normalized Fermi window.
//! Partial fractions turn that into values of h(z) = ∫ w(x)/(x−z) dx, which is
//! a trigamma (static window) or a digamma difference (finite ω̃).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{E_CHARGE, HBAR, K_B, M_E};
use crate::error::{Diagnostics, Error, Result, Warning};
use crate::quadrature::{adaptive, adaptive_best, AdaptiveOptions, GaussLegendre};
use crate::specfun::{digamma, fermi_reduced, tetragamma, trigamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapKind {
    S,
    D,
    G,
}

impl GapKind {
    /// Order p of the rotation 2π/p that leaves the conductivity invariant;
    /// `None` for the isotropic s-wave gap.
    pub fn symmetry_order(self) -> Option<u32> {
        match self {
            GapKind::S => None,
            GapKind::D => Some(4),
            GapKind::G => Some(8),
        }
    }
}

impl std::str::FromStr for GapKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s" => Ok(GapKind::S),
            "d" => Ok(GapKind::D),
            "g" => Ok(GapKind::G),
            other => Err(Error::Invalid(format!("unknown gap kind '{other}' (expected s, d or g)"))),
        }
    }
}

/// Δ(θ_k) for the model gaps.
pub fn gap(kind: GapKind, delta0: f64, theta_k: f64) -> f64 {
    match kind {
        GapKind::S => delta0,
        GapKind::D => delta0 * (2.0 * theta_k).sin(),
        GapKind::G => delta0 * (4.0 * theta_k).sin(),
    }
}

/// How the ω̃₁ integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Omega1Rule {
    /// Closed form via complex polygamma functions.
    #[default]
    Analytic,
    /// Composite Gauss–Legendre over |ω̃₁| <= 20 k̃T with `omega1` nodes per
    /// panel and panels no wider than Γ̃/2. Only practical for broad Γ̃.
    GaussLegendre,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScGrid {
    /// Gauss–Legendre nodes per side of the Fermi ring (sinh-mapped).
    pub radial: usize,
    /// Samples used to locate angular resonances.
    pub angular: usize,
    /// Nodes per panel for [`Omega1Rule::GaussLegendre`].
    pub omega1: usize,
    /// Radial half-width δ; `None` means 10·max(Δ̃₀, Γ̃, k̃T).
    pub delta: Option<f64>,
    /// Relative tolerance of the adaptive angular rule.
    pub angular_tol: f64,
}

impl Default for ScGrid {
    fn default() -> Self {
        ScGrid { radial: 64, angular: 128, omega1: 32, delta: None, angular_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScParams {
    pub gap_kind: GapKind,
    pub delta0_over_mu: f64,
    pub gamma_p_over_mu: f64,
    pub kbt_over_mu: f64,
    /// Normal-state sheet conductivity, S.
    pub sigma_n: f64,
    /// Fermi wavevector, 1/m.
    pub k_f: f64,
    /// m*/m_e, used only to convert μ to SI.
    pub effective_mass_ratio: f64,
    pub grid: ScGrid,
    pub omega1_rule: Omega1Rule,
}

impl ScParams {
    /// FeSe-like defaults: n = 1.8e14 cm⁻², mobility 39 cm²/Vs, m* = m_e.
    pub fn fese(kind: GapKind) -> Self {
        let n2d = 1.8e18;
        let mobility = 39e-4;
        let delta0 = 0.005;
        ScParams {
            gap_kind: kind,
            delta0_over_mu: delta0,
            gamma_p_over_mu: 5e-5,
            kbt_over_mu: 0.8 * delta0 / 1.764,
            sigma_n: n2d * E_CHARGE * mobility,
            k_f: (2.0 * PI * n2d).sqrt(),
            effective_mass_ratio: 1.0,
            grid: ScGrid::default(),
            omega1_rule: Omega1Rule::Analytic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if !(self.delta0_over_mu >= 0.0) {
            return bad(format!("delta0_over_mu must be >= 0, got {}", self.delta0_over_mu));
        }
        if !(self.gamma_p_over_mu > 0.0) {
            return bad(format!("gamma_p_over_mu must be > 0, got {}", self.gamma_p_over_mu));
        }
        if !(self.kbt_over_mu > 0.0) {
            return bad(format!("kbt_over_mu must be > 0, got {}", self.kbt_over_mu));
        }
        if !(self.sigma_n > 0.0) || !(self.k_f > 0.0) || !(self.effective_mass_ratio > 0.0) {
            return bad("sigma_n, k_f and effective_mass_ratio must be > 0".into());
        }
        let d = self.window();
        if !(d > 0.0 && d <= 0.5) {
            return bad(format!("radial window delta must lie in (0, 0.5], got {d}"));
        }
        let g = &self.grid;
        if g.radial < 8 || g.angular < 8 || g.omega1 < 8 {
            return bad("grid counts must be >= 8".into());
        }
        if !(g.angular_tol > 0.0 && g.angular_tol < 0.1) {
            return bad(format!("angular_tol must lie in (0, 0.1), got {}", g.angular_tol));
        }
        Ok(())
    }

    /// Radial half-width δ.
    pub fn window(&self) -> f64 {
        self.grid
            .delta
            .unwrap_or_else(|| (10.0 * self.delta0_over_mu.max(self.gamma_p_over_mu).max(self.kbt_over_mu)).min(0.5))
    }

    /// μ in joules.
    pub fn chemical_potential(&self) -> f64 {
        HBAR * HBAR * self.k_f * self.k_f / (2.0 * self.effective_mass_ratio * M_E)
    }

    /// Film temperature in kelvin implied by kbt_over_mu.
    pub fn temperature(&self) -> f64 {
        self.kbt_over_mu * self.chemical_potential() / K_B
    }

    /// ħ/μ in seconds: ω̃ = ω · time_unit.
    pub fn time_unit(&self) -> f64 {
        HBAR / self.chemical_potential()
    }
}

/// Dimensionless Nambu spectral function Ã, a real symmetric 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NambuSpectral(pub [[f64; 2]; 2]);

impl NambuSpectral {
    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Tr[A B].
    pub fn trace_product(&self, other: &NambuSpectral) -> f64 {
        let (a, b) = (&self.0, &other.0);
        a[0][0] * b[0][0] + a[0][1] * b[1][0] + a[1][0] * b[0][1] + a[1][1] * b[1][1]
    }
}

fn spectral_parts(eps: f64, delta: f64, omega: f64, gamma: f64) -> NambuSpectral {
    let w = Complex64::new(omega, gamma);
    let den = w * w - (eps * eps + delta * delta);
    let inv = den.inv();
    let a11 = -((w + eps) * inv).im / PI;
    let a22 = -((w - eps) * inv).im / PI;
    let a12 = -(delta * inv).im / PI;
    NambuSpectral([[a11, a12], [a12, a22]])
}

/// Ã(k̃, ω̃) = −Im[(ω̃ + iΓ̃) − ε̃τ₃ − Δ̃τ₁]⁻¹ / π.
pub fn spectral_function(params: &ScParams, k_tilde: [f64; 2], omega_tilde: f64) -> NambuSpectral {
    let eps = k_tilde[0] * k_tilde[0] + k_tilde[1] * k_tilde[1] - 1.0;
    let theta = k_tilde[1].atan2(k_tilde[0]);
    let delta = gap(params.gap_kind, params.delta0_over_mu, theta);
    spectral_parts(eps, delta, omega_tilde, params.gamma_p_over_mu)
}

/// ∫ Tr Ã dω̃ over |ω̃| <= 50Γ̃ + E plus the analytic Lorentzian tails.
pub fn spectral_trace_normalization(params: &ScParams, k_tilde: [f64; 2]) -> Result<f64> {
    let g = params.gamma_p_over_mu;
    let eps = k_tilde[0] * k_tilde[0] + k_tilde[1] * k_tilde[1] - 1.0;
    let delta = gap(params.gap_kind, params.delta0_over_mu, k_tilde[1].atan2(k_tilde[0]));
    let e = (eps * eps + delta * delta).sqrt();
    let w = 50.0 * g + e;
    let mut breaks = vec![-w, w];
    for c in [-e, e] {
        if c > -w && c < w {
            breaks.push(c);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let opts = AdaptiveOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_segments: 4000 };
    let (inside, _) = adaptive(|x| spectral_function(params, k_tilde, x).trace(), &breaks, opts)?;
    // Each pole ±E carries unit trace weight.
    let tail = |c: f64| (0.5 - ((w - c) / g).atan() / PI) + (0.5 - ((w + c) / g).atan() / PI);
    Ok(inside + tail(e) + tail(-e))
}

/// Normalized Fermi window w(x) and its Cauchy transform h(z).
#[derive(Debug, Clone, Copy)]
struct FermiWindow {
    beta: f64,
    gamma: f64,
    omega: f64,
    quasi_static: bool,
}

impl FermiWindow {
    fn new(kbt: f64, gamma: f64, omega: f64) -> Self {
        FermiWindow { beta: 1.0 / kbt, gamma, omega, quasi_static: omega < 1e-4 * kbt }
    }

    fn weight(&self, x: f64) -> f64 {
        if self.quasi_static {
            let c = (0.5 * self.beta * x).cosh();
            0.25 * self.beta / (c * c)
        } else {
            (fermi_reduced(self.beta * x) - fermi_reduced(self.beta * (x + self.omega))) / self.omega
        }
    }

    #[inline]
    fn arg(&self, z: Complex64) -> Complex64 {
        // 1/2 − iβz/2π
        let c = self.beta / (2.0 * PI);
        Complex64::new(0.5 + c * z.im, -c * z.re)
    }

    /// h(a + iΓ).
    fn h(&self, a: f64) -> Complex64 {
        let z = Complex64::new(a, self.gamma);
        if self.quasi_static {
            Complex64::new(0.0, self.beta / (2.0 * PI)) * trigamma(self.arg(z))
        } else {
            -(digamma(self.arg(z + self.omega)) - digamma(self.arg(z))) / self.omega
        }
    }

    /// h'(a + iΓ).
    fn h_prime(&self, a: f64) -> Complex64 {
        let z = Complex64::new(a, self.gamma);
        let c = self.beta / (2.0 * PI);
        if self.quasi_static {
            c * c * tetragamma(self.arg(z))
        } else {
            Complex64::new(0.0, c) * (trigamma(self.arg(z + self.omega)) - trigamma(self.arg(z))) / self.omega
        }
    }

    /// ∫ L_Γ(x − a) L_Γ(x − b) w(x) dx given h at a and b.
    fn overlap(&self, a: f64, b: f64, ha: Complex64, hb: Complex64) -> f64 {
        let g2 = Complex64::new(a - b, 2.0 * self.gamma);
        let cross = (ha - hb.conj()) / g2;
        let d = a - b;
        let same = if d.abs() < 1e-6 / self.beta { self.h_prime(0.5 * (a + b)) } else { (ha - hb) / d };
        (cross - same).re / (2.0 * PI * PI)
    }
}

/// Everything fixed for one (q̃, θ_q, ω̃) evaluation.
struct Bubble {
    kind: GapKind,
    delta0: f64,
    q: f64,
    omega: f64,
    window: FermiWindow,
    // sin/cos of pθ_q for the gap rotation.
    s2: f64,
    c2: f64,
    s4: f64,
    c4: f64,
}

struct PointState {
    eps_m: f64,
    eps_p: f64,
    gap_m: f64,
    gap_p: f64,
    e_m: f64,
    e_p: f64,
}

impl Bubble {
    fn new(params: &ScParams, q: f64, theta_q: f64, omega: f64) -> Self {
        Bubble {
            kind: params.gap_kind,
            delta0: params.delta0_over_mu,
            q,
            omega,
            window: FermiWindow::new(params.kbt_over_mu, params.gamma_p_over_mu, omega),
            s2: (2.0 * theta_q).sin(),
            c2: (2.0 * theta_q).cos(),
            s4: (4.0 * theta_q).sin(),
            c4: (4.0 * theta_q).cos(),
        }
    }

    /// Gap at a momentum given in the q̂ frame.
    #[inline]
    fn gap_at(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            GapKind::S => self.delta0,
            _ => {
                let r2 = x * x + y * y;
                if r2 == 0.0 {
                    return 0.0;
                }
                let cos2 = (x * x - y * y) / r2;
                let sin2 = 2.0 * x * y / r2;
                if self.kind == GapKind::D {
                    self.delta0 * (self.s2 * cos2 + self.c2 * sin2)
                } else {
                    let cos4 = cos2 * cos2 - sin2 * sin2;
                    let sin4 = 2.0 * sin2 * cos2;
                    self.delta0 * (self.s4 * cos4 + self.c4 * sin4)
                }
            }
        }
    }

    #[inline]
    fn state(&self, k: f64, psi: f64) -> (PointState, f64) {
        let (s, c) = psi.sin_cos();
        let (x, y) = (k * c, k * s);
        let h = 0.5 * self.q;
        let (xm, xp) = (x - h, x + h);
        let eps_m = xm * xm + y * y - 1.0;
        let eps_p = xp * xp + y * y - 1.0;
        let gap_m = self.gap_at(xm, y);
        let gap_p = self.gap_at(xp, y);
        let e_m = (eps_m * eps_m + gap_m * gap_m).sqrt();
        let e_p = (eps_p * eps_p + gap_p * gap_p).sqrt();
        (PointState { eps_m, eps_p, gap_m, gap_p, e_m, e_p }, y)
    }

    /// E(k₊) − E(k₋): intraband resonances sit where this equals ±ω̃.
    fn detuning(&self, k: f64, psi: f64) -> f64 {
        let (st, _) = self.state(k, psi);
        st.e_p - st.e_m
    }

    /// v_T² Σ_{ss'} Tr[P_s P_s'] ∫ L L w, analytic ω̃₁ integral.
    fn integrand(&self, k: f64, psi: f64) -> f64 {
        let (st, y) = self.state(k, psi);
        let vt2 = 4.0 * y * y;
        if vt2 == 0.0 {
            return 0.0;
        }
        let ee = st.e_m * st.e_p;
        let coh = if ee > 0.0 { (st.eps_m * st.eps_p + st.gap_m * st.gap_p) / ee } else { 0.0 };
        let w = &self.window;
        let a = [st.e_m, -st.e_m];
        let b = [st.e_p - self.omega, -st.e_p - self.omega];
        let ha0 = w.h(a[0]);
        let ha1 = if w.quasi_static { -ha0.conj() } else { w.h(a[1]) };
        let hb0 = w.h(b[0]);
        let hb1 = if w.quasi_static { -hb0.conj() } else { w.h(b[1]) };
        let ha = [ha0, ha1];
        let hb = [hb0, hb1];
        let mut sum = 0.0;
        for (i, si) in [1.0, -1.0].iter().enumerate() {
            for (j, sj) in [1.0, -1.0].iter().enumerate() {
                let weight = 0.5 * (1.0 + si * sj * coh);
                if weight == 0.0 {
                    continue;
                }
                sum += weight * w.overlap(a[i], b[j], ha[i], hb[j]);
            }
        }
        vt2 * sum
    }

    /// Same integrand with a numerical ω̃₁ rule and explicit matrices.
    fn integrand_numeric(&self, k: f64, psi: f64, nodes: &[f64], weights: &[f64], gamma: f64) -> f64 {
        let (st, y) = self.state(k, psi);
        let vt2 = 4.0 * y * y;
        let mut acc = 0.0;
        for (x, wx) in nodes.iter().zip(weights) {
            let am = spectral_parts(st.eps_m, st.gap_m, *x, gamma);
            let ap = spectral_parts(st.eps_p, st.gap_p, x + self.omega, gamma);
            acc += wx * am.trace_product(&ap) * self.window.weight(*x);
        }
        vt2 * acc
    }
}

/// Angular breakpoint with the width of the resonance anchored there.
#[derive(Debug, Clone, Copy)]
struct Anchor {
    psi: f64,
    width: f64,
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

impl Bubble {
    /// Breakpoints in ψ ∈ [0, 2π]: resonance roots and near-tangencies found
    /// on a uniform scan, plus ψ = π/2, 3π/2 where normal-state resonances
    /// live.
    fn anchors(&self, k: f64, samples: usize, gamma: f64) -> Vec<Anchor> {
        let two_pi = 2.0 * PI;
        let targets: Vec<f64> = if self.omega > 0.1 * gamma { vec![self.omega, -self.omega] } else { vec![0.0] };
        let grid: Vec<f64> = (0..=samples).map(|j| two_pi * j as f64 / samples as f64).collect();
        let g: Vec<f64> = grid.iter().map(|&p| self.detuning(k, p)).collect();
        let mut pts: Vec<f64> = vec![0.0, 0.5 * PI, PI, 1.5 * PI, two_pi];
        for &t in &targets {
            for j in 0..samples {
                let (f0, f1) = (g[j] - t, g[j + 1] - t);
                if f0 == 0.0 {
                    pts.push(grid[j]);
                } else if (f0 > 0.0) != (f1 > 0.0) && f1 != 0.0 {
                    pts.push(bisect(|p| self.detuning(k, p) - t, grid[j], grid[j + 1], f0));
                }
            }
            // Local minima of |g - t| that do not cross: tangential resonances.
            for j in 1..samples {
                let (l, c, r) = ((g[j - 1] - t).abs(), (g[j] - t).abs(), (g[j + 1] - t).abs());
                if c < l && c < r && c < 20.0 * gamma {
                    pts.push(grid[j]);
                }
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
        let n = pts.len();
        pts.iter()
            .enumerate()
            .map(|(i, &p)| {
                let left = if i > 0 { p - pts[i - 1] } else { f64::INFINITY };
                let right = if i + 1 < n { pts[i + 1] - p } else { f64::INFINITY };
                let half = 0.5 * left.min(right);
                let h = 1e-7;
                let slope = (self.detuning(k, p + h) - self.detuning(k, p - h)) / (2.0 * h);
                let width = if slope.abs() > 0.0 { 2.0 * gamma / slope.abs() } else { half };
                Anchor { psi: p, width: width.clamp(1e-12, half.max(1e-12)) }
            })
            .collect()
    }

    /// ∫0^{2π} dψ f(k, ψ) with endpoint-focused sinh maps between anchors.
    fn angular<F: Fn(f64) -> f64>(&self, anchors: &[Anchor], tol: f64, f: F) -> Result<f64> {
        // Each gap between anchors becomes two pieces, each mapped onto a
        // unit interval of a virtual axis.
        struct Piece {
            origin: f64,
            dir: f64,
            width: f64,
            span: f64,
        }
        let mut pieces = Vec::with_capacity(2 * anchors.len());
        for w in anchors.windows(2) {
            let half = 0.5 * (w[1].psi - w[0].psi);
            if half <= 0.0 {
                continue;
            }
            for (a, dir) in [(w[0], 1.0), (w[1], -1.0)] {
                let width = a.width.min(half);
                pieces.push(Piece { origin: a.psi, dir, width, span: (half / width).asinh() });
            }
        }
        let map = |tau: f64| -> f64 {
            let j = (tau.floor() as usize).min(pieces.len() - 1);
            let p = &pieces[j];
            let u = (tau - j as f64) * p.span;
            let psi = p.origin + p.dir * p.width * u.sinh();
            f(psi) * p.width * p.span * u.cosh()
        };
        let breaks: Vec<f64> = (0..=pieces.len()).map(|j| j as f64).collect();
        let opts = AdaptiveOptions { abs_tol: 0.0, rel_tol: tol, max_segments: 4000 };
        let est = adaptive_best(map, &breaks, opts)?;
        // Accept a run that ends within two decades of the target; the
        // radial sum averages such residuals out.
        if est.converged || est.error <= 100.0 * tol * est.value.abs() {
            Ok(est.value)
        } else {
            Err(Error::NonConvergence(format!(
                "angular k-space integral: estimate {:.6e} ± {:.3e} after {} segments",
                est.value, est.error, opts.max_segments
            )))
        }
    }
}

/// Re σᵀ(q̃, θ_q, ω̃) / σ_n.
pub fn transverse_conductivity(params: &ScParams, q_tilde: f64, theta_q: f64, omega_tilde: f64) -> Result<f64> {
    conductivity_with_grid(params, &params.grid, q_tilde, theta_q, omega_tilde)
}

/// As [`transverse_conductivity`], then repeats with doubled radial and
/// angular grids and with δ halved, and reports any change above 1%.
pub fn transverse_conductivity_checked(
    params: &ScParams,
    q_tilde: f64,
    theta_q: f64,
    omega_tilde: f64,
) -> Result<(f64, Diagnostics)> {
    let base = transverse_conductivity(params, q_tilde, theta_q, omega_tilde)?;
    let mut diag = Diagnostics::default();
    let mut variants: Vec<(&str, ScGrid)> = Vec::new();
    let g = params.grid;
    variants.push(("radial", ScGrid { radial: 2 * g.radial, ..g }));
    variants.push(("angular", ScGrid { angular: 2 * g.angular, angular_tol: 0.1 * g.angular_tol, ..g }));
    if params.omega1_rule == Omega1Rule::GaussLegendre {
        variants.push(("omega1", ScGrid { omega1: 2 * g.omega1, ..g }));
    }
    for (what, grid) in variants {
        let v = conductivity_with_grid(params, &grid, q_tilde, theta_q, omega_tilde)?;
        let rel = (v - base).abs() / base.abs().max(1e-300);
        if rel > 0.01 {
            diag.push(Warning::GridConvergence { what: what.to_string(), relative_change: rel });
        }
    }
    Ok((base, diag))
}

fn conductivity_with_grid(params: &ScParams, grid: &ScGrid, q: f64, theta_q: f64, omega: f64) -> Result<f64> {
    params.validate()?;
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::Domain(format!("q_tilde must be >= 0, got {q}")));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("omega_tilde must be > 0, got {omega}")));
    }
    let ring2 = 1.0 - 0.25 * q * q;
    if ring2 <= 0.0 {
        // No momentum puts both k± on the Fermi surface.
        return Ok(0.0);
    }
    let gamma = params.gamma_p_over_mu;
    let bubble = Bubble::new(params, q, theta_q, omega);
    let k_c = ring2.sqrt();
    let delta = grid.delta.unwrap_or_else(|| params.window());

    // Radial focus: the narrowest radial structure is the coherence feature
    // at k_c, whose width is about Γ̃·Δ̃/q̃ in ε̃.
    let ratio = (params.delta0_over_mu.max(gamma) / q.max(gamma)).clamp(1e-3, 1.0);
    let focus = 0.1 * gamma * ratio;
    let gl = GaussLegendre::new(grid.radial);

    let omega1 = match params.omega1_rule {
        Omega1Rule::Analytic => None,
        Omega1Rule::GaussLegendre => {
            let half = 20.0 * params.kbt_over_mu + omega;
            let panels = ((2.0 * half) / (0.5 * gamma)).ceil().max(1.0) as usize;
            let rule = GaussLegendre::new(grid.omega1);
            let mut xs = Vec::with_capacity(panels * grid.omega1);
            let mut ws = Vec::with_capacity(panels * grid.omega1);
            for p in 0..panels {
                let a = -half + 2.0 * half * p as f64 / panels as f64;
                let b = -half + 2.0 * half * (p + 1) as f64 / panels as f64;
                let (x, w) = rule.on(a, b);
                xs.extend(x);
                ws.extend(w);
            }
            Some((xs, ws))
        }
    };

    let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(2 * grid.radial);
    for (dir, reach) in [(1.0, delta), (-1.0, delta.min(k_c))] {
        if reach <= 0.0 {
            continue;
        }
        let span = (reach / focus).asinh();
        for (t, w) in gl.nodes.iter().zip(&gl.weights) {
            let u = 0.5 * span * (t + 1.0);
            let k = k_c + dir * focus * u.sinh();
            let jac = 0.5 * span * w * focus * u.cosh();
            nodes.push((k, jac));
        }
    }

    let mut total = 0.0;
    for (k, jac) in nodes {
        if k <= 0.0 {
            continue;
        }
        let anchors = bubble.anchors(k, grid.angular, gamma);
        let inner = match &omega1 {
            None => bubble.angular(&anchors, grid.angular_tol, |psi| bubble.integrand(k, psi))?,
            Some((xs, ws)) => {
                bubble.angular(&anchors, grid.angular_tol, |psi| bubble.integrand_numeric(k, psi, xs, ws, gamma))?
            }
        };
        total += jac * k * inner;
    }
    let prefactor = PI * PI * (omega * omega + 4.0 * gamma * gamma) / (2.0 * gamma) / (4.0 * PI * PI);
    Ok((prefactor * total).max(0.0))
}

/// Map of Re σᵀ/σ_n on a (q̃, θ_q) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityMap {
    pub q_tilde: Vec<f64>,
    pub theta_q: Vec<f64>,
    /// values[i][j] at (q_tilde[i], theta_q[j]).
    pub values: Vec<Vec<f64>>,
}

/// Reduces θ_q to [0, π/p] using the rotation order p and the mirror
/// θ → −θ, both exact symmetries of the model conductivity.
pub fn canonical_angle(kind: GapKind, theta: f64) -> f64 {
    match kind.symmetry_order() {
        None => 0.0,
        Some(p) => {
            let period = 2.0 * PI / p as f64;
            let mut t = theta.rem_euclid(period);
            if t > 0.5 * period {
                t = period - t;
            }
            // Snap values that differ from a grid angle by round-off.
            let snapped = (t * 1e12).round() / 1e12;
            snapped.clamp(0.0, 0.5 * period)
        }
    }
}

/// Write-once cache of conductivity cells for one (params, ω̃).
#[derive(Debug, Clone)]
pub struct ConductivityCache {
    params: ScParams,
    omega_tilde: f64,
    cells: Arc<Mutex<HashMap<(u64, u64), f64>>>,
}

impl ConductivityCache {
    pub fn new(params: ScParams, omega_tilde: f64) -> Self {
        ConductivityCache { params, omega_tilde, cells: Arc::new(Mutex::new(HashMap::new())) }
    }

    pub fn params(&self) -> &ScParams {
        &self.params
    }

    pub fn omega_tilde(&self) -> f64 {
        self.omega_tilde
    }

    pub fn len(&self) -> usize {
        self.cells.lock().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(&self, q: f64, theta: f64) -> (u64, u64) {
        (q.to_bits(), canonical_angle(self.params.gap_kind, theta).to_bits())
    }

    /// Fills every missing cell (in parallel) and returns the map.
    pub fn map(&self, q_grid: &[f64], theta_grid: &[f64]) -> Result<ConductivityMap> {
        if q_grid.is_empty() || theta_grid.is_empty() {
            return Err(Error::Invalid("conductivity_map needs non-empty grids".into()));
        }
        let mut todo: Vec<(u64, u64)> = Vec::new();
        {
            let cells = self.cells.lock().expect("cache lock poisoned");
            for &q in q_grid {
                for &t in theta_grid {
                    let key = self.key(q, t);
                    if !cells.contains_key(&key) && !todo.contains(&key) {
                        todo.push(key);
                    }
                }
            }
        }
        let computed: Vec<((u64, u64), Result<f64>)> = todo
            .par_iter()
            .map(|&(qb, tb)| {
                let v = transverse_conductivity(&self.params, f64::from_bits(qb), f64::from_bits(tb), self.omega_tilde);
                ((qb, tb), v)
            })
            .collect();
        {
            let mut cells = self.cells.lock().expect("cache lock poisoned");
            for (key, v) in computed {
                cells.insert(key, v?);
            }
        }
        let cells = self.cells.lock().expect("cache lock poisoned");
        let values = q_grid.iter().map(|&q| theta_grid.iter().map(|&t| cells[&self.key(q, t)]).collect()).collect();
        Ok(ConductivityMap { q_tilde: q_grid.to_vec(), theta_q: theta_grid.to_vec(), values })
    }

    /// Single cell through the cache.
    pub fn get(&self, q: f64, theta: f64) -> Result<f64> {
        let key = self.key(q, theta);
        if let Some(v) = self.cells.lock().expect("cache lock poisoned").get(&key) {
            return Ok(*v);
        }
        let v = transverse_conductivity(&self.params, q, f64::from_bits(key.1), self.omega_tilde)?;
        self.cells.lock().expect("cache lock poisoned").insert(key, v);
        Ok(v)
    }
}

/// Conductivity table exploiting rotation and mirror symmetry.
pub fn conductivity_map(
    params: &ScParams,
    q_grid: &[f64],
    theta_grid: &[f64],
    omega_tilde: f64,
) -> Result<ConductivityMap> {
    ConductivityCache::new(*params, omega_tilde).map(q_grid, theta_grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kind: GapKind, delta0: f64, gamma: f64, kbt: f64) -> ScParams {
        ScParams { delta0_over_mu: delta0, gamma_p_over_mu: gamma, kbt_over_mu: kbt, ..ScParams::fese(kind) }
    }

    /// Oracle: generic 2×2 complex inversion.
    fn inverse_oracle(eps: f64, delta: f64, omega: f64, gamma: f64) -> [[f64; 2]; 2] {
        let w = Complex64::new(omega, gamma);
        let m = [[w - eps, Complex64::from(-delta)], [Complex64::from(-delta), w + eps]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = -inv[i][j].im / PI;
            }
        }
        out
    }

    #[test]
    fn gap_examples() {
        assert!((gap(GapKind::D, 0.3, PI / 4.0) - 0.3).abs() < 1e-15);
        assert!(gap(GapKind::G, 0.3, PI / 4.0).abs() < 1e-15);
        assert_eq!(gap(GapKind::S, 0.3, 1.234), 0.3);
    }

    #[test]
    fn spectral_matches_inversion_oracle() {
        for kind in [GapKind::S, GapKind::D, GapKind::G] {
            let p = params(kind, 0.01, 3e-3, 1e-3);
            for &(kx, ky, w) in &[(1.0, 0.0, 0.0), (0.7, 0.6, 0.004), (-0.2, 1.03, -0.01), (0.99, -0.1, 0.2)] {
                let a = spectral_function(&p, [kx, ky], w);
                let eps: f64 = kx * kx + ky * ky - 1.0;
                let o = inverse_oracle(eps, gap(kind, 0.01, f64::atan2(ky, kx)), w, 3e-3);
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((a.0[i][j] - o[i][j]).abs() < 1e-10, "{kind:?} {i}{j}");
                    }
                }
                assert_eq!(a.0[0][1], a.0[1][0]);
                assert!(a.0[0][0] >= 0.0 && a.0[1][1] >= 0.0);
            }
        }
    }

    #[test]
    fn spectral_examples() {
        let p = params(GapKind::S, 0.0, 5e-5, 1e-3);
        let a = spectral_function(&p, [1.0, 0.0], 0.0);
        let v = 1.0 / (PI * 5e-5);
        assert!((a.0[0][0] - v).abs() < 1e-10 * v && (a.0[1][1] - v).abs() < 1e-10 * v);
        assert_eq!(a.0[0][1], 0.0);
    }

    #[test]
    fn trace_normalization() {
        for kind in [GapKind::S, GapKind::D] {
            let p = params(kind, 0.005, 5e-5, 1e-3);
            for k in [[1.0, 0.0], [0.6, 0.8001], [1.002, 0.01]] {
                let n = spectral_trace_normalization(&p, k).unwrap();
                assert!((n - 2.0).abs() < 1e-3, "{n}");
            }
        }
    }

    #[test]
    fn window_cauchy_transform_matches_quadrature() {
        for &(kbt, gamma, omega) in &[(1e-3, 5e-5, 1e-9), (1e-3, 2e-4, 3e-4), (2e-3, 1e-3, 5e-3)] {
            let w = FermiWindow::new(kbt, gamma, omega);
            for &a in &[0.0, 4e-4, -2.5e-3, 7e-3] {
                let h = w.h(a);
                let breaks: Vec<f64> = (-400..=400).map(|j| j as f64 * 0.1 * kbt).collect();
                let opts = AdaptiveOptions { abs_tol: 1e-9, rel_tol: 1e-11, max_segments: 20000 };
                let re =
                    adaptive(|x| w.weight(x) * (x - a) / ((x - a).powi(2) + gamma * gamma), &breaks, opts).unwrap().0;
                let im =
                    adaptive(|x| w.weight(x) * gamma / ((x - a).powi(2) + gamma * gamma), &breaks, opts).unwrap().0;
                assert!((h.re - re).abs() < 1e-6 * h.norm(), "re {a} {} {re}", h.re);
                assert!((h.im - im).abs() < 1e-6 * h.norm(), "im {a} {} {im}", h.im);
            }
        }
    }

    #[test]
    fn lorentzian_overlap_matches_quadrature() {
        let (kbt, gamma) = (1e-3, 1e-4);
        for &omega in &[1e-10, 5e-4] {
            let w = FermiWindow::new(kbt, gamma, omega);
            for &(a, b) in &[(1e-3, 1e-3), (1e-3, 1.00000001e-3), (2e-4, -1e-3), (-3e-3, 4e-3)] {
                let v = w.overlap(a, b, w.h(a), w.h(b));
                let l = |x: f64, c: f64| gamma / PI / ((x - c).powi(2) + gamma * gamma);
                let mut breaks: Vec<f64> = (-300..=300).map(|j| j as f64 * 0.1 * kbt).collect();
                breaks.extend([a, b]);
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
                let opts = AdaptiveOptions { abs_tol: 1e-9, rel_tol: 1e-11, max_segments: 20000 };
                let oracle = adaptive(|x| l(x, a) * l(x, b) * w.weight(x), &breaks, opts).unwrap().0;
                assert!((v - oracle).abs() < 1e-5 * oracle.abs().max(1e-3), "{a} {b} {v} {oracle}");
            }
        }
    }

    fn drude_nonlocal(x: f64) -> f64 {
        2.0 * ((1.0 + x * x).sqrt() - 1.0) / (x * x)
    }

    #[test]
    fn drude_local_limit() {
        let p = params(GapKind::S, 0.0, 1e-2, 2e-3);
        let v = transverse_conductivity(&p, 1e-3, 0.0, 1e-7).unwrap();
        assert!((v - drude_nonlocal(0.1)).abs() < 2e-3, "{v}");
        assert!((v - 1.0).abs() < 0.02);
    }

    #[test]
    fn drude_nonlocal_regime_matches_analytic() {
        // q̃/Γ̃ = 20: the normal state is far from the local Drude value.
        let p = params(GapKind::S, 0.0, 5e-5, 2.27e-3);
        let v = transverse_conductivity(&p, 1e-3, 0.0, 1e-7).unwrap();
        let exact = drude_nonlocal(20.0);
        assert!((v - exact).abs() < 0.01 * exact, "{v} {exact}");
    }

    #[test]
    fn analytic_and_numeric_omega1_agree() {
        for kind in [GapKind::S, GapKind::D] {
            let mut p = params(kind, 0.02, 8e-3, 4e-3);
            p.grid.radial = 24;
            p.grid.angular = 32;
            let a = transverse_conductivity(&p, 0.02, 0.3, 2e-3).unwrap();
            p.omega1_rule = Omega1Rule::GaussLegendre;
            p.grid.omega1 = 12;
            let n = transverse_conductivity(&p, 0.02, 0.3, 2e-3).unwrap();
            assert!((a - n).abs() < 1e-4 * a, "{kind:?} {a} {n}");
        }
    }

    #[test]
    fn s_wave_isotropy() {
        let mut p = ScParams::fese(GapKind::S);
        p.grid.radial = 24;
        p.grid.angular = 64;
        let v0 = transverse_conductivity(&p, 0.03, 0.0, 1e-7).unwrap();
        for t in [1.1, 2.7] {
            let v = transverse_conductivity(&p, 0.03, t, 1e-7).unwrap();
            assert!((v - v0).abs() < 1e-6 * v0);
        }
        assert!(v0 > 0.0);
    }

    #[test]
    fn d_and_g_wave_rotation_and_parity() {
        for (kind, step) in [(GapKind::D, PI / 2.0), (GapKind::G, PI / 4.0)] {
            let mut p = ScParams::fese(kind);
            p.grid.radial = 24;
            p.grid.angular = 64;
            let t = 0.37;
            let v = transverse_conductivity(&p, 0.03, t, 1e-7).unwrap();
            let r = transverse_conductivity(&p, 0.03, t + step, 1e-7).unwrap();
            let i = transverse_conductivity(&p, 0.03, t + PI, 1e-7).unwrap();
            assert!((v - r).abs() < 1e-3 * v, "{kind:?} rotation {v} {r}");
            assert!((v - i).abs() < 1e-3 * v, "{kind:?} parity {v} {i}");
        }
    }

    #[test]
    fn canonical_angles() {
        assert_eq!(canonical_angle(GapKind::S, 1.0), 0.0);
        let a = canonical_angle(GapKind::D, -0.3);
        assert!((a - 0.3).abs() < 1e-12);
        let b = canonical_angle(GapKind::D, 0.3 + PI / 2.0);
        assert!((b - 0.3).abs() < 1e-12);
        let c = canonical_angle(GapKind::G, PI / 4.0 - 0.1);
        assert!((c - 0.1).abs() < 1e-12);
    }

    #[test]
    fn map_symmetry_and_cache() {
        let mut p = ScParams::fese(GapKind::D);
        p.grid.radial = 16;
        p.grid.angular = 32;
        let thetas: Vec<f64> = (0..8).map(|j| j as f64 * PI / 4.0 - PI / 8.0).collect();
        let cache = ConductivityCache::new(p, 1e-7);
        let m = cache.map(&[0.05], &thetas).unwrap();
        // θ and −θ share a cell; that cell equals a fresh computation.
        let fresh = transverse_conductivity(&p, 0.05, PI / 8.0, 1e-7).unwrap();
        assert_eq!(m.values[0][0], m.values[0][1]);
        assert!((m.values[0][0] - fresh).abs() < 1e-12 * fresh);
        assert!(cache.len() <= 2);

        let mut s = ScParams::fese(GapKind::S);
        s.grid.radial = 16;
        s.grid.angular = 32;
        let m = conductivity_map(&s, &[0.02, 0.1], &[0.0, 1.0, 2.0], 1e-7).unwrap();
        for row in &m.values {
            assert!(row.iter().all(|v| *v == row[0]));
        }
    }

    #[test]
    fn validation_errors() {
        let mut p = ScParams::fese(GapKind::S);
        p.gamma_p_over_mu = 0.0;
        assert!(transverse_conductivity(&p, 0.1, 0.0, 1e-7).is_err());
        let p = ScParams::fese(GapKind::S);
        assert!(transverse_conductivity(&p, 0.1, 0.0, 0.0).is_err());
        let mut p = ScParams::fese(GapKind::S);
        p.grid.radial = 4;
        assert!(p.validate().is_err());
        assert!("x".parse::<GapKind>().is_err());
    }
}
