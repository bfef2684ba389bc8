//! Geometry, orientation weights and angular harmonics of the correlated
//! noise spectra.
//!
//! A response is stored in reduced form R = O/ω in model-native units: the
//! SI response is O(q, θ, ω) = ω · P · R(q·ℓ, θ, ω·τ), with P the SI
//! prefactor, ℓ the native length and τ the native time unit. Harmonics are
//! O^m = ∫₀^{2π} dθ e^{−imθ} O.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{M0, MU0};
use crate::error::{Diagnostics, Error, Result, Warning};
use crate::interp::{CubicSpline, PeriodicGrid};
use crate::quadrature::GaussLegendre;
use crate::specfun::{bessel_j_table, MAX_BESSEL_ORDER};

/// Spin-qubit quantization axis: polar angle φ from the surface normal and
/// azimuth α measured from the pair axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct QubitOrientation {
    pub phi: f64,
    pub alpha: f64,
}

impl QubitOrientation {
    pub const PERPENDICULAR: QubitOrientation = QubitOrientation { phi: 0.0, alpha: 0.0 };

    pub fn in_plane(alpha: f64) -> Self {
        QubitOrientation { phi: PI / 2.0, alpha }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.phi.is_finite() || !self.alpha.is_finite() {
            return Err(Error::Invalid("qubit angles must be finite".into()));
        }
        Ok(())
    }
}

/// Two qubits at height z, separated by D along the direction β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub z: f64,
    pub d: f64,
    pub beta: f64,
}

impl PairGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.z > 0.0) || !self.z.is_finite() {
            return Err(Error::Invalid(format!("height z must be > 0, got {}", self.z)));
        }
        if !(self.d >= 0.0) || !self.d.is_finite() {
            return Err(Error::Invalid(format!("separation D must be >= 0, got {}", self.d)));
        }
        if !self.beta.is_finite() {
            return Err(Error::Invalid("pair angle beta must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationConstants {
    pub k0: f64,
    pub k1: Complex64,
    pub k2: Complex64,
    pub k3: Complex64,
    pub k4: Complex64,
}

pub fn orientation_constants(oi: &QubitOrientation, oj: &QubitOrientation) -> OrientationConstants {
    let (si, ci) = oi.phi.sin_cos();
    let (sj, cj) = oj.phi.sin_cos();
    let k0 = ci * cj + 0.5 * si * sj * (oi.alpha - oj.alpha).cos();
    let k1 = 0.25 * si * sj * Complex64::from_polar(1.0, oi.alpha + oj.alpha);
    let k3 = 0.5 * (si * cj * Complex64::from_polar(1.0, oi.alpha) - ci * sj * Complex64::from_polar(1.0, oj.alpha));
    OrientationConstants { k0, k1, k2: k1.conj(), k3, k4: k3.conj() }
}

fn order_check(order: i32) -> Result<()> {
    if order.abs() > MAX_BESSEL_ORDER {
        Err(Error::UnsupportedOrder(order))
    } else {
        Ok(())
    }
}

/// J_m(x) for any sign of m, from a table of non-negative orders at x >= 0.
#[inline]
fn j_signed(table: &[f64], m: i32) -> f64 {
    let v = table[m.unsigned_abs() as usize];
    if m < 0 && m % 2 != 0 {
        -v
    } else {
        v
    }
}

fn bessel_at(x: f64, orders: i32) -> Vec<f64> {
    bessel_j_table(orders as usize, x)
}

#[inline]
fn combine(c: &OrientationConstants, table: &[f64], centre: i32) -> Complex64 {
    // centre = 2n for the even weight, 2n+1 for the odd one.
    Complex64::from(c.k0 * j_signed(table, centre))
        - c.k1 * j_signed(table, centre - 2)
        - c.k2 * j_signed(table, centre + 2)
        - c.k3 * j_signed(table, centre - 1)
        + c.k4 * j_signed(table, centre + 1)
}

fn weight_at(c: &OrientationConstants, m: i32, x: f64) -> Result<Complex64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("weight argument qD must be >= 0, got {x}")));
    }
    let reach = m.abs() + 2;
    order_check(reach)?;
    Ok(combine(c, &bessel_at(x, reach), m))
}

/// 𝒦₂ₙ(x) = K₀J₂ₙ − K₁J₂ₙ₋₂ − K₂J₂ₙ₊₂ − K₃J₂ₙ₋₁ + K₄J₂ₙ₊₁.
pub fn weight_even(c: &OrientationConstants, n: i32, x: f64) -> Result<Complex64> {
    weight_at(c, 2 * n, x)
}

/// ℒ₂ₙ₊₁(x), the same combination centred on J₂ₙ₊₁.
pub fn weight_odd(c: &OrientationConstants, n: i32, x: f64) -> Result<Complex64> {
    weight_at(c, 2 * n + 1, x)
}

/// Rotational symmetry of a base response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rotation {
    /// Independent of θ.
    Isotropic,
    /// Invariant under θ → θ + 2π/p.
    Order(u32),
    /// No rotational symmetry declared.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symmetry {
    pub rotation: Rotation,
    /// O(θ + π) = O(θ).
    pub inversion: bool,
    /// O(−θ) = O(θ).
    pub mirror: bool,
}

impl Symmetry {
    pub const NONE: Symmetry = Symmetry { rotation: Rotation::None, inversion: false, mirror: false };

    /// Order p as the spec counts it: 0 when none is declared.
    pub fn order(&self) -> u32 {
        match self.rotation {
            Rotation::Isotropic => 0,
            Rotation::Order(p) => p,
            Rotation::None => 0,
        }
    }

    /// Whether harmonic m of the base response may be nonzero.
    pub fn allows(&self, m: i32) -> bool {
        if self.inversion && m % 2 != 0 {
            return false;
        }
        match self.rotation {
            Rotation::Isotropic => m == 0,
            Rotation::Order(p) => m % p as i32 == 0,
            Rotation::None => true,
        }
    }
}

/// Conversion between SI and the model's native units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Units {
    /// Native length ℓ in metres: q_native = q·ℓ.
    pub length: f64,
    /// Native time τ in seconds: ω_native = ω·τ.
    pub time: f64,
    /// SI prefactor P with O = ω·P·R.
    pub prefactor: f64,
}

/// Typical native (q, ω) used to place the construction spot-check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeScales {
    pub q: f64,
    pub omega: f64,
}

/// How angular harmonics are sampled in q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    /// Evaluate at every node of the kernel q rule.
    Direct,
    /// Evaluate on a log grid spanning [lo, hi]/z and spline q·O^m in log q.
    LogGrid { nodes: usize, lo: f64, hi: f64 },
}

/// Evaluator of the reduced base response R(q_native, θ, ω_native).
pub trait ResponseModel: Send + Sync {
    fn eval(&self, q: f64, theta: f64, omega: f64) -> Result<f64>;

    /// Evaluation that bypasses symmetry-aware caching, used by the
    /// construction spot-check.
    fn eval_raw(&self, q: f64, theta: f64, omega: f64) -> Result<f64> {
        self.eval(q, theta, omega)
    }
}

impl<F> ResponseModel for F
where
    F: Fn(f64, f64, f64) -> f64 + Send + Sync,
{
    fn eval(&self, q: f64, theta: f64, omega: f64) -> Result<f64> {
        Ok(self(q, theta, omega))
    }
}

/// A material response with symmetry metadata.
#[derive(Clone)]
pub struct ResponseField {
    model: Arc<dyn ResponseModel>,
    pub symmetry: Symmetry,
    /// Optional projection cos²(θ − θ_N) applied on top of the base model.
    pub neel_axis: Option<f64>,
    pub units: Units,
    pub sampling: Sampling,
    pub quadrature_backed: bool,
    pub label: String,
}

impl fmt::Debug for ResponseField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResponseField")
            .field("label", &self.label)
            .field("symmetry", &self.symmetry)
            .field("neel_axis", &self.neel_axis)
            .field("units", &self.units)
            .field("sampling", &self.sampling)
            .finish()
    }
}

/// Construction options for [`ResponseField::new`].
#[derive(Debug, Clone)]
pub struct FieldSpec {
    pub label: String,
    pub symmetry: Symmetry,
    pub neel_axis: Option<f64>,
    pub units: Units,
    pub sampling: Sampling,
    pub quadrature_backed: bool,
    pub probe: ProbeScales,
}

impl FieldSpec {
    pub fn analytic(label: &str, symmetry: Symmetry) -> Self {
        FieldSpec {
            label: label.into(),
            symmetry,
            neel_axis: None,
            units: Units { length: 1.0, time: 1.0, prefactor: 1.0 },
            sampling: Sampling::Direct,
            quadrature_backed: false,
            probe: ProbeScales { q: 1.0, omega: 1.0 },
        }
    }
}

const PROBE_POINTS: [(f64, f64, f64); 3] = [(0.7, 0.37, 1.0), (1.3, 1.1, 2.0), (2.1, 2.3, 0.5)];

impl ResponseField {
    /// Wraps a model and spot-checks its declared symmetry at three (q, ω)
    /// points: residual below 1e-6 (analytic) or 1e-3 (quadrature-backed).
    pub fn new<M: ResponseModel + 'static>(model: M, spec: FieldSpec) -> Result<Self> {
        let u = spec.units;
        if !(u.length > 0.0 && u.time > 0.0 && u.prefactor > 0.0) {
            return Err(Error::Invalid("response units must be positive".into()));
        }
        if let Rotation::Order(p) = spec.symmetry.rotation {
            if p == 0 {
                return Err(Error::Invalid("rotation order must be >= 1".into()));
            }
        }
        if let Sampling::LogGrid { nodes, lo, hi } = spec.sampling {
            if nodes < 4 || !(lo > 0.0 && hi > lo) {
                return Err(Error::Invalid("log sampling needs >= 4 nodes and 0 < lo < hi".into()));
            }
        }
        let field = ResponseField {
            model: Arc::new(model),
            symmetry: spec.symmetry,
            neel_axis: spec.neel_axis,
            units: spec.units,
            sampling: spec.sampling,
            quadrature_backed: spec.quadrature_backed,
            label: spec.label,
        };
        field.spot_check(spec.probe)?;
        Ok(field)
    }

    fn spot_check(&self, probe: ProbeScales) -> Result<()> {
        let tol = if self.quadrature_backed { 1e-3 } else { 1e-6 };
        let sym = self.symmetry;
        type AngleMap = Box<dyn Fn(f64) -> f64>;
        let mut shifts: Vec<(&str, AngleMap)> = Vec::new();
        match sym.rotation {
            Rotation::Isotropic => shifts.push(("isotropy", Box::new(|t| t + 1.234))),
            Rotation::Order(p) if p > 1 => {
                let step = 2.0 * PI / p as f64;
                shifts.push(("rotation", Box::new(move |t| t + step)));
            }
            _ => {}
        }
        if sym.inversion {
            shifts.push(("inversion", Box::new(|t| t + PI)));
        }
        if sym.mirror {
            shifts.push(("mirror", Box::new(|t: f64| -t)));
        }
        for (qf, theta, wf) in PROBE_POINTS {
            let q = probe.q * qf;
            let w = probe.omega * wf;
            let a = self.model.eval_raw(q, theta, w)?;
            for (name, shift) in &shifts {
                let b = self.model.eval_raw(q, shift(theta), w)?;
                let scale = a.abs().max(b.abs());
                if (a - b).abs() > tol * scale {
                    return Err(Error::Invalid(format!(
                        "{}: declared {name} symmetry fails the spot-check at q={q:.4e}, θ={theta}: {a:.6e} vs {b:.6e}",
                        self.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// Reduced response R including the Néel projection.
    pub fn eval(&self, q: f64, theta: f64, omega: f64) -> Result<f64> {
        let base = self.model.eval(q, theta, omega)?;
        Ok(match self.neel_axis {
            Some(tn) => {
                let c = (theta - tn).cos();
                base * c * c
            }
            None => base,
        })
    }

    /// Whether harmonic m of the full response may be nonzero.
    pub fn allows(&self, m: i32) -> bool {
        match self.neel_axis {
            None => self.symmetry.allows(m),
            Some(_) => (-1..=1).any(|k| self.symmetry.allows(m + 2 * k)),
        }
    }

    /// Largest |m| that may be nonzero, when the allowed set is finite.
    pub fn band_limit(&self) -> Option<i32> {
        match self.symmetry.rotation {
            Rotation::Isotropic => Some(if self.neel_axis.is_some() { 2 } else { 0 }),
            _ => None,
        }
    }

    /// True when every odd harmonic vanishes identically.
    pub fn is_inversion_symmetric(&self) -> bool {
        self.symmetry.inversion || matches!(self.symmetry.rotation, Rotation::Isotropic)
    }

    pub fn q_native(&self, q_si: f64) -> f64 {
        q_si * self.units.length
    }

    pub fn omega_native(&self, omega_si: f64) -> f64 {
        omega_si * self.units.time
    }
}

/// Response read from a `q_tilde,theta_q,value` table and interpolated
/// bilinearly (θ periodic).
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedResponse {
    pub grid: PeriodicGrid,
}

#[derive(Debug, Deserialize)]
struct TableRow {
    q_tilde: f64,
    theta_q: f64,
    value: f64,
}

impl TabulatedResponse {
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for r in rdr.deserialize::<TableRow>() {
            rows.push(r.map_err(|e| Error::Invalid(format!("tabulated response: {e}")))?);
        }
        if rows.is_empty() {
            return Err(Error::Invalid("tabulated response is empty".into()));
        }
        let mut qs: Vec<f64> = rows.iter().map(|r| r.q_tilde).collect();
        let mut ts: Vec<f64> = rows.iter().map(|r| r.theta_q).collect();
        for v in [&mut qs, &mut ts] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        if qs.len() * ts.len() != rows.len() {
            return Err(Error::Invalid(format!(
                "tabulated response must be a full grid: {} q × {} θ values but {} rows",
                qs.len(),
                ts.len(),
                rows.len()
            )));
        }
        let mut values = vec![vec![f64::NAN; ts.len()]; qs.len()];
        for r in &rows {
            let i = qs.partition_point(|&v| v < r.q_tilde);
            let j = ts.partition_point(|&v| v < r.theta_q);
            values[i][j] = r.value;
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("tabulated response has duplicate or non-finite cells".into()));
        }
        Ok(TabulatedResponse { grid: PeriodicGrid::new(qs, ts, values)? })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(f)
    }
}

impl ResponseModel for TabulatedResponse {
    fn eval(&self, q: f64, theta: f64, _omega: f64) -> Result<f64> {
        Ok(self.grid.eval(q, theta))
    }
}

/// Harmonics of one q row, m = −M..=M at index m + M.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicRow {
    pub values: Vec<Complex64>,
    /// |O^M'| / |O^0| for the highest allowed M' <= M (0 if O^0 = 0).
    pub top_ratio: f64,
}

/// Angular harmonics O^m(q, ω) by the trapezoidal rule on `nodes`
/// equispaced angles. Harmonics forbidden by the declared symmetry are set
/// to exact zero; mirror-symmetric bases give real O^m.
pub fn angular_harmonics(
    response: &ResponseField,
    q: f64,
    omega: f64,
    m_max: usize,
    nodes: usize,
) -> Result<HarmonicRow> {
    if nodes < 4 * m_max + 8 {
        return Err(Error::Invalid(format!(
            "angular_harmonics needs nodes >= 4M + 8 = {}, got {nodes}",
            4 * m_max + 8
        )));
    }
    let mm = m_max as i32;
    let sym = response.symmetry;
    let reach = if response.neel_axis.is_some() { mm + 2 } else { mm };
    // Base harmonics B^m for |m| <= reach.
    let mut base = vec![Complex64::new(0.0, 0.0); (2 * reach + 1) as usize];
    if matches!(sym.rotation, Rotation::Isotropic) {
        base[reach as usize] = Complex64::from(2.0 * PI * response.model.eval(q, 0.0, omega)?);
    } else {
        let h = 2.0 * PI / nodes as f64;
        let samples: Vec<f64> =
            (0..nodes).map(|k| response.model.eval(q, k as f64 * h, omega)).collect::<Result<_>>()?;
        for m in -reach..=reach {
            if !sym.allows(m) {
                continue;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, s) in samples.iter().enumerate() {
                // Reduce the phase index mod nodes so large m stays exact.
                let idx = ((m as i64 * k as i64).rem_euclid(nodes as i64)) as f64;
                acc += Complex64::from_polar(*s, -idx * h);
            }
            acc *= h;
            if sym.mirror {
                acc.im = 0.0;
            }
            base[(m + reach) as usize] = acc;
        }
    }
    let b = |m: i32| -> Complex64 {
        if m.abs() > reach {
            Complex64::new(0.0, 0.0)
        } else {
            base[(m + reach) as usize]
        }
    };
    let mut values = vec![Complex64::new(0.0, 0.0); (2 * mm + 1) as usize];
    for m in -mm..=mm {
        values[(m + mm) as usize] = match response.neel_axis {
            None => b(m),
            Some(tn) => {
                let e = Complex64::from_polar(1.0, -2.0 * tn);
                0.5 * b(m) + 0.25 * e * b(m - 2) + 0.25 * e.conj() * b(m + 2)
            }
        };
    }
    let o0 = values[mm as usize].norm();
    let top = (0..=mm).rev().find(|&m| response.allows(m)).unwrap_or(0);
    let resolved = response.band_limit().is_some_and(|b| b <= mm);
    let top_ratio = if o0 > 0.0 && top > 0 && !resolved { values[(top + mm) as usize].norm() / o0 } else { 0.0 };
    Ok(HarmonicRow { values, top_ratio })
}

/// Numerical settings of the kernel q integral and angular sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelOptions {
    /// Gauss–Legendre nodes on [0, q_max].
    pub q_nodes: usize,
    /// q_max in units of 1/z.
    pub q_max_z: f64,
    /// Harmonic truncation N.
    pub truncation: usize,
    /// Angular trapezoid nodes; `None` uses 4M + 8.
    pub theta_nodes: Option<usize>,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { q_nodes: 256, q_max_z: 40.0, truncation: 8, theta_nodes: None }
    }
}

impl KernelOptions {
    pub fn validate(&self) -> Result<()> {
        if self.q_nodes < 8 || !(self.q_max_z > 0.0) || self.truncation < 1 {
            return Err(Error::Invalid("kernel options need q_nodes >= 8, q_max_z > 0, truncation >= 1".into()));
        }
        if 2 * self.truncation + 3 > MAX_BESSEL_ORDER as usize {
            return Err(Error::UnsupportedOrder(2 * self.truncation as i32 + 3));
        }
        Ok(())
    }
}

/// Angular harmonics of the reduced response on the kernel's q rule for one
/// height z and one frequency.
#[derive(Debug, Clone)]
pub struct AngularSpectrum {
    pub z: f64,
    /// SI frequency the table was evaluated at.
    pub omega: f64,
    /// Gauss–Legendre nodes (SI, 1/m) and weights.
    pub q: Vec<f64>,
    pub w: Vec<f64>,
    pub m_max: usize,
    /// values[k][m + M] = R^m at q[k] in native units.
    pub values: Vec<Vec<Complex64>>,
    pub prefactor: f64,
    pub diagnostics: Diagnostics,
}

impl AngularSpectrum {
    pub fn build(response: &ResponseField, z: f64, omega: f64, m_max: usize, opts: &KernelOptions) -> Result<Self> {
        opts.validate()?;
        if !(z > 0.0) {
            return Err(Error::Invalid(format!("height z must be > 0, got {z}")));
        }
        let gl = GaussLegendre::new(opts.q_nodes);
        let (q, w) = gl.on(0.0, opts.q_max_z / z);
        Self::build_on_nodes(response, z, omega, m_max, opts, q, w)
    }

    /// Same table on caller-supplied q nodes (SI) and weights.
    pub fn build_on_nodes(
        response: &ResponseField,
        z: f64,
        omega: f64,
        m_max: usize,
        opts: &KernelOptions,
        q: Vec<f64>,
        w: Vec<f64>,
    ) -> Result<Self> {
        if q.len() != w.len() || q.is_empty() || q.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Invalid("q nodes must be non-negative and match the weights".into()));
        }
        if !(z > 0.0) {
            return Err(Error::Invalid(format!("height z must be > 0, got {z}")));
        }
        let nodes = opts.theta_nodes.unwrap_or(4 * m_max + 8);
        let w_native = response.omega_native(omega);
        let row_at = |q_si: f64| angular_harmonics(response, response.q_native(q_si), w_native, m_max, nodes);
        let mut diagnostics = Diagnostics::default();
        let (values, worst) = match response.sampling {
            Sampling::Direct => {
                let rows: Vec<HarmonicRow> = q.par_iter().map(|&qk| row_at(qk)).collect::<Result<_>>()?;
                let worst = worst_ratio(&q, &rows);
                (rows.into_iter().map(|r| r.values).collect(), worst)
            }
            Sampling::LogGrid { nodes: n, lo, hi } => {
                let coarse: Vec<f64> = (0..n).map(|i| lo / z * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect();
                let rows: Vec<HarmonicRow> = coarse.par_iter().map(|&qk| row_at(qk)).collect::<Result<_>>()?;
                let worst = worst_ratio(&coarse, &rows);
                (interpolate_rows(&coarse, &rows, &q, m_max)?, worst)
            }
        };
        if let Some((qw, ratio)) = worst {
            if ratio > 1e-3 {
                diagnostics.push(Warning::Aliasing { q: qw, ratio });
            }
        }
        Ok(AngularSpectrum { z, omega, q, w, m_max, values, prefactor: response.units.prefactor, diagnostics })
    }

    fn harmonic(&self, k: usize, m: i32) -> Complex64 {
        self.values[k][(m + self.m_max as i32) as usize]
    }

    /// ∫dq q e^{−2qz} W_m(qD) R^m(q) for each requested m, where W_m is the
    /// even weight 𝒦 (m even) or the odd weight ℒ (m odd).
    pub fn channel_integrals(&self, d: f64, c: &OrientationConstants, ms: &[i32]) -> Result<Vec<Complex64>> {
        let top = ms.iter().map(|m| m.abs()).max().unwrap_or(0);
        if top as usize > self.m_max {
            return Err(Error::Invalid(format!("harmonic {top} exceeds the table limit {}", self.m_max)));
        }
        order_check(top + 2)?;
        let mut out = vec![Complex64::new(0.0, 0.0); ms.len()];
        for (k, (&qk, &wk)) in self.q.iter().zip(&self.w).enumerate() {
            let damp = wk * qk * (-2.0 * qk * self.z).exp();
            if damp == 0.0 {
                continue;
            }
            let table = bessel_at(qk * d, top + 2);
            for (o, &m) in out.iter_mut().zip(ms) {
                let r = self.harmonic(k, m);
                if r == Complex64::new(0.0, 0.0) {
                    continue;
                }
                *o += damp * combine(c, &table, m) * r;
            }
        }
        Ok(out)
    }
}

fn worst_ratio(q: &[f64], rows: &[HarmonicRow]) -> Option<(f64, f64)> {
    q.iter().zip(rows).map(|(&qk, r)| (qk, r.top_ratio)).max_by(|a, b| a.1.total_cmp(&b.1))
}

/// Splines q·R^m in log q onto the target nodes. Below the grid the first
/// two knots set a power law when they share a sign, otherwise a linear
/// decay to zero at q = 0.
fn interpolate_rows(coarse: &[f64], rows: &[HarmonicRow], target: &[f64], m_max: usize) -> Result<Vec<Vec<Complex64>>> {
    let width = 2 * m_max + 1;
    let logq: Vec<f64> = coarse.iter().map(|q| q.ln()).collect();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); width]; target.len()];
    for idx in 0..width {
        for part in 0..2 {
            let y: Vec<f64> = rows
                .iter()
                .zip(coarse)
                .map(|(r, q)| q * if part == 0 { r.values[idx].re } else { r.values[idx].im })
                .collect();
            if y.iter().all(|&v| v == 0.0) {
                continue;
            }
            let spline = CubicSpline::new(&logq, &y)?;
            let (q0, q1, y0, y1) = (coarse[0], coarse[1], y[0], y[1]);
            for (k, &qt) in target.iter().enumerate() {
                let v = if qt >= q0 {
                    spline.eval(qt.ln()) / qt
                } else if y0 * y1 > 0.0 {
                    let slope = (y1 / y0).ln() / (q1 / q0).ln();
                    y0 * (qt / q0).powf(slope) / qt
                } else {
                    y0 / q0
                };
                if part == 0 {
                    out[k][idx].re = v;
                } else {
                    out[k][idx].im = v;
                }
            }
        }
    }
    Ok(out)
}

/// Real scalar with the diagnostics gathered while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated<T> {
    pub value: T,
    pub diagnostics: Diagnostics,
}

/// μ₀m₀²/16π², the prefactor of the correlated spectrum.
pub fn spectrum_prefactor() -> f64 {
    MU0 * M0 * M0 / (16.0 * PI * PI)
}

fn check_real(sum: Complex64, diagnostics: &mut Diagnostics) -> f64 {
    let ratio = if sum.norm() > 0.0 { sum.im.abs() / sum.norm() } else { 0.0 };
    if ratio > 1e-10 {
        diagnostics.push(Warning::ImaginaryResidual { ratio });
    }
    sum.re
}

fn check_truncation(terms: &[(i32, Complex64)], edge: &[i32], total: f64, diagnostics: &mut Diagnostics) {
    let scale = terms.iter().map(|(_, t)| t.norm()).fold(total.abs(), f64::max);
    if scale == 0.0 {
        return;
    }
    for &(m, t) in terms {
        if edge.contains(&m) && t.norm() > 1e-4 * scale {
            diagnostics.push(Warning::Truncation { order: m, relative_weight: t.norm() / scale });
            return;
        }
    }
}

/// Even harmonic indices 2n for |n| <= N.
pub fn even_indices(n: usize) -> Vec<i32> {
    (-(n as i32)..=n as i32).map(|k| 2 * k).collect()
}

/// Odd harmonic indices 2n+1 for −N−1 <= n <= N.
pub fn odd_indices(n: usize) -> Vec<i32> {
    (-(n as i32) - 1..=n as i32).map(|k| 2 * k + 1).collect()
}

/// i^{m} with m even gives (−1)^{m/2}; odd channels use (−1)^n with m = 2n+1.
pub(crate) fn channel_sign(m: i32) -> f64 {
    let n = m.div_euclid(2);
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn harmonic_sum(
    spectrum: &AngularSpectrum,
    geom: &PairGeometry,
    oi: &QubitOrientation,
    oj: &QubitOrientation,
    ms: &[i32],
    edge: &[i32],
) -> Result<Evaluated<f64>> {
    geom.validate()?;
    oi.validate()?;
    oj.validate()?;
    let c = orientation_constants(oi, oj);
    let integrals = spectrum.channel_integrals(geom.d, &c, ms)?;
    let scale = spectrum_prefactor() * spectrum.omega * spectrum.prefactor;
    let terms: Vec<(i32, Complex64)> = ms
        .iter()
        .zip(&integrals)
        .map(|(&m, &v)| (m, scale * channel_sign(m) * Complex64::from_polar(1.0, m as f64 * geom.beta) * v))
        .collect();
    let sum: Complex64 = terms.iter().map(|(_, t)| t).sum();
    let mut diagnostics = spectrum.diagnostics.clone();
    let value = check_real(sum, &mut diagnostics);
    check_truncation(&terms, edge, value, &mut diagnostics);
    Ok(Evaluated { value, diagnostics })
}

/// J_c(ω) by harmonic expansion, truncated at |n| <= N (opts.truncation).
pub fn correlated_spectrum(
    response: &ResponseField,
    geom: &PairGeometry,
    oi: &QubitOrientation,
    oj: &QubitOrientation,
    omega: f64,
    opts: &KernelOptions,
) -> Result<Evaluated<f64>> {
    let n = opts.truncation;
    let spectrum = AngularSpectrum::build(response, geom.z, omega, 2 * n, opts)?;
    let edge = [-2 * n as i32, 2 * n as i32];
    harmonic_sum(&spectrum, geom, oi, oj, &even_indices(n), &edge)
}

/// η_c(ω) by odd-harmonic expansion.
pub fn antisymmetric_spectrum(
    response: &ResponseField,
    geom: &PairGeometry,
    oi: &QubitOrientation,
    oj: &QubitOrientation,
    omega: f64,
    opts: &KernelOptions,
) -> Result<Evaluated<f64>> {
    let n = opts.truncation;
    let spectrum = AngularSpectrum::build(response, geom.z, omega, 2 * n + 1, opts)?;
    let edge = [-2 * n as i32 - 1, 2 * n as i32 + 1];
    harmonic_sum(&spectrum, geom, oi, oj, &odd_indices(n), &edge)
}

/// Resolution of the direct two-dimensional oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectOptions {
    pub q_nodes: usize,
    pub theta_nodes: usize,
    pub q_max_z: f64,
    /// Allowed relative change against the half-resolution estimate.
    pub tolerance: f64,
}

impl Default for DirectOptions {
    fn default() -> Self {
        DirectOptions { q_nodes: 512, theta_nodes: 1024, q_max_z: 40.0, tolerance: 1e-8 }
    }
}

/// Symmetric and antisymmetric orientation factors of the direct kernel at
/// pair-relative angle ψ = β − θ_q.
fn orientation_factors(oi: &QubitOrientation, oj: &QubitOrientation, psi: f64) -> (f64, f64) {
    let (si, ci) = oi.phi.sin_cos();
    let (sj, cj) = oj.phi.sin_cos();
    let ai = (oi.alpha + psi).cos();
    let aj = (oj.alpha + psi).cos();
    let sym = ci * cj + ai * aj * si * sj;
    let anti = cj * ai * si - ci * aj * sj;
    (sym, anti)
}

/// Direct kernel 𝒦 (even) and ℒ (odd) at x = qD cos(β − θ_q).
pub fn direct_kernels(oi: &QubitOrientation, oj: &QubitOrientation, qd: f64, beta: f64, theta: f64) -> (f64, f64) {
    let psi = beta - theta;
    let (sym, anti) = orientation_factors(oi, oj, psi);
    let (s, c) = (qd * psi.cos()).sin_cos();
    (c * sym + s * anti, s * sym - c * anti)
}

#[allow(clippy::too_many_arguments)]
fn direct_integral(
    response: &ResponseField,
    geom: &PairGeometry,
    oi: &QubitOrientation,
    oj: &QubitOrientation,
    omega: f64,
    nq: usize,
    nt: usize,
    q_max_z: f64,
    odd: bool,
) -> Result<f64> {
    let gl = GaussLegendre::new(nq);
    let (q, w) = gl.on(0.0, q_max_z / geom.z);
    let w_native = response.omega_native(omega);
    let h = 2.0 * PI / nt as f64;
    let parts: Vec<f64> = q
        .par_iter()
        .zip(&w)
        .map(|(&qk, &wk)| {
            let damp = wk * qk * (-2.0 * qk * geom.z).exp();
            if damp == 0.0 {
                return Ok(0.0);
            }
            let qn = response.q_native(qk);
            let mut acc = 0.0;
            for j in 0..nt {
                let theta = j as f64 * h;
                let (ke, ko) = direct_kernels(oi, oj, qk * geom.d, geom.beta, theta);
                acc += if odd { ko } else { ke } * response.eval(qn, theta, w_native)?;
            }
            Ok(damp * acc * h)
        })
        .collect::<Result<_>>()?;
    Ok(spectrum_prefactor() * omega * response.units.prefactor * parts.iter().sum::<f64>())
}

fn direct_checked(
    response: &ResponseField,
    geom: &PairGeometry,
    oi: &QubitOrientation,
    oj: &QubitOrientation,
    omega: f64,
    opts: &DirectOptions,
    odd: bool,
) -> Result<f64> {
    geom.validate()?;
    if opts.q_nodes < 16 || opts.theta_nodes < 16 {
        return Err(Error::Invalid("direct quadrature needs >= 16 nodes per axis".into()));
    }
    let full = direct_integral(response, geom, oi, oj, omega, opts.q_nodes, opts.theta_nodes, opts.q_max_z, odd)?;
    let half =
        direct_integral(response, geom, oi, oj, omega, opts.q_nodes / 2, opts.theta_nodes / 2, opts.q_max_z, odd)?;
    let scale = full.abs().max(half.abs());
    if (full - half).abs() > opts.tolerance * scale {
        return Err(Error::NonConvergence(format!(
            "direct kernel quadrature: full {full:.10e} vs half-resolution {half:.10e}"
        )));
    }
    Ok(full)
}

/// J_c(ω) by brute-force (q, θ_q) quadrature of the unexpanded kernel.
pub fn correlated_spectrum_direct(
    response: &ResponseField,
    geom: &PairGeometry,
    oi: &QubitOrientation,
    oj: &QubitOrientation,
    omega: f64,
    opts: &DirectOptions,
) -> Result<f64> {
    direct_checked(response, geom, oi, oj, omega, opts, false)
}

/// η_c(ω) by brute-force quadrature of the antisymmetric kernel.
pub fn antisymmetric_spectrum_direct(
    response: &ResponseField,
    geom: &PairGeometry,
    oi: &QubitOrientation,
    oj: &QubitOrientation,
    omega: f64,
    opts: &DirectOptions,
) -> Result<f64> {
    direct_checked(response, geom, oi, oj, omega, opts, true)
}

/// Qubit swap: exchanges the qubits and reverses the pair axis, keeping
/// absolute orientations fixed.
pub fn swap_qubits(
    geom: &PairGeometry,
    oi: &QubitOrientation,
    oj: &QubitOrientation,
) -> (PairGeometry, QubitOrientation, QubitOrientation) {
    let g = PairGeometry { beta: geom.beta + PI, ..*geom };
    let flip = |o: &QubitOrientation| QubitOrientation { phi: o.phi, alpha: o.alpha - PI };
    (g, flip(oj), flip(oi))
}
