//! Momentum-space tomography: recover a radial harmonic profile O^{2n}(q)
//! from Φ_c^{2n} measured over many pair geometries.
//!
//! The forward model is the q integral of the dephasing harmonic on a set of
//! bins, M_{lm} = A q_m e^{−2q_m z_l} 𝒦₂ₙ(q_m D_l) Δq_m. The inverse is ridge
//! regression through the SVD.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Diagnostics, Error, Result, Warning};
use crate::kernel::{orientation_constants, weight_even, QubitOrientation};

/// Largest accessible momentum in units of 1/z.
pub const Q_CUTOFF_Z: f64 = 40.0;

/// One measured configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    #[serde(rename = "D")]
    pub d: f64,
    pub z: f64,
}

/// Momentum bins: midpoints and widths (SI, 1/m).
#[derive(Debug, Clone, PartialEq)]
pub struct QGrid {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
}

impl QGrid {
    /// `bins` log-spaced bins between lo and hi, represented by their
    /// midpoints.
    pub fn log_bins(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || bins == 0 {
            return Err(Error::Invalid("log bins need 0 < lo < hi and at least one bin".into()));
        }
        let edges: Vec<f64> = (0..=bins).map(|i| lo * (hi / lo).powf(i as f64 / bins as f64)).collect();
        let q = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
        let dq = edges.windows(2).map(|e| e[1] - e[0]).collect();
        Ok(QGrid { q, dq })
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.is_empty() || self.q.len() != self.dq.len() {
            return Err(Error::Invalid("q grid must be non-empty with one width per bin".into()));
        }
        if self.q.windows(2).any(|w| !(w[1] > w[0])) || self.q[0] < 0.0 {
            return Err(Error::Invalid("q grid must be non-negative and strictly increasing".into()));
        }
        if self.dq.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Invalid("q bin widths must be > 0".into()));
        }
        Ok(())
    }
}

/// Forward matrix for channel 2n. Rows follow the geometries. Weights must be
/// real, which holds for perpendicular qubits and for any pair whose
/// orientation constants are real.
pub fn forward_matrix(
    geometries: &[Geometry],
    grid: &QGrid,
    n: i32,
    oi: &QubitOrientation,
    oj: &QubitOrientation,
    prefactor: f64,
) -> Result<(DMatrix<f64>, Diagnostics)> {
    grid.validate()?;
    if geometries.is_empty() {
        return Err(Error::Invalid("tomography needs at least one geometry".into()));
    }
    for g in geometries {
        if !(g.z > 0.0) || !(g.d >= 0.0) {
            return Err(Error::Invalid(format!("invalid geometry D={}, z={}", g.d, g.z)));
        }
    }
    let c = orientation_constants(oi, oj);
    let (rows, cols) = (geometries.len(), grid.q.len());
    let mut m = DMatrix::zeros(rows, cols);
    for (l, g) in geometries.iter().enumerate() {
        for k in 0..cols {
            let q = grid.q[k];
            let w = weight_even(&c, n, q * g.d)?;
            if w.im.abs() > 1e-12 * w.norm().max(1e-300) {
                return Err(Error::Invalid("tomography needs real orientation weights".into()));
            }
            m[(l, k)] = prefactor * q * (-2.0 * q * g.z).exp() * w.re * grid.dq[k];
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("forward matrix has non-finite entries".into()));
    }
    let mut diagnostics = Diagnostics::default();
    let expected = rows.min(cols);
    let rank = numerical_rank(&m);
    if rank < expected {
        diagnostics.push(Warning::Rank { rank, expected });
    }
    Ok((m, diagnostics))
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let s = m.clone().svd(false, false).singular_values;
    let top = s.iter().cloned().fold(0.0, f64::max);
    s.iter().filter(|&&v| v > 1e-10 * top).count()
}

/// A complete inverse problem.
#[derive(Debug, Clone)]
pub struct TomographyProblem {
    /// Channel index n (harmonic 2n).
    pub n: i32,
    pub geometries: Vec<Geometry>,
    pub measurements: Vec<f64>,
    /// Bins kept after the momentum mask.
    pub grid: QGrid,
    /// Number of bins removed by the mask q <= 40/min(z).
    pub masked: usize,
    pub matrix: DMatrix<f64>,
    pub prefactor: f64,
    pub diagnostics: Diagnostics,
}

impl TomographyProblem {
    pub fn new(
        n: i32,
        geometries: Vec<Geometry>,
        measurements: Vec<f64>,
        grid: QGrid,
        orientations: (QubitOrientation, QubitOrientation),
        prefactor: f64,
    ) -> Result<Self> {
        if measurements.len() != geometries.len() {
            return Err(Error::Invalid(format!(
                "{} measurements for {} geometries",
                measurements.len(),
                geometries.len()
            )));
        }
        if measurements.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("measurements must be finite".into()));
        }
        grid.validate()?;
        let z_min = geometries.iter().map(|g| g.z).fold(f64::INFINITY, f64::min);
        let cutoff = Q_CUTOFF_Z / z_min;
        let keep: Vec<usize> = (0..grid.q.len()).filter(|&k| grid.q[k] <= cutoff).collect();
        if keep.is_empty() {
            return Err(Error::Invalid("every q bin lies above the accessible cutoff 40/z".into()));
        }
        let masked = grid.q.len() - keep.len();
        let grid =
            QGrid { q: keep.iter().map(|&k| grid.q[k]).collect(), dq: keep.iter().map(|&k| grid.dq[k]).collect() };
        let (matrix, diagnostics) = forward_matrix(&geometries, &grid, n, &orientations.0, &orientations.1, prefactor)?;
        Ok(TomographyProblem { n, geometries, measurements, grid, masked, matrix, prefactor, diagnostics })
    }
}

/// Ridge solution with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub q: Vec<f64>,
    pub estimate: Vec<f64>,
    pub stderr_proxy: Vec<f64>,
    pub lambda: f64,
    pub residual_norm: f64,
    pub solution_norm: f64,
    pub effective_rank: usize,
    /// s²/(s² + λ) per singular value, largest first.
    pub filter_factors: Vec<f64>,
    pub diagnostics: Diagnostics,
}

struct Decomposition {
    s: DVector<f64>,
    v_t: DMatrix<f64>,
    /// Uᵀb.
    beta: DVector<f64>,
    /// ‖b‖² − ‖UUᵀb‖², the residual no λ can remove.
    floor: f64,
}

fn decompose(problem: &TomographyProblem) -> Decomposition {
    let b = DVector::from_column_slice(&problem.measurements);
    let svd = SVD::new(problem.matrix.clone(), true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let s = svd.singular_values;
    let beta = u.transpose() * &b;
    let floor = (b.norm_squared() - beta.norm_squared()).max(0.0);
    Decomposition { s, v_t, beta, floor }
}

fn filter(s: f64, lambda: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s * s / (s * s + lambda)
    }
}

fn residual_norm(dec: &Decomposition, lambda: f64) -> f64 {
    let mut r2 = dec.floor;
    for (s, b) in dec.s.iter().zip(dec.beta.iter()) {
        let f = filter(*s, lambda);
        r2 += ((1.0 - f) * b).powi(2);
    }
    r2.sqrt()
}

fn rank_of(s: &DVector<f64>) -> usize {
    let top = s.iter().cloned().fold(0.0, f64::max);
    s.iter().filter(|&&v| v > 1e-10 * top).count()
}

/// argmin ‖MX − Φ‖² + λ‖X‖². λ = 0 needs full column rank.
pub fn reconstruct(problem: &TomographyProblem, lambda: f64) -> Result<Reconstruction> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let dec = decompose(problem);
    let cols = problem.matrix.ncols();
    let rank = rank_of(&dec.s);
    if lambda == 0.0 && rank < cols {
        return Err(Error::IllPosed(format!("unregularized solve with numerical rank {rank} < {cols} unknowns")));
    }
    let top = dec.s.iter().cloned().fold(0.0, f64::max);
    let mut x = DVector::zeros(cols);
    let mut var = vec![0.0; cols];
    let mut factors = Vec::with_capacity(dec.s.len());
    for (i, &s) in dec.s.iter().enumerate() {
        // Unregularized solves drop numerically null directions.
        let f = if lambda == 0.0 && s <= 1e-10 * top { 0.0 } else { filter(s, lambda) };
        factors.push(f);
        if f == 0.0 {
            continue;
        }
        let coef = f * dec.beta[i] / s;
        let v = dec.v_t.row(i);
        for k in 0..cols {
            x[k] += coef * v[k];
            var[k] += (f * v[k] / s).powi(2);
        }
    }
    let b = DVector::from_column_slice(&problem.measurements);
    let r = &problem.matrix * &x - &b;
    let dof = (problem.measurements.len() as f64 - rank as f64).max(1.0);
    let sigma = r.norm() / dof.sqrt();
    Ok(Reconstruction {
        q: problem.grid.q.clone(),
        estimate: x.iter().cloned().collect(),
        stderr_proxy: var.iter().map(|v| sigma * v.sqrt()).collect(),
        lambda,
        residual_norm: r.norm(),
        solution_norm: x.norm(),
        effective_rank: rank,
        filter_factors: factors,
        diagnostics: problem.diagnostics.clone(),
    })
}

/// Discrepancy principle for a known noise norm: the smallest λ whose
/// residual norm reaches it. Without a noise estimate, the minimizer of the
/// generalized cross-validation function on a log grid.
pub fn pick_regularization(problem: &TomographyProblem, noise_norm: Option<f64>) -> Result<f64> {
    let dec = decompose(problem);
    let top = dec.s.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(1.0);
    }
    let (lo, hi) = ((top * 1e-16).powi(2).max(f64::MIN_POSITIVE), (top * 1e4).powi(2));
    match noise_norm {
        Some(noise) => {
            if !(noise >= 0.0) {
                return Err(Error::Invalid(format!("noise level must be >= 0, got {noise}")));
            }
            if noise == 0.0 || residual_norm(&dec, 0.0) >= noise {
                // The λ → 0 limit. Rank-deficient systems get the smallest λ
                // that still suppresses numerically null directions.
                let floor = if rank_of(&dec.s) < problem.matrix.ncols() { (1e-10 * top).powi(2) } else { 0.0 };
                return Ok(floor);
            }
            if residual_norm(&dec, hi) < noise {
                return Ok(hi);
            }
            // Residual is monotone in λ: bisect in log λ.
            let (mut a, mut b) = (lo.ln(), hi.ln());
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if residual_norm(&dec, m.exp()) >= noise {
                    b = m;
                } else {
                    a = m;
                }
                if b - a < 1e-10 {
                    break;
                }
            }
            Ok(b.exp())
        }
        None => {
            let rows = problem.matrix.nrows() as f64;
            let gcv = |lambda: f64| {
                let trace: f64 = dec.s.iter().map(|s| filter(*s, lambda)).sum();
                let r = residual_norm(&dec, lambda);
                r * r / (rows - trace).max(1e-12).powi(2)
            };
            let steps = 400;
            let mut best = (f64::INFINITY, lo);
            for i in 0..=steps {
                let lambda = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / steps as f64).exp();
                let g = gcv(lambda);
                if g < best.0 {
                    best = (g, lambda);
                }
            }
            Ok(best.1)
        }
    }
}

/// Reads geometries from CSV with header `D,z`.
pub fn read_geometries<R: Read>(reader: R) -> Result<Vec<Geometry>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(|e| Error::Invalid(format!("geometries: {e}")))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub channel: i32,
    pub value: f64,
}

/// Reads measurements from CSV with header `channel,value`, one row per
/// geometry in order. `channel` is the harmonic index 2n.
pub fn read_measurements<R: Read>(reader: R) -> Result<Vec<MeasurementRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(|e| Error::Invalid(format!("measurements: {e}")))).collect()
}

pub fn write_geometries<W: Write>(geometries: &[Geometry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for g in geometries {
        w.serialize(g).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

pub fn write_measurements<W: Write>(rows: &[MeasurementRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}
