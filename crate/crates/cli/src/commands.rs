//! Subcommand implementations. Each returns a dataset; writing is left to
//! the caller.

use std::fs::File;
use std::path::{Path, PathBuf};

use dephasometry::constants::GAMMA_E;
use dephasometry::engine::{
    bell_decays, chi0_for_timescale, dominant_harmonic, timescale_am, timescale_sc, AmTimescaleInputs, Dephasometer,
    Measurement, ScTimescaleInputs,
};
use dephasometry::fields::{magnet_field, superconductor_field};
use dephasometry::filters::{FrequencyIntegralConfig, PulseSequence, ThermalFactor};
use dephasometry::kernel::{
    FieldSpec, KernelOptions, PairGeometry, ProbeScales, QubitOrientation, ResponseField, Rotation, Sampling, Symmetry,
    TabulatedResponse, Units,
};
use dephasometry::magnet::{magnet_map, MagParams};
use dephasometry::superconductor::{conductivity_map, GapKind, ScGrid, ScParams};
use dephasometry::tomography::{
    pick_regularization, read_geometries, read_measurements, reconstruct, QGrid, TomographyProblem,
};
use dephasometry::{Diagnostics, Error};
use rayon::prelude::*;
use serde_json::Value;

use crate::config::{
    ConfigError, Gap, MagnetConfig, Material, Orientation, RotationName, RotationOrder, RunConfig, SequenceKind,
    SuperconductorConfig, TabulatedConfig, Thermal,
};
use crate::output::{Cell, Dataset};

/// Failure of a subcommand, classified for the exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonConvergence(_) | Error::IllPosed(_) => Failure::Numeric(e.to_string()),
            other => Failure::Config(ConfigError(other.to_string())),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn sc_params(s: &SuperconductorConfig) -> ScParams {
    let kind = match s.gap {
        Gap::S => GapKind::S,
        Gap::D => GapKind::D,
        Gap::G => GapKind::G,
    };
    let base = ScParams::fese(kind);
    ScParams {
        delta0_over_mu: s.delta0_over_mu,
        gamma_p_over_mu: s.gamma_p_over_mu,
        kbt_over_mu: s.kbt_over_mu.unwrap_or(0.8 * s.delta0_over_mu / 1.764),
        sigma_n: s.n2d * dephasometry::constants::E_CHARGE * s.mobility,
        k_f: (2.0 * std::f64::consts::PI * s.n2d).sqrt(),
        effective_mass_ratio: s.effective_mass_ratio,
        grid: ScGrid {
            radial: s.radial_nodes,
            angular: s.angular_samples,
            omega1: s.omega1_nodes,
            ..ScGrid::default()
        },
        ..base
    }
}

fn mag_params(m: &MagnetConfig, antiferro: bool) -> MagParams {
    MagParams {
        d2_over_d0: if antiferro { 0.0 } else { m.d2_over_d0 },
        gamma_m: m.d0 / (m.l_s * m.l_s),
        d0: m.d0,
        chi0_hbar_gamma2: m.chi0 * dephasometry::constants::HBAR * GAMMA_E * GAMMA_E,
        neel_angle: m.neel_angle,
    }
}

fn tabulated_field(t: &TabulatedConfig) -> Result<ResponseField> {
    let table = TabulatedResponse::from_path(&t.path)?;
    let rotation = match t.rotation {
        RotationOrder::Order(p) => Rotation::Order(p),
        RotationOrder::Named(RotationName::Isotropic) => Rotation::Isotropic,
        RotationOrder::Named(RotationName::None) => Rotation::None,
    };
    let spec = FieldSpec {
        label: format!("tabulated {}", t.path.display()),
        symmetry: Symmetry { rotation, inversion: t.inversion, mirror: t.mirror },
        neel_axis: t.neel_axis,
        units: Units { length: t.length, time: t.time, prefactor: t.prefactor },
        sampling: Sampling::Direct,
        quadrature_backed: true,
        probe: ProbeScales { q: 1.0, omega: 1.0 },
    };
    Ok(ResponseField::new(table, spec)?)
}

/// Resolved material, measurement and kernel settings.
pub struct Context {
    pub field: ResponseField,
    pub meas: Measurement,
    pub kernel: KernelOptions,
    pub z: f64,
    pub t_ref: Option<f64>,
}

fn reference_time(cfg: &RunConfig) -> Result<Option<f64>> {
    let z = cfg.geometry.z;
    Ok(match &cfg.material {
        Material::Superconductor(s) => {
            let p = sc_params(s);
            Some(timescale_sc(&ScTimescaleInputs {
                n2d: s.n2d,
                mobility: s.mobility,
                temperature: cfg.timescale.film_temperature.unwrap_or_else(|| p.temperature()),
                z,
                effective_mass_ratio: s.effective_mass_ratio,
            })?)
        }
        Material::Antiferromagnet(m) | Material::Altermagnet(m) => Some(timescale_am(&am_inputs(m, z))?),
        Material::Tabulated(_) => None,
    })
}

fn am_inputs(m: &MagnetConfig, z: f64) -> AmTimescaleInputs {
    AmTimescaleInputs { d0: m.d0, chi0: m.chi0, gamma: GAMMA_E, z, temperature: m.temperature }
}

impl Context {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let n = &cfg.numerics;
        let (field, temperature) = match &cfg.material {
            Material::Superconductor(s) => {
                let p = sc_params(s);
                let sampling = Sampling::LogGrid { nodes: s.q_samples, lo: 0.05, hi: n.q_max_z };
                (superconductor_field(&p, sampling)?, p.temperature())
            }
            Material::Antiferromagnet(m) => (magnet_field(&mag_params(m, true))?, m.temperature),
            Material::Altermagnet(m) => (magnet_field(&mag_params(m, false))?, m.temperature),
            Material::Tabulated(t) => (tabulated_field(t)?, t.temperature),
        };
        let s = &cfg.sequence;
        let seq = match s.kind {
            SequenceKind::Ramsey => PulseSequence::Ramsey,
            SequenceKind::Cpmg => PulseSequence::Cpmg { n: s.n },
            SequenceKind::Narrowband => {
                let omega_dd = s.omega_dd.unwrap_or_else(|| s.omega_native.unwrap_or(0.0) / field.units.time);
                PulseSequence::NarrowBand { omega_dd, b: s.b }
            }
        };
        let t_ref = reference_time(cfg)?;
        let t = match (s.t, s.t_over_ref, t_ref) {
            (Some(t), _, _) => t,
            (None, None, _) => 1e-6,
            (None, Some(r), Some(tr)) => r * tr,
            (None, Some(_), None) => {
                return Err(
                    ConfigError("sequence.t_over_ref: tabulated materials have no reference timescale".into()).into()
                )
            }
        };
        let meas = Measurement {
            seq,
            t,
            temperature,
            freq: FrequencyIntegralConfig {
                cutoff: n.omega_cutoff,
                nodes: n.frequency_nodes,
                quasi_static: n.quasi_static,
                thermal: match n.thermal {
                    Thermal::Quantum => ThermalFactor::Quantum,
                    Thermal::Classical => ThermalFactor::Classical,
                },
            },
        };
        meas.validate()?;
        let kernel = KernelOptions {
            q_nodes: n.q_nodes,
            q_max_z: n.q_max_z,
            truncation: n.truncation,
            theta_nodes: n.theta_nodes,
        };
        kernel.validate()?;
        Ok(Context { field, meas, kernel, z: cfg.geometry.z, t_ref })
    }

    fn dephasometer(&self) -> Result<Dephasometer<'_>> {
        Ok(Dephasometer::new(&self.field, self.z, self.meas, self.kernel)?)
    }

    fn annotate(&self, ds: &mut Dataset, diagnostics: &Diagnostics) {
        ds.meta("material", self.field.label.clone());
        ds.meta("t", self.meas.t);
        ds.meta("temperature", self.meas.temperature);
        if let Some(tr) = self.t_ref {
            ds.meta("t_ref", tr);
        }
        for w in &diagnostics.warnings {
            ds.warn(w);
        }
    }
}

fn orientation(o: &Orientation) -> QubitOrientation {
    QubitOrientation { phi: o.phi, alpha: o.alpha }
}

pub fn sweep_beta(cfg: &RunConfig) -> Result<Dataset> {
    cfg.geometry.beta.validate("geometry.beta")?;
    let d = cfg.geometry.separation()?;
    let ctx = Context::build(cfg)?;
    let dm = ctx.dephasometer()?;
    let (oi, oj) = (orientation(&cfg.geometry.qubit_i), orientation(&cfg.geometry.qubit_j));
    let mut res = dm.evaluate(&PairGeometry { z: ctx.z, d, beta: 0.0 }, &oi, &oj)?;
    let mut ds = Dataset::new(["beta", "phi_c", "phi_s_i", "phi_s_j", "phi_bell_plus", "phi_bell_minus"]);
    let mut diag = std::mem::take(&mut res.diagnostics);
    for beta in cfg.geometry.beta.values() {
        let phi_c = res.phi_c_checked(beta, &mut diag);
        let (si, sj) = res.phi_s_at(beta);
        let (plus, minus) = bell_decays(si, sj, phi_c)?;
        ds.push([beta, phi_c, si, sj, plus, minus].map(Cell::Num).to_vec());
    }
    ds.meta("D", d);
    ds.meta("z", ctx.z);
    ctx.annotate(&mut ds, &diag);
    Ok(ds)
}

pub fn sweep_alpha(cfg: &RunConfig) -> Result<Dataset> {
    cfg.geometry.alpha.validate("geometry.alpha")?;
    let ctx = Context::build(cfg)?;
    let dm = ctx.dephasometer()?;
    let phi = cfg.geometry.qubit_i.phi;
    let h = dm.phi_s_harmonics(&QubitOrientation { phi, alpha: 0.0 })?;
    let mut ds = Dataset::new(["alpha", "phi_s"]);
    for alpha in cfg.geometry.alpha.values() {
        ds.push(vec![Cell::Num(alpha), Cell::Num(dm.phi_s(&QubitOrientation { phi, alpha })?)]);
    }
    ds.meta("phi", phi);
    ds.meta("z", ctx.z);
    ds.meta("phi_s_harmonics", h.iter().map(|c| Value::from(vec![c.re, c.im])).collect::<Vec<_>>());
    ctx.annotate(&mut ds, dm.diagnostics());
    Ok(ds)
}

pub fn harmonics(cfg: &RunConfig) -> Result<Dataset> {
    let grid = &cfg.geometry.d_over_z_grid;
    grid.validate("geometry.D_over_z_grid")?;
    let ctx = Context::build(cfg)?;
    let dm = ctx.dephasometer()?;
    let (oi, oj) = (orientation(&cfg.geometry.qubit_i), orientation(&cfg.geometry.qubit_j));
    let n = cfg.numerics.truncation as i32;
    let even: Vec<i32> = (0..=n).map(|k| 2 * k).collect();
    let odd: Vec<i32> = (0..n).map(|k| 2 * k + 1).collect();
    let mut columns = vec!["D_over_z".to_string()];
    for m in &even {
        columns.push(format!("phi_c_{m}_re"));
        columns.push(format!("phi_c_{m}_im"));
    }
    for m in &odd {
        columns.push(format!("psi_c_{m}_re"));
        columns.push(format!("psi_c_{m}_im"));
    }
    columns.push("dominant_index".into());
    columns.push("dominance_ratio".into());
    let ratios = grid.values();
    let rows: Vec<Vec<Cell>> = ratios
        .par_iter()
        .map(|&r| -> Result<Vec<Cell>> {
            let d = r * ctx.z;
            let phi = dm.phi_c_harmonics(d, &oi, &oj)?;
            let psi = dm.psi_c_harmonics(d, &oi, &oj)?;
            let pick = |h: &[(i32, num_complex::Complex64)], m: i32| {
                h.iter().find(|(k, _)| *k == m).map(|(_, v)| *v).unwrap_or_default()
            };
            let mut row = vec![Cell::Num(r)];
            for &m in &even {
                let v = pick(&phi, m);
                row.extend([Cell::Num(v.re), Cell::Num(v.im)]);
            }
            for &m in &odd {
                let v = pick(&psi, m);
                row.extend([Cell::Num(v.re), Cell::Num(v.im)]);
            }
            let (index, ratio) = dominant_harmonic(&phi);
            row.extend([Cell::Int(index as i64), Cell::Num(ratio)]);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut ds = Dataset::new(columns);
    for row in rows {
        ds.push(row);
    }
    ds.meta("z", ctx.z);
    ctx.annotate(&mut ds, dm.diagnostics());
    Ok(ds)
}

pub fn response_map(cfg: &RunConfig) -> Result<Dataset> {
    let m = &cfg.map;
    m.q_tilde.validate("map.q_tilde")?;
    m.theta_q.validate("map.theta_q")?;
    let (qs, ts) = (m.q_tilde.values(), m.theta_q.values());
    let ds = match &cfg.material {
        Material::Superconductor(s) => {
            let omega = m.omega_tilde.unwrap_or(1e-7);
            let map = conductivity_map(&sc_params(s), &qs, &ts, omega)?;
            let mut ds = Dataset::new(["q_tilde", "theta_q", "re_sigma_over_sigma_n"]);
            for (i, q) in map.q_tilde.iter().enumerate() {
                for (j, t) in map.theta_q.iter().enumerate() {
                    ds.push(vec![Cell::Num(*q), Cell::Num(*t), Cell::Num(map.values[i][j])]);
                }
            }
            ds.meta("omega_tilde", omega);
            ds
        }
        Material::Antiferromagnet(c) | Material::Altermagnet(c) => {
            let omega = m.omega_tilde.unwrap_or(1e-3);
            let p = mag_params(c, matches!(cfg.material, Material::Antiferromagnet(_)));
            let mut ds = Dataset::new(["q_tilde", "theta_q", "im_chi_norm", "response_O"]);
            for r in magnet_map(&p, &qs, &ts, omega)? {
                ds.push([r.q_tilde, r.theta_q, r.im_chi_norm, r.response_o].map(Cell::Num).to_vec());
            }
            ds.meta("omega_tilde", omega);
            ds
        }
        Material::Tabulated(t) => {
            let omega = m.omega_tilde.unwrap_or(1.0);
            let field = tabulated_field(t)?;
            let mut ds = Dataset::new(["q_tilde", "theta_q", "value"]);
            for &q in &qs {
                for &th in &ts {
                    ds.push(vec![Cell::Num(q), Cell::Num(th), Cell::Num(field.eval(q, th, omega)?)]);
                }
            }
            ds.meta("omega_tilde", omega);
            ds
        }
    };
    Ok(ds)
}

fn open(key: &str, path: &Path) -> Result<File> {
    File::open(path).map_err(|e| ConfigError(format!("{key}: {}: {e}", path.display())).into())
}

pub fn tomography(cfg: &RunConfig, geometries: Option<PathBuf>, measurements: Option<PathBuf>) -> Result<Dataset> {
    let t = &cfg.tomography;
    let gpath = geometries
        .or_else(|| t.geometries.clone())
        .ok_or_else(|| ConfigError("tomography.geometries: no geometries file given".into()))?;
    let mpath = measurements
        .or_else(|| t.measurements.clone())
        .ok_or_else(|| ConfigError("tomography.measurements: no measurements file given".into()))?;
    let geoms = read_geometries(open("tomography.geometries", &gpath)?)?;
    let rows = read_measurements(open("tomography.measurements", &mpath)?)?;
    if geoms.is_empty() {
        return Err(ConfigError("tomography.geometries: file has no rows".into()).into());
    }
    let channel = t.channel.or_else(|| rows.first().map(|r| r.channel)).unwrap_or(0);
    if channel % 2 != 0 {
        return Err(ConfigError(format!("tomography.channel: must be even, got {channel}")).into());
    }
    if let Some(r) = rows.iter().find(|r| r.channel != channel) {
        return Err(
            ConfigError(format!("tomography.measurements: channel {} differs from {channel}", r.channel)).into()
        );
    }
    if t.bins == 0 || !(t.q_lo_z > 0.0 && t.q_hi_z > t.q_lo_z) {
        return Err(ConfigError("tomography: need bins >= 1 and 0 < q_lo_z < q_hi_z".into()).into());
    }
    let z_min = geoms.iter().map(|g| g.z).fold(f64::INFINITY, f64::min);
    let grid = QGrid::log_bins(t.q_lo_z / z_min, t.q_hi_z / z_min, t.bins)?;
    let orient = (orientation(&cfg.geometry.qubit_i), orientation(&cfg.geometry.qubit_j));
    let values = rows.iter().map(|r| r.value).collect();
    let problem = TomographyProblem::new(channel / 2, geoms, values, grid, orient, t.prefactor)?;
    let lambda = match t.lambda {
        Some(l) if l >= 0.0 => l,
        Some(l) => return Err(ConfigError(format!("tomography.lambda: must be >= 0, got {l}")).into()),
        None => pick_regularization(&problem, t.noise_norm)?,
    };
    let rec = reconstruct(&problem, lambda)?;
    let mut ds = Dataset::new(["q", "estimate", "stderr_proxy"]);
    for k in 0..rec.q.len() {
        ds.push(vec![Cell::Num(rec.q[k]), Cell::Num(rec.estimate[k]), Cell::Num(rec.stderr_proxy[k])]);
    }
    ds.meta("channel", channel);
    ds.meta("lambda", rec.lambda);
    ds.meta("residual_norm", rec.residual_norm);
    ds.meta("solution_norm", rec.solution_norm);
    ds.meta("effective_rank", rec.effective_rank);
    ds.meta("masked_bins", problem.masked);
    for w in problem.diagnostics.warnings.iter().chain(&rec.diagnostics.warnings) {
        ds.warn(w);
    }
    Ok(ds)
}

pub fn timescale(cfg: &RunConfig) -> Result<Dataset> {
    let z = cfg.geometry.z;
    let mut ds = Dataset::new(["quantity", "value", "unit"]);
    let mut row = |name: &str, v: f64, unit: &str| {
        ds.push(vec![Cell::Text(name.into()), Cell::Num(v), Cell::Text(unit.into())]);
    };
    match &cfg.material {
        Material::Superconductor(s) => {
            let p = sc_params(s);
            let inputs = ScTimescaleInputs {
                n2d: s.n2d,
                mobility: s.mobility,
                temperature: cfg.timescale.film_temperature.unwrap_or_else(|| p.temperature()),
                z,
                effective_mass_ratio: s.effective_mass_ratio,
            };
            row("t_sc", timescale_sc(&inputs)?, "s");
            row("z", z, "m");
            row("temperature", inputs.temperature, "K");
            row("sigma_n", p.sigma_n, "S");
            row("k_f", p.k_f, "1/m");
        }
        Material::Antiferromagnet(m) | Material::Altermagnet(m) => {
            let inputs = am_inputs(m, z);
            row("t_am", timescale_am(&inputs)?, "s");
            row("z", z, "m");
            row("temperature", m.temperature, "K");
            row("chi0", m.chi0, "SI");
            row("target", cfg.timescale.target, "s");
            row("chi0_for_target", chi0_for_timescale(&inputs, cfg.timescale.target)?, "SI");
        }
        Material::Tabulated(_) => {
            return Err(ConfigError("material.kind: timescale needs a built-in material model".into()).into())
        }
    }
    Ok(ds)
}
