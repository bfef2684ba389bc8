//! Run configuration: TOML with nested sections, dotted-key overrides and a
//! canonical hash of the resolved values.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Configuration or validation failure; maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn invalid(key: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{key}: {msg}"))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub material: Material,
    pub geometry: GeometryConfig,
    pub sequence: SequenceConfig,
    pub numerics: NumericsConfig,
    pub output: OutputConfig,
    pub map: MapConfig,
    pub tomography: TomographyConfig,
    pub timescale: TimescaleConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gap {
    S,
    D,
    G,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Material {
    Superconductor(SuperconductorConfig),
    Antiferromagnet(MagnetConfig),
    Altermagnet(MagnetConfig),
    Tabulated(TabulatedConfig),
}

impl Default for Material {
    fn default() -> Self {
        Material::Superconductor(SuperconductorConfig::default())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperconductorConfig {
    pub gap: Gap,
    pub delta0_over_mu: f64,
    pub gamma_p_over_mu: f64,
    /// Defaults to 0.8·Δ₀/1.764.
    pub kbt_over_mu: Option<f64>,
    /// Carrier density, m⁻².
    pub n2d: f64,
    /// Mobility, m²/(V·s).
    pub mobility: f64,
    pub effective_mass_ratio: f64,
    pub radial_nodes: usize,
    pub angular_samples: usize,
    pub omega1_nodes: usize,
    /// Log-spaced q samples of the angular tables.
    pub q_samples: usize,
}

impl Default for SuperconductorConfig {
    fn default() -> Self {
        SuperconductorConfig {
            gap: Gap::S,
            delta0_over_mu: 0.005,
            gamma_p_over_mu: 5e-5,
            kbt_over_mu: None,
            n2d: 1.8e18,
            mobility: 39e-4,
            effective_mass_ratio: 1.0,
            radial_nodes: 64,
            angular_samples: 128,
            omega1_nodes: 32,
            q_samples: 24,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagnetConfig {
    /// Ignored (forced to 0) for the antiferromagnet.
    pub d2_over_d0: f64,
    /// Diffusion constant D₀, m²/s.
    pub d0: f64,
    /// Spin diffusion length, m.
    pub l_s: f64,
    /// Static susceptibility χ₀, SI.
    pub chi0: f64,
    pub neel_angle: f64,
    /// Bath temperature, K.
    pub temperature: f64,
}

impl Default for MagnetConfig {
    fn default() -> Self {
        MagnetConfig { d2_over_d0: 0.9, d0: 8.9e-4, l_s: 3e-6, chi0: 1.0, neel_angle: 0.0, temperature: 200.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RotationOrder {
    Order(u32),
    Named(RotationName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationName {
    Isotropic,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedConfig {
    /// CSV with columns q_tilde,theta_q,value.
    pub path: PathBuf,
    /// Native length, m.
    pub length: f64,
    /// Native time, s.
    pub time: f64,
    /// SI prefactor of O = ω·P·R.
    pub prefactor: f64,
    #[serde(default = "default_rotation")]
    pub rotation: RotationOrder,
    #[serde(default)]
    pub inversion: bool,
    #[serde(default)]
    pub mirror: bool,
    #[serde(default)]
    pub neel_axis: Option<f64>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_rotation() -> RotationOrder {
    RotationOrder::Named(RotationName::None)
}

fn default_temperature() -> f64 {
    300.0
}

/// Inclusive linear grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

impl Grid {
    pub const fn linear(start: f64, stop: f64, points: usize) -> Self {
        Grid { start, stop, points, log: false }
    }

    pub fn validate(&self, key: &str) -> Result<(), ConfigError> {
        if self.points == 0 {
            return Err(invalid(key, "grid is empty (points = 0)"));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(invalid(key, "grid endpoints must be finite"));
        }
        if self.log && !(self.start > 0.0 && self.stop > 0.0) {
            return Err(invalid(key, "log grid endpoints must be > 0"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let u = i as f64 / last;
                if i + 1 == self.points {
                    self.stop
                } else if self.log {
                    self.start * (self.stop / self.start).powf(u)
                } else {
                    self.start + (self.stop - self.start) * u
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Orientation {
    /// Polar angle from the surface normal.
    pub phi: f64,
    /// Azimuth from the pair axis.
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Qubit height, m.
    pub z: f64,
    /// Pair separation, m.
    #[serde(rename = "D")]
    pub d: Option<f64>,
    #[serde(rename = "D_over_z")]
    pub d_over_z: Option<f64>,
    pub beta: Grid,
    pub alpha: Grid,
    /// D/z values of the harmonics table.
    #[serde(rename = "D_over_z_grid")]
    pub d_over_z_grid: Grid,
    pub qubit_i: Orientation,
    pub qubit_j: Orientation,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            z: 10e-9,
            d: None,
            d_over_z: None,
            beta: Grid::linear(0.0, 2.0 * PI, 73),
            alpha: Grid::linear(0.0, 2.0 * PI, 73),
            d_over_z_grid: Grid::linear(1.0, 12.0, 12),
            qubit_i: Orientation::default(),
            qubit_j: Orientation::default(),
        }
    }
}

impl GeometryConfig {
    pub fn separation(&self) -> Result<f64, ConfigError> {
        match (self.d, self.d_over_z) {
            (Some(d), None) => Ok(d),
            (None, Some(r)) => Ok(r * self.z),
            (Some(_), Some(_)) => Err(invalid("geometry", "set only one of D and D_over_z")),
            (None, None) => Err(invalid("geometry", "pair separation needs D or D_over_z")),
        }
        .and_then(|d| {
            if d >= 0.0 && d.is_finite() {
                Ok(d)
            } else {
                Err(invalid("geometry.D", format!("separation must be >= 0, got {d}")))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Ramsey,
    Cpmg,
    Narrowband,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceConfig {
    pub kind: SequenceKind,
    /// π pulses of a CPMG sequence.
    pub n: u32,
    /// Narrowband centre frequency, rad/s.
    pub omega_dd: Option<f64>,
    /// Narrowband centre frequency in units of the material's native time.
    pub omega_native: Option<f64>,
    /// Narrowband relative bandwidth.
    pub b: f64,
    /// Evaluation time, s; 1 µs when neither this nor t_over_ref is set.
    pub t: Option<f64>,
    /// Evaluation time in units of the material timescale.
    pub t_over_ref: Option<f64>,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig {
            kind: SequenceKind::Ramsey,
            n: 1,
            omega_dd: None,
            omega_native: None,
            b: 0.1,
            t: None,
            t_over_ref: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Thermal {
    Quantum,
    Classical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub q_nodes: usize,
    pub q_max_z: f64,
    pub truncation: usize,
    pub theta_nodes: Option<usize>,
    /// Frequency cutoff ω_c, rad/s.
    pub omega_cutoff: Option<f64>,
    pub frequency_nodes: usize,
    pub quasi_static: bool,
    pub thermal: Thermal,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            q_nodes: 256,
            q_max_z: 40.0,
            truncation: 8,
            theta_nodes: None,
            omega_cutoff: None,
            frequency_nodes: 4_000_000,
            quasi_static: true,
            thermal: Thermal::Quantum,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Destination file; stdout when absent.
    pub path: Option<PathBuf>,
    pub format: Format,
    /// Significant digits of numeric cells.
    pub precision: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { path: None, format: Format::Csv, precision: 9 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// q in native units of the material.
    pub q_tilde: Grid,
    pub theta_q: Grid,
    /// Frequency in native units; defaults to the material's probe scale.
    pub omega_tilde: Option<f64>,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            q_tilde: Grid { start: 1e-3, stop: 1.0, points: 16, log: true },
            theta_q: Grid::linear(0.0, 2.0 * PI, 37),
            omega_tilde: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographyConfig {
    /// CSV with columns D,z.
    pub geometries: Option<PathBuf>,
    /// CSV with columns channel,value.
    pub measurements: Option<PathBuf>,
    /// Harmonic channel 2n; taken from the measurements when absent.
    pub channel: Option<i32>,
    pub bins: usize,
    /// Bin range in units of 1/min(z).
    pub q_lo_z: f64,
    pub q_hi_z: f64,
    /// Fixed ridge parameter; overrides the automatic choice.
    pub lambda: Option<f64>,
    /// Noise norm for the discrepancy principle; GCV when absent.
    pub noise_norm: Option<f64>,
    pub prefactor: f64,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        TomographyConfig {
            geometries: None,
            measurements: None,
            channel: None,
            bins: 16,
            q_lo_z: 0.05,
            q_hi_z: 40.0,
            lambda: None,
            noise_norm: None,
            prefactor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimescaleConfig {
    /// Superconductor film temperature, K; the BdG temperature when absent.
    pub film_temperature: Option<f64>,
    /// Magnet timescale that χ₀ is solved for, s.
    pub target: f64,
}

impl Default for TimescaleConfig {
    fn default() -> Self {
        TimescaleConfig { film_temperature: None, target: 39e-6 }
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be > 0, got {v}")))
    }
}

impl RunConfig {
    /// Parses TOML text, applies `key=value` overrides and validates.
    pub fn load(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError(format!("config: {e}")))?;
        // Start from the serialized defaults so partial sections and dotted
        // overrides of nested tables resolve. The material section depends
        // on its kind and is taken verbatim.
        let mut table = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
        table.remove("material");
        merge(&mut table, file);
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            // The merged tree has no source spans; the file alone does.
            match toml::from_str::<RunConfig>(text) {
                Err(f) if f.span().is_some() => ConfigError(format!("config: {f}")),
                _ => ConfigError(format!("config: {e}")),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.material {
            Material::Superconductor(s) => {
                for (k, v) in [
                    ("material.delta0_over_mu", s.delta0_over_mu),
                    ("material.gamma_p_over_mu", s.gamma_p_over_mu),
                    ("material.n2d", s.n2d),
                    ("material.mobility", s.mobility),
                    ("material.effective_mass_ratio", s.effective_mass_ratio),
                ] {
                    positive(k, v)?;
                }
                if let Some(t) = s.kbt_over_mu {
                    positive("material.kbt_over_mu", t)?;
                }
                if s.radial_nodes == 0 || s.angular_samples == 0 || s.omega1_nodes == 0 || s.q_samples < 4 {
                    return Err(invalid("material", "grid sizes must be >= 1 and q_samples >= 4"));
                }
            }
            Material::Antiferromagnet(m) | Material::Altermagnet(m) => {
                for (k, v) in [
                    ("material.d0", m.d0),
                    ("material.l_s", m.l_s),
                    ("material.chi0", m.chi0),
                    ("material.temperature", m.temperature),
                ] {
                    positive(k, v)?;
                }
                if !(0.0..1.0).contains(&m.d2_over_d0) {
                    return Err(invalid("material.d2_over_d0", "must lie in [0, 1)"));
                }
            }
            Material::Tabulated(t) => {
                for (k, v) in [
                    ("material.length", t.length),
                    ("material.time", t.time),
                    ("material.prefactor", t.prefactor),
                    ("material.temperature", t.temperature),
                ] {
                    positive(k, v)?;
                }
            }
        }
        positive("geometry.z", self.geometry.z)?;
        let s = &self.sequence;
        if s.t.is_some() && s.t_over_ref.is_some() {
            return Err(invalid("sequence", "set only one of t and t_over_ref"));
        }
        if let Some(t) = s.t {
            positive("sequence.t", t)?;
        }
        if let Some(t) = s.t_over_ref {
            positive("sequence.t_over_ref", t)?;
        }
        match s.kind {
            SequenceKind::Cpmg if s.n == 0 => return Err(invalid("sequence.n", "CPMG needs n >= 1")),
            SequenceKind::Narrowband => {
                if s.omega_dd.is_some() == s.omega_native.is_some() {
                    return Err(invalid("sequence", "narrowband needs exactly one of omega_dd and omega_native"));
                }
                if !(s.b > 0.0 && s.b <= 0.5) {
                    return Err(invalid("sequence.b", "must lie in (0, 0.5]"));
                }
            }
            _ => {}
        }
        let n = &self.numerics;
        if n.q_nodes < 8 || n.truncation < 1 || n.frequency_nodes == 0 {
            return Err(invalid("numerics", "need q_nodes >= 8, truncation >= 1, frequency_nodes >= 1"));
        }
        positive("numerics.q_max_z", n.q_max_z)?;
        if n.threads == Some(0) {
            return Err(invalid("numerics.threads", "must be >= 1"));
        }
        if !(1..=17).contains(&self.output.precision) {
            return Err(invalid("output.precision", "must lie in 1..=17"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the resolved configuration. Keys
    /// that cannot change the numbers (threads, output path and format) are
    /// left out so equal results carry equal hashes.
    pub fn hash(&self) -> String {
        let mut view = self.clone();
        view.numerics.threads = None;
        view.output.path = None;
        view.output.format = Format::Csv;
        let json = serde_json::to_string(&view).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Sets `a.b.c = value`, creating intermediate tables. The value is parsed
/// as a TOML literal and falls back to a bare string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| ConfigError(format!("--set {assignment}: expected key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError(format!("--set {assignment}: malformed key")));
    }
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node =
            entry.as_table_mut().ok_or_else(|| ConfigError(format!("--set {assignment}: '{p}' is not a section")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::load("", &[]).unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_with_the_key_name() {
        let e = RunConfig::load("[geometry]\nzz = 1.0\n", &[]).unwrap_err();
        assert!(e.0.contains("zz"), "{e}");
        let e = RunConfig::load("[material]\nkind = \"altermagnet\"\nbogus = 2\n", &[]).unwrap_err();
        assert!(e.0.contains("bogus"), "{e}");
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let c = RunConfig::load(
            "[material]\nkind = \"altermagnet\"\n",
            &["material.d2_over_d0=0.5".into(), "geometry.beta.points=5".into(), "output.format=json".into()],
        )
        .unwrap();
        match c.material {
            Material::Altermagnet(m) => assert_eq!(m.d2_over_d0, 0.5),
            _ => panic!("wrong material"),
        }
        assert_eq!(c.geometry.beta.points, 5);
        assert_eq!(c.output.format, Format::Json);
    }

    #[test]
    fn empty_grid_is_a_validation_error() {
        let c = RunConfig::load("", &["geometry.beta.points=0".into()]).unwrap();
        assert!(c.geometry.beta.validate("geometry.beta").is_err());
    }

    #[test]
    fn grids_include_both_endpoints() {
        let g = Grid::linear(0.0, 1.0, 5).values();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let l = Grid { start: 1.0, stop: 100.0, points: 3, log: true }.values();
        assert_eq!(l[2], 100.0);
        assert!((l[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn hash_tracks_resolved_values() {
        let a = RunConfig::load("", &[]).unwrap();
        let b = RunConfig::load("[geometry]\nz = 1e-8\n", &[]).unwrap();
        let c = RunConfig::load("", &["geometry.z=2e-8".into()]).unwrap();
        assert_eq!(a.hash(), b.hash());
        let d = RunConfig::load("", &["numerics.threads=3".into(), "output.format=\"json\"".into()]).unwrap();
        assert_eq!(a.hash(), d.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
