//! Run configuration: a TOML file with strict key checking.
//!
//! ```toml
//! [electrolyte]
//! z = [-1, 1]
//! n_c = [0.5, 0.5]
//! Pe = [1.0, 1.0]
//! beta = 1.0
//! N_sigma = 1.0
//!
//! [geometry]
//! generator = "bernoulli"
//! L = 2
//! params = { p_open = 0.5, gap_fraction = 0.1 }
//! constraints = { delta_min = 0.1 }
//!
//! grid.n = 128
//! ```
//!
//! Dotted `section.key = value` lines are plain TOML and may replace tables.

use std::path::Path;

use ekhom_core::cell::{CellOptions, Coupling};
use ekhom_core::geometry::{
    generate_bernoulli, generate_perturbed_lattice, generate_poisson_voronoi, DisperseParams, GeometryError,
    Microstructure,
};
use ekhom_core::grid::krylov::SolverOptions;
use ekhom_core::model::{validate_electrolyte, ElectrolyteSpec, Forcing, SurfaceCharge, VectorField};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key: {0}")]
    UnknownKey(String),
    #[error("type error: {0}")]
    TypeError(String),
    #[error("missing required key: {0}")]
    MissingRequired(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub electrolyte: ElectrolyteConfig,
    #[serde(default)]
    pub surface_charge: SurfaceChargeConfig,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, rename = "macro")]
    pub macro_: MacroConfig,
    #[serde(default)]
    pub epsilon: EpsilonConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Mirrors `ElectrolyteSpec`; every key is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrolyteConfig {
    pub z: Vec<i32>,
    pub n_c: Vec<f64>,
    #[serde(rename = "Pe")]
    pub pe: Vec<f64>,
    pub beta: f64,
    #[serde(rename = "N_sigma")]
    pub n_sigma: f64,
}

/// Default: constant charge 0.2 on every grain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceChargeConfig {
    Constant { value: f64 },
    PerGrain { values: Vec<f64> },
}

impl Default for SurfaceChargeConfig {
    fn default() -> Self {
        SurfaceChargeConfig::Constant { value: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    PerturbedLattice,
    Bernoulli,
    PoissonVoronoi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub generator: GeneratorKind,
    /// RVE side length; an integer for the lattice generators. Default 2.
    #[serde(rename = "L", default = "default_l")]
    pub l: f64,
    /// Seed of the realization used by the epsilon stage; defaults to
    /// `ensemble.base_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: GeneratorParams,
    #[serde(default)]
    pub constraints: DisperseParams,
}

fn default_l() -> f64 {
    2.0
}

/// Generator parameters; only the keys of the chosen generator may be set.
/// perturbed_lattice: amplitude (0.2), r_lo (0.2), r_hi (0.35);
/// bernoulli: p_open (0.5), gap_fraction (0.1);
/// poisson_voronoi: intensity (1.0), radius (0.3).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_open: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Cells per RVE side. Default 128.
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Relative residual of every linear solve. Default 1e-10.
    pub tol: f64,
    /// Default 20000.
    pub max_iter: usize,
    /// monolithic (default), block_gauss_seidel or dense. Monolithic MINRES
    /// stops at `tol`; block Gauss-Seidel usually overshoots it.
    pub coupling: CouplingKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 20_000,
            coupling: CouplingKind::Monolithic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    BlockGaussSeidel,
    Monolithic,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorConfig {
    Constant { value: [f64; 2] },
    /// (amplitude sin(2 pi y), 0).
    Shear { amplitude: f64 },
}

impl VectorConfig {
    pub fn field(&self) -> VectorField {
        match self {
            VectorConfig::Constant { value } => VectorField::Constant(*value),
            VectorConfig::Shear { amplitude } => VectorField::Shear { amplitude: *amplitude },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingConfig {
    /// Default shear with amplitude 1.
    pub f_star: VectorConfig,
    /// Default constant (0.5, 0.25).
    pub e: VectorConfig,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        ForcingConfig {
            f_star: VectorConfig::Shear { amplitude: 1.0 },
            e: VectorConfig::Constant { value: [0.5, 0.25] },
        }
    }
}

impl ForcingConfig {
    pub fn forcing(&self) -> Forcing {
        Forcing {
            f_star: self.f_star.field(),
            e: self.e.field(),
            psi_ext: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacroConfig {
    /// Cells per side of the unit square. Default 64.
    pub m: usize,
    pub forcing: ForcingConfig,
}

impl Default for MacroConfig {
    fn default() -> Self {
        MacroConfig {
            m: 64,
            forcing: ForcingConfig::default(),
        }
    }
}

/// Default: empty lists, the epsilon stage does nothing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonConfig {
    pub eps_list: Vec<f64>,
    pub m_list: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    /// Realizations. Default 4, at least 2.
    #[serde(rename = "M")]
    pub m: usize,
    /// Realization r uses seed base_seed + r. Default 1.
    pub base_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { m: 4, base_seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Default "out".
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

fn classify(e: toml::de::Error) -> ConfigError {
    let msg = e.message().to_string();
    if msg.starts_with("unknown field") || msg.starts_with("unknown variant") {
        ConfigError::UnknownKey(msg)
    } else if msg.starts_with("missing field") {
        ConfigError::MissingRequired(msg)
    } else {
        ConfigError::TypeError(msg)
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(classify)?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        validate_electrolyte(self.spec()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let SurfaceChargeConfig::Constant { value } = self.surface_charge {
            if !value.is_finite() {
                return bad("surface charge must be finite".into());
            }
        }
        self.geometry
            .constraints
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.check_params()?;
        if self.grid.n < 32 {
            return bad(format!("grid.n = {} < 32", self.grid.n));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return bad("solver.tol and solver.max_iter must be positive".into());
        }
        if self.macro_.m < 2 {
            return bad("macro.m must be at least 2".into());
        }
        if self.epsilon.eps_list.len() != self.epsilon.m_list.len() {
            return bad(format!(
                "epsilon.eps_list has {} entries, epsilon.m_list {}",
                self.epsilon.eps_list.len(),
                self.epsilon.m_list.len()
            ));
        }
        if self.epsilon.eps_list.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad("epsilon values must lie in (0, 1]".into());
        }
        if self.ensemble.m < 2 {
            return bad(format!("ensemble.M = {} < 2", self.ensemble.m));
        }
        Ok(())
    }

    fn check_params(&self) -> Result<(), ConfigError> {
        let p = &self.geometry.params;
        let set = [
            ("amplitude", p.amplitude.is_some(), GeneratorKind::PerturbedLattice),
            ("r_lo", p.r_lo.is_some(), GeneratorKind::PerturbedLattice),
            ("r_hi", p.r_hi.is_some(), GeneratorKind::PerturbedLattice),
            ("p_open", p.p_open.is_some(), GeneratorKind::Bernoulli),
            ("gap_fraction", p.gap_fraction.is_some(), GeneratorKind::Bernoulli),
            ("intensity", p.intensity.is_some(), GeneratorKind::PoissonVoronoi),
            ("radius", p.radius.is_some(), GeneratorKind::PoissonVoronoi),
        ];
        for (key, present, owner) in set {
            if present && owner != self.geometry.generator {
                return Err(ConfigError::UnknownKey(format!(
                    "geometry.params.{key} does not apply to {:?}",
                    self.geometry.generator
                )));
            }
        }
        let l = self.geometry.l;
        let lattice = matches!(self.geometry.generator, GeneratorKind::PerturbedLattice | GeneratorKind::Bernoulli);
        if !(l > 0.0) || (lattice && (l.fract() != 0.0 || l < 1.0)) {
            return Err(ConfigError::Invalid(format!("geometry.L = {l}")));
        }
        Ok(())
    }

    pub fn spec(&self) -> ElectrolyteSpec {
        let e = &self.electrolyte;
        ElectrolyteSpec {
            z: e.z.clone(),
            n_c: e.n_c.clone(),
            pe: e.pe.clone(),
            beta: e.beta,
            n_sigma: e.n_sigma,
        }
    }

    pub fn surface_charge(&self) -> SurfaceCharge {
        match &self.surface_charge {
            SurfaceChargeConfig::Constant { value } => SurfaceCharge::Constant { value: *value },
            SurfaceChargeConfig::PerGrain { values } => SurfaceCharge::PerGrain { values: values.clone() },
        }
    }

    pub fn cell_options(&self) -> CellOptions {
        CellOptions {
            solver: self.solver_options(),
            coupling: match self.solver.coupling {
                CouplingKind::BlockGaussSeidel => Coupling::BlockGaussSeidel,
                CouplingKind::Monolithic => Coupling::Monolithic,
                CouplingKind::Dense => Coupling::Dense,
            },
            drive_scale: 1.0,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    /// Seed of realization r, with the command-line offset applied.
    pub fn realization_seed(&self, r: usize, offset: u64) -> u64 {
        self.ensemble.base_seed + r as u64 + offset
    }

    /// Seed of the realization the epsilon stage runs on.
    pub fn epsilon_seed(&self, offset: u64) -> u64 {
        self.geometry.seed.unwrap_or(self.ensemble.base_seed) + offset
    }

    pub fn generate(&self, seed: u64) -> Result<Microstructure, GeometryError> {
        let p = &self.geometry.params;
        let c = &self.geometry.constraints;
        let l = self.geometry.l;
        match self.geometry.generator {
            GeneratorKind::PerturbedLattice => generate_perturbed_lattice(
                l as usize,
                p.amplitude.unwrap_or(0.2),
                (p.r_lo.unwrap_or(0.2), p.r_hi.unwrap_or(0.35)),
                seed,
                c,
            ),
            GeneratorKind::Bernoulli => {
                generate_bernoulli(l as usize, p.p_open.unwrap_or(0.5), p.gap_fraction.unwrap_or(0.1), seed, c)
            }
            GeneratorKind::PoissonVoronoi => {
                generate_poisson_voronoi(l, p.intensity.unwrap_or(1.0), p.radius.unwrap_or(0.3), seed, c)
            }
        }
    }

    /// SHA-256 of the canonical JSON form (sorted keys) without the output
    /// directory, with the seed offset folded into the seeds.
    pub fn hash(&self, seed_offset: u64) -> String {
        let mut c = self.clone();
        c.ensemble.base_seed += seed_offset;
        if let Some(s) = c.geometry.seed.as_mut() {
            *s += seed_offset;
        }
        let mut v = serde_json::to_value(&c).expect("configuration serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output");
        }
        let canonical = serde_json::to_string(&v).expect("json value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const MINIMAL: &str = r#"
[electrolyte]
z = [-1, 1]
n_c = [0.5, 0.5]
Pe = [1.0, 1.0]
beta = 1.0
N_sigma = 1.0

[geometry]
generator = "bernoulli"
constraints = { delta_min = 0.1 }
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.grid.n, 128);
        assert_eq!(c.geometry.l, 2.0);
        assert_eq!(c.solver.tol, 1e-10);
        assert_eq!(c.ensemble, EnsembleConfig { m: 4, base_seed: 1 });
        assert_eq!(c.surface_charge, SurfaceChargeConfig::Constant { value: 0.2 });
        assert_eq!(c.output.dir, "out");
        assert!(c.epsilon.eps_list.is_empty());
    }

    #[test]
    fn misspelled_key_is_unknown() {
        let text = MINIMAL.replace("N_sigma", "n_sgima");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::UnknownKey(_))));
        let text = format!("{MINIMAL}\n[grid]\nn = 64\nnn = 3\n");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn missing_and_mistyped_keys() {
        let text = MINIMAL.replace("beta = 1.0\n", "");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::MissingRequired(_))));
        let text = MINIMAL.replace("beta = 1.0", "beta = \"one\"");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::TypeError(_))));
    }

    #[test]
    fn params_of_other_generator_are_rejected() {
        let text = format!("{MINIMAL}params = {{ intensity = 2.0 }}\n");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn mismatched_epsilon_lists_are_invalid() {
        let text = format!("{MINIMAL}\n[epsilon]\neps_list = [0.25, 0.125]\nm_list = [256]\n");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn flat_dotted_keys_are_accepted() {
        let text = format!("grid.n = 64\nensemble.M = 2\n{MINIMAL}");
        let c = parse_config_str(&text).unwrap();
        assert_eq!(c.grid.n, 64);
        assert_eq!(c.ensemble.m, 2);
    }

    #[test]
    fn round_trip_and_hash_stability() {
        let text = format!("{MINIMAL}\n[epsilon]\neps_list = [0.25]\nm_list = [256]\n[macro.forcing]\ne = {{ kind = \"constant\", value = [1.0, 0.0] }}\n");
        let c = parse_config_str(&text).unwrap();
        let again = parse_config_str(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(0), again.hash(0));
        // key order does not matter, the output directory is not hashed
        let reordered = "[geometry]\nconstraints = { delta_min = 0.1 }\ngenerator = \"bernoulli\"\n\
            [electrolyte]\nN_sigma = 1.0\nbeta = 1.0\nPe = [1.0, 1.0]\nn_c = [0.5, 0.5]\nz = [-1, 1]\n\
            [output]\ndir = \"elsewhere\"\n";
        let a = parse_config_str(MINIMAL).unwrap();
        let b = parse_config_str(reordered).unwrap();
        assert_eq!(a.hash(0), b.hash(0));
        assert_ne!(a.hash(0), a.hash(1));
        let mut shifted = a.clone();
        shifted.ensemble.base_seed += 1;
        assert_eq!(a.hash(1), shifted.hash(0));
    }
}
