//! Campaign configuration: TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use suspvisc::{EnsembleSpec, Error, ProcessKind, Result, SolverConfig};

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "SUSPVISC_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub dim: usize,
    #[serde(rename = "L")]
    pub side: f64,
    pub process: ProcessKind,
    pub phi: f64,
    pub gap: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            dim: 3,
            side: 16.0,
            process: ProcessKind::RandomSequentialAddition,
            phi: 0.01,
            gap: 0.5,
        }
    }
}

/// Command-specific settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// Index of the basis strain used by single-strain commands.
    pub strain: usize,
    /// Particles taken from the configuration by `cluster`.
    pub particles: usize,
    pub allow_large: bool,
    /// Configuration JSON to use instead of generating one.
    pub input: Option<PathBuf>,
    /// Ball radius of `mvp`.
    pub radius: f64,
    pub data_count: usize,
    pub max_mode: i64,
    /// Voxel size of `converge`.
    pub voxel: Option<f64>,
    /// Offsets at which `bg` tabulates the kernels.
    pub radii: Vec<f64>,
    /// Also solve the near kernel numerically in `bg`.
    pub numeric_near: bool,
    pub bin_width: f64,
    /// Compute the full second-order tensor in `bg`.
    pub tensor: bool,
    /// Extrapolate `effvisc` in `1/theta` from `theta` and `2 theta`.
    pub richardson: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            strain: 0,
            particles: 3,
            allow_large: false,
            input: None,
            radius: 4.0,
            data_count: 20,
            max_mode: 2,
            voxel: None,
            radii: vec![3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0],
            numeric_near: false,
            bin_width: 0.1,
            tensor: false,
            richardson: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub command: String,
    /// Master seed; configuration `k` uses a seed split from it.
    pub seed: u64,
    pub n_configs: usize,
    /// Volume fractions swept by `einstein`.
    pub phi: Vec<f64>,
    /// Box sides swept by `converge`.
    #[serde(rename = "L")]
    pub sides: Vec<f64>,
    pub output: PathBuf,
    pub ensemble: EnsembleSection,
    pub solver: SolverConfig,
    #[serde(default)]
    pub options: Options,
}

impl CampaignConfig {
    pub fn defaults(command: &str) -> Self {
        let output = std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        Self {
            command: command.to_string(),
            seed: 1,
            n_configs: 8,
            phi: Vec::new(),
            sides: Vec::new(),
            output,
            ensemble: EnsembleSection::default(),
            solver: SolverConfig::default(),
            options: Options::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn emit(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("config serialization: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Ensemble at volume fraction `phi` and box side `side`.
    pub fn spec_at(&self, phi: f64, side: f64) -> EnsembleSpec {
        let e = &self.ensemble;
        EnsembleSpec::new(e.dim, side, e.process, phi, e.gap, self.seed)
    }

    pub fn spec(&self) -> EnsembleSpec {
        self.spec_at(self.ensemble.phi, self.ensemble.side)
    }

    pub fn phi_list(&self) -> Vec<f64> {
        if self.phi.is_empty() {
            vec![self.ensemble.phi]
        } else {
            self.phi.clone()
        }
    }

    pub fn side_list(&self) -> Vec<f64> {
        if self.sides.is_empty() {
            vec![self.ensemble.side]
        } else {
            self.sides.clone()
        }
    }
}
