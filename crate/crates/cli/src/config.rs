use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vmmma::fourier::Root;
use vmmma::grid::GridSpec;
use vmmma::kernels::Kernel;
use vmmma::levy_basis::{CharQuadruplet, LevyFamily};
use vmmma::simulate::{ReplicationConfig, Simulator, VmmmaModel, Volatility, VolatilityModel, TRUNCATION_TOL};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelConfig>,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub design: Option<DesignConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kernel_g: Kernel,
    pub volatility: VolatilityConfig,
}

/// The stochastic variant's basis is the driftless subordinator with the
/// given Lévy measure.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VolatilityConfig {
    Constant { sigma2: f64 },
    Stochastic { kernel_h: Kernel, levy: LevyFamily },
}

impl ModelConfig {
    pub fn build(&self) -> Result<VmmmaModel> {
        let volatility = match &self.volatility {
            VolatilityConfig::Constant { sigma2 } => Volatility::Constant { sigma2: *sigma2 },
            VolatilityConfig::Stochastic { kernel_h, levy } => {
                Volatility::Stochastic(VolatilityModel::new(kernel_h.clone(), CharQuadruplet::subordinator(*levy)?)?)
            }
        };
        let m = VmmmaModel { kernel_g: self.kernel_g.clone(), volatility };
        m.validate()?;
        Ok(m)
    }
}

/// Target lattice. Vectors of length one are broadcast to `dim` axes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub origin: Vec<f64>,
    pub step: Vec<f64>,
    pub count: Vec<usize>,
    #[serde(default = "default_tol")]
    pub truncation_tol: f64,
}

fn default_tol() -> f64 {
    TRUNCATION_TOL
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n_reps: usize,
    pub master_seed: u64,
    /// Defaults to the grid origin.
    pub anchor: Option<Vec<f64>>,
    pub lags: Vec<Vec<f64>>,
    pub thetas: Vec<f64>,
    pub laplace_thetas: Vec<f64>,
    pub monotonicity_thetas: Vec<f64>,
    pub max_order: u32,
    /// Replications written out as field files.
    pub save_fields: usize,
    pub hurst: Option<Vec<f64>>,
    pub frequencies: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_reps: 1000,
            master_seed: 0,
            anchor: None,
            lags: Vec::new(),
            thetas: vec![0.0, 0.5, 1.0, 2.0],
            laplace_thetas: vec![0.0, 0.5, 1.0, 2.0],
            monotonicity_thetas: (1..=40).map(|i| 0.1 * i as f64).collect(),
            max_order: 4,
            save_fields: 1,
            hurst: None,
            frequencies: (0..=40).map(|i| -5.0 + 0.25 * i as f64).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceFamily {
    /// exp(-h²/(2ℓ²)).
    Gaussian,
    /// exp(-|h|/ℓ).
    Exponential,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetCovariance {
    pub family: CovarianceFamily,
    pub scale: f64,
    pub count: usize,
}

/// One-dimensional covariance to be realised by a moving-average kernel,
/// given either as a table R(0), R(Δ), … or as a named family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub root: Root,
    pub step: f64,
    pub table: Option<Vec<f64>>,
    pub covariance: Option<TargetCovariance>,
    #[serde(default = "default_interior")]
    pub interior: f64,
    #[serde(default = "default_roundtrip_tol")]
    pub tolerance: f64,
}

fn default_interior() -> f64 {
    0.8
}

fn default_roundtrip_tol() -> f64 {
    1e-3
}

impl DesignConfig {
    pub fn table(&self) -> Result<Vec<f64>> {
        match (&self.table, &self.covariance) {
            (Some(t), None) => Ok(t.clone()),
            (None, Some(c)) => {
                if !(c.scale > 0.0) || c.count < 2 {
                    return Err(CliError::Config("covariance scale must be positive and count at least 2".into()));
                }
                Ok((0..c.count)
                    .map(|i| {
                        let h = i as f64 * self.step / c.scale;
                        match c.family {
                            CovarianceFamily::Gaussian => (-0.5 * h * h).exp(),
                            CovarianceFamily::Exponential => (-h).exp(),
                        }
                    })
                    .collect())
            }
            _ => Err(CliError::Config("[design] needs exactly one of `table` and `covariance`".into())),
        }
    }
}

/// Command-line overrides of the config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub reps: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(s) = overrides.seed {
            cfg.run.master_seed = s;
        }
        if let Some(d) = &overrides.out {
            cfg.output.dir = d.clone();
        }
        if let Some(n) = overrides.reps {
            cfg.run.n_reps = n;
        }
        Ok(cfg)
    }

    pub fn model(&self) -> Result<VmmmaModel> {
        self.model.as_ref().ok_or_else(|| CliError::Config("missing [model] block".into()))?.build()
    }

    pub fn grid_config(&self) -> Result<&GridConfig> {
        self.grid.as_ref().ok_or_else(|| CliError::Config("missing [grid] block".into()))
    }

    pub fn design(&self) -> Result<&DesignConfig> {
        self.design.as_ref().ok_or_else(|| CliError::Config("missing [design] block".into()))
    }

    pub fn target_grid(&self) -> Result<GridSpec> {
        let g = self.grid_config()?;
        let widen = |v: &[f64], name: &str| -> Result<Vec<f64>> {
            match v.len() {
                1 => Ok(vec![v[0]; g.dim]),
                n if n == g.dim => Ok(v.to_vec()),
                n => Err(CliError::Config(format!("grid.{name} has {n} entries for dim {}", g.dim))),
            }
        };
        let counts: Vec<f64> = g.count.iter().map(|&c| c as f64).collect();
        let counts: Vec<usize> = widen(&counts, "count")?.iter().map(|&c| c as usize).collect();
        Ok(GridSpec::from_parts(&widen(&g.origin, "origin")?, &widen(&g.step, "step")?, &counts)?)
    }

    pub fn simulator(&self) -> Result<Simulator> {
        let tol = self.grid_config()?.truncation_tol;
        Ok(Simulator::new(self.model()?, self.target_grid()?, tol)?)
    }

    pub fn anchor(&self, grid: &GridSpec) -> Vec<f64> {
        self.run.anchor.clone().unwrap_or_else(|| grid.axes.iter().map(|a| a.origin).collect())
    }

    pub fn replication(&self, grid: &GridSpec) -> ReplicationConfig {
        ReplicationConfig {
            anchor: self.anchor(grid),
            lags: self.run.lags.clone(),
            thetas: self.run.thetas.clone(),
            laplace_thetas: self.run.laplace_thetas.clone(),
        }
    }

    /// sha256 of the model and grid blocks as JSON.
    pub fn model_hash(&self) -> Result<String> {
        let json = serde_json::to_vec(&(&self.model, &self.grid))?;
        Ok(hex::encode(Sha256::digest(&json)))
    }
}
