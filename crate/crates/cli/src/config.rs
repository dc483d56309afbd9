//! Experiment parameters: command-line flags merged over an optional JSON
//! config file.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

/// Every parameter any subcommand accepts. Fields irrelevant to the chosen
/// subcommand are ignored.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// JSON file with default values for any of the flags below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Subcommand name; only meaningful inside config files.
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,

    /// Output prefix: writes PREFIX.csv and PREFIX.json (plus extra tables).
    /// Without it the report CSV goes to stdout.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,

    /// euclidean:n, sphere:n:r or hyperbolic:n:r.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold: Option<String>,

    /// brownian, ou[:k], potential:<expr>, metric:<s>, example-T:<file>,
    /// example-random:<terms>:<seed>, conformal:<base>:<c1;c2;...>; the last
    /// four may be joined with '+'.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,

    /// Drift override: zero, linear:<k> or potential:<expr>.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<String>,

    /// Potential expression in cos θ (spheres) or c*r^2 (Euclidean).
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,

    /// Diffusion scale s of reversible generators L = (s/2)(Δ − ∇φ·∇).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,

    /// Base point, comma-separated ambient coordinates (default: the pole).
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<String>,

    /// Tangent direction at the base point, or "any" for a seeded random one.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,

    /// Second point of a pair, comma-separated ambient coordinates.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<String>,

    /// Builds the second point at this distance along --direction.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,

    /// formula, limit or mc.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,

    /// plain (κ) or tilde (κ̃).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,

    /// Comma-separated δ ladder for --method limit.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<String>,

    /// Comma-separated time ladder for --method mc.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_ladder: Option<String>,

    /// Monte Carlo sample count.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,

    /// First starting point of coupled paths.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<String>,

    /// Second starting point of coupled paths.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<String>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,

    /// Number of coupled trajectories.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,

    /// two-point or gaussian.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<String>,

    /// exponential-linear or euler.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,

    /// Keep every n-th simulated state.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,

    /// Paths abort when d(x,y) comes within this margin of the cut locus.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cut_margin: Option<f64>,

    /// Grid size m of the spectral discretization.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,

    /// Number of eigenvalues reported by `spectrum`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,

    /// Comma-separated dimension parameters n′ (may include inf).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nprime: Option<String>,

    /// CSV file holding the covariance A.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<PathBuf>,

    /// CSV file holding the covariance B.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<PathBuf>,

    /// CSV file holding the cost matrix D.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<PathBuf>,

    /// Number of random geodesics checked by `check-h`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geodesics: Option<usize>,

    /// Test function for `variance`: distance or height.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,

    /// JSON array of config objects for `sweep`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub list: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Params {
    /// Applies the config file (if any) underneath the flags.
    pub fn resolve(self) -> Result<Params, CliError> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let base: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(mut merged) = base else {
            return Err(CliError::Validation("config file must hold a JSON object".into()));
        };
        let flags = serde_json::to_value(&self).map_err(|e| CliError::Validation(e.to_string()))?;
        if let Value::Object(flags) = flags {
            merged.extend(flags);
        }
        let mut params = Params::from_object(merged)?;
        params.config = self.config;
        Ok(params)
    }

    pub fn from_object(obj: Map<String, Value>) -> Result<Params, CliError> {
        serde_json::from_value(Value::Object(obj)).map_err(|e| CliError::Validation(format!("invalid config: {e}")))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn require<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        value.as_ref().ok_or_else(|| CliError::Validation(format!("missing required parameter --{name}")))
    }
}
