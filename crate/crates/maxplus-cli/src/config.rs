//! Run configuration: TOML file merged with command-line flags, flags
//! winning. Unknown keys are rejected so a config file diff is a faithful
//! experiment record.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use maxplus::model::{DriftedBmSpec, GbmSpec, JumpComponent, JumpLaw, LevySpec};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub run: RunSection,
    pub price: PriceSection,
    pub boundary: BoundarySection,
    pub tree: TreeSection,
    pub convex: ConvexSection,
    pub ay: AySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// "gbm" | "bm" | "levy"
    pub kind: String,
    pub r: f64,
    pub sigma: f64,
    pub x0: f64,
    /// Downward-drift magnitude of the additive model
    /// `dZ = -mu dt + sigma dW` ("bm" only); must be > 0.
    pub mu: f64,
    /// Downward-exponential jump components as `[rate, theta]` pairs
    /// ("levy" only).
    pub jumps_exponential: Vec<[f64; 2]>,
    /// Point-mass jump components as `[rate, y]` pairs with `y < 0`
    /// ("levy" only).
    pub jumps_atom: Vec<[f64; 2]>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: "gbm".into(),
            r: 0.5,
            sigma: 1.0,
            x0: 1.0,
            mu: 0.5,
            jumps_exponential: Vec::new(),
            jumps_atom: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Master seed; mandatory for any stochastic subcommand.
    pub seed: Option<u64>,
    pub paths: u64,
    /// Grid steps per path; model-based default when absent.
    pub steps: Option<usize>,
    /// Horizon (or truncation horizon for perpetual quantities).
    pub t: Option<f64>,
    /// Threshold whose supremum tail `simulate` checks.
    pub level: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: None,
            paths: 100_000,
            steps: None,
            t: None,
            level: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriceSection {
    pub strike: f64,
    /// Kill rate; > 0 switches the GBM call to its killed-horizon variant.
    pub beta: Option<f64>,
    /// Attach Monte Carlo estimators next to the closed form.
    pub mc: bool,
}

impl Default for PriceSection {
    fn default() -> Self {
        PriceSection {
            strike: 1.0,
            beta: None,
            mc: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundarySection {
    pub strikes: Vec<f64>,
}

impl Default for BoundarySection {
    fn default() -> Self {
        BoundarySection {
            strikes: vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeSection {
    /// Binomial depth when no explicit tree file is given.
    pub steps: usize,
    /// Horizon of the built-in binomial tree.
    pub t: f64,
    /// JSON tree file; overrides the built-in binomial tree.
    pub source: Option<PathBuf>,
    /// Strikes for the derivative, stopping-rule, and duality checks.
    pub strikes: Vec<f64>,
    /// Quantile grid size of the exact convex-order comparison.
    pub grid: usize,
    /// Optional payoff per node label: runs the general-payoff route.
    pub y: Option<BTreeMap<String, f64>>,
}

impl Default for TreeSection {
    fn default() -> Self {
        TreeSection {
            steps: 12,
            t: 10.0,
            source: None,
            strikes: vec![0.25, 1.0, 2.0],
            grid: 50,
            y: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvexSection {
    pub t: f64,
    pub grid: usize,
    /// Compare in the reversed direction (sensitivity probe; expected to
    /// fail dominance).
    pub swap: bool,
}

impl Default for ConvexSection {
    fn default() -> Self {
        ConvexSection {
            t: 5.0,
            grid: 50,
            swap: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AySection {
    /// "power:p" | "log:c" | "affine:a,b"
    pub family: String,
    pub strike: f64,
    /// State at which the floored value is evaluated.
    pub level: f64,
    /// Martingale path for the exact pathwise checks.
    pub path: Vec<f64>,
    /// Also run the Monte Carlo ensemble check (stochastic; needs a seed).
    pub ensemble: bool,
}

impl Default for AySection {
    fn default() -> Self {
        AySection {
            family: "power:0.5".into(),
            strike: 1.0,
            level: 1.0,
            path: vec![1.0, 3.0, 2.0, 5.0, 4.0],
            ensemble: false,
        }
    }
}

/// Flag overrides; every field beats the file when present.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<u64>,
    pub steps: Option<usize>,
}

impl RunConfig {
    pub fn load(file: Option<&Path>, over: &Overrides) -> Result<RunConfig, String> {
        let mut cfg = match file {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
                let mut cfg: RunConfig = toml::from_str(&text)
                    .map_err(|e| format!("malformed config {}: {e}", p.display()))?;
                // files named by a config resolve relative to that config,
                // not to wherever the tool happens to run
                if let (Some(src), Some(dir)) = (&cfg.tree.source, p.parent()) {
                    if src.is_relative() {
                        cfg.tree.source = Some(dir.join(src));
                    }
                }
                cfg
            }
        };
        if let Some(seed) = over.seed {
            cfg.run.seed = Some(seed);
        }
        if let Some(paths) = over.paths {
            cfg.run.paths = paths;
        }
        if let Some(steps) = over.steps {
            cfg.run.steps = Some(steps);
        }
        Ok(cfg)
    }

    pub fn gbm(&self) -> Result<GbmSpec, maxplus::Error> {
        GbmSpec::new(self.model.r, self.model.sigma, self.model.x0)
    }

    pub fn bm(&self) -> Result<DriftedBmSpec, maxplus::Error> {
        DriftedBmSpec::new(self.model.mu, self.model.sigma, self.model.x0)
    }

    pub fn levy(&self) -> Result<LevySpec, maxplus::Error> {
        let mut jumps = Vec::new();
        for &[rate, theta] in &self.model.jumps_exponential {
            jumps.push(JumpComponent {
                rate,
                law: JumpLaw::NegExponential { theta },
            });
        }
        for &[rate, y] in &self.model.jumps_atom {
            jumps.push(JumpComponent {
                rate,
                law: JumpLaw::PointMass { y },
            });
        }
        LevySpec::with_martingale_drift(self.model.sigma, jumps, self.model.r, self.model.x0)
    }

    /// Seed for a stochastic run, or the config error the spec demands.
    pub fn require_seed(&self) -> Result<u64, String> {
        self.run
            .seed
            .ok_or_else(|| "seed is required for stochastic runs (--seed or run.seed)".into())
    }
}
