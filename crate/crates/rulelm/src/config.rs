//! Pipeline configuration: a TOML file whose sections mirror the pipeline
//! stages. Every key has a default, and relative paths resolve against the
//! config file's directory.
//!
//! ```toml
//! jobs = 4
//!
//! [paths]
//! kg = "kg.tsv"            # full graph, the test graph of the split
//! train = "train.tsv"      # optional pre-split train graph; disables [split]
//! labels = "labels.tsv"
//! templates = "templates.tsv"
//! out_dir = "out"
//!
//! [split]
//! ratio = 0.2
//! seed = 42
//!
//! [mining]
//! min_support = 10
//! min_std_conf = 0.1
//! min_head_coverage = 0.01
//! allow_head_in_body = true
//!
//! [scorer]
//! endpoint = "fixture:lm_fixture.tsv"   # or http://host:port
//! top_n = 10
//!
//! [hybrid]
//! lambda_grid = [0.0, 0.5, 1.0]
//! k_grid = [5, 10]
//! mu1_kinds = ["standard_confidence", "pca_confidence"]
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use rulelm_core::kg::SplitSpec;
use rulelm_core::ranking::{HybridConfig, Mu1Kind};
use rulelm_core::rules::MiningConfig;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scorer::{BatchOptions, Endpoint};

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub kg: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { ratio: 0.2, seed: 42 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MiningSection {
    pub min_support: u64,
    pub min_std_conf: f64,
    pub min_head_coverage: f64,
    pub allow_head_in_body: bool,
}

impl Default for MiningSection {
    fn default() -> Self {
        let d = MiningConfig::default();
        Self {
            min_support: d.min_support,
            min_std_conf: d.min_std_conf,
            min_head_coverage: d.min_head_coverage,
            allow_head_in_body: d.allow_head_in_body,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    pub endpoint: Option<String>,
    pub top_n: usize,
    pub batch_size: usize,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub retry_backoff_ms: u64,
    /// Batches kept in flight; defaults to `jobs`.
    pub in_flight: Option<usize>,
    pub max_predictions_per_rule: Option<usize>,
    /// Seed for capping predictions per rule; defaults to the split seed.
    pub sample_seed: Option<u64>,
    /// Drop predictions whose relation has no template instead of failing.
    pub skip_missing_templates: bool,
    /// Leave unmappable targets out of the mean instead of counting them as 0.
    pub exclude_unmappable: bool,
}

impl Default for ScorerSection {
    fn default() -> Self {
        Self {
            endpoint: None,
            top_n: 10,
            batch_size: 64,
            timeout_secs: 30,
            max_attempts: 3,
            retry_backoff_ms: 200,
            in_flight: None,
            max_predictions_per_rule: None,
            sample_seed: None,
            skip_missing_templates: false,
            exclude_unmappable: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct HybridSection {
    pub lambda_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub mu1_kinds: Vec<String>,
}

impl Default for HybridSection {
    fn default() -> Self {
        let d = HybridConfig::default();
        Self {
            lambda_grid: d.lambda_grid,
            k_grid: d.k_grid,
            mu1_kinds: Mu1Kind::ALL.iter().map(|k| k.as_str().to_string()).collect(),
        }
    }
}

/// Everything the pipeline needs, as read from TOML.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub jobs: Option<usize>,
    pub paths: PathsSection,
    pub split: SplitSection,
    pub mining: MiningSection,
    pub scorer: ScorerSection,
    pub hybrid: HybridSection,
}

/// Command-line overrides; `None` leaves the file value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub jobs: Option<usize>,
    pub kg: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub split_ratio: Option<f64>,
    pub min_support: Option<u64>,
    pub min_std_conf: Option<f64>,
    pub min_head_coverage: Option<f64>,
    pub scorer: Option<String>,
    pub top_n: Option<usize>,
    pub batch_size: Option<usize>,
    pub lambda: Option<Vec<f64>>,
    pub k: Option<Vec<usize>>,
    pub mu1: Option<Vec<String>>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    /// Parses TOML text; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.resolve_paths(base);
        Ok(config)
    }

    /// Reads a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [&mut p.kg, &mut p.train, &mut p.labels, &mut p.templates, &mut p.out_dir] {
            resolve(base, path);
        }
        if let Some(spec) = &self.scorer.endpoint {
            if let Some(rel) = spec.strip_prefix("fixture:") {
                let rel = Path::new(rel);
                if rel.is_relative() {
                    self.scorer.endpoint = Some(format!("fixture:{}", base.join(rel).display()));
                }
            }
        }
    }

    /// Applies command-line overrides. Paths given on the command line are
    /// taken as-is, relative to the working directory.
    pub fn apply(&mut self, o: Overrides) {
        fn set<T>(slot: &mut T, value: Option<T>) {
            if let Some(v) = value {
                *slot = v;
            }
        }
        if o.jobs.is_some() {
            self.jobs = o.jobs;
        }
        for (slot, value) in [
            (&mut self.paths.kg, o.kg),
            (&mut self.paths.train, o.train),
            (&mut self.paths.labels, o.labels),
            (&mut self.paths.templates, o.templates),
            (&mut self.paths.out_dir, o.out_dir),
        ] {
            if value.is_some() {
                *slot = value;
            }
        }
        set(&mut self.split.seed, o.seed);
        set(&mut self.split.ratio, o.split_ratio);
        set(&mut self.mining.min_support, o.min_support);
        set(&mut self.mining.min_std_conf, o.min_std_conf);
        set(&mut self.mining.min_head_coverage, o.min_head_coverage);
        if o.scorer.is_some() {
            self.scorer.endpoint = o.scorer;
        }
        set(&mut self.scorer.top_n, o.top_n);
        set(&mut self.scorer.batch_size, o.batch_size);
        set(&mut self.hybrid.lambda_grid, o.lambda);
        set(&mut self.hybrid.k_grid, o.k);
        set(&mut self.hybrid.mu1_kinds, o.mu1);
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        Ok(SplitSpec::new(self.split.ratio, self.split.seed)?)
    }

    pub fn mining_config(&self) -> Result<MiningConfig> {
        let m = &self.mining;
        let config = MiningConfig {
            min_support: m.min_support,
            min_std_conf: m.min_std_conf,
            min_head_coverage: m.min_head_coverage,
            allow_head_in_body: m.allow_head_in_body,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn hybrid_config(&self) -> Result<HybridConfig> {
        let config = HybridConfig { lambda_grid: self.hybrid.lambda_grid.clone(), k_grid: self.hybrid.k_grid.clone() };
        config.validate()?;
        Ok(config)
    }

    pub fn mu1_kinds(&self) -> Result<Vec<Mu1Kind>> {
        if self.hybrid.mu1_kinds.is_empty() {
            return Err(Error::Config("mu1_kinds must not be empty".into()));
        }
        self.hybrid.mu1_kinds.iter().map(|k| k.parse().map_err(Error::Config)).collect()
    }

    /// Worker count: `jobs`, else the number of available processors.
    pub fn jobs(&self) -> usize {
        self.jobs
            .filter(|&j| j > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn endpoint(&self) -> Result<Endpoint> {
        let spec = self.scorer.endpoint.as_deref().ok_or_else(|| Error::Config("scorer.endpoint is not set".into()))?;
        Endpoint::parse(spec)
    }

    pub fn batch_options(&self) -> Result<BatchOptions> {
        let s = &self.scorer;
        if s.top_n == 0 || s.batch_size == 0 {
            return Err(Error::Config("scorer.top_n and scorer.batch_size must be at least 1".into()));
        }
        Ok(BatchOptions {
            top_n: s.top_n,
            batch_size: s.batch_size,
            max_attempts: s.max_attempts.max(1),
            retry_backoff: Duration::from_millis(s.retry_backoff_ms),
            in_flight: s.in_flight.unwrap_or_else(|| self.jobs()),
        })
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.scorer.timeout_secs)
    }

    pub fn sample_seed(&self) -> u64 {
        self.scorer.sample_seed.unwrap_or(self.split.seed)
    }

    fn required(&self, path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        let path = path.clone().ok_or_else(|| Error::Config(format!("paths.{key} is not set")))?;
        if !path.is_file() {
            return Err(Error::Config(format!("paths.{key}: {} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn kg_path(&self) -> Result<PathBuf> {
        self.required(&self.paths.kg, "kg")
    }

    pub fn templates_path(&self) -> Result<PathBuf> {
        self.required(&self.paths.templates, "templates")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Checks everything the graph stages need before any work starts.
    pub fn validate_graph_inputs(&self) -> Result<()> {
        self.kg_path()?;
        if self.paths.train.is_some() {
            self.required(&self.paths.train, "train")?;
        }
        if self.paths.labels.is_some() {
            self.required(&self.paths.labels, "labels")?;
        }
        self.split_spec()?;
        self.mining_config()?;
        Ok(())
    }

    /// Checks the scoring inputs on top of [`Self::validate_graph_inputs`].
    pub fn validate_scoring_inputs(&self) -> Result<()> {
        self.validate_graph_inputs()?;
        self.templates_path()?;
        if let Endpoint::Fixture(path) = self.endpoint()? {
            if !path.is_file() {
                return Err(Error::Config(format!("scorer fixture {} does not exist", path.display())));
            }
        }
        self.batch_options()?;
        Ok(())
    }

    /// Checks the sweep settings on top of [`Self::validate_graph_inputs`].
    pub fn validate_sweep_inputs(&self) -> Result<()> {
        self.validate_graph_inputs()?;
        self.hybrid_config()?;
        self.mu1_kinds()?;
        Ok(())
    }
}
