use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use compsim_core::classify::FitOptions;
use compsim_core::cluster::SweepConfig;
use compsim_core::corpus::GicsLevel;
use compsim_core::embed::{Pooling, RemoteConfig};
use compsim_core::textprep::ChunkingConfig;

/// Everything one pipeline run depends on. Relative paths resolve against
/// the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusPaths,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub chunking: ChunkingConfig,
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub similarity: SimilarityConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub attribution: AttributionConfig,
    #[serde(default)]
    pub project: ProjectConfig,
    #[serde(default)]
    pub pairs_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub path: PathBuf,
    pub hierarchy: PathBuf,
    #[serde(default)]
    pub returns: Option<PathBuf>,
    #[serde(default = "default_min_item1")]
    pub min_item1_chars: usize,
}

fn default_min_item1() -> usize {
    compsim_core::corpus::DEFAULT_MIN_ITEM1_CHARS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProviderConfig {
    Tfidf {
        #[serde(default = "default_max_features")]
        max_features: usize,
        /// Random projection to this many dimensions; none keeps the full vocabulary.
        #[serde(default)]
        projection_dim: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    HashBow {
        dimension: usize,
        #[serde(default)]
        seed: u64,
    },
    Remote {
        provider_id: String,
        dimension: usize,
        remote: RemoteConfig,
    },
}

fn default_max_features() -> usize {
    4096
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Tfidf { max_features: default_max_features(), projection_dim: None, seed: 0 }
    }
}

impl ProviderConfig {
    pub fn seed(&self) -> Option<u64> {
        match self {
            ProviderConfig::Tfidf { seed, .. } | ProviderConfig::HashBow { seed, .. } => Some(*seed),
            ProviderConfig::Remote { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub seed: u64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { seed: 0, test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub levels: Vec<GicsLevel>,
    pub fit: FitOptions,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self { levels: vec![GicsLevel::Sector, GicsLevel::Industry], fit: FitOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilarityConfig {
    pub k: Vec<usize>,
    pub years: Vec<i32>,
    pub min_overlap: usize,
    /// GICS levels scored with dynamic k.
    pub baselines: Vec<GicsLevel>,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            k: vec![1, 5, 10],
            years: vec![2019, 2020, 2021, 2022],
            min_overlap: compsim_core::similarity::DEFAULT_MIN_OVERLAP,
            baselines: vec![GicsLevel::Sector, GicsLevel::Industry],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub sweep: SweepConfig,
    /// Reference labels for homogeneity and completeness.
    pub label_level: GicsLevel,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { sweep: SweepConfig::default(), label_level: GicsLevel::Sector }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributionConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub min_month_obs: usize,
    /// Per-month quantile clamp `[lower, upper]`; off by default.
    pub winsorize: Option<(f64, f64)>,
    /// GICS levels used as baseline clusterings.
    pub baselines: Vec<GicsLevel>,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2023, 5, 31).expect("valid date"),
            min_month_obs: compsim_core::attribution::DEFAULT_MIN_MONTH_OBS,
            winsorize: None,
            baselines: vec![GicsLevel::Sector, GicsLevel::Industry],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectConfig {
    pub method: compsim_core::cluster::ReductionMethod,
    pub seed: u64,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self { method: compsim_core::cluster::ReductionMethod::Pca, seed: 0 }
    }
}

/// Loads a config, applies `key.path=value` overrides and resolves paths.
/// Override values are parsed as JSON, falling back to a plain string.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let (mut value, base) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            let v: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
            (v, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (serde_json::json!({}), PathBuf::new()),
    };
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let mut config: RunConfig = serde_json::from_value(value).context("invalid config")?;
    config.resolve(&base);
    config.validate()?;
    Ok(config)
}

fn apply_override(root: &mut serde_json::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| anyhow!("override {spec:?} is not key=value"))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            bail!("override key {key:?} has an empty segment");
        }
        let obj = match node {
            serde_json::Value::Object(m) => m,
            serde_json::Value::Null => {
                *node = serde_json::Value::Object(Default::default());
                node.as_object_mut().expect("just set")
            }
            _ => bail!("override key {key:?}: {part:?} is inside a non-object value"),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(serde_json::Value::Null);
    }
    Ok(())
}

impl RunConfig {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.path);
        fix(&mut self.corpus.hierarchy);
        if let Some(r) = &mut self.corpus.returns {
            fix(r);
        }
        fix(&mut self.output_dir);
    }

    fn validate(&self) -> Result<()> {
        self.chunking.validate().map_err(|e| anyhow!("chunking: {e}"))?;
        if !(0.0 < self.split.test_fraction && self.split.test_fraction < 1.0) {
            bail!("split.test_fraction must be in (0, 1)");
        }
        if self.similarity.k.contains(&0) {
            bail!("similarity.k values must be positive");
        }
        if self.attribution.start > self.attribution.end {
            bail!("attribution.start is after attribution.end");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Header lines for every report: config hash and all seeds.
    pub fn report_header(&self) -> String {
        let provider_seed = self.provider.seed().map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# config_hash={}\n# seeds split={} provider={} classifier={} cluster={} project={} pairs={}\n",
            self.hash(),
            self.split.seed,
            provider_seed,
            self.classify.fit.seed,
            self.cluster.sweep.seed,
            self.project.seed,
            self.pairs_seed
        )
    }
}
