//! Optional TOML config file. Command-line flags override it; anything
//! missing from both falls back to built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use pivotmatch::SearchConfig;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub gateway: GatewaySection,
    #[serde(default)]
    pub embedder: EmbedderSection,
    #[serde(default)]
    pub paths: PathsSection,
}

/// Same keys as [`SearchConfig`], all optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub epsilon_random: Option<f64>,
    pub uct_constant: Option<f64>,
    pub uct_epsilon: Option<f64>,
    pub max_children: Option<usize>,
    pub iterations: Option<usize>,
    pub workers: Option<usize>,
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<usize>,
    pub mock: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderSection {
    pub kind: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub source_desc: Option<PathBuf>,
    pub target_desc: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub result: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn search_defaults(&self) -> SearchConfig {
        let d = SearchConfig::default();
        let s = &self.search;
        SearchConfig {
            epsilon_random: s.epsilon_random.unwrap_or(d.epsilon_random),
            uct_constant: s.uct_constant.unwrap_or(d.uct_constant),
            uct_epsilon: s.uct_epsilon.unwrap_or(d.uct_epsilon),
            max_children: s.max_children.unwrap_or(d.max_children),
            iterations: s.iterations.unwrap_or(d.iterations),
            workers: s.workers.unwrap_or(d.workers),
            rng_seed: s.rng_seed.unwrap_or(d.rng_seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: FileConfig = toml::from_str("[search]\niterations = 7\n[paths]\nsource = \"a.csv\"\n").unwrap();
        let s = c.search_defaults();
        assert_eq!(s.iterations, 7);
        assert_eq!(s.workers, SearchConfig::default().workers);
        assert_eq!(c.paths.source.as_deref(), Some(Path::new("a.csv")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[search]\niteratons = 7\n").is_err());
    }
}
