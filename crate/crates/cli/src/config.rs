//! Flat TOML configuration layered under command-line flags.
//!
//! Every key is optional. A flag wins over the file, and the file wins over
//! the built-in default. Credentials are never read from here.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub policy: Option<String>,
    pub param: Option<f64>,
    pub max_samples: Option<u64>,
    pub solver: Option<String>,
    pub dataset: Option<PathBuf>,
    pub pools: Option<PathBuf>,
    pub replay_mode: Option<String>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub parallel_questions: Option<usize>,
    pub max_in_flight: Option<usize>,
    pub trials: Option<u64>,
    pub family: Option<String>,
    pub grid: Option<String>,
    pub synthetic_pools: Option<usize>,
    pub baseline: Option<String>,
    pub completion_only: Option<bool>,
    pub mock_gold_prob: Option<f64>,
    pub mock_prompt_tokens: Option<u64>,
    pub mock_completion_tokens: Option<u64>,
    pub base_url: Option<String>,
    pub api_path: Option<String>,
    pub model: Option<String>,
    pub reasoning_effort: Option<String>,
    pub reasoning_effort_field: Option<String>,
    pub temperature: Option<f64>,
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_attempts: Option<u32>,
}

const SECRET_KEYS: [&str; 4] = ["api_key", "apikey", "token", "secret"];

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        for key in table.keys() {
            if SECRET_KEYS.contains(&key.as_str()) {
                bail!(
                    "'{key}' is not accepted in config files; put the credential in the \
                     environment variable named by api_key_env"
                );
            }
            if table[key].is_table() {
                bail!("config files are flat; '{key}' must not be a section");
            }
        }
        Ok(toml::Value::Table(table).try_into()?)
    }
}

/// `flag`, else `file`, else `default`.
pub fn layer<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let c = FileConfig::parse("seed = 7\npolicy = \"msprt\"\nparam = 0.9499\n").unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.policy.as_deref(), Some("msprt"));
    }

    #[test]
    fn rejects_secrets_sections_and_unknown_keys() {
        assert!(FileConfig::parse("api_key = \"sk-123\"").is_err());
        assert!(FileConfig::parse("[run]\nseed = 1").is_err());
        assert!(FileConfig::parse("sed = 1").is_err());
    }

    #[test]
    fn flag_beats_file_beats_default() {
        assert_eq!(layer(Some(1), Some(2), 3), 1);
        assert_eq!(layer(None, Some(2), 3), 2);
        assert_eq!(layer(None, None, 3), 3);
    }
}
