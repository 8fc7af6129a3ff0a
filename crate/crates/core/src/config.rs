//! Runtime configuration.
//!
//! A flat TOML key/value file. Unknown keys are rejected. A handful of
//! `DAM_*` environment variables override file values; see
//! [`Config::apply_env`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::belief::{EntropyBands, MAX_ENTROPY, MAX_STRENGTH};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Live,
}

impl std::str::FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mock" => Ok(ProviderKind::Mock),
            "live" => Ok(ProviderKind::Live),
            other => Err(Error::InvalidConfig(format!("unknown provider {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub tau_high: f64,
    pub tau_low: f64,
    pub discard_entropy: f64,
    pub strength_max: f64,
    pub top_k: usize,
    pub w_min: f64,
    pub persistence_n: u32,
    /// Reserved. Merging is decided by canonical key identity alone.
    pub integrate_similarity: f64,
    pub lambda: f64,
    pub embed_dim: usize,

    pub provider: ProviderKind,
    pub base_url: String,
    pub chat_model: String,
    pub embed_model: String,
    pub timeout_secs: u64,
    /// Extra attempts for structured calls whose output fails shape checks.
    pub structured_retries: u32,
    /// Extra attempts after a 429 before giving up.
    pub rate_limit_retries: u32,
    pub max_in_flight: usize,

    pub history_turns: usize,
    pub store_dir: PathBuf,
    pub prompts_dir: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,

    pub port: u16,
    pub queue_depth: usize,
    pub service_token: Option<String>,

    /// Secret; taken from `DAM_API_KEY`, never from the file's fingerprint.
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            tau_high: 1.4,
            tau_low: 0.8,
            discard_entropy: 1.4,
            strength_max: MAX_STRENGTH,
            top_k: 5,
            w_min: 1.0,
            persistence_n: 3,
            integrate_similarity: 0.9,
            lambda: 0.01,
            embed_dim: 256,
            provider: ProviderKind::Mock,
            base_url: "https://api.openai.com/v1".to_string(),
            chat_model: "gpt-4o-mini".to_string(),
            embed_model: "text-embedding-3-small".to_string(),
            timeout_secs: 60,
            structured_retries: 2,
            rate_limit_retries: 3,
            max_in_flight: 4,
            history_turns: 10,
            store_dir: PathBuf::from("."),
            prompts_dir: None,
            audit_log: None,
            port: 8377,
            queue_depth: 16,
            service_token: None,
            api_key: None,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Apply `DAM_*` overrides from the process environment.
    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_overrides(std::env::vars())
    }

    pub fn apply_overrides<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        for (k, v) in vars {
            let v: String = v.into();
            match k.as_ref() {
                "DAM_API_KEY" => self.api_key = Some(v),
                "DAM_BASE_URL" => self.base_url = v,
                "DAM_CHAT_MODEL" => self.chat_model = v,
                "DAM_EMBED_MODEL" => self.embed_model = v,
                "DAM_PROVIDER" => self.provider = v.parse()?,
                "DAM_STORE_DIR" => self.store_dir = PathBuf::from(v),
                "DAM_PORT" => self.port = v.parse().map_err(|_| Error::InvalidConfig(format!("DAM_PORT={v:?}")))?,
                "DAM_SERVICE_TOKEN" => self.service_token = Some(v),
                _ => {}
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0 <= self.tau_low && self.tau_low < self.tau_high && self.tau_high <= MAX_ENTROPY) {
            return bad(format!("need 0 <= tau_low < tau_high <= log2(3), got {} / {}", self.tau_low, self.tau_high));
        }
        if !(0.0..=MAX_ENTROPY).contains(&self.discard_entropy) {
            return bad(format!("discard_entropy {} out of range", self.discard_entropy));
        }
        if !(self.strength_max > 0.0 && self.strength_max <= MAX_STRENGTH) {
            return bad(format!("strength_max {} out of (0, 3]", self.strength_max));
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if !(self.w_min.is_finite() && self.w_min >= 0.0) {
            return bad(format!("w_min {} must be >= 0", self.w_min));
        }
        if !(-1.0..=1.0).contains(&self.integrate_similarity) {
            return bad("integrate_similarity must lie in [-1, 1]".into());
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be >= 0".into());
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be at least 1".into());
        }
        if self.max_in_flight == 0 || self.queue_depth == 0 {
            return bad("max_in_flight and queue_depth must be at least 1".into());
        }
        Ok(())
    }

    pub fn bands(&self) -> EntropyBands {
        EntropyBands { low: self.tau_low, high: self.tau_high }
    }

    /// Short stable hash of the settings that shape stored beliefs.
    pub fn fingerprint(&self) -> String {
        let material = format!(
            "tau_high={:?};tau_low={:?};discard={:?};smax={:?};w_min={:?};persist={};dim={}",
            self.tau_high,
            self.tau_low,
            self.discard_entropy,
            self.strength_max,
            self.w_min,
            self.persistence_n,
            self.embed_dim
        );
        let digest = Sha256::digest(material.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_table() {
        let c = Config::default();
        assert_eq!(c.tau_high, 1.4);
        assert_eq!(c.tau_low, 0.8);
        assert_eq!(c.discard_entropy, 1.4);
        assert_eq!(c.strength_max, 3.0);
        assert_eq!(c.top_k, 5);
        c.validate().unwrap();
    }

    #[test]
    fn parses_partial_file() {
        let c = Config::from_toml("top_k = 7\nprovider = \"live\"\n").unwrap();
        assert_eq!(c.top_k, 7);
        assert_eq!(c.provider, ProviderKind::Live);
        assert_eq!(c.tau_high, 1.4);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ordering() {
        assert!(Config::from_toml("tau_hihg = 1.2").is_err());
        assert!(Config::from_toml("tau_low = 1.5").is_err());
        assert!(Config::from_toml("tau_high = 2.0").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut c = Config::default();
        c.apply_overrides([
            ("DAM_API_KEY", "k"),
            ("DAM_BASE_URL", "http://x"),
            ("DAM_PROVIDER", "live"),
            ("OTHER", "y"),
        ])
        .unwrap();
        assert_eq!(c.api_key.as_deref(), Some("k"));
        assert_eq!(c.base_url, "http://x");
        assert_eq!(c.provider, ProviderKind::Live);
        assert!(c.apply_overrides([("DAM_PROVIDER", "cloud")]).is_err());
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = Config::default();
        assert_eq!(a.fingerprint(), Config::default().fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
        let b = Config { tau_high: 1.3, ..Config::default() };
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
