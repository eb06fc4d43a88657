//! Flat `key=value` configuration with `#` comments. Command-line flags
//! take precedence over file values.

use std::path::Path;

use vfhe_core::backend::BackendId;
use vfhe_core::checksum::{CheckMode, HashMode, HashOptions};
use vfhe_core::params::{PlainParams, DEFAULT_ERROR_MODULUS, DEFAULT_ERROR_R, DEFAULT_PLAIN_MODULUS, DEFAULT_SCALE};

use crate::Failure;

pub const KEYS: [&str; 9] = ["t", "mode", "backend", "host", "port", "seed", "hash_mode", "error_r", "output"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CliConfig {
    pub t: Option<u64>,
    pub mode: Option<CheckMode>,
    pub backend: Option<BackendId>,
    pub host: Option<String>,
    pub port: Option<u16>,
    pub seed: Option<u64>,
    pub hash_mode: Option<HashMode>,
    pub error_r: Option<u64>,
    pub output: Option<String>,
}

fn usage(msg: String) -> Failure {
    Failure::Usage(msg)
}

pub fn parse_hash_mode(s: &str) -> Result<HashMode, String> {
    match s {
        "uniform" => Ok(HashMode::Uniform),
        "pow2" => Ok(HashMode::Pow2),
        other => Err(format!("unknown hash mode {other:?} (expected uniform or pow2)")),
    }
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let mut cfg = CliConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key=value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| usage(format!("config line {}: {key}: {e}", n + 1));
            match key {
                "t" => cfg.t = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "mode" => cfg.mode = Some(value.parse().map_err(|e: vfhe_core::Error| bad(e.to_string()))?),
                "backend" => cfg.backend = Some(value.parse().map_err(|e: vfhe_core::Error| bad(e.to_string()))?),
                "host" => cfg.host = Some(value.to_string()),
                "port" => cfg.port = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "seed" => cfg.seed = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "hash_mode" => cfg.hash_mode = Some(parse_hash_mode(value).map_err(bad)?),
                "error_r" => cfg.error_r = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "output" => cfg.output = Some(value.to_string()),
                other => {
                    return Err(usage(format!(
                        "config line {}: unknown key {other:?} (known: {})",
                        n + 1,
                        KEYS.join(", ")
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        CliConfig::parse(&text)
    }

    /// `other` wins wherever it is set.
    pub fn overlay(self, other: CliConfig) -> CliConfig {
        CliConfig {
            t: other.t.or(self.t),
            mode: other.mode.or(self.mode),
            backend: other.backend.or(self.backend),
            host: other.host.or(self.host),
            port: other.port.or(self.port),
            seed: other.seed.or(self.seed),
            hash_mode: other.hash_mode.or(self.hash_mode),
            error_r: other.error_r.or(self.error_r),
            output: other.output.or(self.output),
        }
    }

    pub fn mode(&self) -> CheckMode {
        self.mode.unwrap_or_default()
    }

    pub fn backend(&self) -> BackendId {
        self.backend.unwrap_or(BackendId::EXACT)
    }

    pub fn hash(&self) -> HashOptions {
        HashOptions {
            mode: self.hash_mode.unwrap_or_default(),
            nonzero: false,
        }
    }

    pub fn error_r(&self) -> u64 {
        self.error_r.unwrap_or(DEFAULT_ERROR_R)
    }

    /// Error-augmented checks default to a power-of-two modulus so the
    /// default `r` divides it.
    pub fn params(&self) -> Result<PlainParams, Failure> {
        let p = if self.backend() == BackendId::APPROXIMATE {
            PlainParams::approximate(DEFAULT_SCALE)
        } else {
            let default_t = if self.mode() == CheckMode::WithError {
                DEFAULT_ERROR_MODULUS
            } else {
                DEFAULT_PLAIN_MODULUS
            };
            PlainParams::exact(self.t.unwrap_or(default_t))
        };
        p.map_err(|e| usage(e.to_string()))
    }

    pub fn host(&self) -> &str {
        self.host.as_deref().unwrap_or("127.0.0.1")
    }

    pub fn port(&self) -> u16 {
        self.port.unwrap_or(vfhe_server::DEFAULT_PORT)
    }
}
