//! Optional JSON run configuration. Every field mirrors a command-line flag;
//! flags win when both are given.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use skewgame::elo::GMode;
use skewgame::evaluation::Method;
use skewgame::io::Format;
use skewgame::neural::{LearnConfig, Precision};
use skewgame::{Error, Result};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub input: Option<PathBuf>,
    pub method: Option<String>,

    pub kind: Option<String>,
    pub n: Option<usize>,
    pub power: Option<f64>,
    pub lambda: Option<f64>,
    pub transitive: Option<bool>,
    pub levels: Option<usize>,

    pub k: Option<usize>,
    pub m: Option<usize>,
    pub beta: Option<Beta>,
    pub fallback_beta: Option<f64>,

    pub mask_fraction: Option<f64>,
    pub methods: Option<Vec<Method>>,
    pub seeds: Option<Vec<u64>>,

    pub iterations: Option<usize>,
    pub precision: Option<Precision>,
    pub learn_transitive: Option<bool>,
    /// Full training settings; the individual fields above override it.
    pub learn: Option<LearnConfig>,

    pub steps: Option<usize>,
    pub simulations: Option<usize>,
    pub g: Option<GMode>,
    pub eta_scale: Option<f64>,
    pub eta_power: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            Error::Parse(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
        })
    }
}

/// `auto` or a positive number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Beta {
    Auto,
    Value(f64),
}

impl std::str::FromStr for Beta {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Beta::Auto);
        }
        s.parse::<f64>().map(Beta::Value).map_err(|_| format!("expected a number or \"auto\", got {s:?}"))
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Beta::Value(x)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}
