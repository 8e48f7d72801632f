//! Strict JSON configuration loading.
//!
//! Every field has a default (see `NetworkConfig::default` and
//! `SceneSpec::default`), so `{}` is a valid document; unknown keys and type
//! mismatches are errors.

use std::path::Path;

use hpc_core::network::NetworkConfig;
use hpc_core::scene::SceneSpec;
use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub trait Validate {
    fn check(&self) -> hpc_core::Result<()>;
}

impl Validate for NetworkConfig {
    fn check(&self) -> hpc_core::Result<()> {
        self.validate()
    }
}

impl Validate for SceneSpec {
    fn check(&self) -> hpc_core::Result<()> {
        self.validate()
    }
}

pub fn parse_config<T: DeserializeOwned + Validate>(text: &str, path: &Path) -> Result<T> {
    let config_err = |message: String| Error::Config {
        path: path.to_path_buf(),
        message,
    };
    let value: T = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
    value.check().map_err(|e| config_err(e.to_string()))?;
    Ok(value)
}

pub fn load_config<T: DeserializeOwned + Validate>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("configs serialize") + "\n"
}
