//! Versioned JSON configs: parsing with JSON-pointer error paths, seed override, hashing.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const CONFIG_VERSION: u64 = 1;

/// A parsed config with the effective seed applied and its hash.
pub struct Loaded<T> {
    pub config: T,
    pub hash: String,
}

pub trait Seeded {
    fn seed_mut(&mut self) -> &mut u64;

    /// Domain checks beyond the schema; errors carry a JSON pointer.
    fn check(&self) -> Result<(), (String, String)> {
        Ok(())
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

pub fn parse<T: DeserializeOwned + Serialize + Seeded>(text: &str, seed: Option<u64>) -> Result<Loaded<T>, CliError> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Config { pointer: "/".into(), message: e.to_string() })?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Config { pointer: "/".into(), message: "config must be a JSON object".into() })?;
    match obj.remove("version") {
        Some(v) if v.as_u64() == Some(CONFIG_VERSION) => {}
        Some(v) => {
            return Err(CliError::Config {
                pointer: "/version".into(),
                message: format!("unsupported version {v}, expected {CONFIG_VERSION}"),
            })
        }
        None => return Err(CliError::Config { pointer: "/version".into(), message: "missing version tag".into() }),
    }
    let mut config: T = serde_path_to_error::deserialize(value)
        .map_err(|e| CliError::Config { pointer: pointer(e.path()), message: e.inner().to_string() })?;
    if let Some(s) = seed {
        *config.seed_mut() = s;
    }
    config.check().map_err(|(pointer, message)| CliError::Config { pointer, message })?;
    let mut doc = serde_json::to_value(&config)?;
    if let Some(o) = doc.as_object_mut() {
        o.insert("version".into(), CONFIG_VERSION.into());
    }
    let hash = hex(&Sha256::digest(serde_json::to_vec(&doc)?));
    Ok(Loaded { config, hash })
}

pub fn load<T: DeserializeOwned + Serialize + Seeded>(path: &Path, seed: Option<u64>) -> Result<Loaded<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse(&text, seed)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `Err` at `/<field>/<index>` for the first element failing `ok`.
pub fn each<T>(field: &str, xs: &[T], ok: impl Fn(&T) -> bool, message: &str) -> Result<(), (String, String)> {
    match xs.iter().position(|x| !ok(x)) {
        Some(i) => Err((format!("/{field}/{i}"), message.into())),
        None => Ok(()),
    }
}

pub fn nonempty<T>(field: &str, xs: &[T]) -> Result<(), (String, String)> {
    if xs.is_empty() {
        Err((format!("/{field}"), "must not be empty".into()))
    } else {
        Ok(())
    }
}
