//! Run manifests: what went into a run and what came out of it.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Written once per output directory. `inputs` holds every input
/// re-serialized in its canonical text form, keyed by role (`config`,
/// `schedule`, `path_spec`, `options`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub inputs_sha256: String,
    pub wall_clock_s: f64,
    /// Simulated time summed over every simulation of the run [s].
    pub simulated_s: f64,
    pub outputs: Vec<String>,
    pub inputs: BTreeMap<String, String>,
}

/// SHA-256 over `(name, text)` pairs in name order, each name and text
/// prefixed by its byte length.
pub fn hash_inputs(inputs: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in inputs {
        h.update((k.len() as u64).to_le_bytes());
        h.update(k.as_bytes());
        h.update((v.len() as u64).to_le_bytes());
        h.update(v.as_bytes());
    }
    hex::encode(h.finalize())
}

impl RunManifest {
    pub fn new(command: &str, inputs: BTreeMap<String, String>) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs_sha256: hash_inputs(&inputs),
            wall_clock_s: 0.0,
            simulated_s: 0.0,
            outputs: Vec::new(),
            inputs,
        }
    }

    /// True when the recorded hash matches the recorded inputs.
    pub fn verify(&self) -> bool {
        hash_inputs(&self.inputs) == self.inputs_sha256
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_toml_string()).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> BTreeMap<String, String> {
        BTreeMap::from([
            ("config".to_string(), "[geometry]\nn_tails = 2\n".to_string()),
            (
                "schedule".to_string(),
                "t_switch_s,omega_rad_s\n0,1\n".to_string(),
            ),
        ])
    }

    #[test]
    fn hash_depends_on_every_input() {
        let a = hash_inputs(&inputs());
        assert_eq!(a.len(), 64);
        let mut b = inputs();
        b.get_mut("schedule").unwrap().push('\n');
        assert_ne!(a, hash_inputs(&b));
        // moving bytes between a name and its text changes the hash
        let c = BTreeMap::from([("ab".to_string(), "c".to_string())]);
        let d = BTreeMap::from([("a".to_string(), "bc".to_string())]);
        assert_ne!(hash_inputs(&c), hash_inputs(&d));
    }

    #[test]
    fn manifest_round_trips() {
        let mut m = RunManifest::new("simulate", inputs());
        m.outputs = vec!["trajectory.csv".into()];
        m.wall_clock_s = 1.5;
        m.simulated_s = 10.0;
        let back = RunManifest::from_toml_str(&m.to_toml_string()).unwrap();
        assert_eq!(back, m);
        assert!(back.verify());
        let mut tampered = back;
        tampered.inputs.insert("config".into(), String::new());
        assert!(!tampered.verify());
    }
}
