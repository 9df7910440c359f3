//! Run manifests. Every command writes exactly one, recording the resolved
//! configuration, the files it read and wrote, and the checkpoint it
//! produced or consumed. A manifest plus the referenced inputs is enough to
//! re-run the command deterministically in fixture mode; the timestamps are
//! the one field that varies between otherwise identical runs, which is why
//! determinism checks compare every output except the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sdgmap_core::Result;
use serde::Serialize;

use crate::settings::Settings;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub seed: u64,
    pub provider_mode: String,
    /// Content hash of the checkpoint this run wrote or loaded.
    pub checkpoint_id: Option<String>,
    /// Role -> path for everything read.
    pub inputs: BTreeMap<String, String>,
    /// Role -> path for everything written (the manifest itself excluded).
    pub outputs: BTreeMap<String, String>,
    /// Anything the operator should know that is not an error: skipped
    /// records, filtered counts, fallback choices.
    pub notes: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
    pub settings: Settings,
}

impl RunManifest {
    pub fn new(subcommand: &str, settings: &Settings) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            seed: settings.train.seed,
            provider_mode: match settings.provider.mode {
                sdgmap_core::llm::ProviderMode::Live => "live".into(),
                sdgmap_core::llm::ProviderMode::Fixture => "fixture".into(),
            },
            checkpoint_id: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            notes: Vec::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: String::new(),
            settings: settings.clone(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) {
        self.inputs.insert(role.to_string(), path.display().to_string());
    }

    pub fn output(&mut self, role: &str, path: &Path) {
        self.outputs.insert(role.to_string(), path.display().to_string());
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Stamp the finish time and write `manifest.json` into the run's
    /// output directory.
    pub fn finish(mut self, out_dir: &Path) -> Result<PathBuf> {
        self.finished_at = chrono::Utc::now().to_rfc3339();
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&self)?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_the_essentials() {
        let settings = Settings::default();
        let mut m = RunManifest::new("train", &settings);
        m.input("records", Path::new("data/records.jsonl"));
        m.output("checkpoint", Path::new("out/model.json"));
        m.checkpoint_id = Some("abc123".into());
        m.note("2 records skipped");

        let dir = tempfile::tempdir().unwrap();
        let path = m.finish(dir.path()).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["subcommand"], "train");
        assert_eq!(v["checkpoint_id"], "abc123");
        assert_eq!(v["inputs"]["records"], "data/records.jsonl");
        assert_eq!(v["outputs"]["checkpoint"], "out/model.json");
        assert_eq!(v["notes"][0], "2 records skipped");
        assert_eq!(v["provider_mode"], "fixture");
        // The resolved snapshot rides along in full.
        assert_eq!(v["settings"]["train"]["epochs"], 100);
        assert!(v["finished_at"].as_str().unwrap().len() >= 20);
    }
}
