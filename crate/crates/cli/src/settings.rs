//! Resolved run configuration. Precedence is fixed: built-in defaults,
//! then the TOML config file, then command-line flags. The winner of every
//! field is serialized into the run manifest so a reported number can be
//! traced back to the exact knobs that produced it.

use std::path::{Path, PathBuf};

use sdgmap_core::llm::{ProviderConfig, ProviderMode};
use sdgmap_core::model::ModelConfig;
use sdgmap_core::trainer::TrainConfig;
use sdgmap_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a command run depends on, after all three layers merged.
#[derive(Clone, Debug, Serialize)]
pub struct Settings {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub provider: ProviderConfig,
    /// Weight-initialization seed, separate from the sampling seed so the
    /// same init can be trained under different shuffles.
    pub init_seed: u64,
    pub ablation: String,
    /// Country codebook JSON; the embedded table when absent.
    pub codebook: Option<PathBuf>,
    /// Goal definition JSON; the embedded definitions when absent.
    pub goals: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            provider: ProviderConfig::default(),
            init_seed: 1,
            ablation: "full".into(),
            codebook: None,
            goals: None,
            out: PathBuf::from("out"),
        }
    }
}

/// `[model]` section: only the knobs a config file may override.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelSection {
    d_h: Option<usize>,
    max_tokens: Option<usize>,
    max_words: Option<usize>,
    num_blocks: Option<usize>,
    ffn_hidden: Option<usize>,
    weighted_sum_pool: Option<bool>,
    layer_norm_decision_inputs: Option<bool>,
}

/// `[provider]` section. There is deliberately no field for the credential
/// itself: `api_key_env` names an environment variable and the key never
/// touches a config file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ProviderSection {
    provider_id: Option<String>,
    mode: Option<String>,
    endpoint: Option<String>,
    model: Option<String>,
    top_p: Option<f64>,
    temperature: Option<f64>,
    api_key_env: Option<String>,
    max_retries: Option<u32>,
    initial_backoff_ms: Option<u64>,
    max_in_flight: Option<usize>,
    fixture_path: Option<PathBuf>,
}

/// The config file as written. Every field is optional; `[train]` reuses
/// the canonical config type, whose own defaults fill whatever the file
/// leaves out.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    train: Option<TrainConfig>,
    model: Option<ModelSection>,
    provider: Option<ProviderSection>,
    init_seed: Option<u64>,
    ablation: Option<String>,
    codebook: Option<PathBuf>,
    goals: Option<PathBuf>,
    out: Option<PathBuf>,
}

pub fn parse_provider_mode(s: &str) -> Result<ProviderMode> {
    match s {
        "live" => Ok(ProviderMode::Live),
        "fixture" => Ok(ProviderMode::Fixture),
        other => Err(Error::Config(format!(
            "unknown provider mode '{other}' (expected live or fixture)"
        ))),
    }
}

impl Settings {
    /// Defaults overlaid with the config file, when one was given.
    pub fn from_file(path: Option<&Path>) -> Result<Self> {
        let mut settings = Settings::default();
        let Some(path) = path else { return Ok(settings) };
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("config file {}: {e}", path.display()),
            ))
        })?;
        let file: FileConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;

        if let Some(train) = file.train {
            settings.train = train;
        }
        if let Some(m) = file.model {
            let enc = &mut settings.model.encoder;
            if let Some(v) = m.d_h {
                enc.d_h = v;
            }
            if let Some(v) = m.max_tokens {
                enc.max_tokens = v;
            }
            if let Some(v) = m.max_words {
                enc.max_words = v;
            }
            if let Some(v) = m.num_blocks {
                enc.num_blocks = v;
            }
            if let Some(v) = m.ffn_hidden {
                enc.ffn_hidden = v;
            }
            if let Some(v) = m.weighted_sum_pool {
                settings.model.weighted_sum_pool = v;
            }
            if let Some(v) = m.layer_norm_decision_inputs {
                settings.model.layer_norm_decision_inputs = v;
            }
        }
        if let Some(p) = file.provider {
            let prov = &mut settings.provider;
            if let Some(v) = p.provider_id {
                prov.provider_id = v;
            }
            if let Some(v) = p.mode {
                prov.mode = parse_provider_mode(&v)?;
            }
            if let Some(v) = p.endpoint {
                prov.endpoint = v;
            }
            if let Some(v) = p.model {
                prov.model = v;
            }
            if let Some(v) = p.top_p {
                prov.top_p = v;
            }
            if let Some(v) = p.temperature {
                prov.temperature = v;
            }
            if let Some(v) = p.api_key_env {
                prov.api_key_env = v;
            }
            if let Some(v) = p.max_retries {
                prov.max_retries = v;
            }
            if let Some(v) = p.initial_backoff_ms {
                prov.initial_backoff_ms = v;
            }
            if let Some(v) = p.max_in_flight {
                prov.max_in_flight = v;
            }
            if let Some(v) = p.fixture_path {
                prov.fixture_path = Some(v);
            }
        }
        if let Some(v) = file.init_seed {
            settings.init_seed = v;
        }
        if let Some(v) = file.ablation {
            settings.ablation = v;
        }
        if let Some(v) = file.codebook {
            settings.codebook = Some(v);
        }
        if let Some(v) = file.goals {
            settings.goals = Some(v);
        }
        if let Some(v) = file.out {
            settings.out = v;
        }
        Ok(settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn missing_file_argument_keeps_defaults() {
        let s = Settings::from_file(None).unwrap();
        assert_eq!(s.train, TrainConfig::default());
        assert_eq!(s.ablation, "full");
        assert_eq!(s.out, PathBuf::from("out"));
    }

    #[test]
    fn partial_train_section_fills_the_rest_from_defaults() {
        let (_dir, path) = write_config("[train]\nepochs = 3\nlearning_rate = 0.001\n");
        let s = Settings::from_file(Some(&path)).unwrap();
        assert_eq!(s.train.epochs, 3);
        assert_eq!(s.train.learning_rate, 0.001);
        assert_eq!(s.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(s.train.lambda_1, TrainConfig::default().lambda_1);
    }

    #[test]
    fn model_and_provider_sections_override_in_place() {
        let (_dir, path) = write_config(
            "[model]\nd_h = 16\nnum_blocks = 2\n\n\
             [provider]\nprovider_id = \"demo\"\nmode = \"fixture\"\nfixture_path = \"store.jsonl\"\n",
        );
        let s = Settings::from_file(Some(&path)).unwrap();
        assert_eq!(s.model.encoder.d_h, 16);
        assert_eq!(s.model.encoder.num_blocks, 2);
        assert_eq!(s.model.encoder.max_tokens, ModelConfig::default().encoder.max_tokens);
        assert_eq!(s.provider.provider_id, "demo");
        assert_eq!(s.provider.fixture_path, Some(PathBuf::from("store.jsonl")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let (_dir, path) = write_config("[train]\nepochz = 3\n");
        match Settings::from_file(Some(&path)) {
            Err(Error::Config(msg)) => assert!(msg.contains("epochz"), "{msg}"),
            other => panic!("expected config error, got {:?}", other.map(|_| ())),
        }
        let (_dir2, path2) = write_config("no_such_key = 1\n");
        assert!(matches!(Settings::from_file(Some(&path2)), Err(Error::Config(_))));
    }

    #[test]
    fn bad_provider_mode_is_a_config_error() {
        let (_dir, path) = write_config("[provider]\nmode = \"offline\"\n");
        match Settings::from_file(Some(&path)) {
            Err(Error::Config(msg)) => assert!(msg.contains("offline"), "{msg}"),
            other => panic!("expected config error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn config_file_never_carries_a_credential_field() {
        // The provider section has no slot for a key; an attempt to put one
        // in the file is an unknown-field error, not a silent acceptance.
        let (_dir, path) = write_config("[provider]\napi_key = \"sk-123\"\n");
        assert!(matches!(Settings::from_file(Some(&path)), Err(Error::Config(_))));
    }

    #[test]
    fn missing_config_file_reports_the_path() {
        let err = Settings::from_file(Some(Path::new("/no/such/config.toml"))).unwrap_err();
        match err {
            Error::Io(e) => assert!(e.to_string().contains("/no/such/config.toml"), "{e}"),
            other => panic!("expected io error, got {other:?}"),
        }
    }
}
