//! Run configuration: one JSON file covering preprocessing, architecture,
//! training, occlusion and paths. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use attriblab::attribution::{Method, OcclusionConfig};
use attriblab::preprocess::PreprocessConfig;
use attriblab::train::TrainConfig;
use attriblab::zoo::{ArchId, ArchSpec};

use crate::CliError;

/// Environment variable that overrides the config-file seed. An explicit
/// `--seed` flag outranks both.
pub const SEED_ENV: &str = "ATTRIBLAB_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSection {
    pub arch: ArchId,
    pub input_side: usize,
    /// Channel widths; architecture defaults when omitted.
    pub widths: Option<Vec<usize>>,
}

impl Default for ArchSection {
    fn default() -> Self {
        ArchSection {
            arch: ArchId::PlainCnn,
            input_side: 64,
            widths: None,
        }
    }
}

impl ArchSection {
    pub fn to_spec(&self, num_classes: usize) -> ArchSpec {
        let mut spec = ArchSpec::new(self.arch, self.input_side, num_classes);
        if let Some(widths) = &self.widths {
            spec.widths = widths.clone();
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub preprocess: PreprocessConfig,
    pub arch: ArchSection,
    /// `train.seed` is ignored in the file; the top-level seed wins.
    pub train: TrainConfig,
    pub folds: usize,
    pub occlusion: OcclusionConfig,
    pub ig_steps: usize,
    /// Attribution methods by name, or the literal `"all"`.
    pub methods: Vec<String>,
    pub manifest: Option<PathBuf>,
    pub hierarchy: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            preprocess: PreprocessConfig::default(),
            arch: ArchSection::default(),
            train: TrainConfig::default(),
            folds: 5,
            occlusion: OcclusionConfig::default(),
            ig_steps: 64,
            methods: vec!["all".into()],
            manifest: None,
            hierarchy: None,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.preprocess.validate()?;
        self.train.validate()?;
        if self.folds < 2 {
            return Err(CliError::Usage(format!(
                "folds must be >= 2, got {}",
                self.folds
            )));
        }
        if self.ig_steps == 0 {
            return Err(CliError::Usage("ig_steps must be >= 1".into()));
        }
        self.parse_methods()?;
        Ok(())
    }

    /// Applies the seed precedence: flag > environment > config file.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<(), CliError> {
        if let Ok(text) = std::env::var(SEED_ENV) {
            self.seed = text
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={text:?} is not a valid seed")))?;
        }
        if let Some(seed) = flag {
            self.seed = seed;
        }
        self.train.seed = self.seed;
        Ok(())
    }

    pub fn parse_methods(&self) -> Result<Vec<Method>, CliError> {
        parse_method_names(&self.methods)
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn parse_method_names(names: &[String]) -> Result<Vec<Method>, CliError> {
    let mut out = Vec::new();
    for name in names {
        if name == "all" {
            for m in Method::ALL {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        } else {
            let m: Method = name.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no attribution methods selected".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let cfg = RunConfig::default();
        let json = cfg.to_pretty_json();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let json = r#"{"seed": 1, "not_a_key": true}"#;
        assert!(serde_json::from_str::<RunConfig>(json).is_err());
        let json = r#"{"preprocess": {"target_side": 32, "typo": 1}}"#;
        assert!(serde_json::from_str::<RunConfig>(json).is_err());
    }

    #[test]
    fn method_parsing() {
        let all = parse_method_names(&["all".into()]).unwrap();
        assert_eq!(all.len(), 6);
        let two = parse_method_names(&["saliency".into(), "deeplift".into()]).unwrap();
        assert_eq!(two, vec![Method::Saliency, Method::DeepLift]);
        assert!(parse_method_names(&["nope".into()]).is_err());
    }

    #[test]
    fn seed_precedence_flag_beats_env_beats_config() {
        // Serialized via a mutex-free trick: set and remove the env var in
        // one test only to avoid cross-test interference.
        let mut cfg = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        std::env::set_var(SEED_ENV, "7");
        cfg.resolve_seed(None).unwrap();
        assert_eq!(cfg.seed, 7);
        cfg.resolve_seed(Some(9)).unwrap();
        assert_eq!(cfg.seed, 9);
        std::env::set_var(SEED_ENV, "not-a-number");
        assert!(cfg.resolve_seed(None).is_err());
        std::env::remove_var(SEED_ENV);
        let mut cfg = RunConfig {
            seed: 3,
            ..RunConfig::default()
        };
        cfg.resolve_seed(None).unwrap();
        assert_eq!(cfg.seed, 3);
    }
}
