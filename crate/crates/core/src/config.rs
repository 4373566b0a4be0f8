//! Codec configuration: named profiles in one TOML file.
//!
//! ```toml
//! default_profile = "gp16"
//!
//! [profiles.gp16]
//! seed = 3
//!
//! [profiles.gp16.paths]
//! dir = "models/gp16"
//!
//! [profiles.spe10]
//! training.analyzer.max_epochs = 10
//! ```
//!
//! Every profile starts from the built-in profile of the same name
//! (`gp10` .. `espe20`), or from `gp16` for other names, and overrides the
//! keys it sets. Relative model directories resolve against the directory
//! of the configuration file.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{FrameGrid, PitchConfig};
use crate::neural::{Scheme, TrainConfig};
use crate::snn::SnnParams;
use crate::synthesis::VocoderConfig;

pub const DEFAULT_PROFILE: &str = "gp16";
pub const FRAME_SHIFTS_MS: [u32; 3] = [10, 16, 20];

/// Model artifact locations; file names are relative to `dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelPaths {
    pub dir: PathBuf,
    pub analyzer: PathBuf,
    pub synthesizer: PathBuf,
    pub segmental_codebook: PathBuf,
    pub prosodic_codebook: PathBuf,
    pub snn: PathBuf,
    pub training_log: PathBuf,
}

impl Default for ModelPaths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("models").join(DEFAULT_PROFILE),
            analyzer: "analyzer.bin".into(),
            synthesizer: "synthesizer.bin".into(),
            segmental_codebook: "segmental.cb".into(),
            prosodic_codebook: "prosodic.json".into(),
            snn: "snn.json".into(),
            training_log: "training_log.json".into(),
        }
    }
}

impl ModelPaths {
    fn resolve(&self, file: &Path) -> PathBuf {
        self.dir.join(file)
    }

    pub fn analyzer_path(&self) -> PathBuf {
        self.resolve(&self.analyzer)
    }

    pub fn synthesizer_path(&self) -> PathBuf {
        self.resolve(&self.synthesizer)
    }

    pub fn segmental_codebook_path(&self) -> PathBuf {
        self.resolve(&self.segmental_codebook)
    }

    pub fn prosodic_codebook_path(&self) -> PathBuf {
        self.resolve(&self.prosodic_codebook)
    }

    pub fn snn_path(&self) -> PathBuf {
        self.resolve(&self.snn)
    }

    pub fn training_log_path(&self) -> PathBuf {
        self.resolve(&self.training_log)
    }
}

/// Desk-scale training settings. Network seeds are derived from the
/// profile seed, so `seed` inside the network sections is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSettings {
    pub analyzer: TrainConfig,
    pub synthesizer: TrainConfig,
    /// Cost evaluations spent on the boundary detector search.
    pub snn_budget: usize,
    /// Starting point of the boundary detector search.
    pub snn_init: SnnParams,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            analyzer: TrainConfig {
                hidden: vec![64, 64],
                learning_rate: 0.1,
                batch_size: 32,
                max_epochs: 30,
                min_epochs: 5,
                ..TrainConfig::default()
            },
            synthesizer: TrainConfig {
                hidden: vec![128, 128],
                learning_rate: 0.05,
                batch_size: 32,
                max_epochs: 60,
                min_epochs: 10,
                ..TrainConfig::default()
            },
            snn_budget: 400,
            snn_init: SnnParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecConfig {
    /// Profile name; set by the loader.
    #[serde(skip)]
    pub profile: String,
    pub scheme: Scheme,
    /// Analyzer class order; empty means the scheme's default list.
    pub class_names: Vec<String>,
    pub frame_shift_ms: u32,
    pub seed: u64,
    pub paths: ModelPaths,
    pub pitch: PitchConfig,
    pub vocoder: VocoderConfig,
    pub training: TrainingSettings,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self::builtin(DEFAULT_PROFILE).expect("default profile is built in")
    }
}

fn parse_builtin(name: &str) -> Option<(Scheme, u32)> {
    let digits = name.find(|c: char| c.is_ascii_digit())?;
    let (prefix, shift) = name.split_at(digits);
    let scheme = match prefix {
        "gp" => Scheme::Gp,
        "spe" => Scheme::Spe,
        "espe" => Scheme::Espe,
        _ => return None,
    };
    let shift: u32 = shift.parse().ok()?;
    FRAME_SHIFTS_MS.contains(&shift).then_some((scheme, shift))
}

/// Names of the built-in profiles.
pub fn builtin_profiles() -> Vec<String> {
    ["gp", "spe", "espe"]
        .iter()
        .flat_map(|s| FRAME_SHIFTS_MS.iter().map(move |f| format!("{s}{f}")))
        .collect()
}

/// Recursively overlays `over` onto `base`.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    default_profile: Option<String>,
    #[serde(default)]
    profiles: toml::Table,
}

impl CodecConfig {
    /// One of `gp10` .. `espe20`: scheme defaults, desk-scale training.
    pub fn builtin(profile: &str) -> Result<Self> {
        let (scheme, shift) = parse_builtin(profile).ok_or_else(|| {
            Error::config(format!(
                "unknown profile '{profile}' (built in: {})",
                builtin_profiles().join(", ")
            ))
        })?;
        Ok(Self {
            profile: profile.to_string(),
            scheme,
            class_names: scheme.default_classes().iter().map(|s| s.to_string()).collect(),
            frame_shift_ms: shift,
            seed: 1,
            paths: ModelPaths {
                dir: PathBuf::from("models").join(profile),
                ..ModelPaths::default()
            },
            pitch: PitchConfig::default(),
            vocoder: VocoderConfig::default(),
            training: TrainingSettings::default(),
        })
    }

    /// Parses configuration text; `profile` falls back to the file's
    /// `default_profile`, then to `gp16`.
    pub fn from_toml_str(text: &str, profile: Option<&str>, base_dir: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        let name = profile
            .map(str::to_string)
            .or(file.default_profile)
            .unwrap_or_else(|| DEFAULT_PROFILE.to_string());
        let mut cfg = match file.profiles.get(&name) {
            Some(toml::Value::Table(over)) => {
                let base_cfg = Self::builtin(&name).or_else(|_| Self::builtin(DEFAULT_PROFILE))?;
                let mut base = match toml::Value::try_from(&base_cfg).map_err(|e| Error::config(e.to_string()))? {
                    toml::Value::Table(t) => t,
                    _ => unreachable!("a struct serializes to a table"),
                };
                if over.contains_key("scheme") {
                    base.insert("class_names".into(), toml::Value::Array(Vec::new()));
                }
                merge(&mut base, over.clone());
                let mut cfg: CodecConfig = toml::Value::Table(base)
                    .try_into()
                    .map_err(|e: toml::de::Error| Error::config(format!("profile '{name}': {e}")))?;
                if !over.get("paths").and_then(|p| p.get("dir")).is_some() && parse_builtin(&name).is_none() {
                    cfg.paths.dir = PathBuf::from("models").join(&name);
                }
                cfg
            }
            Some(_) => return Err(Error::config(format!("profile '{name}' must be a table"))),
            None => Self::builtin(&name)?,
        };
        cfg.profile = name;
        if cfg.paths.dir.is_relative() {
            cfg.paths.dir = base_dir.join(&cfg.paths.dir);
        }
        cfg.finish()
    }

    /// Loads `path` (or the built-in profiles when `None`).
    pub fn load(path: Option<&Path>, profile: Option<&str>) -> Result<Self> {
        match path {
            Some(path) => {
                let text =
                    fs::read_to_string(path).map_err(|_| Error::config_path("cannot read configuration", path))?;
                let base = path.parent().unwrap_or(Path::new(""));
                Self::from_toml_str(&text, profile, base).map_err(|e| match e {
                    Error::Config { message, path: None } => Error::config_path(message, path),
                    other => other,
                })
            }
            None => Self::builtin(profile.unwrap_or(DEFAULT_PROFILE)),
        }
    }

    fn finish(mut self) -> Result<Self> {
        if self.class_names.is_empty() {
            self.class_names = self.scheme.default_classes().iter().map(|s| s.to_string()).collect();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !FRAME_SHIFTS_MS.contains(&self.frame_shift_ms) {
            return Err(Error::config(format!(
                "frame_shift_ms must be one of 10, 16, 20, got {}",
                self.frame_shift_ms
            )));
        }
        let k = self.scheme.class_count();
        if self.class_names.len() != k {
            return Err(Error::config(format!(
                "scheme {:?} has {k} classes but {} class names are configured",
                self.scheme,
                self.class_names.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self
            .class_names
            .iter()
            .find(|c| c.is_empty() || !seen.insert(c.as_str()))
        {
            return Err(Error::config(format!(
                "class names must be distinct and non-empty ('{dup}')"
            )));
        }
        let p = &self.pitch;
        if !(p.min_hz > 0.0 && p.min_hz < p.max_hz) {
            return Err(Error::config("pitch range must satisfy 0 < min_hz < max_hz"));
        }
        self.training.snn_init.validate()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<FrameGrid> {
        FrameGrid::new(self.frame_shift_ms)
    }

    /// Same configuration with every derived seed re-rooted at `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_model_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.paths.dir = dir.into();
        self
    }

    /// The profile as a stand-alone configuration file.
    pub fn to_toml(&self) -> Result<String> {
        let mut profiles = toml::Table::new();
        profiles.insert(
            self.profile.clone(),
            toml::Value::try_from(self).map_err(|e| Error::config(e.to_string()))?,
        );
        let mut root = toml::Table::new();
        root.insert("default_profile".into(), toml::Value::String(self.profile.clone()));
        root.insert("profiles".into(), toml::Value::Table(profiles));
        toml::to_string(&root).map_err(|e| Error::config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_gp_at_16ms() {
        let c = CodecConfig::default();
        assert_eq!(c.profile, "gp16");
        assert_eq!(c.scheme, Scheme::Gp);
        assert_eq!(c.frame_shift_ms, 16);
        assert_eq!(c.class_names.len(), 12);
        c.validate().unwrap();
    }

    #[test]
    fn all_builtins_validate() {
        let names = builtin_profiles();
        assert_eq!(names.len(), 9);
        for n in names {
            let c = CodecConfig::builtin(&n).unwrap();
            c.validate().unwrap();
            assert_eq!(c.class_names.len(), c.scheme.class_count());
        }
        assert!(CodecConfig::builtin("gp12").is_err());
        assert!(CodecConfig::builtin("xyz16").is_err());
    }

    #[test]
    fn file_profiles_override_builtins() {
        let text = r#"
default_profile = "small"

[profiles.small]
scheme = "SPE"
frame_shift_ms = 10
seed = 9
training.analyzer.max_epochs = 3

[profiles.gp20]
paths.dir = "/tmp/gp20"
"#;
        let c = CodecConfig::from_toml_str(text, None, Path::new("/cfg")).unwrap();
        assert_eq!(c.profile, "small");
        assert_eq!(c.scheme, Scheme::Spe);
        assert_eq!(c.class_names.len(), 15);
        assert_eq!(c.frame_shift_ms, 10);
        assert_eq!(c.seed, 9);
        assert_eq!(c.training.analyzer.max_epochs, 3);
        assert_eq!(c.training.analyzer.hidden, vec![64, 64]);
        assert_eq!(c.paths.dir, Path::new("/cfg/models/small"));

        let g = CodecConfig::from_toml_str(text, Some("gp20"), Path::new("/cfg")).unwrap();
        assert_eq!(g.frame_shift_ms, 20);
        assert_eq!(g.paths.dir, Path::new("/tmp/gp20"));
        assert_eq!(g.paths.analyzer_path(), Path::new("/tmp/gp20/analyzer.bin"));

        let b = CodecConfig::from_toml_str(text, Some("espe16"), Path::new("")).unwrap();
        assert_eq!(b.scheme, Scheme::Espe);
    }

    #[test]
    fn invalid_profiles_are_config_errors() {
        let bad_shift = "[profiles.gp16]\nframe_shift_ms = 12\n";
        let bad_classes = "[profiles.gp16]\nclass_names = [\"a\", \"b\"]\n";
        let dup = "[profiles.gp16]\nclass_names = [\"A\",\"A\",\"E\",\"H\",\"h\",\"I\",\"i\",\"N\",\"S\",\"u\",\"U\",\"silence\"]\n";
        let unknown = "[profiles.gp16]\nscheme = \"XX\"\n";
        let syntax = "[profiles.gp16\n";
        for text in [bad_shift, bad_classes, dup, unknown, syntax] {
            let r = CodecConfig::from_toml_str(text, None, Path::new(""));
            assert!(matches!(r, Err(Error::Config { .. })), "{text}: {r:?}");
        }
        assert!(CodecConfig::from_toml_str("", Some("nope"), Path::new("")).is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = CodecConfig::load(Some(Path::new("/no/such/codec.toml")), None).unwrap_err();
        assert!(err.to_string().contains("/no/such/codec.toml"));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn serialized_profile_loads_back() {
        let mut c = CodecConfig::builtin("espe10").unwrap().with_seed(42);
        c.paths.dir = PathBuf::from("/abs/models");
        let back = CodecConfig::from_toml_str(&c.to_toml().unwrap(), None, Path::new("")).unwrap();
        assert_eq!(back, c);
    }
}
