//! Flat key=value run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::embeddings::DEFAULT_OOV_SEED;
use crate::error::{Error, Result};
use crate::network::Pooling;
use crate::synth::SynthConfig;
use crate::trainer::Hyperparams;
use crate::weak::{ScoreMode, SelfTrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Preprocess,
    TrainSingle,
    TrainMtl,
    SelfTrain,
    GenWeak,
    TrainJoint,
    Evaluate,
    CrossValidate,
    GradCheck,
    SynthGen,
    Ablate,
}

impl Mode {
    pub const ALL: [Mode; 11] = [
        Mode::Preprocess,
        Mode::TrainSingle,
        Mode::TrainMtl,
        Mode::SelfTrain,
        Mode::GenWeak,
        Mode::TrainJoint,
        Mode::Evaluate,
        Mode::CrossValidate,
        Mode::GradCheck,
        Mode::SynthGen,
        Mode::Ablate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Preprocess => "preprocess",
            Mode::TrainSingle => "train-single",
            Mode::TrainMtl => "train-mtl",
            Mode::SelfTrain => "self-train",
            Mode::GenWeak => "gen-weak",
            Mode::TrainJoint => "train-joint",
            Mode::Evaluate => "evaluate",
            Mode::CrossValidate => "cross-validate",
            Mode::GradCheck => "grad-check",
            Mode::SynthGen => "synth-gen",
            Mode::Ablate => "ablate",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Mode::ALL.iter().map(|m| m.as_str()).collect();
            Error::Config(format!("unknown mode {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// Recognized keys and their defaults. An empty default means unset.
pub const KEYS: &[(&str, &str)] = &[
    ("mode", ""),
    ("adr_data", ""),
    ("ade_data", ""),
    ("pool", ""),
    ("prior_pool", ""),
    ("embeddings", ""),
    ("checkpoint", ""),
    ("weak_adr", ""),
    ("weak_ade", ""),
    ("out", "out"),
    ("seed", "0"),
    ("threads", "0"),
    ("k", "10"),
    ("hidden", "500"),
    ("input_dim", "400"),
    ("layers", "1"),
    ("epochs", "10"),
    ("learning_rate", "0.001"),
    ("adr_batch_size", "8"),
    ("ade_batch_size", "32"),
    ("selftrain_batch_size", "64"),
    ("joint_batch_size", "32"),
    ("lambda", "0.8"),
    ("tau", "0.5"),
    ("grad_clip", "5"),
    ("pooling", "full"),
    ("max_iterations", "5"),
    ("finetune_epochs", "3"),
    ("score_mode", "geometric"),
    ("vocab_cap", "auto"),
    ("pad_len", "auto"),
    ("oov_seed", "24301"),
    ("match", "approximate"),
    ("include_gold", "true"),
    ("train", "single"),
    ("axis", ""),
    ("fractions", "0.2,0.4,0.6,0.8,1.0"),
    ("layer_values", "1,2,3"),
    ("gradcheck_configs", "20"),
    ("synth_filler_vocab", "300"),
    ("synth_adr_lexicon", "80"),
    ("synth_other_lexicon", "20"),
    ("synth_max_phrase_len", "2"),
    ("synth_min_len", "6"),
    ("synth_max_len", "14"),
    ("synth_adr_prob", "0.5"),
    ("synth_other_prob", "0.3"),
    ("synth_n_adr", "200"),
    ("synth_n_ade", "2000"),
    ("synth_n_pool", "500"),
    ("synth_cluster", "0"),
];

/// Keys left out of the manifest because they do not affect results.
const UNRECORDED: &[&str] = &["out"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        debug_assert_eq!(DEFAULT_OOV_SEED.to_string(), "24301");
        RunConfig {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match self.values.get_mut(&key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
    }

    /// Applies `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, i + 1, "expected key=value"))?;
            self.set(k, v).map_err(|e| Error::format(path, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
    }

    fn parse_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.get(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid list entry {s:?} for {key}")))
            })
            .collect()
    }

    pub fn mode(&self) -> Result<Mode> {
        match self.get("mode") {
            "" => Err(Error::Config("no mode given (use --mode)".into())),
            m => m.parse(),
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        match self.get(key) {
            "" => None,
            p => Some(PathBuf::from(p)),
        }
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key).ok_or_else(|| {
            Error::Config(format!(
                "mode {} requires --{}",
                self.get("mode"),
                key.replace('_', "-")
            ))
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out"))
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed")
    }

    /// `None` means no cap.
    pub fn optional_usize(&self, key: &str, unset: &str) -> Result<Option<usize>> {
        if self.get(key) == unset {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn fractions(&self) -> Result<Vec<f64>> {
        let f: Vec<f64> = self.parse_list("fractions")?;
        if f.is_empty() || f.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
            return Err(Error::Config("fractions must lie in (0, 1]".into()));
        }
        Ok(f)
    }

    pub fn layer_values(&self) -> Result<Vec<usize>> {
        self.parse_list("layer_values")
    }

    pub fn hyperparams(&self) -> Result<Hyperparams> {
        let grad_clip = match self.get("grad_clip") {
            "none" | "0" => None,
            _ => Some(self.parse("grad_clip")?),
        };
        let pooling = Pooling::parse(self.get("pooling"))
            .ok_or_else(|| Error::Config(format!("invalid pooling {:?}", self.get("pooling"))))?;
        let h = Hyperparams {
            hidden: self.parse("hidden")?,
            input_dim: self.parse("input_dim")?,
            max_epochs: self.parse("epochs")?,
            learning_rate: self.parse("learning_rate")?,
            adr_batch_size: self.parse("adr_batch_size")?,
            ade_batch_size: self.parse("ade_batch_size")?,
            selftrain_adr_batch_size: self.parse("selftrain_batch_size")?,
            joint_batch_size: self.parse("joint_batch_size")?,
            lambda: self.parse("lambda")?,
            tau: self.parse("tau")?,
            layers: self.parse("layers")?,
            seed: self.seed()?,
            grad_clip,
            pooling,
            ..Hyperparams::default()
        };
        h.validate()?;
        Ok(h)
    }

    pub fn selftrain(&self) -> Result<SelfTrainConfig> {
        let score_mode = ScoreMode::parse(self.get("score_mode"))
            .ok_or_else(|| Error::Config(format!("invalid score_mode {:?}", self.get("score_mode"))))?;
        let cfg = SelfTrainConfig {
            tau: self.parse("tau")?,
            max_iterations: self.parse("max_iterations")?,
            batch_size: self.parse("selftrain_batch_size")?,
            finetune_epochs: self.parse("finetune_epochs")?,
            score_mode,
            keep_snapshots: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        let cfg = SynthConfig {
            filler_vocab: self.parse("synth_filler_vocab")?,
            adr_lexicon: self.parse("synth_adr_lexicon")?,
            other_lexicon: self.parse("synth_other_lexicon")?,
            max_phrase_len: self.parse("synth_max_phrase_len")?,
            min_len: self.parse("synth_min_len")?,
            max_len: self.parse("synth_max_len")?,
            adr_prob: self.parse("synth_adr_prob")?,
            other_prob: self.parse("synth_other_prob")?,
            n_adr: self.parse("synth_n_adr")?,
            n_ade: self.parse("synth_n_ade")?,
            n_pool: self.parse("synth_n_pool")?,
            cluster: self.parse("synth_cluster")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The resolved configuration in the same format it is read from.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            if !UNRECORDED.contains(&k.as_str()) {
                let _ = writeln!(s, "{k}={v}");
            }
        }
        s
    }
}
