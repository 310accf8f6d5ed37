use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use kgat::augment::AugmentationSpec;
use kgat::encoder::EncoderConfig;
use kgat::esim::EsimConfig;
use kgat::harness::{default_fractions, HeadType};
use kgat::train::TrainOptions;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::failure::{data, usage, Failure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Encoder,
    Esim,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Encoder => "encoder",
            ModelKind::Esim => "esim",
        })
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSection {
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for CurveSection {
    fn default() -> Self {
        CurveSection {
            fractions: default_fractions(),
            seeds: vec![0],
        }
    }
}

fn one() -> usize {
    1
}

/// The JSON document behind `--config`. Model sections take the library's
/// config fields; `vocab_size` is filled in from the training data.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub wordnet_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataPaths,
    #[serde(default)]
    pub model: Option<ModelKind>,
    #[serde(default)]
    pub encoder: Option<Map<String, Value>>,
    #[serde(default)]
    pub esim: Option<Map<String, Value>>,
    #[serde(default)]
    pub guided: bool,
    /// Minimum corpus frequency for a word to enter the vocabulary.
    #[serde(default = "one")]
    pub min_freq: usize,
    #[serde(default)]
    pub training: TrainOptions,
    /// Applied to the training set before the vocabulary is built.
    #[serde(default)]
    pub augmentation: Option<AugmentationSpec>,
    #[serde(default)]
    pub translate_endpoint: Option<String>,
    #[serde(default)]
    pub learning_curve: CurveSection,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

pub fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(data(format!("{}: no such file", path.display())))
    }
}

pub fn require_dir(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(data(format!("{}: no such directory", path.display())))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Failure> {
        read_json(path)
    }

    /// Resolve the model kind from a flag, the `model` key or the only section present.
    pub fn kind(&self, flag: Option<ModelKind>) -> Result<ModelKind, Failure> {
        let inferred = match (self.encoder.is_some(), self.esim.is_some()) {
            (true, false) => Some(ModelKind::Encoder),
            (false, true) => Some(ModelKind::Esim),
            _ => None,
        };
        let kind = match (flag, self.model) {
            (Some(f), Some(m)) if f != m => {
                return Err(usage(format!("--model {f} contradicts config model {m:?}")));
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => inferred.ok_or_else(|| usage("config must name its model"))?,
        };
        let present = match kind {
            ModelKind::Encoder => self.encoder.is_some(),
            ModelKind::Esim => self.esim.is_some(),
        };
        if !present {
            return Err(usage(format!("config has no \"{kind}\" section")));
        }
        Ok(kind)
    }

    fn section(&self, kind: ModelKind) -> &Map<String, Value> {
        match kind {
            ModelKind::Encoder => self.encoder.as_ref(),
            ModelKind::Esim => self.esim.as_ref(),
        }
        .expect("kind() checked the section")
    }

    pub fn head_type(&self, kind: ModelKind) -> Result<HeadType, Failure> {
        let head = self
            .section(kind)
            .get("head_type")
            .ok_or_else(|| usage(format!("\"{kind}\" section lacks head_type")))?;
        serde_json::from_value(head.clone()).map_err(|e| usage(format!("head_type: {e}")))
    }

    fn model_config<T: DeserializeOwned>(
        &self,
        kind: ModelKind,
        vocab_size: usize,
    ) -> Result<T, Failure> {
        let mut section = self.section(kind).clone();
        section.entry("vocab_size").or_insert(vocab_size.into());
        serde_json::from_value(Value::Object(section))
            .map_err(|e| usage(format!("\"{kind}\" section: {e}")))
    }

    pub fn encoder_config(&self, vocab_size: usize) -> Result<EncoderConfig, Failure> {
        self.model_config(ModelKind::Encoder, vocab_size)
    }

    pub fn esim_config(&self, vocab_size: usize) -> Result<EsimConfig, Failure> {
        self.model_config(ModelKind::Esim, vocab_size)
    }

    /// The WordNet directory, required when guidance or the augmentation needs it.
    pub fn wordnet(&self, needed: bool) -> Result<Option<&Path>, Failure> {
        match (&self.wordnet_dir, needed) {
            (Some(dir), _) => {
                require_dir(dir)?;
                Ok(Some(dir.as_path()))
            }
            (None, true) => Err(usage("config needs wordnet_dir")),
            (None, false) => Ok(None),
        }
    }

    pub fn needs_graph(&self) -> bool {
        use kgat::augment::Strategy;
        self.augmentation
            .as_ref()
            .is_some_and(|a| a.strategy == Strategy::ReplaceSynonyms)
    }

    /// Create the output directory, defaulting to the working directory.
    pub fn output_dir(&self, flag: Option<&Path>) -> Result<PathBuf, Failure> {
        let dir = flag
            .or(self.output_dir.as_deref())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }
}
