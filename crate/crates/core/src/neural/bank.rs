use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{MlpWeights, OutputKind};
use super::train::{train_mlp, Dataset, TrainConfig, TrainingLog};
use crate::error::{Error, Result};

/// Phonological class inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "GP")]
    Gp,
    #[serde(rename = "SPE")]
    Spe,
    #[serde(rename = "eSPE")]
    Espe,
}

const GP_CLASSES: [&str; 12] = ["A", "a", "E", "H", "h", "I", "i", "N", "S", "u", "U", "silence"];

const SPE_CLASSES: [&str; 15] = [
    "vocalic",
    "consonantal",
    "high",
    "back",
    "low",
    "anterior",
    "coronal",
    "round",
    "tense",
    "voice",
    "continuant",
    "nasal",
    "strident",
    "rising",
    "silence",
];

const ESPE_CLASSES: [&str; 21] = [
    "anterior",
    "approximant",
    "back",
    "continuant",
    "coronal",
    "dental",
    "fricative",
    "glottal",
    "high",
    "labial",
    "low",
    "mid",
    "nasal",
    "retroflex",
    "round",
    "stop",
    "tense",
    "velar",
    "voiced",
    "vowel",
    "silence",
];

impl Scheme {
    pub fn class_count(self) -> usize {
        self.default_classes().len()
    }

    pub fn default_classes(self) -> &'static [&'static str] {
        match self {
            Scheme::Gp => &GP_CLASSES,
            Scheme::Spe => &SPE_CLASSES,
            Scheme::Espe => &ESPE_CLASSES,
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Scheme::Gp => 0,
            Scheme::Spe => 1,
            Scheme::Espe => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Scheme::Gp),
            1 => Some(Scheme::Spe),
            2 => Some(Scheme::Espe),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Gp => "GP",
            Scheme::Spe => "SPE",
            Scheme::Espe => "eSPE",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gp" => Ok(Scheme::Gp),
            "spe" => Ok(Scheme::Spe),
            "espe" => Ok(Scheme::Espe),
            _ => Err(Error::config(format!("unknown phonological scheme '{s}'"))),
        }
    }
}

/// K-bit binary phonological pattern; bit k is class k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern(pub u32);

impl Pattern {
    pub fn from_bits(bits: &[bool]) -> Self {
        assert!(bits.len() <= 32);
        Pattern(
            bits.iter()
                .enumerate()
                .fold(0, |acc, (k, &b)| acc | (u32::from(b) << k)),
        )
    }

    pub fn bit(self, k: usize) -> bool {
        (self.0 >> k) & 1 == 1
    }

    pub fn hamming(self, other: Pattern) -> u32 {
        (self.0 ^ other.0).count_ones()
    }

    /// The pattern as a 0/1 feature vector of length `k`.
    pub fn to_features(self, k: usize) -> Vec<f64> {
        (0..k).map(|i| if self.bit(i) { 1.0 } else { 0.0 }).collect()
    }
}

/// Class-conditional posteriors of one analysis frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFrame {
    pub values: Vec<f64>,
}

impl PosteriorFrame {
    pub fn binarize(&self) -> Pattern {
        binarize(self)
    }
}

/// One-bit quantization; a posterior of exactly 0.5 maps to 1.
pub fn binarize(frame: &PosteriorFrame) -> Pattern {
    let bits: Vec<bool> = frame.values.iter().map(|&v| v >= 0.5).collect();
    Pattern::from_bits(&bits)
}

/// K parallel two-class networks, one per phonological class.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzerBank {
    pub scheme: Scheme,
    pub class_names: Vec<String>,
    pub networks: Vec<MlpWeights>,
}

impl AnalyzerBank {
    pub fn new(scheme: Scheme, class_names: Vec<String>, networks: Vec<MlpWeights>) -> Result<Self> {
        let bank = Self {
            scheme,
            class_names,
            networks,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.scheme.class_count();
        if self.class_names.len() != k {
            return Err(Error::config(format!(
                "{} needs {k} class names, got {}",
                self.scheme,
                self.class_names.len()
            )));
        }
        if self.networks.len() != k {
            return Err(Error::config(format!(
                "{} needs {k} analyzers, got {}",
                self.scheme,
                self.networks.len()
            )));
        }
        let mut names = self.class_names.clone();
        names.sort();
        names.dedup();
        if names.len() != k {
            return Err(Error::config("class names must be unique"));
        }
        let dim = self.networks[0].input_dim();
        for net in &self.networks {
            net.validate()?;
            if net.input_dim() != dim {
                return Err(Error::dimension(dim, net.input_dim()));
            }
            if net.output_dim() != 2 || net.output_kind != OutputKind::Softmax {
                return Err(Error::config("analyzers must have a two-way softmax output"));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.networks.len()
    }

    pub fn input_dim(&self) -> usize {
        self.networks[0].input_dim()
    }

    /// Posterior of each class being present, per input row.
    pub fn analyze_matrix(&self, stacked: ArrayView2<f64>) -> Result<Vec<PosteriorFrame>> {
        let outputs: Vec<Array2<f64>> = self
            .networks
            .par_iter()
            .map(|net| net.forward_batch(stacked))
            .collect::<Result<_>>()?;
        Ok((0..stacked.nrows())
            .map(|i| PosteriorFrame {
                values: outputs.iter().map(|o| o[[i, 1]]).collect(),
            })
            .collect())
    }
}

pub fn analyze(bank: &AnalyzerBank, stacked: &[Vec<f64>]) -> Result<Vec<PosteriorFrame>> {
    if stacked.is_empty() {
        return Ok(Vec::new());
    }
    let dim = bank.input_dim();
    if let Some(bad) = stacked.iter().find(|v| v.len() != dim) {
        return Err(Error::dimension(dim, bad.len()));
    }
    let flat: Vec<f64> = stacked.iter().flatten().copied().collect();
    let matrix = Array2::from_shape_vec((stacked.len(), dim), flat).expect("rectangular input");
    bank.analyze_matrix(matrix.view())
}

/// Trains one analyzer per class. `labels[i]` is the target pattern of
/// input row `i`. Each network gets its own seed derived from `cfg.seed`.
pub fn train_bank(
    scheme: Scheme,
    class_names: Vec<String>,
    inputs: &Array2<f64>,
    labels: &[Pattern],
    cfg: &TrainConfig,
) -> Result<(AnalyzerBank, Vec<TrainingLog>)> {
    if inputs.nrows() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if labels.len() != inputs.nrows() {
        return Err(Error::dimension(inputs.nrows(), labels.len()));
    }
    let k = class_names.len();
    let results: Vec<(MlpWeights, TrainingLog)> = (0..k)
        .into_par_iter()
        .map(|class| {
            let mut targets = Array2::zeros((labels.len(), 2));
            for (i, p) in labels.iter().enumerate() {
                targets[[i, usize::from(p.bit(class))]] = 1.0;
            }
            let data = Dataset {
                inputs: inputs.clone(),
                targets,
            };
            let cfg = TrainConfig {
                seed: cfg.seed.wrapping_mul(1_000_003).wrapping_add(class as u64),
                ..cfg.clone()
            };
            train_mlp(&data, OutputKind::Softmax, &cfg).map_err(|e| match e {
                Error::TrainingDiverged(msg) => {
                    Error::TrainingDiverged(format!("analyzer '{}': {msg}", class_names[class]))
                }
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let (networks, logs) = results.into_iter().unzip();
    Ok((AnalyzerBank::new(scheme, class_names, networks)?, logs))
}
