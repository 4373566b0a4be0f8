//! Feed-forward networks: inference, desk-scale training, the bank of
//! phonological analyzers, and the weight file format.

mod bank;
pub mod io;
mod mlp;
mod train;

pub use bank::{analyze, binarize, train_bank, AnalyzerBank, Pattern, PosteriorFrame, Scheme};
pub use mlp::{mlp_forward, Gradients, Layer, MlpWeights, Normalization, OutputKind};
pub use train::{train_mlp, Dataset, TrainConfig, TrainingLog};
