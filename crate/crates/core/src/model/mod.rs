pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod labels;
pub mod network;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest};
pub use config::{ModelConfig, Variant};
pub use decode::{decode_tuples, ExtractionTuple};
pub use labels::{LabelClass, LabelSpace, Polarity, Task};
pub use network::{build_model, build_model_with_embeddings, predict_labels, ForwardOptions, ForwardTrace, Model};
