//! Treebank ingestion, the embedding exchange format and synthetic data.

pub mod conllu;
pub mod dataset;
pub mod embeddings;
pub mod synthetic;

pub use conllu::{parse_conllu, read_conllu, TokenRecord};
pub use dataset::{Examples, Task, TokenDataset};
pub use embeddings::{
    align, random_type_embeddings, read_embeddings, read_sidecar, write_embeddings, write_sidecar, AlignmentRow,
    EmbeddingStore,
};
pub use synthetic::{synthesize, SyntheticData, SyntheticKind, SyntheticSpec};
