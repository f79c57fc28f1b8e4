//! Dialogue-dataset construction: annotations in, threaded CoT tuples out.

pub mod build;
pub mod error;
pub mod generate;
pub mod ingest;

pub use build::{
    build_dialogue_dataset, narrations, write_dataset, BuildOptions, BuildOutput, BuildStats,
    DatasetManifest, DialogueTuple, ShardInfo, TaskVariant, TrajectoryInput, DEFAULT_SHARD_SIZE,
};
pub use error::DatasetError;
pub use generate::{
    generate_distractor_task, generate_distractor_with, generate_training_cot,
    render_cot_prompt, render_distractor_prompt, sample_shared_steps, COT_PROMPT,
    DISTRACTOR_PROMPT,
};
pub use ingest::{
    ingest_annotations, ingest_file, load_manifest, Ingested, IngestedAnnotation, ManifestSource,
    Rejection,
};
