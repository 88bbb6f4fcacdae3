//! Training, evaluation, aggregation and explanation exports.

pub mod checkpoint;
pub mod config;
pub mod explain;
pub mod figures;
pub mod manifest;
pub mod model;
pub mod run;
pub mod tsne;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use config::{BackboneKind, Modality, RunConfig, MAX_EPOCHS};
pub use explain::{
    explain_attention, explain_gradcam, grad_cam_map, normalize_and_threshold, AttentionExplanation, MotifWeight,
    SaliencyMap, SALIENCY_THRESHOLD,
};
pub use manifest::{git_blob_sha1, Manifest};
pub use model::{DdiModel, ImageBank, ModelOutput, PairBatch};
pub use run::{
    aggregate_runs, evaluate, evaluate_checkpoint, infer, parameter_snapshot, train, AggregateReport, EpochLog,
    Inference, MeanStd, TrainOutcome, Workspace,
};
pub use tsne::{select_events, silhouette, tsne_2d, TsneParams};
