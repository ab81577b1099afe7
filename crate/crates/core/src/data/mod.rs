//! Synthetic scene generation and persistence of every artifact.

mod generate;
mod io;
pub mod record;

pub use generate::{
    generate_dataset, generate_scene, rollout, scene_cue, scene_seed, Dataset, GenConfig, Maneuver, SceneCue,
    SPEED_SCALE,
};
pub use io::{
    load_anchors, load_checkpoint, load_dataset, read_csv, save_anchors, save_checkpoint, save_dataset, write_csv,
    Checkpoint, EpochRow, LayerRow, MetricsRow,
};

pub const SCENES_FILE: &str = "scenes.edar";
pub const ANCHORS_FILE: &str = "anchors.edar";
pub const MODEL_FILE: &str = "model.edar";
pub const METRICS_FILE: &str = "metrics.csv";
