//! Run configuration, the training/evaluation loop and feature-map export.

mod config;
mod export;
mod train;

pub use config::{
    default_weight_decay, ConfigOverrides, DataSource, RunConfig, Variant, DEFAULT_ALPHA, DEFAULT_BATCH,
    DEFAULT_CIFAR_PER_CLASS, DEFAULT_EPOCHS, DEFAULT_OUT, DEFAULT_SEED, DEFAULT_SYNTH_PER_CLASS,
};
pub use export::{export_feature_maps, load_raw_map, pgm_bytes, quantize_channel, write_feature_maps, write_raw_map};
pub use train::{
    evaluate, load_test_set, prepare_data, train_run, MetricsRow, RunManifest, RunOutcome, Trainer, CHECKPOINT_FILE,
    MANIFEST_FILE, METRICS_FILE, METRICS_HEADER, SYNTH_CLASSES, SYNTH_TEST_PER_CLASS,
};
