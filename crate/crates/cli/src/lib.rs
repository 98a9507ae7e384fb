//! Command-line front end: configuration, checkpoints, corpus files and the
//! `build-vocab`, `pretrain`, `finetune`, `label` and `evaluate` commands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod corpus;

pub use checkpoint::{Checkpoint, CheckpointError, Progress};
pub use commands::{cmd_build_vocab, cmd_evaluate, cmd_finetune, cmd_label, cmd_pretrain, MetricsReport};
pub use config::{ConfigError, ExperimentConfig, KChoice, OracleKind, Phase, Settings, StageSpec};
