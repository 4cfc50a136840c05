//! Water-quality monitoring and control for a desk-scale biofloc tank.
//!
//! - [`labeling`]: ground-truth rule, synthetic datasets, CSV format
//! - [`dtree`]: regression tree fit/predict/evaluate and C export
//! - [`control`]: actuator rules, override arbitration, control tick
//! - [`plantsim`]: tank dynamics and closed-loop runs
//! - [`store`]: append-only JSONL telemetry store

pub mod config;
pub mod control;
pub mod dtree;
pub mod labeling;
pub mod model;
pub mod plantsim;
pub mod store;

pub use config::Config;
pub use control::{arbitrate, control_tick, decide, ControlDecision, Controller, Rule, TickError, TickReport};
pub use dtree::{evaluate, export_classifier, fit, predict, EvalReport, Prediction, TreeHyperparams, TreeNode};
pub use labeling::{generate_dataset, label_sample, Dataset, LabeledSample};
pub use model::{
    validate_sample, ActuatorId, ActuatorMode, ActuatorState, Condition, Thresholds, TimestampMs, ValidationError,
    WaterSample,
};
pub use store::{StoreError, StoredRecord, TelemetryStore};
