//! Activation-bottleneck analysis and the straight-line forecasting experiment.
//!
//! - [`graph`]: network description (`ω ∘ h_k ∘ … ∘ h_1 ∘ ι` plus skip edges)
//!   and the six reference models.
//! - [`analysis`]: interval-based bottleneck detection and output certificates.
//! - [`autodiff`], [`cells`]: reverse-mode tape and dense/LSTM/GRU forward passes.
//! - [`dataset`], [`optim`], [`train`]: sequence generation, Adam, training loop.
//! - [`mitigation`]: graph rewrites that remove a bottleneck.
//! - [`modelfile`], [`report`], [`experiment`]: file formats and the full
//!   reproduction run.

pub mod activation;
pub mod analysis;
pub mod autodiff;
pub mod cells;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod interval;
pub mod mitigation;
pub mod modelfile;
pub mod optim;
pub mod report;
pub mod train;

pub use activation::{builtin_activation, ActivationKind, ActivationSpec};
pub use analysis::{analyze, AnalysisReport, DomainDescriptor, EpsilonStar};
pub use graph::{build_reference_model, LayerKind, LayerSpec, NetworkGraph, SkipEdge, Variant};
pub use interval::{Interval, IntervalBox};
pub use mitigation::{mitigate, Strategy};
