use thiserror::Error;

use crate::autodiff::AutodiffError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown activation `{0}` (expected tanh, logistic, relu or identity)")]
    UnknownActivation(String),
    #[error("invalid activation metadata: {0}")]
    InvalidActivation(String),
    #[error("layer {layer} ({kind}): {field} has {got} entries, expected {expected}")]
    Shape {
        layer: usize,
        kind: &'static str,
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("layer {layer}: in_dim {got} does not match out_dim {expected} of the previous layer")]
    DimChain { layer: usize, expected: usize, got: usize },
    #[error("{0}")]
    Structure(String),
    #[error("skip edge {index}: target {to} must come strictly after source {from}")]
    SkipCycle { index: usize, from: usize, to: usize },
    #[error("model file parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForwardError {
    #[error("window has {got} steps, graph expects lookback {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("window step {step} has dimension {got}, expected {expected}")]
    StepDim { step: usize, expected: usize, got: usize },
    #[error("layer {layer}: input has dimension {got}, expected {expected}")]
    LayerInput { layer: usize, expected: usize, got: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("report does not match graph: {0}")]
    Mismatch(String),
    #[error("report does not certify a bounded network image")]
    NotBounded,
    #[error(transparent)]
    Forward(#[from] ForwardError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("dataset has no training pairs")]
    EmptyTrainingSet,
    #[error(transparent)]
    Forward(#[from] ForwardError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MitigationError {
    #[error("layer {0} is not an activation bottleneck")]
    NotABottleneck(usize),
    #[error("graph has no activation bottleneck")]
    NoBottleneck,
    #[error("layer {layer}: {position} activation `{activation}` is not sigmoidal")]
    NotSigmoidal {
        layer: usize,
        position: &'static str,
        activation: &'static str,
    },
    #[error("layer {layer}: {reason}")]
    InvalidPosition { layer: usize, reason: String },
    #[error("inverse sigmoid refused: layer {layer} feeds values in {interval}, which is not inside (0, 1)")]
    InverseSigmoidDomain { layer: usize, interval: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("sequence length {n} must exceed the lookback {lookback}")]
    TooShort { n: usize, lookback: usize },
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{variant}: {source}")]
    Train {
        variant: String,
        #[source]
        source: TrainError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
