//! Model files: TOML text describing a [`NetworkGraph`].
//!
//! ```toml
//! input_dim = 10
//! output_dim = 1
//! lookback = 10
//!
//! [[layers]]
//! kind = "input_linear"        # input_linear | dense | lstm_cell | gru_cell |
//!                              # output_linear | pointwise_activation | inverse_sigmoid
//! in_dim = 10
//! out_dim = 1
//! activation = "identity"      # optional, defaults to identity; candidate/output for cells
//! gate_activation = "logistic" # recurrent cells only
//! weights = [...]              # row-major, see `graph` for the per-kind shape
//! bias = [...]
//! extra = { clamp_eps = 1e-12 } # optional
//!
//! [[skip_edges]]
//! source = 1
//! target = 3
//! projection = [...]           # optional row-major `target.out_dim × source.in_dim`
//! ```
//!
//! Unknown fields are rejected. Floats are written in shortest round-trip form,
//! so save/load preserves every weight bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation::{ActivationKind, ActivationSpec};
use crate::error::GraphError;
use crate::graph::{LayerKind, LayerSpec, NetworkGraph, SkipEdge};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    input_dim: usize,
    output_dim: usize,
    lookback: usize,
    layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    skip_edges: Vec<SkipRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    kind: String,
    in_dim: usize,
    out_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    activation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gate_activation: Option<String>,
    #[serde(default)]
    weights: Vec<f64>,
    #[serde(default)]
    bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    extra: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkipRecord {
    source: usize,
    target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    projection: Option<Vec<f64>>,
}

fn layer_to_record(l: &LayerSpec) -> LayerRecord {
    LayerRecord {
        kind: l.kind.name().to_string(),
        in_dim: l.in_dim,
        out_dim: l.out_dim,
        activation: (!l.kind.is_linear() && l.kind != LayerKind::InverseSigmoid)
            .then(|| l.activation.name().to_string()),
        gate_activation: l.gate_activation.map(|g| g.name().to_string()),
        weights: l.weights.clone(),
        bias: l.bias.clone(),
        extra: l.extra.clone(),
    }
}

fn record_to_layer(i: usize, r: LayerRecord) -> Result<LayerSpec, GraphError> {
    let ctx = |e: GraphError| GraphError::Parse(format!("layers[{i}]: {e}"));
    let kind: LayerKind = r.kind.parse().map_err(ctx)?;
    let activation = match &r.activation {
        Some(a) => a.parse::<ActivationKind>().map_err(ctx)?,
        None if kind.is_recurrent() => ActivationKind::Tanh,
        None => ActivationKind::Identity,
    };
    let gate_activation = match (&r.gate_activation, kind.is_recurrent()) {
        (Some(g), true) => Some(ActivationSpec::builtin(g.parse().map_err(ctx)?)),
        (None, true) => Some(ActivationSpec::builtin(ActivationKind::Logistic)),
        (Some(_), false) => {
            return Err(GraphError::Parse(format!(
                "layers[{i}]: field `gate_activation` is only valid for recurrent cells"
            )))
        }
        (None, false) => None,
    };
    Ok(LayerSpec {
        kind,
        in_dim: r.in_dim,
        out_dim: r.out_dim,
        weights: r.weights,
        bias: r.bias,
        activation: ActivationSpec::builtin(activation),
        gate_activation,
        extra: r.extra,
    })
}

pub fn to_toml_string(graph: &NetworkGraph) -> String {
    let file = ModelFile {
        input_dim: graph.input_dim,
        output_dim: graph.output_dim,
        lookback: graph.lookback,
        layers: graph.layers.iter().map(layer_to_record).collect(),
        skip_edges: graph
            .skip_edges
            .iter()
            .map(|e| SkipRecord {
                source: e.source,
                target: e.target,
                projection: e.projection.clone(),
            })
            .collect(),
    };
    toml::to_string(&file).expect("model records always serialise")
}

/// Parses and validates a model file.
pub fn from_toml_str(text: &str) -> Result<NetworkGraph, GraphError> {
    let file: ModelFile = toml::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    let layers = file
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, r)| record_to_layer(i, r))
        .collect::<Result<Vec<_>, _>>()?;
    let skip_edges = file
        .skip_edges
        .into_iter()
        .map(|s| SkipEdge {
            source: s.source,
            target: s.target,
            projection: s.projection,
        })
        .collect();
    NetworkGraph::new(file.input_dim, file.output_dim, file.lookback, layers, skip_edges)
}

pub fn save(graph: &NetworkGraph, path: &Path) -> std::io::Result<()> {
    fs::write(path, to_toml_string(graph))
}

pub fn load(path: &Path) -> Result<NetworkGraph, GraphError> {
    let text = fs::read_to_string(path).map_err(|e| GraphError::Parse(format!("{}: {e}", path.display())))?;
    from_toml_str(&text)
}
