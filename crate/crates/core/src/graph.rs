//! Network description: a chain `ω ∘ h_k ∘ … ∘ h_1 ∘ ι` plus optional additive
//! skip edges.
//!
//! Weight layout per layer kind (all matrices row-major):
//!
//! | kind                   | weights                       | bias      |
//! |------------------------|-------------------------------|-----------|
//! | input/output linear, dense | `out × in`                | `out`     |
//! | lstm cell              | `4·out × (in + out)`, rows i, f, g, o | `4·out` |
//! | gru cell               | `3·out × (in + out)`, rows z, r, n    | `3·out` |
//! | pointwise, inverse sigmoid | empty (`in == out`)       | empty     |
//!
//! Recurrent weight columns are `[x, h]`. For GRU the candidate row block
//! multiplies `[x, r ⊙ h]`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::{ActivationKind, ActivationSpec};
use crate::error::GraphError;

/// Argument clamp used when evaluating the inverse sigmoid.
pub const INVERSE_SIGMOID_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    InputLinear,
    Dense,
    LstmCell,
    GruCell,
    OutputLinear,
    PointwiseActivation,
    InverseSigmoid,
}

impl LayerKind {
    pub const ALL: [LayerKind; 7] = [
        LayerKind::InputLinear,
        LayerKind::Dense,
        LayerKind::LstmCell,
        LayerKind::GruCell,
        LayerKind::OutputLinear,
        LayerKind::PointwiseActivation,
        LayerKind::InverseSigmoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::InputLinear => "input_linear",
            LayerKind::Dense => "dense",
            LayerKind::LstmCell => "lstm_cell",
            LayerKind::GruCell => "gru_cell",
            LayerKind::OutputLinear => "output_linear",
            LayerKind::PointwiseActivation => "pointwise_activation",
            LayerKind::InverseSigmoid => "inverse_sigmoid",
        }
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, LayerKind::LstmCell | LayerKind::GruCell)
    }

    pub fn is_linear(self) -> bool {
        matches!(self, LayerKind::InputLinear | LayerKind::OutputLinear)
    }

    fn gate_blocks(self) -> usize {
        match self {
            LayerKind::LstmCell => 4,
            LayerKind::GruCell => 3,
            _ => 1,
        }
    }

    /// `(rows, cols)` of the weight matrix for the given dims.
    pub fn weight_shape(self, in_dim: usize, out_dim: usize) -> (usize, usize) {
        match self {
            LayerKind::PointwiseActivation | LayerKind::InverseSigmoid => (0, 0),
            k if k.is_recurrent() => (k.gate_blocks().saturating_mul(out_dim), in_dim.saturating_add(out_dim)),
            _ => (out_dim, in_dim),
        }
    }

    pub fn bias_len(self, out_dim: usize) -> usize {
        match self {
            LayerKind::PointwiseActivation | LayerKind::InverseSigmoid => 0,
            k => k.gate_blocks().saturating_mul(out_dim),
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GraphError::Parse(format!("unknown layer kind `{s}`")))
    }
}

/// One layer `h` with parameters `{W, b, σ, ℵ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Pointwise activation; for recurrent cells the candidate/output activation.
    pub activation: ActivationSpec,
    /// Gate activation, present exactly for recurrent cells.
    pub gate_activation: Option<ActivationSpec>,
    /// Further named parameters.
    pub extra: BTreeMap<String, f64>,
}

impl LayerSpec {
    fn with_kind(
        kind: LayerKind,
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: ActivationKind,
    ) -> Self {
        LayerSpec {
            kind,
            in_dim,
            out_dim,
            weights,
            bias,
            activation: ActivationSpec::builtin(activation),
            gate_activation: kind
                .is_recurrent()
                .then(|| ActivationSpec::builtin(ActivationKind::Logistic)),
            extra: BTreeMap::new(),
        }
    }

    pub fn input_linear(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Self {
        Self::with_kind(
            LayerKind::InputLinear,
            in_dim,
            out_dim,
            weights,
            bias,
            ActivationKind::Identity,
        )
    }

    pub fn output_linear(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Self {
        Self::with_kind(
            LayerKind::OutputLinear,
            in_dim,
            out_dim,
            weights,
            bias,
            ActivationKind::Identity,
        )
    }

    pub fn dense(in_dim: usize, out_dim: usize, activation: ActivationKind, weights: Vec<f64>, bias: Vec<f64>) -> Self {
        Self::with_kind(LayerKind::Dense, in_dim, out_dim, weights, bias, activation)
    }

    /// LSTM cell with logistic gates and the given candidate/output activation.
    pub fn lstm(in_dim: usize, units: usize, candidate: ActivationKind, weights: Vec<f64>, bias: Vec<f64>) -> Self {
        Self::with_kind(LayerKind::LstmCell, in_dim, units, weights, bias, candidate)
    }

    /// GRU cell with logistic gates and the given candidate activation.
    pub fn gru(in_dim: usize, units: usize, candidate: ActivationKind, weights: Vec<f64>, bias: Vec<f64>) -> Self {
        Self::with_kind(LayerKind::GruCell, in_dim, units, weights, bias, candidate)
    }

    pub fn pointwise(dim: usize, activation: ActivationKind) -> Self {
        Self::with_kind(LayerKind::PointwiseActivation, dim, dim, vec![], vec![], activation)
    }

    pub fn inverse_sigmoid(dim: usize) -> Self {
        let mut l = Self::with_kind(
            LayerKind::InverseSigmoid,
            dim,
            dim,
            vec![],
            vec![],
            ActivationKind::Identity,
        );
        l.extra.insert("clamp_eps".into(), INVERSE_SIGMOID_CLAMP);
        l
    }

    pub fn weight_shape(&self) -> (usize, usize) {
        self.kind.weight_shape(self.in_dim, self.out_dim)
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Checks shapes and activation slots; `index` is used in messages only.
    pub fn validate(&self, index: usize) -> Result<(), GraphError> {
        let kind = self.kind.name();
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(GraphError::Structure(format!(
                "layer {index} ({kind}): dimensions must be positive"
            )));
        }
        let (rows, cols) = self.weight_shape();
        let expected = rows.saturating_mul(cols);
        if self.weights.len() != expected {
            return Err(GraphError::Shape {
                layer: index,
                kind,
                field: "weights",
                expected,
                got: self.weights.len(),
            });
        }
        let bl = self.kind.bias_len(self.out_dim);
        if self.bias.len() != bl {
            return Err(GraphError::Shape {
                layer: index,
                kind,
                field: "bias",
                expected: bl,
                got: self.bias.len(),
            });
        }
        if matches!(self.kind, LayerKind::PointwiseActivation | LayerKind::InverseSigmoid)
            && self.in_dim != self.out_dim
        {
            return Err(GraphError::Structure(format!(
                "layer {index} ({kind}): pointwise layers need in_dim == out_dim"
            )));
        }
        if self.kind.is_recurrent() != self.gate_activation.is_some() {
            return Err(GraphError::Structure(format!(
                "layer {index} ({kind}): recurrent cells carry exactly a gate and a candidate/output activation"
            )));
        }
        if self.kind.is_linear() && self.activation.kind != ActivationKind::Identity {
            return Err(GraphError::Structure(format!(
                "layer {index} ({kind}): linear layers cannot carry activation `{}`",
                self.activation.name()
            )));
        }
        if let Some(bad) = self.weights.iter().chain(&self.bias).find(|x| !x.is_finite()) {
            return Err(GraphError::Structure(format!(
                "layer {index} ({kind}): non-finite parameter {bad}"
            )));
        }
        self.activation.validate()?;
        if let Some(g) = &self.gate_activation {
            g.validate()?;
        }
        Ok(())
    }
}

/// Additive edge: `output(target) += P · input(source)`; `projection == None`
/// means identity and requires matching dims.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipEdge {
    pub source: usize,
    pub target: usize,
    pub projection: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Number of time steps in one input window.
    pub lookback: usize,
    pub layers: Vec<LayerSpec>,
    pub skip_edges: Vec<SkipEdge>,
}

impl NetworkGraph {
    /// Builds and validates a graph.
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        lookback: usize,
        layers: Vec<LayerSpec>,
        skip_edges: Vec<SkipEdge>,
    ) -> Result<Self, GraphError> {
        let g = NetworkGraph {
            input_dim,
            output_dim,
            lookback,
            layers,
            skip_edges,
        };
        g.validate()?;
        Ok(g)
    }

    /// Index of the (single) recurrent cell, if any.
    pub fn recurrent_index(&self) -> Option<usize> {
        self.layers.iter().position(|l| l.kind.is_recurrent())
    }

    pub fn is_recurrent(&self) -> bool {
        self.recurrent_index().is_some()
    }

    /// Dimension of one time step of the input window.
    pub fn step_dim(&self) -> usize {
        if self.is_recurrent() {
            self.input_dim
        } else {
            self.input_dim / self.lookback.max(1)
        }
    }

    pub fn hidden_indices(&self) -> std::ops::Range<usize> {
        1..self.layers.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.layers.len();
        if n < 2 {
            return Err(GraphError::Structure(
                "a network needs at least an input and an output layer".into(),
            ));
        }
        if self.layers[0].kind != LayerKind::InputLinear {
            return Err(GraphError::Structure(format!(
                "first layer must be input_linear, found {}",
                self.layers[0].kind
            )));
        }
        if self.layers[n - 1].kind != LayerKind::OutputLinear {
            return Err(GraphError::Structure(format!(
                "last layer must be output_linear, found {}",
                self.layers[n - 1].kind
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.validate(i)?;
            if (l.kind == LayerKind::InputLinear) != (i == 0) || (l.kind == LayerKind::OutputLinear) != (i == n - 1) {
                return Err(GraphError::Structure(format!(
                    "layer {i}: {} may only appear at the {} of the chain",
                    l.kind,
                    if l.kind == LayerKind::InputLinear {
                        "start"
                    } else {
                        "end"
                    }
                )));
            }
        }
        for i in 1..n {
            let expected = self.layers[i - 1].out_dim;
            if self.layers[i].in_dim != expected {
                return Err(GraphError::DimChain {
                    layer: i,
                    expected,
                    got: self.layers[i].in_dim,
                });
            }
        }
        if self.layers[0].in_dim != self.input_dim {
            return Err(GraphError::Structure(format!(
                "input_dim {} does not match input layer in_dim {}",
                self.input_dim, self.layers[0].in_dim
            )));
        }
        if self.layers[n - 1].out_dim != self.output_dim {
            return Err(GraphError::Structure(format!(
                "output_dim {} does not match output layer out_dim {}",
                self.output_dim,
                self.layers[n - 1].out_dim
            )));
        }
        if self.lookback == 0 {
            return Err(GraphError::Structure("lookback must be positive".into()));
        }
        let cells = self.layers.iter().filter(|l| l.kind.is_recurrent()).count();
        if cells > 1 {
            return Err(GraphError::Structure(format!(
                "only one recurrent cell is supported, found {cells}"
            )));
        }
        if cells == 0 && !self.input_dim.is_multiple_of(self.lookback) {
            return Err(GraphError::Structure(format!(
                "feed-forward input_dim {} is not a multiple of lookback {}",
                self.input_dim, self.lookback
            )));
        }
        for (e, edge) in self.skip_edges.iter().enumerate() {
            if edge.target <= edge.source {
                return Err(GraphError::SkipCycle {
                    index: e,
                    from: edge.source,
                    to: edge.target,
                });
            }
            if edge.target >= n {
                return Err(GraphError::Structure(format!(
                    "skip edge {e}: target {} out of range ({} layers)",
                    edge.target, n
                )));
            }
            let from = self.layers[edge.source].in_dim;
            let to = self.layers[edge.target].out_dim;
            match &edge.projection {
                None if from != to => {
                    return Err(GraphError::Structure(format!(
                        "skip edge {e}: identity projection needs matching dims, got {from} -> {to}"
                    )))
                }
                Some(p) if p.len() != from.saturating_mul(to) => {
                    return Err(GraphError::Shape {
                        layer: edge.target,
                        kind: "skip_edge",
                        field: "projection",
                        expected: from.saturating_mul(to),
                        got: p.len(),
                    })
                }
                Some(p) if p.iter().any(|x| !x.is_finite()) => {
                    return Err(GraphError::Structure(format!(
                        "skip edge {e}: non-finite projection entry"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::parameter_count).sum::<usize>()
            + self
                .skip_edges
                .iter()
                .map(|e| e.projection.as_ref().map_or(0, Vec::len))
                .sum::<usize>()
    }

    /// All trainable parameters, layer by layer (weights then bias), followed
    /// by explicit skip projections.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        for e in &self.skip_edges {
            if let Some(p) = &e.projection {
                out.extend_from_slice(p);
            }
        }
        out
    }

    /// Inverse of [`NetworkGraph::parameters`].
    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count(), "parameter vector length");
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
        for e in &mut self.skip_edges {
            if let Some(p) = &mut e.projection {
                for w in p.iter_mut() {
                    *w = it.next().unwrap();
                }
            }
        }
    }
}

/// The six models of the straight-line experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    MlpBottleneck,
    MlpLinear,
    LstmStandard,
    LstmLinear,
    GruStandard,
    GruLinear,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::MlpBottleneck,
        Variant::LstmStandard,
        Variant::GruStandard,
        Variant::MlpLinear,
        Variant::LstmLinear,
        Variant::GruLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::MlpBottleneck => "mlp_bottleneck",
            Variant::MlpLinear => "mlp_linear",
            Variant::LstmStandard => "lstm_standard",
            Variant::LstmLinear => "lstm_linear",
            Variant::GruStandard => "gru_standard",
            Variant::GruLinear => "gru_linear",
        }
    }

    /// Whether the variant uses the conventional sigmoidal activations.
    pub fn is_standard(self) -> bool {
        matches!(
            self,
            Variant::MlpBottleneck | Variant::LstmStandard | Variant::GruStandard
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| GraphError::Parse(format!("unknown model variant `{s}`")))
    }
}

pub const REFERENCE_LOOKBACK: usize = 10;
pub const REFERENCE_UNITS: usize = 10;

/// Uniform `[-√(1/fan_in), √(1/fan_in)]` initialisation; every layer draws from
/// its own ChaCha stream so layers are independent of each other's sizes.
fn init_layer(seed: u64, stream: u64, kind: LayerKind, in_dim: usize, out_dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let (rows, cols) = kind.weight_shape(in_dim, out_dim);
    let bound = (1.0 / cols.max(1) as f64).sqrt();
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..=bound)).collect() };
    let w = draw(rows * cols);
    let b = draw(kind.bias_len(out_dim));
    (w, b)
}

pub fn build_reference_model(variant: Variant, seed: u64) -> NetworkGraph {
    let lb = REFERENCE_LOOKBACK;
    let u = REFERENCE_UNITS;
    let layer = |stream: u64, kind: LayerKind, i: usize, o: usize| init_layer(seed, stream, kind, i, o);
    let (layers, input_dim) = match variant {
        Variant::MlpBottleneck | Variant::MlpLinear => {
            let (a1, a2) = if variant == Variant::MlpBottleneck {
                (ActivationKind::Tanh, ActivationKind::Logistic)
            } else {
                (ActivationKind::Identity, ActivationKind::Identity)
            };
            let (w0, b0) = layer(0, LayerKind::InputLinear, lb, 1);
            let (w1, b1) = layer(1, LayerKind::Dense, 1, 1);
            let (w2, b2) = layer(2, LayerKind::Dense, 1, 1);
            let (w3, b3) = layer(3, LayerKind::OutputLinear, 1, 1);
            (
                vec![
                    LayerSpec::input_linear(lb, 1, w0, b0),
                    LayerSpec::dense(1, 1, a1, w1, b1),
                    LayerSpec::dense(1, 1, a2, w2, b2),
                    LayerSpec::output_linear(1, 1, w3, b3),
                ],
                lb,
            )
        }
        _ => {
            let cand = if variant.is_standard() {
                ActivationKind::Tanh
            } else {
                ActivationKind::Identity
            };
            let kind = if matches!(variant, Variant::LstmStandard | Variant::LstmLinear) {
                LayerKind::LstmCell
            } else {
                LayerKind::GruCell
            };
            let (w0, b0) = layer(0, LayerKind::InputLinear, 1, 1);
            let (w1, b1) = layer(1, kind, 1, u);
            let (w2, b2) = layer(2, LayerKind::OutputLinear, u, 1);
            let cell = if kind == LayerKind::LstmCell {
                LayerSpec::lstm(1, u, cand, w1, b1)
            } else {
                LayerSpec::gru(1, u, cand, w1, b1)
            };
            (
                vec![
                    LayerSpec::input_linear(1, 1, w0, b0),
                    cell,
                    LayerSpec::output_linear(u, 1, w2, b2),
                ],
                1,
            )
        }
    };
    NetworkGraph::new(input_dim, 1, lb, layers, vec![]).expect("reference models are well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_bottleneck_architecture() {
        let g = build_reference_model(Variant::MlpBottleneck, 0);
        let kinds: Vec<_> = g
            .layers
            .iter()
            .map(|l| (l.kind, l.in_dim, l.out_dim, l.activation.kind))
            .collect();
        assert_eq!(
            kinds,
            vec![
                (LayerKind::InputLinear, 10, 1, ActivationKind::Identity),
                (LayerKind::Dense, 1, 1, ActivationKind::Tanh),
                (LayerKind::Dense, 1, 1, ActivationKind::Logistic),
                (LayerKind::OutputLinear, 1, 1, ActivationKind::Identity),
            ]
        );
    }

    #[test]
    fn recurrent_architectures() {
        let l = build_reference_model(Variant::LstmStandard, 0);
        let cell = &l.layers[1];
        assert_eq!(cell.kind, LayerKind::LstmCell);
        assert_eq!(cell.out_dim, 10);
        assert_eq!(cell.activation.kind, ActivationKind::Tanh);
        assert_eq!(cell.gate_activation.unwrap().kind, ActivationKind::Logistic);
        assert_eq!(cell.weights.len(), 40 * 11);

        let g = build_reference_model(Variant::GruLinear, 0);
        let cell = &g.layers[1];
        assert_eq!(cell.kind, LayerKind::GruCell);
        assert_eq!(cell.activation.kind, ActivationKind::Identity);
        assert_eq!(cell.gate_activation.unwrap().kind, ActivationKind::Logistic);
        assert_eq!(cell.bias.len(), 30);
    }

    #[test]
    fn seeded_init_is_reproducible_and_bounded() {
        for v in Variant::ALL {
            let a = build_reference_model(v, 7);
            let b = build_reference_model(v, 7);
            let pa: Vec<u64> = a.parameters().iter().map(|x| x.to_bits()).collect();
            let pb: Vec<u64> = b.parameters().iter().map(|x| x.to_bits()).collect();
            assert_eq!(pa, pb);
            assert_ne!(a.parameters(), build_reference_model(v, 8).parameters());
            for l in &a.layers {
                let (_, cols) = l.weight_shape();
                let bound = (1.0 / cols as f64).sqrt();
                assert!(l.weights.iter().chain(&l.bias).all(|w| w.abs() <= bound));
            }
        }
    }

    #[test]
    fn parameter_roundtrip() {
        let mut g = build_reference_model(Variant::GruStandard, 1);
        let p: Vec<f64> = (0..g.parameter_count()).map(|i| i as f64).collect();
        g.set_parameters(&p);
        assert_eq!(g.parameters(), p);
    }

    #[test]
    fn invariants_are_enforced() {
        let g = build_reference_model(Variant::MlpLinear, 0);

        let mut bad = g.clone();
        bad.layers[1].weights.push(1.0);
        assert!(matches!(
            bad.validate(),
            Err(GraphError::Shape { field: "weights", .. })
        ));

        let mut bad = g.clone();
        bad.layers.swap(0, 3);
        assert!(bad.validate().is_err());

        let mut bad = g.clone();
        bad.skip_edges.push(SkipEdge {
            source: 2,
            target: 2,
            projection: None,
        });
        assert!(matches!(bad.validate(), Err(GraphError::SkipCycle { .. })));

        let mut bad = g.clone();
        bad.layers[2] = LayerSpec::dense(2, 1, ActivationKind::Tanh, vec![0.0; 2], vec![0.0]);
        assert!(matches!(bad.validate(), Err(GraphError::DimChain { layer: 2, .. })));

        let mut bad = g;
        bad.layers[1].gate_activation = Some(ActivationSpec::builtin(ActivationKind::Logistic));
        assert!(bad.validate().is_err());
    }
}
