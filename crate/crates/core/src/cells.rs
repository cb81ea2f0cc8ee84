//! Forward passes for the layers of a [`NetworkGraph`].
//!
//! All layer math is written once against the [`Ops`] trait and runs either on
//! plain `f64` ([`PlainOps`]) or on an autodiff [`Tape`] ([`TapeOps`]).

use crate::activation::ActivationKind;
use crate::autodiff::{logistic, Tape, Var};
use crate::error::ForwardError;
use crate::graph::{LayerKind, LayerSpec, NetworkGraph, INVERSE_SIGMOID_CLAMP};

/// Scalar arithmetic backend.
pub trait Ops {
    type V: Copy;

    fn lit(&mut self, x: f64) -> Self::V;
    fn value(&self, v: Self::V) -> f64;
    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn act(&mut self, kind: ActivationKind, a: Self::V) -> Self::V;
    /// `b + Σ w_j x_j`
    fn affine(&mut self, w: &[Self::V], x: &[Self::V], b: Self::V) -> Self::V;
    /// `log(x / (1 - x))` on `x` clamped to `[eps, 1 - eps]`.
    fn logit(&mut self, a: Self::V, eps: f64) -> Self::V;
}

/// Plain floating-point evaluation.
#[derive(Debug, Default, Clone)]
pub struct PlainOps {
    /// Number of inverse-sigmoid arguments that had to be clamped.
    pub clamp_events: usize,
}

impl Ops for PlainOps {
    type V = f64;

    fn lit(&mut self, x: f64) -> f64 {
        x
    }
    fn value(&self, v: f64) -> f64 {
        v
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn act(&mut self, kind: ActivationKind, a: f64) -> f64 {
        match kind {
            ActivationKind::Logistic => logistic(a),
            k => k.eval(a),
        }
    }
    fn affine(&mut self, w: &[f64], x: &[f64], b: f64) -> f64 {
        w.iter().zip(x).fold(b, |acc, (w, x)| acc + w * x)
    }
    fn logit(&mut self, a: f64, eps: f64) -> f64 {
        let c = a.clamp(eps, 1.0 - eps);
        if c != a || a.is_nan() {
            self.clamp_events += 1;
        }
        (c / (1.0 - c)).ln()
    }
}

/// Evaluation that records every operation on a tape.
pub struct TapeOps<'t> {
    pub tape: &'t mut Tape,
    pub clamp_events: usize,
}

impl<'t> TapeOps<'t> {
    pub fn new(tape: &'t mut Tape) -> Self {
        TapeOps { tape, clamp_events: 0 }
    }
}

impl Ops for TapeOps<'_> {
    type V = Var;

    fn lit(&mut self, x: f64) -> Var {
        self.tape.constant(x)
    }
    fn value(&self, v: Var) -> f64 {
        self.tape.value(v)
    }
    fn add(&mut self, a: Var, b: Var) -> Var {
        self.tape.add(a, b)
    }
    fn sub(&mut self, a: Var, b: Var) -> Var {
        self.tape.sub(a, b)
    }
    fn mul(&mut self, a: Var, b: Var) -> Var {
        self.tape.mul(a, b)
    }
    fn act(&mut self, kind: ActivationKind, a: Var) -> Var {
        match kind {
            ActivationKind::Tanh => self.tape.tanh(a),
            ActivationKind::Logistic => self.tape.logistic(a),
            ActivationKind::Relu => self.tape.relu(a),
            ActivationKind::Identity => a,
        }
    }
    fn affine(&mut self, w: &[Var], x: &[Var], b: Var) -> Var {
        self.tape
            .dot_bias(w, x, Some(b))
            .expect("affine operands are shape-checked by the caller")
    }
    fn logit(&mut self, a: Var, eps: f64) -> Var {
        let (v, clamped) = self.tape.logit_clamped(a, eps);
        self.clamp_events += clamped as usize;
        v
    }
}

/// Per-layer parameters expressed in a backend's value type.
#[derive(Debug, Clone)]
pub struct LayerParams<V> {
    pub weights: Vec<V>,
    pub bias: Vec<V>,
}

/// All parameters of a graph in a backend's value type.
#[derive(Debug, Clone)]
pub struct GraphParams<V> {
    pub layers: Vec<LayerParams<V>>,
    pub skips: Vec<Option<Vec<V>>>,
}

impl GraphParams<f64> {
    pub fn from_graph(g: &NetworkGraph) -> Self {
        GraphParams {
            layers: g
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
            skips: g.skip_edges.iter().map(|e| e.projection.clone()).collect(),
        }
    }
}

impl GraphParams<Var> {
    /// Parameters as leaves of `tape`, in [`NetworkGraph::parameters`] order.
    pub fn leaves(g: &NetworkGraph, tape: &mut Tape) -> Self {
        let layers = g
            .layers
            .iter()
            .map(|l| LayerParams {
                weights: tape.leaves(&l.weights),
                bias: tape.leaves(&l.bias),
            })
            .collect();
        let skips = g
            .skip_edges
            .iter()
            .map(|e| e.projection.as_ref().map(|p| tape.leaves(p)))
            .collect();
        GraphParams { layers, skips }
    }

    pub fn flat(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        for p in self.skips.iter().flatten() {
            out.extend_from_slice(p);
        }
        out
    }
}

/// Hidden state of a recurrent cell; `cell` is present for LSTM only.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState<V> {
    pub hidden: Vec<V>,
    pub cell: Option<Vec<V>>,
}

impl RecurrentState<f64> {
    pub fn zeros(layer: &LayerSpec) -> Self {
        RecurrentState {
            hidden: vec![0.0; layer.out_dim],
            cell: (layer.kind == LayerKind::LstmCell).then(|| vec![0.0; layer.out_dim]),
        }
    }
}

fn zero_state<O: Ops>(ops: &mut O, layer: &LayerSpec) -> RecurrentState<O::V> {
    let z = ops.lit(0.0);
    RecurrentState {
        hidden: vec![z; layer.out_dim],
        cell: (layer.kind == LayerKind::LstmCell).then(|| vec![z; layer.out_dim]),
    }
}

fn check_input(index: usize, layer: &LayerSpec, got: usize) -> Result<(), ForwardError> {
    if got != layer.in_dim {
        return Err(ForwardError::LayerInput {
            layer: index,
            expected: layer.in_dim,
            got,
        });
    }
    Ok(())
}

/// `σ(W x + b)` for dense and linear layers, `σ(x)` for pointwise layers and
/// the clamped logit for inverse-sigmoid layers.
pub fn feedforward_with<O: Ops>(ops: &mut O, layer: &LayerSpec, p: &LayerParams<O::V>, x: &[O::V]) -> Vec<O::V> {
    match layer.kind {
        LayerKind::PointwiseActivation => x.iter().map(|&v| ops.act(layer.activation.kind, v)).collect(),
        LayerKind::InverseSigmoid => {
            let eps = layer.extra.get("clamp_eps").copied().unwrap_or(INVERSE_SIGMOID_CLAMP);
            x.iter().map(|&v| ops.logit(v, eps)).collect()
        }
        _ => {
            let cols = layer.in_dim;
            (0..layer.out_dim)
                .map(|r| {
                    let z = ops.affine(&p.weights[r * cols..(r + 1) * cols], x, p.bias[r]);
                    ops.act(layer.activation.kind, z)
                })
                .collect()
        }
    }
}

fn gate_rows<O: Ops>(
    ops: &mut O,
    p: &LayerParams<O::V>,
    rows: std::ops::Range<usize>,
    cols: usize,
    xh: &[O::V],
    act: ActivationKind,
) -> Vec<O::V> {
    rows.map(|r| {
        let z = ops.affine(&p.weights[r * cols..(r + 1) * cols], xh, p.bias[r]);
        ops.act(act, z)
    })
    .collect()
}

/// One LSTM step: gates `i, f, o`, candidate `g̃`, `c' = f⊙c + i⊙g̃`,
/// `h' = o ⊙ σ_c(c')`.
pub fn lstm_step_with<O: Ops>(
    ops: &mut O,
    layer: &LayerSpec,
    p: &LayerParams<O::V>,
    x: &[O::V],
    state: &RecurrentState<O::V>,
) -> RecurrentState<O::V> {
    let u = layer.out_dim;
    let cols = layer.in_dim + u;
    let gate = layer.gate_activation.map_or(ActivationKind::Logistic, |a| a.kind);
    let cand = layer.activation.kind;
    let xh: Vec<O::V> = x.iter().chain(&state.hidden).copied().collect();
    let i = gate_rows(ops, p, 0..u, cols, &xh, gate);
    let f = gate_rows(ops, p, u..2 * u, cols, &xh, gate);
    let g = gate_rows(ops, p, 2 * u..3 * u, cols, &xh, cand);
    let o = gate_rows(ops, p, 3 * u..4 * u, cols, &xh, gate);
    let c_prev = state.cell.as_ref().expect("LSTM state carries a cell vector");
    let mut c = Vec::with_capacity(u);
    let mut h = Vec::with_capacity(u);
    for k in 0..u {
        let fc = ops.mul(f[k], c_prev[k]);
        let ig = ops.mul(i[k], g[k]);
        let ck = ops.add(fc, ig);
        let a = ops.act(cand, ck);
        h.push(ops.mul(o[k], a));
        c.push(ck);
    }
    RecurrentState {
        hidden: h,
        cell: Some(c),
    }
}

/// One GRU step: `z, r` gates, `h̃ = σ_c(W_n [x, r⊙h] + b_n)`,
/// `h' = (1 − z)⊙h̃ + z⊙h`.
pub fn gru_step_with<O: Ops>(
    ops: &mut O,
    layer: &LayerSpec,
    p: &LayerParams<O::V>,
    x: &[O::V],
    state: &RecurrentState<O::V>,
) -> RecurrentState<O::V> {
    let u = layer.out_dim;
    let cols = layer.in_dim + u;
    let gate = layer.gate_activation.map_or(ActivationKind::Logistic, |a| a.kind);
    let xh: Vec<O::V> = x.iter().chain(&state.hidden).copied().collect();
    let z = gate_rows(ops, p, 0..u, cols, &xh, gate);
    let r = gate_rows(ops, p, u..2 * u, cols, &xh, gate);
    let mut xrh: Vec<O::V> = x.to_vec();
    for k in 0..u {
        xrh.push(ops.mul(r[k], state.hidden[k]));
    }
    let n = gate_rows(ops, p, 2 * u..3 * u, cols, &xrh, layer.activation.kind);
    // h̃ + z (h − h̃) keeps |h'| <= max(|h̃|, |h|) under rounding
    let h = (0..u)
        .map(|k| {
            let d = ops.sub(state.hidden[k], n[k]);
            let zd = ops.mul(z[k], d);
            ops.add(n[k], zd)
        })
        .collect();
    RecurrentState { hidden: h, cell: None }
}

/// Observer for intermediate layer outputs: `(layer index, output)`. For the
/// per-step part of a recurrent graph it is called once per time step.
pub type Observer<'a, V> = &'a mut dyn FnMut(usize, &[V]);

fn apply_skips<O: Ops>(
    ops: &mut O,
    graph: &NetworkGraph,
    params: &GraphParams<O::V>,
    target: usize,
    inputs: &[Vec<O::V>],
    out: &mut [O::V],
) {
    for (e, edge) in graph.skip_edges.iter().enumerate() {
        if edge.target != target {
            continue;
        }
        let src = &inputs[edge.source];
        match &params.skips[e] {
            None => {
                for (o, &s) in out.iter_mut().zip(src) {
                    *o = ops.add(*o, s);
                }
            }
            Some(p) => {
                let cols = src.len();
                let zero = ops.lit(0.0);
                for (k, o) in out.iter_mut().enumerate() {
                    let proj = ops.affine(&p[k * cols..(k + 1) * cols], src, zero);
                    *o = ops.add(*o, proj);
                }
            }
        }
    }
}

fn check_window<V>(graph: &NetworkGraph, window: &[Vec<V>]) -> Result<(), ForwardError> {
    if window.len() != graph.lookback {
        return Err(ForwardError::WindowLength {
            expected: graph.lookback,
            got: window.len(),
        });
    }
    let d = graph.step_dim();
    for (step, x) in window.iter().enumerate() {
        if x.len() != d {
            return Err(ForwardError::StepDim {
                step,
                expected: d,
                got: x.len(),
            });
        }
    }
    Ok(())
}

/// Runs the whole network on one window.
///
/// Recurrent graphs unroll every layer up to and including the cell over the
/// window from a zero state and feed the final hidden state onward. Feed-forward
/// graphs see the flattened window as a single input vector.
pub fn network_forward_with<O: Ops>(
    ops: &mut O,
    graph: &NetworkGraph,
    params: &GraphParams<O::V>,
    window: &[Vec<O::V>],
    mut observe: Option<Observer<'_, O::V>>,
) -> Result<Vec<O::V>, ForwardError> {
    check_window(graph, window)?;
    let n = graph.layers.len();
    let mut inputs: Vec<Vec<O::V>> = vec![Vec::new(); n];
    let mut emit = |i: usize, v: &[O::V]| {
        if let Some(f) = observe.as_mut() {
            f(i, v)
        }
    };

    let (mut current, start) = match graph.recurrent_index() {
        None => (window.iter().flatten().copied().collect::<Vec<_>>(), 0),
        Some(c) => {
            let cell = &graph.layers[c];
            let mut state = zero_state(ops, cell);
            for x in window {
                let mut cur = x.clone();
                for i in 0..=c {
                    let layer = &graph.layers[i];
                    check_input(i, layer, cur.len())?;
                    inputs[i] = cur.clone();
                    let mut out = if i == c {
                        state = match layer.kind {
                            LayerKind::LstmCell => lstm_step_with(ops, layer, &params.layers[i], &cur, &state),
                            _ => gru_step_with(ops, layer, &params.layers[i], &cur, &state),
                        };
                        state.hidden.clone()
                    } else {
                        feedforward_with(ops, layer, &params.layers[i], &cur)
                    };
                    apply_skips(ops, graph, params, i, &inputs, &mut out);
                    emit(i, &out);
                    cur = out;
                }
            }
            // skip edges into the cell would alter its emitted output; the hidden
            // state itself is what flows onward
            let mut last = state.hidden.clone();
            apply_skips(ops, graph, params, c, &inputs, &mut last);
            (last, c + 1)
        }
    };

    for i in start..n {
        let layer = &graph.layers[i];
        check_input(i, layer, current.len())?;
        inputs[i] = current.clone();
        let mut out = feedforward_with(ops, layer, &params.layers[i], &current);
        apply_skips(ops, graph, params, i, &inputs, &mut out);
        emit(i, &out);
        current = out;
    }
    Ok(current)
}

pub fn dense_forward(layer: &LayerSpec, x: &[f64]) -> Result<Vec<f64>, ForwardError> {
    check_input(0, layer, x.len())?;
    let p = LayerParams {
        weights: layer.weights.clone(),
        bias: layer.bias.clone(),
    };
    Ok(feedforward_with(&mut PlainOps::default(), layer, &p, x))
}

fn check_recurrent(layer: &LayerSpec, x: &[f64], state: &RecurrentState<f64>) -> Result<(), ForwardError> {
    check_input(0, layer, x.len())?;
    let bad_cell = match (&state.cell, layer.kind) {
        (Some(c), LayerKind::LstmCell) => c.len() != layer.out_dim,
        (None, LayerKind::LstmCell) => true,
        _ => false,
    };
    if state.hidden.len() != layer.out_dim || bad_cell {
        return Err(ForwardError::LayerInput {
            layer: 0,
            expected: layer.out_dim,
            got: state.hidden.len(),
        });
    }
    Ok(())
}

/// Returns `(output, next state)`; the output is the new hidden vector.
pub fn lstm_step(
    layer: &LayerSpec,
    x: &[f64],
    state: &RecurrentState<f64>,
) -> Result<(Vec<f64>, RecurrentState<f64>), ForwardError> {
    check_recurrent(layer, x, state)?;
    let p = LayerParams {
        weights: layer.weights.clone(),
        bias: layer.bias.clone(),
    };
    let s = lstm_step_with(&mut PlainOps::default(), layer, &p, x, state);
    Ok((s.hidden.clone(), s))
}

pub fn gru_step(
    layer: &LayerSpec,
    x: &[f64],
    state: &RecurrentState<f64>,
) -> Result<(Vec<f64>, RecurrentState<f64>), ForwardError> {
    check_recurrent(layer, x, state)?;
    let p = LayerParams {
        weights: layer.weights.clone(),
        bias: layer.bias.clone(),
    };
    let s = gru_step_with(&mut PlainOps::default(), layer, &p, x, state);
    Ok((s.hidden.clone(), s))
}

/// Prediction for one window of `lookback` steps.
pub fn network_forward(graph: &NetworkGraph, window: &[Vec<f64>]) -> Result<Vec<f64>, ForwardError> {
    let params = GraphParams::from_graph(graph);
    network_forward_with(&mut PlainOps::default(), graph, &params, window, None)
}

/// Converts a scalar series window into the `lookback × 1` step layout.
pub fn scalar_window(values: &[f64]) -> Vec<Vec<f64>> {
    values.iter().map(|&v| vec![v]).collect()
}
