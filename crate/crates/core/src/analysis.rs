//! Static detection of activation bottlenecks and certification of output bounds.
//!
//! The abstract domain is a box of closed intervals per coordinate, with
//! infinite endpoints as the "unbounded" top element. A layer's image is
//! bounded when its final activation has a bounded image, or when its input is
//! bounded and the layer is globally Lipschitz. Composition then gives the
//! network-level result: once some hidden layer has a bounded image, every
//! globally Lipschitz layer after it keeps the enclosure finite, so the network
//! output is bounded unless a non-Lipschitz layer or a skip edge carrying an
//! unbounded signal intervenes. A bounded network cannot approximate a
//! surjective target onto an unbounded codomain, so the maximum approximation
//! error is then infinite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::ActivationSpec;
use crate::cells::{network_forward_with, GraphParams, PlainOps};
use crate::error::AnalysisError;
use crate::graph::{LayerKind, LayerSpec, NetworkGraph};
use crate::interval::{Interval, IntervalBox};

/// Description of a domain `𝔻^d ⊆ ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDescriptor {
    pub dim: usize,
    pub bounded: bool,
    pub sample_box: Option<IntervalBox>,
}

impl DomainDescriptor {
    pub fn unbounded(dim: usize) -> Self {
        DomainDescriptor {
            dim,
            bounded: false,
            sample_box: None,
        }
    }

    /// Panics if the box has infinite endpoints.
    pub fn bounded(sample_box: IntervalBox) -> Self {
        assert!(sample_box.is_finite(), "a bounded domain needs a finite box");
        DomainDescriptor {
            dim: sample_box.dim(),
            bounded: true,
            sample_box: Some(sample_box),
        }
    }

    fn as_box(&self) -> IntervalBox {
        match (&self.sample_box, self.bounded) {
            (Some(b), true) => b.clone(),
            _ => IntervalBox::top(self.dim),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LipschitzClass {
    Globally,
    LocallyOnly,
    Unknown,
}

impl LipschitzClass {
    pub fn name(self) -> &'static str {
        match self {
            LipschitzClass::Globally => "globally",
            LipschitzClass::LocallyOnly => "locally_only",
            LipschitzClass::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerVerdict {
    pub layer_index: usize,
    pub image_bounded: bool,
    pub certified_interval: Option<IntervalBox>,
    pub lipschitz: LipschitzClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsilonStar {
    Infinite,
    Indeterminate,
}

impl EpsilonStar {
    pub fn name(self) -> &'static str {
        match self {
            EpsilonStar::Infinite => "infinite",
            EpsilonStar::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub per_layer: Vec<LayerVerdict>,
    pub bottleneck_layers: Vec<usize>,
    pub network_image_bounded: bool,
    pub network_output_interval: Option<IntervalBox>,
    pub epsilon_star: EpsilonStar,
    /// Last bottleneck layer when the network image is certified bounded.
    pub certifying_bottleneck: Option<usize>,
    pub target_bounded: bool,
    pub target_surjective: bool,
}

/// Non-decreasing with finite limits at both infinities.
pub fn is_sigmoidal(act: &ActivationSpec) -> bool {
    act.nondecreasing && act.limit_neg.is_some_and(f64::is_finite) && act.limit_pos.is_some_and(f64::is_finite)
}

/// Infinite maximum approximation error exactly when a bounded network faces a
/// surjective target with an unbounded codomain. Anything else (including the
/// case where the error set is empty) is left indeterminate.
pub fn epsilon_star(network_image_bounded: bool, target_bounded: bool, target_surjective: bool) -> EpsilonStar {
    if network_image_bounded && !target_bounded && target_surjective {
        EpsilonStar::Infinite
    } else {
        EpsilonStar::Indeterminate
    }
}

pub fn layer_lipschitz(layer: &LayerSpec) -> LipschitzClass {
    let lip = |a: &ActivationSpec| a.lipschitz.is_some();
    match layer.kind {
        LayerKind::InputLinear | LayerKind::OutputLinear => LipschitzClass::Globally,
        LayerKind::Dense | LayerKind::PointwiseActivation => {
            if lip(&layer.activation) {
                LipschitzClass::Globally
            } else {
                LipschitzClass::Unknown
            }
        }
        LayerKind::InverseSigmoid => LipschitzClass::LocallyOnly,
        LayerKind::LstmCell | LayerKind::GruCell => {
            let gate = layer.gate_activation.as_ref();
            // products of bounded Lipschitz factors stay Lipschitz; products of
            // unbounded ones do not
            let bounded_factors =
                layer.activation.image_bounds.is_some() && gate.is_some_and(|g| g.image_bounds.is_some());
            if bounded_factors && lip(&layer.activation) && gate.is_some_and(lip) {
                LipschitzClass::Globally
            } else {
                LipschitzClass::LocallyOnly
            }
        }
    }
}

fn verdict(layer_index: usize, out: IntervalBox, lipschitz: LipschitzClass) -> LayerVerdict {
    let bounded = out.is_finite();
    LayerVerdict {
        layer_index,
        image_bounded: bounded,
        certified_interval: bounded.then_some(out),
        lipschitz,
    }
}

/// Bounds of a recurrent cell's hidden output, independent of its input. The
/// LSTM cell state accumulates additively and is never bounded itself; only
/// `h = o ⊙ σ_c(c)` is. A GRU state is a convex combination of the previous
/// state (starting at 0) and the candidate, so it stays in the hull of the
/// candidate image and 0 when the gate image lies in `[0, 1]`.
pub fn lstm_gru_image_bounded(cell: &LayerSpec) -> LayerVerdict {
    let lipschitz = layer_lipschitz(cell);
    let top = IntervalBox::top(cell.out_dim);
    let gate = cell.gate_activation.and_then(|g| g.image_bounds);
    let cand = cell.activation.image_bounds;
    let out = match (cell.kind, gate, cand) {
        (LayerKind::LstmCell, Some(g), Some(a)) => IntervalBox::uniform(cell.out_dim, g.mul(a)),
        (LayerKind::GruCell, Some(g), Some(a)) if g.is_subset_of(&Interval::new(0.0, 1.0)) => {
            IntervalBox::uniform(cell.out_dim, a.hull(Interval::point(0.0)))
        }
        _ => top,
    };
    verdict(0, out, lipschitz)
}

fn transfer(layer: &LayerSpec, input: &IntervalBox) -> IntervalBox {
    let lipschitz = layer_lipschitz(layer);
    if layer.kind.is_recurrent() {
        return lstm_gru_image_bounded(layer)
            .certified_interval
            .unwrap_or_else(|| IntervalBox::top(layer.out_dim));
    }
    let pre = match layer.kind {
        LayerKind::PointwiseActivation | LayerKind::InverseSigmoid => input.clone(),
        _ => input.affine(&layer.weights, &layer.bias),
    };
    let out = match layer.kind {
        // not globally Lipschitz: no certificate from a bounded input
        LayerKind::InverseSigmoid => IntervalBox::top(layer.out_dim),
        _ => IntervalBox(pre.0.iter().map(|&iv| layer.activation.image_of(iv)).collect()),
    };
    let own_image_bounded = layer.kind != LayerKind::InverseSigmoid && layer.activation.image_bounds.is_some();
    if out.is_finite() && !own_image_bounded && lipschitz != LipschitzClass::Globally {
        return IntervalBox::top(layer.out_dim);
    }
    out
}

/// Image-boundedness of a single layer given its input domain.
pub fn layer_image_bounded(layer: &LayerSpec, input: &DomainDescriptor) -> LayerVerdict {
    verdict(0, transfer(layer, &input.as_box()), layer_lipschitz(layer))
}

fn skip_contribution(graph: &NetworkGraph, edge: usize, source_box: &IntervalBox) -> IntervalBox {
    let e = &graph.skip_edges[edge];
    match &e.projection {
        None => source_box.clone(),
        Some(p) => {
            let rows = graph.layers[e.target].out_dim;
            source_box.affine(p, &vec![0.0; rows])
        }
    }
}

/// Per-layer interval boxes (output of each layer including incoming skip
/// contributions) for the given input box.
pub fn propagate(graph: &NetworkGraph, input: &IntervalBox) -> Vec<IntervalBox> {
    let n = graph.layers.len();
    let mut in_boxes: Vec<IntervalBox> = Vec::with_capacity(n);
    let mut out_boxes: Vec<IntervalBox> = Vec::with_capacity(n);
    let mut current = input.clone();
    for (i, layer) in graph.layers.iter().enumerate() {
        in_boxes.push(current.clone());
        let mut out = transfer(layer, &current);
        for (e, edge) in graph.skip_edges.iter().enumerate() {
            if edge.target == i {
                out = out.add(&skip_contribution(graph, e, &in_boxes[edge.source]));
            }
        }
        out_boxes.push(out.clone());
        current = out;
    }
    out_boxes
}

/// Analyses the network against a target `f: 𝔻^n → 𝔻^m` described by its
/// codomain and whether it is surjective. The network input domain is taken
/// as unbounded.
pub fn analyze(graph: &NetworkGraph, target_codomain: &DomainDescriptor, target_surjective: bool) -> AnalysisReport {
    let boxes = propagate(graph, &IntervalBox::top(graph.input_dim));
    let per_layer: Vec<LayerVerdict> = boxes
        .into_iter()
        .enumerate()
        .map(|(i, b)| verdict(i, b, layer_lipschitz(&graph.layers[i])))
        .collect();
    let bottleneck_layers: Vec<usize> = graph.hidden_indices().filter(|&i| per_layer[i].image_bounded).collect();
    let last = per_layer.last().expect("graph has layers");
    let network_image_bounded = last.image_bounded;
    let network_output_interval = last.certified_interval.clone();
    AnalysisReport {
        certifying_bottleneck: if network_image_bounded {
            bottleneck_layers.last().copied()
        } else {
            None
        },
        epsilon_star: epsilon_star(network_image_bounded, target_codomain.bounded, target_surjective),
        per_layer,
        bottleneck_layers,
        network_image_bounded,
        network_output_interval,
        target_bounded: target_codomain.bounded,
        target_surjective,
    }
}

/// Monte-Carlo soundness check of a report: evaluates the network on `samples`
/// windows whose steps are drawn uniformly from `input_box` and counts the
/// samples where any layer with a certificate (or the network output) leaves
/// its certified interval.
pub fn empirical_bound_check(
    graph: &NetworkGraph,
    report: &AnalysisReport,
    samples: usize,
    input_box: &IntervalBox,
    seed: u64,
) -> Result<usize, AnalysisError> {
    if report.per_layer.len() != graph.layers.len() {
        return Err(AnalysisError::Mismatch(format!(
            "report covers {} layers, graph has {}",
            report.per_layer.len(),
            graph.layers.len()
        )));
    }
    for (v, l) in report.per_layer.iter().zip(&graph.layers) {
        if let Some(b) = &v.certified_interval {
            if b.dim() != l.out_dim {
                return Err(AnalysisError::Mismatch(format!(
                    "layer {} certificate has dimension {}, layer outputs {}",
                    v.layer_index,
                    b.dim(),
                    l.out_dim
                )));
            }
        }
    }
    if !report.network_image_bounded {
        return Err(AnalysisError::NotBounded);
    }
    let output_box = report
        .network_output_interval
        .as_ref()
        .ok_or(AnalysisError::NotBounded)?;
    if input_box.dim() != graph.step_dim() || !input_box.is_finite() {
        return Err(AnalysisError::Mismatch(format!(
            "input box must be finite with dimension {}, got {}",
            graph.step_dim(),
            input_box.dim()
        )));
    }
    let certs: Vec<Option<&IntervalBox>> = report.per_layer.iter().map(|v| v.certified_interval.as_ref()).collect();
    let params = GraphParams::from_graph(graph);
    let mut ops = PlainOps::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..samples {
        let window: Vec<Vec<f64>> = (0..graph.lookback)
            .map(|_| input_box.0.iter().map(|iv| rng.random_range(iv.lo..=iv.hi)).collect())
            .collect();
        let mut bad = false;
        let mut obs = |i: usize, out: &[f64]| {
            if let Some(c) = certs[i] {
                bad |= !c.contains(out);
            }
        };
        let y = network_forward_with(&mut ops, graph, &params, &window, Some(&mut obs))?;
        if bad || !output_box.contains(&y) {
            violations += 1;
        }
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::graph::{build_reference_model, SkipEdge, Variant};

    fn unbounded_target() -> DomainDescriptor {
        DomainDescriptor::unbounded(1)
    }

    #[test]
    fn sigmoidal_classification() {
        assert!(is_sigmoidal(&ActivationSpec::builtin(ActivationKind::Tanh)));
        assert!(is_sigmoidal(&ActivationSpec::builtin(ActivationKind::Logistic)));
        assert!(!is_sigmoidal(&ActivationSpec::builtin(ActivationKind::Relu)));
        assert!(!is_sigmoidal(&ActivationSpec::builtin(ActivationKind::Identity)));
    }

    #[test]
    fn layer_examples() {
        let tanh = LayerSpec::dense(2, 2, ActivationKind::Tanh, vec![3.0, -1.0, 0.5, 2.0], vec![0.0, 1.0]);
        let v = layer_image_bounded(&tanh, &DomainDescriptor::unbounded(2));
        assert!(v.image_bounded);
        assert_eq!(
            v.certified_interval.unwrap(),
            IntervalBox::uniform(2, Interval::new(-1.0, 1.0))
        );

        let out = LayerSpec::output_linear(1, 1, vec![2.0], vec![1.0]);
        let v = layer_image_bounded(
            &out,
            &DomainDescriptor::bounded(IntervalBox(vec![Interval::new(0.0, 1.0)])),
        );
        let iv = v.certified_interval.unwrap().0[0];
        assert!(iv.lo <= 1.0 && iv.hi >= 3.0);
        assert!((iv.lo - 1.0).abs() < 1e-9 && (iv.hi - 3.0).abs() < 1e-9);

        let id = LayerSpec::dense(1, 1, ActivationKind::Identity, vec![1.0], vec![0.0]);
        assert!(!layer_image_bounded(&id, &DomainDescriptor::unbounded(1)).image_bounded);
    }

    #[test]
    fn cell_verdicts() {
        let l = build_reference_model(Variant::LstmStandard, 0);
        let v = lstm_gru_image_bounded(&l.layers[1]);
        assert!(v.image_bounded);
        assert_eq!(
            v.certified_interval.unwrap(),
            IntervalBox::uniform(10, Interval::new(-1.0, 1.0))
        );
        assert!(!lstm_gru_image_bounded(&build_reference_model(Variant::LstmLinear, 0).layers[1]).image_bounded);
        let g = lstm_gru_image_bounded(&build_reference_model(Variant::GruStandard, 0).layers[1]);
        assert_eq!(
            g.certified_interval.unwrap(),
            IntervalBox::uniform(10, Interval::new(-1.0, 1.0))
        );
        assert!(!lstm_gru_image_bounded(&build_reference_model(Variant::GruLinear, 0).layers[1]).image_bounded);
    }

    #[test]
    fn reference_mlp_reports() {
        let r = analyze(
            &build_reference_model(Variant::MlpBottleneck, 0),
            &unbounded_target(),
            true,
        );
        assert_eq!(r.bottleneck_layers, vec![1, 2]);
        assert!(r.network_image_bounded);
        assert_eq!(r.epsilon_star, EpsilonStar::Infinite);
        assert_eq!(r.certifying_bottleneck, Some(2));

        let r = analyze(&build_reference_model(Variant::MlpLinear, 0), &unbounded_target(), true);
        assert!(r.bottleneck_layers.is_empty());
        assert_eq!(r.epsilon_star, EpsilonStar::Indeterminate);
    }

    #[test]
    fn skip_from_input_voids_bound() {
        let mut g = build_reference_model(Variant::MlpBottleneck, 0);
        g.skip_edges.push(SkipEdge {
            source: 0,
            target: 3,
            projection: Some(vec![0.1; 10]),
        });
        g.validate().unwrap();
        let r = analyze(&g, &unbounded_target(), true);
        assert_eq!(r.bottleneck_layers, vec![1, 2]);
        assert!(!r.network_image_bounded);
        assert_eq!(r.epsilon_star, EpsilonStar::Indeterminate);
    }

    #[test]
    fn inverse_sigmoid_is_not_certified() {
        let v = layer_image_bounded(
            &LayerSpec::inverse_sigmoid(1),
            &DomainDescriptor::bounded(IntervalBox(vec![Interval::new(0.2, 0.8)])),
        );
        assert!(!v.image_bounded);
        assert_eq!(v.lipschitz, LipschitzClass::LocallyOnly);
    }

    #[test]
    fn checker_errors() {
        let g = build_reference_model(Variant::MlpLinear, 0);
        let r = analyze(&g, &unbounded_target(), true);
        let b = IntervalBox::uniform(1, Interval::new(-1.0, 1.0));
        assert_eq!(empirical_bound_check(&g, &r, 10, &b, 0), Err(AnalysisError::NotBounded));
        let g2 = build_reference_model(Variant::MlpBottleneck, 0);
        let r2 = analyze(&g2, &unbounded_target(), true);
        assert!(matches!(
            empirical_bound_check(&build_reference_model(Variant::LstmStandard, 0), &r2, 10, &b, 0),
            Err(AnalysisError::Mismatch(_))
        ));
    }

    #[test]
    fn shrunk_certificate_is_caught() {
        let g = build_reference_model(Variant::MlpBottleneck, 0);
        let mut r = analyze(&g, &unbounded_target(), true);
        let shrink = |b: &mut IntervalBox| {
            for iv in &mut b.0 {
                let (m, h) = (iv.mid(), iv.width() / 200.0);
                *iv = Interval::new(m - h, m + h);
            }
        };
        shrink(r.network_output_interval.as_mut().unwrap());
        let b = IntervalBox::uniform(1, Interval::new(-1e6, 1e6));
        assert!(empirical_bound_check(&g, &r, 1000, &b, 0).unwrap() > 0);
    }
}
