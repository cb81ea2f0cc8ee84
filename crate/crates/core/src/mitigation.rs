//! Graph rewrites that remove an activation bottleneck: a skip edge around the
//! bounded block, replacing sigmoidal activations, or an inverse sigmoid after
//! the last bottleneck. Every rewrite returns a new, re-validated graph.

use std::fmt;
use std::str::FromStr;

use crate::activation::ActivationKind;
use crate::analysis::{analyze, is_sigmoidal, AnalysisReport, DomainDescriptor};
use crate::cells::{Ops, PlainOps};
use crate::error::MitigationError;
use crate::graph::{LayerSpec, NetworkGraph, SkipEdge, INVERSE_SIGMOID_CLAMP};
use crate::interval::Interval;

/// Activation slot of a layer. For recurrent cells `Main` is the shared
/// candidate/output activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Main,
    Gate,
}

impl Slot {
    pub fn name(self) -> &'static str {
        match self {
            Slot::Main => "main",
            Slot::Gate => "gate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Replacement {
    Relu,
    Identity,
}

impl Replacement {
    pub fn kind(self) -> ActivationKind {
        match self {
            Replacement::Relu => ActivationKind::Relu,
            Replacement::Identity => ActivationKind::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Skip,
    Swap,
    InverseSigmoid,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Skip, Strategy::Swap, Strategy::InverseSigmoid];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Skip => "skip",
            Strategy::Swap => "swap",
            Strategy::InverseSigmoid => "inverse-sigmoid",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s || (s == "inverse_sigmoid" && *k == Strategy::InverseSigmoid))
            .ok_or_else(|| format!("unknown strategy `{s}` (expected skip, swap or inverse-sigmoid)"))
    }
}

/// A rewritten graph with the analyses before and after the rewrite.
#[derive(Debug, Clone)]
pub struct Rewrite {
    pub graph: NetworkGraph,
    pub before: AnalysisReport,
    pub after: AnalysisReport,
}

fn unbounded_analysis(graph: &NetworkGraph) -> AnalysisReport {
    analyze(graph, &DomainDescriptor::unbounded(graph.output_dim), true)
}

/// `log(x / (1 − x))` with the argument clamped to `[1e-12, 1 − 1e-12]`.
pub fn inverse_sigmoid(x: f64) -> f64 {
    PlainOps::default().logit(x, INVERSE_SIGMOID_CLAMP)
}

/// Adds an additive skip edge around the bottleneck block containing
/// `bottleneck_index`. The edge starts at the input of the first layer of that
/// contiguous block (the first one whose input is not certified bounded) and
/// ends at the first layer after the last bottleneck. Dimensions that differ
/// get a trainable projection initialised to `1 / source_dim`.
pub fn add_skip_bypass(graph: &NetworkGraph, bottleneck_index: usize) -> Result<NetworkGraph, MitigationError> {
    let report = unbounded_analysis(graph);
    if report.bottleneck_layers.is_empty() {
        return Err(MitigationError::NoBottleneck);
    }
    if !report.bottleneck_layers.contains(&bottleneck_index) {
        return Err(MitigationError::NotABottleneck(bottleneck_index));
    }
    let mut source = bottleneck_index;
    while source > 0 && report.per_layer[source - 1].image_bounded {
        source -= 1;
    }
    let last = *report.bottleneck_layers.last().unwrap();
    let target = last + 1;
    let from = graph.layers[source].in_dim;
    let to = graph.layers[target].out_dim;
    let projection = (from != to).then(|| vec![1.0 / from as f64; from * to]);
    let mut g = graph.clone();
    g.skip_edges.push(SkipEdge {
        source,
        target,
        projection,
    });
    g.validate()?;
    Ok(g)
}

/// Replaces one sigmoidal activation. Gates are never rewritten.
pub fn swap_activation(
    graph: &NetworkGraph,
    layer_index: usize,
    replacement: Replacement,
    slot: Slot,
) -> Result<NetworkGraph, MitigationError> {
    let layer = graph
        .layers
        .get(layer_index)
        .ok_or_else(|| MitigationError::InvalidPosition {
            layer: layer_index,
            reason: format!("graph has {} layers", graph.layers.len()),
        })?;
    if slot == Slot::Gate {
        return Err(MitigationError::InvalidPosition {
            layer: layer_index,
            reason: "gate activations are not rewritten; target the candidate/output activation".into(),
        });
    }
    if !is_sigmoidal(&layer.activation) {
        return Err(MitigationError::NotSigmoidal {
            layer: layer_index,
            position: if layer.kind.is_recurrent() {
                "candidate/output"
            } else {
                "main"
            },
            activation: layer.activation.name(),
        });
    }
    let mut g = graph.clone();
    g.layers[layer_index].activation = crate::activation::ActivationSpec::builtin(replacement.kind());
    g.validate()?;
    Ok(g)
}

/// Replaces every sigmoidal main/candidate activation of a graph that has a
/// bottleneck.
pub fn swap_all_sigmoidal(graph: &NetworkGraph, replacement: Replacement) -> Result<NetworkGraph, MitigationError> {
    if unbounded_analysis(graph).bottleneck_layers.is_empty() {
        return Err(MitigationError::NoBottleneck);
    }
    let mut g = graph.clone();
    for i in 0..graph.layers.len() {
        if is_sigmoidal(&graph.layers[i].activation) {
            g = swap_activation(&g, i, replacement, Slot::Main)?;
        }
    }
    Ok(g)
}

/// Inserts an inverse-sigmoid layer directly after the last bottleneck. The
/// bottleneck's certified interval must lie strictly inside `(0, 1)` in every
/// coordinate.
pub fn append_inverse_sigmoid(graph: &NetworkGraph) -> Result<NetworkGraph, MitigationError> {
    let report = unbounded_analysis(graph);
    let &last = report.bottleneck_layers.last().ok_or(MitigationError::NoBottleneck)?;
    let cert = report.per_layer[last]
        .certified_interval
        .as_ref()
        .expect("bottleneck layers carry a certificate");
    let inside = |iv: &Interval| iv.lo > 0.0 && iv.hi < 1.0;
    if !cert.0.iter().all(inside) {
        return Err(MitigationError::InverseSigmoidDomain {
            layer: last,
            interval: cert.to_string(),
        });
    }
    let at = last + 1;
    let mut g = graph.clone();
    g.layers
        .insert(at, LayerSpec::inverse_sigmoid(graph.layers[last].out_dim));
    // a source names the input of a layer, a target its output
    for e in &mut g.skip_edges {
        if e.source > at {
            e.source += 1;
        }
        if e.target >= at {
            e.target += 1;
        }
    }
    g.validate()?;
    Ok(g)
}

/// Applies a strategy with its default choices: bypass from the first
/// bottleneck, swap every sigmoidal activation for identity, or inverse sigmoid
/// after the last bottleneck.
pub fn mitigate(graph: &NetworkGraph, strategy: Strategy) -> Result<Rewrite, MitigationError> {
    let before = unbounded_analysis(graph);
    let rewritten = match strategy {
        Strategy::Skip => {
            let &first = before.bottleneck_layers.first().ok_or(MitigationError::NoBottleneck)?;
            add_skip_bypass(graph, first)?
        }
        Strategy::Swap => swap_all_sigmoidal(graph, Replacement::Identity)?,
        Strategy::InverseSigmoid => append_inverse_sigmoid(graph)?,
    };
    let after = unbounded_analysis(&rewritten);
    Ok(Rewrite {
        graph: rewritten,
        before,
        after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::EpsilonStar;
    use crate::autodiff::logistic;
    use crate::cells::{network_forward_with, GraphParams};
    use crate::graph::{build_reference_model, LayerKind, Variant};

    fn mlp() -> NetworkGraph {
        build_reference_model(Variant::MlpBottleneck, 0)
    }

    #[test]
    fn every_strategy_flips_the_mlp_verdict() {
        for s in Strategy::ALL {
            let r = mitigate(&mlp(), s).unwrap();
            assert!(r.before.network_image_bounded, "{s}");
            assert_eq!(r.before.epsilon_star, EpsilonStar::Infinite);
            assert!(!r.after.network_image_bounded, "{s}");
            assert_eq!(r.after.epsilon_star, EpsilonStar::Indeterminate, "{s}");
            r.graph.validate().unwrap();
        }
    }

    #[test]
    fn bypass_spans_the_whole_block() {
        for idx in [1, 2] {
            let g = add_skip_bypass(&mlp(), idx).unwrap();
            assert_eq!(
                g.skip_edges,
                vec![SkipEdge {
                    source: 1,
                    target: 3,
                    projection: None
                }]
            );
            assert_eq!(g.parameter_count(), mlp().parameter_count());
        }
        assert_eq!(add_skip_bypass(&mlp(), 3), Err(MitigationError::NotABottleneck(3)));
        let lin = build_reference_model(Variant::MlpLinear, 0);
        assert_eq!(add_skip_bypass(&lin, 1), Err(MitigationError::NoBottleneck));
        assert!(matches!(
            mitigate(&lin, Strategy::Skip),
            Err(MitigationError::NoBottleneck)
        ));
    }

    #[test]
    fn bypass_with_projection() {
        let lstm = build_reference_model(Variant::LstmStandard, 0);
        let mut wide = lstm.clone();
        wide.layers[0] = LayerSpec::input_linear(1, 2, vec![0.5, -0.5], vec![0.0, 0.0]);
        wide.layers[1].in_dim = 2;
        wide.layers[1].weights = vec![0.1; 40 * 12];
        wide.validate().unwrap();
        let g = add_skip_bypass(&wide, 1).unwrap();
        assert_eq!(g.skip_edges[0].projection, Some(vec![0.5, 0.5]));
        assert_eq!(g.parameter_count(), wide.parameter_count() + 2);
        assert!(!unbounded_analysis(&g).network_image_bounded);
    }

    #[test]
    fn swapping_lstm_candidate_gives_the_linear_variant() {
        for (std, lin) in [
            (Variant::LstmStandard, Variant::LstmLinear),
            (Variant::GruStandard, Variant::GruLinear),
        ] {
            let swapped =
                swap_activation(&build_reference_model(std, 3), 1, Replacement::Identity, Slot::Main).unwrap();
            let mut reference = build_reference_model(lin, 3);
            reference.set_parameters(&swapped.parameters());
            assert_eq!(swapped, reference);
        }
    }

    #[test]
    fn swap_refusals() {
        let lstm = build_reference_model(Variant::LstmStandard, 0);
        assert!(matches!(
            swap_activation(&lstm, 1, Replacement::Relu, Slot::Gate),
            Err(MitigationError::InvalidPosition { layer: 1, .. })
        ));
        assert!(matches!(
            swap_activation(&lstm, 0, Replacement::Relu, Slot::Main),
            Err(MitigationError::NotSigmoidal { layer: 0, .. })
        ));
        assert!(matches!(
            swap_activation(&lstm, 7, Replacement::Relu, Slot::Main),
            Err(MitigationError::InvalidPosition { layer: 7, .. })
        ));
    }

    #[test]
    fn single_swap_keeps_the_other_bottleneck() {
        let g = swap_activation(&mlp(), 1, Replacement::Relu, Slot::Main).unwrap();
        let r = unbounded_analysis(&g);
        assert_eq!(r.bottleneck_layers, vec![2]);
        assert!(r.network_image_bounded);
        let all = swap_all_sigmoidal(&mlp(), Replacement::Identity).unwrap();
        assert!(!unbounded_analysis(&all).network_image_bounded);
        assert_eq!(all.parameter_count(), mlp().parameter_count());
    }

    #[test]
    fn inverse_sigmoid_values() {
        assert_eq!(inverse_sigmoid(0.5), 0.0);
        for i in 0..=600 {
            let x = -30.0 + i as f64 * 0.1;
            let p = logistic(x);
            let y = inverse_sigmoid(p);
            if p < INVERSE_SIGMOID_CLAMP || 1.0 - p < INVERSE_SIGMOID_CLAMP {
                // |x| > 27.63: the argument clamp pins the result
                let pinned = if x < 0.0 {
                    INVERSE_SIGMOID_CLAMP
                } else {
                    1.0 - INVERSE_SIGMOID_CLAMP
                };
                assert_eq!(y, (pinned / (1.0 - pinned)).ln(), "{x}");
            } else if x <= 15.0 {
                assert!((y - x).abs() < 1e-9, "{x}: {y}");
            } else {
                // p is within half an ulp of the true value, and 1 − p carries
                // that error relative to a tiny number
                let tol = f64::EPSILON / (1.0 - p);
                assert!((y - x).abs() <= tol, "{x}: {y}, tol {tol}");
            }
        }
    }

    #[test]
    fn inverse_sigmoid_placement_and_clamping() {
        let g = append_inverse_sigmoid(&mlp()).unwrap();
        let kinds: Vec<_> = g.layers.iter().map(|l| l.kind).collect();
        assert_eq!(
            kinds,
            vec![
                LayerKind::InputLinear,
                LayerKind::Dense,
                LayerKind::Dense,
                LayerKind::InverseSigmoid,
                LayerKind::OutputLinear
            ]
        );
        assert_eq!(g.parameter_count(), mlp().parameter_count());

        let mut ops = PlainOps::default();
        let params = GraphParams::from_graph(&g);
        let window: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64]).collect();
        network_forward_with(&mut ops, &g, &params, &window, None).unwrap();
        assert_eq!(ops.clamp_events, 0);

        let mut hot = g.clone();
        hot.layers[2].bias = vec![100.0];
        let params = GraphParams::from_graph(&hot);
        let y = network_forward_with(&mut ops, &hot, &params, &window, None).unwrap();
        assert!(y[0].is_finite());
        assert_eq!(ops.clamp_events, 1);
    }

    #[test]
    fn inverse_sigmoid_refused_after_tanh() {
        let err = append_inverse_sigmoid(&build_reference_model(Variant::LstmStandard, 0)).unwrap_err();
        assert!(matches!(err, MitigationError::InverseSigmoidDomain { layer: 1, .. }));
        assert!(err.to_string().contains("[-1"), "{err}");
        assert!(matches!(
            append_inverse_sigmoid(&build_reference_model(Variant::MlpLinear, 0)),
            Err(MitigationError::NoBottleneck)
        ));
    }

    #[test]
    fn inverse_sigmoid_shifts_skip_edges() {
        let mut g = mlp();
        g.layers
            .insert(3, LayerSpec::dense(1, 1, ActivationKind::Relu, vec![1.0], vec![0.0]));
        g.skip_edges.push(SkipEdge {
            source: 3,
            target: 4,
            projection: None,
        });
        g.validate().unwrap();
        let r = append_inverse_sigmoid(&g).unwrap();
        assert_eq!(r.layers[4].kind, LayerKind::InverseSigmoid);
        assert_eq!((r.skip_edges[0].source, r.skip_edges[0].target), (3, 5));
    }

    #[test]
    fn strategy_names() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("drop".parse::<Strategy>().is_err());
    }
}
