//! Full-batch training with mean squared error and Adam, plus the experiment
//! protocol for the reference models.

use std::fmt::Write as _;

use crate::analysis::{analyze, AnalysisReport, DomainDescriptor};
use crate::autodiff::{Tape, Var};
use crate::cells::{network_forward, network_forward_with, scalar_window, GraphParams, Ops, TapeOps};
use crate::dataset::{Pair, SequenceDataset};
use crate::error::TrainError;
use crate::graph::{build_reference_model, NetworkGraph, Variant};
use crate::optim::{adam_step, AdamMoments, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub graph: NetworkGraph,
    /// Training MSE of each epoch, measured before that epoch's update.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRow {
    pub t: usize,
    pub x_true: f64,
    pub x_pred: f64,
}

/// Records `mean((g(window) − target)²)` over `pairs` on the tape.
pub fn mse_on_tape(
    ops: &mut TapeOps<'_>,
    graph: &NetworkGraph,
    params: &GraphParams<Var>,
    pairs: &[Pair],
) -> Result<Var, TrainError> {
    let mut total = ops.lit(0.0);
    let mut count = 0usize;
    for p in pairs {
        let window: Vec<Vec<Var>> = p.window.iter().map(|&x| vec![ops.lit(x)]).collect();
        let pred = network_forward_with(ops, graph, params, &window, None)?;
        let target = ops.lit(p.target);
        for &y in &pred {
            let d = ops.sub(y, target);
            let sq = ops.mul(d, d);
            total = ops.add(total, sq);
            count += 1;
        }
    }
    if count == 0 {
        return Err(TrainError::EmptyTrainingSet);
    }
    let scale = ops.lit(1.0 / count as f64);
    Ok(ops.mul(total, scale))
}

/// Trains a copy of `graph` on the dataset's training pairs. Every epoch is one
/// full-batch gradient step; the recurrence is backpropagated through the whole
/// window.
pub fn train(
    graph: &NetworkGraph,
    dataset: &SequenceDataset,
    config: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    let pairs = dataset.train_pairs();
    if pairs.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut tape = Tape::new();
    let params = GraphParams::leaves(graph, &mut tape);
    let flat = params.flat();
    let checkpoint = tape.checkpoint();
    let mut values = graph.parameters();
    let mut moments = AdamMoments::zeros(values.len());
    let mut losses = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        for (&v, &x) in flat.iter().zip(&values) {
            tape.set_leaf(v, x).expect("parameters are leaves");
        }
        let loss = {
            let mut ops = TapeOps::new(&mut tape);
            mse_on_tape(&mut ops, graph, &params, &pairs)?
        };
        let loss_value = tape.value(loss);
        if !loss_value.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: loss_value,
            });
        }
        let grads = tape.backward(loss).expect("loss is on the tape").collect(&flat);
        tape.reset_grads();
        tape.truncate(checkpoint);
        adam_step(&mut values, &grads, &mut moments, config, epoch);
        if values.iter().any(|w| !w.is_finite()) {
            return Err(TrainError::Diverged { epoch, loss: f64::NAN });
        }
        losses.push(loss_value);
    }

    let mut trained = graph.clone();
    trained.set_parameters(&values);
    Ok(TrainedModel { graph: trained, losses })
}

/// One-step-ahead predictions for every window of the dataset.
pub fn predict(graph: &NetworkGraph, dataset: &SequenceDataset) -> Result<Vec<PredictionRow>, TrainError> {
    dataset
        .test_pairs()
        .into_iter()
        .map(|p| {
            let y = network_forward(graph, &scalar_window(&p.window))?;
            Ok(PredictionRow {
                t: p.t,
                x_true: p.target,
                x_pred: y[0],
            })
        })
        .collect()
}

/// Outcome of training one model under the experiment protocol.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub name: String,
    pub model: TrainedModel,
    pub predictions: Vec<PredictionRow>,
    /// Analysis of the trained graph against an unbounded surjective target.
    pub report: AnalysisReport,
}

impl ExperimentRun {
    pub fn max_abs_error(&self) -> f64 {
        self.predictions
            .iter()
            .map(|r| (r.x_pred - r.x_true).abs())
            .fold(0.0, f64::max)
    }

    pub fn error_at_target(&self, x_true: f64) -> Option<f64> {
        self.predictions
            .iter()
            .find(|r| r.x_true == x_true)
            .map(|r| (r.x_pred - r.x_true).abs())
    }

    /// `model,t,x_true,x_pred` rows with a header.
    pub fn predictions_csv(&self) -> String {
        let mut s = String::from("model,t,x_true,x_pred\n");
        for r in &self.predictions {
            writeln!(s, "{},{},{},{}", self.name, r.t, r.x_true, r.x_pred).unwrap();
        }
        s
    }

    /// `model,epoch,mse` rows with a header.
    pub fn losses_csv(&self) -> String {
        let mut s = String::from("model,epoch,mse\n");
        for (e, l) in self.model.losses.iter().enumerate() {
            writeln!(s, "{},{},{}", self.name, e + 1, l).unwrap();
        }
        s
    }
}

/// Trains an arbitrary graph and evaluates it on every window.
pub fn run_graph(
    name: &str,
    graph: &NetworkGraph,
    dataset: &SequenceDataset,
    config: &TrainConfig,
) -> Result<ExperimentRun, TrainError> {
    let model = train(graph, dataset, config)?;
    let predictions = predict(&model.graph, dataset)?;
    let report = analyze(&model.graph, &DomainDescriptor::unbounded(model.graph.output_dim), true);
    Ok(ExperimentRun {
        name: name.to_string(),
        model,
        predictions,
        report,
    })
}

/// Builds the reference model for `variant` (initialised from `config.seed`),
/// trains it and evaluates it.
pub fn run_experiment(
    variant: Variant,
    dataset: &SequenceDataset,
    config: &TrainConfig,
) -> Result<ExperimentRun, TrainError> {
    let graph = build_reference_model(variant, config.seed);
    run_graph(variant.name(), &graph, dataset, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_line;

    #[test]
    fn diverging_run_is_reported() {
        let mut g = build_reference_model(Variant::MlpLinear, 0);
        g.layers[0].weights = vec![1e200; 10];
        let err = train(&g, &generate_line(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, TrainError::Diverged { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn training_is_bit_reproducible() {
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let a = run_experiment(Variant::GruStandard, &generate_line(), &cfg).unwrap();
        let b = run_experiment(Variant::GruStandard, &generate_line(), &cfg).unwrap();
        assert_eq!(a.predictions_csv(), b.predictions_csv());
        assert_eq!(a.losses_csv(), b.losses_csv());
    }

    #[test]
    fn csv_layout() {
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let r = run_experiment(Variant::MlpLinear, &generate_line(), &cfg).unwrap();
        let p = r.predictions_csv();
        assert!(p.starts_with("model,t,x_true,x_pred\nmlp_linear,10,-10,"));
        assert_eq!(p.lines().count(), 32);
        assert_eq!(r.losses_csv().lines().count(), 3);
    }

    fn sample_variance(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    }

    #[test]
    fn mlp_linear_fits_the_line() {
        let r = run_experiment(Variant::MlpLinear, &generate_line(), &TrainConfig::default()).unwrap();
        assert!(r.max_abs_error() < 0.1, "{}", r.max_abs_error());
    }

    #[test]
    fn mlp_bottleneck_saturates_inside_certificate() {
        let r = run_experiment(Variant::MlpBottleneck, &generate_line(), &TrainConfig::default()).unwrap();
        let cert = r.report.network_output_interval.as_ref().unwrap();
        assert!(r.predictions.iter().all(|p| cert.contains(&[p.x_pred])));
        assert!(r.error_at_target(20.0).unwrap() >= 3.0);
    }

    #[test]
    fn lstm_standard_compresses_the_tail() {
        let r = run_experiment(Variant::LstmStandard, &generate_line(), &TrainConfig::default()).unwrap();
        let tail: Vec<_> = r.predictions.iter().filter(|p| p.x_true >= 15.0).collect();
        assert_eq!(tail.len(), 6);
        let pred: Vec<f64> = tail.iter().map(|p| p.x_pred).collect();
        let truth: Vec<f64> = tail.iter().map(|p| p.x_true).collect();
        let ratio = sample_variance(&pred) / sample_variance(&truth);
        assert!(ratio < 0.5, "variance ratio {ratio}");
    }
}
