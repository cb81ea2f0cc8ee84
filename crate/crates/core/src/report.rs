//! Human-readable and `key=value` renderings of analysis reports, and the
//! verdict diff printed after a rewrite.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::analysis::AnalysisReport;
use crate::graph::NetworkGraph;
use crate::interval::IntervalBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Machine,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "machine" => Ok(ReportFormat::Machine),
            _ => Err(format!("unknown format `{s}` (expected text or machine)")),
        }
    }
}

/// `[lo, hi]^d` when every coordinate agrees, the full product otherwise.
pub fn format_box(b: &IntervalBox) -> String {
    match b.0.first() {
        Some(first) if b.dim() > 1 && b.0.iter().all(|iv| iv == first) => format!("{first}^{}", b.dim()),
        _ => b.to_string(),
    }
}

fn format_opt_box(b: Option<&IntervalBox>) -> String {
    b.map_or_else(|| "-".to_string(), format_box)
}

fn join(xs: &[usize]) -> String {
    if xs.is_empty() {
        return "-".into();
    }
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn codomain(report: &AnalysisReport) -> &'static str {
    if report.target_bounded {
        "bounded"
    } else {
        "unbounded"
    }
}

pub fn render(graph: &NetworkGraph, report: &AnalysisReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(graph, report),
        ReportFormat::Machine => render_machine(graph, report),
    }
}

pub fn render_text(graph: &NetworkGraph, report: &AnalysisReport) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "network: {} layers, input_dim {}, output_dim {}, lookback {}, {} skip edges",
        graph.layers.len(),
        graph.input_dim,
        graph.output_dim,
        graph.lookback,
        graph.skip_edges.len()
    )
    .unwrap();
    writeln!(
        s,
        "target: {} codomain, surjective {}",
        codomain(report),
        report.target_surjective
    )
    .unwrap();
    writeln!(s).unwrap();
    let rows: Vec<[String; 6]> = graph
        .layers
        .iter()
        .zip(&report.per_layer)
        .map(|(l, v)| {
            let act = match &l.gate_activation {
                Some(g) => format!("{}/{}", l.activation.name(), g.name()),
                None => l.activation.name().to_string(),
            };
            [
                v.layer_index.to_string(),
                l.kind.name().to_string(),
                act,
                v.lipschitz.name().to_string(),
                v.image_bounded.to_string(),
                format_opt_box(v.certified_interval.as_ref()),
            ]
        })
        .collect();
    let header = ["layer", "kind", "activation", "lipschitz", "bounded", "certified"];
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut line = |cells: Vec<&str>| {
        let mut l = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i + 1 == cells.len() {
                l.push_str(c);
            } else {
                write!(l, "{c:<w$}  ").unwrap();
            }
        }
        writeln!(s, "{}", l.trim_end()).unwrap();
    };
    line(header.to_vec());
    for r in &rows {
        line(r.iter().map(String::as_str).collect());
    }
    writeln!(s).unwrap();
    writeln!(s, "bottleneck_layers: {}", join(&report.bottleneck_layers)).unwrap();
    writeln!(s, "network_image_bounded: {}", report.network_image_bounded).unwrap();
    writeln!(
        s,
        "network_output_interval: {}",
        format_opt_box(report.network_output_interval.as_ref())
    )
    .unwrap();
    if let Some(c) = report.certifying_bottleneck {
        writeln!(s, "certifying_bottleneck: {c}").unwrap();
    }
    writeln!(s, "epsilon_star: {}", report.epsilon_star.name()).unwrap();
    s
}

pub fn render_machine(graph: &NetworkGraph, report: &AnalysisReport) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: &dyn std::fmt::Display| writeln!(s, "{k}={v}").unwrap();
    kv("layers", &graph.layers.len());
    kv("target_bounded", &report.target_bounded);
    kv("target_surjective", &report.target_surjective);
    kv("bottleneck_layers", &join(&report.bottleneck_layers));
    kv("network_image_bounded", &report.network_image_bounded);
    kv(
        "network_output_interval",
        &format_opt_box(report.network_output_interval.as_ref()),
    );
    kv(
        "certifying_bottleneck",
        &report.certifying_bottleneck.map_or("-".to_string(), |c| c.to_string()),
    );
    kv("epsilon_star", &report.epsilon_star.name());
    for (l, v) in graph.layers.iter().zip(&report.per_layer) {
        let i = v.layer_index;
        kv(&format!("layer.{i}.kind"), &l.kind.name());
        kv(&format!("layer.{i}.activation"), &l.activation.name());
        kv(&format!("layer.{i}.lipschitz"), &v.lipschitz.name());
        kv(&format!("layer.{i}.image_bounded"), &v.image_bounded);
        kv(
            &format!("layer.{i}.certified_interval"),
            &format_opt_box(v.certified_interval.as_ref()),
        );
    }
    s
}

/// One `name: before → after` line per headline verdict, marked `(unchanged)`
/// when equal.
pub fn verdict_diff(before: &AnalysisReport, after: &AnalysisReport) -> String {
    let rows = [
        (
            "image_bounded",
            before.network_image_bounded.to_string(),
            after.network_image_bounded.to_string(),
        ),
        (
            "epsilon_star",
            before.epsilon_star.name().to_string(),
            after.epsilon_star.name().to_string(),
        ),
        (
            "bottleneck_layers",
            join(&before.bottleneck_layers),
            join(&after.bottleneck_layers),
        ),
    ];
    let mut s = String::new();
    for (name, b, a) in rows {
        let mark = if a == b { " (unchanged)" } else { "" };
        writeln!(s, "{name}: {b} → {a}{mark}").unwrap();
    }
    s
}
