//! The straight-line experiment end to end: train the reference variants,
//! write predictions, loss curves, analyzer reports and the two figure panels.
//!
//! Output files (all deterministic for fixed options):
//!
//! - `line.csv`: the dataset
//! - `predictions_<model>.csv`, `losses_<model>.csv`
//! - `report_<model>.txt`, `model_<model>.toml` (trained weights)
//! - `figure_bottleneck.csv`, `figure_no_bottleneck.csv` and their `.svg`
//! - `summary.csv`

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::{generate_line, SequenceDataset};
use crate::error::ExperimentError;
use crate::graph::Variant;
use crate::modelfile::to_toml_string;
use crate::optim::TrainConfig;
use crate::report::render_text;
use crate::train::{run_experiment, ExperimentRun};

#[derive(Debug, Clone, PartialEq)]
pub struct ReproduceOptions {
    pub config: TrainConfig,
    pub variants: Vec<Variant>,
    /// Train variants on separate threads.
    pub parallel: bool,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions {
            config: TrainConfig::default(),
            variants: Variant::ALL.to_vec(),
            parallel: true,
        }
    }
}

#[derive(Debug)]
pub struct ReproduceSummary {
    pub runs: Vec<ExperimentRun>,
    pub files: Vec<PathBuf>,
}

/// Trains the requested variants on the line dataset, in the order given.
pub fn train_variants(
    options: &ReproduceOptions,
    dataset: &SequenceDataset,
) -> Result<Vec<ExperimentRun>, ExperimentError> {
    let run = |v: Variant| {
        run_experiment(v, dataset, &options.config).map_err(|source| ExperimentError::Train {
            variant: v.name().to_string(),
            source,
        })
    };
    if options.parallel && options.variants.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = options.variants.iter().map(|&v| s.spawn(move || run(v))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training thread panicked"))
                .collect()
        })
    } else {
        options.variants.iter().map(|&v| run(v)).collect()
    }
}

fn write(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<(), ExperimentError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    files.push(path);
    Ok(())
}

/// Runs the experiment and writes every artifact into `out_dir` (created if
/// missing).
pub fn reproduce(out_dir: &Path, options: &ReproduceOptions) -> Result<ReproduceSummary, ExperimentError> {
    fs::create_dir_all(out_dir).map_err(|source| ExperimentError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let dataset = generate_line();
    let runs = train_variants(options, &dataset)?;
    let mut files = Vec::new();
    write(out_dir, "line.csv", &dataset.to_csv(), &mut files)?;
    for r in &runs {
        write(
            out_dir,
            &format!("predictions_{}.csv", r.name),
            &r.predictions_csv(),
            &mut files,
        )?;
        write(out_dir, &format!("losses_{}.csv", r.name), &r.losses_csv(), &mut files)?;
        write(
            out_dir,
            &format!("report_{}.txt", r.name),
            &render_text(&r.model.graph, &r.report),
            &mut files,
        )?;
        write(
            out_dir,
            &format!("model_{}.toml", r.name),
            &to_toml_string(&r.model.graph),
            &mut files,
        )?;
    }
    let (bounded, free): (Vec<&ExperimentRun>, Vec<&ExperimentRun>) =
        runs.iter().partition(|r| r.report.network_image_bounded);
    for (stem, panel, title) in [
        ("figure_bottleneck", &bounded, "models with an activation bottleneck"),
        ("figure_no_bottleneck", &free, "models without an activation bottleneck"),
    ] {
        write(out_dir, &format!("{stem}.csv"), &panel_csv(panel), &mut files)?;
        write(
            out_dir,
            &format!("{stem}.svg"),
            &panel_svg(&dataset, panel, title),
            &mut files,
        )?;
    }
    write(out_dir, "summary.csv", &summary_csv(&runs), &mut files)?;
    Ok(ReproduceSummary { runs, files })
}

/// `model,t,x_true,x_pred,cert_lo,cert_hi`; the certificate columns are empty
/// for models without a bounded image.
pub fn panel_csv(runs: &[&ExperimentRun]) -> String {
    let mut s = String::from("model,t,x_true,x_pred,cert_lo,cert_hi\n");
    for r in runs {
        let cert = r.report.network_output_interval.as_ref().map(|b| b.0[0]);
        for p in &r.predictions {
            let (lo, hi) = cert.map_or((String::new(), String::new()), |c| (c.lo.to_string(), c.hi.to_string()));
            writeln!(s, "{},{},{},{},{lo},{hi}", r.name, p.t, p.x_true, p.x_pred).unwrap();
        }
    }
    s
}

pub fn summary_csv(runs: &[ExperimentRun]) -> String {
    let mut s = String::from("model,max_abs_error,abs_error_at_20,image_bounded,epsilon_star,final_mse\n");
    for r in runs {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.name,
            r.max_abs_error(),
            r.error_at_target(20.0).map_or(String::new(), |e| e.to_string()),
            r.report.network_image_bounded,
            r.report.epsilon_star.name(),
            r.model.losses.last().copied().unwrap_or(f64::NAN)
        )
        .unwrap();
    }
    s
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Static line plot: ground truth, one polyline per model and the shaded
/// training range.
pub fn panel_svg(dataset: &SequenceDataset, runs: &[&ExperimentRun], title: &str) -> String {
    let (w, h, m) = (560.0, 360.0, 48.0);
    let values = dataset.values();
    let t_max = (values.len() - 1) as f64;
    let mut y_lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut y_hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for r in runs {
        for p in &r.predictions {
            if p.x_pred.is_finite() {
                y_lo = y_lo.min(p.x_pred);
                y_hi = y_hi.max(p.x_pred);
            }
        }
    }
    let px = |t: f64| m + (w - 2.0 * m) * t / t_max;
    let py = |y: f64| h - m - (h - 2.0 * m) * (y - y_lo) / (y_hi - y_lo).max(1e-9);
    let points = |pts: &mut dyn Iterator<Item = (f64, f64)>| {
        pts.map(|(t, y)| format!("{:.2},{:.2}", px(t), py(y)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    let train_t: Vec<f64> = dataset
        .points
        .iter()
        .filter(|(_, x)| dataset.train_range.contains(*x))
        .map(|&(t, _)| t as f64)
        .collect();
    if let (Some(&a), Some(&b)) = (train_t.first(), train_t.last()) {
        writeln!(
            s,
            r##"<rect x="{:.2}" y="{m}" width="{:.2}" height="{:.2}" fill="#eeeeee"/>"##,
            px(a),
            px(b) - px(a),
            h - 2.0 * m
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<line x1="{m}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        h - m,
        w - m,
        h - m
    )
    .unwrap();
    writeln!(
        s,
        r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{:.2}" stroke="black"/>"#,
        h - m
    )
    .unwrap();
    writeln!(s, r#"<text x="{m}" y="24">{title}</text>"#).unwrap();
    writeln!(s, r#"<text x="{:.2}" y="{:.2}">t</text>"#, w / 2.0, h - 12.0).unwrap();
    writeln!(s, r#"<text x="4" y="{:.2}">{y_hi:.1}</text>"#, m + 4.0).unwrap();
    writeln!(s, r#"<text x="4" y="{:.2}">{y_lo:.1}</text>"#, h - m).unwrap();
    let truth = points(&mut dataset.points.iter().map(|&(t, x)| (t as f64, x)));
    writeln!(
        s,
        r#"<polyline points="{truth}" fill="none" stroke="black" stroke-dasharray="4 3"/>"#
    )
    .unwrap();
    for (i, r) in runs.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let line = points(
            &mut r
                .predictions
                .iter()
                .filter(|p| p.x_pred.is_finite())
                .map(|p| (p.t as f64, p.x_pred)),
        );
        writeln!(
            s,
            r#"<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#,
            m + 8.0,
            m + 14.0 * (i as f64 + 1.0),
            r.name
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(variants: Vec<Variant>) -> ReproduceOptions {
        ReproduceOptions {
            config: TrainConfig {
                epochs: 3,
                ..TrainConfig::default()
            },
            variants,
            parallel: true,
        }
    }

    #[test]
    fn artifact_layout() {
        let dir = tempfile::tempdir().unwrap();
        let sum = reproduce(dir.path(), &quick(Variant::ALL.to_vec())).unwrap();
        let predictions = sum
            .files
            .iter()
            .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("predictions_"))
            .count();
        assert_eq!(predictions, 6);
        for f in [
            "figure_bottleneck.csv",
            "figure_no_bottleneck.csv",
            "figure_bottleneck.svg",
            "summary.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let panel = fs::read_to_string(dir.path().join("figure_bottleneck.csv")).unwrap();
        for v in ["mlp_bottleneck", "lstm_standard", "gru_standard"] {
            assert!(panel.contains(&format!("\n{v},")), "{v}");
        }
        let svg = fs::read_to_string(dir.path().join("figure_no_bottleneck.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
    }

    #[test]
    fn variant_filter() {
        let dir = tempfile::tempdir().unwrap();
        let sum = reproduce(dir.path(), &quick(vec![Variant::MlpLinear])).unwrap();
        assert_eq!(sum.runs.len(), 1);
        let n = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_str()
                    .unwrap()
                    .starts_with("predictions_")
            })
            .count();
        assert_eq!(n, 1);
        let panel = fs::read_to_string(dir.path().join("figure_bottleneck.csv")).unwrap();
        assert_eq!(panel.lines().count(), 1);
    }

    #[test]
    fn parallel_matches_sequential() {
        let d = generate_line();
        let mut o = quick(vec![Variant::GruStandard, Variant::LstmLinear]);
        let a = train_variants(&o, &d).unwrap();
        o.parallel = false;
        let b = train_variants(&o, &d).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.predictions_csv(), y.predictions_csv());
        }
    }
}
