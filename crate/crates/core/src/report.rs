//! Plot-ready CSV datasets and a markdown summary for one run.
//!
//! Output files:
//!
//! - `scatter_<model>.csv`: per-newspaper means and stds plus the global mean.
//! - `heatmap_<model>.csv`: 441 rows of `econ_bin,dem_bin,count`.
//! - `boxplot_economic.csv`, `boxplot_democracy.csv`: per-newspaper stds.
//! - `disagreement.csv`: mean distance per model pair.
//! - `agreement.csv`: label verdict per model and newspaper.
//! - `report.md`: the summary, linking each CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    dispersion_distribution, global_mean, heatmap, integer_pair_fraction, newspaper_means,
    pairwise_model_disagreement, sign_agreement_with_labels, AgreementReport, Disagreement, Dispersion, HeatmapGrid,
    NewspaperSummary, CENTRE_BAND,
};
use crate::registry::NewspaperSource;
use crate::score::Axis;
use crate::store::{Evaluation, EvaluationFilter, RunStore, StoreError, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model_id: String,
    pub evaluations: usize,
    pub scatter: Vec<NewspaperSummary>,
    pub global_mean: Option<(f64, f64)>,
    pub heatmap: HeatmapGrid,
    pub log_scale: bool,
    pub dispersion: Vec<Dispersion>,
    pub agreement: AgreementReport,
    pub integer_pair_fraction: Option<f64>,
    pub total_cost: Decimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema: u32,
    pub run_id: String,
    pub models: Vec<ModelReport>,
    pub disagreement: Disagreement,
    pub assessments: usize,
}

impl ReportBundle {
    pub fn model(&self, id: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.model_id == id)
    }
}

/// Builds the bundle from evaluations already in memory. Models listed in
/// `model_ids` always get a section; models found only in `evals` follow in
/// id order.
pub fn bundle_from_evaluations(
    run_id: &str,
    model_ids: &[String],
    evals: &[Evaluation],
    sources: &[NewspaperSource],
    costs: &BTreeMap<String, Decimal>,
) -> ReportBundle {
    let mut by_model: BTreeMap<String, Vec<Evaluation>> = BTreeMap::new();
    for e in evals {
        by_model.entry(e.model_id.clone()).or_default().push(e.clone());
    }
    let mut order: Vec<String> = model_ids.to_vec();
    for m in by_model.keys() {
        if !order.contains(m) {
            order.push(m.clone());
        }
    }
    let models = order
        .iter()
        .map(|m| {
            let evals = by_model.get(m).map(Vec::as_slice).unwrap_or_default();
            let scatter = newspaper_means(evals).expect("grouped by model");
            ModelReport {
                model_id: m.clone(),
                evaluations: evals.len(),
                global_mean: global_mean(&scatter).ok(),
                heatmap: heatmap(m, evals).expect("grouped by model"),
                log_scale: false,
                dispersion: Axis::BOTH.iter().map(|a| dispersion_distribution(&scatter, *a)).collect(),
                agreement: sign_agreement_with_labels(&scatter, sources, CENTRE_BAND),
                integer_pair_fraction: integer_pair_fraction(evals),
                total_cost: costs.get(m).copied().unwrap_or_default(),
                scatter,
            }
        })
        .map(|mut r| {
            r.log_scale = r.heatmap.log_scale_advised();
            r
        })
        .collect();
    ReportBundle {
        schema: SCHEMA_VERSION,
        run_id: run_id.to_string(),
        models,
        disagreement: pairwise_model_disagreement(&by_model),
        assessments: 0,
    }
}

pub fn build_bundle(store: &RunStore) -> Result<ReportBundle, ReportError> {
    let manifest = store.manifest()?;
    let evals = store.load_evaluations(&EvaluationFilter::default())?;
    let mut bundle =
        bundle_from_evaluations(&manifest.run_id, &manifest.model_ids, &evals, &manifest.sources, &manifest.total_cost);
    bundle.assessments = store.load_assessments()?.len();
    Ok(bundle)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))
}

/// File name and contents of every dataset, in a fixed order.
pub fn render_files(bundle: &ReportBundle) -> Result<Vec<(String, Vec<u8>)>, ReportError> {
    let mut files = Vec::new();
    for m in &bundle.models {
        let mut rows: Vec<Vec<String>> = m
            .scatter
            .iter()
            .map(|s| {
                vec![
                    "newspaper".into(),
                    s.newspaper_id.clone(),
                    s.n.to_string(),
                    s.mean_economic.to_string(),
                    s.mean_democracy.to_string(),
                    opt(s.std_economic),
                    opt(s.std_democracy),
                ]
            })
            .collect();
        if let Some((e, d)) = m.global_mean {
            rows.push(vec![
                "global_mean".into(),
                String::new(),
                m.scatter.len().to_string(),
                e.to_string(),
                d.to_string(),
                String::new(),
                String::new(),
            ]);
        }
        files.push((
            format!("scatter_{}.csv", m.model_id),
            csv_bytes(
                &["kind", "newspaper_id", "n", "mean_economic", "mean_democracy", "std_economic", "std_democracy"],
                rows,
            )?,
        ));
        let cells = m
            .heatmap
            .cells()
            .map(|c| vec![c.economic.to_string(), c.democracy.to_string(), c.count.to_string()]);
        files.push((format!("heatmap_{}.csv", m.model_id), csv_bytes(&["econ_bin", "dem_bin", "count"], cells)?));
    }
    for axis in Axis::BOTH {
        let mut rows = Vec::new();
        for m in &bundle.models {
            let Some(d) = m.dispersion.iter().find(|d| d.axis == axis) else {
                continue;
            };
            let outliers = d.summary.as_ref().map(|s| s.outliers.clone()).unwrap_or_default();
            for (newspaper, std) in &d.values {
                rows.push(vec![
                    m.model_id.clone(),
                    newspaper.clone(),
                    std.to_string(),
                    outliers.contains(std).to_string(),
                ]);
            }
        }
        files.push((
            format!("boxplot_{}.csv", axis.name()),
            csv_bytes(&["model_id", "newspaper_id", "std", "outlier"], rows)?,
        ));
    }
    let rows = bundle.disagreement.pairs.iter().map(|p| {
        vec![
            p.model_a.clone(),
            p.model_b.clone(),
            p.shared_articles.to_string(),
            opt(p.mean_distance),
        ]
    });
    files.push((
        "disagreement.csv".into(),
        csv_bytes(&["model_a", "model_b", "shared_articles", "mean_distance"], rows)?,
    ));
    let rows = bundle.models.iter().flat_map(|m| {
        m.agreement.verdicts.iter().map(|v| {
            vec![
                m.model_id.clone(),
                v.newspaper_id.clone(),
                v.label.as_csv().to_string(),
                v.mean_economic.to_string(),
                serde_json::to_value(v.verdict)
                    .ok()
                    .and_then(|x| x.as_str().map(str::to_string))
                    .unwrap_or_default(),
            ]
        })
    });
    files.push((
        "agreement.csv".into(),
        csv_bytes(&["model_id", "newspaper_id", "label", "mean_economic", "verdict"], rows)?,
    ));
    files.push(("report.md".into(), render_markdown(bundle).into_bytes()));
    Ok(files)
}

/// Writes every dataset into `out_dir` and returns the bundle.
pub fn emit_bundle(store: &RunStore, out_dir: &Path) -> Result<ReportBundle, ReportError> {
    let bundle = build_bundle(store)?;
    write_files(&bundle, out_dir)?;
    Ok(bundle)
}

pub fn write_files(bundle: &ReportBundle, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ReportError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut written = Vec::new();
    for (name, bytes) in render_files(bundle)? {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

pub fn render_markdown(bundle: &ReportBundle) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Run {}\n", bundle.run_id);
    let total: usize = bundle.models.iter().map(|m| m.evaluations).sum();
    let _ = writeln!(md, "- Models: {}", bundle.models.len());
    let _ = writeln!(md, "- Evaluations: {total}");
    let _ = writeln!(md, "- Human assessments: {}\n", bundle.assessments);

    for m in &bundle.models {
        let _ = writeln!(md, "## {}\n", m.model_id);
        if m.evaluations == 0 {
            let _ = writeln!(md, "No evaluations.\n");
            continue;
        }
        let _ = writeln!(md, "- Evaluations: {}", m.evaluations);
        if let Some((e, d)) = m.global_mean {
            let _ = writeln!(md, "- Global mean: ({e:.3}, {d:.3}) over {} newspapers", m.scatter.len());
        }
        if let Some(f) = m.integer_pair_fraction {
            let _ = writeln!(md, "- Integer-pair fraction: {}", pct(f));
        }
        let _ = writeln!(md, "- Total cost: {}", m.total_cost);
        for d in &m.dispersion {
            match &d.summary {
                Some(s) => {
                    let _ = writeln!(
                        md,
                        "- Dispersion ({}): median std {:.3}, IQR [{:.3}, {:.3}], {} outliers",
                        d.axis,
                        s.median,
                        s.q1,
                        s.q3,
                        s.outliers.len()
                    );
                }
                None => {
                    let _ = writeln!(md, "- Dispersion ({}): no newspaper with two or more evaluations", d.axis);
                }
            }
        }
        match m.agreement.rate {
            Some(r) => {
                let _ = writeln!(
                    md,
                    "- Label agreement (economic sign): {}/{} ({})",
                    m.agreement.agreed,
                    m.agreement.labeled,
                    pct(r)
                );
            }
            None => {
                let _ = writeln!(md, "- Label agreement (economic sign): no labeled newspapers");
            }
        }
        let _ = writeln!(md, "\nMost used coordinates:\n");
        let total = m.heatmap.total();
        for c in m.heatmap.top_cells(5) {
            let share = c.count as f64 / total as f64;
            let _ = writeln!(md, "- ({},{}): {} ({} of {total})", c.economic, c.democracy, pct(share), c.count);
        }
        if m.log_scale {
            let _ = writeln!(
                md,
                "\nOne coordinate holds {} evaluations (over 100): plot the heatmap on a log scale.",
                m.heatmap.max_count()
            );
        }
        let _ = writeln!(
            md,
            "\nData: [scatter_{0}.csv](scatter_{0}.csv), [heatmap_{0}.csv](heatmap_{0}.csv)\n",
            m.model_id
        );
    }

    let _ = writeln!(md, "## Cross-model disagreement\n");
    if bundle.disagreement.pairs.is_empty() {
        let _ = writeln!(md, "Fewer than two models.\n");
    } else {
        let _ = writeln!(md, "| Model A | Model B | Shared articles | Mean distance |");
        let _ = writeln!(md, "|---|---|---|---|");
        for p in &bundle.disagreement.pairs {
            let dist = p.mean_distance.map(|d| format!("{d:.3}")).unwrap_or_else(|| "no shared articles".into());
            let _ = writeln!(md, "| {} | {} | {} | {dist} |", p.model_a, p.model_b, p.shared_articles);
        }
        md.push('\n');
    }
    let _ = writeln!(
        md,
        "Disagreement (mean Euclidean distance on shared articles) and label agreement \
         (economic sign against declared positioning, centre band ±{CENTRE_BAND}) are measures defined by this toolkit.\n"
    );
    let _ = writeln!(
        md,
        "Data: [boxplot_economic.csv](boxplot_economic.csv), [boxplot_democracy.csv](boxplot_democracy.csv), \
         [disagreement.csv](disagreement.csv), [agreement.csv](agreement.csv)"
    );
    md
}
