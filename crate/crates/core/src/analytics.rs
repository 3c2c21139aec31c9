//! Statistics over stored evaluations: per-newspaper means and spreads,
//! score heatmaps, dispersion boxplots, cross-model disagreement and
//! agreement with newspapers' declared positioning.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{NewspaperSource, PositioningLabel};
use crate::score::{bin_index, score_to_bin, Axis, AXIS_MAX, AXIS_MIN, GRID_SIDE};
use crate::store::Evaluation;

/// Default half-width of the economic band counted as agreeing with a
/// `Centre` label.
pub const CENTRE_BAND: f64 = 2.0;

/// Max cell count above which a log colour scale is advisable.
pub const LOG_SCALE_THRESHOLD: u64 = 100;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("evaluations from more than one model: {0} and {1}")]
    MixedModels(String, String),
    #[error("no input")]
    EmptyInput,
}

fn single_model(evals: &[Evaluation]) -> Result<Option<&str>, AnalyticsError> {
    let Some(first) = evals.first() else {
        return Ok(None);
    };
    if let Some(other) = evals.iter().find(|e| e.model_id != first.model_id) {
        return Err(AnalyticsError::MixedModels(first.model_id.clone(), other.model_id.clone()));
    }
    Ok(Some(&first.model_id))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (divisor n-1); `None` below two values.
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewspaperSummary {
    pub newspaper_id: String,
    pub model_id: String,
    pub n: usize,
    pub mean_economic: f64,
    pub mean_democracy: f64,
    pub std_economic: Option<f64>,
    pub std_democracy: Option<f64>,
}

impl NewspaperSummary {
    pub fn mean(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Economic => self.mean_economic,
            Axis::Democracy => self.mean_democracy,
        }
    }

    pub fn std(&self, axis: Axis) -> Option<f64> {
        match axis {
            Axis::Economic => self.std_economic,
            Axis::Democracy => self.std_democracy,
        }
    }
}

/// One summary per newspaper, ordered by newspaper id.
pub fn newspaper_means(evals: &[Evaluation]) -> Result<Vec<NewspaperSummary>, AnalyticsError> {
    let Some(model_id) = single_model(evals)? else {
        return Ok(Vec::new());
    };
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for e in evals {
        let g = groups.entry(&e.newspaper_id).or_default();
        g.0.push(e.score.economic());
        g.1.push(e.score.democracy());
    }
    Ok(groups
        .into_iter()
        .map(|(newspaper_id, (econ, dem))| NewspaperSummary {
            newspaper_id: newspaper_id.to_string(),
            model_id: model_id.to_string(),
            n: econ.len(),
            mean_economic: mean(&econ),
            mean_democracy: mean(&dem),
            std_economic: sample_std(&econ),
            std_democracy: sample_std(&dem),
        })
        .collect())
}

/// Unweighted mean of the newspaper means.
pub fn global_mean(summaries: &[NewspaperSummary]) -> Result<(f64, f64), AnalyticsError> {
    if summaries.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    if let Some(other) = summaries.iter().find(|s| s.model_id != summaries[0].model_id) {
        return Err(AnalyticsError::MixedModels(summaries[0].model_id.clone(), other.model_id.clone()));
    }
    let econ: Vec<f64> = summaries.iter().map(|s| s.mean_economic).collect();
    let dem: Vec<f64> = summaries.iter().map(|s| s.mean_democracy).collect();
    Ok((mean(&econ), mean(&dem)))
}

/// 21×21 counts of integer compass coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub model_id: String,
    /// Row-major by economic bin, then democracy bin, both from -10 to 10.
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub economic: i32,
    pub democracy: i32,
    pub count: u64,
}

impl HeatmapGrid {
    pub fn empty(model_id: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
            counts: vec![0; GRID_SIDE * GRID_SIDE],
        }
    }

    pub fn count(&self, economic: i32, democracy: i32) -> u64 {
        self.counts[bin_index((economic, democracy))]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn log_scale_advised(&self) -> bool {
        self.max_count() > LOG_SCALE_THRESHOLD
    }

    /// All 441 cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = HeatmapCell> + '_ {
        let lo = AXIS_MIN as i32;
        let hi = AXIS_MAX as i32;
        (lo..=hi).flat_map(move |e| {
            (lo..=hi).map(move |d| HeatmapCell {
                economic: e,
                democracy: d,
                count: self.count(e, d),
            })
        })
    }

    /// The `k` most used nonzero cells, ties broken by coordinates.
    pub fn top_cells(&self, k: usize) -> Vec<HeatmapCell> {
        let mut cells: Vec<HeatmapCell> = self.cells().filter(|c| c.count > 0).collect();
        cells.sort_by(|a, b| b.count.cmp(&a.count).then((a.economic, a.democracy).cmp(&(b.economic, b.democracy))));
        cells.truncate(k);
        cells
    }

    /// Share of the total in one cell, in percent; `None` for an empty grid.
    pub fn percent(&self, economic: i32, democracy: i32) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.count(economic, democracy) as f64 * 100.0 / total as f64)
    }
}

pub fn heatmap(model_id: &str, evals: &[Evaluation]) -> Result<HeatmapGrid, AnalyticsError> {
    if let Some(other) = evals.iter().find(|e| e.model_id != model_id) {
        return Err(AnalyticsError::MixedModels(model_id.to_string(), other.model_id.clone()));
    }
    let mut grid = HeatmapGrid::empty(model_id);
    for e in evals {
        grid.counts[bin_index(score_to_bin(&e.score))] += 1;
    }
    Ok(grid)
}

/// Linear-interpolation quantile of sorted data (the common boxplot default).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveNumberSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Values beyond 1.5 IQR from the quartiles, ascending.
    pub outliers: Vec<f64>,
}

pub fn five_number_summary(values: &[f64]) -> Option<FiveNumberSummary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    Some(FiveNumberSummary {
        min: sorted[0],
        q1,
        median: quantile(&sorted, 0.5),
        q3,
        max: sorted[sorted.len() - 1],
        outliers: sorted.iter().copied().filter(|v| *v < lo || *v > hi).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub axis: Axis,
    /// (newspaper id, std) for newspapers with at least two evaluations.
    pub values: Vec<(String, f64)>,
    pub summary: Option<FiveNumberSummary>,
}

pub fn dispersion_distribution(summaries: &[NewspaperSummary], axis: Axis) -> Dispersion {
    let values: Vec<(String, f64)> = summaries
        .iter()
        .filter_map(|s| s.std(axis).map(|v| (s.newspaper_id.clone(), v)))
        .collect();
    let raw: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
    Dispersion {
        axis,
        summary: five_number_summary(&raw),
        values,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDisagreement {
    pub model_a: String,
    pub model_b: String,
    pub shared_articles: usize,
    /// Mean Euclidean distance over shared articles; `None` when they share none.
    pub mean_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Disagreement {
    /// One entry per unordered pair, `model_a < model_b`.
    pub pairs: Vec<PairDisagreement>,
}

impl Disagreement {
    /// Symmetric lookup; a model's distance to itself is 0.
    pub fn distance(&self, a: &str, b: &str) -> Option<f64> {
        if a == b {
            return Some(0.0);
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.pairs
            .iter()
            .find(|p| p.model_a == a && p.model_b == b)
            .and_then(|p| p.mean_distance)
    }
}

pub fn pairwise_model_disagreement(evals_by_model: &BTreeMap<String, Vec<Evaluation>>) -> Disagreement {
    let scores: BTreeMap<&str, HashMap<&str, &Evaluation>> = evals_by_model
        .iter()
        .map(|(m, evals)| (m.as_str(), evals.iter().map(|e| (e.article_id.as_str(), e)).collect()))
        .collect();
    let models: Vec<&str> = scores.keys().copied().collect();
    let mut pairs = Vec::new();
    for (i, a) in models.iter().enumerate() {
        for b in &models[i + 1..] {
            let (sa, sb) = (&scores[a], &scores[b]);
            let shared: BTreeSet<&str> = sa.keys().filter(|k| sb.contains_key(*k)).copied().collect();
            let distances: Vec<f64> = shared.iter().map(|k| sa[k].score.distance(&sb[k].score)).collect();
            pairs.push(PairDisagreement {
                model_a: a.to_string(),
                model_b: b.to_string(),
                shared_articles: shared.len(),
                mean_distance: (!distances.is_empty()).then(|| mean(&distances)),
            });
        }
    }
    Disagreement { pairs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Agree,
    Disagree,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewspaperVerdict {
    pub newspaper_id: String,
    pub label: PositioningLabel,
    pub mean_economic: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub agreed: usize,
    /// Newspapers with a directional or centre label.
    pub labeled: usize,
    pub rate: Option<f64>,
    pub verdicts: Vec<NewspaperVerdict>,
}

/// Whether a mean economic score matches a label's expected sign.
pub fn label_verdict(label: PositioningLabel, mean_economic: f64, centre_band: f64) -> Verdict {
    use PositioningLabel::*;
    let agrees = match label {
        Left | CentreLeft => mean_economic < 0.0,
        Right | CentreRight => mean_economic > 0.0,
        Centre => mean_economic.abs() <= centre_band,
        Independent | Unknown => return Verdict::Excluded,
    };
    if agrees {
        Verdict::Agree
    } else {
        Verdict::Disagree
    }
}

/// Compares each summarised newspaper's economic mean with its label. Only
/// the economic axis is checked; labels say nothing about the other one.
pub fn sign_agreement_with_labels(
    summaries: &[NewspaperSummary],
    sources: &[NewspaperSource],
    centre_band: f64,
) -> AgreementReport {
    let by_id: HashMap<&str, &NewspaperSummary> = summaries.iter().map(|s| (s.newspaper_id.as_str(), s)).collect();
    let verdicts: Vec<NewspaperVerdict> = sources
        .iter()
        .filter_map(|src| {
            let s = by_id.get(src.id.as_str())?;
            Some(NewspaperVerdict {
                newspaper_id: src.id.clone(),
                label: src.positioning,
                mean_economic: s.mean_economic,
                verdict: label_verdict(src.positioning, s.mean_economic, centre_band),
            })
        })
        .collect();
    let agreed = verdicts.iter().filter(|v| v.verdict == Verdict::Agree).count();
    let labeled = verdicts.iter().filter(|v| v.verdict != Verdict::Excluded).count();
    AgreementReport {
        agreed,
        labeled,
        rate: (labeled > 0).then(|| agreed as f64 / labeled as f64),
        verdicts,
    }
}

/// Share of evaluations whose two values are both whole numbers.
pub fn integer_pair_fraction(evals: &[Evaluation]) -> Option<f64> {
    if evals.is_empty() {
        return None;
    }
    let n = evals.iter().filter(|e| e.score.is_integer_pair()).count();
    Some(n as f64 / evals.len() as f64)
}
