//! Scoring resolved frames against ground truth.
//!
//! Two statistics are reported: how often the resolver picks the object the
//! arm is aimed at, and how far (in left-image pixels) the reported object
//! lies from that object's true projection.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::SCHEMA_VERSION;
use crate::pointing::{resolve, ResolveConfig, ResolveError, SelectionResult};
use crate::sim::{generate_batch, GroundTruth, SceneSpec, SimError};
use crate::stereo::{CalibratedStereoRig, PixelPoint};

/// Default radius for attributing a reported pixel to a known object.
pub const DEFAULT_ASSOCIATION_RADIUS_PX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("frame id mismatch: result `{result}` vs truth `{truth}`")]
    IdMismatch { result: String, truth: String },
    #[error("no records to summarize")]
    EmptyInput,
    #[error("n_per_cell must be positive")]
    EmptyCell,
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("malformed document: {0}")]
    Document(String),
}

/// Per-frame output of the resolver, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ResultDocument {
    Resolved {
        schema_version: u32,
        frame_id: String,
        selected_index: usize,
        source_index: usize,
        object_2d_left: [f64; 2],
        object_3d: [f64; 3],
        distances: Vec<f64>,
        extension_point: [f64; 3],
        warnings: Vec<String>,
    },
    Rejected {
        schema_version: u32,
        frame_id: String,
        stage: String,
        reason: String,
        message: String,
    },
}

impl ResultDocument {
    pub fn new(frame_id: &str, outcome: &Result<SelectionResult, ResolveError>) -> Self {
        match outcome {
            Ok(r) => Self::Resolved {
                schema_version: SCHEMA_VERSION,
                frame_id: frame_id.to_string(),
                selected_index: r.selected_index,
                source_index: r.source_index,
                object_2d_left: [r.object_2d_left.x, r.object_2d_left.y],
                object_3d: [r.object_3d.x, r.object_3d.y, r.object_3d.z],
                distances: r.distances.clone(),
                extension_point: [
                    r.extension_point.x,
                    r.extension_point.y,
                    r.extension_point.z,
                ],
                warnings: r.warnings.clone(),
            },
            Err(e) => Self::Rejected {
                schema_version: SCHEMA_VERSION,
                frame_id: frame_id.to_string(),
                stage: e.stage().to_string(),
                reason: e.reason().to_string(),
                message: e.to_string(),
            },
        }
    }

    pub fn frame_id(&self) -> &str {
        match self {
            Self::Resolved { frame_id, .. } | Self::Rejected { frame_id, .. } => frame_id,
        }
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self, Self::Rejected { .. })
    }

    pub fn to_document(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result documents always serialize");
        s.push('\n');
        s
    }

    pub fn from_document(document: &str) -> Result<Self, EvalError> {
        let doc: Self =
            serde_json::from_str(document).map_err(|e| EvalError::Document(e.to_string()))?;
        let version = match &doc {
            Self::Resolved { schema_version, .. } | Self::Rejected { schema_version, .. } => {
                *schema_version
            }
        };
        if version != SCHEMA_VERSION {
            return Err(EvalError::Document(format!(
                "unsupported schema_version {version}"
            )));
        }
        Ok(doc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason", rename_all = "snake_case")]
pub enum Outcome {
    Correct,
    Wrong,
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub frame_id: String,
    /// Known object the reported pixel was attributed to, if any.
    pub predicted_index: Option<usize>,
    pub true_index: usize,
    /// Distance from the reported pixel to the true object's projection.
    pub pixel_error: Option<f64>,
    pub outcome: Outcome,
}

/// Scores one result against its ground truth.
///
/// The reported left pixel is attributed to the nearest known object when it
/// lies within `association_radius_px` of that object's projection;
/// otherwise the prediction counts as "some other object".
pub fn score_frame(
    result: &ResultDocument,
    truth: &GroundTruth,
    association_radius_px: f64,
) -> Result<EvalRecord, EvalError> {
    if result.frame_id() != truth.frame_id {
        return Err(EvalError::IdMismatch {
            result: result.frame_id().to_string(),
            truth: truth.frame_id.clone(),
        });
    }
    let true_index = truth.true_selection;
    let record = match result {
        ResultDocument::Rejected { reason, .. } => EvalRecord {
            frame_id: truth.frame_id.clone(),
            predicted_index: None,
            true_index,
            pixel_error: None,
            outcome: Outcome::Rejected(reason.clone()),
        },
        ResultDocument::Resolved { object_2d_left, .. } => {
            let predicted = PixelPoint::new(object_2d_left[0], object_2d_left[1]);
            let predicted_index = truth
                .true_left_pixels
                .iter()
                .enumerate()
                .map(|(i, p)| (i, p.distance(&predicted)))
                .filter(|(_, d)| *d <= association_radius_px)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i);
            let outcome = if predicted_index == Some(true_index) {
                Outcome::Correct
            } else {
                Outcome::Wrong
            };
            EvalRecord {
                frame_id: truth.frame_id.clone(),
                predicted_index,
                true_index,
                pixel_error: Some(predicted.distance(&truth.true_left_pixels[true_index])),
                outcome,
            }
        }
    };
    Ok(record)
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    /// Sample (n - 1) standard deviation; 0 for a single value.
    pub std: f64,
    pub count: usize,
    /// Set when `count == 1` and `std` is 0 by convention.
    pub single_sample: bool,
}

impl ErrorStats {
    /// Order-independent: values are sorted before accumulation.
    pub fn from_values(values: &[f64]) -> Result<Self, EvalError> {
        if values.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let std = if sorted.len() > 1 {
            (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            mean,
            std,
            count: sorted.len(),
            single_sample: sorted.len() == 1,
        })
    }
}

impl std::fmt::Display for ErrorStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2}±{:.2} ({})", self.mean, self.std, self.count)
    }
}

/// Prediction counts for one true object.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    /// Count per attributed object index.
    pub predicted: BTreeMap<usize, usize>,
    /// Resolved, but not attributable to any known object.
    pub other: usize,
    pub rejected: usize,
}

impl HistogramRow {
    pub fn total(&self) -> usize {
        self.predicted.values().sum::<usize>() + self.other + self.rejected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub count: usize,
    pub correct: usize,
    pub wrong: usize,
    pub rejected: usize,
    /// `correct / count`; rejected frames count against accuracy.
    pub accuracy: f64,
    /// Pixel error over every resolved frame.
    pub pixel_error: Option<ErrorStats>,
    /// Pixel error over correctly resolved frames only.
    pub correct_pixel_error: Option<ErrorStats>,
    /// Keyed by true object index.
    pub histogram: BTreeMap<usize, HistogramRow>,
    /// Correct-only pixel error per true object index.
    pub per_object_error: BTreeMap<usize, ErrorStats>,
}

pub fn summarize(records: &[EvalRecord]) -> Result<EvalSummary, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut correct = 0;
    let mut wrong = 0;
    let mut rejected = 0;
    let mut all_errors = Vec::new();
    let mut correct_errors = Vec::new();
    let mut per_object: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut histogram: BTreeMap<usize, HistogramRow> = BTreeMap::new();
    for r in records {
        let row = histogram.entry(r.true_index).or_default();
        match &r.outcome {
            Outcome::Rejected(_) => {
                rejected += 1;
                row.rejected += 1;
                continue;
            }
            Outcome::Correct => correct += 1,
            Outcome::Wrong => wrong += 1,
        }
        match r.predicted_index {
            Some(i) => *row.predicted.entry(i).or_default() += 1,
            None => row.other += 1,
        }
        if let Some(e) = r.pixel_error {
            all_errors.push(e);
            if r.outcome == Outcome::Correct {
                correct_errors.push(e);
                per_object.entry(r.true_index).or_default().push(e);
            }
        }
    }
    Ok(EvalSummary {
        count: records.len(),
        correct,
        wrong,
        rejected,
        accuracy: correct as f64 / records.len() as f64,
        pixel_error: ErrorStats::from_values(&all_errors).ok(),
        correct_pixel_error: ErrorStats::from_values(&correct_errors).ok(),
        histogram,
        per_object_error: per_object
            .into_iter()
            .map(|(k, v)| {
                (
                    k,
                    ErrorStats::from_values(&v).expect("non-empty by construction"),
                )
            })
            .collect(),
    })
}

/// Plain-text table: accuracy and `mean±std (count)` pixel error per true
/// object and in total.
pub fn format_table(summary: &EvalSummary) -> String {
    let keys: Vec<usize> = summary.histogram.keys().copied().collect();
    let mut header = vec![String::new()];
    header.extend(keys.iter().map(|k| format!("object {k}")));
    header.push("total".into());

    let frames: Vec<String> = keys
        .iter()
        .map(|k| summary.histogram[k].total().to_string())
        .chain([summary.count.to_string()])
        .collect();
    let accuracy: Vec<String> = keys
        .iter()
        .map(|k| {
            let row = &summary.histogram[k];
            let hits = row.predicted.get(k).copied().unwrap_or(0);
            format!("{:.3}", hits as f64 / row.total() as f64)
        })
        .chain([format!("{:.3}", summary.accuracy)])
        .collect();
    let na = || "n/a".to_string();
    let error: Vec<String> = keys
        .iter()
        .map(|k| {
            summary
                .per_object_error
                .get(k)
                .map_or_else(na, ToString::to_string)
        })
        .chain([summary
            .correct_pixel_error
            .map_or_else(na, |s| s.to_string())])
        .collect();

    let rows = [
        ("frames", frames),
        ("accuracy", accuracy),
        ("error (pixels)", error),
    ];
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    widths[0] = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    for (_, cells) in &rows {
        for (i, c) in cells.iter().enumerate() {
            widths[i + 1] = widths[i + 1].max(c.chars().count());
        }
    }
    let mut out = String::new();
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
    let line: Vec<String> = header
        .iter()
        .enumerate()
        .map(|(i, h)| pad(h, widths[i]))
        .collect();
    let _ = writeln!(out, "{}", line.join("  ").trim_end());
    for (name, cells) in &rows {
        let mut line = vec![pad(name, widths[0])];
        line.extend(cells.iter().enumerate().map(|(i, c)| pad(c, widths[i + 1])));
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    let all = summary.pixel_error.map_or_else(na, |s| s.to_string());
    let _ = writeln!(
        out,
        "\ncorrect {} / wrong {} / rejected {}; error over all resolved frames: {all}",
        summary.correct, summary.wrong, summary.rejected
    );
    out
}

/// Machine-readable evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub summary: EvalSummary,
    /// Sorted by frame id.
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn new(mut records: Vec<EvalRecord>) -> Result<Self, EvalError> {
        records.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            summary: summarize(&records)?,
            records,
        })
    }

    pub fn to_document(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    pub fn from_document(document: &str) -> Result<Self, EvalError> {
        serde_json::from_str(document).map_err(|e| EvalError::Document(e.to_string()))
    }
}

/// Settings shared by batch evaluation and sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub resolve: ResolveConfig,
    pub association_radius_px: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            resolve: ResolveConfig::default(),
            association_radius_px: DEFAULT_ASSOCIATION_RADIUS_PX,
        }
    }
}

/// Resolves and scores a batch of generated scenes. Records come back in
/// input order.
pub fn evaluate_scenes(
    scenes: &[(crate::frame::Frame, GroundTruth)],
    rig: &CalibratedStereoRig,
    cfg: &EvalConfig,
) -> Result<Vec<EvalRecord>, EvalError> {
    scenes
        .par_iter()
        .map(|(frame, truth)| {
            let doc = ResultDocument::new(&frame.frame_id, &resolve(frame, rig, &cfg.resolve));
            score_frame(&doc, truth, cfg.association_radius_px)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub depth_m: f64,
    pub pixel_sigma: f64,
    pub summary: EvalSummary,
}

/// Accuracy and error over a grid of scene depths and pixel noise levels.
///
/// Every cell uses the same `seed`, so cells differ only in depth and noise.
pub fn depth_sweep(
    base: &SceneSpec,
    depths: &[f64],
    noise_sigmas: &[f64],
    n_per_cell: usize,
    seed: u64,
    cfg: &EvalConfig,
) -> Result<Vec<SweepCell>, EvalError> {
    if n_per_cell == 0 {
        return Err(EvalError::EmptyCell);
    }
    let mut cells = Vec::with_capacity(depths.len() * noise_sigmas.len());
    for &depth_m in depths {
        for &pixel_sigma in noise_sigmas {
            let mut spec = base.at_depth(depth_m);
            spec.noise.pixel_sigma = pixel_sigma;
            let scenes = generate_batch(&spec, n_per_cell, seed)?;
            let records = evaluate_scenes(&scenes, &spec.rig, cfg)?;
            cells.push(SweepCell {
                depth_m,
                pixel_sigma,
                summary: summarize(&records)?,
            });
        }
    }
    Ok(cells)
}

/// Grouped bar chart of predicted-object frequency per true object.
pub fn histogram_svg(summary: &EvalSummary, title: &str) -> String {
    const BAR: f64 = 18.0;
    const GAP: f64 = 24.0;
    const HEIGHT: f64 = 200.0;
    const TOP: f64 = 40.0;
    const LEFT: f64 = 40.0;

    let objects: Vec<usize> = summary
        .histogram
        .values()
        .flat_map(|r| r.predicted.keys().copied())
        .chain(summary.histogram.keys().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    // One bar per known object plus "other" and "rejected".
    let bars = objects.len() + 2;
    let group_w = bars as f64 * BAR + GAP;
    let width = LEFT + summary.histogram.len() as f64 * group_w + GAP;
    let total_h = TOP + HEIGHT + 40.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{total_h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="20">{}</text>"#, escape(title));
    let base_y = TOP + HEIGHT;
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{base_y}" x2="{width:.1}" y2="{base_y}" stroke="black"/>"#
    );
    for (g, (true_idx, row)) in summary.histogram.iter().enumerate() {
        let total = row.total().max(1) as f64;
        let x0 = LEFT + GAP / 2.0 + g as f64 * group_w;
        let counts = objects
            .iter()
            .map(|o| (row.predicted.get(o).copied().unwrap_or(0), *o == *true_idx))
            .chain([(row.other, false), (row.rejected, false)]);
        for (b, (count, is_truth)) in counts.enumerate() {
            let h = HEIGHT * count as f64 / total;
            let fill = if is_truth { "#7b3294" } else { "#e6c229" };
            let _ = writeln!(
                svg,
                r#"<rect x="{:.1}" y="{:.1}" width="{BAR}" height="{h:.1}" fill="{fill}"><title>{count}</title></rect>"#,
                x0 + b as f64 * BAR,
                base_y - h,
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}">object {true_idx}</text>"#,
            x0,
            base_y + 16.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
