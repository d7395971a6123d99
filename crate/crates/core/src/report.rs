//! Comparison tables over finished runs, and per-question traces.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Mode;
use crate::error::{Error, Result};
use crate::geometry::CellIndex;
use crate::imaging::{apply_mask, resize_longest_side, ImageBuffer};
use crate::pipeline::{EvalReport, QuestionOutcome, RunManifest};
use crate::store::path_component;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run_dir: PathBuf,
    pub complete: bool,
    pub label: String,
    pub mode: Option<Mode>,
    /// `None` for baselines, rendered as `*`.
    pub cols: Option<u32>,
    pub rows: Option<u32>,
    pub margin_percent: Option<f64>,
    pub em_percent: Option<f64>,
    pub anls_percent: Option<f64>,
    pub avg_time_seconds: Option<f64>,
    pub cv_percent: Option<f64>,
    pub questions: Option<usize>,
}

impl ReportRow {
    fn incomplete(run_dir: &Path) -> Self {
        Self {
            run_dir: run_dir.to_path_buf(),
            complete: false,
            label: run_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            mode: None,
            cols: None,
            rows: None,
            margin_percent: None,
            em_percent: None,
            anls_percent: None,
            avg_time_seconds: None,
            cv_percent: None,
            questions: None,
        }
    }

    pub fn from_report(run_dir: &Path, r: &EvalReport) -> Self {
        let eagers = r.config.mode == Mode::Eagers;
        Self {
            run_dir: run_dir.to_path_buf(),
            complete: true,
            label: r.label.clone(),
            mode: Some(r.config.mode),
            cols: eagers.then(|| r.config.grid.cols()),
            rows: eagers.then(|| r.config.grid.rows()),
            margin_percent: eagers.then_some(r.config.margin_fraction * 100.0),
            em_percent: Some(r.em_percent),
            anls_percent: Some(r.anls_percent),
            avg_time_seconds: Some(r.timing.mean_seconds),
            cv_percent: Some(r.timing.cv_percent),
            questions: Some(r.questions),
        }
    }
}

pub fn read_report(run_dir: &Path) -> Option<EvalReport> {
    let bytes = std::fs::read(run_dir.join("report.json")).ok()?;
    serde_json::from_slice(&bytes).ok()
}

/// One row per run directory, complete runs sorted by ANLS descending and
/// incomplete ones listed last.
pub fn collect_rows(run_dirs: &[PathBuf]) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = run_dirs
        .iter()
        .map(|dir| match read_report(dir) {
            Some(r) => ReportRow::from_report(dir, &r),
            None => ReportRow::incomplete(dir),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.complete
            .cmp(&a.complete)
            .then(
                b.anls_percent
                    .unwrap_or(f64::NEG_INFINITY)
                    .total_cmp(&a.anls_percent.unwrap_or(f64::NEG_INFINITY)),
            )
            .then(a.label.cmp(&b.label))
    });
    rows
}

fn cell<T: std::fmt::Display>(v: Option<T>, star: bool) -> String {
    match v {
        Some(v) => v.to_string(),
        None if star => "*".into(),
        None => "-".into(),
    }
}

fn num(v: Option<f64>, star: bool) -> String {
    cell(v.map(|v| format!("{v:.2}")), star)
}

pub fn render_table(rows: &[ReportRow]) -> String {
    let header = [
        "Model", "Cols", "Rows", "Margin", "EM (%)", "ANLS", "Avg Time (s)", "CV (%)",
    ];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            let star = r.complete;
            let mut label = r.label.clone();
            if !r.complete {
                label.push_str(" (incomplete)");
            }
            [
                label,
                cell(r.cols, star),
                cell(r.rows, star),
                cell(r.margin_percent.map(|m| format!("{m:.0}%")), star),
                num(r.em_percent, false),
                num(r.anls_percent, false),
                num(r.avg_time_seconds, false),
                num(r.cv_percent, false),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            body.iter()
                .map(|row| row[i].chars().count())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| -> String {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}", w = widths[i]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = widths[i]);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(&header.map(String::from));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &body {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTrace {
    pub cell: CellIndex,
    pub linear: usize,
    pub votes: u32,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub question_id: String,
    pub question: String,
    pub references: Vec<String>,
    pub explanation: Option<String>,
    pub selected: Vec<CellTrace>,
    /// Highest mean cosine over all cells, if a selection exists.
    pub max_mean_score: Option<f64>,
    pub masked_image: Option<PathBuf>,
    pub answer: Option<String>,
    pub em: u8,
    pub anls_score: f64,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

/// Builds the trace for one question of a finished run and writes its
/// masked page as `masked.png` if it is not there yet.
pub fn inspect(run_dir: &Path, question_id: &str) -> Result<Trace> {
    let qdir = run_dir.join(path_component(question_id));
    let outcome_path = qdir.join("outcome.json");
    let bytes = std::fs::read(&outcome_path)
        .map_err(|_| Error::UnknownQuestion(question_id.to_string()))?;
    let outcome: QuestionOutcome = serde_json::from_slice(&bytes)?;

    let mut selected = Vec::new();
    let mut max_mean_score = None;
    let mut masked_image = None;
    if let Some(sel) = &outcome.selection {
        let manifest_path = run_dir.join("manifest.json");
        let manifest: RunManifest = serde_json::from_slice(
            &std::fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?,
        )?;
        let grid = manifest.config.grid;
        selected = sel
            .selection
            .selected
            .iter()
            .map(|c| {
                let linear = c.linear(grid);
                CellTrace {
                    cell: *c,
                    linear,
                    votes: sel.selection.votes[linear],
                    mean_score: sel.selection.mean_scores[linear],
                }
            })
            .collect();
        max_mean_score = sel
            .selection
            .mean_scores
            .iter()
            .copied()
            .reduce(f64::max);

        let png = qdir.join("masked.png");
        if !png.is_file() {
            let page = resize_longest_side(&ImageBuffer::open(&outcome.image_file)?, manifest.config.max_side);
            apply_mask(&page, &sel.visible)?.save_png(&png)?;
        }
        masked_image = Some(png);
    }

    Ok(Trace {
        question_id: outcome.question_id,
        question: outcome.question,
        references: outcome.references,
        explanation: outcome.explanation,
        selected,
        max_mean_score,
        masked_image,
        answer: outcome.answer,
        em: outcome.judgment.em,
        anls_score: outcome.judgment.anls_score,
        failed_stage: outcome.failed_stage.map(|s| s.to_string()),
        error: outcome.error,
    })
}

pub fn render_trace(t: &Trace) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "question {}: {}", t.question_id, t.question);
    let _ = writeln!(s, "references: {}", t.references.join(" | "));
    if let Some(stage) = &t.failed_stage {
        let _ = writeln!(
            s,
            "FAILED at stage {stage}: {}",
            t.error.as_deref().unwrap_or("unknown error")
        );
    }
    if let Some(e) = &t.explanation {
        let _ = writeln!(s, "explanation: {e}");
    }
    if !t.selected.is_empty() {
        let _ = writeln!(s, "selected cells (row, col) votes mean-cosine:");
        for c in &t.selected {
            let _ = writeln!(
                s,
                "  ({}, {}) #{:<3} votes={} mean={:.4}",
                c.cell.row, c.cell.col, c.linear, c.votes, c.mean_score
            );
        }
    }
    if let Some(p) = &t.masked_image {
        let _ = writeln!(s, "masked image: {}", p.display());
    }
    if let Some(a) = &t.answer {
        let _ = writeln!(s, "answer: {a}");
    }
    let _ = writeln!(s, "judgment: em={} anls={:.4}", t.em, t.anls_score);
    s
}
