//! Synthetic "planted evidence" corpora for offline end-to-end runs.
//!
//! Each page is a light form with dark text-like bars in every grid cell, a
//! red evidence box inside one cell and a blue decoy box inside another.
//! Pair with [`crate::backends::mock::PlantedBackend`].

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::backends::mock::{DECOY_RGB, EVIDENCE_RGB};
use crate::dataset::QARecord;
use crate::error::{Error, Result};
use crate::geometry::{partition, CellIndex, GridSpec, Rect};
use crate::imaging::ImageBuffer;

const PAGE_BG: [u8; 3] = [246, 244, 238];
const INK: [u8; 3] = [38, 38, 42];

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub questions: usize,
    pub width: u32,
    pub height: u32,
    /// Grid used to place the evidence and decoy boxes.
    pub grid: GridSpec,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            questions: 25,
            width: 800,
            height: 800,
            grid: GridSpec::new(5, 5).expect("valid grid"),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedItem {
    pub record: QARecord,
    pub evidence_cell: CellIndex,
    pub decoy_cell: CellIndex,
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub root: PathBuf,
    pub split_file: PathBuf,
    pub items: Vec<PlantedItem>,
}

impl PlantedCorpus {
    pub fn records(&self) -> Vec<QARecord> {
        self.items.iter().map(|i| i.record.clone()).collect()
    }

    /// Question text to expected answer, as the planted backend wants it.
    pub fn answer_key(&self) -> HashMap<String, String> {
        answer_key(&self.records())
    }
}

pub fn answer_key(records: &[QARecord]) -> HashMap<String, String> {
    records
        .iter()
        .map(|r| (r.question.clone(), r.answers[0].clone()))
        .collect()
}

/// Shrinks `r` by `frac` of its size on every side.
fn inset(r: Rect, frac: f64) -> Rect {
    let dx = (r.width() as f64 * frac).round() as u32;
    let dy = (r.height() as f64 * frac).round() as u32;
    Rect {
        x0: r.x0 + dx,
        y0: r.y0 + dy,
        x1: r.x1 - dx,
        y1: r.y1 - dy,
    }
}

fn draw_page(opts: &SynthOptions, rng: &mut ChaCha8Rng, evidence: usize, decoy: usize) -> Result<ImageBuffer> {
    let mut img = ImageBuffer::filled(opts.width, opts.height, PAGE_BG)?;
    let cells = partition(opts.width, opts.height, opts.grid)?;
    for (i, (_, rect)) in cells.iter().enumerate() {
        let inner = inset(*rect, 0.12);
        let lines = rng.gen_range(1..=4u32);
        let pitch = (inner.height() / (lines + 1)).max(2);
        for l in 0..lines {
            let y0 = inner.y0 + pitch * (l + 1) - pitch / 4;
            let len = rng.gen_range(inner.width() / 4..=inner.width());
            let bar = Rect {
                x0: inner.x0,
                y0,
                x1: inner.x0 + len.max(1),
                y1: (y0 + (pitch / 3).max(1)).min(inner.y1),
            };
            if bar.y0 < bar.y1 {
                img.fill_rect(bar, INK);
            }
        }
        if i == evidence {
            img.fill_rect(inset(*rect, 0.2), EVIDENCE_RGB);
        } else if i == decoy {
            img.fill_rect(inset(*rect, 0.2), DECOY_RGB);
        }
    }
    Ok(img)
}

/// Writes `documents/*.png` and a DocVQA-style `split.json` under `dir`.
pub fn write_planted_corpus(dir: &Path, opts: &SynthOptions) -> Result<PlantedCorpus> {
    let cell_count = opts.grid.cell_count();
    if cell_count < 2 {
        return Err(Error::InvalidGeometry("planted corpus needs at least two cells".into()));
    }
    let docs = dir.join("documents");
    std::fs::create_dir_all(&docs).map_err(|e| Error::io(&docs, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut items = Vec::with_capacity(opts.questions);
    let mut entries = Vec::with_capacity(opts.questions);
    for i in 0..opts.questions {
        let evidence = rng.gen_range(0..cell_count);
        let decoy = (evidence + rng.gen_range(1..cell_count)) % cell_count;
        let img = draw_page(opts, &mut rng, evidence, decoy)?;
        let image_path = PathBuf::from(format!("documents/form_{i:04}.png"));
        img.save_png(&dir.join(&image_path))?;

        let answer = format!("REF-{:05}", rng.gen_range(0..100_000u32));
        let record = QARecord {
            question_id: format!("{}", 1000 + i),
            question: format!("Which reference code appears on form {i:04}?"),
            image_path,
            answers: vec![answer.clone(), answer.to_lowercase()],
        };
        entries.push(json!({
            "questionId": 1000 + i,
            "question": record.question,
            "image": record.image_path,
            "answers": record.answers,
        }));
        items.push(PlantedItem {
            record,
            evidence_cell: opts.grid.cell(evidence)?,
            decoy_cell: opts.grid.cell(decoy)?,
        });
    }

    let split_file = dir.join("split.json");
    let body = serde_json::to_vec_pretty(&json!({
        "dataset_name": "planted",
        "dataset_split": "synthetic",
        "data": entries,
    }))?;
    std::fs::write(&split_file, body).map_err(|e| Error::io(&split_file, e))?;
    Ok(PlantedCorpus {
        root: dir.to_path_buf(),
        split_file,
        items,
    })
}
