//! Cosine scoring of grid cells against an explanation and majority-vote
//! fusion across an ensemble of embedders.
//!
//! Each embedder votes for its own top-k cells (k = 30% of the grid, rounded
//! up). Cells are then ordered by votes, then mean cosine across embedders,
//! then row-major index, and the first k form the evidence set.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{selection_count, CellIndex, GridSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("embedding with zero dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateVector("non-finite component".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "cosine of {}-dim and {}-dim vectors",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateVector("zero-norm vector".into()));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Per-embedder cosine scores, one row per embedder, one column per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    embedder_ids: Vec<String>,
    scores: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn new(embedder_ids: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self> {
        if embedder_ids.is_empty() || embedder_ids.len() != scores.len() {
            return Err(Error::Shape(format!(
                "{} embedder ids for {} score rows",
                embedder_ids.len(),
                scores.len()
            )));
        }
        let cells = scores[0].len();
        if cells == 0 {
            return Err(Error::Shape("score rows are empty".into()));
        }
        for (id, row) in embedder_ids.iter().zip(&scores) {
            if row.len() != cells {
                return Err(Error::Shape(format!(
                    "embedder {id} scored {} cells, expected {cells}",
                    row.len()
                )));
            }
            if row.iter().any(|s| !s.is_finite()) {
                return Err(Error::Shape(format!("embedder {id} has non-finite scores")));
            }
        }
        Ok(Self {
            embedder_ids,
            scores,
        })
    }

    pub fn embedder_ids(&self) -> &[String] {
        &self.embedder_ids
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn cell_count(&self) -> usize {
        self.scores[0].len()
    }

    /// Unweighted mean over embedders for each cell.
    pub fn mean_scores(&self) -> Vec<f64> {
        let e = self.scores.len() as f64;
        (0..self.cell_count())
            .map(|c| self.scores.iter().map(|row| row[c]).sum::<f64>() / e)
            .collect()
    }
}

/// Embeddings of the explanation and of every grid cell for one embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderVectors {
    pub embedder_id: String,
    pub explanation: EmbeddingVector,
    pub cells: Vec<EmbeddingVector>,
}

pub fn score_cells(per_embedder: &[EmbedderVectors], cell_count: usize) -> Result<SimilarityMatrix> {
    let mut ids = Vec::with_capacity(per_embedder.len());
    let mut rows = Vec::with_capacity(per_embedder.len());
    for emb in per_embedder {
        if emb.cells.len() != cell_count {
            return Err(Error::IncompleteEmbedding(format!(
                "embedder {} provided {} of {cell_count} cells",
                emb.embedder_id,
                emb.cells.len()
            )));
        }
        let row = emb
            .cells
            .iter()
            .map(|cell| cosine(&emb.explanation, cell))
            .collect::<Result<Vec<_>>>()?;
        ids.push(emb.embedder_id.clone());
        rows.push(row);
    }
    SimilarityMatrix::new(ids, rows)
}

/// The fused evidence set with its voting provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected cells in fused order.
    pub selected: Vec<CellIndex>,
    /// Votes per cell, row-major.
    pub votes: Vec<u32>,
    /// Mean cosine per cell across embedders, row-major.
    pub mean_scores: Vec<f64>,
    /// Each embedder's own top-k, as row-major indices in rank order.
    pub embedder_top: Vec<Vec<usize>>,
}

impl SelectionResult {
    pub fn selected_linear(&self, grid: GridSpec) -> Vec<usize> {
        self.selected.iter().map(|c| c.linear(grid)).collect()
    }
}

fn desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Indices of the `k` best scores; equal scores prefer the lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| desc(scores[a], scores[b]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Majority-vote fusion of per-embedder top-k memberships, with mean cosine
/// and then cell index as tie-breaks.
pub fn fuse_majority(sim: &SimilarityMatrix, grid: GridSpec) -> Result<SelectionResult> {
    let cells = sim.cell_count();
    if cells != grid.cell_count() {
        return Err(Error::Shape(format!(
            "similarity matrix has {cells} cells, grid {grid} has {}",
            grid.cell_count()
        )));
    }
    let k = selection_count(grid);

    let mut votes = vec![0u32; cells];
    let embedder_top: Vec<Vec<usize>> = sim.scores().iter().map(|row| top_k(row, k)).collect();
    for top in &embedder_top {
        for &c in top {
            votes[c] += 1;
        }
    }
    let mean_scores = sim.mean_scores();

    let mut order: Vec<usize> = (0..cells).collect();
    order.sort_by(|&a, &b| {
        votes[b]
            .cmp(&votes[a])
            .then(desc(mean_scores[a], mean_scores[b]))
            .then(a.cmp(&b))
    });
    let selected = order[..k]
        .iter()
        .map(|&c| grid.cell(c))
        .collect::<Result<Vec<_>>>()?;

    Ok(SelectionResult {
        selected,
        votes,
        mean_scores,
        embedder_top,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&v(&[1., 2., 3.]), &v(&[1., 2., 3.])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&v(&[1., 0.]), &v(&[0., 1.])).unwrap(), 0.0);
        let c = cosine(&v(&[1., 1.]), &v(&[1., 0.])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(cosine(&v(&[1., 0.]), &v(&[1.])), Err(Error::Shape(_))));
        assert!(matches!(
            cosine(&v(&[0., 0.]), &v(&[1., 0.])),
            Err(Error::DegenerateVector(_))
        ));
    }

    #[test]
    fn score_cells_identical_and_constructed() {
        let e = EmbedderVectors {
            embedder_id: "a".into(),
            explanation: v(&[0.3, 0.4]),
            cells: vec![v(&[0.3, 0.4]); 3],
        };
        let m = score_cells(&[e], 3).unwrap();
        assert!(m.scores()[0].iter().all(|s| (s - 1.0).abs() < 1e-12));

        let e1 = EmbedderVectors {
            embedder_id: "a".into(),
            explanation: v(&[1., 0.]),
            cells: vec![v(&[2., 0.]), v(&[0., 5.])],
        };
        let e2 = EmbedderVectors {
            embedder_id: "b".into(),
            explanation: v(&[0., 1.]),
            cells: vec![v(&[1., 0.]), v(&[0., 3.])],
        };
        let m = score_cells(&[e1, e2], 2).unwrap();
        assert_eq!(m.scores(), &[vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn score_cells_missing_cells() {
        let e = EmbedderVectors {
            embedder_id: "clip".into(),
            explanation: v(&[1.]),
            cells: vec![v(&[1.])],
        };
        assert!(matches!(score_cells(&[e], 2), Err(Error::IncompleteEmbedding(_))));
    }

    #[test]
    fn fuse_tie_broken_by_mean() {
        // 4 cells in a 2x2 grid, k = ceil(1.2) = 2
        let grid = GridSpec::new(2, 2).unwrap();
        let sim = SimilarityMatrix::new(
            vec!["e1".into(), "e2".into(), "e3".into()],
            vec![
                vec![0.9, 0.8, 0.1, 0.2],
                vec![0.9, 0.1, 0.8, 0.2],
                vec![0.1, 0.9, 0.8, 0.2],
            ],
        )
        .unwrap();
        let r = fuse_majority(&sim, grid).unwrap();
        assert_eq!(r.votes, vec![2, 2, 2, 0]);
        let expected_means = [1.9 / 3.0, 1.8 / 3.0, 1.7 / 3.0, 0.2];
        for (m, e) in r.mean_scores.iter().zip(expected_means) {
            assert!((m - e).abs() < 1e-12);
        }
        assert_eq!(r.selected_linear(grid), vec![0, 1]);
    }

    #[test]
    fn fuse_single_voter_is_top_k() {
        let grid = GridSpec::new(5, 2).unwrap();
        let row = vec![0.1, 0.5, 0.3, 0.9, 0.2, 0.8, 0.0, 0.4, 0.6, 0.7];
        let sim = SimilarityMatrix::new(vec!["only".into()], vec![row.clone()]).unwrap();
        let r = fuse_majority(&sim, grid).unwrap();
        assert_eq!(r.selected_linear(grid), top_k(&row, 3));
        assert_eq!(r.selected_linear(grid), vec![3, 5, 9]);
    }

    #[test]
    fn fuse_unanimous() {
        let grid = GridSpec::new(5, 5).unwrap();
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|e| (0..25).map(|c| if c % 3 == 0 { 0.9 - 0.01 * e as f64 } else { -0.1 }).collect())
            .collect();
        let sim = SimilarityMatrix::new(vec!["a".into(), "b".into(), "c".into()], rows).unwrap();
        let r = fuse_majority(&sim, grid).unwrap();
        let mut got = r.selected_linear(grid);
        got.sort_unstable();
        assert_eq!(got, vec![0, 3, 6, 9, 12, 15, 18, 21]);
        assert!(got.iter().all(|&c| r.votes[c] == 3));
    }

    #[test]
    fn within_embedder_ties_prefer_lower_index() {
        assert_eq!(top_k(&[0.5, 0.5, 0.5, 0.7], 2), vec![3, 0]);
    }

    #[test]
    fn fuse_rejects_grid_mismatch() {
        let sim = SimilarityMatrix::new(vec!["a".into()], vec![vec![0.0; 4]]).unwrap();
        assert!(fuse_majority(&sim, GridSpec::new(5, 5).unwrap()).is_err());
    }
}
