//! Integer pixel geometry for the evidence grid.
//!
//! Cells tile the image exactly: boundary `i` along an axis of extent `e`
//! split into `a` parts sits at `round(i * e / a)` (half rounds up), so no
//! pixel is lost or shared even when `e` is not divisible by `a`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `cols x rows` partition of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridSpec {
    cols: u32,
    rows: u32,
}

#[derive(Deserialize)]
struct RawGrid {
    cols: u32,
    rows: u32,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.cols, raw.rows)
    }
}

impl GridSpec {
    pub fn new(cols: u32, rows: u32) -> Result<Self> {
        if cols == 0 || rows == 0 {
            return Err(Error::InvalidGeometry(format!(
                "grid axes must be positive, got {cols}x{rows}"
            )));
        }
        Ok(Self { cols, rows })
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cell_count(&self) -> usize {
        self.cols as usize * self.rows as usize
    }

    /// Cell at a row-major linear index.
    pub fn cell(&self, linear: usize) -> Result<CellIndex> {
        if linear >= self.cell_count() {
            return Err(Error::InvalidGeometry(format!(
                "cell index {linear} outside {self} grid"
            )));
        }
        let cols = self.cols as usize;
        Ok(CellIndex {
            row: (linear / cols) as u32,
            col: (linear % cols) as u32,
        })
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.cols, self.rows)
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidGeometry(format!(
                "empty rect ({x0},{y0})-({x1},{y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains_point(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x1 <= width && self.y1 <= height
    }
}

/// Grid cell position, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: u32,
    pub col: u32,
}

impl CellIndex {
    pub fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }

    pub fn linear(&self, grid: GridSpec) -> usize {
        self.row as usize * grid.cols() as usize + self.col as usize
    }
}

fn boundary(i: u32, extent: u32, parts: u32) -> u32 {
    // round(i * extent / parts), half up, in exact integer arithmetic
    let num = 2 * i as u64 * extent as u64 + parts as u64;
    (num / (2 * parts as u64)) as u32
}

/// Splits a `width x height` image into the grid's cells in row-major order.
pub fn partition(width: u32, height: u32, grid: GridSpec) -> Result<Vec<(CellIndex, Rect)>> {
    if width < grid.cols() || height < grid.rows() {
        return Err(Error::InvalidGeometry(format!(
            "{width}x{height} image is smaller than the {grid} grid"
        )));
    }
    let mut cells = Vec::with_capacity(grid.cell_count());
    for row in 0..grid.rows() {
        let y0 = boundary(row, height, grid.rows());
        let y1 = boundary(row + 1, height, grid.rows());
        for col in 0..grid.cols() {
            let x0 = boundary(col, width, grid.cols());
            let x1 = boundary(col + 1, width, grid.cols());
            cells.push((CellIndex { row, col }, Rect { x0, y0, x1, y1 }));
        }
    }
    Ok(cells)
}

/// Number of evidence cells to keep: 30% of the grid, rounded up.
pub fn selection_count(grid: GridSpec) -> usize {
    (3 * grid.cell_count()).div_ceil(10)
}

/// Grows `cell` by `margin_fraction` of its own width (left and right) and
/// height (top and bottom), clamped to the image.
pub fn expand_margin(cell: Rect, margin_fraction: f64, width: u32, height: u32) -> Rect {
    let dx = (margin_fraction * cell.width() as f64).round() as u32;
    let dy = (margin_fraction * cell.height() as f64).round() as u32;
    Rect {
        x0: cell.x0.saturating_sub(dx),
        y0: cell.y0.saturating_sub(dy),
        x1: cell.x1.saturating_add(dx).min(width),
        y1: cell.y1.saturating_add(dy).min(height),
    }
}

/// Margin-expanded rectangles of the selected cells. Rects may overlap; the
/// mask takes their union.
pub fn visible_region(
    selected: &[CellIndex],
    grid: GridSpec,
    margin_fraction: f64,
    width: u32,
    height: u32,
) -> Result<Vec<Rect>> {
    if selected.is_empty() {
        return Err(Error::InvalidSelection("no cells selected".into()));
    }
    if !(0.0..=1.0).contains(&margin_fraction) {
        return Err(Error::InvalidGeometry(format!(
            "margin fraction {margin_fraction} outside [0, 1]"
        )));
    }
    let cells = partition(width, height, grid)?;
    selected
        .iter()
        .map(|cell| {
            if !grid.contains(*cell) {
                return Err(Error::InvalidSelection(format!(
                    "cell ({}, {}) outside {grid} grid",
                    cell.row, cell.col
                )));
            }
            let (_, rect) = cells[cell.linear(grid)];
            Ok(expand_margin(rect, margin_fraction, width, height))
        })
        .collect()
}
