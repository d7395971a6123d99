//! Cut a page into a grid and see how many cells the fusion keeps.
//!
//!     cargo run --example grid_partition -- 1000 700 5 10

use eagers::{partition, selection_count, GridSpec};

fn main() -> eagers::Result<()> {
    let args: Vec<u32> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("arguments are integers"))
        .collect();
    let [w, h, cols, rows] = match args[..] {
        [w, h, c, r] => [w, h, c, r],
        _ => [1003, 707, 5, 5],
    };
    let grid = GridSpec::new(cols, rows)?;
    let cells = partition(w, h, grid)?;
    println!("{w}x{h} page, {grid} grid, {} cells, keep {}", cells.len(), selection_count(grid));
    for (cell, r) in cells.iter().take(cols as usize + 1) {
        println!(
            "  ({}, {}) x {}..{} y {}..{}  {}x{}",
            cell.row, cell.col, r.x0, r.x1, r.y0, r.y1, r.width(), r.height()
        );
    }
    if cells.len() > cols as usize + 1 {
        println!("  ...");
    }
    Ok(())
}
