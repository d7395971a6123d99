//! Black out everything but a few cells (with a margin) and save the result.
//!
//!     cargo run --example mask_region -- page.png masked.png

use std::path::PathBuf;

use eagers::imaging::resize_longest_side;
use eagers::{apply_mask, visible_region, CellIndex, GridSpec, ImageBuffer};

fn main() -> eagers::Result<()> {
    let mut args = std::env::args().skip(1);
    let input = args.next().map(PathBuf::from);
    let output = PathBuf::from(args.next().unwrap_or_else(|| "masked.png".into()));

    let page = match &input {
        Some(p) => resize_longest_side(&ImageBuffer::open(p)?, 1536),
        None => {
            let mut img = ImageBuffer::filled(600, 400, [250, 250, 245])?;
            for y in (20..380).step_by(24) {
                img.fill_rect(eagers::Rect::new(30, y, 570, y + 8)?, [40, 40, 40]);
            }
            img
        }
    };
    let grid = GridSpec::new(5, 5)?;
    let keep = [CellIndex::new(1, 1), CellIndex::new(1, 2), CellIndex::new(3, 4)];
    let visible = visible_region(&keep, grid, 0.15, page.width(), page.height())?;
    let masked = apply_mask(&page, &visible)?;
    let black = masked.pixels().chunks(3).filter(|p| p == &[0, 0, 0]).count();
    masked.save_png(&output)?;
    println!(
        "kept {} rects, {black} of {} pixels black -> {}",
        visible.len(),
        page.width() * page.height(),
        output.display()
    );
    Ok(())
}
