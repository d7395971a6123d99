//! Load a DocVQA-style split and list what would be evaluated or skipped.
//!
//!     cargo run --example load_docvqa -- /data/docvqa val.json

use std::path::PathBuf;

use eagers::dataset::load_dataset;

fn main() -> eagers::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    let split = root.join(args.next().unwrap_or_else(|| "val.json".into()));
    let ds = load_dataset(&root, &split)?;
    println!("{} records, {} skipped, digest {}", ds.records.len(), ds.skipped.len(), &ds.digest[..12]);
    for r in ds.records.iter().take(5) {
        println!("  {:>8}  {}  -> {:?}", r.question_id, r.question, r.answers);
    }
    for s in &ds.skipped {
        println!("  skipped #{} ({:?}): {}", s.index, s.question_id, s.reason);
    }
    Ok(())
}
