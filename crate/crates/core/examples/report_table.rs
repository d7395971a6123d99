//! Print the comparison table for run directories.
//!
//!     cargo run --example report_table -- runs/*

use std::path::PathBuf;

use eagers::report::{collect_rows, render_table};

fn main() {
    let dirs: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    if dirs.is_empty() {
        eprintln!("usage: report_table <run-dir>...");
        std::process::exit(2);
    }
    print!("{}", render_table(&collect_rows(&dirs)));
}
