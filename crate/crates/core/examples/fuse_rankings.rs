//! Majority-vote fusion of three embedders' cell rankings.

use eagers::{fuse_majority, GridSpec, SimilarityMatrix};

fn main() -> eagers::Result<()> {
    // 2x2 grid keeps ceil(0.3 * 4) = 2 cells.
    let grid = GridSpec::new(2, 2)?;
    let sim = SimilarityMatrix::new(
        vec!["blip".into(), "clip".into(), "align".into()],
        vec![
            vec![0.9, 0.8, 0.1, 0.2],
            vec![0.2, 0.7, 0.6, 0.1],
            vec![0.5, 0.1, 0.9, 0.3],
        ],
    )?;
    let sel = fuse_majority(&sim, grid)?;
    for (embedder, top) in sim.embedder_ids().iter().zip(&sel.embedder_top) {
        println!("{embedder:>6} top-k {top:?}");
    }
    println!("votes {:?}", sel.votes);
    println!("means {:?}", sel.mean_scores.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>());
    // Three cells tie at two votes; mean cosine decides.
    println!("selected {:?}", sel.selected_linear(grid));
    Ok(())
}
