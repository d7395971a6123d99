//! Exact match, ANLS and timing statistics on a handful of answers.

use eagers::metrics::{aggregate, AnswerJudgment};
use eagers::TimingStats;

fn main() -> eagers::Result<()> {
    let cases = [
        ("buildings", vec!["building"]),
        ("  The  Building ", vec!["the building"]),
        ("3/4/1998", vec!["March 4, 1998", "3/4/98"]),
        ("xyz", vec!["abcdef"]),
    ];
    let mut judgments = Vec::new();
    for (pred, refs) in &cases {
        let refs: Vec<String> = refs.iter().map(|s| s.to_string()).collect();
        let j = AnswerJudgment::judge(pred, &refs, 0.5, false)?;
        println!("{pred:>18?} vs {refs:?}: em={} anls={:.4}", j.em, j.anls_score);
        judgments.push(j);
    }
    let timings = [10.0, 20.0, 30.0, 20.0];
    let agg = aggregate(&judgments, &timings)?;
    println!(
        "EM {:.2}%  ANLS {:.2}  avg {:.2}s  CV {:.2}%",
        agg.em_percent, agg.anls_percent, agg.timing.mean_seconds, agg.timing.cv_percent
    );
    let t = TimingStats::from_samples(&[10.0, 20.0, 30.0])?;
    println!("CV of (10, 20, 30) = {:.2}%", t.cv_percent);
    Ok(())
}
