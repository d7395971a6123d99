//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Runs without a test harness so the lines always print.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eagers::backends::mock::{PlantedBackend, PlantedMode};
use eagers::backends::recording::RecordingBackend;
use eagers::geometry::{partition, selection_count, visible_region, CellIndex, GridSpec, Rect};
use eagers::imaging::{apply_mask, ImageBuffer};
use eagers::metrics::{anls_single, levenshtein, TimingStats};
use eagers::pipeline::{Clock, EvalReport, QuestionOutcome, Runner};
use eagers::ranking::{fuse_majority, SimilarityMatrix};
use eagers::synth::{write_planted_corpus, PlantedCorpus, SynthOptions};
use eagers::{Mode, PipelineConfig};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn grid(c: u32, r: u32) -> GridSpec {
    GridSpec::new(c, r).unwrap()
}

// ---- oracles ---------------------------------------------------------------

/// Quadratic full-table edit distance over chars.
fn dp_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

/// The unique k-subset whose every member strictly outranks every non-member
/// under `better`, found by trying all subsets, then sorted by rank.
fn exhaustive_best(n: usize, k: usize, better: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let winners: Vec<Vec<usize>> = subsets(n, k)
        .into_iter()
        .filter(|s| {
            s.iter()
                .all(|&i| (0..n).filter(|j| !s.contains(j)).all(|j| better(i, j)))
        })
        .collect();
    assert_eq!(winners.len(), 1, "ranking must be a strict total order");
    let mut s = winners.into_iter().next().unwrap();
    s.sort_by(|&a, &b| {
        if better(a, b) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });
    s
}

fn oracle_fuse(scores: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = scores[0].len();
    let mut votes = vec![0u32; n];
    for row in scores {
        let top = exhaustive_best(n, k, |i, j| row[i] > row[j] || (row[i] == row[j] && i < j));
        for c in top {
            votes[c] += 1;
        }
    }
    let e = scores.len() as f64;
    let mean: Vec<f64> = (0..n)
        .map(|c| scores.iter().map(|r| r[c]).sum::<f64>() / e)
        .collect();
    exhaustive_best(n, k, |i, j| {
        votes[i] > votes[j]
            || (votes[i] == votes[j] && (mean[i] > mean[j] || (mean[i] == mean[j] && i < j)))
    })
}

/// Visible-pixel predicate computed from scratch in floating point.
fn oracle_visible(
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    g: GridSpec,
    selected: &[CellIndex],
    margin: f64,
) -> bool {
    let bound = |i: u32, extent: u32, parts: u32| -> i64 {
        (i as f64 * extent as f64 / parts as f64 + 0.5).floor() as i64
    };
    selected.iter().any(|c| {
        let (x0, x1) = (bound(c.col, w, g.cols()), bound(c.col + 1, w, g.cols()));
        let (y0, y1) = (bound(c.row, h, g.rows()), bound(c.row + 1, h, g.rows()));
        let dx = (margin * (x1 - x0) as f64).round() as i64;
        let dy = (margin * (y1 - y0) as f64).round() as i64;
        let (x, y) = (x as i64, y as i64);
        x >= (x0 - dx).max(0) && x < (x1 + dx).min(w as i64) && y >= (y0 - dy).max(0) && y < (y1 + dy).min(h as i64)
    })
}

// ---- criteria --------------------------------------------------------------

fn selection_cardinality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    ensure(selection_count(grid(5, 5)) == 8, || "5x5 should keep 8".into())?;
    ensure(selection_count(grid(5, 10)) == 15, || "5x10 should keep 15".into())?;
    for _ in 0..200 {
        let g = grid(rng.gen_range(1..=10), rng.gen_range(1..=10));
        let n = g.cell_count();
        let e = rng.gen_range(1..=3);
        let scores: Vec<Vec<f64>> = (0..e)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        let ids = (0..e).map(|i| format!("e{i}")).collect();
        let sel = fuse_majority(&SimilarityMatrix::new(ids, scores).unwrap(), g).unwrap();
        // Written out by hand so the oracle does not share code with the library.
        #[allow(clippy::manual_div_ceil)]
        let want = (3 * n + 9) / 10;
        ensure(sel.selected.len() == want, || {
            format!("{g}: selected {} want {want}", sel.selected.len())
        })?;
    }
    Ok("200 instances; 5x5 -> 8, 5x10 -> 15".into())
}

fn fusion_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for t in 0..1000 {
        let shapes: Vec<(u32, u32)> = (1..=8u32)
            .flat_map(|c| (1..=8u32).map(move |r| (c, r)))
            .filter(|(c, r)| c * r <= 8)
            .collect();
        let (c, r) = shapes[rng.gen_range(0..shapes.len())];
        let g = grid(c, r);
        let n = g.cell_count();
        let e = rng.gen_range(1..=3);
        // Quarter steps force plenty of score, vote and mean ties.
        let scores: Vec<Vec<f64>> = (0..e)
            .map(|_| (0..n).map(|_| rng.gen_range(-4..=4) as f64 / 4.0).collect())
            .collect();
        let ids = (0..e).map(|i| format!("e{i}")).collect();
        let got = fuse_majority(&SimilarityMatrix::new(ids, scores.clone()).unwrap(), g)
            .unwrap()
            .selected_linear(g);
        let want = oracle_fuse(&scores, selection_count(g));
        ensure(got == want, || format!("case {t}: {scores:?} got {got:?} want {want:?}"))?;
    }
    Ok("1000 matrices, E<=3, cells<=8, set and order equal".into())
}

fn mask_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pixels_checked = 0u64;
    for t in 0..100 {
        let g = grid(rng.gen_range(1..=6), rng.gen_range(1..=6));
        let w = rng.gen_range(g.cols()..=160);
        let h = rng.gen_range(g.rows()..=160);
        let raw: Vec<u8> = (0..w * h * 3).map(|_| rng.gen_range(1..=255)).collect();
        let img = ImageBuffer::from_raw(w, h, raw).unwrap();
        let cells = partition(w, h, g).unwrap();
        let k = rng.gen_range(1..=cells.len());
        let mut pick: Vec<CellIndex> = cells.iter().map(|(c, _)| *c).collect();
        for i in 0..k {
            let j = rng.gen_range(i..pick.len());
            pick.swap(i, j);
        }
        pick.truncate(k);
        let margin = [0.0, 0.15, rng.gen_range(0.0..=0.5)][t % 3];
        let visible: Vec<Rect> = visible_region(&pick, g, margin, w, h).unwrap();
        let masked = apply_mask(&img, &visible).unwrap();

        let (mut black, mut kept) = (0u64, 0u64);
        for y in 0..h {
            for x in 0..w {
                let inside = oracle_visible(x, y, w, h, g, &pick, margin);
                let p = masked.pixel(x, y);
                if inside {
                    ensure(p == img.pixel(x, y), || format!("case {t}: ({x},{y}) altered"))?;
                    kept += 1;
                } else {
                    ensure(p == [0, 0, 0], || format!("case {t}: ({x},{y}) not black"))?;
                    black += 1;
                }
            }
        }
        ensure(black + kept == (w * h) as u64, || format!("case {t}: pixel count"))?;
        pixels_checked += black + kept;
    }
    Ok(format!("100 images, {pixels_checked} pixels, black+preserved=total"))
}

fn levenshtein_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let alphabet: Vec<char> = "abcde xyzé0".chars().collect();
    let gen = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.gen_range(0..=30);
        (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
    };
    for t in 0..1000 {
        let a = gen(&mut rng);
        let b = gen(&mut rng);
        let (got, want) = (levenshtein(&a, &b), dp_levenshtein(&a, &b));
        ensure(got == want, || format!("pair {t} {a:?} {b:?}: {got} vs {want}"))?;
    }
    let s = anls_single("buildings", &["building".to_string()], 0.5).map_err(|e| e.to_string())?;
    ensure((s - 0.8889).abs() < 1e-4, || format!("anls(buildings) = {s}"))?;
    Ok(format!("1000 pairs exact; anls(buildings, [building]) = {s:.4}"))
}

fn cv_correctness() -> Check {
    let t = TimingStats::from_samples(&[10.0, 20.0, 30.0]).map_err(|e| e.to_string())?;
    ensure((t.mean_seconds - 20.0).abs() < 1e-9, || format!("mean {}", t.mean_seconds))?;
    ensure((t.cv_percent - 40.82).abs() < 0.01, || format!("cv {}", t.cv_percent))?;
    Ok(format!("mean {:.1} s, CV {:.2}%", t.mean_seconds, t.cv_percent))
}

struct PlantedRun {
    report: EvalReport,
    outcomes: Vec<QuestionOutcome>,
    traffic: Vec<String>,
}

fn corpus(dir: &Path) -> PlantedCorpus {
    write_planted_corpus(dir, &SynthOptions::default()).unwrap()
}

fn planted_cfg(mode: Mode) -> PipelineConfig {
    PipelineConfig {
        mode,
        grid: grid(5, 5),
        margin_fraction: 0.0,
        ..PipelineConfig::default()
    }
}

fn planted_run(c: &PlantedCorpus, mode: PlantedMode, out: Option<&Path>) -> PlantedRun {
    let backend = RecordingBackend::new(PlantedBackend::new(c.answer_key(), mode, 7));
    let mut runner = Runner::new(planted_cfg(Mode::Eagers), &backend, "mock:planted", &c.root)
        .unwrap()
        .with_clock(Clock::Reported);
    if let Some(out) = out {
        runner = runner.with_store(out);
    }
    let outcomes = runner.run_outcomes(&c.records());
    let report = runner.report(&outcomes).unwrap();
    PlantedRun {
        report,
        outcomes,
        traffic: backend.answer_traffic(),
    }
}

fn planted_end_to_end(c: &PlantedCorpus) -> Check {
    let faithful = planted_run(c, PlantedMode::Faithful, None);
    let r = &faithful.report;
    ensure(r.questions == 25 && r.failed == 0, || format!("{} questions, {} failed", r.questions, r.failed))?;
    ensure(r.em_percent == 100.0 && r.anls_percent == 100.0, || {
        format!("faithful EM {} ANLS {}", r.em_percent, r.anls_percent)
    })?;
    let adv = planted_run(c, PlantedMode::Adversarial, None).report;
    ensure(adv.em_percent == 0.0, || format!("adversarial EM {}", adv.em_percent))?;
    Ok(format!(
        "faithful EM {:.1} ANLS {:.1}; adversarial EM {:.1}",
        r.em_percent, r.anls_percent, adv.em_percent
    ))
}

fn determinism(c: &PlantedCorpus) -> Check {
    let bytes = |seed_dir: &Path| -> Vec<u8> {
        let backend = PlantedBackend::new(c.answer_key(), PlantedMode::Faithful, 7);
        let runner = Runner::new(planted_cfg(Mode::Eagers), backend, "mock:planted", &c.root)
            .unwrap()
            .with_clock(Clock::Reported)
            .with_store(seed_dir);
        runner.run_split(&c.records()).unwrap();
        std::fs::read(runner.store().unwrap().run_dir().join("report.json")).unwrap()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ra, rb) = (bytes(a.path()), bytes(b.path()));
    ensure(ra == rb, || "report.json differs between cold runs".into())?;
    Ok(format!("two cold runs, {} identical bytes", ra.len()))
}

fn information_barrier(c: &PlantedCorpus) -> Check {
    let run = planted_run(c, PlantedMode::Faithful, None);
    ensure(run.traffic.len() == 25, || format!("{} answer requests", run.traffic.len()))?;
    let mut windows = 0usize;
    for o in &run.outcomes {
        let chars: Vec<char> = o.explanation.as_deref().unwrap_or_default().chars().collect();
        ensure(chars.len() >= 10, || "explanation missing".into())?;
        for w in chars.windows(10) {
            let needle: String = w.iter().collect();
            windows += 1;
            if let Some(req) = run.traffic.iter().find(|t| t.contains(&needle)) {
                return Err(format!("{needle:?} leaked into {}", &req[..req.len().min(120)]));
            }
        }
    }
    Ok(format!("{} requests, {windows} explanation windows, no leaks", run.traffic.len()))
}

fn call_counts(c: &PlantedCorpus) -> Check {
    let records = c.records();
    let base = RecordingBackend::new(PlantedBackend::new(c.answer_key(), PlantedMode::Faithful, 7));
    let runner = Runner::new(planted_cfg(Mode::Baseline), &base, "mock:planted", &c.root).unwrap();
    for r in &records {
        base.reset();
        runner.run_question(r);
        let n = base.counts();
        ensure(n.total() == 1 && n.answer == 1, || format!("baseline {}: {n:?}", r.question_id))?;
    }

    let eag = RecordingBackend::new(PlantedBackend::new(c.answer_key(), PlantedMode::Faithful, 7));
    let out = tempfile::tempdir().unwrap();
    let runner = Runner::new(planted_cfg(Mode::Eagers), &eag, "mock:planted", &c.root)
        .unwrap()
        .with_store(out.path());
    let want = 3 * (25 + 1);
    for r in &records {
        eag.reset();
        runner.run_question(r);
        let n = eag.counts();
        ensure(n.embed == want && n.explain == 1 && n.answer == 1, || {
            format!("eagers {}: {n:?}, want {want} embeds", r.question_id)
        })?;
    }
    Ok(format!("baseline 1 call/question; eagers {want} embed calls/question"))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());

    type Criterion<'a> = (&'static str, Option<Duration>, Box<dyn Fn() -> Check + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("selection cardinality", Some(Duration::from_secs(1)), Box::new(selection_cardinality)),
        ("fusion oracle equivalence", Some(Duration::from_secs(5)), Box::new(fusion_oracle)),
        ("mask exactness", Some(Duration::from_secs(10)), Box::new(mask_exactness)),
        ("levenshtein/anls oracle", None, Box::new(levenshtein_oracle)),
        ("cv correctness", None, Box::new(cv_correctness)),
        ("planted-evidence end-to-end", Some(Duration::from_secs(30)), Box::new(|| planted_end_to_end(&c))),
        ("determinism", None, Box::new(|| determinism(&c))),
        ("information barrier", None, Box::new(|| information_barrier(&c))),
        ("call counts", None, Box::new(|| call_counts(&c))),
    ];

    let mut failed = 0;
    for (name, budget, check) in &criteria {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = match (result, budget) {
            (Ok(msg), Some(b)) if took > *b => Err(format!("{msg}; took {took:.2?}, budget {b:?}")),
            (r, _) => r,
        };
        match result {
            Ok(msg) => println!("PASS  {name:<28} {msg} ({took:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name:<28} {msg} ({took:.2?})");
            }
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
