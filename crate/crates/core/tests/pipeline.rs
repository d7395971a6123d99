use std::collections::HashSet;
use std::path::PathBuf;

use eagers::backends::mock::{PlantedBackend, PlantedMode};
use eagers::backends::recording::RecordingBackend;
use eagers::backends::{
    AnswerRequest, AnswerResponse, Backend, EmbedRequest, EmbedResponse, ExplainRequest,
    ExplainResponse,
};
use eagers::dataset::QARecord;
use eagers::pipeline::{Clock, Runner};
use eagers::store::Stage;
use eagers::synth::{write_planted_corpus, PlantedCorpus, SynthOptions};
use eagers::{Error, GridSpec, Mode, PipelineConfig};

fn corpus(n: usize) -> (tempfile::TempDir, PlantedCorpus) {
    let dir = tempfile::tempdir().unwrap();
    let c = write_planted_corpus(
        dir.path(),
        &SynthOptions {
            questions: n,
            ..SynthOptions::default()
        },
    )
    .unwrap();
    (dir, c)
}

fn cfg(margin: f64) -> PipelineConfig {
    PipelineConfig {
        grid: GridSpec::new(5, 5).unwrap(),
        margin_fraction: margin,
        concurrency: 3,
        ..PipelineConfig::default()
    }
}

fn planted(c: &PlantedCorpus) -> RecordingBackend<PlantedBackend> {
    RecordingBackend::new(PlantedBackend::new(c.answer_key(), PlantedMode::Faithful, 1))
}

#[test]
fn warm_rerun_makes_no_calls_and_reproduces_report() {
    let (_d, c) = corpus(4);
    let out = tempfile::tempdir().unwrap();
    let backend = planted(&c);
    let run = || {
        Runner::new(cfg(0.0), &backend, "mock", &c.root)
            .unwrap()
            .with_store(out.path())
            .with_clock(Clock::Reported)
            .run_split(&c.records())
            .unwrap()
    };
    let cold = run();
    assert!(backend.counts().total() > 0);
    backend.reset();
    let warm = run();
    assert_eq!(backend.counts().total(), 0);
    assert_eq!(cold, warm);
    assert_eq!(cold.em_percent, 100.0);
}

#[test]
fn margin_change_reuses_grid_embeddings() {
    let (_d, c) = corpus(3);
    let out = tempfile::tempdir().unwrap();
    let backend = planted(&c);
    for margin in [0.0, 0.15] {
        backend.reset();
        let r = Runner::new(cfg(margin), &backend, "mock", &c.root)
            .unwrap()
            .with_store(out.path())
            .run_split(&c.records())
            .unwrap();
        assert_eq!(r.em_percent, 100.0);
        let n = backend.counts();
        assert_eq!((n.explain, n.answer), (3, 3));
        // The mock's explanation is question-independent and deterministic,
        // so the second margin finds every vector cached.
        assert_eq!(n.embed, if margin == 0.0 { 3 * 3 * 26 } else { 0 });
    }
}

/// Fails one stage for chosen questions, otherwise delegates.
struct Flaky<B> {
    inner: B,
    explain_fails: HashSet<String>,
    answer_fails: HashSet<String>,
}

impl<B: Backend> Backend for Flaky<B> {
    fn explain(&self, req: &ExplainRequest) -> eagers::Result<ExplainResponse> {
        if self.explain_fails.contains(&req.question) {
            return Err(Error::BackendUnavailable("explain timed out".into()));
        }
        self.inner.explain(req)
    }
    fn answer(&self, req: &AnswerRequest) -> eagers::Result<AnswerResponse> {
        if self.answer_fails.contains(&req.question) {
            return Err(Error::Protocol("502 bad gateway".into()));
        }
        self.inner.answer(req)
    }
    fn embed(&self, req: &EmbedRequest) -> eagers::Result<EmbedResponse> {
        self.inner.embed(req)
    }
}

#[test]
fn failures_are_isolated_and_resumable() {
    let (_d, c) = corpus(5);
    let records = c.records();
    let out = tempfile::tempdir().unwrap();
    let flaky = Flaky {
        inner: planted(&c),
        explain_fails: [records[1].question.clone()].into(),
        answer_fails: [records[3].question.clone()].into(),
    };
    let runner = Runner::new(cfg(0.0), &flaky, "mock", &c.root)
        .unwrap()
        .with_store(out.path());
    let report = runner.run_split(&records).unwrap();
    assert_eq!(report.questions, 5);
    assert_eq!(report.failed, 2);
    assert_eq!(report.em_percent, 60.0);
    assert_eq!(report.outcomes[1].failed_stage, Some(Stage::Explanation));
    assert_eq!(report.outcomes[3].failed_stage, Some(Stage::Answer));
    assert_eq!(report.outcomes[1].em, 0);

    // A healthy re-run only redoes what is missing.
    let healthy = planted(&c);
    let runner = Runner::new(cfg(0.0), &healthy, "mock", &c.root)
        .unwrap()
        .with_store(out.path());
    let report = runner.run_split(&records).unwrap();
    assert_eq!((report.failed, report.em_percent), (0, 100.0));
    let n = healthy.counts();
    assert_eq!((n.explain, n.embed, n.answer), (1, 3 * 26, 2));
}

#[test]
fn missing_page_fails_that_question_only() {
    let (_d, c) = corpus(2);
    let mut records = c.records();
    records.push(QARecord {
        question_id: "ghost".into(),
        question: "What is on the missing page?".into(),
        image_path: PathBuf::from("documents/nope.png"),
        answers: vec!["x".into()],
    });
    let backend = planted(&c);
    let runner = Runner::new(cfg(0.0), &backend, "mock", &c.root).unwrap();
    let outcomes = runner.run_outcomes(&records);
    assert_eq!(outcomes[2].failed_stage, Some(Stage::Explanation));
    assert!(outcomes[..2].iter().all(|o| !o.failed()));
}

#[test]
fn outcomes_keep_input_order_under_concurrency() {
    let (_d, c) = corpus(9);
    let backend = planted(&c);
    let mut config = cfg(0.0);
    config.concurrency = 4;
    let runner = Runner::new(config, &backend, "mock", &c.root).unwrap();
    let ids: Vec<String> = runner
        .run_outcomes(&c.records())
        .into_iter()
        .map(|o| o.question_id)
        .collect();
    let want: Vec<String> = c.records().into_iter().map(|r| r.question_id).collect();
    assert_eq!(ids, want);
}

#[test]
fn baseline_answers_from_the_full_page() {
    let (_d, c) = corpus(3);
    let backend = planted(&c);
    let config = PipelineConfig {
        mode: Mode::Baseline,
        ..cfg(0.0)
    };
    let r = Runner::new(config, &backend, "mock", &c.root)
        .unwrap()
        .run_split(&c.records())
        .unwrap();
    assert_eq!(r.em_percent, 100.0);
    assert_eq!(backend.counts().total(), 3);
}

#[test]
fn empty_split_is_an_error() {
    let (_d, c) = corpus(1);
    let backend = planted(&c);
    let runner = Runner::new(cfg(0.0), &backend, "mock", &c.root).unwrap();
    assert!(matches!(runner.run_split(&[]), Err(Error::EmptyRun(_))));
}

#[test]
fn config_hash_separates_run_dirs() {
    let (_d, c) = corpus(1);
    let out = tempfile::tempdir().unwrap();
    let backend = planted(&c);
    let a = Runner::new(cfg(0.0), &backend, "mock", &c.root).unwrap().with_store(out.path());
    let b = Runner::new(cfg(0.15), &backend, "mock", &c.root).unwrap().with_store(out.path());
    assert_ne!(a.store().unwrap().run_dir(), b.store().unwrap().run_dir());
}
