//! Per-question orchestration and split-level evaluation.
//!
//! Eagers mode, per question:
//!
//! 1. load the page and downscale it to `max_side`;
//! 2. ask the model for an explanation of where the answer is;
//! 3. partition the page into the grid and embed every cell and the
//!    explanation with each embedder;
//! 4. score cells by cosine, fuse the per-embedder top-k by majority vote;
//! 5. black out everything outside the (margin-expanded) selected cells and
//!    ask the question again on the masked page.
//!
//! The answer request carries only the masked image and the question.
//! Baseline mode skips 2-5 and asks the question on the resized page.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{encode_image, AnswerRequest, Backend, EmbedRequest, ExplainRequest};
use crate::config::{Mode, PipelineConfig};
use crate::dataset::QARecord;
use crate::error::{Error, Result};
use crate::geometry::{partition, visible_region, Rect};
use crate::imaging::{apply_mask, crop, resize_longest_side, ImageBuffer};
use crate::metrics::{aggregate, AnswerJudgment, TimingStats};
use crate::ranking::{fuse_majority, score_cells, EmbedderVectors, SelectionResult, SimilarityMatrix};
use crate::store::{CachedVector, RunStore, Stage, StageArtifact};

/// How stage latencies are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    /// Wall-clock time, including local image work.
    Wall,
    /// Only the latencies reported by the backend; local work counts as 0.
    /// With the mock backends this makes reports reproducible.
    Reported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingsPayload {
    pub similarity: SimilarityMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPayload {
    pub selection: SelectionResult,
    /// Margin-expanded rects left visible in the masked page.
    pub visible: Vec<Rect>,
    /// Size of the resized page all geometry refers to.
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLatencies {
    pub explanation: f64,
    pub embeddings: f64,
    pub selection: f64,
    pub answer: f64,
}

impl StageLatencies {
    pub fn total(&self) -> f64 {
        self.explanation + self.embeddings + self.selection + self.answer
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub question_id: String,
    pub question: String,
    pub image_file: PathBuf,
    pub references: Vec<String>,
    pub explanation: Option<String>,
    pub selection: Option<SelectionPayload>,
    pub answer: Option<String>,
    pub judgment: AnswerJudgment,
    pub latencies: StageLatencies,
    pub total_seconds: f64,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
}

impl QuestionOutcome {
    pub fn failed(&self) -> bool {
        self.failed_stage.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub question_id: String,
    pub em: u8,
    pub anls_score: f64,
    pub total_seconds: f64,
    pub failed_stage: Option<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub backend: String,
    pub questions: usize,
    pub failed: usize,
    pub em_percent: f64,
    pub anls_percent: f64,
    pub anls: f64,
    pub timing: TimingStats,
    pub outcomes: Vec<OutcomeSummary>,
    pub skipped: usize,
    /// Relative to the run directory.
    pub skip_report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub config: PipelineConfig,
    pub backend: String,
    pub dataset_root: PathBuf,
    pub split_file: Option<PathBuf>,
    pub dataset_digest: Option<String>,
    pub created_unix: u64,
    pub tool_version: String,
}

/// Page image, loaded and resized on first use.
struct Page<'a> {
    path: &'a Path,
    max_side: u32,
    image: Option<ImageBuffer>,
}

impl Page<'_> {
    fn get(&mut self) -> Result<&ImageBuffer> {
        if self.image.is_none() {
            let img = ImageBuffer::open(self.path)?;
            self.image = Some(resize_longest_side(&img, self.max_side));
        }
        Ok(self.image.as_ref().expect("just loaded"))
    }
}

struct StageError(Stage, Error);

pub struct Runner<B> {
    cfg: PipelineConfig,
    backend: B,
    backend_tag: String,
    dataset_root: PathBuf,
    store: Option<RunStore>,
    clock: Clock,
}

impl<B: Backend> Runner<B> {
    /// `backend_tag` names the backend in hashes and reports, e.g. the base
    /// URL or `mock:planted`.
    pub fn new(cfg: PipelineConfig, backend: B, backend_tag: &str, dataset_root: &Path) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            backend,
            backend_tag: backend_tag.to_string(),
            dataset_root: dataset_root.to_path_buf(),
            store: None,
            clock: Clock::Wall,
        })
    }

    /// Persist artifacts under `<out>/runs/<config_hash>/` and reuse them.
    pub fn with_store(mut self, out: &Path) -> Self {
        self.store = Some(RunStore::new(
            out,
            &self.config_hash(),
            &self.cfg.embedding_scope(&self.backend_tag),
            self.cfg.mode,
        ));
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> String {
        self.cfg.config_hash(&self.backend_tag)
    }

    pub fn store(&self) -> Option<&RunStore> {
        self.store.as_ref()
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    fn local(&self, start: Instant) -> f64 {
        match self.clock {
            Clock::Wall => start.elapsed().as_secs_f64(),
            Clock::Reported => 0.0,
        }
    }

    fn cached<T: serde::de::DeserializeOwned>(&self, qid: &str, stage: Stage) -> Option<StageArtifact<T>> {
        self.store.as_ref()?.get(qid, stage)
    }

    fn persist<T: Serialize>(&self, artifact: &StageArtifact<T>) -> Result<()> {
        if let Some(store) = &self.store {
            store.put(artifact)?;
        }
        Ok(())
    }

    /// Runs every stage for one record. Stage failures are captured in the
    /// outcome rather than returned.
    pub fn run_question(&self, record: &QARecord) -> QuestionOutcome {
        let image_file = record.image_file(&self.dataset_root);
        let mut outcome = QuestionOutcome {
            question_id: record.question_id.clone(),
            question: record.question.clone(),
            image_file: image_file.clone(),
            references: record.answers.clone(),
            explanation: None,
            selection: None,
            answer: None,
            judgment: AnswerJudgment::failed(),
            latencies: StageLatencies::default(),
            total_seconds: 0.0,
            failed_stage: None,
            error: None,
        };
        let mut page = Page {
            path: &image_file,
            max_side: self.cfg.max_side,
            image: None,
        };
        let result = match self.cfg.mode {
            Mode::Eagers => self.eagers(record, &mut page, &mut outcome),
            Mode::Baseline => self.baseline(record, &mut page, &mut outcome),
        };
        match result.and_then(|answer| {
            AnswerJudgment::judge(
                &answer,
                &record.answers,
                self.cfg.anls_threshold,
                self.cfg.raw_exact_match,
            )
            .map_err(|e| StageError(Stage::Answer, e))
        }) {
            Ok(judgment) => outcome.judgment = judgment,
            Err(StageError(stage, e)) => {
                log::warn!("question {} failed at {stage}: {e}", record.question_id);
                outcome.failed_stage = Some(stage);
                outcome.error = Some(e.to_string());
            }
        }
        outcome.total_seconds = outcome.latencies.total();
        if let Some(store) = &self.store {
            let path = store.question_dir(&record.question_id).join("outcome.json");
            if let Err(e) = serde_json::to_vec_pretty(&outcome)
                .map_err(Error::from)
                .and_then(|b| crate::store::write_replace(&path, &b))
            {
                log::warn!("could not persist outcome for {}: {e}", record.question_id);
            }
        }
        outcome
    }

    fn eagers(&self, record: &QARecord, page: &mut Page, outcome: &mut QuestionOutcome) -> Result<String, StageError> {
        let qid = record.question_id.as_str();

        let stage = Stage::Explanation;
        let explanation = match self.cached::<String>(qid, stage) {
            Some(a) => a,
            None => self.explain(record, page).map_err(|e| StageError(stage, e))?,
        };
        outcome.latencies.explanation = explanation.latency_seconds;
        outcome.explanation = Some(explanation.payload.clone());

        let selection = match self.cached::<SelectionPayload>(qid, Stage::Selection) {
            Some(sel) => {
                if let Some(emb) = self.cached::<EmbeddingsPayload>(qid, Stage::Embeddings) {
                    outcome.latencies.embeddings = emb.latency_seconds;
                }
                sel
            }
            None => {
                let stage = Stage::Embeddings;
                let embeddings = match self.cached::<EmbeddingsPayload>(qid, stage) {
                    Some(a) => a,
                    None => self
                        .embed(record, &explanation.payload, page)
                        .map_err(|e| StageError(stage, e))?,
                };
                outcome.latencies.embeddings = embeddings.latency_seconds;
                self.select(record, &embeddings.payload, page)
                    .map_err(|e| StageError(Stage::Selection, e))?
            }
        };
        outcome.latencies.selection = selection.latency_seconds;
        outcome.selection = Some(selection.payload.clone());

        let stage = Stage::Answer;
        let answer = match self.cached::<String>(qid, stage) {
            Some(a) => a,
            None => self
                .answer(record, page, Some(&selection.payload.visible))
                .map_err(|e| StageError(stage, e))?,
        };
        outcome.latencies.answer = answer.latency_seconds;
        outcome.answer = Some(answer.payload.clone());
        Ok(answer.payload)
    }

    fn baseline(&self, record: &QARecord, page: &mut Page, outcome: &mut QuestionOutcome) -> Result<String, StageError> {
        let stage = Stage::Answer;
        let answer = match self.cached::<String>(&record.question_id, stage) {
            Some(a) => a,
            None => self
                .answer(record, page, None)
                .map_err(|e| StageError(stage, e))?,
        };
        outcome.latencies.answer = answer.latency_seconds;
        outcome.answer = Some(answer.payload.clone());
        Ok(answer.payload)
    }

    fn explain(&self, record: &QARecord, page: &mut Page) -> Result<StageArtifact<String>> {
        let start = Instant::now();
        let image_b64 = encode_image(page.get()?)?;
        let local = self.local(start);
        let resp = self.backend.explain(&ExplainRequest {
            image_b64,
            question: record.question.clone(),
            prompt_id: self.cfg.explain_prompt.clone(),
            model_id: self.cfg.model_id.clone(),
        })?;
        if resp.explanation.trim().is_empty() {
            return Err(Error::Protocol("backend returned an empty explanation".into()));
        }
        let artifact = StageArtifact {
            question_id: record.question_id.clone(),
            stage: Stage::Explanation,
            payload: resp.explanation,
            latency_seconds: local + resp.latency_seconds,
        };
        self.persist(&artifact)?;
        Ok(artifact)
    }

    /// One backend call per (embedder, payload), each result cached on its
    /// own so grid embeddings are shared across margin settings.
    fn embed_one(&self, qid: &str, embedder: &str, key: &str, req: impl FnOnce() -> Result<EmbedRequest>) -> Result<CachedVector> {
        if let Some(v) = self.store.as_ref().and_then(|s| s.get_vector(qid, embedder, key)) {
            return Ok(v);
        }
        let mut resp = self.backend.embed(&req()?)?;
        let vector = resp.vectors.remove(embedder).ok_or_else(|| {
            Error::IncompleteEmbedding(format!("backend returned no vector for {embedder}"))
        })?;
        let cached = CachedVector {
            vector,
            latency_seconds: resp.latency_seconds,
        };
        if let Some(store) = &self.store {
            store.put_vector(qid, embedder, key, &cached)?;
        }
        Ok(cached)
    }

    fn embed(&self, record: &QARecord, explanation: &str, page: &mut Page) -> Result<StageArtifact<EmbeddingsPayload>> {
        let qid = record.question_id.as_str();
        let mut local = 0.0;
        let mut remote = 0.0;

        let start = Instant::now();
        let img = page.get()?;
        let cells = partition(img.width(), img.height(), self.cfg.grid)?;
        local += self.local(start);

        let explanation_key = format!(
            "explanation-{}",
            hex::encode(&Sha256::digest(explanation.as_bytes())[..8])
        );
        let mut crops: Vec<Option<String>> = vec![None; cells.len()];
        let mut per_embedder = Vec::with_capacity(self.cfg.embedder_ids.len());
        for embedder in &self.cfg.embedder_ids {
            let ids = vec![embedder.clone()];
            let text = self.embed_one(qid, embedder, &explanation_key, || {
                Ok(EmbedRequest::text(explanation, ids.clone()))
            })?;
            remote += text.latency_seconds;

            let mut vectors = Vec::with_capacity(cells.len());
            for (i, (_, rect)) in cells.iter().enumerate() {
                let v = self.embed_one(qid, embedder, &format!("cell-{i}"), || {
                    if crops[i].is_none() {
                        let start = Instant::now();
                        crops[i] = Some(encode_image(&crop(img, *rect)?)?);
                        local += self.local(start);
                    }
                    Ok(EmbedRequest::image(crops[i].clone().expect("set above"), ids.clone()))
                })?;
                remote += v.latency_seconds;
                vectors.push(v.vector);
            }
            per_embedder.push(EmbedderVectors {
                embedder_id: embedder.clone(),
                explanation: text.vector,
                cells: vectors,
            });
        }

        let start = Instant::now();
        let similarity = score_cells(&per_embedder, cells.len())?;
        local += self.local(start);

        let artifact = StageArtifact {
            question_id: qid.to_string(),
            stage: Stage::Embeddings,
            payload: EmbeddingsPayload { similarity },
            latency_seconds: local + remote,
        };
        self.persist(&artifact)?;
        Ok(artifact)
    }

    fn select(&self, record: &QARecord, embeddings: &EmbeddingsPayload, page: &mut Page) -> Result<StageArtifact<SelectionPayload>> {
        let start = Instant::now();
        let img = page.get()?;
        let (width, height) = (img.width(), img.height());
        let selection = fuse_majority(&embeddings.similarity, self.cfg.grid)?;
        let visible = visible_region(
            &selection.selected,
            self.cfg.grid,
            self.cfg.margin_fraction,
            width,
            height,
        )?;
        let artifact = StageArtifact {
            question_id: record.question_id.clone(),
            stage: Stage::Selection,
            payload: SelectionPayload {
                selection,
                visible,
                width,
                height,
            },
            latency_seconds: self.local(start),
        };
        self.persist(&artifact)?;
        Ok(artifact)
    }

    fn answer(&self, record: &QARecord, page: &mut Page, visible: Option<&[Rect]>) -> Result<StageArtifact<String>> {
        let start = Instant::now();
        let img = page.get()?;
        let image_b64 = match visible {
            Some(rects) => encode_image(&apply_mask(img, rects)?)?,
            None => encode_image(img)?,
        };
        let local = self.local(start);
        let resp = self.backend.answer(&AnswerRequest {
            image_b64,
            question: record.question.clone(),
            prompt_id: self.cfg.answer_prompt.clone(),
            model_id: self.cfg.model_id.clone(),
        })?;
        let artifact = StageArtifact {
            question_id: record.question_id.clone(),
            stage: Stage::Answer,
            payload: resp.answer,
            latency_seconds: local + resp.latency_seconds,
        };
        self.persist(&artifact)?;
        Ok(artifact)
    }

    /// Runs all records with bounded parallelism; outcomes keep input order.
    pub fn run_outcomes(&self, records: &[QARecord]) -> Vec<QuestionOutcome> {
        let slots: Vec<Mutex<Option<QuestionOutcome>>> = records.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.cfg.concurrency.min(records.len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(record) = records.get(i) else { break };
                    *slots[i].lock().unwrap() = Some(self.run_question(record));
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every slot is filled"))
            .collect()
    }

    pub fn run_split(&self, records: &[QARecord]) -> Result<EvalReport> {
        if records.is_empty() {
            return Err(Error::EmptyRun("no records to evaluate".into()));
        }
        let outcomes = self.run_outcomes(records);
        let report = self.report(&outcomes)?;
        if let Some(store) = &self.store {
            store.write("report.json", &report)?;
        }
        Ok(report)
    }

    pub fn report(&self, outcomes: &[QuestionOutcome]) -> Result<EvalReport> {
        let judgments: Vec<AnswerJudgment> = outcomes.iter().map(|o| o.judgment.clone()).collect();
        let timings: Vec<f64> = outcomes.iter().map(|o| o.total_seconds).collect();
        let agg = aggregate(&judgments, &timings)?;
        Ok(EvalReport {
            label: self.cfg.label(),
            config: self.cfg.clone(),
            config_hash: self.config_hash(),
            backend: self.backend_tag.clone(),
            questions: outcomes.len(),
            failed: outcomes.iter().filter(|o| o.failed()).count(),
            em_percent: agg.em_percent,
            anls_percent: agg.anls_percent,
            anls: agg.anls,
            timing: agg.timing,
            outcomes: outcomes
                .iter()
                .map(|o| OutcomeSummary {
                    question_id: o.question_id.clone(),
                    em: o.judgment.em,
                    anls_score: o.judgment.anls_score,
                    total_seconds: o.total_seconds,
                    failed_stage: o.failed_stage,
                })
                .collect(),
            skipped: 0,
            skip_report: None,
        })
    }

    pub fn manifest(&self, split_file: Option<&Path>, dataset_digest: Option<&str>) -> RunManifest {
        RunManifest {
            config_hash: self.config_hash(),
            config: self.cfg.clone(),
            backend: self.backend_tag.clone(),
            dataset_root: self.dataset_root.clone(),
            split_file: split_file.map(Path::to_path_buf),
            dataset_digest: dataset_digest.map(str::to_string),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}
