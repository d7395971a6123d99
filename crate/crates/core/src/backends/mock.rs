//! Deterministic offline backends.
//!
//! All vectors and latencies are pure functions of the request and a seed,
//! so replays are byte-identical.
//!
//! [`PlantedBackend`] works with documents carrying a red evidence box (and
//! optionally a blue decoy box) drawn by [`crate::synth`]:
//!
//! * image embeddings of crops containing the evidence box point along a
//!   per-embedder anchor direction, and text embeddings point there too, so
//!   the evidence cell has the highest cosine;
//! * the answer call returns the correct answer only when red evidence
//!   pixels survive in the (masked) request image, and `"unknown"` otherwise.
//!
//! In [`PlantedMode::Adversarial`] the embeddings point at the decoy box and
//! away from the evidence, so a grounded pipeline must answer wrong.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    decode_image, AnswerRequest, AnswerResponse, Backend, EmbedRequest, EmbedResponse,
    ExplainRequest, ExplainResponse, Modality, DEFAULT_EMBEDDERS,
};
use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::ranking::EmbeddingVector;

pub const EVIDENCE_RGB: [u8; 3] = [220, 24, 24];
pub const DECOY_RGB: [u8; 3] = [24, 24, 220];
pub const UNKNOWN_ANSWER: &str = "unknown";

/// Red pixels needed before the answer mock considers the evidence visible.
const MIN_EVIDENCE_PIXELS: usize = 4;

pub fn is_evidence_pixel(p: [u8; 3]) -> bool {
    p[0] >= 160 && p[1] <= 90 && p[2] <= 90
}

pub fn is_decoy_pixel(p: [u8; 3]) -> bool {
    p[2] >= 160 && p[0] <= 90 && p[1] <= 90
}

fn count_pixels(img: &ImageBuffer, pred: fn([u8; 3]) -> bool) -> usize {
    img.pixels()
        .chunks_exact(3)
        .filter(|p| pred([p[0], p[1], p[2]]))
        .count()
}

fn seeded_rng(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Hash-seeded embedding generator with a fixed dimension per embedder.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    seed: u64,
    dims: BTreeMap<String, usize>,
}

impl HashEmbedder {
    pub fn new(seed: u64) -> Self {
        let dims = DEFAULT_EMBEDDERS
            .iter()
            .zip([256, 512, 640])
            .map(|(id, d)| (id.to_string(), d))
            .collect();
        Self { seed, dims }
    }

    pub fn with_dims(seed: u64, dims: BTreeMap<String, usize>) -> Self {
        Self { seed, dims }
    }

    pub fn embedder_ids(&self) -> Vec<String> {
        self.dims.keys().cloned().collect()
    }

    pub fn dim(&self, embedder: &str) -> Result<usize> {
        self.dims
            .get(embedder)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown embedder id {embedder:?}")))
    }

    /// Unit vector determined by (seed, embedder, tag, payload).
    pub fn unit_vector(&self, embedder: &str, tag: &str, payload: &[u8]) -> Result<Vec<f64>> {
        let dim = self.dim(embedder)?;
        let mut rng = seeded_rng(self.seed, &[embedder.as_bytes(), tag.as_bytes(), payload]);
        Ok(unit((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
    }

    fn check_ids(&self, req: &EmbedRequest) -> Result<()> {
        req.validate()?;
        for id in &req.embedder_ids {
            self.dim(id)?;
        }
        Ok(())
    }

    fn embed_plain(&self, req: &EmbedRequest) -> Result<BTreeMap<String, EmbeddingVector>> {
        self.check_ids(req)?;
        let tag = req.modality.to_string();
        req.embedder_ids
            .iter()
            .map(|id| {
                let v = self.unit_vector(id, &tag, req.payload().as_bytes())?;
                Ok((id.clone(), EmbeddingVector::new(v)?))
            })
            .collect()
    }
}

/// Synthetic per-call latency: a base value per call kind plus a
/// deterministic jitter derived from the payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLatency {
    pub explain_seconds: f64,
    pub answer_seconds: f64,
    pub embed_seconds: f64,
    /// Jitter as a fraction of the base, drawn from [0, jitter).
    pub jitter: f64,
}

impl Default for SyntheticLatency {
    fn default() -> Self {
        Self {
            explain_seconds: 1.5,
            answer_seconds: 1.0,
            embed_seconds: 0.02,
            jitter: 0.5,
        }
    }
}

impl SyntheticLatency {
    fn sample(&self, seed: u64, base: f64, key: &str) -> f64 {
        let mut rng = seeded_rng(seed, &[b"latency", key.as_bytes()]);
        base * (1.0 + self.jitter * rng.gen::<f64>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantedMode {
    Faithful,
    Adversarial,
}

const PLANTED_EXPLANATION: &str = "Look for the highlighted evidence box; the requested value \
     is printed inside that marked region of the page.";

#[derive(Debug, Clone)]
pub struct PlantedBackend {
    answers: HashMap<String, String>,
    mode: PlantedMode,
    embedder: HashEmbedder,
    latency: SyntheticLatency,
    seed: u64,
}

impl PlantedBackend {
    /// `answers` maps question text to the answer the mock gives when the
    /// evidence is visible.
    pub fn new(answers: HashMap<String, String>, mode: PlantedMode, seed: u64) -> Self {
        Self {
            answers,
            mode,
            embedder: HashEmbedder::new(seed),
            latency: SyntheticLatency::default(),
            seed,
        }
    }

    pub fn with_latency(mut self, latency: SyntheticLatency) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_embedder(mut self, embedder: HashEmbedder) -> Self {
        self.embedder = embedder;
        self
    }

    fn anchor(&self, embedder: &str) -> Result<Vec<f64>> {
        self.embedder.unit_vector(embedder, "anchor", b"")
    }

    /// anchor * sign plus a small payload-dependent perturbation.
    fn near(&self, embedder: &str, sign: f64, payload: &[u8]) -> Result<Vec<f64>> {
        let anchor = self.anchor(embedder)?;
        let noise = self.embedder.unit_vector(embedder, "noise", payload)?;
        Ok(unit(
            anchor
                .iter()
                .zip(&noise)
                .map(|(a, n)| sign * a + 0.1 * n)
                .collect(),
        ))
    }

    /// Random direction with the anchor component removed.
    fn orthogonal(&self, embedder: &str, payload: &[u8]) -> Result<Vec<f64>> {
        let anchor = self.anchor(embedder)?;
        let noise = self.embedder.unit_vector(embedder, "noise", payload)?;
        let dot: f64 = anchor.iter().zip(&noise).map(|(a, n)| a * n).sum();
        Ok(unit(
            noise.iter().zip(&anchor).map(|(n, a)| n - dot * a).collect(),
        ))
    }

    fn embed_image(&self, embedder: &str, image_b64: &str) -> Result<Vec<f64>> {
        let img = decode_image(image_b64)?;
        let evidence = count_pixels(&img, is_evidence_pixel) > 0;
        let decoy = count_pixels(&img, is_decoy_pixel) > 0;
        let payload = image_b64.as_bytes();
        match (self.mode, evidence, decoy) {
            (PlantedMode::Faithful, true, _) => self.near(embedder, 1.0, payload),
            (PlantedMode::Adversarial, _, true) => self.near(embedder, 1.0, payload),
            (PlantedMode::Adversarial, true, false) => self.near(embedder, -1.0, payload),
            _ => self.orthogonal(embedder, payload),
        }
    }
}

impl Backend for PlantedBackend {
    fn explain(&self, req: &ExplainRequest) -> Result<ExplainResponse> {
        req.validate()?;
        Ok(ExplainResponse {
            explanation: PLANTED_EXPLANATION.into(),
            latency_seconds: self
                .latency
                .sample(self.seed, self.latency.explain_seconds, &req.question),
        })
    }

    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse> {
        req.validate()?;
        let img = decode_image(&req.image_b64)?;
        let visible = count_pixels(&img, is_evidence_pixel) >= MIN_EVIDENCE_PIXELS;
        let answer = match self.answers.get(&req.question) {
            Some(a) if visible => a.clone(),
            _ => UNKNOWN_ANSWER.to_string(),
        };
        Ok(AnswerResponse {
            answer,
            latency_seconds: self
                .latency
                .sample(self.seed, self.latency.answer_seconds, &req.question),
        })
    }

    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse> {
        self.embedder.check_ids(req)?;
        let vectors = req
            .embedder_ids
            .iter()
            .map(|id| {
                let v = match req.modality {
                    Modality::Text => self.near(id, 1.0, req.payload().as_bytes())?,
                    Modality::Image => self.embed_image(id, req.payload())?,
                };
                Ok((id.clone(), EmbeddingVector::new(v)?))
            })
            .collect::<Result<_>>()?;
        Ok(EmbedResponse {
            vectors,
            latency_seconds: self.latency.embed_seconds,
        })
    }
}

/// Question-keyed canned explanations and answers, with hash-seeded
/// embeddings. Unknown questions fall back to the defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture {
    #[serde(default)]
    pub explanations: HashMap<String, String>,
    #[serde(default)]
    pub answers: HashMap<String, String>,
    #[serde(default = "Fixture::default_explanation")]
    pub default_explanation: String,
    #[serde(default = "Fixture::default_answer")]
    pub default_answer: String,
}

impl Fixture {
    fn default_explanation() -> String {
        "canned explanation: the value sits in the upper part of the page".into()
    }

    fn default_answer() -> String {
        "canned answer".into()
    }

    pub fn canned() -> Self {
        Self {
            explanations: HashMap::new(),
            answers: HashMap::new(),
            default_explanation: Self::default_explanation(),
            default_answer: Self::default_answer(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("fixture {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct FixtureBackend {
    fixture: Fixture,
    embedder: HashEmbedder,
    latency: SyntheticLatency,
    seed: u64,
}

impl FixtureBackend {
    pub fn new(fixture: Fixture, seed: u64) -> Self {
        Self {
            fixture,
            embedder: HashEmbedder::new(seed),
            latency: SyntheticLatency::default(),
            seed,
        }
    }

    /// A backend that answers everything with the canned defaults.
    pub fn canned(seed: u64) -> Self {
        Self::new(Fixture::canned(), seed)
    }

    pub fn with_latency(mut self, latency: SyntheticLatency) -> Self {
        self.latency = latency;
        self
    }
}

impl Backend for FixtureBackend {
    fn explain(&self, req: &ExplainRequest) -> Result<ExplainResponse> {
        req.validate()?;
        let explanation = self
            .fixture
            .explanations
            .get(&req.question)
            .unwrap_or(&self.fixture.default_explanation)
            .clone();
        Ok(ExplainResponse {
            explanation,
            latency_seconds: self
                .latency
                .sample(self.seed, self.latency.explain_seconds, &req.question),
        })
    }

    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse> {
        req.validate()?;
        let answer = self
            .fixture
            .answers
            .get(&req.question)
            .unwrap_or(&self.fixture.default_answer)
            .clone();
        Ok(AnswerResponse {
            answer,
            latency_seconds: self
                .latency
                .sample(self.seed, self.latency.answer_seconds, &req.question),
        })
    }

    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse> {
        Ok(EmbedResponse {
            vectors: self.embedder.embed_plain(req)?,
            latency_seconds: self.latency.embed_seconds,
        })
    }
}
