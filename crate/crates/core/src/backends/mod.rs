//! Model inference boundary.
//!
//! Every model call (explanation, answer, embedding) goes through the
//! [`Backend`] trait. [`http::HttpBackend`] speaks the JSON wire contract to
//! a model server; [`mock`] holds deterministic offline implementations and
//! [`serve`] exposes any backend over the same contract.
//!
//! Wire contract (POST, JSON, UTF-8):
//!
//! ```text
//! /v1/explain {"image_b64","question","prompt_id","model_id"} -> {"explanation"}
//! /v1/answer  {"image_b64","question","prompt_id","model_id"} -> {"answer"}
//! /v1/embed   {"modality","text"?,"image_b64"?,"embedder_ids"} -> {"vectors": {id: [f64]}}
//! non-200     {"error"}
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::ranking::EmbeddingVector;

pub mod http;
pub mod mock;
pub mod recording;
pub mod serve;

pub const DEFAULT_EMBEDDERS: [&str; 3] = ["blip", "clip", "align"];
pub const DEFAULT_MODEL_ID: &str = "qwen2.5-vl-3b-instruct";

pub fn encode_image(img: &ImageBuffer) -> Result<String> {
    Ok(base64::engine::general_purpose::STANDARD.encode(img.encode_png()?))
}

pub fn decode_image(image_b64: &str) -> Result<ImageBuffer> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(image_b64)
        .map_err(|e| Error::Protocol(format!("image_b64 is not valid base64: {e}")))?;
    ImageBuffer::decode(&bytes)
}

fn require_nonempty(field: &str, value: &str) -> Result<()> {
    if value.trim().is_empty() {
        return Err(Error::Precondition(format!("{field} must not be empty")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainRequest {
    pub image_b64: String,
    pub question: String,
    pub prompt_id: String,
    pub model_id: String,
}

impl ExplainRequest {
    pub fn validate(&self) -> Result<()> {
        require_nonempty("question", &self.question)?;
        require_nonempty("image_b64", &self.image_b64)?;
        require_nonempty("prompt_id", &self.prompt_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainResponse {
    pub explanation: String,
    pub latency_seconds: f64,
}

/// Question on the masked image. There is deliberately no field for the
/// explanation: the answering model only ever sees pixels and the question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub image_b64: String,
    pub question: String,
    pub prompt_id: String,
    pub model_id: String,
}

impl AnswerRequest {
    pub fn validate(&self) -> Result<()> {
        require_nonempty("question", &self.question)?;
        require_nonempty("image_b64", &self.image_b64)?;
        require_nonempty("prompt_id", &self.prompt_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerResponse {
    pub answer: String,
    pub latency_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Image => "image",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedRequest {
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
    pub embedder_ids: Vec<String>,
}

impl EmbedRequest {
    pub fn text(text: impl Into<String>, embedder_ids: Vec<String>) -> Self {
        Self {
            modality: Modality::Text,
            text: Some(text.into()),
            image_b64: None,
            embedder_ids,
        }
    }

    pub fn image(image_b64: impl Into<String>, embedder_ids: Vec<String>) -> Self {
        Self {
            modality: Modality::Image,
            text: None,
            image_b64: Some(image_b64.into()),
            embedder_ids,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedder_ids.is_empty() {
            return Err(Error::Precondition("embedder_ids must not be empty".into()));
        }
        match (self.modality, &self.text, &self.image_b64) {
            (Modality::Text, Some(t), None) => require_nonempty("text", t),
            (Modality::Image, None, Some(i)) => require_nonempty("image_b64", i),
            (m, _, _) => Err(Error::Precondition(format!(
                "modality {m} requires exactly its own payload field"
            ))),
        }
    }

    /// The payload bytes, whichever modality.
    pub fn payload(&self) -> &str {
        self.text
            .as_deref()
            .or(self.image_b64.as_deref())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedResponse {
    pub vectors: BTreeMap<String, EmbeddingVector>,
    pub latency_seconds: f64,
}

/// Response bodies as they travel on the wire.
pub mod wire {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ExplainBody {
        pub explanation: String,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct AnswerBody {
        pub answer: String,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct EmbedBody {
        pub vectors: BTreeMap<String, Vec<f64>>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ErrorBody {
        pub error: String,
    }
}

/// Anything that can serve the three inference calls.
pub trait Backend: Send + Sync {
    fn explain(&self, req: &ExplainRequest) -> Result<ExplainResponse>;
    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse>;
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse>;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn explain(&self, req: &ExplainRequest) -> Result<ExplainResponse> {
        (**self).explain(req)
    }
    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse> {
        (**self).answer(req)
    }
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse> {
        (**self).embed(req)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn explain(&self, req: &ExplainRequest) -> Result<ExplainResponse> {
        (**self).explain(req)
    }
    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse> {
        (**self).answer(req)
    }
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse> {
        (**self).embed(req)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub base_url: Url,
    pub timeout_seconds: f64,
    pub retries: u32,
    pub embedder_ids: Vec<String>,
    pub model_id: String,
    /// Upper bound on concurrent in-flight requests to this backend.
    pub max_in_flight: usize,
}

impl BackendConfig {
    pub fn new(base_url: Url) -> Self {
        Self {
            base_url,
            timeout_seconds: 120.0,
            retries: 2,
            embedder_ids: DEFAULT_EMBEDDERS.iter().map(|s| s.to_string()).collect(),
            model_id: DEFAULT_MODEL_ID.into(),
            max_in_flight: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedder_ids.is_empty() {
            return Err(Error::Config("at least one embedder id is required".into()));
        }
        if self.timeout_seconds.is_nan() || self.timeout_seconds <= 0.0 {
            return Err(Error::Config(format!(
                "timeout must be positive, got {}",
                self.timeout_seconds
            )));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_seconds)
    }
}
