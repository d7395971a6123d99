//! Blocking HTTP client for the inference wire contract.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{AnswerBody, EmbedBody, ErrorBody, ExplainBody};
use super::{
    AnswerRequest, AnswerResponse, Backend, BackendConfig, EmbedRequest, EmbedResponse,
    ExplainRequest, ExplainResponse,
};
use crate::error::{Error, Result};
use crate::ranking::EmbeddingVector;

const RETRY_BACKOFF: Duration = Duration::from_millis(200);

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt<T> {
    Done(T),
    Retry(String),
}

#[derive(Debug)]
pub struct HttpBackend {
    config: BackendConfig,
    client: Client,
    gate: Gate,
    dims: Mutex<HashMap<String, usize>>,
}

impl HttpBackend {
    pub fn new(mut config: BackendConfig) -> Result<Self> {
        config.validate()?;
        if !config.base_url.path().ends_with('/') {
            let path = format!("{}/", config.base_url.path());
            config.base_url.set_path(&path);
        }
        let client = Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            gate: Gate::new(config.max_in_flight),
            config,
            client,
            dims: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<(Resp, f64)> {
        let url = self
            .config
            .base_url
            .join(path)
            .map_err(|e| Error::Config(format!("bad endpoint {path}: {e}")))?;
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(RETRY_BACKOFF * attempt);
            }
            let _permit = self.gate.acquire();
            let start = Instant::now();
            match self.try_post(url.clone(), body)? {
                Attempt::Done(resp) => return Ok((resp, start.elapsed().as_secs_f64())),
                Attempt::Retry(why) => {
                    log::warn!("{url} attempt {} failed: {why}", attempt + 1);
                    last = why;
                }
            }
        }
        Err(Error::BackendUnavailable(format!(
            "{url} after {} attempts: {last}",
            self.config.retries + 1
        )))
    }

    fn try_post<Req: Serialize, Resp: DeserializeOwned>(&self, url: url::Url, body: &Req) -> Result<Attempt<Resp>> {
        let resp = match self.client.post(url).json(body).send() {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        if status == StatusCode::OK {
            return serde_json::from_str(&text)
                .map(Attempt::Done)
                .map_err(|e| Error::Protocol(format!("malformed response body: {e}")));
        }
        let message = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or(text);
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            Ok(Attempt::Retry(format!("{status}: {message}")))
        } else {
            Err(Error::Protocol(format!("{status}: {message}")))
        }
    }

    fn check_dims(&self, vectors: &BTreeMap<String, EmbeddingVector>) -> Result<()> {
        let mut dims = self.dims.lock().unwrap();
        for (id, v) in vectors {
            let seen = *dims.entry(id.clone()).or_insert(v.dim());
            if seen != v.dim() {
                return Err(Error::Protocol(format!(
                    "embedder {id} changed dimension from {seen} to {}",
                    v.dim()
                )));
            }
        }
        Ok(())
    }
}

impl Backend for HttpBackend {
    fn explain(&self, req: &ExplainRequest) -> Result<ExplainResponse> {
        req.validate()?;
        let (body, latency_seconds): (ExplainBody, _) = self.post("v1/explain", req)?;
        if body.explanation.trim().is_empty() {
            return Err(Error::Protocol("empty explanation".into()));
        }
        Ok(ExplainResponse {
            explanation: body.explanation,
            latency_seconds,
        })
    }

    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse> {
        req.validate()?;
        let (body, latency_seconds): (AnswerBody, _) = self.post("v1/answer", req)?;
        Ok(AnswerResponse {
            answer: body.answer,
            latency_seconds,
        })
    }

    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse> {
        req.validate()?;
        if let Some(id) = req
            .embedder_ids
            .iter()
            .find(|id| !self.config.embedder_ids.contains(id))
        {
            return Err(Error::Config(format!("embedder {id:?} is not configured")));
        }
        let (body, latency_seconds): (EmbedBody, _) = self.post("v1/embed", req)?;
        let mut returned: Vec<&String> = body.vectors.keys().collect();
        let mut requested: Vec<&String> = req.embedder_ids.iter().collect();
        returned.sort();
        requested.sort();
        requested.dedup();
        if returned != requested {
            return Err(Error::Protocol(format!(
                "requested embedders {requested:?}, got {returned:?}"
            )));
        }
        let vectors = body
            .vectors
            .into_iter()
            .map(|(id, v)| {
                EmbeddingVector::new(v)
                    .map(|v| (id.clone(), v))
                    .map_err(|e| Error::Protocol(format!("embedder {id}: {e}")))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        self.check_dims(&vectors)?;
        Ok(EmbedResponse {
            vectors,
            latency_seconds,
        })
    }
}
