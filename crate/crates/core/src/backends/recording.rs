//! Call-counting wrapper that also keeps the serialized answer traffic.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{
    AnswerRequest, AnswerResponse, Backend, EmbedRequest, EmbedResponse, ExplainRequest,
    ExplainResponse,
};
use crate::error::Result;

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct CallCounts {
    pub explain: usize,
    pub answer: usize,
    pub embed: usize,
}

impl CallCounts {
    pub fn total(&self) -> usize {
        self.explain + self.answer + self.embed
    }
}

#[derive(Debug)]
pub struct RecordingBackend<B> {
    inner: B,
    explain: AtomicUsize,
    answer: AtomicUsize,
    embed: AtomicUsize,
    answer_traffic: Mutex<Vec<String>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            explain: AtomicUsize::new(0),
            answer: AtomicUsize::new(0),
            embed: AtomicUsize::new(0),
            answer_traffic: Mutex::new(Vec::new()),
        }
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts {
            explain: self.explain.load(Ordering::SeqCst),
            answer: self.answer.load(Ordering::SeqCst),
            embed: self.embed.load(Ordering::SeqCst),
        }
    }

    pub fn reset(&self) {
        self.explain.store(0, Ordering::SeqCst);
        self.answer.store(0, Ordering::SeqCst);
        self.embed.store(0, Ordering::SeqCst);
        self.answer_traffic.lock().unwrap().clear();
    }

    /// Every answer request seen so far, as wire JSON.
    pub fn answer_traffic(&self) -> Vec<String> {
        self.answer_traffic.lock().unwrap().clone()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn explain(&self, req: &ExplainRequest) -> Result<ExplainResponse> {
        self.explain.fetch_add(1, Ordering::SeqCst);
        self.inner.explain(req)
    }

    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse> {
        self.answer.fetch_add(1, Ordering::SeqCst);
        self.answer_traffic
            .lock()
            .unwrap()
            .push(serde_json::to_string(req)?);
        self.inner.answer(req)
    }

    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse> {
        self.embed.fetch_add(1, Ordering::SeqCst);
        self.inner.embed(req)
    }
}
