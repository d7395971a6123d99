//! On-disk run directories and the stage artifact cache.
//!
//! ```text
//! <out>/runs/<config_hash>/manifest.json
//! <out>/runs/<config_hash>/report.json
//! <out>/runs/<config_hash>/skips.jsonl
//! <out>/runs/<config_hash>/<question_id>/{explanation,embeddings,selection,answer}.json
//! <out>/runs/<config_hash>/<question_id>/outcome.json
//! <out>/embeddings/<scope>/<question_id>/<embedder>/<cell|explanation-digest>.json
//! ```
//!
//! Writes go to a temp file in the target directory and are renamed into
//! place without clobbering, so concurrent writers of one key leave exactly
//! one complete value. Unreadable entries count as misses.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Mode;
use crate::error::{Error, Result};
use crate::ranking::EmbeddingVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Explanation,
    Embeddings,
    Selection,
    Answer,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Explanation => "explanation",
            Stage::Embeddings => "embeddings",
            Stage::Selection => "selection",
            Stage::Answer => "answer",
        }
    }

    /// The stage whose artifact must already exist in `mode`.
    pub fn prerequisite(&self, mode: Mode) -> Option<Stage> {
        match (mode, self) {
            (Mode::Baseline, _) | (_, Stage::Explanation) => None,
            (_, Stage::Embeddings) => Some(Stage::Explanation),
            (_, Stage::Selection) => Some(Stage::Embeddings),
            (_, Stage::Answer) => Some(Stage::Selection),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageArtifact<T> {
    pub question_id: String,
    pub stage: Stage,
    pub payload: T,
    pub latency_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedVector {
    pub vector: EmbeddingVector,
    pub latency_seconds: f64,
}

/// Maps an id onto a single safe path component.
pub fn path_component(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        match b {
            b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'-' | b'_' => out.push(b as char),
            b'.' if !out.is_empty() => out.push('.'),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    if out.is_empty() {
        out.push_str("%00");
    }
    out
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Option<T> {
    let bytes = std::fs::read(path).ok()?;
    match serde_json::from_slice(&bytes) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("ignoring corrupt cache entry {}: {e}", path.display());
            None
        }
    }
}

/// Atomically writes `bytes` unless `path` already exists. Returns whether
/// this call's value landed.
pub fn write_once(path: &Path, bytes: &[u8]) -> Result<bool> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    match tmp.persist_noclobber(path) {
        Ok(_) => Ok(true),
        Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => Ok(false),
        Err(e) => Err(Error::io(path, e.error)),
    }
}

/// Atomically replaces `path` with `bytes`.
pub fn write_replace(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunStore {
    run_dir: PathBuf,
    embed_dir: PathBuf,
    mode: Mode,
}

impl RunStore {
    pub fn new(out: &Path, config_hash: &str, embedding_scope: &str, mode: Mode) -> Self {
        Self {
            run_dir: out.join("runs").join(config_hash),
            embed_dir: out.join("embeddings").join(embedding_scope),
            mode,
        }
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn question_dir(&self, question_id: &str) -> PathBuf {
        self.run_dir.join(path_component(question_id))
    }

    fn stage_path(&self, question_id: &str, stage: Stage) -> PathBuf {
        self.question_dir(question_id)
            .join(format!("{}.json", stage.name()))
    }

    pub fn get<T: DeserializeOwned>(&self, question_id: &str, stage: Stage) -> Option<StageArtifact<T>> {
        let artifact: StageArtifact<T> = read_json(&self.stage_path(question_id, stage))?;
        (artifact.stage == stage && artifact.question_id == question_id).then_some(artifact)
    }

    pub fn has(&self, question_id: &str, stage: Stage) -> bool {
        self.stage_path(question_id, stage).is_file()
    }

    /// Stores a stage artifact. Its prerequisite stage must already be
    /// stored. Returns false if another writer got there first.
    pub fn put<T: Serialize>(&self, artifact: &StageArtifact<T>) -> Result<bool> {
        if let Some(pre) = artifact.stage.prerequisite(self.mode) {
            if !self.has(&artifact.question_id, pre) {
                return Err(Error::StageOrder(format!(
                    "{} for question {} stored before {pre}",
                    artifact.stage, artifact.question_id
                )));
            }
        }
        let bytes = serde_json::to_vec_pretty(artifact)?;
        write_once(&self.stage_path(&artifact.question_id, artifact.stage), &bytes)
    }

    fn vector_path(&self, question_id: &str, embedder: &str, key: &str) -> PathBuf {
        self.embed_dir
            .join(path_component(question_id))
            .join(path_component(embedder))
            .join(format!("{}.json", path_component(key)))
    }

    pub fn get_vector(&self, question_id: &str, embedder: &str, key: &str) -> Option<CachedVector> {
        read_json(&self.vector_path(question_id, embedder, key))
    }

    pub fn put_vector(&self, question_id: &str, embedder: &str, key: &str, v: &CachedVector) -> Result<bool> {
        write_once(
            &self.vector_path(question_id, embedder, key),
            &serde_json::to_vec(v)?,
        )
    }

    pub fn read<T: DeserializeOwned>(&self, relative: &str) -> Option<T> {
        read_json(&self.run_dir.join(relative))
    }

    pub fn write<T: Serialize>(&self, relative: &str, value: &T) -> Result<()> {
        write_replace(&self.run_dir.join(relative), &serde_json::to_vec_pretty(value)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn artifact<T>(qid: &str, stage: Stage, payload: T) -> StageArtifact<T> {
        StageArtifact {
            question_id: qid.into(),
            stage,
            payload,
            latency_seconds: 1.25,
        }
    }

    #[test]
    fn round_trip_and_config_isolation() {
        let out = tempfile::tempdir().unwrap();
        let store = RunStore::new(out.path(), "aaaa", "s", Mode::Eagers);
        let a = artifact("q1", Stage::Explanation, "the date is top right".to_string());
        assert!(store.put(&a).unwrap());
        assert_eq!(store.get::<String>("q1", Stage::Explanation).unwrap(), a);

        let other = RunStore::new(out.path(), "bbbb", "s", Mode::Eagers);
        assert!(other.get::<String>("q1", Stage::Explanation).is_none());
    }

    #[test]
    fn stage_order_enforced() {
        let out = tempfile::tempdir().unwrap();
        let store = RunStore::new(out.path(), "h", "s", Mode::Eagers);
        let ans = artifact("q", Stage::Answer, "x".to_string());
        assert!(matches!(store.put(&ans), Err(Error::StageOrder(_))));

        let base = RunStore::new(out.path(), "b", "s", Mode::Baseline);
        assert!(base.put(&ans).unwrap());
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let out = tempfile::tempdir().unwrap();
        let store = RunStore::new(out.path(), "h", "s", Mode::Eagers);
        let path = store.question_dir("q").join("explanation.json");
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, b"{\"question_id\": ").unwrap();
        assert!(store.get::<String>("q", Stage::Explanation).is_none());
    }

    #[test]
    fn path_components_are_safe_and_distinct() {
        assert_eq!(path_component("49153"), "49153");
        assert_ne!(path_component("a/b"), path_component("a_b"));
        assert_eq!(path_component(".."), "%2E.");
        assert!(!path_component("../x").contains('/'));
    }

    #[test]
    fn concurrent_writers_leave_one_value() {
        let out = tempfile::tempdir().unwrap();
        let store = RunStore::new(out.path(), "h", "s", Mode::Eagers);
        let wins: usize = std::thread::scope(|s| {
            let handles: Vec<_> = (0..16)
                .map(|i| {
                    let store = &store;
                    s.spawn(move || {
                        let payload = format!("writer-{i}-").repeat(2000);
                        let won = store.put(&artifact("q", Stage::Explanation, payload)).unwrap();
                        let seen = store.get::<String>("q", Stage::Explanation).unwrap();
                        assert!(seen.payload.starts_with("writer-"));
                        assert_eq!(seen.payload.len() % 2000, 0);
                        (won, seen.payload)
                    })
                })
                .collect();
            let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
            let first = &results[0].1;
            assert!(results.iter().all(|(_, p)| p == first));
            results.iter().filter(|(w, _)| *w).count()
        });
        assert_eq!(wins, 1);
    }
}
