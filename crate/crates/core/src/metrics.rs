//! Exact match, Levenshtein / ANLS scoring and run timing statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ANLS_THRESHOLD: f64 = 0.5;

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Lowercase, trim, and collapse whitespace runs to a single space.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn normalized_similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (normalize(a), normalize(b));
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / longest as f64
}

fn check_refs(references: &[String]) -> Result<()> {
    if references.is_empty() {
        return Err(Error::InvalidReference("no reference answers".into()));
    }
    Ok(())
}

/// Best similarity over references and the index achieving it.
fn best_similarity(prediction: &str, references: &[String]) -> (f64, usize) {
    references
        .iter()
        .enumerate()
        .map(|(i, r)| (normalized_similarity(prediction, r), i))
        .fold((f64::NEG_INFINITY, 0), |best, cur| if cur.0 > best.0 { cur } else { best })
}

pub fn anls_single(prediction: &str, references: &[String], threshold: f64) -> Result<f64> {
    check_refs(references)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("ANLS threshold {threshold} outside [0, 1]")));
    }
    let (s, _) = best_similarity(prediction, references);
    Ok(if s >= threshold { s } else { 0.0 })
}

pub fn exact_match(prediction: &str, references: &[String]) -> Result<u8> {
    check_refs(references)?;
    let p = normalize(prediction);
    Ok(u8::from(references.iter().any(|r| normalize(r) == p)))
}

/// Exact match on the raw strings, no normalization.
pub fn exact_match_raw(prediction: &str, references: &[String]) -> Result<u8> {
    check_refs(references)?;
    Ok(u8::from(references.iter().any(|r| r == prediction)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerJudgment {
    pub em: u8,
    pub anls_score: f64,
    pub best_reference: usize,
}

impl AnswerJudgment {
    pub fn judge(prediction: &str, references: &[String], threshold: f64, raw_em: bool) -> Result<Self> {
        let anls_score = anls_single(prediction, references, threshold)?;
        let em = if raw_em {
            exact_match_raw(prediction, references)?
        } else {
            exact_match(prediction, references)?
        };
        let (_, best_reference) = best_similarity(prediction, references);
        Ok(Self {
            em,
            anls_score,
            best_reference,
        })
    }

    /// Scored as wrong; used when a question fails before producing an answer.
    pub fn failed() -> Self {
        Self {
            em: 0,
            anls_score: 0.0,
            best_reference: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_seconds: f64,
    pub cv_percent: f64,
    pub n: usize,
    /// False when the mean is zero and the CV is reported as 0.
    pub cv_defined: bool,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyRun("no timing samples".into()));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        if mean <= 0.0 {
            return Ok(Self {
                mean_seconds: 0.0,
                cv_percent: 0.0,
                n: samples.len(),
                cv_defined: false,
            });
        }
        let var = samples.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            mean_seconds: mean,
            cv_percent: 100.0 * var.sqrt() / mean,
            n: samples.len(),
            cv_defined: true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub em_percent: f64,
    pub anls_percent: f64,
    /// Mean ANLS on the 0..1 scale.
    pub anls: f64,
    pub timing: TimingStats,
}

pub fn aggregate(judgments: &[AnswerJudgment], timings: &[f64]) -> Result<Aggregate> {
    if judgments.is_empty() {
        return Err(Error::EmptyRun("no judgments to aggregate".into()));
    }
    let n = judgments.len() as f64;
    let em = judgments.iter().map(|j| j.em as f64).sum::<f64>() / n;
    let anls = judgments.iter().map(|j| j.anls_score).sum::<f64>() / n;
    Ok(Aggregate {
        em_percent: 100.0 * em,
        anls_percent: 100.0 * anls,
        anls,
        timing: TimingStats::from_samples(timings)?,
    })
}
