//! Vector store of labeled bug-report sentences.
//!
//! A corpus of [`LabeledReport`]s is embedded once into an immutable
//! [`RagIndex`]; extraction then retrieves the closest labeled sentences for
//! each sentence of a new report by exact cosine scan.

mod embed;
mod segment;

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::S2rEntity;

pub use embed::{embed, l2_norm, EmbeddingProvider, HashedTrigramProvider, HttpEmbeddingProvider};
pub use segment::segment_report;

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RagError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding of {0:?} has zero norm")]
    DegenerateEmbedding(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("index is empty")]
    EmptyIndex,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index was built with provider {index}, query uses {query}")]
    ProviderMismatch { index: String, query: String },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error("invalid index file: {0}")]
    InvalidIndex(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub text: String,
    #[serde(default)]
    pub labels: Vec<S2rEntity>,
}

/// One line of the corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReport {
    pub report_id: String,
    pub app_id: String,
    pub sentences: Vec<LabeledSentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagRecord {
    pub record_id: String,
    pub sentence: String,
    pub embedding: Vec<f64>,
    pub labels: Vec<S2rEntity>,
    pub source_report: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit {
    pub record: RagRecord,
    pub score: f64,
}

/// Immutable once built; fields are reachable only through accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagIndex {
    provider_id: String,
    dimension: usize,
    records: Vec<RagRecord>,
}

/// Reads a line-delimited JSON corpus, validating ids and sentence text.
pub fn load_corpus(path: &Path) -> Result<Vec<LabeledReport>, RagError> {
    let io = |source| RagError::Io { path: path.display().to_string(), source };
    let file = fs::File::open(path).map_err(io)?;
    let mut reports = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let report: LabeledReport = serde_json::from_str(&line)
            .map_err(|e| RagError::InvalidCorpus(format!("{}:{}: {e}", path.display(), n + 1)))?;
        reports.push(report);
    }
    validate_corpus(&reports)?;
    Ok(reports)
}

pub fn validate_corpus(corpus: &[LabeledReport]) -> Result<(), RagError> {
    let mut seen = HashSet::new();
    for report in corpus {
        if report.report_id.is_empty() {
            return Err(RagError::InvalidCorpus("empty report_id".into()));
        }
        if !seen.insert(report.report_id.as_str()) {
            return Err(RagError::InvalidCorpus(format!("duplicate report_id {}", report.report_id)));
        }
        for (i, s) in report.sentences.iter().enumerate() {
            if s.text.trim().is_empty() {
                return Err(RagError::InvalidCorpus(format!("{} sentence {i} is empty", report.report_id)));
            }
            for label in &s.labels {
                label
                    .validate()
                    .map_err(|e| RagError::InvalidCorpus(format!("{} sentence {i}: {e}", report.report_id)))?;
            }
        }
    }
    Ok(())
}

/// Embeds every labeled sentence. Embedding runs in parallel; records keep
/// corpus order.
pub fn build_index(corpus: &[LabeledReport], provider: &dyn EmbeddingProvider) -> Result<RagIndex, RagError> {
    validate_corpus(corpus)?;
    let items: Vec<(String, &LabeledSentence, &str)> = corpus
        .iter()
        .flat_map(|r| {
            r.sentences
                .iter()
                .enumerate()
                .map(move |(i, s)| (format!("{}:{i:04}", r.report_id), s, r.report_id.as_str()))
        })
        .collect();
    if items.is_empty() {
        return Err(RagError::EmptyCorpus);
    }
    let dimension = provider.dimension();
    let embeddings: Vec<Vec<f64>> =
        items.par_iter().map(|(_, s, _)| embed(&s.text, provider)).collect::<Result<_, _>>()?;
    let records = items
        .into_iter()
        .zip(embeddings)
        .map(|((record_id, s, source), embedding)| {
            if embedding.len() != dimension {
                return Err(RagError::DimensionMismatch { expected: dimension, found: embedding.len() });
            }
            Ok(RagRecord {
                record_id,
                sentence: s.text.clone(),
                embedding,
                labels: s.labels.clone(),
                source_report: source.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RagIndex { provider_id: provider.provider_id().to_string(), dimension, records })
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (l2_norm(a) * l2_norm(b))).clamp(-1.0, 1.0)
}

impl RagIndex {
    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[RagRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Top-`k` records by cosine score, ties by ascending record id.
    pub fn retrieve(
        &self,
        query_sentence: &str,
        k: usize,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Vec<RetrievalHit>, RagError> {
        if provider.provider_id() != self.provider_id {
            return Err(RagError::ProviderMismatch {
                index: self.provider_id.clone(),
                query: provider.provider_id().to_string(),
            });
        }
        let query = embed(query_sentence, provider)?;
        self.retrieve_by_vector(&query, k)
    }

    pub fn retrieve_by_vector(&self, query: &[f64], k: usize) -> Result<Vec<RetrievalHit>, RagError> {
        if k == 0 {
            return Err(RagError::ZeroK);
        }
        if self.records.is_empty() {
            return Err(RagError::EmptyIndex);
        }
        if query.len() != self.dimension {
            return Err(RagError::DimensionMismatch { expected: self.dimension, found: query.len() });
        }
        let mut scored: Vec<(f64, &RagRecord)> =
            self.records.iter().map(|r| (cosine(query, &r.embedding), r)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.record_id.cmp(&b.1.record_id)));
        Ok(scored.into_iter().take(k).map(|(score, r)| RetrievalHit { record: r.clone(), score }).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("index serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), RagError> {
        fs::write(path, self.to_json()).map_err(|source| RagError::Io { path: path.display().to_string(), source })
    }

    /// Parses a persisted index and checks dimensions, norms and id
    /// uniqueness.
    pub fn from_json(text: &str) -> Result<RagIndex, RagError> {
        let index: RagIndex = serde_json::from_str(text).map_err(|e| RagError::InvalidIndex(e.to_string()))?;
        if index.dimension == 0 {
            return Err(RagError::InvalidIndex("dimension must be positive".into()));
        }
        let mut ids = HashSet::new();
        for r in &index.records {
            if r.embedding.len() != index.dimension {
                return Err(RagError::InvalidIndex(format!(
                    "record {} has dimension {}, index declares {}",
                    r.record_id,
                    r.embedding.len(),
                    index.dimension
                )));
            }
            let norm = l2_norm(&r.embedding);
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(RagError::InvalidIndex(format!("record {} has norm {norm}", r.record_id)));
            }
            if !ids.insert(r.record_id.as_str()) {
                return Err(RagError::InvalidIndex(format!("duplicate record id {}", r.record_id)));
            }
        }
        Ok(index)
    }

    pub fn load(path: &Path) -> Result<RagIndex, RagError> {
        let text =
            fs::read_to_string(path).map_err(|source| RagError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}
