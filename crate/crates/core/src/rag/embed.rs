use std::time::Duration;

use serde::Deserialize;

use super::RagError;

/// Anything that maps text to a fixed-length vector.
///
/// Providers do not need to normalize; [`embed`] does that.
pub trait EmbeddingProvider: Sync {
    /// Stable name recorded in a built index; queries must use a provider with
    /// the same id.
    fn provider_id(&self) -> &str;

    fn dimension(&self) -> usize;

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, RagError>;
}

/// Embeds `text` and L2-normalizes the result.
pub fn embed(text: &str, provider: &dyn EmbeddingProvider) -> Result<Vec<f64>, RagError> {
    if text.trim().is_empty() {
        return Err(RagError::EmptyText);
    }
    let mut v = provider.embed_raw(text)?;
    if v.len() != provider.dimension() {
        return Err(RagError::DimensionMismatch { expected: provider.dimension(), found: v.len() });
    }
    let norm = l2_norm(&v);
    if norm == 0.0 || !norm.is_finite() {
        return Err(RagError::DegenerateEmbedding(text.to_string()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Offline provider: lowercased character trigrams hashed (FNV-1a) into a
/// term-frequency vector. Texts shorter than three characters count as a
/// single gram.
#[derive(Debug, Clone)]
pub struct HashedTrigramProvider {
    dimension: usize,
    id: String,
}

impl HashedTrigramProvider {
    pub const DEFAULT_DIMENSION: usize = 384;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        HashedTrigramProvider { dimension, id: format!("hashed-trigram-{dimension}") }
    }
}

impl Default for HashedTrigramProvider {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl EmbeddingProvider for HashedTrigramProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, RagError> {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut v = vec![0.0; self.dimension];
        let mut add = |gram: &[char]| {
            let s: String = gram.iter().collect();
            let bucket = (fnv1a(s.as_bytes()) % self.dimension as u64) as usize;
            v[bucket] += 1.0;
        };
        if chars.len() < 3 {
            add(&chars);
        } else {
            chars.windows(3).for_each(&mut add);
        }
        Ok(v)
    }
}

/// Remote provider speaking the common `/embeddings` JSON shape:
/// request `{"model": ..., "input": [text]}`, response
/// `{"data": [{"embedding": [...]}]}`.
pub struct HttpEmbeddingProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dimension: usize,
    id: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl HttpEmbeddingProvider {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        dimension: usize,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, RagError> {
        let model = model.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RagError::ProviderUnavailable(e.to_string()))?;
        Ok(HttpEmbeddingProvider {
            endpoint: endpoint.into(),
            id: format!("http:{model}"),
            model,
            api_key,
            dimension,
            client,
        })
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, RagError> {
        let mut request =
            self.client.post(&self.endpoint).json(&serde_json::json!({ "model": self.model, "input": [text] }));
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| RagError::ProviderUnavailable(e.to_string()))?;
        let body: EmbeddingResponse =
            response.json().map_err(|e| RagError::ProviderUnavailable(format!("bad response: {e}")))?;
        body.data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| RagError::ProviderUnavailable("response carried no embedding".into()))
    }
}
