//! HTTP embedding client.
//!
//! `POST {endpoint}/embed` with `{"texts": [...]}`; a 200 response carries
//! `{"dim": d, "embeddings": [[...], ...]}`. Non-200 statuses and malformed
//! bodies are retried with exponential backoff; a dimension mismatch is
//! reported immediately.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Embedder, ProviderConfig};
use crate::{Error, Result};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    embeddings: Vec<Vec<f64>>,
}

enum Attempt {
    Retryable(String),
    Fatal(Error),
}

pub struct RemoteEmbedder {
    agent: ureq::Agent,
    url: String,
    dim: usize,
    batch_size: usize,
    max_retries: u32,
    backoff_base: Duration,
    max_in_flight: usize,
}

impl RemoteEmbedder {
    pub fn new(config: &ProviderConfig) -> Result<Self> {
        let endpoint = config
            .endpoint
            .as_deref()
            .ok_or_else(|| Error::Config("remote backend needs an endpoint".into()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            url: format!("{}/embed", endpoint.trim_end_matches('/')),
            dim: config.dim,
            batch_size: config.batch_size.max(1),
            max_retries: config.max_retries,
            backoff_base: Duration::from_millis(config.backoff_base_ms),
            max_in_flight: config.max_in_flight.max(1),
        })
    }

    fn attempt(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f64>>, Attempt> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(EmbedRequest { texts })
            .map_err(|e| Attempt::Retryable(e.to_string()))?;
        if resp.status() != 200 {
            return Err(Attempt::Retryable(format!("status {}", resp.status())));
        }
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Retryable(format!("malformed body: {e}")))?;
        if body.dim != self.dim {
            return Err(Attempt::Fatal(Error::DimMismatch {
                expected: self.dim,
                actual: body.dim,
            }));
        }
        if body.embeddings.len() != texts.len() {
            return Err(Attempt::Retryable(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                body.embeddings.len()
            )));
        }
        if let Some(bad) = body.embeddings.iter().find(|v| v.len() != self.dim) {
            return Err(Attempt::Fatal(Error::DimMismatch {
                expected: self.dim,
                actual: bad.len(),
            }));
        }
        Ok(body.embeddings)
    }

    /// One request with retries. All-or-error: a batch is never returned
    /// partially.
    fn request_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
            }
            match self.attempt(texts) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(msg)) => {
                    log::warn!("embed request failed (attempt {}): {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(Error::BackendUnavailable(format!(
            "{} after {} retries: {last}",
            self.url, self.max_retries
        )))
    }

    /// Embed all texts in batches, at most `max_in_flight` requests at once,
    /// results in input order.
    pub fn embed_all(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let batches: Vec<&[&str]> = texts.chunks(self.batch_size).collect();
        let mut out = Vec::with_capacity(texts.len());
        for wave in batches.chunks(self.max_in_flight) {
            let results: Vec<Result<Vec<Vec<f64>>>> = thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|batch| s.spawn(move || self.request_batch(batch)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("embedding worker panicked"))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        self.embed_all(texts)
    }
}
