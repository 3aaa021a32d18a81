use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ScoringError;

/// Client for an external encoder speaking `POST /embed`
/// (`{"texts": [...]}` -> `{"vectors": [[...], ...]}`).
#[derive(Debug, Clone)]
pub struct RemoteEncoder {
    endpoint: String,
    retries: usize,
    timeout: Duration,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

enum Attempt {
    Retry(String),
    Fatal(ScoringError),
}

impl RemoteEncoder {
    /// `endpoint` is the base URL; `/embed` is appended unless already present.
    pub fn new(endpoint: &str) -> Self {
        let endpoint = endpoint.trim_end_matches('/');
        let endpoint = if endpoint.ends_with("/embed") {
            endpoint.to_string()
        } else {
            format!("{endpoint}/embed")
        };
        Self {
            endpoint,
            retries: 0,
            timeout: Duration::from_secs(30),
        }
    }

    /// Extra attempts after a transport failure or 5xx response.
    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn attempt(&self, agent: &ureq::Agent, texts: &[&str]) -> Result<Vec<Vec<f32>>, Attempt> {
        let mut response = agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { texts })
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let err = ScoringError::Status(status);
            return Err(if status >= 500 {
                Attempt::Retry(err.to_string())
            } else {
                Attempt::Fatal(err)
            });
        }
        let body: EmbedResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(ScoringError::Remote(format!("invalid response body: {e}"))))?;
        Ok(body.vectors)
    }

    /// One vector per text, in input order, all of the same dimension.
    pub fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ScoringError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut last = String::new();
        for attempt in 0..=self.retries {
            match self.attempt(&agent, texts) {
                Ok(vectors) => return validate(texts.len(), vectors),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::debug!("embed attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(ScoringError::Transport {
            attempts: self.retries + 1,
            message: last,
        })
    }
}

fn validate(expected: usize, vectors: Vec<Vec<f32>>) -> Result<Vec<Vec<f32>>, ScoringError> {
    if vectors.len() != expected {
        return Err(ScoringError::Remote(format!(
            "requested {expected} vectors, received {}",
            vectors.len()
        )));
    }
    if let Some(first) = vectors.first() {
        let dim = first.len();
        if dim == 0 {
            return Err(ScoringError::Remote("received empty vectors".into()));
        }
        if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != dim) {
            return Err(ScoringError::Remote(format!(
                "vector {i} has dimension {}, expected {dim}",
                v.len()
            )));
        }
    }
    Ok(vectors)
}

/// Convenience wrapper around [`RemoteEncoder::embed`].
pub fn fetch_remote_embeddings(endpoint: &str, texts: &[&str], retries: usize) -> Result<Vec<Vec<f32>>, ScoringError> {
    RemoteEncoder::new(endpoint).with_retries(retries).embed(texts)
}
