//! Fixed-embedding access for (state, action) pairs.
//!
//! The engine never computes attention in-process: it consumes a frozen
//! encoder through a small HTTP contract, with a deterministic hash-based
//! double built in for desk-scale runs and tests. Encodings are cached per
//! episode only.

use std::collections::HashMap;
use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default pooled-vector width of the reference frozen encoder.
pub const DEFAULT_EMBED_DIM: usize = 768;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("encoder transport failure: {0}")]
    Transport(String),
    #[error("encoder returned {got} values, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("malformed encoder response: {0}")]
    Protocol(String),
}

/// A frozen text-pair encoder returning a fixed-width pooled vector.
pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, state_text: &str, action_name: &str) -> Result<Vec<f64>, EncoderError>;
}

/// The literal pair sequence the encoder consumes; also the cache key.
pub fn pair_text(state_text: &str, action_name: &str) -> String {
    format!("State: {state_text} Action: {action_name}")
}

/// Deterministic test double: the vector is a fixed function of the input
/// bytes (a hash-seeded stream mapped into `[-1, 1)`), stable across
/// platforms and runs.
pub struct HashEncoder {
    dim: usize,
}

impl HashEncoder {
    pub fn new(dim: usize) -> Self {
        HashEncoder { dim }
    }
}

impl Encoder for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, state_text: &str, action_name: &str) -> Result<Vec<f64>, EncoderError> {
        let digest = Sha256::digest(pair_text(state_text, action_name).as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        Ok((0..self.dim)
            .map(|_| {
                // 53 mantissa bits mapped onto [-1, 1)
                let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                unit * 2.0 - 1.0
            })
            .collect())
    }
}

/// HTTP encoder client: `POST {endpoint}` with `{"input": ..., "pair": ...}`
/// returning `{"vector": [...]}` of exactly `dim` decimals.
pub struct HttpEncoder {
    endpoint: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WireEmbedding {
    vector: Vec<f64>,
}

impl HttpEncoder {
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Result<Self, EncoderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| EncoderError::Transport(e.to_string()))?;
        Ok(HttpEncoder {
            endpoint: endpoint.into(),
            dim,
            client,
        })
    }
}

impl Encoder for HttpEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, state_text: &str, action_name: &str) -> Result<Vec<f64>, EncoderError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&serde_json::json!({"input": state_text, "pair": action_name}))
            .send()
            .map_err(|e| EncoderError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(EncoderError::Transport(format!("HTTP {status}")));
        }
        let wire: WireEmbedding = resp
            .json()
            .map_err(|e| EncoderError::Protocol(e.to_string()))?;
        if wire.vector.len() != self.dim {
            return Err(EncoderError::DimensionMismatch {
                got: wire.vector.len(),
                expected: self.dim,
            });
        }
        if wire.vector.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::Protocol("non-finite embedding entry".into()));
        }
        Ok(wire.vector)
    }
}

/// Episode-scoped encoding cache. Exploration makes the visited state space
/// differ across episodes, so caching never outlives one.
pub struct PairEncoder {
    encoder: Arc<dyn Encoder>,
    cache: HashMap<String, Arc<Vec<f64>>>,
    service_calls: u64,
}

impl PairEncoder {
    pub fn new(encoder: Arc<dyn Encoder>) -> Self {
        PairEncoder {
            encoder,
            cache: HashMap::new(),
            service_calls: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim()
    }

    /// Number of underlying service calls (cache misses) so far.
    pub fn service_calls(&self) -> u64 {
        self.service_calls
    }

    pub fn encode_pair(
        &mut self,
        state_text: &str,
        action_name: &str,
    ) -> Result<Arc<Vec<f64>>, EncoderError> {
        let key = pair_text(state_text, action_name);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(Arc::clone(hit));
        }
        let vector = self.encoder.encode(state_text, action_name)?;
        if vector.len() != self.encoder.dim() {
            return Err(EncoderError::DimensionMismatch {
                got: vector.len(),
                expected: self.encoder.dim(),
            });
        }
        self.service_calls += 1;
        let vector = Arc::new(vector);
        self.cache.insert(key, Arc::clone(&vector));
        Ok(vector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    struct CountingEncoder {
        dim: usize,
        calls: AtomicU64,
    }

    impl Encoder for CountingEncoder {
        fn dim(&self) -> usize {
            self.dim
        }

        fn encode(&self, s: &str, a: &str) -> Result<Vec<f64>, EncoderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(vec![(s.len() + a.len()) as f64; self.dim])
        }
    }

    #[test]
    fn hash_encoder_is_deterministic_and_input_sensitive() {
        let enc = HashEncoder::new(16);
        let a = enc.encode("state", "Question").unwrap();
        let b = enc.encode("state", "Question").unwrap();
        let c = enc.encode("state", "Information").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
        assert!(a.iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn cache_deduplicates_within_an_episode() {
        let inner = Arc::new(CountingEncoder {
            dim: 4,
            calls: AtomicU64::new(0),
        });
        let mut enc = PairEncoder::new(inner.clone());
        let v1 = enc.encode_pair("s", "a").unwrap();
        let v2 = enc.encode_pair("s", "a").unwrap();
        assert_eq!(v1, v2);
        assert_eq!(inner.calls.load(Ordering::SeqCst), 1);
        assert_eq!(enc.service_calls(), 1);
        enc.encode_pair("s", "b").unwrap();
        assert_eq!(inner.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn http_encoder_parses_and_validates_the_wire_contract() {
        use std::io::{BufRead, BufReader, Read, Write};
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let bodies = [
            r#"{"vector":[0.25,-0.5,0.125]}"#,
            r#"{"vector":[0.25,-0.5]}"#,
        ];
        let handle = std::thread::spawn(move || {
            for body in bodies {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let t = line.trim();
                    if let Some(rest) = t.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = rest.trim().parse().unwrap();
                    }
                    if t.is_empty() {
                        break;
                    }
                }
                let mut payload = vec![0u8; content_length];
                reader.read_exact(&mut payload).unwrap();
                // request shape: {"input": ..., "pair": ...}
                let req: serde_json::Value = serde_json::from_slice(&payload).unwrap();
                assert!(req.get("input").is_some() && req.get("pair").is_some());
                let resp = format!(
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\n\
                     content-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });

        let enc = HttpEncoder::new(format!("http://{addr}"), 3).unwrap();
        assert_eq!(enc.encode("state", "action").unwrap(), vec![0.25, -0.5, 0.125]);
        match enc.encode("state", "action") {
            Err(EncoderError::DimensionMismatch { got: 2, expected: 3 }) => {}
            other => panic!("expected mismatch, got {other:?}"),
        }
        handle.join().unwrap();
    }

    #[test]
    fn wrong_width_vector_is_a_dimension_mismatch() {
        struct Short;
        impl Encoder for Short {
            fn dim(&self) -> usize {
                768
            }
            fn encode(&self, _: &str, _: &str) -> Result<Vec<f64>, EncoderError> {
                Ok(vec![0.0; 512])
            }
        }
        let mut enc = PairEncoder::new(Arc::new(Short));
        match enc.encode_pair("s", "a") {
            Err(EncoderError::DimensionMismatch { got: 512, expected: 768 }) => {}
            other => panic!("expected mismatch, got {other:?}"),
        }
    }
}
