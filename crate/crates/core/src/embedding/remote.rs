//! Client for an external embedding service.
//!
//! Wire format: `POST {"model": <string>, "input": [<string>...]}` answered by
//! `{"data": [{"embedding": [<float>...]}, ...]}` in input order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{l2_normalize, EmbedError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_ms: u64,
    pub retry_on_timeout: bool,
    /// Upper bound on concurrent requests.
    pub max_in_flight: usize,
    /// Texts per request.
    pub batch_size: usize,
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    data: Vec<Item>,
}

#[derive(Deserialize)]
struct Item {
    embedding: Vec<f64>,
}

pub struct RemoteBackbone {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    /// Dimension fixed by the first response of the run.
    dim: Mutex<Option<usize>>,
}

impl RemoteBackbone {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build();
        RemoteBackbone {
            cfg,
            agent,
            dim: Mutex::new(None),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        *self.dim.lock().unwrap()
    }

    fn post(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let body = Request {
            model: &self.cfg.model,
            input: texts,
        };
        let mut attempts = if self.cfg.retry_on_timeout { 2 } else { 1 };
        loop {
            attempts -= 1;
            match self.agent.post(&self.cfg.endpoint).send_json(&body) {
                Ok(resp) => {
                    let parsed: Response = resp
                        .into_json()
                        .map_err(|e| EmbedError::RemoteProtocol(e.to_string()))?;
                    return Ok(parsed.data.into_iter().map(|i| i.embedding).collect());
                }
                Err(ureq::Error::Transport(t)) if attempts > 0 && is_timeout(&t) => continue,
                Err(e) => return Err(EmbedError::RemoteUnavailable(e.to_string())),
            }
        }
    }

    fn check(&self, raw: Vec<Vec<f64>>, expected: usize) -> Result<Vec<Vec<f64>>, EmbedError> {
        if raw.len() != expected {
            return Err(EmbedError::RemoteProtocol(format!(
                "expected {expected} embeddings, got {}",
                raw.len()
            )));
        }
        let mut dim = self.dim.lock().unwrap();
        raw.into_iter()
            .map(|mut v| {
                let want = *dim.get_or_insert(v.len());
                if v.len() != want || want == 0 {
                    return Err(EmbedError::RemoteDimensionMismatch {
                        expected: want,
                        got: v.len(),
                    });
                }
                if !l2_normalize(&mut v) {
                    return Err(EmbedError::RemoteProtocol("zero or non-finite embedding".into()));
                }
                Ok(v)
            })
            .collect()
    }

    /// Embeds `texts` in order, with at most `max_in_flight` requests open.
    pub fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let batch = self.cfg.batch_size.max(1);
        let chunks: Vec<&[String]> = texts.chunks(batch).collect();
        let results: Vec<Mutex<Option<Result<Vec<Vec<f64>>, EmbedError>>>> =
            chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.cfg.max_in_flight.max(1).min(chunks.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(chunk) = chunks.get(i) else { break };
                    let r = self.post(chunk).and_then(|raw| self.check(raw, chunk.len()));
                    let failed = r.is_err();
                    *results[i].lock().unwrap() = Some(r);
                    if failed {
                        // Stop handing out work; the first error is reported below.
                        next.store(chunks.len(), Ordering::SeqCst);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for slot in results {
            match slot.into_inner().unwrap() {
                Some(Ok(vs)) => out.extend(vs),
                Some(Err(e)) => return Err(e),
                None => return Err(EmbedError::RemoteUnavailable("request not attempted".into())),
            }
        }
        Ok(out)
    }
}

fn is_timeout(t: &ureq::Transport) -> bool {
    matches!(t.kind(), ureq::ErrorKind::Io) && t.to_string().to_lowercase().contains("timed out")
}
