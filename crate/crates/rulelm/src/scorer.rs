//! Scorer endpoints and batched scoring.
//!
//! `POST /v1/score` request:
//! `{"queries":[{"id":..,"prompt":..,"target_label":..}],"top_n":n}`;
//! response: `{"results":[{"id":..,"rank":int|null,"top_tokens":[..]}]}`.
//! Ranks are 1-based positions among the scorer's filtered candidates. A
//! result may carry `"unmappable":true` when the target has no single-token
//! form; the field is optional and defaults to false.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rulelm_core::cloze::{ClozeQuery, RankResult, Scorer, ScorerError};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where scores come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Base URL of a scorer service, or the full `/v1/score` URL.
    Http(String),
    /// A checked-in fixture file.
    Fixture(PathBuf),
}

impl Endpoint {
    /// `fixture:<path>` or an `http(s)://` URL.
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(path) = spec.strip_prefix("fixture:") {
            Ok(Endpoint::Fixture(PathBuf::from(path)))
        } else if spec.starts_with("http://") || spec.starts_with("https://") {
            Ok(Endpoint::Http(spec.to_string()))
        } else {
            Err(Error::Config(format!("scorer endpoint `{spec}` is neither fixture:<path> nor an http(s) URL")))
        }
    }
}

/// Batching, retry and concurrency settings for [`score_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    pub top_n: usize,
    pub batch_size: usize,
    pub max_attempts: u32,
    pub retry_backoff: Duration,
    pub in_flight: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self { top_n: 10, batch_size: 64, max_attempts: 3, retry_backoff: Duration::from_millis(200), in_flight: 1 }
    }
}

#[derive(Serialize)]
struct WireQuery<'a> {
    id: &'a str,
    prompt: &'a str,
    target_label: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    queries: Vec<WireQuery<'a>>,
    top_n: usize,
}

#[derive(Deserialize)]
struct WireResult {
    id: String,
    rank: Option<u32>,
    top_tokens: Vec<String>,
    #[serde(default)]
    unmappable: bool,
}

#[derive(Deserialize)]
struct WireResponse {
    results: Vec<WireResult>,
}

/// JSON body for a batch.
pub fn encode_request(queries: &[ClozeQuery], top_n: usize) -> String {
    let request = WireRequest {
        queries: queries
            .iter()
            .map(|q| WireQuery { id: &q.query_id, prompt: &q.prompt, target_label: &q.target_label })
            .collect(),
        top_n,
    };
    serde_json::to_string(&request).expect("request serializes")
}

/// Parses and checks a response body against the batch it answers.
pub fn decode_response(body: &str, queries: &[ClozeQuery], top_n: usize) -> Result<Vec<RankResult>, ScorerError> {
    let response: WireResponse =
        serde_json::from_str(body).map_err(|e| ScorerError::Protocol(format!("malformed response: {e}")))?;
    if response.results.len() != queries.len() {
        return Err(ScorerError::Protocol(format!(
            "expected {} results, got {}",
            queries.len(),
            response.results.len()
        )));
    }
    response
        .results
        .into_iter()
        .zip(queries)
        .map(|(r, q)| {
            if r.id != q.query_id {
                return Err(ScorerError::Protocol(format!("result `{}` answers query `{}` out of order", r.id, q.query_id)));
            }
            if r.top_tokens.len() > top_n {
                return Err(ScorerError::Protocol(format!("result `{}` has more than {top_n} tokens", r.id)));
            }
            if let Some(rank) = r.rank {
                if rank == 0 || rank as usize > r.top_tokens.len() {
                    return Err(ScorerError::Protocol(format!("result `{}` has rank {rank} outside top_tokens", r.id)));
                }
            }
            Ok(RankResult { query_id: r.id, rank: r.rank, top_tokens: r.top_tokens, unmappable: r.unmappable })
        })
        .collect()
}

/// Client for a remote scorer service.
pub struct HttpScorer {
    url: String,
    agent: ureq::Agent,
}

impl HttpScorer {
    /// `base` may be the service root or the full `/v1/score` URL.
    pub fn new(base: &str, timeout: Duration) -> Self {
        let url = if base.ends_with("/v1/score") {
            base.to_string()
        } else {
            format!("{}/v1/score", base.trim_end_matches('/'))
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { url, agent }
    }
}

impl Scorer for HttpScorer {
    fn score(&self, queries: &[ClozeQuery], top_n: usize) -> Result<Vec<RankResult>, ScorerError> {
        let body = encode_request(queries, top_n);
        let mut response = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(body.as_str())
            .map_err(|e| ScorerError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| ScorerError::Transient(e.to_string()))?;
        match status {
            200..=299 => decode_response(&text, queries, top_n),
            408 | 429 | 500..=599 => Err(ScorerError::Transient(format!("HTTP {status}: {text}"))),
            _ => Err(ScorerError::Protocol(format!("HTTP {status}: {text}"))),
        }
    }
}

/// Opens the scorer behind `endpoint`.
pub fn open(endpoint: &Endpoint, timeout: Duration) -> Result<Box<dyn Scorer>> {
    Ok(match endpoint {
        Endpoint::Http(url) => Box::new(HttpScorer::new(url, timeout)),
        Endpoint::Fixture(path) => Box::new(crate::io::load_fixture(path)?),
    })
}

fn score_with_retries(
    scorer: &dyn Scorer,
    batch_index: usize,
    queries: &[ClozeQuery],
    options: &BatchOptions,
) -> Result<Vec<RankResult>> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match scorer.score(queries, options.top_n) {
            Ok(results) if results.len() == queries.len() => return Ok(results),
            Ok(results) => {
                let source = ScorerError::Protocol(format!("expected {} results, got {}", queries.len(), results.len()));
                return Err(Error::Scorer { batch: batch_index, attempts: attempt, source });
            }
            Err(source @ ScorerError::Protocol(_)) => {
                return Err(Error::Scorer { batch: batch_index, attempts: attempt, source })
            }
            Err(source) if attempt >= options.max_attempts.max(1) => {
                return Err(Error::Scorer { batch: batch_index, attempts: attempt, source })
            }
            Err(e) => {
                log::warn!("scorer batch {batch_index} attempt {attempt} failed: {e}; retrying");
                std::thread::sleep(options.retry_backoff * 2u32.saturating_pow(attempt - 1));
            }
        }
    }
}

/// Scores `queries` in batches of at most `batch_size`, up to `in_flight`
/// batches concurrently, and returns results in query order.
pub fn score_batch(scorer: &dyn Scorer, queries: &[ClozeQuery], options: &BatchOptions) -> Result<Vec<RankResult>> {
    if options.top_n == 0 || options.batch_size == 0 {
        return Err(Error::Config("top_n and batch_size must be positive".into()));
    }
    let batches: Vec<&[ClozeQuery]> = queries.chunks(options.batch_size).collect();
    let slots: Vec<Mutex<Option<Result<Vec<RankResult>>>>> = batches.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = options.in_flight.clamp(1, batches.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = batches.get(i) else { break };
                let outcome = score_with_retries(scorer, i, batch, options);
                let failed = outcome.is_err();
                *slots[i].lock().expect("slot lock") = Some(outcome);
                if failed {
                    // stop handing out further batches
                    next.store(batches.len(), Ordering::Relaxed);
                }
            });
        }
    });
    let mut results = Vec::with_capacity(queries.len());
    for slot in slots {
        match slot.into_inner().expect("slot lock") {
            Some(Ok(batch)) => results.extend(batch),
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    if results.len() != queries.len() {
        return Err(Error::Internal("scoring stopped before every batch was answered".into()));
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rulelm_core::kg::{EntityId, RelationId, Triple};

    fn q(id: &str) -> ClozeQuery {
        ClozeQuery {
            query_id: id.into(),
            prompt: format!("{id} [MASK]"),
            target_label: "t".into(),
            fact: Triple::new(EntityId(0), RelationId(0), EntityId(0)),
        }
    }

    #[test]
    fn endpoint_forms() {
        assert_eq!(Endpoint::parse("fixture:a/b.tsv").unwrap(), Endpoint::Fixture("a/b.tsv".into()));
        assert_eq!(Endpoint::parse("http://h:1").unwrap(), Endpoint::Http("http://h:1".into()));
        assert!(Endpoint::parse("ftp://x").is_err());
    }

    #[test]
    fn request_shape() {
        let body = encode_request(&[q("a")], 10);
        assert_eq!(body, r#"{"queries":[{"id":"a","prompt":"a [MASK]","target_label":"t"}],"top_n":10}"#);
    }

    #[test]
    fn response_decoding_and_checks() {
        let qs = [q("a"), q("b")];
        let ok = r#"{"results":[{"id":"a","rank":2,"top_tokens":["x","t"]},{"id":"b","rank":null,"top_tokens":[],"unmappable":true}]}"#;
        let r = decode_response(ok, &qs, 10).unwrap();
        assert_eq!(r[0].rank, Some(2));
        assert!(r[1].unmappable);
        let swapped = r#"{"results":[{"id":"b","rank":null,"top_tokens":[]},{"id":"a","rank":null,"top_tokens":[]}]}"#;
        assert!(matches!(decode_response(swapped, &qs, 10), Err(ScorerError::Protocol(_))));
        let short = r#"{"results":[{"id":"a","rank":null,"top_tokens":[]}]}"#;
        assert!(matches!(decode_response(short, &qs, 10), Err(ScorerError::Protocol(_))));
        let bad_rank = r#"{"results":[{"id":"a","rank":3,"top_tokens":["x"]},{"id":"b","rank":null,"top_tokens":[]}]}"#;
        assert!(matches!(decode_response(bad_rank, &qs, 10), Err(ScorerError::Protocol(_))));
        let too_many = r#"{"results":[{"id":"a","rank":null,"top_tokens":["x","y"]},{"id":"b","rank":null,"top_tokens":[]}]}"#;
        assert!(matches!(decode_response(too_many, &qs, 1), Err(ScorerError::Protocol(_))));
        assert!(matches!(decode_response("not json", &qs, 10), Err(ScorerError::Protocol(_))));
    }
}
