//! Backend contract for forced-prefix continuation scoring, plus a
//! table-driven mock for offline tests and a bounded-concurrency wrapper.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::prompt::{TokenCount, TokenCounter};

pub const MASS_TOLERANCE: f64 = 1e-6;

/// Ask for the probability of each candidate string continuing a prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuationQuery {
    pub prefix: String,
    pub candidates: Vec<String>,
}

impl ContinuationQuery {
    pub fn new(
        prefix: impl Into<String>,
        candidates: impl IntoIterator<Item = impl Into<String>>,
    ) -> ContinuationQuery {
        ContinuationQuery {
            prefix: prefix.into(),
            candidates: candidates.into_iter().map(Into::into).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.candidates.is_empty() {
            return Err(BackendError::Config(
                "continuation query has no candidates".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.candidates {
            if !seen.insert(c) {
                return Err(BackendError::Config(format!(
                    "duplicate candidate {c:?} in continuation query"
                )));
            }
        }
        Ok(())
    }
}

/// Candidate probabilities aligned to the query's candidate order, plus the
/// mass the backend assigned to everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    pub probabilities: Vec<f64>,
    pub other_mass: f64,
}

impl ContinuationResult {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.probabilities.iter().any(|&p| p < 0.0) || self.other_mass < 0.0 {
            return Err(BackendError::Config(
                "continuation result has negative mass".into(),
            ));
        }
        let total: f64 = self.probabilities.iter().sum::<f64>() + self.other_mass;
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(BackendError::Config(format!(
                "continuation result mass {total} is not 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 250,
        }
    }
}

/// Wire protocol spoken by the HTTP backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WireProtocol {
    /// `POST {endpoint}/v1/completions` with echo + logprobs.
    #[default]
    OpenAiCompletions,
    /// `POST {endpoint}/score`: candidates scored server-side in one call.
    NativeScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    /// Environment variable holding the bearer token, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    pub max_concurrency: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    pub timeout_ms: u64,
    #[serde(default)]
    pub protocol: WireProtocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Exact token counting endpoint; byte-length approximation when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokenize_endpoint: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: "http://localhost:8000".into(),
            auth_env: None,
            max_concurrency: 4,
            retry: RetryPolicy::default(),
            timeout_ms: 120_000,
            protocol: WireProtocol::default(),
            model: None,
            tokenize_endpoint: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_concurrency < 1 {
            return Err(BackendError::Config("max_concurrency must be >= 1".into()));
        }
        if self.retry.max_attempts < 1 {
            return Err(BackendError::Config("max_attempts must be >= 1".into()));
        }
        Ok(())
    }
}

pub trait Backend: Send + Sync {
    fn query(&self, q: &ContinuationQuery) -> Result<ContinuationResult, BackendError>;
    fn count_tokens(&self, text: &str) -> TokenCount;
}

/// Adapter so a backend can serve as the packer's token counter.
pub struct BackendTokenCounter<'a>(pub &'a dyn Backend);

impl TokenCounter for BackendTokenCounter<'_> {
    fn count(&self, text: &str) -> TokenCount {
        self.0.count_tokens(text)
    }
}

/// Classic counting semaphore; `std::sync` has no blocking one.
pub struct Semaphore {
    permits: Mutex<usize>,
    cond: Condvar,
}

impl Semaphore {
    pub fn new(permits: usize) -> Semaphore {
        Semaphore {
            permits: Mutex::new(permits),
            cond: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cond.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

pub struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().unwrap();
        *permits += 1;
        self.semaphore.cond.notify_one();
    }
}

/// Caps in-flight queries to an inner backend.
pub struct BoundedBackend<B> {
    inner: B,
    semaphore: Semaphore,
}

impl<B: Backend> BoundedBackend<B> {
    pub fn new(inner: B, max_concurrency: usize) -> BoundedBackend<B> {
        BoundedBackend {
            inner,
            semaphore: Semaphore::new(max_concurrency.max(1)),
        }
    }
}

impl<B: Backend> Backend for BoundedBackend<B> {
    fn query(&self, q: &ContinuationQuery) -> Result<ContinuationResult, BackendError> {
        let _permit = self.semaphore.acquire();
        self.inner.query(q)
    }

    fn count_tokens(&self, text: &str) -> TokenCount {
        self.inner.count_tokens(text)
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn query(&self, q: &ContinuationQuery) -> Result<ContinuationResult, BackendError> {
        (**self).query(q)
    }

    fn count_tokens(&self, text: &str) -> TokenCount {
        (**self).count_tokens(text)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn query(&self, q: &ContinuationQuery) -> Result<ContinuationResult, BackendError> {
        (**self).query(q)
    }

    fn count_tokens(&self, text: &str) -> TokenCount {
        (**self).count_tokens(text)
    }
}

/// Deterministic backend answering from a table of
/// (prefix-suffix key, candidate) → probability rows.
///
/// A query is matched by the longest key that is a suffix of its prefix;
/// unmatched candidates in the row score 0, and a prefix matching no key gets
/// the uniform distribution over its candidates. The empty-string key
/// therefore acts as a catch-all row.
#[derive(Debug)]
pub struct MockBackend {
    rows: Vec<(String, HashMap<String, f64>)>,
    delay: Option<Duration>,
    queries_served: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight_seen: AtomicUsize,
}

impl MockBackend {
    pub fn new<K, C>(
        table: impl IntoIterator<Item = (K, C, f64)>,
    ) -> Result<MockBackend, BackendError>
    where
        K: Into<String>,
        C: Into<String>,
    {
        let mut rows: Vec<(String, HashMap<String, f64>)> = Vec::new();
        for (key, candidate, p) in table {
            let key = key.into();
            let candidate = candidate.into();
            if !(0.0..=1.0).contains(&p) {
                return Err(BackendError::Config(format!(
                    "probability {p} for ({key:?}, {candidate:?}) out of [0, 1]"
                )));
            }
            let row = match rows.iter_mut().find(|(k, _)| *k == key) {
                Some((_, row)) => row,
                None => {
                    rows.push((key.clone(), HashMap::new()));
                    &mut rows.last_mut().unwrap().1
                }
            };
            if row.insert(candidate.clone(), p).is_some() {
                return Err(BackendError::Config(format!(
                    "duplicate table entry for ({key:?}, {candidate:?})"
                )));
            }
        }
        for (key, row) in &rows {
            let total: f64 = row.values().sum();
            if total > 1.0 + MASS_TOLERANCE {
                return Err(BackendError::Config(format!(
                    "table row {key:?} sums to {total} > 1"
                )));
            }
        }
        // Longest key first so the most specific row wins.
        rows.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(MockBackend {
            rows,
            delay: None,
            queries_served: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight_seen: AtomicUsize::new(0),
        })
    }

    pub fn uniform() -> MockBackend {
        MockBackend::new(Vec::<(String, String, f64)>::new()).unwrap()
    }

    /// Sleep this long inside each query; lets tests observe concurrency.
    pub fn with_delay(mut self, delay: Duration) -> MockBackend {
        self.delay = Some(delay);
        self
    }

    pub fn queries_served(&self) -> usize {
        self.queries_served.load(Ordering::SeqCst)
    }

    pub fn max_in_flight_seen(&self) -> usize {
        self.max_in_flight_seen.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn query(&self, q: &ContinuationQuery) -> Result<ContinuationResult, BackendError> {
        q.validate()?;
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight_seen.fetch_max(now, Ordering::SeqCst);
        if let Some(delay) = self.delay {
            std::thread::sleep(delay);
        }

        let row = self
            .rows
            .iter()
            .find(|(k, _)| q.prefix.ends_with(k.as_str()));
        let result = match row {
            Some((_, row)) => {
                let probabilities: Vec<f64> = q
                    .candidates
                    .iter()
                    .map(|c| row.get(c).copied().unwrap_or(0.0))
                    .collect();
                let other_mass = 1.0 - probabilities.iter().sum::<f64>();
                ContinuationResult {
                    probabilities,
                    other_mass: other_mass.max(0.0),
                }
            }
            None => {
                let n = q.candidates.len();
                ContinuationResult {
                    probabilities: vec![1.0 / n as f64; n],
                    other_mass: 0.0,
                }
            }
        };

        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.queries_served.fetch_add(1, Ordering::SeqCst);
        result.validate()?;
        Ok(result)
    }

    fn count_tokens(&self, text: &str) -> TokenCount {
        crate::prompt::ApproxTokenCounter.count(text)
    }
}
