use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Context, LanguageModel, NextTokenDistribution, Token};
use crate::error::{Error, Result};

/// Endpoint path served by distribution providers.
pub const DISTRIBUTION_PATH: &str = "/v1/distribution";

#[derive(Debug, Serialize)]
struct DistributionRequest<'a> {
    context: &'a [String],
}

#[derive(Debug, Deserialize)]
struct DistributionResponse {
    entries: Vec<WireEntry>,
}

#[derive(Debug, Deserialize)]
struct WireEntry {
    token: String,
    prob: f64,
}

/// Blocking HTTP client for a remote next-token distribution server.
///
/// The underlying agent pools connections and is safe to share across threads.
pub struct RemoteModel {
    url: String,
    agent: ureq::Agent,
}

impl RemoteModel {
    /// `base_url` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(30))
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self {
            url: format!("{}{}", base_url.trim_end_matches('/'), DISTRIBUTION_PATH),
            agent,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn request(&self, context: &Context) -> Result<NextTokenDistribution> {
        let surfaces = context.surfaces();
        let response = self
            .agent
            .post(&self.url)
            .send_json(DistributionRequest { context: &surfaces });
        let response = match response {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) => {
                return Err(Error::ProviderUnavailable(format!(
                    "{} answered with status {code}",
                    self.url
                )))
            }
            Err(e) => return Err(Error::ProviderUnavailable(format!("{}: {e}", self.url))),
        };
        let body: DistributionResponse = response
            .into_json()
            .map_err(|e| Error::MalformedDistribution(format!("unreadable response body: {e}")))?;
        let entries = body
            .entries
            .into_iter()
            .map(|e| {
                Token::from_surface(&e.token)
                    .map(|t| (t, e.prob))
                    .map_err(|_| Error::MalformedDistribution("empty token text in response".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        NextTokenDistribution::new(entries)
    }
}

impl LanguageModel for RemoteModel {
    fn next_distribution(&self, context: &Context) -> Result<NextTokenDistribution> {
        context.validate_for_query()?;
        self.request(context)
    }
}

/// Memoizes distributions by exact token sequence for the lifetime of a run.
pub struct CachedModel<M> {
    inner: M,
    cache: Mutex<HashMap<Vec<String>, NextTokenDistribution>>,
}

impl<M: LanguageModel> CachedModel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn cached_contexts(&self) -> usize {
        self.cache.lock().expect("cache lock poisoned").len()
    }
}

impl<M: LanguageModel> LanguageModel for CachedModel<M> {
    fn next_distribution(&self, context: &Context) -> Result<NextTokenDistribution> {
        let key = context.surfaces();
        if let Some(hit) = self.cache.lock().expect("cache lock poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let dist = self.inner.next_distribution(context)?;
        self.cache
            .lock()
            .expect("cache lock poisoned")
            .insert(key, dist.clone());
        Ok(dist)
    }
}
