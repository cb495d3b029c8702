use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::{
    GenerateBody, GenerateReply, InfoReply, ScoreBody, ScoreReply, TokenizeReply, TokenizeRequest,
    GENERATE_PATH, INFO_PATH, SCORE_PATH, TOKENIZE_PATH,
};
use super::{Generator, ScoreRequest, ScoreResponse, Scorer, ScorerError};

/// Retry schedule for transport failures and `503` responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { retries: 3, base_delay: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16))
    }
}

/// HTTP client for a scoring server.
pub struct RemoteScorer {
    base_url: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
    info: InfoReply,
}

enum Attempt<T> {
    Done(T),
    Retry(String),
}

impl RemoteScorer {
    /// Connects and fetches `/v1/info`, whose fields become the backend identity.
    pub fn connect(base_url: &str) -> Result<Self, ScorerError> {
        Self::connect_with(base_url, RetryPolicy::default(), Duration::from_secs(120))
    }

    pub fn connect_with(base_url: &str, retry: RetryPolicy, timeout: Duration) -> Result<Self, ScorerError> {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(10))
            .timeout(timeout)
            .build();
        let mut client = Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
            retry,
            info: InfoReply { model_id: String::new(), tokenizer_id: String::new() },
        };
        let info = client.call(|| client.agent.get(&client.url(INFO_PATH)).call())?;
        client.info = info;
        Ok(client)
    }

    pub fn info(&self) -> &InfoReply {
        &self.info
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url, path)
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ScorerError> {
        let url = self.url(path);
        let payload = serde_json::to_string(body).expect("request body serializes");
        self.call(|| {
            self.agent
                .post(&url)
                .set("Content-Type", "application/json")
                .send_string(&payload)
        })
    }

    fn call<R, F>(&self, send: F) -> Result<R, ScorerError>
    where
        R: DeserializeOwned,
        F: Fn() -> Result<ureq::Response, ureq::Error>,
    {
        let mut last = String::new();
        for attempt in 0..=self.retry.retries {
            if attempt > 0 {
                thread::sleep(self.retry.delay(attempt - 1));
            }
            match Self::attempt(send())? {
                Attempt::Done(r) => return Ok(r),
                Attempt::Retry(msg) => last = msg,
            }
        }
        Err(ScorerError::BackendUnavailable(format!(
            "{} (after {} retries)",
            last, self.retry.retries
        )))
    }

    fn attempt<R: DeserializeOwned>(result: Result<ureq::Response, ureq::Error>) -> Result<Attempt<R>, ScorerError> {
        match result {
            Ok(resp) => {
                let body = resp
                    .into_string()
                    .map_err(|e| ScorerError::BackendUnavailable(format!("reading body: {e}")))?;
                serde_json::from_str(&body)
                    .map(Attempt::Done)
                    .map_err(|e| ScorerError::ProtocolViolation(format!("malformed response: {e}")))
            }
            Err(ureq::Error::Status(503, _)) => Ok(Attempt::Retry("model not ready (503)".into())),
            Err(ureq::Error::Status(code, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                if code == 422 {
                    return Err(ScorerError::EmptyContinuation);
                }
                Err(ScorerError::ProtocolViolation(format!("HTTP {code}: {body}")))
            }
            Err(ureq::Error::Transport(t)) => Ok(Attempt::Retry(t.to_string())),
        }
    }
}

impl Scorer for RemoteScorer {
    fn backend_id(&self) -> String {
        format!("remote:{}:{}", self.info.model_id, self.info.tokenizer_id)
    }

    fn tokenize(&self, text: &str) -> Result<Vec<u32>, ScorerError> {
        let reply: TokenizeReply = self.post(TOKENIZE_PATH, &TokenizeRequest { text: text.to_string() })?;
        Ok(reply.tokens)
    }

    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let body = ScoreBody {
            prefix: request.prefix().to_string(),
            continuation: request.continuation().to_string(),
        };
        let reply: ScoreReply = self.post(SCORE_PATH, &body)?;
        ScoreResponse::from_parts(reply.tokens, reply.token_logprobs)
    }
}

impl Generator for RemoteScorer {
    fn generate(&self, prompt: &str, max_new_tokens: usize) -> Result<String, ScorerError> {
        let body = GenerateBody { prompt: prompt.to_string(), max_new_tokens };
        let reply: GenerateReply = self.post(GENERATE_PATH, &body)?;
        Ok(reply.text)
    }
}
