//! Language-model bridge: prompt construction, response parsing and
//! providers (fixture replay/record, chat-completions over HTTP).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kb::render_schema_prompt;
use crate::parser::{parse, ParseError, GRAMMAR};
use crate::schema::Catalog;

pub const ENV_API_KEY: &str = "GATELENS_API_KEY";
pub const ENV_BASE_URL: &str = "GATELENS_BASE_URL";
pub const ENV_MODEL: &str = "GATELENS_MODEL";

pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const OUT_OF_SCOPE_PREFIX: &str = "OUT_OF_SCOPE:";

/// Attempts after the first one, for transport failures only.
pub const MAX_RETRIES: usize = 2;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider rejected the request: {0}")]
    ProviderRejection(String),
    #[error("no fixture for request {key}")]
    FixtureMiss { key: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("fixture store error: {0}")]
    Store(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
}

impl ChatRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            model: DEFAULT_MODEL.to_string(),
            system: system.into(),
            user: user.into(),
            temperature: 0.0,
            max_tokens: 1024,
            timeout_secs: 60,
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.timeout_secs == 0 {
            return Err(LlmError::InvalidRequest("timeout must be positive".into()));
        }
        Ok(())
    }

    /// Content hash identifying this request in the fixture store.
    pub fn fixture_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.model.as_bytes());
        h.update([0u8]);
        h.update(self.system.as_bytes());
        h.update([0u8]);
        h.update(self.user.as_bytes());
        hex::encode(h.finalize())
    }
}

/// One chat-completion attempt. Implementations must be usable from
/// several threads at once.
pub trait Provider: Send + Sync {
    fn complete_once(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

impl<P: Provider + ?Sized> Provider for &P {
    fn complete_once(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete_once(request)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete_once(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete_once(request)
    }
}

impl<P: Provider + ?Sized> Provider for std::sync::Arc<P> {
    fn complete_once(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete_once(request)
    }
}

/// Sends a request, retrying transport failures up to [`MAX_RETRIES`] times.
pub fn complete(request: &ChatRequest, provider: &dyn Provider) -> Result<String, LlmError> {
    request.validate()?;
    let mut attempt = 0;
    loop {
        match provider.complete_once(request) {
            Err(LlmError::Transport(_)) if attempt < MAX_RETRIES => attempt += 1,
            other => return other,
        }
    }
}

/// Counts calls that reach the wrapped provider.
pub struct CountingProvider<P> {
    inner: P,
    calls: AtomicUsize,
}

impl<P> CountingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Provider> Provider for CountingProvider<P> {
    fn complete_once(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete_once(request)
    }
}

/// Replays recorded responses from `<dir>/<fixture key>.txt`, or records
/// the responses of a wrapped provider into that layout.
pub struct FixtureProvider {
    dir: PathBuf,
    recorder: Option<Box<dyn Provider>>,
    write_lock: Mutex<()>,
}

impl FixtureProvider {
    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            recorder: None,
            write_lock: Mutex::new(()),
        }
    }

    pub fn record(dir: impl Into<PathBuf>, live: Box<dyn Provider>) -> Self {
        Self {
            dir: dir.into(),
            recorder: Some(live),
            write_lock: Mutex::new(()),
        }
    }

    pub fn path_for(&self, request: &ChatRequest) -> PathBuf {
        fixture_path(&self.dir, request)
    }
}

pub fn fixture_path(dir: &Path, request: &ChatRequest) -> PathBuf {
    dir.join(format!("{}.txt", request.fixture_key()))
}

impl Provider for FixtureProvider {
    fn complete_once(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let path = self.path_for(request);
        match &self.recorder {
            None => match fs::read(&path) {
                Ok(bytes) => String::from_utf8(bytes)
                    .map_err(|e| LlmError::MalformedResponse(format!("fixture is not UTF-8: {e}"))),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(LlmError::FixtureMiss {
                    key: request.fixture_key(),
                }),
                Err(e) => Err(e.into()),
            },
            Some(live) => {
                let text = complete(request, live.as_ref())?;
                let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
                fs::create_dir_all(&self.dir)?;
                fs::write(&path, &text)?;
                Ok(text)
            }
        }
    }
}

/// Chat-completions client for OpenAI-compatible endpoints.
pub struct HttpProvider {
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: [WireMessage<'a>; 2],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireContent,
}

#[derive(Deserialize)]
struct WireContent {
    content: Option<String>,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            client,
        })
    }

    /// Reads `GATELENS_API_KEY` (required) and `GATELENS_BASE_URL`.
    pub fn from_env() -> Result<Self, LlmError> {
        let key = std::env::var(ENV_API_KEY)
            .map_err(|_| LlmError::ProviderRejection(format!("{ENV_API_KEY} is not set")))?;
        let base = std::env::var(ENV_BASE_URL).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        Self::new(base, key)
    }
}

/// Model id from `GATELENS_MODEL`, or [`DEFAULT_MODEL`].
pub fn model_from_env() -> String {
    std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.to_string())
}

impl Provider for HttpProvider {
    fn complete_once(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let body = WireRequest {
            model: &request.model,
            messages: [
                WireMessage {
                    role: "system",
                    content: &request.system,
                },
                WireMessage {
                    role: "user",
                    content: &request.user,
                },
            ],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .timeout(Duration::from_secs(request.timeout_secs))
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    LlmError::Timeout
                } else {
                    LlmError::Transport(e.to_string())
                }
            })?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(LlmError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let detail = response.text().unwrap_or_default();
            return Err(LlmError::ProviderRejection(format!("HTTP {status}: {detail}")));
        }
        let parsed: WireResponse = response.json().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::MalformedResponse(e.to_string())
            }
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::MalformedResponse("response has no message content".into()))
    }
}

/// A worked (question, RA) pair shown to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub query: String,
    pub ra: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl FewShotExample {
    pub fn new(query: impl Into<String>, ra: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            ra: ra.into(),
            note: None,
        }
    }

    pub fn validate(&self) -> Result<(), ParseError> {
        parse(&self.ra).map(|_| ())
    }
}

/// What the interpreter answered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum InterpreterOutput {
    RaText(String),
    OutOfScope(String),
}

const ROLE: &str = "You translate questions about release-validation test data into relational algebra (RA) over the tables below. The RA is compiled and executed by a separate engine, so only the expression matters.";

const STRATEGY: &str = "Apply filters early: put each selection directly on the table it restricts, before joins, products and aggregations, then run the expensive operations on the reduced data. Use only table and column names that appear in the schema; write dates as \"YYYY-MM-DD\" strings.";

/// Builds the interpreter request. Identical inputs give identical bytes.
pub fn build_interpreter_prompt(catalog: &Catalog, query: &str, examples: &[FewShotExample]) -> ChatRequest {
    let mut system = String::new();
    let _ = writeln!(system, "{ROLE}\n");
    let _ = writeln!(system, "## Schema\n\n{}", render_schema_prompt(catalog));
    let _ = writeln!(system, "## RA grammar\n\n{GRAMMAR}");
    let _ = writeln!(system, "## Strategy\n\n{STRATEGY}\n");
    let _ = writeln!(
        system,
        "## Output format\n\nReply with exactly one of:\n\
         1. one fenced code block tagged `ra` holding a single expression:\n\
         ```ra\n<expression>\n```\n\
         2. the single line `{OUT_OF_SCOPE_PREFIX} <reason>` when the question cannot be answered from these tables, for example because it asks for an opinion or for data that is not listed."
    );
    if !examples.is_empty() {
        system.push_str("\n## Examples\n");
        for ex in examples {
            let _ = write!(system, "\nQuestion: {}\n", ex.query);
            if let Some(note) = &ex.note {
                let _ = writeln!(system, "Note: {note}");
            }
            let _ = writeln!(system, "```ra\n{}\n```", ex.ra);
        }
    }
    ChatRequest::new(system, query)
}

/// Extracts the first fenced `ra` block or the out-of-scope line, whichever
/// comes first. Anything else is malformed.
pub fn parse_interpreter_output(raw: &str) -> Result<InterpreterOutput, LlmError> {
    let mut offset = 0;
    let mut fence: Option<(usize, String)> = None;
    let mut scope: Option<(usize, String)> = None;
    let lines: Vec<&str> = raw.split_inclusive('\n').collect();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i].trim();
        if fence.is_none() && line.starts_with("```") && line[3..].trim().eq_ignore_ascii_case("ra") {
            let body: Vec<&str> = lines[i + 1..]
                .iter()
                .take_while(|l| !l.trim_start().starts_with("```"))
                .copied()
                .collect();
            let closed = i + 1 + body.len() < lines.len();
            if closed {
                fence = Some((offset, body.concat().trim().to_string()));
            }
        }
        if scope.is_none() {
            if let Some(reason) = line.strip_prefix(OUT_OF_SCOPE_PREFIX) {
                scope = Some((offset, reason.trim().to_string()));
            }
        }
        offset += lines[i].len();
        i += 1;
    }
    match (fence, scope) {
        (Some((f, text)), Some((s, _))) if f < s => ra_text(text),
        (_, Some((_, reason))) => Ok(InterpreterOutput::OutOfScope(reason)),
        (Some((_, text)), None) => ra_text(text),
        (None, None) => Err(LlmError::MalformedResponse(
            "expected a ```ra block or an OUT_OF_SCOPE line".into(),
        )),
    }
}

fn ra_text(text: String) -> Result<InterpreterOutput, LlmError> {
    if text.is_empty() {
        Err(LlmError::MalformedResponse("empty ```ra block".into()))
    } else {
        Ok(InterpreterOutput::RaText(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_interpreter_output() {
        assert_eq!(
            parse_interpreter_output("```ra\nselect[x == 1](t)\n```").unwrap(),
            InterpreterOutput::RaText("select[x == 1](t)".into())
        );
        assert_eq!(
            parse_interpreter_output("OUT_OF_SCOPE: subjective judgment required").unwrap(),
            InterpreterOutput::OutOfScope("subjective judgment required".into())
        );
        assert!(matches!(
            parse_interpreter_output("here is some prose"),
            Err(LlmError::MalformedResponse(_))
        ));
        assert!(matches!(
            parse_interpreter_output("```ra\nunterminated"),
            Err(LlmError::MalformedResponse(_))
        ));
        assert!(matches!(
            parse_interpreter_output("```sql\nSELECT 1\n```"),
            Err(LlmError::MalformedResponse(_))
        ));
        let both = "Sure.\n```ra\nt\n```\nOUT_OF_SCOPE: no";
        assert_eq!(parse_interpreter_output(both).unwrap(), InterpreterOutput::RaText("t".into()));
    }

    #[test]
    fn request_validation_and_key() {
        let r = ChatRequest::new("s", "u");
        assert!(r.validate().is_ok());
        let mut bad = r.clone();
        bad.temperature = 2.5;
        assert!(bad.validate().is_err());
        bad.temperature = 0.0;
        bad.timeout_secs = 0;
        assert!(bad.validate().is_err());
        assert_eq!(r.fixture_key().len(), 64);
        assert_ne!(r.fixture_key(), ChatRequest::new("s", "u2").fixture_key());
        assert_ne!(r.fixture_key(), ChatRequest::new("su", "").fixture_key());
    }

    struct Flaky(AtomicUsize, usize);

    impl Provider for Flaky {
        fn complete_once(&self, _: &ChatRequest) -> Result<String, LlmError> {
            if self.0.fetch_add(1, Ordering::SeqCst) < self.1 {
                Err(LlmError::Transport("reset".into()))
            } else {
                Ok("ok".into())
            }
        }
    }

    #[test]
    fn retries_transport_failures_twice() {
        let r = ChatRequest::new("s", "u");
        let p = Flaky(AtomicUsize::new(0), 2);
        assert_eq!(complete(&r, &p).unwrap(), "ok");
        let p = Flaky(AtomicUsize::new(0), 3);
        assert!(matches!(complete(&r, &p), Err(LlmError::Transport(_))));
        assert_eq!(p.0.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn prompt_sections() {
        let cat = Catalog::new("Trucks are tested nightly.");
        let zero = build_interpreter_prompt(&cat, "q", &[]);
        assert!(!zero.system.contains("## Examples"));
        assert!(zero.system.contains("Apply filters early"));
        assert!(zero.system.contains("OUT_OF_SCOPE:"));
        assert!(zero.system.contains("```ra"));
        assert!(zero.system.contains("Trucks are tested nightly."));
        let exs = [
            FewShotExample::new("one", "a"),
            FewShotExample::new("two", "b"),
            FewShotExample::new("three", "c"),
        ];
        let three = build_interpreter_prompt(&cat, "q", &exs);
        let pos: Vec<usize> = ["Question: one", "Question: two", "Question: three"]
            .iter()
            .map(|s| three.system.find(s).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(three, build_interpreter_prompt(&cat, "q", &exs));
    }
}
