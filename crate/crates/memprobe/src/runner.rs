//! Suite execution: an OpenAI-compatible chat-completions client with
//! retries and bounded parallelism, plus mock models for offline runs.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Score;
use crate::snapshot::TestCase;

/// Fixed system message for every request, so runs stay comparable.
pub const SYSTEM_PREAMBLE: &str =
    "You are a careful assistant. Answer using only the provided context.";

pub const DEFAULT_API_KEY_ENV: &str = "MODEL_API_KEY";

/// Offline stand-ins for a model endpoint.
#[derive(Debug, Clone)]
pub enum MockModel {
    /// Replies with the canonical rendering of the reference answer.
    Oracle,
    /// Replies with an empty string.
    Empty,
    /// Echoes the instruction back.
    Echo,
    /// Replies from a fixed case-id -> response map.
    Scripted(HashMap<String, String>),
}

impl MockModel {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "oracle" => Some(MockModel::Oracle),
            "empty" => Some(MockModel::Empty),
            "echo" => Some(MockModel::Echo),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Endpoint {
    /// Base URL; the client posts to `<base>/chat/completions`.
    Http(String),
    Mock(MockModel),
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub endpoint: Endpoint,
    pub model_name: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
    pub request_timeout: Duration,
    pub max_retries: u32,
    pub parallelism: usize,
    pub initial_backoff_ms: u64,
}

impl ModelConfig {
    pub fn mock(mock: MockModel) -> Self {
        Self {
            endpoint: Endpoint::Mock(mock),
            model_name: "mock".to_string(),
            ..Self::http_defaults(String::new(), String::new())
        }
    }

    pub fn http_defaults(endpoint_url: String, model_name: String) -> Self {
        Self {
            endpoint: Endpoint::Http(endpoint_url),
            model_name,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            temperature: 0.0,
            top_p: 1.0,
            max_output_tokens: 4096,
            request_timeout: Duration::from_secs(120),
            max_retries: 3,
            parallelism: 4,
            initial_backoff_ms: 1000,
        }
    }
}

/// Outcome of one request. Exactly one of `raw_response`/`error` is set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub case_id: String,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    pub latency_ms: u64,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<Score>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("api key environment variable {0} is not set")]
    AuthMissing(String),
    #[error("transport failure after {attempts} attempts: {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("malformed response: {0}")]
    ResponseMalformed(String),
    #[error("no scripted response for case {0}")]
    NotScripted(String),
}

#[derive(Serialize)]
struct ChatRequest<'r> {
    model: &'r str,
    messages: [ChatMessage<'r>; 2],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'r> {
    role: &'static str,
    content: &'r str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

/// Deterministic ±20% jitter factor, derived from the case id and attempt
/// rather than a clock.
fn jitter_factor(case_id: &str, attempt: u32) -> f64 {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(case_id.as_bytes());
    hasher.update(attempt.to_le_bytes());
    let digest = hasher.finalize();
    let unit = u16::from_le_bytes([digest[0], digest[1]]) as f64 / u16::MAX as f64;
    0.8 + 0.4 * unit
}

fn mock_response(mock: &MockModel, case: &TestCase) -> Result<String, RunError> {
    match mock {
        MockModel::Oracle => Ok(case.reference.canonical_text()),
        MockModel::Empty => Ok(String::new()),
        MockModel::Echo => Ok(case.instruction_text.clone()),
        MockModel::Scripted(map) => map
            .get(&case.id)
            .cloned()
            .ok_or_else(|| RunError::NotScripted(case.id.clone())),
    }
}

fn http_query(
    client: &reqwest::blocking::Client,
    config: &ModelConfig,
    base_url: &str,
    api_key: &str,
    case: &TestCase,
    attempts: &mut u32,
) -> Result<String, RunError> {
    let user_content = format!("{}\n\n{}", case.context_text, case.instruction_text);
    let body = ChatRequest {
        model: &config.model_name,
        messages: [
            ChatMessage {
                role: "system",
                content: SYSTEM_PREAMBLE,
            },
            ChatMessage {
                role: "user",
                content: &user_content,
            },
        ],
        temperature: config.temperature,
        top_p: config.top_p,
        max_tokens: config.max_output_tokens,
    };
    let url = format!("{}/chat/completions", base_url.trim_end_matches('/'));

    let mut last_error = String::new();
    for attempt in 1..=config.max_retries.max(1) {
        *attempts = attempt;
        if attempt > 1 {
            let backoff = config.initial_backoff_ms as f64
                * 2f64.powi(attempt as i32 - 2)
                * jitter_factor(&case.id, attempt);
            std::thread::sleep(Duration::from_millis(backoff as u64));
        }
        let sent = client.post(&url).bearer_auth(api_key).json(&body).send();
        match sent {
            Ok(response) => {
                let status = response.status();
                if status.is_server_error() {
                    last_error = format!("server error {status}");
                    continue;
                }
                if !status.is_success() {
                    return Err(RunError::Transport {
                        attempts: attempt,
                        detail: format!("status {status}"),
                    });
                }
                let parsed: ChatResponse = response
                    .json()
                    .map_err(|e| RunError::ResponseMalformed(e.to_string()))?;
                return parsed
                    .choices
                    .first()
                    .and_then(|c| c.message.content.clone())
                    .ok_or_else(|| {
                        RunError::ResponseMalformed("no choices[0].message.content".to_string())
                    });
            }
            Err(e) => {
                last_error = e.to_string();
            }
        }
    }
    Err(RunError::Transport {
        attempts: config.max_retries.max(1),
        detail: last_error,
    })
}

/// Send one case to the configured model.
pub fn query_model(config: &ModelConfig, case: &TestCase) -> RunRecord {
    let client = match &config.endpoint {
        Endpoint::Http(_) => Some(
            reqwest::blocking::Client::builder()
                .timeout(config.request_timeout)
                .build()
                .expect("client builds"),
        ),
        Endpoint::Mock(_) => None,
    };
    query_with_client(config, client.as_ref(), case)
}

fn query_with_client(
    config: &ModelConfig,
    client: Option<&reqwest::blocking::Client>,
    case: &TestCase,
) -> RunRecord {
    let started = Instant::now();
    let mut attempts = 1u32;
    let outcome = match &config.endpoint {
        Endpoint::Mock(mock) => mock_response(mock, case),
        Endpoint::Http(base_url) => match std::env::var(&config.api_key_env) {
            Err(_) => Err(RunError::AuthMissing(config.api_key_env.clone())),
            Ok(api_key) => http_query(
                client.expect("client exists for http endpoints"),
                config,
                base_url,
                &api_key,
                case,
                &mut attempts,
            ),
        },
    };
    let latency_ms = started.elapsed().as_millis() as u64;
    match outcome {
        Ok(raw_response) => RunRecord {
            case_id: case.id.clone(),
            model_name: config.model_name.clone(),
            raw_response: Some(raw_response),
            latency_ms,
            attempt_count: attempts,
            error: None,
            score: None,
        },
        Err(e) => RunRecord {
            case_id: case.id.clone(),
            model_name: config.model_name.clone(),
            raw_response: None,
            latency_ms,
            attempt_count: attempts,
            error: Some(e.to_string()),
            score: None,
        },
    }
}

/// Run every case with at most `parallelism` requests in flight. Output
/// order equals input order; per-case failures are recorded, never fatal.
pub fn run_suite(config: &ModelConfig, cases: &[TestCase]) -> Vec<RunRecord> {
    let workers = config.parallelism.max(1).min(cases.len().max(1));
    let client = match &config.endpoint {
        Endpoint::Http(_) => Some(
            reqwest::blocking::Client::builder()
                .timeout(config.request_timeout)
                .build()
                .expect("client builds"),
        ),
        Endpoint::Mock(_) => None,
    };
    let next = AtomicUsize::new(0);
    let records: Mutex<Vec<Option<RunRecord>>> = Mutex::new(vec![None; cases.len()]);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cases.len() {
                    break;
                }
                let record = query_with_client(config, client.as_ref(), &cases[i]);
                records.lock().expect("records lock")[i] = Some(record);
            });
        }
    });

    records
        .into_inner()
        .expect("records lock")
        .into_iter()
        .map(|r| r.expect("every index filled"))
        .collect()
}

#[derive(Debug, Error)]
pub enum RecordIoError {
    #[error("line {line}: malformed record line: {message}")]
    MalformedLine { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_records(records: &[RunRecord], path: &Path) -> Result<(), RecordIoError> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, RecordIoError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let text = line?;
        let record = serde_json::from_str(&text).map_err(|e| RecordIoError::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::{default_config, expand_snapshot, SnapshotConfig, SnapshotOptions, Task};

    fn small_cases(n: usize) -> Vec<TestCase> {
        let config = SnapshotConfig::build(&SnapshotOptions {
            task: Some(Task::StringSearchWord),
            context_tokens: 500,
            ..Default::default()
        });
        let mut cases = expand_snapshot(&config).unwrap();
        cases.truncate(n);
        cases
    }

    #[test]
    fn oracle_mock_scores_perfectly() {
        let cases = small_cases(6);
        let config = ModelConfig::mock(MockModel::Oracle);
        let records = run_suite(&config, &cases);
        assert_eq!(records.len(), cases.len());
        for (case, record) in cases.iter().zip(&records) {
            assert_eq!(record.case_id, case.id);
            let response = record.raw_response.as_deref().unwrap();
            assert_eq!(crate::metrics::score_case(case, response).value, 1.0);
        }
    }

    #[test]
    fn parallelism_does_not_change_mock_output() {
        let cases = small_cases(10);
        let mut config = ModelConfig::mock(MockModel::Oracle);
        config.parallelism = 1;
        let sequential = run_suite(&config, &cases);
        config.parallelism = 8;
        let parallel = run_suite(&config, &cases);
        let strip = |records: &[RunRecord]| -> Vec<(String, Option<String>)> {
            records
                .iter()
                .map(|r| (r.case_id.clone(), r.raw_response.clone()))
                .collect()
        };
        assert_eq!(strip(&sequential), strip(&parallel));
    }

    #[test]
    fn scripted_mock_and_missing_entries() {
        let cases = small_cases(2);
        let mut map = HashMap::new();
        map.insert(cases[0].id.clone(), "canned".to_string());
        let config = ModelConfig::mock(MockModel::Scripted(map));
        let records = run_suite(&config, &cases);
        assert_eq!(records[0].raw_response.as_deref(), Some("canned"));
        assert!(records[0].error.is_none());
        assert!(records[1].raw_response.is_none());
        assert!(records[1]
            .error
            .as_deref()
            .unwrap()
            .contains("no scripted response"));
    }

    #[test]
    fn auth_missing_is_reported_per_record() {
        let cases = small_cases(1);
        let mut config =
            ModelConfig::http_defaults("http://127.0.0.1:9".to_string(), "m".to_string());
        config.api_key_env = "MEMPROBE_TEST_UNSET_KEY_VAR".to_string();
        let records = run_suite(&config, &cases);
        assert!(records[0].error.as_deref().unwrap().contains("is not set"));
    }

    #[test]
    fn record_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let records = vec![RunRecord {
            case_id: "t/x/0".to_string(),
            model_name: "mock".to_string(),
            raw_response: Some("yes".to_string()),
            latency_ms: 3,
            attempt_count: 1,
            error: None,
            score: None,
        }];
        write_records(&records, &path).unwrap();
        assert_eq!(read_records(&path).unwrap(), records);
    }

    #[test]
    fn jitter_is_deterministic_and_bounded() {
        let a = jitter_factor("case/1", 2);
        let b = jitter_factor("case/1", 2);
        assert_eq!(a, b);
        assert!((0.8..=1.2).contains(&a));
        assert_ne!(jitter_factor("case/1", 2), jitter_factor("case/1", 3));
    }

    #[test]
    fn empty_mock_run_covers_default_suite() {
        let config = default_config();
        let grid_total = config.total_cases();
        assert_eq!(grid_total, 1110);
    }

    #[test]
    fn echo_mock_returns_the_instruction() {
        let cases = small_cases(2);
        let records = run_suite(&ModelConfig::mock(MockModel::Echo), &cases);
        for (case, record) in cases.iter().zip(&records) {
            assert_eq!(
                record.raw_response.as_deref(),
                Some(case.instruction_text.as_str())
            );
        }
    }

    #[test]
    fn http_defaults_match_inference_configuration() {
        let config = ModelConfig::http_defaults("http://x".into(), "m".into());
        assert_eq!(config.temperature, 0.0);
        assert_eq!(config.top_p, 1.0);
        assert_eq!(config.max_output_tokens, 4096);
        assert_eq!(config.api_key_env, DEFAULT_API_KEY_ENV);
    }
}
