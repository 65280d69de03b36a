//! Wire contract and transports.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::suite::{Decoding, ImageMode, ModelEndpoint};
use crate::datamodel::{Conversation, ParseStatus, PredictionRecord};
use crate::error::{Error, Result};
use crate::kernel::{MockBehavior, MockModel};
use crate::parser::{is_refusal, ParseConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    Image {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        uri: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base64: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    /// `user` or `assistant`.
    pub role: String,
    pub content: Vec<ContentPart>,
}

/// Turn identity carried alongside the messages; the in-process mock uses
/// it to find the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestMeta {
    pub conversation_id: String,
    pub turn_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub decoding: Decoding,
    pub metadata: RequestMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub text: String,
    /// Set by endpoints that flag safety refusals explicitly.
    #[serde(default)]
    pub refused: bool,
}

/// Outcome of one send.
#[derive(Debug, Clone, PartialEq)]
pub enum Attempt {
    Ok(WireResponse),
    /// Rate limiting, server errors and network failures.
    Retry(String),
    Fail(String),
}

pub trait Transport: Sync {
    fn send(&self, request: &WireRequest) -> Attempt;
}

/// JSON over HTTP POST with an optional bearer token.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &ModelEndpoint) -> Result<Self> {
        let token = match &endpoint.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("token variable `{var}` is not set"))
            })?),
            None => None,
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build();
        Ok(HttpTransport {
            agent,
            url: endpoint.uri.clone(),
            token,
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &WireRequest) -> Attempt {
        let mut req = self.agent.post(&self.url).set("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        let body = match serde_json::to_value(request) {
            Ok(b) => b,
            Err(e) => return Attempt::Fail(e.to_string()),
        };
        match req.send_json(body) {
            Ok(resp) => match resp.into_json::<WireResponse>() {
                Ok(r) => Attempt::Ok(r),
                Err(e) => Attempt::Fail(format!("malformed response: {e}")),
            },
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                Attempt::Retry(format!("status {code}"))
            }
            Err(ureq::Error::Status(code, _)) => Attempt::Fail(format!("status {code}")),
            Err(ureq::Error::Transport(t)) => Attempt::Retry(t.to_string()),
        }
    }
}

/// The deterministic mock model behind the wire contract.
pub struct MockTransport {
    model: MockModel,
    conversations: HashMap<String, Conversation>,
}

impl MockTransport {
    pub fn new(model: MockModel, conversations: &[Conversation]) -> Self {
        MockTransport {
            model,
            conversations: conversations
                .iter()
                .map(|c| (c.conversation_id.clone(), c.clone()))
                .collect(),
        }
    }

    /// Parses `mock://oracle`, `mock://planted?p=..&seed=..` or
    /// `mock://refuser?rate=..&seed=..`.
    pub fn behavior_from_uri(uri: &str) -> Result<MockBehavior> {
        let rest = uri
            .strip_prefix("mock://")
            .ok_or_else(|| Error::Config(format!("not a mock endpoint: `{uri}`")))?;
        let (kind, query) = rest.split_once('?').unwrap_or((rest, ""));
        let mut params = HashMap::new();
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad mock parameter `{pair}`")))?;
            params.insert(k, v);
        }
        let num = |k: &str| -> Result<f64> {
            params
                .get(k)
                .ok_or_else(|| Error::Config(format!("mock endpoint needs `{k}`")))?
                .parse()
                .map_err(|_| Error::Config(format!("bad value for `{k}`")))
        };
        let seed = || -> Result<u64> {
            params
                .get("seed")
                .map_or(Ok(0), |s| s.parse().map_err(|_| Error::Config("bad value for `seed`".into())))
        };
        match kind {
            "oracle" => Ok(MockBehavior::Oracle),
            "planted" => Ok(MockBehavior::Planted { p: num("p")?, seed: seed()? }),
            "refuser" => Ok(MockBehavior::Refuser { rate: num("rate")?, seed: seed()? }),
            other => Err(Error::Config(format!("unknown mock behavior `{other}`"))),
        }
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &WireRequest) -> Attempt {
        let meta = &request.metadata;
        match self.conversations.get(&meta.conversation_id) {
            Some(c) if meta.turn_index < c.turns.len() => Attempt::Ok(WireResponse {
                text: self.model.respond(c, meta.turn_index),
                refused: false,
            }),
            _ => Attempt::Fail(format!("unknown turn {}#{}", meta.conversation_id, meta.turn_index)),
        }
    }
}

/// Spaces request starts at least `1 / rate` seconds apart.
pub struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(requests_per_second: Option<f64>) -> Self {
        RateLimiter {
            interval: requests_per_second.map(|r| Duration::from_secs_f64(1.0 / r)),
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn wait(&self) {
        let Some(interval) = self.interval else { return };
        let now = Instant::now();
        let start = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let start = (*next).max(now);
            *next = start + interval;
            start
        };
        if start > now {
            std::thread::sleep(start - now);
        }
    }
}

fn image_part(image_ref: &str, mode: ImageMode, root: Option<&Path>) -> std::result::Result<Option<ContentPart>, String> {
    match mode {
        ImageMode::None => Ok(None),
        ImageMode::Uri => Ok(Some(ContentPart::Image {
            uri: Some(image_ref.to_string()),
            base64: None,
        })),
        ImageMode::Base64 => {
            let path = root.map_or_else(|| Path::new(image_ref).to_path_buf(), |r| r.join(image_ref));
            let bytes = std::fs::read(&path).map_err(|e| format!("image {}: {e}", path.display()))?;
            Ok(Some(ContentPart::Image {
                uri: None,
                base64: Some(base64::engine::general_purpose::STANDARD.encode(bytes)),
            }))
        }
    }
}

/// Sends every turn of a conversation, each with all earlier prompts and
/// responses as context. Returns raw records and the number of retries.
///
/// Record status is provisional: `transport_error` when retries ran out,
/// `refused` when the endpoint flagged a refusal or the text matches a
/// refusal pattern, `parse_failed` otherwise until the scorer parses it.
pub fn query_model(
    endpoint: &ModelEndpoint,
    transport: &dyn Transport,
    limiter: &RateLimiter,
    conversation: &Conversation,
    image_ref: &str,
    image_root: Option<&Path>,
    parse: &ParseConfig,
) -> (Vec<PredictionRecord>, u32) {
    let mut messages: Vec<Message> = Vec::new();
    let mut records = Vec::new();
    let mut retries = 0;
    let image = image_part(image_ref, endpoint.images, image_root);
    for (i, turn) in conversation.turns.iter().enumerate() {
        let mut content = Vec::new();
        if i == 0 {
            if let Ok(Some(part)) = &image {
                content.push(part.clone());
            }
        }
        content.push(ContentPart::Text { text: turn.prompt.clone() });
        messages.push(Message {
            role: "user".into(),
            content,
        });
        let request = WireRequest {
            model: endpoint.model.clone(),
            messages: messages.clone(),
            decoding: endpoint.decoding.clone(),
            metadata: RequestMeta {
                conversation_id: conversation.conversation_id.clone(),
                turn_index: i,
            },
        };
        let mut record = PredictionRecord::raw(&conversation.conversation_id, i, "");
        let outcome = match &image {
            Err(msg) => Err(msg.clone()),
            Ok(_) => send_with_retries(endpoint, transport, limiter, &request, &mut retries),
        };
        match outcome {
            Ok(resp) => {
                if resp.refused || is_refusal(&resp.text, parse) {
                    record.status = ParseStatus::Refused;
                }
                record.response = resp.text;
            }
            Err(msg) => {
                record.status = ParseStatus::TransportError;
                record.response = msg;
            }
        }
        let reply = if record.status == ParseStatus::TransportError {
            String::new()
        } else {
            record.response.clone()
        };
        messages.push(Message {
            role: "assistant".into(),
            content: vec![ContentPart::Text { text: reply }],
        });
        records.push(record);
    }
    (records, retries)
}

fn send_with_retries(
    endpoint: &ModelEndpoint,
    transport: &dyn Transport,
    limiter: &RateLimiter,
    request: &WireRequest,
    retries: &mut u32,
) -> std::result::Result<WireResponse, String> {
    let mut attempt = 0u32;
    loop {
        limiter.wait();
        match transport.send(request) {
            Attempt::Ok(r) => return Ok(r),
            Attempt::Fail(msg) => return Err(msg),
            Attempt::Retry(msg) => {
                if attempt >= endpoint.max_retries {
                    return Err(format!("retries exhausted: {msg}"));
                }
                let delay = endpoint.backoff_ms.saturating_mul(1u64 << attempt.min(16)).min(30_000);
                std::thread::sleep(Duration::from_millis(delay));
                attempt += 1;
                *retries += 1;
            }
        }
    }
}

/// Runs `job` over `items` on up to `workers` threads; results keep input
/// order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, job: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.max(1).min(items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = job(&items[i]);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Label, Protocol, TaskKind, Turn};

    struct Scripted {
        replies: Mutex<Vec<Attempt>>,
        seen: Mutex<Vec<WireRequest>>,
    }

    impl Transport for Scripted {
        fn send(&self, request: &WireRequest) -> Attempt {
            self.seen.lock().unwrap().push(request.clone());
            self.replies.lock().unwrap().remove(0)
        }
    }

    fn conv(turns: usize) -> Conversation {
        let turn = Turn {
            prompt: "Which phase?".into(),
            answer: "preparation".into(),
            keywords: vec!["preparation".into()],
            task: TaskKind::PhaseRecognition,
            options: None,
            target: Label::Class("preparation".into()),
        };
        Conversation {
            conversation_id: "c".into(),
            sample_id: "s".into(),
            protocol: Protocol::Ov,
            turns: vec![turn; turns],
        }
    }

    fn ok(text: &str) -> Attempt {
        Attempt::Ok(WireResponse {
            text: text.into(),
            refused: false,
        })
    }

    fn endpoint() -> ModelEndpoint {
        let mut e = ModelEndpoint::new("scripted");
        e.backoff_ms = 1;
        e.max_retries = 2;
        e
    }

    #[test]
    fn retries_then_succeeds() {
        let t = Scripted {
            replies: Mutex::new(vec![Attempt::Retry("status 429".into()), ok("preparation")]),
            seen: Mutex::new(vec![]),
        };
        let (recs, retries) = query_model(&endpoint(), &t, &RateLimiter::new(None), &conv(1), "img.png", None, &ParseConfig::default());
        assert_eq!(retries, 1);
        assert_eq!(recs[0].response, "preparation");
        assert_eq!(recs[0].status, ParseStatus::ParseFailed);
    }

    #[test]
    fn exhausted_retries_become_transport_errors() {
        let t = Scripted {
            replies: Mutex::new(vec![Attempt::Retry("x".into()); 3]),
            seen: Mutex::new(vec![]),
        };
        let (recs, retries) = query_model(&endpoint(), &t, &RateLimiter::new(None), &conv(1), "i", None, &ParseConfig::default());
        assert_eq!(retries, 2);
        assert_eq!(recs[0].status, ParseStatus::TransportError);
    }

    #[test]
    fn refusals_and_context() {
        let t = Scripted {
            replies: Mutex::new(vec![ok("first"), ok("I'm sorry, but I cannot assist with that.")]),
            seen: Mutex::new(vec![]),
        };
        let (recs, _) = query_model(&endpoint(), &t, &RateLimiter::new(None), &conv(2), "img.png", None, &ParseConfig::default());
        assert_eq!(recs[1].status, ParseStatus::Refused);
        let seen = t.seen.lock().unwrap();
        let roles: Vec<&str> = seen[1].messages.iter().map(|m| m.role.as_str()).collect();
        assert_eq!(roles, ["user", "assistant", "user"]);
        assert!(matches!(&seen[0].messages[0].content[0], ContentPart::Image { uri: Some(u), .. } if u == "img.png"));
        assert_eq!(seen[1].messages[2].content.len(), 1);
    }

    #[test]
    fn flagged_refusal() {
        let t = Scripted {
            replies: Mutex::new(vec![Attempt::Ok(WireResponse {
                text: "...".into(),
                refused: true,
            })]),
            seen: Mutex::new(vec![]),
        };
        let (recs, _) = query_model(&endpoint(), &t, &RateLimiter::new(None), &conv(1), "i", None, &ParseConfig::default());
        assert_eq!(recs[0].status, ParseStatus::Refused);
    }

    #[test]
    fn mock_uris() {
        assert_eq!(MockTransport::behavior_from_uri("mock://oracle").unwrap(), MockBehavior::Oracle);
        assert_eq!(
            MockTransport::behavior_from_uri("mock://planted?p=0.25&seed=9").unwrap(),
            MockBehavior::Planted { p: 0.25, seed: 9 }
        );
        assert!(MockTransport::behavior_from_uri("mock://planted").is_err());
        assert!(MockTransport::behavior_from_uri("http://x").is_err());
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..100).collect();
        for workers in [1, 3, 16] {
            assert_eq!(parallel_map(&items, workers, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let l = RateLimiter::new(Some(200.0));
        let start = Instant::now();
        for _ in 0..5 {
            l.wait();
        }
        assert!(start.elapsed() >= Duration::from_millis(19));
    }
}
