//! HTTP client for a classifier served behind the classify wire protocol:
//! `POST /classify {"image_png_b64": ...}` and `GET /health`.

use std::io::ErrorKind;
use std::time::Duration;

use advsmo_core::blackbox::{Classifier, ClassifyError, Verdict};
use advsmo_core::image::Image;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::io::encode_png;

#[derive(Debug, Serialize)]
pub struct ClassifyRequest {
    pub image_png_b64: String,
}

impl ClassifyRequest {
    pub fn for_image(img: &Image) -> Result<Self, ClassifyError> {
        let png = encode_png(img).map_err(|e| ClassifyError::Transport(e.to_string()))?;
        Ok(Self {
            image_png_b64: STANDARD.encode(png),
        })
    }

    pub fn to_body(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

#[derive(Debug, Deserialize)]
struct HealthResponse {
    classes: u32,
}

/// Parses a `/classify` response body into a validated verdict.
pub fn parse_verdict(body: &str) -> Result<Verdict, ClassifyError> {
    let v: Verdict = serde_json::from_str(body).map_err(|e| ClassifyError::Malformed(e.to_string()))?;
    v.validate()?;
    Ok(v)
}

pub fn parse_health(body: &str) -> Result<u32, ClassifyError> {
    serde_json::from_str::<HealthResponse>(body)
        .map(|h| h.classes)
        .map_err(|e| ClassifyError::Malformed(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct HttpClassifier {
    agent: ureq::Agent,
    base: String,
    backoff_base: Duration,
}

impl HttpClassifier {
    pub fn new(url: &str, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: config.into(),
            base: url.trim_end_matches('/').to_string(),
            backoff_base: Duration::from_millis(100),
        }
    }

    /// First retry waits `base`, then `2 * base`, `4 * base`, ...
    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn url(&self) -> &str {
        &self.base
    }

    /// Number of classes reported by `GET /health`.
    pub fn health(&self) -> Result<u32, ClassifyError> {
        let resp = self.agent.get(format!("{}/health", self.base)).call().map_err(map_err)?;
        parse_health(&read_ok(resp)?)
    }
}

fn map_err(e: ureq::Error) -> ClassifyError {
    match e {
        ureq::Error::Timeout(_) => ClassifyError::Timeout,
        ureq::Error::StatusCode(code) => ClassifyError::Http(code),
        ureq::Error::Io(io) if matches!(io.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) => {
            ClassifyError::Timeout
        }
        other => ClassifyError::Transport(other.to_string()),
    }
}

fn read_ok(mut resp: ureq::http::Response<ureq::Body>) -> Result<String, ClassifyError> {
    let status = resp.status().as_u16();
    if status != 200 {
        return Err(ClassifyError::Http(status));
    }
    resp.body_mut().read_to_string().map_err(map_err)
}

impl Classifier for HttpClassifier {
    fn classify(&self, img: &Image) -> Result<Verdict, ClassifyError> {
        let body = ClassifyRequest::for_image(img)?.to_body();
        let resp = self
            .agent
            .post(format!("{}/classify", self.base))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(map_err)?;
        parse_verdict(&read_ok(resp)?)
    }

    fn backoff(&self, attempt: u32) {
        std::thread::sleep(self.backoff_base * 2u32.saturating_pow(attempt.saturating_sub(1)));
    }
}
