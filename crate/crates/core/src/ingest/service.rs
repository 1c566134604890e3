use std::time::Duration;

use super::tei::{segment_plain_text, tei_paragraphs, xml_text_blocks};
use super::{IngestError, ParserKind};

/// Something that can turn raw source bytes into paragraphs.
pub trait ParserService: Send + Sync {
    fn extract(&self, raw: &[u8], kind: ParserKind) -> Result<Vec<String>, IngestError>;
}

/// Parses sources that are already text: TEI XML for the structured kind,
/// any XML or UTF-8 text for the generic kind. PDFs are rejected.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineParserService;

impl ParserService for OfflineParserService {
    fn extract(&self, raw: &[u8], kind: ParserKind) -> Result<Vec<String>, IngestError> {
        let unavailable = |reason: &str| IngestError::ServiceUnavailable {
            kind,
            reason: reason.to_string(),
        };
        if raw.starts_with(b"%PDF") {
            return Err(unavailable("offline parser cannot read PDF bytes"));
        }
        let text = std::str::from_utf8(raw).map_err(|_| unavailable("source is not UTF-8"))?;
        match kind {
            ParserKind::StructuredTei => tei_paragraphs(text).map_err(|e| unavailable(&e)),
            ParserKind::GenericText => Ok(xml_text_blocks(text).unwrap_or_else(|| segment_plain_text(text))),
        }
    }
}

/// Clients for a GROBID-compatible full-text endpoint and a Tika-compatible
/// plain-text endpoint.
#[derive(Debug, Clone)]
pub struct HttpParserService {
    pub structured_url: Option<String>,
    pub generic_url: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpParserService {
    pub fn new(structured_url: Option<String>, generic_url: Option<String>) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .expect("http client");
        HttpParserService {
            structured_url,
            generic_url,
            client,
        }
    }

    fn grobid(&self, base: &str, raw: &[u8]) -> Result<Vec<String>, String> {
        let url = format!("{}/api/processFulltextDocument", base.trim_end_matches('/'));
        let part = reqwest::blocking::multipart::Part::bytes(raw.to_vec())
            .file_name("input.pdf")
            .mime_str("application/pdf")
            .map_err(|e| e.to_string())?;
        let form = reqwest::blocking::multipart::Form::new().part("input", part);
        let resp = self
            .client
            .post(url)
            .header("Accept", "application/xml")
            .multipart(form)
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        tei_paragraphs(&body)
    }

    fn tika(&self, base: &str, raw: &[u8]) -> Result<Vec<String>, String> {
        let url = format!("{}/tika", base.trim_end_matches('/'));
        let resp = self
            .client
            .put(url)
            .header("Accept", "text/plain")
            .body(raw.to_vec())
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        Ok(segment_plain_text(&body))
    }
}

impl ParserService for HttpParserService {
    fn extract(&self, raw: &[u8], kind: ParserKind) -> Result<Vec<String>, IngestError> {
        let (base, result) = match kind {
            ParserKind::StructuredTei => {
                let base = self.structured_url.as_deref();
                (base, base.map(|b| self.grobid(b, raw)))
            }
            ParserKind::GenericText => {
                let base = self.generic_url.as_deref();
                (base, base.map(|b| self.tika(b, raw)))
            }
        };
        match (base, result) {
            (None, _) | (_, None) => Err(IngestError::ServiceUnavailable {
                kind,
                reason: "no endpoint configured".into(),
            }),
            (_, Some(r)) => r.map_err(|reason| IngestError::ServiceUnavailable { kind, reason }),
        }
    }
}
