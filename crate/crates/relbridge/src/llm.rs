//! Chat-model services: row annotation (label prediction) and row
//! augmentation (free-text enhancement), backed by either a deterministic
//! offline client or a remote HTTP client, with a persistent prompt cache.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::table::Table;

/// A chat endpoint: send one prompt, get one text response. `identity`
/// distinguishes cache entries between models.
pub trait ChatClient {
    fn identity(&self) -> &str;
    fn send(&self, prompt: &str) -> Result<String>;
}

/// Offline client computing its response as a pure function of the prompt;
/// annotation runs against it are bit-reproducible.
type ResponseFn = Box<dyn Fn(&str) -> Result<String>>;

pub struct MockClient {
    identity: String,
    respond: ResponseFn,
}

impl MockClient {
    pub fn new(identity: impl Into<String>, respond: impl Fn(&str) -> Result<String> + 'static) -> MockClient {
        MockClient { identity: identity.into(), respond: Box::new(respond) }
    }

    pub fn fixed(identity: impl Into<String>, response: impl Into<String>) -> MockClient {
        let response = response.into();
        MockClient::new(identity, move |_| Ok(response.clone()))
    }
}

impl ChatClient for MockClient {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn send(&self, prompt: &str) -> Result<String> {
        (self.respond)(prompt)
    }
}

pub const ENV_ENDPOINT: &str = "RELBRIDGE_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "RELBRIDGE_LLM_API_KEY";
pub const ENV_MODEL: &str = "RELBRIDGE_LLM_MODEL";

/// Remote HTTP client configured from the environment. Requests are retried
/// a bounded number of times with doubled backoff. Tests never construct one.
pub struct RemoteClient {
    endpoint: String,
    api_key: String,
    model: String,
    retries: u32,
    base_backoff: Duration,
    http: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    model: &'a str,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct RemoteResponse {
    text: String,
}

impl RemoteClient {
    pub fn from_env() -> Result<RemoteClient> {
        let var = |name: &str| {
            std::env::var(name)
                .map_err(|_| Error::Configuration(format!("environment variable {name} is not set")))
        };
        Ok(RemoteClient {
            endpoint: var(ENV_ENDPOINT)?,
            api_key: var(ENV_API_KEY)?,
            model: var(ENV_MODEL)?,
            retries: 3,
            base_backoff: Duration::from_millis(500),
            http: reqwest::blocking::Client::new(),
        })
    }

    fn send_once(&self, prompt: &str) -> Result<String> {
        let response = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&RemoteRequest { model: &self.model, prompt })
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(Error::Transport(format!("endpoint returned {}", response.status())));
        }
        let body: RemoteResponse =
            response.json().map_err(|e| Error::Transport(format!("bad response body: {e}")))?;
        Ok(body.text)
    }
}

impl ChatClient for RemoteClient {
    fn identity(&self) -> &str {
        &self.model
    }

    fn send(&self, prompt: &str) -> Result<String> {
        let mut backoff = self.base_backoff;
        let mut last_err = None;
        for attempt in 0..=self.retries {
            match self.send_once(prompt) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    last_err = Some(e);
                    if attempt < self.retries {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(last_err.expect("at least one attempt"))
    }
}

// ---------------------------------------------------------------------------
// Prompt cache
// ---------------------------------------------------------------------------

pub fn prompt_hash(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// One cache line: `{"id": model, "h": prompt-hash, "p": prompt, "r": response}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub id: String,
    pub h: String,
    pub p: String,
    pub r: String,
}

#[derive(Debug, Clone)]
pub struct CacheRecovery {
    /// 1-based line number of the first corrupt line.
    pub line: usize,
    pub message: String,
}

/// Parse append-only cache text. Returns the entries of the longest valid
/// prefix, the byte length of that prefix, and what broke (if anything).
pub fn parse_cache_text(text: &str) -> (Vec<CacheEntry>, usize, Option<CacheRecovery>) {
    let mut entries = Vec::new();
    let mut valid_len = 0;
    for (idx, line) in text.split_inclusive('\n').enumerate() {
        let trimmed = line.trim_end_matches('\n').trim_end_matches('\r');
        if trimmed.is_empty() {
            valid_len += line.len();
            continue;
        }
        match serde_json::from_str::<CacheEntry>(trimmed) {
            Ok(entry) => {
                entries.push(entry);
                valid_len += line.len();
            }
            Err(e) => {
                return (
                    entries,
                    valid_len,
                    Some(CacheRecovery { line: idx + 1, message: e.to_string() }),
                );
            }
        }
    }
    (entries, valid_len, None)
}

/// Append-only persistent cache keyed by (client identity, prompt hash).
/// Opening a corrupt file keeps the valid prefix, rewrites the file to it,
/// and records the recovery for the caller to surface.
pub struct PromptCache {
    path: PathBuf,
    entries: BTreeMap<(String, String), String>,
    file: File,
    recovery: Option<CacheRecovery>,
}

impl PromptCache {
    pub fn open(path: &Path) -> Result<PromptCache> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        let (parsed, valid_len, recovery) = parse_cache_text(&text);
        if recovery.is_some() {
            // Rebuild from the valid prefix so later appends stay parseable.
            std::fs::write(path, &text[..valid_len])?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let entries = parsed.into_iter().map(|e| ((e.id, e.h), e.r)).collect();
        Ok(PromptCache { path: path.to_path_buf(), entries, file, recovery })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// The corruption found at open time, if any (`Error::CacheCorrupt` form).
    pub fn recovery(&self) -> Option<Error> {
        self.recovery.as_ref().map(|r| Error::CacheCorrupt {
            line: r.line,
            message: r.message.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, identity: &str, prompt: &str) -> Option<&str> {
        self.entries
            .get(&(identity.to_string(), prompt_hash(prompt)))
            .map(String::as_str)
    }

    pub fn insert(&mut self, identity: &str, prompt: &str, response: &str) -> Result<()> {
        let h = prompt_hash(prompt);
        let line = serde_json::to_string(&CacheEntry {
            id: identity.to_string(),
            h: h.clone(),
            p: prompt.to_string(),
            r: response.to_string(),
        })?;
        writeln!(self.file, "{line}")?;
        self.file.flush()?;
        self.entries.insert((identity.to_string(), h), response.to_string());
        Ok(())
    }
}

/// Return the cached response for (client identity, prompt), or send, store,
/// and return. The store is append-only.
pub fn cached_send(client: &dyn ChatClient, prompt: &str, cache: &mut PromptCache) -> Result<String> {
    if let Some(hit) = cache.get(client.identity(), prompt) {
        return Ok(hit.to_string());
    }
    let response = client.send(prompt)?;
    cache.insert(client.identity(), prompt, &response)?;
    Ok(response)
}

fn send_maybe_cached(
    client: &dyn ChatClient,
    prompt: &str,
    cache: &mut Option<&mut PromptCache>,
) -> Result<String> {
    match cache {
        Some(c) => cached_send(client, prompt, c),
        None => client.send(prompt),
    }
}

// ---------------------------------------------------------------------------
// Prompt templates and rows
// ---------------------------------------------------------------------------

/// One sample to annotate: an id plus its column values as text.
#[derive(Debug, Clone)]
pub struct RowRecord {
    pub id: String,
    pub fields: BTreeMap<String, String>,
}

/// Turn a table into row records (missing cells become empty strings). The
/// table must have a primary key to provide row ids.
pub fn rows_from_table(table: &Table) -> Result<Vec<RowRecord>> {
    let pk = table.primary_key_column().ok_or_else(|| {
        Error::Configuration(format!("table '{}' has no primary key for row ids", table.name()))
    })?;
    let mut rows = Vec::with_capacity(table.row_count());
    for i in 0..table.row_count() {
        let fields = table
            .columns()
            .iter()
            .map(|c| (c.name().to_string(), c.cell(i).unwrap_or("").to_string()))
            .collect();
        rows.push(RowRecord { id: pk.cell(i).unwrap_or("").to_string(), fields });
    }
    Ok(rows)
}

/// Instantiate `{column_name}` placeholders from row fields. Unknown
/// placeholders and unbalanced braces are configuration errors.
pub fn render_template(template: &str, fields: &BTreeMap<String, String>) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else {
            return Err(Error::Configuration(format!(
                "unclosed '{{' in template near '...{}'",
                &rest[open..rest.len().min(open + 20)]
            )));
        };
        let name = &after[..close];
        if name.is_empty() || name.contains('{') {
            return Err(Error::Configuration("empty or nested template placeholder".into()));
        }
        let value = fields.get(name).ok_or_else(|| {
            Error::Configuration(format!("template placeholder '{{{name}}}' has no matching field"))
        })?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    if rest.contains('}') {
        return Err(Error::Configuration("unmatched '}' in template".into()));
    }
    out.push_str(rest);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Annotation (label prediction)
// ---------------------------------------------------------------------------

/// A predicted label for one row, constrained to a class list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub row_id: String,
    pub label: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowFailure {
    pub row_id: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct AnnotationBatch {
    /// One annotation per input row, failures included (with fallbacks).
    pub annotations: Vec<Annotation>,
    pub parse_failures: Vec<RowFailure>,
    pub transport_failures: Vec<RowFailure>,
    /// Rows with confidence below 0.5, exported for manual intervention.
    pub needs_review: Vec<String>,
}

/// Parse `label=...; confidence=...` style responses. The label is matched
/// case-insensitively against the class list; confidence grammar is
/// `confidence[:=]float`, clamped to [0,1].
pub fn parse_annotation(response: &str, classes: &[String]) -> (Option<String>, Option<f64>) {
    let label_re = regex::Regex::new(r"(?i)label\s*[:=]\s*([^;\n]+)").expect("static regex");
    let conf_re = regex::Regex::new(r"(?i)confidence\s*[:=]\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)")
        .expect("static regex");
    let label = label_re.captures(response).and_then(|cap| {
        let raw = cap[1].trim().trim_matches(|c| c == '"' || c == '\'' || c == '.').trim();
        classes.iter().find(|c| c.eq_ignore_ascii_case(raw)).cloned()
    });
    let confidence = conf_re
        .captures(response)
        .and_then(|cap| cap[1].parse::<f64>().ok())
        .map(|c| c.clamp(0.0, 1.0));
    (label, confidence)
}

/// One prompt per row, one annotation per row. Unparseable responses fall
/// back to the first class with confidence 0; transport failures are
/// recorded per row and the batch continues.
pub fn predict_labels(
    rows: &[RowRecord],
    prompt_template: &str,
    classes: &[String],
    client: &dyn ChatClient,
    mut cache: Option<&mut PromptCache>,
) -> Result<AnnotationBatch> {
    if classes.is_empty() {
        return Err(Error::InvalidArgument("class list is empty".into()));
    }
    let fallback = classes[0].clone();
    let mut batch = AnnotationBatch::default();
    for row in rows {
        let prompt = render_template(prompt_template, &row.fields)?;
        let (label, confidence) = match send_maybe_cached(client, &prompt, &mut cache) {
            Ok(response) => {
                let (label, confidence) = parse_annotation(&response, classes);
                if label.is_none() {
                    batch.parse_failures.push(RowFailure {
                        row_id: row.id.clone(),
                        reason: format!("no class label found in response: '{response}'"),
                    });
                }
                if confidence.is_none() && label.is_some() {
                    batch.parse_failures.push(RowFailure {
                        row_id: row.id.clone(),
                        reason: "no confidence found in response".into(),
                    });
                }
                (label, confidence)
            }
            Err(e) => {
                batch
                    .transport_failures
                    .push(RowFailure { row_id: row.id.clone(), reason: e.to_string() });
                (None, None)
            }
        };
        let annotation = Annotation {
            row_id: row.id.clone(),
            label: label.unwrap_or_else(|| fallback.clone()),
            confidence: confidence.unwrap_or(0.0),
        };
        if annotation.confidence < 0.5 {
            batch.needs_review.push(annotation.row_id.clone());
        }
        batch.annotations.push(annotation);
    }
    Ok(batch)
}

// ---------------------------------------------------------------------------
// Enhancement (free-text augmentation)
// ---------------------------------------------------------------------------

#[derive(Debug, Default)]
pub struct EnhanceBatch {
    /// One (row id, text) per input row; failed rows carry empty text.
    pub texts: Vec<(String, String)>,
    pub transport_failures: Vec<RowFailure>,
}

/// One free-text enhancement per row, cached like annotation prompts.
pub fn enhance_rows(
    rows: &[RowRecord],
    prompt_template: &str,
    client: &dyn ChatClient,
    mut cache: Option<&mut PromptCache>,
) -> Result<EnhanceBatch> {
    let mut batch = EnhanceBatch::default();
    for row in rows {
        let prompt = render_template(prompt_template, &row.fields)?;
        match send_maybe_cached(client, &prompt, &mut cache) {
            Ok(text) => batch.texts.push((row.id.clone(), text)),
            Err(e) => {
                batch
                    .transport_failures
                    .push(RowFailure { row_id: row.id.clone(), reason: e.to_string() });
                batch.texts.push((row.id.clone(), String::new()));
            }
        }
    }
    Ok(batch)
}
