//! Paged JSON-over-HTTP recording archive client.
//!
//! Endpoint layout and JSON field names come from a [`FetchConfig`] so the
//! client is not tied to one revision of the archive's API.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Attempts per request before giving up.
pub const MAX_ATTEMPTS: u32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FetchConfig {
    pub base_url: String,
    /// Search URL template; `{base}`, `{query}` and `{page}` are substituted.
    pub query_template: String,
    /// Results per page the archive returns; used only to stop paging early.
    pub page_size: usize,
    /// Minimum seconds between consecutive requests.
    pub min_interval_secs: f64,
    /// First retry delay; doubled on each further attempt.
    pub backoff_secs: f64,
    pub recordings_field: String,
    pub id_field: String,
    pub file_field: String,
    pub pages_field: String,
    pub extension: String,
}

impl Default for FetchConfig {
    fn default() -> Self {
        Self {
            base_url: "https://xeno-canto.org/api/2/recordings".into(),
            query_template: "{base}?query={query}&page={page}".into(),
            page_size: 500,
            min_interval_secs: 1.0,
            backoff_secs: 1.0,
            recordings_field: "recordings".into(),
            id_field: "id".into(),
            file_field: "file".into(),
            pages_field: "numPages".into(),
            extension: "mp3".into(),
        }
    }
}

impl FetchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    fn page_url(&self, query: &str, page: usize) -> String {
        self.query_template
            .replace("{base}", &self.base_url)
            .replace("{query}", &percent_encode(query))
            .replace("{page}", &page.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FetchQuery {
    pub species: String,
    pub max_results: usize,
    pub cache_dir: PathBuf,
}

/// One downloaded (or cached) recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FetchedRecording {
    pub id: String,
    pub path: PathBuf,
    pub species: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FetchOutcome {
    pub recordings: Vec<FetchedRecording>,
    /// Audio payloads actually transferred (cache hits excluded).
    pub downloads: usize,
    /// HTTP requests issued, retries included.
    pub requests: usize,
}

impl FetchOutcome {
    /// `path,species` CSV rows for the fetched files.
    pub fn manifest_rows(&self) -> Vec<(PathBuf, String)> {
        self.recordings.iter().map(|r| (r.path.clone(), r.species.clone())).collect()
    }
}

pub trait HttpClient {
    fn get(&mut self, url: &str) -> std::result::Result<Vec<u8>, String>;
}

pub trait Clock {
    fn now(&self) -> Duration;
    fn sleep(&mut self, d: Duration);
}

pub struct SystemClock {
    start: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { start: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }
    fn sleep(&mut self, d: Duration) {
        std::thread::sleep(d);
    }
}

pub struct UreqClient {
    agent: ureq::Agent,
}

impl Default for UreqClient {
    fn default() -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
        }
    }
}

impl HttpClient for UreqClient {
    fn get(&mut self, url: &str) -> std::result::Result<Vec<u8>, String> {
        let resp = self.agent.get(url).call().map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        std::io::Read::read_to_end(&mut resp.into_reader(), &mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    }
}

pub struct Fetcher<H: HttpClient, C: Clock> {
    config: FetchConfig,
    http: H,
    clock: C,
    last_request: Option<Duration>,
    requests: usize,
}

impl<H: HttpClient, C: Clock> Fetcher<H, C> {
    pub fn new(config: FetchConfig, http: H, clock: C) -> Self {
        Self {
            config,
            http,
            clock,
            last_request: None,
            requests: 0,
        }
    }

    fn throttle(&mut self) {
        let gap = Duration::from_secs_f64(self.config.min_interval_secs.max(0.0));
        if let Some(last) = self.last_request {
            let since = self.clock.now().saturating_sub(last);
            if since < gap {
                self.clock.sleep(gap - since);
            }
        }
        self.last_request = Some(self.clock.now());
    }

    fn get_with_retry(&mut self, url: &str) -> Result<Vec<u8>> {
        let mut delay = self.config.backoff_secs.max(0.0);
        let mut last_err = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            self.throttle();
            self.requests += 1;
            match self.http.get(url) {
                Ok(body) => return Ok(body),
                Err(e) => {
                    log::warn!("GET {url} failed (attempt {attempt}/{MAX_ATTEMPTS}): {e}");
                    last_err = e;
                    if attempt < MAX_ATTEMPTS {
                        self.clock.sleep(Duration::from_secs_f64(delay));
                        delay *= 2.0;
                    }
                }
            }
        }
        Err(Error::Fetch(format!("{url}: {last_err} after {MAX_ATTEMPTS} attempts")))
    }

    /// Lists recording ids and download URLs for a query, at most `limit`.
    fn list(&mut self, query: &str, limit: usize) -> Result<Vec<(String, String)>> {
        let cfg = self.config.clone();
        let mut out = Vec::new();
        let mut page = 1;
        loop {
            let body = self.get_with_retry(&cfg.page_url(query, page))?;
            let json: Value = serde_json::from_slice(&body)
                .map_err(|e| Error::Parse(format!("page {page}: {e}")))?;
            let recs = json
                .get(&cfg.recordings_field)
                .and_then(Value::as_array)
                .ok_or_else(|| {
                    Error::Parse(format!("page {page}: missing array '{}'", cfg.recordings_field))
                })?;
            for r in recs {
                let id = scalar_string(r.get(&cfg.id_field)).ok_or_else(|| {
                    Error::Parse(format!("page {page}: recording without '{}'", cfg.id_field))
                })?;
                let file = scalar_string(r.get(&cfg.file_field)).ok_or_else(|| {
                    Error::Parse(format!("recording {id}: missing '{}'", cfg.file_field))
                })?;
                out.push((id, file));
                if out.len() == limit {
                    return Ok(out);
                }
            }
            let pages = json.get(&cfg.pages_field).and_then(|v| {
                v.as_u64().or_else(|| v.as_str().and_then(|s| s.parse().ok()))
            });
            let exhausted = match pages {
                Some(n) => page as u64 >= n,
                None => recs.len() < cfg.page_size || recs.is_empty(),
            };
            if exhausted {
                return Ok(out);
            }
            page += 1;
        }
    }

    /// Downloads up to `max_results` recordings into the cache directory.
    ///
    /// The id listing of a completed query is kept in the cache as well, so
    /// repeating a fully cached query touches the network not at all.
    pub fn fetch(&mut self, query: &FetchQuery) -> Result<FetchOutcome> {
        if query.max_results == 0 {
            return Err(Error::Parameter("max_results must be at least 1".into()));
        }
        fs::create_dir_all(&query.cache_dir).map_err(|e| Error::io(&query.cache_dir, e))?;
        self.requests = 0;
        let ext = self.config.extension.clone();
        let index_path = query
            .cache_dir
            .join(format!("query-{}-{}.json", slug(&query.species), query.max_results));

        let listing: Vec<(String, String)> = match fs::read(&index_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| Error::Parse(format!("{}: {e}", index_path.display())))?,
            Err(_) => self.list(&query.species, query.max_results)?,
        };

        let mut outcome = FetchOutcome::default();
        for (id, url) in &listing {
            let path = query.cache_dir.join(format!("{id}.{ext}"));
            if !path.exists() {
                let body = self.get_with_retry(url)?;
                let tmp = path.with_extension(format!("{ext}.part"));
                fs::write(&tmp, &body).map_err(|e| Error::io(&tmp, e))?;
                fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
                outcome.downloads += 1;
            }
            outcome.recordings.push(FetchedRecording {
                id: id.clone(),
                path,
                species: query.species.clone(),
            });
        }
        let json = serde_json::to_vec(&listing).expect("listing serializes");
        fs::write(&index_path, json).map_err(|e| Error::io(&index_path, e))?;
        outcome.requests = self.requests;
        Ok(outcome)
    }
}

fn scalar_string(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn percent_encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => out.push(b as char),
            b' ' => out.push('+'),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}
