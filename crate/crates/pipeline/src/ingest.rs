//! Scheduled crawling of the video search API.
//!
//! A crawl walks the result pages of one keyword, threading the page token
//! from each response into the next request, and publishes every video it
//! finds to [`VIDEO_TOPIC`] keyed by its id. Duplicates are published as-is;
//! the store deduplicates on write.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, NaiveDate, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::broker::Broker;
use crate::clock::{now_seconds, Clock, StopSignal};
use crate::VIDEO_TOPIC;

/// Environment variable holding the search API key for live crawling.
pub const API_KEY_ENV: &str = "PULSESTREAM_YOUTUBE_API_KEY";
pub const SEARCH_PATH: &str = "/youtube/v3/search";
pub const MAX_PAGE_SIZE: u32 = 50;
pub const DEFAULT_DAILY_LIMIT: u32 = 2000;
pub const DEFAULT_MAX_PAGES: u32 = 20;
pub const WATCH_URI_PREFIX: &str = "https://www.youtube.com/watch?v=";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FigureConfig {
    pub figure_id: String,
    pub display_name: String,
    pub keywords: Vec<String>,
}

fn is_slug(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
}

impl FigureConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if !is_slug(&self.figure_id) {
            return Err(IngestError::Config(format!(
                "figure_id {:?} must be a lowercase slug ([a-z0-9_-]+)",
                self.figure_id
            )));
        }
        if self.keywords.is_empty() {
            return Err(IngestError::Config(format!("figure {} has no keywords", self.figure_id)));
        }
        if self.keywords.iter().any(|k| k.trim().is_empty()) {
            return Err(IngestError::Config(format!("figure {} has a blank keyword", self.figure_id)));
        }
        Ok(())
    }
}

/// Validate each figure and that ids are unique.
pub fn validate_figures(figures: &[FigureConfig]) -> Result<(), IngestError> {
    let mut seen = HashSet::new();
    for f in figures {
        f.validate()?;
        if !seen.insert(f.figure_id.as_str()) {
            return Err(IngestError::Config(format!("duplicate figure_id {:?}", f.figure_id)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMetadata {
    pub video_id: String,
    pub channel_id: String,
    pub title: String,
    pub description: String,
    pub uri: String,
    pub figure_id: String,
    pub keyword: String,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchPage {
    pub items: Vec<VideoMetadata>,
    pub next_page_token: Option<String>,
    /// Items dropped for lacking a video id.
    pub skipped: usize,
}

/// Transport-independent description of one search request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestDescriptor {
    pub method: &'static str,
    pub path: &'static str,
    pub query: Vec<(String, String)>,
}

impl RequestDescriptor {
    pub fn param(&self, name: &str) -> Option<&str> {
        self.query.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn keyword(&self) -> Option<&str> {
        self.param("q")
    }

    pub fn page_token(&self) -> Option<&str> {
        self.param("pageToken")
    }
}

/// The API key is not part of the descriptor; [`LiveTransport`] adds it.
pub fn build_search_request(
    keyword: &str,
    page_token: Option<&str>,
    page_size: u32,
) -> Result<RequestDescriptor, IngestError> {
    if keyword.trim().is_empty() {
        return Err(IngestError::InvalidArgument("keyword is blank".into()));
    }
    if !(1..=MAX_PAGE_SIZE).contains(&page_size) {
        return Err(IngestError::InvalidArgument(format!("page size {page_size} outside 1..={MAX_PAGE_SIZE}")));
    }
    let mut query = vec![
        ("part".to_string(), "snippet".to_string()),
        ("q".to_string(), keyword.to_string()),
        ("maxResults".to_string(), page_size.to_string()),
        ("type".to_string(), "video".to_string()),
    ];
    if let Some(token) = page_token {
        query.push(("pageToken".to_string(), token.to_string()));
    }
    Ok(RequestDescriptor { method: "GET", path: SEARCH_PATH, query })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("unexpected response shape: {0}")]
    Schema(String),
    #[error("page holds {0} items, more than {MAX_PAGE_SIZE}")]
    TooManyItems(usize),
}

fn byte_offset(body: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for _ in 1..line {
        match body[offset..].iter().position(|&b| b == b'\n') {
            Some(nl) => offset += nl + 1,
            None => return body.len(),
        }
    }
    (offset + column.saturating_sub(1)).min(body.len())
}

fn opt_str<'a>(obj: &'a Value, field: &str, ctx: &str) -> Result<&'a str, ParseError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(""),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(ParseError::Schema(format!("{ctx}.{field} is not a string"))),
    }
}

/// Map a search response body to a page of videos stamped with the figure,
/// keyword and `now` (truncated to seconds).
pub fn parse_search_response(
    body: &[u8],
    figure_id: &str,
    keyword: &str,
    now: DateTime<Utc>,
) -> Result<SearchPage, ParseError> {
    let root: Value = serde_json::from_slice(body).map_err(|e| ParseError::Json {
        offset: byte_offset(body, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let items = root
        .get("items")
        .ok_or_else(|| ParseError::Schema("missing \"items\"".into()))?
        .as_array()
        .ok_or_else(|| ParseError::Schema("\"items\" is not an array".into()))?;
    if items.len() > MAX_PAGE_SIZE as usize {
        return Err(ParseError::TooManyItems(items.len()));
    }
    let next_page_token = match root.get("nextPageToken") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.is_empty() => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(ParseError::Schema("\"nextPageToken\" is not a string".into())),
    };

    let fetched_at = now.trunc_subsecs(0);
    let mut out = Vec::with_capacity(items.len());
    let mut skipped = 0;
    for (i, item) in items.iter().enumerate() {
        let ctx = format!("items[{i}]");
        if !item.is_object() {
            return Err(ParseError::Schema(format!("{ctx} is not an object")));
        }
        let video_id = match item.get("id").and_then(|id| id.get("videoId")) {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            _ => {
                skipped += 1;
                continue;
            }
        };
        let snippet = item.get("snippet").unwrap_or(&Value::Null);
        let snip_ctx = format!("{ctx}.snippet");
        out.push(VideoMetadata {
            uri: format!("{WATCH_URI_PREFIX}{video_id}"),
            channel_id: opt_str(snippet, "channelId", &snip_ctx)?.to_string(),
            title: opt_str(snippet, "title", &snip_ctx)?.to_string(),
            description: opt_str(snippet, "description", &snip_ctx)?.to_string(),
            video_id,
            figure_id: figure_id.to_string(),
            keyword: keyword.to_string(),
            fetched_at,
        });
    }
    Ok(SearchPage { items: out, next_page_token, skipped })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

/// Executes request descriptors. Implemented over HTTP for live crawling and
/// over a directory of canned responses for tests and demos.
pub trait Transport: Send + Sync {
    fn execute(&self, request: &RequestDescriptor) -> Result<HttpResponse, TransportError>;
}

/// Serves canned responses from a directory.
///
/// `first.json` answers requests without a page token and `<token>.json`
/// answers token `<token>`. A subdirectory named after a keyword, if present,
/// overrides the shared pages for that keyword. Unknown pages yield 404.
#[derive(Debug)]
pub struct FixtureTransport {
    dir: PathBuf,
    calls: Mutex<HashMap<String, u32>>,
}

impl FixtureTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let dir = dir.into();
        if !dir.join("first.json").is_file() {
            return Err(IngestError::Config(format!("fixture dir {} has no first.json", dir.display())));
        }
        Ok(FixtureTransport { dir, calls: Mutex::new(HashMap::new()) })
    }

    /// Requests served so far for `keyword`.
    pub fn calls_for(&self, keyword: &str) -> u32 {
        self.calls.lock().unwrap().get(keyword).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> u32 {
        self.calls.lock().unwrap().values().sum()
    }

    fn safe_name(s: &str) -> bool {
        !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '-' || c == '_') && s != "first"
    }

    fn page_path(&self, keyword: &str, token: Option<&str>) -> Option<PathBuf> {
        let file = match token {
            None => "first.json".to_string(),
            Some(t) if Self::safe_name(t) => format!("{t}.json"),
            Some(_) => return None,
        };
        let keyword_dir = self.dir.join(keyword);
        if Self::safe_name(keyword) && keyword_dir.is_dir() {
            return Some(keyword_dir.join(file));
        }
        Some(self.dir.join(file))
    }
}

impl Transport for FixtureTransport {
    fn execute(&self, request: &RequestDescriptor) -> Result<HttpResponse, TransportError> {
        let keyword = request.keyword().unwrap_or_default();
        *self.calls.lock().unwrap().entry(keyword.to_string()).or_default() += 1;
        let Some(path) = self.page_path(keyword, request.page_token()) else {
            return Ok(HttpResponse { status: 400, body: b"{\"error\":\"bad page token\"}".to_vec() });
        };
        match fs::read(&path) {
            Ok(body) => Ok(HttpResponse { status: 200, body }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Ok(HttpResponse { status: 404, body: b"{\"error\":\"no such page\"}".to_vec() })
            }
            Err(e) => Err(TransportError(format!("{}: {e}", path.display()))),
        }
    }
}

/// HTTPS transport against the real search API.
pub struct LiveTransport {
    agent: ureq::Agent,
    base_url: String,
    api_key: String,
}

impl LiveTransport {
    pub const DEFAULT_BASE_URL: &'static str = "https://www.googleapis.com";

    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        LiveTransport { agent, base_url: base_url.into(), api_key: api_key.into() }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env() -> Result<Self, IngestError> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::new(Self::DEFAULT_BASE_URL, key.trim())),
            _ => Err(IngestError::Config(format!("environment variable {API_KEY_ENV} is not set"))),
        }
    }
}

impl Transport for LiveTransport {
    fn execute(&self, request: &RequestDescriptor) -> Result<HttpResponse, TransportError> {
        let url = format!("{}{}", self.base_url.trim_end_matches('/'), request.path);
        let pairs = request.query.iter().map(|(k, v)| (k.as_str(), v.as_str()));
        let mut resp = self
            .agent
            .get(&url)
            .query_pairs(pairs)
            .query("key", &self.api_key)
            .call()
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_vec().map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotaSnapshot {
    pub daily_limit: u32,
    pub used_today: u32,
    pub day: NaiveDate,
}

/// Daily request budget, reset at UTC midnight. Internally synchronized.
pub struct QuotaBudget {
    clock: Arc<dyn Clock>,
    state: Mutex<QuotaSnapshot>,
}

impl std::fmt::Debug for QuotaBudget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("QuotaBudget").field(&*self.state.lock().unwrap()).finish()
    }
}

impl QuotaBudget {
    pub fn new(daily_limit: u32, clock: Arc<dyn Clock>) -> Self {
        let day = clock.now().date_naive();
        QuotaBudget { clock, state: Mutex::new(QuotaSnapshot { daily_limit, used_today: 0, day }) }
    }

    /// Resume from a saved snapshot if `path` exists. The configured limit
    /// wins over the saved one.
    pub fn load_or_new(path: &Path, daily_limit: u32, clock: Arc<dyn Clock>) -> std::io::Result<Self> {
        let budget = Self::new(daily_limit, clock);
        match fs::read(path) {
            Ok(bytes) => {
                let saved: QuotaSnapshot = serde_json::from_slice(&bytes)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
                let mut s = budget.state.lock().unwrap();
                s.day = saved.day;
                s.used_today = saved.used_today.min(daily_limit);
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        Ok(budget)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_vec_pretty(&self.snapshot()).expect("snapshot serializes");
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, json)?;
        fs::rename(tmp, path)
    }

    fn roll(&self, s: &mut QuotaSnapshot) {
        let today = self.clock.now().date_naive();
        if today != s.day {
            s.day = today;
            s.used_today = 0;
        }
    }

    /// Take one unit if any remain today.
    pub fn try_consume(&self) -> bool {
        let mut s = self.state.lock().unwrap();
        self.roll(&mut s);
        if s.used_today < s.daily_limit {
            s.used_today += 1;
            true
        } else {
            false
        }
    }

    pub fn remaining(&self) -> u32 {
        let mut s = self.state.lock().unwrap();
        self.roll(&mut s);
        s.daily_limit - s.used_today
    }

    pub fn snapshot(&self) -> QuotaSnapshot {
        let mut s = self.state.lock().unwrap();
        self.roll(&mut s);
        *s
    }
}

/// Retries after transport errors and 5xx responses; 4xx is final.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Delay before each retry; its length is the retry count.
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { backoff: vec![Duration::from_millis(500), Duration::from_secs(1), Duration::from_secs(2)] }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy { backoff: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlStats {
    pub figure_id: String,
    pub keyword: String,
    pub pages: u32,
    pub videos: u32,
    /// Transport calls issued, retries included; each consumed one quota unit.
    pub requests: u32,
    pub skipped_items: u32,
    pub quota_exhausted: bool,
    pub errors: Vec<String>,
}

#[derive(Clone)]
pub struct Crawler {
    pub transport: Arc<dyn Transport>,
    pub quota: Arc<QuotaBudget>,
    pub broker: Broker,
    pub clock: Arc<dyn Clock>,
    pub retry: RetryPolicy,
    pub max_pages: u32,
    pub page_size: u32,
}

enum Fetch {
    Body(Vec<u8>),
    QuotaExhausted,
    Failed(String),
}

impl Crawler {
    pub fn new(transport: Arc<dyn Transport>, quota: Arc<QuotaBudget>, broker: Broker, clock: Arc<dyn Clock>) -> Self {
        Crawler {
            transport,
            quota,
            broker,
            clock,
            retry: RetryPolicy::default(),
            max_pages: DEFAULT_MAX_PAGES,
            page_size: MAX_PAGE_SIZE,
        }
    }

    fn fetch(&self, request: &RequestDescriptor, stats: &mut CrawlStats) -> Fetch {
        let mut attempt = 0;
        loop {
            if !self.quota.try_consume() {
                return Fetch::QuotaExhausted;
            }
            stats.requests += 1;
            let failure = match self.transport.execute(request) {
                Ok(resp) if (200..300).contains(&resp.status) => return Fetch::Body(resp.body),
                Ok(resp) if (400..500).contains(&resp.status) => {
                    return Fetch::Failed(format!("HTTP {} for page token {:?}", resp.status, request.page_token()))
                }
                Ok(resp) => format!("HTTP {}", resp.status),
                Err(e) => e.to_string(),
            };
            match self.retry.backoff.get(attempt) {
                Some(&delay) => {
                    log::warn!("{}: {failure}; retrying in {delay:?}", stats.keyword);
                    self.clock.sleep(delay);
                    attempt += 1;
                }
                None => return Fetch::Failed(format!("{failure} after {} attempts", attempt + 1)),
            }
        }
    }

    /// Walk the result pages for one keyword, publishing every video.
    pub fn crawl_keyword(&self, figure_id: &str, keyword: &str) -> Result<CrawlStats, IngestError> {
        if self.max_pages == 0 {
            return Err(IngestError::InvalidArgument("max_pages must be at least 1".into()));
        }
        self.broker
            .ensure_topic(VIDEO_TOPIC, crate::DEFAULT_PARTITIONS)
            .map_err(|e| IngestError::InvalidArgument(e.to_string()))?;
        let mut stats = CrawlStats { figure_id: figure_id.into(), keyword: keyword.into(), ..CrawlStats::default() };
        let mut token: Option<String> = None;
        while stats.pages < self.max_pages {
            let request = build_search_request(keyword, token.as_deref(), self.page_size)?;
            let body = match self.fetch(&request, &mut stats) {
                Fetch::Body(b) => b,
                Fetch::QuotaExhausted => {
                    stats.quota_exhausted = true;
                    break;
                }
                Fetch::Failed(msg) => {
                    stats.errors.push(msg);
                    break;
                }
            };
            let page = match parse_search_response(&body, figure_id, keyword, now_seconds(&*self.clock)) {
                Ok(p) => p,
                Err(e) => {
                    stats.errors.push(e.to_string());
                    break;
                }
            };
            stats.pages += 1;
            stats.skipped_items += page.skipped as u32;
            for video in &page.items {
                let payload = serde_json::to_vec(video).expect("metadata serializes");
                self.broker
                    .publish(VIDEO_TOPIC, Some(video.video_id.as_bytes()), payload)
                    .map_err(|e| IngestError::InvalidArgument(e.to_string()))?;
                stats.videos += 1;
            }
            match page.next_page_token {
                Some(t) => token = Some(t),
                None => break,
            }
        }
        Ok(stats)
    }

    /// One pass over every (figure, keyword) pair, in config order.
    pub fn crawl_all(&self, figures: &[FigureConfig], stop: Option<&StopSignal>) -> Vec<CrawlStats> {
        let mut out = Vec::new();
        for fig in figures {
            for kw in &fig.keywords {
                if stop.is_some_and(|s| s.is_stopped()) {
                    return out;
                }
                match self.crawl_keyword(&fig.figure_id, kw) {
                    Ok(stats) => {
                        for e in &stats.errors {
                            log::warn!("crawl {}/{kw}: {e}", fig.figure_id);
                        }
                        out.push(stats);
                    }
                    Err(e) => log::error!("crawl {}/{kw}: {e}", fig.figure_id),
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStats {
    pub ticks: u64,
    /// Ticks dropped because the previous one ran past their start time.
    pub skipped_ticks: u64,
    pub crawls: u64,
    pub videos: u64,
}

/// Crawl every configured keyword each `interval` until `stop` fires (or
/// `max_ticks` ticks have run). An overrunning tick is never overlapped:
/// the ticks it ran into are skipped and counted.
pub fn run_schedule(
    figures: &[FigureConfig],
    interval: Duration,
    crawler: &Crawler,
    stop: &StopSignal,
    max_ticks: Option<u64>,
    mut on_tick: impl FnMut(&[CrawlStats]),
) -> Result<ScheduleStats, IngestError> {
    if interval.is_zero() {
        return Err(IngestError::InvalidArgument("crawl interval must be positive".into()));
    }
    validate_figures(figures)?;
    let step = chrono::Duration::from_std(interval).map_err(|e| IngestError::InvalidArgument(e.to_string()))?;
    let clock = &*crawler.clock;
    let mut stats = ScheduleStats::default();
    let mut next = clock.now();
    while !stop.is_stopped() && max_ticks.is_none_or(|m| stats.ticks < m) {
        let tick = crawler.crawl_all(figures, Some(stop));
        stats.ticks += 1;
        stats.crawls += tick.len() as u64;
        stats.videos += tick.iter().map(|s| s.videos as u64).sum::<u64>();
        on_tick(&tick);

        next += step;
        let now = clock.now();
        while next <= now {
            stats.skipped_ticks += 1;
            next += step;
        }
        if stop.is_stopped() || max_ticks.is_some_and(|m| stats.ticks >= m) {
            break;
        }
        let wait = (next - now).to_std().unwrap_or_default();
        clock.wait(wait, stop);
    }
    Ok(stats)
}
