//! Partitioned, append-only, deduplicating record store.
//!
//! On-disk layout:
//!
//! ```text
//! <root>/manifest.json                         committed segment list
//! <root>/data/<YYYY-MM-DD>/segment-<n>.jsonl   one JSON record per line
//! <root>/video-ids.idx                         "<video_id>\t<segment>\t<line>" per record
//! <root>/LOCK                                  held by the single writer
//! ```
//!
//! The manifest is the commit point: a segment contributes exactly its first
//! `record_count` lines, so bytes written by an append that never reached
//! the manifest are invisible and get truncated by the next append.
//! Sentiment updates rewrite the affected segment through a temp file and an
//! atomic rename, preserving line order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, NaiveDate, Utc};
use pulsestream_core::Sentiment;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::VideoMetadata;

const MANIFEST: &str = "manifest.json";
const INDEX: &str = "video-ids.idx";
const LOCK: &str = "LOCK";
const FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("video {0:?} not found")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("corrupt segment {path}: {reason}")]
    Scan { path: PathBuf, reason: String },
    #[error("corrupt manifest: {0}")]
    Manifest(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("store at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("store was opened read-only")]
    ReadOnly,
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub label: Sentiment,
    pub confidence: f64,
    pub scored_at: DateTime<Utc>,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    #[serde(flatten)]
    pub video: VideoMetadata,
    pub sentiment: Option<SentimentScore>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentInfo {
    /// Relative to the store root, `/`-separated.
    pub path: String,
    pub date_partition: NaiveDate,
    pub record_count: u64,
    pub min_fetched_at: Option<DateTime<Utc>>,
    pub max_fetched_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentManifest {
    pub format: u32,
    /// Bumped on every commit.
    pub store_version: u64,
    /// In creation order.
    pub segments: Vec<SegmentInfo>,
}

impl Default for SegmentManifest {
    fn default() -> Self {
        SegmentManifest { format: FORMAT, store_version: 0, segments: Vec::new() }
    }
}

impl SegmentManifest {
    pub fn record_count(&self) -> u64 {
        self.segments.iter().map(|s| s.record_count).sum()
    }

    pub fn date_partitions(&self) -> Vec<NaiveDate> {
        let mut dates: Vec<_> = self.segments.iter().map(|s| s.date_partition).collect();
        dates.sort_unstable();
        dates.dedup();
        dates
    }

    /// Segments in scan order: by date partition, then creation.
    fn scan_order(&self) -> Vec<SegmentInfo> {
        let mut segs = self.segments.clone();
        segs.sort_by_key(|s| s.date_partition);
        segs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppendResult {
    pub written: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanFilter {
    pub figure_id: Option<String>,
    pub date_from: Option<NaiveDate>,
    pub date_to: Option<NaiveDate>,
    /// `Some(true)` only scored records, `Some(false)` only unscored.
    pub scored: Option<bool>,
}

impl ScanFilter {
    pub fn figure(figure_id: impl Into<String>) -> Self {
        ScanFilter { figure_id: Some(figure_id.into()), ..Self::default() }
    }

    pub fn scored(scored: bool) -> Self {
        ScanFilter { scored: Some(scored), ..Self::default() }
    }

    fn admits_date(&self, date: NaiveDate) -> bool {
        self.date_from.is_none_or(|d| date >= d) && self.date_to.is_none_or(|d| date <= d)
    }

    fn admits(&self, rec: &StoredRecord) -> bool {
        self.figure_id.as_ref().is_none_or(|f| *f == rec.video.figure_id)
            && self.scored.is_none_or(|s| s == rec.sentiment.is_some())
            && self.admits_date(rec.video.fetched_at.date_naive())
    }
}

#[derive(Debug, Clone)]
pub struct SentimentUpdate {
    pub video_id: String,
    pub label: Sentiment,
    pub confidence: f64,
    pub scored_at: DateTime<Utc>,
    pub model_version: String,
}

#[derive(Debug, Clone, Copy)]
pub struct StoreOptions {
    /// fsync files and the manifest on every commit.
    pub sync: bool,
    /// Roll to a new segment once the current one holds this many records.
    pub max_segment_records: u64,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { sync: true, max_segment_records: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Location {
    segment: usize,
    line: u64,
}

#[derive(Debug, Default)]
struct State {
    manifest: SegmentManifest,
    index: HashMap<String, Location>,
    /// Model version per scored record, to enforce the re-scoring rule.
    scored_by: HashMap<String, String>,
}

pub struct Store {
    root: PathBuf,
    options: StoreOptions,
    state: RwLock<State>,
    writer: Mutex<()>,
    lock: Option<File>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).field("read_only", &self.lock.is_none()).finish()
    }
}

fn read_committed_lines(path: &Path, count: u64) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| StoreError::Scan { path: path.to_path_buf(), reason: e.to_string() })?;
    let mut reader = BufReader::new(file);
    let mut lines = Vec::with_capacity(count as usize);
    for i in 0..count {
        let mut line = String::new();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| StoreError::Scan { path: path.to_path_buf(), reason: e.to_string() })?;
        if n == 0 || !line.ends_with('\n') {
            return Err(StoreError::Scan {
                path: path.to_path_buf(),
                reason: format!("expected {count} records, found {i}"),
            });
        }
        line.pop();
        lines.push(line);
    }
    Ok(lines)
}

fn parse_record(path: &Path, line_no: u64, line: &str) -> Result<StoredRecord> {
    serde_json::from_str(line).map_err(|e| StoreError::Scan {
        path: path.to_path_buf(),
        reason: format!("record {line_no}: {e}"),
    })
}

/// Byte length of the first `count` lines.
fn committed_len(path: &Path, count: u64) -> Result<u64> {
    let mut file = File::open(path).map_err(io_err(path))?;
    let mut buf = [0u8; 64 * 1024];
    let (mut seen, mut pos) = (0u64, 0u64);
    if count == 0 {
        return Ok(0);
    }
    loop {
        let n = file.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            return Err(StoreError::Scan { path: path.to_path_buf(), reason: format!("expected {count} records") });
        }
        for (i, &b) in buf[..n].iter().enumerate() {
            if b == b'\n' {
                seen += 1;
                if seen == count {
                    return Ok(pos + i as u64 + 1);
                }
            }
        }
        pos += n as u64;
    }
}

fn sync_dir(dir: &Path) -> Result<()> {
    File::open(dir).and_then(|d| d.sync_all()).map_err(io_err(dir))
}

impl Store {
    /// Open (creating if needed) as the single writer.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(root, StoreOptions::default())
    }

    pub fn open_with(root: impl AsRef<Path>, options: StoreOptions) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("data")).map_err(io_err(&root))?;
        let lock_path = root.join(LOCK);
        let lock = OpenOptions::new().create(true).truncate(false).write(true).open(&lock_path).map_err(io_err(&lock_path))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(StoreError::Locked(root)),
            Err(fs::TryLockError::Error(e)) => return Err(io_err(&lock_path)(e)),
        }
        let mut store = Store { root, options, state: RwLock::default(), writer: Mutex::new(()), lock: Some(lock) };
        store.load()?;
        Ok(store)
    }

    /// Open for scanning only; no lock is taken and writes are refused.
    pub fn open_read_only(root: impl AsRef<Path>) -> Result<Self> {
        let mut store = Store {
            root: root.as_ref().to_path_buf(),
            options: StoreOptions::default(),
            state: RwLock::default(),
            writer: Mutex::new(()),
            lock: None,
        };
        store.load()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn abs(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn load(&mut self) -> Result<()> {
        let path = self.root.join(MANIFEST);
        let manifest = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice::<SegmentManifest>(&bytes).map_err(|e| StoreError::Manifest(e.to_string()))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => SegmentManifest::default(),
            Err(e) => return Err(io_err(&path)(e)),
        };
        if manifest.format != FORMAT {
            return Err(StoreError::Manifest(format!("unsupported format {}", manifest.format)));
        }
        let mut state = State { manifest, ..State::default() };
        self.rebuild_index(&mut state)?;
        *self.state.get_mut().unwrap() = state;
        Ok(())
    }

    /// Load the id index and scoring versions. The persisted index is
    /// trusted only when it lists exactly the committed records; otherwise
    /// it is rebuilt from the segments.
    fn rebuild_index(&self, state: &mut State) -> Result<()> {
        let expected = state.manifest.record_count();
        let mut index = HashMap::with_capacity(expected as usize);
        let mut scored_by = HashMap::new();
        for (seg_no, seg) in state.manifest.segments.iter().enumerate() {
            let path = self.abs(&seg.path);
            for (line_no, line) in read_committed_lines(&path, seg.record_count)?.iter().enumerate() {
                let rec = parse_record(&path, line_no as u64, line)?;
                if let Some(s) = &rec.sentiment {
                    scored_by.insert(rec.video.video_id.clone(), s.model_version.clone());
                }
                index.insert(rec.video.video_id, Location { segment: seg_no, line: line_no as u64 });
            }
        }
        let persisted = self.read_index_file(&state.manifest);
        if persisted.as_ref() != Some(&index) && self.lock.is_some() {
            self.write_index_file(&index)?;
        }
        state.index = index;
        state.scored_by = scored_by;
        Ok(())
    }

    fn read_index_file(&self, manifest: &SegmentManifest) -> Option<HashMap<String, Location>> {
        let text = fs::read_to_string(self.root.join(INDEX)).ok()?;
        let mut index = HashMap::new();
        for line in text.lines() {
            let mut parts = line.split('\t');
            let id = parts.next()?;
            let segment: usize = parts.next()?.parse().ok()?;
            let line_no: u64 = parts.next()?.parse().ok()?;
            if manifest.segments.get(segment)?.record_count <= line_no {
                return None;
            }
            index.insert(id.to_string(), Location { segment, line: line_no });
        }
        Some(index)
    }

    fn write_index_file(&self, index: &HashMap<String, Location>) -> Result<()> {
        let mut entries: Vec<_> = index.iter().collect();
        entries.sort_by_key(|(_, loc)| (loc.segment, loc.line));
        let mut out = String::new();
        for (id, loc) in entries {
            out.push_str(&format!("{id}\t{}\t{}\n", loc.segment, loc.line));
        }
        self.write_atomic(INDEX, out.as_bytes())
    }

    fn append_index_entries(&self, entries: &[(String, Location)]) -> Result<()> {
        let path = self.root.join(INDEX);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        let mut out = String::new();
        for (id, loc) in entries {
            out.push_str(&format!("{id}\t{}\t{}\n", loc.segment, loc.line));
        }
        f.write_all(out.as_bytes()).map_err(io_err(&path))
    }

    fn write_atomic(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.abs(rel);
        let tmp = path.with_extension("tmp");
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(bytes).map_err(io_err(&tmp))?;
            if self.options.sync {
                f.sync_all().map_err(io_err(&tmp))?;
            }
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        if self.options.sync {
            sync_dir(path.parent().unwrap_or(&self.root))?;
        }
        Ok(())
    }

    fn commit_manifest(&self, manifest: &SegmentManifest) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
        self.write_atomic(MANIFEST, &bytes)
    }

    fn ensure_writer(&self) -> Result<()> {
        if self.lock.is_none() {
            Err(StoreError::ReadOnly)
        } else {
            Ok(())
        }
    }

    /// Persist records whose `video_id` has not been seen before; the rest
    /// (including repeats within the batch) are counted as duplicates.
    /// Either the whole batch becomes visible or none of it does.
    pub fn append_batch(&self, records: &[VideoMetadata]) -> Result<AppendResult> {
        self.ensure_writer()?;
        if let Some(bad) = records.iter().find(|r| r.video_id.is_empty()) {
            return Err(StoreError::InvalidArgument(format!("record with empty video_id (title {:?})", bad.title)));
        }
        let _guard = self.writer.lock().unwrap();
        let mut manifest = self.state.read().unwrap().manifest.clone();

        let mut fresh: Vec<&VideoMetadata> = Vec::new();
        {
            let state = self.state.read().unwrap();
            let mut seen = HashSet::new();
            for r in records {
                if !state.index.contains_key(&r.video_id) && seen.insert(r.video_id.as_str()) {
                    fresh.push(r);
                }
            }
        }
        let duplicates = records.len() - fresh.len();
        if fresh.is_empty() {
            return Ok(AppendResult { written: 0, duplicates });
        }

        let mut by_date: BTreeMap<NaiveDate, Vec<&VideoMetadata>> = BTreeMap::new();
        for r in &fresh {
            by_date.entry(r.fetched_at.date_naive()).or_default().push(r);
        }

        let mut new_entries = Vec::with_capacity(fresh.len());
        for (date, recs) in by_date {
            let mut pending = recs.as_slice();
            while !pending.is_empty() {
                let seg_no = self.segment_for(&mut manifest, date)?;
                let seg = &mut manifest.segments[seg_no];
                let room = (self.options.max_segment_records - seg.record_count) as usize;
                let (chunk, rest) = pending.split_at(room.min(pending.len()));
                pending = rest;

                let path = self.abs(&seg.path);
                let keep = committed_len(&path, seg.record_count)?;
                let mut file = OpenOptions::new().write(true).open(&path).map_err(io_err(&path))?;
                file.set_len(keep).map_err(io_err(&path))?;
                file.seek(SeekFrom::Start(keep)).map_err(io_err(&path))?;
                let mut w = BufWriter::new(&file);
                for (k, r) in chunk.iter().enumerate() {
                    let rec = StoredRecord { video: (*r).clone(), sentiment: None };
                    serde_json::to_writer(&mut w, &rec).expect("record serializes");
                    w.write_all(b"\n").map_err(io_err(&path))?;
                    new_entries.push((r.video_id.clone(), Location { segment: seg_no, line: seg.record_count + k as u64 }));
                    seg.min_fetched_at = Some(seg.min_fetched_at.map_or(r.fetched_at, |m| m.min(r.fetched_at)));
                    seg.max_fetched_at = Some(seg.max_fetched_at.map_or(r.fetched_at, |m| m.max(r.fetched_at)));
                }
                w.flush().map_err(io_err(&path))?;
                drop(w);
                if self.options.sync {
                    file.sync_all().map_err(io_err(&path))?;
                }
                seg.record_count += chunk.len() as u64;
            }
        }

        manifest.store_version += 1;
        self.commit_manifest(&manifest)?;
        {
            let mut state = self.state.write().unwrap();
            state.manifest = manifest;
            state.index.extend(new_entries.iter().cloned());
        }
        if let Err(e) = self.append_index_entries(&new_entries) {
            log::warn!("id index not updated ({e}); it will be rebuilt on next open");
        }
        Ok(AppendResult { written: fresh.len(), duplicates })
    }

    /// Index of the open segment for `date`, creating one if needed.
    fn segment_for(&self, manifest: &mut SegmentManifest, date: NaiveDate) -> Result<usize> {
        let existing: Vec<usize> =
            (0..manifest.segments.len()).filter(|&i| manifest.segments[i].date_partition == date).collect();
        if let Some(&last) = existing.last() {
            if manifest.segments[last].record_count < self.options.max_segment_records {
                return Ok(last);
            }
        }
        let dir = format!("data/{}", date.format("%Y-%m-%d"));
        fs::create_dir_all(self.abs(&dir)).map_err(io_err(&self.abs(&dir)))?;
        let rel = format!("{dir}/segment-{}.jsonl", existing.len());
        let path = self.abs(&rel);
        File::create(&path).map_err(io_err(&path))?;
        if self.options.sync {
            sync_dir(&self.abs(&dir))?;
        }
        manifest.segments.push(SegmentInfo {
            path: rel,
            date_partition: date,
            record_count: 0,
            min_fetched_at: None,
            max_fetched_at: None,
        });
        Ok(manifest.segments.len() - 1)
    }

    pub fn write_sentiment(&self, video_id: &str, label: Sentiment, confidence: f64, model_version: &str) -> Result<()> {
        self.write_sentiments(&[SentimentUpdate {
            video_id: video_id.to_string(),
            label,
            confidence,
            scored_at: Utc::now(),
            model_version: model_version.to_string(),
        }])
    }

    /// Apply a batch of sentiment overlays. All updates are validated first;
    /// an unknown id or a same-version overwrite rejects the whole batch.
    pub fn write_sentiments(&self, updates: &[SentimentUpdate]) -> Result<()> {
        self.ensure_writer()?;
        let _guard = self.writer.lock().unwrap();
        let mut by_segment: BTreeMap<usize, Vec<(u64, &SentimentUpdate)>> = BTreeMap::new();
        let manifest = {
            let state = self.state.read().unwrap();
            let mut batch_ids = HashSet::new();
            for u in updates {
                if !(0.0..=1.0).contains(&u.confidence) {
                    return Err(StoreError::InvalidArgument(format!("confidence {} outside [0, 1]", u.confidence)));
                }
                let loc = state.index.get(&u.video_id).ok_or_else(|| StoreError::NotFound(u.video_id.clone()))?;
                if state.scored_by.get(&u.video_id) == Some(&u.model_version) || !batch_ids.insert(&u.video_id) {
                    return Err(StoreError::Conflict(format!(
                        "{} already scored by model {}",
                        u.video_id, u.model_version
                    )));
                }
                by_segment.entry(loc.segment).or_default().push((loc.line, u));
            }
            state.manifest.clone()
        };

        for (&seg_no, edits) in &by_segment {
            let seg = &manifest.segments[seg_no];
            let path = self.abs(&seg.path);
            let mut lines = read_committed_lines(&path, seg.record_count)?;
            for &(line_no, u) in edits {
                let mut rec = parse_record(&path, line_no, &lines[line_no as usize])?;
                rec.sentiment = Some(SentimentScore {
                    label: u.label,
                    confidence: u.confidence,
                    scored_at: u.scored_at,
                    model_version: u.model_version.clone(),
                });
                lines[line_no as usize] = serde_json::to_string(&rec).expect("record serializes");
            }
            let mut out = lines.join("\n");
            out.push('\n');
            self.write_atomic(&seg.path, out.as_bytes())?;
        }

        let mut state = self.state.write().unwrap();
        for u in updates {
            state.scored_by.insert(u.video_id.clone(), u.model_version.clone());
        }
        Ok(())
    }

    pub fn manifest(&self) -> SegmentManifest {
        self.state.read().unwrap().manifest.clone()
    }

    pub fn record_count(&self) -> u64 {
        self.state.read().unwrap().manifest.record_count()
    }

    pub fn contains(&self, video_id: &str) -> bool {
        self.state.read().unwrap().index.contains_key(video_id)
    }

    /// Records matching `filter` in (date partition, insertion) order, as of
    /// the moment of the call: later appends are not observed.
    pub fn scan(&self, filter: ScanFilter) -> Result<Scan> {
        if let (Some(from), Some(to)) = (filter.date_from, filter.date_to) {
            if from > to {
                return Err(StoreError::InvalidArgument(format!("date_from {from} is after date_to {to}")));
            }
        }
        let segments: Vec<_> = self
            .state
            .read()
            .unwrap()
            .manifest
            .scan_order()
            .into_iter()
            .filter(|s| s.record_count > 0 && filter.admits_date(s.date_partition))
            .map(|s| (self.abs(&s.path), s.record_count))
            .collect();
        Ok(Scan { filter, segments: segments.into_iter(), current: Vec::new().into_iter(), failed: false })
    }

    /// Convenience: collect a scan, failing on the first corrupt segment.
    pub fn scan_all(&self, filter: ScanFilter) -> Result<Vec<StoredRecord>> {
        self.scan(filter)?.collect()
    }
}

/// Snapshot iterator over the store. Segment files are read lazily, one at
/// a time.
pub struct Scan {
    filter: ScanFilter,
    segments: std::vec::IntoIter<(PathBuf, u64)>,
    current: std::vec::IntoIter<StoredRecord>,
    failed: bool,
}

impl Scan {
    fn load_segment(&self, path: &Path, count: u64) -> Result<Vec<StoredRecord>> {
        let mut out = Vec::new();
        for (i, line) in read_committed_lines(path, count)?.iter().enumerate() {
            let rec = parse_record(path, i as u64, line)?;
            if self.filter.admits(&rec) {
                out.push(rec);
            }
        }
        Ok(out)
    }
}

impl Iterator for Scan {
    type Item = Result<StoredRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            if let Some(rec) = self.current.next() {
                return Some(Ok(rec));
            }
            let (path, count) = self.segments.next()?;
            match self.load_segment(&path, count) {
                Ok(recs) => self.current = recs.into_iter(),
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}
