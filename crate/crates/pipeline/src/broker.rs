//! In-process topic/partition message bus with consumer groups.
//!
//! Delivery is at-least-once: a consumer's read position only becomes durable
//! for its group through [`ConsumerHandle::commit`], and a fresh handle for
//! the group resumes from the committed offsets. Partitions are spread over
//! the live members of a group whenever membership changes (a handle joins
//! or leaves); there is no heartbeat-driven rebalancing.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, RwLock};
use std::time::{Duration, Instant};

use bytes::Bytes;
use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BrokerError {
    #[error("topic {0:?} already exists")]
    AlreadyExists(String),
    #[error("topic {0:?} not found")]
    NotFound(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("consumer handle is closed")]
    InvalidHandle,
}

pub type Result<T, E = BrokerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicMessage {
    pub topic: Arc<str>,
    pub partition: u32,
    /// Position within the partition, contiguous from 0.
    pub offset: u64,
    pub key: Option<Bytes>,
    pub payload: Bytes,
    pub enqueued_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BrokerOptions {
    /// Keep at most this many messages per partition; older ones are dropped.
    pub retention: Option<usize>,
}

#[derive(Default)]
struct PartitionLog {
    base: u64,
    messages: VecDeque<TopicMessage>,
}

impl PartitionLog {
    fn head(&self) -> u64 {
        self.base + self.messages.len() as u64
    }

    fn get(&self, offset: u64) -> Option<&TopicMessage> {
        offset.checked_sub(self.base).and_then(|i| self.messages.get(i as usize))
    }
}

#[derive(Default)]
struct Group {
    committed: BTreeMap<u32, u64>,
    members: BTreeSet<u64>,
    generation: u64,
}

impl Group {
    fn assignment(&self, member: u64, partitions: u32) -> Vec<u32> {
        let Some(rank) = self.members.iter().position(|&m| m == member) else {
            return Vec::new();
        };
        let n = self.members.len() as u32;
        (0..partitions).filter(|p| p % n == rank as u32).collect()
    }
}

struct TopicState {
    partitions: Vec<PartitionLog>,
    groups: HashMap<String, Group>,
    next_member: u64,
}

struct Topic {
    name: Arc<str>,
    state: Mutex<TopicState>,
    arrivals: Condvar,
    round_robin: AtomicU64,
    retention: Option<usize>,
}

impl Topic {
    fn lock(&self) -> MutexGuard<'_, TopicState> {
        self.state.lock().unwrap()
    }
}

/// Handle to the bus; clones share the same topics.
#[derive(Clone)]
pub struct Broker {
    topics: Arc<RwLock<HashMap<String, Arc<Topic>>>>,
    clock: Arc<dyn Clock>,
    options: BrokerOptions,
}

impl Default for Broker {
    fn default() -> Self {
        Self::new()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

impl Broker {
    pub fn new() -> Self {
        Self::with_options(Arc::new(SystemClock), BrokerOptions::default())
    }

    pub fn with_options(clock: Arc<dyn Clock>, options: BrokerOptions) -> Self {
        Broker { topics: Arc::default(), clock, options }
    }

    fn topic(&self, name: &str) -> Result<Arc<Topic>> {
        self.topics.read().unwrap().get(name).cloned().ok_or_else(|| BrokerError::NotFound(name.to_string()))
    }

    pub fn create_topic(&self, name: &str, partitions: u32) -> Result<()> {
        if name.is_empty() {
            return Err(BrokerError::InvalidArgument("topic name must not be empty".into()));
        }
        if partitions == 0 {
            return Err(BrokerError::InvalidArgument("a topic needs at least one partition".into()));
        }
        let mut topics = self.topics.write().unwrap();
        if topics.contains_key(name) {
            return Err(BrokerError::AlreadyExists(name.to_string()));
        }
        let topic = Topic {
            name: Arc::from(name),
            state: Mutex::new(TopicState {
                partitions: (0..partitions).map(|_| PartitionLog::default()).collect(),
                groups: HashMap::new(),
                next_member: 0,
            }),
            arrivals: Condvar::new(),
            round_robin: AtomicU64::new(0),
            retention: self.options.retention,
        };
        topics.insert(name.to_string(), Arc::new(topic));
        Ok(())
    }

    /// Create the topic unless it already exists.
    pub fn ensure_topic(&self, name: &str, partitions: u32) -> Result<()> {
        match self.create_topic(name, partitions) {
            Err(BrokerError::AlreadyExists(_)) => Ok(()),
            other => other,
        }
    }

    pub fn partition_count(&self, topic: &str) -> Result<u32> {
        Ok(self.topic(topic)?.lock().partitions.len() as u32)
    }

    /// Partition a key maps to: FNV-1a of the key bytes modulo the partition count.
    pub fn partition_for_key(key: &[u8], partitions: u32) -> u32 {
        (fnv1a(key) % u64::from(partitions)) as u32
    }

    /// Append a message. Keyed messages go to `hash(key) mod partitions`,
    /// keyless ones round-robin. Returns `(partition, offset)`.
    pub fn publish(&self, topic: &str, key: Option<&[u8]>, payload: impl Into<Bytes>) -> Result<(u32, u64)> {
        let topic = self.topic(topic)?;
        let enqueued_at = self.clock.now();
        let mut state = topic.lock();
        let n = state.partitions.len() as u32;
        let partition = match key {
            Some(k) => Self::partition_for_key(k, n),
            None => (topic.round_robin.fetch_add(1, Ordering::Relaxed) % u64::from(n)) as u32,
        };
        let log = &mut state.partitions[partition as usize];
        let offset = log.head();
        log.messages.push_back(TopicMessage {
            topic: topic.name.clone(),
            partition,
            offset,
            key: key.map(Bytes::copy_from_slice),
            payload: payload.into(),
            enqueued_at,
        });
        if let Some(cap) = topic.retention {
            while log.messages.len() > cap {
                log.messages.pop_front();
                log.base += 1;
            }
        }
        drop(state);
        topic.arrivals.notify_all();
        Ok((partition, offset))
    }

    /// Next offset to be written, per partition.
    pub fn head_offsets(&self, topic: &str) -> Result<Vec<u64>> {
        Ok(self.topic(topic)?.lock().partitions.iter().map(PartitionLog::head).collect())
    }

    pub fn committed(&self, topic: &str, group_id: &str) -> Result<BTreeMap<u32, u64>> {
        let topic = self.topic(topic)?;
        let state = topic.lock();
        Ok(state.groups.get(group_id).map(|g| g.committed.clone()).unwrap_or_default())
    }

    /// Join `group_id` on `topic`. The handle starts at the group's committed
    /// offsets (0 for a fresh group).
    pub fn subscribe(&self, topic: &str, group_id: &str) -> Result<ConsumerHandle> {
        if group_id.is_empty() {
            return Err(BrokerError::InvalidArgument("group id must not be empty".into()));
        }
        let topic = self.topic(topic)?;
        let member = {
            let mut state = topic.lock();
            let member = state.next_member;
            state.next_member += 1;
            let group = state.groups.entry(group_id.to_string()).or_default();
            group.members.insert(member);
            group.generation += 1;
            member
        };
        Ok(ConsumerHandle {
            topic,
            group_id: group_id.to_string(),
            member,
            generation: 0,
            positions: BTreeMap::new(),
            cursor: 0,
            closed: false,
        })
    }
}

/// A group member's view of a topic.
pub struct ConsumerHandle {
    topic: Arc<Topic>,
    group_id: String,
    member: u64,
    generation: u64,
    positions: BTreeMap<u32, u64>,
    cursor: usize,
    closed: bool,
}

impl ConsumerHandle {
    pub fn group_id(&self) -> &str {
        &self.group_id
    }

    fn sync(&mut self, state: &TopicState) {
        let group = &state.groups[&self.group_id];
        if group.generation == self.generation {
            return;
        }
        self.generation = group.generation;
        let assigned = group.assignment(self.member, state.partitions.len() as u32);
        let mut positions = BTreeMap::new();
        for p in assigned {
            let start = self.positions.get(&p).or_else(|| group.committed.get(&p)).copied().unwrap_or(0);
            positions.insert(p, start);
        }
        self.positions = positions;
    }

    /// Move every owned partition back to the group's committed offset, as
    /// if the handle had been dropped and re-subscribed.
    pub fn rewind(&mut self) -> Result<()> {
        self.ensure_open()?;
        let topic = self.topic.clone();
        let state = topic.lock();
        self.sync(&state);
        let committed = &state.groups[&self.group_id].committed;
        for (p, pos) in self.positions.iter_mut() {
            *pos = committed.get(p).copied().unwrap_or(0);
        }
        Ok(())
    }

    /// Partitions currently owned by this handle.
    pub fn assignment(&mut self) -> Result<Vec<u32>> {
        self.ensure_open()?;
        let topic = self.topic.clone();
        let state = topic.lock();
        self.sync(&state);
        Ok(self.positions.keys().copied().collect())
    }

    /// Next offset this handle will read, per assigned partition.
    pub fn positions(&self) -> &BTreeMap<u32, u64> {
        &self.positions
    }

    fn ensure_open(&self) -> Result<()> {
        if self.closed {
            Err(BrokerError::InvalidHandle)
        } else {
            Ok(())
        }
    }

    /// Up to `max_messages`, in offset order within each partition. Waits up
    /// to `timeout` for data and returns an empty batch if none arrives.
    /// Does not touch committed offsets.
    pub fn poll(&mut self, max_messages: usize, timeout: Duration) -> Result<Vec<TopicMessage>> {
        self.ensure_open()?;
        let deadline = Instant::now() + timeout;
        let topic = self.topic.clone();
        let mut state = topic.lock();
        let mut batch = Vec::new();
        loop {
            self.sync(&state);
            let owned: Vec<u32> = self.positions.keys().copied().collect();
            for k in 0..owned.len() {
                if batch.len() >= max_messages {
                    break;
                }
                let p = owned[(self.cursor + k) % owned.len()];
                let log = &state.partitions[p as usize];
                let pos = self.positions.get_mut(&p).expect("owned partition");
                *pos = (*pos).max(log.base);
                while batch.len() < max_messages {
                    match log.get(*pos) {
                        Some(m) => {
                            batch.push(m.clone());
                            *pos += 1;
                        }
                        None => break,
                    }
                }
            }
            if !owned.is_empty() {
                self.cursor = (self.cursor + 1) % owned.len();
            }
            let now = Instant::now();
            if !batch.is_empty() || max_messages == 0 || now >= deadline {
                return Ok(batch);
            }
            state = topic.arrivals.wait_timeout(state, deadline - now).unwrap().0;
        }
    }

    /// Record `offsets` (next offset to read, per partition) as the group's
    /// committed position.
    pub fn commit(&mut self, offsets: &BTreeMap<u32, u64>) -> Result<()> {
        self.ensure_open()?;
        let topic = self.topic.clone();
        let mut state = topic.lock();
        for (&p, &offset) in offsets {
            let log = state
                .partitions
                .get(p as usize)
                .ok_or_else(|| BrokerError::InvalidArgument(format!("partition {p} does not exist")))?;
            if offset > log.head() {
                return Err(BrokerError::InvalidArgument(format!(
                    "offset {offset} is beyond head {} of partition {p}",
                    log.head()
                )));
            }
        }
        let group = state.groups.get_mut(&self.group_id).expect("member's group exists");
        group.committed.extend(offsets.iter().map(|(&p, &o)| (p, o)));
        Ok(())
    }

    /// Commit everything this handle has polled so far.
    pub fn commit_positions(&mut self) -> Result<()> {
        let positions = self.positions.clone();
        self.commit(&positions)
    }

    /// Leave the group. Further calls fail with [`BrokerError::InvalidHandle`].
    pub fn close(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        let mut state = self.topic.lock();
        if let Some(group) = state.groups.get_mut(&self.group_id) {
            group.members.remove(&self.member);
            group.generation += 1;
        }
    }
}

impl Drop for ConsumerHandle {
    fn drop(&mut self) {
        self.close();
    }
}
