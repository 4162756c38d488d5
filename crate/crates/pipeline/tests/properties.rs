use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use pulsestream_pipeline::broker::Broker;
use pulsestream_pipeline::clock::{Clock, ManualClock, StopSignal};
use pulsestream_pipeline::ingest::{
    parse_search_response, run_schedule, Crawler, FigureConfig, HttpResponse, QuotaBudget, RequestDescriptor,
    Transport, TransportError, VideoMetadata,
};
use pulsestream_pipeline::store::{ScanFilter, Store, StoreOptions};
use pulsestream_pipeline::stream::drain_batch;
use pulsestream_pipeline::VIDEO_TOPIC;

fn video(id: &str, hour: u32) -> VideoMetadata {
    VideoMetadata {
        video_id: id.to_string(),
        channel_id: "c".into(),
        title: format!("t{id}"),
        description: format!("d{id}"),
        uri: format!("https://www.youtube.com/watch?v={id}"),
        figure_id: "anies".into(),
        keyword: "anies".into(),
        fetched_at: Utc.with_ymd_and_hms(2024, 1, 1 + hour / 24, hour % 24, 0, 0).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn publishes_are_contiguous_and_conserved(keys in prop::collection::vec(prop::option::of(any::<u16>()), 1..1000)) {
        let broker = Broker::new();
        broker.create_topic("t", 4).unwrap();
        let mut per_partition: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        let mut key_home: HashMap<u16, u32> = HashMap::new();
        for k in &keys {
            let kb = k.map(|k| k.to_le_bytes());
            let (p, off) = broker.publish("t", kb.as_ref().map(|b| &b[..]), &b"x"[..]).unwrap();
            per_partition.entry(p).or_default().push(off);
            if let Some(k) = k {
                prop_assert_eq!(*key_home.entry(*k).or_insert(p), p);
            }
        }
        for offsets in per_partition.values() {
            prop_assert!(offsets.iter().enumerate().all(|(i, &o)| o == i as u64));
        }
        prop_assert_eq!(broker.head_offsets("t").unwrap().iter().sum::<u64>(), keys.len() as u64);
    }

    /// Random poll sizes, commits and crashes (handle dropped without
    /// commit): nothing published is ever lost, and each consumer sees
    /// strictly increasing offsets per partition.
    #[test]
    fn at_least_once_under_crashes(n in 1usize..200, ops in prop::collection::vec((1usize..20, 0u8..3), 1..80)) {
        let broker = Broker::new();
        broker.create_topic("t", 3).unwrap();
        for i in 0..n {
            broker.publish("t", Some(format!("k{i}").as_bytes()), format!("{i}").into_bytes()).unwrap();
        }
        let mut seen = BTreeSet::new();
        let mut consumer = broker.subscribe("t", "g").unwrap();
        let mut last: HashMap<u32, u64> = HashMap::new();
        let drain_ops = ops.into_iter().chain(std::iter::repeat_n((50, 1), n / 50 + 2));
        for (batch, action) in drain_ops {
            for m in consumer.poll(batch, Duration::ZERO).unwrap() {
                if let Some(&prev) = last.get(&m.partition) {
                    prop_assert!(m.offset > prev);
                }
                last.insert(m.partition, m.offset);
                seen.insert((m.partition, m.offset));
            }
            match action {
                0 => {
                    drop(consumer);
                    consumer = broker.subscribe("t", "g").unwrap();
                    last.clear();
                }
                1 => consumer.commit_positions().unwrap(),
                _ => {}
            }
        }
        prop_assert_eq!(seen.len(), n);
    }

    /// Consumer crashes between append and commit, plus store restarts:
    /// the store always ends up holding exactly the set of published ids.
    #[test]
    fn exactly_once_effect(
        ids in prop::collection::vec(0u16..150, 1..300),
        schedule in prop::collection::vec((1usize..40, 0u8..4), 1..60),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let opts = StoreOptions { sync: false, max_segment_records: 25 };
        let broker = Broker::new();
        broker.create_topic(VIDEO_TOPIC, 4).unwrap();
        for (i, id) in ids.iter().enumerate() {
            let v = video(&format!("v{id}"), (i % 48) as u32);
            broker.publish(VIDEO_TOPIC, Some(v.video_id.as_bytes()), serde_json::to_vec(&v).unwrap()).unwrap();
        }
        let mut store = Store::open_with(dir.path(), opts).unwrap();
        let mut consumer = broker.subscribe(VIDEO_TOPIC, "store").unwrap();
        let tail = std::iter::repeat_n((100, 0), ids.len() / 100 + 2);
        for (batch, crash) in schedule.into_iter().chain(tail) {
            match crash {
                // Crash after the append, before the commit.
                1 => {
                    let msgs = consumer.poll(batch, Duration::ZERO).unwrap();
                    let recs: Vec<VideoMetadata> = msgs.iter().map(|m| serde_json::from_slice(&m.payload).unwrap()).collect();
                    store.append_batch(&recs).unwrap();
                    drop(consumer);
                    consumer = broker.subscribe(VIDEO_TOPIC, "store").unwrap();
                }
                // Whole process restart: store reopened too.
                2 => {
                    let _ = consumer.poll(batch, Duration::ZERO).unwrap();
                    drop(consumer);
                    drop(store);
                    store = Store::open_with(dir.path(), opts).unwrap();
                    consumer = broker.subscribe(VIDEO_TOPIC, "store").unwrap();
                }
                _ => {
                    drain_batch(&mut consumer, &store, batch, Duration::ZERO).unwrap();
                }
            }
        }
        let stored: Vec<String> = store.scan_all(ScanFilter::default()).unwrap().into_iter().map(|r| r.video.video_id).collect();
        let unique: BTreeSet<&String> = stored.iter().collect();
        prop_assert_eq!(unique.len(), stored.len());
        let expected: BTreeSet<String> = ids.iter().map(|i| format!("v{i}")).collect();
        prop_assert_eq!(unique.into_iter().cloned().collect::<BTreeSet<_>>(), expected);
    }

    #[test]
    fn reopen_preserves_scans(batches in prop::collection::vec(prop::collection::vec((0u16..60, 0u32..72), 0..20), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let opts = StoreOptions { sync: false, max_segment_records: 7 };
        let before = {
            let store = Store::open_with(dir.path(), opts).unwrap();
            for b in &batches {
                let recs: Vec<_> = b.iter().map(|&(id, h)| video(&format!("v{id}"), h)).collect();
                store.append_batch(&recs).unwrap();
            }
            store.scan_all(ScanFilter::default()).unwrap()
        };
        let store = Store::open_with(dir.path(), opts).unwrap();
        prop_assert_eq!(store.scan_all(ScanFilter::default()).unwrap(), before);
        prop_assert_eq!(store.manifest().record_count() as usize, store.scan_all(ScanFilter::default()).unwrap().len());
    }

    #[test]
    fn parse_is_total_over_bytes(body in prop::collection::vec(any::<u8>(), 0..256)) {
        let now = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        if let Ok(page) = parse_search_response(&body, "f", "k", now) {
            prop_assert!(page.items.iter().all(|v| v.figure_id == "f" && v.keyword == "k" && v.fetched_at == now));
        }
    }

    #[test]
    fn parse_stamps_every_item_identically(
        items in prop::collection::vec((prop::option::of("[a-zA-Z0-9_-]{0,11}"), prop::option::of(".{0,20}")), 0..50),
        token in prop::option::of("[A-Za-z0-9]{0,6}"),
        millis in 0i64..10_000_000,
    ) {
        let now = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::milliseconds(millis);
        let json_items: Vec<serde_json::Value> = items.iter().map(|(id, desc)| {
            let mut v = serde_json::json!({"snippet": {"channelId": "c", "title": "t"}});
            if let Some(id) = id { v["id"] = serde_json::json!({"videoId": id}); }
            if let Some(d) = desc { v["snippet"]["description"] = d.clone().into(); }
            v
        }).collect();
        let mut body = serde_json::json!({"items": json_items});
        if let Some(t) = &token { body["nextPageToken"] = t.clone().into(); }
        let page = parse_search_response(&serde_json::to_vec(&body).unwrap(), "fig", "kw", now).unwrap();
        let with_id = items.iter().filter(|(id, _)| id.as_ref().is_some_and(|s| !s.is_empty())).count();
        prop_assert_eq!(page.items.len(), with_id);
        prop_assert_eq!(page.skipped, items.len() - with_id);
        let stamp = page.items.first().map(|v| v.fetched_at);
        prop_assert!(page.items.iter().all(|v| v.figure_id == "fig" && v.keyword == "kw" && Some(v.fetched_at) == stamp));
        prop_assert_eq!(page.next_page_token, token.filter(|t| !t.is_empty()));
    }
}

/// Chain of `pages` pages with arbitrary tokens; records the tokens sent.
struct Chain {
    tokens: Vec<String>,
    sent: Mutex<Vec<Option<String>>>,
    clock: Option<(Arc<ManualClock>, Duration)>,
}

impl Transport for Chain {
    fn execute(&self, r: &RequestDescriptor) -> Result<HttpResponse, TransportError> {
        if let Some((clock, d)) = &self.clock {
            clock.advance(*d);
        }
        let sent = r.page_token().map(String::from);
        self.sent.lock().unwrap().push(sent.clone());
        let idx = match &sent {
            None => 0,
            Some(t) => self.tokens.iter().position(|x| x == t).unwrap() + 1,
        };
        let mut body = serde_json::json!({"items": [{"id": {"videoId": format!("{}-{idx}", r.keyword().unwrap())}}]});
        if let Some(t) = self.tokens.get(idx) {
            body["nextPageToken"] = t.clone().into();
        }
        Ok(HttpResponse { status: 200, body: serde_json::to_vec(&body).unwrap() })
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tokens_sent_are_tokens_received_shifted(tokens in prop::collection::btree_set("[A-Za-z0-9]{1,8}", 0..25)) {
        let tokens: Vec<String> = tokens.into_iter().collect();
        let chain = Arc::new(Chain { tokens: tokens.clone(), sent: Mutex::new(vec![]), clock: None });
        let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()));
        let quota = Arc::new(QuotaBudget::new(1000, clock.clone()));
        let crawler = Crawler::new(chain.clone(), quota, Broker::new(), clock);
        let stats = crawler.crawl_keyword("f", "k").unwrap();
        let sent = chain.sent.lock().unwrap().clone();
        let pages = (tokens.len() + 1).min(20);
        prop_assert_eq!(stats.pages as usize, pages);
        let mut expected = vec![None];
        expected.extend(tokens.iter().take(pages - 1).cloned().map(Some));
        prop_assert_eq!(sent, expected);
    }

    /// However long calls take and however ticks fall across midnight, no UTC
    /// day sees more transport calls than the daily limit.
    #[test]
    fn quota_bounds_calls_per_day(
        limit in 0u32..30,
        pages in 1usize..6,
        call_minutes in 1u64..240,
        interval_minutes in 1u64..600,
        ticks in 1u64..30,
    ) {
        let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2024, 1, 1, 20, 0, 0).unwrap()));
        let tokens = (1..pages).map(|i| format!("T{i}")).collect();
        let chain = Arc::new(Chain { tokens, sent: Mutex::new(vec![]), clock: Some((clock.clone(), Duration::ZERO)) });
        let calls: Arc<Mutex<HashMap<chrono::NaiveDate, u32>>> = Arc::default();
        struct Counting(Arc<Chain>, Arc<ManualClock>, Duration, Arc<Mutex<HashMap<chrono::NaiveDate, u32>>>);
        impl Transport for Counting {
            fn execute(&self, r: &RequestDescriptor) -> Result<HttpResponse, TransportError> {
                *self.3.lock().unwrap().entry(self.1.now().date_naive()).or_default() += 1;
                self.1.advance(self.2);
                self.0.execute(r)
            }
        }
        let transport = Arc::new(Counting(chain, clock.clone(), Duration::from_secs(call_minutes * 60), calls.clone()));
        let quota = Arc::new(QuotaBudget::new(limit, clock.clone()));
        let crawler = Crawler::new(transport, quota, Broker::new(), clock.clone());
        let figures: Vec<FigureConfig> = (0..3)
            .map(|i| FigureConfig { figure_id: format!("f{i}"), display_name: String::new(), keywords: vec![format!("k{i}"), format!("x{i}")] })
            .collect();
        run_schedule(&figures, Duration::from_secs(interval_minutes * 60), &crawler, &StopSignal::new(), Some(ticks), |_| {}).unwrap();
        for (&day, &n) in calls.lock().unwrap().iter() {
            prop_assert!(n <= limit, "{} calls on {}", n, day);
        }
    }
}
