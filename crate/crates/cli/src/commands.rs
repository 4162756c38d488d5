use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::NaiveDate;
use pulsestream_core::eval;
use pulsestream_core::model::{save_params, split_indices, train as train_model, ModelConfig, TrainConfig};
use pulsestream_core::synth::{generate, CorpusSpec};
use pulsestream_core::textprep::{build_vocabulary, clean_text, CleanConfig};
use pulsestream_core::{Sentiment, SentimentModel};
use pulsestream_pipeline::broker::{Broker, ConsumerHandle};
use pulsestream_pipeline::clock::{Clock, StopSignal, SystemClock};
use pulsestream_pipeline::ingest::{
    run_schedule, CrawlStats, Crawler, FixtureTransport, LiveTransport, QuotaBudget, Transport,
};
use pulsestream_pipeline::store::Store;
use pulsestream_pipeline::stream::{drain, DrainStats, STORE_GROUP};
use pulsestream_pipeline::VIDEO_TOPIC;
use pulsestream_serve::{score_pending, spawn_scoring_worker, AppState, ScoreOptions};
use serde::Serialize;

use crate::config::{ModelPaths, PipelineConfig, TrainSettings};
use crate::dataset::{read_dataset, write_dataset};
use crate::{CliError, CrawlArgs, EvaluateArgs, ScoreArgs, ServeArgs, SimulateArgs, TrainArgs};

const QUOTA_FILE: &str = "quota.json";
const DRAIN_BATCH: usize = 500;

fn print_json<T: Serialize>(value: &T) {
    let mut out = std::io::stdout().lock();
    let _ = serde_json::to_writer_pretty(&mut out, value);
    let _ = writeln!(out);
    let _ = out.flush();
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn make_transport(fixture: Option<&Path>) -> Result<Arc<dyn Transport>, CliError> {
    match fixture {
        Some(dir) => Ok(Arc::new(FixtureTransport::new(dir).map_err(config_err)?)),
        None => Ok(Arc::new(LiveTransport::from_env().map_err(|e| {
            CliError::Config(format!("{e}; set it or pass --fixture <dir>"))
        })?)),
    }
}

fn build_crawler(cfg: &PipelineConfig, store_root: &Path, transport: Arc<dyn Transport>) -> Result<Crawler, CliError> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let quota = QuotaBudget::load_or_new(&store_root.join(QUOTA_FILE), cfg.quota_daily_limit, clock.clone())
        .map_err(|e| CliError::Data(format!("unreadable quota state: {e}")))?;
    let broker = Broker::new();
    broker.create_topic(VIDEO_TOPIC, cfg.broker_partitions).map_err(config_err)?;
    let mut crawler = Crawler::new(transport, Arc::new(quota), broker, clock);
    crawler.max_pages = cfg.max_pages;
    Ok(crawler)
}

#[derive(Debug, Serialize)]
struct QuotaReport {
    daily_limit: u32,
    used_today: u32,
    day: NaiveDate,
    used_this_tick: u32,
}

#[derive(Debug, Serialize)]
struct TickReport<'a> {
    crawl: &'a [CrawlStats],
    drain: DrainStats,
    quota: QuotaReport,
    store_records: u64,
}

/// Drain what the tick published into the store and persist the quota.
fn finish_tick<'a>(
    stats: &'a [CrawlStats],
    consumer: &mut ConsumerHandle,
    store: &Store,
    crawler: &Crawler,
) -> Result<TickReport<'a>, CliError> {
    let drained = drain(consumer, store, DRAIN_BATCH).map_err(|e| match e {
        pulsestream_pipeline::stream::StreamError::Store(e) => e.into(),
        other => config_err(other),
    })?;
    if let Err(e) = crawler.quota.save(&store.root().join(QUOTA_FILE)) {
        log::warn!("quota state not saved: {e}");
    }
    let snap = crawler.quota.snapshot();
    Ok(TickReport {
        crawl: stats,
        drain: drained,
        quota: QuotaReport {
            daily_limit: snap.daily_limit,
            used_today: snap.used_today,
            day: snap.day,
            used_this_tick: stats.iter().map(|s| s.requests).sum(),
        },
        store_records: store.record_count(),
    })
}

/// Stop `stop` on Ctrl-C.
fn stop_on_ctrl_c(stop: StopSignal) {
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().expect("signal runtime");
        if rt.block_on(tokio::signal::ctrl_c()).is_ok() {
            stop.stop();
        }
    });
}

fn crawl_loop(
    cfg: &PipelineConfig,
    crawler: &Crawler,
    store: &Store,
    stop: &StopSignal,
    mut emit: impl FnMut(&TickReport<'_>),
) -> Result<(), CliError> {
    let mut consumer = crawler.broker.subscribe(VIDEO_TOPIC, STORE_GROUP).map_err(config_err)?;
    let mut failure = None;
    let interval = Duration::from_secs(cfg.crawl_interval_secs);
    run_schedule(&cfg.figures, interval, crawler, stop, None, |stats| {
        match finish_tick(stats, &mut consumer, store, crawler) {
            Ok(report) => emit(&report),
            Err(e) => {
                failure = Some(e);
                stop.stop();
            }
        }
    })
    .map_err(config_err)?;
    failure.map_or(Ok(()), Err)
}

pub fn crawl(args: CrawlArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(&args.config)?;
    let root = args.store.unwrap_or_else(|| cfg.store_root.clone());
    let transport = make_transport(args.fixture.as_deref())?;
    let store = Store::open(&root)?;
    let crawler = build_crawler(&cfg, &root, transport)?;
    if args.once {
        let mut consumer = crawler.broker.subscribe(VIDEO_TOPIC, STORE_GROUP).map_err(config_err)?;
        let stats = crawler.crawl_all(&cfg.figures, None);
        print_json(&finish_tick(&stats, &mut consumer, &store, &crawler)?);
        return Ok(());
    }
    let stop = StopSignal::new();
    stop_on_ctrl_c(stop.clone());
    crawl_loop(&cfg, &crawler, &store, &stop, |report| {
        println!("{}", serde_json::to_string(report).expect("report serializes"));
    })
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    if args.samples == 0 || !(0.0..=1.0).contains(&args.noise) {
        return Err(CliError::Config("need --samples ≥ 1 and --noise within [0, 1]".into()));
    }
    let corpus = generate(&CorpusSpec { samples: args.samples, label_noise: args.noise, seed: args.seed });
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(config_err)?;
    }
    let rows = corpus.iter().map(|s| (s.text.as_str(), if args.planted { s.planted } else { s.label }));
    write_dataset(&args.out, rows)?;
    let flipped = corpus.iter().filter(|s| s.label != s.planted).count();
    print_json(&serde_json::json!({ "out": args.out, "samples": corpus.len(), "flipped": flipped }));
    Ok(())
}

fn train_configs(s: &TrainSettings, vocab_len: usize) -> (ModelConfig, TrainConfig) {
    let model = ModelConfig {
        embed_dim: s.embed_dim,
        lstm_hidden: s.lstm_hidden,
        dense_hidden: s.dense_hidden,
        ..ModelConfig::new(vocab_len, s.max_len)
    }
    .with_seed(s.seed);
    let train = TrainConfig {
        epochs: s.epochs,
        batch_size: s.batch_size,
        learning_rate: s.learning_rate,
        split_ratio: s.split_ratio,
        shuffle_seed: s.seed,
        clip_norm: s.clip_norm,
    };
    (model, train)
}

fn resolve_model_paths(
    cfg: Option<&PipelineConfig>,
    params: Option<PathBuf>,
    vocab: Option<PathBuf>,
) -> Result<ModelPaths, CliError> {
    let from_cfg = cfg.and_then(|c| c.model.clone());
    match (params.or(from_cfg.as_ref().map(|m| m.params.clone())), vocab.or(from_cfg.map(|m| m.vocab))) {
        (Some(params), Some(vocab)) => Ok(ModelPaths { params, vocab }),
        _ => Err(CliError::Config("model paths missing: give --config with a \"model\" section or both paths".into())),
    }
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = args.config.as_deref().map(PipelineConfig::load).transpose()?;
    let out = resolve_model_paths(cfg.as_ref(), args.out_params, args.out_vocab)?;
    let mut settings = cfg.as_ref().map(|c| c.train.clone()).unwrap_or_default();
    if let Some(seed) = args.seed {
        settings.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        settings.epochs = epochs;
    }
    let dataset = read_dataset(&args.dataset)?;
    if dataset.len() < 10 {
        return Err(CliError::Data(format!("dataset has {} rows; at least 10 are needed", dataset.len())));
    }
    for class in Sentiment::ALL {
        if !dataset.iter().any(|(_, l)| *l == class) {
            return Err(CliError::Data(format!("dataset has no {class} rows; both classes are needed")));
        }
    }

    // The vocabulary only sees the training split; the split is recomputed
    // identically inside training.
    let clean = CleanConfig::indonesian();
    let (train_idx, val_idx) = split_indices(dataset.len(), settings.split_ratio, settings.seed);
    let cleaned: Vec<String> = train_idx.iter().map(|&i| clean_text(&dataset[i].0, &clean)).collect();
    let vocab = build_vocabulary(&cleaned, settings.vocab_size)?;
    let (model_cfg, train_cfg) = train_configs(&settings, vocab.len());
    let (params, history) = train_model::<f64>(&dataset, &model_cfg, &train_cfg, &vocab, &clean)?;

    for path in [&out.params, &out.vocab] {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(config_err)?;
        }
    }
    save_params(&params, &out.params).map_err(config_err)?;
    vocab.save(&out.vocab, settings.max_len).map_err(config_err)?;

    let model = SentimentModel::new(params, vocab, clean)?;
    let val: Vec<(String, Sentiment)> = val_idx.iter().map(|&i| dataset[i].clone()).collect();
    let report = eval::evaluate(&model, &val)?;
    print_json(&serde_json::json!({
        "model_version": model.version(),
        "train_samples": train_idx.len(),
        "val_samples": val.len(),
        "history": history,
        "report": report,
    }));
    Ok(())
}

fn load_model(paths: &ModelPaths) -> Result<SentimentModel, CliError> {
    for p in [&paths.params, &paths.vocab] {
        if !p.is_file() {
            return Err(CliError::Config(format!("model artifact {} not found", p.display())));
        }
    }
    Ok(SentimentModel::load(&paths.params, &paths.vocab, CleanConfig::indonesian())?)
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let cfg = args.config.as_deref().map(PipelineConfig::load).transpose()?;
    let model = load_model(&resolve_model_paths(cfg.as_ref(), args.params, args.vocab)?)?;
    let dataset = read_dataset(&args.dataset)?;
    print_json(&eval::evaluate(&model, &dataset)?);
    Ok(())
}

pub fn score(args: ScoreArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(&args.config)?;
    let model = load_model(&resolve_model_paths(Some(&cfg), None, None)?)?;
    let store = Store::open(args.store.as_ref().unwrap_or(&cfg.store_root))?;
    let opts = ScoreOptions { rescore_stale: args.rescore, ..ScoreOptions::default() };
    let stats = score_pending(&store, &model, opts, &SystemClock)?;
    print_json(&stats);
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(&args.config)?;
    let root = args.store.clone().unwrap_or_else(|| cfg.store_root.clone());
    let transport = if args.with_crawler { Some(make_transport(args.fixture.as_deref())?) } else { None };
    let store = Arc::new(Store::open(&root)?);

    let model = match &cfg.model {
        Some(paths) if paths.params.is_file() && paths.vocab.is_file() => Some(load_model(paths)?),
        Some(paths) => {
            log::warn!("model {} not found; serving without scoring", paths.params.display());
            None
        }
        None => None,
    };
    let static_dir = args.static_dir.or_else(|| cfg.serve.static_dir.clone()).filter(|d| {
        let ok = d.is_dir();
        if !ok {
            log::warn!("static directory {} not found; dashboard not served", d.display());
        }
        ok
    });

    let state = AppState::new(cfg.figures.clone(), store.clone(), model);
    let stop = StopSignal::new();
    let scoring_interval = Duration::from_secs(cfg.scoring_interval_secs);
    let worker = spawn_scoring_worker(state.clone(), scoring_interval, ScoreOptions::default(), stop.clone());

    let crawl_thread = match transport {
        Some(t) => {
            let crawler = build_crawler(&cfg, &root, t)?;
            let (cfg, store, stop) = (cfg.clone(), store.clone(), stop.clone());
            Some(std::thread::spawn(move || {
                let res = crawl_loop(&cfg, &crawler, &store, &stop, |r| {
                    log::info!("crawl tick: {} records stored", r.store_records);
                });
                if let Err(e) = res {
                    log::error!("crawler stopped: {e}");
                }
            }))
        }
        None => None,
    };

    let rt = tokio::runtime::Runtime::new().map_err(config_err)?;
    let addr = args.addr.unwrap_or(cfg.serve.address);
    let served = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::Config(format!("bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(config_err)?;
        println!("{}", serde_json::json!({ "listening": local.to_string() }));
        let _ = std::io::stdout().flush();
        let shutdown_stop = stop.clone();
        let shutdown = async move {
            let _ = tokio::signal::ctrl_c().await;
            shutdown_stop.stop();
        };
        pulsestream_serve::serve(listener, state, static_dir, shutdown).await.map_err(config_err)
    });
    stop.stop();
    let _ = worker.join();
    if let Some(t) = crawl_thread {
        let _ = t.join();
    }
    served
}
