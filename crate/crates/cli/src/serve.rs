//! Live session host. A single simulation thread owns the session and the
//! model client; HTTP handlers talk to it through a command channel and read
//! immutable snapshots it publishes after every tick.

use crate::commands::log_header;
use crate::config::{resolve_scenario, RunConfig};
use crate::llm::make_client;
use crate::log::{EpisodeLogWriter, LogLine, TickLog, WireGrid};
use crate::CliError;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::stream::{self, Stream};
use sentinel_core::reasoning::{AlertMode, CorpusStore, EpisodeOutcome, Mission, SafetyAlert, Severity};
use sentinel_core::runner::{EpisodeSummary, Session};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::convert::Infallible;
use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::sync::mpsc as std_mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};
use tokio::sync::{broadcast, oneshot, watch};

/// Alerts kept in the state snapshot.
pub const ALERTS_TAIL: usize = 5;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub run: RunConfig,
    /// Wall-clock pacing between ticks.
    pub tick_interval: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub episode_id: String,
    pub scenario_id: String,
    /// Last tick simulated; `None` before the first.
    pub tick: Option<u64>,
    pub time_s: f64,
    pub risk: Option<f64>,
    pub mission: Option<Mission>,
    pub threshold: f64,
    pub alerts_tail: Vec<SafetyAlert>,
    pub pending_queries: usize,
    pub done: bool,
    pub outcome: Option<EpisodeOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevSnapshot {
    pub tick: u64,
    /// How to read `grid.cells_b64`.
    pub encoding: String,
    pub grid: WireGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionOutput {
    pub alert_id: String,
    pub tick: u64,
    pub mode: AlertMode,
    pub severity: Severity,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// False while the episode is still running; corpus deltas are empty until then.
    pub finished: bool,
    pub summary: EpisodeSummary,
    pub missions: BTreeMap<Mission, Vec<MissionOutput>>,
    pub corpus_before: usize,
    pub corpus_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum StreamEvent {
    Frame { tick: u64, risk: f64, mission: Mission, mode: Option<AlertMode>, threshold: f64 },
    Alert { alert: SafetyAlert },
    End { outcome: EpisodeOutcome },
}

impl StreamEvent {
    fn name(&self) -> &'static str {
        match self {
            StreamEvent::Frame { .. } => "frame",
            StreamEvent::Alert { .. } => "alert",
            StreamEvent::End { .. } => "end",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    /// First tick the change applies to.
    pub effective_tick: u64,
    pub value: Option<f64>,
}

enum Command {
    Threshold(f64, oneshot::Sender<Result<Ack, String>>),
    Query(String, oneshot::Sender<Result<Ack, String>>),
    Report(oneshot::Sender<Report>),
}

#[derive(Clone)]
struct AppState {
    commands: std_mpsc::Sender<Command>,
    state: watch::Receiver<Arc<StateSnapshot>>,
    bev: watch::Receiver<Option<Arc<BevSnapshot>>>,
    events: broadcast::Sender<StreamEvent>,
}

pub struct Server {
    pub addr: SocketAddr,
    pub task: tokio::task::JoinHandle<std::io::Result<()>>,
}

/// Binds, starts the simulation thread and serves until the task is dropped.
pub async fn start(opts: ServeOptions, port: u16) -> Result<Server, CliError> {
    opts.run.validate()?;
    let resolved = resolve_scenario(&opts.run.scenario)?;
    let run_opts = opts.run.options();
    run_opts.validate()?;
    let session = Session::new(resolved.scenario.clone(), run_opts.clone())?;
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
        .await
        .map_err(|source| CliError::Bind { port, source })?;
    let addr = listener.local_addr().map_err(|source| CliError::Bind { port, source })?;

    let (cmd_tx, cmd_rx) = std_mpsc::channel();
    let (state_tx, state_rx) = watch::channel(Arc::new(snapshot(&session, None, None)));
    let (bev_tx, bev_rx) = watch::channel(None);
    let (events, _) = broadcast::channel(256);
    let sim = SimLoop {
        session,
        store: CorpusStore::in_memory(),
        state: state_tx,
        bev: bev_tx,
        events: events.clone(),
        interval: opts.tick_interval,
        last_risk: None,
        error: None,
        report: None,
    };
    let cfg = opts.run.clone();
    let digest = resolved.digest;
    std::thread::Builder::new()
        .name("sentinel-sim".into())
        .spawn(move || sim.run(cfg, digest, cmd_rx))
        .map_err(|source| CliError::Bind { port, source })?;

    let app = router(AppState { commands: cmd_tx, state: state_rx, bev: bev_rx, events });
    let task = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok(Server { addr, task })
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/state", get(get_state))
        .route("/v1/bev", get(get_bev))
        .route("/v1/stream", get(get_stream))
        .route("/v1/query", post(post_query))
        .route("/v1/threshold", post(post_threshold))
        .route("/v1/report", get(get_report))
        .with_state(state)
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

async fn get_state(State(app): State<AppState>) -> Json<StateSnapshot> {
    let snap = app.state.borrow().clone();
    Json((*snap).clone())
}

async fn get_bev(State(app): State<AppState>) -> Response {
    let bev = app.bev.borrow().clone();
    match bev {
        Some(b) => Json((*b).clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, "no fused grid yet"),
    }
}

async fn get_stream(State(app): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = app.events.subscribe();
    let events = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    let data = serde_json::to_string(&ev).expect("event serializes");
                    return Some((Ok(Event::default().event(ev.name()).data(data)), rx));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}

#[derive(Deserialize)]
struct QueryBody {
    text: String,
}

#[derive(Deserialize)]
struct ThresholdBody {
    value: f64,
}

async fn ask<T>(app: &AppState, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, Response> {
    let (tx, rx) = oneshot::channel();
    app.commands
        .send(make(tx))
        .map_err(|_| error(StatusCode::SERVICE_UNAVAILABLE, "simulation stopped"))?;
    rx.await.map_err(|_| error(StatusCode::SERVICE_UNAVAILABLE, "simulation stopped"))
}

async fn post_query(State(app): State<AppState>, Json(body): Json<QueryBody>) -> Response {
    if body.text.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "query text is empty");
    }
    match ask(&app, |tx| Command::Query(body.text, tx)).await {
        Ok(Ok(ack)) => (StatusCode::ACCEPTED, Json(ack)).into_response(),
        Ok(Err(msg)) => error(StatusCode::CONFLICT, msg),
        Err(resp) => resp,
    }
}

async fn post_threshold(State(app): State<AppState>, Json(body): Json<ThresholdBody>) -> Response {
    if !(0.0..=1.0).contains(&body.value) {
        return error(StatusCode::BAD_REQUEST, format!("threshold {} outside [0, 1]", body.value));
    }
    match ask(&app, |tx| Command::Threshold(body.value, tx)).await {
        Ok(Ok(ack)) => Json(ack).into_response(),
        Ok(Err(msg)) => error(StatusCode::BAD_REQUEST, msg),
        Err(resp) => resp,
    }
}

async fn get_report(State(app): State<AppState>) -> Response {
    match ask(&app, Command::Report).await {
        Ok(r) => Json(r).into_response(),
        Err(resp) => resp,
    }
}

fn snapshot(session: &Session, risk: Option<f64>, error: Option<String>) -> StateSnapshot {
    let reasoning = session.reasoning();
    let alerts = reasoning.alerts();
    let frame = reasoning.frames().last();
    let started = !reasoning.frames().is_empty() || session.world().tick > 0 || session.is_done();
    StateSnapshot {
        episode_id: session.episode_id().to_string(),
        scenario_id: session.scenario.id.clone(),
        tick: started.then(|| if session.is_done() { session.world().tick } else { session.world().tick.saturating_sub(1) }),
        time_s: session.world().time_s,
        risk,
        mission: frame.map(|f| f.mission),
        threshold: reasoning.threshold(),
        alerts_tail: alerts[alerts.len().saturating_sub(ALERTS_TAIL)..].to_vec(),
        pending_queries: reasoning.pending_queries(),
        done: session.is_done(),
        outcome: session.is_done().then(|| session.outcome()),
        error,
    }
}

struct SimLoop {
    session: Session,
    store: CorpusStore,
    state: watch::Sender<Arc<StateSnapshot>>,
    bev: watch::Sender<Option<Arc<BevSnapshot>>>,
    events: broadcast::Sender<StreamEvent>,
    interval: Duration,
    last_risk: Option<f64>,
    error: Option<String>,
    report: Option<Report>,
}

impl SimLoop {
    fn publish(&self) {
        let snap = snapshot(&self.session, self.last_risk, self.error.clone());
        self.state.send_replace(Arc::new(snap));
    }

    /// The tick a command received now will first apply to.
    fn next_tick(&self) -> u64 {
        self.session.world().tick + u64::from(self.session.is_done())
    }

    fn report(&self) -> Report {
        if let Some(r) = &self.report {
            return r.clone();
        }
        build_report(self.session.summary(Vec::new()), false, self.store.len(), self.store.len())
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Threshold(v, tx) => {
                let r = self.session.reasoning_mut().set_threshold(v).map_err(|e| e.to_string());
                // publish first so a caller reading state after the ack sees the change
                self.publish();
                let _ = tx.send(r.map(|_| Ack { effective_tick: self.next_tick(), value: Some(v) }));
            }
            Command::Query(text, tx) => {
                let r = if self.session.is_done() {
                    Err("episode finished".to_string())
                } else {
                    self.session.reasoning_mut().submit_query(&text).map_err(|e| e.to_string())
                };
                self.publish();
                let _ = tx.send(r.map(|_| Ack { effective_tick: self.next_tick(), value: None }));
            }
            Command::Report(tx) => {
                let _ = tx.send(self.report());
            }
        }
    }

    fn run(mut self, cfg: RunConfig, digest: String, commands: std_mpsc::Receiver<Command>) {
        let client = match make_client(&cfg.llm) {
            Ok(c) => c,
            Err(e) => {
                self.error = Some(e.to_string());
                self.publish();
                while let Ok(cmd) = commands.recv() {
                    self.handle(cmd);
                }
                return;
            }
        };
        let header = log_header(&cfg, &self.session.scenario, &digest, &self.session.options, &client.name());
        let log_path = cfg.out.join(format!("{}.serve.ndjson", header.episode_id));
        let mut log = std::fs::create_dir_all(&cfg.out)
            .and_then(|_| File::create(&log_path))
            .map(|f| EpisodeLogWriter::new(BufWriter::new(f)))
            .ok();
        if let Some(w) = &mut log {
            if w.write(&LogLine::Header(Box::new(header))).is_err() {
                log = None;
            }
        }

        let mut deadline = Instant::now();
        loop {
            // serve commands until the next tick is due, and at least once
            // per tick even when running behind
            loop {
                loop {
                    match commands.try_recv() {
                        Ok(cmd) => self.handle(cmd),
                        Err(std_mpsc::TryRecvError::Empty) => break,
                        Err(std_mpsc::TryRecvError::Disconnected) => return,
                    }
                }
                let wait = if self.session.is_done() {
                    Duration::from_secs(3600)
                } else {
                    deadline.saturating_duration_since(Instant::now())
                };
                if !self.session.is_done() && wait.is_zero() {
                    break;
                }
                match commands.recv_timeout(wait) {
                    Ok(cmd) => self.handle(cmd),
                    Err(std_mpsc::RecvTimeoutError::Timeout) => {}
                    Err(std_mpsc::RecvTimeoutError::Disconnected) => return,
                }
            }
            deadline = (deadline + self.interval).max(Instant::now());

            let record = match self.session.step(client.as_ref(), &self.store) {
                Ok(Some(r)) => r,
                Ok(None) => continue,
                Err(e) => {
                    self.error = Some(e.to_string());
                    self.publish();
                    return;
                }
            };
            if let Some(w) = &mut log {
                if w.write(&LogLine::Tick(Box::new(TickLog::from_record(&record)))).is_err() {
                    log = None;
                }
            }
            if let Some(p) = &record.product {
                let grid = WireGrid::from_grid(&p.fused_grid);
                self.bev.send_replace(Some(Arc::new(BevSnapshot {
                    tick: p.tick,
                    encoding: "u8 row-major, p = byte / 255".into(),
                    grid,
                })));
            }
            if let Some(f) = &record.frame {
                self.last_risk = Some(f.risk.value);
                let _ = self.events.send(StreamEvent::Frame {
                    tick: f.tick,
                    risk: f.risk.value,
                    mission: f.mission,
                    mode: f.mode,
                    threshold: self.session.reasoning().threshold(),
                });
                if let Some(a) = &f.alert {
                    let _ = self.events.send(StreamEvent::Alert { alert: a.clone() });
                }
            }
            if self.session.is_done() {
                let before = self.store.len();
                match self.session.finish(&mut self.store) {
                    Ok(summary) => {
                        if let Some(mut w) = log.take() {
                            let _ = w.write(&LogLine::Summary(Box::new(summary.clone())));
                            let _ = w.finish();
                        }
                        let _ = self.events.send(StreamEvent::End { outcome: summary.outcome });
                        self.report = Some(build_report(summary, true, before, self.store.len()));
                    }
                    Err(e) => self.error = Some(e.to_string()),
                }
            }
            self.publish();
        }
    }
}

fn build_report(summary: EpisodeSummary, finished: bool, corpus_before: usize, corpus_after: usize) -> Report {
    let mut missions: BTreeMap<Mission, Vec<MissionOutput>> = BTreeMap::new();
    for a in &summary.alerts {
        missions.entry(a.mission).or_default().push(MissionOutput {
            alert_id: a.alert_id.clone(),
            tick: a.tick,
            mode: a.mode,
            severity: a.severity,
            text: a.text.clone(),
        });
    }
    Report { finished, summary, missions, corpus_before, corpus_after }
}
