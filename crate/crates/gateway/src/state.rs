use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use floc_core::{
    predict, validate_sample, ActuatorId, ActuatorMode, ActuatorState, Condition, Config, Controller, StoreError,
    StoredRecord, TelemetryStore, TickError, TickReport, TimestampMs, TreeNode,
};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, watch};

use crate::ingest::{parse_frame, IngestReply, RejectReason};

/// Events fanned out to stream subscribers.
#[derive(Debug, Clone)]
pub enum StreamEvent {
    Sample(StoredRecord),
    Tick(Arc<TickReport>),
    Condition(ConditionChange),
}

impl StreamEvent {
    pub fn name(&self) -> &'static str {
        match self {
            StreamEvent::Sample(_) => "sample",
            StreamEvent::Tick(_) => "tick",
            StreamEvent::Condition(_) => "condition",
        }
    }

    pub fn data(&self) -> String {
        let v = match self {
            StreamEvent::Sample(r) => serde_json::to_string(r),
            StreamEvent::Tick(t) => serde_json::to_string(t.as_ref()),
            StreamEvent::Condition(c) => serde_json::to_string(c),
        };
        v.expect("event serialisation is infallible")
    }
}

/// Emitted when a tick's predicted condition differs from the previous
/// tick's (and on the first tick).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionChange {
    pub seq: u64,
    pub ts: TimestampMs,
    pub from: Option<Condition>,
    pub to: Condition,
    pub value: f64,
}

/// Compact view of the most recent tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSummary {
    pub seq: u64,
    pub ts: TimestampMs,
    pub condition: Condition,
    pub value: f64,
    pub fired_rules: Vec<floc_core::Rule>,
    pub elapsed_ms: f64,
}

impl From<&TickReport> for TickSummary {
    fn from(r: &TickReport) -> Self {
        TickSummary {
            seq: r.seq,
            ts: r.ts,
            condition: r.condition,
            value: r.value,
            fired_rules: r.fired_rules.clone(),
            elapsed_ms: r.elapsed_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorView {
    pub id: ActuatorId,
    pub mode: ActuatorMode,
    pub effective: bool,
    pub last_changed: TimestampMs,
}

impl From<&ActuatorState> for ActuatorView {
    fn from(s: &ActuatorState) -> Self {
        ActuatorView { id: s.id, mode: s.mode, effective: s.effective, last_changed: s.last_changed }
    }
}

/// Response of `GET /api/v1/latest`.
///
/// `condition`, `value` and `last_tick` come from the last tick. When a
/// newer sample has arrived since (or no tick has run yet) `stale` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSnapshot {
    pub sample: StoredRecord,
    pub condition: Option<Condition>,
    pub value: Option<f64>,
    pub actuators: Vec<ActuatorView>,
    pub last_tick: Option<TickSummary>,
    pub stale: bool,
}

/// Response of `GET /api/v1/condition`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionView {
    pub condition: Condition,
    pub value: f64,
    pub ts: TimestampMs,
    pub seq: u64,
}

const EVENT_CAPACITY: usize = 1024;

struct Inner {
    store: Arc<TelemetryStore>,
    tree: TreeNode,
    tick_ms: u64,
    controller: tokio::sync::Mutex<Controller>,
    /// Mirrors the controller's states for lock-free reads by HTTP handlers.
    states: RwLock<Vec<ActuatorState>>,
    last_report: RwLock<Option<Arc<TickReport>>>,
    /// Serialises append and publish so sample events leave in seq order.
    ingest_lock: Mutex<()>,
    audit: Mutex<Option<BufWriter<File>>>,
    events: broadcast::Sender<StreamEvent>,
    shutdown: watch::Sender<bool>,
}

/// Shared server state. Cheap to clone.
#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Inner>,
}

pub fn wall_clock_ms() -> TimestampMs {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as TimestampMs).unwrap_or(0)
}

impl Gateway {
    pub fn new(store: Arc<TelemetryStore>, tree: TreeNode, config: Config) -> Self {
        let now = store.latest().map(|r| r.sample.ts).unwrap_or_else(|_| wall_clock_ms());
        let controller = Controller::new(tree.clone(), config.clone(), now);
        let states = controller.states().to_vec();
        let (events, _) = broadcast::channel(EVENT_CAPACITY);
        let (shutdown, _) = watch::channel(false);
        Gateway {
            inner: Arc::new(Inner {
                store,
                tree,
                tick_ms: config.tick_ms,
                controller: tokio::sync::Mutex::new(controller),
                states: RwLock::new(states),
                last_report: RwLock::new(None),
                ingest_lock: Mutex::new(()),
                audit: Mutex::new(None),
                events,
                shutdown,
            }),
        }
    }

    /// Appends one JSON line per tick to `path`.
    pub fn with_audit_log(self, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        *self.inner.audit.lock().unwrap_or_else(|e| e.into_inner()) = Some(BufWriter::new(file));
        Ok(self)
    }

    pub fn store(&self) -> &Arc<TelemetryStore> {
        &self.inner.store
    }

    pub fn tree(&self) -> &TreeNode {
        &self.inner.tree
    }

    pub fn tick_ms(&self) -> u64 {
        self.inner.tick_ms
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamEvent> {
        self.inner.events.subscribe()
    }

    /// Handles one ingest frame: parse, validate, append, publish.
    pub fn ingest_line(&self, line: &[u8]) -> IngestReply {
        let sample = match parse_frame(line) {
            Ok(s) => s,
            Err(reject) => return reject,
        };
        let sample = match validate_sample(sample) {
            Ok(s) => s,
            Err(e) => {
                return IngestReply::Reject {
                    reason: RejectReason::Validation,
                    field: Some(e.field.to_string()),
                    detail: e.to_string(),
                }
            }
        };
        let _order = self.inner.ingest_lock.lock().unwrap_or_else(|e| e.into_inner());
        match self.inner.store.append(sample.clone()) {
            Ok(seq) => {
                let _ = self.inner.events.send(StreamEvent::Sample(StoredRecord { seq, sample }));
                IngestReply::Ack { seq }
            }
            Err(e @ StoreError::OutOfOrder { .. }) => IngestReply::reject(RejectReason::OutOfOrder, e.to_string()),
            Err(e) => {
                tracing::error!(error = %e, "append failed");
                IngestReply::reject(RejectReason::IoError, e.to_string())
            }
        }
    }

    /// Runs one control tick and publishes it. Ticks and overrides share
    /// the controller lock, so they never interleave.
    pub async fn tick(&self) -> Result<Arc<TickReport>, TickError> {
        let mut controller = self.inner.controller.lock().await;
        let report = Arc::new(controller.tick(&self.inner.store)?);
        *self.inner.states.write().unwrap_or_else(|e| e.into_inner()) = report.states.clone();
        let previous = self.inner.last_report.write().unwrap_or_else(|e| e.into_inner()).replace(report.clone());

        if let Some(w) = self.inner.audit.lock().unwrap_or_else(|e| e.into_inner()).as_mut() {
            if let Err(e) = writeln!(w, "{}", report.audit_line()).and_then(|_| w.flush()) {
                tracing::warn!(error = %e, "audit write failed");
            }
        }
        tracing::debug!(target: "floc::audit", "{}", report.audit_line());

        let _ = self.inner.events.send(StreamEvent::Tick(report.clone()));
        let from = previous.map(|p| p.condition);
        if from != Some(report.condition) {
            let _ = self.inner.events.send(StreamEvent::Condition(ConditionChange {
                seq: report.seq,
                ts: report.ts,
                from,
                to: report.condition,
                value: report.value,
            }));
        }
        drop(controller);
        Ok(report)
    }

    /// Applies an operator override. The change is visible immediately and
    /// every later tick arbitrates with it.
    ///
    /// `last_changed` is stamped on the telemetry clock (the latest sample's
    /// timestamp) so it stays comparable with tick-driven changes; the wall
    /// clock is used before any data arrives.
    pub async fn set_mode(&self, id: ActuatorId, mode: ActuatorMode) -> ActuatorState {
        let mut controller = self.inner.controller.lock().await;
        let now = self.inner.store.latest().map(|r| r.sample.ts).unwrap_or_else(|_| wall_clock_ms());
        let state = controller.set_mode(id, mode, now);
        *self.inner.states.write().unwrap_or_else(|e| e.into_inner()) = controller.states().to_vec();
        tracing::info!(actuator = id.as_str(), ?mode, effective = state.effective, "override");
        state
    }

    pub fn actuators(&self) -> Vec<ActuatorState> {
        self.inner.states.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn last_report(&self) -> Option<Arc<TickReport>> {
        self.inner.last_report.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn snapshot(&self) -> Result<ApiSnapshot, StoreError> {
        let sample = self.inner.store.latest()?;
        let last = self.last_report();
        let stale = last.as_ref().is_none_or(|r| r.seq != sample.seq);
        Ok(ApiSnapshot {
            condition: last.as_ref().map(|r| r.condition),
            value: last.as_ref().map(|r| r.value),
            last_tick: last.as_deref().map(TickSummary::from),
            actuators: self.actuators().iter().map(ActuatorView::from).collect(),
            sample,
            stale,
        })
    }

    /// Classifies the latest stored sample with the serving tree.
    pub fn condition(&self) -> Result<ConditionView, StoreError> {
        let r = self.inner.store.latest()?;
        let p = predict(&self.inner.tree, r.sample.temp_c, r.sample.ph, r.sample.tds_mg_l);
        Ok(ConditionView { condition: p.condition, value: p.value, ts: r.sample.ts, seq: r.seq })
    }

    /// Signals every server task and open stream to finish.
    pub fn shutdown(&self) {
        self.inner.shutdown.send_replace(true);
    }

    pub fn is_shutting_down(&self) -> bool {
        *self.inner.shutdown.borrow()
    }

    /// Resolves once [`Gateway::shutdown`] has been called.
    pub fn shutdown_signal(&self) -> impl std::future::Future<Output = ()> + Send + 'static {
        let mut rx = self.inner.shutdown.subscribe();
        async move {
            let _ = rx.wait_for(|stop| *stop).await;
        }
    }

    /// Flushes the audit log and syncs the telemetry log.
    pub fn flush(&self) -> Result<(), StoreError> {
        if let Some(w) = self.inner.audit.lock().unwrap_or_else(|e| e.into_inner()).as_mut() {
            let _ = w.flush();
        }
        self.inner.store.sync()
    }
}
