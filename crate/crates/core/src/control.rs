//! Actuator rules, operator-override arbitration and the control tick.
//!
//! When the classifier reports Good every actuator is switched off. When it
//! reports Bad, five independent rule groups are evaluated against the
//! control thresholds with strict comparisons and OR-combined per actuator:
//!
//! | rule            | guard                         | actuators on               |
//! |-----------------|-------------------------------|----------------------------|
//! | `temp_high`     | temp > temp_hi                | oxygen pump, cooling fan   |
//! | `temp_low`      | temp < temp_lo                | heater                     |
//! | `ph_high`       | ph > ph_hi                    | oxygen pump, acid doser    |
//! | `ph_low`        | ph < ph_lo                    | water filter, base doser   |
//! | `turbidity_out` | tds > turb_hi or tds < turb_lo| water filter               |

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::dtree::{predict, TreeNode};
use crate::model::{ActuatorId, ActuatorMode, ActuatorState, Condition, Thresholds, TimestampMs, WaterSample};
use crate::store::{StoreError, TelemetryStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    TempHigh,
    TempLow,
    PhHigh,
    PhLow,
    TurbidityOut,
    AllOff,
}

impl Rule {
    pub fn actuators(self) -> &'static [ActuatorId] {
        use ActuatorId::*;
        match self {
            Rule::TempHigh => &[OxygenPump, CoolingFan],
            Rule::TempLow => &[Heater],
            Rule::PhHigh => &[OxygenPump, AcidDoser],
            Rule::PhLow => &[WaterFilter, BaseDoser],
            Rule::TurbidityOut => &[WaterFilter],
            Rule::AllOff => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlDecision {
    /// Desired on/off for every actuator.
    pub commands: BTreeMap<ActuatorId, bool>,
    pub fired_rules: Vec<Rule>,
}

impl ControlDecision {
    fn from_rules(fired_rules: Vec<Rule>) -> Self {
        let mut commands: BTreeMap<ActuatorId, bool> = ActuatorId::ALL.into_iter().map(|id| (id, false)).collect();
        for rule in &fired_rules {
            for id in rule.actuators() {
                commands.insert(*id, true);
            }
        }
        ControlDecision { commands, fired_rules }
    }

    pub fn command(&self, id: ActuatorId) -> bool {
        self.commands.get(&id).copied().unwrap_or(false)
    }

    pub fn all_off() -> Self {
        ControlDecision::from_rules(vec![Rule::AllOff])
    }
}

/// Maps a predicted condition and the current reading to actuator commands.
pub fn decide(condition: Condition, sample: &WaterSample, bands: &Thresholds) -> ControlDecision {
    if condition == Condition::Good {
        return ControlDecision::all_off();
    }
    let (t, ph, tds) = (sample.temp_c, sample.ph, sample.tds_mg_l);
    let mut fired = Vec::new();
    if t > bands.temp_hi {
        fired.push(Rule::TempHigh);
    }
    if t < bands.temp_lo {
        fired.push(Rule::TempLow);
    }
    if ph > bands.ph_hi {
        fired.push(Rule::PhHigh);
    }
    if ph < bands.ph_lo {
        fired.push(Rule::PhLow);
    }
    if tds > bands.turb_hi || tds < bands.turb_lo {
        fired.push(Rule::TurbidityOut);
    }
    ControlDecision::from_rules(fired)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArbitrationError {
    #[error("no state for actuator {0}")]
    MissingActuator(ActuatorId),
    #[error("actuator {0} listed more than once")]
    DuplicateActuator(ActuatorId),
}

fn check_coverage(states: &[ActuatorState]) -> Result<(), ArbitrationError> {
    let mut seen = [false; ActuatorId::ALL.len()];
    for s in states {
        if std::mem::replace(&mut seen[s.id.index()], true) {
            return Err(ArbitrationError::DuplicateActuator(s.id));
        }
    }
    match ActuatorId::ALL.into_iter().find(|id| !seen[id.index()]) {
        Some(id) => Err(ArbitrationError::MissingActuator(id)),
        None => Ok(()),
    }
}

/// Resolves automatic commands against operator overrides. Output is in
/// canonical actuator order; `last_changed` moves to `now` only when the
/// effective value flips.
pub fn arbitrate(
    decision: &ControlDecision,
    states: &[ActuatorState],
    now: TimestampMs,
) -> Result<Vec<ActuatorState>, ArbitrationError> {
    check_coverage(states)?;
    let mut out: Vec<ActuatorState> = states.to_vec();
    out.sort_by_key(|s| s.id);
    for s in &mut out {
        let effective = match s.mode {
            ActuatorMode::Auto => decision.command(s.id),
            ActuatorMode::ForcedOn => true,
            ActuatorMode::ForcedOff => false,
        };
        if effective != s.effective {
            s.effective = effective;
            s.last_changed = now;
        }
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum TickError {
    #[error("no telemetry available")]
    NoData,
    #[error(transparent)]
    Arbitration(#[from] ArbitrationError),
    #[error(transparent)]
    Store(StoreError),
}

/// Result of one control iteration, also the audit-log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickReport {
    pub seq: u64,
    pub ts: TimestampMs,
    pub sample: WaterSample,
    pub condition: Condition,
    pub value: f64,
    pub fired_rules: Vec<Rule>,
    pub commands: BTreeMap<ActuatorId, bool>,
    pub states: Vec<ActuatorState>,
    pub elapsed_ms: f64,
}

#[derive(Serialize)]
struct AuditFeatures {
    temp_c: f64,
    ph: f64,
    tds_mg_l: f64,
}

#[derive(Serialize)]
struct AuditLine<'a> {
    ts: TimestampMs,
    seq: u64,
    features: AuditFeatures,
    condition: Condition,
    value: f64,
    fired_rules: &'a [Rule],
    effective: BTreeMap<ActuatorId, bool>,
    elapsed_ms: f64,
}

impl TickReport {
    pub fn elapsed(&self) -> Duration {
        Duration::from_secs_f64(self.elapsed_ms / 1000.0)
    }

    pub fn effective(&self, id: ActuatorId) -> bool {
        self.states.iter().any(|s| s.id == id && s.effective)
    }

    /// One-line JSON audit record: timestamp, features, condition, fired
    /// rules, effective states and elapsed time.
    pub fn audit_line(&self) -> String {
        let line = AuditLine {
            ts: self.ts,
            seq: self.seq,
            features: AuditFeatures { temp_c: self.sample.temp_c, ph: self.sample.ph, tds_mg_l: self.sample.tds_mg_l },
            condition: self.condition,
            value: self.value,
            fired_rules: &self.fired_rules,
            effective: self.states.iter().map(|s| (s.id, s.effective)).collect(),
            elapsed_ms: self.elapsed_ms,
        };
        serde_json::to_string(&line).expect("audit line serialisation is infallible")
    }
}

/// Reads the latest sample, classifies it, decides and arbitrates.
///
/// The caller compares `elapsed_ms` against its tick budget.
pub fn control_tick(
    store: &TelemetryStore,
    tree: &TreeNode,
    states: &[ActuatorState],
    config: &Config,
) -> Result<TickReport, TickError> {
    let started = Instant::now();
    let record = store.latest().map_err(|e| match e {
        StoreError::NoData => TickError::NoData,
        other => TickError::Store(other),
    })?;
    let sample = record.sample;
    let prediction = predict(tree, sample.temp_c, sample.ph, sample.tds_mg_l);
    let decision = decide(prediction.condition, &sample, &config.control_thresholds);
    let applied = arbitrate(&decision, states, sample.ts)?;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
    Ok(TickReport {
        seq: record.seq,
        ts: sample.ts,
        sample,
        condition: prediction.condition,
        value: prediction.value,
        fired_rules: decision.fired_rules,
        commands: decision.commands,
        states: applied,
        elapsed_ms,
    })
}

/// Owns actuator state between ticks. Ticks and operator overrides both go
/// through `&mut self`, so holding the controller behind one lock gives the
/// single-writer ordering.
#[derive(Debug, Clone)]
pub struct Controller {
    tree: TreeNode,
    config: Config,
    states: Vec<ActuatorState>,
    last_decision: Option<ControlDecision>,
}

impl Controller {
    pub fn new(tree: TreeNode, config: Config, now: TimestampMs) -> Self {
        Controller { tree, config, states: ActuatorState::all_auto(now), last_decision: None }
    }

    pub fn tree(&self) -> &TreeNode {
        &self.tree
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn states(&self) -> &[ActuatorState] {
        &self.states
    }

    pub fn state(&self, id: ActuatorId) -> &ActuatorState {
        &self.states[id.index()]
    }

    pub fn tick_budget(&self) -> Duration {
        Duration::from_millis(self.config.tick_ms)
    }

    /// Runs one tick and commits the arbitrated states. On `NoData` nothing
    /// changes.
    pub fn tick(&mut self, store: &TelemetryStore) -> Result<TickReport, TickError> {
        let report = control_tick(store, &self.tree, &self.states, &self.config)?;
        self.states = report.states.clone();
        self.last_decision =
            Some(ControlDecision { commands: report.commands.clone(), fired_rules: report.fired_rules.clone() });
        Ok(report)
    }

    /// Applies an operator override immediately. Forced modes pin the
    /// effective value; `Auto` falls back to the last automatic command.
    pub fn set_mode(&mut self, id: ActuatorId, mode: ActuatorMode, now: TimestampMs) -> ActuatorState {
        let auto_cmd = self.last_decision.as_ref().map(|d| d.command(id));
        let state = &mut self.states[id.index()];
        state.mode = mode;
        let effective = match mode {
            ActuatorMode::ForcedOn => true,
            ActuatorMode::ForcedOff => false,
            ActuatorMode::Auto => auto_cmd.unwrap_or(state.effective),
        };
        if effective != state.effective {
            state.effective = effective;
            state.last_changed = now;
        }
        state.clone()
    }
}
