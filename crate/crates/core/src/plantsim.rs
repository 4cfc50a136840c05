//! Desk-scale tank model used to close the control loop in tests and
//! demos.
//!
//! The dynamics are invented first-order relaxations integrated with
//! explicit Euler; the rate constants are plausible defaults, not a
//! calibrated model of any real tank.
//!
//! ```text
//! temp += dt * (k_amb*(ambient - temp) + heater_rate*[heater] - cooler_rate*[fan])
//! ph   += dt * (k_ph*(ph_base - ph) - acid_rate*[acid] + base_rate*[base])
//! tds  += dt * (tds_growth - filter_rate*(tds - tds_clean)*[filter])
//! nh3  += dt * (nh3_growth - 2*nh3_growth*[oxygen pump])
//! ec    = ec_per_tds * tds
//! ```

use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::control::{Controller, TickError, TickReport};
use crate::dtree::TreeNode;
use crate::model::{
    validate_sample, ActuatorId, ActuatorState, Condition, TimestampMs, ValidationError, WaterSample, PH_RANGE,
};
use crate::store::{StoreError, TelemetryStore};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid dt {dt}: {reason}")]
    InvalidDt { dt: f64, reason: String },
    #[error("invalid simulation parameter: {0}")]
    InvalidParams(String),
    #[error("simulated sample rejected: {0}")]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Tick(#[from] TickError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Simulated seconds since start.
    #[serde(default)]
    pub t: f64,
    pub temp_c: f64,
    pub ph: f64,
    pub tds_mg_l: f64,
    pub ec_us_cm: f64,
    pub nh3_ppm: f64,
}

impl SimState {
    pub fn to_sample(&self, device_id: &str, ts: TimestampMs) -> WaterSample {
        WaterSample {
            device_id: device_id.to_string(),
            ts,
            temp_c: self.temp_c,
            ph: self.ph,
            tds_mg_l: self.tds_mg_l,
            ec_us_cm: self.ec_us_cm,
            nh3_ppm: self.nh3_ppm,
        }
    }
}

/// Gaussian process noise added after each step, one sigma per channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSigma {
    pub temp_c: f64,
    pub ph: f64,
    pub tds_mg_l: f64,
    pub ec_us_cm: f64,
    pub nh3_ppm: f64,
}

impl NoiseSigma {
    fn is_zero(&self) -> bool {
        [self.temp_c, self.ph, self.tds_mg_l, self.ec_us_cm, self.nh3_ppm].iter().all(|&s| s == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub ambient_temp_c: f64,
    /// Thermal relaxation toward ambient, 1/s.
    pub k_amb: f64,
    /// °C/s
    pub heater_rate: f64,
    pub cooler_rate: f64,
    pub ph_base: f64,
    pub k_ph: f64,
    /// pH units per second.
    pub acid_rate: f64,
    pub base_rate: f64,
    /// mg/L per second.
    pub tds_growth: f64,
    pub filter_rate: f64,
    pub tds_clean: f64,
    /// ppm per second.
    pub nh3_growth: f64,
    /// µS/cm per mg/L.
    pub ec_per_tds: f64,
    pub noise_sigma: NoiseSigma,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            ambient_temp_c: 26.0,
            k_amb: 1e-4,
            heater_rate: 5e-3,
            cooler_rate: 5e-3,
            ph_base: 7.8,
            k_ph: 5e-5,
            acid_rate: 1e-3,
            base_rate: 1e-3,
            tds_growth: 0.01,
            filter_rate: 2e-4,
            tds_clean: 1500.0,
            nh3_growth: 1e-5,
            ec_per_tds: 0.026,
            noise_sigma: NoiseSigma::default(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let rates = [
            ("k_amb", self.k_amb),
            ("heater_rate", self.heater_rate),
            ("cooler_rate", self.cooler_rate),
            ("k_ph", self.k_ph),
            ("acid_rate", self.acid_rate),
            ("base_rate", self.base_rate),
            ("tds_growth", self.tds_growth),
            ("filter_rate", self.filter_rate),
            ("nh3_growth", self.nh3_growth),
            ("ec_per_tds", self.ec_per_tds),
            ("noise_sigma.temp_c", self.noise_sigma.temp_c),
            ("noise_sigma.ph", self.noise_sigma.ph),
            ("noise_sigma.tds_mg_l", self.noise_sigma.tds_mg_l),
            ("noise_sigma.ec_us_cm", self.noise_sigma.ec_us_cm),
            ("noise_sigma.nh3_ppm", self.noise_sigma.nh3_ppm),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidParams(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        for (name, v) in [("ambient_temp_c", self.ambient_temp_c), ("ph_base", self.ph_base), ("tds_clean", self.tds_clean)] {
            if !v.is_finite() {
                return Err(SimError::InvalidParams(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Largest stable step: every relaxation factor `k*dt` must stay below 1.
    pub fn check_dt(&self, dt: f64) -> Result<(), SimError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SimError::InvalidDt { dt, reason: "must be finite and positive".into() });
        }
        for (name, k) in [("k_amb", self.k_amb), ("k_ph", self.k_ph), ("filter_rate", self.filter_rate)] {
            if k * dt >= 1.0 {
                return Err(SimError::InvalidDt { dt, reason: format!("{name}*dt = {} >= 1", k * dt) });
            }
        }
        Ok(())
    }

    /// Analytic equilibrium of the temperature, pH and TDS channels under a
    /// fixed actuation (`None` where the channel has no equilibrium).
    pub fn equilibrium(&self, act: &Actuation) -> (Option<f64>, Option<f64>, Option<f64>) {
        let temp = (self.k_amb > 0.0).then(|| {
            self.ambient_temp_c
                + (self.heater_rate * act.flag(ActuatorId::Heater) - self.cooler_rate * act.flag(ActuatorId::CoolingFan))
                    / self.k_amb
        });
        let ph = (self.k_ph > 0.0).then(|| {
            self.ph_base
                + (self.base_rate * act.flag(ActuatorId::BaseDoser) - self.acid_rate * act.flag(ActuatorId::AcidDoser))
                    / self.k_ph
        });
        let tds = (act.get(ActuatorId::WaterFilter) && self.filter_rate > 0.0)
            .then(|| self.tds_clean + self.tds_growth / self.filter_rate);
        (temp, ph, tds)
    }
}

/// Effective on/off per actuator as seen by the plant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actuation([bool; 6]);

impl Actuation {
    pub fn off() -> Self {
        Actuation::default()
    }

    pub fn with(mut self, id: ActuatorId, on: bool) -> Self {
        self.0[id.index()] = on;
        self
    }

    pub fn from_states(states: &[ActuatorState]) -> Self {
        states.iter().fold(Actuation::off(), |a, s| a.with(s.id, s.effective))
    }

    pub fn get(&self, id: ActuatorId) -> bool {
        self.0[id.index()]
    }

    fn flag(&self, id: ActuatorId) -> f64 {
        if self.get(id) {
            1.0
        } else {
            0.0
        }
    }
}

/// One explicit-Euler step. `rng` is only consulted when a noise sigma is
/// non-zero.
pub fn step(
    state: &SimState,
    params: &SimParams,
    act: &Actuation,
    dt: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<SimState, SimError> {
    params.check_dt(dt)?;
    let p = params;
    use ActuatorId::*;

    let mut temp = state.temp_c
        + dt * (p.k_amb * (p.ambient_temp_c - state.temp_c) + p.heater_rate * act.flag(Heater)
            - p.cooler_rate * act.flag(CoolingFan));
    let mut ph = state.ph
        + dt * (p.k_ph * (p.ph_base - state.ph) - p.acid_rate * act.flag(AcidDoser) + p.base_rate * act.flag(BaseDoser));
    let mut tds =
        state.tds_mg_l + dt * (p.tds_growth - p.filter_rate * (state.tds_mg_l - p.tds_clean) * act.flag(WaterFilter));
    let mut nh3 = state.nh3_ppm + dt * (p.nh3_growth - 2.0 * p.nh3_growth * act.flag(OxygenPump));
    let mut ec_noise = 0.0;

    if let Some(rng) = rng.filter(|_| !p.noise_sigma.is_zero()) {
        let mut gauss = |sigma: f64| -> f64 {
            let z: f64 = rng.sample(StandardNormal);
            z * sigma
        };
        temp += gauss(p.noise_sigma.temp_c);
        ph += gauss(p.noise_sigma.ph);
        tds += gauss(p.noise_sigma.tds_mg_l);
        nh3 += gauss(p.noise_sigma.nh3_ppm);
        ec_noise = gauss(p.noise_sigma.ec_us_cm);
    }

    ph = ph.clamp(PH_RANGE.0, PH_RANGE.1);
    tds = tds.max(0.0);
    nh3 = nh3.max(0.0);
    let ec = (p.ec_per_tds * tds + ec_noise).max(0.0);
    if !temp.is_finite() {
        return Err(SimError::InvalidParams("temperature diverged".into()));
    }
    Ok(SimState { t: state.t + dt, temp_c: temp, ph, tds_mg_l: tds, ec_us_cm: ec, nh3_ppm: nh3 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopOptions {
    pub duration_s: f64,
    pub sample_period_s: f64,
    pub dt_s: f64,
    pub seed: u64,
    pub start_ts: TimestampMs,
    pub device_id: String,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions {
            duration_s: 86_400.0,
            sample_period_s: 60.0,
            dt_s: 1.0,
            seed: 0,
            start_ts: TABLE2_START_TS,
            device_id: "sim-tank".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTick {
    pub state: SimState,
    pub report: TickReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Plant state after every integration step, starting with the initial state.
    pub steps: Vec<SimState>,
    /// State and control report at every sampling instant.
    pub ticks: Vec<TraceTick>,
}

/// Samples the plant every `sample_period_s`, runs a control tick on the
/// sample and holds the resulting actuation until the next sample.
pub fn run_closed_loop(
    initial: SimState,
    params: &SimParams,
    tree: &TreeNode,
    config: &Config,
    opts: &LoopOptions,
) -> Result<Trace, SimError> {
    params.validate()?;
    params.check_dt(opts.dt_s)?;
    if !(opts.duration_s.is_finite() && opts.duration_s > 0.0) {
        return Err(SimError::InvalidParams("duration must be positive".into()));
    }
    if !(opts.sample_period_s.is_finite() && opts.sample_period_s >= opts.dt_s) {
        return Err(SimError::InvalidParams("sample period must be >= dt".into()));
    }
    let steps_per_tick = (opts.sample_period_s / opts.dt_s).round() as usize;
    let total_steps = (opts.duration_s / opts.dt_s).round() as usize;

    let store = TelemetryStore::in_memory();
    let mut controller = Controller::new(tree.clone(), config.clone(), opts.start_ts);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut state = initial;
    let mut act = Actuation::off();
    let mut trace = Trace { steps: Vec::with_capacity(total_steps + 1), ticks: Vec::new() };
    trace.steps.push(state);

    for k in 0..=total_steps {
        if k % steps_per_tick == 0 {
            let ts = opts.start_ts + (state.t * 1000.0).round() as TimestampMs;
            let sample = validate_sample(state.to_sample(&opts.device_id, ts))?;
            store.append(sample)?;
            let report = controller.tick(&store)?;
            act = Actuation::from_states(&report.states);
            trace.ticks.push(TraceTick { state, report });
        }
        if k == total_steps {
            break;
        }
        state = step(&state, params, &act, opts.dt_s, Some(&mut rng))?;
        trace.steps.push(state);
    }
    Ok(trace)
}

const TRACE_CSV_HEADER: [&str; 15] = [
    "t_s", "ts", "temp_c", "ph", "tds_mg_l", "ec_us_cm", "nh3_ppm", "condition", "value", "oxygen_pump",
    "cooling_fan", "heater", "water_filter", "acid_doser", "base_doser",
];

impl Trace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_CSV_HEADER)?;
        for tick in &self.ticks {
            let s = &tick.report.sample;
            let mut row = vec![
                tick.state.t.to_string(),
                s.ts.to_string(),
                s.temp_c.to_string(),
                s.ph.to_string(),
                s.tds_mg_l.to_string(),
                s.ec_us_cm.to_string(),
                s.nh3_ppm.to_string(),
                tick.report.condition.to_string(),
                tick.report.value.to_string(),
            ];
            row.extend(ActuatorId::ALL.iter().map(|id| u8::from(tick.report.effective(*id)).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One JSON object per tick: `{"state": .., "report": ..}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for tick in &self.ticks {
            serde_json::to_writer(&mut out, tick)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn conditions(&self) -> impl Iterator<Item = Condition> + '_ {
        self.ticks.iter().map(|t| t.report.condition)
    }
}

/// A closed-loop scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub initial: SimState,
    #[serde(default)]
    pub params: SimParams,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_sample_period")]
    pub sample_period_s: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    #[serde(default)]
    pub seed: u64,
    /// Tree to control with; a tree fit on clean synthetic data is used
    /// when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
}

fn default_duration() -> f64 {
    LoopOptions::default().duration_s
}
fn default_sample_period() -> f64 {
    LoopOptions::default().sample_period_s
}
fn default_dt() -> f64 {
    LoopOptions::default().dt_s
}

impl Scenario {
    pub fn loop_options(&self) -> LoopOptions {
        LoopOptions {
            duration_s: self.duration_s,
            sample_period_s: self.sample_period_s,
            dt_s: self.dt_s,
            seed: self.seed,
            ..LoopOptions::default()
        }
    }
}

/// 05:00 UTC on 2022-01-01, the anchor for the embedded day trace.
pub const TABLE2_START_TS: TimestampMs = 1_641_013_200_000;
pub const TABLE2_SPACING_MS: TimestampMs = 30 * 60 * 1000;
pub const TABLE2_DEVICE: &str = "biofloc-1";

/// Time label, temperature, pH, TDS, EC, NH3.
pub const TABLE2: [(&str, f64, f64, f64, f64, f64); 17] = [
    ("5:00 AM", 25.56, 8.1, 1752.0, 45.85, 5.95),
    ("5:30 AM", 25.59, 7.98, 1760.0, 45.65, 5.96),
    ("6:00 AM", 26.03, 7.98, 1750.0, 45.65, 5.98),
    ("6:30 AM", 25.95, 7.95, 1740.0, 45.62, 5.98),
    ("7:00 AM", 26.31, 7.66, 1740.0, 45.63, 5.65),
    ("7:30 AM", 27.45, 7.54, 1740.0, 45.64, 5.89),
    ("8:00 AM", 27.32, 7.36, 1741.0, 45.58, 5.91),
    ("8:30 AM", 27.35, 7.20, 1739.0, 45.59, 5.91),
    ("9:00 AM", 27.86, 7.19, 1734.0, 46.02, 5.97),
    ("9:30 AM", 27.90, 7.16, 1734.0, 45.99, 6.07),
    ("10:00 AM", 28.21, 7.18, 1732.0, 46.00, 6.09),
    ("10:30 AM", 28.25, 7.17, 1730.0, 46.10, 6.08),
    ("11:00 AM", 28.43, 7.16, 1728.0, 46.11, 6.11),
    ("11:30 AM", 29.06, 7.16, 1735.0, 46.15, 6.13),
    ("12:00 PM", 29.12, 7.16, 1729.0, 46.16, 6.11),
    ("12:30 PM", 29.45, 7.17, 1728.0, 46.17, 6.13),
    ("1:00 PM", 29.33, 7.14, 1726.0, 46.22, 6.26),
];

/// The recorded day trace as samples, 30 minutes apart.
pub fn replay_table2() -> Vec<WaterSample> {
    TABLE2
        .iter()
        .enumerate()
        .map(|(i, &(_, temp_c, ph, tds_mg_l, ec_us_cm, nh3_ppm))| WaterSample {
            device_id: TABLE2_DEVICE.to_string(),
            ts: TABLE2_START_TS + i as TimestampMs * TABLE2_SPACING_MS,
            temp_c,
            ph,
            tds_mg_l,
            ec_us_cm,
            nh3_ppm,
        })
        .collect()
}

/// Writes the day trace with its original time labels.
pub fn write_table2_csv<W: Write>(out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "ts", "device_id", "temp_c", "ph", "tds_mg_l", "ec_us_cm", "nh3_ppm"])?;
    for (row, s) in TABLE2.iter().zip(replay_table2()) {
        w.write_record([
            row.0.to_string(),
            s.ts.to_string(),
            s.device_id,
            s.temp_c.to_string(),
            s.ph.to_string(),
            s.tds_mg_l.to_string(),
            s.ec_us_cm.to_string(),
            s.nh3_ppm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
