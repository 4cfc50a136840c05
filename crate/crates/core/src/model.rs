//! Shared domain types: sensor samples, water condition, threshold bands and
//! actuator state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds since the Unix epoch, UTC.
pub type TimestampMs = i64;

/// Longest accepted `device_id`, in bytes.
pub const MAX_DEVICE_ID_LEN: usize = 64;

/// Operating envelope of the temperature probe (°C).
pub const TEMP_RANGE: (f64, f64) = (-55.0, 125.0);
pub const PH_RANGE: (f64, f64) = (0.0, 14.0);

/// One timestamped multi-sensor reading.
///
/// Field order matches the wire and log schemas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterSample {
    pub device_id: String,
    pub ts: TimestampMs,
    pub temp_c: f64,
    pub ph: f64,
    pub tds_mg_l: f64,
    pub ec_us_cm: f64,
    pub nh3_ppm: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}={value} outside allowed range [{min}, {max}]")]
pub struct ValidationError {
    pub field: &'static str,
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

fn check(field: &'static str, value: f64, (min, max): (f64, f64)) -> Result<(), ValidationError> {
    if value.is_finite() && value >= min && value <= max {
        Ok(())
    } else {
        Err(ValidationError { field, value, min, max })
    }
}

/// Returns the sample unchanged if every field is inside its envelope,
/// otherwise reports the first offending field.
///
/// Checked in order: `device_id` (length), `temp_c`, `ph`, `tds_mg_l`,
/// `ec_us_cm`, `nh3_ppm`.
pub fn validate_sample(raw: WaterSample) -> Result<WaterSample, ValidationError> {
    let id_len = raw.device_id.len();
    if id_len == 0 || id_len > MAX_DEVICE_ID_LEN {
        return Err(ValidationError {
            field: "device_id",
            value: id_len as f64,
            min: 1.0,
            max: MAX_DEVICE_ID_LEN as f64,
        });
    }
    let non_negative = (0.0, f64::MAX);
    check("temp_c", raw.temp_c, TEMP_RANGE)?;
    check("ph", raw.ph, PH_RANGE)?;
    check("tds_mg_l", raw.tds_mg_l, non_negative)?;
    check("ec_us_cm", raw.ec_us_cm, non_negative)?;
    check("nh3_ppm", raw.nh3_ppm, non_negative)?;
    Ok(raw)
}

/// Water condition as labelled for training and predicted at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    Good,
    Bad,
}

impl Condition {
    pub fn as_f64(self) -> f64 {
        match self {
            Condition::Good => 1.0,
            Condition::Bad => 0.0,
        }
    }

    /// Decision rule for regression outputs: `value >= 0.5` is Good.
    pub fn from_value(value: f64) -> Self {
        if value >= 0.5 {
            Condition::Good
        } else {
            Condition::Bad
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Good => "Good",
            Condition::Bad => "Bad",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Good" => Ok(Condition::Good),
            "Bad" => Ok(Condition::Bad),
            other => Err(format!("unknown condition {other:?}, expected Good or Bad")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("threshold pair {name} invalid: lo={lo}, hi={hi} (need finite lo < hi)")]
pub struct ThresholdError {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
}

/// Low/high bands for temperature, pH and turbidity (TDS).
///
/// Two independent instances are used: one for ground-truth labelling and
/// one for the actuator rules. Their defaults differ and neither is derived
/// from the other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub temp_lo: f64,
    pub temp_hi: f64,
    pub ph_lo: f64,
    pub ph_hi: f64,
    pub turb_lo: f64,
    pub turb_hi: f64,
}

impl Thresholds {
    /// Bands used to label training data: temperature 24–30 °C, pH 6–9,
    /// turbidity 1200–1800 mg/L.
    pub const LABELING: Thresholds = Thresholds {
        temp_lo: 24.0,
        temp_hi: 30.0,
        ph_lo: 6.0,
        ph_hi: 9.0,
        turb_lo: 1200.0,
        turb_hi: 1800.0,
    };

    /// Bands the actuator rules compare against: 24/30 °C, pH 6.5/9,
    /// turbidity 1100/1800 mg/L.
    pub const CONTROL: Thresholds = Thresholds {
        temp_lo: 24.0,
        temp_hi: 30.0,
        ph_lo: 6.5,
        ph_hi: 9.0,
        turb_lo: 1100.0,
        turb_hi: 1800.0,
    };

    pub fn validate(&self) -> Result<(), ThresholdError> {
        for (name, lo, hi) in [
            ("temp", self.temp_lo, self.temp_hi),
            ("ph", self.ph_lo, self.ph_hi),
            ("turb", self.turb_lo, self.turb_hi),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ThresholdError { name, lo, hi });
            }
        }
        Ok(())
    }
}

/// The closed set of controllable devices on the tank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuatorId {
    OxygenPump,
    CoolingFan,
    Heater,
    WaterFilter,
    /// Phosphoric acid dosing, lowers pH.
    AcidDoser,
    /// Baking soda dosing, raises pH.
    BaseDoser,
}

impl ActuatorId {
    pub const ALL: [ActuatorId; 6] = [
        ActuatorId::OxygenPump,
        ActuatorId::CoolingFan,
        ActuatorId::Heater,
        ActuatorId::WaterFilter,
        ActuatorId::AcidDoser,
        ActuatorId::BaseDoser,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActuatorId::OxygenPump => "oxygen_pump",
            ActuatorId::CoolingFan => "cooling_fan",
            ActuatorId::Heater => "heater",
            ActuatorId::WaterFilter => "water_filter",
            ActuatorId::AcidDoser => "acid_doser",
            ActuatorId::BaseDoser => "base_doser",
        }
    }
}

impl fmt::Display for ActuatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActuatorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActuatorId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| format!("unknown actuator {s:?}"))
    }
}

/// Operator override position of one actuator switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActuatorMode {
    Auto,
    ForcedOn,
    ForcedOff,
}

impl FromStr for ActuatorMode {
    type Err = String;

    /// Parses the short switch names used by the HTTP API.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(ActuatorMode::Auto),
            "on" => Ok(ActuatorMode::ForcedOn),
            "off" => Ok(ActuatorMode::ForcedOff),
            other => Err(format!("unknown mode {other:?}, expected auto, on or off")),
        }
    }
}

/// Per-actuator state after arbitration.
///
/// `ForcedOn` always has `effective == true`, `ForcedOff` always `false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorState {
    pub id: ActuatorId,
    pub mode: ActuatorMode,
    pub effective: bool,
    pub last_changed: TimestampMs,
}

impl ActuatorState {
    pub fn new(id: ActuatorId, ts: TimestampMs) -> Self {
        ActuatorState { id, mode: ActuatorMode::Auto, effective: false, last_changed: ts }
    }

    /// One `Auto`/off state per actuator, in canonical order.
    pub fn all_auto(ts: TimestampMs) -> Vec<ActuatorState> {
        ActuatorId::ALL.into_iter().map(|id| ActuatorState::new(id, ts)).collect()
    }
}
