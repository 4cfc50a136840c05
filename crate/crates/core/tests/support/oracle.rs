//! Table-driven transcription of the control procedure, kept separate from
//! the library so the two can be checked against each other.
#![allow(dead_code)]

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Temp,
    Ph,
    Tds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Above,
    Below,
}

/// Output order: oxygen pump, cooling fan, heater, water filter, acid doser, base doser.
pub const ACTUATOR_NAMES: [&str; 6] = ["oxygen_pump", "cooling_fan", "heater", "water_filter", "acid_doser", "base_doser"];

pub struct Line {
    pub name: &'static str,
    /// Any of these tests firing triggers the line.
    pub tests: &'static [(Var, Cmp, f64)],
    pub turn_on: &'static [&'static str],
}

pub const LINES: [Line; 5] = [
    Line { name: "temp_high", tests: &[(Var::Temp, Cmp::Above, 30.0)], turn_on: &["oxygen_pump", "cooling_fan"] },
    Line { name: "temp_low", tests: &[(Var::Temp, Cmp::Below, 24.0)], turn_on: &["heater"] },
    Line { name: "ph_high", tests: &[(Var::Ph, Cmp::Above, 9.0)], turn_on: &["oxygen_pump", "acid_doser"] },
    Line { name: "ph_low", tests: &[(Var::Ph, Cmp::Below, 6.5)], turn_on: &["water_filter", "base_doser"] },
    Line {
        name: "turbidity_out",
        tests: &[(Var::Tds, Cmp::Above, 1800.0), (Var::Tds, Cmp::Below, 1100.0)],
        turn_on: &["water_filter"],
    },
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleOut {
    pub on: [bool; 6],
    pub fired: Vec<&'static str>,
}

pub fn oracle(good: bool, temp: f64, ph: f64, tds: f64) -> OracleOut {
    if good {
        return OracleOut { on: [false; 6], fired: vec!["all_off"] };
    }
    let mut on = [false; 6];
    let mut fired = Vec::new();
    for line in &LINES {
        let hit = line.tests.iter().any(|&(var, cmp, bound)| {
            let v = match var {
                Var::Temp => temp,
                Var::Ph => ph,
                Var::Tds => tds,
            };
            match cmp {
                Cmp::Above => v > bound,
                Cmp::Below => v < bound,
            }
        });
        if hit {
            fired.push(line.name);
            for name in line.turn_on {
                let i = ACTUATOR_NAMES.iter().position(|n| n == name).unwrap();
                on[i] = true;
            }
        }
    }
    OracleOut { on, fired }
}

/// The exhaustive grid: temperature 20..35 step 0.5, pH 5..11 step 0.25,
/// TDS 900..2000 step 50.
pub fn grid() -> impl Iterator<Item = (f64, f64, f64)> {
    (0..=30).flat_map(|i| {
        (0..=24).flat_map(move |j| (0..=22).map(move |k| (20.0 + 0.5 * i as f64, 5.0 + 0.25 * j as f64, 900.0 + 50.0 * k as f64)))
    })
}
