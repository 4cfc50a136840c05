mod support;

use floc_core::{decide, ActuatorId, Condition, Thresholds, WaterSample};
use support::oracle::{grid, oracle, ACTUATOR_NAMES};

fn sample(temp_c: f64, ph: f64, tds_mg_l: f64) -> WaterSample {
    WaterSample {
        device_id: "grid".into(),
        ts: 0,
        temp_c,
        ph,
        tds_mg_l,
        ec_us_cm: tds_mg_l * 0.026,
        nh3_ppm: 0.1,
    }
}

#[test]
fn actuator_names_line_up_with_library_ids() {
    for (id, name) in ActuatorId::ALL.iter().zip(ACTUATOR_NAMES) {
        assert_eq!(id.as_str(), name);
    }
}

#[test]
fn decide_matches_oracle_on_exhaustive_grid() {
    let mut points = 0;
    for (t, ph, tds) in grid() {
        for condition in [Condition::Good, Condition::Bad] {
            let got = decide(condition, &sample(t, ph, tds), &Thresholds::CONTROL);
            let want = oracle(condition == Condition::Good, t, ph, tds);
            let got_on: Vec<bool> = ActuatorId::ALL.iter().map(|id| got.commands[id]).collect();
            assert_eq!(got_on, want.on, "{condition} t={t} ph={ph} tds={tds}");
            let got_fired: Vec<String> =
                got.fired_rules.iter().map(|r| serde_json::to_value(r).unwrap().as_str().unwrap().to_string()).collect();
            assert_eq!(got_fired, want.fired, "{condition} t={t} ph={ph} tds={tds}");
            assert_eq!(got.commands.len(), 6);
            assert!(!(got.commands[&ActuatorId::Heater] && got.commands[&ActuatorId::CoolingFan]));
            points += 1;
        }
    }
    assert_eq!(points, 31 * 25 * 23 * 2);
}

#[test]
fn fired_rules_explain_every_true_command() {
    for (t, ph, tds) in grid() {
        let d = decide(Condition::Bad, &sample(t, ph, tds), &Thresholds::CONTROL);
        for (id, on) in &d.commands {
            let explained = d.fired_rules.iter().any(|r| r.actuators().contains(id));
            assert_eq!(*on, explained, "{id:?} at t={t} ph={ph} tds={tds}");
        }
    }
}

#[test]
fn worked_examples() {
    use ActuatorId::*;
    let on = |c, t, ph, tds| {
        let d = decide(c, &sample(t, ph, tds), &Thresholds::CONTROL);
        ActuatorId::ALL.into_iter().filter(|id| d.commands[id]).collect::<Vec<_>>()
    };
    assert_eq!(on(Condition::Bad, 31.0, 7.0, 1400.0), vec![OxygenPump, CoolingFan]);
    assert_eq!(on(Condition::Good, 31.0, 10.0, 2000.0), vec![]);
    assert_eq!(on(Condition::Bad, 23.0, 6.0, 1000.0), vec![Heater, WaterFilter, BaseDoser]);
    assert_eq!(on(Condition::Bad, 30.0, 9.0, 1800.0), vec![]);
    let d = decide(Condition::Bad, &sample(30.0, 9.0, 1800.0), &Thresholds::CONTROL);
    assert!(d.fired_rules.is_empty());
}
