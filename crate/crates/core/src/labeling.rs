//! Ground-truth labelling rule, synthetic dataset generation and the
//! dataset CSV format.
//!
//! CSV layout (header required):
//!
//! ```text
//! condition,temperature,ph,tds
//! Good,24.98,7.81,1350
//! ```

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Condition, Thresholds, PH_RANGE, TEMP_RANGE};

pub const CSV_HEADER: [&str; 4] = ["condition", "temperature", "ph", "tds"];

/// Feature ranges of the synthetic generator, in hundredths.
const GEN_TEMP_CENTI: (i64, i64) = (2000, 3500);
const GEN_PH_CENTI: (i64, i64) = (500, 1100);
const GEN_TDS_CENTI: (i64, i64) = (90_000, 200_000);

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line_no}: {reason}")]
    Parse { line_no: u64, reason: String },
}

/// Labels a reading Good iff all three features lie inside their bands,
/// bounds inclusive.
pub fn label_sample(temp_c: f64, ph: f64, tds_mg_l: f64, bands: &Thresholds) -> Condition {
    let inside = |v: f64, lo: f64, hi: f64| v >= lo && v <= hi;
    if inside(temp_c, bands.temp_lo, bands.temp_hi)
        && inside(ph, bands.ph_lo, bands.ph_hi)
        && inside(tds_mg_l, bands.turb_lo, bands.turb_hi)
    {
        Condition::Good
    } else {
        Condition::Bad
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub temp_c: f64,
    pub ph: f64,
    pub tds_mg_l: f64,
    pub condition: Condition,
}

impl LabeledSample {
    pub fn features(&self) -> [f64; 3] {
        [self.temp_c, self.ph, self.tds_mg_l]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Fixture,
    Synthetic { seed: u64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<LabeledSample>,
    pub provenance: Provenance,
}

const TABLE1: [(Condition, f64, f64, f64); 10] = [
    (Condition::Good, 24.98, 7.81, 1350.0),
    (Condition::Good, 25.59, 7.81, 1760.0),
    (Condition::Good, 26.03, 7.98, 1750.0),
    (Condition::Good, 25.95, 7.95, 1740.0),
    (Condition::Good, 26.31, 7.66, 1740.0),
    (Condition::Bad, 23.00, 9.90, 1850.0),
    (Condition::Bad, 31.00, 7.00, 1400.0),
    (Condition::Bad, 23.00, 9.00, 1600.0),
    (Condition::Bad, 33.00, 5.70, 1050.0),
    (Condition::Bad, 27.90, 7.16, 1100.0),
];

impl Dataset {
    /// The ten published training rows (five Good, five Bad).
    pub fn table1() -> Dataset {
        let rows = TABLE1
            .iter()
            .map(|&(condition, temp_c, ph, tds_mg_l)| LabeledSample { temp_c, ph, tds_mg_l, condition })
            .collect();
        Dataset { rows, provenance: Provenance::Fixture }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Splits into the first `round(frac * n)` rows and the rest.
    pub fn split(&self, frac: f64) -> (Dataset, Dataset) {
        let cut = ((self.rows.len() as f64) * frac.clamp(0.0, 1.0)).round() as usize;
        let (a, b) = self.rows.split_at(cut);
        (
            Dataset { rows: a.to_vec(), provenance: self.provenance.clone() },
            Dataset { rows: b.to_vec(), provenance: self.provenance.clone() },
        )
    }

    pub fn count(&self, condition: Condition) -> usize {
        self.rows.iter().filter(|r| r.condition == condition).count()
    }
}

/// Draws `n` rows uniformly over temperature 20–35 °C, pH 5–11 and TDS
/// 900–2000 mg/L at 0.01 resolution, labels them with the default
/// labelling bands and flips each label independently with probability
/// `label_noise_p`.
///
/// Features depend only on `(n, seed)`, so datasets that differ only in
/// `label_noise_p` share identical feature columns.
pub fn generate_dataset(n: usize, seed: u64, label_noise_p: f64) -> Result<Dataset, DatasetError> {
    if n == 0 {
        return Err(DatasetError::InvalidParam("n must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&label_noise_p) {
        return Err(DatasetError::InvalidParam(format!(
            "label noise probability {label_noise_p} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (i64, i64)| rng.random_range(lo..=hi) as f64 / 100.0;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let temp_c = draw(&mut rng, GEN_TEMP_CENTI);
        let ph = draw(&mut rng, GEN_PH_CENTI);
        let tds_mg_l = draw(&mut rng, GEN_TDS_CENTI);
        // Always consume the flip draw so the feature stream is independent of p.
        let flip = rng.random::<f64>() < label_noise_p;
        let clean = label_sample(temp_c, ph, tds_mg_l, &Thresholds::LABELING);
        let condition = match (clean, flip) {
            (c, false) => c,
            (Condition::Good, true) => Condition::Bad,
            (Condition::Bad, true) => Condition::Good,
        };
        rows.push(LabeledSample { temp_c, ph, tds_mg_l, condition });
    }
    Ok(Dataset { rows, provenance: Provenance::Synthetic { seed } })
}

pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &dataset.rows {
        w.write_record([
            r.condition.as_str().to_string(),
            r.temp_c.to_string(),
            r.ph.to_string(),
            r.tds_mg_l.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R, provenance: Provenance) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut records = reader.records();
    let parse_err = |line_no: u64, reason: String| DatasetError::Parse { line_no, reason };

    let header = match records.next() {
        None => return Err(parse_err(1, "missing header".into())),
        Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
    };
    if header.iter().ne(CSV_HEADER) {
        return Err(parse_err(1, format!("expected header {}", CSV_HEADER.join(","))));
    }

    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string())
        })?;
        let line_no = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != CSV_HEADER.len() {
            return Err(parse_err(line_no, format!("expected 4 fields, got {}", record.len())));
        }
        let condition: Condition = record[0].parse().map_err(|e| parse_err(line_no, e))?;
        let num = |i: usize| -> Result<f64, DatasetError> {
            let v: f64 = record[i]
                .parse()
                .map_err(|_| parse_err(line_no, format!("{}: not a number: {:?}", CSV_HEADER[i], &record[i])))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("{}: not finite", CSV_HEADER[i])));
            }
            Ok(v)
        };
        let (temp_c, ph, tds_mg_l) = (num(1)?, num(2)?, num(3)?);
        if temp_c < TEMP_RANGE.0 || temp_c > TEMP_RANGE.1 {
            return Err(parse_err(line_no, format!("temperature {temp_c} outside sensor range")));
        }
        if ph < PH_RANGE.0 || ph > PH_RANGE.1 {
            return Err(parse_err(line_no, format!("ph {ph} outside [0, 14]")));
        }
        if tds_mg_l < 0.0 {
            return Err(parse_err(line_no, format!("tds {tds_mg_l} negative")));
        }
        rows.push(LabeledSample { temp_c, ph, tds_mg_l, condition });
    }
    Ok(Dataset { rows, provenance })
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    read_csv(file, Provenance::File(path.to_path_buf()))
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    write_csv(dataset, file).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(source),
        other => DatasetError::InvalidParam(format!("{other:?}")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const L: Thresholds = Thresholds::LABELING;

    #[test]
    fn table1_rows_reproduced() {
        let d = Dataset::table1();
        for r in &d.rows {
            assert_eq!(label_sample(r.temp_c, r.ph, r.tds_mg_l, &L), r.condition, "{r:?}");
        }
        assert_eq!(d.count(Condition::Good), 5);
        assert_eq!(d.count(Condition::Bad), 5);
    }

    #[test]
    fn named_examples() {
        assert_eq!(label_sample(24.98, 7.81, 1350.0, &L), Condition::Good);
        assert_eq!(label_sample(31.0, 7.0, 1400.0, &L), Condition::Bad);
        assert_eq!(label_sample(27.90, 7.16, 1100.0, &L), Condition::Bad);
        assert_eq!(label_sample(24.0, 6.0, 1200.0, &L), Condition::Good);
        assert_eq!(label_sample(30.0, 9.0, 1800.0, &L), Condition::Good);
    }

    #[test]
    fn generate_rejects_bad_params() {
        assert!(matches!(generate_dataset(0, 1, 0.0), Err(DatasetError::InvalidParam(_))));
        assert!(matches!(generate_dataset(5, 1, 1.5), Err(DatasetError::InvalidParam(_))));
        assert!(matches!(generate_dataset(5, 1, -0.1), Err(DatasetError::InvalidParam(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(10, 42, 0.0).unwrap();
        let b = generate_dataset(10, 42, 0.0).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        write_csv(&a, &mut ba).unwrap();
        write_csv(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_ne!(a.rows, generate_dataset(10, 43, 0.0).unwrap().rows);
    }

    #[test]
    fn zero_noise_labels_follow_rule() {
        let d = generate_dataset(4000, 1, 0.0).unwrap();
        for r in &d.rows {
            assert_eq!(label_sample(r.temp_c, r.ph, r.tds_mg_l, &L), r.condition);
            assert!((20.0..=35.0).contains(&r.temp_c));
            assert!((5.0..=11.0).contains(&r.ph));
            assert!((900.0..=2000.0).contains(&r.tds_mg_l));
        }
        // Band volume fraction: (6/15) * (3/6) * (600/1100) ~= 0.109.
        let good = d.count(Condition::Good) as f64 / 4000.0;
        assert!((good - 0.109).abs() < 0.02, "good fraction {good}");
    }

    #[test]
    fn noise_flip_rate_matches_p() {
        let clean = generate_dataset(4000, 1, 0.0).unwrap();
        let noisy = generate_dataset(4000, 1, 0.21).unwrap();
        let mut flips = 0;
        for (c, n) in clean.rows.iter().zip(&noisy.rows) {
            assert_eq!(c.features(), n.features());
            flips += usize::from(c.condition != n.condition);
        }
        let rate = flips as f64 / 4000.0;
        assert!((rate - 0.21).abs() <= 0.02, "flip rate {rate}");
    }

    #[test]
    fn empty_input_is_parse_error() {
        let err = read_csv(&b""[..], Provenance::Fixture).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line_no: 1, .. }), "{err}");
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "condition,temperature,ph,tds\nGood,25,7,1500\nMeh,25,7,1500\n";
        match read_csv(text.as_bytes(), Provenance::Fixture).unwrap_err() {
            DatasetError::Parse { line_no, reason } => {
                assert_eq!(line_no, 3);
                assert!(reason.contains("Meh"));
            }
            e => panic!("unexpected {e}"),
        }
        let text = "condition,temperature,ph,tds\nGood,25,x,1500\n";
        assert!(matches!(
            read_csv(text.as_bytes(), Provenance::Fixture),
            Err(DatasetError::Parse { line_no: 2, .. })
        ));
        let text = "cond,temp\nGood,25\n";
        assert!(read_csv(text.as_bytes(), Provenance::Fixture).is_err());
    }

    #[test]
    fn csv_uses_table_precision() {
        let mut buf = Vec::new();
        write_csv(&Dataset::table1(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("condition,temperature,ph,tds"));
        assert_eq!(lines.next(), Some("Good,24.98,7.81,1350"));
    }

    fn farther(v: f64, lo: f64, hi: f64, step: f64) -> f64 {
        if v < lo {
            v - step
        } else if v > hi {
            v + step
        } else {
            v
        }
    }

    proptest! {
        #[test]
        fn moving_farther_outside_never_turns_bad_into_good(
            t in 15.0f64..40.0, p in 3.0f64..12.0, s in 800.0f64..2200.0, step in 0.0f64..10.0,
        ) {
            if label_sample(t, p, s, &L) == Condition::Bad {
                let t2 = farther(t, L.temp_lo, L.temp_hi, step);
                let p2 = farther(p, L.ph_lo, L.ph_hi, step);
                let s2 = farther(s, L.turb_lo, L.turb_hi, step * 10.0);
                prop_assert_eq!(label_sample(t2, p2, s2, &L), Condition::Bad);
            }
        }

        #[test]
        fn csv_round_trip(n in 1usize..200, seed in any::<u64>(), p in 0.0f64..=1.0) {
            let d = generate_dataset(n, seed, p).unwrap();
            let mut buf = Vec::new();
            write_csv(&d, &mut buf).unwrap();
            let back = read_csv(buf.as_slice(), Provenance::Fixture).unwrap();
            prop_assert_eq!(back.rows, d.rows);
        }
    }
}
