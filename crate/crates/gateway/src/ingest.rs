//! Newline-delimited JSON ingest: one reading per line in, one reply per
//! line out.
//!
//! ```text
//! > {"device_id":"biofloc-1","ts":1641013200000,"temp_c":25.56,"ph":8.1,"tds_mg_l":1752,"ec_us_cm":45.85,"nh3_ppm":5.95}
//! < {"status":"ack","seq":1}
//! > {"device_id":"biofloc-1","ts":1641013200001,"temp_c":25.56,"ph":15,...}
//! < {"status":"reject","reason":"validation","field":"ph","detail":"ph=15 outside allowed range [0, 14]"}
//! ```

use floc_core::{TimestampMs, WaterSample};
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufRead, AsyncBufReadExt};

/// Longest accepted frame, excluding the line terminator.
pub const MAX_LINE_BYTES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ParseError,
    Validation,
    OutOfOrder,
    LineTooLong,
    IoError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum IngestReply {
    Ack {
        seq: u64,
    },
    Reject {
        reason: RejectReason,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        field: Option<String>,
        detail: String,
    },
}

impl IngestReply {
    pub fn reject(reason: RejectReason, detail: impl Into<String>) -> Self {
        IngestReply::Reject { reason, field: None, detail: detail.into() }
    }

    pub fn is_ack(&self) -> bool {
        matches!(self, IngestReply::Ack { .. })
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("reply serialisation is infallible");
        s.push('\n');
        s
    }
}

/// Wire form of a reading. Stricter than [`WaterSample`]'s own
/// deserialiser: unknown keys are refused.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IngestFrame {
    device_id: String,
    ts: TimestampMs,
    temp_c: f64,
    ph: f64,
    tds_mg_l: f64,
    ec_us_cm: f64,
    nh3_ppm: f64,
}

/// Parses one frame. Trailing `\r` and `\n` are ignored; the result still
/// has to pass sample validation.
pub fn parse_frame(line: &[u8]) -> Result<WaterSample, IngestReply> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    if line.len() > MAX_LINE_BYTES {
        return Err(IngestReply::reject(
            RejectReason::LineTooLong,
            format!("{} bytes exceeds {MAX_LINE_BYTES}", line.len()),
        ));
    }
    let f: IngestFrame =
        serde_json::from_slice(line).map_err(|e| IngestReply::reject(RejectReason::ParseError, e.to_string()))?;
    Ok(WaterSample {
        device_id: f.device_id,
        ts: f.ts,
        temp_c: f.temp_c,
        ph: f.ph,
        tds_mg_l: f.tds_mg_l,
        ec_us_cm: f.ec_us_cm,
        nh3_ppm: f.nh3_ppm,
    })
}

#[derive(Debug, PartialEq, Eq)]
pub enum Frame {
    Line(Vec<u8>),
    /// The line overran [`MAX_LINE_BYTES`]; its bytes were discarded up to
    /// and including the terminator.
    TooLong(usize),
}

/// Reads the next frame without ever buffering more than
/// `MAX_LINE_BYTES + 2` bytes. Returns `None` at a clean end of stream; a
/// final unterminated line is still returned.
pub async fn read_frame<R: AsyncBufRead + Unpin>(reader: &mut R) -> std::io::Result<Option<Frame>> {
    let mut line = Vec::new();
    let mut overflow = 0usize;
    loop {
        let buf = reader.fill_buf().await?;
        if buf.is_empty() {
            return Ok(match (line.is_empty(), overflow) {
                (true, 0) => None,
                (_, 0) => Some(Frame::Line(line)),
                (_, n) => Some(Frame::TooLong(n)),
            });
        }
        let (chunk, done) = match buf.iter().position(|&b| b == b'\n') {
            Some(i) => (&buf[..=i], true),
            None => (buf, false),
        };
        let used = chunk.len();
        if overflow == 0 && line.len() + used <= MAX_LINE_BYTES + 2 {
            line.extend_from_slice(chunk);
        } else {
            overflow += line.len() + used;
            line.clear();
        }
        reader.consume(used);
        if done {
            let body = line.strip_suffix(b"\n").map(|l| l.strip_suffix(b"\r").unwrap_or(l)).unwrap_or(&line);
            return Ok(Some(if overflow > 0 || body.len() > MAX_LINE_BYTES {
                Frame::TooLong(overflow.max(line.len()))
            } else {
                Frame::Line(line)
            }));
        }
    }
}
