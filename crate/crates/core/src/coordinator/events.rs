//! Event log: one JSON object per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::client::{ClientId, SampleId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventOp {
    Add,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub round: u32,
    pub client_id: ClientId,
    pub op: EventOp,
    pub sample_ids: Vec<SampleId>,
    pub variant: String,
}

pub fn write_events(mut w: impl Write, events: &[EventRecord]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events(r: impl BufRead) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Io(format!("event log line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_lines_round_trip() {
        let events = vec![
            EventRecord {
                round: 1,
                client_id: 3,
                op: EventOp::Add,
                sample_ids: vec![SampleId(4), SampleId(9)],
                variant: "A".into(),
            },
            EventRecord {
                round: 2,
                client_id: 0,
                op: EventOp::Delete,
                sample_ids: vec![SampleId(4)],
                variant: "B".into(),
            },
        ];
        let mut buf = Vec::new();
        write_events(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"round":1,"client_id":3,"op":"add","sample_ids":[4,9],"variant":"A"}"#
        );
        assert_eq!(read_events(&buf[..]).unwrap(), events);
        assert!(read_events(&b"{not json}\n"[..]).is_err());
    }
}
