use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub t_start: f64,
    pub t_end: f64,
    pub species: String,
    pub confidence: f64,
    /// The chunk was quieter than the low-energy threshold.
    pub low_energy: bool,
}

/// Joins consecutive events of one species that overlap or touch. The
/// merged event spans its members and keeps their highest confidence; it
/// is low-energy only if every member was.
pub fn merge_events(events: &[DetectionEvent]) -> Result<Vec<DetectionEvent>> {
    for (i, w) in events.windows(2).enumerate() {
        if w[1].t_start < w[0].t_start {
            return Err(Error::Ordering(format!(
                "event {} starts at {} s, before event {} at {} s",
                i + 1,
                w[1].t_start,
                i,
                w[0].t_start
            )));
        }
    }
    let mut out: Vec<DetectionEvent> = Vec::new();
    for e in events {
        match out.last_mut() {
            Some(last) if last.species == e.species && e.t_start <= last.t_end => {
                last.t_end = last.t_end.max(e.t_end);
                last.confidence = last.confidence.max(e.confidence);
                last.low_energy &= e.low_energy;
            }
            _ => out.push(e.clone()),
        }
    }
    Ok(out)
}

/// One JSON object per line.
pub fn write_events_jsonl<W: Write>(mut out: W, events: &[DetectionEvent]) -> Result<()> {
    for e in events {
        let line = serde_json::to_string(e).expect("event serializes");
        writeln!(out, "{line}").map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(())
}

/// Human-readable timeline, one line per event.
pub fn timeline(events: &[DetectionEvent]) -> String {
    let mut s = String::new();
    for e in events {
        s += &format!(
            "{:>8.2} - {:>8.2} s  {:<24} {:.3}{}\n",
            e.t_start,
            e.t_end,
            e.species,
            e.confidence,
            if e.low_energy { "  (low energy)" } else { "" }
        );
    }
    s
}
