//! Packet traces: CSV `timestamp_s,size_bytes` records, discretized into
//! cumulative byte counts on a time grid.
//!
//! A packet with timestamp `ts` falls into slot `k = floor(ts / slot_width)`
//! and is counted in `c(k + 1), c(k + 2), ...`. A timestamp on a slot boundary
//! belongs to the later slot; quotients within a relative 1e-9 of an integer
//! are snapped to it so that decimal timestamps such as 0.010 at width 0.001
//! land on the intended boundary.

use std::io::{Read, Write};
use std::path::Path;

use crate::bivariate::{CumulativePath, TimeGrid};
use crate::error::{Error, Result};
use crate::formats::{parse_error, read_file};

const HEADER: [&str; 2] = ["timestamp_s", "size_bytes"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceRole {
    Arrival,
    Departure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub timestamp: f64,
    pub size: u64,
}

/// Records sorted by timestamp; equal timestamps keep their input order.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketTrace {
    pub role: TraceRole,
    records: Vec<PacketRecord>,
}

impl PacketTrace {
    pub fn new(role: TraceRole, mut records: Vec<PacketRecord>) -> Result<Self> {
        for r in &records {
            if !(r.timestamp >= 0.0 && r.timestamp.is_finite()) {
                return Err(Error::param("timestamp", format!("must be finite and non-negative, got {}", r.timestamp)));
            }
            if r.size == 0 {
                return Err(Error::param("size", "packet sizes must be positive"));
            }
        }
        records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        Ok(Self { role, records })
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.records.iter().map(|r| r.size).sum()
    }
}

/// Reads a trace. An empty input is an empty trace; otherwise the header is mandatory.
pub fn read_trace<R: Read>(mut r: R, role: TraceRole) -> Result<PacketTrace> {
    let mut text = String::new();
    r.read_to_string(&mut text)
        .map_err(|e| parse_error(0, format!("unreadable trace: {e}")))?;
    if text.trim().is_empty() {
        return PacketTrace::new(role, Vec::new());
    }
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let header = lines.by_ref().find(|(_, l)| !l.is_empty());
    if let Some((line, h)) = header {
        if h.split(',').map(str::trim).ne(HEADER) {
            return Err(parse_error(line, format!("expected header `{}`, found `{h}`", HEADER.join(","))));
        }
    }
    let mut records = Vec::new();
    for (line, l) in lines.filter(|(_, l)| !l.is_empty()) {
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        let [ts, size] = fields[..] else {
            return Err(parse_error(line, format!("expected 2 fields, found {}", fields.len())));
        };
        let timestamp: f64 = ts
            .parse()
            .map_err(|_| parse_error(line, format!("invalid timestamp `{ts}`")))?;
        let size: u64 = size
            .parse()
            .map_err(|_| parse_error(line, format!("invalid packet size `{size}`")))?;
        if !(timestamp >= 0.0 && timestamp.is_finite()) {
            return Err(parse_error(line, format!("timestamp must be finite and non-negative, got {timestamp}")));
        }
        if size == 0 {
            return Err(parse_error(line, "packet size must be positive"));
        }
        records.push(PacketRecord { timestamp, size });
    }
    PacketTrace::new(role, records)
}

pub fn read_trace_file(path: &Path, role: TraceRole) -> Result<PacketTrace> {
    read_file(path, |r| read_trace(r, role))
}

pub fn write_trace<W: Write>(w: W, trace: &PacketTrace) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(HEADER)?;
    for r in &trace.records {
        wtr.write_record([r.timestamp.to_string(), r.size.to_string()])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Slot of a timestamp, with boundary ties going to the later slot.
pub fn slot_of(timestamp: f64, slot_width: f64) -> usize {
    let x = timestamp / slot_width;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

/// Cumulative bytes per slot. Packets in slots at or beyond the horizon are
/// outside the grid and ignored.
pub fn discretize(trace: &PacketTrace, grid: TimeGrid) -> CumulativePath {
    let mut increments = vec![0.0; grid.horizon()];
    let mut dropped = 0usize;
    for r in &trace.records {
        match increments.get_mut(slot_of(r.timestamp, grid.slot_width())) {
            Some(x) => *x += r.size as f64,
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} packets lie beyond the horizon and were ignored");
    }
    CumulativePath::from_increments(grid, &increments).expect("sizes are positive")
}

/// Discretizes both traces and checks `D(t) <= A(t)` on every slot.
pub fn ingest(arrivals: &PacketTrace, departures: &PacketTrace, grid: TimeGrid) -> Result<(CumulativePath, CumulativePath)> {
    let a = discretize(arrivals, grid);
    let d = discretize(departures, grid);
    if let Some(slot) = (0..grid.len()).find(|&t| d.at(t) > a.at(t)) {
        return Err(Error::Causality {
            slot,
            arrivals: a.at(slot),
            departures: d.at(slot),
        });
    }
    Ok((a, d))
}

pub fn ingest_trace(arrivals_file: &Path, departures_file: &Path, grid: TimeGrid) -> Result<(CumulativePath, CumulativePath)> {
    let a = read_trace_file(arrivals_file, TraceRole::Arrival)?;
    let d = read_trace_file(departures_file, TraceRole::Departure)?;
    ingest(&a, &d, grid)
}

/// One record per nonzero increment, timestamped mid-slot, so that
/// [`discretize`] reproduces `path` exactly. Increments must be whole bytes.
pub fn trace_from_path(path: &CumulativePath, role: TraceRole) -> Result<PacketTrace> {
    let w = path.grid().slot_width();
    let mut records = Vec::new();
    for k in 1..path.grid().len() {
        let inc = path.interval(k - 1, k);
        if inc == 0.0 {
            continue;
        }
        if inc.fract() != 0.0 || inc < 0.0 || inc > u64::MAX as f64 {
            return Err(Error::InvalidPath {
                slot: k,
                reason: format!("increment {inc} is not a whole number of bytes"),
            });
        }
        records.push(PacketRecord {
            timestamp: (k as f64 - 0.5) * w,
            size: inc as u64,
        });
    }
    PacketTrace::new(role, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_packet_discretization() {
        let g = TimeGrid::new(20, 0.001).unwrap();
        let tr = read_trace("timestamp_s,size_bytes\n0.010,1400\n".as_bytes(), TraceRole::Arrival).unwrap();
        let a = discretize(&tr, g);
        assert_eq!(a.at(10), 0.0);
        assert_eq!(a.at(11), 1400.0);
        assert_eq!(a.at(20), 1400.0);
        // just below the boundary stays in slot 9
        let tr = PacketTrace::new(TraceRole::Arrival, vec![PacketRecord { timestamp: 0.00999, size: 1 }]).unwrap();
        assert_eq!(discretize(&tr, g).at(10), 1.0);
    }

    #[test]
    fn empty_traces() {
        let g = TimeGrid::slots(5).unwrap();
        let e = read_trace("".as_bytes(), TraceRole::Arrival).unwrap();
        assert!(e.is_empty());
        let h = read_trace("timestamp_s,size_bytes\n".as_bytes(), TraceRole::Departure).unwrap();
        let (a, d) = ingest(&e, &h, g).unwrap();
        assert_eq!(a, CumulativePath::zeros(g));
        assert_eq!(d, CumulativePath::zeros(g));
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let cases = [
            ("timestamp_s,size_bytes\n0.1,10\n0.2,abc\n", 3),
            ("timestamp_s,size_bytes\n0.1,0\n", 2),
            ("timestamp_s,size_bytes\n0.1,10\n\n-1,5\n", 4),
            ("ts,size\n0.1,10\n", 1),
        ];
        for (text, expected) in cases {
            match read_trace(text.as_bytes(), TraceRole::Arrival) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, expected, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn causality_names_first_slot() {
        let g = TimeGrid::slots(10).unwrap();
        let a = PacketTrace::new(TraceRole::Arrival, vec![PacketRecord { timestamp: 3.0, size: 5 }]).unwrap();
        let d = PacketTrace::new(TraceRole::Departure, vec![PacketRecord { timestamp: 2.5, size: 5 }]).unwrap();
        match ingest(&a, &d, g) {
            Err(Error::Causality { slot, .. }) => assert_eq!(slot, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let text = "timestamp_s,size_bytes\n0.5,2\n0.1,3\n";
        let tr = read_trace(text.as_bytes(), TraceRole::Arrival).unwrap();
        assert_eq!(tr.records()[0].timestamp, 0.1);
        assert_eq!(tr.total_bytes(), 5);
    }

    #[test]
    fn path_round_trip() {
        let g = TimeGrid::new(50, 0.003).unwrap();
        let inc: Vec<f64> = (0..50).map(|k| ((k * 7919) % 5) as f64 * 1400.0).collect();
        let path = CumulativePath::from_increments(g, &inc).unwrap();
        let tr = trace_from_path(&path, TraceRole::Arrival).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &tr).unwrap();
        let back = read_trace(buf.as_slice(), TraceRole::Arrival).unwrap();
        assert_eq!(back, tr);
        assert_eq!(discretize(&back, g), path);
        let frac = CumulativePath::from_increments(g, &[0.5]).unwrap();
        assert!(trace_from_path(&frac, TraceRole::Arrival).is_err());
    }
}
