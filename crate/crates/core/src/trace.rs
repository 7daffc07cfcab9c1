//! Packet-record traces: the canonical CSV format, normalization and
//! per-flow demultiplexing, plus the ground-truth phase label format.
//!
//! A trace file carries one downlink packet per line:
//!
//! ```text
//! t,size,src,dst,dst_port
//! 0.020,1200,10.0.0.1,192.168.1.5,443
//! ```
//!
//! `size` is transport payload bytes (headers stripped) and `dst_port` may be
//! left empty. Label files use `t_start,t_end,phase`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 5] = ["t", "size", "src", "dst", "dst_port"];
pub const LABEL_HEADER: [&str; 3] = ["t_start", "t_end", "phase"];

/// Addressing of a downlink flow.
///
/// Ordering is lexicographic over (src, dst, port) so that maps keyed by flow
/// iterate deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub src: IpAddr,
    pub dst: IpAddr,
    pub dst_port: Option<u16>,
}

impl FlowKey {
    pub fn new(src: IpAddr, dst: IpAddr, dst_port: Option<u16>) -> Self {
        Self { src, dst, dst_port }
    }

    /// Same flow with the port dropped, for address-pair granularity.
    pub fn address_pair(&self) -> Self {
        Self {
            dst_port: None,
            ..*self
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dst_port {
            Some(port) => write!(f, "{}->{}:{}", self.src, self.dst, port),
            None => write!(f, "{}->{}", self.src, self.dst),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    /// Arrival time in seconds.
    pub t: f64,
    /// Payload bytes, always at least 1.
    pub size: u32,
    pub flow: FlowKey,
}

impl PacketRecord {
    pub fn new(t: f64, size: u32, flow: FlowKey) -> Result<Self> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::param("t", format!("arrival time must be finite and >= 0, got {t}")));
        }
        if size == 0 {
            return Err(Error::param("size", "payload size must be >= 1"));
        }
        Ok(Self { t, size, flow })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<PacketRecord>,
    pub meta: BTreeMap<String, String>,
}

impl Trace {
    pub fn new(records: Vec<PacketRecord>) -> Self {
        Self {
            records,
            meta: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.records.iter().map(|r| u64::from(r.size)).sum()
    }

    /// First and last arrival time, if any packets exist.
    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.records.first()?.t, self.records.last()?.t))
    }

    pub fn is_sorted(&self) -> bool {
        self.records.windows(2).all(|w| w[0].t <= w[1].t)
    }
}

/// Phase categories reported by the profiler and used in label files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Filling,
    SteadyState,
    Other,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Filling, Phase::SteadyState, Phase::Other];

    pub fn index(self) -> usize {
        match self {
            Phase::Filling => 0,
            Phase::SteadyState => 1,
            Phase::Other => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Filling => "filling",
            Phase::SteadyState => "steady_state",
            Phase::Other => "other",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "filling" => Ok(Phase::Filling),
            "steady_state" => Ok(Phase::SteadyState),
            "other" => Ok(Phase::Other),
            _ => Err(format!("unknown phase `{s}` (expected filling, steady_state or other)")),
        }
    }
}

/// A ground-truth interval from a label file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseLabel {
    pub t_start: f64,
    pub t_end: f64,
    pub phase: Phase,
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn csv_line(err: &csv::Error) -> u64 {
    err.position().map(|p| p.line()).unwrap_or(0)
}

fn is_header(record: &csv::StringRecord, header: &[&str]) -> bool {
    record.len() == header.len() && record.iter().zip(header).all(|(a, b)| a == *b)
}

/// Parses the canonical packet CSV. The header line is optional; blank input
/// yields an empty trace.
pub fn parse_trace<R: Read>(input: R) -> Result<Trace> {
    let mut reader = csv_reader(input);
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: csv_line(&e),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if i == 0 && is_header(&row, &TRACE_HEADER) {
            continue;
        }
        records.push(parse_packet_row(&row).map_err(|message| Error::Parse { line, message })?);
    }
    Ok(Trace::new(records))
}

fn parse_packet_row(row: &csv::StringRecord) -> std::result::Result<PacketRecord, String> {
    if row.len() != 5 {
        return Err(format!("expected 5 fields (t,size,src,dst,dst_port), found {}", row.len()));
    }
    let t: f64 = row[0].parse().map_err(|_| format!("bad time `{}`", &row[0]))?;
    let size: u32 = row[1].parse().map_err(|_| format!("bad size `{}`", &row[1]))?;
    let src: IpAddr = row[2].parse().map_err(|_| format!("bad source address `{}`", &row[2]))?;
    let dst: IpAddr = row[3].parse().map_err(|_| format!("bad destination address `{}`", &row[3]))?;
    let dst_port = match &row[4] {
        "" => None,
        s => match s.parse::<u16>() {
            Ok(p) if p >= 1 => Some(p),
            _ => return Err(format!("bad destination port `{s}` (expected 1-65535 or empty)")),
        },
    };
    PacketRecord::new(t, size, FlowKey::new(src, dst, dst_port)).map_err(|e| e.to_string())
}

pub fn write_trace<W: Write>(trace: &Trace, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.into());
    writer.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in &trace.records {
        let port = r.flow.dst_port.map(|p| p.to_string()).unwrap_or_default();
        writer
            .write_record([
                r.t.to_string(),
                r.size.to_string(),
                r.flow.src.to_string(),
                r.flow.dst.to_string(),
                port,
            ])
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn parse_labels<R: Read>(input: R) -> Result<Vec<PhaseLabel>> {
    let mut reader = csv_reader(input);
    let mut labels = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: csv_line(&e),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if i == 0 && is_header(&row, &LABEL_HEADER) {
            continue;
        }
        let parse = || -> std::result::Result<PhaseLabel, String> {
            if row.len() != 3 {
                return Err(format!("expected 3 fields (t_start,t_end,phase), found {}", row.len()));
            }
            let t_start: f64 = row[0].parse().map_err(|_| format!("bad t_start `{}`", &row[0]))?;
            let t_end: f64 = row[1].parse().map_err(|_| format!("bad t_end `{}`", &row[1]))?;
            if !(t_start.is_finite() && t_end.is_finite()) || t_end < t_start {
                return Err(format!("invalid interval [{t_start}, {t_end}]"));
            }
            Ok(PhaseLabel {
                t_start,
                t_end,
                phase: row[2].parse()?,
            })
        };
        labels.push(parse().map_err(|message| Error::Parse { line, message })?);
    }
    Ok(labels)
}

pub fn write_labels<W: Write>(labels: &[PhaseLabel], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.into());
    writer.write_record(LABEL_HEADER).map_err(csv_err)?;
    for l in labels {
        writer
            .write_record([l.t_start.to_string(), l.t_end.to_string(), l.phase.to_string()])
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

/// Stable sort by arrival time, then shift so the first packet sits at t = 0.
pub fn normalize(mut trace: Trace) -> Trace {
    trace.records.sort_by(|a, b| a.t.total_cmp(&b.t));
    if let Some(origin) = trace.records.first().map(|r| r.t) {
        for r in &mut trace.records {
            r.t -= origin;
        }
    }
    trace
}

/// How packets are grouped into flows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowGranularity {
    /// Source address, destination address and destination port.
    #[default]
    AddressAndPort,
    /// Source and destination address only.
    AddressPair,
}

pub fn demux(trace: &Trace) -> BTreeMap<FlowKey, Trace> {
    demux_by(trace, FlowGranularity::AddressAndPort)
}

pub fn demux_by(trace: &Trace, granularity: FlowGranularity) -> BTreeMap<FlowKey, Trace> {
    let mut flows: BTreeMap<FlowKey, Trace> = BTreeMap::new();
    for r in &trace.records {
        let key = match granularity {
            FlowGranularity::AddressAndPort => r.flow,
            FlowGranularity::AddressPair => r.flow.address_pair(),
        };
        flows
            .entry(key)
            .or_insert_with(|| Trace {
                records: Vec::new(),
                meta: trace.meta.clone(),
            })
            .records
            .push(*r);
    }
    flows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(port: Option<u16>) -> FlowKey {
        FlowKey::new("10.0.0.1".parse().unwrap(), "192.168.1.5".parse().unwrap(), port)
    }

    #[test]
    fn parses_single_row() {
        let trace = parse_trace("t,size,src,dst,dst_port\n0.020,1200,10.0.0.1,192.168.1.5,443\n".as_bytes()).unwrap();
        assert_eq!(trace.records, vec![PacketRecord { t: 0.020, size: 1200, flow: key(Some(443)) }]);
    }

    #[test]
    fn header_only_and_empty_inputs() {
        assert!(parse_trace("t,size,src,dst,dst_port\n".as_bytes()).unwrap().is_empty());
        assert!(parse_trace("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn zero_size_is_rejected_with_line() {
        let err = parse_trace("t,size,src,dst,dst_port\n0.1,10,10.0.0.1,10.0.0.2,\n0.2,0,10.0.0.1,10.0.0.2,\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("size"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        for bad in [
            "abc,10,10.0.0.1,10.0.0.2,80",
            "0.1,10,not-an-ip,10.0.0.2,80",
            "0.1,10,10.0.0.1,10.0.0.2,0",
            "0.1,10,10.0.0.1,10.0.0.2",
            "-1,10,10.0.0.1,10.0.0.2,80",
            "NaN,10,10.0.0.1,10.0.0.2,80",
        ] {
            assert!(matches!(parse_trace(bad.as_bytes()), Err(Error::Parse { line: 1, .. })), "{bad}");
        }
    }

    #[test]
    fn empty_port_is_absent() {
        let trace = parse_trace("1.5,99,::1,fe80::2,\n".as_bytes()).unwrap();
        assert_eq!(trace.records[0].flow.dst_port, None);
        assert_ne!(trace.records[0].flow, key(None));
    }

    #[test]
    fn normalize_sorts_and_shifts() {
        let recs = [5.0, 5.2, 5.1].map(|t| PacketRecord { t, size: 1, flow: key(None) });
        let n = normalize(Trace::new(recs.to_vec()));
        let ts: Vec<f64> = n.records.iter().map(|r| r.t).collect();
        assert_eq!(ts[0], 0.0);
        assert!((ts[1] - 0.1).abs() < 1e-12 && (ts[2] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn normalize_is_stable() {
        let recs = vec![
            PacketRecord { t: 1.0, size: 1, flow: key(None) },
            PacketRecord { t: 1.0, size: 2, flow: key(None) },
            PacketRecord { t: 0.5, size: 3, flow: key(None) },
        ];
        let n = normalize(Trace::new(recs));
        let sizes: Vec<u32> = n.records.iter().map(|r| r.size).collect();
        assert_eq!(sizes, vec![3, 1, 2]);
    }

    #[test]
    fn demux_partitions_flows() {
        let a = key(Some(443));
        let b = key(Some(80));
        let recs: Vec<PacketRecord> = [(0.0, a), (0.1, b), (0.2, a), (0.3, b), (0.4, a)]
            .into_iter()
            .map(|(t, flow)| PacketRecord { t, size: 10, flow })
            .collect();
        let flows = demux(&Trace::new(recs));
        assert_eq!(flows.len(), 2);
        assert_eq!(flows[&a].len(), 3);
        assert_eq!(flows[&b].len(), 2);

        let merged = demux_by(&Trace::new(flows[&a].records.clone()), FlowGranularity::AddressPair);
        assert_eq!(merged.len(), 1);
        assert!(demux(&Trace::default()).is_empty());
    }

    #[test]
    fn labels_round_trip() {
        let labels = vec![
            PhaseLabel { t_start: 0.0, t_end: 9.25, phase: Phase::Filling },
            PhaseLabel { t_start: 9.25, t_end: 370.0, phase: Phase::SteadyState },
        ];
        let mut buf = Vec::new();
        write_labels(&labels, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t_start,t_end,phase\n"));
        assert_eq!(parse_labels(buf.as_slice()).unwrap(), labels);
        assert!(parse_labels("0,1,buffering\n".as_bytes()).is_err());
    }
}
