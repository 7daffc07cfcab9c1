//! Synthetic HTTP adaptive streaming sessions with exact phase labels.
//!
//! The generator simulates a segment-based client with a byte-level
//! play-back buffer:
//!
//! * The client requests the next media segment as soon as
//!   `buffer + segment_bytes <= buffer_target`; otherwise it idles until the
//!   buffer has drained to `buffer_target - segment_bytes`. Back-to-back
//!   requests make up filling phases, the idle/request cycle makes up the
//!   on-off steady state whose long-run rate equals the encoding rate.
//! * Downloads run at `fill_throughput`, reduced by any throttle window.
//! * A step in `encode_rates` is a user quality switch: the client discards
//!   its buffer and refetches from the playhead at the new rate.
//! * A throttle window whose cap is below the current encoding rate is
//!   labeled `other`. When it ends with a request in flight, the client
//!   re-issues the remainder of that request after `resume_gap` seconds.
//!
//! Packet spacing carries uniform +-10% jitter drawn from a seeded ChaCha
//! stream, so a spec and seed always reproduce the same trace.

use std::collections::VecDeque;
use std::net::{IpAddr, Ipv4Addr};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{FlowKey, PacketRecord, Phase, PhaseLabel, Trace};

/// 646 kbit/s expressed in bytes/s.
pub const MQ_RATE: f64 = 80_750.0;
/// 1346 kbit/s expressed in bytes/s.
pub const HQ_RATE: f64 = 168_250.0;
/// 320 kbit/s expressed in bytes/s.
pub const AQ_THROTTLE_CAP: f64 = 40_000.0;
pub const AQ_THROTTLE_DURATION: f64 = 90.0;
/// Window, in seconds of session time, from which quality changes and
/// throttle starts are drawn.
pub const EVENT_WINDOW: (f64, f64) = (120.0, 240.0);

pub const PRESETS: [&str; 4] = ["MQ", "HQ", "QC", "AQ"];

const JITTER: f64 = 0.10;
const MAX_PACKETS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStep {
    /// Session time at which the rate takes effect.
    pub start: f64,
    /// Encoding rate in bytes/s.
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrottleWindow {
    pub start: f64,
    pub end: f64,
    /// Throughput cap in bytes/s.
    pub cap: f64,
}

/// Generator defaults shared by every preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorDefaults {
    pub segment_duration: f64,
    pub buffer_target: f64,
    pub fill_throughput: f64,
    pub packet_size: u32,
    pub video_duration: f64,
    pub resume_gap: f64,
}

impl Default for GeneratorDefaults {
    fn default() -> Self {
        Self {
            segment_duration: 5.0,
            buffer_target: 18e6,
            fill_throughput: 2e6,
            packet_size: 1448,
            video_duration: 600.0,
            resume_gap: 2.0,
        }
    }
}

impl GeneratorDefaults {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, "must be > 0"))
            }
        };
        positive(self.segment_duration, "segment_duration")?;
        positive(self.buffer_target, "buffer_target")?;
        positive(self.fill_throughput, "fill_throughput")?;
        positive(self.video_duration, "video_duration")?;
        if self.packet_size == 0 {
            return Err(Error::param("packet_size", "must be >= 1"));
        }
        if !(self.resume_gap.is_finite() && self.resume_gap >= 0.0) {
            return Err(Error::param("resume_gap", "must be >= 0"));
        }
        Ok(())
    }
}

fn default_flow() -> FlowKey {
    FlowKey::new(
        IpAddr::V4(Ipv4Addr::new(203, 0, 113, 10)),
        IpAddr::V4(Ipv4Addr::new(192, 168, 1, 20)),
        Some(51_000),
    )
}

fn default_name() -> String {
    "custom".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub encode_rates: Vec<RateStep>,
    pub segment_duration: f64,
    pub buffer_target: f64,
    pub fill_throughput: f64,
    #[serde(default)]
    pub throttle_windows: Vec<ThrottleWindow>,
    pub video_duration: f64,
    pub packet_size: u32,
    pub resume_gap: f64,
    pub rng_seed: u64,
    #[serde(default = "default_flow")]
    pub flow: FlowKey,
}

impl ScenarioSpec {
    pub fn constant(rate: f64, defaults: &GeneratorDefaults, seed: u64) -> Self {
        Self {
            name: default_name(),
            encode_rates: vec![RateStep { start: 0.0, rate }],
            segment_duration: defaults.segment_duration,
            buffer_target: defaults.buffer_target,
            fill_throughput: defaults.fill_throughput,
            throttle_windows: Vec::new(),
            video_duration: defaults.video_duration,
            packet_size: defaults.packet_size,
            resume_gap: defaults.resume_gap,
            rng_seed: seed,
            flow: default_flow(),
        }
    }

    /// Named preset with event times drawn from `seed`.
    pub fn preset(name: &str, seed: u64, defaults: &GeneratorDefaults) -> Result<Self> {
        let mut draw = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_5ce9_a210);
        let event_time = draw.gen_range(EVENT_WINDOW.0..EVENT_WINDOW.1);
        let upper = name.to_ascii_uppercase();
        let mut spec = match upper.as_str() {
            "MQ" => Self::constant(MQ_RATE, defaults, seed),
            "HQ" => Self::constant(HQ_RATE, defaults, seed),
            "QC" => {
                let mut s = Self::constant(HQ_RATE, defaults, seed);
                s.encode_rates.push(RateStep { start: event_time, rate: MQ_RATE });
                s
            }
            "AQ" => {
                let mut s = Self::constant(HQ_RATE, defaults, seed);
                s.throttle_windows.push(ThrottleWindow {
                    start: event_time,
                    end: event_time + AQ_THROTTLE_DURATION,
                    cap: AQ_THROTTLE_CAP,
                });
                s
            }
            _ => {
                return Err(Error::UnknownScenario {
                    name: name.to_string(),
                    available: PRESETS.join(", "),
                })
            }
        };
        spec.name = upper;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        GeneratorDefaults {
            segment_duration: self.segment_duration,
            buffer_target: self.buffer_target,
            fill_throughput: self.fill_throughput,
            packet_size: self.packet_size,
            video_duration: self.video_duration,
            resume_gap: self.resume_gap,
        }
        .validate()?;
        let Some(first) = self.encode_rates.first() else {
            return Err(Error::param("encode_rates", "at least one rate is required"));
        };
        if first.start != 0.0 {
            return Err(Error::param("encode_rates", "the first rate must start at 0"));
        }
        for (i, step) in self.encode_rates.iter().enumerate() {
            if !(step.rate.is_finite() && step.rate > 0.0) {
                return Err(Error::param("encode_rates", format!("rate #{i} must be > 0")));
            }
            if i > 0 && !(step.start > self.encode_rates[i - 1].start && step.start.is_finite()) {
                return Err(Error::param("encode_rates", "start times must be strictly increasing"));
            }
            if step.rate >= self.fill_throughput {
                return Err(Error::Infeasible(format!(
                    "fill_throughput {} B/s does not exceed encode rate {} B/s, so the buffer never fills",
                    self.fill_throughput, step.rate
                )));
            }
            if step.rate * self.segment_duration > self.buffer_target {
                return Err(Error::Infeasible(format!(
                    "one segment at {} B/s exceeds buffer_target {} B",
                    step.rate, self.buffer_target
                )));
            }
        }
        for (i, w) in self.throttle_windows.iter().enumerate() {
            if !(w.start >= 0.0 && w.end > w.start && w.end <= self.video_duration) {
                return Err(Error::param(
                    "throttle_windows",
                    format!("window #{i} must satisfy 0 <= start < end <= video_duration"),
                ));
            }
            if !(w.cap.is_finite() && w.cap > 0.0) {
                return Err(Error::param("throttle_windows", format!("window #{i} cap must be > 0")));
            }
            if i > 0 && w.start < self.throttle_windows[i - 1].end {
                return Err(Error::param("throttle_windows", "windows must be ordered and disjoint"));
            }
        }
        Ok(())
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        self.encode_rates
            .iter()
            .take_while(|s| s.start <= t)
            .last()
            .map_or(self.encode_rates[0].rate, |s| s.rate)
    }
}

/// A generated trace with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrace {
    pub trace: Trace,
    pub labels: Vec<PhaseLabel>,
    /// Encoding rate in effect at the start of each label.
    pub label_rates: Vec<f64>,
}

impl LabeledTrace {
    /// `(label, true rate)` for every steady-state label, in order.
    pub fn steady_truth(&self) -> Vec<(PhaseLabel, f64)> {
        self.labels
            .iter()
            .zip(&self.label_rates)
            .filter(|(l, _)| l.phase == Phase::SteadyState)
            .map(|(l, r)| (*l, *r))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct BufferedSegment {
    media_left: f64,
    bytes_left: f64,
    byte_rate: f64,
}

/// Play-back side of the client: consumes buffered media in real time.
#[derive(Debug, Default)]
struct Player {
    clock: f64,
    played_media: f64,
    queue: VecDeque<BufferedSegment>,
}

impl Player {
    fn advance(&mut self, to: f64) {
        let mut dt = to - self.clock;
        self.clock = self.clock.max(to);
        while dt > 0.0 {
            let Some(head) = self.queue.front_mut() else {
                break;
            };
            let step = dt.min(head.media_left);
            head.media_left -= step;
            head.bytes_left = (head.bytes_left - step * head.byte_rate).max(0.0);
            self.played_media += step;
            dt -= step;
            if head.media_left <= 1e-12 {
                self.queue.pop_front();
            }
        }
    }

    fn buffered_bytes(&self) -> f64 {
        self.queue.iter().map(|s| s.bytes_left).sum()
    }

    /// Play time until the buffer holds at most `level` bytes.
    fn time_to_drain_to(&self, level: f64) -> f64 {
        let mut excess = self.buffered_bytes() - level;
        let mut time = 0.0;
        for s in &self.queue {
            if excess <= 0.0 {
                break;
            }
            if s.bytes_left >= excess {
                time += excess / s.byte_rate;
                excess = 0.0;
            } else {
                time += s.media_left;
                excess -= s.bytes_left;
            }
        }
        time
    }

    fn push(&mut self, media: f64, bytes: f64) {
        self.queue.push_back(BufferedSegment {
            media_left: media,
            bytes_left: bytes,
            byte_rate: bytes / media,
        });
    }

    fn flush(&mut self) {
        self.queue.clear();
    }
}

enum Download {
    Completed,
    Interrupted(f64),
}

struct Session<'a> {
    spec: &'a ScenarioSpec,
    rng: ChaCha8Rng,
    t: f64,
    records: Vec<PacketRecord>,
    player: Player,
    next_media: f64,
    /// Index of the next quality switch not yet applied.
    next_switch: usize,
    /// Behavioral phase changes (filling or steady state).
    base: Vec<(f64, Phase)>,
    /// Windows capped below the encoding rate, and whether one interrupted a request.
    limiting: Vec<bool>,
    paused: Vec<bool>,
    in_flight_window: Option<usize>,
}

impl<'a> Session<'a> {
    fn new(spec: &'a ScenarioSpec) -> Self {
        let limiting = spec
            .throttle_windows
            .iter()
            .map(|w| w.cap < spec.rate_at(w.start))
            .collect();
        Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(spec.rng_seed),
            t: 0.0,
            records: Vec::new(),
            player: Player::default(),
            next_media: 0.0,
            next_switch: 1,
            base: vec![(0.0, Phase::Filling)],
            limiting,
            paused: vec![false; spec.throttle_windows.len()],
            in_flight_window: None,
        }
    }

    fn pending_switch(&self) -> Option<f64> {
        self.spec.encode_rates.get(self.next_switch).map(|s| s.start)
    }

    fn set_base(&mut self, t: f64, phase: Phase) {
        if self.base.last().map(|b| b.1) != Some(phase) {
            self.base.push((t, phase));
        }
    }

    fn throughput(&self, t: f64) -> f64 {
        self.spec
            .throttle_windows
            .iter()
            .filter(|w| w.start <= t && t < w.end)
            .fold(self.spec.fill_throughput, |acc, w| acc.min(w.cap))
    }

    fn limiting_window_at(&self, t: f64) -> Option<usize> {
        self.spec
            .throttle_windows
            .iter()
            .enumerate()
            .find(|(i, w)| self.limiting[*i] && w.start <= t && t < w.end)
            .map(|(i, _)| i)
    }

    fn switch_quality(&mut self, at: f64) {
        self.t = at;
        self.player.advance(at);
        self.player.flush();
        self.next_media = self.player.played_media;
        self.next_switch += 1;
        self.set_base(at, Phase::Filling);
    }

    fn download(&mut self, bytes: u64) -> Result<Download> {
        let mut remaining = bytes;
        let packet_size = u64::from(self.spec.packet_size);
        while remaining > 0 {
            if let Some(w) = self.in_flight_window {
                let end = self.spec.throttle_windows[w].end;
                if self.t >= end {
                    self.t = self.t.max(end) + self.spec.resume_gap;
                    self.paused[w] = true;
                    self.in_flight_window = None;
                }
            }
            if let Some(at) = self.pending_switch() {
                if self.t >= at {
                    return Ok(Download::Interrupted(at));
                }
            }
            if self.records.len() >= MAX_PACKETS {
                return Err(Error::Infeasible(format!("session exceeds {MAX_PACKETS} packets")));
            }
            let size = remaining.min(packet_size);
            self.records.push(PacketRecord {
                t: self.t,
                size: size as u32,
                flow: self.spec.flow,
            });
            let nominal = size as f64 / self.throughput(self.t);
            self.in_flight_window = self.limiting_window_at(self.t);
            self.t += nominal * self.rng.gen_range(1.0 - JITTER..=1.0 + JITTER);
            remaining -= size;
        }
        Ok(Download::Completed)
    }

    fn run(mut self) -> Result<LabeledTrace> {
        let spec = self.spec;
        let end_media = spec.video_duration;
        while end_media - self.next_media > 1e-9 {
            if let Some(at) = self.pending_switch() {
                if self.t >= at {
                    self.switch_quality(at);
                    continue;
                }
            }
            let rate = spec.rate_at(self.t);
            let media = spec.segment_duration.min(end_media - self.next_media);
            let bytes = (rate * media).round().max(1.0) as u64;
            self.player.advance(self.t);

            // Room is always checked for a full segment, so a short final
            // segment does not look like the start of a new filling phase.
            let room = rate * spec.segment_duration;
            if self.player.buffered_bytes() + room > spec.buffer_target {
                self.set_base(self.t, Phase::SteadyState);
                self.in_flight_window = None;
                let request_at = self.t + self.player.time_to_drain_to(spec.buffer_target - room);
                if let Some(at) = self.pending_switch() {
                    if at < request_at {
                        self.switch_quality(at);
                        continue;
                    }
                }
                self.t = request_at;
            } else {
                self.set_base(self.t, Phase::Filling);
            }

            match self.download(bytes)? {
                Download::Completed => {
                    self.player.advance(self.t);
                    self.player.push(media, bytes as f64);
                    self.next_media += media;
                }
                Download::Interrupted(at) => self.switch_quality(at),
            }
        }
        Ok(self.finish())
    }

    fn finish(self) -> LabeledTrace {
        let spec = self.spec;
        let t_last = self.records.last().map_or(0.0, |r| r.t);
        let limited: Vec<(f64, f64)> = spec
            .throttle_windows
            .iter()
            .enumerate()
            .filter(|(i, _)| self.limiting[*i])
            .map(|(i, w)| (w.start, if self.paused[i] { w.end + spec.resume_gap } else { w.end }))
            .collect();

        let mut cuts: Vec<f64> = vec![0.0, t_last];
        cuts.extend(self.base.iter().map(|b| b.0));
        cuts.extend(limited.iter().flat_map(|&(a, b)| [a, b]));
        cuts.retain(|&c| (0.0..=t_last).contains(&c));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let base_at = |t: f64| {
            self.base
                .iter()
                .take_while(|b| b.0 <= t)
                .last()
                .map_or(Phase::Filling, |b| b.1)
        };
        let mut labels: Vec<PhaseLabel> = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            let phase = if limited.iter().any(|&(s, e)| s <= mid && mid < e) {
                Phase::Other
            } else {
                base_at(mid)
            };
            match labels.last_mut() {
                Some(last) if last.phase == phase => last.t_end = b,
                _ => labels.push(PhaseLabel { t_start: a, t_end: b, phase }),
            }
        }
        let label_rates = labels.iter().map(|l| spec.rate_at(l.t_start)).collect();

        let mut trace = Trace::new(self.records);
        trace.meta.insert("scenario".into(), spec.name.clone());
        trace.meta.insert("seed".into(), spec.rng_seed.to_string());
        for step in spec.encode_rates.iter().skip(1) {
            trace.meta.insert("quality_change_at".into(), step.start.to_string());
        }
        for w in &spec.throttle_windows {
            trace.meta.insert("throttle_start".into(), w.start.to_string());
            trace.meta.insert("throttle_end".into(), w.end.to_string());
        }
        LabeledTrace {
            trace,
            labels,
            label_rates,
        }
    }
}

/// Generates one session. Deterministic in `spec` (including its seed).
pub fn generate(spec: &ScenarioSpec) -> Result<LabeledTrace> {
    spec.validate()?;
    Session::new(spec).run()
}

/// Continuous, non-bursty transfer at `rate` bytes/s for `duration` seconds,
/// labeled `other` throughout. Used as negative-control traffic.
pub fn generate_bulk(duration: f64, rate: f64, packet_size: u32, seed: u64) -> Result<LabeledTrace> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::param("duration", "must be >= 0"));
    }
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::param("rate", "must be > 0"));
    }
    if packet_size == 0 {
        return Err(Error::param("packet_size", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flow = default_flow();
    let nominal = f64::from(packet_size) / rate;
    let mut records = Vec::new();
    let mut t = 0.0;
    while t < duration {
        if records.len() >= MAX_PACKETS {
            return Err(Error::Infeasible(format!("bulk transfer exceeds {MAX_PACKETS} packets")));
        }
        records.push(PacketRecord { t, size: packet_size, flow });
        t += nominal * rng.gen_range(1.0 - JITTER..=1.0 + JITTER);
    }
    let labels = match records.last() {
        Some(last) if last.t > 0.0 => vec![PhaseLabel { t_start: 0.0, t_end: last.t, phase: Phase::Other }],
        _ => Vec::new(),
    };
    let label_rates = vec![rate; labels.len()];
    let mut trace = Trace::new(records);
    trace.meta.insert("scenario".into(), "bulk".into());
    trace.meta.insert("seed".into(), seed.to_string());
    Ok(LabeledTrace {
        trace,
        labels,
        label_rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phases(lt: &LabeledTrace) -> Vec<Phase> {
        lt.labels.iter().map(|l| l.phase).collect()
    }

    fn assert_tiles(lt: &LabeledTrace) {
        let (t0, t1) = lt.trace.span().unwrap();
        assert_eq!(lt.labels.first().unwrap().t_start, t0);
        assert_eq!(lt.labels.last().unwrap().t_end, t1);
        for w in lt.labels.windows(2) {
            assert_eq!(w[0].t_end, w[1].t_start);
            assert_ne!(w[0].phase, w[1].phase);
        }
    }

    #[test]
    fn mq_is_filling_then_steady() {
        let spec = ScenarioSpec::preset("MQ", 1, &GeneratorDefaults::default()).unwrap();
        let lt = generate(&spec).unwrap();
        assert_eq!(phases(&lt), vec![Phase::Filling, Phase::SteadyState]);
        assert_tiles(&lt);
        assert_eq!(lt.trace.records[0].t, 0.0);
        assert_eq!(lt.label_rates[1], MQ_RATE);
    }

    #[test]
    fn qc_has_two_fillings_and_two_steady_phases() {
        let spec = ScenarioSpec::preset("QC", 3, &GeneratorDefaults::default()).unwrap();
        let lt = generate(&spec).unwrap();
        assert_eq!(phases(&lt), vec![Phase::Filling, Phase::SteadyState, Phase::Filling, Phase::SteadyState]);
        assert_tiles(&lt);
        let switch = spec.encode_rates[1].start;
        assert_eq!(lt.labels[2].t_start, switch);
        assert_eq!(lt.label_rates[1], HQ_RATE);
        assert_eq!(lt.label_rates[3], MQ_RATE);
    }

    #[test]
    fn aq_throttle_is_other_then_refills() {
        let spec = ScenarioSpec::preset("AQ", 5, &GeneratorDefaults::default()).unwrap();
        let lt = generate(&spec).unwrap();
        assert_eq!(
            phases(&lt),
            vec![Phase::Filling, Phase::SteadyState, Phase::Other, Phase::Filling, Phase::SteadyState]
        );
        assert_tiles(&lt);
        let w = spec.throttle_windows[0];
        assert_eq!(lt.labels[2].t_start, w.start);
        assert_eq!(lt.labels[2].t_end, w.end + spec.resume_gap);
        // the refill is separated from throttled traffic by the resume gap
        let before = lt.trace.records.iter().rfind(|r| r.t < w.end).unwrap().t;
        let after = lt.trace.records.iter().find(|r| r.t >= w.end).unwrap().t;
        assert!(after - before >= spec.resume_gap);
    }

    #[test]
    fn unknown_preset_lists_names() {
        let err = ScenarioSpec::preset("XQ", 1, &GeneratorDefaults::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("MQ") && msg.contains("AQ"), "{msg}");
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let d = GeneratorDefaults::default();
        let mut spec = ScenarioSpec::constant(MQ_RATE, &d, 1);
        spec.fill_throughput = MQ_RATE;
        assert!(matches!(generate(&spec), Err(Error::Infeasible(_))));

        let mut spec = ScenarioSpec::constant(MQ_RATE, &d, 1);
        spec.buffer_target = 1000.0;
        assert!(matches!(generate(&spec), Err(Error::Infeasible(_))));

        let mut spec = ScenarioSpec::constant(MQ_RATE, &d, 1);
        spec.throttle_windows.push(ThrottleWindow { start: 10.0, end: 5.0, cap: 1.0 });
        assert!(matches!(generate(&spec), Err(Error::InvalidParam { .. })));
    }

    #[test]
    fn bulk_is_gapless_and_deterministic() {
        let a = generate_bulk(60.0, 1e6, 1448, 7).unwrap();
        let b = generate_bulk(60.0, 1e6, 1448, 7).unwrap();
        assert_eq!(a, b);
        let max_gap = a.trace.records.windows(2).map(|w| w[1].t - w[0].t).fold(0.0, f64::max);
        assert!(max_gap < 0.01);
        assert_eq!(phases(&a), vec![Phase::Other]);
        assert!(generate_bulk(0.0, 1e6, 1448, 7).unwrap().trace.is_empty());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ScenarioSpec::preset("AQ", 9, &GeneratorDefaults::default()).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: ScenarioSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }
}
