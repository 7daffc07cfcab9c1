//! Phase profiling of a single flow.
//!
//! The rate method and the burst method run side by side. A burst candidate
//! is accepted only when a rate event of the matching kind (increase for
//! filling, decrease for steady state) lies within `match_tolerance` of the
//! candidate's start, or for filling anywhere before the burst ends. Accepted
//! candidates keep their packet-exact burst boundaries and everything in
//! between is reported as `other`.

use serde::{Deserialize, Serialize};

use crate::burst::{self, Burst, BurstParams, Candidate};
use crate::error::{Error, Result};
use crate::rate::{Direction, RateParams, RateSeries};
use crate::trace::{PacketRecord, Phase};

/// Converts bytes/s to kilobits/s.
pub fn to_kbps(bytes_per_sec: f64) -> f64 {
    bytes_per_sec * 8.0 / 1000.0
}

pub const UNITS_NOTE: &str = "rates are bytes/s unless the field name ends in _kbps (kilobits/s, 1 kbit = 1000 bit); volumes in bytes; times in seconds";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionParams {
    /// Largest allowed distance between a rate event and a burst candidate start.
    pub match_tolerance: f64,
    /// Idle time after which the incremental profiler closes a session.
    pub silence_timeout: f64,
    /// Added to the end of the first data bin to get the assumed playout start.
    pub startup_delay: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            match_tolerance: 5.0,
            silence_timeout: 60.0,
            startup_delay: 0.0,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.match_tolerance.is_finite() && self.match_tolerance > 0.0) {
            return Err(Error::param("match_tolerance", "must be > 0"));
        }
        if self.silence_timeout.is_nan() || self.silence_timeout <= 0.0 {
            return Err(Error::param("silence_timeout", "must be > 0"));
        }
        if !(self.startup_delay.is_finite() && self.startup_delay >= 0.0) {
            return Err(Error::param("startup_delay", "must be >= 0"));
        }
        Ok(())
    }
}

/// Every tunable of the detection pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileParams {
    pub rate: RateParams,
    pub burst: BurstParams,
    pub fusion: FusionParams,
}

impl ProfileParams {
    pub fn validate(&self) -> Result<()> {
        self.rate.validate()?;
        self.burst.validate()?;
        self.fusion.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseInterval {
    pub phase: Phase,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSegment {
    pub phase: Phase,
    pub t_start: f64,
    pub t_end: f64,
    pub volume: u64,
    pub duration: f64,
    pub mean_rate: f64,
    pub mean_rate_kbps: f64,
}

impl PhaseSegment {
    fn new(iv: PhaseInterval, volume: u64) -> Self {
        let duration = iv.t_end - iv.t_start;
        let mean_rate = volume as f64 / duration;
        Self {
            phase: iv.phase,
            t_start: iv.t_start,
            t_end: iv.t_end,
            volume,
            duration,
            mean_rate,
            mean_rate_kbps: to_kbps(mean_rate),
        }
    }

    pub fn interval(&self) -> PhaseInterval {
        PhaseInterval {
            phase: self.phase,
            t_start: self.t_start,
            t_end: self.t_end,
        }
    }
}

fn wanted_direction(phase: Phase) -> Option<Direction> {
    match phase {
        Phase::Filling => Some(Direction::Increase),
        Phase::SteadyState => Some(Direction::Decrease),
        Phase::Other => None,
    }
}

/// Whether a rate event at `t` can confirm `cand`.
///
/// The smoothed rate crosses its threshold a few seconds after a filling burst
/// starts, and later still when the burst opened with an ordinary segment
/// download that ran into the refill. An increase seen while the filling
/// burst is still running is therefore accepted as well.
fn agrees(t: f64, cand: &Candidate, tolerance: f64) -> bool {
    let late = match cand.phase {
        Phase::Filling => (cand.t_start + tolerance).max(cand.t_end),
        _ => cand.t_start + tolerance,
    };
    t >= cand.t_start - tolerance && t <= late
}

/// Cross-checks both methods and tiles `span` with the result.
///
/// Each rate event confirms at most one candidate; the unused event closest
/// to the candidate start wins.
pub fn fuse(
    rate_events: &[(f64, Direction)],
    candidates: &[Candidate],
    span: (f64, f64),
    params: &FusionParams,
) -> Vec<PhaseInterval> {
    let mut used = vec![false; rate_events.len()];
    let mut agreed = Vec::new();
    for cand in candidates {
        let Some(want) = wanted_direction(cand.phase) else {
            continue;
        };
        let best = rate_events
            .iter()
            .enumerate()
            .filter(|(i, (t, dir))| !used[*i] && *dir == want && agrees(*t, cand, params.match_tolerance))
            .min_by(|a, b| {
                let da = (a.1 .0 - cand.t_start).abs();
                let db = (b.1 .0 - cand.t_start).abs();
                da.total_cmp(&db)
            })
            .map(|(i, _)| i);
        if let Some(i) = best {
            used[i] = true;
            agreed.push(PhaseInterval {
                phase: cand.phase,
                t_start: cand.t_start.max(span.0),
                t_end: cand.t_end.min(span.1),
            });
        }
    }
    tile(span, &agreed)
}

fn tile(span: (f64, f64), agreed: &[PhaseInterval]) -> Vec<PhaseInterval> {
    let (start, end) = span;
    let mut out: Vec<PhaseInterval> = Vec::new();
    let push = |iv: PhaseInterval, out: &mut Vec<PhaseInterval>| {
        if iv.t_end <= iv.t_start {
            return;
        }
        match out.last_mut() {
            Some(last) if last.phase == Phase::Other && iv.phase == Phase::Other => last.t_end = iv.t_end,
            _ => out.push(iv),
        }
    };
    let mut cursor = start;
    for iv in agreed {
        if iv.t_start < cursor || iv.t_end <= iv.t_start {
            continue;
        }
        push(PhaseInterval { phase: Phase::Other, t_start: cursor, t_end: iv.t_start }, &mut out);
        push(*iv, &mut out);
        cursor = iv.t_end;
    }
    push(PhaseInterval { phase: Phase::Other, t_start: cursor, t_end: end }, &mut out);
    out
}

/// Attaches per-segment volumes. A packet on a shared boundary belongs to the
/// filling or steady segment, never to the neighbouring `other`.
pub fn attach_stats(intervals: &[PhaseInterval], records: &[PacketRecord]) -> Vec<PhaseSegment> {
    let mut volumes = vec![0u64; intervals.len()];
    if !intervals.is_empty() {
        for r in records {
            let mut i = intervals.partition_point(|iv| iv.t_end < r.t);
            if i >= intervals.len() {
                continue;
            }
            if r.t < intervals[i].t_start {
                continue;
            }
            if r.t == intervals[i].t_end
                && intervals[i].phase == Phase::Other
                && i + 1 < intervals.len()
                && intervals[i + 1].t_start == r.t
            {
                i += 1;
            }
            volumes[i] += u64::from(r.size);
        }
    }
    intervals.iter().zip(volumes).map(|(iv, v)| PhaseSegment::new(*iv, v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StreamVerdict {
    pub is_video_stream: bool,
    /// Index into the segment list.
    pub first_filling: Option<usize>,
    pub first_steady: Option<usize>,
}

/// A flow is a video stream once a filling segment is followed, at any
/// distance, by a steady-state segment.
pub fn detect_stream(segments: &[PhaseSegment]) -> StreamVerdict {
    let first_filling = segments.iter().position(|s| s.phase == Phase::Filling);
    let first_steady = first_filling.and_then(|f| {
        segments[f..]
            .iter()
            .position(|s| s.phase == Phase::SteadyState)
            .map(|j| f + j)
    });
    StreamVerdict {
        is_video_stream: first_steady.is_some(),
        first_filling,
        first_steady: first_steady.or_else(|| segments.iter().position(|s| s.phase == Phase::SteadyState)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentRate {
    pub segment: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub rate: f64,
    pub rate_kbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub per_segment: Vec<SegmentRate>,
    /// Duration-weighted mean over all steady segments.
    pub session: f64,
    pub session_kbps: f64,
}

/// Encoding-rate estimate from the steady-state segments, or `None` without
/// any steady evidence.
pub fn estimate_rate(segments: &[PhaseSegment]) -> Option<RateEstimate> {
    let steady: Vec<(usize, &PhaseSegment)> = segments
        .iter()
        .enumerate()
        .filter(|(_, s)| s.phase == Phase::SteadyState)
        .collect();
    if steady.is_empty() {
        return None;
    }
    let per_segment = steady
        .iter()
        .map(|(i, s)| SegmentRate {
            segment: *i,
            t_start: s.t_start,
            t_end: s.t_end,
            rate: s.mean_rate,
            rate_kbps: s.mean_rate_kbps,
        })
        .collect();
    let volume: u64 = steady.iter().map(|(_, s)| s.volume).sum();
    let duration: f64 = steady.iter().map(|(_, s)| s.duration).sum();
    let session = volume as f64 / duration;
    Some(RateEstimate {
        per_segment,
        session,
        session_kbps: to_kbps(session),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferSample {
    pub t: f64,
    pub buffered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferTrajectory {
    pub samples: Vec<BufferSample>,
    pub playout_start: f64,
    pub encode_rate_used: f64,
}

impl BufferTrajectory {
    /// Buffered bytes at `t`, read from the last sample at or before `t`.
    pub fn level_at(&self, t: f64) -> Option<f64> {
        let i = self.samples.partition_point(|s| s.t <= t);
        (i > 0).then(|| self.samples[i - 1].buffered)
    }
}

/// Downloaded bytes minus played-out bytes, sampled every `delta_t` from the
/// first packet. Sampling continues past the last packet until the buffer
/// has drained, so the depletion tail is visible.
pub fn estimate_buffer(records: &[PacketRecord], delta_t: f64, encode_rate: f64, playout_start: f64) -> BufferTrajectory {
    let mut samples = Vec::new();
    if let (Some(first), Some(last), true) = (records.first(), records.last(), encode_rate > 0.0) {
        let origin = first.t;
        let mut cumulative = 0u64;
        let mut next = 0;
        let mut k = 1usize;
        loop {
            let t = origin + k as f64 * delta_t;
            while next < records.len() && records[next].t < t {
                cumulative += u64::from(records[next].size);
                next += 1;
            }
            let played = encode_rate * (t - playout_start).max(0.0);
            let buffered = (cumulative as f64 - played).max(0.0);
            samples.push(BufferSample { t, buffered });
            if t > last.t && buffered == 0.0 {
                break;
            }
            k += 1;
        }
    }
    BufferTrajectory {
        samples,
        playout_start,
        encode_rate_used: encode_rate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub phase: Phase,
    pub segments: usize,
    pub volume: u64,
    pub duration: f64,
    pub mean_rate: f64,
    pub mean_rate_kbps: f64,
}

pub fn phase_stats(segments: &[PhaseSegment]) -> Vec<PhaseStats> {
    Phase::ALL
        .iter()
        .map(|&phase| {
            let of_phase = segments.iter().filter(|s| s.phase == phase);
            let (count, volume, duration) = of_phase.fold((0, 0u64, 0.0), |(n, v, d), s| (n + 1, v + s.volume, d + s.duration));
            let mean_rate = if duration > 0.0 { volume as f64 / duration } else { 0.0 };
            PhaseStats {
                phase,
                segments: count,
                volume,
                duration,
                mean_rate,
                mean_rate_kbps: to_kbps(mean_rate),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedRateChange {
    pub t: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub units: String,
    pub packets: usize,
    pub bytes: u64,
    pub span: Option<(f64, f64)>,
    pub segments: Vec<PhaseSegment>,
    pub verdict: StreamVerdict,
    pub rate_estimate: Option<RateEstimate>,
    pub buffer: Option<BufferTrajectory>,
    pub phase_stats: Vec<PhaseStats>,
    pub rate_events: Vec<TimedRateChange>,
    pub candidates: Vec<Candidate>,
}

impl ProfileReport {
    pub fn count(&self, phase: Phase) -> usize {
        self.segments.iter().filter(|s| s.phase == phase).count()
    }
}

/// Report plus the intermediate series, for debug dumps.
#[derive(Debug, Clone)]
pub struct Profile {
    pub report: ProfileReport,
    pub rate_series: RateSeries,
    pub bursts: Vec<Burst>,
}

/// Profiles one flow. Records must be ordered by arrival time; they are not
/// re-timed, so absolute times carry through to the report.
pub fn profile(records: &[PacketRecord], params: &ProfileParams) -> ProfileReport {
    profile_detailed(records, params).report
}

pub fn profile_detailed(records: &[PacketRecord], params: &ProfileParams) -> Profile {
    debug_assert!(records.windows(2).all(|w| w[0].t <= w[1].t), "records must be time-ordered");
    let rate_series = RateSeries::compute(records, &params.rate, params.burst.h_t);
    let bursts = burst::detect(records, &params.burst, params.rate.delta_t);
    let candidates = burst::confirm_steady(&bursts, params.burst.h_n);
    let timed = rate_series.timed_events();

    let span = records.first().zip(records.last()).map(|(a, b)| (a.t, b.t));
    let segments = match span {
        Some(span) => attach_stats(&fuse(&timed, &candidates, span, &params.fusion), records),
        None => Vec::new(),
    };
    let verdict = detect_stream(&segments);
    let rate_estimate = estimate_rate(&segments);
    let buffer = match (&rate_estimate, span) {
        (Some(est), Some((origin, _))) => {
            let playout_start = default_playout_start(records, origin, params);
            Some(estimate_buffer(records, params.rate.delta_t, est.session, playout_start))
        }
        _ => None,
    };
    let report = ProfileReport {
        units: UNITS_NOTE.to_string(),
        packets: records.len(),
        bytes: records.iter().map(|r| u64::from(r.size)).sum(),
        span,
        phase_stats: phase_stats(&segments),
        segments,
        verdict,
        rate_estimate,
        buffer,
        rate_events: timed.iter().map(|&(t, direction)| TimedRateChange { t, direction }).collect(),
        candidates,
    };
    Profile {
        report,
        rate_series,
        bursts,
    }
}

/// End of the first rate bin that holds data, plus the configured startup delay.
fn default_playout_start(records: &[PacketRecord], origin: f64, params: &ProfileParams) -> f64 {
    let dt = params.rate.delta_t;
    let first_bin = records
        .first()
        .map_or(0.0, |r| ((r.t - origin) / dt).floor());
    origin + (first_bin + 1.0) * dt + params.fusion.startup_delay
}

/// Packet-at-a-time front end over [`profile`].
///
/// Queries never mutate state. A packet arriving after `silence_timeout` of
/// idle time closes the running session and starts a new one.
#[derive(Debug, Clone)]
pub struct StreamProfiler {
    params: ProfileParams,
    records: Vec<PacketRecord>,
    completed: Vec<ProfileReport>,
}

impl StreamProfiler {
    pub fn new(params: ProfileParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            records: Vec::new(),
            completed: Vec::new(),
        })
    }

    pub fn push(&mut self, record: PacketRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.t < last.t {
                return Err(Error::OutOfOrder { t: record.t, last: last.t });
            }
            if record.t - last.t >= self.params.fusion.silence_timeout {
                let finished = std::mem::take(&mut self.records);
                self.completed.push(profile(&finished, &self.params));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn session_ended(&self, now: f64) -> bool {
        self.records
            .last()
            .is_some_and(|r| now - r.t >= self.params.fusion.silence_timeout)
    }

    pub fn current(&self) -> ProfileReport {
        profile(&self.records, &self.params)
    }

    pub fn segments(&self) -> Vec<PhaseSegment> {
        self.current().segments
    }

    pub fn completed_sessions(&self) -> &[ProfileReport] {
        &self.completed
    }

    pub fn packets(&self) -> usize {
        self.records.len()
    }
}
