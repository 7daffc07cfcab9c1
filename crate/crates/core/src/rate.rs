//! Rate-based change detection.
//!
//! Payload bytes are binned into fixed intervals to obtain a streaming rate,
//! smoothed with a first-order recursive low-pass filter, and compared against
//! the running maximum of the smoothed rate. A flag starting at -1 flips to +1
//! when the smoothed rate exceeds `c * max` and back to -1 when it falls below
//! `(1 - c) * max`; every flip is a rate-change event.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::PacketRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateParams {
    /// Bin width in seconds.
    pub delta_t: f64,
    /// Attenuation factor of the smoothing filter, in (0, 1].
    pub a: f64,
    /// Change threshold factor, in (0.5, 1).
    pub c: f64,
}

impl Default for RateParams {
    fn default() -> Self {
        Self {
            delta_t: 0.1,
            a: 0.02,
            c: 0.6,
        }
    }
}

impl RateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return Err(Error::param("delta_t", "must be > 0"));
        }
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::param("a", "must lie in (0, 1]"));
        }
        if !(self.c > 0.5 && self.c < 1.0) {
            return Err(Error::param("c", "must lie in (0.5, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increase,
    Decrease,
}

/// A flag flip at a given 1-based bin index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateChange {
    pub bin: usize,
    pub direction: Direction,
}

/// Per-bin rate in bytes/s. Bins are `[(t-1)dt, t*dt)` relative to the first
/// packet and extend `tail` seconds past the last one.
pub fn aggregate(records: &[PacketRecord], delta_t: f64, tail: f64) -> Vec<f64> {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Vec::new();
    };
    let origin = first.t;
    // Bin index with a little slack so that k*dt lands in bin k+1 despite rounding.
    let index = |offset: f64| (offset / delta_t + 1e-9).floor().max(0.0) as usize;
    let n_bins = index(last.t - origin + tail.max(0.0)) + 1;
    let mut bytes = vec![0u64; n_bins];
    for r in records {
        let bin = index(r.t - origin).min(n_bins - 1);
        bytes[bin] += u64::from(r.size);
    }
    bytes.into_iter().map(|b| b as f64 / delta_t).collect()
}

/// Smoothing seeded with the first observation.
pub fn smooth(rho: &[f64], a: f64) -> Vec<f64> {
    match rho.first() {
        Some(&seed) => smooth_from(rho, a, seed),
        None => Vec::new(),
    }
}

/// Smoothing with an explicit value for the first bin.
pub fn smooth_from(rho: &[f64], a: f64, seed: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(rho.len());
    let mut prev = seed;
    for (i, &x) in rho.iter().enumerate() {
        if i > 0 {
            prev = (1.0 - a) * prev + a * x;
        }
        out.push(prev);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChangeDetection {
    pub flags: Vec<i8>,
    pub running_max: Vec<f64>,
    pub events: Vec<RateChange>,
}

/// One step of the flag recursion.
pub fn next_flag(prev: i8, smoothed: f64, running_max: f64, c: f64) -> i8 {
    if prev == -1 && smoothed > c * running_max {
        1
    } else if prev == 1 && smoothed < (1.0 - c) * running_max {
        -1
    } else {
        prev
    }
}

pub fn detect_changes(r_smooth: &[f64], c: f64) -> ChangeDetection {
    let mut det = ChangeDetection {
        flags: Vec::with_capacity(r_smooth.len()),
        running_max: Vec::with_capacity(r_smooth.len()),
        events: Vec::new(),
    };
    let mut flag = -1i8;
    let mut max = f64::NEG_INFINITY;
    for (i, &r) in r_smooth.iter().enumerate() {
        max = max.max(r);
        let next = next_flag(flag, r, max, c);
        if next != flag {
            det.events.push(RateChange {
                bin: i + 1,
                direction: if next == 1 { Direction::Increase } else { Direction::Decrease },
            });
        }
        flag = next;
        det.flags.push(flag);
        det.running_max.push(max);
    }
    det
}

/// The full rate-method output for one flow.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries {
    /// Absolute time of the start of bin 1.
    pub origin: f64,
    pub delta_t: f64,
    pub rho: Vec<f64>,
    pub r_smooth: Vec<f64>,
    pub r_smooth_max: Vec<f64>,
    pub flags: Vec<i8>,
    pub events: Vec<RateChange>,
}

impl RateSeries {
    pub fn compute(records: &[PacketRecord], params: &RateParams, tail: f64) -> Self {
        let rho = aggregate(records, params.delta_t, tail);
        let r_smooth = smooth(&rho, params.a);
        let det = detect_changes(&r_smooth, params.c);
        Self {
            origin: records.first().map_or(0.0, |r| r.t),
            delta_t: params.delta_t,
            rho,
            r_smooth,
            r_smooth_max: det.running_max,
            flags: det.flags,
            events: det.events,
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// Start time of a 1-based bin.
    pub fn bin_start(&self, bin: usize) -> f64 {
        self.origin + (bin.saturating_sub(1)) as f64 * self.delta_t
    }

    /// Events paired with the start time of the bin where the flag flipped.
    pub fn timed_events(&self) -> Vec<(f64, Direction)> {
        self.events.iter().map(|e| (self.bin_start(e.bin), e.direction)).collect()
    }

    /// Debug dump: `bin,rho,r_smooth,r_smooth_max,flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(e.into());
        w.write_record(["bin", "rho", "r_smooth", "r_smooth_max", "flag"]).map_err(csv_err)?;
        for i in 0..self.len() {
            w.write_record([
                (i + 1).to_string(),
                self.rho[i].to_string(),
                self.r_smooth[i].to_string(),
                self.r_smooth_max[i].to_string(),
                self.flags[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}
