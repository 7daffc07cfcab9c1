//! Burst-based phase candidates.
//!
//! Packets are grouped into bursts wherever the inter-arrival time stays below
//! `h_t`. Bursts smaller than `h_s` are dropped, the rest are classified by
//! duration and by rate relative to the first retained burst, and runs of
//! short bursts confirm a steady state.

use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{PacketRecord, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstParams {
    /// IAT gap that separates bursts, seconds.
    pub h_t: f64,
    /// Duration at or above which a burst counts as filling, seconds.
    pub h_d: f64,
    /// Minimum rate relative to the first burst, in (0, 1).
    pub h_r: f64,
    /// Minimum burst size in bytes.
    pub h_s: f64,
    /// Consecutive steady bursts needed to confirm a steady state.
    pub h_n: usize,
}

impl Default for BurstParams {
    fn default() -> Self {
        Self {
            h_t: 1.5,
            h_d: 5.0,
            h_r: 0.3,
            h_s: 20_000.0,
            h_n: 3,
        }
    }
}

impl BurstParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, "must be > 0"))
            }
        };
        positive(self.h_t, "h_t")?;
        positive(self.h_d, "h_d")?;
        positive(self.h_s, "h_s")?;
        if !(self.h_r > 0.0 && self.h_r < 1.0) {
            return Err(Error::param("h_r", "must lie in (0, 1)"));
        }
        if self.h_n == 0 {
            return Err(Error::param("h_n", "must be >= 1"));
        }
        Ok(())
    }
}

/// Rule-based burst class: +1 filling-like, -1 steady-like, 0 neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurstClass {
    Filling,
    Steady,
    #[default]
    Unclassified,
}

impl BurstClass {
    pub fn value(self) -> i8 {
        match self {
            BurstClass::Filling => 1,
            BurstClass::Steady => -1,
            BurstClass::Unclassified => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    /// 1-based position in its sequence.
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub size: u64,
    pub duration: f64,
    /// Bytes/s, using `max(duration, floor)` as the denominator.
    pub rate: f64,
    pub class: BurstClass,
    /// Member packets as a range into the segmented slice.
    pub packets: Range<usize>,
}

/// Splits a time-ordered packet slice wherever the gap is `>= h_t`.
/// `duration_floor` keeps the rate of single-packet bursts finite.
pub fn segment(records: &[PacketRecord], h_t: f64, duration_floor: f64) -> Vec<Burst> {
    let mut bursts = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        let split = i == records.len() || records[i].t - records[i - 1].t >= h_t;
        if split && i > start {
            let members = &records[start..i];
            let t_start = members[0].t;
            let t_end = members[members.len() - 1].t;
            let size: u64 = members.iter().map(|r| u64::from(r.size)).sum();
            let duration = t_end - t_start;
            bursts.push(Burst {
                index: bursts.len() + 1,
                t_start,
                t_end,
                size,
                duration,
                rate: size as f64 / duration.max(duration_floor),
                class: BurstClass::Unclassified,
                packets: start..i,
            });
            start = i;
        }
    }
    bursts
}

pub fn filter_small(bursts: Vec<Burst>, h_s: f64) -> Vec<Burst> {
    bursts
        .into_iter()
        .filter(|b| b.size as f64 >= h_s)
        .enumerate()
        .map(|(i, b)| Burst { index: i + 1, ..b })
        .collect()
}

/// Assigns classes against the rate of the first burst in `bursts`.
pub fn classify(mut bursts: Vec<Burst>, params: &BurstParams) -> Vec<Burst> {
    let Some(reference) = bursts.first().map(|b| b.rate) else {
        return bursts;
    };
    for b in &mut bursts {
        b.class = classify_one(b.duration, b.rate, reference, params);
    }
    bursts
}

pub fn classify_one(duration: f64, rate: f64, reference_rate: f64, params: &BurstParams) -> BurstClass {
    if rate < params.h_r * reference_rate {
        BurstClass::Unclassified
    } else if duration >= params.h_d {
        BurstClass::Filling
    } else {
        BurstClass::Steady
    }
}

/// A phase proposed by the burst method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub phase: Phase,
    pub t_start: f64,
    pub t_end: f64,
    /// Burst indices covered, 1-based and inclusive.
    pub first_burst: usize,
    pub last_burst: usize,
}

/// Adjacent filling bursts merge into one candidate; runs of at least `h_n`
/// steady bursts form a steady candidate. Everything else is dropped.
pub fn confirm_steady(bursts: &[Burst], h_n: usize) -> Vec<Candidate> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < bursts.len() {
        let class = bursts[i].class;
        let mut j = i;
        while j + 1 < bursts.len() && bursts[j + 1].class == class {
            j += 1;
        }
        let run = &bursts[i..=j];
        let phase = match class {
            BurstClass::Filling => Some(Phase::Filling),
            BurstClass::Steady if run.len() >= h_n => Some(Phase::SteadyState),
            _ => None,
        };
        if let Some(phase) = phase {
            out.push(Candidate {
                phase,
                t_start: run[0].t_start,
                t_end: run[run.len() - 1].t_end,
                first_burst: run[0].index,
                last_burst: run[run.len() - 1].index,
            });
        }
        i = j + 1;
    }
    out
}

/// Segmentation, small-burst filtering and classification in one pass.
pub fn detect(records: &[PacketRecord], params: &BurstParams, duration_floor: f64) -> Vec<Burst> {
    let raw = segment(records, params.h_t, duration_floor);
    classify(filter_small(raw, params.h_s), params)
}

/// Debug dump: `n,t_start,t_end,size,duration,rate,klass`.
pub fn write_bursts_csv<W: Write>(bursts: &[Burst], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.into());
    w.write_record(["n", "t_start", "t_end", "size", "duration", "rate", "klass"])
        .map_err(csv_err)?;
    for b in bursts {
        w.write_record([
            b.index.to_string(),
            b.t_start.to_string(),
            b.t_end.to_string(),
            b.size.to_string(),
            b.duration.to_string(),
            b.rate.to_string(),
            b.class.value().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::FlowKey;

    fn pkts(times: &[f64], size: u32) -> Vec<PacketRecord> {
        let flow = FlowKey::new("10.0.0.1".parse().unwrap(), "10.0.0.2".parse().unwrap(), None);
        times.iter().map(|&t| PacketRecord { t, size, flow }).collect()
    }

    fn burst(index: usize, t_start: f64, duration: f64, size: u64, class: BurstClass) -> Burst {
        Burst {
            index,
            t_start,
            t_end: t_start + duration,
            size,
            duration,
            rate: size as f64 / duration.max(0.1),
            class,
            packets: 0..0,
        }
    }

    #[test]
    fn gap_at_threshold_splits() {
        let b = segment(&pkts(&[0.0, 0.5, 1.0, 3.0], 100), 1.5, 0.1);
        assert_eq!(b.len(), 2);
        assert_eq!((b[0].t_start, b[0].t_end, b[0].packets.clone()), (0.0, 1.0, 0..3));
        assert_eq!((b[1].t_start, b[1].t_end, b[1].packets.clone()), (3.0, 3.0, 3..4));
        assert_eq!(b[1].duration, 0.0);
        assert!((b[1].rate - 1000.0).abs() < 1e-9);

        assert_eq!(segment(&pkts(&[0.0, 1.4, 2.8], 100), 1.5, 0.1).len(), 1);
        assert_eq!(segment(&pkts(&[0.0, 1.5], 100), 1.5, 0.1).len(), 2);
        assert!(segment(&[], 1.5, 0.1).is_empty());
    }

    #[test]
    fn small_bursts_are_dropped_and_reindexed() {
        let c = BurstClass::Unclassified;
        let bursts = vec![burst(1, 0.0, 1.0, 25_000, c), burst(2, 5.0, 1.0, 4_000, c), burst(3, 9.0, 1.0, 100_000, c)];
        let kept = filter_small(bursts.clone(), 20_000.0);
        assert_eq!(kept.iter().map(|b| (b.index, b.size)).collect::<Vec<_>>(), vec![(1, 25_000), (2, 100_000)]);
        assert!(filter_small(bursts.clone(), 1e6).is_empty());
        let all = filter_small(bursts.clone(), 1.0);
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn classification_branches() {
        let p = BurstParams::default();
        let reference = 4e6;
        assert_eq!(classify_one(6.0, 2e6, reference, &p), BurstClass::Filling);
        assert_eq!(classify_one(2.0, 2e6, reference, &p), BurstClass::Steady);
        assert_eq!(classify_one(2.0, 0.3e6, reference, &p), BurstClass::Unclassified);
        assert_eq!(classify_one(6.0, 1.19e6, reference, &p), BurstClass::Unclassified);
        assert!(classify(Vec::new(), &p).is_empty());
    }

    #[test]
    fn first_burst_is_classified_by_duration_alone() {
        let p = BurstParams::default();
        let c = BurstClass::Unclassified;
        let long = classify(vec![burst(1, 0.0, 10.0, 20e6 as u64, c)], &p);
        assert_eq!(long[0].class, BurstClass::Filling);
        let short = classify(vec![burst(1, 0.0, 1.0, 1e6 as u64, c)], &p);
        assert_eq!(short[0].class, BurstClass::Steady);
    }

    fn with_classes(classes: &[BurstClass]) -> Vec<Burst> {
        classes
            .iter()
            .enumerate()
            .map(|(i, &c)| burst(i + 1, i as f64 * 5.0, 1.0, 100_000, c))
            .collect()
    }

    #[test]
    fn steady_confirmation() {
        use BurstClass::*;
        let cands = confirm_steady(&with_classes(&[Filling, Steady, Steady, Steady]), 3);
        assert_eq!(cands.len(), 2);
        assert_eq!(cands[0].phase, Phase::Filling);
        assert_eq!((cands[1].phase, cands[1].first_burst, cands[1].last_burst), (Phase::SteadyState, 2, 4));
        assert_eq!((cands[1].t_start, cands[1].t_end), (5.0, 16.0));

        let broken = confirm_steady(&with_classes(&[Filling, Steady, Steady, Unclassified, Steady]), 3);
        assert_eq!(broken.len(), 1);
        assert_eq!(broken[0].phase, Phase::Filling);
    }

    #[test]
    fn adjacent_filling_bursts_merge() {
        use BurstClass::*;
        let cands = confirm_steady(&with_classes(&[Filling, Filling, Steady, Filling]), 3);
        assert_eq!(cands.len(), 2);
        assert_eq!((cands[0].first_burst, cands[0].last_burst), (1, 2));
        assert_eq!((cands[1].first_burst, cands[1].last_burst), (4, 4));
    }

    #[test]
    fn params_validation() {
        assert!(BurstParams::default().validate().is_ok());
        assert!(BurstParams { h_r: 1.0, ..Default::default() }.validate().is_err());
        assert!(BurstParams { h_n: 0, ..Default::default() }.validate().is_err());
        assert!(BurstParams { h_t: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn dump_uses_signed_classes() {
        let mut buf = Vec::new();
        write_bursts_csv(&with_classes(&[BurstClass::Steady]), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,t_start,t_end,size,duration,rate,klass\n"));
        assert!(text.trim_end().ends_with(",-1"));
    }
}
