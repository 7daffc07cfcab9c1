//! Property checks shared by the proptest suite and the acceptance runner.
#![allow(dead_code)]

use hasprof::burst::{self, BurstParams};
use hasprof::eval::{confusion, nrmse};
use hasprof::profile::{fuse, profile, FusionParams, PhaseInterval, ProfileParams};
use hasprof::rate::{aggregate, detect_changes, smooth, smooth_from, Direction};
use hasprof::synth::{generate, GeneratorDefaults, LabeledTrace, ScenarioSpec, PRESETS};
use hasprof::trace::{FlowKey, PacketRecord, Phase};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type Check = Result<(), TestCaseError>;

pub fn flow(i: u8) -> FlowKey {
    FlowKey::new(format!("10.0.0.{i}").parse().unwrap(), "192.168.1.2".parse().unwrap(), Some(443))
}

/// Time-ordered packets: random gaps (some longer than the default IAT
/// threshold) and payload sizes.
pub fn packets() -> impl Strategy<Value = Vec<PacketRecord>> {
    (0.0..1000.0f64, prop::collection::vec((0.0..3.0f64, 1u32..3000), 1..400)).prop_map(|(t0, steps)| {
        let mut t = t0;
        steps
            .into_iter()
            .map(|(gap, size)| {
                t += gap;
                PacketRecord { t, size, flow: flow(1) }
            })
            .collect()
    })
}

pub fn rate_events() -> impl Strategy<Value = Vec<(f64, Direction)>> {
    prop::collection::vec((0.0..1500.0f64, any::<bool>()), 0..12).prop_map(|raw| {
        let mut events: Vec<(f64, Direction)> = raw
            .into_iter()
            .map(|(t, up)| (t, if up { Direction::Increase } else { Direction::Decrease }))
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        events
    })
}

pub fn preset() -> impl Strategy<Value = &'static str> {
    prop::sample::select(PRESETS.to_vec())
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn scenario(name: &str, seed: u64) -> LabeledTrace {
    generate(&ScenarioSpec::preset(name, seed, &GeneratorDefaults::default()).unwrap()).unwrap()
}

pub fn conservation(recs: &[PacketRecord], dt: f64, tail: f64) -> Check {
    let rho = aggregate(recs, dt, tail);
    let total: u64 = recs.iter().map(|r| u64::from(r.size)).sum();
    let recovered: f64 = rho.iter().map(|x| x * dt).sum();
    prop_assert!(rel_close(recovered, total as f64, 1e-6), "{recovered} vs {total}");
    Ok(())
}

pub fn fixed_point(level: f64, n: usize, a: f64) -> Check {
    let out = smooth(&vec![level; n], a);
    prop_assert!(out.iter().all(|&x| rel_close(x, level, 1e-12)));
    Ok(())
}

/// Zero seed, constant input from bin 2 on: `r_k = step * (1 - (1-a)^(k-1))`.
pub fn step_response(step: f64, n: usize, a: f64) -> Check {
    let out = smooth_from(&vec![step; n], a, 0.0);
    for (i, &r) in out.iter().enumerate() {
        let expect = step * (1.0 - (1.0 - a).powi(i as i32));
        prop_assert!((r - expect).abs() <= 1e-9 * step, "bin {}: {r} vs {expect}", i + 1);
    }
    Ok(())
}

/// Replays the flag recursion branch by branch against the detector output.
pub fn flag_branches(r: &[f64], c: f64) -> Check {
    let det = detect_changes(r, c);
    let mut prev_flag = -1i8;
    let mut max = f64::NEG_INFINITY;
    let mut events = det.events.iter();
    for (i, &x) in r.iter().enumerate() {
        max = max.max(x);
        let brute = r[..=i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(det.running_max[i], brute);
        let up = prev_flag == -1 && x > c * max;
        let down = prev_flag == 1 && x < (1.0 - c) * max;
        prop_assert!(!(up && down));
        let flag = det.flags[i];
        prop_assert!(flag == 1 || flag == -1);
        if up || down {
            prop_assert_eq!(flag, -prev_flag);
            let e = events.next().ok_or_else(|| TestCaseError::fail("flip without event"))?;
            prop_assert_eq!(e.bin, i + 1);
            prop_assert_eq!(e.direction, if up { Direction::Increase } else { Direction::Decrease });
        } else {
            prop_assert_eq!(flag, prev_flag);
        }
        prev_flag = flag;
    }
    prop_assert!(events.next().is_none());
    for w in det.events.windows(2) {
        prop_assert_ne!(w[0].direction, w[1].direction);
    }
    if let Some(first) = det.events.first() {
        prop_assert_eq!(first.direction, Direction::Increase);
    }
    Ok(())
}

pub fn partition(recs: &[PacketRecord], h_t: f64) -> Check {
    let bursts = burst::segment(recs, h_t, 0.1);
    let mut next = 0;
    for b in &bursts {
        prop_assert_eq!(b.packets.start, next);
        prop_assert!(b.packets.end > b.packets.start);
        next = b.packets.end;
        let members = &recs[b.packets.clone()];
        prop_assert_eq!(b.size, members.iter().map(|r| u64::from(r.size)).sum::<u64>());
        prop_assert!(members.windows(2).all(|w| w[1].t - w[0].t < h_t));
    }
    prop_assert_eq!(next, recs.len());
    for w in bursts.windows(2) {
        prop_assert!(w[1].t_start - w[0].t_end >= h_t);
    }
    Ok(())
}

/// Raising `h_s` or `h_n` never adds bursts or steady coverage.
pub fn threshold_monotonicity(recs: &[PacketRecord], h_s: f64, extra: f64, h_n: usize) -> Check {
    let raw = burst::segment(recs, 1.5, 0.1);
    let loose = burst::filter_small(raw.clone(), h_s);
    let strict = burst::filter_small(raw, h_s + extra);
    prop_assert!(strict.len() <= loose.len());
    let loose_spans: Vec<(f64, f64)> = loose.iter().map(|b| (b.t_start, b.t_end)).collect();
    prop_assert!(strict.iter().all(|b| loose_spans.contains(&(b.t_start, b.t_end))));

    let classified = burst::detect(recs, &BurstParams { h_s, ..Default::default() }, 0.1);
    let steady_bursts = |n: usize| -> usize {
        burst::confirm_steady(&classified, n)
            .iter()
            .filter(|c| c.phase == Phase::SteadyState)
            .map(|c| c.last_burst - c.first_burst + 1)
            .sum()
    };
    prop_assert!(steady_bursts(h_n + 1) <= steady_bursts(h_n));
    Ok(())
}

pub fn tiling(recs: &[PacketRecord], events: &[(f64, Direction)], tol: f64) -> Check {
    let loose = BurstParams { h_s: 0.0, h_n: 1, ..Default::default() };
    let cands = burst::confirm_steady(&burst::detect(recs, &loose, 0.1), 1);
    let span = (recs[0].t, recs[recs.len() - 1].t);
    let params = FusionParams { match_tolerance: tol, ..Default::default() };
    let segs = fuse(events, &cands, span, &params);
    if span.1 > span.0 {
        prop_assert_eq!(segs.first().unwrap().t_start, span.0);
        prop_assert_eq!(segs.last().unwrap().t_end, span.1);
    } else {
        prop_assert!(segs.is_empty());
    }
    for s in &segs {
        prop_assert!(s.t_end > s.t_start);
    }
    for w in segs.windows(2) {
        prop_assert_eq!(w[0].t_end, w[1].t_start);
        prop_assert!(!(w[0].phase == Phase::Other && w[1].phase == Phase::Other));
    }
    Ok(())
}

pub fn nrmse_scale(pairs: &[(f64, f64)], k: f64) -> Check {
    let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(e, r)| (e * k, r * k)).collect();
    prop_assert!(rel_close(nrmse(pairs).unwrap(), nrmse(&scaled).unwrap(), 1e-9));
    Ok(())
}

pub fn determinism(name: &str, seed: u64) -> Check {
    let a = scenario(name, seed);
    let b = scenario(name, seed);
    prop_assert_eq!(&a, &b);
    let params = ProfileParams::default();
    prop_assert_eq!(profile(&a.trace.records, &params), profile(&b.trace.records, &params));
    Ok(())
}

pub fn time_shift(name: &str, seed: u64, shift: f64) -> Check {
    let lt = scenario(name, seed);
    let shifted: Vec<PacketRecord> = lt.trace.records.iter().map(|r| PacketRecord { t: r.t + shift, ..*r }).collect();
    let params = ProfileParams::default();
    let base = profile(&lt.trace.records, &params);
    let moved = profile(&shifted, &params);
    prop_assert_eq!(base.segments.len(), moved.segments.len());
    for (a, b) in base.segments.iter().zip(&moved.segments) {
        prop_assert_eq!(a.phase, b.phase);
        prop_assert!((a.t_start + shift - b.t_start).abs() < 1e-6);
        prop_assert!((a.t_end + shift - b.t_end).abs() < 1e-6);
        prop_assert_eq!(a.volume, b.volume);
    }
    Ok(())
}

pub fn truth_vs_truth(name: &str, seed: u64) -> Check {
    let lt = scenario(name, seed);
    let as_pred: Vec<PhaseInterval> =
        lt.labels.iter().map(|l| PhaseInterval { phase: l.phase, t_start: l.t_start, t_end: l.t_end }).collect();
    let m = confusion(&as_pred, &lt.labels).unwrap();
    prop_assert_eq!(m.off_diagonal(), 0.0);
    let span = lt.labels.last().unwrap().t_end - lt.labels[0].t_start;
    prop_assert!((m.total() - span).abs() < 1e-9 * span);
    let pairs: Vec<(f64, f64)> = lt.steady_truth().iter().map(|(_, r)| (*r, *r)).collect();
    prop_assert_eq!(nrmse(&pairs).unwrap(), 0.0);
    Ok(())
}
