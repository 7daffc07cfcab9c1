//! Scoring profiler output against generator ground truth.
//!
//! Confusion is time-weighted: entry `(i, j)` holds the seconds during which
//! the true phase was `i` and the identified phase was `j`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{profile, PhaseInterval, ProfileParams, ProfileReport, UNITS_NOTE};
use crate::synth::{generate, generate_bulk, GeneratorDefaults, LabeledTrace, ScenarioSpec, PRESETS};
use crate::trace::{Phase, PhaseLabel};

const SPAN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Rows are true phases, columns identified phases, both in
    /// filling / steady_state / other order.
    pub seconds: [[f64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> f64 {
        self.seconds.iter().flatten().sum()
    }

    pub fn row_total(&self, truth: Phase) -> f64 {
        self.seconds[truth.index()].iter().sum()
    }

    /// Row-normalized percentages; `None` for phases absent from the truth.
    pub fn percentages(&self) -> [Option<[f64; 3]>; 3] {
        let mut out = [None; 3];
        for (i, row) in self.seconds.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                out[i] = Some(row.map(|v| 100.0 * v / total));
            }
        }
        out
    }

    pub fn diagonal_pct(&self, truth: Phase) -> Option<f64> {
        self.percentages()[truth.index()].map(|row| row[truth.index()])
    }

    pub fn off_diagonal(&self) -> f64 {
        self.total() - (0..3).map(|i| self.seconds[i][i]).sum::<f64>()
    }

    pub fn accumulate(&mut self, other: &ConfusionMatrix) {
        for i in 0..3 {
            for j in 0..3 {
                self.seconds[i][j] += other.seconds[i][j];
            }
        }
    }
}

/// Intersects two tilings of the same span.
pub fn confusion(predicted: &[PhaseInterval], truth: &[PhaseLabel]) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::default();
    match (predicted.first(), predicted.last(), truth.first(), truth.last()) {
        (None, None, None, None) => return Ok(m),
        (Some(p0), Some(p1), Some(t0), Some(t1)) => {
            if (p0.t_start - t0.t_start).abs() > SPAN_TOLERANCE || (p1.t_end - t1.t_end).abs() > SPAN_TOLERANCE {
                return Err(Error::SpanMismatch {
                    pred_start: p0.t_start,
                    pred_end: p1.t_end,
                    true_start: t0.t_start,
                    true_end: t1.t_end,
                });
            }
        }
        _ => {
            let span = |a: Option<f64>, b: Option<f64>| (a.unwrap_or(f64::NAN), b.unwrap_or(f64::NAN));
            let (pred_start, pred_end) = span(predicted.first().map(|p| p.t_start), predicted.last().map(|p| p.t_end));
            let (true_start, true_end) = span(truth.first().map(|p| p.t_start), truth.last().map(|p| p.t_end));
            return Err(Error::SpanMismatch { pred_start, pred_end, true_start, true_end });
        }
    }
    let (mut i, mut j) = (0, 0);
    while i < predicted.len() && j < truth.len() {
        let p = &predicted[i];
        let t = &truth[j];
        let overlap = p.t_end.min(t.t_end) - p.t_start.max(t.t_start);
        if overlap > 0.0 {
            m.seconds[t.phase.index()][p.phase.index()] += overlap;
        }
        if p.t_end < t.t_end {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(m)
}

/// Offset of the identified transition into the same phase nearest to a
/// true phase transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryError {
    pub t_true: f64,
    pub from: Phase,
    pub to: Phase,
    /// `identified - true` in seconds; `None` when no transition into `to`
    /// was identified.
    pub error: Option<f64>,
}

pub fn boundary_errors(predicted: &[PhaseInterval], truth: &[PhaseLabel]) -> Vec<BoundaryError> {
    let identified: Vec<(f64, Phase)> = predicted.windows(2).map(|w| (w[1].t_start, w[1].phase)).collect();
    truth
        .windows(2)
        .map(|w| {
            let (t_true, to) = (w[1].t_start, w[1].phase);
            let error = identified
                .iter()
                .filter(|(_, p)| *p == to)
                .map(|(t, _)| t - t_true)
                .min_by(|a, b| a.abs().total_cmp(&b.abs()));
            BoundaryError { t_true, from: w[0].phase, to, error }
        })
        .collect()
}

/// Root-mean-square error normalized by the mean true value.
pub fn nrmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("nrmse needs at least one (estimate, truth) pair"));
    }
    if pairs.iter().any(|&(_, r)| r.is_nan() || r <= 0.0) {
        return Err(Error::param("r_true", "true rates must be > 0"));
    }
    let n = pairs.len() as f64;
    let mse = pairs.iter().map(|&(e, r)| (e - r).powi(2)).sum::<f64>() / n;
    let mean_true = pairs.iter().map(|&(_, r)| r).sum::<f64>() / n;
    Ok(mse.sqrt() / mean_true)
}

/// Empirical CDF as sorted `(value, quantile)` points.
pub fn empirical_cdf(values: &[f64]) -> Vec<CdfPoint> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, value)| CdfPoint { value, quantile: (i + 1) as f64 / n })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    pub quantile: f64,
}

pub fn write_cdf_csv<W: Write>(points: &[CdfPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.into());
    w.write_record(["value", "quantile"]).map_err(csv_err)?;
    for p in points {
        w.write_record([p.value.to_string(), p.quantile.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Pairs every true steady phase with the identified steady segment that
/// overlaps it most (each segment used once). Unmatched phases yield `None`.
pub fn pair_steady_rates(report: &ProfileReport, truth: &LabeledTrace) -> Vec<Option<(f64, f64)>> {
    let mut used = vec![false; report.segments.len()];
    truth
        .steady_truth()
        .into_iter()
        .map(|(label, r_true)| {
            let best = report
                .segments
                .iter()
                .enumerate()
                .filter(|(i, s)| !used[*i] && s.phase == Phase::SteadyState)
                .map(|(i, s)| (i, s.t_end.min(label.t_end) - s.t_start.max(label.t_start)))
                .filter(|(_, overlap)| *overlap > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            best.map(|(i, _)| {
                used[i] = true;
                (report.segments[i].mean_rate, r_true)
            })
        })
        .collect()
}

/// What a batch generates: a named preset or bulk negative-control traffic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    Preset(String),
    Bulk,
}

impl Scenario {
    pub fn parse(name: &str) -> Result<Self> {
        let upper = name.to_ascii_uppercase();
        if upper == "BULK" {
            return Ok(Scenario::Bulk);
        }
        if PRESETS.contains(&upper.as_str()) {
            return Ok(Scenario::Preset(upper));
        }
        Err(Error::UnknownScenario {
            name: name.to_string(),
            available: format!("{}, BULK", PRESETS.join(", ")),
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Scenario::Preset(n) => n,
            Scenario::Bulk => "BULK",
        }
    }

    pub fn generate(&self, seed: u64, defaults: &GeneratorDefaults) -> Result<(LabeledTrace, Option<ScenarioSpec>)> {
        match self {
            Scenario::Preset(name) => {
                let spec = ScenarioSpec::preset(name, seed, defaults)?;
                Ok((generate(&spec)?, Some(spec)))
            }
            Scenario::Bulk => {
                let (duration, rate) = bulk_shape(seed);
                Ok((generate_bulk(duration, rate, defaults.packet_size, seed)?, None))
            }
        }
    }
}

/// Duration in [60, 600) s and rate in [0.2, 3) MB/s, derived from the seed.
fn bulk_shape(seed: u64) -> (f64, f64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xb01c);
    (rng.gen_range(60.0..600.0), rng.gen_range(0.2e6..3e6))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub filling_segments: usize,
    pub steady_segments: usize,
    pub is_video_stream: bool,
    pub confusion: ConfusionMatrix,
    /// `(estimate, truth)` per true steady phase, in order.
    pub steady_rates: Vec<Option<(f64, f64)>>,
    /// Share of the first limiting throttle window identified as `other`.
    pub throttle_other_fraction: Option<f64>,
    /// A filling segment starts after the first limiting throttle window began.
    pub refill_detected: Option<bool>,
    /// Whether the run shows the phase structure expected for its scenario.
    pub structure_ok: bool,
}

fn throttle_checks(report: &ProfileReport, spec: Option<&ScenarioSpec>) -> (Option<f64>, Option<bool>) {
    let Some(w) = spec.and_then(|s| s.throttle_windows.iter().find(|w| w.cap < s.rate_at(w.start))) else {
        return (None, None);
    };
    let other: f64 = report
        .segments
        .iter()
        .filter(|s| s.phase == Phase::Other)
        .map(|s| (s.t_end.min(w.end) - s.t_start.max(w.start)).max(0.0))
        .sum();
    let refill = report
        .segments
        .iter()
        .any(|s| s.phase == Phase::Filling && s.t_start >= w.start);
    (Some(other / (w.end - w.start)), Some(refill))
}

/// Minimum share of the throttle window that must be identified as `other`.
pub const THROTTLE_OTHER_MIN: f64 = 0.95;

pub fn evaluate_run(scenario: &Scenario, seed: u64, params: &ProfileParams, defaults: &GeneratorDefaults) -> Result<RunSummary> {
    let (lt, spec) = scenario.generate(seed, defaults)?;
    let report = profile(&lt.trace.records, params);
    let predicted: Vec<PhaseInterval> = report.segments.iter().map(|s| s.interval()).collect();
    let confusion = confusion(&predicted, &lt.labels)?;
    let steady_rates = pair_steady_rates(&report, &lt);
    let (throttle_other_fraction, refill_detected) = throttle_checks(&report, spec.as_ref());
    let filling_segments = report.count(Phase::Filling);
    let steady_segments = report.count(Phase::SteadyState);
    let is_video_stream = report.verdict.is_video_stream;

    let truth_count = |p: Phase| lt.labels.iter().filter(|l| l.phase == p).count();
    let structure_ok = match scenario {
        Scenario::Bulk => !is_video_stream,
        Scenario::Preset(_) if throttle_other_fraction.is_some() => {
            throttle_other_fraction.unwrap_or(0.0) >= THROTTLE_OTHER_MIN && refill_detected == Some(true)
        }
        Scenario::Preset(_) => {
            is_video_stream
                && filling_segments == truth_count(Phase::Filling)
                && steady_segments == truth_count(Phase::SteadyState)
        }
    };
    Ok(RunSummary {
        seed,
        filling_segments,
        steady_segments,
        is_video_stream,
        confusion,
        steady_rates,
        throttle_other_fraction,
        refill_detected,
        structure_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyRateSummary {
    /// 1-based order of the steady phase within a session.
    pub phase_index: usize,
    pub pairs: usize,
    pub missed: usize,
    pub nrmse: Option<f64>,
    pub mean_estimate: Option<f64>,
    pub mean_estimate_kbps: Option<f64>,
    pub mean_true: Option<f64>,
    pub mean_true_kbps: Option<f64>,
    pub cdf_estimated: Vec<CdfPoint>,
    pub cdf_true: Vec<CdfPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub units: String,
    pub scenario: String,
    pub runs: usize,
    pub base_seed: u64,
    pub params: ProfileParams,
    pub generator: GeneratorDefaults,
    pub confusion: ConfusionMatrix,
    pub confusion_pct: [Option<[f64; 3]>; 3],
    pub video_streams_detected: usize,
    pub structure_ok_runs: usize,
    pub steady_rates: Vec<SteadyRateSummary>,
    pub run_summaries: Vec<RunSummary>,
}

impl BatchReport {
    pub fn steady(&self, phase_index: usize) -> Option<&SteadyRateSummary> {
        self.steady_rates.iter().find(|s| s.phase_index == phase_index)
    }
}

/// Runs `n` independent sessions with seeds `base_seed..base_seed + n`.
pub fn batch_report(
    scenario: &Scenario,
    n: usize,
    base_seed: u64,
    params: &ProfileParams,
    defaults: &GeneratorDefaults,
) -> Result<BatchReport> {
    if n == 0 {
        return Err(Error::param("runs", "must be >= 1"));
    }
    params.validate()?;
    defaults.validate()?;
    let runs: Vec<RunSummary> = (0..n as u64)
        .into_par_iter()
        .map(|i| evaluate_run(scenario, base_seed + i, params, defaults))
        .collect::<Result<_>>()?;

    let mut confusion = ConfusionMatrix::default();
    for r in &runs {
        confusion.accumulate(&r.confusion);
    }
    let phases = runs.iter().map(|r| r.steady_rates.len()).max().unwrap_or(0);
    let steady_rates = (0..phases)
        .map(|k| {
            let slots: Vec<Option<(f64, f64)>> = runs.iter().filter_map(|r| r.steady_rates.get(k).copied()).collect();
            let pairs: Vec<(f64, f64)> = slots.iter().flatten().copied().collect();
            let estimates: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let truths: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            SteadyRateSummary {
                phase_index: k + 1,
                pairs: pairs.len(),
                missed: slots.len() - pairs.len(),
                nrmse: nrmse(&pairs).ok(),
                mean_estimate: mean(&estimates),
                mean_estimate_kbps: mean(&estimates).map(crate::profile::to_kbps),
                mean_true: mean(&truths),
                mean_true_kbps: mean(&truths).map(crate::profile::to_kbps),
                cdf_estimated: empirical_cdf(&estimates),
                cdf_true: empirical_cdf(&truths),
            }
        })
        .collect();

    Ok(BatchReport {
        units: UNITS_NOTE.to_string(),
        scenario: scenario.name().to_string(),
        runs: n,
        base_seed,
        params: *params,
        generator: *defaults,
        confusion_pct: confusion.percentages(),
        confusion,
        video_streams_detected: runs.iter().filter(|r| r.is_video_stream).count(),
        structure_ok_runs: runs.iter().filter(|r| r.structure_ok).count(),
        steady_rates,
        run_summaries: runs,
    })
}

/// Pass/fail limits for [`check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Minimum diagonal percentage for every phase present in the truth.
    pub min_diagonal_pct: Option<f64>,
    /// Maximum NRMSE of the first steady phase.
    pub max_nrmse: Option<f64>,
    /// Minimum share of runs with the expected phase structure.
    pub min_structure_share: Option<f64>,
}

impl Thresholds {
    /// Defaults per scenario: MQ/HQ must reach 2% NRMSE, sessions whose first
    /// steady phase is cut short by an event (QC, AQ) 3.5%.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        match scenario {
            Scenario::Bulk => Self {
                min_diagonal_pct: None,
                max_nrmse: None,
                min_structure_share: Some(1.0),
            },
            Scenario::Preset(name) => Self {
                min_diagonal_pct: Some(98.0),
                max_nrmse: Some(if matches!(name.as_str(), "QC" | "AQ") { 0.035 } else { 0.02 }),
                min_structure_share: Some(0.96),
            },
        }
    }
}

/// Human-readable descriptions of every violated threshold.
pub fn check(report: &BatchReport, thresholds: &Thresholds) -> Vec<String> {
    let mut violations = Vec::new();
    if let Some(min) = thresholds.min_diagonal_pct {
        for phase in Phase::ALL {
            if let Some(pct) = report.confusion.diagonal_pct(phase) {
                if pct < min {
                    violations.push(format!("confusion diagonal for {phase} is {pct:.3}% < {min}%"));
                }
            }
        }
    }
    if let Some(max) = thresholds.max_nrmse {
        match report.steady(1).and_then(|s| s.nrmse) {
            Some(v) if v > max => violations.push(format!("NRMSE of steady phase 1 is {v:.4} > {max}")),
            Some(_) => {}
            None => violations.push("NRMSE of steady phase 1 unavailable (no steady phase identified)".to_string()),
        }
    }
    if let Some(min) = thresholds.min_structure_share {
        let share = report.structure_ok_runs as f64 / report.runs as f64;
        if share < min {
            violations.push(format!(
                "expected phase structure in {}/{} runs, below the required share {min}",
                report.structure_ok_runs, report.runs
            ));
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(phase: Phase, a: f64, b: f64) -> PhaseInterval {
        PhaseInterval { phase, t_start: a, t_end: b }
    }

    fn label(phase: Phase, a: f64, b: f64) -> PhaseLabel {
        PhaseLabel { t_start: a, t_end: b, phase }
    }

    #[test]
    fn identity_is_diagonal() {
        let truth = [label(Phase::Filling, 0.0, 30.0), label(Phase::SteadyState, 30.0, 400.0)];
        let pred: Vec<PhaseInterval> = truth.iter().map(|l| iv(l.phase, l.t_start, l.t_end)).collect();
        let m = confusion(&pred, &truth).unwrap();
        assert_eq!(m.off_diagonal(), 0.0);
        assert_eq!(m.seconds[0][0], 30.0);
        assert_eq!(m.diagonal_pct(Phase::SteadyState), Some(100.0));
        assert_eq!(m.diagonal_pct(Phase::Other), None);
    }

    #[test]
    fn shifted_boundaries() {
        let truth = [
            label(Phase::Filling, 0.0, 100.0),
            label(Phase::SteadyState, 100.0, 200.0),
            label(Phase::Other, 200.0, 300.0),
            label(Phase::SteadyState, 300.0, 600.0),
        ];
        let pred = [
            iv(Phase::Filling, 0.0, 102.0),
            iv(Phase::SteadyState, 102.0, 202.0),
            iv(Phase::Other, 202.0, 302.0),
            iv(Phase::SteadyState, 302.0, 600.0),
        ];
        let m = confusion(&pred, &truth).unwrap();
        assert!((m.off_diagonal() - 6.0).abs() < 1e-9);
        assert!((m.total() - 600.0).abs() < 1e-9);
    }

    #[test]
    fn span_mismatch_is_an_error() {
        let truth = [label(Phase::Other, 0.0, 10.0)];
        assert!(matches!(confusion(&[iv(Phase::Other, 0.0, 9.0)], &truth), Err(Error::SpanMismatch { .. })));
        assert!(matches!(confusion(&[], &truth), Err(Error::SpanMismatch { .. })));
        assert_eq!(confusion(&[], &[]).unwrap().total(), 0.0);
    }

    #[test]
    fn percentage_rows_sum_to_hundred() {
        let truth = [label(Phase::Filling, 0.0, 7.0), label(Phase::Other, 7.0, 10.0)];
        let pred = [iv(Phase::Filling, 0.0, 3.0), iv(Phase::SteadyState, 3.0, 10.0)];
        let pct = confusion(&pred, &truth).unwrap().percentages();
        for row in pct.iter().flatten() {
            assert!((row.iter().sum::<f64>() - 100.0).abs() < 0.01);
        }
    }

    #[test]
    fn boundary_offsets() {
        let truth = [label(Phase::Filling, 0.0, 10.0), label(Phase::SteadyState, 10.0, 100.0)];
        let pred = [iv(Phase::Filling, 0.0, 10.0), iv(Phase::Other, 10.0, 13.0), iv(Phase::SteadyState, 13.0, 100.0)];
        let errs = boundary_errors(&pred, &truth);
        assert_eq!(errs.len(), 1);
        assert_eq!((errs[0].from, errs[0].to), (Phase::Filling, Phase::SteadyState));
        assert_eq!(errs[0].error, Some(3.0));
        assert_eq!(boundary_errors(&pred[..1], &truth)[0].error, None);
    }

    #[test]
    fn nrmse_values() {
        assert_eq!(nrmse(&[(5.0, 5.0), (7.0, 7.0)]).unwrap(), 0.0);
        assert!((nrmse(&[(1.02 * 80_750.0, 80_750.0)]).unwrap() - 0.02).abs() < 1e-12);
        assert!(nrmse(&[]).is_err());
        assert!(nrmse(&[(1.0, 0.0)]).is_err());
    }

    #[test]
    fn cdf_is_sorted_with_unit_top() {
        let cdf = empirical_cdf(&[3.0, 1.0, 2.0]);
        assert_eq!(cdf.iter().map(|p| p.value).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(cdf.last().unwrap().quantile, 1.0);
    }

    #[test]
    fn scenario_names() {
        assert_eq!(Scenario::parse("mq").unwrap(), Scenario::Preset("MQ".into()));
        assert_eq!(Scenario::parse("bulk").unwrap(), Scenario::Bulk);
        assert!(Scenario::parse("4K").is_err());
    }

    #[test]
    fn zero_runs_rejected() {
        let r = batch_report(&Scenario::Bulk, 0, 1, &ProfileParams::default(), &GeneratorDefaults::default());
        assert!(r.is_err());
    }
}
