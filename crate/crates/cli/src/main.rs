use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hasprof::burst::write_bursts_csv;
use hasprof::eval::{batch_report, boundary_errors, check, confusion, write_cdf_csv, Scenario, Thresholds};
use hasprof::profile::{profile_detailed, to_kbps, PhaseInterval};
use hasprof::synth::{generate, ScenarioSpec};
use hasprof::trace::{demux_by, parse_labels, parse_trace, write_labels, write_trace, FlowGranularity, Trace};
use hasprof::Config;
use serde_json::json;

/// Phase identification and encoding-rate estimation for adaptive video
/// streaming flows.
#[derive(Debug, Parser)]
#[command(name = "hasprof", version)]
struct Cli {
    #[command(flatten)]
    params: ParamArgs,

    #[command(subcommand)]
    command: Command,
}

/// Configuration file plus per-parameter overrides.
#[derive(Debug, Args)]
struct ParamArgs {
    /// JSON configuration; missing fields keep their defaults.
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,
    /// Rate bin width in seconds.
    #[arg(long, global = true)]
    delta_t: Option<f64>,
    /// Smoothing attenuation factor.
    #[arg(long, global = true)]
    a: Option<f64>,
    /// Rate change threshold factor.
    #[arg(long, global = true)]
    c: Option<f64>,
    /// Inter-arrival time that separates bursts, in seconds.
    #[arg(long, global = true)]
    h_t: Option<f64>,
    /// Minimum duration of a filling burst, in seconds.
    #[arg(long, global = true)]
    h_d: Option<f64>,
    /// Burst rate threshold relative to the first burst.
    #[arg(long, global = true)]
    h_r: Option<f64>,
    /// Minimum burst size in bytes.
    #[arg(long, global = true)]
    h_s: Option<f64>,
    /// Consecutive steady bursts needed for a steady-state phase.
    #[arg(long, global = true)]
    h_n: Option<usize>,
    /// Allowed distance between rate and burst change times, in seconds.
    #[arg(long, global = true)]
    match_tolerance: Option<f64>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path).with_context(|| format!("config {}", path.display()))?,
            None => Config::default(),
        };
        let p = &mut cfg.profile;
        let overrides = [
            (self.delta_t, &mut p.rate.delta_t),
            (self.a, &mut p.rate.a),
            (self.c, &mut p.rate.c),
            (self.h_t, &mut p.burst.h_t),
            (self.h_d, &mut p.burst.h_d),
            (self.h_r, &mut p.burst.h_r),
            (self.h_s, &mut p.burst.h_s),
            (self.match_tolerance, &mut p.fusion.match_tolerance),
        ];
        for (value, slot) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        if let Some(n) = self.h_n {
            p.burst.h_n = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FlowKeyArg {
    /// Source, destination and destination port.
    AddrPort,
    /// Source and destination address only.
    AddrPair,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Profile every flow of a packet trace.
    Analyze {
        /// Trace CSV: t,size,src,dst,dst_port
        input: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also dump per-flow rate series and bursts as CSV into this directory.
        #[arg(long)]
        debug_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "addr-port")]
        flow_key: FlowKeyArg,
    },
    /// Write a synthetic trace and its ground-truth labels.
    Generate {
        /// Preset name (MQ, HQ, QC, AQ or BULK).
        #[arg(required_unless_present = "spec", conflicts_with = "spec")]
        scenario: Option<String>,
        /// Scenario specification as JSON instead of a preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// File name stem; defaults to `<scenario>_<seed>`.
        #[arg(long)]
        name: Option<String>,
    },
    /// Profile a batch of generated sessions and check the results.
    Evaluate {
        scenario: String,
        /// Number of sessions.
        #[arg(short = 'n', long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
        runs: u64,
        /// Seed of the first session; later sessions use consecutive seeds.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write CDFs of estimated and true steady-state rates here.
        #[arg(long)]
        cdf_dir: Option<PathBuf>,
        /// Minimum confusion diagonal per phase, in percent.
        #[arg(long)]
        min_diagonal: Option<f64>,
        /// Maximum NRMSE of the first steady-state phase.
        #[arg(long)]
        max_nrmse: Option<f64>,
        /// Minimum share of sessions with the expected phase structure.
        #[arg(long)]
        min_structure_share: Option<f64>,
    },
    /// Score the profile of a trace against a label file.
    Report {
        trace: PathBuf,
        /// Labels CSV: t_start,t_end,phase
        labels: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = cli.params.resolve()?;
    match cli.command {
        Command::Analyze { input, output, debug_dir, flow_key } => {
            analyze(&cfg, &input, output.as_deref(), debug_dir.as_deref(), flow_key)
        }
        Command::Generate { scenario, spec, seed, out_dir, name } => {
            generate_files(&cfg, scenario.as_deref(), spec.as_deref(), seed, &out_dir, name)
        }
        Command::Evaluate {
            scenario,
            runs,
            seed,
            output,
            cdf_dir,
            min_diagonal,
            max_nrmse,
            min_structure_share,
        } => {
            let scenario = Scenario::parse(&scenario)?;
            let mut thresholds = Thresholds::for_scenario(&scenario);
            thresholds.min_diagonal_pct = min_diagonal.or(thresholds.min_diagonal_pct);
            thresholds.max_nrmse = max_nrmse.or(thresholds.max_nrmse);
            thresholds.min_structure_share = min_structure_share.or(thresholds.min_structure_share);
            evaluate(&cfg, &scenario, runs as usize, seed, output.as_deref(), cdf_dir.as_deref(), &thresholds)
        }
        Command::Report { trace, labels, output } => report(&cfg, &trace, &labels, output.as_deref()),
    }
}

fn read_trace(path: &Path) -> Result<Trace> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse_trace(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// JSON to `path`, or to stdout when no path is given.
fn emit_json(value: &serde_json::Value, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            writeln!(out, "{text}")?;
            Ok(())
        }
    }
}

fn rate_text(bytes_per_sec: f64) -> String {
    format!("{bytes_per_sec:.0} B/s ({:.1} kbps)", to_kbps(bytes_per_sec))
}

fn analyze(cfg: &Config, input: &Path, output: Option<&Path>, debug_dir: Option<&Path>, key: FlowKeyArg) -> Result<ExitCode> {
    let trace = read_trace(input)?;
    let granularity = match key {
        FlowKeyArg::AddrPort => FlowGranularity::AddressAndPort,
        FlowKeyArg::AddrPair => FlowGranularity::AddressPair,
    };
    if let Some(dir) = debug_dir {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut flows = Vec::new();
    for (i, (key, mut sub)) in demux_by(&trace, granularity).into_iter().enumerate() {
        sub.records.sort_by(|a, b| a.t.total_cmp(&b.t));
        let detailed = profile_detailed(&sub.records, &cfg.profile);
        let debug_prefix = match debug_dir {
            Some(dir) => {
                let stem = format!("flow{}", i + 1);
                detailed.rate_series.write_csv(create(&dir.join(format!("{stem}_rate.csv")))?)?;
                write_bursts_csv(&detailed.bursts, create(&dir.join(format!("{stem}_bursts.csv")))?)?;
                Some(stem)
            }
            None => None,
        };
        let r = &detailed.report;
        let estimate = r.rate_estimate.as_ref().map_or("no steady state".to_string(), |e| rate_text(e.session));
        eprintln!(
            "{key}: {} packets, video stream: {}, segments: {}, rate: {estimate}",
            r.packets,
            r.verdict.is_video_stream,
            r.segments.len()
        );
        flows.push(json!({ "flow": key.to_string(), "debug_prefix": debug_prefix, "report": detailed.report }));
    }
    emit_json(
        &json!({
            "input": input.display().to_string(),
            "units": hasprof::profile::UNITS_NOTE,
            "params": cfg.profile,
            "flows": flows,
        }),
        output,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn generate_files(
    cfg: &Config,
    scenario: Option<&str>,
    spec_path: Option<&Path>,
    seed: Option<u64>,
    out_dir: &Path,
    name: Option<String>,
) -> Result<ExitCode> {
    let (lt, stem) = match (scenario, spec_path) {
        (_, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
            let mut spec: ScenarioSpec =
                serde_json::from_str(&text).with_context(|| format!("invalid spec {}", path.display()))?;
            if let Some(s) = seed {
                spec.rng_seed = s;
            }
            spec.validate().with_context(|| format!("invalid spec {}", path.display()))?;
            let stem = format!("{}_{}", spec.name, spec.rng_seed);
            (generate(&spec)?, stem)
        }
        (Some(name), None) => {
            let scenario = Scenario::parse(name)?;
            let seed = seed.unwrap_or(1);
            let (lt, _) = scenario.generate(seed, &cfg.generator)?;
            (lt, format!("{}_{seed}", scenario.name()))
        }
        (None, None) => bail!("either a scenario name or --spec is required"),
    };
    let stem = name.unwrap_or(stem);
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let trace_path = out_dir.join(format!("{stem}.trace.csv"));
    let labels_path = out_dir.join(format!("{stem}.labels.csv"));
    write_trace(&lt.trace, create(&trace_path)?)?;
    write_labels(&lt.labels, create(&labels_path)?)?;
    println!("{}", trace_path.display());
    println!("{}", labels_path.display());
    Ok(ExitCode::SUCCESS)
}

fn evaluate(
    cfg: &Config,
    scenario: &Scenario,
    runs: usize,
    seed: u64,
    output: Option<&Path>,
    cdf_dir: Option<&Path>,
    thresholds: &Thresholds,
) -> Result<ExitCode> {
    let report = batch_report(scenario, runs, seed, &cfg.profile, &cfg.generator)?;
    let violations = check(&report, thresholds);

    eprintln!("{}: {} runs from seed {seed}", report.scenario, report.runs);
    for phase in hasprof::Phase::ALL {
        if let Some(pct) = report.confusion.diagonal_pct(phase) {
            eprintln!("  {phase:<13} identified {pct:.2}% of the time");
        }
    }
    for s in &report.steady_rates {
        let nrmse = s.nrmse.map_or("n/a".to_string(), |v| format!("{:.2}%", v * 100.0));
        let est = s.mean_estimate.map_or("n/a".to_string(), rate_text);
        let truth = s.mean_true.map_or("n/a".to_string(), rate_text);
        eprintln!(
            "  steady phase {}: NRMSE {nrmse}, mean estimate {est}, mean truth {truth}, missed {}",
            s.phase_index, s.missed
        );
    }
    eprintln!("  expected phase structure in {}/{} runs", report.structure_ok_runs, report.runs);

    if let Some(dir) = cdf_dir {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for s in &report.steady_rates {
            let base = format!("{}_steady{}", report.scenario, s.phase_index);
            write_cdf_csv(&s.cdf_estimated, create(&dir.join(format!("{base}_estimated.csv")))?)?;
            write_cdf_csv(&s.cdf_true, create(&dir.join(format!("{base}_true.csv")))?)?;
        }
    }
    emit_json(
        &json!({ "report": report, "thresholds": thresholds, "violations": violations }),
        output,
    )?;
    if violations.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &violations {
            eprintln!("threshold violated: {v}");
        }
        Ok(ExitCode::from(1))
    }
}

fn report(cfg: &Config, trace_path: &Path, labels_path: &Path, output: Option<&Path>) -> Result<ExitCode> {
    let mut trace = read_trace(trace_path)?;
    trace.records.sort_by(|a, b| a.t.total_cmp(&b.t));
    let file = File::open(labels_path).with_context(|| format!("cannot open {}", labels_path.display()))?;
    let labels = parse_labels(BufReader::new(file)).with_context(|| format!("reading {}", labels_path.display()))?;

    let detailed = profile_detailed(&trace.records, &cfg.profile);
    let predicted: Vec<PhaseInterval> = detailed.report.segments.iter().map(|s| s.interval()).collect();
    let matrix = confusion(&predicted, &labels)?;
    let boundaries = boundary_errors(&predicted, &labels);
    for phase in hasprof::Phase::ALL {
        if let Some(pct) = matrix.diagonal_pct(phase) {
            eprintln!("{phase:<13} identified {pct:.2}% of the time");
        }
    }
    emit_json(
        &json!({
            "units": hasprof::profile::UNITS_NOTE,
            "confusion": matrix,
            "confusion_pct": matrix.percentages(),
            "boundaries": boundaries,
            "profile": detailed.report,
        }),
        output,
    )?;
    Ok(ExitCode::SUCCESS)
}
