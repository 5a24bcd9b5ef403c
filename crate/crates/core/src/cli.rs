//! The `nvmlens` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bandwidth::{compute_bandwidth, moving_average, phase_stats, segment_phases, AnalysisError, BandwidthTrace, Phase};
use crate::characterize::{
    cache_efficiency, cached_speedup, classify_tier, contention_ratio, detect_write_throttling, slowdown, write_ratio,
    AppMetrics, CharacterizeError, ContentionVerdict, MetricKind, ThrottleRisk, TierLabel,
};
use crate::config::{ConfigError, ConfigFile, Thresholds, CONFIG_ENV};
use crate::memsim::{emit_trace, object_traffic, simulate, MemoryConfig, SimError, WorkloadSpec};
use crate::placement::{advise_with_granule, estimate, profile_objects, write_profile, PlacementError, Strategy};
use crate::predictor::{
    accuracy, plan_mid_concurrency, predict_ipc, train_model, windowed_dataset, PredictError, RegressionModel,
};
use crate::report::{Report, RunManifest};
use crate::trace_io::{account_traffic, parse_trace, CounterTrace, MemoryMode, TraceError, TracePaths};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Characterize(#[from] CharacterizeError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{0}")]
    Input(String),
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

#[derive(Debug, Parser)]
#[command(name = "nvmlens", version, about = "Bandwidth, sensitivity, prediction and placement analysis for DRAM/NVM memory")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOpts {
    /// TOML file with [thresholds] and [memory] sections; falls back to $NVMLENS_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for reports, plot data and trace files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Leave the generation timestamp out of reports.
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(long, global = true)]
    tier_low: Option<f64>,
    #[arg(long, global = true)]
    tier_high: Option<f64>,
    #[arg(long, global = true)]
    write_thresh: Option<f64>,
    #[arg(long, global = true)]
    rw_thresh: Option<f64>,
    #[arg(long, global = true)]
    gap_thresh: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a workload through the memory model and write trace files.
    Simulate {
        #[arg(long)]
        workload: PathBuf,
        /// Memory config TOML; otherwise the config file's [memory] section or defaults.
        #[arg(long)]
        memory: Option<PathBuf>,
        #[arg(long)]
        mode: Option<MemoryMode>,
        /// File stem of the emitted trace; defaults to the workload name.
        #[arg(long)]
        stem: Option<String>,
    },
    /// Bandwidth series and phase table of a trace.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Sensitivity tiers from a metrics table or a DRAM/NVM trace pair.
    Classify {
        /// CSV with app,total_bw,read_bw,write_bw,slowdown columns.
        #[arg(long, conflicts_with = "trace")]
        metrics: Option<PathBuf>,
        /// DRAM-only trace.
        #[arg(long, required_unless_present = "metrics")]
        trace: Option<PathBuf>,
        /// Uncached-NVM trace of the same run, for the slowdown.
        #[arg(long, requires = "trace")]
        nvm_trace: Option<PathBuf>,
    },
    /// Per-phase write-throttling risk of a DRAM trace.
    ThrottleCheck {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Concurrency contention verdicts from a performance table.
    Contention {
        /// CSV with app,metric,dram_low,dram_high,uncached_low,uncached_high and optional cached_low,cached_high.
        #[arg(long)]
        table: PathBuf,
    },
    /// Cache efficiency and cached speedup from a performance table.
    CacheMetrics {
        /// CSV with app,metric,dram,cached,uncached columns.
        #[arg(long)]
        table: PathBuf,
    },
    /// Fit an IPC model on core-event traces.
    PredictTrain {
        #[arg(long, required = true, num_args = 1..)]
        trace: Vec<PathBuf>,
        /// Core samples per training window.
        #[arg(long, default_value_t = 1)]
        window: usize,
        /// Hardware threads; the traces are checked against the mid-concurrency anchor.
        #[arg(long)]
        hardware_threads: Option<u32>,
        /// Model file; defaults to <out>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Accuracy of a model on other traces.
    PredictEval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        trace: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        window: usize,
    },
    /// Write-aware DRAM placement for an object profile.
    Place {
        /// CSV with name,size_bytes,read_bytes,write_bytes.
        #[arg(long)]
        profile: PathBuf,
        /// DRAM budget in bytes.
        #[arg(long, allow_hyphen_values = true, conflicts_with = "budget_fraction")]
        budget: Option<i64>,
        /// DRAM budget as a fraction of the profiled objects' total size.
        #[arg(long, required_unless_present = "budget")]
        budget_fraction: Option<f64>,
        /// Workload to estimate runtimes with; its objects are replaced by the profile.
        #[arg(long)]
        workload: Option<PathBuf>,
        #[arg(long)]
        memory: Option<PathBuf>,
    },
    /// Delimited series from any report.
    PlotData {
        #[arg(long)]
        report: PathBuf,
        /// JSON pointer into the report; defaults per report kind.
        #[arg(long)]
        series: Option<String>,
    },
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

struct Ctx {
    global: GlobalOpts,
    thresholds: Thresholds,
    file: ConfigFile,
    manifest: RunManifest,
}

impl Ctx {
    fn new(global: GlobalOpts, subcommand: &str) -> Result<Self> {
        let config_path = global
            .config
            .clone()
            .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        let file = match &config_path {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let mut th = file.thresholds.clone();
        let mut manifest = RunManifest::new(subcommand);
        manifest.config_file = config_path.map(|p| p.display().to_string());
        manifest.out = global.out.as_ref().map(|p| p.display().to_string());
        manifest.seed = global.seed;
        let overrides: [(&str, Option<f64>, &mut f64); 6] = [
            ("tier_low", global.tier_low, &mut th.tier_low),
            ("tier_high", global.tier_high, &mut th.tier_high),
            ("write_thresh", global.write_thresh, &mut th.write_thresh),
            ("rw_thresh", global.rw_thresh, &mut th.rw_thresh),
            ("gap_thresh", global.gap_thresh, &mut th.gap_thresh),
            ("alpha", global.alpha, &mut th.alpha),
        ];
        for (name, value, slot) in overrides {
            if let Some(v) = value {
                *slot = v;
                manifest.overrides.push(format!("{name}={v}"));
            }
        }
        th.validate()?;
        manifest.stamp(global.deterministic);
        Ok(Ctx {
            global,
            thresholds: th,
            file,
            manifest,
        })
    }

    fn input(&mut self, p: &Path) {
        self.manifest.inputs.push(p.display().to_string());
    }

    fn out_dir(&self) -> Result<Option<&Path>> {
        match &self.global.out {
            Some(d) => {
                std::fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
                Ok(Some(d.as_path()))
            }
            None => Ok(None),
        }
    }

    fn memory(&self, path: Option<&Path>) -> Result<MemoryConfig> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
                Ok(MemoryConfig::from_toml_str(&text)?)
            }
            None => Ok(self.file.memory.clone().unwrap_or_default()),
        }
    }

    /// Renders the report and, with `--out`, also writes it to `<out>/<kind>.json`.
    fn finish<T: Serialize>(self, kind: &str, body: T) -> Result<String> {
        let thresholds = serde_json::to_value(&self.thresholds).expect("thresholds serialize");
        let text = Report::new(kind, self.manifest, thresholds, body).to_json();
        if let Some(dir) = &self.global.out {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let p = dir.join(format!("{kind}.json"));
            std::fs::write(&p, &text).map_err(|e| io_err(&p, e))?;
        }
        Ok(text)
    }
}

fn execute(cli: Cli) -> Result<String> {
    let name = subcommand_name(&cli.command);
    let mut ctx = Ctx::new(cli.global, name)?;
    match cli.command {
        Command::Simulate {
            workload,
            memory,
            mode,
            stem,
        } => cmd_simulate(ctx, &workload, memory.as_deref(), mode, stem),
        Command::Analyze { trace } => cmd_analyze(ctx, &trace),
        Command::Classify {
            metrics,
            trace,
            nvm_trace,
        } => match metrics {
            Some(m) => cmd_classify_table(ctx, &m),
            None => {
                let trace = trace.expect("clap requires trace without metrics");
                cmd_classify_traces(ctx, &trace, nvm_trace.as_deref())
            }
        },
        Command::ThrottleCheck { trace } => cmd_throttle(ctx, &trace),
        Command::Contention { table } => cmd_contention(ctx, &table),
        Command::CacheMetrics { table } => cmd_cache_metrics(ctx, &table),
        Command::PredictTrain {
            trace,
            window,
            hardware_threads,
            model,
        } => cmd_predict_train(ctx, &trace, window, hardware_threads, model),
        Command::PredictEval { model, trace, window } => {
            ctx.input(&model);
            cmd_predict_eval(ctx, &model, &trace, window)
        }
        Command::Place {
            profile,
            budget,
            budget_fraction,
            workload,
            memory,
        } => cmd_place(ctx, &profile, budget, budget_fraction, workload.as_deref(), memory.as_deref()),
        Command::PlotData { report, series } => cmd_plot(ctx, &report, series.as_deref()),
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate { .. } => "simulate",
        Command::Analyze { .. } => "analyze",
        Command::Classify { .. } => "classify",
        Command::ThrottleCheck { .. } => "throttle-check",
        Command::Contention { .. } => "contention",
        Command::CacheMetrics { .. } => "cache-metrics",
        Command::PredictTrain { .. } => "predict-train",
        Command::PredictEval { .. } => "predict-eval",
        Command::Place { .. } => "place",
        Command::PlotData { .. } => "plot-data",
    }
}

fn read_toml_workload(p: &Path) -> Result<WorkloadSpec> {
    let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
    Ok(WorkloadSpec::from_toml_str(&text)?)
}

fn cmd_simulate(
    mut ctx: Ctx,
    workload: &Path,
    memory: Option<&Path>,
    mode: Option<MemoryMode>,
    stem: Option<String>,
) -> Result<String> {
    ctx.input(workload);
    if let Some(m) = memory {
        ctx.input(m);
    }
    let mut w = read_toml_workload(workload)?;
    if let Some(s) = ctx.global.seed {
        w.rng_seed = s;
    }
    let mut cfg = ctx.memory(memory)?;
    if let Some(m) = mode {
        cfg.mode = m;
        ctx.manifest.overrides.push(format!("mode={}", m.as_str()));
    }
    let dir = ctx
        .out_dir()?
        .ok_or_else(|| CliError::Input("simulate needs --out for the trace files".into()))?
        .to_path_buf();
    let stem = stem.unwrap_or_else(|| w.name.clone());
    let result = simulate(&w, &cfg)?;
    let paths = emit_trace(&result, &dir, &stem)?;
    let mut objects_file = None;
    if !w.objects.is_empty() {
        let p = dir.join(format!("{stem}.objects.csv"));
        let f = std::fs::File::create(&p).map_err(|e| io_err(&p, e))?;
        write_profile(&object_traffic(&w), f)?;
        objects_file = Some(p.display().to_string());
    }
    let body = json!({
        "workload": w.name,
        "mode": cfg.mode,
        "concurrency": w.concurrency,
        "footprint_bytes": w.footprint_bytes,
        "seed": w.rng_seed,
        "memory": cfg,
        "nominal_runtime_s": w.nominal_runtime_s(),
        "runtime_s": result.runtime_s(),
        "phases": result.phases(),
        "device_bytes": result.truth.device_bytes,
        "files": {
            "mem": paths.mem.display().to_string(),
            "core": paths.core.display().to_string(),
            "meta": paths.meta.display().to_string(),
            "truth": dir.join(format!("{stem}.truth.json")).display().to_string(),
            "objects": objects_file,
        },
    });
    ctx.finish("simulate", body)
}

fn load_trace(ctx: &mut Ctx, p: &Path) -> Result<(CounterTrace, BandwidthTrace)> {
    ctx.input(p);
    let trace = parse_trace(p)?;
    let bw = compute_bandwidth(&account_traffic(&trace)?)?;
    Ok((trace, bw))
}

fn stem_of(p: &Path) -> String {
    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".mem.csv").unwrap_or(&name).to_string()
}

/// Segments with the configured limits, lowering the phase count when the
/// trace is too short for it.
fn phases_of(bw: &BandwidthTrace, th: &Thresholds) -> Result<Vec<Phase>> {
    let smoothed = moving_average(bw, th.smoothing_window);
    let mut params = th.segment();
    let fit = (bw.len() / params.min_phase_len).max(1);
    params.max_phases = params.max_phases.min(fit);
    if bw.len() < params.min_phase_len {
        params.min_phase_len = bw.len().max(1);
    }
    let mut phases = segment_phases(&smoothed, params)?;
    // Report statistics of the raw series over the smoothed boundaries.
    for p in &mut phases {
        *p = phase_stats(bw, p.start_index, p.end_index)?;
    }
    Ok(phases)
}

#[derive(Serialize)]
struct Series<'a> {
    time_s: &'a [f64],
    read_mbps: &'a [f64],
    write_mbps: &'a [f64],
}

fn cmd_analyze(mut ctx: Ctx, path: &Path) -> Result<String> {
    let (trace, bw) = load_trace(&mut ctx, path)?;
    let whole = phase_stats(&bw, 0, bw.len() - 1)?;
    let phases = phases_of(&bw, &ctx.thresholds)?;
    let dominant = phases
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.duration_share.total_cmp(&b.1.duration_share))
        .map(|(i, _)| i);
    if let Some(dir) = ctx.out_dir()? {
        let p = dir.join(format!("{}.bandwidth.csv", stem_of(path)));
        let f = std::fs::File::create(&p).map_err(|e| io_err(&p, e))?;
        bw.write_plot_csv(std::io::BufWriter::new(f)).map_err(|e| io_err(&p, e))?;
    }
    let body = json!({
        "trace": stem_of(path),
        "mode": trace.mode,
        "concurrency": trace.concurrency,
        "footprint_bytes": trace.footprint_bytes,
        "window_ms": [trace.window.start_ms, trace.window.end_ms],
        "intervals": bw.len(),
        "duration_s": bw.duration_s(),
        "avg_read_mbps": whole.avg_read_mbps,
        "avg_write_mbps": whole.avg_write_mbps,
        "total_mbps": whole.avg_read_mbps + whole.avg_write_mbps,
        "write_ratio": write_ratio(whole.avg_read_mbps, whole.avg_write_mbps)?,
        "phases": phases,
        "dominant_phase": dominant,
        "series": Series {
            time_s: &bw.time_s,
            read_mbps: &bw.read_mbps,
            write_mbps: &bw.write_mbps,
        },
    });
    ctx.finish("analyze", body)
}

#[derive(Debug, Deserialize)]
struct MetricsRow {
    app: String,
    total_bw: Option<f64>,
    read_bw: Option<f64>,
    write_bw: Option<f64>,
    slowdown: Option<f64>,
    #[serde(default)]
    reported_write_ratio_pct: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ClassifyRow {
    app: String,
    total_bw: Option<f64>,
    read_bw: Option<f64>,
    write_bw: Option<f64>,
    write_ratio: Option<f64>,
    write_ratio_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reported_write_ratio_pct: Option<f64>,
    slowdown: Option<f64>,
    tier: Option<TierLabel>,
    borderline: Option<bool>,
    advisory: Option<TierLabel>,
}

fn classify_row(app: String, m: &AppMetrics, reported: Option<f64>, th: &Thresholds) -> Result<ClassifyRow> {
    let v = classify_tier(m, &th.tier())?;
    let wr = m.write_ratio().transpose()?;
    Ok(ClassifyRow {
        app,
        total_bw: m.total(),
        read_bw: m.read_bw,
        write_bw: m.write_bw,
        write_ratio: wr,
        write_ratio_pct: wr.map(|r| r * 100.0),
        reported_write_ratio_pct: reported,
        slowdown: m.slowdown,
        tier: v.tier.map(|t| t.label),
        borderline: v.tier.map(|t| t.borderline),
        advisory: v.advisory,
    })
}

fn read_csv<T: for<'de> Deserialize<'de>>(p: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(p)
        .map_err(|e| io_err(p, e))?;
    let mut rows = Vec::new();
    for (i, r) in rdr.deserialize().enumerate() {
        rows.push(r.map_err(|e| CliError::Input(format!("{}:{}: {e}", p.display(), i + 2)))?);
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!("{}: no rows", p.display())));
    }
    Ok(rows)
}

fn cmd_classify_table(mut ctx: Ctx, path: &Path) -> Result<String> {
    ctx.input(path);
    let rows: Vec<MetricsRow> = read_csv(path)?;
    let out = rows
        .into_iter()
        .map(|r| {
            let m = AppMetrics {
                total_bw: r.total_bw,
                read_bw: r.read_bw,
                write_bw: r.write_bw,
                slowdown: r.slowdown,
            };
            classify_row(r.app, &m, r.reported_write_ratio_pct, &ctx.thresholds)
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.finish("classify", json!({ "rows": out }))
}

fn cmd_classify_traces(mut ctx: Ctx, dram: &Path, nvm: Option<&Path>) -> Result<String> {
    let (dram_trace, bw) = load_trace(&mut ctx, dram)?;
    if dram_trace.mode != MemoryMode::DramOnly {
        return Err(CliError::Input(format!(
            "{}: classification needs a dram-only trace, got {}",
            dram.display(),
            dram_trace.mode.as_str()
        )));
    }
    let whole = phase_stats(&bw, 0, bw.len() - 1)?;
    let mut m = AppMetrics::from_bandwidth(whole.avg_read_mbps, whole.avg_write_mbps);
    if let Some(nvm) = nvm {
        ctx.input(nvm);
        let nvm_trace = parse_trace(nvm)?;
        let t_nvm = nvm_trace.window.duration_ms() as f64;
        let t_dram = dram_trace.window.duration_ms() as f64;
        m.slowdown = Some(slowdown(t_nvm, t_dram, MetricKind::TimeLowerBetter)?);
    }
    let row = classify_row(stem_of(dram), &m, None, &ctx.thresholds)?;
    ctx.finish("classify", json!({ "rows": [row] }))
}

fn cmd_throttle(mut ctx: Ctx, path: &Path) -> Result<String> {
    let (trace, bw) = load_trace(&mut ctx, path)?;
    let phases = phases_of(&bw, &ctx.thresholds)?;
    let th = ctx.thresholds.throttle();
    let rows: Vec<Value> = phases
        .iter()
        .map(|p| {
            let mut v = serde_json::to_value(p).expect("phase serializes");
            v["risk"] = json!(detect_write_throttling(p, &th));
            v
        })
        .collect();
    let overall = if phases.iter().any(|p| detect_write_throttling(p, &th) == ThrottleRisk::High) {
        ThrottleRisk::High
    } else {
        ThrottleRisk::Low
    };
    let note = (trace.mode != MemoryMode::DramOnly)
        .then(|| format!("risk is calibrated for dram-only traces; this trace is {}", trace.mode.as_str()));
    ctx.finish(
        "throttle-check",
        json!({ "trace": stem_of(path), "mode": trace.mode, "risk": overall, "note": note, "phases": rows }),
    )
}

#[derive(Debug, Deserialize)]
struct ContentionRow {
    app: String,
    metric: String,
    dram_low: f64,
    dram_high: f64,
    #[serde(default)]
    cached_low: Option<f64>,
    #[serde(default)]
    cached_high: Option<f64>,
    uncached_low: f64,
    uncached_high: f64,
}

fn metric(s: &str) -> Result<MetricKind> {
    s.parse().map_err(CliError::Input)
}

fn cmd_contention(mut ctx: Ctx, path: &Path) -> Result<String> {
    ctx.input(path);
    let rows: Vec<ContentionRow> = read_csv(path)?;
    let gap = ctx.thresholds.gap_thresh;
    let out = rows
        .iter()
        .map(|r| {
            let k = metric(&r.metric)?;
            let cached = match (r.cached_high, r.cached_low) {
                (Some(h), Some(l)) => Some(contention_ratio(h, l, k)?),
                _ => None,
            };
            let v = ContentionVerdict::new(
                contention_ratio(r.dram_high, r.dram_low, k)?,
                cached,
                contention_ratio(r.uncached_high, r.uncached_low, k)?,
                gap,
            );
            Ok(json!({ "app": r.app, "metric": k, "verdict": v }))
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.finish("contention", json!({ "rows": out }))
}

#[derive(Debug, Deserialize)]
struct CacheRow {
    app: String,
    metric: String,
    dram: Option<f64>,
    cached: f64,
    uncached: Option<f64>,
}

fn cmd_cache_metrics(mut ctx: Ctx, path: &Path) -> Result<String> {
    ctx.input(path);
    let rows: Vec<CacheRow> = read_csv(path)?;
    let out = rows
        .iter()
        .map(|r| {
            let k = metric(&r.metric)?;
            let eff = r.dram.map(|d| cache_efficiency(r.cached, d, k)).transpose()?;
            let speedup = r.uncached.map(|u| cached_speedup(r.cached, u, k)).transpose()?;
            Ok(json!({ "app": r.app, "metric": k, "cache_efficiency": eff, "cached_speedup": speedup }))
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.finish("cache-metrics", json!({ "rows": out }))
}

fn cmd_predict_train(
    mut ctx: Ctx,
    traces: &[PathBuf],
    window: usize,
    ht: Option<u32>,
    model_path: Option<PathBuf>,
) -> Result<String> {
    let plan = ht.map(plan_mid_concurrency).transpose()?;
    let mut feats = Vec::new();
    let mut ipc = Vec::new();
    let mut warnings = Vec::new();
    for p in traces {
        ctx.input(p);
        let t = parse_trace(p)?;
        if let Some(plan) = &plan {
            if t.concurrency != plan.concurrency {
                warnings.push(format!(
                    "{}: concurrency {} differs from the training anchor {}",
                    p.display(),
                    t.concurrency,
                    plan.concurrency
                ));
            }
        }
        let (f, y) = windowed_dataset(&t.core_in_window(), window)?;
        feats.extend(f);
        ipc.extend(y);
    }
    let model = train_model(&feats, &ipc, ctx.thresholds.alpha)?;
    let path = match model_path {
        Some(p) => Some(p),
        None => ctx.out_dir()?.map(|d| d.join("model.json")),
    };
    if let Some(p) = &path {
        model.save(p)?;
    }
    let body = json!({
        "model_file": path.map(|p| p.display().to_string()),
        "windows": feats.len(),
        "window_samples": window,
        "plan": plan,
        "warnings": warnings,
        "model": model,
    });
    ctx.finish("predict-train", body)
}

fn cmd_predict_eval(mut ctx: Ctx, model_path: &Path, traces: &[PathBuf], window: usize) -> Result<String> {
    let model = RegressionModel::load(model_path)?;
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for p in traces {
        ctx.input(p);
        let t = parse_trace(p)?;
        let (f, y) = windowed_dataset(&t.core_in_window(), window)?;
        let acc = f
            .iter()
            .zip(&y)
            .map(|(f, &y)| Ok(accuracy(predict_ipc(&model, f)?, y)?))
            .collect::<Result<Vec<f64>>>()?;
        let mean = acc.iter().sum::<f64>() / acc.len() as f64;
        let min = acc.iter().copied().fold(f64::INFINITY, f64::min);
        all.extend_from_slice(&acc);
        rows.push(json!({
            "trace": stem_of(p),
            "concurrency": t.concurrency,
            "windows": acc.len(),
            "mean_observed_ipc": y.iter().sum::<f64>() / y.len() as f64,
            "mean_accuracy": mean,
            "min_accuracy": min,
        }));
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    ctx.finish("predict-eval", json!({ "traces": rows, "mean_accuracy": mean }))
}

fn cmd_place(
    mut ctx: Ctx,
    profile: &Path,
    budget: Option<i64>,
    fraction: Option<f64>,
    workload: Option<&Path>,
    memory: Option<&Path>,
) -> Result<String> {
    ctx.input(profile);
    let objects = profile_objects(profile)?;
    let total: u64 = objects.iter().map(|o| o.size_bytes).sum();
    let budget = match (budget, fraction) {
        (Some(b), _) => b,
        (None, Some(f)) if (0.0..=1.0).contains(&f) => (f * total as f64).floor() as i64,
        (None, Some(f)) => return Err(CliError::Input(format!("budget fraction {f} outside [0, 1]"))),
        (None, None) => unreachable!("clap requires a budget"),
    };
    let granule = ctx.thresholds.granule_bytes;
    let plans = [Strategy::GreedyDensity, Strategy::ExactDp]
        .into_iter()
        .map(|s| advise_with_granule(&objects, budget, s, granule))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut estimates = Vec::new();
    if let Some(wp) = workload {
        ctx.input(wp);
        let mut w = read_toml_workload(wp)?;
        w.objects = objects.clone();
        let mut cfg = ctx.memory(memory)?;
        cfg.mode = MemoryMode::UncachedNvm;
        for p in &plans {
            estimates.push(estimate(p, &w, &cfg)?);
        }
    }
    let rows: Vec<Value> = plans
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut v = serde_json::to_value(p).expect("plan serializes");
            v["budget_fraction_of_total"] = json!(if total == 0 { 0.0 } else { budget as f64 / total as f64 });
            if let Some(e) = estimates.get(i) {
                v["estimate"] = json!(e);
            }
            v
        })
        .collect();
    ctx.finish("place", json!({ "total_object_bytes": total, "plans": rows }))
}

fn default_series(kind: &str) -> Option<&'static str> {
    Some(match kind {
        "analyze" => "/body/series",
        "classify" | "contention" | "cache-metrics" => "/body/rows",
        "throttle-check" => "/body/phases",
        "simulate" => "/body/phases",
        "predict-eval" => "/body/traces",
        "place" => "/body/plans",
        _ => return None,
    })
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Flattens nested objects into `a.b` columns.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(_) => {}
        other => out.push((prefix.to_string(), cell(other))),
    }
}

/// Renders an array of objects, or an object of equal-length arrays, as CSV.
pub fn series_to_csv(v: &Value) -> Result<String> {
    let mut header: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<(String, String)>> = Vec::new();
    match v {
        Value::Array(items) => {
            for it in items {
                let mut cells = Vec::new();
                flatten("", it, &mut cells);
                for (k, _) in &cells {
                    if !header.contains(k) {
                        header.push(k.clone());
                    }
                }
                rows.push(cells);
            }
        }
        Value::Object(cols) => {
            let arrays: Vec<(&String, &Vec<Value>)> =
                cols.iter().filter_map(|(k, v)| v.as_array().map(|a| (k, a))).collect();
            let n = arrays.first().map_or(0, |a| a.1.len());
            if arrays.is_empty() || arrays.iter().any(|a| a.1.len() != n) {
                return Err(CliError::Input("series object needs equal-length arrays".into()));
            }
            header = arrays.iter().map(|a| a.0.clone()).collect();
            for i in 0..n {
                rows.push(arrays.iter().map(|a| (a.0.clone(), cell(&a.1[i]))).collect());
            }
        }
        _ => return Err(CliError::Input("series must be an array or an object of arrays".into())),
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Input(e.to_string());
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let rec: Vec<&str> = header
            .iter()
            .map(|h| r.iter().find(|(k, _)| k == h).map_or("", |(_, v)| v.as_str()))
            .collect();
        w.write_record(rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn cmd_plot(mut ctx: Ctx, report: &Path, series: Option<&str>) -> Result<String> {
    ctx.input(report);
    let text = std::fs::read_to_string(report).map_err(|e| io_err(report, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| io_err(report, e))?;
    let kind = v.get("report").and_then(Value::as_str).unwrap_or_default();
    let pointer = series
        .or_else(|| default_series(kind))
        .ok_or_else(|| CliError::Input(format!("no default series for report kind '{kind}'; pass --series")))?;
    let node = v
        .pointer(pointer)
        .ok_or_else(|| CliError::Input(format!("{}: nothing at {pointer}", report.display())))?;
    let csv = series_to_csv(node)?;
    if let Some(dir) = ctx.out_dir()? {
        let base = if kind.is_empty() { "series" } else { kind };
        let p = dir.join(format!("{base}.plot.csv"));
        std::fs::write(&p, &csv).map_err(|e| io_err(&p, e))?;
    }
    Ok(csv)
}

/// Resolves a trace argument that may name the stem or the `.mem.csv` file.
pub fn trace_paths(p: &Path) -> TracePaths {
    TracePaths::from_mem_path(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("nvmlens").chain(args.iter().copied());
        let code = run_with(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_capture(&[]).0, 2);
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
        assert_eq!(run_capture(&["analyze", "--bogus"]).0, 2);
        assert_eq!(run_capture(&["--help"]).0, 0);
    }

    #[test]
    fn module_errors_exit_1() {
        let (code, _, err) = run_capture(&["analyze", "--trace", "/nonexistent/x"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error: "));
    }

    #[test]
    fn series_csv_shapes() {
        let cols = json!({"time_s": [1.0, 2.0], "read_mbps": [3.0, 4.0]});
        assert_eq!(series_to_csv(&cols).unwrap(), "time_s,read_mbps\n1.0,3.0\n2.0,4.0\n");
        let rows = json!([{"a": 1, "b": {"c": "x"}}, {"a": 2, "d": null}]);
        assert_eq!(series_to_csv(&rows).unwrap(), "a,b.c,d\n1,x,\n2,,\n");
    }
}
