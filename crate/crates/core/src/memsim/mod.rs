//! Deterministic discrete-time model of DRAM-only, cached-NVM and
//! uncached-NVM main memory.
//!
//! Each workload phase is routed through the mode's service model, which
//! yields how much the phase stretches in wall time. The stretched timeline
//! is then sampled at a fixed period into a [`CounterTrace`] with seeded
//! multiplicative noise, alongside an exact record of what was emitted.

mod config;
mod service;
mod workload;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{MemoryConfig, GIB};
pub use service::{
    dram_cache, dram_service, nvm_read_cap, nvm_service, nvm_write_cap, stretch, CacheTraffic,
};
pub use workload::{validate_objects, DataObject, WorkloadPhase, WorkloadSpec};

use crate::bandwidth::BYTES_PER_MB;
use crate::trace_io::{
    write_trace, CoreSample, CounterSample, CounterTrace, DeviceKind, MemoryMode, TracePaths,
    TraceError, Window,
};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("memory config: {0}")]
    Config(String),
    #[error("workload: {0}")]
    Workload(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

/// Device-level traffic rates in MB/s.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceRates {
    pub dram_read: f64,
    pub dram_write: f64,
    pub nvm_read: f64,
    pub nvm_write: f64,
}

impl DeviceRates {
    fn scaled(self, k: f64) -> Self {
        DeviceRates {
            dram_read: self.dram_read * k,
            dram_write: self.dram_write * k,
            nvm_read: self.nvm_read * k,
            nvm_write: self.nvm_write * k,
        }
    }

    fn add_scaled(&mut self, o: &DeviceRates, k: f64) {
        self.dram_read += o.dram_read * k;
        self.dram_write += o.dram_write * k;
        self.nvm_read += o.nvm_read * k;
        self.nvm_write += o.nvm_write * k;
    }

    /// (read, write) of the devices the mode's accounting covers.
    pub fn accounted(&self, mode: MemoryMode) -> (f64, f64) {
        match mode {
            MemoryMode::DramOnly | MemoryMode::CachedNvm => (self.dram_read, self.dram_write),
            MemoryMode::UncachedNvm => (
                self.dram_read + self.nvm_read,
                self.dram_write + self.nvm_write,
            ),
        }
    }
}

/// How one phase ran.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutcome {
    pub nominal_s: f64,
    pub actual_s: f64,
    pub stretch: f64,
    /// Observed application read bandwidth, demand / stretch.
    pub achieved_read: f64,
    pub achieved_write: f64,
    /// Device traffic while the phase runs.
    pub devices: DeviceRates,
    pub hit_ratio: Option<f64>,
    pub ipc: f64,
}

/// Service outcome for a phase with the given demand under `cfg.mode`.
pub fn run_phase(
    phase: &WorkloadPhase,
    concurrency: u32,
    footprint_bytes: u64,
    cfg: &MemoryConfig,
) -> Result<PhaseOutcome, SimError> {
    let (dr, dw) = (phase.demand_read, phase.demand_write);
    let (stretch_factor, devices, hit_ratio) = match cfg.mode {
        MemoryMode::DramOnly => {
            let s = stretch((dr, dw), dram_service(dr, dw, cfg));
            let d = DeviceRates {
                dram_read: dr,
                dram_write: dw,
                ..Default::default()
            };
            (s, d, None)
        }
        MemoryMode::UncachedNvm => {
            let s = stretch((dr, dw), nvm_service(dr, dw, concurrency, cfg));
            let d = DeviceRates {
                nvm_read: dr,
                nvm_write: dw,
                ..Default::default()
            };
            (s, d, None)
        }
        MemoryMode::CachedNvm => {
            let t = dram_cache(footprint_bytes, cfg.dram_capacity_bytes, dr, dw, cfg)?;
            let nvm = (t.nvm_read, t.nvm_write);
            let dram = (t.dram_read, t.dram_write);
            let s = stretch(nvm, nvm_service(nvm.0, nvm.1, concurrency, cfg))
                .max(stretch(dram, dram_service(dram.0, dram.1, cfg)));
            let d = DeviceRates {
                dram_read: t.dram_read,
                dram_write: t.dram_write,
                nvm_read: t.nvm_read,
                nvm_write: t.nvm_write,
            };
            (s, d, Some(t.hit_ratio))
        }
    };
    if !stretch_factor.is_finite() {
        return Err(SimError::Degenerate("a channel with demand received no bandwidth".into()));
    }
    let k = 1.0 / stretch_factor;
    Ok(PhaseOutcome {
        nominal_s: phase.duration_s,
        actual_s: phase.duration_s * stretch_factor,
        stretch: stretch_factor,
        achieved_read: dr * k,
        achieved_write: dw * k,
        devices: devices.scaled(k),
        hit_ratio,
        ipc: phase.base_ipc * k,
    })
}

/// Wall time of the workload without emitting a trace.
pub fn runtime(w: &WorkloadSpec, cfg: &MemoryConfig) -> Result<f64, SimError> {
    w.validate()?;
    cfg.validate()?;
    w.phases
        .iter()
        .map(|p| run_phase(p, w.concurrency, w.footprint_bytes, cfg).map(|o| o.actual_s))
        .sum()
}

/// Exact accounted bandwidth of one emitted interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalTruth {
    pub t_end_ms: u64,
    pub read_mbps: f64,
    pub write_mbps: f64,
    /// Workload phase occupying most of the interval.
    pub phase: usize,
    pub ipc: f64,
}

/// Total bytes moved per device kind over the run, including cache fills
/// and dirty writebacks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceBytes {
    pub dram_read: u64,
    pub dram_write: u64,
    pub nvm_read: u64,
    pub nvm_write: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mode: MemoryMode,
    pub seed: u64,
    pub runtime_s: f64,
    pub phases: Vec<PhaseOutcome>,
    pub device_bytes: DeviceBytes,
    pub intervals: Vec<IntervalTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub trace: CounterTrace,
    pub truth: GroundTruth,
}

impl SimResult {
    pub fn runtime_s(&self) -> f64 {
        self.truth.runtime_s
    }

    pub fn phases(&self) -> &[PhaseOutcome] {
        &self.truth.phases
    }
}

fn noise(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    let u: f64 = rng.random();
    1.0 + half_width * (2.0 * u - 1.0)
}

/// Spreads `total` bytes over `n` devices, remainder to the lowest ids.
fn split(total: u64, n: u16) -> impl Iterator<Item = u64> {
    let n = n as u64;
    (0..n).map(move |i| total / n + u64::from(i < total % n))
}

pub fn simulate(w: &WorkloadSpec, cfg: &MemoryConfig) -> Result<SimResult, SimError> {
    w.validate()?;
    cfg.validate()?;
    let phases: Vec<PhaseOutcome> = w
        .phases
        .iter()
        .map(|p| run_phase(p, w.concurrency, w.footprint_bytes, cfg))
        .collect::<Result<_, _>>()?;
    let runtime_s: f64 = phases.iter().map(|p| p.actual_s).sum();
    let end_ms = (runtime_s * 1000.0).round() as u64;
    if end_ms == 0 {
        return Err(SimError::Degenerate("run shorter than one millisecond".into()));
    }
    // Phase start times in seconds; the last phase absorbs ms rounding.
    let mut starts = Vec::with_capacity(phases.len());
    let mut t = 0.0;
    for p in &phases {
        starts.push(t);
        t += p.actual_s;
    }
    let timeline_end = end_ms as f64 / 1000.0;

    let mut bounds: Vec<u64> = (0..)
        .map(|k| k * cfg.sample_interval_ms)
        .take_while(|&b| b < end_ms)
        .collect();
    bounds.push(end_ms);

    let mut rng = ChaCha8Rng::seed_from_u64(w.rng_seed);
    let mode = cfg.mode;
    let with_nvm = mode != MemoryMode::DramOnly;
    let dram_key = |id| (DeviceKind::DramDimm, id);
    let mut devices: Vec<(DeviceKind, u16)> = (0..cfg.dram_dimms).map(dram_key).collect();
    if with_nvm {
        devices.extend((0..cfg.nvm_dimms).map(|id| (DeviceKind::Nvdimm, id)));
    }
    let mut cumulative = vec![(0u64, 0u64); devices.len()];
    let mut samples = Vec::with_capacity(bounds.len() * devices.len());
    let push_all = |samples: &mut Vec<CounterSample>, t: u64, cum: &[(u64, u64)]| {
        for (&(kind, id), &(r, wr)) in devices.iter().zip(cum) {
            samples.push(CounterSample {
                timestamp_ms: t,
                socket: cfg.socket,
                device_kind: kind,
                device_id: id,
                read_bytes: r,
                write_bytes: wr,
            });
        }
    };
    push_all(&mut samples, 0, &cumulative);

    let mut core = Vec::with_capacity(bounds.len());
    let mut intervals = Vec::with_capacity(bounds.len());
    let mut totals = DeviceBytes::default();
    for pair in bounds.windows(2) {
        let (a_ms, b_ms) = (pair[0], pair[1]);
        let (a, b) = (a_ms as f64 / 1000.0, b_ms as f64 / 1000.0);
        let dt = b - a;
        let mut rates = DeviceRates::default();
        let mut ipc = 0.0;
        let mut dominant = (0usize, -1.0f64);
        for (j, p) in phases.iter().enumerate() {
            let start = starts[j];
            let end = if j + 1 == phases.len() { timeline_end } else { start + p.actual_s };
            let overlap = (end.min(b) - start.max(a)).max(0.0);
            if overlap <= 0.0 {
                continue;
            }
            let frac = overlap / dt;
            rates.add_scaled(&p.devices, frac);
            ipc += p.ipc * frac;
            if overlap > dominant.1 {
                dominant = (j, overlap);
            }
        }

        let jr = noise(&mut rng, cfg.jitter);
        let jw = noise(&mut rng, cfg.jitter);
        let jc = noise(&mut rng, cfg.jitter);
        let ji = noise(&mut rng, cfg.jitter);
        let noisy = DeviceRates {
            dram_read: rates.dram_read * jr,
            dram_write: rates.dram_write * jw,
            nvm_read: rates.nvm_read * jr,
            nvm_write: rates.nvm_write * jw,
        };
        let bytes = |mbps: f64| (mbps * BYTES_PER_MB * dt).round() as u64;
        let dev_bytes = DeviceBytes {
            dram_read: bytes(noisy.dram_read),
            dram_write: bytes(noisy.dram_write),
            nvm_read: if with_nvm { bytes(noisy.nvm_read) } else { 0 },
            nvm_write: if with_nvm { bytes(noisy.nvm_write) } else { 0 },
        };
        totals.dram_read += dev_bytes.dram_read;
        totals.dram_write += dev_bytes.dram_write;
        totals.nvm_read += dev_bytes.nvm_read;
        totals.nvm_write += dev_bytes.nvm_write;

        let dram_r = split(dev_bytes.dram_read, cfg.dram_dimms);
        let dram_w = split(dev_bytes.dram_write, cfg.dram_dimms);
        let mut per_device: Vec<(u64, u64)> = dram_r.zip(dram_w).collect();
        if with_nvm {
            per_device.extend(
                split(dev_bytes.nvm_read, cfg.nvm_dimms).zip(split(dev_bytes.nvm_write, cfg.nvm_dimms)),
            );
        }
        for (cum, add) in cumulative.iter_mut().zip(&per_device) {
            cum.0 += add.0;
            cum.1 += add.1;
        }
        push_all(&mut samples, b_ms, &cumulative);

        let (acc_r, acc_w) = noisy.accounted(mode);
        let observed_ipc = ipc * ji;
        intervals.push(IntervalTruth {
            t_end_ms: b_ms,
            read_mbps: acc_r,
            write_mbps: acc_w,
            phase: dominant.0,
            ipc: observed_ipc,
        });

        let cycles = (cfg.core_freq_hz * dt * jc).round();
        let instructions = (observed_ipc * cycles).round();
        let stall = (cycles - instructions / cfg.ipc_max).max(0.0);
        let per_core = |b: u64| (b as f64 / 64.0 / w.concurrency as f64).round() as u64;
        core.push(CoreSample {
            timestamp_ms: b_ms,
            events: [
                instructions as u64,
                cycles as u64,
                (0.35 * stall).round() as u64,
                (0.65 * stall).round() as u64,
                per_core(dev_bytes.dram_read + dev_bytes.nvm_read),
                per_core(dev_bytes.dram_write + dev_bytes.nvm_write),
            ],
        });
    }

    let trace = CounterTrace::new(
        samples,
        core,
        mode,
        w.concurrency,
        w.footprint_bytes,
        Window {
            start_ms: 0,
            end_ms,
        },
    )?;
    Ok(SimResult {
        trace,
        truth: GroundTruth {
            mode,
            seed: w.rng_seed,
            runtime_s,
            phases,
            device_bytes: totals,
            intervals,
        },
    })
}

/// Writes the trace files plus a `<stem>.truth.json` ground-truth sidecar.
pub fn emit_trace(result: &SimResult, dir: &Path, stem: &str) -> Result<TracePaths, SimError> {
    let paths = write_trace(&result.trace, dir, stem)?;
    let truth_path = dir.join(format!("{stem}.truth.json"));
    let text = serde_json::to_string_pretty(&result.truth).expect("truth serializes");
    std::fs::write(&truth_path, text + "\n").map_err(|e| SimError::Io {
        path: truth_path.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok(paths)
}

/// Per-object bytes of a run, as a data-centric profiler would report them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectTraffic {
    pub name: String,
    pub size_bytes: u64,
    pub read_bytes: u64,
    pub write_bytes: u64,
}

/// Attributes the workload's demanded traffic to its objects by share.
pub fn object_traffic(w: &WorkloadSpec) -> Vec<ObjectTraffic> {
    let (read, write) = w.phases.iter().fold((0.0, 0.0), |(r, wr), p| {
        (
            r + p.demand_read * p.duration_s * BYTES_PER_MB,
            wr + p.demand_write * p.duration_s * BYTES_PER_MB,
        )
    });
    w.objects
        .iter()
        .map(|o| ObjectTraffic {
            name: o.name.clone(),
            size_bytes: o.size_bytes,
            read_bytes: (o.read_share * read).round() as u64,
            write_bytes: (o.write_share * write).round() as u64,
        })
        .collect()
}
