//! On-disk counter traces and per-mode traffic accounting.
//!
//! A trace is three sibling files sharing a stem:
//!
//! * `<stem>.mem.csv`: `timestamp_ms,socket,device_kind,device_id,read_bytes,write_bytes`
//!   with cumulative byte counters per DIMM.
//! * `<stem>.core.csv`: `timestamp_ms,p0,p1,p2,p3,p4,p5`, event counts per
//!   active core over each sample interval (optional).
//! * `<stem>.meta`: `key=value` lines for `mode`, `concurrency`,
//!   `footprint_bytes`, `window_start_ms` and `window_end_ms`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const MEM_HEADER: [&str; 6] = [
    "timestamp_ms",
    "socket",
    "device_kind",
    "device_id",
    "read_bytes",
    "write_bytes",
];
pub const CORE_HEADER: [&str; 7] = ["timestamp_ms", "p0", "p1", "p2", "p3", "p4", "p5"];

/// Number of core events carried by a [`CoreSample`].
pub const EVENT_COUNT: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: u64,
        msg: String,
    },
    #[error("{file}:{line}: unknown device kind '{kind}'")]
    UnknownDeviceKind {
        file: String,
        line: u64,
        kind: String,
    },
    #[error("integrity violation on {device}: {msg}")]
    Integrity { device: String, msg: String },
    #[error("trace in {mode} mode must not contain {kind} records")]
    ModeMismatch { mode: MemoryMode, kind: DeviceKind },
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("window [{start_ms}, {end_ms}] ms {msg}")]
    Window {
        start_ms: u64,
        end_ms: u64,
        msg: String,
    },
    #[error("no complete sample interval inside the window")]
    EmptySeries,
}

pub type Result<T, E = TraceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeviceKind {
    #[serde(rename = "dram")]
    DramDimm,
    #[serde(rename = "nvdimm")]
    Nvdimm,
}

impl DeviceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceKind::DramDimm => "dram",
            DeviceKind::Nvdimm => "nvdimm",
        }
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeviceKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "dram" | "DramDimm" => Ok(DeviceKind::DramDimm),
            "nvdimm" | "Nvdimm" => Ok(DeviceKind::Nvdimm),
            _ => Err(()),
        }
    }
}

/// Main-memory configuration a trace was recorded under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryMode {
    DramOnly,
    CachedNvm,
    UncachedNvm,
}

impl MemoryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MemoryMode::DramOnly => "dram-only",
            MemoryMode::CachedNvm => "cached-nvm",
            MemoryMode::UncachedNvm => "uncached-nvm",
        }
    }

    /// Device kinds whose traffic makes up the accounted series in this mode.
    pub fn accounted_kinds(self) -> &'static [DeviceKind] {
        match self {
            MemoryMode::DramOnly | MemoryMode::CachedNvm => &[DeviceKind::DramDimm],
            MemoryMode::UncachedNvm => &[DeviceKind::DramDimm, DeviceKind::Nvdimm],
        }
    }
}

impl fmt::Display for MemoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MemoryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dram-only" | "DramOnly" => Ok(MemoryMode::DramOnly),
            "cached-nvm" | "CachedNvm" => Ok(MemoryMode::CachedNvm),
            "uncached-nvm" | "UncachedNvm" => Ok(MemoryMode::UncachedNvm),
            other => Err(format!("unknown memory mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviceKey {
    pub socket: u16,
    pub kind: DeviceKind,
    pub id: u16,
}

impl fmt::Display for DeviceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "socket {} {} {}", self.socket, self.kind, self.id)
    }
}

/// One reading of a DIMM's cumulative traffic counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterSample {
    pub timestamp_ms: u64,
    pub socket: u16,
    pub device_kind: DeviceKind,
    pub device_id: u16,
    pub read_bytes: u64,
    pub write_bytes: u64,
}

impl CounterSample {
    pub fn device(&self) -> DeviceKey {
        DeviceKey {
            socket: self.socket,
            kind: self.device_kind,
            id: self.device_id,
        }
    }
}

/// Core event counts over one sample interval ending at `timestamp_ms`.
///
/// Events, in order: instructions retired, active cycles, resource-stall
/// cycles, offcore-outstanding wait cycles, iMC reads, iMC writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreSample {
    pub timestamp_ms: u64,
    pub events: [u64; EVENT_COUNT],
}

impl CoreSample {
    /// Instructions per active cycle, `None` when no cycles were recorded.
    pub fn ipc(&self) -> Option<f64> {
        (self.events[1] > 0).then(|| self.events[0] as f64 / self.events[1] as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl Window {
    pub fn contains(&self, t: u64) -> bool {
        t >= self.start_ms && t <= self.end_ms
    }

    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterTrace {
    pub samples: Vec<CounterSample>,
    pub core: Vec<CoreSample>,
    pub mode: MemoryMode,
    pub concurrency: u32,
    pub footprint_bytes: u64,
    pub window: Window,
}

impl CounterTrace {
    /// Checks invariants and puts samples in canonical order
    /// (timestamp, socket, kind, id).
    pub fn new(
        mut samples: Vec<CounterSample>,
        mut core: Vec<CoreSample>,
        mode: MemoryMode,
        concurrency: u32,
        footprint_bytes: u64,
        window: Window,
    ) -> Result<Self> {
        samples.sort_by_key(|s| (s.timestamp_ms, s.device()));
        core.sort_by_key(|c| c.timestamp_ms);
        let trace = CounterTrace {
            samples,
            core,
            mode,
            concurrency,
            footprint_bytes,
            window,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == MemoryMode::DramOnly {
            if let Some(s) = self
                .samples
                .iter()
                .find(|s| s.device_kind == DeviceKind::Nvdimm)
            {
                return Err(TraceError::ModeMismatch {
                    mode: self.mode,
                    kind: s.device_kind,
                });
            }
        }
        for (device, stream) in self.streams() {
            for pair in stream.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if b.timestamp_ms <= a.timestamp_ms {
                    return Err(TraceError::Integrity {
                        device: device.to_string(),
                        msg: format!("duplicate timestamp {} ms", b.timestamp_ms),
                    });
                }
                if b.read_bytes < a.read_bytes || b.write_bytes < a.write_bytes {
                    return Err(TraceError::Integrity {
                        device: device.to_string(),
                        msg: format!(
                            "cumulative counter decreases between {} ms and {} ms",
                            a.timestamp_ms, b.timestamp_ms
                        ),
                    });
                }
            }
        }
        for pair in self.core.windows(2) {
            if pair[1].timestamp_ms <= pair[0].timestamp_ms {
                return Err(TraceError::Integrity {
                    device: "core events".into(),
                    msg: format!("duplicate timestamp {} ms", pair[1].timestamp_ms),
                });
            }
        }
        let w = self.window;
        if w.end_ms < w.start_ms {
            return Err(TraceError::Window {
                start_ms: w.start_ms,
                end_ms: w.end_ms,
                msg: "ends before it starts".into(),
            });
        }
        let (first, last) = match (self.samples.first(), self.samples.last()) {
            (Some(f), Some(l)) => (f.timestamp_ms, l.timestamp_ms),
            _ => {
                return Err(TraceError::Window {
                    start_ms: w.start_ms,
                    end_ms: w.end_ms,
                    msg: "has no counter samples to lie within".into(),
                })
            }
        };
        if w.start_ms < first || w.end_ms > last {
            return Err(TraceError::Window {
                start_ms: w.start_ms,
                end_ms: w.end_ms,
                msg: format!("is outside the sampled span [{first}, {last}] ms"),
            });
        }
        Ok(())
    }

    /// Per-device sample streams, each in timestamp order.
    pub fn streams(&self) -> BTreeMap<DeviceKey, Vec<&CounterSample>> {
        let mut map: BTreeMap<DeviceKey, Vec<&CounterSample>> = BTreeMap::new();
        for s in &self.samples {
            map.entry(s.device()).or_default().push(s);
        }
        for stream in map.values_mut() {
            stream.sort_by_key(|s| s.timestamp_ms);
        }
        map
    }

    /// Core samples whose interval end lies inside the window.
    pub fn core_in_window(&self) -> Vec<CoreSample> {
        self.core
            .iter()
            .filter(|c| self.window.contains(c.timestamp_ms) && c.timestamp_ms > self.window.start_ms)
            .copied()
            .collect()
    }
}

/// Accounted traffic per sample interval. Interval `i` spans
/// `(timestamps_ms[i] - interval_ms[i], timestamps_ms[i]]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrafficSeries {
    pub timestamps_ms: Vec<u64>,
    pub interval_ms: Vec<u64>,
    pub read_bytes: Vec<u64>,
    pub write_bytes: Vec<u64>,
}

impl TrafficSeries {
    pub fn len(&self) -> usize {
        self.timestamps_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_ms.is_empty()
    }

    pub fn total_read(&self) -> u64 {
        self.read_bytes.iter().sum()
    }

    pub fn total_write(&self) -> u64 {
        self.write_bytes.iter().sum()
    }
}

/// Mode-appropriate accounted traffic: DRAM DIMMs in DRAM-only and cached
/// mode (the DRAM cache sees every access first), DRAM plus NVDIMMs in
/// uncached mode.
pub fn account_traffic(trace: &CounterTrace) -> Result<TrafficSeries> {
    if trace.mode == MemoryMode::DramOnly
        && trace
            .samples
            .iter()
            .any(|s| s.device_kind == DeviceKind::Nvdimm)
    {
        return Err(TraceError::ModeMismatch {
            mode: trace.mode,
            kind: DeviceKind::Nvdimm,
        });
    }
    account_devices(trace, trace.mode.accounted_kinds())
}

/// Sum of per-interval counter deltas over the devices of the given kinds.
///
/// Interval boundaries are the union of all sample timestamps inside the
/// window. A device's delta between two consecutive in-window readings is
/// attributed to the interval that ends at the later reading, so totals are
/// exact.
pub fn account_devices(trace: &CounterTrace, kinds: &[DeviceKind]) -> Result<TrafficSeries> {
    let w = trace.window;
    let mut bounds: Vec<u64> = trace
        .samples
        .iter()
        .map(|s| s.timestamp_ms)
        .filter(|&t| w.contains(t))
        .collect();
    bounds.sort_unstable();
    bounds.dedup();
    if bounds.len() < 2 {
        return Err(TraceError::EmptySeries);
    }
    let n = bounds.len() - 1;
    let mut series = TrafficSeries {
        timestamps_ms: bounds[1..].to_vec(),
        interval_ms: bounds.windows(2).map(|b| b[1] - b[0]).collect(),
        read_bytes: vec![0; n],
        write_bytes: vec![0; n],
    };
    for (device, stream) in trace.streams() {
        if !kinds.contains(&device.kind) {
            continue;
        }
        let inside: Vec<_> = stream
            .into_iter()
            .filter(|s| w.contains(s.timestamp_ms))
            .collect();
        for pair in inside.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            // bounds[0] <= a.timestamp_ms < b.timestamp_ms, so idx >= 1.
            let idx = bounds
                .binary_search(&b.timestamp_ms)
                .expect("sample timestamp is a boundary");
            series.read_bytes[idx - 1] += b.read_bytes - a.read_bytes;
            series.write_bytes[idx - 1] += b.write_bytes - a.write_bytes;
        }
    }
    Ok(series)
}

/// File locations of one trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracePaths {
    pub mem: PathBuf,
    pub core: PathBuf,
    pub meta: PathBuf,
}

impl TracePaths {
    pub fn for_stem(dir: &Path, stem: &str) -> Self {
        TracePaths {
            mem: dir.join(format!("{stem}.mem.csv")),
            core: dir.join(format!("{stem}.core.csv")),
            meta: dir.join(format!("{stem}.meta")),
        }
    }

    /// Derives sidecar paths from a `<stem>.mem.csv` path. A bare stem is
    /// accepted too.
    pub fn from_mem_path(path: &Path) -> Self {
        let dir = path.parent().unwrap_or_else(|| Path::new(""));
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let stem = name.strip_suffix(".mem.csv").unwrap_or(&name);
        Self::for_stem(dir, stem)
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Reads and validates a trace given the path of its memory-counter file.
pub fn parse_trace(path: &Path) -> Result<CounterTrace> {
    let paths = TracePaths::from_mem_path(path);
    let mem_name = paths.mem.display().to_string();
    let samples = parse_counter_csv(read_file(&paths.mem)?.as_bytes(), &mem_name)?;
    let core = if paths.core.exists() {
        let name = paths.core.display().to_string();
        parse_core_csv(read_file(&paths.core)?.as_bytes(), &name)?
    } else {
        Vec::new()
    };
    let meta = parse_metadata(&read_file(&paths.meta)?)?;
    CounterTrace::new(
        samples,
        core,
        meta.mode,
        meta.concurrency,
        meta.footprint_bytes,
        meta.window,
    )
}

fn check_header(
    reader: &mut csv::Reader<impl Read>,
    expected: &[&str],
    file: &str,
) -> Result<()> {
    let header = reader.headers().map_err(|e| TraceError::Parse {
        file: file.into(),
        line: 1,
        msg: e.to_string(),
    })?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(TraceError::Parse {
            file: file.into(),
            line: 1,
            msg: format!("expected header '{}'", expected.join(",")),
        });
    }
    Ok(())
}

fn field<T: FromStr>(record: &csv::StringRecord, idx: usize, name: &str, file: &str, line: u64) -> Result<T> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| TraceError::Parse {
        file: file.into(),
        line,
        msg: format!("invalid {name} '{raw}'"),
    })
}

fn csv_reader(input: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(input)
}

pub fn parse_counter_csv(input: impl Read, file: &str) -> Result<Vec<CounterSample>> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, &MEM_HEADER, file)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TraceError::Parse {
            file: file.into(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != MEM_HEADER.len() {
            return Err(TraceError::Parse {
                file: file.into(),
                line,
                msg: format!("expected {} fields, found {}", MEM_HEADER.len(), record.len()),
            });
        }
        let kind_raw = record[2].trim();
        let device_kind = kind_raw
            .parse()
            .map_err(|_| TraceError::UnknownDeviceKind {
                file: file.into(),
                line,
                kind: kind_raw.into(),
            })?;
        out.push(CounterSample {
            timestamp_ms: field(&record, 0, "timestamp_ms", file, line)?,
            socket: field(&record, 1, "socket", file, line)?,
            device_kind,
            device_id: field(&record, 3, "device_id", file, line)?,
            read_bytes: field(&record, 4, "read_bytes", file, line)?,
            write_bytes: field(&record, 5, "write_bytes", file, line)?,
        });
    }
    Ok(out)
}

pub fn parse_core_csv(input: impl Read, file: &str) -> Result<Vec<CoreSample>> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, &CORE_HEADER, file)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TraceError::Parse {
            file: file.into(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != CORE_HEADER.len() {
            return Err(TraceError::Parse {
                file: file.into(),
                line,
                msg: format!("expected {} fields, found {}", CORE_HEADER.len(), record.len()),
            });
        }
        let mut events = [0u64; EVENT_COUNT];
        for (i, e) in events.iter_mut().enumerate() {
            *e = field(&record, i + 1, CORE_HEADER[i + 1], file, line)?;
        }
        out.push(CoreSample {
            timestamp_ms: field(&record, 0, "timestamp_ms", file, line)?,
            events,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceMetadata {
    pub mode: MemoryMode,
    pub concurrency: u32,
    pub footprint_bytes: u64,
    pub window: Window,
}

pub fn parse_metadata(text: &str) -> Result<TraceMetadata> {
    let mut kv = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| TraceError::Metadata(format!("line {}: expected key=value", i + 1)))?;
        let k = k.trim();
        if !matches!(
            k,
            "mode" | "concurrency" | "footprint_bytes" | "window_start_ms" | "window_end_ms"
        ) {
            return Err(TraceError::Metadata(format!("line {}: unknown key '{k}'", i + 1)));
        }
        kv.insert(k.to_owned(), v.trim().to_owned());
    }
    fn get<T: FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
        let v = kv
            .get(key)
            .ok_or_else(|| TraceError::Metadata(format!("missing key '{key}'")))?;
        v.parse()
            .map_err(|_| TraceError::Metadata(format!("invalid value '{v}' for '{key}'")))
    }
    let mode_raw: String = get(&kv, "mode")?;
    Ok(TraceMetadata {
        mode: mode_raw.parse().map_err(TraceError::Metadata)?,
        concurrency: get(&kv, "concurrency")?,
        footprint_bytes: get(&kv, "footprint_bytes")?,
        window: Window {
            start_ms: get(&kv, "window_start_ms")?,
            end_ms: get(&kv, "window_end_ms")?,
        },
    })
}

pub fn format_metadata(trace: &CounterTrace) -> String {
    format!(
        "mode={}\nconcurrency={}\nfootprint_bytes={}\nwindow_start_ms={}\nwindow_end_ms={}\n",
        trace.mode,
        trace.concurrency,
        trace.footprint_bytes,
        trace.window.start_ms,
        trace.window.end_ms
    )
}

pub fn write_counter_csv(samples: &[CounterSample], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", MEM_HEADER.join(","))?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.timestamp_ms, s.socket, s.device_kind, s.device_id, s.read_bytes, s.write_bytes
        )?;
    }
    Ok(())
}

pub fn write_core_csv(core: &[CoreSample], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", CORE_HEADER.join(","))?;
    for c in core {
        let e = c.events;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.timestamp_ms, e[0], e[1], e[2], e[3], e[4], e[5]
        )?;
    }
    Ok(())
}

/// Writes the three trace files under `dir` and returns their paths.
pub fn write_trace(trace: &CounterTrace, dir: &Path, stem: &str) -> Result<TracePaths> {
    let paths = TracePaths::for_stem(dir, stem);
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| TraceError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut buf = Vec::new();
    write_counter_csv(&trace.samples, &mut buf).map_err(io(&paths.mem))?;
    fs::write(&paths.mem, &buf).map_err(io(&paths.mem))?;
    buf.clear();
    write_core_csv(&trace.core, &mut buf).map_err(io(&paths.core))?;
    fs::write(&paths.core, &buf).map_err(io(&paths.core))?;
    fs::write(&paths.meta, format_metadata(trace)).map_err(io(&paths.meta))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GB: u64 = 1_000_000_000;

    fn dram(t: u64, id: u16, r: u64, w: u64) -> CounterSample {
        CounterSample {
            timestamp_ms: t,
            socket: 0,
            device_kind: DeviceKind::DramDimm,
            device_id: id,
            read_bytes: r,
            write_bytes: w,
        }
    }

    fn nvm(t: u64, id: u16, r: u64, w: u64) -> CounterSample {
        CounterSample {
            device_kind: DeviceKind::Nvdimm,
            ..dram(t, id, r, w)
        }
    }

    fn trace(samples: Vec<CounterSample>, mode: MemoryMode) -> Result<CounterTrace> {
        let end = samples.iter().map(|s| s.timestamp_ms).max().unwrap_or(0);
        CounterTrace::new(
            samples,
            vec![],
            mode,
            24,
            1 << 30,
            Window {
                start_ms: 0,
                end_ms: end,
            },
        )
    }

    #[test]
    fn two_dram_samples_give_one_interval() {
        let csv = "timestamp_ms,socket,device_kind,device_id,read_bytes,write_bytes\n\
                   0,0,dram,0,0,0\n\
                   1000,0,dram,0,1000000000,100000000\n";
        let samples = parse_counter_csv(csv.as_bytes(), "t.csv").unwrap();
        assert_eq!(samples.len(), 2);
        let t = trace(samples, MemoryMode::DramOnly).unwrap();
        let s = account_traffic(&t).unwrap();
        assert_eq!(s.timestamps_ms, vec![1000]);
        assert_eq!(s.interval_ms, vec![1000]);
        assert_eq!(s.read_bytes, vec![GB]);
        assert_eq!(s.write_bytes, vec![GB / 10]);
    }

    #[test]
    fn decreasing_counter_is_integrity_error() {
        let err = trace(vec![dram(0, 3, 10, 0), dram(1000, 3, 5, 0)], MemoryMode::DramOnly)
            .unwrap_err();
        match err {
            TraceError::Integrity { device, .. } => assert!(device.contains("dram 3")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "timestamp_ms,socket,device_kind,device_id,read_bytes,write_bytes\n\
                   0,0,dram,0,0,0\n\
                   1000,0,dram,0,abc,0\n";
        match parse_counter_csv(csv.as_bytes(), "t.csv").unwrap_err() {
            TraceError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_device_kind() {
        let csv = "timestamp_ms,socket,device_kind,device_id,read_bytes,write_bytes\n\
                   0,0,hbm,0,0,0\n";
        assert!(matches!(
            parse_counter_csv(csv.as_bytes(), "t.csv"),
            Err(TraceError::UnknownDeviceKind { line: 2, .. })
        ));
    }

    #[test]
    fn wrong_header_rejected() {
        let csv = "t,socket,device_kind,device_id,read_bytes,write_bytes\n";
        assert!(matches!(
            parse_counter_csv(csv.as_bytes(), "t.csv"),
            Err(TraceError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn uncached_sums_dram_and_nvm() {
        let t = trace(
            vec![
                dram(0, 0, 0, 0),
                nvm(0, 0, 0, 0),
                dram(1000, 0, GB, 0),
                nvm(1000, 0, 2 * GB, 0),
            ],
            MemoryMode::UncachedNvm,
        )
        .unwrap();
        assert_eq!(account_traffic(&t).unwrap().read_bytes, vec![3 * GB]);
    }

    #[test]
    fn cached_counts_dram_only() {
        let t = trace(
            vec![
                dram(0, 0, 0, 0),
                nvm(0, 0, 0, 0),
                dram(1000, 0, GB, 0),
                nvm(1000, 0, 2 * GB, 0),
            ],
            MemoryMode::CachedNvm,
        )
        .unwrap();
        assert_eq!(account_traffic(&t).unwrap().read_bytes, vec![GB]);
        let fills = account_devices(&t, &[DeviceKind::Nvdimm]).unwrap();
        assert_eq!(fills.read_bytes, vec![2 * GB]);
    }

    #[test]
    fn dram_only_rejects_nvdimm_records() {
        let err = trace(vec![dram(0, 0, 0, 0), nvm(1000, 0, 1, 1)], MemoryMode::DramOnly)
            .unwrap_err();
        assert!(matches!(err, TraceError::ModeMismatch { .. }));
    }

    #[test]
    fn empty_window() {
        let mut t = trace(vec![dram(0, 0, 0, 0), dram(1000, 0, 1, 1)], MemoryMode::DramOnly)
            .unwrap();
        t.window = Window {
            start_ms: 200,
            end_ms: 800,
        };
        assert!(matches!(account_traffic(&t), Err(TraceError::EmptySeries)));
    }

    #[test]
    fn irregular_timestamps_attribute_to_later_reading() {
        // Device 1 skips the 1000 ms reading; its delta lands in (1000, 2000].
        let t = trace(
            vec![
                dram(0, 0, 0, 0),
                dram(0, 1, 0, 0),
                dram(1000, 0, 10, 0),
                dram(2000, 0, 20, 0),
                dram(2000, 1, 7, 3),
            ],
            MemoryMode::DramOnly,
        )
        .unwrap();
        let s = account_traffic(&t).unwrap();
        assert_eq!(s.read_bytes, vec![10, 17]);
        assert_eq!(s.write_bytes, vec![0, 3]);
    }

    #[test]
    fn window_outside_span() {
        let err = CounterTrace::new(
            vec![dram(0, 0, 0, 0), dram(1000, 0, 1, 1)],
            vec![],
            MemoryMode::DramOnly,
            1,
            1,
            Window {
                start_ms: 0,
                end_ms: 5000,
            },
        )
        .unwrap_err();
        assert!(matches!(err, TraceError::Window { .. }));
    }

    #[test]
    fn metadata_roundtrip_and_errors() {
        let t = trace(vec![dram(0, 0, 0, 0), dram(1000, 0, 1, 1)], MemoryMode::CachedNvm).unwrap();
        let meta = parse_metadata(&format_metadata(&t)).unwrap();
        assert_eq!(meta.mode, MemoryMode::CachedNvm);
        assert_eq!(meta.window, t.window);
        assert!(parse_metadata("mode=dram-only\n").is_err());
        assert!(parse_metadata("colour=blue\n").is_err());
    }

    #[test]
    fn core_sample_ipc() {
        let c = CoreSample {
            timestamp_ms: 1000,
            events: [2_000_000_000, 1_000_000_000, 0, 0, 0, 0],
        };
        assert_eq!(c.ipc(), Some(2.0));
        let idle = CoreSample {
            timestamp_ms: 1000,
            events: [0; EVENT_COUNT],
        };
        assert_eq!(idle.ipc(), None);
    }

    #[test]
    fn trace_paths_from_mem_path() {
        let p = TracePaths::from_mem_path(Path::new("out/run1.mem.csv"));
        assert_eq!(p.core, Path::new("out/run1.core.csv"));
        assert_eq!(p.meta, Path::new("out/run1.meta"));
    }
}
