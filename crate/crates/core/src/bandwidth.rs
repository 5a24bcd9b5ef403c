//! Bandwidth timelines, smoothing and phase segmentation.

use serde::{Deserialize, Serialize};

use crate::trace_io::TrafficSeries;

/// 1 MB/s is 10^6 bytes per second throughout the toolkit.
pub const BYTES_PER_MB: f64 = 1e6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalysisError {
    #[error("traffic series is empty")]
    Empty,
    #[error("interval {index} has zero length")]
    DegenerateInterval { index: usize },
    #[error("trace of {len} samples is too short for {max_phases} phases of at least {min_len} samples")]
    TooShort {
        len: usize,
        max_phases: usize,
        min_len: usize,
    },
    #[error("phase bounds [{start}, {end}] are empty or outside a trace of {len} samples")]
    BadBounds { start: usize, end: usize, len: usize },
}

/// Read/write bandwidth per sample interval.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BandwidthTrace {
    /// Interval end, seconds since run start.
    pub time_s: Vec<f64>,
    pub interval_s: Vec<f64>,
    pub read_mbps: Vec<f64>,
    pub write_mbps: Vec<f64>,
}

impl BandwidthTrace {
    pub fn len(&self) -> usize {
        self.time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_s.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.interval_s.iter().sum()
    }

    /// Builds a trace with unit-second intervals, mostly for tests and
    /// synthetic inputs.
    pub fn uniform(read_mbps: Vec<f64>, write_mbps: Vec<f64>) -> Self {
        assert_eq!(read_mbps.len(), write_mbps.len());
        let n = read_mbps.len();
        BandwidthTrace {
            time_s: (1..=n).map(|i| i as f64).collect(),
            interval_s: vec![1.0; n],
            read_mbps,
            write_mbps,
        }
    }

    /// Writes `time_s,read_mbps,write_mbps` rows.
    pub fn write_plot_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "time_s,read_mbps,write_mbps")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{}",
                self.time_s[i], self.read_mbps[i], self.write_mbps[i]
            )?;
        }
        Ok(())
    }
}

pub fn compute_bandwidth(series: &TrafficSeries) -> Result<BandwidthTrace, AnalysisError> {
    if series.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut out = BandwidthTrace::default();
    for i in 0..series.len() {
        if series.interval_ms[i] == 0 {
            return Err(AnalysisError::DegenerateInterval { index: i });
        }
        let dt = series.interval_ms[i] as f64 / 1000.0;
        out.time_s.push(series.timestamps_ms[i] as f64 / 1000.0);
        out.interval_s.push(dt);
        out.read_mbps
            .push(series.read_bytes[i] as f64 / dt / BYTES_PER_MB);
        out.write_mbps
            .push(series.write_bytes[i] as f64 / dt / BYTES_PER_MB);
    }
    Ok(out)
}

/// Centered moving average with windows truncated at the edges.
///
/// For an even `window_len` the window extends one sample further to the
/// left. A length of 0 is treated as 1.
pub fn moving_average(trace: &BandwidthTrace, window_len: usize) -> BandwidthTrace {
    let len = window_len.max(1);
    let left = len / 2;
    let right = len - 1 - left;
    let smooth = |xs: &[f64]| -> Vec<f64> {
        let n = xs.len();
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(left);
                let hi = (i + right).min(n - 1);
                xs[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect()
    };
    BandwidthTrace {
        time_s: trace.time_s.clone(),
        interval_s: trace.interval_s.clone(),
        read_mbps: smooth(&trace.read_mbps),
        write_mbps: smooth(&trace.write_mbps),
    }
}

/// Summary of a contiguous run of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub start_index: usize,
    /// Inclusive.
    pub end_index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub avg_read_mbps: f64,
    pub avg_write_mbps: f64,
    pub peak_read_mbps: f64,
    pub peak_write_mbps: f64,
    /// avg_read / avg_write; +inf when the phase writes nothing.
    #[serde(with = "crate::report::f64_or_inf")]
    pub rw_ratio: f64,
    pub duration_share: f64,
}

/// Time-weighted statistics for samples `start..=end`.
pub fn phase_stats(trace: &BandwidthTrace, start: usize, end: usize) -> Result<Phase, AnalysisError> {
    if start > end || end >= trace.len() {
        return Err(AnalysisError::BadBounds {
            start,
            end,
            len: trace.len(),
        });
    }
    let span = start..=end;
    let dur: f64 = trace.interval_s[span.clone()].iter().sum();
    if dur <= 0.0 {
        return Err(AnalysisError::DegenerateInterval { index: start });
    }
    let weighted = |xs: &[f64]| {
        xs[span.clone()]
            .iter()
            .zip(&trace.interval_s[span.clone()])
            .map(|(x, dt)| x * dt)
            .sum::<f64>()
            / dur
    };
    let peak = |xs: &[f64]| xs[span.clone()].iter().copied().fold(0.0, f64::max);
    let avg_read = weighted(&trace.read_mbps);
    let avg_write = weighted(&trace.write_mbps);
    Ok(Phase {
        start_index: start,
        end_index: end,
        start_s: trace.time_s[start] - trace.interval_s[start],
        end_s: trace.time_s[end],
        avg_read_mbps: avg_read,
        avg_write_mbps: avg_write,
        peak_read_mbps: peak(&trace.read_mbps),
        peak_write_mbps: peak(&trace.write_mbps),
        rw_ratio: rw_ratio(avg_read, avg_write),
        duration_share: dur / trace.duration_s(),
    })
}

pub fn rw_ratio(read: f64, write: f64) -> f64 {
    if write == 0.0 {
        f64::INFINITY
    } else {
        read / write
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub max_phases: usize,
    pub min_phase_len: usize,
    /// Cost of each segment beyond the first, as a fraction of the total
    /// sum of squares of the trace.
    pub penalty: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            max_phases: 4,
            min_phase_len: 3,
            penalty: 0.05,
        }
    }
}

/// Two-channel squared-error cost of any sample range in O(1).
struct SegmentCost {
    s1: [Vec<f64>; 2],
    s2: [Vec<f64>; 2],
}

impl SegmentCost {
    fn new(trace: &BandwidthTrace) -> Self {
        let prefix = |xs: &[f64]| {
            // Centering first keeps a constant channel at exactly zero cost.
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let mut s1 = Vec::with_capacity(xs.len() + 1);
            let mut s2 = Vec::with_capacity(xs.len() + 1);
            let (mut a, mut b) = (0.0, 0.0);
            s1.push(0.0);
            s2.push(0.0);
            for x in xs {
                let d = x - mean;
                a += d;
                b += d * d;
                s1.push(a);
                s2.push(b);
            }
            (s1, s2)
        };
        let (r1, r2) = prefix(&trace.read_mbps);
        let (w1, w2) = prefix(&trace.write_mbps);
        SegmentCost {
            s1: [r1, w1],
            s2: [r2, w2],
        }
    }

    /// Within-segment sum of squared deviations over samples `i..j`.
    fn cost(&self, i: usize, j: usize) -> f64 {
        let n = (j - i) as f64;
        (0..2)
            .map(|c| {
                let s = self.s1[c][j] - self.s1[c][i];
                let q = self.s2[c][j] - self.s2[c][i];
                (q - s * s / n).max(0.0)
            })
            .sum()
    }
}

/// Optimal piecewise-constant segmentation of the (read, write) series.
///
/// For each segment count `k` in `1..=max_phases` an exact dynamic program
/// finds the boundaries minimizing the within-segment squared error; the
/// count minimizing `cost_k + (k - 1) * penalty * total_ss` is returned,
/// preferring fewer segments on ties.
pub fn segment_phases(
    trace: &BandwidthTrace,
    params: SegmentParams,
) -> Result<Vec<Phase>, AnalysisError> {
    let bounds = segment_bounds(trace, params)?;
    bounds
        .iter()
        .map(|&(s, e)| phase_stats(trace, s, e))
        .collect()
}

/// Inclusive (start, end) sample ranges of the optimal segmentation.
pub fn segment_bounds(
    trace: &BandwidthTrace,
    params: SegmentParams,
) -> Result<Vec<(usize, usize)>, AnalysisError> {
    let n = trace.len();
    let kmax = params.max_phases.max(1);
    let m = params.min_phase_len.max(1);
    if n == 0 || n < kmax * m {
        return Err(AnalysisError::TooShort {
            len: n,
            max_phases: kmax,
            min_len: m,
        });
    }
    let cost = SegmentCost::new(trace);
    let total_ss = cost.cost(0, n);

    // best[k][j]: minimal cost of splitting samples 0..j into k+1 segments.
    let mut best = vec![vec![f64::INFINITY; n + 1]; kmax];
    let mut from = vec![vec![0usize; n + 1]; kmax];
    for j in m..=n {
        best[0][j] = cost.cost(0, j);
    }
    for k in 1..kmax {
        for j in (k + 1) * m..=n {
            let mut b = f64::INFINITY;
            let mut arg = 0;
            for i in k * m..=j - m {
                let prev = best[k - 1][i];
                if !prev.is_finite() {
                    continue;
                }
                let c = prev + cost.cost(i, j);
                if c < b {
                    b = c;
                    arg = i;
                }
            }
            best[k][j] = b;
            from[k][j] = arg;
        }
    }

    let step = params.penalty * total_ss;
    let eps = 1e-12 * total_ss;
    let mut chosen = 0;
    let mut chosen_score = best[0][n];
    for (k, row) in best.iter().enumerate().skip(1) {
        let score = row[n] + k as f64 * step;
        if score < chosen_score - eps {
            chosen = k;
            chosen_score = score;
        }
    }

    let mut ends = Vec::with_capacity(chosen + 1);
    let mut j = n;
    for k in (0..=chosen).rev() {
        let i = if k == 0 { 0 } else { from[k][j] };
        ends.push((i, j - 1));
        j = i;
    }
    ends.reverse();
    Ok(ends)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(bytes: &[(u64, u64)], dt_ms: u64) -> TrafficSeries {
        TrafficSeries {
            timestamps_ms: (1..=bytes.len() as u64).map(|i| i * dt_ms).collect(),
            interval_ms: vec![dt_ms; bytes.len()],
            read_bytes: bytes.iter().map(|b| b.0).collect(),
            write_bytes: bytes.iter().map(|b| b.1).collect(),
        }
    }

    #[test]
    fn one_gigabyte_per_second() {
        let bw = compute_bandwidth(&series(&[(1_000_000_000, 0)], 1000)).unwrap();
        assert_eq!(bw.read_mbps, vec![1000.0]);
        assert_eq!(bw.write_mbps, vec![0.0]);
    }

    #[test]
    fn alternating_intervals() {
        let s: Vec<_> = (0..6)
            .map(|i| (if i % 2 == 0 { 2_000_000_000 } else { 0 }, 0))
            .collect();
        let bw = compute_bandwidth(&series(&s, 1000)).unwrap();
        assert_eq!(bw.read_mbps, vec![2000.0, 0.0, 2000.0, 0.0, 2000.0, 0.0]);
        let mean = bw.read_mbps.iter().sum::<f64>() / 6.0;
        assert_eq!(mean, 1000.0);
    }

    #[test]
    fn zero_interval_is_degenerate() {
        let mut s = series(&[(1, 1), (1, 1)], 1000);
        s.interval_ms[1] = 0;
        assert_eq!(
            compute_bandwidth(&s),
            Err(AnalysisError::DegenerateInterval { index: 1 })
        );
        assert_eq!(compute_bandwidth(&TrafficSeries::default()), Err(AnalysisError::Empty));
    }

    #[test]
    fn moving_average_cases() {
        let t = BandwidthTrace::uniform(vec![0., 0., 9000., 0., 0.], vec![1., 2., 3., 4., 5.]);
        assert_eq!(moving_average(&t, 1), t);
        let m = moving_average(&t, 3);
        assert_eq!(m.read_mbps, vec![0., 3000., 3000., 3000., 0.]);
        let c = BandwidthTrace::uniform(vec![5000.; 7], vec![5000.; 7]);
        for w in 1..9 {
            assert_eq!(moving_average(&c, w).read_mbps, vec![5000.; 7]);
        }
    }

    #[test]
    fn phase_stats_cases() {
        let t = BandwidthTrace::uniform(vec![3900.; 4], vec![1300.; 4]);
        let p = phase_stats(&t, 0, 3).unwrap();
        assert!((p.rw_ratio - 3.0).abs() < 1e-12);
        assert_eq!(p.duration_share, 1.0);

        let z = BandwidthTrace::uniform(vec![100., 200.], vec![0., 0.]);
        let p = phase_stats(&z, 0, 1).unwrap();
        assert_eq!(p.rw_ratio, f64::INFINITY);
        assert_eq!(p.peak_write_mbps, 0.0);

        let one = BandwidthTrace::uniform(vec![10., 20., 30.], vec![1., 2., 3.]);
        let p = phase_stats(&one, 1, 1).unwrap();
        assert_eq!((p.avg_read_mbps, p.avg_write_mbps), (20., 2.));
        assert_eq!((p.peak_read_mbps, p.peak_write_mbps), (20., 2.));

        assert!(phase_stats(&one, 2, 1).is_err());
        assert!(phase_stats(&one, 0, 3).is_err());
    }

    #[test]
    fn constant_trace_is_one_phase() {
        let t = BandwidthTrace::uniform(vec![7.5; 40], vec![2.5; 40]);
        let phases = segment_phases(&t, SegmentParams::default()).unwrap();
        assert_eq!(phases.len(), 1);
        assert_eq!((phases[0].start_index, phases[0].end_index), (0, 39));
    }

    #[test]
    fn step_series_splits_at_step() {
        // 20% of samples at 33 GB/s write, then 3 GB/s.
        let n = 100;
        let write: Vec<f64> = (0..n).map(|i| if i < 20 { 33000. } else { 3000. }).collect();
        let read = vec![50000.; n];
        let t = BandwidthTrace::uniform(read, write);
        let phases = segment_phases(&t, SegmentParams::default()).unwrap();
        assert_eq!(phases.len(), 2);
        assert_eq!(phases[0].end_index, 19);
        assert!((phases[0].duration_share - 0.2).abs() < 1e-12);
        assert!((phases[1].duration_share - 0.8).abs() < 1e-12);
    }

    #[test]
    fn too_short() {
        let t = BandwidthTrace::uniform(vec![1.; 5], vec![1.; 5]);
        let p = SegmentParams {
            max_phases: 2,
            min_phase_len: 3,
            penalty: 0.05,
        };
        assert!(matches!(
            segment_phases(&t, p),
            Err(AnalysisError::TooShort { len: 5, .. })
        ));
    }

    #[test]
    fn weighted_average_respects_irregular_intervals() {
        let t = BandwidthTrace {
            time_s: vec![1.0, 4.0],
            interval_s: vec![1.0, 3.0],
            read_mbps: vec![100.0, 200.0],
            write_mbps: vec![0.0, 40.0],
        };
        let p = phase_stats(&t, 0, 1).unwrap();
        assert!((p.avg_read_mbps - 175.0).abs() < 1e-12);
        assert!((p.avg_write_mbps - 30.0).abs() < 1e-12);
        assert_eq!(p.start_s, 0.0);
    }
}
