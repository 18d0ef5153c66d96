//! Single-thread wall-clock benchmark harness.
//!
//! Runs forward passes of a built network over a list of input resolutions
//! with warmup and repetition, and reports median/mean/std timings next to
//! the static mult-add counts. The timed loop reuses one preallocated input
//! tensor and runs on exactly one worker.

use std::time::Instant;

use crate::analysis::count_flops;
use crate::arch::{Family, NetworkSpec};
use crate::error::{Error, Result};
use crate::kernels;
use crate::util::random_tensor;

/// Published single-thread reference timings (milliseconds) measured on a
/// Snapdragon 820 class device, shown beside measured numbers for context.
/// Keyed by (groups, scale, height, width).
const REFERENCE_MS: &[(usize, f32, usize, usize, f64)] = &[
    (3, 0.5, 224, 224, 15.2),
    (3, 0.5, 480, 640, 87.4),
    (3, 0.5, 720, 1280, 260.1),
    (3, 1.0, 224, 224, 37.8),
    (3, 1.0, 480, 640, 222.2),
    (3, 1.0, 720, 1280, 684.5),
    (3, 2.0, 224, 224, 108.8),
    (3, 2.0, 480, 640, 617.0),
    (3, 2.0, 720, 1280, 1857.6),
];

/// Reference timing for a built network at one resolution, when published.
pub fn reference_ms(spec: &NetworkSpec, h: usize, w: usize) -> Option<f64> {
    if spec.family != Family::ShuffleNet || spec.shallow {
        return None;
    }
    REFERENCE_MS
        .iter()
        .find(|(g, s, rh, rw, _)| *g == spec.groups && *s == spec.scale && *rh == h && *rw == w)
        .map(|(_, _, _, _, ms)| *ms)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ResolutionStats {
    pub height: usize,
    pub width: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub iterations: usize,
    pub mult_adds: u64,
    /// mult_adds / median time, in units of 1e9 mult-adds per second.
    pub effective_gmacs: f64,
    /// Published single-thread timing on the reference device, if any.
    pub reference_ms: Option<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BenchReport {
    pub model: String,
    pub machine: String,
    pub threads: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub rows: Vec<ResolutionStats>,
}

/// Best-effort CPU description for the report header.
pub fn machine_descriptor() -> String {
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|v| v.trim().to_string())
        })
        .unwrap_or_else(|| format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS));
    format!("{model} ({cores} cores, {})", std::env::consts::OS)
}

fn stats(samples_ms: &mut [f64]) -> (f64, f64, f64, f64, f64) {
    samples_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples_ms.len();
    let median = if n % 2 == 1 {
        samples_ms[n / 2]
    } else {
        0.5 * (samples_ms[n / 2 - 1] + samples_ms[n / 2])
    };
    let mean = samples_ms.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        samples_ms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (median, mean, var.sqrt(), samples_ms[0], samples_ms[n - 1])
}

/// Times forward passes of `spec` at each resolution.
///
/// Requires `warmup >= 3` and `iters >= 10`; the input tensor is allocated
/// once per resolution, outside the timed region. Fails loudly if the kernel
/// layer reports more than one worker.
pub fn run_benchmark(
    spec: &NetworkSpec,
    resolutions: &[(usize, usize)],
    warmup: usize,
    iters: usize,
) -> Result<BenchReport> {
    if warmup < 3 || iters < 10 {
        return Err(Error::BenchContract(format!(
            "need warmup >= 3 and iters >= 10, got warmup={warmup} iters={iters}"
        )));
    }
    let threads = kernels::parallelism();
    if threads != 1 {
        return Err(Error::BenchContract(format!(
            "kernel layer reports {threads} workers; the timing contract requires 1"
        )));
    }
    if resolutions.is_empty() {
        return Err(Error::BenchContract("no resolutions given".into()));
    }

    let mut rows = Vec::with_capacity(resolutions.len());
    for &(h, w) in resolutions {
        let mult_adds = count_flops(spec, (h, w))?.total_mult_adds;
        let input = random_tensor(1, 3, h, w, spec.seed ^ 0x5eed);

        for _ in 0..warmup {
            spec.forward(&input)?;
        }
        let mut samples_ms = Vec::with_capacity(iters);
        for _ in 0..iters {
            let t0 = Instant::now();
            let out = spec.forward(&input)?;
            let dt = t0.elapsed();
            samples_ms.push(dt.as_secs_f64() * 1e3);
            // Keep the pass observable so it cannot be optimized away.
            debug_assert!(!out.is_empty());
        }
        let (median_ms, mean_ms, std_ms, min_ms, max_ms) = stats(&mut samples_ms);
        rows.push(ResolutionStats {
            height: h,
            width: w,
            median_ms,
            mean_ms,
            std_ms,
            min_ms,
            max_ms,
            iterations: iters,
            mult_adds,
            effective_gmacs: mult_adds as f64 / (median_ms * 1e-3) / 1e9,
            reference_ms: reference_ms(spec, h, w),
        });
    }

    Ok(BenchReport {
        model: spec.name(),
        machine: machine_descriptor(),
        threads,
        warmup,
        iterations: iters,
        rows,
    })
}

impl BenchReport {
    /// Median time must not decrease as the pixel count grows.
    pub fn check_resolution_monotonicity(&self) -> Result<()> {
        let mut ordered: Vec<&ResolutionStats> = self.rows.iter().collect();
        ordered.sort_by_key(|r| r.height * r.width);
        for pair in ordered.windows(2) {
            if pair[1].median_ms < pair[0].median_ms {
                return Err(Error::BenchContract(format!(
                    "median time decreased from {:.3}ms at {}x{} to {:.3}ms at {}x{}",
                    pair[0].median_ms,
                    pair[0].height,
                    pair[0].width,
                    pair[1].median_ms,
                    pair[1].height,
                    pair[1].width
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "model: {}\nmachine: {}\nthreads: {}  warmup: {}  iterations: {}\n",
            self.model, self.machine, self.threads, self.warmup, self.iterations
        );
        out.push_str(&format!(
            "{:>10} {:>11} {:>11} {:>9} {:>11} {:>11} {:>11} {:>9} {:>9}\n",
            "input", "median ms", "mean ms", "std ms", "min ms", "max ms", "mult_adds", "GMAC/s", "ref ms"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:>10} {:>11.3} {:>11.3} {:>9.3} {:>11.3} {:>11.3} {:>11} {:>9.2} {:>9}\n",
                format!("{}x{}", r.height, r.width),
                r.median_ms,
                r.mean_ms,
                r.std_ms,
                r.min_ms,
                r.max_ms,
                r.mult_adds,
                r.effective_gmacs,
                r.reference_ms
                    .map(|v| format!("{v:.1}"))
                    .unwrap_or_else(|| "-".into()),
            ));
        }
        if self.rows.iter().any(|r| r.reference_ms.is_some()) {
            out.push_str(
                "ref ms: published single-thread timing on a Snapdragon 820 class device\n",
            );
        }
        out
    }
}

/// Measured and theoretical speedup of `fast` (bigger model) over `small`.
pub struct Speedup {
    pub measured: f64,
    pub theoretical: f64,
}

/// Ratio of median times at a shared resolution, next to the mult-add ratio.
pub fn speedup_at(
    big: &BenchReport,
    small: &BenchReport,
    h: usize,
    w: usize,
) -> Option<Speedup> {
    let b = big.rows.iter().find(|r| r.height == h && r.width == w)?;
    let s = small.rows.iter().find(|r| r.height == h && r.width == w)?;
    Some(Speedup {
        measured: b.median_ms / s.median_ms,
        theoretical: b.mult_adds as f64 / s.mult_adds as f64,
    })
}
