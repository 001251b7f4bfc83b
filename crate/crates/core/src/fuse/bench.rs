use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{colourise_per_point, BatchedFuser, ColourisedCloud, FusionStrategy, SyncedFrame};
use crate::calib::CalibrationBundle;
use crate::error::{Error, Result};

/// Frames fused before timing starts.
pub const WARMUP_FRAMES: usize = 2;
const MIN_FRAMES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTiming {
    pub strategy: FusionStrategy,
    /// Frames timed, excluding warm-up.
    pub frames: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub fps: f64,
    /// One-off cost outside the per-frame loop (undistortion tables).
    pub setup_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub points_per_frame: usize,
    pub cameras: usize,
    pub warmup_frames: usize,
    pub per_point: StrategyTiming,
    pub batched: StrategyTiming,
    /// Batched throughput over per-point throughput.
    pub speedup: f64,
    pub mean_coloured_fraction: f64,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,frames,median_ms,p95_ms,mean_ms,fps,setup_ms\n");
        for t in [&self.per_point, &self.batched] {
            out.push_str(&format!(
                "{},{},{:.3},{:.3},{:.3},{:.3},{:.3}\n",
                t.strategy.name(),
                t.frames,
                t.median_ms,
                t.p95_ms,
                t.mean_ms,
                t.fps,
                t.setup_ms
            ));
        }
        out
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

fn summarise(strategy: FusionStrategy, mut latencies: Vec<f64>, setup_ms: f64) -> StrategyTiming {
    latencies.sort_by(f64::total_cmp);
    let total: f64 = latencies.iter().sum();
    let n = latencies.len();
    StrategyTiming {
        strategy,
        frames: n,
        median_ms: percentile(&latencies, 0.5),
        p95_ms: percentile(&latencies, 0.95),
        mean_ms: total / n as f64,
        fps: if total > 0.0 {
            1000.0 * n as f64 / total
        } else {
            f64::INFINITY
        },
        setup_ms,
    }
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

/// Times both strategies on the same frames and aborts with a correctness
/// error at the first frame where their outputs differ.
pub fn benchmark_fusion(frames: &[SyncedFrame], calib: &CalibrationBundle) -> Result<BenchReport> {
    if frames.len() < MIN_FRAMES {
        return Err(Error::invalid(format!(
            "benchmark needs at least {MIN_FRAMES} frames, got {}",
            frames.len()
        )));
    }
    let start = Instant::now();
    let fuser = BatchedFuser::new(calib);
    let setup_ms = ms_since(start);

    let mut per_point_ms = Vec::with_capacity(frames.len());
    let mut batched_ms = Vec::with_capacity(frames.len());
    let mut fraction_sum = 0.0;
    for (i, frame) in frames.iter().enumerate() {
        let start = Instant::now();
        let reference = colourise_per_point(frame, calib)?;
        let t_loop = ms_since(start);

        let start = Instant::now();
        let fused = fuser.fuse(frame)?;
        let t_batch = ms_since(start);

        check_identical(i, &reference, &fused)?;
        if !fused.is_empty() {
            fraction_sum += super::coloured_fraction(&fused)?;
        }
        if i >= WARMUP_FRAMES {
            per_point_ms.push(t_loop);
            batched_ms.push(t_batch);
        }
        log::debug!("frame {i}: per-point {t_loop:.1} ms, batched {t_batch:.1} ms");
    }
    let per_point = summarise(FusionStrategy::PerPoint, per_point_ms, 0.0);
    let batched = summarise(FusionStrategy::Batched, batched_ms, setup_ms);
    Ok(BenchReport {
        points_per_frame: frames[0].cloud.len(),
        cameras: frames[0].images.len(),
        warmup_frames: WARMUP_FRAMES,
        speedup: batched.fps / per_point.fps,
        per_point,
        batched,
        mean_coloured_fraction: fraction_sum / frames.len() as f64,
    })
}

fn check_identical(frame: usize, a: &ColourisedCloud, b: &ColourisedCloud) -> Result<()> {
    if a == b {
        return Ok(());
    }
    let first = (0..a.len().min(b.len()))
        .find(|&i| a.rgb[i] != b.rgb[i] || a.source[i] != b.source[i] || a.points[i] != b.points[i]);
    Err(Error::Correctness(match first {
        Some(i) => format!(
            "frame {frame}, point {i}: per-point {:?}/{:?}, batched {:?}/{:?}",
            a.rgb[i], a.source[i], b.rgb[i], b.source[i]
        ),
        None => format!("frame {frame}: point counts {} vs {}", a.len(), b.len()),
    }))
}
