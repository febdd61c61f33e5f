//! Decode throughput measurement.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{DecodeConfig, EncodeConfig};
use crate::decode::{decode_timed, StageTimes};
use crate::encode::encode;
use crate::error::{Error, Result};
use crate::skeleton::SkeletonSpec;
use crate::synth::{generate_scene, SynthConfig};

pub const WARMUP_RUNS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl StageStats {
    fn from_samples(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            median_ms: median(&s),
            p95_ms: nearest_rank(&s, 0.95),
        }
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Per-run stage times in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSample {
    pub vote_ms: f64,
    pub nms_ms: f64,
    pub cluster_ms: f64,
    pub assemble_ms: f64,
    pub total_ms: f64,
}

impl RunSample {
    fn new(stages: &StageTimes, total: std::time::Duration) -> Self {
        let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
        Self {
            vote_ms: ms(stages.vote),
            nms_ms: ms(stages.nms),
            cluster_ms: ms(stages.cluster),
            assemble_ms: ms(stages.assemble),
            total_ms: ms(total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub width: usize,
    pub height: usize,
    pub instances: usize,
    pub runs: usize,
    pub vote: StageStats,
    pub nms: StageStats,
    pub cluster: StageStats,
    pub assemble: StageStats,
    pub end_to_end: StageStats,
    /// Frames per second from the median end-to-end time.
    pub fps: f64,
    pub threads: usize,
    #[serde(skip)]
    pub samples: Vec<RunSample>,
}

impl BenchReport {
    pub fn stages(&self) -> [(&'static str, StageStats); 4] {
        [
            ("vote", self.vote),
            ("nms", self.nms),
            ("cluster", self.cluster),
            ("assemble", self.assemble),
        ]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io(e, 0);
        writeln!(out, "run,vote_ms,nms_ms,cluster_ms,assemble_ms,total_ms").map_err(io)?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(
                out,
                "{i},{:.6},{:.6},{:.6},{:.6},{:.6}",
                s.vote_ms, s.nms_ms, s.cluster_ms, s.assemble_ms, s.total_ms
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

/// Encodes one synthetic scene and times `decode` on it. Every timed output
/// is compared against an untimed reference decode.
pub fn bench_decode(scene_cfg: &SynthConfig, decode_cfg: &DecodeConfig, runs: usize) -> Result<BenchReport> {
    if runs < 10 {
        return Err(Error::Config(format!("bench needs at least 10 runs, got {runs}")));
    }
    decode_cfg.validate()?;
    let skeleton = SkeletonSpec::coco();
    let scene = generate_scene(scene_cfg)?;
    let enc_cfg = EncodeConfig {
        disk_radius: decode_cfg.disk_radius,
        offset_normalization: decode_cfg.offset_normalization,
        centroid_mode: decode_cfg.centroid_mode,
        ..Default::default()
    };
    let fields = encode(&scene, &skeleton, &enc_cfg)?;
    let run = || {
        let start = std::time::Instant::now();
        let (out, stages) = decode_timed(
            &fields.heatmaps,
            &fields.keycentroid,
            &fields.maskcentroid,
            &skeleton,
            decode_cfg,
        )?;
        Ok::<_, Error>((out, stages, start.elapsed()))
    };
    let (reference, _, _) = run()?;
    for _ in 0..WARMUP_RUNS {
        run()?;
    }
    let mut samples = Vec::with_capacity(runs);
    for i in 0..runs {
        let (out, stages, total) = run()?;
        if out != reference {
            return Err(Error::InvalidValue(format!("decode output changed on timed run {i}")));
        }
        samples.push(RunSample::new(&stages, total));
    }
    let stat = |f: fn(&RunSample) -> f64| StageStats::from_samples(&samples.iter().map(f).collect::<Vec<_>>());
    let end_to_end = stat(|s| s.total_ms);
    Ok(BenchReport {
        width: scene.width,
        height: scene.height,
        instances: scene.persons.len(),
        runs,
        vote: stat(|s| s.vote_ms),
        nms: stat(|s| s.nms_ms),
        cluster: stat(|s| s.cluster_ms),
        assemble: stat(|s| s.assemble_ms),
        end_to_end,
        fps: 1e3 / end_to_end.median_ms,
        threads: if decode_cfg.parallel_voting {
            rayon::current_num_threads()
        } else {
            1
        },
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistics() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(median(&s), 2.5);
        assert_eq!(nearest_rank(&s, 0.95), 4.0);
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&s, 0.95), 95.0);
    }

    #[test]
    fn too_few_runs() {
        assert!(matches!(
            bench_decode(&SynthConfig::default(), &DecodeConfig::default(), 9),
            Err(Error::Config(_))
        ));
    }
}
