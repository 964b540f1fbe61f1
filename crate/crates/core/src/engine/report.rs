use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bench::TimingStats;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub stats: TimingStats,
}

/// Timing summary of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub stages: Vec<StageReport>,
    pub end_to_end_mean_ms: f64,
    pub achieved_fps: f64,
    /// Frames that reached the display inside the measured window.
    pub frames_displayed: u64,
    /// Frames overwritten in a mailbox before being consumed.
    pub dropped_frames: u64,
    /// Length of the measured window (warm-up excluded).
    pub duration_s: f64,
    pub warmup_frames: usize,
    /// Ids of every displayed frame, warm-up included, in display order.
    #[serde(skip)]
    pub displayed_frame_ids: Vec<u64>,
}

/// Rows of [`PipelineReport::to_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCsvRow {
    pub stage: String,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

impl PipelineReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Sum of per-stage mean latencies.
    pub fn stage_total_ms(&self) -> f64 {
        self.stages.iter().map(|s| s.stats.mean_ms).sum()
    }

    /// Each stage's share of the summed stage time, in percent.
    pub fn proportions(&self) -> Vec<(String, f64)> {
        let total = self.stage_total_ms();
        self.stages
            .iter()
            .map(|s| {
                let pct = if total > 0.0 { 100.0 * s.stats.mean_ms / total } else { 0.0 };
                (s.name.clone(), pct)
            })
            .collect()
    }

    /// `Stage | Time | Proportion`, closed by a total row with the achieved FPS.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Stage | Time | Proportion |\n|---|---:|---:|\n");
        for (s, (_, pct)) in self.stages.iter().zip(self.proportions()) {
            let _ = writeln!(out, "| {} | {:.1}ms | {:.1}% |", s.name, s.stats.mean_ms, pct);
        }
        let _ = writeln!(
            out,
            "| Total | {:.1}ms | {:.1} FPS |",
            self.end_to_end_mean_ms, self.achieved_fps
        );
        out
    }

    /// `stage,mean_ms,p50_ms,p95_ms`, one row per stage.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.stages {
            w.serialize(StageCsvRow {
                stage: s.name.clone(),
                mean_ms: s.stats.mean_ms,
                p50_ms: s.stats.p50_ms,
                p95_ms: s.stats.p95_ms,
            })
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn parse_csv(text: &str) -> Result<Vec<StageCsvRow>> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        r.deserialize().map(|row| row.map_err(csv_err)).collect()
    }
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Format(format!("csv: {e}"))
}
