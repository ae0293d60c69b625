//! Tracking errors, drop and failure rates, and contact-force distribution.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{PlmError, Result};
use crate::geometry::Vec3;

/// Start of the window the tracking errors are measured over (s).
pub const METRIC_WINDOW_START: f64 = 5.0;

/// `sqrt(mean ‖actual − commanded‖²)` over the samples.
pub fn rms_error<const D: usize>(series: &[([f64; D], [f64; D])]) -> Result<f64> {
    if series.is_empty() {
        return Err(PlmError::InvalidArgument("rms error over an empty window".into()));
    }
    let sum: f64 = series
        .iter()
        .map(|(a, c)| a.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .sum();
    Ok((sum / series.len() as f64).sqrt())
}

/// Why an episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Dropped,
    RobotFailure,
    Diverged,
}

/// Per-episode evaluation record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub seed: u64,
    /// Absent when the episode ended before the metric window.
    pub lin_vel_rmse: Option<f64>,
    pub ang_vel_rmse: Option<f64>,
    pub height_rmse: Option<f64>,
    pub dropped: bool,
    pub robot_failed: bool,
    pub termination: Termination,
    pub end_time: f64,
    /// Mean normal force per robot over the metric window (N).
    pub per_robot_mean_normal_force: Vec<f64>,
    /// Imbalance between the two most populated opposing sides.
    pub side_imbalance: Option<f64>,
    /// Team return: mean over robots of the summed per-tick reward.
    pub mean_return: f64,
}

/// Errors of one tick inside the metric window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingSample {
    pub lin_vel: ([f64; 2], [f64; 2]),
    pub ang_vel: ([f64; 1], [f64; 1]),
    pub height: ([f64; 1], [f64; 1]),
}

/// RMS of the three tracking errors; `None` for an empty window.
pub fn tracking_errors(samples: &[TrackingSample]) -> Option<[f64; 3]> {
    if samples.is_empty() {
        return None;
    }
    let lin: Vec<_> = samples.iter().map(|s| s.lin_vel).collect();
    let ang: Vec<_> = samples.iter().map(|s| s.ang_vel).collect();
    let h: Vec<_> = samples.iter().map(|s| s.height).collect();
    Some([
        rms_error(&lin).ok()?,
        rms_error(&ang).ok()?,
        rms_error(&h).ok()?,
    ])
}

/// Batch statistics of a set of outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub episodes: usize,
    /// Episodes the tracking statistics are computed over (no drop, window reached).
    pub tracked_episodes: usize,
    pub lin_vel_rmse_mean: Option<f64>,
    pub lin_vel_rmse_stderr: Option<f64>,
    pub ang_vel_rmse_mean: Option<f64>,
    pub ang_vel_rmse_stderr: Option<f64>,
    pub height_rmse_mean: Option<f64>,
    pub height_rmse_stderr: Option<f64>,
    pub drop_percent: f64,
    pub failure_percent: f64,
    pub mean_return: f64,
}

fn mean_stderr(x: &[f64]) -> (Option<f64>, Option<f64>) {
    if x.is_empty() {
        return (None, None);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() == 1 {
        return (Some(mean), Some(0.0));
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

/// Drop and failure rates over every episode; tracking errors over the
/// episodes without a drop.
pub fn summarize_batch(outcomes: &[EpisodeOutcome]) -> Result<BatchSummary> {
    if outcomes.is_empty() {
        return Err(PlmError::InvalidArgument("cannot summarize an empty batch".into()));
    }
    let n = outcomes.len();
    let tracked: Vec<&EpisodeOutcome> = outcomes
        .iter()
        .filter(|o| !o.dropped && o.lin_vel_rmse.is_some())
        .collect();
    let col = |f: fn(&EpisodeOutcome) -> Option<f64>| -> Vec<f64> {
        tracked.iter().filter_map(|o| f(o)).collect()
    };
    let (lm, ls) = mean_stderr(&col(|o| o.lin_vel_rmse));
    let (am, as_) = mean_stderr(&col(|o| o.ang_vel_rmse));
    let (hm, hs) = mean_stderr(&col(|o| o.height_rmse));
    let dropped = outcomes.iter().filter(|o| o.dropped).count();
    let failed = outcomes.iter().filter(|o| o.robot_failed).count();
    Ok(BatchSummary {
        episodes: n,
        tracked_episodes: tracked.len(),
        lin_vel_rmse_mean: lm,
        lin_vel_rmse_stderr: ls,
        ang_vel_rmse_mean: am,
        ang_vel_rmse_stderr: as_,
        height_rmse_mean: hm,
        height_rmse_stderr: hs,
        drop_percent: dropped as f64 / n as f64 * 100.0,
        failure_percent: failed as f64 / n as f64 * 100.0,
        mean_return: outcomes.iter().map(|o| o.mean_return).sum::<f64>() / n as f64,
    })
}

/// Per-robot mean normal force over ticks with `t` in `window`.
/// `ticks` holds `(t, per-robot normal forces)`.
pub fn force_distribution(ticks: &[(f64, Vec<f64>)], window: [f64; 2]) -> Result<Vec<f64>> {
    if window[0] < METRIC_WINDOW_START - 1e-9 || window[1] < window[0] {
        return Err(PlmError::InvalidArgument(format!(
            "force window {window:?} must lie after the lift"
        )));
    }
    let inside: Vec<&Vec<f64>> = ticks
        .iter()
        .filter(|(t, _)| *t + 1e-9 >= window[0] && *t <= window[1] + 1e-9)
        .map(|(_, f)| f)
        .collect();
    let n = ticks.first().map_or(0, |(_, f)| f.len());
    if inside.is_empty() {
        return Ok(vec![0.0; n]);
    }
    let mut mean = vec![0.0; n];
    for f in &inside {
        if f.len() != n {
            return Err(PlmError::DimensionMismatch { expected: n, got: f.len() });
        }
        for (m, v) in mean.iter_mut().zip(f.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= inside.len() as f64);
    Ok(mean)
}

/// Opposing sides of a team: robots whose inward contact normals are
/// parallel to, respectively antiparallel to, the most shared direction.
pub fn opposing_sides(normals: &[Vec3]) -> (Vec<usize>, Vec<usize>) {
    let side = |axis: &Vec3| -> (Vec<usize>, Vec<usize>) {
        let a = normals.iter().enumerate().filter(|(_, n)| n.dot(axis) > 0.7).map(|(i, _)| i).collect();
        let b = normals.iter().enumerate().filter(|(_, n)| n.dot(axis) < -0.7).map(|(i, _)| i).collect();
        (a, b)
    };
    let mut best = (Vec::new(), Vec::new());
    for n in normals {
        let (a, b) = side(n);
        if a.len() + b.len() > best.0.len() + best.1.len() {
            best = (a, b);
        }
    }
    best
}

/// `|ΣA − ΣB| / max(ΣA, ΣB)` of the per-robot forces on two sides.
pub fn side_imbalance(forces: &[f64], sides: &(Vec<usize>, Vec<usize>)) -> Option<f64> {
    let (a, b) = sides;
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let sa: f64 = a.iter().map(|&i| forces[i]).sum();
    let sb: f64 = b.iter().map(|&i| forces[i]).sum();
    let m = sa.max(sb);
    if m <= 0.0 {
        return None;
    }
    Some((sa - sb).abs() / m)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Column names of the per-episode CSV.
pub const EPISODE_COLUMNS: [&str; 13] = [
    "row",
    "config_hash",
    "seed",
    "lin_vel_rmse",
    "ang_vel_rmse",
    "height_rmse",
    "dropped",
    "robot_failed",
    "termination",
    "end_time",
    "mean_return",
    "side_imbalance",
    "mean_normal_forces",
];

/// One row per episode followed by a `summary` row.
pub fn write_episode_csv<W: Write>(
    out: W,
    config_hash: &str,
    outcomes: &[EpisodeOutcome],
    summary: &BatchSummary,
    master_seed: u64,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EPISODE_COLUMNS)?;
    for (i, o) in outcomes.iter().enumerate() {
        let forces: Vec<String> = o.per_robot_mean_normal_force.iter().map(|f| f.to_string()).collect();
        w.write_record([
            i.to_string(),
            config_hash.to_string(),
            o.seed.to_string(),
            opt(o.lin_vel_rmse),
            opt(o.ang_vel_rmse),
            opt(o.height_rmse),
            o.dropped.to_string(),
            o.robot_failed.to_string(),
            serde_json::to_value(o.termination)?.as_str().unwrap_or_default().to_string(),
            o.end_time.to_string(),
            o.mean_return.to_string(),
            opt(o.side_imbalance),
            forces.join(";"),
        ])?;
    }
    w.write_record([
        "summary".to_string(),
        config_hash.to_string(),
        master_seed.to_string(),
        opt(summary.lin_vel_rmse_mean),
        opt(summary.ang_vel_rmse_mean),
        opt(summary.height_rmse_mean),
        summary.drop_percent.to_string(),
        summary.failure_percent.to_string(),
        String::new(),
        String::new(),
        summary.mean_return.to_string(),
        String::new(),
        String::new(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Column names of the summary CSV.
pub const SUMMARY_COLUMNS: [&str; 15] = [
    "config_hash",
    "master_seed",
    "episodes",
    "tracked_episodes",
    "lin_vel_rmse_mean",
    "lin_vel_rmse_stderr",
    "ang_vel_rmse_mean",
    "ang_vel_rmse_stderr",
    "height_rmse_mean",
    "height_rmse_stderr",
    "drop_percent",
    "failure_percent",
    "mean_return",
    "error_mask",
    "error_window_start",
];

pub fn write_summary_csv<W: Write>(out: W, config_hash: &str, master_seed: u64, s: &BatchSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    w.write_record([
        config_hash.to_string(),
        master_seed.to_string(),
        s.episodes.to_string(),
        s.tracked_episodes.to_string(),
        opt(s.lin_vel_rmse_mean),
        opt(s.lin_vel_rmse_stderr),
        opt(s.ang_vel_rmse_mean),
        opt(s.ang_vel_rmse_stderr),
        opt(s.height_rmse_mean),
        opt(s.height_rmse_stderr),
        s.drop_percent.to_string(),
        s.failure_percent.to_string(),
        s.mean_return.to_string(),
        "episodes_without_drop".to_string(),
        METRIC_WINDOW_START.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
