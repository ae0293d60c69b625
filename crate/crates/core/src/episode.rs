//! Closed-loop episode runner and its trajectory log.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::commands::{PayloadCommand, SYNC_HORIZON};
use crate::curriculum::{episode_rng, generate_episode, Episode, EpisodeConfig, Stream};
use crate::error::{PlmError, Result};
use crate::geometry::{rotate_planar, Pose, Vec3};
use crate::metrics::{
    force_distribution, opposing_sides, side_imbalance, tracking_errors, EpisodeOutcome,
    Termination, TrackingSample, METRIC_WINDOW_START,
};
use crate::policy::{
    apply_action, build_observation, policy_forward, Action, ActionBounds, CfTracker,
    ObservationContext, PolicyParams, RigidOracle, ScriptedConfig, ScriptedController, ACTION_DIM,
};
use crate::rewards::{
    rigid_base_targets, total_reward, PenaltyInputs, RewardConfig, RewardInputs, ScheduleState,
};
use crate::world::{
    contact_wrench_summary, detect_robot_failure, spawn_scene, DropDetector, WorldState,
};

/// Which controller drives the team.
#[derive(Clone, Debug)]
pub enum Controller {
    Scripted(ScriptedConfig),
    /// Privileged welds; validation only.
    RigidOracle,
    Learned(Arc<PolicyParams>),
}

impl Controller {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::Scripted(_) => "scripted",
            Controller::RigidOracle => "rigid_oracle",
            Controller::Learned(_) => "learned",
        }
    }
}

/// Runner settings that are not part of the episode draw.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub bounds: ActionBounds,
    pub rewards: RewardConfig,
    /// Keep per-tick records (needed for logs and force/error export).
    pub record: bool,
    /// Stop at the first drop or robot failure.
    pub stop_on_failure: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            bounds: ActionBounds::default(),
            rewards: RewardConfig::default(),
            record: true,
            stop_on_failure: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotTick {
    pub base: [f64; 7],
    pub pad: [f64; 7],
    pub normal_force: f64,
    pub in_contact: bool,
    /// Whether the robot's contact-frame observation refreshed this tick.
    pub cf_updated: bool,
    pub action: [f64; ACTION_DIM],
    pub reward: f64,
    pub r_contact: f64,
    pub r_track: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub payload: [f64; 7],
    /// Root linear and angular velocity, world frame.
    pub payload_twist: [f64; 6],
    /// Command visible to the team during this tick.
    pub command: PayloadCommand,
    pub target: Option<[f64; 7]>,
    pub robots: Vec<RobotTick>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: u32,
    pub config_hash: String,
    pub seed: u64,
    pub controller: String,
    pub control_dt: f64,
    pub episode: Episode,
}

/// One line of a trajectory log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Header(Box<LogHeader>),
    Tick(TickRecord),
    Outcome(EpisodeOutcome),
}

pub const LOG_FORMAT: u32 = 1;

/// A complete episode log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub ticks: Vec<TickRecord>,
    pub outcome: EpisodeOutcome,
}

impl EpisodeLog {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let mut line = |l: &LogLine| -> Result<()> {
            serde_json::to_writer(&mut out, l)?;
            out.write_all(b"\n")?;
            Ok(())
        };
        line(&LogLine::Header(Box::new(self.header.clone())))?;
        for t in &self.ticks {
            line(&LogLine::Tick(t.clone()))?;
        }
        line(&LogLine::Outcome(self.outcome.clone()))?;
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(f))
    }

    pub fn read_jsonl<R: BufRead>(input: R, origin: &Path) -> Result<Self> {
        let err = |line: usize, reason: String| PlmError::LogParse {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        let mut header = None;
        let mut ticks = Vec::new();
        let mut outcome = None;
        let mut last = 0;
        for (i, text) in input.lines().enumerate() {
            let n = i + 1;
            last = n;
            let text = text?;
            if text.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&text).map_err(|e| err(n, e.to_string()))?;
            match parsed {
                LogLine::Header(h) => {
                    if header.is_some() || n != 1 {
                        return Err(err(n, "header must be the first line".into()));
                    }
                    if h.format != LOG_FORMAT {
                        return Err(err(n, format!("unsupported log format {}", h.format)));
                    }
                    header = Some(*h);
                }
                LogLine::Tick(t) => {
                    if header.is_none() {
                        return Err(err(n, "tick before header".into()));
                    }
                    if outcome.is_some() {
                        return Err(err(n, "tick after outcome".into()));
                    }
                    ticks.push(t);
                }
                LogLine::Outcome(o) => {
                    if outcome.is_some() {
                        return Err(err(n, "duplicate outcome".into()));
                    }
                    outcome = Some(o);
                }
            }
        }
        let header = header.ok_or_else(|| err(1, "missing header".into()))?;
        let outcome = outcome.ok_or_else(|| err(last, "missing outcome line".into()))?;
        Ok(Self { header, ticks, outcome })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(f), path)
    }

    /// `(t, per-robot normal force)` for every tick.
    pub fn normal_forces(&self) -> Vec<(f64, Vec<f64>)> {
        self.ticks
            .iter()
            .map(|t| (t.t, t.robots.iter().map(|r| r.normal_force).collect()))
            .collect()
    }

    /// Tracking samples of the metric window, recomputed from the log.
    pub fn tracking_samples(&self) -> Vec<TrackingSample> {
        self.ticks
            .iter()
            .filter(|t| t.t + 1e-9 >= METRIC_WINDOW_START)
            .map(|t| {
                let pose = Pose::from_array(t.payload);
                let v = Vec3::new(t.payload_twist[0], t.payload_twist[1], t.payload_twist[2]);
                tracking_sample(&pose, &v, t.payload_twist[5], &t.command)
            })
            .collect()
    }
}

fn tracking_sample(payload: &Pose, v: &Vec3, yaw_rate: f64, c: &PayloadCommand) -> TrackingSample {
    let v_cmd = rotate_planar(c.v_pl, payload.yaw());
    TrackingSample {
        lin_vel: ([v.x, v.y], v_cmd),
        ang_vel: ([yaw_rate], [c.omega_pl]),
        height: ([payload.position.z], [c.h_pl]),
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct EpisodeResult {
    pub outcome: EpisodeOutcome,
    /// Summed reward per robot.
    pub returns: Vec<f64>,
    pub log: Option<EpisodeLog>,
    pub world: WorldState,
}

/// Independent RNG per (episode, stream, robot).
pub fn robot_rng(seed: u64, stream: Stream, robot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | robot as u64);
    rng
}

/// Command the team sees at time `t`: height only until the lift window ends.
pub fn visible_command(full: &PayloadCommand, t: f64) -> PayloadCommand {
    if t < SYNC_HORIZON - 1e-9 {
        full.lift_only()
    } else {
        *full
    }
}

/// Runs one episode with the configured controller.
pub fn run_episode(
    cfg: &EpisodeConfig,
    seed: u64,
    controller: &Controller,
    opts: &RunOptions,
    config_hash: &str,
) -> Result<EpisodeResult> {
    let ep = generate_episode(cfg, seed)?;
    run_generated(&ep, cfg, controller, opts, config_hash)
}

/// Runs an already generated episode.
pub fn run_generated(
    ep: &Episode,
    cfg: &EpisodeConfig,
    controller: &Controller,
    opts: &RunOptions,
    config_hash: &str,
) -> Result<EpisodeResult> {
    opts.bounds.validate()?;
    let seed = ep.seed;
    let mut world = spawn_scene(&ep.scene, &mut episode_rng(seed, Stream::Placement))?;
    world.pulses = ep.draws.pulses.clone();
    world.reset_force_window(METRIC_WINDOW_START);
    let n = world.n_robots();
    let frames = &ep.scene.contact_frames;
    let dt = world.params.control_dt;
    let n_ticks = (ep.episode_length / dt).round() as u64;

    let noise = cfg.randomization.observation_noise;
    let action_sigma = cfg.randomization.action_noise;
    let mut obs_rngs: Vec<_> = (0..n).map(|r| robot_rng(seed, Stream::ObservationNoise, r)).collect();
    let mut act_rngs: Vec<_> = (0..n).map(|r| robot_rng(seed, Stream::ActionNoise, r)).collect();
    let mut trackers = vec![CfTracker::new(); n];
    let mut scripted: Vec<ScriptedController> = match controller {
        Controller::Scripted(c) => (0..n).map(|_| ScriptedController::new(*c, opts.bounds)).collect(),
        _ => Vec::new(),
    };
    let mut reference = RigidOracle::new(&world, frames)?;
    let mut prev_actions = vec![Action::default(); n];
    let mut returns = vec![0.0; n];
    let mut ticks = Vec::new();
    let mut samples = Vec::new();
    let mut drop = DropDetector::new();
    let mut termination = Termination::Completed;
    let mut prev_payload_v = world.payload.root_twist().linear;
    let full = ep.command;
    let sides = opposing_sides(
        &frames
            .iter()
            .map(|f| f.transform_vector(&Vec3::x()))
            .collect::<Vec<_>>(),
    );

    for tick in 0..n_ticks {
        let t = world.t;
        let cmd = visible_command(&full, t);
        let welds = reference.welds(&world, &cmd)?;

        let mut actions = vec![Action::default(); n];
        let mut cf_updated = vec![false; n];
        if !matches!(controller, Controller::RigidOracle) {
            for r in 0..n {
                let before = trackers[r].updates();
                let ctx = ObservationContext {
                    mode: &ep.observability,
                    cf_offset: &frames[r],
                    command: &cmd,
                    t,
                    tick,
                    prev_action: &prev_actions[r],
                    noise: &noise,
                };
                let obs = build_observation(r, &world, &ctx, &mut trackers[r], &mut obs_rngs[r])?;
                cf_updated[r] = trackers[r].updates() > before;
                let raw = match controller {
                    Controller::Scripted(_) => scripted[r].act(&obs),
                    Controller::Learned(p) => policy_forward(p, &obs, &opts.bounds)?,
                    Controller::RigidOracle => unreachable!(),
                };
                actions[r] = opts.bounds.clip(&add_noise(&raw, &opts.bounds, action_sigma, &mut act_rngs[r]));
            }
        }

        let stepped = match controller {
            Controller::RigidOracle => world.step_welded(&welds),
            _ => {
                let reach = world.params.reach;
                let robot_actions: Vec<_> = world
                    .robots
                    .iter()
                    .zip(&actions)
                    .map(|(rb, a)| apply_action(&rb.pad_target, a, &reach))
                    .collect();
                world.step(&robot_actions)
            }
        };
        if let Err(e) = stepped {
            match e {
                PlmError::Diverged { .. } => {
                    termination = Termination::Diverged;
                    break;
                }
                other => return Err(other),
            }
        }

        let t_now = world.t;
        let payload = world.payload.pose;
        let root = world.payload.root_twist();
        let accel = (root.linear - prev_payload_v) / dt;
        prev_payload_v = root.linear;
        let sample = tracking_sample(&payload, &root.linear, root.angular.z, &cmd);
        let tf = reference.target_frame().copied();
        let schedule = ScheduleState {
            phase: ep.phase,
            episode_time: t_now,
        };
        let (roll, pitch) = payload.roll_pitch();
        let mut robot_ticks = Vec::with_capacity(if opts.record { n } else { 0 });
        for r in 0..n {
            let rb = &world.robots[r];
            let cf_world = payload.compose(&frames[r]);
            let rigid = tf.map(|tf| rigid_base_targets(&tf, &reference.base_offsets()[r]));
            let pad_rel_v = rb.pad_twist.linear
                - rb.base_twist.point_velocity(&(rb.pad_pose.position - rb.base_pose.position));
            let inputs = RewardInputs {
                pad_pose: rb.pad_pose,
                cf_pose: cf_world,
                base_pose: rb.base_pose,
                rigid_targets: rigid,
                contact: world.contacts[r],
                height_error: payload.position.z - cmd.h_pl,
                velocity_error: [
                    sample.lin_vel.0[0] - sample.lin_vel.1[0],
                    sample.lin_vel.0[1] - sample.lin_vel.1[1],
                ],
                yaw_rate_error: root.angular.z - cmd.omega_pl,
                penalties: PenaltyInputs {
                    servo_force: rb.servo_force,
                    pad_velocity: pad_rel_v,
                    action: actions[r].to_vec().to_vec(),
                    prev_action: prev_actions[r].to_vec().to_vec(),
                    base_linear_speed: rb.base_twist.linear.norm(),
                    base_yaw_rate: rb.base_twist.angular.z,
                    payload_roll: roll,
                    payload_pitch: pitch,
                    payload_acceleration: accel,
                    pad_to_cf: (rb.pad_pose.position - cf_world.position).norm(),
                },
            };
            let b = total_reward(r, &inputs, &schedule, &opts.rewards)?;
            let reward = b.total * dt;
            if !reward.is_finite() {
                termination = Termination::Diverged;
            }
            returns[r] += reward;
            if opts.record {
                robot_ticks.push(RobotTick {
                    base: rb.base_pose.to_array(),
                    pad: rb.pad_pose.to_array(),
                    normal_force: world.contacts[r].normal_force,
                    in_contact: world.contacts[r].in_contact,
                    cf_updated: cf_updated[r],
                    action: actions[r].to_vec(),
                    reward,
                    r_contact: b.terms.contact_constellation,
                    r_track: b.terms.base_tracking,
                });
            }
        }
        if opts.record {
            ticks.push(TickRecord {
                t: t_now,
                payload: payload.to_array(),
                payload_twist: [
                    root.linear.x,
                    root.linear.y,
                    root.linear.z,
                    root.angular.x,
                    root.angular.y,
                    root.angular.z,
                ],
                command: cmd,
                target: tf.map(|tf| tf.pose.to_array()),
                robots: robot_ticks,
            });
        }
        if t_now + 1e-9 >= METRIC_WINDOW_START {
            samples.push(sample);
        }
        prev_actions = actions;

        if termination == Termination::Diverged {
            break;
        }
        let dropped = drop.update(&world, full.h_pl);
        let failed = detect_robot_failure(&world);
        if failed {
            termination = Termination::RobotFailure;
        } else if dropped {
            termination = Termination::Dropped;
        }
        if termination != Termination::Completed && opts.stop_on_failure {
            break;
        }
    }

    let errors = tracking_errors(&samples);
    let forces = contact_wrench_summary(&world);
    let mean_return = returns.iter().sum::<f64>() / n as f64;
    let outcome = EpisodeOutcome {
        seed,
        lin_vel_rmse: errors.map(|e| e[0]),
        ang_vel_rmse: errors.map(|e| e[1]),
        height_rmse: errors.map(|e| e[2]),
        dropped: termination == Termination::Dropped || drop.dropped_at().is_some(),
        robot_failed: matches!(termination, Termination::RobotFailure | Termination::Diverged),
        termination,
        end_time: world.t,
        side_imbalance: side_imbalance(&forces, &sides),
        per_robot_mean_normal_force: forces,
        mean_return,
    };
    let log = opts.record.then(|| EpisodeLog {
        header: LogHeader {
            format: LOG_FORMAT,
            config_hash: config_hash.to_string(),
            seed,
            controller: controller.name().to_string(),
            control_dt: dt,
            episode: ep.clone(),
        },
        ticks,
        outcome: outcome.clone(),
    });
    Ok(EpisodeResult {
        outcome,
        returns,
        log,
        world,
    })
}

fn add_noise(a: &Action, bounds: &ActionBounds, sigma: f64, rng: &mut ChaCha8Rng) -> Action {
    if sigma <= 0.0 {
        return *a;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut v = a.to_vec();
    for (x, s) in v.iter_mut().zip(bounds.scale()) {
        *x += s * normal.sample(rng);
    }
    Action::from_slice(&v).expect("fixed length")
}

/// Recomputes the outcome metrics of a log from its tick records.
pub fn outcome_from_log(log: &EpisodeLog) -> Result<EpisodeOutcome> {
    let errors = tracking_errors(&log.tracking_samples());
    let end = log.ticks.last().map_or(0.0, |t| t.t);
    let forces = force_distribution(&log.normal_forces(), [METRIC_WINDOW_START, end.max(METRIC_WINDOW_START)])?;
    let frames = &log.header.episode.scene.contact_frames;
    let sides = opposing_sides(&frames.iter().map(|f| f.transform_vector(&Vec3::x())).collect::<Vec<_>>());
    let n = frames.len().max(1) as f64;
    let mean_return = (0..frames.len())
        .map(|r| log.ticks.iter().map(|t| t.robots[r].reward).sum::<f64>())
        .sum::<f64>()
        / n;
    Ok(EpisodeOutcome {
        seed: log.header.seed,
        lin_vel_rmse: errors.map(|e| e[0]),
        ang_vel_rmse: errors.map(|e| e[1]),
        height_rmse: errors.map(|e| e[2]),
        dropped: log.outcome.dropped,
        robot_failed: log.outcome.robot_failed,
        termination: log.outcome.termination,
        end_time: end,
        side_imbalance: side_imbalance(&forces, &sides),
        per_robot_mean_normal_force: forces,
        mean_return,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::{ObservabilityMode, RandomizationConfig, CF_INIT_WINDOW};
    use crate::world::PayloadShape;

    fn config(n: usize, clean: bool) -> EpisodeConfig {
        let shape = if n == 2 { PayloadShape::small_box() } else { PayloadShape::default_box() };
        let mut cfg = EpisodeConfig::for_phase(3, shape, n).unwrap();
        cfg.mass = Some(2.0);
        if clean {
            cfg.randomization = RandomizationConfig::none();
        }
        cfg
    }

    fn scripted() -> Controller {
        Controller::Scripted(ScriptedConfig::default())
    }

    fn bytes(log: &EpisodeLog) -> Vec<u8> {
        let mut out = Vec::new();
        log.write_jsonl(&mut out).unwrap();
        out
    }

    #[test]
    fn log_round_trips_exactly() {
        let r = run_episode(&config(2, false), 3, &scripted(), &RunOptions::default(), "abc").unwrap();
        let log = r.log.unwrap();
        let text = bytes(&log);
        let back = EpisodeLog::read_jsonl(text.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, log);
        assert_eq!(bytes(&back), text);
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let cfg = config(3, false);
        let a = run_episode(&cfg, 11, &scripted(), &RunOptions::default(), "h").unwrap();
        let b = run_episode(&cfg, 11, &scripted(), &RunOptions::default(), "h").unwrap();
        assert_eq!(bytes(a.log.as_ref().unwrap()), bytes(b.log.as_ref().unwrap()));
    }

    #[test]
    fn outcome_recomputed_from_log_matches_runtime() {
        for seed in 0..3 {
            let r = run_episode(&config(2, false), seed, &scripted(), &RunOptions::default(), "h").unwrap();
            let log = r.log.unwrap();
            let back = outcome_from_log(&log).unwrap();
            let o = &r.outcome;
            let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                (None, None) => true,
                _ => false,
            };
            assert!(close(back.lin_vel_rmse, o.lin_vel_rmse));
            assert!(close(back.ang_vel_rmse, o.ang_vel_rmse));
            assert!(close(back.height_rmse, o.height_rmse));
            assert!((back.mean_return - o.mean_return).abs() < 1e-9);
            for (a, b) in back.per_robot_mean_normal_force.iter().zip(&o.per_robot_mean_normal_force) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn oracle_has_zero_constellation_error() {
        for n in [2, 4] {
            let r = run_episode(&config(n, true), 5, &Controller::RigidOracle, &RunOptions::default(), "h").unwrap();
            let log = r.log.unwrap();
            for t in &log.ticks {
                for rb in &t.robots {
                    assert!(rb.r_contact.abs() < 1e-6 && rb.r_track.abs() < 1e-6, "t {} {:?}", t.t, rb);
                }
            }
            assert_eq!(r.outcome.termination, Termination::Completed);
            assert!(r.outcome.lin_vel_rmse.unwrap() < 0.01);
        }
    }

    #[test]
    fn masked_mode_never_refreshes_after_window() {
        let mut cfg = config(2, true);
        cfg.observability = ObservabilityMode::cf_init();
        let r = run_episode(&cfg, 1, &scripted(), &RunOptions::default(), "h").unwrap();
        let log = r.log.unwrap();
        let late = log
            .ticks
            .iter()
            .filter(|t| t.t - cfg.physics.control_dt >= CF_INIT_WINDOW - 1e-9)
            .flat_map(|t| &t.robots)
            .filter(|r| r.cf_updated)
            .count();
        assert_eq!(late, 0);
        assert!(log.ticks.iter().flat_map(|t| &t.robots).any(|r| r.cf_updated));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let r = run_episode(&config(2, true), 0, &scripted(), &RunOptions::default(), "h").unwrap();
        let text = String::from_utf8(bytes(&r.log.unwrap())).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[4] = "{\"kind\":\"tick\",\"t\":";
        let broken = lines.join("\n");
        match EpisodeLog::read_jsonl(broken.as_bytes(), Path::new("x.jsonl")) {
            Err(PlmError::LogParse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        let truncated = lines[..3].join("\n");
        assert!(matches!(
            EpisodeLog::read_jsonl(truncated.as_bytes(), Path::new("x")),
            Err(PlmError::LogParse { .. })
        ));
    }

    #[test]
    fn lift_only_until_sync_horizon() {
        let c = PayloadCommand { v_pl: [0.3, 0.1], omega_pl: 0.2, h_pl: 0.15 };
        assert_eq!(visible_command(&c, 1.0), c.lift_only());
        assert_eq!(visible_command(&c, SYNC_HORIZON), c);
    }
}
