//! Fitness evaluation and the staged training loop for the shared policy.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curriculum::{make_phase_config, AnnealStage, CfMode, CommandPool, EpisodeConfig, ObservabilityMode};
use crate::episode::{run_episode, Controller, RunOptions};
use crate::error::{PlmError, Result};
use crate::policy::{es_step, EsConfig, GenerationRecord, MlpShape, PolicyParams, TrainerState};

/// A block of generations trained under one phase and observability mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingStage {
    pub phase: u8,
    pub observability: ObservabilityMode,
    pub generations: u64,
}

/// Stage list of a full run: the three phases with the pose visible, then
/// the update-rate anneal down to the masked mode.
pub fn default_schedule(generations_per_stage: u64) -> Vec<TrainingStage> {
    let mut stages: Vec<TrainingStage> = (1..=3)
        .map(|phase| TrainingStage {
            phase,
            observability: ObservabilityMode::cf_plus(),
            generations: generations_per_stage,
        })
        .collect();
    stages.extend(AnnealStage::SEQUENCE.iter().map(|&anneal_stage| TrainingStage {
        phase: 3,
        observability: ObservabilityMode {
            mode: CfMode::CfInit,
            anneal_stage,
        },
        generations: generations_per_stage,
    }));
    stages
}

/// Stage active at a given iteration, or `None` once the schedule is done.
pub fn stage_at(schedule: &[TrainingStage], iteration: u64) -> Option<&TrainingStage> {
    let mut end = 0;
    schedule.iter().find(|s| {
        end += s.generations;
        iteration < end
    })
}

pub fn total_generations(schedule: &[TrainingStage]) -> u64 {
    schedule.iter().map(|s| s.generations).sum()
}

/// Everything a training run needs besides the optimizer state.
#[derive(Clone, Debug)]
pub struct TrainingSetup {
    /// Scene, randomization and physics; phase and observability come from the stage.
    pub base: EpisodeConfig,
    /// Replaces every stage's command pool when present.
    pub commands: Option<CommandPool>,
    pub net: MlpShape,
    pub es: EsConfig,
    pub run: RunOptions,
    pub schedule: Vec<TrainingStage>,
}

impl TrainingSetup {
    pub fn episode_config(&self, stage: &TrainingStage) -> Result<EpisodeConfig> {
        let mut cfg = self.base.clone();
        cfg.phase = make_phase_config(stage.phase)?;
        if let Some(pool) = self.commands {
            cfg.phase.command_pool = pool;
        }
        cfg.observability = stage.observability;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Episode seed `k` of an evaluation keyed by `seed`.
pub fn evaluation_seed(seed: u64, k: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"evaluation");
    h.update(seed.to_le_bytes());
    h.update((k as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Mean team return of `params` over `episodes` episodes drawn from `seed`.
/// Failures of the simulation count as non-finite fitness.
pub fn fitness(
    params: &Arc<PolicyParams>,
    cfg: &EpisodeConfig,
    run: &RunOptions,
    seed: u64,
    episodes: usize,
) -> f64 {
    let controller = Controller::Learned(params.clone());
    let opts = RunOptions {
        record: false,
        ..run.clone()
    };
    let mut total = 0.0;
    for k in 0..episodes {
        match run_episode(cfg, evaluation_seed(seed, k), &controller, &opts, "") {
            Ok(r) => total += r.outcome.mean_return,
            Err(_) => return f64::NAN,
        }
    }
    total / episodes as f64
}

/// Mean return over a fixed set of episode seeds, evaluated in parallel.
pub fn evaluate_return(params: &PolicyParams, cfg: &EpisodeConfig, run: &RunOptions, seeds: &[u64]) -> Result<f64> {
    if seeds.is_empty() {
        return Err(PlmError::Config("evaluation needs at least one seed".into()));
    }
    let controller = Controller::Learned(Arc::new(params.clone()));
    let opts = RunOptions {
        record: false,
        ..run.clone()
    };
    let returns: Vec<f64> = seeds
        .par_iter()
        .map(|&s| run_episode(cfg, s, &controller, &opts, "").map(|r| r.outcome.mean_return))
        .collect::<Result<_>>()?;
    Ok(returns.iter().sum::<f64>() / returns.len() as f64)
}

/// Runs generations until the schedule ends or `limit` generations have
/// been done in this call. `after` sees every finished generation and may
/// write checkpoints.
pub fn train<F>(state: &mut TrainerState, setup: &TrainingSetup, limit: Option<u64>, mut after: F) -> Result<()>
where
    F: FnMut(&TrainerState, &GenerationRecord) -> Result<()>,
{
    if state.params.len() != setup.net.n_params() {
        return Err(PlmError::DimensionMismatch {
            expected: setup.net.n_params(),
            got: state.params.len(),
        });
    }
    let mut done = 0;
    while let Some(stage) = stage_at(&setup.schedule, state.iteration).copied() {
        if limit.is_some_and(|l| done >= l) {
            break;
        }
        let cfg = setup.episode_config(&stage)?;
        state.phase = stage.phase;
        state.anneal_stage = stage.observability.anneal_stage;
        let net = setup.net;
        let f = |values: &[f64], seed: u64| {
            let params = Arc::new(PolicyParams {
                shape: net,
                values: values.to_vec(),
            });
            fitness(&params, &cfg, &setup.run, seed, setup.es.episodes)
        };
        let record = es_step(state, &setup.es, &f)?;
        after(state, &record)?;
        done += 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::PayloadShape;

    #[test]
    fn schedule_lookup() {
        let s = default_schedule(10);
        assert_eq!(s.len(), 8);
        assert_eq!(total_generations(&s), 80);
        assert_eq!(stage_at(&s, 0).unwrap().phase, 1);
        assert_eq!(stage_at(&s, 25).unwrap().phase, 3);
        let last = stage_at(&s, 79).unwrap();
        assert_eq!(last.observability, ObservabilityMode::cf_init());
        assert!(stage_at(&s, 80).is_none());
    }

    #[test]
    fn evaluation_seeds_distinct() {
        let a: Vec<u64> = (0..50).map(|k| evaluation_seed(7, k)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(a.len(), b.len());
        assert_ne!(evaluation_seed(7, 0), evaluation_seed(8, 0));
    }

    fn tiny_setup() -> TrainingSetup {
        TrainingSetup {
            base: EpisodeConfig::for_phase(1, PayloadShape::small_box(), 2).unwrap(),
            commands: None,
            net: MlpShape::new(8),
            es: EsConfig {
                pairs: 2,
                episodes: 1,
                ..EsConfig::default()
            },
            run: RunOptions::default(),
            schedule: vec![TrainingStage {
                phase: 1,
                observability: ObservabilityMode::cf_plus(),
                generations: 3,
            }],
        }
    }

    #[test]
    fn train_respects_limit_and_schedule() {
        let setup = tiny_setup();
        let p = PolicyParams::init(setup.net, 1);
        let mut state = TrainerState::new(p.values, 1);
        let mut seen = Vec::new();
        train(&mut state, &setup, Some(2), |_, r| {
            seen.push(r.iteration);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1]);
        train(&mut state, &setup, None, |_, _| Ok(())).unwrap();
        assert_eq!(state.iteration, 3);
        assert!(state.history.iter().all(|h| h.mean_fitness.is_some()));
    }

    #[test]
    fn wrong_width_rejected() {
        let setup = tiny_setup();
        let mut state = TrainerState::new(vec![0.0; 3], 1);
        assert!(matches!(
            train(&mut state, &setup, None, |_, _| Ok(())),
            Err(PlmError::DimensionMismatch { .. })
        ));
    }
}
