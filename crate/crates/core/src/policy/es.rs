use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curriculum::AnnealStage;
use crate::error::{PlmError, Result};

/// Evolution-strategy hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    /// Antithetic pairs per generation.
    pub pairs: usize,
    pub sigma: f64,
    pub learning_rate: f64,
    /// Per-generation multiplicative decay of the learning rate.
    pub lr_decay: f64,
    /// Per-generation multiplicative decay of `sigma`.
    pub sigma_decay: f64,
    pub weight_decay: f64,
    /// Episodes per fitness evaluation.
    pub episodes: usize,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            pairs: 8,
            sigma: 0.05,
            learning_rate: 0.02,
            lr_decay: 0.995,
            sigma_decay: 1.0,
            weight_decay: 0.0,
            episodes: 2,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.pairs >= 1
            && self.episodes >= 1
            && self.sigma >= 0.0
            && self.sigma.is_finite()
            && self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.lr_decay > 0.0
            && self.lr_decay <= 1.0
            && self.sigma_decay > 0.0
            && self.sigma_decay <= 1.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(PlmError::Config(format!("invalid ES settings {self:?}")))
        }
    }
}

/// One generation of the fitness history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub iteration: u64,
    /// Absent when every pair was discarded.
    pub mean_fitness: Option<f64>,
    pub best_fitness: Option<f64>,
    /// Antithetic pairs dropped because a fitness was not finite.
    pub discarded: usize,
    pub sigma: f64,
    pub learning_rate: f64,
    pub phase: u8,
    pub anneal_stage: AnnealStage,
}

/// Complete optimizer state; resuming from it continues bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub seed: u64,
    /// Hash of the experiment config this run belongs to.
    #[serde(default)]
    pub config_hash: String,
    pub iteration: u64,
    pub params: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    adam_steps: u64,
    pub phase: u8,
    pub anneal_stage: AnnealStage,
    pub history: Vec<GenerationRecord>,
}

impl TrainerState {
    pub fn new(params: Vec<f64>, seed: u64) -> Self {
        let n = params.len();
        Self {
            seed,
            config_hash: String::new(),
            iteration: 0,
            params,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            adam_steps: 0,
            phase: 1,
            anneal_stage: AnnealStage::Hz50,
            history: Vec::new(),
        }
    }
}

/// Seed shared by every member of generation `iteration`, so all members
/// face the same episodes.
pub fn generation_seed(master: u64, iteration: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"generation");
    h.update(master.to_le_bytes());
    h.update(iteration.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

fn perturbation(master: u64, iteration: u64, member: usize, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((iteration << 20) | member as u64);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Centered ranks in [−0.5, 0.5]; ties share their mean rank.
pub fn centered_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n <= 1 {
        return vec![0.0; n];
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for k in i..=j {
            ranks[idx[k]] = r / (n - 1) as f64 - 0.5;
        }
        i = j + 1;
    }
    ranks
}

/// Runs one generation. `fitness(params, generation_seed)` must be
/// deterministic; it is called concurrently for every population member.
pub fn es_step<F>(state: &mut TrainerState, cfg: &EsConfig, fitness: &F) -> Result<GenerationRecord>
where
    F: Fn(&[f64], u64) -> f64 + Sync,
{
    cfg.validate()?;
    let it = state.iteration;
    let n = state.params.len();
    let sigma = cfg.sigma * cfg.sigma_decay.powf(it as f64);
    let lr = cfg.learning_rate * cfg.lr_decay.powf(it as f64);
    let gen_seed = generation_seed(state.seed, it);

    let evals: Vec<(Vec<f64>, f64, f64)> = (0..cfg.pairs)
        .into_par_iter()
        .map(|m| {
            let eps = perturbation(state.seed, it, m, n);
            let shifted = |sign: f64| -> Vec<f64> {
                state
                    .params
                    .iter()
                    .zip(&eps)
                    .map(|(p, e)| p + sign * sigma * e)
                    .collect()
            };
            let plus = fitness(&shifted(1.0), gen_seed);
            let minus = fitness(&shifted(-1.0), gen_seed);
            (eps, plus, minus)
        })
        .collect();

    let kept: Vec<&(Vec<f64>, f64, f64)> = evals
        .iter()
        .filter(|(_, a, b)| a.is_finite() && b.is_finite())
        .collect();
    let discarded = evals.len() - kept.len();
    if discarded > 0 {
        eprintln!("es: generation {it}: discarded {discarded} member pair(s) with non-finite fitness");
    }
    let all: Vec<f64> = kept.iter().flat_map(|(_, a, b)| [*a, *b]).collect();
    let (mean, best) = if all.is_empty() {
        (None, None)
    } else {
        (
            Some(all.iter().sum::<f64>() / all.len() as f64),
            Some(all.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        )
    };

    if sigma > 0.0 && lr > 0.0 && !kept.is_empty() {
        let ranks = centered_ranks(&all);
        let mut grad = vec![0.0; n];
        for (k, (eps, _, _)) in kept.iter().enumerate() {
            let w = ranks[2 * k] - ranks[2 * k + 1];
            for (g, e) in grad.iter_mut().zip(eps) {
                *g += w * e;
            }
        }
        let scale = 1.0 / (kept.len() as f64 * sigma);
        adam_ascent(state, &grad, scale, lr, cfg.weight_decay);
    }

    let record = GenerationRecord {
        iteration: it,
        mean_fitness: mean,
        best_fitness: best,
        discarded,
        sigma,
        learning_rate: lr,
        phase: state.phase,
        anneal_stage: state.anneal_stage,
    };
    state.history.push(record.clone());
    state.iteration += 1;
    Ok(record)
}

fn adam_ascent(state: &mut TrainerState, grad: &[f64], scale: f64, lr: f64, weight_decay: f64) {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    state.adam_steps += 1;
    let t = state.adam_steps;
    let c1 = 1.0 - B1.powi(t as i32);
    let c2 = 1.0 - B2.powi(t as i32);
    for i in 0..grad.len() {
        let g = grad[i] * scale - weight_decay * state.params[i];
        state.adam_m[i] = B1 * state.adam_m[i] + (1.0 - B1) * g;
        state.adam_v[i] = B2 * state.adam_v[i] + (1.0 - B2) * g * g;
        let m = state.adam_m[i] / c1;
        let v = state.adam_v[i] / c2;
        state.params[i] += lr * m / (v.sqrt() + EPS);
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    sha256: String,
    state: TrainerState,
}

fn state_digest(state: &TrainerState) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(state)?)))
}

/// Writes the trainer state with an integrity digest.
pub fn save_checkpoint(path: &Path, state: &TrainerState) -> Result<()> {
    let file = CheckpointFile {
        sha256: state_digest(state)?,
        state: state.clone(),
    };
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(&file)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads a checkpoint, refusing anything whose digest does not match.
pub fn load_checkpoint(path: &Path) -> Result<TrainerState> {
    let corrupt = |reason: String| PlmError::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = std::fs::read(path)?;
    let file: CheckpointFile =
        serde_json::from_slice(&bytes).map_err(|e| corrupt(format!("unreadable: {e}")))?;
    let digest = state_digest(&file.state)?;
    if digest != file.sha256 {
        return Err(corrupt(format!("digest {digest} does not match recorded {}", file.sha256)));
    }
    let s = &file.state;
    if s.adam_m.len() != s.params.len() || s.adam_v.len() != s.params.len() {
        return Err(corrupt("optimizer moments do not match the parameter count".into()));
    }
    if s.history.len() as u64 != s.iteration {
        return Err(corrupt("history length does not match the iteration counter".into()));
    }
    Ok(file.state)
}
