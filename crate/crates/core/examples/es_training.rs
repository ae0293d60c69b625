//! A short evolution-strategies run on the pinch phase, reporting held-out
//! return before and after.

use plm::config::ExperimentConfig;
use plm::curriculum::ObservabilityMode;
use plm::policy::{PolicyParams, TrainerState};
use plm::training::{evaluate_return, train, TrainingStage};
use plm::world::PayloadShape;

fn main() -> plm::Result<()> {
    let mut cfg = ExperimentConfig::new(PayloadShape::small_box(), 2);
    cfg.phase = 1;
    cfg.training.hidden = 32;
    cfg.training.stages = Some(vec![TrainingStage {
        phase: 1,
        observability: ObservabilityMode::cf_plus(),
        generations: 30,
    }]);
    let setup = cfg.training_setup()?;
    let episode = setup.episode_config(&setup.schedule[0])?;
    let held_out: Vec<u64> = (1000..1008).collect();

    let init = cfg.initial_params();
    let before = evaluate_return(&init, &episode, &setup.run, &held_out)?;
    let mut state = TrainerState::new(init.values, cfg.seed);
    train(&mut state, &setup, None, |_, r| {
        if r.iteration % 10 == 9 {
            println!("generation {}: mean fitness {:?}", r.iteration + 1, r.mean_fitness);
        }
        Ok(())
    })?;
    let trained = PolicyParams::from_values(setup.net, state.params)?;
    let after = evaluate_return(&trained, &episode, &setup.run, &held_out)?;
    println!("held-out return {before:.3} -> {after:.3}");
    Ok(())
}
