//! Scripted pinch, lift and carry across team sizes, with drop rate and
//! tracking error per size.

use plm::curriculum::EpisodeConfig;
use plm::episode::{run_episode, Controller, RunOptions};
use plm::metrics::summarize_batch;
use plm::policy::ScriptedConfig;
use plm::world::PayloadShape;
use rayon::prelude::*;

fn main() -> plm::Result<()> {
    let controller = Controller::Scripted(ScriptedConfig::default());
    for n in 2..=6 {
        let mut cfg = EpisodeConfig::for_phase(3, PayloadShape::default_box(), n)?;
        cfg.mass = Some(2.0);
        let outcomes = (0..20u64)
            .into_par_iter()
            .map(|s| run_episode(&cfg, s, &controller, &RunOptions::default(), "").map(|r| r.outcome))
            .collect::<plm::Result<Vec<_>>>()?;
        let s = summarize_batch(&outcomes)?;
        println!(
            "N={n}: drop {:.0}%, lin RMS {}",
            s.drop_percent,
            s.lin_vel_rmse_mean.map_or("n/a".into(), |v| format!("{v:.3} m/s"))
        );
    }
    Ok(())
}
