//! Records an episode, writes its log, reloads it and writes the episode and
//! summary tables to stdout.

use plm::config::ExperimentConfig;
use plm::episode::{outcome_from_log, run_episode, EpisodeLog};
use plm::metrics::{summarize_batch, write_episode_csv, write_summary_csv};
use plm::world::PayloadShape;

fn main() -> plm::Result<()> {
    let cfg = ExperimentConfig::new(PayloadShape::small_box(), 2);
    let hash = cfg.hash()?;
    let mut opts = cfg.run_options();
    opts.record = true;
    let result = run_episode(&cfg.episode_config()?, 3, &cfg.controller()?, &opts, &hash)?;

    let dir = std::env::temp_dir().join("plm-metrics-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("episode_3.jsonl");
    let mut bytes = Vec::new();
    result.log.expect("recorded").write_jsonl(&mut bytes)?;
    std::fs::write(&path, bytes)?;

    let outcome = outcome_from_log(&EpisodeLog::load(&path)?)?;
    let outcomes = [outcome];
    let summary = summarize_batch(&outcomes)?;
    write_episode_csv(std::io::stdout(), &hash, &outcomes, &summary, 3)?;
    write_summary_csv(std::io::stdout(), &hash, 3, &summary)?;
    println!("log at {}", path.display());
    Ok(())
}
