//! The rigid-attachment reference controller carrying the default box with
//! four robots; its constellation rewards stay at zero.

use plm::curriculum::EpisodeConfig;
use plm::episode::{run_episode, Controller, RunOptions};
use plm::world::PayloadShape;

fn main() -> plm::Result<()> {
    let cfg = EpisodeConfig::for_phase(3, PayloadShape::default_box(), 4)?;
    let opts = RunOptions { record: true, ..RunOptions::default() };
    let result = run_episode(&cfg, 1, &Controller::RigidOracle, &opts, "example")?;
    let log = result.log.expect("recorded");
    let worst = log
        .ticks
        .iter()
        .flat_map(|t| &t.robots)
        .map(|r| r.r_contact.abs().max(r.r_track.abs()))
        .fold(0.0, f64::max);
    println!("{} ticks, largest constellation reward {worst:.1e}", log.ticks.len());
    println!("{}", serde_json::to_string_pretty(&result.outcome)?);
    Ok(())
}
