//! Per-robot observations and actions, the scripted and privileged
//! controllers, the shared-parameter network and its trainer.

mod es;
mod mlp;
mod observation;
mod oracle;
mod params_io;
mod scripted;

pub use es::{
    centered_ranks, es_step, generation_seed, load_checkpoint, save_checkpoint, EsConfig,
    GenerationRecord, TrainerState,
};
pub use mlp::{mlp_forward, policy_forward, MlpShape, PolicyParams};
pub use observation::{
    apply_action, build_observation, Action, ActionBounds, CfTracker, Observation,
    ObservationContext, ACTION_DIM, FEATURE_VERSION, OBS_DIM,
};
pub use oracle::{RigidOracle, ORACLE_LIFT_WINDOW};
pub use params_io::{decode_params, encode_params, load_params, save_params, ParamsHeader};
pub use scripted::{ScriptedConfig, ScriptedController};
