//! Cartpole reinforcement learning: environment, replay, the classical and
//! hybrid Q-networks, and the DQN loop.

pub mod dqn;
pub mod env;
pub mod mlp;
pub mod phn;
pub mod replay;

pub use dqn::{align_rl_blocks, dqn_train, write_episodes_csv, Agent, AgentKind, DqnConfig, DqnRun, EpisodeRecord};
pub use env::{env_reset, env_step, Action, CartpoleState, Step};
pub use mlp::MlpNetwork;
pub use phn::PhnNetwork;
pub use replay::{ReplayBuffer, Transition};
