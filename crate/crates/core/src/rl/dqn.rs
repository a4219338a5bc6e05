//! Deep Q-learning with experience replay and a periodically synced target
//! network, for the classical MLP and the hybrid network.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::env::{env_reset_with, env_step, Action};
use super::mlp::MlpNetwork;
use super::phn::{PhnNetwork, MLP_SIZES, N_ACTIONS};
use super::replay::{ReplayBuffer, Transition};
use crate::alignment::{align, AlignConfig, AlignedCircuitSet, AlignmentProblem};
use crate::error::{invalid, Error, Result};
use crate::optim::{AdamConfig, AdamState};
use crate::rng;
use crate::softu::{PenaltyForm, Regularizer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Classical,
    Hybrid,
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(AgentKind::Classical),
            "hybrid" => Ok(AgentKind::Hybrid),
            other => Err(invalid(format!("unknown agent kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub episodes: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Multiplied into epsilon after every episode.
    pub epsilon_decay: f64,
    /// When set, epsilon stays at this value.
    #[serde(default)]
    pub fixed_epsilon: Option<f64>,
    pub target_sync_episodes: usize,
    /// Unitarity penalty strength for the hybrid agent.
    pub lambda: f64,
    #[serde(default)]
    pub penalty: PenaltyForm,
    pub huber_delta: f64,
    /// Trailing window of the running mean duration.
    pub running_window: usize,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            episodes: 340,
            buffer_capacity: 10_000,
            batch_size: 64,
            gamma: 0.99,
            learning_rate: 1e-3,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.995,
            fixed_epsilon: None,
            target_sync_episodes: 10,
            lambda: 1000.0,
            penalty: PenaltyForm::default(),
            huber_delta: 1.0,
            running_window: 50,
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(invalid("replay capacity must be at least the (positive) batch size"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid("gamma must lie in [0, 1]"));
        }
        if self.target_sync_episodes == 0 || self.running_window == 0 {
            return Err(invalid("target sync cadence and running window must be positive"));
        }
        for e in [self.epsilon_start, self.epsilon_end].into_iter().chain(self.fixed_epsilon) {
            if !(0.0..=1.0).contains(&e) {
                return Err(invalid(format!("epsilon {e} outside [0, 1]")));
            }
        }
        self.regularizer().validate()
    }

    pub fn regularizer(&self) -> Regularizer {
        Regularizer { lambda: self.lambda, form: self.penalty }
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        self.fixed_epsilon
            .unwrap_or_else(|| (self.epsilon_start * self.epsilon_decay.powi(episode as i32)).max(self.epsilon_end))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Agent {
    Classical { network: MlpNetwork },
    Hybrid { network: PhnNetwork },
}

impl Agent {
    pub fn new(kind: AgentKind, seed: u64) -> Result<Self> {
        Ok(match kind {
            AgentKind::Classical => Agent::Classical { network: MlpNetwork::random(&MLP_SIZES, seed)? },
            AgentKind::Hybrid => Agent::Hybrid { network: PhnNetwork::random(seed)? },
        })
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Classical { .. } => AgentKind::Classical,
            Agent::Hybrid { .. } => AgentKind::Hybrid,
        }
    }

    pub fn q_forward(&self, features: &[f64; 4]) -> Result<[f64; N_ACTIONS]> {
        match self {
            Agent::Classical { network } => {
                let q = network.forward(features)?;
                Ok([q[0], q[1]])
            }
            Agent::Hybrid { network } => network.forward(features),
        }
    }

    /// Q-values and the gradient of `upstream . Q` added into `grads`.
    pub fn q_backward(&self, features: &[f64; 4], upstream: &[f64; N_ACTIONS], grads: &mut [f64]) -> Result<[f64; N_ACTIONS]> {
        match self {
            Agent::Classical { network } => {
                let t = network.trace(features)?;
                network.backward(&t, upstream, grads);
                Ok([t.output()[0], t.output()[1]])
            }
            Agent::Hybrid { network } => {
                let t = network.trace(features)?;
                network.backward(&t, upstream, grads);
                Ok(t.q_values())
            }
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Agent::Classical { network } => network.n_params(),
            Agent::Hybrid { network } => network.n_params(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Agent::Classical { network } => network.params(),
            Agent::Hybrid { network } => network.params(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        match self {
            Agent::Classical { network } => network.set_params(p),
            Agent::Hybrid { network } => network.set_params(p),
        }
    }

    /// Zero for the classical agent.
    pub fn unitarity_deviation(&self) -> f64 {
        match self {
            Agent::Classical { .. } => 0.0,
            Agent::Hybrid { network } => network.unitarity_deviation(),
        }
    }

    pub fn penalty(&self, reg: Regularizer) -> f64 {
        match self {
            Agent::Classical { .. } => 0.0,
            Agent::Hybrid { network } => reg.value(network.quantum.blocks()),
        }
    }

    fn greedy(&self, features: &[f64; 4]) -> Result<usize> {
        let q = self.q_forward(features)?;
        Ok(if q[1] > q[0] { 1 } else { 0 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub duration: usize,
    pub running_mean: f64,
    pub epsilon: f64,
    /// Mean Huber TD loss over the episode's updates (0 before learning starts).
    pub td_loss: f64,
    pub unitary_dev: f64,
}

pub fn write_episodes_csv<W: std::io::Write>(records: &[EpisodeRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DqnRun {
    pub agent: Agent,
    pub episodes: Vec<EpisodeRecord>,
}

impl DqnRun {
    pub fn final_running_mean(&self) -> f64 {
        self.episodes.last().map_or(0.0, |e| e.running_mean)
    }

    /// Largest per-episode unitarity deviation over the run.
    pub fn max_unitary_dev(&self) -> f64 {
        self.episodes.iter().map(|e| e.unitary_dev).fold(0.0, f64::max)
    }
}

fn huber(diff: f64, delta: f64) -> (f64, f64) {
    if diff.abs() <= delta {
        (0.5 * diff * diff, diff)
    } else {
        (delta * (diff.abs() - 0.5 * delta), delta * diff.signum())
    }
}

/// One gradient step on a replay batch; returns the mean TD loss.
fn learn(
    agent: &mut Agent,
    target: &Agent,
    batch: &[Transition],
    config: &DqnConfig,
    adam: &mut AdamState,
    params: &mut Vec<f64>,
    grads: &mut [f64],
) -> Result<f64> {
    grads.iter_mut().for_each(|g| *g = 0.0);
    let inv = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for t in batch {
        let next = target.q_forward(&t.next_state)?;
        let bootstrap = if t.done { 0.0 } else { config.gamma * next[0].max(next[1]) };
        let y = t.reward + bootstrap;
        let q = agent.q_forward(&t.state)?;
        let (l, dl) = huber(q[t.action] - y, config.huber_delta);
        loss += l * inv;
        let mut up = [0.0; N_ACTIONS];
        up[t.action] = dl * inv;
        agent.q_backward(&t.state, &up, grads)?;
    }
    if let Agent::Hybrid { network } = &*agent {
        network.penalty_gradient(config.regularizer(), grads);
    }
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(invalid(format!("non-finite TD loss {loss}")));
    }
    adam.step(params, grads)?;
    agent.set_params(params)?;
    Ok(loss)
}

/// Trains a fresh agent. Everything random (initialization, resets,
/// exploration, replay sampling) comes from independent streams of
/// `config.seed`.
pub fn dqn_train(kind: AgentKind, config: &DqnConfig) -> Result<DqnRun> {
    config.validate()?;
    let mut agent = Agent::new(kind, rng::derive_seed(config.seed, 0))?;
    let mut target = agent.clone();
    let mut env_rng = rng::seeded(rng::derive_seed(config.seed, 1));
    let mut policy_rng = rng::seeded(rng::derive_seed(config.seed, 2));
    let mut replay_rng = rng::seeded(rng::derive_seed(config.seed, 3));
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut params = agent.params();
    let mut grads = vec![0.0; params.len()];
    let mut adam = AdamState::new(params.len(), AdamConfig::with_lr(config.learning_rate));
    let mut records: Vec<EpisodeRecord> = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        let epsilon = config.epsilon(episode);
        let mut state = env_reset_with(&mut env_rng);
        let (mut loss_sum, mut updates) = (0.0, 0usize);
        loop {
            let features = state.features();
            let action = if policy_rng.random::<f64>() < epsilon {
                policy_rng.random_range(0..N_ACTIONS)
            } else {
                agent.greedy(&features)?
            };
            let step = env_step(&state, Action::from_index(action))?;
            buffer.push(Transition {
                state: features,
                action,
                reward: step.reward,
                next_state: step.state.features(),
                done: step.state.is_failure(),
            });
            state = step.state;
            if buffer.len() >= config.batch_size {
                let batch = buffer.sample(config.batch_size, &mut replay_rng)?;
                let l = learn(&mut agent, &target, &batch, config, &mut adam, &mut params, &mut grads)
                    .map_err(|e| Error::NonFiniteLoss { epoch: episode, detail: e.to_string() })?;
                loss_sum += l;
                updates += 1;
            }
            if step.done {
                break;
            }
        }
        if (episode + 1) % config.target_sync_episodes == 0 {
            target = agent.clone();
        }
        let duration = state.step_count;
        let window_start = (episode + 1).saturating_sub(config.running_window);
        let recent = records[window_start..].iter().map(|r| r.duration).sum::<usize>() + duration;
        records.push(EpisodeRecord {
            episode,
            duration,
            running_mean: recent as f64 / (episode + 1 - window_start) as f64,
            epsilon,
            td_loss: if updates > 0 { loss_sum / updates as f64 } else { 0.0 },
            unitary_dev: agent.unitarity_deviation(),
        });
    }
    Ok(DqnRun { agent, episodes: records })
}

/// Compiles the hybrid agent's quantum blocks. Takes no environment or
/// episode data.
pub fn align_rl_blocks(network: &PhnNetwork, config: AlignConfig) -> Result<AlignedCircuitSet> {
    let problem = AlignmentProblem::new(network.quantum.blocks().to_vec(), network.quantum.n_qubits(), config)?;
    align(&problem)
}
