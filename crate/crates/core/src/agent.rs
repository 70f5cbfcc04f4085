//! Actor-critic learner over acquisition masks.
//!
//! The actor maps an encoded reconstruction to N logits; actions are hard
//! Gumbel top-K samples of those logits during rollout and noise-free top-K
//! at evaluation. The critic regresses action values against bootstrapped
//! targets `r + gamma * Q'(s', pi'(s'))` computed with soft-updated target
//! copies of both networks. The actor ascends the critic's value of a
//! relaxed (differentiable) top-K action with the critic frozen.
//!
//! Episode ends here are time-limit truncations of an ongoing acquisition
//! process, so targets bootstrap through them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::gumbel::{relaxed_top_k, sample_gumbel, top_k, GumbelConfig};
use crate::mask::Mask;
use crate::nn::{
    self, backward_trace, forward, forward_trace, init_params, input_gradient, scale_last_layer,
    Activation, Adam, MlpSpec,
};
use crate::rng::Rng;
use crate::Error;

/// One replay record: encoded state, the mask taken from it, the resulting
/// reward, the encoded next state, and whether the episode hit its time
/// limit there.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Mask,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub truncated: bool,
}

/// Fixed-capacity ring buffer with FIFO eviction.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: Vec<Transition>,
    capacity: usize,
    next: usize,
    inserted: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayMemory {
            buf: Vec::with_capacity(capacity),
            capacity,
            next: 0,
            inserted: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() < self.capacity {
            self.buf.push(t);
        } else {
            self.buf[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.buf[i]
    }

    /// Uniform batch of indices (with replacement).
    pub fn sample_indices(&self, batch: usize, rng: &mut Rng) -> Vec<usize> {
        (0..batch)
            .map(|_| rng.below(self.buf.len() as u64) as usize)
            .collect()
    }
}

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub batch_size: usize,
    /// Soft target update rate.
    pub target_tau: f64,
    pub replay_capacity: usize,
    /// Environment steps driven by the random baseline before updates start.
    pub warmup_steps: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub gumbel: GumbelConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.9,
            actor_learning_rate: 1e-3,
            critic_learning_rate: 1e-3,
            batch_size: 64,
            target_tau: 0.01,
            replay_capacity: 10_000,
            warmup_steps: 200,
            actor_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            gumbel: GumbelConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(alloc::format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.actor_learning_rate > 0.0 && self.critic_learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.target_tau > 0.0 && self.target_tau <= 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "target_tau must be in (0, 1], got {}",
                self.target_tau
            )));
        }
        if self.replay_capacity == 0 {
            return Err(Error::InvalidConfig("replay_capacity must be >= 1".into()));
        }
        if self.actor_hidden.is_empty() || self.critic_hidden.is_empty() {
            return Err(Error::InvalidConfig("actor and critic need hidden layers".into()));
        }
        self.gumbel.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Train,
    Eval,
}

/// Actor-critic learner with target networks and replay memory.
#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: AgentConfig,
    state_dim: usize,
    num_measurements: usize,
    num_selected: usize,
    pub actor_spec: MlpSpec,
    pub critic_spec: MlpSpec,
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
    pub actor_target: Vec<f64>,
    pub critic_target: Vec<f64>,
    actor_opt: Adam,
    critic_opt: Adam,
    pub replay: ReplayMemory,
    train_steps: u64,
}

impl Agent {
    /// Fresh networks: actor `state_dim -> hidden -> N` (final layer scaled
    /// to 1/10 so the initial policy is near uniform), critic
    /// `state_dim + N -> hidden -> 1`.
    pub fn new(
        cfg: AgentConfig,
        state_dim: usize,
        num_measurements: usize,
        num_selected: usize,
        rng: &mut Rng,
    ) -> crate::Result<Agent> {
        cfg.validate()?;
        if num_selected == 0 || num_selected > num_measurements {
            return Err(Error::InvalidConfig(alloc::format!(
                "need 1 <= K <= N, got K={num_selected}, N={num_measurements}"
            )));
        }
        let actor_spec = MlpSpec::with_hidden(
            state_dim,
            &cfg.actor_hidden,
            num_measurements,
            Activation::Identity,
        )?;
        let critic_spec = MlpSpec::with_hidden(
            state_dim + num_measurements,
            &cfg.critic_hidden,
            1,
            Activation::Identity,
        )?;
        let mut actor = init_params(&actor_spec, rng);
        scale_last_layer(&actor_spec, &mut actor, 0.1);
        let critic = init_params(&critic_spec, rng);
        let actor_opt = Adam::new(cfg.actor_learning_rate, actor.len());
        let critic_opt = Adam::new(cfg.critic_learning_rate, critic.len());
        let replay = ReplayMemory::new(cfg.replay_capacity);
        Ok(Agent {
            state_dim,
            num_measurements,
            num_selected,
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_spec,
            critic_spec,
            actor_opt,
            critic_opt,
            replay,
            train_steps: 0,
            cfg,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_measurements(&self) -> usize {
        self.num_measurements
    }

    pub fn num_selected(&self) -> usize {
        self.num_selected
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn set_train_steps(&mut self, steps: u64) {
        self.train_steps = steps;
    }

    /// Top-K of the actor logits, perturbed by Gumbel noise at scale `sigma`
    /// in train mode, noise-free in eval mode. Always exactly K ones.
    pub fn select_action(
        &self,
        state: &[f64],
        sigma: f64,
        rng: &mut Rng,
        mode: ActionMode,
    ) -> crate::Result<Mask> {
        let logits = forward(&self.actor_spec, &self.actor, state)?;
        let scores = match mode {
            ActionMode::Eval => logits,
            ActionMode::Train => {
                let noise = sample_gumbel(logits.len(), sigma, rng);
                logits.iter().zip(&noise).map(|(&l, &e)| l + e).collect()
            }
        };
        top_k(&scores, self.num_selected)
    }

    fn critic_input(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(state.len() + action.len());
        input.extend_from_slice(state);
        input.extend_from_slice(action);
        input
    }

    /// Bootstrapped regression targets `r + gamma * Q'(s', pi'(s'))`, with
    /// the target policy evaluated noise-free. Time-limit truncations still
    /// bootstrap.
    pub fn td_targets(&self, batch: &[&Transition]) -> crate::Result<Vec<f64>> {
        let mut out = Vec::with_capacity(batch.len());
        for tr in batch {
            let logits = forward(&self.actor_spec, &self.actor_target, &tr.next_state)?;
            let next_action = top_k(&logits, self.num_selected)?.dense();
            let input = self.critic_input(&tr.next_state, &next_action);
            let q_next = forward(&self.critic_spec, &self.critic_target, &input)?[0];
            out.push(tr.reward + self.cfg.gamma * q_next);
        }
        Ok(out)
    }

    /// One Adam step on the critic minimizing the mean squared Bellman
    /// error over the batch; targets are constants. Returns the pre-step
    /// loss.
    pub fn critic_update(&mut self, batch: &[&Transition]) -> crate::Result<f64> {
        let targets = self.td_targets(batch)?;
        let b = batch.len() as f64;
        let mut grads = vec![0.0; self.critic.len()];
        let mut loss = 0.0;
        for (tr, &target) in batch.iter().zip(&targets) {
            let input = self.critic_input(&tr.state, &tr.action.dense());
            let trace = forward_trace(&self.critic_spec, &self.critic, &input)?;
            let q = trace.output()[0];
            let err = q - target;
            loss += err * err;
            backward_trace(
                &self.critic_spec,
                &self.critic,
                &trace,
                &[2.0 * err / b],
                &mut grads,
            );
        }
        self.critic_opt.step(&mut self.critic, &grads);
        Ok(loss / b)
    }

    /// One ascent step on the actor: fresh Gumbel noise at scale `sigma`,
    /// relaxed top-K action, gradient of the frozen critic's value through
    /// the relaxation into the actor. Returns the mean Q before the step.
    pub fn actor_update(
        &mut self,
        states: &[&[f64]],
        sigma: f64,
        rng: &mut Rng,
    ) -> crate::Result<f64> {
        let b = states.len() as f64;
        let tau = self.cfg.gumbel.relax_temperature;
        let mut grads = vec![0.0; self.actor.len()];
        let mut mean_q = 0.0;
        for &state in states {
            let atrace = forward_trace(&self.actor_spec, &self.actor, state)?;
            let logits = atrace.output().to_vec();
            let noise = sample_gumbel(logits.len(), sigma, rng);
            let relaxed = relaxed_top_k(&logits, &noise, self.num_selected, tau)?;
            let input = self.critic_input(state, &relaxed.soft);
            let ctrace = forward_trace(&self.critic_spec, &self.critic, &input)?;
            mean_q += ctrace.output()[0];
            let dq_dinput = input_gradient(&self.critic_spec, &self.critic, &ctrace, &[1.0]);
            let dq_dsoft = &dq_dinput[self.state_dim..];
            let dq_dlogits = relaxed.backward(dq_dsoft);
            // Gradient ascent: minimize -Q.
            let neg: Vec<f64> = dq_dlogits.iter().map(|&g| -g / b).collect();
            backward_trace(&self.actor_spec, &self.actor, &atrace, &neg, &mut grads);
        }
        self.actor_opt.step(&mut self.actor, &grads);
        Ok(mean_q / b)
    }

    /// Soft target update `theta' <- tau * theta + (1 - tau) * theta'` for
    /// both networks.
    pub fn soft_update_targets(&mut self) {
        let tau = self.cfg.target_tau;
        for (t, &p) in self.actor_target.iter_mut().zip(&self.actor) {
            *t = tau * p + (1.0 - tau) * *t;
        }
        for (t, &p) in self.critic_target.iter_mut().zip(&self.critic) {
            *t = tau * p + (1.0 - tau) * *t;
        }
    }

    /// One critic and one actor update on a shared replay batch, followed by
    /// a soft target update. Returns `None` (a no-op) while the replay holds
    /// fewer transitions than a batch.
    pub fn update(&mut self, sigma: f64, rng: &mut Rng) -> crate::Result<Option<UpdateStats>> {
        if self.replay.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let idx = self.replay.sample_indices(self.cfg.batch_size, rng);
        // The updates need &mut self, so the batch is cloned out of replay.
        let batch_owned: Vec<Transition> =
            idx.iter().map(|&i| self.replay.get(i).clone()).collect();
        let refs: Vec<&Transition> = batch_owned.iter().collect();
        let critic_loss = self.critic_update(&refs)?;
        let state_refs: Vec<&[f64]> = batch_owned.iter().map(|t| t.state.as_slice()).collect();
        let actor_value = self.actor_update(&state_refs, sigma, rng)?;
        self.soft_update_targets();
        self.train_steps += 1;
        Ok(Some(UpdateStats {
            critic_loss,
            actor_value,
        }))
    }
}

/// Losses reported by one [`Agent::update`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_value: f64,
}

// --- checkpointing -----------------------------------------------------------
//
// Layout: magic "IVAC", version u32, state_dim/N/K u32, train_steps u64,
// then four MLP blocks (actor, critic, actor target, critic target) and two
// Adam blocks (actor, critic optimizers).

const AGENT_MAGIC: &[u8; 4] = b"IVAC";
const AGENT_VERSION: u32 = 1;

impl Agent {
    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(AGENT_MAGIC);
        out.extend_from_slice(&AGENT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.state_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_measurements as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_selected as u32).to_le_bytes());
        out.extend_from_slice(&self.train_steps.to_le_bytes());
        out.extend_from_slice(&nn::params_to_bytes(&self.actor_spec, &self.actor));
        out.extend_from_slice(&nn::params_to_bytes(&self.critic_spec, &self.critic));
        out.extend_from_slice(&nn::params_to_bytes(&self.actor_spec, &self.actor_target));
        out.extend_from_slice(&nn::params_to_bytes(&self.critic_spec, &self.critic_target));
        nn::write_adam_block(&mut out, &self.actor_opt);
        nn::write_adam_block(&mut out, &self.critic_opt);
        out
    }

    /// Restores an agent from checkpoint bytes. The replay memory is not
    /// serialized; it restarts empty at the stored step counter.
    pub fn from_checkpoint_bytes(bytes: &[u8], cfg: AgentConfig) -> crate::Result<Agent> {
        cfg.validate()?;
        let mut r = nn::Reader::new(bytes);
        let magic = r.take(4, "agent_magic")?;
        if magic != AGENT_MAGIC {
            return Err(Error::Checkpoint {
                field: "agent_magic",
                detail: String::from("bad magic bytes"),
            });
        }
        let version = r.u32("agent_version")?;
        if version != AGENT_VERSION {
            return Err(Error::Checkpoint {
                field: "agent_version",
                detail: alloc::format!("unsupported version {version}"),
            });
        }
        let state_dim = r.u32("agent_state_dim")? as usize;
        let num_measurements = r.u32("agent_num_measurements")? as usize;
        let num_selected = r.u32("agent_num_selected")? as usize;
        if num_selected == 0 || num_selected > num_measurements {
            return Err(Error::Checkpoint {
                field: "agent_num_selected",
                detail: alloc::format!("K={num_selected} outside [1, {num_measurements}]"),
            });
        }
        let train_steps = r.u64("agent_train_steps")?;
        let (actor_spec, actor) = nn::read_mlp_block(&mut r)?;
        let (critic_spec, critic) = nn::read_mlp_block(&mut r)?;
        let (actor_t_spec, actor_target) = nn::read_mlp_block(&mut r)?;
        let (critic_t_spec, critic_target) = nn::read_mlp_block(&mut r)?;
        if actor_t_spec != actor_spec || critic_t_spec != critic_spec {
            return Err(Error::Checkpoint {
                field: "agent_target_spec",
                detail: String::from("target network shape differs from its online network"),
            });
        }
        if actor_spec.input_dim() != state_dim || actor_spec.output_dim() != num_measurements {
            return Err(Error::Checkpoint {
                field: "agent_actor_shape",
                detail: alloc::format!(
                    "actor is {}->{}, header says {}->{}",
                    actor_spec.input_dim(),
                    actor_spec.output_dim(),
                    state_dim,
                    num_measurements
                ),
            });
        }
        if critic_spec.input_dim() != state_dim + num_measurements
            || critic_spec.output_dim() != 1
        {
            return Err(Error::Checkpoint {
                field: "agent_critic_shape",
                detail: String::from("critic shape inconsistent with header"),
            });
        }
        let actor_opt = nn::read_adam_block(&mut r, actor.len())?;
        let critic_opt = nn::read_adam_block(&mut r, critic.len())?;
        if r.remaining() != 0 {
            return Err(Error::Checkpoint {
                field: "agent_trailer",
                detail: alloc::format!("{} unread bytes", r.remaining()),
            });
        }
        let replay = ReplayMemory::new(cfg.replay_capacity);
        Ok(Agent {
            cfg,
            state_dim,
            num_measurements,
            num_selected,
            actor_spec,
            critic_spec,
            actor,
            critic,
            actor_target,
            critic_target,
            actor_opt,
            critic_opt,
            replay,
            train_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn tiny_cfg() -> AgentConfig {
        AgentConfig {
            batch_size: 4,
            replay_capacity: 64,
            actor_hidden: vec![8],
            critic_hidden: vec![8],
            ..AgentConfig::default()
        }
    }

    fn tiny_agent(rng: &mut Rng) -> Agent {
        Agent::new(tiny_cfg(), 3, 5, 2, rng).unwrap()
    }

    fn transition(agent: &Agent, rng: &mut Rng, reward: f64) -> Transition {
        let state: Vec<f64> = (0..agent.state_dim()).map(|_| rng.next_f64()).collect();
        let next_state: Vec<f64> = (0..agent.state_dim()).map(|_| rng.next_f64()).collect();
        let action = crate::mask::random_mask(
            agent.num_selected(),
            agent.num_measurements(),
            rng,
        )
        .unwrap();
        Transition {
            state,
            action,
            reward,
            next_state,
            truncated: false,
        }
    }

    /// Critic parameters realizing Q(s, a) = bias + sum_i w_i * a_i for
    /// nonnegative inputs: the hidden ReLU layer is wired as a selector of
    /// the action coordinates.
    fn linear_critic_params(spec: &MlpSpec, state_dim: usize, w: &[f64], bias: f64) -> Vec<f64> {
        let n_in = spec.input_dim();
        let hidden = spec.sizes[1];
        assert_eq!(hidden, w.len(), "hidden layer must match weight count");
        assert_eq!(spec.num_layers(), 2, "selector construction expects one hidden layer");
        let mut params = vec![0.0; spec.param_count()];
        for (h, _) in w.iter().enumerate() {
            params[h * n_in + state_dim + h] = 1.0;
        }
        let out_off = hidden * n_in + hidden;
        for (h, &wi) in w.iter().enumerate() {
            params[out_off + h] = wi;
        }
        params[out_off + hidden] = bias;
        params
    }

    #[test]
    fn replay_is_fifo_and_bounded() {
        let mut replay = ReplayMemory::new(4);
        let mut rng = Rng::seed_from_u64(1);
        let agent = tiny_agent(&mut rng);
        for i in 0..10 {
            replay.push(transition(&agent, &mut rng, i as f64));
            assert!(replay.len() <= 4);
        }
        assert_eq!(replay.len(), 4);
        assert_eq!(replay.inserted(), 10);
        let rewards: Vec<f64> = (0..4).map(|i| replay.get(i).reward).collect();
        // Slots hold the last four pushes in ring order.
        let mut sorted = rewards.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, vec![6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn eval_actions_are_deterministic_with_k_ones() {
        let mut rng = Rng::seed_from_u64(2);
        let agent = tiny_agent(&mut rng);
        let state = [0.2, 0.5, 0.8];
        let a = agent
            .select_action(&state, 1.0, &mut rng, ActionMode::Eval)
            .unwrap();
        let b = agent
            .select_action(&state, 1.0, &mut rng, ActionMode::Eval)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_selected(), 2);
        // sigma = 0 in train mode matches eval mode.
        let c = agent
            .select_action(&state, 0.0, &mut rng, ActionMode::Train)
            .unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn huge_sigma_approaches_uniform_subsets() {
        let mut rng = Rng::seed_from_u64(3);
        let agent = tiny_agent(&mut rng);
        let state = [0.1, 0.9, 0.4];
        let draws = 100_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..draws {
            let m = agent
                .select_action(&state, 1e6, &mut rng, ActionMode::Train)
                .unwrap();
            *counts.entry(m.indices().to_vec()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 10);
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 21.666, "chi2 {chi2}");
    }

    #[test]
    fn td_targets_degenerate_cases() {
        let mut rng = Rng::seed_from_u64(4);
        let mut agent = tiny_agent(&mut rng);
        let tr = transition(&agent, &mut rng, 1.5);

        agent.cfg.gamma = 0.0;
        let t = agent.td_targets(&[&tr]).unwrap();
        assert_eq!(t, vec![1.5]);

        // Zero critic target: Q' = 0 regardless of gamma.
        agent.cfg.gamma = 0.9;
        for v in &mut agent.critic_target {
            *v = 0.0;
        }
        let t = agent.td_targets(&[&tr]).unwrap();
        assert_eq!(t, vec![1.5]);
    }

    #[test]
    fn td_target_bootstraps_handmade_value() {
        let mut rng = Rng::seed_from_u64(5);
        let mut agent = tiny_agent(&mut rng);
        // Q'(s, a) = 5 for any input: zero weights, output bias 5.
        for v in &mut agent.critic_target {
            *v = 0.0;
        }
        let last = agent.critic_target.len() - 1;
        agent.critic_target[last] = 5.0;
        agent.cfg.gamma = 0.9;
        let mut tr = transition(&agent, &mut rng, 1.0);
        tr.truncated = true; // truncation still bootstraps
        let t = agent.td_targets(&[&tr]).unwrap();
        assert!((t[0] - 5.5).abs() < 1e-12);
    }

    #[test]
    fn critic_update_is_a_noop_at_zero_error() {
        let mut rng = Rng::seed_from_u64(6);
        let mut agent = tiny_agent(&mut rng);
        // Zero critic and zero reward: Q = 0, target = 0 -> loss 0 and no
        // parameter motion from a fresh optimizer.
        for v in &mut agent.critic {
            *v = 0.0;
        }
        for v in &mut agent.critic_target {
            *v = 0.0;
        }
        let mut tr = transition(&agent, &mut rng, 0.0);
        tr.reward = 0.0;
        let before = agent.critic.clone();
        let loss = agent.critic_update(&[&tr]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(agent.critic, before);
    }

    #[test]
    fn critic_regresses_to_constant_reward() {
        let mut rng = Rng::seed_from_u64(7);
        let mut agent = tiny_agent(&mut rng);
        agent.cfg.gamma = 0.0;
        let tr = transition(&agent, &mut rng, -2.5);
        let mut loss = f64::INFINITY;
        for _ in 0..2000 {
            loss = agent.critic_update(&[&tr]).unwrap();
            assert!(loss >= 0.0);
        }
        let input: Vec<f64> = tr
            .state
            .iter()
            .copied()
            .chain(tr.action.dense())
            .collect();
        let q = forward(&agent.critic_spec, &agent.critic, &input).unwrap()[0];
        assert!((q + 2.5).abs() < 1e-2, "q {q}, last loss {loss}");
    }

    #[test]
    fn actor_update_is_a_noop_under_constant_critic() {
        let mut rng = Rng::seed_from_u64(8);
        let mut agent = tiny_agent(&mut rng);
        for v in &mut agent.critic {
            *v = 0.0;
        }
        let last = agent.critic.len() - 1;
        agent.critic[last] = 3.0;
        let before = agent.actor.clone();
        let state = [0.3, 0.6, 0.1];
        let q = agent.actor_update(&[&state[..]], 0.5, &mut rng).unwrap();
        assert!((q - 3.0).abs() < 1e-12);
        assert_eq!(agent.actor, before);
    }

    #[test]
    fn actor_converges_to_linear_critic_optimum() {
        // Frozen critic Q(s, a) = sum w_i a_i with w concentrated on a known
        // subset; eval-mode selection must converge to that subset.
        for seed in 0..2 {
            let mut rng = Rng::seed_from_u64(100 + seed);
            let n = 8;
            let k = 3;
            let cfg = AgentConfig {
                actor_hidden: vec![16],
                critic_hidden: vec![n],
                actor_learning_rate: 5e-3,
                ..AgentConfig::default()
            };
            let mut agent = Agent::new(cfg, 2, n, k, &mut rng).unwrap();
            let mut w = vec![0.0; n];
            for i in [1, 4, 6] {
                w[i] = 1.0;
            }
            agent.critic = linear_critic_params(&agent.critic_spec, 2, &w, 0.0);
            let state = [0.5, 0.5];
            let mut converged = false;
            for step in 0..1000 {
                let sigma = crate::gumbel::anneal_sigma(
                    step,
                    &GumbelConfig {
                        anneal_steps: 500,
                        ..GumbelConfig::default()
                    },
                );
                agent.actor_update(&[&state[..]], sigma, &mut rng).unwrap();
                let action = agent
                    .select_action(&state, 0.0, &mut rng, ActionMode::Eval)
                    .unwrap();
                if action.indices() == [1, 4, 6] {
                    converged = true;
                    break;
                }
            }
            assert!(converged, "seed {seed} did not converge");
        }
    }

    #[test]
    fn soft_update_blends_targets() {
        let mut rng = Rng::seed_from_u64(9);
        let mut agent = tiny_agent(&mut rng);
        for v in &mut agent.actor {
            *v = 2.0;
        }
        for v in &mut agent.actor_target {
            *v = 0.0;
        }
        agent.cfg.target_tau = 0.5;
        let critic_before = agent.critic.clone();
        agent.soft_update_targets();
        assert!(agent.actor_target.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        agent.cfg.target_tau = 1.0;
        agent.soft_update_targets();
        assert_eq!(agent.actor_target, agent.actor);
        assert_eq!(agent.critic_target, critic_before.iter().map(|&v| v).collect::<Vec<_>>());
    }

    #[test]
    fn update_is_noop_until_replay_fills() {
        let mut rng = Rng::seed_from_u64(10);
        let mut agent = tiny_agent(&mut rng);
        assert!(agent.update(1.0, &mut rng).unwrap().is_none());
        for _ in 0..4 {
            let tr = transition(&agent, &mut rng, -1.0);
            agent.replay.push(tr);
        }
        let stats = agent.update(1.0, &mut rng).unwrap().unwrap();
        assert!(stats.critic_loss >= 0.0);
        assert!(stats.actor_value.is_finite());
        assert_eq!(agent.train_steps(), 1);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let mut rng = Rng::seed_from_u64(11);
        let mut agent = tiny_agent(&mut rng);
        for _ in 0..8 {
            let tr = transition(&agent, &mut rng, 0.5);
            agent.replay.push(tr);
        }
        agent.update(1.0, &mut rng).unwrap();
        let bytes = agent.checkpoint_bytes();
        let restored = Agent::from_checkpoint_bytes(&bytes, agent.cfg.clone()).unwrap();
        let bits = |v: &[f64]| v.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&agent.actor), bits(&restored.actor));
        assert_eq!(bits(&agent.critic), bits(&restored.critic));
        assert_eq!(bits(&agent.actor_target), bits(&restored.actor_target));
        assert_eq!(bits(&agent.critic_target), bits(&restored.critic_target));
        assert_eq!(agent.train_steps(), restored.train_steps());
        // Identical post-restore behavior on both streams.
        let mut r1 = Rng::seed_from_u64(50);
        let mut r2 = Rng::seed_from_u64(50);
        let s = [0.1, 0.2, 0.3];
        let a1 = agent.select_action(&s, 1.0, &mut r1, ActionMode::Train).unwrap();
        let a2 = restored.select_action(&s, 1.0, &mut r2, ActionMode::Train).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn corrupt_agent_checkpoint_names_field() {
        let mut rng = Rng::seed_from_u64(12);
        let agent = tiny_agent(&mut rng);
        let mut bytes = agent.checkpoint_bytes();
        bytes[1] = b'?';
        match Agent::from_checkpoint_bytes(&bytes, agent.cfg.clone()) {
            Err(Error::Checkpoint { field, .. }) => assert_eq!(field, "agent_magic"),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
        let bytes = agent.checkpoint_bytes();
        let truncated = &bytes[..bytes.len() - 10];
        assert!(Agent::from_checkpoint_bytes(truncated, agent.cfg.clone()).is_err());
    }

    #[test]
    fn training_run_is_reproducible() {
        let run = |seed: u64| -> Vec<f64> {
            let mut rng = Rng::seed_from_u64(seed);
            let mut agent = tiny_agent(&mut rng);
            let mut log = Vec::new();
            for _ in 0..6 {
                let reward = rng.next_f64() - 1.0;
                let tr = transition(&agent, &mut rng, reward);
                agent.replay.push(tr);
            }
            for _ in 0..10 {
                let stats = agent.update(0.7, &mut rng).unwrap().unwrap();
                log.push(stats.critic_loss);
                log.push(stats.actor_value);
            }
            log
        };
        let a = run(77);
        let b = run(77);
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
