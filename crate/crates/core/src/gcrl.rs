//! Goal-conditioned DDPG with hindsight relabeling on a 2-D point mass.
//!
//! Rewards are `0` when the achieved goal lies within `eps_goal` of the
//! goal and `-1` otherwise. Reaching the goal never ends an episode; a
//! rollout is always truncated at the horizon.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::diff::{Adam, DiffError, Param, Tape, Tensor};
use crate::nets::{Actor, Critic, CriticDims, CriticVariant, Module, Sizing};

pub const CSV_HEADER: &str = "arch,seed,epoch,success_rate,critic_loss,actor_loss";

#[derive(Debug, Error)]
pub enum GcrlError {
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("future_p must lie in [0, 1], got {0}")]
    FutureP(f64),
    #[error("gamma must lie in (0, 1), got {0}")]
    Gamma(f64),
    #[error("non-finite loss at update {update}: critic {critic_loss}, actor {actor_loss}")]
    NonFinite { update: usize, critic_loss: f64, actor_loss: f64 },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Point mass in the unit square moved by bounded displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassEnv {
    pub a_max: f64,
    pub eps_goal: f64,
    pub horizon: usize,
}

impl Default for PointMassEnv {
    fn default() -> Self {
        Self {
            a_max: 0.05,
            eps_goal: 0.03,
            horizon: 50,
        }
    }
}

pub const STATE_DIM: usize = 2;
pub const ACTION_DIM: usize = 2;
pub const GOAL_DIM: usize = 2;

impl PointMassEnv {
    pub fn dims(&self) -> CriticDims {
        CriticDims { state: STATE_DIM, action: ACTION_DIM, goal: GOAL_DIM }
    }

    /// Uniform start and goal.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> ([f64; 2], [f64; 2]) {
        ([rng.gen(), rng.gen()], [rng.gen(), rng.gen()])
    }

    pub fn clip_action(&self, a: [f64; 2]) -> [f64; 2] {
        a.map(|x| x.clamp(-self.a_max, self.a_max))
    }

    /// Next state, which is also the achieved goal `M(s, a)`.
    pub fn step(&self, s: [f64; 2], a: [f64; 2]) -> [f64; 2] {
        let a = self.clip_action(a);
        [(s[0] + a[0]).clamp(0.0, 1.0), (s[1] + a[1]).clamp(0.0, 1.0)]
    }

    pub fn reward(&self, achieved: &[f64], goal: &[f64]) -> f64 {
        if goal_reached(achieved, goal, self.eps_goal) {
            0.0
        } else {
            -1.0
        }
    }
}

pub fn goal_reached(achieved: &[f64], goal: &[f64], eps: f64) -> bool {
    let d2: f64 = achieved.iter().zip(goal).map(|(a, g)| (a - g) * (a - g)).sum();
    d2.sqrt() <= eps
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: [f64; 2],
    pub a: [f64; 2],
    pub r: f64,
    pub s_next: [f64; 2],
    pub g: [f64; 2],
    pub achieved: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    pub transitions: Vec<Transition>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.r).sum()
    }

    /// Goal held at the final step.
    pub fn success(&self, eps: f64) -> bool {
        self.transitions.last().is_some_and(|t| goal_reached(&t.achieved, &t.g, eps))
    }
}

/// FIFO store of whole episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<Episode>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self { capacity, episodes: VecDeque::with_capacity(capacity.min(1024)) }
    }

    pub fn push(&mut self, ep: Episode) {
        if ep.is_empty() {
            return;
        }
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(ep);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }
}

/// Training batch as `[B, ·]` tensors.
#[derive(Debug, Clone)]
pub struct Batch {
    pub s: Tensor,
    pub a: Tensor,
    pub r: Tensor,
    pub s_next: Tensor,
    pub g: Tensor,
    /// Rows whose goal was replaced by a future achieved goal.
    pub relabeled: usize,
}

/// Samples `batch_size` transitions uniformly over episodes and time steps.
/// With probability `future_p` a sample's goal becomes the achieved goal of
/// a uniformly chosen step `t' ≥ t` of the same episode, and its reward is
/// recomputed.
pub fn her_relabel<R: Rng + ?Sized>(
    buffer: &ReplayBuffer,
    batch_size: usize,
    future_p: f64,
    eps_goal: f64,
    rng: &mut R,
) -> Result<Batch, GcrlError> {
    if buffer.is_empty() {
        return Err(GcrlError::EmptyBuffer);
    }
    if !(0.0..=1.0).contains(&future_p) {
        return Err(GcrlError::FutureP(future_p));
    }
    let mut s = Vec::with_capacity(batch_size * 2);
    let mut a = Vec::with_capacity(batch_size * 2);
    let mut r = Vec::with_capacity(batch_size);
    let mut s_next = Vec::with_capacity(batch_size * 2);
    let mut g = Vec::with_capacity(batch_size * 2);
    let mut relabeled = 0;
    for _ in 0..batch_size {
        let ep = &buffer.episodes[rng.gen_range(0..buffer.len())];
        let t = rng.gen_range(0..ep.len());
        let tr = &ep.transitions[t];
        let (goal, reward) = if rng.gen::<f64>() < future_p {
            relabeled += 1;
            let future = rng.gen_range(t..ep.len());
            let goal = ep.transitions[future].achieved;
            let reward = if goal_reached(&tr.achieved, &goal, eps_goal) { 0.0 } else { -1.0 };
            (goal, reward)
        } else {
            (tr.g, tr.r)
        };
        s.extend(tr.s);
        a.extend(tr.a);
        r.push(reward);
        s_next.extend(tr.s_next);
        g.extend(goal);
    }
    Ok(Batch {
        s: Tensor::new(batch_size, STATE_DIM, s)?,
        a: Tensor::new(batch_size, ACTION_DIM, a)?,
        r: Tensor::new(batch_size, 1, r)?,
        s_next: Tensor::new(batch_size, STATE_DIM, s_next)?,
        g: Tensor::new(batch_size, GOAL_DIM, g)?,
        relabeled,
    })
}

/// Clips Bellman targets to the attainable range `[-1/(1-γ), 0]`.
pub fn td_target(r: f64, gamma: f64, q_next: f64) -> f64 {
    (r + gamma * q_next).clamp(-1.0 / (1.0 - gamma), 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub variant: CriticVariant,
    pub sizing: Sizing,
    pub actor_hidden: usize,
    pub actor_layers: usize,
    pub lr: f64,
    pub gamma: f64,
    pub polyak: f64,
    /// Weight of `mean((π/a_max)²)` added to the actor loss.
    pub action_l2: f64,
    /// Standardize states and goals with running statistics.
    pub normalize: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            variant: CriticVariant::Mrn,
            sizing: Sizing::default(),
            actor_hidden: 256,
            actor_layers: 3,
            lr: 1e-3,
            gamma: 0.98,
            polyak: 0.95,
            action_l2: 1.0,
            normalize: true,
        }
    }
}

/// Actor and critic with their slow-moving target copies.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub actor: Actor,
    pub critic: Critic,
    pub actor_target: Actor,
    pub critic_target: Critic,
    actor_opt: Adam,
    critic_opt: Adam,
    pub gamma: f64,
    pub polyak: f64,
    /// Critics see actions divided by `a_max`, so their action inputs span
    /// `[-1, 1]` like the positions.
    pub action_scale: f64,
    pub action_l2: f64,
    pub norm: Option<ObsNorm>,
    updates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// Largest online Q estimate on the batch.
    pub q_max: f64,
}

impl DdpgAgent {
    pub fn new<R: Rng + ?Sized>(env: &PointMassEnv, cfg: &AgentConfig, rng: &mut R) -> Result<Self, GcrlError> {
        if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
            return Err(GcrlError::Gamma(cfg.gamma));
        }
        let critic = Critic::new(cfg.variant, env.dims(), &cfg.sizing, rng);
        let actor = Actor::new(
            STATE_DIM,
            GOAL_DIM,
            vec![-env.a_max; ACTION_DIM],
            vec![env.a_max; ACTION_DIM],
            cfg.actor_hidden,
            cfg.actor_layers,
            rng,
        );
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_opt: Adam::new(cfg.lr),
            critic_opt: Adam::new(cfg.lr),
            gamma: cfg.gamma,
            polyak: cfg.polyak,
            action_scale: 1.0 / env.a_max,
            action_l2: cfg.action_l2,
            norm: cfg.normalize.then(|| ObsNorm::new(STATE_DIM, GOAL_DIM)),
            updates: 0,
        })
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Deterministic action for raw states and goals.
    pub fn act(&self, s: &Tensor, g: &Tensor) -> Result<Tensor, DiffError> {
        match &self.norm {
            Some(n) => self.actor.act(&n.state.apply(s), &n.goal.apply(g)),
            None => self.actor.act(s, g),
        }
    }

    /// Folds freshly collected episodes into the normalizer statistics.
    pub fn observe(&mut self, episodes: &[Episode]) {
        if let Some(n) = &mut self.norm {
            for t in episodes.iter().flat_map(|e| &e.transitions) {
                n.state.push(&t.s);
                n.goal.push(&t.g);
                n.goal.push(&t.achieved);
            }
            n.state.refresh();
            n.goal.refresh();
        }
    }

    /// One critic step, one actor step, then polyak averaging of both
    /// targets.
    pub fn update(&mut self, batch: &Batch) -> Result<UpdateStats, GcrlError> {
        let normalized;
        let batch = match &self.norm {
            Some(n) => {
                normalized = Batch {
                    s: n.state.apply(&batch.s),
                    s_next: n.state.apply(&batch.s_next),
                    g: n.goal.apply(&batch.g),
                    ..batch.clone()
                };
                &normalized
            }
            None => batch,
        };
        let a_next = self.actor_target.act(&batch.s_next, &batch.g)?.scale(self.action_scale);
        let q_next = self.critic_target.evaluate(Some(&batch.s_next), &a_next, &batch.g)?;
        let y: Vec<f64> = batch
            .r
            .data()
            .iter()
            .zip(q_next.data())
            .map(|(&r, &q)| td_target(r, self.gamma, q))
            .collect();
        let y = Tensor::new(y.len(), 1, y)?;

        let mut tape = Tape::new();
        let (s, a, g) = (tape.constant(batch.s.clone()), tape.constant(batch.a.scale(self.action_scale)), tape.constant(batch.g.clone()));
        let yv = tape.constant(y);
        let q = self.critic.forward(&mut tape, Some(s), a, g)?;
        let q_max = tape.value(q).data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let err = tape.sub(yv, q)?;
        let sq = tape.square(err)?;
        let critic_loss_v = tape.mean(sq)?;
        let critic_loss = tape.value(critic_loss_v).item()?;

        let mut actor_tape = Tape::new();
        let (s2, g2) = (actor_tape.constant(batch.s.clone()), actor_tape.constant(batch.g.clone()));
        let pi = self.actor.forward(&mut actor_tape, s2, g2)?;
        let pi = actor_tape.scale(pi, self.action_scale)?;
        actor_tape.set_frozen(true);
        let q_pi = self.critic.forward(&mut actor_tape, Some(s2), pi, g2)?;
        let mean_q = actor_tape.mean(q_pi)?;
        let neg_q = actor_tape.neg(mean_q)?;
        let pi_sq = actor_tape.square(pi)?;
        let mean_pi_sq = actor_tape.mean(pi_sq)?;
        let penalty = actor_tape.scale(mean_pi_sq, self.action_l2)?;
        let actor_loss_v = actor_tape.add(neg_q, penalty)?;
        let actor_loss = actor_tape.value(actor_loss_v).item()?;

        if !critic_loss.is_finite() || !actor_loss.is_finite() {
            return Err(GcrlError::NonFinite { update: self.updates, critic_loss, actor_loss });
        }
        tape.backward(critic_loss_v)?;
        self.critic.collect_grads(&tape);
        self.critic_opt.step(self.critic.params_mut());
        actor_tape.backward(actor_loss_v)?;
        self.actor.collect_grads(&actor_tape);
        self.actor_opt.step(self.actor.params_mut());

        self.critic_target.polyak_update(&self.critic, self.polyak);
        self.actor_target.polyak_update(&self.actor, self.polyak);
        self.updates += 1;
        Ok(UpdateStats { critic_loss, actor_loss, q_max })
    }
}

/// Checkpoints hold the online actor and critic.
impl Module for DdpgAgent {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.actor.params();
        p.extend(self.critic.params());
        if let Some(n) = &self.norm {
            p.extend([&n.state.mean, &n.state.std, &n.goal.mean, &n.goal.std]);
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.actor.params_mut();
        p.extend(self.critic.params_mut());
        if let Some(n) = &mut self.norm {
            p.extend([&mut n.state.mean, &mut n.state.std, &mut n.goal.mean, &mut n.goal.std]);
        }
        p
    }
}

/// Running per-dimension standardization, `clip((x - mean) / std)`. The
/// current mean and std live in parameters so checkpoints carry them.
#[derive(Debug, Clone)]
pub struct RunningNorm {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: f64,
    pub mean: Param,
    pub std: Param,
}

pub const NORM_EPS: f64 = 0.01;
pub const NORM_CLIP: f64 = 5.0;

impl RunningNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
            count: 0.0,
            mean: Param::new(format!("{name}.mean"), Tensor::zeros(1, dim)),
            std: Param::new(format!("{name}.std"), Tensor::filled(1, dim, 1.0)),
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        for (i, v) in x.iter().enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
        }
        self.count += 1.0;
    }

    /// Recomputes mean and std from everything pushed so far.
    pub fn refresh(&mut self) {
        if self.count == 0.0 {
            return;
        }
        for i in 0..self.sum.len() {
            let m = self.sum[i] / self.count;
            let var = (self.sum_sq[i] / self.count - m * m).max(NORM_EPS * NORM_EPS);
            self.mean.value_mut().data_mut()[i] = m;
            self.std.value_mut().data_mut()[i] = var.sqrt();
        }
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let (mean, std) = (self.mean.value().data(), self.std.value().data());
        let d = mean.len();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(k, v)| ((v - mean[k % d]) / std[k % d]).clamp(-NORM_CLIP, NORM_CLIP))
            .collect();
        Tensor::new(x.rows(), x.cols(), data).expect("same shape")
    }
}

/// Separate statistics for states and goals.
#[derive(Debug, Clone)]
pub struct ObsNorm {
    pub state: RunningNorm,
    pub goal: RunningNorm,
}

impl ObsNorm {
    pub fn new(state_dim: usize, goal_dim: usize) -> Self {
        Self { state: RunningNorm::new("norm.state", state_dim), goal: RunningNorm::new("norm.goal", goal_dim) }
    }
}

/// Exploration applied on top of a deterministic policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exploration {
    /// Gaussian noise standard deviation as a fraction of `a_max`.
    pub noise_eps: f64,
    /// Probability of a uniformly random action.
    pub random_eps: f64,
}

impl Default for Exploration {
    fn default() -> Self {
        Self { noise_eps: 0.2, random_eps: 0.2 }
    }
}

/// Runs `n` episodes in lockstep. `policy(s, g)` maps `[n, 2]` state and
/// goal batches to raw actions, which are clipped to the box. With
/// `explore`, each action gets Gaussian noise and is replaced by a uniform
/// draw with probability `random_eps`.
pub fn rollouts<R, P>(
    env: &PointMassEnv,
    n: usize,
    explore: Option<Exploration>,
    rng: &mut R,
    mut policy: P,
) -> Result<Vec<Episode>, GcrlError>
where
    R: Rng + ?Sized,
    P: FnMut(&Tensor, &Tensor, &mut R) -> Result<Tensor, DiffError>,
{
    let starts: Vec<([f64; 2], [f64; 2])> = (0..n).map(|_| env.reset(rng)).collect();
    let mut states: Vec<[f64; 2]> = starts.iter().map(|p| p.0).collect();
    let goals: Vec<[f64; 2]> = starts.iter().map(|p| p.1).collect();
    let g_tensor = Tensor::new(n, GOAL_DIM, goals.iter().flatten().copied().collect())?;
    let mut episodes = vec![Episode { transitions: Vec::with_capacity(env.horizon) }; n];
    let noise = Normal::new(0.0, explore.map_or(0.0, |e| e.noise_eps) * env.a_max).expect("finite sigma");
    for _ in 0..env.horizon {
        let s_tensor = Tensor::new(n, STATE_DIM, states.iter().flatten().copied().collect())?;
        let raw = policy(&s_tensor, &g_tensor, rng)?;
        for i in 0..n {
            let mut a = [raw.get(i, 0), raw.get(i, 1)];
            if let Some(ex) = explore {
                a = env.clip_action([a[0] + noise.sample(rng), a[1] + noise.sample(rng)]);
                if rng.gen::<f64>() < ex.random_eps {
                    a = [rng.gen_range(-env.a_max..=env.a_max), rng.gen_range(-env.a_max..=env.a_max)];
                }
            }
            let a = env.clip_action(a);
            let next = env.step(states[i], a);
            episodes[i].transitions.push(Transition {
                s: states[i],
                a,
                r: env.reward(&next, &goals[i]),
                s_next: next,
                g: goals[i],
                achieved: next,
            });
            states[i] = next;
        }
    }
    Ok(episodes)
}

/// Rollouts driven by an actor network.
pub fn rollout_actor<R: Rng + ?Sized>(
    env: &PointMassEnv,
    actor: &Actor,
    n: usize,
    explore: Option<Exploration>,
    rng: &mut R,
) -> Result<Vec<Episode>, GcrlError> {
    rollouts(env, n, explore, rng, |s, g, _| actor.act(s, g))
}

/// Rollouts driven by an agent's policy, including its input normalization.
pub fn rollout_agent<R: Rng + ?Sized>(
    env: &PointMassEnv,
    agent: &DdpgAgent,
    n: usize,
    explore: Option<Exploration>,
    rng: &mut R,
) -> Result<Vec<Episode>, GcrlError> {
    rollouts(env, n, explore, rng, |s, g, _| agent.act(s, g))
}

/// Fraction of `n` noise-free episodes whose final step holds the goal.
pub fn evaluate<R: Rng + ?Sized>(env: &PointMassEnv, agent: &DdpgAgent, n: usize, rng: &mut R) -> Result<f64, GcrlError> {
    let eps = rollout_agent(env, agent, n, None, rng)?;
    Ok(success_rate(env, &eps))
}

pub fn success_rate(env: &PointMassEnv, episodes: &[Episode]) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    episodes.iter().filter(|e| e.success(env.eps_goal)).count() as f64 / episodes.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: PointMassEnv,
    pub agent: AgentConfig,
    pub exploration: Exploration,
    pub seed: u64,
    pub epochs: usize,
    pub cycles_per_epoch: usize,
    pub episodes_per_cycle: usize,
    pub updates_per_cycle: usize,
    pub batch_size: usize,
    pub buffer_episodes: usize,
    pub future_p: f64,
    pub eval_rollouts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: PointMassEnv::default(),
            agent: AgentConfig::default(),
            exploration: Exploration::default(),
            seed: 100,
            epochs: 50,
            cycles_per_epoch: 2,
            episodes_per_cycle: 50,
            updates_per_cycle: 40,
            batch_size: 256,
            buffer_episodes: 10_000,
            future_p: 0.8,
            eval_rollouts: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub success_rate: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub q_max: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub curve: Vec<EpochRow>,
    pub agent: DdpgAgent,
}

impl TrainResult {
    pub fn final_success(&self) -> f64 {
        self.curve.last().map_or(0.0, |r| r.success_rate)
    }

    /// First epoch whose success rate reaches `threshold`.
    pub fn epochs_to(&self, threshold: f64) -> Option<usize> {
        epochs_to(&self.curve, threshold)
    }
}

pub fn epochs_to(curve: &[EpochRow], threshold: f64) -> Option<usize> {
    curve.iter().find(|r| r.success_rate >= threshold).map(|r| r.epoch)
}

/// Alternates collection and updates for `epochs` epochs, evaluating after
/// each. `on_epoch` sees every row as it is produced.
pub fn train_with(cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochRow)) -> Result<TrainResult, GcrlError> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut collect_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(3));
    let mut agent = DdpgAgent::new(&cfg.env, &cfg.agent, &mut init_rng)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_episodes);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (mut closs, mut aloss, mut n) = (0.0, 0.0, 0usize);
        let mut q_max = f64::NEG_INFINITY;
        for _ in 0..cfg.cycles_per_epoch {
            let eps = rollout_agent(&cfg.env, &agent, cfg.episodes_per_cycle, Some(cfg.exploration), &mut collect_rng)?;
            agent.observe(&eps);
            eps.into_iter().for_each(|e| buffer.push(e));
            for _ in 0..cfg.updates_per_cycle {
                let batch = her_relabel(&buffer, cfg.batch_size, cfg.future_p, cfg.env.eps_goal, &mut sample_rng)?;
                let st = agent.update(&batch)?;
                closs += st.critic_loss;
                aloss += st.actor_loss;
                q_max = q_max.max(st.q_max);
                n += 1;
            }
        }
        let success_rate = evaluate(&cfg.env, &agent, cfg.eval_rollouts, &mut eval_rng)?;
        let denom = n.max(1) as f64;
        let row = EpochRow {
            epoch,
            success_rate,
            critic_loss: closs / denom,
            actor_loss: aloss / denom,
            q_max,
        };
        on_epoch(&row);
        curve.push(row);
    }
    Ok(TrainResult { curve, agent })
}

pub fn train(cfg: &TrainConfig) -> Result<TrainResult, GcrlError> {
    train_with(cfg, |_| {})
}

/// CSV rows (no header) for one learning curve.
pub fn curve_csv(arch: &str, seed: u64, curve: &[EpochRow]) -> String {
    curve
        .iter()
        .map(|r| format!("{arch},{seed},{},{},{},{}\n", r.epoch, r.success_rate, r.critic_loss, r.actor_loss))
        .collect()
}
