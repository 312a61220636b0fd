//! Tabular solvers: value iteration, Q-learning, and stitching per-stage
//! policies into a policy on a composite.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{
    evaluate_policy, evaluate_policy_exact, ActionId, Distribution, FiniteMdp, MdpError, Policy,
    StateId, ValueFunction,
};
use crate::zigzag::{check_monotonic, is_forward_moving, Composite, ZigZag, ZigZagError};

/// Largest state count for which policies are evaluated by a direct solve.
const EXACT_SOLVE_LIMIT: usize = 2000;
/// Relative slack under which two backups count as tied.
const TIE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid solver configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    ZigZag(#[from] ZigZagError),
    #[error("composite state {0} lies in no stage")]
    StageGap(StateId),
    #[error("expected {expected} per-stage policies, got {found}")]
    StageCount { expected: usize, found: usize },
    #[error("precondition failed: {0}")]
    PreconditionFailed(Precondition),
    #[error("environment: {0}")]
    Environment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precondition {
    ForwardMoving,
    Monotonicity,
}

impl std::fmt::Display for Precondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precondition::ForwardMoving => "zig-zag is not forward-moving",
            Precondition::Monotonicity => "optimal values are not monotonic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gamma: f64,
    pub tol: f64,
    /// Sweep cap for value iteration.
    pub max_iter: usize,
    pub alpha: f64,
    pub epsilon: f64,
    /// Steps before an episode is cut off.
    pub episode_cap: usize,
    pub seed: u64,
    /// Environment steps of Q-learning.
    pub train_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            tol: 1e-8,
            max_iter: 100_000,
            alpha: 0.1,
            epsilon: 0.1,
            episode_cap: 200,
            seed: 0,
            train_steps: 20_000,
            eval_every: 200,
            eval_episodes: 20,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |what: String| Err(ConfigError(what));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma = {} must lie in [0, 1)", self.gamma));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol = {} must be positive", self.tol));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon = {} must lie in [0, 1]", self.epsilon));
        }
        if self.max_iter == 0 || self.episode_cap == 0 || self.eval_every == 0 {
            return bad("max_iter, episode_cap and eval_every must be positive".into());
        }
        Ok(())
    }
}

/// Least-id action whose backup is within a relative [`TIE_EPS`] of the best.
fn greedy_at(m: &FiniteMdp, s: StateId, gamma: f64, v: &[f64]) -> Option<(ActionId, f64)> {
    let fiber = m.actions_at(s);
    let q: Vec<f64> = fiber.iter().map(|&a| m.backup(a, gamma, v)).collect();
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = TIE_EPS * best.abs().max(1.0);
    fiber
        .iter()
        .zip(&q)
        .find(|(_, &x)| x >= best - slack)
        .map(|(&a, _)| (a, best))
}

fn greedy_policy(m: &FiniteMdp, gamma: f64, v: &[f64]) -> Policy {
    let choice = m.states().map(|s| greedy_at(m, s, gamma, v).map(|(a, _)| a)).collect();
    Policy::new(m, choice).expect("greedy choices come from fibers")
}

fn bellman_residual(m: &FiniteMdp, gamma: f64, v: &[f64]) -> f64 {
    m.states()
        .map(|s| {
            let target = greedy_at(m, s, gamma, v).map_or(0.0, |(_, b)| b);
            (target - v[s.0]).abs()
        })
        .fold(0.0, f64::max)
}

/// Optimal values and the greedy policy with least-id tie-breaking.
///
/// Value iteration runs until the Bellman residual is below `cfg.tol`; on
/// small MDPs the greedy policy is then polished by exact policy iteration,
/// which pins down ties that the approximate values would blur.
pub fn value_iteration(m: &FiniteMdp, cfg: &SolverConfig) -> Result<(ValueFunction, Policy), MdpError> {
    if !(0.0..1.0).contains(&cfg.gamma) {
        return Err(MdpError::InvalidDiscount(cfg.gamma));
    }
    let gamma = cfg.gamma;
    let mut v = vec![0.0; m.n_states()];
    let mut next = vec![0.0; m.n_states()];
    let mut converged = false;
    let mut delta = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        delta = 0.0;
        for s in m.states() {
            next[s.0] = greedy_at(m, s, gamma, &v).map_or(0.0, |(_, b)| b);
            delta = delta.max((next[s.0] - v[s.0]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if gamma * delta <= cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(MdpError::NoConvergence {
            iterations: cfg.max_iter,
            residual: gamma * delta,
        });
    }

    let mut policy = greedy_policy(m, gamma, &v);
    if m.n_states() <= EXACT_SOLVE_LIMIT {
        if let Some((pv, pp)) = polish(m, gamma, policy.clone()) {
            if bellman_residual(m, gamma, pv.as_slice()) <= cfg.tol {
                return Ok((pv, pp));
            }
        }
    }
    policy = greedy_policy(m, gamma, &v);
    Ok((ValueFunction::new(v), policy))
}

/// Policy iteration from `start`, switching only on clear improvements.
fn polish(m: &FiniteMdp, gamma: f64, start: Policy) -> Option<(ValueFunction, Policy)> {
    let mut policy = start;
    for _ in 0..m.n_states().max(1) * 4 {
        let v = evaluate_policy_exact(m, &policy, gamma).ok()?;
        let vs = v.as_slice();
        let mut changed = false;
        let choice = m
            .states()
            .map(|s| {
                let current = policy.action(s)?;
                let (best, val) = greedy_at(m, s, gamma, vs)?;
                let here = m.backup(current, gamma, vs);
                if val > here + TIE_EPS * val.abs().max(1.0) {
                    changed = true;
                    Some(best)
                } else {
                    Some(current)
                }
            })
            .collect();
        policy = Policy::new(m, choice).ok()?;
        if !changed {
            let final_policy = greedy_policy(m, gamma, vs);
            return Some((v, final_policy));
        }
    }
    None
}

/// An MDP with a start distribution and a set of goal states. Episodes end
/// on reaching a goal (success) or an absorbing state (failure).
#[derive(Clone, Debug)]
pub struct Environment {
    pub mdp: Arc<FiniteMdp>,
    pub start: Distribution,
    goal: Vec<bool>,
}

impl Environment {
    pub fn new(mdp: Arc<FiniteMdp>, start: Distribution, goals: &[StateId]) -> Result<Self, SolveError> {
        let n = mdp.n_states();
        if let Some(s) = start.states().chain(goals.iter().copied()).find(|s| s.0 >= n) {
            return Err(SolveError::Environment(format!("state {s} out of range")));
        }
        let mut goal = vec![false; n];
        for g in goals {
            goal[g.0] = true;
        }
        Ok(Self { mdp, start, goal })
    }

    pub fn is_goal(&self, s: StateId) -> bool {
        self.goal[s.0]
    }

    pub fn goals(&self) -> impl Iterator<Item = StateId> + '_ {
        self.goal.iter().enumerate().filter(|(_, g)| **g).map(|(i, _)| StateId(i))
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.goal[s.0] || self.mdp.is_absorbing(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub success_rate: f64,
    pub mean_return: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn push(&mut self, p: CurvePoint) {
        debug_assert!(self.points.last().is_none_or(|q| q.step < p.step));
        self.points.push(p);
    }

    /// First evaluated step with success rate at least `threshold`.
    pub fn steps_to(&self, threshold: f64) -> Option<usize> {
        self.points.iter().find(|p| p.success_rate >= threshold).map(|p| p.step)
    }

    pub fn final_success(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.success_rate)
    }
}

/// Per-stream seeds for independent random streams drawn from one seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream used for training randomness (starts, exploration, transitions).
pub const TRAIN_STREAM: u64 = 1;
/// Stream used for evaluation rollouts.
pub const EVAL_STREAM: u64 = 2;

/// Outcome of one greedy rollout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Episode {
    pub success: bool,
    pub ret: f64,
    pub steps: usize,
}

/// Runs `policy` from a sampled start until a terminal state or `cap` steps.
/// Returns are undiscounted.
pub fn rollout<R: Rng + ?Sized>(env: &Environment, policy: &Policy, cap: usize, rng: &mut R) -> Episode {
    let mut s = env.start.sample(rng);
    let mut ret = 0.0;
    for step in 0..cap {
        if env.is_goal(s) {
            return Episode { success: true, ret, steps: step };
        }
        let Some(a) = policy.action(s) else {
            return Episode { success: false, ret, steps: step };
        };
        ret += env.mdp.reward(a);
        s = env.mdp.transition(a).sample(rng);
    }
    Episode {
        success: env.is_goal(s),
        ret,
        steps: cap,
    }
}

/// Success rate and mean return of `episodes` rollouts, seeded from
/// `(seed, round)` so evaluations never disturb training randomness.
pub fn evaluate_episodes(
    env: &Environment,
    policy: &Policy,
    episodes: usize,
    cap: usize,
    seed: u64,
    round: u64,
) -> (f64, f64) {
    if episodes == 0 {
        return (0.0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, EVAL_STREAM, round));
    let (mut wins, mut total) = (0usize, 0.0);
    for _ in 0..episodes {
        let e = rollout(env, policy, cap, &mut rng);
        wins += e.success as usize;
        total += e.ret;
    }
    (wins as f64 / episodes as f64, total / episodes as f64)
}

/// Epsilon-greedy tabular Q-learning over the actions of an environment.
#[derive(Clone, Debug)]
pub struct QLearner {
    env: Environment,
    cfg: SolverConfig,
    q: Vec<f64>,
    rng: ChaCha8Rng,
    state: Option<StateId>,
    episode_len: usize,
    steps: usize,
}

impl QLearner {
    pub fn new(env: Environment, cfg: SolverConfig) -> Result<Self, SolveError> {
        cfg.validate()?;
        let q = vec![0.0; env.mdp.n_actions()];
        Self::with_table(env, cfg, q)
    }

    /// Starts from an existing table, one entry per action.
    pub fn with_table(env: Environment, cfg: SolverConfig, q: Vec<f64>) -> Result<Self, SolveError> {
        cfg.validate()?;
        if q.len() != env.mdp.n_actions() {
            return Err(SolveError::Environment(format!(
                "table has {} entries for {} actions",
                q.len(),
                env.mdp.n_actions()
            )));
        }
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TRAIN_STREAM, 0));
        Ok(Self {
            env,
            cfg,
            q,
            rng,
            state: None,
            episode_len: 0,
            steps: 0,
        })
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn table(&self) -> &[f64] {
        &self.q
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn greedy(&self, s: StateId) -> Option<ActionId> {
        let mut best: Option<ActionId> = None;
        for &a in self.env.mdp.actions_at(s) {
            if best.is_none_or(|b| self.q[a.0] > self.q[b.0]) {
                best = Some(a);
            }
        }
        best
    }

    fn state_value(&self, s: StateId) -> f64 {
        if self.env.is_terminal(s) {
            return 0.0;
        }
        self.env
            .mdp
            .actions_at(s)
            .iter()
            .map(|a| self.q[a.0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// One environment step, resetting the episode when it ends.
    pub fn step(&mut self) {
        let s = match self.state {
            Some(s) if !self.env.is_terminal(s) && self.episode_len < self.cfg.episode_cap => s,
            _ => {
                self.episode_len = 0;
                let s = self.env.start.sample(&mut self.rng);
                self.state = Some(s);
                s
            }
        };
        self.steps += 1;
        let fiber = self.env.mdp.actions_at(s);
        if fiber.is_empty() || self.env.is_goal(s) {
            // a terminal start state: nothing to learn this step
            self.state = None;
            return;
        }
        let a = if self.rng.gen::<f64>() < self.cfg.epsilon {
            fiber[self.rng.gen_range(0..fiber.len())]
        } else {
            self.greedy(s).expect("non-empty fiber")
        };
        let next = self.env.mdp.transition(a).sample(&mut self.rng);
        let target = self.env.mdp.reward(a) + self.cfg.gamma * self.state_value(next);
        self.q[a.0] += self.cfg.alpha * (target - self.q[a.0]);
        self.state = Some(next);
        self.episode_len += 1;
    }

    pub fn policy(&self) -> Policy {
        let choice = self.env.mdp.states().map(|s| self.greedy(s)).collect();
        Policy::new(&self.env.mdp, choice).expect("greedy choices come from fibers")
    }

    /// Greedy success rate and mean return under the evaluation protocol.
    pub fn evaluate(&self, round: u64) -> (f64, f64) {
        evaluate_episodes(
            &self.env,
            &self.policy(),
            self.cfg.eval_episodes,
            self.cfg.episode_cap,
            self.cfg.seed,
            round,
        )
    }
}

/// Trains for `cfg.train_steps` steps, evaluating the greedy policy at step
/// 0 and every `cfg.eval_every` steps.
pub fn q_learning(env: Environment, cfg: &SolverConfig) -> Result<(Policy, LearningCurve), SolveError> {
    let mut learner = QLearner::new(env, cfg.clone())?;
    let mut curve = LearningCurve::default();
    let record = |learner: &QLearner, curve: &mut LearningCurve| {
        let (success_rate, mean_return) = learner.evaluate(learner.steps() as u64);
        curve.push(CurvePoint {
            step: learner.steps(),
            success_rate,
            mean_return,
        });
    };
    record(&learner, &mut curve);
    while learner.steps() < cfg.train_steps {
        learner.step();
        if learner.steps() % cfg.eval_every == 0 || learner.steps() == cfg.train_steps {
            record(&learner, &mut curve);
        }
    }
    Ok((learner.policy(), curve))
}

/// Follows the policy of the latest stage containing each state, falling
/// back to earlier stages where that stage offers no action.
pub fn stitch_policies(z: &ZigZag, c: &Composite, per_stage: &[Policy]) -> Result<Policy, SolveError> {
    if per_stage.len() != z.n_stages() {
        return Err(SolveError::StageCount {
            expected: z.n_stages(),
            found: per_stage.len(),
        });
    }
    let mut choice = Vec::with_capacity(c.mdp.n_states());
    for t in c.mdp.states() {
        let stages = &c.stage_of_state[t.0];
        if stages.is_empty() {
            return Err(SolveError::StageGap(t));
        }
        let picked = stages.iter().rev().find_map(|&k| {
            let emb = c.embedding(k)?;
            let policy = &per_stage[k];
            emb.state_map()
                .iter()
                .enumerate()
                .filter(|(_, &img)| img == t)
                .find_map(|(s, _)| policy.action(StateId(s)))
                .map(|a| emb.map_action(a))
        });
        choice.push(picked);
    }
    Ok(Policy::new(&c.mdp, choice)?)
}

/// `sup |v^stitched - v*|` on the composite, with no preconditions checked.
pub fn stitched_value_gap(
    z: &ZigZag,
    c: &Composite,
    per_stage: &[Policy],
    cfg: &SolverConfig,
) -> Result<f64, SolveError> {
    cfg.validate()?;
    let stitched = stitch_policies(z, c, per_stage)?;
    let (v_star, _) = value_iteration(&c.mdp, cfg)?;
    let v_pi = if c.mdp.n_states() <= EXACT_SOLVE_LIMIT {
        evaluate_policy_exact(&c.mdp, &stitched, cfg.gamma)?
    } else {
        evaluate_policy(&c.mdp, &stitched, cfg.gamma, cfg.tol * (1.0 - cfg.gamma))?
    };
    Ok(v_pi.distance(&v_star))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalityReport {
    pub gap: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Checks that stitching is optimal on a forward-moving, monotonic zig-zag.
pub fn verify_stitched_optimality(
    z: &ZigZag,
    c: &Composite,
    per_stage: &[Policy],
    cfg: &SolverConfig,
) -> Result<OptimalityReport, SolveError> {
    cfg.validate()?;
    if !is_forward_moving(z).holds() {
        return Err(SolveError::PreconditionFailed(Precondition::ForwardMoving));
    }
    if !check_monotonic(z, cfg.gamma, cfg.tol)?.holds() {
        return Err(SolveError::PreconditionFailed(Precondition::Monotonicity));
    }
    let gap = stitched_value_gap(z, c, per_stage, cfg)?;
    let threshold = 10.0 * cfg.tol;
    Ok(OptimalityReport {
        gap,
        threshold,
        pass: gap <= threshold,
    })
}

/// Optimal policy of every stage, as value iteration returns them.
pub fn stage_policies(z: &ZigZag, cfg: &SolverConfig) -> Result<Vec<Policy>, SolveError> {
    z.components()
        .iter()
        .map(|m| Ok(value_iteration(m, cfg)?.1))
        .collect()
}
