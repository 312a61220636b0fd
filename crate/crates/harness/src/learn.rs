//! One tabular Q-learner per stage, acting on the composite of a zig-zag.

use std::sync::Arc;

use mdpcat_core::mdp::{ActionId, FiniteMdp, Policy, StateId};
use mdpcat_core::solve::{
    derive_seed, evaluate_episodes, CurvePoint, Environment, LearningCurve, SolveError, SolverConfig,
    TRAIN_STREAM,
};
use mdpcat_core::zigzag::{Composite, ZigZag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Epsilon-greedy Q-learning where the agent of the active stage picks the
/// action and learns only from its own stage's reward: leaving the stage
/// ends that agent's return. Randomness is drawn in the same order as
/// [`mdpcat_core::solve::QLearner`], so a single stage reproduces it exactly.
#[derive(Clone, Debug)]
pub struct StagedLearner {
    env: Environment,
    stages: Vec<Arc<FiniteMdp>>,
    embeddings: Vec<Vec<ActionId>>,
    /// Active stage and its local state, per composite state.
    local: Vec<(usize, StateId)>,
    q: Vec<Vec<f64>>,
    frozen: Vec<bool>,
    cfg: SolverConfig,
    rng: ChaCha8Rng,
    state: Option<StateId>,
    episode_len: usize,
    steps: usize,
}

impl StagedLearner {
    pub fn new(z: &ZigZag, c: &Composite, env: Environment, cfg: SolverConfig) -> Result<Self, SolveError> {
        let tables = z.components().iter().map(|m| vec![0.0; m.n_actions()]).collect();
        Self::with_tables(z, c, env, cfg, tables, vec![false; z.n_stages()])
    }

    /// Starts from given per-stage tables; frozen stages act greedily and
    /// are never updated.
    pub fn with_tables(
        z: &ZigZag,
        c: &Composite,
        env: Environment,
        cfg: SolverConfig,
        q: Vec<Vec<f64>>,
        frozen: Vec<bool>,
    ) -> Result<Self, SolveError> {
        cfg.validate()?;
        let stages = z.components().to_vec();
        if q.len() != stages.len() || frozen.len() != stages.len() {
            return Err(SolveError::StageCount {
                expected: stages.len(),
                found: q.len().min(frozen.len()),
            });
        }
        if let Some((i, t)) = q.iter().enumerate().find(|(i, t)| t.len() != stages[*i].n_actions()) {
            return Err(SolveError::Environment(format!(
                "stage {i} table has {} entries for {} actions",
                t.len(),
                stages[i].n_actions()
            )));
        }
        let mut local = Vec::with_capacity(c.mdp.n_states());
        for t in c.mdp.states() {
            let k = c.active_stage(t).ok_or(SolveError::StageGap(t))?;
            let emb = c.embedding(k).ok_or(SolveError::StageGap(t))?;
            let s = emb.state_map().iter().position(|&x| x == t).expect("active stage covers the state");
            local.push((k, StateId(s)));
        }
        let embeddings = (0..stages.len())
            .map(|k| c.embedding(k).expect("every stage is embedded").action_map().to_vec())
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TRAIN_STREAM, 0));
        Ok(Self {
            env,
            stages,
            embeddings,
            local,
            q,
            frozen,
            cfg,
            rng,
            state: None,
            episode_len: 0,
            steps: 0,
        })
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn greedy(&self, k: usize, s: StateId) -> Option<ActionId> {
        let q = &self.q[k];
        let mut best: Option<ActionId> = None;
        for &a in self.stages[k].actions_at(s) {
            if best.is_none_or(|b| q[a.0] > q[b.0]) {
                best = Some(a);
            }
        }
        best
    }

    /// Value of `next` for the agent of stage `k`: zero once the episode or
    /// the stage is over.
    fn state_value(&self, k: usize, next: StateId) -> f64 {
        let (j, s) = self.local[next.0];
        if j != k || self.env.is_terminal(next) {
            return 0.0;
        }
        self.stages[k]
            .actions_at(s)
            .iter()
            .map(|a| self.q[k][a.0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn step(&mut self) {
        let t = match self.state {
            Some(t) if !self.env.is_terminal(t) && self.episode_len < self.cfg.episode_cap => t,
            _ => {
                self.episode_len = 0;
                let t = self.env.start.sample(&mut self.rng);
                self.state = Some(t);
                t
            }
        };
        self.steps += 1;
        let (k, s) = self.local[t.0];
        let fiber = self.stages[k].actions_at(s);
        if fiber.is_empty() || self.env.is_goal(t) {
            self.state = None;
            return;
        }
        let a = if self.frozen[k] {
            self.greedy(k, s).expect("non-empty fiber")
        } else if self.rng.gen::<f64>() < self.cfg.epsilon {
            fiber[self.rng.gen_range(0..fiber.len())]
        } else {
            self.greedy(k, s).expect("non-empty fiber")
        };
        let glued = self.embeddings[k][a.0];
        let next = self.env.mdp.transition(glued).sample(&mut self.rng);
        if !self.frozen[k] {
            let target = self.env.mdp.reward(glued) + self.cfg.gamma * self.state_value(k, next);
            let q = &mut self.q[k][a.0];
            *q += self.cfg.alpha * (target - *q);
        }
        self.state = Some(next);
        self.episode_len += 1;
    }

    /// The stitched greedy policy on the composite.
    pub fn policy(&self) -> Policy {
        let choice = self
            .local
            .iter()
            .map(|&(k, s)| self.greedy(k, s).map(|a| self.embeddings[k][a.0]))
            .collect();
        Policy::new(&self.env.mdp, choice).expect("embedded actions are anchored at their image")
    }

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

    /// Trains up to `cfg.train_steps`, evaluating at step 0 and every
    /// `cfg.eval_every` steps, on the same grid as `q_learning`.
    pub fn train(&mut self) -> LearningCurve {
        let mut curve = LearningCurve::default();
        self.record(&mut curve);
        while self.steps < self.cfg.train_steps {
            self.step();
            if self.steps.is_multiple_of(self.cfg.eval_every) || self.steps == self.cfg.train_steps {
                self.record(&mut curve);
            }
        }
        curve
    }

    fn record(&self, curve: &mut LearningCurve) {
        let (success_rate, mean_return) = self.evaluate(self.steps as u64);
        curve.push(CurvePoint {
            step: self.steps,
            success_rate,
            mean_return,
        });
    }
}
