//! Finite MDPs whose action space is fibered over the state space.
//!
//! Every action is anchored at exactly one state; the actions available at a
//! state `s` are the fiber of the anchor map over `s`. Transitions and rewards
//! live on actions. A state with an empty fiber is absorbing and has value 0.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

/// Tolerance on the total mass of a transition row.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Rows whose mass is within this distance of 1 are stored as given, so that
/// canonicalization is idempotent.
const RENORMALIZE_THRESHOLD: f64 = 1e-12;

/// Default cap on fixed-point sweeps used by [`evaluate_policy`].
pub const DEFAULT_MAX_SWEEPS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s#{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("transition of action `{action}` sums to {sum}, not 1")]
    NonStochasticRow { action: String, sum: f64 },
    #[error("transition of action `{action}` has negative probability {p} at `{state}`")]
    NegativeProbability { action: String, state: String, p: f64 },
    #[error("action `{action}` has a non-finite {what}")]
    NonFinite { action: String, what: &'static str },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("discount {0} outside [0, 1)")]
    InvalidDiscount(f64),
    #[error("no convergence after {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Problems found while canonicalizing a distribution, before an action
/// name is attached.
#[derive(Debug, Clone, PartialEq)]
pub enum DistributionError {
    Negative { state: StateId, p: f64 },
    NonFinite { state: StateId },
    NotStochastic { sum: f64 },
}

/// A finitely supported probability distribution over states.
///
/// Stored sparsely, sorted by state, with strictly positive masses.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    support: Vec<(StateId, f64)>,
}

impl Distribution {
    /// Canonicalizes `entries`: repeated states are summed, zero entries are
    /// dropped, and the row is rescaled once if its mass is off by more than
    /// rounding noise.
    pub fn new(
        entries: impl IntoIterator<Item = (StateId, f64)>,
    ) -> Result<Self, DistributionError> {
        let mut acc: BTreeMap<StateId, f64> = BTreeMap::new();
        for (s, p) in entries {
            if !p.is_finite() {
                return Err(DistributionError::NonFinite { state: s });
            }
            if p < 0.0 {
                return Err(DistributionError::Negative { state: s, p });
            }
            *acc.entry(s).or_insert(0.0) += p;
        }
        let support: Vec<(StateId, f64)> = acc.into_iter().filter(|&(_, p)| p > 0.0).collect();
        let sum: f64 = support.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(DistributionError::NotStochastic { sum });
        }
        let support = if (sum - 1.0).abs() > RENORMALIZE_THRESHOLD {
            support.into_iter().map(|(s, p)| (s, p / sum)).collect()
        } else {
            support
        };
        Ok(Self { support })
    }

    /// Point mass at `s`.
    pub fn point(s: StateId) -> Self {
        Self {
            support: vec![(s, 1.0)],
        }
    }

    /// Builds a distribution from masses that are already known to be a
    /// probability vector (e.g. a pushforward of one). No rescaling.
    pub(crate) fn from_masses(acc: BTreeMap<StateId, f64>) -> Self {
        Self {
            support: acc.into_iter().filter(|&(_, p)| p > 0.0).collect(),
        }
    }

    pub fn support(&self) -> &[(StateId, f64)] {
        &self.support
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.support.iter().map(|&(s, _)| s)
    }

    pub fn prob(&self, s: StateId) -> f64 {
        match self.support.binary_search_by_key(&s, |&(t, _)| t) {
            Ok(i) => self.support[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|&(_, p)| p).sum()
    }

    /// Largest entrywise difference between two distributions.
    pub fn max_deviation(&self, other: &Distribution) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.support, &other.support);
        let mut dev: f64 = 0.0;
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(&(s, p)), Some(&(t, q))) if s == t => {
                    dev = dev.max((p - q).abs());
                    i += 1;
                    j += 1;
                }
                (Some(&(s, p)), Some(&(t, _))) if s < t => {
                    dev = dev.max(p);
                    i += 1;
                }
                (Some(&(_, p)), None) => {
                    dev = dev.max(p);
                    i += 1;
                }
                (_, Some(&(_, q))) => {
                    dev = dev.max(q);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        dev
    }

    pub fn approx_eq(&self, other: &Distribution, tol: f64) -> bool {
        self.max_deviation(other) <= tol
    }

    /// Inverse-CDF lookup over the canonical support order. `u` in [0, 1).
    pub fn sample_with(&self, u: f64) -> StateId {
        let mut cum = 0.0;
        for &(s, p) in &self.support {
            cum += p;
            if u < cum {
                return s;
            }
        }
        // rounding left a sliver past the last cumulative mass
        self.support.last().map(|&(s, _)| s).expect("empty support")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StateId {
        self.sample_with(rng.gen::<f64>())
    }
}

/// One action of a [`FiniteMdp`]: its anchor state, transition and reward.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub name: String,
    pub anchor: StateId,
    pub transition: Distribution,
    pub reward: f64,
}

/// Name-level description of an action, used by [`FiniteMdp::new`].
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpec {
    pub name: String,
    pub anchor: String,
    pub transition: Vec<(String, f64)>,
    pub reward: f64,
}

impl ActionSpec {
    pub fn new(
        name: impl Into<String>,
        anchor: impl Into<String>,
        transition: &[(&str, f64)],
        reward: f64,
    ) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            transition: transition.iter().map(|&(s, p)| (s.to_string(), p)).collect(),
            reward,
        }
    }
}

/// A finite MDP `(S, A, anchor, T, R)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMdp {
    state_names: Vec<String>,
    actions: Vec<Action>,
    fibers: Vec<Vec<ActionId>>,
}

impl FiniteMdp {
    /// Builds an MDP from state names and name-level action specs.
    pub fn new(state_names: Vec<String>, actions: Vec<ActionSpec>) -> Result<Self, MdpError> {
        check_unique("state", &state_names)?;
        let lookup: std::collections::HashMap<&str, StateId> = state_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), StateId(i)))
            .collect();
        let resolve = |name: &str| {
            lookup
                .get(name)
                .copied()
                .ok_or_else(|| MdpError::UnknownState(name.to_string()))
        };
        let mut built = Vec::with_capacity(actions.len());
        for spec in actions {
            let anchor = resolve(&spec.anchor)?;
            let mut entries = Vec::with_capacity(spec.transition.len());
            for (s, p) in &spec.transition {
                entries.push((resolve(s)?, *p));
            }
            let transition = Distribution::new(entries)
                .map_err(|e| describe_distribution_error(e, &spec.name, &state_names))?;
            built.push(Action {
                name: spec.name,
                anchor,
                transition,
                reward: spec.reward,
            });
        }
        Self::from_parts(state_names, built)
    }

    /// Builds an MDP from already canonical actions.
    pub fn from_parts(state_names: Vec<String>, actions: Vec<Action>) -> Result<Self, MdpError> {
        check_unique("state", &state_names)?;
        let names: Vec<String> = actions.iter().map(|a| a.name.clone()).collect();
        check_unique("action", &names)?;
        let n = state_names.len();
        let mut fibers = vec![Vec::new(); n];
        for (i, a) in actions.iter().enumerate() {
            if a.anchor.0 >= n {
                return Err(MdpError::UnknownState(a.anchor.to_string()));
            }
            if let Some(s) = a.transition.states().find(|s| s.0 >= n) {
                return Err(MdpError::UnknownState(s.to_string()));
            }
            if a.transition.support().is_empty() {
                return Err(MdpError::NonStochasticRow {
                    action: a.name.clone(),
                    sum: 0.0,
                });
            }
            if !a.reward.is_finite() {
                return Err(MdpError::NonFinite {
                    action: a.name.clone(),
                    what: "reward",
                });
            }
            fibers[a.anchor.0].push(ActionId(i));
        }
        Ok(Self {
            state_names,
            actions,
            fibers,
        })
    }

    /// The MDP with no states and no actions.
    pub fn empty() -> Self {
        Self {
            state_names: Vec::new(),
            actions: Vec::new(),
            fibers: Vec::new(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.n_states()).map(StateId)
    }

    pub fn action_ids(&self) -> impl Iterator<Item = ActionId> {
        (0..self.n_actions()).map(ActionId)
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action(&self, a: ActionId) -> &Action {
        &self.actions[a.0]
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.state_names[s.0]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.actions[a.0].name
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.state_names.iter().position(|n| n == name).map(StateId)
    }

    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|a| a.name == name).map(ActionId)
    }

    pub fn anchor(&self, a: ActionId) -> StateId {
        self.actions[a.0].anchor
    }

    pub fn transition(&self, a: ActionId) -> &Distribution {
        &self.actions[a.0].transition
    }

    pub fn reward(&self, a: ActionId) -> f64 {
        self.actions[a.0].reward
    }

    /// Actions anchored at `s`.
    pub fn fiber(&self, s: StateId) -> Result<&[ActionId], MdpError> {
        self.fibers
            .get(s.0)
            .map(Vec::as_slice)
            .ok_or_else(|| MdpError::UnknownState(s.to_string()))
    }

    /// Actions anchored at `s`; panics on an out-of-range id.
    pub fn actions_at(&self, s: StateId) -> &[ActionId] {
        &self.fibers[s.0]
    }

    pub fn is_absorbing(&self, s: StateId) -> bool {
        self.fibers[s.0].is_empty()
    }

    /// `R(a) + gamma * sum_{s'} T(a)(s') v(s')`.
    pub fn backup(&self, a: ActionId, gamma: f64, v: &[f64]) -> f64 {
        let act = &self.actions[a.0];
        act.reward + gamma * act.transition.support().iter().map(|&(s, p)| p * v[s.0]).sum::<f64>()
    }
}

fn check_unique(kind: &'static str, names: &[String]) -> Result<(), MdpError> {
    let mut seen = HashSet::with_capacity(names.len());
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(MdpError::DuplicateName {
                kind,
                name: n.clone(),
            });
        }
    }
    Ok(())
}

fn describe_distribution_error(e: DistributionError, action: &str, states: &[String]) -> MdpError {
    match e {
        DistributionError::Negative { state, p } => MdpError::NegativeProbability {
            action: action.to_string(),
            state: states[state.0].clone(),
            p,
        },
        DistributionError::NonFinite { .. } => MdpError::NonFinite {
            action: action.to_string(),
            what: "probability",
        },
        DistributionError::NotStochastic { sum } => MdpError::NonStochasticRow {
            action: action.to_string(),
            sum,
        },
    }
}

/// A deterministic stationary policy: one action from the fiber of every
/// non-absorbing state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    choice: Vec<Option<ActionId>>,
}

impl Policy {
    pub fn new(m: &FiniteMdp, choice: Vec<Option<ActionId>>) -> Result<Self, MdpError> {
        if choice.len() != m.n_states() {
            return Err(MdpError::InvalidPolicy(format!(
                "policy covers {} states, MDP has {}",
                choice.len(),
                m.n_states()
            )));
        }
        for (i, c) in choice.iter().enumerate() {
            let s = StateId(i);
            match c {
                Some(a) if a.0 >= m.n_actions() || m.anchor(*a) != s => {
                    return Err(MdpError::InvalidPolicy(format!(
                        "action {a} is not available at `{}`",
                        m.state_name(s)
                    )));
                }
                None if !m.is_absorbing(s) => {
                    return Err(MdpError::InvalidPolicy(format!(
                        "no action chosen at `{}`",
                        m.state_name(s)
                    )));
                }
                _ => {}
            }
        }
        Ok(Self { choice })
    }

    /// Picks the first action of every fiber.
    pub fn least_actions(m: &FiniteMdp) -> Self {
        Self {
            choice: m.states().map(|s| m.actions_at(s).first().copied()).collect(),
        }
    }

    pub fn action(&self, s: StateId) -> Option<ActionId> {
        self.choice[s.0]
    }

    pub fn choices(&self) -> &[Option<ActionId>] {
        &self.choice
    }

    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction {
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn get(&self, s: StateId) -> f64 {
        self.values[s.0]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sup-norm distance.
    pub fn distance(&self, other: &ValueFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_discount(gamma: f64) -> Result<(), MdpError> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(MdpError::InvalidDiscount(gamma))
    }
}

/// Sup-norm Bellman residual of `v` under policy `p`.
pub fn policy_residual(m: &FiniteMdp, p: &Policy, gamma: f64, v: &[f64]) -> f64 {
    m.states()
        .map(|s| match p.action(s) {
            Some(a) => (m.backup(a, gamma, v) - v[s.0]).abs(),
            None => v[s.0].abs(),
        })
        .fold(0.0, f64::max)
}

/// Fixed-point policy evaluation. The result has sup-norm Bellman residual at
/// most `tol`; absorbing states get value 0.
pub fn evaluate_policy(
    m: &FiniteMdp,
    p: &Policy,
    gamma: f64,
    tol: f64,
) -> Result<ValueFunction, MdpError> {
    evaluate_policy_capped(m, p, gamma, tol, DEFAULT_MAX_SWEEPS)
}

pub fn evaluate_policy_capped(
    m: &FiniteMdp,
    p: &Policy,
    gamma: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<ValueFunction, MdpError> {
    check_discount(gamma)?;
    if p.len() != m.n_states() {
        return Err(MdpError::InvalidPolicy("policy/MDP size mismatch".into()));
    }
    let mut v = vec![0.0; m.n_states()];
    let mut next = vec![0.0; m.n_states()];
    let mut residual = f64::INFINITY;
    for _ in 0..max_sweeps {
        residual = 0.0;
        for s in m.states() {
            next[s.0] = match p.action(s) {
                Some(a) => m.backup(a, gamma, &v),
                None => 0.0,
            };
            residual = f64::max(residual, (next[s.0] - v[s.0]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        // residual of the new iterate is at most gamma times the step
        if gamma * residual <= tol {
            return Ok(ValueFunction::new(v));
        }
    }
    Err(MdpError::NoConvergence {
        iterations: max_sweeps,
        residual,
    })
}

/// Direct solve of `(I - gamma P) v = r` for the policy's chain.
pub fn evaluate_policy_exact(
    m: &FiniteMdp,
    p: &Policy,
    gamma: f64,
) -> Result<ValueFunction, MdpError> {
    check_discount(gamma)?;
    let n = m.n_states();
    let mut lhs = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in m.states() {
        if let Some(a) = p.action(s) {
            rhs[s.0] = m.reward(a);
            for &(t, q) in m.transition(a).support() {
                lhs[(s.0, t.0)] -= gamma * q;
            }
        }
    }
    let sol = lhs.lu().solve(&rhs).ok_or(MdpError::NoConvergence {
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    Ok(ValueFunction::new(sol.iter().copied().collect()))
}

/// Draws the successor of taking `a`. Deterministic given the rng state.
pub fn sample_step<R: Rng + ?Sized>(
    m: &FiniteMdp,
    a: ActionId,
    rng: &mut R,
) -> Result<(StateId, f64), MdpError> {
    let act = m
        .actions
        .get(a.0)
        .ok_or_else(|| MdpError::UnknownAction(a.to_string()))?;
    Ok((act.transition.sample(rng), act.reward))
}
