//! The category of finite MDPs.
//!
//! A morphism `(f, g): M1 -> M2` maps states and actions so that anchors
//! commute (`anchor2 . g = f . anchor1`), transitions are carried to their
//! pushforwards (`f_* T1 = T2 . g`) and rewards are preserved
//! (`R1 = R2 . g`). All comparisons use [`COMPAT_TOL`].

mod pushout;
mod subprocess;
mod universal;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::mdp::{Action, ActionId, Distribution, FiniteMdp, StateId};

pub use pushout::{pushout, Pushout};
pub use subprocess::{factor_through_max, is_full, max_subprocess, SubprocessWitness};
pub use universal::{check_pushout_universal, Cocone, Mediation, UniversalReport};

/// Tolerance for transition and reward compatibility.
pub const COMPAT_TOL: f64 = 1e-9;

/// Reward carried by the single action of the terminal MDP.
pub const POINT_REWARD: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlueKind {
    State,
    Action,
}

impl fmt::Display for GlueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlueKind::State => f.write_str("state"),
            GlueKind::Action => f.write_str("action"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CategoryError {
    #[error("not a morphism: {0}")]
    InvalidMorphism(MorphismReport),
    #[error("codomain of the first morphism is not the domain of the second")]
    DomainMismatch,
    #[error("not a subprocess (state map injective: {states}, action map injective: {actions})")]
    NotInjective { states: bool, actions: bool },
    #[error("state subset is empty")]
    EmptySubset,
    #[error("state {0} is not in the MDP")]
    UnknownState(StateId),
    #[error("subprocess state images differ")]
    StateImageMismatch,
    #[error("action {0} of the subprocess is outside the maximal subprocess")]
    NotASubprocess(ActionId),
    #[error("inconsistent glue in {kind} class {class}: {detail}")]
    InconsistentGlue {
        kind: GlueKind,
        class: usize,
        detail: String,
    },
    #[error("probe {0} is not a cocone over the span")]
    NotACocone(usize),
    #[error("mediating-map search space too large ({0} assignments)")]
    SearchTooLarge(u128),
}

/// One failed compatibility condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    StateMapLength { expected: usize, found: usize },
    ActionMapLength { expected: usize, found: usize },
    StateOutOfRange { state: StateId, image: StateId },
    ActionOutOfRange { action: ActionId, image: ActionId },
    Anchor { action: ActionId, expected: StateId, found: StateId },
    Transition { action: ActionId, deviation: f64 },
    Reward { action: ActionId, source: f64, target: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::StateMapLength { expected, found } => {
                write!(f, "state map has {found} entries, expected {expected}")
            }
            Violation::ActionMapLength { expected, found } => {
                write!(f, "action map has {found} entries, expected {expected}")
            }
            Violation::StateOutOfRange { state, image } => {
                write!(f, "state {state} maps to missing {image}")
            }
            Violation::ActionOutOfRange { action, image } => {
                write!(f, "action {action} maps to missing {image}")
            }
            Violation::Anchor { action, expected, found } => write!(
                f,
                "anchor of image of {action} is {found}, expected {expected}"
            ),
            Violation::Transition { action, deviation } => write!(
                f,
                "pushforward of transition of {action} deviates by {deviation:e}"
            ),
            Violation::Reward { action, source, target } => {
                write!(f, "reward of {action} is {source}, image has {target}")
            }
        }
    }
}

/// Every compatibility condition a candidate pair of maps breaks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MorphismReport {
    pub violations: Vec<Violation>,
}

impl MorphismReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for MorphismReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Image of `d` under the state map `f`: mass is summed over fibers of `f`.
pub fn pushforward(f: &[StateId], d: &Distribution) -> Distribution {
    let mut acc: BTreeMap<StateId, f64> = BTreeMap::new();
    for &(s, p) in d.support() {
        *acc.entry(f[s.0]).or_insert(0.0) += p;
    }
    Distribution::from_masses(acc)
}

/// Checks the three compatibility conditions for `(f, g): src -> tgt`.
pub fn check_morphism(
    src: &FiniteMdp,
    tgt: &FiniteMdp,
    state_map: &[StateId],
    action_map: &[ActionId],
) -> MorphismReport {
    let mut violations = Vec::new();
    if state_map.len() != src.n_states() {
        violations.push(Violation::StateMapLength {
            expected: src.n_states(),
            found: state_map.len(),
        });
    }
    if action_map.len() != src.n_actions() {
        violations.push(Violation::ActionMapLength {
            expected: src.n_actions(),
            found: action_map.len(),
        });
    }
    if !violations.is_empty() {
        return MorphismReport { violations };
    }
    for (i, &image) in state_map.iter().enumerate() {
        if image.0 >= tgt.n_states() {
            violations.push(Violation::StateOutOfRange {
                state: StateId(i),
                image,
            });
        }
    }
    if !violations.is_empty() {
        return MorphismReport { violations };
    }
    for a in src.action_ids() {
        let image = action_map[a.0];
        if image.0 >= tgt.n_actions() {
            violations.push(Violation::ActionOutOfRange { action: a, image });
            continue;
        }
        let expected = state_map[src.anchor(a).0];
        let found = tgt.anchor(image);
        if expected != found {
            violations.push(Violation::Anchor {
                action: a,
                expected,
                found,
            });
        }
        let deviation = pushforward(state_map, src.transition(a)).max_deviation(tgt.transition(image));
        if deviation > COMPAT_TOL {
            violations.push(Violation::Transition {
                action: a,
                deviation,
            });
        }
        let (rs, rt) = (src.reward(a), tgt.reward(image));
        if (rs - rt).abs() > COMPAT_TOL {
            violations.push(Violation::Reward {
                action: a,
                source: rs,
                target: rt,
            });
        }
    }
    MorphismReport { violations }
}

pub(crate) fn same_mdp(a: &Arc<FiniteMdp>, b: &Arc<FiniteMdp>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// A validated morphism of MDPs.
#[derive(Clone, Debug)]
pub struct MdpMorphism {
    source: Arc<FiniteMdp>,
    target: Arc<FiniteMdp>,
    state_map: Vec<StateId>,
    action_map: Vec<ActionId>,
}

impl PartialEq for MdpMorphism {
    fn eq(&self, other: &Self) -> bool {
        self.state_map == other.state_map
            && self.action_map == other.action_map
            && same_mdp(&self.source, &other.source)
            && same_mdp(&self.target, &other.target)
    }
}

impl MdpMorphism {
    pub fn new(
        source: Arc<FiniteMdp>,
        target: Arc<FiniteMdp>,
        state_map: Vec<StateId>,
        action_map: Vec<ActionId>,
    ) -> Result<Self, CategoryError> {
        let report = check_morphism(&source, &target, &state_map, &action_map);
        if !report.is_valid() {
            return Err(CategoryError::InvalidMorphism(report));
        }
        Ok(Self {
            source,
            target,
            state_map,
            action_map,
        })
    }

    /// Skips validation; callers guarantee the conditions by construction.
    pub(crate) fn new_unchecked(
        source: Arc<FiniteMdp>,
        target: Arc<FiniteMdp>,
        state_map: Vec<StateId>,
        action_map: Vec<ActionId>,
    ) -> Self {
        debug_assert!(check_morphism(&source, &target, &state_map, &action_map).is_valid());
        Self {
            source,
            target,
            state_map,
            action_map,
        }
    }

    pub fn source(&self) -> &Arc<FiniteMdp> {
        &self.source
    }

    pub fn target(&self) -> &Arc<FiniteMdp> {
        &self.target
    }

    pub fn state_map(&self) -> &[StateId] {
        &self.state_map
    }

    pub fn action_map(&self) -> &[ActionId] {
        &self.action_map
    }

    pub fn map_state(&self, s: StateId) -> StateId {
        self.state_map[s.0]
    }

    pub fn map_action(&self, a: ActionId) -> ActionId {
        self.action_map[a.0]
    }

    pub fn is_injective_on_states(&self) -> bool {
        is_injective(self.state_map.iter().map(|s| s.0), self.target.n_states())
    }

    pub fn is_injective_on_actions(&self) -> bool {
        is_injective(self.action_map.iter().map(|a| a.0), self.target.n_actions())
    }

    /// Least source state mapped to `t`, if any.
    pub fn state_preimage(&self, t: StateId) -> Option<StateId> {
        self.state_map.iter().position(|&s| s == t).map(StateId)
    }

    pub fn action_preimage(&self, t: ActionId) -> Option<ActionId> {
        self.action_map.iter().position(|&a| a == t).map(ActionId)
    }

    /// `next . self`.
    pub fn then(&self, next: &MdpMorphism) -> Result<MdpMorphism, CategoryError> {
        compose(self, next)
    }
}

fn is_injective(images: impl Iterator<Item = usize>, codomain: usize) -> bool {
    let mut seen = vec![false; codomain];
    for i in images {
        if std::mem::replace(&mut seen[i], true) {
            return false;
        }
    }
    true
}

pub fn identity(m: &Arc<FiniteMdp>) -> MdpMorphism {
    MdpMorphism {
        source: m.clone(),
        target: m.clone(),
        state_map: m.states().collect(),
        action_map: m.action_ids().collect(),
    }
}

/// `second . first` for `first: A -> B`, `second: B -> C`.
pub fn compose(first: &MdpMorphism, second: &MdpMorphism) -> Result<MdpMorphism, CategoryError> {
    if !same_mdp(&first.target, &second.source) {
        return Err(CategoryError::DomainMismatch);
    }
    Ok(MdpMorphism::new_unchecked(
        first.source.clone(),
        second.target.clone(),
        first.state_map.iter().map(|s| second.state_map[s.0]).collect(),
        first.action_map.iter().map(|a| second.action_map[a.0]).collect(),
    ))
}

/// The one-state, one-action MDP `pt`.
pub fn point_mdp() -> FiniteMdp {
    FiniteMdp::from_parts(
        vec!["pt".to_string()],
        vec![Action {
            name: "loop".to_string(),
            anchor: StateId(0),
            transition: Distribution::point(StateId(0)),
            reward: POINT_REWARD,
        }],
    )
    .expect("pt is well formed")
}

/// The collapse `m -> pt`. Only a morphism when every reward of `m` equals
/// [`POINT_REWARD`]; otherwise the reward violations are returned.
pub fn terminal_morphism(m: &Arc<FiniteMdp>) -> Result<MdpMorphism, CategoryError> {
    MdpMorphism::new(
        m.clone(),
        Arc::new(point_mdp()),
        vec![StateId(0); m.n_states()],
        vec![ActionId(0); m.n_actions()],
    )
}
