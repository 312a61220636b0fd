//! Zig-zag diagrams `M0 <- N0 -> M1 <- N1 -> ... -> Mn`, their composites,
//! forward-moving repair and the monotonicity check.

use std::sync::Arc;

use thiserror::Error;

use crate::category::{
    compose, identity, max_subprocess, pushout, same_mdp, CategoryError, MdpMorphism,
    SubprocessWitness,
};
use crate::mdp::{Action, ActionId, FiniteMdp, MdpError, StateId};
use crate::solve::{value_iteration, ConfigError, SolverConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ZigZagError {
    #[error("{components} components need {expected} overlaps, got {found}")]
    LengthMismatch {
        components: usize,
        expected: usize,
        found: usize,
    },
    #[error("{side} leg of overlap {stage} does not connect the neighbouring stages")]
    LegMismatch { stage: usize, side: &'static str },
    #[error("stage index {index} out of range for {len} stages")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("puncturing stage {stage} removed `{action}`, which the right leg of overlap {overlap} needs")]
    BrokenRightLeg {
        overlap: usize,
        stage: usize,
        action: String,
    },
    #[error(transparent)]
    Category(#[from] CategoryError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Stages `M_i`, with overlaps `N_i` included into `M_i` by a subprocess and
/// mapped into `M_{i+1}` by an arbitrary morphism.
#[derive(Clone, Debug, PartialEq)]
pub struct ZigZag {
    components: Vec<Arc<FiniteMdp>>,
    left_legs: Vec<SubprocessWitness>,
    right_legs: Vec<MdpMorphism>,
}

impl ZigZag {
    pub fn new(
        components: Vec<Arc<FiniteMdp>>,
        left_legs: Vec<SubprocessWitness>,
        right_legs: Vec<MdpMorphism>,
    ) -> Result<Self, ZigZagError> {
        let expected = components.len().saturating_sub(1);
        for found in [left_legs.len(), right_legs.len()] {
            if components.is_empty() || found != expected {
                return Err(ZigZagError::LengthMismatch {
                    components: components.len(),
                    expected,
                    found,
                });
            }
        }
        for (i, (l, r)) in left_legs.iter().zip(&right_legs).enumerate() {
            let l = l.morphism();
            if !same_mdp(l.target(), &components[i]) {
                return Err(ZigZagError::LegMismatch { stage: i, side: "left" });
            }
            if !same_mdp(r.source(), l.source()) || !same_mdp(r.target(), &components[i + 1]) {
                return Err(ZigZagError::LegMismatch { stage: i, side: "right" });
            }
        }
        Ok(Self {
            components,
            left_legs,
            right_legs,
        })
    }

    /// A one-stage diagram.
    pub fn single(m: Arc<FiniteMdp>) -> Self {
        Self {
            components: vec![m],
            left_legs: Vec::new(),
            right_legs: Vec::new(),
        }
    }

    pub fn n_stages(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Arc<FiniteMdp>] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Arc<FiniteMdp> {
        &self.components[i]
    }

    pub fn overlap(&self, i: usize) -> &Arc<FiniteMdp> {
        self.left_legs[i].morphism().source()
    }

    pub fn left_legs(&self) -> &[SubprocessWitness] {
        &self.left_legs
    }

    pub fn right_legs(&self) -> &[MdpMorphism] {
        &self.right_legs
    }

    /// Stages `0..=k` with the overlaps between them.
    pub fn prefix(&self, k: usize) -> Result<ZigZag, ZigZagError> {
        if k >= self.n_stages() {
            return Err(ZigZagError::IndexOutOfRange {
                index: k,
                len: self.n_stages(),
            });
        }
        Ok(Self {
            components: self.components[..=k].to_vec(),
            left_legs: self.left_legs[..k].to_vec(),
            right_legs: self.right_legs[..k].to_vec(),
        })
    }

    /// Stages `i..=n` with the overlaps between them.
    pub fn suffix(&self, i: usize) -> Result<ZigZag, ZigZagError> {
        if i >= self.n_stages() {
            return Err(ZigZagError::IndexOutOfRange {
                index: i,
                len: self.n_stages(),
            });
        }
        Ok(Self {
            components: self.components[i..].to_vec(),
            left_legs: self.left_legs[i..].to_vec(),
            right_legs: self.right_legs[i..].to_vec(),
        })
    }
}

/// The glued MDP of a zig-zag together with where each stage landed.
#[derive(Clone, Debug, PartialEq)]
pub struct Composite {
    pub mdp: Arc<FiniteMdp>,
    /// `embeddings[k]` embeds stage `first_stage + k`.
    pub embeddings: Vec<MdpMorphism>,
    /// Stages whose image contains each composite state, ascending.
    pub stage_of_state: Vec<Vec<usize>>,
    pub first_stage: usize,
}

impl Composite {
    pub fn embedding(&self, stage: usize) -> Option<&MdpMorphism> {
        stage
            .checked_sub(self.first_stage)
            .and_then(|k| self.embeddings.get(k))
    }

    /// The latest stage containing `s`.
    pub fn active_stage(&self, s: StateId) -> Option<usize> {
        self.stage_of_state.get(s.0).and_then(|v| v.last().copied())
    }
}

/// Left fold `C_i = C_{i-1} +_{N_{i-1}} M_i`.
pub fn build_composite(z: &ZigZag) -> Result<Composite, ZigZagError> {
    fold(z, 0)
}

/// Composite of stages `i..=n`.
pub fn truncated_composite(z: &ZigZag, i: usize) -> Result<Composite, ZigZagError> {
    let tail = z.suffix(i)?;
    fold(&tail, i)
}

fn fold(z: &ZigZag, first_stage: usize) -> Result<Composite, ZigZagError> {
    let mut mdp = z.components[0].clone();
    let mut embeddings = vec![identity(&mdp)];
    for (i, (left, right)) in z.left_legs.iter().zip(&z.right_legs).enumerate() {
        let into_composite = compose(left.morphism(), &embeddings[i])?;
        let glued = pushout(&into_composite, right)?;
        embeddings = embeddings
            .iter()
            .map(|e| compose(e, &glued.leg1))
            .collect::<Result<_, _>>()?;
        embeddings.push(glued.leg2);
        mdp = glued.mdp;
    }
    let mut stage_of_state = vec![Vec::new(); mdp.n_states()];
    for (k, e) in embeddings.iter().enumerate() {
        for &t in e.state_map() {
            let stages: &mut Vec<usize> = &mut stage_of_state[t.0];
            if stages.last() != Some(&(first_stage + k)) {
                stages.push(first_stage + k);
            }
        }
    }
    Ok(Composite {
        mdp,
        embeddings,
        stage_of_state,
        first_stage,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForwardReport {
    /// Whether `N_i` is a full subprocess of `M_i`, per overlap.
    pub full: Vec<bool>,
}

impl ForwardReport {
    pub fn holds(&self) -> bool {
        self.full.iter().all(|&f| f)
    }
}

pub fn is_forward_moving(z: &ZigZag) -> ForwardReport {
    ForwardReport {
        full: z.left_legs.iter().map(SubprocessWitness::full).collect(),
    }
}

/// Makes every left leg full by deleting from `M_i` the actions anchored on
/// the image of `N_i` that do not come from `N_i`. Overlaps are replaced by
/// the maximal subprocess on their image and right legs are carried along.
pub fn puncture(z: &ZigZag) -> Result<ZigZag, ZigZagError> {
    let n = z.n_stages();
    // kept[i][a]: new id of action a of M_i, if it survives
    let mut components = Vec::with_capacity(n);
    let mut kept: Vec<Vec<Option<ActionId>>> = Vec::with_capacity(n);
    for (i, m) in z.components.iter().enumerate() {
        let Some(left) = z.left_legs.get(i) else {
            components.push(m.clone());
            kept.push(m.action_ids().map(Some).collect());
            continue;
        };
        let mut on_image = vec![false; m.n_states()];
        for &s in left.morphism().state_map() {
            on_image[s.0] = true;
        }
        let mut from_overlap = vec![false; m.n_actions()];
        for &a in left.morphism().action_map() {
            from_overlap[a.0] = true;
        }
        let mut actions: Vec<Action> = Vec::new();
        let mut map = vec![None; m.n_actions()];
        for a in m.action_ids() {
            if on_image[m.anchor(a).0] && !from_overlap[a.0] {
                continue;
            }
            map[a.0] = Some(ActionId(actions.len()));
            actions.push(m.action(a).clone());
        }
        let punctured = if actions.len() == m.n_actions() {
            m.clone()
        } else {
            Arc::new(FiniteMdp::from_parts(m.state_names().to_vec(), actions)?)
        };
        components.push(punctured);
        kept.push(map);
    }

    let mut left_legs = Vec::with_capacity(n - 1);
    let mut right_legs = Vec::with_capacity(n - 1);
    for (i, (left, right)) in z.left_legs.iter().zip(&z.right_legs).enumerate() {
        let old = left.morphism();
        let (overlap, witness) = max_subprocess(&components[i], old.state_map())?;
        // old overlap state / action behind each new one
        let mut state_back = vec![StateId(0); components[i].n_states()];
        for (s, t) in old.state_map().iter().enumerate() {
            state_back[t.0] = StateId(s);
        }
        let mut action_back = vec![None; z.components[i].n_actions()];
        for (b, t) in old.action_map().iter().enumerate() {
            action_back[t.0] = Some(ActionId(b));
        }
        let mut unpunctured = vec![ActionId(0); components[i].n_actions()];
        for (a, new) in kept[i].iter().enumerate() {
            if let Some(new) = new {
                unpunctured[new.0] = ActionId(a);
            }
        }
        let state_map = witness
            .morphism()
            .state_map()
            .iter()
            .map(|t| right.map_state(state_back[t.0]))
            .collect();
        let mut action_map = Vec::with_capacity(overlap.n_actions());
        for t in witness.morphism().action_map() {
            let b = action_back[unpunctured[t.0].0].expect("overlap actions survive puncturing");
            let target = right.map_action(b);
            match kept[i + 1][target.0] {
                Some(new) => action_map.push(new),
                None => {
                    return Err(ZigZagError::BrokenRightLeg {
                        overlap: i,
                        stage: i + 1,
                        action: z.components[i + 1].action_name(target).to_string(),
                    })
                }
            }
        }
        let new_right = MdpMorphism::new(overlap, components[i + 1].clone(), state_map, action_map)?;
        left_legs.push(witness);
        right_legs.push(new_right);
    }
    ZigZag::new(components, left_legs, right_legs)
}

/// Argmax sets at one state of one stage, as actions of that stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageComparison {
    pub stage: usize,
    pub state: StateId,
    /// Maximizers of `R_i(a) + gamma * E[v_i(s')]` with `v_i` optimal for `M_i`.
    pub local: Vec<ActionId>,
    /// Maximizers of the same expression with the composite's optimal values.
    pub composite: Vec<ActionId>,
}

impl StageComparison {
    pub fn agrees(&self) -> bool {
        self.local.iter().any(|a| self.composite.contains(a))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub comparisons: Vec<StageComparison>,
}

impl MonotonicityReport {
    pub fn holds(&self) -> bool {
        self.comparisons.iter().all(StageComparison::agrees)
    }

    pub fn failures(&self) -> impl Iterator<Item = &StageComparison> {
        self.comparisons.iter().filter(|c| !c.agrees())
    }
}

/// Whether the one-step objectives built from each stage's own optimal
/// values and from the composite's optimal values are maximized by a common
/// action. Checked at every state where stage `i` is the active stage;
/// objectives within `tol` of the maximum count as ties.
pub fn check_monotonic(z: &ZigZag, gamma: f64, tol: f64) -> Result<MonotonicityReport, ZigZagError> {
    let cfg = SolverConfig {
        gamma,
        tol,
        ..SolverConfig::default()
    };
    cfg.validate()?;
    let composite = build_composite(z)?;
    let (v_c, _) = value_iteration(&composite.mdp, &cfg)?;
    let mut comparisons = Vec::new();
    for (i, m) in z.components.iter().enumerate() {
        let (v_i, _) = value_iteration(m, &cfg)?;
        let emb = composite.embedding(i).expect("every stage is embedded");
        let lifted: Vec<f64> = emb.state_map().iter().map(|t| v_c.get(*t)).collect();
        for s in m.states() {
            let fiber = m.actions_at(s);
            if fiber.is_empty() || composite.active_stage(emb.map_state(s)) != Some(i) {
                continue;
            }
            comparisons.push(StageComparison {
                stage: i,
                state: s,
                local: near_argmax(m, fiber, gamma, v_i.as_slice(), tol),
                composite: near_argmax(m, fiber, gamma, &lifted, tol),
            });
        }
    }
    Ok(MonotonicityReport { comparisons })
}

fn near_argmax(m: &FiniteMdp, fiber: &[ActionId], gamma: f64, v: &[f64], tol: f64) -> Vec<ActionId> {
    let obj: Vec<f64> = fiber.iter().map(|&a| m.backup(a, gamma, v)).collect();
    let best = obj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    fiber
        .iter()
        .zip(&obj)
        .filter(|(_, &o)| o >= best - tol)
        .map(|(&a, _)| a)
        .collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::mdp::ActionSpec;

    /// A line `x0 -> x1 -> ... -> x{len-1}` of rightward moves; entering the
    /// last state pays `goal`, and the last state is absorbing.
    pub(crate) fn line(prefix: &str, len: usize, goal: f64) -> Arc<FiniteMdp> {
        let names: Vec<String> = (0..len).map(|i| format!("{prefix}{i}")).collect();
        let actions = (0..len - 1)
            .map(|i| {
                let r = if i + 2 == len { goal } else { 0.0 };
                ActionSpec::new(format!("r{i}"), &names[i], &[(names[i + 1].as_str(), 1.0)], r)
            })
            .collect();
        Arc::new(FiniteMdp::new(names, actions).unwrap())
    }

    /// A single actionless state.
    pub(crate) fn dot(name: &str) -> Arc<FiniteMdp> {
        Arc::new(FiniteMdp::new(vec![name.to_string()], vec![]).unwrap())
    }

    /// Lines glued end to start; stage `i` has `len` states.
    pub(crate) fn line_zigzag(stages: usize, len: usize) -> ZigZag {
        let comps: Vec<_> = (0..stages)
            .map(|i| line(&format!("m{i}_"), len, 1.0))
            .collect();
        let mut lefts = Vec::new();
        let mut rights = Vec::new();
        for i in 0..stages - 1 {
            let n = dot(&format!("n{i}"));
            let l = MdpMorphism::new(n.clone(), comps[i].clone(), vec![StateId(len - 1)], vec![])
                .unwrap();
            lefts.push(SubprocessWitness::new(l).unwrap());
            rights.push(MdpMorphism::new(n, comps[i + 1].clone(), vec![StateId(0)], vec![]).unwrap());
        }
        ZigZag::new(comps, lefts, rights).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::mdp::ActionSpec;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn base_case_is_identity() {
        let m = line("x", 3, 1.0);
        let c = build_composite(&ZigZag::single(m.clone())).unwrap();
        assert_eq!(c.mdp, m);
        assert_eq!(c.embeddings, vec![identity(&m)]);
        assert!(c.stage_of_state.iter().all(|s| s == &[0]));
    }

    #[test]
    fn two_chains_make_a_line() {
        let z = line_zigzag(2, 2);
        let c = build_composite(&z).unwrap();
        assert_eq!(c.mdp.n_states(), 3);
        assert_eq!(c.mdp.state_names(), &["m0_0", "m0_1", "m1_1"]);
        assert_eq!(c.stage_of_state, vec![vec![0], vec![0, 1], vec![1]]);
        assert_eq!(c.embeddings[1].state_map(), &[StateId(1), StateId(2)]);
        // every composite action moves right
        for a in c.mdp.action_ids() {
            let t = c.mdp.transition(a).support()[0].0;
            assert_eq!(t.0, c.mdp.anchor(a).0 + 1);
        }
    }

    #[test]
    fn empty_overlaps_give_coproduct() {
        let a = line("a", 2, 1.0);
        let b = line("b", 3, 1.0);
        let e = Arc::new(FiniteMdp::empty());
        let l = SubprocessWitness::new(MdpMorphism::new(e.clone(), a.clone(), vec![], vec![]).unwrap())
            .unwrap();
        let r = MdpMorphism::new(e, b.clone(), vec![], vec![]).unwrap();
        let z = ZigZag::new(vec![a, b], vec![l], vec![r]).unwrap();
        let c = build_composite(&z).unwrap();
        assert_eq!((c.mdp.n_states(), c.mdp.n_actions()), (5, 3));
        assert!(is_forward_moving(&z).holds());
    }

    #[test]
    fn truncation() {
        let z = line_zigzag(3, 3);
        let full = build_composite(&z).unwrap();
        assert_eq!(truncated_composite(&z, 0).unwrap(), full);
        let last = truncated_composite(&z, 2).unwrap();
        assert_eq!(last.mdp, *z.component(2));
        assert_eq!(last.first_stage, 2);
        let mid = truncated_composite(&z, 1).unwrap();
        assert_eq!(mid.mdp.n_states(), 5);
        assert!(mid.mdp.state_names().iter().all(|n| !n.starts_with("m0_")));
        assert_eq!(mid.embedding(1).unwrap().source(), z.component(1));
        assert!(mid.embedding(0).is_none());
        assert_eq!(
            truncated_composite(&z, 3),
            Err(ZigZagError::IndexOutOfRange { index: 3, len: 3 })
        );
    }

    #[test]
    fn length_and_leg_checks() {
        let a = line("a", 2, 1.0);
        assert!(matches!(
            ZigZag::new(vec![a.clone(), a.clone()], vec![], vec![]),
            Err(ZigZagError::LengthMismatch { .. })
        ));
        let z = line_zigzag(2, 2);
        let swapped = ZigZag::new(
            z.components().iter().rev().cloned().collect(),
            z.left_legs().to_vec(),
            z.right_legs().to_vec(),
        );
        assert_eq!(swapped.unwrap_err(), ZigZagError::LegMismatch { stage: 0, side: "left" });
    }

    /// Stage 0 is `s -> g` with `g` also able to step back to `s`.
    fn with_escape() -> ZigZag {
        let m0 = Arc::new(
            FiniteMdp::new(
                names(&["s", "g"]),
                vec![
                    ActionSpec::new("go", "s", &[("g", 1.0)], 1.0),
                    ActionSpec::new("stay", "g", &[("g", 1.0)], 0.0),
                    ActionSpec::new("back", "g", &[("s", 1.0)], 0.0),
                ],
            )
            .unwrap(),
        );
        let m1 = Arc::new(
            FiniteMdp::new(
                names(&["u", "w"]),
                vec![
                    ActionSpec::new("stay", "u", &[("u", 1.0)], 0.0),
                    ActionSpec::new("on", "u", &[("w", 1.0)], 2.0),
                ],
            )
            .unwrap(),
        );
        let (n, l) = max_subprocess(&m0, &[StateId(1)]).unwrap();
        let r = MdpMorphism::new(n, m1.clone(), vec![StateId(0)], vec![ActionId(0)]).unwrap();
        ZigZag::new(vec![m0, m1], vec![l], vec![r]).unwrap()
    }

    #[test]
    fn escape_action_is_punctured() {
        let z = with_escape();
        assert_eq!(is_forward_moving(&z).full, vec![false]);
        let p = puncture(&z).unwrap();
        assert!(is_forward_moving(&p).holds());
        assert_eq!(p.component(0).n_actions(), 2);
        assert!(p.component(0).action_id("back").is_none());
        assert_eq!(puncture(&p).unwrap(), p);
        // the composite keeps stage 1's way out of the glued state
        let c = build_composite(&p).unwrap();
        assert_eq!(c.mdp.n_actions(), 3);
    }

    #[test]
    fn forward_moving_is_fixed_by_puncture() {
        let z = line_zigzag(3, 2);
        assert!(is_forward_moving(&z).holds());
        // overlaps are renamed after the stage states they sit on
        let p = puncture(&z).unwrap();
        assert_eq!(p.components(), z.components());
        assert_eq!(p.overlap(0).state_names(), &["m0_1".to_string()]);
        assert_eq!(puncture(&p).unwrap(), p);
    }

    #[test]
    fn overlap_of_escapes_becomes_actionless() {
        // N = {g} with no actions of its own while M0 has `back` at g
        let z = with_escape();
        let m0 = z.component(0).clone();
        let bare = dot("g");
        let l = SubprocessWitness::new(
            MdpMorphism::new(bare.clone(), m0.clone(), vec![StateId(1)], vec![]).unwrap(),
        )
        .unwrap();
        let r = MdpMorphism::new(bare, z.component(1).clone(), vec![StateId(0)], vec![]).unwrap();
        let z = ZigZag::new(vec![m0, z.component(1).clone()], vec![l], vec![r]).unwrap();
        let p = puncture(&z).unwrap();
        assert_eq!(p.overlap(0).n_actions(), 0);
        assert!(p.component(0).is_absorbing(StateId(1)));
        assert!(is_forward_moving(&p).holds());
    }

    #[test]
    fn broken_right_leg() {
        // stage 1's glued action would be removed by puncturing stage 1 itself
        let z = with_escape();
        let m1 = z.component(1).clone();
        let m2 = line("t", 2, 0.0);
        // N1 = {u} actionless, so `stay` and `on` at u are punctured out of M1
        let n1 = dot("u");
        let l1 = SubprocessWitness::new(
            MdpMorphism::new(n1.clone(), m1.clone(), vec![StateId(0)], vec![]).unwrap(),
        )
        .unwrap();
        let r1 = MdpMorphism::new(n1, m2.clone(), vec![StateId(0)], vec![]).unwrap();
        let z3 = ZigZag::new(
            vec![z.component(0).clone(), m1, m2],
            vec![z.left_legs()[0].clone(), l1],
            vec![z.right_legs()[0].clone(), r1],
        )
        .unwrap();
        assert_eq!(
            puncture(&z3).unwrap_err(),
            ZigZagError::BrokenRightLeg {
                overlap: 0,
                stage: 1,
                action: "stay".into()
            }
        );
    }

    #[test]
    fn monotonic_line() {
        let z = line_zigzag(2, 3);
        let r = check_monotonic(&z, 0.9, 1e-9).unwrap();
        assert!(r.holds());
        // stage 0 active at its first two states, stage 1 at its last two
        assert_eq!(r.comparisons.len(), 4);
        let single = check_monotonic(&ZigZag::single(line("x", 4, 1.0)), 0.9, 1e-9).unwrap();
        assert!(single.holds());
    }

    #[test]
    fn myopic_shortcut_is_not_monotonic() {
        // stage 0: from s either `near` (goal a, reward 1) or `far` (goal b,
        // reward 0.5); stage 1 pays 10 only when starting from b
        let m0 = Arc::new(
            FiniteMdp::new(
                names(&["s", "a", "b"]),
                vec![
                    ActionSpec::new("near", "s", &[("a", 1.0)], 1.0),
                    ActionSpec::new("far", "s", &[("b", 1.0)], 0.5),
                ],
            )
            .unwrap(),
        );
        let m1 = Arc::new(
            FiniteMdp::new(
                names(&["a", "b", "done"]),
                vec![ActionSpec::new("cash", "b", &[("done", 1.0)], 10.0)],
            )
            .unwrap(),
        );
        let n = Arc::new(FiniteMdp::new(names(&["a", "b"]), vec![]).unwrap());
        let l = SubprocessWitness::new(
            MdpMorphism::new(n.clone(), m0.clone(), vec![StateId(1), StateId(2)], vec![]).unwrap(),
        )
        .unwrap();
        let r = MdpMorphism::new(n, m1.clone(), vec![StateId(0), StateId(1)], vec![]).unwrap();
        let z = ZigZag::new(vec![m0, m1], vec![l], vec![r]).unwrap();
        let report = check_monotonic(&z, 0.9, 1e-9).unwrap();
        assert!(!report.holds());
        let bad: Vec<_> = report.failures().collect();
        assert_eq!(bad.len(), 1);
        assert_eq!((bad[0].stage, bad[0].state), (0, StateId(0)));
        assert_eq!(bad[0].local, vec![ActionId(0)]);
        assert_eq!(bad[0].composite, vec![ActionId(1)]);
    }
}
