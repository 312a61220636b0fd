//! Subprocesses: morphisms with injective state and action maps.

use std::sync::Arc;

use super::{same_mdp, CategoryError, MdpMorphism};
use crate::mdp::{Action, ActionId, Distribution, FiniteMdp, StateId};

/// A morphism known to be injective on states and actions.
#[derive(Clone, Debug, PartialEq)]
pub struct SubprocessWitness {
    morphism: MdpMorphism,
    injective_f: bool,
    injective_g: bool,
    full: bool,
}

impl SubprocessWitness {
    pub fn new(morphism: MdpMorphism) -> Result<Self, CategoryError> {
        let injective_f = morphism.is_injective_on_states();
        let injective_g = morphism.is_injective_on_actions();
        if !(injective_f && injective_g) {
            return Err(CategoryError::NotInjective {
                states: injective_f,
                actions: injective_g,
            });
        }
        let full = cartesian(&morphism);
        Ok(Self {
            morphism,
            injective_f,
            injective_g,
            full,
        })
    }

    pub fn morphism(&self) -> &MdpMorphism {
        &self.morphism
    }

    pub fn into_morphism(self) -> MdpMorphism {
        self.morphism
    }

    pub fn injective_f(&self) -> bool {
        self.injective_f
    }

    pub fn injective_g(&self) -> bool {
        self.injective_g
    }

    pub fn full(&self) -> bool {
        self.full
    }

    /// Image of the state map, sorted.
    pub fn state_image(&self) -> Vec<StateId> {
        let mut img = self.morphism.state_map().to_vec();
        img.sort();
        img
    }
}

/// For injective maps the anchor square is cartesian exactly when every
/// target action anchored over the state image is hit by the action map.
fn cartesian(m: &MdpMorphism) -> bool {
    let tgt = m.target();
    let mut hit = vec![false; tgt.n_actions()];
    for a in m.action_map() {
        hit[a.0] = true;
    }
    m.state_map()
        .iter()
        .all(|&s| tgt.actions_at(s).iter().all(|a| hit[a.0]))
}

pub fn is_full(w: &SubprocessWitness) -> bool {
    w.full
}

/// The canonical subprocess on `subset`: every action anchored in the subset
/// whose transition stays inside it.
pub fn max_subprocess(
    m2: &Arc<FiniteMdp>,
    subset: &[StateId],
) -> Result<(Arc<FiniteMdp>, SubprocessWitness), CategoryError> {
    if subset.is_empty() {
        return Err(CategoryError::EmptySubset);
    }
    if let Some(&bad) = subset.iter().find(|s| s.0 >= m2.n_states()) {
        return Err(CategoryError::UnknownState(bad));
    }
    let mut states = subset.to_vec();
    states.sort();
    states.dedup();
    let mut local = vec![None; m2.n_states()];
    for (i, s) in states.iter().enumerate() {
        local[s.0] = Some(StateId(i));
    }
    let mut actions = Vec::new();
    let mut action_map = Vec::new();
    for a in m2.action_ids() {
        let act = m2.action(a);
        let Some(anchor) = local[act.anchor.0] else {
            continue;
        };
        if act.transition.states().any(|t| local[t.0].is_none()) {
            continue;
        }
        // relabeling is monotone, so the support stays sorted
        let masses = act
            .transition
            .support()
            .iter()
            .map(|&(t, p)| (local[t.0].unwrap(), p))
            .collect();
        actions.push(Action {
            name: act.name.clone(),
            anchor,
            transition: Distribution::from_masses(masses),
            reward: act.reward,
        });
        action_map.push(a);
    }
    let names = states.iter().map(|&s| m2.state_name(s).to_string()).collect();
    let sub = Arc::new(FiniteMdp::from_parts(names, actions).expect("restriction of a valid MDP"));
    let inclusion = MdpMorphism::new_unchecked(sub.clone(), m2.clone(), states, action_map);
    let witness = SubprocessWitness::new(inclusion)?;
    Ok((sub, witness))
}

/// The unique `u` with `max . u = sub`, where both are subprocesses of the
/// same MDP over the same state image.
pub fn factor_through_max(
    sub: &SubprocessWitness,
    max: &SubprocessWitness,
) -> Result<MdpMorphism, CategoryError> {
    let (s, m) = (sub.morphism(), max.morphism());
    if !same_mdp(s.target(), m.target()) || sub.state_image() != max.state_image() {
        return Err(CategoryError::StateImageMismatch);
    }
    let mut state_back = vec![None; m.target().n_states()];
    for (i, t) in m.state_map().iter().enumerate() {
        state_back[t.0] = Some(StateId(i));
    }
    let mut action_back = vec![None; m.target().n_actions()];
    for (i, t) in m.action_map().iter().enumerate() {
        action_back[t.0] = Some(ActionId(i));
    }
    let state_map = s
        .state_map()
        .iter()
        .map(|t| state_back[t.0].expect("state images agree"))
        .collect();
    let mut action_map = Vec::with_capacity(s.action_map().len());
    for (i, t) in s.action_map().iter().enumerate() {
        match action_back[t.0] {
            Some(a) => action_map.push(a),
            None => return Err(CategoryError::NotASubprocess(ActionId(i))),
        }
    }
    MdpMorphism::new(s.source().clone(), m.source().clone(), state_map, action_map)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{compose, identity};
    use super::*;
    use crate::mdp::ActionSpec;

    fn line3() -> Arc<FiniteMdp> {
        Arc::new(
            FiniteMdp::new(
                names(&["l", "m", "r"]),
                vec![
                    ActionSpec::new("lm", "l", &[("m", 1.0)], 0.0),
                    ActionSpec::new("mr", "m", &[("r", 1.0)], 0.0),
                ],
            )
            .unwrap(),
        )
    }

    #[test]
    fn full_state_set_gives_everything() {
        let m = chain();
        let (sub, w) = max_subprocess(&m, &[StateId(1), StateId(0)]).unwrap();
        assert_eq!(*sub, *m);
        assert_eq!(*w.morphism(), identity(&m));
        assert!(is_full(&w));
    }

    #[test]
    fn chain_goal_keeps_self_loop() {
        let m = chain();
        let (sub, w) = max_subprocess(&m, &[StateId(1)]).unwrap();
        assert_eq!(sub.state_names(), &["s1".to_string()]);
        assert_eq!(sub.n_actions(), 1);
        assert_eq!(sub.action_name(ActionId(0)), "a1");
        assert_eq!(w.morphism().action_map(), &[ActionId(1)]);
        assert!(is_full(&w));
    }

    #[test]
    fn leftmost_of_rightward_line_is_actionless() {
        let (sub, w) = max_subprocess(&line3(), &[StateId(0)]).unwrap();
        assert_eq!((sub.n_states(), sub.n_actions()), (1, 0));
        // the dropped rightward action is anchored in the image
        assert!(!is_full(&w));
        assert_eq!(max_subprocess(&line3(), &[]).unwrap_err(), CategoryError::EmptySubset);
    }

    #[test]
    fn escape_action_breaks_fullness() {
        let m = Arc::new(
            FiniteMdp::new(
                names(&["s0", "s1"]),
                vec![
                    ActionSpec::new("a0", "s0", &[("s1", 1.0)], 1.0),
                    ActionSpec::new("a1", "s1", &[("s1", 1.0)], 0.0),
                    ActionSpec::new("back", "s1", &[("s0", 1.0)], 0.0),
                ],
            )
            .unwrap(),
        );
        let (sub, w) = max_subprocess(&m, &[StateId(1)]).unwrap();
        assert_eq!(sub.n_actions(), 1);
        assert!(!is_full(&w));
    }

    #[test]
    fn factoring() {
        let m = chain();
        let (_, max) = max_subprocess(&m, &[StateId(1)]).unwrap();
        let u = factor_through_max(&max, &max).unwrap();
        assert_eq!(u, identity(max.morphism().source()));

        // actionless sub over {s1}
        let bare = Arc::new(FiniteMdp::new(names(&["g"]), vec![]).unwrap());
        let incl = MdpMorphism::new(bare.clone(), m.clone(), vec![StateId(1)], vec![]).unwrap();
        let sub = SubprocessWitness::new(incl).unwrap();
        let u = factor_through_max(&sub, &max).unwrap();
        assert_eq!(u.state_map(), &[StateId(0)]);
        assert_eq!(compose(&u, max.morphism()).unwrap(), *sub.morphism());

        let (_, other) = max_subprocess(&m, &[StateId(0)]).unwrap();
        assert_eq!(factor_through_max(&sub, &other), Err(CategoryError::StateImageMismatch));
    }

    #[test]
    fn corrupt_witness_is_not_a_subprocess() {
        // a witness whose action is the escaping a0 cannot come from a valid
        // morphism; it is assembled by hand to exercise the error path
        let m = chain();
        let (_, max) = max_subprocess(&m, &[StateId(0)]).unwrap();
        let rogue = Arc::new(
            FiniteMdp::new(
                names(&["x"]),
                vec![ActionSpec::new("esc", "x", &[("x", 1.0)], 1.0)],
            )
            .unwrap(),
        );
        let corrupt = SubprocessWitness {
            morphism: MdpMorphism {
                source: rogue,
                target: m.clone(),
                state_map: vec![StateId(0)],
                action_map: vec![ActionId(0)],
            },
            injective_f: true,
            injective_g: true,
            full: true,
        };
        assert_eq!(
            factor_through_max(&corrupt, &max),
            Err(CategoryError::NotASubprocess(ActionId(0)))
        );
    }

    #[test]
    fn non_injective_rejected() {
        let m = walk();
        let pt = Arc::new(super::super::point_mdp());
        let collapse = MdpMorphism::new(m, pt, vec![StateId(0); 2], vec![ActionId(0); 2]).unwrap();
        assert_eq!(
            SubprocessWitness::new(collapse),
            Err(CategoryError::NotInjective {
                states: false,
                actions: false
            })
        );
    }
}
