//! Gluing two MDPs along a common source.

use std::collections::HashSet;
use std::sync::Arc;

use super::{pushforward, same_mdp, CategoryError, GlueKind, MdpMorphism, COMPAT_TOL};
use crate::mdp::{Action, ActionId, FiniteMdp, StateId};
use crate::union_find::UnionFind;

/// The glued MDP together with its two legs.
#[derive(Clone, Debug, PartialEq)]
pub struct Pushout {
    pub mdp: Arc<FiniteMdp>,
    pub leg1: MdpMorphism,
    pub leg2: MdpMorphism,
}

/// Pushout of `m1: M3 -> M1` and `m2: M3 -> M2`.
///
/// States and actions of `M1 + M2` are quotiented by the equivalences
/// generated by `f1(s) ~ f2(s)` and `g1(a) ~ g2(a)`. Classes are ordered by
/// their least member (component 1 before component 2), and each class takes
/// its data from that member; every other member is checked to agree.
pub fn pushout(m1: &MdpMorphism, m2: &MdpMorphism) -> Result<Pushout, CategoryError> {
    if !same_mdp(m1.source(), m2.source()) {
        return Err(CategoryError::DomainMismatch);
    }
    let (left, right) = (m1.target(), m2.target());
    let (n1, n2) = (left.n_states(), right.n_states());
    let (k1, k2) = (left.n_actions(), right.n_actions());

    let mut states = UnionFind::new(n1 + n2);
    for s in m1.source().states() {
        states.union(m1.map_state(s).0, n1 + m2.map_state(s).0);
    }
    let (state_class, state_members) = states.canonical_classes();

    let mut actions = UnionFind::new(k1 + k2);
    for a in m1.source().action_ids() {
        actions.union(m1.map_action(a).0, k1 + m2.map_action(a).0);
    }
    let (action_class, action_members) = actions.canonical_classes();

    let q1: Vec<StateId> = (0..n1).map(|i| StateId(state_class[i])).collect();
    let q2: Vec<StateId> = (0..n2).map(|i| StateId(state_class[n1 + i])).collect();

    // member index -> (component MDP, local action, state quotient of that component)
    let lookup = |member: usize| -> (&FiniteMdp, ActionId, &[StateId]) {
        if member < k1 {
            (left.as_ref(), ActionId(member), &q1)
        } else {
            (right.as_ref(), ActionId(member - k1), &q2)
        }
    };

    let mut state_names = UniqueNames::default();
    let names: Vec<String> = state_members
        .iter()
        .map(|members| {
            let rep = members[0];
            let base = if rep < n1 {
                left.state_name(StateId(rep))
            } else {
                right.state_name(StateId(rep - n1))
            };
            state_names.claim(base)
        })
        .collect();

    let mut action_names = UniqueNames::default();
    let mut glued = Vec::with_capacity(action_members.len());
    for (class, members) in action_members.iter().enumerate() {
        let (mdp, a, q) = lookup(members[0]);
        let anchor = q[mdp.anchor(a).0];
        let transition = pushforward(q, mdp.transition(a));
        let reward = mdp.reward(a);
        for &other in &members[1..] {
            let (omdp, oa, oq) = lookup(other);
            let inconsistent = |detail: String| CategoryError::InconsistentGlue {
                kind: GlueKind::Action,
                class,
                detail,
            };
            if oq[omdp.anchor(oa).0] != anchor {
                return Err(inconsistent(format!(
                    "`{}` and `{}` are anchored in different state classes",
                    mdp.action_name(a),
                    omdp.action_name(oa)
                )));
            }
            let dev = pushforward(oq, omdp.transition(oa)).max_deviation(&transition);
            if dev > COMPAT_TOL {
                return Err(inconsistent(format!(
                    "transitions of `{}` and `{}` differ by {dev:e}",
                    mdp.action_name(a),
                    omdp.action_name(oa)
                )));
            }
            if (omdp.reward(oa) - reward).abs() > COMPAT_TOL {
                return Err(inconsistent(format!(
                    "rewards of `{}` and `{}` differ",
                    mdp.action_name(a),
                    omdp.action_name(oa)
                )));
            }
        }
        glued.push(Action {
            name: action_names.claim(mdp.action_name(a)),
            anchor,
            transition,
            reward,
        });
    }

    let mdp = Arc::new(FiniteMdp::from_parts(names, glued).expect("quotient of valid MDPs"));
    let leg1 = MdpMorphism::new_unchecked(
        left.clone(),
        mdp.clone(),
        q1.clone(),
        (0..k1).map(|i| ActionId(action_class[i])).collect(),
    );
    let leg2 = MdpMorphism::new_unchecked(
        right.clone(),
        mdp.clone(),
        q2,
        (0..k2).map(|i| ActionId(action_class[k1 + i])).collect(),
    );
    Ok(Pushout { mdp, leg1, leg2 })
}

/// Hands out names, suffixing `_1`, `_2`, ... on collision.
#[derive(Default)]
struct UniqueNames {
    used: HashSet<String>,
}

impl UniqueNames {
    fn claim(&mut self, base: &str) -> String {
        let mut name = base.to_string();
        let mut k = 1;
        while self.used.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        self.used.insert(name.clone());
        name
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{compose, identity, max_subprocess, SubprocessWitness};
    use super::*;

    #[test]
    fn empty_apex_gives_disjoint_union() {
        let empty = Arc::new(FiniteMdp::empty());
        let (a, b) = (chain(), walk());
        let m1 = MdpMorphism::new(empty.clone(), a.clone(), vec![], vec![]).unwrap();
        let m2 = MdpMorphism::new(empty, b.clone(), vec![], vec![]).unwrap();
        let p = pushout(&m1, &m2).unwrap();
        assert_eq!(p.mdp.n_states(), a.n_states() + b.n_states());
        assert_eq!(p.mdp.n_actions(), a.n_actions() + b.n_actions());
        // `s0`, `s1` collide and get suffixed in the second summand
        assert_eq!(p.mdp.state_names(), &["s0", "s1", "s0_1", "s1_1"]);
    }

    #[test]
    fn two_chains_share_their_goal() {
        let (a, b) = (chain(), chain());
        let (_, wa) = max_subprocess(&a, &[StateId(1)]).unwrap();
        let (n, _) = max_subprocess(&b, &[StateId(1)]).unwrap();
        let wb = SubprocessWitness::new(
            MdpMorphism::new(n, b.clone(), vec![StateId(1)], vec![ActionId(1)]).unwrap(),
        )
        .unwrap();
        let p = pushout(wa.morphism(), wb.morphism()).unwrap();
        assert_eq!(p.mdp.n_states(), 3);
        assert_eq!(p.mdp.n_actions(), 3);
        assert_eq!(p.mdp.state_names(), &["s0", "s1", "s0_1"]);
        assert_eq!(p.leg2.state_map(), &[StateId(2), StateId(1)]);
        let lhs = compose(wa.morphism(), &p.leg1).unwrap();
        let rhs = compose(wb.morphism(), &p.leg2).unwrap();
        assert_eq!(lhs.state_map(), rhs.state_map());
        assert_eq!(lhs.action_map(), rhs.action_map());
    }

    #[test]
    fn gluing_along_everything() {
        let m = walk();
        let p = pushout(&identity(&m), &identity(&m)).unwrap();
        assert_eq!(*p.mdp, *m);
        assert_eq!(p.leg1.state_map(), p.leg2.state_map());
    }

    #[test]
    fn invalid_span_reports_inconsistent_class() {
        let src = chain();
        let louder = Arc::new(
            FiniteMdp::new(
                names(&["s0", "s1"]),
                vec![
                    crate::mdp::ActionSpec::new("a0", "s0", &[("s1", 1.0)], 5.0),
                    crate::mdp::ActionSpec::new("a1", "s1", &[("s1", 1.0)], 0.0),
                ],
            )
            .unwrap(),
        );
        // not a morphism: the reward of a0 changes
        let bad = MdpMorphism {
            source: src.clone(),
            target: louder,
            state_map: vec![StateId(0), StateId(1)],
            action_map: vec![ActionId(0), ActionId(1)],
        };
        match pushout(&identity(&src), &bad) {
            Err(CategoryError::InconsistentGlue { kind, class, .. }) => {
                assert_eq!((kind, class), (GlueKind::Action, 0));
            }
            other => panic!("expected inconsistent glue, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_sources() {
        let (a, b) = (chain(), walk());
        assert_eq!(
            pushout(&identity(&a), &identity(&b)),
            Err(CategoryError::DomainMismatch)
        );
    }
}
