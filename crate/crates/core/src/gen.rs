//! Random instances for property tests: small MDPs with dyadic transition
//! probabilities, morphisms out of them, spans and zig-zags.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::category::{compose, MdpMorphism, SubprocessWitness};
use crate::mdp::{Action, ActionId, Distribution, FiniteMdp, StateId};
use crate::zigzag::ZigZag;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rewards {
    /// Drawn from a handful of values, so ties and merges are common.
    Few,
    /// Uniform in `[-1, 1]`, so ties have probability zero.
    Generic,
}

fn reward<R: Rng + ?Sized>(rng: &mut R, kind: Rewards) -> f64 {
    match kind {
        Rewards::Few => *[-1.0, 0.0, 0.5, 1.0].choose(rng).unwrap(),
        Rewards::Generic => rng.gen_range(-1.0..1.0),
    }
}

/// A distribution over `0..n` with masses in multiples of 1/4.
pub fn dyadic_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Distribution {
    let mut acc = BTreeMap::new();
    for _ in 0..4 {
        *acc.entry(StateId(rng.gen_range(0..n))).or_insert(0.0) += 0.25;
    }
    Distribution::from_masses(acc)
}

/// `n` states named `s0..`, up to `max_fiber` actions per state.
pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, n: usize, max_fiber: usize, rewards: Rewards) -> FiniteMdp {
    let names = (0..n).map(|i| format!("s{i}")).collect();
    let mut actions = Vec::new();
    for s in 0..n {
        for _ in 0..rng.gen_range(0..=max_fiber) {
            actions.push(Action {
                name: format!("a{}", actions.len()),
                anchor: StateId(s),
                transition: dyadic_distribution(rng, n),
                reward: reward(rng, rewards),
            });
        }
    }
    FiniteMdp::from_parts(names, actions).expect("generated MDP is valid")
}

/// The quotient of `m` by a random partition of its states. Actions whose
/// induced data coincide are sometimes merged.
pub fn random_quotient<R: Rng + ?Sized>(rng: &mut R, m: &Arc<FiniteMdp>) -> MdpMorphism {
    let n = m.n_states();
    let k = if n == 0 { 0 } else { rng.gen_range(1..=n) };
    let raw: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    // relabel classes densely in order of first appearance
    let mut relabel = vec![usize::MAX; k];
    let mut classes = 0;
    let state_map: Vec<StateId> = raw
        .iter()
        .map(|&c| {
            if relabel[c] == usize::MAX {
                relabel[c] = classes;
                classes += 1;
            }
            StateId(relabel[c])
        })
        .collect();
    let merge = rng.gen_bool(0.7);
    let mut actions: Vec<Action> = Vec::new();
    let mut action_map = Vec::with_capacity(m.n_actions());
    for a in m.action_ids() {
        let act = m.action(a);
        let image = Action {
            name: format!("q{}", actions.len()),
            anchor: state_map[act.anchor.0],
            transition: crate::category::pushforward(&state_map, &act.transition),
            reward: act.reward,
        };
        let existing = actions.iter().position(|b| {
            b.anchor == image.anchor && b.transition == image.transition && b.reward == image.reward
        });
        match existing {
            Some(i) if merge => action_map.push(ActionId(i)),
            _ => {
                action_map.push(ActionId(actions.len()));
                actions.push(image);
            }
        }
    }
    let names = (0..classes).map(|i| format!("c{i}")).collect();
    let target = Arc::new(FiniteMdp::from_parts(names, actions).expect("quotient is valid"));
    MdpMorphism::new(m.clone(), target, state_map, action_map).expect("quotient map is a morphism")
}

fn fresh(prefix: &str, used: &[String]) -> String {
    (0..)
        .map(|i| format!("{prefix}{i}"))
        .find(|n| !used.contains(n))
        .unwrap()
}

/// Inclusion of `m` into an MDP with `extra_states` new states and
/// `extra_actions` new actions. New actions sit on new states unless
/// `escape` allows them on old ones, which breaks fullness.
pub fn random_extension<R: Rng + ?Sized>(
    rng: &mut R,
    m: &Arc<FiniteMdp>,
    extra_states: usize,
    extra_actions: usize,
    escape: bool,
    rewards: Rewards,
) -> MdpMorphism {
    let n = m.n_states();
    let total = n + extra_states;
    let mut names: Vec<String> = m.state_names().to_vec();
    for _ in 0..extra_states {
        let name = fresh("x", &names);
        names.push(name);
    }
    let mut actions = m.actions().to_vec();
    let mut action_names: Vec<String> = actions.iter().map(|a| a.name.clone()).collect();
    for _ in 0..extra_actions {
        let anchors = if escape { 0..total } else { n..total };
        if anchors.is_empty() {
            break;
        }
        let name = fresh("y", &action_names);
        action_names.push(name.clone());
        actions.push(Action {
            name,
            anchor: StateId(rng.gen_range(anchors)),
            transition: dyadic_distribution(rng, total),
            reward: reward(rng, rewards),
        });
    }
    let target = Arc::new(FiniteMdp::from_parts(names, actions).expect("extension is valid"));
    MdpMorphism::new(
        m.clone(),
        target,
        m.states().collect(),
        m.action_ids().collect(),
    )
    .expect("inclusion is a morphism")
}

/// A morphism out of `m` whose target has at most `max_states` states:
/// a quotient, an extension, or a quotient followed by an extension.
pub fn random_morphism<R: Rng + ?Sized>(rng: &mut R, m: &Arc<FiniteMdp>, max_states: usize) -> MdpMorphism {
    let room = |k: usize| max_states.saturating_sub(k).min(2);
    match rng.gen_range(0..3) {
        0 => random_quotient(rng, m),
        1 => {
            let extra = rng.gen_range(0..=room(m.n_states()));
            let (acts, escape) = (rng.gen_range(0..3), rng.gen_bool(0.5));
            random_extension(rng, m, extra, acts, escape, Rewards::Few)
        }
        _ => {
            let q = random_quotient(rng, m);
            let extra = rng.gen_range(0..=room(q.target().n_states()));
            let acts = rng.gen_range(0..3);
            let e = random_extension(rng, q.target(), extra, acts, true, Rewards::Few);
            compose(&q, &e).expect("composable")
        }
    }
}

/// Three composable morphisms `f: A -> B`, `g: B -> C`, `h: C -> D`.
pub fn random_triple<R: Rng + ?Sized>(rng: &mut R, max_states: usize) -> (MdpMorphism, MdpMorphism, MdpMorphism) {
    let n = rng.gen_range(1..=max_states.min(4));
    let a = Arc::new(random_mdp(rng, n, 2, Rewards::Few));
    let f = random_morphism(rng, &a, max_states);
    let g = random_morphism(rng, f.target(), max_states);
    let h = random_morphism(rng, g.target(), max_states);
    (f, g, h)
}

/// A span `M1 <- M3 -> M2` of arbitrary morphisms, MDPs of at most
/// `max_states` states.
pub fn random_span<R: Rng + ?Sized>(rng: &mut R, max_states: usize) -> (MdpMorphism, MdpMorphism) {
    let n = rng.gen_range(0..=max_states.min(3));
    let src = Arc::new(random_mdp(rng, n, 2, Rewards::Few));
    let m1 = random_morphism(rng, &src, max_states);
    let m2 = random_morphism(rng, &src, max_states);
    (m1, m2)
}

/// A span whose legs are both subprocess inclusions.
pub fn random_subprocess_span<R: Rng + ?Sized>(
    rng: &mut R,
    max_states: usize,
) -> (SubprocessWitness, SubprocessWitness) {
    let n = rng.gen_range(0..=max_states.min(3));
    let src = Arc::new(random_mdp(rng, n, 2, Rewards::Few));
    let leg = |rng: &mut R| {
        let extra = rng.gen_range(0..=max_states - n);
        let (acts, escape) = (rng.gen_range(0..3), rng.gen_bool(0.5));
        let e = random_extension(rng, &src, extra, acts, escape, Rewards::Few);
        // scramble the target's state order so inclusions are not prefixes
        let p = random_permutation(rng, e.target());
        SubprocessWitness::new(compose(&e, &p).expect("composable")).expect("injective")
    };
    let l = leg(rng);
    let r = leg(rng);
    (l, r)
}

/// An isomorphism from `m` to a copy with states and actions reordered.
pub fn random_permutation<R: Rng + ?Sized>(rng: &mut R, m: &Arc<FiniteMdp>) -> MdpMorphism {
    let mut sp: Vec<usize> = (0..m.n_states()).collect();
    sp.shuffle(rng);
    let state_map: Vec<StateId> = sp.iter().map(|&i| StateId(i)).collect();
    let mut names = vec![String::new(); m.n_states()];
    for s in m.states() {
        names[state_map[s.0].0] = m.state_name(s).to_string();
    }
    let mut ap: Vec<usize> = (0..m.n_actions()).collect();
    ap.shuffle(rng);
    let mut slots: Vec<Option<Action>> = vec![None; m.n_actions()];
    for a in m.action_ids() {
        let act = m.action(a);
        slots[ap[a.0]] = Some(Action {
            name: act.name.clone(),
            anchor: state_map[act.anchor.0],
            transition: crate::category::pushforward(&state_map, &act.transition),
            reward: act.reward,
        });
    }
    let actions = slots.into_iter().map(Option::unwrap).collect();
    let target = Arc::new(FiniteMdp::from_parts(names, actions).expect("permuted copy is valid"));
    let action_map = ap.iter().map(|&i| ActionId(i)).collect();
    MdpMorphism::new(m.clone(), target, state_map, action_map).expect("isomorphism")
}

/// A forward-moving zig-zag of `stages` random stages with `n` states each.
/// Every stage has a nonempty absorbing goal set, the overlap is that goal
/// set without actions, and the right leg sends it anywhere in the next
/// stage.
pub fn random_forward_zigzag<R: Rng + ?Sized>(rng: &mut R, stages: usize, n: usize) -> ZigZag {
    random_zigzag(rng, stages, n, true)
}

/// As [`random_forward_zigzag`], except that with `absorbing_goals` unset
/// the goal states keep their actions, so left legs are usually not full.
pub fn random_zigzag<R: Rng + ?Sized>(rng: &mut R, stages: usize, n: usize, absorbing_goals: bool) -> ZigZag {
    assert!(stages >= 1 && n >= 2);
    let mut comps = Vec::with_capacity(stages);
    let mut goal_sets = Vec::with_capacity(stages);
    for i in 0..stages {
        let base = random_mdp(rng, n, 2, Rewards::Generic);
        let k = rng.gen_range(1..n);
        let mut states: Vec<usize> = (0..n).collect();
        states.shuffle(rng);
        let mut goals: Vec<usize> = states[..k].to_vec();
        goals.sort();
        let is_goal = |s: StateId| goals.binary_search(&s.0).is_ok();
        let names = (0..n).map(|s| format!("m{i}s{s}")).collect();
        let actions = base
            .actions()
            .iter()
            .filter(|a| !absorbing_goals || i + 1 == stages || !is_goal(a.anchor))
            .cloned()
            .collect();
        comps.push(Arc::new(FiniteMdp::from_parts(names, actions).expect("valid")));
        goal_sets.push(goals);
    }
    let mut lefts = Vec::with_capacity(stages - 1);
    let mut rights = Vec::with_capacity(stages - 1);
    for i in 0..stages - 1 {
        let goals = &goal_sets[i];
        let names = goals.iter().map(|g| format!("n{i}g{g}")).collect();
        let overlap = Arc::new(FiniteMdp::from_parts(names, vec![]).expect("valid"));
        let incl = MdpMorphism::new(
            overlap.clone(),
            comps[i].clone(),
            goals.iter().map(|&g| StateId(g)).collect(),
            vec![],
        )
        .expect("actionless inclusion");
        lefts.push(SubprocessWitness::new(incl).expect("injective"));
        let right = (0..goals.len()).map(|_| StateId(rng.gen_range(0..n))).collect();
        rights.push(MdpMorphism::new(overlap, comps[i + 1].clone(), right, vec![]).expect("valid"));
    }
    ZigZag::new(comps, lefts, rights).expect("consistent zig-zag")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zigzag::is_forward_moving;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generators_produce_valid_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (f, g, h) = random_triple(&mut rng, 6);
            assert!(f.target().n_states() <= 6 && h.target().n_states() <= 6);
            compose(&compose(&f, &g).unwrap(), &h).unwrap();
            let (l, r) = random_subprocess_span(&mut rng, 5);
            assert!(l.morphism().target().n_states() <= 5);
            assert!(r.injective_f());
            let z = random_forward_zigzag(&mut rng, 3, 4);
            assert!(is_forward_moving(&z).holds());
        }
    }
}
