//! Checking the universal property of a pushout candidate against probe
//! cocones by exhaustive search for mediating morphisms.

use std::sync::Arc;

use super::{compose, pushforward, same_mdp, CategoryError, MdpMorphism, Pushout, COMPAT_TOL};
use crate::mdp::{ActionId, FiniteMdp, StateId};

/// Upper bound on the number of state assignments tried per probe.
const SEARCH_LIMIT: u128 = 5_000_000;

/// An apex with two morphisms out of the span's legs' targets.
#[derive(Clone, Debug)]
pub struct Cocone {
    pub apex: Arc<FiniteMdp>,
    pub left: MdpMorphism,
    pub right: MdpMorphism,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Mediation {
    None,
    Unique(MdpMorphism),
    Multiple,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniversalReport {
    pub outcomes: Vec<Mediation>,
}

impl UniversalReport {
    /// Every probe admits exactly one mediating morphism.
    pub fn holds(&self) -> bool {
        self.outcomes.iter().all(|m| matches!(m, Mediation::Unique(_)))
    }
}

/// For each probe `(W0, a0, b0)` counts the morphisms `w: W -> W0` with
/// `w . leg1 = a0` and `w . leg2 = b0`.
pub fn check_pushout_universal(
    m1: &MdpMorphism,
    m2: &MdpMorphism,
    candidate: &Pushout,
    probes: &[Cocone],
) -> Result<UniversalReport, CategoryError> {
    let mut outcomes = Vec::with_capacity(probes.len());
    for (i, probe) in probes.iter().enumerate() {
        if !is_cocone(m1, m2, probe) {
            return Err(CategoryError::NotACocone(i));
        }
        outcomes.push(mediators(candidate, probe)?);
    }
    Ok(UniversalReport { outcomes })
}

fn is_cocone(m1: &MdpMorphism, m2: &MdpMorphism, probe: &Cocone) -> bool {
    if !same_mdp(probe.left.target(), &probe.apex) || !same_mdp(probe.right.target(), &probe.apex) {
        return false;
    }
    match (compose(m1, &probe.left), compose(m2, &probe.right)) {
        (Ok(a), Ok(b)) => a.state_map() == b.state_map() && a.action_map() == b.action_map(),
        _ => false,
    }
}

/// Values forced on the candidate by the two legs; `Err` on conflict.
fn forced<T: Copy + PartialEq>(
    len: usize,
    constraints: impl Iterator<Item = (usize, T)>,
) -> Result<Vec<Option<T>>, ()> {
    let mut out = vec![None; len];
    for (slot, value) in constraints {
        match out[slot] {
            Some(v) if v != value => return Err(()),
            _ => out[slot] = Some(value),
        }
    }
    Ok(out)
}

fn mediators(candidate: &Pushout, probe: &Cocone) -> Result<Mediation, CategoryError> {
    let (w, w0) = (&candidate.mdp, &probe.apex);
    let (l1, l2) = (&candidate.leg1, &candidate.leg2);
    if !same_mdp(l1.source(), probe.left.source()) || !same_mdp(l2.source(), probe.right.source()) {
        return Ok(Mediation::None);
    }

    let state_constraints = l1
        .state_map()
        .iter()
        .zip(probe.left.state_map())
        .chain(l2.state_map().iter().zip(probe.right.state_map()))
        .map(|(c, v)| (c.0, *v));
    let Ok(forced_states) = forced(w.n_states(), state_constraints) else {
        return Ok(Mediation::None);
    };
    let action_constraints = l1
        .action_map()
        .iter()
        .zip(probe.left.action_map())
        .chain(l2.action_map().iter().zip(probe.right.action_map()))
        .map(|(c, v)| (c.0, *v));
    let Ok(forced_actions) = forced(w.n_actions(), action_constraints) else {
        return Ok(Mediation::None);
    };

    let free: Vec<usize> = (0..w.n_states()).filter(|&i| forced_states[i].is_none()).collect();
    if !free.is_empty() && w0.n_states() == 0 {
        return Ok(Mediation::None);
    }
    let space = (w0.n_states() as u128).checked_pow(free.len() as u32).unwrap_or(u128::MAX);
    if space > SEARCH_LIMIT {
        return Err(CategoryError::SearchTooLarge(space));
    }

    let compatible = |b: ActionId, y: ActionId, sm: &[StateId]| {
        w0.anchor(y) == sm[w.anchor(b).0]
            && pushforward(sm, w.transition(b)).max_deviation(w0.transition(y)) <= COMPAT_TOL
            && (w.reward(b) - w0.reward(y)).abs() <= COMPAT_TOL
    };

    let mut state_map: Vec<StateId> = forced_states.iter().map(|s| s.unwrap_or(StateId(0))).collect();
    let mut digits = vec![0usize; free.len()];
    let mut found: Option<(Vec<StateId>, Vec<ActionId>)> = None;
    let mut total: u128 = 0;
    loop {
        for (d, &slot) in digits.iter().zip(&free) {
            state_map[slot] = StateId(*d);
        }
        let mut count: u128 = 1;
        let mut chosen = Vec::with_capacity(w.n_actions());
        for b in w.action_ids() {
            match forced_actions[b.0] {
                Some(y) => {
                    if !compatible(b, y, &state_map) {
                        count = 0;
                        break;
                    }
                    chosen.push(y);
                }
                None => {
                    let cands: Vec<ActionId> = w0
                        .actions_at(state_map[w.anchor(b).0])
                        .iter()
                        .copied()
                        .filter(|&y| compatible(b, y, &state_map))
                        .collect();
                    if cands.is_empty() {
                        count = 0;
                        break;
                    }
                    count *= cands.len() as u128;
                    chosen.push(cands[0]);
                }
            }
        }
        total += count;
        if total >= 2 {
            return Ok(Mediation::Multiple);
        }
        if count == 1 {
            found = Some((state_map.clone(), chosen));
        }
        // odometer over the free states
        let mut k = 0;
        while k < digits.len() {
            digits[k] += 1;
            if digits[k] < w0.n_states() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
        if k == digits.len() {
            break;
        }
    }
    match found {
        Some((sm, am)) => Ok(Mediation::Unique(MdpMorphism::new(w.clone(), w0.clone(), sm, am)?)),
        None => Ok(Mediation::None),
    }
}
