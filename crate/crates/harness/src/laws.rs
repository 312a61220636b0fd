//! Randomized checks of the category laws, pushouts and subprocesses.

use mdpcat_core::category::{
    check_morphism, check_pushout_universal, compose, factor_through_max, identity, max_subprocess,
    pushout, Cocone, MdpMorphism, SubprocessWitness,
};
use mdpcat_core::gen::{random_morphism, random_span, random_subprocess_span, random_triple};
use mdpcat_core::mdp::StateId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Passed and failed instances of one law.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LawCount {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
}

impl LawCount {
    fn record(&mut self, ok: bool) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
    }
}

fn same_maps(a: &MdpMorphism, b: &MdpMorphism) -> bool {
    a.state_map() == b.state_map() && a.action_map() == b.action_map()
}

/// Unitality and associativity on random composable triples.
pub fn category_laws(rng: &mut impl Rng, max_states: usize) -> bool {
    let (f, g, h) = random_triple(rng, max_states);
    let left = compose(&identity(f.source()), &f).is_ok_and(|x| same_maps(&x, &f));
    let right = compose(&f, &identity(f.target())).is_ok_and(|x| same_maps(&x, &f));
    let assoc = match (
        compose(&f, &g).and_then(|fg| compose(&fg, &h)),
        compose(&g, &h).and_then(|gh| compose(&f, &gh)),
    ) {
        (Ok(a), Ok(b)) => same_maps(&a, &b),
        _ => false,
    };
    left && right && assoc
}

/// Probe cocones for a span: the candidate's legs followed by random
/// morphisms out of its apex, `count` of them.
pub fn probe_cocones(rng: &mut impl Rng, legs: (&MdpMorphism, &MdpMorphism), count: usize, max_states: usize) -> Vec<Cocone> {
    let apex = legs.0.target();
    (0..count)
        .map(|_| {
            let w = random_morphism(rng, apex, max_states);
            Cocone {
                apex: w.target().clone(),
                left: compose(legs.0, &w).expect("composable"),
                right: compose(legs.1, &w).expect("composable"),
            }
        })
        .collect()
}

/// Legs validate, the square commutes, and every probe mediates uniquely.
pub fn pushout_law(rng: &mut impl Rng, max_states: usize, probes: usize) -> bool {
    let (m1, m2) = random_span(rng, max_states);
    let Ok(p) = pushout(&m1, &m2) else {
        return false;
    };
    let valid = [&p.leg1, &p.leg2].iter().all(|l| {
        check_morphism(l.source(), l.target(), l.state_map(), l.action_map()).is_valid()
    });
    let commutes = match (compose(&m1, &p.leg1), compose(&m2, &p.leg2)) {
        (Ok(a), Ok(b)) => same_maps(&a, &b),
        _ => false,
    };
    let cocones = probe_cocones(rng, (&p.leg1, &p.leg2), probes, max_states + 2);
    let universal = check_pushout_universal(&m1, &m2, &p, &cocones).is_ok_and(|r| r.holds());
    valid && commutes && universal
}

/// Gluing two subprocess inclusions gives subprocess legs.
pub fn gluing_law(rng: &mut impl Rng, max_states: usize) -> bool {
    let (l, r) = random_subprocess_span(rng, max_states);
    match pushout(l.morphism(), r.morphism()) {
        Ok(p) => SubprocessWitness::new(p.leg1).is_ok() && SubprocessWitness::new(p.leg2).is_ok(),
        Err(_) => false,
    }
}

/// A subprocess on the same state image factors through the maximal one.
pub fn maximality_law(rng: &mut impl Rng, max_states: usize) -> bool {
    let (l, _) = random_subprocess_span(rng, max_states);
    let m = l.morphism().target().clone();
    let image: Vec<StateId> = l.state_image();
    if image.is_empty() {
        return true;
    }
    let Ok((_, max)) = max_subprocess(&m, &image) else {
        return false;
    };
    match factor_through_max(&l, &max) {
        Ok(u) => compose(&u, max.morphism()).is_ok_and(|x| same_maps(&x, l.morphism())),
        Err(_) => false,
    }
}

/// Runs `instances` instances of every law from `seed`.
pub fn run_laws(instances: usize, seed: u64) -> Vec<LawCount> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [
        LawCount { name: "unitality and associativity", ..Default::default() },
        LawCount { name: "pushout universality", ..Default::default() },
        LawCount { name: "gluing preserves subprocesses", ..Default::default() },
        LawCount { name: "maximal subprocess factoring", ..Default::default() },
    ];
    for _ in 0..instances {
        counts[0].record(category_laws(&mut rng, 6));
        counts[1].record(pushout_law(&mut rng, 5, 20));
        counts[2].record(gluing_law(&mut rng, 5));
        counts[3].record(maximality_law(&mut rng, 5));
    }
    counts.to_vec()
}
