//! Random workspaces for round-trip testing.

use std::sync::Arc;

use mdpcat_core::gen::{random_forward_zigzag, random_mdp, random_morphism, Rewards};
use mdpcat_core::mdp::{Action, FiniteMdp};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::{Experiment, OverlapDecl, Value, Workspace, ZigZagDecl};

/// Any finite double, drawn from the raw bit patterns.
fn wild_f64<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v = f64::from_bits(rng.gen());
        if v.is_finite() {
            return v;
        }
    }
}

fn wild_rewards<R: Rng + ?Sized>(rng: &mut R, m: FiniteMdp) -> FiniteMdp {
    let actions: Vec<Action> = m
        .actions()
        .iter()
        .map(|a| Action {
            reward: if rng.gen_bool(0.3) { wild_f64(rng) } else { a.reward },
            ..a.clone()
        })
        .collect();
    FiniteMdp::from_parts(m.state_names().to_vec(), actions).expect("same structure")
}

/// A workspace with a few MDPs, morphisms between them, at most one zig-zag
/// and some experiments.
pub fn random_workspace<R: Rng + ?Sized>(rng: &mut R) -> Workspace {
    let mut w = Workspace::new();
    for i in 0..rng.gen_range(0..=3) {
        let n = rng.gen_range(0..=4);
        let m = random_mdp(rng, n, 2, Rewards::Generic);
        let m = Arc::new(wild_rewards(rng, m));
        let name = format!("w{i}");
        w.add_mdp(&name, m.clone()).unwrap();
        if rng.gen_bool(0.6) {
            let f = random_morphism(rng, &m, 6);
            let target = format!("w{i}_t");
            w.add_mdp(&target, f.target().clone()).unwrap();
            w.add_morphism(&format!("f{i}"), &name, &target, &f).unwrap();
        }
    }
    if rng.gen_bool(0.5) {
        let stages = rng.gen_range(1..=3);
        let n = rng.gen_range(2..=4);
        let z = random_forward_zigzag(rng, stages, n);
        let mut decl = ZigZagDecl {
            stages: Vec::new(),
            overlaps: Vec::new(),
        };
        for (i, c) in z.components().iter().enumerate() {
            let name = format!("z_m{i}");
            w.add_mdp(&name, c.clone()).unwrap();
            decl.stages.push(name);
        }
        for (i, (l, r)) in z.left_legs().iter().zip(z.right_legs()).enumerate() {
            let o = OverlapDecl {
                mdp: format!("z_n{i}"),
                left: format!("z_l{i}"),
                right: format!("z_r{i}"),
            };
            w.add_mdp(&o.mdp, z.overlap(i).clone()).unwrap();
            w.add_morphism(&o.left, &o.mdp, &decl.stages[i], l.morphism()).unwrap();
            w.add_morphism(&o.right, &o.mdp, &decl.stages[i + 1], r).unwrap();
            decl.overlaps.push(o);
        }
        w.add_zigzag("z", decl).unwrap();
    }
    for i in 0..rng.gen_range(0..=2) {
        let mut e = Experiment::default();
        for k in 0..rng.gen_range(0..=4) {
            let v = match rng.gen_range(0..4) {
                0 => Value::Int(rng.gen()),
                1 => Value::Float(wild_f64(rng)),
                2 => Value::Float(rng.gen_range(-5..5) as f64),
                _ => Value::Word(["compositional", "monolithic", "reuse", "recycle"].choose(rng).unwrap().to_string()),
            };
            e.params.insert(format!("k{k}"), v);
        }
        w.add_experiment(&format!("e{i}"), e).unwrap();
    }
    w
}
