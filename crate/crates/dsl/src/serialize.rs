use std::fmt::Write;

use mdpcat_core::mdp::{ActionId, StateId};

use crate::Workspace;

/// Canonical text for `w`: blocks grouped by kind and sorted by name, one
/// statement per line, numbers in shortest round-trip form.
pub fn serialize_workspace(w: &Workspace) -> String {
    let mut out = String::new();
    let mut blocks = Vec::new();
    for (name, m) in &w.mdps {
        let mut b = format!("mdp {name} {{\n");
        if m.n_states() > 0 {
            writeln!(b, "  states {}", m.state_names().join(" ")).unwrap();
        }
        for a in m.actions() {
            writeln!(b, "  action {} at {} reward {}", a.name, m.state_name(a.anchor), a.reward).unwrap();
        }
        for a in m.actions() {
            let row: Vec<String> = a
                .transition
                .support()
                .iter()
                .map(|&(s, p)| format!("{} {p}", m.state_name(s)))
                .collect();
            writeln!(b, "  trans {} : {}", a.name, row.join(", ")).unwrap();
        }
        b.push('}');
        blocks.push(b);
    }
    for (name, d) in &w.morphisms {
        let (src, tgt) = (&w.mdps[&d.source], &w.mdps[&d.target]);
        let mut b = format!("morphism {name} : {} -> {} {{\n", d.source, d.target);
        for (i, t) in d.state_map.iter().enumerate() {
            writeln!(b, "  state {} -> {}", src.state_name(StateId(i)), tgt.state_name(*t)).unwrap();
        }
        for (i, t) in d.action_map.iter().enumerate() {
            writeln!(b, "  action {} -> {}", src.action_name(ActionId(i)), tgt.action_name(*t)).unwrap();
        }
        b.push('}');
        blocks.push(b);
    }
    for (name, z) in &w.zigzags {
        let mut b = format!("zigzag {name} {{\n");
        for (i, stage) in z.stages.iter().enumerate() {
            writeln!(b, "  stage {stage}").unwrap();
            if let Some(o) = z.overlaps.get(i) {
                writeln!(b, "  overlap {} left {} right {}", o.mdp, o.left, o.right).unwrap();
            }
        }
        b.push('}');
        blocks.push(b);
    }
    for (name, e) in &w.experiments {
        let mut b = format!("experiment {name} {{\n");
        for (k, v) in &e.params {
            writeln!(b, "  {k} {v}").unwrap();
        }
        b.push('}');
        blocks.push(b);
    }
    for b in blocks {
        out.push_str(&b);
        out.push_str("\n\n");
    }
    out.truncate(out.trim_end().len());
    if !out.is_empty() {
        out.push('\n');
    }
    out
}
