//! JSON export. Objects are keyed by name and serde_json keeps keys sorted,
//! so output is stable across runs.

use mdpcat_core::mdp::{FiniteMdp, Policy, ValueFunction};
use mdpcat_core::solve::LearningCurve;
use mdpcat_core::zigzag::Composite;
use serde_json::{json, Map, Value as Json};

use crate::{Value, Workspace};

fn mdp_json(m: &FiniteMdp) -> Json {
    let actions: Vec<Json> = m
        .actions()
        .iter()
        .map(|a| {
            let row: Map<String, Json> = a
                .transition
                .support()
                .iter()
                .map(|&(s, p)| (m.state_name(s).to_string(), json!(p)))
                .collect();
            json!({
                "name": a.name,
                "anchor": m.state_name(a.anchor),
                "reward": a.reward,
                "transition": row,
            })
        })
        .collect();
    json!({ "states": m.state_names(), "actions": actions })
}

pub fn workspace_json(w: &Workspace) -> Json {
    let mdps: Map<String, Json> = w.mdps.iter().map(|(n, m)| (n.clone(), mdp_json(m))).collect();
    let morphisms: Map<String, Json> = w
        .morphisms
        .iter()
        .map(|(n, d)| {
            let (src, tgt) = (&w.mdps[&d.source], &w.mdps[&d.target]);
            let states: Map<String, Json> = d
                .state_map
                .iter()
                .enumerate()
                .map(|(i, t)| (src.state_names()[i].clone(), json!(tgt.state_name(*t))))
                .collect();
            let actions: Map<String, Json> = d
                .action_map
                .iter()
                .enumerate()
                .map(|(i, t)| (src.actions()[i].name.clone(), json!(tgt.action(*t).name)))
                .collect();
            let body = json!({
                "source": d.source,
                "target": d.target,
                "states": states,
                "actions": actions,
            });
            (n.clone(), body)
        })
        .collect();
    let zigzags: Map<String, Json> = w
        .zigzags
        .iter()
        .map(|(n, z)| {
            let overlaps: Vec<Json> = z
                .overlaps
                .iter()
                .map(|o| json!({ "mdp": o.mdp, "left": o.left, "right": o.right }))
                .collect();
            (n.clone(), json!({ "stages": z.stages, "overlaps": overlaps }))
        })
        .collect();
    let experiments: Map<String, Json> = w
        .experiments
        .iter()
        .map(|(n, e)| {
            let params: Map<String, Json> = e
                .params
                .iter()
                .map(|(k, v)| {
                    let v = match v {
                        Value::Int(i) => json!(i),
                        Value::Float(f) => json!(f),
                        Value::Word(s) => json!(s),
                    };
                    (k.clone(), v)
                })
                .collect();
            (n.clone(), Json::Object(params))
        })
        .collect();
    json!({
        "mdps": mdps,
        "morphisms": morphisms,
        "zigzags": zigzags,
        "experiments": experiments,
    })
}

/// Values keyed by state name.
pub fn values_json(m: &FiniteMdp, v: &ValueFunction) -> Json {
    let map: Map<String, Json> = m
        .states()
        .map(|s| (m.state_name(s).to_string(), json!(v.get(s))))
        .collect();
    Json::Object(map)
}

/// Chosen action name per state, `null` where the fiber is empty.
pub fn policy_json(m: &FiniteMdp, p: &Policy) -> Json {
    let map: Map<String, Json> = m
        .states()
        .map(|s| {
            let a = p.action(s).map(|a| m.action_name(a).to_string());
            (m.state_name(s).to_string(), json!(a))
        })
        .collect();
    Json::Object(map)
}

/// `[step, success_rate, mean_return]` triples.
pub fn curve_json(c: &LearningCurve) -> Json {
    Json::Array(
        c.points
            .iter()
            .map(|p| json!([p.step, p.success_rate, p.mean_return]))
            .collect(),
    )
}

pub fn composite_json(c: &Composite) -> Json {
    let m = &c.mdp;
    let stages: Map<String, Json> = m
        .states()
        .map(|s| (m.state_name(s).to_string(), json!(c.stage_of_state[s.0])))
        .collect();
    let embeddings: Vec<Json> = c
        .embeddings
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let src = e.source();
            let states: Map<String, Json> = src
                .states()
                .map(|s| (src.state_name(s).to_string(), json!(m.state_name(e.map_state(s)))))
                .collect();
            let actions: Map<String, Json> = src
                .action_ids()
                .map(|a| (src.action_name(a).to_string(), json!(m.action_name(e.map_action(a)))))
                .collect();
            json!({ "stage": c.first_stage + k, "states": states, "actions": actions })
        })
        .collect();
    json!({
        "mdp": mdp_json(m),
        "first_stage": c.first_stage,
        "stage_of_state": stages,
        "embeddings": embeddings,
    })
}

/// Pretty-printed text of an exported value, newline terminated.
pub fn export_structured(v: &Json) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

