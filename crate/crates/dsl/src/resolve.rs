//! Name resolution and semantic checks over the raw declarations of all files.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use mdpcat_core::mdp::{ActionId, ActionSpec, FiniteMdp, StateId};

use crate::lexer::Token;
use crate::parser::{error_at, RawFile, RawMdp, RawMorphism, RawValue, RawZigZag, ZigZagItem};
use crate::{Experiment, MorphismDecl, OverlapDecl, ParseError, Value, Workspace, ZigZagDecl};

/// Rows whose mass is within this of 1 are accepted.
const ROW_TOL: f64 = 1e-9;

struct Resolver<'a> {
    files: &'a [String],
    errors: Vec<ParseError>,
    /// Names declared in each namespace, including blocks that failed to build.
    declared_mdps: HashSet<String>,
    declared_morphisms: HashSet<String>,
    morphism_ends: HashMap<String, (String, String)>,
    ws: Workspace,
}

impl Resolver<'_> {
    fn err(&mut self, tok: &Token, message: impl Into<String>) {
        self.errors.push(error_at(self.files, tok, message));
    }

    fn unresolved(&mut self, kind: &str, tok: &Token) {
        self.err(tok, format!("unresolved reference to {kind} `{}`", tok.text));
    }

    /// Registers `name`; reports and returns false on a duplicate.
    fn declare(&mut self, kind: &str, seen: &mut HashSet<String>, tok: &Token) -> bool {
        if seen.insert(tok.text.clone()) {
            true
        } else {
            self.err(tok, format!("duplicate {kind} `{}`", tok.text));
            false
        }
    }

    fn mdp(&mut self, raw: &RawMdp) {
        let mut declared = std::mem::take(&mut self.declared_mdps);
        let fresh = self.declare("mdp", &mut declared, &raw.name);
        self.declared_mdps = declared;
        if !fresh {
            return;
        }
        let before = self.errors.len();
        let mut states: HashSet<String> = HashSet::new();
        let mut state_names = Vec::new();
        for s in &raw.states {
            if self.declare("state", &mut states, s) {
                state_names.push(s.text.clone());
            }
        }
        let mut actions: HashMap<String, usize> = HashMap::new();
        let mut kept = Vec::new();
        for a in &raw.actions {
            if actions.contains_key(&a.name.text) {
                self.err(&a.name, format!("duplicate action `{}`", a.name.text));
                continue;
            }
            if !states.contains(&a.anchor.text) {
                self.unresolved("state", &a.anchor);
            }
            actions.insert(a.name.text.clone(), kept.len());
            kept.push(a);
        }
        let mut rows: Vec<Option<Vec<(String, f64)>>> = vec![None; kept.len()];
        for t in &raw.trans {
            let Some(&i) = actions.get(&t.action.text) else {
                self.unresolved("action", &t.action);
                continue;
            };
            if rows[i].is_some() {
                self.err(&t.action, format!("duplicate transition row for action `{}`", t.action.text));
                continue;
            }
            if let Some(s) = &t.anchor {
                if !states.contains(&s.text) {
                    self.unresolved("state", s);
                } else if s.text != kept[i].anchor.text {
                    self.err(s, format!("`{}` is not the anchor of `{}`", s.text, t.action.text));
                }
            }
            let mut seen = HashSet::new();
            let mut row = Vec::new();
            let mut sum = 0.0;
            for (s, p, ptok) in &t.entries {
                if !states.contains(&s.text) {
                    self.unresolved("state", s);
                } else if !seen.insert(&s.text) {
                    self.err(s, format!("duplicate support state `{}`", s.text));
                }
                if *p < 0.0 {
                    self.err(ptok, "negative probability");
                }
                sum += p;
                row.push((s.text.clone(), *p));
            }
            if (sum - 1.0).abs() > ROW_TOL {
                self.err(&t.action, format!("non-stochastic row for `{}` (mass {sum})", t.action.text));
            }
            rows[i] = Some(row);
        }
        let mut specs = Vec::new();
        for (a, row) in kept.iter().zip(rows) {
            match row {
                Some(row) => specs.push(ActionSpec {
                    name: a.name.text.clone(),
                    anchor: a.anchor.text.clone(),
                    transition: row,
                    reward: a.reward,
                }),
                None => self.err(&a.name, format!("action `{}` has no trans row", a.name.text)),
            }
        }
        if self.errors.len() > before {
            return;
        }
        match FiniteMdp::new(state_names, specs) {
            Ok(m) => {
                self.ws.mdps.insert(raw.name.text.clone(), Arc::new(m));
            }
            Err(e) => self.err(&raw.name, e.to_string()),
        }
    }

    fn morphism(&mut self, raw: &RawMorphism) {
        let mut declared = std::mem::take(&mut self.declared_morphisms);
        let fresh = self.declare("morphism", &mut declared, &raw.name);
        self.declared_morphisms = declared;
        if !fresh {
            return;
        }
        self.morphism_ends
            .insert(raw.name.text.clone(), (raw.source.text.clone(), raw.target.text.clone()));
        let mut ends = Vec::new();
        for t in [&raw.source, &raw.target] {
            if !self.declared_mdps.contains(&t.text) {
                self.unresolved("mdp", t);
            }
            ends.push(self.ws.mdps.get(&t.text).cloned());
        }
        // a broken endpoint has already been reported
        let (Some(src), Some(tgt)) = (ends[0].clone(), ends[1].clone()) else {
            return;
        };
        let before = self.errors.len();
        let state_map = self.map(
            &raw.states,
            &raw.name,
            "state",
            src.n_states(),
            |n| src.state_id(n).map(|s| s.0),
            |n| tgt.state_id(n).map(|s| s.0),
            |i| src.state_name(StateId(i)).to_string(),
        );
        let action_map = self.map(
            &raw.actions,
            &raw.name,
            "action",
            src.n_actions(),
            |n| src.action_id(n).map(|a| a.0),
            |n| tgt.action_id(n).map(|a| a.0),
            |i| src.action_name(ActionId(i)).to_string(),
        );
        if self.errors.len() > before {
            return;
        }
        self.ws.morphisms.insert(
            raw.name.text.clone(),
            MorphismDecl {
                source: raw.source.text.clone(),
                target: raw.target.text.clone(),
                state_map: state_map.into_iter().map(StateId).collect(),
                action_map: action_map.into_iter().map(ActionId).collect(),
            },
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn map(
        &mut self,
        pairs: &[(Token, Token)],
        name: &Token,
        kind: &str,
        n: usize,
        from: impl Fn(&str) -> Option<usize>,
        to: impl Fn(&str) -> Option<usize>,
        label: impl Fn(usize) -> String,
    ) -> Vec<usize> {
        let mut out: Vec<Option<usize>> = vec![None; n];
        // sources named in some entry, even one with an unresolved target
        let mut named = vec![false; n];
        for (a, b) in pairs {
            let i = from(&a.text);
            let j = to(&b.text);
            if i.is_none() {
                self.unresolved(kind, a);
            }
            if j.is_none() {
                self.unresolved(kind, b);
            }
            if let Some(i) = i {
                if named[i] {
                    self.err(a, format!("{kind} `{}` is mapped twice", a.text));
                }
                named[i] = true;
                out[i] = out[i].or(j);
            }
        }
        let missing: Vec<String> = (0..n).filter(|&i| !named[i]).map(&label).collect();
        if !missing.is_empty() {
            self.err(
                name,
                format!("morphism `{}` does not map {kind}s {}", name.text, missing.join(", ")),
            );
        }
        out.into_iter().flatten().collect()
    }

    fn zigzag(&mut self, raw: &RawZigZag, seen: &mut HashSet<String>) {
        if !self.declare("zigzag", seen, &raw.name) {
            return;
        }
        let before = self.errors.len();
        let mut stages: Vec<&Token> = Vec::new();
        let mut overlaps: Vec<(&Token, &Token, &Token)> = Vec::new();
        for (kw, item) in &raw.items {
            let want_stage = stages.len() == overlaps.len();
            match item {
                ZigZagItem::Stage(m) if want_stage => stages.push(m),
                ZigZagItem::Overlap { mdp, left, right } if !want_stage => overlaps.push((mdp, left, right)),
                ZigZagItem::Stage(_) => self.err(kw, "expected `overlap` between two stages"),
                ZigZagItem::Overlap { .. } => self.err(kw, "expected `stage` before an overlap"),
            }
        }
        if stages.is_empty() {
            self.err(&raw.name, format!("zig-zag `{}` has no stages", raw.name.text));
        } else if stages.len() == overlaps.len() {
            self.err(&raw.close, "zig-zag must end with a stage");
        }
        for m in &stages {
            if !self.declared_mdps.contains(&m.text) {
                self.unresolved("mdp", m);
            }
        }
        for (i, (n, l, r)) in overlaps.iter().enumerate() {
            if !self.declared_mdps.contains(&n.text) {
                self.unresolved("mdp", n);
            }
            for (leg, stage) in [(l, stages.get(i)), (r, stages.get(i + 1))] {
                let Some((src, tgt)) = self.morphism_ends.get(&leg.text).cloned() else {
                    self.unresolved("morphism", leg);
                    continue;
                };
                let Some(stage) = stage else { continue };
                if src != n.text || tgt != stage.text {
                    self.err(
                        leg,
                        format!("leg `{}` runs `{src} -> {tgt}`, expected `{} -> {}`", leg.text, n.text, stage.text),
                    );
                }
            }
        }
        if self.errors.len() > before {
            return;
        }
        let decl = ZigZagDecl {
            stages: stages.iter().map(|t| t.text.clone()).collect(),
            overlaps: overlaps
                .iter()
                .map(|(n, l, r)| OverlapDecl {
                    mdp: n.text.clone(),
                    left: l.text.clone(),
                    right: r.text.clone(),
                })
                .collect(),
        };
        self.ws.zigzags.insert(raw.name.text.clone(), decl);
    }
}

pub(crate) fn resolve(raws: Vec<RawFile>, files: &[String]) -> (Workspace, Vec<ParseError>) {
    let mut r = Resolver {
        files,
        errors: Vec::new(),
        declared_mdps: HashSet::new(),
        declared_morphisms: HashSet::new(),
        morphism_ends: HashMap::new(),
        ws: Workspace::default(),
    };
    for raw in raws.iter().flat_map(|f| &f.mdps) {
        r.mdp(raw);
    }
    for raw in raws.iter().flat_map(|f| &f.morphisms) {
        r.morphism(raw);
    }
    let mut seen = HashSet::new();
    for raw in raws.iter().flat_map(|f| &f.zigzags) {
        r.zigzag(raw, &mut seen);
    }
    let mut seen = HashSet::new();
    for raw in raws.iter().flat_map(|f| &f.experiments) {
        if !r.declare("experiment", &mut seen, &raw.name) {
            continue;
        }
        let mut params = BTreeMap::new();
        for (key, value) in &raw.params {
            let value = match value {
                RawValue::Int(v) => Value::Int(*v),
                RawValue::Float(v) => Value::Float(*v),
                RawValue::Word(w) => Value::Word(w.clone()),
            };
            if params.insert(key.text.clone(), value).is_some() {
                r.err(key, format!("duplicate parameter `{}`", key.text));
            }
        }
        r.ws.experiments.insert(raw.name.text.clone(), Experiment { params });
    }
    (r.ws, r.errors)
}
