//! A line-oriented language for workspaces of named MDPs, morphisms,
//! zig-zags and experiment configurations.
//!
//! ```text
//! mdp chain {
//!   states s0 s1
//!   action a0 at s0 reward 1
//!   trans a0 : s1 1
//! }
//! morphism f : chain -> chain { state s0 -> s0 ; state s1 -> s1 ; action a0 -> a0 }
//! zigzag z { stage chain }
//! experiment e { gamma 0.95 seed 3 }
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use mdpcat_core::category::{CategoryError, MdpMorphism, SubprocessWitness};
use mdpcat_core::mdp::{ActionId, FiniteMdp, StateId};
use mdpcat_core::zigzag::{ZigZag, ZigZagError};

mod export;
pub mod gen;
mod lexer;
mod parser;
mod resolve;
mod serialize;

pub use export::{
    composite_json, curve_json, export_structured, policy_json, values_json, workspace_json,
};
pub use serialize::serialize_workspace;

/// A located diagnostic. `line` and `column` are 1-based and count
/// characters; `token` is the source text found there.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{file}:{line}:{column}: {message}{}", if token.is_empty() { String::new() } else { format!(" (at `{token}`)") })]
pub struct ParseError {
    pub file: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub token: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DslError {
    #[error("`{0}` is not a valid name")]
    InvalidName(String),
    #[error("duplicate {kind} `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("unresolved reference to {kind} `{name}`")]
    Unresolved { kind: &'static str, name: String },
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Category(#[from] CategoryError),
    #[error(transparent)]
    ZigZag(#[from] ZigZagError),
}

/// A morphism declaration: maps stored by index into the named MDPs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MorphismDecl {
    pub source: String,
    pub target: String,
    pub state_map: Vec<StateId>,
    pub action_map: Vec<ActionId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlapDecl {
    pub mdp: String,
    pub left: String,
    pub right: String,
}

/// Stage names `M_0..M_n` and the `n` overlaps between them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZigZagDecl {
    pub stages: Vec<String>,
    pub overlaps: Vec<OverlapDecl>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Word(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            // keep a decimal point so the value reads back as a float
            Value::Float(v) if v.fract() == 0.0 => write!(f, "{v:.1}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Word(w) => f.write_str(w),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Experiment {
    pub params: BTreeMap<String, Value>,
}

impl Experiment {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.params.get(key)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        match self.params.get(key)? {
            Value::Int(v) => Some(*v as f64),
            Value::Float(v) => Some(*v),
            Value::Word(_) => None,
        }
    }

    pub fn get_u64(&self, key: &str) -> Option<u64> {
        match self.params.get(key)? {
            Value::Int(v) => u64::try_from(*v).ok(),
            _ => None,
        }
    }

    pub fn get_word(&self, key: &str) -> Option<&str> {
        match self.params.get(key)? {
            Value::Word(w) => Some(w),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Workspace {
    pub mdps: BTreeMap<String, Arc<FiniteMdp>>,
    pub morphisms: BTreeMap<String, MorphismDecl>,
    pub zigzags: BTreeMap<String, ZigZagDecl>,
    pub experiments: BTreeMap<String, Experiment>,
}

fn check_name(name: &str) -> Result<(), DslError> {
    if lexer::is_ident(name) {
        Ok(())
    } else {
        Err(DslError::InvalidName(name.to_string()))
    }
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_mdp(&mut self, name: &str, m: impl Into<Arc<FiniteMdp>>) -> Result<(), DslError> {
        let m = m.into();
        check_name(name)?;
        for n in m.state_names() {
            check_name(n)?;
        }
        for a in m.actions() {
            check_name(&a.name)?;
        }
        if self.mdps.contains_key(name) {
            return Err(DslError::Duplicate {
                kind: "mdp",
                name: name.into(),
            });
        }
        self.mdps.insert(name.to_string(), m);
        Ok(())
    }

    /// Records `f` as a morphism between the named MDPs, which must hold the
    /// same data as its source and target.
    pub fn add_morphism(&mut self, name: &str, source: &str, target: &str, f: &MdpMorphism) -> Result<(), DslError> {
        check_name(name)?;
        if self.morphisms.contains_key(name) {
            return Err(DslError::Duplicate {
                kind: "morphism",
                name: name.into(),
            });
        }
        if **self.mdp(source)? != **f.source() || **self.mdp(target)? != **f.target() {
            return Err(DslError::Mismatch(format!(
                "morphism `{name}` does not run `{source} -> {target}`"
            )));
        }
        self.morphisms.insert(
            name.to_string(),
            MorphismDecl {
                source: source.into(),
                target: target.into(),
                state_map: f.state_map().to_vec(),
                action_map: f.action_map().to_vec(),
            },
        );
        Ok(())
    }

    pub fn add_zigzag(&mut self, name: &str, decl: ZigZagDecl) -> Result<(), DslError> {
        check_name(name)?;
        if self.zigzags.contains_key(name) {
            return Err(DslError::Duplicate {
                kind: "zigzag",
                name: name.into(),
            });
        }
        if decl.stages.is_empty() || decl.overlaps.len() + 1 != decl.stages.len() {
            return Err(DslError::Mismatch(format!(
                "zig-zag `{name}` needs one overlap between consecutive stages"
            )));
        }
        for s in &decl.stages {
            self.mdp(s)?;
        }
        for (i, o) in decl.overlaps.iter().enumerate() {
            self.mdp(&o.mdp)?;
            for (leg, tgt) in [(&o.left, &decl.stages[i]), (&o.right, &decl.stages[i + 1])] {
                let m = self.morphism_decl(leg)?;
                if m.source != o.mdp || &m.target != tgt {
                    return Err(DslError::Mismatch(format!(
                        "leg `{leg}` runs `{} -> {}`, expected `{} -> {tgt}`",
                        m.source, m.target, o.mdp
                    )));
                }
            }
        }
        self.zigzags.insert(name.to_string(), decl);
        Ok(())
    }

    pub fn add_experiment(&mut self, name: &str, e: Experiment) -> Result<(), DslError> {
        check_name(name)?;
        for k in e.params.keys() {
            check_name(k)?;
        }
        for v in e.params.values() {
            match v {
                Value::Word(w) => check_name(w)?,
                Value::Float(f) if !f.is_finite() => return Err(DslError::Mismatch(format!("non-finite value {f}"))),
                _ => {}
            }
        }
        if self.experiments.contains_key(name) {
            return Err(DslError::Duplicate {
                kind: "experiment",
                name: name.into(),
            });
        }
        self.experiments.insert(name.to_string(), e);
        Ok(())
    }

    pub fn mdp(&self, name: &str) -> Result<&Arc<FiniteMdp>, DslError> {
        self.mdps.get(name).ok_or_else(|| DslError::Unresolved {
            kind: "mdp",
            name: name.into(),
        })
    }

    pub fn morphism_decl(&self, name: &str) -> Result<&MorphismDecl, DslError> {
        self.morphisms.get(name).ok_or_else(|| DslError::Unresolved {
            kind: "morphism",
            name: name.into(),
        })
    }

    /// The named morphism, checked against the morphism conditions.
    pub fn morphism(&self, name: &str) -> Result<MdpMorphism, DslError> {
        let d = self.morphism_decl(name)?;
        Ok(MdpMorphism::new(
            self.mdp(&d.source)?.clone(),
            self.mdp(&d.target)?.clone(),
            d.state_map.clone(),
            d.action_map.clone(),
        )?)
    }

    /// Builds the named zig-zag; left legs must be subprocesses.
    pub fn zigzag(&self, name: &str) -> Result<ZigZag, DslError> {
        let d = self.zigzags.get(name).ok_or_else(|| DslError::Unresolved {
            kind: "zigzag",
            name: name.into(),
        })?;
        let stages = d
            .stages
            .iter()
            .map(|s| self.mdp(s).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        let mut left = Vec::new();
        let mut right = Vec::new();
        for o in &d.overlaps {
            left.push(SubprocessWitness::new(self.morphism(&o.left)?)?);
            right.push(self.morphism(&o.right)?);
        }
        Ok(ZigZag::new(stages, left, right)?)
    }

    pub fn experiment(&self, name: &str) -> Result<&Experiment, DslError> {
        self.experiments.get(name).ok_or_else(|| DslError::Unresolved {
            kind: "experiment",
            name: name.into(),
        })
    }
}

/// Parses one source text. `file` is only used in diagnostics.
pub fn parse_workspace(file: &str, text: &str) -> Result<Workspace, Vec<ParseError>> {
    parse_files(&[(file.to_string(), text.to_string())])
}

/// Parses several files as one workspace. Files are tokenized and parsed in
/// parallel; names are resolved across all of them.
pub fn parse_files(files: &[(String, String)]) -> Result<Workspace, Vec<ParseError>> {
    let names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .iter()
            .enumerate()
            .map(|(i, (_, text))| {
                let names = &names;
                scope.spawn(move || {
                    let toks = lexer::tokenize(text, i);
                    parser::parse_tokens(&toks, names)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("parser thread panicked"))
            .collect()
    });
    let mut errors = Vec::new();
    let mut raws = Vec::new();
    for (raw, errs) in results {
        raws.push(raw);
        errors.extend(errs);
    }
    let (ws, errs) = resolve::resolve(raws, &names);
    errors.extend(errs);
    if errors.is_empty() {
        Ok(ws)
    } else {
        Err(errors)
    }
}
