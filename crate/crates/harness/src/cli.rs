//! The `mdpcat` command line. Exit codes: 0 success, 1 a check or
//! validation failed, 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use mdpcat_core::category::pushout;
use mdpcat_core::mdp::{Distribution, StateId};
use mdpcat_core::solve::{stage_policies, stitched_value_gap, value_iteration, SolverConfig};
use mdpcat_core::zigzag::{build_composite, check_monotonic, is_forward_moving, ZigZag};
use mdpcat_dsl::{
    composite_json, curve_json, export_structured, parse_files, policy_json, serialize_workspace,
    values_json, Experiment, Workspace,
};
use serde_json::json;

use crate::experiment::{run_all, ExperimentConfig, ExperimentResult};
use crate::laws::run_laws;
use crate::tasks::{build_task_zigzag, TaskKind, TaskZigZag};

#[derive(Parser, Debug)]
#[command(name = "mdpcat", version, about = "Compose, check and solve MDP workspaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse workspace files and check every morphism and zig-zag.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Glue the targets of two morphisms with a common source.
    Pushout { ws: PathBuf, m1: String, m2: String },
    /// Build the composite of a zig-zag.
    Composite {
        ws: PathBuf,
        zigzag: String,
        /// Print the composite and its embeddings as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Optimal values and policy of an MDP or of a zig-zag's composite.
    Solve {
        ws: PathBuf,
        target: String,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Check that a zig-zag is forward-moving and monotonic.
    Monotonic {
        ws: PathBuf,
        zigzag: String,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Run the learning arms of a named experiment block.
    Experiment {
        ws: PathBuf,
        name: String,
        /// Number of seeds, `0..seeds`; overrides the block's `seeds`.
        #[arg(long)]
        seeds: Option<u64>,
        /// Directory for `curves/<arm>_<seed>.csv` and `summary.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check category, pushout and subprocess laws on random instances.
    Laws {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failure with its exit code and message.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn failed(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

/// Runs the CLI on `args` (program name first), writing to `out` and `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(f) => {
            let _ = writeln!(err, "{}", f.message.trim_end());
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> Result<String, Failure> {
    match cmd {
        Command::Validate { files } => validate(&files),
        Command::Pushout { ws, m1, m2 } => glue(&load(&[ws])?, &m1, &m2),
        Command::Composite { ws, zigzag, json } => composite(&load(&[ws])?, &zigzag, json),
        Command::Solve { ws, target, gamma, tol } => solve(&load(&[ws])?, &target, gamma, tol),
        Command::Monotonic { ws, zigzag, gamma, tol } => monotonic(&load(&[ws])?, &zigzag, gamma, tol),
        Command::Experiment { ws, name, seeds, out } => experiment(&load(&[ws])?, &name, seeds, out.as_deref()),
        Command::Laws { instances, seed } => laws(instances, seed),
    }
}

fn read(paths: &[PathBuf]) -> Result<Vec<(String, String)>, Failure> {
    paths
        .iter()
        .map(|p| {
            fs::read_to_string(p)
                .map(|text| (p.display().to_string(), text))
                .map_err(|e| usage(format!("cannot read {}: {e}", p.display())))
        })
        .collect()
}

fn load(paths: &[PathBuf]) -> Result<Workspace, Failure> {
    parse_files(&read(paths)?).map_err(|errs| {
        let mut msg = String::new();
        for e in &errs {
            let _ = writeln!(msg, "{e}");
        }
        let _ = write!(msg, "{} error(s)", errs.len());
        failed(msg)
    })
}

fn validate(files: &[PathBuf]) -> Result<String, Failure> {
    let w = load(files)?;
    let mut problems = String::new();
    for name in w.morphisms.keys() {
        if let Err(e) = w.morphism(name) {
            let _ = writeln!(problems, "morphism `{name}`: {e}");
        }
    }
    for name in w.zigzags.keys() {
        if let Err(e) = w.zigzag(name) {
            let _ = writeln!(problems, "zigzag `{name}`: {e}");
        }
    }
    if !problems.is_empty() {
        return Err(failed(problems));
    }
    Ok(format!(
        "ok: {} mdps, {} morphisms, {} zigzags, {} experiments\n",
        w.mdps.len(),
        w.morphisms.len(),
        w.zigzags.len(),
        w.experiments.len()
    ))
}

fn lookup_zigzag(w: &Workspace, name: &str) -> Result<ZigZag, Failure> {
    if !w.zigzags.contains_key(name) {
        return Err(usage(format!("no zigzag `{name}` in the workspace")));
    }
    w.zigzag(name).map_err(|e| failed(format!("zigzag `{name}`: {e}")))
}

fn glue(w: &Workspace, n1: &str, n2: &str) -> Result<String, Failure> {
    let get = |n: &str| {
        if !w.morphisms.contains_key(n) {
            return Err(usage(format!("no morphism `{n}` in the workspace")));
        }
        w.morphism(n).map_err(|e| failed(format!("morphism `{n}`: {e}")))
    };
    let (m1, m2) = (get(n1)?, get(n2)?);
    let p = pushout(&m1, &m2).map_err(|e| failed(format!("pushout: {e}")))?;
    let mut out = Workspace::new();
    let t1 = w.morphism_decl(n1).expect("checked").target.clone();
    let t2 = w.morphism_decl(n2).expect("checked").target.clone();
    let apex = format!("{n1}_{n2}_pushout");
    let build = |out: &mut Workspace| -> Result<(), mdpcat_dsl::DslError> {
        out.add_mdp(&t1, p.leg1.source().clone())?;
        if t2 != t1 {
            out.add_mdp(&t2, p.leg2.source().clone())?;
        }
        out.add_mdp(&apex, p.mdp.clone())?;
        out.add_morphism(&format!("{apex}_left"), &t1, &apex, &p.leg1)?;
        out.add_morphism(&format!("{apex}_right"), &t2, &apex, &p.leg2)
    };
    build(&mut out).map_err(|e| failed(format!("pushout: {e}")))?;
    Ok(format!(
        "# {} states, {} actions\n{}",
        p.mdp.n_states(),
        p.mdp.n_actions(),
        serialize_workspace(&out)
    ))
}

fn composite(w: &Workspace, name: &str, as_json: bool) -> Result<String, Failure> {
    let z = lookup_zigzag(w, name)?;
    let c = build_composite(&z).map_err(|e| failed(format!("composite: {e}")))?;
    if as_json {
        return Ok(export_structured(&composite_json(&c)));
    }
    let mut out = Workspace::new();
    out.add_mdp(&format!("{name}_composite"), c.mdp.clone())
        .map_err(|e| failed(format!("composite: {e}")))?;
    Ok(format!(
        "# {} stages, {} states, {} actions\n{}",
        z.n_stages(),
        c.mdp.n_states(),
        c.mdp.n_actions(),
        serialize_workspace(&out)
    ))
}

fn solver(gamma: f64, tol: f64) -> Result<SolverConfig, Failure> {
    let cfg = SolverConfig {
        gamma,
        tol,
        ..SolverConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn solve(w: &Workspace, target: &str, gamma: f64, tol: f64) -> Result<String, Failure> {
    let cfg = solver(gamma, tol)?;
    let report = if let Ok(m) = w.mdp(target) {
        let (v, p) = value_iteration(m, &cfg).map_err(|e| failed(e.to_string()))?;
        json!({"mdp": target, "values": values_json(m, &v), "policy": policy_json(m, &p)})
    } else if w.zigzags.contains_key(target) {
        let z = lookup_zigzag(w, target)?;
        let c = build_composite(&z).map_err(|e| failed(e.to_string()))?;
        let (v, p) = value_iteration(&c.mdp, &cfg).map_err(|e| failed(e.to_string()))?;
        let gap = stage_policies(&z, &cfg)
            .and_then(|ps| stitched_value_gap(&z, &c, &ps, &cfg))
            .map_err(|e| failed(e.to_string()))?;
        json!({
            "zigzag": target,
            "values": values_json(&c.mdp, &v),
            "policy": policy_json(&c.mdp, &p),
            "stitched_gap": gap,
        })
    } else {
        return Err(usage(format!("no mdp or zigzag `{target}` in the workspace")));
    };
    Ok(export_structured(&report))
}

fn monotonic(w: &Workspace, name: &str, gamma: f64, tol: f64) -> Result<String, Failure> {
    solver(gamma, tol)?;
    let z = lookup_zigzag(w, name)?;
    let fm = is_forward_moving(&z);
    if !fm.holds() {
        let i = fm.full.iter().position(|f| !f).expect("some overlap is not full");
        return Err(failed(format!("forward-moving: FAIL at overlap {i}")));
    }
    let report = check_monotonic(&z, gamma, tol).map_err(|e| failed(e.to_string()))?;
    let failures: Vec<_> = report.failures().collect();
    if failures.is_empty() {
        return Ok(format!(
            "forward-moving: OK\nmonotonicity: OK ({} states compared)\n",
            report.comparisons.len()
        ));
    }
    let mut msg = String::from("forward-moving: OK\n");
    for f in &failures {
        let m = z.component(f.stage);
        let names = |v: &[mdpcat_core::mdp::ActionId]| v.iter().map(|&a| m.action_name(a)).collect::<Vec<_>>().join(" ");
        let _ = writeln!(
            msg,
            "monotonicity: FAIL at stage {} state {} (local argmax [{}], composite argmax [{}])",
            f.stage,
            m.state_name(f.state),
            names(&f.local),
            names(&f.composite)
        );
    }
    Err(failed(msg))
}

fn laws(instances: usize, seed: u64) -> Result<String, Failure> {
    let counts = run_laws(instances, seed);
    let mut msg = String::new();
    for c in &counts {
        let verdict = if c.failed == 0 { "PASS" } else { "FAIL" };
        let _ = writeln!(msg, "{verdict} {}: {}/{}", c.name, c.passed, c.passed + c.failed);
    }
    if counts.iter().any(|c| c.failed > 0) {
        Err(failed(msg))
    } else {
        Ok(msg)
    }
}

/// Task zig-zag named by an experiment block: `task N`, or `zigzag Z` with
/// `start` and `goal` state names in its first and last stage.
fn experiment_task(w: &Workspace, e: &Experiment, key: &str) -> Result<Option<TaskZigZag>, Failure> {
    if let Some(id) = e.get_u64(key) {
        return build_task_zigzag(id as usize).map(Some).map_err(|err| usage(err.to_string()));
    }
    if let Some(v) = e.get(key) {
        return Err(usage(format!("`{key}` must be a task number, got `{v}`")));
    }
    if key != "task" {
        return Ok(None);
    }
    let Some(name) = e.get_word("zigzag") else {
        return Err(usage("experiment needs `task N` or `zigzag NAME`"));
    };
    let z = lookup_zigzag(w, name)?;
    let first = z.component(0).clone();
    let last = z.component(z.n_stages() - 1).clone();
    let state = |key: &str, m: &mdpcat_core::mdp::FiniteMdp| -> Result<StateId, Failure> {
        let n = e.get_word(key).ok_or_else(|| usage(format!("experiment on a zigzag needs `{key}`")))?;
        m.state_id(n).ok_or_else(|| usage(format!("no state `{n}` for `{key}`")))
    };
    let start = state("start", &first)?;
    let goal = state("goal", &last)?;
    let decl = &w.zigzags[name];
    let n = z.n_stages();
    Ok(Some(TaskZigZag {
        name: name.to_string(),
        kinds: vec![TaskKind::Other; n],
        stage_names: decl.stages.clone(),
        overlap_names: decl.overlaps.iter().map(|o| o.mdp.clone()).collect(),
        goals: (0..n)
            .map(|i| if i + 1 == n { vec![goal] } else { z.left_legs()[i].state_image() })
            .collect(),
        zigzag: z,
        start: Distribution::point(start),
    }))
}

fn experiment_config(e: &Experiment) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::default();
    let s = &mut cfg.solver;
    let float = |k: &str, slot: &mut f64| {
        if let Some(v) = e.get_f64(k) {
            *slot = v;
        }
    };
    float("gamma", &mut s.gamma);
    float("alpha", &mut s.alpha);
    float("epsilon", &mut s.epsilon);
    float("threshold", &mut cfg.threshold);
    let int = |k: &str, slot: &mut usize| -> Result<(), Failure> {
        match (e.get(k), e.get_u64(k)) {
            (None, _) => Ok(()),
            (_, Some(v)) => {
                *slot = v as usize;
                Ok(())
            }
            (Some(v), None) => Err(usage(format!("`{k}` must be a non-negative integer, got `{v}`"))),
        }
    };
    int("budget", &mut s.train_steps)?;
    int("eval_every", &mut s.eval_every)?;
    int("eval_episodes", &mut s.eval_episodes)?;
    int("episode_cap", &mut s.episode_cap)?;
    s.validate().map_err(|err| usage(err.to_string()))?;
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(usage(format!("threshold = {} must lie in [0, 1]", cfg.threshold)));
    }
    Ok(cfg)
}

fn experiment(w: &Workspace, name: &str, seeds: Option<u64>, out: Option<&Path>) -> Result<String, Failure> {
    if !w.experiments.contains_key(name) {
        return Err(usage(format!("no experiment `{name}` in the workspace")));
    }
    let e = w.experiment(name).expect("checked");
    let cfg = experiment_config(e)?;
    let n_seeds = match seeds {
        Some(n) => n,
        None => match (e.get("seeds"), e.get_u64("seeds")) {
            (None, _) => 5,
            (_, Some(n)) => n,
            (Some(v), None) => return Err(usage(format!("`seeds` must be a non-negative integer, got `{v}`"))),
        },
    };
    if n_seeds == 0 {
        return Err(usage("at least one seed is needed"));
    }
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let target = experiment_task(w, e, "task")?.expect("task or zigzag");
    let source = experiment_task(w, e, "source_task")?;
    let result = run_all(&target, source.as_ref(), &cfg, &seeds).map_err(|err| failed(err.to_string()))?;
    if let Some(dir) = out {
        write_outputs(dir, &result).map_err(|err| usage(format!("cannot write to {}: {err}", dir.display())))?;
    }
    Ok(summary_text(name, &result))
}

fn summary_text(name: &str, r: &ExperimentResult) -> String {
    let mut s = format!(
        "experiment {name} on {}: {} seeds, budget {}, threshold {}\n",
        r.task,
        r.seeds.len(),
        r.config.solver.train_steps,
        r.config.threshold
    );
    for a in &r.arms {
        let _ = writeln!(
            s,
            "{:<14} median steps to threshold {:>8}  mean final success {:.3}",
            a.arm.to_string(),
            a.median_steps,
            a.final_success
        );
    }
    s
}

/// `step,success_rate,mean_return` rows of one curve.
pub fn curve_csv(curve: &mdpcat_core::solve::LearningCurve) -> String {
    let mut s = String::from("step,success_rate,mean_return\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", p.step, p.success_rate, p.mean_return);
    }
    s
}

fn write_outputs(dir: &Path, r: &ExperimentResult) -> std::io::Result<()> {
    let curves = dir.join("curves");
    fs::create_dir_all(&curves)?;
    for a in &r.arms {
        for run in &a.runs {
            fs::write(curves.join(format!("{}_{}.csv", a.arm, run.seed)), curve_csv(&run.curve))?;
        }
    }
    let arms: serde_json::Map<String, serde_json::Value> = r
        .arms
        .iter()
        .map(|a| {
            let runs: serde_json::Map<String, serde_json::Value> =
                a.runs.iter().map(|run| (run.seed.to_string(), curve_json(&run.curve))).collect();
            (
                a.arm.to_string(),
                json!({"median_steps": a.median_steps, "final_success": a.final_success, "curves": runs}),
            )
        })
        .collect();
    let summary = json!({
        "task": r.task,
        "seeds": r.seeds,
        "config": serde_json::to_value(&r.config).expect("config serializes"),
        "arms": arms,
    });
    fs::write(dir.join("summary.json"), export_structured(&summary))
}
