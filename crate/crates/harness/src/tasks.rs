//! Gridworld stand-ins for the reach, lift, transport and place sub-tasks,
//! and the zig-zags that chain them.

use std::sync::Arc;

use mdpcat_core::category::{MdpMorphism, SubprocessWitness};
use mdpcat_core::mdp::{ActionSpec, Distribution, FiniteMdp, MdpError, StateId};
use mdpcat_core::zigzag::{build_composite, puncture, Composite, ZigZag, ZigZagError};
use mdpcat_dsl::{DslError, OverlapDecl, Workspace, ZigZagDecl};
use serde::Serialize;

pub type Cell = (usize, usize);

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("bad geometry: {0}")]
    BadGeometry(String),
    #[error("unknown task {0} (tasks are 1 to 4)")]
    UnknownTask(usize),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    ZigZag(#[from] ZigZagError),
    #[error(transparent)]
    Category(#[from] mdpcat_core::category::CategoryError),
    #[error(transparent)]
    Dsl(#[from] DslError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Reach,
    Lift,
    Transport,
    Place,
    /// A stage not built from a template; never shares policies.
    Other,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Reach => "reach",
            TaskKind::Lift => "lift",
            TaskKind::Transport => "transport",
            TaskKind::Place => "place",
            TaskKind::Other => "other",
        }
    }
}

/// Geometry and reward constants of one sub-task.
///
/// `width`/`height` size the grid (reach, place); `length` is the transport
/// line and `levels` the lift ladder. `threshold` is the Manhattan radius
/// that counts as reached or placed, the height the object must exceed when
/// lifting, and the center line index when transporting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskTemplate {
    pub kind: TaskKind,
    pub width: usize,
    pub height: usize,
    pub length: usize,
    pub levels: usize,
    pub threshold: usize,
    /// Start cell of the hand (reach, place).
    pub hand: Cell,
    /// Start height of the open hand (lift).
    pub hand_level: usize,
    /// Object placements, drawn uniformly at the start (reach).
    pub objects: Vec<Cell>,
    /// Cells that trap the hand (reach, place).
    pub obstacles: Vec<Cell>,
    /// Target cell (place).
    pub goal: Cell,
    pub shaping: f64,
    pub r_task: f64,
}

impl TaskTemplate {
    fn base(kind: TaskKind) -> Self {
        Self {
            kind,
            width: 5,
            height: 5,
            length: 5,
            levels: 4,
            threshold: 0,
            hand: (0, 0),
            hand_level: 0,
            objects: Vec::new(),
            obstacles: Vec::new(),
            goal: (0, 0),
            shaping: 1.0,
            r_task: 10.0,
        }
    }

    pub fn reach(width: usize, height: usize, objects: &[Cell]) -> Self {
        Self {
            width,
            height,
            objects: objects.to_vec(),
            ..Self::base(TaskKind::Reach)
        }
    }

    pub fn lift(levels: usize, threshold: usize) -> Self {
        Self {
            levels,
            threshold,
            ..Self::base(TaskKind::Lift)
        }
    }

    pub fn transport(length: usize, center: usize) -> Self {
        Self {
            length,
            threshold: center,
            ..Self::base(TaskKind::Transport)
        }
    }

    pub fn place(width: usize, height: usize, goal: Cell) -> Self {
        Self {
            width,
            height,
            goal,
            ..Self::base(TaskKind::Place)
        }
    }

    fn validate(&self) -> Result<(), TaskError> {
        let bad = |m: String| Err(TaskError::BadGeometry(m));
        let in_grid = |c: Cell| c.0 < self.width && c.1 < self.height;
        if !(self.shaping.is_finite() && self.r_task.is_finite()) {
            return bad("reward constants must be finite".into());
        }
        match self.kind {
            TaskKind::Reach | TaskKind::Place => {
                if self.width == 0 || self.height == 0 {
                    return bad("empty grid".into());
                }
                if self.threshold >= self.width + self.height {
                    return bad(format!("threshold {} exceeds the grid", self.threshold));
                }
                if !in_grid(self.hand) || self.obstacles.contains(&self.hand) {
                    return bad(format!("hand start {:?} is not a free cell", self.hand));
                }
                if let Some(c) = self.obstacles.iter().find(|c| !in_grid(**c)) {
                    return bad(format!("obstacle {c:?} outside the grid"));
                }
                if self.kind == TaskKind::Reach {
                    if self.objects.is_empty() {
                        return bad("reach needs at least one object cell".into());
                    }
                    if let Some(c) = self.objects.iter().find(|c| !in_grid(**c) || self.obstacles.contains(c)) {
                        return bad(format!("object {c:?} is not a free cell"));
                    }
                } else if !in_grid(self.goal) || self.obstacles.contains(&self.goal) {
                    return bad(format!("goal {:?} is not a free cell", self.goal));
                }
            }
            TaskKind::Lift => {
                if self.levels < 2 || self.threshold + 1 >= self.levels {
                    return bad(format!("threshold {} leaves no height above it in {} levels", self.threshold, self.levels));
                }
                if self.hand_level >= self.levels {
                    return bad(format!("hand level {} outside {} levels", self.hand_level, self.levels));
                }
            }
            TaskKind::Other => {}
            TaskKind::Transport => {
                if self.threshold + 1 >= self.length {
                    return bad(format!("center {} leaves nothing beyond it on a line of {}", self.threshold, self.length));
                }
            }
        }
        Ok(())
    }
}

/// A sub-task MDP with its start distribution and the goal subset that
/// defines its overlap with the next stage.
#[derive(Clone, Debug)]
pub struct Task {
    pub kind: TaskKind,
    pub mdp: Arc<FiniteMdp>,
    pub start: Distribution,
    pub goals: Vec<StateId>,
}

const MOVES: [(&str, isize, isize); 4] = [("E", 1, 0), ("N", 0, 1), ("W", -1, 0), ("S", 0, -1)];

fn manhattan(a: Cell, b: Cell) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

fn step(c: Cell, dx: isize, dy: isize, w: usize, h: usize) -> Option<Cell> {
    let x = c.0.checked_add_signed(dx)?;
    let y = c.1.checked_add_signed(dy)?;
    (x < w && y < h).then_some((x, y))
}

/// Collects states and deterministic actions by name.
#[derive(Default)]
struct Builder {
    states: Vec<String>,
    actions: Vec<ActionSpec>,
}

impl Builder {
    fn state(&mut self, name: String) -> String {
        self.states.push(name.clone());
        name
    }

    fn action(&mut self, from: &str, label: &str, to: &str, reward: f64) {
        self.actions.push(ActionSpec {
            name: format!("{from}_{label}"),
            anchor: from.to_string(),
            transition: vec![(to.to_string(), 1.0)],
            reward,
        });
    }

    fn finish(self) -> Result<FiniteMdp, MdpError> {
        FiniteMdp::new(self.states, self.actions)
    }
}

/// Builds the sub-task MDP described by `t`. Goal states keep their actions
/// here; zig-zag construction punctures them away.
pub fn make_task(t: &TaskTemplate) -> Result<Task, TaskError> {
    t.validate()?;
    match t.kind {
        TaskKind::Reach => reach(t),
        TaskKind::Lift => lift(t),
        TaskKind::Transport => transport(t),
        TaskKind::Place => place(t),
        TaskKind::Other => Err(TaskError::BadGeometry("no template for `other` stages".into())),
    }
}

fn finish(kind: TaskKind, b: Builder, start: &[String], goals: &[String]) -> Result<Task, TaskError> {
    let mdp = Arc::new(b.finish()?);
    let id = |n: &String| mdp.state_id(n).expect("named state exists");
    let p = 1.0 / start.len() as f64;
    let start = Distribution::new(start.iter().map(|n| (id(n), p))).expect("uniform start");
    let mut goals: Vec<StateId> = goals.iter().map(id).collect();
    goals.sort();
    Ok(Task {
        kind,
        mdp,
        start,
        goals,
    })
}

fn reach(t: &TaskTemplate) -> Result<Task, TaskError> {
    let mut b = Builder::default();
    let tag = |c: Cell, k: usize| format!("reach_x{}y{}o{k}", c.0, c.1);
    let free = |c: &Cell| !t.obstacles.contains(c);
    let cells: Vec<Cell> = (0..t.height)
        .flat_map(|y| (0..t.width).map(move |x| (x, y)))
        .filter(free)
        .collect();
    for k in 0..t.objects.len() {
        for &c in &cells {
            b.state(tag(c, k));
        }
    }
    let stuck = (!t.obstacles.is_empty()).then(|| b.state("reach_stuck".into()));
    let mut goals = Vec::new();
    for (k, &o) in t.objects.iter().enumerate() {
        for &c in &cells {
            let from = tag(c, k);
            if manhattan(c, o) <= t.threshold {
                goals.push(from.clone());
            }
            for (label, dx, dy) in MOVES {
                let Some(d) = step(c, dx, dy, t.width, t.height) else {
                    continue;
                };
                match &stuck {
                    Some(stuck) if !free(&d) => b.action(&from, label, stuck, 0.0),
                    _ => {
                        let mut r = t.shaping * (manhattan(c, o) as f64 - manhattan(d, o) as f64);
                        if manhattan(d, o) <= t.threshold && manhattan(c, o) > t.threshold {
                            r += t.r_task;
                        }
                        b.action(&from, label, &tag(d, k), r);
                    }
                }
            }
        }
    }
    let start: Vec<String> = (0..t.objects.len()).map(|k| tag(t.hand, k)).collect();
    finish(TaskKind::Reach, b, &start, &goals)
}

fn lift(t: &TaskTemplate) -> Result<Task, TaskError> {
    // hand height z; the object sits on the table unless held
    let mut b = Builder::default();
    let open = |z: usize| format!("lift_z{z}_open");
    let shut = |z: usize| format!("lift_z{z}_shut");
    let held = |z: usize| format!("lift_z{z}_held");
    for z in 0..t.levels {
        b.state(open(z));
        b.state(shut(z));
        b.state(held(z));
    }
    let goal = |z: usize| z > t.threshold;
    // (|z_r - z_o| - |z_r' - z_o'|) + (z_r' - z_r)
    let shaped = |zr: usize, zo: usize, zr2: usize, zo2: usize| {
        let d = zr.abs_diff(zo) as f64 - zr2.abs_diff(zo2) as f64;
        t.shaping * (d + zr2 as f64 - zr as f64)
    };
    for z in 0..t.levels {
        let moves = [("up", z + 1 < t.levels, z + 1), ("down", z > 0, z.wrapping_sub(1))];
        for (label, ok, z2) in moves {
            if !ok {
                continue;
            }
            b.action(&open(z), label, &open(z2), shaped(z, 0, z2, 0));
            b.action(&shut(z), label, &shut(z2), shaped(z, 0, z2, 0));
            let bonus = if goal(z2) && !goal(z) { t.r_task } else { 0.0 };
            b.action(&held(z), label, &held(z2), shaped(z, z, z2, z2) + bonus);
        }
        let grasp = if z == 0 { held(0) } else { shut(z) };
        b.action(&open(z), "close", &grasp, 0.0);
        b.action(&shut(z), "open", &open(z), 0.0);
        b.action(&held(z), "open", &open(z), shaped(z, z, z, 0));
    }
    let goals: Vec<String> = (t.threshold + 1..t.levels).map(held).collect();
    finish(TaskKind::Lift, b, &[open(t.hand_level)], &goals)
}

fn transport(t: &TaskTemplate) -> Result<Task, TaskError> {
    let mut b = Builder::default();
    let cell = |y: usize| format!("transport_y{y}");
    for y in 0..t.length {
        b.state(cell(y));
    }
    let goal = |y: usize| y > t.threshold;
    for y in 0..t.length {
        if y + 1 < t.length {
            let bonus = if goal(y + 1) && !goal(y) { t.r_task } else { 0.0 };
            b.action(&cell(y), "fwd", &cell(y + 1), t.shaping + bonus);
        }
        if y > 0 {
            b.action(&cell(y), "back", &cell(y - 1), -t.shaping);
        }
    }
    let goals: Vec<String> = (t.threshold + 1..t.length).map(cell).collect();
    finish(TaskKind::Transport, b, &[cell(0)], &goals)
}

fn place(t: &TaskTemplate) -> Result<Task, TaskError> {
    let mut b = Builder::default();
    let tag = |c: Cell| format!("place_x{}y{}", c.0, c.1);
    let free = |c: &Cell| !t.obstacles.contains(c);
    let cells: Vec<Cell> = (0..t.height)
        .flat_map(|y| (0..t.width).map(move |x| (x, y)))
        .filter(free)
        .collect();
    for &c in &cells {
        b.state(tag(c));
    }
    let placed = b.state("place_placed".into());
    let dropped = b.state("place_dropped".into());
    let stuck = (!t.obstacles.is_empty()).then(|| b.state("place_stuck".into()));
    for &c in &cells {
        let from = tag(c);
        for (label, dx, dy) in MOVES {
            let Some(d) = step(c, dx, dy, t.width, t.height) else {
                continue;
            };
            match &stuck {
                Some(stuck) if !free(&d) => b.action(&from, label, stuck, 0.0),
                _ => {
                    let r = t.shaping * (manhattan(c, t.goal) as f64 - manhattan(d, t.goal) as f64);
                    b.action(&from, label, &tag(d), r);
                }
            }
        }
        if manhattan(c, t.goal) <= t.threshold {
            b.action(&from, "release", &placed, t.r_task);
        } else {
            b.action(&from, "release", &dropped, 0.0);
        }
    }
    finish(TaskKind::Place, b, &[tag(t.hand)], &[placed])
}

/// A punctured zig-zag of sub-tasks together with what is needed to run
/// agents on it.
#[derive(Clone, Debug)]
pub struct TaskZigZag {
    pub name: String,
    pub kinds: Vec<TaskKind>,
    pub stage_names: Vec<String>,
    pub overlap_names: Vec<String>,
    pub zigzag: ZigZag,
    /// Start distribution of stage 0.
    pub start: Distribution,
    /// Goal subset of every stage; the last one ends the task.
    pub goals: Vec<Vec<StateId>>,
}

impl TaskZigZag {
    /// Chains `tasks`: the goal subset of each stage becomes an actionless
    /// overlap sent to the (single) start state of the next stage, then the
    /// diagram is punctured so every left leg is full.
    pub fn chain(name: &str, tasks: Vec<Task>, overlap_names: &[&str]) -> Result<Self, TaskError> {
        if tasks.is_empty() || overlap_names.len() + 1 != tasks.len() {
            return Err(TaskError::BadGeometry(format!(
                "{} stages need {} overlap names",
                tasks.len(),
                tasks.len().saturating_sub(1)
            )));
        }
        let mut lefts = Vec::new();
        let mut rights = Vec::new();
        for (i, pair) in tasks.windows(2).enumerate() {
            let (cur, next) = (&pair[0], &pair[1]);
            let [(entry, _)] = next.start.support() else {
                return Err(TaskError::BadGeometry(format!("stage {} needs a single start state", i + 1)));
            };
            let names = cur.goals.iter().map(|&g| cur.mdp.state_name(g).to_string()).collect();
            let overlap = Arc::new(FiniteMdp::from_parts(names, vec![])?);
            let incl = MdpMorphism::new(overlap.clone(), cur.mdp.clone(), cur.goals.clone(), vec![])?;
            lefts.push(SubprocessWitness::new(incl)?);
            rights.push(MdpMorphism::new(overlap, next.mdp.clone(), vec![*entry; cur.goals.len()], vec![])?);
        }
        let raw = ZigZag::new(tasks.iter().map(|t| t.mdp.clone()).collect(), lefts, rights)?;
        let zigzag = puncture(&raw)?;
        Ok(Self {
            name: name.to_string(),
            kinds: tasks.iter().map(|t| t.kind).collect(),
            stage_names: tasks.iter().map(|t| t.kind.name().to_string()).collect(),
            overlap_names: overlap_names.iter().map(|s| s.to_string()).collect(),
            zigzag,
            start: tasks[0].start.clone(),
            goals: tasks.into_iter().map(|t| t.goals).collect(),
        })
    }

    pub fn composite(&self) -> Result<Composite, ZigZagError> {
        build_composite(&self.zigzag)
    }

    /// The stage-0 start and the final goals, carried into the composite.
    pub fn composite_ends(&self, c: &Composite) -> (Distribution, Vec<StateId>) {
        let first = &c.embeddings[0];
        let start = Distribution::new(self.start.support().iter().map(|&(s, p)| (first.map_state(s), p)))
            .expect("pushforward of a distribution");
        let last = c.embeddings.last().expect("at least one stage");
        let mut goals: Vec<StateId> = self.goals.last().unwrap().iter().map(|&g| last.map_state(g)).collect();
        goals.sort();
        goals.dedup();
        (start, goals)
    }

    /// The diagram as a DSL workspace: stages, overlaps and legs by name.
    pub fn workspace(&self) -> Result<Workspace, TaskError> {
        let mut w = Workspace::new();
        let z = &self.zigzag;
        for (name, m) in self.stage_names.iter().zip(z.components()) {
            w.add_mdp(name, m.clone())?;
        }
        let mut overlaps = Vec::new();
        for (i, name) in self.overlap_names.iter().enumerate() {
            w.add_mdp(name, z.overlap(i).clone())?;
            let o = OverlapDecl {
                mdp: name.clone(),
                left: format!("{name}_in"),
                right: format!("{name}_to"),
            };
            w.add_morphism(&o.left, name, &self.stage_names[i], z.left_legs()[i].morphism())?;
            w.add_morphism(&o.right, name, &self.stage_names[i + 1], &z.right_legs()[i])?;
            overlaps.push(o);
        }
        w.add_zigzag(
            &self.name,
            ZigZagDecl {
                stages: self.stage_names.clone(),
                overlaps,
            },
        )?;
        Ok(w)
    }
}

/// Sub-task templates of the four tasks.
pub fn task_templates(task_id: usize) -> Result<Vec<TaskTemplate>, TaskError> {
    let objects = [(4, 2), (2, 4), (4, 4), (3, 3)];
    let reach = TaskTemplate::reach(5, 5, &objects);
    let lift = TaskTemplate::lift(4, 2);
    Ok(match task_id {
        1 => vec![reach, lift],
        // a second block stands where the hand likes to pass
        2 => vec![
            TaskTemplate {
                obstacles: vec![(3, 2), (2, 3)],
                ..reach
            },
            lift,
            TaskTemplate::place(4, 4, (3, 3)),
        ],
        // the pole is a small target; anything off by one cell counts
        3 => vec![
            TaskTemplate::reach(5, 5, &[(1, 4), (4, 1), (2, 2)]),
            TaskTemplate::lift(5, 2),
            TaskTemplate {
                threshold: 1,
                ..TaskTemplate::place(5, 5, (4, 4))
            },
        ],
        4 => vec![
            reach,
            lift,
            TaskTemplate::transport(5, 2),
            TaskTemplate::place(4, 3, (3, 2)),
        ],
        other => return Err(TaskError::UnknownTask(other)),
    })
}

pub fn task_name(task_id: usize) -> &'static str {
    match task_id {
        1 => "lift_block",
        2 => "stack_blocks",
        3 => "assemble_nut",
        4 => "pick_place_can",
        _ => "unknown",
    }
}

/// Builds task `task_id` (1 to 4) as a punctured zig-zag.
pub fn build_task_zigzag(task_id: usize) -> Result<TaskZigZag, TaskError> {
    let templates = task_templates(task_id)?;
    let tasks = templates.iter().map(make_task).collect::<Result<Vec<_>, _>>()?;
    let overlaps = &["reached", "raised", "crossed"][..tasks.len() - 1];
    let overlaps: Vec<&str> = if task_id == 4 {
        overlaps.to_vec()
    } else {
        // reach, lift, place: the lift goal is still "raised"
        ["reached", "raised"][..tasks.len() - 1].to_vec()
    };
    TaskZigZag::chain(task_name(task_id), tasks, &overlaps)
}

/// Two reaching stages on a 5x5 grid: first come within Euclidean distance
/// 1.5 of A = (0, 0), then of B = (4, 0), from S = (2, 1), which is as far
/// from A as from B. Moves are shaped by the decrease in Manhattan distance
/// to the current target and entering a target region pays 10. At γ = 0.95
/// the first stage alone prefers stepping south at S, while the composite
/// prefers west, so the diagram is forward-moving but not monotonic.
pub fn equal_distance_grid() -> Result<TaskZigZag, TaskError> {
    const W: usize = 5;
    const H: usize = 5;
    let (a, b, s) = ((0, 0), (4, 0), (2, 1));
    let near = |c: Cell, t: Cell| {
        let (dx, dy) = (c.0.abs_diff(t.0), c.1.abs_diff(t.1));
        ((dx * dx + dy * dy) as f64).sqrt() <= 1.5
    };
    let stage = |tag: &str, target: Cell| -> Result<Task, TaskError> {
        let mut bld = Builder::default();
        let name = |c: Cell| format!("{tag}_x{}y{}", c.0, c.1);
        let cells: Vec<Cell> = (0..H).flat_map(|y| (0..W).map(move |x| (x, y))).collect();
        for &c in &cells {
            bld.state(name(c));
        }
        let mut goals = Vec::new();
        for &c in &cells {
            if near(c, target) {
                goals.push(name(c));
                continue;
            }
            for (label, dx, dy) in MOVES {
                if let Some(d) = step(c, dx, dy, W, H) {
                    let mut r = manhattan(c, target) as f64 - manhattan(d, target) as f64;
                    if near(d, target) {
                        r += 10.0;
                    }
                    bld.action(&name(c), label, &name(d), r);
                }
            }
        }
        finish(TaskKind::Reach, bld, &[name(s)], &goals)
    };
    let first = stage("toA", a)?;
    let second = stage("toB", b)?;
    // the overlap is the A region, entered by stage 1 at the same cells
    let names: Vec<String> = first.goals.iter().map(|&g| first.mdp.state_name(g).to_string()).collect();
    let overlap = Arc::new(FiniteMdp::from_parts(names.clone(), vec![])?);
    let incl = MdpMorphism::new(overlap.clone(), first.mdp.clone(), first.goals.clone(), vec![])?;
    let same_cells = names
        .iter()
        .map(|n| second.mdp.state_id(&n.replacen("toA", "toB", 1)).expect("same grid"))
        .collect();
    let right = MdpMorphism::new(overlap, second.mdp.clone(), same_cells, vec![])?;
    let zigzag = ZigZag::new(
        vec![first.mdp.clone(), second.mdp.clone()],
        vec![SubprocessWitness::new(incl)?],
        vec![right],
    )?;
    Ok(TaskZigZag {
        name: "equal_distance".into(),
        kinds: vec![TaskKind::Reach, TaskKind::Reach],
        stage_names: vec!["toA".into(), "toB".into()],
        overlap_names: vec!["nearA".into()],
        zigzag,
        start: first.start,
        goals: vec![first.goals, second.goals],
    })
}
