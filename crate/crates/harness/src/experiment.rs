//! Compositional, monolithic, reuse and recycle training arms.

use std::fmt;
use std::sync::Arc;

use mdpcat_core::mdp::FiniteMdp;
use mdpcat_core::solve::{q_learning, Environment, LearningCurve, SolveError, SolverConfig};
use mdpcat_core::zigzag::{Composite, ZigZagError};
use rayon::prelude::*;
use serde::Serialize;

use crate::learn::StagedLearner;
use crate::tasks::{TaskKind, TaskZigZag};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    ZigZag(#[from] ZigZagError),
    #[error("no trained policy for any stage of the target task")]
    MissingSourcePolicy,
    #[error("{0} source policies for {1} seeds")]
    SourceCount(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Compositional,
    Monolithic,
    Reuse,
    Recycle,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Compositional => "compositional",
            Arm::Monolithic => "monolithic",
            Arm::Reuse => "reuse",
            Arm::Recycle => "recycle",
        })
    }
}

/// Training and evaluation settings shared by every arm. `solver.seed` is
/// replaced by each run's seed and `solver.train_steps` is the budget.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub solver: SolverConfig,
    /// Success rate that counts as solved.
    pub threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig {
                train_steps: 50_000,
                ..SolverConfig::default()
            },
            threshold: 0.9,
        }
    }
}

impl ExperimentConfig {
    fn for_seed(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            seed,
            ..self.solver.clone()
        }
    }

    /// Steps to first reach the threshold, or the budget when it never does.
    pub fn steps_to_threshold(&self, curve: &LearningCurve) -> usize {
        curve.steps_to(self.threshold).unwrap_or(self.solver.train_steps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub curve: LearningCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmResult {
    pub arm: Arm,
    pub runs: Vec<SeedRun>,
    /// Median over seeds of steps to the threshold, capped at the budget.
    pub median_steps: f64,
    /// Mean over seeds of the last evaluated success rate.
    pub final_success: f64,
}

impl ArmResult {
    fn new(arm: Arm, runs: Vec<SeedRun>, cfg: &ExperimentConfig) -> Self {
        let mut steps: Vec<usize> = runs.iter().map(|r| cfg.steps_to_threshold(&r.curve)).collect();
        steps.sort_unstable();
        let median_steps = match steps.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => steps[n / 2] as f64,
            n => (steps[n / 2 - 1] + steps[n / 2]) as f64 / 2.0,
        };
        let final_success = if runs.is_empty() {
            f64::NAN
        } else {
            runs.iter().map(|r| r.curve.final_success()).sum::<f64>() / runs.len() as f64
        };
        Self {
            arm,
            runs,
            median_steps,
            final_success,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub task: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub arms: Vec<ArmResult>,
}

impl ExperimentResult {
    pub fn arm(&self, arm: Arm) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

/// The composite with its environment: stage-0 start, final-stage goals.
pub fn composite_env(z: &TaskZigZag) -> Result<(Composite, Environment), ExperimentError> {
    let c = z.composite()?;
    let (start, goals) = z.composite_ends(&c);
    let env = Environment::new(c.mdp.clone(), start, &goals)?;
    Ok((c, env))
}

pub fn run_compositional(z: &TaskZigZag, cfg: &ExperimentConfig, seeds: &[u64]) -> Result<ArmResult, ExperimentError> {
    let (c, env) = composite_env(z)?;
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let mut l = StagedLearner::new(&z.zigzag, &c, env.clone(), cfg.for_seed(seed))?;
            Ok(SeedRun { seed, curve: l.train() })
        })
        .collect::<Result<Vec<_>, SolveError>>()?;
    Ok(ArmResult::new(Arm::Compositional, runs, cfg))
}

/// One agent on the composite, rewarded by the glued (summed) rewards.
pub fn run_monolithic(z: &TaskZigZag, cfg: &ExperimentConfig, seeds: &[u64]) -> Result<ArmResult, ExperimentError> {
    let (_, env) = composite_env(z)?;
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let (_, curve) = q_learning(env.clone(), &cfg.for_seed(seed))?;
            Ok(SeedRun { seed, curve })
        })
        .collect::<Result<Vec<_>, SolveError>>()?;
    Ok(ArmResult::new(Arm::Monolithic, runs, cfg))
}

/// Stage tables learned on one task, kept for transfer.
#[derive(Clone, Debug)]
pub struct SourcePolicies {
    pub stages: Vec<(TaskKind, Arc<FiniteMdp>, Vec<f64>)>,
}

impl SourcePolicies {
    /// Initial table for `m` copied by action name from the first source
    /// stage of the same kind.
    pub fn table_for(&self, kind: TaskKind, m: &FiniteMdp) -> Option<Vec<f64>> {
        let (_, src, q) = self.stages.iter().find(|(k, _, _)| *k == kind && kind != TaskKind::Other)?;
        let table = m
            .actions()
            .iter()
            .map(|a| src.action_id(&a.name).map_or(0.0, |b| q[b.0]))
            .collect();
        Some(table)
    }
}

/// Trains the compositional arm on `z` with `seed` and keeps its tables.
pub fn train_source(z: &TaskZigZag, cfg: &ExperimentConfig, seed: u64) -> Result<SourcePolicies, ExperimentError> {
    let (c, env) = composite_env(z)?;
    let mut l = StagedLearner::new(&z.zigzag, &c, env, cfg.for_seed(seed))?;
    l.train();
    let stages = z
        .kinds
        .iter()
        .zip(z.zigzag.components())
        .zip(l.tables())
        .map(|((&k, m), q)| (k, m.clone(), q.clone()))
        .collect();
    Ok(SourcePolicies { stages })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transfer {
    /// Shared stages act on their source policy and stay fixed.
    Reuse,
    /// Shared stages start from their source table and keep learning.
    Recycle,
}

/// Runs `target` with shared stages initialized from `sources`, one source
/// per seed (or a single source for all of them).
pub fn run_reuse_recycle(
    sources: &[SourcePolicies],
    target: &TaskZigZag,
    mode: Transfer,
    cfg: &ExperimentConfig,
    seeds: &[u64],
) -> Result<ArmResult, ExperimentError> {
    if sources.len() != 1 && sources.len() != seeds.len() {
        return Err(ExperimentError::SourceCount(sources.len(), seeds.len()));
    }
    let (c, env) = composite_env(target)?;
    let stages = target.zigzag.components();
    let shared = |src: &SourcePolicies| -> Vec<Option<Vec<f64>>> {
        target
            .kinds
            .iter()
            .zip(stages)
            .map(|(&k, m)| src.table_for(k, m))
            .collect()
    };
    if sources.iter().any(|s| shared(s).iter().all(Option::is_none)) {
        return Err(ExperimentError::MissingSourcePolicy);
    }
    let runs = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let init = shared(&sources[i.min(sources.len() - 1)]);
            let frozen = init.iter().map(|t| mode == Transfer::Reuse && t.is_some()).collect();
            let q = init
                .into_iter()
                .zip(stages)
                .map(|(t, m)| t.unwrap_or_else(|| vec![0.0; m.n_actions()]))
                .collect();
            let mut l = StagedLearner::with_tables(&target.zigzag, &c, env.clone(), cfg.for_seed(seed), q, frozen)?;
            Ok(SeedRun { seed, curve: l.train() })
        })
        .collect::<Result<Vec<_>, SolveError>>()?;
    let arm = match mode {
        Transfer::Reuse => Arm::Reuse,
        Transfer::Recycle => Arm::Recycle,
    };
    Ok(ArmResult::new(arm, runs, cfg))
}

/// Every arm on `target`; reuse and recycle only when `source` is given,
/// pre-trained per seed on it.
pub fn run_all(
    target: &TaskZigZag,
    source: Option<&TaskZigZag>,
    cfg: &ExperimentConfig,
    seeds: &[u64],
) -> Result<ExperimentResult, ExperimentError> {
    let mut arms = vec![run_compositional(target, cfg, seeds)?, run_monolithic(target, cfg, seeds)?];
    if let Some(source) = source {
        let sources = seeds
            .par_iter()
            .map(|&seed| train_source(source, cfg, seed))
            .collect::<Result<Vec<_>, _>>()?;
        arms.push(run_reuse_recycle(&sources, target, Transfer::Reuse, cfg, seeds)?);
        arms.push(run_reuse_recycle(&sources, target, Transfer::Recycle, cfg, seeds)?);
    }
    Ok(ExperimentResult {
        task: target.name.clone(),
        config: cfg.clone(),
        seeds: seeds.to_vec(),
        arms,
    })
}
