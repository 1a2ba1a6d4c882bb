//! End-to-end orchestration: train controllers, collect data, learn the
//! transition model, compile tasks, run the planner and both baselines
//! across seeds, and emit CSV curves plus rule dumps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    baseline1_steps_to_success, baseline1_train, qrm_train, BaselineConfig, ProductQTable,
};
use crate::control::train_controller;
use crate::envs::{make_env, AnyEnv, ControllerMode, EnvError, Environment};
use crate::learn::{
    collect_dataset, dump_model, learn_model_from_dataset, LearnError, LearnOptions,
    TrainReport, TransitionModel,
};
use crate::ltl::{compile_to_fsa, Formula, Fsa, LtlError};
use crate::planner::{
    build_product, extract_plan, value_iteration, BuildOptions, CostModel, Plan, PlanError,
    DEFAULT_SWEEP_CAP,
};
use crate::tasks::{gen_task, TaskError, TaskFamily};

pub const OUT_DIR_ENV_VAR: &str = "OPAL_OUT_DIR";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Ltl(#[from] LtlError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad configuration: {0}")]
    Config(String),
}

fn write_file(path: &Path, content: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|source| HarnessError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(path, content)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

/// Experiment configuration. Every field is explicit after loading: the
/// materialized form (defaults filled in) is written next to the results.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    pub family: String,
    pub tasks: usize,
    pub seeds: Vec<u64>,
    pub data_episodes: usize,
    pub data_max_len: usize,
    pub baseline_episodes: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub vi_sweeps: usize,
    pub controller_episodes: usize,
    pub generalization_tasks: usize,
    pub out_dir: String,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: "room-4x4".into(),
            family: "seq".into(),
            tasks: 10,
            seeds: vec![0, 1, 2],
            data_episodes: 50,
            data_max_len: 100,
            baseline_episodes: 500,
            horizon: 50,
            gamma: 0.95,
            vi_sweeps: DEFAULT_SWEEP_CAP,
            controller_episodes: 3_000,
            generalization_tasks: 20,
            out_dir: "runs/experiment".into(),
            workers: 4,
        }
    }
}

impl ExperimentConfig {
    pub fn load(text: &str) -> Result<ExperimentConfig, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn materialized(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn family(&self) -> Result<TaskFamily, HarnessError> {
        TaskFamily::parse(&self.family)
            .ok_or_else(|| HarnessError::Config(format!("unknown task family {:?}", self.family)))
    }

    /// Output directory, honoring the output-root environment variable for
    /// relative paths.
    pub fn resolved_out_dir(&self) -> PathBuf {
        let out = PathBuf::from(&self.out_dir);
        if out.is_absolute() {
            return out;
        }
        match std::env::var(OUT_DIR_ENV_VAR) {
            Ok(root) if !root.is_empty() => PathBuf::from(root).join(out),
            _ => out,
        }
    }
}

/// One method/baseline run on one task and seed.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: String,
    pub task_id: usize,
    pub seed: u64,
    /// (env_steps, success_rate) checkpoints.
    pub curve: Vec<(u64, f64)>,
    pub final_success: f64,
    pub plan: Option<String>,
    pub wall_time_s: f64,
    pub failed: Option<String>,
}

/// Per-seed artifacts of the method pipeline.
pub struct MethodArtifacts {
    pub env: AnyEnv,
    pub model: TransitionModel,
    pub reports: Vec<TrainReport>,
    /// Primitive interactions spent collecting the dataset (the method's
    /// one-time cost; controller pretraining is shared with the baselines
    /// and reported separately).
    pub data_steps: u64,
    pub controller_steps: u64,
}

/// Builds the environment (training room controllers when applicable),
/// collects a dataset, and learns the transition model.
pub fn method_pipeline(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<MethodArtifacts, HarnessError> {
    let mut env = make_env(&cfg.env)?;
    let mut controller_steps = 0u64;
    if let AnyEnv::Room(room) = &mut env {
        let q = train_controller(&room.map, cfg.controller_episodes, seed);
        // Controller training interacts with the grid; desk-scale accounting
        // charges it separately since every method shares the controllers.
        controller_steps = (cfg.controller_episodes as u64) * 30;
        room.controller = ControllerMode::Learned(q);
    }
    let before = env.env_steps();
    let dataset = collect_dataset(&mut env, cfg.data_episodes, cfg.data_max_len, seed)?;
    let data_steps = env.env_steps() - before;
    let opts = LearnOptions { seed, ..LearnOptions::default() };
    let learned = learn_model_from_dataset(&env.spec().clone(), &dataset, &opts)?;
    Ok(MethodArtifacts {
        env,
        model: learned.model,
        reports: learned.reports,
        data_steps,
        controller_steps,
    })
}

/// Result of planning and executing one task with the learned model.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub success: bool,
    pub plan: Option<Plan>,
    pub exec_steps: u64,
    pub replans: usize,
    /// Environment interactions consumed while planning (always 0: planning
    /// works on the model only).
    pub planning_steps: u64,
}

/// Plans over the learned model and executes the plan through the
/// environment, replanning from the observed state when execution diverges
/// from the model's prediction.
pub fn run_method_on_task(
    env: &mut AnyEnv,
    model: &TransitionModel,
    fsa: &Fsa,
    gamma: f64,
    vi_sweeps: usize,
    horizon: usize,
) -> Result<MethodRun, HarnessError> {
    env.reset();
    let ops = env.grounded_operators();
    let steps_before_planning = env.env_steps();
    let mut z = fsa.initial;
    let mut sym = env.state();
    let mut replans = 0usize;
    let mut executed = 0usize;
    let exec_start = env.env_steps();

    let make_plan = |sym: &crate::relational::SymbolicState, z: usize| -> Result<Plan, PlanError> {
        let mut shifted = fsa.clone();
        shifted.initial = z;
        let graph =
            build_product(model, &shifted, sym, &ops, &CostModel::Unit, BuildOptions::default())?;
        let tables = value_iteration(&graph, gamma, vi_sweeps);
        extract_plan(&graph, &tables, graph.initial)
    };

    let mut plan = match make_plan(&sym, z) {
        Ok(p) => p,
        Err(PlanError::NoPlan) => {
            return Ok(MethodRun {
                success: fsa.is_accepting(z),
                plan: None,
                exec_steps: 0,
                replans: 0,
                planning_steps: env.env_steps() - steps_before_planning,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let planning_steps = env.env_steps() - steps_before_planning;
    let first_plan = plan.clone();

    let mut cursor = 0usize;
    while !fsa.is_accepting(z) && executed < horizon {
        if cursor >= plan.steps.len() {
            // Plan exhausted without acceptance: replan.
            replans += 1;
            match make_plan(&sym, z) {
                Ok(p) => {
                    plan = p;
                    cursor = 0;
                    continue;
                }
                Err(_) => break,
            }
        }
        let op = plan.steps[cursor].clone();
        let predicted = &plan.trace[cursor + 1];
        env.execute(&op)?;
        executed += 1;
        sym = env.state();
        z = fsa.step_mask(z, fsa.state_mask(&sym));
        let observed_matches = {
            // Compare on the plan's (projected) state space.
            let projected = crate::planner::project_state(
                &sym,
                &model.rules.iter().flat_map(|r| r.precondition.iter().map(|a| a.pred.clone())).collect(),
                &fsa.vocabulary,
            );
            projected == predicted.sym && z == predicted.automaton
        };
        if observed_matches {
            cursor += 1;
        } else {
            replans += 1;
            match make_plan(&sym, z) {
                Ok(p) => {
                    plan = p;
                    cursor = 0;
                }
                Err(_) => break,
            }
        }
    }

    Ok(MethodRun {
        success: fsa.is_accepting(z),
        plan: Some(first_plan),
        exec_steps: env.env_steps() - exec_start,
        replans,
        planning_steps,
    })
}

/// Task formulas for an experiment: `count` tasks drawn from the family over
/// the environment's subgoal atoms, skipping draws the pool cannot serve.
pub fn generate_tasks(
    env: &AnyEnv,
    family: TaskFamily,
    count: usize,
    seed_base: u64,
) -> Vec<Formula> {
    let pool = env.subgoal_atoms();
    let mut tasks = Vec::new();
    let mut seed = seed_base;
    while tasks.len() < count {
        if let Ok(task) = gen_task(family, &pool, seed) {
            if compile_to_fsa(&task.formula).is_ok() {
                tasks.push(task.formula);
            }
        }
        seed += 1;
        if seed > seed_base + 10_000 {
            break;
        }
    }
    tasks
}

pub struct TrainingOutput {
    pub records: Vec<RunRecord>,
    pub artifacts: BTreeMap<u64, MethodArtifacts>,
    pub tasks: Vec<Formula>,
}

/// The full training protocol: per seed, learn the model once; per
/// task x seed, run the method and both baselines on identical tasks.
/// Task x seed runs execute in a worker pool; records are merged in
/// deterministic order.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainingOutput, HarnessError> {
    let family = cfg.family()?;
    let mut artifacts = BTreeMap::new();
    for &seed in &cfg.seeds {
        artifacts.insert(seed, method_pipeline(cfg, seed)?);
    }
    let base_env = make_env(&cfg.env)?;
    let tasks = generate_tasks(&base_env, family, cfg.tasks, 1_000);

    struct Job {
        task_id: usize,
        seed: u64,
        formula: Formula,
    }
    let jobs: Vec<Job> = tasks
        .iter()
        .enumerate()
        .flat_map(|(task_id, formula)| {
            cfg.seeds.iter().map(move |&seed| Job { task_id, seed, formula: formula.clone() })
        })
        .collect();

    let worker_count = cfg.workers.max(1).min(jobs.len().max(1));
    let mut records: Vec<RunRecord> = Vec::new();
    let errors: std::sync::Mutex<Vec<String>> = std::sync::Mutex::new(Vec::new());
    let results: std::sync::Mutex<Vec<RunRecord>> = std::sync::Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        for chunk_id in 0..worker_count {
            let jobs = &jobs;
            let artifacts = &artifacts;
            let results = &results;
            let errors = &errors;
            scope.spawn(move || {
                for job in jobs.iter().skip(chunk_id).step_by(worker_count) {
                    match run_one_job(cfg, job.task_id, job.seed, &job.formula, artifacts) {
                        Ok(mut recs) => results.lock().unwrap().append(&mut recs),
                        Err(e) => {
                            errors.lock().unwrap().push(format!(
                                "task {} seed {}: {e}",
                                job.task_id, job.seed
                            ));
                            results.lock().unwrap().push(RunRecord {
                                method: "method".into(),
                                task_id: job.task_id,
                                seed: job.seed,
                                curve: Vec::new(),
                                final_success: 0.0,
                                plan: None,
                                wall_time_s: 0.0,
                                failed: Some(e.to_string()),
                            });
                        }
                    }
                }
            });
        }
    });
    records.append(&mut results.into_inner().unwrap());
    records.sort_by(|a, b| {
        (a.task_id, a.seed, a.method.clone()).cmp(&(b.task_id, b.seed, b.method.clone()))
    });
    Ok(TrainingOutput { records, artifacts, tasks })
}

fn run_one_job(
    cfg: &ExperimentConfig,
    task_id: usize,
    seed: u64,
    formula: &Formula,
    artifacts: &BTreeMap<u64, MethodArtifacts>,
) -> Result<Vec<RunRecord>, HarnessError> {
    let fsa = compile_to_fsa(formula)?;
    let art = &artifacts[&seed];
    let mut records = Vec::new();

    // Method: plan over the learned model, execute through controllers.
    let t0 = std::time::Instant::now();
    let mut env = art.env.clone();
    let run = run_method_on_task(&mut env, &art.model, &fsa, cfg.gamma, cfg.vi_sweeps, cfg.horizon)?;
    records.push(RunRecord {
        method: "method".into(),
        task_id,
        seed,
        curve: vec![(art.data_steps, if run.success { 1.0 } else { 0.0 })],
        final_success: if run.success { 1.0 } else { 0.0 },
        plan: run.plan.as_ref().map(|p| p.render()),
        wall_time_s: t0.elapsed().as_secs_f64(),
        failed: None,
    });

    // Baseline 1: product Q-learning.
    let t0 = std::time::Instant::now();
    let mut env = art.env.clone();
    let bcfg = BaselineConfig {
        episodes: cfg.baseline_episodes,
        horizon: cfg.horizon,
        gamma: cfg.gamma,
        seed,
        ..BaselineConfig::default()
    };
    let b1 = baseline1_train(&mut env, &fsa, &bcfg);
    records.push(RunRecord {
        method: "baseline1".into(),
        task_id,
        seed,
        curve: b1.curve.iter().map(|p| (p.env_steps, p.success_rate)).collect(),
        final_success: b1.final_success,
        plan: b1.final_plan.map(|ops| {
            ops.iter().map(|o| format!("{o}\n")).collect::<String>()
        }),
        wall_time_s: t0.elapsed().as_secs_f64(),
        failed: None,
    });

    // Baseline 2: per-automaton-state tables on shared experience.
    let t0 = std::time::Instant::now();
    let mut env = art.env.clone();
    let qrm = qrm_train(&mut env, &fsa, &bcfg);
    records.push(RunRecord {
        method: "baseline2".into(),
        task_id,
        seed,
        curve: qrm.curve.iter().map(|p| (p.env_steps, p.success_rate)).collect(),
        final_success: qrm.final_success,
        plan: qrm.final_plan.map(|ops| {
            ops.iter().map(|o| format!("{o}\n")).collect::<String>()
        }),
        wall_time_s: t0.elapsed().as_secs_f64(),
        failed: None,
    });
    Ok(records)
}

pub struct GeneralizationOutput {
    pub records: Vec<RunRecord>,
    /// Aggregate baseline interactions divided by the method's amortized
    /// one-time data-collection cost.
    pub step_ratio: f64,
    pub method_interactions: u64,
    pub baseline_interactions: u64,
}

/// Fresh unseen tasks: the method replans with zero environment
/// interactions; baseline 1 retrains from a prior table until its first
/// greedy success, with every interaction counted.
pub fn run_generalization(
    cfg: &ExperimentConfig,
    artifacts: &BTreeMap<u64, MethodArtifacts>,
) -> Result<GeneralizationOutput, HarnessError> {
    let family = cfg.family()?;
    let base_env = make_env(&cfg.env)?;
    let fresh = generate_tasks(&base_env, family, cfg.generalization_tasks, 500_000);
    let mut records = Vec::new();
    let mut baseline_total = 0u64;
    let mut method_planning_total = 0u64;

    for (&seed, art) in artifacts {
        let mut b1_prior = ProductQTable::default();
        for (task_id, formula) in fresh.iter().enumerate() {
            let fsa = compile_to_fsa(formula)?;

            // Method: plan only; count any environment interaction.
            let mut env = art.env.clone();
            env.reset();
            let before = env.env_steps();
            let ops = env.grounded_operators();
            let plan_result = {
                let graph = build_product(
                    &art.model,
                    &fsa,
                    &env.state(),
                    &ops,
                    &CostModel::Unit,
                    BuildOptions::default(),
                );
                graph.map(|g| {
                    let tables = value_iteration(&g, cfg.gamma, cfg.vi_sweeps);
                    extract_plan(&g, &tables, g.initial)
                })
            };
            let planning_steps = env.env_steps() - before;
            method_planning_total += planning_steps;
            let solved = matches!(&plan_result, Ok(Ok(_)));
            records.push(RunRecord {
                method: "method".into(),
                task_id,
                seed,
                curve: vec![(planning_steps, if solved { 1.0 } else { 0.0 })],
                final_success: if solved { 1.0 } else { 0.0 },
                plan: plan_result.ok().and_then(|r| r.ok()).map(|p| p.render()),
                wall_time_s: 0.0,
                failed: None,
            });

            // Baseline 1 retrains from its prior table.
            let mut env = art.env.clone();
            let bcfg = BaselineConfig {
                episodes: cfg.baseline_episodes,
                horizon: cfg.horizon,
                gamma: cfg.gamma,
                seed,
                ..BaselineConfig::default()
            };
            let (steps, ok) = baseline1_steps_to_success(&mut env, &fsa, &mut b1_prior, &bcfg);
            baseline_total += steps;
            records.push(RunRecord {
                method: "baseline1".into(),
                task_id,
                seed,
                curve: vec![(steps, if ok { 1.0 } else { 0.0 })],
                final_success: if ok { 1.0 } else { 0.0 },
                plan: None,
                wall_time_s: 0.0,
                failed: None,
            });
        }
    }

    let amortized: u64 = artifacts.values().map(|a| a.data_steps).sum();
    let step_ratio = if amortized == 0 { f64::INFINITY } else { baseline_total as f64 / amortized as f64 };
    Ok(GeneralizationOutput {
        records,
        step_ratio,
        method_interactions: method_planning_total,
        baseline_interactions: baseline_total,
    })
}

/// CSV with the exact column layout `method,task_id,seed,env_steps,success_rate`.
pub fn render_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("method,task_id,seed,env_steps,success_rate\n");
    for r in records {
        for (steps, rate) in &r.curve {
            let _ = writeln!(out, "{},{},{},{},{}", r.method, r.task_id, r.seed, steps, rate);
        }
    }
    out
}

/// Deterministic rule dump to a file; see [`dump_model`].
pub fn dump_rules(model: &TransitionModel, path: &Path) -> Result<(), HarnessError> {
    write_file(path, &dump_model(model))
}

/// Runs training plus generalization, writing CSVs, rule dumps, the
/// materialized config, and a manifest. Returns the manifest path and
/// whether any run failed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(PathBuf, bool), HarnessError> {
    let out = cfg.resolved_out_dir();
    let mut manifest = String::new();
    let mut failed = false;

    let config_path = out.join("config.toml");
    write_file(&config_path, &cfg.materialized())?;
    let _ = writeln!(manifest, "{}", config_path.display());

    let training = run_training(cfg)?;
    for record in &training.records {
        if record.failed.is_some() {
            failed = true;
        }
    }
    let train_csv = out.join("training.csv");
    write_file(&train_csv, &render_csv(&training.records))?;
    let _ = writeln!(manifest, "{}", train_csv.display());

    let tasks_path = out.join("tasks.txt");
    let tasks_text: String =
        training.tasks.iter().map(|f| format!("{f}\n")).collect();
    write_file(&tasks_path, &tasks_text)?;
    let _ = writeln!(manifest, "{}", tasks_path.display());

    for (seed, art) in &training.artifacts {
        let rules_path = out.join(format!("rules-seed{seed}.txt"));
        dump_rules(&art.model, &rules_path)?;
        let _ = writeln!(manifest, "{}", rules_path.display());
        let report_path = out.join(format!("learning-report-seed{seed}.txt"));
        let report: String = art.reports.iter().map(|r| format!("{}\n", r.line())).collect();
        write_file(&report_path, &report)?;
        let _ = writeln!(manifest, "{}", report_path.display());
        if !art.reports.iter().all(|r| r.separable) {
            failed = true;
        }
    }

    let gen = run_generalization(cfg, &training.artifacts)?;
    let gen_csv = out.join("generalization.csv");
    write_file(&gen_csv, &render_csv(&gen.records))?;
    let _ = writeln!(manifest, "{}", gen_csv.display());

    let summary_path = out.join("summary.txt");
    let mut summary = String::new();
    let _ = writeln!(summary, "method planning interactions: {}", gen.method_interactions);
    let _ = writeln!(summary, "baseline-1 retraining interactions: {}", gen.baseline_interactions);
    let _ = writeln!(
        summary,
        "baseline/method interaction ratio (method charged its amortized data collection): {:.2}",
        gen.step_ratio
    );
    for (seed, art) in &training.artifacts {
        let _ = writeln!(
            summary,
            "seed {seed}: data collection {} steps, controller pretraining ~{} steps",
            art.data_steps, art.controller_steps
        );
    }
    write_file(&summary_path, &summary)?;
    let _ = writeln!(manifest, "{}", summary_path.display());

    let manifest_path = out.join("manifest.txt");
    write_file(&manifest_path, &manifest)?;
    Ok((manifest_path, failed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_with_defaults_materialized() {
        let cfg = ExperimentConfig::load("env = \"reacher-5\"\ntasks = 2\n").unwrap();
        assert_eq!(cfg.env, "reacher-5");
        assert_eq!(cfg.tasks, 2);
        assert_eq!(cfg.gamma, 0.95);
        let text = cfg.materialized();
        let back = ExperimentConfig::load(&text).unwrap();
        assert_eq!(back.materialized(), text);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ExperimentConfig::load("envv = \"x\"\n").is_err());
    }

    #[test]
    fn method_solves_reacher_tasks_end_to_end() {
        let cfg = ExperimentConfig {
            env: "reacher-5".into(),
            tasks: 3,
            seeds: vec![0],
            data_episodes: 40,
            data_max_len: 50,
            baseline_episodes: 60,
            horizon: 12,
            ..ExperimentConfig::default()
        };
        let art = method_pipeline(&cfg, 0).unwrap();
        assert!(art.reports.iter().all(|r| r.separable));
        let tasks = generate_tasks(&art.env, TaskFamily::Sequential, 3, 7_000);
        assert_eq!(tasks.len(), 3);
        for formula in &tasks {
            let fsa = compile_to_fsa(formula).unwrap();
            let mut env = art.env.clone();
            let run =
                run_method_on_task(&mut env, &art.model, &fsa, 0.95, DEFAULT_SWEEP_CAP, 15)
                    .unwrap();
            assert!(run.success, "{formula}");
            assert_eq!(run.planning_steps, 0, "planning never touches the environment");
        }
    }

    #[test]
    fn csv_layout() {
        let records = vec![RunRecord {
            method: "method".into(),
            task_id: 1,
            seed: 2,
            curve: vec![(100, 1.0)],
            final_success: 1.0,
            plan: None,
            wall_time_s: 0.0,
            failed: None,
        }];
        let csv = render_csv(&records);
        assert_eq!(csv, "method,task_id,seed,env_steps,success_rate\nmethod,1,2,100,1\n");
    }
}
