use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opal::envs::{make_env, Environment};
use opal::harness::{run_experiment, ExperimentConfig};
use opal::learn::{
    collect_dataset, dump_model, learn_model_from_dataset, load_model, LearnOptions,
    TransitionDataset,
};
use opal::ltl::{compile_to_fsa, parse_ltl};
use opal::planner::{
    build_product, extract_plan, value_iteration, BuildOptions, CostModel, DEFAULT_GAMMA,
    DEFAULT_SWEEP_CAP,
};
use opal::tasks::{gen_task, TaskFamily};

#[derive(Parser)]
#[command(name = "opal", version, about = "Learn symbolic operator models, compile temporal-logic tasks, and plan over their product")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a co-safe formula and compile it to a deterministic automaton.
    CompileLtl {
        #[arg(long)]
        formula: String,
        /// Structured-text output path.
        #[arg(long)]
        out: PathBuf,
        /// Also write a GraphViz rendering here.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Collect transitions from a built-in environment and learn its
    /// operator rules.
    LearnModel {
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, default_value_t = 100)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Reuse a saved dataset instead of collecting.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Save the collected dataset here.
        #[arg(long)]
        save_dataset: Option<PathBuf>,
    },
    /// Plan for a task formula over a learned model.
    Plan {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        formula: String,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the product graph in GraphViz form.
        #[arg(long)]
        dump_graph: Option<PathBuf>,
    },
    /// Generate task formulas over an environment's subgoal atoms.
    GenTasks {
        #[arg(long)]
        env: String,
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full training + generalization protocol from a config file.
    RunExperiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Reformat a model dump into canonical order.
    DumpRules {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &PathBuf, content: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
        }
    }
    std::fs::write(path, content).map_err(|e| format!("{}: {e}", path.display()))
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::CompileLtl { formula, out, dot } => {
            let phi = parse_ltl(&formula).map_err(|e| e.to_string())?;
            let fsa = compile_to_fsa(&phi).map_err(|e| e.to_string())?;
            write(&out, &format!("# automaton for: {phi}\n{}", fsa.render()))?;
            println!("{} states, {} accepting -> {}", fsa.len(), fsa.accepting.len(), out.display());
            if let Some(dot_path) = dot {
                write(&dot_path, &fsa.render_dot())?;
                println!("dot -> {}", dot_path.display());
            }
            Ok(())
        }
        Command::LearnModel { env, episodes, max_len, seed, out, dataset, save_dataset } => {
            let mut env = make_env(&env).map_err(|e| e.to_string())?;
            let data = match dataset {
                Some(path) => {
                    let text = read(&path)?;
                    TransitionDataset::parse(&text)
                        .map_err(|e| e.to_string())?
                        .with_sorts(&env.spec().objects)
                }
                None => collect_dataset(&mut env, episodes, max_len, seed)
                    .map_err(|e| e.to_string())?,
            };
            if let Some(path) = save_dataset {
                write(&path, &data.render())?;
                println!("dataset ({} transitions) -> {}", data.len(), path.display());
            }
            let opts = LearnOptions { seed, ..LearnOptions::default() };
            let spec = env.spec().clone();
            let learned =
                learn_model_from_dataset(&spec, &data, &opts).map_err(|e| e.to_string())?;
            for report in &learned.reports {
                println!("{}", report.line());
            }
            write(&out, &dump_model(&learned.model))?;
            println!("{} rules -> {}", learned.model.rules.len(), out.display());
            if !learned.all_separable() {
                return Err("some clusters were not separable at 100% training accuracy".into());
            }
            Ok(())
        }
        Command::Plan { model, formula, env, seed, dump_graph } => {
            let _ = seed;
            let model = load_model(&read(&model)?).map_err(|e| e.to_string())?;
            let phi = parse_ltl(&formula).map_err(|e| e.to_string())?;
            let fsa = compile_to_fsa(&phi).map_err(|e| e.to_string())?;
            let mut env = make_env(&env).map_err(|e| e.to_string())?;
            env.reset();
            let ops = env.grounded_operators();
            let graph = build_product(
                &model,
                &fsa,
                &env.state(),
                &ops,
                &CostModel::Unit,
                BuildOptions::default(),
            )
            .map_err(|e| e.to_string())?;
            if let Some(path) = dump_graph {
                write(&path, &graph.render_dot())?;
                println!("product graph ({} nodes) -> {}", graph.len(), path.display());
            }
            let tables = value_iteration(&graph, DEFAULT_GAMMA, DEFAULT_SWEEP_CAP);
            let plan =
                extract_plan(&graph, &tables, graph.initial).map_err(|e| e.to_string())?;
            print!("{}", plan.render());
            Ok(())
        }
        Command::GenTasks { env, family, count, seed, out } => {
            let family = TaskFamily::parse(&family)
                .ok_or_else(|| format!("unknown family {family:?} (use seq|or|rec)"))?;
            let env = make_env(&env).map_err(|e| e.to_string())?;
            let pool = env.subgoal_atoms();
            let mut lines = String::new();
            let mut s = seed;
            let mut produced = 0;
            while produced < count && s < seed + 10_000 {
                if let Ok(task) = gen_task(family, &pool, s) {
                    lines.push_str(&format!("{}\n", task.formula));
                    produced += 1;
                }
                s += 1;
            }
            write(&out, &lines)?;
            println!("{produced} tasks -> {}", out.display());
            Ok(())
        }
        Command::RunExperiment { config } => {
            let cfg = ExperimentConfig::load(&read(&config)?).map_err(|e| e.to_string())?;
            let (manifest, failed) = run_experiment(&cfg).map_err(|e| e.to_string())?;
            println!("manifest -> {}", manifest.display());
            if failed {
                return Err("at least one run failed".into());
            }
            Ok(())
        }
        Command::DumpRules { model, out } => {
            let model = load_model(&read(&model)?).map_err(|e| e.to_string())?;
            write(&out, &dump_model(&model))?;
            println!("{} rules -> {}", model.rules.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
