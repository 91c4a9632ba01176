//! Command-line front end for the victim-tagging laboratory.
//!
//! Subcommands map onto the library one to one: `gen-instance` and
//! `simulate` drive the discrete-time simulator, `solve-exact` the
//! branch-and-bound routing solver, `bench` the frozen comparison tables,
//! and `train` / `evaluate` / `grid-search` the learned policy.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vtlab_core::domain::generate_instance;
use vtlab_core::exact::{build_ilp_text, solve_exact, SolveLimits};
use vtlab_core::experiments::{
    check_heuristic_cells, find_preset, run_heuristic_baselines, run_learned_comparison,
    tagged_curves, write_heuristic_csv, DEFAULT_HEURISTIC_PRESETS, E_PRESETS, R_PRESETS,
};
use vtlab_core::sim::run_episode;
use vtlab_core::train::{evaluate, grid_search, load_checkpoint, train, TrainConfig};
use vtlab_core::{Instance, PolicyKind, ScenarioConfig};

#[derive(Parser)]
#[command(name = "vtlab", version, about = "Victim-tagging laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded incident instance and write it as JSON.
    GenInstance {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Instance seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output file (stdout when omitted).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run one simulated episode and report its completion time.
    Simulate {
        /// Selection policy.
        #[arg(long)]
        policy: PolicyKind,
        /// Replay a stored instance instead of generating one.
        #[arg(long, conflicts_with = "preset")]
        instance: Option<PathBuf>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Instance and scheduler seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Proximity radius (arrival and preemption threshold).
        #[arg(long, default_value_t = 1.0)]
        zeta: f64,
        /// Write the tagged-count series as CSV.
        #[arg(long)]
        series_csv: Option<PathBuf>,
        /// Write the per-responder state timeline as CSV.
        #[arg(long)]
        timeline_csv: Option<PathBuf>,
    },
    /// Solve the min-max routing problem exactly (small instances).
    SolveExact {
        /// Replay a stored instance instead of generating one.
        #[arg(long, conflicts_with = "preset")]
        instance: Option<PathBuf>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Instance seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Victim-count cap (the search space grows factorially).
        #[arg(long, default_value_t = 9)]
        max_victims: usize,
        /// Wall-clock budget in seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        /// Write the integer program in LP text format.
        #[arg(long)]
        lp: Option<PathBuf>,
        /// Write the solution (routes, makespan) as JSON.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Reference tables and comparison runs.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Train the factorized Q-network on a preset or a config file.
    Train {
        /// Training preset (r1 through r8).
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// JSON file mirroring the training config fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the episode count.
        #[arg(long)]
        episodes: Option<u64>,
        /// Override the training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for checkpoints and the training curve.
        #[arg(long, default_value = "results/train")]
        out: PathBuf,
    },
    /// Evaluate a trained checkpoint greedily on fresh instances.
    Evaluate {
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of evaluation episodes.
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        /// Base seed for the evaluation instances.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Sweep learning rate, discount, and batch size around a preset.
    GridSearch {
        /// Training preset whose scenario and remaining hyperparameters
        /// anchor the sweep.
        #[arg(long)]
        preset: String,
        /// Episodes per cell (full preset budgets take hours; sweeps use a
        /// shorter budget by default).
        #[arg(long, default_value_t = 1_000)]
        episodes: u64,
        /// Evaluation episodes per cell.
        #[arg(long, default_value_t = 20)]
        eval_episodes: usize,
        /// Write the sweep results as CSV.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Heuristic completion-time table against the frozen references.
    Table3 {
        /// Run all nine presets instead of the five quick ones (the large
        /// presets take considerably longer).
        #[arg(long)]
        full: bool,
        /// Episodes per (preset, policy) cell.
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        /// Base seed for the experiment streams.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Exit nonzero if any cell deviates from its reference beyond the
        /// tolerance.
        #[arg(long)]
        check: bool,
        /// Allowed relative deviation from the reference means.
        #[arg(long, default_value_t = 0.15)]
        tolerance: f64,
        /// Output CSV path.
        #[arg(short, long, default_value = "results/table3.csv")]
        out: PathBuf,
    },
    /// Learned policy vs. heuristics on identical evaluation instances.
    Table4 {
        /// Training preset the checkpoint belongs to.
        #[arg(long, requires = "checkpoint")]
        preset: Option<String>,
        /// Checkpoint file for --preset.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory holding `<preset>/checkpoint_final.json` entries; every
        /// preset found is compared.
        #[arg(long, conflicts_with_all = ["preset", "checkpoint"])]
        checkpoints: Option<PathBuf>,
        /// Evaluation episodes per preset.
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        /// Base seed for the evaluation instances.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV path.
        #[arg(short, long, default_value = "results/table4.csv")]
        out: PathBuf,
    },
    /// Mean tagging-progress curves for all five heuristics on one preset.
    Curves {
        /// Scenario preset (e1 through e9).
        #[arg(long)]
        preset: String,
        /// Episodes averaged per policy.
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        /// Base seed for the experiment streams.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV path.
        #[arg(short, long, default_value = "results/curves.csv")]
        out: PathBuf,
    },
}

/// Scenario shape: a named preset or explicit dimensions.
#[derive(Args)]
struct ScenarioArgs {
    /// Named scenario preset (e1-e9, r1-r8).
    #[arg(long)]
    preset: Option<String>,
    /// Responder count.
    #[arg(long, visible_alias = "n", default_value_t = 5)]
    responders: usize,
    /// Victim count.
    #[arg(long, visible_alias = "m", default_value_t = 10)]
    victims: usize,
    /// Area width.
    #[arg(long, default_value_t = 100.0)]
    width: f64,
    /// Area height.
    #[arg(long, default_value_t = 60.0)]
    height: f64,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        match &self.preset {
            Some(name) => {
                let preset =
                    find_preset(name).with_context(|| format!("unknown preset `{name}`"))?;
                Ok(preset.scenario())
            }
            None => Ok(ScenarioConfig::new(self.responders, self.victims, self.width, self.height)),
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let instance: Instance = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("{} is not an instance file", path.display()))?;
    Ok(instance)
}

fn resolve_instance(
    stored: &Option<PathBuf>,
    scenario: &ScenarioArgs,
    seed: u64,
) -> Result<Instance> {
    match stored {
        Some(path) => load_instance(path),
        None => Ok(generate_instance(&scenario.resolve()?, seed)?),
    }
}

fn create_output(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let file =
        File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenInstance { scenario, seed, out } => gen_instance(&scenario, seed, out),
        Command::Simulate { policy, instance, scenario, seed, zeta, series_csv, timeline_csv } => {
            simulate(policy, &instance, &scenario, seed, zeta, series_csv, timeline_csv)
        }
        Command::SolveExact {
            instance,
            scenario,
            seed,
            max_victims,
            time_limit,
            lp,
            solution,
        } => solve(&instance, &scenario, seed, max_victims, time_limit, lp, solution),
        Command::Bench(bench) => match bench {
            BenchCommand::Table3 { full, iterations, seed, check, tolerance, out } => {
                table3(full, iterations, seed, check, tolerance, &out)
            }
            BenchCommand::Table4 { preset, checkpoint, checkpoints, episodes, seed, out } => {
                table4(preset, checkpoint, checkpoints, episodes, seed, &out)
            }
            BenchCommand::Curves { preset, iterations, seed, out } => {
                curves(&preset, iterations, seed, &out)
            }
        },
        Command::Train { preset, config, episodes, seed, out } => {
            run_train(preset, config, episodes, seed, &out)
        }
        Command::Evaluate { checkpoint, iterations, seed } => {
            run_evaluate(&checkpoint, iterations, seed)
        }
        Command::GridSearch { preset, episodes, eval_episodes, out } => {
            run_grid_search(&preset, episodes, eval_episodes, out)
        }
    }
}

fn gen_instance(scenario: &ScenarioArgs, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let instance = generate_instance(&scenario.resolve()?, seed)?;
    match out {
        Some(path) => {
            let mut w = create_output(&path)?;
            serde_json::to_writer_pretty(&mut w, &instance)?;
            w.flush()?;
            println!(
                "wrote {} ({} responders, {} victims, seed {})",
                path.display(),
                instance.n_responders(),
                instance.n_victims(),
                seed
            );
        }
        None => {
            serde_json::to_writer_pretty(std::io::stdout().lock(), &instance)?;
            println!();
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    policy: PolicyKind,
    stored: &Option<PathBuf>,
    scenario: &ScenarioArgs,
    seed: u64,
    zeta: f64,
    series_csv: Option<PathBuf>,
    timeline_csv: Option<PathBuf>,
) -> Result<()> {
    let instance = resolve_instance(stored, scenario, seed)?;
    let episode = run_episode(&instance, policy, zeta, seed)?;
    println!(
        "policy {} tagged {} victims in {} steps (seed {})",
        policy,
        instance.n_victims(),
        episode.t_all,
        seed
    );
    println!("tags per responder: {:?}", episode.tags_per_responder);
    if let Some(path) = series_csv {
        episode.write_series_csv(create_output(&path)?)?;
        println!("series -> {}", path.display());
    }
    if let Some(path) = timeline_csv {
        episode.write_timeline_csv(create_output(&path)?)?;
        println!("timeline -> {}", path.display());
    }
    Ok(())
}

fn solve(
    stored: &Option<PathBuf>,
    scenario: &ScenarioArgs,
    seed: u64,
    max_victims: usize,
    time_limit: Option<f64>,
    lp: Option<PathBuf>,
    solution_out: Option<PathBuf>,
) -> Result<()> {
    let instance = resolve_instance(stored, scenario, seed)?;
    if let Some(path) = &lp {
        let text = build_ilp_text(&instance)?;
        let mut w = create_output(path)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        println!("integer program -> {}", path.display());
    }
    let limits = SolveLimits {
        max_victims,
        time_limit: time_limit.map(Duration::from_secs_f64),
    };
    let solution = solve_exact(&instance, &limits)?;
    println!("optimal makespan: {:.3}", solution.makespan);
    for (i, route) in solution.routes.iter().enumerate() {
        println!(
            "  responder {i}: victims {:?} (done at {:.3})",
            route, solution.per_responder_time[i]
        );
    }
    if let Some(path) = solution_out {
        let mut w = create_output(&path)?;
        serde_json::to_writer_pretty(&mut w, &solution)?;
        w.flush()?;
        println!("solution -> {}", path.display());
    }
    Ok(())
}

fn table3(
    full: bool,
    iterations: usize,
    seed: u64,
    check: bool,
    tolerance: f64,
    out: &Path,
) -> Result<()> {
    let presets: Vec<&str> = if full {
        E_PRESETS.iter().map(|p| p.name).collect()
    } else {
        DEFAULT_HEURISTIC_PRESETS.to_vec()
    };
    let cells = run_heuristic_baselines(&presets, iterations, seed)?;
    println!("{:<7}{:<7}{:>9}{:>9}{:>10}", "preset", "policy", "mean", "std", "reference");
    for cell in &cells {
        let reference =
            cell.expected.map_or_else(|| "-".to_string(), |e| format!("{e:.0}"));
        println!(
            "{:<7}{:<7}{:>9.1}{:>9.1}{:>10}",
            cell.preset,
            cell.policy.name(),
            cell.mean,
            cell.std,
            reference
        );
    }
    write_heuristic_csv(&cells, create_output(out)?)?;
    println!("table -> {}", out.display());
    if check {
        let failures = check_heuristic_cells(&cells, tolerance);
        if !failures.is_empty() {
            for failure in &failures {
                eprintln!("tolerance breach: {failure}");
            }
            std::process::exit(1);
        }
        println!("all cells within {:.0}% of their references", tolerance * 100.0);
    }
    Ok(())
}

fn table4(
    preset: Option<String>,
    checkpoint: Option<PathBuf>,
    checkpoints: Option<PathBuf>,
    episodes: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    // Either one explicit (preset, checkpoint) pair or a directory scan.
    let mut jobs: Vec<(String, PathBuf)> = Vec::new();
    match (preset, checkpoint, checkpoints) {
        (Some(name), Some(path), None) => jobs.push((name, path)),
        (None, None, Some(dir)) => {
            for preset in &R_PRESETS {
                let path = dir.join(preset.name).join("checkpoint_final.json");
                if path.exists() {
                    jobs.push((preset.name.to_string(), path));
                }
            }
            if jobs.is_empty() {
                bail!(
                    "no `<preset>/checkpoint_final.json` under {}; train some presets first",
                    dir.display()
                );
            }
        }
        _ => bail!("pass either --preset with --checkpoint, or --checkpoints <dir>"),
    }

    let mut w = create_output(out)?;
    writeln!(w, "preset,policy,mean,std")?;
    for (name, path) in jobs {
        let table = run_learned_comparison(&name, &path, episodes, seed)?;
        println!("{} ({} evaluation episodes):", table.preset, table.eval_episodes);
        for row in &table.rows {
            println!("  {:<6} mean {:>8.2}  std {:>7.2}", row.policy, row.mean, row.std);
            writeln!(w, "{},{},{:.3},{:.3}", table.preset, row.policy, row.mean, row.std)?;
        }
    }
    w.flush()?;
    println!("table -> {}", out.display());
    Ok(())
}

fn curves(preset: &str, iterations: usize, seed: u64, out: &Path) -> Result<()> {
    let table = tagged_curves(preset, iterations, seed)?;
    table.write_csv(create_output(out)?)?;
    println!(
        "{} mean tagging curves over {} episodes -> {}",
        table.preset,
        table.iterations,
        out.display()
    );
    Ok(())
}

fn run_train(
    preset: Option<String>,
    config_path: Option<PathBuf>,
    episodes: Option<u64>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut config = match (&preset, &config_path) {
        (Some(name), None) => TrainConfig::for_preset(name)
            .with_context(|| format!("`{name}` is not a training preset (use r1-r8)"))?,
        (None, Some(path)) => {
            let file =
                File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            serde_json::from_reader(BufReader::new(file))
                .with_context(|| format!("{} is not a training config", path.display()))?
        }
        _ => bail!("pass exactly one of --preset or --config"),
    };
    if let Some(episodes) = episodes {
        config.episodes = episodes;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }

    let label = preset.unwrap_or_else(|| "custom".to_string());
    let dir = out.join(&label);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;

    println!(
        "training {label}: {} episodes on {}x{} ({} responders, {} victims), seed {}",
        config.episodes,
        config.scenario.width,
        config.scenario.height,
        config.scenario.n_responders,
        config.scenario.n_victims,
        config.seed
    );
    let outcome = train(&config, Some(&dir))?;
    let curve_path = dir.join("training_curve.csv");
    outcome.write_curve_csv(create_output(&curve_path)?)?;

    println!(
        "trained {} episodes ({} env steps, {} optimizer steps) in {:.1}s",
        outcome.curve.len(),
        outcome.env_steps,
        outcome.opt_steps,
        outcome.wall_seconds
    );
    println!("checkpoint -> {}", dir.join("checkpoint_final.json").display());
    println!("curve -> {}", curve_path.display());
    Ok(())
}

fn run_evaluate(checkpoint_path: &Path, iterations: usize, seed: u64) -> Result<()> {
    let checkpoint = load_checkpoint(checkpoint_path)?;
    let scenario = checkpoint.config.scenario.clone();
    let report = evaluate(&checkpoint.params, &scenario, checkpoint.config.bins, iterations, seed)?;
    println!(
        "{} episodes: mean t_all {:.2} (std {:.2}), mean reward {:.2}, {} completed",
        report.episodes, report.mean_t_all, report.std_t_all, report.mean_reward, report.completed
    );
    Ok(())
}

fn run_grid_search(
    preset: &str,
    episodes: u64,
    eval_episodes: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut base = TrainConfig::for_preset(preset)
        .with_context(|| format!("`{preset}` is not a training preset (use r1-r8)"))?;
    base.episodes = episodes;
    let results =
        grid_search(&base, &[5e-4, 1e-3], &[0.95, 0.99], &[64, 128], eval_episodes)?;
    println!("{:<10}{:<8}{:<7}{:>10}{:>12}", "lr", "gamma", "batch", "mean", "reward");
    for r in &results {
        println!(
            "{:<10}{:<8}{:<7}{:>10.2}{:>12.2}",
            r.learning_rate, r.gamma, r.batch_size, r.mean_t_all, r.mean_reward
        );
    }
    if let Some(path) = out {
        let mut w = create_output(&path)?;
        writeln!(w, "learning_rate,gamma,batch_size,mean_t_all,mean_reward")?;
        for r in &results {
            writeln!(
                w,
                "{},{},{},{:.3},{:.3}",
                r.learning_rate, r.gamma, r.batch_size, r.mean_t_all, r.mean_reward
            )?;
        }
        w.flush()?;
        println!("sweep -> {}", path.display());
    }
    Ok(())
}
