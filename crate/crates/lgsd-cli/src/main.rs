//! `lgsd`: train language-guided skills, roll them out against
//! natural-language goals, verify the math, and emit evaluation artifacts.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage/config error.

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use lgsd_core::checkpoint::Checkpoint;
use lgsd_core::config::load_config;
use lgsd_core::eval;
use lgsd_core::metric::{induced_pseudometric, verify_claim1, verify_pseudometric, AdjacencyGraph};
use lgsd_core::suites;
use lgsd_core::trainer::{self, Components};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lgsd", version, about = "Language-guided skill discovery at desk scale")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a skill-conditioned policy; writes checkpoint.json,
    /// run_log.jsonl, and config_resolved.json into --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides trainer.seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the hierarchical single-goal controller over a trained
    /// low-level checkpoint.
    TrainHier {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        low_ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reach a natural-language goal zero-shot and report the success rate.
    Goal {
        #[arg(long)]
        ckpt: PathBuf,
        /// Goal sentence, e.g. "The object's x, y position is [0.3, 0.2]".
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a verification suite; exits 1 if any property fails.
    Verify {
        #[arg(long)]
        suite: Suite,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Graph JSON ({"nodes": [...], "edges": [[i, j, w], ...]}) for the
        /// metric suite.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// JSON table of per-node representation values for the Lipschitz
        /// implication check.
        #[arg(long)]
        phi: Option<PathBuf>,
        /// Where to write the JSON report (stdout always gets a copy).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute a metric over trajectories (from a checkpoint or a CSV).
    Eval {
        #[arg(long)]
        metric: MetricKind,
        #[arg(long)]
        cell: Option<f64>,
        #[arg(long)]
        traj: Option<PathBuf>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Emit trajectory CSV plus latent-trace CSV/SVG for a checkpoint.
    Plot {
        #[arg(long)]
        ckpt: PathBuf,
        /// Reuse an existing trajectory CSV instead of fresh rollouts.
        #[arg(long)]
        traj: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Suite {
    Metric,
    Grad,
    Telescope,
    Constraint,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricKind {
    Coverage,
    MovedDistance,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Train { config, out, seed } => cmd_train(&config, &out, seed),
        Cmd::TrainHier { config, low_ckpt, out, seed } => {
            cmd_train_hier(&config, &low_ckpt, &out, seed)
        }
        Cmd::Goal { ckpt, text, episodes, radius, seed } => {
            cmd_goal(&ckpt, &text, episodes, radius, seed)
        }
        Cmd::Verify { suite, ckpt, graph, phi, out, seed } => {
            cmd_verify(suite, ckpt.as_deref(), graph.as_deref(), phi.as_deref(), out.as_deref(), seed)
        }
        Cmd::Eval { metric, cell, traj, ckpt, episodes, out, seed } => {
            cmd_eval(metric, cell, traj.as_deref(), ckpt.as_deref(), episodes, out.as_deref(), seed)
        }
        Cmd::Plot { ckpt, traj, out, episodes, seed } => {
            cmd_plot(&ckpt, traj.as_deref(), &out, episodes, seed)
        }
    }
}

fn cmd_train(config_path: &Path, out: &Path, seed: Option<u64>) -> anyhow::Result<ExitCode> {
    let mut config = load_config(config_path)?;
    if let Some(s) = seed {
        config.trainer.seed = s;
    }
    let output = trainer::train_full(&config, Some(out), &mut |_| {})?;
    trainer::save_artifacts(out, &config, &output)?;
    println!(
        "trained {} epochs; checkpoint {}",
        output.checkpoint.epoch,
        out.join("checkpoint.json").display()
    );
    if let Some(last) = output.log.last() {
        println!(
            "final epoch: intrinsic return {:.4}, lambda {:.2}, violation fraction {:.4}",
            last.intrinsic_return_mean, last.lambda, last.violation_fraction
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_train_hier(
    config_path: &Path,
    low_ckpt: &Path,
    out: &Path,
    seed: Option<u64>,
) -> anyhow::Result<ExitCode> {
    let mut config = load_config(config_path)?;
    if let Some(s) = seed {
        config.trainer.seed = s;
    }
    let low = Checkpoint::load(low_ckpt)?;
    let output = trainer::train_hier(&config, &low)?;
    std::fs::create_dir_all(out)?;
    output.checkpoint.save(&out.join("checkpoint_hier.json"))?;
    let mut log = String::new();
    for row in &output.log {
        log.push_str(&serde_json::to_string(row)?);
        log.push('\n');
    }
    std::fs::write(out.join("hier_log.jsonl"), log)?;
    std::fs::write(out.join("config_resolved.json"), config.to_pretty_json()?)?;
    println!("hierarchical controller success rate: {:.3}", output.final_success);
    Ok(ExitCode::SUCCESS)
}

fn cmd_goal(
    ckpt_path: &Path,
    text: &str,
    episodes: usize,
    radius: f64,
    seed: u64,
) -> anyhow::Result<ExitCode> {
    if episodes == 0 {
        bail!("--episodes must be at least 1");
    }
    let ckpt = Checkpoint::load(ckpt_path)?;
    let report = eval::zero_shot_goal(&ckpt, text, radius, episodes, seed)?;
    println!(
        "goal [{:.2}, {:.2}] skill [{}] radius {radius}",
        report.goal[0],
        report.goal[1],
        report
            .skill
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    for (i, pos) in report.terminal_positions.iter().enumerate() {
        println!("episode {i}: terminal position [{:.4}, {:.4}]", pos[0], pos[1]);
    }
    println!("success rate: {:.3}", report.success_rate);
    Ok(ExitCode::SUCCESS)
}

fn emit_report<T: serde::Serialize>(report: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    println!("{json}");
    if let Some(path) = out {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, json)?;
    }
    Ok(())
}

fn cmd_verify(
    suite: Suite,
    ckpt: Option<&Path>,
    graph: Option<&Path>,
    phi: Option<&Path>,
    out: Option<&Path>,
    seed: u64,
) -> anyhow::Result<ExitCode> {
    let ckpt = match ckpt {
        Some(p) => Some(Checkpoint::load(p)?),
        None => None,
    };
    let passed = match suite {
        Suite::Metric => {
            if let Some(graph_path) = graph {
                let g = AdjacencyGraph::load(graph_path)?;
                let induced = induced_pseudometric(&g)?;
                let axioms = verify_pseudometric(&induced);
                let claim1 = match phi {
                    Some(phi_path) => {
                        let table: Vec<Vec<f64>> =
                            serde_json::from_str(&std::fs::read_to_string(phi_path)?)
                                .context("phi table must be a JSON array of arrays")?;
                        Some(verify_claim1(&g, &table)?)
                    }
                    None => None,
                };
                let passed =
                    axioms.is_valid() && claim1.as_ref().map_or(true, |c| c.holds());
                let report = serde_json::json!({
                    "graph_nodes": g.n(),
                    "axioms": axioms,
                    "claim1": claim1,
                    "passed": passed,
                });
                emit_report(&report, out)?;
                passed
            } else {
                let report = suites::metric_suite(100, seed)?;
                emit_report(&report, out)?;
                report.passed
            }
        }
        Suite::Grad => {
            let report = suites::grad_suite(seed)?;
            println!("max relative error: {:.3e}", report.max_rel_err);
            emit_report(&report, out)?;
            report.passed
        }
        Suite::Telescope => {
            let report = suites::telescope_suite(ckpt.as_ref(), 100, seed)?;
            emit_report(&report, out)?;
            report.passed
        }
        Suite::Constraint => {
            let ckpt = ckpt
                .ok_or_else(|| anyhow!("--suite constraint requires --ckpt"))?;
            let report = suites::constraint_suite(&ckpt, 8, seed)?;
            emit_report(&report, out)?;
            report.passed
        }
    };
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn load_trajectories(
    traj: Option<&Path>,
    ckpt: Option<&Path>,
    episodes: Option<usize>,
    seed: u64,
) -> anyhow::Result<eval::TrajectorySet> {
    match (traj, ckpt) {
        (Some(path), _) => {
            let csv = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read trajectory file {}", path.display()))?;
            Ok(eval::trajectories_from_csv(&csv)?)
        }
        (None, Some(ckpt_path)) => {
            let ckpt = Checkpoint::load(ckpt_path)?;
            let n = episodes.unwrap_or(ckpt.config.eval.episodes);
            if n == 0 {
                bail!("--episodes must be at least 1");
            }
            Ok(eval::rollout_skills(&ckpt, n, seed)?)
        }
        (None, None) => bail!("provide either --traj or --ckpt"),
    }
}

fn cmd_eval(
    metric: MetricKind,
    cell: Option<f64>,
    traj: Option<&Path>,
    ckpt: Option<&Path>,
    episodes: Option<usize>,
    out: Option<&Path>,
    seed: u64,
) -> anyhow::Result<ExitCode> {
    if episodes == Some(0) {
        bail!("--episodes must be at least 1");
    }
    let trajs = load_trajectories(traj, ckpt, episodes, seed)?;
    let report = match metric {
        MetricKind::Coverage => {
            let cell = cell.unwrap_or(0.01);
            if cell <= 0.0 {
                bail!("--cell must be positive");
            }
            serde_json::json!({
                "metric": "coverage",
                "cell": cell,
                "episodes": trajs.episodes.len(),
                "value": eval::coverage(&trajs, cell),
            })
        }
        MetricKind::MovedDistance => serde_json::json!({
            "metric": "moved_distance",
            "episodes": trajs.episodes.len(),
            "value": eval::moved_distance(&trajs)?,
        }),
    };
    emit_report(&report, out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_plot(
    ckpt_path: &Path,
    traj: Option<&Path>,
    out: &Path,
    episodes: usize,
    seed: u64,
) -> anyhow::Result<ExitCode> {
    if episodes == 0 && traj.is_none() {
        bail!("--episodes must be at least 1");
    }
    let ckpt = Checkpoint::load(ckpt_path)?;
    let trajs = load_trajectories(traj, Some(ckpt_path), Some(episodes), seed)?;
    let c = Components::from_checkpoint(&ckpt)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("trajectories.csv"), eval::trajectories_to_csv(&trajs))?;
    std::fs::write(
        out.join("latent_trace.csv"),
        eval::latent_trace_csv(&c.phi, &trajs.episodes[0])?,
    )?;
    let meta = serde_json::json!({
        "checkpoint_id": ckpt.content_id()?,
        "seed": seed,
        "episodes": trajs.episodes.len(),
    });
    std::fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    if c.phi.out_dim() == 2 {
        std::fs::write(
            out.join("latent_trace.svg"),
            eval::latent_trace_svg(&c.phi, &trajs.episodes[0])?,
        )?;
    } else {
        eprintln!(
            "warning: skill dimension is {}, latent drawing skipped (CSV only)",
            c.phi.out_dim()
        );
    }
    println!("artifacts written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}
