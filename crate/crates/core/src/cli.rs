//! Command-line front end.
//!
//! Configuration is resolved as: experiment preset, then the `--config` file,
//! then each `--set KEY=VALUE` in order, then `--seeds`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::abstraction::cluster_connectivity;
use crate::envs::Environment;
use crate::error::{io_err, Error, Result};
use crate::harness::artifact::RunArtifact;
use crate::harness::config::{ExperimentConfig, EXPERIMENTS};
use crate::harness::experiments::{agent_for, evaluate, row, run_experiment, seed_rng, train_fully, EnvBox, EVAL_STREAM};
use crate::harness::metrics::MetricSeries;
use crate::harness::output::{clusters_csv, cluster_svg, csv_text, emit_outputs, policy_maps_csv, write_curve_plots};
use crate::planner::{AgentKind, Planner};
use crate::successor::default_transition;

#[derive(Debug, Parser)]
#[command(name = "hai-sr", version, about = "Hierarchical active inference over successor representations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Key-value config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Experiment id, e.g. E1 or E6:large
    #[arg(long)]
    pub experiment: Option<String>,
    /// Number of seeds
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Output directory (default runs/<experiment>)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Config override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write metrics, tables, plots and artifacts
    Train(Common),
    /// Evaluate saved planners from the task start
    Eval(Common),
    /// Explore, discover macro states and write the clustering of each seed
    Cluster(Common),
    /// Point saved planners at each configured goal without retraining
    Replan(Common),
    /// Run an experiment once per value of one config key
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Config key to vary
        #[arg(long)]
        param: String,
        /// Values, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Redraw plots from a run directory's metrics.csv
    Plot(Common),
    /// List the registered experiments
    ListExperiments,
}

/// Exit status for an error: 2 for configuration and usage, 3 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Argument(_) => 2,
        _ => 3,
    }
}

pub fn resolve_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&c.config, &c.experiment) {
        (Some(path), id) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            match id {
                Some(id) => ExperimentConfig::from_text(&format!("experiment={id}\n{text}")).and_then(|cfg| {
                    if &cfg.experiment == id {
                        Ok(cfg)
                    } else {
                        Err(Error::Config(format!("--experiment {id} but {} names {}", path.display(), cfg.experiment)))
                    }
                })?,
                None => ExperimentConfig::from_text(&text)?,
            }
        }
        (None, Some(id)) => ExperimentConfig::preset(id)?,
        (None, None) => return Err(Error::Config("give --experiment or --config".into())),
    };
    for s in &c.set {
        cfg.apply_override(s)?;
    }
    if let Some(n) = c.seeds {
        cfg.seeds = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(cfg.experiment.replace(':', "_")))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn seeds(cfg: &ExperimentConfig) -> impl Iterator<Item = u64> {
    let base = cfg.seed_base;
    (0..cfg.seeds as u64).map(move |i| base + i)
}

fn load_planner(out: &Path, cfg: &ExperimentConfig, seed: u64) -> Result<Planner> {
    let dir = out.join("artifacts").join(format!("seed_{seed}"));
    let art = RunArtifact::load(&dir)?;
    if art.manifest.config_hash != cfg.hash() {
        eprintln!("note: {} was built from a different config", dir.display());
    }
    art.to_planner()
}

fn sr_agents(cfg: &ExperimentConfig) -> Vec<AgentKind> {
    cfg.agents.iter().copied().filter(|a| a.uses_sr()).collect()
}

pub fn train(c: &Common) -> Result<()> {
    let cfg = resolve_config(c)?;
    let out = out_dir(c, &cfg);
    let result = run_experiment(&cfg)?;
    emit_outputs(&result, &out)?;
    print!("{}", result.report());
    println!("wrote {}", out.display());
    Ok(())
}

pub fn eval(c: &Common) -> Result<()> {
    let cfg = resolve_config(c)?;
    let out = out_dir(c, &cfg);
    let mut series = MetricSeries::new();
    for seed in seeds(&cfg) {
        let planner = load_planner(&out, &cfg, seed)?;
        let mut env = EnvBox::build(&cfg)?;
        let mut rng = seed_rng(seed, EVAL_STREAM);
        for kind in sr_agents(&cfg) {
            let res = evaluate(&mut env, agent_for(kind, Some(&planner), None), cfg.eval_episodes, cfg.step_cap, &mut rng)?;
            let label = format!("{}:{}:eval", cfg.experiment, kind.name());
            series.push(row(label, seed, 0, &res, (None, None)));
        }
    }
    for r in &series.rows {
        println!(
            "seed {} {:<24} success {:.3} reward {:.3} steps {:.1} decisions {:.1}",
            r.seed, r.experiment, r.success, r.reward, r.steps, r.planning_decisions
        );
    }
    series.write(&out.join("eval.csv"))
}

pub fn cluster(c: &Common) -> Result<()> {
    let mut cfg = resolve_config(c)?;
    if !cfg.has_agent(AgentKind::Hierarchical) {
        cfg.agents.push(AgentKind::Hierarchical);
    }
    let out = out_dir(c, &cfg);
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    write(&out.join("config.txt"), &cfg.canonical())?;
    let hash = cfg.hash();
    let mut rows = Vec::new();
    for seed in seeds(&cfg) {
        let tr = train_fully(&cfg, seed, EnvBox::build(&cfg)?)?;
        let goals = tr.env.goal_observations();
        let planner = tr.planner(&goals)?;
        let d = planner.decomp.as_ref().ok_or_else(|| Error::Internal("no decomposition after training".into()))?;
        let t = match tr.env.known_dynamics() {
            Some(b) => default_transition(&b),
            None => default_transition(&tr.model(&goals)?.b),
        };
        let connected = cluster_connectivity(&d.labels, &t)?;
        let all = connected.iter().all(|&x| x);
        println!(
            "seed {seed}: {} clusters, sizes {:?}, {} bottlenecks, {}",
            d.k,
            d.sizes,
            d.bottlenecks.len(),
            if all { "all connected".to_string() } else { format!("connected {connected:?}") }
        );
        rows.push(vec![seed.to_string(), d.k.to_string(), all.to_string(), tr.episodes_done.to_string()]);
        write(&out.join(format!("clusters_seed{seed}.csv")), &clusters_csv(d)?)?;
        write(&out.join(format!("policy_maps_seed{seed}.csv")), &policy_maps_csv(d)?)?;
        write(&out.join(format!("clusters_seed{seed}.svg")), &cluster_svg(&tr.env, d, &format!("{} clusters, seed {seed}", cfg.env)))?;
        RunArtifact::from_planner(&planner, &hash, seed).save(&out.join("artifacts").join(format!("seed_{seed}")))?;
    }
    write(&out.join("contiguity.csv"), &csv_text(&["seed", "k", "all_connected", "episodes"], &rows)?)
}

pub fn replan(c: &Common) -> Result<()> {
    let cfg = resolve_config(c)?;
    if cfg.goals.is_empty() {
        return Err(Error::Config("replan needs goals, e.g. --set goals=8:8,0:8".into()));
    }
    let out = out_dir(c, &cfg);
    let mut series = MetricSeries::new();
    for seed in seeds(&cfg) {
        let base = load_planner(&out, &cfg, seed)?;
        let mut env = EnvBox::build(&cfg)?;
        let mut rng = seed_rng(seed, EVAL_STREAM);
        for (gi, &goal) in cfg.goals.iter().enumerate() {
            env.set_goal(goal)?;
            let planner = base.retarget(&env.goal_observations())?;
            for kind in sr_agents(&cfg) {
                let res = evaluate(&mut env, agent_for(kind, Some(&planner), None), cfg.eval_episodes, cfg.step_cap, &mut rng)?;
                let r = row(format!("{}:{}:goal{gi}", cfg.experiment, kind.name()), seed, 0, &res, (None, None));
                println!(
                    "seed {seed} goal {goal:?} {:<13} success {:.3} steps {:.1} decisions {:.1}",
                    kind.name(),
                    r.success,
                    r.steps,
                    r.planning_decisions
                );
                series.push(r);
            }
        }
    }
    series.write(&out.join("replan.csv"))
}

pub fn sweep(c: &Common, param: &str, values: &[String]) -> Result<()> {
    let base = resolve_config(c)?;
    let out = out_dir(c, &base);
    let mut rows = Vec::new();
    for v in values {
        let mut cfg = base.clone();
        cfg.set(param, v)?;
        cfg.validate()?;
        let result = run_experiment(&cfg)?;
        emit_outputs(&result, &out.join(format!("{param}={v}")))?;
        for &kind in &cfg.agents {
            let rate = |f: fn(&crate::harness::metrics::MetricRow) -> f64| {
                let xs: Vec<f64> = result.series.rows.iter().filter(|r| r.experiment.split(':').any(|p| p == kind.name())).map(f).collect();
                if xs.is_empty() { String::new() } else { (xs.iter().sum::<f64>() / xs.len() as f64).to_string() }
            };
            let success = result.mean_of(kind, |s| Some(s.success_rate)).map_or_else(|| rate(|r| r.success), |x| x.to_string());
            let reward = result.mean_of(kind, |s| Some(s.mean_reward)).map_or_else(|| rate(|r| r.reward), |x| x.to_string());
            println!("{param}={v} {:<13} success {success} reward {reward}", kind.name());
            rows.push(vec![v.clone(), kind.name().to_string(), success, reward]);
        }
    }
    write(&out.join("sweep.csv"), &csv_text(&[param, "agent", "success_rate", "mean_reward"], &rows)?)
}

pub fn plot(c: &Common) -> Result<()> {
    let out = match (&c.out, &c.experiment, &c.config) {
        (Some(o), _, _) => o.clone(),
        _ => out_dir(c, &resolve_config(c)?),
    };
    let series = MetricSeries::read(&out.join("metrics.csv"))?;
    write_curve_plots(&series, &out)?;
    println!("wrote {} and {}", out.join("reward.svg").display(), out.join("success.svg").display());
    Ok(())
}

pub fn list_experiments() {
    for (id, description) in EXPERIMENTS {
        println!("{id:<10} {description}");
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train(c) => train(c),
        Command::Eval(c) => eval(c),
        Command::Cluster(c) => cluster(c),
        Command::Replan(c) => replan(c),
        Command::Sweep { common, param, values } => sweep(common, param, values),
        Command::Plot(c) => plot(c),
        Command::ListExperiments => {
            list_experiments();
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Argument("x".into())), 2);
        assert_eq!(exit_code(&Error::Experiment("x".into())), 3);
    }

    #[test]
    fn resolution_order() {
        let c = Common {
            experiment: Some("E1".into()),
            seeds: Some(2),
            set: vec!["episodes=40".into(), "seeds=7".into()],
            ..Default::default()
        };
        let cfg = resolve_config(&c).unwrap();
        assert_eq!((cfg.episodes, cfg.seeds, cfg.episode_steps), (40, 2, 5));
        assert!(resolve_config(&Common::default()).is_err());
        let bad = Common { experiment: Some("E1".into()), set: vec!["gamma".into()], ..Default::default() };
        assert_eq!(exit_code(&resolve_config(&bad).unwrap_err()), 2);
    }

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["hai-sr", "sweep", "--experiment", "E2", "--param", "k", "--values", "3,4"]).unwrap();
        match cli.command {
            Command::Sweep { param, values, .. } => assert_eq!((param.as_str(), values.len()), ("k", 2)),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["hai-sr", "train", "--set"]).is_err());
    }
}
