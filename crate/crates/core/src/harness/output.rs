//! Writes an experiment's results to a directory.
//!
//! Layout: `config.txt`, `metrics.csv`, `summary.txt`, `summary.csv`, one CSV
//! per protocol table, `clusters.csv` and `policy_maps.csv` for the first
//! seed with a macro decomposition, SVG plots and `artifacts/seed_<n>/`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::abstraction::MacroDecomposition;
use crate::error::{io_err, Error, Result};
use crate::harness::artifact::RunArtifact;
use crate::harness::experiments::{EnvBox, ExperimentResult};
use crate::harness::metrics::MetricSeries;
use crate::harness::plot::{cell_map, line_chart, Line};

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

/// CSV text from a header and rows of already formatted fields.
pub fn csv_text<S: AsRef<str>>(header: &[&str], rows: &[Vec<S>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Internal(e.to_string());
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r.iter().map(|s| s.as_ref())).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

pub fn clusters_csv(decomp: &MacroDecomposition) -> Result<String> {
    let k = decomp.embedding.ncols();
    let mut header = vec!["state".to_string(), "label".to_string()];
    header.extend((0..k).map(|j| format!("embed_{j}")));
    let rows: Vec<Vec<String>> = decomp
        .labels
        .iter()
        .enumerate()
        .map(|(s, l)| {
            let mut r = vec![s.to_string(), l.to_string()];
            r.extend((0..k).map(|j| decomp.embedding[(s, j)].to_string()));
            r
        })
        .collect();
    csv_text(&header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)
}

/// One row per state a macro policy covers. `kind` is `policy`, `unreachable`
/// (has an action that never arrives), `stranded` (no action) or `detour`.
pub fn policy_maps_csv(decomp: &MacroDecomposition) -> Result<String> {
    let mut rows = Vec::new();
    for (&(from, to), p) in &decomp.macro_policies {
        let base = |state: usize, action: Option<usize>, kind: &str| {
            vec![
                from.to_string(),
                to.to_string(),
                p.target_bottleneck.to_string(),
                p.target_cluster.to_string(),
                state.to_string(),
                action.map_or(String::new(), |a| a.to_string()),
                kind.to_string(),
            ]
        };
        for (&s, &a) in &p.action_of {
            rows.push(base(s, Some(a), if p.unreachable.contains(&s) { "unreachable" } else { "policy" }));
        }
        for &s in &p.stranded {
            rows.push(base(s, None, "stranded"));
        }
        for (&s, &a) in &p.detour {
            rows.push(base(s, Some(a), "detour"));
        }
    }
    csv_text(&["source_cluster", "macro_target", "bottleneck", "target_cluster", "state", "action", "kind"], &rows)
}

/// Mean of `value` over seeds for each label and episode.
pub fn mean_curves(series: &MetricSeries, value: impl Fn(&crate::harness::metrics::MetricRow) -> f64) -> Vec<Line> {
    series
        .labels()
        .into_iter()
        .map(|label| {
            let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
            for r in series.labelled(&label) {
                let e = acc.entry(r.episode).or_insert((0.0, 0));
                e.0 += value(r);
                e.1 += 1;
            }
            Line { name: label, points: acc.into_iter().map(|(ep, (s, n))| (ep as f64, s / n as f64)).collect() }
        })
        .collect()
}

/// `reward.svg` and `success.svg` from a metrics series.
pub fn write_curve_plots(series: &MetricSeries, out: &Path) -> Result<()> {
    let reward = mean_curves(series, |r| r.reward);
    write(&out.join("reward.svg"), &line_chart("Evaluation reward", "training episodes", "mean reward", &reward))?;
    let success = mean_curves(series, |r| r.success);
    write(&out.join("success.svg"), &line_chart("Evaluation success", "training episodes", "success rate", &success))
}

pub fn cluster_svg(env: &EnvBox, decomp: &MacroDecomposition, title: &str) -> String {
    let (rows, cols, pos) = env.board();
    let mut cells = vec![None; rows * cols];
    for (s, &p) in pos.iter().enumerate() {
        cells[p] = decomp.labels.get(s).copied();
    }
    cell_map(title, rows, cols, &cells)
}

/// Writes every output of `result` under `out`.
pub fn emit_outputs(result: &ExperimentResult, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let cfg = &result.config;
    write(&out.join("config.txt"), &cfg.canonical())?;
    result.series.write(&out.join("metrics.csv"))?;
    write(&out.join("summary.txt"), &result.report())?;

    let summary: Vec<Vec<String>> = result
        .runs
        .iter()
        .flat_map(|run| {
            run.summaries.iter().map(move |s| {
                vec![
                    run.seed.to_string(),
                    s.agent.name().to_string(),
                    s.success_rate.to_string(),
                    s.mean_reward.to_string(),
                    s.mean_steps.to_string(),
                    s.mean_decisions.to_string(),
                    opt(s.steps_on_success),
                    opt(s.decisions_on_success),
                    opt(s.rs),
                    opt(s.key_first_rate),
                    opt(s.macro_plan_len),
                ]
            })
        })
        .collect();
    if !summary.is_empty() {
        let header = [
            "seed",
            "agent",
            "success_rate",
            "mean_reward",
            "mean_steps",
            "mean_decisions",
            "steps_on_success",
            "decisions_on_success",
            "r_stability",
            "key_first_rate",
            "macro_plan_length",
        ];
        write(&out.join("summary.csv"), &csv_text(&header, &summary)?)?;
    }
    if !result.random.is_empty() {
        let rows: Vec<Vec<String>> = result
            .random
            .iter()
            .map(|r| vec![r.cap.to_string(), r.success_rate.to_string(), r.mean_reward.to_string()])
            .collect();
        write(&out.join("random_baseline.csv"), &csv_text(&["cap", "success_rate", "mean_reward"], &rows)?)?;
    }
    let distance = result.distance_table();
    if !distance.is_empty() {
        let rows: Vec<Vec<String>> = distance
            .iter()
            .map(|d| vec![d.distance.to_string(), d.agent.name().to_string(), d.success_rate.to_string()])
            .collect();
        write(&out.join("distance.csv"), &csv_text(&["distance", "agent", "success_rate"], &rows)?)?;
    }
    let switches = result.switch_rows();
    if !switches.is_empty() {
        let rows: Vec<Vec<String>> = switches
            .iter()
            .map(|(seed, s)| {
                vec![
                    seed.to_string(),
                    s.goal_index.to_string(),
                    s.goal.0.to_string(),
                    s.goal.1.to_string(),
                    s.agent.name().to_string(),
                    s.episodes_to_success.map_or(String::new(), |n| n.to_string()),
                ]
            })
            .collect();
        let header = ["seed", "goal_index", "goal_row", "goal_col", "agent", "episodes_to_success"];
        write(&out.join("revaluation.csv"), &csv_text(&header, &rows)?)?;
    }
    let goals = result.goal_rows();
    if !goals.is_empty() {
        let rows: Vec<Vec<String>> = goals
            .iter()
            .map(|(seed, g)| {
                vec![
                    seed.to_string(),
                    g.goal.0.to_string(),
                    g.goal.1.to_string(),
                    g.agent.name().to_string(),
                    g.success_rate.to_string(),
                    g.mean_steps.to_string(),
                    g.mean_decisions.to_string(),
                ]
            })
            .collect();
        let header = ["seed", "goal_row", "goal_col", "agent", "success_rate", "mean_steps", "mean_decisions"];
        write(&out.join("multigoal.csv"), &csv_text(&header, &rows)?)?;
    }
    let entropy = result.entropy_table();
    if !entropy.is_empty() {
        let rows: Vec<Vec<String>> = entropy
            .iter()
            .map(|e| {
                vec![
                    e.eta.to_string(),
                    e.entropy.to_string(),
                    e.agent.name().to_string(),
                    e.p_short.to_string(),
                    e.success_rate.to_string(),
                ]
            })
            .collect();
        write(&out.join("entropy.csv"), &csv_text(&["eta", "room_entropy", "agent", "p_short", "success_rate"], &rows)?)?;
        let lines: Vec<Line> = cfg
            .agents
            .iter()
            .map(|&a| Line {
                name: a.name().to_string(),
                points: entropy.iter().filter(|e| e.agent == a).map(|e| (e.entropy, e.p_short)).collect(),
            })
            .collect();
        write(&out.join("entropy.svg"), &line_chart("Short path preference", "room entropy", "P(short path)", &lines))?;
    }
    if !result.series.rows.is_empty() {
        write_curve_plots(&result.series, out)?;
    }

    let hash = cfg.hash();
    let env = EnvBox::build(cfg)?;
    let mut drew = false;
    for run in &result.runs {
        let Some(planner) = &run.planner else { continue };
        RunArtifact::from_planner(planner, &hash, run.seed).save(&out.join("artifacts").join(format!("seed_{}", run.seed)))?;
        if let (false, Some(d)) = (drew, &planner.decomp) {
            write(&out.join("clusters.csv"), &clusters_csv(d)?)?;
            write(&out.join("policy_maps.csv"), &policy_maps_csv(d)?)?;
            let title = format!("{} clusters, seed {}", cfg.env, run.seed);
            write(&out.join("clusters.svg"), &cluster_svg(&env, d, &title))?;
            drew = true;
        }
    }
    Ok(())
}
