use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::{now, read_file, write_file, write_record, AdaptationRow, EpisodeRow, Workspace, CONFIG_SNAPSHOT};
use super::svg::{Chart, Range, PALETTE};
use crate::agent::{AgentKind, RIGHT_HEMISPHERE_PREFIX, RIGHT_ONLY_PREFIX};
use crate::envs::TaskName;
use crate::error::{Error, Result};
use crate::metrics::{frr, irr, median, median_metric, rolling_median, MetricValue, MetricWindow, Quadrant, RewardSeries};
use crate::training::{read_rows, write_rows, TrainingLog};

/// Per-seed metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: TaskName,
    pub seed: usize,
    /// Empty when undefined.
    pub irr: Option<f64>,
    pub frr: Option<f64>,
}

/// Per-task medians, quadrant label, and non-learning baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub task: TaskName,
    pub tier: u8,
    pub seeds: usize,
    pub median_irr: Option<f64>,
    pub median_frr: Option<f64>,
    pub quadrant: String,
    pub right_only_mean_reward: Option<f64>,
    pub right_only_success_rate: Option<f64>,
    pub random_mean_reward: Option<f64>,
    pub random_success_rate: Option<f64>,
}

/// One step of a median line with its min/max ribbon across seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPoint {
    pub step: u64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// Median and min/max across curves at every step of the first curve that
/// at least one curve reports.
pub fn seed_band(curves: &[Vec<(u64, f64)>]) -> Result<Vec<BandPoint>> {
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for c in curves {
        for &(s, v) in c {
            by_step.entry(s).or_default().push(v);
        }
    }
    by_step
        .into_iter()
        .map(|(step, vals)| {
            Ok(BandPoint {
                step,
                median: median(&vals)?,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect()
}

/// Files written by [`run_report`] and the cells that were missing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportOutput {
    pub files: Vec<PathBuf>,
    pub gaps: Vec<String>,
}

struct TaskData {
    bihem: BTreeMap<usize, TrainingLog>,
    left_only: BTreeMap<usize, TrainingLog>,
    right_only: Option<Vec<EpisodeRow>>,
    random: Option<Vec<EpisodeRow>>,
}

fn load_logs(ws: &Workspace, task: TaskName, kind: AgentKind, seeds: usize, gaps: &mut Vec<String>) -> Result<BTreeMap<usize, TrainingLog>> {
    let mut out = BTreeMap::new();
    for k in 0..seeds {
        let p = ws.training_log(task, kind, k);
        if p.exists() {
            out.insert(k, TrainingLog::load(&p)?);
        } else {
            gaps.push(format!("{task} {kind} seed {k}: no training log"));
        }
    }
    Ok(out)
}

fn load_episodes(ws: &Workspace, task: TaskName, kind: AgentKind, agents: &[AgentKind], gaps: &mut Vec<String>) -> Result<Option<Vec<EpisodeRow>>> {
    if !agents.contains(&kind) {
        return Ok(None);
    }
    let p = ws.baseline_log(task, kind);
    if !p.exists() {
        gaps.push(format!("{task} {kind}: no baseline evaluation"));
        return Ok(None);
    }
    Ok(Some(read_rows(&read_file(&p)?)?))
}

fn mean_of(rows: &Option<Vec<EpisodeRow>>, f: impl Fn(&EpisodeRow) -> f64) -> Option<f64> {
    rows.as_ref()
        .filter(|r| !r.is_empty())
        .map(|r| r.iter().map(&f).sum::<f64>() / r.len() as f64)
}

fn series(kind: AgentKind, task: TaskName, seed: usize, pts: Vec<(u64, f64)>) -> Result<RewardSeries> {
    RewardSeries::new(kind, task, seed as u64, pts)
}

/// Builds summary CSVs and SVG plots from the CSVs in `dir`. Cells that are
/// missing are listed as gaps instead of failing the report.
pub fn run_report(dir: &Path) -> Result<ReportOutput> {
    let snapshot = dir.join(CONFIG_SNAPSHOT);
    if !snapshot.exists() {
        return Err(Error::config(format!(
            "{} not found; run the main stage into this directory first",
            snapshot.display()
        )));
    }
    let text = String::from_utf8_lossy(&read_file(&snapshot)?).into_owned();
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    cfg.output_dir = dir.to_path_buf();
    let ws = Workspace::new(&cfg);
    let window = cfg.metric_window()?;
    let smoothing = ((cfg.metrics.smoothing_fraction * cfg.main.total_steps as f64).round() as u64).max(1);
    let out_dir = ws.report_dir();
    let plots = out_dir.join("plots");
    let started = now();
    let mut out = ReportOutput::default();

    let mut data = BTreeMap::new();
    for &task in &cfg.main.tasks {
        let agents = &cfg.main.agents;
        let td = TaskData {
            bihem: if agents.contains(&AgentKind::Bihem) {
                load_logs(&ws, task, AgentKind::Bihem, cfg.seeds, &mut out.gaps)?
            } else {
                BTreeMap::new()
            },
            left_only: if agents.contains(&AgentKind::LeftOnly) {
                load_logs(&ws, task, AgentKind::LeftOnly, cfg.seeds, &mut out.gaps)?
            } else {
                BTreeMap::new()
            },
            right_only: load_episodes(&ws, task, AgentKind::RightOnly, agents, &mut out.gaps)?,
            random: load_episodes(&ws, task, AgentKind::Random, agents, &mut out.gaps)?,
        };
        data.insert(task, td);
    }

    // Per-seed and per-task metrics.
    let mut summary = Vec::new();
    let mut aggregate = Vec::new();
    let mut medians: BTreeMap<TaskName, (MetricValue, MetricValue)> = BTreeMap::new();
    for (&task, td) in &data {
        let mut irrs = Vec::new();
        let mut frrs = Vec::new();
        for (k, b) in &td.bihem {
            let Some(l) = td.left_only.get(k) else { continue };
            match seed_metrics(task, *k, b, l, window) {
                Ok((i, f)) => {
                    summary.push(SummaryRow { task, seed: *k, irr: i.value(), frr: f.value() });
                    irrs.push(i);
                    frrs.push(f);
                }
                Err(e) => out.gaps.push(format!("{task} seed {k}: {e}")),
            }
        }
        let (mi, mf) = if irrs.is_empty() {
            (MetricValue::Undefined, MetricValue::Undefined)
        } else {
            (median_metric(&irrs)?, median_metric(&frrs)?)
        };
        if !irrs.is_empty() {
            medians.insert(task, (mi, mf));
        }
        aggregate.push(AggregateRow {
            task,
            tier: task.tier(),
            seeds: irrs.len(),
            median_irr: mi.value(),
            median_frr: mf.value(),
            quadrant: Quadrant::classify(mi, mf).as_str().to_string(),
            right_only_mean_reward: mean_of(&td.right_only, |r| r.mean_reward),
            right_only_success_rate: mean_of(&td.right_only, |r| f64::from(u8::from(r.success))),
            random_mean_reward: mean_of(&td.random, |r| r.mean_reward),
            random_success_rate: mean_of(&td.random, |r| f64::from(u8::from(r.success))),
        });
    }
    let mut emit = |path: PathBuf, bytes: &[u8]| -> Result<()> {
        write_file(&path, bytes)?;
        out.files.push(path);
        Ok(())
    };
    emit(out_dir.join("summary.csv"), &write_rows(&summary)?)?;
    emit(out_dir.join("aggregate.csv"), &write_rows(&aggregate)?)?;

    // Training and gating curves.
    for (&task, td) in &data {
        if td.bihem.is_empty() && td.left_only.is_empty() {
            continue;
        }
        let mut curves = Vec::new();
        let groups: [(&str, Vec<Vec<(u64, f64)>>); 3] = [
            ("bi-hemispheric", smooth_all(task, AgentKind::Bihem, &td.bihem, smoothing, |l| l.reward_points())?),
            ("left-only", smooth_all(task, AgentKind::LeftOnly, &td.left_only, smoothing, |l| l.reward_points())?),
            ("left hemisphere alone", smooth_all(task, AgentKind::Bihem, &td.bihem, smoothing, |l| l.left_eval_points())?),
        ];
        for (label, group) in groups {
            if group.iter().any(|c| !c.is_empty()) {
                curves.push((label, seed_band(&group)?));
            }
        }
        let refs = [
            ("right-only", mean_of(&td.right_only, |r| r.mean_reward)),
            ("random", mean_of(&td.random, |r| r.mean_reward)),
        ];
        let svg = band_chart(
            &format!("{task}: mean reward per step"),
            "mean reward",
            &curves,
            &refs,
        );
        emit(plots.join(format!("curves-{task}.svg")), svg.as_bytes())?;

        let gating: Vec<Vec<(u64, f64)>> = td
            .bihem
            .values()
            .map(|l| l.rows.iter().filter_map(|r| r.median_p_left.map(|p| (r.step, p))).collect())
            .collect();
        if gating.iter().any(|c| !c.is_empty()) {
            let svg = band_chart(
                &format!("{task}: median left-hemisphere gate"),
                "P_left",
                &[("P_left", seed_band(&gating)?)],
                &[],
            );
            emit(plots.join(format!("gating-{task}.svg")), svg.as_bytes())?;
        }
    }

    // Metric strips and the quadrant scatter.
    let tasks: Vec<TaskName> = data.keys().copied().collect();
    for (name, pick) in [("irr", 0usize), ("frr", 1usize)] {
        let svg = strip_chart(&tasks, &summary, name, |r| if pick == 0 { r.irr } else { r.frr });
        emit(plots.join(format!("{name}.svg")), svg.as_bytes())?;
    }
    emit(plots.join("irr-vs-frr.svg"), scatter_chart(&medians).as_bytes())?;

    // Adaptation curves of the meta-trained networks, when evaluated.
    for &task in &cfg.meta_train.tasks {
        let mut lines = Vec::new();
        for net in [RIGHT_HEMISPHERE_PREFIX, RIGHT_ONLY_PREFIX] {
            let p = ws.adaptation_log(task, net);
            if p.exists() {
                let rows: Vec<AdaptationRow> = read_rows(&read_file(&p)?)?;
                for visible in [true, false] {
                    let pts: Vec<(f64, f64)> = rows
                        .iter()
                        .filter(|r| r.goal_visible == visible)
                        .map(|r| (r.episode_index as f64 + 1.0, r.mean_reward))
                        .collect();
                    let label = format!("{net} goal {}", if visible { "shown" } else { "hidden" });
                    lines.push((label, pts));
                }
            }
        }
        if !lines.is_empty() {
            let svg = adaptation_chart(task, &lines);
            emit(plots.join(format!("adaptation-{task}.svg")), svg.as_bytes())?;
        }
    }

    let mut gaps_text = String::new();
    if out.gaps.is_empty() {
        gaps_text.push_str("none\n");
    }
    for g in &out.gaps {
        let _ = writeln!(gaps_text, "{g}");
    }
    let gaps_path = out_dir.join("gaps.txt");
    write_file(&gaps_path, gaps_text.as_bytes())?;
    out.files.push(gaps_path);
    write_record(&ws, "report", &cfg.hash(), 0, started, out.files.clone())?;
    Ok(out)
}

fn seed_metrics(
    task: TaskName,
    k: usize,
    bihem: &TrainingLog,
    left_only: &TrainingLog,
    w: MetricWindow,
) -> Result<(MetricValue, MetricValue)> {
    let b = series(AgentKind::Bihem, task, k, bihem.reward_points())?;
    let alone = series(AgentKind::Bihem, task, k, bihem.left_eval_points())?;
    let l = series(AgentKind::LeftOnly, task, k, left_only.reward_points())?;
    Ok((irr(&b, &l, w)?, frr(&alone, &l, w)?))
}

fn smooth_all(
    task: TaskName,
    kind: AgentKind,
    logs: &BTreeMap<usize, TrainingLog>,
    window: u64,
    points: impl Fn(&TrainingLog) -> Vec<(u64, f64)>,
) -> Result<Vec<Vec<(u64, f64)>>> {
    logs.iter()
        .map(|(k, l)| {
            let s = series(kind, task, *k, points(l))?;
            Ok(rolling_median(&s, window)?.points().to_vec())
        })
        .collect()
}

fn band_chart(title: &str, y_label: &str, curves: &[(&str, Vec<BandPoint>)], refs: &[(&str, Option<f64>)]) -> String {
    let xs = curves.iter().flat_map(|(_, b)| b.iter().map(|p| p.step as f64));
    let mut y = Range::covering(
        curves
            .iter()
            .flat_map(|(_, b)| b.iter().flat_map(|p| [p.min, p.max]))
            .chain(refs.iter().filter_map(|r| r.1)),
    );
    if y_label == "P_left" {
        y = y.including(0.0).including(1.0);
    }
    let mut chart = Chart::new(title, "environment steps", y_label, Range::covering(xs), y);
    for (i, (label, band)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let xs: Vec<f64> = band.iter().map(|p| p.step as f64).collect();
        let lo: Vec<f64> = band.iter().map(|p| p.min).collect();
        let hi: Vec<f64> = band.iter().map(|p| p.max).collect();
        chart.ribbon(&xs, &lo, &hi, color);
        let line: Vec<(f64, f64)> = band.iter().map(|p| (p.step as f64, p.median)).collect();
        chart.line(&line, color, Some(label));
    }
    for (i, (label, v)) in refs.iter().enumerate() {
        if let Some(v) = v {
            let color = PALETTE[(curves.len() + i) % PALETTE.len()];
            let (x0, x1) = (
                curves.iter().flat_map(|(_, b)| b.first()).map(|p| p.step).min().unwrap_or(0) as f64,
                curves.iter().flat_map(|(_, b)| b.last()).map(|p| p.step).max().unwrap_or(1) as f64,
            );
            chart.line(&[(x0, *v), (x1, *v)], color, Some(label));
        }
    }
    chart.finish()
}

fn strip_chart(tasks: &[TaskName], rows: &[SummaryRow], name: &str, value: impl Fn(&SummaryRow) -> Option<f64>) -> String {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| {
            let i = tasks.iter().position(|t| *t == r.task)?;
            value(r).map(|v| (i as f64, v))
        })
        .collect();
    let y = Range::covering(pts.iter().map(|p| p.1)).including(1.0);
    let x = Range {
        min: -0.5,
        max: tasks.len().max(1) as f64 - 0.5,
    };
    let title = format!("{} per seed", name.to_uppercase());
    let mut chart = Chart::new(&title, "task", &name.to_uppercase(), x, y);
    chart.hline(1.0);
    chart.points(&pts, PALETTE[0], Some("seed"));
    for (i, t) in tasks.iter().enumerate() {
        chart.label(i as f64, y.min, t.as_str());
    }
    chart.finish()
}

fn scatter_chart(medians: &BTreeMap<TaskName, (MetricValue, MetricValue)>) -> String {
    let pts: Vec<(TaskName, f64, f64)> = medians
        .iter()
        .filter_map(|(t, (i, f))| Some((*t, i.value()?, f.value()?)))
        .collect();
    let x = Range::covering(pts.iter().map(|p| p.1)).including(1.0);
    let y = Range::covering(pts.iter().map(|p| p.2)).including(1.0);
    let mut chart = Chart::new("median IRR vs median FRR", "IRR", "FRR", x, y);
    chart.hline(1.0);
    chart.vline(1.0);
    let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.1, p.2)).collect();
    chart.points(&xy, PALETTE[1], Some("task"));
    for (t, i, f) in &pts {
        chart.label(*i, *f, t.as_str());
    }
    chart.finish()
}

fn adaptation_chart(task: TaskName, lines: &[(String, Vec<(f64, f64)>)]) -> String {
    let x = Range::covering(lines.iter().flat_map(|l| l.1.iter().map(|p| p.0)));
    let y = Range::covering(lines.iter().flat_map(|l| l.1.iter().map(|p| p.1)));
    let title = format!("{task}: reward by episode within a trial (held-out sub-tasks)");
    let mut chart = Chart::new(&title, "episode in trial", "mean reward", x, y);
    for (i, (label, pts)) in lines.iter().enumerate() {
        chart.line(pts, PALETTE[i % PALETTE.len()], Some(label));
    }
    chart.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_spans_min_to_max_across_seeds() {
        let curves: Vec<Vec<(u64, f64)>> = (0..5)
            .map(|s| (1..=4).map(|t| (t * 10, (s * t) as f64)).collect())
            .collect();
        let band = seed_band(&curves).unwrap();
        assert_eq!(band.len(), 4);
        for (i, p) in band.iter().enumerate() {
            let t = (i + 1) as f64;
            assert_eq!((p.min, p.median, p.max), (0.0, 2.0 * t, 4.0 * t));
        }
    }

    #[test]
    fn unit_metrics_sit_on_the_reference_lines() {
        let mut m = BTreeMap::new();
        m.insert(TaskName::Reach, (MetricValue::Defined(1.0), MetricValue::Defined(1.0)));
        assert_eq!(Quadrant::classify(m[&TaskName::Reach].0, m[&TaskName::Reach].1), Quadrant::Boundary);
        let svg = scatter_chart(&m);
        let attr = |name: &str| {
            let start = svg.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
            svg[start..].split('"').next().unwrap().to_string()
        };
        let (cx, cy) = (attr("cx"), attr("cy"));
        // The point lies on both dashed reference lines.
        assert!(svg.contains(&format!("M{cx} ")), "vertical line through x = 1");
        assert!(svg.contains(&format!(" {cy} L")), "horizontal line through y = 1");
        assert_eq!(svg, scatter_chart(&m));
    }

    #[test]
    fn missing_snapshot_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(run_report(dir.path()), Err(Error::Config(_))));
    }
}
