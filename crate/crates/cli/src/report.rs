//! Runs one scenario and writes its report and tables.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use tbf_core::analysis::map_s_to_q;
use tbf_core::des::{batch_confidence, simulate, BatchReport, Interval, SimStats};
use tbf_core::markov::{
    build_fixed_chain, build_md1_chain, chain_stationary, PowerIterationOptions,
};
use tbf_core::scalar::total_variation;
use tbf_core::statespace::{cardinality_bound, count_strings};
use tbf_core::{AnalyticModel, OccupancyTable, TrafficSpec};

use crate::scenario::{Mode, Resolved, Scenario};

/// Rounds to 12 significant digits.
pub fn sig12(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.11e}").parse().expect("formatted float parses")
    } else {
        x
    }
}

/// Probabilities are clamped to `[0, 1]` before rounding; the solver can
/// leave entries a few ulps outside.
fn prob(x: f64) -> f64 {
    sig12(x.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    /// Some analytic value lies outside the simulation confidence band.
    Disagreement,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub status: Status,
    pub scenario: Scenario,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_counts: Option<Vec<CountRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_length: Option<FixedLengthSection>,
}

#[derive(Debug, Default, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_bound: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub tokens: u32,
    pub backlog: u32,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticClass {
    pub class: usize,
    pub size: u32,
    pub prob: f64,
    pub loss_ratio: f64,
    pub throughput: f64,
    pub mean_backlog: f64,
    pub mean_wait: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct AnalyticSection {
    pub occupancy: Vec<Cell>,
    pub classes: Vec<AnalyticClass>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulatedClass {
    pub class: usize,
    pub size: u32,
    pub arrivals: u64,
    pub losses: u64,
    pub loss_ratio: f64,
    pub loss_half_width: f64,
    pub mean_wait: f64,
    pub wait_half_width: f64,
    pub mean_backlog: f64,
    pub backlog_half_width: f64,
    pub little_gap: f64,
}

#[derive(Debug, Serialize)]
pub struct SimulationSection {
    pub observed_periods: u64,
    pub events: u64,
    pub invariant_checks: u64,
    pub batches: usize,
    pub occupancy: Vec<Cell>,
    pub classes: Vec<SimulatedClass>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Delta {
    pub analytic: Option<f64>,
    pub simulated: f64,
    pub half_width: f64,
    pub abs_delta: Option<f64>,
    pub rel_delta: Option<f64>,
    pub within_band: bool,
}

impl Delta {
    fn new(analytic: Option<f64>, band: Interval) -> Self {
        let abs = analytic.map(|a| (a - band.mean).abs());
        let rel = abs
            .zip(analytic)
            .and_then(|(d, a)| (a != 0.0).then(|| d / a.abs()));
        Self {
            analytic: analytic.map(sig12),
            simulated: sig12(band.mean),
            half_width: sig12(band.half_width),
            abs_delta: abs.map(sig12),
            rel_delta: rel.map(sig12),
            within_band: analytic.is_some_and(|a| band.contains(a)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassComparison {
    pub class: usize,
    pub size: u32,
    pub loss_ratio: Delta,
    pub mean_wait: Delta,
}

#[derive(Debug, Serialize)]
pub struct ComparisonSection {
    pub occupancy_tv: f64,
    pub classes: Vec<ClassComparison>,
    /// `class <k> <metric>` for every value outside its band.
    pub disagreements: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CountRow {
    pub bound: u32,
    pub strings: u64,
    pub estimate: f64,
    pub states: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BacklogRow {
    pub backlog: u32,
    pub periodic_transfer: f64,
    pub md1: f64,
    pub variable_solver: f64,
}

#[derive(Debug, Serialize)]
pub struct FixedLengthSection {
    pub lambda_tau: f64,
    /// Post-replenishment `S` distributions, index `s = 0..=L+M`.
    pub periodic_transfer_s: Vec<f64>,
    pub md1_s: Vec<f64>,
    pub backlog: Vec<BacklogRow>,
    pub chains_tv: f64,
    pub max_solver_delta: f64,
}

fn cells(table: &OccupancyTable) -> Vec<Cell> {
    let mut out = Vec::new();
    for (t, row) in table.cells().iter().enumerate() {
        for (b, &p) in row.iter().enumerate() {
            out.push(Cell {
                tokens: t as u32,
                backlog: b as u32,
                probability: prob(p),
            });
        }
    }
    out
}

fn analytic_section(model: &AnalyticModel) -> AnalyticSection {
    AnalyticSection {
        occupancy: cells(&model.occupancy()),
        classes: model
            .class_metrics()
            .into_iter()
            .map(|c| AnalyticClass {
                class: c.class,
                size: c.size,
                prob: prob(c.prob),
                loss_ratio: prob(c.loss_ratio),
                throughput: sig12(c.throughput),
                mean_backlog: sig12(c.mean_backlog),
                mean_wait: c.mean_wait.map(sig12),
            })
            .collect(),
    }
}

fn simulation_section(
    traffic: &TrafficSpec,
    stats: &SimStats,
    batches: &BatchReport,
) -> SimulationSection {
    SimulationSection {
        observed_periods: stats.observed_periods,
        events: stats.events,
        invariant_checks: stats.invariant_checks,
        batches: batches.batches,
        occupancy: cells(&stats.occupancy()),
        classes: batches
            .classes
            .iter()
            .enumerate()
            .map(|(k, ci)| SimulatedClass {
                class: k,
                size: traffic.size(k),
                arrivals: stats.classes[k].arrivals,
                losses: stats.classes[k].losses,
                loss_ratio: prob(stats.loss_ratio(k)),
                loss_half_width: sig12(ci.loss_ratio.half_width),
                mean_wait: sig12(stats.mean_wait(k)),
                wait_half_width: sig12(ci.mean_wait.half_width),
                mean_backlog: sig12(stats.mean_backlog(k)),
                backlog_half_width: sig12(ci.mean_backlog.half_width),
                little_gap: sig12(stats.little_gap(k)),
            })
            .collect(),
    }
}

fn comparison_section(
    model: &AnalyticModel,
    stats: &SimStats,
    batches: &BatchReport,
) -> ComparisonSection {
    let mut disagreements = Vec::new();
    let classes = model
        .class_metrics()
        .into_iter()
        .zip(&batches.classes)
        .map(|(a, ci)| {
            let loss = Delta::new(Some(a.loss_ratio), ci.loss_ratio);
            let wait = Delta::new(a.mean_wait, ci.mean_wait);
            if !loss.within_band {
                disagreements.push(format!("class {} loss_ratio", a.class));
            }
            if !wait.within_band {
                disagreements.push(format!("class {} mean_wait", a.class));
            }
            ClassComparison {
                class: a.class,
                size: a.size,
                loss_ratio: loss,
                mean_wait: wait,
            }
        })
        .collect();
    ComparisonSection {
        occupancy_tv: sig12(model.occupancy().total_variation(&stats.occupancy())),
        classes,
        disagreements,
    }
}

fn solver_diagnostics(model: &AnalyticModel) -> Diagnostics {
    Diagnostics {
        states: Some(model.space.len()),
        iterations: Some(model.stationary.iterations()),
        residual: Some(model.stationary.residual()),
        error_bound: Some(model.error_bound()),
        wall_time_s: 0.0,
    }
}

fn run_simulation(scenario: &Scenario, r: &Resolved) -> anyhow::Result<(SimStats, BatchReport)> {
    let stats = simulate(&r.traffic, &r.config, &r.sim).context("simulation failed")?;
    let batches = batch_confidence(&stats, scenario.simulation.batches).context("batch means")?;
    Ok((stats, batches))
}

fn solve(r: &Resolved) -> anyhow::Result<AnalyticModel> {
    AnalyticModel::solve(&r.traffic, &r.config, &r.solver).context("analytic solver failed")
}

fn count_rows(scenario: &Scenario, r: &Resolved) -> anyhow::Result<Vec<CountRow>> {
    let sizes = r.traffic.sizes();
    (scenario.counting.min_bound..=scenario.counting.max_bound)
        .map(|bound| {
            let strings = u64::try_from(count_strings(sizes, bound)).with_context(|| {
                format!("counting.max_bound: count at bound {bound} overflows u64")
            })?;
            let levels = u64::from(r.config.bucket()) + 1;
            Ok(CountRow {
                bound,
                strings,
                estimate: sig12(cardinality_bound(sizes, bound)),
                states: strings.checked_mul(levels).with_context(|| {
                    format!("counting.max_bound: state count at bound {bound} overflows u64")
                })?,
            })
        })
        .collect()
}

fn fixed_length(r: &Resolved) -> anyhow::Result<FixedLengthSection> {
    let lt = r.traffic.rate() * r.config.period();
    let (m, l) = (r.config.bucket(), r.config.buffer());
    let opts = PowerIterationOptions {
        tol: r.solver.residual_tol,
        max_iters: r.solver.max_iters,
    };
    let pt = chain_stationary(&build_fixed_chain(lt, l, m)?, 0, opts)?.distribution;
    let md1 = chain_stationary(&build_md1_chain(lt, l, m)?, 0, opts)?.distribution;
    let model = solve(r)?;
    let mut variable = vec![0.0; l as usize + 1];
    for (i, &p) in model.stationary.pi().iter().enumerate() {
        variable[model.space.state(i).buffer.backlog() as usize] += p;
    }
    let pt_q = map_s_to_q(&pt, l, m);
    let md1_q = map_s_to_q(&md1, l, m);
    let max_delta = pt_q
        .iter()
        .zip(&variable)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(FixedLengthSection {
        lambda_tau: lt,
        chains_tv: sig12(total_variation(&pt, &md1)),
        periodic_transfer_s: pt.iter().map(|&p| prob(p)).collect(),
        md1_s: md1.iter().map(|&p| prob(p)).collect(),
        backlog: (0..=l as usize)
            .map(|j| BacklogRow {
                backlog: j as u32,
                periodic_transfer: prob(pt_q[j]),
                md1: prob(md1_q[j]),
                variable_solver: prob(variable[j]),
            })
            .collect(),
        max_solver_delta: sig12(max_delta),
    })
}

/// Runs the scenario in its configured mode.
pub fn run(scenario: &Scenario) -> anyhow::Result<Report> {
    let start = Instant::now();
    let r = scenario.resolve()?;
    let mut report = Report {
        status: Status::Ok,
        scenario: scenario.clone(),
        diagnostics: Diagnostics::default(),
        analytic: None,
        simulation: None,
        comparison: None,
        state_counts: None,
        fixed_length: None,
    };
    match scenario.mode {
        Mode::Analytic => {
            let model = solve(&r)?;
            report.diagnostics = solver_diagnostics(&model);
            report.analytic = Some(analytic_section(&model));
        }
        Mode::Simulate => {
            let (stats, batches) = run_simulation(scenario, &r)?;
            report.simulation = Some(simulation_section(&r.traffic, &stats, &batches));
        }
        Mode::Compare => {
            let (model, sim) = rayon::join(|| solve(&r), || run_simulation(scenario, &r));
            let (model, (stats, batches)) = (model?, sim?);
            report.diagnostics = solver_diagnostics(&model);
            let cmp = comparison_section(&model, &stats, &batches);
            if !cmp.disagreements.is_empty() {
                report.status = Status::Disagreement;
            }
            report.analytic = Some(analytic_section(&model));
            report.simulation = Some(simulation_section(&r.traffic, &stats, &batches));
            report.comparison = Some(cmp);
        }
        Mode::CountStates => {
            report.state_counts = Some(count_rows(scenario, &r)?);
        }
        Mode::FixedLength => {
            report.fixed_length = Some(fixed_length(&r)?);
        }
    }
    report.diagnostics.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn csv_writer(dir: &Path, name: &str) -> anyhow::Result<csv::Writer<File>> {
    let path = dir.join(name);
    csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))
}

fn write_rows<T: Serialize>(
    dir: &Path,
    name: &str,
    rows: impl IntoIterator<Item = T>,
) -> anyhow::Result<()> {
    let mut w = csv_writer(dir, name)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CompareCell {
    tokens: u32,
    backlog: u32,
    analytic: f64,
    simulated: f64,
    abs_delta: f64,
}

#[derive(Serialize)]
struct AnalyticLossRow {
    class: usize,
    size: u32,
    prob: f64,
    loss_ratio: f64,
    throughput: f64,
}

#[derive(Serialize)]
struct AnalyticWaitRow {
    class: usize,
    size: u32,
    mean_backlog: f64,
    mean_wait: Option<f64>,
}

#[derive(Serialize)]
struct SimLossRow {
    class: usize,
    size: u32,
    arrivals: u64,
    losses: u64,
    loss_ratio: f64,
    half_width: f64,
}

#[derive(Serialize)]
struct SimWaitRow {
    class: usize,
    size: u32,
    mean_wait: f64,
    half_width: f64,
    mean_backlog: f64,
    little_gap: f64,
}

#[derive(Serialize)]
struct DeltaRow {
    class: usize,
    size: u32,
    analytic: Option<f64>,
    simulated: f64,
    half_width: f64,
    abs_delta: Option<f64>,
    rel_delta: Option<f64>,
    within_band: bool,
}

impl DeltaRow {
    fn new(class: usize, size: u32, d: &Delta) -> Self {
        Self {
            class,
            size,
            analytic: d.analytic,
            simulated: d.simulated,
            half_width: d.half_width,
            abs_delta: d.abs_delta,
            rel_delta: d.rel_delta,
            within_band: d.within_band,
        }
    }
}

#[derive(Serialize)]
struct StateRow {
    s: usize,
    k: i64,
    periodic_transfer: f64,
    md1: f64,
}

/// Writes `report.json` and the mode's CSV tables into `dir`.
pub fn write(report: &Report, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut f = File::create(dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    writeln!(f)?;

    match (&report.analytic, &report.simulation, &report.comparison) {
        (Some(a), Some(s), Some(c)) => {
            write_rows(
                dir,
                "occupancy.csv",
                a.occupancy
                    .iter()
                    .zip(&s.occupancy)
                    .map(|(x, y)| CompareCell {
                        tokens: x.tokens,
                        backlog: x.backlog,
                        analytic: x.probability,
                        simulated: y.probability,
                        abs_delta: sig12((x.probability - y.probability).abs()),
                    }),
            )?;
            write_rows(
                dir,
                "loss.csv",
                c.classes
                    .iter()
                    .map(|k| DeltaRow::new(k.class, k.size, &k.loss_ratio)),
            )?;
            write_rows(
                dir,
                "waiting.csv",
                c.classes
                    .iter()
                    .map(|k| DeltaRow::new(k.class, k.size, &k.mean_wait)),
            )?;
        }
        (Some(a), None, None) => {
            write_rows(dir, "occupancy.csv", &a.occupancy)?;
            write_rows(
                dir,
                "loss.csv",
                a.classes.iter().map(|c| AnalyticLossRow {
                    class: c.class,
                    size: c.size,
                    prob: c.prob,
                    loss_ratio: c.loss_ratio,
                    throughput: c.throughput,
                }),
            )?;
            write_rows(
                dir,
                "waiting.csv",
                a.classes.iter().map(|c| AnalyticWaitRow {
                    class: c.class,
                    size: c.size,
                    mean_backlog: c.mean_backlog,
                    mean_wait: c.mean_wait,
                }),
            )?;
        }
        (None, Some(s), None) => {
            write_rows(dir, "occupancy.csv", &s.occupancy)?;
            write_rows(
                dir,
                "loss.csv",
                s.classes.iter().map(|c| SimLossRow {
                    class: c.class,
                    size: c.size,
                    arrivals: c.arrivals,
                    losses: c.losses,
                    loss_ratio: c.loss_ratio,
                    half_width: c.loss_half_width,
                }),
            )?;
            write_rows(
                dir,
                "waiting.csv",
                s.classes.iter().map(|c| SimWaitRow {
                    class: c.class,
                    size: c.size,
                    mean_wait: c.mean_wait,
                    half_width: c.wait_half_width,
                    mean_backlog: c.mean_backlog,
                    little_gap: c.little_gap,
                }),
            )?;
        }
        _ => {}
    }
    if let Some(rows) = &report.state_counts {
        write_rows(dir, "counts.csv", rows)?;
    }
    if let Some(f) = &report.fixed_length {
        let m = report.scenario.filter.bucket as i64;
        write_rows(
            dir,
            "states.csv",
            f.periodic_transfer_s
                .iter()
                .zip(&f.md1_s)
                .enumerate()
                .map(|(s, (&p, &q))| StateRow {
                    s,
                    k: s as i64 - m,
                    periodic_transfer: p,
                    md1: q,
                }),
        )?;
        write_rows(dir, "backlog.csv", &f.backlog)?;
    }
    Ok(())
}
