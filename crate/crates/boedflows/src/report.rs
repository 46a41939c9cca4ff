//! Experiment runner: dispatch every `(method, m, seed)` cell of a config,
//! extract and rescore the resulting designs at reporting fidelity, and
//! write the result table plus plot-ready data files.
//!
//! Emitted into the config's `out_dir`:
//! - `report.csv` — one row per cell plus per-`(method, m)` aggregates;
//! - `designs.json` — every final design with its constraint;
//! - `trajectory_<method>_<seed>.csv` — probe trajectories of flow methods;
//! - `plotdata_eig_vs_m.csv`, `plotdata_box.csv`, `plotdata_ticks.csv`;
//! - `resolved.cfg` — the fully resolved configuration that produced it all.
//!
//! Each cell is internally deterministic given `(config, seed)`; cells run
//! in a small worker pool capped by the `BOEDFLOWS_THREADS` environment
//! variable, and report assembly is sequential and order-stable, so reruns
//! reproduce every column except wallclock.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::run_baseline;
use crate::config::{ExperimentConfig, MethodSpec, ReportConfig};
use crate::constraint::ConstraintSpec;
use crate::design::DesignBatch;
use crate::eig::{EigMode, EigOracle, NmcBudget, NmcOracle, Toy1dGridOracle};
use crate::error::{Error, Result};
use crate::extract::{extract_best_of_n, CandidateSet};
use crate::flows::{Flow, TailSpec, TrajRow};
use crate::models::{build_model, Model, TorusLinear, Toy1d};
use crate::stream::{substream, Purpose};
use crate::util::{linspace, mean, quantile_sorted, sample_std};

/// One completed experiment cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub m: usize,
    pub seed: u64,
    /// Reporting-fidelity EIG of the final design (NaN when the cell failed).
    pub eig: f64,
    pub se: f64,
    pub iterations: usize,
    pub wallclock_s: f64,
    /// `"ok"` or the failure message.
    pub status: String,
    /// Final design as a JSON array of coordinate arrays (empty on failure).
    pub design_json: String,
}

impl ReportRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Mean ± standard error over the seeds of one `(method, m)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub m: usize,
    pub n_seeds: usize,
    pub mean_eig: f64,
    pub se_eig: f64,
}

/// Everything `run_experiment` produces in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentReport {
    /// Recompute the aggregates from per-seed rows (failed rows excluded).
    pub fn aggregate(rows: &[ReportRow]) -> Vec<AggregateRow> {
        let mut order: Vec<(String, usize)> = Vec::new();
        let mut groups: HashMap<(String, usize), Vec<f64>> = HashMap::new();
        for row in rows {
            let key = (row.method.clone(), row.m);
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            let entry = groups.entry(key).or_default();
            if row.is_ok() {
                entry.push(row.eig);
            }
        }
        order
            .into_iter()
            .map(|(method, m)| {
                let vals = &groups[&(method.clone(), m)];
                let (mean_eig, se_eig) = if vals.is_empty() {
                    (f64::NAN, f64::NAN)
                } else if vals.len() == 1 {
                    (vals[0], 0.0)
                } else {
                    (mean(vals), sample_std(vals) / (vals.len() as f64).sqrt())
                };
                AggregateRow {
                    method,
                    m,
                    n_seeds: vals.len(),
                    mean_eig,
                    se_eig,
                }
            })
            .collect()
    }

    pub fn all_failed(&self) -> bool {
        !self.rows.iter().any(|r| r.is_ok())
    }

    /// The aggregate for one `(method, m)` pair, if present.
    pub fn aggregate_for(&self, method: &str, m: usize) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.m == m)
    }
}

/// One record of `designs.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub method: String,
    pub m: usize,
    pub seed: u64,
    pub constraint: ConstraintSpec,
    /// Coordinate arrays, one inner array per design point.
    pub design: Vec<Vec<f64>>,
}

/// Scoring oracle at a given budget: closed form for the circular model,
/// quadrature grid for the 1D toy at m = 1, fresh nested Monte Carlo
/// otherwise.
pub fn scoring_oracle(
    model: &Arc<dyn Model>,
    m: usize,
    budget: NmcBudget,
) -> Result<Arc<dyn EigOracle>> {
    if let Some(torus) = model.as_any().downcast_ref::<TorusLinear>() {
        return Ok(Arc::new(crate::eig::ExactTorusOracle::new(torus.clone())));
    }
    if m == 1 {
        if let Some(toy) = model.as_any().downcast_ref::<Toy1d>() {
            return Ok(Arc::new(Toy1dGridOracle::default_grid(toy.clone())));
        }
    }
    Ok(Arc::new(NmcOracle::fresh(model.clone(), budget)?))
}

/// Reporting-fidelity EIG of a design: the mean of `replications`
/// independent nested Monte Carlo estimates with the spread across
/// replications as the standard error. Deterministic oracles (closed form,
/// quadrature grid) are called once and report their own SE.
pub fn rescore_design(
    model: &Arc<dyn Model>,
    batch: &DesignBatch,
    report: &ReportConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    let oracle = scoring_oracle(
        model,
        batch.m(),
        NmcBudget::new(report.n_outer, report.n_inner),
    )?;
    match oracle.mode() {
        EigMode::Exact | EigMode::Grid => {
            let mut rng = substream(seed, 0, 0, Purpose::Report);
            let est = oracle.value(batch, &mut rng)?;
            Ok((est.value, est.std_error))
        }
        _ => {
            let mut values = Vec::with_capacity(report.replications);
            let mut own_se = 0.0;
            for rep in 0..report.replications {
                let mut rng = substream(seed, rep as u64, 0, Purpose::Report);
                let est = oracle.value(batch, &mut rng)?;
                values.push(est.value);
                own_se = est.std_error;
            }
            if values.len() == 1 {
                Ok((values[0], own_se))
            } else {
                let n = values.len() as f64;
                Ok((mean(&values), sample_std(&values) / n.sqrt()))
            }
        }
    }
}

/// Deterministic grid of single design points used by the
/// repeat-best-single control. Supports 1D intervals and the 2D torus.
fn single_point_grid(constraint: &ConstraintSpec, dim: usize, grid_size: usize) -> Result<Vec<Vec<f64>>> {
    use std::f64::consts::PI;
    match constraint {
        ConstraintSpec::OrderedMinGap { t_max, .. } => {
            Ok(linspace(0.0, *t_max, grid_size).into_iter().map(|t| vec![t]).collect())
        }
        ConstraintSpec::Box { lo, hi } if lo.len() == 1 => {
            Ok(linspace(lo[0], hi[0], grid_size).into_iter().map(|t| vec![t]).collect())
        }
        ConstraintSpec::Box { lo, hi } if lo.len() == 2 => {
            let side = (grid_size as f64).sqrt().round().max(2.0) as usize;
            let xs = linspace(lo[0], hi[0], side);
            let ys = linspace(lo[1], hi[1], side);
            Ok(xs
                .iter()
                .flat_map(|&x| ys.iter().map(move |&y| vec![x, y]))
                .collect())
        }
        ConstraintSpec::Torus if dim == 1 => {
            // Half-open: the wrap makes π identical to −π.
            Ok((0..grid_size)
                .map(|k| vec![-PI + 2.0 * PI * k as f64 / grid_size as f64])
                .collect())
        }
        ConstraintSpec::Torus if dim == 2 => {
            let side = (grid_size as f64).sqrt().round().max(2.0) as usize;
            let axis: Vec<f64> = (0..side)
                .map(|k| -PI + 2.0 * PI * k as f64 / side as f64)
                .collect();
            Ok(axis
                .iter()
                .flat_map(|&x| axis.iter().map(move |&y| vec![x, y]))
                .collect())
        }
        other => Err(Error::Config(format!(
            "repeat-best-single needs a 1D interval or a torus, got {} in dimension {dim}",
            other.tag()
        ))),
    }
}

/// The redundancy control: grid-maximise the single-experiment (m = 1)
/// criterion, then repeat that one best point m times (with constraint
/// repair). Returns the design and the number of grid evaluations.
pub fn repeat_best_single(
    model: &Arc<dyn Model>,
    m: usize,
    grid_size: usize,
    seed: u64,
) -> Result<(DesignBatch, usize)> {
    let constraint = model.constraint();
    let oracle = scoring_oracle(model, 1, NmcBudget::SCORING)?;
    let grid = single_point_grid(&constraint, model.design_dim(), grid_size)?;
    let mut rng = substream(seed, 0, 0, Purpose::Search);
    let mut best: Option<(usize, f64)> = None;
    for (i, point) in grid.iter().enumerate() {
        let batch = DesignBatch::from_points(std::slice::from_ref(point))?;
        let v = oracle.value(&batch, &mut rng)?.value;
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    let (idx, _) = best.expect("grid is nonempty");
    let points = vec![grid[idx].clone(); m];
    let mut batch = DesignBatch::from_points(&points)?;
    constraint.apply_batch(&mut batch);
    Ok((batch, grid.len()))
}

struct CellOutcome {
    row: ReportRow,
    trajectory: Option<Vec<TrajRow>>,
    design: Option<DesignBatch>,
}

/// Run one `(method, m, seed)` cell; failures become the row status.
fn run_cell(
    cfg: &ExperimentConfig,
    model: &Arc<dyn Model>,
    spec: MethodSpec,
    m: usize,
    seed: u64,
) -> CellOutcome {
    let start = Instant::now();
    let result = run_cell_inner(cfg, model, spec, m, seed);
    let wallclock_s = start.elapsed().as_secs_f64();
    match result {
        Ok((batch, eig, se, iterations, trajectory)) => {
            let design_json = serde_json::to_string(&batch.to_points())
                .expect("design coordinates serialise");
            CellOutcome {
                row: ReportRow {
                    method: spec.as_str().to_string(),
                    m,
                    seed,
                    eig,
                    se,
                    iterations,
                    wallclock_s,
                    status: "ok".into(),
                    design_json,
                },
                trajectory,
                design: Some(batch),
            }
        }
        Err(e) => CellOutcome {
            row: ReportRow {
                method: spec.as_str().to_string(),
                m,
                seed,
                eig: f64::NAN,
                se: f64::NAN,
                iterations: 0,
                wallclock_s,
                status: e.to_string(),
                design_json: String::new(),
            },
            trajectory: None,
            design: None,
        },
    }
}

type CellResult = (DesignBatch, f64, f64, usize, Option<Vec<TrajRow>>);

fn run_cell_inner(
    cfg: &ExperimentConfig,
    model: &Arc<dyn Model>,
    spec: MethodSpec,
    m: usize,
    seed: u64,
) -> Result<CellResult> {
    match spec {
        MethodSpec::Flow(algorithm) => {
            let mut flow_cfg = cfg.flow.clone();
            flow_cfg.algorithm = algorithm;
            flow_cfg.seed = seed;
            let dim = model.design_dim();
            let reference = cfg.reference.resolve(dim)?;
            let init = cfg.init.resolve(dim)?;
            let mut flow = Flow::for_model(flow_cfg, model, m, reference, init)?;
            flow.tail = Some(TailSpec {
                burn_fraction: cfg.extract.burn_fraction,
                ..TailSpec::default()
            });
            let run = flow.run()?;
            let cands = CandidateSet::from_flow_run(&flow, &run, cfg.extract.n_eval)?;
            let shortlist = cfg.extract.shortlist.min(cands.len());
            let high = scoring_oracle(model, m, NmcBudget::SCORING)?;
            let (best, _) =
                extract_best_of_n(&cands, flow.oracle.as_ref(), high.as_ref(), shortlist, seed)?;
            let (eig, se) = rescore_design(model, &best, &cfg.report, seed)?;
            Ok((best, eig, se, cfg.flow.n_steps, Some(run.trajectory)))
        }
        MethodSpec::Baseline(method) => {
            let mut bl = cfg.baseline.clone();
            bl.method = method;
            let mut flow_cfg = cfg.flow.clone();
            flow_cfg.seed = seed;
            let oracle = crate::flows::default_oracle(&flow_cfg, model, m)?;
            let batch = run_baseline(&bl, m, &model.constraint(), oracle.as_ref(), cfg.flow.lambda, seed)?;
            let (eig, se) = rescore_design(model, &batch, &cfg.report, seed)?;
            Ok((batch, eig, se, bl.budget, None))
        }
        MethodSpec::RepeatBestSingle => {
            let (batch, evals) = repeat_best_single(model, m, cfg.baseline.grid_size, seed)?;
            let (eig, se) = rescore_design(model, &batch, &cfg.report, seed)?;
            Ok((batch, eig, se, evals, None))
        }
    }
}

/// Worker-pool width: `BOEDFLOWS_THREADS` if set and valid, otherwise the
/// machine's available parallelism.
fn pool_width(n_cells: usize) -> usize {
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var("BOEDFLOWS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(default);
    cap.min(n_cells).max(1)
}

/// Run every cell of the experiment and write all output files into the
/// config's `out_dir`. Per-cell failures are recorded in their rows; the
/// call itself only fails on setup or I/O problems.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let overrides: HashMap<String, f64> = cfg
        .model_overrides
        .iter()
        .map(|(k, v)| {
            let bare = k.split_once('.').map_or(k.as_str(), |(_, rest)| rest);
            (bare.to_string(), *v)
        })
        .collect();
    let model = build_model(&cfg.model, &overrides)?;
    let m_list = if cfg.m_list.is_empty() {
        vec![model.default_m()]
    } else {
        cfg.m_list.clone()
    };

    let mut cells: Vec<(MethodSpec, usize, u64)> = Vec::new();
    for &m in &m_list {
        for &spec in &cfg.methods {
            for seed in cfg.seed_set() {
                cells.push((spec, m, seed));
            }
        }
    }

    let outcomes: Vec<CellOutcome> = {
        let slots: Vec<Mutex<Option<CellOutcome>>> =
            (0..cells.len()).map(|_| Mutex::new(None)).collect();
        let next = Mutex::new(0usize);
        let width = pool_width(cells.len());
        std::thread::scope(|scope| {
            for _ in 0..width {
                scope.spawn(|| loop {
                    let idx = {
                        let mut guard = next.lock().expect("queue lock");
                        let idx = *guard;
                        if idx >= cells.len() {
                            return;
                        }
                        *guard += 1;
                        idx
                    };
                    let (spec, m, seed) = cells[idx];
                    let outcome = run_cell(cfg, &model, spec, m, seed);
                    *slots[idx].lock().expect("slot lock") = Some(outcome);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot lock").expect("cell ran"))
            .collect()
    };

    let rows: Vec<ReportRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    let aggregates = ExperimentReport::aggregate(&rows);
    let report = ExperimentReport {
        rows,
        aggregates,
    };

    let out = Path::new(&cfg.out_dir);
    fs::create_dir_all(out)?;
    fs::write(out.join("resolved.cfg"), cfg.to_text())?;
    write_report_csv(&out.join("report.csv"), &report)?;

    let records: Vec<DesignRecord> = outcomes
        .iter()
        .filter_map(|o| {
            o.design.as_ref().map(|d| DesignRecord {
                method: o.row.method.clone(),
                m: o.row.m,
                seed: o.row.seed,
                constraint: model.constraint(),
                design: d.to_points(),
            })
        })
        .collect();
    write_designs_json(&out.join("designs.json"), &records)?;

    for o in &outcomes {
        if let Some(traj) = &o.trajectory {
            let name = format!("trajectory_{}_{}.csv", o.row.method, o.row.seed);
            write_trajectory_csv(&out.join(name), traj)?;
        }
    }
    write_plotdata(out, &report, &records)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

const REPORT_HEADER: [&str; 10] = [
    "kind", "method", "m", "seed", "eig", "se", "iterations", "wallclock_s", "status", "design",
];

pub fn write_report_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_HEADER)?;
    for r in &report.rows {
        w.write_record([
            "row",
            &r.method,
            &r.m.to_string(),
            &r.seed.to_string(),
            &format!("{}", r.eig),
            &format!("{}", r.se),
            &r.iterations.to_string(),
            &format!("{}", r.wallclock_s),
            &r.status,
            &r.design_json,
        ])?;
    }
    for a in &report.aggregates {
        w.write_record([
            "aggregate",
            &a.method,
            &a.m.to_string(),
            &a.n_seeds.to_string(),
            &format!("{}", a.mean_eig),
            &format!("{}", a.se_eig),
            "",
            "",
            "",
            "",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv(path: &Path) -> Result<ExperimentReport> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    let mut aggregates = Vec::new();
    let field_err = |name: &str, e: String| Error::Parse {
        key: name.to_string(),
        reason: e,
    };
    for record in r.records() {
        let rec = record?;
        let get = |i: usize| rec.get(i).unwrap_or("").to_string();
        let num = |i: usize, name: &str| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|e: std::num::ParseFloatError| field_err(name, e.to_string()))
        };
        let int = |i: usize, name: &str| -> Result<usize> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|e: std::num::ParseIntError| field_err(name, e.to_string()))
        };
        match rec.get(0) {
            Some("row") => rows.push(ReportRow {
                method: get(1),
                m: int(2, "m")?,
                seed: int(3, "seed")? as u64,
                eig: num(4, "eig")?,
                se: num(5, "se")?,
                iterations: int(6, "iterations")?,
                wallclock_s: num(7, "wallclock_s")?,
                status: get(8),
                design_json: get(9),
            }),
            Some("aggregate") => aggregates.push(AggregateRow {
                method: get(1),
                m: int(2, "m")?,
                n_seeds: int(3, "n_seeds")?,
                mean_eig: num(4, "mean_eig")?,
                se_eig: num(5, "se_eig")?,
            }),
            other => {
                return Err(Error::Parse {
                    key: "kind".into(),
                    reason: format!("unknown report row kind {other:?}"),
                })
            }
        }
    }
    Ok(ExperimentReport { rows, aggregates })
}

pub fn write_trajectory_csv(path: &Path, rows: &[TrajRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = rows.first().map_or(0, |r| r.mean.len());
    let mut header = vec![
        "step".to_string(),
        "algorithm".to_string(),
        "probe_eig".to_string(),
        "wallclock_ms".to_string(),
    ];
    header.extend((0..dim).map(|k| format!("mean_{k}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.step.to_string(),
            r.algorithm.clone(),
            format!("{}", r.probe_eig),
            format!("{}", r.wallclock_ms),
        ];
        rec.extend(r.mean.iter().map(|x| format!("{x}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in r.records() {
        let rec = record?;
        let parse_f = |i: usize| -> Result<f64> {
            rec.get(i).unwrap_or("").parse().map_err(|e: std::num::ParseFloatError| Error::Parse {
                key: format!("trajectory column {i}"),
                reason: e.to_string(),
            })
        };
        let step: usize = rec.get(0).unwrap_or("").parse().map_err(|e: std::num::ParseIntError| {
            Error::Parse {
                key: "step".into(),
                reason: e.to_string(),
            }
        })?;
        let mean = (4..rec.len()).map(parse_f).collect::<Result<Vec<f64>>>()?;
        rows.push(TrajRow {
            step,
            algorithm: rec.get(1).unwrap_or("").to_string(),
            probe_eig: parse_f(2)?,
            wallclock_ms: parse_f(3)?,
            mean,
        });
    }
    Ok(rows)
}

pub fn write_designs_json(path: &Path, records: &[DesignRecord]) -> Result<()> {
    let file = fs::File::create(path)?;
    serde_json::to_writer_pretty(file, records)?;
    Ok(())
}

pub fn read_designs_json(path: &Path) -> Result<Vec<DesignRecord>> {
    let file = fs::File::open(path)?;
    Ok(serde_json::from_reader(file)?)
}

/// Plot-ready summaries: EIG against batch size, per-cell boxplot
/// quantiles, and design tick positions.
fn write_plotdata(out: &Path, report: &ExperimentReport, records: &[DesignRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(out.join("plotdata_eig_vs_m.csv"))?;
    w.write_record(["method", "m", "mean_eig", "se_eig", "n_seeds"])?;
    for a in &report.aggregates {
        w.write_record([
            a.method.as_str(),
            &a.m.to_string(),
            &format!("{}", a.mean_eig),
            &format!("{}", a.se_eig),
            &a.n_seeds.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("plotdata_box.csv"))?;
    w.write_record(["method", "m", "min", "q25", "median", "q75", "max"])?;
    for a in &report.aggregates {
        let mut vals: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.is_ok() && r.method == a.method && r.m == a.m)
            .map(|r| r.eig)
            .collect();
        if vals.is_empty() {
            continue;
        }
        vals.sort_by(f64::total_cmp);
        w.write_record([
            a.method.as_str(),
            &a.m.to_string(),
            &format!("{}", vals[0]),
            &format!("{}", quantile_sorted(&vals, 0.25)),
            &format!("{}", quantile_sorted(&vals, 0.5)),
            &format!("{}", quantile_sorted(&vals, 0.75)),
            &format!("{}", vals[vals.len() - 1]),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("plotdata_ticks.csv"))?;
    w.write_record(["method", "m", "seed", "point", "axis", "value"])?;
    for rec in records {
        for (p, point) in rec.design.iter().enumerate() {
            for (axis, value) in point.iter().enumerate() {
                w.write_record([
                    rec.method.as_str(),
                    &rec.m.to_string(),
                    &rec.seed.to_string(),
                    &p.to_string(),
                    &axis.to_string(),
                    &format!("{value}"),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
