use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fkc_core::engine::{write_binary, write_csv};
use fkc_core::metrics::{
    default_scales, energy_distance, mmd_rbf, total_variation_grid, wasserstein_1d, wasserstein_2d,
};
use fkc_core::{
    simulate, BetaSchedule, FkcError, MetricRecord, ParticleEnsemble, SampleSet, SimulationOutput,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{DumpFormat, ExperimentConfig, MetricKind, SweepAxes, TargetConfig};
use crate::error::{HarnessError, Result};
use crate::experiment::Experiment;

pub const REPORT_FILE: &str = "report.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const SAMPLES_BIN: &str = "samples.bin";
pub const SAMPLES_CSV: &str = "samples.csv";
pub const REFERENCE_BIN: &str = "reference.bin";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub config_hash: String,
    pub provenance: String,
    pub seed: u64,
    pub wall_time_s: f64,
    pub log_z: f64,
    pub final_ess: f64,
    pub metrics: Vec<MetricRecord>,
    /// Relative to the run directory.
    pub diagnostics_path: Option<PathBuf>,
}

/// Writes via a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)
        .map_err(|e| HarnessError::io(format!("creating {}", dir.display()), e))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    let ctx = |what: &str| format!("{what} {}", tmp.display());
    let mut f = fs::File::create(&tmp).map_err(|e| HarnessError::io(ctx("creating"), e))?;
    f.write_all(bytes)
        .map_err(|e| HarnessError::io(ctx("writing"), e))?;
    f.sync_all()
        .map_err(|e| HarnessError::io(ctx("syncing"), e))?;
    fs::rename(&tmp, path)
        .map_err(|e| HarnessError::io(format!("renaming to {}", path.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value)?)
}

fn provenance(hash: &str) -> String {
    format!(
        "fkc-harness@{}+cfg.{}",
        env!("CARGO_PKG_VERSION"),
        &hash[..12]
    )
}

fn simulation_error(e: FkcError) -> HarnessError {
    match e {
        e @ FkcError::SimulationFailure { .. } | e @ FkcError::DegenerateEnsemble => {
            HarnessError::Simulation(e)
        }
        e => HarnessError::Core(e),
    }
}

/// Everything one seed produces before it is written out.
pub struct SeedRun {
    pub report: RunReport,
    pub output: SimulationOutput,
    pub reference: Option<SampleSet>,
}

fn reference_samples(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    seed: u64,
) -> Result<Option<SampleSet>> {
    let Some(mix) = &exp.reference else {
        return Ok(None);
    };
    let n = cfg
        .metrics
        .reference
        .n_samples
        .unwrap_or(cfg.simulation.n_particles);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.metrics.reference.seed.wrapping_add(seed));
    Ok(Some(SampleSet::new(mix.sample(n, &mut rng)?, exp.dim)?))
}

fn compute_metrics(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    samples: &SampleSet,
    reference: &SampleSet,
    seed: u64,
) -> Result<Vec<MetricRecord>> {
    let m = &cfg.metrics;
    let mut out = Vec::new();
    for &kind in &m.list {
        let (value, params) = match kind {
            MetricKind::TotalVar => (
                total_variation_grid(samples, reference, &m.grid)?,
                json!({ "grid": m.grid }),
            ),
            MetricKind::Mmd => {
                let scales = match &m.mmd_scales {
                    Some(s) => s.clone(),
                    None => default_scales(reference, reference)?,
                };
                (
                    mmd_rbf(samples, reference, &scales, m.mmd_estimator)?,
                    json!({ "scales": scales, "estimator": m.mmd_estimator }),
                )
            }
            MetricKind::W1 | MetricKind::W2 => {
                let p = if kind == MetricKind::W1 { 1.0 } else { 2.0 };
                match exp.dim {
                    1 => (wasserstein_1d(samples, reference, p)?, json!({ "p": p })),
                    2 => (
                        wasserstein_2d(samples, reference, p, m.w2d)?,
                        json!({ "p": p, "method": m.w2d }),
                    ),
                    d => {
                        return Err(HarnessError::validation(
                            "metrics.list",
                            format!("{} is defined for 1D and 2D samples, not {d}D", kind.name()),
                        ))
                    }
                }
            }
            MetricKind::EnergyW1 | MetricKind::EnergyW2 => {
                let p = if kind == MetricKind::EnergyW1 {
                    1.0
                } else {
                    2.0
                };
                let mix = exp
                    .reference
                    .as_ref()
                    .expect("reference samples imply a mixture");
                let energy = |x: &[f64]| mix.log_density(x).map(|l| -l).unwrap_or(f64::NAN);
                (
                    energy_distance(samples, reference, energy, p, m.energy_max)?,
                    json!({ "p": p, "energy_max": m.energy_max }),
                )
            }
        };
        out.push(MetricRecord {
            metric: kind.name().into(),
            value,
            params,
            seed,
        });
    }
    Ok(out)
}

/// Simulates one seed and computes its metrics; writes nothing.
pub fn run_seed(cfg: &ExperimentConfig, exp: &Experiment, seed: u64) -> Result<SeedRun> {
    let hash = cfg.hash()?;
    let start = Instant::now();
    let mut sim = cfg.simulation.clone();
    sim.seed = seed;
    let output = simulate(&exp.sde, &sim, &cfg.resampling).map_err(simulation_error)?;
    let reference = reference_samples(cfg, exp, seed)?;
    let metrics = match &reference {
        Some(r) if !cfg.metrics.list.is_empty() => {
            let samples = SampleSet::from_ensemble(&output.ensemble).map_err(simulation_error)?;
            compute_metrics(cfg, exp, &samples, r, seed)?
        }
        _ => Vec::new(),
    };
    let report = RunReport {
        name: cfg.name.clone(),
        provenance: provenance(&hash),
        config_hash: hash,
        seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        log_z: output.log_z,
        final_ess: output.ensemble.ess()?,
        metrics,
        diagnostics_path: None,
    };
    Ok(SeedRun {
        report,
        output,
        reference,
    })
}

fn dump<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> fkc_core::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    write_atomic(path, &buf)
}

/// Writes samples, reference, diagnostics and the report into `dir`.
pub fn write_seed_run(cfg: &ExperimentConfig, run: &mut SeedRun, dir: &Path) -> Result<()> {
    let ens = &run.output.ensemble;
    for f in &cfg.output.formats {
        match f {
            DumpFormat::Binary => dump(&dir.join(SAMPLES_BIN), |b| write_binary(ens, b))?,
            DumpFormat::Csv => dump(&dir.join(SAMPLES_CSV), |b| write_csv(ens, b))?,
        }
    }
    if let Some(r) = &run.reference {
        let mut as_ens = ParticleEnsemble::new(r.points().to_vec(), r.dim(), 0)?;
        as_ens.t = 1.0;
        dump(&dir.join(REFERENCE_BIN), |b| write_binary(&as_ens, b))?;
    }
    write_json(&dir.join(DIAGNOSTICS_FILE), &run.output.diagnostics)?;
    let seed_dir = dir.file_name().map(PathBuf::from).unwrap_or_default();
    run.report.diagnostics_path = Some(seed_dir.join(DIAGNOSTICS_FILE));
    write_json(&dir.join(REPORT_FILE), &run.report)
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

/// Mean and sample standard deviation per metric, in first-seen order.
pub fn aggregate(reports: &[RunReport]) -> Vec<(String, f64, f64, usize)> {
    let mut names: Vec<String> = Vec::new();
    for r in reports {
        for m in &r.metrics {
            if !names.contains(&m.metric) {
                names.push(m.metric.clone());
            }
        }
    }
    names.push("log_z".into());
    names
        .into_iter()
        .map(|name| {
            let vals: Vec<f64> = reports
                .iter()
                .flat_map(|r| {
                    if name == "log_z" {
                        vec![r.log_z]
                    } else {
                        r.metrics
                            .iter()
                            .filter(|m| m.metric == name)
                            .map(|m| m.value)
                            .collect()
                    }
                })
                .collect();
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            (name, mean, std, n)
        })
        .collect()
}

fn write_csv_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::io("flushing csv", e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Runs `seeds` consecutive seeds starting at the configured one and writes
/// per-seed directories plus `metrics.csv` and `summary.csv` under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, seeds: usize, out: &Path) -> Result<Vec<RunReport>> {
    let exp = Experiment::build(cfg)?;
    write_atomic(
        &out.join(CONFIG_FILE),
        serde_json::to_string_pretty(cfg)?.as_bytes(),
    )?;
    let mut reports = Vec::with_capacity(seeds);
    for i in 0..seeds as u64 {
        let seed = cfg.simulation.seed + i;
        let mut run = run_seed(cfg, &exp, seed)?;
        write_seed_run(cfg, &mut run, &seed_dir(out, seed))?;
        reports.push(run.report);
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|r| {
            r.metrics
                .iter()
                .map(|m| vec![r.seed.to_string(), m.metric.clone(), m.value.to_string()])
                .chain(std::iter::once(vec![
                    r.seed.to_string(),
                    "log_z".into(),
                    r.log_z.to_string(),
                ]))
                .collect::<Vec<_>>()
        })
        .collect();
    write_csv_rows(
        &out.join("metrics.csv"),
        &["seed".into(), "metric".into(), "value".into()],
        &rows,
    )?;
    let summary: Vec<Vec<String>> = aggregate(&reports)
        .into_iter()
        .map(|(m, mean, std, n)| vec![m, mean.to_string(), std.to_string(), n.to_string()])
        .collect();
    write_csv_rows(
        &out.join("summary.csv"),
        &["metric".into(), "mean".into(), "std".into(), "n".into()],
        &summary,
    )?;
    Ok(reports)
}

/// One grid cell: the axis values it sets, by axis name.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub index: usize,
    pub values: Vec<(&'static str, serde_json::Value)>,
    pub config: ExperimentConfig,
}

fn set_beta(cfg: &mut ExperimentConfig, beta: f64) -> Result<()> {
    match &mut cfg.target {
        TargetConfig::Annealed { beta: b, .. }
        | TargetConfig::Product { beta: b, .. }
        | TargetConfig::RewardTilted { beta: b, .. } => *b = BetaSchedule::Constant(beta),
        TargetConfig::Geometric { beta: b, .. } | TargetConfig::PoeCfg { beta: b, .. } => *b = beta,
        TargetConfig::WeightedProduct { .. } => {
            return Err(HarnessError::validation(
                "sweep.axes.beta",
                "a weighted product has no single beta to sweep",
            ))
        }
    }
    Ok(())
}

fn set_a(cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
    match &mut cfg.target {
        TargetConfig::Annealed { a, .. }
        | TargetConfig::Product { a, .. }
        | TargetConfig::Geometric { a, .. } => *a = value,
        _ => {
            return Err(HarnessError::validation(
                "sweep.axes.a",
                "the target has no noise-split parameter a",
            ))
        }
    }
    Ok(())
}

/// Cartesian product of the declared axes in the fixed order beta, a,
/// scheme, n_particles, t_min, t_max (last axis fastest). An empty grid
/// gives the base config as the single cell.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let SweepAxes {
        beta,
        a,
        scheme,
        n_particles,
        t_min,
        t_max,
    } = &sweep.axes;
    let axes: Vec<(&'static str, Vec<serde_json::Value>)> = [
        ("beta", beta.iter().map(|v| json!(v)).collect::<Vec<_>>()),
        ("a", a.iter().map(|v| json!(v)).collect()),
        ("scheme", scheme.iter().map(|v| json!(v)).collect()),
        (
            "n_particles",
            n_particles.iter().map(|v| json!(v)).collect(),
        ),
        ("t_min", t_min.iter().map(|v| json!(v)).collect()),
        ("t_max", t_max.iter().map(|v| json!(v)).collect()),
    ]
    .into_iter()
    .filter(|(_, v)| !v.is_empty())
    .collect();
    let n_cells: usize = axes.iter().map(|(_, v)| v.len()).product();
    let runs = n_cells.saturating_mul(sweep.seeds.max(1));
    if runs > sweep.max_runs {
        return Err(HarnessError::validation(
            "sweep",
            format!(
                "grid needs {runs} runs ({n_cells} cells x {} seeds), cap is {}",
                sweep.seeds, sweep.max_runs
            ),
        ));
    }
    let mut cells = Vec::with_capacity(n_cells);
    for index in 0..n_cells {
        let mut rest = index;
        let mut picks = vec![0; axes.len()];
        for (slot, (_, vals)) in picks.iter_mut().zip(&axes).rev() {
            *slot = rest % vals.len();
            rest /= vals.len();
        }
        let mut c = cfg.clone();
        c.sweep = None;
        let mut values = Vec::with_capacity(axes.len());
        for ((name, vals), &i) in axes.iter().zip(&picks) {
            let v = &vals[i];
            match *name {
                "beta" => set_beta(&mut c, v.as_f64().unwrap_or(f64::NAN))?,
                "a" => set_a(&mut c, v.as_f64().unwrap_or(f64::NAN))?,
                "scheme" => c.resampling.scheme = serde_json::from_value(v.clone())?,
                "n_particles" => c.simulation.n_particles = v.as_u64().unwrap_or(0) as usize,
                "t_min" => c.resampling.t_min = v.as_f64().unwrap_or(f64::NAN),
                _ => c.resampling.t_max = v.as_f64().unwrap_or(f64::NAN),
            }
            values.push((*name, v.clone()));
        }
        Experiment::build(&c).map_err(|e| match e {
            HarnessError::Validation { path, message } => {
                HarnessError::validation(format!("sweep cell {index}: {path}"), message)
            }
            e => e,
        })?;
        cells.push(Cell {
            index,
            values,
            config: c,
        });
    }
    Ok(cells)
}

/// Runs every cell for every seed; writes `sweep.csv` with one row per cell
/// per seed and `sweep.json` with the full reports.
pub fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<(Cell, RunReport)>> {
    let cells = sweep_cells(cfg)?;
    let seeds = cfg.sweep.as_ref().map_or(1, |s| s.seeds.max(1));
    let axis_names: Vec<&str> = cells[0].values.iter().map(|(n, _)| *n).collect();
    let metric_names: Vec<&str> = cfg.metrics.list.iter().map(|m| m.name()).collect();
    let mut header: Vec<String> = vec!["cell".into()];
    header.extend(axis_names.iter().map(|s| s.to_string()));
    header.extend(["seed", "log_z", "final_ess"].map(String::from));
    header.extend(metric_names.iter().map(|s| s.to_string()));

    let mut rows = Vec::new();
    let mut results = Vec::new();
    for cell in cells {
        let exp = Experiment::build(&cell.config)?;
        for i in 0..seeds as u64 {
            let seed = cell.config.simulation.seed + i;
            let run = run_seed(&cell.config, &exp, seed)?;
            let r = run.report;
            let mut row = vec![cell.index.to_string()];
            row.extend(cell.values.iter().map(|(_, v)| match v {
                serde_json::Value::String(s) => s.clone(),
                v => v.to_string(),
            }));
            row.extend([
                seed.to_string(),
                r.log_z.to_string(),
                r.final_ess.to_string(),
            ]);
            for name in &metric_names {
                let v = r
                    .metrics
                    .iter()
                    .find(|m| m.metric == *name)
                    .map(|m| m.value);
                row.push(v.map(|v| v.to_string()).unwrap_or_default());
            }
            rows.push(row);
            results.push((cell.clone(), r));
        }
    }
    write_csv_rows(&out.join("sweep.csv"), &header, &rows)?;
    write_json(&out.join("sweep.json"), &results.iter().map(|(c, r)| json!({"cell": c.index, "values": c.values.iter().map(|(n, v)| (n.to_string(), v.clone())).collect::<serde_json::Map<_, _>>(), "report": r})).collect::<Vec<_>>())?;
    Ok(results)
}
