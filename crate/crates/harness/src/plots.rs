//! Flat plot-ready files from a run directory; no rendering here.
//!
//! For every `seed_*` directory the bundle under `plots/seed_<n>/` holds
//! `ess.csv` (one row per step), `scatter.csv` (particles and reference
//! points), `heatmap.csv` (2D runs, on the total-variation grid) and
//! `energy_hist.csv` (when the target has an exact reference).

use std::fs;
use std::path::{Path, PathBuf};

use fkc_core::engine::{read_binary, BinaryDump};
use fkc_core::metrics::{histogram_2d, GridSpec};
use fkc_core::SampleSet;

use crate::config::load_config;
use crate::error::{HarnessError, Result};
use crate::experiment::Experiment;
use crate::run::{write_atomic, CONFIG_FILE, DIAGNOSTICS_FILE, REFERENCE_BIN, SAMPLES_BIN};

pub const ENERGY_BINS: usize = 60;

/// Files written for one seed.
#[derive(Debug, Clone, Default)]
pub struct PlotBundle {
    pub seed_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

fn read_dump(path: &Path) -> Result<BinaryDump> {
    if !path.is_file() {
        return Err(HarnessError::MissingDump(path.to_path_buf()));
    }
    let bytes =
        fs::read(path).map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))?;
    Ok(read_binary(bytes.as_slice())?)
}

fn dump_samples(d: &BinaryDump) -> Result<SampleSet> {
    let m = d
        .log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = d.log_weights.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    Ok(SampleSet::weighted(
        d.positions.clone(),
        d.dim,
        w.into_iter().map(|v| v / s).collect(),
    )?)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner()
        .map_err(|e| HarnessError::io("flushing csv", e.into_error()))
}

fn ess_rows(seed_dir: &Path) -> Result<Vec<u8>> {
    let path = seed_dir.join(DIAGNOSTICS_FILE);
    if !path.is_file() {
        return Err(HarnessError::MissingDump(path));
    }
    let text = fs::read_to_string(&path)
        .map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))?;
    let d: fkc_core::engine::Diagnostics = serde_json::from_str(&text)?;
    csv_bytes(
        &["step", "t", "ess", "log_z", "jumps"],
        (0..d.times.len()).map(|i| {
            vec![
                i.to_string(),
                d.times[i].to_string(),
                d.ess[i].to_string(),
                d.log_z[i].to_string(),
                d.jumps.get(i).copied().unwrap_or(0).to_string(),
            ]
        }),
    )
}

fn scatter_rows(samples: &BinaryDump, reference: Option<&BinaryDump>) -> Result<Vec<u8>> {
    let d = samples.dim;
    let mut header = vec!["source".to_string()];
    header.extend((0..d).map(|j| format!("x{j}")));
    header.push("log_weight".into());
    let rows = |src: &'static str, b: &BinaryDump| {
        (0..b.log_weights.len())
            .map(|k| {
                let mut r = vec![src.to_string()];
                r.extend(
                    b.positions[k * d..(k + 1) * d]
                        .iter()
                        .map(|v| v.to_string()),
                );
                r.push(b.log_weights[k].to_string());
                r
            })
            .collect::<Vec<_>>()
    };
    let mut all = rows("fkc", samples);
    if let Some(r) = reference {
        all.extend(rows("reference", r));
    }
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(&h, all)
}

fn heatmap_rows(
    samples: &SampleSet,
    reference: Option<&SampleSet>,
    grid: &GridSpec,
) -> Result<Vec<u8>> {
    let hs = histogram_2d(samples, grid)?;
    let hr = reference.map(|r| histogram_2d(r, grid)).transpose()?;
    csv_bytes(
        &["i", "j", "x", "y", "fkc_mass", "reference_mass"],
        (0..grid.n_cells()).map(|c| {
            let [x, y] = grid.center(c);
            vec![
                (c / grid.bins[1]).to_string(),
                (c % grid.bins[1]).to_string(),
                x.to_string(),
                y.to_string(),
                hs[c].to_string(),
                hr.as_ref().map(|h| h[c].to_string()).unwrap_or_default(),
            ]
        }),
    )
}

/// Weighted histograms of `-log p` under the reference mixture on a shared
/// range, each normalized to unit mass.
fn energy_rows(
    exp: &Experiment,
    samples: &SampleSet,
    reference: &SampleSet,
) -> Result<Option<Vec<u8>>> {
    let Some(mix) = &exp.reference else {
        return Ok(None);
    };
    let energies = |s: &SampleSet| -> Vec<(f64, f64)> {
        (0..s.len())
            .filter_map(|i| {
                let e = -mix.log_density(s.point(i)).ok()?;
                e.is_finite().then_some((e, s.weights()[i]))
            })
            .collect()
    };
    let (es, er) = (energies(samples), energies(reference));
    let (lo, hi) = es
        .iter()
        .chain(&er)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &(e, _)| {
            (l.min(e), h.max(e))
        });
    if !(hi > lo) {
        return Ok(None);
    }
    let width = (hi - lo) / ENERGY_BINS as f64;
    let hist = |v: &[(f64, f64)]| {
        let mut h = vec![0.0; ENERGY_BINS];
        for &(e, w) in v {
            h[(((e - lo) / width) as usize).min(ENERGY_BINS - 1)] += w;
        }
        let total: f64 = h.iter().sum();
        h.iter().map(|m| m / total).collect::<Vec<_>>()
    };
    let (hs, hr) = (hist(&es), hist(&er));
    Ok(Some(csv_bytes(
        &["lo", "hi", "fkc_mass", "reference_mass"],
        (0..ENERGY_BINS).map(|b| {
            vec![
                (lo + b as f64 * width).to_string(),
                (lo + (b + 1) as f64 * width).to_string(),
                hs[b].to_string(),
                hr[b].to_string(),
            ]
        }),
    )?))
}

/// Seed directories of a run, sorted by name.
pub fn seed_dirs(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(run_dir)
        .map_err(|e| HarnessError::io(format!("listing {}", run_dir.display()), e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("seed_"))
        })
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub fn emit_plot_data(run_dir: &Path) -> Result<Vec<PlotBundle>> {
    let cfg_path = run_dir.join(CONFIG_FILE);
    if !cfg_path.is_file() {
        return Err(HarnessError::MissingDump(cfg_path));
    }
    let cfg = load_config(&cfg_path)?;
    let exp = Experiment::build(&cfg)?;
    let dirs = seed_dirs(run_dir)?;
    if dirs.is_empty() {
        return Err(HarnessError::MissingDump(run_dir.join("seed_*")));
    }
    let mut bundles = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let samples = read_dump(&dir.join(SAMPLES_BIN))?;
        let ref_path = dir.join(REFERENCE_BIN);
        let reference = if ref_path.is_file() {
            Some(read_dump(&ref_path)?)
        } else {
            None
        };
        let s = dump_samples(&samples)?;
        let r = reference.as_ref().map(dump_samples).transpose()?;

        let out = run_dir
            .join("plots")
            .join(dir.file_name().expect("seed dirs have names"));
        let mut files = Vec::new();
        let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
            let p = out.join(name);
            write_atomic(&p, &bytes)?;
            files.push(p);
            Ok(())
        };
        put("ess.csv", ess_rows(&dir)?)?;
        put("scatter.csv", scatter_rows(&samples, reference.as_ref())?)?;
        if samples.dim == 2 {
            put(
                "heatmap.csv",
                heatmap_rows(&s, r.as_ref(), &cfg.metrics.grid)?,
            )?;
        }
        if let Some(r) = &r {
            if let Some(bytes) = energy_rows(&exp, &s, r)? {
                put("energy_hist.csv", bytes)?;
            }
        }
        bundles.push(PlotBundle {
            seed_dir: dir,
            files,
        });
    }
    Ok(bundles)
}
