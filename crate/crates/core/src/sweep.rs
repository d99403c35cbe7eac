//! Fidelity maps over cavity frequency and pulse bandwidth.
//!
//! Rows are checkpointed one JSON line at a time next to the output file,
//! so an interrupted sweep resumes where it stopped. The final CSV is
//! written in grid order (ω_C outer, σ inner) once every point is known.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device::{diagonalize_and_label, DressedSpectrum, SystemConfig, SystemSpec};
use crate::envelope::Shape;
use crate::error::{Error, Result};
use crate::gates::diagonal_unitary;
use crate::propagator::{extract_gate, DrivenSystem, Frame, GateReport, PropagatorOptions};
use crate::schedule::{compile_bit_train, render_train, target_phases, DiagonalGate, TrainOptions, MERGE_FRACTION};
use crate::spectroscopy::{transition_catalog, Transition};
use crate::units::{parse_grid, to_ghz, to_mhz, Unit};

/// Gate names accepted on the command line and in configs.
pub fn parse_gate(name: &str) -> Result<DiagonalGate> {
    match name.to_ascii_lowercase().replace('_', "-").as_str() {
        "ccz" | "mcz" | "multi-control-z" => Ok(DiagonalGate::MultiControlZ),
        "czz" | "cz-cascade" => Ok(DiagonalGate::CzCascade),
        "qft" | "qft-cascade" => Ok(DiagonalGate::QftCascade),
        "identity" | "id" => Ok(DiagonalGate::Identity),
        other => Err(Error::InvalidSpec(format!("unknown gate `{other}`"))),
    }
}

/// How a train is rendered and simulated at one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    /// Computational level lifted by the pulses; chosen from the drive
    /// pairs when absent.
    pub active_level: Option<usize>,
    pub aux_level: usize,
    pub shape: Shape,
    /// RWA window in units of σ.
    pub window_factor: f64,
    pub merge_fraction: f64,
    pub catalog_floor: f64,
    pub frame: Frame,
    pub points_per_period: f64,
    pub rabi_resolution: f64,
    pub element_floor: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        let p = PropagatorOptions::default();
        SimSettings {
            active_level: None,
            aux_level: 2,
            shape: Shape::Gaussian,
            window_factor: 100.0,
            merge_fraction: MERGE_FRACTION,
            catalog_floor: 1e-6,
            frame: Frame::Rwa,
            points_per_period: p.points_per_period,
            rabi_resolution: p.rabi_resolution,
            element_floor: p.element_floor,
        }
    }
}

impl SimSettings {
    pub fn active_level(&self, spec: &SystemSpec) -> Result<usize> {
        if let Some(a) = self.active_level {
            return Ok(a);
        }
        (0..2)
            .find(|&a| spec.drive.iter().any(|p| (p.lower, p.upper) == (a, self.aux_level)))
            .ok_or_else(|| {
                Error::InvalidSpec(format!("no drive pair connects a computational level to level {}", self.aux_level))
            })
    }

    pub fn propagator(&self, sigma: f64) -> PropagatorOptions {
        PropagatorOptions {
            frame: self.frame,
            window: (self.frame == Frame::Rwa).then_some(self.window_factor * sigma),
            points_per_period: self.points_per_period,
            rabi_resolution: self.rabi_resolution,
            element_floor: self.element_floor,
            ..Default::default()
        }
    }
}

/// Everything at one cavity frequency that does not depend on σ.
pub struct Prepared {
    pub spec: SystemSpec,
    pub spectrum: DressedSpectrum,
    pub catalog: Vec<Transition>,
    pub system: DrivenSystem,
}

impl Prepared {
    pub fn new(spec: &SystemSpec, settings: &SimSettings) -> Result<Self> {
        let spectrum = diagonalize_and_label(spec)?;
        let catalog = transition_catalog(&spectrum, &spec.drive, settings.catalog_floor)?;
        let system = DrivenSystem::new(&spectrum, &spec.drive)?;
        Ok(Prepared {
            spec: spec.clone(),
            spectrum,
            catalog,
            system,
        })
    }
}

/// Compile, render and simulate `gate` as a π-pulse train of bandwidth
/// `sigma` on a prepared device.
pub fn simulate_train(prepared: &Prepared, gate: &DiagonalGate, sigma: f64, settings: &SimSettings) -> Result<GateReport> {
    let n = prepared.spec.n_qs();
    let a = settings.active_level(&prepared.spec)?;
    let options = TrainOptions {
        sigma,
        shape: settings.shape,
        active_level: a,
        aux_level: settings.aux_level,
        merge_fraction: settings.merge_fraction,
    };
    let train = compile_bit_train(gate, n, &options)?;
    let drive = render_train(&train, &prepared.catalog)?;
    let popts = settings.propagator(sigma);
    let comp = prepared.system.computational(n)?;
    let keep = prepared.system.reachable(&comp, &drive, &popts);
    let sub = prepared.system.restrict(&keep);
    let inputs = sub.computational(n)?;
    let target = diagonal_unitary(&target_phases(gate, n, a)?);
    extract_gate(&sub, &drive, &inputs, &target, &popts)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepJob {
    pub system: SystemSpec,
    pub gate: DiagonalGate,
    /// Cavity frequencies, rad/s, ascending.
    pub omega_c: Vec<f64>,
    /// Bandwidths, rad/s, ascending.
    pub sigma: Vec<f64>,
    pub settings: SimSettings,
    /// Worker threads; all cores when absent.
    #[serde(skip)]
    pub threads: Option<usize>,
}

/// JSON form of a [`SweepJob`]; grids use the `start:stop:count` syntax.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub system: SystemConfig,
    pub gate: String,
    pub omega_c: String,
    pub sigma: String,
    #[serde(default)]
    pub settings: SimSettings,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl SweepConfig {
    pub fn into_job(self) -> Result<SweepJob> {
        let job = SweepJob {
            system: self.system.into_spec()?,
            gate: parse_gate(&self.gate)?,
            omega_c: parse_grid(&self.omega_c, Unit::GHz)?,
            sigma: parse_grid(&self.sigma, Unit::MHz)?,
            settings: self.settings,
            threads: self.threads,
        };
        job.validate()?;
        Ok(job)
    }
}

impl SweepJob {
    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [("omega_c", &self.omega_c), ("sigma", &self.sigma)] {
            if grid.is_empty() {
                return Err(Error::InvalidSpec(format!("{name} grid is empty")));
            }
            if grid.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidSpec(format!("{name} grid must be strictly ascending")));
            }
        }
        if self.sigma[0] <= 0.0 {
            return Err(Error::InvalidSpec("bandwidths must be positive".into()));
        }
        self.system.validate()
    }

    pub fn len(&self) -> usize {
        self.omega_c.len() * self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// SHA-256 of the resolved job, hex encoded.
    pub fn config_hash(&self) -> Result<String> {
        let text = serde_json::to_string(self)?;
        Ok(Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub omega_c: f64,
    pub sigma: f64,
    pub fidelity: f64,
    pub leakage: f64,
    /// `ok`, `unusable`, or the kind of error that stopped the point.
    pub status: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointLine {
    index: usize,
    fidelity: Option<f64>,
    leakage: Option<f64>,
    status: String,
}

pub fn checkpoint_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".ckpt");
    PathBuf::from(p)
}

fn read_checkpoint(path: &Path, hash: &str) -> Result<BTreeMap<usize, CheckpointLine>> {
    let mut done = BTreeMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(e.into()),
    };
    let mut lines = BufReader::new(file).lines();
    match lines.next().transpose()? {
        Some(h) if h.trim() == hash => {}
        Some(_) => {
            return Err(Error::Precondition(format!(
                "checkpoint {} belongs to a different configuration",
                path.display()
            )))
        }
        None => return Ok(done),
    }
    for line in lines {
        let line = line?;
        // a torn final line from an interrupted write is recomputed
        if let Ok(row) = serde_json::from_str::<CheckpointLine>(&line) {
            done.insert(row.index, row);
        }
    }
    Ok(done)
}

fn row_from_report(report: Result<GateReport>) -> (Option<f64>, Option<f64>, String) {
    match report {
        Ok(r) => {
            let status = if r.unusable { "unusable" } else { "ok" };
            (Some(r.fidelity), Some(r.leakage), status.to_string())
        }
        Err(e) => (None, None, e.kind().to_string()),
    }
}

/// Evaluate every grid point not already in the checkpoint, then write
/// the table to `out`. `progress` is called after each finished point with
/// its grid index.
pub fn run_sweep(job: &SweepJob, out: &Path, resume: bool, progress: &(dyn Fn(usize) + Sync)) -> Result<Vec<SweepRow>> {
    job.validate()?;
    let hash = job.config_hash()?;
    let ckpt = checkpoint_path(out);
    let done = if resume { read_checkpoint(&ckpt, &hash)? } else { BTreeMap::new() };
    if done.is_empty() {
        let mut f = File::create(&ckpt)?;
        writeln!(f, "{hash}")?;
    }
    let writer = Mutex::new(OpenOptions::new().append(true).open(&ckpt)?);
    let new_rows = Mutex::new(Vec::new());
    let ns = job.sigma.len();

    let work = || -> Result<()> {
        (0..job.omega_c.len()).into_par_iter().try_for_each(|i| -> Result<()> {
            let todo: Vec<usize> = (0..ns).map(|j| i * ns + j).filter(|k| !done.contains_key(k)).collect();
            if todo.is_empty() {
                return Ok(());
            }
            let prepared = Prepared::new(&job.system.with_omega_c(job.omega_c[i]), &job.settings);
            for k in todo {
                let (fidelity, leakage, status) = match &prepared {
                    Ok(p) => row_from_report(simulate_train(p, &job.gate, job.sigma[k % ns], &job.settings)),
                    Err(e) => (None, None, e.kind().to_string()),
                };
                let line = CheckpointLine { index: k, fidelity, leakage, status };
                {
                    let mut w = writer.lock().expect("checkpoint writer poisoned");
                    writeln!(w, "{}", serde_json::to_string(&line)?)?;
                    w.flush()?;
                }
                new_rows.lock().expect("row buffer poisoned").push(line);
                progress(k);
            }
            Ok(())
        })
    };
    match job.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Precondition(e.to_string()))?
            .install(work)?,
        None => work()?,
    }

    let mut all = done;
    for line in new_rows.into_inner().expect("row buffer poisoned") {
        all.insert(line.index, line);
    }
    let rows: Vec<SweepRow> = (0..job.len())
        .map(|k| {
            let line = &all[&k];
            SweepRow {
                omega_c: job.omega_c[k / ns],
                sigma: job.sigma[k % ns],
                fidelity: line.fidelity.unwrap_or(f64::NAN),
                leakage: line.leakage.unwrap_or(f64::NAN),
                status: line.status.clone(),
            }
        })
        .collect();
    let tmp = out.with_extension("partial");
    write_sweep_csv(job, &rows, File::create(&tmp)?)?;
    fs::rename(&tmp, out)?;
    fs::remove_file(&ckpt)?;
    Ok(rows)
}

/// CSV with a `#` comment header carrying the configuration hash.
pub fn write_sweep_csv<W: Write>(job: &SweepJob, rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "# cavity-walk fidelity sweep")?;
    writeln!(out, "# config_sha256 {}", job.config_hash()?)?;
    writeln!(out, "# grid {} omega_c x {} sigma", job.omega_c.len(), job.sigma.len())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["omega_c_ghz", "sigma_mhz", "fidelity", "leakage", "status"])?;
    for r in rows {
        w.write_record([
            format!("{:.9}", to_ghz(r.omega_c)),
            format!("{:.9e}", to_mhz(r.sigma)),
            format!("{:.12e}", r.fidelity),
            format!("{:.12e}", r.leakage),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Blocks of `omega_c_ghz sigma_mhz fidelity` separated by blank lines,
/// the layout gnuplot's `splot ... with pm3d` expects.
pub fn write_gnuplot_matrix<W: Write>(job: &SweepJob, rows: &[SweepRow], mut out: W) -> Result<()> {
    let ns = job.sigma.len();
    for (i, block) in rows.chunks(ns).enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        for r in block {
            writeln!(out, "{:.9} {:.9e} {:.12e}", to_ghz(r.omega_c), to_mhz(r.sigma), r.fidelity)?;
        }
    }
    Ok(())
}
