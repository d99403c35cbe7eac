use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cavity_walk::device::{spectrum_vs_cavity, write_spectrum_csv, SystemConfig, SystemSpec};
use cavity_walk::envelope::Shape;
use cavity_walk::propagator::Frame;
use cavity_walk::schedule::{compile_bit_train, TrainOptions};
use cavity_walk::spectroscopy::{analyze, crowding_limit, write_catalog_csv, CrowdingParams};
use cavity_walk::sweep::{
    parse_gate, run_sweep, simulate_train, write_gnuplot_matrix, Prepared, SimSettings, SweepConfig, SweepJob,
};
use cavity_walk::units::{parse_grid, Unit};
use cavity_walk::walk::{build_walk_graph, ccz_symbols, design_ccz, solve_return_conditions, SolveOptions, WalkDesign};
use cavity_walk::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "cavity-walk", version, about = "Dressed spectra, pulse trains and gate fidelities for qubit systems sharing a cavity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dressed energies over a cavity-frequency grid.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        /// start:stop:count, GHz unless suffixed.
        #[arg(long)]
        omega_c: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Transition catalog and selectivity report for one transition kind.
    Irr {
        #[arg(long)]
        config: PathBuf,
        /// Levels of the transition kind, e.g. `0,2`.
        #[arg(long, default_value = "0,2")]
        kind: String,
        /// Override the configured cavity frequency (GHz unless suffixed).
        #[arg(long)]
        omega_c: Option<String>,
        /// Also write the catalog as CSV.
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Compile a diagonal gate into a π-pulse train.
    Compile {
        #[arg(long)]
        gate: String,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Pulse bandwidth (MHz unless suffixed).
        #[arg(long, default_value = "1")]
        sigma: String,
        #[arg(long, default_value_t = 0)]
        active_level: usize,
        #[arg(long, value_enum, default_value_t = ShapeArg::Gaussian)]
        shape: ShapeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quantum-walk gate design.
    WalkDesign {
        #[arg(long, default_value = "ccz")]
        gate: String,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Search the return conditions numerically instead of using the
        /// analytic amplitudes.
        #[arg(long)]
        solve: bool,
        #[arg(long, default_value_t = 6)]
        max_index: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one compiled gate on the device and report its fidelity.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        gate: String,
        /// Pulse bandwidth (MHz unless suffixed).
        #[arg(long)]
        sigma: String,
        #[arg(long)]
        omega_c: Option<String>,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fidelity map over cavity frequency and bandwidth.
    Sweep {
        /// Sweep config, or a device config when the grids are given here.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        gate: Option<String>,
        #[arg(long)]
        sigma: Option<String>,
        #[arg(long)]
        omega_c: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint next to `--out`.
        #[arg(long)]
        resume: bool,
        /// Also write a gnuplot pm3d matrix.
        #[arg(long)]
        gnuplot: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Largest register the crowding inequalities allow.
    Crowding {
        #[arg(long)]
        g_over_omega1: f64,
        #[arg(long)]
        alpha_over_omega1: f64,
        #[arg(long)]
        k: f64,
        #[arg(long)]
        gamma_over_g: f64,
    },
}

#[derive(Args, Clone, Default)]
struct SimArgs {
    #[arg(long)]
    active_level: Option<usize>,
    /// RWA window in units of σ.
    #[arg(long)]
    window_factor: Option<f64>,
    #[arg(long, value_enum)]
    frame: Option<FrameArg>,
    #[arg(long, value_enum)]
    shape: Option<ShapeArg>,
}

impl SimArgs {
    fn apply(&self, mut s: SimSettings) -> SimSettings {
        if self.active_level.is_some() {
            s.active_level = self.active_level;
        }
        if let Some(w) = self.window_factor {
            s.window_factor = w;
        }
        if let Some(f) = self.frame {
            s.frame = f.into();
        }
        if let Some(sh) = self.shape {
            s.shape = sh.into();
        }
        s
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Gaussian,
    Sech,
}

impl From<ShapeArg> for Shape {
    fn from(s: ShapeArg) -> Shape {
        match s {
            ShapeArg::Gaussian => Shape::Gaussian,
            ShapeArg::Sech => Shape::Sech,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameArg {
    Lab,
    Interaction,
    Rwa,
}

impl From<FrameArg> for Frame {
    fn from(f: FrameArg) -> Frame {
        match f {
            FrameArg::Lab => Frame::Lab,
            FrameArg::Interaction => Frame::Interaction,
            FrameArg::Rwa => Frame::Rwa,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        return 3;
    }
    match e {
        Error::Json(_)
        | Error::InvalidSpec(_)
        | Error::Domain(_)
        | Error::BasisTooLarge { .. }
        | Error::Compile(_)
        | Error::Design(_)
        | Error::Interference { .. } => 2,
        _ => 1,
    }
}

fn report(kind: &str, message: &str, code: u8) -> ExitCode {
    let record = json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{record}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report("usage", e.to_string().trim(), 2),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e.kind(), &e.to_string(), exit_code(&e)),
    }
}

fn read_system(path: &Path) -> cavity_walk::Result<SystemSpec> {
    SystemConfig::from_json(&fs::read_to_string(path)?)
}

fn single_frequency(text: &str, unit: Unit) -> cavity_walk::Result<f64> {
    match parse_grid(text, unit)?.as_slice() {
        [v] => Ok(*v),
        _ => Err(Error::Domain(format!("`{text}` must be a single value"))),
    }
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> cavity_walk::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => {
            let mut stdout = io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
                other => other?,
            }
        }
    }
    Ok(())
}

fn walk_json(design: &WalkDesign) -> serde_json::Value {
    let amplitudes: Vec<_> = design
        .amplitudes
        .iter()
        .map(|(s, w)| {
            json!({
                "symbol": s.to_string(),
                "qs": s.qs,
                "tier": s.tier,
                "amplitude": w,
                "amplitude_over_pi": w / std::f64::consts::PI,
            })
        })
        .collect();
    json!({
        "tau": design.tau,
        "amplitudes": amplitudes,
        "component_sizes": design.graph.component_sizes(),
        "flipped_states": design.flipped_states,
        "x_frame": design.x_frame,
    })
}

fn run(command: Command) -> cavity_walk::Result<()> {
    match command {
        Command::Spectrum { config, omega_c, out } => {
            let spec = read_system(&config)?;
            let grid = parse_grid(&omega_c, Unit::GHz)?;
            let rows = spectrum_vs_cavity(&spec, &grid)?;
            write_spectrum_csv(&rows, BufWriter::new(File::create(out)?))
        }
        Command::Irr { config, kind, omega_c, catalog } => {
            let mut spec = read_system(&config)?;
            if let Some(w) = omega_c {
                spec = spec.with_omega_c(single_frequency(&w, Unit::GHz)?);
            }
            let levels: Vec<usize> = kind
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| Error::Domain(format!("malformed kind `{kind}`"))))
                .collect::<cavity_walk::Result<_>>()?;
            let [lo, hi] = levels[..] else {
                return Err(Error::Domain(format!("kind `{kind}` must name two levels")));
            };
            let (cat, irr) = analyze(&spec, (lo.min(hi), lo.max(hi)))?;
            if let Some(p) = catalog {
                write_catalog_csv(&cat, BufWriter::new(File::create(p)?))?;
            }
            emit(&serde_json::to_value(&irr)?, None)
        }
        Command::Compile { gate, n, sigma, active_level, shape, out } => {
            let options = TrainOptions::new(single_frequency(&sigma, Unit::MHz)?)
                .with_active_level(active_level)
                .with_shape(shape.into());
            let train = compile_bit_train(&parse_gate(&gate)?, n, &options)?;
            emit(&serde_json::to_value(&train)?, out.as_deref())
        }
        Command::WalkDesign { gate, tau, solve, max_index, out } => {
            if parse_gate(&gate)? != cavity_walk::schedule::DiagonalGate::MultiControlZ {
                return Err(Error::Design(format!("no walk design for `{gate}`")));
            }
            let analytic = design_ccz(tau)?;
            if !solve {
                return emit(&walk_json(&analytic), out.as_deref());
            }
            let graph = build_walk_graph(&ccz_symbols(), 3, 0, 2)?;
            let targets: Vec<(usize, f64)> = (0..4)
                .map(|x| (graph.component_of_state(x), if x == 3 { std::f64::consts::PI } else { 0.0 }))
                .collect();
            let [_, s2, s3, ..] = ccz_symbols();
            let options = SolveOptions {
                max_index,
                ties: vec![(s2, s3)],
                ..Default::default()
            };
            let solutions = solve_return_conditions(&graph, tau, &targets, &options)?;
            let designs: Vec<_> = solutions
                .into_iter()
                .map(|s| {
                    let d = WalkDesign {
                        amplitudes: s.amplitudes,
                        ..analytic.clone()
                    };
                    let mut v = walk_json(&d);
                    v["indices"] = json!(s.indices);
                    v["residual"] = json!(s.residual);
                    v
                })
                .collect();
            emit(&json!({ "solutions": designs }), out.as_deref())
        }
        Command::Simulate { config, gate, sigma, omega_c, sim, out } => {
            let mut spec = read_system(&config)?;
            if let Some(w) = omega_c {
                spec = spec.with_omega_c(single_frequency(&w, Unit::GHz)?);
            }
            let settings = sim.apply(SimSettings::default());
            let prepared = Prepared::new(&spec, &settings)?;
            let report = simulate_train(&prepared, &parse_gate(&gate)?, single_frequency(&sigma, Unit::MHz)?, &settings)?;
            emit(&serde_json::to_value(report.to_json())?, out.as_deref())
        }
        Command::Sweep { config, gate, sigma, omega_c, out, resume, gnuplot, threads, sim } => {
            let text = fs::read_to_string(&config)?;
            let mut job: SweepJob = match serde_json::from_str::<SweepConfig>(&text) {
                Ok(cfg) => {
                    let mut cfg = cfg;
                    if let Some(g) = gate {
                        cfg.gate = g;
                    }
                    if let Some(s) = sigma {
                        cfg.sigma = s;
                    }
                    if let Some(w) = omega_c {
                        cfg.omega_c = w;
                    }
                    cfg.into_job()?
                }
                Err(_) => {
                    let spec = SystemConfig::from_json(&text)?;
                    let need = |v: Option<String>, name: &str| {
                        v.ok_or_else(|| Error::InvalidSpec(format!("--{name} is required with a device config")))
                    };
                    let job = SweepJob {
                        system: spec,
                        gate: parse_gate(&need(gate, "gate")?)?,
                        omega_c: parse_grid(&need(omega_c, "omega-c")?, Unit::GHz)?,
                        sigma: parse_grid(&need(sigma, "sigma")?, Unit::MHz)?,
                        settings: SimSettings::default(),
                        threads: None,
                    };
                    job.validate()?;
                    job
                }
            };
            job.settings = sim.apply(job.settings);
            if threads.is_some() {
                job.threads = threads;
            }
            let total = job.len();
            let rows = run_sweep(&job, &out, resume, &|k| eprintln!("point {}/{total}", k + 1))?;
            if let Some(p) = gnuplot {
                write_gnuplot_matrix(&job, &rows, BufWriter::new(File::create(p)?))?;
            }
            Ok(())
        }
        Command::Crowding { g_over_omega1, alpha_over_omega1, k, gamma_over_g } => {
            let limit = crowding_limit(&CrowdingParams::new(g_over_omega1, alpha_over_omega1, k, gamma_over_g))?;
            emit(&serde_json::to_value(limit)?, None)
        }
    }
}
