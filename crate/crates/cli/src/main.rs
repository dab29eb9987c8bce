mod config;

use clap::{Parser, Subcommand};
use config::{ConfigError, ExperimentConfig, Mode};
use phaselift::assembly::{
    assemble, assemble_schrodinger, basis_on_grid, build_velocity_quadrature, rhs_from_initial, AssemblyOptions,
    LinearSystem, SchrodingerStepper,
};
use phaselift::coeff::{sample_inputs, SampleSet};
use phaselift::costmodel::{cost_report, regime_scan};
use phaselift::grid::{check_cfl, Kind, PhaseSpaceGrid};
use phaselift::io::{fmt17, recovered_rows, write_csv};
use phaselift::lift::{
    ensemble_variance_advection, lift_initial, lift_initial_complex, recover_boltzmann_moments, recover_mean,
    LiftedField, Quantity, RecoveredField,
};
use phaselift::observables::{build_readout, expectation_quadratic, normalization_constants};
use phaselift::solve::{ensemble_direct, march_explicit, march_trapezoidal_schrodinger, Record};
use phaselift::spectral::{scaling_verdicts, spectral_report, IterationOptions, SpectralReport};
use phaselift::{Error, Scalar, C64};
use serde::Serialize;
use serde_json::{json, Value};
use std::cell::RefCell;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "phaselift", version, about = "Phase-space lifting experiments for PDEs with uncertain coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the internal parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with code 4 on a failed lemma verdict and refuse CFL violations.
    #[arg(long, global = true)]
    strict: bool,
    /// Override the sampling seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Lifted and/or direct ensemble run, or the pipeline named by `mode`.
    Run,
    /// Spectral report of the lifted system.
    Spectra,
    /// Cost report.
    Cost,
    /// Cost scan over the `scan` ranges (CSV).
    Scan,
    /// Check the configuration and exit.
    ValidateConfig,
}

/// Stable process exit codes.
mod exit {
    pub const OK: u8 = 0;
    pub const OTHER: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const INSTABILITY: u8 = 3;
    pub const VERDICT: u8 = 4;
    pub const CAPACITY: u8 = 5;
}

enum Failure {
    Config(ConfigError),
    Lib(Error),
    Verdict(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(Error::Json(e))
    }
}

fn root_cause(e: &Error) -> &Error {
    match e {
        Error::Sample { source, .. } => root_cause(source),
        other => other,
    }
}

fn lib_code(e: &Error) -> u8 {
    match root_cause(e) {
        Error::Config(_)
        | Error::MalformedModel(_)
        | Error::Positivity { .. }
        | Error::KindMismatch(_)
        | Error::Cfl { .. } => exit::CONFIG,
        Error::Instability { .. } => exit::INSTABILITY,
        Error::Capacity(_) => exit::CAPACITY,
        _ => exit::OTHER,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::CONFIG)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(lib_code(&e))
        }
        Err(Failure::Verdict(msg)) => {
            eprintln!("verdict failure: {msg}");
            ExitCode::from(exit::VERDICT)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError { pointer: String::new(), message: "--config PATH is required".into() })?;
    let mut cfg = config::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("phaselift-out"));
    let ctx = Ctx { cfg, out, strict: cli.strict, timings: RefCell::new(Vec::new()) };
    match cli.command {
        Command::ValidateConfig => validate(ctx),
        Command::Cost => cmd_cost(ctx),
        Command::Scan => cmd_scan(ctx),
        Command::Spectra => cmd_spectra(ctx),
        Command::Run => match ctx.cfg.mode {
            Mode::Spectra => cmd_spectra(ctx),
            Mode::Cost => cmd_cost(ctx),
            _ => cmd_run(ctx),
        },
    }
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    strict: bool,
    timings: RefCell<Vec<(&'static str, f64)>>,
}

impl Ctx {
    fn timed<R>(&self, name: &'static str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        self.timings.borrow_mut().push((name, t.elapsed().as_secs_f64()));
        r
    }

    fn grid(&self) -> Result<PhaseSpaceGrid, Failure> {
        let g = self.cfg.grid_for(1)?;
        self.cfg.check_targets(&g)?;
        Ok(g)
    }

    fn samples(&self) -> Result<SampleSet, Failure> {
        let model = self.cfg.model()?;
        sample_inputs(&model, self.cfg.m, self.cfg.seed, &self.cfg.sampling).map_err(|e| {
            Failure::Config(ConfigError { pointer: "sampling".into(), message: e.to_string() })
        })
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        std::fs::create_dir_all(&self.out)?;
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, v: &T) -> Result<(), Failure> {
        let mut f = self.file(name)?;
        serde_json::to_writer_pretty(&mut f, v)?;
        std::io::Write::write_all(&mut f, b"\n")?;
        Ok(())
    }

    fn write_manifest(&self, grid: Option<&PhaseSpaceGrid>, files: &[String]) -> Result<(), Failure> {
        let wall: serde_json::Map<String, Value> =
            self.timings.borrow().iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
        let m = json!({
            "version": version(),
            "config": self.cfg,
            "grid": grid,
            "files": files,
            "wall_seconds": wall,
        });
        self.write_json("manifest.json", &m)
    }
}

fn version() -> String {
    match option_env!("PHASELIFT_GIT_DESCRIBE") {
        Some(d) => format!("phaselift {} ({d})", env!("CARGO_PKG_VERSION")),
        None => format!("phaselift v{}", env!("CARGO_PKG_VERSION")),
    }
}

fn validate(ctx: Ctx) -> Result<(), Failure> {
    match ctx.cfg.mode {
        Mode::Cost => {
            ctx.cfg.cost_params()?;
        }
        _ => {
            let g = ctx.grid()?;
            let model = ctx.cfg.model()?;
            basis_on_grid(&model, &g)?;
            ctx.samples()?;
        }
    }
    println!("config ok");
    Ok(())
}

/// Refuse CFL violations unless the caller opts into unchecked assembly.
fn assembly_options(g: &PhaseSpaceGrid, strict: bool, refuse: bool) -> Result<AssemblyOptions, Failure> {
    let diag = check_cfl(g);
    if !diag.ok {
        if refuse || strict {
            return Err(Failure::Lib(Error::Cfl { kind: g.kind.to_string(), ratio: diag.ratio, bound: diag.bound }));
        }
        eprintln!("warning: {} = {:.6e} exceeds {:.6e}", diag.ratio_name, diag.ratio, diag.bound);
    }
    Ok(AssemblyOptions { far_p: None, unchecked: !refuse && !strict })
}

enum System {
    Real(LinearSystem<f64>),
    Complex(LinearSystem<C64>),
}

fn build_system(cfg: &ExperimentConfig, g: &PhaseSpaceGrid, opts: &AssemblyOptions) -> Result<System, Failure> {
    let model = cfg.model()?;
    let basis = basis_on_grid(&model, g)?;
    Ok(match g.kind {
        Kind::Schrodinger => System::Complex(assemble_schrodinger(g, &basis, cfg.hbar, cfg.stepper, opts)?),
        Kind::Boltzmann => {
            let q = build_velocity_quadrature(g.n_ord)?;
            System::Real(assemble(g, &basis, Some(&q), opts)?)
        }
        _ => System::Real(assemble(g, &basis, None, opts)?),
    })
}

fn cmd_run(ctx: Ctx) -> Result<(), Failure> {
    let g = ctx.grid()?;
    let model = ctx.cfg.model()?;
    let samples = ctx.samples()?;
    let opts = assembly_options(&g, ctx.strict, true)?;
    let data = ctx.cfg.initial.clone();
    let mode = ctx.cfg.mode;
    let n_t = g.n_t;
    let mut files = Vec::new();

    let lifted_mean: Option<RecoveredField<C64>> = if matches!(mode, Mode::Lifted | Mode::Both) {
        let sys = ctx.timed("assemble", || build_system(&ctx.cfg, &g, &opts))?;
        let (mean, obs) = match sys {
            System::Real(mut s) => {
                let lifted = ctx.timed("lift", || lift_initial(&model, &samples, &data, &g))?;
                rhs_from_initial(&mut s, &lifted)?;
                let traj = ctx.timed("march", || march_explicit(&s, n_t, Record::Last))?;
                let mean = recover_mean(&traj, n_t)?;
                if g.kind == Kind::Boltzmann {
                    let [rho, flux, energy] = recover_boltzmann_moments(&traj, n_t)?;
                    for (name, f) in [("density", rho), ("flux", flux), ("energy", energy)] {
                        if ctx.cfg.observables.iter().any(|q| format!("{q:?}").to_lowercase() == name) {
                            let fname = format!("{name}.csv");
                            write_field(&ctx, &fname, &f, &g)?;
                            files.push(fname);
                        }
                    }
                }
                if ctx.cfg.observables.contains(&Quantity::Variance) {
                    let basis = basis_on_grid(&model, &g)?;
                    let rep = ctx.timed("variance", || {
                        ensemble_variance_advection(&model, &samples, &data, &g, &basis, n_t)
                    })?;
                    if rep.warning {
                        eprintln!("warning: raw variance reached {:.3e}", rep.min_raw);
                    }
                    write_field(&ctx, "variance.csv", &rep.variance, &g)?;
                    files.push("variance.csv".into());
                }
                let obs = readouts(&ctx, &lifted, &traj)?;
                (to_complex(mean), obs)
            }
            System::Complex(mut s) => {
                let lifted = ctx.timed("lift", || lift_initial_complex(&model, &samples, &data, &g))?;
                rhs_from_initial(&mut s, &lifted)?;
                let traj = ctx.timed("march", || match ctx.cfg.stepper {
                    SchrodingerStepper::Trapezoidal => march_trapezoidal_schrodinger(&s, n_t, Record::Last),
                    SchrodingerStepper::ForwardEuler => march_explicit(&s, n_t, Record::Last),
                })?;
                let obs = readouts(&ctx, &lifted, &traj)?;
                (recover_mean(&traj, n_t)?, obs)
            }
        };
        write_field(&ctx, "lifted_mean.csv", &mean, &g)?;
        files.push("lifted_mean.csv".into());
        ctx.write_json("observables.json", &obs)?;
        files.push("observables.json".into());
        Some(mean)
    } else {
        None
    };

    let direct_mean = if matches!(mode, Mode::Direct | Mode::Both) {
        let d = ctx.timed("direct", || ensemble_direct(&model, &samples, &data, &g, n_t, ctx.cfg.hbar))?;
        write_field(&ctx, "direct_mean.csv", &d, &g)?;
        files.push("direct_mean.csv".into());
        Some(d)
    } else {
        None
    };

    if let (Some(l), Some(d)) = (&lifted_mean, &direct_mean) {
        write_comparison(&ctx, l, d, &g)?;
        files.push("comparison.csv".into());
    }
    ctx.write_manifest(Some(&g), &files)
}

fn to_complex(f: RecoveredField<f64>) -> RecoveredField<C64> {
    RecoveredField {
        quantity: f.quantity,
        time_index: f.time_index,
        inner: f.inner,
        values: f.values.into_iter().map(|v| C64::new(v, 0.0)).collect(),
    }
}

fn write_field<T: Scalar>(ctx: &Ctx, name: &str, f: &RecoveredField<T>, g: &PhaseSpaceGrid) -> Result<(), Failure> {
    let (header, rows) = recovered_rows(f, g);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(ctx.file(name)?, &header, &rows)?;
    Ok(())
}

fn write_comparison(
    ctx: &Ctx,
    lifted: &RecoveredField<C64>,
    direct: &RecoveredField<C64>,
    g: &PhaseSpaceGrid,
) -> Result<(), Failure> {
    if lifted.values.len() != direct.values.len() {
        return Err(Error::Layout("lifted and direct means differ in layout".into()).into());
    }
    let complex = g.kind == Kind::Schrodinger;
    let mut header = vec!["j".to_string()];
    header.extend((0..g.d).map(|a| format!("x{a}")));
    if lifted.inner > 1 {
        header.push("v_index".into());
    }
    header.extend(["lifted", "direct", "abs_diff"].map(String::from));
    let mut rows = Vec::new();
    for j in 0..g.x_cells() {
        for k in 0..lifted.inner {
            let (l, d) = (lifted.at(j, k), direct.at(j, k));
            let mut r = vec![j.to_string()];
            r.extend(g.x_point(j).iter().map(|x| fmt17(*x)));
            if lifted.inner > 1 {
                r.push(k.to_string());
            }
            if complex {
                r.push(format!("{}{:+}i", fmt17(l.re), fmt17(l.im)));
                r.push(format!("{}{:+}i", fmt17(d.re), fmt17(d.im)));
            } else {
                r.push(fmt17(l.re));
                r.push(fmt17(d.re));
            }
            r.push(fmt17((l - d).norm()));
            rows.push(r);
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(ctx.file("comparison.csv")?, &header, &rows)?;
    Ok(())
}

/// Readout quadratic forms at the configured targets, plus the normalisation
/// constants of the lifted initial state.
fn readouts<T: Scalar>(ctx: &Ctx, lifted: &LiftedField<T>, traj: &LiftedField<T>) -> Result<Value, Failure> {
    let g = &lifted.grid;
    let n_t = g.n_t;
    let last = traj.slice(n_t)?;
    let norm = normalization_constants(lifted.slice(0)?, g, ctx.cfg.targets.len().max(1) as f64)?;
    let mut rows = Vec::new();
    for &j in &ctx.cfg.targets {
        for &q in &ctx.cfg.observables {
            if q == Quantity::Variance {
                continue;
            }
            let r = build_readout(q, 1, j, g, 1)?;
            let e = expectation_quadratic(last, &r)?;
            rows.push(json!({
                "quantity": q,
                "time_index": n_t,
                "x_index": j,
                "expectation": e,
                "normalization_factor": r.normalization_factor,
                "recovered_abs": (e / r.normalization_factor).sqrt(),
            }));
        }
    }
    Ok(json!({ "normalization": norm, "readouts": rows }))
}

fn iteration(cfg: &ExperimentConfig) -> IterationOptions {
    cfg.spectra.iteration.unwrap_or_default()
}

fn report_for(cfg: &ExperimentConfig, g: &PhaseSpaceGrid, strict: bool) -> Result<SpectralReport, Failure> {
    let opts = assembly_options(g, strict, false)?;
    let it = iteration(cfg);
    Ok(match build_system(cfg, g, &opts)? {
        System::Real(s) => spectral_report(&s, &it)?,
        System::Complex(s) => spectral_report(&s, &it)?,
    })
}

fn cmd_spectra(ctx: Ctx) -> Result<(), Failure> {
    let g = ctx.grid()?;
    let strict = ctx.strict;
    let cfg = ctx.cfg.clone();
    let coarse = ctx.timed("spectra", || report_for(&cfg, &g, strict))?;
    let mut failed: Vec<String> = coarse.verdicts.iter().filter(|v| !v.pass).map(|v| v.claim.clone()).collect();
    let mut out = json!({ "report": coarse });
    if cfg.spectra.refine {
        let fine_grid = cfg.grid_for(2)?;
        let fine = ctx.timed("spectra_refined", || report_for(&cfg, &fine_grid, strict))?;
        let scaling = scaling_verdicts(&coarse, &fine)?;
        failed.extend(fine.verdicts.iter().chain(&scaling).filter(|v| !v.pass).map(|v| v.claim.clone()));
        out["refined"] = serde_json::to_value(&fine)?;
        out["scaling"] = serde_json::to_value(&scaling)?;
    }
    ctx.write_json("spectra.json", &out)?;
    ctx.write_manifest(Some(&g), &["spectra.json".into()])?;
    if strict && !failed.is_empty() {
        return Err(Failure::Verdict(failed.join("; ")));
    }
    Ok(())
}

fn cmd_cost(ctx: Ctx) -> Result<(), Failure> {
    let p = ctx.cfg.cost_params()?;
    let rep = ctx.timed("cost", || cost_report(&p))?;
    ctx.write_json("cost.json", &rep)?;
    ctx.write_manifest(None, &["cost.json".into()])
}

fn cmd_scan(ctx: Ctx) -> Result<(), Failure> {
    let p = ctx.cfg.cost_params()?;
    let ranges = ctx
        .cfg
        .scan
        .clone()
        .ok_or_else(|| ConfigError { pointer: "scan".into(), message: "scan ranges are required".into() })?;
    let rows = ctx.timed("scan", || regime_scan(&p, &ranges))?;
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.m.to_string(),
                r.l.to_string(),
                r.d.to_string(),
                fmt17(r.epsilon),
                fmt17(r.c_min),
                fmt17(r.q),
                fmt17(r.q_orig),
                r.winner.to_string(),
            ]
        })
        .collect();
    write_csv(ctx.file("scan.csv")?, &["m", "l", "d", "epsilon", "c_min", "q", "q_orig", "winner"], &body)?;
    ctx.write_manifest(None, &["scan.csv".into()])
}
