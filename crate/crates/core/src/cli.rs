//! Command-line front end for the `invtt` binary.
//!
//! Every random choice derives from the global `--seed` through named streams,
//! so repeated invocations write identical artifacts. Bench and verify reports
//! carry wall-clock seconds, which naturally vary between runs.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::{rank_disagreements, run_benchmark, solve, sweep_cases, write_csv, Family, Method};
use crate::error::{Error, Result};
use crate::group_algebra::GroupSpec;
use crate::invariant_basis::{
    invariant_basis_with, reduced_residual, BasisConfig, FirstGenerator, DEFAULT_BUDGET_BYTES, EIG_TOL,
};
use crate::learning::{run_parity, write_metrics_csv, Optimizer, ParityMode, ParitySetup, TrainConfig};
use crate::linalg::CMat;
use crate::reference_solvers::subspace_distance;
use crate::tensor_train::{build_rc_ttn, Checkpoint, Pairing, TtnModel};

#[derive(Debug, Parser)]
#[command(name = "invtt", version, about = "Group-invariant tensor bases and tensor-train classifiers")]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance for eigenvalues equal to one.
    #[arg(long, global = true, default_value_t = EIG_TOL)]
    pub tol_eig: f64,
    /// Dense allocation budget in bytes.
    #[arg(long, global = true, default_value_t = DEFAULT_BUDGET_BYTES)]
    pub budget_mem: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Plain,
    Invariant,
    Augmented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Nesterov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairingArg {
    WatsonCrick,
    Swapped,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the invariant basis of a group spec and write it as JSON.
    Basis {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Generator to diagonalize; chosen automatically when omitted.
        #[arg(long)]
        first: Option<usize>,
    },
    /// Run every method on a group spec and compare the bases.
    Verify {
        #[arg(long)]
        spec: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "alg1,naive,iterative,averaging")]
        methods: Vec<String>,
    },
    /// Time the methods over group families and sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "C,D,S")]
        families: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "4,5,6")]
        n_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        d_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "alg1,naive,iterative,averaging")]
        methods: Vec<String>,
        /// Per-case limit in seconds.
        #[arg(long, default_value_t = 60.0)]
        time_limit: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train parity classifiers and write per-epoch metrics.
    TrainParity {
        #[arg(long)]
        length: usize,
        #[arg(long)]
        bond: usize,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, value_enum, default_value = "adam")]
        optimizer: OptimizerArg,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        /// Fraction of all strings used for training.
        #[arg(long, default_value_t = 0.05)]
        fraction: f64,
        #[arg(long, default_value_t = 0.0)]
        l2: f64,
        /// Number of runs; run `i` uses seed `seed + i`.
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint directory; defaults to the metrics file's directory.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
    },
    /// Check reverse-complement invariance of a freshly built model.
    RcCheck {
        #[arg(long)]
        length: usize,
        #[arg(long)]
        bond: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, value_enum, default_value = "watson-crick")]
        pairing: PairingArg,
    },
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.category() {
        "input" => 3,
        "schema" => 4,
        "io" => 5,
        "resource" => 6,
        _ => 7,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if !(cli.tol_eig > 0.0 && cli.tol_eig < 1.0) {
        return Err(Error::invalid(format!("--tol-eig must lie in (0, 1), got {}", cli.tol_eig)));
    }
    let cfg = BasisConfig { tol_eig: cli.tol_eig, budget_bytes: cli.budget_mem };
    match &cli.command {
        Command::Basis { spec, out, first } => cmd_basis(spec, out, *first, &cfg),
        Command::Verify { spec, out, methods } => cmd_verify(spec, out.as_deref(), methods, &cfg, cli.seed),
        Command::Bench { families, n_list, d_list, methods, time_limit, out } => {
            cmd_bench(families, n_list, d_list, methods, *time_limit, out, cli.budget_mem)
        }
        Command::TrainParity {
            length,
            bond,
            mode,
            epochs,
            lr,
            optimizer,
            batch_size,
            fraction,
            l2,
            runs,
            out,
            checkpoint_dir,
        } => {
            let config = TrainConfig {
                epochs: *epochs,
                batch_size: *batch_size,
                learning_rate: *lr,
                optimizer: match optimizer {
                    OptimizerArg::Adam => Optimizer::adam(),
                    OptimizerArg::Nesterov => Optimizer::nesterov(),
                },
                l2_coeff: *l2,
                seed: cli.seed,
                ..TrainConfig::default()
            };
            let mode = match mode {
                ModeArg::Plain => ParityMode::Plain,
                ModeArg::Invariant => ParityMode::Invariant,
                ModeArg::Augmented => ParityMode::Augmented,
            };
            let setup = ParitySetup { length: *length, bond: *bond, fraction: *fraction, mode, config };
            cmd_train_parity(setup, *runs, out, checkpoint_dir.as_deref())
        }
        Command::RcCheck { length, bond, trials, pairing } => {
            let pairing = match pairing {
                PairingArg::WatsonCrick => Pairing::WatsonCrick,
                PairingArg::Swapped => Pairing::Swapped,
            };
            let model = build_rc_ttn(*length, *bond, pairing, cli.seed)?;
            let deviation = model.rc_deviation(*trials, cli.seed)?;
            println!(
                "length={length} bond={bond} trials={trials} params={} max_deviation={deviation:.3e}",
                model.num_params()
            );
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ComplexMatrix {
    rows: usize,
    cols: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl From<&CMat> for ComplexMatrix {
    fn from(m: &CMat) -> Self {
        let part = |f: fn(&crate::linalg::C64) -> f64| {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        ComplexMatrix { rows: m.nrows(), cols: m.ncols(), re: part(|z| z.re), im: part(|z| z.im) }
    }
}

#[derive(Serialize)]
struct BasisArtifact {
    p: usize,
    r: usize,
    mode_dims: Vec<usize>,
    first_generator: String,
    v_star: Vec<ComplexMatrix>,
    #[serde(rename = "Q")]
    q: ComplexMatrix,
    residual: f64,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|source| Error::Json { path: path.display().to_string(), source })?;
    std::fs::write(path, text + "\n").map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn cmd_basis(spec: &Path, out: &Path, first: Option<usize>, cfg: &BasisConfig) -> Result<()> {
    let gs = GroupSpec::load(spec)?;
    let problem = gs.to_problem()?;
    let first = first.map_or(FirstGenerator::Auto, FirstGenerator::Index);
    let fb = invariant_basis_with(&problem, first, cfg)?;
    let artifact = BasisArtifact {
        p: fb.p(),
        r: fb.r(),
        mode_dims: fb.mode_dims.clone(),
        first_generator: gs.generators[fb.first_generator].label.clone(),
        v_star: fb.v_star.iter().map(ComplexMatrix::from).collect(),
        q: ComplexMatrix::from(&fb.q),
        residual: reduced_residual(&problem, &fb)?,
    };
    write_json(out, &artifact)?;
    println!("p={} r={} first_generator={}", artifact.p, artifact.r, artifact.first_generator);
    Ok(())
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    names.iter().map(|s| Method::parse(s.trim())).collect()
}

fn cmd_verify(spec: &Path, out: Option<&Path>, methods: &[String], cfg: &BasisConfig, seed: u64) -> Result<()> {
    let problem = GroupSpec::load(spec)?.to_problem()?;
    let methods = parse_methods(methods)?;
    let mut bases: Vec<(Method, CMat)> = Vec::new();
    let mut report: BTreeMap<String, Value> = BTreeMap::new();
    for &method in &methods {
        let start = Instant::now();
        match solve(&problem, method, cfg, seed) {
            Ok(sol) => {
                let seconds = start.elapsed().as_secs_f64();
                let residual = crate::bench::basis_residual(&problem, &sol.basis)?;
                report.insert(
                    method.name().into(),
                    json!({"r": sol.basis.ncols(), "residual": residual, "seconds": seconds}),
                );
                bases.push((method, sol.basis));
            }
            Err(e) => {
                report.insert(method.name().into(), json!({"error": e.category(), "message": e.to_string()}));
            }
        }
    }
    // Reference: the averaging oracle when it ran, else the first method that did.
    let reference = bases.iter().find(|(m, _)| *m == Method::Averaging).or_else(|| bases.first());
    if let Some((ref_method, ref_basis)) = reference {
        for (method, basis) in &bases {
            let d = subspace_distance(basis, ref_basis)?;
            if let Some(Value::Object(entry)) = report.get_mut(method.name()) {
                entry.insert("distance_to_reference".into(), json!(d.distance));
                entry.insert("rank_mismatch".into(), json!(d.mismatch));
            }
        }
        report.insert("reference".into(), json!(ref_method.name()));
    }
    let text = serde_json::to_string_pretty(&report).map_err(|source| Error::Json { path: "<report>".into(), source })?;
    println!("{text}");
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(())
}

fn cmd_bench(
    families: &[String],
    n_list: &[usize],
    d_list: &[usize],
    methods: &[String],
    time_limit: f64,
    out: &Path,
    budget: u64,
) -> Result<()> {
    if !(time_limit > 0.0 && time_limit.is_finite()) {
        return Err(Error::invalid(format!("--time-limit must be positive, got {time_limit}")));
    }
    let families = families.iter().map(|s| Family::parse(s.trim())).collect::<Result<Vec<_>>>()?;
    let methods = parse_methods(methods)?;
    let cases = sweep_cases(&families, n_list, d_list, &methods, Duration::from_secs_f64(time_limit), budget);
    let rows = run_benchmark(&cases);
    write_csv(out, &rows)?;
    let ok = rows.iter().filter(|r| r.status == crate::bench::Status::Ok).count();
    println!("cases={} ok={ok}", rows.len());
    for (family, n, d) in rank_disagreements(&rows) {
        eprintln!("warning: methods disagree on r for {} n={} d={d}", family.name(), family.dim(n));
    }
    Ok(())
}

fn cmd_train_parity(setup: ParitySetup, runs: usize, out: &Path, checkpoint_dir: Option<&Path>) -> Result<()> {
    if runs == 0 {
        return Err(Error::invalid("--runs must be at least 1"));
    }
    let dir = checkpoint_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.parent().map(Path::to_path_buf).unwrap_or_default());
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics").to_string();
    let base_seed = setup.config.seed;
    let mut records = Vec::with_capacity(runs);
    for run in 0..runs {
        let seed = base_seed.wrapping_add(run as u64);
        let mut s = setup.clone();
        s.config.seed = seed;
        let (model, tr) = run_parity(&s)?;
        let m = tr.final_metrics();
        println!(
            "run={run} seed={seed} mode={} test_acc={:.4} train_loss={:.6}{}",
            setup.mode.name(),
            m.test_acc,
            m.train_loss,
            if tr.failed { " failed" } else { "" }
        );
        let group = (setup.mode == ParityMode::Invariant).then(|| "z2-flip".to_string());
        let ckpt = Checkpoint::from_model(model.as_model(), group);
        ckpt.save(&dir.join(format!("{stem}.run{run}.ckpt.json")))?;
        records.push((run, seed, tr));
    }
    write_metrics_csv(out, &records)
}
