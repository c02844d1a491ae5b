//! Timing harness for the basis constructions and the octahedral `p` table.
//!
//! Cases run one after another. Each runs on a worker thread and is abandoned
//! once its time limit passes; memory limits are enforced up front from the
//! dense allocation sizes each method would need.

use std::path::Path;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::group_algebra::{
    cyclic_group, dihedral_group, octahedral_generators, symmetric_group, symmetric_group_transpositions,
    InvariantProblem, LabeledGenerators, OctahedralRep,
};
use crate::invariant_basis::{
    eig_normal, expand_basis, invariant_basis_with, select_unit_products, BasisConfig, FirstGenerator, EIG_TOL,
};
use crate::linalg::CMat;
use crate::reference_solvers::{
    averaging_basis, constraint_matrix_dense, iterative_nullspace, naive_nullspace, ConstraintOperator,
    IterativeConfig, NAIVE_TOL,
};

/// Largest residual an `ok` row may report.
pub const OK_RESIDUAL: f64 = 1e-5;
/// Group-order cap for the averaging oracle.
pub const AVERAGING_CAP: usize = 50_000;
/// Starting rank for the iterative baseline.
const ITERATIVE_RANK_GUESS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Cyclic,
    Dihedral,
    /// `S_n` generated by `g_c, g_s¹²`.
    Symmetric,
    /// `S_n` generated by all transpositions `g_s¹ʲ`.
    SymmetricBad,
    Octahedral(OctahedralRep),
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Cyclic => "C",
            Family::Dihedral => "D",
            Family::Symmetric => "S",
            Family::SymmetricBad => "S_bad",
            Family::Octahedral(rep) => rep.name(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "C" => Family::Cyclic,
            "D" => Family::Dihedral,
            "S" => Family::Symmetric,
            "S_bad" => Family::SymmetricBad,
            _ => Family::Octahedral(
                OctahedralRep::ALL
                    .into_iter()
                    .find(|r| r.name() == s)
                    .ok_or_else(|| Error::invalid(format!("unknown group family {s:?}")))?,
            ),
        })
    }

    /// Generators for size `n`; octahedral families ignore `n`.
    pub fn generators(self, n: usize) -> Result<LabeledGenerators> {
        match self {
            Family::Cyclic => cyclic_group(n),
            Family::Dihedral => dihedral_group(n),
            Family::Symmetric => symmetric_group(n),
            Family::SymmetricBad => symmetric_group_transpositions(n),
            Family::Octahedral(rep) => octahedral_generators(rep),
        }
    }

    pub fn dim(self, n: usize) -> usize {
        match self {
            Family::Octahedral(rep) => rep.dim(),
            _ => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Alg1,
    Naive,
    Iterative,
    Averaging,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Alg1, Method::Naive, Method::Iterative, Method::Averaging];

    pub fn name(self) -> &'static str {
        match self {
            Method::Alg1 => "alg1",
            Method::Naive => "naive",
            Method::Iterative => "iterative",
            Method::Averaging => "averaging",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub family: Family,
    pub n: usize,
    pub d: usize,
    pub method: Method,
    pub time_limit: Duration,
    pub memory_budget: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Timeout,
    Oom,
    Error,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Timeout => "timeout",
            Status::Oom => "oom",
            Status::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub case: BenchCase,
    pub first_generator: Option<String>,
    pub p: Option<usize>,
    pub r: Option<usize>,
    pub seconds: f64,
    pub status: Status,
    pub residual: Option<f64>,
    pub message: Option<String>,
}

/// Basis produced by one method.
#[derive(Debug, Clone)]
pub struct Solution {
    /// Index of the generator that was diagonalized.
    pub first_generator: Option<usize>,
    pub p: Option<usize>,
    /// Dense `N×r` orthonormal basis.
    pub basis: CMat,
}

/// Runs one method to completion with no time limit.
pub fn solve(problem: &InvariantProblem, method: Method, cfg: &BasisConfig, seed: u64) -> Result<Solution> {
    match method {
        Method::Alg1 => {
            let fb = invariant_basis_with(problem, FirstGenerator::Auto, cfg)?;
            Ok(Solution {
                first_generator: Some(fb.first_generator),
                p: Some(fb.p()),
                basis: expand_basis(&fb, cfg.budget_bytes)?,
            })
        }
        Method::Naive => {
            let c = constraint_matrix_dense(problem, cfg.budget_bytes)?;
            Ok(Solution { first_generator: None, p: None, basis: naive_nullspace(&c, NAIVE_TOL) })
        }
        Method::Iterative => {
            let op = ConstraintOperator::new(problem)?;
            let it = IterativeConfig { seed, ..IterativeConfig::default() };
            let res = iterative_nullspace(&op, ITERATIVE_RANK_GUESS, &it)?;
            Ok(Solution { first_generator: None, p: None, basis: res.basis })
        }
        Method::Averaging => Ok(Solution {
            first_generator: None,
            p: None,
            basis: averaging_basis(problem, AVERAGING_CAP, cfg.budget_bytes)?,
        }),
    }
}

/// Largest `‖C b‖₂` over the basis columns.
pub fn basis_residual(problem: &InvariantProblem, basis: &CMat) -> Result<f64> {
    let op = ConstraintOperator::new(problem)?;
    Ok((0..basis.ncols()).map(|j| op.residual(basis.column(j).as_slice())).fold(0.0, f64::max))
}

/// Runs one case under its time limit.
pub fn run_case(case: &BenchCase) -> BenchResult {
    let mut result = BenchResult {
        case: case.clone(),
        first_generator: None,
        p: None,
        r: None,
        seconds: 0.0,
        status: Status::Error,
        residual: None,
        message: None,
    };
    let setup = case
        .family
        .generators(case.n)
        .and_then(|gens| Ok((InvariantProblem::uniform(&gens, case.d, 0)?, gens)));
    let (problem, gens) = match setup {
        Ok(v) => v,
        Err(e) => {
            result.message = Some(e.to_string());
            return result;
        }
    };
    let labels: Vec<String> = gens.iter().map(|(l, _)| l.clone()).collect();
    let cfg = BasisConfig { tol_eig: EIG_TOL, budget_bytes: case.memory_budget };
    let (tx, rx) = mpsc::channel();
    let method = case.method;
    let worker_problem = problem.clone();
    let start = Instant::now();
    thread::spawn(move || {
        let out = solve(&worker_problem, method, &cfg, 0);
        let elapsed = start.elapsed().as_secs_f64();
        // The receiver is gone after a timeout; nothing to report then.
        let _ = tx.send((out, elapsed));
    });
    match rx.recv_timeout(case.time_limit) {
        Err(_) => {
            result.seconds = case.time_limit.as_secs_f64();
            result.status = Status::Timeout;
        }
        Ok((out, seconds)) => {
            result.seconds = seconds;
            match out {
                Ok(o) => {
                    result.first_generator = o.first_generator.map(|j| labels[j].clone());
                    result.p = o.p;
                    match basis_residual(&problem, &o.basis) {
                        Ok(res) => {
                            result.residual = Some(res);
                            result.r = Some(o.basis.ncols());
                            result.status = if res <= OK_RESIDUAL { Status::Ok } else { Status::Error };
                        }
                        Err(e) => result.message = Some(e.to_string()),
                    }
                }
                Err(e) => {
                    result.status = match e {
                        Error::BudgetExceeded { .. } | Error::CapExceeded { .. } => Status::Oom,
                        _ => Status::Error,
                    };
                    result.message = Some(e.to_string());
                }
            }
        }
    }
    result
}

/// Runs all cases sequentially.
pub fn run_benchmark(cases: &[BenchCase]) -> Vec<BenchResult> {
    cases.iter().map(run_case).collect()
}

/// Cases whose `ok` rows report different `r` across methods.
pub fn rank_disagreements(rows: &[BenchResult]) -> Vec<(Family, usize, usize)> {
    let mut out = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        let key = (a.case.family, a.case.n, a.case.d);
        if a.status != Status::Ok || out.contains(&key) {
            continue;
        }
        let clash = rows[i + 1..].iter().any(|b| {
            b.status == Status::Ok && (b.case.family, b.case.n, b.case.d) == key && b.r != a.r
        });
        if clash {
            out.push(key);
        }
    }
    out
}

/// Desk-scale sweep: every family and method over `n_list × d_list`.
pub fn sweep_cases(
    families: &[Family],
    n_list: &[usize],
    d_list: &[usize],
    methods: &[Method],
    time_limit: Duration,
    memory_budget: u64,
) -> Vec<BenchCase> {
    let mut cases = Vec::new();
    for &family in families {
        let ns: Vec<usize> = match family {
            Family::Octahedral(rep) => vec![rep.dim()],
            _ => n_list.to_vec(),
        };
        for &n in &ns {
            for &d in d_list {
                for &method in methods {
                    cases.push(BenchCase { family, n, d, method, time_limit, memory_budget });
                }
            }
        }
    }
    cases
}

pub const CSV_HEADER: [&str; 10] = ["method", "group", "n", "d", "first_generator", "p", "r", "seconds", "status", "residual"];

fn csv_record(row: &BenchResult) -> [String; 10] {
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    [
        row.case.method.name().to_string(),
        row.case.family.name().to_string(),
        row.case.family.dim(row.case.n).to_string(),
        row.case.d.to_string(),
        row.first_generator.clone().unwrap_or_default(),
        opt(row.p),
        opt(row.r),
        format!("{:.6}", row.seconds),
        row.status.name().to_string(),
        row.residual.map(|r| format!("{r:.3e}")).unwrap_or_default(),
    ]
}

pub fn write_csv(path: &Path, rows: &[BenchResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(csv_record(row))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Number of unit eigenvalue products `p` of `U^{⊗d}` for the nine octahedral
/// generator matrices (`ρ`, `ρ_⊕`, `ρ_⊗` of `a, b, c`), rows `d = 2, 3, 4`.
pub fn reproduce_table_ps() -> Result<[[usize; 9]; 3]> {
    let mut table = [[0; 9]; 3];
    let mut col = 0;
    for rep in OctahedralRep::ALL {
        for (_, m) in octahedral_generators(rep)? {
            let e = eig_normal(&m)?;
            for (row, d) in [2usize, 3, 4].into_iter().enumerate() {
                table[row][col] = select_unit_products(&vec![e.clone(); d], EIG_TOL).p();
            }
            col += 1;
        }
    }
    Ok(table)
}
