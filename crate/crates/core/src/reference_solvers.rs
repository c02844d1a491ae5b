//! Reference solvers used to cross-check the invariant basis.
//!
//! * naive: SVD nullspace of the dense stacked constraint matrix
//!   `C = [U¹ⱼ⊗…⊗Uᵈⱼ − I]ⱼ`;
//! * averaging: range of the group-averaging projector over an enumerated group;
//! * iterative: gradient descent on `‖CX‖²_F` with rank doubling, using only
//!   mode-wise products.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::group_algebra::{enumerate_group, InvariantProblem};
use crate::linalg::{frobenius, identity, kron_all, mode_multiply, orthonormal_range, orthonormalize, spectral_norm, CMat, C64, ZERO};
use crate::rng::stream;

/// Default relative singular-value cutoff for the naive method.
pub const NAIVE_TOL: f64 = 1e-8;
/// Problems up to this size get an exact `‖P² − P‖` check.
const EXACT_IDEMPOTENCE_MAX_N: usize = 2048;

fn check_budget(elements: u128, budget_bytes: u64) -> Result<()> {
    let needed = elements * 16;
    if needed > u128::from(budget_bytes) {
        return Err(Error::BudgetExceeded { needed, budget: budget_bytes });
    }
    Ok(())
}

/// Matrix-free `C` acting on length-`N` vectors.
#[derive(Debug, Clone)]
pub struct ConstraintOperator {
    dims: Vec<usize>,
    gens: Vec<Vec<CMat>>,
    gens_adj: Vec<Vec<CMat>>,
}

impl ConstraintOperator {
    pub fn new(problem: &InvariantProblem) -> Result<Self> {
        problem.total_dim_usize()?;
        let gens: Vec<Vec<CMat>> = problem
            .generators()
            .iter()
            .map(|g| g.per_mode.iter().map(|m| m.matrix().clone()).collect())
            .collect();
        let gens_adj = gens.iter().map(|g| g.iter().map(|m| m.adjoint()).collect()).collect();
        Ok(Self { dims: problem.mode_dims(), gens, gens_adj })
    }

    pub fn n(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn s(&self) -> usize {
        self.gens.len()
    }

    fn apply_kron(&self, mats: &[CMat], x: &[C64]) -> Vec<C64> {
        let mut cur = x.to_vec();
        for (mode, m) in mats.iter().enumerate() {
            cur = mode_multiply(&cur, &self.dims, mode, m);
        }
        cur
    }

    /// `Cx`: the stacked blocks `(U¹ⱼ⊗…⊗Uᵈⱼ)x − x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.s() * x.len());
        for g in &self.gens {
            let y = self.apply_kron(g, x);
            out.extend(y.iter().zip(x).map(|(a, b)| a - b));
        }
        out
    }

    /// `Cᴴy` for a stacked `y`.
    pub fn apply_adjoint(&self, y: &[C64]) -> Vec<C64> {
        let n = self.n();
        let mut out = vec![ZERO; n];
        for (j, g) in self.gens_adj.iter().enumerate() {
            let block = &y[j * n..(j + 1) * n];
            let z = self.apply_kron(g, block);
            for ((o, a), b) in out.iter_mut().zip(&z).zip(block) {
                *o += a - b;
            }
        }
        out
    }

    /// `CᴴC x`.
    pub fn normal_apply(&self, x: &[C64]) -> Vec<C64> {
        self.apply_adjoint(&self.apply(x))
    }

    /// `‖Cx‖₂`.
    pub fn residual(&self, x: &[C64]) -> f64 {
        self.apply(x).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Upper bound on `maxⱼ ‖Bⱼ − I‖₂` from `Πᵢ ‖Uⁱⱼ‖₂ + 1`.
    fn block_norm_bound(&self) -> f64 {
        self.gens
            .iter()
            .map(|g| g.iter().map(spectral_norm).product::<f64>() + 1.0)
            .fold(0.0, f64::max)
    }
}

/// Dense `sN×N` stack of `U¹ⱼ⊗…⊗Uᵈⱼ − I`.
pub fn constraint_matrix_dense(problem: &InvariantProblem, budget_bytes: u64) -> Result<CMat> {
    let n = problem.total_dim();
    let s = problem.num_generators() as u128;
    check_budget(s * n * n, budget_bytes)?;
    let n = n as usize;
    let mut c = CMat::zeros(problem.num_generators() * n, n);
    for (j, g) in problem.generators().iter().enumerate() {
        let b = kron_all(g.per_mode.iter().map(|m| m.matrix())) - identity(n);
        c.view_mut((j * n, 0), (n, n)).copy_from(&b);
    }
    Ok(c)
}

/// Right singular vectors of `c` with `σ ≤ tol·σ_max`.
pub fn naive_nullspace(c: &CMat, tol: f64) -> CMat {
    let (rows, cols) = c.shape();
    if cols == 0 {
        return CMat::zeros(0, 0);
    }
    // The thin SVD only has all right singular vectors when rows >= cols.
    let padded;
    let c = if rows < cols {
        let mut p = CMat::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(c);
        padded = p;
        &padded
    } else {
        c
    };
    let svd = c.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..cols).filter(|&k| svd.singular_values[k] <= tol * smax).collect();
    CMat::from_fn(cols, keep.len(), |i, j| v_t[(keep[j], i)].conj())
}

/// Accumulates `w · (⊗ᵢ Mᵢ)` into `p`, visiting only nonzero entries.
fn add_kron_sparse(p: &mut CMat, mats: &[CMat], w: f64) {
    let nz: Vec<Vec<(usize, usize, C64)>> = mats
        .iter()
        .map(|m| {
            let mut v = Vec::new();
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    if m[(i, j)] != ZERO {
                        v.push((i, j, m[(i, j)]));
                    }
                }
            }
            v
        })
        .collect();
    fn rec(p: &mut CMat, nz: &[Vec<(usize, usize, C64)>], dims: &[usize], k: usize, row: usize, col: usize, val: C64) {
        if k == nz.len() {
            p[(row, col)] += val;
            return;
        }
        for &(i, j, x) in &nz[k] {
            rec(p, nz, dims, k + 1, row * dims[k] + i, col * dims[k] + j, val * x);
        }
    }
    let dims: Vec<usize> = mats.iter().map(|m| m.nrows()).collect();
    rec(p, &nz, &dims, 0, 0, 0, C64::new(w, 0.0));
}

/// Orthonormal range of the group-averaging projector `P = (1/|G|) Σ_g ⊗ᵢ ρᵢ(g)`.
///
/// `P` is an orthogonal projector, so its rank is `trace(P)` and its range is
/// the range of `PΩ` for a Gaussian `Ω` with a few extra columns.
pub fn averaging_basis(problem: &InvariantProblem, cap: usize, budget_bytes: u64) -> Result<CMat> {
    let n = problem.total_dim();
    check_budget(n * n, budget_bytes)?;
    let group = enumerate_group(problem, cap)?;
    let n = n as usize;
    let mut p = CMat::zeros(n, n);
    let w = 1.0 / group.order() as f64;
    for g in &group.elements {
        add_kron_sparse(&mut p, g, w);
    }
    let r = p.trace().re.round().max(0.0) as usize;
    let mut rng = stream(0, "averaging-sketch");
    let omega = CMat::from_fn(n, (r + 8).min(n), |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let sketch = &p * &omega;
    let idem = if n <= EXACT_IDEMPOTENCE_MAX_N {
        frobenius(&(&p * &p - &p))
    } else {
        frobenius(&(&p * &sketch - &sketch)) / frobenius(&omega).max(1.0)
    };
    if idem > 1e-8 {
        return Err(Error::invalid(format!("averaging operator is not idempotent (residual {idem:.3e})")));
    }
    let basis = orthonormal_range(&sketch, 1e-8, 0.0);
    let basis = if basis.ncols() > r { basis.columns(0, r).into_owned() } else { basis };
    // One projection pass removes the sketch's round-off from outside range(P).
    Ok(orthonormalize(&(&p * basis)))
}

#[derive(Debug, Clone, Copy)]
pub struct IterativeConfig {
    /// Kernel-membership threshold on `‖Cx‖`; defaults to `1e-5·√s`.
    pub tol: Option<f64>,
    /// Tighter residual that accepted columns are driven to before returning.
    pub polish_tol: Option<f64>,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        Self { tol: None, polish_tol: None, max_iters: 200_000, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct IterativeResult {
    pub basis: CMat,
    /// Largest `‖Cx‖` over the returned columns.
    pub residual: f64,
    pub iterations: usize,
    /// Rank of the last round.
    pub final_rank: usize,
}

const CHECK_EVERY: usize = 10;
const STAGNATION: f64 = 1e-10;

struct Runner<'a> {
    op: &'a ConstraintOperator,
    eta: f64,
    tol: f64,
    polish: f64,
    iterations: usize,
    max_iters: usize,
    best: f64,
}

/// Outcome of iterating one block.
struct BlockState {
    x: CMat,
    /// `‖Cx‖` per column, increasing.
    residuals: Vec<f64>,
}

impl Runner<'_> {
    fn step(&self, x: &mut CMat, deflate: Option<&CMat>) {
        for c in 0..x.ncols() {
            let col: Vec<C64> = x.column(c).iter().cloned().collect();
            let g = self.op.normal_apply(&col);
            let scale = C64::new(2.0 * self.eta, 0.0);
            for (xi, gi) in x.column_mut(c).iter_mut().zip(&g) {
                *xi -= scale * gi;
            }
        }
        if let Some(basis) = deflate {
            let proj = basis * (basis.adjoint() * &*x);
            *x -= proj;
        }
    }

    /// QR plus Rayleigh–Ritz: columns become Ritz vectors of `CᴴC` sorted by
    /// increasing Ritz value. Residuals are measured as norms of `C·x` directly,
    /// since the Ritz values bottom out near machine precision.
    fn rayleigh_ritz(&self, x: &CMat) -> BlockState {
        let q = orthonormalize(x);
        let r = q.ncols();
        let mut cq = CMat::zeros(self.op.s() * self.op.n(), r);
        for c in 0..r {
            let col: Vec<C64> = q.column(c).iter().cloned().collect();
            cq.set_column(c, &nalgebra::DVector::from_vec(self.op.apply(&col)));
        }
        let gram = cq.adjoint() * &cq;
        let gram = (&gram + gram.adjoint()) * C64::new(0.5, 0.0);
        let eig = nalgebra::SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let rot = CMat::from_fn(r, r, |i, j| eig.eigenvectors[(i, order[j])]);
        let c_rot = cq * &rot;
        let residuals = (0..r).map(|k| c_rot.column(k).norm()).collect();
        BlockState { x: q * rot, residuals }
    }

    /// Iterates until every column is in the kernel (and polished), or the
    /// columns outside the kernel stagnate.
    fn run_block(&mut self, mut x: CMat) -> Result<BlockState> {
        let mut prev: Option<Vec<f64>> = None;
        loop {
            for _ in 0..CHECK_EVERY {
                self.step(&mut x, None);
            }
            self.iterations += CHECK_EVERY;
            let state = self.rayleigh_ritz(&x);
            let accepted = state.residuals.iter().take_while(|&&t| t <= self.tol).count();
            let polished = state.residuals[..accepted].iter().all(|&t| t <= self.polish);
            self.best = self.best.min(state.residuals.first().copied().unwrap_or(0.0));
            let stagnant = accepted == state.residuals.len()
                || prev.as_ref().is_some_and(|p| {
                    state.residuals[accepted..]
                        .iter()
                        .zip(&p[accepted..])
                        .all(|(a, b)| (a - b).abs() <= STAGNATION * a.abs().max(f64::MIN_POSITIVE))
                });
            if polished && stagnant {
                return Ok(state);
            }
            if self.iterations >= self.max_iters {
                return Err(Error::MaxIterations { best_residual: self.best });
            }
            prev = Some(state.residuals.clone());
            x = state.x;
        }
    }

    /// Whether a vector orthogonal to `basis` also descends into the kernel.
    fn probe(&mut self, basis: &CMat, mut v: CMat) -> Result<bool> {
        let proj = basis * (basis.adjoint() * &v);
        v -= proj;
        let mut prev = f64::INFINITY;
        loop {
            for _ in 0..CHECK_EVERY {
                self.step(&mut v, Some(basis));
            }
            self.iterations += CHECK_EVERY;
            let norm = v.norm();
            if norm == 0.0 {
                return Ok(false);
            }
            v /= C64::new(norm, 0.0);
            let col: Vec<C64> = v.column(0).iter().cloned().collect();
            let res = self.op.residual(&col);
            if res <= self.tol {
                return Ok(true);
            }
            if (res - prev).abs() <= STAGNATION * res {
                return Ok(false);
            }
            if self.iterations >= self.max_iters {
                return Err(Error::MaxIterations { best_residual: self.best });
            }
            prev = res;
        }
    }
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Kernel of `C` by projected gradient descent with rank doubling.
pub fn iterative_nullspace(op: &ConstraintOperator, rank_guess: usize, cfg: &IterativeConfig) -> Result<IterativeResult> {
    if rank_guess == 0 {
        return Err(Error::invalid("rank_guess must be at least 1"));
    }
    let n = op.n();
    let s = op.s() as f64;
    let tol = cfg.tol.unwrap_or(1e-5 * s.sqrt());
    let polish = cfg.polish_tol.unwrap_or(1e-10 * s.sqrt()).min(tol);
    let bound = op.block_norm_bound();
    let eta = 1.0 / (2.0 * s * bound * bound);
    let mut runner = Runner { op, eta, tol, polish, iterations: 0, max_iters: cfg.max_iters, best: f64::INFINITY };
    let mut rng = stream(cfg.seed, "iterative-nullspace");

    let mut r = rank_guess.min(n);
    let mut kept = CMat::zeros(n, 0);
    loop {
        let fresh = gaussian(&mut rng, n, r - kept.ncols());
        let mut x = CMat::zeros(n, r);
        x.columns_mut(0, kept.ncols()).copy_from(&kept);
        x.columns_mut(kept.ncols(), r - kept.ncols()).copy_from(&fresh);
        let state = runner.run_block(orthonormalize(&x))?;
        let accepted = state.residuals.iter().take_while(|&&t| t <= tol).count();
        let basis = state.x.columns(0, accepted).into_owned();
        let residual = state.residuals[..accepted].iter().fold(0.0f64, |m, &t| m.max(t));
        let done = |basis: CMat, runner: &Runner| IterativeResult {
            basis,
            residual,
            iterations: runner.iterations,
            final_rank: r,
        };
        if accepted < r || r == n {
            return Ok(done(basis, &runner));
        }
        let probe = gaussian(&mut rng, n, 1);
        if !runner.probe(&basis, probe)? {
            return Ok(done(basis, &runner));
        }
        kept = basis;
        r = (2 * r).min(n);
    }
}

/// Sine of the largest principal angle between two column spans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceDistance {
    pub distance: f64,
    /// Column counts differ; `distance` is then the sentinel 1.
    pub mismatch: bool,
}

pub fn subspace_distance(b1: &CMat, b2: &CMat) -> Result<SubspaceDistance> {
    if b1.nrows() != b2.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "bases have {} and {} rows",
            b1.nrows(),
            b2.nrows()
        )));
    }
    if b1.ncols() != b2.ncols() {
        return Ok(SubspaceDistance { distance: 1.0, mismatch: true });
    }
    if b1.ncols() == 0 {
        return Ok(SubspaceDistance { distance: 0.0, mismatch: false });
    }
    let outside = b2 - b1 * (b1.adjoint() * b2);
    Ok(SubspaceDistance { distance: spectral_norm(&outside).min(1.0), mismatch: false })
}
