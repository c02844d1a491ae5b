//! Orthonormal bases of group-invariant tensors.
//!
//! The first generator is diagonalized mode by mode, `U¹ᵢ = Vⁱ Λⁱ (Vⁱ)ᴴ`. Its
//! fixed tensors are spanned by the Kronecker products of eigenvectors whose
//! eigenvalue product is one; those `p` index tuples give the columns of
//! `V*¹ ⊙ … ⊙ V*ᵈ`. The remaining constraints are restricted to that span through
//! the identity `(A⊙B)ᴴ(C⊙D) = (AᴴC)⊛(BᴴD)`, which yields the `p×p` operator
//! `A = (1/s) Σⱼ ⊛ᵢ (V*ⁱ)ᴴ Uⁱⱼ V*ⁱ`. Its eigenvalue-one invariant subspace, read off
//! a reordered Schur form, gives the coefficients `Q` of the invariant basis
//! `(V*¹ ⊙ … ⊙ V*ᵈ) Q`.

use std::f64::consts::TAU;

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::group_algebra::{InvariantProblem, RepMatrix};
use crate::linalg::{
    frobenius, is_hermitian, orthonormal_range_real, reorder_schur, schur, spectral_norm, CMat, RMat, C64, ONE,
    ZERO,
};

/// Default tolerance for treating an eigenvalue (or eigenvalue product) as one.
pub const EIG_TOL: f64 = 1e-6;
/// Default dense-allocation budget (2 GiB).
pub const DEFAULT_BUDGET_BYTES: u64 = 2 << 30;

const EIG_RESIDUAL_TOL: f64 = 1e-8;
const PHASE_MERGE_TOL: f64 = 1e-9;
const SUFFIX_SET_CAP: usize = 1 << 16;

#[derive(Debug, Clone, Copy)]
pub struct BasisConfig {
    pub tol_eig: f64,
    pub budget_bytes: u64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { tol_eig: EIG_TOL, budget_bytes: DEFAULT_BUDGET_BYTES }
    }
}

/// Unitary eigendecomposition `U = V diag(λ) Vᴴ` of a normal matrix.
#[derive(Debug, Clone)]
pub struct ModeEigen {
    pub v: CMat,
    pub lambda: Vec<C64>,
}

pub fn eig_normal(m: &RepMatrix) -> Result<ModeEigen> {
    let u = m.matrix();
    let scale = frobenius(u).max(f64::MIN_POSITIVE);
    let (v, lambda) = if is_hermitian(u, 1e-14) {
        let h = (u + u.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        let lambda = eig.eigenvalues.iter().map(|&x| C64::new(x, 0.0)).collect();
        (eig.eigenvectors, lambda)
    } else {
        let s = schur(u)?;
        let n = u.nrows();
        let mut off = 0.0;
        for j in 0..n {
            for i in 0..j {
                off += s.t[(i, j)].norm_sqr();
            }
        }
        let off = off.sqrt();
        if off > EIG_RESIDUAL_TOL * scale {
            return Err(Error::NotNormal { residual: off / scale });
        }
        let lambda = s.eigenvalues();
        (s.z, lambda)
    };
    let residual = frobenius(&(u * &v - &v * CMat::from_diagonal(&lambda.clone().into())));
    if residual > EIG_RESIDUAL_TOL * scale {
        return Err(Error::NotNormal { residual: residual / scale });
    }
    Ok(ModeEigen { v, lambda })
}

/// Index tuples `(j¹, …, jᵈ)` whose eigenvalue product is one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitProductSelection {
    pub index_tuples: Vec<Vec<usize>>,
}

impl UnitProductSelection {
    pub fn p(&self) -> usize {
        self.index_tuples.len()
    }
}

fn on_unit_circle(eigs: &[ModeEigen]) -> bool {
    eigs.iter().all(|e| e.lambda.iter().all(|l| (l.norm() - 1.0).abs() <= EIG_RESIDUAL_TOL))
}

/// Phase in turns, in `[0, 1)`.
fn turns(z: C64) -> f64 {
    let t = z.arg() / TAU;
    let t = if t < 0.0 { t + 1.0 } else { t };
    if t >= 1.0 {
        0.0
    } else {
        t
    }
}

/// Circular distance between phases in turns.
fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Sorted phase multiset with merged near-duplicates: `(phase, multiplicity)`.
fn phase_multiset(lambda: &[C64]) -> Vec<(f64, u128)> {
    merge_phases(lambda.iter().map(|&l| (turns(l), 1u128)).collect())
}

fn merge_phases(mut items: Vec<(f64, u128)>) -> Vec<(f64, u128)> {
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, u128)> = Vec::with_capacity(items.len());
    for (t, c) in items {
        match out.last_mut() {
            Some(last) if t - last.0 <= PHASE_MERGE_TOL => last.1 += c,
            _ => out.push((t, c)),
        }
    }
    // Wrap-around merge of phases near 1 into phases near 0.
    if out.len() > 1 {
        let last = out[out.len() - 1];
        if 1.0 - last.0 + out[0].0 <= PHASE_MERGE_TOL {
            out[0].1 += last.1;
            out.pop();
        }
    }
    out
}

fn convolve(a: &[(f64, u128)], b: &[(f64, u128)]) -> Vec<(f64, u128)> {
    let mut items = Vec::with_capacity(a.len() * b.len());
    for &(ta, ca) in a {
        for &(tb, cb) in b {
            items.push(((ta + tb).rem_euclid(1.0), ca * cb));
        }
    }
    merge_phases(items)
}

/// Phase window matching `|Πλ − 1| < tol` for unit-modulus products.
fn phase_window(tol: f64) -> f64 {
    (tol.min(2.0) / 2.0).asin() / std::f64::consts::PI + PHASE_MERGE_TOL
}

/// Indices `j` of `sorted` (by phase) with phase within `window` of `target`.
fn phase_hits(sorted: &[(f64, usize)], target: f64, window: f64, out: &mut Vec<usize>) {
    out.clear();
    let mut scan = |lo: f64, hi: f64| {
        let start = sorted.partition_point(|&(t, _)| t < lo);
        for &(t, j) in &sorted[start..] {
            if t > hi {
                break;
            }
            out.push(j);
        }
    };
    let (lo, hi) = (target - window, target + window);
    scan(lo.max(0.0), hi.min(1.0));
    if lo < 0.0 {
        scan(lo + 1.0, 1.0);
    }
    if hi > 1.0 {
        scan(0.0, hi - 1.0);
    }
    out.sort_unstable();
    out.dedup();
}

fn set_contains(set: &[(f64, u128)], target: f64, window: f64) -> bool {
    let t = target.rem_euclid(1.0);
    let i = set.partition_point(|&(p, _)| p < t);
    let near = |k: usize| circ_dist(set[k % set.len()].0, t) <= window;
    !set.is_empty() && (near(i) || near(i + set.len() - 1) || near(0) || near(set.len() - 1))
}

pub fn select_unit_products(eigs: &[ModeEigen], tol: f64) -> UnitProductSelection {
    let d = eigs.len();
    let mut tuples = Vec::new();
    if d == 0 {
        return UnitProductSelection { index_tuples: tuples };
    }
    if !on_unit_circle(eigs) {
        enumerate_all(eigs, tol, &mut tuples);
        return UnitProductSelection { index_tuples: tuples };
    }
    let window = phase_window(tol);
    // suffix[k]: reachable phase sums of modes k..d, or None when too large to keep.
    let mut suffix: Vec<Option<Vec<(f64, u128)>>> = vec![None; d + 1];
    suffix[d] = Some(vec![(0.0, 1)]);
    for k in (1..d).rev() {
        suffix[k] = suffix[k + 1].as_ref().and_then(|s| {
            let c = convolve(&phase_multiset(&eigs[k].lambda), s);
            (c.len() <= SUFFIX_SET_CAP).then_some(c)
        });
    }
    let last = &eigs[d - 1];
    let mut last_sorted: Vec<(f64, usize)> = last.lambda.iter().enumerate().map(|(j, &l)| (turns(l), j)).collect();
    last_sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut idx = vec![0usize; d];
    let mut hits = Vec::new();
    dfs(eigs, &suffix, &last_sorted, tol, window, 0, ONE, 0.0, &mut idx, &mut hits, &mut tuples);
    UnitProductSelection { index_tuples: tuples }
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    eigs: &[ModeEigen],
    suffix: &[Option<Vec<(f64, u128)>>],
    last_sorted: &[(f64, usize)],
    tol: f64,
    window: f64,
    k: usize,
    prod: C64,
    phase: f64,
    idx: &mut Vec<usize>,
    hits: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    let d = eigs.len();
    if let Some(set) = &suffix[k] {
        // Phase error accumulates over the modes already fixed.
        if !set_contains(set, -phase, window + k as f64 * PHASE_MERGE_TOL) {
            return;
        }
    }
    if k == d - 1 {
        phase_hits(last_sorted, (-phase).rem_euclid(1.0), window + d as f64 * PHASE_MERGE_TOL, hits);
        for &j in hits.iter() {
            if (prod * eigs[k].lambda[j] - ONE).norm() < tol {
                idx[k] = j;
                out.push(idx.clone());
            }
        }
        return;
    }
    for (j, &l) in eigs[k].lambda.iter().enumerate() {
        idx[k] = j;
        dfs(eigs, suffix, last_sorted, tol, window, k + 1, prod * l, phase + turns(l), idx, hits, out);
    }
}

fn enumerate_all(eigs: &[ModeEigen], tol: f64, out: &mut Vec<Vec<usize>>) {
    let d = eigs.len();
    let mut idx = vec![0usize; d];
    loop {
        let prod = idx.iter().zip(eigs).fold(ONE, |acc, (&j, e)| acc * e.lambda[j]);
        if (prod - ONE).norm() < tol {
            out.push(idx.clone());
        }
        let mut k = d;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < eigs[k].lambda.len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Exact `p` for one set of mode eigenvalues, by phase-multiset convolution
/// (falls back to enumeration off the unit circle).
pub fn count_unit_products(eigs: &[ModeEigen], tol: f64) -> u128 {
    if !on_unit_circle(eigs) {
        return select_unit_products(eigs, tol).p() as u128;
    }
    let window = phase_window(tol) + eigs.len() as f64 * PHASE_MERGE_TOL;
    let mut acc = vec![(0.0, 1u128)];
    for e in eigs {
        acc = convolve(&acc, &phase_multiset(&e.lambda));
    }
    acc.iter().filter(|&&(t, _)| circ_dist(t, 0.0) <= window).map(|&(_, c)| c).sum()
}

/// Per-mode eigendecompositions of generator `j`, sharing work across equal matrices.
fn generator_eigs(problem: &InvariantProblem, j: usize, cache: &mut Vec<(CMat, ModeEigen)>) -> Result<Vec<ModeEigen>> {
    problem.generators()[j]
        .per_mode
        .iter()
        .map(|m| {
            if let Some((_, e)) = cache.iter().find(|(k, _)| k == m.matrix()) {
                return Ok(e.clone());
            }
            let e = eig_normal(m)?;
            cache.push((m.matrix().clone(), e.clone()));
            Ok(e)
        })
        .collect()
}

/// Generator index with the smallest `p`; ties go to the lowest index.
pub fn choose_first_generator(problem: &InvariantProblem) -> Result<usize> {
    choose_first_generator_with(problem, EIG_TOL)
}

pub fn choose_first_generator_with(problem: &InvariantProblem, tol: f64) -> Result<usize> {
    let mut cache = Vec::new();
    let mut best = (0usize, u128::MAX);
    for j in 0..problem.num_generators() {
        let eigs = generator_eigs(problem, j, &mut cache)?;
        let p = count_unit_products(&eigs, tol);
        if p < best.1 {
            best = (j, p);
        }
    }
    Ok(best.0)
}

/// `(V*ⁱ)ᴴ Uⁱⱼ V*ⁱ` restricted to the selected index tuples of each mode, as
/// the `n_i×n_i` matrices `(Vⁱ)ᴴ Uⁱⱼ Vⁱ` to be gathered.
fn projected_mode_matrices(problem: &InvariantProblem, eigs: &[ModeEigen], j: usize) -> Vec<CMat> {
    problem.generators()[j]
        .per_mode
        .iter()
        .zip(eigs)
        .map(|(u, e)| e.v.adjoint() * u.matrix() * &e.v)
        .collect()
}

/// The reduced matrix `⊛ᵢ (V*ⁱ)ᴴ Uⁱⱼ V*ⁱ` of one generator, added into `acc` with weight `w`.
fn accumulate_reduced(w_modes: &[CMat], sel: &UnitProductSelection, weight: f64, acc: &mut CMat) {
    let p = sel.p();
    let tuples = &sel.index_tuples;
    for c in 0..p {
        let tc = &tuples[c];
        for r in 0..p {
            let tr = &tuples[r];
            let mut prod = C64::new(weight, 0.0);
            for (i, w) in w_modes.iter().enumerate() {
                prod *= w[(tr[i], tc[i])];
                if prod == ZERO {
                    break;
                }
            }
            acc[(r, c)] += prod;
        }
    }
}

/// Reduced matrix of generator `j` alone.
pub fn reduced_generator_matrix(
    problem: &InvariantProblem,
    sel: &UnitProductSelection,
    eigs: &[ModeEigen],
    j: usize,
) -> CMat {
    let mut a = CMat::zeros(sel.p(), sel.p());
    accumulate_reduced(&projected_mode_matrices(problem, eigs, j), sel, 1.0, &mut a);
    a
}

/// `A = (1/s) Σⱼ ⊛ᵢ (V*ⁱ)ᴴ Uⁱⱼ V*ⁱ`, accumulated generator by generator.
pub fn build_reduced_operator(problem: &InvariantProblem, sel: &UnitProductSelection, eigs: &[ModeEigen]) -> CMat {
    let s = problem.num_generators();
    let mut a = CMat::zeros(sel.p(), sel.p());
    for j in 0..s {
        accumulate_reduced(&projected_mode_matrices(problem, eigs, j), sel, 1.0 / s as f64, &mut a);
    }
    a
}

/// Orthonormal basis of the invariant subspace of `a` for eigenvalues within `tol` of one.
pub fn solve_eigenspace_one(a: &CMat, tol: f64) -> Result<CMat> {
    let p = a.nrows();
    if p == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let mut s = schur(a)?;
    let select: Vec<bool> = s.eigenvalues().iter().map(|l| (l - ONE).norm() < tol).collect();
    let r = reorder_schur(&mut s, &select);
    let q = s.z.columns(0, r).into_owned();
    let residual = if r == 0 { 0.0 } else { spectral_norm(&(a * &q - &q)) };
    if residual > EIG_TOL.max(tol) {
        return Err(Error::DefectiveCluster { residual });
    }
    Ok(q)
}

/// Implicit orthonormal basis `(V*¹ ⊙ … ⊙ V*ᵈ) Q`.
#[derive(Debug, Clone)]
pub struct FactoredBasis {
    pub mode_dims: Vec<usize>,
    /// Mode `i`: the `n_i×p` selected eigenvector columns.
    pub v_star: Vec<CMat>,
    /// `p×r` coefficients with orthonormal columns.
    pub q: CMat,
    pub selection: UnitProductSelection,
    /// Generator used for the eigendecomposition, as an index into the problem.
    pub first_generator: usize,
}

impl FactoredBasis {
    pub fn p(&self) -> usize {
        self.q.nrows()
    }

    pub fn r(&self) -> usize {
        self.q.ncols()
    }

    /// Column `t` of the Khatri–Rao product, i.e. `⊗ᵢ V*ⁱ[:, t]`.
    fn kr_column(&self, t: usize, out: &mut Vec<C64>) {
        out.clear();
        out.push(ONE);
        for v in &self.v_star {
            let n = v.nrows();
            let prev = std::mem::take(out);
            out.reserve(prev.len() * n);
            for a in &prev {
                for k in 0..n {
                    out.push(a * v[(k, t)]);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstGenerator {
    Auto,
    Index(usize),
}

pub fn invariant_basis(problem: &InvariantProblem, first: FirstGenerator) -> Result<FactoredBasis> {
    invariant_basis_with(problem, first, &BasisConfig::default())
}

pub fn invariant_basis_with(problem: &InvariantProblem, first: FirstGenerator, cfg: &BasisConfig) -> Result<FactoredBasis> {
    let first = match first {
        FirstGenerator::Auto => choose_first_generator_with(problem, cfg.tol_eig)?,
        FirstGenerator::Index(j) if j < problem.num_generators() => j,
        FirstGenerator::Index(j) => return Err(Error::invalid(format!("generator index {j} out of range"))),
    };
    let mut cache = Vec::new();
    let eigs = generator_eigs(problem, first, &mut cache)?;
    let sel = select_unit_products(&eigs, cfg.tol_eig);
    let p = sel.p();
    let needed = (p as u128).pow(2) * 16;
    if needed > u128::from(cfg.budget_bytes) {
        return Err(Error::BudgetExceeded { needed, budget: cfg.budget_bytes });
    }
    let a = build_reduced_operator(problem, &sel, &eigs);
    let q = solve_eigenspace_one(&a, cfg.tol_eig)?;
    let v_star = eigs
        .iter()
        .enumerate()
        .map(|(i, e)| CMat::from_fn(e.v.nrows(), p, |row, t| e.v[(row, sel.index_tuples[t][i])]))
        .collect();
    Ok(FactoredBasis { mode_dims: problem.mode_dims(), v_star, q, selection: sel, first_generator: first })
}

/// Largest `‖Aⱼ Q − Q‖` over the generators' individual reduced matrices.
pub fn reduced_residual(problem: &InvariantProblem, fb: &FactoredBasis) -> Result<f64> {
    let mut cache = Vec::new();
    let eigs = generator_eigs(problem, fb.first_generator, &mut cache)?;
    let mut worst: f64 = 0.0;
    for j in 0..problem.num_generators() {
        let aj = reduced_generator_matrix(problem, &fb.selection, &eigs, j);
        worst = worst.max(spectral_norm(&(&aj * &fb.q - &fb.q)));
    }
    Ok(worst)
}

/// Dense `N×r` basis. Refuses when the allocation exceeds `budget_bytes`.
pub fn expand_basis(fb: &FactoredBasis, budget_bytes: u64) -> Result<CMat> {
    let n: u128 = fb.mode_dims.iter().map(|&x| x as u128).product();
    let r = fb.r();
    let needed = n * (r as u128 + 1) * 16;
    if needed > u128::from(budget_bytes) {
        return Err(Error::BudgetExceeded { needed, budget: budget_bytes });
    }
    let n = n as usize;
    let mut out = CMat::zeros(n, r);
    let mut col = Vec::with_capacity(n);
    for t in 0..fb.p() {
        fb.kr_column(t, &mut col);
        for q in 0..r {
            let w = fb.q[(t, q)];
            if w == ZERO {
                continue;
            }
            let mut dst = out.column_mut(q);
            for (d, x) in dst.iter_mut().zip(&col) {
                *d += w * x;
            }
        }
    }
    Ok(out)
}

/// Real orthonormal basis of a conjugation-closed complex column span.
pub fn realify_basis(b: &CMat) -> Result<RMat> {
    let (n, r) = b.shape();
    if r == 0 {
        return Ok(RMat::zeros(n, 0));
    }
    let conj = b.map(|z| z.conj());
    let outside = &conj - b * (b.adjoint() * &conj);
    let residual = spectral_norm(&outside);
    if residual > EIG_TOL {
        return Err(Error::NotConjugationClosed { residual });
    }
    let mut stacked = RMat::zeros(n, 2 * r);
    for j in 0..r {
        for i in 0..n {
            stacked[(i, j)] = b[(i, j)].re;
            stacked[(i, r + j)] = b[(i, j)].im;
        }
    }
    let real = orthonormal_range_real(&stacked, 0.0, 1e-8);
    if real.ncols() != r {
        return Err(Error::NotConjugationClosed { residual: residual.max(f64::EPSILON) });
    }
    Ok(real)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_algebra::{
        cyclic_group, dihedral_group, octahedral_generators, standard_representation, symmetric_group,
        symmetric_group_transpositions, GeneratorRep, LabeledGenerators, Mode, OctahedralRep, StandardKind,
    };
    use crate::linalg::{identity, multilinear_apply, orthonormal_range};
    use proptest::prelude::*;

    fn uniform(gens: &LabeledGenerators, d: usize, k: usize) -> InvariantProblem {
        InvariantProblem::uniform(gens, d, k).unwrap()
    }

    fn eig_of(kind: StandardKind, n: usize) -> ModeEigen {
        eig_normal(&standard_representation(kind, n).unwrap()).unwrap()
    }

    /// Rank of the averaging projector over an explicitly enumerated group.
    fn averaging_rank(problem: &InvariantProblem) -> usize {
        let g = crate::group_algebra::enumerate_group(problem, 100_000).unwrap();
        let mut p = CMat::zeros(problem.total_dim() as usize, problem.total_dim() as usize);
        for e in &g.elements {
            p += crate::linalg::kron_all(e.iter());
        }
        p /= C64::new(g.order() as f64, 0.0);
        orthonormal_range(&p, 0.0, 1e-8).ncols()
    }

    fn max_generator_residual(problem: &InvariantProblem, x: &CMat) -> f64 {
        let dims = problem.mode_dims();
        let mut worst: f64 = 0.0;
        for g in problem.generators() {
            let mats: Vec<&CMat> = g.per_mode.iter().map(|m| m.matrix()).collect();
            for c in 0..x.ncols() {
                let col: Vec<C64> = x.column(c).iter().cloned().collect();
                let y = multilinear_apply(&col, &dims, &mats);
                let diff: f64 = y.iter().zip(&col).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                worst = worst.max(diff);
            }
        }
        worst
    }

    #[test]
    fn eig_cyclic_shift_roots_of_unity() {
        for n in [2, 3, 5, 8, 12] {
            let e = eig_of(StandardKind::CyclicShift, n);
            let mut got: Vec<f64> = e.lambda.iter().map(|&l| turns(l)).collect();
            got.sort_by(f64::total_cmp);
            let mut want: Vec<f64> = (1..=n).map(|j| turns(C64::from_polar(1.0, -TAU * j as f64 / n as f64))).collect();
            want.sort_by(f64::total_cmp);
            for (a, b) in got.iter().zip(&want) {
                assert!(circ_dist(*a, *b) < 1e-10);
            }
            assert!(frobenius(&(e.v.adjoint() * &e.v - identity(n))) < 1e-8);
        }
    }

    #[test]
    fn eig_identity_and_reverser() {
        let e = eig_normal(&RepMatrix::identity(3)).unwrap();
        assert!(e.lambda.iter().all(|l| (l - ONE).norm() < 1e-12));
        let r = eig_of(StandardKind::Reverser, 4);
        let mut re: Vec<f64> = r.lambda.iter().map(|l| l.re).collect();
        re.sort_by(f64::total_cmp);
        assert!(re.iter().zip([-1.0, -1.0, 1.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn select_examples() {
        let triv = vec![eig_normal(&RepMatrix::identity(2)).unwrap(), eig_normal(&RepMatrix::identity(3)).unwrap()];
        assert_eq!(select_unit_products(&triv, EIG_TOL).p(), 6);
        let c10 = vec![eig_of(StandardKind::CyclicShift, 10); 3];
        assert_eq!(select_unit_products(&c10, EIG_TOL).p(), 100);
        let b = eig_normal(&octahedral_generators(OctahedralRep::Natural).unwrap()[1].1).unwrap();
        assert_eq!(select_unit_products(&vec![b; 3], EIG_TOL).p(), 9);
    }

    #[test]
    fn select_matches_enumeration_off_circle() {
        let m = RepMatrix::new(CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(2.0, 0.0),
            C64::new(0.5, 0.0),
            ONE,
        ])))
        .unwrap();
        let e = eig_normal(&m).unwrap();
        let sel = select_unit_products(&[e.clone(), e.clone()], EIG_TOL);
        assert_eq!(sel.p(), 3);
        assert_eq!(count_unit_products(&[e.clone(), e], EIG_TOL), 3);
    }

    #[test]
    fn octahedral_table() {
        // Brute-force counts. The d=2 cell for the direct-sum `b` is 11: its spectrum is
        // {1, 1, 1, ω, ω²}, giving 3² + 2·1·1 pairs.
        let table: [[u128; 9]; 3] = [
            [9, 3, 5, 17, 11, 17, 40, 24, 32],
            [0, 9, 13, 76, 47, 76, 288, 176, 256],
            [81, 27, 41, 353, 219, 353, 2176, 1376, 2048],
        ];
        for (row, d) in [2usize, 3, 4].iter().enumerate() {
            let mut col = 0;
            for rep in OctahedralRep::ALL {
                for (_, m) in octahedral_generators(rep).unwrap() {
                    let e = eig_normal(&m).unwrap();
                    let eigs = vec![e; *d];
                    assert_eq!(count_unit_products(&eigs, EIG_TOL), table[row][col], "d={d} col={col}");
                    assert_eq!(select_unit_products(&eigs, EIG_TOL).p() as u128, table[row][col]);
                    col += 1;
                }
            }
        }
    }

    #[test]
    fn choose_first_examples() {
        let s10 = uniform(&symmetric_group(10).unwrap(), 3, 0);
        assert_eq!(choose_first_generator(&s10).unwrap(), 0);
        let mut cache = Vec::new();
        let swap_eigs = generator_eigs(&s10, 1, &mut cache).unwrap();
        // Eigenvalues 1 (x9) and -1 (x1): tuples with an even number of -1 factors.
        assert_eq!(count_unit_products(&swap_eigs, EIG_TOL), 9 * 9 * 9 + 3 * 9);
        let d4 = uniform(&dihedral_group(4).unwrap(), 3, 0);
        assert_eq!(choose_first_generator(&d4).unwrap(), 0);
        let r_eigs = generator_eigs(&d4, 1, &mut cache).unwrap();
        assert_eq!(count_unit_products(&r_eigs, EIG_TOL), 32);
        let c_eigs = generator_eigs(&d4, 0, &mut cache).unwrap();
        assert_eq!(count_unit_products(&c_eigs, EIG_TOL), 16);
        let single = uniform(&cyclic_group(5).unwrap(), 2, 0);
        assert_eq!(choose_first_generator(&single).unwrap(), 0);
        let reversed: LabeledGenerators = dihedral_group(6).unwrap().into_iter().rev().collect();
        assert_eq!(choose_first_generator(&uniform(&reversed, 3, 1)).unwrap(), 1);
    }

    #[test]
    fn reduced_operator_examples() {
        let c5 = uniform(&cyclic_group(5).unwrap(), 3, 0);
        let mut cache = Vec::new();
        let eigs = generator_eigs(&c5, 0, &mut cache).unwrap();
        let sel = select_unit_products(&eigs, EIG_TOL);
        let a = build_reduced_operator(&c5, &sel, &eigs);
        assert!(frobenius(&(a - identity(sel.p()))) < 1e-8);

        let parity = uniform(&vec![("flip".into(), standard_representation(StandardKind::Reverser, 2).unwrap())], 2, 0);
        let eigs = generator_eigs(&parity, 0, &mut cache).unwrap();
        let sel = select_unit_products(&eigs, EIG_TOL);
        assert_eq!(sel.p(), 2);
        assert!(frobenius(&(build_reduced_operator(&parity, &sel, &eigs) - identity(2))) < 1e-8);
    }

    #[test]
    fn reduced_operator_matches_dense_projection() {
        let d4 = uniform(&dihedral_group(4).unwrap(), 2, 0);
        let mut cache = Vec::new();
        let eigs = generator_eigs(&d4, 0, &mut cache).unwrap();
        let sel = select_unit_products(&eigs, EIG_TOL);
        assert_eq!(sel.p(), 4);
        let a = build_reduced_operator(&d4, &sel, &eigs);
        let kr = CMat::from_fn(16, 4, |row, t| {
            let (i, j) = (row / 4, row % 4);
            eigs[0].v[(i, sel.index_tuples[t][0])] * eigs[1].v[(j, sel.index_tuples[t][1])]
        });
        let ur = d4.generators()[1].per_mode[0].matrix();
        let uc = d4.generators()[0].per_mode[0].matrix();
        let dense = (kr.adjoint() * crate::linalg::kron(uc, uc) * &kr + kr.adjoint() * crate::linalg::kron(ur, ur) * &kr) * C64::new(0.5, 0.0);
        assert!(frobenius(&(&a - &dense)) < 1e-10);
        for r in 0..4 {
            let s1: C64 = a.row(r).iter().sum();
            let s2: C64 = dense.row(r).iter().sum();
            assert!((s1 - s2).norm() < 1e-10);
        }
    }

    #[test]
    fn eigenspace_one_examples() {
        assert_eq!(solve_eigenspace_one(&identity(4), EIG_TOL).unwrap().ncols(), 4);
        let mut d = CMat::zeros(2, 2);
        d[(0, 0)] = ONE;
        d[(1, 1)] = -ONE;
        let q = solve_eigenspace_one(&d, EIG_TOL).unwrap();
        assert_eq!(q.ncols(), 1);
        assert!((q[(0, 0)].norm() - 1.0).abs() < 1e-12);
        let mut jordan = identity(2);
        jordan[(0, 1)] = C64::new(1e-3, 0.0);
        assert!(matches!(solve_eigenspace_one(&jordan, EIG_TOL), Err(Error::DefectiveCluster { .. })));
    }

    #[test]
    fn s3_natural_pairs() {
        let s3 = uniform(&symmetric_group(3).unwrap(), 2, 0);
        let fb = invariant_basis(&s3, FirstGenerator::Index(0)).unwrap();
        assert_eq!(fb.r(), 2);
        assert_eq!(averaging_rank(&s3), 2);
    }

    #[test]
    fn invariant_basis_examples() {
        let flip = vec![("flip".to_string(), standard_representation(StandardKind::Reverser, 2).unwrap())];
        let parity = uniform(&flip, 3, 0);
        let fb = invariant_basis(&parity, FirstGenerator::Auto).unwrap();
        assert_eq!(fb.r(), 4);
        let c4 = uniform(&cyclic_group(4).unwrap(), 2, 0);
        let fb = invariant_basis(&c4, FirstGenerator::Auto).unwrap();
        assert_eq!((fb.p(), fb.r()), (4, 4));
        let triv = InvariantProblem::new(
            vec![Mode { dim: 2, dual: false }; 2],
            vec![GeneratorRep::uniform("e", &RepMatrix::identity(2), 2)],
        )
        .unwrap();
        assert_eq!(invariant_basis(&triv, FirstGenerator::Auto).unwrap().r(), 4);
        assert!(invariant_basis(&triv, FirstGenerator::Index(3)).is_err());
    }

    #[test]
    fn expand_examples() {
        let flip = vec![("flip".to_string(), standard_representation(StandardKind::Reverser, 2).unwrap())];
        let parity = uniform(&flip, 2, 0);
        let b = expand_basis(&invariant_basis(&parity, FirstGenerator::Auto).unwrap(), DEFAULT_BUDGET_BYTES).unwrap();
        assert_eq!(b.shape(), (4, 2));
        let expected = CMat::from_fn(4, 2, |i, j| {
            let v = if j == 0 { [1.0, 0.0, 0.0, 1.0] } else { [0.0, 1.0, 1.0, 0.0] };
            C64::new(v[i] / 2f64.sqrt(), 0.0)
        });
        let proj_diff = &b * b.adjoint() - &expected * expected.adjoint();
        assert!(frobenius(&proj_diff) < 1e-10);

        let c2 = uniform(&cyclic_group(2).unwrap(), 1, 0);
        let b = expand_basis(&invariant_basis(&c2, FirstGenerator::Auto).unwrap(), DEFAULT_BUDGET_BYTES).unwrap();
        assert_eq!(b.ncols(), 1);
        assert!((b[(0, 0)] - b[(1, 0)]).norm() < 1e-12 && (b[(0, 0)].norm() - 0.5f64.sqrt()).abs() < 1e-12);

        let fb = invariant_basis(&parity, FirstGenerator::Auto).unwrap();
        let empty = FactoredBasis { q: CMat::zeros(fb.p(), 0), ..fb.clone() };
        assert_eq!(expand_basis(&empty, DEFAULT_BUDGET_BYTES).unwrap().shape(), (4, 0));
        assert!(matches!(expand_basis(&fb, 10), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn realify_examples() {
        let c4 = uniform(&cyclic_group(4).unwrap(), 2, 0);
        let b = expand_basis(&invariant_basis(&c4, FirstGenerator::Auto).unwrap(), DEFAULT_BUDGET_BYTES).unwrap();
        let real = realify_basis(&b).unwrap();
        assert_eq!(real.ncols(), 4);
        let rc = crate::linalg::real_to_complex(&real);
        assert!(spectral_norm(&(&rc - &b * (b.adjoint() * &rc))) < 1e-6);

        let v = CMat::from_fn(3, 1, |i, _| C64::new(1.0, i as f64) / 6f64.sqrt());
        let pair = CMat::from_fn(3, 2, |i, j| if j == 0 { v[(i, 0)] } else { v[(i, 0)].conj() });
        let pair = crate::linalg::orthonormalize(&pair);
        assert_eq!(realify_basis(&pair).unwrap().ncols(), 2);
        assert!(matches!(realify_basis(&v), Err(Error::NotConjugationClosed { .. })));
    }

    #[test]
    fn families_have_p_n_pow_d_minus_one() {
        for n in 2..=12usize {
            for d in 1..=4u32 {
                if n.pow(d) > 30_000 {
                    continue;
                }
                for gens in [cyclic_group(n).unwrap(), dihedral_group(n).unwrap(), symmetric_group(n).unwrap()] {
                    let problem = uniform(&gens, d as usize, 0);
                    let mut cache = Vec::new();
                    let eigs = generator_eigs(&problem, 0, &mut cache).unwrap();
                    assert_eq!(select_unit_products(&eigs, EIG_TOL).p(), n.pow(d - 1), "n={n} d={d}");
                }
            }
        }
    }

    #[test]
    fn rank_matches_averaging_and_satisfies_generators() {
        let cases: Vec<(LabeledGenerators, usize, usize)> = vec![
            (dihedral_group(4).unwrap(), 3, 1),
            (dihedral_group(5).unwrap(), 3, 0),
            (symmetric_group(4).unwrap(), 3, 2),
            (symmetric_group_transpositions(4).unwrap(), 3, 0),
            (octahedral_generators(OctahedralRep::Natural).unwrap(), 4, 2),
            (octahedral_generators(OctahedralRep::DirectSum).unwrap(), 3, 1),
        ];
        for (gens, d, k) in cases {
            let problem = uniform(&gens, d, k);
            let fb = invariant_basis(&problem, FirstGenerator::Auto).unwrap();
            assert_eq!(fb.r(), averaging_rank(&problem), "{:?}", gens.iter().map(|g| &g.0).collect::<Vec<_>>());
            let b = expand_basis(&fb, DEFAULT_BUDGET_BYTES).unwrap();
            assert!(frobenius(&(b.adjoint() * &b - identity(fb.r()))) < 1e-8);
            assert!(max_generator_residual(&problem, &b) < 1e-6);
            assert!(reduced_residual(&problem, &fb).unwrap() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn first_generator_choice_does_not_change_span(n in 3usize..6, d in 2usize..4, k in 0usize..3, family in 0usize..3) {
            let gens = match family {
                0 => dihedral_group(n).unwrap(),
                1 => symmetric_group(n).unwrap(),
                _ => symmetric_group_transpositions(n).unwrap(),
            };
            let problem = uniform(&gens, d, k.min(d));
            let b0 = expand_basis(&invariant_basis(&problem, FirstGenerator::Index(0)).unwrap(), DEFAULT_BUDGET_BYTES).unwrap();
            let b1 = expand_basis(&invariant_basis(&problem, FirstGenerator::Index(1)).unwrap(), DEFAULT_BUDGET_BYTES).unwrap();
            prop_assert_eq!(b0.ncols(), b1.ncols());
            prop_assert!(frobenius(&(&b0 * b0.adjoint() - &b1 * b1.adjoint())) < 1e-6);
            prop_assert!(max_generator_residual(&problem, &b0) < 1e-6);
        }

        #[test]
        fn count_agrees_with_selection(n in 2usize..9, d in 1usize..4, kind in 0usize..3, i in 1usize..8) {
            let kind = match kind {
                0 => StandardKind::CyclicShift,
                1 => StandardKind::Reverser,
                _ => StandardKind::Swap(1, (i % n).max(1) + 1),
            };
            let e = eig_of(kind, n);
            let eigs = vec![e; d];
            let sel = select_unit_products(&eigs, EIG_TOL);
            prop_assert_eq!(count_unit_products(&eigs, EIG_TOL), sel.p() as u128);
            let mut brute = Vec::new();
            enumerate_all(&eigs, EIG_TOL, &mut brute);
            prop_assert_eq!(brute, sel.index_tuples);
        }
    }
}
