//! Matrix representations of finite groups and multi-mode invariance problems.
//!
//! A representation is given by one normal, invertible matrix per generator and
//! tensor mode. Modes flagged as dual store `ρ(g)^{-T}` so that every solver sees
//! the same constraint `(U¹ⱼ ⊗ … ⊗ Uᵈⱼ) x = x` for all generators `j`.

mod families;
mod spec;

pub use families::{
    cyclic_group, dihedral_group, octahedral_generators, product_generators, symmetric_group,
    symmetric_group_transpositions, LabeledGenerators, OctahedralRep,
};
pub use spec::{GeneratorSpec, GroupSpec, MatrixSpec, ModeSpec};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, identity, kron, normality_residual, singular_values, CMat, RMat, C64, ZERO};

/// Relative tolerance on `‖AᴴA − AAᴴ‖_F / ‖A‖_F²`.
pub const NORMALITY_TOL: f64 = 1e-10;
/// Smallest singular value accepted for a representation matrix.
pub const SINGULAR_TOL: f64 = 1e-10;
/// Relative Frobenius tolerance for matching group elements.
pub const MATCH_TOL: f64 = 1e-8;

/// A validated square matrix that is normal and invertible.
#[derive(Debug, Clone, PartialEq)]
pub struct RepMatrix {
    m: CMat,
}

impl RepMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "representation matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::invalid("representation matrix must be non-empty"));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("representation matrix has non-finite entries"));
        }
        let residual = normality_residual(&m);
        if residual > NORMALITY_TOL {
            return Err(Error::NotNormal { residual });
        }
        let sigma_min = singular_values(&m).into_iter().fold(f64::INFINITY, f64::min);
        if sigma_min <= SINGULAR_TOL {
            return Err(Error::Singular { sigma_min });
        }
        Ok(Self { m })
    }

    pub fn from_real(m: &RMat) -> Result<Self> {
        Self::new(crate::linalg::real_to_complex(m))
    }

    pub fn identity(n: usize) -> Self {
        Self { m: identity(n) }
    }

    /// Permutation matrix sending `e_j` to `e_{perm[j]}`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        let mut m = CMat::zeros(n, n);
        for (j, &i) in perm.iter().enumerate() {
            if i >= n || seen[i] {
                return Err(Error::invalid("not a permutation"));
            }
            seen[i] = true;
            m[(i, j)] = C64::new(1.0, 0.0);
        }
        Self::new(m)
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        frobenius(&(&self.m - identity(self.dim()))) <= tol
    }
}

/// Built-in representation matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StandardKind {
    /// Upward circular shift `U_c`: `(U_c x)_i = x_{i+1}`.
    CyclicShift,
    /// Reversal `U_r`: `(U_r x)_i = x_{n+1-i}`.
    Reverser,
    /// Transposition of positions `i < j` (1-based).
    Swap(usize, usize),
    /// Signed reverser `X` with `X² = U_c^{n/2}` and `U_c X = X U_c^{-1}`.
    DicyclicPartner,
}

pub fn standard_representation(kind: StandardKind, n: usize) -> Result<RepMatrix> {
    if n < 2 {
        return Err(Error::invalid(format!("representation dimension must be at least 2, got {n}")));
    }
    match kind {
        StandardKind::CyclicShift => RepMatrix::permutation(&shift_perm(n)),
        StandardKind::Reverser => RepMatrix::permutation(&(0..n).rev().collect::<Vec<_>>()),
        StandardKind::Swap(i, j) => {
            if !(1 <= i && i < j && j <= n) {
                return Err(Error::invalid(format!("swap needs 1 <= i < j <= n, got i={i}, j={j}, n={n}")));
            }
            let mut perm: Vec<usize> = (0..n).collect();
            perm.swap(i - 1, j - 1);
            RepMatrix::permutation(&perm)
        }
        StandardKind::DicyclicPartner => dicyclic_partner(n),
    }
}

/// Column map of `U_c`: `e_j -> e_{j-1}` cyclically.
fn shift_perm(n: usize) -> Vec<usize> {
    (0..n).map(|j| (j + n - 1) % n).collect()
}

/// Signed permutation `e_j -> sign[j] * e_{perm[j]}`.
#[derive(Clone, PartialEq)]
struct SignedPerm {
    perm: Vec<usize>,
    sign: Vec<i8>,
}

impl SignedPerm {
    fn compose(&self, rhs: &SignedPerm) -> SignedPerm {
        // (self * rhs) e_j = self(sign_r[j] e_{perm_r[j]})
        let n = self.perm.len();
        let mut perm = vec![0; n];
        let mut sign = vec![0; n];
        for j in 0..n {
            let k = rhs.perm[j];
            perm[j] = self.perm[k];
            sign[j] = self.sign[k] * rhs.sign[j];
        }
        SignedPerm { perm, sign }
    }

    fn to_matrix(&self) -> CMat {
        let n = self.perm.len();
        let mut m = CMat::zeros(n, n);
        for j in 0..n {
            m[(self.perm[j], j)] = C64::new(f64::from(self.sign[j]), 0.0);
        }
        m
    }
}

const DICYCLIC_SEARCH_MAX_N: usize = 20;

fn dicyclic_partner(n: usize) -> Result<RepMatrix> {
    if !n.is_multiple_of(4) {
        return Err(Error::invalid(format!("dicyclic partner needs 4 | n, got n={n}")));
    }
    if n > DICYCLIC_SEARCH_MAX_N {
        return Err(Error::invalid(format!(
            "dicyclic partner search is limited to n <= {DICYCLIC_SEARCH_MAX_N}"
        )));
    }
    let ones = vec![1i8; n];
    let uc = SignedPerm { perm: shift_perm(n), sign: ones.clone() };
    let mut uc_inv_perm = vec![0; n];
    for (j, &i) in uc.perm.iter().enumerate() {
        uc_inv_perm[i] = j;
    }
    let uc_inv = SignedPerm { perm: uc_inv_perm, sign: ones.clone() };
    let mut half = SignedPerm { perm: (0..n).collect(), sign: ones };
    for _ in 0..n / 2 {
        half = uc.compose(&half);
    }
    let reverse: Vec<usize> = (0..n).rev().collect();
    for mask in 0u32..(1u32 << n) {
        let sign = (0..n).map(|b| if mask >> b & 1 == 1 { -1 } else { 1 }).collect();
        let x = SignedPerm { perm: reverse.clone(), sign };
        if x.compose(&x) == half && uc.compose(&x) == x.compose(&uc_inv) {
            return RepMatrix::new(x.to_matrix());
        }
    }
    Err(Error::DicyclicRelation { n })
}

/// Inverse transpose `m^{-T}`.
pub fn dualize(m: &RepMatrix) -> Result<RepMatrix> {
    let inv = m
        .matrix()
        .clone()
        .try_inverse()
        .ok_or(Error::Singular { sigma_min: 0.0 })?;
    RepMatrix::new(inv.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineMode {
    DirectSum,
    TensorProduct,
}

pub fn combine(a: &RepMatrix, b: &RepMatrix, mode: CombineMode) -> Result<RepMatrix> {
    let m = match mode {
        CombineMode::DirectSum => direct_sum(a.matrix(), b.matrix()),
        CombineMode::TensorProduct => kron(a.matrix(), b.matrix()),
    };
    RepMatrix::new(m)
}

fn direct_sum(a: &CMat, b: &CMat) -> CMat {
    let (na, nb) = (a.nrows(), b.nrows());
    let mut m = CMat::zeros(na + nb, na + nb);
    m.view_mut((0, 0), (na, na)).copy_from(a);
    m.view_mut((na, na), (nb, nb)).copy_from(b);
    m
}

/// One group generator, represented on every mode.
#[derive(Debug, Clone)]
pub struct GeneratorRep {
    pub label: String,
    pub per_mode: Vec<RepMatrix>,
}

impl GeneratorRep {
    pub fn new(label: impl Into<String>, per_mode: Vec<RepMatrix>) -> Self {
        Self { label: label.into(), per_mode }
    }

    /// The same matrix on `d` modes.
    pub fn uniform(label: impl Into<String>, m: &RepMatrix, d: usize) -> Self {
        Self::new(label, vec![m.clone(); d])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub dim: usize,
    pub dual: bool,
}

/// Modes plus generators. Matrices on dual modes are stored dualized.
#[derive(Debug, Clone)]
pub struct InvariantProblem {
    modes: Vec<Mode>,
    generators: Vec<GeneratorRep>,
    total_dim: u128,
}

impl InvariantProblem {
    /// Build from raw representations, dualizing the matrices on dual modes.
    pub fn new(modes: Vec<Mode>, generators: Vec<GeneratorRep>) -> Result<Self> {
        let generators = generators
            .into_iter()
            .map(|g| {
                if g.per_mode.len() != modes.len() {
                    return Ok(g);
                }
                let per_mode = g
                    .per_mode
                    .iter()
                    .zip(&modes)
                    .map(|(m, mode)| if mode.dual { dualize(m) } else { Ok(m.clone()) })
                    .collect::<Result<Vec<_>>>()?;
                Ok(GeneratorRep { label: g.label, per_mode })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_dualized(modes, generators)
    }

    /// Build from matrices that are already dualized where flagged.
    pub fn from_dualized(modes: Vec<Mode>, generators: Vec<GeneratorRep>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::invalid("problem needs at least one mode"));
        }
        if generators.is_empty() {
            return Err(Error::invalid("problem needs at least one generator"));
        }
        let mut total: u128 = 1;
        for m in &modes {
            if m.dim == 0 {
                return Err(Error::invalid("mode dimension must be positive"));
            }
            total = total
                .checked_mul(m.dim as u128)
                .ok_or_else(|| Error::invalid("total dimension overflows"))?;
        }
        for g in &generators {
            if g.per_mode.len() != modes.len() {
                return Err(Error::DimensionMismatch(format!(
                    "generator {:?} has {} matrices for {} modes",
                    g.label,
                    g.per_mode.len(),
                    modes.len()
                )));
            }
            for (i, (m, mode)) in g.per_mode.iter().zip(&modes).enumerate() {
                if m.dim() != mode.dim {
                    return Err(Error::DimensionMismatch(format!(
                        "generator {:?} mode {} is {}x{}, expected dimension {}",
                        g.label,
                        i + 1,
                        m.dim(),
                        m.dim(),
                        mode.dim
                    )));
                }
            }
        }
        Ok(Self { modes, generators, total_dim: total })
    }

    /// `d` copies of one representation; the first `k` modes are dual.
    pub fn uniform(gens: &[(String, RepMatrix)], d: usize, k: usize) -> Result<Self> {
        let n = gens.first().map(|g| g.1.dim()).ok_or_else(|| Error::invalid("no generators"))?;
        let modes = (0..d).map(|i| Mode { dim: n, dual: i < k }).collect();
        let generators = gens.iter().map(|(l, m)| GeneratorRep::uniform(l.clone(), m, d)).collect();
        Self::new(modes, generators)
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode_dims(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.dim).collect()
    }

    pub fn dual_flags(&self) -> Vec<bool> {
        self.modes.iter().map(|m| m.dual).collect()
    }

    pub fn order(&self) -> usize {
        self.modes.len()
    }

    pub fn generators(&self) -> &[GeneratorRep] {
        &self.generators
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    /// `N = Π n_i`.
    pub fn total_dim(&self) -> u128 {
        self.total_dim
    }

    /// `N` as `usize`, for dense paths.
    pub fn total_dim_usize(&self) -> Result<usize> {
        usize::try_from(self.total_dim).map_err(|_| Error::invalid("total dimension exceeds usize"))
    }

    /// Same problem with the generators reordered so that `first` leads.
    pub fn with_first_generator(&self, first: usize) -> Result<Self> {
        if first >= self.generators.len() {
            return Err(Error::invalid(format!("generator index {first} out of range")));
        }
        let mut generators = self.generators.clone();
        let g = generators.remove(first);
        generators.insert(0, g);
        Ok(Self { modes: self.modes.clone(), generators, total_dim: self.total_dim })
    }
}

/// Elements of the group generated by a problem's generator tuples.
#[derive(Debug, Clone)]
pub struct GroupEnumeration {
    pub elements: Vec<Vec<CMat>>,
}

impl GroupEnumeration {
    pub fn order(&self) -> usize {
        self.elements.len()
    }
}

struct Element {
    mats: Vec<CMat>,
    norm: f64,
    fingerprint: C64,
}

impl Element {
    fn new(mats: Vec<CMat>, weights: &[Vec<C64>]) -> Self {
        let norm = mats.iter().map(|m| frobenius(m).powi(2)).sum::<f64>().sqrt();
        let fingerprint = mats
            .iter()
            .zip(weights)
            .map(|(m, w)| m.iter().zip(w).fold(ZERO, |acc, (a, b)| acc + a * b))
            .sum();
        Self { mats, norm, fingerprint }
    }

    fn matches(&self, other: &Element) -> bool {
        let tol = MATCH_TOL * self.norm.max(other.norm).max(1.0);
        if (self.fingerprint - other.fingerprint).norm() > tol {
            return false;
        }
        let mut acc = 0.0;
        for (a, b) in self.mats.iter().zip(&other.mats) {
            acc += frobenius(&(a - b)).powi(2);
            if acc.sqrt() > tol {
                return false;
            }
        }
        true
    }
}

/// Breadth-first closure of the generator tuples under mode-wise products.
pub fn enumerate_group(problem: &InvariantProblem, cap: usize) -> Result<GroupEnumeration> {
    if cap == 0 {
        return Err(Error::invalid("cap must be at least 1"));
    }
    let dims = problem.mode_dims();
    // Fixed bounded weights; |w| <= 1 keeps the fingerprint within the match tolerance.
    let weights: Vec<Vec<C64>> = dims
        .iter()
        .map(|&n| {
            (0..n * n)
                .map(|t| {
                    let x = (t as f64 + 1.0) * 0.618_033_988_749_895;
                    C64::new((x * 7.0).sin() / (n as f64), (x * 3.0).cos() / (n as f64))
                })
                .collect()
        })
        .collect();
    let gens: Vec<Vec<CMat>> = problem
        .generators()
        .iter()
        .map(|g| g.per_mode.iter().map(|m| m.matrix().clone()).collect())
        .collect();
    let mut elements = vec![Element::new(dims.iter().map(|&n| identity(n)).collect(), &weights)];
    let mut frontier = 0;
    while frontier < elements.len() {
        for g in &gens {
            let prod: Vec<CMat> = g.iter().zip(&elements[frontier].mats).map(|(a, b)| a * b).collect();
            let cand = Element::new(prod, &weights);
            if !elements.iter().any(|e| e.matches(&cand)) {
                if elements.len() >= cap {
                    return Err(Error::CapExceeded { cap });
                }
                elements.push(cand);
            }
        }
        frontier += 1;
    }
    Ok(GroupEnumeration { elements: elements.into_iter().map(|e| e.mats).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn real(rows: &[&[f64]]) -> CMat {
        let n = rows.len();
        CMat::from_fn(n, rows[0].len(), |i, j| C64::new(rows[i][j], 0.0))
    }

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        frobenius(&(a - b)) <= tol
    }

    #[test]
    fn cyclic_shift_three() {
        let u = standard_representation(StandardKind::CyclicShift, 3).unwrap();
        let expected = real(&[&[0., 1., 0.], &[0., 0., 1.], &[1., 0., 0.]]);
        assert_eq!(u.matrix(), &expected);
    }

    #[test]
    fn reverser_two_is_swap() {
        let u = standard_representation(StandardKind::Reverser, 2).unwrap();
        assert_eq!(u.matrix(), &real(&[&[0., 1.], &[1., 0.]]));
    }

    #[test]
    fn swap_one_two_in_four() {
        let u = standard_representation(StandardKind::Swap(1, 2), 4).unwrap();
        let e = real(&[&[1.], &[-1.], &[0.], &[0.]]);
        let expected = identity(4) - &e * e.transpose();
        assert_eq!(u.matrix(), &expected);
    }

    #[test]
    fn standard_rejects_bad_arguments() {
        assert!(standard_representation(StandardKind::CyclicShift, 1).is_err());
        assert!(standard_representation(StandardKind::Swap(2, 2), 4).is_err());
        assert!(standard_representation(StandardKind::Swap(0, 2), 4).is_err());
        assert!(standard_representation(StandardKind::Swap(1, 5), 4).is_err());
        assert!(standard_representation(StandardKind::DicyclicPartner, 6).is_err());
    }

    #[test]
    fn dicyclic_signed_reverser_does_not_exist() {
        // A signed reverser squares to a diagonal matrix, while U_c^{n/2} has no fixed points.
        for n in [4, 8] {
            match standard_representation(StandardKind::DicyclicPartner, n) {
                Err(Error::DicyclicRelation { n: m }) => assert_eq!(m, n),
                other => panic!("expected relation failure, got {other:?}"),
            }
        }
    }

    #[test]
    fn rep_matrix_validation() {
        let not_normal = real(&[&[1., 1.], &[0., 1.]]);
        assert!(matches!(RepMatrix::new(not_normal), Err(Error::NotNormal { .. })));
        let singular = real(&[&[1., 0.], &[0., 0.]]);
        assert!(matches!(RepMatrix::new(singular), Err(Error::Singular { .. })));
        assert!(matches!(RepMatrix::new(CMat::zeros(2, 3)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn dualize_examples() {
        let i3 = RepMatrix::identity(3);
        assert!(close(dualize(&i3).unwrap().matrix(), i3.matrix(), 1e-12));
        for n in 2..7 {
            let r = standard_representation(StandardKind::Reverser, n).unwrap();
            assert!(close(dualize(&r).unwrap().matrix(), r.matrix(), 1e-10));
        }
        let d = RepMatrix::new(real(&[&[2., 0.], &[0., 0.5]])).unwrap();
        let expected = real(&[&[0.5, 0.], &[0., 2.]]);
        assert!(close(dualize(&d).unwrap().matrix(), &expected, 1e-12));
    }

    #[test]
    fn combine_examples() {
        let s = combine(&RepMatrix::identity(2), &RepMatrix::identity(3), CombineMode::DirectSum).unwrap();
        assert_eq!(s.matrix(), &identity(5));
        let swap2 = standard_representation(StandardKind::Reverser, 2).unwrap();
        let c = combine(&RepMatrix::identity(4), &swap2, CombineMode::TensorProduct).unwrap();
        let mut expected = CMat::zeros(8, 8);
        for b in 0..4 {
            expected[(2 * b, 2 * b + 1)] = C64::new(1.0, 0.0);
            expected[(2 * b + 1, 2 * b)] = C64::new(1.0, 0.0);
        }
        assert_eq!(c.matrix(), &expected);
        let uc = standard_representation(StandardKind::CyclicShift, 2).unwrap();
        let t = combine(&uc, &uc, CombineMode::TensorProduct).unwrap();
        assert_eq!(t.dim(), 4);
        assert!(!t.is_identity(1e-12));
        assert!(close(&(t.matrix() * t.matrix()), &identity(4), 1e-12));
    }

    fn single_mode(gens: Vec<RepMatrix>) -> InvariantProblem {
        let n = gens[0].dim();
        let gens = gens.into_iter().enumerate().map(|(i, m)| GeneratorRep::new(format!("g{i}"), vec![m])).collect();
        InvariantProblem::new(vec![Mode { dim: n, dual: false }], gens).unwrap()
    }

    #[test]
    fn enumerate_small_groups() {
        let swap = standard_representation(StandardKind::Reverser, 2).unwrap();
        let parity = InvariantProblem::uniform(&[("flip".into(), swap)], 3, 0).unwrap();
        assert_eq!(enumerate_group(&parity, 100).unwrap().order(), 2);
        let c4 = single_mode(vec![standard_representation(StandardKind::CyclicShift, 4).unwrap()]);
        assert_eq!(enumerate_group(&c4, 100).unwrap().order(), 4);
        let trivial = single_mode(vec![RepMatrix::identity(3), RepMatrix::identity(3)]);
        assert_eq!(enumerate_group(&trivial, 100).unwrap().order(), 1);
        for n in 2..=12 {
            let cn = single_mode(vec![standard_representation(StandardKind::CyclicShift, n).unwrap()]);
            assert_eq!(enumerate_group(&cn, 1000).unwrap().order(), n);
        }
    }

    #[test]
    fn enumerate_respects_cap() {
        let c6 = single_mode(vec![standard_representation(StandardKind::CyclicShift, 6).unwrap()]);
        assert!(matches!(enumerate_group(&c6, 5), Err(Error::CapExceeded { cap: 5 })));
        assert!(enumerate_group(&c6, 6).is_ok());
        let infinite = single_mode(vec![RepMatrix::new(real(&[&[2., 0.], &[0., 1.]])).unwrap()]);
        assert!(matches!(enumerate_group(&infinite, 50), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn enumeration_is_closed() {
        let gens = dihedral_group(5).unwrap();
        let p = InvariantProblem::uniform(&gens, 2, 1).unwrap();
        let g = enumerate_group(&p, 100).unwrap();
        assert_eq!(g.order(), 10);
        for a in &g.elements {
            for b in &g.elements {
                let prod: Vec<CMat> = a.iter().zip(b).map(|(x, y)| x * y).collect();
                assert!(g.elements.iter().any(|e| e.iter().zip(&prod).all(|(x, y)| close(x, y, 1e-8))));
            }
        }
    }

    #[test]
    fn problem_dualizes_flagged_modes() {
        let d = RepMatrix::new(real(&[&[2., 0.], &[0., 0.5]])).unwrap();
        let modes = vec![Mode { dim: 2, dual: true }, Mode { dim: 2, dual: false }];
        let p = InvariantProblem::new(modes, vec![GeneratorRep::uniform("g", &d, 2)]).unwrap();
        assert!(close(p.generators()[0].per_mode[0].matrix(), &real(&[&[0.5, 0.], &[0., 2.]]), 1e-12));
        assert_eq!(p.generators()[0].per_mode[1].matrix(), d.matrix());
        assert_eq!(p.total_dim(), 4);
    }

    #[test]
    fn problem_validation() {
        let m = RepMatrix::identity(2);
        let modes = vec![Mode { dim: 2, dual: false }, Mode { dim: 3, dual: false }];
        assert!(InvariantProblem::new(modes.clone(), vec![GeneratorRep::uniform("g", &m, 2)]).is_err());
        assert!(InvariantProblem::new(modes.clone(), vec![GeneratorRep::uniform("g", &m, 1)]).is_err());
        assert!(InvariantProblem::new(modes, vec![]).is_err());
        let huge: Vec<Mode> = (0..200).map(|_| Mode { dim: 1 << 20, dual: false }).collect();
        let g = GeneratorRep::new("g", vec![]);
        assert!(InvariantProblem::from_dualized(huge, vec![g]).is_err());
    }

    fn unitary_diag(phases: &[f64]) -> RepMatrix {
        let n = phases.len();
        let mut m = CMat::zeros(n, n);
        for (i, t) in phases.iter().enumerate() {
            m[(i, i)] = C64::from_polar(1.0, *t);
        }
        RepMatrix::new(m).unwrap()
    }

    fn perm_strategy() -> impl Strategy<Value = Vec<usize>> {
        (2usize..6).prop_flat_map(|n| Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    }

    proptest! {
        #[test]
        fn standard_reps_are_normal(n in 2usize..24, i in 1usize..24, j in 1usize..24) {
            for kind in [StandardKind::CyclicShift, StandardKind::Reverser] {
                let m = standard_representation(kind, n).unwrap();
                prop_assert!(normality_residual(m.matrix()) <= NORMALITY_TOL);
            }
            if i < j && j <= n {
                let m = standard_representation(StandardKind::Swap(i, j), n).unwrap();
                prop_assert!(normality_residual(m.matrix()) <= NORMALITY_TOL);
            }
        }

        #[test]
        fn dualize_round_trips(phases in prop::collection::vec(-3.0f64..3.0, 1..6), scale in prop::collection::vec(0.2f64..5.0, 6)) {
            let n = phases.len();
            let mut m = unitary_diag(&phases).into_matrix();
            for i in 0..n {
                m[(i, i)] *= scale[i];
            }
            let m = RepMatrix::new(m).unwrap();
            let back = dualize(&dualize(&m).unwrap()).unwrap();
            prop_assert!(close(back.matrix(), m.matrix(), 1e-10 * frobenius(m.matrix()).max(1.0)));
        }

        #[test]
        fn combine_preserves_normality(
            pa in prop::collection::vec(-3.0f64..3.0, 1..5),
            perm in perm_strategy(),
            direct in any::<bool>(),
        ) {
            let a = unitary_diag(&pa);
            let b = RepMatrix::permutation(&perm).unwrap();
            let mode = if direct { CombineMode::DirectSum } else { CombineMode::TensorProduct };
            let c = combine(&a, &b, mode).unwrap();
            let c2 = combine(&b, &c, mode).unwrap();
            prop_assert!(normality_residual(c.matrix()) <= NORMALITY_TOL);
            prop_assert!(normality_residual(c2.matrix()) <= NORMALITY_TOL);
        }
    }
}
