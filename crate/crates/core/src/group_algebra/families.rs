//! Generator sets for the standard group families.

use super::{combine, standard_representation, CombineMode, RepMatrix, StandardKind};
use crate::error::Result;
use crate::linalg::RMat;

pub type LabeledGenerators = Vec<(String, RepMatrix)>;

fn std_rep(kind: StandardKind, n: usize) -> Result<RepMatrix> {
    standard_representation(kind, n)
}

/// `C_n = ⟨g_c⟩`.
pub fn cyclic_group(n: usize) -> Result<LabeledGenerators> {
    Ok(vec![("g_c".into(), std_rep(StandardKind::CyclicShift, n)?)])
}

/// `D_n = ⟨g_c, g_r⟩`.
pub fn dihedral_group(n: usize) -> Result<LabeledGenerators> {
    Ok(vec![
        ("g_c".into(), std_rep(StandardKind::CyclicShift, n)?),
        ("g_r".into(), std_rep(StandardKind::Reverser, n)?),
    ])
}

/// `S_n = ⟨g_c, g_s¹²⟩`.
pub fn symmetric_group(n: usize) -> Result<LabeledGenerators> {
    Ok(vec![
        ("g_c".into(), std_rep(StandardKind::CyclicShift, n)?),
        ("g_s12".into(), std_rep(StandardKind::Swap(1, 2), n)?),
    ])
}

/// `S_n = ⟨g_s¹², …, g_s¹ⁿ⟩`, a poor choice for the solver.
pub fn symmetric_group_transpositions(n: usize) -> Result<LabeledGenerators> {
    (2..=n)
        .map(|j| Ok((format!("g_s1{j}"), std_rep(StandardKind::Swap(1, j), n)?)))
        .collect()
}

/// Generators `(g_i, e)` then `(e, h_j)` of `G × H`, optionally led by `(g_1, h_1)`.
pub fn product_generators(
    g: &[(String, RepMatrix)],
    h: &[(String, RepMatrix)],
    mode: CombineMode,
    lead_with_pair: bool,
) -> Result<LabeledGenerators> {
    let (Some(g1), Some(h1)) = (g.first(), h.first()) else {
        return Ok(Vec::new());
    };
    let eg = RepMatrix::identity(g1.1.dim());
    let eh = RepMatrix::identity(h1.1.dim());
    let mut out = Vec::with_capacity(g.len() + h.len() + 1);
    if lead_with_pair {
        out.push((format!("({},{})", g1.0, h1.0), combine(&g1.1, &h1.1, mode)?));
    }
    for (label, m) in g {
        out.push((format!("({label},e)"), combine(m, &eh, mode)?));
    }
    for (label, m) in h {
        out.push((format!("(e,{label})"), combine(&eg, m, mode)?));
    }
    Ok(out)
}

/// Representations of the octahedral group `O_h ≅ S_4 × C_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OctahedralRep {
    /// 3-dimensional rotation-reflection representation.
    Natural,
    /// 5-dimensional direct sum of the permutation and sign representations.
    DirectSum,
    /// 8-dimensional tensor product of the same two representations.
    TensorProduct,
}

impl OctahedralRep {
    pub const ALL: [OctahedralRep; 3] = [Self::Natural, Self::DirectSum, Self::TensorProduct];

    pub fn name(self) -> &'static str {
        match self {
            Self::Natural => "rho",
            Self::DirectSum => "rho_sum",
            Self::TensorProduct => "rho_kron",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Self::Natural => 3,
            Self::DirectSum => 5,
            Self::TensorProduct => 8,
        }
    }
}

fn real_rows(rows: &[&[f64]]) -> RMat {
    RMat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

/// Generators `a, b, c` of `O_h` in the requested representation.
pub fn octahedral_generators(rep: OctahedralRep) -> Result<LabeledGenerators> {
    let mats = match rep {
        OctahedralRep::Natural => vec![
            RepMatrix::from_real(&(-RMat::identity(3, 3)))?,
            RepMatrix::from_real(&real_rows(&[&[0., 0., 1.], &[1., 0., 0.], &[0., 1., 0.]]))?,
            RepMatrix::from_real(&real_rows(&[&[-1., 0., 0.], &[0., -1., 0.], &[0., 0., 1.]]))?,
        ],
        OctahedralRep::DirectSum | OctahedralRep::TensorProduct => {
            let pa = std_rep(StandardKind::Swap(1, 2), 4)?;
            let pb = RepMatrix::from_real(&real_rows(&[
                &[1., 0., 0., 0.],
                &[0., 0., 0., 1.],
                &[0., 1., 0., 0.],
                &[0., 0., 1., 0.],
            ]))?;
            let i4 = RepMatrix::identity(4);
            let (one, sign) = if rep == OctahedralRep::DirectSum {
                (RepMatrix::identity(1), RepMatrix::from_real(&real_rows(&[&[-1.]]))?)
            } else {
                (RepMatrix::identity(2), std_rep(StandardKind::Reverser, 2)?)
            };
            let mode = if rep == OctahedralRep::DirectSum {
                CombineMode::DirectSum
            } else {
                CombineMode::TensorProduct
            };
            vec![combine(&pa, &one, mode)?, combine(&pb, &one, mode)?, combine(&i4, &sign, mode)?]
        }
    };
    Ok(["a", "b", "c"].iter().map(|s| s.to_string()).zip(mats).collect())
}
