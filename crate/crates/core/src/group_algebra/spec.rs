//! JSON group specifications.
//!
//! ```json
//! {"modes": [{"dim": 4, "dual": true}, {"dim": 4, "dual": false}],
//!  "generators": [{"label": "g_c", "per_mode": [{"kind": "cyclic_shift"}, {"kind": "cyclic_shift"}]}]}
//! ```
//!
//! Standard kinds take their size from the mode. Inside `direct_sum` and `kron`
//! the size of one operand is inferred from the other; an explicit `"n"` can be
//! given on any standard kind when both operands are standard.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{combine, standard_representation, CombineMode, GeneratorRep, InvariantProblem, Mode, RepMatrix, StandardKind};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub modes: Vec<ModeSpec>,
    pub generators: Vec<GeneratorSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModeSpec {
    pub dim: usize,
    #[serde(default)]
    pub dual: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub label: String,
    pub per_mode: Vec<MatrixSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixSpec {
    CyclicShift {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Reverser {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Trivial {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Swap {
        i: usize,
        j: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Dense {
        re: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        im: Option<Vec<Vec<f64>>>,
    },
    DirectSum {
        a: Box<MatrixSpec>,
        b: Box<MatrixSpec>,
    },
    Kron {
        a: Box<MatrixSpec>,
        b: Box<MatrixSpec>,
    },
}

impl MatrixSpec {
    /// Dense spec of an existing matrix.
    pub fn dense(m: &CMat) -> Self {
        let rows = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        let im = rows(|z| z.im);
        let any_imag = im.iter().flatten().any(|&x| x != 0.0);
        MatrixSpec::Dense { re: rows(|z| z.re), im: any_imag.then_some(im) }
    }

    /// Size fixed by the spec itself, if any.
    fn intrinsic_dim(&self) -> Option<usize> {
        match self {
            MatrixSpec::CyclicShift { n } | MatrixSpec::Reverser { n } | MatrixSpec::Trivial { n } => *n,
            MatrixSpec::Swap { n, .. } => *n,
            MatrixSpec::Dense { re, .. } => Some(re.len()),
            MatrixSpec::DirectSum { a, b } => Some(a.intrinsic_dim()? + b.intrinsic_dim()?),
            MatrixSpec::Kron { a, b } => Some(a.intrinsic_dim()? * b.intrinsic_dim()?),
        }
    }

    /// Build the matrix for a slot of dimension `dim`.
    pub fn build(&self, dim: usize) -> Result<RepMatrix> {
        if let Some(n) = self.intrinsic_dim() {
            if n != dim {
                return Err(Error::DimensionMismatch(format!(
                    "matrix spec has dimension {n}, slot expects {dim}"
                )));
            }
        }
        match self {
            MatrixSpec::CyclicShift { .. } => standard_representation(StandardKind::CyclicShift, dim),
            MatrixSpec::Reverser { .. } => standard_representation(StandardKind::Reverser, dim),
            MatrixSpec::Trivial { .. } => Ok(RepMatrix::identity(dim)),
            MatrixSpec::Swap { i, j, .. } => standard_representation(StandardKind::Swap(*i, *j), dim),
            MatrixSpec::Dense { re, im } => {
                let n = re.len();
                let ok_shape = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
                if !ok_shape(re) || im.as_ref().is_some_and(|im| !ok_shape(im)) {
                    return Err(Error::DimensionMismatch(format!("dense matrix spec must be {n}x{n}")));
                }
                let m = CMat::from_fn(n, n, |r, c| {
                    C64::new(re[r][c], im.as_ref().map_or(0.0, |im| im[r][c]))
                });
                RepMatrix::new(m)
            }
            MatrixSpec::DirectSum { a, b } => {
                let (da, db) = match (a.intrinsic_dim(), b.intrinsic_dim()) {
                    (Some(da), _) if da < dim => (da, dim - da),
                    (None, Some(db)) if db < dim => (dim - db, db),
                    _ => return Err(Error::invalid(format!("cannot split dimension {dim} across direct_sum operands"))),
                };
                combine(&a.build(da)?, &b.build(db)?, CombineMode::DirectSum)
            }
            MatrixSpec::Kron { a, b } => {
                let (da, db) = match (a.intrinsic_dim(), b.intrinsic_dim()) {
                    (Some(da), _) if da > 0 && dim.is_multiple_of(da) => (da, dim / da),
                    (None, Some(db)) if db > 0 && dim.is_multiple_of(db) => (dim / db, db),
                    _ => return Err(Error::invalid(format!("cannot factor dimension {dim} across kron operands"))),
                };
                combine(&a.build(da)?, &b.build(db)?, CombineMode::TensorProduct)
            }
        }
    }
}

impl GroupSpec {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json { path: origin.to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Spec with dense matrices for the given raw (non-dualized) generators.
    pub fn from_generators(modes: &[Mode], generators: &[GeneratorRep]) -> Self {
        GroupSpec {
            modes: modes.iter().map(|m| ModeSpec { dim: m.dim, dual: m.dual }).collect(),
            generators: generators
                .iter()
                .map(|g| GeneratorSpec {
                    label: g.label.clone(),
                    per_mode: g.per_mode.iter().map(|m| MatrixSpec::dense(m.matrix())).collect(),
                })
                .collect(),
        }
    }

    /// Raw generator representations, before dualization.
    pub fn raw_generators(&self) -> Result<Vec<GeneratorRep>> {
        self.generators
            .iter()
            .map(|g| {
                if g.per_mode.len() != self.modes.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "generator {:?} has {} matrices for {} modes",
                        g.label,
                        g.per_mode.len(),
                        self.modes.len()
                    )));
                }
                let per_mode = g
                    .per_mode
                    .iter()
                    .zip(&self.modes)
                    .map(|(s, m)| s.build(m.dim))
                    .collect::<Result<Vec<_>>>()?;
                Ok(GeneratorRep::new(g.label.clone(), per_mode))
            })
            .collect()
    }

    pub fn modes(&self) -> Vec<Mode> {
        self.modes.iter().map(|m| Mode { dim: m.dim, dual: m.dual }).collect()
    }

    pub fn to_problem(&self) -> Result<InvariantProblem> {
        InvariantProblem::new(self.modes(), self.raw_generators()?)
    }
}
