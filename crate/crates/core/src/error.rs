use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not normal (relative commutator residual {residual:.3e})")]
    NotNormal { residual: f64 },

    #[error("matrix is numerically singular (smallest singular value {sigma_min:.3e})")]
    Singular { sigma_min: f64 },

    #[error("no signed reverser satisfies the dicyclic relations for n = {n}")]
    DicyclicRelation { n: usize },

    #[error("group enumeration exceeded the cap of {cap} elements")]
    CapExceeded { cap: usize },

    #[error("dense allocation of {needed} bytes exceeds the memory budget of {budget} bytes")]
    BudgetExceeded { needed: u128, budget: u64 },

    #[error("eigenvalue-one cluster is not an invariant eigenspace (residual {residual:.3e})")]
    DefectiveCluster { residual: f64 },

    #[error("subspace is not closed under conjugation (residual {residual:.3e})")]
    NotConjugationClosed { residual: f64 },

    #[error("core {core} has an empty invariant basis; the representations are incompatible")]
    EmptyBasis { core: usize },

    #[error("iteration limit reached (best residual {best_residual:.3e})")]
    MaxIterations { best_residual: f64 },

    #[error("Schur iteration failed to converge after {iterations} sweeps")]
    SchurConvergence { iterations: usize },

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Divergence { epoch: usize },

    #[error("AUROC needs both classes to be present")]
    SingleClass,

    #[error("invalid symbol {0:?}")]
    InvalidSymbol(char),

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short category label used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) | Error::DimensionMismatch(_) | Error::InvalidSymbol(_) => {
                "input"
            }
            Error::Json { .. } => "schema",
            Error::Io { .. } | Error::Csv(_) => "io",
            Error::BudgetExceeded { .. } | Error::CapExceeded { .. } => "resource",
            _ => "numerical",
        }
    }
}
