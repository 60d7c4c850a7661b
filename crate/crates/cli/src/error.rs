use cusp_spectra::bound::BoundError;
use cusp_spectra::eigen::EigenError;
use cusp_spectra::mesh::MeshError;
use cusp_spectra::param::ParamError;

/// Failures sorted by exit code.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    EmptyFeasibleSet(String),
    Nonconverged(String),
    AllInfeasible(String),
    Io(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::EmptyFeasibleSet(_) => 3,
            CliError::Nonconverged(_) => 4,
            CliError::AllInfeasible(_) => 5,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid parameters: {m}"),
            CliError::EmptyFeasibleSet(m) => write!(f, "empty feasible set: {m}"),
            CliError::Nonconverged(m) => write!(f, "not converged: {m}"),
            CliError::AllInfeasible(m) => write!(f, "every sweep point is infeasible: {m}"),
            CliError::Io(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<ParamError> for CliError {
    fn from(e: ParamError) -> Self {
        match e {
            ParamError::EmptyWindow { .. } => CliError::EmptyFeasibleSet(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<EigenError> for CliError {
    fn from(e: EigenError) -> Self {
        match e {
            EigenError::Param(p) => p.into(),
            EigenError::Mesh(m) => m.into(),
            EigenError::UnsupportedExponent(_) => CliError::Invalid(e.to_string()),
            EigenError::LengthMismatch { .. } => CliError::Io(anyhow::anyhow!(e)),
            _ => CliError::Nonconverged(e.to_string()),
        }
    }
}

impl From<BoundError> for CliError {
    fn from(e: BoundError) -> Self {
        match e {
            BoundError::EmptyFeasibleSet | BoundError::InfeasibleParams(_) => {
                CliError::EmptyFeasibleSet(e.to_string())
            }
            BoundError::StrategyDomainMismatch(_) => CliError::Invalid(e.to_string()),
            BoundError::Param(p) => p.into(),
            BoundError::Map(_) => CliError::Invalid(e.to_string()),
            BoundError::Eigen(x) => x.into(),
        }
    }
}
