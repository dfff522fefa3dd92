use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("derivative order {0} unsupported (max 3)")]
    UnsupportedDerivative(u32),

    #[error("assumption violated ({item}) at x = {x}")]
    AssumptionViolated { item: String, x: f64 },

    #[error("no turning point: lambda = {lambda} below V(R) = {v_r}")]
    NoTurningPoint { lambda: f64, v_r: f64 },

    #[error("domain too small: eigenfunction tail {tail:.3e} at L = {l}; try L = {suggested_l}")]
    DomainTooSmall { l: f64, tail: f64, suggested_l: f64 },

    #[error("truncation: only {found} eigenvalues below V(L)/2, {wanted} requested")]
    Truncation { found: usize, wanted: usize },

    #[error("branch error: lambda - V changes sign inside [{a}, {b}]")]
    Branch { a: f64, b: f64 },

    #[error("argument {re} + {im}i is off the supported rays")]
    OffRay { re: f64, im: f64 },

    #[error("index n = {n} below n0 = {n0}")]
    UnsupportedIndex { n: usize, n0: usize },

    #[error("under-resolved: |k|h = {kh:.3} > 0.3; need h <= {required_h:.3e}")]
    UnderResolved { kh: f64, required_h: f64 },

    #[error("zero frequency has its own bound")]
    ZeroFrequency,

    #[error("degenerate fit: all samples below {0:e}")]
    DegenerateFit(f64),

    #[error("power iteration did not converge in {0} steps")]
    IterationLimit(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("resonant divisor {divisor:.3e} at mode {mode:?}")]
    ResonantDivisor { mode: Vec<i32>, divisor: f64 },

    #[error("singular Galerkin matrix")]
    Singular,

    #[error("resonance at {} (pair, mode) sites, first {:?}", .0.len(), .0.first())]
    Resonance(Vec<(usize, usize, Vec<i32>)>),

    #[error("divergence: perturbation norm grew at levels {0} and {1}")]
    Divergence(usize, usize),

    #[error("frequency fails the Melnikov screen at k = {k:?}")]
    MelnikovScreen { k: Vec<i32> },

    #[error("over-exclusion: no frequency accepted; try gamma < {suggested_gamma}")]
    OverExclusion { suggested_gamma: f64 },

    #[error("perturbation is not odd in x (term {0})")]
    NotOdd(usize),

    #[error("frequency vector nu fails the Diophantine check at k = {0:?}")]
    NotDiophantine(Vec<i32>),

    #[error("resonant phase at mode {0:?}")]
    ResonantPhase(Vec<i32>),

    #[error("norm drift {drift:.3e} exceeds tolerance; try dt = {suggested_dt:.3e}")]
    StepSize { drift: f64, suggested_dt: f64 },

    #[error("time grids differ")]
    GridMismatch,

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::UnsupportedDerivative(_) => "unsupported-derivative",
            Error::AssumptionViolated { .. } => "assumption-violated",
            Error::NoTurningPoint { .. } => "no-turning-point",
            Error::DomainTooSmall { .. } => "domain-too-small",
            Error::Truncation { .. } => "truncation",
            Error::Branch { .. } => "branch",
            Error::OffRay { .. } => "off-ray",
            Error::UnsupportedIndex { .. } => "unsupported-index",
            Error::UnderResolved { .. } => "under-resolved",
            Error::ZeroFrequency => "zero-frequency",
            Error::DegenerateFit(_) => "degenerate-fit",
            Error::IterationLimit(_) => "iteration-limit",
            Error::Dimension(_) => "dimension",
            Error::ResonantDivisor { .. } => "resonant-divisor",
            Error::Singular => "singular",
            Error::Resonance(_) => "resonance",
            Error::Divergence(..) => "divergence",
            Error::MelnikovScreen { .. } => "melnikov-screen",
            Error::OverExclusion { .. } => "over-exclusion",
            Error::NotOdd(_) => "not-odd",
            Error::NotDiophantine(_) => "not-diophantine",
            Error::ResonantPhase(_) => "resonant-phase",
            Error::StepSize { .. } => "step-size",
            Error::GridMismatch => "grid-mismatch",
            Error::Stage { .. } => "stage",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
