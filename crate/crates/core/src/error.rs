use thiserror::Error;

/// Errors raised by the core algorithms.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),

    #[error("scheme parse error at line {line}: {msg}")]
    SchemeParse { line: usize, msg: String },

    #[error("invalid measure weights: {0}")]
    InvalidWeights(String),

    #[error("invalid word {word}: {msg}")]
    InvalidWord { word: String, msg: String },

    #[error("level mismatch: expected {expected}, found {found}")]
    LevelMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("constraint sets overlap in {0} cells")]
    OverlappingSets(usize),

    #[error("empty ground set: Gamma_{m_star}({word}) covers the whole level, use a deeper word")]
    EmptyGround { word: String, m_star: usize },

    #[error("no M <= {m_hi} satisfies pi(Gamma_(M+1)(w)) in Gamma_M(pi(w)) up to level {depth}")]
    NoValidMStar { m_hi: usize, depth: usize },

    #[error("solver did not converge after {iterations} iterations (kkt residual {kkt:.3e})")]
    NonConvergence { iterations: usize, kkt: f64 },

    #[error("disparity is infinite: the refined patch is disconnected")]
    InfiniteDisparity,

    #[error("cutoff infeasible: ring B_{j} fills level {level}, increase n")]
    InfeasibleCutoff { j: usize, level: usize },

    #[error("support separation failed at n={n}, j={j}: {detail}")]
    SupportSeparation { n: usize, j: usize, detail: String },

    #[error("nesting failed at j={j}: {detail}")]
    Nesting { j: usize, detail: String },

    #[error("{word} at m = {m}: {source}")]
    AtSample {
        word: String,
        m: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no bracket: sigma(p_lo)={sigma_lo:.4}, sigma(p_hi)={sigma_hi:.4}; crossing outside [{p_lo}, {p_hi}]")]
    NoBracket {
        p_lo: f64,
        p_hi: f64,
        sigma_lo: f64,
        sigma_hi: f64,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
