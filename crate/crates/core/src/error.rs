use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("element {elem}: corner ordering produces a self-intersecting quadrilateral")]
    SelfIntersecting { elem: usize },

    #[error("element {elem}: degenerate geometry")]
    DegenerateElement { elem: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("element {elem} references node {node}, but the mesh has {count} nodes")]
    IndexOutOfRange { elem: usize, node: usize, count: usize },

    #[error("point ({x}, {y}) has no preimage in the element")]
    NoPreimage { x: f64, y: f64 },

    #[error("element is not concave")]
    NotConcave,

    #[error("no positive-branch preimage of the re-entrant vertex")]
    PreimageNotFound,

    #[error("deformation gradient with non-positive determinant ({det_f:e})")]
    NonPositiveJacobianState { det_f: f64 },

    #[error("inadmissible elastic moduli: {0}")]
    InadmissibleModuli(String),

    #[error("unknown node or edge set `{0}`")]
    UnknownSet(String),

    #[error("element {elem}: {source}")]
    Element {
        elem: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("singular saddle-point system")]
    SingularSystem,

    #[error("Newton-Raphson diverged in load step {step} (load factor {load_factor})")]
    Diverged {
        step: usize,
        load_factor: f64,
        history: Vec<f64>,
    },

    #[error("system dimension {dim} exceeds dense cap {cap}")]
    TooLarge { dim: usize, cap: usize },

    #[error("point ({x}, {y}) is not located in the mesh")]
    PointNotLocated { x: f64, y: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_element(self, elem: usize) -> Self {
        match self {
            e @ Error::Element { .. } => e,
            e => Error::Element {
                elem,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, looking through element wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Element { source, .. } => source.root(),
            e => e,
        }
    }
}
