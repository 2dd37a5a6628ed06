use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown weight family `{0}`")]
    UnknownFamily(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("weight is not plurisubharmonic at {point:?} (min eigenvalue {lambda:e})")]
    NotPlurisubharmonic { point: Vec<f64>, lambda: f64 },
    #[error("Laplacian vanishes at every probe point")]
    LaplacianVanishes,
    #[error("potential sup is zero on every probed ball")]
    ZeroPotential,
    #[error("potential too small on reachable scales at {0:?}")]
    PotentialTooSmall(Vec<f64>),
    #[error("potential too singular at rmin at {0:?}")]
    PotentialTooSingular(Vec<f64>),
    #[error("radius field is not radial: {0}")]
    NotRadial(String),
    #[error("grid precondition violated: {0}")]
    Grid(String),
    #[error("point {0:?} lies outside the box")]
    OutsideBox(Vec<f64>),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("weight lacks per-variable rotation symmetry: {0}")]
    NoSymmetry(String),
    #[error("solver did not converge: {0}")]
    Solver(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
