use alloc::boxed::Box;

/// Errors raised by mesh construction, assembly, factorization and the
/// multiscale solves.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh levels: coarse {coarse} must not exceed fine {fine}")]
    InvalidLevels { coarse: u32, fine: u32 },

    #[error("refinement level {level} exceeds the configured limit {limit}")]
    ResourceLimit { level: u32, limit: u32 },

    #[error("level {level} is not part of the mesh hierarchy (finest level {finest})")]
    MissingLevel { level: u32, finest: u32 },

    #[error("mesh is not conforming: edge ({a}, {b}) is shared by {count} triangles")]
    NonConforming { a: usize, b: usize, count: usize },

    #[error("triangle {triangle} has non-positive area {area}")]
    DegenerateTriangle { triangle: usize, area: f64 },

    #[error("face {face} lies on the domain boundary")]
    BoundaryFace { face: usize },

    #[error("face index {face} out of range ({count} faces)")]
    FaceOutOfRange { face: usize, count: usize },

    #[error("patch order must be at least 1")]
    ZeroPatchOrder,

    #[error("patch of order {order} around face {face} has no interior faces")]
    EmptyPatch { face: usize, order: usize },

    #[error("coefficient value {value} on element {element} violates bound {bound}")]
    CoefficientBound {
        element: usize,
        value: f64,
        bound: &'static str,
    },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("linear system is singular (deficient pivot at column {pivot})")]
    Singular { pivot: usize },

    #[error("solve did not reach the accuracy target: relative residual {residual:e}")]
    Inaccurate { residual: f64 },

    #[error("sparse backend failure: {0}")]
    Backend(&'static str),

    #[error("basis problem for face {face}, component {component}, order {order} failed: {source}")]
    BasisSolve {
        face: usize,
        component: usize,
        order: usize,
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
