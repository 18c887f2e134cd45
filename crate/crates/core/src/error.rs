use core::fmt;

/// Failure modes of the numerical kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two graded elements were built over different generator sets.
    GeneratorMismatch,
    /// Matrix coefficients of incompatible dimension were combined.
    CoefficientMismatch { left: usize, right: usize },
    /// A matrix-coefficient operation received a scalar element.
    ScalarSupertrace,
    DimensionMismatch { expected: usize, found: usize },
    NotPositiveDefinite,
    Singular,
    /// The two charts share no lifted overlap (at the queried point).
    DisjointCharts { a: u32, b: u32 },
    NonCommutingHolonomy { defect: f64 },
    OrientationReversing { det: f64 },
    SingleChart,
    DuplicateIndex(u32),
    RadiusTooLarge { index: u32, radius: f64 },
    CoverageGap { x: f64, y: f64 },
    /// A point lies on more boundaries than the fiber rank allows.
    TooManyBoundaries { x: f64, y: f64 },
    Transversality { angle: f64, min: f64 },
    /// Containing-chart depth at a vertex does not exceed the collar width.
    CollarTooWide { x: f64, y: f64, depth: f64, width: f64 },
    /// Two collars overlap somewhere that is not a vertex cell.
    CollarOverlapOutsideCells { x: f64, y: f64 },
    UncoveredVertex { x: f64, y: f64 },
    InvalidPermutation,
    NotInBPlus,
    Quadrature { achieved: f64, requested: f64 },
    FitNotConverged { residual: f64, tolerance: f64 },
    InvalidSchedule,
    StepUnderflow,
    TailTruncation { estimate: f64, tolerance: f64 },
    InvalidInput(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::GeneratorMismatch => write!(f, "graded elements use different generator sets"),
            Error::CoefficientMismatch { left, right } => {
                write!(f, "matrix coefficient dimensions differ ({left} vs {right})")
            }
            Error::ScalarSupertrace => write!(f, "supertrace requires matrix coefficients"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NotPositiveDefinite => write!(f, "matrix is not symmetric positive definite"),
            Error::Singular => write!(f, "matrix is singular"),
            Error::DisjointCharts { a, b } => write!(f, "charts {a} and {b} do not overlap"),
            Error::NonCommutingHolonomy { defect } => {
                write!(f, "holonomies do not commute (|AB - BA| = {defect:e})")
            }
            Error::OrientationReversing { det } => {
                write!(f, "holonomy reverses orientation (det = {det})")
            }
            Error::SingleChart => write!(f, "a closed surface cannot be covered by one disk"),
            Error::DuplicateIndex(i) => write!(f, "chart index {i} used twice"),
            Error::RadiusTooLarge { index, radius } => {
                write!(f, "chart {index}: radius {radius} must be below 0.5")
            }
            Error::CoverageGap { x, y } => write!(f, "point ({x:.4}, {y:.4}) is not covered"),
            Error::TooManyBoundaries { x, y } => {
                write!(f, "point ({x:.4}, {y:.4}) lies on too many boundaries")
            }
            Error::Transversality { angle, min } => {
                write!(f, "boundaries meet at {angle:.4} rad, below the minimum {min:.4}")
            }
            Error::CollarTooWide { x, y, depth, width } => write!(
                f,
                "vertex ({x:.4}, {y:.4}): containing depth {depth:.4} <= collar width {width:.4}; shrink the collar"
            ),
            Error::CollarOverlapOutsideCells { x, y } => {
                write!(f, "collars overlap at ({x:.4}, {y:.4}) away from every vertex cell")
            }
            Error::UncoveredVertex { x, y } => {
                write!(f, "vertex ({x:.4}, {y:.4}) lies in no open chart")
            }
            Error::InvalidPermutation => write!(f, "not a permutation of the chart indices"),
            Error::NotInBPlus => write!(f, "vertex is not in B+"),
            Error::Quadrature { achieved, requested } => write!(
                f,
                "quadrature did not converge: achieved {achieved:e}, requested {requested:e}"
            ),
            Error::FitNotConverged { residual, tolerance } => {
                write!(f, "extrapolation residual {residual:e} exceeds {tolerance:e}")
            }
            Error::InvalidSchedule => {
                write!(f, "schedule must be strictly increasing with every T > 1")
            }
            Error::StepUnderflow => write!(f, "finite-difference step underflows"),
            Error::TailTruncation { estimate, tolerance } => {
                write!(f, "tail truncation error {estimate:e} exceeds {tolerance:e}")
            }
            Error::InvalidInput(what) => write!(f, "invalid input: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
