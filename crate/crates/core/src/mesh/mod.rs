//! Uniform Cartesian space-time grids and grid-transfer operators.
//!
//! Unknowns live on interior nodes only. A grid with `nx` interior nodes in x
//! has spacing `(x_right - x_left) / (nx + 1)`; the two boundary nodes carry
//! Dirichlet data supplied by the problem definition.

mod spline;
mod transfer;

use std::ops::{Deref, DerefMut};

use thiserror::Error;

pub use spline::{natural_spline, NaturalSpline};
pub use transfer::{
    coarse_count, is_nested, prolong_cubic_spline, restrict, restrict_injection,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid domain bounds: {0}")]
    InvalidBounds(String),
    #[error("grid counts must be at least 1 (nx={nx}, ny={ny}, nt={nt})")]
    InvalidCount { nx: usize, ny: usize, nt: usize },
    #[error("coarsening factor {factor} does not divide {count}")]
    NotDivisible { count: usize, factor: usize },
    #[error("coarsening factor must be at least 1")]
    ZeroFactor,
    #[error("coarsening by {factor} leaves no interior nodes (fine count {count})")]
    EmptyCoarseGrid { count: usize, factor: usize },
    #[error("coarse nodes are not a subset of fine nodes ({fine} fine, factor {factor})")]
    NotNested { fine: usize, factor: usize },
    #[error("grids do not share physical extents")]
    ExtentMismatch,
    #[error("a cubic spline needs at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("spline knots must be strictly increasing")]
    UnorderedKnots,
    #[error("field length {got} does not match grid size {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Description of a uniform space-time grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_left: f64,
    pub x_right: f64,
    pub y_left: f64,
    pub y_right: f64,
    pub t_final: f64,
    /// Interior nodes in x.
    pub nx: usize,
    /// Interior nodes in y.
    pub ny: usize,
    /// Time levels after t = 0.
    pub nt: usize,
}

impl GridSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x_left: f64,
        x_right: f64,
        y_left: f64,
        y_right: f64,
        t_final: f64,
        nx: usize,
        ny: usize,
        nt: usize,
    ) -> Result<Self, MeshError> {
        make_grid(x_left, x_right, y_left, y_right, t_final, nx, ny, nt)
    }

    pub fn hx(&self) -> f64 {
        (self.x_right - self.x_left) / (self.nx + 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_right - self.y_left) / (self.ny + 1) as f64
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    /// Number of spatial unknowns per time level.
    pub fn ns(&self) -> usize {
        self.nx * self.ny
    }

    /// x coordinate of node column `i`, where `i = 0` is the left boundary and
    /// `i = nx + 1` the right boundary.
    pub fn x(&self, i: usize) -> f64 {
        if i == self.nx + 1 {
            self.x_right
        } else {
            self.x_left + i as f64 * self.hx()
        }
    }

    pub fn y(&self, j: usize) -> f64 {
        if j == self.ny + 1 {
            self.y_right
        } else {
            self.y_left + j as f64 * self.hy()
        }
    }

    /// Time of level `n` (level 0 is the initial condition).
    pub fn t(&self, n: usize) -> f64 {
        if n == self.nt {
            self.t_final
        } else {
            n as f64 * self.tau()
        }
    }

    /// Flat index of interior node `(i, j)`, both 1-based.
    pub fn index(&self, i: usize, j: usize) -> usize {
        (j - 1) * self.nx + (i - 1)
    }

    pub fn same_extents(&self, other: &GridSpec) -> bool {
        self.x_left == other.x_left
            && self.x_right == other.x_right
            && self.y_left == other.y_left
            && self.y_right == other.y_right
    }

    /// Copy of this grid with a different number of time levels.
    pub fn with_nt(&self, nt: usize) -> Result<GridSpec, MeshError> {
        GridSpec { nt, ..*self }.validated()
    }

    /// Copy of this grid with different spatial counts.
    pub fn with_spatial(&self, nx: usize, ny: usize) -> Result<GridSpec, MeshError> {
        GridSpec { nx, ny, ..*self }.validated()
    }

    fn validated(self) -> Result<Self, MeshError> {
        if !(self.x_right > self.x_left) || !self.x_left.is_finite() || !self.x_right.is_finite() {
            return Err(MeshError::InvalidBounds(format!(
                "x range [{}, {}]",
                self.x_left, self.x_right
            )));
        }
        if !(self.y_right > self.y_left) || !self.y_left.is_finite() || !self.y_right.is_finite() {
            return Err(MeshError::InvalidBounds(format!(
                "y range [{}, {}]",
                self.y_left, self.y_right
            )));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(MeshError::InvalidBounds(format!("t_final {}", self.t_final)));
        }
        if self.nx == 0 || self.ny == 0 || self.nt == 0 {
            return Err(MeshError::InvalidCount {
                nx: self.nx,
                ny: self.ny,
                nt: self.nt,
            });
        }
        Ok(self)
    }

    pub(crate) fn check_field(&self, len: usize) -> Result<(), MeshError> {
        if len != self.ns() {
            return Err(MeshError::ShapeMismatch {
                expected: self.ns(),
                got: len,
            });
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
pub fn make_grid(
    x_left: f64,
    x_right: f64,
    y_left: f64,
    y_right: f64,
    t_final: f64,
    nx: usize,
    ny: usize,
    nt: usize,
) -> Result<GridSpec, MeshError> {
    GridSpec {
        x_left,
        x_right,
        y_left,
        y_right,
        t_final,
        nx,
        ny,
        nt,
    }
    .validated()
}

/// Coarsen a grid by `cf_space` in both spatial directions and `cf_time` in
/// time, keeping the physical extents.
///
/// `cf_time` must divide `nt`. Spatial counts follow [`coarse_count`]: nested
/// whenever `nx + 1` is divisible by the factor, `nx / cf_space` otherwise.
pub fn coarsen_grid(
    grid: &GridSpec,
    cf_space: usize,
    cf_time: usize,
) -> Result<GridSpec, MeshError> {
    if cf_space == 0 || cf_time == 0 {
        return Err(MeshError::ZeroFactor);
    }
    if grid.nt % cf_time != 0 {
        return Err(MeshError::NotDivisible {
            count: grid.nt,
            factor: cf_time,
        });
    }
    let nx = coarse_count(grid.nx, cf_space)?;
    let ny = coarse_count(grid.ny, cf_space)?;
    GridSpec {
        nx,
        ny,
        nt: grid.nt / cf_time,
        ..*grid
    }
    .validated()
}

/// Lenient coarsening used for initial guesses: counts are divided and
/// rounded down but never drop below one node or one time level.
pub fn coarsen_grid_lenient(grid: &GridSpec, cf: usize) -> Result<GridSpec, MeshError> {
    if cf == 0 {
        return Err(MeshError::ZeroFactor);
    }
    let spatial = |n: usize| coarse_count(n, cf).unwrap_or(1).max(1);
    GridSpec {
        nx: spatial(grid.nx),
        ny: spatial(grid.ny),
        nt: (grid.nt / cf).max(1),
        ..*grid
    }
    .validated()
}

/// One spatial snapshot, row-major over interior nodes with the y index
/// outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn zeros(grid: &GridSpec) -> Self {
        Field(vec![0.0; grid.ns()])
    }

    pub fn constant(grid: &GridSpec, value: f64) -> Self {
        Field(vec![value; grid.ns()])
    }

    /// Samples `f(x, y)` on the interior nodes.
    pub fn sample(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.ns());
        for j in 1..=grid.ny {
            let y = grid.y(j);
            for i in 1..=grid.nx {
                values.push(f(grid.x(i), y));
            }
        }
        Field(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for Field {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(values: Vec<f64>) -> Self {
        Field(values)
    }
}

/// Initial field plus `nt` time levels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeSolution {
    pub initial: Field,
    pub levels: Vec<Field>,
}

impl SpaceTimeSolution {
    /// Field at time level `n`, with level 0 being the initial condition.
    pub fn level(&self, n: usize) -> &Field {
        if n == 0 {
            &self.initial
        } else {
            &self.levels[n - 1]
        }
    }

    pub fn conforms_to(&self, grid: &GridSpec) -> bool {
        self.levels.len() == grid.nt
            && self.initial.len() == grid.ns()
            && self.levels.iter().all(|f| f.len() == grid.ns())
    }

    /// Largest pointwise difference over all time levels.
    pub fn max_abs_diff(&self, other: &SpaceTimeSolution) -> f64 {
        self.levels
            .iter()
            .zip(&other.levels)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}
