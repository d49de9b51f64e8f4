//! Time integrators for the BDF1 system, from plain time marching to the
//! combined ParaDIn-Parareal method.
//!
//! All-at-once methods run a global Newton iteration over every time level.
//! Each Newton step solves the block-bidiagonal system
//! `A_n du^n - du^{n-1} = tau r^n`, `n = 1..nt`, with one of the linear
//! solvers in [`linear`].

mod chain;
pub mod linear;
mod newton;
mod sequential;

use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::bandlinalg::LinalgError;
use crate::discretize::DiscretizeError;
use crate::mesh::{GridSpec, MeshError, SpaceTimeSolution};
use crate::model::{ModelError, ProblemKind, ProblemSpec};
use crate::runtime::{reduce_norm, Mode, Runtime, RuntimeError};

pub use linear::{
    block_jacobi_linear, paradin_linear, parareal_linear, CoarseKind, JacobiOutcome,
    LinearSystem, PararealOutcome, PararealSystems,
};
pub use newton::{
    block_jacobi_solve, paradin_parareal_solve, paradin_solve, parareal_linear_baseline,
};
pub use sequential::{build_initial_guess, sequential_bdf1};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(
        "prefix product at level {level} could not be factored ({source}); \
         try block-jacobi or paradin-parareal with more blocks"
    )]
    IllConditioned { level: usize, source: LinalgError },
    #[error("Newton did not converge in {iters} iterations (last update norm {norm:e})")]
    NewtonCap { iters: usize, norm: f64 },
    #[error("{stage} iteration diverged at iteration {iteration} (norm {norm:e})")]
    Divergence {
        stage: &'static str,
        iteration: usize,
        norm: f64,
    },
    #[error("invalid block layout: {0}")]
    InvalidLayout(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl From<ModelError> for SolverError {
    fn from(e: ModelError) -> Self {
        SolverError::Discretize(e.into())
    }
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// Discrete norm used for stopping tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

impl FromStr for NormKind {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Ok(NormKind::L1),
            "l2" => Ok(NormKind::L2),
            "linf" | "max" => Ok(NormKind::Linf),
            other => Err(SolverError::Config(format!("unknown norm '{other}'"))),
        }
    }
}

impl NormKind {
    /// Unweighted per-vector contribution: `sum |v|`, `sum v^2` or `max |v|`.
    pub fn contribution(self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
            NormKind::L2 => v.iter().map(|x| x * x).sum(),
            NormKind::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// Combines contributions in ascending order with cell weight `w`.
    pub fn combine(self, parts: &[f64], w: f64) -> f64 {
        match self {
            NormKind::L1 => w * reduce_norm(parts),
            NormKind::L2 => (w * reduce_norm(parts)).sqrt(),
            NormKind::Linf => parts.iter().fold(0.0, |m, &x| if x > m || x.is_nan() { x } else { m }),
        }
    }

    /// Norm of one spatial field with weight `hx hy`.
    pub fn spatial(self, grid: &GridSpec, v: &[f64]) -> f64 {
        self.combine(&[self.contribution(v)], grid.hx() * grid.hy())
    }

    /// Space-time norm over levels `1..nt` with weight `tau hx hy`.
    pub fn space_time<V: AsRef<[f64]>>(self, grid: &GridSpec, levels: &[V]) -> f64 {
        let parts: Vec<f64> = levels.iter().map(|v| self.contribution(v.as_ref())).collect();
        self.combine(&parts, grid.tau() * grid.hx() * grid.hy())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub eps_newton: f64,
    pub max_newton: usize,
    /// `C_sf` in `eps_parareal = C_sf * eps_newton`.
    pub safety_factor: f64,
    /// Cap on Parareal (or block-Jacobi) iterations; `None` means `M`.
    pub max_parareal: Option<usize>,
    pub norm: NormKind,
}

impl NewtonConfig {
    pub fn for_problem(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::NonlinearHeat => NewtonConfig {
                eps_newton: 1e-8,
                max_newton: 20,
                safety_factor: 1e-2,
                max_parareal: None,
                norm: NormKind::L2,
            },
            ProblemKind::Burgers => NewtonConfig {
                eps_newton: 1e-3,
                max_newton: 20,
                safety_factor: 1e-2,
                max_parareal: None,
                norm: NormKind::L1,
            },
        }
    }

    pub fn eps_parareal(&self) -> f64 {
        self.safety_factor * self.eps_newton
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.eps_newton > 0.0) {
            return Err(SolverError::Config("eps_newton must be positive".into()));
        }
        if !(self.safety_factor > 0.0 && self.safety_factor <= 1.0) {
            return Err(SolverError::Config("safety_factor must be in (0, 1]".into()));
        }
        if self.max_newton == 0 || self.max_parareal == Some(0) {
            return Err(SolverError::Config("iteration caps must be positive".into()));
        }
        Ok(self)
    }

    pub(crate) fn iteration_cap(&self, blocks: usize) -> usize {
        self.max_parareal.unwrap_or(blocks).min(blocks).max(1)
    }
}

/// Partition of the `nt` time levels into `M` blocks of `J` levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub num_blocks: usize,
    pub block_len: usize,
}

impl BlockLayout {
    pub fn new(nt: usize, num_blocks: usize) -> Result<Self> {
        if num_blocks == 0 || nt % num_blocks != 0 {
            return Err(SolverError::InvalidLayout(format!(
                "{num_blocks} blocks do not divide {nt} time levels"
            )));
        }
        Ok(BlockLayout {
            num_blocks,
            block_len: nt / num_blocks,
        })
    }

    pub fn nt(&self) -> usize {
        self.num_blocks * self.block_len
    }

    /// `(block, offset)` of 0-based level index `n`.
    pub fn locate(&self, n: usize) -> (usize, usize) {
        (n / self.block_len, n % self.block_len)
    }

    /// 0-based level indices of block `m`.
    pub fn levels(&self, m: usize) -> std::ops::Range<usize> {
        m * self.block_len..(m + 1) * self.block_len
    }

    /// 0-based index of the last level of block `m`.
    pub fn block_end(&self, m: usize) -> usize {
        (m + 1) * self.block_len - 1
    }

    /// Logs when `M` or `J` leaves the `sqrt(ns)` regime.
    pub fn check_regime(&self, ns: usize) {
        let bound = (ns as f64).sqrt();
        if self.num_blocks as f64 >= bound || self.block_len as f64 >= bound {
            log::warn!(
                "layout M={} J={} is outside the sqrt(ns)={bound:.1} regime",
                self.num_blocks,
                self.block_len
            );
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sequential,
    ParaDIn,
    BlockJacobi,
    PararealBaseline,
    ParaDInParareal,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sequential => "sequential",
            Method::ParaDIn => "paradin",
            Method::BlockJacobi => "block_jacobi",
            Method::PararealBaseline => "parareal_baseline",
            Method::ParaDInParareal => "paradin_parareal",
        }
    }

    pub fn all() -> [Method; 5] {
        [
            Method::Sequential,
            Method::ParaDIn,
            Method::BlockJacobi,
            Method::PararealBaseline,
            Method::ParaDInParareal,
        ]
    }

    pub fn uses_blocks(self) -> bool {
        matches!(
            self,
            Method::BlockJacobi | Method::PararealBaseline | Method::ParaDInParareal
        )
    }
}

impl FromStr for Method {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::all()
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| SolverError::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub method: Method,
    pub mode: Mode,
    pub solution: SpaceTimeSolution,
    /// All-at-once methods: global Newton iterations. Sequential marching:
    /// the largest per-level count.
    pub newton_iters: usize,
    pub update_norms: Vec<f64>,
    pub parareal_iters_per_newton: Vec<usize>,
    pub jacobi_sweeps_per_newton: Vec<usize>,
    pub final_update_norm: f64,
    pub wall_time: f64,
    /// Largest multiply-add count of one worker in one product-chain stage.
    pub max_chain_ops: u64,
}

impl SolveReport {
    pub fn parareal_iters(&self) -> usize {
        self.parareal_iters_per_newton.iter().copied().max().unwrap_or(0)
    }

    pub fn jacobi_iters(&self) -> usize {
        self.jacobi_sweeps_per_newton.iter().copied().max().unwrap_or(0)
    }
}

/// Everything a method needs besides problem and grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOptions {
    pub method: Method,
    pub newton: NewtonConfig,
    /// Number of blocks `M` (block methods only).
    pub blocks: usize,
    /// Space-time coarsening of the initial guess.
    pub cf: usize,
    /// Spatial coarsening of the Parareal coarse propagator.
    pub cs: Option<usize>,
}

/// Builds the initial guess when needed and runs the selected method.
pub fn solve(
    p: &ProblemSpec,
    grid: &GridSpec,
    opts: &MethodOptions,
    rt: &mut Runtime,
) -> Result<SolveReport> {
    let cfg = opts.newton.validated()?;
    if opts.method == Method::Sequential {
        return sequential_bdf1(p, grid, &cfg);
    }
    let start = Instant::now();
    let guess = build_initial_guess(p, grid, opts.cf, &cfg)?;
    let guess_time = start.elapsed().as_secs_f64();
    let mut report = solve_from_guess(p, grid, opts, guess, rt)?;
    report.wall_time += guess_time;
    Ok(report)
}

/// Runs an all-at-once method from a given initial guess. Sequential
/// marching ignores the guess.
pub fn solve_from_guess(
    p: &ProblemSpec,
    grid: &GridSpec,
    opts: &MethodOptions,
    guess: SpaceTimeSolution,
    rt: &mut Runtime,
) -> Result<SolveReport> {
    let cfg = opts.newton.validated()?;
    match opts.method {
        Method::Sequential => sequential_bdf1(p, grid, &cfg),
        Method::ParaDIn => paradin_solve(p, grid, &cfg, guess, rt),
        m => {
            let layout = BlockLayout::new(grid.nt, opts.blocks)?;
            match m {
                Method::BlockJacobi => block_jacobi_solve(p, grid, &cfg, layout, guess, rt),
                Method::PararealBaseline => {
                    parareal_linear_baseline(p, grid, &cfg, layout, guess, opts.cs, rt)
                }
                _ => paradin_parareal_solve(p, grid, &cfg, layout, guess, opts.cs, rt),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_grid;

    #[test]
    fn weighted_norms_of_a_constant() {
        // unit space-time measure: hx = hy = 0.5, tau = 0.25, 4 levels of 1 node
        let g = make_grid(0.0, 1.0, 0.0, 1.0, 1.0, 1, 1, 4).unwrap();
        let w = g.tau() * g.hx() * g.hy();
        let levels = vec![vec![3.0]; 4];
        let c = 3.0 * (4.0 * w);
        assert!((NormKind::L1.space_time(&g, &levels) - c).abs() < 1e-15);
        assert!((NormKind::L2.space_time(&g, &levels) - 3.0 * (4.0 * w).sqrt()).abs() < 1e-15);
        assert_eq!(NormKind::Linf.space_time(&g, &levels), 3.0);
    }

    #[test]
    fn layout_mapping() {
        let l = BlockLayout::new(12, 3).unwrap();
        assert_eq!(l.block_len, 4);
        assert_eq!(l.locate(5), (1, 1));
        assert_eq!(l.levels(2), 8..12);
        assert_eq!(l.block_end(0), 3);
        assert!(BlockLayout::new(10, 3).is_err());
        assert!(BlockLayout::new(10, 0).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::all() {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("paradin-parareal".parse::<Method>().unwrap(), Method::ParaDInParareal);
        assert!("mgrit".parse::<Method>().is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let h = NewtonConfig::for_problem(ProblemKind::NonlinearHeat);
        assert_eq!(h.eps_newton, 1e-8);
        assert!((h.eps_parareal() - 1e-10).abs() < 1e-25);
        assert_eq!(h.iteration_cap(4), 4);
        let b = NewtonConfig::for_problem(ProblemKind::Burgers);
        assert_eq!((b.eps_newton, b.norm), (1e-3, NormKind::L1));
        assert!(NewtonConfig {
            safety_factor: 2.0,
            ..h
        }
        .validated()
        .is_err());
        assert!(NewtonConfig {
            eps_newton: 0.0,
            ..h
        }
        .validated()
        .is_err());
    }
}
