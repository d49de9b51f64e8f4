use std::cell::Cell;
use std::time::Instant;

use crate::bandlinalg::BandedLu;
use crate::discretize::{assemble_jacobian, newton_rhs};
use crate::mesh::{
    coarsen_grid_lenient, natural_spline, prolong_cubic_spline, Field, GridSpec,
    SpaceTimeSolution,
};
use crate::model::ProblemSpec;
use crate::runtime::Mode;

use super::{Method, NewtonConfig, Result, SolveReport, SolverError};

/// Backward Euler marched level by level, each level solved by Newton with
/// the spatial update norm as stopping test.
pub fn sequential_bdf1(p: &ProblemSpec, grid: &GridSpec, cfg: &NewtonConfig) -> Result<SolveReport> {
    let start = Instant::now();
    let initial = p.initial_field(grid)?;
    let mut levels: Vec<Field> = Vec::with_capacity(grid.nt);
    let mut max_iters = 0;
    let mut last_norm = 0.0;
    let tau = grid.tau();
    for n in 1..=grid.nt {
        let prev = levels.last().unwrap_or(&initial).clone();
        let t = grid.t(n);
        let mut u = prev.clone();
        let mut iters = 0;
        loop {
            iters += 1;
            let a = assemble_jacobian(p, grid, &u, t, tau)?;
            let b = newton_rhs(p, grid, &u, &prev, t)?;
            let du = BandedLu::factor_owned(a)?.solve(&b)?;
            for (x, d) in u.iter_mut().zip(&du) {
                *x += d;
            }
            last_norm = cfg.norm.spatial(grid, &du);
            if !last_norm.is_finite() {
                return Err(SolverError::Divergence {
                    stage: "sequential Newton",
                    iteration: iters,
                    norm: last_norm,
                });
            }
            if last_norm < cfg.eps_newton {
                break;
            }
            if iters >= cfg.max_newton {
                return Err(SolverError::NewtonCap {
                    iters,
                    norm: last_norm,
                });
            }
        }
        max_iters = max_iters.max(iters);
        levels.push(u);
    }
    Ok(SolveReport {
        method: Method::Sequential,
        mode: Mode::Emulated,
        solution: SpaceTimeSolution { initial, levels },
        newton_iters: max_iters,
        update_norms: Vec::new(),
        parareal_iters_per_newton: Vec::new(),
        jacobi_sweeps_per_newton: Vec::new(),
        final_update_norm: last_norm,
        wall_time: start.elapsed().as_secs_f64(),
        max_chain_ops: 0,
    })
}

/// Sequential solve on a grid coarsened by `cf` in space and time, prolonged
/// by cubic splines in space and then in time. Level 0 is the exact initial
/// field.
pub fn build_initial_guess(
    p: &ProblemSpec,
    grid: &GridSpec,
    cf: usize,
    cfg: &NewtonConfig,
) -> Result<SpaceTimeSolution> {
    if cf == 0 {
        return Err(SolverError::Config("cf must be at least 1".into()));
    }
    if cf == 1 {
        return Ok(sequential_bdf1(p, grid, cfg)?.solution);
    }
    let coarse = coarsen_grid_lenient(grid, cf)?;
    let coarse_sol = sequential_bdf1(p, &coarse, cfg)?.solution;

    // spatial prolongation of every coarse level, boundary data as end knots
    let mut knots = vec![0.0];
    let mut snapshots = vec![p.initial_field(grid)?];
    for n in 1..=coarse.nt {
        let t = coarse.t(n);
        knots.push(t);
        let err = Cell::new(None);
        let f = prolong_cubic_spline(coarse_sol.level(n), &coarse, grid, |x, y| {
            p.exact_solution(x, y, t).unwrap_or_else(|e| {
                err.set(Some(e));
                f64::NAN
            })
        })?;
        if let Some(e) = err.take() {
            return Err(e.into());
        }
        snapshots.push(f);
    }

    // cubic spline in time per spatial node
    let ns = grid.ns();
    let mut levels = vec![Field(vec![0.0; ns]); grid.nt];
    let mut vals = vec![0.0; knots.len()];
    for k in 0..ns {
        for (v, s) in vals.iter_mut().zip(&snapshots) {
            *v = s[k];
        }
        let spline = natural_spline(&knots, &vals)?;
        for (n, level) in levels.iter_mut().enumerate() {
            level[k] = spline.eval(grid.t(n + 1));
        }
    }
    Ok(SpaceTimeSolution {
        initial: snapshots.swap_remove(0),
        levels,
    })
}
