//! Global Newton iteration over all time levels, parameterised by the
//! linear solver used for each step.

use std::time::Instant;

use crate::bandlinalg::BandedMatrix;
use crate::mesh::{GridSpec, SpaceTimeSolution};
use crate::model::ProblemSpec;
use crate::runtime::Runtime;

use super::linear::{
    block_jacobi_linear, coarse_level, fine_level, paradin_linear, parareal_linear, CoarseKind,
    IterControl, LinearSystem, PararealSystems,
};
use super::{BlockLayout, Method, NewtonConfig, Result, SolveReport, SolverError};

#[derive(Clone, Copy)]
enum Inner {
    Direct,
    Jacobi(BlockLayout),
    Parareal(BlockLayout, CoarseKind, Option<usize>),
}

type LevelParts = (BandedMatrix, Vec<f64>);

/// Assembles the Newton system with one worker per time level; block-end
/// workers also build their coarse level when Parareal needs it.
fn assemble(
    rt: &mut Runtime,
    p: &ProblemSpec,
    grid: &GridSpec,
    state: &SpaceTimeSolution,
    coarse: Option<(&BlockLayout, &GridSpec, bool)>,
) -> Result<(LinearSystem, Option<LinearSystem>)> {
    let nt = grid.nt;
    if rt.num_workers() < nt {
        return Err(SolverError::Config(format!(
            "{} workers cannot own {nt} time levels",
            rt.num_workers()
        )));
    }
    let outs = rt.run_stage(|ctx| -> Result<Option<(LevelParts, Option<LevelParts>)>> {
        let w = ctx.id();
        if w >= nt {
            return Ok(None);
        }
        let fine = fine_level(p, grid, state, w + 1)?;
        let c = match coarse {
            Some((layout, cgrid, on)) => {
                let (m, _) = layout.locate(w);
                if w == layout.block_end(m) {
                    Some(coarse_level(p, grid, cgrid, layout, state, m, on)?)
                } else {
                    None
                }
            }
            None => None,
        };
        Ok(Some((fine, c)))
    })?;
    let mut fine = LinearSystem { a: Vec::with_capacity(nt), rhs: Vec::with_capacity(nt) };
    let mut cs = LinearSystem { a: Vec::new(), rhs: Vec::new() };
    for (f, c) in outs.into_iter().flatten() {
        fine.a.push(f.0);
        fine.rhs.push(f.1);
        if let Some((a, b)) = c {
            cs.a.push(a);
            cs.rhs.push(b);
        }
    }
    Ok((fine, coarse.map(|_| cs)))
}

#[allow(clippy::too_many_arguments)]
fn all_at_once(
    method: Method,
    p: &ProblemSpec,
    grid: &GridSpec,
    cfg: &NewtonConfig,
    inner: Inner,
    mut state: SpaceTimeSolution,
    rt: &mut Runtime,
) -> Result<SolveReport> {
    let start = Instant::now();
    let cfg = cfg.validated()?;
    if !state.conforms_to(grid) {
        return Err(SolverError::Config("initial guess does not match the grid".into()));
    }
    let coarse_setup = match inner {
        Inner::Parareal(layout, _, cs) => {
            layout.check_regime(grid.ns());
            let cgrid = PararealSystems::coarse_grid(grid, &layout, cs)?;
            let on = cgrid.ns() != grid.ns() || cs.is_some_and(|c| c > 1);
            Some((layout, cgrid, on))
        }
        Inner::Jacobi(layout) => {
            layout.check_regime(grid.ns());
            None
        }
        Inner::Direct => None,
    };
    let weight = grid.tau() * grid.hx() * grid.hy();

    let mut norms: Vec<f64> = Vec::new();
    let mut pr_iters = Vec::new();
    let mut jac_sweeps = Vec::new();
    let mut max_ops = 0;
    loop {
        let iter = norms.len() + 1;
        let (fine, coarse) = assemble(
            rt,
            p,
            grid,
            &state,
            coarse_setup.as_ref().map(|(l, g, on)| (l, g, *on)),
        )?;
        let delta = match inner {
            Inner::Direct => {
                let out = paradin_linear(rt, &fine)?;
                max_ops = max_ops.max(out.max_ops);
                out.delta
            }
            Inner::Jacobi(layout) => {
                let ctrl = IterControl {
                    cap: cfg.iteration_cap(layout.num_blocks),
                    tol: cfg.eps_parareal(),
                    norm: cfg.norm,
                    record: false,
                };
                let out = block_jacobi_linear(rt, &fine, &layout, &ctrl, weight)?;
                max_ops = max_ops.max(out.max_ops);
                jac_sweeps.push(out.sweeps);
                out.delta
            }
            Inner::Parareal(layout, kind, _) => {
                let (_, cgrid, on) = coarse_setup.expect("coarse setup");
                let sys = PararealSystems {
                    fine,
                    coarse: coarse.expect("coarse system"),
                    layout,
                    fine_grid: *grid,
                    coarse_grid: cgrid,
                    coarsened: on,
                };
                let ctrl = IterControl {
                    cap: cfg.iteration_cap(layout.num_blocks),
                    tol: cfg.eps_parareal(),
                    norm: cfg.norm,
                    record: false,
                };
                let out = parareal_linear(rt, &sys, kind, &ctrl)?;
                max_ops = max_ops.max(out.max_ops);
                pr_iters.push(out.iters);
                out.delta
            }
        };
        for (level, d) in state.levels.iter_mut().zip(&delta) {
            for (u, du) in level.iter_mut().zip(d) {
                *u += du;
            }
        }
        let norm = cfg.norm.space_time(grid, &delta);
        norms.push(norm);
        if !norm.is_finite() || (iter >= 4 && norm > 10.0 * norms[iter - 4]) {
            return Err(SolverError::Divergence {
                stage: "Newton",
                iteration: iter,
                norm,
            });
        }
        if norm < cfg.eps_newton {
            break;
        }
        if iter >= cfg.max_newton {
            return Err(SolverError::NewtonCap { iters: iter, norm });
        }
    }
    Ok(SolveReport {
        method,
        mode: rt.mode(),
        solution: state,
        newton_iters: norms.len(),
        final_update_norm: *norms.last().expect("one iteration"),
        update_norms: norms,
        parareal_iters_per_newton: pr_iters,
        jacobi_sweeps_per_newton: jac_sweeps,
        wall_time: start.elapsed().as_secs_f64(),
        max_chain_ops: max_ops,
    })
}

/// Newton over all levels, each step solved directly by ParaDIn.
pub fn paradin_solve(
    p: &ProblemSpec,
    grid: &GridSpec,
    cfg: &NewtonConfig,
    guess: SpaceTimeSolution,
    rt: &mut Runtime,
) -> Result<SolveReport> {
    all_at_once(Method::ParaDIn, p, grid, cfg, Inner::Direct, guess, rt)
}

/// Newton over all levels, each step solved by block-Jacobi sweeps.
pub fn block_jacobi_solve(
    p: &ProblemSpec,
    grid: &GridSpec,
    cfg: &NewtonConfig,
    layout: BlockLayout,
    guess: SpaceTimeSolution,
    rt: &mut Runtime,
) -> Result<SolveReport> {
    all_at_once(Method::BlockJacobi, p, grid, cfg, Inner::Jacobi(layout), guess, rt)
}

/// Newton with linear Parareal whose coarse correction is swept sequentially.
pub fn parareal_linear_baseline(
    p: &ProblemSpec,
    grid: &GridSpec,
    cfg: &NewtonConfig,
    layout: BlockLayout,
    guess: SpaceTimeSolution,
    cs: Option<usize>,
    rt: &mut Runtime,
) -> Result<SolveReport> {
    let inner = Inner::Parareal(layout, CoarseKind::Sequential, cs);
    all_at_once(Method::PararealBaseline, p, grid, cfg, inner, guess, rt)
}

/// Newton with linear Parareal, fine and coarse propagators both ParaDIn.
pub fn paradin_parareal_solve(
    p: &ProblemSpec,
    grid: &GridSpec,
    cfg: &NewtonConfig,
    layout: BlockLayout,
    guess: SpaceTimeSolution,
    cs: Option<usize>,
    rt: &mut Runtime,
) -> Result<SolveReport> {
    let inner = Inner::Parareal(layout, CoarseKind::ParaDIn, cs);
    all_at_once(Method::ParaDInParareal, p, grid, cfg, inner, guess, rt)
}
