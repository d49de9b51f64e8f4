//! Solvers for one all-at-once linear system
//! `A_n x^n - x^{n-1} = b^n`, `n = 1..nt`, `x^0 = 0`.

use crate::bandlinalg::{BandedLu, BandedMatrix};
use crate::discretize::{assemble_jacobian, newton_rhs};
use crate::mesh::{coarse_count, prolong_cubic_spline, restrict, GridSpec, SpaceTimeSolution};
use crate::model::ProblemSpec;
use crate::runtime::{MessageKind, Payload, Runtime, WorkerCtx};

use super::chain::{ChainFamily, Factored};
use super::{BlockLayout, NormKind, Result, SolverError};

const TAG_FINE: u64 = 0;
const TAG_COARSE: u64 = 1 << 32;
const TAG_INFLOW: u64 = 2 << 32;
const TAG_CORRECTION: u64 = 3 << 32;
const TAG_COARSE_STATE: u64 = 4 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: Vec<BandedMatrix>,
    pub rhs: Vec<Vec<f64>>,
}

impl LinearSystem {
    /// Newton system at `state`: `A_n = I + tau dF/du(u^n)`, `b^n = tau r^n`.
    pub fn assemble(p: &ProblemSpec, grid: &GridSpec, state: &SpaceTimeSolution) -> Result<Self> {
        let mut a = Vec::with_capacity(grid.nt);
        let mut rhs = Vec::with_capacity(grid.nt);
        for n in 1..=grid.nt {
            let (m, b) = fine_level(p, grid, state, n)?;
            a.push(m);
            rhs.push(b);
        }
        Ok(LinearSystem { a, rhs })
    }

    pub fn levels(&self) -> usize {
        self.a.len()
    }

    pub fn dim(&self) -> usize {
        self.a.first().map(|m| m.dim()).unwrap_or(0)
    }

    /// Reference solution by forward substitution over the levels.
    pub fn solve_marching(&self) -> Result<Vec<Vec<f64>>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.levels());
        for (a, b) in self.a.iter().zip(&self.rhs) {
            let mut rhs = b.clone();
            if let Some(prev) = out.last() {
                for (r, p) in rhs.iter_mut().zip(prev) {
                    *r += p;
                }
            }
            out.push(BandedLu::factor(a)?.solve(&rhs)?);
        }
        Ok(out)
    }
}

pub(crate) fn fine_level(
    p: &ProblemSpec,
    grid: &GridSpec,
    state: &SpaceTimeSolution,
    n: usize,
) -> Result<(BandedMatrix, Vec<f64>)> {
    let t = grid.t(n);
    let u = state.level(n);
    Ok((
        assemble_jacobian(p, grid, u, t, grid.tau())?,
        newton_rhs(p, grid, u, state.level(n - 1), t)?,
    ))
}

/// Result of a direct all-at-once solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOutcome {
    pub delta: Vec<Vec<f64>>,
    pub max_ops: u64,
}

fn check_workers(rt: &Runtime, nt: usize) -> Result<()> {
    if rt.num_workers() < nt {
        return Err(SolverError::Config(format!(
            "{} workers cannot own {nt} time levels",
            rt.num_workers()
        )));
    }
    Ok(())
}

fn collect_levels(outs: Vec<Option<(usize, Vec<f64>)>>, levels: usize) -> Vec<Vec<f64>> {
    let mut delta = vec![Vec::new(); levels];
    for (l, v) in outs.into_iter().flatten() {
        delta[l] = v;
    }
    delta
}

/// Decoupled solve through the prefix products of all `nt` levels, one
/// worker per level.
pub fn paradin_linear(rt: &mut Runtime, sys: &LinearSystem) -> Result<LinearOutcome> {
    let nt = sys.levels();
    check_workers(rt, nt)?;
    let jobs = vec![(0..nt).map(|l| (l, l)).collect::<Vec<_>>()];
    let fam = ChainFamily::new(&sys.a, &jobs, rt.num_workers(), TAG_FINE)?;
    let f = fam.factor(rt)?;
    fam.accumulate(rt, &f, &sys.rhs)?;
    let outs = rt.run_stage(|ctx| -> Result<Option<(usize, Vec<f64>)>> {
        let Some(l) = fam.owned_level(ctx.id()) else {
            return Ok(None);
        };
        let r = fam.take_rhs(ctx, l)?;
        Ok(Some((l, f.lus[l].solve(&r)?)))
    });
    let outs = finish(rt, outs)?;
    Ok(LinearOutcome {
        delta: collect_levels(outs, nt),
        max_ops: f.max_ops,
    })
}

/// Clears leftover messages on error so the runtime stays usable.
fn finish<T>(rt: &mut Runtime, r: Result<T>) -> Result<T> {
    if r.is_err() {
        rt.clear_mailboxes();
    }
    r
}

/// Stopping control for the iterative block solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterControl {
    /// Maximum number of sweeps (capped at `M`, where the methods are exact).
    pub cap: usize,
    /// Stop once the norm of the change between iterates drops below this.
    pub tol: f64,
    pub norm: NormKind,
    /// Keep the fine iterate of every sweep.
    pub record: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobiOutcome {
    pub delta: Vec<Vec<f64>>,
    pub sweeps: usize,
    pub history: Vec<Vec<Vec<f64>>>,
    pub max_ops: u64,
}

fn block_jobs(layout: &BlockLayout) -> Vec<Vec<(usize, usize)>> {
    (0..layout.num_blocks)
        .map(|m| layout.levels(m).map(|l| (l, l)).collect())
        .collect()
}

/// Caches the accumulated fine rhs at the level owners.
fn take_all_rhs(rt: &mut Runtime, fam: &ChainFamily, levels: usize) -> Result<Vec<Vec<f64>>> {
    let outs = rt.run_stage(|ctx| -> Result<Option<(usize, Vec<f64>)>> {
        match fam.owned_level(ctx.id()) {
            Some(l) => Ok(Some((l, fam.take_rhs(ctx, l)?))),
            None => Ok(None),
        }
    });
    Ok(collect_levels(finish(rt, outs)?, levels))
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn diff_norm(norm: NormKind, a: &[Vec<f64>], b: &[Vec<f64>], weight: f64) -> f64 {
    let parts: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| norm.contribution(&sub(x, y)))
        .collect();
    norm.combine(&parts, weight)
}

/// Block-Jacobi in time: every block is solved by ParaDIn with the coupling
/// to the previous block frozen from the last sweep (zero on sweep one).
/// `weight` is the cell weight of the change norm.
pub fn block_jacobi_linear(
    rt: &mut Runtime,
    sys: &LinearSystem,
    layout: &BlockLayout,
    ctrl: &IterControl,
    weight: f64,
) -> Result<JacobiOutcome> {
    let nt = sys.levels();
    if layout.nt() != nt {
        return Err(SolverError::InvalidLayout("layout does not match the system".into()));
    }
    check_workers(rt, nt)?;
    let fam = ChainFamily::new(&sys.a, &block_jobs(layout), rt.num_workers(), TAG_FINE)?;
    let f = fam.factor(rt)?;
    fam.accumulate(rt, &f, &sys.rhs)?;
    let rt_rhs = take_all_rhs(rt, &fam, nt)?;
    let cap = ctrl.cap.clamp(1, layout.num_blocks);
    let n = sys.dim();

    let mut prev: Option<Vec<Vec<f64>>> = None;
    let mut history = Vec::new();
    let mut sweeps = 0;
    for k in 1..=cap {
        sweeps = k;
        let outs = rt.run_stage(|ctx| -> Result<Option<(usize, Vec<f64>)>> {
            let Some(l) = fam.owned_level(ctx.id()) else {
                return Ok(None);
            };
            let (m, _) = layout.locate(l);
            let r = if m > 0 && k > 1 {
                add(&rt_rhs[l], &ctx.recv_vector(TAG_INFLOW)?)
            } else {
                rt_rhs[l].clone()
            };
            let x = f.lus[l].solve(&r)?;
            if l == layout.block_end(m) && m + 1 < layout.num_blocks && k < cap {
                for w in layout.levels(m + 1) {
                    ctx.send(w, MessageKind::CouplingVector, TAG_INFLOW, Payload::Vector(x.clone()))?;
                }
            }
            Ok(Some((l, x)))
        });
        let cur = collect_levels(finish(rt, outs)?, nt);
        debug_assert!(cur.iter().all(|v| v.len() == n));
        if ctrl.record {
            history.push(cur.clone());
        }
        let done = match &prev {
            Some(p) => diff_norm(ctrl.norm, &cur, p, weight) < ctrl.tol,
            None => false,
        };
        prev = Some(cur);
        if done {
            break;
        }
    }
    rt.clear_mailboxes();
    Ok(JacobiOutcome {
        delta: prev.expect("at least one sweep"),
        sweeps,
        history,
        max_ops: f.max_ops,
    })
}

/// How the Parareal coarse correction is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseKind {
    /// All coarse levels at once through their prefix products.
    ParaDIn,
    /// Classical sweep, one coarse interval after another.
    Sequential,
}

/// Fine system, coarse system and grid transfer for one Parareal solve.
#[derive(Debug, Clone)]
pub struct PararealSystems {
    pub fine: LinearSystem,
    /// `A^c_m = I + Dt dF/du(R u^{Jm})`, `b^c_m = Dt r(R u^{Jm}, R u^{J(m-1)})`.
    pub coarse: LinearSystem,
    pub layout: BlockLayout,
    pub fine_grid: GridSpec,
    /// Coarse propagator grid with `nt = M`.
    pub coarse_grid: GridSpec,
    pub coarsened: bool,
}

impl PararealSystems {
    pub fn coarse_grid(grid: &GridSpec, layout: &BlockLayout, cs: Option<usize>) -> Result<GridSpec> {
        let g = grid.with_nt(layout.num_blocks)?;
        match cs {
            Some(c) if c > 1 => Ok(g.with_spatial(coarse_count(grid.nx, c)?, coarse_count(grid.ny, c)?)?),
            Some(0) => Err(SolverError::Config("cs must be at least 1".into())),
            _ => Ok(g),
        }
    }

    pub fn assemble(
        p: &ProblemSpec,
        grid: &GridSpec,
        layout: &BlockLayout,
        state: &SpaceTimeSolution,
        cs: Option<usize>,
    ) -> Result<Self> {
        let fine = LinearSystem::assemble(p, grid, state)?;
        let coarse_grid = Self::coarse_grid(grid, layout, cs)?;
        let coarsened = coarse_grid.ns() != grid.ns() || cs.is_some_and(|c| c > 1);
        let mut a = Vec::with_capacity(layout.num_blocks);
        let mut rhs = Vec::with_capacity(layout.num_blocks);
        for m in 0..layout.num_blocks {
            let (am, bm) = coarse_level(p, grid, &coarse_grid, layout, state, m, coarsened)?;
            a.push(am);
            rhs.push(bm);
        }
        Ok(PararealSystems {
            fine,
            coarse: LinearSystem { a, rhs },
            layout: *layout,
            fine_grid: *grid,
            coarse_grid,
            coarsened,
        })
    }

    pub fn restrict(&self, v: &[f64]) -> Result<Vec<f64>> {
        transfer_restrict(v, &self.fine_grid, &self.coarse_grid, self.coarsened)
    }

    pub fn prolong(&self, v: &[f64]) -> Result<Vec<f64>> {
        transfer_prolong(v, &self.coarse_grid, &self.fine_grid, self.coarsened)
    }
}

fn transfer_restrict(v: &[f64], fine: &GridSpec, coarse: &GridSpec, on: bool) -> Result<Vec<f64>> {
    if on {
        Ok(restrict(v, fine, coarse)?.into_inner())
    } else {
        Ok(v.to_vec())
    }
}

fn transfer_prolong(v: &[f64], coarse: &GridSpec, fine: &GridSpec, on: bool) -> Result<Vec<f64>> {
    if on {
        // corrections vanish on the Dirichlet boundary
        Ok(prolong_cubic_spline(v, coarse, fine, |_, _| 0.0)?.into_inner())
    } else {
        Ok(v.to_vec())
    }
}

/// Coarse propagator matrix and rhs of block `m` (0-based).
pub(crate) fn coarse_level(
    p: &ProblemSpec,
    grid: &GridSpec,
    coarse_grid: &GridSpec,
    layout: &BlockLayout,
    state: &SpaceTimeSolution,
    m: usize,
    coarsened: bool,
) -> Result<(BandedMatrix, Vec<f64>)> {
    let end = layout.block_end(m) + 1;
    let start = end - layout.block_len;
    let t = grid.t(end);
    let u_end = transfer_restrict(state.level(end), grid, coarse_grid, coarsened)?;
    let u_start = transfer_restrict(state.level(start), grid, coarse_grid, coarsened)?;
    Ok((
        assemble_jacobian(p, coarse_grid, &u_end, t, coarse_grid.tau())?,
        newton_rhs(p, coarse_grid, &u_end, &u_start, t)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PararealOutcome {
    pub delta: Vec<Vec<f64>>,
    /// Fine sweeps performed.
    pub iters: usize,
    /// Norms of the change between consecutive coarse iterates.
    pub diffs: Vec<f64>,
    /// Fine iterate after each sweep when recording.
    pub history: Vec<Vec<Vec<f64>>>,
    pub max_ops: u64,
}

/// Per-block-end state shared between stages: coarse iterate and fine end value.
#[derive(Clone, Default)]
struct EndState {
    coarse: Vec<Vec<f64>>,
}

/// Two-level Parareal on the linear system. The fine propagator solves every
/// block with ParaDIn, seeded by the Parareal iterate at the previous block
/// end; the coarse correction is solved either with ParaDIn or sequentially.
pub fn parareal_linear(
    rt: &mut Runtime,
    sys: &PararealSystems,
    kind: CoarseKind,
    ctrl: &IterControl,
) -> Result<PararealOutcome> {
    let layout = sys.layout;
    let nt = sys.fine.levels();
    let big_m = layout.num_blocks;
    if layout.nt() != nt || sys.coarse.levels() != big_m {
        return Err(SolverError::InvalidLayout("layout does not match the systems".into()));
    }
    check_workers(rt, nt)?;
    let nw = rt.num_workers();
    let cap = ctrl.cap.clamp(1, big_m);
    let end = |m: usize| layout.block_end(m);

    let fine = ChainFamily::new(&sys.fine.a, &block_jobs(&layout), nw, TAG_FINE)?;
    let coarse_jobs: Vec<Vec<(usize, usize)>> = match kind {
        CoarseKind::ParaDIn => vec![(0..big_m).map(|m| (m, end(m))).collect()],
        CoarseKind::Sequential => (0..big_m).map(|m| vec![(m, end(m))]).collect(),
    };
    let coarse = ChainFamily::new(&sys.coarse.a, &coarse_jobs, nw, TAG_COARSE)?;
    let ff = fine.factor(rt)?;
    let cf = coarse.factor(rt)?;
    fine.accumulate(rt, &ff, &sys.fine.rhs)?;
    let fine_rhs = take_all_rhs(rt, &fine, nt)?;
    let max_ops = ff.max_ops.max(cf.max_ops);

    // coarse iterates c_k, indexed by block
    let mut state = EndState::default();
    let zero_fine = vec![0.0; sys.fine.dim()];
    if cap > 1 {
        let no_corr = vec![None; big_m];
        state.coarse = coarse_solve(rt, sys, &coarse, &cf, kind, &no_corr, None, &[])?;
    }

    let mut diffs = Vec::new();
    let mut history = Vec::new();
    let mut result = Vec::new();
    let mut iters = 0;
    for k in 1..=cap {
        iters = k;
        let last = k == cap;
        let cstate = &state;
        // fine sweep with inflow U^{m-1}_{k-1}
        let outs = rt.run_stage(|ctx| -> Result<Option<(usize, Vec<f64>)>> {
            let Some(l) = fine.owned_level(ctx.id()) else {
                return Ok(None);
            };
            let (m, _) = layout.locate(l);
            let r = if m > 0 {
                add(&fine_rhs[l], &ctx.recv_vector(TAG_INFLOW)?)
            } else {
                fine_rhs[l].clone()
            };
            let x = ff.lus[l].solve(&r)?;
            if l == end(m) && m + 1 < big_m && !last {
                // R f^{Jm}_k - c^m_{k-1} feeds coarse level m + 1
                let d = sub(&sys.restrict(&x)?, &cstate.coarse[m]);
                let targets = match kind {
                    CoarseKind::ParaDIn => coarse.job_workers(m + 1),
                    CoarseKind::Sequential => vec![coarse.owner(m + 1)],
                };
                for w in targets {
                    ctx.send(
                        w,
                        MessageKind::CouplingVector,
                        TAG_CORRECTION + (m + 1) as u64,
                        Payload::Vector(d.clone()),
                    )?;
                }
            }
            Ok(Some((l, x)))
        });
        let f_k = collect_levels(finish(rt, outs)?, nt);
        if ctrl.record {
            history.push(f_k.clone());
        }
        if last {
            result = f_k;
            break;
        }
        let ends: Vec<Vec<f64>> = (0..big_m).map(|m| f_k[end(m)].clone()).collect();
        let corr: Vec<Option<()>> = (0..big_m).map(|m| (m > 0).then_some(())).collect();
        let next = coarse_solve(rt, sys, &coarse, &cf, kind, &corr, Some(&state.coarse), &ends)?;
        let w = sys.coarse_grid.tau() * sys.coarse_grid.hx() * sys.coarse_grid.hy();
        let d = diff_norm(ctrl.norm, &next, &state.coarse, w);
        diffs.push(d);
        state.coarse = next;
        if !d.is_finite() || (k >= 4 && d > 10.0 * diffs[k - 4]) {
            rt.clear_mailboxes();
            return Err(SolverError::Divergence {
                stage: "parareal",
                iteration: k,
                norm: d,
            });
        }
        if d < ctrl.tol {
            result = f_k;
            break;
        }
    }
    rt.clear_mailboxes();
    let _ = zero_fine;
    Ok(PararealOutcome {
        delta: result,
        iters,
        diffs,
        history,
        max_ops,
    })
}

/// Coarse solve `A^c_m c^m - c^{m-1} = b^c_m`. With `prev` set this is the
/// correction step: `b^c_m = r^c_m + (R f^{J(m-1)} - c^{m-1}_{k-1})` for
/// `m >= 1`, the bracket arriving by message. Every block-end worker then
/// sends the next fine inflow to the following block: `I c^m_0` initially,
/// `I (c^m_k - c^m_{k-1}) + f^{Jm}_k` afterwards.
#[allow(clippy::too_many_arguments)]
fn coarse_solve(
    rt: &mut Runtime,
    sys: &PararealSystems,
    coarse: &ChainFamily,
    cf: &Factored,
    kind: CoarseKind,
    corrected: &[Option<()>],
    prev: Option<&Vec<Vec<f64>>>,
    fine_ends: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let layout = sys.layout;
    let big_m = layout.num_blocks;
    let send_inflow = |ctx: &mut WorkerCtx, m: usize, c: &[f64]| -> Result<()> {
        if m + 1 >= big_m {
            return Ok(());
        }
        let u = match prev {
            None => sys.prolong(c)?,
            Some(p) => add(&sys.prolong(&sub(c, &p[m]))?, &fine_ends[m]),
        };
        for w in layout.levels(m + 1) {
            ctx.send(w, MessageKind::CouplingVector, TAG_INFLOW, Payload::Vector(u.clone()))?;
        }
        Ok(())
    };
    let rhs_of = |ctx: &mut WorkerCtx, m: usize| -> Result<Vec<f64>> {
        if prev.is_some() && corrected[m].is_some() {
            Ok(add(
                &sys.coarse.rhs[m],
                &ctx.recv_vector(TAG_CORRECTION + m as u64)?,
            ))
        } else {
            Ok(sys.coarse.rhs[m].clone())
        }
    };

    match kind {
        CoarseKind::ParaDIn => {
            // every chain member forms all coarse rhs, then accumulates its rows
            let acc = rt.run_stage(|ctx| -> Result<()> {
                if coarse.owned_level(ctx.id()).is_none() {
                    return Ok(());
                }
                let all: Vec<Vec<f64>> = (0..big_m)
                    .map(|m| rhs_of(ctx, m))
                    .collect::<Result<_>>()?;
                let refs: Vec<&[f64]> = all.iter().map(|v| v.as_slice()).collect();
                coarse.send_rhs_rows(ctx, cf, &refs)
            });
            finish(rt, acc)?;
            let outs = rt.run_stage(|ctx| -> Result<Option<(usize, Vec<f64>)>> {
                let Some(m) = coarse.owned_level(ctx.id()) else {
                    return Ok(None);
                };
                let r = coarse.take_rhs(ctx, m)?;
                let c = cf.lus[m].solve(&r)?;
                send_inflow(ctx, m, &c)?;
                Ok(Some((m, c)))
            });
            Ok(collect_levels(finish(rt, outs)?, big_m))
        }
        CoarseKind::Sequential => {
            let mut out = vec![Vec::new(); big_m];
            for step in 0..big_m {
                let outs = rt.run_stage(|ctx| -> Result<Option<Vec<f64>>> {
                    if coarse.owned_level(ctx.id()) != Some(step) {
                        return Ok(None);
                    }
                    let mut b = rhs_of(ctx, step)?;
                    if step > 0 {
                        let c_prev = ctx.recv_vector(TAG_COARSE_STATE)?;
                        b = add(&b, &c_prev);
                    }
                    let c = cf.lus[step].solve(&b)?;
                    if step + 1 < big_m {
                        ctx.send(
                            coarse.owner(step + 1),
                            MessageKind::CouplingVector,
                            TAG_COARSE_STATE,
                            Payload::Vector(c.clone()),
                        )?;
                    }
                    send_inflow(ctx, step, &c)?;
                    Ok(Some(c))
                });
                let outs = finish(rt, outs)?;
                out[step] = outs.into_iter().flatten().next().expect("owner ran");
            }
            Ok(out)
        }
    }
}
