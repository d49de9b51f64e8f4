//! Golden checks: reference error tables, method equivalence and the
//! finite termination of block-Jacobi.

use std::fmt;
use std::str::FromStr;

use crate::mesh::{make_grid, SpaceTimeSolution};
use crate::model::{ProblemKind, ProblemSpec};
use crate::runtime::Runtime;
use crate::solvers::linear::{block_jacobi_linear, IterControl, LinearSystem};
use crate::solvers::{BlockLayout, Method, NormKind, SolverError};

use super::{compare_methods, run_experiment, ExperimentConfig};

/// Sequential heat L2 errors and rates on the table grids.
pub const HEAT_L2: [f64; 5] = [2.40e-5, 8.50e-6, 2.65e-6, 7.35e-7, 1.88e-7];
pub const HEAT_RATES: [f64; 4] = [1.50, 1.68, 1.85, 1.97];
/// Sequential Burgers L1 errors and rates on the table grids.
pub const BURGERS_L1: [f64; 5] = [3.00e-2, 2.12e-2, 1.33e-2, 5.96e-3, 2.55e-3];
pub const BURGERS_RATES: [f64; 4] = [0.50, 0.67, 1.16, 1.22];

pub const ERROR_FACTOR: f64 = 2.0;
pub const RATE_TOL: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Table1,
    Table4,
    Equivalence,
    Proposition1,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "table1" => Ok(Suite::Table1),
            "table4" => Ok(Suite::Table4),
            "equivalence" => Ok(Suite::Equivalence),
            "proposition1" => Ok(Suite::Proposition1),
            other => Err(format!("unknown suite '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.ok)
    }

    fn push(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            ok,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.ok { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Runs a suite. `grids` limits the refinement suites (default 3 for heat,
/// 3 for Burgers).
pub fn run_suite(suite: Suite, grids: Option<usize>) -> Result<SuiteReport, SolverError> {
    match suite {
        Suite::Table1 => Ok(table_check(ProblemKind::NonlinearHeat, grids.unwrap_or(3))),
        Suite::Table4 => Ok(table_check(ProblemKind::Burgers, grids.unwrap_or(3))),
        Suite::Equivalence => equivalence(),
        Suite::Proposition1 => block_jacobi_termination(),
    }
}

/// Sequential errors within a factor of two of the references and rates
/// within 0.15.
pub fn table_check(kind: ProblemKind, count: usize) -> SuiteReport {
    let (refs, rate_refs, norm) = match kind {
        ProblemKind::NonlinearHeat => (&HEAT_L2, &HEAT_RATES, NormKind::L2),
        ProblemKind::Burgers => (&BURGERS_L1, &BURGERS_RATES, NormKind::L1),
    };
    let count = count.min(refs.len());
    let mut cfg = ExperimentConfig::table(kind, count, vec![Method::Sequential]);
    cfg.timing = false;
    let report = run_experiment(&cfg);
    let mut out = SuiteReport::default();
    for (row, &target) in report.rows.iter().zip(refs) {
        let e = row.norms.get(norm);
        let ok = row.ok() && e <= ERROR_FACTOR * target && e >= target / ERROR_FACTOR;
        let detail = match &row.error {
            Some(msg) => msg.clone(),
            None => format!("{norm:?} = {e:.3e}, reference {target:.2e}"),
        };
        out.push(format!("{} {} error", kind.name(), row.label), ok, detail);
    }
    for (r, &target) in report.rates.iter().zip(rate_refs) {
        let rate = r.rates.get(norm);
        out.push(
            format!("{} rate {} -> {}", kind.name(), r.coarse, r.fine),
            (rate - target).abs() <= RATE_TOL,
            format!("{rate:.3}, reference {target:.2}"),
        );
    }
    out
}

/// Sequential, ParaDIn and ParaDIn-Parareal agree pointwise to `10 eps_newton`.
pub fn equivalence() -> Result<SuiteReport, SolverError> {
    let mut out = SuiteReport::default();
    for (kind, count) in [(ProblemKind::NonlinearHeat, 3), (ProblemKind::Burgers, 2)] {
        let mut cfg = ExperimentConfig::table(
            kind,
            count,
            vec![Method::ParaDIn, Method::ParaDInParareal],
        );
        cfg.timing = false;
        for c in compare_methods(&cfg, Method::Sequential)? {
            out.push(
                format!("{} {} {} vs sequential", kind.name(), c.label, c.method.name()),
                c.ok(),
                format!("max diff {:.3e}, tolerance {:.1e}", c.max_diff, c.tolerance),
            );
        }
    }
    Ok(out)
}

/// The heat Newton system at the frozen-in-time guess `u^n = u^0`.
pub fn heat_linear_system(nt: usize, n: usize) -> Result<LinearSystem, SolverError> {
    let p = ProblemSpec::heat();
    let (x0, x1, y0, y1) = ProblemKind::NonlinearHeat.domain();
    let g = make_grid(x0, x1, y0, y1, 1.0, n, n, nt)?;
    let initial = p.initial_field(&g)?;
    let state = SpaceTimeSolution {
        levels: vec![initial.clone(); nt],
        initial,
    };
    LinearSystem::assemble(&p, &g, &state)
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Block-Jacobi reaches the direct solution in exactly `M` sweeps and not
/// before, on a 16-level heat system with 2x2 and 4x4 unknowns.
pub fn block_jacobi_termination() -> Result<SuiteReport, SolverError> {
    let mut out = SuiteReport::default();
    for n in [2, 4] {
        let sys = heat_linear_system(16, n)?;
        let direct = sys.solve_marching()?;
        let scale = direct.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for m in [2, 4, 8] {
            let layout = BlockLayout::new(16, m)?;
            let mut rt = Runtime::emulated(16)?;
            let ctrl = IterControl {
                cap: m,
                tol: 0.0,
                norm: NormKind::Linf,
                record: true,
            };
            let res = block_jacobi_linear(&mut rt, &sys, &layout, &ctrl, 1.0)?;
            let last = max_abs_diff(&res.history[m - 1], &direct);
            let before = max_abs_diff(&res.history[m - 2], &direct);
            out.push(
                format!("16 levels, {n}x{n} unknowns, M={m}: exact after M sweeps"),
                res.sweeps == m && last <= 1e-12 * scale,
                format!("difference {last:.2e} (solution scale {scale:.2e})"),
            );
            out.push(
                format!("16 levels, {n}x{n} unknowns, M={m}: not exact after M-1"),
                before > 1e-8,
                format!("difference {before:.2e}"),
            );
        }
    }
    Ok(out)
}
