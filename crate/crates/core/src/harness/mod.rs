//! Experiment driver: error norms, the speedup model, grid-refinement runs,
//! CSV reports and the golden checks behind `paradin verify`.

pub mod config;
pub mod verify;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{
    default_blocks, default_cf, table_grids, BlocksSetting, ConfigError, ExperimentConfig,
    GridLabel, NodeCount,
};

use crate::mesh::{GridSpec, SpaceTimeSolution};
use crate::model::ProblemSpec;
use crate::runtime::{Runtime, WorkerTopology};
use crate::solvers::{
    build_initial_guess, sequential_bdf1, solve_from_guess, Method, MethodOptions, NormKind, SolveReport,
    SolverError,
};

pub const CSV_HEADER: &str =
    "problem,nt,nx,ny,method,M,cf,cs,L1,L2,Linf,newton_iters,parareal_iters,jacobi_iters,wall_s,mode";

pub const RATES_HEADER: &str = "problem,method,grid_coarse,grid_fine,rate_L1,rate_L2,rate_Linf";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl ErrorNorms {
    pub fn get(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::L1 => self.l1,
            NormKind::L2 => self.l2,
            NormKind::Linf => self.linf,
        }
    }

    fn nan() -> Self {
        ErrorNorms {
            l1: f64::NAN,
            l2: f64::NAN,
            linf: f64::NAN,
        }
    }
}

/// Space-time error norms against the exact solution over levels `1..nt`.
pub fn error_norms(
    sol: &SpaceTimeSolution,
    p: &ProblemSpec,
    grid: &GridSpec,
) -> Result<ErrorNorms, SolverError> {
    if !sol.conforms_to(grid) {
        return Err(SolverError::Config("solution does not match the grid".into()));
    }
    let mut errors = Vec::with_capacity(grid.nt);
    for n in 1..=grid.nt {
        let exact = p.exact_field(grid, grid.t(n))?;
        errors.push(
            sol.level(n)
                .iter()
                .zip(exact.iter())
                .map(|(u, e)| u - e)
                .collect::<Vec<f64>>(),
        );
    }
    Ok(ErrorNorms {
        l1: NormKind::L1.space_time(grid, &errors),
        l2: NormKind::L2.space_time(grid, &errors),
        linf: NormKind::Linf.space_time(grid, &errors),
    })
}

/// Observed order between two successive grids.
pub fn convergence_rate(e_coarse: f64, e_fine: f64) -> f64 {
    (e_coarse / e_fine).log2()
}

/// Parameters of the closed-form speedup estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupModel {
    pub nt: f64,
    pub cf: f64,
    /// Cost exponent of a direct solve in the number of unknowns per level.
    pub p: f64,
    pub k_p: f64,
    pub cs: f64,
    /// Spatial dimensions.
    pub d: f64,
}

impl SpeedupModel {
    pub fn new(nt: usize, cf: usize, k_p: usize) -> Self {
        SpeedupModel {
            nt: nt as f64,
            cf: cf as f64,
            p: 3.0,
            k_p: k_p as f64,
            cs: 1.0,
            d: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedupVariant {
    ParaDIn,
    Combined,
    CombinedCoarsened,
}

/// Model speedup over sequential time marching.
pub fn predict_speedup(m: &SpeedupModel, variant: SpeedupVariant) -> f64 {
    let guess = m.nt / m.cf.powf(m.p);
    let rest = match variant {
        SpeedupVariant::ParaDIn => 1.0,
        SpeedupVariant::Combined => 2.0 * m.k_p + 1.0,
        SpeedupVariant::CombinedCoarsened => (m.k_p + 1.0) / m.cs.powf(m.d) + m.k_p,
    };
    m.nt / (guess + rest)
}

/// One CSV row. Failed runs keep their place with NaN norms.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub problem: &'static str,
    pub label: GridLabel,
    pub method: Method,
    pub blocks: usize,
    pub cf: usize,
    pub cs: Option<usize>,
    pub norms: ErrorNorms,
    pub newton_iters: usize,
    pub parareal_iters: usize,
    pub jacobi_iters: usize,
    pub wall_s: f64,
    pub mode: &'static str,
    pub error: Option<String>,
}

impl RunRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn csv(&self) -> String {
        let cs = self.cs.map_or("none".to_string(), |c| c.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{:?},{:?},{:?},{},{},{},{:?},{}",
            self.problem,
            self.label.nt,
            self.label.nx,
            self.label.ny,
            self.method.name(),
            self.blocks,
            self.cf,
            cs,
            self.norms.l1,
            self.norms.l2,
            self.norms.linf,
            self.newton_iters,
            self.parareal_iters,
            self.jacobi_iters,
            self.wall_s,
            self.mode
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub method: Method,
    pub coarse: GridLabel,
    pub fine: GridLabel,
    pub rates: ErrorNorms,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<RunRow>,
    pub rates: Vec<RateRow>,
}

impl ExperimentReport {
    pub fn csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }

    pub fn rates_csv(&self, problem: &str) -> String {
        let mut s = String::from(RATES_HEADER);
        s.push('\n');
        for r in &self.rates {
            let _ = writeln!(
                s,
                "{problem},{},{},{},{:?},{:?},{:?}",
                r.method.name(),
                r.coarse,
                r.fine,
                r.rates.l1,
                r.rates.l2,
                r.rates.linf
            );
        }
        s
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter(|r| !r.ok())
    }
}

/// Everything needed to run one method on one grid.
#[derive(Debug, Clone, Copy)]
pub struct RunSetup {
    pub label: GridLabel,
    pub grid: GridSpec,
    pub opts: MethodOptions,
}

impl ExperimentConfig {
    pub fn setup(&self, index: usize, method: Method) -> Result<RunSetup, SolverError> {
        let label = self.grids[index];
        let grid = label.grid(self.problem.kind, self.nodes, self.t_final)?;
        let blocks = if method.uses_blocks() {
            self.blocks_for(index, label.nt)
        } else {
            1
        };
        Ok(RunSetup {
            label,
            grid,
            opts: MethodOptions {
                method,
                newton: self.newton,
                blocks,
                cf: self.cf,
                cs: self.cs,
            },
        })
    }

    pub fn runtime(&self, nt: usize) -> Result<Runtime, SolverError> {
        Ok(Runtime::new(WorkerTopology::new(nt, self.mode, self.workers))?)
    }
}

/// Adds seeded uniform noise of amplitude `amp` to every level after the
/// first.
pub fn perturb_guess(guess: &mut SpaceTimeSolution, amp: f64, seed: u64) {
    if amp == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for level in guess.levels.iter_mut() {
        for v in level.iter_mut() {
            *v += amp * rng.gen_range(-1.0..=1.0);
        }
    }
}

/// Solves one setup; the clock covers guess construction and the solve.
pub fn run_setup(
    cfg: &ExperimentConfig,
    s: &RunSetup,
) -> Result<(SolveReport, f64), SolverError> {
    let p = &cfg.problem;
    let mut rt = cfg.runtime(s.grid.nt)?;
    let start = Instant::now();
    let report = if s.opts.method == Method::Sequential {
        sequential_bdf1(p, &s.grid, &s.opts.newton.validated()?)?
    } else {
        let newton = s.opts.newton.validated()?;
        let mut guess = build_initial_guess(p, &s.grid, s.opts.cf, &newton)?;
        perturb_guess(&mut guess, cfg.perturb, cfg.seed);
        solve_from_guess(p, &s.grid, &s.opts, guess, &mut rt)?
    };
    Ok((report, start.elapsed().as_secs_f64()))
}

fn run_row(cfg: &ExperimentConfig, index: usize, method: Method) -> (RunRow, Option<SolveReport>) {
    let label = cfg.grids[index];
    let mut row = RunRow {
        problem: cfg.problem.kind.name(),
        label,
        method,
        blocks: 1,
        cf: cfg.cf,
        cs: cfg.cs,
        norms: ErrorNorms::nan(),
        newton_iters: 0,
        parareal_iters: 0,
        jacobi_iters: 0,
        wall_s: 0.0,
        mode: cfg.mode.name(),
        error: None,
    };
    let result = cfg.setup(index, method).and_then(|s| {
        row.blocks = s.opts.blocks;
        let (report, wall) = run_setup(cfg, &s)?;
        let norms = error_norms(&report.solution, &cfg.problem, &s.grid)?;
        Ok((report, wall, norms))
    });
    match result {
        Ok((report, wall, norms)) => {
            row.norms = norms;
            row.newton_iters = report.newton_iters;
            row.parareal_iters = report.parareal_iters();
            row.jacobi_iters = report.jacobi_iters();
            row.mode = report.mode.name();
            if cfg.timing {
                row.wall_s = wall;
            }
            (row, Some(report))
        }
        Err(e) => {
            log::error!("{} {} on {label}: {e}", cfg.problem.kind.name(), method.name());
            row.error = Some(e.to_string());
            (row, None)
        }
    }
}

fn rates_between(rows: &[&RunRow]) -> Vec<RateRow> {
    rows.windows(2)
        .filter(|w| w[0].ok() && w[1].ok())
        .map(|w| RateRow {
            method: w[0].method,
            coarse: w[0].label,
            fine: w[1].label,
            rates: ErrorNorms {
                l1: convergence_rate(w[0].norms.l1, w[1].norms.l1),
                l2: convergence_rate(w[0].norms.l2, w[1].norms.l2),
                linf: convergence_rate(w[0].norms.linf, w[1].norms.linf),
            },
        })
        .collect()
}

/// Every configured method on every grid. Solver failures become rows with
/// an error message; the run continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> ExperimentReport {
    let mut report = ExperimentReport::default();
    for i in 0..cfg.grids.len() {
        for &m in &cfg.methods {
            let (row, _) = run_row(cfg, i, m);
            log::info!(
                "{} {} {}: L1={:e} L2={:e} Linf={:e}",
                row.problem,
                row.label,
                m.name(),
                row.norms.l1,
                row.norms.l2,
                row.norms.linf
            );
            report.rows.push(row);
        }
    }
    for &m in &cfg.methods {
        let rows: Vec<&RunRow> = report.rows.iter().filter(|r| r.method == m).collect();
        report.rates.extend(rates_between(&rows));
    }
    report
}

/// Writes `results.csv`, `rates.csv`, `failures.txt` when needed and, if
/// enabled, one `h error` data file per method.
pub fn write_report(cfg: &ExperimentConfig, report: &ExperimentReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let results = dir.join("results.csv");
    fs::write(&results, report.csv())?;
    written.push(results);
    let rates = dir.join("rates.csv");
    fs::write(&rates, report.rates_csv(cfg.problem.kind.name()))?;
    written.push(rates);

    let failures: Vec<String> = report
        .failures()
        .map(|r| {
            format!(
                "{} {}: {}",
                r.label,
                r.method.name(),
                r.error.as_deref().unwrap_or_default()
            )
        })
        .collect();
    if !failures.is_empty() {
        let f = dir.join("failures.txt");
        fs::write(&f, failures.join("\n") + "\n")?;
        written.push(f);
    }

    if cfg.gnuplot {
        let norm = cfg.newton.norm;
        for &m in &cfg.methods {
            let mut s = format!("# h {norm:?} error, {} {}\n", cfg.problem.kind.name(), m.name());
            for r in report.rows.iter().filter(|r| r.method == m && r.ok()) {
                let Ok(g) = r.label.grid(cfg.problem.kind, cfg.nodes, cfg.t_final) else {
                    continue;
                };
                let _ = writeln!(s, "{:?} {:?}", g.hx(), r.norms.get(norm));
            }
            let f = dir.join(format!("error_vs_h_{}.dat", m.name()));
            fs::write(&f, s)?;
            written.push(f);
        }
    }
    Ok(written)
}

/// Pointwise agreement of one method with a reference on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label: GridLabel,
    pub reference: Method,
    pub method: Method,
    pub max_diff: f64,
    pub tolerance: f64,
}

impl Comparison {
    pub fn ok(&self) -> bool {
        self.max_diff <= self.tolerance
    }
}

/// Max pointwise difference of every configured method against `reference`
/// per grid, flagged against `10 eps_newton`.
pub fn compare_methods(
    cfg: &ExperimentConfig,
    reference: Method,
) -> Result<Vec<Comparison>, SolverError> {
    let tolerance = 10.0 * cfg.newton.eps_newton;
    let mut out = Vec::new();
    for i in 0..cfg.grids.len() {
        let base = run_setup(cfg, &cfg.setup(i, reference)?)?.0.solution;
        for &m in &cfg.methods {
            let sol = if m == reference {
                base.clone()
            } else {
                run_setup(cfg, &cfg.setup(i, m)?)?.0.solution
            };
            let max_diff = base.max_abs_diff(&sol);
            if max_diff > tolerance {
                log::warn!("{} {}: differs from {} by {max_diff:e}", cfg.grids[i], m.name(), reference.name());
            }
            out.push(Comparison {
                label: cfg.grids[i],
                reference,
                method: m,
                max_diff,
                tolerance,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_grid;
    use crate::model::ProblemKind;

    #[test]
    fn exact_solution_has_zero_error() {
        let p = ProblemSpec::heat();
        let g = make_grid(0.1, 1.1, 0.1, 1.1, 1.0, 5, 4, 6).unwrap();
        let sol = SpaceTimeSolution {
            initial: p.initial_field(&g).unwrap(),
            levels: (1..=6).map(|n| p.exact_field(&g, g.t(n)).unwrap()).collect(),
        };
        let e = error_norms(&sol, &p, &g).unwrap();
        assert!(e.l1 < 1e-14 && e.l2 < 1e-14 && e.linf < 1e-14, "{e:?}");
    }

    #[test]
    fn constant_error_on_unit_measure() {
        // hx = hy = 1, tau = 1/4, four levels: total measure 1
        let p = ProblemSpec::heat();
        let g = make_grid(0.0, 2.0, 0.0, 2.0, 1.0, 1, 1, 4).unwrap();
        let c = 0.25;
        let mut sol = SpaceTimeSolution {
            initial: p.initial_field(&g).unwrap(),
            levels: (1..=4).map(|n| p.exact_field(&g, g.t(n)).unwrap()).collect(),
        };
        for l in sol.levels.iter_mut() {
            l[0] += c;
        }
        let e = error_norms(&sol, &p, &g).unwrap();
        for v in [e.l1, e.l2, e.linf] {
            assert!((v - c).abs() < 1e-14, "{e:?}");
        }
    }

    #[test]
    fn speedup_model() {
        let m = SpeedupModel::new(480, 4, 2);
        assert!((predict_speedup(&m, SpeedupVariant::Combined) - 38.4).abs() < 1e-12);
        let c = SpeedupModel { cs: 2.0, ..m };
        let s = predict_speedup(&c, SpeedupVariant::CombinedCoarsened);
        assert!((s - 480.0 / 10.25).abs() < 1e-12);
        assert!((s - 46.83).abs() < 5e-3);
        let big = SpeedupModel::new(64, 1_000_000, 0);
        assert!((predict_speedup(&big, SpeedupVariant::ParaDIn) - 64.0).abs() < 1e-6);
    }

    #[test]
    fn table_rate_by_hand() {
        let r = convergence_rate(2.40e-5, 8.50e-6);
        assert!((r - 1.497).abs() < 1e-3);
        assert_eq!(format!("{r:.2}"), "1.50");
    }

    #[test]
    fn empty_grid_list_gives_empty_report() {
        let cfg = ExperimentConfig::table(ProblemKind::NonlinearHeat, 0, vec![Method::ParaDIn]);
        let r = run_experiment(&cfg);
        assert!(r.rows.is_empty() && r.rates.is_empty());
        assert_eq!(r.csv(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn failed_runs_are_rows() {
        let mut cfg = ExperimentConfig::table(ProblemKind::NonlinearHeat, 1, vec![Method::BlockJacobi]);
        cfg.blocks = BlocksSetting::Fixed(7);
        let r = run_experiment(&cfg);
        assert_eq!(r.rows.len(), 1);
        assert!(!r.rows[0].ok());
        assert!(r.rows[0].csv().contains("NaN"));
    }

    #[test]
    fn csv_round_trips_floats() {
        let cfg = ExperimentConfig::table(ProblemKind::NonlinearHeat, 1, vec![Method::Sequential]);
        let r = run_experiment(&cfg);
        let line = r.rows[0].csv();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), CSV_HEADER.split(',').count());
        assert_eq!(fields[9].parse::<f64>().unwrap(), r.rows[0].norms.l2);
    }

    #[test]
    fn method_against_itself_is_zero() {
        let mut cfg = ExperimentConfig::table(ProblemKind::NonlinearHeat, 1, vec![Method::ParaDIn]);
        cfg.timing = false;
        let c = compare_methods(&cfg, Method::ParaDIn).unwrap();
        assert_eq!(c[0].max_diff, 0.0);
    }
}
