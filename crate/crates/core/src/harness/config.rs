//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # heat refinement study
//! problem = heat
//! grids = 30x4x4, 60x8x8, 120x16x16
//! method = sequential, paradin_parareal
//! blocks = auto
//! cs = 2
//! ```
//!
//! Lines starting with `#` are comments. Keys:
//!
//! | key | value |
//! |---|---|
//! | `problem` | `heat` or `burgers` |
//! | `nt`, `nx`, `ny` | a single grid (`ny` defaults to `nx`) |
//! | `grids` | `NTxNXxNY` list, or `table` / `table:K` for the first K table grids |
//! | `nodes` | `total` (default, counts include the boundary) or `interior` |
//! | `method` | comma list of `sequential`, `paradin`, `block_jacobi`, `parareal_baseline`, `paradin_parareal` |
//! | `blocks` | `auto`, one `M`, or one `M` per grid |
//! | `cf`, `cs` | guess coarsening, coarse-propagator spatial coarsening (`none` disables) |
//! | `eps_newton`, `safety_factor`, `max_newton`, `max_parareal`, `norm` | Newton settings |
//! | `mode`, `workers` | runtime mode and OS threads |
//! | `out_dir`, `gnuplot`, `timing` | output directory, `.dat` files, wall-clock column |
//! | `seed`, `perturb` | seeded uniform perturbation of the initial guess |
//! | `t_final`, `mu0`, `alpha`, `shock_speed`, `face_viscosity` | problem overrides |

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::mesh::{make_grid, GridSpec, MeshError};
use crate::model::{FaceViscosity, ProblemKind, ProblemSpec};
use crate::runtime::{default_threads, Mode};
use crate::solvers::{Method, NewtonConfig, NormKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value'")]
    Syntax { line: usize },
    #[error("duplicate key '{0}'")]
    Duplicate(String),
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("bad value for '{key}': {message}")]
    Value { key: String, message: String },
    #[error("missing key '{0}'")]
    Missing(&'static str),
    #[error("could not read config: {0}")]
    Io(String),
}

const KEYS: &[&str] = &[
    "problem",
    "nt",
    "nx",
    "ny",
    "grids",
    "nodes",
    "method",
    "blocks",
    "cf",
    "cs",
    "eps_newton",
    "safety_factor",
    "max_newton",
    "max_parareal",
    "norm",
    "mode",
    "workers",
    "out_dir",
    "seed",
    "perturb",
    "gnuplot",
    "timing",
    "t_final",
    "mu0",
    "alpha",
    "shock_speed",
    "face_viscosity",
];

/// Parses `key = value` lines into an ordered map.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        // `#` after whitespace starts a trailing comment
        let line = match raw.find(" #").or_else(|| raw.find("\t#")) {
            Some(i) => raw[..i].trim(),
            None => raw.trim(),
        };
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let key = k.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(ConfigError::Duplicate(key));
        }
    }
    Ok(map)
}

/// How grid labels count nodes per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeCount {
    /// Boundary nodes included: `N` nodes give `N - 2` unknowns.
    #[default]
    Total,
    Interior,
}

/// A grid as written in a config or table row: `nt x nx x ny`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLabel {
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
}

impl std::fmt::Display for GridLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nt, self.nx, self.ny)
    }
}

impl GridLabel {
    pub fn new(nt: usize, nx: usize, ny: usize) -> Self {
        GridLabel { nt, nx, ny }
    }

    pub fn interior(&self, nodes: NodeCount) -> (usize, usize) {
        match nodes {
            NodeCount::Interior => (self.nx, self.ny),
            NodeCount::Total => (self.nx.saturating_sub(2), self.ny.saturating_sub(2)),
        }
    }

    pub fn grid(&self, kind: ProblemKind, nodes: NodeCount, t_final: f64) -> Result<GridSpec, MeshError> {
        let (x0, x1, y0, y1) = kind.domain();
        let (nx, ny) = self.interior(nodes);
        make_grid(x0, x1, y0, y1, t_final, nx, ny, self.nt)
    }
}

/// The five refinement grids of the published tables.
pub fn table_grids(kind: ProblemKind) -> Vec<GridLabel> {
    let spatial: [usize; 5] = match kind {
        ProblemKind::NonlinearHeat => [4, 8, 16, 32, 64],
        ProblemKind::Burgers => [7, 11, 21, 41, 81],
    };
    [30, 60, 120, 240, 480]
        .into_iter()
        .zip(spatial)
        .map(|(nt, n)| GridLabel::new(nt, n, n))
        .collect()
}

/// Block count used with the table grids, else the largest divisor of `nt`
/// not above `sqrt(nt)`.
pub fn default_blocks(kind: ProblemKind, nt: usize) -> usize {
    let table = match kind {
        ProblemKind::NonlinearHeat => [(30, 1), (60, 2), (120, 4), (240, 8), (480, 16)],
        ProblemKind::Burgers => [(30, 3), (60, 6), (120, 10), (240, 16), (480, 24)],
    };
    if let Some(&(_, m)) = table.iter().find(|(n, _)| *n == nt) {
        return m;
    }
    let root = (nt as f64).sqrt() as usize;
    (1..=root.max(1)).rev().find(|m| nt % m == 0).unwrap_or(1)
}

pub fn default_cf(kind: ProblemKind) -> usize {
    match kind {
        ProblemKind::NonlinearHeat => 4,
        ProblemKind::Burgers => 3,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlocksSetting {
    Auto,
    Fixed(usize),
    PerGrid(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub grids: Vec<GridLabel>,
    pub nodes: NodeCount,
    pub methods: Vec<Method>,
    pub blocks: BlocksSetting,
    pub cf: usize,
    pub cs: Option<usize>,
    pub newton: NewtonConfig,
    pub mode: Mode,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub perturb: f64,
    pub gnuplot: bool,
    pub timing: bool,
    pub t_final: f64,
}

fn value_err(key: &str, message: impl ToString) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| value_err(key, e))
}

fn flag(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        other => Err(value_err(key, format!("expected on/off, got '{other}'"))),
    }
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_grid(key: &str, s: &str) -> Result<GridLabel, ConfigError> {
    let parts: Vec<&str> = s.split(['x', 'X', '×']).map(str::trim).collect();
    match parts.as_slice() {
        [nt, nx, ny] => Ok(GridLabel::new(num(key, nt)?, num(key, nx)?, num(key, ny)?)),
        [nt, n] => {
            let n = num(key, n)?;
            Ok(GridLabel::new(num(key, nt)?, n, n))
        }
        _ => Err(value_err(key, format!("grid '{s}' is not NTxNXxNY"))),
    }
}

impl ExperimentConfig {
    /// Defaults for `kind` on the first `count` table grids.
    pub fn table(kind: ProblemKind, count: usize, methods: Vec<Method>) -> Self {
        ExperimentConfig {
            problem: ProblemSpec::default_for(kind),
            grids: table_grids(kind).into_iter().take(count).collect(),
            nodes: NodeCount::Total,
            methods,
            blocks: BlocksSetting::Auto,
            cf: default_cf(kind),
            cs: None,
            newton: NewtonConfig::for_problem(kind),
            mode: Mode::Emulated,
            workers: default_threads(),
            out_dir: PathBuf::from("results"),
            seed: 0,
            perturb: 0.0,
            gnuplot: false,
            timing: true,
            t_final: 1.0,
        }
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let kind: ProblemKind = get("problem")
            .ok_or(ConfigError::Missing("problem"))?
            .parse()
            .map_err(|e| value_err("problem", e))?;
        let mut cfg = Self::table(kind, 0, vec![Method::Sequential]);

        if let Some(v) = get("mu0") {
            cfg.problem.mu0 = num("mu0", v)?;
        }
        if let Some(v) = get("alpha") {
            cfg.problem.alpha = num("alpha", v)?;
        }
        if let Some(v) = get("shock_speed") {
            cfg.problem.shock_speed = num("shock_speed", v)?;
        }
        if let Some(v) = get("face_viscosity") {
            cfg.problem.face_viscosity = v
                .parse::<FaceViscosity>()
                .map_err(|e| value_err("face_viscosity", e))?;
        }
        cfg.problem = cfg.problem.validated().map_err(|e| value_err("problem", e))?;

        if let Some(v) = get("nodes") {
            cfg.nodes = match v.to_ascii_lowercase().as_str() {
                "total" => NodeCount::Total,
                "interior" => NodeCount::Interior,
                other => return Err(value_err("nodes", format!("'{other}'"))),
            };
        }
        let single = ["nt", "nx", "ny"].iter().any(|k| map.contains_key(*k));
        match (get("grids"), single) {
            (Some(_), true) => {
                return Err(value_err("grids", "give either grids or nt/nx/ny"));
            }
            (Some(v), false) => {
                let v = v.trim();
                cfg.grids = if let Some(rest) = v.strip_prefix("table") {
                    let all = table_grids(kind);
                    let count = match rest.strip_prefix(':') {
                        Some(c) => num("grids", c)?,
                        None if rest.is_empty() => all.len(),
                        None => return Err(value_err("grids", format!("'{v}'"))),
                    };
                    all.into_iter().take(count).collect()
                } else {
                    list(v).map(|g| parse_grid("grids", g)).collect::<Result<_, _>>()?
                };
            }
            (None, true) => {
                let nt = num("nt", get("nt").ok_or(ConfigError::Missing("nt"))?)?;
                let nx = num("nx", get("nx").ok_or(ConfigError::Missing("nx"))?)?;
                let ny = match get("ny") {
                    Some(v) => num("ny", v)?,
                    None => nx,
                };
                cfg.grids = vec![GridLabel::new(nt, nx, ny)];
            }
            (None, false) => {}
        }

        if let Some(v) = get("method") {
            cfg.methods = list(v)
                .map(|m| m.parse::<Method>().map_err(|e| value_err("method", e)))
                .collect::<Result<_, _>>()?;
            if cfg.methods.is_empty() {
                return Err(value_err("method", "empty list"));
            }
        }
        if let Some(v) = get("blocks") {
            let items: Vec<&str> = list(v).collect();
            cfg.blocks = match items.as_slice() {
                ["auto"] => BlocksSetting::Auto,
                [one] => BlocksSetting::Fixed(num("blocks", one)?),
                many => BlocksSetting::PerGrid(
                    many.iter().map(|m| num("blocks", m)).collect::<Result<_, _>>()?,
                ),
            };
            if let BlocksSetting::PerGrid(ms) = &cfg.blocks {
                if ms.len() != cfg.grids.len() {
                    return Err(value_err("blocks", "need one value per grid"));
                }
            }
        }
        if let Some(v) = get("cf") {
            cfg.cf = num("cf", v)?;
            if cfg.cf == 0 {
                return Err(value_err("cf", "must be at least 1"));
            }
        }
        if let Some(v) = get("cs") {
            cfg.cs = match v.to_ascii_lowercase().as_str() {
                "none" | "off" | "" => None,
                c => Some(num("cs", c)?),
            };
            if cfg.cs == Some(0) {
                return Err(value_err("cs", "must be at least 1"));
            }
        }
        if let Some(v) = get("eps_newton") {
            cfg.newton.eps_newton = num("eps_newton", v)?;
        }
        if let Some(v) = get("safety_factor") {
            cfg.newton.safety_factor = num("safety_factor", v)?;
        }
        if let Some(v) = get("max_newton") {
            cfg.newton.max_newton = num("max_newton", v)?;
        }
        if let Some(v) = get("max_parareal") {
            cfg.newton.max_parareal = match v.to_ascii_lowercase().as_str() {
                "auto" | "m" => None,
                c => Some(num("max_parareal", c)?),
            };
        }
        if let Some(v) = get("norm") {
            cfg.newton.norm = v.parse::<NormKind>().map_err(|e| value_err("norm", e))?;
        }
        cfg.newton = cfg.newton.validated().map_err(|e| value_err("eps_newton", e))?;
        if let Some(v) = get("mode") {
            cfg.mode = v.parse().map_err(|e| value_err("mode", e))?;
        }
        if let Some(v) = get("workers") {
            cfg.workers = num("workers", v)?;
            if cfg.workers == 0 {
                return Err(value_err("workers", "must be at least 1"));
            }
        }
        if let Some(v) = get("out_dir") {
            cfg.out_dir = PathBuf::from(v);
        }
        if let Some(v) = get("seed") {
            cfg.seed = num("seed", v)?;
        }
        if let Some(v) = get("perturb") {
            cfg.perturb = num("perturb", v)?;
            if !(cfg.perturb >= 0.0) {
                return Err(value_err("perturb", "must be non-negative"));
            }
        }
        if let Some(v) = get("gnuplot") {
            cfg.gnuplot = flag("gnuplot", v)?;
        }
        if let Some(v) = get("timing") {
            cfg.timing = flag("timing", v)?;
        }
        if let Some(v) = get("t_final") {
            cfg.t_final = num("t_final", v)?;
        }
        Ok(cfg)
    }

    pub fn blocks_for(&self, index: usize, nt: usize) -> usize {
        match &self.blocks {
            BlocksSetting::Auto => default_blocks(self.problem.kind, nt),
            BlocksSetting::Fixed(m) => *m,
            BlocksSetting::PerGrid(ms) => ms[index],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_file() {
        let text = "\
# comment
problem = burgers
grids = 30x7x7, 60x11x11
method = sequential, paradin-parareal
blocks = 3, 6
cs = 2
eps_newton = 1e-4
mode = parallel
workers = 3
timing = off
";
        let c = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(c.problem.kind, ProblemKind::Burgers);
        assert_eq!(c.grids, vec![GridLabel::new(30, 7, 7), GridLabel::new(60, 11, 11)]);
        assert_eq!(c.methods, vec![Method::Sequential, Method::ParaDInParareal]);
        assert_eq!(c.blocks_for(1, 60), 6);
        assert_eq!(c.cs, Some(2));
        assert_eq!(c.cf, 3);
        assert_eq!(c.newton.eps_newton, 1e-4);
        assert_eq!(c.newton.norm, NormKind::L1);
        assert_eq!((c.mode, c.workers, c.timing), (Mode::Parallel, 3, false));
    }

    #[test]
    fn single_grid_and_table_shortcut() {
        let c = ExperimentConfig::from_text("problem=heat\nnt=16\nnx=4\nnodes=interior").unwrap();
        assert_eq!(c.grids, vec![GridLabel::new(16, 4, 4)]);
        let g = c.grids[0].grid(ProblemKind::NonlinearHeat, c.nodes, 1.0).unwrap();
        assert_eq!((g.nx, g.ny, g.nt), (4, 4, 16));
        let c = ExperimentConfig::from_text("problem=heat\ngrids=table:3").unwrap();
        assert_eq!(c.grids.len(), 3);
        let g = c.grids[2].grid(ProblemKind::NonlinearHeat, c.nodes, 1.0).unwrap();
        assert_eq!((g.nx, g.nt), (14, 120));
        assert_eq!(c.blocks_for(2, 120), 4);
    }

    #[test]
    fn errors() {
        assert_eq!(
            ExperimentConfig::from_text("problem=heat\ncolour=red").unwrap_err(),
            ConfigError::UnknownKey("colour".into())
        );
        assert!(matches!(
            ExperimentConfig::from_text("nt=4"),
            Err(ConfigError::Missing("problem"))
        ));
        assert!(matches!(parse_pairs("a=1\na=2"), Err(ConfigError::Duplicate(_))));
        assert!(matches!(parse_pairs("junk"), Err(ConfigError::Syntax { line: 1 })));
        let m = parse_pairs("cs = none   # off\nout_dir = runs/#3\n").unwrap();
        assert_eq!(m["cs"], "none");
        assert_eq!(m["out_dir"], "runs/#3");
        assert!(ExperimentConfig::from_text("problem=heat\ngrids=30x4\nnt=4").is_err());
        assert!(ExperimentConfig::from_text("problem=heat\nsafety_factor=3").is_err());
        assert!(ExperimentConfig::from_text("problem=heat\nmethod=mgrit").is_err());
        assert!(ExperimentConfig::from_text("problem=heat\ngrids=4x4\nblocks=1,2").is_err());
    }

    #[test]
    fn default_layouts() {
        assert_eq!(default_blocks(ProblemKind::NonlinearHeat, 480), 16);
        assert_eq!(default_blocks(ProblemKind::Burgers, 480), 24);
        assert_eq!(default_blocks(ProblemKind::Burgers, 16), 4);
        assert_eq!(default_blocks(ProblemKind::Burgers, 7), 1);
    }
}
