//! Model problems: the 2-D nonlinear heat equation with `mu = mu0 u^2` and the
//! 2-D viscous Burgers equation with `f = g = u^2 / 2`.

use thiserror::Error;

use crate::mesh::{Field, GridSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("viscosity constant must be positive, got {0}")]
    NonPositiveViscosity(f64),
    #[error("heat-solution constant alpha must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("shock speed must be nonzero")]
    ZeroShockSpeed,
    #[error("exact heat solution undefined at (x={x}, y={y}, t={t}): negative radicand")]
    NegativeRadicand { x: f64, y: f64, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    NonlinearHeat,
    Burgers,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::NonlinearHeat => "heat",
            ProblemKind::Burgers => "burgers",
        }
    }

    /// Square domain `(x_left, x_right, y_left, y_right)` of the test problem.
    pub fn domain(self) -> (f64, f64, f64, f64) {
        match self {
            ProblemKind::NonlinearHeat => (0.1, 1.1, 0.1, 1.1),
            ProblemKind::Burgers => (-0.3, 0.7, -0.3, 0.7),
        }
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "heat" | "nonlinear_heat" => Ok(ProblemKind::NonlinearHeat),
            "burgers" => Ok(ProblemKind::Burgers),
            other => Err(format!("unknown problem '{other}'")),
        }
    }
}

/// How the viscosity at a cell face `i + 1/2` is formed from the two
/// neighbouring nodal states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaceViscosity {
    /// `(mu(u_i) + mu(u_{i+1})) / 2`
    #[default]
    ArithmeticMean,
    /// `mu((u_i + u_{i+1}) / 2)`
    StateAverage,
}

impl std::str::FromStr for FaceViscosity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "arithmetic_mean" | "mean" => Ok(FaceViscosity::ArithmeticMean),
            "state_average" => Ok(FaceViscosity::StateAverage),
            other => Err(format!("unknown face viscosity rule '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Heat: coefficient in `mu = mu0 u^2`. Burgers: the constant viscosity.
    pub mu0: f64,
    /// Constant of the exact heat solution.
    pub alpha: f64,
    /// Burgers shock speed `v`.
    pub shock_speed: f64,
    pub face_viscosity: FaceViscosity,
}

/// Domain edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl ProblemSpec {
    pub fn new(
        kind: ProblemKind,
        mu0: f64,
        alpha: f64,
        shock_speed: f64,
    ) -> Result<Self, ModelError> {
        ProblemSpec {
            kind,
            mu0,
            alpha,
            shock_speed,
            face_viscosity: FaceViscosity::default(),
        }
        .validated()
    }

    /// `mu0 = 1e-6`, `alpha = 1`.
    pub fn heat() -> Self {
        ProblemSpec {
            kind: ProblemKind::NonlinearHeat,
            mu0: 1e-6,
            alpha: 1.0,
            shock_speed: 0.5,
            face_viscosity: FaceViscosity::default(),
        }
    }

    /// `mu = 1e-3`, `v = 0.5`.
    pub fn burgers() -> Self {
        ProblemSpec {
            kind: ProblemKind::Burgers,
            mu0: 1e-3,
            alpha: 1.0,
            shock_speed: 0.5,
            face_viscosity: FaceViscosity::default(),
        }
    }

    pub fn default_for(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::NonlinearHeat => Self::heat(),
            ProblemKind::Burgers => Self::burgers(),
        }
    }

    pub fn validated(self) -> Result<Self, ModelError> {
        if !(self.mu0 > 0.0) {
            return Err(ModelError::NonPositiveViscosity(self.mu0));
        }
        match self.kind {
            ProblemKind::NonlinearHeat if !(self.alpha > 0.0) => {
                Err(ModelError::NonPositiveAlpha(self.alpha))
            }
            ProblemKind::Burgers if self.shock_speed == 0.0 => Err(ModelError::ZeroShockSpeed),
            _ => Ok(self),
        }
    }

    /// Inviscid fluxes `(f, g)`.
    pub fn flux(&self, u: f64) -> (f64, f64) {
        match self.kind {
            ProblemKind::NonlinearHeat => (0.0, 0.0),
            ProblemKind::Burgers => {
                let f = 0.5 * u * u;
                (f, f)
            }
        }
    }

    pub fn flux_derivative(&self, u: f64) -> (f64, f64) {
        match self.kind {
            ProblemKind::NonlinearHeat => (0.0, 0.0),
            ProblemKind::Burgers => (u, u),
        }
    }

    pub fn viscosity(&self, u: f64) -> f64 {
        match self.kind {
            ProblemKind::NonlinearHeat => self.mu0 * u * u,
            ProblemKind::Burgers => self.mu0,
        }
    }

    pub fn viscosity_derivative(&self, u: f64) -> f64 {
        match self.kind {
            ProblemKind::NonlinearHeat => 2.0 * self.mu0 * u,
            ProblemKind::Burgers => 0.0,
        }
    }

    /// Face viscosity between states `a` and `b` together with its partial
    /// derivatives with respect to `a` and `b`.
    pub fn face_viscosity(&self, a: f64, b: f64) -> (f64, f64, f64) {
        match self.face_viscosity {
            FaceViscosity::ArithmeticMean => (
                0.5 * (self.viscosity(a) + self.viscosity(b)),
                0.5 * self.viscosity_derivative(a),
                0.5 * self.viscosity_derivative(b),
            ),
            FaceViscosity::StateAverage => {
                let m = 0.5 * (a + b);
                let d = 0.5 * self.viscosity_derivative(m);
                (self.viscosity(m), d, d)
            }
        }
    }

    pub fn exact_solution(&self, x: f64, y: f64, t: f64) -> Result<f64, ModelError> {
        match self.kind {
            ProblemKind::NonlinearHeat => {
                let radicand = (self.alpha / self.mu0).sqrt() * (x + y) + self.alpha * t + 1.0;
                if radicand < 0.0 {
                    return Err(ModelError::NegativeRadicand { x, y, t });
                }
                Ok(radicand.sqrt())
            }
            ProblemKind::Burgers => {
                let v = self.shock_speed;
                Ok(0.5 * v * (1.0 - (v * (x + y - v * t) / (4.0 * self.mu0)).tanh()))
            }
        }
    }

    /// Dirichlet data on one edge; `coordinate` runs along the edge.
    pub fn boundary_value(
        &self,
        grid: &GridSpec,
        side: Side,
        coordinate: f64,
        t: f64,
    ) -> Result<f64, ModelError> {
        match side {
            Side::Left => self.exact_solution(grid.x_left, coordinate, t),
            Side::Right => self.exact_solution(grid.x_right, coordinate, t),
            Side::Bottom => self.exact_solution(coordinate, grid.y_left, t),
            Side::Top => self.exact_solution(coordinate, grid.y_right, t),
        }
    }

    /// Exact solution sampled on the interior nodes at time `t`.
    pub fn exact_field(&self, grid: &GridSpec, t: f64) -> Result<Field, ModelError> {
        let mut values = Vec::with_capacity(grid.ns());
        for j in 1..=grid.ny {
            for i in 1..=grid.nx {
                values.push(self.exact_solution(grid.x(i), grid.y(j), t)?);
            }
        }
        Ok(Field(values))
    }

    pub fn initial_field(&self, grid: &GridSpec) -> Result<Field, ModelError> {
        self.exact_field(grid, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_grid;

    #[test]
    fn fluxes() {
        assert_eq!(ProblemSpec::heat().flux(3.7), (0.0, 0.0));
        assert_eq!(ProblemSpec::burgers().flux(0.0), (0.0, 0.0));
        assert_eq!(ProblemSpec::burgers().flux(2.0), (2.0, 2.0));
        assert_eq!(ProblemSpec::burgers().flux_derivative(0.5), (0.5, 0.5));
        assert_eq!(ProblemSpec::burgers().flux_derivative(-1.0), (-1.0, -1.0));
        assert_eq!(ProblemSpec::heat().flux_derivative(12.0), (0.0, 0.0));
    }

    #[test]
    fn flux_derivative_matches_finite_difference() {
        let p = ProblemSpec::burgers();
        for &u in &[-1.3, 0.0, 0.25, 0.7] {
            let h = 1e-5;
            let fd = (p.flux(u + h).0 - p.flux(u - h).0) / (2.0 * h);
            assert!((fd - p.flux_derivative(u).0).abs() < 1e-8);
        }
    }

    #[test]
    fn viscosity_laws() {
        let heat = ProblemSpec::heat();
        assert!((heat.viscosity(10.0) - 1e-4).abs() < 1e-18);
        assert_eq!(heat.viscosity(0.0), 0.0);
        assert!((heat.viscosity_derivative(10.0) - 2e-5).abs() < 1e-18);
        let b = ProblemSpec::burgers();
        assert_eq!(b.viscosity(-4.0), 1e-3);
        assert_eq!(b.viscosity_derivative(-4.0), 0.0);
    }

    #[test]
    fn face_viscosity_variants() {
        let mut p = ProblemSpec::heat();
        let (m, da, db) = p.face_viscosity(2.0, 4.0);
        assert!((m - 1e-6 * 10.0).abs() < 1e-18);
        assert!((da - 2e-6).abs() < 1e-18 && (db - 4e-6).abs() < 1e-18);
        p.face_viscosity = FaceViscosity::StateAverage;
        let (m, da, db) = p.face_viscosity(2.0, 4.0);
        assert!((m - 9e-6).abs() < 1e-18);
        assert_eq!(da, db);
    }

    #[test]
    fn exact_values() {
        let heat = ProblemSpec::heat();
        let u = heat.exact_solution(0.1, 0.1, 0.0).unwrap();
        assert!((u - 201f64.sqrt()).abs() < 1e-12);
        assert!((u - 14.17745).abs() < 1e-5);

        let b = ProblemSpec::burgers();
        assert_eq!(b.exact_solution(0.1, 0.15, 0.5).unwrap(), 0.25);
        let s = 4.0 * 1e-3 / 0.5;
        let u = b.exact_solution(s, 0.0, 0.0).unwrap();
        assert!((u - 0.25 * (1.0 - 1f64.tanh())).abs() < 1e-15);
        assert!((u - 0.0596008).abs() < 1e-6);
        // far upstream of the shock the state tends to v
        assert!((b.exact_solution(-1.0, -1.0, 0.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn negative_radicand_is_an_error() {
        let heat = ProblemSpec::heat();
        assert!(matches!(
            heat.exact_solution(-1.0, -1.0, 0.0),
            Err(ModelError::NegativeRadicand { .. })
        ));
    }

    #[test]
    fn invalid_specs() {
        assert!(ProblemSpec::new(ProblemKind::NonlinearHeat, 0.0, 1.0, 0.5).is_err());
        assert!(ProblemSpec::new(ProblemKind::NonlinearHeat, 1e-6, -1.0, 0.5).is_err());
        assert!(ProblemSpec::new(ProblemKind::Burgers, 1e-3, 1.0, 0.0).is_err());
        assert!(ProblemSpec::new(ProblemKind::Burgers, 1e-3, -1.0, 0.5).is_ok());
    }

    #[test]
    fn initial_field_on_table_grid() {
        let g = make_grid(0.1, 1.1, 0.1, 1.1, 1.0, 4, 4, 30).unwrap();
        let heat = ProblemSpec::heat();
        let f = heat.initial_field(&g).unwrap();
        assert_eq!(f.len(), 16);
        assert!(f.is_finite());
        assert!((f[0] - heat.exact_solution(0.3, 0.3, 0.0).unwrap()).abs() < 1e-14);
        let b = ProblemSpec::burgers().initial_field(&g).unwrap();
        assert!(b.is_finite() && b.len() == 16);
    }

    #[test]
    fn boundary_far_upstream() {
        let g = make_grid(-2.0, 1.0, -2.0, 1.0, 1.0, 3, 3, 3).unwrap();
        let b = ProblemSpec::burgers();
        let u = b.boundary_value(&g, Side::Left, -2.0, 0.0).unwrap();
        assert!((u - 0.5).abs() < 1e-12);
    }

    /// Residual of the continuous PDE at the exact solution via fourth-order
    /// central differences; it must shrink as the stencil shrinks.
    fn pde_residual(p: &ProblemSpec, x: f64, y: f64, t: f64, h: f64) -> f64 {
        let u = |x: f64, y: f64, t: f64| p.exact_solution(x, y, t).unwrap();
        let d1 = |g: &dyn Fn(f64) -> f64, s: f64| {
            (-g(s + 2.0 * h) + 8.0 * g(s + h) - 8.0 * g(s - h) + g(s - 2.0 * h)) / (12.0 * h)
        };
        let ut = d1(&|s| u(x, y, s), t);
        let fx = d1(&|s| p.flux(u(s, y, t)).0, x);
        let gy = d1(&|s| p.flux(u(x, s, t)).1, y);
        let qx = |s: f64| p.viscosity(u(s, y, t)) * d1(&|r| u(r, y, t), s);
        let qy = |s: f64| p.viscosity(u(x, s, t)) * d1(&|r| u(x, r, t), s);
        let visc = d1(&qx, x) + d1(&qy, y);
        ut + fx + gy - visc
    }

    #[test]
    fn exact_solutions_satisfy_the_pde() {
        let heat = ProblemSpec::heat();
        let r1 = pde_residual(&heat, 0.4, 0.6, 0.3, 1e-2).abs();
        let r2 = pde_residual(&heat, 0.4, 0.6, 0.3, 5e-3).abs();
        assert!(r2 < r1 / 4.0, "heat residual {r1} -> {r2}");

        // smooth the shock so the stencil can resolve it
        let mut b = ProblemSpec::burgers();
        b.mu0 = 0.05;
        let r1 = pde_residual(&b, 0.3, 0.2, 0.4, 1e-2).abs();
        let r2 = pde_residual(&b, 0.3, 0.2, 0.4, 5e-3).abs();
        assert!(r2 < r1 / 4.0, "burgers residual {r1} -> {r2}");
    }
}
