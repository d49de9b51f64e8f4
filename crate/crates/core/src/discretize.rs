//! Central-difference spatial operator, the BDF1 level residual and the exact
//! Newton Jacobian `I + tau dF/du`.
//!
//! Dirichlet data enters through a ring of boundary nodes filled from the
//! exact solution at the level time, so `F` already contains the boundary
//! contribution and the Jacobian only couples interior unknowns.

use thiserror::Error;

use crate::bandlinalg::BandedMatrix;
use crate::mesh::{Field, GridSpec, MeshError};
use crate::model::{ModelError, ProblemSpec, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizeError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, DiscretizeError>;

/// Residual of one time level at the current Newton iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResidual {
    pub values: Vec<f64>,
}

impl LevelResidual {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Newton right-hand side for `A du = tau r` with `A = I + tau dF/du`.
    pub fn scaled(self, tau: f64) -> Vec<f64> {
        self.values.into_iter().map(|v| tau * v).collect()
    }
}

/// Interior values padded with the boundary ring, `(nx + 2) x (ny + 2)`.
struct Padded {
    w: usize,
    v: Vec<f64>,
}

impl Padded {
    fn new(p: &ProblemSpec, grid: &GridSpec, u: &[f64], t: f64) -> Result<Self> {
        grid.check_field(u.len())?;
        let (nx, ny) = (grid.nx, grid.ny);
        let w = nx + 2;
        let mut v = vec![0.0; w * (ny + 2)];
        for j in 1..=ny {
            v[j * w + 1..j * w + 1 + nx].copy_from_slice(&u[(j - 1) * nx..j * nx]);
            let y = grid.y(j);
            v[j * w] = p.boundary_value(grid, Side::Left, y, t)?;
            v[j * w + nx + 1] = p.boundary_value(grid, Side::Right, y, t)?;
        }
        for i in 1..=nx {
            let x = grid.x(i);
            v[i] = p.boundary_value(grid, Side::Bottom, x, t)?;
            v[(ny + 1) * w + i] = p.boundary_value(grid, Side::Top, x, t)?;
        }
        Ok(Padded { w, v })
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.v[j * self.w + i]
    }
}

/// `F(u)` on the interior nodes with boundary neighbours taken at time `t`.
pub fn spatial_operator_f(p: &ProblemSpec, grid: &GridSpec, u: &[f64], t: f64) -> Result<Field> {
    let pad = Padded::new(p, grid, u, t)?;
    Ok(apply_operator(p, grid, &pad))
}

fn apply_operator(p: &ProblemSpec, grid: &GridSpec, pad: &Padded) -> Field {
    let (hx, hy) = (grid.hx(), grid.hy());
    let mut out = Vec::with_capacity(grid.ns());
    for j in 1..=grid.ny {
        for i in 1..=grid.nx {
            let c = pad.at(i, j);
            let (e, w) = (pad.at(i + 1, j), pad.at(i - 1, j));
            let (n, s) = (pad.at(i, j + 1), pad.at(i, j - 1));
            let inviscid = (p.flux(e).0 - p.flux(w).0) / (2.0 * hx)
                + (p.flux(n).1 - p.flux(s).1) / (2.0 * hy);
            let (mu_e, _, _) = p.face_viscosity(c, e);
            let (mu_w, _, _) = p.face_viscosity(c, w);
            let (mu_n, _, _) = p.face_viscosity(c, n);
            let (mu_s, _, _) = p.face_viscosity(c, s);
            let visc_x = (mu_e * (e - c) - mu_w * (c - w)) / (hx * hx);
            let visc_y = (mu_n * (n - c) - mu_s * (c - s)) / (hy * hy);
            out.push(inviscid - visc_x - visc_y);
        }
    }
    Field(out)
}

/// `r = -(u_n - u_prev) / tau - F(u_n)`, boundary data at `t_n` included.
pub fn bdf1_residual(
    p: &ProblemSpec,
    grid: &GridSpec,
    u_n: &[f64],
    u_prev: &[f64],
    t_n: f64,
) -> Result<LevelResidual> {
    grid.check_field(u_prev.len())?;
    let f = spatial_operator_f(p, grid, u_n, t_n)?;
    let tau = grid.tau();
    let values = u_n
        .iter()
        .zip(u_prev)
        .zip(f.iter())
        .map(|((a, b), fv)| -(a - b) / tau - fv)
        .collect();
    Ok(LevelResidual { values })
}

/// Right-hand side of the level Newton system, `tau * r`.
pub fn newton_rhs(
    p: &ProblemSpec,
    grid: &GridSpec,
    u_n: &[f64],
    u_prev: &[f64],
    t_n: f64,
) -> Result<Vec<f64>> {
    Ok(bdf1_residual(p, grid, u_n, u_prev, t_n)?.scaled(grid.tau()))
}

/// `A = I + tau dF/du` at state `u`, banded with bandwidth `nx`.
pub fn assemble_jacobian(
    p: &ProblemSpec,
    grid: &GridSpec,
    u: &[f64],
    t: f64,
    tau: f64,
) -> Result<BandedMatrix> {
    let pad = Padded::new(p, grid, u, t)?;
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    let (hx2, hy2) = (hx * hx, hy * hy);
    let mut a = BandedMatrix::zeros(grid.ns(), nx);
    for j in 1..=ny {
        for i in 1..=nx {
            let row = grid.index(i, j);
            let c = pad.at(i, j);
            let (e, w) = (pad.at(i + 1, j), pad.at(i - 1, j));
            let (n, s) = (pad.at(i, j + 1), pad.at(i, j - 1));

            let (mu_e, a_e, b_e) = p.face_viscosity(c, e);
            let (mu_w, a_w, b_w) = p.face_viscosity(c, w);
            let (mu_n, a_n, b_n) = p.face_viscosity(c, n);
            let (mu_s, a_s, b_s) = p.face_viscosity(c, s);

            let d_c = -(a_e * (e - c) - mu_e - a_w * (c - w) - mu_w) / hx2
                - (a_n * (n - c) - mu_n - a_s * (c - s) - mu_s) / hy2;
            a.set(row, row, 1.0 + tau * d_c);

            if i < nx {
                let d = p.flux_derivative(e).0 / (2.0 * hx) - (b_e * (e - c) + mu_e) / hx2;
                a.set(row, grid.index(i + 1, j), tau * d);
            }
            if i > 1 {
                let d = -p.flux_derivative(w).0 / (2.0 * hx) - (-b_w * (c - w) + mu_w) / hx2;
                a.set(row, grid.index(i - 1, j), tau * d);
            }
            if j < ny {
                let d = p.flux_derivative(n).1 / (2.0 * hy) - (b_n * (n - c) + mu_n) / hy2;
                a.set(row, grid.index(i, j + 1), tau * d);
            }
            if j > 1 {
                let d = -p.flux_derivative(s).1 / (2.0 * hy) - (-b_s * (c - s) + mu_s) / hy2;
                a.set(row, grid.index(i, j - 1), tau * d);
            }
        }
    }
    Ok(a)
}
