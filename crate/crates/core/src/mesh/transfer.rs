use super::{natural_spline, Field, GridSpec, MeshError};

/// Number of coarse interior nodes obtained from `fine` interior nodes with
/// factor `cs`.
///
/// When `fine + 1` is divisible by `cs` the coarse grid takes the fine nodes
/// `cs, 2cs, ...` and is nested. Otherwise the count is `fine / cs` and the
/// coarse nodes generally fall between fine nodes.
pub fn coarse_count(fine: usize, cs: usize) -> Result<usize, MeshError> {
    if cs == 0 {
        return Err(MeshError::ZeroFactor);
    }
    let count = if (fine + 1) % cs == 0 {
        (fine + 1) / cs - 1
    } else {
        fine / cs
    };
    if count == 0 {
        return Err(MeshError::EmptyCoarseGrid { count: fine, factor: cs });
    }
    Ok(count)
}

/// True when every coarse node coincides with a fine node.
pub fn is_nested(fine: &GridSpec, coarse: &GridSpec) -> bool {
    fine.same_extents(coarse)
        && (fine.nx + 1) % (coarse.nx + 1) == 0
        && (fine.ny + 1) % (coarse.ny + 1) == 0
}

/// Fine node (1-based) closest to coarse node `ic`; ties go to the lower index.
fn nearest_fine(fine_n: usize, coarse_n: usize, ic: usize) -> usize {
    if (fine_n + 1) % (coarse_n + 1) == 0 {
        return ic * ((fine_n + 1) / (coarse_n + 1));
    }
    // Coarse node sits at fraction ic / (coarse_n + 1) of the extent.
    let pos = ic as f64 * (fine_n + 1) as f64 / (coarse_n + 1) as f64;
    let lower = pos.floor();
    let idx = if pos - lower > 0.5 { lower + 1.0 } else { lower } as usize;
    idx.clamp(1, fine_n)
}

/// Injection restriction onto an arbitrary coarser grid with the same
/// extents. Each coarse node takes the value of the coinciding fine node, or
/// of the nearest one when the grids are not nested. No arithmetic is
/// performed on the values.
pub fn restrict(fine: &[f64], fine_grid: &GridSpec, coarse_grid: &GridSpec) -> Result<Field, MeshError> {
    fine_grid.check_field(fine.len())?;
    if !fine_grid.same_extents(coarse_grid) {
        return Err(MeshError::ExtentMismatch);
    }
    let cols: Vec<usize> = (1..=coarse_grid.nx)
        .map(|i| nearest_fine(fine_grid.nx, coarse_grid.nx, i))
        .collect();
    let mut out = Vec::with_capacity(coarse_grid.ns());
    for jc in 1..=coarse_grid.ny {
        let jf = nearest_fine(fine_grid.ny, coarse_grid.ny, jc);
        for &i_f in &cols {
            out.push(fine[fine_grid.index(i_f, jf)]);
        }
    }
    Ok(Field(out))
}

/// Strict injection with factor `cs`: requires nested node sets and returns
/// the coarse field together with its grid.
pub fn restrict_injection(
    fine: &[f64],
    fine_grid: &GridSpec,
    cs: usize,
) -> Result<(Field, GridSpec), MeshError> {
    if cs == 0 {
        return Err(MeshError::ZeroFactor);
    }
    for n in [fine_grid.nx, fine_grid.ny] {
        if (n + 1) % cs != 0 {
            return Err(MeshError::NotNested { fine: n, factor: cs });
        }
    }
    let coarse_grid = fine_grid.with_spatial(
        coarse_count(fine_grid.nx, cs)?,
        coarse_count(fine_grid.ny, cs)?,
    )?;
    let field = restrict(fine, fine_grid, &coarse_grid)?;
    Ok((field, coarse_grid))
}

/// Direction-by-direction natural cubic spline prolongation.
///
/// Rows are interpolated in x first, then every fine column in y. The
/// domain-edge values returned by `edge(x, y)` are used as end knots in both
/// passes.
pub fn prolong_cubic_spline(
    coarse: &[f64],
    coarse_grid: &GridSpec,
    fine_grid: &GridSpec,
    edge: impl Fn(f64, f64) -> f64,
) -> Result<Field, MeshError> {
    coarse_grid.check_field(coarse.len())?;
    if !coarse_grid.same_extents(fine_grid) {
        return Err(MeshError::ExtentMismatch);
    }
    let (ncx, ncy) = (coarse_grid.nx, coarse_grid.ny);
    let (nfx, nfy) = (fine_grid.nx, fine_grid.ny);

    let xknots: Vec<f64> = (0..=ncx + 1).map(|i| coarse_grid.x(i)).collect();
    let yknots: Vec<f64> = (0..=ncy + 1).map(|j| coarse_grid.y(j)).collect();

    // x pass: values on (fine x nodes) x (coarse y rows).
    let mut rows = vec![0.0; nfx * ncy];
    let mut vals = vec![0.0; ncx + 2];
    for jc in 1..=ncy {
        let y = coarse_grid.y(jc);
        vals[0] = edge(coarse_grid.x_left, y);
        vals[1..=ncx].copy_from_slice(&coarse[(jc - 1) * ncx..jc * ncx]);
        vals[ncx + 1] = edge(coarse_grid.x_right, y);
        let s = natural_spline(&xknots, &vals)?;
        for i in 1..=nfx {
            rows[(jc - 1) * nfx + (i - 1)] = s.eval(fine_grid.x(i));
        }
    }

    // y pass along each fine column.
    let mut out = vec![0.0; fine_grid.ns()];
    let mut col = vec![0.0; ncy + 2];
    for i in 1..=nfx {
        let x = fine_grid.x(i);
        col[0] = edge(x, coarse_grid.y_left);
        for jc in 1..=ncy {
            col[jc] = rows[(jc - 1) * nfx + (i - 1)];
        }
        col[ncy + 1] = edge(x, coarse_grid.y_right);
        let s = natural_spline(&yknots, &col)?;
        for j in 1..=nfy {
            out[fine_grid.index(i, j)] = s.eval(fine_grid.y(j));
        }
    }
    Ok(Field(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_grid;
    use proptest::prelude::*;

    fn grid(nx: usize, ny: usize) -> GridSpec {
        make_grid(0.0, 1.0, 0.0, 1.0, 1.0, nx, ny, 1).unwrap()
    }

    #[test]
    fn identity_restriction() {
        let g = grid(5, 4);
        let u: Vec<f64> = (0..g.ns()).map(|k| k as f64 * 0.37 - 2.0).collect();
        let (c, cg) = restrict_injection(&u, &g, 1).unwrap();
        assert_eq!(cg, g);
        assert_eq!(c.0, u);
    }

    #[test]
    fn odd_index_drop() {
        let u = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let fine = make_grid(0.0, 1.0, 0.0, 1.0, 1.0, 7, 3, 1).unwrap();
        let mut field = Vec::new();
        for _ in 0..3 {
            field.extend_from_slice(&u);
        }
        let (c, cg) = restrict_injection(&field, &fine, 2).unwrap();
        assert_eq!((cg.nx, cg.ny), (3, 1));
        assert_eq!(c.0, vec![2.0, 4.0, 6.0]);
        let g = grid(8, 3);
        assert!(matches!(
            restrict_injection(&vec![0.0; 24], &g, 2),
            Err(MeshError::NotNested { .. })
        ));
    }

    #[test]
    fn constants_survive_both_directions() {
        let fine = grid(11, 7);
        let coarse = fine.with_spatial(5, 3).unwrap();
        let u = vec![2.5; fine.ns()];
        let c = restrict(&u, &fine, &coarse).unwrap();
        assert!(c.iter().all(|&v| v == 2.5));
        let p = prolong_cubic_spline(&c, &coarse, &fine, |_, _| 2.5).unwrap();
        assert!(p.iter().all(|&v| (v - 2.5).abs() < 1e-14));
    }

    #[test]
    fn linear_fields_are_reproduced() {
        let fine = grid(9, 9);
        let coarse = fine.with_spatial(4, 4).unwrap();
        let lin = |x: f64, y: f64| 1.5 * x - 0.5 * y + 0.25;
        let c = Field::sample(&coarse, lin);
        let p = prolong_cubic_spline(&c, &coarse, &fine, lin).unwrap();
        let exact = Field::sample(&fine, lin);
        for (a, b) in p.iter().zip(exact.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn nearest_node_restriction_when_not_nested() {
        let fine = grid(8, 1);
        let coarse = fine.with_spatial(4, 1).unwrap();
        assert!(!is_nested(&fine, &coarse));
        // fine nodes at k/9, coarse nodes at 0.2, 0.4, 0.6, 0.8
        let u: Vec<f64> = (1..=8).map(|k| k as f64).collect();
        let c = restrict(&u, &fine, &coarse).unwrap();
        assert_eq!(c.0, vec![2.0, 4.0, 5.0, 7.0]);
    }

    #[test]
    fn cubic_row_matches_moment_oracle() {
        // u(x) = x^3 on a single coarse row with 3 interior nodes plus edges.
        let coarse = grid(3, 1);
        let fine = grid(39, 1);
        let f = |x: f64| x * x * x;
        let c = Field::sample(&coarse, |x, _| f(x));
        // the y pass is trivially constant in y when the edge data matches
        let p = prolong_cubic_spline(&c, &coarse, &fine, |x, _| f(x)).unwrap();

        // oracle: dense Gaussian elimination on the natural-spline moment system
        let xs: Vec<f64> = (0..5).map(|k| k as f64 * 0.25).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let n = xs.len();
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        a[0][0] = 1.0;
        a[n - 1][n - 1] = 1.0;
        for k in 1..n - 1 {
            let h0 = xs[k] - xs[k - 1];
            let h1 = xs[k + 1] - xs[k];
            a[k][k - 1] = h0;
            a[k][k] = 2.0 * (h0 + h1);
            a[k][k + 1] = h1;
            b[k] = 6.0 * ((ys[k + 1] - ys[k]) / h1 - (ys[k] - ys[k - 1]) / h0);
        }
        for c0 in 0..n {
            for r in c0 + 1..n {
                let w = a[r][c0] / a[c0][c0];
                for cc in c0..n {
                    a[r][cc] -= w * a[c0][cc];
                }
                b[r] -= w * b[c0];
            }
        }
        let mut m = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|cc| a[r][cc] * m[cc]).sum();
            m[r] = (b[r] - s) / a[r][r];
        }
        let oracle = |x: f64| {
            let k = ((x / 0.25).floor() as usize).min(n - 2);
            let h = xs[k + 1] - xs[k];
            let aa = (xs[k + 1] - x) / h;
            let bb = (x - xs[k]) / h;
            aa * ys[k] + bb * ys[k + 1] + ((aa.powi(3) - aa) * m[k] + (bb.powi(3) - bb) * m[k + 1]) * h * h / 6.0
        };
        let mut max_err: f64 = 0.0;
        for i in 1..=fine.nx {
            let x = fine.x(i);
            assert!((p[i - 1] - oracle(x)).abs() < 1e-12);
            max_err = max_err.max((p[i - 1] - f(x)).abs());
        }
        // natural end conditions cost accuracy on a cubic, but not much
        assert!(max_err < 0.05 && max_err > 1e-6);
    }

    proptest! {
        #[test]
        fn restriction_is_linear(
            seed in proptest::collection::vec(-10.0f64..10.0, 2 * 63),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let fine = grid(9, 7);
            let coarse = fine.with_spatial(4, 3).unwrap();
            let (u, v) = seed.split_at(63);
            let mix: Vec<f64> = u.iter().zip(v).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = restrict(&mix, &fine, &coarse).unwrap();
            let ru = restrict(u, &fine, &coarse).unwrap();
            let rv = restrict(v, &fine, &coarse).unwrap();
            for k in 0..lhs.len() {
                prop_assert_eq!(lhs[k], alpha * ru[k] + beta * rv[k]);
            }
        }

        #[test]
        fn prolong_restrict_recovers_linear_traces(
            a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
        ) {
            let fine = grid(11, 7);
            let coarse = fine.with_spatial(5, 3).unwrap();
            let lin = |x: f64, y: f64| a * x + b * y + c;
            let u = Field::sample(&fine, lin);
            let r = restrict(&u, &fine, &coarse).unwrap();
            let p = prolong_cubic_spline(&r, &coarse, &fine, lin).unwrap();
            let scale = u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for k in 0..u.len() {
                prop_assert!((p[k] - u[k]).abs() <= 1e-12 * scale);
            }
        }
    }
}
