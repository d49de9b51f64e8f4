use super::MeshError;

/// Natural cubic spline (zero second derivative at both ends).
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    moments: Vec<f64>,
}

/// Builds the natural cubic spline through `(knots[k], values[k])`.
pub fn natural_spline(knots: &[f64], values: &[f64]) -> Result<NaturalSpline, MeshError> {
    let n = knots.len();
    if n < 2 {
        return Err(MeshError::TooFewKnots(n));
    }
    if values.len() != n {
        return Err(MeshError::ShapeMismatch {
            expected: n,
            got: values.len(),
        });
    }
    if knots.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MeshError::UnorderedKnots);
    }

    // Interior moments M_1..M_{n-2} from the tridiagonal system
    //   h_{k-1} M_{k-1} + 2 (h_{k-1} + h_k) M_k + h_k M_{k+1} = 6 (d_k - d_{k-1})
    // with M_0 = M_{n-1} = 0, solved by the Thomas algorithm.
    let mut moments = vec![0.0; n];
    if n > 2 {
        let m = n - 2;
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let slope: Vec<f64> = (0..n - 1)
            .map(|k| (values[k + 1] - values[k]) / h[k])
            .collect();
        let mut diag = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for r in 0..m {
            let k = r + 1;
            diag[r] = 2.0 * (h[k - 1] + h[k]);
            rhs[r] = 6.0 * (slope[k] - slope[k - 1]);
        }
        for r in 1..m {
            let w = h[r] / diag[r - 1];
            diag[r] -= w * h[r];
            rhs[r] -= w * rhs[r - 1];
        }
        moments[m] = rhs[m - 1] / diag[m - 1];
        for r in (0..m - 1).rev() {
            moments[r + 1] = (rhs[r] - h[r + 1] * moments[r + 2]) / diag[r];
        }
    }

    Ok(NaturalSpline {
        knots: knots.to_vec(),
        values: values.to_vec(),
        moments,
    })
}

impl NaturalSpline {
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.knots.len();
        // Interval containing x; extrapolates with the end cubic pieces.
        let k = match self.knots.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.knots[k], self.knots[k + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * self.values[k]
            + b * self.values[k + 1]
            + ((a * a * a - a) * self.moments[k] + (b * b * b - b) * self.moments[k + 1]) * h * h
                / 6.0
    }

    pub fn second_derivatives(&self) -> &[f64] {
        &self.moments
    }
}
