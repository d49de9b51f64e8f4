//! Banded matrices, no-pivot banded LU and the row-distributed prefix-product
//! chain used by the ParaDIn solvers.
//!
//! Storage is row-indexed dense band: row `r` keeps columns `r - bw ..= r + bw`
//! (clipped at the matrix edges), so reading outside the band yields zero.

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("pivot {pivot:e} below floor at row {row} (matrix singular or ill-conditioned)")]
    SingularPivot { row: usize, pivot: f64 },
    #[error("chain of {levels} levels needs at least as many cores, got {cores}")]
    TooFewCores { levels: usize, cores: usize },
    #[error("row blocks do not tile rows 0..{n}")]
    BadTiling { n: usize },
    #[error("entry ({row}, {col}) lies outside the band")]
    OutOfBand { row: usize, col: usize },
    #[error("empty input")]
    Empty,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    /// Zero matrix; the bandwidth is clamped to `n - 1`.
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        BandedMatrix {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0);
        m.data.fill(1.0);
        m
    }

    pub fn from_dense(rows: &[Vec<f64>], bw: usize) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n, bw);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(LinalgError::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                if r.abs_diff(c) > m.bw {
                    if v != 0.0 {
                        return Err(LinalgError::OutOfBand { row: r, col: c });
                    }
                } else {
                    m.set(r, c, v);
                }
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn width(&self) -> usize {
        2 * self.bw + 1
    }

    /// Column range held by row `r`.
    pub fn row_cols(&self, r: usize) -> Range<usize> {
        r.saturating_sub(self.bw)..(r + self.bw + 1).min(self.n)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if r >= self.n || c >= self.n || r.abs_diff(c) > self.bw {
            0.0
        } else {
            self.data[r * self.width() + c + self.bw - r]
        }
    }

    /// Panics when `(r, c)` is outside the band.
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            r < self.n && c < self.n && r.abs_diff(c) <= self.bw,
            "({r}, {c}) outside band {} of {}x{}",
            self.bw,
            self.n,
            self.n
        );
        let w = self.width();
        self.data[r * w + c + self.bw - r] = v;
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let cur = self.get(r, c);
        self.set(r, c, cur + v);
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|r| (0..self.n).map(|c| self.get(r, c)).collect())
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok((0..self.n)
            .map(|r| self.row_cols(r).map(|c| self.get(r, c) * x[c]).sum())
            .collect())
    }

    /// Largest row 1-norm (the infinity norm).
    pub fn max_row_norm1(&self) -> f64 {
        (0..self.n)
            .map(|r| self.row_cols(r).map(|c| self.get(r, c).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest column 1-norm.
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for r in 0..self.n {
            for c in self.row_cols(r) {
                col[c] += self.get(r, c).abs();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Nonzero entries per row, in ascending column order.
    pub fn sparse_rows(&self) -> SparseRows {
        SparseRows {
            n: self.n,
            bw: self.bw,
            rows: (0..self.n)
                .map(|r| {
                    self.row_cols(r)
                        .filter_map(|c| {
                            let v = self.get(r, c);
                            (v != 0.0).then_some((c, v))
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Row-wise list of the nonzero entries of a banded matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub n: usize,
    pub bw: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

/// Banded product with bandwidth `min(n - 1, bwA + bwB)`. Exact zeros of `A`
/// are skipped, so the cost follows the true sparsity.
pub fn band_mul(a: &BandedMatrix, b: &BandedMatrix) -> Result<BandedMatrix> {
    if a.n != b.n {
        return Err(LinalgError::DimensionMismatch {
            expected: a.n,
            got: b.n,
        });
    }
    let bs = b.sparse_rows();
    let mut out = BandedMatrix::zeros(a.n, a.bw + b.bw);
    let w = out.width();
    for i in 0..a.n {
        let row = &mut out.data[i * w..(i + 1) * w];
        scatter_row(a.row_cols(i).map(|k| (k, a.get(i, k))), &bs, i, out.bw, row);
    }
    Ok(out)
}

/// `row += sum_k p_k * B[k, :]` over the nonzero `p_k`, band-stored around row
/// `i` with half-bandwidth `bw`. Returns the number of multiply-adds.
fn scatter_row(
    p: impl Iterator<Item = (usize, f64)>,
    b: &SparseRows,
    i: usize,
    bw: usize,
    row: &mut [f64],
) -> u64 {
    let mut ops = 0;
    for (k, pk) in p {
        if pk == 0.0 {
            continue;
        }
        for &(j, bkj) in &b.rows[k] {
            row[j + bw - i] += pk * bkj;
            ops += 1;
        }
    }
    ops
}

/// LU factors of a banded matrix computed without pivoting.
#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
}

impl BandedLu {
    /// Factors `a`. Fails when a pivot magnitude falls below
    /// `1e-14 * max_row_norm1(a)`; the reported row is 1-based.
    pub fn factor(a: &BandedMatrix) -> Result<Self> {
        Self::factor_owned(a.clone())
    }

    pub fn factor_owned(mut a: BandedMatrix) -> Result<Self> {
        let n = a.n;
        if n == 0 {
            return Err(LinalgError::Empty);
        }
        let floor = 1e-14 * a.max_row_norm1();
        let bw = a.bw;
        let w = a.width();
        for k in 0..n {
            let pivot = a.data[k * w + bw];
            if !(pivot.abs() > floor) || !pivot.is_finite() {
                return Err(LinalgError::SingularPivot { row: k + 1, pivot });
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let ik = i * w + k + bw - i;
                let l = a.data[ik] / pivot;
                a.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                // row i, columns k+1..=last, against row k
                let (head, tail) = a.data.split_at_mut(i * w);
                let rk = &head[k * w + bw + 1..k * w + bw + 1 + (last - k)];
                let ri = &mut tail[k + 1 + bw - i..k + 1 + bw - i + (last - k)];
                for (x, y) in ri.iter_mut().zip(rk) {
                    *x -= l * y;
                }
            }
        }
        Ok(BandedLu { lu: a })
    }

    pub fn dim(&self) -> usize {
        self.lu.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.lu.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let bw = self.lu.bw;
        let w = self.lu.width();
        let d = &self.lu.data;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= d[i * w + k + bw - i] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= d[i * w + k + bw - i] * x[k];
            }
            x[i] = s / d[i * w + bw];
        }
        Ok(x)
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.lu.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let m = &self.lu;
        let mut x = b.to_vec();
        // U^T y = b
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(m.bw)..i {
                s -= m.get(k, i) * x[k];
            }
            x[i] = s / m.get(i, i);
        }
        // L^T x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + m.bw + 1).min(n) {
                s -= m.get(k, i) * x[k];
            }
            x[i] = s;
        }
        Ok(x)
    }
}

/// Rows of one prefix product (and optionally of the accumulated right-hand
/// side) owned by one core.
#[derive(Debug, Clone, PartialEq)]
pub struct RowBlock {
    /// 1-based core index.
    pub owner: usize,
    /// 1-based chain level.
    pub level: usize,
    pub start: usize,
    pub n: usize,
    pub bw: usize,
    /// Band-stored rows `start..start + len`, `2 bw + 1` entries each.
    pub rows: Vec<f64>,
    /// Accumulated right-hand side on the same rows; empty if not formed.
    pub rhs: Vec<f64>,
}

impl RowBlock {
    pub fn len(&self) -> usize {
        self.rows.len() / (2 * self.bw + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len()
    }

    fn row_entries(&self, local: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let w = 2 * self.bw + 1;
        let i = self.start + local;
        let lo = i.saturating_sub(self.bw);
        let hi = (i + self.bw + 1).min(self.n);
        (lo..hi).map(move |c| (c, self.rows[local * w + c + self.bw - i]))
    }
}

/// Row ranges of `cores` blocks of `m = n / cores` rows; the last block also
/// takes the remainder.
pub fn row_ranges(n: usize, cores: usize) -> Vec<Range<usize>> {
    let m = n / cores;
    (0..cores)
        .map(|s| {
            let end = if s + 1 == cores { n } else { (s + 1) * m };
            s * m..end
        })
        .collect()
}

/// Bandwidths of the prefix products of a chain.
pub fn prefix_bandwidths(bws: &[usize], n: usize) -> Vec<usize> {
    let cap = n.saturating_sub(1);
    let mut out = Vec::with_capacity(bws.len());
    let mut acc = 0;
    for (l, &b) in bws.iter().enumerate() {
        acc = if l == 0 { b.min(cap) } else { (acc + b).min(cap) };
        out.push(acc);
    }
    out
}

/// Kernel run by core `owner` (1-based): its rows of `P^l = A_1 ... A_l` for
/// every level. Returns the blocks and the multiply-add count.
pub fn chain_row_blocks(
    mats: &[&SparseRows],
    owner: usize,
    rows: Range<usize>,
) -> Result<(Vec<RowBlock>, u64)> {
    let first = mats.first().ok_or(LinalgError::Empty)?;
    let n = first.n;
    if let Some(bad) = mats.iter().find(|m| m.n != n) {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: bad.n,
        });
    }
    if rows.end > n {
        return Err(LinalgError::BadTiling { n });
    }
    let bws = prefix_bandwidths(&mats.iter().map(|m| m.bw).collect::<Vec<_>>(), n);
    let mut blocks: Vec<RowBlock> = Vec::with_capacity(mats.len());
    let mut ops = 0;
    for (l, a) in mats.iter().enumerate() {
        let bw = bws[l];
        let w = 2 * bw + 1;
        let mut data = vec![0.0; rows.len() * w];
        for (local, i) in rows.clone().enumerate() {
            let row = &mut data[local * w..(local + 1) * w];
            if l == 0 {
                for &(j, v) in &a.rows[i] {
                    row[j + bw - i] = v;
                }
            } else {
                ops += scatter_row(blocks[l - 1].row_entries(local), a, i, bw, row);
            }
        }
        blocks.push(RowBlock {
            owner,
            level: l + 1,
            start: rows.start,
            n,
            bw,
            rows: data,
            rhs: Vec::new(),
        });
    }
    Ok((blocks, ops))
}

/// Accumulated right-hand sides on one core's rows:
/// `rt^1 = b_1`, `rt^l = P^{l-1} b_l + rt^{l-1}`, summed left to right.
pub fn accumulate_rhs_rows(blocks: &[RowBlock], rhs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    if blocks.len() + 1 < rhs.len() || rhs.is_empty() {
        return Err(LinalgError::DimensionMismatch {
            expected: blocks.len(),
            got: rhs.len(),
        });
    }
    let range = match blocks.first() {
        Some(b) => b.range(),
        None => return Err(LinalgError::Empty),
    };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(rhs.len());
    out.push(rhs[0][range.clone()].to_vec());
    for l in 1..rhs.len() {
        let p = &blocks[l - 1];
        let b = rhs[l];
        let next = (0..range.len())
            .map(|local| {
                let dot: f64 = p.row_entries(local).map(|(k, v)| v * b[k]).sum();
                dot + out[l - 1][local]
            })
            .collect();
        out.push(next);
    }
    Ok(out)
}

/// Reassembles a full matrix and right-hand side from row blocks of one level.
pub fn gather(blocks: &[RowBlock]) -> Result<(BandedMatrix, Vec<f64>)> {
    let first = blocks.first().ok_or(LinalgError::Empty)?;
    let (n, bw) = (first.n, first.bw);
    let mut sorted: Vec<&RowBlock> = blocks.iter().collect();
    sorted.sort_by_key(|b| b.start);
    let mut next = 0;
    let mut m = BandedMatrix::zeros(n, bw);
    let mut rhs = Vec::with_capacity(n);
    for b in sorted {
        if b.start != next || b.bw != bw || b.n != n {
            return Err(LinalgError::BadTiling { n });
        }
        let w = 2 * bw + 1;
        m.data[b.start * w..b.start * w + b.rows.len()].copy_from_slice(&b.rows);
        rhs.extend_from_slice(&b.rhs);
        next = b.range().end;
    }
    if next != n {
        return Err(LinalgError::BadTiling { n });
    }
    Ok((m, rhs))
}

/// One level of a distributed chain: the row blocks of `P^l` from every core
/// and the gathered accumulated right-hand side.
#[derive(Debug, Clone)]
pub struct ChainLevel {
    pub blocks: Vec<RowBlock>,
    pub rhs: Vec<f64>,
}

impl ChainLevel {
    pub fn matrix(&self) -> Result<BandedMatrix> {
        gather(&self.blocks).map(|(m, _)| m)
    }
}

/// The row-distributed prefix-product algorithm, executing the cores one after
/// another. `cores` must be at least the chain length.
pub fn distributed_product_chain(
    a_list: &[BandedMatrix],
    r_list: &[Vec<f64>],
    cores: usize,
) -> Result<Vec<ChainLevel>> {
    let levels = a_list.len();
    if levels == 0 {
        return Err(LinalgError::Empty);
    }
    if r_list.len() != levels {
        return Err(LinalgError::DimensionMismatch {
            expected: levels,
            got: r_list.len(),
        });
    }
    if cores < levels {
        return Err(LinalgError::TooFewCores { levels, cores });
    }
    let n = a_list[0].dim();
    if (levels as f64) >= (n as f64).sqrt() {
        log::warn!("chain of {levels} levels on {n} unknowns exceeds the sqrt(n) regime");
    }
    let sparse: Vec<SparseRows> = a_list.iter().map(|a| a.sparse_rows()).collect();
    let rhs: Vec<&[f64]> = r_list.iter().map(|r| r.as_slice()).collect();
    let mut out: Vec<ChainLevel> = (0..levels)
        .map(|_| ChainLevel {
            blocks: Vec::with_capacity(cores),
            rhs: Vec::with_capacity(n),
        })
        .collect();
    for (s, range) in row_ranges(n, cores).into_iter().enumerate() {
        let refs: Vec<&SparseRows> = sparse.iter().collect();
        let (mut blocks, _) = chain_row_blocks(&refs, s + 1, range)?;
        let acc = accumulate_rhs_rows(&blocks, &rhs)?;
        for (l, (mut b, r)) in blocks.drain(..).zip(acc).enumerate() {
            out[l].rhs.extend_from_slice(&r);
            b.rhs = r;
            out[l].blocks.push(b);
        }
    }
    Ok(out)
}

/// Estimated 1-norm condition numbers of the prefix products `A_1 ... A_l`.
pub fn condition_growth_diagnostic(a_list: &[BandedMatrix]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(a_list.len());
    let mut p: Option<BandedMatrix> = None;
    for a in a_list {
        let next = match &p {
            None => a.clone(),
            Some(prev) => band_mul(prev, a)?,
        };
        let lu = BandedLu::factor(&next)?;
        out.push(next.norm1() * inverse_norm1_estimate(&lu)?);
        p = Some(next);
    }
    Ok(out)
}

/// Hager's estimator of `||A^{-1}||_1` from LU factors.
pub fn inverse_norm1_estimate(lu: &BandedLu) -> Result<f64> {
    let n = lu.dim();
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0;
    for _ in 0..5 {
        let y = lu.solve(&x)?;
        est = y.iter().map(|v| v.abs()).sum();
        let xi: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = lu.solve_transpose(&xi)?;
        let (j, zmax) = z
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bj, bv), (j, &v)| {
                if v.abs() > bv {
                    (j, v.abs())
                } else {
                    (bj, bv)
                }
            });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if zmax <= ztx {
            break;
        }
        x = vec![0.0; n];
        x[j] = 1.0;
    }
    Ok(est)
}

/// Small dense reference routines used to cross-check the banded kernels.
pub mod dense {
    pub type Dense = Vec<Vec<f64>>;

    pub fn identity(n: usize) -> Dense {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    pub fn mul(a: &Dense, b: &Dense) -> Dense {
        let n = a.len();
        let m = b[0].len();
        (0..n)
            .map(|i| {
                (0..m)
                    .map(|j| (0..b.len()).map(|k| a[i][k] * b[k][j]).sum())
                    .collect()
            })
            .collect()
    }

    pub fn mul_vec(a: &Dense, x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    }

    /// Gaussian elimination with partial pivoting; `None` if singular.
    pub fn solve(a: &Dense, b: &[f64]) -> Option<Vec<f64>> {
        let n = a.len();
        let mut m: Dense = a
            .iter()
            .zip(b)
            .map(|(row, &bi)| {
                let mut r = row.clone();
                r.push(bi);
                r
            })
            .collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))?;
            if m[p][k] == 0.0 {
                return None;
            }
            m.swap(k, p);
            for i in k + 1..n {
                let l = m[i][k] / m[k][k];
                for j in k..=n {
                    m[i][j] -= l * m[k][j];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
            x[i] = (m[i][n] - s) / m[i][i];
        }
        Some(x)
    }

    pub fn inverse(a: &Dense) -> Option<Dense> {
        let n = a.len();
        let cols: Option<Vec<Vec<f64>>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                solve(a, &e)
            })
            .collect();
        let cols = cols?;
        Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
    }

    pub fn norm1(a: &Dense) -> f64 {
        (0..a[0].len())
            .map(|j| a.iter().map(|r| r[j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::dense::{self, Dense};
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(rng: &mut ChaCha8Rng, n: usize, bw: usize, diag: f64) -> BandedMatrix {
        let mut m = BandedMatrix::zeros(n, bw);
        for r in 0..n {
            for c in m.row_cols(r) {
                let v = rng.gen_range(-1.0..1.0);
                m.set(r, c, if r == c { v + diag } else { v });
            }
        }
        m
    }

    fn max_diff(a: &Dense, b: &Dense) -> f64 {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn band_storage_reads_zero_outside() {
        let m = BandedMatrix::zeros(5, 1);
        assert_eq!(m.get(0, 4), 0.0);
        assert_eq!(BandedMatrix::zeros(3, 10).bandwidth(), 2);
        assert!(BandedMatrix::from_dense(&[vec![1.0, 2.0], vec![0.0, 1.0]], 0).is_err());
    }

    #[test]
    fn identity_solve() {
        let lu = BandedLu::factor(&BandedMatrix::identity(4)).unwrap();
        assert_eq!(lu.solve(&[1.0, -2.0, 3.0, 4.5]).unwrap(), vec![1.0, -2.0, 3.0, 4.5]);
    }

    #[test]
    fn tridiagonal_solve() {
        let a = BandedMatrix::from_dense(
            &[
                vec![2.0, -1.0, 0.0],
                vec![-1.0, 2.0, -1.0],
                vec![0.0, -1.0, 2.0],
            ],
            1,
        )
        .unwrap();
        let x = BandedLu::factor(&a).unwrap().solve(&[1.0, 1.0, 1.0]).unwrap();
        for (got, want) in x.iter().zip([1.5, 2.0, 1.5]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_pivot_reports_row_one() {
        let a = BandedMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 1.0]], 1).unwrap();
        assert!(matches!(
            BandedLu::factor(&a),
            Err(LinalgError::SingularPivot { row: 1, .. })
        ));
    }

    #[test]
    fn lu_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, bw) in &[(1, 0), (6, 1), (9, 3), (12, 11)] {
            let a = random_band(&mut rng, n, bw, 2.0 * bw as f64 + 2.0);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lu = BandedLu::factor(&a).unwrap();
            let x = lu.solve(&b).unwrap();
            let want = dense::solve(&a.to_dense(), &b).unwrap();
            let res = a.mul_vec(&x).unwrap();
            let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                assert!((x[i] - want[i]).abs() < 1e-12);
                assert!((res[i] - b[i]).abs() / bnorm <= 1e-10);
            }
            let xt = lu.solve_transpose(&b).unwrap();
            let at: Dense = (0..n).map(|i| (0..n).map(|j| a.get(j, i)).collect()).collect();
            let want_t = dense::solve(&at, &b).unwrap();
            for i in 0..n {
                assert!((xt[i] - want_t[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn band_mul_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_band(&mut rng, 8, 2, 0.0);
        let b = random_band(&mut rng, 8, 2, 0.0);
        assert_eq!(band_mul(&a, &BandedMatrix::identity(8)).unwrap(), a);
        let p = band_mul(&a, &b).unwrap();
        assert_eq!(p.bandwidth(), 4);
        let want = dense::mul(&a.to_dense(), &b.to_dense());
        assert!(max_diff(&p.to_dense(), &want) <= 1e-13);

        let t1 = random_band(&mut rng, 10, 1, 0.0);
        let t2 = random_band(&mut rng, 10, 1, 0.0);
        assert_eq!(band_mul(&t1, &t2).unwrap().bandwidth(), 2);
        assert!(band_mul(&t1, &a).is_err());
    }

    #[test]
    fn band_mul_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_band(&mut rng, 8, 1, 0.0);
            let b = random_band(&mut rng, 8, 1, 0.0);
            let c = random_band(&mut rng, 8, 1, 0.0);
            let left = band_mul(&band_mul(&a, &b).unwrap(), &c).unwrap();
            let right = band_mul(&a, &band_mul(&b, &c).unwrap()).unwrap();
            assert!(max_diff(&left.to_dense(), &right.to_dense()) <= 1e-12);
        }
    }

    #[test]
    fn row_ranges_tile() {
        assert_eq!(row_ranges(10, 3), vec![0..3, 3..6, 6..10]);
        assert_eq!(row_ranges(4, 6), vec![0..0, 0..0, 0..0, 0..0, 0..0, 0..4]);
        assert_eq!(prefix_bandwidths(&[2, 2, 2, 2], 7), vec![2, 4, 6, 6]);
    }

    fn dense_chain(a_list: &[BandedMatrix], r_list: &[Vec<f64>]) -> Vec<(Dense, Vec<f64>)> {
        let n = a_list[0].dim();
        let mut p = dense::identity(n);
        let mut rt = vec![0.0; n];
        let mut out = Vec::new();
        for (a, r) in a_list.iter().zip(r_list) {
            let add = dense::mul_vec(&p, r);
            for i in 0..n {
                rt[i] += add[i];
            }
            p = dense::mul(&p, &a.to_dense());
            out.push((p.clone(), rt.clone()));
        }
        out
    }

    #[test]
    fn chain_single_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_band(&mut rng, 6, 1, 3.0);
        let r = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let c = distributed_product_chain(&[a.clone()], &[r.clone()], 1).unwrap();
        assert_eq!(c[0].matrix().unwrap(), a);
        assert_eq!(c[0].rhs, r);
    }

    #[test]
    fn identity_chain_telescopes() {
        let n = 5;
        let mats = vec![BandedMatrix::identity(n); 4];
        let rs: Vec<Vec<f64>> = (0..4).map(|l| vec![l as f64 + 1.0; n]).collect();
        let c = distributed_product_chain(&mats, &rs, 4).unwrap();
        for (l, lev) in c.iter().enumerate() {
            assert_eq!(lev.matrix().unwrap().to_dense(), dense::identity(n));
            let s: f64 = (1..=l + 1).map(|v| v as f64).sum();
            assert!(lev.rhs.iter().all(|&v| v == s));
        }
    }

    #[test]
    fn chain_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mats: Vec<BandedMatrix> = (0..3).map(|_| random_band(&mut rng, 8, 1, 2.0)).collect();
        let rs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let chain = distributed_product_chain(&mats, &rs, 3).unwrap();
        for (lev, (p, rt)) in chain.iter().zip(dense_chain(&mats, &rs)) {
            assert!(max_diff(&lev.matrix().unwrap().to_dense(), &p) <= 1e-12);
            for (a, b) in lev.rhs.iter().zip(&rt) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        assert!(matches!(
            distributed_product_chain(&mats, &rs, 2),
            Err(LinalgError::TooFewCores { .. })
        ));
    }

    #[test]
    fn decoupled_solve_matches_marching() {
        // P^l x^l = rt^l reproduces the bidiagonal recursion A_l x^l = r_l + x^{l-1}
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 9;
        let mats: Vec<BandedMatrix> = (0..4).map(|_| random_band(&mut rng, n, 2, 6.0)).collect();
        let rs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let chain = distributed_product_chain(&mats, &rs, 5).unwrap();
        let mut prev = vec![0.0; n];
        for (l, lev) in chain.iter().enumerate() {
            let b: Vec<f64> = rs[l].iter().zip(&prev).map(|(r, p)| r + p).collect();
            let want = BandedLu::factor(&mats[l]).unwrap().solve(&b).unwrap();
            let got = BandedLu::factor(&lev.matrix().unwrap())
                .unwrap()
                .solve(&lev.rhs)
                .unwrap();
            for i in 0..n {
                assert!((got[i] - want[i]).abs() <= 1e-10);
            }
            prev = want;
        }
    }

    #[test]
    fn gather_rejects_gaps() {
        let mats = vec![BandedMatrix::identity(6); 2];
        let rs = vec![vec![0.0; 6]; 2];
        let chain = distributed_product_chain(&mats, &rs, 3).unwrap();
        let mut blocks = chain[1].blocks.clone();
        blocks.remove(1);
        assert_eq!(gather(&blocks).unwrap_err(), LinalgError::BadTiling { n: 6 });
    }

    #[test]
    fn chain_flops_follow_sparsity() {
        // tridiagonal factors: P^l has 2l+1 nonzeros per row at most
        let n = 40;
        let mut t = BandedMatrix::zeros(n, 1);
        for r in 0..n {
            for c in t.row_cols(r) {
                t.set(r, c, if r == c { 2.0 } else { -0.5 });
            }
        }
        let sparse = t.sparse_rows();
        let (_, ops) = chain_row_blocks(&[&sparse; 4], 1, 0..n).unwrap();
        assert!(ops <= (n * 3 * (3 + 5 + 7)) as u64);
    }

    #[test]
    fn condition_examples() {
        let id = vec![BandedMatrix::identity(6); 4];
        for k in condition_growth_diagnostic(&id).unwrap() {
            assert!((k - 1.0).abs() < 1e-14);
        }
        let mut two = BandedMatrix::identity(6);
        for r in 0..6 {
            two.set(r, r, 2.0);
        }
        for k in condition_growth_diagnostic(&vec![two; 3]).unwrap() {
            assert!((k - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn hager_estimate_bounds_true_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let a = random_band(&mut rng, 7, 2, 1.5);
            let Ok(lu) = BandedLu::factor(&a) else { continue };
            let est = inverse_norm1_estimate(&lu).unwrap();
            let exact = dense::norm1(&dense::inverse(&a.to_dense()).unwrap());
            assert!(est <= exact * (1.0 + 1e-12));
            assert!(est >= exact / 3.0);
        }
    }

    proptest! {
        #[test]
        fn distributed_chain_equals_dense(seed in 0u64..1000, n in 2usize..12, levels in 1usize..5, extra in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mats: Vec<BandedMatrix> = (0..levels).map(|_| random_band(&mut rng, n, 1, 0.0)).collect();
            let rs: Vec<Vec<f64>> = (0..levels)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let chain = distributed_product_chain(&mats, &rs, levels + extra).unwrap();
            for (lev, (p, rt)) in chain.iter().zip(dense_chain(&mats, &rs)) {
                prop_assert!(max_diff(&lev.matrix().unwrap().to_dense(), &p) <= 1e-12);
                for (a, b) in lev.rhs.iter().zip(&rt) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}
