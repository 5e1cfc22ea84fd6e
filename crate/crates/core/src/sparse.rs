//! Compressed-row matrices, Jacobi-preconditioned conjugate gradients and a
//! dense Cholesky solver used as an oracle on small systems.

use std::io::Write;

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("conjugate gradients stopped after {iterations} iterations with relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("dimension mismatch: matrix is {rows}×{cols}, vector has {len} entries")]
    Dimension { rows: usize, cols: usize, len: usize },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
}

/// Sparse matrix in compressed-row layout with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed
    /// in input order, so equal inputs give bitwise-equal matrices.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; rows + 1];
        for &(i, j, _) in triplets {
            assert!(i < rows && j < cols, "triplet ({i}, {j}) outside a {rows}×{cols} matrix");
            counts[i + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        // bucket by row, keeping input order
        let mut fill = counts.clone();
        let mut bucket = vec![(0usize, T::zero()); triplets.len()];
        for &(i, j, v) in triplets {
            bucket[fill[i]] = (j, v);
            fill[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..rows {
            let row = &mut bucket[counts[i]..counts[i + 1]];
            row.sort_by_key(|e| e.0);
            for &(j, v) in row.iter() {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { rows, cols, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, T::one())).collect();
        Self::from_triplets(n, n, &triplets)
    }

    pub fn from_dense(rows: usize, cols: usize, dense: &[T]) -> Self {
        let triplets: Vec<_> = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .filter(|&(i, j)| dense[i * cols + j] != T::zero())
            .map(|(i, j)| (i, j, dense[i * cols + j]))
            .collect();
        Self::from_triplets(rows, cols, &triplets)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column/value pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.cols);
        for (i, yi) in y.iter_mut().enumerate().take(self.rows) {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji| / max |a|`, or `None` when the pattern is not symmetric.
    pub fn asymmetry(&self) -> Option<T> {
        if self.rows != self.cols {
            return None;
        }
        let scale = self.max_abs();
        let mut worst = T::zero();
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                let r = self.row_ptr[j]..self.row_ptr[j + 1];
                let k = self.col_idx[r.clone()].binary_search(&i).ok()?;
                worst = worst.max((v - self.values[r.start + k]).abs());
            }
        }
        Some(if scale > T::zero() { worst / scale } else { worst })
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows * self.cols];
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                out[i * self.cols + j] = v;
            }
        }
        out
    }

    /// Coordinate text dump, one `i j value` line per stored entry.
    pub fn write_coordinate(&self, mut out: impl Write) -> std::io::Result<()> {
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                writeln!(out, "{i} {j} {:.17e}", v.to_f64_lossy())?;
            }
        }
        Ok(())
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Iteration controls for [`solve_cg`].
#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    pub rel_tol: f64,
    /// Defaults to `20 √n + 500`.
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { rel_tol: 1e-12, max_iter: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgSolution<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// True relative residual `|b - A x| / |b|`.
    pub residual: f64,
}

pub fn iteration_cap(n: usize) -> usize {
    (20.0 * (n as f64).sqrt()).ceil() as usize + 500
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn solve_cg<T: Real>(a: &CsrMatrix<T>, b: &[T], options: CgOptions) -> Result<CgSolution<T>, SolveError> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(SolveError::Dimension { rows: a.rows(), cols: a.cols(), len: b.len() });
    }
    let cap = options.max_iter.unwrap_or_else(|| iteration_cap(n));
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![T::zero(); n];
    if b_norm == T::zero() {
        return Ok(CgSolution { x, iterations: 0, residual: 0.0 });
    }
    let inv_diag: Vec<T> =
        a.diagonal().into_iter().map(|d| if d > T::zero() { T::one() / d } else { T::one() }).collect();
    let tol = T::lit(options.rel_tol) * b_norm;
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(r, d)| *r * *d).collect();
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while iterations < cap {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        if dot(&r, &r).sqrt() <= tol {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let ax = a.mul_vec(&x);
    let true_res: T = b.iter().zip(&ax).map(|(b, y)| (*b - *y) * (*b - *y)).sum::<T>().sqrt();
    let residual = (true_res / b_norm).to_f64_lossy();
    let recursive = (dot(&r, &r).sqrt() / b_norm).to_f64_lossy();
    if recursive > options.rel_tol {
        return Err(SolveError::NotConverged { iterations, residual });
    }
    Ok(CgSolution { x, iterations, residual })
}

/// Solves a dense symmetric positive definite system (row-major `a`).
pub fn cholesky_solve<T: Real>(n: usize, a: &[T], b: &[T]) -> Result<Vec<T>, SolveError> {
    if a.len() != n * n || b.len() != n {
        return Err(SolveError::Dimension { rows: n, cols: a.len() / n.max(1), len: b.len() });
    }
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= T::zero() {
            return Err(SolveError::NotPositiveDefinite { pivot: j, value: d.to_f64_lossy() });
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] = y[i] - l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] = y[i] - l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 2.0), (0, 1, 0.5), (0, 0, 3.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.to_dense(), vec![3.0, 1.5, 2.0, 0.0]);
        assert_eq!(m.asymmetry(), Some(0.5 / 3.0));
    }

    #[test]
    fn identity_in_one_iteration() {
        let b = vec![1.0, -2.0, 3.5];
        let s = solve_cg(&CsrMatrix::identity(3), &b, CgOptions::default()).unwrap();
        assert_eq!(s.x, b);
        assert_eq!(s.iterations, 1);
    }

    #[test]
    fn diagonal_system() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 4.0)]);
        let s = solve_cg(&m, &[1.0, 1.0], CgOptions::default()).unwrap();
        assert_eq!(s.x, vec![1.0, 0.25]);
    }

    #[test]
    fn matches_cholesky() {
        let m = laplacian_1d(40);
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let cg = solve_cg(&m, &b, CgOptions::default()).unwrap();
        assert!(cg.residual <= 1e-12);
        let exact = cholesky_solve(40, &m.to_dense(), &b).unwrap();
        for (a, e) in cg.x.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-10);
        }
    }

    #[test]
    fn cap_reports_residual() {
        let m = laplacian_1d(100);
        let b = vec![1.0; 100];
        match solve_cg(&m, &b, CgOptions { rel_tol: 1e-12, max_iter: Some(3) }) {
            Err(SolveError::NotConverged { iterations: 3, residual }) => assert!(residual > 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_rhs() {
        let s = solve_cg(&laplacian_1d(5), &[0.0; 5], CgOptions::default()).unwrap();
        assert_eq!(s.x, vec![0.0; 5]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn indefinite_cholesky() {
        assert!(matches!(
            cholesky_solve(2, &[1.0, 2.0, 2.0, 1.0], &[1.0, 1.0]),
            Err(SolveError::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn single_precision_cg() {
        let m = CsrMatrix::<f32>::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 8.0)]);
        let s = solve_cg(&m, &[1.0, 1.0], CgOptions { rel_tol: 1e-6, max_iter: None }).unwrap();
        assert!((s.x[1] - 0.125).abs() < 1e-6);
    }

    #[test]
    fn coordinate_dump() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, -0.5)]);
        let mut buf = Vec::new();
        m.write_coordinate(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("1 0 -5.0"));
    }
}
