//! Sparse SPD solves and dual/primal pairings.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<T>,
    pub symmetric: bool,
}

impl<T: Real> CsrMatrix<T> {
    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &mut Vec<(u32, u32, T)>,
        symmetric: bool,
    ) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| ((r as u64) << 32) | c as u64);
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx: Vec<u32> = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(u32, u32)> = None;
        for &(r, c, v) in triplets.iter() {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
            row_ptr[r as usize + 1] = col_idx.len();
        }
        for i in 1..=nrows {
            row_ptr[i] = row_ptr[i].max(row_ptr[i - 1]);
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = T::zero();
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[idx] * x[self.col_idx[idx] as usize];
            }
            y[r] = acc;
        }
    }

    pub fn mul_vec_alloc(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec(x, &mut y);
        y
    }

    /// Explicit transpose (kept around for the weak-form adjoints).
    pub fn transpose(&self) -> CsrMatrix<T> {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for i in 1..=self.ncols {
            counts[i] += counts[i - 1];
        }
        let row_ptr = counts.clone();
        let mut col_idx = vec![0u32; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        let mut next = counts;
        for r in 0..self.nrows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[idx] as usize;
                let slot = next[c];
                next[c] += 1;
                col_idx[slot] = r as u32;
                values[slot] = self.values[idx];
            }
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
            symmetric: self.symmetric,
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.nrows];
        for r in 0..self.nrows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[idx] as usize == r {
                    d[r] = self.values[idx];
                }
            }
        }
        d
    }

    /// Maximum absolute entry.
    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// C = A * B (used by the operator-identity checks on small meshes).
    pub fn matmul(&self, other: &CsrMatrix<T>) -> CsrMatrix<T> {
        assert_eq!(self.ncols, other.nrows);
        let mut triplets: Vec<(u32, u32, T)> = Vec::new();
        let mut acc = vec![T::zero(); other.ncols];
        let mut touched: Vec<u32> = Vec::new();
        for r in 0..self.nrows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let k = self.col_idx[idx] as usize;
                let va = self.values[idx];
                for jdx in other.row_ptr[k]..other.row_ptr[k + 1] {
                    let c = other.col_idx[jdx] as usize;
                    if acc[c] == T::zero() && !touched.contains(&(c as u32)) {
                        touched.push(c as u32);
                    }
                    acc[c] += va * other.values[jdx];
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                triplets.push((r as u32, c, acc[c as usize]));
                acc[c as usize] = T::zero();
            }
            touched.clear();
        }
        CsrMatrix::from_triplets(self.nrows, other.ncols, &mut triplets, false)
    }

    /// Write the matrix in plain-text coordinate format (row col value).
    pub fn dump_coordinate(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "% {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                writeln!(w, "{} {} {:.17e}", r, self.col_idx[idx], self.values[idx])?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Diagonal,
}

#[derive(Debug, Clone)]
pub struct SolverConfig<T> {
    /// Relative residual tolerance.
    pub rtol: T,
    /// Maximum iterations; 0 means 10 * ndof.
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            rtol: T::of(1e-12).max(T::epsilon() * T::of(100.0)),
            max_iter: 0,
            preconditioner: Preconditioner::Diagonal,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn with_rtol(mut self, rtol: T) -> Self {
        self.rtol = rtol;
        self
    }
}

/// Preconditioner action z = P^{-1} r.
pub trait PrecOp<T>: Send + Sync {
    fn apply(&self, r: &[T], z: &mut [T]);
}

/// Dense Cholesky factorization of a small SPD matrix.
#[derive(Debug, Clone)]
pub struct DenseChol<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Real> DenseChol<T> {
    /// Factor a dense symmetric positive definite matrix (row-major).
    pub fn factor(n: usize, a: &[T]) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut l = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= T::zero() {
                        return Err(Error::invalid("matrix not positive definite"));
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(DenseChol { n, l })
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            let mut sum = x[i];
            for k in 0..i {
                sum -= self.l[i * n + k] * x[k];
            }
            x[i] = sum / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in i + 1..n {
                sum -= self.l[k * n + i] * x[k];
            }
            x[i] = sum / self.l[i * n + i];
        }
    }

    /// Compress the factor by dropping the exact zeros outside its fill
    /// pattern (banded matrices with periodic corners factor into a band
    /// plus a few dense trailing rows).
    pub fn compress(&self) -> SparseChol<T> {
        let n = self.n;
        let mut row_start = Vec::with_capacity(n);
        let mut row_vals = Vec::new();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for i in 0..n {
            let mut start = i;
            for j in 0..=i {
                if self.l[i * n + j] != T::zero() {
                    start = j;
                    break;
                }
            }
            row_start.push(start);
            row_vals.extend_from_slice(&self.l[i * n + start..i * n + i + 1]);
            row_ptr.push(row_vals.len());
        }
        // transpose pattern for the backward sweep
        let mut col_entries: Vec<Vec<(u32, T)>> = vec![Vec::new(); n];
        for i in 0..n {
            let start = row_start[i];
            for (off, j) in (start..=i).enumerate() {
                if j < i {
                    col_entries[j].push((i as u32, row_vals[row_ptr[i] + off]));
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut col_rows = Vec::new();
        let mut col_vals = Vec::new();
        col_ptr.push(0);
        for j in 0..n {
            for &(r, v) in &col_entries[j] {
                col_rows.push(r);
                col_vals.push(v);
            }
            col_ptr.push(col_rows.len());
        }
        let diag = (0..n).map(|i| self.l[i * n + i]).collect();
        SparseChol {
            n,
            row_start,
            row_ptr,
            row_vals,
            col_ptr,
            col_rows,
            col_vals,
            diag,
        }
    }
}

/// Sparse lower Cholesky factor for fast repeated solves.
#[derive(Debug, Clone)]
pub struct SparseChol<T> {
    n: usize,
    row_start: Vec<usize>,
    row_ptr: Vec<usize>,
    row_vals: Vec<T>,
    col_ptr: Vec<usize>,
    col_rows: Vec<u32>,
    col_vals: Vec<T>,
    diag: Vec<T>,
}

impl<T: Real> SparseChol<T> {
    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.n;
        // forward: L y = x
        for i in 0..n {
            let start = self.row_start[i];
            let vals = &self.row_vals[self.row_ptr[i]..self.row_ptr[i + 1]];
            let mut sum = x[i];
            for (off, j) in (start..i).enumerate() {
                sum -= vals[off] * x[j];
            }
            x[i] = sum / self.diag[i];
        }
        // backward: L^T z = y; row i of L^T is column i of L
        for i in (0..n).rev() {
            let mut sum = x[i];
            for idx in self.col_ptr[i]..self.col_ptr[i + 1] {
                sum -= self.col_vals[idx] * x[self.col_rows[idx] as usize];
            }
            x[i] = sum / self.diag[i];
        }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Duality pairing of a dual vector with a primal vector.
pub fn pair<T: Real>(dual: &[T], primal: &[T]) -> Result<T> {
    if dual.len() != primal.len() {
        return Err(Error::invalid(format!(
            "pairing length mismatch: {} vs {}",
            dual.len(),
            primal.len()
        )));
    }
    Ok(dot(dual, primal))
}

struct DiagonalPrec<T> {
    inv_diag: Vec<T>,
}

impl<T: Real> PrecOp<T> for DiagonalPrec<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        for i in 0..r.len() {
            z[i] = r[i] * self.inv_diag[i];
        }
    }
}

/// Preconditioned conjugate gradients for SPD systems.
///
/// Returns c with ||A c - r|| <= rtol * ||r||. Deterministic: fixed
/// iteration order, no data-dependent reductions.
pub fn solve_spd<T: Real>(a: &CsrMatrix<T>, rhs: &[T], cfg: &SolverConfig<T>) -> Result<Vec<T>> {
    match cfg.preconditioner {
        Preconditioner::None => solve_spd_with(a, rhs, cfg.rtol, cfg.max_iter, None),
        Preconditioner::Diagonal => {
            let prec = DiagonalPrec {
                inv_diag: a
                    .diagonal()
                    .iter()
                    .map(|&d| if d == T::zero() { T::one() } else { T::one() / d })
                    .collect(),
            };
            solve_spd_with(a, rhs, cfg.rtol, cfg.max_iter, Some(&prec))
        }
    }
}

/// CG with an arbitrary preconditioner action.
pub fn solve_spd_with<T: Real>(
    a: &CsrMatrix<T>,
    rhs: &[T],
    rtol: T,
    max_iter: usize,
    prec: Option<&dyn PrecOp<T>>,
) -> Result<Vec<T>> {
    let n = a.nrows;
    assert_eq!(rhs.len(), n);
    let rhs_norm = norm2(rhs);
    let mut x = vec![T::zero(); n];
    if rhs_norm == T::zero() {
        return Ok(x);
    }
    let max_iter = if max_iter == 0 { 10 * n } else { max_iter };
    let apply_prec = |res: &[T], z: &mut [T]| match prec {
        Some(p) => p.apply(res, z),
        None => z.copy_from_slice(res),
    };

    let mut res = rhs.to_vec();
    let mut z = vec![T::zero(); n];
    apply_prec(&res, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&res, &z);
    let mut ap = vec![T::zero(); n];
    let target = rtol * rhs_norm;

    for iter in 0..max_iter {
        if norm2(&res) <= target {
            return Ok(x);
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            return Err(Error::SolverFailure {
                residual: norm2(&res).to_f64().unwrap_or(f64::NAN),
                target: target.to_f64().unwrap_or(f64::NAN),
                iterations: iter,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            res[i] -= alpha * ap[i];
        }
        apply_prec(&res, &mut z);
        let rz_new = dot(&res, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm2(&res) <= target {
        return Ok(x);
    }
    Err(Error::SolverFailure {
        residual: norm2(&res).to_f64().unwrap_or(f64::NAN),
        target: target.to_f64().unwrap_or(f64::NAN),
        iterations: max_iter,
    })
}
