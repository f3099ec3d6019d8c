//! Sparse matrices, LU factorization with partial pivoting, and a 1-norm
//! condition estimator.
//!
//! Every solver in this crate funnels its linear algebra through this
//! module: the power-flow Jacobian, the decoupled B matrices, and the
//! admittance matrix all live in [`SparseMatrix`]. The factorization is a
//! left-looking column LU with partial pivoting and a dense working
//! column, which is plenty for desk-scale grids while keeping the code
//! free of external solver dependencies.

use std::io::{self, BufRead, Write};
use std::ops::{Add, AddAssign, Mul};
use std::str::FromStr;

use num_traits::Zero;
use thiserror::Error;

use crate::scalar::{norm_inf, Scalar};

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("entry ({row}, {col}) outside {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("matrix is singular (pivot {pivot} of {n})")]
    Singular { pivot: usize, n: usize },
    #[error("matrix must be square, got {n_rows}x{n_cols}")]
    NotSquare { n_rows: usize, n_cols: usize },
    #[error("malformed triplet line {line}: {msg}")]
    BadTriplet { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Compressed sparse row matrix.
///
/// Entries within a row are sorted by column and duplicate coordinates are
/// summed during construction, so the stored form is canonical: two
/// matrices assembled from the same triplets in any order compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<S> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_ind: Vec<usize>,
    values: Vec<S>,
}

impl<S: Copy + Zero + AddAssign + PartialEq> SparseMatrix<S> {
    /// Builds a matrix from (row, col, value) triplets.
    ///
    /// Duplicates are summed; exact zeros that result from summation are
    /// kept so the sparsity pattern of an assembly never depends on the
    /// state it was evaluated at.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, S)>,
    ) -> Result<Self, LinalgError> {
        let mut entries: Vec<(usize, usize, S)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(LinalgError::IndexOutOfRange {
                    row: r,
                    col: c,
                    n_rows,
                    n_cols,
                });
            }
            entries.push((r, c, v));
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_ind = Vec::with_capacity(entries.len());
        let mut values: Vec<S> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry emitted") += v;
            } else {
                col_ind.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_ind,
            values,
        })
    }

    pub fn zero(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_ind: Vec::new(),
            values: Vec::new(),
        }
    }
}

impl<S: Copy> SparseMatrix<S> {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterator over the stored entries of one row as (col, value).
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_ind[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c, v))
    }

    /// Stored value at (r, c), or None if the coordinate is not in the pattern.
    pub fn get(&self, r: usize, c: usize) -> Option<S> {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_ind[span.clone()]
            .binary_search(&c)
            .ok()
            .map(|k| self.values[span.start + k])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// Applies `f` to every stored value, keeping the pattern.
    pub fn map<U: Copy>(&self, f: impl Fn(S) -> U) -> SparseMatrix<U> {
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_ind: self.col_ind.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Mutable access to the value slice (pattern-preserving refill).
    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }
}

impl<S: Copy + Zero + AddAssign + PartialEq> SparseMatrix<S> {
    /// Submatrix with the given rows and columns, re-indexed in the order
    /// they appear in `rows` / `cols`.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.n_cols];
        for (new_c, &c) in cols.iter().enumerate() {
            col_map[c] = new_c;
        }
        let mut triplets = Vec::new();
        for (new_r, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                let new_c = col_map[c];
                if new_c != usize::MAX {
                    triplets.push((new_r, new_c, v));
                }
            }
        }
        // indices are in range by construction
        Self::from_triplets(rows.len(), cols.len(), triplets).expect("select in range")
    }
}

impl<S> SparseMatrix<S>
where
    S: Copy + Zero + Add<Output = S> + Mul<Output = S> + AddAssign,
{
    /// Matrix-vector product A * x.
    pub fn mat_vec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.n_cols, "mat_vec dimension mismatch");
        let mut y = vec![S::zero(); self.n_rows];
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = S::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_ind[k]];
            }
            *yr = acc;
        }
        y
    }
}

impl<T: Scalar> SparseMatrix<T> {
    /// Largest absolute value of any stored entry.
    pub fn max_abs(&self) -> T {
        norm_inf(&self.values)
    }

    /// 1-norm (maximum absolute column sum).
    pub fn norm_1(&self) -> T {
        let mut col_sum = vec![T::zero(); self.n_cols];
        for (_, c, v) in self.triplets() {
            col_sum[c] += v.abs();
        }
        norm_inf(&col_sum)
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> T {
        (0..self.n_rows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum())
            .fold(T::zero(), T::max)
    }

    /// Writes the matrix as coordinate-triplet text: one `row col value`
    /// line per stored entry, row-major. A `dims` header line carries the
    /// shape so all-zero trailing rows survive the round trip.
    pub fn write_coord(&self, mut w: impl Write) -> Result<(), LinalgError> {
        writeln!(w, "dims {} {}", self.n_rows, self.n_cols)?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{} {} {}", r, c, v)?;
        }
        Ok(())
    }

    /// Parses coordinate-triplet text produced by [`Self::write_coord`].
    pub fn read_coord(r: impl BufRead) -> Result<Self, LinalgError>
    where
        T: FromStr,
    {
        let mut dims: Option<(usize, usize)> = None;
        let mut triplets = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let bad = |msg: &str| LinalgError::BadTriplet {
                line: idx + 1,
                msg: msg.to_string(),
            };
            if dims.is_none() {
                if parts.next() != Some("dims") {
                    return Err(bad("expected `dims <rows> <cols>` header"));
                }
                let nr = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad row count"))?;
                let nc = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad col count"))?;
                dims = Some((nr, nc));
                continue;
            }
            let row: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad row index"))?;
            let col: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad col index"))?;
            let val: T = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad value"))?;
            triplets.push((row, col, val));
        }
        let (nr, nc) = dims.ok_or(LinalgError::BadTriplet {
            line: 0,
            msg: "missing dims header".to_string(),
        })?;
        Self::from_triplets(nr, nc, triplets)
    }
}

/// LU factors of a square sparse matrix with partial (row) pivoting.
///
/// Conceptually `P A = L U`. Column k of `L` stores its off-diagonal
/// entries under original row indices; `U` is stored by columns with
/// pivot-order row indices, diagonal separate.
#[derive(Debug, Clone)]
pub struct Factorization<T> {
    n: usize,
    /// pivot_row[k] = original row index chosen as the k-th pivot
    pivot_row: Vec<usize>,
    /// L columns: (original row index, multiplier), unit diagonal implicit
    lower: Vec<Vec<(usize, T)>>,
    /// U columns: (pivot index k < j, value)
    upper: Vec<Vec<(usize, T)>>,
    diag: Vec<T>,
}

/// Factorizes a square sparse matrix, reporting the pivot index reached on
/// singularity. Pivots smaller than `n * eps * max|A|` are treated as zero.
pub fn factorize<T: Scalar>(a: &SparseMatrix<T>) -> Result<Factorization<T>, LinalgError> {
    if a.n_rows() != a.n_cols() {
        return Err(LinalgError::NotSquare {
            n_rows: a.n_rows(),
            n_cols: a.n_cols(),
        });
    }
    let n = a.n_rows();
    let tiny = T::of(n as f64) * T::epsilon() * a.max_abs();

    // columns of A, gathered once
    let at = transpose_pattern(a);

    let mut lower: Vec<Vec<(usize, T)>> = Vec::with_capacity(n);
    let mut upper: Vec<Vec<(usize, T)>> = Vec::with_capacity(n);
    let mut diag = Vec::with_capacity(n);
    let mut pivot_row = Vec::with_capacity(n);
    let mut pivoted = vec![false; n];
    let mut work = vec![T::zero(); n];

    #[allow(clippy::needless_range_loop)] // j drives pivoting, not just at[j]
    for j in 0..n {
        // scatter column j of A
        for &(r, v) in &at[j] {
            work[r] = v;
        }
        // eliminate with the already-computed columns of L
        let mut u_col = Vec::new();
        for k in 0..j {
            let ukj = work[pivot_row[k]];
            if ukj != T::zero() {
                u_col.push((k, ukj));
                work[pivot_row[k]] = T::zero();
                for &(i, lik) in &lower[k] {
                    work[i] -= lik * ukj;
                }
            }
        }
        // partial pivot over the rows not yet used
        let mut piv = usize::MAX;
        let mut piv_abs = T::zero();
        for (i, &used) in pivoted.iter().enumerate() {
            if !used && work[i].abs() > piv_abs {
                piv_abs = work[i].abs();
                piv = i;
            }
        }
        if piv == usize::MAX || piv_abs <= tiny {
            return Err(LinalgError::Singular { pivot: j, n });
        }
        let d = work[piv];
        let mut l_col = Vec::new();
        for (i, &used) in pivoted.iter().enumerate() {
            if !used && i != piv && work[i] != T::zero() {
                l_col.push((i, work[i] / d));
            }
            work[i] = T::zero();
        }
        pivoted[piv] = true;
        pivot_row.push(piv);
        diag.push(d);
        lower.push(l_col);
        upper.push(u_col);
    }

    Ok(Factorization {
        n,
        pivot_row,
        lower,
        upper,
        diag,
    })
}

fn transpose_pattern<T: Scalar>(a: &SparseMatrix<T>) -> Vec<Vec<(usize, T)>> {
    let mut cols: Vec<Vec<(usize, T)>> = vec![Vec::new(); a.n_cols()];
    for (r, c, v) in a.triplets() {
        cols[c].push((r, v));
    }
    cols
}

impl<T: Scalar> Factorization<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n, "solve dimension mismatch");
        // forward: L y = P b, working in original row indices
        let mut z = b.to_vec();
        let mut y = vec![T::zero(); self.n];
        for k in 0..self.n {
            let yk = z[self.pivot_row[k]];
            y[k] = yk;
            if yk != T::zero() {
                for &(i, lik) in &self.lower[k] {
                    z[i] -= lik * yk;
                }
            }
        }
        // backward: U x = y, column-oriented
        for j in (0..self.n).rev() {
            let xj = y[j] / self.diag[j];
            y[j] = xj;
            if xj != T::zero() {
                for &(k, ukj) in &self.upper[j] {
                    y[k] -= ukj * xj;
                }
            }
        }
        y
    }

    /// Solves A' x = b (used by the condition estimator).
    pub fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n, "solve dimension mismatch");
        // U' w = b: forward substitution over U columns
        let mut w = b.to_vec();
        for j in 0..self.n {
            let mut acc = w[j];
            for &(k, ukj) in &self.upper[j] {
                acc -= ukj * w[k];
            }
            w[j] = acc / self.diag[j];
        }
        // L' v = w: backward over L columns, then undo the row permutation
        let mut x = vec![T::zero(); self.n];
        for k in (0..self.n).rev() {
            let mut acc = w[k];
            for &(i, lik) in &self.lower[k] {
                acc -= lik * x[i];
            }
            x[self.pivot_row[k]] = acc;
        }
        x
    }
}

/// Order-of-magnitude 1-norm condition estimate, Hager/Higham style.
///
/// Runs a few power-iteration sweeps on A^-1 using the existing factors,
/// so the cost is a handful of solves. Good to about a factor of 10,
/// which is all the divergence forensics need.
pub fn condition_estimate<T: Scalar>(f: &Factorization<T>, a: &SparseMatrix<T>) -> T {
    let n = f.dim();
    if n == 0 {
        return T::one();
    }
    let inv_n = T::one() / T::of(n as f64);
    let mut x = vec![inv_n; n];
    let mut inv_norm = T::zero();
    let mut visited = vec![false; n];
    for iter in 0..5 {
        let y = f.solve(&x);
        let y_norm: T = y.iter().map(|v| v.abs()).sum();
        if y_norm > inv_norm {
            inv_norm = y_norm;
        }
        let xi: Vec<T> = y
            .iter()
            .map(|&v| if v < T::zero() { -T::one() } else { T::one() })
            .collect();
        let z = f.solve_transpose(&xi);
        let (mut j_best, mut z_best) = (0usize, T::zero());
        for (j, &zj) in z.iter().enumerate() {
            if zj.abs() > z_best {
                z_best = zj.abs();
                j_best = j;
            }
        }
        let z_dot_x: T = z.iter().zip(&x).map(|(&a, &b)| a * b).sum();
        if (iter > 0 && z_best <= z_dot_x) || visited[j_best] {
            break;
        }
        visited[j_best] = true;
        x = vec![T::zero(); n];
        x[j_best] = T::one();
    }
    a.norm_1() * inv_norm
}
