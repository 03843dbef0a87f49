//! Small dense kernels and the sparse solvers used by the steady and
//! unsteady finite element systems.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `y^T A x`.
    pub fn bilinear(&self, y: &[T], x: &[T]) -> T {
        (0..self.rows).map(|i| y[i] * dot(self.row(i), x)).sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn max_asymmetry(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Dense LU factorization with partial pivoting.
#[derive(Clone, Debug)]
pub struct LuFactor<T> {
    n: usize,
    lu: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Real> LuFactor<T> {
    pub fn new(a: &DenseMatrix<T>) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::Solver("LU of a non-square matrix".into()));
        }
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut pivots = vec![0; n];
        let scale = lu.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if lu[i * n + k].abs() > lu[p * n + k].abs() {
                    p = i;
                }
            }
            pivots[k] = p;
            if lu[p * n + k].abs() <= scale * T::epsilon() * T::count(n) {
                return Err(Error::Solver(format!("singular matrix at column {k}")));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
            }
            let inv = T::one() / lu[k * n + k];
            for i in k + 1..n {
                let l = lu[i * n + k] * inv;
                lu[i * n + k] = l;
                if l != T::zero() {
                    for j in k + 1..n {
                        let u = lu[k * n + j];
                        lu[i * n + j] -= l * u;
                    }
                }
            }
        }
        Ok(Self { n, lu, pivots })
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.pivots[k]);
        }
        for i in 0..n {
            let mut s = b[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * b[j];
            }
            b[i] = s / self.lu[i * n + i];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn inverse(&self) -> DenseMatrix<T> {
        let mut inv = DenseMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            let mut e = vec![T::zero(); self.n];
            e[j] = T::one();
            self.solve_in_place(&mut e);
            for i in 0..self.n {
                inv[(i, j)] = e[i];
            }
        }
        inv
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in ascending order and eigenvectors as columns.
pub fn symmetric_eigen<T: Real>(a: &DenseMatrix<T>) -> (Vec<T>, DenseMatrix<T>) {
    let n = a.rows;
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    let frob = a.data.iter().map(|x| *x * *x).sum::<T>().sqrt();
    let tol = frob * T::epsilon() * T::lit(0.1);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol * T::lit(1e-3) {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::two() * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Compressed sparse row matrix with sorted column indices.
#[derive(Clone, Debug)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Sums duplicate entries in insertion order.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Zero matrix with the given (per-row) sparsity pattern.
    pub fn from_pattern(n_cols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let n_rows = rows.len();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let values = vec![T::zero(); col_idx.len()];
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (cols, _) = self.row(i);
        cols.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.position(i, j).map_or(T::zero(), |k| self.values[k])
    }

    /// Adds to an entry of the existing pattern.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[k] += v;
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Replaces row `i` with the identity row.
    pub fn set_identity_row(&mut self, i: usize) {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            self.values[k] = if self.col_idx[k] == i { T::one() } else { T::zero() };
        }
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        for i in 0..self.n_rows {
            let mut s = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn bilinear(&self, y: &[T], x: &[T]) -> T {
        dot(y, &self.matvec(x))
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows).map(|i| self.get(i, i)).collect()
    }

    /// `(lower, upper)` bandwidths.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut up = 0;
        for i in 0..self.n_rows {
            let (cols, _) = self.row(i);
            if let (Some(&first), Some(&last)) = (cols.first(), cols.last()) {
                lo = lo.max(i.saturating_sub(first));
                up = up.max(last.saturating_sub(i));
            }
        }
        (lo, up)
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                d[(i, *c)] += *v;
            }
        }
        d
    }
}

/// Banded LU factorization with partial pivoting.
#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    width: usize,
    /// Row `i` stores columns `i - kl ..= i + ku + kl` (offset by `kl`).
    rows: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Real> BandedLu<T> {
    pub fn new(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.n_rows();
        if n != a.n_cols() {
            return Err(Error::Solver("banded LU of a non-square matrix".into()));
        }
        let (kl, ku) = a.bandwidth();
        let width = 2 * kl + ku + 1;
        let mut rows = vec![T::zero(); n * width];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                rows[i * width + (c + kl - i)] += *v;
            }
        }
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        let scale = rows.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let mut pivots = vec![0; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            for i in k + 1..=last {
                if rows[at(i, k)].abs() > rows[at(p, k)].abs() {
                    p = i;
                }
            }
            pivots[k] = p;
            if rows[at(p, k)].abs() <= scale * T::epsilon() * T::lit(1e-3) {
                return Err(Error::Solver(format!("singular banded matrix at column {k}")));
            }
            let jmax = (k + ku + kl).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    rows.swap(at(k, j), at(p, j));
                }
            }
            let inv = T::one() / rows[at(k, k)];
            for i in k + 1..=last {
                let l = rows[at(i, k)] * inv;
                rows[at(i, k)] = l;
                if l != T::zero() {
                    for j in k + 1..=jmax {
                        let u = rows[at(k, j)];
                        rows[at(i, j)] -= l * u;
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            width,
            rows,
            pivots,
        })
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, kl, w) = (self.n, self.kl, self.width);
        let at = |i: usize, j: usize| i * w + (j + kl - i);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != T::zero() {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.rows[at(i, k)] * bk;
                }
            }
        }
        let ku_total = w - kl - 1;
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + ku_total).min(n - 1) {
                s -= self.rows[at(i, j)] * b[j];
            }
            b[i] = s / self.rows[at(i, i)];
        }
    }
}

/// Incomplete LU factorization without fill-in.
#[derive(Clone, Debug)]
pub struct Ilu0<T> {
    factors: CsrMatrix<T>,
    diag_pos: Vec<usize>,
}

impl<T: Real> Ilu0<T> {
    pub fn new(a: &CsrMatrix<T>) -> Result<Self> {
        let mut f = a.clone();
        let n = f.n_rows;
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            diag_pos[i] = f
                .position(i, i)
                .ok_or_else(|| Error::Solver(format!("missing diagonal in row {i}")))?;
        }
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (f.row_ptr[i], f.row_ptr[i + 1]);
            for k in start..end {
                marker[f.col_idx[k]] = k;
            }
            for k in start..end {
                let col = f.col_idx[k];
                if col >= i {
                    break;
                }
                let pivot = f.values[diag_pos[col]];
                if pivot == T::zero() {
                    return Err(Error::Solver(format!("zero pivot in ILU at row {col}")));
                }
                let l = f.values[k] / pivot;
                f.values[k] = l;
                for kk in diag_pos[col] + 1..f.row_ptr[col + 1] {
                    let j = f.col_idx[kk];
                    let pos = marker[j];
                    if pos != usize::MAX {
                        let u = f.values[kk];
                        f.values[pos] -= l * u;
                    }
                }
            }
            for k in start..end {
                marker[f.col_idx[k]] = usize::MAX;
            }
        }
        Ok(Self {
            factors: f,
            diag_pos,
        })
    }

    pub fn apply(&self, r: &[T], z: &mut [T]) {
        let f = &self.factors;
        let n = f.n_rows;
        for i in 0..n {
            let mut s = r[i];
            for k in f.row_ptr[i]..self.diag_pos[i] {
                s -= f.values[k] * z[f.col_idx[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag_pos[i] + 1..f.row_ptr[i + 1] {
                s -= f.values[k] * z[f.col_idx[k]];
            }
            z[i] = s / f.values[self.diag_pos[i]];
        }
    }
}

/// Restarted GMRES with right ILU(0) preconditioning. Returns the solution
/// and the total number of inner iterations.
pub fn gmres_ilu<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: Option<&[T]>,
    rel_tol: T,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<T>, usize)> {
    let n = a.n_rows();
    let ilu = Ilu0::new(a)?;
    let mut x = x0.map_or_else(|| vec![T::zero(); n], |v| v.to_vec());
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return Ok((vec![T::zero(); n], 0));
    }
    let target = rel_tol * bnorm;
    let mut total = 0;
    let mut r = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    while total < max_iter {
        a.matvec_into(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm2(&r);
        if beta <= target {
            return Ok((x, total));
        }
        let m = restart.min(max_iter - total).max(1);
        let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| *v / beta).collect());
        let mut h = vec![vec![T::zero(); m]; m + 1];
        let (mut cs, mut sn) = (vec![T::zero(); m], vec![T::zero(); m]);
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            ilu.apply(&basis[k], &mut z);
            a.matvec_into(&z, &mut w);
            for j in 0..=k {
                let hjk = dot(&w, &basis[j]);
                h[j][k] = hjk;
                for i in 0..n {
                    w[i] -= hjk * basis[j][i];
                }
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = T::zero();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            k_used = k + 1;
            total += 1;
            if g[k + 1].abs() <= target || hn == T::zero() {
                break;
            }
            basis.push(w.iter().map(|v| *v / hn).collect());
        }
        let mut y = vec![T::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![T::zero(); n];
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                update[i] += *yj * basis[j][i];
            }
        }
        ilu.apply(&update, &mut z);
        for i in 0..n {
            x[i] += z[i];
        }
    }
    a.matvec_into(&x, &mut r);
    let res = r.iter().zip(b).map(|(ri, bi)| (*bi - *ri) * (*bi - *ri)).sum::<T>().sqrt();
    if res <= target {
        Ok((x, total))
    } else {
        Err(Error::Solver(format!(
            "GMRES did not converge in {max_iter} iterations (relative residual {:e})",
            (res / bnorm).as_f64()
        )))
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite
/// systems.
pub fn pcg<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: Option<&[T]>,
    rel_tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, usize)> {
    let n = a.n_rows();
    let inv_diag: Vec<T> = a.diagonal().iter().map(|d| T::one() / *d).collect();
    let mut x = x0.map_or_else(|| vec![T::zero(); n], |v| v.to_vec());
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return Ok((vec![T::zero(); n], 0));
    }
    let mut r = a.matvec(&x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(a, b)| *a * *b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    for it in 0..max_iter {
        if norm2(&r) <= rel_tol * bnorm {
            return Ok((x, it));
        }
        a.matvec_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
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
    if norm2(&r) <= rel_tol * bnorm {
        Ok((x, max_iter))
    } else {
        Err(Error::Solver(format!(
            "PCG did not converge in {max_iter} iterations"
        )))
    }
}

/// Approximate flop count above which [`solve_sparse`] switches from the
/// banded direct solver to preconditioned GMRES.
pub const DIRECT_SOLVE_FLOP_LIMIT: f64 = 4.0e9;

/// Solves `A x = b` with a banded direct factorization when its cost is
/// moderate, and ILU(0)-preconditioned GMRES to a `1e-11` relative residual
/// otherwise.
pub fn solve_sparse<T: Real>(a: &CsrMatrix<T>, b: &[T], guess: Option<&[T]>) -> Result<Vec<T>> {
    let (kl, ku) = a.bandwidth();
    let cost = a.n_rows() as f64 * kl as f64 * (2 * kl + ku) as f64;
    if cost <= DIRECT_SOLVE_FLOP_LIMIT {
        let lu = BandedLu::new(a)?;
        let mut x = b.to_vec();
        lu.solve_in_place(&mut x);
        Ok(x)
    } else {
        let tol = T::lit(1e-11).max(T::epsilon() * T::lit(100.0));
        gmres_ilu(a, b, guess, tol, 80, 20_000).map(|(x, _)| x)
    }
}
