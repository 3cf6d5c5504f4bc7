//! Small dense linear algebra. Systems here are at most a few dozen unknowns
//! per block, so plain row-major storage is enough.

use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ x`.
    pub fn tmatvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.rows, x.len());
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] += self[(i, j)] * x[i];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: T) {
        for a in &mut self.data {
            *a *= c;
        }
    }

    /// `Aᵀ B A` for square `B`.
    pub fn congruence(a: &Self, b: &Self) -> Self {
        a.transpose().matmul(&b.matmul(a))
    }

    pub fn symmetrize(&mut self) {
        let half = T::from_f64(0.5).unwrap();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let s = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = s;
                self[(j, i)] = s;
            }
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    /// Returns `None` when the matrix is not numerically positive definite.
    pub fn new(a: &Matrix<T>) -> Option<Self> {
        let n = a.rows();
        debug_assert_eq!(n, a.cols());
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(Self { l })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows();
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                let yk = y[k];
                y[i] -= lik * yk;
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self.l[(k, i)];
                let yk = y[k];
                y[i] -= lki * yk;
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(b.rows(), b.cols());
        let mut col = vec![T::zero(); b.rows()];
        for j in 0..b.cols() {
            for i in 0..b.rows() {
                col[i] = b[(i, j)];
            }
            let x = self.solve(&col);
            for i in 0..b.rows() {
                out[(i, j)] = x[i];
            }
        }
        out
    }
}

/// Gaussian elimination with partial pivoting. `None` on (numerical) singularity.
pub fn lu_solve<T: Real>(a: &Matrix<T>, b: &[T]) -> Option<Vec<T>> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    assert_eq!(n, b.len());
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.max_abs().max(T::min_positive_value());
    let tiny = scale * T::epsilon() * T::from_usize(n.max(1)).unwrap();
    for col in 0..n {
        let (piv, pval) = (col..n)
            .map(|r| (r, m[(r, col)].abs()))
            .fold((col, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pval > tiny) {
            return None;
        }
        if piv != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(piv, j)];
                m[(piv, j)] = tmp;
            }
            x.swap(col, piv);
        }
        for r in (col + 1)..n {
            let f = m[(r, col)] / m[(col, col)];
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                let v = m[(col, j)];
                m[(r, j)] -= f * v;
            }
            let xc = x[col];
            x[r] -= f * xc;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Some(x)
}

/// Symmetric positive definite block-tridiagonal system.
///
/// `diag[k]` is the k-th diagonal block, `upper[k]` couples block `k` with
/// block `k + 1` (so `upper.len() == diag.len() - 1`).
pub fn block_tridiagonal_solve<T: Real>(
    diag: &[Matrix<T>],
    upper: &[Matrix<T>],
    rhs: &[Vec<T>],
) -> Option<Vec<Vec<T>>> {
    let nb = diag.len();
    if nb == 0 {
        return Some(Vec::new());
    }
    assert_eq!(upper.len(), nb - 1);
    assert_eq!(rhs.len(), nb);
    // Block LDLᵀ: S_k = A_k − B_{k−1}ᵀ S_{k−1}⁻¹ B_{k−1}.
    let mut factors: Vec<Cholesky<T>> = Vec::with_capacity(nb);
    let mut y: Vec<Vec<T>> = Vec::with_capacity(nb);
    for k in 0..nb {
        let mut s = diag[k].clone();
        let mut r = rhs[k].clone();
        if k > 0 {
            let b = &upper[k - 1];
            let sinv_b = factors[k - 1].solve_matrix(b);
            let corr = b.transpose().matmul(&sinv_b);
            for i in 0..s.rows() {
                for j in 0..s.cols() {
                    s[(i, j)] -= corr[(i, j)];
                }
            }
            s.symmetrize();
            let prev = factors[k - 1].solve(&y[k - 1]);
            let bt = b.tmatvec(&prev);
            for (ri, bi) in r.iter_mut().zip(bt) {
                *ri -= bi;
            }
        }
        factors.push(Cholesky::new(&s)?);
        y.push(r);
    }
    let mut x: Vec<Vec<T>> = vec![Vec::new(); nb];
    for k in (0..nb).rev() {
        let mut r = y[k].clone();
        if k + 1 < nb {
            let bx = upper[k].matvec(&x[k + 1]);
            for (ri, bi) in r.iter_mut().zip(bx) {
                *ri -= bi;
            }
        }
        x[k] = factors[k].solve(&r);
    }
    Some(x)
}
