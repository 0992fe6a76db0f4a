//! Small dense linear algebra: complex matrices, Hermitian eigensolver,
//! and 3x3 real symmetric helpers used by the moment-matrix machinery.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_traits::{One, Zero};

use crate::scalar::{cre, Cx, Real};

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Cx<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Cx::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Cx::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Cx<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diagonal(diag: &[Cx<T>]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// `|v><w|`
    pub fn outer(v: &[Cx<T>], w: &[Cx<T>]) -> Self {
        Self::from_fn(v.len(), w.len(), |i, j| v[i] * w[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Cx<T>] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Cx<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Cx<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: Cx<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_re(&self, s: T) -> Self {
        self.scale(cre(s))
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(self.cols, v.len(), "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(Cx::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn trace(&self) -> Cx<T> {
        (0..self.rows.min(self.cols)).fold(Cx::zero(), |acc, i| acc + self[(i, i)])
    }

    /// `Tr[self * rhs]` without forming the product.
    pub fn trace_product(&self, rhs: &Self) -> Cx<T> {
        assert_eq!(self.cols, rhs.rows);
        assert_eq!(self.rows, rhs.cols);
        let mut acc = Cx::zero();
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc = acc + self[(i, k)] * rhs[(k, i)];
            }
        }
        acc
    }

    pub fn commutator(&self, rhs: &Self) -> Self {
        &self.matmul(rhs) - &rhs.matmul(self)
    }

    pub fn anticommutator(&self, rhs: &Self) -> Self {
        &self.matmul(rhs) + &rhs.matmul(self)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> T {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).norm()))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn hermitian_residue(&self) -> T {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.is_square() && self.hermitian_residue() <= tol
    }

    /// `max |U^dagger U - I|`
    pub fn unitarity_residue(&self) -> T {
        self.adjoint()
            .matmul(self)
            .max_abs_diff(&Self::identity(self.cols))
    }

    pub fn map(&self, f: impl Fn(Cx<T>) -> Cx<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Cx<T>] {
        &mut self.data
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = Cx<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Cx<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cx<T> {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Add for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn add(self, rhs: Self) -> CMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a + *b).collect(),
        }
    }
}

impl<T: Real> Sub for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn sub(self, rhs: Self) -> CMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a - *b).collect(),
        }
    }
}

impl<T: Real> Mul for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn mul(self, rhs: Self) -> CMatrix<T> {
        self.matmul(rhs)
    }
}

pub fn inner<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Cx<T> {
    a.iter()
        .zip(b)
        .fold(Cx::zero(), |acc, (x, y)| acc + x.conj() * *y)
}

pub fn norm_sqr<T: Real>(v: &[Cx<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues ascending; the
/// k-th column of `vectors` belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T> {
    pub values: Vec<T>,
    pub vectors: CMatrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    pub fn vector(&self, k: usize) -> Vec<Cx<T>> {
        self.vectors.column(k)
    }

    /// `V f(D) V^dagger`
    pub fn reconstruct(&self, f: impl Fn(T) -> Cx<T>) -> CMatrix<T> {
        let n = self.values.len();
        let fd: Vec<Cx<T>> = self.values.iter().map(|&x| f(x)).collect();
        CMatrix::from_fn(n, n, |i, j| {
            (0..n).fold(Cx::zero(), |acc, k| {
                acc + self.vectors[(i, k)] * fd[k] * self.vectors[(j, k)].conj()
            })
        })
    }
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
///
/// Sweeps until the off-diagonal Frobenius norm drops below
/// `1e-13 * ||A||_F` (floored at the scalar precision).
pub fn hermitian_eigen<T: Real>(a: &CMatrix<T>) -> HermitianEigen<T> {
    assert!(a.is_square(), "eigendecomposition needs a square matrix");
    let n = a.rows();
    let mut m = a.clone();
    // symmetrize the input so tiny non-Hermitian noise does not bias the result
    for i in 0..n {
        m[(i, i)] = cre(m[(i, i)].re);
        for j in i + 1..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * cre(T::lit(0.5));
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    let mut v = CMatrix::identity(n);
    let scale = m.frobenius().max(T::min_positive_value());
    let tol = T::floor_tol(1e-13) * scale;

    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&m);
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let g = m[(p, q)];
                let r = g.norm();
                if r <= T::min_positive_value() {
                    continue;
                }
                let phase = g / cre(r);
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (aqq - app) / (T::lit(2.0) * r);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                // V restricted to (p, q): [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
                let vpp = cre(c);
                let vpq = cre(s);
                let vqp = -phase.conj() * cre(s);
                let vqq = phase.conj() * cre(c);
                rotate(&mut m, &mut v, p, q, [vpp, vpq, vqp, vqq]);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[(i, i)]
            .re
            .partial_cmp(&m[(j, j)].re)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    HermitianEigen { values, vectors }
}

fn off_diagonal_norm<T: Real>(m: &CMatrix<T>) -> T {
    let n = m.rows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc = acc + m[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

#[inline]
fn rotate<T: Real>(m: &mut CMatrix<T>, v: &mut CMatrix<T>, p: usize, q: usize, r: [Cx<T>; 4]) {
    let [vpp, vpq, vqp, vqq] = r;
    let n = m.rows();
    // columns: A <- A V
    for k in 0..n {
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        m[(k, p)] = akp * vpp + akq * vqp;
        m[(k, q)] = akp * vpq + akq * vqq;
    }
    // rows: A <- V^dagger A
    for k in 0..n {
        let apk = m[(p, k)];
        let aqk = m[(q, k)];
        m[(p, k)] = vpp.conj() * apk + vqp.conj() * aqk;
        m[(q, k)] = vpq.conj() * apk + vqq.conj() * aqk;
    }
    m[(p, q)] = Cx::zero();
    m[(q, p)] = Cx::zero();
    m[(p, p)] = cre(m[(p, p)].re);
    m[(q, q)] = cre(m[(q, q)].re);
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * vpp + vkq * vqp;
        v[(k, q)] = vkp * vpq + vkq * vqq;
    }
}

/// `exp(-i * angle * H)` for Hermitian `H`, via its eigendecomposition.
pub fn expm_hermitian<T: Real>(h: &CMatrix<T>, angle: T) -> CMatrix<T> {
    let eig = hermitian_eigen(h);
    eig.reconstruct(|x| Cx::from_polar(T::one(), -angle * x))
}

// ---------------------------------------------------------------------------
// 3x3 real matrices

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

pub fn mat3_zero<T: Real>() -> Mat3<T> {
    [[T::zero(); 3]; 3]
}

pub fn mat3_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = mat3_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat3_transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let mut out = mat3_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat3_sub<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = out[i][j] - b[i][j];
        }
    }
    out
}

pub fn mat3_scale<T: Real>(a: &Mat3<T>, s: T) -> Mat3<T> {
    let mut out = *a;
    out.iter_mut().flatten().for_each(|x| *x = *x * s);
    out
}

pub fn mat3_apply<T: Real>(a: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [0, 1, 2].map(|i| (0..3).map(|k| a[i][k] * v[k]).sum())
}

pub fn quad3<T: Real>(a: &Mat3<T>, v: &Vec3<T>) -> T {
    let av = mat3_apply(a, v);
    (0..3).map(|i| v[i] * av[i]).sum()
}

pub fn dot3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3<T: Real>(a: &Vec3<T>) -> T {
    dot3(a, a).sqrt()
}

pub fn normalize3<T: Real>(a: &Vec3<T>) -> Option<Vec3<T>> {
    let n = norm3(a);
    if n <= T::min_positive_value() || !n.is_finite() {
        None
    } else {
        Some(a.map(|x| x / n))
    }
}

pub fn cross3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn mat3_max_abs_asym<T: Real>(a: &Mat3<T>) -> T {
    let mut m = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - a[j][i]).abs());
        }
    }
    m
}

/// Eigen-decomposition of a real symmetric 3x3 matrix (ascending values,
/// columns of the returned matrix are eigenvectors).
pub fn sym3_eigen<T: Real>(a: &Mat3<T>) -> (Vec3<T>, Mat3<T>) {
    let mut m = *a;
    for i in 0..3 {
        for j in i + 1..3 {
            let avg = (m[i][j] + m[j][i]) * T::lit(0.5);
            m[i][j] = avg;
            m[j][i] = avg;
        }
    }
    let mut v = [[T::zero(); 3]; 3];
    (0..3).for_each(|i| v[i][i] = T::one());
    let scale = m
        .iter()
        .flatten()
        .map(|x| *x * *x)
        .sum::<T>()
        .sqrt()
        .max(T::min_positive_value());
    let tol = T::floor_tol(1e-15) * scale;
    for _ in 0..MAX_SWEEPS {
        let off = (m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2]).sqrt();
        if off <= tol {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = m[p][q];
            if apq.abs() <= T::min_positive_value() {
                continue;
            }
            let tau = (m[q][q] - m[p][p]) / (T::lit(2.0) * apq);
            let t = if tau >= T::zero() {
                T::one() / (tau + (T::one() + tau * tau).sqrt())
            } else {
                -T::one() / (-tau + (T::one() + tau * tau).sqrt())
            };
            let c = T::one() / (T::one() + t * t).sqrt();
            let s = t * c;
            for k in 0..3 {
                let mkp = m[k][p];
                let mkq = m[k][q];
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let mpk = m[p][k];
                let mqk = m[q][k];
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
            m[p][q] = T::zero();
            m[q][p] = T::zero();
            for row in v.iter_mut() {
                let vkp = row[p];
                let vkq = row[q];
                row[p] = c * vkp - s * vkq;
                row[q] = s * vkp + c * vkq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| {
        m[i][i]
            .partial_cmp(&m[j][j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.map(|i| m[i][i]);
    let mut vecs = mat3_zero();
    for (k, &src) in order.iter().enumerate() {
        for i in 0..3 {
            vecs[i][k] = v[i][src];
        }
    }
    (values, vecs)
}

/// Largest eigenvalue and its unit eigenvector.
pub fn sym3_max_eigen<T: Real>(a: &Mat3<T>) -> (T, Vec3<T>) {
    let (vals, vecs) = sym3_eigen(a);
    let mut v = [vecs[0][2], vecs[1][2], vecs[2][2]];
    // fix the sign so results are reproducible
    let lead = v
        .iter()
        .copied()
        .fold(T::zero(), |m, x| if x.abs() > m.abs() { x } else { m });
    if lead < T::zero() {
        v = v.map(|x| -x);
    }
    (vals[2], v)
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix, discarding
/// eigenvalues below `rel_cut * lambda_max`. Returns `None` when the matrix
/// is numerically zero.
pub fn sym3_pinv<T: Real>(a: &Mat3<T>, rel_cut: T) -> Option<Mat3<T>> {
    let (vals, vecs) = sym3_eigen(a);
    let lmax = vals[2];
    if !(lmax > T::min_positive_value()) {
        return None;
    }
    let cut = rel_cut * lmax;
    let mut out = mat3_zero();
    for k in 0..3 {
        if vals[k] <= cut {
            continue;
        }
        let inv = T::one() / vals[k];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = out[i][j] + vecs[i][k] * vecs[j][k] * inv;
            }
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cx;

    fn sample_hermitian(n: usize) -> CMatrix<f64> {
        CMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (i as f64, j as f64);
            if i == j {
                cx(a * 0.7 - 1.0, 0.0)
            } else {
                let re = ((a + 1.0) * (b + 2.0)).sin();
                let im = (a - b) * 0.3;
                cx(re, if i < j { im } else { -im })
            }
        })
    }

    #[test]
    fn jacobi_reconstructs_hermitian_matrix() {
        for n in [1, 2, 5, 12, 21] {
            let mut a = sample_hermitian(n);
            // make it exactly Hermitian
            a = &a + &a.adjoint();
            let eig = hermitian_eigen(&a);
            let back = eig.reconstruct(cre);
            assert!(back.max_abs_diff(&a) < 1e-12, "n = {n}");
            assert!(eig.vectors.unitarity_residue() < 1e-12);
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn jacobi_handles_diagonal_and_degenerate_input() {
        let a = CMatrix::from_diagonal(&[cre(2.0), cre(-1.0), cre(2.0)]);
        let eig = hermitian_eigen(&a);
        assert_eq!(eig.values, vec![-1.0, 2.0, 2.0]);
        let z = CMatrix::<f64>::zeros(4, 4);
        assert!(hermitian_eigen(&z).values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn expm_of_hermitian_is_unitary() {
        let mut a = sample_hermitian(7);
        a = &a + &a.adjoint();
        let u = expm_hermitian(&a, 0.37);
        assert!(u.unitarity_residue() < 1e-12);
        let back = expm_hermitian(&a, -0.37);
        assert!(u.matmul(&back).max_abs_diff(&CMatrix::identity(7)) < 1e-12);
    }

    #[test]
    fn sym3_eigen_and_pinv() {
        let a: Mat3<f64> = [[2.0, 0.5, 0.1], [0.5, 1.0, -0.3], [0.1, -0.3, 0.5]];
        let (vals, vecs) = sym3_eigen(&a);
        for k in 0..3 {
            let v = [vecs[0][k], vecs[1][k], vecs[2][k]];
            let av = mat3_apply(&a, &v);
            for i in 0..3 {
                assert!((av[i] - vals[k] * v[i]).abs() < 1e-14);
            }
        }
        let inv = sym3_pinv(&a, 1e-10).unwrap();
        let id = mat3_mul(&a, &inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[i][j] - want).abs() < 1e-12);
            }
        }
        let singular: Mat3<f64> = [[0.0, 0.0, 0.0], [0.0, 2.5, 0.0], [0.0, 0.0, 2.5]];
        let p = sym3_pinv(&singular, 1e-10).unwrap();
        assert_eq!(p[0][0], 0.0);
        assert!((p[1][1] - 0.4).abs() < 1e-15);
        assert!(sym3_pinv(&mat3_zero::<f64>(), 1e-10).is_none());
    }

    #[test]
    fn f32_jacobi_is_usable() {
        let a = CMatrix::<f32>::from_fn(3, 3, |i, j| {
            if i == j {
                cre(i as f32)
            } else {
                cre(0.25)
            }
        });
        let eig = hermitian_eigen(&a);
        assert!(eig.reconstruct(cre).max_abs_diff(&a) < 1e-5);
    }
}
