//! Collective spin operators in the Dicke basis.
//!
//! Basis ordering is by excitation count: index `k = 0..=2j` carries the
//! `S_z` eigenvalue `m = k - j`. Every module in the crate shares it.

use std::fmt;

use num_traits::Zero;

use crate::error::{invalid, Result};
use crate::linalg::{cross3, expm_hermitian, hermitian_eigen, norm3, CMatrix, Vec3};
use crate::scalar::{cre, cx, Cx, Real};

/// Fixed-particle-number symmetric subspace: spin `j = n/2`, dimension `n + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinSector {
    particles: usize,
}

impl SpinSector {
    pub fn from_particles(particles: usize) -> Self {
        Self { particles }
    }

    pub fn particles(self) -> usize {
        self.particles
    }

    /// `2j`
    pub fn twice_j(self) -> usize {
        self.particles
    }

    pub fn j<T: Real>(self) -> T {
        T::from_usize_lossy(self.particles) / T::lit(2.0)
    }

    pub fn dim(self) -> usize {
        self.particles + 1
    }

    /// `S_z` eigenvalue of basis index `k`.
    #[inline]
    pub fn m<T: Real>(self, k: usize) -> T {
        (T::from_usize_lossy(2 * k) - T::from_usize_lossy(self.particles)) / T::lit(2.0)
    }

    /// `m_k^2`, computed from integers.
    #[inline]
    pub fn m_squared<T: Real>(self, k: usize) -> T {
        let d = 2 * k as i64 - self.particles as i64;
        T::from_i64(d * d).unwrap() / T::lit(4.0)
    }

    /// Matrix element `<k+1| S_+ |k> = sqrt((2j - k)(k + 1))`.
    #[inline]
    pub fn ladder<T: Real>(self, k: usize) -> T {
        T::from_usize_lossy((self.particles - k) * (k + 1)).sqrt()
    }
}

impl fmt::Display for SpinSector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "j={}/2", self.particles)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn unit<T: Real>(self) -> Vec3<T> {
        match self {
            Axis::X => [T::one(), T::zero(), T::zero()],
            Axis::Y => [T::zero(), T::one(), T::zero()],
            Axis::Z => [T::zero(), T::zero(), T::one()],
        }
    }
}

/// A dense operator on one spin sector.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix<T> {
    sector: SpinSector,
    entries: CMatrix<T>,
}

impl<T: Real> OperatorMatrix<T> {
    pub fn new(sector: SpinSector, entries: CMatrix<T>) -> Result<Self> {
        if entries.rows() != sector.dim() || entries.cols() != sector.dim() {
            return Err(invalid(
                "entries",
                format!(
                    "expected {0}x{0} for {sector}, got {1}x{2}",
                    sector.dim(),
                    entries.rows(),
                    entries.cols()
                ),
            ));
        }
        Ok(Self { sector, entries })
    }

    pub fn sector(&self) -> SpinSector {
        self.sector
    }

    pub fn entries(&self) -> &CMatrix<T> {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix<T> {
        self.entries
    }
}

/// Unit direction in the yz plane: `(0, cos theta, sin theta)`.
pub fn yz_direction<T: Real>(theta: T) -> Vec3<T> {
    [T::zero(), theta.cos(), theta.sin()]
}

/// Unit direction from polar/azimuthal angles.
pub fn polar_direction<T: Real>(polar: T, azimuth: T) -> Vec3<T> {
    [
        polar.sin() * azimuth.cos(),
        polar.sin() * azimuth.sin(),
        polar.cos(),
    ]
}

/// Writes `(n . S) v` into `out`, using the tridiagonal structure of the
/// spin matrices.
pub fn apply_spin_along<T: Real>(dir: &Vec3<T>, sector: SpinSector, v: &[Cx<T>], out: &mut [Cx<T>]) {
    let dim = sector.dim();
    debug_assert_eq!(v.len(), dim);
    debug_assert_eq!(out.len(), dim);
    let half = T::lit(0.5);
    // S_x + i S_y style pieces: lower = coefficient of v[k-1], upper = of v[k+1]
    let lower_factor = cx(dir[0] * half, -dir[1] * half);
    let upper_factor = cx(dir[0] * half, dir[1] * half);
    for k in 0..dim {
        let mut acc = v[k] * cre(dir[2] * sector.m::<T>(k));
        if k > 0 {
            acc = acc + v[k - 1] * lower_factor * cre(sector.ladder::<T>(k - 1));
        }
        if k + 1 < dim {
            acc = acc + v[k + 1] * upper_factor * cre(sector.ladder::<T>(k));
        }
        out[k] = acc;
    }
}

pub fn spin_along<T: Real>(dir: &Vec3<T>, sector: SpinSector) -> OperatorMatrix<T> {
    let dim = sector.dim();
    let mut m = CMatrix::zeros(dim, dim);
    let mut basis = vec![Cx::zero(); dim];
    let mut col = vec![Cx::zero(); dim];
    for j in 0..dim {
        basis.iter_mut().for_each(|z| *z = Cx::zero());
        basis[j] = cre(T::one());
        apply_spin_along(dir, sector, &basis, &mut col);
        for i in 0..dim {
            m[(i, j)] = col[i];
        }
    }
    OperatorMatrix {
        sector,
        entries: m,
    }
}

/// `S_x`, `S_y` or `S_z` in the given sector.
pub fn spin_operator<T: Real>(axis: Axis, sector: SpinSector) -> OperatorMatrix<T> {
    spin_along(&axis.unit(), sector)
}

/// `cos(theta) S_y + sin(theta) S_z`, the yz-plane measurement family.
pub fn direction_operator<T: Real>(theta: T, sector: SpinSector) -> OperatorMatrix<T> {
    spin_along(&yz_direction(theta), sector)
}

/// Diagonal of `exp(i mu2/2 S_z^2)`.
pub fn oat_phases<T: Real>(mu2: T, sector: SpinSector) -> Vec<Cx<T>> {
    let half = mu2 / T::lit(2.0);
    (0..sector.dim())
        .map(|k| Cx::from_polar(T::one(), half * sector.m_squared::<T>(k)))
        .collect()
}

fn check_unit<T: Real>(axis: &Vec3<T>) -> Result<()> {
    let n = norm3(axis);
    if !n.is_finite() || (n - T::one()).abs() > T::floor_tol(1e-10) {
        return Err(invalid(
            "axis",
            format!("twisting axis must be a unit vector, |n| = {n}"),
        ));
    }
    Ok(())
}

/// One-axis-twisting unitary `exp(i mu2/2 (n . S)^2)`.
///
/// `axis = None` is the z axis, which gives a diagonal matrix. Other axes
/// go through the eigendecomposition of `n . S`.
pub fn oat_unitary<T: Real>(
    mu2: T,
    sector: SpinSector,
    axis: Option<&Vec3<T>>,
) -> Result<OperatorMatrix<T>> {
    match axis {
        None => Ok(OperatorMatrix {
            sector,
            entries: CMatrix::from_diagonal(&oat_phases(mu2, sector)),
        }),
        Some(n) => {
            check_unit(n)?;
            let half = mu2 / T::lit(2.0);
            let eig = hermitian_eigen(spin_along(n, sector).entries());
            let entries = eig.reconstruct(|x| Cx::from_polar(T::one(), half * x * x));
            Ok(OperatorMatrix { sector, entries })
        }
    }
}

/// Rotation `exp(-i angle n . S)`.
pub fn rotation<T: Real>(axis: &Vec3<T>, angle: T, sector: SpinSector) -> OperatorMatrix<T> {
    OperatorMatrix {
        sector,
        entries: expm_hermitian(spin_along(axis, sector).entries(), angle),
    }
}

/// A rotation `R` with `R S_z R^dagger = n . S`.
pub fn rotation_taking_z_to<T: Real>(target: &Vec3<T>, sector: SpinSector) -> Result<OperatorMatrix<T>> {
    check_unit(target)?;
    let z = Axis::Z.unit::<T>();
    let axis = cross3(&z, target);
    let s = norm3(&axis);
    let angle = target[2].max(-T::one()).min(T::one()).acos();
    if s <= T::floor_tol(1e-14) {
        // parallel or antiparallel to z
        let x = Axis::X.unit::<T>();
        return Ok(rotation(&x, angle, sector));
    }
    Ok(rotation(&axis.map(|c| c / s), angle, sector))
}

/// Spin coherent state pointing along `(polar, azimuth)`.
pub fn coherent_state<T: Real>(sector: SpinSector, polar: T, azimuth: T) -> Vec<Cx<T>> {
    let n = sector.particles();
    let (c, s) = ((polar / T::lit(2.0)).cos(), (polar / T::lit(2.0)).sin());
    (0..=n)
        .map(|k| {
            let amp = T::from_f64(binomial(n, k) as f64).unwrap().sqrt()
                * c.powi(k as i32)
                * s.powi((n - k) as i32);
            Cx::from_polar(amp, -sector.m::<T>(k) * azimuth)
        })
        .collect()
}

/// Exact binomial coefficient (fits comfortably for n <= 80).
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Operators acting on a single party, applied sector by sector.
///
/// `Twisted` is the measurement-after-interaction observable
/// `U^dagger (n . S) U` with `U = exp(i mu2/2 S_z^2)`.
#[derive(Clone, Debug, PartialEq)]
pub enum LocalOperator<T> {
    Identity,
    Spin(Vec3<T>),
    Twisted { direction: Vec3<T>, mu2: T },
    /// `A B` (B applied first).
    Product(Box<LocalOperator<T>>, Box<LocalOperator<T>>),
    /// `(A B + B A) / 2`
    SymmetricProduct(Box<LocalOperator<T>>, Box<LocalOperator<T>>),
}

impl<T: Real> LocalOperator<T> {
    pub fn spin(axis: Axis) -> Self {
        LocalOperator::Spin(axis.unit())
    }

    pub fn yz(theta: T) -> Self {
        LocalOperator::Spin(yz_direction(theta))
    }

    pub fn product(a: Self, b: Self) -> Self {
        LocalOperator::Product(Box::new(a), Box::new(b))
    }

    pub fn squared(&self) -> Self {
        Self::product(self.clone(), self.clone())
    }

    pub fn symmetric_product(a: Self, b: Self) -> Self {
        LocalOperator::SymmetricProduct(Box::new(a), Box::new(b))
    }

    pub fn apply(&self, sector: SpinSector, v: &[Cx<T>]) -> Vec<Cx<T>> {
        match self {
            LocalOperator::Identity => v.to_vec(),
            LocalOperator::Spin(dir) => {
                let mut out = vec![Cx::zero(); v.len()];
                apply_spin_along(dir, sector, v, &mut out);
                out
            }
            LocalOperator::Twisted { direction, mu2 } => {
                let phases = oat_phases(*mu2, sector);
                let rotated: Vec<Cx<T>> = v.iter().zip(&phases).map(|(a, p)| *a * *p).collect();
                let mut out = vec![Cx::zero(); v.len()];
                apply_spin_along(direction, sector, &rotated, &mut out);
                out.iter_mut()
                    .zip(&phases)
                    .for_each(|(o, p)| *o = *o * p.conj());
                out
            }
            LocalOperator::Product(a, b) => a.apply(sector, &b.apply(sector, v)),
            LocalOperator::SymmetricProduct(a, b) => {
                let ab = a.apply(sector, &b.apply(sector, v));
                let ba = b.apply(sector, &a.apply(sector, v));
                ab.iter()
                    .zip(&ba)
                    .map(|(x, y)| (*x + *y) * cre(T::lit(0.5)))
                    .collect()
            }
        }
    }

    pub fn matrix(&self, sector: SpinSector) -> CMatrix<T> {
        let dim = sector.dim();
        let mut m = CMatrix::zeros(dim, dim);
        let mut basis = vec![Cx::zero(); dim];
        for j in 0..dim {
            basis.iter_mut().for_each(|z| *z = Cx::zero());
            basis[j] = cre(T::one());
            let col = self.apply(sector, &basis);
            for i in 0..dim {
                m[(i, j)] = col[i];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sectors() -> impl Iterator<Item = SpinSector> {
        (0..=12).chain([20, 40]).map(SpinSector::from_particles)
    }

    fn s(axis: Axis, sec: SpinSector) -> CMatrix<f64> {
        spin_operator::<f64>(axis, sec).into_entries()
    }

    #[test]
    fn spin_half_matrices() {
        let half = SpinSector::from_particles(1);
        let sz = s(Axis::Z, half);
        assert_eq!(sz[(0, 0)], cre(-0.5));
        assert_eq!(sz[(1, 1)], cre(0.5));
        let sx = s(Axis::X, half);
        assert_eq!(sx[(0, 1)], cre(0.5));
        assert_eq!(sx[(1, 0)], cre(0.5));
        assert_eq!(sx[(0, 0)], cre(0.0));
    }

    #[test]
    fn angular_momentum_algebra() {
        for sec in sectors() {
            let [x, y, z] = Axis::ALL.map(|a| s(a, sec));
            let i = cx(0.0, 1.0);
            assert!(x.commutator(&y).max_abs_diff(&z.scale(i)) < 1e-13, "{sec}");
            assert!(y.commutator(&z).max_abs_diff(&x.scale(i)) < 1e-13, "{sec}");
            assert!(z.commutator(&x).max_abs_diff(&y.scale(i)) < 1e-13, "{sec}");
            let casimir = &(&x.matmul(&x) + &y.matmul(&y)) + &z.matmul(&z);
            let j = sec.j::<f64>();
            let want = CMatrix::identity(sec.dim()).scale_re(j * (j + 1.0));
            assert!(casimir.max_abs_diff(&want) < 1e-12 * (1.0 + j * j), "{sec}");
            for m in [&x, &y, &z] {
                assert!(m.is_hermitian(1e-12));
            }
        }
    }

    #[test]
    fn commutator_residue_spin_one() {
        let one = SpinSector::from_particles(2);
        let [x, y, z] = Axis::ALL.map(|a| s(a, one));
        let resid = x.commutator(&y).max_abs_diff(&z.scale(cx(0.0, 1.0)));
        assert!(resid < 1e-14);
    }

    #[test]
    fn direction_operator_endpoints() {
        let sec = SpinSector::from_particles(5);
        let d0 = direction_operator::<f64>(0.0, sec).into_entries();
        assert!(d0.max_abs_diff(&s(Axis::Y, sec)) < 1e-15);
        let d1 = direction_operator(std::f64::consts::FRAC_PI_2, sec).into_entries();
        assert!(d1.max_abs_diff(&s(Axis::Z, sec)) < 1e-15);
        let half = SpinSector::from_particles(1);
        let eig = hermitian_eigen(direction_operator(std::f64::consts::FRAC_PI_4, half).entries());
        assert!((eig.values[0] + 0.5).abs() < 1e-14);
        assert!((eig.values[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn oat_unitary_special_cases() {
        for sec in sectors() {
            let u = oat_unitary::<f64>(0.0, sec, None).unwrap().into_entries();
            assert!(u.max_abs_diff(&CMatrix::identity(sec.dim())) < 1e-15);
        }
        let mu2 = 0.73;
        let half = SpinSector::from_particles(1);
        let u = oat_unitary(mu2, half, None).unwrap().into_entries();
        let want = CMatrix::identity(2).scale(Cx::from_polar(1.0, mu2 / 8.0));
        assert!(u.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn oat_unitary_is_unitary_and_commutes_with_sz() {
        for sec in sectors() {
            let u = oat_unitary(1.3, sec, None).unwrap().into_entries();
            assert!(u.unitarity_residue() < 1e-12);
            assert!(u.commutator(&s(Axis::Z, sec)).max_abs() < 1e-12);
            let n = [0.48, -0.6, 0.64];
            let un = oat_unitary(1.3, sec, Some(&n)).unwrap().into_entries();
            assert!(un.unitarity_residue() < 1e-12);
        }
    }

    #[test]
    fn rotated_axis_matches_conjugation() {
        let mu2 = 0.9;
        for sec in sectors().filter(|s| s.particles() <= 20) {
            for target in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.0, 0.0, -1.0]] {
                let direct = oat_unitary(mu2, sec, Some(&target)).unwrap().into_entries();
                let r = rotation_taking_z_to(&target, sec).unwrap().into_entries();
                let uz = oat_unitary(mu2, sec, None).unwrap().into_entries();
                let conj = r.matmul(&uz).matmul(&r.adjoint());
                assert!(direct.max_abs_diff(&conj) < 1e-12, "{sec} {target:?}");
            }
        }
    }

    #[test]
    fn non_unit_axis_is_rejected() {
        let sec = SpinSector::from_particles(3);
        assert!(oat_unitary(0.1, sec, Some(&[1.0, 1.0, 0.0])).is_err());
    }

    #[test]
    fn coherent_state_is_extremal_eigenvector() {
        let sec = SpinSector::from_particles(10);
        for (polar, az) in [(0.0, 0.0), (1.0, 0.3), (std::f64::consts::FRAC_PI_2, 0.0)] {
            let psi = coherent_state(sec, polar, az);
            assert!((crate::linalg::norm_sqr(&psi) - 1.0).abs() < 1e-12);
            let dir = polar_direction(polar, az);
            let out = LocalOperator::Spin(dir).apply(sec, &psi);
            for (a, b) in out.iter().zip(&psi) {
                assert!((*a - *b * cre(5.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn local_operator_twisted_matches_dense_conjugation() {
        let sec = SpinSector::from_particles(6);
        let dir = yz_direction(0.4);
        let op = LocalOperator::Twisted { direction: dir, mu2: 0.8 };
        let u = oat_unitary(0.8, sec, None).unwrap().into_entries();
        let want = u.adjoint().matmul(spin_along(&dir, sec).entries()).matmul(&u);
        assert!(op.matrix(sec).max_abs_diff(&want) < 1e-13);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(20, 10), 184756);
        assert_eq!(binomial(40, 20), 137846528820);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn f32_operators_build() {
        let sec = SpinSector::from_particles(4);
        let x = spin_operator::<f32>(Axis::X, sec).into_entries();
        let y = spin_operator::<f32>(Axis::Y, sec).into_entries();
        let z = spin_operator::<f32>(Axis::Z, sec).into_entries();
        assert!(x.commutator(&y).max_abs_diff(&z.scale(cx(0.0, 1.0))) < 1e-5);
    }
}
