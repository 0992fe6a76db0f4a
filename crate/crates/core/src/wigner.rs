//! Spherical Wigner functions of single-sector spin states.
//!
//! `W(theta, phi) = sqrt((2j+1)/4pi) sum_{K,Q} rho_KQ Y_KQ(theta, phi)` with
//! `rho_KQ = Tr[rho T_KQ^dagger]` and
//! `T_KQ = sum_{m,m'} (-1)^{j-m'} <j m; j -m' | K Q> |m><m'|`.
//! The prefactor makes the integral over the sphere equal to `Tr rho`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{inner, CMatrix};
use crate::scalar::{cre, Cx, Real};
use crate::spin::{oat_phases, rotation, yz_direction, OperatorMatrix, SpinSector};
use crate::split::{condition_on_alice, BlockDensityOperator, Branch, SplitSpinState};

fn factorial(n: i64) -> BigInt {
    (2..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Clebsch-Gordan coefficient `<j1 m1; j2 m2 | J M>` from the Racah formula,
/// summed in exact rational arithmetic. Arguments are doubled.
pub fn clebsch_gordan(tj1: i64, tm1: i64, tj2: i64, tm2: i64, tj: i64, tm: i64) -> f64 {
    if tm1 + tm2 != tm
        || tj1 < 0
        || tj2 < 0
        || tj < 0
        || tm1.abs() > tj1
        || tm2.abs() > tj2
        || tm.abs() > tj
        || tj > tj1 + tj2
        || tj < (tj1 - tj2).abs()
        || (tj1 + tj2 + tj) % 2 != 0
        || (tj1 + tm1) % 2 != 0
        || (tj2 + tm2) % 2 != 0
        || (tj + tm) % 2 != 0
    {
        return 0.0;
    }
    let h = |x: i64| x / 2;
    let f = |x: i64| factorial(h(x));
    let num = BigInt::from(tj + 1)
        * f(tj1 + tj2 - tj)
        * f(tj1 - tj2 + tj)
        * f(-tj1 + tj2 + tj)
        * f(tj1 + tm1)
        * f(tj1 - tm1)
        * f(tj2 + tm2)
        * f(tj2 - tm2)
        * f(tj + tm)
        * f(tj - tm);
    let prefactor = BigRational::new(num, f(tj1 + tj2 + tj + 2));
    let bounds = [
        h(tj1 + tj2 - tj),
        h(tj1 - tm1),
        h(tj2 + tm2),
    ];
    let lo = 0.max(h(tj2 - tj - tm1)).max(h(tj1 - tj + tm2));
    let hi = *bounds.iter().min().unwrap();
    let mut sum = BigRational::zero();
    for k in lo..=hi {
        let den = factorial(k)
            * factorial(h(tj1 + tj2 - tj) - k)
            * factorial(h(tj1 - tm1) - k)
            * factorial(h(tj2 + tm2) - k)
            * factorial(h(tj - tj2 + tm1) + k)
            * factorial(h(tj - tj1 - tm2) + k);
        let term = BigRational::new(BigInt::one(), den);
        sum = if k % 2 == 0 { sum + term } else { sum - term };
    }
    if sum.is_zero() {
        return 0.0;
    }
    let squared = prefactor * &sum * &sum;
    let mag = squared.to_f64().unwrap_or(f64::NAN).sqrt();
    if sum.is_negative() {
        -mag
    } else {
        mag
    }
}

/// Orthonormal spherical harmonics `Y_KQ` for `0 <= K <= k_max`, Condon-Shortley
/// phase, indexed `[K][Q + K]`.
pub fn spherical_harmonics<T: Real>(k_max: usize, theta: T, phi: T) -> Vec<Vec<Cx<T>>> {
    let (x, s) = (theta.cos(), theta.sin());
    let mut p = vec![vec![T::zero(); k_max + 1]; k_max + 1];
    let mut pmm = T::one() / (T::lit(4.0) * T::PI()).sqrt();
    for m in 0..=k_max {
        if m > 0 {
            let q = T::from_usize_lossy(2 * m + 1) / T::from_usize_lossy(2 * m);
            pmm = -pmm * q.sqrt() * s;
        }
        p[m][m] = pmm;
        if m < k_max {
            p[m + 1][m] = T::from_usize_lossy(2 * m + 3).sqrt() * x * pmm;
        }
        for l in m + 2..=k_max {
            let a = |l: usize| {
                let (l2, m2) = (T::from_usize_lossy(l * l), T::from_usize_lossy(m * m));
                ((T::lit(4.0) * l2 - T::one()) / (l2 - m2)).sqrt()
            };
            p[l][m] = a(l) * (x * p[l - 1][m] - p[l - 2][m] / a(l - 1));
        }
    }
    (0..=k_max)
        .map(|k| {
            let mut row = vec![Cx::zero(); 2 * k + 1];
            for q in 0..=k {
                let y = Cx::from_polar(p[k][q], T::from_usize_lossy(q) * phi);
                row[k + q] = y;
                let sign = if q % 2 == 0 { T::one() } else { -T::one() };
                row[k - q] = y.conj() * sign;
            }
            row
        })
        .collect()
}

/// State multipoles `rho_KQ` of one sector, indexed `[K][Q + K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipoles<T> {
    sector: SpinSector,
    coeffs: Vec<Vec<Cx<T>>>,
}

impl<T: Real> Multipoles<T> {
    pub fn from_density(rho: &OperatorMatrix<T>) -> Result<Self> {
        let sector = rho.sector();
        let e = rho.entries();
        let residue = e.hermitian_residue();
        if residue > T::floor_tol(1e-10) {
            return Err(Error::ImaginaryResidue {
                what: "density matrix (non-Hermitian)",
                residue: residue.as_f64(),
            });
        }
        let tj = sector.twice_j() as i64;
        let dim = sector.dim();
        // m = k - j, doubled: 2k - 2j
        let tm = |k: usize| 2 * k as i64 - tj;
        let coeffs = (0..=sector.twice_j())
            .map(|big_k| {
                let tk = 2 * big_k as i64;
                (0..=2 * big_k)
                    .map(|qi| {
                        let tq = 2 * (qi as i64 - big_k as i64);
                        let mut acc = Cx::zero();
                        for k in 0..dim {
                            // (T_KQ)_{m m'} is nonzero only for m - m' = Q
                            let kp = k as i64 - tq / 2;
                            if kp < 0 || kp >= dim as i64 {
                                continue;
                            }
                            let kp = kp as usize;
                            let sign = if (tj - tm(kp)) / 2 % 2 == 0 { 1.0 } else { -1.0 };
                            let cg = clebsch_gordan(tj, tm(k), tj, -tm(kp), tk, tq);
                            if cg != 0.0 {
                                // Tr[rho T^dagger] = sum rho_{m m'} conj(T_{m m'})
                                acc = acc + e[(k, kp)] * T::lit(sign * cg);
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self { sector, coeffs })
    }

    pub fn from_pure(sector: SpinSector, psi: &[Cx<T>]) -> Result<Self> {
        if psi.len() != sector.dim() {
            return Err(invalid(
                "state",
                format!("length {} does not match {sector}", psi.len()),
            ));
        }
        let rho = CMatrix::outer(psi, psi);
        Self::from_density(&OperatorMatrix::new(sector, rho)?)
    }

    /// The only occupied sector of a block state; several occupied sectors
    /// (trace above `tol`) are refused.
    pub fn from_blocks(state: &BlockDensityOperator<T>, tol: T) -> Result<Self> {
        let occupied: Vec<_> = state
            .blocks()
            .iter()
            .filter(|(_, b)| b.trace().re.abs() > tol)
            .collect();
        match occupied.as_slice() {
            [(n, block)] => Self::from_density(&OperatorMatrix::new(
                SpinSector::from_particles(**n),
                (*block).clone(),
            )?),
            [] => Err(invalid("state", "no occupied sector")),
            many => Err(invalid(
                "state",
                format!("{} occupied sectors; select one block", many.len()),
            )),
        }
    }

    pub fn sector(&self) -> SpinSector {
        self.sector
    }

    /// `rho_KQ`, or `None` out of range.
    pub fn get(&self, k: usize, q: i64) -> Option<Cx<T>> {
        let row = self.coeffs.get(k)?;
        let idx = q + k as i64;
        if idx < 0 {
            return None;
        }
        row.get(idx as usize).copied()
    }

    fn raw(&self, theta: T, phi: T) -> Cx<T> {
        let ys = spherical_harmonics(self.coeffs.len() - 1, theta, phi);
        let norm = (T::from_usize_lossy(self.sector.dim()) / (T::lit(4.0) * T::PI())).sqrt();
        let sum = self
            .coeffs
            .iter()
            .zip(&ys)
            .flat_map(|(c, y)| c.iter().zip(y).map(|(a, b)| *a * *b))
            .fold(Cx::zero(), |acc, z| acc + z);
        sum * norm
    }

    /// `W(theta, phi)`, refusing an imaginary part above `1e-10`.
    pub fn value(&self, theta: T, phi: T) -> Result<T> {
        let w = self.raw(theta, phi);
        check_real(w)?;
        Ok(w.re)
    }
}

fn check_real<T: Real>(w: Cx<T>) -> Result<()> {
    if w.im.abs() > T::floor_tol(1e-10) {
        return Err(Error::ImaginaryResidue {
            what: "spherical Wigner function",
            residue: w.im.abs().as_f64(),
        });
    }
    Ok(())
}

/// Midpoint grid: `theta_i = (i + 1/2) pi / n_theta`, `phi_j = 2 pi j / n_phi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl GridSpec {
    pub fn theta<T: Real>(&self, i: usize) -> T {
        (T::from_usize_lossy(i) + T::lit(0.5)) * T::PI() / T::from_usize_lossy(self.n_theta)
    }

    pub fn phi<T: Real>(&self, j: usize) -> T {
        T::from_usize_lossy(j) * T::TAU() / T::from_usize_lossy(self.n_phi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereGrid<T> {
    pub spec: GridSpec,
    /// Row-major, `values[i * n_phi + j] = W(theta_i, phi_j)`.
    pub values: Vec<T>,
}

impl<T: Real> SphereGrid<T> {
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.spec.n_phi + j]
    }

    /// Quadrature of `W sin(theta)` over the grid.
    pub fn integral(&self) -> T {
        let dt = T::PI() / T::from_usize_lossy(self.spec.n_theta);
        let dp = T::TAU() / T::from_usize_lossy(self.spec.n_phi);
        (0..self.spec.n_theta)
            .map(|i| {
                let row: T = (0..self.spec.n_phi).map(|j| self.get(i, j)).sum();
                row * self.spec.theta::<T>(i).sin()
            })
            .sum::<T>()
            * dt
            * dp
    }

    /// `(theta, phi, W)` at the largest value.
    pub fn argmax(&self) -> (T, T, T) {
        let (idx, w) = self
            .values
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, bw), (i, &w)| if w > bw { (i, w) } else { (bi, bw) });
        let (i, j) = (idx / self.spec.n_phi, idx % self.spec.n_phi);
        (self.spec.theta(i), self.spec.phi(j), w)
    }

    /// `(theta, phi, W)` rows in grid order.
    pub fn rows(&self) -> impl Iterator<Item = (T, T, T)> + '_ {
        (0..self.spec.n_theta).flat_map(move |i| {
            (0..self.spec.n_phi).map(move |j| (self.spec.theta(i), self.spec.phi(j), self.get(i, j)))
        })
    }
}

/// Evaluates `W` of a single-sector density matrix on a grid.
pub fn spherical_wigner<T: Real>(rho: &OperatorMatrix<T>, spec: GridSpec) -> Result<SphereGrid<T>> {
    if spec.n_theta == 0 || spec.n_phi == 0 {
        return Err(invalid("grid", "need at least one point per direction"));
    }
    grid_from_multipoles(&Multipoles::from_density(rho)?, spec)
}

pub fn grid_from_multipoles<T: Real>(mp: &Multipoles<T>, spec: GridSpec) -> Result<SphereGrid<T>> {
    let rows: Vec<Result<Vec<T>>> = (0..spec.n_theta)
        .into_par_iter()
        .map(|i| {
            let theta = spec.theta::<T>(i);
            (0..spec.n_phi).map(|j| mp.value(theta, spec.phi(j))).collect()
        })
        .collect();
    let mut values = Vec::with_capacity(spec.n_theta * spec.n_phi);
    for r in rows {
        values.extend(r?);
    }
    Ok(SphereGrid { spec, values })
}

/// Where a snapshot is taken along the encode and readout pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stage<T> {
    /// Bob's conditional state as prepared.
    Conditional,
    /// After `exp(-i phase n . S)` with `n` in the yz plane at `generator`.
    Encoded { phase: T, generator: T },
    /// After encoding and the twist `exp(i mu2/2 S_z^2)`.
    AfterMai { phase: T, generator: T, mu2: T },
}

/// Bob's most probable conditional state for Alice measuring at `theta_y`.
pub fn likeliest_branch<T: Real>(state: &SplitSpinState<T>, theta_y: T) -> Result<Branch<T>> {
    condition_on_alice(state, theta_y)
        .branches()
        .iter()
        .max_by(|a, b| a.prob.partial_cmp(&b.prob).unwrap_or(std::cmp::Ordering::Equal))
        .cloned()
        .ok_or_else(|| invalid("state", "empty assemblage"))
}

/// Applies the pipeline up to `stage` and returns the resulting pure state.
pub fn pipeline_state<T: Real>(branch: &Branch<T>, stage: Stage<T>) -> Vec<Cx<T>> {
    let sector = branch.sector;
    let encode = |phase: T, generator: T| {
        rotation(&yz_direction(generator), phase, sector)
            .entries()
            .apply(&branch.state)
    };
    match stage {
        Stage::Conditional => branch.state.clone(),
        Stage::Encoded { phase, generator } => encode(phase, generator),
        Stage::AfterMai { phase, generator, mu2 } => encode(phase, generator)
            .iter()
            .zip(oat_phases(mu2, sector))
            .map(|(a, u)| *a * u)
            .collect(),
    }
}

/// `<psi|psi>` deviation from one, for callers checking pipeline output.
pub fn norm_defect<T: Real>(psi: &[Cx<T>]) -> T {
    (inner(psi, psi) - cre(T::one())).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::coherent_state;

    #[test]
    fn cg_known_values() {
        // <1/2 1/2; 1/2 -1/2 | 1 0> = 1/sqrt 2, <... | 0 0> = 1/sqrt 2
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((clebsch_gordan(1, 1, 1, -1, 2, 0) - s).abs() < 1e-15);
        assert!((clebsch_gordan(1, 1, 1, -1, 0, 0) - s).abs() < 1e-15);
        assert!((clebsch_gordan(1, -1, 1, 1, 0, 0) + s).abs() < 1e-15);
        // <1 1; 1 -1 | 2 0> = 1/sqrt 6
        assert!((clebsch_gordan(2, 2, 2, -2, 4, 0) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(clebsch_gordan(2, 2, 2, 2, 2, 2), 0.0);
    }

    #[test]
    fn cg_orthonormal_rows() {
        let tj = 7;
        for tk in (0..=2 * tj).step_by(2) {
            for tq in (-tk..=tk).step_by(2) {
                let norm: f64 = (-tj..=tj)
                    .step_by(2)
                    .map(|tm| clebsch_gordan(tj, tm, tj, tq - tm, tk, tq).powi(2))
                    .sum();
                assert!((norm - 1.0).abs() < 1e-12, "K={tk} Q={tq}: {norm}");
            }
        }
    }

    #[test]
    fn harmonics_match_low_orders() {
        let (t, p) = (0.7f64, 1.3f64);
        let y = spherical_harmonics(2, t, p);
        let pi = std::f64::consts::PI;
        assert!((y[1][1].re - (3.0 / (4.0 * pi)).sqrt() * t.cos()).abs() < 1e-14);
        let y11 = Cx::from_polar(-(3.0 / (8.0 * pi)).sqrt() * t.sin(), p);
        assert!((y[1][2] - y11).norm() < 1e-14);
        let y20 = (5.0 / (16.0 * pi)).sqrt() * (3.0 * t.cos().powi(2) - 1.0);
        assert!((y[2][2].re - y20).abs() < 1e-14);
    }

    #[test]
    fn coherent_peaks_where_it_points() {
        let sector = SpinSector::from_particles(10);
        let psi = coherent_state(sector, std::f64::consts::FRAC_PI_2, 0.0);
        let mp = Multipoles::from_pure(sector, &psi).unwrap();
        let spec = GridSpec { n_theta: 128, n_phi: 256 };
        let g = grid_from_multipoles(&mp, spec).unwrap();
        let (t, p, _) = g.argmax();
        assert!((t - std::f64::consts::FRAC_PI_2).abs() < 0.02);
        assert!(p.min(std::f64::consts::TAU - p) < 0.03);
    }

    #[test]
    fn mixed_block_is_flat_and_normalized() {
        let sector = SpinSector::from_particles(6);
        let rho = CMatrix::identity(7).scale_re(1.0 / 7.0);
        let g = spherical_wigner(&OperatorMatrix::new(sector, rho).unwrap(), GridSpec { n_theta: 64, n_phi: 128 })
            .unwrap();
        let flat = 1.0 / (4.0 * std::f64::consts::PI);
        assert!(g.values.iter().all(|w| (w - flat).abs() < 1e-12));
        assert!((g.integral() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn several_sectors_refused() {
        use std::collections::BTreeMap;
        let mut blocks = BTreeMap::new();
        blocks.insert(1, CMatrix::identity(2).scale_re(0.25));
        blocks.insert(2, CMatrix::identity(3).scale_re(1.0 / 6.0));
        let state = BlockDensityOperator::from_blocks(blocks).unwrap();
        assert!(matches!(Multipoles::from_blocks(&state, 1e-12), Err(Error::InvalidInput { .. })));
    }
}
