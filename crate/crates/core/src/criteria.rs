//! Reid and Fisher steering witnesses from moment matrices.
//!
//! `C_ij = -i <[M_j, G_i]>`, `Gamma_ij = sum_b p_b Cov_b(M_i, M_j)` and the
//! moment matrix `M = C Gamma^+ C^T`, so that `n^T M n` is the best
//! sensitivity `|n^T C m|^2 / m^T Gamma m` over measurement directions `m`.

use num_traits::Zero;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    hermitian_eigen, inner, mat3_apply, mat3_mul, mat3_scale, mat3_sub, mat3_transpose, mat3_zero,
    normalize3, quad3, sym3_max_eigen, sym3_pinv, CMatrix, Mat3, Vec3,
};
use crate::open_systems::{lossy_violation_at, LossConfig};
use crate::optimize::{
    axis_design, nelder_mead_max, periodic_grid, random_starts, top_k, OptimizerSettings,
};
use crate::scalar::{cre, Cx, Real};
use crate::spin::{apply_spin_along, oat_phases, polar_direction, spin_along, Axis, LocalOperator, SpinSector};
use crate::split::{condition_on_alice, Assemblage, BlockDensityOperator, SplitSpinState};

/// Relative eigenvalue cut of the pseudo-inverse.
pub const PINV_CUT: f64 = 1e-10;

/// A triple of Bob observables `(M_x, M_y, M_z)`.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasurementFamily<T> {
    /// `(S_x, S_y, S_z)`
    Linear,
    /// `U^dagger S_k U` with `U = exp(i mu2/2 S_z^2)`.
    Mai { mu2: T },
    /// As `Mai`, twisting about `axis`.
    MaiAxis { mu2: T, axis: Vec3<T> },
}

impl<T: Real> MeasurementFamily<T> {
    /// Dense matrix of member `k` in a sector.
    pub fn operator(&self, k: Axis, sector: SpinSector) -> Result<CMatrix<T>> {
        let s = spin_along(&k.unit(), sector).into_entries();
        let u = match self {
            MeasurementFamily::Linear => return Ok(s),
            MeasurementFamily::Mai { mu2 } => crate::spin::oat_unitary(*mu2, sector, None)?,
            MeasurementFamily::MaiAxis { mu2, axis } => {
                crate::spin::oat_unitary(*mu2, sector, Some(axis))?
            }
        };
        let u = u.into_entries();
        Ok(u.adjoint().matmul(&s).matmul(&u))
    }
}

/// Per-sector eigenbasis of `n . S` used for twisting about `n`.
#[derive(Clone, Debug)]
pub struct AxisBasis<T> {
    axis: Vec3<T>,
    sectors: Vec<(CMatrix<T>, CMatrix<T>)>,
}

impl<T: Real> AxisBasis<T> {
    pub fn new(axis: &Vec3<T>, max_particles: usize) -> Result<Self> {
        let n = crate::linalg::norm3(axis);
        if !n.is_finite() || (n - T::one()).abs() > T::floor_tol(1e-10) {
            return Err(invalid("axis", format!("must be a unit vector, |n| = {n}")));
        }
        let sectors = (0..=max_particles)
            .map(|p| {
                let eig = hermitian_eigen(spin_along(axis, SpinSector::from_particles(p)).entries());
                let adj = eig.vectors.adjoint();
                (eig.vectors, adj)
            })
            .collect();
        Ok(Self { axis: *axis, sectors })
    }

    pub fn axis(&self) -> Vec3<T> {
        self.axis
    }
}

#[derive(Clone, Debug)]
enum SectorTransform<T> {
    Identity,
    Phases(Vec<Cx<T>>),
    /// `V diag(phases) V^dagger`
    Eigen {
        v: CMatrix<T>,
        v_adj: CMatrix<T>,
        phases: Vec<Cx<T>>,
    },
}

impl<T: Real> SectorTransform<T> {
    fn apply(&self, x: &[Cx<T>]) -> Vec<Cx<T>> {
        match self {
            SectorTransform::Identity => x.to_vec(),
            SectorTransform::Phases(p) => x.iter().zip(p).map(|(a, b)| *a * *b).collect(),
            SectorTransform::Eigen { v, v_adj, phases } => {
                let mut w = v_adj.apply(x);
                w.iter_mut().zip(phases).for_each(|(a, b)| *a = *a * *b);
                v.apply(&w)
            }
        }
    }
}

/// The unitary `U` of a family, tabulated per Bob particle number.
#[derive(Clone, Debug)]
pub struct FamilyTransform<T> {
    family: MeasurementFamily<T>,
    sectors: Vec<SectorTransform<T>>,
}

impl<T: Real> FamilyTransform<T> {
    pub fn new(family: &MeasurementFamily<T>, max_particles: usize) -> Result<Self> {
        match family {
            MeasurementFamily::Linear => Ok(Self {
                family: family.clone(),
                sectors: vec![SectorTransform::Identity; max_particles + 1],
            }),
            MeasurementFamily::Mai { mu2 } => Ok(Self {
                family: family.clone(),
                sectors: (0..=max_particles)
                    .map(|p| SectorTransform::Phases(oat_phases(*mu2, SpinSector::from_particles(p))))
                    .collect(),
            }),
            MeasurementFamily::MaiAxis { mu2, axis } => {
                Ok(Self::from_axis_basis(&AxisBasis::new(axis, max_particles)?, *mu2))
            }
        }
    }

    pub fn from_axis_basis(basis: &AxisBasis<T>, mu2: T) -> Self {
        let sectors = basis
            .sectors
            .iter()
            .enumerate()
            .map(|(p, (v, v_adj))| SectorTransform::Eigen {
                v: v.clone(),
                v_adj: v_adj.clone(),
                // eigenvalues of n.S ascend through m = -j..j
                phases: oat_phases(mu2, SpinSector::from_particles(p)),
            })
            .collect();
        Self {
            family: MeasurementFamily::MaiAxis { mu2, axis: basis.axis },
            sectors,
        }
    }

    pub fn family(&self) -> &MeasurementFamily<T> {
        &self.family
    }

    fn sector(&self, p: usize) -> Result<&SectorTransform<T>> {
        self.sectors
            .get(p)
            .ok_or_else(|| Error::BlockMismatch(format!("no transform for {p} particles")))
    }

    /// Dense `U` in one sector.
    pub fn unitary(&self, sector: SpinSector) -> Result<CMatrix<T>> {
        let t = self.sector(sector.particles())?;
        let dim = sector.dim();
        let mut out = CMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut e = vec![Cx::zero(); dim];
            e[j] = cre(T::one());
            let col = t.apply(&e);
            for i in 0..dim {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }
}

/// Branch-averaged first and second moments of a family.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyStats<T> {
    /// `sum_b p_b Cov_b(M_i, M_j)`
    pub gamma: Mat3<T>,
    /// `-i <[M_j, S_i]>` on the averaged state.
    pub commutator: Mat3<T>,
    /// `<M_i>` on the averaged state.
    pub mean: Vec3<T>,
}

/// Moments of `U^dagger S_k U` over the assemblage, together with the
/// commutator matrix against the linear family.
pub fn family_stats<T: Real>(asm: &Assemblage<T>, tr: &FamilyTransform<T>) -> Result<FamilyStats<T>> {
    let axes: [Vec3<T>; 3] = Axis::ALL.map(|a| a.unit());
    let mut gamma = mat3_zero();
    let mut comm = mat3_zero();
    let mut mean = [T::zero(); 3];
    let two = T::lit(2.0);
    for b in asm.branches() {
        let t = tr.sector(b.sector.particles())?;
        let phi = &b.state;
        let psi = t.apply(phi);
        let dim = phi.len();
        let mut a: [Vec<Cx<T>>; 3] = std::array::from_fn(|_| vec![Cx::zero(); dim]);
        let mut s: [Vec<Cx<T>>; 3] = std::array::from_fn(|_| vec![Cx::zero(); dim]);
        for k in 0..3 {
            apply_spin_along(&axes[k], b.sector, &psi, &mut a[k]);
            apply_spin_along(&axes[k], b.sector, phi, &mut s[k]);
        }
        let bvec: [Vec<Cx<T>>; 3] = std::array::from_fn(|k| t.apply(&s[k]));
        let m: [T; 3] = std::array::from_fn(|k| inner(&psi, &a[k]).re);
        for i in 0..3 {
            mean[i] = mean[i] + b.prob * m[i];
            for j in 0..3 {
                let second = inner(&a[i], &a[j]).re;
                gamma[i][j] = gamma[i][j] + b.prob * (second - m[i] * m[j]);
                comm[i][j] = comm[i][j] + b.prob * two * inner(&a[j], &bvec[i]).im;
            }
        }
    }
    symmetrize(&mut gamma);
    Ok(FamilyStats {
        gamma,
        commutator: comm,
        mean,
    })
}

fn symmetrize<T: Real>(a: &mut Mat3<T>) {
    for i in 0..3 {
        for j in i + 1..3 {
            let v = (a[i][j] + a[j][i]) * T::lit(0.5);
            a[i][j] = v;
            a[j][i] = v;
        }
    }
}

/// `C_ij = -i Tr(rho [M_j, G_i])`, evaluated with dense sector matrices.
pub fn commutator_matrix<T: Real>(
    rho: &BlockDensityOperator<T>,
    g: &MeasurementFamily<T>,
    m: &MeasurementFamily<T>,
) -> Result<Mat3<T>> {
    let mut acc = [[Cx::<T>::zero(); 3]; 3];
    for (&p, block) in rho.blocks() {
        let sector = SpinSector::from_particles(p);
        if block.rows() != sector.dim() {
            return Err(Error::BlockMismatch(format!("block {p} has dimension {}", block.rows())));
        }
        let gs: Vec<CMatrix<T>> = Axis::ALL.iter().map(|&a| g.operator(a, sector)).collect::<Result<_>>()?;
        let ms: Vec<CMatrix<T>> = Axis::ALL.iter().map(|&a| m.operator(a, sector)).collect::<Result<_>>()?;
        for i in 0..3 {
            for j in 0..3 {
                let c = block.trace_product(&ms[j].commutator(&gs[i]));
                acc[i][j] = acc[i][j] + c * Cx::new(T::zero(), -T::one());
            }
        }
    }
    let scale = acc.iter().flatten().map(|z| z.norm()).fold(T::one(), T::max);
    let residue = acc.iter().flatten().map(|z| z.im.abs()).fold(T::zero(), T::max);
    if residue > T::floor_tol(1e-12) * scale {
        return Err(Error::ImaginaryResidue {
            what: "commutator matrix",
            residue: residue.as_f64(),
        });
    }
    Ok(acc.map(|row| row.map(|z| z.re)))
}

/// `sum_b p_b Cov_b(M_i, M_j)` for a family.
pub fn conditional_covariance_matrix<T: Real>(
    asm: &Assemblage<T>,
    family: &MeasurementFamily<T>,
) -> Result<Mat3<T>> {
    let max_p = asm.branches().iter().map(|b| b.sector.particles()).max().unwrap_or(0);
    Ok(family_stats(asm, &FamilyTransform::new(family, max_p)?)?.gamma)
}

/// Covariance matrix of the linear family on a (mixed) block state.
pub fn covariance_matrix<T: Real>(rho: &BlockDensityOperator<T>) -> Mat3<T> {
    let ops = Axis::ALL.map(LocalOperator::spin);
    let mean = ops.clone().map(|o| rho.expectation(&o).re);
    let mut out = mat3_zero();
    for i in 0..3 {
        for j in 0..3 {
            let sym = LocalOperator::symmetric_product(ops[i].clone(), ops[j].clone());
            out[i][j] = rho.expectation(&sym).re - mean[i] * mean[j];
        }
    }
    symmetrize(&mut out);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatrices<T> {
    pub commutator: Mat3<T>,
    pub gamma: Mat3<T>,
    pub moment: Mat3<T>,
}

/// `M = C Gamma^+ C^T` with the relative eigenvalue cut [`PINV_CUT`].
pub fn moment_from_parts<T: Real>(c: &Mat3<T>, gamma: &Mat3<T>) -> Result<Mat3<T>> {
    let pinv = pseudo_inverse(gamma)?;
    let mut m = mat3_mul(&mat3_mul(c, &pinv), &mat3_transpose(c));
    symmetrize(&mut m);
    Ok(m)
}

fn pseudo_inverse<T: Real>(gamma: &Mat3<T>) -> Result<Mat3<T>> {
    let scale = gamma.iter().flatten().map(|x| x.abs()).fold(T::zero(), T::max);
    if !(scale > T::floor_tol(1e-300)) {
        return Err(Error::Degenerate("conditional covariance is zero".into()));
    }
    sym3_pinv(gamma, T::lit(PINV_CUT))
        .ok_or_else(|| Error::Degenerate("conditional covariance has no positive eigenvalue".into()))
}

/// Moment matrices for `G` and `M` families on one assemblage.
pub fn moment_matrix<T: Real>(
    asm: &Assemblage<T>,
    g: &MeasurementFamily<T>,
    m: &MeasurementFamily<T>,
) -> Result<MomentMatrices<T>> {
    let rho = crate::split::reduced_bob_state(asm);
    let commutator = commutator_matrix(&rho, g, m)?;
    let gamma = conditional_covariance_matrix(asm, m)?;
    let moment = moment_from_parts(&commutator, &gamma)?;
    Ok(MomentMatrices {
        commutator,
        gamma,
        moment,
    })
}

/// `Gamma^+ C^T n`, normalized; falls back to `n` when it vanishes.
pub fn optimal_measurement<T: Real>(c: &Mat3<T>, gamma: &Mat3<T>, n: &Vec3<T>) -> Result<Vec3<T>> {
    let v = mat3_apply(&pseudo_inverse(gamma)?, &mat3_apply(&mat3_transpose(c), n));
    Ok(normalize3(&v).unwrap_or(*n))
}

/// Reid's witness at fixed settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ReidEvaluation<T> {
    pub lambda_max: T,
    pub n_opt: Vec3<T>,
    pub m_opt: Vec3<T>,
    /// `n^T M n`
    pub first_term: T,
    /// `4 n^T Gamma_X n`
    pub second_term: T,
}

fn reid_from_stats<T: Real>(y: &FamilyStats<T>, gamma_x: &Mat3<T>) -> Result<ReidEvaluation<T>> {
    let m = moment_from_parts(&y.commutator, &y.gamma)?;
    let four_gx = mat3_scale(gamma_x, T::lit(4.0));
    let (lambda_max, n_opt) = sym3_max_eigen(&mat3_sub(&m, &four_gx));
    let m_opt = optimal_measurement(&y.commutator, &y.gamma, &n_opt)?;
    Ok(ReidEvaluation {
        lambda_max,
        n_opt,
        m_opt,
        first_term: quad3(&m, &n_opt),
        second_term: quad3(&four_gx, &n_opt),
    })
}

/// Optional twisting for the Reid witness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaiSpec<T> {
    pub mu2: T,
    pub axis: Option<Vec3<T>>,
}

impl<T: Real> MaiSpec<T> {
    fn family(&self) -> MeasurementFamily<T> {
        match self.axis {
            None => MeasurementFamily::Mai { mu2: self.mu2 },
            Some(axis) => MeasurementFamily::MaiAxis { mu2: self.mu2, axis },
        }
    }
}

fn linear_stats<T: Real>(state: &SplitSpinState<T>, theta: T) -> Result<FamilyStats<T>> {
    let tr = FamilyTransform::new(&MeasurementFamily::Linear, state.atoms())?;
    family_stats(&condition_on_alice(state, theta), &tr)
}

/// `lambda_max(M - 4 Gamma_X)` at fixed angles, with `M` built from the
/// linear or twisted family.
pub fn reid_violation_at<T: Real>(
    state: &SplitSpinState<T>,
    theta_x: T,
    theta_y: T,
    mai: Option<MaiSpec<T>>,
) -> Result<ReidEvaluation<T>> {
    let family = mai.map(|m| m.family()).unwrap_or(MeasurementFamily::Linear);
    let tr = FamilyTransform::new(&family, state.atoms())?;
    let y = family_stats(&condition_on_alice(state, theta_y), &tr)?;
    let x = linear_stats(state, theta_x)?;
    reid_from_stats(&y, &x.gamma)
}

/// `4 lambda_max(Gamma_Y - Gamma_X)` for the linear family, valid because
/// every conditional state is pure.
pub fn fisher_violation_at<T: Real>(state: &SplitSpinState<T>, theta_x: T, theta_y: T) -> Result<(T, Vec3<T>)> {
    let y = linear_stats(state, theta_y)?;
    let x = linear_stats(state, theta_x)?;
    Ok(fisher_from(&y.gamma, &x.gamma))
}

fn fisher_from<T: Real>(gy: &Mat3<T>, gx: &Mat3<T>) -> (T, Vec3<T>) {
    let (l, n) = sym3_max_eigen(&mat3_sub(gy, gx));
    (l * T::lit(4.0), n)
}

/// `sum_b p_b F_Q[phi_b, G]` computed per branch from `4 (<G^2> - <G>^2)`.
pub fn conditional_fisher_information<T: Real>(asm: &Assemblage<T>, n: &Vec3<T>) -> T {
    let g = LocalOperator::Spin(*n);
    let g2 = g.squared();
    asm.branches()
        .iter()
        .map(|b| {
            let m = b.expectation(&g).re;
            b.prob * T::lit(4.0) * (b.expectation(&g2).re - m * m)
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriterionKind {
    ReidLinear,
    ReidMai,
    ReidMaiAxis,
    Fisher,
    /// Twist under one-body loss on Bob's side.
    ReidMaiLossy,
}

/// An optimized witness and the settings that achieve it.
#[derive(Clone, Debug, PartialEq)]
pub struct CriterionResult<T> {
    pub kind: CriterionKind,
    pub delta: T,
    pub theta_x: T,
    pub theta_y: T,
    pub mu2: Option<T>,
    pub axis: Option<Vec3<T>>,
    pub n_opt: Vec3<T>,
    pub m_opt: Option<Vec3<T>>,
    /// Sensitivity term (`n^T M n`, or `4 n^T Gamma_Y n` for Fisher).
    pub first_term: T,
    /// `4 n^T Gamma_X n`
    pub second_term: T,
    /// Loss rate for the lossy twist.
    pub loss_rate: Option<T>,
    pub converged: bool,
    pub evaluations: usize,
}

impl<T: Real> CriterionResult<T> {
    /// Recomputes the witness at the stored settings.
    pub fn reevaluate(&self, state: &SplitSpinState<T>) -> Result<T> {
        match self.kind {
            CriterionKind::Fisher => Ok(fisher_violation_at(state, self.theta_x, self.theta_y)?.0),
            CriterionKind::ReidMaiLossy => {
                let gamma = self.loss_rate.unwrap_or(T::zero());
                let cfg = LossConfig::from_mu2(gamma, self.mu2.unwrap_or(T::zero()));
                lossy_violation_at(state, self.theta_x, self.theta_y, &cfg)
            }
            _ => {
                let mai = self.mu2.map(|mu2| MaiSpec { mu2, axis: self.axis });
                Ok(reid_violation_at(state, self.theta_x, self.theta_y, mai)?.lambda_max)
            }
        }
    }

    fn from_reid(kind: CriterionKind, p: &Point<T>, e: ReidEvaluation<T>, converged: bool, evals: usize) -> Self {
        Self {
            kind,
            delta: e.lambda_max,
            theta_x: p.theta_x,
            theta_y: p.theta_y,
            mu2: p.mu2,
            axis: p.axis,
            n_opt: e.n_opt,
            m_opt: Some(e.m_opt),
            first_term: e.first_term,
            second_term: e.second_term,
            loss_rate: None,
            converged,
            evaluations: evals,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Point<T> {
    theta_x: T,
    theta_y: T,
    mu2: Option<T>,
    axis: Option<Vec3<T>>,
}

/// Which Reid witness to optimize.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReidMode<T> {
    Linear,
    /// Optimizes the twisting strength unless pinned.
    Mai { pinned_mu2: Option<T> },
    /// Also optimizes the twisting axis.
    MaiAxisOpt,
}

fn wrap<T: Real>(x: T, period: T) -> T {
    let r = x % period;
    if r < T::zero() {
        r + period
    } else {
        r
    }
}

/// Grid-tabulated assemblages shared by the optimizers.
struct Landscape<'a, T> {
    state: &'a SplitSpinState<T>,
    settings: &'a OptimizerSettings,
    thetas: Vec<T>,
    assemblages: Vec<Assemblage<T>>,
    linear: Vec<FamilyStats<T>>,
    evaluations: usize,
    converged: bool,
}

impl<'a, T: Real> Landscape<'a, T> {
    fn new(state: &'a SplitSpinState<T>, settings: &'a OptimizerSettings) -> Result<Self> {
        if settings.theta_grid == 0 || settings.mu2_grid == 0 {
            return Err(invalid("optimizer", "grid sizes must be positive".to_string()));
        }
        let thetas = periodic_grid(T::zero(), T::PI(), settings.theta_grid);
        let assemblages: Vec<Assemblage<T>> =
            thetas.par_iter().map(|&t| condition_on_alice(state, t)).collect();
        let tr = FamilyTransform::new(&MeasurementFamily::Linear, state.atoms())?;
        let linear = assemblages
            .par_iter()
            .map(|a| family_stats(a, &tr))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            state,
            settings,
            thetas,
            assemblages,
            linear,
            evaluations: 0,
            converged: true,
        })
    }

    fn tol(&self) -> T {
        T::lit(self.settings.simplex_tol)
    }

    fn theta_step(&self) -> T {
        T::PI() / T::from_usize_lossy(self.settings.theta_grid)
    }

    fn mu2_step(&self) -> T {
        T::TAU() / T::from_usize_lossy(self.settings.mu2_grid)
    }

    fn refine(&mut self, f: impl Fn(&[T]) -> T, x0: &[T], steps: &[T]) -> (Vec<T>, T) {
        let opt = nelder_mead_max(f, x0, steps, self.tol(), self.settings.max_evals);
        self.evaluations += opt.evaluations;
        self.converged &= opt.converged;
        (opt.x, opt.value)
    }

    fn random(&self, bounds: &[(T, T)]) -> Vec<Vec<T>> {
        random_starts(&mut self.settings.rng(), bounds, self.settings.random_restarts)
    }

    /// Best `(theta_x, theta_y)` for a fixed family, starting from the grid
    /// and the extra seeds.
    fn optimize_angles(&mut self, tr: &FamilyTransform<T>, extra: &[Vec<T>]) -> Result<Point<T>> {
        let stats_y = if matches!(tr.family(), MeasurementFamily::Linear) {
            self.linear.clone()
        } else {
            self.assemblages
                .par_iter()
                .map(|a| family_stats(a, tr))
                .collect::<Result<Vec<_>>>()?
        };
        let moments: Vec<Option<Mat3<T>>> = stats_y
            .iter()
            .map(|s| moment_from_parts(&s.commutator, &s.gamma).ok())
            .collect();
        let n = self.thetas.len();
        let mut grid = vec![T::neg_infinity(); n * n];
        for (iy, m) in moments.iter().enumerate() {
            let Some(m) = m else { continue };
            for ix in 0..n {
                let d = mat3_sub(m, &mat3_scale(&self.linear[ix].gamma, T::lit(4.0)));
                grid[iy * n + ix] = sym3_max_eigen(&d).0;
            }
        }
        let mut seeds: Vec<Vec<T>> = top_k(&grid, self.settings.refine_top)
            .into_iter()
            .map(|k| vec![self.thetas[k % n], self.thetas[k / n]])
            .collect();
        seeds.extend(extra.iter().cloned());
        seeds.extend(self.random(&[(T::zero(), T::PI()); 2]));
        let state = self.state;
        let f = |x: &[T]| match reid_eval(state, x[0], x[1], tr) {
            Ok(e) => e.lambda_max,
            Err(_) => T::neg_infinity(),
        };
        let step = self.theta_step();
        let mut best: Option<(Vec<T>, T)> = None;
        for s in seeds {
            let (x, v) = self.refine(f, &s, &[step, step]);
            if best.as_ref().map_or(true, |b| v > b.1) {
                best = Some((x, v));
            }
        }
        let (x, _) = best.ok_or_else(|| Error::Degenerate("no finite grid value".into()))?;
        Ok(Point {
            theta_x: wrap(x[0], T::PI()),
            theta_y: wrap(x[1], T::PI()),
            mu2: None,
            axis: None,
        })
    }

    /// Best `(theta_x, theta_y, mu2)` for z-axis twisting.
    fn optimize_mai(&mut self, seed: &Point<T>) -> Result<Point<T>> {
        let mu2s = periodic_grid(T::zero(), T::TAU(), self.settings.mu2_grid);
        let n = self.thetas.len();
        let atoms = self.state.atoms();
        // for each (mu2, theta_y): best value over theta_x
        let cells: Vec<(T, usize)> = (0..mu2s.len() * n)
            .into_par_iter()
            .map(|k| {
                let (im, iy) = (k / n, k % n);
                let tr = FamilyTransform::new(&MeasurementFamily::Mai { mu2: mu2s[im] }, atoms)?;
                let s = family_stats(&self.assemblages[iy], &tr)?;
                let Ok(m) = moment_from_parts(&s.commutator, &s.gamma) else {
                    return Ok((T::neg_infinity(), 0));
                };
                let mut best = (T::neg_infinity(), 0);
                for ix in 0..n {
                    let d = mat3_sub(&m, &mat3_scale(&self.linear[ix].gamma, T::lit(4.0)));
                    let v = sym3_max_eigen(&d).0;
                    if v > best.0 {
                        best = (v, ix);
                    }
                }
                Ok(best)
            })
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<T> = cells.iter().map(|c| c.0).collect();
        let mut seeds: Vec<Vec<T>> = top_k(&values, self.settings.refine_top)
            .into_iter()
            .map(|k| vec![self.thetas[cells[k].1], self.thetas[k % n], mu2s[k / n]])
            .collect();
        seeds.push(vec![seed.theta_x, seed.theta_y, seed.mu2.unwrap_or(T::zero())]);
        seeds.extend(self.random(&[(T::zero(), T::PI()), (T::zero(), T::PI()), (T::zero(), T::TAU())]));
        let state = self.state;
        let f = |x: &[T]| {
            let Ok(tr) = FamilyTransform::new(&MeasurementFamily::Mai { mu2: x[2] }, atoms) else {
                return T::neg_infinity();
            };
            reid_eval(state, x[0], x[1], &tr).map_or(T::neg_infinity(), |e| e.lambda_max)
        };
        let steps = [self.theta_step(), self.theta_step(), self.mu2_step()];
        let mut best: Option<(Vec<T>, T)> = None;
        for s in seeds {
            let (x, v) = self.refine(f, &s, &steps);
            if best.as_ref().map_or(true, |b| v > b.1) {
                best = Some((x, v));
            }
        }
        let (x, _) = best.ok_or_else(|| Error::Degenerate("no finite grid value".into()))?;
        Ok(Point {
            theta_x: wrap(x[0], T::PI()),
            theta_y: wrap(x[1], T::PI()),
            mu2: Some(wrap(x[2], T::lit(2.0) * T::TAU())),
            axis: None,
        })
    }

    /// Axis scan at the z-optimal angles, then joint refinement.
    fn optimize_axis(&mut self, z_best: &Point<T>) -> Result<Point<T>> {
        let atoms = self.state.atoms();
        let mu2s = periodic_grid(T::zero(), T::TAU(), self.settings.mu2_grid);
        let axes = axis_design::<T>(2);
        let asm_y = condition_on_alice(self.state, z_best.theta_y);
        let gamma_x = linear_stats(self.state, z_best.theta_x)?.gamma;
        let scan: Vec<(T, usize)> = axes
            .par_iter()
            .map(|axis| {
                let basis = AxisBasis::new(axis, atoms)?;
                let mut best = (T::neg_infinity(), 0);
                for (im, &mu2) in mu2s.iter().enumerate() {
                    let tr = FamilyTransform::from_axis_basis(&basis, mu2);
                    let s = family_stats(&asm_y, &tr)?;
                    let v = reid_from_stats(&s, &gamma_x).map_or(T::neg_infinity(), |e| e.lambda_max);
                    if v > best.0 {
                        best = (v, im);
                    }
                }
                Ok(best)
            })
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<T> = scan.iter().map(|c| c.0).collect();
        let to_angles = |a: &Vec3<T>| {
            let polar = a[2].max(-T::one()).min(T::one()).acos();
            let azimuth = a[1].atan2(a[0]);
            (polar, azimuth)
        };
        let mut seeds: Vec<Vec<T>> = top_k(&values, self.settings.refine_top)
            .into_iter()
            .map(|k| {
                let (p, a) = to_angles(&axes[k]);
                vec![z_best.theta_x, z_best.theta_y, mu2s[scan[k].1], p, a]
            })
            .collect();
        seeds.extend(self.random(&[
            (T::zero(), T::PI()),
            (T::zero(), T::PI()),
            (T::zero(), T::TAU()),
            (T::zero(), T::PI()),
            (T::zero(), T::TAU()),
        ]));
        let state = self.state;
        let f = |x: &[T]| {
            let axis = polar_direction(x[3], x[4]);
            let Ok(basis) = AxisBasis::new(&axis, atoms) else {
                return T::neg_infinity();
            };
            let tr = FamilyTransform::from_axis_basis(&basis, x[2]);
            reid_eval(state, x[0], x[1], &tr).map_or(T::neg_infinity(), |e| e.lambda_max)
        };
        let ts = self.theta_step();
        let steps = [ts, ts, self.mu2_step(), T::lit(0.15), T::lit(0.15)];
        let mut best: Option<(Vec<T>, T)> = None;
        for s in seeds {
            let (x, v) = self.refine(f, &s, &steps);
            if best.as_ref().map_or(true, |b| v > b.1) {
                best = Some((x, v));
            }
        }
        let (x, _) = best.ok_or_else(|| Error::Degenerate("no finite axis value".into()))?;
        Ok(Point {
            theta_x: wrap(x[0], T::PI()),
            theta_y: wrap(x[1], T::PI()),
            mu2: Some(wrap(x[2], T::lit(2.0) * T::TAU())),
            axis: Some(polar_direction(x[3], x[4])),
        })
    }

    fn optimize_fisher(&mut self, extra: &[Vec<T>]) -> Result<Point<T>> {
        let n = self.thetas.len();
        let mut grid = vec![T::neg_infinity(); n * n];
        for iy in 0..n {
            for ix in 0..n {
                grid[iy * n + ix] = fisher_from(&self.linear[iy].gamma, &self.linear[ix].gamma).0;
            }
        }
        let mut seeds: Vec<Vec<T>> = top_k(&grid, self.settings.refine_top)
            .into_iter()
            .map(|k| vec![self.thetas[k % n], self.thetas[k / n]])
            .collect();
        seeds.extend(extra.iter().cloned());
        seeds.extend(self.random(&[(T::zero(), T::PI()); 2]));
        let state = self.state;
        let f = |x: &[T]| fisher_violation_at(state, x[0], x[1]).map_or(T::neg_infinity(), |r| r.0);
        let step = self.theta_step();
        let mut best: Option<(Vec<T>, T)> = None;
        for s in seeds {
            let (x, v) = self.refine(f, &s, &[step, step]);
            if best.as_ref().map_or(true, |b| v > b.1) {
                best = Some((x, v));
            }
        }
        let (x, _) = best.ok_or_else(|| Error::Degenerate("no finite grid value".into()))?;
        Ok(Point {
            theta_x: wrap(x[0], T::PI()),
            theta_y: wrap(x[1], T::PI()),
            mu2: None,
            axis: None,
        })
    }

    fn finish_reid(&mut self, kind: CriterionKind, p: &Point<T>) -> Result<CriterionResult<T>> {
        let e = reid_violation_at(
            self.state,
            p.theta_x,
            p.theta_y,
            p.mu2.map(|mu2| MaiSpec { mu2, axis: p.axis }),
        )?;
        let out = CriterionResult::from_reid(kind, p, e, self.converged, self.evaluations);
        self.evaluations = 0;
        self.converged = true;
        Ok(out)
    }

    fn finish_fisher(&mut self, p: &Point<T>) -> Result<CriterionResult<T>> {
        let y = linear_stats(self.state, p.theta_y)?;
        let x = linear_stats(self.state, p.theta_x)?;
        let (delta, n) = fisher_from(&y.gamma, &x.gamma);
        let four = T::lit(4.0);
        let out = CriterionResult {
            kind: CriterionKind::Fisher,
            delta,
            theta_x: p.theta_x,
            theta_y: p.theta_y,
            mu2: None,
            axis: None,
            n_opt: n,
            m_opt: None,
            first_term: four * quad3(&y.gamma, &n),
            second_term: four * quad3(&x.gamma, &n),
            loss_rate: None,
            converged: self.converged,
            evaluations: self.evaluations,
        };
        self.evaluations = 0;
        self.converged = true;
        Ok(out)
    }
}

fn reid_eval<T: Real>(
    state: &SplitSpinState<T>,
    theta_x: T,
    theta_y: T,
    tr: &FamilyTransform<T>,
) -> Result<ReidEvaluation<T>> {
    let y = family_stats(&condition_on_alice(state, theta_y), tr)?;
    let x = linear_stats(state, theta_x)?;
    reid_from_stats(&y, &x.gamma)
}

fn point_seed<T: Real>(r: &CriterionResult<T>) -> Vec<T> {
    vec![r.theta_x, r.theta_y]
}

/// Optimized Reid witness for one mode.
pub fn delta_r<T: Real>(
    state: &SplitSpinState<T>,
    mode: ReidMode<T>,
    settings: &OptimizerSettings,
) -> Result<CriterionResult<T>> {
    let mut land = Landscape::new(state, settings)?;
    let linear_tr = FamilyTransform::new(&MeasurementFamily::Linear, state.atoms())?;
    let linear_point = land.optimize_angles(&linear_tr, &[])?;
    let linear = land.finish_reid(CriterionKind::ReidLinear, &linear_point)?;
    match mode {
        ReidMode::Linear => Ok(linear),
        ReidMode::Mai { pinned_mu2: Some(mu2) } => {
            let tr = FamilyTransform::new(&MeasurementFamily::Mai { mu2 }, state.atoms())?;
            let mut p = land.optimize_angles(&tr, &[point_seed(&linear)])?;
            p.mu2 = Some(mu2);
            land.finish_reid(CriterionKind::ReidMai, &p)
        }
        ReidMode::Mai { pinned_mu2: None } => {
            let p = land.optimize_mai(&linear_point)?;
            land.finish_reid(CriterionKind::ReidMai, &p)
        }
        ReidMode::MaiAxisOpt => {
            let z = land.optimize_mai(&linear_point)?;
            let z_result = land.finish_reid(CriterionKind::ReidMai, &z)?;
            axis_from(&mut land, &z, z_result)
        }
    }
}

fn axis_from<T: Real>(
    land: &mut Landscape<'_, T>,
    z: &Point<T>,
    z_result: CriterionResult<T>,
) -> Result<CriterionResult<T>> {
    let p = land.optimize_axis(z)?;
    let r = land.finish_reid(CriterionKind::ReidMaiAxis, &p)?;
    if r.delta >= z_result.delta {
        Ok(r)
    } else {
        let mut zr = z_result;
        zr.kind = CriterionKind::ReidMaiAxis;
        zr.axis = Some(Axis::Z.unit());
        zr.converged &= r.converged;
        zr.evaluations += r.evaluations;
        Ok(zr)
    }
}

/// Optimized Fisher witness.
pub fn delta_f<T: Real>(state: &SplitSpinState<T>, settings: &OptimizerSettings) -> Result<CriterionResult<T>> {
    Ok(steering_summary(state, settings)?.fisher)
}

/// The three steering witnesses, each seeded with the optimum of the
/// previous one so that `linear <= mai <= fisher` holds by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SteeringSummary<T> {
    pub linear: CriterionResult<T>,
    pub mai: CriterionResult<T>,
    pub fisher: CriterionResult<T>,
}

pub fn steering_summary<T: Real>(
    state: &SplitSpinState<T>,
    settings: &OptimizerSettings,
) -> Result<SteeringSummary<T>> {
    let mut land = Landscape::new(state, settings)?;
    let linear_tr = FamilyTransform::new(&MeasurementFamily::Linear, state.atoms())?;
    let lp = land.optimize_angles(&linear_tr, &[])?;
    let linear = land.finish_reid(CriterionKind::ReidLinear, &lp)?;
    let mp = land.optimize_mai(&lp)?;
    let mai = land.finish_reid(CriterionKind::ReidMai, &mp)?;
    let fp = land.optimize_fisher(&[point_seed(&mai), point_seed(&linear)])?;
    let fisher = land.finish_fisher(&fp)?;
    Ok(SteeringSummary { linear, mai, fisher })
}

/// Axis-optimized Reid witness together with its z-axis counterpart.
pub fn axis_comparison<T: Real>(
    state: &SplitSpinState<T>,
    settings: &OptimizerSettings,
) -> Result<(CriterionResult<T>, CriterionResult<T>)> {
    let mut land = Landscape::new(state, settings)?;
    let linear_tr = FamilyTransform::new(&MeasurementFamily::Linear, state.atoms())?;
    let lp = land.optimize_angles(&linear_tr, &[])?;
    land.finish_reid(CriterionKind::ReidLinear, &lp)?;
    let z = land.optimize_mai(&lp)?;
    let z_result = land.finish_reid(CriterionKind::ReidMai, &z)?;
    let axis = axis_from(&mut land, &z, z_result.clone())?;
    Ok((z_result, axis))
}

/// Average sensitivities along a fixed `n` and Alice setting `theta_y`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityProfile<T> {
    /// `n^T M_L n`
    pub linear: T,
    /// `max_mu2 n^T M(mu2) n`
    pub mai: T,
    pub mai_mu2: T,
    /// `4 n^T Gamma_Y n`, the conditional Fisher information.
    pub fisher_bound: T,
    /// Sensitivity of the unconditioned reduced state.
    pub unconditioned: T,
}

pub fn sensitivity_profile<T: Real>(
    state: &SplitSpinState<T>,
    theta_y: T,
    n: &Vec3<T>,
    settings: &OptimizerSettings,
) -> Result<SensitivityProfile<T>> {
    let asm = condition_on_alice(state, theta_y);
    let atoms = state.atoms();
    let at = |mu2: T| -> Result<T> {
        let tr = FamilyTransform::new(&MeasurementFamily::Mai { mu2 }, atoms)?;
        let s = family_stats(&asm, &tr)?;
        Ok(quad3(&moment_from_parts(&s.commutator, &s.gamma)?, n))
    };
    let lin = family_stats(&asm, &FamilyTransform::new(&MeasurementFamily::Linear, atoms)?)?;
    let linear = quad3(&moment_from_parts(&lin.commutator, &lin.gamma)?, n);
    let mu2s = periodic_grid(T::zero(), T::TAU(), settings.mu2_grid);
    let values = mu2s
        .par_iter()
        .map(|&m| at(m).unwrap_or(T::neg_infinity()))
        .collect::<Vec<_>>();
    let k = top_k(&values, 1).first().copied().unwrap_or(0);
    let step = T::TAU() / T::from_usize_lossy(settings.mu2_grid);
    let opt = nelder_mead_max(
        |x: &[T]| at(x[0]).unwrap_or(T::neg_infinity()),
        &[mu2s[k]],
        &[step],
        T::lit(settings.simplex_tol),
        settings.max_evals,
    );
    let (mai, mai_mu2) = [(linear, T::zero()), (values[k], mu2s[k]), (opt.value, opt.x[0])]
        .into_iter()
        .fold((T::neg_infinity(), T::zero()), |b, c| if c.0 > b.0 { c } else { b });
    let rho = state.reduced_bob_state();
    let sigma = covariance_matrix(&rho);
    let unconditioned = quad3(&moment_from_parts(&lin.commutator, &sigma)?, n);
    Ok(SensitivityProfile {
        linear,
        mai,
        mai_mu2: wrap(mai_mu2, T::TAU()),
        fisher_bound: T::lit(4.0) * quad3(&lin.gamma, n),
        unconditioned,
    })
}
