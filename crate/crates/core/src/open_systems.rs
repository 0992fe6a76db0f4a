//! Twisting under one-body atom loss on Bob's side.
//!
//! Bob's state lives on the particle-number sectors `0..=N_B`. The master
//! equation is `d rho/dt = -i[H, rho] + sum_i L_i rho L_i^dagger - {L_i^dagger L_i, rho}/2`
//! with `H = -chi S_z^2`, `L_1 = sqrt(gamma) a`, `L_2 = sqrt(gamma) b`, so that the
//! lossless evolution over `t2` is the twist with `mu2 = 2 chi t2`.
//!
//! `L_1^dagger L_1 + L_2^dagger L_2 = gamma N'` is a scalar on each sector, which
//! leaves only the jump terms outside the exactly exponentiated part.

use num_traits::Zero;
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::criteria::{moment_from_parts, optimal_measurement, CriterionKind, CriterionResult, FamilyStats, FamilyTransform, MeasurementFamily, family_stats};
use crate::error::{invalid, Error, Result};
use crate::linalg::{inner, mat3_scale, mat3_sub, mat3_zero, quad3, sym3_max_eigen, CMatrix, Mat3, Vec3};
use crate::optimize::{nelder_mead_max, periodic_grid, random_starts, top_k, OptimizerSettings};
use crate::scalar::{cre, cx, Cx, Real};
use crate::spin::{apply_spin_along, rotation, spin_along, Axis, SpinSector};
use crate::split::{condition_on_alice, reduced_bob_state, Assemblage, BlockDensityOperator, SplitSpinState};

/// Integrator step at zero loss; it shrinks as `1 / (1 + 5 gamma)`.
pub const DEFAULT_STEP: f64 = 0.01;
/// Allowed change of the result when the step is halved.
pub const HALVING_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig<T> {
    /// Loss rate per unit time.
    pub gamma: T,
    pub chi: T,
    pub t2: T,
    /// RK4 steps over `t2`.
    pub steps: usize,
}

impl<T: Real> LossConfig<T> {
    /// `chi = 1` and `t2 = mu2 / 2`.
    pub fn from_mu2(gamma: T, mu2: T) -> Self {
        let t2 = mu2 / T::lit(2.0);
        Self {
            gamma,
            chi: T::one(),
            t2,
            steps: default_steps(t2, gamma),
        }
    }

    pub fn mu2(&self) -> T {
        T::lit(2.0) * self.chi * self.t2
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= T::zero()) || !self.gamma.is_finite() {
            return Err(invalid("gamma", format!("must be finite and >= 0, got {}", self.gamma)));
        }
        if !self.chi.is_finite() {
            return Err(invalid("chi", format!("must be finite, got {}", self.chi)));
        }
        if !(self.t2 >= T::zero()) || !self.t2.is_finite() {
            return Err(invalid("t2", format!("must be finite and >= 0, got {}", self.t2)));
        }
        if self.steps == 0 {
            return Err(invalid("steps", "need at least one step"));
        }
        Ok(())
    }
}

fn default_steps<T: Real>(t: T, gamma: T) -> usize {
    let h = T::lit(DEFAULT_STEP) / (T::one() + T::lit(5.0) * gamma.abs());
    (t.abs() / h).ceil().to_usize().unwrap_or(1).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Jump {
    /// Removes a spin-up particle: `|k>_N -> sqrt(k) |k-1>_{N-1}`.
    A,
    /// Removes a spin-down particle: `|k>_N -> sqrt(N-k) |k>_{N-1}`.
    B,
}

/// Applies a jump to a vector in sector `particles`, returning a vector in
/// sector `particles - 1` (empty for the vacuum).
pub fn jump_apply<T: Real>(which: Jump, particles: usize, v: &[Cx<T>]) -> Result<Vec<Cx<T>>> {
    if v.len() != particles + 1 {
        return Err(Error::BlockMismatch(format!(
            "vector of length {} in sector with {particles} particles",
            v.len()
        )));
    }
    if particles == 0 {
        return Ok(Vec::new());
    }
    Ok((0..particles)
        .map(|k| match which {
            Jump::A => v[k + 1] * T::from_usize_lossy(k + 1).sqrt(),
            Jump::B => v[k] * T::from_usize_lossy(particles - k).sqrt(),
        })
        .collect())
}

/// `sqrt` amplitudes of `a` and `b` between sector `p` and `p - 1`, indexed by
/// the index in sector `p - 1`.
fn jump_factors<T: Real>(p: usize) -> (Vec<T>, Vec<T>) {
    let a = (0..p).map(|k| T::from_usize_lossy(k + 1).sqrt()).collect();
    let b = (0..p).map(|k| T::from_usize_lossy(p - k).sqrt()).collect();
    (a, b)
}

/// `a rho a^dagger + b rho b^dagger` for `rho` in sector `p`.
fn jump_conjugate<T: Real>(rho: &CMatrix<T>, p: usize) -> CMatrix<T> {
    let (a, b) = jump_factors::<T>(p);
    CMatrix::from_fn(p, p, |k, l| {
        rho[(k + 1, l + 1)] * (a[k] * a[l]) + rho[(k, l)] * (b[k] * b[l])
    })
}

/// `a^dagger O a + b^dagger O b` for `O` in sector `p - 1`, landing in sector `p`.
fn jump_adjoint<T: Real>(op: &CMatrix<T>, p: usize) -> CMatrix<T> {
    let (a, b) = jump_factors::<T>(p);
    CMatrix::from_fn(p + 1, p + 1, |k, l| {
        let mut v = Cx::zero();
        if k >= 1 && l >= 1 {
            v = v + op[(k - 1, l - 1)] * (a[k - 1] * a[l - 1]);
        }
        if k < p && l < p {
            v = v + op[(k, l)] * (b[k] * b[l]);
        }
        v
    })
}

/// Blocks indexed by particle number `0..=n_max`.
type Sectors<T> = Vec<CMatrix<T>>;

#[derive(Clone, Copy, Debug)]
struct Generator<T> {
    chi: T,
    gamma: T,
    heisenberg: bool,
}

impl<T: Real> Generator<T> {
    /// Elementwise rate of the diagonal part on sector `p`.
    fn rate(&self, p: usize, k: usize, l: usize) -> Cx<T> {
        let m2 = |i: usize| {
            let d = T::from_usize_lossy(2 * i) - T::from_usize_lossy(p);
            d * d / T::lit(4.0)
        };
        // H = -chi S_z^2
        let dh = -self.chi * (m2(k) - m2(l));
        let phase = if self.heisenberg { dh } else { -dh };
        cx(-self.gamma * T::from_usize_lossy(p), phase)
    }

    fn factors(&self, n_max: usize, h: T) -> Sectors<T> {
        (0..=n_max)
            .map(|p| CMatrix::from_fn(p + 1, p + 1, |k, l| (self.rate(p, k, l) * cre(h)).exp()))
            .collect()
    }

    fn coupling(&self, x: &Sectors<T>) -> Sectors<T> {
        let n_max = x.len() - 1;
        let g = cre(self.gamma);
        (0..=n_max)
            .map(|p| {
                if self.heisenberg {
                    if p == 0 {
                        CMatrix::zeros(1, 1)
                    } else {
                        jump_adjoint(&x[p - 1], p).scale(g)
                    }
                } else if p == n_max {
                    CMatrix::zeros(p + 1, p + 1)
                } else {
                    jump_conjugate(&x[p + 1], p + 1).scale(g)
                }
            })
            .collect()
    }

    /// Lawson RK4 over `steps` steps of size `h`.
    fn evolve(&self, mut x: Sectors<T>, h: T, steps: usize) -> Sectors<T> {
        if steps == 0 {
            return x;
        }
        let n_max = x.len() - 1;
        let full = self.factors(n_max, h);
        let half = self.factors(n_max, h / T::lit(2.0));
        let had = |e: &Sectors<T>, y: &Sectors<T>| -> Sectors<T> {
            e.iter()
                .zip(y)
                .map(|(f, m)| CMatrix::from_fn(m.rows(), m.cols(), |i, j| f[(i, j)] * m[(i, j)]))
                .collect()
        };
        let axpy = |y: &Sectors<T>, s: T, z: &Sectors<T>| -> Sectors<T> {
            y.iter()
                .zip(z)
                .map(|(a, b)| CMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] + b[(i, j)] * s))
                .collect()
        };
        let hh = h / T::lit(2.0);
        let skip = self.gamma == T::zero();
        for _ in 0..steps {
            if skip {
                x = had(&full, &x);
                continue;
            }
            let k1 = self.coupling(&x);
            let k2 = self.coupling(&had(&half, &axpy(&x, hh, &k1)));
            let eh_x = had(&half, &x);
            let k3 = self.coupling(&axpy(&eh_x, hh, &k2));
            let e_x = had(&full, &x);
            let k4 = self.coupling(&axpy(&e_x, h, &had(&half, &k3)));
            let k23 = axpy(&k2, T::one(), &k3);
            let mut next = axpy(&e_x, h / T::lit(6.0), &had(&full, &k1));
            next = axpy(&next, h / T::lit(3.0), &had(&half, &k23));
            x = axpy(&next, h / T::lit(6.0), &k4);
        }
        x
    }
}

/// Bob's state over all sectors below its initial particle number.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenBobState<T> {
    blocks: Sectors<T>,
}

impl<T: Real> OpenBobState<T> {
    /// Pads the given blocks with empty sectors down to the vacuum.
    pub fn from_density(rho: &BlockDensityOperator<T>) -> Self {
        let n_max = rho.blocks().keys().next_back().copied().unwrap_or(0);
        let blocks = (0..=n_max)
            .map(|p| rho.block(p).cloned().unwrap_or_else(|| CMatrix::zeros(p + 1, p + 1)))
            .collect();
        Self { blocks }
    }

    pub fn pure(sector: SpinSector, state: &[Cx<T>]) -> Result<Self> {
        if state.len() != sector.dim() {
            return Err(Error::BlockMismatch(format!("state of length {} in {sector}", state.len())));
        }
        let mut map = BTreeMap::new();
        map.insert(sector.particles(), CMatrix::outer(state, state));
        Ok(Self::from_density(&BlockDensityOperator::from_blocks(map)?))
    }

    pub fn max_particles(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn block(&self, particles: usize) -> Option<&CMatrix<T>> {
        self.blocks.get(particles)
    }

    pub fn trace(&self) -> T {
        self.blocks.iter().map(|b| b.trace().re).sum()
    }

    /// Total weight in sectors with at least `particles` particles.
    pub fn weight_from(&self, particles: usize) -> T {
        self.blocks.iter().skip(particles).map(|b| b.trace().re).sum()
    }

    /// The blocks as a density operator; integration error may leave the
    /// trace off by the integrator tolerance, so no validation is applied.
    pub fn density(&self) -> BlockDensityOperator<T> {
        BlockDensityOperator::from_blocks_unchecked(self.blocks.iter().cloned().enumerate().collect())
    }

    /// `<n . S>` and `<(n . S)^2>`.
    pub fn spin_moments(&self, n: &Vec3<T>) -> (T, T) {
        let mut first = T::zero();
        let mut second = T::zero();
        for (p, b) in self.blocks.iter().enumerate() {
            let s = spin_along(n, SpinSector::from_particles(p));
            let sb = s.entries().matmul(b);
            first = first + sb.trace().re;
            second = second + s.entries().matmul(&sb).trace().re;
        }
        (first, second)
    }
}

fn sectors_trace_distance<T: Real>(a: &Sectors<T>, b: &Sectors<T>) -> T {
    let da = OpenBobState { blocks: a.clone() }.density();
    let db = OpenBobState { blocks: b.clone() }.density();
    da.trace_distance(&db)
}

/// Encodes `exp(-i theta n.S)` and evolves under the loss master equation.
/// The result is checked against a run with half the step size.
pub fn lindblad_evolve<T: Real>(
    rho: &OpenBobState<T>,
    generator: &Vec3<T>,
    theta: T,
    cfg: &LossConfig<T>,
) -> Result<OpenBobState<T>> {
    cfg.validate()?;
    let encoded: Sectors<T> = rho
        .blocks
        .iter()
        .enumerate()
        .map(|(p, b)| {
            let r = rotation(generator, theta, SpinSector::from_particles(p));
            let r = r.entries();
            r.matmul(b).matmul(&r.adjoint())
        })
        .collect();
    let gen = Generator {
        chi: cfg.chi,
        gamma: cfg.gamma,
        heisenberg: false,
    };
    let n = T::from_usize_lossy(cfg.steps);
    let coarse = gen.evolve(encoded.clone(), cfg.t2 / n, cfg.steps);
    let fine = gen.evolve(encoded, cfg.t2 / (n * T::lit(2.0)), 2 * cfg.steps);
    // A step too coarse for the decay can agree with itself on a wrong
    // answer, so the trace is checked as well.
    let trace: T = fine.iter().map(|b| b.trace().re).sum();
    let change = sectors_trace_distance(&coarse, &fine).max((trace - rho.trace()).abs());
    if change > T::floor_tol(HALVING_TOL) {
        return Err(Error::Tolerance {
            change: change.as_f64(),
            tolerance: HALVING_TOL,
        });
    }
    Ok(OpenBobState { blocks: fine })
}

/// Heisenberg-picture images `Lambda^dagger(S_i)` and
/// `Lambda^dagger((S_i S_j + S_j S_i) / 2)` on every sector up to `n_max`.
#[derive(Clone, Debug)]
pub struct ChannelObservables<T> {
    chi: T,
    gamma: T,
    t2: T,
    first: [Sectors<T>; 3],
    second: [Sectors<T>; 6],
}

const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

fn pair_index(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    PAIRS.iter().position(|&p| p == (a, b)).expect("valid pair")
}

impl<T: Real> ChannelObservables<T> {
    /// Observables at `t2 = 0`.
    pub fn identity(n_max: usize, chi: T, gamma: T) -> Self {
        let spins: [Sectors<T>; 3] = Axis::ALL.map(|a| {
            (0..=n_max)
                .map(|p| spin_along(&a.unit(), SpinSector::from_particles(p)).into_entries())
                .collect()
        });
        let second = PAIRS.map(|(i, j)| {
            (0..=n_max)
                .map(|p| spins[i][p].anticommutator(&spins[j][p]).scale_re(T::lit(0.5)))
                .collect()
        });
        Self {
            chi,
            gamma,
            t2: T::zero(),
            first: spins,
            second,
        }
    }

    /// Propagates to `cfg.t2` and checks the result against half the step.
    pub fn new(n_max: usize, cfg: &LossConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let id = Self::identity(n_max, cfg.chi, cfg.gamma);
        let coarse = id.advanced(cfg.t2, cfg.steps);
        let fine = id.advanced(cfg.t2, 2 * cfg.steps);
        // relative to the largest entry, which grows like N^2 for the products
        let change = coarse.max_abs_diff(&fine) / T::one().max(fine.max_abs());
        if change > T::floor_tol(HALVING_TOL) {
            return Err(Error::Tolerance {
                change: change.as_f64(),
                tolerance: HALVING_TOL,
            });
        }
        Ok(fine)
    }

    /// Evolves a further `dt` in `steps` steps.
    pub fn advanced(&self, dt: T, steps: usize) -> Self {
        let gen = Generator {
            chi: self.chi,
            gamma: self.gamma,
            heisenberg: true,
        };
        let h = dt / T::from_usize_lossy(steps.max(1));
        let run = |x: &Sectors<T>| gen.evolve(x.clone(), h, steps);
        Self {
            chi: self.chi,
            gamma: self.gamma,
            t2: self.t2 + dt,
            first: std::array::from_fn(|i| run(&self.first[i])),
            second: std::array::from_fn(|i| run(&self.second[i])),
        }
    }

    pub fn t2(&self) -> T {
        self.t2
    }

    pub fn max_particles(&self) -> usize {
        self.first[0].len() - 1
    }

    /// `Lambda^dagger(S_i)` on sector `p`.
    pub fn spin(&self, i: usize, p: usize) -> &CMatrix<T> {
        &self.first[i][p]
    }

    /// `Lambda^dagger` of the symmetrized product `S_i S_j` on sector `p`.
    pub fn product(&self, i: usize, j: usize, p: usize) -> &CMatrix<T> {
        &self.second[pair_index(i, j)][p]
    }

    fn max_abs(&self) -> T {
        self.first.iter().chain(self.second.iter()).flatten().map(|m| m.max_abs()).fold(T::zero(), T::max)
    }

    fn max_abs_diff(&self, other: &Self) -> T {
        let all = |s: &Self| -> Vec<CMatrix<T>> { s.first.iter().chain(s.second.iter()).flatten().cloned().collect() };
        all(self)
            .iter()
            .zip(all(other).iter())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(T::zero(), T::max)
    }
}

/// Moments of the evolved assemblage for the linear spin components:
/// `gamma` is the averaged branch covariance after the channel, `commutator`
/// holds `-i <[Lambda^dagger(S_j), S_i]>` before it.
pub fn channel_stats<T: Real>(asm: &Assemblage<T>, obs: &ChannelObservables<T>) -> Result<FamilyStats<T>> {
    let axes: [Vec3<T>; 3] = Axis::ALL.map(|a| a.unit());
    let mut gamma = mat3_zero();
    let mut comm = mat3_zero();
    let mut mean = [T::zero(); 3];
    let two = T::lit(2.0);
    for b in asm.branches() {
        let p = b.sector.particles();
        if p > obs.max_particles() {
            return Err(Error::BlockMismatch(format!(
                "branch with {p} particles exceeds propagated sectors ({})",
                obs.max_particles()
            )));
        }
        let phi = &b.state;
        let a: [Vec<Cx<T>>; 3] = std::array::from_fn(|k| obs.spin(k, p).apply(phi));
        let s: [Vec<Cx<T>>; 3] = std::array::from_fn(|k| {
            let mut out = vec![Cx::zero(); phi.len()];
            apply_spin_along(&axes[k], b.sector, phi, &mut out);
            out
        });
        let m: [T; 3] = std::array::from_fn(|k| inner(phi, &a[k]).re);
        for i in 0..3 {
            mean[i] = mean[i] + b.prob * m[i];
            for j in 0..3 {
                if j >= i {
                    let second = inner(phi, &obs.product(i, j, p).apply(phi)).re;
                    gamma[i][j] = gamma[i][j] + b.prob * (second - m[i] * m[j]);
                }
                comm[i][j] = comm[i][j] + b.prob * two * inner(&a[j], &s[i]).im;
            }
        }
    }
    for i in 0..3 {
        for j in 0..i {
            gamma[i][j] = gamma[j][i];
        }
    }
    Ok(FamilyStats {
        gamma,
        commutator: comm,
        mean,
    })
}

fn max_sector<T: Real>(asm: &Assemblage<T>) -> usize {
    asm.branches().iter().map(|b| b.sector.particles()).max().unwrap_or(0)
}

/// `|d_theta <M>|^2 / sum_b p_b Var(M)` after encoding `exp(-i theta n.S)` and
/// the loss channel, with `M = m.S`. The derivative is a Richardson-extrapolated
/// central difference, checked against the Heisenberg-picture form.
pub fn channel_squeezing_parameter<T: Real>(
    asm: &Assemblage<T>,
    n: &Vec3<T>,
    m: &Vec3<T>,
    cfg: &LossConfig<T>,
) -> Result<T> {
    let obs = ChannelObservables::new(max_sector(asm), cfg)?;
    let stats = channel_stats(asm, &obs)?;
    let exact = (0..3).map(|i| (0..3).map(|j| n[i] * stats.commutator[i][j] * m[j]).sum::<T>()).sum::<T>();
    let variance = quad3(&stats.gamma, m);

    let rho = OpenBobState::from_density(&reduced_bob_state(asm));
    let mean_at = |theta: T| -> Result<T> { Ok(lindblad_evolve(&rho, n, theta, cfg)?.spin_moments(m).0) };
    let h = T::lit(1e-4);
    let central = |h: T| -> Result<T> { Ok((mean_at(h)? - mean_at(-h)?) / (T::lit(2.0) * h)) };
    let (d1, d2) = (central(h)?, central(h / T::lit(2.0))?);
    let derivative = (T::lit(4.0) * d2 - d1) / T::lit(3.0);
    let scale = T::one().max(exact.abs());
    if (derivative - exact).abs() > T::floor_tol(1e-6) * scale {
        return Err(Error::NumericalInstability(format!(
            "finite-difference derivative {derivative} disagrees with adjoint form {exact}"
        )));
    }
    if variance <= T::zero() {
        return Err(Error::Degenerate("zero readout variance".into()));
    }
    Ok(derivative * derivative / variance)
}

/// Reid's witness with the lossy twist at fixed angles.
pub fn lossy_violation_at<T: Real>(
    state: &SplitSpinState<T>,
    theta_x: T,
    theta_y: T,
    cfg: &LossConfig<T>,
) -> Result<T> {
    let obs = ChannelObservables::new(state.atoms(), cfg)?;
    let tr = FamilyTransform::new(&MeasurementFamily::Linear, state.atoms())?;
    let gx = family_stats(&condition_on_alice(state, theta_x), &tr)?.gamma;
    let y = channel_stats(&condition_on_alice(state, theta_y), &obs)?;
    Ok(evaluate(&y, &gx)?.0)
}

fn evaluate<T: Real>(y: &FamilyStats<T>, gamma_x: &Mat3<T>) -> Result<(T, Vec3<T>, Mat3<T>)> {
    let m = moment_from_parts(&y.commutator, &y.gamma)?;
    let (l, n) = sym3_max_eigen(&mat3_sub(&m, &mat3_scale(gamma_x, T::lit(4.0))));
    Ok((l, n, m))
}

/// Reid's witness optimized over `(theta_X, theta_Y, t2)` for loss rate `gamma`
/// and `chi = 1`. The reported `mu2` is `2 t2`.
pub fn delta_r_mai_lossy<T: Real>(
    state: &SplitSpinState<T>,
    gamma: T,
    settings: &OptimizerSettings,
) -> Result<CriterionResult<T>> {
    LossConfig::from_mu2(gamma, T::zero()).validate()?;
    if settings.theta_grid == 0 || settings.mu2_grid == 0 {
        return Err(invalid("optimizer", "grid sizes must be positive"));
    }
    let atoms = state.atoms();
    let thetas = periodic_grid(T::zero(), T::PI(), settings.theta_grid);
    let assemblages: Vec<Assemblage<T>> = thetas.par_iter().map(|&t| condition_on_alice(state, t)).collect();
    let tr = FamilyTransform::new(&MeasurementFamily::Linear, atoms)?;
    let linear: Vec<Mat3<T>> = assemblages
        .par_iter()
        .map(|a| family_stats(a, &tr).map(|s| s.gamma))
        .collect::<Result<_>>()?;

    // t2 grid covering mu2 in [0, 2 pi), built by stepping the semigroup.
    let t2s: Vec<T> = periodic_grid(T::zero(), T::PI(), settings.mu2_grid);
    let dt = T::PI() / T::from_usize_lossy(settings.mu2_grid);
    let cell_steps = default_steps(dt, gamma);
    ChannelObservables::new(atoms, &LossConfig { gamma, chi: T::one(), t2: dt, steps: cell_steps })?;
    let mut grid = vec![ChannelObservables::identity(atoms, T::one(), gamma)];
    for _ in 1..t2s.len() {
        let next = grid.last().expect("non-empty").advanced(dt, cell_steps);
        grid.push(next);
    }
    let at = |t2: T| -> Option<ChannelObservables<T>> {
        if !(t2 >= T::zero()) || !t2.is_finite() {
            return None;
        }
        let idx = (t2 / dt).floor().to_usize()?.min(grid.len() - 1);
        let rest = t2 - t2s[idx];
        Some(grid[idx].advanced(rest, default_steps(rest, gamma)))
    };

    let n = thetas.len();
    let cells: Vec<(T, usize)> = (0..grid.len() * n)
        .into_par_iter()
        .map(|k| {
            let (it, iy) = (k / n, k % n);
            let y = channel_stats(&assemblages[iy], &grid[it])?;
            let Ok(m) = moment_from_parts(&y.commutator, &y.gamma) else {
                return Ok((T::neg_infinity(), 0));
            };
            let mut best = (T::neg_infinity(), 0);
            for (ix, gx) in linear.iter().enumerate() {
                let v = sym3_max_eigen(&mat3_sub(&m, &mat3_scale(gx, T::lit(4.0)))).0;
                if v > best.0 {
                    best = (v, ix);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let values: Vec<T> = cells.iter().map(|c| c.0).collect();
    let mut seeds: Vec<Vec<T>> = top_k(&values, settings.refine_top)
        .into_iter()
        .map(|k| vec![thetas[cells[k].1], thetas[k % n], t2s[k / n]])
        .collect();
    seeds.extend(random_starts(
        &mut settings.rng(),
        &[(T::zero(), T::PI()), (T::zero(), T::PI()), (T::zero(), T::PI())],
        settings.random_restarts,
    ));

    let eval = |x: &[T]| -> Option<(T, Vec3<T>, Mat3<T>, FamilyStats<T>, Mat3<T>)> {
        let obs = at(x[2])?;
        let gx = family_stats(&condition_on_alice(state, x[0]), &tr).ok()?.gamma;
        let y = channel_stats(&condition_on_alice(state, x[1]), &obs).ok()?;
        let (l, nv, m) = evaluate(&y, &gx).ok()?;
        Some((l, nv, m, y, gx))
    };
    let f = |x: &[T]| eval(x).map_or(T::neg_infinity(), |e| e.0);
    let step = T::PI() / T::from_usize_lossy(settings.theta_grid);
    let steps = [step, step, dt];
    let mut evaluations = 0;
    let mut converged = true;
    let mut best: Option<(Vec<T>, T)> = None;
    for s in &seeds {
        let opt = nelder_mead_max(f, s, &steps, T::lit(settings.simplex_tol), settings.max_evals);
        evaluations += opt.evaluations;
        converged &= opt.converged;
        if best.as_ref().map_or(true, |b| opt.value > b.1) {
            best = Some((opt.x, opt.value));
        }
    }
    let (x, _) = best.ok_or_else(|| Error::Degenerate("no finite grid value".into()))?;
    let (delta, n_opt, m, y, gx) = eval(&x).ok_or_else(|| Error::Degenerate("optimum not evaluable".into()))?;
    let wrap = |v: T| {
        let r = v % T::PI();
        if r < T::zero() {
            r + T::PI()
        } else {
            r
        }
    };
    Ok(CriterionResult {
        kind: CriterionKind::ReidMaiLossy,
        delta,
        theta_x: wrap(x[0]),
        theta_y: wrap(x[1]),
        mu2: Some(T::lit(2.0) * x[2]),
        axis: None,
        n_opt,
        m_opt: Some(optimal_measurement(&y.commutator, &y.gamma, &n_opt)?),
        first_term: quad3(&m, &n_opt),
        second_term: quad3(&mat3_scale(&gx, T::lit(4.0)), &n_opt),
        loss_rate: Some(gamma),
        converged,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{coherent_state, oat_unitary};
    use crate::split::build_split_state;

    fn c(re: f64) -> Cx<f64> {
        cre(re)
    }

    #[test]
    fn jump_amplitudes() {
        let up = [c(0.0), c(1.0)];
        assert_eq!(jump_apply(Jump::A, 1, &up).unwrap(), vec![c(1.0)]);
        let down = [c(1.0), c(0.0), c(0.0)];
        let out = jump_apply(Jump::B, 2, &down).unwrap();
        assert!((out[0] - c(2f64.sqrt())).norm() < 1e-15 && out[1].norm() == 0.0);
        assert!(jump_apply(Jump::A, 2, &down).unwrap().iter().all(|v| v.norm() == 0.0));
        assert!(jump_apply::<f64>(Jump::A, 0, &[c(1.0)]).unwrap().is_empty());
        assert!(jump_apply(Jump::A, 2, &up).is_err());
    }

    #[test]
    fn number_operator_identity() {
        // a^dagger a + b^dagger b = N' on every sector
        for p in 1..6 {
            let id = CMatrix::<f64>::identity(p);
            let n = jump_adjoint(&id, p);
            assert!(n.max_abs_diff(&CMatrix::identity(p + 1).scale_re(p as f64)) < 1e-14);
        }
    }

    #[test]
    fn closed_system_matches_twist() {
        let sector = SpinSector::from_particles(10);
        let psi = coherent_state(sector, 1.1, 0.4);
        let rho = OpenBobState::pure(sector, &psi).unwrap();
        let cfg = LossConfig::from_mu2(0.0, 0.9);
        let out = lindblad_evolve(&rho, &Axis::Y.unit(), 0.0, &cfg).unwrap();
        let u = oat_unitary(0.9, sector, None).unwrap();
        let want = CMatrix::outer(&u.entries().apply(&psi), &u.entries().apply(&psi));
        let mut map = BTreeMap::new();
        map.insert(10, want);
        let want = OpenBobState::from_density(&BlockDensityOperator::from_blocks(map).unwrap());
        assert!(out.density().trace_distance(&want.density()) < 1e-8);
    }

    #[test]
    fn trace_and_positivity_under_loss() {
        let sector = SpinSector::from_particles(10);
        let rho = OpenBobState::pure(sector, &coherent_state(sector, 0.7, 0.0)).unwrap();
        let mut prev = 1.0;
        for k in 1..=5 {
            let cfg = LossConfig::from_mu2(0.2, 0.3 * k as f64);
            let out = lindblad_evolve(&rho, &Axis::Z.unit(), 0.2, &cfg).unwrap();
            assert!((out.trace() - 1.0).abs() < 1e-8);
            out.density().validate(1e-8).unwrap();
            let w = out.weight_from(10);
            assert!(w <= prev + 1e-12);
            prev = w;
        }
    }

    #[test]
    fn long_loss_reaches_vacuum() {
        let sector = SpinSector::from_particles(4);
        let rho = OpenBobState::pure(sector, &coherent_state(sector, 0.3, 0.2)).unwrap();
        let cfg = LossConfig {
            gamma: 2.0f64,
            chi: 1.0,
            t2: 10.0,
            steps: 4000,
        };
        let out = lindblad_evolve(&rho, &Axis::Z.unit(), 0.0, &cfg).unwrap();
        assert!((out.block(0).unwrap()[(0, 0)].re - 1.0).abs() < 1e-8);
        assert!((out.trace() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn heisenberg_matches_schroedinger() {
        let sector = SpinSector::from_particles(6);
        let psi = coherent_state::<f64>(sector, 1.3, 0.9);
        let rho = OpenBobState::pure(sector, &psi).unwrap();
        let cfg = LossConfig::from_mu2(0.3, 1.2);
        let out = lindblad_evolve(&rho, &Axis::X.unit(), 0.0, &cfg).unwrap();
        let obs = ChannelObservables::new(6, &cfg).unwrap();
        for (i, axis) in Axis::ALL.iter().enumerate() {
            let (s, s2) = out.spin_moments(&axis.unit());
            let h = inner(&psi, &obs.spin(i, 6).apply(&psi)).re;
            let h2 = inner(&psi, &obs.product(i, i, 6).apply(&psi)).re;
            assert!((s - h).abs() < 1e-9 && (s2 - h2).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = LossConfig { gamma: -0.1, chi: 1.0, t2: 1.0, steps: 10 };
        assert!(bad.validate().is_err());
        assert!(LossConfig { steps: 0, ..LossConfig::from_mu2(0.1, 1.0) }.validate().is_err());
        let sector = SpinSector::from_particles(8);
        let rho = OpenBobState::pure(sector, &coherent_state(sector, 0.5, 0.0)).unwrap();
        for (gamma, steps) in [(0.4, 1), (0.4, 30), (3.0, 1)] {
            let cfg = LossConfig { gamma, chi: 1.0, t2: 3.0, steps };
            assert!(matches!(lindblad_evolve(&rho, &Axis::Y.unit(), 0.0, &cfg), Err(Error::Tolerance { .. })));
        }
    }

    #[test]
    fn lossless_channel_parameter_matches_twist() {
        let s = build_split_state(8, 0.5).unwrap();
        let asm = condition_on_alice(&s, 1.2);
        let (n, m) = ([0.0, 0.6, 0.8], [0.3, -0.4, 0.866_025_403_784_438_6]);
        for mu2 in [0.0, 0.7] {
            let got = channel_squeezing_parameter(&asm, &n, &m, &LossConfig::from_mu2(0.0, mu2)).unwrap();
            let family = if mu2 == 0.0 { MeasurementFamily::Linear } else { MeasurementFamily::Mai { mu2 } };
            let st = family_stats(&asm, &FamilyTransform::new(&family, 8).unwrap()).unwrap();
            let num: f64 = (0..3).map(|i| (0..3).map(|j| n[i] * st.commutator[i][j] * m[j]).sum::<f64>()).sum();
            let want = num * num / quad3(&st.gamma, &m);
            assert!((got - want).abs() < 1e-7 * want.max(1.0), "{got} vs {want}");
        }
        let lossy = channel_squeezing_parameter(&asm, &n, &m, &LossConfig::from_mu2(0.4, 0.7)).unwrap();
        let clean = channel_squeezing_parameter(&asm, &n, &m, &LossConfig::from_mu2(0.0, 0.7)).unwrap();
        assert!(lossy < clean);
    }
}
