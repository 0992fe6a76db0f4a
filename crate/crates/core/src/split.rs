//! The split spin squeezed state, Alice's conditioning and Bob's reduced state.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigen, norm_sqr, CMatrix, Vec3};
use crate::scalar::{cre, Cx, Real};
use crate::spin::{binomial, spin_along, yz_direction, LocalOperator, SpinSector};

/// Largest supported total atom number.
pub const MAX_ATOMS: usize = 40;

/// Branches with smaller probability are discarded.
pub const BRANCH_CUTOFF: f64 = 1e-14;

/// Amplitudes `c[N_A][k_A][k_B]` of the split state, one
/// `(N_A + 1) x (N - N_A + 1)` block per Alice atom number.
#[derive(Clone, Debug)]
pub struct SplitSpinState<T> {
    atoms: usize,
    mu: T,
    blocks: Vec<CMatrix<T>>,
    /// Eigenvectors of `S_x` on Alice's sectors, with `W^dagger c`.
    alice_x: Vec<(CMatrix<T>, CMatrix<T>)>,
}

fn alice_x_bases<T: Real>(blocks: &[CMatrix<T>]) -> Vec<(CMatrix<T>, CMatrix<T>)> {
    blocks
        .iter()
        .enumerate()
        .map(|(n_a, c)| {
            let sx = spin_along(&[T::one(), T::zero(), T::zero()], SpinSector::from_particles(n_a));
            let w = hermitian_eigen(sx.entries()).vectors;
            let wc = w.adjoint().matmul(c);
            (w, wc)
        })
        .collect()
}

/// Builds the state obtained by one-axis twisting `N` x-polarized atoms for
/// `mu = 2 chi t` and splitting them into two modes.
pub fn build_split_state<T: Real>(atoms: usize, mu: T) -> Result<SplitSpinState<T>> {
    if atoms == 0 || atoms > MAX_ATOMS {
        return Err(invalid("N", format!("must be in 1..={MAX_ATOMS}, got {atoms}")));
    }
    if !mu.is_finite() {
        return Err(invalid("mu", format!("must be finite, got {mu}")));
    }
    let scale = 2f64.powi(-(atoms as i32));
    let half_mu = mu / T::lit(2.0);
    let blocks = (0..=atoms)
        .map(|n_a| {
            let n_b = atoms - n_a;
            let outer = binomial(atoms, n_a);
            CMatrix::from_fn(n_a + 1, n_b + 1, |ka, kb| {
                let weight = outer * binomial(n_a, ka) * binomial(n_b, kb);
                let magnitude = T::lit((weight as f64).sqrt() * scale);
                let d = atoms as i64 - 2 * (ka + kb) as i64;
                let phase = -half_mu * T::from_i64(d * d).unwrap() / T::lit(4.0);
                Cx::from_polar(magnitude, phase)
            })
        })
        .collect::<Vec<_>>();
    let alice_x = alice_x_bases(&blocks);
    Ok(SplitSpinState {
        atoms,
        mu,
        blocks,
        alice_x,
    })
}

impl<T: Real> SplitSpinState<T> {
    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    /// Amplitude block for `N_A` atoms on Alice's side.
    pub fn block(&self, n_a: usize) -> Option<&CMatrix<T>> {
        self.blocks.get(n_a)
    }

    pub fn alice_sector(&self, n_a: usize) -> SpinSector {
        SpinSector::from_particles(n_a)
    }

    pub fn bob_sector(&self, n_a: usize) -> SpinSector {
        SpinSector::from_particles(self.atoms - n_a)
    }

    pub fn norm_sqr(&self) -> T {
        self.blocks.iter().map(|b| b.frobenius().powi(2)).sum()
    }

    /// Multiplies every amplitude by a unit phase.
    pub fn with_global_phase(&self, phase: T) -> Self {
        let p = Cx::from_polar(T::one(), phase);
        let blocks: Vec<CMatrix<T>> = self.blocks.iter().map(|b| b.scale(p)).collect();
        Self {
            atoms: self.atoms,
            mu: self.mu,
            alice_x: alice_x_bases(&blocks),
            blocks,
        }
    }

    /// Bob's reduced state by direct partial trace over Alice.
    pub fn reduced_bob_state(&self) -> BlockDensityOperator<T> {
        let mut blocks = BTreeMap::new();
        for (n_a, c) in self.blocks.iter().enumerate() {
            // rho(k, k') = sum_ka c[ka][k] conj(c[ka][k'])
            let ct = c.transpose();
            blocks.insert(self.atoms - n_a, ct.matmul(&ct.adjoint()));
        }
        BlockDensityOperator { blocks }
    }
}

/// Marginal probability of finding `N_A` atoms on Alice's side.
pub fn sector_probability<T: Real>(state: &SplitSpinState<T>, n_a: usize) -> Result<T> {
    state
        .block(n_a)
        .map(|b| b.frobenius().powi(2))
        .ok_or_else(|| invalid("N_A", format!("must be in 0..={}, got {n_a}", state.atoms)))
}

/// One outcome `(N_A, l_A)` of Alice's number-resolved measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch<T> {
    pub n_a: usize,
    /// Index of Alice's eigenvalue in ascending order, `0..=N_A`.
    pub alice_index: usize,
    pub alice_eigenvalue: T,
    pub prob: T,
    pub sector: SpinSector,
    /// Bob's normalized conditional state.
    pub state: Vec<Cx<T>>,
}

impl<T: Real> Branch<T> {
    pub fn expectation(&self, op: &LocalOperator<T>) -> Cx<T> {
        crate::linalg::inner(&self.state, &op.apply(self.sector, &self.state))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AliceSetting<T> {
    pub direction: Vec3<T>,
    /// Alice resolves `N_A` as part of her outcome.
    pub number_resolved: bool,
}

/// Bob's conditional states with their probabilities for one Alice setting.
#[derive(Clone, Debug)]
pub struct Assemblage<T> {
    setting: AliceSetting<T>,
    branches: Vec<Branch<T>>,
}

impl<T: Real> Assemblage<T> {
    /// Validated constructor for externally built assemblages.
    pub fn from_branches(setting: AliceSetting<T>, branches: Vec<Branch<T>>) -> Result<Self> {
        let tol = T::floor_tol(1e-10);
        let total: T = branches.iter().map(|b| b.prob).sum();
        if (total - T::one()).abs() > tol {
            return Err(invalid("branches", format!("probabilities sum to {total}")));
        }
        for b in &branches {
            if b.state.len() != b.sector.dim() {
                return Err(Error::BlockMismatch(format!(
                    "branch vector of length {} in sector {}",
                    b.state.len(),
                    b.sector
                )));
            }
            if (norm_sqr(&b.state) - T::one()).abs() > tol || b.prob < T::zero() {
                return Err(invalid("branches", "branch state not normalized".to_string()));
            }
        }
        Ok(Self { setting, branches })
    }

    pub fn setting(&self) -> &AliceSetting<T> {
        &self.setting
    }

    pub fn branches(&self) -> &[Branch<T>] {
        &self.branches
    }

    pub fn total_probability(&self) -> T {
        self.branches.iter().map(|b| b.prob).sum()
    }

    /// `sum_b p_b <phi_b| O |phi_b>`
    pub fn average(&self, op: &LocalOperator<T>) -> Cx<T> {
        self.branches
            .iter()
            .map(|b| b.expectation(op) * cre(b.prob))
            .fold(Cx::zero(), |a, b| a + b)
    }
}

/// Conditions Bob on Alice measuring `cos(theta) S_y + sin(theta) S_z`.
///
/// That operator is `R S_z R^dagger` with `R = exp(-i (theta - pi/2) S_x)`,
/// so its eigenvectors are the columns of `R`, built from the cached
/// `S_x` eigenbasis.
pub fn condition_on_alice<T: Real>(state: &SplitSpinState<T>, theta_y: T) -> Assemblage<T> {
    let alpha = theta_y - T::FRAC_PI_2();
    let projected = state.alice_x.iter().enumerate().map(|(n_a, (w, wc))| {
        let sector = SpinSector::from_particles(n_a);
        // R^dagger c = W exp(i alpha D) W^dagger c
        let mut rotated = wc.clone();
        for k in 0..=n_a {
            let ph = Cx::from_polar(T::one(), alpha * sector.m::<T>(k));
            for z in rotated.data_mut()[k * wc.cols()..(k + 1) * wc.cols()].iter_mut() {
                *z = *z * ph;
            }
        }
        w.matmul(&rotated)
    });
    let eigenvalues = |n_a: usize| -> Vec<T> {
        let sector = SpinSector::from_particles(n_a);
        (0..=n_a).map(|k| sector.m(k)).collect()
    };
    assemble(state, &yz_direction(theta_y), projected.enumerate().map(|(n_a, p)| (p, eigenvalues(n_a))))
}

/// Conditions Bob on Alice measuring `n . S` with number resolution.
pub fn condition_on_direction<T: Real>(state: &SplitSpinState<T>, dir: &Vec3<T>) -> Assemblage<T> {
    let per_sector = state.blocks.iter().enumerate().map(|(n_a, c)| {
        let eig = hermitian_eigen(spin_along(dir, SpinSector::from_particles(n_a)).entries());
        (eig.vectors.adjoint().matmul(c), eig.values)
    });
    assemble(state, dir, per_sector)
}

/// Row `l` of each projected block is Bob's unnormalized vector for
/// Alice's `l`-th eigenvalue.
fn assemble<T: Real>(
    state: &SplitSpinState<T>,
    dir: &Vec3<T>,
    per_sector: impl Iterator<Item = (CMatrix<T>, Vec<T>)>,
) -> Assemblage<T> {
    let cutoff = T::lit(BRANCH_CUTOFF);
    let mut branches = Vec::new();
    for (n_a, (projected, values)) in per_sector.enumerate() {
        let bob = state.bob_sector(n_a);
        for l in 0..=n_a {
            let phi = projected.row(l);
            let p = norm_sqr(phi);
            if p < cutoff {
                continue;
            }
            let inv = cre(T::one() / p.sqrt());
            branches.push(Branch {
                n_a,
                alice_index: l,
                alice_eigenvalue: values[l],
                prob: p,
                sector: bob,
                state: phi.iter().map(|z| *z * inv).collect(),
            });
        }
    }
    // Renormalize away the dropped weight.
    let total: T = branches.iter().map(|b| b.prob).sum();
    branches.iter_mut().for_each(|b| b.prob = b.prob / total);
    Assemblage {
        setting: AliceSetting {
            direction: *dir,
            number_resolved: true,
        },
        branches,
    }
}

/// A state block-diagonal over Bob's particle-number sectors.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDensityOperator<T> {
    blocks: BTreeMap<usize, CMatrix<T>>,
}

impl<T: Real> BlockDensityOperator<T> {
    /// Builds from blocks keyed by particle number, checking shapes,
    /// hermiticity, positivity and unit trace.
    pub fn from_blocks(blocks: BTreeMap<usize, CMatrix<T>>) -> Result<Self> {
        for (&n, b) in &blocks {
            if b.rows() != n + 1 || b.cols() != n + 1 {
                return Err(Error::BlockMismatch(format!(
                    "block for {n} particles has shape {}x{}",
                    b.rows(),
                    b.cols()
                )));
            }
        }
        let rho = Self { blocks };
        rho.validate(T::floor_tol(1e-10))?;
        Ok(rho)
    }

    /// Skips validation; callers guarantee square blocks of matching size.
    pub(crate) fn from_blocks_unchecked(blocks: BTreeMap<usize, CMatrix<T>>) -> Self {
        Self { blocks }
    }

    pub fn validate(&self, tol: T) -> Result<()> {
        for (n, b) in &self.blocks {
            let resid = b.hermitian_residue();
            if resid > tol {
                return Err(invalid("blocks", format!("block {n} not Hermitian ({resid})")));
            }
            let min = hermitian_eigen(b).values.first().copied().unwrap_or(T::zero());
            if min < -tol {
                return Err(invalid("blocks", format!("block {n} has eigenvalue {min}")));
            }
        }
        let tr = self.trace();
        if (tr - T::one()).abs() > tol {
            return Err(invalid("blocks", format!("trace is {tr}")));
        }
        Ok(())
    }

    pub fn blocks(&self) -> &BTreeMap<usize, CMatrix<T>> {
        &self.blocks
    }

    pub fn block(&self, particles: usize) -> Option<&CMatrix<T>> {
        self.blocks.get(&particles)
    }

    pub fn trace(&self) -> T {
        self.blocks.values().map(|b| b.trace().re).sum()
    }

    /// `Tr[rho O]` with `O` acting sector by sector.
    pub fn expectation(&self, op: &LocalOperator<T>) -> Cx<T> {
        self.blocks
            .iter()
            .map(|(&n, b)| op.matrix(SpinSector::from_particles(n)).trace_product(b))
            .fold(Cx::zero(), |a, b| a + b)
    }

    /// Trace distance, treating missing sectors as zero blocks.
    pub fn trace_distance(&self, other: &Self) -> T {
        let mut keys: Vec<usize> = self.blocks.keys().chain(other.blocks.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        let half = T::lit(0.5);
        keys.into_iter()
            .map(|n| {
                let zero = CMatrix::zeros(n + 1, n + 1);
                let a = self.blocks.get(&n).unwrap_or(&zero);
                let b = other.blocks.get(&n).unwrap_or(&zero);
                let d = a - b;
                hermitian_eigen(&d).values.iter().map(|v| v.abs()).sum::<T>() * half
            })
            .sum()
    }
}

/// `rho_B = sum_b p_b |phi_b><phi_b|`, blockwise.
pub fn reduced_bob_state<T: Real>(assemblage: &Assemblage<T>) -> BlockDensityOperator<T> {
    let mut blocks: BTreeMap<usize, CMatrix<T>> = BTreeMap::new();
    for b in assemblage.branches() {
        let n = b.sector.particles();
        let term = CMatrix::outer(&b.state, &b.state).scale_re(b.prob);
        match blocks.get_mut(&n) {
            Some(acc) => *acc = &*acc + &term,
            None => {
                blocks.insert(n, term);
            }
        }
    }
    BlockDensityOperator { blocks }
}

/// `<psi| O_A (x) O_B |psi>` summed over all `N_A` sectors.
pub fn joint_expectation<T: Real>(
    state: &SplitSpinState<T>,
    op_a: &LocalOperator<T>,
    op_b: &LocalOperator<T>,
) -> Cx<T> {
    let mut acc = Cx::zero();
    for (n_a, c) in state.blocks.iter().enumerate() {
        let a = op_a.matrix(state.alice_sector(n_a));
        let b = op_b.matrix(state.bob_sector(n_a));
        let x = a.matmul(c).matmul(&b.transpose());
        acc = acc + c.adjoint().trace_product(&x);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{coherent_state, Axis};
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_split_state(0, 0.1).is_err());
        assert!(build_split_state(41, 0.1).is_err());
        assert!(build_split_state(4, f64::NAN).is_err());
        let s = build_split_state(4, 0.1).unwrap();
        assert!(sector_probability(&s, 5).is_err());
    }

    #[test]
    fn normalization_and_magnitudes() {
        for n in [1, 2, 7, 20, 40] {
            for mu in [0.0, 0.4, 2.1] {
                let s = build_split_state::<f64>(n, mu).unwrap();
                assert!(close(s.norm_sqr(), 1.0, 1e-12), "N={n} mu={mu}");
            }
        }
        let s = build_split_state::<f64>(6, 0.7).unwrap();
        let c = s.block(2).unwrap();
        let want = (binomial(6, 2) * binomial(2, 1) * binomial(4, 3)) as f64;
        assert!(close(c[(1, 3)].norm(), want.sqrt() / 64.0, 1e-15));
    }

    #[test]
    fn sector_probabilities_are_binomial() {
        let s = build_split_state::<f64>(20, 0.37).unwrap();
        assert!(close(sector_probability(&s, 10).unwrap(), 184756.0 / 1048576.0, 1e-14));
        assert!(close(sector_probability(&s, 0).unwrap(), 2f64.powi(-20), 1e-20));
        let total: f64 = (0..=20).map(|k| sector_probability(&s, k).unwrap()).sum();
        assert!(close(total, 1.0, 1e-13));
        let one = build_split_state::<f64>(1, 1.3).unwrap();
        assert!(close(sector_probability(&one, 0).unwrap(), 0.5, 1e-15));
        assert!(close(sector_probability(&one, 1).unwrap(), 0.5, 1e-15));
    }

    #[test]
    fn unsqueezed_branches_are_x_coherent() {
        let s = build_split_state::<f64>(20, 0.0).unwrap();
        for theta in [0.0, 0.7, 2.5] {
            let asm = condition_on_alice(&s, theta);
            for b in asm.branches() {
                let coh = coherent_state(b.sector, PI / 2.0, 0.0);
                let overlap = crate::linalg::inner(&coh, &b.state).norm();
                assert!(close(overlap, 1.0, 1e-10));
            }
        }
    }

    #[test]
    fn completeness_and_mixture_consistency() {
        let s = build_split_state::<f64>(20, 0.4).unwrap();
        let direct = s.reduced_bob_state();
        assert!(direct.validate(1e-12).is_ok());
        for theta in [0.0, 0.9, 1.7] {
            let asm = condition_on_alice(&s, theta);
            assert!(close(asm.total_probability(), 1.0, 1e-10));
            for b in asm.branches() {
                assert!(close(norm_sqr(&b.state), 1.0, 1e-10));
                assert!(b.prob >= BRANCH_CUTOFF * 0.5);
            }
            let rho = reduced_bob_state(&asm);
            assert!(rho.trace_distance(&direct) < 1e-10);
        }
    }

    #[test]
    fn rotation_path_matches_eigensolver_path() {
        let s = build_split_state::<f64>(11, 0.8).unwrap();
        for theta in [0.0, 0.45, PI / 2.0, 2.8] {
            let fast = condition_on_alice(&s, theta);
            let slow = condition_on_direction(&s, &yz_direction(theta));
            assert_eq!(fast.branches().len(), slow.branches().len());
            for (a, b) in fast.branches().iter().zip(slow.branches()) {
                assert_eq!((a.n_a, a.alice_index), (b.n_a, b.alice_index));
                assert!(close(a.prob, b.prob, 1e-13));
                assert!(close(a.alice_eigenvalue, b.alice_eigenvalue, 1e-12));
                let ov = crate::linalg::inner(&a.state, &b.state).norm();
                assert!(close(ov, 1.0, 1e-12));
            }
        }
    }

    #[test]
    fn no_signaling() {
        let s = build_split_state::<f64>(20, 0.4).unwrap();
        let a = reduced_bob_state(&condition_on_alice(&s, 0.2));
        let b = reduced_bob_state(&condition_on_alice(&s, 2.2));
        assert!(a.trace_distance(&b) < 1e-10);
    }

    #[test]
    fn unsqueezed_reduced_state_is_weighted_coherent_projectors() {
        let s = build_split_state::<f64>(8, 0.0).unwrap();
        let rho = s.reduced_bob_state();
        for (&n_b, block) in rho.blocks() {
            let coh = coherent_state(SpinSector::from_particles(n_b), PI / 2.0, 0.0);
            let w = binomial(8, n_b) as f64 / 256.0;
            let want = CMatrix::outer(&coh, &coh).scale_re(w);
            assert!(block.max_abs_diff(&want) < 1e-14);
        }
        assert!(close(rho.trace(), 1.0, 1e-14));
    }

    #[test]
    fn joint_expectations_of_product_state() {
        let s = build_split_state::<f64>(20, 0.0).unwrap();
        let z = LocalOperator::spin(Axis::Z);
        let x = LocalOperator::spin(Axis::X);
        assert!(joint_expectation(&s, &z, &z).norm() < 1e-12);
        let xx = joint_expectation(&s, &x, &x);
        assert!(close(xx.re, 23.75, 1e-11) && xx.im.abs() < 1e-12);
        let s = build_split_state::<f64>(12, 0.6).unwrap();
        let lhs = joint_expectation(&s, &LocalOperator::Identity, &x);
        let rhs = s.reduced_bob_state().expectation(&x);
        assert!((lhs - rhs).norm() < 1e-12);
        let yz = joint_expectation(&s, &LocalOperator::yz(0.3), &LocalOperator::yz(1.1));
        assert!(yz.im.abs() < 1e-12);
    }

    #[test]
    fn assemblage_invariant_under_global_phase() {
        let s = build_split_state::<f64>(9, 0.5).unwrap();
        let t = s.with_global_phase(1.234);
        let a = condition_on_alice(&s, 0.8);
        let b = condition_on_alice(&t, 0.8);
        assert_eq!(a.branches().len(), b.branches().len());
        for (x, y) in a.branches().iter().zip(b.branches()) {
            assert!(close(x.prob, y.prob, 1e-14));
            let ov = crate::linalg::inner(&x.state, &y.state).norm();
            assert!(close(ov, 1.0, 1e-12));
        }
    }

    #[test]
    fn from_branches_validates() {
        let sec = SpinSector::from_particles(2);
        let setting = AliceSetting {
            direction: [0.0, 1.0, 0.0],
            number_resolved: true,
        };
        let good = Branch {
            n_a: 0,
            alice_index: 0,
            alice_eigenvalue: 0.0,
            prob: 1.0,
            sector: sec,
            state: coherent_state(sec, 0.3, 0.1),
        };
        assert!(Assemblage::from_branches(setting.clone(), vec![good.clone()]).is_ok());
        let mut bad = good.clone();
        bad.prob = 0.5;
        assert!(Assemblage::from_branches(setting.clone(), vec![bad]).is_err());
        let mut short = good;
        short.state.pop();
        assert!(Assemblage::from_branches(setting, vec![short]).is_err());
    }

    #[test]
    fn block_operator_validation() {
        let mut blocks = BTreeMap::new();
        blocks.insert(1, CMatrix::<f64>::identity(2).scale_re(0.5));
        assert!(BlockDensityOperator::from_blocks(blocks.clone()).is_ok());
        blocks.insert(0, CMatrix::identity(1).scale_re(0.1));
        assert!(BlockDensityOperator::from_blocks(blocks.clone()).is_err());
        let mut wrong = BTreeMap::new();
        wrong.insert(3, CMatrix::<f64>::identity(2));
        assert!(matches!(
            BlockDensityOperator::from_blocks(wrong),
            Err(Error::BlockMismatch(_))
        ));
    }
}
