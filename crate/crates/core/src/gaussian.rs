//! Reid's criterion for the two-mode squeezed vacuum with a single-mode
//! squeezing interaction on Bob's mode before readout and Gaussian detection
//! noise on every measured quadrature.
//!
//! Quadratures are ordered `(x_A, p_A, x_B, p_B)` with `[x, p] = i` and vacuum
//! variance `1/2`. The tested pair is `G = p_B`, `X = p_A`, `M = x_B`, `Y = x_A`.

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::scalar::{cx, Real};

/// Squeezing used by the oracle in place of `r2 -> infinity`.
pub const LIMIT_R2: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TmsConfig<T> {
    pub r: T,
    pub r2: T,
    pub sigma: T,
}

impl<T: Real> TmsConfig<T> {
    pub fn new(r: T, r2: T, sigma: T) -> Result<Self> {
        let cfg = Self { r, r2, sigma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r", self.r), ("r2", self.r2), ("sigma", self.sigma)] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CvVariant {
    Linear,
    Mai,
    /// `r2 -> infinity`; the configured `r2` is ignored.
    MaiLimit,
}

pub type Mat4<T> = [[T; 4]; 4];
pub type Vec4<T> = [T; 4];

pub const XA: usize = 0;
pub const PA: usize = 1;
pub const XB: usize = 2;
pub const PB: usize = 3;

fn mat4_mul<T: Real>(a: &Mat4<T>, b: &Mat4<T>) -> Mat4<T> {
    let mut out = [[T::zero(); 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat4_transpose<T: Real>(a: &Mat4<T>) -> Mat4<T> {
    let mut out = [[T::zero(); 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[j][i];
        }
    }
    out
}

fn det2<T: Real>(a: T, b: T, c: T, d: T) -> T {
    a * d - b * c
}

fn det4<T: Real>(m: &Mat4<T>) -> T {
    let mut a = *m;
    let mut det = T::one();
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap_or(col);
        if a[pivot][col] == T::zero() {
            return T::zero();
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det = det * a[col][col];
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] = a[row][k] - f * a[col][k];
            }
        }
    }
    det
}

/// Symplectic form: `[xi_i, xi_j] = i omega(i, j)`.
pub fn symplectic_form<T: Real>() -> Mat4<T> {
    let (o, l) = (T::zero(), T::one());
    [[o, l, o, o], [-l, o, o, o], [o, o, o, l], [o, o, -l, o]]
}

/// Two-mode squeezer with `x_A + x_B` squeezed.
pub fn tms_symplectic<T: Real>(r: T) -> Mat4<T> {
    let (c, s, o) = (r.cosh(), r.sinh(), T::zero());
    [[c, o, -s, o], [o, c, o, s], [-s, o, c, o], [o, s, o, c]]
}

/// Squeezer on mode B with `U^dagger x_B U = e^{r2} x_B`.
pub fn mode_b_squeezer<T: Real>(r2: T) -> Mat4<T> {
    let (o, l) = (T::zero(), T::one());
    [[l, o, o, o], [o, l, o, o], [o, o, r2.exp(), o], [o, o, o, (-r2).exp()]]
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState<T> {
    pub mean: Vec4<T>,
    pub cov: Mat4<T>,
}

impl<T: Real> GaussianState<T> {
    pub fn vacuum() -> Self {
        let mut cov = [[T::zero(); 4]; 4];
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] = T::lit(0.5);
        }
        Self {
            mean: [T::zero(); 4],
            cov,
        }
    }

    pub fn two_mode_squeezed(r: T) -> Self {
        Self::vacuum().transformed(&tms_symplectic(r))
    }

    /// State after the unitary whose Heisenberg action is `xi -> s xi`.
    pub fn transformed(&self, s: &Mat4<T>) -> Self {
        let mut mean = [T::zero(); 4];
        for (i, m) in mean.iter_mut().enumerate() {
            *m = (0..4).map(|k| s[i][k] * self.mean[k]).sum();
        }
        Self {
            mean,
            cov: mat4_mul(&mat4_mul(s, &self.cov), &mat4_transpose(s)),
        }
    }

    pub fn covariance(&self, u: &Vec4<T>, v: &Vec4<T>) -> T {
        (0..4)
            .map(|i| (0..4).map(|j| u[i] * self.cov[i][j] * v[j]).sum::<T>())
            .sum()
    }

    pub fn variance(&self, u: &Vec4<T>) -> T {
        self.covariance(u, u)
    }

    /// Smallest symplectic eigenvalue; physical states have it `>= 1/2`.
    /// Loses about half the digits near pure states.
    pub fn min_symplectic_eigenvalue(&self) -> T {
        let c = &self.cov;
        let da = det2(c[0][0], c[0][1], c[1][0], c[1][1]);
        let db = det2(c[2][2], c[2][3], c[3][2], c[3][3]);
        let dc = det2(c[0][2], c[0][3], c[1][2], c[1][3]);
        let delta = da + db + T::lit(2.0) * dc;
        let disc = (delta * delta - T::lit(4.0) * det4(c)).max(T::zero());
        ((delta - disc.sqrt()) / T::lit(2.0)).max(T::zero()).sqrt()
    }

    /// Smallest eigenvalue of `cov + i omega / 2`.
    pub fn uncertainty_margin(&self) -> T {
        let om = symplectic_form::<T>();
        let m = CMatrix::from_fn(4, 4, |i, j| cx(self.cov[i][j], om[i][j] / T::lit(2.0)));
        hermitian_eigen(&m).values[0]
    }

    /// `cov + i omega / 2 >= 0` up to `tol`.
    pub fn is_physical(&self, tol: T) -> bool {
        let sym = (0..4).all(|i| (0..4).all(|j| (self.cov[i][j] - self.cov[j][i]).abs() <= tol));
        sym && self.uncertainty_margin() >= -tol
    }
}

/// `-i <[u.xi, v.xi]>`.
pub fn commutator<T: Real>(u: &Vec4<T>, v: &Vec4<T>) -> T {
    let om = symplectic_form::<T>();
    (0..4)
        .map(|i| (0..4).map(|j| u[i] * om[i][j] * v[j]).sum::<T>())
        .sum()
}

fn unit<T: Real>(i: usize) -> Vec4<T> {
    let mut v = [T::zero(); 4];
    v[i] = T::one();
    v
}

fn apply_transpose<T: Real>(s: &Mat4<T>, w: &Vec4<T>) -> Vec4<T> {
    let mut out = [T::zero(); 4];
    for (j, o) in out.iter_mut().enumerate() {
        *o = (0..4).map(|i| s[i][j] * w[i]).sum();
    }
    out
}

/// Closed-form violation.
pub fn analytic_delta<T: Real>(cfg: &TmsConfig<T>, variant: CvVariant) -> T {
    let two = T::lit(2.0);
    let c = (two * cfg.r).cosh();
    let t = (two * cfg.r).tanh();
    let s2 = cfg.sigma * cfg.sigma;
    let inferred = T::one() / (two * c) + (T::one() + t * t) * s2;
    let first = match variant {
        CvVariant::Linear => T::one() / inferred,
        CvVariant::Mai => {
            let e = (two * cfg.r2).exp();
            e / (e / (two * c) + (T::one() + e * t * t) * s2)
        }
        CvVariant::MaiLimit => {
            let sh = (two * cfg.r).sinh();
            (T::one() + (two * two * cfg.r).cosh()) / (c + two * s2 * sh * sh)
        }
    };
    first - T::lit(4.0) * inferred
}

/// Noiseless optimal `(g_X, g_Y)`.
pub fn optimal_gains<T: Real>(cfg: &TmsConfig<T>, variant: CvVariant) -> Result<(T, T)> {
    if cfg.sigma != T::zero() {
        return Err(Error::Unsupported(format!(
            "closed-form gains need sigma = 0, got {}",
            cfg.sigma
        )));
    }
    let t = (T::lit(2.0) * cfg.r).tanh();
    match variant {
        CvVariant::Linear => Ok((-t, t)),
        CvVariant::Mai => Ok((-t, cfg.r2.exp() * t)),
        CvVariant::MaiLimit => Err(Error::Unsupported("g_Y diverges as r2 -> infinity".into())),
    }
}

/// How the oracle picks gains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GainChoice {
    /// Minimize the noiseless variance, then add the noise.
    Noiseless,
    /// Minimize the noisy variance.
    Noisy,
}

/// Minimizer and value of `Var(a + g b) + sigma^2 (1 + g^2)`, where the noise
/// enters the minimization only for `GainChoice::Noisy`.
fn min_gain<T: Real>(state: &GaussianState<T>, a: &Vec4<T>, b: &Vec4<T>, s2: T, choice: GainChoice) -> (T, T) {
    let vaa = state.variance(a);
    let vbb = state.variance(b);
    let vab = state.covariance(a, b);
    let curv = match choice {
        GainChoice::Noiseless => vbb,
        GainChoice::Noisy => vbb + s2,
    };
    let g = if curv > T::zero() { -vab / curv } else { T::zero() };
    let value = vaa + T::lit(2.0) * g * vab + g * g * vbb + s2 * (T::one() + g * g);
    (g, value)
}

/// Violation, gains and the pieces of the criterion from the covariance matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleResult<T> {
    pub delta: T,
    pub g_x: T,
    pub g_y: T,
    /// `|<[G, M]>|^2 / Var(M + g_Y Y)`.
    pub first: T,
    /// `Var(G + g_X X)`
    pub inferred: T,
}

/// Evaluates the criterion on the symplectically evolved covariance matrix.
pub fn symplectic_oracle<T: Real>(cfg: &TmsConfig<T>, variant: CvVariant, choice: GainChoice) -> OracleResult<T> {
    let r2 = match variant {
        CvVariant::Linear => T::zero(),
        CvVariant::Mai => cfg.r2,
        CvVariant::MaiLimit => T::lit(LIMIT_R2),
    };
    let s2 = cfg.sigma * cfg.sigma;
    let state = GaussianState::two_mode_squeezed(cfg.r);
    let squeezer = mode_b_squeezer(r2);
    let after = state.transformed(&squeezer);

    let (g_x, inferred) = min_gain(&state, &unit(PB), &unit(PA), s2, choice);
    let (g_y, var_m) = min_gain(&after, &unit(XB), &unit(XA), s2, choice);
    let m_heis = apply_transpose(&squeezer, &unit(XB));
    let c = commutator(&unit(PB), &m_heis);
    let first = c * c / var_m;
    OracleResult {
        delta: first - T::lit(4.0) * inferred,
        g_x,
        g_y,
        first,
        inferred,
    }
}

/// Oracle value with noiseless-optimal gains, the convention of the closed forms.
pub fn symplectic_oracle_delta<T: Real>(cfg: &TmsConfig<T>, variant: CvVariant) -> T {
    symplectic_oracle(cfg, variant, GainChoice::Noiseless).delta
}
