//! Grid search and Nelder-Mead refinement.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Vec3;
use crate::scalar::Real;

/// Knobs shared by every optimizing criterion.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSettings {
    /// Points per angle on `[0, pi)`.
    pub theta_grid: usize,
    /// Points for the twisting strength on `[0, 2 pi)`.
    pub mu2_grid: usize,
    /// Simplex diameter at which Nelder-Mead stops.
    pub simplex_tol: f64,
    pub max_evals: usize,
    /// Number of best grid cells refined.
    pub refine_top: usize,
    /// Extra refinements from uniformly random starts.
    pub random_restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            theta_grid: 48,
            mu2_grid: 64,
            simplex_tol: 1e-7,
            max_evals: 20_000,
            refine_top: 3,
            random_restarts: 0,
            seed: 0,
        }
    }
}

impl OptimizerSettings {
    /// A cheaper configuration for smoke tests.
    pub fn coarse() -> Self {
        Self {
            theta_grid: 16,
            mu2_grid: 16,
            simplex_tol: 1e-6,
            refine_top: 1,
            ..Self::default()
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// `n` points `start + i (stop - start) / n`.
pub fn periodic_grid<T: Real>(start: T, stop: T, n: usize) -> Vec<T> {
    let step = (stop - start) / T::from_usize_lossy(n.max(1));
    (0..n).map(|i| start + step * T::from_usize_lossy(i)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evaluations: usize,
    pub converged: bool,
}

/// Maximizes `f` by Nelder-Mead from `x0` with initial edge lengths `steps`.
///
/// Non-finite values are treated as minus infinity.
pub fn nelder_mead_max<T: Real>(
    mut f: impl FnMut(&[T]) -> T,
    x0: &[T],
    steps: &[T],
    tol: T,
    max_evals: usize,
) -> Optimum<T> {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[T], evals: &mut usize| -> T {
        *evals += 1;
        let v = -f(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };
    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] = x[i] + steps[i];
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let (alpha, gamma, rho, sigma) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
    let order = |a: &(Vec<T>, T), b: &(Vec<T>, T)| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal);
    let mut converged = false;
    loop {
        simplex.sort_by(order);
        if diameter(&simplex) < tol {
            converged = true;
            break;
        }
        if evals >= max_evals {
            break;
        }
        let worst = simplex[n].clone();
        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c = *c + *xi / T::from_usize_lossy(n);
            }
        }
        let along = |t: T| -> Vec<T> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| *c + t * (*c - *w))
                .collect()
        };
        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(gamma);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<T> = best
                        .iter()
                        .zip(&vertex.0)
                        .map(|(b, v)| *b + sigma * (*v - *b))
                        .collect();
                    let v = eval(&x, &mut evals);
                    *vertex = (x, v);
                }
            }
        }
    }
    simplex.sort_by(order);
    let (x, v) = simplex.swap_remove(0);
    Optimum {
        x,
        value: -v,
        evaluations: evals,
        converged,
    }
}

fn diameter<T: Real>(simplex: &[(Vec<T>, T)]) -> T {
    let mut d = T::zero();
    for (i, (a, _)) in simplex.iter().enumerate() {
        for (b, _) in &simplex[i + 1..] {
            let dist = a
                .iter()
                .zip(b)
                .map(|(x, y)| (*x - *y) * (*x - *y))
                .sum::<T>()
                .sqrt();
            d = d.max(dist);
        }
    }
    d
}

/// Maximizes a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_max<T: Real>(mut f: impl FnMut(T) -> T, lo: T, hi: T, tol: T) -> (T, T) {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) / T::lit(2.0);
    (x, f(x))
}

/// Indices of the `k` largest finite values, best first.
pub fn top_k<T: Real>(values: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(Ordering::Equal));
    idx.truncate(k);
    idx
}

/// Random points in a box, for seeded restarts.
pub fn random_starts<T: Real>(rng: &mut ChaCha8Rng, bounds: &[(T, T)], count: usize) -> Vec<Vec<T>> {
    (0..count)
        .map(|_| {
            bounds
                .iter()
                .map(|(lo, hi)| {
                    let u: f64 = rng.gen();
                    *lo + (*hi - *lo) * T::lit(u)
                })
                .collect()
        })
        .collect()
}

/// Vertices of an icosahedron subdivided `levels` times, projected to the
/// unit sphere (12, 42, 162, ... points).
pub fn icosphere(levels: usize) -> Vec<[f64; 3]> {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let unit = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    verts.iter_mut().for_each(|v| *v = unit(*v));
    for _ in 0..levels {
        let mut cache = std::collections::HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (u, w) = (verts[a], verts[b]);
                verts.push(unit([u[0] + w[0], u[1] + w[1], u[2] + w[2]]));
                verts.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    verts
}

/// Icosphere points with one representative per antipodal pair.
pub fn axis_design<T: Real>(levels: usize) -> Vec<Vec3<T>> {
    let eps = 1e-12;
    icosphere(levels)
        .into_iter()
        .filter(|v| {
            v[2] > eps || (v[2].abs() <= eps && (v[1] > eps || (v[1].abs() <= eps && v[0] > 0.0)))
        })
        .map(|v| v.map(T::lit))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_quadratic_peak() {
        let f = |x: &[f64]| -(x[0] - 1.0).powi(2) - 3.0 * (x[1] + 0.5).powi(2) + 2.0;
        let opt = nelder_mead_max(f, &[0.0, 0.0], &[0.3, 0.3], 1e-9, 10_000);
        assert!(opt.converged);
        assert!((opt.x[0] - 1.0).abs() < 1e-7);
        assert!((opt.x[1] + 0.5).abs() < 1e-7);
        assert!((opt.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nelder_mead_handles_rosenbrock() {
        let f = |x: &[f64]| -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let opt = nelder_mead_max(f, &[-1.2, 1.0], &[0.1, 0.1], 1e-10, 50_000);
        assert!((opt.x[0] - 1.0).abs() < 1e-6 && (opt.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nelder_mead_flags_budget_exhaustion() {
        let opt = nelder_mead_max(|x: &[f64]| -x[0].abs(), &[5.0], &[1.0], 1e-15, 10);
        assert!(!opt.converged);
        assert!(opt.evaluations >= 10);
    }

    #[test]
    fn nelder_mead_treats_nan_as_bad() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { -(x[0] - 0.5).powi(2) };
        let opt = nelder_mead_max(f, &[0.2], &[0.1], 1e-9, 1000);
        assert!((opt.x[0] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn golden_section() {
        let (x, v) = golden_max(|x: f64| (x - 0.3).cos(), -1.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-6 && (v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn icosphere_counts() {
        assert_eq!(icosphere(0).len(), 12);
        assert_eq!(icosphere(1).len(), 42);
        assert_eq!(icosphere(2).len(), 162);
        let axes = axis_design::<f64>(2);
        assert_eq!(axes.len(), 81);
        for a in &axes {
            let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-14);
            for b in &axes {
                let s = a[0] + b[0];
                let t = a[1] + b[1];
                let u = a[2] + b[2];
                assert!(s * s + t * t + u * u > 1e-10, "antipodal pair kept");
            }
        }
    }

    #[test]
    fn grids_and_ranking() {
        let g = periodic_grid(0.0, 1.0, 4);
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75]);
        assert_eq!(top_k(&[1.0, f64::NAN, 3.0, 2.0], 2), vec![2, 3]);
        let mut rng = OptimizerSettings::default().rng();
        let s = random_starts(&mut rng, &[(0.0, 1.0), (2.0, 3.0)], 5);
        assert!(s.iter().all(|p| (0.0..1.0).contains(&p[0]) && (2.0..3.0).contains(&p[1])));
        let mut again = OptimizerSettings::default().rng();
        assert_eq!(s, random_starts(&mut again, &[(0.0, 1.0), (2.0, 3.0)], 5));
    }
}
