//! Test systems: the boundary-controlled 2D heat equation and seeded random
//! stable bilinear systems.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::linalg::{sym_max_eig, Mat};
use crate::matrixeq::is_generalized_stable;
use crate::model::BilinearSystem;

/// Unit square, `k` interior grid points per direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heat2dConfig {
    pub k: usize,
    pub initial_value: f64,
    /// Scale of the bilinear boundary coupling on the `x = 1` edge.
    pub robin_coefficient: f64,
}

impl Default for Heat2dConfig {
    fn default() -> Self {
        Self { k: 10, initial_value: 0.1, robin_coefficient: 1.0 }
    }
}

/// Finite-difference heat equation on `(0,1)²`:
///
/// * `x = 0`: Dirichlet data `u(t)`, eliminated into `B`;
/// * `x = 1`: flux `∂X/∂n = u X`, one-sided difference (diagonal `+1/h²` in
///   `A`, `robin/h` in `N`);
/// * `y = 0`, `y = 1`: homogeneous Dirichlet.
///
/// Nodes are ordered with `x` fastest, `p = j·k + i`, spacing `h = 1/(k+1)`.
pub fn heat2d(cfg: &Heat2dConfig) -> Result<BilinearSystem> {
    let k = cfg.k;
    if k < 2 {
        return Err(MorError::InvalidArgument("heat2d needs k >= 2".into()));
    }
    let n = k * k;
    let h = 1.0 / (k as f64 + 1.0);
    let h2 = 1.0 / (h * h);
    let mut a = Mat::zeros(n, n);
    let mut b = Mat::zeros(n, 1);
    let mut nm = Mat::zeros(n, n);
    for j in 0..k {
        for i in 0..k {
            let p = j * k + i;
            a[(p, p)] = -4.0 * h2;
            if i > 0 {
                a[(p, p - 1)] = h2;
            } else {
                b[(p, 0)] = h2;
            }
            if i + 1 < k {
                a[(p, p + 1)] = h2;
            } else {
                a[(p, p)] += h2;
                nm[(p, p)] = cfg.robin_coefficient / h;
            }
            if j > 0 {
                a[(p, p - k)] = h2;
            }
            if j + 1 < k {
                a[(p, p + k)] = h2;
            }
        }
    }
    let c = Mat::from_element(1, n, 1.0 / n as f64);
    let x0 = Mat::from_element(n, 1, 1.0);
    BilinearSystem::new(a, b, c, vec![nm], x0, DVector::from_element(1, cfg.initial_value))
}

pub const RANDOM_MARGIN: f64 = 0.5;

/// `A = M − (λ_max(sym M) + margin) I` with `M` uniform on `[−1, 1]`; the
/// bilinear matrices are halved until the system is generalized-stable at
/// `γ = 1`.
pub fn random_stable_system(
    n: usize,
    m: usize,
    p: usize,
    q: usize,
    bilinear_scale: f64,
    seed: u64,
) -> Result<BilinearSystem> {
    if n == 0 {
        return Err(MorError::InvalidArgument("n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    let mm = uniform(n, n);
    let shift = sym_max_eig(&mm) + RANDOM_MARGIN;
    let a = &mm - Mat::identity(n, n) * shift;
    let raw_n: Vec<Mat> = (0..m).map(|_| uniform(n, n)).collect();
    let b = uniform(n, m);
    let c = uniform(p, n);
    let x0 = uniform(n, q);
    let v0 = DVector::from_iterator(q, uniform(q, 1).iter().copied());

    let mut scale = bilinear_scale;
    for _ in 0..60 {
        let nk: Vec<Mat> = raw_n.iter().map(|x| x * scale).collect();
        if is_generalized_stable(&a, &nk, 1.0)? {
            return BilinearSystem::new(a, b, c, nk, x0, v0);
        }
        scale *= 0.5;
    }
    Err(MorError::Numerical("rejection budget exhausted for random system".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_real_eig;

    #[test]
    fn heat_shapes_and_data() {
        let sys = heat2d(&Heat2dConfig::default()).unwrap();
        assert_eq!((sys.order(), sys.inputs(), sys.outputs(), sys.ic_dim()), (100, 1, 1, 1));
        assert!(sys.x0().iter().all(|&v| v == 1.0));
        assert_eq!(sys.v0()[0], 0.1);
        assert!(sys.c().iter().all(|&v| v == 0.01));
    }

    #[test]
    fn heat_structure() {
        for k in 2..7 {
            let sys = heat2d(&Heat2dConfig { k, ..Default::default() }).unwrap();
            let nk = &sys.n_mats()[0];
            assert_eq!(nk.iter().filter(|&&v| v != 0.0).count(), k);
            assert!(max_real_eig(sys.a()).unwrap() < 0.0);
            assert_eq!(sys.a(), &sys.a().transpose());
            for p in 0..k * k {
                if sys.b()[(p, 0)] != 0.0 {
                    assert_eq!(p % k, 0);
                }
                if nk[(p, p)] != 0.0 {
                    assert_eq!(p % k, k - 1);
                }
            }
        }
    }

    #[test]
    fn random_is_reproducible() {
        let a = random_stable_system(6, 2, 1, 1, 0.5, 7).unwrap();
        let b = random_stable_system(6, 2, 1, 1, 0.5, 7).unwrap();
        assert_eq!(a, b);
        assert!(is_generalized_stable(a.a(), a.n_mats(), 1.0).unwrap());
    }
}
