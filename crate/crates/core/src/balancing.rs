//! Square-root balancing of a Gramian pair and the partitioned balanced
//! realization.

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::linalg::{sym_eigen_desc, Mat};

pub const DEFAULT_RANK_TOL: f64 = 1e-12;
/// Relative gap below which `θ_r` and `θ_{r+1}` count as tied.
pub const TIE_TOL: f64 = 1e-10;

/// Which Gramian pair was balanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pair {
    /// `(P₀, Q)`, homogeneous subsystem.
    X0,
    /// `(P_B, Q)`, inhomogeneous subsystem.
    B,
}

impl Pair {
    pub fn as_str(self) -> &'static str {
        match self {
            Pair::X0 => "x0",
            Pair::B => "B",
        }
    }
}

impl std::fmt::Display for Pair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalancingResult {
    #[serde(with = "crate::serde_mat")]
    pub s: Mat,
    #[serde(with = "crate::serde_mat")]
    pub s_inv: Mat,
    pub hsv: Vec<f64>,
    pub pair: Pair,
}

/// `K = U√Λ` over the eigenvalues above `rank_tol·λ_max`, so `KKᵀ ≈ M`.
pub fn psd_factor(m: &Mat, rank_tol: f64) -> Result<Mat> {
    let (vals, vecs) = sym_eigen_desc(m);
    if vals.is_empty() {
        return Ok(Mat::zeros(0, 0));
    }
    let max = vals[0].max(0.0);
    let min = vals[vals.len() - 1];
    if min < -1e-10 * max {
        return Err(MorError::NotPsd { min, max });
    }
    let keep = vals.iter().take_while(|&&v| v > rank_tol * max && v > 0.0).count();
    let mut k = vecs.columns(0, keep).into_owned();
    for (j, mut col) in k.column_iter_mut().enumerate() {
        col *= vals[j].sqrt();
    }
    Ok(k)
}

/// `S = Θ^{−1/2} Uᵀ Lᵀ`, `S⁻¹ = K V Θ^{−1/2}` from `P = KKᵀ`, `Q = LLᵀ` and the
/// SVD `KᵀL = V Θ Uᵀ`. Both Gramians must have full numerical rank.
pub fn balance_pair(p: &Mat, q: &Mat, rank_tol: f64, pair: Pair) -> Result<BalancingResult> {
    let n = p.nrows();
    if q.nrows() != n || p.ncols() != n || q.ncols() != n {
        return Err(MorError::Dimension("Gramians must be square and of equal size".into()));
    }
    let k = psd_factor(p, rank_tol)?;
    if k.ncols() < n {
        return Err(MorError::SingularGramian { rank: k.ncols(), n });
    }
    let l = psd_factor(q, rank_tol)?;
    if l.ncols() < n {
        return Err(MorError::SingularGramian { rank: l.ncols(), n });
    }
    let svd = (k.transpose() * &l).svd(true, true);
    let (Some(v), Some(ut)) = (svd.u, svd.v_t) else {
        return Err(MorError::Numerical("SVD failed".into()));
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let theta: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    if n > 0 && !(theta[n - 1] > rank_tol * theta[0]) {
        let rank = theta.iter().filter(|&&t| t > rank_tol * theta[0]).count();
        return Err(MorError::SingularGramian { rank, n });
    }
    let scale = DVector::from_iterator(n, theta.iter().map(|t| t.powf(-0.5)));
    let v_sorted = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
    let u_sorted = Mat::from_fn(n, n, |i, j| ut[(order[j], i)]);
    let s = Mat::from_diagonal(&scale) * u_sorted.transpose() * l.transpose();
    let s_inv = k * v_sorted * Mat::from_diagonal(&scale);
    Ok(BalancingResult { s, s_inv, hsv: theta, pair })
}

/// Moves `r` past a tied cluster `θ_r ≈ θ_{r+1}`. Returns the new order and
/// whether a tie was found.
pub fn resolve_ties(hsv: &[f64], r: usize) -> (usize, bool) {
    let mut out = r;
    while out > 0 && out < hsv.len() && (hsv[out - 1] - hsv[out]).abs() <= TIE_TOL * hsv[out - 1].abs() {
        out += 1;
    }
    if out != r {
        warn!("Hankel singular values tied at r={r}; using r={out}");
    }
    (out, out != r)
}

/// Transformed realization `(S A S⁻¹, S N_k S⁻¹, S G, C S⁻¹)`, split at `r`.
/// `g` is `X₀` for the homogeneous pair and `B` for the inhomogeneous one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalancedPartition {
    pub pair: Pair,
    pub r: usize,
    #[serde(with = "crate::serde_mat")]
    pub a: Mat,
    #[serde(with = "crate::serde_mat::list")]
    pub n: Vec<Mat>,
    #[serde(with = "crate::serde_mat")]
    pub g: Mat,
    #[serde(with = "crate::serde_mat")]
    pub c: Mat,
    pub hsv: Vec<f64>,
}

fn sub(m: &Mat, r0: usize, r1: usize, c0: usize, c1: usize) -> Mat {
    m.view((r0, c0), (r1 - r0, c1 - c0)).into_owned()
}

impl BalancedPartition {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn a11(&self) -> Mat {
        sub(&self.a, 0, self.r, 0, self.r)
    }
    pub fn a12(&self) -> Mat {
        sub(&self.a, 0, self.r, self.r, self.order())
    }
    pub fn a21(&self) -> Mat {
        sub(&self.a, self.r, self.order(), 0, self.r)
    }
    pub fn a22(&self) -> Mat {
        let n = self.order();
        sub(&self.a, self.r, n, self.r, n)
    }
    /// `(N_{k,11}, N_{k,12}, N_{k,21}, N_{k,22})`.
    pub fn n_blocks(&self, k: usize) -> [Mat; 4] {
        let (r, n, m) = (self.r, self.order(), &self.n[k]);
        [sub(m, 0, r, 0, r), sub(m, 0, r, r, n), sub(m, r, n, 0, r), sub(m, r, n, r, n)]
    }
    pub fn g1(&self) -> Mat {
        sub(&self.g, 0, self.r, 0, self.g.ncols())
    }
    pub fn g2(&self) -> Mat {
        sub(&self.g, self.r, self.order(), 0, self.g.ncols())
    }
    pub fn c1(&self) -> Mat {
        sub(&self.c, 0, self.c.nrows(), 0, self.r)
    }
    pub fn c2(&self) -> Mat {
        sub(&self.c, 0, self.c.nrows(), self.r, self.order())
    }
    pub fn theta1(&self) -> &[f64] {
        &self.hsv[..self.r]
    }
    pub fn theta2(&self) -> &[f64] {
        &self.hsv[self.r..]
    }
}

pub fn transform_and_partition(
    a: &Mat,
    n: &[Mat],
    g: &Mat,
    c: &Mat,
    bal: &BalancingResult,
    r: usize,
) -> Result<BalancedPartition> {
    let dim = a.nrows();
    if r == 0 || r > dim {
        return Err(MorError::InvalidArgument(format!("reduced order {r} outside 1..={dim}")));
    }
    if bal.s.nrows() != dim {
        return Err(MorError::Dimension("balancing transformation does not match the system".into()));
    }
    let (s, si) = (&bal.s, &bal.s_inv);
    Ok(BalancedPartition {
        pair: bal.pair,
        r,
        a: s * a * si,
        n: n.iter().map(|nk| s * nk * si).collect(),
        g: s * g,
        c: c * si,
        hsv: bal.hsv.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(v: &[f64]) -> Mat {
        Mat::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn factor_examples() {
        let k = psd_factor(&Mat::identity(3, 3), DEFAULT_RANK_TOL).unwrap();
        assert_relative_eq!(&k * k.transpose(), Mat::identity(3, 3), epsilon = 1e-14);
        let m = diag(&[4.0, 1.0, 0.0]);
        let k = psd_factor(&m, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.ncols(), 2);
        assert_relative_eq!(&k * k.transpose(), m, epsilon = 1e-14);
        assert!(psd_factor(&diag(&[1.0, -1.0]), DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn diagonal_pairs() {
        let b = balance_pair(&diag(&[4.0, 1.0]), &diag(&[4.0, 1.0]), DEFAULT_RANK_TOL, Pair::X0).unwrap();
        assert_relative_eq!(b.hsv[0], 4.0, epsilon = 1e-14);
        assert_relative_eq!(b.hsv[1], 1.0, epsilon = 1e-14);
        let sp = &b.s * diag(&[4.0, 1.0]) * b.s.transpose();
        assert_relative_eq!(sp, diag(&[4.0, 1.0]), epsilon = 1e-13);
        let b = balance_pair(&diag(&[4.0, 1.0]), &diag(&[1.0, 4.0]), DEFAULT_RANK_TOL, Pair::B).unwrap();
        assert_relative_eq!(b.hsv[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(b.hsv[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_is_rejected() {
        let e = balance_pair(&diag(&[1.0, 0.0]), &Mat::identity(2, 2), DEFAULT_RANK_TOL, Pair::X0).unwrap_err();
        assert!(matches!(e, MorError::SingularGramian { rank: 1, n: 2 }));
    }

    #[test]
    fn ties_extend_r() {
        assert_eq!(resolve_ties(&[3.0, 2.0, 2.0, 1.0], 2), (3, true));
        assert_eq!(resolve_ties(&[3.0, 2.0, 1.0], 1), (1, false));
        assert_eq!(resolve_ties(&[2.0, 2.0], 1), (2, true));
    }

    #[test]
    fn full_order_partition() {
        let b = balance_pair(&diag(&[2.0, 1.0]), &diag(&[2.0, 1.0]), DEFAULT_RANK_TOL, Pair::X0).unwrap();
        let a = diag(&[-1.0, -2.0]);
        let part = transform_and_partition(&a, &[], &Mat::identity(2, 1), &Mat::identity(1, 2), &b, 2).unwrap();
        assert_eq!(part.a22().nrows(), 0);
        assert_eq!(part.theta2().len(), 0);
        assert_relative_eq!(part.a11(), a, epsilon = 1e-14);
    }
}
