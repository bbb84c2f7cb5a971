//! Balanced truncation (BT) and singular perturbation (SPA) for both
//! subsystems.

use log::warn;
use nalgebra::DVector;

use crate::balancing::{BalancedPartition, Pair};
use crate::error::{MorError, Result};
use crate::linalg::{sym, sym_max_eig, Mat};
use crate::matrixeq::{check_generalized_stability, StabilityReport};
use crate::model::{Method, ReducedHomogeneousModel, ReducedInhomogeneousModel};

/// Condition number of `A₂₂` above which SPA emits a warning.
pub const A22_COND_WARN: f64 = 1e12;

/// `A₂₂⁻¹ R` by LU with a backward-error check and a condition warning.
pub fn solve_a22(a22: &Mat, rhs: &Mat) -> Result<Mat> {
    if a22.nrows() == 0 {
        return Ok(Mat::zeros(0, rhs.ncols()));
    }
    let sv = a22.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) {
        return Err(MorError::A22Singular);
    }
    if smax / smin > A22_COND_WARN {
        warn!("A22 is ill-conditioned (cond ≈ {:.2e})", smax / smin);
    }
    let x = a22.clone().lu().solve(rhs).ok_or(MorError::A22Singular)?;
    let resid = (a22 * &x - rhs).norm();
    if !x.iter().all(|v| v.is_finite()) || resid > 1e-8 * (a22.norm() * x.norm() + rhs.norm()) {
        return Err(MorError::A22Singular);
    }
    Ok(x)
}

fn expect_pair(part: &BalancedPartition, pair: Pair) -> Result<()> {
    if part.pair != pair {
        return Err(MorError::InvalidArgument(format!(
            "partition belongs to the {} pair, expected {}",
            part.pair, pair
        )));
    }
    Ok(())
}

/// `(𝒜₁₁, X₀,₁, 𝒞₁, 𝒩_{k,11})`.
pub fn reduce_x0_bt(part: &BalancedPartition) -> Result<ReducedHomogeneousModel> {
    expect_pair(part, Pair::X0)?;
    Ok(ReducedHomogeneousModel {
        a: part.a11(),
        n: (0..part.n.len()).map(|k| part.n_blocks(k)[0].clone()).collect(),
        x0: part.g1(),
        c: part.c1(),
        method: Method::Bt,
    })
}

/// Residualization of the fast states; the initial-condition matrix is the
/// same as for BT.
pub fn reduce_x0_spa(part: &BalancedPartition) -> Result<ReducedHomogeneousModel> {
    expect_pair(part, Pair::X0)?;
    let k21 = solve_a22(&part.a22(), &part.a21())?;
    let n = (0..part.n.len())
        .map(|k| {
            let [n11, n12, _, _] = part.n_blocks(k);
            n11 - n12 * &k21
        })
        .collect();
    Ok(ReducedHomogeneousModel {
        a: part.a11() - part.a12() * &k21,
        n,
        x0: part.g1(),
        c: part.c1() - part.c2() * &k21,
        method: Method::Spa,
    })
}

/// `(A₁₁, B₁, C₁, 0, 0, N_{k,11})`.
pub fn reduce_b_bt(part: &BalancedPartition) -> Result<ReducedInhomogeneousModel> {
    expect_pair(part, Pair::B)?;
    let (r, m, p) = (part.r, part.g.ncols(), part.c.nrows());
    Ok(ReducedInhomogeneousModel {
        a: part.a11(),
        b: part.g1(),
        c: part.c1(),
        d: Mat::zeros(p, m),
        e: vec![Mat::zeros(r, m); part.n.len()],
        n: (0..part.n.len()).map(|k| part.n_blocks(k)[0].clone()).collect(),
        method: Method::Bt,
    })
}

/// SPA of the inhomogeneous subsystem, including the feed-through `D̄` and
/// the quadratic input terms `Ē_k`.
pub fn reduce_b_spa(part: &BalancedPartition) -> Result<ReducedInhomogeneousModel> {
    expect_pair(part, Pair::B)?;
    let a22 = part.a22();
    let k21 = solve_a22(&a22, &part.a21())?;
    let kb = solve_a22(&a22, &part.g2())?;
    let (mut n, mut e) = (Vec::new(), Vec::new());
    for k in 0..part.n.len() {
        let [n11, n12, _, _] = part.n_blocks(k);
        n.push(&n11 - &n12 * &k21);
        e.push(-(&n12 * &kb));
    }
    Ok(ReducedInhomogeneousModel {
        a: part.a11() - part.a12() * &k21,
        b: part.g1() - part.a12() * &kb,
        c: part.c1() - part.c2() * &k21,
        d: -(part.c2() * &kb),
        e,
        n,
        method: Method::Spa,
    })
}

pub fn reduce_x0(part: &BalancedPartition, method: Method) -> Result<ReducedHomogeneousModel> {
    match method {
        Method::Bt => reduce_x0_bt(part),
        Method::Spa => reduce_x0_spa(part),
    }
}

pub fn reduce_b(part: &BalancedPartition, method: Method) -> Result<ReducedInhomogeneousModel> {
    match method {
        Method::Bt => reduce_b_bt(part),
        Method::Spa => reduce_b_spa(part),
    }
}

/// Generalized stability of the reduced pair `(Ã, Ñ)`.
pub fn check_reduced_stability(a: &Mat, n: &[Mat], gamma: f64) -> Result<StabilityReport> {
    check_generalized_stability(a, n, gamma)
}

/// `λ_max(𝒜₁₁Θ₁ + Θ₁𝒜₁₁ᵀ + (1/γ²) Σ 𝒩_{k,11}Θ₁𝒩_{k,11}ᵀ + G₁G₁ᵀ)`, which is
/// `≤ 0` for a BT partition of an exact Gramian pair.
pub fn reduced_gramian_gap(part: &BalancedPartition, gamma: f64) -> f64 {
    let theta = Mat::from_diagonal(&DVector::from_column_slice(part.theta1()));
    let a11 = part.a11();
    let g1 = part.g1();
    let mut lhs = &a11 * &theta + &theta * a11.transpose() + &g1 * g1.transpose();
    for k in 0..part.n.len() {
        let n11 = &part.n_blocks(k)[0];
        lhs += n11 * &theta * n11.transpose() / (gamma * gamma);
    }
    sym_max_eig(&sym(&lhs))
}

/// Keeps the first `q` initial-condition columns and `p` output rows.
pub fn restrict_x0_rom(rom: &ReducedHomogeneousModel, q: usize, p: usize) -> ReducedHomogeneousModel {
    ReducedHomogeneousModel {
        a: rom.a.clone(),
        n: rom.n.clone(),
        x0: rom.x0.columns(0, q.min(rom.x0.ncols())).into_owned(),
        c: rom.c.rows(0, p.min(rom.c.nrows())).into_owned(),
        method: rom.method,
    }
}

pub fn restrict_b_rom(rom: &ReducedInhomogeneousModel, p: usize) -> ReducedInhomogeneousModel {
    let p = p.min(rom.c.nrows());
    ReducedInhomogeneousModel {
        c: rom.c.rows(0, p).into_owned(),
        d: rom.d.rows(0, p).into_owned(),
        ..rom.clone()
    }
}
