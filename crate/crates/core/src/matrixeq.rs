//! Generalized Lyapunov and Sylvester equations and the Kronecker-sum
//! stability certificate.
//!
//! Vectorisation stacks columns throughout, so `vec(A X B) = (Bᵀ ⊗ A) vec X`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::linalg::{kron, lu_solve, sym, sym_eigen_desc, unvec_cols, vec_cols, Mat, SylvesterSolver};

/// Largest state dimension for which the `n² × n²` operator is formed.
pub const DEFAULT_DIRECT_CAP: usize = 40;
/// Largest `n` for which stability is decided from dense eigenvalues of the
/// Kronecker operator.
pub const DENSE_STABILITY_CAP: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Auto,
    Direct,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub direct_cap: usize,
    pub strategy: Strategy,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 500,
            direct_cap: DEFAULT_DIRECT_CAP,
            strategy: Strategy::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    DirectKronecker,
    FixedPoint,
    BartelsStewart,
    InteriorPoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(with = "crate::serde_mat")]
    pub solution: Mat,
    pub residual: f64,
    pub method: SolveMethod,
    pub iterations: usize,
    pub converged: bool,
}

/// `A P + P Aᵀ + (1/γ²) Σ N_k P N_kᵀ = −RHS`, or with `adjoint` the
/// transposed orientation `Aᵀ Q + Q A + (1/γ²) Σ N_kᵀ Q N_k = −RHS`.
#[derive(Debug, Clone, Copy)]
pub struct GenLyapProblem<'a> {
    pub a: &'a Mat,
    pub n: &'a [Mat],
    pub gamma: f64,
    pub rhs: &'a Mat,
    pub adjoint: bool,
}

/// `A Y + Y A_rᵀ + (1/γ²) Σ N_k Y N_{r,k}ᵀ = −RHS`.
#[derive(Debug, Clone, Copy)]
pub struct GenSylvesterProblem<'a> {
    pub a: &'a Mat,
    pub a_r: &'a Mat,
    pub n: &'a [Mat],
    pub n_r: &'a [Mat],
    pub gamma: f64,
    pub rhs: &'a Mat,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(MorError::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

fn check_square_family(a: &Mat, n: &[Mat]) -> Result<()> {
    let dim = a.nrows();
    if a.ncols() != dim || n.iter().any(|m| m.shape() != (dim, dim)) {
        return Err(MorError::Dimension("A and N_k must be square of equal size".into()));
    }
    Ok(())
}

/// `I⊗A + A⊗I + (1/γ²) Σ N_k⊗N_k`.
pub fn kronecker_operator(a: &Mat, n: &[Mat], gamma: f64) -> Result<Mat> {
    kronecker_operator_capped(a, n, gamma, 200)
}

pub fn kronecker_operator_capped(a: &Mat, n: &[Mat], gamma: f64, cap: usize) -> Result<Mat> {
    check_gamma(gamma)?;
    check_square_family(a, n)?;
    let dim = a.nrows();
    if dim > cap {
        return Err(MorError::TooLarge { n: dim, cap });
    }
    let id = Mat::identity(dim, dim);
    let mut op = kron(&id, a) + kron(a, &id);
    let g2 = 1.0 / (gamma * gamma);
    for nk in n {
        op += kron(nk, nk) * g2;
    }
    Ok(op)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityMethod {
    DenseEigen,
    PositiveOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub stable: bool,
    pub max_real: f64,
    pub method: StabilityMethod,
}

fn pi_op(n: &[Mat], x: &Mat, g2: f64, adjoint: bool) -> Mat {
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    for nk in n {
        if adjoint {
            out += nk.transpose() * x * nk * g2;
        } else {
            out += nk * x * nk.transpose() * g2;
        }
    }
    out
}

/// Power iteration for the spectral radius of `Z ↦ −(L_A − λ)⁻¹ Π(Z)`,
/// which is a positive map for `λ > 2α(A)`.
struct PositiveOperator<'a> {
    solver: SylvesterSolver,
    n: &'a [Mat],
    g2: f64,
    alpha_a: f64,
}

impl<'a> PositiveOperator<'a> {
    fn new(a: &Mat, n: &'a [Mat], gamma: f64) -> Result<Self> {
        let solver = SylvesterSolver::lyapunov(a)?;
        let alpha_a = solver.max_real_a();
        Ok(Self { solver, n, g2: 1.0 / (gamma * gamma), alpha_a })
    }

    /// Returns (ρ estimate, final iterate).
    fn spectral_radius(&self, lambda: f64, warm: Option<&Mat>) -> Result<(f64, Mat)> {
        let dim = self.solver_dim();
        let mut z = warm.cloned().unwrap_or_else(|| Mat::identity(dim, dim));
        let nz = z.norm();
        if nz == 0.0 {
            return Ok((0.0, z));
        }
        z /= nz;
        let mut rho = 0.0;
        let mut prev = f64::NAN;
        for it in 0..4000 {
            let f = -pi_op(self.n, &z, self.g2, false);
            let next = sym(&self.solver.solve_shifted(&f, -lambda)?);
            let norm = next.norm();
            if norm == 0.0 || !norm.is_finite() {
                return Ok((if norm == 0.0 { 0.0 } else { f64::INFINITY }, z));
            }
            rho = norm;
            z = next / norm;
            if it > 5 && (rho - prev).abs() <= 1e-12 * rho {
                break;
            }
            prev = rho;
        }
        Ok((rho, z))
    }

    fn solver_dim(&self) -> usize {
        self.n.first().map(|m| m.nrows()).unwrap_or(0)
    }
}

/// Spectral abscissa of the Kronecker operator via the resolvent-positive
/// characterisation: it is the unique `λ > 2α(A)` with `ρ(T_λ) = 1`.
fn positive_operator_abscissa(a: &Mat, n: &[Mat], gamma: f64) -> Result<f64> {
    if n.iter().all(|m| m.iter().all(|&v| v == 0.0)) {
        let s = SylvesterSolver::lyapunov(a)?;
        return Ok(2.0 * s.max_real_a());
    }
    let op = PositiveOperator::new(a, n, gamma)?;
    let lower = 2.0 * op.alpha_a;
    let (rho0, z0) = op.spectral_radius(0.0, None)?;
    if (rho0 - 1.0).abs() < 1e-14 {
        return Ok(0.0);
    }
    // bracket [lo, hi] with ρ(lo) > 1 > ρ(hi)
    let (mut lo, mut hi, mut f_lo, mut f_hi, mut warm);
    if rho0 < 1.0 {
        hi = 0.0;
        f_hi = rho0.ln();
        warm = z0;
        let width = lower.abs().max(1e-300);
        let probe = lower + 1e-9 * width;
        let (rp, zp) = op.spectral_radius(probe, Some(&warm))?;
        if rp <= 1.0 {
            return Ok(lower);
        }
        lo = probe;
        f_lo = rp.ln();
        warm = zp;
    } else {
        lo = 0.0;
        f_lo = rho0.ln();
        warm = z0;
        let mut step = lower.abs().max(1.0);
        loop {
            let cand = lo + step;
            let (r, z) = op.spectral_radius(cand, Some(&warm))?;
            if r < 1.0 {
                hi = cand;
                f_hi = r.ln();
                warm = z;
                break;
            }
            lo = cand;
            f_lo = r.ln();
            warm = z;
            step *= 4.0;
            if step > 1e12 {
                return Err(MorError::Numerical("stability bracket search failed".into()));
            }
        }
    }
    // Illinois regula falsi on ln ρ(λ)
    let mut side = 0i32;
    for _ in 0..200 {
        if (hi - lo) <= 1e-10 * lo.abs().max(hi.abs()).max(1e-300) {
            break;
        }
        let mut mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        let (r, z) = op.spectral_radius(mid, Some(&warm))?;
        warm = z;
        let f = r.ln();
        if f == 0.0 {
            return Ok(mid);
        }
        if f > 0.0 {
            lo = mid;
            f_lo = f;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = mid;
            f_hi = f;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Stable iff every eigenvalue of the Kronecker operator has negative real part.
pub fn check_generalized_stability(a: &Mat, n: &[Mat], gamma: f64) -> Result<StabilityReport> {
    check_gamma(gamma)?;
    check_square_family(a, n)?;
    if a.nrows() == 0 {
        return Ok(StabilityReport { stable: true, max_real: f64::NEG_INFINITY, method: StabilityMethod::DenseEigen });
    }
    let (max_real, method) = if a.nrows() <= DENSE_STABILITY_CAP {
        let op = kronecker_operator(a, n, gamma)?;
        (crate::linalg::max_real_eig(&op)?, StabilityMethod::DenseEigen)
    } else {
        (positive_operator_abscissa(a, n, gamma)?, StabilityMethod::PositiveOperator)
    };
    Ok(StabilityReport { stable: max_real < 0.0, max_real, method })
}

/// Verdict only; for large `n` a single spectral-radius evaluation.
pub fn is_generalized_stable(a: &Mat, n: &[Mat], gamma: f64) -> Result<bool> {
    check_gamma(gamma)?;
    check_square_family(a, n)?;
    if a.nrows() <= DENSE_STABILITY_CAP {
        return Ok(check_generalized_stability(a, n, gamma)?.stable);
    }
    let op = PositiveOperator::new(a, n, gamma)?;
    if op.alpha_a >= 0.0 {
        return Ok(false);
    }
    Ok(op.spectral_radius(0.0, None)?.0 < 1.0)
}

/// Bisection for the smallest γ in `[lo, hi]` giving generalized stability.
pub fn min_stabilizing_gamma(a: &Mat, n: &[Mat], lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo > 0.0 && lo < hi) || !(tol > 0.0) {
        return Err(MorError::InvalidArgument("need 0 < lo < hi and tol > 0".into()));
    }
    let hi_rep = check_generalized_stability(a, n, hi)?;
    if !hi_rep.stable {
        return Err(MorError::NotStabilizable { lo, hi });
    }
    let lo_rep = check_generalized_stability(a, n, lo)?;
    if lo_rep.stable {
        return Ok(lo);
    }
    let monotone = |g_small: (f64, f64), g_large: (f64, f64)| -> Result<()> {
        let slack = 1e-9 * g_small.1.abs().max(g_large.1.abs()).max(1e-12);
        if g_large.1 > g_small.1 + slack {
            return Err(MorError::Numerical(format!(
                "max real part increased along gamma: {:.6e} at {} vs {:.6e} at {}",
                g_small.1, g_small.0, g_large.1, g_large.0
            )));
        }
        Ok(())
    };
    let (mut l, mut h) = ((lo, lo_rep.max_real), (hi, hi_rep.max_real));
    monotone(l, h)?;
    while h.0 - l.0 > tol {
        let mid = 0.5 * (l.0 + h.0);
        let rep = check_generalized_stability(a, n, mid)?;
        let probe = (mid, rep.max_real);
        monotone(l, probe)?;
        monotone(probe, h)?;
        if rep.stable {
            h = probe;
        } else {
            l = probe;
        }
    }
    Ok(h.0)
}

fn lyap_residual(a: &Mat, n: &[Mat], g2: f64, rhs: &Mat, x: &Mat, adjoint: bool) -> f64 {
    let r = if adjoint {
        a.transpose() * x + x * a + pi_op(n, x, g2, true) + rhs
    } else {
        a * x + x * a.transpose() + pi_op(n, x, g2, false) + rhs
    };
    relative(r.norm(), rhs.norm())
}

fn relative(res: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        res / scale
    } else {
        res
    }
}

/// Relative Frobenius residual of a generalized Lyapunov problem.
pub fn generalized_lyapunov_residual(prob: &GenLyapProblem<'_>, x: &Mat) -> f64 {
    let g2 = 1.0 / (prob.gamma * prob.gamma);
    lyap_residual(prob.a, prob.n, g2, prob.rhs, x, prob.adjoint)
}

/// Relative Frobenius residual of a generalized Sylvester problem.
pub fn generalized_sylvester_residual(prob: &GenSylvesterProblem<'_>, y: &Mat) -> f64 {
    let g2 = 1.0 / (prob.gamma * prob.gamma);
    let mut r = prob.a * y + y * prob.a_r.transpose() + prob.rhs;
    for (nk, nrk) in prob.n.iter().zip(prob.n_r) {
        r += nk * y * nrk.transpose() * g2;
    }
    relative(r.norm(), prob.rhs.norm())
}

/// `A X + X Aᵀ = −RHS` (or `Aᵀ X + X A = −RHS` with `adjoint`).
pub fn solve_standard_lyapunov(a: &Mat, rhs: &Mat, adjoint: bool, opts: &SolverOptions) -> Result<SolveReport> {
    check_square_family(a, &[])?;
    if rhs.shape() != a.shape() {
        return Err(MorError::Dimension("RHS must match A".into()));
    }
    let prob = GenLyapProblem { a, n: &[], gamma: 1.0, rhs, adjoint };
    let dim = a.nrows();
    let use_direct = match opts.strategy {
        Strategy::Direct => true,
        Strategy::FixedPoint => false,
        Strategy::Auto => dim <= opts.direct_cap,
    };
    let (x, method) = if use_direct {
        (direct_lyapunov(&prob, opts.direct_cap)?, SolveMethod::DirectKronecker)
    } else {
        let at = if adjoint { a.transpose() } else { a.clone() };
        let x = SylvesterSolver::lyapunov(&at)?.solve(&(-rhs))?;
        (x, SolveMethod::BartelsStewart)
    };
    let x = if is_symmetric(rhs) { sym(&x) } else { x };
    let residual = generalized_lyapunov_residual(&prob, &x);
    Ok(SolveReport { solution: x, residual, method, iterations: 1, converged: true })
}

fn is_symmetric(m: &Mat) -> bool {
    (m - m.transpose()).norm() <= 1e-12 * m.norm().max(f64::MIN_POSITIVE)
}

fn direct_lyapunov(prob: &GenLyapProblem<'_>, cap: usize) -> Result<Mat> {
    let dim = prob.a.nrows();
    let (a, n): (Mat, Vec<Mat>) = if prob.adjoint {
        (prob.a.transpose(), prob.n.iter().map(|m| m.transpose()).collect())
    } else {
        (prob.a.clone(), prob.n.to_vec())
    };
    let op = kronecker_operator_capped(&a, &n, prob.gamma, cap)?;
    let x = lu_solve(&op, &(-vec_cols(prob.rhs)))?;
    Ok(unvec_cols(&x, dim, dim))
}

/// Generalized Lyapunov equation by direct Kronecker solve or by the
/// stationary iteration `L_A(P_{j+1}) = −RHS − Π(P_j)`.
pub fn solve_generalized_lyapunov(prob: &GenLyapProblem<'_>, opts: &SolverOptions) -> Result<SolveReport> {
    check_gamma(prob.gamma)?;
    check_square_family(prob.a, prob.n)?;
    if prob.rhs.shape() != prob.a.shape() {
        return Err(MorError::Dimension("RHS must match A".into()));
    }
    let rhs_sym = is_symmetric(prob.rhs);
    let dim = prob.a.nrows();
    if !is_generalized_stable(prob.a, prob.n, prob.gamma)? {
        let rep = check_generalized_stability(prob.a, prob.n, prob.gamma)?;
        return Err(MorError::NotGeneralizedStable { gamma: prob.gamma, max_real: rep.max_real });
    }
    let use_direct = match opts.strategy {
        Strategy::Direct => true,
        Strategy::FixedPoint => false,
        Strategy::Auto => dim <= opts.direct_cap,
    };
    if use_direct {
        let x = direct_lyapunov(prob, opts.direct_cap)?;
        let x = if rhs_sym { sym(&x) } else { x };
        let residual = generalized_lyapunov_residual(prob, &x);
        return Ok(SolveReport {
            solution: x,
            residual,
            method: SolveMethod::DirectKronecker,
            iterations: 1,
            converged: residual <= opts.tol.max(1e-10),
        });
    }
    let g2 = 1.0 / (prob.gamma * prob.gamma);
    let at = if prob.adjoint { prob.a.transpose() } else { prob.a.clone() };
    let solver = SylvesterSolver::lyapunov(&at)?;
    let step = |x: &Mat| -> Result<Mat> {
        let f = -(prob.rhs + pi_op(prob.n, x, g2, prob.adjoint));
        let next = solver.solve(&f)?;
        Ok(if rhs_sym { sym(&next) } else { next })
    };
    fixed_point(
        step,
        |x| generalized_lyapunov_residual(prob, x),
        Mat::zeros(dim, dim),
        opts,
    )
}

fn fixed_point(
    step: impl Fn(&Mat) -> Result<Mat>,
    residual: impl Fn(&Mat) -> f64,
    start: Mat,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let mut x = start;
    let mut best: Option<(f64, Mat, usize)> = None;
    for it in 1..=opts.max_iter {
        let next = step(&x)?;
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        let change = relative((&next - &x).norm(), next.norm());
        x = next;
        // the true residual is only evaluated once the iterate has settled
        if change <= opts.tol || it == opts.max_iter {
            let res = residual(&x);
            if best.as_ref().map_or(true, |b| res < b.0) {
                best = Some((res, x.clone(), it));
            }
            if res <= opts.tol && change <= opts.tol {
                return Ok(SolveReport {
                    solution: x,
                    residual: res,
                    method: SolveMethod::FixedPoint,
                    iterations: it,
                    converged: true,
                });
            }
        }
    }
    let (res, x, it) = match best {
        Some(b) => b,
        None => {
            let r = residual(&x);
            (r, x, opts.max_iter)
        }
    };
    Ok(SolveReport { solution: x, residual: res, method: SolveMethod::FixedPoint, iterations: it, converged: false })
}

/// Generalized Sylvester equation; direct when the `nr × nr` operator fits
/// under the cap, otherwise the stationary iteration.
pub fn solve_generalized_sylvester(prob: &GenSylvesterProblem<'_>, opts: &SolverOptions) -> Result<SolveReport> {
    check_gamma(prob.gamma)?;
    check_square_family(prob.a, prob.n)?;
    check_square_family(prob.a_r, prob.n_r)?;
    if prob.n.len() != prob.n_r.len() {
        return Err(MorError::Dimension("bilinear lists differ in length".into()));
    }
    let (dim, r) = (prob.a.nrows(), prob.a_r.nrows());
    if prob.rhs.shape() != (dim, r) {
        return Err(MorError::Dimension(format!("RHS must be {dim}x{r}")));
    }
    let cap2 = opts.direct_cap * opts.direct_cap;
    let use_direct = match opts.strategy {
        Strategy::Direct => true,
        Strategy::FixedPoint => false,
        Strategy::Auto => dim * r <= cap2,
    };
    let g2 = 1.0 / (prob.gamma * prob.gamma);
    if use_direct {
        if dim * r > cap2.max(1) {
            return Err(MorError::TooLarge { n: dim * r, cap: cap2 });
        }
        let mut op = kron(&Mat::identity(r, r), prob.a) + kron(prob.a_r, &Mat::identity(dim, dim));
        for (nk, nrk) in prob.n.iter().zip(prob.n_r) {
            op += kron(nrk, nk) * g2;
        }
        let y = unvec_cols(&lu_solve(&op, &(-vec_cols(prob.rhs)))?, dim, r);
        let residual = generalized_sylvester_residual(prob, &y);
        return Ok(SolveReport {
            solution: y,
            residual,
            method: SolveMethod::DirectKronecker,
            iterations: 1,
            converged: residual <= opts.tol.max(1e-10),
        });
    }
    let solver = SylvesterSolver::new(prob.a, prob.a_r)?;
    let step = |y: &Mat| -> Result<Mat> {
        let mut f = -prob.rhs.clone();
        for (nk, nrk) in prob.n.iter().zip(prob.n_r) {
            f -= nk * y * nrk.transpose() * g2;
        }
        solver.solve(&f)
    };
    fixed_point(step, |y| generalized_sylvester_residual(prob, y), Mat::zeros(dim, r), opts)
}

/// Symmetric PSD repair: small negative eigenvalues are zeroed; anything
/// below `−1e−10·λ_max` is treated as a solver failure.
pub fn psd_repair(m: &Mat) -> Result<Mat> {
    let (vals, vecs) = sym_eigen_desc(m);
    if vals.is_empty() {
        return Ok(m.clone());
    }
    let max = vals[0].max(0.0);
    let min = vals[vals.len() - 1];
    if min < -1e-10 * max {
        return Err(MorError::NotPsd { min, max });
    }
    if min >= 0.0 {
        return Ok(sym(m));
    }
    let clipped = vals.map(|v| v.max(0.0));
    Ok(sym(&(&vecs * DMatrix::from_diagonal(&clipped) * vecs.transpose())))
}

/// RK4 trajectory of `Ż = AZ + ZAᵀ + (1/γ²) Σ N_k Z N_kᵀ`, `Z(0) = K`.
#[derive(Debug, Clone)]
pub struct ZTrajectory {
    pub times: Vec<f64>,
    pub samples: Vec<Mat>,
    /// Trapezoid approximation of `∫₀^T Z dt` over every RK4 step.
    pub integral: Mat,
}

/// Integrates the `Z_γ` equation; every `record_every`-th state is kept
/// (the final state is always kept).
pub fn integrate_z(
    a: &Mat,
    n: &[Mat],
    gamma: f64,
    k: &Mat,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<ZTrajectory> {
    check_gamma(gamma)?;
    check_square_family(a, n)?;
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(MorError::InvalidArgument("need dt > 0 and T ≥ 0".into()));
    }
    let g2 = 1.0 / (gamma * gamma);
    let rhs = |z: &Mat| -> Mat { a * z + z * a.transpose() + pi_op(n, z, g2, false) };
    let steps = (t_end / dt).round() as usize;
    let every = record_every.max(1);
    let mut z = sym(k);
    let mut times = vec![0.0];
    let mut samples = vec![z.clone()];
    let mut integral = Mat::zeros(z.nrows(), z.ncols());
    for s in 0..steps {
        let k1 = rhs(&z);
        let k2 = rhs(&(&z + &k1 * (0.5 * dt)));
        let k3 = rhs(&(&z + &k2 * (0.5 * dt)));
        let k4 = rhs(&(&z + &k3 * dt));
        let next = sym(&(&z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)));
        integral += (&z + &next) * (0.5 * dt);
        z = next;
        if (s + 1) % every == 0 || s + 1 == steps {
            times.push((s + 1) as f64 * dt);
            samples.push(z.clone());
        }
    }
    Ok(ZTrajectory { times, samples, integral })
}

/// Vector helper used by the stability bisection tests.
pub fn eigenvalues_real_parts(m: &Mat) -> Result<DVector<f64>> {
    let schur = crate::linalg::SchurForm::new(m)?;
    Ok(DVector::from_iterator(m.nrows(), schur.qt.eigenvalues().into_iter().map(|z| z.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn scalar_kronecker_operator() {
        assert_eq!(kronecker_operator(&s(-1.0), &[s(1.0)], 1.0).unwrap()[(0, 0)], -1.0);
        assert_eq!(kronecker_operator(&s(-1.0), &[s(1.0)], 0.5).unwrap()[(0, 0)], 2.0);
    }

    #[test]
    fn diagonal_kronecker_sum() {
        let a = Mat::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let op = kronecker_operator(&a, &[Mat::zeros(2, 2)], 1.0).unwrap();
        let expect = Mat::from_diagonal(&DVector::from_vec(vec![-2.0, -3.0, -3.0, -4.0]));
        assert_eq!(op, expect);
    }

    #[test]
    fn kronecker_cap_is_enforced() {
        let a = -Mat::identity(5, 5);
        assert!(matches!(
            kronecker_operator_capped(&a, &[], 1.0, 4),
            Err(MorError::TooLarge { n: 5, cap: 4 })
        ));
    }

    #[test]
    fn scalar_stability() {
        let st = check_generalized_stability(&s(-1.0), &[s(1.0)], 1.0).unwrap();
        assert!(st.stable);
        assert!((st.max_real + 1.0).abs() < 1e-14);
        let un = check_generalized_stability(&s(-1.0), &[s(1.0)], 0.5).unwrap();
        assert!(!un.stable);
        assert!((un.max_real - 2.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_min_gamma() {
        let g = min_stabilizing_gamma(&s(-1.0), &[s(1.0)], 0.1, 4.0, 1e-6).unwrap();
        assert!(g >= 1.0 / 2f64.sqrt() && g - 1.0 / 2f64.sqrt() <= 1e-6);
        let g0 = min_stabilizing_gamma(&s(-1.0), &[s(0.0)], 0.1, 4.0, 1e-6).unwrap();
        assert_eq!(g0, 0.1);
        assert!(matches!(
            min_stabilizing_gamma(&s(-1.0), &[s(10.0)], 0.1, 0.2, 1e-6),
            Err(MorError::NotStabilizable { .. })
        ));
    }

    #[test]
    fn standard_lyapunov_examples() {
        let opts = SolverOptions::default();
        let r = solve_standard_lyapunov(&s(-1.0), &s(2.0), false, &opts).unwrap();
        assert!((r.solution[(0, 0)] - 1.0).abs() < 1e-14);
        let a = Mat::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let r = solve_standard_lyapunov(&a, &Mat::identity(2, 2), false, &opts).unwrap();
        let expect = Mat::from_diagonal(&DVector::from_vec(vec![0.5, 0.25]));
        assert!((r.solution - expect).norm() < 1e-14);
    }

    #[test]
    fn generalized_lyapunov_scalar() {
        let rhs = s(3.0);
        let n = [s(1.0)];
        let prob = GenLyapProblem { a: &s(-1.0), n: &n, gamma: 1.0, rhs: &rhs, adjoint: false };
        for strategy in [Strategy::Direct, Strategy::FixedPoint] {
            let opts = SolverOptions { strategy, max_iter: 2000, tol: 1e-13, ..Default::default() };
            let r = solve_generalized_lyapunov(&prob, &opts).unwrap();
            assert!((r.solution[(0, 0)] - 3.0).abs() < 1e-11, "{strategy:?}");
        }
    }

    #[test]
    fn generalized_lyapunov_unstable_is_error() {
        let rhs = s(1.0);
        let n = [s(1.0)];
        let prob = GenLyapProblem { a: &s(-1.0), n: &n, gamma: 0.5, rhs: &rhs, adjoint: false };
        assert!(matches!(
            solve_generalized_lyapunov(&prob, &SolverOptions::default()),
            Err(MorError::NotGeneralizedStable { .. })
        ));
    }

    #[test]
    fn sylvester_scalar() {
        let rhs = s(3.0);
        let prob = GenSylvesterProblem {
            a: &s(-1.0),
            a_r: &s(-2.0),
            n: &[s(0.0)],
            n_r: &[s(0.0)],
            gamma: 1.0,
            rhs: &rhs,
        };
        let y = solve_generalized_sylvester(&prob, &SolverOptions::default()).unwrap();
        assert!((y.solution[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn z_closed_form_and_zero_start() {
        let a = s(-1.0);
        let tr = integrate_z(&a, &[s(0.0)], 1.0, &s(1.0), 1.0, 1e-3, 100).unwrap();
        for (t, z) in tr.times.iter().zip(&tr.samples) {
            assert!((z[(0, 0)] - (-2.0 * t).exp()).abs() < 1e-8);
        }
        let zero = integrate_z(&a, &[s(1.0)], 1.0, &s(0.0), 1.0, 1e-2, 1).unwrap();
        assert!(zero.samples.iter().all(|z| z[(0, 0)] == 0.0));
    }

    #[test]
    fn psd_repair_rules() {
        let tiny = Mat::from_diagonal(&DVector::from_vec(vec![1.0, -1e-14]));
        let fixed = psd_repair(&tiny).unwrap();
        assert!(fixed[(1, 1)] >= 0.0);
        let bad = Mat::from_diagonal(&DVector::from_vec(vec![1.0, -1e-3]));
        assert!(matches!(psd_repair(&bad), Err(MorError::NotPsd { .. })));
    }
}
