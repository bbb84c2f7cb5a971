//! The reachability LMI for the inhomogeneous subsystem and a primal-dual
//! interior-point method minimising `tr(P)` over it.
//!
//! ```text
//! 𝓕(P) = [ A P + P Aᵀ + BBᵀ   P N₁ᵀ/γ  …  P N_mᵀ/γ ]
//!        [ N₁ P/γ             −P              0    ]  ⪯ 0
//!        [   ⋮                      ⋱              ]
//!        [ N_m P/γ             0            −P     ]
//! ```
//!
//! `𝓕(P) = C₀ + 𝓜(P)` with `C₀ = diag(BBᵀ, 0)` and `𝓜` linear. The SDP is
//! solved in the dual standard form `max −tr(P)` s.t. `S = −C₀ − 𝓜(P) ⪰ 0`,
//! using the HKM search direction with Mehrotra's predictor-corrector.

use faer::prelude::*;
use faer::Side;
use log::debug;
use nalgebra::{Cholesky, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::linalg::{norm2, sym, sym_max_eig, Mat};

/// Assembled LMI matrix `𝓕(P)`, one block row per `N_k`.
pub fn lmi_matrix(a: &Mat, b: &Mat, n: &[Mat], gamma: f64, p: &Mat) -> Mat {
    let dim = a.nrows();
    let m = n.len();
    let mut out = Mat::zeros((m + 1) * dim, (m + 1) * dim);
    let top = a * p + p * a.transpose() + b * b.transpose();
    out.view_mut((0, 0), (dim, dim)).copy_from(&top);
    for (k, nk) in n.iter().enumerate() {
        let off = (k + 1) * dim;
        let np = nk * p / gamma;
        out.view_mut((off, 0), (dim, dim)).copy_from(&np);
        out.view_mut((0, off), (dim, dim)).copy_from(&np.transpose());
        out.view_mut((off, off), (dim, dim)).copy_from(&(-p));
    }
    sym(&out)
}

pub fn lmi_max_eig(a: &Mat, b: &Mat, n: &[Mat], gamma: f64, p: &Mat) -> f64 {
    sym_max_eig(&lmi_matrix(a, b, n, gamma, p))
}

/// Direction `D ≻ 0` with `𝓜(D) ≺ 0`: `D = X⁻¹` where
/// `Aᵀ X + X A + (1/γ²) Σ N_kᵀ X N_k = −I` (the Schur complement of `𝓜(D)`
/// is then `−D²`). Returns `(D, λ_max(𝓜(D)))`.
pub fn interior_direction(a: &Mat, n: &[Mat], gamma: f64, opts: &crate::matrixeq::SolverOptions) -> Result<(Mat, f64)> {
    use crate::matrixeq::{solve_generalized_lyapunov, GenLyapProblem};
    let dim = a.nrows();
    let id = Mat::identity(dim, dim);
    let rep = solve_generalized_lyapunov(&GenLyapProblem { a, n, gamma, rhs: &id, adjoint: true }, opts)?;
    let chol = Cholesky::new(sym(&rep.solution)).ok_or(MorError::NotPd(f64::NAN))?;
    let d = sym(&chol.inverse());
    let zero_b = Mat::zeros(dim, 0);
    let lam = lmi_max_eig(a, &zero_b, n, gamma, &d);
    if !(lam < 0.0) {
        return Err(MorError::Numerical(format!("interior direction not strictly feasible ({lam:.3e})")));
    }
    Ok((d, lam))
}

/// Moves `P` along `D` until `λ_max(𝓕) ≤ −target`. Returns the shift `τ ≥ 0`.
pub fn repair_feasibility(
    a: &Mat,
    b: &Mat,
    n: &[Mat],
    gamma: f64,
    p: &Mat,
    d: &Mat,
    d_eig: f64,
    target: f64,
) -> (Mat, f64, f64) {
    let mut lam = lmi_max_eig(a, b, n, gamma, p);
    if lam <= -target {
        return (p.clone(), 0.0, lam);
    }
    let mut tau = (lam + target) / (-d_eig);
    let mut out = p + d * tau;
    for _ in 0..60 {
        lam = lmi_max_eig(a, b, n, gamma, &out);
        if lam <= -target {
            break;
        }
        tau *= 2.0;
        out = p + d * tau;
    }
    (out, tau, lam)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    pub max_iter: usize,
    /// Relative duality gap and LMI residual at termination.
    pub tol: f64,
    /// Residual of the multiplier equation `𝓜*(X) = I`. It stalls near
    /// `1e−9` on stiff problems and has no effect on feasibility of `P`.
    pub multiplier_tol: f64,
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { max_iter: 60, tol: 1e-9, multiplier_tol: 1e-7, step_fraction: 0.98 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpReport {
    #[serde(with = "crate::serde_mat")]
    pub p: Mat,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub converged: bool,
}

/// `𝓜(D) = Σ_a L_a D R_aᵀ`.
struct LmiOperator {
    dim: usize,
    blocks: usize,
    /// (L_a, R_a), each `blocks·dim × dim`.
    terms: Vec<(Mat, Mat)>,
}

impl LmiOperator {
    fn new(a: &Mat, n: &[Mat], gamma: f64) -> Self {
        let dim = a.nrows();
        let blocks = n.len() + 1;
        let big = blocks * dim;
        let selector = |k: usize| {
            let mut e = Mat::zeros(big, dim);
            e.view_mut((k * dim, 0), (dim, dim)).fill_with_identity();
            e
        };
        let mut u = Mat::zeros(big, dim);
        u.view_mut((0, 0), (dim, dim)).copy_from(a);
        for (k, nk) in n.iter().enumerate() {
            u.view_mut(((k + 1) * dim, 0), (dim, dim)).copy_from(&(nk / gamma));
        }
        let v = selector(0);
        let mut terms = vec![(u.clone(), v.clone()), (v, u)];
        for k in 0..n.len() {
            let f = selector(k + 1);
            terms.push((-&f, f));
        }
        Self { dim, blocks, terms }
    }

    fn apply(&self, d: &Mat) -> Mat {
        let big = self.blocks * self.dim;
        let mut out = Mat::zeros(big, big);
        for (l, r) in &self.terms {
            out += l * d * r.transpose();
        }
        sym(&out)
    }

    fn adjoint(&self, m: &Mat) -> Mat {
        let ms = sym(m);
        let mut out = Mat::zeros(self.dim, self.dim);
        for (l, r) in &self.terms {
            out += l.transpose() * &ms * r;
        }
        sym(&out)
    }

    /// HKM Schur complement `⟨𝓜(Ê_α), X 𝓜(Ê_β) S⁻¹⟩` in the orthonormal
    /// symmetric basis, returned in faer layout.
    fn schur_matrix(&self, x: &Mat, sinv: &Mat) -> faer::Mat<f64> {
        let n = self.dim;
        let nv = n * (n + 1) / 2;
        let mut out = faer::Mat::<f64>::zeros(nv, nv);
        let idx = svec_index(n);
        // start offset of the pairs (k, k..n)
        let row_start: Vec<usize> = (0..n).map(|k| idx(k, k)).collect();
        let mut pairs_g = Vec::new();
        for (la, ra) in &self.terms {
            for (lb, rb) in &self.terms {
                // G = R_bᵀ X L_a, H = R_aᵀ S⁻¹ L_b
                let g = rb.transpose() * x * la;
                let h = ra.transpose() * sinv * lb;
                pairs_g.push((g.transpose(), h, g));
            }
        }
        let mut acc = vec![0.0f64; nv];
        for i in 0..n {
            for j in i..n {
                let row = idx(i, j);
                acc.iter_mut().for_each(|v| *v = 0.0);
                for (gt, h, g) in &pairs_g {
                    let h_i = h.column(i);
                    let h_j = h.column(j);
                    let gt_i = gt.column(i);
                    let gt_j = gt.column(j);
                    for k in 0..n {
                        let (c1, c2, c3, c4) = (g[(j, k)], h[(k, i)], g[(i, k)], h[(k, j)]);
                        let base = row_start[k];
                        let hi = &h_i.as_slice()[k..];
                        let hj = &h_j.as_slice()[k..];
                        let gi = &gt_i.as_slice()[k..];
                        let gj = &gt_j.as_slice()[k..];
                        let dst = &mut acc[base..base + (n - k)];
                        for t in 0..dst.len() {
                            dst[t] += c1 * hi[t] + c2 * gj[t] + c3 * hj[t] + c4 * gi[t];
                        }
                    }
                }
                let wij = if i == j { 0.5 } else { std::f64::consts::FRAC_1_SQRT_2 };
                for k in 0..n {
                    let wk_diag = 0.5;
                    let base = row_start[k];
                    for (t, l) in (k..n).enumerate() {
                        let wkl = if l == k { wk_diag } else { std::f64::consts::FRAC_1_SQRT_2 };
                        out[(row, base + t)] = wij * wkl * acc[base + t];
                    }
                }
            }
        }
        // symmetrise
        for r in 0..nv {
            for c in (r + 1)..nv {
                let v = 0.5 * (out[(r, c)] + out[(c, r)]);
                out[(r, c)] = v;
                out[(c, r)] = v;
            }
        }
        out
    }
}

fn svec_index(n: usize) -> impl Fn(usize, usize) -> usize {
    // pairs (k, l), k ≤ l, ordered by k then l
    move |k: usize, l: usize| {
        let (k, l) = if k <= l { (k, l) } else { (l, k) };
        k * n - k * (k + 1) / 2 + l
    }
}

fn svec(m: &Mat) -> DVector<f64> {
    let n = m.nrows();
    let idx = svec_index(n);
    let mut v = DVector::zeros(n * (n + 1) / 2);
    for k in 0..n {
        for l in k..n {
            v[idx(k, l)] = if k == l { m[(k, k)] } else { std::f64::consts::SQRT_2 * m[(k, l)] };
        }
    }
    v
}

fn smat(v: &DVector<f64>, n: usize) -> Mat {
    let idx = svec_index(n);
    Mat::from_fn(n, n, |k, l| {
        let val = v[idx(k, l)];
        if k == l {
            val
        } else {
            val * std::f64::consts::FRAC_1_SQRT_2
        }
    })
}

fn inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest `α` with `X + α ΔX ⪰ 0` (infinite when `ΔX ⪰ 0`).
fn max_step(x: &Mat, dx: &Mat) -> f64 {
    let Some(chol) = Cholesky::new(x.clone()) else { return 0.0 };
    let l = chol.l();
    let linv = l.clone().try_inverse().unwrap_or_else(|| Mat::zeros(l.nrows(), l.ncols()));
    let m = sym(&(&linv * dx * linv.transpose()));
    let lmin = SymmetricEigen::new(m).eigenvalues.min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

/// Minimises `tr(P)` subject to `𝓕(P) ⪯ 0`.
pub fn min_trace_pb(a: &Mat, b: &Mat, n: &[Mat], gamma: f64, opts: &SdpOptions) -> Result<SdpReport> {
    let dim = a.nrows();
    if dim == 0 {
        return Ok(SdpReport {
            p: Mat::zeros(0, 0),
            iterations: 0,
            primal_infeasibility: 0.0,
            dual_infeasibility: 0.0,
            relative_gap: 0.0,
            converged: true,
        });
    }
    // Time scaling A → sA, N → √s N, B → √s B preserves the feasible set;
    // B → cB scales P by c².
    let s = 1.0 / norm2(a).max(f64::MIN_POSITIVE);
    let a_s = a * s;
    let n_s: Vec<Mat> = n.iter().map(|m| m * s.sqrt()).collect();
    let bn = norm2(b) * s.sqrt();
    let c = if bn > 0.0 { 1.0 / bn } else { 1.0 };
    let b_s = b * (s.sqrt() * c);

    let op = LmiOperator::new(&a_s, &n_s, gamma);
    let big = op.blocks * dim;
    let mut c0 = Mat::zeros(big, big);
    c0.view_mut((0, 0), (dim, dim)).copy_from(&(&b_s * b_s.transpose()));
    let cmat = -&c0;
    let bvec = -Mat::identity(dim, dim);

    let scale0 = 10.0 * (big as f64).sqrt();
    let mut x = Mat::identity(big, big) * scale0;
    let mut sm = Mat::identity(big, big) * scale0;
    let mut y = Mat::zeros(dim, dim);
    let norm_b = bvec.norm();
    let norm_c = cmat.norm();

    let mut report = SdpReport {
        p: Mat::zeros(dim, dim),
        iterations: 0,
        primal_infeasibility: f64::INFINITY,
        dual_infeasibility: f64::INFINITY,
        relative_gap: f64::INFINITY,
        converged: false,
    };
    for it in 0..opts.max_iter {
        let rp = &bvec - op.adjoint(&x);
        let rd = sym(&(&cmat - &sm - op.apply(&y)));
        let pobj = inner(&cmat, &x);
        let dobj = inner(&bvec, &y);
        let mu = inner(&x, &sm) / big as f64;
        let pinf = rp.norm() / (1.0 + norm_b);
        let dinf = rd.norm() / (1.0 + norm_c);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        debug!("sdp it={it} pobj={pobj:.10e} dobj={dobj:.10e} pinf={pinf:.2e} dinf={dinf:.2e} gap={gap:.2e} mu={mu:.2e}");
        report.iterations = it;
        report.primal_infeasibility = pinf;
        report.dual_infeasibility = dinf;
        report.relative_gap = gap;
        report.p = y.clone();
        if pinf < opts.multiplier_tol && dinf < opts.tol && gap < opts.tol {
            report.converged = true;
            break;
        }

        let schol = Cholesky::new(sm.clone()).ok_or_else(|| MorError::Numerical("SDP slack lost definiteness".into()))?;
        let sinv = sym(&schol.inverse());
        let schur = op.schur_matrix(&x, &sinv);
        let llt = schur
            .llt(Side::Lower)
            .map_err(|_| MorError::Numerical("SDP Schur complement not positive definite".into()))?;

        let solve_dir = |rc: &Mat| -> (Mat, Mat, Mat) {
            // 𝓢(Δy) = Rp − 𝓜*(Rc − H(X Rd S⁻¹))
            let rhs_mat = &rp - op.adjoint(&(rc - sym(&(&x * &rd * &sinv))));
            let rv = svec(&rhs_mat);
            let rhs_f = faer::Mat::from_fn(rv.len(), 1, |i, _| rv[i]);
            let sol = llt.solve(&rhs_f);
            let dyv = DVector::from_iterator(rv.len(), (0..rv.len()).map(|i| sol[(i, 0)]));
            let dy = smat(&dyv, dim);
            let ds = sym(&(&rd - op.apply(&dy)));
            let dx = sym(&(rc - sym(&(&x * &ds * &sinv))));
            (dx, dy, ds)
        };

        // predictor
        let rc_aff = -x.clone();
        let (dx_a, _dy_a, ds_a) = solve_dir(&rc_aff);
        let ap = (opts.step_fraction * max_step(&x, &dx_a)).min(1.0);
        let ad = (opts.step_fraction * max_step(&sm, &ds_a)).min(1.0);
        let mu_a = inner(&(&x + &dx_a * ap), &(&sm + &ds_a * ad)) / big as f64;
        let sigma = (mu_a / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let rc = &sinv * (sigma * mu) - &x - sym(&(&dx_a * &ds_a * &sinv));
        let (dx, dy, ds) = solve_dir(&rc);
        let ap = (opts.step_fraction * max_step(&x, &dx)).min(1.0);
        let ad = (opts.step_fraction * max_step(&sm, &ds)).min(1.0);
        x = sym(&(&x + &dx * ap));
        y = sym(&(&y + &dy * ad));
        sm = sym(&(&sm + &ds * ad));
    }
    report.p = sym(&(&report.p / (c * c)));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn scalar_lmi_matches_closed_form() {
        // −P + 1 ≤ 0 after the Schur complement, optimum P = 1
        let rep = min_trace_pb(&s(-1.0), &s(1.0), &[s(1.0)], 1.0, &SdpOptions::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.p[(0, 0)] - 1.0).abs() < 1e-7, "{}", rep.p[(0, 0)]);
        assert!(lmi_max_eig(&s(-1.0), &s(1.0), &[s(1.0)], 1.0, &s(1.0)).abs() < 1e-15);
    }

    #[test]
    fn linear_case_recovers_gramian() {
        // N = 0: the optimum is the controllability Gramian
        let a = Mat::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -2.0]);
        let b = Mat::from_row_slice(2, 1, &[1.0, 0.5]);
        let rep = min_trace_pb(&a, &b, &[Mat::zeros(2, 2)], 1.0, &SdpOptions::default()).unwrap();
        let g = crate::matrixeq::solve_standard_lyapunov(&a, &(&b * b.transpose()), false, &Default::default())
            .unwrap()
            .solution;
        assert!((rep.p - &g).norm() < 1e-6 * g.norm());
    }

    #[test]
    fn schur_matrix_matches_definition() {
        let a = Mat::from_row_slice(2, 2, &[-1.0, 0.3, 0.2, -2.0]);
        let n = [Mat::from_row_slice(2, 2, &[0.1, 0.2, -0.3, 0.4])];
        let op = LmiOperator::new(&a, &n, 1.5);
        let x = Mat::from_fn(4, 4, |i, j| if i == j { 2.0 + i as f64 } else { 0.1 });
        let sinv = Mat::from_fn(4, 4, |i, j| if i == j { 1.0 + 0.5 * i as f64 } else { -0.05 });
        let schur = op.schur_matrix(&x, &sinv);
        let basis = |k: usize| {
            let mut v = DVector::zeros(3);
            v[k] = 1.0;
            smat(&v, 2)
        };
        for r in 0..3 {
            for c in 0..3 {
                let expect = inner(&op.apply(&basis(r)), &(&x * op.apply(&basis(c)) * &sinv));
                let sym_expect = 0.5
                    * (expect + inner(&op.apply(&basis(c)), &(&x * op.apply(&basis(r)) * &sinv)));
                assert!((schur[(r, c)] - sym_expect).abs() < 1e-12, "({r},{c})");
            }
        }
    }

    #[test]
    fn interior_direction_is_strictly_feasible() {
        let a = Mat::from_row_slice(2, 2, &[-1.0, 0.3, 0.2, -2.0]);
        let n = [Mat::from_row_slice(2, 2, &[0.5, 0.2, -0.3, 0.4])];
        let (d, lam) = interior_direction(&a, &n, 1.0, &Default::default()).unwrap();
        assert!(lam < 0.0);
        assert!(SymmetricEigen::new(d).eigenvalues.min() > 0.0);
    }
}
