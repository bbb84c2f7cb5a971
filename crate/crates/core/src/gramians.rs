//! The Gramians `P₀`, `Q` (generalized Lyapunov equations) and `P_B` (a
//! positive definite point of the reachability LMI).

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::linalg::{norm2, sym, Mat};
use crate::lmi::{interior_direction, lmi_max_eig, min_trace_pb, repair_feasibility, SdpOptions};
use crate::matrixeq::{psd_repair, solve_generalized_lyapunov, GenLyapProblem, SolveMethod, SolveReport, SolverOptions};
use crate::model::BilinearSystem;

/// Feasibility tolerance on `λ_max` of the assembled LMI.
pub const LMI_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramianOptions {
    pub solver: SolverOptions,
    /// `δ` of the equality construction relative to `‖BBᵀ‖₂`.
    pub delta_rel: f64,
    /// Run the trace refinement after the feasible construction.
    pub refine: bool,
    /// Let the refinement include the interior-point trace minimisation.
    pub interior_point: bool,
    pub sdp: SdpOptions,
}

impl Default for GramianOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            delta_rel: 1e-8,
            refine: true,
            interior_point: true,
            sdp: SdpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PbSource {
    /// Solution of the shifted equality, feasible as is.
    Equality,
    /// Equality solution moved into the feasible set along an interior direction.
    Repaired,
    /// δ-sequence line search.
    Refined,
    /// Interior-point trace minimisation (followed by the feasibility repair).
    InteriorPoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PbResult {
    #[serde(with = "crate::serde_mat")]
    pub pb: Mat,
    pub report: SolveReport,
    pub lmi_max_eig: f64,
    pub source: PbSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramianReports {
    pub p0: SolveReport,
    pub q: SolveReport,
    pub pb: SolveReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramianSet {
    #[serde(with = "crate::serde_mat")]
    pub p0: Mat,
    #[serde(with = "crate::serde_mat")]
    pub q: Mat,
    #[serde(with = "crate::serde_mat")]
    pub pb: Mat,
    pub gamma: f64,
    pub reports: GramianReports,
    pub lmi_max_eig: f64,
    pub pb_source: PbSource,
}

fn finish_psd(mut rep: SolveReport, prob: &GenLyapProblem<'_>) -> Result<SolveReport> {
    rep.solution = psd_repair(&rep.solution)?;
    rep.residual = crate::matrixeq::generalized_lyapunov_residual(prob, &rep.solution);
    Ok(rep)
}

/// `A P₀ + P₀ Aᵀ + (1/γ²) Σ N_k P₀ N_kᵀ = −X₀X₀ᵀ`.
pub fn compute_p0(sys: &BilinearSystem, gamma: f64, opts: &SolverOptions) -> Result<(Mat, SolveReport)> {
    let rhs = sys.x0() * sys.x0().transpose();
    let prob = GenLyapProblem { a: sys.a(), n: sys.n_mats(), gamma, rhs: &rhs, adjoint: false };
    let rep = finish_psd(solve_generalized_lyapunov(&prob, opts)?, &prob)?;
    Ok((rep.solution.clone(), rep))
}

/// `Aᵀ Q + Q A + (1/γ²) Σ N_kᵀ Q N_k = −CᵀC`.
pub fn compute_q(sys: &BilinearSystem, gamma: f64, opts: &SolverOptions) -> Result<(Mat, SolveReport)> {
    let rhs = sys.c().transpose() * sys.c();
    let prob = GenLyapProblem { a: sys.a(), n: sys.n_mats(), gamma, rhs: &rhs, adjoint: true };
    let rep = finish_psd(solve_generalized_lyapunov(&prob, opts)?, &prob)?;
    Ok((rep.solution.clone(), rep))
}

fn pb_target(sys: &BilinearSystem) -> f64 {
    // strictly inside the cone by a margin far below any reported tolerance
    1e-14 * norm2(&(sys.b() * sys.b().transpose())).max(1e-300)
}

fn solve_shifted_equality(sys: &BilinearSystem, gamma: f64, delta: f64, opts: &SolverOptions) -> Result<SolveReport> {
    let dim = sys.order();
    let rhs = sys.b() * sys.b().transpose() + Mat::identity(dim, dim) * delta;
    let prob = GenLyapProblem { a: sys.a(), n: sys.n_mats(), gamma, rhs: &rhs, adjoint: false };
    finish_psd(solve_generalized_lyapunov(&prob, opts)?, &prob)
}

fn check_pd(p: &Mat) -> Result<()> {
    if p.nrows() == 0 {
        return Ok(());
    }
    let min = nalgebra::SymmetricEigen::new(sym(p)).eigenvalues.min();
    if !(min > 0.0) {
        return Err(MorError::NotPd(min));
    }
    Ok(())
}

/// Solves `A P + P Aᵀ + (1/γ²) Σ N_k P N_kᵀ = −(BBᵀ + δI)` and certifies the
/// LMI. When the equality point violates the LMI it is moved along an
/// interior direction until `λ_max ≤ 0`; the source tag records this.
pub fn compute_pb_feasible(sys: &BilinearSystem, gamma: f64, delta: f64, opts: &SolverOptions) -> Result<PbResult> {
    if !(delta >= 0.0) {
        return Err(MorError::InvalidArgument("delta must be non-negative".into()));
    }
    let (a, b, n) = (sys.a(), sys.b(), sys.n_mats());
    let report = solve_shifted_equality(sys, gamma, delta, opts)?;
    let p = report.solution.clone();
    let lam = lmi_max_eig(a, b, n, gamma, &p);
    if lam <= LMI_TOL && check_pd(&p).is_ok() {
        return Ok(PbResult { pb: p, report, lmi_max_eig: lam, source: PbSource::Equality });
    }
    debug!("equality point violates the LMI by {lam:.3e}; repairing");
    let (d, d_eig) = interior_direction(a, n, gamma, opts)?;
    let (fixed, tau, lam2) = repair_feasibility(a, b, n, gamma, &p, &d, d_eig, pb_target(sys));
    if lam2 > LMI_TOL {
        return Err(MorError::LmiInfeasible(lam2));
    }
    check_pd(&fixed)?;
    debug!("repair shift tau={tau:.3e}, lmi max eig {lam2:.3e}");
    Ok(PbResult { pb: fixed, report, lmi_max_eig: lam2, source: PbSource::Repaired })
}

fn feasible(sys: &BilinearSystem, gamma: f64, p: &Mat) -> Option<f64> {
    let lam = lmi_max_eig(sys.a(), sys.b(), sys.n_mats(), gamma, p);
    (lam <= LMI_TOL && check_pd(p).is_ok()).then_some(lam)
}

/// Best-effort trace reduction. Candidates come from the equality with
/// right-hand sides `BBᵀ + δ_j I` (repaired when needed), line searches over
/// convex combinations with the incumbent, and optionally the interior-point
/// optimum. Only feasible candidates with strictly smaller trace replace the
/// incumbent, so the result is feasible with `tr ≤ tr(seed)`.
pub fn refine_pb_trace(
    sys: &BilinearSystem,
    gamma: f64,
    seed: &PbResult,
    steps: usize,
    opts: &GramianOptions,
) -> Result<PbResult> {
    let (a, b, n) = (sys.a(), sys.b(), sys.n_mats());
    let mut best = seed.clone();
    if feasible(sys, gamma, &best.pb).is_none() {
        return Ok(best);
    }
    let bbn = norm2(&(b * b.transpose()));
    let mut candidates: Vec<(Mat, PbSource)> = Vec::new();
    let direction = interior_direction(a, n, gamma, &opts.solver).ok();
    for delta in [1e-2, 1e-4, 0.0] {
        let Ok(rep) = solve_shifted_equality(sys, gamma, delta * bbn, &opts.solver) else { continue };
        let mut p = rep.solution;
        if feasible(sys, gamma, &p).is_none() {
            let Some((d, d_eig)) = direction.as_ref() else { continue };
            p = repair_feasibility(a, b, n, gamma, &p, d, *d_eig, pb_target(sys)).0;
        }
        candidates.push((p, PbSource::Refined));
    }
    if opts.interior_point {
        match min_trace_pb(a, b, n, gamma, &opts.sdp) {
            Ok(rep) => {
                if !rep.converged {
                    warn!(
                        "interior-point method stopped after {} iterations (gap {:.2e})",
                        rep.iterations, rep.relative_gap
                    );
                }
                let mut p = rep.p;
                if let Some((d, d_eig)) = direction.as_ref() {
                    p = repair_feasibility(a, b, n, gamma, &p, d, *d_eig, pb_target(sys)).0;
                }
                candidates.push((p, PbSource::InteriorPoint));
            }
            Err(e) => warn!("interior-point method failed: {e}"),
        }
    }
    let grid = steps.max(1);
    for (cand, source) in candidates {
        // θ = 1 is the candidate itself, smaller θ stay closer to the incumbent
        for s in (1..=grid).rev() {
            let theta = s as f64 / grid as f64;
            let p = sym(&(&best.pb * (1.0 - theta) + &cand * theta));
            if p.trace() >= best.pb.trace() {
                continue;
            }
            if let Some(lam) = feasible(sys, gamma, &p) {
                best.pb = p;
                best.lmi_max_eig = lam;
                best.source = source;
                break;
            }
        }
    }
    if best.source == PbSource::InteriorPoint {
        best.report.method = SolveMethod::InteriorPoint;
    }
    Ok(best)
}

/// All three Gramians at one `γ`.
pub fn compute_gramians(sys: &BilinearSystem, gamma: f64, opts: &GramianOptions) -> Result<GramianSet> {
    let (p0, rep_p0) = compute_p0(sys, gamma, &opts.solver)?;
    let (q, rep_q) = compute_q(sys, gamma, &opts.solver)?;
    let delta = opts.delta_rel * norm2(&(sys.b() * sys.b().transpose()));
    let seed = compute_pb_feasible(sys, gamma, delta, &opts.solver)?;
    let pb = if opts.refine { refine_pb_trace(sys, gamma, &seed, 4, opts)? } else { seed };
    Ok(GramianSet {
        p0,
        q,
        pb: pb.pb,
        gamma,
        reports: GramianReports { p0: rep_p0, q: rep_q, pb: pb.report },
        lmi_max_eig: pb.lmi_max_eig,
        pb_source: pb.source,
    })
}

/// Relative floor imposed on rank-deficient Gramians before balancing.
pub const DEFAULT_REGULARIZATION: f64 = 1e-10;

/// Weights of the identity blocks appended to `X₀` (`ε_x0`) and `C`
/// (`ε_c`), and of the interior direction added to `P_B` (`ε_pb`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub eps_x0: f64,
    pub eps_c: f64,
    pub eps_pb: f64,
}

impl Regularization {
    pub fn is_active(&self) -> bool {
        self.eps_x0 > 0.0 || self.eps_c > 0.0 || self.eps_pb > 0.0
    }
}

/// Gramians of the augmented system `X₀' = [X₀, √ε_x0 I]`, `v₀' = [v₀; 0]`,
/// `C' = [C; √ε_c I]`. The first `ic_dim` columns of `X₀'` and the first
/// `outputs` rows of `C'` belong to the original system, whose output error
/// is bounded by that of the augmented one.
#[derive(Debug, Clone)]
pub struct RegularizedGramians {
    pub system: BilinearSystem,
    pub gramians: GramianSet,
    pub reg: Regularization,
    pub ic_dim: usize,
    pub outputs: usize,
}

fn extreme_eigs(m: &Mat) -> (f64, f64) {
    let vals = nalgebra::SymmetricEigen::new(sym(m)).eigenvalues;
    (vals.min(), vals.max())
}

/// Lifts every Gramian whose smallest eigenvalue is below `rel·λ_max` by a
/// multiple of the solution with identity right-hand side (for `P_B`, of the
/// interior direction, which keeps the LMI satisfied). Full-rank Gramians
/// are left untouched.
pub fn regularize(sys: &BilinearSystem, set: &GramianSet, rel: f64, opts: &SolverOptions) -> Result<RegularizedGramians> {
    let dim = sys.order();
    let (a, n, gamma) = (sys.a(), sys.n_mats(), set.gamma);
    let id = Mat::identity(dim, dim);
    let mut reg = Regularization::default();
    let mut out = set.clone();
    let mut x0 = sys.x0().clone();
    let mut v0 = sys.v0().clone();
    let mut c = sys.c().clone();

    let (lo, hi) = extreme_eigs(&set.p0);
    if lo < rel * hi {
        let prob = GenLyapProblem { a, n, gamma, rhs: &id, adjoint: false };
        let g = sym(&solve_generalized_lyapunov(&prob, opts)?.solution);
        let floor = extreme_eigs(&g).0;
        reg.eps_x0 = rel * hi.max(f64::MIN_POSITIVE) / floor;
        out.p0 = &set.p0 + &g * reg.eps_x0;
        x0 = Mat::from_fn(dim, x0.ncols() + dim, |i, j| {
            if j < sys.ic_dim() { x0[(i, j)] } else if i == j - sys.ic_dim() { reg.eps_x0.sqrt() } else { 0.0 }
        });
        v0 = v0.clone().resize_vertically(v0.len() + dim, 0.0);
    }
    let (lo, hi) = extreme_eigs(&set.q);
    let (qlo, _) = extreme_eigs(&set.pb);
    let (_, qhi) = extreme_eigs(&set.pb);
    let needs_q = lo < rel * hi;
    let needs_pb = qlo < rel * qhi;
    if needs_q || needs_pb {
        let prob = GenLyapProblem { a, n, gamma, rhs: &id, adjoint: true };
        let h = sym(&solve_generalized_lyapunov(&prob, opts)?.solution);
        if needs_q {
            reg.eps_c = rel * hi.max(f64::MIN_POSITIVE) / extreme_eigs(&h).0;
            out.q = &set.q + &h * reg.eps_c;
            let p = c.nrows();
            c = Mat::from_fn(p + dim, dim, |i, j| {
                if i < p { c[(i, j)] } else if i - p == j { reg.eps_c.sqrt() } else { 0.0 }
            });
        }
        if needs_pb {
            let d = sym(&nalgebra::Cholesky::new(h).ok_or(MorError::NotPd(f64::NAN))?.inverse());
            reg.eps_pb = rel * qhi.max(f64::MIN_POSITIVE) / extreme_eigs(&d).0;
            out.pb = &set.pb + &d * reg.eps_pb;
            out.lmi_max_eig = lmi_max_eig(a, sys.b(), n, gamma, &out.pb);
        }
    }
    let system = BilinearSystem::new(a.clone(), sys.b().clone(), c, n.to_vec(), x0, v0)?;
    Ok(RegularizedGramians { system, gramians: out, reg, ic_dim: sys.ic_dim(), outputs: sys.outputs() })
}
