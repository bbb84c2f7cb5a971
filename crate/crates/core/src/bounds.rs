//! `L²` output error bounds for the reduced subsystems and their sum.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::balancing::{BalancedPartition, Pair};
use crate::error::{MorError, Result};
use crate::linalg::{norm2, sym, Mat};
use crate::matrixeq::{solve_generalized_lyapunov, solve_generalized_sylvester, GenLyapProblem, GenSylvesterProblem, SolverOptions};
use crate::model::{InputSignal, Method, ReducedHomogeneousModel};
use crate::reduction::solve_a22;
use crate::sim::input_l2_sq;

/// Relative threshold for clamping a slightly negative trace term.
pub const NEGATIVE_TRACE_TOL: f64 = 1e-10;

/// `‖γu⁰‖²_{L²}` over the channels with a bilinear coupling.
pub fn u0_l2norm_sq(u: &InputSignal, gamma: f64, t_end: f64, dt: f64) -> Result<f64> {
    Ok(gamma * gamma * input_l2_sq(u, t_end, dt, true)?)
}

/// Input norms shared by all bounds at one `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputNorms {
    pub gamma: f64,
    /// `‖γu⁰‖²_{L²}`.
    pub u0_sq: f64,
    /// `‖u‖_{L²}` over all channels.
    pub u_l2: f64,
}

impl InputNorms {
    pub fn compute(u: &InputSignal, gamma: f64, t_end: f64, dt: f64) -> Result<Self> {
        Ok(Self {
            gamma,
            u0_sq: u0_l2norm_sq(u, gamma, t_end, dt)?,
            u_l2: input_l2_sq(u, t_end, dt, false)?.sqrt(),
        })
    }

    pub fn exp_factor(&self) -> f64 {
        (0.5 * self.u0_sq).exp()
    }
}

#[derive(Debug, Clone, Default)]
pub struct BoundIntermediates {
    pub y: Option<Mat>,
    pub p_hat: Option<Mat>,
    pub w: Option<Mat>,
    pub p_tilde: Option<Mat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    APriori,
    APosteriori,
    Hsv,
    Total,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBoundReport {
    pub bound: f64,
    /// `tr(Θ₂𝒲)`, `ℰ` or `2Σσ_i` depending on `kind`.
    pub trace_term: f64,
    pub exp_factor: f64,
    /// `‖v₀‖₂` or `‖u‖_{L²}`.
    pub signal_norm: f64,
    pub gamma: f64,
    pub kind: BoundKind,
    pub pair: Option<Pair>,
    pub method: Option<Method>,
    pub r: usize,
    #[serde(skip)]
    pub intermediates: BoundIntermediates,
}

fn clamp_trace(value: f64, scale: f64) -> Result<f64> {
    if value >= 0.0 {
        return Ok(value);
    }
    if value < -NEGATIVE_TRACE_TOL * scale {
        return Err(MorError::NegativeTrace(value));
    }
    warn!("clamping trace term {value:.3e} to zero");
    Ok(0.0)
}

/// Reachability Gramian `P̃` of a reduced homogeneous model.
pub fn rom_gramian(rom: &ReducedHomogeneousModel, gamma: f64, opts: &SolverOptions) -> Result<Mat> {
    let rhs = &rom.x0 * rom.x0.transpose();
    let prob = GenLyapProblem { a: &rom.a, n: &rom.n, gamma, rhs: &rhs, adjoint: false };
    let rep = solve_generalized_lyapunov(&prob, opts)
        .map_err(|e| MorError::SpaGramianUnavailable(e.to_string()))?;
    if !rep.converged {
        return Err(MorError::SpaGramianUnavailable(format!("residual {:.2e}", rep.residual)));
    }
    Ok(sym(&rep.solution))
}

/// `√tr(Θ₂𝒲) · exp(½‖γu⁰‖²) · ‖v₀‖₂` for a partition of the `(P₀, Q)` pair
/// and the reduced model built from it (same dimensions as the partition).
pub fn bound_x0_apriori(
    part: &BalancedPartition,
    rom: &ReducedHomogeneousModel,
    norms: &InputNorms,
    v0_norm: f64,
    opts: &SolverOptions,
) -> Result<ErrorBoundReport> {
    if part.pair != Pair::X0 {
        return Err(MorError::InvalidArgument("a-priori bound needs the x0 partition".into()));
    }
    let gamma = norms.gamma;
    let (n, r) = (part.order(), part.r);
    let report = |trace_term: f64, inter: BoundIntermediates| ErrorBoundReport {
        bound: trace_term.sqrt() * norms.exp_factor() * v0_norm,
        trace_term,
        exp_factor: norms.exp_factor(),
        signal_norm: v0_norm,
        gamma,
        kind: BoundKind::APriori,
        pair: Some(Pair::X0),
        method: Some(rom.method),
        r,
        intermediates: inter,
    };
    if r == n {
        return Ok(report(0.0, BoundIntermediates::default()));
    }
    let rhs = &part.g * rom.x0.transpose();
    let y = solve_generalized_sylvester(
        &GenSylvesterProblem { a: &part.a, a_r: &rom.a, n: &part.n, n_r: &rom.n, gamma, rhs: &rhs },
        opts,
    )?
    .solution;
    let p_tilde = rom_gramian(rom, gamma, opts)?;
    let n2 = n - r;
    let y2 = y.rows(r, n2).into_owned();
    let a2row = part.a.rows(r, n2).into_owned();
    let a21 = part.a21();
    let x02 = part.g2();
    // method-dependent (𝐀₂₁, 𝐀̄₂₁, 𝐍_k)
    let (bold_a21, bar_a21, bold_n): (Mat, Mat, Vec<Mat>) = match rom.method {
        Method::Bt => (a21.clone(), Mat::zeros(n2, r), (0..part.n.len()).map(|k| part.n_blocks(k)[2].clone()).collect()),
        Method::Spa => {
            let k21 = solve_a22(&part.a22(), &a21)?;
            let nk = (0..part.n.len())
                .map(|k| {
                    let [_, _, n21, n22] = part.n_blocks(k);
                    n21 - n22 * &k21
                })
                .collect();
            (Mat::zeros(n2, r), -k21, nk)
        }
    };
    let mut w = &x02 * x02.transpose() + &y2 * bold_a21.transpose() * 2.0 + &a2row * &y * bar_a21.transpose() * 2.0;
    let g2 = 1.0 / (gamma * gamma);
    for (k, nk_bold) in bold_n.iter().enumerate() {
        let n2row = part.n[k].rows(r, n2).into_owned();
        w += (&n2row * &y * nk_bold.transpose() * 2.0 - nk_bold * &p_tilde * nk_bold.transpose()) * g2;
    }
    let w = sym(&w);
    let theta2 = part.theta2();
    let tr: f64 = (0..n2).map(|i| theta2[i] * w[(i, i)]).sum();
    let scale = theta2.first().copied().unwrap_or(0.0) * norm2(&w);
    let tr = clamp_trace(tr, scale)?;
    Ok(report(tr, BoundIntermediates { y: Some(y), p_hat: None, w: Some(w), p_tilde: Some(p_tilde) }))
}

/// `ℰ = tr(CP₀Cᵀ) + tr(C̃P̃C̃ᵀ) − 2tr(CP̂C̃ᵀ)` and `√ℰ · exp(½‖γu⁰‖²) · ‖v₀‖₂`.
#[allow(clippy::too_many_arguments)]
pub fn bound_x0_posteriori(
    a: &Mat,
    n: &[Mat],
    x0: &Mat,
    c: &Mat,
    p0: &Mat,
    rom: &ReducedHomogeneousModel,
    norms: &InputNorms,
    v0_norm: f64,
    opts: &SolverOptions,
) -> Result<ErrorBoundReport> {
    let gamma = norms.gamma;
    let rhs = x0 * rom.x0.transpose();
    let p_hat = solve_generalized_sylvester(
        &GenSylvesterProblem { a, a_r: &rom.a, n, n_r: &rom.n, gamma, rhs: &rhs },
        opts,
    )?
    .solution;
    let p_tilde = rom_gramian(rom, gamma, opts)?;
    let t0 = (c * p0 * c.transpose()).trace();
    let t1 = (&rom.c * &p_tilde * rom.c.transpose()).trace();
    let t2 = (c * &p_hat * rom.c.transpose()).trace();
    let e = clamp_trace(t0 + t1 - 2.0 * t2, t0.abs() + t1.abs())?;
    Ok(ErrorBoundReport {
        bound: e.sqrt() * norms.exp_factor() * v0_norm,
        trace_term: e,
        exp_factor: norms.exp_factor(),
        signal_norm: v0_norm,
        gamma,
        kind: BoundKind::APosteriori,
        pair: Some(Pair::X0),
        method: Some(rom.method),
        r: rom.order(),
        intermediates: BoundIntermediates { y: None, p_hat: Some(p_hat), w: None, p_tilde: Some(p_tilde) },
    })
}

/// `2 Σ_{i>r} σ_i · exp(½‖γu⁰‖²) · ‖u‖_{L²}`.
pub fn bound_b(hsv: &[f64], r: usize, method: Option<Method>, norms: &InputNorms) -> Result<ErrorBoundReport> {
    if r > hsv.len() {
        return Err(MorError::InvalidArgument(format!("order {r} exceeds {}", hsv.len())));
    }
    let tail = 2.0 * hsv[r..].iter().sum::<f64>() + 0.0;
    Ok(ErrorBoundReport {
        bound: tail * norms.exp_factor() * norms.u_l2,
        trace_term: tail,
        exp_factor: norms.exp_factor(),
        signal_norm: norms.u_l2,
        gamma: norms.gamma,
        kind: BoundKind::Hsv,
        pair: Some(Pair::B),
        method,
        r,
        intermediates: BoundIntermediates::default(),
    })
}

/// Sum of the two sub-bounds; both must share `γ` (and thus the exponential factor).
pub fn bound_total(x0: &ErrorBoundReport, b: &ErrorBoundReport) -> Result<ErrorBoundReport> {
    if x0.gamma != b.gamma {
        return Err(MorError::GammaMismatch(x0.gamma, b.gamma));
    }
    Ok(ErrorBoundReport {
        bound: x0.bound + b.bound,
        trace_term: x0.trace_term.sqrt() * x0.signal_norm + b.trace_term * b.signal_norm,
        exp_factor: x0.exp_factor,
        signal_norm: 1.0,
        gamma: x0.gamma,
        kind: BoundKind::Total,
        pair: None,
        method: None,
        r: 0,
        intermediates: BoundIntermediates::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norms(u0_sq: f64, u_l2: f64) -> InputNorms {
        InputNorms { gamma: 1.0, u0_sq, u_l2 }
    }

    #[test]
    fn hsv_bound() {
        let hsv = [1.0, 0.5, 0.25];
        let rep = bound_b(&hsv, 1, None, &norms(0.0, 2.0)).unwrap();
        assert_eq!(rep.bound, 2.0 * 0.75 * 2.0);
        assert_eq!(bound_b(&hsv, 3, None, &norms(1.0, 2.0)).unwrap().bound, 0.0);
        assert_eq!(bound_b(&hsv, 1, None, &norms(1.0, 0.0)).unwrap().bound, 0.0);
        assert!(bound_b(&hsv, 4, None, &norms(0.0, 1.0)).is_err());
    }

    #[test]
    fn total_is_the_sum() {
        let a = bound_b(&[1.0, 0.5], 1, None, &norms(0.3, 1.0)).unwrap();
        let b = bound_b(&[2.0, 0.1], 1, None, &norms(0.3, 1.0)).unwrap();
        assert_eq!(bound_total(&a, &b).unwrap().bound, a.bound + b.bound);
        let mut c = b.clone();
        c.gamma = 2.0;
        assert!(matches!(bound_total(&a, &c), Err(MorError::GammaMismatch(..))));
    }

    #[test]
    fn exp_decay_energy() {
        let u = InputSignal::new(crate::model::InputRule::ExpCos { amplitude: 1.0, decay: 1.0, freq: 0.0 }, 1, 40.0).unwrap();
        let v = u0_l2norm_sq(&u, 1.0, 40.0, 1e-3).unwrap();
        assert!((v - 0.5).abs() < 1e-8);
    }

    #[test]
    fn negative_trace_handling() {
        assert_eq!(clamp_trace(-1e-14, 1.0).unwrap(), 0.0);
        assert!(clamp_trace(-1e-3, 1.0).is_err());
    }
}
