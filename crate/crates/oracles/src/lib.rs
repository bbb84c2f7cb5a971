//! Brute-force reference computations used to certify the solvers in
//! `bilinear-mor`. Everything here is deliberately naive: dense Kronecker
//! solves, explicit time integration, Taylor matrix exponentials and
//! hand-written stencils. None of it calls the solver paths it checks.

use std::path::Path;

use bilinear_mor::model::{BilinearSystem, SystemJson};
use bilinear_mor::Mat;
use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub mod fixtures;

/// `vec(AX + XAᵀ + γ⁻² Σ N X Nᵀ)` as a dense `n² × n²` matrix, built entry by
/// entry from its action on unit matrices.
pub fn lyapunov_matrix(a: &Mat, n: &[Mat], gamma: f64) -> Mat {
    let d = a.nrows();
    let mut op = Mat::zeros(d * d, d * d);
    for col in 0..d * d {
        let mut e = Mat::zeros(d, d);
        e[(col % d, col / d)] = 1.0;
        let mut img = a * &e + &e * a.transpose();
        for nk in n {
            img += nk * &e * nk.transpose() / (gamma * gamma);
        }
        for row in 0..d * d {
            op[(row, col)] = img[(row % d, row / d)];
        }
    }
    op
}

/// Solves `AX + XAᵀ + γ⁻² Σ N X Nᵀ = −R` by dense LU on the vectorized system.
pub fn lyapunov_dense(a: &Mat, n: &[Mat], gamma: f64, rhs: &Mat) -> Option<Mat> {
    let d = a.nrows();
    let op = lyapunov_matrix(a, n, gamma);
    let b = DVector::from_iterator(d * d, rhs.iter().map(|v| -v));
    let x = op.lu().solve(&b)?;
    Some(Mat::from_column_slice(d, d, x.as_slice()))
}

/// `∫₀^T Z(t) dt` for `Ż = AZ + ZAᵀ + γ⁻² Σ N Z Nᵀ`, `Z(0) = K`, by classical
/// RK4 on the pair `(Z, ∫Z)`.
pub fn gramian_by_integration(a: &Mat, n: &[Mat], gamma: f64, k: &Mat, t_end: f64, dt: f64) -> Mat {
    let f = |z: &Mat| {
        let mut out = a * z + z * a.transpose();
        for nk in n {
            out += nk * z * nk.transpose() / (gamma * gamma);
        }
        out
    };
    let steps = (t_end / dt).round() as usize;
    let mut z = k.clone();
    let mut acc = Mat::zeros(k.nrows(), k.ncols());
    for _ in 0..steps {
        let z2 = &z + f(&z) * (dt / 2.0);
        let k1 = f(&z);
        let k2 = f(&z2);
        let z3 = &z + &k2 * (dt / 2.0);
        let k3 = f(&z3);
        let z4 = &z + &k3 * dt;
        let k4 = f(&z4);
        acc += (&z + &z2 * 2.0 + &z3 * 2.0 + &z4) * (dt / 6.0);
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    acc
}

/// Scaling and squaring with a degree-20 Taylor polynomial.
pub fn expm(a: &Mat) -> Mat {
    let d = a.nrows();
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * d as f64;
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(s);
    let mut term = Mat::identity(d, d);
    let mut sum = Mat::identity(d, d);
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `y(t_i) = C e^{A t_i} x₀` on `t_i = i·dt`.
pub fn linear_response(a: &Mat, c: &Mat, x0: &DVector<f64>, t_end: f64, dt: f64) -> Vec<DVector<f64>> {
    let steps = (t_end / dt).round() as usize;
    let step = expm(&(a * dt));
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(c * &x);
    for _ in 0..steps {
        x = &step * x;
        out.push(c * &x);
    }
    out
}

/// Hankel singular values as `√λ(LᵀPL)` with `Q = LLᵀ` (Cholesky), sorted
/// decreasingly. Shares no code with the SVD route.
pub fn hsv_eigen(p: &Mat, q: &Mat) -> Option<Vec<f64>> {
    let l = nalgebra::Cholesky::new((q + q.transpose()) * 0.5)?.l();
    let m = l.transpose() * p * &l;
    let mut ev: Vec<f64> = SymmetricEigen::new((&m + m.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Some(ev)
}

/// The `k = 2` heat benchmark written out by hand: `h = 1/3`, nodes
/// `(1,1), (2,1), (1,2), (2,2)` in that order.
pub fn heat2d_k2() -> (Mat, Mat, Mat) {
    let h2 = 9.0;
    #[rustfmt::skip]
    let a = Mat::from_row_slice(4, 4, &[
        -4.0 * h2, h2, h2, 0.0,
        h2, -3.0 * h2, 0.0, h2,
        h2, 0.0, -4.0 * h2, h2,
        0.0, h2, h2, -3.0 * h2,
    ]);
    let b = Mat::from_row_slice(4, 1, &[h2, 0.0, h2, 0.0]);
    let n = Mat::from_diagonal(&DVector::from_column_slice(&[0.0, 3.0, 0.0, 3.0]));
    (a, b, n)
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub oracle: String,
    pub fixture: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OracleReport {
    pub outcomes: Vec<OracleOutcome>,
    pub warnings: Vec<String>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    fn push(&mut self, oracle: &str, fixture: &str, deviation: f64, tolerance: f64) {
        self.outcomes.push(OracleOutcome {
            oracle: oracle.into(),
            fixture: fixture.into(),
            deviation,
            tolerance,
            passed: deviation <= tolerance,
            note: None,
        });
    }

    fn fail(&mut self, oracle: &str, fixture: &str, note: String) {
        self.outcomes.push(OracleOutcome {
            oracle: oracle.into(),
            fixture: fixture.into(),
            deviation: f64::INFINITY,
            tolerance: 0.0,
            passed: false,
            note: Some(note),
        });
    }
}

/// Reachability Gramian from the library versus time integration.
pub fn check_p0_integration(sys: &BilinearSystem, gamma: f64) -> Result<f64, String> {
    let (p0, _) = bilinear_mor::gramians::compute_p0(sys, gamma, &Default::default()).map_err(|e| e.to_string())?;
    let k = sys.x0() * sys.x0().transpose();
    let z = gramian_by_integration(sys.a(), sys.n_mats(), gamma, &k, 100.0, 2e-3);
    Ok(rel(&p0, &z))
}

/// Observability Gramian versus the reachability solver on the transposed data.
pub fn check_q_duality(sys: &BilinearSystem, gamma: f64) -> Result<f64, String> {
    let opts = Default::default();
    let (q, _) = bilinear_mor::gramians::compute_q(sys, gamma, &opts).map_err(|e| e.to_string())?;
    let nt: Vec<Mat> = sys.n_mats().iter().map(|m| m.transpose()).collect();
    let rhs = sys.c().transpose() * sys.c();
    let prob = bilinear_mor::matrixeq::GenLyapProblem { a: &sys.a().transpose(), n: &nt, gamma, rhs: &rhs, adjoint: false };
    let dual = bilinear_mor::matrixeq::solve_generalized_lyapunov(&prob, &opts).map_err(|e| e.to_string())?.solution;
    Ok(rel(&q, &dual))
}

/// Library Gramians versus the dense Kronecker oracle.
pub fn check_gramians_dense(sys: &BilinearSystem, gamma: f64) -> Result<f64, String> {
    let opts = Default::default();
    let (p0, _) = bilinear_mor::gramians::compute_p0(sys, gamma, &opts).map_err(|e| e.to_string())?;
    let rhs = sys.x0() * sys.x0().transpose();
    let dense = lyapunov_dense(sys.a(), sys.n_mats(), gamma, &rhs).ok_or("dense operator singular")?;
    Ok(rel(&p0, &dense))
}

/// HSVs from the balancing SVD versus eigenvalues of `LᵀPL`.
pub fn check_hsv_eigen(sys: &BilinearSystem, gamma: f64) -> Result<f64, String> {
    let opts = Default::default();
    let (p0, _) = bilinear_mor::gramians::compute_p0(sys, gamma, &opts).map_err(|e| e.to_string())?;
    let (q, _) = bilinear_mor::gramians::compute_q(sys, gamma, &opts).map_err(|e| e.to_string())?;
    let bal = bilinear_mor::balancing::balance_pair(&p0, &q, bilinear_mor::balancing::DEFAULT_RANK_TOL, bilinear_mor::balancing::Pair::X0)
        .map_err(|e| e.to_string())?;
    let ev = hsv_eigen(&p0, &q).ok_or("Q not positive definite")?;
    let top = ev[0].max(f64::MIN_POSITIVE);
    Ok(bal.hsv.iter().zip(&ev).map(|(a, b)| (a - b).abs() / top).fold(0.0, f64::max))
}

/// Zero-input simulation versus `C e^{At} X₀v₀`.
pub fn check_expm_simulation(sys: &BilinearSystem) -> Result<f64, String> {
    let (t_end, dt) = (1.0, 1e-4);
    let u = bilinear_mor::model::InputSignal::zero(sys.inputs(), t_end);
    let traj = bilinear_mor::sim::simulate_full(sys, &u, sys.v0(), t_end, dt).map_err(|e| e.to_string())?;
    let x0 = sys.x0() * sys.v0();
    let oracle = linear_response(sys.a(), sys.c(), &x0, t_end, dt);
    let scale = oracle.iter().map(|y| y.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    Ok((0..traj.len()).map(|i| (traj.output(i) - &oracle[i]).norm()).fold(0.0, f64::max) / scale)
}

/// Library `heat2d(k=2)` versus the hand-assembled stencil.
pub fn check_heat2d_stencil() -> Result<f64, String> {
    let sys = bilinear_mor::benchmarks::heat2d(&bilinear_mor::benchmarks::Heat2dConfig { k: 2, ..Default::default() }).map_err(|e| e.to_string())?;
    let (a, b, n) = heat2d_k2();
    Ok(rel(sys.a(), &a).max(rel(sys.b(), &b)).max(rel(&sys.n_mats()[0], &n)))
}

/// Runs every oracle on every fixture under `dir`.
pub fn run_oracles(dir: &Path) -> Result<OracleReport, String> {
    let fixtures = fixtures::load_dir(dir)?;
    Ok(run_on(&fixtures))
}

pub fn run_on(fixtures: &[fixtures::Fixture]) -> OracleReport {
    let mut report = OracleReport::default();
    if fixtures.is_empty() {
        report.warnings.push("no fixtures found; nothing was checked".into());
        return report;
    }
    match check_heat2d_stencil() {
        Ok(d) => report.push("heat2d-stencil", "heat2d-k2", d, 1e-14),
        Err(e) => report.fail("heat2d-stencil", "heat2d-k2", e),
    }
    for fx in fixtures {
        let sys = match SystemJson::into_system(fx.system.clone()) {
            Ok(s) => s,
            Err(e) => {
                report.fail("load", &fx.name, e.to_string());
                continue;
            }
        };
        type Check = fn(&BilinearSystem, f64) -> Result<f64, String>;
        let checks: [(&str, Check, f64); 4] = [
            ("p0-integration", check_p0_integration, 1e-4),
            ("q-transpose-duality", check_q_duality, 1e-10),
            ("p0-dense-kronecker", check_gramians_dense, 1e-10),
            ("hsv-eigen", check_hsv_eigen, 1e-8),
        ];
        for (name, f, tol) in checks {
            if fx.skip.iter().any(|s| s == name) {
                continue;
            }
            match f(&sys, fx.gamma) {
                Ok(d) => report.push(name, &fx.name, d, tol),
                Err(e) => report.fail(name, &fx.name, e),
            }
        }
        if !fx.skip.iter().any(|s| s == "expm-simulation") {
            match check_expm_simulation(&sys) {
                Ok(d) => report.push("expm-simulation", &fx.name, d, 1e-8),
                Err(e) => report.fail("expm-simulation", &fx.name, e),
            }
        }
        for exp in &fx.expected {
            match fixtures::evaluate(&sys, fx.gamma, &exp.quantity) {
                Ok(v) => {
                    let dev = (v - exp.value).abs() / exp.value.abs().max(1.0);
                    report.push(&format!("expected:{}", exp.quantity), &fx.name, dev, exp.tolerance);
                }
                Err(e) => report.fail(&format!("expected:{}", exp.quantity), &fx.name, e),
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal() {
        let a = Mat::from_diagonal(&DVector::from_column_slice(&[-1.0, 2.0]));
        let e = expm(&a);
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn scalar_integration() {
        let s = |v| Mat::from_element(1, 1, v);
        // 𝓛 = −2 + 1/2 → P = 1/1.5
        let p = gramian_by_integration(&s(-1.0), &[s(1.0)], 2f64.sqrt(), &s(1.0), 40.0, 1e-3);
        assert!((p[(0, 0)] - 2.0 / 3.0).abs() < 1e-8);
        let d = lyapunov_dense(&s(-1.0), &[s(1.0)], 2f64.sqrt(), &s(1.0)).unwrap();
        assert!((d[(0, 0)] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn hsv_of_diagonal_pair() {
        let d = |a: f64, b: f64| Mat::from_diagonal(&DVector::from_column_slice(&[a, b]));
        let h = hsv_eigen(&d(4.0, 1.0), &d(1.0, 4.0)).unwrap();
        assert!((h[0] - 2.0).abs() < 1e-14 && (h[1] - 2.0).abs() < 1e-14);
    }
}
