//! Fixed-step RK4 simulation of full and reduced bilinear systems and `L²`
//! error measurement on the uniform grid.

use nalgebra::DVector;

use crate::error::{MorError, Result};
use crate::linalg::Mat;
use crate::model::{
    BilinearSystem, HomogeneousSubsystem, InhomogeneousSubsystem, InputSignal, ReducedHomogeneousModel,
    ReducedInhomogeneousModel,
};

pub const DEFAULT_DT: f64 = 1e-4;

/// Outputs sampled on `t_i = i·dt`, `i = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    /// One row per grid point, one column per output.
    pub outputs: Mat,
    /// Optional state samples, one row per grid point.
    pub states: Option<Mat>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.outputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.nrows() == 0
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn output(&self, i: usize) -> DVector<f64> {
        self.outputs.row(i).transpose()
    }

    fn check_same_grid(&self, other: &Trajectory) -> Result<()> {
        if self.outputs.shape() != other.outputs.shape() || (self.dt - other.dt).abs() > 1e-15 * self.dt {
            return Err(MorError::GridMismatch);
        }
        Ok(())
    }

    /// `‖y‖_{L²}` over the grid (Simpson).
    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.outputs.row_iter().map(|r| r.norm_squared()).collect();
        simpson(&sq, self.dt).max(0.0).sqrt()
    }

    /// Pointwise sum with another trajectory on the same grid.
    pub fn add(&self, other: &Trajectory) -> Result<Trajectory> {
        self.check_same_grid(other)?;
        Ok(Trajectory { dt: self.dt, outputs: &self.outputs + &other.outputs, states: None })
    }
}

/// Composite Simpson rule on a uniform grid; an odd number of intervals is
/// closed with Simpson's 3/8 rule on the last three.
pub fn simpson(f: &[f64], dt: f64) -> f64 {
    let n = f.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * dt * (f[0] + f[1]),
        3 => dt / 3.0 * (f[0] + 4.0 * f[1] + f[2]),
        _ => {
            let intervals = n - 1;
            let even_end = if intervals % 2 == 0 { n - 1 } else { n - 4 };
            let mut s = 0.0;
            let mut i = 0;
            while i + 2 <= even_end {
                s += f[i] + 4.0 * f[i + 1] + f[i + 2];
                i += 2;
            }
            let mut total = dt / 3.0 * s;
            if intervals % 2 == 1 {
                let j = n - 4;
                total += 3.0 * dt / 8.0 * (f[j] + 3.0 * f[j + 1] + 3.0 * f[j + 2] + f[j + 3]);
            }
            total
        }
    }
}

/// Right-hand side pieces of `ẋ = Ax + Bu + Σ (N_k x + E_k u) u_k`,
/// `y = Cx + Du`.
struct Dynamics<'a> {
    a: &'a Mat,
    b: Option<&'a Mat>,
    n: &'a [Mat],
    e: Option<&'a [Mat]>,
    c: &'a Mat,
    d: Option<&'a Mat>,
}

impl Dynamics<'_> {
    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>, out: &mut DVector<f64>, tmp: &mut DVector<f64>) {
        out.gemv(1.0, self.a, x, 0.0);
        if let Some(b) = self.b {
            out.gemv(1.0, b, u, 1.0);
        }
        for (k, nk) in self.n.iter().enumerate() {
            let uk = u[k];
            if uk == 0.0 {
                continue;
            }
            out.gemv(uk, nk, x, 1.0);
            if let Some(e) = self.e {
                tmp.gemv(1.0, &e[k], u, 0.0);
                out.axpy(uk, tmp, 1.0);
            }
        }
    }

    fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut y = self.c * x;
        if let Some(d) = self.d {
            y.gemv(1.0, d, u, 1.0);
        }
        y
    }

    fn simulate(&self, x0: DVector<f64>, u: &InputSignal, t_end: f64, dt: f64, keep_states: bool) -> Result<Trajectory> {
        if !(dt > 0.0) || !(t_end >= dt) {
            return Err(MorError::InvalidArgument(format!("need dt > 0 and T >= dt (dt={dt}, T={t_end})")));
        }
        if u.m != self.n.len() {
            return Err(MorError::Dimension(format!("input has {} channels, system has {}", u.m, self.n.len())));
        }
        let steps = (t_end / dt).round() as usize;
        let dim = x0.len();
        let p = self.c.nrows();
        let mut outputs = Mat::zeros(steps + 1, p);
        let mut states = keep_states.then(|| Mat::zeros(steps + 1, dim));
        let mut x = x0;
        let (mut k1, mut k2, mut k3, mut k4) =
            (DVector::zeros(dim), DVector::zeros(dim), DVector::zeros(dim), DVector::zeros(dim));
        let mut stage = DVector::zeros(dim);
        let mut tmp = DVector::zeros(dim);
        let u0 = u.eval(0.0);
        outputs.set_row(0, &self.output(&x, &u0).transpose());
        if let Some(s) = states.as_mut() {
            s.set_row(0, &x.transpose());
        }
        for i in 0..steps {
            let t = i as f64 * dt;
            let ua = u.eval(t);
            let um = u.eval(t + 0.5 * dt);
            let ub = u.eval(t + dt);
            self.rhs(&x, &ua, &mut k1, &mut tmp);
            stage.copy_from(&x);
            stage.axpy(0.5 * dt, &k1, 1.0);
            self.rhs(&stage, &um, &mut k2, &mut tmp);
            stage.copy_from(&x);
            stage.axpy(0.5 * dt, &k2, 1.0);
            self.rhs(&stage, &um, &mut k3, &mut tmp);
            stage.copy_from(&x);
            stage.axpy(dt, &k3, 1.0);
            self.rhs(&stage, &ub, &mut k4, &mut tmp);
            x.axpy(dt / 6.0, &k1, 1.0);
            x.axpy(dt / 3.0, &k2, 1.0);
            x.axpy(dt / 3.0, &k3, 1.0);
            x.axpy(dt / 6.0, &k4, 1.0);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(MorError::Diverged(t + dt));
            }
            outputs.set_row(i + 1, &self.output(&x, &ub).transpose());
            if let Some(s) = states.as_mut() {
                s.set_row(i + 1, &x.transpose());
            }
        }
        Ok(Trajectory { dt, outputs, states })
    }
}

fn check_v0(x0: &Mat, v0: &DVector<f64>) -> Result<()> {
    if x0.ncols() != v0.len() {
        return Err(MorError::Dimension(format!("v0 has length {}, X0 has {} columns", v0.len(), x0.ncols())));
    }
    Ok(())
}

/// Full system from `x(0) = X₀v₀`.
pub fn simulate_full(sys: &BilinearSystem, u: &InputSignal, v0: &DVector<f64>, t_end: f64, dt: f64) -> Result<Trajectory> {
    check_v0(sys.x0(), v0)?;
    let dynamics = Dynamics { a: sys.a(), b: Some(sys.b()), n: sys.n_mats(), e: None, c: sys.c(), d: None };
    dynamics.simulate(sys.x0() * v0, u, t_end, dt, false)
}

pub fn simulate_homogeneous(
    sub: &HomogeneousSubsystem,
    u: &InputSignal,
    v0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_v0(&sub.x0, v0)?;
    let dynamics = Dynamics { a: &sub.a, b: None, n: &sub.n, e: None, c: &sub.c, d: None };
    dynamics.simulate(&sub.x0 * v0, u, t_end, dt, false)
}

pub fn simulate_inhomogeneous(sub: &InhomogeneousSubsystem, u: &InputSignal, t_end: f64, dt: f64) -> Result<Trajectory> {
    let dynamics = Dynamics { a: &sub.a, b: Some(&sub.b), n: &sub.n, e: None, c: &sub.c, d: None };
    dynamics.simulate(DVector::zeros(sub.a.nrows()), u, t_end, dt, false)
}

pub fn simulate_rom_homogeneous(
    rom: &ReducedHomogeneousModel,
    u: &InputSignal,
    v0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_v0(&rom.x0, v0)?;
    let dynamics = Dynamics { a: &rom.a, b: None, n: &rom.n, e: None, c: &rom.c, d: None };
    dynamics.simulate(&rom.x0 * v0, u, t_end, dt, false)
}

pub fn simulate_rom_inhomogeneous(rom: &ReducedInhomogeneousModel, u: &InputSignal, t_end: f64, dt: f64) -> Result<Trajectory> {
    let dynamics = Dynamics { a: &rom.a, b: Some(&rom.b), n: &rom.n, e: Some(&rom.e), c: &rom.c, d: Some(&rom.d) };
    dynamics.simulate(DVector::zeros(rom.a.nrows()), u, t_end, dt, false)
}

/// Same as [`simulate_full`] but also records the state.
pub fn simulate_full_with_states(
    sys: &BilinearSystem,
    u: &InputSignal,
    v0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_v0(sys.x0(), v0)?;
    let dynamics = Dynamics { a: sys.a(), b: Some(sys.b()), n: sys.n_mats(), e: None, c: sys.c(), d: None };
    dynamics.simulate(sys.x0() * v0, u, t_end, dt, true)
}

/// `√∫ ‖y_ref − y_test‖²` (Simpson).
pub fn l2_error(y_ref: &Trajectory, y_test: &Trajectory) -> Result<f64> {
    y_ref.check_same_grid(y_test)?;
    let sq: Vec<f64> = (&y_ref.outputs - &y_test.outputs).row_iter().map(|r| r.norm_squared()).collect();
    Ok(simpson(&sq, y_ref.dt).max(0.0).sqrt())
}

/// Euclidean norm of the output difference at each grid point.
pub fn pointwise_abs_error(y_ref: &Trajectory, y_test: &Trajectory) -> Result<Vec<f64>> {
    y_ref.check_same_grid(y_test)?;
    Ok((&y_ref.outputs - &y_test.outputs).row_iter().map(|r| r.norm()).collect())
}

/// `∫₀^T ‖w ⊙ u(t)‖² dt` by Simpson on the simulation grid, where `masked`
/// selects `u⁰` instead of `u`.
pub fn input_l2_sq(u: &InputSignal, t_end: f64, dt: f64, masked: bool) -> Result<f64> {
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(MorError::InvalidArgument("need T > 0 and dt > 0".into()));
    }
    if u.is_zero() {
        return Ok(0.0);
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let h = t_end / steps as f64;
    let vals: Vec<f64> = (0..=steps)
        .map(|i| {
            let t = i as f64 * h;
            if masked {
                u.eval_masked(t).norm_squared()
            } else {
                u.eval(t).norm_squared()
            }
        })
        .collect();
    Ok(simpson(&vals, h))
}
