//! Dense kernels shared by the solvers: real Schur forms, a quasi-triangular
//! Sylvester solver (Bartels–Stewart), symmetric helpers and norms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::MorError;

pub type Mat = DMatrix<f64>;

/// Symmetric part `(M + Mᵀ)/2`.
pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn fro(m: &Mat) -> f64 {
    m.norm()
}

/// Spectral norm (largest singular value).
pub fn norm2(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_max_eig(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(sym(m)).eigenvalues.max()
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// decreasing order.
pub fn sym_eigen_desc(m: &Mat) -> (DVector<f64>, Mat) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(sym(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Largest real part over the spectrum of a general square matrix.
pub fn max_real_eig(m: &Mat) -> Result<f64, MorError> {
    if m.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    if let Ok(vals) = to_faer(m).eigenvalues() {
        return Ok(vals.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max));
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or_else(|| MorError::Numerical("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    let form = QuasiTriangular::from_t(t);
    Ok(form.eigenvalues().iter().map(|z| z.0).fold(f64::NEG_INFINITY, f64::max))
}

/// Column-stacking vectorisation.
pub fn vec_cols(m: &Mat) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec_cols(v: &DVector<f64>, rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v.as_slice())
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

pub(crate) fn to_faer(m: &Mat) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Solves `M x = b` by partial-pivoting LU; a solution whose backward error
/// is not small is reported as a singular operator.
pub fn lu_solve(m: &Mat, b: &DVector<f64>) -> Result<DVector<f64>, MorError> {
    use faer::prelude::*;
    let fm = to_faer(m);
    let fb = faer::Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = fm.partial_piv_lu().solve(&fb);
    let x = DVector::from_iterator(b.len(), (0..b.len()).map(|i| x[(i, 0)]));
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MorError::SingularOperator);
    }
    let resid = (m * &x - b).norm();
    let scale = m.norm() * x.norm() + b.norm();
    if scale > 0.0 && resid > 1e-8 * scale {
        return Err(MorError::SingularOperator);
    }
    Ok(x)
}

/// Upper quasi-triangular factor of a real Schur form together with its
/// diagonal block structure (1×1 real, 2×2 complex-conjugate pairs).
#[derive(Debug, Clone)]
pub(crate) struct QuasiTriangular {
    pub t: Mat,
    /// (start, size) of each diagonal block.
    pub blocks: Vec<(usize, usize)>,
}

impl QuasiTriangular {
    pub fn from_t(mut t: Mat) -> Self {
        let n = t.nrows();
        let mut blocks = Vec::new();
        let mut i = 0;
        while i < n {
            if i + 1 < n {
                let sub = t[(i + 1, i)].abs();
                let scale = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
                if sub > f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
                    blocks.push((i, 2));
                    // anything below the block is round-off
                    for r in (i + 2)..n {
                        t[(r, i)] = 0.0;
                        t[(r, i + 1)] = 0.0;
                    }
                    i += 2;
                    continue;
                }
                t[(i + 1, i)] = 0.0;
            }
            for r in (i + 1)..n {
                t[(r, i)] = 0.0;
            }
            blocks.push((i, 1));
            i += 1;
        }
        Self { t, blocks }
    }

    /// Eigenvalues as (re, im) pairs.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.t.nrows());
        for &(s, size) in &self.blocks {
            if size == 1 {
                out.push((self.t[(s, s)], 0.0));
            } else {
                let a = self.t[(s, s)];
                let b = self.t[(s, s + 1)];
                let c = self.t[(s + 1, s)];
                let d = self.t[(s + 1, s + 1)];
                let tr = 0.5 * (a + d);
                let disc = 0.25 * (a - d) * (a - d) + b * c;
                if disc >= 0.0 {
                    out.push((tr + disc.sqrt(), 0.0));
                    out.push((tr - disc.sqrt(), 0.0));
                } else {
                    out.push((tr, (-disc).sqrt()));
                    out.push((tr, -(-disc).sqrt()));
                }
            }
        }
        out
    }
}

/// Real Schur form `M = Q T Qᵀ`.
#[derive(Debug, Clone)]
pub(crate) struct SchurForm {
    pub q: Mat,
    pub qt: QuasiTriangular,
}

impl SchurForm {
    pub fn new(m: &Mat) -> Result<Self, MorError> {
        let schur = [f64::EPSILON, 1e2 * f64::EPSILON]
            .into_iter()
            .find_map(|eps| m.clone().try_schur(eps, 10_000))
            .ok_or_else(|| MorError::Numerical("Schur iteration did not converge".into()))?;
        let (q, t) = schur.unpack();
        Ok(Self {
            q,
            qt: QuasiTriangular::from_t(t),
        })
    }

    pub fn max_real(&self) -> f64 {
        self.qt
            .eigenvalues()
            .iter()
            .map(|z| z.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Solver for `A X + X Bᵀ + c X = F` with cached Schur forms of `A` and `B`.
#[derive(Debug, Clone)]
pub(crate) struct SylvesterSolver {
    a: SchurForm,
    b: SchurForm,
}

impl SylvesterSolver {
    pub fn new(a: &Mat, b: &Mat) -> Result<Self, MorError> {
        Ok(Self {
            a: SchurForm::new(a)?,
            b: SchurForm::new(b)?,
        })
    }

    /// Lyapunov orientation: `A X + X Aᵀ`.
    pub fn lyapunov(a: &Mat) -> Result<Self, MorError> {
        let s = SchurForm::new(a)?;
        Ok(Self { a: s.clone(), b: s })
    }

    pub fn max_real_a(&self) -> f64 {
        self.a.max_real()
    }

    pub fn solve(&self, f: &Mat) -> Result<Mat, MorError> {
        self.solve_shifted(f, 0.0)
    }

    pub fn solve_shifted(&self, f: &Mat, shift: f64) -> Result<Mat, MorError> {
        let ft = self.a.q.transpose() * f * &self.b.q;
        let xt = solve_quasi_triangular(&self.a.qt, &self.b.qt, ft, shift)?;
        Ok(&self.a.q * xt * self.b.q.transpose())
    }
}

/// Solves `Ta X + X Tbᵀ + c X = F` for upper quasi-triangular `Ta`, `Tb`.
fn solve_quasi_triangular(
    ta: &QuasiTriangular,
    tb: &QuasiTriangular,
    mut f: Mat,
    shift: f64,
) -> Result<Mat, MorError> {
    let n = ta.t.nrows();
    let r = tb.t.nrows();
    let mut x = Mat::zeros(n, r);
    let a = &ta.t;
    let b = &tb.t;
    for &(js, jw) in tb.blocks.iter().rev() {
        // F_J -= sum_{l > J} X_l Tb[J, l]^T
        for l in (js + jw)..r {
            for jj in 0..jw {
                let coef = b[(js + jj, l)];
                if coef != 0.0 {
                    let (xl, mut fj) = (x.column(l).clone_owned(), f.column_mut(js + jj));
                    fj.axpy(-coef, &xl, 1.0);
                }
            }
        }
        for &(is, iw) in ta.blocks.iter().rev() {
            let mut rhs = [[0.0f64; 2]; 2];
            for ii in 0..iw {
                for jj in 0..jw {
                    let mut v = f[(is + ii, js + jj)];
                    for k in (is + iw)..n {
                        v -= a[(is + ii, k)] * x[(k, js + jj)];
                    }
                    rhs[ii][jj] = v;
                }
            }
            let sol = solve_small_block(a, is, iw, b, js, jw, shift, &rhs)?;
            for ii in 0..iw {
                for jj in 0..jw {
                    x[(is + ii, js + jj)] = sol[ii][jj];
                }
            }
        }
    }
    Ok(x)
}

/// Solves the (at most 4×4) system `Aii X + X Bjjᵀ + c X = R`.
#[allow(clippy::too_many_arguments)]
fn solve_small_block(
    a: &Mat,
    is: usize,
    iw: usize,
    b: &Mat,
    js: usize,
    jw: usize,
    shift: f64,
    rhs: &[[f64; 2]; 2],
) -> Result<[[f64; 2]; 2], MorError> {
    let dim = iw * jw;
    let mut k = Mat::zeros(dim, dim);
    let mut v = DVector::zeros(dim);
    // unknown index: ii + iw * jj (column stacking)
    for jj in 0..jw {
        for ii in 0..iw {
            let row = ii + iw * jj;
            v[row] = rhs[ii][jj];
            k[(row, row)] += shift;
            for kk in 0..iw {
                k[(row, kk + iw * jj)] += a[(is + ii, is + kk)];
            }
            for ll in 0..jw {
                k[(row, ii + iw * ll)] += b[(js + jj, js + ll)];
            }
        }
    }
    let scale = k.amax().max(f64::MIN_POSITIVE);
    let lu = k.lu();
    let sol = lu.solve(&v).ok_or(MorError::SingularOperator)?;
    if sol.iter().any(|z| !z.is_finite()) {
        return Err(MorError::SingularOperator);
    }
    // reject blocks that are singular to working precision
    let det = lu.determinant().abs();
    if det <= f64::EPSILON * scale.powi(dim as i32) * 1e-2 {
        return Err(MorError::SingularOperator);
    }
    let mut out = [[0.0; 2]; 2];
    for jj in 0..jw {
        for ii in 0..iw {
            out[ii][jj] = sol[ii + iw * jj];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn sylvester_matches_kronecker_solve() {
        for seed in 0..5u64 {
            let a = random(7, 7, seed) - Mat::identity(7, 7) * 3.0;
            let b = random(4, 4, seed + 100) - Mat::identity(4, 4) * 3.0;
            let f = random(7, 4, seed + 200);
            let solver = SylvesterSolver::new(&a, &b).unwrap();
            let x = solver.solve_shifted(&f, 0.25).unwrap();
            let resid = &a * &x + &x * b.transpose() + &x * 0.25 - &f;
            assert!(resid.norm() < 1e-11 * f.norm(), "residual {}", resid.norm());

            let op = kron(&Mat::identity(4, 4), &a)
                + kron(&b, &Mat::identity(7, 7))
                + Mat::identity(28, 28) * 0.25;
            let xv = op.lu().solve(&vec_cols(&f)).unwrap();
            assert!((unvec_cols(&xv, 7, 4) - x).norm() < 1e-10);
        }
    }

    #[test]
    fn complex_pairs_are_handled() {
        // rotation-like blocks give complex eigenvalues
        let a = Mat::from_row_slice(3, 3, &[-1.0, 4.0, 0.5, -4.0, -1.0, 0.0, 0.0, 0.3, -2.0]);
        let f = Mat::identity(3, 3);
        let x = SylvesterSolver::lyapunov(&a).unwrap().solve(&f).unwrap();
        let resid = &a * &x + &x * a.transpose() - f;
        assert!(resid.norm() < 1e-12);
        let eig = SchurForm::new(&a).unwrap().qt.eigenvalues();
        assert!(eig.iter().any(|z| z.1.abs() > 1.0));
    }

    #[test]
    fn singular_sylvester_is_reported() {
        let a = Mat::from_row_slice(1, 1, &[1.0]);
        let b = Mat::from_row_slice(1, 1, &[-1.0]);
        let err = SylvesterSolver::new(&a, &b)
            .unwrap()
            .solve(&Mat::from_element(1, 1, 1.0));
        assert!(matches!(err, Err(MorError::SingularOperator)));
    }

    #[test]
    fn descending_eigen_order() {
        let m = Mat::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 2.0]));
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_eq!(vals.as_slice(), &[4.0, 2.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }
}
