//! System representations: the full bilinear model, its homogeneous and
//! inhomogeneous parts, reduced models and input signals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MorError, Result};
use crate::linalg::{max_real_eig, Mat};

/// Margin below zero that the spectral abscissa of `A` must clear.
pub const HURWITZ_MARGIN: f64 = 1e-12;

/// `ẋ = Ax + Bu + Σ N_k x u_k`, `x(0) = X₀v₀`, `y = Cx`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearSystem {
    a: Mat,
    b: Mat,
    c: Mat,
    n: Vec<Mat>,
    x0: Mat,
    v0: DVector<f64>,
}

impl BilinearSystem {
    pub fn new(
        a: Mat,
        b: Mat,
        c: Mat,
        n: Vec<Mat>,
        x0: Mat,
        v0: DVector<f64>,
    ) -> Result<Self> {
        let dim = a.nrows();
        if a.ncols() != dim {
            return Err(MorError::Dimension(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != dim {
            return Err(MorError::Dimension(format!("B has {} rows, expected {dim}", b.nrows())));
        }
        if c.ncols() != dim {
            return Err(MorError::Dimension(format!("C has {} columns, expected {dim}", c.ncols())));
        }
        if n.len() != b.ncols() {
            return Err(MorError::Dimension(format!(
                "{} bilinear matrices for {} inputs",
                n.len(),
                b.ncols()
            )));
        }
        if let Some(bad) = n.iter().find(|nk| nk.shape() != (dim, dim)) {
            return Err(MorError::Dimension(format!(
                "N_k is {}x{}, expected {dim}x{dim}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        if x0.nrows() != dim {
            return Err(MorError::Dimension(format!("X0 has {} rows, expected {dim}", x0.nrows())));
        }
        if v0.len() != x0.ncols() {
            return Err(MorError::Dimension(format!(
                "v0 has length {}, X0 has {} columns",
                v0.len(),
                x0.ncols()
            )));
        }
        let all = a
            .iter()
            .chain(b.iter())
            .chain(c.iter())
            .chain(n.iter().flat_map(|m| m.iter()))
            .chain(x0.iter())
            .chain(v0.iter());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(MorError::InvalidArgument("non-finite matrix entry".into()));
        }
        let alpha = max_real_eig(&a)?;
        if alpha >= -HURWITZ_MARGIN {
            return Err(MorError::NotHurwitz(alpha));
        }
        Ok(Self { a, b, c, n, x0, v0 })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn n_mats(&self) -> &[Mat] {
        &self.n
    }
    pub fn x0(&self) -> &Mat {
        &self.x0
    }
    pub fn v0(&self) -> &DVector<f64> {
        &self.v0
    }

    /// State dimension.
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn ic_dim(&self) -> usize {
        self.x0.ncols()
    }

    /// Same system with a different initial-condition coefficient vector.
    pub fn with_v0(&self, v0: DVector<f64>) -> Result<Self> {
        if v0.len() != self.x0.ncols() {
            return Err(MorError::Dimension(format!(
                "v0 has length {}, X0 has {} columns",
                v0.len(),
                self.x0.ncols()
            )));
        }
        Ok(Self { v0, ..self.clone() })
    }

    pub fn split(&self) -> (HomogeneousSubsystem, InhomogeneousSubsystem) {
        split_system(self)
    }

    pub fn bilinear_mask(&self, tol: f64) -> Vec<bool> {
        bilinear_mask(self, tol)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SystemJson::from_system(self)).expect("matrices serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SystemJson = serde_json::from_str(text).map_err(|e| MorError::Parse(e.to_string()))?;
        raw.into_system()
    }

    /// SHA-256 of the canonical JSON encoding; used as a cache key.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Part driven by the initial condition only.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousSubsystem {
    pub a: Mat,
    pub n: Vec<Mat>,
    pub x0: Mat,
    pub v0: DVector<f64>,
    pub c: Mat,
}

/// Part driven by `Bu` from a zero initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct InhomogeneousSubsystem {
    pub a: Mat,
    pub b: Mat,
    pub n: Vec<Mat>,
    pub c: Mat,
}

pub fn split_system(sys: &BilinearSystem) -> (HomogeneousSubsystem, InhomogeneousSubsystem) {
    (
        HomogeneousSubsystem {
            a: sys.a.clone(),
            n: sys.n.clone(),
            x0: sys.x0.clone(),
            v0: sys.v0.clone(),
            c: sys.c.clone(),
        },
        InhomogeneousSubsystem {
            a: sys.a.clone(),
            b: sys.b.clone(),
            n: sys.n.clone(),
            c: sys.c.clone(),
        },
    )
}

/// Entry `k` is true iff `‖N_k‖_F > tol`.
pub fn bilinear_mask(sys: &BilinearSystem, tol: f64) -> Vec<bool> {
    sys.n.iter().map(|nk| nk.norm() > tol).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bt,
    Spa,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bt => "bt",
            Method::Spa => "spa",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = MorError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bt" => Ok(Method::Bt),
            "spa" => Ok(Method::Spa),
            other => Err(MorError::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedHomogeneousModel {
    #[serde(with = "crate::serde_mat")]
    pub a: Mat,
    #[serde(with = "crate::serde_mat::list")]
    pub n: Vec<Mat>,
    #[serde(with = "crate::serde_mat")]
    pub x0: Mat,
    #[serde(with = "crate::serde_mat")]
    pub c: Mat,
    pub method: Method,
}

impl ReducedHomogeneousModel {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedInhomogeneousModel {
    #[serde(with = "crate::serde_mat")]
    pub a: Mat,
    #[serde(with = "crate::serde_mat")]
    pub b: Mat,
    #[serde(with = "crate::serde_mat")]
    pub c: Mat,
    #[serde(with = "crate::serde_mat")]
    pub d: Mat,
    #[serde(with = "crate::serde_mat::list")]
    pub e: Vec<Mat>,
    #[serde(with = "crate::serde_mat::list")]
    pub n: Vec<Mat>,
    pub method: Method,
}

impl ReducedInhomogeneousModel {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
}

/// Closed-form input rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputRule {
    /// `amplitude · e^{−decay·t} cos(freq·t)` on every channel.
    ExpCos { amplitude: f64, decay: f64, freq: f64 },
    Constant { values: Vec<f64> },
    Zero,
    /// Piecewise-linear interpolation, held constant outside the table.
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSignal {
    pub rule: InputRule,
    pub m: usize,
    pub horizon: f64,
    /// One flag per channel; true iff that channel enters the bilinear term.
    pub mask: Vec<bool>,
}

impl InputSignal {
    pub fn new(rule: InputRule, m: usize, horizon: f64) -> Result<Self> {
        match &rule {
            InputRule::Constant { values } if values.len() != m => {
                return Err(MorError::Dimension(format!("constant input has {} channels, expected {m}", values.len())))
            }
            InputRule::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(MorError::InvalidArgument("input table needs matching, non-empty times and values".into()));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(MorError::InvalidArgument("input table times must increase".into()));
                }
                if values.iter().any(|row| row.len() != m) {
                    return Err(MorError::Dimension(format!("input table rows must have {m} channels")));
                }
            }
            _ => {}
        }
        if !(horizon > 0.0) {
            return Err(MorError::InvalidArgument("input horizon must be positive".into()));
        }
        Ok(Self { rule, m, horizon, mask: vec![true; m] })
    }

    /// The benchmark input `e^{−t} cos(0.5 t)`.
    pub fn exp_cos(m: usize, horizon: f64) -> Self {
        Self::new(InputRule::ExpCos { amplitude: 1.0, decay: 1.0, freq: 0.5 }, m, horizon)
            .expect("valid rule")
    }

    pub fn zero(m: usize, horizon: f64) -> Self {
        Self::new(InputRule::Zero, m, horizon).expect("valid rule")
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.m {
            return Err(MorError::Dimension(format!("mask has length {}, expected {}", mask.len(), self.m)));
        }
        self.mask = mask;
        Ok(self)
    }

    /// Parses `t,u1,...,um` rows; a non-numeric first line is taken as a header.
    pub fn table_from_csv(text: &str, horizon: f64) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            match fields {
                Ok(f) if f.len() >= 2 => {
                    times.push(f[0]);
                    values.push(f[1..].to_vec());
                }
                Ok(_) => return Err(MorError::Parse(format!("line {}: need t and at least one channel", lineno + 1))),
                Err(_) if times.is_empty() && lineno == 0 => continue,
                Err(e) => return Err(MorError::Parse(format!("line {}: {e}", lineno + 1))),
            }
        }
        let m = values.first().map(|v| v.len()).unwrap_or(0);
        Self::new(InputRule::Table { times, values }, m, horizon)
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        match &self.rule {
            InputRule::ExpCos { amplitude, decay, freq } => {
                DVector::from_element(self.m, amplitude * (-decay * t).exp() * (freq * t).cos())
            }
            InputRule::Constant { values } => DVector::from_column_slice(values),
            InputRule::Zero => DVector::zeros(self.m),
            InputRule::Table { times, values } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return DVector::from_column_slice(&values[0]);
                }
                if t >= times[last] {
                    return DVector::from_column_slice(&values[last]);
                }
                let hi = times.partition_point(|&s| s <= t);
                let lo = hi - 1;
                let w = (t - times[lo]) / (times[hi] - times[lo]);
                DVector::from_iterator(
                    self.m,
                    values[lo].iter().zip(&values[hi]).map(|(a, b)| a + w * (b - a)),
                )
            }
        }
    }

    /// `u⁰(t)`: channels outside the bilinear mask set to zero.
    pub fn eval_masked(&self, t: f64) -> DVector<f64> {
        let mut u = self.eval(t);
        for (k, active) in self.mask.iter().enumerate() {
            if !active {
                u[k] = 0.0;
            }
        }
        u
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.rule, InputRule::Zero)
    }
}

/// On-disk schema: dense row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SystemJson {
    pub A: Vec<Vec<f64>>,
    pub B: Vec<Vec<f64>>,
    pub C: Vec<Vec<f64>>,
    pub N: Vec<Vec<Vec<f64>>>,
    pub X0: Vec<Vec<f64>>,
    pub v0: Vec<f64>,
}

pub fn matrix_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Builds a matrix from rows; `cols` disambiguates empty row lists.
pub fn matrix_from_rows(rows: &[Vec<f64>], cols: Option<usize>) -> Result<Mat> {
    let ncols = rows.first().map(|r| r.len()).or(cols).unwrap_or(0);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(MorError::Parse("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl SystemJson {
    pub fn from_system(sys: &BilinearSystem) -> Self {
        Self {
            A: matrix_to_rows(&sys.a),
            B: matrix_to_rows(&sys.b),
            C: matrix_to_rows(&sys.c),
            N: sys.n.iter().map(matrix_to_rows).collect(),
            X0: matrix_to_rows(&sys.x0),
            v0: sys.v0.iter().copied().collect(),
        }
    }

    pub fn into_system(self) -> Result<BilinearSystem> {
        let a = matrix_from_rows(&self.A, None)?;
        let n = a.nrows();
        let m = self.N.len();
        let b = matrix_from_rows(&self.B, Some(m))?;
        let b = if b.nrows() == 0 && n > 0 { Mat::zeros(n, m) } else { b };
        let c = matrix_from_rows(&self.C, Some(n))?;
        let nm = self
            .N
            .iter()
            .map(|rows| matrix_from_rows(rows, Some(n)))
            .collect::<Result<Vec<_>>>()?;
        let x0 = matrix_from_rows(&self.X0, Some(self.v0.len()))?;
        BilinearSystem::new(a, b, c, nm, x0, DVector::from_vec(self.v0))
    }
}
