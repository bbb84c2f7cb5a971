//! Small serialized systems with independently known values.

use std::path::Path;

use bilinear_mor::model::{BilinearSystem, SystemJson};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Expected {
    /// `p0[i,j]`, `q[i,j]`, `hsv_x0[i]` or `y0[i]`.
    pub quantity: String,
    pub value: f64,
    pub tolerance: f64,
    /// How the value was obtained: `closed-form`, `hand-computed` or `benchmark-data`.
    pub origin: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub gamma: f64,
    pub system: SystemJson,
    #[serde(default)]
    pub expected: Vec<Expected>,
    /// Oracles that do not apply (e.g. HSVs of a rank-deficient pair).
    #[serde(default)]
    pub skip: Vec<String>,
}

/// Every `*.json` file in `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<Fixture>, String> {
    let entries = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))
        })
        .collect()
}

fn indices(spec: &str) -> Result<Vec<usize>, String> {
    spec.split(',').map(|s| s.trim().parse::<usize>().map_err(|e| format!("bad index '{s}': {e}"))).collect()
}

/// Evaluates a quantity with the library.
pub fn evaluate(sys: &BilinearSystem, gamma: f64, quantity: &str) -> Result<f64, String> {
    let (name, rest) = quantity.split_once('[').ok_or_else(|| format!("malformed quantity '{quantity}'"))?;
    let idx = indices(rest.trim_end_matches(']'))?;
    let opts = Default::default();
    let get2 = |m: &bilinear_mor::Mat| -> Result<f64, String> {
        match idx.as_slice() {
            [i, j] if *i < m.nrows() && *j < m.ncols() => Ok(m[(*i, *j)]),
            _ => Err(format!("index out of range in '{quantity}'")),
        }
    };
    match name {
        "p0" => get2(&bilinear_mor::gramians::compute_p0(sys, gamma, &opts).map_err(|e| e.to_string())?.0),
        "q" => get2(&bilinear_mor::gramians::compute_q(sys, gamma, &opts).map_err(|e| e.to_string())?.0),
        "hsv_x0" => {
            let p = bilinear_mor::gramians::compute_p0(sys, gamma, &opts).map_err(|e| e.to_string())?.0;
            let q = bilinear_mor::gramians::compute_q(sys, gamma, &opts).map_err(|e| e.to_string())?.0;
            let bal = bilinear_mor::balancing::balance_pair(
                &p,
                &q,
                bilinear_mor::balancing::DEFAULT_RANK_TOL,
                bilinear_mor::balancing::Pair::X0,
            )
            .map_err(|e| e.to_string())?;
            idx.first().and_then(|&i| bal.hsv.get(i).copied()).ok_or_else(|| format!("index out of range in '{quantity}'"))
        }
        "y0" => {
            let y = sys.c() * sys.x0() * sys.v0();
            idx.first().and_then(|&i| y.get(i).copied()).ok_or_else(|| format!("index out of range in '{quantity}'"))
        }
        other => Err(format!("unknown quantity '{other}'")),
    }
}
