//! The reduction procedure end to end: split, Gramians, balancing, BT/SPA
//! for each subsystem, bounds, and measured errors against simulation.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use log::{debug, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::balancing::{balance_pair, resolve_ties, transform_and_partition, BalancedPartition, BalancingResult, Pair, DEFAULT_RANK_TOL};
use crate::bounds::{bound_b, bound_total, bound_x0_apriori, ErrorBoundReport, InputNorms};
use crate::error::{MorError, Result};
use crate::gramians::{compute_gramians, regularize, GramianOptions, GramianSet, RegularizedGramians, DEFAULT_REGULARIZATION};
use crate::matrixeq::StabilityReport;
use crate::model::{BilinearSystem, InputSignal, Method, ReducedHomogeneousModel, ReducedInhomogeneousModel};
use crate::reduction::{check_reduced_stability, reduce_b, reduce_x0, reduced_gramian_gap, restrict_b_rom, restrict_x0_rom};
use crate::sim::{l2_error, simulate_homogeneous, simulate_inhomogeneous, simulate_rom_homogeneous, simulate_rom_inhomogeneous, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub gramian: GramianOptions,
    pub rank_tol: f64,
    /// Relative eigenvalue floor for rank-deficient Gramians; 0 disables it.
    pub regularization: f64,
    /// Extend `r` past tied Hankel singular values.
    pub resolve_ties: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            gramian: GramianOptions::default(),
            rank_tol: DEFAULT_RANK_TOL,
            regularization: DEFAULT_REGULARIZATION,
            resolve_ties: true,
        }
    }
}

/// Gramians keyed by `(system hash, γ, options)`, in memory and optionally on disk.
#[derive(Debug, Default)]
pub struct GramianCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, GramianSet>>,
}

impl GramianCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()), memory: Mutex::default() }
    }

    fn key(sys: &BilinearSystem, gamma: f64, opts: &GramianOptions) -> String {
        let mut h = Sha256::new();
        h.update(sys.content_hash().as_bytes());
        h.update(gamma.to_bits().to_le_bytes());
        h.update(serde_json::to_vec(opts).unwrap_or_default());
        h.finalize().iter().take(20).map(|b| format!("{b:02x}")).collect()
    }

    pub fn get_or_compute(&self, sys: &BilinearSystem, gamma: f64, opts: &GramianOptions) -> Result<GramianSet> {
        let key = Self::key(sys, gamma, opts);
        if let Some(set) = self.memory.lock().expect("cache lock").get(&key) {
            return Ok(set.clone());
        }
        let path = self.dir.as_ref().map(|d| d.join(format!("gramians-{key}.json")));
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            match std::fs::read_to_string(p).map(|t| serde_json::from_str::<GramianSet>(&t)) {
                Ok(Ok(set)) => {
                    debug!("gramian cache hit {}", p.display());
                    self.memory.lock().expect("cache lock").insert(key, set.clone());
                    return Ok(set);
                }
                _ => warn!("ignoring unreadable cache file {}", p.display()),
            }
        }
        let set = compute_gramians(sys, gamma, opts)?;
        if let Some(p) = path {
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let text = serde_json::to_string(&set).map_err(|e| MorError::Numerical(e.to_string()))?;
            std::fs::write(&p, text)?;
        }
        self.memory.lock().expect("cache lock").insert(key, set.clone());
        Ok(set)
    }
}

/// Gramians and both balancing transformations at one `γ`.
#[derive(Debug, Clone)]
pub struct BalancedSystem {
    pub original: BilinearSystem,
    pub gramians: GramianSet,
    pub regularized: RegularizedGramians,
    pub x0: BalancingResult,
    pub b: BalancingResult,
}

impl BalancedSystem {
    pub fn gamma(&self) -> f64 {
        self.gramians.gamma
    }

    /// Hankel singular values of the original pairs are those of the
    /// regularized ones down to the regularization floor.
    pub fn hsv(&self, pair: Pair) -> &[f64] {
        match pair {
            Pair::X0 => &self.x0.hsv,
            Pair::B => &self.b.hsv,
        }
    }

    pub fn partition(&self, pair: Pair, r: usize) -> Result<BalancedPartition> {
        let sys = &self.regularized.system;
        match pair {
            Pair::X0 => transform_and_partition(sys.a(), sys.n_mats(), sys.x0(), sys.c(), &self.x0, r),
            Pair::B => transform_and_partition(sys.a(), sys.n_mats(), sys.b(), sys.c(), &self.b, r),
        }
    }
}

pub fn prepare(sys: &BilinearSystem, gamma: f64, opts: &PipelineOptions, cache: Option<&GramianCache>) -> Result<BalancedSystem> {
    let gramians = match cache {
        Some(c) => c.get_or_compute(sys, gamma, &opts.gramian)?,
        None => compute_gramians(sys, gamma, &opts.gramian)?,
    };
    let regularized = if opts.regularization > 0.0 {
        regularize(sys, &gramians, opts.regularization, &opts.gramian.solver)?
    } else {
        crate::gramians::RegularizedGramians {
            system: sys.clone(),
            gramians: gramians.clone(),
            reg: Default::default(),
            ic_dim: sys.ic_dim(),
            outputs: sys.outputs(),
        }
    };
    if regularized.reg.is_active() {
        debug!("regularized Gramians: {:?}", regularized.reg);
    }
    let g = &regularized.gramians;
    let x0 = balance_pair(&g.p0, &g.q, opts.rank_tol, Pair::X0)?;
    let b = balance_pair(&g.pb, &g.q, opts.rank_tol, Pair::B)?;
    Ok(BalancedSystem { original: sys.clone(), gramians, regularized, x0, b })
}

/// One homogeneous reduction with its bound and diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedX0 {
    pub requested_r: usize,
    pub r: usize,
    pub tie: bool,
    pub method: Method,
    /// Reduced model of the original (unregularized) subsystem.
    pub rom: ReducedHomogeneousModel,
    pub bound: ErrorBoundReport,
    pub stability: StabilityReport,
    /// Largest eigenvalue of the reduced Gramian inequality (BT only).
    pub gramian_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedB {
    pub requested_r: usize,
    pub r: usize,
    pub tie: bool,
    pub method: Method,
    pub rom: ReducedInhomogeneousModel,
    pub bound: ErrorBoundReport,
    pub stability: StabilityReport,
}

fn effective_r(hsv: &[f64], r: usize, resolve: bool) -> (usize, bool) {
    let (adjusted, tie) = resolve_ties(hsv, r);
    if resolve {
        (adjusted, tie)
    } else {
        (r, tie)
    }
}

pub fn reduce_homogeneous(bs: &BalancedSystem, r: usize, method: Method, norms: &InputNorms, opts: &PipelineOptions) -> Result<ReducedX0> {
    let (r_eff, tie) = effective_r(&bs.x0.hsv, r, opts.resolve_ties);
    let part = bs.partition(Pair::X0, r_eff)?;
    let rom_full = reduce_x0(&part, method)?;
    let v0_norm = bs.original.v0().norm();
    let bound = bound_x0_apriori(&part, &rom_full, norms, v0_norm, &opts.gramian.solver)?;
    let stability = check_reduced_stability(&rom_full.a, &rom_full.n, bs.gamma())?;
    let gramian_gap = (method == Method::Bt).then(|| reduced_gramian_gap(&part, bs.gamma()));
    let rom = restrict_x0_rom(&rom_full, bs.regularized.ic_dim, bs.regularized.outputs);
    Ok(ReducedX0 { requested_r: r, r: r_eff, tie, method, rom, bound, stability, gramian_gap })
}

pub fn reduce_inhomogeneous(bs: &BalancedSystem, r: usize, method: Method, norms: &InputNorms, opts: &PipelineOptions) -> Result<ReducedB> {
    let (r_eff, tie) = effective_r(&bs.b.hsv, r, opts.resolve_ties);
    let part = bs.partition(Pair::B, r_eff)?;
    let rom_full = reduce_b(&part, method)?;
    let bound = bound_b(&bs.b.hsv, r_eff, Some(method), norms)?;
    let stability = check_reduced_stability(&rom_full.a, &rom_full.n, bs.gamma())?;
    let rom = restrict_b_rom(&rom_full, bs.regularized.outputs);
    Ok(ReducedB { requested_r: r, r: r_eff, tie, method, rom, bound, stability })
}

/// Simulated outputs of the two full subsystems for one input.
#[derive(Debug, Clone)]
pub struct Reference {
    pub homogeneous: Trajectory,
    pub inhomogeneous: Trajectory,
    pub t_end: f64,
    pub dt: f64,
}

impl Reference {
    pub fn simulate(sys: &BilinearSystem, u: &InputSignal, t_end: f64, dt: f64) -> Result<Self> {
        let (hom, inh) = sys.split();
        Ok(Self {
            homogeneous: simulate_homogeneous(&hom, u, sys.v0(), t_end, dt)?,
            inhomogeneous: simulate_inhomogeneous(&inh, u, t_end, dt)?,
            t_end,
            dt,
        })
    }

    pub fn total(&self) -> Result<Trajectory> {
        self.homogeneous.add(&self.inhomogeneous)
    }
}

pub fn measure_x0(reference: &Reference, rom: &ReducedHomogeneousModel, u: &InputSignal, v0: &DVector<f64>) -> Result<(Trajectory, f64)> {
    let y = simulate_rom_homogeneous(rom, u, v0, reference.t_end, reference.dt)?;
    let err = l2_error(&reference.homogeneous, &y)?;
    Ok((y, err))
}

pub fn measure_b(reference: &Reference, rom: &ReducedInhomogeneousModel, u: &InputSignal) -> Result<(Trajectory, f64)> {
    let y = simulate_rom_inhomogeneous(rom, u, reference.t_end, reference.dt)?;
    let err = l2_error(&reference.inhomogeneous, &y)?;
    Ok((y, err))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub gamma: f64,
    pub r_x0: usize,
    pub r_b: usize,
    pub method_x0: Method,
    pub method_b: Method,
    pub t_end: f64,
    pub dt: f64,
}

/// Output of a complete run of the procedure.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub balanced: BalancedSystem,
    pub x0: ReducedX0,
    pub b: ReducedB,
    pub total_bound: ErrorBoundReport,
    pub norms: InputNorms,
}

pub fn run(sys: &BilinearSystem, u: &InputSignal, cfg: &RunConfig, opts: &PipelineOptions, cache: Option<&GramianCache>) -> Result<RunResult> {
    check_orders(sys, cfg.r_x0, cfg.r_b)?;
    let u = u.clone().with_mask(sys.bilinear_mask(0.0))?;
    let balanced = prepare(sys, cfg.gamma, opts, cache)?;
    let norms = InputNorms::compute(&u, cfg.gamma, cfg.t_end, cfg.dt)?;
    let x0 = reduce_homogeneous(&balanced, cfg.r_x0, cfg.method_x0, &norms, opts)?;
    let b = reduce_inhomogeneous(&balanced, cfg.r_b, cfg.method_b, &norms, opts)?;
    let total_bound = bound_total(&x0.bound, &b.bound)?;
    Ok(RunResult { balanced, x0, b, total_bound, norms })
}

pub fn check_orders(sys: &BilinearSystem, r_x0: usize, r_b: usize) -> Result<()> {
    let n = sys.order();
    for (name, r) in [("r_x0", r_x0), ("r_B", r_b)] {
        if r == 0 || r > n {
            return Err(MorError::InvalidArgument(format!("{name}={r} outside 1..={n}")));
        }
    }
    Ok(())
}

/// `a:b:count`, inclusive and evenly spaced.
pub fn gamma_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 || !(lo > 0.0) || !(hi >= lo) {
        return Err(MorError::InvalidArgument(format!("invalid gamma range {lo}:{hi}:{count}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect())
}

/// One row of an `(r, γ)` sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub pair: Pair,
    pub method: Method,
    pub r: usize,
    pub gamma: f64,
    pub bound: f64,
    pub measured_l2: f64,
    pub output_l2: f64,
    pub tie: bool,
    pub stable: bool,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn ratio(&self) -> f64 {
        self.bound / self.measured_l2
    }
}

/// Every `(pair, method, r)` at one `γ`; failures become flagged rows.
pub fn sweep_at_gamma(
    bs: &BalancedSystem,
    reference: &Reference,
    u: &InputSignal,
    orders: &[usize],
    opts: &PipelineOptions,
) -> Result<Vec<SweepRow>> {
    let sys = &bs.original;
    let u = u.clone().with_mask(sys.bilinear_mask(0.0))?;
    let gamma = bs.gamma();
    let norms = InputNorms::compute(&u, gamma, reference.t_end, reference.dt)?;
    let y_hom = reference.homogeneous.l2_norm();
    let y_inh = reference.inhomogeneous.l2_norm();
    let mut rows = Vec::new();
    for pair in [Pair::X0, Pair::B] {
        for method in [Method::Bt, Method::Spa] {
            for &r in orders {
                let base = SweepRow {
                    pair,
                    method,
                    r,
                    gamma,
                    bound: f64::NAN,
                    measured_l2: f64::NAN,
                    output_l2: if pair == Pair::X0 { y_hom } else { y_inh },
                    tie: false,
                    stable: false,
                    error: None,
                };
                let row = match pair {
                    Pair::X0 => reduce_homogeneous(bs, r, method, &norms, opts).and_then(|red| {
                        let (_, err) = measure_x0(reference, &red.rom, &u, sys.v0())?;
                        Ok(SweepRow { bound: red.bound.bound, measured_l2: err, tie: red.tie, stable: red.stability.stable, r: red.r, ..base.clone() })
                    }),
                    Pair::B => reduce_inhomogeneous(bs, r, method, &norms, opts).and_then(|red| {
                        let (_, err) = measure_b(reference, &red.rom, &u)?;
                        Ok(SweepRow { bound: red.bound.bound, measured_l2: err, tie: red.tie, stable: red.stability.stable, r: red.r, ..base.clone() })
                    }),
                };
                rows.push(row.unwrap_or_else(|e| SweepRow { error: Some(e.to_string()), ..base }));
            }
        }
    }
    Ok(rows)
}
