use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use bilinear_mor::balancing::Pair;
use bilinear_mor::benchmarks::{heat2d as build_heat2d, Heat2dConfig};
use bilinear_mor::gramians::{GramianSet, Regularization};
use bilinear_mor::matrixeq::{check_generalized_stability, min_stabilizing_gamma};
use bilinear_mor::model::{BilinearSystem, InputSignal, Method};
use bilinear_mor::pipeline::{
    gamma_grid, measure_b, measure_x0, prepare, run, sweep_at_gamma, GramianCache, PipelineOptions, Reference, RunConfig,
    SweepRow,
};
use bilinear_mor::sim::pointwise_abs_error;
use bilinear_mor::MorError;
use serde::Serialize;
use serde_json::json;

use crate::output::{hsv_csv, num, write_json, Csv};
use crate::{Heat2dArgs, RunArgs, StabilityArgs, SweepArgs, SystemArgs};

#[derive(Debug)]
pub struct CliError {
    kind: &'static str,
    message: String,
    code: u8,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: "usage", message: message.into(), code: 2 }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { kind: "numerical", message: message.into(), code: 3 }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::usage(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        self.code
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.kind, "message": self.message }).to_string()
    }
}

impl From<MorError> for CliError {
    fn from(e: MorError) -> Self {
        if e.is_usage() {
            Self::usage(e.to_string())
        } else {
            Self::numerical(e.to_string())
        }
    }
}

type CliResult = Result<ExitCode, CliError>;

fn load_system(args: &SystemArgs) -> Result<BilinearSystem, CliError> {
    match &args.system {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::usage(format!("system file not found: {}", path.display())));
            }
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Ok(BilinearSystem::from_json(&text)?)
        }
        None => Ok(build_heat2d(&Heat2dConfig { k: args.k.unwrap_or(10), ..Default::default() })?),
    }
}

fn parse_input(spec: &str, m: usize, horizon: f64) -> Result<InputSignal, CliError> {
    match spec {
        "expcos" => Ok(InputSignal::exp_cos(m, horizon)),
        "zero" => Ok(InputSignal::zero(m, horizon)),
        _ => {
            let Some(file) = spec.strip_prefix("table:") else {
                return Err(CliError::usage(format!("unknown input '{spec}' (expcos, zero or table:FILE)")));
            };
            let text = std::fs::read_to_string(file).map_err(|e| CliError::io(Path::new(file), e))?;
            let u = InputSignal::table_from_csv(&text, horizon)?;
            if u.m != m {
                return Err(CliError::usage(format!("input table has {} channels, system has {m}", u.m)));
            }
            Ok(u)
        }
    }
}

fn parse_method(s: &str) -> Result<Method, CliError> {
    Method::from_str(s).map_err(CliError::from)
}

fn options(args: &RunArgs) -> PipelineOptions {
    let mut opts = PipelineOptions::default();
    opts.gramian.interior_point = !args.no_sdp;
    opts
}

fn make_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn cache_for(args: &RunArgs) -> GramianCache {
    match &args.cache {
        Some(dir) => GramianCache::with_dir(dir),
        None => GramianCache::in_memory(),
    }
}

fn run_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    if !(args.t_end > 0.0) || !(args.dt > 0.0) || args.dt > args.t_end {
        return Err(CliError::usage("need 0 < dt <= T"));
    }
    Ok(RunConfig {
        gamma: args.gamma,
        r_x0: args.rx0,
        r_b: args.rb,
        method_x0: parse_method(&args.method_x0)?,
        method_b: parse_method(&args.method_b)?,
        t_end: args.t_end,
        dt: args.dt,
    })
}

fn run_args_json(args: &RunArgs) -> serde_json::Value {
    json!({
        "system": args.system.system.as_ref().map(|p| p.display().to_string()),
        "k": args.system.k,
        "gamma": args.gamma,
        "rx0": args.rx0,
        "rb": args.rb,
        "method_x0": args.method_x0,
        "method_b": args.method_b,
        "input": args.input,
        "T": args.t_end,
        "dt": args.dt,
        "sdp": !args.no_sdp,
    })
}

fn write_manifest(dir: &Path, command: &str, config: serde_json::Value, sys: Option<&BilinearSystem>, started: Instant) -> Result<(), CliError> {
    let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": command,
            "config": config,
            "version": env!("CARGO_PKG_VERSION"),
            "system_hash": sys.map(|s| s.content_hash()),
            "finished_unix": unix,
            "wall_clock_seconds": started.elapsed().as_secs_f64(),
        }),
    )
}

pub fn heat2d(args: &Heat2dArgs) -> CliResult {
    let sys = build_heat2d(&Heat2dConfig { k: args.k, initial_value: args.v0, robin_coefficient: args.robin })?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        make_out(parent)?;
    }
    std::fs::write(&args.out, sys.to_json()).map_err(|e| CliError::io(&args.out, e))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct GramianFile<'a> {
    #[serde(flatten)]
    set: &'a GramianSet,
    regularization: Regularization,
}

#[derive(Serialize)]
struct RomFile<'a, T> {
    pair: Pair,
    gamma: f64,
    requested_r: usize,
    r: usize,
    #[serde(flatten)]
    rom: &'a T,
}

pub fn reduce(args: &RunArgs) -> CliResult {
    let started = Instant::now();
    let sys = load_system(&args.system)?;
    let cfg = run_config(args)?;
    let u = parse_input(&args.input, sys.inputs(), cfg.t_end)?;
    make_out(&args.out)?;
    let res = run(&sys, &u, &cfg, &options(args), Some(&cache_for(args)))?;
    let dir = &args.out;
    write_json(&dir.join("gramians.json"), &GramianFile { set: &res.balanced.gramians, regularization: res.balanced.regularized.reg })?;
    hsv_csv(res.balanced.hsv(Pair::X0)).write(&dir.join("hsv_x0.csv"))?;
    hsv_csv(res.balanced.hsv(Pair::B)).write(&dir.join("hsv_B.csv"))?;
    write_json(
        &dir.join("rom_x0.json"),
        &RomFile { pair: Pair::X0, gamma: cfg.gamma, requested_r: res.x0.requested_r, r: res.x0.r, rom: &res.x0.rom },
    )?;
    write_json(
        &dir.join("rom_B.json"),
        &RomFile { pair: Pair::B, gamma: cfg.gamma, requested_r: res.b.requested_r, r: res.b.r, rom: &res.b.rom },
    )?;
    write_json(
        &dir.join("bounds.json"),
        &json!({
            "gamma": cfg.gamma,
            "input_norms": res.norms,
            "x0": res.x0.bound,
            "B": res.b.bound,
            "total": res.total_bound,
            "x0_tie": res.x0.tie,
            "B_tie": res.b.tie,
            "x0_stability": res.x0.stability,
            "B_stability": res.b.stability,
            "x0_gramian_gap": res.x0.gramian_gap,
        }),
    )?;
    write_manifest(dir, "reduce", run_args_json(args), Some(&sys), started)?;
    println!(
        "bound x0={} B={} total={}",
        num(res.x0.bound.bound),
        num(res.b.bound.bound),
        num(res.total_bound.bound)
    );
    Ok(ExitCode::SUCCESS)
}

fn trajectory_csv(name: &str, dt: f64, columns: &[Vec<f64>]) -> Csv {
    let mut header = vec!["t".to_string()];
    if columns.len() == 1 {
        header.push(name.to_string());
    } else {
        header.extend((1..=columns.len()).map(|i| format!("{name}{i}")));
    }
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&refs);
    let rows = columns.first().map(Vec::len).unwrap_or(0);
    for i in 0..rows {
        let mut fields = vec![num(i as f64 * dt)];
        fields.extend(columns.iter().map(|c| num(c[i])));
        csv.row(&fields);
    }
    csv
}

fn columns(m: &bilinear_mor::Mat) -> Vec<Vec<f64>> {
    (0..m.ncols()).map(|j| m.column(j).iter().copied().collect()).collect()
}

pub fn simulate(args: &RunArgs) -> CliResult {
    let started = Instant::now();
    let sys = load_system(&args.system)?;
    let cfg = run_config(args)?;
    let u = parse_input(&args.input, sys.inputs(), cfg.t_end)?;
    make_out(&args.out)?;
    let res = run(&sys, &u, &cfg, &options(args), Some(&cache_for(args)))?;
    let reference = Reference::simulate(&sys, &u, cfg.t_end, cfg.dt)?;
    let (y_x0, err_x0) = measure_x0(&reference, &res.x0.rom, &u, sys.v0())?;
    let (y_b, err_b) = measure_b(&reference, &res.b.rom, &u)?;
    let y_full = reference.total()?;
    let y_rom = y_x0.add(&y_b)?;
    let err_total = bilinear_mor::sim::l2_error(&y_full, &y_rom)?;
    let dir = &args.out;
    trajectory_csv("y", cfg.dt, &columns(&y_full.outputs)).write(&dir.join("y_full.csv"))?;
    trajectory_csv("y", cfg.dt, &columns(&y_rom.outputs)).write(&dir.join("y_rom.csv"))?;
    let eps_x0 = pointwise_abs_error(&reference.homogeneous, &y_x0)?;
    let eps_b = pointwise_abs_error(&reference.inhomogeneous, &y_b)?;
    trajectory_csv("eps", cfg.dt, &[eps_x0]).write(&dir.join("eps_x0.csv"))?;
    trajectory_csv("eps", cfg.dt, &[eps_b]).write(&dir.join("eps_B.csv"))?;
    let ratio = |b: f64, e: f64| if e > 0.0 { b / e } else { f64::INFINITY };
    write_json(
        &dir.join("summary.json"),
        &json!({
            "gamma": cfg.gamma,
            "r_x0": res.x0.r,
            "r_B": res.b.r,
            "method_x0": res.x0.method,
            "method_B": res.b.method,
            "l2_error_x0": err_x0,
            "l2_error_B": err_b,
            "l2_error_total": err_total,
            "bound_x0": res.x0.bound.bound,
            "bound_B": res.b.bound.bound,
            "bound_total": res.total_bound.bound,
            "ratio_x0": ratio(res.x0.bound.bound, err_x0),
            "ratio_B": ratio(res.b.bound.bound, err_b),
            "ratio_total": ratio(res.total_bound.bound, err_total),
            "output_l2_x0": reference.homogeneous.l2_norm(),
            "output_l2_B": reference.inhomogeneous.l2_norm(),
            "output_l2_total": y_full.l2_norm(),
        }),
    )?;
    write_manifest(dir, "simulate", run_args_json(args), Some(&sys), started)?;
    println!("L2 error x0={} B={} total={}", num(err_x0), num(err_b), num(err_total));
    Ok(ExitCode::SUCCESS)
}

fn parse_range_usize(s: &str) -> Result<(usize, usize), CliError> {
    let (a, b) = s.split_once(':').ok_or_else(|| CliError::usage(format!("expected lo:hi, got '{s}'")))?;
    let lo = a.trim().parse::<usize>().map_err(|_| CliError::usage(format!("bad range '{s}'")))?;
    let hi = b.trim().parse::<usize>().map_err(|_| CliError::usage(format!("bad range '{s}'")))?;
    if lo == 0 || hi < lo {
        return Err(CliError::usage(format!("empty order range '{s}'")));
    }
    Ok((lo, hi))
}

fn parse_gamma_range(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(CliError::usage(format!("expected a:b:n, got '{s}'")));
    };
    let lo = a.parse::<f64>().map_err(|_| CliError::usage(format!("bad gamma range '{s}'")))?;
    let hi = b.parse::<f64>().map_err(|_| CliError::usage(format!("bad gamma range '{s}'")))?;
    let count = n.parse::<usize>().map_err(|_| CliError::usage(format!("bad gamma range '{s}'")))?;
    Ok(gamma_grid(lo, hi, count)?)
}

fn failed_rows(gamma: f64, orders: &[usize], message: &str) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for pair in [Pair::X0, Pair::B] {
        for method in [Method::Bt, Method::Spa] {
            for &r in orders {
                rows.push(SweepRow {
                    pair,
                    method,
                    r,
                    gamma,
                    bound: f64::NAN,
                    measured_l2: f64::NAN,
                    output_l2: f64::NAN,
                    tie: false,
                    stable: false,
                    error: Some(message.to_string()),
                });
            }
        }
    }
    rows
}

pub fn sweep(args: &SweepArgs) -> CliResult {
    let started = Instant::now();
    let run_args = &args.run;
    let sys = load_system(&run_args.system)?;
    let gammas = match &args.gamma_range {
        Some(r) => parse_gamma_range(r)?,
        None => vec![run_args.gamma],
    };
    let (lo, hi) = parse_range_usize(&args.r_range)?;
    let orders: Vec<usize> = (lo..=hi.min(sys.order())).collect();
    if orders.is_empty() {
        return Err(CliError::usage("order range does not intersect 1..=n"));
    }
    if !(run_args.t_end > 0.0) || !(run_args.dt > 0.0) {
        return Err(CliError::usage("need T > 0 and dt > 0"));
    }
    let u = parse_input(&run_args.input, sys.inputs(), run_args.t_end)?;
    make_out(&run_args.out)?;
    let opts = options(run_args);
    let cache = GramianCache::with_dir(run_args.cache.clone().unwrap_or_else(|| run_args.out.join("gramian-cache")));
    let reference = Reference::simulate(&sys, &u, run_args.t_end, run_args.dt)?;

    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .clamp(1, gammas.len());
    let mut per_gamma: Vec<Option<Vec<SweepRow>>> = vec![None; gammas.len()];
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut per_gamma);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= gammas.len() {
                    break;
                }
                let g = gammas[i];
                let rows = prepare(&sys, g, &opts, Some(&cache))
                    .and_then(|bs| sweep_at_gamma(&bs, &reference, &u, &orders, &opts))
                    .unwrap_or_else(|e| failed_rows(g, &orders, &e.to_string()));
                results.lock().expect("results lock")[i] = Some(rows);
            });
        }
    });

    let mut csv = Csv::new(&[
        "pair", "method", "r", "gamma", "bound", "measured_l2", "ratio", "normalized_bound", "normalized_error", "tie", "stable",
        "error",
    ]);
    let mut failures = 0;
    for rows in per_gamma.into_iter().flatten() {
        for row in rows {
            failures += usize::from(row.error.is_some());
            csv.row(&[
                row.pair.to_string(),
                row.method.to_string(),
                row.r.to_string(),
                num(row.gamma),
                num(row.bound),
                num(row.measured_l2),
                num(row.ratio()),
                num(row.bound / row.output_l2),
                num(row.measured_l2 / row.output_l2),
                row.tie.to_string(),
                row.stable.to_string(),
                row.error.as_deref().unwrap_or("").replace(',', ";"),
            ]);
        }
    }
    csv.write(&run_args.out.join("sweep.csv"))?;
    let mut config = run_args_json(run_args);
    config["gamma_values"] = json!(gammas);
    config["orders"] = json!(orders);
    write_manifest(&run_args.out, "sweep", config, Some(&sys), started)?;
    if failures > 0 {
        eprintln!("{}", CliError::numerical(format!("{failures} sweep points failed")).to_json());
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn hsv(args: &RunArgs) -> CliResult {
    let started = Instant::now();
    let sys = load_system(&args.system)?;
    make_out(&args.out)?;
    let bs = prepare(&sys, args.gamma, &options(args), Some(&cache_for(args)))?;
    hsv_csv(bs.hsv(Pair::X0)).write(&args.out.join("hsv_x0.csv"))?;
    hsv_csv(bs.hsv(Pair::B)).write(&args.out.join("hsv_B.csv"))?;
    write_manifest(&args.out, "hsv", run_args_json(args), Some(&sys), started)?;
    Ok(ExitCode::SUCCESS)
}

pub fn check_stability(args: &StabilityArgs) -> CliResult {
    let sys = load_system(&args.system)?;
    let rep = check_generalized_stability(sys.a(), sys.n_mats(), args.gamma)?;
    let mut out = json!({ "gamma": args.gamma, "stable": rep.stable, "max_real": rep.max_real, "method": rep.method });
    if let Some(range) = &args.min_gamma {
        let (a, b) = range.split_once(':').ok_or_else(|| CliError::usage("expected --min-gamma lo:hi"))?;
        let lo = a.parse::<f64>().map_err(|_| CliError::usage("bad --min-gamma"))?;
        let hi = b.parse::<f64>().map_err(|_| CliError::usage("bad --min-gamma"))?;
        out["min_stabilizing_gamma"] = json!(min_stabilizing_gamma(sys.a(), sys.n_mats(), lo, hi, 1e-6)?);
    }
    println!("{}", serde_json::to_string_pretty(&out).unwrap_or_default());
    Ok(ExitCode::SUCCESS)
}

pub fn oracles(report_path: &PathBuf, fixtures: &Path) -> CliResult {
    if !fixtures.is_dir() {
        return Err(CliError::usage(format!("fixture directory not found: {}", fixtures.display())));
    }
    let report = bilinear_mor_oracles::run_oracles(fixtures).map_err(CliError::usage)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for o in &report.outcomes {
        println!(
            "{} {} {} deviation={} tolerance={}",
            if o.passed { "PASS" } else { "FAIL" },
            o.oracle,
            o.fixture,
            num(o.deviation),
            num(o.tolerance)
        );
    }
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        make_out(parent)?;
    }
    write_json(report_path, &report)?;
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(3) })
}
