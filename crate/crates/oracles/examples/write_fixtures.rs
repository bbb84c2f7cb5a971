//! Regenerates the shipped fixture files: `cargo run -p bilinear-mor-oracles --example write_fixtures -- DIR`.

use bilinear_mor::benchmarks::{heat2d, random_stable_system, Heat2dConfig};
use bilinear_mor::model::{BilinearSystem, SystemJson};
use bilinear_mor::Mat;
use bilinear_mor_oracles::fixtures::{Expected, Fixture};
use nalgebra::DVector;

fn expected(quantity: &str, value: f64, origin: &str) -> Expected {
    Expected { quantity: quantity.into(), value, tolerance: 1e-10, origin: origin.into() }
}

fn fixture(name: &str, description: &str, gamma: f64, sys: &BilinearSystem, expected: Vec<Expected>, skip: &[&str]) -> Fixture {
    Fixture {
        name: name.into(),
        description: description.into(),
        gamma,
        system: SystemJson::from_system(sys),
        expected,
        skip: skip.iter().map(|s| s.to_string()).collect(),
    }
}

fn main() {
    let dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir).unwrap();
    let s = |v: f64| Mat::from_element(1, 1, v);
    let mut out = Vec::new();

    // A = −1, N = 1, γ = √2: 𝓛 acts as multiplication by −3/2
    let scalar = BilinearSystem::new(s(-1.0), s(1.0), s(1.0), vec![s(1.0)], s(1.0), DVector::from_element(1, 1.0)).unwrap();
    out.push(fixture(
        "scalar",
        "scalar system, P0 = Q = HSV = 2/3",
        2f64.sqrt(),
        &scalar,
        vec![
            expected("p0[0,0]", 2.0 / 3.0, "closed-form"),
            expected("q[0,0]", 2.0 / 3.0, "closed-form"),
            expected("hsv_x0[0]", 2.0 / 3.0, "closed-form"),
            expected("y0[0]", 1.0, "hand-computed"),
        ],
        &[],
    ));

    // diagonal data decouple entrywise: p_ij = x_i x_j / (−a_i − a_j − n_i n_j / γ²)
    let (a, nd, x, c) = ([-1.0, -2.0], [0.5, 1.0], [1.0, 1.0], [1.0, 2.0]);
    let diag = |v: [f64; 2]| Mat::from_diagonal(&DVector::from_column_slice(&v));
    let sys2 = BilinearSystem::new(
        diag(a),
        Mat::from_row_slice(2, 1, &[1.0, 0.0]),
        Mat::from_row_slice(1, 2, &c),
        vec![diag(nd)],
        Mat::from_row_slice(2, 1, &x),
        DVector::from_element(1, 0.5),
    )
    .unwrap();
    let mut exp2 = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            let den = -a[i] - a[j] - nd[i] * nd[j];
            exp2.push(expected(&format!("p0[{i},{j}]"), x[i] * x[j] / den, "closed-form"));
            exp2.push(expected(&format!("q[{i},{j}]"), c[i] * c[j] / den, "closed-form"));
        }
    }
    exp2.push(expected("y0[0]", 0.5 * 3.0, "hand-computed"));
    out.push(fixture("diag2", "diagonal 2x2 system at gamma = 1", 1.0, &sys2, exp2, &[]));

    let heat = heat2d(&Heat2dConfig { k: 2, ..Default::default() }).unwrap();
    out.push(fixture(
        "heat2d-k2",
        "heat benchmark on a 2x2 grid (rank-deficient Gramians by symmetry)",
        2.0,
        &heat,
        vec![expected("y0[0]", 0.1, "benchmark-data")],
        &["hsv-eigen"],
    ));

    for seed in 1..=3u64 {
        let sys = random_stable_system(6, 2, 1, 2, 0.5, seed).unwrap();
        out.push(fixture(&format!("random6-seed{seed}"), "seeded random stable 6x6 system", 1.0, &sys, vec![], &[]));
    }
    for fx in out {
        let path = dir.join(format!("{}.json", fx.name));
        std::fs::write(&path, serde_json::to_string_pretty(&fx).unwrap() + "\n").unwrap();
        println!("wrote {}", path.display());
    }
}
