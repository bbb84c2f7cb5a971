use bilinear_mor::balancing::{balance_pair, Pair, DEFAULT_RANK_TOL};
use bilinear_mor::benchmarks::random_stable_system;
use bilinear_mor::bounds::{bound_b, InputNorms};
use bilinear_mor::gramians::{compute_p0, compute_q};
use bilinear_mor::model::{BilinearSystem, InputRule, InputSignal, Method};
use bilinear_mor::pipeline::{measure_b, measure_x0, prepare, run, PipelineOptions, Reference, RunConfig};
use bilinear_mor::sim::{simulate_full, simulate_homogeneous, simulate_inhomogeneous};
use bilinear_mor::Mat;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn similarity(sys: &BilinearSystem, seed: u64) -> BilinearSystem {
    let n = sys.order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Mat::identity(n, n) + Mat::from_fn(n, n, |_, _| rng.gen_range(-0.2..0.2));
    let ti = t.clone().try_inverse().unwrap();
    BilinearSystem::new(
        &t * sys.a() * &ti,
        &t * sys.b(),
        sys.c() * &ti,
        sys.n_mats().iter().map(|nk| &t * nk * &ti).collect(),
        &t * sys.x0(),
        sys.v0().clone(),
    )
    .unwrap()
}

fn method(spa: bool) -> Method {
    if spa {
        Method::Spa
    } else {
        Method::Bt
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn hsv_invariant_under_similarity(seed in 0u64..1000, n in 3usize..7, gamma in 1.0f64..3.0) {
        let sys = random_stable_system(n, 2, n, n, 0.5, seed).unwrap();
        let other = similarity(&sys, seed + 1);
        let hsv = |s: &BilinearSystem| {
            let (p, _) = compute_p0(s, gamma, &Default::default()).unwrap();
            let (q, _) = compute_q(s, gamma, &Default::default()).unwrap();
            balance_pair(&p, &q, DEFAULT_RANK_TOL, Pair::X0).unwrap().hsv
        };
        let (h1, h2) = (hsv(&sys), hsv(&other));
        for (a, b) in h1.iter().zip(&h2) {
            prop_assert!((a - b).abs() <= 1e-7 * h1[0], "{a} vs {b}");
        }
    }

    #[test]
    fn balancing_diagonalizes_both_gramians(seed in 0u64..1000, n in 2usize..7) {
        let sys = random_stable_system(n, 1, n, n, 0.5, seed).unwrap();
        let (p, _) = compute_p0(&sys, 1.5, &Default::default()).unwrap();
        let (q, _) = compute_q(&sys, 1.5, &Default::default()).unwrap();
        let bal = balance_pair(&p, &q, DEFAULT_RANK_TOL, Pair::X0).unwrap();
        let theta = Mat::from_diagonal(&DVector::from_column_slice(&bal.hsv));
        let sp = &bal.s * &p * bal.s.transpose();
        let sq = bal.s_inv.transpose() * &q * &bal.s_inv;
        let tol = 1e-8 * bal.hsv[0];
        prop_assert!(max_abs(&(sp - &theta)) <= tol);
        prop_assert!(max_abs(&(sq - &theta)) <= tol);
        prop_assert!(max_abs(&(&bal.s * &bal.s_inv - Mat::identity(n, n))) <= 1e-8);
        prop_assert!(bal.hsv.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bounds_dominate_measured_errors(seed in 0u64..1000, r in 1usize..6, gamma in 1.0f64..3.0, spa_x0: bool, spa_b: bool) {
        let sys = random_stable_system(6, 2, 1, 2, 0.5, seed).unwrap();
        let u = InputSignal::exp_cos(2, 1.0);
        let cfg = RunConfig { gamma, r_x0: r, r_b: r, method_x0: method(spa_x0), method_b: method(spa_b), t_end: 1.0, dt: 1e-3 };
        let res = run(&sys, &u, &cfg, &PipelineOptions::default(), None).unwrap();
        let reference = Reference::simulate(&sys, &u, 1.0, 1e-3).unwrap();
        let (_, e_x0) = measure_x0(&reference, &res.x0.rom, &u, sys.v0()).unwrap();
        let (_, e_b) = measure_b(&reference, &res.b.rom, &u).unwrap();
        prop_assert!(e_x0 <= res.x0.bound.bound, "x0 {e_x0} > {}", res.x0.bound.bound);
        prop_assert!(e_b <= res.b.bound.bound, "B {e_b} > {}", res.b.bound.bound);
        prop_assert!(res.total_bound.bound >= res.x0.bound.bound.max(res.b.bound.bound));
    }

    #[test]
    fn full_order_reduction_is_exact(seed in 0u64..1000, spa: bool) {
        let sys = random_stable_system(5, 2, 1, 2, 0.5, seed).unwrap();
        let u = InputSignal::exp_cos(2, 1.0);
        let cfg = RunConfig { gamma: 1.5, r_x0: 5, r_b: 5, method_x0: method(spa), method_b: method(spa), t_end: 1.0, dt: 1e-3 };
        let res = run(&sys, &u, &cfg, &PipelineOptions::default(), None).unwrap();
        let reference = Reference::simulate(&sys, &u, 1.0, 1e-3).unwrap();
        let (_, e_x0) = measure_x0(&reference, &res.x0.rom, &u, sys.v0()).unwrap();
        let (_, e_b) = measure_b(&reference, &res.b.rom, &u).unwrap();
        prop_assert!(e_x0 <= 1e-9 * reference.homogeneous.l2_norm().max(1.0));
        prop_assert!(e_b <= 1e-9 * reference.inhomogeneous.l2_norm().max(1.0));
        prop_assert_eq!(res.x0.bound.bound, 0.0);
        prop_assert_eq!(res.b.bound.bound, 0.0);
    }

    #[test]
    fn b_bound_non_increasing_in_order(seed in 0u64..1000) {
        let sys = random_stable_system(6, 2, 1, 2, 0.5, seed).unwrap();
        let bs = prepare(&sys, 2.0, &PipelineOptions::default(), None).unwrap();
        let norms = InputNorms::compute(&InputSignal::exp_cos(2, 1.0), 2.0, 1.0, 1e-3).unwrap();
        let bounds: Vec<f64> = (0..=6).map(|r| bound_b(bs.hsv(Pair::B), r, None, &norms).unwrap().bound).collect();
        prop_assert!(bounds.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(bounds[6], 0.0);
    }

    #[test]
    fn subsystems_superpose(seed in 0u64..1000) {
        let sys = random_stable_system(5, 2, 2, 2, 0.5, seed).unwrap();
        let u = InputSignal::exp_cos(2, 1.0);
        let full = simulate_full(&sys, &u, sys.v0(), 1.0, 1e-3).unwrap();
        let (hom, inh) = sys.split();
        let sum = simulate_homogeneous(&hom, &u, sys.v0(), 1.0, 1e-3)
            .unwrap()
            .add(&simulate_inhomogeneous(&inh, &u, 1.0, 1e-3).unwrap())
            .unwrap();
        let worst = (0..full.len()).map(|i| (full.output(i) - sum.output(i)).amax()).fold(0.0, f64::max);
        prop_assert!(worst <= 1e-12, "{worst}");
    }

    #[test]
    fn spa_preserves_static_gain_of_linear_systems(seed in 0u64..1000, r in 1usize..5) {
        let sys = random_stable_system(5, 1, 1, 1, 0.0, seed).unwrap();
        let bs = prepare(&sys, 1.0, &PipelineOptions::default(), None).unwrap();
        let part = bs.partition(Pair::B, r).unwrap();
        let rom = bilinear_mor::reduction::reduce_b(&part, Method::Spa).unwrap();
        let gain = |a: &Mat, b: &Mat, c: &Mat| -(c * a.clone().try_inverse().unwrap() * b);
        let full = gain(sys.a(), sys.b(), sys.c());
        let reduced = gain(&rom.a, &rom.b, &rom.c) + &rom.d;
        let reduced = reduced.rows(0, full.nrows()).into_owned();
        prop_assert!(max_abs(&(&full - &reduced)) <= 1e-8 * max_abs(&full).max(1e-300), "{full} vs {reduced}");
    }
}

/// Classical RK4: halving the step cuts the error by roughly 16.
#[test]
fn integrator_is_fourth_order() {
    let one = |v: f64| Mat::from_element(1, 1, v);
    let sys = BilinearSystem::new(one(-1.0), one(0.0), one(1.0), vec![one(0.5)], one(1.0), DVector::from_element(1, 1.0)).unwrap();
    let u = InputSignal::new(InputRule::Constant { values: vec![1.0] }, 1, 2.0).unwrap();
    let exact = (-0.5f64 * 2.0).exp();
    let err = |dt: f64| {
        let y = simulate_full(&sys, &u, sys.v0(), 2.0, dt).unwrap();
        (y.output(y.len() - 1)[0] - exact).abs()
    };
    let (e1, e2) = (err(0.1), err(0.05));
    let ratio = e1 / e2;
    assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
}
