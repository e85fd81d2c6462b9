//! Invariants checked over random systems, gains, graphs and noise.

mod common;

use dio_core::error_analysis::{collective_error, domination_violation, inf_norm, noise_injection, propagate_error};
use dio_core::harness::pipeline::{run_observer, synthesize, ObserverRun, Synthesis, DOMINATION_SLACK};
use dio_core::harness::random::{random_scenario, GainMode, RandomSpec};
use dio_core::harness::simulate::{simulate_plant, Trajectory};
use dio_core::harness::trace::{trace_rows, write_csv};
use dio_core::harness::{bundled, run_pipeline, PipelineOptions, Scenario};
use dio_core::interval::{interval_image, intersect, sign_split, IntervalVector};
use dio_core::observer::ObserverGains;
use dio_core::stability::{assemble_ahat, lower_index, upper_index};
use dio_core::synthesis::{row_l1_norms, STRICT_CONTRACTION};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(max_dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        prop::collection::vec(-5.0..5.0f64, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
    })
}

fn interval(len: usize) -> impl Strategy<Value = IntervalVector> {
    prop::collection::vec((-5.0..5.0f64, 0.0..3.0f64), len).prop_map(|v| {
        let lo: Vec<f64> = v.iter().map(|p| p.0).collect();
        let hi: Vec<f64> = v.iter().map(|p| p.0 + p.1).collect();
        IntervalVector::from_slices(&lo, &hi).unwrap()
    })
}

/// Matrix, box, and a point of the box given as fractions along each side.
fn image_case(max_dim: usize) -> impl Strategy<Value = (DMatrix<f64>, IntervalVector, Vec<f64>)> {
    matrix(max_dim).prop_flat_map(|a| {
        let n = a.ncols();
        (Just(a), interval(n), prop::collection::vec(0.0..=1.0f64, n))
    })
}

fn intervals3(max_len: usize) -> impl Strategy<Value = (IntervalVector, IntervalVector, IntervalVector)> {
    (1..=max_len).prop_flat_map(|n| {
        // a shared point keeps every intersection nonempty
        (interval(n), interval(n), interval(n), prop::collection::vec(-1.0..1.0f64, n)).prop_map(|(a, b, c, p)| {
            let shift = |iv: IntervalVector| {
                let p = DVector::from_vec(p.clone());
                let lo = iv.lower().zip_map(&p, |l, x| l.min(x));
                let hi = iv.upper().zip_map(&p, |u, x| u.max(x));
                IntervalVector::new(lo, hi).unwrap()
            };
            (shift(a), shift(b), shift(c))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn image_contains_images_of_members((a, iv, t) in image_case(6)) {
        let x = DVector::from_fn(iv.len(), |j, _| iv.lower()[j] + t[j] * (iv.upper()[j] - iv.lower()[j]));
        let x = x.zip_map(iv.upper(), f64::min);
        let img = interval_image(&a, &iv).unwrap();
        prop_assert!(img.contains(&(&a * &x)).unwrap());
    }

    #[test]
    fn image_bounds_attained_at_vertices((a, iv, _) in image_case(5)) {
        let n = iv.len();
        let img = interval_image(&a, &iv).unwrap();
        let mut lo = DVector::from_element(a.nrows(), f64::INFINITY);
        let mut hi = DVector::from_element(a.nrows(), f64::NEG_INFINITY);
        for mask in 0..(1u32 << n) {
            let v = DVector::from_fn(n, |j, _| if mask >> j & 1 == 1 { iv.upper()[j] } else { iv.lower()[j] });
            let y = &a * v;
            lo = lo.zip_map(&y, f64::min);
            hi = hi.zip_map(&y, f64::max);
        }
        for r in 0..a.nrows() {
            prop_assert!((img.lower()[r] - lo[r]).abs() <= 1e-9 * lo[r].abs().max(1.0));
            prop_assert!((img.upper()[r] - hi[r]).abs() <= 1e-9 * hi[r].abs().max(1.0));
        }
    }

    #[test]
    fn sign_split_reconstructs(a in matrix(6)) {
        let s = sign_split(&a).unwrap();
        prop_assert_eq!(&s.plus - &s.minus, a.clone());
        prop_assert!(s.plus.iter().zip(s.minus.iter()).all(|(p, m)| *p >= 0.0 && *m >= 0.0 && p * m == 0.0));
        prop_assert_eq!(s.abs(), a.abs());
    }

    #[test]
    fn intersect_laws((a, b, c) in intervals3(5)) {
        let ab = intersect(&a, &b).unwrap();
        prop_assert_eq!(&ab, &intersect(&b, &a).unwrap());
        prop_assert_eq!(intersect(&ab, &c).unwrap(), intersect(&a, &intersect(&b, &c).unwrap()).unwrap());
        prop_assert_eq!(&intersect(&a, &a).unwrap(), &a);
        let (w, wa, wb) = (ab.width(), a.width(), b.width());
        prop_assert!((0..w.len()).all(|s| w[s] <= wa[s].min(wb[s])));
    }
}

struct Setup {
    scenario: Scenario,
    synthesis: Synthesis,
    trajectory: Trajectory,
}

fn setup(rng: &mut ChaCha8Rng, spec: &RandomSpec) -> Setup {
    let scenario = random_scenario(rng, spec).unwrap();
    let synthesis = synthesize(&scenario).unwrap();
    let trajectory = simulate_plant(&scenario, scenario.seed).unwrap();
    Setup {
        scenario,
        synthesis,
        trajectory,
    }
}

fn run(s: &Setup, d: usize) -> ObserverRun {
    run_observer(&s.scenario, &s.synthesis.gains, &s.trajectory, d).unwrap()
}

fn spec(gains: GainMode, noiseless: bool, horizon: usize) -> RandomSpec {
    RandomSpec {
        gains,
        noiseless,
        horizon,
        ..RandomSpec::default()
    }
}

#[test]
fn framers_contain_the_state_for_any_gains() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..120 {
        let gains = if case % 2 == 0 { GainMode::Designed } else { GainMode::Random { scale: 3.0 } };
        let s = setup(&mut rng, &spec(gains, false, 40));
        let d = case % 4;
        let r = run(&s, d);
        for (k, framers) in r.framers.iter().enumerate() {
            for (i, f) in framers.iter().enumerate() {
                assert!(f.contains(&s.trajectory.x[k]).unwrap(), "case {case}, k {k}, agent {i}");
            }
        }
    }
}

#[test]
fn more_rounds_never_widen() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for case in 0..60 {
        let gains = if case % 3 == 0 { GainMode::Random { scale: 2.0 } } else { GainMode::Designed };
        let s = setup(&mut rng, &spec(gains, false, 30));
        let runs: Vec<ObserverRun> = (0..4).map(|d| run(&s, d)).collect();
        for pair in runs.windows(2) {
            for (fa, fb) in pair[0].framers.iter().zip(&pair[1].framers) {
                for (a, b) in fa.iter().zip(fb) {
                    // fewer rounds give a superset, hence at least the width
                    assert!((0..a.len()).all(|s| b.lower()[s] >= a.lower()[s] && b.upper()[s] <= a.upper()[s]));
                }
            }
        }
    }
}

/// Max over `k` of `‖e_{k+1} − H_k(Â e_k + W_k + V_k)‖∞`, with or without the
/// noise term.
fn replay_deviation(s: &Setup, r: &ObserverRun, with_noise: bool) -> f64 {
    let plant = &s.scenario.plant;
    let ahat = assemble_ahat(&s.synthesis.gains).unwrap();
    let obs = ObserverGains::for_plant(plant, &s.synthesis.gains).unwrap();
    let mut worst = 0.0f64;
    for k in 0..s.trajectory.horizon() {
        let e = collective_error(&r.framers[k], &s.trajectory.x[k]).unwrap();
        let e1 = collective_error(&r.framers[k + 1], &s.trajectory.x[k + 1]).unwrap();
        let nz = with_noise.then(|| {
            noise_injection(
                &obs,
                &s.trajectory.w[k],
                &plant.w_bounds,
                &s.trajectory.v[k],
                &s.trajectory.v[k + 1],
                &plant.v_bounds,
            )
            .unwrap()
        });
        let pred = propagate_error(&r.selections[k], &ahat, &e, nz.as_ref());
        let scale = inf_norm(&e).max(1.0);
        worst = worst.max(inf_norm(&(e1 - pred)) / scale);
    }
    worst
}

#[test]
fn noiseless_error_follows_realized_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for case in 0..60 {
        let gains = if case % 2 == 0 { GainMode::Designed } else { GainMode::Random { scale: 1.0 } };
        let s = setup(&mut rng, &spec(gains, true, 40));
        let r = run(&s, 1 + case % 3);
        let dev = replay_deviation(&s, &r, false);
        assert!(dev < 1e-10, "case {case}: {dev}");
    }
}

#[test]
fn noisy_error_follows_injection() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for case in 0..60 {
        let s = setup(&mut rng, &spec(GainMode::Designed, false, 40));
        let r = run(&s, case % 3);
        let dev = replay_deviation(&s, &r, true);
        assert!(dev < 1e-10, "case {case}: {dev}");
    }
}

#[test]
fn equivalent_form_holds_along_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..50 {
        let s = setup(&mut rng, &spec(GainMode::Random { scale: 2.0 }, false, 30));
        let p = &s.scenario.plant;
        let t = &s.trajectory;
        for (i, g) in s.synthesis.gains.iter().enumerate() {
            for k in 0..t.horizon() {
                let rhs = &g.a_tilde * &t.x[k]
                    + &g.t * &p.b * &t.w[k]
                    + &g.gamma * (&t.y[k + 1][i] - &p.d[i] * &t.v[k + 1][i])
                    + &g.l * (&t.y[k][i] - &p.d[i] * &t.v[k][i]);
                assert!(inf_norm(&(&t.x[k + 1] - rhs)) < 1e-10 * inf_norm(&t.x[k + 1]).max(1.0));
            }
        }
    }
}

#[test]
fn collective_rows_keep_local_row_norms() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for case in 0..50 {
        let gains = if case % 2 == 0 { GainMode::Designed } else { GainMode::Random { scale: 2.0 } };
        let s = setup(&mut rng, &spec(gains, false, 1));
        let ahat = assemble_ahat(&s.synthesis.gains).unwrap();
        let norms = row_l1_norms(ahat.matrix());
        let n = ahat.n();
        for (i, g) in s.synthesis.gains.iter().enumerate() {
            let local = row_l1_norms(&g.a_tilde);
            for (st, want) in local.iter().enumerate() {
                assert!((norms[lower_index(n, i, st)] - want).abs() < 1e-12);
                assert!((norms[upper_index(n, i, st)] - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn selections_stay_within_reach() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for case in 0..40 {
        let s = setup(&mut rng, &spec(GainMode::Designed, false, 20));
        let d = case % 4;
        let r = run(&s, d);
        for sel in &r.selections {
            sel.validate(&s.scenario.graph, d).unwrap();
        }
        let out = run_pipeline(&s.scenario, &PipelineOptions { d: Some(d.max(1)), ..PipelineOptions::default() }).unwrap();
        out.certificate.assignment.validate(&s.scenario.graph, d.max(1)).unwrap();
    }
}

/// Centralized reference for the detectability check: success iff every
/// `(i, s)` has a contracting row within reach, and `d*` is the largest hop
/// count to the nearest one (at least 1).
#[test]
fn detectability_matches_global_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let mut successes = 0;
    for case in 0..150 {
        let gains = if case % 3 == 2 { GainMode::Random { scale: 0.5 } } else { GainMode::Designed };
        let s = setup(&mut rng, &RandomSpec { max_agents: 5, ..spec(gains, false, 1) });
        let g = &s.scenario.graph;
        let n = s.scenario.plant.n();
        let agents = g.node_count();
        let mut success = true;
        let mut d_star = 1;
        for i in 0..agents {
            let dist = g.distances_from(i).unwrap();
            for st in 0..n {
                let best = (0..agents)
                    .filter(|&j| row_l1_norms(&s.synthesis.gains[j].a_tilde)[st] <= STRICT_CONTRACTION)
                    .filter_map(|j| dist[j])
                    .min();
                match best {
                    Some(h) => d_star = d_star.max(h),
                    None => success = false,
                }
            }
        }
        let cp = &s.synthesis.cpdn;
        assert_eq!(cp.success, success, "case {case}");
        if success {
            successes += 1;
            assert_eq!(cp.d_star, d_star, "case {case}");
            for i in 0..agents {
                let hood = g.dhop(i, cp.d_star).unwrap();
                for st in 0..n {
                    assert!(hood.contains(&cp.stabilizer_of(i, st).unwrap()));
                }
            }
        } else {
            assert_eq!(cp.d_star, g.diameter().unwrap() + 1);
        }
    }
    assert!(successes > 20, "too few successful cases ({successes}) to be informative");
}

#[test]
fn errors_dominated_by_comparison_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for case in 0..40 {
        let sc = random_scenario(&mut rng, &spec(GainMode::Designed, false, 60)).unwrap();
        let out = run_pipeline(&sc, &PipelineOptions::default()).unwrap();
        let trace = out.error_trace.as_ref().unwrap();
        assert!(trace.errors.iter().all(|e| e.iter().all(|v| *v >= 0.0)), "case {case}");
        assert_eq!(domination_violation(&trace.comparison, &trace.errors, DOMINATION_SLACK), None, "case {case}");
        let summary = out.report.errors.as_ref().unwrap();
        if let Some(bound) = summary.iss_bound {
            assert!(summary.max_error <= bound * (1.0 + 1e-9), "case {case}: {} > {bound}", summary.max_error);
        }
    }
}

#[test]
fn infnorm_certificate_bounds_noiseless_decay() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut checked = 0;
    for _ in 0..80 {
        let sc = random_scenario(&mut rng, &spec(GainMode::Designed, true, 60)).unwrap();
        let out = run_pipeline(&sc, &PipelineOptions::default()).unwrap();
        let cert = &out.certificate;
        if cert.kind != dio_core::CertificateKind::Infnorm || !cert.stable {
            continue;
        }
        checked += 1;
        let errors = &out.error_trace.as_ref().unwrap().errors;
        let e0 = inf_norm(&errors[0]);
        for (k, e) in errors.iter().enumerate() {
            // plus the rounding margins of the observer, which scale with the state
            let floor = 1e-12 * (0..=k).map(|j| inf_norm(&out.trajectory.x[j])).fold(e0, f64::max);
            assert!(
                inf_norm(e) <= cert.value.powi(k as i32) * e0 * (1.0 + 1e-9) + floor,
                "k {k}: {} vs {} (value {}, e0 {e0}, d {})",
                inf_norm(e),
                cert.value.powi(k as i32) * e0,
                cert.value,
                out.report.d
            );
        }
    }
    assert!(checked > 10);
}

#[test]
fn correct_on_random_pipelines() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..100 {
        let sc = random_scenario(&mut rng, &spec(GainMode::Designed, false, 50)).unwrap();
        let out = run_pipeline(&sc, &PipelineOptions { baseline: true, analyze_errors: false, ..PipelineOptions::default() }).unwrap();
        assert!(out.report.dio.all_correct(), "case {case}");
        assert!(out.report.baseline.as_ref().unwrap().all_correct(), "case {case}");
        assert!(out.report.dio.correctness.iter().all(|c| *c == 1.0));
    }
}

#[test]
fn csv_is_reproducible() {
    for (_, text) in bundled::ALL {
        let sc = dio_core::harness::parse_scenario(text).unwrap();
        let sc = Scenario { horizon: sc.horizon.min(300), ..sc };
        let csv = || {
            let out = run_pipeline(&sc, &PipelineOptions { analyze_errors: false, ..PipelineOptions::default() }).unwrap();
            let mut buf = Vec::new();
            write_csv(&mut buf, &trace_rows(&out.dio, &out.trajectory)).unwrap();
            buf
        };
        assert_eq!(csv(), csv());
    }
}

/// Agents that measure nothing run the plant open loop on intervals.
#[test]
fn blind_agents_propagate_open_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        let mut sc = random_scenario(&mut rng, &spec(GainMode::Designed, false, 25)).unwrap();
        for c in sc.plant.c.iter_mut() {
            c.fill(0.0);
        }
        let out = run_pipeline(&sc, &PipelineOptions { analyze_errors: false, ..PipelineOptions::default() }).unwrap();
        assert!(out.report.dio.all_correct());
        let p = &sc.plant;
        let mut reference = p.x0_bounds.clone();
        for k in 0..sc.horizon {
            let ax = interval_image(&p.a, &reference).unwrap();
            let bw = interval_image(&p.b, &p.w_bounds).unwrap();
            reference = IntervalVector::new(ax.lower() + bw.lower(), ax.upper() + bw.upper()).unwrap();
            for f in &out.dio.framers[k + 1] {
                let tol = 1e-9 * inf_norm(reference.upper()).max(inf_norm(reference.lower())).max(1.0);
                assert!(inf_norm(&(f.lower() - reference.lower())) <= tol);
                assert!(inf_norm(&(f.upper() - reference.upper())) <= tol);
            }
        }
    }
}
