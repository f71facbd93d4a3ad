use std::sync::Arc;

use proptest::prelude::*;

use avoidance::basic::{build_composite, build_k3_markovian, build_k3_nonmarkovian};
use avoidance::combinators::{bernoulli_extract, bernoulli_thin, product, sum, ProductParams};
use avoidance::entropy::{shannon, LogSum};
use avoidance::hypercube::{build_hypercube, HypercubeParams, Variant};
use avoidance::planner::{evaluate, plan, Plan};
use avoidance::prob::ratio;
use avoidance::process::run;
use avoidance::verifier::*;
use avoidance::{CouplingProcess, Dist, Process, Prob, TrajectoryLog};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::UnloopedPlus1), Just(Variant::LoopedPow2), Just(Variant::LoopedPlus1)]
}

/// Walker subsets of a `2^d` hypercube that contain `0` and `ω`.
fn hypercube_with_walkers() -> impl Strategy<Value = (u32, Variant, Vec<usize>)> {
    (1u32..=3, variant()).prop_flat_map(|(d, v)| {
        let omega = (1usize << d) - 1;
        proptest::collection::vec(any::<bool>(), omega + 1).prop_map(move |mask| {
            let walkers: Vec<usize> =
                (0..=omega).filter(|&j| j == 0 || j == omega || mask[j]).collect();
            (d, v, walkers)
        })
    })
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn field_arithmetic_round_trips(a in 1i64..50, b in 1i64..50, c in 0i64..20, d in 2u64..30) {
        let x = Prob::new(ratio(a, b), ratio(c, b + 1), d);
        let y = Prob::new(ratio(b, a + 7), ratio(1, a), d);
        let prod = &x * &y;
        prop_assert_eq!(&(prod / y.clone()), &x);
        prop_assert_eq!((&x + &y) - y.clone(), x.clone());
        prop_assert_eq!(x.norm(), (&x * &x.conjugate()).as_rational().unwrap().clone());
        prop_assert!((x.to_f64() - (a as f64 / b as f64 + c as f64 / (b + 1) as f64 * (d as f64).sqrt())).abs() < 1e-9);
    }

    #[test]
    fn bind_preserves_total_mass(n in 1usize..12, m in 1usize..6) {
        let d = Dist::uniform(0..n);
        let e = d.bind(|&x| Ok::<_, avoidance::Error>(Dist::uniform(x..x + m))).unwrap();
        prop_assert!(e.total().is_one());
    }

    #[test]
    fn uniform_entropy_is_log_of_support(m in 1i64..200) {
        let w = vec![ratio(1, m); m as usize];
        prop_assert_eq!(shannon(&w), LogSum::log2(&ratio(m, 1)));
    }

    #[test]
    fn hypercube_subsets_avoid_and_are_faithful((d, v, walkers) in hypercube_with_walkers()) {
        let h = build_hypercube(HypercubeParams::new(d, v).with_walkers(walkers)).unwrap();
        prop_assert!(check_collisions_exhaustive(&h, 500_000).unwrap().passed());
        prop_assert!(check_faithfulness_exact(&h, 1).unwrap().passed());
        prop_assert!(check_stationary(&h).unwrap().passed());
        if h.flags().markovian {
            prop_assert!(check_markov(&h, 2).unwrap().passed());
        }
        if v.looped() {
            prop_assert_eq!(check_waves(&h, 500_000).unwrap().passed(), h.flags().waves);
        }
    }

    #[test]
    fn composites_are_faithful(a in 2usize..5, b in 2usize..5, looped in any::<bool>()) {
        let c = build_composite(a, b, looped).unwrap();
        prop_assert!(check_faithfulness_exact(&c, 2).unwrap().passed());
        prop_assert!(check_collisions_exhaustive(&c, 100_000).unwrap().passed());
        prop_assert!(check_markov(&c, 2).unwrap().passed());
    }

    #[test]
    fn k3_markovian_is_faithful_for_any_feasible_s(num in 50i64..100) {
        let s = ratio(num, 100);
        let k = build_k3_markovian(s).unwrap();
        prop_assert!(check_faithfulness_exact(&k, 3).unwrap().passed());
        prop_assert!(check_markov(&k, 3).unwrap().passed());
    }

    #[test]
    fn k3_nonmarkovian_is_faithful(num in 34i64..100) {
        let k = build_k3_nonmarkovian(ratio(num, 100)).unwrap();
        prop_assert!(check_faithfulness_exact(&k, 3).unwrap().passed());
    }

    #[test]
    fn thinning_keeps_independence(q in 1i64..5) {
        let base: Process = Arc::new(build_hypercube(HypercubeParams::new(1, Variant::LoopedPow2)).unwrap());
        let ext = Arc::new(bernoulli_extract(base, 0).unwrap());
        let thin = bernoulli_thin(ext, ratio(q, 20)).unwrap();
        prop_assert!(check_bernoulli_exact(&thin, 2).unwrap().passed());
        prop_assert!(check_one_avoidance(&thin, 100_000).unwrap().passed());
    }

    #[test]
    fn products_with_any_valid_keep_avoid(extra in proptest::collection::vec(any::<bool>(), 1)) {
        let k4 = || -> Process { Arc::new(build_hypercube(HypercubeParams::new(1, Variant::LoopedPow2)).unwrap()) };
        let mut keep = vec![(0, 0), (0, 1), (1, 0)];
        if extra[0] {
            keep.push((1, 1));
        }
        let p = product(k4(), k4(), ProductParams { keep: Some(keep), require_markovian: true }).unwrap();
        prop_assert!(p.flags().markovian);
        prop_assert!(check_faithfulness_exact(&p, 1).unwrap().passed());
        prop_assert!(check_markov(&p, 1).unwrap().passed());
        prop_assert!(check_collisions_exhaustive(&p, 500_000).unwrap().passed());
    }

    #[test]
    fn sums_of_composites_avoid(a in 2usize..4, b in 2usize..4, looped in any::<bool>()) {
        let left: Process = Arc::new(build_composite(a, b, looped).unwrap());
        let right: Process = Arc::new(build_composite(2, 2, looped).unwrap());
        let s = sum(left, right).unwrap();
        prop_assert!(check_collisions_exhaustive(&s, 200_000).unwrap().passed());
        prop_assert!(check_faithfulness_exact(&s, 2).unwrap().passed());
        prop_assert!(check_stationary(&s).unwrap().passed());
    }
}

proptest! {
    #![proptest_config(config(40))]

    #[test]
    fn emitted_plans_are_sound(n in 4usize..200, k in 2usize..6, looped in any::<bool>()) {
        if let Ok(p) = plan(n, k, looped) {
            prop_assert_eq!((p.annotations.n, p.annotations.k, p.annotations.looped), (n, k, looped));
            prop_assert!(p.annotations.markovian);
            let built = evaluate(&p).unwrap();
            prop_assert_eq!(built.graph().n, n);
            prop_assert_eq!(built.walkers(), k);
            let back = Plan::from_json(&p.to_json()).unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn trajectory_logs_round_trip(rounds in 0usize..40, seed in any::<u64>()) {
        let c = build_composite(2, 3, true).unwrap();
        let log = run(&c, rounds, seed).unwrap();
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let back = TrajectoryLog::read_jsonl(&buf[..]).unwrap();
        prop_assert_eq!(back.rounds(), rounds);
        for t in 0..=rounds {
            prop_assert_eq!(back.positions_at(t), log.positions_at(t));
        }
        prop_assert!(check_collisions(&back).passed());
    }
}
