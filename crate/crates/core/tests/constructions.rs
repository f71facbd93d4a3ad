use std::sync::Arc;

use avoidance::basic::{build_composite, build_composite_min_entropy, build_k3_markovian, build_k3_nonmarkovian};
use avoidance::combinators::{
    bernoulli_extract, bernoulli_thin, lift, lift_default, product, sum, ProductParams,
};
use avoidance::hypercube::{build_hypercube, wave_strip, HypercubeParams, Variant};
use avoidance::prob::ratio;
use avoidance::process::run;
use avoidance::verifier::*;
use avoidance::{CouplingProcess, Process, TurnMachine};

fn hc(d: u32, v: Variant) -> Process {
    Arc::new(build_hypercube(HypercubeParams::new(d, v)).unwrap())
}

#[test]
fn composite_two_by_three_is_faithful_markovian_and_stationary() {
    for looped in [false, true] {
        let c = build_composite(2, 3, looped).unwrap();
        assert!(check_faithfulness_exact(&c, 4).unwrap().passed());
        assert!(check_markov(&c, 4).unwrap().passed());
        assert!(check_stationary(&c).unwrap().passed());
        assert!(check_collisions_exhaustive(&c, 10_000).unwrap().passed());
    }
}

#[test]
fn k3_constructions() {
    let nm = build_k3_nonmarkovian(ratio(1, 3)).unwrap();
    assert!(check_faithfulness_exact(&nm, 5).unwrap().passed());
    let r = check_markov(&nm, 5).unwrap();
    assert!(!r.passed());
    assert!(r.witness.is_some());
    for s in [ratio(1, 2), ratio(3, 4)] {
        let m = build_k3_markovian(s).unwrap();
        assert!(check_faithfulness_exact(&m, 5).unwrap().passed());
        assert!(check_markov(&m, 5).unwrap().passed());
        assert!(check_stationary(&m).unwrap().passed());
    }
}

#[test]
fn stationary_solve_agrees_with_shipped_initial_laws() {
    let m = build_k3_markovian(ratio(3, 5)).unwrap();
    let solved = stationary_exact(&m, 1000).unwrap();
    assert_eq!(solved, m.initial().unwrap());
    let c = build_composite(2, 2, true).unwrap();
    assert_eq!(stationary_exact(&c, 1000).unwrap(), c.initial().unwrap());
}

#[test]
fn two_walker_couplings_are_time_reversible_where_symmetric() {
    for looped in [false, true] {
        let c = build_composite(2, 3, looped).unwrap();
        assert!(check_time_reversal(&c).unwrap().passed());
    }
    let k = build_k3_nonmarkovian(ratio(1, 3)).unwrap();
    assert!(check_time_reversal(&k).unwrap().passed());
}

#[test]
fn min_entropy_variant() {
    // With two-vertex clusters the copied shift is visible in the positions.
    let c = build_composite_min_entropy(2, 3).unwrap();
    assert!(check_faithfulness_exact(&c, 4).unwrap().passed());
    let e = entropy_rate(&c).unwrap();
    assert!(e.report.passed(), "{}", e.rate);
    assert_eq!(e.rate, avoidance::entropy::LogSum::log2(&ratio(5, 1)));

    let c = build_composite_min_entropy(3, 2).unwrap();
    assert!(!c.flags().markovian);
    assert!(check_faithfulness_exact(&c, 4).unwrap().passed());
    let r = check_markov(&c, 4).unwrap();
    assert!(!r.passed() && r.witness.is_some());
    assert!(entropy_rate(&c).unwrap().report.passed());
}

#[test]
fn composite_with_three_clusters_exceeds_single_walker_entropy() {
    let c = build_composite(3, 2, false).unwrap();
    let e = entropy_rate(&c).unwrap();
    assert!(!e.report.passed());
    assert_eq!(e.rate.compare(&e.single_walker), std::cmp::Ordering::Greater);
}

#[test]
fn hypercube_entropy_is_three_bits() {
    let h = build_hypercube(HypercubeParams::new(2, Variant::UnloopedPlus1)).unwrap();
    let e = entropy_rate(&h).unwrap();
    assert!(e.report.passed());
    assert_eq!(e.rate, avoidance::entropy::LogSum::bits(3));
}

#[test]
fn hypercube_waves_and_markov() {
    let h = build_hypercube(HypercubeParams::new(2, Variant::LoopedPlus1)).unwrap();
    assert!(check_waves(&h, 100_000).unwrap().passed());
    assert!(check_markov(&h, 3).unwrap().passed());
    assert!(check_faithfulness_exact(&h, 2).unwrap().passed());
}

#[test]
fn wave_strip_matches_unlooped_hypercube() {
    let s = wave_strip(hc(2, Variant::LoopedPlus1)).unwrap();
    let u = build_hypercube(HypercubeParams::new(2, Variant::UnloopedPlus1)).unwrap();
    assert!(check_equivalent(&s, &u, 100_000).unwrap().passed());
}

#[test]
fn bernoulli_chain_and_lift() {
    let base: Process = hc(1, Variant::LoopedPow2);
    let ext = Arc::new(bernoulli_extract(base.clone(), 1).unwrap());
    assert_eq!(ext.p().to_f64(), 0.25);
    assert!(check_bernoulli_exact(&ext, 4).unwrap().passed());
    assert!(check_one_avoidance(&ext, 100_000).unwrap().passed());
    let thin = Arc::new(bernoulli_thin(ext, ratio(1, 5)).unwrap());
    assert!(check_bernoulli_exact(&thin, 3).unwrap().passed());
    assert!(check_one_avoidance(&thin, 100_000).unwrap().passed());
    let l = lift(base.clone(), thin).unwrap();
    assert_eq!(l.graph().n, 5);
    assert!(check_faithfulness_exact(&l, 3).unwrap().passed());
    assert!(check_collisions_exhaustive(&l, 100_000).unwrap().passed());
    let d = lift_default(base).unwrap();
    assert!(check_faithfulness_exact(&d, 2).unwrap().passed());
}

#[test]
fn product_of_looped_couplings() {
    let p = product(hc(1, Variant::LoopedPow2), hc(1, Variant::LoopedPow2), ProductParams::default()).unwrap();
    assert_eq!(p.walkers(), 4);
    assert_eq!(p.graph().n, 16);
    assert!(p.flags().markovian);
    assert!(check_faithfulness_exact(&p, 2).unwrap().passed());
    assert!(check_markov(&p, 2).unwrap().passed());
    assert!(check_collisions_exhaustive(&p, 200_000).unwrap().passed());
    let log = run(&p, 20_000, 3).unwrap();
    assert!(check_collisions(&log).passed());
    assert!(check_faithfulness_empirical(&log, 1e-3).unwrap().passed());
}

#[test]
fn sum_of_couplings() {
    let s = sum(hc(1, Variant::LoopedPow2), hc(1, Variant::LoopedPlus1)).unwrap();
    assert_eq!(s.graph().n, 9);
    assert!(check_faithfulness_exact(&s, 2).unwrap().passed());
    assert!(check_markov(&s, 2).unwrap().passed());
    assert!(!s.flags().waves);
    assert!(!check_waves(&s, 100_000).unwrap().passed());
    assert!(check_stationary(&s).unwrap().passed());

    let w = sum(hc(1, Variant::LoopedPlus1), hc(1, Variant::LoopedPlus1)).unwrap();
    assert!(w.flags().waves);
    assert!(check_waves(&w, 100_000).unwrap().passed());
    assert!(check_faithfulness_exact(&w, 2).unwrap().passed());
    let u = sum(Arc::new(build_composite(2, 2, false).unwrap()), Arc::new(build_composite(2, 3, false).unwrap())).unwrap();
    assert!(check_faithfulness_exact(&u, 3).unwrap().passed());
    assert!(check_markov(&u, 3).unwrap().passed());
}

#[test]
fn empty_log_is_rejected() {
    let c = build_composite(2, 2, false).unwrap();
    let log = run(&c, 0, 0).unwrap();
    assert!(matches!(check_faithfulness_empirical(&log, 1e-3), Err(avoidance::Error::EmptyLog)));
    assert!(check_collisions(&log).passed());
}
