//! End-to-end acceptance run: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use avoidance::basic::{
    build_composite, build_composite_min_entropy, build_composite_with, build_k3_markovian, build_k3_nonmarkovian,
    CompositeOptions,
};
use avoidance::combinators::{bernoulli_extract, bernoulli_thin, bernoulli_thin_with_coin, lift, product, ProductParams};
use avoidance::entropy::LogSum;
use avoidance::hypercube::{build_hypercube, wave_strip, HypercubeParams, Variant};
use avoidance::planner::{evaluate, guaranteed_walkers, plan, plan_looped, plan_unlooped};
use avoidance::prob::ratio;
use avoidance::process::run;
use avoidance::verifier::*;
use avoidance::{Process, Result, TrajectoryLog};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { ok, detail: detail.into() })
}

fn hypercube(d: u32, v: Variant) -> Process {
    Arc::new(build_hypercube(HypercubeParams::new(d, v)).expect("valid hypercube"))
}

fn k4_product() -> Process {
    let k4 = || hypercube(1, Variant::LoopedPow2);
    Arc::new(product(k4(), k4(), ProductParams::default()).expect("valid product"))
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed <= limit
}

fn c1() -> Result<Outcome> {
    let t = Instant::now();
    let threshold = k3_threshold(1e-6);
    let ok = (threshold - 0.5).abs() <= 1e-6
        && build_k3_markovian(ratio(49, 100)).is_err()
        && build_k3_nonmarkovian(ratio(3, 10)).is_err()
        && build_k3_nonmarkovian(ratio(1, 3)).is_ok()
        && build_k3_nonmarkovian(ratio(1, 2)).is_ok()
        && build_k3_markovian(ratio(1, 2)).is_ok();
    let el = t.elapsed();
    outcome(ok && within(el, Duration::from_secs(1)), format!("threshold {threshold:.7} in {el:?}"))
}

fn c2() -> Result<Outcome> {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    let mut record = |name: &str, r: VerificationReport| {
        ok &= r.passed();
        lines.push(format!("{name}: {:?}", r.verdict));
    };
    record("k3_nonmarkovian(1/3) h=5", check_faithfulness_exact(&build_k3_nonmarkovian(ratio(1, 3))?, 5)?);
    record("k3_markovian(1/2) h=5", check_faithfulness_exact(&build_k3_markovian(ratio(1, 2))?, 5)?);
    record("k3_markovian(3/4) h=5", check_faithfulness_exact(&build_k3_markovian(ratio(3, 4))?, 5)?);
    record("composite(2,3) K6 h=4", check_faithfulness_exact(&build_composite(2, 3, false)?, 4)?);
    record("composite(2,3) K6* h=4", check_faithfulness_exact(&build_composite(2, 3, true)?, 4)?);
    let base = hypercube(1, Variant::LoopedPow2);
    let ext = Arc::new(bernoulli_extract(base.clone(), 1)?);
    let lifted = lift(base, Arc::new(bernoulli_thin(ext, ratio(1, 5))?))?;
    record("lift K4* -> K5* h=3", check_faithfulness_exact(&lifted, 3)?);
    let el = t.elapsed();
    outcome(ok && within(el, Duration::from_secs(60)), format!("{} ({el:?})", lines.join("; ")))
}

fn scale_logs() -> Result<(TrajectoryLog, TrajectoryLog, Duration)> {
    let t = Instant::now();
    let k9 = hypercube(2, Variant::UnloopedPlus1);
    let a = run(k9.as_ref(), 1_000_000, 1)?;
    let b = run(k4_product().as_ref(), 1_000_000, 2)?;
    Ok((a, b, t.elapsed()))
}

fn c3(logs: &(TrajectoryLog, TrajectoryLog, Duration)) -> Result<Outcome> {
    let (a, b, el) = logs;
    let (ra, rb) = (check_collisions(a), check_collisions(b));
    outcome(
        ra.passed() && rb.passed() && a.k == 4 && b.k == 4 && b.graph.n == 16 && within(*el, Duration::from_secs(60)),
        format!(
            "K9 collisions {}, K16* collisions {}, {} rounds each in {el:?}",
            ra.numbers["collisions"], rb.numbers["collisions"], a.rounds()
        ),
    )
}

fn c4(logs: &(TrajectoryLog, TrajectoryLog, Duration)) -> Result<Outcome> {
    let (a, b, _) = logs;
    let (ra, rb) = (check_faithfulness_empirical(a, 1e-3)?, check_faithfulness_empirical(b, 1e-3)?);
    let min_p = |r: &VerificationReport| {
        r.numbers["walkers"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|w| [w["gof"]["p_value"].as_f64().unwrap(), w["lag1"]["p_value"].as_f64().unwrap()])
            .fold(1.0, f64::min)
    };
    outcome(
        ra.passed() && rb.passed(),
        format!("smallest p-value K9 {:.4}, K16* {:.4} (level 1e-3 / 8)", min_p(&ra), min_p(&rb)),
    )
}

fn c5() -> Result<Outcome> {
    let h = entropy_rate(&build_hypercube(HypercubeParams::new(2, Variant::UnloopedPlus1))?)?;
    let m = entropy_rate(&build_composite_min_entropy(2, 3)?)?;
    let c = entropy_rate(&build_composite(3, 2, false)?)?;
    let log5 = LogSum::log2(&ratio(5, 1));
    let ok = h.rate == LogSum::bits(3)
        && m.rate == log5
        && c.rate.compare(&log5) == std::cmp::Ordering::Greater
        && !c.rate.minus(&log5).is_zero();
    outcome(ok, format!("hypercube {} bits; min-entropy composite {}; composite(3,2) {} > log2(5)", h.rate, m.rate, c.rate))
}

fn c6() -> Result<Outcome> {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut expect = |name: &str, r: VerificationReport, pass: bool| {
        let good = r.passed() == pass && (pass || r.witness.is_some());
        ok &= good;
        notes.push(format!("{name}: {:?}", r.verdict));
    };
    expect("k3_markovian(1/2)", check_markov(&build_k3_markovian(ratio(1, 2))?, 4)?, true);
    expect("k3_markovian(3/4)", check_markov(&build_k3_markovian(ratio(3, 4))?, 4)?, true);
    expect("composite(2,3)", check_markov(&build_composite(2, 3, false)?, 4)?, true);
    expect("composite(2,3)*", check_markov(&build_composite(2, 3, true)?, 4)?, true);
    expect("hypercube d=2 full", check_markov(hypercube(2, Variant::LoopedPlus1).as_ref(), 4)?, true);
    for (n, k, looped) in [(20, 2, true), (100, 4, true), (11, 2, true), (50, 8, false), (26, 2, false)] {
        let p = evaluate(&plan(n, k, looped)?)?;
        expect(&format!("plan({n},{k},{looped})"), check_markov_bounded(p.as_ref(), 4, 2_000_000)?, true);
    }
    expect("k3_nonmarkovian(1/3)", check_markov(&build_k3_nonmarkovian(ratio(1, 3))?, 4)?, false);
    expect("composite_min_entropy(3,2)", check_markov(&build_composite_min_entropy(3, 2)?, 4)?, false);
    outcome(ok, notes.join("; "))
}

fn c7() -> Result<Outcome> {
    let t = Instant::now();
    let mut failures = Vec::new();
    for n in 8..=1024 {
        let k = guaranteed_walkers(n, true).max(2);
        match plan_looped(n, k).and_then(|p| evaluate(&p)) {
            Ok(p) if p.walkers() == k && p.graph().n == n && p.flags().markovian => {}
            _ => failures.push(format!("looped({n},{k})")),
        }
    }
    for n in 512..=1024 {
        match plan_unlooped(n, 8).and_then(|p| evaluate(&p)) {
            Ok(p) if p.walkers() == 8 && p.graph().n == n && p.flags().markovian => {}
            _ => failures.push(format!("unlooped({n},8)")),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut simulated = 0;
    for i in 0..20 {
        let looped = i % 2 == 0;
        let n = if looped { rng.random_range(8..=1024) } else { rng.random_range(512..=1024) };
        let k = if looped { guaranteed_walkers(n, true).max(2) } else { 8 };
        let p = evaluate(&plan(n, k, looped)?)?;
        let log = run(p.as_ref(), 10_000, i)?;
        if check_collisions(&log).passed() {
            simulated += 1;
        } else {
            failures.push(format!("collision in plan({n},{k},{looped})"));
        }
    }
    let el = t.elapsed();
    outcome(
        failures.is_empty() && within(el, Duration::from_secs(600)),
        format!("{} failures, {simulated}/20 sampled plans collision-free over 10^4 rounds, {el:?} {}", failures.len(), failures.join(" ")),
    )
}

fn c8() -> Result<Outcome> {
    let base = hypercube(1, Variant::LoopedPow2);
    let ext = Arc::new(bernoulli_extract(base.clone(), 1)?);
    let iid = check_bernoulli_exact(&ext, 4)?;
    let avoid = check_one_avoidance(&ext, 100_000)?;
    let thin = Arc::new(bernoulli_thin(ext, ratio(1, 5))?);
    let thin_iid = check_bernoulli_exact(&thin, 4)?;
    let thin_avoid = check_one_avoidance(&thin, 100_000)?;
    let lifted = lift(base, thin)?;
    let faithful = check_faithfulness_exact(&lifted, 3)?;
    let ok = iid.passed() && avoid.passed() && thin_iid.passed() && thin_avoid.passed() && faithful.passed();
    outcome(
        ok,
        format!(
            "Bern(1/4) iid {:?}, 1-avoid {:?}; Bern(1/5) iid {:?}, 1-avoid {:?}; lifted K5* {:?}",
            iid.verdict, avoid.verdict, thin_iid.verdict, thin_avoid.verdict, faithful.verdict
        ),
    )
}

fn c9() -> Result<Outcome> {
    let c = build_composite(2, 3, true)?;
    let log = run(&c, 1_000_000, 9)?;
    let (stats, report) = event_stats(&log)?;
    let (l4, r4, o4) = return_bound_inequality(4);
    let zs: Vec<String> = stats.walkers.iter().map(|w| format!("P(A)={:.5} z={:.2}, P(B)={:.5} z={:.2}", w.p_a, w.z_a, w.p_b, w.z_b)).collect();
    outcome(
        report.passed() && o4 == std::cmp::Ordering::Greater,
        format!("{}; n=4: {l4} > {r4}", zs.join("; ")),
    )
}

fn c10() -> Result<Outcome> {
    let p = hypercube(2, Variant::UnloopedPlus1);
    let r = continuous_time_check(p.as_ref(), 100_000, 10, 1e-3)?;
    let walkers = r.numbers["walkers"].as_array().unwrap();
    let desc: Vec<String> = walkers
        .iter()
        .map(|w| format!("p={:.4} mean={:.4}", w["p_value"].as_f64().unwrap(), w["mean"].as_f64().unwrap()))
        .collect();
    outcome(r.passed(), desc.join("; "))
}

fn c11() -> Result<Outcome> {
    let stripped = wave_strip(hypercube(2, Variant::LoopedPlus1))?;
    let direct = build_hypercube(HypercubeParams::new(2, Variant::UnloopedPlus1))?;
    let r = check_equivalent(&stripped, &direct, 1_000_000)?;
    outcome(r.passed(), format!("{} states compared", r.numbers["states"]))
}

fn c12() -> Result<Outcome> {
    let switch = build_composite_with(2, 3, false, CompositeOptions { min_entropy: false, switch_override: Some(ratio(1, 5)) })?;
    let switch_caught = !check_faithfulness_exact(&switch, 1)?.passed();

    let mut hp = HypercubeParams::new(2, Variant::UnloopedPlus1);
    hp.delta_bias = Some(ratio(3, 4));
    let biased = build_hypercube(hp)?;
    let delta_exact = !check_faithfulness_exact(&biased, 1)?.passed();
    let delta_stat = !check_faithfulness_empirical(&run(&biased, 100_000, 12)?, 1e-3)?.passed();

    let ext = Arc::new(bernoulli_extract(hypercube(1, Variant::LoopedPow2), 1)?);
    let wrong = bernoulli_thin_with_coin(ext, ratio(1, 5), ratio(3, 5));
    let coin_caught = !check_bernoulli_exact(&wrong, 2)?.passed();

    outcome(
        switch_caught && delta_exact && delta_stat && coin_caught,
        format!("switch 1/5: {switch_caught}; delta 3/4: exact {delta_exact}, statistical {delta_stat}; thinning coin 3/5: {coin_caught}"),
    )
}

fn main() -> ExitCode {
    let t = Instant::now();
    let logs = scale_logs();
    let criteria: Vec<(&str, Box<dyn Fn() -> Result<Outcome> + '_>)> = vec![
        ("K3* thresholds", Box::new(c1)),
        ("exact faithfulness", Box::new(c2)),
        ("collision-freedom at scale", Box::new(|| c3(logs.as_ref().map_err(clone_err)?))),
        ("empirical faithfulness", Box::new(|| c4(logs.as_ref().map_err(clone_err)?))),
        ("exact entropy", Box::new(c5)),
        ("Markov property", Box::new(c6)),
        ("planner bounds", Box::new(c7)),
        ("monotonicity chain", Box::new(c8)),
        ("event statistics", Box::new(c9)),
        ("continuous-time transform", Box::new(c10)),
        ("wave-strip equivalence", Box::new(c11)),
        ("mutation sensitivity", Box::new(c12)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = match f() {
            Ok(o) => (o.ok, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!("{} criterion {:>2} ({name}): {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("acceptance: {} of {} criteria passed in {:?}", criteria.len() - failed, criteria.len(), t.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn clone_err(e: &avoidance::Error) -> avoidance::Error {
    avoidance::Error::InvalidState(e.to_string())
}
