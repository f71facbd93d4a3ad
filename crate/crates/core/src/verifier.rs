//! Exact and statistical checks of avoidance couplings.
//!
//! Exact checks enumerate distribution machines with rational (or quadratic
//! surd) arithmetic and never compare floating-point numbers for equality.
//! Statistical checks report the statistic, degrees of freedom and the
//! significance level they were judged at.

use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};

use rand_distr::{Distribution, Gamma};
use serde::Serialize;
use serde_json::{json, Value};

use crate::combinators::BernoulliProcess;
use crate::dist::Dist;
use crate::entropy::{shannon, LogSum};
use crate::error::{Error, Result};
use crate::prob::{ratio, rational_json, rational_to_f64, Prob, Rational};
use crate::process::{
    rng_from_seed, run, validate_move, CouplingProcess, GraphSpec, LoopMode, State,
    TrajectoryLog, TurnMachine, DEFAULT_STATE_BOUND,
};
use crate::stats::{chi_square_gof, chi_square_independence, ks_test};

/// Default significance level of statistical checks.
pub const DEFAULT_ALPHA: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Statistical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub mode: Mode,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
    pub numbers: Value,
    pub parameters: Value,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl VerificationReport {
    fn new(check: &str, mode: Mode, ok: bool) -> Self {
        VerificationReport {
            check: check.to_string(),
            mode,
            verdict: Verdict::from_bool(ok),
            witness: None,
            numbers: json!({}),
            parameters: json!({}),
            notes: Vec::new(),
        }
    }

    fn witness(mut self, w: Option<Value>) -> Self {
        self.witness = w;
        self
    }

    fn numbers(mut self, v: Value) -> Self {
        self.numbers = v;
        self
    }

    fn parameters(mut self, v: Value) -> Self {
        self.parameters = v;
        self
    }

    fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("reports serialize")
    }
}

fn dist_json(d: &Dist<usize>) -> Value {
    let mut items: Vec<(usize, Prob)> = d.iter().map(|(x, w)| (*x, w.clone())).collect();
    items.sort_by_key(|(x, _)| *x);
    Value::Array(items.into_iter().map(|(x, w)| json!({ "outcome": x, "prob": w.to_json() })).collect())
}

fn state_json(s: &State) -> Value {
    json!({ "positions": s.positions, "turn": s.turn, "memory": s.memory })
}

/// Scans a log for moves onto occupied vertices.
pub fn check_collisions(log: &TrajectoryLog) -> VerificationReport {
    let mut first = None;
    let mut count = 0u64;
    for t in 0..log.rounds() {
        let mut now = log.positions_at(t).to_vec();
        let after = log.positions_at(t + 1);
        for j in 0..log.k {
            let (from, to) = (now[j], after[j]);
            if to != from {
                if let Some(occupant) = (0..log.k).find(|&i| i != j && now[i] == to) {
                    count += 1;
                    first.get_or_insert_with(|| {
                        json!({ "round": t, "walker": j, "from": from, "to": to, "occupant": occupant })
                    });
                }
            }
            now[j] = to;
        }
    }
    VerificationReport::new("collisions", Mode::Exact, count == 0)
        .witness(first)
        .numbers(json!({ "rounds": log.rounds(), "moves": log.rounds() * log.k, "collisions": count }))
}

/// Every positive-probability move from every reachable state is legal.
pub fn check_collisions_exhaustive(p: &dyn CouplingProcess, bound: usize) -> Result<VerificationReport> {
    let states = crate::process::reachable_states(p, bound)?;
    let mut witness = None;
    let mut transitions = 0usize;
    'outer: for s in &states {
        for t in p.step(s)?.outcomes() {
            transitions += 1;
            if let Err(e) = validate_move(p.graph(), s, t) {
                witness = Some(json!({ "state": state_json(s), "successor": state_json(t), "error": e.to_string() }));
                break 'outer;
            }
        }
    }
    Ok(VerificationReport::new("collisions_exhaustive", Mode::Exact, witness.is_none())
        .witness(witness)
        .numbers(json!({ "states": states.len(), "transitions": transitions })))
}

/// Successor laws, memoized across the passes of one check.
struct StepCache<'a> {
    machine: &'a dyn TurnMachine,
    cache: HashMap<State, Dist<State>>,
}

impl<'a> StepCache<'a> {
    fn new(machine: &'a dyn TurnMachine) -> Self {
        StepCache { machine, cache: HashMap::new() }
    }

    fn step(&mut self, s: &State) -> Result<Dist<State>> {
        if let Some(d) = self.cache.get(s) {
            return Ok(d.clone());
        }
        let d = self.machine.step(s)?;
        self.cache.insert(s.clone(), d.clone());
        Ok(d)
    }
}

/// Depth-`h` faithfulness of every walker against `kernel`, from the
/// machine's initial law, whose one-walker marginals must equal `marginal`.
pub fn faithfulness_exact_with(
    machine: &dyn TurnMachine,
    kernel: &dyn Fn(usize) -> Dist<usize>,
    marginal: &Dist<usize>,
    h: usize,
    bound: usize,
) -> Result<(bool, Option<Value>, usize)> {
    let k = machine.walkers();
    let init = machine.initial()?;
    for j in 0..k {
        let m = init.map(|s| s.positions[j]);
        if m != *marginal {
            let w = json!({ "walker": j, "initial_marginal": dist_json(&m), "expected": dist_json(marginal) });
            return Ok((false, Some(w), 0));
        }
    }
    let mut steps = StepCache::new(machine);
    let mut checked = 0usize;
    for j in 0..k {
        let mut layer: HashMap<(Vec<usize>, State), Prob> = HashMap::new();
        for (s, w) in init.iter() {
            layer.insert((vec![s.positions[j]], s.clone()), w.clone());
        }
        for _round in 0..h {
            for t in 0..k {
                let mut next: HashMap<(Vec<usize>, State), Prob> = HashMap::new();
                let mut laws: HashMap<Vec<usize>, (Prob, Dist<usize>)> = HashMap::new();
                for ((hist, s), w) in &layer {
                    let succ = steps.step(s)?;
                    for (s2, w2) in succ.iter() {
                        let mass = w * w2;
                        let key_hist = if t == j {
                            let entry = laws.entry(hist.clone()).or_insert_with(|| (Prob::zero(), Dist::empty()));
                            entry.1.add(s2.positions[j], mass.clone());
                            let mut h2 = hist.clone();
                            h2.push(s2.positions[j]);
                            h2
                        } else {
                            hist.clone()
                        };
                        *next.entry((key_hist, s2.clone())).or_insert_with(Prob::zero) += &mass;
                    }
                    if t == j {
                        laws.get_mut(hist).expect("inserted above").0 += w;
                    }
                }
                for (hist, (total, law)) in laws {
                    checked += 1;
                    let observed = law.scaled(&total.recip());
                    let expected = kernel(*hist.last().expect("nonempty history"));
                    if observed != expected {
                        let w = json!({
                            "walker": j,
                            "history": hist,
                            "observed": dist_json(&observed),
                            "expected": dist_json(&expected),
                        });
                        return Ok((false, Some(w), checked));
                    }
                }
                if next.len() > bound {
                    return Err(Error::StateSpaceTooLarge { limit: bound });
                }
                layer = next;
            }
        }
    }
    Ok((true, None, checked))
}

/// Each walker's own trajectory follows the graph's kernel exactly, for
/// every own history of up to `h` steps.
pub fn check_faithfulness_exact(p: &dyn CouplingProcess, h: usize) -> Result<VerificationReport> {
    check_faithfulness_exact_bounded(p, h, DEFAULT_STATE_BOUND)
}

pub fn check_faithfulness_exact_bounded(p: &dyn CouplingProcess, h: usize, bound: usize) -> Result<VerificationReport> {
    let g = p.graph().clone();
    let marginal = Dist::uniform(0..g.n);
    let (ok, witness, histories) = faithfulness_exact_with(p, &|v| g.kernel(v), &marginal, h, bound)?;
    let mut r = VerificationReport::new("faithfulness_exact", Mode::Exact, ok)
        .witness(witness)
        .numbers(json!({ "histories_checked": histories, "kernel_from_0": dist_json(&g.kernel(0)) }))
        .parameters(json!({ "depth": h, "graph": g.to_json(), "construction": p.descriptor() }));
    let f = p.flags();
    if !f.markovian || f.memory_depth > 0 {
        r = r.note("process has hidden memory: a depth-limited pass is a necessary condition only");
    }
    if p.approximate() {
        r = r.note("approximate samplers in use");
    }
    Ok(r)
}

/// Each Bernoulli walker's own values are i.i.d. `Bern(p)` up to depth `h`.
pub fn check_bernoulli_exact(b: &BernoulliProcess, h: usize) -> Result<VerificationReport> {
    let p = b.p().clone();
    let mut law = Dist::empty();
    law.add(1, p.clone());
    law.add(0, p.complement());
    let (ok, witness, histories) = faithfulness_exact_with(b, &|_| law.clone(), &law, h, DEFAULT_STATE_BOUND)?;
    Ok(VerificationReport::new("bernoulli_iid_exact", Mode::Exact, ok)
        .witness(witness)
        .numbers(json!({ "histories_checked": histories, "p": p.to_json() }))
        .parameters(json!({ "depth": h })))
}

/// No reachable state shows two Bernoulli walkers at `1`.
pub fn check_one_avoidance(b: &BernoulliProcess, bound: usize) -> Result<VerificationReport> {
    let states = crate::process::reachable_states(b, bound)?;
    let bad = states.iter().find(|s| s.positions.iter().filter(|&&v| v == 1).count() > 1);
    Ok(VerificationReport::new("one_avoidance", Mode::Exact, bad.is_none())
        .witness(bad.map(state_json))
        .numbers(json!({ "states": states.len() })))
}

fn reachable_with_parents(p: &dyn TurnMachine, bound: usize) -> Result<(Vec<State>, HashMap<State, Option<State>>)> {
    let mut parent: HashMap<State, Option<State>> = HashMap::new();
    let mut order = Vec::new();
    let mut queue = VecDeque::new();
    for s in p.initial()?.outcomes() {
        if !parent.contains_key(s) {
            parent.insert(s.clone(), None);
            queue.push_back(s.clone());
        }
    }
    while let Some(s) = queue.pop_front() {
        if order.len() >= bound {
            return Err(Error::StateSpaceTooLarge { limit: bound });
        }
        for t in p.step(&s)?.outcomes() {
            if !parent.contains_key(t) {
                parent.insert(t.clone(), Some(s.clone()));
                queue.push_back(t.clone());
            }
        }
        order.push(s);
    }
    Ok((order, parent))
}

fn history_to(parent: &HashMap<State, Option<State>>, s: &State) -> Vec<Vec<usize>> {
    let mut path = vec![s.positions.clone()];
    let mut cur = s;
    while let Some(Some(prev)) = parent.get(cur) {
        path.push(prev.positions.clone());
        cur = prev;
    }
    path.reverse();
    path
}

/// The next configuration's law is a function of `(positions, turn)`.
///
/// States sharing a configuration must induce identical laws over the next
/// configuration. Every reachable state is reached with positive
/// probability, so this is equivalent to the same statement for every
/// observable history, at every depth.
pub fn check_markov(p: &dyn CouplingProcess, h: usize) -> Result<VerificationReport> {
    check_markov_bounded(p, h, DEFAULT_STATE_BOUND)
}

pub fn check_markov_bounded(p: &dyn CouplingProcess, h: usize, bound: usize) -> Result<VerificationReport> {
    let (states, parent) = reachable_with_parents(p, bound)?;
    let mut seen: HashMap<(Vec<usize>, usize), (State, Dist<Vec<usize>>)> = HashMap::new();
    let mut witness = None;
    for s in &states {
        let law = p.step(s)?.map(|t| t.positions.clone());
        let key = s.configuration();
        match seen.get(&key) {
            None => {
                seen.insert(key, (s.clone(), law));
            }
            Some((other, law0)) if *law0 != law => {
                let mover = s.turn;
                let project = |d: &Dist<Vec<usize>>| dist_json(&d.map(|v| v[mover]));
                witness = Some(json!({
                    "positions": s.positions,
                    "turn": s.turn,
                    "first": { "memory": other.memory, "history": history_to(&parent, other), "next": project(law0) },
                    "second": { "memory": s.memory, "history": history_to(&parent, s), "next": project(&law) },
                }));
                break;
            }
            Some(_) => {}
        }
    }
    let mut r = VerificationReport::new("markov", Mode::Exact, witness.is_none())
        .witness(witness)
        .numbers(json!({ "states": states.len(), "configurations": seen.len() }))
        .parameters(json!({ "depth": h, "construction": p.descriptor() }));
    if p.approximate() {
        r = r.note("approximate samplers in use");
    }
    Ok(r)
}

/// Pushes a law through one round.
pub fn push_round(p: &dyn TurnMachine, law: &Dist<State>) -> Result<Dist<State>> {
    let mut law = law.clone();
    for _ in 0..p.walkers() {
        law = law.bind(|s| p.step(s))?;
    }
    Ok(law)
}

/// The initial law is invariant under one round.
pub fn check_stationary(p: &dyn CouplingProcess) -> Result<VerificationReport> {
    let init = p.initial()?;
    let after = push_round(p, &init)?;
    let ok = after == init;
    let witness = (!ok).then(|| {
        let bad = init
            .iter()
            .map(|(s, _)| s)
            .chain(after.outcomes())
            .find(|s| init.get(s) != after.get(s))
            .expect("laws differ somewhere");
        json!({ "state": state_json(bad), "before": init.get(bad).to_json(), "after": after.get(bad).to_json() })
    });
    Ok(VerificationReport::new("stationary", Mode::Exact, ok)
        .witness(witness)
        .numbers(json!({ "support": init.len() })))
}

/// Exact stationary law of the round chain on the states reachable at the
/// start of a round, by Gaussian elimination. Intended for small chains.
pub fn stationary_exact(p: &dyn TurnMachine, bound: usize) -> Result<Dist<State>> {
    let mut index: HashMap<State, usize> = HashMap::new();
    let mut states: Vec<State> = Vec::new();
    let mut rows: Vec<Dist<State>> = Vec::new();
    let mut queue: VecDeque<State> = VecDeque::new();
    for s in p.initial()?.outcomes() {
        index.insert(s.clone(), states.len());
        states.push(s.clone());
        queue.push_back(s.clone());
    }
    // Queue order equals index order, so `rows[i]` is the round law of `states[i]`.
    while let Some(s) = queue.pop_front() {
        let law = push_round(p, &Dist::point(s))?;
        for t in law.outcomes() {
            if !index.contains_key(t) {
                if states.len() >= bound {
                    return Err(Error::StateSpaceTooLarge { limit: bound });
                }
                index.insert(t.clone(), states.len());
                states.push(t.clone());
                queue.push_back(t.clone());
            }
        }
        rows.push(law);
    }
    let n = states.len();
    // Column j: Σ_i π_i (P_ij − δ_ij) = 0; the last equation becomes Σ π_i = 1.
    let mut a = vec![vec![Prob::zero(); n + 1]; n];
    for (i, law) in rows.iter().enumerate() {
        for (t, w) in law.iter() {
            a[index[t]][i] += w;
        }
        a[i][i] = a[i][i].clone() - Prob::one();
    }
    for entry in a[n - 1].iter_mut().take(n) {
        *entry = Prob::one();
    }
    a[n - 1][n] = Prob::one();
    let pi = solve(a)?;
    let mut law = Dist::empty();
    for (s, w) in states.into_iter().zip(pi) {
        law.add(s, w);
    }
    Ok(law)
}

fn solve(mut a: Vec<Vec<Prob>>) -> Result<Vec<Prob>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .ok_or_else(|| Error::InvalidState("singular stationary system".into()))?;
        a.swap(col, pivot);
        let inv = a[col][col].recip();
        for x in a[col].iter_mut() {
            *x = &*x * &inv;
        }
        let prow = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col && !row[col].is_zero() {
                let f = row[col].clone();
                for (x, px) in row.iter_mut().zip(&prow) {
                    *x = x.clone() - &f * px;
                }
            }
        }
    }
    Ok(a.into_iter().map(|row| row[n].clone()).collect())
}

/// For two walkers: `π(a)·P(a → c) = π(σc)·P(σc → σa)`, where `σ` swaps
/// the walkers, over the round chain started from the initial law.
pub fn check_time_reversal(p: &dyn CouplingProcess) -> Result<VerificationReport> {
    if p.walkers() != 2 {
        return Err(Error::BadParam("time reversal is defined here for two walkers".into()));
    }
    let init = p.initial()?;
    let mut pi: HashMap<Vec<usize>, Prob> = HashMap::new();
    let mut rep: HashMap<Vec<usize>, State> = HashMap::new();
    for (s, w) in init.iter() {
        *pi.entry(s.positions.clone()).or_insert_with(Prob::zero) += w;
        rep.insert(s.positions.clone(), s.clone());
    }
    let round = |s: &State| -> Result<Dist<Vec<usize>>> {
        Ok(push_round(p, &Dist::point(s.clone()))?.map(|t| t.positions.clone()))
    };
    let swap = |v: &Vec<usize>| vec![v[1], v[0]];
    let mut laws: HashMap<Vec<usize>, Dist<Vec<usize>>> = HashMap::new();
    for (a, s) in &rep {
        laws.insert(a.clone(), round(s)?);
    }
    let mut witness = None;
    let mut pairs = 0;
    'outer: for (a, law) in &laws {
        for (c, w) in law.iter() {
            pairs += 1;
            let lhs = &pi[a] * w;
            let sc = swap(c);
            let rhs = match (pi.get(&sc), laws.get(&sc)) {
                (Some(pc), Some(lc)) => pc * &lc.get(&swap(a)),
                _ => Prob::zero(),
            };
            if lhs != rhs {
                witness = Some(json!({ "from": a, "to": c, "forward": lhs.to_json(), "reversed": rhs.to_json() }));
                break 'outer;
            }
        }
    }
    Ok(VerificationReport::new("time_reversal", Mode::Exact, witness.is_none())
        .witness(witness)
        .numbers(json!({ "transitions": pairs })))
}

/// Every round either moves all walkers or rests all of them, as decided by
/// walker 0.
pub fn check_waves(p: &dyn CouplingProcess, bound: usize) -> Result<VerificationReport> {
    let states = crate::process::reachable_states(p, bound)?;
    let k = p.walkers();
    let mut witness = None;
    let mut rounds = 0usize;
    'outer: for s in states.iter().filter(|s| s.turn == 0) {
        rounds += 1;
        let mut frontier: Vec<(State, bool)> =
            p.step(s)?.outcomes().map(|t| (t.clone(), t.positions[0] == s.positions[0])).collect();
        for turn in 1..k {
            let mut next = Vec::new();
            for (st, rest) in &frontier {
                for t in p.step(st)?.outcomes() {
                    if (t.positions[turn] == st.positions[turn]) != *rest {
                        witness = Some(json!({ "state": state_json(st), "successor": state_json(t), "rest": rest }));
                        break 'outer;
                    }
                    next.push((t.clone(), *rest));
                }
            }
            next.sort();
            next.dedup();
            frontier = next;
        }
    }
    Ok(VerificationReport::new("waves", Mode::Exact, witness.is_none())
        .witness(witness)
        .numbers(json!({ "round_starts": rounds })))
}

/// Two machines have the same initial law and identical successor laws at
/// every state reachable in the first.
pub fn check_equivalent(a: &dyn CouplingProcess, b: &dyn CouplingProcess, bound: usize) -> Result<VerificationReport> {
    let mut witness = None;
    if a.graph() != b.graph() || a.walkers() != b.walkers() {
        witness = Some(json!({ "graphs": [a.graph().to_string(), b.graph().to_string()] }));
    } else if a.initial()? != b.initial()? {
        witness = Some(json!({ "initial": "laws differ" }));
    }
    let states = crate::process::reachable_states(a, bound)?;
    if witness.is_none() {
        for s in &states {
            if a.step(s)? != b.step(s)? {
                witness = Some(json!({ "state": state_json(s) }));
                break;
            }
        }
    }
    Ok(VerificationReport::new("equivalent", Mode::Exact, witness.is_none())
        .witness(witness)
        .numbers(json!({ "states": states.len() }))
        .parameters(json!({ "left": a.descriptor(), "right": b.descriptor() })))
}

/// Exact entropy per round under the initial (stationary) law.
#[derive(Clone, Debug)]
pub struct EntropyRate {
    pub rate: LogSum,
    pub single_walker: LogSum,
    pub report: VerificationReport,
}

/// Entropy of one step of a single walker on `g`.
pub fn single_walker_entropy(g: &GraphSpec) -> LogSum {
    let law = g.kernel(0);
    let weights: Vec<Rational> = law.iter().map(|(_, w)| w.as_rational().expect("rational kernel").clone()).collect();
    shannon(&weights)
}

/// Expected Shannon entropy of the next machine state, summed over the turns
/// of a round and averaged over the stationary law, in bits per round.
pub fn entropy_rate(p: &dyn CouplingProcess) -> Result<EntropyRate> {
    entropy_rate_bounded(p, DEFAULT_STATE_BOUND)
}

pub fn entropy_rate_bounded(p: &dyn CouplingProcess, bound: usize) -> Result<EntropyRate> {
    let mut law = p.initial()?;
    let mut rate = LogSum::zero();
    let mut cache: HashMap<State, LogSum> = HashMap::new();
    for _ in 0..p.walkers() {
        if law.len() > bound {
            return Err(Error::StateSpaceTooLarge { limit: bound });
        }
        for (s, w) in law.iter() {
            let w = w
                .as_rational()
                .ok_or_else(|| Error::BadParam("exact entropy needs rational state weights".into()))?;
            if !cache.contains_key(s) {
                let succ = p.step(s)?;
                let ws: Result<Vec<Rational>> = succ
                    .iter()
                    .map(|(_, v)| {
                        v.as_rational()
                            .cloned()
                            .ok_or_else(|| Error::BadParam("exact entropy needs rational transition weights".into()))
                    })
                    .collect();
                cache.insert(s.clone(), shannon(&ws?));
            }
            rate.add(&cache[s].scaled(w));
        }
        law = law.bind(|s| p.step(s))?;
    }
    let single = single_walker_entropy(p.graph());
    let ok = rate.compare(&single) == Ordering::Equal;
    let mut report = VerificationReport::new("min_entropy", Mode::Exact, ok)
        .numbers(json!({
            "entropy_bits_per_round": rate.to_string(),
            "entropy_f64": rate.to_f64(),
            "single_walker_bits": single.to_string(),
            "single_walker_f64": single.to_f64(),
            "relation": match rate.compare(&single) {
                Ordering::Less => "<",
                Ordering::Equal => "=",
                Ordering::Greater => ">",
            },
        }))
        .parameters(json!({ "construction": p.descriptor() }));
    if !rate.is_fully_factored() || !single.is_fully_factored() {
        report = report.note("an unfactored logarithm base: inequality verdicts may be spurious");
    }
    Ok(EntropyRate { rate, single_walker: single, report })
}

/// Surprisal estimate of the entropy per round from a simulated run.
pub fn entropy_rate_empirical(p: &dyn CouplingProcess, rounds: usize, seed: u64) -> Result<VerificationReport> {
    let mut rng = rng_from_seed(seed);
    let mut state = p.sample_initial(&mut rng)?;
    let mut total = 0.0;
    let mut sq = 0.0;
    for _ in 0..rounds {
        let mut bits = 0.0;
        for _ in 0..p.walkers() {
            let law = p.step(&state)?;
            let next = law.sample(&mut rng);
            bits -= law.get(&next).to_f64().log2();
            state = next;
        }
        total += bits;
        sq += bits * bits;
    }
    let mean = total / rounds as f64;
    let se = ((sq / rounds as f64 - mean * mean).max(0.0) / rounds as f64).sqrt();
    let single = single_walker_entropy(p.graph()).to_f64();
    Ok(VerificationReport::new("min_entropy", Mode::Statistical, (mean - single).abs() <= 4.0 * se + 1e-12)
        .numbers(json!({ "entropy_f64": mean, "std_error": se, "single_walker_f64": single }))
        .parameters(json!({ "rounds": rounds, "seed": seed, "tolerance_sigma": 4 }))
        .note("state space too large for the exact computation; surprisal estimate"))
}

/// Exact entropy when the state space allows it, otherwise the estimate.
pub fn entropy_report(p: &dyn CouplingProcess, rounds: usize, seed: u64) -> Result<VerificationReport> {
    match entropy_rate(p) {
        Ok(e) => Ok(e.report),
        Err(Error::StateSpaceTooLarge { .. }) => entropy_rate_empirical(p, rounds, seed),
        Err(e) => Err(e),
    }
}

/// Per-walker chi-square fit of step increments mod `n` and a lag-1
/// independence test on non-overlapping increment pairs, at Bonferroni level
/// `α / (2k)`.
pub fn check_faithfulness_empirical(log: &TrajectoryLog, alpha: f64) -> Result<VerificationReport> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let n = log.graph.n;
    let k = log.k;
    let law = log.graph.increment_law();
    let probs: Vec<f64> = (0..n).map(|v| law.get(&v).to_f64()).collect();
    let level = alpha / (2 * k) as f64;
    let mut per_walker = Vec::new();
    let mut ok = true;
    for j in 0..k {
        let traj = log.walker_trajectory(j);
        let inc: Vec<usize> = traj.windows(2).map(|w| (w[1] + n - w[0]) % n).collect();
        let mut counts = vec![0u64; n];
        for &d in &inc {
            counts[d] += 1;
        }
        let gof = chi_square_gof(&counts, &probs);
        let mut table = vec![vec![0u64; n]; n];
        for pair in inc.chunks_exact(2) {
            table[pair[0]][pair[1]] += 1;
        }
        let lag = chi_square_independence(&table);
        ok &= gof.p_value > level && lag.p_value > level;
        per_walker.push(json!({
            "walker": j,
            "gof": { "statistic": gof.statistic, "df": gof.df, "p_value": gof.p_value },
            "lag1": { "statistic": lag.statistic, "df": lag.df, "p_value": lag.p_value },
        }));
    }
    Ok(VerificationReport::new("faithfulness_empirical", Mode::Statistical, ok)
        .numbers(json!({ "walkers": per_walker }))
        .parameters(json!({ "alpha": alpha, "per_test_level": level, "rounds": log.rounds() })))
}

/// Estimated event frequencies for one walker.
#[derive(Clone, Debug, Serialize)]
pub struct WalkerEvents {
    pub walker: usize,
    pub a_count: u64,
    pub a_trials: u64,
    pub b_count: u64,
    pub b_trials: u64,
    pub p_a: f64,
    pub p_b: f64,
    pub z_a: f64,
    pub z_b: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EventStats {
    pub n: usize,
    pub target_a: Value,
    pub target_b: Value,
    pub walkers: Vec<WalkerEvents>,
}

/// `(2(n−1)/n², 1/n)` and how they compare.
pub fn return_bound_inequality(n: usize) -> (Rational, Rational, Ordering) {
    let n = n as i64;
    let lhs = ratio(2 * (n - 1), n * n);
    let rhs = ratio(1, n);
    let ord = lhs.cmp(&rhs);
    (lhs, rhs, ord)
}

fn ordering_symbol(o: Ordering) -> &'static str {
    match o {
        Ordering::Less => "<",
        Ordering::Equal => "=",
        Ordering::Greater => ">",
    }
}

/// Frequencies of `A` (walker back where it was two rounds ago after moving
/// away) and `B` (walker stayed), compared with `(n−1)/n²` and `1/n` within
/// four binomial standard deviations.
pub fn event_stats(log: &TrajectoryLog) -> Result<(EventStats, VerificationReport)> {
    if log.graph.loop_mode != LoopMode::LoopedUnit {
        return Err(Error::BadParam(format!("event statistics need a K_n* log, got {}", log.graph)));
    }
    let n = log.graph.n;
    let pa = ratio(n as i64 - 1, (n * n) as i64);
    let pb = ratio(1, n as i64);
    let (fa, fb) = (rational_to_f64(&pa), rational_to_f64(&pb));
    let mut walkers = Vec::new();
    let mut ok = true;
    for j in 0..log.k {
        let x = log.walker_trajectory(j);
        let b_trials = x.len().saturating_sub(1) as u64;
        let b_count = x.windows(2).filter(|w| w[0] == w[1]).count() as u64;
        let a_trials = x.len().saturating_sub(2) as u64;
        let a_count = x.windows(3).filter(|w| w[0] == w[2] && w[0] != w[1]).count() as u64;
        let z = |count: u64, trials: u64, p: f64| {
            if trials == 0 {
                return 0.0;
            }
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            (count as f64 / trials as f64 - p) / sigma
        };
        let (z_a, z_b) = (z(a_count, a_trials, fa), z(b_count, b_trials, fb));
        ok &= z_a.abs() <= 4.0 && z_b.abs() <= 4.0;
        walkers.push(WalkerEvents {
            walker: j,
            a_count,
            a_trials,
            b_count,
            b_trials,
            p_a: a_count as f64 / a_trials.max(1) as f64,
            p_b: b_count as f64 / b_trials.max(1) as f64,
            z_a,
            z_b,
        });
    }
    let (lhs, rhs, ord) = return_bound_inequality(n);
    let stats = EventStats { n, target_a: rational_json(&pa), target_b: rational_json(&pb), walkers };
    let report = VerificationReport::new("event_stats", Mode::Statistical, ok)
        .numbers(json!({
            "events": serde_json::to_value(&stats)?,
            "inequality": {
                "lhs": rational_json(&lhs),
                "rhs": rational_json(&rhs),
                "lhs_f64": rational_to_f64(&lhs),
                "rhs_f64": rational_to_f64(&rhs),
                "relation": ordering_symbol(ord),
            },
        }))
        .parameters(json!({ "tolerance_sigma": 4, "rounds": log.rounds() }));
    Ok((stats, report))
}

/// Solutions of `x(1 − x) = (1 − s)/2` (the Markovian `K_3` constraint with
/// `p_ab = q_ab`).
#[derive(Clone, Debug)]
pub struct K3Feasibility {
    pub s: Rational,
    pub feasible: bool,
    pub roots: Option<(Prob, Prob)>,
}

pub fn k3_markov_feasibility(s: &Rational) -> K3Feasibility {
    // Discriminant of x² − x + (1 − s)/2.
    let disc = s * ratio(2, 1) - ratio(1, 1);
    if disc < ratio(0, 1) {
        return K3Feasibility { s: s.clone(), feasible: false, roots: None };
    }
    let r = Prob::sqrt_rational(&disc);
    let half = Prob::ratio(1, 2);
    let hi = &(Prob::one() + r.clone()) * &half;
    let lo = &(Prob::one() - r) * &half;
    K3Feasibility { s: s.clone(), feasible: true, roots: Some((hi, lo)) }
}

/// Bisection for the smallest feasible `s` in `[0, 1)`, to within `tol`.
pub fn k3_threshold(tol: f64) -> f64 {
    let (mut lo, mut hi) = (ratio(0, 1), ratio(99, 100));
    let tol = Rational::from_float(tol.abs().max(1e-15)).unwrap_or_else(|| ratio(1, 1_000_000));
    while &hi - &lo > tol {
        let mid = (&lo + &hi) / ratio(2, 1);
        if k3_markov_feasibility(&mid).feasible {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    rational_to_f64(&((lo + hi) / ratio(2, 1)))
}

/// Runs `p` with i.i.d. `Gamma(1/k, 1)` waits between turns and tests each
/// walker's inter-move times against `Exp(1)`: Kolmogorov–Smirnov at level
/// `α/k` and the sample mean within 2% of 1.
pub fn continuous_time_check(p: &dyn CouplingProcess, rounds: usize, seed: u64, alpha: f64) -> Result<VerificationReport> {
    let k = p.walkers();
    if rounds < 2 {
        return Err(Error::BadParam("need at least two rounds".into()));
    }
    let log = run(p, rounds, seed)?;
    let collisions = check_collisions(&log);
    let gamma = Gamma::new(1.0 / k as f64, 1.0).map_err(|e| Error::BadParam(e.to_string()))?;
    let mut rng = rng_from_seed(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut clock = 0.0;
    let mut times = vec![Vec::with_capacity(rounds); k];
    for _ in 0..rounds {
        for walker_times in times.iter_mut() {
            clock += gamma.sample(&mut rng);
            walker_times.push(clock);
        }
    }
    let level = alpha / k as f64;
    let mut ok = collisions.passed();
    let mut per_walker = Vec::new();
    for (j, t) in times.iter().enumerate() {
        let gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let ks = ks_test(&gaps, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-x).exp() });
        let good = ks.p_value > level && (mean - 1.0).abs() <= 0.02;
        ok &= good;
        per_walker.push(json!({ "walker": j, "ks_statistic": ks.statistic, "p_value": ks.p_value, "mean": mean, "samples": gaps.len() }));
    }
    Ok(VerificationReport::new("continuous_time", Mode::Statistical, ok)
        .numbers(json!({ "walkers": per_walker, "collisions": collisions.numbers["collisions"] }))
        .parameters(json!({ "alpha": alpha, "per_test_level": level, "rounds": rounds, "seed": seed, "gamma_shape": 1.0 / k as f64 })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inequality_boundary_values() {
        let (l, r, o) = return_bound_inequality(4);
        assert_eq!((l, r, o), (ratio(3, 8), ratio(1, 4), Ordering::Greater));
        let (l, r, o) = return_bound_inequality(2);
        assert_eq!((l, r, o), (ratio(1, 2), ratio(1, 2), Ordering::Equal));
    }

    #[test]
    fn k3_feasibility_examples() {
        assert!(!k3_markov_feasibility(&ratio(49, 100)).feasible);
        let f = k3_markov_feasibility(&ratio(51, 100));
        let (hi, lo) = f.roots.unwrap();
        assert!((hi.to_f64() - (1.0 + 0.02f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((lo.to_f64() - (1.0 - 0.02f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((k3_threshold(1e-6) - 0.5).abs() <= 1e-6);
    }
}
