//! Graphs, configurations, the coupling-process contract, simulation and
//! trajectory logs.
//!
//! A coupling is represented as a *distribution machine*: a finite-state
//! process whose states carry the walker positions, whose turn it is, and a
//! bounded amount of auxiliary memory. For every state the machine exposes
//! the exact law of the successor state, in which only the walker whose turn
//! it is has moved. Simulation samples from these laws; verification
//! enumerates them.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dist::{sample_cumulative, Dist};
use crate::error::{Error, Result};
use crate::prob::{rational_from_json, rational_json, Prob, Rational};

/// Default bound on enumerated state spaces.
pub const DEFAULT_STATE_BOUND: usize = 200_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LoopMode {
    /// `K_n`: move to one of the other `n − 1` vertices uniformly.
    Unlooped,
    /// `K_n*`: one loop per vertex, so the walker stays with probability `1/n`.
    LoopedUnit,
    /// `K_3` with hold probability `s`: stay with `s`, move to each other
    /// vertex with `(1 − s)/2`.
    Hold(Rational),
}

impl LoopMode {
    pub fn to_json(&self) -> Value {
        match self {
            LoopMode::Unlooped => json!("unlooped"),
            LoopMode::LoopedUnit => json!("looped_unit"),
            LoopMode::Hold(s) => json!({ "hold": rational_json(s) }),
        }
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        match v {
            Value::String(s) if s == "unlooped" => Ok(LoopMode::Unlooped),
            Value::String(s) if s == "looped_unit" => Ok(LoopMode::LoopedUnit),
            Value::Object(o) if o.contains_key("hold") => rational_from_json(&o["hold"])
                .map(LoopMode::Hold)
                .ok_or_else(|| Error::Parse("bad hold probability".into())),
            other => Err(Error::Parse(format!("unknown loop mode {other}"))),
        }
    }
}

/// The walk's state space and single-walker step kernel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GraphSpec {
    pub n: usize,
    pub loop_mode: LoopMode,
}

impl GraphSpec {
    pub fn unlooped(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::BadParam(format!("K_n needs n >= 2, got {n}")));
        }
        Ok(GraphSpec { n, loop_mode: LoopMode::Unlooped })
    }

    pub fn looped(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::BadParam(format!("K_n* needs n >= 2, got {n}")));
        }
        Ok(GraphSpec { n, loop_mode: LoopMode::LoopedUnit })
    }

    /// `K_3` with hold probability `s ∈ [0, 1)`.
    pub fn hold(s: Rational) -> Result<Self> {
        let zero = Rational::from_integer(0.into());
        let one = Rational::from_integer(1.into());
        if s < zero || s >= one {
            return Err(Error::BadParam(format!("hold probability {s} outside [0, 1)")));
        }
        Ok(GraphSpec { n: 3, loop_mode: LoopMode::Hold(s) })
    }

    /// Looped or unlooped complete graph.
    pub fn complete(n: usize, looped: bool) -> Result<Self> {
        if looped {
            Self::looped(n)
        } else {
            Self::unlooped(n)
        }
    }

    /// True when a walker may stay in place.
    pub fn is_looped(&self) -> bool {
        !matches!(self.loop_mode, LoopMode::Unlooped)
    }

    /// Exact single-walker step law from `v`.
    pub fn kernel(&self, v: usize) -> Dist<usize> {
        target_kernel(self, v)
    }

    /// Law of the increment `(to − from) mod n`; the kernel is translation
    /// invariant on every supported graph.
    pub fn increment_law(&self) -> Dist<usize> {
        self.kernel(0)
    }

    pub fn to_json(&self) -> Value {
        json!({ "n": self.n, "loop_mode": self.loop_mode.to_json() })
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.loop_mode {
            LoopMode::Unlooped => write!(f, "K_{}", self.n),
            LoopMode::LoopedUnit => write!(f, "K_{}*", self.n),
            LoopMode::Hold(s) => write!(f, "K_{}(s={})", self.n, s),
        }
    }
}

/// Single-walker step law from `v` as exact rationals.
pub fn target_kernel(g: &GraphSpec, v: usize) -> Dist<usize> {
    assert!(v < g.n, "vertex {v} outside K_{}", g.n);
    let n = g.n as i64;
    let mut d = Dist::empty();
    match &g.loop_mode {
        LoopMode::Unlooped => {
            for u in (0..g.n).filter(|&u| u != v) {
                d.add(u, Prob::ratio(1, n - 1));
            }
        }
        LoopMode::LoopedUnit => {
            for u in 0..g.n {
                d.add(u, Prob::ratio(1, n));
            }
        }
        LoopMode::Hold(s) => {
            let stay = Prob::from_rational(s.clone());
            let away = stay.complement() * Prob::ratio(1, 2);
            for u in 0..g.n {
                d.add(u, if u == v { stay.clone() } else { away.clone() });
            }
        }
    }
    d
}

/// A machine state: positions of the `k` walkers (indexed in turn order),
/// the index of the walker about to move, auxiliary memory and the states of
/// any component machines.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub positions: Vec<usize>,
    pub turn: usize,
    pub memory: Vec<i64>,
    pub inner: Vec<State>,
}

impl State {
    pub fn new(positions: Vec<usize>, turn: usize) -> Self {
        State { positions, turn, memory: Vec::new(), inner: Vec::new() }
    }

    pub fn with_memory(mut self, memory: Vec<i64>) -> Self {
        self.memory = memory;
        self
    }

    pub fn with_inner(mut self, inner: Vec<State>) -> Self {
        self.inner = inner;
        self
    }

    /// `(positions, turn)`, the observable part of the state.
    pub fn configuration(&self) -> (Vec<usize>, usize) {
        (self.positions.clone(), self.turn)
    }
}

/// Capability flags carried by every process.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub markovian: bool,
    pub waves: bool,
    pub min_entropy: bool,
    pub memory_depth: u32,
}

/// A process that moves one walker per turn with exactly enumerable laws.
pub trait TurnMachine: Send + Sync {
    fn walkers(&self) -> usize;

    /// Law of the state at the start of a round (walker 0 to move).
    fn initial(&self) -> Result<Dist<State>>;

    /// Exact law of the successor of `state`.
    fn step(&self, state: &State) -> Result<Dist<State>>;
}

/// An avoidance coupling of `walkers()` random walkers on `graph()`.
///
/// `initial()` is the law of the configuration just before walker 0 moves;
/// for every shipped construction it is stationary for the round chain.
pub trait CouplingProcess: TurnMachine + fmt::Debug {
    fn graph(&self) -> &GraphSpec;

    fn flags(&self) -> Flags;

    /// Short human-readable name of the construction.
    fn descriptor(&self) -> String;

    /// Lazily built index over `initial()` backing the default samplers below.
    fn index_cache(&self) -> &IndexCache;

    /// Law of walker `placed.len()`'s position in the initial configuration,
    /// conditioned on walkers `0..placed.len()` being at `placed`.
    fn conditional_position(&self, placed: &[usize]) -> Result<Dist<usize>> {
        self.index_cache().get(|| self.initial())?.position(placed)
    }

    /// Law of the full initial state given all walker positions.
    fn conditional_state(&self, positions: &[usize]) -> Result<Dist<State>> {
        self.index_cache().get(|| self.initial())?.state(positions)
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Result<State> {
        Ok(self.initial()?.sample(rng))
    }

    /// True when some internal sampler only approximates its target law.
    fn approximate(&self) -> bool {
        false
    }

    /// Rough number of states the exact conditional samplers enumerate.
    fn sampler_cost(&self) -> usize {
        self.initial().map(|d| d.len()).unwrap_or(usize::MAX)
    }
}

pub type Process = Arc<dyn CouplingProcess>;

/// Conditional laws of the initial configuration, keyed by position prefixes.
#[derive(Debug)]
pub struct StationaryIndex {
    prefixes: HashMap<Vec<usize>, Dist<usize>>,
    states: HashMap<Vec<usize>, Dist<State>>,
}

impl StationaryIndex {
    pub fn build(initial: &Dist<State>) -> Self {
        let mut prefixes: HashMap<Vec<usize>, Dist<usize>> = HashMap::new();
        let mut states: HashMap<Vec<usize>, Dist<State>> = HashMap::new();
        for (s, w) in initial.iter() {
            for j in 0..s.positions.len() {
                prefixes
                    .entry(s.positions[..j].to_vec())
                    .or_insert_with(Dist::empty)
                    .add(s.positions[j], w.clone());
            }
            states
                .entry(s.positions.clone())
                .or_insert_with(Dist::empty)
                .add(s.clone(), w.clone());
        }
        let prefixes = prefixes.into_iter().map(|(k, d)| (k, d.normalized())).collect();
        let states = states.into_iter().map(|(k, d)| (k, d.normalized())).collect();
        StationaryIndex { prefixes, states }
    }

    pub fn position(&self, placed: &[usize]) -> Result<Dist<usize>> {
        self.prefixes.get(placed).cloned().ok_or_else(|| {
            Error::InvalidState(format!("prefix {placed:?} has probability zero"))
        })
    }

    pub fn state(&self, positions: &[usize]) -> Result<Dist<State>> {
        self.states.get(positions).cloned().ok_or_else(|| {
            Error::InvalidState(format!("configuration {positions:?} has probability zero"))
        })
    }
}

#[derive(Debug, Default)]
pub struct IndexCache(OnceLock<std::result::Result<Arc<StationaryIndex>, String>>);

impl IndexCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, initial: impl FnOnce() -> Result<Dist<State>>) -> Result<Arc<StationaryIndex>> {
        self.0
            .get_or_init(|| {
                initial().map(|d| Arc::new(StationaryIndex::build(&d))).map_err(|e| e.to_string())
            })
            .clone()
            .map_err(Error::InvalidState)
    }
}

/// One walker's move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub walker: usize,
    pub from: usize,
    pub to: usize,
}

/// Checks that `next` is a legal successor of `current`: only the turn
/// walker moved, it did not land on an occupied vertex, and the turn advanced.
pub fn validate_move(graph: &GraphSpec, current: &State, next: &State) -> Result<MoveRecord> {
    let k = current.positions.len();
    let walker = current.turn;
    if next.positions.len() != k || next.turn != (walker + 1) % k {
        return Err(Error::InvalidState(format!(
            "successor {next:?} does not advance the turn of {current:?}"
        )));
    }
    for (j, (a, b)) in current.positions.iter().zip(&next.positions).enumerate() {
        if j != walker && a != b {
            return Err(Error::InvalidState(format!("walker {j} moved out of turn")));
        }
    }
    let from = current.positions[walker];
    let to = next.positions[walker];
    if to >= graph.n {
        return Err(Error::InvalidState(format!("vertex {to} outside {graph}")));
    }
    if to == from && !graph.is_looped() {
        return Err(Error::InvalidState(format!("walker {walker} stayed on unlooped {graph}")));
    }
    if to != from {
        if let Some(occupant) = (0..k).find(|&j| j != walker && current.positions[j] == to) {
            return Err(Error::Collision { walker, from, to, occupant });
        }
    }
    Ok(MoveRecord { walker, from, to })
}

/// Samples one turn from the exact successor law.
pub fn advance_turn<R: RngCore + ?Sized>(
    p: &dyn CouplingProcess,
    state: &State,
    rng: &mut R,
) -> Result<(State, MoveRecord)> {
    let next = p.step(state)?.sample(rng);
    let mv = validate_move(p.graph(), state, &next)?;
    Ok((next, mv))
}

/// Turn-by-turn sampler that memoizes floating-point successor tables.
pub struct Simulator<'a> {
    process: &'a dyn CouplingProcess,
    cache: HashMap<State, Arc<[(State, f64)]>>,
    cache_limit: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(process: &'a dyn CouplingProcess) -> Self {
        Simulator { process, cache: HashMap::new(), cache_limit: 500_000 }
    }

    pub fn step<R: RngCore + ?Sized>(&mut self, state: &State, rng: &mut R) -> Result<(State, MoveRecord)> {
        let table = match self.cache.get(state) {
            Some(t) => t.clone(),
            None => {
                let t: Arc<[(State, f64)]> = self.process.step(state)?.cumulative().into();
                if self.cache.len() >= self.cache_limit {
                    self.cache.clear();
                }
                self.cache.insert(state.clone(), t.clone());
                t
            }
        };
        let next = sample_cumulative(&table, rng).clone();
        let mv = validate_move(self.process.graph(), state, &next)?;
        Ok((next, mv))
    }
}

/// The pinned generator used for every simulation.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs `rounds` full rounds from a state drawn from `p.initial()`.
pub fn run(p: &dyn CouplingProcess, rounds: usize, seed: u64) -> Result<TrajectoryLog> {
    let mut rng = rng_from_seed(seed);
    let mut state = p.sample_initial(&mut rng)?;
    let k = p.walkers();
    let waves = p.flags().waves;
    let mut log = TrajectoryLog::new(p.graph().clone(), k, seed, p.descriptor(), state.positions.clone());
    let mut sim = Simulator::new(p);
    for _ in 0..rounds {
        let mut all_stayed = true;
        for _ in 0..k {
            let (next, mv) = sim.step(&state, &mut rng)?;
            all_stayed &= mv.from == mv.to;
            state = next;
        }
        log.push_round(&state.positions, waves && all_stayed);
    }
    Ok(log)
}

/// Breadth-first enumeration of every state reachable from the support of
/// `p.initial()`.
pub fn reachable_states(p: &dyn TurnMachine, bound: usize) -> Result<Vec<State>> {
    let mut seen: HashSet<State> = HashSet::new();
    let mut order = Vec::new();
    let mut queue = VecDeque::new();
    for s in p.initial()?.outcomes() {
        if seen.insert(s.clone()) {
            queue.push_back(s.clone());
        }
    }
    while let Some(s) = queue.pop_front() {
        if order.len() >= bound {
            return Err(Error::StateSpaceTooLarge { limit: bound });
        }
        for t in p.step(&s)?.outcomes() {
            if seen.insert(t.clone()) {
                queue.push_back(t.clone());
            }
        }
        order.push(s);
    }
    Ok(order)
}

/// Pushes a law over states through one turn.
pub fn push_turn(p: &dyn TurnMachine, law: &Dist<State>) -> Result<Dist<State>> {
    law.bind(|s| p.step(s))
}

/// One round of a trajectory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub positions: Vec<usize>,
    pub moves: Vec<MoveRecord>,
    pub rest_wave: bool,
}

/// Round-by-round trajectory of a coupling.
///
/// Stored compactly as the configuration before every round plus the final
/// configuration; the moves of round `t` are the differences between rows
/// `t` and `t + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrajectoryLog {
    pub graph: GraphSpec,
    pub k: usize,
    pub seed: u64,
    pub construction: String,
    positions: Vec<usize>,
    rest_wave: Vec<bool>,
}

impl TrajectoryLog {
    pub fn new(graph: GraphSpec, k: usize, seed: u64, construction: String, start: Vec<usize>) -> Self {
        assert_eq!(start.len(), k);
        TrajectoryLog { graph, k, seed, construction, positions: start, rest_wave: Vec::new() }
    }

    pub fn push_round(&mut self, after: &[usize], rest_wave: bool) {
        assert_eq!(after.len(), self.k);
        self.positions.extend_from_slice(after);
        self.rest_wave.push(rest_wave);
    }

    pub fn rounds(&self) -> usize {
        self.rest_wave.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds() == 0
    }

    /// Configuration before round `t` (`t == rounds()` gives the final one).
    pub fn positions_at(&self, t: usize) -> &[usize] {
        &self.positions[t * self.k..(t + 1) * self.k]
    }

    pub fn rest_wave(&self, t: usize) -> bool {
        self.rest_wave[t]
    }

    pub fn round(&self, t: usize) -> RoundRecord {
        let before = self.positions_at(t);
        let after = self.positions_at(t + 1);
        RoundRecord {
            t,
            positions: before.to_vec(),
            moves: (0..self.k)
                .map(|j| MoveRecord { walker: j, from: before[j], to: after[j] })
                .collect(),
            rest_wave: self.rest_wave[t],
        }
    }

    /// Positions of walker `j` before every round and at the end.
    pub fn walker_trajectory(&self, j: usize) -> Vec<usize> {
        (0..=self.rounds()).map(|t| self.positions_at(t)[j]).collect()
    }

    /// Builds a log from explicit round records, checking that each round's
    /// moves are in walker order and chain with the next round.
    pub fn from_records(
        graph: GraphSpec,
        k: usize,
        seed: u64,
        construction: String,
        start: Option<Vec<usize>>,
        records: &[RoundRecord],
    ) -> Result<Self> {
        let start = match (records.first(), start) {
            (Some(r), _) => r.positions.clone(),
            (None, Some(s)) => s,
            (None, None) => vec![0; k],
        };
        if start.len() != k {
            return Err(Error::Parse(format!("expected {k} positions, got {}", start.len())));
        }
        let mut log = TrajectoryLog::new(graph, k, seed, construction, start);
        for (t, r) in records.iter().enumerate() {
            if r.t != t || r.positions.as_slice() != log.positions_at(t) || r.moves.len() != k {
                return Err(Error::Parse(format!("round {t} does not chain with its predecessor")));
            }
            let mut after = r.positions.clone();
            for (j, m) in r.moves.iter().enumerate() {
                if m.walker != j || m.from != r.positions[j] || m.to >= log.graph.n {
                    return Err(Error::Parse(format!("round {t}: malformed move {m:?}")));
                }
                after[j] = m.to;
            }
            log.push_round(&after, r.rest_wave);
        }
        Ok(log)
    }

    pub fn header_json(&self) -> Value {
        json!({
            "n": self.graph.n,
            "loop_mode": self.graph.loop_mode.to_json(),
            "k": self.k,
            "seed": self.seed,
            "construction": self.construction,
            "initial_positions": self.positions_at(0),
        })
    }

    /// JSON Lines: a header object followed by one object per round.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header_json())?;
        for t in 0..self.rounds() {
            writeln!(w, "{}", serde_json::to_string(&self.round(t))?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header: Value = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => return Err(Error::Parse("missing header line".into())),
        };
        let field = |name: &str| {
            header.get(name).ok_or_else(|| Error::Parse(format!("header lacks `{name}`")))
        };
        let n = field("n")?.as_u64().ok_or_else(|| Error::Parse("bad n".into()))? as usize;
        let k = field("k")?.as_u64().ok_or_else(|| Error::Parse("bad k".into()))? as usize;
        let seed = field("seed")?.as_u64().ok_or_else(|| Error::Parse("bad seed".into()))?;
        let loop_mode = LoopMode::from_json(field("loop_mode")?)?;
        let construction = field("construction")?.as_str().unwrap_or_default().to_string();
        let start = header
            .get("initial_positions")
            .map(|v| serde_json::from_value::<Vec<usize>>(v.clone()))
            .transpose()?;
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str::<RoundRecord>(&line)?);
        }
        let graph = GraphSpec { n, loop_mode };
        Self::from_records(graph, k, seed, construction, start, &records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::ratio;

    #[test]
    fn unlooped_kernel_is_uniform_on_other_vertices() {
        let g = GraphSpec::unlooped(5).unwrap();
        let d = target_kernel(&g, 2);
        assert_eq!(d.len(), 4);
        for u in [0, 1, 3, 4] {
            assert_eq!(d.get(&u), Prob::ratio(1, 4));
        }
        assert!(d.get(&2).is_zero());
    }

    #[test]
    fn looped_kernel_stays_with_one_over_n() {
        let g = GraphSpec::looped(4).unwrap();
        let d = target_kernel(&g, 0);
        for u in 0..4 {
            assert_eq!(d.get(&u), Prob::ratio(1, 4));
        }
    }

    #[test]
    fn hold_kernel_splits_the_remainder() {
        let g = GraphSpec::hold(ratio(3, 5)).unwrap();
        let d = target_kernel(&g, 1);
        assert_eq!(d.get(&1), Prob::ratio(3, 5));
        assert_eq!(d.get(&0), Prob::ratio(1, 5));
        assert_eq!(d.get(&2), Prob::ratio(1, 5));
    }

    #[test]
    fn graph_validation() {
        assert!(GraphSpec::unlooped(1).is_err());
        assert!(GraphSpec::hold(ratio(1, 1)).is_err());
        assert!(GraphSpec::hold(ratio(-1, 3)).is_err());
    }

    #[test]
    fn move_onto_occupied_vertex_is_a_collision() {
        let g = GraphSpec::unlooped(4).unwrap();
        let a = State::new(vec![0, 1], 0);
        let b = State::new(vec![1, 1], 1);
        assert!(matches!(validate_move(&g, &a, &b), Err(Error::Collision { occupant: 1, .. })));
    }

    #[test]
    fn log_rejects_broken_chains() {
        let g = GraphSpec::looped(3).unwrap();
        let rec = RoundRecord {
            t: 0,
            positions: vec![0, 1],
            moves: vec![
                MoveRecord { walker: 0, from: 0, to: 2 },
                MoveRecord { walker: 1, from: 1, to: 0 },
            ],
            rest_wave: false,
        };
        let mut bad = rec.clone();
        bad.t = 0;
        bad.positions = vec![2, 0];
        let mut second = bad.clone();
        second.t = 1;
        second.positions = vec![1, 1];
        assert!(TrajectoryLog::from_records(g.clone(), 2, 0, "x".into(), None, std::slice::from_ref(&rec)).is_ok());
        assert!(TrajectoryLog::from_records(g, 2, 0, "x".into(), None, &[rec, second]).is_err());
    }
}
