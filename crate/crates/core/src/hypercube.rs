//! Hypercube-indexed couplings of up to `2^d` walkers on `K_{2^{d+1}+1}`,
//! `K*_{2^{d+1}}` and `K*_{2^{d+1}+1}`, walker-subset reduction, and
//! stripping of rest waves.
//!
//! Walker `j` with binary digits `j_i` sits at `X0 + Σ j_i ε_i 2^i (mod n)`,
//! and the next round's walker 0 goes to `X_ω + 2^d + δ (mod n)` where
//! `ω = 2^d − 1`. Each bit is drawn the first time a kept walker needs it.

use std::fmt;

use rand::RngCore;

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::prob::{ratio, Prob, Rational};
use crate::process::{CouplingProcess, Flags, GraphSpec, IndexCache, Process, State, TurnMachine};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// `K_n` with `n = 2^{d+1} + 1`.
    UnloopedPlus1,
    /// `K_n*` with `n = 2^{d+1}`.
    LoopedPow2,
    /// `K_n*` with `n = 2^{d+1} + 1`; each round rests with probability `1/n`.
    LoopedPlus1,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::UnloopedPlus1 => "unlooped_plus1",
            Variant::LoopedPow2 => "looped_pow2",
            Variant::LoopedPlus1 => "looped_plus1",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unlooped_plus1" => Ok(Variant::UnloopedPlus1),
            "looped_pow2" => Ok(Variant::LoopedPow2),
            "looped_plus1" => Ok(Variant::LoopedPlus1),
            other => Err(Error::Parse(format!("unknown hypercube variant `{other}`"))),
        }
    }

    pub fn vertices(self, d: u32) -> usize {
        match self {
            Variant::LoopedPow2 => 1 << (d + 1),
            _ => (1 << (d + 1)) + 1,
        }
    }

    pub fn looped(self) -> bool {
        self != Variant::UnloopedPlus1
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypercubeParams {
    pub d: u32,
    pub variant: Variant,
    /// Kept walker indices; `None` keeps all `2^d`.
    pub walkers: Option<Vec<usize>>,
    /// Probability that `δ = 1`; anything but `1/2` breaks faithfulness and
    /// exists for mutation testing.
    pub delta_bias: Option<Rational>,
}

impl HypercubeParams {
    pub fn new(d: u32, variant: Variant) -> Self {
        HypercubeParams { d, variant, walkers: None, delta_bias: None }
    }

    pub fn with_walkers(mut self, walkers: Vec<usize>) -> Self {
        self.walkers = Some(walkers);
        self
    }
}

/// Per-round randomness as recorded in a mid-round state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundBits {
    pub rest: bool,
    /// `ε_i`, or `None` while not yet drawn this round.
    pub eps: Vec<Option<i8>>,
}

const MAX_DIMENSION: u32 = 20;
const UNKNOWN: i64 = 0;
const PLUS: i64 = 1;
const MINUS: i64 = 2;

#[derive(Debug)]
pub struct Hypercube {
    graph: GraphSpec,
    d: u32,
    variant: Variant,
    walkers: Vec<usize>,
    delta_one: Prob,
    cache: IndexCache,
}

pub fn build_hypercube(params: HypercubeParams) -> Result<Hypercube> {
    let HypercubeParams { d, variant, walkers, delta_bias } = params;
    if d > MAX_DIMENSION {
        return Err(Error::BadParam(format!("dimension {d} exceeds {MAX_DIMENSION}")));
    }
    let full = 1usize << d;
    let omega = full - 1;
    let mut walkers = walkers.unwrap_or_else(|| (0..full).collect());
    walkers.sort_unstable();
    walkers.dedup();
    if walkers.first() != Some(&0) || !walkers.contains(&omega) {
        return Err(Error::BadWalkerSet(format!("{walkers:?} must contain 0 and {omega}")));
    }
    if let Some(&j) = walkers.iter().find(|&&j| j > omega) {
        return Err(Error::BadWalkerSet(format!("walker {j} outside [0, {omega}]")));
    }
    let delta_one = match delta_bias {
        Some(q) if q < ratio(0, 1) || q > ratio(1, 1) => {
            return Err(Error::BadParam(format!("delta bias {q} is not a probability")))
        }
        Some(q) => Prob::from_rational(q),
        None => Prob::ratio(1, 2),
    };
    Ok(Hypercube {
        graph: GraphSpec::complete(variant.vertices(d), variant.looped())?,
        d,
        variant,
        walkers,
        delta_one,
        cache: IndexCache::new(),
    })
}

/// Restricts `p` to the walkers in `keep`, which must contain `0` and `ω`.
pub fn reduce_walkers(p: &Hypercube, keep: &[usize]) -> Result<Hypercube> {
    if let Some(j) = keep.iter().find(|j| !p.walkers.contains(j)) {
        return Err(Error::BadWalkerSet(format!("walker {j} is not in {:?}", p.walkers)));
    }
    build_hypercube(HypercubeParams {
        d: p.d,
        variant: p.variant,
        walkers: Some(keep.to_vec()),
        delta_bias: (p.delta_one != Prob::ratio(1, 2)).then(|| p.delta_one.rational_part().clone()),
    })
}

impl Hypercube {
    pub fn dimension(&self) -> u32 {
        self.d
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn walker_set(&self) -> &[usize] {
        &self.walkers
    }

    pub fn omega(&self) -> usize {
        (1 << self.d) - 1
    }

    pub fn is_full(&self) -> bool {
        self.walkers.len() == 1 << self.d
    }

    pub fn rest_prob(&self) -> Prob {
        match self.variant {
            Variant::LoopedPlus1 => Prob::ratio(1, self.graph.n as i64),
            _ => Prob::zero(),
        }
    }

    /// Flag rule: a walker whose index is not a power of two is only safe to
    /// keep when every power of two in its binary expansion is also kept.
    pub fn markovian_flag(&self) -> bool {
        let omega = self.omega();
        self.walkers.iter().all(|&j| {
            j == 0
                || j == omega
                || j.is_power_of_two()
                || bits_of(j).all(|i| self.walkers.contains(&(1 << i)))
        })
    }

    /// Position of walker `j` given the round origin `x0` and signs `eps`.
    pub fn place(&self, x0: usize, eps: &[i8], j: usize) -> usize {
        let n = self.graph.n as i64;
        let offset: i64 = bits_of(j).map(|i| i64::from(eps[i as usize]) << i).sum();
        (x0 as i64 + offset).rem_euclid(n) as usize
    }

    /// Walker 0's next position given `X_ω` and `δ`.
    pub fn next_origin(&self, x_omega: usize, delta: usize) -> usize {
        (x_omega + (1 << self.d) + delta) % self.graph.n
    }

    pub fn round_bits(&self, state: &State) -> RoundBits {
        let mem = &state.memory;
        RoundBits {
            rest: mem.first() == Some(&1),
            eps: (0..self.d as usize)
                .map(|i| match mem.get(i + 1) {
                    Some(&PLUS) => Some(1),
                    Some(&MINUS) => Some(-1),
                    _ => None,
                })
                .collect(),
        }
    }

    fn origin_step(&self, st: &State) -> Dist<State> {
        let k = self.walkers.len();
        let x_omega = st.positions[k - 1];
        let next_turn = 1 % k;
        let fresh = |rest: i64| {
            if k == 1 {
                Vec::new()
            } else {
                let mut m = vec![UNKNOWN; self.d as usize + 1];
                m[0] = rest;
                m
            }
        };
        let mut d = Dist::empty();
        let rest = self.rest_prob();
        let go = rest.complement();
        d.add(State::new(st.positions.clone(), next_turn).with_memory(fresh(1)), rest);
        for (delta, w) in [(0, self.delta_one.complement()), (1, self.delta_one.clone())] {
            let mut pos = st.positions.clone();
            pos[0] = self.next_origin(x_omega, delta);
            d.add(State::new(pos, next_turn).with_memory(fresh(0)), &go * &w);
        }
        d
    }

    fn follower_step(&self, st: &State) -> Dist<State> {
        let k = self.walkers.len();
        let t = st.turn;
        let next_turn = (t + 1) % k;
        let finish = |pos: Vec<usize>, memory: Vec<i64>| {
            let memory = if next_turn == 0 { Vec::new() } else { memory };
            State::new(pos, next_turn).with_memory(memory)
        };
        if st.memory[0] == 1 {
            return Dist::point(finish(st.positions.clone(), st.memory.clone()));
        }
        let j = self.walkers[t];
        let unknown: Vec<u32> = bits_of(j).filter(|&i| st.memory[i as usize + 1] == UNKNOWN).collect();
        let mut d = Dist::empty();
        let w = Prob::ratio(1, 1 << unknown.len());
        for pattern in 0..1usize << unknown.len() {
            let mut memory = st.memory.clone();
            for (b, &i) in unknown.iter().enumerate() {
                memory[i as usize + 1] = if pattern >> b & 1 == 1 { MINUS } else { PLUS };
            }
            let eps: Vec<i8> = memory[1..].iter().map(|&m| if m == MINUS { -1 } else { 1 }).collect();
            let mut pos = st.positions.clone();
            pos[t] = self.place(st.positions[0], &eps, j);
            d.add(finish(pos, memory), w.clone());
        }
        d
    }
}

fn bits_of(j: usize) -> impl Iterator<Item = u32> {
    (0..usize::BITS).filter(move |&i| j >> i & 1 == 1)
}

impl TurnMachine for Hypercube {
    fn walkers(&self) -> usize {
        self.walkers.len()
    }

    /// Uniform origin and independent fair signs.
    fn initial(&self) -> Result<Dist<State>> {
        let d = self.d as usize;
        let mut law = Dist::empty();
        let w = Prob::ratio(1, (self.graph.n << d) as i64);
        for x0 in 0..self.graph.n {
            for pattern in 0..1usize << d {
                let eps: Vec<i8> = (0..d).map(|i| if pattern >> i & 1 == 1 { -1 } else { 1 }).collect();
                let pos = self.walkers.iter().map(|&j| self.place(x0, &eps, j)).collect();
                law.add(State::new(pos, 0), w.clone());
            }
        }
        Ok(law)
    }

    fn step(&self, st: &State) -> Result<Dist<State>> {
        if st.turn == 0 {
            Ok(self.origin_step(st))
        } else if st.memory.len() == self.d as usize + 1 {
            Ok(self.follower_step(st))
        } else {
            Err(Error::InvalidState(format!("{st:?}")))
        }
    }
}

impl CouplingProcess for Hypercube {
    fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    fn flags(&self) -> Flags {
        Flags {
            markovian: self.markovian_flag(),
            waves: self.variant == Variant::LoopedPlus1,
            min_entropy: self.is_full(),
            memory_depth: 0,
        }
    }

    fn descriptor(&self) -> String {
        format!("hypercube(d={}, {}, walkers={:?})", self.d, self.variant, self.walkers)
    }

    fn index_cache(&self) -> &IndexCache {
        &self.cache
    }

    fn sampler_cost(&self) -> usize {
        self.graph.n << self.d
    }
}

/// A waves coupling on `K_n*` with every all-rest round deleted, as a
/// coupling on `K_n`.
#[derive(Debug)]
pub struct WaveStripped {
    inner: Process,
    graph: GraphSpec,
    cache: IndexCache,
}

pub fn wave_strip(p: Process) -> Result<WaveStripped> {
    if !p.flags().waves || !p.graph().is_looped() {
        return Err(Error::NotWaves);
    }
    let graph = GraphSpec::unlooped(p.graph().n)?;
    Ok(WaveStripped { inner: p, graph, cache: IndexCache::new() })
}

impl WaveStripped {
    pub fn inner(&self) -> &Process {
        &self.inner
    }
}

impl TurnMachine for WaveStripped {
    fn walkers(&self) -> usize {
        self.inner.walkers()
    }

    fn initial(&self) -> Result<Dist<State>> {
        self.inner.initial()
    }

    fn step(&self, st: &State) -> Result<Dist<State>> {
        let law = self.inner.step(st)?;
        if st.turn != 0 {
            return Ok(law);
        }
        let moving = law.filter(|t| t.positions[0] != st.positions[0]);
        if moving.is_empty() {
            return Err(Error::InvalidState(format!("walker 0 cannot move from {st:?}")));
        }
        Ok(moving.normalized())
    }
}

impl CouplingProcess for WaveStripped {
    fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    fn flags(&self) -> Flags {
        Flags { waves: false, ..self.inner.flags() }
    }

    fn descriptor(&self) -> String {
        format!("wave_strip({})", self.inner.descriptor())
    }

    fn index_cache(&self) -> &IndexCache {
        &self.cache
    }

    fn conditional_position(&self, placed: &[usize]) -> Result<Dist<usize>> {
        self.inner.conditional_position(placed)
    }

    fn conditional_state(&self, positions: &[usize]) -> Result<Dist<State>> {
        self.inner.conditional_state(positions)
    }

    fn approximate(&self) -> bool {
        self.inner.approximate()
    }

    fn sampler_cost(&self) -> usize {
        self.inner.sampler_cost()
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Result<State> {
        self.inner.sample_initial(rng)
    }
}

/// All sign patterns of a `d`-dimensional round.
fn sign_patterns(d: u32) -> impl Iterator<Item = Vec<i64>> {
    (0..1usize << d).map(move |p| (0..d).map(|i| if p >> i & 1 == 1 { -1 } else { 1 }).collect())
}

fn offset(j: usize, eps: &[i64]) -> i64 {
    bits_of(j).map(|i| eps[i as usize] << i).sum()
}

/// First `(j, j′, ε)` with `X_{j′} ≡ X_j (mod n)` inside a round.
pub fn within_round_collision(d: u32, n: usize) -> Option<(usize, usize, Vec<i64>)> {
    let n = n as i64;
    for eps in sign_patterns(d) {
        for j in 0..1usize << d {
            for jp in j + 1..1usize << d {
                if (offset(jp, &eps) - offset(j, &eps)).rem_euclid(n) == 0 {
                    return Some((j, jp, eps));
                }
            }
        }
    }
    None
}

/// Checks `X_j(t+1) − X_{j′}(t) ∈ [2 + δ, 2^{d+1} − 2 + δ]` for all `j < j′`
/// and all bits; returns the first violation as `(j, j′, Δ)`.
pub fn between_round_violation(d: u32) -> Option<(usize, usize, i64)> {
    let omega = (1usize << d) - 1;
    for delta in 0..=1i64 {
        for now in sign_patterns(d) {
            for next in sign_patterns(d) {
                for j in 0..=omega {
                    for jp in j + 1..=omega {
                        // Relative to X_0(t): X_ω(t) + 2^d + δ + offset(j, next) − offset(j′, now).
                        let delta_pos = offset(omega, &now) + (1 << d) + delta + offset(j, &next)
                            - offset(jp, &now);
                        let lo = 2 + delta;
                        let hi = (2i64 << d) - 2 + delta;
                        if delta_pos < lo || delta_pos > hi {
                            return Some((j, jp, delta_pos));
                        }
                    }
                }
            }
        }
    }
    None
}

/// For `n = 2^{d+1} + 1`: given `X_ω(t)`, the possible values of `X_0(t)`
/// and of `X_0(t+1)` never coincide. Returns a shared vertex if they do.
pub fn wave_overlap(d: u32) -> Option<usize> {
    let n = (2i64 << d) + 1;
    let omega = (1usize << d) - 1;
    let x_omega = 0i64;
    let current: Vec<i64> =
        sign_patterns(d).map(|eps| (x_omega - offset(omega, &eps)).rem_euclid(n)).collect();
    (0..=1)
        .map(|delta| (x_omega + (1 << d) + delta).rem_euclid(n))
        .find(|v| current.contains(v))
        .map(|v| v as usize)
}
