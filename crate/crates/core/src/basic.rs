//! Two-walker couplings: `K_3` with hold probability `s`, and cluster
//! couplings on `K_n` / `K_n*` for composite `n = ab`.

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::prob::{ratio, Prob, Rational};
use crate::process::{CouplingProcess, Flags, GraphSpec, IndexCache, State, TurnMachine};

const ALICE: usize = 0;
const BOB: usize = 1;

fn third(a: usize, b: usize) -> usize {
    3 - a - b
}

fn ordered_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
}

fn moved(state: &State, to: usize, memory: Vec<i64>) -> State {
    let mut positions = state.positions.clone();
    positions[state.turn] = to;
    State::new(positions, (state.turn + 1) % 2).with_memory(memory)
}

/// Non-Markovian coupling on `K_3` with hold probability `s ≥ 1/3`.
///
/// Each round either rests jointly with probability `r = (3s − 1)/2`, or
/// moves the ordered pair uniformly to one of the three reachable pairs other
/// than the current one. Bob's memory records what Alice just did.
#[derive(Debug)]
pub struct K3NonMarkovian {
    graph: GraphSpec,
    rest: Prob,
    cache: IndexCache,
}

/// Bob's memory values.
const ALICE_MOVED: i64 = 0;
const ALICE_STAYED: i64 = 1;
const RESTING: i64 = 2;

pub fn build_k3_nonmarkovian(s: Rational) -> Result<K3NonMarkovian> {
    if s < ratio(1, 3) || s >= ratio(1, 1) {
        return Err(Error::InfeasibleS { s: s.to_string(), reason: "requires 1/3 <= s < 1" });
    }
    let rest = (s.clone() * ratio(3, 1) - ratio(1, 1)) / ratio(2, 1);
    Ok(K3NonMarkovian { graph: GraphSpec::hold(s)?, rest: rest.into(), cache: IndexCache::new() })
}

impl K3NonMarkovian {
    pub fn rest_prob(&self) -> &Prob {
        &self.rest
    }
}

impl TurnMachine for K3NonMarkovian {
    fn walkers(&self) -> usize {
        2
    }

    fn initial(&self) -> Result<Dist<State>> {
        Ok(Dist::uniform(ordered_pairs(3).map(|(a, b)| State::new(vec![a, b], ALICE))))
    }

    fn step(&self, st: &State) -> Result<Dist<State>> {
        let (a, b) = (st.positions[0], st.positions[1]);
        let mut d = Dist::empty();
        if st.turn == ALICE {
            let go = self.rest.complement();
            d.add(moved(st, a, vec![RESTING]), self.rest.clone());
            d.add(moved(st, a, vec![ALICE_STAYED]), &go * &Prob::ratio(1, 3));
            d.add(moved(st, third(a, b), vec![ALICE_MOVED]), &go * &Prob::ratio(2, 3));
        } else {
            match st.memory.first().copied() {
                Some(RESTING) => d.add(moved(st, b, vec![]), Prob::one()),
                Some(ALICE_STAYED) => d.add(moved(st, third(a, b), vec![]), Prob::one()),
                Some(ALICE_MOVED) => {
                    d.add(moved(st, b, vec![]), Prob::ratio(1, 2));
                    d.add(moved(st, third(a, b), vec![]), Prob::ratio(1, 2));
                }
                _ => return Err(Error::InvalidState(format!("{st:?}"))),
            }
        }
        Ok(d)
    }
}

impl CouplingProcess for K3NonMarkovian {
    fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    fn flags(&self) -> Flags {
        Flags { markovian: false, waves: false, min_entropy: false, memory_depth: 1 }
    }

    fn descriptor(&self) -> String {
        format!("k3_nonmarkovian({})", self.graph)
    }

    fn index_cache(&self) -> &IndexCache {
        &self.cache
    }
}

/// Which root of `x(1 − x) = (1 − s)/2` is used as `p`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RootChoice {
    #[default]
    Larger,
    Smaller,
}

/// Markovian coupling on `K_3` with hold probability `s ≥ 1/2`.
///
/// With the other walker at `v`, a walker at `u` stays with probability
/// `P[(alice, bob)]`, where `P[(i, i+1)] = p` and `P[(i+1, i)] = 1 − p`;
/// otherwise it moves to the free vertex.
#[derive(Debug)]
pub struct K3Markovian {
    graph: GraphSpec,
    p: Prob,
    cache: IndexCache,
}

pub fn build_k3_markovian(s: Rational) -> Result<K3Markovian> {
    build_k3_markovian_with_root(s, RootChoice::Larger)
}

pub fn build_k3_markovian_with_root(s: Rational, root: RootChoice) -> Result<K3Markovian> {
    if s < ratio(1, 2) || s >= ratio(1, 1) {
        return Err(Error::InfeasibleS { s: s.to_string(), reason: "requires 1/2 <= s < 1" });
    }
    let disc = Prob::sqrt_rational(&(s.clone() * ratio(2, 1) - ratio(1, 1)));
    let half = Prob::ratio(1, 2);
    let p = match root {
        RootChoice::Larger => &(Prob::one() + disc) * &half,
        RootChoice::Smaller => &(Prob::one() - disc) * &half,
    };
    Ok(K3Markovian { graph: GraphSpec::hold(s)?, p, cache: IndexCache::new() })
}

impl K3Markovian {
    pub fn p(&self) -> &Prob {
        &self.p
    }

    /// Stay probability of the mover when Alice is at `a` and Bob at `b`.
    pub fn hold_table(&self, a: usize, b: usize) -> Prob {
        if b == (a + 1) % 3 {
            self.p.clone()
        } else {
            self.p.complement()
        }
    }
}

impl TurnMachine for K3Markovian {
    fn walkers(&self) -> usize {
        2
    }

    /// Stationary round law: pairs with Bob one step ahead of Alice carry
    /// `p/3`, the others `(1 − p)/3`.
    fn initial(&self) -> Result<Dist<State>> {
        let mut d = Dist::empty();
        for (a, b) in ordered_pairs(3) {
            d.add(State::new(vec![a, b], ALICE), &self.hold_table(a, b) * &Prob::ratio(1, 3));
        }
        Ok(d)
    }

    fn step(&self, st: &State) -> Result<Dist<State>> {
        let (a, b) = (st.positions[0], st.positions[1]);
        let stay = self.hold_table(a, b);
        let mut d = Dist::empty();
        d.add(moved(st, st.positions[st.turn], vec![]), stay.clone());
        d.add(moved(st, third(a, b), vec![]), stay.complement());
        Ok(d)
    }
}

impl CouplingProcess for K3Markovian {
    fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    fn flags(&self) -> Flags {
        Flags { markovian: true, waves: false, min_entropy: false, memory_depth: 0 }
    }

    fn descriptor(&self) -> String {
        format!("k3_markovian({}, p={})", self.graph, self.p)
    }

    fn index_cache(&self) -> &IndexCache {
        &self.cache
    }
}

/// Two walkers on `K_{ab}` or `K_{ab}*` with `b` clusters of `a` vertices.
///
/// At Alice's turn the walkers occupy different clusters. Cluster `c` is the
/// block `[ca, (c + 1)a)`.
#[derive(Debug)]
pub struct Composite {
    graph: GraphSpec,
    a: usize,
    b: usize,
    min_entropy: bool,
    switch: Prob,
    cache: IndexCache,
}

/// Parameters for [`build_composite_with`]; `switch_override` replaces the
/// faithful switch probability and exists for mutation testing.
#[derive(Clone, Debug, Default)]
pub struct CompositeOptions {
    pub min_entropy: bool,
    pub switch_override: Option<Rational>,
}

pub fn build_composite(a: usize, b: usize, looped: bool) -> Result<Composite> {
    build_composite_with(a, b, looped, CompositeOptions::default())
}

pub fn build_composite_min_entropy(a: usize, b: usize) -> Result<Composite> {
    build_composite_with(a, b, false, CompositeOptions { min_entropy: true, switch_override: None })
}

pub fn build_composite_with(a: usize, b: usize, looped: bool, opts: CompositeOptions) -> Result<Composite> {
    if a < 2 || b < 2 {
        return Err(Error::BadFactors { a, b });
    }
    if opts.min_entropy && looped {
        return Err(Error::BadParam("the cyclic variant is defined on K_n only".into()));
    }
    let (ai, bi) = (a as i64, b as i64);
    let switch = match opts.switch_override {
        Some(r) => Prob::from_rational(r),
        None if looped => Prob::ratio(bi - 1, bi),
        None => Prob::ratio(ai * (bi - 1), ai * bi - 1),
    };
    Ok(Composite {
        graph: GraphSpec::complete(a * b, looped)?,
        a,
        b,
        min_entropy: opts.min_entropy,
        switch,
        cache: IndexCache::new(),
    })
}

impl Composite {
    pub fn switch_prob(&self) -> &Prob {
        &self.switch
    }

    pub fn cluster(&self, v: usize) -> usize {
        v / self.a
    }

    fn members(&self, c: usize) -> std::ops::Range<usize> {
        c * self.a..(c + 1) * self.a
    }

    /// Cyclic shift by `c` within the cluster of `v`.
    fn shift(&self, v: usize, c: usize) -> usize {
        let base = self.cluster(v) * self.a;
        base + (v - base + c) % self.a
    }

    fn looped(&self) -> bool {
        self.graph.is_looped()
    }

    /// Uniform vertex of the cluster of `v`, excluding `v` on `K_n`.
    fn within(&self, v: usize) -> Dist<usize> {
        let c = self.cluster(v);
        Dist::uniform(self.members(c).filter(|&u| self.looped() || u != v))
    }

    fn alice(&self, st: &State) -> Dist<State> {
        let (x, y) = (st.positions[0], st.positions[1]);
        let mut d = Dist::empty();
        let stay = self.switch.complement();
        if self.min_entropy {
            d.add(moved(st, self.shift(y, 1), vec![0]), self.switch.clone());
            let each = &stay * &Prob::ratio(1, self.a as i64 - 1);
            for c in 1..self.a {
                d.add(moved(st, self.shift(x, c), vec![c as i64]), each.clone());
            }
        } else {
            let target = Dist::uniform(self.members(self.cluster(y)).filter(|&u| u != y));
            d.add_scaled(&target.map(|&u| moved(st, u, vec![])), &self.switch);
            d.add_scaled(&self.within(x).map(|&u| moved(st, u, vec![])), &stay);
        }
        d
    }

    fn bob(&self, st: &State) -> Result<Dist<State>> {
        let (x, y) = (st.positions[0], st.positions[1]);
        if self.cluster(x) == self.cluster(y) {
            let away = (0..self.b)
                .filter(|&c| c != self.cluster(y))
                .flat_map(|c| self.members(c));
            return Ok(Dist::uniform(away.map(|u| moved(st, u, vec![]))));
        }
        if self.min_entropy {
            let c = match st.memory.first() {
                Some(&c) if c > 0 => c as usize,
                _ => return Err(Error::InvalidState(format!("{st:?}"))),
            };
            return Ok(Dist::point(moved(st, self.shift(y, c), vec![])));
        }
        Ok(self.within(y).map(|&u| moved(st, u, vec![])))
    }
}

impl TurnMachine for Composite {
    fn walkers(&self) -> usize {
        2
    }

    fn initial(&self) -> Result<Dist<State>> {
        let n = self.a * self.b;
        Ok(Dist::uniform(
            ordered_pairs(n)
                .filter(|&(x, y)| self.cluster(x) != self.cluster(y))
                .map(|(x, y)| State::new(vec![x, y], ALICE)),
        ))
    }

    fn step(&self, st: &State) -> Result<Dist<State>> {
        match st.turn {
            ALICE => Ok(self.alice(st)),
            BOB => self.bob(st),
            _ => Err(Error::InvalidState(format!("{st:?}"))),
        }
    }
}

impl CouplingProcess for Composite {
    fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    fn flags(&self) -> Flags {
        Flags {
            markovian: !self.min_entropy,
            waves: false,
            min_entropy: self.min_entropy || (!self.looped() && self.a == 2),
            memory_depth: u32::from(self.min_entropy),
        }
    }

    fn descriptor(&self) -> String {
        let kind = if self.min_entropy { "composite_min_entropy" } else { "composite" };
        format!("{kind}(a={}, b={}, {})", self.a, self.b, self.graph)
    }

    fn index_cache(&self) -> &IndexCache {
        &self.cache
    }
}
