//! Building couplings from couplings: Bernoulli extraction and thinning,
//! lifting `K_n*` to `K*_{n+1}`, products on looped graphs, and cluster sums.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::RngCore;

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::prob::{ratio, Prob, Rational};
use crate::process::{
    rng_from_seed, CouplingProcess, Flags, GraphSpec, IndexCache, LoopMode, Process,
    StationaryIndex, State, TrajectoryLog, TurnMachine,
};

/// `k` turn-taking `Bern(p)` walkers of which at most one shows `1` at a time.
///
/// States carry the current values in `positions` and the source state in
/// `inner[0]`.
#[derive(Debug)]
pub struct BernoulliProcess {
    k: usize,
    p: Prob,
    kind: BernKind,
}

#[derive(Debug)]
enum BernKind {
    Extract { source: Process, vertex: usize },
    Thin { base: Arc<BernoulliProcess>, coin: Prob },
}

/// Marks `vertex` of a coupling on `K_n*`, giving `Bern(1/n)` walkers.
pub fn bernoulli_extract(source: Process, vertex: usize) -> Result<BernoulliProcess> {
    let g = source.graph();
    if g.loop_mode != LoopMode::LoopedUnit {
        return Err(Error::BadParam(format!("extraction needs a K_n* source, got {g}")));
    }
    if vertex >= g.n {
        return Err(Error::BadParam(format!("vertex {vertex} outside {g}")));
    }
    Ok(BernoulliProcess {
        k: source.walkers(),
        p: Prob::ratio(1, g.n as i64),
        kind: BernKind::Extract { source, vertex },
    })
}

/// Keeps each `1` independently with probability `q/p`.
pub fn bernoulli_thin(base: Arc<BernoulliProcess>, q: Rational) -> Result<BernoulliProcess> {
    let q = Prob::from_rational(q);
    if q > base.p || q.signum() < 0 {
        return Err(Error::BadThin { p: base.p.to_string(), q: q.to_string() });
    }
    let coin = &q / &base.p;
    Ok(BernoulliProcess { k: base.k, p: q, kind: BernKind::Thin { base, coin } })
}

/// Thinning with an explicit coin while declaring parameter `declared`.
/// Only [`bernoulli_thin`] is faithful; this exists for mutation testing.
pub fn bernoulli_thin_with_coin(
    base: Arc<BernoulliProcess>,
    declared: Rational,
    coin: Rational,
) -> BernoulliProcess {
    BernoulliProcess {
        k: base.k,
        p: Prob::from_rational(declared),
        kind: BernKind::Thin { base, coin: Prob::from_rational(coin) },
    }
}

impl BernoulliProcess {
    pub fn p(&self) -> &Prob {
        &self.p
    }

    /// Success probability per `1` of the thinning coin, if any.
    pub fn coin(&self) -> Option<&Prob> {
        match &self.kind {
            BernKind::Thin { coin, .. } => Some(coin),
            BernKind::Extract { .. } => None,
        }
    }

    fn source_law(&self, law: Dist<State>) -> Dist<State> {
        match &self.kind {
            BernKind::Extract { vertex, .. } => law.map(|s| State {
                positions: s.positions.iter().map(|&x| usize::from(x == *vertex)).collect(),
                turn: s.turn,
                memory: Vec::new(),
                inner: vec![s.clone()],
            }),
            BernKind::Thin { .. } => unreachable!("thinning wraps a Bernoulli process"),
        }
    }

    fn thin_values(coin: &Prob, values: &[usize], which: &[usize]) -> Dist<Vec<usize>> {
        let mut law = Dist::point(values.to_vec());
        for &j in which {
            if values[j] == 1 {
                law = law
                    .bind(|v| {
                        let mut off = v.clone();
                        off[j] = 0;
                        let mut d = Dist::empty();
                        d.add(v.clone(), coin.clone());
                        d.add(off, coin.complement());
                        Ok::<_, Error>(d)
                    })
                    .expect("infallible");
            }
        }
        law
    }
}

impl TurnMachine for BernoulliProcess {
    fn walkers(&self) -> usize {
        self.k
    }

    fn initial(&self) -> Result<Dist<State>> {
        match &self.kind {
            BernKind::Extract { source, .. } => Ok(self.source_law(source.initial()?)),
            BernKind::Thin { base, coin } => base.initial()?.bind(|b| {
                let all: Vec<usize> = (0..self.k).collect();
                Ok(Self::thin_values(coin, &b.positions, &all).map(|v| State {
                    positions: v.clone(),
                    turn: b.turn,
                    memory: Vec::new(),
                    inner: vec![b.clone()],
                }))
            }),
        }
    }

    fn step(&self, st: &State) -> Result<Dist<State>> {
        let inner = st.inner.first().ok_or_else(|| Error::InvalidState(format!("{st:?}")))?;
        match &self.kind {
            BernKind::Extract { source, .. } => Ok(self.source_law(source.step(inner)?)),
            BernKind::Thin { base, coin } => base.step(inner)?.bind(|b| {
                let t = st.turn;
                let mut values = st.positions.clone();
                values[t] = b.positions[t];
                Ok(Self::thin_values(coin, &values, &[t]).map(|v| State {
                    positions: v.clone(),
                    turn: b.turn,
                    memory: Vec::new(),
                    inner: vec![b.clone()],
                }))
            }),
        }
    }
}

/// Per-round Bernoulli values read off a trajectory: `values[t][j]` is `1`
/// iff walker `j` is at `vertex` after its move in round `t`.
pub fn bernoulli_values(log: &TrajectoryLog, vertex: usize) -> Vec<Vec<u8>> {
    (1..=log.rounds())
        .map(|t| log.positions_at(t).iter().map(|&x| u8::from(x == vertex)).collect())
        .collect()
}

/// A coupling on `K*_{n+1}`: walker `j` sits at vertex `n` while its
/// Bernoulli walker shows `1`, and at its base position otherwise.
#[derive(Debug)]
pub struct Lift {
    base: Process,
    bern: Arc<BernoulliProcess>,
    graph: GraphSpec,
    cache: IndexCache,
}

pub fn lift(base: Process, bern: Arc<BernoulliProcess>) -> Result<Lift> {
    let g = base.graph();
    if g.loop_mode != LoopMode::LoopedUnit {
        return Err(Error::BadParam(format!("lift needs a K_n* coupling, got {g}")));
    }
    if bern.k != base.walkers() {
        return Err(Error::KMismatch { left: base.walkers(), right: bern.k });
    }
    let target = Prob::ratio(1, g.n as i64 + 1);
    if bern.p != target {
        return Err(Error::BadParam(format!("Bernoulli parameter {} must be {target}", bern.p)));
    }
    let graph = GraphSpec::looped(g.n + 1)?;
    Ok(Lift { base, bern, graph, cache: IndexCache::new() })
}

/// Lifts `base` using the thinned vertex-1 indicators of an independent copy
/// of itself.
pub fn lift_default(base: Process) -> Result<Lift> {
    let n = base.graph().n as i64;
    let extracted = Arc::new(bernoulli_extract(base.clone(), 1.min(base.graph().n - 1))?);
    let thinned = bernoulli_thin(extracted, ratio(1, n + 1))?;
    lift(base, Arc::new(thinned))
}

impl Lift {
    fn combine(&self, base: &State, bern: &State) -> State {
        let n = self.base.graph().n;
        State {
            positions: base
                .positions
                .iter()
                .zip(&bern.positions)
                .map(|(&x, &b)| if b == 1 { n } else { x })
                .collect(),
            turn: base.turn,
            memory: Vec::new(),
            inner: vec![base.clone(), bern.clone()],
        }
    }
}

impl TurnMachine for Lift {
    fn walkers(&self) -> usize {
        self.base.walkers()
    }

    fn initial(&self) -> Result<Dist<State>> {
        let bern = self.bern.initial()?;
        self.base.initial()?.bind(|x| Ok(bern.map(|b| self.combine(x, b))))
    }

    fn step(&self, st: &State) -> Result<Dist<State>> {
        let [x, b] = st.inner.as_slice() else {
            return Err(Error::InvalidState(format!("{st:?}")));
        };
        let bern = self.bern.step(b)?;
        self.base.step(x)?.bind(|x2| Ok(bern.map(|b2| self.combine(x2, b2))))
    }
}

impl CouplingProcess for Lift {
    fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    fn flags(&self) -> Flags {
        Flags {
            markovian: false,
            waves: false,
            min_entropy: false,
            memory_depth: self.base.flags().memory_depth,
        }
    }

    fn descriptor(&self) -> String {
        format!("lift({})", self.base.descriptor())
    }

    fn index_cache(&self) -> &IndexCache {
        &self.cache
    }

    fn approximate(&self) -> bool {
        self.base.approximate()
    }
}

/// Options for [`product`].
#[derive(Clone, Debug, Default)]
pub struct ProductParams {
    /// Kept pairs `(i, j)`; `None` keeps all `r·s`.
    pub keep: Option<Vec<(usize, usize)>>,
    /// Reject keep sets that drop a first-row or first-column pair.
    pub require_markovian: bool,
}

/// Walkers `(i, j)` of `K*_m × K*_n` moving in lexicographic order; vertex
/// `(x, y)` is `x·n + y`.
///
/// The component couplings advance lazily: before `(i, j)` moves, left
/// walkers `0..=i` and right walkers `0..=j` have taken their turns this
/// round. Mid-round states record both counters in `memory`.
#[derive(Debug)]
pub struct Product {
    left: Process,
    right: Process,
    keep: Vec<(usize, usize)>,
    prefix_keep: bool,
    graph: GraphSpec,
    cache: IndexCache,
}

pub fn product(left: Process, right: Process, params: ProductParams) -> Result<Product> {
    for g in [left.graph(), right.graph()] {
        if g.loop_mode != LoopMode::LoopedUnit {
            return Err(Error::BadParam(format!("product needs K_n* factors, got {g}")));
        }
    }
    let (r, s) = (left.walkers(), right.walkers());
    let mut keep = params.keep.unwrap_or_else(|| (0..r).flat_map(|i| (0..s).map(move |j| (i, j))).collect());
    keep.sort_unstable();
    keep.dedup();
    if let Some(&(i, j)) = keep.iter().find(|&&(i, j)| i >= r || j >= s) {
        return Err(Error::BadKeep(format!("pair ({i}, {j}) outside {r} x {s}")));
    }
    if keep.len() + 1 < r + s || keep.len() > r * s {
        return Err(Error::BadKeep(format!(
            "{} walkers kept; need between {} and {}",
            keep.len(),
            r + s - 1,
            r * s
        )));
    }
    let prefix_keep =
        (0..r).all(|i| keep.contains(&(i, 0))) && (0..s).all(|j| keep.contains(&(0, j)));
    let markov_inputs = left.flags().markovian && right.flags().markovian;
    if params.require_markovian && markov_inputs && !prefix_keep {
        return Err(Error::BadKeep("keep must contain the first row and column".into()));
    }
    let graph = GraphSpec::looped(left.graph().n * right.graph().n)?;
    Ok(Product { left, right, keep, prefix_keep, graph, cache: IndexCache::new() })
}

impl Product {
    pub fn keep(&self) -> &[(usize, usize)] {
        &self.keep
    }

    fn vertex(&self, x: usize, y: usize) -> usize {
        x * self.right.graph().n + y
    }

    fn combine(&self, l: &State, r: &State, turn: usize, memory: Vec<i64>, positions: Vec<usize>) -> State {
        State { positions, turn, memory, inner: vec![l.clone(), r.clone()] }
    }

    fn initial_positions(&self, l: &State, r: &State) -> Vec<usize> {
        self.keep.iter().map(|&(i, j)| self.vertex(l.positions[i], r.positions[j])).collect()
    }

    /// Advances one side from `from` completed turns to `to`.
    fn advance(&self, law: Dist<(State, State)>, left: bool, from: usize, to: usize) -> Result<Dist<(State, State)>> {
        let mut law = law;
        for _ in from..to {
            law = law.bind(|(l, r)| {
                Ok::<_, Error>(if left {
                    self.left.step(l)?.map(|l2| (l2.clone(), r.clone()))
                } else {
                    self.right.step(r)?.map(|r2| (l.clone(), r2.clone()))
                })
            })?;
        }
        Ok(law)
    }

    /// Splits revealed positions into known left and right coordinates.
    fn revealed(&self, placed: &[usize]) -> (BTreeMap<usize, usize>, BTreeMap<usize, usize>) {
        let n = self.right.graph().n;
        let mut xs = BTreeMap::new();
        let mut ys = BTreeMap::new();
        for (q, &v) in placed.iter().enumerate() {
            let (i, j) = self.keep[q];
            xs.insert(i, v / n);
            ys.insert(j, v % n);
        }
        (xs, ys)
    }

    /// Law of coordinate `idx` given known coordinates, when those form a
    /// prefix of the factor's walker order.
    fn coordinate(side: &Process, known: &BTreeMap<usize, usize>, idx: usize) -> Option<Result<Dist<usize>>> {
        if let Some(&v) = known.get(&idx) {
            return Some(Ok(Dist::point(v)));
        }
        let contiguous = known.keys().copied().eq(0..known.len());
        (contiguous && idx == known.len()).then(|| {
            let prefix: Vec<usize> = known.values().copied().collect();
            side.conditional_position(&prefix)
        })
    }
}

impl TurnMachine for Product {
    fn walkers(&self) -> usize {
        self.keep.len()
    }

    fn initial(&self) -> Result<Dist<State>> {
        let right = self.right.initial()?;
        self.left.initial()?.bind(|l| {
            Ok(right.map(|r| self.combine(l, r, 0, Vec::new(), self.initial_positions(l, r))))
        })
    }

    fn step(&self, st: &State) -> Result<Dist<State>> {
        let [l, r] = st.inner.as_slice() else {
            return Err(Error::InvalidState(format!("{st:?}")));
        };
        let (ld, rd) = match st.memory.as_slice() {
            [] => (0, 0),
            [a, b] => (*a as usize, *b as usize),
            _ => return Err(Error::InvalidState(format!("{st:?}"))),
        };
        let t = st.turn;
        let (i, j) = self.keep[t];
        let law = Dist::point((l.clone(), r.clone()));
        let (ld2, rd2) = (ld.max(i + 1), rd.max(j + 1));
        let law = self.advance(law, true, ld, ld2)?;
        let law = self.advance(law, false, rd, rd2)?;
        let last = t + 1 == self.keep.len();
        let law = if last {
            let law = self.advance(law, true, ld2, self.left.walkers())?;
            self.advance(law, false, rd2, self.right.walkers())?
        } else {
            law
        };
        // Later factor turns never move factor walkers `i` and `j`.
        Ok(law.map(|(l2, r2)| {
            let mut positions = st.positions.clone();
            positions[t] = self.vertex(l2.positions[i], r2.positions[j]);
            let memory = if last { Vec::new() } else { vec![ld2 as i64, rd2 as i64] };
            self.combine(l2, r2, (t + 1) % self.keep.len(), memory, positions)
        }))
    }
}

impl CouplingProcess for Product {
    fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    fn flags(&self) -> Flags {
        let (a, b) = (self.left.flags(), self.right.flags());
        Flags {
            markovian: a.markovian && b.markovian && self.prefix_keep,
            waves: a.waves && b.waves,
            min_entropy: a.min_entropy && b.min_entropy,
            memory_depth: a.memory_depth.max(b.memory_depth),
        }
    }

    fn descriptor(&self) -> String {
        format!("product({}, {})", self.left.descriptor(), self.right.descriptor())
    }

    fn index_cache(&self) -> &IndexCache {
        &self.cache
    }

    fn conditional_position(&self, placed: &[usize]) -> Result<Dist<usize>> {
        let (i, j) = *self
            .keep
            .get(placed.len())
            .ok_or_else(|| Error::InvalidState("every walker already placed".into()))?;
        let (xs, ys) = self.revealed(placed);
        match (Self::coordinate(&self.left, &xs, i), Self::coordinate(&self.right, &ys, j)) {
            (Some(x), Some(y)) => {
                let y = y?;
                x?.bind(|&x| Ok(y.map(|&y| self.vertex(x, y))))
            }
            _ => self.index_cache().get(|| self.initial())?.position(placed),
        }
    }

    fn conditional_state(&self, positions: &[usize]) -> Result<Dist<State>> {
        let (xs, ys) = self.revealed(positions);
        let full = xs.len() == self.left.walkers() && ys.len() == self.right.walkers();
        if !full {
            return self.index_cache().get(|| self.initial())?.state(positions);
        }
        let xs: Vec<usize> = xs.into_values().collect();
        let ys: Vec<usize> = ys.into_values().collect();
        let right = self.right.conditional_state(&ys)?;
        self.left.conditional_state(&xs)?.bind(|l| {
            Ok(right.map(|r| self.combine(l, r, 0, Vec::new(), positions.to_vec())))
        })
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Result<State> {
        let l = self.left.sample_initial(rng)?;
        let r = self.right.sample_initial(rng)?;
        let positions = self.initial_positions(&l, &r);
        Ok(self.combine(&l, &r, 0, Vec::new(), positions))
    }

    fn approximate(&self) -> bool {
        self.left.approximate() || self.right.approximate()
    }

    fn sampler_cost(&self) -> usize {
        let (a, b) = (self.left.sampler_cost(), self.right.sampler_cost());
        if self.prefix_keep {
            a.max(b)
        } else {
            a.saturating_mul(b)
        }
    }
}

/// Options for [`sum`].
#[derive(Clone, Debug)]
pub struct SumOptions {
    /// Largest exact sampler a cluster coupling may need before the sum falls
    /// back to an empirical stationary law.
    pub state_bound: usize,
    /// Configurations drawn for an empirical stationary law.
    pub approx_samples: usize,
    pub approx_seed: u64,
}

impl Default for SumOptions {
    fn default() -> Self {
        SumOptions {
            state_bound: crate::process::DEFAULT_STATE_BOUND,
            approx_samples: 100_000,
            approx_seed: 0,
        }
    }
}

/// Two cluster couplings on `U = [0, m)` and `V = [m, m + n)`.
///
/// At walker 0's turn every walker is in one cluster and `inner[0]` is that
/// cluster's coupling state. Walker 0 either follows the cluster coupling
/// (and so does everyone else this round) or jumps to a uniform vertex of
/// the other cluster, after which each walker is placed by the other
/// cluster's stationary configuration law conditioned on the walkers already
/// there. Mid-round `memory` holds the mode.
#[derive(Debug)]
pub struct Sum {
    parts: [Process; 2],
    offsets: [usize; 2],
    approx: [Option<Arc<StationaryIndex>>; 2],
    graph: GraphSpec,
    cache: IndexCache,
}

const FOLLOW: i64 = 0;
const SWITCH: i64 = 1;

pub fn sum(left: Process, right: Process) -> Result<Sum> {
    sum_with(left, right, SumOptions::default())
}

pub fn sum_with(left: Process, right: Process, opts: SumOptions) -> Result<Sum> {
    if left.walkers() != right.walkers() {
        return Err(Error::KMismatch { left: left.walkers(), right: right.walkers() });
    }
    let looped = match (&left.graph().loop_mode, &right.graph().loop_mode) {
        (LoopMode::Unlooped, LoopMode::Unlooped) => false,
        (LoopMode::LoopedUnit, LoopMode::LoopedUnit) => true,
        (LoopMode::Hold(_), _) | (_, LoopMode::Hold(_)) => {
            return Err(Error::BadParam("sums are defined on K_n and K_n* only".into()))
        }
        _ => return Err(Error::LoopMismatch),
    };
    let (m, n) = (left.graph().n, right.graph().n);
    let approx_for = |p: &Process| {
        (p.sampler_cost() > opts.state_bound).then(|| empirical_index(p.as_ref(), &opts)).transpose()
    };
    let approx = [approx_for(&left)?, approx_for(&right)?];
    Ok(Sum {
        parts: [left, right],
        offsets: [0, m],
        approx,
        graph: GraphSpec::complete(m + n, looped)?,
        cache: IndexCache::new(),
    })
}

fn empirical_index(p: &dyn CouplingProcess, opts: &SumOptions) -> Result<Arc<StationaryIndex>> {
    let mut rng = rng_from_seed(opts.approx_seed);
    let mut law = Dist::empty();
    let w = Prob::ratio(1, opts.approx_samples as i64);
    for _ in 0..opts.approx_samples {
        law.add(p.sample_initial(&mut rng)?, w.clone());
    }
    Ok(Arc::new(StationaryIndex::build(&law)))
}

impl Sum {
    pub fn part(&self, c: usize) -> &Process {
        &self.parts[c]
    }

    pub fn cluster_of(&self, v: usize) -> usize {
        usize::from(v >= self.offsets[1])
    }

    fn size(&self, c: usize) -> usize {
        self.parts[c].graph().n
    }

    /// Probability that walker 0 leaves cluster `c`.
    pub fn switch_prob(&self, c: usize) -> Prob {
        let other = self.size(1 - c) as i64;
        let total = self.graph.n as i64;
        if self.graph.is_looped() {
            Prob::ratio(other, total)
        } else {
            Prob::ratio(other, total - 1)
        }
    }

    fn weight(&self, c: usize) -> Prob {
        Prob::ratio(self.size(c) as i64, self.graph.n as i64)
    }

    fn local(&self, c: usize, placed: &[usize]) -> Vec<usize> {
        placed.iter().map(|&v| v - self.offsets[c]).collect()
    }

    fn wrap(&self, c: usize, child: &State, turn: usize, memory: Vec<i64>, positions: Option<Vec<usize>>) -> State {
        let positions = positions
            .unwrap_or_else(|| child.positions.iter().map(|&v| v + self.offsets[c]).collect());
        State { positions, turn, memory, inner: vec![child.clone()] }
    }

    fn cond_position(&self, c: usize, local: &[usize]) -> Result<Dist<usize>> {
        match &self.approx[c] {
            Some(idx) => idx.position(local),
            None => self.parts[c].conditional_position(local),
        }
    }

    fn cond_state(&self, c: usize, local: &[usize]) -> Result<Dist<State>> {
        match &self.approx[c] {
            Some(idx) => idx.state(local),
            None => self.parts[c].conditional_state(local),
        }
    }

    /// Places walker `t` in cluster `c` after a switch, finishing the round
    /// with a full cluster state when `t` is last.
    fn place(&self, st: &State, c: usize) -> Result<Dist<State>> {
        let k = self.walkers();
        let t = st.turn;
        let placed = self.local(c, &st.positions[..t]);
        let next = self.cond_position(c, &placed)?;
        next.bind(|&v| {
            let mut positions = st.positions.clone();
            positions[t] = v + self.offsets[c];
            if t + 1 < k {
                let s = State { positions, turn: t + 1, memory: vec![SWITCH], inner: Vec::new() };
                return Ok(Dist::point(s));
            }
            let mut local = placed.clone();
            local.push(v);
            Ok(self
                .cond_state(c, &local)?
                .map(|child| self.wrap(c, child, 0, Vec::new(), Some(positions.clone()))))
        })
    }
}

impl TurnMachine for Sum {
    fn walkers(&self) -> usize {
        self.parts[0].walkers()
    }

    fn initial(&self) -> Result<Dist<State>> {
        let mut law = Dist::empty();
        for c in 0..2 {
            let part = self.parts[c].initial()?.map(|s| self.wrap(c, s, 0, Vec::new(), None));
            law.add_scaled(&part, &self.weight(c));
        }
        Ok(law)
    }

    fn step(&self, st: &State) -> Result<Dist<State>> {
        let k = self.walkers();
        let t = st.turn;
        let next_turn = (t + 1) % k;
        let next_memory = |mode: i64| if next_turn == 0 { Vec::new() } else { vec![mode] };
        let follow = |c: usize, child: &State| -> Result<Dist<State>> {
            Ok(self.parts[c].step(child)?.map(|s2| {
                let mut positions = st.positions.clone();
                positions[t] = s2.positions[t] + self.offsets[c];
                self.wrap(c, s2, next_turn, next_memory(FOLLOW), Some(positions))
            }))
        };
        if t == 0 {
            let c = self.cluster_of(st.positions[0]);
            let child = st.inner.first().ok_or_else(|| Error::InvalidState(format!("{st:?}")))?;
            let o = 1 - c;
            let sw = self.switch_prob(c);
            let mut law = Dist::empty();
            law.add_scaled(&follow(c, child)?, &sw.complement());
            let each = &sw * &Prob::ratio(1, self.size(o) as i64);
            for v in 0..self.size(o) {
                if k == 1 {
                    let landed = self.cond_state(o, &[v])?.map(|cs| self.wrap(o, cs, 0, Vec::new(), None));
                    law.add_scaled(&landed, &each);
                } else {
                    let mut positions = st.positions.clone();
                    positions[0] = v + self.offsets[o];
                    law.add(State { positions, turn: 1, memory: vec![SWITCH], inner: Vec::new() }, each.clone());
                }
            }
            return Ok(law);
        }
        match st.memory.first() {
            Some(&FOLLOW) => {
                let c = self.cluster_of(st.positions[0]);
                let child = st.inner.first().ok_or_else(|| Error::InvalidState(format!("{st:?}")))?;
                follow(c, child)
            }
            Some(&SWITCH) => self.place(st, self.cluster_of(st.positions[0])),
            _ => Err(Error::InvalidState(format!("{st:?}"))),
        }
    }
}

impl CouplingProcess for Sum {
    fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    fn flags(&self) -> Flags {
        let (a, b) = (self.parts[0].flags(), self.parts[1].flags());
        Flags {
            markovian: a.markovian && b.markovian && !self.approximate(),
            waves: a.waves && b.waves,
            min_entropy: false,
            memory_depth: a.memory_depth.max(b.memory_depth),
        }
    }

    fn descriptor(&self) -> String {
        format!("sum({}, {})", self.parts[0].descriptor(), self.parts[1].descriptor())
    }

    fn index_cache(&self) -> &IndexCache {
        &self.cache
    }

    fn conditional_position(&self, placed: &[usize]) -> Result<Dist<usize>> {
        match placed.first() {
            None => {
                let mut law = Dist::empty();
                for c in 0..2 {
                    let part = self.cond_position(c, &[])?.map(|&v| v + self.offsets[c]);
                    law.add_scaled(&part, &self.weight(c));
                }
                Ok(law)
            }
            Some(&v0) => {
                let c = self.cluster_of(v0);
                if placed.iter().any(|&v| self.cluster_of(v) != c) {
                    return Err(Error::InvalidState(format!("{placed:?} spans both clusters")));
                }
                Ok(self.cond_position(c, &self.local(c, placed))?.map(|&v| v + self.offsets[c]))
            }
        }
    }

    fn conditional_state(&self, positions: &[usize]) -> Result<Dist<State>> {
        let c = self.cluster_of(*positions.first().ok_or_else(|| Error::InvalidState("no walkers".into()))?);
        Ok(self
            .cond_state(c, &self.local(c, positions))?
            .map(|cs| self.wrap(c, cs, 0, Vec::new(), None)))
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Result<State> {
        let c = Dist::uniform(0..self.graph.n).sample(rng);
        let c = self.cluster_of(c);
        let child = match &self.approx[c] {
            Some(_) => {
                let mut positions = Vec::new();
                for _ in 0..self.walkers() {
                    positions.push(self.cond_position(c, &positions)?.sample(rng));
                }
                self.cond_state(c, &positions)?.sample(rng)
            }
            None => self.parts[c].sample_initial(rng)?,
        };
        Ok(self.wrap(c, &child, 0, Vec::new(), None))
    }

    fn approximate(&self) -> bool {
        self.approx.iter().any(Option::is_some) || self.parts.iter().any(|p| p.approximate())
    }

    fn sampler_cost(&self) -> usize {
        self.parts[0].sampler_cost().max(self.parts[1].sampler_cost())
    }
}
