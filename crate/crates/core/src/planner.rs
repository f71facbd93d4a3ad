//! Synthesis of Markovian avoidance couplings for arbitrary `n`.
//!
//! A [`Plan`] is an expression tree over base constructions (`k3`,
//! `composite`, `hypercube`) and combinators (`product`, `sum`, `lift`,
//! `wave_strip`). Every node carries annotations computed bottom-up;
//! [`evaluate`] builds the process and checks that its flags agree.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::basic::{build_composite, build_composite_min_entropy, build_k3_markovian, build_k3_nonmarkovian};
use crate::combinators::{lift_default, product, sum, ProductParams};
use crate::error::{Error, Result};
use crate::hypercube::{build_hypercube, wave_strip, HypercubeParams, Variant};
use crate::prob::{parse_rational, rational_from_json, rational_json, Rational};
use crate::process::{CouplingProcess, Process, DEFAULT_STATE_BOUND};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    K3,
    Composite,
    Hypercube,
    Product,
    Sum,
    Lift,
    WaveStrip,
}

impl NodeKind {
    pub fn is_base(self) -> bool {
        matches!(self, NodeKind::K3 | NodeKind::Composite | NodeKind::Hypercube)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    pub n: usize,
    pub k: usize,
    pub looped: bool,
    pub markovian: bool,
    pub waves: bool,
    pub min_entropy: bool,
    /// Size of the exact stationary sampler the process would need.
    pub sampler_cost: usize,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub kind: NodeKind,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub children: Vec<Plan>,
    pub annotations: Annotations,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub provenance: String,
}

fn obj(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

fn get_usize(params: &Map<String, Value>, key: &str) -> Result<usize> {
    params
        .get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| Error::Parse(format!("missing integer parameter `{key}`")))
}

fn get_bool(params: &Map<String, Value>, key: &str) -> bool {
    params.get(key).and_then(Value::as_bool).unwrap_or(false)
}

/// Walker subset of a `2^d`-walker hypercube with `k` walkers that keeps the
/// Markov property: `0..k−1` together with `ω`.
pub fn hypercube_walkers(d: u32, k: usize) -> Option<Vec<usize>> {
    let full = 1usize << d;
    match k {
        _ if k > full || k == 0 => None,
        1 if d == 0 => Some(vec![0]),
        1 => None,
        _ => {
            let mut w: Vec<usize> = (0..k - 1).collect();
            w.push(full - 1);
            Some(w)
        }
    }
}

/// Factor walker counts `(r′, s′)` and a keep set with the first row and
/// column, giving exactly `k` walkers from factors with `r` and `s` walkers,
/// each factor reducible to `r′`/`s′` as reported by `ok`.
fn product_shape(r: usize, s: usize, k: usize, ok: impl Fn(usize, usize) -> bool) -> Option<(usize, usize, Vec<(usize, usize)>)> {
    let mut best = None;
    for r2 in 1..=r {
        for s2 in 1..=s {
            if r2 + s2 - 1 <= k && k <= r2 * s2 && ok(r2, s2) && best.is_none_or(|(a, b)| r2 + s2 < a + b) {
                best = Some((r2, s2));
            }
        }
    }
    let (r2, s2) = best?;
    let mut keep: Vec<(usize, usize)> = (0..s2).map(|j| (0, j)).chain((1..r2).map(|i| (i, 0))).collect();
    for i in 1..r2 {
        for j in 1..s2 {
            if keep.len() < k {
                keep.push((i, j));
            }
        }
    }
    keep.sort_unstable();
    Some((r2, s2, keep))
}

fn base_process(kind: NodeKind, params: &Map<String, Value>) -> Result<Process> {
    Ok(match kind {
        NodeKind::K3 => {
            let s = params.get("s").ok_or_else(|| Error::Parse("missing `s`".into()))?;
            let s = match s {
                Value::String(t) => parse_rational(t),
                v => rational_from_json(v),
            }
            .ok_or_else(|| Error::Parse(format!("bad hold probability {s}")))?;
            if get_bool(params, "markovian") {
                Arc::new(build_k3_markovian(s)?)
            } else {
                Arc::new(build_k3_nonmarkovian(s)?)
            }
        }
        NodeKind::Composite => {
            let (a, b) = (get_usize(params, "a")?, get_usize(params, "b")?);
            if get_bool(params, "min_entropy") {
                Arc::new(build_composite_min_entropy(a, b)?)
            } else {
                Arc::new(build_composite(a, b, get_bool(params, "looped"))?)
            }
        }
        NodeKind::Hypercube => {
            let d = get_usize(params, "d")? as u32;
            let variant = Variant::parse(
                params.get("variant").and_then(Value::as_str).ok_or_else(|| Error::Parse("missing `variant`".into()))?,
            )?;
            let mut hp = HypercubeParams::new(d, variant);
            if let Some(w) = params.get("walkers") {
                hp = hp.with_walkers(serde_json::from_value(w.clone())?);
            }
            Arc::new(build_hypercube(hp)?)
        }
        _ => return Err(Error::BadParam(format!("{kind:?} is not a base"))),
    })
}

fn base_cost(kind: NodeKind, params: &Map<String, Value>, p: &dyn CouplingProcess) -> Result<usize> {
    Ok(match kind {
        // Pairs in distinct clusters; avoids enumerating large initial laws.
        NodeKind::Composite => p.graph().n * (p.graph().n - get_usize(params, "a")?),
        _ => p.sampler_cost(),
    })
}

fn base_annotations(kind: NodeKind, params: &Map<String, Value>) -> Result<Annotations> {
    let p = base_process(kind, params)?;
    let f = p.flags();
    Ok(Annotations {
        n: p.graph().n,
        k: p.walkers(),
        looped: p.graph().is_looped(),
        markovian: f.markovian,
        waves: f.waves,
        min_entropy: f.min_entropy,
        sampler_cost: base_cost(kind, params, p.as_ref())?,
        depth: 0,
    })
}

fn keep_from(params: &Map<String, Value>) -> Result<Option<Vec<(usize, usize)>>> {
    params.get("keep").map(|v| serde_json::from_value(v.clone()).map_err(Error::from)).transpose()
}

fn combinator_annotations(kind: NodeKind, params: &Map<String, Value>, children: &[Plan]) -> Result<Annotations> {
    let arity = if matches!(kind, NodeKind::Product | NodeKind::Sum) { 2 } else { 1 };
    if children.len() != arity {
        return Err(Error::Parse(format!("{kind:?} takes {arity} children, got {}", children.len())));
    }
    let a = &children[0].annotations;
    let depth = children.iter().map(|c| c.annotations.depth).max().unwrap_or(0) + 1;
    match kind {
        NodeKind::Product => {
            let b = &children[1].annotations;
            if !(a.looped && b.looped) || a.k == 0 {
                return Err(Error::BadParam("product needs K_n* factors".into()));
            }
            let keep = keep_from(params)?.unwrap_or_else(|| (0..a.k).flat_map(|i| (0..b.k).map(move |j| (i, j))).collect());
            let prefix = (0..a.k).all(|i| keep.contains(&(i, 0))) && (0..b.k).all(|j| keep.contains(&(0, j)));
            if keep.len() + 1 < a.k + b.k || keep.len() > a.k * b.k || keep.iter().any(|&(i, j)| i >= a.k || j >= b.k) {
                return Err(Error::BadKeep(format!("{keep:?} for {} x {} walkers", a.k, b.k)));
            }
            Ok(Annotations {
                n: a.n * b.n,
                k: keep.len(),
                looped: true,
                markovian: a.markovian && b.markovian && prefix,
                waves: a.waves && b.waves,
                min_entropy: a.min_entropy && b.min_entropy,
                sampler_cost: if prefix { a.sampler_cost.max(b.sampler_cost) } else { a.sampler_cost.saturating_mul(b.sampler_cost) },
                depth,
            })
        }
        NodeKind::Sum => {
            let b = &children[1].annotations;
            if a.k != b.k {
                return Err(Error::KMismatch { left: a.k, right: b.k });
            }
            if a.looped != b.looped {
                return Err(Error::LoopMismatch);
            }
            let approx = a.sampler_cost > DEFAULT_STATE_BOUND || b.sampler_cost > DEFAULT_STATE_BOUND;
            Ok(Annotations {
                n: a.n + b.n,
                k: a.k,
                looped: a.looped,
                markovian: a.markovian && b.markovian && !approx,
                waves: a.waves && b.waves,
                min_entropy: false,
                sampler_cost: a.sampler_cost.max(b.sampler_cost),
                depth,
            })
        }
        NodeKind::Lift => {
            if !a.looped {
                return Err(Error::BadParam("lift needs a K_n* coupling".into()));
            }
            Ok(Annotations {
                n: a.n + 1,
                k: a.k,
                looped: true,
                markovian: false,
                waves: false,
                min_entropy: false,
                sampler_cost: a.sampler_cost.saturating_mul(1 << a.k.min(60)),
                depth,
            })
        }
        NodeKind::WaveStrip => {
            if !(a.looped && a.waves) {
                return Err(Error::NotWaves);
            }
            Ok(Annotations { looped: false, waves: false, depth, ..a.clone() })
        }
        _ => unreachable!("bases handled separately"),
    }
}

impl Plan {
    fn node(kind: NodeKind, params: Value, children: Vec<Plan>) -> Result<Plan> {
        let params = obj(params);
        let annotations = if kind.is_base() {
            base_annotations(kind, &params)?
        } else {
            combinator_annotations(kind, &params, &children)?
        };
        Ok(Plan { kind, params, children, annotations, provenance: String::new() })
    }

    pub fn hypercube(d: u32, variant: Variant, walkers: Option<Vec<usize>>) -> Result<Plan> {
        let mut p = json!({ "d": d, "variant": variant.name() });
        if let Some(w) = walkers {
            p["walkers"] = json!(w);
        }
        Plan::node(NodeKind::Hypercube, p, Vec::new())
    }

    /// Hypercube base reduced to exactly `k` walkers.
    pub fn hypercube_k(d: u32, variant: Variant, k: usize) -> Result<Plan> {
        let w = hypercube_walkers(d, k)
            .ok_or_else(|| Error::BadWalkerSet(format!("{k} walkers from dimension {d}")))?;
        Plan::hypercube(d, variant, (w.len() < 1 << d).then_some(w))
    }

    pub fn composite(a: usize, b: usize, looped: bool) -> Result<Plan> {
        Plan::node(NodeKind::Composite, json!({ "a": a, "b": b, "looped": looped }), Vec::new())
    }

    pub fn composite_min_entropy(a: usize, b: usize) -> Result<Plan> {
        Plan::node(NodeKind::Composite, json!({ "a": a, "b": b, "looped": false, "min_entropy": true }), Vec::new())
    }

    pub fn k3(s: &Rational, markovian: bool) -> Result<Plan> {
        Plan::node(NodeKind::K3, json!({ "s": rational_json(s), "markovian": markovian }), Vec::new())
    }

    pub fn product(left: Plan, right: Plan, keep: Option<Vec<(usize, usize)>>) -> Result<Plan> {
        let params = match keep {
            Some(k) => json!({ "keep": k }),
            None => json!({}),
        };
        Plan::node(NodeKind::Product, params, vec![left, right])
    }

    pub fn sum(left: Plan, right: Plan) -> Result<Plan> {
        Plan::node(NodeKind::Sum, json!({}), vec![left, right])
    }

    /// Balanced sum of `parts` in the given order.
    pub fn sum_all(mut parts: Vec<Plan>) -> Result<Plan> {
        match parts.len() {
            0 => Err(Error::BadParam("empty sum".into())),
            1 => Ok(parts.pop().expect("one part")),
            len => {
                let right = parts.split_off(len / 2);
                Plan::sum(Plan::sum_all(parts)?, Plan::sum_all(right)?)
            }
        }
    }

    pub fn lift(base: Plan) -> Result<Plan> {
        Plan::node(NodeKind::Lift, json!({}), vec![base])
    }

    pub fn wave_strip(inner: Plan) -> Result<Plan> {
        Plan::node(NodeKind::WaveStrip, json!({}), vec![inner])
    }

    pub fn with_provenance(mut self, p: impl Into<String>) -> Self {
        self.provenance = p.into();
        self
    }

    /// Recomputes every annotation and compares with the stored ones.
    pub fn validate(&self) -> Result<()> {
        for c in &self.children {
            c.validate()?;
        }
        let fresh = if self.kind.is_base() {
            base_annotations(self.kind, &self.params)?
        } else {
            combinator_annotations(self.kind, &self.params, &self.children)?
        };
        if fresh != self.annotations {
            return Err(Error::Parse(format!(
                "annotations of {:?} node disagree: stored {:?}, computed {:?}",
                self.kind, self.annotations, fresh
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("plans serialize")
    }

    pub fn from_json(v: &Value) -> Result<Plan> {
        let p: Plan = serde_json::from_value(v.clone())?;
        p.validate()?;
        Ok(p)
    }

    /// Base nodes in left-to-right order.
    pub fn leaves(&self) -> Vec<&Plan> {
        if self.children.is_empty() {
            return vec![self];
        }
        self.children.iter().flat_map(Plan::leaves).collect()
    }

    /// One-line description of the tree.
    pub fn summary(&self) -> String {
        let a = &self.annotations;
        let g = if a.looped { format!("K{}*", a.n) } else { format!("K{}", a.n) };
        match self.kind {
            NodeKind::Hypercube => format!(
                "hypercube(d={}, {}, k={}) on {g}",
                self.params["d"], self.params["variant"].as_str().unwrap_or("?"), a.k
            ),
            NodeKind::Composite => format!("composite({}x{}) on {g}", self.params["a"], self.params["b"]),
            NodeKind::K3 => format!("k3 on {g}"),
            NodeKind::Product => format!(
                "product({}, {}; k={})",
                self.children[0].summary(),
                self.children[1].summary(),
                a.k
            ),
            NodeKind::Sum => format!("{} + {}", self.children[0].summary(), self.children[1].summary()),
            NodeKind::Lift => format!("lift({})", self.children[0].summary()),
            NodeKind::WaveStrip => format!("wave_strip({})", self.children[0].summary()),
        }
    }
}

/// Builds the process a plan describes and checks its flags against the
/// root annotations.
pub fn evaluate(plan: &Plan) -> Result<Process> {
    let p: Process = if plan.kind.is_base() {
        base_process(plan.kind, &plan.params)?
    } else {
        let kids: Vec<Process> = plan.children.iter().map(evaluate).collect::<Result<_>>()?;
        match plan.kind {
            NodeKind::Product => Arc::new(product(
                kids[0].clone(),
                kids[1].clone(),
                ProductParams { keep: keep_from(&plan.params)?, require_markovian: false },
            )?),
            NodeKind::Sum => Arc::new(sum(kids[0].clone(), kids[1].clone())?),
            NodeKind::Lift => Arc::new(lift_default(kids[0].clone())?),
            NodeKind::WaveStrip => Arc::new(wave_strip(kids[0].clone())?),
            _ => unreachable!("bases handled above"),
        }
    };
    let a = &plan.annotations;
    let f = p.flags();
    let got = (p.graph().n, p.walkers(), p.graph().is_looped(), f.markovian, f.waves, f.min_entropy);
    let want = (a.n, a.k, a.looped, a.markovian, a.waves, a.min_entropy);
    if got != want {
        return Err(Error::InvalidState(format!(
            "built {} has (n, k, looped, markovian, waves, min_entropy) = {got:?}, plan says {want:?}",
            p.descriptor()
        )));
    }
    Ok(p)
}

/// A base or single product usable as a summand.
#[derive(Clone, Debug)]
pub struct Generator {
    pub n: usize,
    pub plan: Plan,
    pub label: String,
}

fn hypercube_product(va: Variant, a: u32, vb: Variant, b: u32, k: usize) -> Result<Option<Plan>> {
    let shape = product_shape(1 << a, 1 << b, k, |r, s| {
        hypercube_walkers(a, r).is_some() && hypercube_walkers(b, s).is_some()
    });
    let Some((r, s, keep)) = shape else { return Ok(None) };
    let full = keep.len() == r * s;
    let left = Plan::hypercube_k(a, va, r)?;
    let right = Plan::hypercube_k(b, vb, s)?;
    Ok(Some(Plan::product(left, right, (!full).then_some(keep))?))
}

fn dims_up_to(bound: usize) -> impl Iterator<Item = u32> {
    (0..20u32).take_while(move |&d| (1usize << (d + 1)) <= bound)
}

/// Summand generators for `k` walkers on graphs of at most `bound` vertices.
pub fn generators(k: usize, looped: bool, bound: usize) -> Result<Vec<Generator>> {
    let mut out: Vec<Generator> = Vec::new();
    let mut push = |plan: Plan, label: String| {
        let n = plan.annotations.n;
        if n <= bound && plan.annotations.markovian && plan.annotations.k == k {
            out.push(Generator { n, plan, label });
        }
    };
    let plus1 = |d: u32| Variant::LoopedPlus1.vertices(d);
    if looped {
        for d in dims_up_to(bound) {
            for v in [Variant::LoopedPow2, Variant::LoopedPlus1] {
                if hypercube_walkers(d, k).is_some() {
                    push(Plan::hypercube_k(d, v, k)?, format!("{v}(d={d})"));
                }
            }
        }
        for a in dims_up_to(bound) {
            for b in dims_up_to(bound) {
                for (va, vb) in [
                    (Variant::LoopedPow2, Variant::LoopedPlus1),
                    (Variant::LoopedPlus1, Variant::LoopedPlus1),
                ] {
                    if va.vertices(a) * vb.vertices(b) > bound || (va == vb && a > b) {
                        continue;
                    }
                    if let Some(p) = hypercube_product(va, a, vb, b, k)? {
                        push(p, format!("{va}(d={a}) x {vb}(d={b})"));
                    }
                }
            }
        }
    } else {
        for d in dims_up_to(bound) {
            if plus1(d) <= bound && hypercube_walkers(d, k).is_some() {
                push(Plan::hypercube_k(d, Variant::UnloopedPlus1, k)?, format!("unlooped_plus1(d={d})"));
            }
        }
        for a in dims_up_to(bound) {
            for b in a..20 {
                if plus1(a) * plus1(b) > bound {
                    break;
                }
                if let Some(p) = hypercube_product(Variant::LoopedPlus1, a, Variant::LoopedPlus1, b, k)? {
                    push(Plan::wave_strip(p)?, format!("wave_strip(looped_plus1(d={a}) x looped_plus1(d={b}))"));
                }
            }
        }
    }
    if k == 2 {
        for a in 2..=bound / 2 {
            for b in 2..=bound / a {
                push(Plan::composite(a, b, looped)?, format!("composite({a}x{b})"));
            }
        }
    }
    // One generator per n: shallowest, then cheapest, then first found.
    out.sort_by_key(|g| (g.n, g.plan.annotations.depth, g.plan.annotations.sampler_cost));
    out.dedup_by_key(|g| g.n);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Entry {
    summands: usize,
    cost: usize,
    generator: usize,
}

/// Values of `n ≤ bound` reachable as sums of generators for fixed `k`.
#[derive(Clone, Debug)]
pub struct AchievabilitySet {
    pub k: usize,
    pub looped: bool,
    pub bound: usize,
    generators: Vec<Generator>,
    best: Vec<Option<Entry>>,
}

impl AchievabilitySet {
    pub fn build(k: usize, looped: bool, bound: usize) -> Result<Self> {
        Ok(Self::with_generators(k, looped, bound, generators(k, looped, bound)?))
    }

    pub fn with_generators(k: usize, looped: bool, bound: usize, generators: Vec<Generator>) -> Self {
        let mut best: Vec<Option<Entry>> = vec![None; bound + 1];
        best[0] = Some(Entry { summands: 0, cost: 0, generator: usize::MAX });
        for m in 1..=bound {
            for (gi, g) in generators.iter().enumerate() {
                if g.n > m {
                    continue;
                }
                if let Some(prev) = best[m - g.n] {
                    let cand = Entry {
                        summands: prev.summands + 1,
                        cost: prev.cost.saturating_add(g.plan.annotations.sampler_cost),
                        generator: gi,
                    };
                    if best[m].is_none_or(|b| cand < b) {
                        best[m] = Some(cand);
                    }
                }
            }
        }
        AchievabilitySet { k, looped, bound, generators, best }
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn contains(&self, n: usize) -> bool {
        n >= 1 && n <= self.bound && self.best[n].is_some()
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=self.bound).filter(|&n| self.contains(n))
    }

    /// Generators used for `n`, smallest first.
    pub fn decomposition(&self, n: usize) -> Option<Vec<&Generator>> {
        if !self.contains(n) {
            return None;
        }
        let mut out = Vec::new();
        let mut m = n;
        while m > 0 {
            let e = self.best[m].expect("reachable chain");
            let g = &self.generators[e.generator];
            out.push(g);
            m -= g.n;
        }
        out.sort_by_key(|g| g.n);
        Some(out)
    }

    pub fn plan(&self, n: usize) -> Result<Option<Plan>> {
        let Some(parts) = self.decomposition(n) else { return Ok(None) };
        let labels: Vec<&str> = parts.iter().map(|g| g.label.as_str()).collect();
        let plan = Plan::sum_all(parts.iter().map(|g| g.plan.clone().with_provenance(g.label.clone())).collect())?;
        let provenance = format!("closure under sums of generators: {}", labels.join(" + "));
        Ok(Some(plan.with_provenance(provenance)))
    }
}

fn check_args(n: usize, k: usize) -> Result<()> {
    if n < 2 || k < 1 {
        return Err(Error::BadParam(format!("need n >= 2 and k >= 1, got n = {n}, k = {k}")));
    }
    Ok(())
}

fn ceil_log2(k: usize) -> u32 {
    k.next_power_of_two().trailing_zeros()
}

/// Piece `2^{d+2} + 2^i` for `i ≤ d` with `k` walkers.
fn binary_piece(d: u32, i: u32, k: usize) -> Result<Option<Plan>> {
    let plan = if i == 0 {
        hypercube_walkers(d + 1, k).map(|_| Plan::hypercube_k(d + 1, Variant::LoopedPlus1, k)).transpose()?
    } else {
        hypercube_product(Variant::LoopedPow2, i - 1, Variant::LoopedPlus1, d + 1 - i, k)?
    };
    Ok(plan.map(|p| p.with_provenance(format!("piece 2^{} + 2^{i}", d + 2))))
}

fn binary_decomposition(n: usize, k: usize) -> Result<Option<Plan>> {
    for d in ceil_log2(k).. {
        let unit = 1usize << (d + 1);
        if unit > n {
            break;
        }
        let bits: Vec<u32> = (0..=d).filter(|&i| n >> i & 1 == 1).collect();
        let used: usize = bits.iter().map(|&i| (1usize << (d + 2)) + (1 << i)).sum();
        if used > n {
            continue;
        }
        let r = n - used;
        debug_assert_eq!(r % unit, 0);
        let mut parts = Vec::new();
        for &i in &bits {
            match binary_piece(d, i, k)? {
                Some(p) => parts.push(p),
                None => break,
            }
        }
        if parts.len() < bits.len() || hypercube_walkers(d, k).is_none() {
            continue;
        }
        let rest = Plan::hypercube_k(d, Variant::LoopedPow2, k)?;
        parts.extend(std::iter::repeat_n(rest, r / unit));
        let plan = Plan::sum_all(parts)?;
        let pieces: Vec<String> = bits.iter().map(|&i| ((1usize << (d + 2)) + (1 << i)).to_string()).collect();
        return Ok(Some(plan.with_provenance(format!(
            "binary decomposition with d = {d}: pieces [{}], remainder {r} = {} x K{unit}*",
            pieces.join(", "),
            r / unit
        ))));
    }
    Ok(None)
}

fn direct_base(n: usize, k: usize, looped: bool) -> Result<Option<Plan>> {
    for d in dims_up_to(n) {
        if hypercube_walkers(d, k).is_none() {
            continue;
        }
        let variant = match (looped, n) {
            (true, _) if n == Variant::LoopedPow2.vertices(d) => Variant::LoopedPow2,
            (true, _) if n == Variant::LoopedPlus1.vertices(d) => Variant::LoopedPlus1,
            (false, _) if n == Variant::UnloopedPlus1.vertices(d) => Variant::UnloopedPlus1,
            _ => continue,
        };
        return Ok(Some(Plan::hypercube_k(d, variant, k)?.with_provenance("single hypercube base")));
    }
    Ok(None)
}

/// Markovian coupling of `k` walkers on `K_n*`.
pub fn plan_looped(n: usize, k: usize) -> Result<Plan> {
    check_args(n, k)?;
    if let Some(p) = direct_base(n, k, true)? {
        return Ok(p);
    }
    if k >= 2 {
        if let Some(p) = binary_decomposition(n, k)? {
            return Ok(p);
        }
    }
    AchievabilitySet::build(k, true, n)?
        .plan(n)?
        .ok_or(Error::InfeasibleWithMethod { n, k, looped: true })
}

/// `n = 17a + 33b` with `b` as large as possible.
pub fn solve_17_33(n: usize) -> Option<(usize, usize)> {
    (0..=n / 33).rev().find(|b| (n - 33 * b).is_multiple_of(17)).map(|b| ((n - 33 * b) / 17, b))
}

/// Markovian coupling of `k` walkers on `K_n`.
pub fn plan_unlooped(n: usize, k: usize) -> Result<Plan> {
    check_args(n, k)?;
    if let Some(p) = direct_base(n, k, false)? {
        return Ok(p);
    }
    if (2..=8).contains(&k) && n > 511 {
        if let Some((a, b)) = solve_17_33(n) {
            let k17 = Plan::hypercube_k(3, Variant::UnloopedPlus1, k)?;
            let k33 = Plan::hypercube_k(4, Variant::UnloopedPlus1, k)?;
            let parts: Vec<Plan> = std::iter::repeat_n(k17, a).chain(std::iter::repeat_n(k33, b)).collect();
            return Ok(Plan::sum_all(parts)?.with_provenance(format!("{a} x K17 + {b} x K33")));
        }
    }
    AchievabilitySet::build(k, false, n)?
        .plan(n)?
        .ok_or(Error::InfeasibleWithMethod { n, k, looped: false })
}

pub fn plan(n: usize, k: usize, looped: bool) -> Result<Plan> {
    if looped {
        plan_looped(n, k)
    } else {
        plan_unlooped(n, k)
    }
}

/// `n / ‖n‖`, the most walkers sums and products of the bases can reach.
pub fn hamming_bound(n: usize) -> Rational {
    assert!(n >= 1, "hamming bound of zero");
    Rational::new((n as i64).into(), (n.count_ones() as i64).into())
}

/// Largest `k` the planner achieves on `n` vertices, searched downward from
/// the Hamming bound, with its plan. Returns `(1, plan)` when no plan for two
/// or more walkers exists; the plan is `None` when even one walker fails.
pub fn max_walkers(n: usize, looped: bool) -> Result<(usize, Option<Plan>)> {
    check_args(n, 1)?;
    let h = hamming_bound(n);
    let cap = (h.numer() / h.denom()).try_into().unwrap_or(usize::MAX).min(n.saturating_sub(2)).max(1);
    for k in (2..=cap).rev() {
        match plan(n, k, looped) {
            Ok(p) => return Ok((k, Some(p))),
            Err(Error::InfeasibleWithMethod { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    match plan(n, 1, looped) {
        Ok(p) => Ok((1, Some(p))),
        Err(Error::InfeasibleWithMethod { .. }) => Ok((1, None)),
        Err(e) => Err(e),
    }
}

/// `⌊n / (8 log₂ n)⌋` (looped) or `⌊n / (56 log₂ n)⌋` (unlooped).
pub fn guaranteed_walkers(n: usize, looped: bool) -> usize {
    let c = if looped { 8.0 } else { 56.0 };
    (n as f64 / (c * (n as f64).log2())).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::ratio;

    #[test]
    fn hamming_bound_examples() {
        assert_eq!(hamming_bound(20), ratio(10, 1));
        assert_eq!(hamming_bound(16), ratio(16, 1));
        assert_eq!(hamming_bound(7), ratio(7, 3));
    }

    #[test]
    fn frobenius_split() {
        assert_eq!(solve_17_33(512), Some((1, 15)));
        assert_eq!(solve_17_33(50), Some((1, 1)));
        assert_eq!(solve_17_33(511), None);
    }

    #[test]
    fn walker_subsets_keep_zero_and_omega() {
        assert_eq!(hypercube_walkers(2, 3), Some(vec![0, 1, 3]));
        assert_eq!(hypercube_walkers(2, 1), None);
        assert_eq!(hypercube_walkers(0, 1), Some(vec![0]));
        assert_eq!(hypercube_walkers(1, 3), None);
    }

    #[test]
    fn product_shapes_have_first_row_and_column() {
        let (r, s, keep) = product_shape(4, 4, 5, |_, _| true).unwrap();
        assert!(r + s - 1 <= 5 && 5 <= r * s);
        assert!((0..r).all(|i| keep.contains(&(i, 0))));
        assert!((0..s).all(|j| keep.contains(&(0, j))));
        assert_eq!(keep.len(), 5);
    }
}
