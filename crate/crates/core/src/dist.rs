//! Finite distributions with exact probabilities.

use std::hash::Hash;

use indexmap::map::Entry;
use indexmap::IndexMap;
use rand::Rng;
use rustc_hash::FxBuildHasher;

use crate::prob::Prob;

/// A finite distribution with exact weights. Outcomes are kept in insertion
/// order so that sampling is reproducible for a fixed RNG stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dist<T: Hash + Eq> {
    weights: IndexMap<T, Prob, FxBuildHasher>,
}

impl<T: Hash + Eq + Clone> Dist<T> {
    pub fn empty() -> Self {
        Dist { weights: IndexMap::default() }
    }

    pub fn point(x: T) -> Self {
        let mut d = Self::empty();
        d.add(x, Prob::one());
        d
    }

    /// Uniform law over `items` (duplicates accumulate weight).
    pub fn uniform<I: IntoIterator<Item = T>>(items: I) -> Self {
        let items: Vec<T> = items.into_iter().collect();
        assert!(!items.is_empty(), "uniform law over an empty set");
        let w = Prob::ratio(1, items.len() as i64);
        let mut d = Self::empty();
        for x in items {
            d.add(x, w.clone());
        }
        d
    }

    /// Adds `w` to the weight of `x`; zero weights are ignored.
    pub fn add(&mut self, x: T, w: Prob) {
        if w.is_zero() {
            return;
        }
        match self.weights.entry(x) {
            Entry::Occupied(mut e) => {
                *e.get_mut() += &w;
                if e.get().is_zero() {
                    e.shift_remove();
                }
            }
            Entry::Vacant(e) => {
                e.insert(w);
            }
        }
    }

    /// Adds every outcome of `other`, scaled by `scale`.
    pub fn add_scaled(&mut self, other: &Dist<T>, scale: &Prob) {
        if scale.is_one() {
            for (x, w) in other.iter() {
                self.add(x.clone(), w.clone());
            }
            return;
        }
        for (x, w) in other.iter() {
            self.add(x.clone(), scale * w);
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, &Prob)> {
        self.weights.iter()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &T> {
        self.weights.keys()
    }

    pub fn get(&self, x: &T) -> Prob {
        self.weights.get(x).cloned().unwrap_or_else(Prob::zero)
    }

    pub fn total(&self) -> Prob {
        let mut t = Prob::zero();
        for w in self.weights.values() {
            t += w;
        }
        t
    }

    /// Divides every weight by the total mass.
    pub fn normalized(&self) -> Self {
        let t = self.total();
        assert!(!t.is_zero(), "cannot normalize a zero measure");
        self.scaled(&t.recip())
    }

    pub fn scaled(&self, s: &Prob) -> Self {
        let mut d = Self::empty();
        d.add_scaled(self, s);
        d
    }

    pub fn map<U: Hash + Eq + Clone>(&self, mut f: impl FnMut(&T) -> U) -> Dist<U> {
        let mut d = Dist::empty();
        for (x, w) in self.iter() {
            d.add(f(x), w.clone());
        }
        d
    }

    /// Monadic bind: `Σ_x w(x) · f(x)`.
    pub fn bind<U: Hash + Eq + Clone, E>(
        &self,
        mut f: impl FnMut(&T) -> Result<Dist<U>, E>,
    ) -> Result<Dist<U>, E> {
        let mut d = Dist::empty();
        for (x, w) in self.iter() {
            d.add_scaled(&f(x)?, w);
        }
        Ok(d)
    }

    /// Restriction to outcomes satisfying `keep` (not renormalized).
    pub fn filter(&self, mut keep: impl FnMut(&T) -> bool) -> Self {
        let mut d = Self::empty();
        for (x, w) in self.iter() {
            if keep(x) {
                d.add(x.clone(), w.clone());
            }
        }
        d
    }

    pub fn into_vec(self) -> Vec<(T, Prob)> {
        self.weights.into_iter().collect()
    }

    /// Floating-point cumulative table for sampling.
    pub fn cumulative(&self) -> Vec<(T, f64)> {
        let mut acc = 0.0;
        self.iter()
            .map(|(x, w)| {
                acc += w.to_f64();
                (x.clone(), acc)
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        sample_cumulative(&self.cumulative(), rng).clone()
    }
}

/// Draws from a cumulative table produced by [`Dist::cumulative`].
pub fn sample_cumulative<'a, T, R: Rng + ?Sized>(table: &'a [(T, f64)], rng: &mut R) -> &'a T {
    let total = table.last().expect("sampling from an empty distribution").1;
    let u: f64 = rng.random::<f64>() * total;
    let idx = table.partition_point(|(_, c)| *c <= u);
    &table[idx.min(table.len() - 1)].0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weights_merge_and_cancel() {
        let mut d = Dist::empty();
        d.add(1, Prob::ratio(1, 3));
        d.add(1, Prob::ratio(1, 6));
        d.add(2, Prob::ratio(1, 2));
        assert_eq!(d.get(&1), Prob::ratio(1, 2));
        assert_eq!(d.total(), Prob::one());
        d.add(2, Prob::ratio(-1, 2));
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn bind_composes_exactly() {
        let coin = Dist::uniform([0, 1]);
        let two: Dist<i32> = coin
            .bind(|&a| Ok::<_, ()>(Dist::uniform([0, 1]).map(|&b| a + b)))
            .unwrap();
        assert_eq!(two.get(&1), Prob::ratio(1, 2));
        assert_eq!(two.get(&2), Prob::ratio(1, 4));
    }

    #[test]
    fn sampling_only_returns_support() {
        let d = Dist::uniform([3, 5, 7]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!([3, 5, 7].contains(&d.sample(&mut rng)));
        }
    }
}
