//! Alive-set bookkeeping and the selection kernel shared by both simulators.
//!
//! Every vertex of in-degree `c` carries the same weight `w(c) = b(c) + d(c)`,
//! so alive vertices are grouped into per-degree buckets. A Fenwick tree over
//! the class weights `count(c) · w(c)` picks a class in `O(log maxdeg)`; a
//! uniform index picks the vertex inside it.

use rand::Rng;
use serde::Serialize;

use crate::rate_model::RateModel;

/// Exact rebuild period for the class-weight index.
pub const REBUILD_PERIOD: u64 = 1 << 16;

const NONE: u32 = u32::MAX;

/// One step's worth of uniform variates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draws {
    pub class: f64,
    pub index: f64,
    pub kill: f64,
}

impl Draws {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Draws { class: rng.random(), index: rng.random(), kill: rng.random() }
    }
}

/// Outcome of one step. `Halted` is a death that empties the alive set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Birth { parent: u64, child: u64 },
    Death { victim: u64 },
    Halted { victim: u64 },
}

#[derive(Debug, Clone)]
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len().next_power_of_two().max(1);
        let mut tree = vec![0.0; n + 1];
        for (i, &v) in values.iter().enumerate() {
            tree[i + 1] = v;
        }
        for i in 1..=n {
            let j = i + (i & i.wrapping_neg());
            if j <= n {
                tree[j] += tree[i];
            }
        }
        Fenwick { tree }
    }

    fn capacity(&self) -> usize {
        self.tree.len() - 1
    }

    fn add(&mut self, index: usize, delta: f64) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        self.tree[self.capacity()]
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`.
    fn find(&self, mut target: f64) -> usize {
        let n = self.capacity();
        let mut pos = 0;
        let mut step = n;
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

/// Alive set, degrees and genealogy of a PAVD tree, indexed by label.
///
/// Labels follow the discrete chain: the child born at the `k`-th event
/// gets label `k + 1`, so labels are skipped at death events.
#[derive(Debug, Clone)]
pub struct Population {
    model: RateModel,
    /// `(b(c), d(c))` for every class seen so far.
    rates: Vec<(f64, f64)>,
    degree: Vec<u32>,
    alive: Vec<bool>,
    /// Parent label index, `NONE` for the root and for labels never used.
    parent: Vec<u32>,
    born: Vec<bool>,
    /// 1-based rank of each label among all births.
    birth_rank: Vec<u32>,
    slot: Vec<u32>,
    buckets: Vec<Vec<u32>>,
    index: Fenwick,
    events: u64,
    births: u64,
    alive_count: u64,
    top: usize,
    oldest: usize,
    updates: u64,
}

impl Population {
    /// A single alive root, label 1.
    pub fn new(model: &RateModel) -> Self {
        let mut pop = Population {
            model: model.clone(),
            rates: Vec::new(),
            degree: vec![0],
            alive: vec![true],
            parent: vec![NONE],
            born: vec![true],
            birth_rank: vec![1],
            slot: vec![0],
            buckets: vec![vec![0]],
            index: Fenwick::from_values(&[0.0]),
            events: 0,
            births: 1,
            alive_count: 1,
            top: 0,
            oldest: 0,
            updates: 0,
        };
        pop.ensure_class(0);
        pop.rebuild();
        pop
    }

    pub fn model(&self) -> &RateModel {
        &self.model
    }

    fn ensure_class(&mut self, c: usize) {
        while self.rates.len() <= c {
            let rates = self.model.eval_rates(self.rates.len() as u64);
            self.rates.push(rates);
        }
        while self.buckets.len() <= c {
            self.buckets.push(Vec::new());
        }
        if c >= self.index.capacity() {
            self.rebuild();
        }
    }

    fn class_weight(&self, c: usize) -> f64 {
        let (b, d) = self.rates[c];
        self.buckets[c].len() as f64 * (b + d)
    }

    /// Rebuild the class index exactly from the buckets.
    pub fn rebuild(&mut self) {
        let weights: Vec<f64> = (0..self.buckets.len()).map(|c| self.class_weight(c)).collect();
        let mut index = Fenwick::from_values(&weights);
        if index.capacity() < self.buckets.len() + 1 {
            let mut padded = weights;
            padded.resize(2 * index.capacity(), 0.0);
            index = Fenwick::from_values(&padded);
        }
        self.index = index;
        self.updates = 0;
    }

    fn insert(&mut self, v: usize, c: usize) {
        self.ensure_class(c);
        self.slot[v] = self.buckets[c].len() as u32;
        self.buckets[c].push(v as u32);
        let (b, d) = self.rates[c];
        self.index.add(c, b + d);
        self.top = self.top.max(c);
    }

    fn remove(&mut self, v: usize) {
        let c = self.degree[v] as usize;
        let s = self.slot[v] as usize;
        let bucket = &mut self.buckets[c];
        bucket.swap_remove(s);
        if let Some(&moved) = bucket.get(s) {
            self.slot[moved as usize] = s as u32;
        }
        let (b, d) = self.rates[c];
        self.index.add(c, -(b + d));
        while self.top > 0 && self.buckets[self.top].is_empty() {
            self.top -= 1;
        }
    }

    /// Class then uniform member; `None` when the alive set is empty.
    pub fn select(&self, draws: &Draws) -> Option<usize> {
        if self.alive_count == 0 {
            return None;
        }
        let total = self.index.total();
        let mut c = self.index.find(draws.class * total).min(self.top);
        if self.buckets[c].is_empty() {
            // rounding put the target on an empty class; take the nearest occupied one below
            c = (0..c).rev().find(|&k| !self.buckets[k].is_empty()).unwrap_or(self.top);
        }
        let bucket = &self.buckets[c];
        let i = ((draws.index * bucket.len() as f64) as usize).min(bucket.len() - 1);
        Some(bucket[i] as usize)
    }

    /// Apply one event using the given variates. `None` when the alive set is empty.
    pub fn apply(&mut self, draws: &Draws) -> Option<Event> {
        let v = self.select(draws)?;
        let c = self.degree[v] as usize;
        let (b, d) = self.rates[c];
        self.events += 1;
        self.updates += 1;
        let event = if draws.kill < d / (b + d) {
            self.remove(v);
            self.alive[v] = false;
            self.alive_count -= 1;
            while self.oldest < self.alive.len() && !self.alive[self.oldest] {
                self.oldest += 1;
            }
            if self.alive_count == 0 {
                Event::Halted { victim: v as u64 + 1 }
            } else {
                Event::Death { victim: v as u64 + 1 }
            }
        } else {
            let child = self.events as usize;
            self.remove(v);
            self.degree[v] += 1;
            self.insert(v, c + 1);
            self.degree.resize(child + 1, 0);
            self.alive.resize(child + 1, false);
            self.parent.resize(child + 1, NONE);
            self.born.resize(child + 1, false);
            self.birth_rank.resize(child + 1, 0);
            self.slot.resize(child + 1, 0);
            self.alive[child] = true;
            self.parent[child] = v as u32;
            self.born[child] = true;
            self.births += 1;
            self.birth_rank[child] = self.births as u32;
            self.alive_count += 1;
            self.insert(child, 0);
            Event::Birth { parent: v as u64 + 1, child: child as u64 + 1 }
        };
        if self.updates >= REBUILD_PERIOD {
            self.rebuild();
        }
        Some(event)
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn births(&self) -> u64 {
        self.births
    }

    pub fn alive_count(&self) -> u64 {
        self.alive_count
    }

    /// Largest label assigned so far.
    pub fn max_label(&self) -> u64 {
        self.alive.len() as u64
    }

    pub fn total_weight(&self) -> f64 {
        self.index.total()
    }

    /// `Σ_{v alive} w(deg v)` summed vertex by vertex.
    pub fn recomputed_weight(&self) -> f64 {
        (0..self.alive.len())
            .filter(|&v| self.alive[v])
            .map(|v| {
                let (b, d) = self.rates[self.degree[v] as usize];
                b + d
            })
            .sum()
    }

    pub fn is_alive(&self, label: u64) -> bool {
        label >= 1 && self.alive.get(label as usize - 1).copied().unwrap_or(false)
    }

    pub fn is_born(&self, label: u64) -> bool {
        label >= 1 && self.born.get(label as usize - 1).copied().unwrap_or(false)
    }

    pub fn degree(&self, label: u64) -> u64 {
        self.degree[label as usize - 1] as u64
    }

    pub fn parent(&self, label: u64) -> Option<u64> {
        let p = self.parent[label as usize - 1];
        (p != NONE).then_some(p as u64 + 1)
    }

    pub fn birth_rank(&self, label: u64) -> u64 {
        self.birth_rank[label as usize - 1] as u64
    }

    /// Smallest alive label.
    pub fn oldest(&self) -> Option<u64> {
        (self.alive_count > 0).then_some(self.oldest as u64 + 1)
    }

    /// Largest alive degree.
    pub fn top_degree(&self) -> Option<u64> {
        (self.alive_count > 0).then_some(self.top as u64)
    }

    /// Alive vertices in class `c`, in bucket order.
    pub fn bucket(&self, c: usize) -> &[u32] {
        self.buckets.get(c).map_or(&[], |b| b.as_slice())
    }

    /// The `m` first alive vertices ordered by degree descending, then label
    /// ascending, as `(label, degree)`.
    pub fn hubs(&self, m: usize) -> Vec<(u64, u64)> {
        let mut out = Vec::with_capacity(m);
        if self.alive_count == 0 {
            return out;
        }
        let mut c = self.top;
        loop {
            let need = m - out.len();
            let bucket = &self.buckets[c];
            let mut smallest: Vec<u32> = if bucket.len() <= need {
                bucket.clone()
            } else {
                let mut best: Vec<u32> = Vec::with_capacity(need + 1);
                for &v in bucket {
                    if best.len() < need || v < best[need - 1] {
                        let pos = best.partition_point(|&x| x < v);
                        best.insert(pos, v);
                        best.truncate(need);
                    }
                }
                best
            };
            smallest.sort_unstable();
            out.extend(smallest.into_iter().map(|v| (v as u64 + 1, c as u64)));
            if out.len() >= m || c == 0 {
                break;
            }
            c -= 1;
        }
        out
    }

    /// Canonical outcome of the tree on labels `1..=labels`: parent codes
    /// (`0` for the root, `-1` for unused labels) followed by alive bits.
    pub fn outcome_key(&self, labels: usize) -> Vec<i32> {
        let mut key = vec![-1; 2 * labels];
        for v in 0..labels {
            if v < self.born.len() && self.born[v] {
                key[v] = if self.parent[v] == NONE { 0 } else { self.parent[v] as i32 + 1 };
                key[labels + v] = self.alive[v] as i32;
            } else {
                key[labels + v] = 0;
            }
        }
        key
    }
}
