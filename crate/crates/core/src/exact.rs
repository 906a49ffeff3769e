//! Brute-force law of the discrete chain for a handful of steps.
//!
//! Every event sequence is expanded and weighted by the product of its
//! one-step probabilities; identical trees are merged. Outcomes use the key
//! layout of [`crate::kernel::Population::outcome_key`].

use std::collections::BTreeMap;

use crate::rate_model::RateModel;

pub type Law = BTreeMap<Vec<i32>, f64>;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Tree {
    /// Parent label per label (0 for the root, −1 when unused).
    parent: Vec<i32>,
    alive: Vec<bool>,
    events: usize,
}

impl Tree {
    fn degree(&self, v: usize) -> u64 {
        self.parent.iter().filter(|&&p| p == v as i32 + 1).count() as u64
    }

    fn key(&self, labels: usize) -> Vec<i32> {
        let mut key: Vec<i32> = self.parent[..labels].to_vec();
        key.extend(self.alive[..labels].iter().map(|&a| a as i32));
        key
    }
}

/// Laws of `T_{k+1}` for `k = 0..=max_events`, i.e. after `k` events.
/// A dead tree stays frozen.
pub fn discrete_laws(model: &RateModel, max_events: usize) -> Vec<Law> {
    assert!(max_events <= 8, "enumeration grows factorially");
    let labels = max_events + 1;
    let mut root = Tree { parent: vec![-1; labels], alive: vec![false; labels], events: 0 };
    root.parent[0] = 0;
    root.alive[0] = true;
    let mut current: BTreeMap<Tree, f64> = BTreeMap::from([(root, 1.0)]);
    let mut laws = Vec::with_capacity(max_events + 1);
    for k in 0..=max_events {
        let mut law = Law::new();
        for (tree, p) in &current {
            *law.entry(tree.key(k + 1)).or_insert(0.0) += p;
        }
        laws.push(law);
        if k == max_events {
            break;
        }
        let mut next: BTreeMap<Tree, f64> = BTreeMap::new();
        for (tree, p) in current {
            let rates: Vec<(usize, f64, f64)> = (0..labels)
                .filter(|&v| tree.alive[v])
                .map(|v| {
                    let (b, d) = model.eval_rates(tree.degree(v));
                    (v, b, d)
                })
                .collect();
            let total: f64 = rates.iter().map(|(_, b, d)| b + d).sum();
            if rates.is_empty() {
                *next.entry(tree).or_insert(0.0) += p;
                continue;
            }
            for (v, b, d) in rates {
                if d > 0.0 {
                    let mut t = tree.clone();
                    t.alive[v] = false;
                    t.events += 1;
                    *next.entry(t).or_insert(0.0) += p * d / total;
                }
                if b > 0.0 {
                    let mut t = tree.clone();
                    t.events += 1;
                    let child = t.events;
                    t.parent[child] = v as i32 + 1;
                    t.alive[child] = true;
                    *next.entry(t).or_insert(0.0) += p * b / total;
                }
            }
        }
        current = next;
    }
    laws
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_model::Family;

    #[test]
    fn single_step_laws() {
        let ua = RateModel::builtin(Family::UaUnitDeath);
        let laws = discrete_laws(&ua, 2);
        assert_eq!(laws[0].len(), 1);
        // dead root: labels {1, 2}, parents (0, −1), alive (0, 0)
        assert_eq!(laws[1][&vec![0, -1, 0, 0]], 0.5);
        assert_eq!(laws[1][&vec![0, 1, 1, 1]], 0.5);
    }

    #[test]
    fn alive_set_two_after_two_events() {
        let ua = RateModel::builtin(Family::UaUnitDeath);
        let laws = discrete_laws(&ua, 2);
        let p: f64 = laws[2]
            .iter()
            .filter(|(k, _)| k[3..] == [0, 1, 0])
            .map(|(_, p)| p)
            .sum();
        assert!((p - 0.125).abs() < 1e-15);
    }

    #[test]
    fn probabilities_sum_to_one() {
        for family in Family::BUILTIN {
            let laws = discrete_laws(&RateModel::builtin(family), 5);
            for law in &laws {
                let total: f64 = law.values().sum();
                assert!((total - 1.0).abs() < 1e-12, "{family}: {total}");
            }
        }
    }

    #[test]
    fn pure_birth_has_no_dead_outcomes() {
        let laws = discrete_laws(&RateModel::builtin(Family::PaPure), 4);
        // recursive trees on 5 vertices: 4! of them
        assert_eq!(laws[4].len(), 24);
        assert!(laws[4].keys().all(|k| k[5..].iter().all(|&a| a == 1)));
    }
}
