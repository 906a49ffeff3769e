use std::collections::HashMap;

use pavd::config::{derive_stream, Engine};
use pavd::discrete_sim::TreeState;
use pavd::exact::discrete_laws;
use pavd::experiments::{engine_agreement, survival_probability};
use pavd::rate_model::{Family, RateModel};
use pavd::stats;

fn gof_against_exact(model: &RateModel, max_events: usize, replicas: u64, seed: u64) -> Vec<f64> {
    let laws = discrete_laws(model, max_events);
    let mut counts: Vec<HashMap<Vec<i32>, u64>> = vec![HashMap::new(); max_events + 1];
    for i in 0..replicas {
        let mut rng = derive_stream(seed, i);
        let mut state = TreeState::init(model);
        for (k, slot) in counts.iter_mut().enumerate().skip(1) {
            if !state.died() {
                state.step(&mut rng).unwrap();
            }
            *slot.entry(state.population().outcome_key(k + 1)).or_insert(0) += 1;
        }
    }
    (1..=max_events)
        .map(|k| {
            let mut outcomes: Vec<_> = laws[k].iter().collect();
            outcomes.sort_by(|a, b| b.1.total_cmp(a.1));
            let observed: Vec<u64> = outcomes.iter().map(|(key, _)| counts[k].get(*key).copied().unwrap_or(0)).collect();
            assert_eq!(observed.iter().sum::<u64>(), replicas, "simulator produced an outcome outside the support");
            let probs: Vec<f64> = outcomes.iter().map(|(_, &p)| p).collect();
            stats::chi_square_gof(&observed, &probs).p_value
        })
        .collect()
}

#[test]
fn discrete_simulator_matches_enumeration() {
    for (family, seed) in [(Family::UaUnitDeath, 11), (Family::PaUnitDeath, 12), (Family::Rao, 13)] {
        let p = gof_against_exact(&RateModel::builtin(family), 4, 40_000, seed);
        assert!(p.iter().all(|&p| p > 1e-4), "{family}: {p:?}");
    }
}

#[test]
fn gillespie_agrees_with_clock_oracle() {
    for (family, seed) in [(Family::UaUnitDeath, 21), (Family::PaGeomDeath, 22)] {
        let t = engine_agreement(&RateModel::builtin(family), 5, 20_000, seed);
        assert!(t.p_value > 1e-4, "{family}: {t:?}");
    }
}

#[test]
fn engines_agree_on_survival() {
    let model = RateModel::builtin(Family::UaUnitDeath);
    let a = survival_probability(&model, Engine::Discrete, 20, 40_000, 31);
    let b = survival_probability(&model, Engine::Ctbp, 20, 40_000, 32);
    let t = stats::two_proportion(a.survived, a.total, b.survived, b.total);
    assert!(t.p_value > 1e-4, "{a:?} {b:?}");
}
