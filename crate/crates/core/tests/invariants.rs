use proptest::prelude::*;

use pavd::config::derive_stream;
use pavd::ctbp_sim::BPState;
use pavd::discrete_sim::TreeState;
use pavd::kernel::Event;
use pavd::rate_model::{RateModel, RateSeq, Tail};

fn model() -> impl Strategy<Value = RateModel> {
    let constant = (0.2f64..3.0, 0.0f64..2.0).prop_map(|(b, d)| RateModel::constant(b, d).unwrap());
    let affine = (0.0f64..2.0, 0.2f64..2.0, prop::collection::vec(0.0f64..3.0, 0..4), 0.0f64..1.5).prop_map(
        |(slope, intercept, head, tail)| {
            RateModel::from_tables(RateSeq::affine(slope, intercept), RateSeq::new(head, Tail::Constant { value: tail }), Some(tail))
                .unwrap()
        },
    );
    prop_oneof![constant, affine]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discrete_bookkeeping(model in model(), seed in any::<u64>(), steps in 2u64..400) {
        let mut rng = derive_stream(seed, 0);
        let mut state = TreeState::init(&model);
        let mut deaths = 0u64;
        let mut oldest = 1u64;
        while state.n() < steps && !state.died() {
            if let Event::Death { .. } | Event::Halted { .. } = state.step(&mut rng).unwrap() {
                deaths += 1;
            }
            let pop = state.population();
            let w = pop.recomputed_weight();
            prop_assert!((pop.total_weight() - w).abs() <= 1e-9 * w.max(1.0));
            prop_assert_eq!(pop.alive_count() + deaths, pop.births());
            prop_assert_eq!(pop.events(), pop.births() - 1 + deaths);
            prop_assert!(pop.max_label() <= pop.events() + 1);
            if let Some(o) = pop.oldest() {
                prop_assert!(o >= oldest);
                oldest = o;
            }
        }
        let pop = state.population();
        let degrees: u64 = (1..=pop.max_label()).filter(|&v| pop.is_born(v)).map(|v| pop.degree(v)).sum();
        prop_assert_eq!(degrees, pop.births() - 1);
        for v in 2..=pop.max_label() {
            if pop.is_born(v) {
                prop_assert!(pop.parent(v).unwrap() < v);
            }
        }
        let hubs = pop.hubs(4);
        for pair in hubs.windows(2) {
            prop_assert!(pair[0].1 > pair[1].1 || (pair[0].1 == pair[1].1 && pair[0].0 < pair[1].0));
        }
        if let Some(&(_, top)) = hubs.first() {
            prop_assert_eq!(Some(top), pop.top_degree());
        }
    }

    #[test]
    fn continuous_bookkeeping(model in model(), seed in any::<u64>(), events in 1u64..300) {
        let mut rng = derive_stream(seed, 1);
        let mut state = BPState::new(&model);
        let mut deaths = 0u64;
        let mut clock = 0.0;
        while state.events() < events && state.z_alive() > 0 {
            let (dt, event) = state.gillespie_step(&mut rng).unwrap();
            prop_assert!(dt > 0.0);
            if let Event::Death { .. } | Event::Halted { .. } = event {
                deaths += 1;
            }
            prop_assert!(state.clock() > clock);
            clock = state.clock();
            prop_assert_eq!(state.z_alive() + deaths, state.z_born());
            prop_assert_eq!(state.n_count(), state.events() + 1);
            prop_assert_eq!(state.tau().len() as u64, state.events());
        }
    }
}
