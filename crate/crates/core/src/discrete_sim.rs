//! The discrete tree process: one event per step, vertex chosen with
//! probability proportional to `b(deg) + d(deg)`.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::kernel::{Draws, Event, Population};
use crate::rate_model::RateModel;

/// Hub ranks are recomputed after every step up to this `n`, then on a
/// geometric grid with ratio [`HUB_GRID_RATIO`].
pub const HUB_EXACT_UNTIL: u64 = 1000;
pub const HUB_GRID_RATIO: f64 = 1.05;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("the tree has died; no further steps are defined")]
    SteppedAfterDeath,
    #[error("the alive set is empty")]
    EmptyAliveSet,
}

/// The tree `T_n` with its alive set. `n = events + 1`.
#[derive(Debug, Clone)]
pub struct TreeState {
    pop: Population,
}

impl TreeState {
    pub fn init(model: &RateModel) -> Self {
        TreeState { pop: Population::new(model) }
    }

    pub fn n(&self) -> u64 {
        self.pop.events() + 1
    }

    pub fn died(&self) -> bool {
        self.pop.alive_count() == 0
    }

    pub fn population(&self) -> &Population {
        &self.pop
    }

    pub fn total_weight(&self) -> f64 {
        self.pop.total_weight()
    }

    pub fn alive_count(&self) -> u64 {
        self.pop.alive_count()
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Event, SimError> {
        self.step_with(&Draws::sample(rng))
    }

    pub fn step_with(&mut self, draws: &Draws) -> Result<Event, SimError> {
        self.pop.apply(draws).ok_or(SimError::SteppedAfterDeath)
    }

    /// `O_n`, the smallest alive label.
    pub fn oldest(&self) -> Option<u64> {
        self.pop.oldest()
    }

    /// `I_n^(1..=m)`; entries past the alive count are `None`.
    pub fn hubs(&self, m: usize) -> Vec<Option<(u64, u64)>> {
        let mut out: Vec<Option<(u64, u64)>> = self.pop.hubs(m).into_iter().map(Some).collect();
        out.resize(m, None);
        out
    }

    /// Alive vertex of maximal degree (smallest label on ties) and its degree.
    pub fn max_degree(&self) -> Result<(u64, u64), SimError> {
        self.pop.hubs(1).first().copied().ok_or(SimError::EmptyAliveSet)
    }
}

/// One recorded checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub n: u64,
    pub oldest: Option<u64>,
    /// Birth rank of `O_n` among all vertices ever born.
    pub oldest_rank: Option<u64>,
    pub hubs: Vec<Option<u64>>,
    pub hub_degrees: Vec<Option<u64>>,
    pub max_degree: Option<u64>,
    pub alive: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub checkpoints: Vec<Checkpoint>,
    pub survived: bool,
    /// Final `n` reached (the `n` of the last state before death if it died).
    pub final_n: u64,
    /// Per hub rank, the values of `n` at which `I_n^(m)` changed.
    pub hub_change_steps: Vec<Vec<u64>>,
}

impl Trajectory {
    /// Last `n` at which `I_n^(m)` changed, or 0 if it never did after `n = 1`.
    pub fn last_hub_change(&self, m: usize) -> u64 {
        self.hub_change_steps[m - 1].last().copied().unwrap_or(0)
    }
}

fn checkpoint(state: &TreeState, m: usize) -> Checkpoint {
    let hubs = state.hubs(m);
    let pop = state.population();
    Checkpoint {
        n: state.n(),
        oldest: state.oldest(),
        oldest_rank: state.oldest().map(|o| pop.birth_rank(o)),
        hubs: hubs.iter().map(|h| h.map(|(l, _)| l)).collect(),
        hub_degrees: hubs.iter().map(|h| h.map(|(_, d)| d)).collect(),
        max_degree: pop.top_degree(),
        alive: pop.alive_count(),
    }
}

/// Run `T_1, …, T_steps` (so `steps − 1` events) and record the requested
/// checkpoints. Stops early if the tree dies.
pub fn run<R: Rng + ?Sized>(
    model: &RateModel,
    steps: u64,
    checkpoints: &[u64],
    m: usize,
    rng: &mut R,
) -> Trajectory {
    assert!(steps >= 1 && m >= 1, "run needs steps >= 1 and M >= 1");
    let mut marks: Vec<u64> = checkpoints.iter().copied().filter(|&c| c >= 1 && c <= steps).collect();
    marks.sort_unstable();
    marks.dedup();
    let mut marks = marks.into_iter().peekable();

    let mut state = TreeState::init(model);
    let mut rows = Vec::new();
    let mut changes = vec![Vec::new(); m];
    let mut current: Vec<Option<u64>> = state.hubs(m).iter().map(|h| h.map(|(l, _)| l)).collect();
    let mut next_hub_check = 2u64;

    loop {
        let n = state.n();
        if n >= next_hub_check || marks.peek() == Some(&n) {
            let fresh: Vec<Option<u64>> = state.hubs(m).iter().map(|h| h.map(|(l, _)| l)).collect();
            for (rank, (old, new)) in current.iter().zip(&fresh).enumerate() {
                if old != new {
                    changes[rank].push(n);
                }
            }
            current = fresh;
            if n >= next_hub_check {
                next_hub_check = if n < HUB_EXACT_UNTIL { n + 1 } else { ((n as f64) * HUB_GRID_RATIO).ceil() as u64 };
            }
        }
        if marks.peek() == Some(&n) {
            marks.next();
            rows.push(checkpoint(&state, m));
        }
        if n >= steps {
            break;
        }
        match state.step(rng).expect("loop exits once the tree dies") {
            Event::Halted { .. } => break,
            Event::Birth { .. } | Event::Death { .. } => {}
        }
    }
    Trajectory { checkpoints: rows, survived: !state.died(), final_n: state.n(), hub_change_steps: changes }
}
