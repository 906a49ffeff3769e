//! The continuous-time branching process. Individual `v` gives birth after
//! i.i.d.-in-law gaps `E_i ~ Exp(b(i) + d(i))`, each ending in a birth with
//! probability `b(i)/(b(i)+d(i))` and in death otherwise.
//!
//! The primary engine draws the next event time from the total rate and
//! hands the jump to the same kernel as the discrete simulator. The clock
//! oracle instead gives every individual its own exponential clock.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;
use thiserror::Error;

use crate::kernel::{Draws, Event, Population};
use crate::rate_model::RateModel;

/// Default cap on the number of gaps drawn for one lifeline.
pub const LIFELINE_CAP: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CtbpError {
    #[error("the population is extinct")]
    ExtinctState,
}

/// Continuous-time state. Labels match the discrete chain, so `BP(τ_n)`
/// and `T_{n+1}` are directly comparable.
#[derive(Debug, Clone)]
pub struct BPState {
    pop: Population,
    clock: f64,
    birth_time: Vec<f64>,
    tau: Vec<f64>,
}

impl BPState {
    pub fn new(model: &RateModel) -> Self {
        BPState { pop: Population::new(model), clock: 0.0, birth_time: vec![0.0], tau: Vec::new() }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn population(&self) -> &Population {
        &self.pop
    }

    /// `N(t)`: births plus deaths so far, the root excluded.
    pub fn events(&self) -> u64 {
        self.pop.events()
    }

    /// `Z^a_t`.
    pub fn z_alive(&self) -> u64 {
        self.pop.alive_count()
    }

    /// `Z^b_t`, the root included.
    pub fn z_born(&self) -> u64 {
        self.pop.births()
    }

    /// `τ_1, …, τ_N`.
    /// `N = 2·Z_born − Z_alive`: one plus the number of events.
    pub fn n_count(&self) -> u64 {
        2 * self.z_born() - self.z_alive()
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn birth_time(&self, label: u64) -> f64 {
        self.birth_time[label as usize - 1]
    }

    pub fn gillespie_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(f64, Event), CtbpError> {
        let dt = self.holding_time(rng)?;
        Ok((dt, self.jump(dt, rng)))
    }

    fn holding_time<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, CtbpError> {
        if self.pop.alive_count() == 0 {
            return Err(CtbpError::ExtinctState);
        }
        let e: f64 = Exp1.sample(rng);
        Ok(e / self.pop.total_weight())
    }

    fn jump<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> Event {
        let event = self.pop.apply(&Draws::sample(rng)).expect("alive set is nonempty");
        self.clock += dt;
        self.tau.push(self.clock);
        if let Event::Birth { child, .. } = event {
            self.birth_time.resize(child as usize, f64::NAN);
            self.birth_time[child as usize - 1] = self.clock;
        }
        event
    }

    /// Birth time of the oldest alive individual.
    pub fn oldest_birth_time(&self) -> Option<f64> {
        self.pop.oldest().map(|l| self.birth_time(l))
    }

    /// Birth times of the `m` hubs; ties in degree go to the earliest birth.
    pub fn hub_birth_times(&self, m: usize) -> Vec<Option<f64>> {
        let mut out: Vec<Option<f64>> =
            self.pop.hubs(m).into_iter().map(|(l, _)| Some(self.birth_time(l))).collect();
        out.resize(m, None);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    time: f64,
    label: u64,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.label.cmp(&self.label))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reference engine: each alive individual holds its own pending event time,
/// the gap for its current degree, in a priority queue.
#[derive(Debug, Clone)]
pub struct ClockOracle {
    model: RateModel,
    clock: f64,
    queue: BinaryHeap<Pending>,
    degree: Vec<u64>,
    alive: Vec<bool>,
    events: u64,
    alive_count: u64,
}

impl ClockOracle {
    pub fn new<R: Rng + ?Sized>(model: &RateModel, rng: &mut R) -> Self {
        let mut oracle = ClockOracle {
            model: model.clone(),
            clock: 0.0,
            queue: BinaryHeap::new(),
            degree: vec![0],
            alive: vec![true],
            events: 0,
            alive_count: 1,
        };
        oracle.schedule(1, rng);
        oracle
    }

    fn schedule<R: Rng + ?Sized>(&mut self, label: u64, rng: &mut R) {
        let (b, d) = self.model.eval_rates(self.degree[label as usize - 1]);
        let e: f64 = Exp1.sample(rng);
        self.queue.push(Pending { time: self.clock + e / (b + d), label });
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn alive_count(&self) -> u64 {
        self.alive_count
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(f64, Event), CtbpError> {
        let next = self.queue.pop().ok_or(CtbpError::ExtinctState)?;
        let dt = next.time - self.clock;
        self.clock = next.time;
        self.events += 1;
        let v = next.label;
        let (b, d) = self.model.eval_rates(self.degree[v as usize - 1]);
        let u: f64 = rng.random();
        let event = if u < d / (b + d) {
            self.alive[v as usize - 1] = false;
            self.alive_count -= 1;
            if self.alive_count == 0 {
                Event::Halted { victim: v }
            } else {
                Event::Death { victim: v }
            }
        } else {
            let child = self.events + 1;
            self.degree[v as usize - 1] += 1;
            self.degree.resize(child as usize, 0);
            self.alive.resize(child as usize, false);
            self.alive[child as usize - 1] = true;
            self.alive_count += 1;
            self.schedule(v, rng);
            self.schedule(child, rng);
            Event::Birth { parent: v, child }
        };
        Ok((dt, event))
    }
}

/// One individual's reproduction history, birth at time 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lifeline {
    /// Offspring count `D` (a lower bound when truncated).
    pub offspring: u64,
    pub truncated: bool,
    /// `S_0 = 0, S_1, …, S_{D+1}`; `S_k` is the `k`-th birth, `S_{D+1}` the death.
    pub partial_sums: Vec<f64>,
    pub lifetime: f64,
}

pub fn sample_lifeline<R: Rng + ?Sized>(model: &RateModel, rng: &mut R, cap: u64) -> Lifeline {
    assert!(cap >= 1);
    let mut sums = vec![0.0];
    let mut s = 0.0;
    let mut i = 0;
    loop {
        let (b, d) = model.eval_rates(i);
        let e: f64 = Exp1.sample(rng);
        s += e / (b + d);
        sums.push(s);
        let u: f64 = rng.random();
        i += 1;
        if u < d / (b + d) {
            return Lifeline { offspring: i - 1, truncated: false, partial_sums: sums, lifetime: s };
        }
        if i == cap {
            return Lifeline { offspring: i, truncated: true, partial_sums: sums, lifetime: f64::INFINITY };
        }
    }
}

/// `(D, L, truncated)` without keeping the partial sums. Same draws as
/// [`sample_lifeline`].
pub fn sample_lifetime<R: Rng + ?Sized>(model: &RateModel, rng: &mut R, cap: u64) -> (u64, f64, bool) {
    assert!(cap >= 1);
    let mut s = 0.0;
    let mut i = 0;
    loop {
        let (b, d) = model.eval_rates(i);
        let e: f64 = Exp1.sample(rng);
        s += e / (b + d);
        let u: f64 = rng.random();
        i += 1;
        if u < d / (b + d) {
            return (i - 1, s, false);
        }
        if i == cap {
            return (i, f64::INFINITY, true);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Until {
    Events(u64),
    Time(f64),
}

/// A snapshot of the process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContRow {
    pub t: f64,
    /// Events so far, so `N(t) = n + 1`.
    pub n: u64,
    pub o_cont: Option<f64>,
    pub i_cont: Vec<Option<f64>>,
    pub z_alive: u64,
    pub z_born: u64,
    /// `N(t)·exp(−λ* t)` when `λ*` is known.
    pub w_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContTrajectory {
    pub rows: Vec<ContRow>,
    pub extinct: bool,
    pub final_time: f64,
    pub final_events: u64,
}

fn snapshot(state: &BPState, t: f64, m: usize, lambda_star: Option<f64>) -> ContRow {
    ContRow {
        t,
        n: state.events(),
        o_cont: state.oldest_birth_time(),
        i_cont: state.hub_birth_times(m),
        z_alive: state.z_alive(),
        z_born: state.z_born(),
        w_hat: lambda_star.map(|l| state.n_count() as f64 * (-l * t).exp()),
    }
}

/// Run until `until`, recording a row at each time in `times` and at each
/// `τ_n` with `n` in `event_marks`. After extinction, later time marks get
/// rows showing the frozen state.
pub fn run_ctbp<R: Rng + ?Sized>(
    model: &RateModel,
    until: Until,
    times: &[f64],
    event_marks: &[u64],
    m: usize,
    lambda_star: Option<f64>,
    rng: &mut R,
) -> ContTrajectory {
    assert!(m >= 1);
    let (max_events, horizon) = match until {
        Until::Events(n) => {
            assert!(n >= 1);
            (n, f64::INFINITY)
        }
        Until::Time(t) => {
            assert!(t > 0.0);
            (u64::MAX, t)
        }
    };
    let mut times: Vec<f64> = times.iter().copied().filter(|&t| t >= 0.0 && t <= horizon).collect();
    times.sort_by(f64::total_cmp);
    let mut marks: Vec<u64> = event_marks.iter().copied().filter(|&n| n <= max_events).collect();
    marks.sort_unstable();
    marks.dedup();
    let (mut ti, mut mi) = (0, 0);

    let mut state = BPState::new(model);
    let mut rows = Vec::new();
    if marks.first() == Some(&0) {
        rows.push(snapshot(&state, 0.0, m, lambda_star));
        mi = 1;
    }
    while state.events() < max_events && state.z_alive() > 0 {
        let dt = state.holding_time(rng).expect("alive set is nonempty");
        let next = state.clock() + dt;
        // grid times inside the holding interval see the pre-jump state
        while ti < times.len() && times[ti] < next {
            rows.push(snapshot(&state, times[ti], m, lambda_star));
            ti += 1;
        }
        if next > horizon {
            break;
        }
        state.jump(dt, rng);
        if mi < marks.len() && marks[mi] == state.events() {
            rows.push(snapshot(&state, state.clock(), m, lambda_star));
            mi += 1;
        }
    }
    let extinct = state.z_alive() == 0;
    if extinct || horizon.is_finite() {
        for &t in &times[ti..] {
            rows.push(snapshot(&state, t, m, lambda_star));
        }
    }
    let final_time = if horizon.is_finite() { horizon } else { state.clock() };
    ContTrajectory { rows, extinct, final_time, final_events: state.events() }
}
