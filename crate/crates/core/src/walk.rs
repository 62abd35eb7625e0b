//! The quenched nearest-neighbour walk on `T ∪ {e*}`.
//!
//! From a vertex `x` the walk moves to its parent (or to `e*` from the root)
//! with weight `e^{-V(x)}` and to child `x^j` with weight `e^{-V(x^j)}`; from
//! `e*` it moves to the root. Weights are used relative to `e^{-V(x)}`, so the
//! step to the parent always has weight 1.
//!
//! Time counts steps. The walk starts at the root at time 0 and `L_x^n` is the
//! number of arrivals at `x` during the first `n` steps. An excursion ends at
//! each arrival at `e*`.

use std::io::Write;

use rand::Rng;

use crate::env::{EnvironmentStore, VertexId};
use crate::rng::StreamRng;
use crate::stats::{Accumulator, Estimate};
use crate::{Error, Result};

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Position {
    EStar,
    At(VertexId),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkState {
    pub position: Position,
    pub steps: u64,
    pub excursions: u64,
    pub max_depth_seen: u32,
    pub min_potential_seen: f64,
}

impl WalkState {
    fn start() -> Self {
        WalkState {
            position: Position::At(VertexId::ROOT),
            steps: 0,
            excursions: 0,
            max_depth_seen: 0,
            min_potential_seen: 0.0,
        }
    }
}

/// Local times indexed by vertex handle.
///
/// `site[x]` counts arrivals at `x`, `edge[x]` counts crossings `x* → x`
/// (`e* → e` for the root) and `child_edge[x]` is `Σ_{y* = x} edge[y]`. The
/// per-excursion counters feed `E_x^n` (excursions crossing `(x*, x)`) and
/// `Ẽ_x^n` (excursions reaching `x` more often from below than from above).
#[derive(Clone, Debug, Default)]
pub struct LocalTimeLedger {
    site: Vec<u64>,
    edge: Vec<u64>,
    child_edge: Vec<u64>,
    e_count: Vec<u32>,
    e_tilde_count: Vec<u32>,
    exc_edge: Vec<u32>,
    exc_child: Vec<u32>,
    touched: Vec<VertexId>,
    visited: Vec<VertexId>,
}

impl LocalTimeLedger {
    fn grow(&mut self, len: usize) {
        if self.site.len() < len {
            self.site.resize(len, 0);
            self.edge.resize(len, 0);
            self.child_edge.resize(len, 0);
            self.e_count.resize(len, 0);
            self.e_tilde_count.resize(len, 0);
            self.exc_edge.resize(len, 0);
            self.exc_child.resize(len, 0);
        }
    }

    #[inline]
    fn get(v: &[u64], x: VertexId) -> u64 {
        v.get(x.index()).copied().unwrap_or(0)
    }

    /// `L_x`: number of arrivals at `x`.
    pub fn site(&self, x: VertexId) -> u64 {
        Self::get(&self.site, x)
    }

    /// `N_x`: crossings of the edge `(x*, x)` towards `x`.
    pub fn edge(&self, x: VertexId) -> u64 {
        Self::get(&self.edge, x)
    }

    /// `Σ_{y* = x} N_y`.
    pub fn child_edge(&self, x: VertexId) -> u64 {
        Self::get(&self.child_edge, x)
    }

    /// `E_x^n` over completed excursions.
    pub fn excursions_crossing(&self, x: VertexId) -> u32 {
        self.e_count.get(x.index()).copied().unwrap_or(0)
    }

    /// `Ẽ_x^n` over completed excursions.
    pub fn excursions_from_below(&self, x: VertexId) -> u32 {
        self.e_tilde_count.get(x.index()).copied().unwrap_or(0)
    }

    /// Vertices with `L_x ≥ 1`, in order of first arrival (root included if
    /// it was ever arrived at).
    pub fn visited(&self) -> &[VertexId] {
        &self.visited
    }

    fn arrive(&mut self, x: VertexId) {
        let i = x.index();
        if self.site[i] == 0 {
            self.visited.push(x);
        }
        self.site[i] += 1;
    }

    fn touch(&mut self, x: VertexId) {
        let i = x.index();
        if self.exc_edge[i] == 0 && self.exc_child[i] == 0 {
            self.touched.push(x);
        }
    }

    fn cross_down(&mut self, parent: Option<VertexId>, child: VertexId) {
        self.touch(child);
        self.edge[child.index()] += 1;
        self.exc_edge[child.index()] += 1;
        if let Some(p) = parent {
            self.touch(p);
            self.child_edge[p.index()] += 1;
            self.exc_child[p.index()] += 1;
        }
    }

    fn close_excursion(&mut self) {
        for x in self.touched.drain(..) {
            let i = x.index();
            if self.exc_edge[i] > 0 {
                self.e_count[i] += 1;
            }
            if self.exc_child[i] > self.exc_edge[i] {
                self.e_tilde_count[i] += 1;
            }
            self.exc_edge[i] = 0;
            self.exc_child[i] = 0;
        }
    }

    /// Vertices `x ≠ e` with `L_x ≠ N_x + Σ_{y* = x} N_y`. Empty at every
    /// excursion boundary.
    pub fn identity_violations(&self) -> Vec<VertexId> {
        self.visited
            .iter()
            .copied()
            .filter(|x| *x != VertexId::ROOT)
            .filter(|x| self.site(*x) != self.edge(*x) + self.child_edge(*x))
            .collect()
    }
}

/// A walker owning its environment, ledger and random stream.
pub struct Walker {
    store: EnvironmentStore,
    ledger: LocalTimeLedger,
    state: WalkState,
    rng: StreamRng,
    step_budget: u64,
    trace: Option<Box<dyn Write + Send>>,
}

impl Walker {
    /// Starts at the root at time 0.
    pub fn new(mut store: EnvironmentStore, rng: StreamRng) -> Self {
        if !store.get(VertexId::ROOT).is_generated() {
            store.expand_children(VertexId::ROOT);
        }
        let mut ledger = LocalTimeLedger::default();
        ledger.grow(store.len());
        Walker {
            store,
            ledger,
            state: WalkState::start(),
            rng,
            step_budget: DEFAULT_STEP_BUDGET,
            trace: None,
        }
    }

    pub fn with_step_budget(mut self, budget: u64) -> Self {
        self.step_budget = budget;
        self
    }

    /// Writes `t vertex_id depth V` after every step; `e*` is written as
    /// `t * -1 0`.
    pub fn with_trace(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.trace = Some(sink);
        self
    }

    pub fn state(&self) -> &WalkState {
        &self.state
    }

    pub fn ledger(&self) -> &LocalTimeLedger {
        &self.ledger
    }

    pub fn store(&self) -> &EnvironmentStore {
        &self.store
    }

    pub fn into_parts(self) -> (EnvironmentStore, LocalTimeLedger, WalkState) {
        (self.store, self.ledger, self.state)
    }

    /// One step of the quenched chain.
    pub fn step(&mut self) {
        let next = match self.state.position {
            Position::EStar => {
                self.ledger.cross_down(None, VertexId::ROOT);
                Position::At(VertexId::ROOT)
            }
            Position::At(x) => {
                let rec = self.store.get(x);
                let children = self
                    .store
                    .children(x)
                    .expect("vertices are expanded on arrival");
                let mut r = self.rng.random::<f64>() * rec.out_total;
                let mut target = None;
                if r >= 1.0 {
                    r -= 1.0;
                    for c in children.iter() {
                        let w = self.store.get(c).weight;
                        if r < w {
                            target = Some(c);
                            break;
                        }
                        r -= w;
                    }
                    // rounding in the last subtraction
                    if target.is_none() && !children.is_empty() {
                        target = children.get(children.len() - 1);
                    }
                }
                match target {
                    Some(c) => {
                        self.ledger.cross_down(Some(x), c);
                        Position::At(c)
                    }
                    None => match rec.parent {
                        Some(p) => Position::At(p),
                        None => Position::EStar,
                    },
                }
            }
        };
        self.state.steps += 1;
        self.state.position = next;
        match next {
            Position::EStar => {
                self.state.excursions += 1;
                self.ledger.close_excursion();
            }
            Position::At(x) => {
                if !self.store.get(x).is_generated() {
                    self.store.expand_children(x);
                    self.ledger.grow(self.store.len());
                }
                self.ledger.arrive(x);
                let rec = self.store.get(x);
                self.state.max_depth_seen = self.state.max_depth_seen.max(rec.depth);
                self.state.min_potential_seen = self.state.min_potential_seen.min(rec.v);
            }
        }
        if let Some(sink) = self.trace.as_mut() {
            let t = self.state.steps;
            let _ = match next {
                Position::EStar => writeln!(sink, "{t} * -1 0"),
                Position::At(x) => {
                    let rec = self.store.get(x);
                    writeln!(sink, "{t} {} {} {}", x, rec.depth, rec.v)
                }
            };
        }
    }

    /// Runs until the total step count equals `n`.
    pub fn run_until_steps(&mut self, n: u64) -> Result<()> {
        if n > self.step_budget {
            return Err(Error::StepBudgetExceeded(self.step_budget));
        }
        while self.state.steps < n {
            self.step();
        }
        Ok(())
    }

    /// Runs until `n` excursions have been completed (the walker is then at
    /// `e*`).
    pub fn run_until_excursions(&mut self, n: u64) -> Result<()> {
        while self.state.excursions < n {
            if self.state.steps >= self.step_budget {
                return Err(Error::StepBudgetExceeded(self.step_budget));
            }
            self.step();
        }
        Ok(())
    }
}

/// Walks `n` steps from the root.
pub fn run_until_steps(
    store: EnvironmentStore,
    rng: StreamRng,
    n: u64,
) -> Result<(WalkState, LocalTimeLedger, EnvironmentStore)> {
    let mut w = Walker::new(store, rng);
    w.run_until_steps(n)?;
    let (store, ledger, state) = w.into_parts();
    Ok((state, ledger, store))
}

/// Walks until `T^n`, the `n`-th arrival at `e*`.
pub fn run_until_excursions(
    store: EnvironmentStore,
    rng: StreamRng,
    n: u64,
    step_budget: u64,
) -> Result<(WalkState, LocalTimeLedger, EnvironmentStore)> {
    if n == 0 {
        return Err(Error::InvalidParams("need at least one excursion".into()));
    }
    let mut w = Walker::new(store, rng).with_step_budget(step_budget);
    w.run_until_excursions(n)?;
    let (store, ledger, state) = w.into_parts();
    Ok((state, ledger, store))
}

/// Fraction of `samples` excursions that visit `target`.
pub fn empirical_hit_before_return(
    store: &EnvironmentStore,
    target: VertexId,
    samples: u64,
    rng: StreamRng,
    seed: u64,
) -> Result<Estimate> {
    if target.index() >= store.len() {
        return Err(Error::InvalidParams(format!("vertex {target} not in store")));
    }
    let mut w = Walker::new(store.clone(), rng);
    w.run_until_excursions(samples)?;
    let hits = w.ledger().excursions_crossing(target) as u64;
    let p = hits as f64 / samples as f64;
    // Bernoulli moments without storing the indicators
    let acc = Accumulator {
        count: samples,
        mean: p,
        m2: hits as f64 * (1.0 - p) * (1.0 - p) + (samples - hits) as f64 * p * p,
    };
    Ok(Estimate::from_accumulator(&acc, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_fixed_environment, EnvironmentParams, FixedVertex};
    use crate::rng::{stream, Purpose};

    fn single_edge() -> EnvironmentStore {
        build_fixed_environment(&[FixedVertex { id: 1, parent: 0, v: 0.0 }])
            .unwrap()
            .0
    }

    #[test]
    fn e_star_goes_to_root() {
        let mut w = Walker::new(single_edge(), stream(1, Purpose::Walk, 0));
        while w.state().position != Position::EStar {
            w.step();
        }
        w.step();
        assert_eq!(w.state().position, Position::At(VertexId::ROOT));
    }

    #[test]
    fn leaf_returns_to_parent() {
        let mut w = Walker::new(single_edge(), stream(2, Purpose::Walk, 0));
        for _ in 0..200 {
            let before = w.state().position;
            w.step();
            if before == Position::At(VertexId(1)) {
                assert_eq!(w.state().position, Position::At(VertexId::ROOT));
            }
        }
    }

    #[test]
    fn two_step_paths_are_equally_likely() {
        let mut via_child = 0u32;
        let trials = 20_000u32;
        for i in 0..u64::from(trials) {
            let (state, ledger, _) =
                run_until_steps(single_edge(), stream(3, Purpose::Walk, i), 2).unwrap();
            assert_eq!(state.position, Position::At(VertexId::ROOT));
            if ledger.site(VertexId(1)) == 1 {
                via_child += 1;
            } else {
                assert_eq!(state.excursions, 1);
            }
        }
        let p = f64::from(via_child) / f64::from(trials);
        assert!((p - 0.5).abs() < 4.0 * (0.25 / f64::from(trials)).sqrt());
    }

    #[test]
    fn zero_steps_is_empty() {
        let (state, ledger, _) = run_until_steps(single_edge(), stream(4, Purpose::Walk, 0), 0).unwrap();
        assert_eq!(state.steps, 0);
        assert!(ledger.visited().is_empty());
    }

    #[test]
    fn single_excursion_on_single_edge() {
        let (state, ledger, _) =
            run_until_excursions(single_edge(), stream(5, Purpose::Walk, 0), 1, 1000).unwrap();
        assert!(state.steps >= 1);
        assert_eq!(state.position, Position::EStar);
        assert!(ledger.identity_violations().is_empty());
        assert_eq!(ledger.site(VertexId(1)), ledger.edge(VertexId(1)));
    }

    #[test]
    fn ledger_identity_and_excursion_counts_on_random_tree() {
        let store = EnvironmentStore::lazy(EnvironmentParams::default_boundary(), 17);
        let n = 2000;
        let (state, ledger, store) =
            run_until_excursions(store, stream(6, Purpose::Walk, 0), n, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(state.excursions, n);
        assert!(ledger.identity_violations().is_empty());
        for &x in ledger.visited() {
            let e = u64::from(ledger.excursions_crossing(x));
            assert!(e <= n.min(ledger.edge(x)));
            assert!(ledger.excursions_from_below(x) <= ledger.excursions_crossing(x));
        }
        // lazy generation: root plus the children of every visited vertex
        let mut expanded: Vec<VertexId> = ledger.visited().to_vec();
        if !expanded.contains(&VertexId::ROOT) {
            expanded.push(VertexId::ROOT);
        }
        let expected: usize = 1 + expanded.iter().map(|x| store.get(*x).child_count()).sum::<usize>();
        assert_eq!(store.len(), expected);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let params = EnvironmentParams::default_boundary();
        let run = || {
            let store = EnvironmentStore::lazy(params.clone(), 23);
            let (state, ledger, _) = run_until_steps(store, stream(7, Purpose::Walk, 1), 50_000).unwrap();
            (state.excursions, state.max_depth_seen, ledger.visited().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn step_budget_is_enforced() {
        let store = EnvironmentStore::lazy(EnvironmentParams::default_boundary(), 1);
        let res = run_until_excursions(store, stream(8, Purpose::Walk, 0), 1_000_000, 100);
        assert!(matches!(res, Err(Error::StepBudgetExceeded(100))));
    }

    #[test]
    fn hit_before_return_single_edge() {
        let est = empirical_hit_before_return(&single_edge(), VertexId(1), 100_000, stream(9, Purpose::Walk, 0), 9)
            .unwrap();
        assert!(est.within(0.5, 4.0, 0.0), "{est:?}");
    }

    #[test]
    fn trace_lines() {
        use std::sync::{Arc, Mutex};
        #[derive(Clone, Default)]
        struct Sink(Arc<Mutex<Vec<u8>>>);
        impl Write for Sink {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let sink = Sink::default();
        let mut w = Walker::new(single_edge(), stream(10, Purpose::Walk, 0)).with_trace(Box::new(sink.clone()));
        w.run_until_steps(5).unwrap();
        let text = String::from_utf8(sink.0.lock().unwrap().clone()).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().all(|l| l.split_whitespace().count() == 4));
    }
}
