//! Dichotomy partition of the state space.
//!
//! The engine keeps a set of failed lattices and a max-heap of mixed
//! lattices ordered by importance `π(L) = P(L) · max(q_t, q_g)`. Each
//! iteration pops the most important mixed lattice, splits it on one
//! component, and evaluates only the minimum of the upper half: a failed
//! minimum makes the whole upper half failed, otherwise it goes back to
//! the mixed set. The lower half keeps the parent's (normal) minimum and
//! returns to the mixed set without a new evaluation.
//!
//! Sub-lattice weakness: fixed-failed lines are removed from the graph and
//! fixed-operational lines are contracted (their endpoints can no longer
//! be separated). Fixed-failed generators lose their capacity, while
//! fixed-operational generators keep it but can no longer fail.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::time::Instant;

use log::debug;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{classify, Lattice, LatticeClass};
use crate::opf::{OpfEngine, SHED_EPSILON_MW};
use crate::system::SystemModel;

/// Default number of recent failed lattices averaged by the `D_n` criterion.
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImportanceIndex {
    pub pi: f64,
    pub q_t: f64,
    pub q_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionWeakness {
    pub q_t: f64,
    pub candidate_line: Option<usize>,
    /// Lowest bus index of the weakest (contracted) node, if any.
    pub weakest_bus: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationWeakness {
    pub q_g: f64,
    pub candidate_gen: Option<usize>,
    /// Size of the smallest set of largest free units whose loss exhausts
    /// the adequacy margin.
    pub t_star: usize,
    pub adequacy: f64,
}

/// Probability that the weakest node of the residual transmission graph is
/// cut off, and the most likely line to do it.
pub fn transmission_weakness(model: &SystemModel, l: &Lattice) -> TransmissionWeakness {
    let nb = model.buses.len();
    let ng = model.generators.len();
    let mut parent: Vec<usize> = (0..nb).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (j, line) in model.lines.iter().enumerate() {
        if l.is_fixed_operational(ng + j + 1) {
            let (a, b) = (
                find(&mut parent, line.from_bus),
                find(&mut parent, line.to_bus),
            );
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let root: Vec<usize> = (0..nb).map(|b| find(&mut parent, b)).collect();

    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for (j, line) in model.lines.iter().enumerate() {
        if !l.is_free(ng + j + 1) {
            continue;
        }
        let (a, b) = (root[line.from_bus], root[line.to_bus]);
        if a != b {
            neighbours[a].push(b);
            neighbours[b].push(a);
        }
    }
    // fewest distinct neighbours, then fewest lines, then lowest bus
    let mut weakest: Option<(usize, usize, usize)> = None;
    for (node, ns) in neighbours.iter_mut().enumerate() {
        if root[node] != node || ns.is_empty() {
            continue;
        }
        let lines = ns.len();
        ns.sort_unstable();
        ns.dedup();
        let key = (ns.len(), lines, node);
        if weakest.is_none_or(|w| key < w) {
            weakest = Some(key);
        }
    }
    let Some((_, _, v)) = weakest else {
        return TransmissionWeakness {
            q_t: 0.0,
            candidate_line: None,
            weakest_bus: None,
        };
    };

    let mut q_t = 1.0;
    let mut best: Option<(f64, usize)> = None;
    for (j, line) in model.lines.iter().enumerate() {
        let id = ng + j + 1;
        if !l.is_free(id) {
            continue;
        }
        let (a, b) = (root[line.from_bus], root[line.to_bus]);
        if a != b && (a == v || b == v) {
            let q = model.q(id);
            q_t *= q;
            if best.is_none_or(|(bq, _)| q > bq) {
                best = Some((q, id));
            }
        }
    }
    TransmissionWeakness {
        q_t,
        candidate_line: best.map(|(_, id)| id),
        weakest_bus: Some(v),
    }
}

/// Probability that the largest free units fail enough capacity to exhaust
/// the adequacy margin, and the largest free unit.
pub fn generation_weakness(model: &SystemModel, l: &Lattice) -> GenerationWeakness {
    let mut available = 0.0;
    let mut free: Vec<(f64, usize)> = Vec::new();
    for g in &model.generators {
        let id = g.component_id;
        if l.is_fixed_failed(id) {
            continue;
        }
        available += g.capacity;
        if l.is_free(id) {
            free.push((g.capacity, id));
        }
    }
    let adequacy = available - model.total_load();
    free.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let candidate_gen = free.first().map(|&(_, id)| id);

    if adequacy < 0.0 {
        // degenerate guard: the lattice minimum is already short of capacity
        return GenerationWeakness {
            q_g: if candidate_gen.is_some() { 1.0 } else { 0.0 },
            candidate_gen,
            t_star: 0,
            adequacy,
        };
    }
    let mut lost = 0.0;
    let mut q_g = 1.0;
    for (t, &(cap, id)) in free.iter().enumerate() {
        lost += cap;
        q_g *= model.q(id);
        if lost - adequacy >= 0.0 {
            return GenerationWeakness {
                q_g,
                candidate_gen,
                t_star: t + 1,
                adequacy,
            };
        }
    }
    GenerationWeakness {
        q_g: 0.0,
        candidate_gen: None,
        t_star: 0,
        adequacy,
    }
}

pub fn importance(model: &SystemModel, l: &Lattice) -> ImportanceIndex {
    let t = transmission_weakness(model, l);
    let g = generation_weakness(model, l);
    importance_from(l.probability(model), t.q_t, g.q_g)
}

fn importance_from(p: f64, q_t: f64, q_g: f64) -> ImportanceIndex {
    ImportanceIndex {
        pi: p * q_t.max(q_g),
        q_t,
        q_g,
    }
}

/// Line if the transmission side is strictly weaker, otherwise the
/// generator; falls back to whichever side has a candidate.
pub fn select_component(
    q_t: f64,
    candidate_line: Option<usize>,
    q_g: f64,
    candidate_gen: Option<usize>,
) -> Option<usize> {
    if q_t > q_g {
        candidate_line.or(candidate_gen)
    } else {
        candidate_gen.or(candidate_line)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StopCriteria {
    pub max_opf: Option<u64>,
    pub mixed_mass_below: Option<f64>,
    pub avg_failed_prob_below: Option<f64>,
    pub window: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            max_opf: None,
            mixed_mass_below: None,
            avg_failed_prob_below: None,
            window: DEFAULT_WINDOW,
        }
    }
}

impl StopCriteria {
    /// `D_n`: stop once the last ten failed lattices average below `10^-n`.
    pub fn dn(n: i32) -> Self {
        StopCriteria {
            avg_failed_prob_below: Some(10f64.powi(-n)),
            ..Default::default()
        }
    }

    /// Runs until no mixed lattice is left.
    pub fn exhaustive() -> Self {
        StopCriteria {
            max_opf: Some(u64::MAX),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_opf.is_none()
            && self.mixed_mass_below.is_none()
            && self.avg_failed_prob_below.is_none()
        {
            return Err(Error::Config(
                "at least one stopping criterion is required".into(),
            ));
        }
        if self.window == 0 {
            return Err(Error::Config("averaging window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Exhausted,
    MaxOpf,
    MixedMass,
    AverageFailedProbability,
    /// The base state already sheds load.
    BaseStateFailed,
}

#[derive(Debug, Clone, Default)]
pub struct DichotomyOptions {
    /// Also evaluate the maximum of each new mixed lattice and retire
    /// normal ones immediately.
    pub classify_max: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FailedLattice {
    pub lattice: Lattice,
    /// `C(0̂)` of the lattice in MW.
    pub shed_mw: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub iteration: u64,
    pub opf_count: u64,
    pub lolp_lower: f64,
    pub mixed_mass: f64,
    pub failed_count: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MixedLattice {
    pub lattice: Lattice,
    pub probability: f64,
    pub importance: ImportanceIndex,
    /// Component chosen for the next split.
    pub component: usize,
    seq: u64,
}

impl PartialEq for MixedLattice {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for MixedLattice {}

impl PartialOrd for MixedLattice {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MixedLattice {
    // larger π first, then first in
    fn cmp(&self, other: &Self) -> Ordering {
        self.importance
            .pi
            .total_cmp(&other.importance.pi)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Failed, mixed and retired-normal lattices plus the LOLP trace.
#[derive(Debug, Clone)]
pub struct PartitionLedger {
    pub failed: Vec<FailedLattice>,
    mixed: BinaryHeap<MixedLattice>,
    pub normal: Vec<Lattice>,
    pub opf_count: u64,
    pub iterations: u64,
    pub lolp_lower: f64,
    pub mixed_mass: f64,
    pub normal_mass: f64,
    pub trace: Vec<TraceRow>,
    pub stop_reason: Option<StopReason>,
}

impl PartitionLedger {
    /// Mixed lattices in priority order.
    pub fn mixed(&self) -> Vec<MixedLattice> {
        let mut v = self.mixed.clone().into_sorted_vec();
        v.reverse();
        v
    }

    pub fn mixed_len(&self) -> usize {
        self.mixed.len()
    }

    /// Recomputes the three probability masses from scratch.
    pub fn recomputed_masses(&self, model: &SystemModel) -> (f64, f64, f64) {
        let f = self
            .failed
            .iter()
            .map(|f| f.lattice.probability(model))
            .sum();
        let m = self
            .mixed
            .iter()
            .map(|m| m.lattice.probability(model))
            .sum();
        let n = self.normal.iter().map(|l| l.probability(model)).sum();
        (f, m, n)
    }
}

/// Step-wise dichotomy engine.
pub struct Dichotomy<'e> {
    engine: &'e OpfEngine,
    options: DichotomyOptions,
    ledger: PartitionLedger,
    recent: VecDeque<f64>,
    recent_sum_window: usize,
    seq: u64,
    started: Instant,
}

impl<'e> Dichotomy<'e> {
    /// Evaluates the all-operational state and seeds the mixed set with the
    /// whole space (or the failed set, if the base state sheds).
    pub fn new(engine: &'e OpfEngine, options: DichotomyOptions) -> Result<Self> {
        let model = engine.model();
        let full = Lattice::full(model.n());
        let mut d = Dichotomy {
            engine,
            options,
            ledger: PartitionLedger {
                failed: Vec::new(),
                mixed: BinaryHeap::new(),
                normal: Vec::new(),
                opf_count: 0,
                iterations: 0,
                lolp_lower: 0.0,
                mixed_mass: 0.0,
                normal_mass: 0.0,
                trace: Vec::new(),
                stop_reason: None,
            },
            recent: VecDeque::new(),
            recent_sum_window: DEFAULT_WINDOW,
            seq: 0,
            started: Instant::now(),
        };
        d.ledger.opf_count += 1;
        let base = engine.shed(&full.min)?;
        if base > SHED_EPSILON_MW {
            d.push_failed(full, base);
            d.ledger.stop_reason = Some(StopReason::BaseStateFailed);
        } else {
            d.push_unresolved(full)?;
        }
        d.record();
        Ok(d)
    }

    pub fn ledger(&self) -> &PartitionLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> PartitionLedger {
        self.ledger
    }

    fn push_failed(&mut self, lattice: Lattice, shed_mw: f64) {
        let p = lattice.probability(self.engine.model());
        self.ledger.failed.push(FailedLattice {
            lattice,
            shed_mw,
            probability: p,
        });
        self.ledger.lolp_lower += p;
        self.recent.push_back(p);
        if self.recent.len() > self.recent_sum_window {
            self.recent.pop_front();
        }
    }

    fn retire_normal(&mut self, lattice: Lattice) {
        self.ledger.normal_mass += lattice.probability(self.engine.model());
        self.ledger.normal.push(lattice);
    }

    /// Handles a lattice whose minimum is known to be normal.
    fn push_unresolved(&mut self, lattice: Lattice) -> Result<()> {
        if lattice.dimension() == 0 {
            self.retire_normal(lattice);
            return Ok(());
        }
        if self.options.classify_max {
            self.ledger.opf_count += 1;
            let phi_max = self.engine.structure(&lattice.max)?.is_failed();
            if classify(false, phi_max)? == LatticeClass::Normal {
                self.retire_normal(lattice);
                return Ok(());
            }
        }
        let model = self.engine.model();
        let t = transmission_weakness(model, &lattice);
        let g = generation_weakness(model, &lattice);
        let p = lattice.probability(model);
        let importance = importance_from(p, t.q_t, g.q_g);
        let component = match select_component(t.q_t, t.candidate_line, g.q_g, g.candidate_gen) {
            Some(c) => c,
            None => {
                let c = lattice.free_ids().next().expect("dimension >= 1");
                debug!("no weakness candidate in {lattice}; splitting on component {c}");
                c
            }
        };
        self.ledger.mixed_mass += p;
        self.ledger.mixed.push(MixedLattice {
            lattice,
            probability: p,
            importance,
            component,
            seq: self.seq,
        });
        self.seq += 1;
        Ok(())
    }

    fn record(&mut self) {
        let l = &self.ledger;
        let row = TraceRow {
            iteration: l.iterations,
            opf_count: l.opf_count,
            lolp_lower: l.lolp_lower,
            mixed_mass: l.mixed_mass,
            failed_count: l.failed.len(),
            elapsed_ms: self.started.elapsed().as_secs_f64() * 1e3,
        };
        self.ledger.trace.push(row);
    }

    /// Which criterion, if any, says to stop now.
    pub fn should_stop(&self, stop: &StopCriteria) -> Option<StopReason> {
        let l = &self.ledger;
        if let Some(r) = l.stop_reason {
            return Some(r);
        }
        if l.mixed.is_empty() {
            return Some(StopReason::Exhausted);
        }
        if stop.max_opf.is_some_and(|m| l.opf_count >= m) {
            return Some(StopReason::MaxOpf);
        }
        if stop.mixed_mass_below.is_some_and(|x| l.mixed_mass < x) {
            return Some(StopReason::MixedMass);
        }
        if let Some(x) = stop.avg_failed_prob_below {
            let w = stop.window;
            if l.failed.len() >= w {
                let avg = l.failed[l.failed.len() - w..]
                    .iter()
                    .map(|f| f.probability)
                    .sum::<f64>()
                    / w as f64;
                if avg < x {
                    return Some(StopReason::AverageFailedProbability);
                }
            }
        }
        None
    }

    /// One split. Returns `false` if no mixed lattice is left.
    pub fn step(&mut self) -> Result<bool> {
        let Some(top) = self.ledger.mixed.pop() else {
            return Ok(false);
        };
        self.ledger.mixed_mass -= top.probability;
        self.ledger.iterations += 1;
        let (lower, upper) = top.lattice.split(top.component)?;

        self.ledger.opf_count += 1;
        let shed = self.engine.shed(&upper.min)?;
        if shed > SHED_EPSILON_MW {
            self.push_failed(upper, shed);
        } else {
            self.push_unresolved(upper)?;
        }
        self.push_unresolved(lower)?;
        if self.ledger.mixed.is_empty() {
            // guard against drift once nothing is left
            self.ledger.mixed_mass = 0.0;
        }
        self.record();
        Ok(true)
    }

    pub fn run(mut self, stop: &StopCriteria) -> Result<PartitionLedger> {
        stop.validate()?;
        self.recent_sum_window = stop.window;
        loop {
            if let Some(reason) = self.should_stop(stop) {
                self.ledger.stop_reason = Some(reason);
                break;
            }
            self.step()?;
        }
        Ok(self.ledger)
    }
}

/// Partitions the state space until a stopping criterion fires.
pub fn run_dichotomy(
    engine: &OpfEngine,
    stop: &StopCriteria,
    options: &DichotomyOptions,
) -> Result<PartitionLedger> {
    stop.validate()?;
    Dichotomy::new(engine, options.clone())?.run(stop)
}
