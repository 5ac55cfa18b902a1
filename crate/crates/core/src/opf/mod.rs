//! Optimal load shedding by DC power flow.
//!
//! For a state `s`, failed generators produce nothing and failed lines are
//! removed. Each connected island is solved on its own with a B-theta DC
//! model: minimise total curtailment subject to nodal balance, generator
//! limits, line ratings and `0 ≤ C_i ≤ P_Di`. An island without in-service
//! generation sheds its whole load.
//!
//! Before building an LP the island is screened with a proportional
//! dispatch: if that point already meets every line rating it attains the
//! lower bound `max(0, load - capacity)` and is therefore optimal.

mod simplex;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::State;
use crate::system::SystemModel;

pub use simplex::{DenseLp, LpError, LpSolution};

/// Curtailment above this many MW makes a state failed.
pub const SHED_EPSILON_MW: f64 = 1e-6;

/// Line flows within this many MW of their rating are accepted.
pub const FLOW_TOLERANCE_MW: f64 = 1e-6;

/// Penalty on the must-run relief variables used when `p_min > 0`.
const MUST_RUN_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OpfStatus {
    Optimal,
}

#[derive(Debug, Clone, Serialize)]
pub struct OpfResult {
    /// `C(s)`, total curtailment in MW.
    pub shed_total: f64,
    /// Curtailment per bus, indexed like [`SystemModel::buses`].
    pub shed_by_bus: Vec<f64>,
    /// `(component id, MW)` for each in-service generator.
    pub dispatch: Vec<(usize, f64)>,
    /// `(component id, MW)` for each in-service line, positive from -> to.
    pub line_flows: Vec<(usize, f64)>,
    /// Bus indices of each island, in ascending order.
    pub islands: Vec<Vec<usize>>,
    pub status: OpfStatus,
}

/// Binary structure function value `Φ(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StructureValue(pub u8);

impl StructureValue {
    pub fn from_shed(shed_mw: f64) -> Self {
        StructureValue(u8::from(shed_mw > SHED_EPSILON_MW))
    }

    pub fn is_failed(self) -> bool {
        self.0 == 1
    }
}

/// Cache key: everything the shedding LP depends on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct OpfKey {
    lines_out: [u64; 2],
    capacity_bits: Box<[u64]>,
}

#[derive(Debug, Default)]
pub struct OpfCounters {
    pub lookups: AtomicU64,
    pub screened: AtomicU64,
    pub lp_solves: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OpfStats {
    pub lookups: u64,
    pub cache_entries: u64,
    pub screened: u64,
    pub lp_solves: u64,
}

/// Shedding evaluator with a concurrent solution cache.
///
/// Results depend only on the model and the state, so the cache never
/// changes returned values and may be shared by any number of threads.
#[derive(Debug)]
pub struct OpfEngine {
    model: Arc<SystemModel>,
    /// Buses that host at least one generator.
    gen_buses: Vec<usize>,
    /// For each generator, its slot in `gen_buses`.
    gen_slot: Vec<usize>,
    has_p_min: bool,
    cache: DashMap<OpfKey, f64>,
    counters: OpfCounters,
}

impl OpfEngine {
    pub fn new(model: Arc<SystemModel>) -> Self {
        let mut gen_buses: Vec<usize> = model.generators.iter().map(|g| g.bus).collect();
        gen_buses.sort_unstable();
        gen_buses.dedup();
        let gen_slot = model
            .generators
            .iter()
            .map(|g| gen_buses.binary_search(&g.bus).unwrap())
            .collect();
        let has_p_min = model.generators.iter().any(|g| g.p_min > 0.0);
        OpfEngine {
            model,
            gen_buses,
            gen_slot,
            has_p_min,
            cache: DashMap::new(),
            counters: OpfCounters::default(),
        }
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn model_arc(&self) -> &Arc<SystemModel> {
        &self.model
    }

    pub fn stats(&self) -> OpfStats {
        OpfStats {
            lookups: self.counters.lookups.load(Ordering::Relaxed),
            cache_entries: self.cache.len() as u64,
            screened: self.counters.screened.load(Ordering::Relaxed),
            lp_solves: self.counters.lp_solves.load(Ordering::Relaxed),
        }
    }

    fn check_width(&self, s: &State) -> Result<()> {
        if s.width() != self.model.n() {
            return Err(Error::StateWidth {
                expected: self.model.n(),
                got: s.width(),
            });
        }
        Ok(())
    }

    fn key(&self, s: &State) -> OpfKey {
        let ng = self.model.generators.len();
        let slots = self.gen_buses.len();
        // must-run minimums change the problem even when capacity matches
        let width = if self.has_p_min { 2 * slots } else { slots };
        let mut caps = vec![0.0f64; width];
        for (i, g) in self.model.generators.iter().enumerate() {
            if !s.is_failed(i + 1) {
                caps[self.gen_slot[i]] += g.capacity;
                if self.has_p_min {
                    caps[slots + self.gen_slot[i]] += g.p_min;
                }
            }
        }
        let mut lines_out = [0u64; 2];
        for (j, _) in self.model.lines.iter().enumerate() {
            if s.is_failed(ng + j + 1) {
                lines_out[j / 64] |= 1 << (j % 64);
            }
        }
        OpfKey {
            lines_out,
            capacity_bits: caps.into_iter().map(f64::to_bits).collect(),
        }
    }

    /// `C(s)` in MW, served from the cache when possible.
    pub fn shed(&self, s: &State) -> Result<f64> {
        self.check_width(s)?;
        self.counters.lookups.fetch_add(1, Ordering::Relaxed);
        let key = self.key(s);
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let shed = self.compute(s)?.shed_total;
        self.cache.insert(key, shed);
        Ok(shed)
    }

    /// `Φ(s)`.
    pub fn structure(&self, s: &State) -> Result<StructureValue> {
        Ok(StructureValue::from_shed(self.shed(s)?))
    }

    /// Full optimal power flow result for `s`; bypasses the cache.
    pub fn solve(&self, s: &State) -> Result<OpfResult> {
        self.check_width(s)?;
        self.compute(s)
    }

    fn compute(&self, s: &State) -> Result<OpfResult> {
        let m = &*self.model;
        let ng = m.generators.len();
        let nb = m.buses.len();

        // islands over in-service lines
        let mut parent: Vec<usize> = (0..nb).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (j, l) in m.lines.iter().enumerate() {
            if !s.is_failed(ng + j + 1) {
                let (a, b) = (find(&mut parent, l.from_bus), find(&mut parent, l.to_bus));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut island_of = vec![usize::MAX; nb];
        let mut islands: Vec<Vec<usize>> = Vec::new();
        for b in 0..nb {
            let r = find(&mut parent, b);
            if island_of[r] == usize::MAX {
                island_of[r] = islands.len();
                islands.push(Vec::new());
            }
            island_of[b] = island_of[r];
            islands[island_of[b]].push(b);
        }

        let mut bus_cap = vec![0.0; nb];
        let mut bus_pmin = vec![0.0; nb];
        for (i, g) in m.generators.iter().enumerate() {
            if !s.is_failed(i + 1) {
                bus_cap[g.bus] += g.capacity;
                bus_pmin[g.bus] += g.p_min;
            }
        }
        let mut island_lines: Vec<Vec<usize>> = vec![Vec::new(); islands.len()];
        for (j, l) in m.lines.iter().enumerate() {
            if !s.is_failed(ng + j + 1) {
                island_lines[island_of[l.from_bus]].push(j);
            }
        }

        let mut bus_gen = vec![0.0; nb];
        let mut shed_by_bus = vec![0.0; nb];
        let mut theta = vec![0.0; nb];
        for (k, buses) in islands.iter().enumerate() {
            let sol = self.solve_island(s, buses, &island_lines[k], &bus_cap, &bus_pmin)?;
            for (idx, &b) in buses.iter().enumerate() {
                bus_gen[b] = sol.gen[idx];
                shed_by_bus[b] = sol.shed[idx];
                theta[b] = sol.theta[idx];
            }
        }

        let shed_total: f64 = shed_by_bus.iter().sum();
        let mut dispatch = Vec::new();
        for (i, g) in m.generators.iter().enumerate() {
            if s.is_failed(i + 1) {
                continue;
            }
            let b = g.bus;
            let above = bus_cap[b] - bus_pmin[b];
            let share = if above > 0.0 {
                g.p_min + (bus_gen[b] - bus_pmin[b]) * (g.capacity - g.p_min) / above
            } else {
                g.p_min
            };
            dispatch.push((g.component_id, share));
        }
        let line_flows = m
            .lines
            .iter()
            .enumerate()
            .filter(|(j, _)| !s.is_failed(ng + j + 1))
            .map(|(_, l)| {
                (
                    l.component_id,
                    (theta[l.from_bus] - theta[l.to_bus]) / l.reactance,
                )
            })
            .collect();

        Ok(OpfResult {
            shed_total,
            shed_by_bus,
            dispatch,
            line_flows,
            islands,
            status: OpfStatus::Optimal,
        })
    }

    fn solve_island(
        &self,
        s: &State,
        buses: &[usize],
        lines: &[usize],
        bus_cap: &[f64],
        bus_pmin: &[f64],
    ) -> Result<IslandSolution> {
        let m = &*self.model;
        let k = buses.len();
        let load: Vec<f64> = buses.iter().map(|&b| m.buses[b].load).collect();
        let cap: Vec<f64> = buses.iter().map(|&b| bus_cap[b]).collect();
        let pmin: Vec<f64> = buses.iter().map(|&b| bus_pmin[b]).collect();
        let total_load: f64 = load.iter().sum();
        let total_cap: f64 = cap.iter().sum();
        let total_pmin: f64 = pmin.iter().sum();
        let mut sol = IslandSolution {
            gen: vec![0.0; k],
            shed: vec![0.0; k],
            theta: vec![0.0; k],
        };

        if total_cap <= 0.0 {
            sol.shed = load;
            return Ok(sol);
        }
        if total_pmin == 0.0 {
            if total_load <= 0.0 {
                return Ok(sol);
            }
            // proportional screening point
            if total_cap >= total_load {
                for (g, &c) in sol.gen.iter_mut().zip(&cap) {
                    *g = c * (total_load / total_cap);
                }
            } else {
                let served = total_cap / total_load;
                for i in 0..k {
                    sol.gen[i] = cap[i];
                    sol.shed[i] = load[i] * (1.0 - served);
                }
            }
            if k == 1 {
                self.counters.screened.fetch_add(1, Ordering::Relaxed);
                return Ok(sol);
            }
            let inj: Vec<f64> = (0..k).map(|i| sol.gen[i] + sol.shed[i] - load[i]).collect();
            if let Some(theta) = dc_angles(m, buses, lines, &inj) {
                let ok = lines.iter().all(|&j| {
                    let l = &m.lines[j];
                    let fi = buses.binary_search(&l.from_bus).unwrap();
                    let ti = buses.binary_search(&l.to_bus).unwrap();
                    ((theta[fi] - theta[ti]) / l.reactance).abs() <= l.rating + FLOW_TOLERANCE_MW
                });
                if ok {
                    self.counters.screened.fetch_add(1, Ordering::Relaxed);
                    sol.theta = theta;
                    return Ok(sol);
                }
            }
        }

        self.counters.lp_solves.fetch_add(1, Ordering::Relaxed);
        self.island_lp(s, buses, lines, &load, &cap, &pmin)
    }

    fn island_lp(
        &self,
        s: &State,
        buses: &[usize],
        lines: &[usize],
        load: &[f64],
        cap: &[f64],
        pmin: &[f64],
    ) -> Result<IslandSolution> {
        let m = &*self.model;
        let k = buses.len();
        let mut lp = DenseLp::default();
        let mut start = Vec::new();

        // angle of the first bus is the reference
        let mut theta_var = vec![None; k];
        for slot in theta_var.iter_mut().skip(1) {
            *slot = Some(lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY));
            start.push(0.0);
        }
        let mut gen_var = vec![None; k];
        let mut shed_var = vec![None; k];
        let mut relief_var = vec![None; k];
        for i in 0..k {
            if cap[i] > 0.0 {
                gen_var[i] = Some(lp.add_var(0.0, pmin[i], cap[i]));
                start.push(pmin[i]);
            }
            if load[i] > 0.0 {
                shed_var[i] = Some(lp.add_var(1.0, 0.0, load[i]));
                start.push(load[i]);
            }
            if pmin[i] > 0.0 {
                relief_var[i] = Some(lp.add_var(MUST_RUN_PENALTY, 0.0, pmin[i]));
                start.push(pmin[i]);
            }
        }

        let mut balance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
        for i in 0..k {
            if let Some(v) = gen_var[i] {
                balance[i].push((v, 1.0));
            }
            if let Some(v) = shed_var[i] {
                balance[i].push((v, 1.0));
            }
            if let Some(v) = relief_var[i] {
                balance[i].push((v, -1.0));
            }
        }
        for &j in lines {
            let l = &m.lines[j];
            let fi = buses.binary_search(&l.from_bus).unwrap();
            let ti = buses.binary_search(&l.to_bus).unwrap();
            let b = 1.0 / l.reactance;
            let mut flow = Vec::with_capacity(2);
            if let Some(v) = theta_var[fi] {
                flow.push((v, b));
            }
            if let Some(v) = theta_var[ti] {
                flow.push((v, -b));
            }
            // flow leaves `fi` and enters `ti`
            for &(v, c) in &flow {
                balance[fi].push((v, -c));
                balance[ti].push((v, c));
            }
            lp.add_row(&flow, -l.rating, l.rating);
        }
        for i in 0..k {
            lp.add_row(&balance[i], load[i], load[i]);
        }

        let lp_err = |reason: String| Error::Lp {
            state: s.to_string(),
            reason,
        };
        let sol = lp.solve_from(&start).map_err(|e| lp_err(e.to_string()))?;

        let mut out = IslandSolution {
            gen: vec![0.0; k],
            shed: vec![0.0; k],
            theta: vec![0.0; k],
        };
        for i in 0..k {
            if let Some(v) = theta_var[i] {
                out.theta[i] = sol.x[v];
            }
            if let Some(v) = gen_var[i] {
                out.gen[i] = sol.x[v];
            }
            if let Some(v) = shed_var[i] {
                out.shed[i] = sol.x[v].clamp(0.0, load[i]);
            }
            if let Some(v) = relief_var[i] {
                if sol.x[v] > SHED_EPSILON_MW {
                    return Err(lp_err(format!(
                        "must-run generation exceeds what island of bus {} can absorb",
                        m.buses[buses[0]].id
                    )));
                }
            }
        }
        Ok(out)
    }
}

struct IslandSolution {
    gen: Vec<f64>,
    shed: Vec<f64>,
    theta: Vec<f64>,
}

/// Solves the reduced B-theta system of one island for the given nodal
/// injections, reference angle at the first bus. Returns `None` if the
/// susceptance matrix is singular.
fn dc_angles(m: &SystemModel, buses: &[usize], lines: &[usize], inj: &[f64]) -> Option<Vec<f64>> {
    let k = buses.len();
    let dim = k - 1;
    let mut a = vec![0.0; dim * dim];
    for &j in lines {
        let l = &m.lines[j];
        let fi = buses.binary_search(&l.from_bus).unwrap();
        let ti = buses.binary_search(&l.to_bus).unwrap();
        let b = 1.0 / l.reactance;
        if fi > 0 {
            a[(fi - 1) * dim + fi - 1] += b;
        }
        if ti > 0 {
            a[(ti - 1) * dim + ti - 1] += b;
        }
        if fi > 0 && ti > 0 {
            a[(fi - 1) * dim + ti - 1] -= b;
            a[(ti - 1) * dim + fi - 1] -= b;
        }
    }
    let mut rhs: Vec<f64> = inj[1..].to_vec();

    // Gaussian elimination with partial pivoting
    for c in 0..dim {
        let p = (c..dim).max_by(|&x, &y| a[x * dim + c].abs().total_cmp(&a[y * dim + c].abs()))?;
        if a[p * dim + c].abs() < 1e-12 {
            return None;
        }
        if p != c {
            for j in 0..dim {
                a.swap(p * dim + j, c * dim + j);
            }
            rhs.swap(p, c);
        }
        let piv = a[c * dim + c];
        for r in c + 1..dim {
            let f = a[r * dim + c] / piv;
            if f != 0.0 {
                for j in c..dim {
                    a[r * dim + j] -= f * a[c * dim + j];
                }
                rhs[r] -= f * rhs[c];
            }
        }
    }
    let mut x = vec![0.0; dim];
    for r in (0..dim).rev() {
        let mut v = rhs[r];
        for j in r + 1..dim {
            v -= a[r * dim + j] * x[j];
        }
        x[r] = v / a[r * dim + r];
    }
    let mut theta = Vec::with_capacity(k);
    theta.push(0.0);
    theta.extend(x);
    Some(theta)
}

/// One-off solve without a shared cache.
pub fn solve_opf(model: &SystemModel, s: &State) -> Result<OpfResult> {
    OpfEngine::new(Arc::new(model.clone())).solve(s)
}

/// One-off structure function evaluation without a shared cache.
pub fn structure(model: &SystemModel, s: &State) -> Result<StructureValue> {
    Ok(StructureValue::from_shed(solve_opf(model, s)?.shed_total))
}
