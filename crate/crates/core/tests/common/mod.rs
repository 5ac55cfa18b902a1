#![allow(dead_code)]

use std::sync::Arc;

use gridlattice::{OpfEngine, State, SystemModel};
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Radial network with finite ratings: every outage only removes
    /// options, so shedding is monotone.
    Tree,
    /// Meshed network whose ratings never bind.
    Mesh,
    /// Meshed network with finite ratings; may be non-monotone.
    MeshRated,
}

/// Random toy system with at most `max_n` components whose base case is
/// normal. The same seed always yields the same system.
pub fn toy_system(seed: u64, max_n: usize, topology: Topology) -> SystemModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Some(m) = try_toy(&mut rng, max_n, topology) {
            return m;
        }
    }
}

fn try_toy(rng: &mut ChaCha8Rng, max_n: usize, topology: Topology) -> Option<SystemModel> {
    let nb = rng.random_range(2..=5usize);
    let mut lines = Vec::new();
    for b in 1..nb {
        lines.push((rng.random_range(0..b), b));
    }
    if topology != Topology::Tree {
        for _ in 0..rng.random_range(1..=2) {
            let a = rng.random_range(0..nb);
            let b = rng.random_range(0..nb);
            if a != b {
                lines.push((a.min(b), a.max(b)));
            }
        }
    }
    let budget = max_n.checked_sub(lines.len())?;
    if budget == 0 {
        return None;
    }
    let ng = rng.random_range(1..=budget.min(4));

    let loads: Vec<f64> = (0..nb).map(|_| rng.random_range(0..=40) as f64).collect();
    let total_load: f64 = loads.iter().sum();
    if total_load == 0.0 {
        return None;
    }
    let mut gens = Vec::new();
    for _ in 0..ng {
        gens.push((rng.random_range(0..nb), rng.random_range(5..=60) as f64));
    }
    let cap: f64 = gens.iter().map(|g| g.1).sum();
    if cap < total_load {
        return None;
    }
    let q = |rng: &mut ChaCha8Rng| (rng.random_range(5..=300) as f64) / 1000.0;

    let text = json!({
        "name": "toy",
        "base_mva": 100,
        "buses": (0..nb).map(|b| json!({"id": b + 1, "load_mw": loads[b]})).collect::<Vec<_>>(),
        "generators": gens.iter().map(|&(b, c)| json!({"bus": b + 1, "capacity_mw": c, "q": q(rng)})).collect::<Vec<_>>(),
        "lines": lines.iter().map(|&(a, b)| {
            let rating = match topology {
                Topology::Mesh => 10_000.0,
                _ => rng.random_range(10..=80) as f64,
            };
            json!({"from": a + 1, "to": b + 1,
                   "reactance_pu": rng.random_range(5..=50) as f64 / 100.0,
                   "rating_mw": rating, "q": q(rng)})
        }).collect::<Vec<_>>(),
    })
    .to_string();
    let model = SystemModel::from_json_str(&text).ok()?;
    let engine = OpfEngine::new(Arc::new(model.clone()));
    (engine.shed(&State::empty(model.n())).ok()? == 0.0).then_some(model)
}

pub fn engine(model: &SystemModel) -> OpfEngine {
    OpfEngine::new(Arc::new(model.clone()))
}

/// Every state with its probability and shed, by exhaustive enumeration.
pub fn enumerate_all(engine: &OpfEngine) -> Vec<(State, f64, f64)> {
    let model = engine.model();
    let n = model.n();
    assert!(n <= 20);
    (0..1u64 << n)
        .map(|bits| {
            let s = State::from_bits(n, bits);
            let p = model.state_probability(&s).unwrap();
            (s, p, engine.shed(&s).unwrap())
        })
        .collect()
}

/// Analytic LOLP and EENS by exhaustive enumeration.
pub fn exact_indices(engine: &OpfEngine) -> (f64, f64) {
    let mut lolp = 0.0;
    let mut eens = 0.0;
    for (_, p, c) in enumerate_all(engine) {
        if c > gridlattice::SHED_EPSILON_MW {
            lolp += p;
            eens += p * c;
        }
    }
    (lolp, eens)
}

/// Minimum load shedding of `s` from an independent DC flow formulation:
/// free angles, explicit flow variables, one balance row per bus.
pub fn lp_shed(model: &SystemModel, s: &State) -> f64 {
    let nb = model.buses.len();
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let theta: Vec<_> = (0..nb)
        .map(|_| p.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let shed: Vec<_> = model
        .buses
        .iter()
        .map(|b| p.add_var(1.0, (0.0, b.load)))
        .collect();
    let mut balance: Vec<Vec<(microlp::Variable, f64)>> = vec![Vec::new(); nb];
    for g in &model.generators {
        if s.is_failed(g.component_id) {
            continue;
        }
        let v = p.add_var(0.0, (g.p_min, g.capacity));
        balance[g.bus].push((v, 1.0));
    }
    let base = model.base_mva;
    for line in &model.lines {
        if s.is_failed(line.component_id) {
            continue;
        }
        let f = p.add_var(0.0, (-line.rating, line.rating));
        let k = base / line.reactance;
        // f = k (θ_from - θ_to)
        p.add_constraint(
            [
                (f, 1.0),
                (theta[line.from_bus], -k),
                (theta[line.to_bus], k),
            ],
            ComparisonOp::Eq,
            0.0,
        );
        balance[line.from_bus].push((f, -1.0));
        balance[line.to_bus].push((f, 1.0));
    }
    for (b, mut terms) in balance.into_iter().enumerate() {
        terms.push((shed[b], 1.0));
        p.add_constraint(terms, ComparisonOp::Eq, model.buses[b].load);
    }
    p.solve().unwrap().into_solution().unwrap().objective()
}

/// A state sampled from the component outage distribution plus a few
/// extra failures, as a comparable pair `s1 ≤ s2`.
pub fn random_pair(model: &SystemModel, rng: &mut impl Rng) -> (State, State) {
    let n = model.n();
    let s1 = gridlattice::Lattice::full(n).sample_state(model, rng);
    let mut s2 = s1;
    for _ in 0..rng.random_range(1..=3) {
        s2.set_failed(rng.random_range(1..=n), true);
    }
    (s1, s2)
}
