mod common;

use gridlattice::opf::solve_opf;
use gridlattice::system::BUILTIN_SYSTEMS;
use gridlattice::{State, StructureValue, SystemModel, SHED_EPSILON_MW};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum of `c·x` over `eq_rows x = eq_rhs`, `le_rows x ≤ le_rhs` by
/// visiting every basic solution.
fn vertex_min(c: &[f64], eq: &[(Vec<f64>, f64)], le: &[(Vec<f64>, f64)]) -> f64 {
    let n = c.len();
    let k = n - eq.len();
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..k).collect();
    loop {
        let rows: Vec<&(Vec<f64>, f64)> = eq.iter().chain(pick.iter().map(|&i| &le[i])).collect();
        if let Some(x) = solve_square(&rows) {
            let feasible = eq.iter().all(|(a, b)| (dot(a, &x) - b).abs() < 1e-7)
                && le.iter().all(|(a, b)| dot(a, &x) <= b + 1e-7);
            if feasible {
                best = best.min(dot(c, &x));
            }
        }
        // next k-subset of le
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < le.len() - (k - i) {
                pick[i] += 1;
                for j in i + 1..k {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve_square(rows: &[&(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut m: Vec<Vec<f64>> = rows
        .iter()
        .map(|(a, b)| {
            let mut r = a.clone();
            r.push(*b);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        let pivot = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != col {
                let f = row[col] / pivot[col];
                for (x, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

const THREE_BUS: &str = r#"{
  "base_mva": 100,
  "buses": [{"id": 1, "load_mw": 0}, {"id": 2, "load_mw": 0}, {"id": 3, "load_mw": 100}],
  "generators": [{"bus": 1, "capacity_mw": 80, "q": 0.05}, {"bus": 2, "capacity_mw": 60, "q": 0.05}],
  "lines": [{"from": 1, "to": 2, "reactance_pu": 0.1, "rating_mw": 50, "q": 0.01},
            {"from": 2, "to": 3, "reactance_pu": 0.2, "rating_mw": 30, "q": 0.01},
            {"from": 1, "to": 3, "reactance_pu": 0.1, "rating_mw": 50, "q": 0.01}]
}"#;

/// Shedding at bus 3 of the 3-bus system by vertex enumeration over
/// `(g1, g2, c3, θ2, θ3)` with θ1 = 0.
fn three_bus_oracle(s: &State) -> f64 {
    let caps = [80.0, 60.0];
    let lines = [
        (0usize, 1usize, 0.1, 50.0),
        (1, 2, 0.2, 30.0),
        (0, 2, 0.1, 50.0),
    ];
    // flow row over the 5 variables
    let flow = |from: usize, to: usize, x: f64| {
        let mut r = vec![0.0; 5];
        let k = 100.0 / x;
        let slot = |b: usize| if b == 0 { None } else { Some(2 + b) };
        if let Some(i) = slot(from) {
            r[i] += k;
        }
        if let Some(i) = slot(to) {
            r[i] -= k;
        }
        r
    };
    let mut balance = vec![vec![0.0; 5]; 3];
    balance[0][0] = 1.0;
    balance[1][1] = 1.0;
    balance[2][2] = 1.0;
    let mut le = Vec::new();
    for (j, &(a, b, x, rating)) in lines.iter().enumerate() {
        if s.is_failed(3 + j) {
            continue;
        }
        let f = flow(a, b, x);
        for v in 0..5 {
            balance[a][v] -= f[v];
            balance[b][v] += f[v];
        }
        le.push((f.clone(), rating));
        le.push((f.iter().map(|v| -v).collect(), rating));
    }
    for g in 0..2 {
        let cap = if s.is_failed(g + 1) { 0.0 } else { caps[g] };
        let mut up = vec![0.0; 5];
        up[g] = 1.0;
        le.push((up.clone(), cap));
        up[g] = -1.0;
        le.push((up, 0.0));
    }
    let mut c = vec![0.0; 5];
    c[2] = 1.0;
    le.push((c.clone(), 100.0));
    le.push((c.iter().map(|v| -v).collect(), 0.0));
    let eq = vec![
        (balance[0].clone(), 0.0),
        (balance[1].clone(), 0.0),
        (balance[2].clone(), 100.0),
    ];
    vertex_min(&c, &eq, &le)
}

#[test]
fn three_bus_matches_vertex_enumeration() {
    let m = SystemModel::from_json_str(THREE_BUS).unwrap();
    let e = common::engine(&m);
    let mut positive = 0;
    for gens in 0..4u64 {
        for line in [None, Some(3), Some(4), Some(5)] {
            let mut s = State::from_bits(5, gens);
            if let Some(l) = line {
                s.set_failed(l, true);
            }
            let oracle = three_bus_oracle(&s);
            let got = e.shed(&s).unwrap();
            assert!((got - oracle).abs() < 1e-6, "{s}: {got} vs {oracle}");
            if oracle > SHED_EPSILON_MW {
                positive += 1;
            }
        }
    }
    // the line limits bind in some of these states
    assert!(positive >= 8, "{positive}");
    let one_line_out = e.shed(&State::from_failed(5, &[3])).unwrap();
    assert!((one_line_out - three_bus_oracle(&State::from_failed(5, &[3]))).abs() < 1e-6);
}

#[test]
fn toy_systems_match_independent_lp() {
    for seed in 0..24u64 {
        let topology = [
            common::Topology::Tree,
            common::Topology::Mesh,
            common::Topology::MeshRated,
        ][seed as usize % 3];
        let m = common::toy_system(1000 + seed, 9, topology);
        let e = common::engine(&m);
        for (s, _, shed) in common::enumerate_all(&e) {
            let oracle = common::lp_shed(&m, &s);
            assert!(
                (shed - oracle).abs() < 1e-6 * (1.0 + oracle),
                "seed {seed} state {s}: {shed} vs {oracle}"
            );
        }
    }
}

#[test]
fn fixtures_match_independent_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in BUILTIN_SYSTEMS {
        let m = SystemModel::builtin(name).unwrap();
        let e = common::engine(&m);
        for _ in 0..150 {
            let (_, s) = common::random_pair(&m, &mut rng);
            let shed = e.shed(&s).unwrap();
            let oracle = common::lp_shed(&m, &s);
            assert!(
                (shed - oracle).abs() < 1e-6 * (1.0 + oracle),
                "{name} {s}: {shed} vs {oracle}"
            );
        }
    }
}

#[test]
fn paper_examples() {
    let rbts = SystemModel::rbts();
    let r = solve_opf(&rbts, &State::from_failed(20, &[20])).unwrap();
    assert!((r.shed_total - 20.0).abs() < 1e-9);
    let rts = SystemModel::rts79();
    let r = solve_opf(&rts, &State::from_failed(70, &[22, 23])).unwrap();
    assert!((r.shed_total - 245.0).abs() < 1e-6);
    for name in BUILTIN_SYSTEMS {
        let m = SystemModel::builtin(name).unwrap();
        assert_eq!(
            solve_opf(&m, &State::empty(m.n())).unwrap().shed_total,
            0.0,
            "{name}"
        );
    }
    assert_eq!(
        gridlattice::opf::structure(&rbts, &State::from_failed(20, &[20])).unwrap(),
        StructureValue(1)
    );
    assert_eq!(
        StructureValue::from_shed(SHED_EPSILON_MW / 2.0),
        StructureValue(0)
    );
}

#[test]
fn solutions_conserve_power_and_respect_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in BUILTIN_SYSTEMS {
        let m = SystemModel::builtin(name).unwrap();
        for _ in 0..300 {
            let (_, s) = common::random_pair(&m, &mut rng);
            let r = solve_opf(&m, &s).unwrap();
            let total_load = m.total_load();
            assert!(r.shed_total >= 0.0 && r.shed_total <= total_load + 1e-6);
            for (b, &c) in r.shed_by_bus.iter().enumerate() {
                assert!(
                    c >= -1e-9 && c <= m.buses[b].load + 1e-6,
                    "{name} {s} bus {b}"
                );
            }
            for &(id, f) in &r.line_flows {
                assert!(!s.is_failed(id));
                let line = m.line_of(id).unwrap();
                assert!(
                    f.abs() <= line.rating + 1e-6,
                    "{name} {s}: line {id} carries {f}"
                );
            }
            let mut covered = 0;
            for island in &r.islands {
                covered += island.len();
                let load: f64 = island.iter().map(|&b| m.buses[b].load).sum();
                let shed: f64 = island.iter().map(|&b| r.shed_by_bus[b]).sum();
                let gen: f64 = r
                    .dispatch
                    .iter()
                    .filter(|(id, _)| island.contains(&m.generators[m.component(*id).index].bus))
                    .map(|(_, p)| p)
                    .sum();
                assert!(
                    (gen + shed - load).abs() < 1e-6,
                    "{name} {s}: {gen} + {shed} != {load}"
                );
            }
            assert_eq!(covered, m.buses.len());
            let sum: f64 = r.shed_by_bus.iter().sum();
            assert!((sum - r.shed_total).abs() < 1e-9);
        }
    }
}

#[test]
fn repeated_solves_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = SystemModel::rts79();
    let e = common::engine(&m);
    for _ in 0..200 {
        let (_, s) = common::random_pair(&m, &mut rng);
        let a = solve_opf(&m, &s).unwrap().shed_total;
        let b = e.shed(&s).unwrap();
        let c = e.shed(&s).unwrap();
        let d = common::engine(&m).solve(&s).unwrap().shed_total;
        assert!(
            (a - b).abs() < 1e-9 && b == c && (a - d).abs() < 1e-9,
            "{s}"
        );
    }
}

/// C(s1) ≤ C(s2) whenever s1 ≤ s2, probed on random comparable pairs.
#[test]
fn shedding_is_monotone_on_bundled_fixtures() {
    for name in ["rbts", "rts79", "rts79-continuous"] {
        let m = SystemModel::builtin(name).unwrap();
        let e = common::engine(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut violations = Vec::new();
        for _ in 0..1000 {
            let (s1, s2) = common::random_pair(&m, &mut rng);
            assert!(s1.le(&s2));
            let (c1, c2) = (e.shed(&s1).unwrap(), e.shed(&s2).unwrap());
            if c1 > c2 + 1e-6 {
                violations.push(format!("{s1} ({c1}) > {s2} ({c2})"));
            }
        }
        assert!(violations.is_empty(), "{name}: {violations:?}");
    }
}

/// With the published continuous ratings, taking line 14 out relieves
/// loop-flow congestion: more outages, less shedding.
#[test]
fn rated_rbts_is_not_monotone() {
    let m = SystemModel::builtin("rbts-rated").unwrap();
    let e = common::engine(&m);
    let small = e.shed(&State::from_failed(20, &[8, 12])).unwrap();
    let large = e.shed(&State::from_failed(20, &[2, 8, 12, 14])).unwrap();
    assert!(small > large + 1.0, "{small} vs {large}");
}

#[test]
fn tree_and_unconstrained_toys_are_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..20u64 {
        let topology = if seed % 2 == 0 {
            common::Topology::Tree
        } else {
            common::Topology::Mesh
        };
        let m = common::toy_system(seed, 10, topology);
        let e = common::engine(&m);
        let n = m.n();
        for _ in 0..200 {
            let a = rng.random::<u64>() & ((1 << n) - 1);
            let b = a | (rng.random::<u64>() & ((1 << n) - 1));
            let (s1, s2) = (State::from_bits(n, a), State::from_bits(n, b));
            assert!(e.shed(&s1).unwrap() <= e.shed(&s2).unwrap() + 1e-6);
        }
    }
}
