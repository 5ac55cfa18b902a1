//! Power-system data model and system description files.
//!
//! Components are numbered from 1: generators first in declaration order,
//! then lines in declaration order. Component `k` maps to bit `k - 1` of a
//! [`State`].

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::State;

/// Maximum number of components a [`State`] can hold.
pub const MAX_COMPONENTS: usize = 128;

const RBTS_JSON: &str = include_str!("../data/rbts.json");
const RTS79_JSON: &str = include_str!("../data/rts79.json");
const RBTS_RATED_JSON: &str = include_str!("../data/rbts_rated.json");
const RTS79_CONTINUOUS_JSON: &str = include_str!("../data/rts79_continuous.json");

/// Names accepted by [`SystemModel::builtin_json`].
pub const BUILTIN_SYSTEMS: [&str; 4] = ["rbts", "rbts-rated", "rts79", "rts79-continuous"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Generator,
    Line,
}

/// Two-state reliability model of one component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub id: usize,
    pub kind: ComponentKind,
    /// Index into [`SystemModel::generators`] or [`SystemModel::lines`].
    pub index: usize,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    /// Unavailability (forced outage rate).
    pub q: f64,
    /// Availability, `1 - q`.
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bus {
    /// Bus number as written in the description file.
    pub id: u32,
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generator {
    pub component_id: usize,
    /// Index into [`SystemModel::buses`].
    pub bus: usize,
    pub capacity: f64,
    pub p_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Line {
    pub component_id: usize,
    /// Index into [`SystemModel::buses`].
    pub from_bus: usize,
    /// Index into [`SystemModel::buses`].
    pub to_bus: usize,
    pub reactance: f64,
    pub rating: f64,
}

/// Validated, immutable system model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemModel {
    pub name: Option<String>,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub lines: Vec<Line>,
    pub components: Vec<Component>,
}

// --- file schema ---------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(default)]
    name: Option<String>,
    base_mva: f64,
    buses: Vec<RawBus>,
    generators: Vec<RawGenerator>,
    lines: Vec<RawLine>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBus {
    id: u32,
    load_mw: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    bus: u32,
    capacity_mw: f64,
    #[serde(default)]
    p_min_mw: Option<f64>,
    #[serde(default)]
    q: Option<f64>,
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default)]
    mu: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    from: u32,
    to: u32,
    reactance_pu: f64,
    rating_mw: f64,
    #[serde(default)]
    q: Option<f64>,
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default)]
    mu: Option<f64>,
}

fn invalid(entity: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Invalid {
        entity: entity.into(),
        reason: reason.into(),
    }
}

/// Resolves the unavailability from either a direct `q` or a `(lambda, mu)`
/// rate pair.
fn unavailability(
    entity: &str,
    q: Option<f64>,
    lambda: Option<f64>,
    mu: Option<f64>,
) -> Result<(f64, Option<f64>, Option<f64>)> {
    let q = match (q, lambda, mu) {
        (Some(q), None, None) => q,
        (None, Some(l), Some(m)) => {
            if !(l >= 0.0 && l.is_finite()) || !(m > 0.0 && m.is_finite()) {
                return Err(invalid(entity, "lambda must be >= 0 and mu > 0"));
            }
            l / (l + m)
        }
        (Some(_), _, _) => {
            return Err(invalid(entity, "give either q or lambda+mu, not both"));
        }
        _ => return Err(invalid(entity, "missing reliability data (q or lambda+mu)")),
    };
    if !(0.0..1.0).contains(&q) {
        return Err(invalid(
            entity,
            format!("unavailability q = {q} outside [0, 1)"),
        ));
    }
    Ok((q, lambda, mu))
}

impl SystemModel {
    /// Reads and validates a system description file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawSystem = serde_json::from_str(text)?;
        Self::from_raw(raw)
    }

    /// The bundled Roy Billinton Test System (6 buses, 11 units, 9 lines).
    /// Line ratings are set to the installed capacity, so transmission
    /// limits never bind and only islanding or generation shortfall sheds
    /// load. `rbts-rated` keeps the published 85/71 MW ratings.
    pub fn rbts() -> Self {
        Self::from_json_str(RBTS_JSON).expect("bundled RBTS fixture is valid")
    }

    /// The bundled IEEE RTS-79 (24 buses, 32 units, 38 lines) with
    /// long-term emergency line ratings. `rts79-continuous` carries the
    /// continuous ratings instead.
    pub fn rts79() -> Self {
        Self::from_json_str(RTS79_JSON).expect("bundled RTS-79 fixture is valid")
    }

    /// Looks up a bundled fixture by name; see [`BUILTIN_SYSTEMS`].
    pub fn builtin(name: &str) -> Option<Self> {
        Self::builtin_json(name)
            .map(|text| Self::from_json_str(text).expect("bundled fixture is valid"))
    }

    /// Raw JSON of a bundled fixture by name; see [`BUILTIN_SYSTEMS`].
    pub fn builtin_json(name: &str) -> Option<&'static str> {
        match name {
            "rbts" => Some(RBTS_JSON),
            "rbts-rated" => Some(RBTS_RATED_JSON),
            "rts79" => Some(RTS79_JSON),
            "rts79-continuous" => Some(RTS79_CONTINUOUS_JSON),
            _ => None,
        }
    }

    fn from_raw(raw: RawSystem) -> Result<Self> {
        if !(raw.base_mva > 0.0 && raw.base_mva.is_finite()) {
            return Err(invalid("system", "base_mva must be positive"));
        }
        if raw.buses.is_empty() {
            return Err(invalid("system", "no buses"));
        }

        let mut bus_index = HashMap::with_capacity(raw.buses.len());
        let mut buses = Vec::with_capacity(raw.buses.len());
        for (i, b) in raw.buses.iter().enumerate() {
            let entity = format!("bus {}", b.id);
            if bus_index.insert(b.id, i).is_some() {
                return Err(invalid(entity, "duplicate bus id"));
            }
            if !(b.load_mw >= 0.0 && b.load_mw.is_finite()) {
                return Err(invalid(
                    entity,
                    format!("load {} MW must be >= 0", b.load_mw),
                ));
            }
            buses.push(Bus {
                id: b.id,
                load: b.load_mw,
            });
        }

        let n = raw.generators.len() + raw.lines.len();
        if n == 0 {
            return Err(invalid("system", "no components"));
        }
        if n > MAX_COMPONENTS {
            return Err(invalid(
                "system",
                format!("{n} components exceed the supported maximum of {MAX_COMPONENTS}"),
            ));
        }

        let mut components = Vec::with_capacity(n);
        let mut generators = Vec::with_capacity(raw.generators.len());
        for (i, g) in raw.generators.iter().enumerate() {
            let id = i + 1;
            let entity = format!("generator {} (component {id})", i + 1);
            let bus = *bus_index
                .get(&g.bus)
                .ok_or_else(|| invalid(&entity, format!("unknown bus {}", g.bus)))?;
            if !(g.capacity_mw > 0.0 && g.capacity_mw.is_finite()) {
                return Err(invalid(
                    &entity,
                    format!("capacity {} MW must be > 0", g.capacity_mw),
                ));
            }
            let p_min = g.p_min_mw.unwrap_or(0.0);
            if !(0.0..=g.capacity_mw).contains(&p_min) {
                return Err(invalid(
                    &entity,
                    format!("p_min {p_min} MW outside [0, capacity]"),
                ));
            }
            let (q, lambda, mu) = unavailability(&entity, g.q, g.lambda, g.mu)?;
            components.push(Component {
                id,
                kind: ComponentKind::Generator,
                index: i,
                lambda,
                mu,
                q,
                a: 1.0 - q,
            });
            generators.push(Generator {
                component_id: id,
                bus,
                capacity: g.capacity_mw,
                p_min,
            });
        }

        let mut lines = Vec::with_capacity(raw.lines.len());
        for (i, l) in raw.lines.iter().enumerate() {
            let id = generators.len() + i + 1;
            let entity = format!("line {} (component {id})", i + 1);
            let from_bus = *bus_index
                .get(&l.from)
                .ok_or_else(|| invalid(&entity, format!("unknown bus {}", l.from)))?;
            let to_bus = *bus_index
                .get(&l.to)
                .ok_or_else(|| invalid(&entity, format!("unknown bus {}", l.to)))?;
            if from_bus == to_bus {
                return Err(invalid(&entity, "from and to bus coincide"));
            }
            if !(l.reactance_pu > 0.0 && l.reactance_pu.is_finite()) {
                return Err(invalid(&entity, "reactance must be > 0"));
            }
            if !(l.rating_mw > 0.0 && l.rating_mw.is_finite()) {
                return Err(invalid(
                    &entity,
                    format!("rating {} MW must be > 0", l.rating_mw),
                ));
            }
            let (q, lambda, mu) = unavailability(&entity, l.q, l.lambda, l.mu)?;
            components.push(Component {
                id,
                kind: ComponentKind::Line,
                index: i,
                lambda,
                mu,
                q,
                a: 1.0 - q,
            });
            lines.push(Line {
                component_id: id,
                from_bus,
                to_bus,
                reactance: l.reactance_pu,
                rating: l.rating_mw,
            });
        }

        let model = SystemModel {
            name: raw.name,
            base_mva: raw.base_mva,
            buses,
            generators,
            lines,
            components,
        };
        model.check_connected()?;
        Ok(model)
    }

    fn check_connected(&self) -> Result<()> {
        let mut seen = vec![false; self.buses.len()];
        let mut adj = vec![Vec::new(); self.buses.len()];
        for l in &self.lines {
            adj[l.from_bus].push(l.to_bus);
            adj[l.to_bus].push(l.from_bus);
        }
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(b) = stack.pop() {
            for &o in &adj[b] {
                if !seen[o] {
                    seen[o] = true;
                    stack.push(o);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(b) => Err(invalid(
                format!("bus {}", self.buses[b].id),
                "not connected to bus 1 of the base network",
            )),
            None => Ok(()),
        }
    }

    /// Number of components `n`.
    pub fn n(&self) -> usize {
        self.components.len()
    }

    /// Component by 1-based id.
    pub fn component(&self, id: usize) -> &Component {
        &self.components[id - 1]
    }

    pub fn q(&self, id: usize) -> f64 {
        self.components[id - 1].q
    }

    pub fn a(&self, id: usize) -> f64 {
        self.components[id - 1].a
    }

    pub fn is_line(&self, id: usize) -> bool {
        id > self.generators.len() && id <= self.n()
    }

    pub fn line_of(&self, id: usize) -> Option<&Line> {
        if self.is_line(id) {
            Some(&self.lines[id - self.generators.len() - 1])
        } else {
            None
        }
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load).sum()
    }

    pub fn total_capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.capacity).sum()
    }

    /// Probability of a single state: product of `a` over operational and
    /// `q` over failed components.
    pub fn state_probability(&self, s: &State) -> Result<f64> {
        if s.width() != self.n() {
            return Err(Error::StateWidth {
                expected: self.n(),
                got: s.width(),
            });
        }
        let mut p = 1.0;
        for c in &self.components {
            p *= if s.is_failed(c.id) { c.q } else { c.a };
        }
        Ok(p)
    }

    /// State probability when the width is already known to match.
    pub(crate) fn state_probability_unchecked(&self, s: &State) -> f64 {
        let mut p = 1.0;
        for c in &self.components {
            p *= if s.is_failed(c.id) { c.q } else { c.a };
        }
        p
    }
}

/// Free-function form of [`SystemModel::load`].
pub fn load_system(path: impl AsRef<Path>) -> Result<SystemModel> {
    SystemModel::load(path)
}
