//! Boolean-lattice algebra over the contingency state space.
//!
//! A [`State`] is a fixed-width bit vector, bit `k - 1` set when component
//! `k` is failed. A [`Lattice`] is the closed interval `[min, max]` of states
//! under the componentwise order: components set in `min` are fixed failed,
//! components clear in `max` are fixed operational, the rest are free.

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::system::{SystemModel, MAX_COMPONENTS};

const WORDS: usize = MAX_COMPONENTS / 64;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    words: [u64; WORDS],
    width: u8,
}

impl State {
    /// The all-operational state.
    pub fn empty(width: usize) -> Self {
        assert!(
            width <= MAX_COMPONENTS,
            "state width {width} > {MAX_COMPONENTS}"
        );
        State {
            words: [0; WORDS],
            width: width as u8,
        }
    }

    /// The all-failed state.
    pub fn full(width: usize) -> Self {
        let mut s = Self::empty(width);
        for (w, word) in s.words.iter_mut().enumerate() {
            let lo = w * 64;
            if width > lo {
                let bits = (width - lo).min(64);
                *word = if bits == 64 {
                    u64::MAX
                } else {
                    (1u64 << bits) - 1
                };
            }
        }
        s
    }

    /// State with the given 1-based component ids failed.
    pub fn from_failed(width: usize, ids: &[usize]) -> Self {
        let mut s = Self::empty(width);
        for &id in ids {
            s.set_failed(id, true);
        }
        s
    }

    /// Low 64 components as a mask; convenient for small systems.
    pub fn from_bits(width: usize, bits: u64) -> Self {
        let mut s = Self::empty(width);
        s.words[0] = bits;
        s.words[0] &= Self::full(width).words[0];
        s
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn is_failed(&self, id: usize) -> bool {
        debug_assert!(id >= 1 && id <= self.width());
        let b = id - 1;
        self.words[b / 64] >> (b % 64) & 1 == 1
    }

    pub fn set_failed(&mut self, id: usize, failed: bool) {
        assert!(
            id >= 1 && id <= self.width(),
            "component {id} outside 1..={}",
            self.width()
        );
        let b = id - 1;
        if failed {
            self.words[b / 64] |= 1 << (b % 64);
        } else {
            self.words[b / 64] &= !(1 << (b % 64));
        }
    }

    pub fn with_failed(mut self, id: usize) -> Self {
        self.set_failed(id, true);
        self
    }

    pub fn with_operational(mut self, id: usize) -> Self {
        self.set_failed(id, false);
        self
    }

    /// Number of failed components.
    pub fn level(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Componentwise order: every component failed in `self` is failed in `other`.
    pub fn le(&self, other: &State) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & b == *a)
    }

    pub fn and(&self, other: &State) -> State {
        let mut s = *self;
        for (a, b) in s.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
        s
    }

    pub fn or(&self, other: &State) -> State {
        let mut s = *self;
        for (a, b) in s.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        s
    }

    pub fn xor(&self, other: &State) -> State {
        let mut s = *self;
        for (a, b) in s.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        s
    }

    /// Failed component ids in ascending order.
    pub fn failed_ids(&self) -> Vec<usize> {
        self.iter_failed().collect()
    }

    pub fn iter_failed(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + b + 1)
            })
        })
    }

    pub fn words(&self) -> [u64; WORDS] {
        self.words
    }
}

/// Prints the failed set, e.g. `{20}` or `{22,23}`.
impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, id) in self.iter_failed().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{id}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State({self})")
    }
}

impl Serialize for State {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LatticeClass {
    Normal,
    Failed,
    Mixed,
}

/// Classifies a lattice from the structure function at its endpoints.
///
/// A failed minimum with a normal maximum cannot happen for an
/// order-preserving structure function and is reported as an error.
pub fn classify(phi_min: bool, phi_max: bool) -> Result<LatticeClass> {
    match (phi_min, phi_max) {
        (true, true) => Ok(LatticeClass::Failed),
        (false, false) => Ok(LatticeClass::Normal),
        (false, true) => Ok(LatticeClass::Mixed),
        (true, false) => Err(Error::Monotonicity),
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Lattice {
    pub min: State,
    pub max: State,
}

impl Lattice {
    pub fn new(min: State, max: State) -> Result<Self> {
        if min.width() != max.width() {
            return Err(Error::StateWidth {
                expected: min.width(),
                got: max.width(),
            });
        }
        if !min.le(&max) {
            return Err(Error::Config(format!(
                "lattice bounds {min} is not <= {max}"
            )));
        }
        Ok(Lattice { min, max })
    }

    /// The whole state space `[0̂, 1̂]`.
    pub fn full(width: usize) -> Self {
        Lattice {
            min: State::empty(width),
            max: State::full(width),
        }
    }

    /// A 0-dimensional lattice holding one state.
    pub fn point(s: State) -> Self {
        Lattice { min: s, max: s }
    }

    pub fn width(&self) -> usize {
        self.min.width()
    }

    pub fn free_mask(&self) -> State {
        self.max.xor(&self.min)
    }

    pub fn dimension(&self) -> u32 {
        self.free_mask().level()
    }

    pub fn is_free(&self, id: usize) -> bool {
        !self.min.is_failed(id) && self.max.is_failed(id)
    }

    pub fn is_fixed_failed(&self, id: usize) -> bool {
        self.min.is_failed(id)
    }

    pub fn is_fixed_operational(&self, id: usize) -> bool {
        !self.max.is_failed(id)
    }

    pub fn contains(&self, s: &State) -> bool {
        self.min.le(s) && s.le(&self.max)
    }

    pub fn free_ids(&self) -> impl Iterator<Item = usize> {
        let mask = self.free_mask();
        let ids: Vec<usize> = mask.iter_failed().collect();
        ids.into_iter()
    }

    /// Splits on free component `id` into the sub-lattice where it is
    /// operational (lower) and the one where it is failed (upper).
    pub fn split(&self, id: usize) -> Result<(Lattice, Lattice)> {
        if id == 0 || id > self.width() || !self.is_free(id) {
            return Err(Error::NotFree(id, self.to_string()));
        }
        let lower = Lattice {
            min: self.min,
            max: self.max.with_operational(id),
        };
        let upper = Lattice {
            min: self.min.with_failed(id),
            max: self.max,
        };
        Ok((lower, upper))
    }

    /// `P(L)`: product of `a` over fixed-operational and `q` over
    /// fixed-failed components; free components contribute 1.
    pub fn probability(&self, model: &SystemModel) -> f64 {
        let mut p = 1.0;
        for c in &model.components {
            if self.min.is_failed(c.id) {
                p *= c.q;
            } else if !self.max.is_failed(c.id) {
                p *= c.a;
            }
        }
        p
    }

    /// Draws a state from the lattice with probability `P(s) / P(L)`:
    /// fixed bits are copied and each free component fails independently
    /// with its own unavailability.
    pub fn sample_state<R: Rng + ?Sized>(&self, model: &SystemModel, rng: &mut R) -> State {
        let mut s = self.min;
        for id in self.free_mask().iter_failed() {
            if rng.random::<f64>() < model.q(id) {
                s.set_failed(id, true);
            }
        }
        s
    }

    /// Every state of the lattice. Intended for small dimensions.
    pub fn states(&self) -> impl Iterator<Item = State> {
        let free: Vec<usize> = self.free_mask().iter_failed().collect();
        assert!(free.len() < 64, "lattice too large to enumerate");
        let min = self.min;
        (0u64..1u64 << free.len()).map(move |m| {
            let mut s = min;
            for (j, &id) in free.iter().enumerate() {
                if m >> j & 1 == 1 {
                    s.set_failed(id, true);
                }
            }
            s
        })
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.min, self.max)
    }
}

impl fmt::Debug for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Lattice{self}")
    }
}

/// Free-function form of [`Lattice::probability`].
pub fn lattice_probability(model: &SystemModel, l: &Lattice) -> f64 {
    l.probability(model)
}
