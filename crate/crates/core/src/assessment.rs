//! Reliability indices: LOLP from a partition, EENS by sampling the failed
//! region, and the enumeration and crude Monte Carlo baselines.

use std::time::Instant;

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, State};
use crate::opf::{OpfEngine, SHED_EPSILON_MW};
use crate::partition::{FailedLattice, PartitionLedger};

/// Samples taken before the coefficient of variation is tested.
pub const MIN_SAMPLES: u64 = 30;

/// Upper bound on the number of states an enumeration may visit.
pub const MAX_ENUMERATED_STATES: u128 = 1 << 32;

const SE_BATCH: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexReport {
    pub lolp: f64,
    /// MW of expected unserved peak demand.
    pub eens: f64,
    pub eens_stderr: f64,
    /// Coefficient of variation of the EENS estimator; `None` while the
    /// running mean is still zero.
    pub beta: Option<f64>,
    pub opf_evaluations: u64,
    pub samples: u64,
    /// Wall-clock seconds; kept out of serialised reports.
    #[serde(skip)]
    pub elapsed: f64,
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SampleAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl SampleAccumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    /// `(s / √K) / mean`, undefined until the mean is positive.
    pub fn beta(&self) -> Option<f64> {
        (self.count >= 2 && self.mean > 0.0).then(|| self.std_error() / self.mean)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleTraceRow {
    pub k: u64,
    pub state: State,
    pub shed_mw: f64,
    pub running_eens: f64,
    pub beta: Option<f64>,
}

/// LOLP as the total probability of the failed lattices.
pub fn lolp_from_partition(ledger: &PartitionLedger) -> f64 {
    failed_probability(&ledger.failed)
}

fn failed_probability(failed: &[FailedLattice]) -> f64 {
    failed.iter().map(|f| f.probability).sum()
}

#[derive(Debug, Clone)]
pub struct FmcsOptions {
    pub beta_target: f64,
    pub min_samples: u64,
    /// Hard cap on the number of samples.
    pub max_samples: Option<u64>,
    /// Draw exactly this many samples and ignore `beta_target`.
    pub fixed_samples: Option<u64>,
    /// Keep every `trace_stride`-th sample in the trace; 0 keeps none.
    pub trace_stride: u64,
}

impl FmcsOptions {
    pub fn with_beta(beta_target: f64) -> Self {
        FmcsOptions {
            beta_target,
            min_samples: MIN_SAMPLES,
            max_samples: None,
            fixed_samples: None,
            trace_stride: 0,
        }
    }

    pub fn fixed(samples: u64) -> Self {
        FmcsOptions {
            fixed_samples: Some(samples),
            ..Self::with_beta(f64::MIN_POSITIVE)
        }
    }
}

#[derive(Debug, Clone)]
pub struct FmcsOutcome {
    pub report: IndexReport,
    pub trace: Vec<SampleTraceRow>,
    /// Samples drawn from a failed lattice that turned out not to shed.
    /// Non-zero only for a non-monotone structure function.
    pub nonfailed_samples: u64,
}

/// EENS by sampling only the failed region: pick a failed lattice with
/// probability `P(L) / P(F)`, draw a state from it, evaluate `C(s)`.
/// `EENS = P(F) · mean C`.
pub fn fmcs_eens<R: Rng + ?Sized>(
    engine: &OpfEngine,
    failed: &[FailedLattice],
    opts: &FmcsOptions,
    rng: &mut R,
) -> Result<FmcsOutcome> {
    let started = Instant::now();
    if failed.is_empty() {
        return Err(Error::NoFailedRegion);
    }
    if opts.fixed_samples.is_none() && (opts.beta_target.is_nan() || opts.beta_target <= 0.0) {
        return Err(Error::Config("beta target must be positive".into()));
    }
    let model = engine.model();
    let lolp = failed_probability(failed);
    let mut cumulative = Vec::with_capacity(failed.len());
    let mut acc = 0.0;
    for f in failed {
        acc += f.probability;
        cumulative.push(acc);
    }

    let mut stats = SampleAccumulator::default();
    let mut trace = Vec::new();
    let mut nonfailed = 0u64;
    let mut last = None;
    loop {
        let k = stats.count();
        match opts.fixed_samples {
            Some(fixed) if k >= fixed => break,
            Some(_) => {}
            None => {
                if k >= opts.min_samples {
                    if stats.mean() <= 0.0 {
                        return Err(Error::ZeroMeanShed { samples: k });
                    }
                    if stats.beta().is_some_and(|b| b < opts.beta_target) {
                        break;
                    }
                }
                if opts.max_samples.is_some_and(|m| k >= m) {
                    break;
                }
            }
        }

        let u = rng.random::<f64>() * acc;
        let idx = cumulative
            .partition_point(|&c| c <= u)
            .min(failed.len() - 1);
        let lattice: &Lattice = &failed[idx].lattice;
        let s = lattice.sample_state(model, rng);
        let shed = engine.shed(&s)?;
        if shed <= SHED_EPSILON_MW {
            nonfailed += 1;
            warn!("state {s} from failed lattice {lattice} does not shed load");
        }
        stats.push(shed);
        let row = SampleTraceRow {
            k: stats.count(),
            state: s,
            shed_mw: shed,
            running_eens: lolp * stats.mean(),
            beta: stats.beta(),
        };
        if opts.trace_stride > 0 && row.k.is_multiple_of(opts.trace_stride) {
            trace.push(row);
            last = None;
        } else {
            last = Some(row);
        }
    }
    finish_trace(&mut trace, last, opts.trace_stride);

    Ok(FmcsOutcome {
        report: IndexReport {
            lolp,
            eens: lolp * stats.mean(),
            eens_stderr: lolp * stats.std_error(),
            beta: stats.beta(),
            opf_evaluations: stats.count(),
            samples: stats.count(),
            elapsed: started.elapsed().as_secs_f64(),
        },
        trace,
        nonfailed_samples: nonfailed,
    })
}

/// The final sample always closes a non-empty trace.
fn finish_trace(trace: &mut Vec<SampleTraceRow>, last: Option<SampleTraceRow>, stride: u64) {
    if stride > 0 {
        if let Some(row) = last {
            trace.push(row);
        }
    }
}

#[derive(Debug, Clone)]
pub struct McsOptions {
    pub beta_target: f64,
    pub min_samples: u64,
    pub max_samples: Option<u64>,
    pub fixed_samples: Option<u64>,
    /// Keep every `trace_stride`-th sample in the trace; 0 keeps none.
    pub trace_stride: u64,
}

impl McsOptions {
    pub fn with_beta(beta_target: f64) -> Self {
        McsOptions {
            beta_target,
            min_samples: MIN_SAMPLES,
            max_samples: None,
            fixed_samples: None,
            trace_stride: 0,
        }
    }

    pub fn fixed(samples: u64) -> Self {
        McsOptions {
            fixed_samples: Some(samples),
            ..Self::with_beta(f64::MIN_POSITIVE)
        }
    }
}

#[derive(Debug, Clone)]
pub struct McsOutcome {
    pub report: IndexReport,
    pub trace: Vec<SampleTraceRow>,
}

/// Crude Monte Carlo over the whole state space; the coefficient of
/// variation is taken on the EENS estimator including zero-shed samples.
pub fn mcs<R: Rng + ?Sized>(
    engine: &OpfEngine,
    opts: &McsOptions,
    rng: &mut R,
) -> Result<McsOutcome> {
    let started = Instant::now();
    if opts.fixed_samples.is_none() && (opts.beta_target.is_nan() || opts.beta_target <= 0.0) {
        return Err(Error::Config("beta target must be positive".into()));
    }
    let model = engine.model();
    let full = Lattice::full(model.n());
    let mut stats = SampleAccumulator::default();
    let mut failures = 0u64;
    let mut trace = Vec::new();
    let mut last = None;
    loop {
        let k = stats.count();
        match opts.fixed_samples {
            Some(fixed) if k >= fixed => break,
            Some(_) => {}
            None => {
                if k >= opts.min_samples && stats.beta().is_some_and(|b| b < opts.beta_target) {
                    break;
                }
                if opts.max_samples.is_some_and(|m| k >= m) {
                    break;
                }
            }
        }
        let s = full.sample_state(model, rng);
        let shed = engine.shed(&s)?;
        if shed > SHED_EPSILON_MW {
            failures += 1;
        }
        stats.push(shed);
        let row = SampleTraceRow {
            k: stats.count(),
            state: s,
            shed_mw: shed,
            running_eens: stats.mean(),
            beta: stats.beta(),
        };
        if opts.trace_stride > 0 && row.k.is_multiple_of(opts.trace_stride) {
            trace.push(row);
            last = None;
        } else {
            last = Some(row);
        }
    }
    finish_trace(&mut trace, last, opts.trace_stride);
    let k = stats.count();
    Ok(McsOutcome {
        report: IndexReport {
            lolp: if k == 0 {
                0.0
            } else {
                failures as f64 / k as f64
            },
            eens: stats.mean(),
            eens_stderr: stats.std_error(),
            beta: stats.beta(),
            opf_evaluations: k,
            samples: k,
            elapsed: started.elapsed().as_secs_f64(),
        },
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeLevelRow {
    pub level: u32,
    /// States enumerated so far, cumulative.
    pub states: u64,
    pub lolp: f64,
    pub eens: f64,
}

#[derive(Debug, Clone)]
pub struct SeOutcome {
    pub report: IndexReport,
    pub levels: Vec<SeLevelRow>,
}

fn binomial(n: u32, k: u32) -> u128 {
    let mut r: u128 = 1;
    for i in 0..k as u128 {
        r = r * (n as u128 - i) / (i + 1);
    }
    r
}

/// Number of states of level at most `max_level` among `n` components.
pub fn states_up_to_level(n: usize, max_level: u32) -> u128 {
    (0..=max_level.min(n as u32))
        .map(|k| binomial(n as u32, k))
        .sum()
}

/// Enumerates every state of level `≤ max_level` (all states when `None`)
/// in increasing level order. Sums are accumulated in enumeration order,
/// so the result does not depend on the number of worker threads.
pub fn se_enumerate(engine: &OpfEngine, max_level: Option<u32>) -> Result<SeOutcome> {
    let started = Instant::now();
    let model = engine.model();
    let n = model.n();
    let top = max_level.map_or(n as u32, |k| k.min(n as u32));
    let total = states_up_to_level(n, top);
    if total > MAX_ENUMERATED_STATES {
        return Err(Error::EnumerationTooLarge(total));
    }

    let mut lolp = 0.0;
    let mut eens = 0.0;
    let mut count = 0u64;
    let mut levels = Vec::with_capacity(top as usize + 1);
    let mut batch: Vec<State> = Vec::with_capacity(SE_BATCH);

    let flush = |batch: &mut Vec<State>, lolp: &mut f64, eens: &mut f64| -> Result<()> {
        let evaluated: Vec<(f64, f64)> = batch
            .par_iter()
            .map(|s| Ok((model.state_probability_unchecked(s), engine.shed(s)?)))
            .collect::<Result<_>>()?;
        for (p, c) in evaluated {
            if c > SHED_EPSILON_MW {
                *lolp += p;
                *eens += p * c;
            }
        }
        batch.clear();
        Ok(())
    };

    for level in 0..=top {
        let mut combo: Vec<usize> = (1..=level as usize).collect();
        loop {
            batch.push(State::from_failed(n, &combo));
            count += 1;
            if batch.len() == SE_BATCH {
                flush(&mut batch, &mut lolp, &mut eens)?;
            }
            if !next_combination(&mut combo, n) {
                break;
            }
        }
        flush(&mut batch, &mut lolp, &mut eens)?;
        levels.push(SeLevelRow {
            level,
            states: count,
            lolp,
            eens,
        });
    }

    Ok(SeOutcome {
        report: IndexReport {
            lolp,
            eens,
            eens_stderr: 0.0,
            beta: Some(0.0),
            opf_evaluations: count,
            samples: count,
            elapsed: started.elapsed().as_secs_f64(),
        },
        levels,
    })
}

/// Advances a sorted combination of ids from `1..=n` in lexicographic
/// order; returns `false` after the last one.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - (k - 1 - i) {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
