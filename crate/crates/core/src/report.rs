//! Run configuration, result JSON and CSV artifacts for the `assess` tool.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::assessment::{
    fmcs_eens, mcs, se_enumerate, FmcsOptions, McsOptions, SampleTraceRow, SeLevelRow,
};
use crate::error::{Error, Result};
use crate::opf::OpfEngine;
use crate::partition::{run_dichotomy, DichotomyOptions, PartitionLedger, StopCriteria};
use crate::system::SystemModel;

pub const RNG_NAME: &str = "ChaCha8Rng";

pub const RESULT_FILE: &str = "result.json";
pub const TRACE_FILE: &str = "partition_trace.csv";
pub const FAILED_FILE: &str = "failed_lattices.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const LEVELS_FILE: &str = "se_levels.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "dichotomy")]
    Dichotomy,
    #[serde(rename = "se")]
    Se,
    #[serde(rename = "mcs")]
    Mcs,
    #[serde(rename = "dichotomy+fmcs")]
    DichotomyFmcs,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dichotomy => "dichotomy",
            Method::Se => "se",
            Method::Mcs => "mcs",
            Method::DichotomyFmcs => "dichotomy+fmcs",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dichotomy" => Ok(Method::Dichotomy),
            "se" => Ok(Method::Se),
            "mcs" => Ok(Method::Mcs),
            "dichotomy+fmcs" => Ok(Method::DichotomyFmcs),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    /// Path to a system file, or the name of a bundled fixture.
    pub system: String,
    pub method: Method,
    pub dn: Option<i32>,
    pub max_opf: Option<u64>,
    pub mixed_mass: Option<f64>,
    pub beta: Option<f64>,
    pub max_samples: Option<u64>,
    pub max_level: Option<u32>,
    pub seed: u64,
    pub classify_max: bool,
    pub trace_stride: u64,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(system: impl Into<String>, method: Method) -> Self {
        RunConfig {
            system: system.into(),
            method,
            dn: None,
            max_opf: None,
            mixed_mass: None,
            beta: None,
            max_samples: None,
            max_level: None,
            seed: 0,
            classify_max: false,
            trace_stride: 1,
            threads: None,
        }
    }

    pub fn stop_criteria(&self) -> StopCriteria {
        StopCriteria {
            max_opf: self.max_opf,
            mixed_mass_below: self.mixed_mass,
            avg_failed_prob_below: self.dn.map(|n| 10f64.powi(-n)),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let partitions = matches!(self.method, Method::Dichotomy | Method::DichotomyFmcs);
        if partitions {
            self.stop_criteria().validate()?;
        }
        let samples = matches!(self.method, Method::Mcs | Method::DichotomyFmcs);
        if samples && self.beta.is_none() && self.max_samples.is_none() {
            return Err(Error::Config(format!(
                "method {} needs --beta or --max-samples",
                self.method
            )));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config("beta must be a positive number".into()));
            }
        }
        if let Some(m) = self.mixed_mass {
            if m.is_nan() || m < 0.0 {
                return Err(Error::Config(
                    "mixed-mass threshold must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A system together with the bytes it was loaded from.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub model: SystemModel,
    pub sha256: String,
    pub source: String,
}

/// Loads a system file, falling back to a bundled fixture name when no
/// such file exists.
pub fn load_system_source(system: &str) -> Result<LoadedSystem> {
    let path = Path::new(system);
    let text = if path.exists() {
        fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?
    } else if let Some(text) = SystemModel::builtin_json(system) {
        text.to_string()
    } else {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or fixture"),
        });
    };
    let model = SystemModel::from_json_str(&text)?;
    Ok(LoadedSystem {
        model,
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
        source: system.to_string(),
    })
}

/// One line of the end-of-run summary table.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub beta: Option<f64>,
    pub lolp: f64,
    pub eens: Option<f64>,
    pub evaluations: u64,
    pub seconds: f64,
}

impl SummaryRow {
    pub const HEADER: &'static str =
        "method | beta | LOLP | EENS (MW) | OPF evaluations | time (s)";
}

impl fmt::Display for SummaryRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let beta = self.beta.map_or("-".to_string(), |b| format!("{b:.4}"));
        let eens = self.eens.map_or("-".to_string(), |e| format!("{e:.5}"));
        write!(
            f,
            "{} | {} | {:.5}% | {} | {} | {:.3}",
            self.method,
            beta,
            self.lolp * 100.0,
            eens,
            self.evaluations,
            self.seconds
        )
    }
}

/// Everything a run produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub result: Value,
    pub summary: SummaryRow,
    pub ledger: Option<PartitionLedger>,
    pub samples: Vec<SampleTraceRow>,
    pub levels: Vec<SeLevelRow>,
}

impl RunArtifacts {
    /// The result with the `timing` object removed; identical across runs
    /// of the same configuration.
    pub fn deterministic_result(&self) -> Value {
        let mut v = self.result.clone();
        if let Value::Object(map) = &mut v {
            map.remove("timing");
        }
        v
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |e: std::io::Error| Error::Io { path, source: e }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::new();
        let mut put = |name: &str, body: Vec<u8>| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, body).map_err(io(&p))?;
            written.push(p);
            Ok(())
        };
        let mut json = serde_json::to_vec_pretty(&self.result)
            .map_err(|e| Error::Config(format!("cannot serialise result: {e}")))?;
        json.push(b'\n');
        put(RESULT_FILE, json)?;
        if let Some(ledger) = &self.ledger {
            put(TRACE_FILE, trace_csv(ledger)?)?;
            put(FAILED_FILE, report_failed_lattices(ledger)?)?;
        }
        if matches!(self.summary.method, Method::Mcs | Method::DichotomyFmcs) {
            put(SAMPLES_FILE, samples_csv(&self.samples)?)?;
        }
        if self.summary.method == Method::Se {
            put(LEVELS_FILE, levels_csv(&self.levels)?)?;
        }
        Ok(written)
    }
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let build = || -> csv::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        fill(&mut w)?;
        w.into_inner().map_err(|e| e.into_error().into())
    };
    build().map_err(|e| Error::Config(format!("cannot write csv: {e}")))
}

/// MW value rounded to the shedding tolerance, without trailing zeros.
pub fn format_mw(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn format_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// `iteration,opf_count,lolp_lower,mixed_mass,failed_count,elapsed_ms`
pub fn trace_csv(ledger: &PartitionLedger) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "iteration",
            "opf_count",
            "lolp_lower",
            "mixed_mass",
            "failed_count",
            "elapsed_ms",
        ],
        |w| {
            for r in &ledger.trace {
                w.write_record([
                    r.iteration.to_string(),
                    r.opf_count.to_string(),
                    r.lolp_lower.to_string(),
                    r.mixed_mass.to_string(),
                    r.failed_count.to_string(),
                    format!("{:.3}", r.elapsed_ms),
                ])?;
            }
            Ok(())
        },
    )
}

/// Failed lattices in discovery order:
/// `rank,min_element_failed_ids,shed_mw,num_states_log2,probability`.
pub fn report_failed_lattices(ledger: &PartitionLedger) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "rank",
            "min_element_failed_ids",
            "shed_mw",
            "num_states_log2",
            "probability",
        ],
        |w| {
            for (i, f) in ledger.failed.iter().enumerate() {
                w.write_record([
                    (i + 1).to_string(),
                    f.lattice.min.to_string(),
                    format_mw(f.shed_mw),
                    f.lattice.dimension().to_string(),
                    f.probability.to_string(),
                ])?;
            }
            Ok(())
        },
    )
}

/// `k,state_failed_ids,shed_mw,running_eens,beta`
pub fn samples_csv(rows: &[SampleTraceRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &["k", "state_failed_ids", "shed_mw", "running_eens", "beta"],
        |w| {
            for r in rows {
                w.write_record([
                    r.k.to_string(),
                    r.state.to_string(),
                    format_mw(r.shed_mw),
                    r.running_eens.to_string(),
                    format_opt(r.beta),
                ])?;
            }
            Ok(())
        },
    )
}

/// `level,states,lolp,eens`, cumulative.
pub fn levels_csv(rows: &[SeLevelRow]) -> Result<Vec<u8>> {
    csv_bytes(&["level", "states", "lolp", "eens"], |w| {
        for r in rows {
            w.write_record([
                r.level.to_string(),
                r.states.to_string(),
                r.lolp.to_string(),
                r.eens.to_string(),
            ])?;
        }
        Ok(())
    })
}

fn partition_json(ledger: &PartitionLedger) -> Value {
    json!({
        "opf_count": ledger.opf_count,
        "iterations": ledger.iterations,
        "lolp_lower": ledger.lolp_lower,
        "mixed_mass": ledger.mixed_mass,
        "normal_mass": ledger.normal_mass,
        "failed_count": ledger.failed.len(),
        "mixed_count": ledger.mixed_len(),
        "normal_count": ledger.normal.len(),
        "stop_reason": ledger.stop_reason,
    })
}

/// Runs the configured assessment without touching the output directory.
pub fn execute(config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let started = Instant::now();
    let loaded = load_system_source(&config.system)?;
    let n = loaded.model.n();
    let name = loaded.model.name.clone();
    let engine = OpfEngine::new(Arc::new(loaded.model));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut ledger = None;
    let mut samples = Vec::new();
    let mut levels = Vec::new();
    let mut partition_s = None;
    let mut sampling_s = None;
    let mut report = serde_json::Map::new();
    let summary;

    match config.method {
        Method::Dichotomy | Method::DichotomyFmcs => {
            let options = DichotomyOptions {
                classify_max: config.classify_max,
            };
            let t = Instant::now();
            let l = run_dichotomy(&engine, &config.stop_criteria(), &options)?;
            partition_s = Some(t.elapsed().as_secs_f64());
            report.insert("lolp".into(), json!(l.lolp_lower));
            if config.method == Method::DichotomyFmcs {
                let opts = FmcsOptions {
                    max_samples: config.max_samples,
                    trace_stride: config.trace_stride,
                    ..FmcsOptions::with_beta(config.beta.unwrap_or(f64::MIN_POSITIVE))
                };
                let out = fmcs_eens(&engine, &l.failed, &opts, &mut rng)?;
                sampling_s = Some(out.report.elapsed);
                let r = out.report;
                report.insert("eens".into(), json!(r.eens));
                report.insert("eens_stderr".into(), json!(r.eens_stderr));
                report.insert("beta".into(), json!(r.beta));
                report.insert("samples".into(), json!(r.samples));
                report.insert("nonfailed_samples".into(), json!(out.nonfailed_samples));
                report.insert(
                    "opf_evaluations".into(),
                    json!(l.opf_count + r.opf_evaluations),
                );
                samples = out.trace;
                summary = SummaryRow {
                    method: config.method,
                    beta: r.beta,
                    lolp: l.lolp_lower,
                    eens: Some(r.eens),
                    evaluations: l.opf_count + r.opf_evaluations,
                    seconds: 0.0,
                };
            } else {
                report.insert("eens".into(), Value::Null);
                report.insert("opf_evaluations".into(), json!(l.opf_count));
                summary = SummaryRow {
                    method: config.method,
                    beta: None,
                    lolp: l.lolp_lower,
                    eens: None,
                    evaluations: l.opf_count,
                    seconds: 0.0,
                };
            }
            ledger = Some(l);
        }
        Method::Se => {
            let out = se_enumerate(&engine, config.max_level)?;
            let r = out.report;
            report.insert("lolp".into(), json!(r.lolp));
            report.insert("eens".into(), json!(r.eens));
            report.insert("states".into(), json!(r.samples));
            report.insert("opf_evaluations".into(), json!(r.opf_evaluations));
            levels = out.levels;
            summary = SummaryRow {
                method: config.method,
                beta: None,
                lolp: r.lolp,
                eens: Some(r.eens),
                evaluations: r.opf_evaluations,
                seconds: 0.0,
            };
        }
        Method::Mcs => {
            let opts = McsOptions {
                max_samples: config.max_samples,
                trace_stride: config.trace_stride,
                ..McsOptions::with_beta(config.beta.unwrap_or(f64::MIN_POSITIVE))
            };
            let out = mcs(&engine, &opts, &mut rng)?;
            sampling_s = Some(out.report.elapsed);
            let r = out.report;
            report.insert("lolp".into(), json!(r.lolp));
            report.insert("eens".into(), json!(r.eens));
            report.insert("eens_stderr".into(), json!(r.eens_stderr));
            report.insert("beta".into(), json!(r.beta));
            report.insert("samples".into(), json!(r.samples));
            report.insert("opf_evaluations".into(), json!(r.opf_evaluations));
            samples = out.trace;
            summary = SummaryRow {
                method: config.method,
                beta: r.beta,
                lolp: r.lolp,
                eens: Some(r.eens),
                evaluations: r.opf_evaluations,
                seconds: 0.0,
            };
        }
    }

    let total_s = started.elapsed().as_secs_f64();
    let stats = engine.stats();
    let mut result = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "system": {
            "source": loaded.source,
            "name": name,
            "sha256": loaded.sha256,
            "components": n,
        },
        "rng": { "algorithm": RNG_NAME, "seed": config.seed },
        "report": Value::Object(report),
        "timing": {
            "total_s": total_s,
            "partition_s": partition_s,
            "sampling_s": sampling_s,
            "opf_lookups": stats.lookups,
            "opf_cache_entries": stats.cache_entries,
            "opf_screened": stats.screened,
            "opf_lp_solves": stats.lp_solves,
        },
    });
    if let Some(l) = &ledger {
        result["partition"] = partition_json(l);
    }
    let mut summary = summary;
    summary.seconds = total_s;
    Ok(RunArtifacts {
        result,
        summary,
        ledger,
        samples,
        levels,
    })
}

/// Runs and writes every artifact into `out`.
pub fn run(config: &RunConfig, out: &Path) -> Result<RunArtifacts> {
    let artifacts = execute(config)?;
    artifacts.write(out)?;
    Ok(artifacts)
}
