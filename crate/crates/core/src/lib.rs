//! Composite power-system reliability assessment by partitioning the
//! contingency state space into failed and normal Boolean sub-lattices.
//!
//! The crate is organised bottom-up:
//!
//! * [`system`]: network data model, component reliability, fixtures.
//! * [`lattice`]: states, intervals of states, splitting and sampling.
//! * [`opf`]: DC optimal power flow load shedding and the structure function.
//! * [`partition`]: the dichotomy engine that grows the failed-lattice set.
//! * [`assessment`]: LOLP/EENS from a partition, plus enumeration and
//!   crude Monte Carlo baselines.
//! * [`report`]: run configuration, result files and trace CSVs used by the
//!   `assess` binary.

pub mod assessment;
pub mod error;
pub mod lattice;
pub mod opf;
pub mod partition;
pub mod report;
pub mod system;

pub use assessment::{
    fmcs_eens, lolp_from_partition, mcs, se_enumerate, FmcsOptions, IndexReport, McsOptions,
    SampleAccumulator, SampleTraceRow,
};
pub use error::{Error, Result};
pub use lattice::{classify, Lattice, LatticeClass, State};
pub use opf::{OpfEngine, OpfResult, OpfStatus, StructureValue, SHED_EPSILON_MW};
pub use partition::{
    generation_weakness, importance, run_dichotomy, select_component, transmission_weakness,
    DichotomyOptions, FailedLattice, ImportanceIndex, PartitionLedger, StopCriteria, TraceRow,
};
pub use system::{Bus, Component, ComponentKind, Generator, Line, SystemModel};
