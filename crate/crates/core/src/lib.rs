//! Quantum circuits as relational queries.
//!
//! A circuit is compiled into a sequence of SQL statements over sparse
//! state tables `(s, r, i)` and run on an embedded engine. A dense
//! state-vector simulator serves as the reference for correctness checks.

pub mod backend;
pub mod bench;
pub mod circuit;
pub mod codegen;
pub mod error;
pub mod executor;
pub mod families;
pub mod oracle;
pub mod parallel;
pub mod relation;
pub mod state;

pub use backend::{BackendAdapter, BackendKind, Capabilities, Location};
pub use circuit::{Circuit, GateInstance, GateKind};
pub use codegen::{emit_sql, translate_circuit, CodegenOptions, SqlPlan};
pub use error::{Error, Result};
pub use executor::{run_plan, sample_counts, simulate_oracle, simulate_plan, Mode, RunMetrics, RunOutput};
pub use families::{generate_family, CircuitFamily, FamilySpec, ParamValue};
pub use oracle::{compare_states, simulate_dense, DenseState};
pub use parallel::ExecPolicy;
pub use relation::GateRelation;
pub use state::{Probability, StateRow};
