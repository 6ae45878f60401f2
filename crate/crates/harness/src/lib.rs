//! Experiment harness around `nlslab-core`: TOML configuration, single runs,
//! lemma verification, parameter sweeps, CSV/Markdown artifacts and the
//! `nlslab` command line.

// `!(x > 0.0)` deliberately rejects NaN alongside nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod lemmas;
pub mod outputs;
pub mod run;
pub mod sweep;

pub use config::{load_config, parse_config, ExperimentConfig, LoadedConfig};
pub use lemmas::{verify_lemmas, LemmaStatus, LemmaSuite};
pub use outputs::emit_outputs;
pub use run::{compute_record, run_experiment, Check, CheckStatus, RunRecord};
pub use sweep::{load_sweep, run_sweep, SweepSpec};
