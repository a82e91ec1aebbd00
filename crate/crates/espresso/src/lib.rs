//! Espresso: a desk-scale microarray experiment management toolkit.
//!
//! The crate covers the full two-color cDNA microarray workflow:
//!
//! - [`descriptor`] — the self-describing experiment-description record
//!   format (`.expd` files) with query and structural diff, the backbone of
//!   change management between experiment runs.
//! - [`design`] — replicated, randomized array layouts: source clones are
//!   permuted into independent printing-plate sets and placed on one or more
//!   array types, with verification and plate-map export.
//! - [`quant`] — spot quantification: Mann-Whitney spot/background
//!   segmentation, background-corrected two-channel ratios, quality flags,
//!   and per-array ratio calibration.
//! - [`callsig`] — replicate assembly across dye-swapped hybridizations and
//!   the exact binomial sign test that classifies each clone as up, down, or
//!   unchanged.
//! - [`rulemine`] — a relational rule miner over expression calls and
//!   functional categories: closed-world negatives, hierarchy saturation,
//!   and exhaustive-with-pruning search scored by support and confidence.
//! - [`pipeline`] / [`report`] — a deterministic end-to-end runner driven by
//!   a manifest written in the descriptor format, plus human-readable
//!   summaries.
//!
//! Every stage is a pure function over immutable values; all randomness
//! flows from a single explicit seed, so a run is reproducible byte for
//! byte. See the `examples/` directory for one runnable example per module,
//! and the `espresso` binary for the command-line pipeline.

pub mod callsig;
pub mod descriptor;
pub mod design;
pub mod pipeline;
pub mod quant;
pub mod report;
pub mod rulemine;
mod tsv;

pub use callsig::{
    assemble_replicates, binomial_upper_tail, classify_all, classify_clone, CallClass,
    ComparisonDataset, ComparisonPairing, ExpressionCall,
};
pub use descriptor::{
    diff_descriptions, parse_description, query_records, serialize_description, DiffEntry,
    ExperimentDescription, Record, Selector, Value,
};
pub use design::{
    export_array_maps, export_plate_maps, generate_layout, verify_layout, ArrayMapTable,
    LayoutDesign, PrintingConfiguration,
};
pub use pipeline::{run_pipeline, PipelineError, RunManifest, Stage};
pub use quant::{
    calibrate_array, mann_whitney, measure_spot, segment_spot, Channel, GridCell,
    SpotMeasurement,
};
pub use rulemine::{
    build_factbase, enumerate_hypotheses, evaluate_rule, mine_rules, Expression, FactBase,
    Literal, Rule, RuleStats,
};
