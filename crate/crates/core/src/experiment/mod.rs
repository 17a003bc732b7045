//! Experiment specs, family runners, result tables and the synthetic
//! dataset generator.

mod families;
mod runner;
mod spec;
mod synth;
mod table;

pub use families::{efficiency_models, key_ablation_rows, qk_assignments, reference_mm_hsd, QkAssignment};
pub use runner::{
    load_report, output_root, run_experiment, run_experiment_in, ConfigRecord, ExperimentError, RunOutput,
    RunReport, OUTPUT_ENV,
};
pub use spec::{
    default_decrease_rows, parse_json, DimsPreset, DimsSpec, ExperimentSpec, Family, SpecError, SubsetSpec,
    DEFAULT_DECREASE_ROWS,
};
pub use synth::{gen_synthetic, write_synthetic, SynthSpec};
pub use table::{Cell, Column, ColumnKind, Table};
