//! Metrics, sweeps and the comparison experiments.

mod attention;
mod experiments;
mod metrics;

pub use attention::{weight_attention, AttentionProfile};
pub use experiments::{
    allocate_bits, ber_sweep, bits_for_bpd, evaluate_magnitude, evaluate_phase, fine_tune_mismatch, gnuplot_script,
    online_tag, run_comparison, sweep_bpd, AllocationConfig, AllocationRow, AllocationTable, ArmResult, BerPoint,
    Comparison, ComparisonConfig, ModelTemplate, Suite, FINAL_SUFFIX,
};
pub use metrics::{
    mean_by_model, nmse, nmse_complex, phase_nmse, read_reports, save_reports, to_db, write_reports, MetricsReport,
    Nmse, NMSE_FLOOR_DB, REPORT_HEADER,
};

#[cfg(test)]
mod tests;
