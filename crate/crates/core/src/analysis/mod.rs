//! Error-bound diagnostic, significance testing and cross-seed aggregation.

mod aggregate;
mod bound;
mod special;
mod welch;

pub use aggregate::{
    aggregate, curve_from_metrics, mean_std, read_csv, resample_curve, run_means, welch_rows, write_summary, CsvTable,
    Curve, SummaryRow, EVAL_METRICS,
};
pub use bound::{estimate_span_g, theorem_bound, BoundInputs, BoundTerms};
pub use special::{ln_gamma, regularized_incomplete_beta, student_t_sf};
pub use welch::{welch_t, WelchResult};
