//! Column layouts of every CSV the lab writes, keyed by file stem. Tables
//! built from a trajectory record start with `step, t` and continue with
//! the record's own columns; state dumps hold `a, w_1, …, w_d`.

/// `run-sgd`: `summary.csv`.
pub const SGD_SUMMARY: &[&str] = &["dynamics", "initial_risk", "final_risk", "min_risk", "final_max_abs_a", "rows"];

/// `run-coupled`: `summary.csv`, one row per (gap column, ε).
pub const COUPLED_SUMMARY: &[&str] = &["column", "eps", "median_sup_gap", "fitted_slope", "ci_low", "ci_high"];

/// `gap-scaling`: `reference.csv`.
pub const GAP_REFERENCE: &[&str] = &["t", "raw", "corrected"];
/// `gap-scaling`: `gap_N{N}_seed{s}.csv`.
pub const GAP_TRACE: &[&str] = &["t", "risk", "reference_risk", "gap"];
/// `gap-scaling`: `summary.csv`, one row per `N`.
pub const GAP_SUMMARY: &[&str] = &["N", "median_gap", "fitted_slope", "ci_low", "ci_high"];

/// `gaussians-demo`: `summary.csv`.
pub const DEMO_SUMMARY: &[&str] = &["initial_risk", "risk_at_T", "terminal_risk", "best_risk", "reduction", "plateau"];

/// `kernel-crossover`: `crossover.csv`.
pub const CROSSOVER: &[&str] = &["alpha", "t", "gap_l2", "risk_alpha", "risk_linearized"];
/// `kernel-crossover`: `summary.csv`, one row per `α`.
pub const CROSSOVER_SUMMARY: &[&str] = &[
    "alpha",
    "sup_gap",
    "sup_gap_half",
    "fitted_slope",
    "ci_low",
    "ci_high",
    "initial_risk",
    "min_eigenvalue",
    "y_rms",
];

/// `fokker-planck-check`: `fp_N{N}_seed{s}.csv`.
pub const FP_TRACE: &[&str] = &["t", "l1", "grid_variance", "particle_variance", "grid_mass"];
/// `fokker-planck-check`: `ou.csv`.
pub const FP_OU: &[&str] = &["t", "grid_variance", "particle_variance", "target"];
/// `fokker-planck-check`: `ou_summary.csv`.
pub const FP_OU_SUMMARY: &[&str] =
    &["grid_variance", "particle_variance", "target", "grid_rel_err", "particle_rel_err"];
/// `fokker-planck-check`: `summary.csv`, one row per `N`.
pub const FP_SUMMARY: &[&str] = &["N", "mean_terminal_l1", "ratio_to_previous", "fitted_slope", "ci_low", "ci_high"];

/// `krr-check`: `krr.csv`; training points come first.
pub const KRR: &[&str] = &["z_id", "prediction", "krr_value", "abs_err"];
/// `krr-check`: `summary.csv`.
pub const KRR_SUMMARY: &[&str] = &["n", "min_eigenvalue", "method", "t_end", "max_abs_err", "max_train_rel_residual"];
