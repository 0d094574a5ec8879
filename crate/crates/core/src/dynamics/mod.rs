//! Log-scale dynamics of the blow-up family: projection coefficients,
//! inactive-set moments, the projected ODE and its diagnostics.

pub mod balls;
pub mod checks;
pub mod record;
pub mod sampling;

pub use record::{
    annulus_sup, compute_b, compute_record, compute_series, moment_matrix, IntegrationSpec, MomentMethod,
    MomentRecord, ScaleGrid, ScaleSeries, SeriesOptions, DEFAULT_SAMPLES, DEFAULT_SEED,
};
pub use checks::{
    absorption_check, convergence_report, dyadic_check, lyapunov_residual, moment_identity_residual, ode_crosscheck,
    ode_crosscheck_with,
    ode_rhs, record_invariants, AbsorptionReport, DissipationReport, DyadicRecord, DyadicReport, LyapunovInterval,
    OdeInterval, RecordInvariants,
};
