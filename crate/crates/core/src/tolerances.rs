//! Numerical tolerances shared across the crate.
//!
//! Every threshold used by a check or an acceptance criterion lives here so
//! that it is pinned in exactly one place.

/// Default relative tolerance for deciding that an action vector sits on the
/// Bohr-Sommerfeld lattice.
pub const BS_LABEL_REL_TOL: f64 = 1e-9;

/// Phases carried by shifting operators are compared at this absolute level.
pub const PHASE_TOL: f64 = 1e-12;

/// Relative size below which a section counts as vanishing near the grid
/// boundary.
pub const SUPPORT_TOL: f64 = 1e-10;

/// Dirac residuals below this level are treated as exact (rounding only).
pub const DIRAC_EXACT_FLOOR: f64 = 1e-12;

/// Minimum observed convergence order of the Dirac residual under doubling of
/// the action grid.
pub const DIRAC_MIN_ORDER: f64 = 3.5;

/// Covariant constancy of basis sections on their Bohr-Sommerfeld slice.
pub const COVARIANT_CONSTANCY_TOL: f64 = 1e-10;

/// Branch independence of the time-`h` shift flow.
pub const SINGLE_VALUED_TOL: f64 = 1e-12;

/// Minimum discrepancy the multivalued time-`h/2` flow must show.
pub const MULTIVALUED_CONTROL_MIN: f64 = 0.1;

/// Residual allowed when rounding the winding of the rotation angle.
pub const MONODROMY_RESIDUAL_TOL: f64 = 0.05;

/// Relative accuracy of pendulum actions, rotation angle and period.
pub const PENDULUM_REL_TOL: f64 = 1e-9;

/// Relative accuracy of the Bohr-Sommerfeld condition at spectrum points.
pub const SPECTRUM_REL_TOL: f64 = 1e-8;

/// Absolute tolerance used when classifying energy-momentum values.
pub const CLASSIFY_TOL: f64 = 1e-12;

/// Residual allowed for turning points, scaled by the size of the cubic.
pub const TURNING_POINT_TOL: f64 = 1e-13;

/// Quadrature against the trajectory integrator.
pub const QUADRATURE_VS_ODE_TOL: f64 = 1e-6;

/// Energy drift allowed over one period of the trajectory integrator.
pub const ENERGY_DRIFT_TOL: f64 = 1e-9;
