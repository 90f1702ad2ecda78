//! Pulse-based control of monotone systems through the dominant Koopman
//! eigenfunction.
//!
//! The flow map and orders live in [`dynamics`], the eigenfunction `s1` and
//! its isostables in [`spectral`]. [`pulse_design`] solves the fixed-pulse
//! static programs, [`uncertainty`] bounds convergence over a parameter
//! interval and [`regulator`] keeps a bistable system near its saddle.

pub mod contour;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod ode;
pub mod pulse_design;
pub mod regulator;
pub mod spectral;
pub mod uncertainty;

pub use contour::{GridField, Point, Polyline};
pub use dynamics::{
    check_kamke_muller, integrate, integrate_from, linear_model, pulse_signal, toggle, toggle_param_box,
    toggle_switch_model, AxisBox, ConstantInput, InputSignal, ModelConfig, MonotonicityReport, OrthantOrder,
    PulseInput, TerminalStatus, Trajectory, VectorFieldModel, ZeroInput,
};
pub use error::{Error, OdeError, Result};
pub use ode::IntegratorOptions;
pub use pulse_design::{
    closed_loop_policy, convergence_time, grad_r_fd, solve_static_program, ActiveConstraint, PulseControlEvaluation,
    PulseDesign, PulseProblem, RField, StaticProgramOptions,
};
pub use regulator::{
    event_regulate, nearest_anchor, precompute_boundary_pulses, AnchorOptions, AnchorTable, BoxConstraint, EventKind,
    EventLog, RegulationRun,
};
pub use spectral::{
    dominant_spectrum, find_equilibria, isostable_levelset, sample_s1, Eigenfunction, EigenfunctionSample, Equilibrium,
    LaplaceOptions, S1Status, SpectralData, ToggleStates,
};
pub use uncertainty::{
    admissible_set, levelset_intersection_check, min_time_to_levelset, t_fields, value_bounds, verify_membership,
    IntersectionReport, LevelSetTarget, UncertaintyEnvelope, ValueBounds,
};
