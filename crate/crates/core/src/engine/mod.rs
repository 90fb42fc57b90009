//! Min-max engine: mountain pass paths, string relaxation, width estimates,
//! nice-class certificates, saddle refinement and drift diagnostics.

mod drift;
mod nice;
mod path;
mod saddle;
mod string;
mod width;

pub use drift::{drift_diagnostic, DriftClass, DriftReport, DriftRow};
pub use nice::{check_nice_class, NiceClassReport};
pub use path::{interpolate, refine_peak, reparameterize, sphere_path, string_distance};
pub use saddle::{hessian_index, refine_saddle, HessianIndex, SaddleCandidate, SaddleConfig};
pub use string::{relax_path, NodeDiagnostics, RelaxSchedule, SweepRecord, WidthEstimate};
pub use width::{
    estimate_width, initial_paths, select_monotonicity_radii, width_sweep, EngineConfig, WidthRow,
    WidthRun, WidthSweep,
};
