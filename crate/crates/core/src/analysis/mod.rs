//! Trajectory descriptors, nondimensionalization and drag-coefficient
//! calibration.

mod calibrate;
mod circle;
mod optimize;
mod summary;

pub use calibrate::{predict, residual_table, synthesize};

pub use calibrate::{
    calibrate, evaluate, CalibrationOptions, CalibrationResult, Fidelity, Measurement, MeasurementResidual,
};
pub use circle::{fit_circle, CircleFit};
pub use optimize::{nelder_mead, NelderMeadOptions, NelderMeadResult};
pub use summary::{
    nondimensionalize, position_at, summarize_steady, summarize_switching, NondimScale, SteadyStateSummary,
    SwitchingSummary,
};

use nalgebra::Vector2;

use crate::rod::Vec3;

pub type Vec2 = Vector2<f64>;

/// Horizontal projection `(x, -z)`; counter-clockwise in this plane is a
/// positive rotation about world `+y`.
pub fn planar(v: &Vec3) -> Vec2 {
    Vec2::new(v.x, -v.z)
}

/// Horizontal unit direction the robot faces (head tip forward), if the
/// head axis is not vertical.
pub fn planar_forward(axis: &Vec3) -> Option<Vec2> {
    let f = -planar(axis);
    let n = f.norm();
    (n > 1e-9).then(|| f / n)
}

/// Counter-clockwise angle of `v` from the planar `x` axis.
pub fn planar_angle(v: &Vec2) -> f64 {
    v.y.atan2(v.x)
}
