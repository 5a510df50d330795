use std::f64::consts::PI;

use super::{fit_circle, planar, planar_angle, planar_forward, Vec2};
use crate::config::RobotConfig;
use crate::dynamics::{Trajectory, TrajectorySample};
use crate::error::AnalysisError;
use crate::rod::wrap_to_pi;

/// Steady circling descriptors of a constant-speed run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateSummary {
    /// Head spin rate [rad/s].
    pub omega_h: f64,
    /// Tail-bundle spin rate [rad/s].
    pub omega_t: f64,
    /// Rate of the sweep about the vertical axis, positive counter-clockwise
    /// seen from above [rad/s].
    pub omega_yr: f64,
    /// Radius of the fitted head path [m].
    pub r_yr: f64,
    /// Unsigned angle between the robot's forward axis and the path tangent,
    /// in `(0, pi)`.
    pub theta_heading: f64,
    /// Signed angle from the path tangent to the forward axis.
    pub heading_offset: f64,
    pub circle_center: Vec2,
    /// RMS radial deviation of the head path from the fitted circle [m].
    pub fit_residual: f64,
}

impl SteadyStateSummary {
    /// Path speed of the head [m/s].
    pub fn speed(&self) -> f64 {
        self.omega_yr.abs() * self.r_yr
    }
}

/// Net progress of a square-wave run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingSummary {
    /// Mean unsigned angle between the forward axis and the net direction.
    pub theta_heading: f64,
    /// Net straight-line speed [m/s].
    pub v: f64,
    /// Unit direction of the net displacement.
    pub direction: Vec2,
    /// Full period `2 T` of the square wave [s].
    pub period: f64,
}

/// Intrinsic elasto-viscous time scale of a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NondimScale {
    /// `mu0 l^4 / EI` [s].
    pub time_scale: f64,
}

impl NondimScale {
    pub fn omega_bar(&self, omega: f64) -> f64 {
        omega * self.time_scale
    }

    pub fn t_bar(&self, t: f64) -> f64 {
        t / self.time_scale
    }

    pub fn omega(&self, omega_bar: f64) -> f64 {
        omega_bar / self.time_scale
    }

    pub fn time(&self, t_bar: f64) -> f64 {
        t_bar * self.time_scale
    }
}

pub fn nondimensionalize(config: &RobotConfig) -> NondimScale {
    NondimScale {
        time_scale: config.time_scale(),
    }
}

/// Planar head position at time `t`, linearly interpolated between samples.
pub fn position_at(traj: &Trajectory, t: f64) -> Option<Vec2> {
    let s = &traj.samples;
    let first = s.first()?;
    let last = s.last()?;
    let tol = 1e-9 * (1.0 + last.t.abs());
    if t < first.t - tol || t > last.t + tol {
        return None;
    }
    let k = s.partition_point(|x| x.t <= t);
    if k == 0 {
        return Some(planar(&first.head));
    }
    if k >= s.len() {
        return Some(planar(&last.head));
    }
    let (a, b) = (&s[k - 1], &s[k]);
    let w = (t - a.t) / (b.t - a.t);
    Some(planar(&a.head) * (1.0 - w) + planar(&b.head) * w)
}

fn window_samples(traj: &Trajectory, window: Option<(f64, f64)>) -> Vec<&TrajectorySample> {
    let (t0, t1) = window.unwrap_or_else(|| {
        let d = traj.duration();
        (0.25 * d, d)
    });
    traj.samples
        .iter()
        .filter(|s| s.t >= t0 - 1e-12 && s.t <= t1 + 1e-12)
        .collect()
}

/// Circle-fits the horizontal head path inside `window` (default: the last
/// 75% of the run) and extracts rates and heading.
pub fn summarize_steady(
    traj: &Trajectory,
    window: Option<(f64, f64)>,
) -> Result<SteadyStateSummary, AnalysisError> {
    let samples = window_samples(traj, window);
    if samples.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            got: samples.len(),
        });
    }
    let pts: Vec<Vec2> = samples.iter().map(|s| planar(&s.head)).collect();
    let fit = fit_circle(&pts)?;
    let limit = 0.05 * fit.radius;
    if fit.residual > limit {
        return Err(AnalysisError::NotSteady {
            residual: fit.residual,
            limit,
        });
    }

    let first = samples[0];
    let last = samples[samples.len() - 1];
    let elapsed = last.t - first.t;
    let mut swept = 0.0;
    let mut prev = planar_angle(&(pts[0] - fit.center));
    for p in &pts[1..] {
        let a = planar_angle(&(p - fit.center));
        swept += wrap_to_pi(a - prev);
        prev = a;
    }
    let omega_yr = swept / elapsed;
    let turn = omega_yr.signum();

    let mut offset = 0.0;
    let mut unsigned = 0.0;
    let mut counted = 0usize;
    for (s, p) in samples.iter().zip(&pts) {
        let Some(f) = planar_forward(&s.axis) else {
            continue;
        };
        let r = p - fit.center;
        let tangent = Vec2::new(-r.y, r.x) * turn / r.norm();
        let beta = wrap_to_pi(planar_angle(&f) - planar_angle(&tangent));
        offset += beta;
        unsigned += beta.abs();
        counted += 1;
    }
    if counted == 0 {
        return Err(AnalysisError::Invalid(
            "head axis vertical throughout the window".into(),
        ));
    }
    let theta_heading = (unsigned / counted as f64).clamp(f64::MIN_POSITIVE, PI - f64::EPSILON);

    Ok(SteadyStateSummary {
        omega_h: (last.spin_h - first.spin_h) / elapsed,
        omega_t: (last.spin_t - first.spin_t) / elapsed,
        omega_yr,
        r_yr: fit.radius,
        theta_heading,
        heading_offset: offset / counted as f64,
        circle_center: fit.center,
        fit_residual: fit.residual,
    })
}

/// Net straight-line motion of a run driven by a symmetric square wave of
/// half period `half_period` starting at `t = 0`. The first period is
/// treated as transient.
pub fn summarize_switching(traj: &Trajectory, half_period: f64) -> Result<SwitchingSummary, AnalysisError> {
    if !(half_period > 0.0) {
        return Err(AnalysisError::Invalid("half period must be positive".into()));
    }
    let period = 2.0 * half_period;
    let periods = (traj.duration() / period + 1e-9).floor() as usize;
    if periods < 3 {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            got: periods,
        });
    }
    let marks: Vec<Vec2> = (1..=periods)
        .map(|k| position_at(traj, k as f64 * period))
        .collect::<Option<_>>()
        .ok_or_else(|| AnalysisError::Invalid("trajectory has no samples".into()))?;
    let steps: Vec<Vec2> = marks.windows(2).map(|w| w[1] - w[0]).collect();
    let net = marks[marks.len() - 1] - marks[0];
    let mean = net / steps.len() as f64;
    if mean.norm() == 0.0 {
        return Err(AnalysisError::NotPeriodic {
            scatter: f64::INFINITY,
        });
    }
    let scatter = steps
        .iter()
        .map(|d| (d - mean).norm() / mean.norm())
        .fold(0.0, f64::max);
    if scatter > 0.2 {
        return Err(AnalysisError::NotPeriodic { scatter });
    }
    let direction = net / net.norm();
    let (t0, t1) = (period, periods as f64 * period);
    let angles: Vec<f64> = traj
        .samples
        .iter()
        .filter(|s| s.t >= t0 && s.t <= t1)
        .filter_map(|s| planar_forward(&s.axis))
        .map(|f| f.dot(&direction).clamp(-1.0, 1.0).acos())
        .collect();
    let theta_heading = if angles.is_empty() {
        f64::NAN
    } else {
        angles.iter().sum::<f64>() / angles.len() as f64
    };
    Ok(SwitchingSummary {
        theta_heading,
        v: net.norm() / (t1 - t0),
        direction,
        period,
    })
}
