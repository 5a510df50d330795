//! Open-loop planning of binary (`+omega_H` / `-omega_H`) motor schedules
//! that steer the robot along straight lines, circles and polygons.
//!
//! Under constant motor speed the head circles at rate `omega_yr` on a
//! circle of radius `R_yr`, with the body's forward axis rotated from the
//! path tangent by a fixed signed offset `beta`. Reversing the motor
//! mirrors all three. Plans are composed from such arcs, treating the body
//! orientation as continuous across switches.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{summarize_steady, SteadyStateSummary, Vec2};
use crate::config::RobotConfig;
use crate::dynamics::{simulate, ActuationSchedule, SimOptions};
use crate::error::{AnalysisError, PlanError};
use crate::rod::wrap_to_pi;

/// Steady turning behaviour at motor speed `+omega_H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitiveMap {
    /// Motor speed magnitude [rad/s].
    pub omega_motor: f64,
    /// `omega_motor` in units of the inverse intrinsic time scale.
    pub omega_bar: f64,
    /// Turning rate at `+omega_motor`, counter-clockwise positive [rad/s].
    pub omega_yr: f64,
    pub r_yr: f64,
    pub theta_heading: f64,
    /// Signed angle from the path tangent to the forward axis at
    /// `+omega_motor`.
    pub heading_offset: f64,
    pub tail_length: f64,
}

impl MotionPrimitiveMap {
    /// Builds the map from a steady summary of a run at motor speed `omega`,
    /// which may be negative.
    pub fn from_summary(
        omega: f64,
        summary: &SteadyStateSummary,
        config: &RobotConfig,
    ) -> Result<Self, PlanError> {
        if omega == 0.0 || !omega.is_finite() {
            return Err(PlanError::Degenerate("motor speed must be non-zero".into()));
        }
        if !(summary.fit_residual < 0.05 * summary.r_yr) {
            return Err(AnalysisError::NotSteady {
                residual: summary.fit_residual,
                limit: 0.05 * summary.r_yr,
            }
            .into());
        }
        if summary.omega_yr == 0.0 || !(summary.r_yr > 0.0) {
            return Err(PlanError::Degenerate("robot does not turn".into()));
        }
        let s = omega.signum();
        Ok(Self {
            omega_motor: omega.abs(),
            omega_bar: omega.abs() * config.time_scale(),
            omega_yr: s * summary.omega_yr,
            r_yr: summary.r_yr,
            theta_heading: summary.theta_heading,
            heading_offset: s * summary.heading_offset,
            tail_length: config.tail_length,
        })
    }

    /// Time to turn the body by `angle` (either sign) [s].
    pub fn turn_duration(&self, angle: f64) -> f64 {
        angle.abs() / self.omega_yr.abs()
    }

    /// Motor sign whose turning direction matches the sign of `angle`.
    pub fn turn_sign(&self, angle: f64) -> f64 {
        angle.signum() * self.omega_yr.signum()
    }

    /// Chord of an arc of duration `t`.
    pub fn chord(&self, t: f64) -> f64 {
        2.0 * self.r_yr * (0.5 * self.omega_yr.abs() * t).min(PI / 2.0).sin()
    }

    /// Half period giving a chord of one tail length, or a quarter circle
    /// if that chord does not fit.
    pub fn default_half_period(&self) -> f64 {
        let ratio = self.tail_length / (2.0 * self.r_yr);
        let arc = if ratio < 1.0 / 2f64.sqrt() {
            2.0 * ratio.asin()
        } else {
            PI / 2.0
        };
        arc / self.omega_yr.abs()
    }

    /// Advances `pose` by running at motor sign `sign` for `t` seconds.
    pub fn advance(&self, pose: Pose, sign: f64, t: f64) -> Pose {
        let rate = sign * self.omega_yr;
        let tangent = pose.yaw - sign * self.heading_offset;
        let dir = tangent + 0.5 * rate * t;
        let chord = 2.0 * self.r_yr * (0.5 * rate * t).sin().abs();
        Pose {
            p: pose.p + chord * Vec2::new(dir.cos(), dir.sin()),
            yaw: pose.yaw + rate * t,
        }
    }

    /// Poses at every segment boundary of a `(sign, duration)` sequence.
    pub fn rollout(&self, start: Pose, segments: &[(f64, f64)]) -> Vec<Pose> {
        let mut out = vec![start];
        let mut pose = start;
        for &(s, t) in segments {
            pose = self.advance(pose, s, t);
            out.push(pose);
        }
        out
    }
}

/// Planar head position and forward-axis angle (counter-clockwise from `x`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub p: Vec2,
    pub yaw: f64,
}

impl Pose {
    pub fn origin(yaw: f64) -> Self {
        Self {
            p: Vec2::zeros(),
            yaw,
        }
    }
}

/// Runs the robot at constant `omega_h` for 50 intrinsic time scales and
/// extracts its motion primitive.
pub fn characterize(config: &RobotConfig, omega_h: f64) -> Result<MotionPrimitiveMap, PlanError> {
    characterize_for(config, omega_h, 50.0 * config.time_scale())
}

pub fn characterize_for(
    config: &RobotConfig,
    omega_h: f64,
    duration: f64,
) -> Result<MotionPrimitiveMap, PlanError> {
    if omega_h == 0.0 || !omega_h.is_finite() {
        return Err(PlanError::Degenerate("motor speed must be non-zero".into()));
    }
    let schedule = ActuationSchedule::constant(omega_h, duration).map_err(AnalysisError::from)?;
    let opts = SimOptions {
        output_stride: duration / 2000.0,
        ..SimOptions::default()
    };
    let traj = simulate(config, &schedule, &opts).map_err(AnalysisError::from)?;
    let summary = summarize_steady(&traj, None)?;
    MotionPrimitiveMap::from_summary(omega_h, &summary, config)
}

/// Path to follow, lengths in metres. Paths start at the robot's initial
/// head position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    Line {
        length_m: f64,
        /// Direction of travel, counter-clockwise from planar `x` [rad].
        #[serde(default)]
        direction_rad: f64,
        #[serde(default)]
        half_period_s: Option<f64>,
    },
    Circle {
        radius_m: f64,
        turns: f64,
        #[serde(default)]
        clockwise: bool,
        /// Initial tangent direction [rad].
        #[serde(default)]
        direction_rad: f64,
        /// Arc angle of the longer stroke of each cycle [rad].
        #[serde(default)]
        arc_angle_rad: Option<f64>,
    },
    Polygon {
        vertices_m: Vec<[f64; 2]>,
        #[serde(default)]
        closed: bool,
        #[serde(default)]
        half_period_s: Option<f64>,
    },
}

impl PathSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, PlanError> {
        toml::from_str(text).map_err(|e| PlanError::Degenerate(format!("path spec: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PlanError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PlanError::Degenerate(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("path spec serializes")
    }

    /// Mirror image across the planar `x` axis.
    pub fn mirrored(&self) -> Self {
        match self.clone() {
            PathSpec::Line {
                length_m,
                direction_rad,
                half_period_s,
            } => PathSpec::Line {
                length_m,
                direction_rad: -direction_rad,
                half_period_s,
            },
            PathSpec::Circle {
                radius_m,
                turns,
                clockwise,
                direction_rad,
                arc_angle_rad,
            } => PathSpec::Circle {
                radius_m,
                turns,
                clockwise: !clockwise,
                direction_rad: -direction_rad,
                arc_angle_rad,
            },
            PathSpec::Polygon {
                vertices_m,
                closed,
                half_period_s,
            } => PathSpec::Polygon {
                vertices_m: vertices_m.iter().map(|v| [v[0], -v[1]]).collect(),
                closed,
                half_period_s,
            },
        }
    }

    pub fn plan(&self, map: &MotionPrimitiveMap) -> Result<Plan, PlanError> {
        match self {
            PathSpec::Line {
                length_m,
                direction_rad,
                half_period_s,
            } => {
                let t = half_period_s.unwrap_or_else(|| map.default_half_period());
                let mut plan = plan_line(map, *length_m, t)?;
                plan.rotate(*direction_rad);
                Ok(plan)
            }
            PathSpec::Circle {
                radius_m,
                turns,
                clockwise,
                direction_rad,
                arc_angle_rad,
            } => {
                let arc = arc_angle_rad.unwrap_or(map.omega_yr.abs() * map.default_half_period());
                let sense = if *clockwise { -1.0 } else { 1.0 };
                let mut plan = plan_circle(map, *radius_m, sense * turns, arc)?;
                plan.rotate(*direction_rad);
                Ok(plan)
            }
            PathSpec::Polygon {
                vertices_m,
                closed,
                half_period_s,
            } => {
                let v: Vec<Vec2> = vertices_m.iter().map(|p| Vec2::new(p[0], p[1])).collect();
                let t = half_period_s.unwrap_or_else(|| map.default_half_period());
                plan_polygon(map, &v, *closed, t)
            }
        }
    }
}

/// A planned schedule with the start orientation it assumes and the
/// predicted path.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub schedule: ActuationSchedule,
    /// `(motor sign, duration)` of every arc and turn, before neighbours of
    /// equal sign are merged into the schedule.
    pub segments: Vec<(f64, f64)>,
    /// Forward-axis angle the robot must start with [rad].
    pub initial_yaw: f64,
    /// Predicted `(t, head position)` at every switch, relative to the
    /// start position.
    pub predicted: Vec<(f64, Vec2)>,
    /// Points of the ideal path, relative to the start position, with the
    /// time the plan expects to reach each: line and polygon end points and
    /// every circle cycle boundary.
    pub checkpoints: Vec<(f64, Vec2)>,
    /// Centre of the target circle, for circle plans.
    pub circle_center: Option<Vec2>,
}

impl Plan {
    fn build(
        map: &MotionPrimitiveMap,
        segments: &[(f64, f64)],
        initial_yaw: f64,
        checkpoints: Vec<(usize, Vec2)>,
        circle_center: Option<Vec2>,
    ) -> Result<Self, PlanError> {
        let poses = map.rollout(Pose::origin(initial_yaw), segments);
        let mut switches: Vec<(f64, f64)> = Vec::new();
        let mut predicted = vec![(0.0, poses[0].p)];
        let mut t = 0.0;
        let mut times = vec![0.0];
        for (&(s, d), pose) in segments.iter().zip(&poses[1..]) {
            if !(d > 0.0) {
                times.push(t);
                continue;
            }
            let omega = s * map.omega_motor;
            if switches.last().is_none_or(|&(_, w)| w != omega) {
                switches.push((t, omega));
            }
            t += d;
            times.push(t);
            predicted.push((t, pose.p));
        }
        let checkpoints = checkpoints.into_iter().map(|(i, p)| (times[i], p)).collect();
        let schedule =
            ActuationSchedule::new(switches, t).map_err(|e| PlanError::Degenerate(e.to_string()))?;
        Ok(Self {
            schedule,
            segments: segments.to_vec(),
            initial_yaw,
            predicted,
            checkpoints,
            circle_center,
        })
    }

    /// Rotates the whole plan about the start point.
    pub fn rotate(&mut self, angle: f64) {
        let (s, c) = angle.sin_cos();
        let r = |p: &Vec2| Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y);
        self.initial_yaw = wrap_to_pi(self.initial_yaw + angle);
        for (_, p) in &mut self.predicted {
            *p = r(p);
        }
        for (_, p) in &mut self.checkpoints {
            *p = r(p);
        }
        if let Some(c) = &mut self.circle_center {
            *c = r(c);
        }
    }

    /// Options that start a simulation in the orientation this plan assumes.
    pub fn sim_options(&self, output_stride: f64) -> SimOptions {
        SimOptions {
            output_stride,
            initial_yaw: self.initial_yaw,
            ..SimOptions::default()
        }
    }

    /// Predicted head positions at every switch as `t_s,x_m,y_m` rows.
    pub fn predicted_csv(&self) -> String {
        let mut s = String::from("t_s,x_m,y_m\n");
        for (t, p) in &self.predicted {
            s.push_str(&format!("{t:.9e},{:.9e},{:.9e}\n", p.x, p.y));
        }
        s
    }
}

/// Segments of one straight leg: half arc, `n` full arcs of alternating
/// sign, closing half arc. The body ends with the orientation it started
/// with.
fn line_segments(n: usize, half_period: f64, lead: f64) -> Vec<(f64, f64)> {
    let mut segs = Vec::with_capacity(n + 2);
    segs.push((lead, 0.5 * half_period));
    let mut s = -lead;
    for _ in 0..n {
        segs.push((s, half_period));
        s = -s;
    }
    segs.push((s, 0.5 * half_period));
    segs
}

/// Net displacement of a leg in the frame of the starting body axis.
fn leg_displacement(map: &MotionPrimitiveMap, n: usize, half_period: f64, lead: f64) -> Vec2 {
    let poses = map.rollout(Pose::origin(0.0), &line_segments(n, half_period, lead));
    poses[poses.len() - 1].p
}

fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo <= tol * hi.abs().max(1e-300) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// A straight leg of exactly `length`: the number of arcs comes from the
/// nominal half period, which is then shortened so the net advance matches.
struct Leg {
    n: usize,
    half_period: f64,
    /// Angle of the net displacement relative to the starting body axis.
    offset: f64,
}

fn solve_leg(map: &MotionPrimitiveMap, length: f64, half_period: f64, lead: f64) -> Result<Leg, PlanError> {
    if !(length > 0.0) {
        return Err(PlanError::Infeasible(format!(
            "line length {length} must be positive"
        )));
    }
    if !(half_period > 0.0) || half_period * map.omega_yr.abs() >= PI {
        return Err(PlanError::Infeasible(format!(
            "half period {half_period} s must satisfy 0 < T |omega_yr| < pi"
        )));
    }
    let per_arc = leg_displacement(map, 2, half_period, lead).norm()
        - leg_displacement(map, 1, half_period, lead).norm();
    if !(per_arc.abs() > 1e-12 * map.r_yr) {
        return Err(PlanError::Degenerate(
            "switching produces no net advance (heading offset near 90 degrees)".into(),
        ));
    }
    let mut n = ((length / per_arc.abs()).ceil() as usize).max(1);
    loop {
        let reach = |t: f64| leg_displacement(map, n, t, lead).norm() - length;
        if reach(half_period) >= 0.0 {
            let t = bisect(reach, 0.0, half_period, 1e-12)
                .ok_or_else(|| PlanError::Infeasible(format!("no arc timing reaches {length} m")))?;
            let d = leg_displacement(map, n, t, lead);
            return Ok(Leg {
                n,
                half_period: t,
                offset: d.y.atan2(d.x),
            });
        }
        n += 1;
        if n > 1_000_000 {
            return Err(PlanError::Infeasible(format!(
                "line of {length} m needs too many arcs"
            )));
        }
    }
}

/// Straight line of `length` along planar `+x` from the start point, by a
/// square wave of half period (at most) `half_period`.
pub fn plan_line(map: &MotionPrimitiveMap, length: f64, half_period: f64) -> Result<Plan, PlanError> {
    let leg = solve_leg(map, length, half_period, 1.0)?;
    let segments = line_segments(leg.n, leg.half_period, 1.0);
    let checkpoints = vec![(0, Vec2::zeros()), (segments.len(), Vec2::new(length, 0.0))];
    Plan::build(map, &segments, -leg.offset, checkpoints, None)
}

/// Net displacement and heading change of one circle cycle: `t_a` at motor
/// sign `sign`, then `t_b` at the opposite sign.
fn cycle(map: &MotionPrimitiveMap, sign: f64, arc: f64, dtheta: f64) -> Vec<(f64, f64)> {
    vec![
        (sign, map.turn_duration(arc)),
        (-sign, map.turn_duration(arc - dtheta)),
    ]
}

fn cycle_chord(map: &MotionPrimitiveMap, sign: f64, arc: f64, dtheta: f64) -> Vec2 {
    let poses = map.rollout(Pose::origin(0.0), &cycle(map, sign, arc, dtheta));
    poses[2].p
}

/// Circle of `radius` tangent to planar `+x` at the start point,
/// counter-clockwise for positive `turns`. Each cycle is a long arc of
/// `arc_angle` followed by a shorter opposite arc, netting a heading change
/// `dtheta`; the net chords form a polygon inscribed in the target circle.
pub fn plan_circle(
    map: &MotionPrimitiveMap,
    radius: f64,
    turns: f64,
    arc_angle: f64,
) -> Result<Plan, PlanError> {
    if !(radius > map.r_yr) {
        return Err(PlanError::Infeasible(format!(
            "circle radius {radius} m must exceed the turning radius {} m",
            map.r_yr
        )));
    }
    if turns == 0.0 || !turns.is_finite() {
        return Err(PlanError::Degenerate("turns must be non-zero".into()));
    }
    if !(arc_angle > 0.0 && arc_angle < PI) {
        return Err(PlanError::Infeasible(format!(
            "arc angle {arc_angle} must lie in (0, pi)"
        )));
    }
    let sense = turns.signum();
    let sign = map.turn_sign(sense);
    let gap = |arc: f64, dtheta: f64| {
        cycle_chord(map, sign, arc, dtheta).norm() - 2.0 * radius * (0.5 * dtheta).sin()
    };
    let dtheta = bisect(|d| gap(arc_angle, d), 1e-12, arc_angle, 1e-10).ok_or_else(|| {
        PlanError::Infeasible(format!(
            "no heading step inscribes radius {radius} m with arc {arc_angle} rad"
        ))
    })?;
    let cycles = ((turns.abs() * TAU / dtheta).round() as usize).max(3);
    let dtheta = turns.abs() * TAU / cycles as f64;
    let arc = bisect(|a| gap(a, dtheta), dtheta, PI - 1e-9, 1e-10).ok_or_else(|| {
        PlanError::Infeasible(format!(
            "no arc angle inscribes radius {radius} m with step {dtheta} rad"
        ))
    })?;

    let chord = cycle_chord(map, sign, arc, dtheta);
    // first net chord leaves the start point at half the heading step
    let first_dir = sense * 0.5 * dtheta;
    let initial_yaw = first_dir - chord.y.atan2(chord.x);
    let center = Vec2::new(0.0, sense * radius);
    let checkpoints = (0..=cycles)
        .map(|k| {
            let a = -sense * PI / 2.0 + sense * k as f64 * dtheta;
            (2 * k, center + radius * Vec2::new(a.cos(), a.sin()))
        })
        .collect();
    let segments: Vec<(f64, f64)> = (0..cycles).flat_map(|_| cycle(map, sign, arc, dtheta)).collect();
    Plan::build(map, &segments, initial_yaw, checkpoints, Some(center))
}

/// Polyline through `vertices`: straight legs joined by constant-speed
/// turns. Each turn's displacement is split along its two adjacent edges
/// and taken off those legs. A closed polygon also turns at the first
/// vertex, restoring the start orientation; its start point then sits on
/// the first edge, offset from the first vertex by that turn's share.
pub fn plan_polygon(
    map: &MotionPrimitiveMap,
    vertices: &[Vec2],
    closed: bool,
    half_period: f64,
) -> Result<Plan, PlanError> {
    let min = if closed { 3 } else { 2 };
    if vertices.len() < min {
        return Err(PlanError::Degenerate(format!(
            "polygon needs at least {min} vertices"
        )));
    }
    let mut path = vertices.to_vec();
    if closed {
        path.push(vertices[0]);
    }
    let edges: Vec<Vec2> = path.windows(2).map(|w| w[1] - w[0]).collect();
    let m = edges.len();
    for (i, e) in edges.iter().enumerate() {
        if !(e.norm() > 0.0) {
            return Err(PlanError::EdgeTooShort {
                edge: i,
                length: 0.0,
                needed: 0.0,
            });
        }
    }
    let dirs: Vec<f64> = edges.iter().map(|e| e.y.atan2(e.x)).collect();
    // turn i follows edge i and precedes edge (i + 1) mod m
    let n_turns = if closed { m } else { m - 1 };
    let turns: Vec<f64> = (0..n_turns)
        .map(|i| wrap_to_pi(dirs[(i + 1) % m] - dirs[i]))
        .collect();
    for (i, a) in turns.iter().enumerate() {
        if a.abs() < 1e-9 || a.abs() >= PI - 1e-9 {
            return Err(PlanError::Infeasible(format!(
                "turn at vertex {} must satisfy 0 < |angle| < pi (got {a:.6})",
                (i + 1) % path.len()
            )));
        }
    }
    // legs lead with the dominant turning sense so that mirrored paths give
    // sign-flipped schedules
    let sense = turns.iter().sum::<f64>();
    let lead = if sense == 0.0 { 1.0 } else { map.turn_sign(sense) };

    let full: Vec<f64> = edges.iter().map(|e| e.norm()).collect();
    let too_short = |i: usize, l: f64| PlanError::EdgeTooShort {
        edge: i,
        length: full[i],
        needed: full[i] - l,
    };
    let mut lengths = full.clone();
    let mut turn_segs: Vec<(f64, f64)> = Vec::new();
    let mut start_shift = 0.0;
    for _ in 0..100 {
        let legs: Vec<Leg> = lengths
            .iter()
            .map(|&l| solve_leg(map, l, half_period, lead))
            .collect::<Result<_, _>>()?;
        turn_segs.clear();
        let mut new_lengths = full.clone();
        start_shift = 0.0;
        for i in 0..n_turns {
            let next = (i + 1) % m;
            // body turn taking leg i's orientation to leg next's
            let body = wrap_to_pi(turns[i] + legs[i].offset - legs[next].offset);
            let s = map.turn_sign(body);
            let t = map.turn_duration(body);
            turn_segs.push((s, t));
            let d = map.advance(Pose::origin(dirs[i] - legs[i].offset), s, t).p;
            let (u, w) = (edges[i] / full[i], edges[next] / full[next]);
            let det = u.x * w.y - u.y * w.x;
            let a = (d.x * w.y - d.y * w.x) / det;
            let b = (u.x * d.y - u.y * d.x) / det;
            new_lengths[i] -= a;
            new_lengths[next] -= b;
            if next == 0 {
                start_shift = b;
            }
        }
        if let Some((i, l)) = new_lengths.iter().enumerate().find(|(_, l)| **l <= 0.0) {
            return Err(too_short(i, *l));
        }
        let change = lengths
            .iter()
            .zip(&new_lengths)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        lengths = new_lengths;
        if change < 1e-12 * map.r_yr {
            break;
        }
    }
    let legs: Vec<Leg> = lengths
        .iter()
        .map(|&l| solve_leg(map, l, half_period, lead))
        .collect::<Result<_, _>>()?;

    let mut segments = Vec::new();
    for (i, leg) in legs.iter().enumerate() {
        segments.extend(line_segments(leg.n, leg.half_period, lead));
        if let Some(&t) = turn_segs.get(i) {
            segments.push(t);
        }
    }
    let start = vertices[0] + start_shift * edges[0] / full[0];
    let end = if closed { start } else { path[m] };
    let initial_yaw = wrap_to_pi(dirs[0] - legs[0].offset);
    let checkpoints = vec![(0, Vec2::zeros()), (segments.len(), end - start)];
    Plan::build(map, &segments, initial_yaw, checkpoints, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map() -> MotionPrimitiveMap {
        MotionPrimitiveMap {
            omega_motor: 4.53,
            omega_bar: 10.0,
            omega_yr: -0.0247,
            r_yr: 0.106,
            theta_heading: 1.139,
            heading_offset: 1.139,
            tail_length: 0.11,
        }
    }

    fn end_of(plan: &Plan) -> Vec2 {
        plan.predicted.last().unwrap().1
    }

    fn check_binary(plan: &Plan, omega: f64) {
        let sw = plan.schedule.switches();
        assert!(sw.iter().all(|&(_, w)| w == omega || w == -omega));
        assert!(sw.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 != w[0].1));
        let total: f64 = plan.segments.iter().map(|s| s.1).sum();
        assert!((plan.schedule.duration() - total).abs() <= 1e-12 * total);
    }

    #[test]
    fn arc_primitive_geometry() {
        let m = map();
        let t = m.turn_duration(PI);
        let end = m.advance(Pose::origin(0.3), 1.0, t);
        assert!((end.p.norm() - 2.0 * m.r_yr).abs() < 1e-12);
        assert!((end.yaw - (0.3 - PI)).abs() < 1e-12);
        let back = m.advance(end, -1.0, t);
        assert!((back.yaw - 0.3).abs() < 1e-12);
        assert!((m.chord(m.default_half_period()) - m.tail_length).abs() < 1e-12);
    }

    #[test]
    fn line_counts_arcs_and_reaches_its_end() {
        let m = map();
        let t = m.default_half_period();
        let per_arc = m.chord(t) * m.heading_offset.cos().abs();
        let plan = plan_line(&m, 9.9 * per_arc, t).unwrap();
        // leading half arc, ten full arcs, closing half arc
        assert_eq!(plan.segments.len(), 12);
        assert_eq!(plan.schedule.switches().len(), 12);
        assert!((plan.segments[0].1 - 0.5 * plan.segments[1].1).abs() < 1e-9);
        assert!(plan.segments[1].1 <= t);
        assert!((end_of(&plan) - Vec2::new(9.9 * per_arc, 0.0)).norm() < 1e-9);
        check_binary(&plan, m.omega_motor);
    }

    #[test]
    fn short_line_shortens_the_arcs() {
        let m = map();
        let plan = plan_line(&m, 0.01, m.default_half_period()).unwrap();
        assert_eq!(plan.segments.len(), 3);
        assert!((end_of(&plan) - Vec2::new(0.01, 0.0)).norm() < 1e-9);
        assert!(plan_line(&m, 0.5, PI / m.omega_yr.abs()).is_err());
        assert!(plan_line(&m, -1.0, 10.0).is_err());
    }

    #[test]
    fn rotated_line_spec() {
        let m = map();
        let spec = PathSpec::Line {
            length_m: 0.4,
            direction_rad: 1.0,
            half_period_s: None,
        };
        let plan = spec.plan(&m).unwrap();
        assert!((end_of(&plan) - 0.4 * Vec2::new(1f64.cos(), 1f64.sin())).norm() < 1e-9);
    }

    #[test]
    fn circle_cycle_points_lie_on_target() {
        let m = map();
        let plan = plan_circle(&m, 0.5, 1.0, 0.9).unwrap();
        let c = plan.circle_center.unwrap();
        assert!((c - Vec2::new(0.0, 0.5)).norm() < 1e-12);
        for (t, p) in &plan.checkpoints {
            let model = plan
                .predicted
                .iter()
                .find(|(tp, _)| (tp - t).abs() < 1e-9)
                .unwrap()
                .1;
            assert!((model - p).norm() < 1e-7, "{t}: {model:?} vs {p:?}");
            assert!(((p - c).norm() - 0.5).abs() < 1e-12);
        }
        assert!(end_of(&plan).norm() < 1e-7);
        check_binary(&plan, m.omega_motor);
    }

    #[test]
    fn circle_turns_repeat_the_cycle() {
        let m = map();
        let one = plan_circle(&m, 0.5, 1.0, 0.9).unwrap();
        let two = plan_circle(&m, 0.5, 2.0, 0.9).unwrap();
        // cycle counts are rounded per request, so two turns may differ by one cycle
        let (n1, n2) = (one.segments.len() as i64 / 2, two.segments.len() as i64 / 2);
        assert!((n2 - 2 * n1).abs() <= 1, "{n1} {n2}");
        let cycle = |p: &Plan| p.segments[0].1 + p.segments[1].1;
        let rate = |p: &Plan| p.schedule.duration() / (p.segments.len() / 2) as f64;
        assert!((cycle(&two) - cycle(&one)).abs() < 0.02 * cycle(&one));
        assert!((rate(&two) - rate(&one)).abs() < 0.02 * rate(&one));
        assert!(end_of(&two).norm() < 1e-7);
    }

    #[test]
    fn huge_circle_approaches_square_wave() {
        let m = map();
        let plan = plan_circle(&m, 1e3, 0.01, 0.9).unwrap();
        let (ta, tb) = (plan.segments[0].1, plan.segments[1].1);
        assert!(tb / ta > 0.99 && tb < ta, "{ta} {tb}");
    }

    #[test]
    fn infeasible_circles() {
        let m = map();
        assert!(matches!(
            plan_circle(&m, 0.05, 1.0, 0.9),
            Err(PlanError::Infeasible(_))
        ));
        assert!(matches!(
            plan_circle(&m, 0.5, 0.0, 0.9),
            Err(PlanError::Degenerate(_))
        ));
        assert!(matches!(
            plan_circle(&m, 0.5, 1.0, 3.5),
            Err(PlanError::Infeasible(_))
        ));
    }

    #[test]
    fn square_has_four_quarter_turns_and_closes() {
        let m = map();
        let side = 20.0 * m.r_yr;
        let square = [
            Vec2::zeros(),
            Vec2::new(side, 0.0),
            Vec2::new(side, side),
            Vec2::new(0.0, side),
        ];
        let plan = plan_polygon(&m, &square, true, m.default_half_period()).unwrap();
        let quarter = m.turn_duration(PI / 2.0);
        let turns = plan
            .segments
            .iter()
            .filter(|s| (s.1 - quarter).abs() < 1e-9)
            .count();
        assert_eq!(turns, 4);
        assert!(end_of(&plan).norm() < 1e-9);
        check_binary(&plan, m.omega_motor);
    }

    #[test]
    fn open_triangle_ends_at_last_vertex() {
        let m = map();
        let v = [Vec2::zeros(), Vec2::new(1.5, 0.0), Vec2::new(0.75, 1.2)];
        let plan = plan_polygon(&m, &v, false, m.default_half_period()).unwrap();
        assert!((end_of(&plan) - v[2]).norm() < 1e-9);
        let turns = plan
            .segments
            .iter()
            .filter(|s| s.1 > m.default_half_period() * 1.01)
            .count();
        assert_eq!(turns, 1);
    }

    #[test]
    fn short_edge_is_named() {
        let m = map();
        let v = [
            Vec2::zeros(),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 0.01),
            Vec2::new(0.0, 0.01),
        ];
        match plan_polygon(&m, &v, false, m.default_half_period()) {
            Err(PlanError::EdgeTooShort { edge, .. }) => assert_eq!(edge, 1),
            other => panic!("{other:?}"),
        }
        let reverse = [Vec2::zeros(), Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.0)];
        assert!(matches!(
            plan_polygon(&m, &reverse, false, 10.0),
            Err(PlanError::Infeasible(_))
        ));
    }

    #[test]
    fn mirrored_paths_flip_every_sign() {
        let m = map();
        let specs = [
            PathSpec::Polygon {
                vertices_m: vec![[0.0, 0.0], [1.5, 0.0], [0.75, 1.2]],
                closed: true,
                half_period_s: None,
            },
            PathSpec::Circle {
                radius_m: 0.6,
                turns: 1.0,
                clockwise: false,
                direction_rad: 0.2,
                arc_angle_rad: None,
            },
        ];
        for spec in specs {
            let a = spec.plan(&m).unwrap();
            let b = spec.mirrored().plan(&m).unwrap();
            assert_eq!(a.segments.len(), b.segments.len());
            for (x, y) in a.segments.iter().zip(&b.segments) {
                assert_eq!(x.0, -y.0);
                assert!((x.1 - y.1).abs() <= 1e-9 * x.1);
            }
            assert!((a.initial_yaw + b.initial_yaw).abs() < 1e-9);
        }
    }

    #[test]
    fn map_from_summary_normalizes_sign() {
        let cfg = RobotConfig::control_sec4();
        let summary = SteadyStateSummary {
            omega_h: 1.1,
            omega_t: -3.4,
            omega_yr: 0.0247,
            r_yr: 0.106,
            theta_heading: 1.139,
            heading_offset: -1.139,
            circle_center: Vec2::zeros(),
            fit_residual: 1e-6,
        };
        let m = MotionPrimitiveMap::from_summary(-4.53, &summary, &cfg).unwrap();
        assert_eq!(m.omega_yr, -0.0247);
        assert_eq!(m.heading_offset, 1.139);
        assert_eq!(m.omega_motor, 4.53);
        assert!((m.omega_bar - 4.53 * cfg.time_scale()).abs() < 1e-12);
        let noisy = SteadyStateSummary {
            fit_residual: 0.01,
            ..summary
        };
        assert!(MotionPrimitiveMap::from_summary(4.53, &noisy, &cfg).is_err());
        assert!(matches!(
            MotionPrimitiveMap::from_summary(0.0, &summary, &cfg),
            Err(PlanError::Degenerate(_))
        ));
        assert!(matches!(characterize(&cfg, 0.0), Err(PlanError::Degenerate(_))));
    }

    #[test]
    fn path_spec_toml() {
        let text = "kind = \"polygon\"\nvertices_m = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]\nclosed = true\n";
        let spec = PathSpec::from_toml_str(text).unwrap();
        assert!(matches!(spec, PathSpec::Polygon { closed: true, .. }));
        assert_eq!(PathSpec::from_toml_str(&spec.to_toml_string()).unwrap(), spec);
        let circle = PathSpec::from_toml_str("kind = \"circle\"\nradius_m = 0.5\nturns = 2\n").unwrap();
        assert!(matches!(circle, PathSpec::Circle { clockwise: false, .. }));
        assert!(PathSpec::from_toml_str("kind = \"spiral\"\n").is_err());
        assert!(PathSpec::from_toml_str("kind = \"line\"\nlength = 1.0\n").is_err());
    }
}
