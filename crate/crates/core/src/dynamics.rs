//! Implicit time stepping of `M q'' = F^e + F^h` with motor actuation
//! applied through the natural twist of the head-shaft joint.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::{self, Read, Write};
use std::path::Path;

use nalgebra::{DVector, Rotation3, Unit};

use crate::config::RobotConfig;
use crate::elastic::{elastic_energy_force, elastic_hessian, StiffnessSet};
use crate::error::{GeometryError, SimError};
use crate::hydro::{hydro_damping, hydro_forces};
use crate::linalg::{BorderedLu, BorderedSystem};
use crate::rod::{build_robot, RobotState, Topology, Vec3};

/// Piecewise-constant motor speed `omega(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuationSchedule {
    switches: Vec<(f64, f64)>,
    duration: f64,
}

impl ActuationSchedule {
    /// `switches` holds `(t_switch, omega)` pairs; the first must be at `t = 0`.
    pub fn new(switches: Vec<(f64, f64)>, duration: f64) -> Result<Self, SimError> {
        let bad = |m: &str| Err(SimError::Schedule(m.to_string()));
        if switches.is_empty() {
            return bad("schedule has no entries");
        }
        if switches[0].0 != 0.0 {
            return bad("first switch must be at t = 0");
        }
        if switches.iter().any(|(t, w)| !t.is_finite() || !w.is_finite()) {
            return bad("non-finite entry");
        }
        if switches.windows(2).any(|w| w[1].0 <= w[0].0) {
            return bad("switch times must be strictly increasing");
        }
        if !(duration.is_finite() && duration > switches[switches.len() - 1].0) {
            return bad("duration must exceed the last switch time");
        }
        Ok(Self { switches, duration })
    }

    pub fn constant(omega: f64, duration: f64) -> Result<Self, SimError> {
        Self::new(vec![(0.0, omega)], duration)
    }

    /// `half_periods` intervals of length `half_period` alternating between
    /// `omega` and `-omega`, starting with `omega`.
    pub fn square_wave(omega: f64, half_period: f64, half_periods: usize) -> Result<Self, SimError> {
        let switches = (0..half_periods.max(1))
            .map(|i| (i as f64 * half_period, if i % 2 == 0 { omega } else { -omega }))
            .collect();
        Self::new(switches, half_periods.max(1) as f64 * half_period)
    }

    pub fn switches(&self) -> &[(f64, f64)] {
        &self.switches
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn omega_at(&self, t: f64) -> f64 {
        let i = self.switches.partition_point(|&(ts, _)| ts <= t);
        self.switches[i.saturating_sub(1)].1
    }

    /// `(start, end, omega)` for every constant-speed interval.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.switches.iter().enumerate().map(move |(i, &(t, w))| {
            let end = self.switches.get(i + 1).map_or(self.duration, |s| s.0);
            (t, end, w)
        })
    }

    /// CSV with header `t_switch_s,omega_rad_s` and a `# duration_s = ...`
    /// comment line.
    pub fn to_csv_string(&self) -> String {
        let mut s = format!("# duration_s = {}\nt_switch_s,omega_rad_s\n", self.duration);
        for (t, w) in &self.switches {
            s.push_str(&format!("{t},{w}\n"));
        }
        s
    }

    pub fn from_csv_str(text: &str) -> Result<Self, SimError> {
        let bad = |m: String| SimError::Schedule(m);
        let mut duration = None;
        let mut switches = Vec::new();
        let mut header = false;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some((k, v)) = c.split_once('=') {
                    if k.trim() == "duration_s" {
                        duration = Some(
                            v.trim()
                                .parse::<f64>()
                                .map_err(|e| bad(format!("line {}: bad duration: {e}", n + 1)))?,
                        );
                    }
                }
                continue;
            }
            if !header {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols != ["t_switch_s", "omega_rad_s"] {
                    return Err(bad(format!(
                        "expected header `t_switch_s,omega_rad_s`, got `{line}`"
                    )));
                }
                header = true;
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| bad(format!("line {}: expected two columns", n + 1)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("line {}: {e}", n + 1)))
            };
            switches.push((parse(a)?, parse(b)?));
        }
        let duration = duration.ok_or_else(|| bad("missing `# duration_s = ...` line".into()))?;
        Self::new(switches, duration)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| SimError::Schedule(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_str(&text)
    }
}

/// Lumped mass per DOF: kg for positions, kg m^2 for twist angles.
#[derive(Debug, Clone, PartialEq)]
pub struct MassVector(pub DVector<f64>);

impl MassVector {
    pub fn new(config: &RobotConfig, topo: &Topology) -> Self {
        let mut m = DVector::zeros(topo.ndof());
        for n in 0..topo.n_nodes {
            let mass = if topo.head_nodes.contains(&n) {
                config.head_mass / 3.0
            } else {
                config.rho_line * topo.node_voronoi[n]
            };
            for k in 0..3 {
                m[3 * n + k] = mass;
            }
        }
        let r0 = config.tail_radius;
        let head_r = config.head_radius;
        for e in 0..topo.n_edges() {
            m[topo.theta_index(e)] = if e < 2 {
                0.5 * config.head_mass * head_r * head_r / 2.0
            } else {
                config.rho_line * topo.rest_length[e] * r0 * r0 / 2.0
            };
        }
        Self(m)
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.0 *= factor;
        self
    }

    pub fn kinetic_energy(&self, qdot: &DVector<f64>) -> f64 {
        0.5 * self
            .0
            .iter()
            .zip(qdot.iter())
            .map(|(m, v)| m * v * v)
            .sum::<f64>()
    }
}

/// Advances the motor angle: the natural twist of the head-shaft joint
/// grows by `omega dt`.
pub fn apply_actuation(state: &mut RobotState, topo: &Topology, omega: f64, dt: f64) {
    state.natural_twist[topo.motor_stencil] += omega * dt;
}

/// Newton iterations spent on one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub newton_iterations: usize,
    pub halvings: usize,
}

/// One robot with its precomputed stiffness and mass.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: RobotConfig,
    topo: Topology,
    stiffness: StiffnessSet,
    mass: MassVector,
    state: RobotState,
    start_height: f64,
    rest_heights: [f64; 3],
    /// Whole turns removed from the head and tail-side twist angles.
    spin_offsets: [f64; 2],
    warned_height: bool,
}

impl Simulator {
    pub fn new(config: &RobotConfig) -> Result<Self, SimError> {
        let (state, topo) = build_robot(config)?;
        Ok(Self::from_parts(config.clone(), topo, state))
    }

    pub fn from_parts(config: RobotConfig, topo: Topology, state: RobotState) -> Self {
        let stiffness = StiffnessSet::new(&config, &topo);
        let mass = MassVector::new(&config, &topo);
        let start_height = state.node(topo.head_nodes[1]).y;
        let rest_heights = topo.head_nodes.map(|i| state.node(i).y);
        Self {
            config,
            topo,
            stiffness,
            mass,
            state,
            start_height,
            rest_heights,
            spin_offsets: [0.0; 2],
            warned_height: false,
        }
    }

    pub fn config(&self) -> &RobotConfig {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn stiffness(&self) -> &StiffnessSet {
        &self.stiffness
    }

    pub fn stiffness_mut(&mut self) -> &mut StiffnessSet {
        &mut self.stiffness
    }

    pub fn mass(&self) -> &MassVector {
        &self.mass
    }

    pub fn set_mass(&mut self, mass: MassVector) {
        assert_eq!(mass.0.len(), self.topo.ndof());
        self.mass = mass;
    }

    /// Rotates the robot rigidly about the vertical axis through the head
    /// centre.
    pub fn yaw_by(&mut self, angle: f64) {
        let rot = Rotation3::from_axis_angle(&Unit::new_unchecked(Vec3::y()), angle);
        let pivot = self.state.node(self.topo.head_nodes[1]);
        self.state.rotate_rigidly(&self.topo, &rot, &pivot);
    }

    /// One implicit-Euler step of size `dt` at motor speed `omega`. A step
    /// whose Newton solve fails is retried as two half steps, recursively up
    /// to the configured number of halvings.
    pub fn step(&mut self, omega: f64, dt: f64) -> Result<StepStats, SimError> {
        let stats = self.advance(omega, dt, 0)?;
        self.rebase_spins();
        let dy = self.state.node(self.topo.head_nodes[1]).y - self.start_height;
        if !self.warned_height && dy.abs() > 0.25 * self.config.head_radius {
            log::warn!(
                "head left its initial height by {dy:.3e} m at t = {:.4} s",
                self.state.time
            );
            self.warned_height = true;
        }
        Ok(stats)
    }

    /// Accumulated head and tail spin angles [rad], continuous across
    /// rebasing.
    pub fn spin_angles(&self) -> [f64; 2] {
        [
            self.state.q[self.topo.theta_index(0)] + self.spin_offsets[0],
            self.state.q[self.topo.theta_index(1)] + self.spin_offsets[1],
        ]
    }

    /// Keeps twist angles and reference twists within a few turns of zero
    /// so their round-off stays below the solver tolerance. Each is reduced
    /// by whole turns and the stencils' natural twists absorb the change,
    /// leaving every twist strain and material frame unchanged.
    fn rebase_spins(&mut self) {
        const LIMIT: f64 = 64.0;
        let topo = &self.topo;
        let st = &mut self.state;
        let big = |v: f64| v.abs() > LIMIT;
        let thetas_big = (0..topo.n_edges()).any(|e| big(st.q[topo.theta_index(e)]));
        if !thetas_big && !st.ref_twist.iter().any(|&r| big(r)) {
            return;
        }
        let turns: Vec<f64> = (0..topo.n_edges())
            .map(|e| (st.q[topo.theta_index(e)] / TAU).round())
            .collect();
        for (e, n) in turns.iter().enumerate() {
            st.q[topo.theta_index(e)] -= n * TAU;
        }
        for (k, sten) in topo.stencils.iter().enumerate() {
            let j = (st.ref_twist[k] / TAU).round();
            st.ref_twist[k] -= j * TAU;
            st.natural_twist[k] -= (turns[sten.edge_out] - turns[sten.edge_in] + j) * TAU;
        }
        self.spin_offsets[0] += turns[0] * TAU;
        self.spin_offsets[1] += turns[1] * TAU;
        st.refresh_material_frames(topo);
    }

    fn advance(&mut self, omega: f64, dt: f64, depth: usize) -> Result<StepStats, SimError> {
        let mut trial = self.state.clone();
        apply_actuation(&mut trial, &self.topo, omega, dt);
        match self.newton(&trial, dt) {
            Ok((q, iters)) => {
                trial.qdot = (&q - &trial.q) / dt;
                trial.q = q;
                trial.time += dt;
                trial.update_frames(&self.topo)?;
                self.state = trial;
                Ok(StepStats {
                    newton_iterations: iters,
                    halvings: depth,
                })
            }
            Err(detail) if depth < self.config.solver.max_step_halvings => {
                log::debug!(
                    "step of {dt:.3e} s failed at t = {:.6} s ({detail}); halving",
                    self.state.time
                );
                let a = self.advance(omega, 0.5 * dt, depth + 1)?;
                let b = self.advance(omega, 0.5 * dt, depth + 1)?;
                Ok(StepStats {
                    newton_iterations: a.newton_iterations + b.newton_iterations,
                    halvings: a.halvings.max(b.halvings),
                })
            }
            Err(detail) => {
                let s = &self.state;
                let head = s.node(self.topo.head_nodes[1]);
                Err(SimError::SolverFailure {
                    time: s.time,
                    detail: format!(
                        "{detail}; dt = {dt:.3e} s after {depth} halvings; head at ({:.6e}, {:.6e}, {:.6e}) m, |qdot|max = {:.3e}",
                        head.x,
                        head.y,
                        head.z,
                        s.qdot.amax()
                    ),
                })
            }
        }
    }

    /// Solves the implicit-Euler residual for the new configuration.
    ///
    /// The factored Jacobian is reused across iterations and rebuilt
    /// whenever the residual stops shrinking fast enough.
    fn newton(&self, base: &RobotState, dt: f64) -> Result<(DVector<f64>, usize), String> {
        let q0 = &base.q;
        let v0 = &base.qdot;
        let tol = self.config.solver.newton_tol * self.config.characteristic_force();
        let stall = 1e-13 * self.config.tail_length;
        let dt2 = dt * dt;
        let geo = |e: GeometryError| e.to_string();

        let mut jacobian: Option<BorderedLu> = None;
        let mut fresh = false;
        let mut q = q0 + dt * v0;
        let mut last_step = f64::INFINITY;
        let mut last_norm = f64::INFINITY;
        for it in 0..self.config.solver.max_newton_iter {
            let v = (&q - q0) / dt;
            let (_, fe) = elastic_energy_force(&q, &self.topo, &self.stiffness, base).map_err(geo)?;
            let mut f = fe + hydro_forces(&q, &v, &self.topo, &self.config).map_err(geo)?;
            self.add_surface_force(&q, &mut f);
            let r = (&q - q0 - dt * v0).component_mul(&self.mass.0) - dt2 * f;
            let norm = r.amax() / dt2;
            if !norm.is_finite() {
                return Err("non-finite residual".into());
            }
            if norm < tol || last_step < stall {
                return Ok((q, it));
            }
            let slow = norm > 0.25 * last_norm;
            let lu = match jacobian.take() {
                Some(lu) if !(slow && !fresh) => {
                    fresh = false;
                    lu
                }
                _ => {
                    fresh = true;
                    self.jacobian_at(&q, base, dt).map_err(|e| e.to_string())?
                }
            };
            let dq = lu.solve(&r);
            jacobian = Some(lu);
            last_step = dq.amax();
            last_norm = norm;
            q -= dq;
        }
        Err(format!(
            "newton did not converge in {} iterations",
            self.config.solver.max_newton_iter
        ))
    }

    /// Factored `M + dt^2 d^2E/dq^2 - dt dF^h/dqdot` at `q`.
    fn jacobian_at(&self, q: &DVector<f64>, base: &RobotState, dt: f64) -> Result<BorderedLu, SimError> {
        let topo = &self.topo;
        let dt2 = dt * dt;
        let mut sys = BorderedSystem::new(topo);
        for (i, mi) in self.mass.0.iter().enumerate() {
            sys.add(i, i, *mi);
        }
        elastic_hessian(q, topo, &self.stiffness, base, |i, j, h| sys.add(i, j, dt2 * h))?;
        hydro_damping(q, topo, &self.config, |i, j, d| sys.add(i, j, -dt * d))?;
        let k = self.config.surface_stiffness;
        if k > 0.0 {
            for &n in &topo.head_nodes {
                let i = topo.x_index(n) + 1;
                sys.add(i, i, dt2 * k);
            }
        }
        sys.factor()
    }

    fn add_surface_force(&self, q: &DVector<f64>, f: &mut DVector<f64>) {
        let k = self.config.surface_stiffness;
        if k > 0.0 {
            for (&n, y0) in self.topo.head_nodes.iter().zip(self.rest_heights) {
                let i = self.topo.x_index(n) + 1;
                f[i] -= k * (q[i] - y0);
            }
        }
    }
}

/// Free-function form of [`Simulator::step`] for one-off use.
pub fn step(
    state: &RobotState,
    topo: &Topology,
    config: &RobotConfig,
    omega: f64,
    dt: f64,
) -> Result<RobotState, SimError> {
    let mut sim = Simulator::from_parts(config.clone(), topo.clone(), state.clone());
    sim.step(omega, dt)?;
    Ok(sim.state)
}

/// One recorded instant of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    /// Head centre `x_1` [m].
    pub head: Vec3,
    /// Unit head axis, pointing from the head tip towards the tails.
    pub axis: Vec3,
    /// Head spin rate [rad/s].
    pub omega_h: f64,
    /// Shaft and tail-bundle spin rate [rad/s].
    pub omega_t: f64,
    /// Commanded motor speed [rad/s].
    pub omega_motor: f64,
    /// Accumulated head spin angle [rad].
    pub spin_h: f64,
    /// Accumulated tail spin angle [rad].
    pub spin_t: f64,
}

/// Full DOF vector and velocity at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub snapshots: Vec<Snapshot>,
}

pub const TRAJECTORY_HEADER: &str = "t,x,y,z,ax,ay,az,omega_h,omega_t,omega_motor";

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
        for s in &self.samples {
            let v = [
                s.t,
                s.head.x,
                s.head.y,
                s.head.z,
                s.axis.x,
                s.axis.y,
                s.axis.z,
                s.omega_h,
                s.omega_t,
                s.omega_motor,
            ];
            let row: Vec<String> = v.iter().map(|x| format!("{x:.11e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Parses the CSV written by [`Trajectory::write_csv`]. Spin angles are
    /// rebuilt by trapezoidal integration of the spin rates.
    pub fn read_csv(text: &str) -> Result<Self, SimError> {
        let bad = |m: String| SimError::Schedule(format!("trajectory csv: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == TRAJECTORY_HEADER => {}
            other => return Err(bad(format!("unexpected header {other:?}"))),
        }
        let mut samples: Vec<TrajectorySample> = Vec::new();
        for (n, line) in lines.enumerate() {
            let v: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(format!("row {}: {e}", n + 1)))?;
            if v.len() != 10 {
                return Err(bad(format!("row {}: expected 10 columns", n + 1)));
            }
            let (spin_h, spin_t) = match samples.last() {
                Some(p) => {
                    let h = v[0] - p.t;
                    (
                        p.spin_h + 0.5 * h * (p.omega_h + v[7]),
                        p.spin_t + 0.5 * h * (p.omega_t + v[8]),
                    )
                }
                None => (0.0, 0.0),
            };
            samples.push(TrajectorySample {
                t: v[0],
                head: Vec3::new(v[1], v[2], v[3]),
                axis: Vec3::new(v[4], v[5], v[6]),
                omega_h: v[7],
                omega_t: v[8],
                omega_motor: v[9],
                spin_h,
                spin_t,
            });
        }
        Ok(Self {
            samples,
            snapshots: Vec::new(),
        })
    }

    /// Snapshot records: `u32` byte length of the rest of the record, `f64`
    /// time, `u32` DOF count `n`, then `n` positions/angles and `n`
    /// velocities as `f64`, all little-endian.
    pub fn write_snapshots(&self, mut w: impl Write) -> io::Result<()> {
        for s in &self.snapshots {
            let n = s.q.len();
            let len = 8 + 4 + 16 * n;
            w.write_all(&(len as u32).to_le_bytes())?;
            w.write_all(&s.t.to_le_bytes())?;
            w.write_all(&(n as u32).to_le_bytes())?;
            for v in s.q.iter().chain(&s.qdot) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshots(mut r: impl Read) -> io::Result<Vec<Snapshot>> {
        let invalid = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut out = Vec::new();
        loop {
            let mut len = [0u8; 4];
            match r.read_exact(&mut len) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e),
            }
            let len = u32::from_le_bytes(len) as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            if len < 12 {
                return Err(invalid("snapshot record too short"));
            }
            let t = f64::from_le_bytes(buf[0..8].try_into().expect("8 bytes"));
            let n = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes")) as usize;
            if len != 12 + 16 * n {
                return Err(invalid("snapshot length does not match its DOF count"));
            }
            let vals: Vec<f64> = buf[12..]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            out.push(Snapshot {
                t,
                q: vals[..n].to_vec(),
                qdot: vals[n..].to_vec(),
            });
        }
        Ok(out)
    }
}

/// Output and start-pose options of [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Sampling interval of the trajectory [s].
    pub output_stride: f64,
    /// Sampling interval of full-state snapshots [s], if any.
    pub snapshot_stride: Option<f64>,
    /// Initial heading in the horizontal plane, measured counter-clockwise
    /// (seen from above) from world `x` in planar coordinates `(x, -z)`.
    pub initial_yaw: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            output_stride: 0.05,
            snapshot_stride: None,
            initial_yaw: FRAC_PI_2,
        }
    }
}

fn sample(sim: &Simulator, omega: f64) -> TrajectorySample {
    let s = sim.state();
    let topo = sim.topology();
    TrajectorySample {
        t: s.time,
        head: s.node(topo.head_nodes[1]),
        axis: s.head_axis(topo),
        omega_h: s.qdot[topo.theta_index(0)],
        omega_t: s.qdot[topo.theta_index(1)],
        omega_motor: omega,
        spin_h: sim.spin_angles()[0],
        spin_t: sim.spin_angles()[1],
    }
}

/// Builds the robot and runs it through `schedule`.
pub fn simulate(
    config: &RobotConfig,
    schedule: &ActuationSchedule,
    options: &SimOptions,
) -> Result<Trajectory, SimError> {
    let mut sim = Simulator::new(config)?;
    sim.yaw_by(options.initial_yaw - FRAC_PI_2);
    run(&mut sim, schedule, options)
}

/// Runs an existing simulator through `schedule`, starting the clock at 0.
/// Samples are taken every `output_stride` and at the final instant.
pub fn run(
    sim: &mut Simulator,
    schedule: &ActuationSchedule,
    options: &SimOptions,
) -> Result<Trajectory, SimError> {
    if !(options.output_stride > 0.0) {
        return Err(SimError::Schedule("output stride must be positive".into()));
    }
    let dt = sim.config().time_step();
    let mut traj = Trajectory::default();
    sim.state.time = 0.0;
    traj.samples.push(sample(sim, schedule.omega_at(0.0)));
    let mut next_sample = options.output_stride;
    let mut next_snap = 0.0;
    let eps = 1e-9 * dt;
    let snap = |sim: &Simulator, traj: &mut Trajectory, next: &mut f64| {
        if let Some(stride) = options.snapshot_stride {
            if sim.state.time + eps >= *next {
                traj.snapshots.push(Snapshot {
                    t: sim.state.time,
                    q: sim.state.q.as_slice().to_vec(),
                    qdot: sim.state.qdot.as_slice().to_vec(),
                });
                *next += stride;
            }
        }
    };
    snap(sim, &mut traj, &mut next_snap);
    for (start, end, omega) in schedule.segments() {
        let n = (((end - start) / dt) - 1e-9).ceil().max(1.0) as usize;
        let h = (end - start) / n as f64;
        for k in 1..=n {
            sim.step(omega, h)?;
            sim.state.time = start + k as f64 * h;
            if sim.state.time + eps >= next_sample {
                traj.samples.push(sample(sim, omega));
                next_sample += options.output_stride;
            }
            snap(sim, &mut traj, &mut next_snap);
        }
    }
    if traj.samples.last().is_some_and(|s| s.t < sim.state.time - eps) {
        let omega = schedule.switches().last().map_or(0.0, |&(_, w)| w);
        traj.samples.push(sample(sim, omega));
    }
    Ok(traj)
}
