//! Hydrodynamic loads: resistive force theory on the tails, lumped drag on
//! the head and the interface-gradient lateral force, together with the
//! viscosity profile and a quadrature oracle for the lateral-force constant.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;

use crate::config::RobotConfig;
use crate::error::{AnalysisError, GeometryError};
use crate::rod::{node_of, RobotState, Topology, Vec3};

/// Resistive-force-theory coefficients of the tails and the dimensionless
/// head drag multipliers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragCoefficients {
    /// Tangential drag per unit length and velocity [Pa s].
    pub mu_par: f64,
    /// Normal drag per unit length and velocity [Pa s].
    pub mu_perp: f64,
    pub c_t: f64,
    pub c_r: f64,
    pub c_yr: f64,
}

impl DragCoefficients {
    pub fn from_config(config: &RobotConfig) -> Self {
        let (mu_par, mu_perp) = rft_coefficients(config.mu0, config.tail_length / config.tail_radius);
        Self {
            mu_par,
            mu_perp,
            c_t: config.c_t,
            c_r: config.c_r,
            c_yr: config.c_yr,
        }
    }
}

/// `(mu_par, mu_perp)` for a slender filament of aspect ratio `l / r0`.
pub fn rft_coefficients(mu0: f64, slenderness: f64) -> (f64, f64) {
    let ln = slenderness.ln();
    (2.0 * PI * mu0 / (ln - 0.5), 4.0 * PI * mu0 / (ln + 0.5))
}

/// Sigmoid viscosity profile across the liquid-air interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceProfile {
    /// Height of the half-viscosity point [m].
    pub h: f64,
    pub k: f64,
    pub mu0: f64,
    /// Length that normalizes the sharpness, the head radius [m].
    pub radius: f64,
}

impl InterfaceProfile {
    pub fn from_config(config: &RobotConfig) -> Self {
        Self {
            h: config.interface_h,
            k: config.interface_k,
            mu0: config.mu0,
            radius: config.head_radius,
        }
    }
}

/// `mu0 / (1 + exp(k (y - h) / R))`.
pub fn viscosity_at(y: f64, profile: &InterfaceProfile) -> f64 {
    let arg = (profile.k * (y - profile.h) / profile.radius).clamp(-700.0, 700.0);
    profile.mu0 / (1.0 + arg.exp())
}

/// Stokes drag on the head, `-C_t 6 pi mu0 R v`.
pub fn head_translation_drag(v_head: &Vec3, config: &RobotConfig) -> Vec3 {
    -config.c_t * 6.0 * PI * config.mu0 * config.head_radius * v_head
}

/// Horizontal unit vector perpendicular to the head axis, `y x axis`.
pub fn lateral_direction(head_axis: &Vec3) -> Result<Vec3, GeometryError> {
    let e = Vec3::y().cross(head_axis);
    let n = e.norm();
    if n < 1e-6 {
        return Err(GeometryError::VerticalHeadAxis);
    }
    Ok(e / n)
}

/// Interface-gradient force `-C_yr omega_h mu0 R L e_x` on the head.
pub fn head_lateral_force(
    omega_h: f64,
    head_axis: &Vec3,
    config: &RobotConfig,
) -> Result<Vec3, GeometryError> {
    let ex = lateral_direction(head_axis)?;
    Ok(-lateral_gain(config) * omega_h * ex)
}

fn lateral_gain(config: &RobotConfig) -> f64 {
    config.c_yr * config.mu0 * config.head_radius * config.head_length
}

/// Spin-resisting torque `-C_r 8 pi mu0 R^3 omega_h` on the head edge.
pub fn head_rotation_torque(omega_h: f64, config: &RobotConfig) -> f64 {
    -rotation_gain(config) * omega_h
}

fn rotation_gain(config: &RobotConfig) -> f64 {
    config.c_r * 8.0 * PI * config.mu0 * config.head_radius.powi(3)
}

fn translation_gain(config: &RobotConfig) -> f64 {
    config.c_t * 6.0 * PI * config.mu0 * config.head_radius
}

/// RFT force on one node: anisotropic drag split along the local tangent.
pub fn rft_node_force(
    velocity: &Vec3,
    tangent: &Vec3,
    voronoi_length: f64,
    coeffs: &DragCoefficients,
) -> Vec3 {
    let vt = tangent.dot(velocity) * tangent;
    let vn = velocity - vt;
    -(coeffs.mu_par * vt + coeffs.mu_perp * vn) * voronoi_length
}

/// Unit tangent at a tail node: the normalized mean of the adjacent edge
/// tangents, or the single edge tangent at either end.
pub fn tail_node_tangent(state: &RobotState, topo: &Topology, tail: usize, j: usize) -> Vec3 {
    node_tangent(&state.q, topo, tail, j)
}

fn node_tangent(q: &DVector<f64>, topo: &Topology, tail: usize, j: usize) -> Vec3 {
    let edges = &topo.tail_edges[tail];
    let unit = |e: usize| {
        let [a, b] = topo.edges[e];
        (node_of(q, b) - node_of(q, a)).normalize()
    };
    let t = match (j.checked_sub(1).map(|i| edges[i]), edges.get(j)) {
        (Some(a), Some(&b)) => unit(a) + unit(b),
        (Some(a), None) => unit(a),
        (None, Some(&b)) => unit(b),
        (None, None) => unreachable!("tails have at least two nodes"),
    };
    t.normalize()
}

fn head_axis_of(q: &DVector<f64>, topo: &Topology) -> Vec3 {
    let [a, b] = topo.edges[0];
    (node_of(q, b) - node_of(q, a)).normalize()
}

/// Head spin rate about its axis: the rate of the head edge's twist angle.
/// Reference frames follow the head by time-parallel transport, which has
/// no spin about the tangent.
pub fn head_spin(state: &RobotState, topo: &Topology) -> f64 {
    state.qdot[topo.theta_index(0)]
}

/// External hydrodynamic force vector `F^h` (length `ndof`).
pub fn assemble_hydro_forces(
    state: &RobotState,
    topo: &Topology,
    config: &RobotConfig,
) -> Result<DVector<f64>, GeometryError> {
    hydro_forces(&state.q, &state.qdot, topo, config)
}

/// `F^h` at configuration `q` moving with velocity `qdot`.
pub fn hydro_forces(
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    topo: &Topology,
    config: &RobotConfig,
) -> Result<DVector<f64>, GeometryError> {
    let coeffs = DragCoefficients::from_config(config);
    let mut f = DVector::zeros(topo.ndof());
    for (i, nodes) in topo.tails.iter().enumerate() {
        for (j, &n) in nodes.iter().enumerate() {
            let t = node_tangent(q, topo, i, j);
            let fk = rft_node_force(&node_of(qdot, n), &t, topo.node_voronoi[n], &coeffs);
            add3(&mut f, 3 * n, &fk);
        }
    }
    let h = topo.head_nodes[1];
    let omega_h = qdot[topo.theta_index(0)];
    let fh = head_translation_drag(&node_of(qdot, h), config)
        + head_lateral_force(omega_h, &head_axis_of(q, topo), config)?;
    add3(&mut f, 3 * h, &fh);
    f[topo.theta_index(0)] += head_rotation_torque(omega_h, config);
    Ok(f)
}

fn add3(f: &mut DVector<f64>, at: usize, v: &Vec3) {
    f[at] += v.x;
    f[at + 1] += v.y;
    f[at + 2] += v.z;
}

/// Adds `dF^h / d qdot` at configuration `q` into `sink(row, col, value)`,
/// holding the tangents fixed.
pub fn hydro_damping(
    q: &DVector<f64>,
    topo: &Topology,
    config: &RobotConfig,
    mut sink: impl FnMut(usize, usize, f64),
) -> Result<(), GeometryError> {
    let coeffs = DragCoefficients::from_config(config);
    for (i, nodes) in topo.tails.iter().enumerate() {
        for (j, &n) in nodes.iter().enumerate() {
            let t = node_tangent(q, topo, i, j);
            let l = topo.node_voronoi[n];
            for a in 0..3 {
                for b in 0..3 {
                    let id = if a == b { 1.0 } else { 0.0 };
                    let v = -l * (coeffs.mu_perp * id + (coeffs.mu_par - coeffs.mu_perp) * t[a] * t[b]);
                    sink(3 * n + a, 3 * n + b, v);
                }
            }
        }
    }
    let h = topo.head_nodes[1];
    let th0 = topo.theta_index(0);
    let ex = lateral_direction(&head_axis_of(q, topo))?;
    let ct = translation_gain(config);
    let cyr = lateral_gain(config);
    for a in 0..3 {
        sink(3 * h + a, 3 * h + a, -ct);
        sink(3 * h + a, th0, -cyr * ex[a]);
    }
    sink(th0, th0, -rotation_gain(config));
    Ok(())
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// `(kronrod, |kronrod - gauss|, integral of |f|)` on one interval.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = KRONROD_WEIGHTS[7] * fc;
    let mut g = GAUSS_WEIGHTS[3] * fc;
    let mut abs = KRONROD_WEIGHTS[7] * fc.abs();
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let (f1, f2) = (f(c - x), f(c + x));
        k += KRONROD_WEIGHTS[i] * (f1 + f2);
        abs += KRONROD_WEIGHTS[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            g += GAUSS_WEIGHTS[i / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs(), abs * h.abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`,
/// bisecting the worst interval until the summed error estimate drops
/// below `rel_tol` times the integral of `|f|`.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<Quadrature, AnalysisError> {
    const MAX_INTERVALS: usize = 2000;
    let (v, e, m) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e, m)];
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        let scale: f64 = parts.iter().map(|p| p.4).sum();
        if error <= rel_tol * scale || scale == 0.0 {
            return Ok(Quadrature { value, error });
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(AnalysisError::Quadrature { estimate: error });
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, ..) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        for (s, t) in [(lo, mid), (mid, hi)] {
            let (v, e, m) = gk15(&f, s, t);
            parts.push((s, t, v, e, m));
        }
    }
}

/// Tolerance at which the oracle integrals are resolved.
const ORACLE_TOL: f64 = 1e-12;

/// Dimensionless constant multiplying `mu0 omega_h R L` in the lateral force
/// generated by a head spinning under the interface viscosity profile,
/// `-(1/mu0) int_0^{2 pi} mu(R sin t) sin t dt`. The axial integral only
/// contributes the factor `L`.
pub fn lateral_constant_oracle(profile: &InterfaceProfile) -> Result<f64, AnalysisError> {
    let r = profile.radius;
    let q = integrate_adaptive(
        |t| viscosity_at(r * t.sin(), profile) * t.sin(),
        0.0,
        TAU,
        ORACLE_TOL,
    )?;
    Ok(-q.value / profile.mu0)
}

/// The matching vertical integral `(1/mu0) int_0^{2 pi} mu(R sin t) cos t dt`,
/// which vanishes for any profile that depends on height only.
pub fn vertical_force_oracle(profile: &InterfaceProfile) -> Result<f64, AnalysisError> {
    let r = profile.radius;
    let q = integrate_adaptive(
        |t| viscosity_at(r * t.sin(), profile) * t.cos(),
        0.0,
        TAU,
        ORACLE_TOL,
    )?;
    Ok(q.value / profile.mu0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rod::build_robot;
    use proptest::prelude::*;

    fn profile() -> InterfaceProfile {
        InterfaceProfile::from_config(&RobotConfig::fitted_sec2())
    }

    #[test]
    fn viscosity_profile_shape() {
        let p = profile();
        assert!((viscosity_at(p.h, &p) - p.mu0 / 2.0).abs() < 1e-15);
        assert!((viscosity_at(-1e3, &p) - p.mu0).abs() < 1e-15);
        assert!(viscosity_at(1e3, &p) < 1e-200);
        let r = p.radius;
        let up = viscosity_at(p.h + 0.1 * r, &p);
        let down = viscosity_at(p.h - 0.1 * r, &p);
        assert!((up - p.mu0 / (1.0 + 2f64.exp())).abs() < 1e-14);
        assert!((down - p.mu0 / (1.0 + (-2f64).exp())).abs() < 1e-14);
        assert!(viscosity_at(f64::MAX, &p).is_finite());
    }

    proptest! {
        #[test]
        fn viscosity_is_nonincreasing(a in -0.1f64..0.1, b in -0.1f64..0.1) {
            let p = profile();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(viscosity_at(hi, &p) <= viscosity_at(lo, &p));
        }

        #[test]
        fn rft_drag_is_anisotropic(
            t in proptest::array::uniform3(-1.0f64..1.0),
            v in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            let t = Vec3::from(t);
            let v = Vec3::from(v);
            prop_assume!(t.norm() > 0.1 && v.norm() > 0.1);
            let t = t.normalize();
            let c = DragCoefficients::from_config(&RobotConfig::fitted_sec2());
            let f = rft_node_force(&v, &t, 0.01, &c).norm();
            let par = rft_node_force(&(v.norm() * t), &t, 0.01, &c).norm();
            let n = t.cross(&v).normalize();
            let perp = rft_node_force(&(v.norm() * n), &t, 0.01, &c).norm();
            prop_assert!(par <= f * (1.0 + 1e-12) && f <= perp * (1.0 + 1e-12));
        }
    }

    #[test]
    fn stokes_drag_example() {
        let mut cfg = RobotConfig::fitted_sec2();
        cfg.c_t = 1.0;
        let f = head_translation_drag(&Vec3::new(0.01, 0.0, 0.0), &cfg);
        let expected = -6.0 * PI * 1.49 * 0.016 * 0.01;
        assert!((f.x - expected).abs() < 1e-18);
        assert!((f.x + 4.4937e-3).abs() < 1e-7);
        assert_eq!((f.y, f.z), (0.0, 0.0));
        let f2 = head_translation_drag(&Vec3::new(0.02, 0.0, 0.0), &cfg);
        assert_eq!(f2.x, 2.0 * f.x);
        assert_eq!(head_translation_drag(&Vec3::zeros(), &cfg), Vec3::zeros());
    }

    #[test]
    fn lateral_force_direction_and_linearity() {
        let cfg = RobotConfig::fitted_sec2();
        let axis = Vec3::new(0.3, 0.0, -0.9).normalize();
        let f = head_lateral_force(2.0, &axis, &cfg).unwrap();
        assert!(f.y.abs() < 1e-12);
        assert!(f.dot(&axis).abs() < 1e-15);
        let mag = cfg.c_yr * 2.0 * cfg.mu0 * cfg.head_radius * cfg.head_length;
        assert!((f.norm() - mag).abs() < 1e-15);
        let g = head_lateral_force(-2.0, &axis, &cfg).unwrap();
        assert_eq!(f, -g);
        assert_eq!(head_lateral_force(0.0, &axis, &cfg).unwrap().norm(), 0.0);
        assert!(matches!(
            head_lateral_force(1.0, &Vec3::y(), &cfg),
            Err(GeometryError::VerticalHeadAxis)
        ));
    }

    #[test]
    fn rotation_torque() {
        let mut cfg = RobotConfig::fitted_sec2();
        assert_eq!(head_rotation_torque(0.0, &cfg), 0.0);
        cfg.c_r = 1.0;
        let r = cfg.head_radius;
        let sphere = -8.0 * PI * cfg.mu0 * r * r * r * 3.0;
        assert!((head_rotation_torque(3.0, &cfg) - sphere).abs() < 1e-18);
        assert_eq!(
            head_rotation_torque(6.0, &cfg),
            2.0 * head_rotation_torque(3.0, &cfg)
        );
    }

    #[test]
    fn rft_examples() {
        let c = DragCoefficients {
            mu_par: 2.0,
            mu_perp: 3.0,
            c_t: 1.0,
            c_r: 1.0,
            c_yr: 1.0,
        };
        let t = Vec3::new(0.0, 0.6, 0.8);
        let f = rft_node_force(&t, &t, 0.5, &c);
        assert!((f + t).norm() < 1e-15);
        let v = Vec3::x() * 2.0;
        let f = rft_node_force(&v, &t, 0.5, &c);
        assert!((f + 3.0 * v * 0.5).norm() < 1e-15);

        let (par, perp) = rft_coefficients(1.0, 34.375);
        assert!((par - 2.0686544516695924).abs() < 1e-12);
        assert!((perp - 3.112545171281643).abs() < 1e-12);
        // normal drag dominates once ln(l/r0) > 3/2
        for s in [4.5, 10.0, 100.0, 1e4] {
            let (a, b) = rft_coefficients(1.0, s);
            assert!(b > a);
        }
    }

    #[test]
    fn gauss_kronrod_on_known_integrals() {
        let q = integrate_adaptive(|x| x.sin(), 0.0, PI, 1e-12).unwrap();
        assert!((q.value - 2.0).abs() < 1e-12);
        let q = integrate_adaptive(|x| 1.0 / (1.0 + 100.0 * x * x), -1.0, 1.0, 1e-12).unwrap();
        assert!((q.value - 0.2 * 10f64.atan()).abs() < 1e-12);
    }

    #[test]
    fn lateral_constant_matches_reference() {
        let c = lateral_constant_oracle(&profile()).unwrap();
        assert!((c - 1.402645687588).abs() < 1e-9, "{c}");
        let v = vertical_force_oracle(&profile()).unwrap();
        assert!(v.abs() < 1e-8, "{v}");

        let mut flat = profile();
        flat.k = 0.0;
        assert!(lateral_constant_oracle(&flat).unwrap().abs() < 1e-12);
    }

    #[test]
    fn lateral_constant_is_independent_of_head_length() {
        let base = lateral_constant_oracle(&profile()).unwrap();
        for l in [0.006, 0.06, 0.6] {
            let mut cfg = RobotConfig::fitted_sec2();
            cfg.head_length = l;
            let c = lateral_constant_oracle(&InterfaceProfile::from_config(&cfg)).unwrap();
            assert_eq!(c, base);
        }
    }

    #[test]
    fn rest_state_has_no_drag() {
        let cfg = RobotConfig::control_sec4();
        let (state, topo) = build_robot(&cfg).unwrap();
        let f = assemble_hydro_forces(&state, &topo, &cfg).unwrap();
        assert_eq!(f.amax(), 0.0);
    }

    #[test]
    fn rigid_translation_matches_nodewise_sum() {
        let cfg = RobotConfig::control_sec4();
        let (mut state, topo) = build_robot(&cfg).unwrap();
        let v = Vec3::new(0.01, -0.002, 0.005);
        for i in 0..topo.n_nodes {
            state.qdot.fixed_rows_mut::<3>(3 * i).copy_from(&v);
        }
        let f = assemble_hydro_forces(&state, &topo, &cfg).unwrap();
        let c = DragCoefficients::from_config(&cfg);
        let mut tail_sum = Vec3::zeros();
        let mut oracle = Vec3::zeros();
        for nodes in &topo.tails {
            for &n in nodes {
                tail_sum += Vec3::new(f[3 * n], f[3 * n + 1], f[3 * n + 2]);
                // straight tails along z: the tangent is the z axis everywhere
                oracle += rft_node_force(&v, &Vec3::z(), topo.node_voronoi[n], &c);
            }
        }
        assert!((tail_sum - oracle).norm() < 1e-15 * oracle.norm().max(1.0));
        let h = topo.head_nodes[1];
        let fh = Vec3::new(f[3 * h], f[3 * h + 1], f[3 * h + 2]);
        assert!((fh - head_translation_drag(&v, &cfg)).norm() < 1e-18);
        // only tails and the head centre are loaded
        for n in [topo.head_nodes[0], topo.head_nodes[2]] {
            assert_eq!(f.fixed_rows::<3>(3 * n).norm(), 0.0);
        }
    }

    #[test]
    fn without_lateral_gain_head_force_opposes_velocity() {
        let cfg = RobotConfig::control_sec4().with_drag(3.0, 2.8, 0.0);
        let (mut state, topo) = build_robot(&cfg).unwrap();
        let h = topo.head_nodes[1];
        state
            .qdot
            .fixed_rows_mut::<3>(3 * h)
            .copy_from(&Vec3::new(0.01, 0.0, -0.02));
        state.qdot[topo.theta_index(0)] = 5.0;
        let f = assemble_hydro_forces(&state, &topo, &cfg).unwrap();
        let fh = Vec3::new(f[3 * h], f[3 * h + 1], f[3 * h + 2]);
        let v = state.node_velocity(h);
        assert!((fh.normalize() + v.normalize()).norm() < 1e-14);
    }

    #[test]
    fn hydro_forces_are_dissipative() {
        use rand::{rngs::StdRng, Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(5);
        for cfg in [RobotConfig::fitted_sec2(), RobotConfig::control_sec4()] {
            let (mut state, topo) = build_robot(&cfg).unwrap();
            for _ in 0..200 {
                for v in state.qdot.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
                let f = assemble_hydro_forces(&state, &topo, &cfg).unwrap();
                assert!(state.qdot.dot(&f) <= 1e-12);
            }
        }
    }

    #[test]
    fn damping_matrix_reproduces_forces() {
        let cfg = RobotConfig::fitted_sec2();
        let (mut state, topo) = build_robot(&cfg).unwrap();
        for (i, v) in state.qdot.iter_mut().enumerate() {
            *v = ((i * 37 % 11) as f64 - 5.0) * 0.01;
        }
        let f = assemble_hydro_forces(&state, &topo, &cfg).unwrap();
        let n = topo.ndof();
        let mut d = nalgebra::DMatrix::zeros(n, n);
        hydro_damping(&state.q, &topo, &cfg, |i, j, v| d[(i, j)] += v).unwrap();
        let g = &d * &state.qdot;
        assert!((&f - g).amax() < 1e-15);
    }
}
