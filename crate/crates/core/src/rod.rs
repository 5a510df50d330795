//! Discrete rod representation of the robot: a three-node head, a rigid
//! disc of spokes and `N` soft tails, together with the adapted frames,
//! curvature and twist that the force models consume.
//!
//! The robot is a tree. Every edge is oriented away from the head tip `x0`,
//! so each bend/twist stencil pairs the single incoming edge of a node with
//! one of its outgoing edges.

use std::f64::consts::{PI, TAU};

use nalgebra::{DVector, Rotation3, Vector3};

use crate::config::RobotConfig;
use crate::error::{ConfigError, GeometryError};

pub type Vec3 = Vector3<f64>;

/// Edges shorter than this are treated as degenerate geometry.
pub const MIN_EDGE_LENGTH: f64 = 1e-12;

/// Orthonormal adapted triad `{t, d1, d2}` attached to an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub t: Vec3,
    pub d1: Vec3,
    pub d2: Vec3,
}

impl Frame {
    /// Completes a triad from a tangent and a first director; `d1` is
    /// projected off `t` first.
    pub fn from_tangent(t: Vec3, d1: Vec3) -> Self {
        let mut f = Frame {
            t,
            d1,
            d2: Vec3::zeros(),
        };
        f.reorthonormalize();
        f
    }

    /// Gram-Schmidt with the tangent held fixed.
    pub fn reorthonormalize(&mut self) {
        self.t = self.t.normalize();
        let d1 = self.d1 - self.t * self.t.dot(&self.d1);
        self.d1 = d1.normalize();
        self.d2 = self.t.cross(&self.d1);
    }

    /// Largest entry of `F^T F - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let v = [self.t, self.d1, self.d2];
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v[i].dot(&v[j]) - target).abs());
            }
        }
        worst
    }

    /// Material frame obtained by rotating the directors by `theta` about `t`.
    pub fn rotated(&self, theta: f64) -> Frame {
        let (s, c) = theta.sin_cos();
        Frame {
            t: self.t,
            d1: self.d1 * c + self.d2 * s,
            d2: -self.d1 * s + self.d2 * c,
        }
    }

    pub fn rotate_by(&self, rot: &Rotation3<f64>) -> Frame {
        Frame {
            t: rot * self.t,
            d1: rot * self.d1,
            d2: rot * self.d2,
        }
    }
}

/// Rotates `u` by the minimal rotation carrying unit vector `t_old` onto
/// `t_new`. For antiparallel tangents the rotation is a half turn about
/// `fallback_axis` (which must be a unit vector orthogonal to `t_old`).
pub fn transport_vector(u: &Vec3, t_old: &Vec3, t_new: &Vec3, fallback_axis: &Vec3) -> Vec3 {
    let c = t_old.dot(t_new);
    if 1.0 + c < 1e-12 {
        return 2.0 * fallback_axis.dot(u) * fallback_axis - u;
    }
    let b = t_old.cross(t_new);
    // Rodrigues with sin = |b|, cos = c, (1 - cos)/sin^2 = 1/(1 + cos)
    u * c + b.cross(u) + b * (b.dot(u) / (1.0 + c))
}

/// Parallel transport of a frame onto a new unit tangent.
pub fn parallel_transport(frame: &Frame, t_new: &Vec3) -> Frame {
    let axis = {
        let p = frame.d1 - frame.t * frame.t.dot(&frame.d1);
        let n = p.norm();
        if n > 0.0 {
            p / n
        } else {
            frame.d2
        }
    };
    let d1 = transport_vector(&frame.d1, &frame.t, t_new, &axis);
    Frame {
        t: *t_new,
        d1,
        d2: t_new.cross(&d1),
    }
}

/// Signed angle from `u` to `v` about `n`.
pub fn signed_angle(u: &Vec3, v: &Vec3, n: &Vec3) -> f64 {
    let w = u.cross(v);
    w.dot(n).atan2(u.dot(v))
}

pub fn wrap_to_pi(a: f64) -> f64 {
    let mut r = (a + PI) % TAU;
    if r < 0.0 {
        r += TAU;
    }
    r - PI
}

/// Curvature binormal `2 e_a x e_b / (|e_a||e_b| + e_a . e_b)`.
pub fn curvature_binormal(e_prev: &Vec3, e_next: &Vec3) -> Result<Vec3, GeometryError> {
    let (la, lb) = (e_prev.norm(), e_next.norm());
    if la < MIN_EDGE_LENGTH {
        return Err(GeometryError::DegenerateEdge { edge: 0, length: la });
    }
    if lb < MIN_EDGE_LENGTH {
        return Err(GeometryError::DegenerateEdge { edge: 1, length: lb });
    }
    Ok(2.0 * e_prev.cross(e_next) / (la * lb + e_prev.dot(e_next)))
}

/// Material-frame components `(kappa1, kappa2)` of the curvature binormal
/// at the middle node, using the averaged directors of the two edges.
pub fn curvature_at_node(
    x_prev: &Vec3,
    x_node: &Vec3,
    x_next: &Vec3,
    material_prev: &Frame,
    material_next: &Frame,
) -> Result<[f64; 2], GeometryError> {
    let kb = curvature_binormal(&(x_node - x_prev), &(x_next - x_node))?;
    Ok([
        0.5 * kb.dot(&(material_prev.d2 + material_next.d2)),
        -0.5 * kb.dot(&(material_prev.d1 + material_next.d1)),
    ])
}

/// Integrated twist `theta_next - theta_prev + ref_twist`.
pub fn twist_at_node(theta_prev: f64, theta_next: f64, ref_twist: f64) -> f64 {
    theta_next - theta_prev + ref_twist
}

/// Rotation of the reference frame between two adjacent edges: the angle,
/// about the second tangent, from the space-transported first director to
/// the second director. Result lies in `(-pi, pi]`.
pub fn reference_twist(ref_prev: &Frame, ref_next: &Frame) -> f64 {
    let u = parallel_transport(ref_prev, &ref_next.t).d1;
    signed_angle(&u, &ref_next.d1, &ref_next.t)
}

/// Which rigid or soft body a node or edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Head,
    Disc,
    Tail(usize),
}

impl Segment {
    pub fn is_rigid(self) -> bool {
        !matches!(self, Segment::Tail(_))
    }
}

/// Bend/twist stencil: the node `node` with its incoming edge `edge_in`
/// (from `prev`) and one outgoing edge `edge_out` (to `next`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub prev: usize,
    pub node: usize,
    pub next: usize,
    pub edge_in: usize,
    pub edge_out: usize,
    /// Half-sum of the two undeformed edge lengths; only the tail half at
    /// a tail root.
    pub voronoi: f64,
    pub rigid: bool,
    /// Factor on the bending stiffness for curvature changes along the
    /// natural curvature; other directions keep the full stiffness.
    pub rest_bend_scale: f64,
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub n_nodes: usize,
    pub edges: Vec<[usize; 2]>,
    pub edge_segment: Vec<Segment>,
    pub rest_length: Vec<f64>,
    pub node_segment: Vec<Segment>,
    /// Voronoi length of each node along its own body (tail or head).
    pub node_voronoi: Vec<f64>,
    pub stencils: Vec<Stencil>,
    pub head_nodes: [usize; 3],
    /// Node indices of each tail, root first.
    pub tails: Vec<Vec<usize>>,
    /// Edge indices of each tail, root first.
    pub tail_edges: Vec<Vec<usize>>,
    pub spokes: Vec<usize>,
    /// Stencil whose natural twist is driven by the motor.
    pub motor_stencil: usize,
}

impl Topology {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn ndof(&self) -> usize {
        3 * self.n_nodes + self.edges.len()
    }

    pub fn x_index(&self, node: usize) -> usize {
        3 * node
    }

    pub fn theta_index(&self, edge: usize) -> usize {
        3 * self.n_nodes + edge
    }

    /// Global DOF indices touched by a stencil, in local order
    /// `[x_prev, x_node, x_next, theta_in, theta_out]`.
    pub fn stencil_dofs(&self, s: &Stencil) -> [usize; 11] {
        let mut d = [0; 11];
        for k in 0..3 {
            d[k] = 3 * s.prev + k;
            d[3 + k] = 3 * s.node + k;
            d[6 + k] = 3 * s.next + k;
        }
        d[9] = self.theta_index(s.edge_in);
        d[10] = self.theta_index(s.edge_out);
        d
    }
}

/// Full dynamic state of the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    /// `[x_0, ..., x_{n-1}, theta^0, ..., theta^{m-1}]`.
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub ref_frames: Vec<Frame>,
    pub mat_frames: Vec<Frame>,
    /// Accumulated (unwrapped) reference twist per stencil.
    pub ref_twist: Vec<f64>,
    pub natural_twist: Vec<f64>,
    pub natural_curvature: Vec<[f64; 2]>,
    pub time: f64,
}

impl RobotState {
    pub fn node(&self, i: usize) -> Vec3 {
        Vec3::new(self.q[3 * i], self.q[3 * i + 1], self.q[3 * i + 2])
    }

    pub fn node_velocity(&self, i: usize) -> Vec3 {
        Vec3::new(self.qdot[3 * i], self.qdot[3 * i + 1], self.qdot[3 * i + 2])
    }

    pub fn theta(&self, topo: &Topology, edge: usize) -> f64 {
        self.q[topo.theta_index(edge)]
    }

    pub fn edge_vector(&self, topo: &Topology, edge: usize) -> Vec3 {
        let [a, b] = topo.edges[edge];
        node_of(&self.q, b) - node_of(&self.q, a)
    }

    /// Unit head axis, pointing from the head tip `x0` towards the tails.
    pub fn head_axis(&self, topo: &Topology) -> Vec3 {
        self.edge_vector(topo, 0).normalize()
    }

    /// Transports the reference frames onto the current tangents,
    /// re-orthonormalizes them and refreshes the reference twist and the
    /// material frames.
    pub fn update_frames(&mut self, topo: &Topology) -> Result<(), GeometryError> {
        for e in 0..topo.n_edges() {
            let v = self.edge_vector(topo, e);
            let len = v.norm();
            if len < MIN_EDGE_LENGTH {
                return Err(GeometryError::DegenerateEdge { edge: e, length: len });
            }
            let mut f = parallel_transport(&self.ref_frames[e], &(v / len));
            f.reorthonormalize();
            self.ref_frames[e] = f;
        }
        for (k, s) in topo.stencils.iter().enumerate() {
            let raw = reference_twist(&self.ref_frames[s.edge_in], &self.ref_frames[s.edge_out]);
            self.ref_twist[k] += wrap_to_pi(raw - self.ref_twist[k]);
        }
        self.refresh_material_frames(topo);
        Ok(())
    }

    pub fn refresh_material_frames(&mut self, topo: &Topology) {
        for e in 0..topo.n_edges() {
            self.mat_frames[e] = self.ref_frames[e].rotated(self.theta(topo, e));
        }
    }

    /// Current curvature components at every stencil.
    pub fn curvatures(&self, topo: &Topology) -> Result<Vec<[f64; 2]>, GeometryError> {
        topo.stencils
            .iter()
            .map(|s| {
                curvature_at_node(
                    &self.node(s.prev),
                    &self.node(s.node),
                    &self.node(s.next),
                    &self.mat_frames[s.edge_in],
                    &self.mat_frames[s.edge_out],
                )
            })
            .collect()
    }

    pub fn twists(&self, topo: &Topology) -> Vec<f64> {
        topo.stencils
            .iter()
            .enumerate()
            .map(|(k, s)| {
                twist_at_node(
                    self.theta(topo, s.edge_in),
                    self.theta(topo, s.edge_out),
                    self.ref_twist[k],
                )
            })
            .collect()
    }

    /// Rigidly rotates positions, velocities and frames about `pivot`.
    pub fn rotate_rigidly(&mut self, topo: &Topology, rot: &Rotation3<f64>, pivot: &Vec3) {
        for i in 0..topo.n_nodes {
            let x = rot * (self.node(i) - pivot) + pivot;
            let v = rot * self.node_velocity(i);
            for k in 0..3 {
                self.q[3 * i + k] = x[k];
                self.qdot[3 * i + k] = v[k];
            }
        }
        for f in self.ref_frames.iter_mut().chain(self.mat_frames.iter_mut()) {
            *f = f.rotate_by(rot);
        }
    }
}

pub(crate) fn node_of(q: &DVector<f64>, i: usize) -> Vec3 {
    Vec3::new(q[3 * i], q[3 * i + 1], q[3 * i + 2])
}

/// Discretizes the robot at rest: head axis along world `z`, head centre at
/// the origin, tails parallel to the axis behind the disc.
pub fn build_robot(config: &RobotConfig) -> Result<(RobotState, Topology), ConfigError> {
    config.validate()?;
    let n_tails = config.n_tails;
    let npt = config.nodes_per_tail;
    let half = 0.5 * config.head_length;

    let mut positions = vec![
        Vec3::new(0.0, 0.0, -half),
        Vec3::zeros(),
        Vec3::new(0.0, 0.0, half),
    ];
    let mut node_segment = vec![Segment::Head; 3];
    let mut edges = vec![[0, 1], [1, 2]];
    let mut edge_segment = vec![Segment::Head, Segment::Head];
    let mut tails = Vec::with_capacity(n_tails);
    let mut spokes = Vec::with_capacity(n_tails);

    let ds = config.tail_length / (npt - 1) as f64;
    for i in 0..n_tails {
        // first tail on top; the set is symmetric about the vertical plane
        // through the head axis
        let phi = 0.5 * PI + TAU * i as f64 / n_tails as f64;
        let root = positions[2] + config.spoke_length * Vec3::new(phi.cos(), phi.sin(), 0.0);
        let mut nodes = Vec::with_capacity(npt);
        for j in 0..npt {
            nodes.push(positions.len());
            positions.push(root + Vec3::new(0.0, 0.0, ds * j as f64));
            node_segment.push(Segment::Tail(i));
        }
        tails.push(nodes);
    }
    for nodes in &tails {
        spokes.push(edges.len());
        edges.push([2, nodes[0]]);
        edge_segment.push(Segment::Disc);
    }
    let mut tail_edges = Vec::with_capacity(n_tails);
    for (i, nodes) in tails.iter().enumerate() {
        let mut te = Vec::with_capacity(npt - 1);
        for w in nodes.windows(2) {
            te.push(edges.len());
            edges.push([w[0], w[1]]);
            edge_segment.push(Segment::Tail(i));
        }
        tail_edges.push(te);
    }

    let rest_length: Vec<f64> = edges
        .iter()
        .map(|&[a, b]| (positions[b] - positions[a]).norm())
        .collect();

    let n_nodes = positions.len();
    let mut node_voronoi = vec![0.0; n_nodes];
    for (e, &[a, b]) in edges.iter().enumerate() {
        // a node only accumulates length from edges of its own body
        for n in [a, b] {
            if node_segment[n] == edge_segment[e] {
                node_voronoi[n] += 0.5 * rest_length[e];
            }
        }
    }

    let mut stencils = Vec::new();
    let mut push_stencil = |prev: usize, node: usize, next: usize, ein: usize, eout: usize, rigid: bool| {
        stencils.push(Stencil {
            prev,
            node,
            next,
            edge_in: ein,
            edge_out: eout,
            voronoi: 0.5 * (rest_length[ein] + rest_length[eout]),
            rigid,
            rest_bend_scale: 1.0,
        });
    };
    push_stencil(0, 1, 2, 0, 1, true);
    for (i, nodes) in tails.iter().enumerate() {
        push_stencil(1, 2, nodes[0], 1, spokes[i], true);
    }
    let first_root = 1 + n_tails;
    for (i, nodes) in tails.iter().enumerate() {
        push_stencil(2, nodes[0], nodes[1], spokes[i], tail_edges[i][0], false);
    }
    for (nodes, te) in tails.iter().zip(&tail_edges) {
        for j in 1..npt - 1 {
            push_stencil(nodes[j - 1], nodes[j], nodes[j + 1], te[j - 1], te[j], false);
        }
    }

    // A tail root is clamped in the disc, so its joint stands for the
    // tail's first half cell. At the 90 degree corner an in-plane rotation
    // changes |kappa| at four times the rate of a straight joint.
    for (i, st) in stencils[first_root..first_root + n_tails].iter_mut().enumerate() {
        st.voronoi = 0.5 * rest_length[tail_edges[i][0]];
        st.rest_bend_scale = 0.25;
    }

    // Reference frames: space-parallel transport outward from the head so
    // that every reference twist starts at zero.
    let tangents: Vec<Vec3> = edges
        .iter()
        .map(|&[a, b]| (positions[b] - positions[a]).normalize())
        .collect();
    let mut ref_frames = vec![
        Frame {
            t: Vec3::z(),
            d1: Vec3::x(),
            d2: Vec3::y()
        };
        edges.len()
    ];
    ref_frames[0] = Frame::from_tangent(tangents[0], Vec3::x());
    ref_frames[1] = parallel_transport(&ref_frames[0], &tangents[1]);
    for i in 0..n_tails {
        ref_frames[spokes[i]] = parallel_transport(&ref_frames[1], &tangents[spokes[i]]);
        let mut parent = spokes[i];
        for &e in &tail_edges[i] {
            ref_frames[e] = parallel_transport(&ref_frames[parent], &tangents[e]);
            parent = e;
        }
    }

    let ndof = 3 * n_nodes + edges.len();
    let mut q = DVector::zeros(ndof);
    for (i, p) in positions.iter().enumerate() {
        q.fixed_rows_mut::<3>(3 * i).copy_from(p);
    }

    let topo = Topology {
        n_nodes,
        edges,
        edge_segment,
        rest_length,
        node_segment,
        node_voronoi,
        stencils,
        head_nodes: [0, 1, 2],
        tails,
        tail_edges,
        spokes,
        motor_stencil: 0,
    };

    let n_st = topo.stencils.len();
    let mut state = RobotState {
        q,
        qdot: DVector::zeros(ndof),
        mat_frames: ref_frames.clone(),
        ref_frames,
        ref_twist: vec![0.0; n_st],
        natural_twist: vec![0.0; n_st],
        natural_curvature: vec![[0.0; 2]; n_st],
        time: 0.0,
    };
    state
        .update_frames(&topo)
        .expect("freshly built robot has finite edges");
    // the disc corners are stress-free as built; head and tails are
    // straight, so their natural curvature is exactly zero
    state.natural_curvature = state
        .curvatures(&topo)
        .expect("freshly built robot has finite edges");
    Ok((state, topo))
}
