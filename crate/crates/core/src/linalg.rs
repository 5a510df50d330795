//! Linear solves for the Newton systems.
//!
//! The robot Jacobian is a set of banded tail blocks that only talk to each
//! other through a small hub (head and shaft DOFs). Tails are factored as
//! one banded matrix with partial pivoting and the hub is closed off with a
//! dense Schur complement.

use nalgebra::{DMatrix, DVector};

use crate::error::SimError;
use crate::rod::Topology;

/// Square matrix with `kl` sub- and `ku` super-diagonals. Storage reserves
/// `kl` extra super-diagonals for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.kl + self.ku {
            0.0
        } else {
            self.data[self.at(i, j)]
        }
    }

    /// Adds `v` at `(i, j)`; panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside band ({}, {})",
            self.kl,
            self.ku
        );
        let k = self.at(i, j);
        self.data[k] += v;
    }

    /// LU factorization with partial pivoting.
    pub fn factor(mut self) -> Result<BandLu, SimError> {
        let n = self.n;
        let ku_fill = self.kl + self.ku;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * f64::EPSILON * 1e-3;
        let mut pivots = Vec::with_capacity(n);
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + ku_fill).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.at(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tiny) {
                return Err(SimError::Singular { pivot: k });
            }
            pivots.push(p);
            if p != k {
                for j in k..=last_col {
                    let (a, c) = (self.at(k, j), self.at(p, j));
                    self.data.swap(a, c);
                }
            }
            let row_k = self.at(k, k);
            let pivot = self.data[row_k];
            for i in k + 1..=last_row {
                let row_i = self.at(i, k);
                let l = self.data[row_i] / pivot;
                self.data[row_i] = l;
                if l == 0.0 {
                    continue;
                }
                for off in 1..=last_col - k {
                    self.data[row_i + off] -= l * self.data[row_k + off];
                }
            }
        }
        Ok(BandLu { m: self, pivots })
    }

    /// Solves `A x = b` in place of `b`, consuming the matrix.
    pub fn solve(self, b: &mut DVector<f64>) -> Result<(), SimError> {
        self.factor()?.solve_in_place(b.as_mut_slice());
        Ok(())
    }
}

/// Factors produced by [`BandMatrix::factor`].
#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.m;
        let n = m.n;
        assert_eq!(b.len(), n);
        let ku_fill = m.kl + m.ku;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + m.kl).min(n - 1) {
                    b[i] -= m.data[m.at(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + ku_fill).min(n - 1);
            let row = m.at(k, k);
            let mut s = b[k];
            for off in 1..=last_col - k {
                s -= m.data[row + off] * b[k + off];
            }
            b[k] = s / m.data[row];
        }
    }
}

/// Position of every DOF in the solver ordering and the hub size.
///
/// Tails come first, one after the other, each starting with its spoke
/// twist and then alternating node positions and edge twists from root to
/// tip. The hub (head and shaft nodes, head and shaft twists) comes last.
pub fn robot_ordering(topo: &Topology) -> (Vec<usize>, usize) {
    let mut order = Vec::with_capacity(topo.ndof());
    for (i, nodes) in topo.tails.iter().enumerate() {
        order.push(topo.theta_index(topo.spokes[i]));
        let edges = &topo.tail_edges[i];
        for (j, &n) in nodes.iter().enumerate() {
            order.extend(3 * n..3 * n + 3);
            if let Some(&e) = edges.get(j) {
                order.push(topo.theta_index(e));
            }
        }
    }
    let tail_dofs = order.len();
    for n in topo.head_nodes {
        order.extend(3 * n..3 * n + 3);
    }
    order.push(topo.theta_index(0));
    order.push(topo.theta_index(1));
    debug_assert_eq!(order.len(), topo.ndof());
    let mut pos = vec![0; order.len()];
    for (p, &d) in order.iter().enumerate() {
        pos[d] = p;
    }
    (pos, order.len() - tail_dofs)
}

/// Half bandwidth of the tail block under `pos`, ignoring hub DOFs.
pub fn tail_bandwidth(topo: &Topology, pos: &[usize], n_tail_dofs: usize) -> usize {
    let mut bw = 0;
    let mut span = |dofs: &[usize]| {
        let inner = dofs.iter().map(|&d| pos[d]).filter(|&p| p < n_tail_dofs);
        let (lo, hi) = inner.fold((usize::MAX, 0), |(lo, hi), p| (lo.min(p), hi.max(p)));
        if lo <= hi {
            bw = bw.max(hi - lo);
        }
    };
    for s in &topo.stencils {
        span(&topo.stencil_dofs(s));
    }
    for &[a, b] in &topo.edges {
        span(&[3 * a, 3 * a + 1, 3 * a + 2, 3 * b, 3 * b + 1, 3 * b + 2]);
    }
    bw
}

/// Newton system of one robot, indexed by global DOF.
#[derive(Debug, Clone)]
pub struct BorderedSystem {
    pos: Vec<usize>,
    na: usize,
    a: BandMatrix,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl BorderedSystem {
    pub fn new(topo: &Topology) -> Self {
        let (pos, nh) = robot_ordering(topo);
        let na = pos.len() - nh;
        let bw = tail_bandwidth(topo, &pos, na);
        Self {
            a: BandMatrix::zeros(na, bw, bw),
            b: DMatrix::zeros(na, nh),
            c: DMatrix::zeros(nh, na),
            d: DMatrix::zeros(nh, nh),
            pos,
            na,
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (pi, pj) = (self.pos[i], self.pos[j]);
        let na = self.na;
        match (pi < na, pj < na) {
            (true, true) => self.a.add(pi, pj, v),
            (true, false) => self.b[(pi, pj - na)] += v,
            (false, true) => self.c[(pi - na, pj)] += v,
            (false, false) => self.d[(pi - na, pj - na)] += v,
        }
    }

    /// Factors the system for repeated solves.
    pub fn factor(self) -> Result<BorderedLu, SimError> {
        let nh = self.d.nrows();
        let lu = self.a.factor()?;
        // tail block applied to the border
        let mut x_b = self.b;
        for col in 0..nh {
            lu.solve_in_place(x_b.column_mut(col).as_mut_slice());
        }
        let schur = (self.d - &self.c * &x_b).lu();
        if !schur.is_invertible() {
            return Err(SimError::Singular { pivot: self.na });
        }
        Ok(BorderedLu {
            pos: self.pos,
            na: self.na,
            lu,
            x_b,
            c: self.c,
            schur,
        })
    }

    /// Solves with the right-hand side given and returned in global order.
    pub fn solve(self, rhs: &DVector<f64>) -> Result<DVector<f64>, SimError> {
        Ok(self.factor()?.solve(rhs))
    }
}

/// Factors produced by [`BorderedSystem::factor`].
#[derive(Debug, Clone)]
pub struct BorderedLu {
    pos: Vec<usize>,
    na: usize,
    lu: BandLu,
    x_b: DMatrix<f64>,
    c: DMatrix<f64>,
    schur: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl BorderedLu {
    /// Solves with the right-hand side given and returned in global order.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let na = self.na;
        let nh = self.x_b.ncols();
        let mut r = DVector::zeros(rhs.len());
        for (dof, &p) in self.pos.iter().enumerate() {
            r[p] = rhs[dof];
        }
        let mut x_r = r.rows(0, na).clone_owned();
        self.lu.solve_in_place(x_r.as_mut_slice());
        let rhs_h = r.rows(na, nh) - &self.c * &x_r;
        let y = self
            .schur
            .solve(&rhs_h)
            .expect("invertibility checked when factoring");
        let x_a = x_r - &self.x_b * &y;
        DVector::from_fn(rhs.len(), |dof, _| {
            let p = self.pos[dof];
            if p < na {
                x_a[p]
            } else {
                y[p - na]
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RobotConfig;
    use crate::rod::build_robot;
    use proptest::prelude::*;

    fn random_band(n: usize, kl: usize, ku: usize, vals: &[f64]) -> (BandMatrix, DMatrix<f64>) {
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::zeros(n, n);
        let mut it = vals.iter().cycle();
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = *it.next().unwrap();
                band.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        (band, dense)
    }

    proptest! {
        #[test]
        fn matches_dense_solve(
            n in 1usize..30, kl in 0usize..5, ku in 0usize..5,
            vals in proptest::collection::vec(-1.0f64..1.0, 50),
            rhs in proptest::collection::vec(-1.0f64..1.0, 30),
        ) {
            let (band, dense) = random_band(n, kl, ku, &vals);
            let b = DVector::from_iterator(n, rhs.iter().copied().take(n));
            let s = dense.clone().singular_values();
            let cond = s.max() / s.min();
            prop_assume!(cond.is_finite() && cond < 1e8);
            let mut x = b.clone();
            band.solve(&mut x).unwrap();
            let r = &dense * &x - &b;
            prop_assert!(r.amax() < 1e-9 * cond.max(1.0), "{}", r.amax());
        }
    }

    #[test]
    fn needs_pivoting() {
        let mut a = BandMatrix::zeros(2, 1, 1);
        a.add(0, 1, 1.0);
        a.add(1, 0, 1.0);
        let mut b = DVector::from_vec(vec![2.0, 3.0]);
        a.solve(&mut b).unwrap();
        assert_eq!(b.as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn singular_is_reported() {
        let mut a = BandMatrix::zeros(3, 1, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        let mut b = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert!(matches!(a.solve(&mut b), Err(SimError::Singular { pivot: 2 })));
    }

    #[test]
    fn ordering_is_a_permutation_with_narrow_tails() {
        for cfg in [RobotConfig::fitted_sec2(), RobotConfig::control_sec4()] {
            let (_, topo) = build_robot(&cfg).unwrap();
            let (pos, nh) = robot_ordering(&topo);
            assert_eq!(nh, 11);
            let mut seen = pos.clone();
            seen.sort_unstable();
            assert!(seen.iter().enumerate().all(|(i, &p)| i == p));
            let bw = tail_bandwidth(&topo, &pos, pos.len() - nh);
            assert!(bw <= 10, "{bw}");
        }
    }

    #[test]
    fn bordered_solve_matches_dense_on_robot_pattern() {
        let cfg = RobotConfig::fitted_sec2();
        let (state, topo) = build_robot(&cfg).unwrap();
        let n = topo.ndof();
        let mut sys = BorderedSystem::new(&topo);
        let mut dense = DMatrix::zeros(n, n);
        let mut v = 0.37;
        let mut put = |i: usize, j: usize, sys: &mut BorderedSystem, dense: &mut DMatrix<f64>| {
            v = (v * 7.13 + 0.11) % 1.0;
            let x = v - 0.5;
            sys.add(i, j, x);
            dense[(i, j)] += x;
        };
        for s in &topo.stencils {
            let d = topo.stencil_dofs(s);
            for &i in &d {
                for &j in &d {
                    put(i, j, &mut sys, &mut dense);
                }
            }
        }
        for i in 0..n {
            sys.add(i, i, 4.0);
            dense[(i, i)] += 4.0;
        }
        let rhs = DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin());
        let x = sys.solve(&rhs).unwrap();
        let r = &dense * &x - &rhs;
        assert!(r.amax() < 1e-10, "{}", r.amax());
        assert_eq!(state.q.len(), n);
    }
}
