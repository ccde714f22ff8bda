//! Transportation simplex (MODI / u-v method) for small dense problems.
//!
//! The basis is a spanning tree on the bipartite graph of rows and columns
//! with `m + n - 1` cells, some possibly carrying zero flow. Pricing is
//! Dantzig's rule; after a run of degenerate pivots it switches to Bland's
//! rule, which cannot cycle.

use std::collections::VecDeque;

use crate::matrix::Matrix;

/// Degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_RUN: usize = 50;

pub(crate) struct LpSolution {
    /// Basic cells `(i, j, flow)` with positive flow.
    pub flows: Vec<(usize, usize, f64)>,
    pub value: f64,
}

pub(crate) fn transportation_simplex(cost: &Matrix<f64>, supply: &[f64], demand: &[f64]) -> LpSolution {
    let (m, n) = (supply.len(), demand.len());
    debug_assert_eq!(cost.rows(), m);
    debug_assert_eq!(cost.cols(), n);
    let scale = cost.as_slice().iter().fold(0.0f64, |acc, c| acc.max(c.abs())).max(1.0);
    let tol = 1e-12 * scale;

    let mut basis = Basis::north_west(supply, demand);
    let mut degenerate = 0usize;
    let max_pivots = 50 * (m + n) * (m + n) + 1000;
    for _ in 0..max_pivots {
        let (u, v) = basis.potentials(cost);
        let entering = if degenerate < DEGENERATE_RUN { dantzig(cost, &u, &v, tol) } else { bland(cost, &u, &v, tol) };
        let Some((ei, ej)) = entering else { break };
        let theta = basis.pivot(ei, ej);
        if theta > 0.0 {
            degenerate = 0;
        } else {
            degenerate += 1;
        }
    }

    let mut flows = Vec::new();
    let mut value = 0.0;
    for &(i, j) in &basis.cells {
        let f = basis.flow[i * n + j];
        if f > 0.0 {
            value += f * cost[(i, j)];
            flows.push((i, j, f));
        }
    }
    LpSolution { flows, value }
}

fn dantzig(cost: &Matrix<f64>, u: &[f64], v: &[f64], tol: f64) -> Option<(usize, usize)> {
    let mut best = None;
    let mut best_rc = -tol;
    for (i, ui) in u.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            let rc = cost[(i, j)] - ui - vj;
            if rc < best_rc {
                best_rc = rc;
                best = Some((i, j));
            }
        }
    }
    best
}

fn bland(cost: &Matrix<f64>, u: &[f64], v: &[f64], tol: f64) -> Option<(usize, usize)> {
    for (i, ui) in u.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            if cost[(i, j)] - ui - vj < -tol {
                return Some((i, j));
            }
        }
    }
    None
}

struct Basis {
    m: usize,
    n: usize,
    /// Dense flow array, row-major.
    flow: Vec<f64>,
    cells: Vec<(usize, usize)>,
}

impl Basis {
    fn north_west(supply: &[f64], demand: &[f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut basis = Self { m, n, flow: vec![0.0; m * n], cells: Vec::with_capacity(m + n - 1) };
        let mut rem_s = supply.to_vec();
        let mut rem_d = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let f = rem_s[i].min(rem_d[j]).max(0.0);
            basis.flow[i * n + j] = f;
            basis.cells.push((i, j));
            rem_s[i] -= f;
            rem_d[j] -= f;
            if i == m - 1 && j == n - 1 {
                break;
            }
            // Advance exactly one index so the basis stays a tree of m+n-1 cells.
            if j == n - 1 || (i < m - 1 && rem_s[i] <= rem_d[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        basis
    }

    /// Tree adjacency: node `r` is row `r`, node `m + c` is column `c`.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for &(i, j) in &self.cells {
            adj[i].push(self.m + j);
            adj[self.m + j].push(i);
        }
        adj
    }

    fn potentials(&self, cost: &Matrix<f64>) -> (Vec<f64>, Vec<f64>) {
        let adj = self.adjacency();
        let total = self.m + self.n;
        let mut pot = vec![f64::NAN; total];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(a) = queue.pop_front() {
            for &b in &adj[a] {
                if pot[b].is_nan() {
                    let c = if a < self.m { cost[(a, b - self.m)] } else { cost[(b, a - self.m)] };
                    pot[b] = c - pot[a];
                    queue.push_back(b);
                }
            }
        }
        let v = pot.split_off(self.m);
        (pot, v)
    }

    /// Enter cell `(ei, ej)`, push flow around the cycle, drop one cell.
    /// Returns the amount pushed.
    fn pivot(&mut self, ei: usize, ej: usize) -> f64 {
        let path = self.tree_path(ej + self.m, ei);
        // path runs column ej -> ... -> row ei; consecutive node pairs are basic cells.
        // The cycle is (ei,ej)+, then cells along the path alternate -, +, -, ...
        let cells: Vec<(usize, usize)> = path
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                if a < self.m {
                    (a, b - self.m)
                } else {
                    (b, a - self.m)
                }
            })
            .collect();
        let mut theta = f64::INFINITY;
        let mut leave = 0usize;
        for (k, &(i, j)) in cells.iter().enumerate().step_by(2) {
            let f = self.flow[i * self.n + j];
            let better = f < theta || (f == theta && (i, j) < cells[leave]);
            if better {
                theta = f;
                leave = k;
            }
        }
        for (k, &(i, j)) in cells.iter().enumerate() {
            let slot = &mut self.flow[i * self.n + j];
            if k % 2 == 0 {
                *slot -= theta;
            } else {
                *slot += theta;
            }
        }
        self.flow[ei * self.n + ej] += theta;
        let (li, lj) = cells[leave];
        self.flow[li * self.n + lj] = 0.0;
        self.cells.retain(|&c| c != (li, lj));
        self.cells.push((ei, ej));
        theta
    }

    fn tree_path(&self, from: usize, to: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let mut parent = vec![usize::MAX; self.m + self.n];
        parent[from] = from;
        let mut queue = VecDeque::from([from]);
        while let Some(a) = queue.pop_front() {
            if a == to {
                break;
            }
            for &b in &adj[a] {
                if parent[b] == usize::MAX {
                    parent[b] = a;
                    queue.push_back(b);
                }
            }
        }
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = parent[cur];
            path.push(cur);
        }
        path.reverse();
        path
    }
}
