//! Exact discrete optimal transport (transportation simplex).

#![allow(clippy::needless_range_loop)]

use nalgebra::DMatrix;

/// Pivot budget per problem; the simplex rarely needs more than a few
/// multiples of `n * m`.
const PIVOT_FACTOR: usize = 50;

/// Minimises `<cost, pi>` over couplings of `p` and `q`. Returns a vertex of
/// the transport polytope.
pub fn solve_transport(cost: &DMatrix<f64>, p: &[f64], q: &[f64]) -> DMatrix<f64> {
    let (n, m) = cost.shape();
    assert_eq!((n, m), (p.len(), q.len()), "cost shape must match marginals");
    if n == 1 {
        return DMatrix::from_fn(1, m, |_, j| q[j]);
    }
    if m == 1 {
        return DMatrix::from_fn(n, 1, |i, _| p[i]);
    }
    if n == 2 {
        return two_sources(cost, p, q);
    }
    if m == 2 {
        return two_sources(&cost.transpose(), q, p).transpose();
    }
    Simplex::new(cost, p, q).run()
}

/// With two sources the optimum fills source 0 with the sinks that favour it
/// most, i.e. in ascending order of `c_0j - c_1j`.
fn two_sources(cost: &DMatrix<f64>, p: &[f64], q: &[f64]) -> DMatrix<f64> {
    let m = q.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| {
        let dx = cost[(0, x)] - cost[(1, x)];
        let dy = cost[(0, y)] - cost[(1, y)];
        dx.total_cmp(&dy).then(x.cmp(&y))
    });
    let mut pi = DMatrix::zeros(2, m);
    let mut left = p[0];
    for j in order {
        let take = left.min(q[j]).max(0.0);
        pi[(0, j)] = take;
        pi[(1, j)] = q[j] - take;
        left -= take;
    }
    pi
}

struct Simplex<'a> {
    cost: &'a DMatrix<f64>,
    n: usize,
    m: usize,
    x: DMatrix<f64>,
    basic: Vec<(usize, usize)>,
    is_basic: DMatrix<u8>,
}

impl<'a> Simplex<'a> {
    /// North-west corner start; moving one index per step keeps exactly
    /// `n + m - 1` basic cells that form a spanning tree.
    fn new(cost: &'a DMatrix<f64>, p: &[f64], q: &[f64]) -> Self {
        let (n, m) = cost.shape();
        let mut supply = p.to_vec();
        let mut demand = q.to_vec();
        let mut x = DMatrix::zeros(n, m);
        let mut is_basic = DMatrix::zeros(n, m);
        let mut basic = Vec::with_capacity(n + m - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let amt = supply[i].min(demand[j]).max(0.0);
            x[(i, j)] = amt;
            supply[i] -= amt;
            demand[j] -= amt;
            basic.push((i, j));
            is_basic[(i, j)] = 1;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if j == m - 1 || (i < n - 1 && supply[i] <= demand[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self {
            cost,
            n,
            m,
            x,
            basic,
            is_basic,
        }
    }

    /// Tree adjacency over nodes `0..n` (rows) and `n..n+m` (columns); each
    /// entry stores the neighbour node and the basic cell index.
    fn tree(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n + self.m];
        for (e, &(i, j)) in self.basic.iter().enumerate() {
            adj[i].push((self.n + j, e));
            adj[self.n + j].push((i, e));
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut pot = vec![f64::NAN; n + self.m];
        pot[0] = 0.0;
        let mut stack = vec![0];
        while let Some(u) = stack.pop() {
            for &(w, e) in &adj[u] {
                if pot[w].is_nan() {
                    let (i, j) = self.basic[e];
                    // u_i + v_j = c_ij along basic cells
                    pot[w] = self.cost[(i, j)] - pot[u];
                    stack.push(w);
                }
            }
        }
        let v = pot.split_off(n);
        (pot, v)
    }

    /// Basic cells on the tree path from row `i` to column `j`, in order.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let total = self.n + self.m;
        let mut parent = vec![(usize::MAX, usize::MAX); total];
        parent[i] = (i, usize::MAX);
        let mut stack = vec![i];
        let target = self.n + j;
        while let Some(u) = stack.pop() {
            if u == target {
                break;
            }
            for &(w, e) in &adj[u] {
                if parent[w].0 == usize::MAX {
                    parent[w] = (u, e);
                    stack.push(w);
                }
            }
        }
        let mut cells = Vec::new();
        let mut u = target;
        while u != i {
            let (prev, e) = parent[u];
            cells.push(e);
            u = prev;
        }
        cells
    }

    fn run(mut self) -> DMatrix<f64> {
        let scale = self.cost.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1.0);
        let budget = PIVOT_FACTOR * self.n * self.m + 100;
        for _ in 0..budget {
            let adj = self.tree();
            let (u, v) = self.potentials(&adj);
            let mut best = (-1e-12 * scale, usize::MAX, usize::MAX);
            for j in 0..self.m {
                for i in 0..self.n {
                    if self.is_basic[(i, j)] == 0 {
                        let r = self.cost[(i, j)] - u[i] - v[j];
                        if r < best.0 {
                            best = (r, i, j);
                        }
                    }
                }
            }
            if best.1 == usize::MAX {
                return self.x;
            }
            let (_, ei, ej) = best;
            // path runs from column ej back to row ei: signs -, +, -, ...
            let cells = self.path(&adj, ei, ej);
            let mut theta = f64::INFINITY;
            let mut leave = usize::MAX;
            for (pos, &e) in cells.iter().enumerate() {
                if pos % 2 == 0 {
                    let (i, j) = self.basic[e];
                    if self.x[(i, j)] < theta {
                        theta = self.x[(i, j)];
                        leave = e;
                    }
                }
            }
            for (pos, &e) in cells.iter().enumerate() {
                let (i, j) = self.basic[e];
                if pos % 2 == 0 {
                    self.x[(i, j)] = (self.x[(i, j)] - theta).max(0.0);
                } else {
                    self.x[(i, j)] += theta;
                }
            }
            let (li, lj) = self.basic[leave];
            self.x[(li, lj)] = 0.0;
            self.is_basic[(li, lj)] = 0;
            self.x[(ei, ej)] = theta;
            self.is_basic[(ei, ej)] = 1;
            self.basic[leave] = (ei, ej);
        }
        log::warn!("transport simplex hit its pivot budget; returning a feasible vertex");
        self.x
    }
}
