//! Global minimum of the objective over the full coupling polytope for
//! graphs with at most four vertices per side.
//!
//! Every face of the transport polytope is `{pi : pi_ij = 0 outside S}` for
//! some support pattern `S`. A global minimiser lies in the relative interior
//! of some face, where it is a stationary point of the quadratic restricted
//! to that face's affine hull. If the restricted Hessian is singular there,
//! the objective is constant along a line through the minimiser, which
//! carries it to a smaller face; vertices are always nonsingular. Solving the
//! KKT system of every nonsingular face therefore finds the optimum exactly,
//! up to round-off.

#![allow(clippy::needless_range_loop)]

use super::{Coupling, FgwParams, GraphMeasure, check_inputs, feature_matrix, fgw_cost};
use crate::{Error, Result};
use nalgebra::DMatrix;

pub const EXACT_CAP: usize = 4;

const CELLS: usize = EXACT_CAP * EXACT_CAP;
const KKT: usize = CELLS + 2 * EXACT_CAP;
const FEAS_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-12;

pub fn fgw_exact_small(a: &GraphMeasure, b: &GraphMeasure, params: &FgwParams) -> Result<(f64, Coupling)> {
    let (n, m) = (a.len(), b.len());
    for s in [n, m] {
        if s > EXACT_CAP {
            return Err(Error::SizeCapExceeded { cap: EXACT_CAP, got: s });
        }
    }
    check_inputs(a, b, params)?;
    let nm = n * m;
    let alpha = params.alpha;
    let d = feature_matrix(a, b, params.metric);
    let sa = a.structure_matrix();
    let sb = b.structure_matrix();
    let mut c = [0.0; CELLS];
    let mut q = [[0.0; CELLS]; CELLS];
    for r in 0..nm {
        c[r] = (1.0 - alpha) * d[(r / m, r % m)];
        for s in 0..nm {
            q[r][s] = alpha * (sa[(r / m, s / m)] - sb[(r % m, s % m)]).abs();
        }
    }
    let quadratic = q.iter().flatten().any(|v| *v != 0.0);
    let mut marg = [0.0; 2 * EXACT_CAP];
    marg[..n].copy_from_slice(a.weights());
    marg[n..n + m].copy_from_slice(b.weights());
    let mut row_bits = [0u32; EXACT_CAP];
    let mut col_bits = [0u32; EXACT_CAP];
    for r in 0..nm {
        row_bits[r / m] |= 1 << r;
        col_bits[r % m] |= 1 << r;
    }

    // (value, support size, cell values)
    let mut best: Option<(f64, usize, [f64; CELLS])> = None;
    for mask in 1u32..(1u32 << nm) {
        if row_bits[..n].iter().chain(&col_bits[..m]).any(|&bits| mask & bits == 0) {
            continue;
        }
        let Some(face) = Face::new(mask, n, m, &marg) else { continue };
        if face.dof() > 0 && !quadratic {
            continue;
        }
        let Some(x) = face.stationary_point(&c, &q, &marg) else { continue };
        let mut full = [0.0; CELLS];
        for (pos, &r) in face.cells[..face.k].iter().enumerate() {
            full[r] = x[pos].max(0.0);
        }
        let mut val = 0.0;
        for r in 0..nm {
            if full[r] != 0.0 {
                val += c[r] * full[r] + full[r] * (0..nm).map(|s| q[r][s] * full[s]).sum::<f64>();
            }
        }
        let better = match &best {
            None => true,
            Some((bv, bk, _)) => {
                let tol = 1e-12 * bv.abs().max(1.0);
                val < bv - tol || (val <= bv + tol && face.k < *bk)
            }
        };
        if better {
            best = Some((val, face.k, full));
        }
    }
    let (_, _, x) = best.expect("the product coupling's face is always feasible");
    let pi = Coupling::new(DMatrix::from_fn(n, m, |i, j| x[i * m + j]));
    let value = fgw_cost(&pi, a, b, params)?;
    Ok((value, pi))
}

/// Support pattern with one redundant marginal constraint removed per
/// connected component of its bipartite row/column graph.
struct Face {
    cells: [usize; CELLS],
    k: usize,
    n: usize,
    m: usize,
    /// Marginal constraints kept, as node indices (rows, then columns).
    kept: [usize; 2 * EXACT_CAP],
    r: usize,
}

impl Face {
    fn new(mask: u32, n: usize, m: usize, marg: &[f64]) -> Option<Self> {
        let mut cells = [0; CELLS];
        let mut k = 0;
        let mut parent = [0usize; 2 * EXACT_CAP];
        for (i, p) in parent.iter_mut().enumerate() {
            *p = i;
        }
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for r in 0..n * m {
            if mask >> r & 1 == 1 {
                cells[k] = r;
                k += 1;
                let (u, v) = (find(&mut parent, r / m), find(&mut parent, n + r % m));
                parent[u] = v;
            }
        }
        // every component must carry equal row and column mass
        let mut balance = [0.0; 2 * EXACT_CAP];
        for node in 0..n + m {
            let root = find(&mut parent, node);
            balance[root] += if node < n { marg[node] } else { -marg[node] };
        }
        if balance.iter().any(|b| b.abs() > 1e-12) {
            return None;
        }
        let mut kept = [0; 2 * EXACT_CAP];
        let mut r = 0;
        let mut dropped = [false; 2 * EXACT_CAP];
        for node in 0..n + m {
            let root = find(&mut parent, node);
            if node >= n && !dropped[root] {
                dropped[root] = true;
                continue;
            }
            kept[r] = node;
            r += 1;
        }
        Some(Face { cells, k, n, m, kept, r })
    }

    fn dof(&self) -> usize {
        self.k - self.r
    }

    fn constraint(&self, row: usize, pos: usize) -> f64 {
        let node = self.kept[row];
        let cell = self.cells[pos];
        let hit = if node < self.n { cell / self.m == node } else { cell % self.m == node - self.n };
        if hit { 1.0 } else { 0.0 }
    }

    /// Solves `A x = b` alone on vertices and the KKT system otherwise; the
    /// result is checked against every marginal and for nonnegativity.
    fn stationary_point(&self, c: &[f64; CELLS], q: &[[f64; CELLS]; CELLS], marg: &[f64]) -> Option<[f64; KKT]> {
        let (k, r) = (self.k, self.r);
        let mut sys = [[0.0; KKT + 1]; KKT];
        let size = if k == r {
            for row in 0..r {
                for pos in 0..k {
                    sys[row][pos] = self.constraint(row, pos);
                }
                sys[row][k] = marg[self.kept[row]];
            }
            k
        } else {
            for p in 0..k {
                for s in 0..k {
                    sys[p][s] = 2.0 * q[self.cells[p]][self.cells[s]];
                }
                for row in 0..r {
                    sys[p][k + row] = self.constraint(row, p);
                    sys[k + row][p] = self.constraint(row, p);
                }
                sys[p][k + r] = -c[self.cells[p]];
            }
            for row in 0..r {
                sys[k + row][k + r] = marg[self.kept[row]];
            }
            k + r
        };
        let x = gauss_solve(&mut sys, size)?;
        if x[..k].iter().any(|v| *v < -FEAS_TOL) {
            return None;
        }
        let mut sums = [0.0; 2 * EXACT_CAP];
        for pos in 0..k {
            let cell = self.cells[pos];
            sums[cell / self.m] += x[pos];
            sums[self.n + cell % self.m] += x[pos];
        }
        if (0..self.n + self.m).any(|node| (sums[node] - marg[node]).abs() > FEAS_TOL) {
            return None;
        }
        Some(x)
    }
}

/// Gaussian elimination with partial pivoting on an augmented system;
/// `None` when a pivot falls below the relative tolerance.
fn gauss_solve(sys: &mut [[f64; KKT + 1]; KKT], size: usize) -> Option<[f64; KKT]> {
    let scale = sys[..size]
        .iter()
        .flat_map(|row| row[..size].iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    for col in 0..size {
        let piv = (col..size).max_by(|&x, &y| sys[x][col].abs().total_cmp(&sys[y][col].abs()))?;
        if sys[piv][col].abs() <= PIVOT_TOL * scale {
            return None;
        }
        sys.swap(col, piv);
        for row in col + 1..size {
            let f = sys[row][col] / sys[col][col];
            if f != 0.0 {
                for j in col..=size {
                    sys[row][j] -= f * sys[col][j];
                }
            }
        }
    }
    let mut x = [0.0; KKT];
    for row in (0..size).rev() {
        let mut acc = sys[row][size];
        for j in row + 1..size {
            acc -= sys[row][j] * x[j];
        }
        x[row] = acc / sys[row][row];
    }
    Some(x)
}
