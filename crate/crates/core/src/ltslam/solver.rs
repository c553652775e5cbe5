//! Levenberg-Marquardt over poses with a sparse Cholesky inner solve.
//!
//! Robust factors are handled by iteratively reweighted least squares: each
//! linearization scales the residual and Jacobian by `sqrt(ρ'(s))`. Steps are
//! accepted only when the true robust cost decreases.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::CscMatrix;

use super::factors::Factor;
use crate::error::{Error, Result};
use crate::geometry::{Mat6, Pose, Vec6};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmParams {
    pub max_iters: usize,
    /// Converged when an accepted step changes the cost by less than this fraction.
    pub rel_tol: f64,
    pub lambda_init: f64,
    pub lambda_max: f64,
}

impl Default for LmParams {
    fn default() -> Self {
        Self {
            max_iters: 100,
            rel_tol: 1e-9,
            lambda_init: 1e-4,
            lambda_max: 1e16,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub accepted_costs: Vec<f64>,
    pub converged: bool,
}

pub fn total_cost(factors: &[Factor], vars: &[Pose]) -> f64 {
    factors.iter().map(|f| f.cost(vars)).sum()
}

pub fn solve(
    vars: Vec<Pose>,
    factors: &[Factor],
    params: &LmParams,
) -> Result<(Vec<Pose>, SolveReport)> {
    let n = vars.len();
    for f in factors {
        if let Some(&v) = f.variables().iter().find(|&&v| v >= n) {
            return Err(Error::Invalid(format!(
                "factor references variable {v} of {n}"
            )));
        }
    }
    let order = reverse_cuthill_mckee(n, factors);
    let mut position = vec![0usize; n];
    for (p, &v) in order.iter().enumerate() {
        position[v] = p;
    }

    let mut x = vars;
    let mut cost = total_cost(factors, &x);
    let mut report = SolveReport {
        initial_cost: cost,
        final_cost: cost,
        accepted_costs: vec![cost],
        ..Default::default()
    };
    if !cost.is_finite() {
        return Err(failure(0, cost, x));
    }
    let mut lambda = params.lambda_init;
    let mut iter = 0;
    'outer: while iter < params.max_iters {
        iter += 1;
        let (h, g) = assemble(&x, factors, &position);
        loop {
            let step = match solve_damped(&h, &g, lambda, n) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    if lambda > params.lambda_max {
                        break 'outer;
                    }
                    continue;
                }
            };
            let candidate: Vec<Pose> = x
                .iter()
                .enumerate()
                .map(|(v, p)| {
                    let k = 6 * position[v];
                    p.retract(&Vec6::from_fn(|r, _| step[k + r]))
                })
                .collect();
            let new_cost = total_cost(factors, &candidate);
            if !new_cost.is_finite() {
                return Err(failure(iter, new_cost, x));
            }
            if new_cost < cost {
                let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                x = candidate;
                cost = new_cost;
                report.accepted_costs.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                if rel < params.rel_tol || cost < 1e-24 {
                    report.converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > params.lambda_max {
                // no descent direction left: stationary to working precision
                report.converged = true;
                break 'outer;
            }
        }
    }
    report.iterations = iter;
    report.final_cost = cost;
    Ok((x, report))
}

fn failure(iterations: usize, cost: f64, last: Vec<Pose>) -> Error {
    Error::OptimizationFailed {
        iterations,
        cost,
        last,
    }
}

type Blocks = BTreeMap<(usize, usize), Mat6>;

/// Gauss-Newton blocks `H = JᵀJ` keyed by (column, row) block in elimination
/// order, and the gradient `g = Jᵀr` in the same order.
fn assemble(x: &[Pose], factors: &[Factor], position: &[usize]) -> (Blocks, Vec<f64>) {
    let mut h: Blocks = (0..x.len()).map(|p| ((p, p), Mat6::zeros())).collect();
    let mut g = vec![0.0; 6 * x.len()];
    for f in factors {
        let lin = f.linearize(x);
        for (a, ja) in &lin.blocks {
            let pa = position[*a];
            let ga = ja.transpose() * lin.r;
            for r in 0..6 {
                g[6 * pa + r] += ga[r];
            }
            for (b, jb) in &lin.blocks {
                let pb = position[*b];
                // block (row pa, col pb) = Jaᵀ Jb
                *h.entry((pb, pa)).or_insert_with(Mat6::zeros) += ja.transpose() * jb;
            }
        }
    }
    (h, g)
}

fn solve_damped(h: &Blocks, g: &[f64], lambda: f64, n: usize) -> Option<Vec<f64>> {
    let dim = 6 * n;
    let mut col_offsets = Vec::with_capacity(dim + 1);
    let mut rows = Vec::new();
    let mut vals = Vec::new();
    // group blocks by column block; BTreeMap order is (col, row) ascending
    let mut by_col: Vec<Vec<(usize, &Mat6)>> = vec![Vec::new(); n];
    for (&(cb, rb), m) in h {
        by_col[cb].push((rb, m));
    }
    for (cb, blocks) in by_col.iter().enumerate() {
        for c in 0..6 {
            col_offsets.push(rows.len());
            for &(rb, m) in blocks {
                for r in 0..6 {
                    let mut v = m[(r, c)];
                    if rb == cb && r == c {
                        v += lambda * (v.abs() + 1e-9);
                    }
                    rows.push(6 * rb + r);
                    vals.push(v);
                }
            }
        }
    }
    col_offsets.push(rows.len());
    let mat = CscMatrix::try_from_csc_data(dim, dim, col_offsets, rows, vals).ok()?;
    let chol = CscCholesky::factor(&mat).ok()?;
    let rhs = DMatrix::from_iterator(dim, 1, g.iter().map(|v| -v));
    let sol = chol.solve(&rhs);
    let step: Vec<f64> = sol.iter().copied().collect();
    step.iter().all(|v| v.is_finite()).then_some(step)
}

/// Reverse Cuthill-McKee ordering of the variable adjacency graph.
pub fn reverse_cuthill_mckee(n: usize, factors: &[Factor]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for f in factors {
        let vs = f.variables();
        for &a in &vs {
            for &b in &vs {
                if a != b {
                    adj[a].push(b);
                }
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    // hub variables (the anchors) go last so they do not fill in the band
    let dense: Vec<bool> = adj.iter().map(|a| a.len() > DENSE_DEGREE).collect();
    for a in &mut adj {
        a.retain(|&u| !dense[u]);
    }
    let mut visited = dense.clone();
    let mut order = Vec::with_capacity(n);
    let mut remaining: Vec<usize> = (0..n).collect();
    remaining.sort_by_key(|&v| (adj[v].len(), v));
    for &start in &remaining {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (adj[u].len(), u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order.extend((0..n).filter(|&v| dense[v]));
    order
}

const DENSE_DEGREE: usize = 24;
