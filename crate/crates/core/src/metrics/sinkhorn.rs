//! Entropy-regularized optimal transport between uniform point measures,
//! solved in the log domain.

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Stop once the L1 violation of the row marginals falls below this.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;

/// Cost-matrix size below which sweeps run on the calling thread.
const PARALLEL_MIN_ENTRIES: usize = 1 << 14;

#[inline]
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Outcome of a Sinkhorn solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornSolution {
    /// Transport cost ⟨P, C⟩ of the regularized plan.
    pub cost: f64,
    pub iterations: usize,
    /// Final L1 violation of the row marginals.
    pub marginal_error: f64,
}

struct Problem {
    n: usize,
    m: usize,
    /// Row-major n × m Euclidean costs.
    cost: Vec<f64>,
    /// Column-major copy for the column update.
    cost_t: Vec<f64>,
}

impl Problem {
    fn new(x: &PointCloud, y: &PointCloud) -> Self {
        let (n, m) = (x.len(), y.len());
        let cost: Vec<f64> = x
            .points()
            .par_iter()
            .flat_map_iter(|p| y.points().iter().map(move |q| p.dist(*q)))
            .collect();
        let mut cost_t = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                cost_t[j * n + i] = cost[i * m + j];
            }
        }
        Problem { n, m, cost, cost_t }
    }

    fn small(&self) -> bool {
        self.n * self.m < PARALLEL_MIN_ENTRIES
    }

    /// f_i = reg·ln a_i − reg·LSE_j((g_j − C_ij)/reg)
    fn update_rows(&self, f: &mut [f64], g: &[f64], reg: f64) {
        let log_a = -(self.n as f64).ln();
        let body = |(i, fi): (usize, &mut f64)| {
            let row = &self.cost[i * self.m..(i + 1) * self.m];
            let lse = log_sum_exp(row.iter().zip(g).map(|(c, gj)| (gj - c) / reg));
            *fi = reg * (log_a - lse);
        };
        if self.small() {
            f.iter_mut().enumerate().for_each(body);
        } else {
            f.par_iter_mut().enumerate().for_each(body);
        }
    }

    fn update_cols(&self, g: &mut [f64], f: &[f64], reg: f64) {
        let log_b = -(self.m as f64).ln();
        let body = |(j, gj): (usize, &mut f64)| {
            let col = &self.cost_t[j * self.n..(j + 1) * self.n];
            let lse = log_sum_exp(col.iter().zip(f).map(|(c, fi)| (fi - c) / reg));
            *gj = reg * (log_b - lse);
        };
        if self.small() {
            g.iter_mut().enumerate().for_each(body);
        } else {
            g.par_iter_mut().enumerate().for_each(body);
        }
    }

    /// Row-marginal L1 violation and transport cost of the current plan.
    fn evaluate(&self, f: &[f64], g: &[f64], reg: f64) -> (f64, f64) {
        let a = 1.0 / self.n as f64;
        let row_terms = |i: usize| {
            let row = &self.cost[i * self.m..(i + 1) * self.m];
            let mut mass = 0.0;
            let mut cost = 0.0;
            for (c, gj) in row.iter().zip(g) {
                let p = ((f[i] + gj - c) / reg).exp();
                mass += p;
                cost += p * c;
            }
            ((mass - a).abs(), cost)
        };
        let per_row: Vec<(f64, f64)> = if self.small() {
            (0..self.n).map(row_terms).collect()
        } else {
            (0..self.n).into_par_iter().map(row_terms).collect()
        };
        per_row
            .into_iter()
            .fold((0.0, 0.0), |(e, c), (de, dc)| (e + de, c + dc))
    }
}

/// Log-domain Sinkhorn with regularization annealing.
///
/// The regularization starts at the largest ground cost and is halved
/// (warm-starting the potentials) until it reaches `regularization`; the
/// final level runs until the marginal tolerance is met. `max_iters` bounds
/// the total number of row/column sweeps across all levels.
pub fn sinkhorn_solve(
    x: &PointCloud,
    y: &PointCloud,
    regularization: f64,
    max_iters: usize,
) -> Result<SinkhornSolution> {
    if !(regularization.is_finite() && regularization > 0.0) {
        return Err(Error::param(
            "regularization",
            format!("must be finite and > 0, got {regularization}"),
        ));
    }
    if max_iters == 0 {
        return Err(Error::param("max_iters", "must be at least 1"));
    }
    let prob = Problem::new(x, y);
    let max_cost = prob.cost.iter().copied().fold(0.0, f64::max);
    let mut f = vec![0.0; prob.n];
    let mut g = vec![0.0; prob.m];

    let mut reg = max_cost.max(regularization);
    let mut iterations = 0;
    let (mut err, mut cost);
    loop {
        let last = reg <= regularization;
        // Coarse levels only need to be roughly balanced before shrinking.
        let tol = if last { MARGINAL_TOLERANCE } else { 1e-3 };
        loop {
            prob.update_rows(&mut f, &g, reg);
            prob.update_cols(&mut g, &f, reg);
            iterations += 1;
            (err, cost) = prob.evaluate(&f, &g, reg);
            if err < tol || iterations >= max_iters {
                break;
            }
        }
        if last || iterations >= max_iters {
            break;
        }
        reg = (reg * 0.5).max(regularization);
    }
    if reg > regularization {
        log::warn!(
            "sinkhorn stopped at regularization {reg:.3e} before reaching {regularization:.3e}"
        );
    }
    Ok(SinkhornSolution {
        cost: cost.max(0.0),
        iterations,
        marginal_error: err,
    })
}

/// Regularized transport cost ⟨P, C⟩ between the uniform measures on X and Y.
pub fn sinkhorn(
    x: &PointCloud,
    y: &PointCloud,
    regularization: f64,
    max_iters: usize,
) -> Result<f64> {
    sinkhorn_solve(x, y, regularization, max_iters).map(|s| s.cost)
}
