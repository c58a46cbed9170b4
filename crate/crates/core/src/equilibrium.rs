//! Vector equilibrium measures by projected-gradient minimization of the
//! discrete weighted energy over the product of scaled simplices.
//!
//! With `S` the block kernel of [`EnergyOperator`] and `q` the field at the
//! nodes, the objective is `f(w) = wᵀ S w + 2 qᵀ w` and its gradient is
//! `2 (S w + q) = 2 (U + Q)` at the nodes. Optimality on the simplex of mass
//! `r_i` means this gradient is constant (`F_i`) where the weights are positive
//! and not smaller than `F_i` elsewhere; the solver stops when that holds to
//! within `tol`.

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyOperator, EnergyReport};
use crate::error::{Error, Result};
use crate::field::ExternalField;
use crate::measure::{Discretization, VectorMeasure, DEFAULT_CELLS};
use crate::system::IntervalSystem;

/// Weights above this fraction of the component maximum count as support.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 20_000;
pub const MIN_CELLS: usize = 16;

const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub cells: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Feasible starting point on the solver's grids; uniform when absent.
    pub initial: Option<VectorMeasure>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            cells: DEFAULT_CELLS,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            initial: None,
        }
    }
}

impl SolverOptions {
    pub fn with_cells(cells: usize) -> Self {
        Self {
            cells,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub measure: VectorMeasure,
    pub energy: EnergyReport,
    pub kkt_residual: f64,
    /// Per-component value `F_i` of `2 (U_i + Q_i)` on the numerical support.
    pub modified_robin_constants: Vec<f64>,
    pub iterations: usize,
    /// Objective value after every accepted step, starting point first.
    pub objective_trace: Vec<f64>,
}

/// Summary used in JSON reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub energy: EnergyReport,
    pub kkt_residual: f64,
    pub modified_robin_constants: Vec<f64>,
    pub iterations: usize,
    pub cells: usize,
}

impl EquilibriumSolution {
    pub fn summary(&self) -> EquilibriumSummary {
        EquilibriumSummary {
            energy: self.energy.clone(),
            kkt_residual: self.kkt_residual,
            modified_robin_constants: self.modified_robin_constants.clone(),
            iterations: self.iterations,
            cells: self.measure.component(0).grid().cells(),
        }
    }
}

/// Euclidean projection of `v` onto `{w >= 0, Σ w = mass}`, in place.
pub fn project_to_scaled_simplex(v: &mut [f64], mass: f64) {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        acc += u;
        let t = (acc - mass) / (k as f64 + 1.0);
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// KKT residual and `F_i` from flat weights and the flat gradient `2 (U + Q)`.
fn kkt_from_gradient(op: &EnergyOperator, w: &[f64], grad: &[f64]) -> (f64, Vec<f64>) {
    let mut residual: f64 = 0.0;
    let mut constants = Vec::with_capacity(op.p());
    for i in 0..op.p() {
        let r = op.block_range(i);
        let (wi, gi) = (&w[r.clone()], &grad[r]);
        let wmax = wi.iter().copied().fold(0.0, f64::max);
        let cut = SUPPORT_THRESHOLD * wmax;
        let (mut num, mut den) = (0.0, 0.0);
        for (&wj, &gj) in wi.iter().zip(gi) {
            if wj > cut {
                num += wj * gj;
                den += wj;
            }
        }
        let f = if den > 0.0 {
            num / den
        } else {
            gi.iter().copied().fold(f64::INFINITY, f64::min)
        };
        for (&wj, &gj) in wi.iter().zip(gi) {
            let term = if wj > cut {
                (gj - f).abs()
            } else {
                (f - gj).max(0.0)
            };
            residual = residual.max(term);
        }
        constants.push(f);
    }
    (residual, constants)
}

/// KKT residual of `mu` for the field `Q`, and the constants `F_i`.
pub fn kkt_residual(mu: &VectorMeasure, field: &ExternalField) -> Result<(f64, Vec<f64>)> {
    let op = EnergyOperator::for_measure(mu)?;
    let q = op.field_values(field)?;
    let w = mu.flat_weights();
    let grad = gradient(&op.apply(&w), &q);
    Ok(kkt_from_gradient(&op, &w, &grad))
}

fn gradient(sw: &[f64], q: &[f64]) -> Vec<f64> {
    sw.iter().zip(q).map(|(a, b)| 2.0 * (a + b)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn solve_equilibrium(
    sys: &IntervalSystem,
    field: &ExternalField,
    opts: &SolverOptions,
) -> Result<EquilibriumSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {} must be positive",
            opts.tol
        )));
    }
    if opts.cells < MIN_CELLS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_CELLS} cells, got {}",
            opts.cells
        )));
    }
    field.check_dimension(sys.p())?;
    let disc = Discretization::new(sys, opts.cells)?;
    let op = EnergyOperator::new(disc.grids())?;
    let q = op.field_values(field)?;

    let start = match &opts.initial {
        Some(mu) => {
            op.check(mu)?;
            mu.clone()
        }
        None => disc.uniform_measure(),
    };
    let mut w = start.flat_weights();
    for i in 0..sys.p() {
        project_to_scaled_simplex(&mut w[op.block_range(i)], sys.mass(i));
    }

    // Gradient Lipschitz bound 2 ||S||_inf gives a step that always passes Armijo.
    let lipschitz = 2.0
        * op.matrix()
            .row_iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
    let min_step = 1.0 / lipschitz;
    let max_step = 1e12 * min_step;

    let mut sw = op.apply(&w);
    let mut f = dot(&w, &sw) + 2.0 * dot(&q, &w);
    let mut grad = gradient(&sw, &q);
    let mut step = min_step;
    let mut trace = vec![f];
    let (mut residual, mut constants) = kkt_from_gradient(&op, &w, &grad);
    let mut best = (residual, w.clone(), constants.clone());
    let mut iterations = 0;

    while residual > opts.tol {
        if iterations >= opts.max_iter {
            let (res, bw, bc) = best;
            let measure = start.with_flat_weights(&bw)?;
            let energy = op.report(&bw, Some(&q));
            let best = EquilibriumSolution {
                measure,
                energy,
                kkt_residual: res,
                modified_robin_constants: bc,
                iterations,
                objective_trace: trace,
            };
            return Err(Error::MaxIterationsExceeded {
                iterations,
                residual: res,
                best: Box::new(best),
            });
        }
        iterations += 1;

        let mut trial_step = step.clamp(min_step, max_step);
        let (w_new, sw_new, f_new) = loop {
            let mut cand: Vec<f64> = w
                .iter()
                .zip(&grad)
                .map(|(x, g)| x - trial_step * g)
                .collect();
            for i in 0..sys.p() {
                project_to_scaled_simplex(&mut cand[op.block_range(i)], sys.mass(i));
            }
            let descent: f64 = grad
                .iter()
                .zip(cand.iter().zip(&w))
                .map(|(g, (c, x))| g * (c - x))
                .sum();
            let sw_c = op.apply(&cand);
            let f_c = dot(&cand, &sw_c) + 2.0 * dot(&q, &cand);
            if f_c <= f + ARMIJO * descent || trial_step <= min_step {
                break (cand, sw_c, f_c);
            }
            trial_step = (0.5 * trial_step).max(min_step);
        };

        let grad_new = gradient(&sw_new, &q);
        let s: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let ss = dot(&s, &s);
        if ss == 0.0 {
            // Projection fixed point: the KKT system holds up to the support cut.
            let (res, c) = kkt_from_gradient(&op, &w_new, &grad_new);
            residual = res;
            constants = c;
            break;
        }
        step = if sy > 0.0 { ss / sy } else { max_step };

        // Rounding may lift f by a few ulps at convergence; never by more.
        debug_assert!(f_new <= f + 1e-12 * f.abs().max(1.0));
        w = w_new;
        sw = sw_new;
        f = f_new;
        grad = grad_new;
        trace.push(f);
        let (res, c) = kkt_from_gradient(&op, &w, &grad);
        residual = res;
        constants = c;
        if residual < best.0 {
            best = (residual, w.clone(), constants.clone());
        }
    }
    let _ = sw;

    let measure = start.with_flat_weights(&w)?;
    let energy = op.report(&w, Some(&q));
    Ok(EquilibriumSolution {
        measure,
        energy,
        kkt_residual: residual,
        modified_robin_constants: constants,
        iterations,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection() {
        let mut v = vec![0.2, 0.2, 0.2];
        project_to_scaled_simplex(&mut v, 0.6);
        assert!(v.iter().all(|x| (x - 0.2).abs() < 1e-15));
        let mut v = vec![1.0, 0.0, -1.0];
        project_to_scaled_simplex(&mut v, 0.5);
        assert!((v[0] - 0.5).abs() < 1e-15 && v[1] == 0.0 && v[2] == 0.0);
        let mut v = vec![0.5, 0.4, -3.0, 0.1];
        project_to_scaled_simplex(&mut v, 1.0);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(v.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn options_are_validated() {
        let sys = IntervalSystem::new(vec![(-1.0, 1.0)], vec![1.0]).unwrap();
        let zero = ExternalField::zero(1);
        let bad_tol = SolverOptions {
            tol: 0.0,
            ..SolverOptions::default()
        };
        assert!(solve_equilibrium(&sys, &zero, &bad_tol).is_err());
        assert!(solve_equilibrium(&sys, &zero, &SolverOptions::with_cells(8)).is_err());
        assert!(
            solve_equilibrium(&sys, &ExternalField::zero(2), &SolverOptions::default()).is_err()
        );
    }

    #[test]
    fn max_iterations_carries_best_iterate() {
        let sys = IntervalSystem::new(vec![(-1.0, 1.0)], vec![1.0]).unwrap();
        let opts = SolverOptions {
            cells: 64,
            tol: 1e-12,
            max_iter: 5,
            initial: None,
        };
        match solve_equilibrium(&sys, &ExternalField::zero(1), &opts) {
            Err(Error::MaxIterationsExceeded {
                iterations,
                residual,
                best,
            }) => {
                assert_eq!(iterations, 5);
                assert_eq!(best.kkt_residual, residual);
                best.measure.check_membership(&sys).unwrap();
            }
            other => panic!("expected MaxIterationsExceeded, got {other:?}"),
        }
    }
}
