//! Rate function, the quantile probe of `log W^Q`, the field-shift identity
//! and Bernstein-Markov constants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::weighted_energy;
use crate::ensemble::BaseMeasure;
use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::fekete::log_a;
use crate::field::{ExternalField, FieldComponent};
use crate::measure::{quantile_configuration, VectorMeasure};
use crate::system::{Configuration, MultiIndex};

/// Highest polynomial degree accepted by [`bm_constant`].
pub const MAX_BM_DEGREE: usize = 24;
/// Refinement of the base grid on which the kernel supremum is taken.
const SUP_REFINE: usize = 4;

#[derive(Debug, Clone)]
pub struct RateReport {
    pub mu: VectorMeasure,
    /// `E^Q(μ)`.
    pub energy_mu: f64,
    /// `E^Q(μ_{Γ,Q})`.
    pub energy_eq: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateSummary {
    pub energy_mu: f64,
    pub energy_eq: f64,
    pub rate: f64,
}

impl RateReport {
    pub fn summary(&self) -> RateSummary {
        RateSummary {
            energy_mu: self.energy_mu,
            energy_eq: self.energy_eq,
            rate: self.rate,
        }
    }
}

/// `R(μ) = E^Q(μ) - E^Q(μ_{Γ,Q})`.
pub fn rate_function(
    mu: &VectorMeasure,
    field: &ExternalField,
    equilibrium: &EquilibriumSolution,
) -> Result<RateReport> {
    let energy_mu = weighted_energy(mu, field)?.total;
    let energy_eq = equilibrium.energy.total;
    Ok(RateReport {
        mu: mu.clone(),
        energy_mu,
        energy_eq,
        rate: energy_mu - energy_eq,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n: usize,
    /// `log A^Q / n^2` at the quantile configuration.
    pub normalized: f64,
}

/// `(1/n^2) log A^Q` at the quantile configurations of `mu`, with block sizes
/// split from `n` in proportion to the component masses.
pub fn w_functional_quantile_probe(
    mu: &VectorMeasure,
    field: &ExternalField,
    n_list: &[usize],
) -> Result<Vec<ProbeRow>> {
    let masses: Vec<f64> = mu.components().iter().map(|c| c.mass()).collect();
    n_list
        .iter()
        .map(|&n| {
            let m = MultiIndex::proportional(&masses, n)?;
            let x = quantile_configuration(mu, &m)?;
            let nf = n as f64;
            Ok(ProbeRow {
                n,
                normalized: log_a(&x, field) / (nf * nf),
            })
        })
        .collect()
}

/// `(log A(X, 0) - log A(X, Q), 2n Σ Q_i(x_k^(i)))`.
pub fn q_shift_identity_check(x: &Configuration, field: &ExternalField) -> (f64, f64) {
    let zero = ExternalField::zero(x.p());
    let n = x.total() as f64;
    let lhs = log_a(x, &zero) - log_a(x, field);
    let sum: f64 = x
        .blocks()
        .iter()
        .enumerate()
        .map(|(i, b)| b.iter().map(|&t| field.eval(i, t)).sum::<f64>())
        .sum();
    (lhs, 2.0 * n * sum)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BmEstimate {
    pub degree: usize,
    /// Supremum of the Christoffel kernel diagonal.
    pub beta: f64,
    /// `beta^{1/(2n)}`; `beta` itself at degree 0.
    pub root: f64,
}

/// `β_n = sup_{Γ_i} Σ_{k≤n} q_k(x)^2` for `q_k` orthonormal in `L^2` of the
/// normalized `τ`. With `weight = Some((Q, s))` the measure is
/// `e^{-2sQ} τ / |τ|` and the kernel is multiplied by `e^{-2sQ(x)}`, which
/// bounds `|p e^{-sQ}|^2` by `β_n ‖p e^{-sQ}‖^2`.
///
/// The `q_k` come from the discrete Stieltjes recurrence on a Gauss rule for
/// `τ`; weights are handled in the log domain so strong fields do not
/// underflow.
pub fn bm_constant(
    tau: &BaseMeasure,
    n: usize,
    weight: Option<(&FieldComponent, f64)>,
) -> Result<BmEstimate> {
    if n > MAX_BM_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "degree {n} exceeds the cap {MAX_BM_DEGREE}"
        )));
    }
    let log_weight = |x: f64| match weight {
        Some((q, s)) => -2.0 * s * q.eval(x),
        None => 0.0,
    };
    let (xs, ws) = tau.gauss_rule(n + 2);
    let mass: f64 = ws.iter().sum();
    let lw: Vec<f64> = xs.iter().map(|&x| log_weight(x)).collect();
    let shift = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::IllConditionedGram { degree: n });
    }
    let wt: Vec<f64> = ws
        .iter()
        .zip(&lw)
        .map(|(w, l)| w / mass * (l - shift).exp())
        .collect();
    let (alpha, beta) = stieltjes(&xs, &wt, n).ok_or(Error::IllConditionedGram { degree: n })?;

    let iv = tau.grid().interval();
    let fine = tau.grid().refined(SUP_REFINE);
    let mut points = vec![iv.a, iv.b];
    points.extend_from_slice(fine.nodes());
    let sup = points
        .par_iter()
        .map(|&x| {
            let (mut prev, mut cur) = (0.0, 1.0 / beta[0]);
            let mut sum = cur * cur;
            for k in 0..n {
                let next = ((x - alpha[k]) * cur - beta[k] * prev) / beta[k + 1];
                prev = cur;
                cur = next;
                sum += cur * cur;
            }
            sum * (log_weight(x) - shift).exp()
        })
        .reduce(|| 0.0, f64::max);
    let root = if n == 0 {
        sup
    } else {
        sup.powf(1.0 / (2.0 * n as f64))
    };
    Ok(BmEstimate {
        degree: n,
        beta: sup,
        root,
    })
}

/// Recurrence coefficients of the orthonormal polynomials of `Σ w_j δ_{x_j}`:
/// `b_{k+1} q_{k+1} = (x - a_k) q_k - b_k q_{k-1}`, `q_0 = 1/b_0`. Returns
/// `None` once the measure cannot support the next degree.
fn stieltjes(xs: &[f64], ws: &[f64], n: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let b0 = ws.iter().sum::<f64>().sqrt();
    if !(b0 > 0.0) {
        return None;
    }
    let mut alpha = Vec::with_capacity(n);
    let mut beta = vec![b0];
    let mut prev = vec![0.0; xs.len()];
    let mut cur = vec![1.0 / b0; xs.len()];
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    for k in 0..n {
        let a: f64 = xs
            .iter()
            .zip(ws)
            .zip(&cur)
            .map(|((x, w), q)| w * x * q * q)
            .sum();
        let mut next: Vec<f64> = (0..xs.len())
            .map(|j| (xs[j] - a) * cur[j] - beta[k] * prev[j])
            .collect();
        // One reorthogonalization pass against q_k keeps high degrees clean.
        let c: f64 = (0..xs.len()).map(|j| ws[j] * next[j] * cur[j]).sum();
        for j in 0..xs.len() {
            next[j] -= c * cur[j];
        }
        let b = (0..xs.len())
            .map(|j| ws[j] * next[j] * next[j])
            .sum::<f64>()
            .sqrt();
        if !(b > 1e-10 * scale) {
            return None;
        }
        next.iter_mut().for_each(|v| *v /= b);
        alpha.push(a + c);
        beta.push(b);
        prev = std::mem::replace(&mut cur, next);
    }
    Some((alpha, beta))
}

/// [`bm_constant`] at every degree in `degrees`.
pub fn bm_trend(
    tau: &BaseMeasure,
    degrees: &[usize],
    weight: Option<(&FieldComponent, f64)>,
) -> Result<Vec<BmEstimate>> {
    degrees
        .iter()
        .map(|&n| bm_constant(tau, n, weight))
        .collect()
}
