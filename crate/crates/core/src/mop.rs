//! Type II multiple orthogonal polynomials and their link to the ensemble:
//! `P_n(z) = E[Π_j (z - x_j)]` under the unweighted ensemble.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    gibbs_sample, tensor_fold, BaseMeasure, EnsembleSpec, IntegrationMode, SamplerOptions,
};
use crate::error::{Error, Result};
use crate::quadrature::legendre_values;
use crate::system::MultiIndex;

/// Moment matrices with a larger condition estimate are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// `x^n + c_{n-1} x^{n-1} + ... + c_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonicPolynomial {
    coefficients: Vec<f64>,
}

impl MonicPolynomial {
    /// From `c_0, ..., c_{n-1}`.
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "polynomial coefficients must be finite".into(),
            ));
        }
        Ok(Self { coefficients })
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(1.0, |acc, c| acc * x + c)
    }

    /// Roots in `[a, b]` located by sign changes on `samples` equal cells and
    /// refined by bisection. Double roots without a sign change are missed.
    pub fn roots_in(&self, a: f64, b: f64, samples: usize) -> Vec<f64> {
        let samples = samples.max(1);
        let h = (b - a) / samples as f64;
        let mut roots = Vec::new();
        let mut x0 = a;
        let mut f0 = self.eval(x0);
        for k in 1..=samples {
            let x1 = if k == samples { b } else { a + k as f64 * h };
            let f1 = self.eval(x1);
            if f0 == 0.0 {
                roots.push(x0);
            } else if f0 * f1 < 0.0 {
                let (mut lo, mut hi, mut flo) = (x0, x1, f0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let fm = self.eval(mid);
                    if fm == 0.0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if (fm < 0.0) == (flo < 0.0) {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            x0 = x1;
            f0 = f1;
        }
        if f0 == 0.0 {
            roots.push(b);
        }
        roots
    }
}

/// `m_k = ∫ x^k dτ` for `k = 0..=k_max`, by a composite Gauss rule that is
/// exact for the piecewise-linear density.
pub fn moments(tau: &BaseMeasure, k_max: usize) -> Vec<f64> {
    let (xs, ws) = tau.gauss_rule(k_max / 2 + 2);
    let mut m = vec![0.0; k_max + 1];
    for (&x, &w) in xs.iter().zip(&ws) {
        let mut t = w;
        for mk in m.iter_mut() {
            *mk += t;
            t *= x;
        }
    }
    m
}

/// Solve `∫ P x^k dτ_j = 0` for `k < n_j` and every `j`.
///
/// The unknown is assembled in the variable `u = (x - c)/s` of the hull of the
/// system and tested against Legendre polynomials of each interval, then
/// expanded back into powers of `x`.
pub fn solve_mop(spec: &EnsembleSpec, m: &MultiIndex) -> Result<MonicPolynomial> {
    let sys = spec.system();
    if m.p() != sys.p() {
        return Err(Error::InvalidArgument(format!(
            "multi-index has {} blocks for {} intervals",
            m.p(),
            sys.p()
        )));
    }
    let n = m.total();
    let hull = sys.hull();
    let (c, s) = (hull.center(), hull.half_width());
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut row = 0;
    let mut leg = Vec::new();
    for j in 0..sys.p() {
        let nj = m.count(j);
        let iv = sys.interval(j);
        let (xs, ws) = spec.base(j).gauss_rule(n + 2);
        let start = row;
        for (&x, &w) in xs.iter().zip(&ws) {
            legendre_values((x - iv.center()) / iv.half_width(), nj - 1, &mut leg);
            let u = (x - c) / s;
            for (k, lk) in leg.iter().enumerate() {
                let mut t = w * lk;
                for col in 0..n {
                    a[(start + k, col)] += t;
                    t *= u;
                }
                rhs[start + k] -= t;
            }
        }
        row += nj;
    }
    // Row equilibration before the condition estimate.
    for r in 0..n {
        let scale = a.row(r).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if scale > 0.0 {
            a.row_mut(r).scale_mut(1.0 / scale);
            rhs[r] /= scale;
        }
    }
    let sv = a.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditionedSystem { condition });
    }
    let b = a
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditionedSystem { condition })?;

    // P(x) = Σ_k b_k s^{n-k} (x - c)^k with b_n = 1.
    let mut coeffs = vec![0.0; n + 1];
    let mut binom = vec![0.0; n + 1];
    binom[0] = 1.0;
    for k in 0..=n {
        let bk = if k == n { 1.0 } else { b[k] };
        let factor = bk * s.powi((n - k) as i32);
        // (x - c)^k = Σ_l C(k, l) x^l (-c)^{k-l}
        for l in 0..=k {
            coeffs[l] += factor * binom[l] * (-c).powi((k - l) as i32);
        }
        for l in (1..=n).rev() {
            binom[l] += binom[l - 1];
        }
    }
    coeffs.truncate(n);
    MonicPolynomial::new(coeffs)
}

/// `max_j max_{k<n_j} |∫ P x^k dτ_j|` relative to the largest moment used.
pub fn orthogonality_residual(spec: &EnsembleSpec, m: &MultiIndex, poly: &MonicPolynomial) -> f64 {
    let n = poly.degree();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for j in 0..spec.system().p() {
        let mom = moments(spec.base(j), n + m.count(j));
        scale = mom.iter().fold(scale, |acc, v| acc.max(v.abs()));
        for k in 0..m.count(j) {
            let v: f64 = poly
                .coefficients()
                .iter()
                .enumerate()
                .map(|(l, cl)| cl * mom[l + k])
                .sum::<f64>()
                + mom[n + k];
            worst = worst.max(v.abs());
        }
    }
    worst / scale
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdentityRow {
    pub z: f64,
    pub polynomial: f64,
    /// `E[Π_j (z - x_j)]` under the unweighted ensemble.
    pub expectation: f64,
    /// Standard error in Monte Carlo mode, zero for quadrature.
    pub std_error: f64,
}

/// Compare the multiple orthogonal polynomial at index `d` with the expected
/// characteristic polynomial of the unweighted ensemble.
pub fn expectation_identity_check(
    spec: &EnsembleSpec,
    d: usize,
    z_points: &[f64],
    mode: IntegrationMode,
) -> Result<Vec<IdentityRow>> {
    let m = spec.multi_index(d)?;
    let poly = solve_mop(spec, &m)?;
    let plain = spec.unweighted();
    let k = z_points.len();
    let (expect, err): (Vec<f64>, Vec<f64>) = match mode {
        IntegrationMode::Quadrature { rule } => {
            if m.total() > crate::ensemble::MAX_QUADRATURE_N {
                return Err(Error::DimensionTooLarge {
                    n: m.total(),
                    max: crate::ensemble::MAX_QUADRATURE_N,
                });
            }
            let peak = tensor_fold(
                &plain,
                &m,
                rule,
                || f64::NEG_INFINITY,
                |acc, _, la, lw| *acc = acc.max(la + lw),
                f64::max,
            );
            let sums = tensor_fold(
                &plain,
                &m,
                rule,
                || vec![0.0; k + 1],
                |acc, blocks, la, lw| {
                    let wgt = (la + lw - peak).exp();
                    if wgt == 0.0 {
                        return;
                    }
                    acc[k] += wgt;
                    for (a, &z) in acc.iter_mut().zip(z_points) {
                        *a += wgt * blocks.iter().flatten().map(|x| z - x).product::<f64>();
                    }
                },
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x += y;
                    }
                    a
                },
            );
            (
                sums[..k].iter().map(|v| v / sums[k]).collect(),
                vec![0.0; k],
            )
        }
        IntegrationMode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidArgument(
                    "Monte Carlo mode needs at least two samples".into(),
                ));
            }
            let batch = gibbs_sample(&plain, d, &SamplerOptions::new(samples, seed))?;
            let sf = samples as f64;
            z_points
                .iter()
                .map(|&z| {
                    let vals: Vec<f64> = batch
                        .configs
                        .iter()
                        .map(|x| x.flatten().iter().map(|t| z - t).product())
                        .collect();
                    let mean = vals.iter().sum::<f64>() / sf;
                    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (sf - 1.0);
                    (mean, (var / sf).sqrt())
                })
                .unzip()
        }
    };
    Ok(z_points
        .iter()
        .enumerate()
        .map(|(i, &z)| IdentityRow {
            z,
            polynomial: poly.eval(z),
            expectation: expect[i],
            std_error: err[i],
        })
        .collect())
}
