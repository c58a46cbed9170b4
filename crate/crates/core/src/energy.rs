//! Discrete logarithmic energy.
//!
//! Off-diagonal kernel entries are `-log|x - y|` at cell midpoints. A cell's
//! interaction with itself is replaced by the exact cell average of the kernel,
//! `(1/h^2) ∫∫_{cell^2} -log|x - y| = 3/2 - log h`, so that the discrete
//! self-energy of a smooth density converges to its continuum value.
//!
//! [`EnergyOperator`] assembles the symmetric block matrix `S` with
//! `S_ii = K_ii` and `S_ij = K_ij / 2` (`i != j`). Then for concatenated weights
//! `w`, `E = wᵀ S w` and `(S w)` restricted to block `s` is the partial potential
//! `U_s` evaluated at the nodes of grid `s`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ExternalField;
use crate::measure::{Grid, GridMeasure, VectorMeasure};

/// Exact mean of `-log|x - y|` over a square cell of side `h`.
pub fn self_cell_kernel(h: f64) -> f64 {
    1.5 - h.ln()
}

/// Discrete kernel between two grids.
pub fn kernel_matrix(g1: &Grid, g2: &Grid) -> Result<DMatrix<f64>> {
    let same_interval = g1.interval_index() == g2.interval_index();
    let diag = self_cell_kernel(g1.cell_width());
    let (n1, n2) = (g1.cells(), g2.cells());
    let mut k = DMatrix::zeros(n1, n2);
    for (c, &y) in g2.nodes().iter().enumerate() {
        for (r, &x) in g1.nodes().iter().enumerate() {
            let d = (x - y).abs();
            k[(r, c)] = if d > 0.0 {
                -d.ln()
            } else if same_interval {
                diag
            } else {
                return Err(Error::CoincidentNodesAcrossIntervals(
                    g1.interval_index(),
                    g2.interval_index(),
                ));
            };
        }
    }
    Ok(k)
}

/// Value of E or E^Q with its breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    /// `I(ν_i, ν_i)`.
    pub self_terms: Vec<f64>,
    /// `I(ν_i, ν_j)` for `i < j`, in lexicographic order.
    pub cross_terms: Vec<f64>,
    /// `2 ∫ Q_i dν_i`.
    pub field_terms: Vec<f64>,
}

impl EnergyReport {
    fn from_terms(self_terms: Vec<f64>, cross_terms: Vec<f64>, field_terms: Vec<f64>) -> Self {
        let total = self_terms
            .iter()
            .chain(&cross_terms)
            .chain(&field_terms)
            .sum();
        Self {
            total,
            self_terms,
            cross_terms,
            field_terms,
        }
    }
}

/// The assembled quadratic form for a fixed set of grids.
#[derive(Debug, Clone)]
pub struct EnergyOperator {
    grids: Vec<Arc<Grid>>,
    offsets: Vec<usize>,
    matrix: DMatrix<f64>,
}

impl EnergyOperator {
    pub fn new(grids: &[Arc<Grid>]) -> Result<Self> {
        let mut offsets = vec![0];
        for g in grids {
            offsets.push(offsets.last().unwrap() + g.cells());
        }
        let n = *offsets.last().unwrap();
        let p = grids.len();
        let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).collect();
        let blocks = pairs
            .par_iter()
            .map(|&(i, j)| kernel_matrix(&grids[i], &grids[j]).map(|k| (i, j, k)))
            .collect::<Result<Vec<_>>>()?;
        let mut matrix = DMatrix::zeros(n, n);
        for (i, j, k) in blocks {
            let scale = if i == j { 1.0 } else { 0.5 };
            let (ri, rj) = (offsets[i], offsets[j]);
            matrix
                .view_mut((ri, rj), k.shape())
                .copy_from(&(&k * scale));
            if i != j {
                matrix
                    .view_mut((rj, ri), (k.ncols(), k.nrows()))
                    .copy_from(&(k.transpose() * scale));
            }
        }
        Ok(Self {
            grids: grids.to_vec(),
            offsets,
            matrix,
        })
    }

    pub fn for_measure(mu: &VectorMeasure) -> Result<Self> {
        Self::new(&mu.grids())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.grids.len()
    }

    pub fn grids(&self) -> &[Arc<Grid>] {
        &self.grids
    }

    /// Start of block `i` in the flat layout; `offset(p)` is the dimension.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Fail unless `mu` lives on this operator's grids.
    pub fn check(&self, mu: &VectorMeasure) -> Result<()> {
        if mu.p() != self.p() {
            return Err(Error::GridMismatch(format!(
                "{} components for {} grids",
                mu.p(),
                self.p()
            )));
        }
        for (i, (c, g)) in mu.components().iter().zip(&self.grids).enumerate() {
            if !c.grid().same_nodes(g) {
                return Err(Error::GridMismatch(format!(
                    "component {i} is on another grid"
                )));
            }
        }
        Ok(())
    }

    /// `S w`: the partial potentials `U_s` at the nodes of each grid.
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(w);
        (&self.matrix * v).data.into()
    }

    /// `wᵀ S w`; `w` may be signed.
    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        let sw = self.apply(w);
        w.iter().zip(&sw).map(|(a, b)| a * b).sum()
    }

    /// Field values at all nodes, concatenated.
    pub fn field_values(&self, field: &ExternalField) -> Result<Vec<f64>> {
        field.check_dimension(self.p())?;
        let mut q = Vec::with_capacity(self.dim());
        for g in &self.grids {
            q.extend(field.on_grid(g)?);
        }
        Ok(q)
    }

    /// Per-term report for flat weights `w` and optional flat field values.
    pub fn report(&self, w: &[f64], field_values: Option<&[f64]>) -> EnergyReport {
        let p = self.p();
        let mut self_terms = Vec::with_capacity(p);
        let mut cross_terms = Vec::with_capacity(p * (p - 1) / 2);
        for i in 0..p {
            for j in i..p {
                let (ri, rj) = (self.block_range(i), self.block_range(j));
                let block = self.matrix.view((ri.start, rj.start), (ri.len(), rj.len()));
                let wj = DVector::from_column_slice(&w[rj]);
                let kw = block * wj;
                let val: f64 = w[ri].iter().zip(kw.iter()).map(|(a, b)| a * b).sum();
                if i == j {
                    self_terms.push(val);
                } else {
                    cross_terms.push(2.0 * val);
                }
            }
        }
        let field_terms = (0..p)
            .map(|i| match field_values {
                Some(q) => {
                    let r = self.block_range(i);
                    2.0 * w[r.clone()]
                        .iter()
                        .zip(&q[r])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                }
                None => 0.0,
            })
            .collect();
        EnergyReport::from_terms(self_terms, cross_terms, field_terms)
    }
}

/// `I(α, β) = Σ_{j,k} α_j K_jk β_k`.
pub fn mutual_energy(alpha: &GridMeasure, beta: &GridMeasure) -> Result<f64> {
    let k = kernel_matrix(alpha.grid(), beta.grid())?;
    let kb = &k * DVector::from_column_slice(beta.weights());
    Ok(alpha
        .weights()
        .iter()
        .zip(kb.iter())
        .map(|(a, b)| a * b)
        .sum())
}

/// `p_α(y) = -∫ log|x - y| dα(x)` by the midpoint rule over α's cells.
pub fn potential(alpha: &GridMeasure, y: f64) -> f64 {
    let h = alpha.cell_width();
    let diag = self_cell_kernel(h);
    alpha
        .nodes()
        .iter()
        .zip(alpha.weights())
        .map(|(&x, &w)| {
            let d = (x - y).abs();
            // A query on a node gets the same diagonal value as the kernel.
            if d <= 1e-12 * h {
                w * diag
            } else {
                -w * d.ln()
            }
        })
        .sum()
}

/// `U_s^μ(y) = ½ Σ_j p_{μ_j}(y) + ½ p_{μ_s}(y)`.
pub fn partial_potential(mu: &VectorMeasure, s: usize, y: f64) -> Result<f64> {
    if s >= mu.p() {
        return Err(Error::InvalidArgument(format!(
            "component {s} out of range"
        )));
    }
    let all: f64 = mu.components().iter().map(|c| potential(c, y)).sum();
    Ok(0.5 * all + 0.5 * potential(mu.component(s), y))
}

/// `E(μ)` with zero field terms.
pub fn total_energy(mu: &VectorMeasure) -> Result<EnergyReport> {
    let op = EnergyOperator::for_measure(mu)?;
    Ok(op.report(&mu.flat_weights(), None))
}

/// `E^Q(μ) = E(μ) + 2 Σ_i ∫ Q_i dμ_i`.
pub fn weighted_energy(mu: &VectorMeasure, field: &ExternalField) -> Result<EnergyReport> {
    let op = EnergyOperator::for_measure(mu)?;
    if field.is_zero() {
        field.check_dimension(mu.p())?;
        return Ok(op.report(&mu.flat_weights(), None));
    }
    let q = op.field_values(field)?;
    Ok(op.report(&mu.flat_weights(), Some(&q)))
}

/// The unweighted quadratic form applied to the signed measure `ν - μ`.
pub fn difference_energy(nu: &VectorMeasure, mu: &VectorMeasure) -> Result<f64> {
    let op = EnergyOperator::for_measure(mu)?;
    op.check(nu)?;
    let diff: Vec<f64> = nu
        .flat_weights()
        .iter()
        .zip(mu.flat_weights())
        .map(|(a, b)| a - b)
        .collect();
    Ok(op.quadratic_form(&diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldComponent;
    use crate::measure::Discretization;
    use crate::system::{Interval, IntervalSystem};
    use std::f64::consts::PI;

    fn grid(a: f64, b: f64, cells: usize) -> Arc<Grid> {
        Arc::new(Grid::midpoint(0, Interval::new(a, b).unwrap(), cells).unwrap())
    }

    fn arcsine(cells: usize) -> VectorMeasure {
        let sys = IntervalSystem::new(vec![(-1.0, 1.0)], vec![1.0]).unwrap();
        let disc = Discretization::new(&sys, cells).unwrap();
        disc.measure_from_cdfs(&[&|x: f64| x.clamp(-1.0, 1.0).asin() / PI])
            .unwrap()
    }

    #[test]
    fn kernel_entries() {
        // Two one-cell grids on different intervals: nodes at 0 and 1, then 0 and 0.5.
        let g1 = Grid::midpoint(0, Interval::new(-0.5, 0.5).unwrap(), 1).unwrap();
        let g2 = Grid::midpoint(1, Interval::new(0.75, 1.25).unwrap(), 1).unwrap();
        assert_eq!(kernel_matrix(&g1, &g2).unwrap()[(0, 0)], 0.0);
        let g3 = Grid::midpoint(1, Interval::new(0.25, 0.75).unwrap(), 1).unwrap();
        assert!((kernel_matrix(&g1, &g3).unwrap()[(0, 0)] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn coincident_nodes_across_intervals_rejected() {
        let g1 = Grid::midpoint(0, Interval::new(0.0, 1.0).unwrap(), 2).unwrap();
        let g2 = Grid::midpoint(1, Interval::new(0.0, 1.0).unwrap(), 2).unwrap();
        assert!(matches!(
            kernel_matrix(&g1, &g2),
            Err(Error::CoincidentNodesAcrossIntervals(0, 1))
        ));
    }

    #[test]
    fn diagonal_matches_cell_average_of_kernel() {
        // Oracle: ∫∫_{[0,h]^2} -log|x-y| dx dy by composite Gauss-Legendre on the
        // variable t = x - y, whose density on [-h, h] is (h - |t|).
        let h: f64 = 0.01;
        let g = Grid::midpoint(0, Interval::new(0.0, 100.0 * h).unwrap(), 100).unwrap();
        let k = kernel_matrix(&g, &g).unwrap();
        assert!((k[(5, 5)] - (1.5 + 100f64.ln())).abs() < 1e-12);
        // ∫_0^h (h - t)(-log t) dt, doubled, with a substitution t = h s^2 to tame the log.
        let (nodes, weights) = crate::quadrature::gauss_legendre(40);
        let mut acc = 0.0;
        for (s, w) in nodes.iter().zip(&weights) {
            let s = 0.5 * (s + 1.0);
            let t = h * s * s;
            acc += 0.5 * w * (h - t) * (-t.ln()) * 2.0 * h * s;
        }
        let oracle = 2.0 * acc / (h * h);
        assert!(
            (k[(5, 5)] - oracle).abs() < 1e-6,
            "{} vs {oracle}",
            k[(5, 5)]
        );
    }

    #[test]
    fn uniform_self_energy() {
        let mu = GridMeasure::uniform(grid(0.0, 1.0, 400), 1.0);
        let e = mutual_energy(&mu, &mu).unwrap();
        assert!((e - 1.5).abs() < 2e-3, "{e}");
    }

    #[test]
    fn arcsine_self_energy() {
        let mu = arcsine(400);
        let e = mutual_energy(mu.component(0), mu.component(0)).unwrap();
        assert!((e - 2f64.ln()).abs() < 2e-3, "{e}");
        let report = total_energy(&mu).unwrap();
        assert!((report.total - 2f64.ln()).abs() < 2e-3);
    }

    #[test]
    fn mutual_energy_is_symmetric() {
        let a = GridMeasure::from_density(grid(-2.0, -1.0, 37), 0.3, |x| 1.0 + x * x).unwrap();
        let b = GridMeasure::from_density(
            Arc::new(Grid::midpoint(1, Interval::new(0.5, 3.0).unwrap(), 53).unwrap()),
            0.7,
            |x| x.sin().abs(),
        )
        .unwrap();
        assert!((mutual_energy(&a, &b).unwrap() - mutual_energy(&b, &a).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn potential_values() {
        let mu = GridMeasure::uniform(grid(0.0, 1.0, 400), 1.0);
        // -∫_0^1 log(2 - x) dx = -(2 log 2 - 1).
        assert!((potential(&mu, 2.0) + (2.0 * 2f64.ln() - 1.0)).abs() < 1e-4);
        let point = GridMeasure::uniform(grid(-0.5, 0.5, 1), 1.0);
        assert_eq!(potential(&point, 1.0), 0.0);
        // Decreasing to the right of the support.
        let ys: Vec<f64> = (0..50).map(|k| 1.01 + 0.1 * k as f64).collect();
        let vals: Vec<f64> = ys.iter().map(|&y| potential(&mu, y)).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn potential_on_node_uses_diagonal() {
        let mu = GridMeasure::uniform(grid(0.0, 1.0, 10), 1.0);
        let y = mu.nodes()[3];
        let k = kernel_matrix(mu.grid(), mu.grid()).unwrap();
        let row: f64 = (0..10).map(|c| k[(3, c)] * 0.1).sum();
        assert!((potential(&mu, y) - row).abs() < 1e-14);
    }

    #[test]
    fn partial_potential_identities() {
        let sys = IntervalSystem::new(vec![(-2.0, -1.0), (1.0, 2.0)], vec![0.5, 0.5]).unwrap();
        let disc = Discretization::new(&sys, 40).unwrap();
        let mu1 = GridMeasure::from_density(disc.grid(0).clone(), 1.0, |x| 2.0 + x).unwrap();
        let single = VectorMeasure::new(vec![mu1.clone()]).unwrap();
        assert_eq!(
            partial_potential(&single, 0, 0.3).unwrap(),
            potential(&mu1, 0.3)
        );
        let pair =
            VectorMeasure::new(vec![mu1.clone(), GridMeasure::zero(disc.grid(1).clone())]).unwrap();
        let y = 0.37;
        assert!((partial_potential(&pair, 0, y).unwrap() - potential(&mu1, y)).abs() < 1e-14);
        assert!((partial_potential(&pair, 1, y).unwrap() - 0.5 * potential(&mu1, y)).abs() < 1e-14);
        assert!(partial_potential(&pair, 2, y).is_err());
    }

    #[test]
    fn cross_term_of_two_point_cells() {
        let sys = IntervalSystem::new(vec![(-2.0, -1.0), (1.0, 2.0)], vec![0.5, 0.5]).unwrap();
        let disc = Discretization::new(&sys, 2000).unwrap();
        let mu = VectorMeasure::new(vec![
            GridMeasure::point_cell(disc.grid(0).clone(), -2.0, 0.5),
            GridMeasure::point_cell(disc.grid(1).clone(), 2.0, 0.5),
        ])
        .unwrap();
        let r = total_energy(&mu).unwrap();
        // Nodes sit half a cell inside the endpoints.
        let d = 4.0 - disc.grid(0).cell_width();
        assert!((r.cross_terms[0] - 0.25 * -(d.ln())).abs() < 1e-14);
        assert!((r.cross_terms[0] - 0.25 * -(4f64.ln())).abs() < 1e-3);
    }

    #[test]
    fn energy_invariant_under_reflection() {
        let sys = IntervalSystem::new(vec![(-2.0, -1.0), (1.0, 2.0)], vec![0.5, 0.5]).unwrap();
        let disc = Discretization::new(&sys, 60).unwrap();
        let a =
            GridMeasure::from_density(disc.grid(0).clone(), 0.5, |x| (x + 2.2).powi(2)).unwrap();
        let b = GridMeasure::from_density(disc.grid(1).clone(), 0.5, |x| 3.0 - x).unwrap();
        let mu = VectorMeasure::new(vec![a.clone(), b.clone()]).unwrap();
        let mirror = VectorMeasure::new(vec![
            b.mirrored_onto(disc.grid(0).clone()).unwrap(),
            a.mirrored_onto(disc.grid(1).clone()).unwrap(),
        ])
        .unwrap();
        let e1 = total_energy(&mu).unwrap().total;
        let e2 = total_energy(&mirror).unwrap().total;
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn weighted_energy_with_constant_field() {
        let sys = IntervalSystem::new(vec![(-2.0, -1.0), (1.0, 2.0)], vec![0.25, 0.75]).unwrap();
        let disc = Discretization::new(&sys, 50).unwrap();
        let mu = disc.uniform_measure();
        let e = total_energy(&mu).unwrap();
        let zero = weighted_energy(&mu, &ExternalField::zero(2)).unwrap();
        assert_eq!(zero, e);
        let field = ExternalField::new(vec![
            FieldComponent::Constant(1.5),
            FieldComponent::Constant(-0.5),
        ]);
        let eq = weighted_energy(&mu, &field).unwrap();
        let expected = e.total + 2.0 * (1.5 * 0.25 - 0.5 * 0.75);
        assert!((eq.total - expected).abs() < 1e-12);
        assert!(
            (eq.total
                - eq.self_terms
                    .iter()
                    .chain(&eq.cross_terms)
                    .chain(&eq.field_terms)
                    .sum::<f64>())
            .abs()
                < 1e-10
        );
    }
}
