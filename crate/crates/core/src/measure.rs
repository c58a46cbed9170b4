//! Cell-centred grids, grid measures, and the weak* (Kolmogorov) distance.
//!
//! A [`GridMeasure`] assigns a non-negative weight to every cell of a uniform
//! midpoint grid on one interval. Within a cell the mass is treated as uniformly
//! spread, which is what the quantile map and the CDF comparisons use.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::system::{Configuration, Interval, IntervalSystem, MultiIndex};

/// Default number of cells per interval.
pub const DEFAULT_CELLS: usize = 400;

/// Tolerance on `sum(weights) == mass` and on component masses.
pub const MASS_TOL: f64 = 1e-10;

/// Uniform midpoint grid on a single interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    interval_index: usize,
    interval: Interval,
    nodes: Vec<f64>,
    cell_width: f64,
}

impl Grid {
    pub fn midpoint(interval_index: usize, interval: Interval, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::InvalidArgument(
                "a grid needs at least one cell".into(),
            ));
        }
        let h = interval.len() / cells as f64;
        let nodes = (0..cells)
            .map(|j| interval.a + (j as f64 + 0.5) * h)
            .collect();
        Ok(Self {
            interval_index,
            interval,
            nodes,
            cell_width: h,
        })
    }

    /// The same interval cut into `factor` times as many cells.
    pub fn refined(&self, factor: usize) -> Self {
        Self::midpoint(
            self.interval_index,
            self.interval,
            self.cells() * factor.max(1),
        )
        .expect("refining a valid grid")
    }

    pub fn interval_index(&self) -> usize {
        self.interval_index
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn cells(&self) -> usize {
        self.nodes.len()
    }

    /// Left edge of cell `j`; `edge(cells())` is the right endpoint.
    pub fn edge(&self, j: usize) -> f64 {
        if j == self.cells() {
            self.interval.b
        } else {
            self.interval.a + j as f64 * self.cell_width
        }
    }

    /// Cell containing `x`, clamped to the grid.
    pub fn cell_of(&self, x: f64) -> usize {
        let j = ((x - self.interval.a) / self.cell_width).floor();
        if j <= 0.0 {
            0
        } else {
            (j as usize).min(self.cells() - 1)
        }
    }

    pub fn same_nodes(&self, other: &Grid) -> bool {
        self.interval_index == other.interval_index
            && self.cells() == other.cells()
            && self.interval == other.interval
    }
}

/// Non-negative weights on the cells of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: Arc<Grid>,
    weights: Vec<f64>,
    mass: f64,
}

impl GridMeasure {
    pub fn new(grid: Arc<Grid>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.cells() {
            return Err(Error::GridMismatch(format!(
                "{} weights for {} cells",
                weights.len(),
                grid.cells()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "weight {w} is negative or non-finite"
            )));
        }
        let mass = weights.iter().sum();
        Ok(Self {
            grid,
            weights,
            mass,
        })
    }

    pub fn zero(grid: Arc<Grid>) -> Self {
        let weights = vec![0.0; grid.cells()];
        Self {
            grid,
            weights,
            mass: 0.0,
        }
    }

    /// Uniform density carrying `mass`.
    pub fn uniform(grid: Arc<Grid>, mass: f64) -> Self {
        let n = grid.cells();
        Self::new(grid, vec![mass / n as f64; n]).expect("uniform weights are valid")
    }

    /// Exact binning of a distribution given by its CDF on the interval.
    /// `cdf` need not be normalized; the result carries `mass`.
    pub fn from_cdf(grid: Arc<Grid>, mass: f64, cdf: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = (0..=grid.cells()).map(|j| cdf(grid.edge(j))).collect();
        let total = values[grid.cells()] - values[0];
        if !(total > 0.0) {
            return Err(Error::InvalidArgument(
                "CDF carries no mass on the interval".into(),
            ));
        }
        let weights = values
            .windows(2)
            .map(|w| ((w[1] - w[0]) / total * mass).max(0.0))
            .collect();
        Self::new(grid, weights)
    }

    /// Weights proportional to `density` sampled at nodes.
    pub fn from_density(grid: Arc<Grid>, mass: f64, density: impl Fn(f64) -> f64) -> Result<Self> {
        let raw: Vec<f64> = grid.nodes().iter().map(|&x| density(x).max(0.0)).collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument(
                "density vanishes on the grid".into(),
            ));
        }
        Self::new(grid, raw.into_iter().map(|w| w / total * mass).collect())
    }

    /// All of `mass` in the cell containing `x`.
    pub fn point_cell(grid: Arc<Grid>, x: f64, mass: f64) -> Self {
        let mut weights = vec![0.0; grid.cells()];
        weights[grid.cell_of(x)] = mass;
        Self {
            grid,
            weights,
            mass,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn interval_index(&self) -> usize {
        self.grid.interval_index
    }

    pub fn nodes(&self) -> &[f64] {
        &self.grid.nodes
    }

    pub fn cell_width(&self) -> f64 {
        self.grid.cell_width
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Density values `weight / cell_width`.
    pub fn density(&self) -> Vec<f64> {
        let h = self.grid.cell_width;
        self.weights.iter().map(|w| w / h).collect()
    }

    /// Cumulative mass at every cell edge, starting with 0.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.weights.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for w in &self.weights {
            acc += w;
            out.push(acc);
        }
        out
    }

    /// Same grid, weights scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let weights: Vec<f64> = self.weights.iter().map(|w| w * factor).collect();
        Self {
            grid: self.grid.clone(),
            mass: self.mass * factor,
            weights,
        }
    }

    /// Reflect through `x -> -x`, onto `grid`, which must be the mirrored grid.
    pub fn mirrored_onto(&self, grid: Arc<Grid>) -> Result<Self> {
        if grid.cells() != self.grid.cells() {
            return Err(Error::GridMismatch(
                "mirrored grid has a different cell count".into(),
            ));
        }
        Self::new(grid, self.weights.iter().rev().copied().collect())
    }
}

/// A `p`-tuple of grid measures, component `i` living on interval `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorMeasure {
    components: Vec<GridMeasure>,
}

impl VectorMeasure {
    /// Components must be listed in interval order. Masses are not checked;
    /// use [`VectorMeasure::check_membership`] for `M_r(Γ)`.
    pub fn new(components: Vec<GridMeasure>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "a vector measure needs a component".into(),
            ));
        }
        for (i, c) in components.iter().enumerate() {
            if c.interval_index() != i {
                return Err(Error::GridMismatch(format!(
                    "component {i} lives on interval {}",
                    c.interval_index()
                )));
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[GridMeasure] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &GridMeasure {
        &self.components[i]
    }

    pub fn p(&self) -> usize {
        self.components.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.components.iter().map(GridMeasure::mass).sum()
    }

    pub fn grids(&self) -> Vec<Arc<Grid>> {
        self.components.iter().map(|c| c.grid.clone()).collect()
    }

    /// Verify `self ∈ M_r(Γ)` for the given system.
    pub fn check_membership(&self, sys: &IntervalSystem) -> Result<()> {
        if self.p() != sys.p() {
            return Err(Error::GridMismatch(format!(
                "{} components for {} intervals",
                self.p(),
                sys.p()
            )));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.grid.interval != sys.interval(i) {
                return Err(Error::GridMismatch(format!(
                    "component {i} is on a different interval"
                )));
            }
            if (c.mass - sys.mass(i)).abs() > MASS_TOL {
                return Err(Error::InfeasibleMasses(format!(
                    "component {i} has mass {} instead of {}",
                    c.mass,
                    sys.mass(i)
                )));
            }
        }
        if (self.total_mass() - 1.0).abs() > MASS_TOL {
            return Err(Error::InfeasibleMasses(format!(
                "total mass {}",
                self.total_mass()
            )));
        }
        Ok(())
    }

    /// Concatenated weights in component order.
    pub fn flat_weights(&self) -> Vec<f64> {
        self.components
            .iter()
            .flat_map(|c| c.weights.iter().copied())
            .collect()
    }

    /// Rebuild on the same grids from a flat weight vector.
    pub fn with_flat_weights(&self, flat: &[f64]) -> Result<Self> {
        let mut offset = 0;
        let mut components = Vec::with_capacity(self.p());
        for c in &self.components {
            let n = c.weights.len();
            components.push(GridMeasure::new(
                c.grid.clone(),
                flat[offset..offset + n].to_vec(),
            )?);
            offset += n;
        }
        Self::new(components)
    }
}

/// Per-interval grids for one interval system.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    sys: IntervalSystem,
    grids: Vec<Arc<Grid>>,
}

impl Discretization {
    pub fn new(sys: &IntervalSystem, cells: usize) -> Result<Self> {
        let grids = (0..sys.p())
            .map(|i| Grid::midpoint(i, sys.interval(i), cells).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sys: sys.clone(),
            grids,
        })
    }

    pub fn system(&self) -> &IntervalSystem {
        &self.sys
    }

    pub fn grids(&self) -> &[Arc<Grid>] {
        &self.grids
    }

    pub fn grid(&self, i: usize) -> &Arc<Grid> {
        &self.grids[i]
    }

    pub fn cells(&self) -> usize {
        self.grids[0].cells()
    }

    /// Uniform density on every interval with component mass `r_i`.
    pub fn uniform_measure(&self) -> VectorMeasure {
        let components = self
            .grids
            .iter()
            .enumerate()
            .map(|(i, g)| GridMeasure::uniform(g.clone(), self.sys.mass(i)))
            .collect();
        VectorMeasure::new(components).expect("aligned components")
    }

    /// Bin one CDF per component, scaled to mass `r_i`.
    pub fn measure_from_cdfs(&self, cdfs: &[&dyn Fn(f64) -> f64]) -> Result<VectorMeasure> {
        if cdfs.len() != self.sys.p() {
            return Err(Error::InvalidArgument(
                "one CDF per interval is required".into(),
            ));
        }
        let components = self
            .grids
            .iter()
            .zip(cdfs)
            .enumerate()
            .map(|(i, (g, f))| GridMeasure::from_cdf(g.clone(), self.sys.mass(i), f))
            .collect::<Result<Vec<_>>>()?;
        VectorMeasure::new(components)
    }
}

/// How a configuration's counting measure is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `(r_i / n_i) Σ δ`: component masses are exactly `r_i`.
    #[default]
    PerBlock,
    /// `(1/n) Σ δ` over all points.
    Global,
}

/// Counting measure of `x` binned onto the grids of `disc`.
pub fn counting_measure(
    x: &Configuration,
    disc: &Discretization,
    normalization: Normalization,
) -> Result<VectorMeasure> {
    let sys = disc.system();
    if x.p() != sys.p() {
        return Err(Error::GridMismatch(format!(
            "{} blocks for {} intervals",
            x.p(),
            sys.p()
        )));
    }
    let n = x.total() as f64;
    let components = x
        .blocks()
        .iter()
        .enumerate()
        .map(|(i, block)| {
            let grid = disc.grid(i).clone();
            let atom = match normalization {
                Normalization::PerBlock => sys.mass(i) / block.len() as f64,
                Normalization::Global => 1.0 / n,
            };
            let mut weights = vec![0.0; grid.cells()];
            for &xi in block {
                weights[grid.cell_of(xi)] += atom;
            }
            GridMeasure::new(grid, weights)
        })
        .collect::<Result<Vec<_>>>()?;
    VectorMeasure::new(components)
}

/// Deterministic configuration whose block `i` holds the `(k - 1/2)/n_i`
/// quantiles of `μ_i / r_i`, with mass spread uniformly inside each cell.
pub fn quantile_configuration(mu: &VectorMeasure, m: &MultiIndex) -> Result<Configuration> {
    if m.p() != mu.p() {
        return Err(Error::InvalidArgument(format!(
            "multi-index has {} blocks for {} components",
            m.p(),
            mu.p()
        )));
    }
    let mut blocks = Vec::with_capacity(mu.p());
    for (i, comp) in mu.components().iter().enumerate() {
        if !(comp.mass() > 0.0) {
            return Err(Error::DegenerateComponent(i));
        }
        let grid = comp.grid();
        let n_i = m.count(i);
        let mut block = Vec::with_capacity(n_i);
        let mut cell = 0;
        let mut before = 0.0;
        for k in 0..n_i {
            let target = (k as f64 + 0.5) / n_i as f64 * comp.mass();
            while cell + 1 < grid.cells() && before + comp.weights()[cell] < target {
                before += comp.weights()[cell];
                cell += 1;
            }
            let w = comp.weights()[cell];
            let frac = if w > 0.0 {
                ((target - before) / w).clamp(0.0, 1.0)
            } else {
                0.5
            };
            let x = grid
                .interval()
                .clamp(grid.edge(cell) + frac * grid.cell_width());
            block.push(x);
        }
        // Rounding in the running sum can break ties the wrong way.
        for k in 1..block.len() {
            if block[k] < block[k - 1] {
                block[k] = block[k - 1];
            }
        }
        blocks.push(block);
    }
    Ok(Configuration::from_sorted_blocks(blocks))
}

/// Largest CDF discrepancy over components, evaluated at cell edges.
/// CDFs are unnormalized, so component masses enter directly.
pub fn weak_star_distance(mu: &VectorMeasure, nu: &VectorMeasure) -> Result<f64> {
    if mu.p() != nu.p() {
        return Err(Error::GridMismatch(format!(
            "{} vs {} components",
            mu.p(),
            nu.p()
        )));
    }
    let mut dist: f64 = 0.0;
    for (i, (a, b)) in mu.components().iter().zip(nu.components()).enumerate() {
        if !a.grid().same_nodes(b.grid()) {
            return Err(Error::GridMismatch(format!(
                "component {i} uses different nodes"
            )));
        }
        let mut ca = 0.0;
        let mut cb = 0.0;
        for (wa, wb) in a.weights().iter().zip(b.weights()) {
            ca += wa;
            cb += wb;
            dist = dist.max((ca - cb).abs());
        }
    }
    Ok(dist)
}
