//! Angelesco ensembles: base measures, the unnormalized joint density, Gibbs
//! sampling, normalizing constants and deviation probabilities.
//!
//! Normalizing constants integrate over the full product
//! `Γ_1^{n_1} × ... × Γ_p^{n_p}`, which is the integral over sorted
//! configurations times `Π n_i!`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::fekete::{log_a, log_a_blocks, FeketeResult};
use crate::field::{interpolate, ExternalField};
use crate::ldp::bm_constant;
use crate::measure::{
    counting_measure, weak_star_distance, Discretization, Grid, Normalization, DEFAULT_CELLS,
};
use crate::quadrature::{gauss_legendre, mapped_rule};
use crate::system::{Configuration, IntervalSystem, MultiIndex, MultiIndexSequence};

pub const DEFAULT_BURN_IN: usize = 50;
pub const DEFAULT_THIN: usize = 5;
pub const DEFAULT_REFINE: usize = 8;
/// Largest `n` accepted by [`z_quadrature`].
pub const MAX_QUADRATURE_N: usize = 5;
/// Largest `n` for quadrature deviation probabilities.
pub const MAX_PROBABILITY_N: usize = 4;

/// Density of a base measure `τ_i = w_i dx`, sampled at the nodes of a grid on
/// `Γ_i` and interpolated linearly.
#[derive(Debug, Clone)]
pub struct BaseMeasure {
    grid: Arc<Grid>,
    density: Vec<f64>,
    total_mass: f64,
}

impl BaseMeasure {
    pub fn new(grid: Arc<Grid>, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.cells() {
            return Err(Error::InvalidArgument(format!(
                "{} density samples for {} nodes",
                density.len(),
                grid.cells()
            )));
        }
        if density.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "base density must be finite and non-negative".into(),
            ));
        }
        let total_mass = density.iter().sum::<f64>() * grid.cell_width();
        if !(total_mass > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "base density on interval {} vanishes identically",
                grid.interval_index()
            )));
        }
        Ok(Self {
            grid,
            density,
            total_mass,
        })
    }

    pub fn lebesgue(grid: Arc<Grid>) -> Self {
        let density = vec![1.0; grid.cells()];
        Self::new(grid, density).expect("unit density is valid")
    }

    pub fn from_fn(grid: Arc<Grid>, w: impl Fn(f64) -> f64) -> Result<Self> {
        let density = grid.nodes().iter().map(|&x| w(x)).collect();
        Self::new(grid, density)
    }

    /// `w(x) = ((x - a) / (b - a))^k`.
    pub fn power(grid: Arc<Grid>, k: f64) -> Result<Self> {
        let iv = grid.interval();
        Self::from_fn(grid, |x| ((x - iv.a) / iv.len()).powf(k))
    }

    /// Density given by linear interpolation through `(xs, ys)`.
    pub fn samples(grid: Arc<Grid>, xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() || xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "density samples need strictly increasing xs matching ys".into(),
            ));
        }
        Self::from_fn(grid, |x| interpolate(xs, ys, x))
    }

    pub fn interval_index(&self) -> usize {
        self.grid.interval_index()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Linear interpolation between nodes, linear extrapolation (clamped at
    /// zero) between the outer nodes and the interval ends.
    pub fn eval(&self, x: f64) -> f64 {
        let xs = self.grid.nodes();
        let ws = &self.density;
        let m = xs.len();
        if m >= 2 && (x < xs[0] || x > xs[m - 1]) {
            let (k0, k1) = if x < xs[0] { (0, 1) } else { (m - 2, m - 1) };
            let slope = (ws[k1] - ws[k0]) / (xs[k1] - xs[k0]);
            return (ws[k0] + slope * (x - xs[k0])).max(0.0);
        }
        interpolate(xs, ws, x)
    }

    /// The same density multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.grid.clone(),
            self.density.iter().map(|w| w * factor).collect(),
        )
    }

    /// Nodes and weights of a composite Gauss rule for `∫ f dτ`, with `order`
    /// points on each linear piece of the density. Exact for polynomial `f`
    /// of degree below `2 order - 1`.
    pub fn gauss_rule(&self, order: usize) -> (Vec<f64>, Vec<f64>) {
        let iv = self.grid.interval();
        let nodes = self.grid.nodes();
        let (t, w) = gauss_legendre(order);
        let mut breaks = Vec::with_capacity(nodes.len() + 2);
        breaks.push(iv.a);
        breaks.extend_from_slice(nodes);
        breaks.push(iv.b);
        let mut xs = Vec::with_capacity(breaks.len() * order);
        let mut ws = Vec::with_capacity(breaks.len() * order);
        for piece in breaks.windows(2) {
            let (a, b) = (piece[0], piece[1]);
            if !(b > a) {
                continue;
            }
            let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
            for (tk, wk) in t.iter().zip(&w) {
                let x = c + r * tk;
                let dens = self.eval(x);
                if dens > 0.0 {
                    xs.push(x);
                    ws.push(wk * r * dens);
                }
            }
        }
        (xs, ws)
    }

    /// `∫ f dτ` by [`Self::gauss_rule`] with 8 points per piece.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let (x, w) = self.gauss_rule(8);
        x.iter().zip(&w).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Intervals, field, base measures and multi-index sequence of one ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    sys: IntervalSystem,
    field: ExternalField,
    tau: Vec<BaseMeasure>,
    seq: MultiIndexSequence,
}

impl EnsembleSpec {
    pub fn new(
        sys: IntervalSystem,
        field: ExternalField,
        tau: Vec<BaseMeasure>,
        seq: MultiIndexSequence,
    ) -> Result<Self> {
        let p = sys.p();
        field.check_dimension(p)?;
        if tau.len() != p {
            return Err(Error::InvalidArgument(format!(
                "{} base measures for {p} intervals",
                tau.len()
            )));
        }
        for (i, t) in tau.iter().enumerate() {
            if t.interval_index() != i || t.grid().interval() != sys.interval(i) {
                return Err(Error::InvalidArgument(format!(
                    "base measure {i} is not defined on interval {i}"
                )));
            }
        }
        if seq.p() != p {
            return Err(Error::InvalidArgument(format!(
                "multi-index sequence has {} blocks for {p} intervals",
                seq.p()
            )));
        }
        if let MultiIndexSequence::Proportional { masses, .. } = &seq {
            if masses
                .iter()
                .zip(sys.masses())
                .any(|(a, b)| (a - b).abs() > 1e-12)
            {
                return Err(Error::InvalidArgument(
                    "sequence ratios do not tend to the system masses".into(),
                ));
            }
        }
        Ok(Self {
            sys,
            field,
            tau,
            seq,
        })
    }

    /// Lebesgue base measures on `DEFAULT_CELLS`-cell grids.
    pub fn lebesgue(
        sys: IntervalSystem,
        field: ExternalField,
        seq: MultiIndexSequence,
    ) -> Result<Self> {
        let disc = Discretization::new(&sys, DEFAULT_CELLS)?;
        let tau = disc
            .grids()
            .iter()
            .cloned()
            .map(BaseMeasure::lebesgue)
            .collect();
        Self::new(sys, field, tau, seq)
    }

    pub fn system(&self) -> &IntervalSystem {
        &self.sys
    }

    pub fn field(&self) -> &ExternalField {
        &self.field
    }

    pub fn base(&self, i: usize) -> &BaseMeasure {
        &self.tau[i]
    }

    pub fn bases(&self) -> &[BaseMeasure] {
        &self.tau
    }

    pub fn sequence(&self) -> &MultiIndexSequence {
        &self.seq
    }

    pub fn multi_index(&self, d: usize) -> Result<MultiIndex> {
        self.seq.get(d)
    }

    /// The same ensemble with `Q = 0`.
    pub fn unweighted(&self) -> Self {
        Self {
            field: ExternalField::zero(self.sys.p()),
            ..self.clone()
        }
    }

    fn check_config(&self, d: usize, x: &Configuration) -> Result<MultiIndex> {
        let m = self.seq.get(d)?;
        if x.multi_index() != m {
            return Err(Error::InvalidArgument(format!(
                "configuration has block sizes {:?}, index {d} needs {:?}",
                x.multi_index().counts(),
                m.counts()
            )));
        }
        Ok(m)
    }
}

/// `log A^Q(X) + Σ log w_i(x_k^(i))`; `-inf` where `w` vanishes or
/// coordinates collide.
pub fn log_density_unnormalized(spec: &EnsembleSpec, d: usize, x: &Configuration) -> Result<f64> {
    spec.check_config(d, x)?;
    let mut v = log_a(x, &spec.field);
    for (i, block) in x.blocks().iter().enumerate() {
        for &t in block {
            v += spec.tau[i].eval(t).ln();
        }
    }
    Ok(v)
}

#[derive(Debug, Clone)]
pub struct SamplerOptions {
    pub n_samples: usize,
    pub burn_in: usize,
    /// Sweeps between retained samples.
    pub thin: usize,
    pub seed: u64,
    /// Refinement of the base grid used for the conditionals.
    pub refine: usize,
    /// Independent chains; samples are split between them.
    pub chains: usize,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            n_samples: 1,
            burn_in: DEFAULT_BURN_IN,
            thin: DEFAULT_THIN,
            seed: 0,
            refine: DEFAULT_REFINE,
            chains: 1,
        }
    }
}

impl SamplerOptions {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub configs: Vec<Configuration>,
    pub sweeps_per_sample: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub d: usize,
    pub chains: usize,
}

/// Per-block state of a Gibbs chain on refined grids.
struct Chain {
    grids: Vec<Grid>,
    /// `log w_i - 2n Q_i` at the refined nodes.
    base: Vec<Vec<f64>>,
    /// `2 Σ_{own block} log|y - x| + Σ_{other blocks} log|y - x|` at the refined nodes.
    inter: Vec<Vec<f64>>,
    blocks: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

fn safe_ln(d: f64) -> f64 {
    d.abs().max(f64::MIN_POSITIVE).ln()
}

impl Chain {
    fn new(spec: &EnsembleSpec, m: &MultiIndex, refine: usize) -> Result<Self> {
        let n = m.total() as f64;
        let grids: Vec<Grid> = spec.tau.iter().map(|t| t.grid().refined(refine)).collect();
        let mut base = Vec::with_capacity(grids.len());
        for (i, g) in grids.iter().enumerate() {
            let q = spec.field.on_grid(g)?;
            base.push(
                g.nodes()
                    .iter()
                    .zip(&q)
                    .map(|(&y, qv)| spec.tau[i].eval(y).ln() - 2.0 * n * qv)
                    .collect(),
            );
        }
        // Deterministic start: evenly spread points in every interval.
        let blocks = (0..grids.len())
            .map(|i| {
                let iv = spec.sys.interval(i);
                let k = m.count(i);
                (0..k)
                    .map(|j| iv.a + iv.len() * (j as f64 + 0.5) / k as f64)
                    .collect()
            })
            .collect();
        let inter = grids.iter().map(|g| vec![0.0; g.cells()]).collect();
        let mut chain = Self {
            grids,
            base,
            inter,
            blocks,
            scratch: Vec::new(),
        };
        chain.recompute();
        Ok(chain)
    }

    fn recompute(&mut self) {
        for (i, g) in self.grids.iter().enumerate() {
            let acc = &mut self.inter[i];
            for (a, &y) in acc.iter_mut().zip(g.nodes()) {
                let mut v = 0.0;
                for (j, block) in self.blocks.iter().enumerate() {
                    let mult = if j == i { 2.0 } else { 1.0 };
                    for &x in block {
                        v += mult * safe_ln(y - x);
                    }
                }
                *a = v;
            }
        }
    }

    fn sweep(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        self.recompute();
        for i in 0..self.blocks.len() {
            for k in 0..self.blocks[i].len() {
                let old = self.blocks[i][k];
                let g = &self.grids[i];
                self.scratch.clear();
                let mut max = f64::NEG_INFINITY;
                for ((&b, &u), &y) in self.base[i].iter().zip(&self.inter[i]).zip(g.nodes()) {
                    let v = b + u - 2.0 * safe_ln(y - old);
                    max = max.max(v);
                    self.scratch.push(v);
                }
                if !max.is_finite() {
                    return Err(Error::DegenerateConditional { block: i, index: k });
                }
                let mut total = 0.0;
                for v in self.scratch.iter_mut() {
                    total += (*v - max).exp();
                    *v = total;
                }
                let target = rng.random::<f64>() * total;
                let j = self
                    .scratch
                    .partition_point(|&c| c <= target)
                    .min(g.cells() - 1);
                let iv = g.interval();
                let new = iv.clamp(g.edge(j) + rng.random::<f64>() * g.cell_width());
                self.blocks[i][k] = new;
                for (bi, grid) in self.grids.iter().enumerate() {
                    let mult = if bi == i { 2.0 } else { 1.0 };
                    for (a, &y) in self.inter[bi].iter_mut().zip(grid.nodes()) {
                        *a += mult * (safe_ln(y - new) - safe_ln(y - old));
                    }
                }
            }
        }
        Ok(())
    }

    fn config(&self) -> Configuration {
        let mut blocks = self.blocks.clone();
        for b in &mut blocks {
            b.sort_by(f64::total_cmp);
        }
        Configuration::from_sorted_blocks(blocks)
    }
}

/// Systematic-scan Gibbs sampler for `Prob^Q` at index `d`. Every coordinate
/// is redrawn from its one-dimensional conditional by inverse CDF on the
/// refined grid, uniformly within the chosen cell.
pub fn gibbs_sample(spec: &EnsembleSpec, d: usize, opts: &SamplerOptions) -> Result<SampleBatch> {
    if opts.n_samples == 0 || opts.chains == 0 || opts.thin == 0 || opts.refine == 0 {
        return Err(Error::InvalidArgument(
            "samples, chains, thinning and refinement must be positive".into(),
        ));
    }
    let m = spec.seq.get(d)?;
    let chains = opts.chains.min(opts.n_samples);
    let per_chain: Vec<usize> = (0..chains)
        .map(|c| opts.n_samples / chains + usize::from(c < opts.n_samples % chains))
        .collect();
    let runs: Vec<Result<Vec<Configuration>>> = per_chain
        .par_iter()
        .enumerate()
        .map(|(c, &count)| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(c as u64);
            let mut chain = Chain::new(spec, &m, opts.refine)?;
            for _ in 0..opts.burn_in {
                chain.sweep(&mut rng)?;
            }
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                for _ in 0..opts.thin {
                    chain.sweep(&mut rng)?;
                }
                out.push(chain.config());
            }
            Ok(out)
        })
        .collect();
    let mut configs = Vec::with_capacity(opts.n_samples);
    for r in runs {
        configs.extend(r?);
    }
    Ok(SampleBatch {
        configs,
        sweeps_per_sample: opts.thin,
        burn_in: opts.burn_in,
        seed: opts.seed,
        d,
        chains,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "nodes", rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Midpoint rule with the given number of cells per interval.
    Midpoint(usize),
    /// Gauss-Legendre rule with the given number of nodes per interval.
    GaussLegendre(usize),
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::GaussLegendre(16)
    }
}

/// One-dimensional rule for `∫ f dτ_i` (log weights).
fn block_rule(spec: &EnsembleSpec, i: usize, rule: QuadratureRule) -> (Vec<f64>, Vec<f64>) {
    let iv = spec.sys.interval(i);
    let (x, w) = match rule {
        QuadratureRule::GaussLegendre(k) => mapped_rule(k, iv.a, iv.b),
        QuadratureRule::Midpoint(k) => {
            let h = iv.len() / k as f64;
            (
                (0..k).map(|j| iv.a + (j as f64 + 0.5) * h).collect(),
                vec![h; k],
            )
        }
    };
    let lw = x
        .iter()
        .zip(&w)
        .map(|(&t, &wt)| (wt * spec.tau[i].eval(t)).ln())
        .collect();
    (x, lw)
}

/// Accumulates `log Σ exp(v)` without overflow.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    fn merge(mut self, other: Self) -> Self {
        if other.max != f64::NEG_INFINITY {
            self.add(other.max);
            self.sum += (other.sum - 1.0) * (other.max - self.max).exp();
        }
        self
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Parallel fold over the tensor rule on the full product. `step` receives
/// the blocks, `log A^Q` and the log quadrature weight of every node.
pub(crate) fn tensor_fold<T: Send>(
    spec: &EnsembleSpec,
    m: &MultiIndex,
    rule: QuadratureRule,
    init: impl Fn() -> T + Sync,
    step: impl Fn(&mut T, &[Vec<f64>], f64, f64) + Sync,
    merge: impl Fn(T, T) -> T,
) -> T {
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.sys.p())
        .map(|i| block_rule(spec, i, rule))
        .collect();
    // Coordinate c belongs to block owner[c].
    let owner: Vec<usize> = m
        .counts()
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
        .collect();
    let n = owner.len();
    let sizes: Vec<usize> = owner.iter().map(|&i| rules[i].0.len()).collect();
    let parts: Vec<T> = (0..sizes[0])
        .into_par_iter()
        .map(|j0| {
            let mut acc = init();
            let mut idx = vec![0usize; n];
            idx[0] = j0;
            let mut blocks: Vec<Vec<f64>> =
                m.counts().iter().map(|&c| Vec::with_capacity(c)).collect();
            loop {
                for b in &mut blocks {
                    b.clear();
                }
                let mut lw = 0.0;
                for (c, &j) in idx.iter().enumerate() {
                    let (x, w) = &rules[owner[c]];
                    blocks[owner[c]].push(x[j]);
                    lw += w[j];
                }
                let la = log_a_blocks(&blocks, &spec.field);
                step(&mut acc, &blocks, la, lw);
                // Odometer over coordinates 1..n.
                let mut c = n;
                loop {
                    if c == 1 {
                        return acc;
                    }
                    c -= 1;
                    idx[c] += 1;
                    if idx[c] < sizes[c] {
                        break;
                    }
                    idx[c] = 0;
                }
            }
        })
        .collect();
    let mut it = parts.into_iter();
    let first = it.next().expect("rules have at least one node");
    it.fold(first, merge)
}

/// Log of the tensor-rule integral of `A^Q dτ`, in total and over the nodes
/// where `in_set(log A^Q)` holds.
fn tensor_integral(
    spec: &EnsembleSpec,
    m: &MultiIndex,
    rule: QuadratureRule,
    in_set: impl Fn(f64) -> bool + Sync,
) -> (f64, f64) {
    let (all, set) = tensor_fold(
        spec,
        m,
        rule,
        || (LogSum::EMPTY, LogSum::EMPTY),
        |acc, _, la, lw| {
            acc.0.add(la + lw);
            if in_set(la) {
                acc.1.add(la + lw);
            }
        },
        |a, b| (a.0.merge(b.0), a.1.merge(b.1)),
    );
    (all.value(), set.value())
}

/// `log Z` over the full product by tensor quadrature.
pub fn log_z_quadrature(spec: &EnsembleSpec, d: usize, rule: QuadratureRule) -> Result<f64> {
    let m = spec.seq.get(d)?;
    if m.total() > MAX_QUADRATURE_N {
        return Err(Error::DimensionTooLarge {
            n: m.total(),
            max: MAX_QUADRATURE_N,
        });
    }
    Ok(tensor_integral(spec, &m, rule, |_| false).0)
}

/// `Z` over the full product with the default 16-point Gauss rule.
pub fn z_quadrature(spec: &EnsembleSpec, d: usize) -> Result<f64> {
    Ok(log_z_quadrature(spec, d, QuadratureRule::default())?.exp())
}

/// `log Π n_i!`, the ratio between full-product and sorted-sector integrals.
pub fn log_sector_factor(m: &MultiIndex) -> f64 {
    m.counts()
        .iter()
        .map(|&c| (1..=c).map(|k| (k as f64).ln()).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ZBounds {
    pub lower: f64,
    pub upper: f64,
    pub c_mass: f64,
    pub c_bm: f64,
}

/// Bounds on `log Z` from a Fekete configuration `F` at index `d`:
/// `upper = log A^Q(F) + n log C_mass` and
/// `lower = log A^Q(F) - n log C_BM - 2n^2 log(1 + ε)`.
///
/// `C_BM` is the largest `β_D / (|τ_i| (1+ε)^D)` over blocks and degrees
/// `D ≤ min(2n, 24)`, with `β_D` the Christoffel supremum of the normalized
/// `τ_i`; in the weighted case the Gram weight is `e^{-2n Q_i}`.
pub fn z_fekete_bounds(
    spec: &EnsembleSpec,
    d: usize,
    fekete: &FeketeResult,
    epsilon: f64,
) -> Result<ZBounds> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} must be non-negative"
        )));
    }
    let m = spec.check_config(d, &fekete.config)?;
    let n = m.total();
    let nf = n as f64;
    let la = log_a(&fekete.config, &spec.field);
    let c_mass = spec
        .tau
        .iter()
        .map(BaseMeasure::total_mass)
        .fold(0.0, f64::max);
    let d_max = (2 * n).min(crate::ldp::MAX_BM_DEGREE);
    let mut c_bm: f64 = 0.0;
    for (i, tau) in spec.tau.iter().enumerate() {
        let q = spec.field.component(i);
        let weight = (!q.is_zero()).then_some((q, nf));
        for deg in 0..=d_max {
            let est = bm_constant(tau, deg, weight)?;
            c_bm = c_bm.max(est.beta / (tau.total_mass() * (1.0 + epsilon).powi(deg as i32)));
        }
    }
    Ok(ZBounds {
        lower: la - nf * c_bm.ln() - 2.0 * nf * nf * (1.0 + epsilon).ln(),
        upper: la + nf * c_mass.ln(),
        c_mass,
        c_bm,
    })
}

/// `δ^Q = exp(-E^Q(μ_{Γ,Q}))`.
pub fn delta_q(equilibrium: &EquilibriumSolution) -> f64 {
    (-equilibrium.energy.total).exp()
}

/// How an integral against the ensemble is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum IntegrationMode {
    Quadrature { rule: QuadratureRule },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for IntegrationMode {
    fn default() -> Self {
        Self::Quadrature {
            rule: QuadratureRule::Midpoint(40),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JohanssonReport {
    pub d: usize,
    pub n: usize,
    pub eta: f64,
    pub delta: f64,
    pub probability: f64,
    /// Binomial standard error in Monte Carlo mode.
    pub std_error: Option<f64>,
    /// `(1 - η / 2δ)^{n^2}`.
    pub bound: f64,
    /// `log Z / n^2` (full product), quadrature mode only.
    pub log_z_normalized: Option<f64>,
    /// Whether `Z^{1/n^2} ≥ δ - η/4`; `None` when `Z` was not computed.
    pub premise: Option<bool>,
    pub bound_holds: bool,
}

/// Probability of `B = {X : A^Q(X)^{1/n^2} ≤ δ - η}` under `Prob^Q`.
pub fn johansson_probability(
    spec: &EnsembleSpec,
    d: usize,
    eta: f64,
    delta: f64,
    mode: IntegrationMode,
) -> Result<JohanssonReport> {
    if !(eta > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidArgument(
            "eta and delta must be positive".into(),
        ));
    }
    let m = spec.seq.get(d)?;
    let n = m.total();
    let n2 = (n * n) as f64;
    let threshold = if delta > eta {
        n2 * (delta - eta).ln()
    } else {
        f64::NEG_INFINITY
    };
    let in_set = |la: f64| la <= threshold && threshold > f64::NEG_INFINITY;
    let (probability, std_error, log_z) = match mode {
        IntegrationMode::Quadrature { rule } => {
            if n > MAX_PROBABILITY_N {
                return Err(Error::DimensionTooLarge {
                    n,
                    max: MAX_PROBABILITY_N,
                });
            }
            let (all, set) = tensor_integral(spec, &m, rule, in_set);
            ((set - all).exp(), None, Some(all))
        }
        IntegrationMode::MonteCarlo { samples, seed } => {
            let batch = gibbs_sample(spec, d, &SamplerOptions::new(samples, seed))?;
            let hits = batch
                .configs
                .iter()
                .filter(|x| in_set(log_a(x, &spec.field)))
                .count();
            let p = hits as f64 / samples as f64;
            (p, Some((p * (1.0 - p) / samples as f64).sqrt()), None)
        }
    };
    let bound = (1.0 - eta / (2.0 * delta)).max(0.0).powf(n2);
    let premise = log_z.map(|lz| delta - eta / 4.0 <= 0.0 || lz / n2 >= (delta - eta / 4.0).ln());
    Ok(JohanssonReport {
        d,
        n,
        eta,
        delta,
        probability,
        std_error,
        bound,
        log_z_normalized: log_z.map(|lz| lz / n2),
        premise,
        bound_holds: probability <= bound,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub d: usize,
    pub n: usize,
    pub mean_distance: f64,
    pub std_distance: f64,
}

/// Mean and standard deviation over Gibbs samples of the weak* distance
/// between the counting measure `j^r` and the equilibrium measure.
pub fn convergence_experiment(
    spec: &EnsembleSpec,
    d_list: &[usize],
    samples_per_d: usize,
    seed: u64,
    equilibrium: &EquilibriumSolution,
) -> Result<Vec<ConvergenceRow>> {
    let disc = Discretization::new(&spec.sys, equilibrium.measure.component(0).grid().cells())?;
    d_list
        .iter()
        .map(|&d| {
            let mut opts = SamplerOptions::new(samples_per_d, seed);
            opts.chains = samples_per_d
                .min(rayon::current_num_threads().max(1))
                .min(8);
            let batch = gibbs_sample(spec, d, &opts)?;
            let dist: Vec<f64> = batch
                .configs
                .iter()
                .map(|x| {
                    weak_star_distance(
                        &counting_measure(x, &disc, Normalization::PerBlock)?,
                        &equilibrium.measure,
                    )
                })
                .collect::<Result<_>>()?;
            let k = dist.len() as f64;
            let mean = dist.iter().sum::<f64>() / k;
            let var = if dist.len() > 1 {
                dist.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            Ok(ConvergenceRow {
                d,
                n: spec.seq.get(d)?.total(),
                mean_distance: mean,
                std_distance: var.sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldComponent;

    fn two_interval_spec(indices: Vec<Vec<usize>>) -> EnsembleSpec {
        let sys = IntervalSystem::new(vec![(-2.0, -1.0), (1.0, 2.0)], vec![0.5, 0.5]).unwrap();
        EnsembleSpec::lebesgue(
            sys,
            ExternalField::zero(2),
            MultiIndexSequence::explicit(indices),
        )
        .unwrap()
    }

    fn unit_spec(n: usize) -> EnsembleSpec {
        let sys = IntervalSystem::new(vec![(0.0, 1.0)], vec![1.0]).unwrap();
        EnsembleSpec::lebesgue(
            sys,
            ExternalField::zero(1),
            MultiIndexSequence::explicit(vec![vec![n]]),
        )
        .unwrap()
    }

    #[test]
    fn base_measure_validation_and_mass() {
        let g = Arc::new(
            Grid::midpoint(0, crate::system::Interval::new(0.0, 1.0).unwrap(), 100).unwrap(),
        );
        assert!((BaseMeasure::lebesgue(g.clone()).total_mass() - 1.0).abs() < 1e-12);
        assert!(BaseMeasure::new(g.clone(), vec![0.0; 100]).is_err());
        assert!(BaseMeasure::new(g.clone(), vec![-1.0; 100]).is_err());
        let w = BaseMeasure::power(g.clone(), 1.0).unwrap();
        assert!((w.integrate(|x| x) - 1.0 / 3.0).abs() < 1e-12);
        assert!((w.eval(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn density_examples() {
        let spec = two_interval_spec(vec![vec![1, 1]]);
        let x = Configuration::new(vec![vec![-1.5], vec![1.5]], spec.system()).unwrap();
        assert!((log_density_unnormalized(&spec, 1, &x).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert_eq!(
            log_density_unnormalized(&spec, 1, &x).unwrap(),
            log_a(&x, spec.field())
        );
        let doubled = EnsembleSpec::new(
            spec.system().clone(),
            ExternalField::zero(2),
            vec![spec.base(0).scaled(2.0).unwrap(), spec.base(1).clone()],
            spec.sequence().clone(),
        )
        .unwrap();
        let y = Configuration::new(vec![vec![-1.9, -1.2], vec![1.5]], spec.system()).unwrap();
        let spec2 = two_interval_spec(vec![vec![2, 1]]);
        let doubled2 = EnsembleSpec::new(
            spec2.system().clone(),
            ExternalField::zero(2),
            doubled.bases().to_vec(),
            spec2.sequence().clone(),
        )
        .unwrap();
        let diff = log_density_unnormalized(&doubled2, 1, &y).unwrap()
            - log_density_unnormalized(&spec2, 1, &y).unwrap();
        assert!((diff - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!(log_density_unnormalized(&spec, 1, &y).is_err());
    }

    #[test]
    fn z_closed_forms() {
        assert!(
            (z_quadrature(&two_interval_spec(vec![vec![1, 1]]), 1).unwrap() - 3.0).abs() < 1e-4
        );
        assert!((z_quadrature(&unit_spec(2), 1).unwrap() - 1.0 / 6.0).abs() < 1e-4);
        assert!((z_quadrature(&unit_spec(1), 1).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            z_quadrature(&unit_spec(6), 1),
            Err(Error::DimensionTooLarge { n: 6, .. })
        ));
        // Selberg: ∫∫∫ Δ² on [0,1]^3 = 1/360.
        assert!((z_quadrature(&unit_spec(3), 1).unwrap() - 1.0 / 360.0).abs() < 1e-10);
        let mid = log_z_quadrature(&unit_spec(2), 1, QuadratureRule::Midpoint(400))
            .unwrap()
            .exp();
        assert!((mid - 1.0 / 6.0).abs() < 1e-4);
    }

    #[test]
    fn log_sum_merges_consistently() {
        let vals = [-3.0, 1.0, 700.0, -1e300, 2.5];
        let mut a = LogSum::EMPTY;
        for v in vals {
            a.add(v);
        }
        let (mut b, mut c) = (LogSum::EMPTY, LogSum::EMPTY);
        b.add(vals[0]);
        b.add(vals[1]);
        for v in &vals[2..] {
            c.add(*v);
        }
        assert!((a.value() - b.merge(c).value()).abs() < 1e-12);
        assert!((a.value() - 700.0).abs() < 1e-12);
    }

    #[test]
    fn single_point_samples_are_uniform() {
        let spec = unit_spec(1);
        let batch = gibbs_sample(
            &spec,
            1,
            &SamplerOptions {
                n_samples: 5000,
                burn_in: 0,
                thin: 1,
                ..SamplerOptions::new(1, 3)
            },
        )
        .unwrap();
        let mut xs: Vec<f64> = batch.configs.iter().map(|c| c.block(0)[0]).collect();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                ((k + 1) as f64 / 5000.0 - x)
                    .abs()
                    .max((k as f64 / 5000.0 - x).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks <= 0.03, "{ks}");
    }

    #[test]
    fn two_point_marginal_matches_closed_form() {
        let spec = two_interval_spec(vec![vec![1, 1]]);
        let opts = SamplerOptions {
            n_samples: 5000,
            burn_in: 5,
            thin: 1,
            ..SamplerOptions::new(1, 5)
        };
        let batch = gibbs_sample(&spec, 1, &opts).unwrap();
        let mut xs: Vec<f64> = batch.configs.iter().map(|c| c.block(0)[0]).collect();
        xs.sort_by(f64::total_cmp);
        // Marginal density (3/2 - x)/3 on [-2, -1].
        let cdf = |x: f64| ((1.5 * x - 0.5 * x * x) - (1.5 * -2.0 - 2.0)) / 3.0;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                ((k + 1) as f64 / 5000.0 - cdf(x))
                    .abs()
                    .max((k as f64 / 5000.0 - cdf(x)).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks <= 0.03, "{ks}");
        for c in &batch.configs {
            assert!(spec.system().interval(0).contains(c.block(0)[0]));
            assert!(spec.system().interval(1).contains(c.block(1)[0]));
        }
    }

    #[test]
    fn sampling_is_deterministic_and_chain_split_is_stable() {
        let spec = two_interval_spec(vec![vec![3, 3]]);
        let opts = SamplerOptions {
            chains: 3,
            ..SamplerOptions::new(6, 9)
        };
        let a = gibbs_sample(&spec, 1, &opts).unwrap();
        let b = gibbs_sample(&spec, 1, &opts).unwrap();
        assert_eq!(a.configs, b.configs);
        let c = gibbs_sample(&spec, 1, &SamplerOptions { seed: 10, ..opts }).unwrap();
        assert_ne!(a.configs, c.configs);
    }

    #[test]
    fn degenerate_conditional_is_reported() {
        let sys = IntervalSystem::new(vec![(0.0, 1.0)], vec![1.0]).unwrap();
        let field = ExternalField::new(vec![FieldComponent::Constant(1e308)]);
        let spec = EnsembleSpec::lebesgue(sys, field, MultiIndexSequence::explicit(vec![vec![2]]))
            .unwrap();
        assert!(matches!(
            gibbs_sample(&spec, 1, &SamplerOptions::new(1, 0)),
            Err(Error::DegenerateConditional { block: 0, index: 0 })
        ));
    }

    #[test]
    fn whole_space_probability_is_one() {
        let spec = two_interval_spec(vec![vec![1, 1], vec![2, 1]]);
        for d in 1..=2 {
            let rule = QuadratureRule::Midpoint(24);
            let m = spec.multi_index(d).unwrap();
            let (all, set) = tensor_integral(&spec, &m, rule, |_| true);
            assert!(((set - all).exp() - 1.0).abs() < 1e-6);
        }
    }
}
