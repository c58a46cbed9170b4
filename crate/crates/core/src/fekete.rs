//! The ensemble's density exponent `log A^Q` and (approximate) Fekete
//! configurations maximizing it.
//!
//! Maximization is cyclic coordinate ascent. Between two neighbouring points of
//! its own block a coordinate's slice
//!
//! ```text
//! x -> 2 Σ_{s≠k} log|x - x_s^(i)| + Σ_{j≠i} Σ_s log|x - x_s^(j)| - 2n Q_i(x)
//! ```
//!
//! is strictly concave when `Q_i` is convex, so each gap is searched by
//! golden section. For non-convex `Q_i` this is a heuristic; random restarts
//! hedge against local maxima.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::field::ExternalField;
use crate::measure::{counting_measure, weak_star_distance, Discretization, Normalization};
use crate::system::{Configuration, IntervalSystem, MultiIndex, MultiIndexSequence};

pub const DEFAULT_STARTS: usize = 4;
pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_CERTIFY_ROUNDS: usize = 64;

/// `log A^Q(X)`; `-inf` when two coordinates of one block coincide.
pub fn log_a(x: &Configuration, field: &ExternalField) -> f64 {
    log_a_blocks(x.blocks(), field)
}

/// [`log_a`] on raw blocks; blocks need not be sorted.
pub(crate) fn log_a_blocks(blocks: &[Vec<f64>], field: &ExternalField) -> f64 {
    let n = blocks.iter().map(Vec::len).sum::<usize>() as f64;
    let mut total = 0.0;
    for (i, block) in blocks.iter().enumerate() {
        for r in 0..block.len() {
            for s in r + 1..block.len() {
                let d = (block[s] - block[r]).abs();
                if d == 0.0 {
                    return f64::NEG_INFINITY;
                }
                total += 2.0 * d.ln();
            }
        }
        for other in &blocks[i + 1..] {
            for &u in block {
                for &v in other {
                    total += (v - u).abs().ln();
                }
            }
        }
    }
    if !field.is_zero() {
        let q: f64 = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| b.iter().map(|&t| field.eval(i, t)).sum::<f64>())
            .sum();
        total -= 2.0 * n * q;
    }
    total
}

/// `Σ log|x - p|` over `pts`, skipping index `skip`. Products are formed in
/// short runs to save logarithms.
fn sum_log_dist(x: f64, pts: &[f64], skip: Option<usize>) -> f64 {
    let mut acc = 0.0;
    let mut prod = 1.0;
    let mut run = 0;
    for (s, &p) in pts.iter().enumerate() {
        if Some(s) == skip {
            continue;
        }
        prod *= (x - p).abs();
        run += 1;
        if run == 8 {
            acc += prod.ln();
            prod = 1.0;
            run = 0;
        }
    }
    acc + prod.ln()
}

struct Slice<'a> {
    blocks: &'a [Vec<f64>],
    field: &'a ExternalField,
    n: f64,
}

impl Slice<'_> {
    /// Contribution to `log A^Q` of coordinate `(i, k)` placed at `x`.
    fn eval(&self, i: usize, k: usize, x: f64) -> f64 {
        let mut v = 2.0 * sum_log_dist(x, &self.blocks[i], Some(k));
        for (j, other) in self.blocks.iter().enumerate() {
            if j != i {
                v += sum_log_dist(x, other, None);
            }
        }
        let v = v - 2.0 * self.n * self.field.eval(i, x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximize `f` on `[lo, hi]` by golden section; `closed_lo`/`closed_hi` add
/// the endpoints as candidates.
fn golden_max(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    closed_lo: bool,
    closed_hi: bool,
    xtol: f64,
) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > xtol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    if closed_lo {
        let v = f(lo);
        if v > best.1 {
            best = (lo, v);
        }
    }
    if closed_hi {
        let v = f(hi);
        if v > best.1 {
            best = (hi, v);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct FeketeOptions {
    pub n_starts: usize,
    pub tol: f64,
    pub seed: u64,
    pub max_sweeps: usize,
}

impl Default for FeketeOptions {
    fn default() -> Self {
        Self {
            n_starts: DEFAULT_STARTS,
            tol: DEFAULT_TOL,
            seed: 0,
            max_sweeps: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeketeResult {
    pub config: Configuration,
    pub log_a: f64,
    /// `log_a / n^2`.
    pub normalized: f64,
    pub starts_used: usize,
    /// No single-coordinate move, into any gap, improves `log_a` by more than `tol`.
    pub coordinatewise_optimal: bool,
    pub sweeps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeketeSummary {
    pub multi_index: Vec<usize>,
    pub log_a: f64,
    pub normalized: f64,
    pub starts_used: usize,
    pub coordinatewise_optimal: bool,
    pub sweeps: usize,
}

impl FeketeResult {
    pub fn summary(&self) -> FeketeSummary {
        FeketeSummary {
            multi_index: self.config.multi_index().counts().to_vec(),
            log_a: self.log_a,
            normalized: self.normalized,
            starts_used: self.starts_used,
            coordinatewise_optimal: self.coordinatewise_optimal,
            sweeps: self.sweeps,
        }
    }
}

struct Ascent<'a> {
    sys: &'a IntervalSystem,
    field: &'a ExternalField,
    n: f64,
    tol: f64,
}

impl Ascent<'_> {
    fn xtol(&self, i: usize) -> f64 {
        1e-13 * self.sys.interval(i).len().max(1.0)
    }

    /// One cyclic sweep restricted to each coordinate's own gap.
    fn sweep(&self, blocks: &mut [Vec<f64>]) -> f64 {
        let mut gained = 0.0;
        for i in 0..blocks.len() {
            let iv = self.sys.interval(i);
            let len = blocks[i].len();
            for k in 0..len {
                let lo = if k == 0 { iv.a } else { blocks[i][k - 1] };
                let hi = if k + 1 == len { iv.b } else { blocks[i][k + 1] };
                if !(hi > lo) {
                    continue;
                }
                let slice = Slice {
                    blocks,
                    field: self.field,
                    n: self.n,
                };
                let current = slice.eval(i, k, blocks[i][k]);
                let (x, v) = golden_max(
                    |t| slice.eval(i, k, t),
                    lo,
                    hi,
                    k == 0,
                    k + 1 == len,
                    self.xtol(i),
                );
                if v > current {
                    gained += if current.is_finite() {
                        v - current
                    } else {
                        f64::INFINITY
                    };
                    blocks[i][k] = x;
                }
            }
        }
        gained
    }

    /// Search every gap for every coordinate; apply any move gaining more
    /// than `tol`. Returns whether nothing moved.
    fn certify(&self, blocks: &mut [Vec<f64>]) -> bool {
        let mut optimal = true;
        for i in 0..blocks.len() {
            let iv = self.sys.interval(i);
            let len = blocks[i].len();
            let mut k = 0;
            while k < len {
                let slice = Slice {
                    blocks,
                    field: self.field,
                    n: self.n,
                };
                let current = slice.eval(i, k, blocks[i][k]);
                let others: Vec<f64> = blocks[i]
                    .iter()
                    .enumerate()
                    .filter(|(s, _)| *s != k)
                    .map(|(_, &v)| v)
                    .collect();
                let mut best = (blocks[i][k], current);
                for g in 0..=others.len() {
                    let lo = if g == 0 { iv.a } else { others[g - 1] };
                    let hi = if g == others.len() { iv.b } else { others[g] };
                    if !(hi > lo) {
                        continue;
                    }
                    let cand = golden_max(
                        |t| slice.eval(i, k, t),
                        lo,
                        hi,
                        g == 0,
                        g == others.len(),
                        self.xtol(i),
                    );
                    if cand.1 > best.1 {
                        best = cand;
                    }
                }
                if best.1 - current > self.tol || (!current.is_finite() && best.1.is_finite()) {
                    optimal = false;
                    let block = &mut blocks[i];
                    block.remove(k);
                    let pos = block.partition_point(|&v| v < best.0);
                    block.insert(pos, best.0);
                }
                k += 1;
            }
        }
        optimal
    }
}

/// Best coordinatewise-optimal configuration over `n_starts` random starts.
pub fn fekete_points(
    sys: &IntervalSystem,
    field: &ExternalField,
    m: &MultiIndex,
    opts: &FeketeOptions,
) -> Result<FeketeResult> {
    if opts.n_starts == 0 {
        return Err(Error::InvalidArgument(
            "at least one start is required".into(),
        ));
    }
    if m.p() != sys.p() {
        return Err(Error::InvalidArgument(format!(
            "multi-index has {} blocks for {} intervals",
            m.p(),
            sys.p()
        )));
    }
    field.check_dimension(sys.p())?;
    let ascent = Ascent {
        sys,
        field,
        n: m.total() as f64,
        tol: opts.tol,
    };

    let runs: Vec<(Vec<Vec<f64>>, f64, bool, usize)> = (0..opts.n_starts)
        .into_par_iter()
        .map(|start| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(start as u64);
            let mut blocks: Vec<Vec<f64>> = (0..sys.p())
                .map(|i| {
                    let iv = sys.interval(i);
                    let mut b: Vec<f64> = (0..m.count(i))
                        .map(|_| iv.a + iv.len() * rng.random::<f64>())
                        .collect();
                    b.sort_by(f64::total_cmp);
                    b
                })
                .collect();
            let mut sweeps = 0;
            let mut optimal = false;
            for _ in 0..MAX_CERTIFY_ROUNDS {
                while sweeps < opts.max_sweeps {
                    sweeps += 1;
                    if ascent.sweep(&mut blocks) < opts.tol {
                        break;
                    }
                }
                if ascent.certify(&mut blocks) {
                    optimal = true;
                    break;
                }
            }
            let value = log_a(&Configuration::from_sorted_blocks(blocks.clone()), field);
            (blocks, value, optimal, sweeps)
        })
        .collect();

    let mut best = 0;
    for (s, run) in runs.iter().enumerate() {
        if run.1 > runs[best].1 {
            best = s;
        }
    }
    let (blocks, value, optimal, sweeps) = runs.into_iter().nth(best).unwrap();
    let n = m.total() as f64;
    Ok(FeketeResult {
        config: Configuration::from_sorted_blocks(blocks),
        log_a: value,
        normalized: value / (n * n),
        starts_used: opts.n_starts,
        coordinatewise_optimal: optimal,
        sweeps,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticsRow {
    pub d: usize,
    pub n: usize,
    pub log_a: f64,
    pub normalized: f64,
    /// Weak* distance of `(1/n) Σ δ` to the equilibrium measure.
    pub distance: f64,
}

/// Normalized `log A^Q` at Fekete configurations for `d = 1..=d_max`, with the
/// distance of their counting measures to `equilibrium`.
pub fn fekete_asymptotics(
    sys: &IntervalSystem,
    field: &ExternalField,
    seq: &MultiIndexSequence,
    d_max: usize,
    opts: &FeketeOptions,
    equilibrium: &EquilibriumSolution,
) -> Result<Vec<AsymptoticsRow>> {
    if d_max < 2 {
        return Err(Error::InvalidArgument("d_max must be at least 2".into()));
    }
    let disc = Discretization::new(sys, equilibrium.measure.component(0).grid().cells())?;
    (1..=d_max)
        .map(|d| {
            let m = seq.get(d)?;
            let res = fekete_points(sys, field, &m, opts)?;
            let mu = counting_measure(&res.config, &disc, Normalization::Global)?;
            Ok(AsymptoticsRow {
                d,
                n: m.total(),
                log_a: res.log_a,
                normalized: res.normalized,
                distance: weak_star_distance(&mu, &equilibrium.measure)?,
            })
        })
        .collect()
}
