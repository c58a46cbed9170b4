//! Intervals, mass vectors, multi-indices and configurations.
//!
//! Everything here is immutable after construction. Interval indices are
//! zero-based in the API; exported files use one-based indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when deciding whether a coordinate lies in a closed interval.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

/// Tolerance on `sum(r) == 1`.
pub const MASS_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidSystem(format!(
                "non-finite endpoint in [{a}, {b}]"
            )));
        }
        if a >= b {
            return Err(Error::InvalidSystem(format!(
                "degenerate interval [{a}, {b}]"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.b - self.a)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.a - MEMBERSHIP_SLACK && x <= self.b + MEMBERSHIP_SLACK
    }

    /// Clamp `x` into the closed interval.
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.a, self.b)
    }
}

/// Disjoint, ordered compact intervals together with their component masses.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSystem {
    intervals: Vec<Interval>,
    masses: Vec<f64>,
}

impl IntervalSystem {
    pub fn new(intervals: Vec<(f64, f64)>, masses: Vec<f64>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidSystem(
                "at least one interval is required".into(),
            ));
        }
        let intervals = intervals
            .into_iter()
            .map(|(a, b)| Interval::new(a, b))
            .collect::<Result<Vec<_>>>()?;
        for (i, w) in intervals.windows(2).enumerate() {
            if w[0].b >= w[1].a {
                return Err(Error::InvalidSystem(format!(
                    "intervals {i} and {} overlap or are out of order",
                    i + 1
                )));
            }
        }
        if masses.len() != intervals.len() {
            return Err(Error::InfeasibleMasses(format!(
                "{} masses for {} intervals",
                masses.len(),
                intervals.len()
            )));
        }
        if let Some(r) = masses.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::InfeasibleMasses(format!("mass {r} is not positive")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::InfeasibleMasses(format!(
                "masses sum to {total}, not 1"
            )));
        }
        Ok(Self { intervals, masses })
    }

    /// Equal masses `1/p` on every interval.
    pub fn with_equal_masses(intervals: Vec<(f64, f64)>) -> Result<Self> {
        let p = intervals.len().max(1);
        Self::new(intervals, vec![1.0 / p as f64; p])
    }

    pub fn p(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn interval(&self, i: usize) -> Interval {
        self.intervals[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    /// Index of the interval containing `x`, if any.
    pub fn locate(&self, x: f64) -> Option<usize> {
        self.intervals.iter().position(|iv| iv.contains(x))
    }

    /// Smallest closed interval containing every component.
    pub fn hull(&self) -> Interval {
        Interval {
            a: self.intervals[0].a,
            b: self.intervals[self.p() - 1].b,
        }
    }

    /// Image of the system under `x -> -x`; masses are reversed accordingly.
    pub fn mirrored(&self) -> Self {
        let intervals = self
            .intervals
            .iter()
            .rev()
            .map(|iv| Interval { a: -iv.b, b: -iv.a })
            .collect();
        let masses = self.masses.iter().rev().copied().collect();
        Self { intervals, masses }
    }
}

/// Block sizes `(n_1, ..., n_p)`, all positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    counts: Vec<usize>,
}

impl MultiIndex {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidArgument(
                "multi-index must have at least one block".into(),
            ));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "multi-index {counts:?} has an empty block"
            )));
        }
        Ok(Self { counts })
    }

    /// Split `n` points proportionally to `masses` with largest-remainder
    /// rounding, keeping at least one point per block.
    pub fn proportional(masses: &[f64], n: usize) -> Result<Self> {
        let p = masses.len();
        if n < p {
            return Err(Error::InvalidArgument(format!(
                "cannot split {n} points over {p} blocks"
            )));
        }
        let total: f64 = masses.iter().sum();
        let raw: Vec<f64> = masses.iter().map(|r| r / total * n as f64).collect();
        let mut counts: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..p).collect();
        // Largest fractional part first; ties broken by index for determinism.
        order.sort_by(|&i, &j| {
            let fi = raw[i] - raw[i].floor();
            let fj = raw[j] - raw[j].floor();
            fj.partial_cmp(&fi)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        for i in 0..p {
            if counts[i] == 0 {
                let donor = (0..p).max_by_key(|&j| counts[j]).unwrap();
                counts[donor] -= 1;
                counts[i] = 1;
            }
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, i: usize) -> usize {
        self.counts[i]
    }

    pub fn p(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `max_i |n_i/n - r_i|`.
    pub fn ratio_deviation(&self, masses: &[f64]) -> f64 {
        let n = self.total() as f64;
        self.counts
            .iter()
            .zip(masses)
            .map(|(&c, r)| (c as f64 / n - r).abs())
            .fold(0.0, f64::max)
    }
}

/// The sequence `d -> n(d)` along which asymptotics are taken. `d` starts at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MultiIndexSequence {
    /// `n(d) = step * d`, split proportionally to `masses`.
    Proportional { masses: Vec<f64>, step: usize },
    /// A finite, explicitly listed sequence.
    Explicit { indices: Vec<Vec<usize>> },
}

impl MultiIndexSequence {
    pub fn proportional(masses: &[f64], step: usize) -> Self {
        Self::Proportional {
            masses: masses.to_vec(),
            step,
        }
    }

    pub fn explicit(indices: Vec<Vec<usize>>) -> Self {
        Self::Explicit { indices }
    }

    pub fn get(&self, d: usize) -> Result<MultiIndex> {
        if d == 0 {
            return Err(Error::InvalidArgument(
                "sequence index d starts at 1".into(),
            ));
        }
        match self {
            Self::Proportional { masses, step } => MultiIndex::proportional(masses, step * d),
            Self::Explicit { indices } => indices
                .get(d - 1)
                .ok_or_else(|| Error::InvalidArgument(format!("sequence has no entry d = {d}")))
                .and_then(|c| MultiIndex::new(c.clone())),
        }
    }

    /// Number of entries, `None` for unbounded rules.
    pub fn len(&self) -> Option<usize> {
        match self {
            Self::Proportional { .. } => None,
            Self::Explicit { indices } => Some(indices.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn p(&self) -> usize {
        match self {
            Self::Proportional { masses, .. } => masses.len(),
            Self::Explicit { indices } => indices.first().map_or(0, Vec::len),
        }
    }

    /// Check `|n(d)/n(d) - r| <= schedule(d)` for `d = 1..=d_max`.
    pub fn satisfies_schedule(
        &self,
        masses: &[f64],
        d_max: usize,
        schedule: impl Fn(usize) -> f64,
    ) -> Result<bool> {
        for d in 1..=d_max {
            if self.get(d)?.ratio_deviation(masses) > schedule(d) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// A point of `Γ_1^{n_1} x ... x Γ_p^{n_p}` in block form, each block sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    blocks: Vec<Vec<f64>>,
}

impl Configuration {
    /// Validate block membership against `sys` and sort each block.
    pub fn new(mut blocks: Vec<Vec<f64>>, sys: &IntervalSystem) -> Result<Self> {
        if blocks.len() != sys.p() {
            return Err(Error::InvalidArgument(format!(
                "{} blocks for a system with {} intervals",
                blocks.len(),
                sys.p()
            )));
        }
        for (i, block) in blocks.iter_mut().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidArgument(format!("block {i} is empty")));
            }
            let iv = sys.interval(i);
            if let Some(&x) = block.iter().find(|x| !x.is_finite() || !iv.contains(**x)) {
                return Err(Error::CoordinateOutsideSystem {
                    value: x,
                    reason: format!("not in interval {i} = [{}, {}]", iv.a, iv.b),
                });
            }
            block.sort_by(f64::total_cmp);
        }
        Ok(Self { blocks })
    }

    /// Blocks already known to be sorted and admissible.
    pub(crate) fn from_sorted_blocks(blocks: Vec<Vec<f64>>) -> Self {
        debug_assert!(blocks.iter().all(|b| b.windows(2).all(|w| w[0] <= w[1])));
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.blocks[i]
    }

    pub fn p(&self) -> usize {
        self.blocks.len()
    }

    pub fn total(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn multi_index(&self) -> MultiIndex {
        MultiIndex {
            counts: self.blocks.iter().map(Vec::len).collect(),
        }
    }

    /// All coordinates in block order, i.e. the sorted point of `L_n`.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }
}

/// Sort raw coordinates and cut them into blocks of sizes `m`.
pub fn rho_sort(raw: &[f64], sys: &IntervalSystem, m: &MultiIndex) -> Result<Configuration> {
    if m.p() != sys.p() {
        return Err(Error::InvalidArgument(format!(
            "multi-index has {} blocks, system has {} intervals",
            m.p(),
            sys.p()
        )));
    }
    if raw.len() != m.total() {
        return Err(Error::CoordinateOutsideSystem {
            value: f64::NAN,
            reason: format!(
                "{} coordinates for multi-index of total {}",
                raw.len(),
                m.total()
            ),
        });
    }
    let mut sorted = raw.to_vec();
    if let Some(&x) = sorted.iter().find(|x| !x.is_finite()) {
        return Err(Error::CoordinateOutsideSystem {
            value: x,
            reason: "non-finite".into(),
        });
    }
    sorted.sort_by(f64::total_cmp);
    let mut blocks = Vec::with_capacity(m.p());
    let mut offset = 0;
    for (i, &count) in m.counts().iter().enumerate() {
        let block = sorted[offset..offset + count].to_vec();
        let iv = sys.interval(i);
        if let Some(&x) = block.iter().find(|x| !iv.contains(**x)) {
            let reason = match sys.locate(x) {
                Some(j) => {
                    format!("falls in interval {j} but block {i} expects {count} points there")
                }
                None => "lies in no interval".to_string(),
            };
            return Err(Error::CoordinateOutsideSystem { value: x, reason });
        }
        blocks.push(block);
        offset += count;
    }
    Ok(Configuration { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_intervals() -> IntervalSystem {
        IntervalSystem::new(vec![(-2.0, -1.0), (1.0, 2.0)], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn rejects_bad_systems() {
        assert!(IntervalSystem::new(vec![], vec![]).is_err());
        assert!(IntervalSystem::new(vec![(1.0, 1.0)], vec![1.0]).is_err());
        assert!(IntervalSystem::new(vec![(0.0, 2.0), (1.0, 3.0)], vec![0.5, 0.5]).is_err());
        assert!(IntervalSystem::new(vec![(1.0, 2.0), (-2.0, -1.0)], vec![0.5, 0.5]).is_err());
        assert!(matches!(
            IntervalSystem::new(vec![(0.0, 1.0), (2.0, 3.0)], vec![0.5, 0.6]),
            Err(Error::InfeasibleMasses(_))
        ));
        assert!(matches!(
            IntervalSystem::new(vec![(0.0, 1.0), (2.0, 3.0)], vec![1.0, 0.0]),
            Err(Error::InfeasibleMasses(_))
        ));
    }

    #[test]
    fn rho_sort_two_points() {
        let sys = two_intervals();
        let m = MultiIndex::new(vec![1, 1]).unwrap();
        let x = rho_sort(&[1.5, -1.5], &sys, &m).unwrap();
        assert_eq!(x.blocks(), &[vec![-1.5], vec![1.5]]);
        let again = rho_sort(&x.flatten(), &sys, &m).unwrap();
        assert_eq!(again, x);
    }

    #[test]
    fn rho_sort_errors() {
        let sys = two_intervals();
        let m = MultiIndex::new(vec![1, 1]).unwrap();
        assert!(matches!(
            rho_sort(&[0.0, 1.5], &sys, &m),
            Err(Error::CoordinateOutsideSystem { .. })
        ));
        assert!(matches!(
            rho_sort(&[1.2, 1.5], &sys, &m),
            Err(Error::CoordinateOutsideSystem { .. })
        ));
        assert!(rho_sort(&[1.2], &sys, &m).is_err());
    }

    #[test]
    fn rho_sort_endpoint_slack() {
        let sys = two_intervals();
        let m = MultiIndex::new(vec![1, 1]).unwrap();
        assert!(rho_sort(&[-2.0 - 1e-13, 2.0 + 1e-13], &sys, &m).is_ok());
        assert!(rho_sort(&[-2.0 - 1e-9, 2.0], &sys, &m).is_err());
    }

    #[test]
    fn rho_sort_all_permutations_agree() {
        let sys = two_intervals();
        let m = MultiIndex::new(vec![2, 2]).unwrap();
        let pts = [-1.7, -1.2, 1.1, 1.9];
        let reference = rho_sort(&pts, &sys, &m).unwrap();
        // Heap's algorithm over all 24 orderings.
        let mut a = pts;
        let mut c = [0usize; 4];
        let mut seen = 1;
        let mut i = 0;
        while i < 4 {
            if c[i] < i {
                if i % 2 == 0 {
                    a.swap(0, i);
                } else {
                    a.swap(c[i], i);
                }
                assert_eq!(rho_sort(&a, &sys, &m).unwrap(), reference);
                seen += 1;
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        assert_eq!(seen, 24);
    }

    #[test]
    fn proportional_split() {
        let m = MultiIndex::proportional(&[0.5, 0.5], 7).unwrap();
        assert_eq!(m.total(), 7);
        assert_eq!(m.counts(), &[4, 3]);
        let m = MultiIndex::proportional(&[0.98, 0.01, 0.01], 10).unwrap();
        assert_eq!(m.total(), 10);
        assert!(m.counts().iter().all(|&c| c >= 1));
        let seq = MultiIndexSequence::proportional(&[0.3, 0.7], 10);
        assert_eq!(seq.get(3).unwrap().counts(), &[9, 21]);
        assert!(seq
            .satisfies_schedule(&[0.3, 0.7], 20, |d| 1.0 / (10 * d) as f64)
            .unwrap());
    }

    #[test]
    fn explicit_sequence_bounds() {
        let seq = MultiIndexSequence::explicit(vec![vec![1, 1], vec![2, 2]]);
        assert_eq!(seq.len(), Some(2));
        assert_eq!(seq.get(2).unwrap().total(), 4);
        assert!(seq.get(3).is_err());
        assert!(seq.get(0).is_err());
    }

    #[test]
    fn mirrored_system() {
        let sys = IntervalSystem::new(vec![(-3.0, -1.0), (0.5, 2.0)], vec![0.25, 0.75]).unwrap();
        let m = sys.mirrored();
        assert_eq!(m.interval(0), Interval { a: -2.0, b: -0.5 });
        assert_eq!(m.masses(), &[0.75, 0.25]);
    }
}
