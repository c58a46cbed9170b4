//! External fields `Q = (Q_1, ..., Q_p)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::Grid;

/// One continuous field component on one interval.
#[derive(Clone)]
pub enum FieldComponent {
    Zero,
    Constant(f64),
    /// `scale * (x - center)^2`.
    Quadratic {
        center: f64,
        scale: f64,
    },
    /// Linear interpolation through `(xs, ys)`, constant beyond the ends.
    Samples {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for FieldComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Quadratic { center, scale } => {
                write!(f, "Quadratic {{ center: {center}, scale: {scale} }}")
            }
            Self::Samples { xs, .. } => write!(f, "Samples({} points)", xs.len()),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl FieldComponent {
    pub fn samples(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidArgument(
                "field samples need matching, non-empty xs and ys".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "field sample abscissae must increase strictly".into(),
            ));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "field samples must be finite".into(),
            ));
        }
        Ok(Self::Samples { xs, ys })
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
            Self::Quadratic { center, scale } => scale * (x - center) * (x - center),
            Self::Samples { xs, ys } => interpolate(xs, ys, x),
            Self::Custom(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero) || matches!(self, Self::Constant(c) if *c == 0.0)
    }
}

/// Piecewise-linear interpolation with constant extension.
pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    let k = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let t = (x - x0) / (x1 - x0);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

#[derive(Debug, Clone)]
pub struct ExternalField {
    components: Vec<FieldComponent>,
}

impl ExternalField {
    pub fn new(components: Vec<FieldComponent>) -> Self {
        Self { components }
    }

    /// The canonical `Q = (0, ..., 0)`.
    pub fn zero(p: usize) -> Self {
        Self {
            components: vec![FieldComponent::Zero; p],
        }
    }

    pub fn components(&self) -> &[FieldComponent] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &FieldComponent {
        &self.components[i]
    }

    pub fn p(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, i: usize, x: f64) -> f64 {
        self.components[i].eval(x)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(FieldComponent::is_zero)
    }

    /// Values of `Q_i` at the nodes of `grid`; errors if any is non-finite.
    pub fn on_grid(&self, grid: &Grid) -> Result<Vec<f64>> {
        let i = grid.interval_index();
        let comp = self
            .components
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("field has no component {i}")))?;
        let values: Vec<f64> = grid.nodes().iter().map(|&x| comp.eval(x)).collect();
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "field component {i} takes value {v} on the grid"
            )));
        }
        Ok(values)
    }

    /// `Q_i + c_i` for every component.
    pub fn shifted(&self, constants: &[f64]) -> Self {
        let components = self
            .components
            .iter()
            .zip(constants)
            .map(|(q, &c)| {
                let q = q.clone();
                FieldComponent::custom(move |x| q.eval(x) + c)
            })
            .collect();
        Self { components }
    }

    pub(crate) fn check_dimension(&self, p: usize) -> Result<()> {
        if self.p() != p {
            return Err(Error::InvalidArgument(format!(
                "field has {} components, system has {p}",
                self.p()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation() {
        let q = FieldComponent::Quadratic {
            center: 0.0,
            scale: 0.5,
        };
        assert_eq!(q.eval(2.0), 2.0);
        let s = FieldComponent::samples(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(s.eval(0.5), 1.0);
        assert_eq!(s.eval(2.0), 1.0);
        assert_eq!(s.eval(-4.0), 0.0);
        assert_eq!(s.eval(9.0), 0.0);
        assert!(FieldComponent::samples(vec![1.0, 0.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_is_canonical() {
        assert!(ExternalField::zero(3).is_zero());
        assert!(!ExternalField::new(vec![FieldComponent::Constant(1.0)]).is_zero());
    }
}
