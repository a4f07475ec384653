use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack allowed when checking concavity of computed functions.
pub const CONCAVITY_TOL: f64 = 1e-9;

/// Concave piecewise-linear value of stored energy on `[0, E]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ValueFunctionRaw", into = "ValueFunctionRaw")]
pub struct ValueFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValueFunctionRaw {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

fn slopes_of(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (ys[1] - ys[0]) / (xs[1] - xs[0]))
        .collect()
}

impl ValueFunction {
    /// Validated constructor: breakpoints start at 0, strictly increase,
    /// and the slopes do not increase.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let vf = Self::unchecked(breakpoints, values)?;
        let worst = vf.concavity_violation();
        if worst > CONCAVITY_TOL * (1.0 + vf.max_abs_slope()) {
            return Err(Error::invalid(format!("value function is not concave (slope rises by {worst:e})")));
        }
        Ok(vf)
    }

    /// Shape checks only; used for functions produced by the engine.
    pub(crate) fn unchecked(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::invalid("value function needs at least two breakpoints"));
        }
        if breakpoints.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} breakpoints but {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().chain(values.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Numerical("value function contains non-finite entries".into()));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::invalid(format!("first breakpoint must be 0, got {}", breakpoints[0])));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("breakpoints must be strictly increasing"));
        }
        let slopes = slopes_of(&breakpoints, &values);
        Ok(Self { breakpoints, values, slopes })
    }

    /// `V(e) = slope * e` sampled on `points` uniform breakpoints.
    pub fn linear(capacity: f64, slope: f64, points: usize) -> Result<Self> {
        let x = uniform_grid(capacity, points)?;
        let y = x.iter().map(|e| slope * e).collect();
        Self::new(x, y)
    }

    pub fn zero(capacity: f64) -> Result<Self> {
        Self::linear(capacity, 0.0, 2)
    }

    pub fn capacity(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn segments(&self) -> usize {
        self.slopes.len()
    }

    /// Largest increase between consecutive slopes (0 when concave).
    pub fn concavity_violation(&self) -> f64 {
        self.slopes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn is_concave(&self, tol: f64) -> bool {
        self.concavity_violation() <= tol
    }

    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.slopes.iter().all(|s| *s >= -tol)
    }

    fn max_abs_slope(&self) -> f64 {
        self.slopes.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Index `k` of the segment `[x_k, x_{k+1}]` with `x_k <= e < x_{k+1}`
    /// (the last segment for `e = E`).
    pub fn segment_right_of(&self, e: f64) -> usize {
        let k = self.breakpoints.partition_point(|x| *x <= e);
        k.saturating_sub(1).min(self.segments() - 1)
    }

    /// Index `k` of the segment with `x_k < e <= x_{k+1}` (segment 0 for `e = 0`).
    pub fn segment_left_of(&self, e: f64) -> usize {
        let k = self.breakpoints.partition_point(|x| *x < e);
        k.saturating_sub(1).min(self.segments() - 1)
    }

    /// Linear interpolation, clamped to `[0, E]`.
    pub fn value_at(&self, e: f64) -> f64 {
        let e = e.clamp(0.0, self.capacity());
        let k = self.segment_right_of(e);
        self.values[k] + self.slopes[k] * (e - self.breakpoints[k])
    }

    /// Left derivative at `e`, first slope at `e = 0`.
    pub fn marginal_value(&self, e: f64) -> Result<f64> {
        let tol = 1e-9 * (1.0 + self.capacity());
        if !(e >= -tol && e <= self.capacity() + tol) {
            return Err(Error::invalid(format!("SoC {e} outside [0, {}]", self.capacity())));
        }
        Ok(self.slopes[self.segment_left_of(e.clamp(0.0, self.capacity()))])
    }

    /// Same function read off a uniform grid of `points` breakpoints.
    pub fn resample(&self, points: usize) -> Result<Self> {
        let x = uniform_grid(self.capacity(), points)?;
        let y = x.iter().map(|e| self.value_at(*e)).collect();
        Self::unchecked(x, y)
    }

    /// `V(e) + shift` for every breakpoint.
    pub fn shifted(&self, shift: f64) -> Self {
        let values = self.values.iter().map(|v| v + shift).collect();
        Self { breakpoints: self.breakpoints.clone(), values, slopes: self.slopes.clone() }
    }
}

impl TryFrom<ValueFunctionRaw> for ValueFunction {
    type Error = Error;
    fn try_from(r: ValueFunctionRaw) -> Result<Self> {
        Self::new(r.breakpoints, r.values)
    }
}

impl From<ValueFunction> for ValueFunctionRaw {
    fn from(v: ValueFunction) -> Self {
        Self { breakpoints: v.breakpoints, values: v.values }
    }
}

/// `points` evenly spaced values from 0 to `capacity`, endpoints exact.
pub fn uniform_grid(capacity: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::invalid("grid needs at least two points"));
    }
    if !(capacity > 0.0 && capacity.is_finite()) {
        return Err(Error::invalid(format!("capacity must be positive, got {capacity}")));
    }
    let n = (points - 1) as f64;
    let mut x: Vec<f64> = (0..points).map(|i| capacity * i as f64 / n).collect();
    x[points - 1] = capacity;
    Ok(x)
}
