use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::model::PriceBounds;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Wire format for a price forecast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    PointMass {
        price: f64,
    },
    Gaussian {
        mean: f64,
        std_dev: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<PriceBounds>,
    },
    BoundedUniform {
        mean: f64,
        std_dev: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<PriceBounds>,
    },
    TwoPoint {
        high: f64,
        low: f64,
        high_prob: f64,
    },
    Empirical {
        samples: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    PointMass,
    Gaussian,
    BoundedUniform,
    TwoPoint,
    Empirical,
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    /// Sorted support points with probabilities.
    Atoms(Vec<(f64, f64)>),
    /// Normal(mu, sigma) restricted to [lo, hi]; `mass` is the untruncated
    /// probability of that interval.
    Normal { mu: f64, sigma: f64, lo: f64, hi: f64, mass: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// A validated real-time price forecast for one period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub struct PriceDistribution {
    spec: DistributionSpec,
    shape: Shape,
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

fn norm_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        INV_SQRT_2PI * (-0.5 * z * z).exp()
    }
}

/// Phi(b) - Phi(a) without cancellation in either tail.
fn norm_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        norm_sf(a) - norm_sf(b)
    } else if b <= 0.0 {
        norm_cdf(b) - norm_cdf(a)
    } else {
        1.0 - norm_cdf(a) - norm_sf(b)
    }
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {x}")))
    }
}

impl PriceDistribution {
    pub fn point_mass(price: f64) -> Result<Self> {
        Self::from_spec(DistributionSpec::PointMass { price })
    }

    pub fn gaussian(mean: f64, std_dev: f64, bounds: Option<PriceBounds>) -> Result<Self> {
        Self::from_spec(DistributionSpec::Gaussian { mean, std_dev, bounds })
    }

    pub fn bounded_uniform(mean: f64, std_dev: f64, bounds: Option<PriceBounds>) -> Result<Self> {
        Self::from_spec(DistributionSpec::BoundedUniform { mean, std_dev, bounds })
    }

    pub fn two_point(high: f64, low: f64, high_prob: f64) -> Result<Self> {
        Self::from_spec(DistributionSpec::TwoPoint { high, low, high_prob })
    }

    pub fn empirical(samples: Vec<f64>) -> Result<Self> {
        Self::from_spec(DistributionSpec::Empirical { samples })
    }

    pub fn from_spec(spec: DistributionSpec) -> Result<Self> {
        let shape = match &spec {
            DistributionSpec::PointMass { price } => {
                check_finite("price", *price)?;
                Shape::Atoms(vec![(*price, 1.0)])
            }
            DistributionSpec::Gaussian { mean, std_dev, bounds } => {
                check_finite("mean", *mean)?;
                check_finite("std_dev", *std_dev)?;
                if *std_dev < 0.0 {
                    return Err(Error::invalid(format!("std_dev must be non-negative, got {std_dev}")));
                }
                if *std_dev == 0.0 {
                    return Self::degenerate(*mean, *bounds);
                }
                let (lo, hi) = bounds.map_or((f64::NEG_INFINITY, f64::INFINITY), |b| (b.floor(), b.cap()));
                let mass = norm_mass((lo - mean) / std_dev, (hi - mean) / std_dev);
                if !(mass > 1e-300) {
                    return Err(Error::invalid(format!(
                        "Gaussian({mean}, {std_dev}) has no mass inside [{lo}, {hi}]"
                    )));
                }
                if lo == hi {
                    return Self::degenerate(lo, *bounds);
                }
                Shape::Normal { mu: *mean, sigma: *std_dev, lo, hi, mass }
            }
            DistributionSpec::BoundedUniform { mean, std_dev, bounds } => {
                check_finite("mean", *mean)?;
                check_finite("std_dev", *std_dev)?;
                if *std_dev < 0.0 {
                    return Err(Error::invalid(format!("std_dev must be non-negative, got {std_dev}")));
                }
                let half = SQRT_3 * std_dev;
                let (mut lo, mut hi) = (mean - half, mean + half);
                if let Some(b) = bounds {
                    lo = lo.max(b.floor());
                    hi = hi.min(b.cap());
                }
                if lo > hi {
                    return Err(Error::invalid(format!(
                        "uniform support around {mean} does not meet the price bounds"
                    )));
                }
                if lo == hi {
                    Shape::Atoms(vec![(lo, 1.0)])
                } else {
                    Shape::Uniform { lo, hi }
                }
            }
            DistributionSpec::TwoPoint { high, low, high_prob } => {
                check_finite("high", *high)?;
                check_finite("low", *low)?;
                if !(0.0..=1.0).contains(high_prob) {
                    return Err(Error::invalid(format!("high_prob must lie in [0, 1], got {high_prob}")));
                }
                if high < low {
                    return Err(Error::invalid(format!("two-point high {high} is below low {low}")));
                }
                let mut atoms = Vec::with_capacity(2);
                if *high_prob < 1.0 {
                    atoms.push((*low, 1.0 - high_prob));
                }
                if *high_prob > 0.0 {
                    atoms.push((*high, *high_prob));
                }
                Shape::Atoms(atoms)
            }
            DistributionSpec::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(Error::invalid("empirical distribution needs at least one sample"));
                }
                if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!("empirical sample {x} is not finite")));
                }
                let mut sorted = samples.clone();
                sorted.sort_by(f64::total_cmp);
                let w = 1.0 / sorted.len() as f64;
                let mut atoms: Vec<(f64, f64)> = Vec::new();
                for x in sorted {
                    match atoms.last_mut() {
                        Some(last) if last.0 == x => last.1 += w,
                        _ => atoms.push((x, w)),
                    }
                }
                Shape::Atoms(atoms)
            }
        };
        Ok(Self { spec, shape })
    }

    fn degenerate(price: f64, bounds: Option<PriceBounds>) -> Result<Self> {
        if let Some(b) = bounds {
            if !b.contains(price) {
                return Err(Error::invalid(format!(
                    "point mass at {price} lies outside [{}, {}]",
                    b.floor(),
                    b.cap()
                )));
            }
        }
        Self::point_mass(price)
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn kind(&self) -> DistributionKind {
        match self.spec {
            DistributionSpec::PointMass { .. } => DistributionKind::PointMass,
            DistributionSpec::Gaussian { .. } => DistributionKind::Gaussian,
            DistributionSpec::BoundedUniform { .. } => DistributionKind::BoundedUniform,
            DistributionSpec::TwoPoint { .. } => DistributionKind::TwoPoint,
            DistributionSpec::Empirical { .. } => DistributionKind::Empirical,
        }
    }

    /// Price bounds attached to the forecast, if any.
    pub fn bounds(&self) -> Option<PriceBounds> {
        match self.spec {
            DistributionSpec::Gaussian { bounds, .. } | DistributionSpec::BoundedUniform { bounds, .. } => bounds,
            _ => None,
        }
    }

    /// Mean as configured, before any truncation.
    pub fn nominal_mean(&self) -> f64 {
        match &self.spec {
            DistributionSpec::Gaussian { mean, .. } | DistributionSpec::BoundedUniform { mean, .. } => *mean,
            _ => self.mean(),
        }
    }

    /// Standard deviation as configured, before any truncation.
    pub fn nominal_std_dev(&self) -> f64 {
        match &self.spec {
            DistributionSpec::Gaussian { std_dev, .. } | DistributionSpec::BoundedUniform { std_dev, .. } => *std_dev,
            _ => self.std_dev(),
        }
    }

    /// Exact mean of the distribution actually used, after truncation.
    pub fn mean(&self) -> f64 {
        match &self.shape {
            Shape::Atoms(a) => a.iter().map(|(x, p)| x * p).sum(),
            Shape::Normal { mu, sigma, lo, hi, mass } => {
                let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
                mu + sigma * (norm_pdf(a) - norm_pdf(b)) / mass
            }
            Shape::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match &self.shape {
            Shape::Atoms(a) => {
                let m = self.mean();
                a.iter().map(|(x, p)| p * (x - m) * (x - m)).sum()
            }
            Shape::Normal { mu, sigma, lo, hi, mass } => {
                let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
                let ta = if a.is_finite() { a * norm_pdf(a) } else { 0.0 };
                let tb = if b.is_finite() { b * norm_pdf(b) } else { 0.0 };
                let d = (norm_pdf(a) - norm_pdf(b)) / mass;
                (sigma * sigma * (1.0 + (ta - tb) / mass - d * d)).max(0.0)
            }
            Shape::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Smallest and largest attainable price (possibly infinite).
    pub fn support(&self) -> (f64, f64) {
        match &self.shape {
            Shape::Atoms(a) => (a[0].0, a[a.len() - 1].0),
            Shape::Normal { lo, hi, .. } => (*lo, *hi),
            Shape::Uniform { lo, hi } => (*lo, *hi),
        }
    }

    /// Support points and probabilities when the distribution is discrete.
    pub fn atoms(&self) -> Option<&[(f64, f64)]> {
        match &self.shape {
            Shape::Atoms(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.shape, Shape::Atoms(_))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.lower_moments(x).0
    }

    /// `(P[X <= x], E[X; X <= x])` in closed form.
    pub fn lower_moments(&self, x: f64) -> (f64, f64) {
        match &self.shape {
            Shape::Atoms(a) => a
                .iter()
                .take_while(|(v, _)| *v <= x)
                .fold((0.0, 0.0), |(f, m), (v, p)| (f + p, m + v * p)),
            Shape::Normal { mu, sigma, lo, hi, mass } => {
                if x <= *lo {
                    return (0.0, 0.0);
                }
                if x >= *hi {
                    return (1.0, self.mean());
                }
                let a = (lo - mu) / sigma;
                let z = (x - mu) / sigma;
                let f = norm_mass(a, z) / mass;
                let m = mu * f - sigma * (norm_pdf(z) - norm_pdf(a)) / mass;
                (f, m)
            }
            Shape::Uniform { lo, hi } => {
                if x <= *lo {
                    (0.0, 0.0)
                } else if x >= *hi {
                    (1.0, 0.5 * (lo + hi))
                } else {
                    let w = hi - lo;
                    ((x - lo) / w, (x * x - lo * lo) / (2.0 * w))
                }
            }
        }
    }

    /// Density of a continuous distribution; zero for discrete ones.
    pub fn density(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Atoms(_) => 0.0,
            Shape::Normal { mu, sigma, lo, hi, mass } => {
                if x < *lo || x > *hi {
                    0.0
                } else {
                    norm_pdf((x - mu) / sigma) / (sigma * mass)
                }
            }
            Shape::Uniform { lo, hi } => {
                if x < *lo || x > *hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
        }
    }

    /// Finite interval carrying all but a negligible share of the mass.
    pub fn effective_support(&self) -> (f64, f64) {
        match &self.shape {
            Shape::Normal { mu, sigma, lo, hi, .. } => (lo.max(mu - 12.0 * sigma), hi.min(mu + 12.0 * sigma)),
            _ => self.support(),
        }
    }

    /// Restrict to `bounds` and renormalize.
    pub fn truncate(&self, bounds: PriceBounds) -> Result<Self> {
        let merge = |own: Option<PriceBounds>| -> Result<PriceBounds> {
            match own {
                None => Ok(bounds),
                Some(b) => PriceBounds::new(b.floor().max(bounds.floor()), b.cap().min(bounds.cap())),
            }
        };
        match &self.spec {
            DistributionSpec::Gaussian { mean, std_dev, bounds: own } => {
                Self::gaussian(*mean, *std_dev, Some(merge(*own)?))
            }
            DistributionSpec::BoundedUniform { mean, std_dev, bounds: own } => {
                Self::bounded_uniform(*mean, *std_dev, Some(merge(*own)?))
            }
            DistributionSpec::PointMass { price } => Self::degenerate(*price, Some(bounds)),
            DistributionSpec::TwoPoint { high, low, high_prob } => match (bounds.contains(*high), bounds.contains(*low)) {
                (true, true) => Ok(self.clone()),
                (true, false) if *high_prob > 0.0 => Self::point_mass(*high),
                (false, true) if *high_prob < 1.0 => Self::point_mass(*low),
                _ => Err(Error::invalid("two-point distribution has no mass inside the bounds")),
            },
            DistributionSpec::Empirical { samples } => {
                let kept: Vec<f64> = samples.iter().copied().filter(|x| bounds.contains(*x)).collect();
                if kept.is_empty() {
                    return Err(Error::invalid("no empirical samples inside the bounds"));
                }
                Self::empirical(kept)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.shape {
            Shape::Atoms(a) => {
                if a.len() == 1 {
                    return a[0].0;
                }
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (x, p) in a {
                    acc += p;
                    if u < acc {
                        return *x;
                    }
                }
                a[a.len() - 1].0
            }
            Shape::Normal { mu, sigma, lo, hi, mass } => {
                if *mass > 0.25 {
                    loop {
                        let z: f64 = rng.sample(StandardNormal);
                        let x = mu + sigma * z;
                        if x >= *lo && x <= *hi {
                            return x;
                        }
                    }
                }
                let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
                let u: f64 = rng.random();
                let z = if a > 0.0 {
                    SQRT_2 * erfc_inv(2.0 * (norm_sf(a) - u * mass))
                } else {
                    -SQRT_2 * erfc_inv(2.0 * (norm_cdf(a) + u * mass))
                };
                (mu + sigma * z.clamp(a, b)).clamp(*lo, *hi)
            }
            Shape::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                lo + (hi - lo) * u
            }
        }
    }

    /// `n` draws from a ChaCha stream seeded with `seed`.
    pub fn sample_n(&self, seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }
}

impl TryFrom<DistributionSpec> for PriceDistribution {
    type Error = Error;
    fn try_from(spec: DistributionSpec) -> Result<Self> {
        Self::from_spec(spec)
    }
}

impl From<PriceDistribution> for DistributionSpec {
    fn from(d: PriceDistribution) -> Self {
        d.spec
    }
}

/// Exact mean of a forecast; errors only for an unusable forecast.
pub fn mean_of(dist: &PriceDistribution) -> Result<f64> {
    let m = dist.mean();
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::Numerical(format!("mean of {:?} is not finite", dist.kind())))
    }
}
