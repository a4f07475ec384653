use crate::error::{Error, Result};

use super::commitment::CommitmentSchedule;
use super::generator::GeneratorSpec;

/// One committed unit's dispatchable window and cost curve.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitOffer {
    pub generator: usize,
    pub lower: f64,
    pub upper: f64,
    pub cost_quadratic: f64,
    pub cost_linear: f64,
}

impl UnitOffer {
    pub fn from_spec(generator: usize, spec: &GeneratorSpec, lower: f64, upper: f64) -> Self {
        Self { generator, lower, upper, cost_quadratic: spec.cost_quadratic, cost_linear: spec.cost_linear }
    }

    pub fn marginal_cost(&self, g: f64) -> f64 {
        2.0 * self.cost_quadratic * g + self.cost_linear
    }

    pub fn cost(&self, g: f64) -> f64 {
        self.cost_quadratic * g * g + self.cost_linear * g
    }

    /// Output range that is cost-optimal at `price`; a range only when the
    /// marginal cost is flat and equal to `price`.
    pub fn output_range(&self, price: f64) -> (f64, f64) {
        if self.cost_quadratic > 0.0 {
            let g = ((price - self.cost_linear) / (2.0 * self.cost_quadratic)).clamp(self.lower, self.upper);
            (g, g)
        } else if price < self.cost_linear {
            (self.lower, self.lower)
        } else if price > self.cost_linear {
            (self.upper, self.upper)
        } else {
            (self.lower, self.upper)
        }
    }
}

/// Horizontal sum of committed units' marginal-cost curves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SupplyCurve {
    units: Vec<UnitOffer>,
}

impl SupplyCurve {
    pub fn new(units: Vec<UnitOffer>) -> Result<Self> {
        for u in &units {
            if !(u.lower.is_finite() && u.upper.is_finite() && u.lower <= u.upper) {
                return Err(Error::invalid(format!(
                    "unit {} has an empty output window [{}, {}]",
                    u.generator, u.lower, u.upper
                )));
            }
            if u.cost_quadratic < 0.0 {
                return Err(Error::invalid(format!("unit {} has a concave cost curve", u.generator)));
            }
        }
        Ok(Self { units })
    }

    /// Every generator available on `[0, max]` (or `[min, max]`), no ramp limits.
    pub fn from_fleet(fleet: &[GeneratorSpec], relax_minimum: bool) -> Result<Self> {
        let units = fleet
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let lo = if relax_minimum { 0.0 } else { g.min_mw };
                UnitOffer::from_spec(i, g, lo, g.max_mw)
            })
            .collect();
        Self::new(units)
    }

    pub fn units(&self) -> &[UnitOffer] {
        &self.units
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn min_output(&self) -> f64 {
        self.units.iter().map(|u| u.lower).sum()
    }

    pub fn max_output(&self) -> f64 {
        self.units.iter().map(|u| u.upper).sum()
    }

    pub fn quantity_range(&self, price: f64) -> (f64, f64) {
        self.units.iter().fold((0.0, 0.0), |(lo, hi), u| {
            let (a, b) = u.output_range(price);
            (lo + a, hi + b)
        })
    }

    /// Prices at which some unit's output jumps (flat marginal cost).
    pub fn step_prices(&self) -> impl Iterator<Item = f64> + '_ {
        self.units.iter().filter(|u| u.cost_quadratic == 0.0).map(|u| u.cost_linear)
    }

    /// Aggregate marginal cost at total output `q`; `None` outside the
    /// feasible range.
    pub fn marginal_cost_at(&self, q: f64) -> Option<f64> {
        if self.units.is_empty() || q < self.min_output() - 1e-9 || q > self.max_output() + 1e-9 {
            return None;
        }
        let mut lo = self.units.iter().map(|u| u.marginal_cost(u.lower)).fold(f64::INFINITY, f64::min);
        let mut hi = self.units.iter().map(|u| u.marginal_cost(u.upper)).fold(f64::NEG_INFINITY, f64::max);
        if self.quantity_range(lo).1 >= q {
            return Some(lo);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.quantity_range(mid).1 < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi.abs().max(1.0) {
                break;
            }
        }
        Some(hi)
    }
}

/// Supply curve for period `t` (0-based) under a commitment, with ramp
/// windows around `previous` dispatch when given.
pub fn aggregate_supply(
    schedule: &CommitmentSchedule,
    fleet: &[GeneratorSpec],
    t: usize,
    previous: Option<&[f64]>,
) -> Result<SupplyCurve> {
    if schedule.status.len() != fleet.len() {
        return Err(Error::invalid(format!(
            "schedule covers {} generators, fleet has {}",
            schedule.status.len(),
            fleet.len()
        )));
    }
    if t >= schedule.horizon() {
        return Err(Error::invalid(format!("period index {t} beyond horizon {}", schedule.horizon())));
    }
    let mut units = Vec::new();
    for (i, g) in fleet.iter().enumerate() {
        if !schedule.status[i][t] {
            continue;
        }
        let (lo, hi) = match previous {
            Some(prev) if t > 0 && schedule.status[i][t - 1] => {
                let p = prev[i];
                ((p - g.ramp_mw).max(g.min_mw), (p + g.ramp_mw).min(g.max_mw))
            }
            Some(_) if schedule.startup[i][t] => (g.min_mw, g.max_mw.min(g.ramp_mw.max(g.min_mw))),
            _ => (g.min_mw, g.max_mw),
        };
        units.push(UnitOffer::from_spec(i, g, lo, hi.max(lo)));
    }
    if units.is_empty() && schedule.net_load[t] > 0.0 {
        return Err(Error::Infeasible(format!(
            "no generator committed in period {} with net load {} MW",
            t + 1,
            schedule.net_load[t]
        )));
    }
    SupplyCurve::new(units)
}
