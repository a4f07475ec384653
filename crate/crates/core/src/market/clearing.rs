use serde::{Deserialize, Serialize};

use crate::bids::{BidCurve, BidSide};
use crate::error::{Error, Result};
use crate::model::PriceBounds;

use super::supply::SupplyCurve;

/// Balance slack accepted when comparing supply ranges with demand (MW).
const MW_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClearingStatus {
    Normal,
    /// Demand exceeds all supply at the price cap.
    Scarcity { shortfall_mw: f64 },
    /// Minimum output exceeds demand at the price floor.
    Surplus { excess_mw: f64 },
}

/// Outcome of one real-time clearing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub price: f64,
    /// Output per supply-curve unit, in curve order.
    pub generator_dispatch: Vec<f64>,
    /// Cleared MW per discharge offer curve.
    pub discharge: Vec<f64>,
    /// Cleared MW per charge bid curve.
    pub charge: Vec<f64>,
    pub status: ClearingStatus,
    /// `net_demand - (supply + discharge - charge)`; the shortfall or
    /// (negative) excess when the status is not normal.
    pub balance_residual_mw: f64,
}

impl ClearingResult {
    pub fn total_generation(&self) -> f64 {
        self.generator_dispatch.iter().sum()
    }
}

struct Market<'a> {
    supply: &'a SupplyCurve,
    offers: &'a [BidCurve],
    bids: &'a [BidCurve],
}

impl Market<'_> {
    /// Net injection range at `price`.
    fn range(&self, price: f64) -> (f64, f64) {
        let (mut lo, mut hi) = self.supply.quantity_range(price);
        for o in self.offers {
            let (a, b) = o.quantity_range(price);
            lo += a;
            hi += b;
        }
        for d in self.bids {
            let (a, b) = d.quantity_range(price);
            lo -= b;
            hi -= a;
        }
        (lo, hi)
    }

    fn step_prices(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.supply.step_prices().collect();
        for c in self.offers.iter().chain(self.bids) {
            out.extend(c.prices());
        }
        out
    }

    /// Pro-rata allocation of `target` MW of net injection at `price`.
    fn allocate(&self, price: f64, target: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let gens: Vec<(f64, f64)> = self.supply.units().iter().map(|u| u.output_range(price)).collect();
        let offs: Vec<(f64, f64)> = self.offers.iter().map(|o| o.quantity_range(price)).collect();
        let bids: Vec<(f64, f64)> = self.bids.iter().map(|d| d.quantity_range(price)).collect();
        // bids enter as negative injections: their minimum injection is -hi
        let base: f64 = gens.iter().map(|r| r.0).sum::<f64>() + offs.iter().map(|r| r.0).sum::<f64>()
            - bids.iter().map(|r| r.1).sum::<f64>();
        let slack: f64 = gens.iter().chain(&offs).chain(&bids).map(|r| r.1 - r.0).sum();
        let frac = if slack > 0.0 { ((target - base) / slack).clamp(0.0, 1.0) } else { 0.0 };
        let g = gens.iter().map(|r| r.0 + frac * (r.1 - r.0)).collect();
        let p = offs.iter().map(|r| r.0 + frac * (r.1 - r.0)).collect();
        let b = bids.iter().map(|r| r.1 - frac * (r.1 - r.0)).collect();
        (g, p, b)
    }
}

/// Single-period clearing: minimizes generation cost minus storage surplus
/// subject to balance, by bisection on the monotone net-supply range. Among
/// equally valid duals the highest price is reported.
pub fn clear_rtm(
    supply: &SupplyCurve,
    offers: &[BidCurve],
    bids: &[BidCurve],
    net_demand: f64,
    limits: PriceBounds,
) -> Result<ClearingResult> {
    if !net_demand.is_finite() {
        return Err(Error::invalid(format!("net demand {net_demand} is not finite")));
    }
    for c in offers {
        if c.side() != BidSide::Discharge || !c.is_monotone(1e-9) {
            return Err(Error::invalid("discharge offers must be non-decreasing discharge curves"));
        }
    }
    for c in bids {
        if c.side() != BidSide::Charge || !c.is_monotone(1e-9) {
            return Err(Error::invalid("charge bids must be non-increasing charge curves"));
        }
    }
    let m = Market { supply, offers, bids };
    let (floor, cap) = (limits.floor(), limits.cap());

    let (price, status) = if m.range(cap).1 < net_demand - MW_TOL {
        (cap, ClearingStatus::Scarcity { shortfall_mw: net_demand - m.range(cap).1 })
    } else if m.range(floor).0 > net_demand + MW_TOL {
        (floor, ClearingStatus::Surplus { excess_mw: m.range(floor).0 - net_demand })
    } else if m.range(cap).0 <= net_demand + MW_TOL {
        (cap, ClearingStatus::Normal)
    } else {
        let (mut lo, mut hi) = (floor, cap);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if m.range(mid).0 <= net_demand + MW_TOL {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi.abs().max(1.0) {
                break;
            }
        }
        let step = m
            .step_prices()
            .into_iter()
            .filter(|p| *p >= lo && *p <= hi && m.range(*p).0 <= net_demand + MW_TOL)
            .fold(f64::NEG_INFINITY, f64::max);
        (if step.is_finite() { step } else { lo }, ClearingStatus::Normal)
    };

    let (mut g, p, b) = m.allocate(price, net_demand);
    let injected = |g: &[f64]| g.iter().sum::<f64>() + p.iter().sum::<f64>() - b.iter().sum::<f64>();
    if status == ClearingStatus::Normal {
        // absorb rounding left by the bisection on the units with room
        let residual = net_demand - injected(&g);
        let units = supply.units();
        let room: Vec<f64> = g
            .iter()
            .zip(units)
            .map(|(x, u)| if residual > 0.0 { u.upper - x } else { x - u.lower })
            .collect();
        let total_room: f64 = room.iter().sum();
        if total_room > 0.0 {
            let share = (residual.abs() / total_room).min(1.0) * residual.signum();
            for (x, r) in g.iter_mut().zip(&room) {
                *x += share * r;
            }
        }
    }
    let balance_residual_mw = net_demand - injected(&g);
    Ok(ClearingResult { price, generator_dispatch: g, discharge: p, charge: b, status, balance_residual_mw })
}
