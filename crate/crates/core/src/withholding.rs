use serde::{Deserialize, Serialize};

use crate::bids::{BidCurve, BidSide};
use crate::distribution::PriceDistribution;
use crate::engine::{backward_induction, EngineConfig};
use crate::error::{Error, Result};
use crate::model::{PriceBounds, StorageSpec};
use crate::value::ValueFunction;

/// Price-cap bound on a discharge offer with its per-period ingredients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundBreakdown {
    pub period: usize,
    pub horizon: usize,
    /// Cap weights `alpha_i` for periods `t+1..=T`.
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `prod_{k=t+1}^{i-1} beta_k` for each `i`.
    pub survival: Vec<f64>,
    /// `(cap - c) alpha_i survival_i`.
    pub terms: Vec<f64>,
    /// Discounted end-value contribution.
    pub end_term: f64,
    pub bound: f64,
}

fn check_bound_inputs(bounds: &PriceBounds, spec: &StorageSpec, end_marginal: f64) -> Result<()> {
    let c = spec.discharge_cost();
    if !(bounds.floor() <= c && c <= bounds.cap()) {
        return Err(Error::invalid(format!(
            "discharge cost {c} must lie within the price bounds [{}, {}]",
            bounds.floor(),
            bounds.cap()
        )));
    }
    if !end_marginal.is_finite() {
        return Err(Error::invalid("end marginal value must be finite"));
    }
    Ok(())
}

/// Upper bound on the period-`t` discharge offer when period `i` prices lie in
/// `bounds` with means `mu_path[i - 1]`.
pub fn withholding_bound(
    t: usize,
    mu_path: &[f64],
    bounds: PriceBounds,
    spec: &StorageSpec,
    end_marginal: f64,
) -> Result<BoundBreakdown> {
    check_bound_inputs(&bounds, spec, end_marginal)?;
    let horizon = mu_path.len();
    if t > horizon {
        return Err(Error::invalid(format!("period {t} beyond horizon {horizon}")));
    }
    let c = spec.discharge_cost();
    let mut alphas = Vec::with_capacity(horizon - t);
    for (i, mu) in mu_path.iter().enumerate().skip(t) {
        if !bounds.contains(*mu) {
            return Err(Error::invalid(format!(
                "mean {mu} of period {} outside [{}, {}]",
                i + 1,
                bounds.floor(),
                bounds.cap()
            )));
        }
        alphas.push(bounds.cap_weight(*mu));
    }
    let betas: Vec<f64> = alphas.iter().map(|a| 1.0 - a).collect();
    let mut survival = Vec::with_capacity(alphas.len());
    let mut run = 1.0;
    for b in &betas {
        survival.push(run);
        run *= b;
    }
    let terms: Vec<f64> = alphas
        .iter()
        .zip(&survival)
        .map(|(a, s)| (bounds.cap() - c) * a * s)
        .collect();
    let end_term = run * spec.step_hours() * end_marginal / spec.efficiency();
    let bound = c + terms.iter().sum::<f64>() + end_term;
    Ok(BoundBreakdown { period: t, horizon, alphas, betas, survival, terms, end_term, bound })
}

/// Bound when every remaining mean is only known to be at most `mu_cap`;
/// `horizon = None` gives the infinite-horizon limit. `discount` in (0, 1].
pub fn expectation_cap_bound(
    horizon: Option<usize>,
    mu_cap: f64,
    bounds: PriceBounds,
    spec: &StorageSpec,
    discount: f64,
    end_marginal: f64,
) -> Result<f64> {
    check_bound_inputs(&bounds, spec, end_marginal)?;
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(Error::invalid(format!("discount must lie in (0, 1], got {discount}")));
    }
    if !bounds.contains(mu_cap) {
        return Err(Error::invalid(format!("mean cap {mu_cap} outside the price bounds")));
    }
    let c = spec.discharge_cost();
    let alpha = bounds.cap_weight(mu_cap);
    let beta = 1.0 - alpha;
    let rb = discount * beta;
    match horizon {
        None => {
            let lead = if rb < 1.0 { alpha / (1.0 - rb) } else { 0.0 };
            Ok(c + lead * (bounds.cap() - c))
        }
        Some(0) => Err(Error::invalid("horizon must be at least one period")),
        Some(t) => {
            let n = t as i32;
            let lead = if rb < 1.0 {
                alpha / (1.0 - rb) * (1.0 - beta.powi(n - 1))
            } else {
                0.0
            };
            let tail = beta.powi(n) * spec.step_hours() * end_marginal / spec.efficiency();
            Ok(c + lead * (bounds.cap() - c) + tail)
        }
    }
}

/// Smallest Gaussian deviation above which the empty-storage marginal value
/// is guaranteed to grow with the deviation.
pub fn sigma_floor(v_next_full_charge: f64, discharge_cost: f64, mu: f64) -> f64 {
    let k = (v_next_full_charge - 2.0 * discharge_cost) * (mu - discharge_cost);
    if k >= 0.0 {
        0.0
    } else {
        (-k).sqrt()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("spike probability must lie in (0, 1), got {alpha}")))
    }
}

/// Mean-preserving two-point forecast whose high price lifts the
/// empty-storage marginal value to at least `theta`, given a next-period value
/// function with constant marginal value `v_next_full_charge`. The high price
/// is rounded up to the cent.
pub fn spike_distribution(
    theta: f64,
    mu: f64,
    alpha: f64,
    spec: &StorageSpec,
    v_next_full_charge: f64,
) -> Result<PriceDistribution> {
    check_alpha(alpha)?;
    if !(theta.is_finite() && mu.is_finite() && v_next_full_charge.is_finite()) {
        return Err(Error::invalid("spike inputs must be finite"));
    }
    let tau = spec.step_hours();
    let eta = spec.efficiency();
    let c = spec.discharge_cost();
    let beta = 1.0 - alpha;
    let needed = ((theta - beta * v_next_full_charge) * tau / (alpha * eta) + c).max(mu);
    let high = (needed * 100.0).ceil() / 100.0;
    let low = (mu - alpha * high) / beta;
    if low > tau * eta * v_next_full_charge {
        return Err(Error::Infeasible(format!(
            "low price {low} would exceed the charging threshold {}; no spike of this probability reaches {theta}",
            tau * eta * v_next_full_charge
        )));
    }
    PriceDistribution::two_point(high, low, alpha)
}

/// Forecast path that keeps the period-`kappa` discharge offer at SoC
/// `soc` at or above `theta`: a chain of spikes in the following periods,
/// point masses at `mu_path` elsewhere. `mu_path[t - 1]` is the mean for
/// period `t`.
#[allow(clippy::too_many_arguments)]
pub fn spike_schedule(
    theta: f64,
    kappa: usize,
    soc: f64,
    mu_path: &[f64],
    alpha: f64,
    spec: &StorageSpec,
    end_value: &ValueFunction,
    config: &EngineConfig,
) -> Result<Vec<PriceDistribution>> {
    check_alpha(alpha)?;
    let horizon = mu_path.len();
    if kappa == 0 || kappa > horizon {
        return Err(Error::invalid(format!("spike period {kappa} outside 1..={horizon}")));
    }
    if !(soc >= 0.0 && soc <= spec.energy_mwh()) {
        return Err(Error::invalid(format!("SoC {soc} outside [0, {}]", spec.energy_mwh())));
    }
    if !end_value.is_nondecreasing(0.0) {
        return Err(Error::invalid("end value must be non-decreasing in SoC"));
    }
    let mut forecasts = mu_path
        .iter()
        .map(|m| PriceDistribution::point_mass(*m))
        .collect::<Result<Vec<_>>>()?;
    let c = spec.discharge_cost();
    if theta <= c || soc == 0.0 {
        return Ok(forecasts);
    }
    let tau = spec.step_hours();
    let eta = spec.efficiency();
    let per_period = spec.discharge_decrement();
    let spikes = ((soc / per_period) - 1e-12).ceil().max(1.0) as usize;
    if kappa + spikes > horizon {
        return Err(Error::Infeasible(format!(
            "SoC {soc} needs {spikes} spike periods after period {kappa}, only {} remain",
            horizon - kappa
        )));
    }
    let beta = 1.0 - alpha;
    let last_target = (theta - c) * eta / tau / alpha.powi(spikes as i32 - 1);
    let spike = |period: usize, high: f64| -> Result<PriceDistribution> {
        let high = ((high + 1.0) * 100.0).ceil() / 100.0;
        let mu = mu_path[period - 1];
        PriceDistribution::two_point(high.max(mu), (mu - alpha * high.max(mu)) / beta, alpha)
    };
    let last = kappa + spikes;
    forecasts[last - 1] = spike(last, last_target * tau / (alpha * eta) + c)?;
    for period in (kappa + 1..last).rev() {
        let series = backward_induction(end_value, &forecasts[period..], spec, config)?;
        let v0 = series.at(0)?.marginal_value(0.0)?;
        forecasts[period - 1] = spike(period, c + tau * v0 / eta)?;
    }
    Ok(forecasts)
}

/// One audited offer segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentAudit {
    pub segment: usize,
    pub quantity_mw: f64,
    pub submitted: f64,
    pub baseline: Option<f64>,
    pub above_baseline: bool,
    pub above_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WithholdingReport {
    pub period: usize,
    pub side: BidSide,
    pub bound: f64,
    pub segments: Vec<SegmentAudit>,
    /// Largest submitted-minus-baseline gap (sign-adjusted for bids).
    pub max_markup: f64,
    pub withheld_mw: f64,
    pub above_baseline: bool,
    pub above_bound: bool,
}

/// Compares a submitted curve against the non-withholding baseline curve and
/// the price-cap bound. Discharge offers above the baseline and charge bids
/// below it count as withholding; only discharge offers are held to the bound.
pub fn audit_bids(curve: &BidCurve, baseline: &BidCurve, bound: &BoundBreakdown, tol: f64) -> Result<WithholdingReport> {
    if curve.side() != baseline.side() {
        return Err(Error::invalid("submitted and baseline curves are on different sides"));
    }
    let side = curve.side();
    let mut acc = 0.0;
    let mut segments = Vec::with_capacity(curve.segments().len());
    let mut max_markup = f64::NEG_INFINITY;
    let mut withheld = 0.0;
    for (k, s) in curve.segments().iter().enumerate() {
        let mid = acc + 0.5 * s.quantity_mw;
        acc += s.quantity_mw;
        let base = baseline.price_at_quantity(mid);
        let markup = base.map(|b| match side {
            BidSide::Discharge => s.price - b,
            BidSide::Charge => b - s.price,
        });
        if let Some(m) = markup {
            max_markup = max_markup.max(m);
        }
        let above_baseline = markup.is_some_and(|m| m > tol);
        if above_baseline {
            withheld += s.quantity_mw;
        }
        let above_bound = side == BidSide::Discharge && s.price > bound.bound + tol;
        segments.push(SegmentAudit {
            segment: k + 1,
            quantity_mw: s.quantity_mw,
            submitted: s.price,
            baseline: base,
            above_baseline,
            above_bound,
        });
    }
    Ok(WithholdingReport {
        period: bound.period,
        side,
        bound: bound.bound,
        above_baseline: segments.iter().any(|s| s.above_baseline),
        above_bound: segments.iter().any(|s| s.above_bound),
        segments,
        max_markup: if max_markup.is_finite() { max_markup } else { 0.0 },
        withheld_mw: withheld,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> StorageSpec {
        StorageSpec::hourly(10.0, 40.0, 0.9, 25.0).unwrap()
    }

    fn bounds() -> PriceBounds {
        PriceBounds::new(5.0, 150.0).unwrap()
    }

    #[test]
    fn single_step_bound() {
        let b = withholding_bound(0, &[26.2], bounds(), &spec(), 0.0).unwrap();
        assert!((b.bound - 43.27586).abs() < 1e-4);
    }

    #[test]
    fn last_period_bound_is_cost_plus_end_value() {
        let b = withholding_bound(3, &[26.2, 30.0, 40.0], bounds(), &spec(), 9.0).unwrap();
        assert!((b.bound - (25.0 + 10.0)).abs() < 1e-12);
    }

    #[test]
    fn bound_rejects_mean_outside() {
        assert!(withholding_bound(0, &[200.0], bounds(), &spec(), 0.0).is_err());
    }

    #[test]
    fn floor_cases() {
        assert_eq!(sigma_floor(60.0, 25.0, 30.0), 0.0);
        assert!((sigma_floor(20.0, 25.0, 30.0) - (30.0f64 * 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn infinite_horizon_limit_is_cap_without_discount() {
        let b = expectation_cap_bound(None, 26.2, bounds(), &spec(), 1.0, 0.0).unwrap();
        assert!((b - 150.0).abs() < 1e-12);
        let d = expectation_cap_bound(None, 5.0, bounds(), &spec(), 1.0, 0.0).unwrap();
        assert_eq!(d, 25.0);
    }

    #[test]
    fn spike_meets_target() {
        let d = spike_distribution(200.0, 26.2, 0.5, &spec(), 20.0).unwrap();
        let a = d.atoms().unwrap();
        assert!((d.mean() - 26.2).abs() < 1e-9);
        assert!(a[0].0 <= 18.0);
        assert_eq!(a[1].0, 447.23);
        let achieved = 0.5 * (a[1].0 - 25.0) * 0.9 + 0.5 * 20.0;
        assert!(achieved >= 200.0);
    }

    #[test]
    fn spike_infeasible_when_low_price_too_high() {
        let r = spike_distribution(30.0, 100.0, 0.5, &spec(), 20.0);
        assert!(r.is_err());
    }
}
