use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distribution::PriceDistribution;
use crate::engine::{backward_induction, EngineConfig, ValueSeries};
use crate::error::{Error, Result};
use crate::model::StorageSpec;
use crate::value::ValueFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidSide {
    Discharge,
    Charge,
}

impl BidSide {
    pub fn as_str(&self) -> &'static str {
        match self {
            BidSide::Discharge => "discharge",
            BidSide::Charge => "charge",
        }
    }
}

impl std::str::FromStr for BidSide {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discharge" => Ok(BidSide::Discharge),
            "charge" => Ok(BidSide::Charge),
            other => Err(Error::Config(format!("unknown bid side '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidSegment {
    pub quantity_mw: f64,
    pub price: f64,
}

/// Stepwise offer (discharge) or bid (charge) in merit order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BidCurveRaw", into = "BidCurveRaw")]
pub struct BidCurve {
    side: BidSide,
    segments: Vec<BidSegment>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BidCurveRaw {
    side: BidSide,
    segments: Vec<BidSegment>,
}

impl BidCurve {
    pub fn new(side: BidSide, segments: Vec<BidSegment>) -> Result<Self> {
        for s in &segments {
            if !(s.quantity_mw.is_finite() && s.quantity_mw >= 0.0) {
                return Err(Error::invalid(format!("segment quantity {} must be non-negative", s.quantity_mw)));
            }
            if !s.price.is_finite() {
                return Err(Error::invalid("segment price must be finite"));
            }
        }
        Ok(Self { side, segments })
    }

    pub fn empty(side: BidSide) -> Self {
        Self { side, segments: Vec::new() }
    }

    pub fn side(&self) -> BidSide {
        self.side
    }

    pub fn segments(&self) -> &[BidSegment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.total_quantity() == 0.0
    }

    pub fn total_quantity(&self) -> f64 {
        self.segments.iter().map(|s| s.quantity_mw).sum()
    }

    /// Offers rise and bids fall along the curve, up to `tol`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.segments.windows(2).all(|w| match self.side {
            BidSide::Discharge => w[1].price >= w[0].price - tol,
            BidSide::Charge => w[1].price <= w[0].price + tol,
        })
    }

    /// Price of the segment covering cumulative quantity `q` (clamped to the
    /// curve); `None` for an empty curve.
    pub fn price_at_quantity(&self, q: f64) -> Option<f64> {
        let mut acc = 0.0;
        for s in &self.segments {
            acc += s.quantity_mw;
            if q <= acc {
                return Some(s.price);
            }
        }
        self.segments.last().map(|s| s.price)
    }

    /// Cleared quantity range at `price`: strictly in-the-money segments are
    /// taken in full, segments priced exactly at `price` are optional.
    pub fn quantity_range(&self, price: f64) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for s in &self.segments {
            let in_money = match self.side {
                BidSide::Discharge => s.price < price,
                BidSide::Charge => s.price > price,
            };
            if in_money {
                lo += s.quantity_mw;
                hi += s.quantity_mw;
            } else if s.price == price {
                hi += s.quantity_mw;
            }
        }
        (lo, hi)
    }

    /// Same prices with every quantity multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|s| BidSegment { quantity_mw: s.quantity_mw * factor, price: s.price })
            .collect();
        Self { side: self.side, segments }
    }

    pub fn prices(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.price).collect()
    }
}

impl TryFrom<BidCurveRaw> for BidCurve {
    type Error = Error;
    fn try_from(r: BidCurveRaw) -> Result<Self> {
        Self::new(r.side, r.segments)
    }
}

impl From<BidCurve> for BidCurveRaw {
    fn from(c: BidCurve) -> Self {
        Self { side: c.side, segments: c.segments }
    }
}

fn check_inputs(vf: &ValueFunction, soc: f64, spec: &StorageSpec, segments: usize) -> Result<f64> {
    if segments == 0 {
        return Err(Error::invalid("bid curve needs at least one segment"));
    }
    let cap = spec.energy_mwh();
    if (vf.capacity() - cap).abs() > 1e-9 * cap.max(1.0) {
        return Err(Error::invalid(format!(
            "value function spans [0, {}] but storage capacity is {cap}",
            vf.capacity()
        )));
    }
    let tol = 1e-9 * cap.max(1.0);
    if !(soc >= -tol && soc <= cap + tol) {
        return Err(Error::invalid(format!("SoC {soc} outside [0, {cap}]")));
    }
    Ok(soc.clamp(0.0, cap))
}

/// Split `limit` MW into segments of width `P/K`, the last one possibly short.
fn widths(power: f64, limit: f64, k: usize) -> Vec<(f64, f64)> {
    let w = power / k as f64;
    let mut out = Vec::new();
    for i in 1..=k {
        let start = w * (i - 1) as f64;
        if start >= limit {
            break;
        }
        let end = (w * i as f64).min(limit);
        out.push((end - start, end));
    }
    out
}

/// Discharge offer `o(p) = [c + (tau/eta) v(e - tau p / eta)]^+` on `K`
/// equal power segments.
pub fn discharge_bids(vf: &ValueFunction, soc: f64, spec: &StorageSpec, segments: usize) -> Result<BidCurve> {
    let e = check_inputs(vf, soc, spec, segments)?;
    let tau = spec.step_hours();
    let eta = spec.efficiency();
    let limit = spec.power_mw().min(e * eta / tau);
    let mut out = Vec::with_capacity(segments);
    for (q, p) in widths(spec.power_mw(), limit, segments) {
        let after = (e - tau * p / eta).max(0.0);
        let mut price = (spec.discharge_cost() + tau / eta * vf.marginal_value(after)?).max(0.0);
        // nearly linear stretches can wobble by an ulp between segments
        if let Some(prev) = out.last().map(|s: &BidSegment| s.price) {
            price = price.max(prev);
        }
        out.push(BidSegment { quantity_mw: q, price });
    }
    BidCurve::new(BidSide::Discharge, out)
}

/// Charge bid `d(b) = tau eta v(e + b tau eta)` on `K` equal power segments.
pub fn charge_bids(vf: &ValueFunction, soc: f64, spec: &StorageSpec, segments: usize) -> Result<BidCurve> {
    let e = check_inputs(vf, soc, spec, segments)?;
    let tau = spec.step_hours();
    let eta = spec.efficiency();
    let cap = spec.energy_mwh();
    let limit = spec.power_mw().min((cap - e) / (tau * eta));
    let mut out = Vec::with_capacity(segments);
    for (q, b) in widths(spec.power_mw(), limit, segments) {
        let after = (e + b * tau * eta).min(cap);
        let mut price = tau * eta * vf.marginal_value(after)?;
        if let Some(prev) = out.last().map(|s: &BidSegment| s.price) {
            price = price.min(prev);
        }
        out.push(BidSegment { quantity_mw: q, price });
    }
    BidCurve::new(BidSide::Charge, out)
}

/// Offer price of the first discharge MW from empty storage,
/// `[c + tau v(0) / eta]^+`.
pub fn zero_soc_bid(vf: &ValueFunction, spec: &StorageSpec) -> Result<f64> {
    let v0 = vf.marginal_value(0.0)?;
    Ok((spec.discharge_cost() + spec.step_hours() * v0 / spec.efficiency()).max(0.0))
}

/// Discharge and charge curves submitted for one period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodBids {
    pub period: usize,
    pub discharge: BidCurve,
    pub charge: BidCurve,
}

/// Curves for periods `1..=T` read from a value series at SoC `soc`.
pub fn bids_from_series(series: &ValueSeries, soc: f64, spec: &StorageSpec, segments: usize) -> Result<Vec<PeriodBids>> {
    (1..=series.horizon())
        .map(|t| {
            let vf = series.at(t)?;
            Ok(PeriodBids {
                period: t,
                discharge: discharge_bids(vf, soc, spec, segments).map_err(|e| e.at_period(t))?,
                charge: charge_bids(vf, soc, spec, segments).map_err(|e| e.at_period(t))?,
            })
        })
        .collect()
}

/// Deterministic (perfect-foresight) bids for a path of expected prices.
pub fn baseline_bids(
    mu_path: &[f64],
    spec: &StorageSpec,
    end_slope: f64,
    soc: f64,
    segments: usize,
    config: &EngineConfig,
) -> Result<Vec<PeriodBids>> {
    let forecasts = mu_path
        .iter()
        .map(|m| PriceDistribution::point_mass(*m))
        .collect::<Result<Vec<_>>>()?;
    let end = ValueFunction::linear(spec.energy_mwh(), end_slope, 2)?;
    let series = backward_induction(&end, &forecasts, spec, config)?;
    bids_from_series(&series, soc, spec, segments)
}

/// Baseline from forecasts that must all be deterministic.
pub fn baseline_from_forecasts(
    forecasts: &[PriceDistribution],
    spec: &StorageSpec,
    end_slope: f64,
    soc: f64,
    segments: usize,
    config: &EngineConfig,
) -> Result<Vec<PeriodBids>> {
    if let Some((t, d)) = forecasts.iter().enumerate().find(|(_, d)| d.std_dev() > 0.0) {
        return Err(Error::invalid(format!(
            "baseline needs deterministic prices; period {} has standard deviation {}",
            t + 1,
            d.std_dev()
        )));
    }
    let mu: Vec<f64> = forecasts.iter().map(|d| d.mean()).collect();
    baseline_bids(&mu, spec, end_slope, soc, segments, config)
}

#[derive(Debug, Serialize, Deserialize)]
struct BidRow {
    period: usize,
    side: BidSide,
    segment: usize,
    quantity_mw: f64,
    price: f64,
}

/// Writes `period,side,segment,quantity_mw,price` rows.
pub fn write_bids_csv<W: std::io::Write>(bids: &[PeriodBids], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for pb in bids {
        for curve in [&pb.discharge, &pb.charge] {
            for (k, s) in curve.segments().iter().enumerate() {
                w.serialize(BidRow {
                    period: pb.period,
                    side: curve.side(),
                    segment: k + 1,
                    quantity_mw: s.quantity_mw,
                    price: s.price,
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

type Numbered = Vec<(usize, BidSegment)>;

/// Reads the format produced by [`write_bids_csv`]; periods without rows
/// for a side get an empty curve.
pub fn read_bids_csv<R: std::io::Read>(input: R) -> Result<Vec<PeriodBids>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut by_period: BTreeMap<usize, (Numbered, Numbered)> = BTreeMap::new();
    for row in rdr.deserialize() {
        let r: BidRow = row?;
        let entry = by_period.entry(r.period).or_default();
        let seg = (r.segment, BidSegment { quantity_mw: r.quantity_mw, price: r.price });
        match r.side {
            BidSide::Discharge => entry.0.push(seg),
            BidSide::Charge => entry.1.push(seg),
        }
    }
    by_period
        .into_iter()
        .map(|(period, (mut d, mut c))| {
            d.sort_by_key(|s| s.0);
            c.sort_by_key(|s| s.0);
            Ok(PeriodBids {
                period,
                discharge: BidCurve::new(BidSide::Discharge, d.into_iter().map(|s| s.1).collect())?,
                charge: BidCurve::new(BidSide::Charge, c.into_iter().map(|s| s.1).collect())?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> StorageSpec {
        StorageSpec::hourly(10.0, 40.0, 0.9, 25.0).unwrap()
    }

    #[test]
    fn empty_at_zero_soc() {
        let vf = ValueFunction::linear(40.0, 20.0, 41).unwrap();
        let d = discharge_bids(&vf, 0.0, &spec(), 10).unwrap();
        assert!(d.is_empty());
        let c = charge_bids(&vf, 40.0, &spec(), 10).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn charge_limited_by_headroom() {
        let vf = ValueFunction::linear(40.0, 20.0, 41).unwrap();
        let c = charge_bids(&vf, 36.4, &spec(), 10).unwrap();
        assert!((c.total_quantity() - 3.6 / 0.9).abs() < 1e-9);
        let d = discharge_bids(&vf, 4.5, &spec(), 10).unwrap();
        assert!((d.total_quantity() - 4.5 * 0.9).abs() < 1e-9);
    }

    #[test]
    fn linear_value_gives_flat_curve() {
        let vf = ValueFunction::linear(40.0, 20.0, 41).unwrap();
        let d = discharge_bids(&vf, 20.0, &spec(), 10).unwrap();
        for p in d.prices() {
            assert!((p - (25.0 + 20.0 / 0.9)).abs() < 1e-9);
        }
        let c = charge_bids(&vf, 20.0, &spec(), 10).unwrap();
        for p in c.prices() {
            assert!((p - 18.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let vf = ValueFunction::linear(40.0, 20.0, 41).unwrap();
        assert!(discharge_bids(&vf, 41.0, &spec(), 10).is_err());
        assert!(discharge_bids(&vf, 10.0, &spec(), 0).is_err());
        let short = ValueFunction::linear(30.0, 20.0, 31).unwrap();
        assert!(charge_bids(&short, 10.0, &spec(), 10).is_err());
    }

    #[test]
    fn baseline_rejects_uncertain_forecast() {
        let f = vec![
            PriceDistribution::point_mass(20.0).unwrap(),
            PriceDistribution::gaussian(20.0, 1.0, None).unwrap(),
        ];
        assert!(baseline_from_forecasts(&f, &spec(), 0.0, 0.0, 10, &EngineConfig::default()).is_err());
    }

    #[test]
    fn quantity_range_ties() {
        let c = BidCurve::new(
            BidSide::Discharge,
            vec![
                BidSegment { quantity_mw: 2.0, price: 10.0 },
                BidSegment { quantity_mw: 3.0, price: 20.0 },
            ],
        )
        .unwrap();
        assert_eq!(c.quantity_range(20.0), (2.0, 5.0));
        assert_eq!(c.quantity_range(25.0), (5.0, 5.0));
        assert_eq!(c.quantity_range(5.0), (0.0, 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let vf = ValueFunction::new(vec![0.0, 10.0, 40.0], vec![0.0, 400.0, 700.0]).unwrap();
        let bids = vec![PeriodBids {
            period: 3,
            discharge: discharge_bids(&vf, 20.0, &spec(), 4).unwrap(),
            charge: charge_bids(&vf, 20.0, &spec(), 4).unwrap(),
        }];
        let mut buf = Vec::new();
        write_bids_csv(&bids, &mut buf).unwrap();
        let back = read_bids_csv(buf.as_slice()).unwrap();
        assert_eq!(back, bids);
    }
}
