use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bids::{charge_bids, discharge_bids};
use crate::distribution::PriceDistribution;
use crate::engine::{backward_induction, EngineConfig, ValueSeries};
use crate::error::{Error, Result};
use crate::model::StorageSpec;
use crate::value::ValueFunction;

use super::clearing::{clear_rtm, ClearingStatus};
use super::commitment::{commit_dam, CommitmentSchedule};
use super::scenario::{NetDemandNoise, Scenario};
use super::supply::aggregate_supply;

/// One cleared real-time period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodOutcome {
    pub period: usize,
    pub price: f64,
    /// Output per fleet generator (zero when offline).
    pub generator_dispatch: Vec<f64>,
    pub wind_mw: f64,
    pub curtailed_mw: f64,
    pub net_demand_mw: f64,
    /// Per storage unit.
    pub discharge_mw: f64,
    pub charge_mw: f64,
    pub soc_mwh: f64,
    /// Generation cost plus storage discharge cost.
    pub system_cost: f64,
    pub storage_profit: f64,
    pub status: ClearingStatus,
    pub unserved_mw: f64,
    pub overgeneration_mw: f64,
    pub balance_residual_mw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayResult {
    pub periods: Vec<PeriodOutcome>,
    pub system_cost: f64,
    pub storage_profit: f64,
    /// No-load and start-up cost of the day-ahead commitment.
    pub commitment_cost: f64,
    pub unserved_mwh: f64,
    pub curtailed_mwh: f64,
    pub overgeneration_mwh: f64,
}

impl DayResult {
    pub fn prices(&self) -> Vec<f64> {
        self.periods.iter().map(|p| p.price).collect()
    }

    /// Writes one row per period.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "period",
            "price",
            "generation_mw",
            "wind_mw",
            "curtailed_mw",
            "net_demand_mw",
            "discharge_mw",
            "charge_mw",
            "soc_mwh",
            "system_cost",
            "storage_profit",
            "status",
            "unserved_mw",
            "balance_residual_mw",
        ])?;
        for p in &self.periods {
            let status = match p.status {
                ClearingStatus::Normal => "normal",
                ClearingStatus::Scarcity { .. } => "scarcity",
                ClearingStatus::Surplus { .. } => "surplus",
            };
            w.write_record([
                p.period.to_string(),
                p.price.to_string(),
                p.generator_dispatch.iter().sum::<f64>().to_string(),
                p.wind_mw.to_string(),
                p.curtailed_mw.to_string(),
                p.net_demand_mw.to_string(),
                p.discharge_mw.to_string(),
                p.charge_mw.to_string(),
                p.soc_mwh.to_string(),
                p.system_cost.to_string(),
                p.storage_profit.to_string(),
                status.to_string(),
                p.unserved_mw.to_string(),
                p.balance_residual_mw.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A scenario with its day-ahead commitment fixed, ready for repeated
/// real-time runs.
#[derive(Clone, Debug)]
pub struct DayAhead {
    scenario: Scenario,
    schedule: CommitmentSchedule,
}

impl DayAhead {
    pub fn new(scenario: &Scenario, spec: &StorageSpec) -> Result<Self> {
        let schedule = commit_dam(scenario, Some(spec))?;
        Ok(Self { scenario: scenario.clone(), schedule })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn schedule(&self) -> &CommitmentSchedule {
        &self.schedule
    }

    /// Gaussian forecasts centred on the day-ahead prices.
    pub fn price_forecasts(&self, std_dev: f64) -> Result<Vec<PriceDistribution>> {
        self.schedule
            .prices
            .iter()
            .map(|p| PriceDistribution::gaussian(*p, std_dev, None))
            .collect()
    }

    /// Storage value series for the given forecasts, using the scenario's
    /// end value.
    pub fn value_series(
        &self,
        forecasts: &[PriceDistribution],
        spec: &StorageSpec,
        config: &EngineConfig,
    ) -> Result<ValueSeries> {
        if forecasts.len() != self.scenario.horizon() {
            return Err(Error::invalid(format!(
                "{} forecasts for a {}-period day",
                forecasts.len(),
                self.scenario.horizon()
            )));
        }
        let end = ValueFunction::linear(spec.energy_mwh(), self.scenario.end_value_slope, 2)?;
        backward_induction(&end, forecasts, spec, config)
    }

    /// Real-time day with noise `noise` scaled standard normal draws `z`.
    pub fn run(
        &self,
        series: Option<&ValueSeries>,
        spec: &StorageSpec,
        noise: &NetDemandNoise,
        z: &[f64],
    ) -> Result<DayResult> {
        let sc = &self.scenario;
        let horizon = sc.horizon();
        if z.len() != horizon {
            return Err(Error::invalid("one draw per period is required"));
        }
        let units = sc.storage_units as f64;
        let series = if sc.storage_units > 0 {
            let s = series.ok_or_else(|| Error::invalid("storage fleet needs a value series"))?;
            if s.horizon() != horizon {
                return Err(Error::invalid(format!("value series covers {} periods, day has {horizon}", s.horizon())));
            }
            Some(s)
        } else {
            None
        };
        let fleet = &sc.generators;
        let mut soc = sc.initial_soc_mwh.min(spec.energy_mwh());
        let mut prev: Option<Vec<f64>> = None;
        let mut periods = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let period = t + 1;
            let tag = |e: Error| e.at_period(period);
            let supply = aggregate_supply(&self.schedule, fleet, t, prev.as_deref()).map_err(tag)?;
            let (wind_avail, nd) = match noise {
                NetDemandNoise::Absolute { sigma_mw } => {
                    let w = self.schedule.wind[t];
                    (w, (sc.load_mw[t] - w + sigma_mw * z[t]).max(0.0))
                }
                NetDemandNoise::WindProportional { ratio } => {
                    let w = (sc.wind_available(t) + ratio * sc.wind_forecast(t) * z[t]).max(0.0);
                    (w, (sc.load_mw[t] - w).max(0.0))
                }
            };
            let (offers, bids) = match series {
                Some(s) => {
                    let vf = s.at(period)?;
                    let k = sc.bid_segments;
                    (
                        vec![discharge_bids(vf, soc, spec, k).map_err(tag)?.scaled(units)],
                        vec![charge_bids(vf, soc, spec, k).map_err(tag)?.scaled(units)],
                    )
                }
                None => (Vec::new(), Vec::new()),
            };
            let r = clear_rtm(&supply, &offers, &bids, nd, sc.price_limits).map_err(tag)?;
            let (mut unserved, mut curtailed, mut overgen) = (0.0, 0.0, 0.0);
            match r.status {
                ClearingStatus::Normal => {}
                ClearingStatus::Scarcity { shortfall_mw } => unserved = shortfall_mw,
                ClearingStatus::Surplus { excess_mw } => {
                    curtailed = excess_mw.min(wind_avail);
                    overgen = excess_mw - curtailed;
                }
            }
            let (mut p, mut b) = if units > 0.0 {
                (r.discharge[0] / units, r.charge[0] / units)
            } else {
                (0.0, 0.0)
            };
            if p > 0.0 && b > 0.0 {
                let net = p - b;
                p = net.max(0.0);
                b = (-net).max(0.0);
            }
            soc = spec.next_soc(soc, p, b);
            let mut g = vec![0.0; fleet.len()];
            for (u, x) in supply.units().iter().zip(&r.generator_dispatch) {
                g[u.generator] = *x;
            }
            let injection: f64 = g.iter().sum::<f64>() + units * (p - b);
            let gen_cost: f64 = fleet.iter().zip(&g).zip(&self.schedule.status).map(|((gs, x), u)| if u[t] { gs.cost(*x) } else { 0.0 }).sum();
            periods.push(PeriodOutcome {
                period,
                price: r.price,
                wind_mw: wind_avail - curtailed,
                curtailed_mw: curtailed,
                net_demand_mw: nd,
                discharge_mw: p,
                charge_mw: b,
                soc_mwh: soc,
                system_cost: gen_cost + units * spec.discharge_cost() * p,
                storage_profit: units * spec.period_profit(r.price, p, b),
                status: r.status,
                unserved_mw: unserved,
                overgeneration_mw: overgen,
                balance_residual_mw: nd + curtailed - injection - unserved + overgen,
                generator_dispatch: g.clone(),
            });
            prev = Some(g);
        }
        let commitment_cost: f64 = fleet
            .iter()
            .enumerate()
            .map(|(i, gs)| {
                (0..horizon)
                    .map(|t| {
                        let on = if self.schedule.status[i][t] { gs.no_load_cost } else { 0.0 };
                        let start = if self.schedule.startup[i][t] { gs.startup_cost } else { 0.0 };
                        on + start
                    })
                    .sum::<f64>()
            })
            .sum();
        Ok(DayResult {
            system_cost: periods.iter().map(|p| p.system_cost).sum(),
            storage_profit: periods.iter().map(|p| p.storage_profit).sum(),
            unserved_mwh: periods.iter().map(|p| p.unserved_mw).sum(),
            curtailed_mwh: periods.iter().map(|p| p.curtailed_mw).sum(),
            overgeneration_mwh: periods.iter().map(|p| p.overgeneration_mw).sum(),
            commitment_cost,
            periods,
        })
    }
}

/// Standard normal draws for one simulated day. Draw `k` uses ChaCha
/// stream `k` of the master seed, so callers sweeping a grid can give every
/// cell the same noise.
pub fn day_draws(seed: u64, draw: u64, periods: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    (0..periods).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Commits the day, builds the storage value series from `forecasts`, then
/// clears every real-time period with seeded net-demand noise.
pub fn simulate_day(
    scenario: &Scenario,
    forecasts: &[PriceDistribution],
    spec: &StorageSpec,
    seed: u64,
) -> Result<DayResult> {
    let da = DayAhead::new(scenario, spec)?;
    let series = if scenario.storage_units > 0 {
        Some(da.value_series(forecasts, spec, &EngineConfig::default())?)
    } else {
        None
    };
    da.run(series.as_ref(), spec, &scenario.noise, &day_draws(seed, 0, scenario.horizon()))
}

/// Profit of bidding from `series` against an exogenous price path.
pub fn price_taker_profit(
    series: &ValueSeries,
    prices: &[f64],
    spec: &StorageSpec,
    initial_soc: f64,
    segments: usize,
) -> Result<f64> {
    let mut soc = initial_soc;
    let mut profit = 0.0;
    for (t, price) in prices.iter().enumerate() {
        let vf = series.at(t + 1)?;
        let p = discharge_bids(vf, soc, spec, segments)?.quantity_range(*price).0;
        let b = charge_bids(vf, soc, spec, segments)?.quantity_range(*price).0;
        profit += spec.period_profit(*price, p, b);
        soc = spec.next_soc(soc, p, b);
    }
    Ok(profit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> StorageSpec {
        StorageSpec::hourly(10.0, 40.0, 0.9, 25.0).unwrap()
    }

    #[test]
    fn no_storage_earns_nothing_and_balances() {
        let mut sc = Scenario::ideal();
        sc.storage_units = 0;
        let da = DayAhead::new(&sc, &spec()).unwrap();
        let noise = NetDemandNoise::Absolute { sigma_mw: 100.0 };
        let day = da.run(None, &spec(), &noise, &day_draws(3, 0, 24)).unwrap();
        assert_eq!(day.storage_profit, 0.0);
        for p in &day.periods {
            assert!(p.balance_residual_mw.abs() < 1e-6);
            assert!((p.price - (10.0 + 0.08 * p.net_demand_mw)).abs() < 1e-6);
        }
    }

    #[test]
    fn small_unit_barely_moves_prices() {
        let sc = Scenario::ideal();
        let s = spec();
        let da = DayAhead::new(&sc, &s).unwrap();
        let series = da.value_series(&da.price_forecasts(10.0).unwrap(), &s, &EngineConfig::default()).unwrap();
        let noise = NetDemandNoise::Absolute { sigma_mw: 100.0 };
        let z = day_draws(11, 0, 24);
        let with = da.run(Some(&series), &s, &noise, &z).unwrap();
        let mut bare = sc.clone();
        bare.storage_units = 0;
        let without = DayAhead::new(&bare, &s).unwrap().run(None, &s, &noise, &z).unwrap();
        for (a, b) in with.periods.iter().zip(&without.periods) {
            assert!((a.price - b.price).abs() <= 0.8 + 1e-9, "period {}: {} vs {}", a.period, a.price, b.price);
        }
    }

    #[test]
    fn foresight_beats_noisy_forecasts() {
        let s = spec();
        let cfg = EngineConfig::default();
        let end = ValueFunction::zero(40.0).unwrap();
        let prices: Vec<f64> = (0..24).map(|t| 40.0 - 25.0 * (2.0 * std::f64::consts::PI * t as f64 / 24.0).cos()).collect();
        let exact: Vec<_> = prices.iter().map(|p| PriceDistribution::point_mass(*p)).collect::<Result<_>>().unwrap();
        let noisy: Vec<_> = prices.iter().map(|_| PriceDistribution::gaussian(40.0, 30.0, None)).collect::<Result<_>>().unwrap();
        let a = price_taker_profit(&backward_induction(&end, &exact, &s, &cfg).unwrap(), &prices, &s, 0.0, 10).unwrap();
        let b = price_taker_profit(&backward_induction(&end, &noisy, &s, &cfg).unwrap(), &prices, &s, 0.0, 10).unwrap();
        assert!(a > 0.0);
        assert!(a >= b - 1e-9, "{a} < {b}");
    }

    #[test]
    fn same_seed_same_day() {
        let sc = Scenario::ideal();
        let s = spec();
        let f = DayAhead::new(&sc, &s).unwrap().price_forecasts(5.0).unwrap();
        let a = simulate_day(&sc, &f, &s, 9).unwrap();
        let b = simulate_day(&sc, &f, &s, 9).unwrap();
        assert_eq!(a, b);
    }
}
