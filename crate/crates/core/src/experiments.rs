use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bids::{charge_bids, discharge_bids, zero_soc_bid};
use crate::distribution::PriceDistribution;
use crate::engine::{backward_induction, EngineConfig};
use crate::error::{Error, Result};
use crate::market::{clear_rtm, day_draws, DayAhead, Scenario, SupplyCurve};
use crate::model::{PriceBounds, StorageSpec};
use crate::value::ValueFunction;
use crate::withholding::withholding_bound;

/// Columns appended to every reproduction table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    fn fields(&self) -> [String; 3] {
        [self.config_hash.clone(), self.seed.to_string(), self.version.clone()]
    }
}

const PROVENANCE_HEADER: [&str; 3] = ["config_hash", "seed", "version"];

fn check_ascending(sigmas: &[f64]) -> Result<()> {
    if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::invalid("deviations must be finite and non-negative"));
    }
    if sigmas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("deviation list must be strictly ascending"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub sigma: f64,
    pub bid: f64,
}

/// Empty-storage discharge offer when the next `horizon` periods all have
/// Gaussian prices `N(mu, sigma)` and leftover energy is worth nothing.
pub fn sigma_sweep(
    mu: f64,
    sigmas: &[f64],
    spec: &StorageSpec,
    horizon: usize,
    config: &EngineConfig,
) -> Result<Vec<SigmaRow>> {
    check_ascending(sigmas)?;
    let end = ValueFunction::zero(spec.energy_mwh())?;
    sigmas
        .par_iter()
        .map(|&sigma| {
            let f = PriceDistribution::gaussian(mu, sigma, None)?;
            let series = backward_induction(&end, &vec![f; horizon], spec, config)?;
            Ok(SigmaRow { sigma, bid: zero_soc_bid(series.at(0)?, spec)? })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedRow {
    pub sigma: f64,
    pub bid: f64,
    pub bound: f64,
    /// Largest shift of a period mean caused by truncation.
    pub max_mean_shift: f64,
}

/// Offers under uniform forecasts clipped to `bounds`, next to the price-cap
/// bound evaluated at the clipped means.
pub fn bounded_sweep(
    mu_path: &[f64],
    bounds: PriceBounds,
    sigmas: &[f64],
    spec: &StorageSpec,
    config: &EngineConfig,
) -> Result<Vec<BoundedRow>> {
    check_ascending(sigmas)?;
    if mu_path.is_empty() {
        return Err(Error::invalid("mean path is empty"));
    }
    let end_slope = ((bounds.floor() - spec.discharge_cost()) * spec.efficiency() / spec.step_hours()).max(0.0);
    let end = ValueFunction::linear(spec.energy_mwh(), end_slope, 2)?;
    sigmas
        .par_iter()
        .map(|&sigma| {
            let forecasts = mu_path
                .iter()
                .map(|m| PriceDistribution::bounded_uniform(*m, sigma, Some(bounds)))
                .collect::<Result<Vec<_>>>()?;
            let means: Vec<f64> = forecasts.iter().map(|f| f.mean()).collect();
            let series = backward_induction(&end, &forecasts, spec, config)?;
            let bound = withholding_bound(0, &means, bounds, spec, end_slope)?.bound;
            let shift = mu_path.iter().zip(&means).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok(BoundedRow { sigma, bid: zero_soc_bid(series.at(0)?, spec)?, bound, max_mean_shift: shift })
        })
        .collect()
}

/// Mean day cost and storage profit over a grid of net-demand noise
/// (columns) and forecast deviation (rows).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub demand_sigmas: Vec<f64>,
    pub forecast_sigmas: Vec<f64>,
    /// `[forecast row][demand column]`.
    pub cost: Vec<Vec<f64>>,
    pub profit: Vec<Vec<f64>>,
    pub draws: usize,
    pub seed: u64,
}

fn argbest(values: impl Iterator<Item = f64>, better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    let mut best_v = f64::NAN;
    for (i, v) in values.enumerate() {
        if i == 0 || better(v, best_v) {
            best = i;
            best_v = v;
        }
    }
    best
}

impl SweepResult {
    /// Row of lowest mean cost in each demand column.
    pub fn column_cost_argmin(&self) -> Vec<usize> {
        (0..self.demand_sigmas.len())
            .map(|j| argbest(self.cost.iter().map(|r| r[j]), |a, b| a < b))
            .collect()
    }

    /// Row of highest mean profit in each demand column.
    pub fn column_profit_argmax(&self) -> Vec<usize> {
        (0..self.demand_sigmas.len())
            .map(|j| argbest(self.profit.iter().map(|r| r[j]), |a, b| a > b))
            .collect()
    }

    /// Spearman correlation between column index and the cost-minimizing row.
    pub fn diagonal_correlation(&self) -> f64 {
        let cols: Vec<f64> = (0..self.demand_sigmas.len()).map(|j| j as f64).collect();
        let rows: Vec<f64> = self.column_cost_argmin().iter().map(|r| *r as f64).collect();
        spearman(&cols, &rows)
    }

    /// Long-format rows: one per cell.
    pub fn write_csv<W: std::io::Write>(&self, out: W, prov: &Provenance) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["demand_sigma", "forecast_sigma", "row", "col", "mean_cost", "mean_profit", "draws"];
        header.extend(PROVENANCE_HEADER);
        w.write_record(&header)?;
        for (i, fs) in self.forecast_sigmas.iter().enumerate() {
            for (j, ds) in self.demand_sigmas.iter().enumerate() {
                let mut rec = vec![
                    ds.to_string(),
                    fs.to_string(),
                    i.to_string(),
                    j.to_string(),
                    self.cost[i][j].to_string(),
                    self.profit[i][j].to_string(),
                    self.draws.to_string(),
                ];
                rec.extend(prov.fields());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Average ranks, ties sharing the mean rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|a, b| x[*a].total_cmp(&x[*b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Runs the day-ahead commitment once, then every (forecast, demand) cell
/// over `draws` seeded real-time days.
pub fn welfare_sweep(
    scenario: &Scenario,
    spec: &StorageSpec,
    demand_sigmas: &[f64],
    forecast_sigmas: &[f64],
    draws: usize,
    seed: u64,
    config: &EngineConfig,
) -> Result<SweepResult> {
    if draws == 0 {
        return Err(Error::invalid("at least one draw per cell is required"));
    }
    check_ascending(demand_sigmas)?;
    check_ascending(forecast_sigmas)?;
    let da = DayAhead::new(scenario, spec)?;
    let horizon = scenario.horizon();
    let series = forecast_sigmas
        .par_iter()
        .map(|s| da.value_series(&da.price_forecasts(*s)?, spec, config))
        .collect::<Result<Vec<_>>>()?;
    let noise: Vec<Vec<f64>> = (0..draws as u64).map(|k| day_draws(seed, k, horizon)).collect();
    let (rows, cols) = (forecast_sigmas.len(), demand_sigmas.len());
    let cells: Vec<(usize, usize)> = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).collect();
    let results = cells
        .par_iter()
        .map(|&(i, j)| {
            let family = scenario.noise.with_scale(demand_sigmas[j]);
            let mut cost = 0.0;
            let mut profit = 0.0;
            for z in &noise {
                let day = da.run(Some(&series[i]), spec, &family, z).map_err(|e| {
                    Error::Numerical(format!("cell (forecast {}, demand {}): {e}", forecast_sigmas[i], demand_sigmas[j]))
                })?;
                cost += day.system_cost;
                profit += day.storage_profit;
            }
            Ok((cost / draws as f64, profit / draws as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cost = vec![vec![0.0; cols]; rows];
    let mut profit = vec![vec![0.0; cols]; rows];
    for ((i, j), (c, p)) in cells.into_iter().zip(results) {
        cost[i][j] = c;
        profit[i][j] = p;
    }
    Ok(SweepResult {
        demand_sigmas: demand_sigmas.to_vec(),
        forecast_sigmas: forecast_sigmas.to_vec(),
        cost,
        profit,
        draws,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandShape {
    Uniform,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
    /// The fit is visibly non-linear (storage or fleet steps move prices).
    pub degraded: bool,
}

/// Least-squares fit of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("net demand does not vary; slope is undefined"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(SlopeFit { slope, intercept, r_squared, samples: x.len(), degraded: r_squared < 1.0 - 1e-9 })
}

/// Clears `n` noiseless real-time markets at net demands drawn across the
/// scenario's day-ahead range and regresses price on net demand. Storage
/// units, if any, bid from a mid-charge state.
pub fn slope_check(
    scenario: &Scenario,
    spec: &StorageSpec,
    n: usize,
    shape: DemandShape,
    seed: u64,
) -> Result<SlopeFit> {
    scenario.validate()?;
    if n < 2 {
        return Err(Error::invalid("need at least two clearings"));
    }
    let nd: Vec<f64> = (0..scenario.horizon())
        .map(|t| (scenario.load_mw[t] - scenario.wind_forecast(t)).max(0.0))
        .collect();
    let lo = nd.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = nd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::invalid("scenario net demand is constant; slope is undefined"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels: Vec<f64> = match shape {
        DemandShape::Uniform => {
            let u = Uniform::new(lo, hi).map_err(|e| Error::invalid(e.to_string()))?;
            (0..n).map(|_| u.sample(&mut rng)).collect()
        }
        DemandShape::Gaussian => {
            let mean = 0.5 * (lo + hi);
            let sd = 0.25 * (hi - lo);
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (mean + sd * z).max(0.0)
                })
                .collect()
        }
    };
    let supply = SupplyCurve::from_fleet(&scenario.generators, false)?;
    let (offers, bids) = if scenario.storage_units > 0 {
        let mean_price = supply
            .marginal_cost_at(0.5 * (lo + hi))
            .ok_or_else(|| Error::Infeasible("fleet cannot serve mid-range net demand".into()))?;
        let f = PriceDistribution::gaussian(mean_price, 10.0, None)?;
        let end = ValueFunction::linear(spec.energy_mwh(), scenario.end_value_slope, 2)?;
        let series = backward_induction(&end, &vec![f; scenario.horizon()], spec, &EngineConfig::default())?;
        let vf = series.at(1)?;
        let soc = 0.5 * spec.energy_mwh();
        let k = scenario.bid_segments;
        let units = scenario.storage_units as f64;
        (
            vec![discharge_bids(vf, soc, spec, k)?.scaled(units)],
            vec![charge_bids(vf, soc, spec, k)?.scaled(units)],
        )
    } else {
        (Vec::new(), Vec::new())
    };
    let prices = levels
        .iter()
        .map(|d| clear_rtm(&supply, &offers, &bids, *d, scenario.price_limits).map(|r| r.price))
        .collect::<Result<Vec<_>>>()?;
    linear_fit(&levels, &prices)
}

/// Writes `sigma,bid` rows with provenance.
pub fn write_sigma_csv<W: std::io::Write>(rows: &[SigmaRow], out: W, prov: &Provenance) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sigma", "bid"];
    header.extend(PROVENANCE_HEADER);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.sigma.to_string(), r.bid.to_string()];
        rec.extend(prov.fields());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `sigma,bid,bound,max_mean_shift` rows with provenance.
pub fn write_bounded_csv<W: std::io::Write>(rows: &[BoundedRow], out: W, prov: &Provenance) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sigma", "bid", "bound", "max_mean_shift"];
    header.extend(PROVENANCE_HEADER);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.sigma.to_string(), r.bid.to_string(), r.bound.to_string(), r.max_mean_shift.to_string()];
        rec.extend(prov.fields());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[2.0, 4.0, 9.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), 0.0);
    }

    #[test]
    fn fit_exact_line() {
        let x = [1.0, 2.0, 4.0];
        let y = [12.0, 14.0, 18.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 10.0).abs() < 1e-12);
        assert!(!f.degraded);
        assert!(linear_fit(&[3.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sweep_requires_ascending() {
        let spec = StorageSpec::hourly(10.0, 40.0, 0.9, 25.0).unwrap();
        assert!(sigma_sweep(26.2, &[5.0, 1.0], &spec, 2, &EngineConfig::default()).is_err());
    }

    #[test]
    fn draws_are_shared_across_calls() {
        assert_eq!(day_draws(7, 3, 24), day_draws(7, 3, 24));
        assert_ne!(day_draws(7, 3, 24), day_draws(7, 4, 24));
    }
}
