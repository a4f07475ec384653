//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use storage_bidding::bids::{baseline_bids, charge_bids, discharge_bids, zero_soc_bid};
use storage_bidding::distribution::PriceDistribution;
use storage_bidding::engine::{backward_induction, bellman_step, EngineConfig, ExpectationMethod};
use storage_bidding::experiments::{sigma_sweep, slope_check, welfare_sweep, DemandShape};
use storage_bidding::market::{day_draws, representative_days, ClearingStatus, DayAhead, NetDemandNoise, Scenario};
use storage_bidding::model::{PriceBounds, StorageSpec};
use storage_bidding::value::ValueFunction;
use storage_bidding::withholding::{expectation_cap_bound, sigma_floor, spike_distribution, withholding_bound};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_spec(r: &mut ChaCha8Rng) -> StorageSpec {
    let tau = [0.25, 0.5, 1.0, 2.0][r.random_range(0..4)];
    StorageSpec::new(
        r.random_range(1.0..30.0),
        r.random_range(1.0..120.0),
        r.random_range(0.6..=1.0),
        r.random_range(0.0..50.0),
        tau,
    )
    .unwrap()
}

/// Concave piecewise-linear function on `[0, cap]` with 2 to 5 breakpoints.
fn random_concave(r: &mut ChaCha8Rng, cap: f64, slope_lo: f64, slope_hi: f64) -> ValueFunction {
    let pieces = r.random_range(1..=4);
    let mut x: Vec<f64> = (0..pieces - 1).map(|_| r.random_range(0.05..0.95) * cap).collect();
    x.push(0.0);
    x.push(cap);
    x.sort_by(f64::total_cmp);
    x.dedup_by(|a, b| (*a - *b).abs() < 1e-6 * cap);
    let mut slopes: Vec<f64> = (0..x.len() - 1).map(|_| r.random_range(slope_lo..=slope_hi)).collect();
    slopes.sort_by(|a, b| b.total_cmp(a));
    let mut y = vec![r.random_range(-50.0..50.0)];
    for (k, s) in slopes.iter().enumerate() {
        y.push(y[k] + s * (x[k + 1] - x[k]));
    }
    ValueFunction::new(x, y).unwrap()
}

fn random_distribution(r: &mut ChaCha8Rng) -> PriceDistribution {
    let mean = r.random_range(-20.0..150.0);
    let sd = r.random_range(0.0..80.0);
    match r.random_range(0..6) {
        0 => PriceDistribution::point_mass(mean).unwrap(),
        1 => PriceDistribution::gaussian(mean, sd, None).unwrap(),
        2 => {
            let floor = mean - r.random_range(1.0..60.0);
            let b = PriceBounds::new(floor, floor + r.random_range(70.0..400.0)).unwrap();
            PriceDistribution::gaussian(mean, sd, Some(b)).unwrap()
        }
        3 => {
            let b = PriceBounds::new(mean - r.random_range(1.0..50.0), mean + r.random_range(1.0..300.0)).unwrap();
            PriceDistribution::bounded_uniform(mean, sd.max(0.5), Some(b)).unwrap()
        }
        4 => {
            let low = mean - r.random_range(0.0..80.0);
            PriceDistribution::two_point(low + r.random_range(1.0..300.0), low, r.random_range(0.02..0.98)).unwrap()
        }
        _ => {
            let n = r.random_range(1..12);
            PriceDistribution::empirical((0..n).map(|_| mean + sd * r.random_range(-2.0..2.0)).collect()).unwrap()
        }
    }
}

// ---------- 1. oracle equivalence ----------

fn interp(x: &[f64], y: &[f64], e: f64) -> f64 {
    if x.len() == 1 {
        return y[0];
    }
    let k = x.partition_point(|v| *v <= e).clamp(1, x.len() - 1);
    let (x0, x1) = (x[k - 1], x[k]);
    y[k - 1] + (y[k] - y[k - 1]) * (e - x0) / (x1 - x0)
}

/// Period value at every grid point by explicit enumeration of candidate
/// end states: grid points in reach, the reach limits and idling.
fn tree_stage(grid: &[f64], next: &[f64], atoms: &[(f64, f64)], spec: &StorageSpec) -> Vec<f64> {
    let (p_max, eta, tau, c) = (spec.power_mw(), spec.efficiency(), spec.step_hours(), spec.discharge_cost());
    let cap = spec.energy_mwh();
    grid.iter()
        .map(|&e| {
            let lo = (e - tau * p_max / eta).max(0.0);
            let hi = (e + tau * p_max * eta).min(cap);
            let mut cands: Vec<f64> = grid.iter().copied().filter(|g| *g >= lo && *g <= hi).collect();
            cands.extend([lo, hi, e]);
            atoms
                .iter()
                .map(|&(price, prob)| {
                    let best = cands
                        .iter()
                        .filter_map(|&y| {
                            let d = y - e;
                            let profit = if d > 0.0 {
                                -price * d / (tau * eta)
                            } else if d < 0.0 {
                                if price < 0.0 {
                                    return None;
                                }
                                (price - c) * (-d * eta / tau)
                            } else {
                                0.0
                            };
                            Some(profit + interp(grid, next, y))
                        })
                        .fold(f64::NEG_INFINITY, f64::max);
                    prob * best
                })
                .sum()
        })
        .collect()
}

fn c1_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let tau = [0.5, 1.0][r.random_range(0..2)];
        let spec = StorageSpec::new(
            r.random_range(1.0..20.0),
            r.random_range(1.0..60.0),
            r.random_range(0.7..=1.0),
            r.random_range(0.0..40.0),
            tau,
        )
        .unwrap();
        let n = r.random_range(2..=11);
        let horizon = r.random_range(1..=3);
        let end = random_concave(&mut r, spec.energy_mwh(), -10.0, 80.0);
        let forecasts: Vec<PriceDistribution> = (0..horizon)
            .map(|_| {
                let low = r.random_range(-30.0..60.0);
                PriceDistribution::two_point(low + r.random_range(1.0..150.0), low, r.random_range(0.05..0.95)).unwrap()
            })
            .collect();
        let cfg = EngineConfig { soc_points: n, ..EngineConfig::default() };
        let series = backward_induction(&end, &forecasts, &spec, &cfg).map_err(|e| format!("case {case}: {e}"))?;
        let grid: Vec<f64> = (0..n).map(|k| spec.energy_mwh() * k as f64 / (n - 1) as f64).collect();
        let mut w: Vec<f64> = grid.iter().map(|e| end.value_at(*e)).collect();
        for t in (0..horizon).rev() {
            w = tree_stage(&grid, &w, forecasts[t].atoms().unwrap(), &spec);
            let got = series.at(t).unwrap();
            for (k, e) in grid.iter().enumerate() {
                let err = (got.value_at(*e) - w[k]).abs();
                worst = worst.max(err);
                ensure!(err <= 1e-6, "case {case}, V_{t}({e}): engine {} vs tree {}", got.value_at(*e), w[k]);
            }
        }
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!("200 instances, max |diff| {worst:.2e}, {took:.2?}"))
}

// ---------- 2 and 3. concavity and monotone bids ----------

fn random_series(seed: u64) -> (StorageSpec, storage_bidding::engine::ValueSeries) {
    let mut r = rng(seed);
    let spec = random_spec(&mut r);
    let end = random_concave(&mut r, spec.energy_mwh(), -20.0, 100.0);
    let horizon = r.random_range(1..=3);
    let forecasts: Vec<_> = (0..horizon).map(|_| random_distribution(&mut r)).collect();
    let cfg = EngineConfig { soc_points: r.random_range(11..=101), ..EngineConfig::default() };
    let series = backward_induction(&end, &forecasts, &spec, &cfg)
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    (spec, series)
}

fn c2_concavity() -> Outcome {
    let violations: Vec<String> = (0..1000u64)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (_, series) = random_series(2000 + i);
            series
                .functions()
                .iter()
                .enumerate()
                .filter(|(_, f)| !f.is_concave(1e-9))
                .map(|(t, f)| format!("seed {} V_{t}: violation {:.3e}", 2000 + i, f.concavity_violation()))
                .collect::<Vec<_>>()
        })
        .collect();
    ensure!(violations.is_empty(), "{} violations, first: {}", violations.len(), violations[0]);
    Ok("1000 triples, 0 violations".into())
}

fn c3_monotone_bids() -> Outcome {
    let results: Vec<Result<usize, String>> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let (spec, series) = random_series(2000 + i);
            let mut r = rng(9000 + i);
            let mut curves = 0;
            for t in 0..=series.horizon() {
                let vf = series.at(t).unwrap();
                for _ in 0..4 {
                    let soc = r.random_range(0.0..=spec.energy_mwh());
                    let k = r.random_range(1..=12);
                    let d = discharge_bids(vf, soc, &spec, k).map_err(|e| e.to_string())?;
                    let c = charge_bids(vf, soc, &spec, k).map_err(|e| e.to_string())?;
                    if !d.is_monotone(0.0) || !c.is_monotone(0.0) {
                        return Err(format!("seed {} t={t} soc={soc}: {:?} / {:?}", 2000 + i, d.prices(), c.prices()));
                    }
                    curves += 2;
                }
            }
            Ok(curves)
        })
        .collect();
    let mut total = 0;
    for res in results {
        total += res?;
    }
    Ok(format!("{total} curves, 0 violations"))
}

// ---------- 4. constant baseline bids ----------

fn c4_baseline() -> Outcome {
    let mut r = rng(404);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let tau = [0.5, 1.0, 2.0][r.random_range(0..3)];
        let p = r.random_range(1.0..30.0);
        let eta = r.random_range(0.6..=1.0);
        // full swing: one period can fill the store from empty
        let cap = r.random_range(0.1..=1.0) * tau * p * eta;
        let spec = StorageSpec::new(p, cap, eta, r.random_range(0.0..50.0), tau).unwrap();
        let horizon = r.random_range(1..=24);
        let mu: Vec<f64> = (0..horizon).map(|_| r.random_range(-20.0..200.0)).collect();
        let soc = r.random_range(0.0..=cap);
        let end_slope = r.random_range(0.0..60.0);
        let k = r.random_range(2..=10);
        let bids = baseline_bids(&mu, &spec, end_slope, soc, k, &EngineConfig::default()).map_err(|e| e.to_string())?;
        for pb in &bids {
            for curve in [&pb.discharge, &pb.charge] {
                let prices = curve.prices();
                if prices.is_empty() {
                    continue;
                }
                let hi = prices.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = prices.iter().copied().fold(f64::INFINITY, f64::min);
                worst = worst.max(hi - lo);
                ensure!(hi - lo <= 1e-9, "case {case} period {}: {:?} spread {}", pb.period, curve.side(), hi - lo);
            }
        }
    }
    Ok(format!("100 price paths, max spread {worst:.2e} $/MWh"))
}

// ---------- 5. bid grows with forecast deviation ----------

fn c5_sigma_trend() -> Outcome {
    let start = Instant::now();
    let spec = StorageSpec::hourly(10.0, 40.0, 0.9, 25.0).unwrap();
    let sigmas = [5.0, 50.0, 150.0, 500.0, 1000.0, 1500.0];
    let rows = sigma_sweep(26.2, &sigmas, &spec, 23, &EngineConfig::default()).map_err(|e| e.to_string())?;
    let bids: Vec<f64> = rows.iter().map(|r| r.bid).collect();
    ensure!(bids.windows(2).all(|w| w[1] > w[0]), "not strictly increasing: {bids:?}");
    let ratio = bids[5] / bids[0];
    ensure!(ratio > 10.0, "ratio {ratio}: {bids:?}");
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(30), "took {took:?}");
    Ok(format!("bids {:.1} -> {:.1} (ratio {ratio:.1}), {took:.2?}", bids[0], bids[5]))
}

// ---------- 6. deviation floor ----------

fn zero_soc_marginal(next: &ValueFunction, mu: f64, sigma: f64, spec: &StorageSpec) -> f64 {
    let d = PriceDistribution::gaussian(mu, sigma, None).unwrap();
    bellman_step(next, &d, spec, ExpectationMethod::Analytic).unwrap().marginal_value(0.0).unwrap()
}

fn c6_sigma_floor() -> Outcome {
    let mut r = rng(606);
    let mut worst = f64::INFINITY;
    for case in 0..500 {
        let v_ec = r.random_range(0.0..120.0);
        let c = r.random_range(0.0..60.0);
        let mu = c + r.random_range(-30.0..100.0);
        let spec = StorageSpec::hourly(10.0, 40.0, 1.0, c).unwrap();
        let next = ValueFunction::linear(40.0, v_ec, 401).unwrap();
        let floor = sigma_floor(v_ec, c, mu);
        let sigma = floor.max(0.1) + r.random_range(0.0..150.0);
        let h = 0.1;
        let d = (zero_soc_marginal(&next, mu, sigma + h, &spec) - zero_soc_marginal(&next, mu, sigma - h, &spec)) / (2.0 * h);
        worst = worst.min(d);
        ensure!(d >= -1e-4, "case {case}: v_Ec={v_ec} c={c} mu={mu} sigma={sigma} floor={floor}: slope {d}");
    }
    Ok(format!("500 triples, min derivative {worst:.3e}"))
}

// ---------- 7. price-cap bound ----------

fn endpoint_gap(bounds: PriceBounds, mu: &[f64], spec: &StorageSpec, cfg: &EngineConfig) -> Vec<f64> {
    let forecasts: Vec<_> = mu
        .iter()
        .map(|m| PriceDistribution::two_point(bounds.cap(), bounds.floor(), bounds.cap_weight(*m)).unwrap())
        .collect();
    let end = ValueFunction::zero(spec.energy_mwh()).unwrap();
    let series = backward_induction(&end, &forecasts, spec, cfg).unwrap();
    (0..mu.len())
        .map(|t| {
            let bound = withholding_bound(t, mu, bounds, spec, 0.0).unwrap().bound;
            bound - zero_soc_bid(series.at(t).unwrap(), spec).unwrap()
        })
        .collect()
}

fn c7_bound() -> Outcome {
    // worked single-step case
    let spec = StorageSpec::hourly(10.0, 40.0, 0.9, 25.0).unwrap();
    let b = PriceBounds::new(5.0, 150.0).unwrap();
    let single = withholding_bound(0, &[26.2], b, &spec, 0.0).map_err(|e| e.to_string())?.bound;
    ensure!((single - 43.276).abs() <= 1e-3, "single-step bound {single}");

    // dominance over random bounded distributions with matched means
    let over: Vec<String> = (0..10_000u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut r = rng(70_000 + i);
            let floor: f64 = r.random_range(-20.0..40.0);
            let cap = floor.max(0.0) + r.random_range(10.0..400.0);
            let bounds = PriceBounds::new(floor, cap).unwrap();
            let tau = [0.5, 1.0][r.random_range(0..2)];
            let eta = r.random_range(0.6..=1.0);
            let c = r.random_range(floor.max(0.0)..=cap);
            let spec = StorageSpec::new(r.random_range(1.0..20.0), r.random_range(1.0..60.0), eta, c, tau).unwrap();
            let end_slope = r.random_range(0.0..=1.0) * (cap - c) * eta / tau;
            let horizon = r.random_range(1..=5);
            let forecasts: Vec<PriceDistribution> = (0..horizon)
                .map(|_| {
                    let mu = r.random_range(floor..=cap);
                    let sd = r.random_range(0.0..(cap - floor));
                    match r.random_range(0..5) {
                        0 => PriceDistribution::point_mass(mu).unwrap(),
                        1 => PriceDistribution::gaussian(mu, sd, Some(bounds)).unwrap(),
                        2 => PriceDistribution::bounded_uniform(mu, sd.max(0.1), Some(bounds)).unwrap(),
                        3 => {
                            let lo = r.random_range(floor..=mu);
                            let hi = r.random_range(mu..=cap);
                            if hi - lo < 1e-9 {
                                PriceDistribution::point_mass(mu).unwrap()
                            } else {
                                PriceDistribution::two_point(hi, lo, (mu - lo) / (hi - lo)).unwrap()
                            }
                        }
                        _ => PriceDistribution::empirical((0..r.random_range(1..8)).map(|_| r.random_range(floor..=cap)).collect())
                            .unwrap(),
                    }
                })
                .collect();
            let means: Vec<f64> = forecasts.iter().map(|f| f.mean().clamp(floor, cap)).collect();
            let end = ValueFunction::linear(spec.energy_mwh(), end_slope, 2).unwrap();
            let cfg = EngineConfig { soc_points: 41, ..EngineConfig::default() };
            let series = backward_induction(&end, &forecasts, &spec, &cfg).unwrap();
            (0..horizon).find_map(|t| {
                let bound = withholding_bound(t, &means, bounds, &spec, end_slope).unwrap().bound;
                let bid = zero_soc_bid(series.at(t).unwrap(), &spec).unwrap();
                (bid > bound + 1e-6).then(|| format!("seed {} t={t}: bid {bid} > bound {bound}", 70_000 + i))
            })
        })
        .collect();
    ensure!(over.is_empty(), "{} bids above the bound, first: {}", over.len(), over[0]);

    // endpoint two-point forecasts on horizons up to 5
    let cfg = EngineConfig::default();
    let mut report = Vec::new();
    let mut worst = 0.0f64;
    for horizon in 1..=5 {
        let gaps = endpoint_gap(b, &vec![26.2; horizon], &spec, &cfg);
        ensure!(gaps.iter().all(|g| *g >= -1e-6), "T={horizon}: bid above bound {gaps:?}");
        worst = worst.max(gaps.iter().copied().fold(0.0, f64::max));
        report.push(format!("T={horizon}: {}", gaps.iter().map(|g| format!("{g:.2}")).collect::<Vec<_>>().join("/")));
    }
    ensure!(
        worst <= 0.5,
        "dominance holds (10000 instances) and single step = {single:.4}, but the endpoint two-point forecast \
         leaves the bound unattained by up to {worst:.2} $/MWh (gap per period, {}); the bound replaces v(E_c) by v(0), \
         which is only exact when charging at the floor price never pays",
        report.join(", ")
    );
    Ok(format!("10000 instances dominated, single step {single:.4}, max endpoint gap {worst:.3}"))
}

// ---------- 8. expectation-cap bound limit ----------

fn c8_cap_limit() -> Outcome {
    let spec = StorageSpec::hourly(10.0, 40.0, 0.9, 25.0).unwrap();
    let b = PriceBounds::new(5.0, 150.0).unwrap();
    let far = expectation_cap_bound(Some(10_000), 26.2, b, &spec, 1.0, 0.0).map_err(|e| e.to_string())?;
    ensure!((far - 150.0).abs() <= 1e-6, "T=1e4 bound {far}");
    let mus: Vec<f64> = (0..20).map(|i| 5.0 + 145.0 * i as f64 / 19.0).collect();
    let horizons: Vec<usize> = (0..20).map(|i| (10f64.powf(4.0 * i as f64 / 19.0)).round() as usize).collect();
    let grid: Vec<Vec<f64>> = mus
        .iter()
        .map(|m| horizons.iter().map(|t| expectation_cap_bound(Some(*t), *m, b, &spec, 1.0, 0.0).unwrap()).collect())
        .collect();
    for i in 0..20 {
        for j in 0..20 {
            if i > 0 {
                ensure!(grid[i][j] >= grid[i - 1][j] - 1e-12, "not monotone in mean at ({i},{j})");
            }
            if j > 0 {
                ensure!(grid[i][j] >= grid[i][j - 1] - 1e-12, "not monotone in horizon at ({i},{j})");
            }
        }
    }
    Ok(format!("T=1e4 bound {far:.9}, 20x20 grid monotone"))
}

// ---------- 9. spike construction ----------

fn c9_spike() -> Outcome {
    let spec = StorageSpec::hourly(10.0, 40.0, 0.9, 25.0).unwrap();
    let next = ValueFunction::linear(40.0, 20.0, 401).unwrap();
    let achieved = |d: &PriceDistribution| {
        bellman_step(&next, d, &spec, ExpectationMethod::Analytic).unwrap().marginal_value(0.0).unwrap()
    };
    let d = spike_distribution(200.0, 26.2, 0.5, &spec, 20.0).map_err(|e| e.to_string())?;
    let atoms = d.atoms().unwrap();
    let (low, high) = (atoms[0].0, atoms[atoms.len() - 1].0);
    ensure!(high <= 450.0, "spike {high} above 450");
    ensure!(low <= 18.0, "low leg {low} above 18");
    ensure!((d.mean() - 26.2).abs() <= 1e-9, "mean {}", d.mean());
    let v = achieved(&d);
    ensure!(v >= 200.0, "achieved {v}");
    let stated = PriceDistribution::two_point(450.0, -397.6, 0.5).unwrap();
    let vs = achieved(&stated);
    ensure!(vs >= 200.0 && (stated.mean() - 26.2).abs() <= 1e-9, "(450, -397.6) achieves {vs}");
    Ok(format!("pi={high} gamma={low:.2} achieves {v:.4}; (450, -397.6) achieves {vs:.4}"))
}

// ---------- 10. price slope on the quadratic system ----------

fn c10_slope() -> Outcome {
    let start = Instant::now();
    let mut sc = Scenario::ideal();
    sc.storage_units = 0;
    let spec = StorageSpec::hourly(10.0, 40.0, 0.9, 25.0).unwrap();
    let fit = slope_check(&sc, &spec, 500, DemandShape::Uniform, 10).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    ensure!((fit.slope - 0.08).abs() <= 1e-6, "slope {}", fit.slope);
    ensure!(fit.r_squared >= 1.0 - 1e-9, "R^2 {}", fit.r_squared);
    ensure!(took < Duration::from_secs(5), "took {took:?}");
    let g = slope_check(&sc, &spec, 500, DemandShape::Gaussian, 11).map_err(|e| e.to_string())?;
    ensure!((g.slope - 0.08).abs() <= 1e-6, "gaussian draws slope {}", g.slope);
    Ok(format!("slope {:.9}, R^2 {:.12}, {took:.2?}", fit.slope, fit.r_squared))
}

// ---------- 11. welfare alignment ----------

fn c11_welfare() -> Outcome {
    let start = Instant::now();
    let spec = StorageSpec::hourly(10.0, 40.0, 0.9, 25.0).unwrap();
    let res = welfare_sweep(
        &Scenario::ideal(),
        &spec,
        &[25.0, 75.0, 125.0, 175.0, 225.0],
        &[2.0, 6.0, 10.0, 14.0, 18.0],
        200,
        2024,
        &EngineConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let cost = res.column_cost_argmin();
    let profit = res.column_profit_argmax();
    ensure!(cost == profit, "cost argmin rows {cost:?} vs profit argmax rows {profit:?}");
    let rho = res.diagonal_correlation();
    ensure!(rho >= 0.6, "rank correlation {rho} (rows {cost:?})");
    ensure!(took < Duration::from_secs(300), "took {took:?}");
    Ok(format!("argmin rows {cost:?} = argmax rows, rank corr {rho:.3}, {took:.2?}"))
}

// ---------- 12. simulator hygiene ----------

fn random_scenario(r: &mut ChaCha8Rng) -> Scenario {
    let mut sc = if r.random_bool(0.3) {
        let mut s = Scenario::ideal();
        let base = r.random_range(300.0..2000.0);
        let swing = r.random_range(0.0..0.4) * base;
        let phase = r.random_range(0.0..24.0);
        s.load_mw = (0..24)
            .map(|h| base - swing * ((h as f64 - phase) / 24.0 * std::f64::consts::TAU).cos())
            .collect();
        s.noise = NetDemandNoise::Absolute { sigma_mw: r.random_range(0.0..250.0) };
        s
    } else {
        let days = representative_days();
        let mut s = days[r.random_range(0..days.len())].0.clone();
        let scale = r.random_range(0.9..1.15);
        for l in &mut s.load_mw {
            *l *= scale;
        }
        let wind = r.random_range(0.5..1.5);
        for w in &mut s.wind_forecast_mw {
            *w *= wind;
        }
        s.noise = NetDemandNoise::WindProportional { ratio: r.random_range(0.0..0.4) };
        s
    };
    sc.storage_units = r.random_range(0..=30);
    sc.storage_in_day_ahead = r.random_bool(0.5);
    sc.initial_soc_mwh = r.random_range(0.0..=40.0);
    sc.end_value_slope = r.random_range(0.0..30.0);
    sc.bid_segments = r.random_range(1..=10);
    sc
}

fn c12_hygiene() -> Outcome {
    let spec = StorageSpec::hourly(10.0, 40.0, 0.9, 25.0).unwrap();
    let mut r = rng(1212);
    let mut periods = 0;
    let mut abnormal = 0;
    let mut rejected = 0;
    let mut case = 0;
    while case < 50 {
        let sc = random_scenario(&mut r);
        let da = match DayAhead::new(&sc, &spec) {
            Ok(da) => da,
            // minimum generation above load: no schedule exists, draw again
            Err(e) if e.exit_code() == 2 => {
                rejected += 1;
                continue;
            }
            Err(e) => return Err(format!("scenario {case} ({}): {e}", sc.name)),
        };
        case += 1;
        da.schedule()
            .check(&sc.generators, sc.reserve_fraction)
            .map_err(|e| format!("scenario {case} ({}): commitment {e}", sc.name))?;
        let series = if sc.storage_units > 0 {
            let f = da.price_forecasts(r.random_range(0.0..20.0)).unwrap();
            Some(da.value_series(&f, &spec, &EngineConfig::default()).map_err(|e| e.to_string())?)
        } else {
            None
        };
        let day = da
            .run(series.as_ref(), &spec, &sc.noise, &day_draws(case as u64, 0, sc.horizon()))
            .map_err(|e| format!("scenario {case} ({}): {e}", sc.name))?;
        for p in &day.periods {
            periods += 1;
            if p.status != ClearingStatus::Normal {
                abnormal += 1;
            }
            ensure!(p.balance_residual_mw.abs() <= 1e-6, "scenario {case} period {}: residual {}", p.period, p.balance_residual_mw);
            ensure!(
                p.soc_mwh >= 0.0 && p.soc_mwh <= spec.energy_mwh(),
                "scenario {case} period {}: SoC {}",
                p.period,
                p.soc_mwh
            );
            ensure!(
                !(p.discharge_mw > 0.0 && p.charge_mw > 0.0),
                "scenario {case} period {}: charging and discharging",
                p.period
            );
        }
    }
    Ok(format!(
        "50 scenarios ({rejected} infeasible draws skipped), {periods} periods balanced ({abnormal} scarcity/surplus)"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("oracle equivalence", c1_oracle_equivalence),
        ("value function concavity", c2_concavity),
        ("monotone bid curves", c3_monotone_bids),
        ("constant deterministic baseline", c4_baseline),
        ("bid grows with forecast deviation", c5_sigma_trend),
        ("deviation floor", c6_sigma_floor),
        ("price-cap bound dominance and tightness", c7_bound),
        ("expectation-cap bound limit", c8_cap_limit),
        ("spike construction", c9_spike),
        ("price slope of the quadratic system", c10_slope),
        ("welfare alignment", c11_welfare),
        ("simulator hygiene", c12_hygiene),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
