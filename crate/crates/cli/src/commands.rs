use std::fs::File;
use std::path::Path;

use serde::Serialize;

use storage_bidding::bids::{baseline_bids, bids_from_series, read_bids_csv, write_bids_csv, BidCurve, BidSide};
use storage_bidding::engine::backward_induction;
use storage_bidding::error::{Error, Result};
use storage_bidding::experiments::{
    bounded_sweep, sigma_sweep, slope_check, welfare_sweep, write_bounded_csv, write_sigma_csv,
};
use storage_bidding::market::{clear_rtm, day_draws, DayAhead, SupplyCurve};
use storage_bidding::model::PriceBounds;
use storage_bidding::withholding::{audit_bids, expectation_cap_bound, withholding_bound, BoundBreakdown};

use crate::config::{Config, SweepSection};
use crate::output::{read_config, Sink};
use crate::Common;

fn load(common: &Common) -> Result<(Config, Sink)> {
    let bytes = read_config(&common.config)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Config(format!("config is not UTF-8: {e}")))?;
    let cfg = Config::parse(text)?;
    let sink = Sink::new(&common.out, &bytes, common.seed)?;
    Ok((cfg, sink))
}

pub fn value_fn(common: &Common) -> Result<()> {
    let (cfg, sink) = load(common)?;
    let spec = cfg.storage()?;
    let forecasts = cfg.forecasts()?;
    let series = backward_induction(&cfg.end_value(spec)?, &forecasts, spec, &cfg.engine)?;
    series.write_csv(sink.file("value_function.csv")?)?;
    let v0 = series.at(0)?;
    #[derive(Serialize)]
    struct Summary {
        horizon: usize,
        soc_points: usize,
        value_at_zero: f64,
        marginal_at_zero: f64,
    }
    sink.stamped_json(
        "summary.json",
        &Summary {
            horizon: series.horizon(),
            soc_points: v0.breakpoints().len(),
            value_at_zero: v0.value_at(0.0),
            marginal_at_zero: v0.marginal_value(0.0)?,
        },
    )?;
    if common.emit_plot_data {
        let mut rows = Vec::new();
        for (t, f) in series.functions().iter().enumerate() {
            for (k, e) in f.breakpoints().iter().enumerate() {
                let slope = f.slopes()[k.saturating_sub(1).min(f.slopes().len() - 1)];
                rows.push((t as f64, *e, "marginal_value".to_string(), slope));
            }
        }
        sink.long_csv("plot_marginal_value.csv", ["period", "soc_mwh"], rows)?;
    }
    Ok(())
}

pub fn bids(common: &Common) -> Result<()> {
    let (cfg, sink) = load(common)?;
    let spec = cfg.storage()?;
    let forecasts = cfg.forecasts()?;
    let series = backward_induction(&cfg.end_value(spec)?, &forecasts, spec, &cfg.engine)?;
    let soc = cfg.bids.initial_soc_mwh;
    let k = cfg.bids.segments;
    let curves = bids_from_series(&series, soc, spec, k)?;
    write_bids_csv(&curves, sink.file("bids.csv")?)?;
    let means: Vec<f64> = forecasts.iter().map(|f| f.mean()).collect();
    let base = baseline_bids(&means, spec, cfg.end_marginal(spec)?, soc, k, &cfg.engine)?;
    write_bids_csv(&base, sink.file("baseline_bids.csv")?)?;
    if common.emit_plot_data {
        let mut rows = Vec::new();
        for (label, set) in [("bid", &curves), ("baseline", &base)] {
            for pb in set.iter() {
                for curve in [&pb.discharge, &pb.charge] {
                    let mut q = 0.0;
                    for s in curve.segments() {
                        q += s.quantity_mw;
                        rows.push((pb.period as f64, q, format!("{label}_{}", curve.side().as_str()), s.price));
                    }
                }
            }
        }
        sink.long_csv("plot_bids.csv", ["period", "cumulative_mw"], rows)?;
    }
    Ok(())
}

fn bound_path(cfg: &Config) -> Result<(Vec<f64>, PriceBounds)> {
    let bounds = cfg.price_bounds()?;
    let means = cfg.forecasts()?.iter().map(|f| f.mean()).collect();
    Ok((means, bounds))
}

pub fn bounds(common: &Common) -> Result<()> {
    let (cfg, sink) = load(common)?;
    let spec = cfg.storage()?;
    let end = cfg.end_marginal(spec)?;
    let (means, b) = bound_path(&cfg)?;
    let rows = (0..means.len())
        .map(|t| withholding_bound(t, &means, b, spec, end))
        .collect::<Result<Vec<BoundBreakdown>>>()?;
    let mut w = csv::Writer::from_writer(sink.file("bounds.csv")?);
    w.write_record(["period", "remaining", "bound", "end_term", "config_hash", "seed", "version"])?;
    for r in &rows {
        w.write_record([
            r.period.to_string(),
            (r.horizon - r.period).to_string(),
            r.bound.to_string(),
            r.end_term.to_string(),
            sink.prov.config_hash.clone(),
            sink.prov.seed.to_string(),
            sink.prov.version.clone(),
        ])?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Report<'a> {
        per_period: &'a [BoundBreakdown],
        expectation_cap: Option<f64>,
    }
    let cap = match &cfg.cap_bound {
        Some(c) => Some(expectation_cap_bound(c.horizon, c.mu_cap, b, spec, c.discount, end)?),
        None => None,
    };
    sink.stamped_json("bounds.json", &Report { per_period: &rows, expectation_cap: cap })?;
    if common.emit_plot_data {
        sink.long_csv(
            "plot_bounds.csv",
            ["period", "mean_price"],
            rows.iter().map(|r| (r.period as f64, means.get(r.period).copied().unwrap_or(f64::NAN), "bound".to_string(), r.bound)),
        )?;
    }
    Ok(())
}

pub fn clear(common: &Common) -> Result<()> {
    let (cfg, sink) = load(common)?;
    let c = cfg.clear()?;
    let supply = SupplyCurve::from_fleet(&c.generators, false)?;
    let limits = match c.limits {
        Some(l) => l,
        None => PriceBounds::new(-150.0, 1000.0)?,
    };
    let r = clear_rtm(&supply, &c.offers, &c.bids, c.net_demand_mw, limits)?;
    sink.stamped_json("clearing.json", &r)?;
    if common.emit_plot_data {
        let mut rows = Vec::new();
        for p in supply.step_prices().chain([limits.floor(), limits.cap(), r.price]) {
            let (lo, hi) = supply.quantity_range(p);
            rows.push((p, lo, "supply_min_mw".to_string(), lo));
            rows.push((p, hi, "supply_max_mw".to_string(), hi));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        sink.long_csv("plot_supply.csv", ["price", "quantity_mw"], rows)?;
    }
    Ok(())
}

pub fn simulate(common: &Common) -> Result<()> {
    let (cfg, sink) = load(common)?;
    let spec = cfg.storage()?;
    let scenario = cfg.scenario()?;
    let da = DayAhead::new(&scenario, spec)?;
    let series = if scenario.storage_units > 0 {
        Some(da.value_series(&da.price_forecasts(cfg.simulate.forecast_sigma)?, spec, &cfg.engine)?)
    } else {
        None
    };
    let noise = match cfg.simulate.demand_sigma {
        Some(s) => scenario.noise.with_scale(s),
        None => scenario.noise,
    };
    let day = da.run(series.as_ref(), spec, &noise, &day_draws(common.seed, 0, scenario.horizon()))?;
    day.write_csv(sink.file("day.csv")?)?;
    sink.stamped_json("commitment.json", da.schedule())?;
    #[derive(Serialize)]
    struct Summary {
        scenario: String,
        system_cost: f64,
        commitment_cost: f64,
        storage_profit: f64,
        unserved_mwh: f64,
        curtailed_mwh: f64,
        overgeneration_mwh: f64,
        commitment_gap: f64,
    }
    sink.stamped_json(
        "summary.json",
        &Summary {
            scenario: scenario.name.clone(),
            system_cost: day.system_cost,
            commitment_cost: day.commitment_cost,
            storage_profit: day.storage_profit,
            unserved_mwh: day.unserved_mwh,
            curtailed_mwh: day.curtailed_mwh,
            overgeneration_mwh: day.overgeneration_mwh,
            commitment_gap: da.schedule().gap(),
        },
    )?;
    if common.emit_plot_data {
        let mut rows = Vec::new();
        for p in &day.periods {
            let t = p.period as f64;
            for (m, v) in [
                ("price", p.price),
                ("day_ahead_price", da.schedule().prices[p.period - 1]),
                ("net_demand_mw", p.net_demand_mw),
                ("soc_mwh", p.soc_mwh),
                ("storage_net_mw", p.discharge_mw - p.charge_mw),
            ] {
                rows.push((t, 0.0, m.to_string(), v));
            }
        }
        sink.long_csv("plot_day.csv", ["period", "unit"], rows)?;
    }
    Ok(())
}

pub fn sweep(common: &Common) -> Result<()> {
    let (cfg, sink) = load(common)?;
    match cfg.sweep()? {
        SweepSection::Sigma { mu, sigmas, horizon } => {
            let spec = cfg.storage()?;
            let rows = sigma_sweep(*mu, sigmas, spec, *horizon, &cfg.engine)?;
            write_sigma_csv(&rows, sink.file("sigma_sweep.csv")?, &sink.prov)?;
            if common.emit_plot_data {
                sink.long_csv("plot_sigma_sweep.csv", ["sigma", "mu"], rows.iter().map(|r| (r.sigma, *mu, "bid".to_string(), r.bid)))?;
            }
        }
        SweepSection::Bounded { mu_path, sigmas } => {
            let spec = cfg.storage()?;
            let rows = bounded_sweep(mu_path, cfg.price_bounds()?, sigmas, spec, &cfg.engine)?;
            write_bounded_csv(&rows, sink.file("bounded_sweep.csv")?, &sink.prov)?;
            if common.emit_plot_data {
                let pts = rows.iter().flat_map(|r| {
                    [(r.sigma, 0.0, "bid".to_string(), r.bid), (r.sigma, 0.0, "bound".to_string(), r.bound)]
                });
                sink.long_csv("plot_bounded_sweep.csv", ["sigma", "unit"], pts)?;
            }
        }
        SweepSection::Welfare { demand_sigmas, forecast_sigmas, draws } => {
            let spec = cfg.storage()?;
            let scenario = cfg.scenario()?;
            let res = welfare_sweep(&scenario, spec, demand_sigmas, forecast_sigmas, *draws, common.seed, &cfg.engine)?;
            res.write_csv(sink.file("welfare_sweep.csv")?, &sink.prov)?;
            #[derive(Serialize)]
            struct Summary<'a> {
                cost_argmin_row_per_column: Vec<usize>,
                profit_argmax_row_per_column: Vec<usize>,
                diagonal_rank_correlation: f64,
                result: &'a storage_bidding::experiments::SweepResult,
            }
            sink.stamped_json(
                "welfare_summary.json",
                &Summary {
                    cost_argmin_row_per_column: res.column_cost_argmin(),
                    profit_argmax_row_per_column: res.column_profit_argmax(),
                    diagonal_rank_correlation: res.diagonal_correlation(),
                    result: &res,
                },
            )?;
            if common.emit_plot_data {
                let mut rows = Vec::new();
                for (i, fs) in res.forecast_sigmas.iter().enumerate() {
                    for (j, ds) in res.demand_sigmas.iter().enumerate() {
                        rows.push((*ds, *fs, "mean_cost".to_string(), res.cost[i][j]));
                        rows.push((*ds, *fs, "mean_profit".to_string(), res.profit[i][j]));
                    }
                }
                sink.long_csv("heatmap.csv", ["demand_sigma", "forecast_sigma"], rows)?;
            }
        }
        SweepSection::Slope { clearings, shape } => {
            let spec = cfg.storage()?;
            let scenario = cfg.scenario()?;
            let fit = slope_check(&scenario, spec, *clearings, *shape, common.seed)?;
            sink.stamped_json("slope.json", &fit)?;
        }
    }
    Ok(())
}

fn submitted(cfg: &Config, config_path: &Path) -> Result<Vec<storage_bidding::bids::PeriodBids>> {
    let a = cfg.audit()?;
    match &a.bids_csv {
        Some(p) => {
            let path = config_path.parent().unwrap_or(Path::new(".")).join(p);
            let f = File::open(&path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
            read_bids_csv(f)
        }
        None if !a.submitted.is_empty() => Ok(a.submitted.clone()),
        None => Err(Error::Config("audit needs 'submitted' curves or 'bids_csv'".into())),
    }
}

pub fn audit(common: &Common) -> Result<()> {
    let (cfg, sink) = load(common)?;
    let spec = cfg.storage()?;
    let a = cfg.audit()?;
    let end = cfg.end_marginal(spec)?;
    let (means, b) = bound_path(&cfg)?;
    let curves = submitted(&cfg, &common.config)?;
    let base = baseline_bids(&means, spec, end, a.soc_mwh, cfg.bids.segments, &cfg.engine)?;
    let mut reports = Vec::new();
    for pb in &curves {
        if pb.period == 0 || pb.period > means.len() {
            return Err(Error::Config(format!("submitted period {} outside 1..={}", pb.period, means.len())));
        }
        let bound = withholding_bound(pb.period, &means, b, spec, end)?;
        let reference = &base[pb.period - 1];
        for (curve, side) in [(&pb.discharge, BidSide::Discharge), (&pb.charge, BidSide::Charge)] {
            if curve.is_empty() {
                continue;
            }
            let baseline = match side {
                BidSide::Discharge => reference.discharge.clone(),
                BidSide::Charge => reference.charge.clone(),
            };
            let baseline = if baseline.is_empty() { BidCurve::empty(side) } else { baseline };
            reports.push(audit_bids(curve, &baseline, &bound, a.tolerance)?);
        }
    }
    let mut w = csv::Writer::from_writer(sink.file("audit.csv")?);
    w.write_record([
        "period",
        "side",
        "bound",
        "max_markup",
        "withheld_mw",
        "above_baseline",
        "above_bound",
        "config_hash",
        "seed",
        "version",
    ])?;
    for r in &reports {
        w.write_record([
            r.period.to_string(),
            r.side.as_str().to_string(),
            r.bound.to_string(),
            r.max_markup.to_string(),
            r.withheld_mw.to_string(),
            r.above_baseline.to_string(),
            r.above_bound.to_string(),
            sink.prov.config_hash.clone(),
            sink.prov.seed.to_string(),
            sink.prov.version.clone(),
        ])?;
    }
    w.flush()?;
    sink.stamped_json("audit.json", &reports)?;
    if common.emit_plot_data {
        let mut rows = Vec::new();
        for r in &reports {
            for s in &r.segments {
                let m = format!("{}_submitted", r.side.as_str());
                rows.push((r.period as f64, s.segment as f64, m, s.submitted));
                if let Some(bp) = s.baseline {
                    rows.push((r.period as f64, s.segment as f64, format!("{}_baseline", r.side.as_str()), bp));
                }
            }
        }
        sink.long_csv("plot_audit.csv", ["period", "segment"], rows)?;
    }
    Ok(())
}
