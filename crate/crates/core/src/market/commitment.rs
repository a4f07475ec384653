use serde::{Deserialize, Serialize};

use crate::engine::{backward_induction, best_action, EngineConfig};
use crate::distribution::PriceDistribution;
use crate::error::{Error, Result};
use crate::model::StorageSpec;
use crate::value::ValueFunction;

use super::clearing::{clear_rtm, ClearingStatus};
use super::generator::GeneratorSpec;
use super::scenario::Scenario;
use super::supply::{aggregate_supply, SupplyCurve};

/// Day-ahead commitment and dispatch; vectors are indexed `[generator][period]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommitmentSchedule {
    pub status: Vec<Vec<bool>>,
    pub startup: Vec<Vec<bool>>,
    pub shutdown: Vec<Vec<bool>>,
    pub dispatch: Vec<Vec<f64>>,
    pub reserve: Vec<Vec<f64>>,
    /// Scheduled wind per period (after any curtailment).
    pub wind: Vec<f64>,
    /// Day-ahead net load served by thermal units and storage.
    pub net_load: Vec<f64>,
    /// Day-ahead storage fleet injection per period (discharge minus charge).
    pub storage_injection: Vec<f64>,
    pub prices: Vec<f64>,
    /// Generation, no-load and start-up cost of the heuristic schedule.
    pub heuristic_cost: f64,
    /// Cost of the relaxed dispatch (no minimum output, no commitment costs).
    pub relaxed_lower_bound: f64,
}

impl CommitmentSchedule {
    pub fn horizon(&self) -> usize {
        self.prices.len()
    }

    /// Relative optimality gap of the heuristic against the relaxed bound.
    pub fn gap(&self) -> f64 {
        (self.heuristic_cost - self.relaxed_lower_bound) / self.heuristic_cost.abs().max(1.0)
    }

    /// Checks logic, minimum up/down, capacity, ramp and reserve constraints.
    pub fn check(&self, fleet: &[GeneratorSpec], reserve_fraction: f64) -> Result<()> {
        let horizon = self.horizon();
        let tol = 1e-6;
        for (i, g) in fleet.iter().enumerate() {
            let u = &self.status[i];
            for t in 0..horizon {
                let prev = if t == 0 { g.initially_on } else { u[t - 1] };
                let (y, z) = (self.startup[i][t], self.shutdown[i][t]);
                if (y as i32 - z as i32) != (u[t] as i32 - prev as i32) || (y && z) {
                    return Err(Error::Infeasible(format!("{}: start/stop logic broken in period {}", g.name, t + 1)));
                }
                let d = self.dispatch[i][t];
                if u[t] {
                    if d < g.min_mw - tol || d > g.max_mw + tol {
                        return Err(Error::Infeasible(format!("{}: output {d} outside limits in period {}", g.name, t + 1)));
                    }
                } else if d.abs() > tol {
                    return Err(Error::Infeasible(format!("{}: offline unit produces {d} MW", g.name)));
                }
                if t > 0 && u[t] && u[t - 1] && (d - self.dispatch[i][t - 1]).abs() > g.ramp_mw + tol {
                    return Err(Error::Infeasible(format!("{}: ramp exceeded in period {}", g.name, t + 1)));
                }
                let r = self.reserve[i][t];
                let room = if u[t] { (g.max_mw - d).min(g.ramp_mw) } else { 0.0 };
                if r < -tol || r > room + tol {
                    return Err(Error::Infeasible(format!("{}: reserve {r} exceeds headroom {room}", g.name)));
                }
                if y {
                    let end = (t + g.min_up).min(horizon);
                    if u[t..end].iter().any(|x| !x) {
                        return Err(Error::Infeasible(format!("{}: minimum up time violated from period {}", g.name, t + 1)));
                    }
                }
                if z {
                    let off = u[t..].iter().take_while(|x| !**x).count();
                    if t + off < horizon && off < g.min_down {
                        return Err(Error::Infeasible(format!(
                            "{}: minimum down time violated from period {}",
                            g.name,
                            t + 1
                        )));
                    }
                }
            }
        }
        for t in 0..horizon {
            let total: f64 = self.reserve.iter().map(|r| r[t]).sum();
            if total < reserve_fraction * self.wind[t] - tol {
                return Err(Error::Infeasible(format!("reserve short in period {}", t + 1)));
            }
        }
        Ok(())
    }
}

/// Enforce minimum up and down times by only switching units on.
fn repair_min_times(u: &mut [bool], g: &GeneratorSpec) {
    let horizon = u.len();
    loop {
        let mut changed = false;
        let mut prev = g.initially_on;
        let mut t = 0;
        while t < horizon {
            if u[t] && !prev {
                for x in u.iter_mut().take((t + g.min_up).min(horizon)).skip(t) {
                    if !*x {
                        *x = true;
                        changed = true;
                    }
                }
            } else if !u[t] && prev {
                let mut end = t;
                while end < horizon && !u[end] {
                    end += 1;
                }
                if end < horizon && end - t < g.min_down {
                    for x in &mut u[t..end] {
                        *x = true;
                    }
                    changed = true;
                }
            }
            prev = u[t];
            t += 1;
        }
        if !changed {
            break;
        }
    }
}

struct DispatchOutcome {
    dispatch: Vec<Vec<f64>>,
    wind: Vec<f64>,
    prices: Vec<f64>,
    /// Periods needing another unit, with energy or reserve shortfall (MW).
    short: Vec<(usize, f64)>,
    overgenerated: Vec<usize>,
}

fn dispatch_day(
    scenario: &Scenario,
    status: &[Vec<bool>],
    startup: &[Vec<bool>],
    storage: &[f64],
) -> Result<DispatchOutcome> {
    let fleet = &scenario.generators;
    let horizon = scenario.horizon();
    let n = fleet.len();
    let shell = CommitmentSchedule {
        status: status.to_vec(),
        startup: startup.to_vec(),
        shutdown: vec![vec![false; horizon]; n],
        dispatch: Vec::new(),
        reserve: Vec::new(),
        wind: Vec::new(),
        net_load: vec![0.0; horizon],
        storage_injection: Vec::new(),
        prices: vec![0.0; horizon],
        heuristic_cost: 0.0,
        relaxed_lower_bound: 0.0,
    };
    let mut dispatch = vec![vec![0.0; horizon]; n];
    let mut wind = vec![0.0; horizon];
    let mut prices = vec![0.0; horizon];
    let mut short = Vec::new();
    let mut overgenerated = Vec::new();
    let mut prev: Vec<f64> = vec![0.0; n];
    for t in 0..horizon {
        let supply = aggregate_supply(&shell, fleet, t, if t > 0 { Some(&prev) } else { None })?;
        let w_hat = scenario.wind_forecast(t);
        let nd = (scenario.load_mw[t] - w_hat - storage[t]).max(0.0);
        let r = clear_rtm(&supply, &[], &[], nd, scenario.price_limits)?;
        let mut w = w_hat;
        match r.status {
            ClearingStatus::Normal => {}
            ClearingStatus::Scarcity { shortfall_mw } => short.push((t, shortfall_mw)),
            ClearingStatus::Surplus { excess_mw } => {
                w = (w_hat - excess_mw).max(0.0);
                if excess_mw > w_hat + 1e-9 {
                    overgenerated.push(t);
                }
            }
        }
        let mut g_t = vec![0.0; n];
        for (unit, g) in supply.units().iter().zip(&r.generator_dispatch) {
            g_t[unit.generator] = *g;
        }
        let headroom: f64 = supply
            .units()
            .iter()
            .map(|u| (fleet[u.generator].max_mw - g_t[u.generator]).min(fleet[u.generator].ramp_mw).max(0.0))
            .sum();
        let need = scenario.reserve_fraction * w;
        if headroom < need - 1e-9 && !short.iter().any(|s| s.0 == t) {
            short.push((t, need - headroom));
        }
        for i in 0..n {
            dispatch[i][t] = g_t[i];
        }
        wind[t] = w;
        prices[t] = r.price;
        prev = g_t;
    }
    Ok(DispatchOutcome { dispatch, wind, prices, short, overgenerated })
}

fn logic_from_status(status: &[Vec<bool>], fleet: &[GeneratorSpec]) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
    let mut y = Vec::with_capacity(status.len());
    let mut z = Vec::with_capacity(status.len());
    for (u, g) in status.iter().zip(fleet) {
        let mut prev = g.initially_on;
        let mut yi = Vec::with_capacity(u.len());
        let mut zi = Vec::with_capacity(u.len());
        for &x in u {
            yi.push(x && !prev);
            zi.push(!x && prev);
            prev = x;
        }
        y.push(yi);
        z.push(zi);
    }
    (y, z)
}

/// Priority-list unit commitment: units ranked by average cost at full
/// output are committed until net load plus reserve is covered, minimum
/// up/down times are repaired, and the day is dispatched economically with
/// ramp limits. Day-ahead prices are the marginal cost of that dispatch.
pub fn commit_dam(scenario: &Scenario, storage_spec: Option<&StorageSpec>) -> Result<CommitmentSchedule> {
    scenario.validate()?;
    let fleet = &scenario.generators;
    let horizon = scenario.horizon();
    let n = fleet.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| fleet[*a].average_cost_at_max().total_cmp(&fleet[*b].average_cost_at_max()));

    let total_cap: f64 = fleet.iter().map(|g| g.max_mw).sum();
    let mut status = vec![vec![false; horizon]; n];
    let mut infeasible = Vec::new();
    for t in 0..horizon {
        let w = scenario.wind_forecast(t);
        let need = (scenario.load_mw[t] - w).max(0.0) + scenario.reserve_fraction * w;
        if need > total_cap + 1e-9 {
            infeasible.push(t + 1);
            continue;
        }
        let mut cap = 0.0;
        for &i in &order {
            if cap >= need {
                break;
            }
            status[i][t] = true;
            cap += fleet[i].max_mw;
        }
    }
    if !infeasible.is_empty() {
        return Err(Error::Infeasible(format!(
            "fleet cannot cover net load plus reserve in periods {infeasible:?}"
        )));
    }

    let mut storage = vec![0.0; horizon];
    let mut storage_done = false;
    let mut iterations = 0;
    let outcome = loop {
        iterations += 1;
        for (u, g) in status.iter_mut().zip(fleet) {
            repair_min_times(u, g);
        }
        let (y, _) = logic_from_status(&status, fleet);
        let out = dispatch_day(scenario, &status, &y, &storage)?;
        let mut added = false;
        for &(t, _) in &out.short {
            if let Some(&i) = order.iter().find(|&&i| !status[i][t]) {
                status[i][t] = true;
                added = true;
            }
        }
        if !out.short.is_empty() && !added {
            let periods: Vec<usize> = out.short.iter().map(|s| s.0 + 1).collect();
            return Err(Error::Infeasible(format!(
                "energy or reserve shortfall with every unit committed in periods {periods:?}"
            )));
        }
        if iterations > n * horizon + 2 {
            return Err(Error::Infeasible("commitment repair did not settle".into()));
        }
        if added {
            continue;
        }
        if !out.overgenerated.is_empty() {
            let periods: Vec<usize> = out.overgenerated.iter().map(|t| t + 1).collect();
            return Err(Error::Infeasible(format!("minimum generation exceeds load in periods {periods:?}")));
        }
        match storage_spec {
            Some(spec) if scenario.storage_in_day_ahead && scenario.storage_units > 0 && !storage_done => {
                storage = deterministic_storage(&out.prices, spec, scenario)?;
                storage_done = true;
            }
            _ => break out,
        }
    };

    let (startup, shutdown) = logic_from_status(&status, fleet);
    let mut reserve = vec![vec![0.0; horizon]; n];
    for t in 0..horizon {
        let need = scenario.reserve_fraction * outcome.wind[t];
        let mut room: Vec<(usize, f64)> = (0..n)
            .filter(|i| status[*i][t])
            .map(|i| (i, (fleet[i].max_mw - outcome.dispatch[i][t]).min(fleet[i].ramp_mw).max(0.0)))
            .collect();
        let total: f64 = room.iter().map(|r| r.1).sum();
        if total > 0.0 {
            let share = (need / total).min(1.0);
            for (i, r) in room.drain(..) {
                reserve[i][t] = share * r;
            }
        }
    }

    let mut heuristic_cost = 0.0;
    for (i, g) in fleet.iter().enumerate() {
        for t in 0..horizon {
            if status[i][t] {
                heuristic_cost += g.cost(outcome.dispatch[i][t]) + g.no_load_cost;
            }
            if startup[i][t] {
                heuristic_cost += g.startup_cost;
            }
        }
    }
    if let Some(spec) = storage_spec {
        heuristic_cost += storage.iter().map(|s| spec.discharge_cost() * s.max(0.0)).sum::<f64>();
    }
    let relaxed = SupplyCurve::from_fleet(fleet, true)?;
    let mut relaxed_lower_bound = 0.0;
    for t in 0..horizon {
        let nd = (scenario.load_mw[t] - scenario.wind_forecast(t)).max(0.0);
        let r = clear_rtm(&relaxed, &[], &[], nd, scenario.price_limits)?;
        relaxed_lower_bound += relaxed
            .units()
            .iter()
            .zip(&r.generator_dispatch)
            .map(|(u, g)| u.cost(*g))
            .sum::<f64>();
    }

    let net_load = (0..horizon)
        .map(|t| (scenario.load_mw[t] - outcome.wind[t] - storage[t]).max(0.0))
        .collect();
    Ok(CommitmentSchedule {
        status,
        startup,
        shutdown,
        dispatch: outcome.dispatch,
        reserve,
        wind: outcome.wind,
        net_load,
        storage_injection: storage,
        prices: outcome.prices,
        heuristic_cost,
        relaxed_lower_bound,
    })
}

/// Fleet injection of storage arbitraging known day-ahead prices.
fn deterministic_storage(prices: &[f64], spec: &StorageSpec, scenario: &Scenario) -> Result<Vec<f64>> {
    let forecasts = prices
        .iter()
        .map(|p| PriceDistribution::point_mass(*p))
        .collect::<Result<Vec<_>>>()?;
    let end = ValueFunction::linear(spec.energy_mwh(), scenario.end_value_slope, 2)?;
    let series = backward_induction(&end, &forecasts, spec, &EngineConfig::default())?;
    let mut soc = scenario.initial_soc_mwh.min(spec.energy_mwh());
    let mut out = Vec::with_capacity(prices.len());
    for (t, p) in prices.iter().enumerate() {
        let a = best_action(series.at(t + 1)?, soc, *p, spec);
        soc = a.soc_after;
        out.push(scenario.storage_units as f64 * (a.discharge_mw - a.charge_mw));
    }
    Ok(out)
}
