use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::distribution::PriceDistribution;
use crate::error::{Error, Result};
use crate::model::StorageSpec;
use crate::value::{ValueFunction, CONCAVITY_TOL};

/// How `E[Q(e | price)]` is evaluated for continuous forecasts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationMethod {
    /// Exact integration of the piecewise-linear integrand.
    #[default]
    Analytic,
    /// Gauss-Legendre quadrature on the effective support.
    GaussLegendre { nodes: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Uniform SoC grid size used for every value function in a series.
    pub soc_points: usize,
    pub expectation: ExpectationMethod,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { soc_points: 1001, expectation: ExpectationMethod::Analytic }
    }
}

/// Optimal single-period move from `soc_before` at a known price.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Action {
    pub soc_before: f64,
    pub soc_after: f64,
    pub discharge_mw: f64,
    pub charge_mw: f64,
    /// Period profit plus continuation value.
    pub value: f64,
}

/// Value functions `V_0 ..= V_T`; `V_T` is the end value and the bid for
/// period `t` is read from `V_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueSeries {
    functions: Vec<ValueFunction>,
}

impl ValueSeries {
    pub fn horizon(&self) -> usize {
        self.functions.len() - 1
    }

    pub fn at(&self, t: usize) -> Result<&ValueFunction> {
        self.functions
            .get(t)
            .ok_or_else(|| Error::invalid(format!("period {t} beyond horizon {}", self.horizon())))
    }

    pub fn end_value(&self) -> &ValueFunction {
        &self.functions[self.functions.len() - 1]
    }

    pub fn functions(&self) -> &[ValueFunction] {
        &self.functions
    }

    /// Writes `period,soc_mwh,value,marginal_value` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["period", "soc_mwh", "value", "marginal_value"])?;
        for (t, vf) in self.functions.iter().enumerate() {
            for (e, v) in vf.breakpoints().iter().zip(vf.values()) {
                let m = vf.marginal_value(*e)?;
                w.write_record([t.to_string(), e.to_string(), v.to_string(), m.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Best target SoC at a known price, given the next-period value function.
pub fn best_action(next: &ValueFunction, soc: f64, price: f64, spec: &StorageSpec) -> Action {
    let tau = spec.step_hours();
    let eta = spec.efficiency();
    let c = spec.discharge_cost();
    let cap = next.capacity();
    let e = soc.clamp(0.0, cap);
    let x = next.breakpoints();
    let s = next.slopes();
    let n = s.len();

    if e < cap {
        let e_hi = (e + spec.charge_increment()).min(cap);
        let r = next.segment_right_of(e);
        let j = r + s[r..].partition_point(|sj| tau * eta * sj >= price);
        let y = if j == n { cap } else { x[j].max(e) }.min(e_hi);
        if y > e {
            let charge = (y - e) / (tau * eta);
            return Action {
                soc_before: e,
                soc_after: y,
                discharge_mw: 0.0,
                charge_mw: charge,
                value: next.value_at(y) - price * charge,
            };
        }
    }
    if e > 0.0 && price >= 0.0 {
        let e_lo = (e - spec.discharge_decrement()).max(0.0);
        let l = next.segment_left_of(e);
        let thr = (price - c) * eta / tau;
        let k = s[..=l].partition_point(|sj| *sj > thr);
        let y = if k == 0 { e_lo } else { x[k].max(e_lo) }.min(e);
        if y < e {
            let discharge = (e - y) * eta / tau;
            return Action {
                soc_before: e,
                soc_after: y,
                discharge_mw: discharge,
                charge_mw: 0.0,
                value: next.value_at(y) + (price - c) * discharge,
            };
        }
    }
    Action { soc_before: e, soc_after: e, discharge_mw: 0.0, charge_mw: 0.0, value: next.value_at(e) }
}

/// Marginal value of energy at empty storage after one period at `price`,
/// given the next-period marginal values at a full charge step and at zero.
pub fn q_zero_soc(price: f64, v_next_full_charge: f64, v_next_zero: f64, spec: &StorageSpec) -> Result<f64> {
    if !(price.is_finite() && v_next_full_charge.is_finite() && v_next_zero.is_finite()) {
        return Err(Error::invalid("inputs must be finite"));
    }
    if v_next_full_charge > v_next_zero {
        return Err(Error::invalid(format!(
            "marginal value rises from {v_next_zero} to {v_next_full_charge}; the value function must be concave"
        )));
    }
    let tau = spec.step_hours();
    let eta = spec.efficiency();
    let c = spec.discharge_cost();
    let q = if price <= tau * eta * v_next_full_charge {
        v_next_full_charge
    } else if price <= tau * eta * v_next_zero {
        price / (tau * eta)
    } else if price <= (c + tau * v_next_zero / eta).max(0.0) {
        v_next_zero
    } else {
        (price - c) * eta / tau
    };
    Ok(q)
}

fn check_capacity(vf: &ValueFunction, spec: &StorageSpec) -> Result<()> {
    let e = spec.energy_mwh();
    if (vf.capacity() - e).abs() > 1e-9 * e.max(1.0) {
        return Err(Error::invalid(format!(
            "value function spans [0, {}] but storage capacity is {e}",
            vf.capacity()
        )));
    }
    Ok(())
}

/// One backward step: `V_{t-1}(e) = E[max_target ...]` on the breakpoints of `next`.
pub fn bellman_step(
    next: &ValueFunction,
    dist: &PriceDistribution,
    spec: &StorageSpec,
    method: ExpectationMethod,
) -> Result<ValueFunction> {
    check_capacity(next, spec)?;
    let x = next.breakpoints();
    let values: Vec<f64> = if let Some(atoms) = dist.atoms() {
        x.iter()
            .map(|&e| atoms.iter().map(|(l, p)| p * best_action(next, e, *l, spec).value).sum())
            .collect()
    } else {
        match method {
            ExpectationMethod::Analytic => analytic_expectation(next, dist, spec),
            ExpectationMethod::GaussLegendre { nodes } => quadrature_expectation(next, dist, spec, nodes)?,
        }
    };
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "expected value at SoC {} is not finite ({:?} forecast, mean {}, sd {})",
            x[i],
            dist.kind(),
            dist.mean(),
            dist.std_dev()
        )));
    }
    ValueFunction::unchecked(x.to_vec(), values)
}

/// Equal panels across the band of action thresholds.
const BAND_PANELS: usize = 4;

fn quadrature_expectation(
    next: &ValueFunction,
    dist: &PriceDistribution,
    spec: &StorageSpec,
    nodes: usize,
) -> Result<Vec<f64>> {
    let n = NonZeroUsize::new(nodes).ok_or_else(|| Error::invalid("quadrature needs at least one node"))?;
    let rule = GaussLegendre::new(n);
    let (a, b) = dist.effective_support();
    // the integrand is linear in price outside the band of action thresholds,
    // so the tails get one panel each and the kinked band several
    let tau = spec.step_hours();
    let eta = spec.efficiency();
    let c = spec.discharge_cost();
    let mut k_lo = 0.0f64;
    let mut k_hi = 0.0f64;
    for sj in next.slopes() {
        for th in [tau * eta * sj, (c + tau * sj / eta).max(0.0)] {
            k_lo = k_lo.min(th);
            k_hi = k_hi.max(th);
        }
    }
    let mut edges = vec![a];
    for k in 0..=BAND_PANELS {
        let p = k_lo + (k_hi - k_lo) * k as f64 / BAND_PANELS as f64;
        if p > *edges.last().unwrap() && p < b {
            edges.push(p);
        }
    }
    edges.push(b);
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(nodes * (edges.len() - 1));
    for w in edges.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        let mid = 0.5 * (w[0] + w[1]);
        pts.extend(rule.as_node_weight_pairs().iter().map(|(z, wt)| {
            let l = mid + half * z;
            (l, wt * half * dist.density(l))
        }));
    }
    let mass: f64 = pts.iter().map(|p| p.1).sum();
    if !((mass - 1.0).abs() <= 1e-6) {
        return Err(Error::Numerical(format!(
            "quadrature with {nodes} nodes on [{a}, {b}] captures probability {mass}, off by more than 1e-6"
        )));
    }
    Ok(next
        .breakpoints()
        .iter()
        .map(|&e| pts.iter().map(|(l, w)| w * best_action(next, e, *l, spec).value).sum())
        .collect())
}

/// Exact expectation for continuous forecasts: for each SoC the optimal
/// target is piecewise constant in price with breakpoints at fixed
/// thresholds, so each piece integrates through the CDF and the partial mean.
fn analytic_expectation(next: &ValueFunction, dist: &PriceDistribution, spec: &StorageSpec) -> Vec<f64> {
    let tau = spec.step_hours();
    let eta = spec.efficiency();
    let c = spec.discharge_cost();
    let x = next.breakpoints();
    let v = next.values();
    let s = next.slopes();
    let cap = next.capacity();
    let dc = spec.charge_increment();
    let dd = spec.discharge_decrement();

    let charge_at: Vec<(f64, f64)> = s.iter().map(|sj| dist.lower_moments(tau * eta * sj)).collect();
    let discharge_at: Vec<(f64, f64)> =
        s.iter().map(|sj| dist.lower_moments((c + tau * sj / eta).max(0.0))).collect();
    let total = (1.0, dist.mean());

    x.iter()
        .enumerate()
        .map(|(i, &e)| {
            let mut acc = 0.0;
            let mut prev = (0.0, 0.0);
            // a + b * price on the price range ending at `upto`
            let mut piece = |a: f64, b: f64, upto: (f64, f64)| {
                acc += a * (upto.0 - prev.0) + b * (upto.1 - prev.1);
                prev = upto;
            };
            let charge = |y: f64, vy: f64| (vy, -(y - e) / (tau * eta));
            let discharge = |y: f64, vy: f64| {
                let k = (e - y) * eta / tau;
                (vy - c * k, k)
            };

            if e < cap {
                let e_hi = (e + dc).min(cap);
                let m = x.partition_point(|xj| *xj < e_hi) - 1;
                let (a, b) = charge(e_hi, next.value_at(e_hi));
                piece(a, b, charge_at[m]);
                for j in (i + 1..=m).rev() {
                    let (a, b) = charge(x[j], v[j]);
                    piece(a, b, charge_at[j - 1]);
                }
            }
            if e > 0.0 {
                let e_lo = (e - dd).max(0.0);
                let l = x.partition_point(|xj| *xj <= e_lo).saturating_sub(1).min(i - 1);
                piece(v[i], 0.0, discharge_at[i - 1]);
                for j in (l + 1..i).rev() {
                    let (a, b) = discharge(x[j], v[j]);
                    piece(a, b, discharge_at[j - 1]);
                }
                let (a, b) = discharge(e_lo, next.value_at(e_lo));
                piece(a, b, total);
            } else {
                piece(v[i], 0.0, total);
            }
            acc
        })
        .collect()
}

/// Runs the Bellman recursion from `end_value` back over `forecasts`
/// (`forecasts[t - 1]` is the price forecast for period `t`).
pub fn backward_induction(
    end_value: &ValueFunction,
    forecasts: &[PriceDistribution],
    spec: &StorageSpec,
    config: &EngineConfig,
) -> Result<ValueSeries> {
    if forecasts.is_empty() {
        return Err(Error::invalid("forecast horizon is empty"));
    }
    check_capacity(end_value, spec)?;
    let horizon = forecasts.len();
    let mut functions = Vec::with_capacity(horizon + 1);
    functions.push(end_value.resample(config.soc_points)?);
    for t in (1..=horizon).rev() {
        let next = &functions[functions.len() - 1];
        let vf = bellman_step(next, &forecasts[t - 1], spec, config.expectation).map_err(|e| e.at_period(t))?;
        let worst = vf.concavity_violation();
        let scale = 1.0 + vf.slopes().iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        if worst > 1e2 * CONCAVITY_TOL * scale {
            return Err(Error::Numerical(format!(
                "value function before period {t} lost concavity (slope rises by {worst:e})"
            ))
            .at_period(t));
        }
        functions.push(vf);
    }
    functions.reverse();
    Ok(ValueSeries { functions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> StorageSpec {
        StorageSpec::hourly(10.0, 40.0, 0.9, 25.0).unwrap()
    }

    #[test]
    fn zero_soc_cases() {
        let s = spec();
        let v_ec = 20.0;
        let v0 = 40.0;
        assert_eq!(q_zero_soc(10.0, v_ec, v0, &s).unwrap(), 20.0);
        assert!((q_zero_soc(30.0, v_ec, v0, &s).unwrap() - 30.0 / 0.9).abs() < 1e-12);
        assert_eq!(q_zero_soc(60.0, v_ec, v0, &s).unwrap(), 40.0);
        assert!((q_zero_soc(100.0, v_ec, v0, &s).unwrap() - 67.5).abs() < 1e-12);
    }

    #[test]
    fn zero_soc_rejects_convex_input() {
        assert!(q_zero_soc(10.0, 50.0, 40.0, &spec()).is_err());
    }

    #[test]
    fn best_action_discharges_above_threshold() {
        let s = spec();
        let next = ValueFunction::linear(40.0, 20.0, 41).unwrap();
        let a = best_action(&next, 20.0, 100.0, &s);
        assert!((a.discharge_mw - 10.0).abs() < 1e-12);
        let idle = best_action(&next, 20.0, 30.0, &s);
        assert_eq!(idle.soc_after, 20.0);
        let ch = best_action(&next, 20.0, 10.0, &s);
        assert!((ch.charge_mw - 10.0).abs() < 1e-12);
    }

    #[test]
    fn no_discharge_at_negative_price() {
        let s = StorageSpec::hourly(10.0, 40.0, 0.9, 0.0).unwrap();
        let next = ValueFunction::linear(40.0, -50.0, 41).unwrap();
        let a = best_action(&next, 40.0, -1.0, &s);
        assert_eq!(a.discharge_mw, 0.0);
    }

    #[test]
    fn rejects_capacity_mismatch() {
        let next = ValueFunction::linear(30.0, 0.0, 11).unwrap();
        let d = PriceDistribution::point_mass(20.0).unwrap();
        assert!(bellman_step(&next, &d, &spec(), ExpectationMethod::Analytic).is_err());
    }

    #[test]
    fn empty_horizon_rejected() {
        let end = ValueFunction::zero(40.0).unwrap();
        assert!(backward_induction(&end, &[], &spec(), &EngineConfig::default()).is_err());
    }
}
