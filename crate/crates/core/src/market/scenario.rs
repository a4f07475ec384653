use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PriceBounds;

use super::generator::GeneratorSpec;

/// Real-time deviation of net demand from its day-ahead value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetDemandNoise {
    /// `nd = max(0, nd_da + sigma z)`.
    Absolute { sigma_mw: f64 },
    /// Wind deviates by `ratio * forecast * z`.
    WindProportional { ratio: f64 },
}

impl Default for NetDemandNoise {
    fn default() -> Self {
        NetDemandNoise::Absolute { sigma_mw: 0.0 }
    }
}

impl NetDemandNoise {
    /// Same noise family with its scale replaced.
    pub fn with_scale(&self, scale: f64) -> Self {
        match self {
            NetDemandNoise::Absolute { .. } => NetDemandNoise::Absolute { sigma_mw: scale },
            NetDemandNoise::WindProportional { .. } => NetDemandNoise::WindProportional { ratio: scale },
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            NetDemandNoise::Absolute { sigma_mw } => *sigma_mw,
            NetDemandNoise::WindProportional { ratio } => *ratio,
        }
    }
}

fn default_limits() -> PriceBounds {
    PriceBounds::new(-150.0, 1000.0).expect("static bounds")
}

fn default_segments() -> usize {
    10
}

fn default_reserve() -> f64 {
    0.2
}

/// One operating day: load and wind paths, thermal fleet, storage fleet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub load_mw: Vec<f64>,
    /// Day-ahead wind forecast; empty means no wind.
    #[serde(default)]
    pub wind_forecast_mw: Vec<f64>,
    /// Realized wind availability before noise; defaults to the forecast.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wind_capacity_mw: Option<Vec<f64>>,
    pub generators: Vec<GeneratorSpec>,
    /// Number of identical storage units bidding in real time.
    #[serde(default)]
    pub storage_units: usize,
    #[serde(default)]
    pub storage_in_day_ahead: bool,
    #[serde(default = "default_limits")]
    pub price_limits: PriceBounds,
    #[serde(default)]
    pub noise: NetDemandNoise,
    #[serde(default)]
    pub initial_soc_mwh: f64,
    #[serde(default = "default_segments")]
    pub bid_segments: usize,
    /// Marginal value of energy left at the end of the day.
    #[serde(default)]
    pub end_value_slope: f64,
    /// Reserve requirement as a share of scheduled wind.
    #[serde(default = "default_reserve")]
    pub reserve_fraction: f64,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.load_mw.len()
    }

    pub fn wind_forecast(&self, t: usize) -> f64 {
        self.wind_forecast_mw.get(t).copied().unwrap_or(0.0)
    }

    pub fn wind_available(&self, t: usize) -> f64 {
        match &self.wind_capacity_mw {
            Some(w) => w[t],
            None => self.wind_forecast(t),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.horizon();
        if t == 0 {
            return Err(Error::invalid("scenario has an empty load path"));
        }
        if self.load_mw.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::invalid("load must be finite and non-negative"));
        }
        if !self.wind_forecast_mw.is_empty() && self.wind_forecast_mw.len() != t {
            return Err(Error::invalid(format!(
                "wind forecast has {} periods, load has {t}",
                self.wind_forecast_mw.len()
            )));
        }
        if self.wind_forecast_mw.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("wind forecast must be finite and non-negative"));
        }
        if let Some(w) = &self.wind_capacity_mw {
            if w.len() != t || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::invalid("realized wind must cover every period with non-negative values"));
            }
        }
        for g in &self.generators {
            g.validate()?;
        }
        if self.bid_segments == 0 {
            return Err(Error::invalid("bid_segments must be at least 1"));
        }
        if !(self.noise.scale().is_finite() && self.noise.scale() >= 0.0) {
            return Err(Error::invalid("noise scale must be non-negative"));
        }
        if !(self.reserve_fraction.is_finite() && self.reserve_fraction >= 0.0) {
            return Err(Error::invalid("reserve fraction must be non-negative"));
        }
        if !(self.initial_soc_mwh.is_finite() && self.initial_soc_mwh >= 0.0) {
            return Err(Error::invalid("initial SoC must be non-negative"));
        }
        if !self.end_value_slope.is_finite() {
            return Err(Error::invalid("end value slope must be finite"));
        }
        Ok(())
    }

    /// Single generator `10 g + 0.04 g^2` with ample capacity, one 10 MW
    /// storage unit and no wind; net demand 600 to 1000 MW over the day.
    pub fn ideal() -> Self {
        let load = (0..24)
            .map(|h| {
                let x = (h as f64 - 4.0) / 24.0 * std::f64::consts::TAU;
                800.0 - 200.0 * x.cos()
            })
            .collect();
        Self {
            name: "ideal".into(),
            load_mw: load,
            wind_forecast_mw: Vec::new(),
            wind_capacity_mw: None,
            generators: vec![GeneratorSpec::flexible("quadratic", 1e6, 0.04, 10.0)],
            storage_units: 1,
            storage_in_day_ahead: false,
            price_limits: PriceBounds::new(0.0, 1000.0).expect("static bounds"),
            noise: NetDemandNoise::Absolute { sigma_mw: 0.0 },
            initial_soc_mwh: 0.0,
            bid_segments: 10,
            end_value_slope: 0.0,
            reserve_fraction: 0.2,
        }
    }

    /// Eight-unit, 1.3 GW thermal fleet with a day of load and wind.
    pub fn desk_profile() -> Self {
        representative_days().swap_remove(0).0
    }
}

fn unit(
    name: &str,
    min: f64,
    max: f64,
    ramp: f64,
    up: usize,
    down: usize,
    no_load: f64,
    start: f64,
    a: f64,
    b: f64,
    on: bool,
) -> GeneratorSpec {
    GeneratorSpec {
        name: name.into(),
        min_mw: min,
        max_mw: max,
        ramp_mw: ramp,
        min_up: up,
        min_down: down,
        no_load_cost: no_load,
        startup_cost: start,
        cost_quadratic: a,
        cost_linear: b,
        initially_on: on,
    }
}

/// The desk-scale thermal fleet: nuclear/coal baseload through gas peakers.
pub fn desk_fleet() -> Vec<GeneratorSpec> {
    vec![
        unit("nuclear", 200.0, 300.0, 30.0, 24, 24, 500.0, 50_000.0, 0.0005, 8.0, true),
        unit("coal-1", 80.0, 200.0, 40.0, 8, 8, 400.0, 8_000.0, 0.004, 18.0, true),
        unit("coal-2", 80.0, 200.0, 40.0, 8, 8, 420.0, 8_000.0, 0.004, 19.0, true),
        unit("ccgt-1", 60.0, 180.0, 90.0, 4, 4, 300.0, 3_000.0, 0.01, 26.0, true),
        unit("ccgt-2", 60.0, 180.0, 90.0, 4, 4, 320.0, 3_000.0, 0.01, 28.0, false),
        unit("gas-steam", 30.0, 120.0, 60.0, 3, 3, 250.0, 1_500.0, 0.02, 40.0, false),
        unit("peaker-1", 10.0, 60.0, 60.0, 1, 1, 100.0, 300.0, 0.05, 70.0, false),
        unit("peaker-2", 10.0, 60.0, 60.0, 1, 1, 100.0, 300.0, 0.05, 90.0, false),
    ]
}

/// Five hand-specified representative days with their weights (sum 1),
/// standing in for clustered historical wind years.
pub fn representative_days() -> Vec<(Scenario, f64)> {
    let shapes: [(&str, f64, f64, f64, f64); 5] = [
        ("shoulder-windy", 0.30, 820.0, 180.0, 0.45),
        ("summer-calm", 0.25, 900.0, 220.0, 0.10),
        ("winter-windy", 0.20, 860.0, 160.0, 0.60),
        ("spring-mixed", 0.15, 760.0, 150.0, 0.30),
        ("holiday-low", 0.10, 680.0, 120.0, 0.35),
    ];
    shapes
        .iter()
        .map(|&(name, weight, base, swing, wind_cf)| {
            let load: Vec<f64> = (0..24)
                .map(|h| {
                    let x = (h as f64 - 4.0) / 24.0 * std::f64::consts::TAU;
                    base - swing * x.cos()
                })
                .collect();
            let wind: Vec<f64> = (0..24)
                .map(|h| {
                    let x = (h as f64 - 2.0) / 24.0 * std::f64::consts::TAU;
                    (300.0 * wind_cf * (1.0 + 0.5 * x.cos())).max(0.0)
                })
                .collect();
            let s = Scenario {
                name: name.into(),
                load_mw: load,
                wind_forecast_mw: wind,
                wind_capacity_mw: None,
                generators: desk_fleet(),
                storage_units: 1,
                storage_in_day_ahead: false,
                price_limits: default_limits(),
                noise: NetDemandNoise::WindProportional { ratio: 0.2 },
                initial_soc_mwh: 0.0,
                bid_segments: 10,
                end_value_slope: 0.0,
                reserve_fraction: 0.2,
            };
            (s, weight)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        Scenario::ideal().validate().unwrap();
        let days = representative_days();
        assert_eq!(days.len(), 5);
        assert!((days.iter().map(|d| d.1).sum::<f64>() - 1.0).abs() < 1e-12);
        for (d, _) in &days {
            d.validate().unwrap();
            let cap: f64 = d.generators.iter().map(|g| g.max_mw).sum();
            assert!((cap - 1300.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_mismatched_wind() {
        let mut s = Scenario::ideal();
        s.wind_forecast_mw = vec![1.0; 3];
        assert!(s.validate().is_err());
    }

    #[test]
    fn json_defaults() {
        let s: Scenario = serde_json::from_str(
            r#"{"load_mw":[100,120],"generators":[{"min_mw":0,"max_mw":500,"ramp_mw":500,"cost_linear":10,"cost_quadratic":0.04}]}"#,
        )
        .unwrap();
        s.validate().unwrap();
        assert_eq!(s.bid_segments, 10);
        assert_eq!(s.price_limits.cap(), 1000.0);
    }
}
