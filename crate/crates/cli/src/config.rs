use serde::Deserialize;

use storage_bidding::bids::{BidCurve, PeriodBids};
use storage_bidding::distribution::{DistributionSpec, PriceDistribution};
use storage_bidding::engine::EngineConfig;
use storage_bidding::error::{Error, Result};
use storage_bidding::experiments::DemandShape;
use storage_bidding::market::{representative_days, GeneratorSpec, Scenario};
use storage_bidding::model::{PriceBounds, StorageSpec};
use storage_bidding::value::ValueFunction;

/// One run configuration; each subcommand reads the sections it needs.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub storage: Option<StorageSpec>,
    pub bounds: Option<PriceBounds>,
    #[serde(default)]
    pub forecasts: Vec<DistributionSpec>,
    /// Full end-of-horizon value function; overrides `end_value_slope`.
    pub end_value: Option<ValueFunction>,
    #[serde(default)]
    pub end_value_slope: f64,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub bids: BidsSection,
    pub cap_bound: Option<CapBoundSection>,
    pub scenario: Option<ScenarioSection>,
    #[serde(default)]
    pub simulate: SimulateSection,
    pub sweep: Option<SweepSection>,
    pub clear: Option<ClearSection>,
    pub audit: Option<AuditSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidsSection {
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default)]
    pub initial_soc_mwh: f64,
}

impl Default for BidsSection {
    fn default() -> Self {
        Self { segments: default_segments(), initial_soc_mwh: 0.0 }
    }
}

fn default_segments() -> usize {
    10
}

/// Expectation-cap bound inputs.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapBoundSection {
    pub mu_cap: f64,
    /// Remaining periods; omitted for the infinite-horizon limit.
    pub horizon: Option<usize>,
    #[serde(default = "one")]
    pub discount: f64,
}

fn one() -> f64 {
    1.0
}

/// A named preset (`ideal`, `desk`, or a representative day name) or a
/// full scenario.
#[derive(Debug)]
pub enum ScenarioSection {
    Preset(String),
    Full(Box<Scenario>),
}

// untagged enums swallow the inner error, so dispatch on the JSON shape
impl<'de> Deserialize<'de> for ScenarioSection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) => Ok(ScenarioSection::Preset(s)),
            v => serde_json::from_value(v)
                .map(|s| ScenarioSection::Full(Box::new(s)))
                .map_err(|e| serde::de::Error::custom(format!("scenario: {e}"))),
        }
    }
}

impl ScenarioSection {
    pub fn resolve(&self) -> Result<Scenario> {
        match self {
            ScenarioSection::Full(s) => {
                s.validate()?;
                Ok((**s).clone())
            }
            ScenarioSection::Preset(name) => match name.as_str() {
                "ideal" => Ok(Scenario::ideal()),
                "desk" => Ok(Scenario::desk_profile()),
                other => representative_days()
                    .into_iter()
                    .map(|(s, _)| s)
                    .find(|s| s.name == other)
                    .ok_or_else(|| Error::Config(format!("unknown scenario preset '{other}'"))),
            },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Deviation of the storage price forecasts around day-ahead prices.
    #[serde(default = "default_forecast_sigma")]
    pub forecast_sigma: f64,
    /// Replaces the scenario's noise scale when set.
    pub demand_sigma: Option<f64>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { forecast_sigma: default_forecast_sigma(), demand_sigma: None }
    }
}

fn default_forecast_sigma() -> f64 {
    10.0
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepSection {
    Sigma {
        mu: f64,
        sigmas: Vec<f64>,
        horizon: usize,
    },
    Bounded {
        mu_path: Vec<f64>,
        sigmas: Vec<f64>,
    },
    Welfare {
        demand_sigmas: Vec<f64>,
        forecast_sigmas: Vec<f64>,
        draws: usize,
    },
    Slope {
        clearings: usize,
        #[serde(default = "default_shape")]
        shape: DemandShape,
    },
}

fn default_shape() -> DemandShape {
    DemandShape::Uniform
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClearSection {
    pub generators: Vec<GeneratorSpec>,
    pub net_demand_mw: f64,
    pub limits: Option<PriceBounds>,
    #[serde(default)]
    pub offers: Vec<BidCurve>,
    #[serde(default)]
    pub bids: Vec<BidCurve>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    /// Submitted curves inline.
    #[serde(default)]
    pub submitted: Vec<PeriodBids>,
    /// Or a bids CSV path, relative to the config file.
    pub bids_csv: Option<String>,
    /// SoC at which the baseline curves are built.
    #[serde(default)]
    pub soc_mwh: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-6
}

fn missing(section: &str) -> Error {
    Error::Config(format!("config has no '{section}' section"))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn storage(&self) -> Result<&StorageSpec> {
        self.storage.as_ref().ok_or_else(|| missing("storage"))
    }

    pub fn price_bounds(&self) -> Result<PriceBounds> {
        self.bounds.ok_or_else(|| missing("bounds"))
    }

    pub fn forecasts(&self) -> Result<Vec<PriceDistribution>> {
        if self.forecasts.is_empty() {
            return Err(missing("forecasts"));
        }
        self.forecasts.iter().cloned().map(PriceDistribution::from_spec).collect()
    }

    pub fn end_value(&self, spec: &StorageSpec) -> Result<ValueFunction> {
        match &self.end_value {
            Some(v) => Ok(v.clone()),
            None => ValueFunction::linear(spec.energy_mwh(), self.end_value_slope, 2),
        }
    }

    /// End marginal value used by the bounds: the slope at empty storage.
    pub fn end_marginal(&self, spec: &StorageSpec) -> Result<f64> {
        self.end_value(spec)?.marginal_value(0.0)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        self.scenario.as_ref().ok_or_else(|| missing("scenario"))?.resolve()
    }

    pub fn sweep(&self) -> Result<&SweepSection> {
        self.sweep.as_ref().ok_or_else(|| missing("sweep"))
    }

    pub fn clear(&self) -> Result<&ClearSection> {
        self.clear.as_ref().ok_or_else(|| missing("clear"))
    }

    pub fn audit(&self) -> Result<&AuditSection> {
        self.audit.as_ref().ok_or_else(|| missing("audit"))
    }
}
