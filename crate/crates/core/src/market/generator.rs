use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thermal unit with a quadratic cost curve `a g^2 + b g` ($ per period).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(default)]
    pub name: String,
    pub min_mw: f64,
    pub max_mw: f64,
    /// Ramp limit in MW per period.
    pub ramp_mw: f64,
    #[serde(default = "one")]
    pub min_up: usize,
    #[serde(default = "one")]
    pub min_down: usize,
    #[serde(default)]
    pub no_load_cost: f64,
    #[serde(default)]
    pub startup_cost: f64,
    #[serde(default)]
    pub cost_quadratic: f64,
    pub cost_linear: f64,
    #[serde(default)]
    pub initially_on: bool,
}

fn one() -> usize {
    1
}

impl GeneratorSpec {
    /// Always-available unit with no commitment costs or time limits.
    pub fn flexible(name: &str, max_mw: f64, cost_quadratic: f64, cost_linear: f64) -> Self {
        Self {
            name: name.to_string(),
            min_mw: 0.0,
            max_mw,
            ramp_mw: max_mw,
            min_up: 1,
            min_down: 1,
            no_load_cost: 0.0,
            startup_cost: 0.0,
            cost_quadratic,
            cost_linear,
            initially_on: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nums = [
            self.min_mw,
            self.max_mw,
            self.ramp_mw,
            self.no_load_cost,
            self.startup_cost,
            self.cost_quadratic,
            self.cost_linear,
        ];
        if nums.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("generator '{}' has non-finite parameters", self.name)));
        }
        if !(0.0 <= self.min_mw && self.min_mw <= self.max_mw) {
            return Err(Error::invalid(format!(
                "generator '{}' needs 0 <= min ({}) <= max ({})",
                self.name, self.min_mw, self.max_mw
            )));
        }
        if self.max_mw <= 0.0 || self.ramp_mw <= 0.0 {
            return Err(Error::invalid(format!("generator '{}' needs positive capacity and ramp", self.name)));
        }
        if self.cost_quadratic < 0.0 {
            return Err(Error::invalid(format!("generator '{}' has a concave cost curve", self.name)));
        }
        if self.min_up == 0 || self.min_down == 0 {
            return Err(Error::invalid(format!("generator '{}' needs min up/down of at least 1", self.name)));
        }
        if self.no_load_cost < 0.0 || self.startup_cost < 0.0 {
            return Err(Error::invalid(format!("generator '{}' has negative fixed costs", self.name)));
        }
        Ok(())
    }

    pub fn cost(&self, g: f64) -> f64 {
        self.cost_quadratic * g * g + self.cost_linear * g
    }

    pub fn marginal_cost(&self, g: f64) -> f64 {
        2.0 * self.cost_quadratic * g + self.cost_linear
    }

    /// Cost per MWh at full output including no-load cost; the commitment
    /// priority key.
    pub fn average_cost_at_max(&self) -> f64 {
        (self.cost(self.max_mw) + self.no_load_cost) / self.max_mw
    }
}
