use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and economic parameters of one storage unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StorageSpecRaw", into = "StorageSpecRaw")]
pub struct StorageSpec {
    power_mw: f64,
    energy_mwh: f64,
    efficiency: f64,
    discharge_cost: f64,
    step_hours: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StorageSpecRaw {
    power_mw: f64,
    energy_mwh: f64,
    efficiency: f64,
    discharge_cost: f64,
    #[serde(default = "one")]
    step_hours: f64,
}

fn one() -> f64 {
    1.0
}

impl StorageSpec {
    pub fn new(
        power_mw: f64,
        energy_mwh: f64,
        efficiency: f64,
        discharge_cost: f64,
        step_hours: f64,
    ) -> Result<Self> {
        let finite = [power_mw, energy_mwh, efficiency, discharge_cost, step_hours]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::invalid("storage parameters must be finite"));
        }
        if power_mw <= 0.0 {
            return Err(Error::invalid(format!("power must be positive, got {power_mw}")));
        }
        if energy_mwh <= 0.0 {
            return Err(Error::invalid(format!("energy capacity must be positive, got {energy_mwh}")));
        }
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::invalid(format!("efficiency must lie in (0, 1], got {efficiency}")));
        }
        if discharge_cost < 0.0 {
            return Err(Error::invalid(format!(
                "discharge cost must be non-negative, got {discharge_cost}"
            )));
        }
        if step_hours <= 0.0 {
            return Err(Error::invalid(format!("step length must be positive, got {step_hours}")));
        }
        Ok(Self { power_mw, energy_mwh, efficiency, discharge_cost, step_hours })
    }

    /// Hourly spec (step of one hour).
    pub fn hourly(power_mw: f64, energy_mwh: f64, efficiency: f64, discharge_cost: f64) -> Result<Self> {
        Self::new(power_mw, energy_mwh, efficiency, discharge_cost, 1.0)
    }

    pub fn power_mw(&self) -> f64 {
        self.power_mw
    }
    pub fn energy_mwh(&self) -> f64 {
        self.energy_mwh
    }
    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }
    pub fn discharge_cost(&self) -> f64 {
        self.discharge_cost
    }
    pub fn step_hours(&self) -> f64 {
        self.step_hours
    }

    /// State of charge gained by one period of full-power charging.
    pub fn charge_increment(&self) -> f64 {
        self.step_hours * self.power_mw * self.efficiency
    }

    /// State of charge drained by one period of full-power discharging.
    pub fn discharge_decrement(&self) -> f64 {
        self.step_hours * self.power_mw / self.efficiency
    }

    /// SoC after one period, clamped to the physical range.
    pub fn next_soc(&self, soc: f64, discharge_mw: f64, charge_mw: f64) -> f64 {
        let tau = self.step_hours;
        let eta = self.efficiency;
        (soc + (-discharge_mw / eta + charge_mw * eta) * tau).clamp(0.0, self.energy_mwh)
    }

    /// Per-period profit of a dispatch at `price`.
    pub fn period_profit(&self, price: f64, discharge_mw: f64, charge_mw: f64) -> f64 {
        price * (discharge_mw - charge_mw) - self.discharge_cost * discharge_mw
    }
}

impl TryFrom<StorageSpecRaw> for StorageSpec {
    type Error = Error;
    fn try_from(r: StorageSpecRaw) -> Result<Self> {
        Self::new(r.power_mw, r.energy_mwh, r.efficiency, r.discharge_cost, r.step_hours)
    }
}

impl From<StorageSpec> for StorageSpecRaw {
    fn from(s: StorageSpec) -> Self {
        Self {
            power_mw: s.power_mw,
            energy_mwh: s.energy_mwh,
            efficiency: s.efficiency,
            discharge_cost: s.discharge_cost,
            step_hours: s.step_hours,
        }
    }
}

/// Closed price interval `[floor, cap]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriceBoundsRaw", into = "PriceBoundsRaw")]
pub struct PriceBounds {
    floor: f64,
    cap: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriceBoundsRaw {
    floor: f64,
    cap: f64,
}

impl PriceBounds {
    pub fn new(floor: f64, cap: f64) -> Result<Self> {
        if !(floor.is_finite() && cap.is_finite()) {
            return Err(Error::invalid("price bounds must be finite"));
        }
        if floor > cap {
            return Err(Error::invalid(format!("price floor {floor} exceeds cap {cap}")));
        }
        Ok(Self { floor, cap })
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }
    pub fn cap(&self) -> f64 {
        self.cap
    }
    pub fn contains(&self, x: f64) -> bool {
        x >= self.floor && x <= self.cap
    }
    pub fn width(&self) -> f64 {
        self.cap - self.floor
    }

    /// Probability weight on the cap for a mean `mu` under the
    /// two-point pricing model.
    pub fn cap_weight(&self, mu: f64) -> f64 {
        if self.width() == 0.0 {
            return 1.0;
        }
        ((mu - self.floor) / self.width()).clamp(0.0, 1.0)
    }
}

impl TryFrom<PriceBoundsRaw> for PriceBounds {
    type Error = Error;
    fn try_from(r: PriceBoundsRaw) -> Result<Self> {
        Self::new(r.floor, r.cap)
    }
}

impl From<PriceBounds> for PriceBoundsRaw {
    fn from(b: PriceBounds) -> Self {
        Self { floor: b.floor, cap: b.cap }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_efficiency() {
        assert!(StorageSpec::hourly(10.0, 40.0, 1.2, 25.0).is_err());
        assert!(StorageSpec::hourly(10.0, 40.0, 0.0, 25.0).is_err());
        assert!(StorageSpec::hourly(10.0, 40.0, 1.0, 25.0).is_ok());
    }

    #[test]
    fn rejects_nonpositive_capacity() {
        assert!(StorageSpec::hourly(0.0, 40.0, 0.9, 25.0).is_err());
        assert!(StorageSpec::hourly(10.0, -1.0, 0.9, 25.0).is_err());
        assert!(StorageSpec::hourly(10.0, 40.0, 0.9, -0.1).is_err());
    }

    #[test]
    fn increments() {
        let s = StorageSpec::new(10.0, 40.0, 0.9, 25.0, 0.5).unwrap();
        assert!((s.charge_increment() - 4.5).abs() < 1e-12);
        assert!((s.discharge_decrement() - 5.0 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn bounds_ordering() {
        assert!(PriceBounds::new(150.0, 5.0).is_err());
        let b = PriceBounds::new(5.0, 150.0).unwrap();
        assert!((b.cap_weight(26.2) - 21.2 / 145.0).abs() < 1e-12);
    }

    #[test]
    fn serde_validates() {
        let bad = r#"{"power_mw":10,"energy_mwh":40,"efficiency":1.5,"discharge_cost":25}"#;
        assert!(serde_json::from_str::<StorageSpec>(bad).is_err());
        let ok = r#"{"power_mw":10,"energy_mwh":40,"efficiency":0.9,"discharge_cost":25}"#;
        let s: StorageSpec = serde_json::from_str(ok).unwrap();
        assert_eq!(s.step_hours(), 1.0);
    }
}
