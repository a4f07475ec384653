pub mod clearing;
pub mod commitment;
pub mod generator;
pub mod scenario;
pub mod simulate;
pub mod supply;

pub use clearing::{clear_rtm, ClearingResult, ClearingStatus};
pub use commitment::{commit_dam, CommitmentSchedule};
pub use generator::GeneratorSpec;
pub use scenario::{desk_fleet, representative_days, NetDemandNoise, Scenario};
pub use simulate::{day_draws, simulate_day, DayAhead, DayResult, PeriodOutcome};
pub use supply::{aggregate_supply, SupplyCurve, UnitOffer};
