pub mod bids;
pub mod distribution;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod market;
pub mod model;
pub mod value;
pub mod withholding;
