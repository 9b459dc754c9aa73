//! Independent reference solutions used to score PIELM runs.

mod burgers;
mod cavity;
mod field;
mod flux;
mod poisson;

pub use burgers::{burgers_fd, cfl_steps, BurgersOracle, BurgersOracleConfig};
pub use cavity::{cavity_fd, cavity_fd_cached, CavityOracle, CavityOracleConfig};
pub use field::{GridField, Provenance};
pub use flux::{flux_check, simpson};
pub use poisson::{poisson_exact, poisson_exact_at};
