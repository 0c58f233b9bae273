//! Wireless sensor network simulator: two-ray link budgets, SNR-driven
//! transmit power control, on-demand routing with path accumulation,
//! token/umpire exclusion of packet droppers and handoff-based route
//! recovery.
//!
//! The RF math ([`linkbudget`], [`powerctl`]) is generic over [`num::Real`];
//! the aliases below fix the scalar for the common cases.

mod ids;
pub mod config;
pub mod linkbudget;
pub mod metrics;
pub mod num;
pub mod powerctl;
pub mod recovery;
pub mod routing;
pub mod sim;
pub mod sweep;
pub mod time;

pub use ids::NodeId;

pub type Radio = linkbudget::RadioParams<f64>;
pub type Radio32 = linkbudget::RadioParams<f32>;
pub type Dbm = linkbudget::PowerDbm<f64>;
pub type Mw = linkbudget::PowerMw<f64>;
pub type Link = linkbudget::LinkState<f64>;
pub type Modulation = linkbudget::ModulationParams<f64>;
pub type PowerControl = powerctl::PowerControlState<f64>;
pub type Pdr = num_rational::Ratio<u64>;
