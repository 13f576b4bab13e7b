//! Yearly hydrothermal generation management on scenario trees by
//! Lagrangian decomposition, with Value-at-Risk robust variants of the dual
//! and Monte Carlo evaluation of the resulting strategies.

pub mod dual;
pub mod instances;
pub mod lp;
pub mod optimizer;
pub mod pipeline;
pub mod risk;
pub mod scenario;
pub mod simulate;
pub mod units;
