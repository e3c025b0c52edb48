//! Valuation of an interest-rate swap under a contingent collateral
//! agreement: the holder may switch between no collateral (bearing
//! bilateral CVA) and full collateral (bearing funding costs), paying a
//! fee per switch, and seeks the switching strategy of least expected
//! squared cost.
//!
//! The pipeline runs [`curve`] → [`dynamics`] → [`swap`] → [`costs`] →
//! [`solver`]; [`scenario`] wires it to a configuration file and
//! [`oracle`] holds a brute-force check of the solver.

pub mod costs;
pub mod curve;
pub mod dynamics;
pub mod error;
pub mod oracle;
pub mod rng;
pub mod scenario;
pub mod solver;
pub mod swap;

pub use costs::{CostConfig, Regime, RegimeCostPaths};
pub use curve::{MarketQuote, QuoteKind, YieldCurve};
pub use dynamics::{CirParams, G2Params, ModelParams, PathSet, TimeGrid};
pub use error::{Error, Result};
pub use solver::{SolverConfig, SwitchingSolution, ValueEstimate, ValueMode};
pub use swap::{Direction, Fixing, SwapSpec};
