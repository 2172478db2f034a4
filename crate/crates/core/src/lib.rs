//! Age-size structured cell population dynamics driven by the distribution
//! of the cell-cycle length.
//!
//! The library computes the Malthusian parameter and the stable age /
//! initial-size distributions of the model through a Nystrom discretization
//! of its renewal operators, evolves the transformed transport system by
//! exact characteristic shifting, and cross-validates both against a
//! weighted agent-based Monte Carlo simulator.

pub mod abm;
pub mod cycle;
pub mod density;
pub mod error;
pub mod growth;
pub mod hetero;
pub mod interp;
pub mod presets;
pub mod quad;
pub mod spectral;
pub mod transport;
pub mod validate;

pub use cycle::{CycleModel, GrowthRateDistribution, QTable};
pub use density::Density1d;
pub use error::{Error, Result};
pub use growth::{perron_apply, GrowthLaw};
pub use hetero::HeteroDivisionRule;
pub use quad::QuadratureGrid;
pub use spectral::SpectralSolution;
pub use validate::{validate_assumptions, AssumptionReport};
