//! Steering and entanglement witnesses for split spin-squeezed states and
//! two-mode squeezed light, with readout after a known interaction.
//!
//! Everything numerical is generic over [`scalar::Real`] (`f32` or `f64`).
//! The aliases below fix the scalar for the common cases.

pub mod error;
pub mod linalg;
pub mod scalar;
pub mod spin;
pub mod split;
pub mod optimize;
pub mod criteria;
pub mod entanglement;
pub mod open_systems;
pub mod gaussian;
pub mod wigner;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SplitState = split::SplitSpinState<f64>;
pub type SplitState32 = split::SplitSpinState<f32>;
pub type Assemblage = split::Assemblage<f64>;
pub type Assemblage32 = split::Assemblage<f32>;
pub type BlockDensity = split::BlockDensityOperator<f64>;
pub type BlockDensity32 = split::BlockDensityOperator<f32>;
pub type Criterion = criteria::CriterionResult<f64>;
pub type Criterion32 = criteria::CriterionResult<f32>;
pub type Giovannetti = entanglement::GiovannettiResult<f64>;
pub type Giovannetti32 = entanglement::GiovannettiResult<f32>;
pub type Loss = open_systems::LossConfig<f64>;
pub type Loss32 = open_systems::LossConfig<f32>;
pub type Tms = gaussian::TmsConfig<f64>;
pub type Tms32 = gaussian::TmsConfig<f32>;
pub type Gaussian = gaussian::GaussianState<f64>;
pub type Gaussian32 = gaussian::GaussianState<f32>;
pub type Wigner = wigner::SphereGrid<f64>;
pub type Wigner32 = wigner::SphereGrid<f32>;
