//! Simulation of OAM-entangled photon pairs crossing Kolmogorov turbulence.
//!
//! The numerical kernels are generic over [`Real`] (`f32` or `f64`); the
//! aliases below pin them to `f64`, which the experiment runner uses.

// `!(x >= 0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod optics;
pub mod real;
pub mod state;
pub mod store;
pub mod tomography;
pub mod topology;
pub mod turbulence;
pub mod witness;

pub use error::{Error, Result};
pub use real::Real;

pub type Grid = optics::Grid2D<f64>;
pub type Field = optics::ComplexField<f64>;
pub type Mode = optics::LgMode<f64>;
pub type Spectrum = optics::OamSpectrum<f64>;
pub type Screen = turbulence::PhaseScreen<f64>;
pub type ScreenSpec = turbulence::TurbulenceSpec<f64>;
pub type Density = state::DensityMatrix4<f64>;
pub type PureState = state::BipartitePureState<f64>;
pub type Record = tomography::TomographyRecord<f64>;
pub type Counts = channel::CountModel<f64>;
pub type Witnesses = witness::WitnessReport<f64>;
pub type Bloch = topology::BlochField<f64>;
pub type Topology = topology::TopologyReport<f64>;

pub type Grid32 = optics::Grid2D<f32>;
pub type Screen32 = turbulence::PhaseScreen<f32>;
pub type Density32 = state::DensityMatrix4<f32>;
