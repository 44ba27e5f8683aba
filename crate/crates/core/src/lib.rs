//! Harmonic analysis toolkit for vector-valued random discrete measures.
//!
//! The crate works with finite configurations of marked points `(v, x)`
//! (velocity, position) and their images as vector-valued discrete measures
//! `η = Σ v_x δ_x`. It provides:
//!
//! * [`config`]: configurations, measures, windows and the reflection map;
//! * [`function`]: a small closed grammar of test functions `ψ(v, x)`;
//! * [`combinat`]: exact K-transform, Möbius inverse, ⋆-convolution and
//!   coherent states on finite configurations;
//! * [`intensity`]: the singular velocity laws `|v|^{-α} e^{-|v|^β} dv` and
//!   the product intensity `σ = λ ⊗ m` on a compact phase window;
//! * [`sampler`]: Poisson sampling and Lebesgue-Poisson series expectations;
//! * [`estimators`]: Monte Carlo estimators with closed-form references;
//! * [`oracle`]: exact finite-ground-set checks of the measure identities;
//! * [`suite`]: the Monte Carlo identity suite behind `cone-lab verify-mc`.

pub mod combinat;
pub mod config;
pub mod error;
pub mod estimators;
pub mod function;
pub mod intensity;
pub mod mc;
pub mod oracle;
pub mod quadrature;
pub mod sampler;
pub mod suite;
pub mod sum;

pub use combinat::{ConeFunction, ConfigurationFunction, FunctionClass};
pub use config::{
    FiniteConfiguration, MarkAnnulus, MarkedPoint, PhaseBox, PositionWindow,
    VectorDiscreteMeasure,
};
pub use error::{Error, Result};
pub use estimators::{CorrelationTable, FunctionalKind, MCResult, TiltDensity};
pub use mc::McSettings;
pub use function::FunctionSpec;
pub use intensity::{IntensitySpec, VelocityLaw};
pub use oracle::GroundSet;
pub use sampler::{RandomStream, SampleBatch};
