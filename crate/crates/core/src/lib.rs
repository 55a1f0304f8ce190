//! Frequency-domain electromagnetic induction: layered-earth forward model,
//! exact sensitivities, T(G)SVD regularization and a damped, positivity
//! constrained Gauss-Newton inversion of conductivity or permeability
//! depth profiles.

pub mod error;
pub mod forward;
pub mod hankel;
pub mod invert;
pub mod jacobian;
pub mod model;
pub mod par;
pub mod regularize;
pub mod synthetic;

pub use error::{Error, Result};
pub use invert::{invert_profile, invert_section, InversionOptions, InversionResult, ParamMethod, RunControl};
pub use model::{
    Coil, Component, DataVector, DeviceConfig, Discretization, IndexTuple, Orientation, Quantity, SoilModel, MU0,
};
pub use par::Execution;
