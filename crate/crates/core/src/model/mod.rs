//! Signal model: ramp geometry, object and interference dictionaries,
//! anti-aliasing filters and the interference envelope.

mod aaf;
mod components;
mod config;
mod dictionary;
mod envelope;

pub use aaf::{modified_aaf_transfer, AafModel, GbarCache, ModifiedAaf, GBAR_OVERSAMPLING};
pub use components::{
    wrap_half, ChirpParams, FrameParts, InterferenceBurst, ObjectComponent, SignalFrame, Zeta,
};
pub use config::RampConfig;
pub(crate) use dictionary::steering;
pub use dictionary::{
    delay_column, grid_frequency, interference_grid, nearest_grid_index, object_steering_vector,
};
pub use envelope::{chirp_phasor, envelope_matrix, envelope_with};
