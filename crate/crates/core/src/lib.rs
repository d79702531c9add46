//! Pseudospectral laboratory for the interaction of two opposite-sign
//! solitary waves of `d_t u + d_x(-|D|^alpha u + u^3) = 0`, `1 < alpha < 2`:
//! ground states, linearized-operator inversions, interaction profiles,
//! reduced parameter dynamics and full time evolution.

pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod ground_state;
pub mod linalg;
pub mod linearized;
pub mod cli;
pub mod evolution;
pub mod modulation;
pub mod profiles;
pub mod quad;
pub mod weights;

pub use error::{FieldError, ModelError, SolverError};
pub use field::{SpectralField, TailField};
pub use grid::Grid;
