//! Excitation signals and the DFT convention used throughout the crate.

pub mod dft;
mod multisine;
mod sweep;

pub use dft::{dft, idft, upsample_periodic, Dft, Scaling, SpectrumRecord};
pub use multisine::{
    detection_design, generate_multisine, generate_odd_detection_multisine, ExcitationSpec,
    GridKind, LineClass, Multisine, rms,
};
pub use sweep::{generate_sweep, SweepSpec};

