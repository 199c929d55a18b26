//! Recording ingest: EDF files, synthetic sessions, windowing and the
//! on-disk chunk cache.

pub mod cache;
pub mod chunk;
pub mod descriptor;
pub mod edf;
mod session;
pub mod synthetic;

pub use chunk::{chunk_sequence, window_bounds, SessionWindow};
pub use descriptor::{preset, presets, DatasetDescriptor};
pub use edf::{parse_edf, parse_edf_filtered, read_edf, write_edf, write_edf_file};
pub use session::{Annotation, Channel, EdfHeader, RawSession, SignalMeta};
pub use synthetic::{
    generate_synthetic_session, synthetic_trials, ClassSpec, SpectralComponent, SyntheticSpec,
};
