//! Data layer for the pulsebench toolkit: canonical dataset model and file
//! formats, arterial-waveform label derivation and cohort curation, the
//! Train / CalBased / CalFree split machinery, and a seeded synthetic cohort
//! generator with ground-truth sidecars.

pub mod curation;
pub mod dataset;
pub mod error;
pub mod io;
pub mod rng;
pub mod splits;
pub mod synth;

pub use dataset::{CuratedDataset, SegmentRecord, Sex, SubjectDemographics};
pub use error::{Error, Result};
