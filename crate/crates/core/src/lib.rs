pub mod audio_io;
pub mod embedding;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod metrics;
pub mod pitch;
pub mod reversal;
pub mod spectral;
