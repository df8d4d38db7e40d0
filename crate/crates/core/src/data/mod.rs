//! From trip records to training volumes: grid binning, demand cubes, period
//! selection by additive decomposition, volume samples, seasonal
//! differencing, train/test splits and a synthetic generator.

mod cube;
mod decompose;
mod difference;
mod grid;
mod samples;
mod synth;

pub use cube::{read_cube_text, write_cube_text, DemandCube};
pub use decompose::{decompose, period_scores, select_period, Decomposition};
pub use difference::{difference_series, difference_transform, Differenced};
pub use grid::{ingest, read_trips, GridSpec, IngestReport, TripRecord};
pub use samples::{
    earliest_target, input_indices, make_samples, make_samples_from, split, SampleSet, VolumeSample,
};
pub use synth::{synthesize, NoiseKind, RegionProfile, SynthConfig};
