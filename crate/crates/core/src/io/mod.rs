//! File formats, configuration, spectral preprocessing and the noise benchmark.
mod benchmark;
mod config;
mod formats;
mod sidebands;

pub use benchmark::{
    benchmark_noise, truncated_preparation, BenchmarkCell, BenchmarkConfig, BenchmarkRow, BenchmarkTable,
};
pub use config::{Couplings, ExperimentKind, NoiseConfig, OutputPaths, RunConfig, ThetaGrid};
pub use formats::{
    density_from_json, density_to_json, exact_decimal, spectrogram_from_csv, spectrogram_from_json,
    spectrogram_to_csv, spectrogram_to_json,
};
pub use sidebands::{
    extract_sidebands, extract_sidebands_with, nnls, pseudo_voigt, Background, ExtractOptions, RawSpectrum,
    SidebandFit,
};
