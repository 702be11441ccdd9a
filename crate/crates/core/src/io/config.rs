use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::benchmark::BenchmarkConfig;
use crate::analysis::AttosecondConfig;
use crate::error::{Error, Result};
use crate::forward::{
    add_poisson_noise, jitter_average, observation_window, prepare_pure, simulate_spectrogram, uniform_theta_grid,
    DispersionParams, Spectrogram, JITTER_NODES,
};
use crate::ladder::{Coupling, DensityMatrix};
use crate::squirrels::ReconstructionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Second-harmonic preparation probed by the fundamental in the same plane.
    TwoColor,
    /// Preparation and probe in separate planes with a drift in between.
    TwoPlane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Couplings {
    pub prep: Coupling,
    pub probe: Coupling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaGrid {
    pub count: usize,
    /// Radians; the grid covers `[0, period)`.
    pub period: f64,
}

impl Default for ThetaGrid {
    fn default() -> Self {
        ThetaGrid {
            count: 24,
            period: std::f64::consts::PI,
        }
    }
}

impl ThetaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidArgument(format!("phase period must be positive, got {}", self.period)));
        }
        Ok(uniform_theta_grid(self.count, self.period))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub counts_per_spectrum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub spectrogram: PathBuf,
    pub density: PathBuf,
    pub report: PathBuf,
    pub table: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            spectrogram: "spectrogram.csv".into(),
            density: "density.json".into(),
            report: "report.json".into(),
            table: "table.csv".into(),
        }
    }
}

/// Everything a command-line run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub couplings: Couplings,
    #[serde(default)]
    pub theta: ThetaGrid,
    /// Restricts the prepared state; by default the full ladder reach is kept.
    #[serde(default)]
    pub window: Option<crate::ladder::SidebandWindow>,
    #[serde(default)]
    pub dispersion: Option<DispersionParams>,
    /// Rms relative-phase jitter in radians.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub reconstruction: ReconstructionConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputPaths,
    #[serde(default)]
    pub benchmark: Option<BenchmarkConfig>,
    #[serde(default)]
    pub attosecond: Option<AttosecondConfig>,
}

impl RunConfig {
    /// Parses JSON; schema errors name the offending key path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn invalid(path: &str, message: impl Into<String>) -> Error {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Couplings { prep, probe } = self.couplings;
        match self.experiment {
            ExperimentKind::TwoColor => {
                if prep.harmonic() != 2 || probe.harmonic() != 1 {
                    return Err(Self::invalid(
                        "couplings",
                        "two-color runs prepare with the second harmonic and probe with the fundamental",
                    ));
                }
                if self.dispersion.is_some() {
                    return Err(Self::invalid("dispersion", "two-color runs have no drift"));
                }
            }
            ExperimentKind::TwoPlane => {
                if prep.harmonic() != probe.harmonic() {
                    return Err(Self::invalid("couplings", "both planes must use the same harmonic"));
                }
            }
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Self::invalid("jitter", "must be finite and non-negative"));
        }
        if let Some(n) = self.noise {
            if !(n.counts_per_spectrum > 0.0 && n.counts_per_spectrum.is_finite()) {
                return Err(Self::invalid("noise.counts_per_spectrum", "must be positive"));
            }
        }
        self.theta.values().map_err(|e| Self::invalid("theta", e.to_string()))?;
        if let Some(d) = &self.dispersion {
            d.chi().map_err(|e| Self::invalid("dispersion", e.to_string()))?;
        }
        self.reconstruction
            .validate()
            .map_err(|e| Self::invalid("reconstruction", e.to_string()))?;
        if let Some(b) = &self.benchmark {
            b.validate().map_err(|e| Self::invalid("benchmark", e.to_string()))?;
        }
        Ok(())
    }

    /// Prepared, dispersed and jitter-averaged state at the probe plane.
    pub fn prepared_state(&self) -> Result<DensityMatrix> {
        let chi = match &self.dispersion {
            Some(d) => d.chi()?,
            None => 0.0,
        };
        let pure = prepare_pure(&self.couplings.prep)?.dispersed(chi);
        let pure = match &self.window {
            Some(w) => {
                let kept = pure.restrict(w);
                let norm = kept.norm_sqr();
                if norm <= 0.0 {
                    return Err(Error::InvalidWindow("window holds none of the prepared state".into()));
                }
                if 1.0 - norm > 1e-6 {
                    log::warn!("window drops {:.3e} of the prepared population; renormalizing", 1.0 - norm);
                }
                let amps = kept
                    .amplitudes()
                    .iter()
                    .map(|c| c / norm.sqrt())
                    .collect();
                crate::ladder::SidebandState::new(*w, amps)?
            }
            None => pure,
        };
        jitter_average(&pure, self.jitter, JITTER_NODES)
    }

    /// Noise-free or Poisson-sampled spectrogram of [`Self::prepared_state`].
    pub fn simulate(&self) -> Result<(DensityMatrix, Spectrogram)> {
        let rho = self.prepared_state()?;
        let probe = self.couplings.probe;
        let theta = self.theta.values()?;
        let obs = observation_window(&rho.window().with_stride(1)?, &probe);
        let s = simulate_spectrogram(&rho, &probe, &theta, &obs)?;
        let s = match self.noise {
            Some(n) => add_poisson_noise(&s, n.counts_per_spectrum, self.seed)?,
            None => s,
        };
        Ok((rho, s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_COLOR: &str = r#"{
        "experiment": "two_color",
        "couplings": {
            "prep": {"magnitude": 0.63, "harmonic": 2},
            "probe": {"magnitude": 2.16}
        }
    }"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_json(TWO_COLOR).unwrap();
        assert_eq!(c.theta.count, 24);
        assert_eq!(c.seed, 0);
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let bad = TWO_COLOR.replace("\"probe\": {\"magnitude\": 2.16}", "\"probe\": {\"magnitude\": 2.16, \"colour\": 1}");
        match RunConfig::from_json(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "couplings.probe.colour"),
            other => panic!("{other:?}"),
        }
        let bad = TWO_COLOR.replace("\"experiment\"", "\"reconstruction\": {\"tau\": \"x\"}, \"experiment\"");
        match RunConfig::from_json(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "reconstruction.tau"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistent_harmonics_are_rejected() {
        let bad = TWO_COLOR.replace("\"harmonic\": 2", "\"harmonic\": 1");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config { .. })));
    }

    #[test]
    fn simulated_columns_are_normalized() {
        let (_, s) = RunConfig::from_json(TWO_COLOR).unwrap().simulate().unwrap();
        for c in s.column_sums() {
            assert!((c - 1.0).abs() < 1e-9);
        }
    }
}
