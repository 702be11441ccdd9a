use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::Spectrogram;
use crate::ladder::{CMatrix, Coupling, DensityMatrix, SidebandWindow};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn exact_decimal(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Format(format!("{what}: cannot parse `{s}`: {e}")))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityFile {
    window: SidebandWindow,
    /// Row-major `[re, im]` pairs.
    entries: Vec<Vec<[String; 2]>>,
}

/// JSON with the window and every entry as a `[re, im]` pair of decimal strings.
pub fn density_to_json(rho: &DensityMatrix) -> String {
    let n = rho.dim();
    let entries = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let z = rho.entries()[(i, j)];
                    [exact_decimal(z.re), exact_decimal(z.im)]
                })
                .collect()
        })
        .collect();
    let file = DensityFile {
        window: *rho.window(),
        entries,
    };
    serde_json::to_string_pretty(&file).expect("density file serializes")
}

/// Parses [`density_to_json`] output and checks the density-matrix invariants.
pub fn density_from_json(text: &str) -> Result<DensityMatrix> {
    let file: DensityFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let n = file.window.len();
    if file.entries.len() != n || file.entries.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: file.entries.len(),
        });
    }
    let mut m = CMatrix::zeros(n, n);
    for (i, row) in file.entries.iter().enumerate() {
        for (j, [re, im]) in row.iter().enumerate() {
            m[(i, j)] = Complex64::new(parse_f64(re, "real part")?, parse_f64(im, "imaginary part")?);
        }
    }
    DensityMatrix::new(file.window, m)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrogramFile {
    probe: Coupling,
    window: SidebandWindow,
    theta: Vec<f64>,
    #[serde(default)]
    counts_per_spectrum: Option<f64>,
    /// One row per sideband, one entry per phase.
    populations: Vec<Vec<f64>>,
}

pub fn spectrogram_to_json(s: &Spectrogram) -> String {
    let pops = s.populations();
    let file = SpectrogramFile {
        probe: *s.probe(),
        window: *s.window(),
        theta: s.theta_grid().to_vec(),
        counts_per_spectrum: s.counts_per_spectrum(),
        populations: (0..pops.nrows()).map(|r| pops.row(r).iter().copied().collect()).collect(),
    };
    serde_json::to_string_pretty(&file).expect("spectrogram serializes")
}

pub fn spectrogram_from_json(text: &str) -> Result<Spectrogram> {
    let f: SpectrogramFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let cols = f.theta.len();
    if f.populations.iter().any(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch {
            expected: cols,
            actual: f.populations.iter().map(Vec::len).find(|&l| l != cols).unwrap_or(0),
        });
    }
    let rows = f.populations.len();
    let pops = DMatrix::from_fn(rows, cols, |r, c| f.populations[r][c]);
    Spectrogram::new(pops, f.theta, f.probe, f.window, f.counts_per_spectrum)
}

const PROBE_TAG: &str = "# probe";
const COUNTS_TAG: &str = "# counts_per_spectrum";

/// CSV with the probe and count metadata as `#` comment lines, a header of
/// phases in radians, and one row per sideband index.
pub fn spectrogram_to_csv(s: &Spectrogram) -> String {
    let mut out = String::new();
    let g = s.probe();
    writeln!(
        out,
        "{PROBE_TAG} magnitude={:e} phase={:e} harmonic={}",
        g.magnitude(),
        g.phase(),
        g.harmonic()
    )
    .unwrap();
    if let Some(c) = s.counts_per_spectrum() {
        writeln!(out, "{COUNTS_TAG}={c:e}").unwrap();
    }
    out.push_str("sideband");
    for t in s.theta_grid() {
        write!(out, ",{t:e}").unwrap();
    }
    out.push('\n');
    for (r, n) in s.window().indices().enumerate() {
        write!(out, "{n}").unwrap();
        for c in 0..s.theta_grid().len() {
            write!(out, ",{:e}", s.populations()[(r, c)]).unwrap();
        }
        out.push('\n');
    }
    out
}

fn parse_probe(line: &str) -> Result<Coupling> {
    let mut magnitude = None;
    let mut phase = 0.0;
    let mut harmonic = 1u8;
    for field in line.split_whitespace() {
        let Some((key, value)) = field.split_once('=') else { continue };
        match key {
            "magnitude" => magnitude = Some(parse_f64(value, "probe magnitude")?),
            "phase" => phase = parse_f64(value, "probe phase")?,
            "harmonic" => {
                harmonic = value
                    .parse()
                    .map_err(|_| Error::Format(format!("probe harmonic `{value}`")))?
            }
            other => return Err(Error::Format(format!("unknown probe field `{other}`"))),
        }
    }
    let magnitude = magnitude.ok_or_else(|| Error::Format("probe line lacks a magnitude".into()))?;
    Coupling::new(magnitude, phase, harmonic)
}

/// Parses [`spectrogram_to_csv`] output. `probe` is used when the file has
/// no probe line.
pub fn spectrogram_from_csv(text: &str, probe: Option<Coupling>) -> Result<Spectrogram> {
    let mut file_probe = None;
    let mut counts = None;
    let mut header: Option<Vec<f64>> = None;
    let mut rows: Vec<(i32, Vec<f64>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(PROBE_TAG) {
            file_probe = Some(parse_probe(rest)?);
            continue;
        }
        if let Some(rest) = line.strip_prefix(COUNTS_TAG) {
            let v = rest.trim_start_matches('=');
            counts = Some(parse_f64(v, "counts per spectrum")?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let first = fields.next().unwrap_or_default();
        if header.is_none() {
            if first.trim() != "sideband" {
                return Err(Error::Format(format!(
                    "line {}: expected a `sideband,...` header",
                    lineno + 1
                )));
            }
            header = Some(fields.map(|f| parse_f64(f, "phase")).collect::<Result<_>>()?);
            continue;
        }
        let n: i32 = first
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad sideband index `{first}`", lineno + 1)))?;
        let vals: Vec<f64> = fields.map(|f| parse_f64(f, "population")).collect::<Result<_>>()?;
        rows.push((n, vals));
    }
    let theta = header.ok_or_else(|| Error::Format("missing header row".into()))?;
    if rows.is_empty() {
        return Err(Error::Format("no sideband rows".into()));
    }
    let n_min = rows[0].0;
    for (k, (n, vals)) in rows.iter().enumerate() {
        if *n != n_min + k as i32 {
            return Err(Error::Format(format!("sideband rows must be consecutive, found {n}")));
        }
        if vals.len() != theta.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                actual: vals.len(),
            });
        }
    }
    let window = SidebandWindow::new(n_min, rows.last().unwrap().0, 1)?;
    let pops = DMatrix::from_fn(rows.len(), theta.len(), |r, c| rows[r].1[c]);
    let probe = file_probe
        .or(probe)
        .ok_or_else(|| Error::Format("no probe coupling in file or arguments".into()))?;
    Spectrogram::new(pops, theta, probe, window, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{prepare_pure, simulate_spectrogram, uniform_theta_grid};
    use crate::forward::observation_window;
    use std::f64::consts::PI;

    #[test]
    fn density_round_trip_is_exact() {
        let rho = prepare_pure(&Coupling::new(0.9, 0.3, 2).unwrap()).unwrap().dispersed(0.07).to_density();
        let back = density_from_json(&density_to_json(&rho)).unwrap();
        assert_eq!(back, rho);
    }

    #[test]
    fn spectrogram_round_trip() {
        let probe = Coupling::fundamental(1.1).unwrap();
        let rho = prepare_pure(&Coupling::second_harmonic(0.5).unwrap()).unwrap().to_density();
        let theta = uniform_theta_grid(7, PI);
        let s = simulate_spectrogram(&rho, &probe, &theta, &observation_window(rho.window(), &probe)).unwrap();
        let back = spectrogram_from_csv(&spectrogram_to_csv(&s), None).unwrap();
        assert_eq!(back, s);
        assert_eq!(spectrogram_from_json(&spectrogram_to_json(&s)).unwrap(), s);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(density_from_json("{\"window\":{\"n_min\":0,\"n_max\":0},\"entries\":[]}").is_err());
        assert!(density_from_json("{\"window\":{\"n_min\":0,\"n_max\":0},\"entries\":[[[\"1\",\"0\"]]],\"x\":1}").is_err());
        assert!(spectrogram_from_csv("sideband,0\n0,1\n", None).is_err());
        assert!(spectrogram_from_csv("sideband,0\n0,1\n2,1\n", Some(Coupling::fundamental(1.0).unwrap())).is_err());
        let ok = spectrogram_from_csv("sideband,0\n0,1\n", Some(Coupling::fundamental(1.0).unwrap())).unwrap();
        assert_eq!(ok.window().len(), 1);
    }
}
