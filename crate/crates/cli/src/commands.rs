use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use squirrels_core::analysis::{
    attosecond_pulse, period_grid, pulse_metrics, temporal_density, wigner_from_density, AttosecondConfig,
    OPTICAL_PERIOD,
};
use squirrels_core::forward::Spectrogram;
use squirrels_core::io::{
    benchmark_noise, density_from_json, density_to_json, extract_sidebands_with, spectrogram_from_csv,
    spectrogram_from_json, spectrogram_to_csv, spectrogram_to_json, BenchmarkConfig, ExtractOptions, OutputPaths,
    RawSpectrum, RunConfig,
};
use squirrels_core::ladder::Coupling;
use squirrels_core::rabbitt::rabbitt_retrieve;
use squirrels_core::squirrels::{fit_g_single_color, fit_pure_two_color, squirrels_reconstruct};
use squirrels_core::{Error, Result};

use crate::{Cli, Command, Format};

struct Context<'a> {
    cli: &'a Cli,
    config: Option<RunConfig>,
    outputs: OutputPaths,
}

impl Context<'_> {
    fn config(&self, command: &str) -> Result<&RunConfig> {
        self.config
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("`{command}` needs --config")))
    }

    fn seed(&self) -> u64 {
        self.cli
            .seed
            .or(self.config.as_ref().map(|c| c.seed))
            .unwrap_or(0)
    }

    /// Output path for a table, with the extension following `--format`.
    fn table_path(&self, name: &Path) -> PathBuf {
        let ext = match self.cli.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        self.cli.out.join(name).with_extension(ext)
    }

    fn write(&self, path: &Path, contents: &str) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, contents)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

fn to_json<T: serde::Serialize + ?Sized>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn read_spectrogram(path: &Path, fallback_probe: Option<Coupling>) -> Result<Spectrogram> {
    let text = read(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        spectrogram_from_json(&text)
    } else {
        spectrogram_from_csv(&text, fallback_probe)
    }
}

/// Two-column numeric CSV with a header line; `#` lines are skipped.
fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = read(path)?;
    let mut out = Vec::new();
    let mut header_seen = false;
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.split(',').next().is_some_and(|f| f.trim().parse::<f64>().is_err()) {
                continue;
            }
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::Format(format!("{}:{}: expected two columns", path.display(), k + 1)));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("{}:{}: bad number `{s}`", path.display(), k + 1)))
        };
        out.push((parse(fields[0])?, parse(fields[1])?));
    }
    if out.is_empty() {
        return Err(Error::Format(format!("{}: no data rows", path.display())));
    }
    Ok(out)
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = cli.config.as_deref().map(RunConfig::load).transpose()?;
    let outputs = config.as_ref().map(|c| c.output.clone()).unwrap_or_default();
    let ctx = Context { cli, config, outputs };
    match &cli.command {
        Command::Simulate => simulate(&ctx),
        Command::Reconstruct { input } => reconstruct(&ctx, input),
        Command::Rabbitt { input } => rabbitt(&ctx, input),
        Command::Wigner { input, time_samples } => wigner(&ctx, input, *time_samples),
        Command::PulseMetrics { input, samples } => pulse(&ctx, input.as_deref(), *samples),
        Command::FitG { input, two_color } => fit_g(&ctx, input, *two_color),
        Command::ExtractSidebands {
            input,
            photon_energy,
            no_background,
        } => extract(&ctx, input, *photon_energy, *no_background),
        Command::BenchmarkNoise => benchmark(&ctx),
    }
}

fn simulate(ctx: &Context) -> Result<()> {
    let mut config = ctx.config("simulate")?.clone();
    config.seed = ctx.seed();
    let (rho, s) = config.simulate()?;
    let path = ctx.table_path(&ctx.outputs.spectrogram);
    let body = match ctx.cli.format {
        Format::Csv => spectrogram_to_csv(&s),
        Format::Json => spectrogram_to_json(&s) + "\n",
    };
    ctx.write(&path, &body)?;
    ctx.write(&ctx.cli.out.join("prepared.json"), &(density_to_json(&rho) + "\n"))
}

fn reconstruct(ctx: &Context, input: &Path) -> Result<()> {
    let fallback = ctx.config.as_ref().map(|c| c.couplings.probe);
    let s = read_spectrogram(input, fallback)?;
    let recon = ctx
        .config
        .as_ref()
        .map(|c| c.reconstruction.clone())
        .unwrap_or_default();
    let report = squirrels_reconstruct(&s, s.probe(), &recon)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let refit_residual = {
        let d = report.refit_spectrogram.populations() - s.populations();
        d.norm()
    };
    let summary = json!({
        "alpha_selected": report.alpha_selected,
        "delta": report.delta,
        "tau": recon.tau,
        "snr": report.snr,
        "refit_residual": refit_residual,
        "residual_history": report.residual_history,
        "objective_history": report.objective_history,
        "alpha_curve": report.alpha_curve,
        "state_window": report.state_window,
        "purity": report.rho_hat.purity(),
        "converged": report.converged,
        "warnings": report.warnings,
    });
    ctx.write(&ctx.cli.out.join(&ctx.outputs.density), &(density_to_json(&report.rho_hat) + "\n"))?;
    ctx.write(&ctx.cli.out.join(&ctx.outputs.report), &to_json(&summary))
}

fn rabbitt(ctx: &Context, input: &Path) -> Result<()> {
    let fallback = ctx.config.as_ref().map(|c| c.couplings.probe);
    let s = read_spectrogram(input, fallback)?;
    let result = rabbitt_retrieve(&s, s.probe())?;
    let path = ctx.table_path(Path::new("rabbitt"));
    let body = match ctx.cli.format {
        Format::Json => to_json(&result),
        Format::Csv => {
            let mut out = String::from("order,phase,magnitude,reliable\n");
            for (k, n) in result.even_orders.iter().enumerate() {
                writeln!(
                    out,
                    "{n},{:e},{:e},{}",
                    result.cumulative_phases[k], result.magnitudes[k], result.phase_reliable[k]
                )
                .unwrap();
            }
            out
        }
    };
    ctx.write(&path, &body)
}

fn wigner(ctx: &Context, input: &Path, n_time: usize) -> Result<()> {
    let rho = density_from_json(&read(input)?)?;
    let w = wigner_from_density(&rho, n_time)?;
    let path = ctx.table_path(Path::new("wigner"));
    let body = match ctx.cli.format {
        Format::Json => to_json(&json!({
            "energies": w.energies,
            "times": w.times,
            "values": (0..w.values.nrows())
                .map(|r| w.values.row(r).iter().copied().collect::<Vec<f64>>())
                .collect::<Vec<_>>(),
        })),
        Format::Csv => {
            let mut out = String::from("energy");
            for t in &w.times {
                write!(out, ",{t:e}").unwrap();
            }
            out.push('\n');
            for (r, j) in w.energies.iter().enumerate() {
                write!(out, "{j}").unwrap();
                for v in w.values.row(r).iter() {
                    write!(out, ",{v:e}").unwrap();
                }
                out.push('\n');
            }
            out
        }
    };
    ctx.write(&path, &body)
}

fn pulse(ctx: &Context, input: Option<&Path>, samples: usize) -> Result<()> {
    let (density, metrics) = match input {
        Some(p) => {
            let rho = density_from_json(&read(p)?)?;
            let n = temporal_density(&rho, &period_grid(samples));
            let m = pulse_metrics(&n, OPTICAL_PERIOD)?;
            (n, m)
        }
        None => {
            let cfg = ctx
                .config
                .as_ref()
                .and_then(|c| c.attosecond)
                .unwrap_or_default();
            attosecond_pulse(&AttosecondConfig { samples, ..cfg })?
        }
    };
    let times = period_grid(density.len());
    let path = ctx.table_path(Path::new("temporal_density"));
    let body = match ctx.cli.format {
        Format::Json => to_json(&json!({ "times": times, "density": density })),
        Format::Csv => {
            let mut out = String::from("time,density\n");
            for (t, n) in times.iter().zip(&density) {
                writeln!(out, "{t:e},{n:e}").unwrap();
            }
            out
        }
    };
    ctx.write(&path, &body)?;
    ctx.write(&ctx.cli.out.join("pulse_metrics.json"), &to_json(&metrics))
}

fn fit_g(ctx: &Context, input: &Path, two_color: bool) -> Result<()> {
    let body = if two_color {
        let s = read_spectrogram(input, Some(Coupling::fundamental(0.0)?))?;
        to_json(&fit_pure_two_color(&s)?)
    } else {
        let pairs = read_pairs(input)?;
        let n_min = pairs[0].0.round() as i32;
        for (k, (n, _)) in pairs.iter().enumerate() {
            if n.round() as i32 != n_min + k as i32 {
                return Err(Error::Format("sideband indices must be consecutive".into()));
            }
        }
        let pops: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        to_json(&fit_g_single_color(&pops, n_min)?)
    };
    ctx.write(&ctx.cli.out.join("fit_g.json"), &body)
}

fn extract(ctx: &Context, input: &Path, photon_energy: f64, no_background: bool) -> Result<()> {
    let pairs = read_pairs(input)?;
    let spectrum = RawSpectrum {
        energy_axis: pairs.iter().map(|p| p.0).collect(),
        counts: pairs.iter().map(|p| p.1).collect(),
        photon_energy,
    };
    let opts = ExtractOptions {
        fit_background: !no_background,
        ..Default::default()
    };
    let fit = extract_sidebands_with(&spectrum, &opts)?;
    let path = ctx.table_path(Path::new("sidebands"));
    let body = match ctx.cli.format {
        Format::Json => to_json(&json!({ "n_min": fit.n_min, "populations": fit.populations })),
        Format::Csv => {
            let mut out = String::from("sideband,population\n");
            for (k, p) in fit.populations.iter().enumerate() {
                writeln!(out, "{},{p:e}", fit.n_min + k as i32).unwrap();
            }
            out
        }
    };
    ctx.write(&path, &body)?;
    ctx.write(&ctx.cli.out.join("sideband_fit.json"), &to_json(&fit))
}

fn benchmark(ctx: &Context) -> Result<()> {
    let config: BenchmarkConfig = ctx
        .config
        .as_ref()
        .and_then(|c| c.benchmark.clone())
        .unwrap_or_default();
    let table = benchmark_noise(&config, ctx.seed())?;
    let path = ctx.table_path(&ctx.outputs.table);
    let cells = ctx.table_path(Path::new("cells"));
    match ctx.cli.format {
        Format::Json => {
            ctx.write(&path, &to_json(&table.rows))?;
            ctx.write(&cells, &to_json(&table.cells))
        }
        Format::Csv => {
            ctx.write(&path, &table.to_csv())?;
            ctx.write(&cells, &table.cells_to_csv())
        }
    }
}
