//! Batch front-end: simulate, reconstruct, predict, measure, sobolev,
//! validate-mask — all driven by a declarative JSON config.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 i/o error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tomolab::config::{ExperimentConfig, OutputKind};
use tomolab::error::{Error, Result};
use tomolab::fbp::{self, FilterKind, Image, Sinogram};
use tomolab::io;
use tomolab::mask::{apply, ApodizedMask, Mask, Slope};
use tomolab::microlocal::{
    self, artifact_energy, phantom_boundary_geometry, sobolev_order, streak_geometry, xb_geometry,
    ArtifactPrediction, EnergyOptions, SinoCovector, TubeGeometry, XbFilter,
};
use tomolab::phantom::Phantom;

#[derive(Parser)]
#[command(name = "tomolab", about = "incomplete-data CT artifact laboratory", version)]
struct Cli {
    /// Experiment configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker thread cap (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Seed for randomized measurement controls.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the sinogram (and the masked one, if a mask is configured).
    Simulate,
    /// Reconstruct from the (masked) sinogram.
    Reconstruct(ReconstructArgs),
    /// Predict artifacts from the mask geometry and phantom singularities.
    Predict,
    /// Measure predicted artifacts on a reconstruction.
    Measure(MeasureArgs),
    /// Estimate the spectral decay exponent at a sinogram point.
    Sobolev(SobolevArgs),
    /// Validate the configured mask against the structural assumptions.
    ValidateMask,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Apodization width (overrides the config's `apodize_delta`).
    #[arg(long)]
    apodize: Option<f64>,
    /// Use the Hann-windowed filter instead of the plain ramp.
    #[arg(long)]
    hann: bool,
}

#[derive(Args)]
struct MeasureArgs {
    /// Prediction file (default: <out>/prediction.json, recomputed from the
    /// config when absent).
    #[arg(long)]
    prediction: Option<PathBuf>,
    /// Image file (default: <out>/reconstruction.json).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Tube half-width in pixels.
    #[arg(long, default_value_t = 2.0)]
    half_width: f64,
}

#[derive(Args)]
struct SobolevArgs {
    /// Angular coordinate of the probe point.
    #[arg(long)]
    at_phi: f64,
    /// Offset coordinate of the probe point.
    #[arg(long)]
    at_p: f64,
    /// Covector slope parameter (direction -alpha dtheta + dp).
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Probe the pure dtheta direction instead.
    #[arg(long)]
    vertical: bool,
    /// Gaussian window width.
    #[arg(long, default_value_t = 0.15)]
    sigma: f64,
    /// Number of dyadic radii.
    #[arg(long, default_value_t = 5)]
    levels: usize,
    /// Apply the configured mask before estimating.
    #[arg(long)]
    masked: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("tomolab: cannot configure {} threads: {e}", cli.threads);
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tomolab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Simulate => cmd_simulate(cli),
        Command::Reconstruct(args) => cmd_reconstruct(cli, args),
        Command::Predict => cmd_predict(cli),
        Command::Measure(args) => cmd_measure(cli, args),
        Command::Sobolev(args) => cmd_sobolev(cli, args),
        Command::ValidateMask => cmd_validate_mask(cli),
    }
}

struct Experiment {
    config: ExperimentConfig,
    phantom: Phantom,
    mask: Option<Mask>,
}

impl Experiment {
    fn load(cli: &Cli) -> Result<Self> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| Error::config("--config is required for this command"))?;
        let (config, base) = ExperimentConfig::from_file(path)?;
        let phantom = config.build_phantom(&base)?;
        let mask = config.build_mask(&base)?;
        Ok(Experiment { config, phantom, mask })
    }

    fn simulate(&self) -> Result<Sinogram> {
        Ok(self.phantom.simulate(&self.config.sinogram_grid()?))
    }

    fn apodized(&self, delta_override: Option<f64>) -> Result<Option<ApodizedMask>> {
        let delta = delta_override.or(self.config.apodize_delta);
        match (delta, &self.mask) {
            (Some(d), Some(m)) => Ok(Some(m.apodize(d)?)),
            (Some(_), None) => Err(Error::config("apodize_delta given but no mask configured")),
            (None, _) => Ok(None),
        }
    }

    /// The configured mask (or the trivial full one), validated unless it
    /// came from an approximate raster import.
    fn validated_mask(&self) -> Result<Mask> {
        let mask = self.mask.clone().unwrap_or_else(Mask::full);
        if self.mask.is_some() && !mask.approximate {
            let report = mask.validate();
            if !report.passed {
                return Err(Error::config(format!("configured mask is invalid: {report}")));
            }
        }
        Ok(mask)
    }
}

fn cmd_simulate(cli: &Cli) -> Result<()> {
    let exp = Experiment::load(cli)?;
    let sino = exp.simulate()?;
    io::write_sinogram(&cli.out.join("sinogram.json"), &sino)?;
    if exp.config.wants(OutputKind::Render) {
        io::write_sinogram_pgm(&cli.out.join("sinogram.pgm"), &sino)?;
    }
    if let Some(mask) = &exp.mask {
        let masked = match exp.apodized(None)? {
            Some(ap) => apply(&ap, &sino),
            None => apply(mask, &sino),
        };
        io::write_sinogram(&cli.out.join("sinogram_masked.json"), &masked)?;
        if exp.config.wants(OutputKind::Render) {
            io::write_sinogram_pgm(&cli.out.join("sinogram_masked.pgm"), &masked)?;
        }
    }
    println!("wrote sinogram files to {}", cli.out.display());
    Ok(())
}

fn cmd_reconstruct(cli: &Cli, args: &ReconstructArgs) -> Result<()> {
    let exp = Experiment::load(cli)?;
    let sino = exp.simulate()?;
    let grid = exp.config.image_grid()?;
    let kind = if args.hann { FilterKind::Hann } else { exp.config.filter };
    let img = match (exp.apodized(args.apodize)?, &exp.mask) {
        (Some(ap), _) => fbp::reconstruct_with(&sino, Some(&ap), &grid, kind),
        (None, Some(m)) => fbp::reconstruct_with(&sino, Some(m), &grid, kind),
        (None, None) => fbp::reconstruct_with(&sino, None, &grid, kind),
    };
    io::write_image(&cli.out.join("reconstruction.json"), &img)?;
    if exp.config.wants(OutputKind::Render) {
        io::write_image_pgm(&cli.out.join("reconstruction.pgm"), &img)?;
    }
    println!("wrote reconstruction to {}", cli.out.display());
    Ok(())
}

fn cmd_predict(cli: &Cli) -> Result<()> {
    let exp = Experiment::load(cli)?;
    let mask = exp.validated_mask()?;
    let pred = microlocal::predict_all(&exp.phantom, &mask);
    std::fs::write(
        cli.out.join("prediction.json"),
        serde_json::to_string_pretty(&pred).map_err(Error::from)?,
    )?;

    // overlay CSVs in image coordinates
    let extent = exp.config.image_grid()?.extent;
    let mut streak_rows = vec![];
    for (k, s) in pred.streaks.iter().enumerate() {
        let th = [s.phi.cos(), s.phi.sin()];
        let perp = [-th[1], th[0]];
        let n_pts = 257;
        for i in 0..n_pts {
            let t = -2.0 * extent + 4.0 * extent * i as f64 / (n_pts - 1) as f64;
            let x = s.p * th[0] + t * perp[0];
            let y = s.p * th[1] + t * perp[1];
            if x.abs() <= extent && y.abs() <= extent {
                streak_rows.push(vec![
                    k.to_string(),
                    format!("{:?}", s.cause).to_lowercase(),
                    format!("{:?}", s.status).to_lowercase(),
                    format!("{x:.9}"),
                    format!("{y:.9}"),
                ]);
            }
        }
    }
    io::write_csv(
        &cli.out.join("overlay_streaks.csv"),
        "streak,cause,status,x,y",
        &streak_rows,
    )?;

    let mut curve_rows = vec![];
    for c in &pred.curves {
        for s in &c.samples {
            curve_rows.push(vec![
                c.arc_id.clone(),
                format!("{:.9}", s.phi),
                format!("{:.9}", s.point[0]),
                format!("{:.9}", s.point[1]),
                (s.realized as u8).to_string(),
                (s.in_region as u8).to_string(),
            ]);
        }
    }
    io::write_csv(
        &cli.out.join("overlay_curves.csv"),
        "arc,phi,x,y,realized,in_region",
        &curve_rows,
    )?;
    println!(
        "prediction: {} visible, {} invisible, {} boundary, {} streaks, {} curves",
        pred.visible.len(),
        pred.invisible.len(),
        pred.boundary_cases.len(),
        pred.streaks.len(),
        pred.curves.len()
    );
    Ok(())
}

fn cmd_measure(cli: &Cli, args: &MeasureArgs) -> Result<()> {
    let exp = Experiment::load(cli)?;
    let img_path = args.image.clone().unwrap_or_else(|| cli.out.join("reconstruction.json"));
    let img: Image = io::read_image(&img_path)?;

    let pred_path = args.prediction.clone().unwrap_or_else(|| cli.out.join("prediction.json"));
    let pred: ArtifactPrediction = if pred_path.exists() {
        serde_json::from_str(&std::fs::read_to_string(&pred_path)?)?
    } else {
        microlocal::predict_all(&exp.phantom, &exp.validated_mask()?)
    };

    let extent = img.grid.extent;
    let mut geoms: Vec<(String, String, String, TubeGeometry)> = vec![];
    for (k, s) in pred.streaks.iter().enumerate() {
        geoms.push((
            format!("streak_{k}"),
            format!("{:?}", s.cause).to_lowercase(),
            format!("{:?}", s.status).to_lowercase(),
            streak_geometry(s),
        ));
    }
    for c in &pred.curves {
        if let Some(g) = xb_geometry(c, XbFilter::All, extent) {
            geoms.push((format!("curve_{}", c.arc_id), "curve".into(), "-".into(), g));
        }
    }
    if geoms.is_empty() {
        return Err(Error::numerical("prediction contains no measurable geometry"));
    }

    let boundary = phantom_boundary_geometry(&exp.phantom, 512);
    let mut rows = vec![];
    for (i, (id, cause, status, geom)) in geoms.iter().enumerate() {
        let mut exclusions: Vec<TubeGeometry> = geoms
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, g)| g.3.clone())
            .collect();
        exclusions.push(boundary.clone());
        let opts =
            EnergyOptions { half_width: args.half_width, seed: cli.seed, ..Default::default() };
        match artifact_energy(&img, geom, &exclusions, &opts) {
            Ok(m) => rows.push(vec![
                id.clone(),
                cause.clone(),
                status.clone(),
                format!("{:.6e}", m.signal),
                format!("{:.6e}", m.background),
                format!("{:.4}", m.ratio),
                m.signal_pixels.to_string(),
                m.seed.to_string(),
            ]),
            Err(Error::Numerical(msg)) => rows.push(vec![
                id.clone(),
                cause.clone(),
                status.clone(),
                "-".into(),
                "-".into(),
                format!("skipped: {msg}"),
                "0".into(),
                cli.seed.to_string(),
            ]),
            Err(e) => return Err(e),
        }
    }
    io::write_csv(
        &cli.out.join("metrics.csv"),
        "geometry,cause,status,signal,background,ratio,signal_pixels,seed",
        &rows,
    )?;
    println!("wrote {} measurements to {}", rows.len(), cli.out.join("metrics.csv").display());
    Ok(())
}

fn cmd_sobolev(cli: &Cli, args: &SobolevArgs) -> Result<()> {
    let exp = Experiment::load(cli)?;
    let sino = exp.simulate()?;
    let sino = match (&exp.mask, args.masked) {
        (Some(m), true) => apply(m, &sino),
        _ => sino,
    };
    let alpha = if args.vertical { Slope::Vertical } else { Slope::Finite(args.alpha) };
    let est = sobolev_order(&sino, (args.at_phi, args.at_p), alpha, args.sigma, args.levels)?;
    std::fs::write(
        cli.out.join("sobolev.json"),
        serde_json::to_string_pretty(&est).map_err(Error::from)?,
    )?;
    let cov = SinoCovector { phi: args.at_phi, p: args.at_p, alpha };
    println!(
        "decay exponent {:.3} +- {:.3} at ({:.4}, {:.4}); image point: {}",
        est.exponent,
        est.stderr,
        args.at_phi,
        args.at_p,
        match microlocal::ct_project(&cov) {
            Some((x, _)) => format!("({:.4}, {:.4})", x[0], x[1]),
            None => "none (dtheta direction)".into(),
        }
    );
    Ok(())
}

fn cmd_validate_mask(cli: &Cli) -> Result<()> {
    let exp = Experiment::load(cli)?;
    let Some(mask) = &exp.mask else {
        return Err(Error::config("no mask configured"));
    };
    let report = mask.validate();
    println!("{report}");
    if mask.approximate {
        println!("note: boundary decomposition was inferred from a raster and is approximate");
    }
    if report.passed {
        Ok(())
    } else {
        Err(Error::numerical("mask validation failed"))
    }
}
