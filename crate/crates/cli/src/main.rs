//! `envlight` command-line front-end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use envlight::archspec;
use envlight::benchmark::{run_benchmark, BenchmarkJob, MaskPolicy};
use envlight::clusters::{self, ClusterModel, FeatureConfig};
use envlight::geometry::{crop_fov, solid_angle_weights, CameraPose};
use envlight::io;
use envlight::lights::{angular_error, extract_lights, ExtractConfig};
use envlight::losses::projection_loss;
use envlight::masks::{gen_occlusion_mask, gen_projection_masks};
use envlight::metrics::{fid, FeatureExtractor, PatchStats};
use envlight::tonemap::{log_decode, log_encode, prepare_network_input, ToneMapParams};
use envlight::{Domain, EnvironmentMap, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Parser)]
#[command(name = "envlight", version, about = "HDR environment map processing and benchmarking")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract parametric lights from a linear HDR map.
    ExtractLights {
        map: PathBuf,
        #[arg(long = "max", default_value_t = 5)]
        max_lights: usize,
        /// Shorthand for `--format json`.
        #[arg(long)]
        json: bool,
    },
    /// Angular error (degrees) between the lights of two maps.
    AngularError { gt: PathBuf, pred: PathBuf },
    /// Projection loss between two maps of equal size.
    ProjectionLoss {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 50)]
        masks: usize,
    },
    /// Build the 4-channel network input from a partial map.
    PrepareInput {
        map: PathBuf,
        /// Known-region mask (white = known). Generated from --seed if absent.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Output RGB (.pfm); the mask channel goes to `<out>.mask.png`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Log encoding and decoding.
    Tonemap {
        #[command(subcommand)]
        op: TonemapOp,
    },
    /// Pinhole crop of a map.
    Crop {
        map: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        yaw: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        pitch: f64,
        #[arg(long, default_value_t = 90.0)]
        fov: f64,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// FID between two directories of images (built-in patch statistics).
    Fid { dir_a: PathBuf, dir_b: PathBuf },
    /// Appearance clustering.
    Cluster {
        #[command(subcommand)]
        op: ClusterOp,
    },
    /// Shape and parameter audit of a built-in network.
    Archspec {
        #[arg(value_enum)]
        network: Network,
    },
    /// Compare a directory of predictions against ground truth.
    Benchmark(BenchArgs),
}

#[derive(Subcommand)]
enum TonemapOp {
    /// Linear -> log; prints the exposure factor.
    Encode { input: PathBuf, output: PathBuf },
    /// Log -> linear with a given exposure factor.
    Decode {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        alpha: f64,
    },
}

#[derive(Subcommand)]
enum ClusterOp {
    /// Fit K clusters over the images of a directory.
    Fit {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = clusters::DEFAULT_CLUSTERS)]
        k: usize,
        #[arg(long, default_value_t = clusters::DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// Assign images to the clusters of a fitted model.
    Assign {
        model: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Network {
    Envmapnet,
    Discriminator,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `<pred> <gt>` lines overriding stem pairing.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory of `<id>.png` known-region masks.
    #[arg(long, conflicts_with = "generated_masks")]
    mask_dir: Option<PathBuf>,
    /// Generate occlusion masks with this many regions instead of the center crop.
    #[arg(long)]
    generated_masks: Option<usize>,
    #[arg(long, default_value_t = 90.0)]
    crop_fov: f64,
    #[arg(long, default_value_t = 50)]
    projection_masks: usize,
    #[arg(long)]
    no_fid: bool,
    #[arg(long)]
    no_lights: bool,
}

fn linear(path: &Path) -> Result<EnvironmentMap> {
    let img = io::read_image(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(EnvironmentMap::linear(img))
}

fn images_in(dir: &Path) -> Result<Vec<Image>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && io::ImageFormat::from_path(p).is_ok())
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| io::read_image(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn print_value(format: Format, key: &str, value: f64) {
    match format {
        Format::Json => println!("{}", json!({ key: value })),
        Format::Csv => println!("{key}\n{value}"),
        Format::Text => println!("{value}"),
    }
}

fn run(cli: Cli) -> Result<()> {
    let fmt = cli.format;
    match cli.command {
        Command::ExtractLights { map, max_lights, json } => {
            let cfg = ExtractConfig { max_lights, ..Default::default() };
            let set = extract_lights(&linear(&map)?, &cfg)?;
            if json || fmt == Format::Json {
                println!("{}", serde_json::to_string_pretty(&set.to_json())?);
            } else {
                let sep = if fmt == Format::Csv { "," } else { "\t" };
                println!("{}", ["azimuth_deg", "elevation_deg", "peak", "pixels", "degenerate"].join(sep));
                for r in set.to_records() {
                    println!(
                        "{}",
                        [
                            format!("{:.4}", r.azimuth_deg),
                            format!("{:.4}", r.elevation_deg),
                            format!("{}", r.peak),
                            r.pixels.to_string(),
                            r.degenerate.to_string(),
                        ]
                        .join(sep)
                    );
                }
            }
        }
        Command::AngularError { gt, pred } => {
            let cfg = ExtractConfig::default();
            let g = extract_lights(&linear(&gt)?, &cfg)?;
            let p = extract_lights(&linear(&pred)?, &cfg)?;
            print_value(fmt, "angular_error_deg", angular_error(&g, &p)?);
        }
        Command::ProjectionLoss { a, b, masks } => {
            let (a, b) = (linear(&a)?, linear(&b)?);
            let (w, h) = a.dims();
            let set = gen_projection_masks(w, h, masks, cli.seed)?;
            let loss = projection_loss(&a, &b, &set, &solid_angle_weights(w, h)?)?;
            print_value(fmt, "projection_loss", loss);
        }
        Command::PrepareInput { map, mask, out } => {
            let m = linear(&map)?;
            let (w, h) = m.dims();
            let known = match mask {
                Some(p) => io::read_mask(&p)?,
                None => gen_occlusion_mask(w, h, cli.seed, 2)?.inverted(),
            };
            let input = prepare_network_input(&m, &known, cli.seed, &ToneMapParams::default())?;
            io::write_image(&out, &input.rgb())?;
            let mask_path = out.with_extension("mask.png");
            io::write_mask(&mask_path, &input.unknown_mask())?;
            let summary = json!({
                "rgb": out.display().to_string(),
                "unknown_mask": mask_path.display().to_string(),
                "known_fraction": known.fraction(),
            });
            println!("{summary}");
        }
        Command::Tonemap { op } => match op {
            TonemapOp::Encode { input, output } => {
                let enc = log_encode(&linear(&input)?, &ToneMapParams::default())?;
                io::write_image(&output, &enc.map)?;
                print_value(fmt, "alpha", enc.alpha);
            }
            TonemapOp::Decode { input, output, alpha } => {
                let g = EnvironmentMap::new(io::read_image(&input)?, Domain::Log);
                io::write_image(&output, &log_decode(&g, alpha)?.image)?;
            }
        },
        Command::Crop { map, yaw, pitch, fov, width, height, out } => {
            let pose = CameraPose::new(yaw, pitch, fov)?;
            io::write_image(&out, &crop_fov(&linear(&map)?, &pose, width, height)?)?;
        }
        Command::Fid { dir_a, dir_b } => {
            let value = fid(&images_in(&dir_a)?, &images_in(&dir_b)?, &PatchStats)?;
            match fmt {
                Format::Json => println!("{}", json!({ "fid": value, "extractor": PatchStats.name() })),
                _ => print_value(fmt, "fid", value),
            }
        }
        Command::Cluster { op } => match op {
            ClusterOp::Fit { dir, out, k, max_iter } => {
                let cfg = FeatureConfig { pattern_seed: cli.seed, ..Default::default() };
                let (model, km) = clusters::fit_cluster_model(&images_in(&dir)?, &cfg, k, cli.seed, max_iter)?;
                std::fs::write(&out, model.to_bytes()).with_context(|| format!("writing {}", out.display()))?;
                let summary = json!({
                    "k": model.k(),
                    "dim": model.dim(),
                    "labels": km.labels,
                    "inertia": km.inertia(),
                    "iterations": km.iterations,
                });
                println!("{summary}");
            }
            ClusterOp::Assign { model, images } => {
                let bytes = std::fs::read(&model).with_context(|| format!("reading {}", model.display()))?;
                let m = ClusterModel::from_bytes(&bytes)?;
                for p in images {
                    let id = clusters::assign_cluster(&io::read_image(&p)?, &m, &m.config)?;
                    match fmt {
                        Format::Json => println!("{}", json!({ "image": p.display().to_string(), "cluster": id })),
                        Format::Csv => println!("{},{id}", p.display()),
                        Format::Text => println!("{}\t{id}", p.display()),
                    }
                }
            }
        },
        Command::Archspec { network } => {
            let (cfg, input) = match network {
                Network::Envmapnet => (archspec::envmapnet_config(), archspec::GENERATOR_INPUT),
                Network::Discriminator => (
                    archspec::discriminator_config(clusters::DEFAULT_CLUSTERS),
                    archspec::DISCRIMINATOR_INPUT,
                ),
            };
            let trace = archspec::propagate(&cfg, input)?;
            if fmt != Format::Text {
                for w in &trace.warnings {
                    log::warn!("{w}");
                }
            }
            match fmt {
                Format::Json => println!("{}", serde_json::to_string_pretty(&trace)?),
                Format::Csv => {
                    println!("layer,h,w,c,params");
                    for l in &trace.layers {
                        println!("{},{},{},{},{}", l.name, l.output.h, l.output.w, l.output.c, l.params);
                    }
                }
                Format::Text => print!("{}", trace.to_table()),
            }
        }
        Command::Benchmark(b) => {
            let mut job = BenchmarkJob::new(b.pred, b.gt);
            job.manifest = b.manifest;
            job.seed = cli.seed;
            job.threads = cli.threads;
            job.projection_masks = b.projection_masks;
            job.compute_fid = !b.no_fid;
            job.compute_lights = !b.no_lights;
            job.mask_policy = match (b.mask_dir, b.generated_masks) {
                (Some(d), _) => MaskPolicy::Provided(d),
                (None, Some(n)) => MaskPolicy::Generated { regions: n },
                (None, None) => MaskPolicy::CenterCrop { fov_deg: b.crop_fov },
            };
            let report = run_benchmark(&job)?;
            let body = match fmt {
                Format::Csv => report.to_csv_string(),
                _ => report.to_json_string(),
            };
            std::fs::write(&b.out, body).with_context(|| format!("writing {}", b.out.display()))?;
            let a = &report.aggregate;
            eprintln!(
                "{} pairs, {} skipped, angular error {:?} +/- {:?}, fid {:?}",
                a.pairs,
                a.skipped.len(),
                a.angular_error_mean,
                a.angular_error_std,
                a.fid
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon_threads(cli.threads) {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn rayon_threads(n: usize) -> Result<()> {
    if n > 4096 {
        bail!("--threads {n} is unreasonably large");
    }
    envlight::set_global_threads(n).context("configuring thread pool")
}
