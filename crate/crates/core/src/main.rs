use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use levelbox::synth::{generate_scene, SceneSpec};
use levelbox::{io, metrics, pipeline, selftest, EvolutionConfig, InitMode};

#[derive(Parser)]
#[command(
    name = "levelbox",
    version,
    about = "Box-supervised level-set instance segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment every box of an image.
    Segment(SegmentArgs),
    /// Render a synthetic scene with boxes and ground-truth masks.
    Synth {
        /// JSON scene description.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted masks against ground truth by IoU.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        truth_dir: PathBuf,
    },
    /// Run the built-in consistency checks.
    Selftest,
}

#[derive(Args)]
struct SegmentArgs {
    /// 8-bit PNG or PGM image.
    #[arg(long)]
    image: PathBuf,
    /// Box list, one `id x0 y0 x1 y1` per line.
    #[arg(long)]
    boxes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON file with solver settings; flags below override it.
    #[arg(long = "seed-config-file", alias = "config")]
    config_file: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    delta_t: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// signed_distance, centered_rect or checkerboard.
    #[arg(long)]
    init_mode: Option<InitMode>,
}

impl SegmentArgs {
    fn config(&self) -> Result<EvolutionConfig> {
        let mut cfg = match &self.config_file {
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => EvolutionConfig::default(),
        };
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.lambda1 {
            cfg.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            cfg.lambda2 = v;
        }
        if let Some(v) = self.delta_t {
            cfg.delta_t = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.init_mode {
            cfg.init_mode = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn segment(args: &SegmentArgs) -> Result<()> {
    let cfg = args.config()?;
    let image = io::load_image(&args.image)?;
    let boxes = io::load_boxes(&args.boxes)?;
    let result = pipeline::segment_image(&image, &boxes, &cfg)?;
    let written = io::save_masks(&result, &args.out)?;
    for m in &result.masks {
        println!(
            "instance {:>4}  area {:>6}  iterations {:>4}  objective {:.6e}",
            m.id,
            m.area(),
            m.iterations_run,
            m.final_objective
        );
    }
    for f in &result.failures {
        eprintln!("instance {} failed: {}", f.id, f.message);
    }
    println!("wrote {} files to {}", written.len(), args.out.display());
    if !result.failures.is_empty() {
        bail!("{} instance(s) failed", result.failures.len());
    }
    Ok(())
}

fn synth(spec_path: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let spec: SceneSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", spec_path.display()))?;
    let scene = generate_scene(&spec)?;
    let truth_dir = out.join("truth");
    fs::create_dir_all(&truth_dir).with_context(|| format!("creating {}", truth_dir.display()))?;
    io::save_image(&scene.image, out.join("image.png"))?;
    io::save_boxes(&scene.boxes, out.join("boxes.txt"))?;
    for (b, mask) in scene.boxes.iter().zip(&scene.truth) {
        io::save_binary_mask(
            mask,
            spec.height,
            spec.width,
            truth_dir.join(io::mask_file_name(b.id)),
        )?;
    }
    println!(
        "wrote image.png, boxes.txt and {} truth masks to {}",
        scene.boxes.len(),
        out.display()
    );
    Ok(())
}

/// `mask_<id>.png` files of a directory keyed by id.
fn mask_files(dir: &Path) -> Result<BTreeMap<u32, PathBuf>> {
    let mut found = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if let Some(id) = name
            .strip_prefix("mask_")
            .and_then(|s| s.strip_suffix(".png"))
            .and_then(|s| s.parse().ok())
        {
            found.insert(id, path);
        }
    }
    Ok(found)
}

fn eval(pred_dir: &Path, truth_dir: &Path) -> Result<()> {
    let truth = mask_files(truth_dir)?;
    if truth.is_empty() {
        bail!("no mask_<id>.png files in {}", truth_dir.display());
    }
    let pred = mask_files(pred_dir)?;
    let mut total = 0.0;
    for (id, tpath) in &truth {
        let (t, th, tw) = io::load_binary_mask(tpath)?;
        let iou = match pred.get(id) {
            Some(ppath) => {
                let (p, ph, pw) = io::load_binary_mask(ppath)?;
                if (ph, pw) != (th, tw) {
                    bail!("mask {id}: prediction {pw}x{ph} vs truth {tw}x{th}");
                }
                metrics::mask_iou(&p, &t)?
            }
            None => 0.0,
        };
        println!("instance {id:>4}  iou {iou:.4}");
        total += iou;
    }
    println!("mean_iou {:.4}", total / truth.len() as f64);
    Ok(())
}

fn run_selftest() -> Result<()> {
    let outcomes = selftest::run();
    for c in &outcomes {
        println!(
            "[{}] {} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!("{failed} check(s) failed");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Segment(args) => segment(args),
        Command::Synth { spec, out } => synth(spec, out),
        Command::Eval {
            pred_dir,
            truth_dir,
        } => eval(pred_dir, truth_dir),
        Command::Selftest => run_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
