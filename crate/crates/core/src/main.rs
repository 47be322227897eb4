//! `specmix` command line: scene synthesis, endmember extraction, unmixing,
//! evaluation, and abundance-map rendering.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rand::SeedableRng;

use specmix::config::RunConfig;
use specmix::eea::{build_ensembles, run_eea, EeaAlgorithm};
use specmix::error::Error;
use specmix::fsnet::save_checkpoint;
use specmix::metrics::evaluate;
use specmix::render::{render_abundance_maps, ImageFormat};
use specmix::scene::{
    add_noise, default_library, load_image, load_matrix_csv, save_image, save_matrix_csv,
    synth_scene, NoiseSpec, SceneParams,
};
use specmix::trainer::unmix;

#[derive(Parser)]
#[command(name = "specmix", version, about = "Attention-based hyperspectral unmixing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene with known ground truth.
    Synth(SynthArgs),
    /// Run endmember extraction algorithms on an image.
    Eea(EeaArgs),
    /// Full unmixing: EEAs, ensemble fusion, network training, prediction.
    Unmix(UnmixArgs),
    /// Compare predicted abundances/signatures against ground truth.
    Eval(EvalArgs),
    /// Render abundance rows as grayscale images.
    Render(RenderArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of endmembers.
    #[arg(long)]
    m: usize,
    /// Number of spectral bands.
    #[arg(long)]
    l: usize,
    /// Scene height in pixels.
    #[arg(long)]
    h: usize,
    /// Scene width in pixels.
    #[arg(long)]
    w: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write a noisy variant at this SNR in dB.
    #[arg(long)]
    snr: Option<f64>,
    /// Dirichlet blend fraction of the abundance field; 0 keeps exact pure
    /// pixels at the region seeds, higher values mix regions more.
    #[arg(long, default_value_t = 0.2)]
    blend: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EeaArgs {
    /// Input HSIF image.
    #[arg(long)]
    image: PathBuf,
    /// Comma-separated list from {atgp, vca, nfindr}.
    #[arg(long, value_delimiter = ',')]
    algos: Vec<EeaAlgorithm>,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UnmixArgs {
    /// Input HSIF image (overrides `image` in the config file).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Flat key=value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir` in the config file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra overrides as key=value, e.g. `--set epochs_stage2=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs_an: Option<usize>,
    #[arg(long)]
    epochs_stage1: Option<usize>,
    #[arg(long)]
    epochs_stage2: Option<usize>,
    /// Neighborhood spec, e.g. `shape=circle,level=2` or
    /// `shape=randomnormal,level=3,seed=7`.
    #[arg(long)]
    nbhd: Option<String>,
    /// Comma-separated EEA list.
    #[arg(long)]
    algos: Option<String>,
    #[arg(long)]
    seed_params: Option<u64>,
    #[arg(long)]
    seed_shuffle: Option<u64>,
    #[arg(long)]
    seed_eea: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory with predicted `abundances.csv` and `signatures.csv`.
    #[arg(long)]
    pred: PathBuf,
    /// Directory with ground-truth `abundances.csv` and `signatures.csv`.
    #[arg(long)]
    truth: PathBuf,
    /// Optional path for the JSON report; stdout always gets a table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Abundance CSV, one endmember per row.
    #[arg(long)]
    abundances: PathBuf,
    #[arg(long)]
    h: usize,
    #[arg(long)]
    w: usize,
    #[arg(long)]
    out: PathBuf,
    /// `pgm` or `png`.
    #[arg(long, default_value = "pgm")]
    format: ImageFormatArg,
}

#[derive(Clone)]
struct ImageFormatArg(ImageFormat);

impl std::str::FromStr for ImageFormatArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Ok(ImageFormatArg(s.parse()?))
    }
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let library = default_library(args.m, args.l, &mut rng);
    let (img, truth) = synth_scene(
        args.m,
        args.l,
        args.h,
        args.w,
        args.seed,
        Some(library.view()),
        &SceneParams { dirichlet_blend: args.blend, ..SceneParams::default() },
    )?;
    save_image(&img, &args.out.join("scene.hsif"))?;
    save_matrix_csv(truth.signatures.view(), &args.out.join("signatures.csv"))?;
    save_matrix_csv(truth.abundances.view(), &args.out.join("abundances.csv"))?;
    if let Some(snr) = args.snr {
        let noisy = add_noise(&img, &NoiseSpec { snr_db: snr, seed: args.seed })?;
        let name = format!("scene_snr{}.hsif", snr.round() as i64);
        save_image(&noisy, &args.out.join(name))?;
    }
    println!(
        "wrote scene {}x{}x{} with {} endmembers to {}",
        img.height,
        img.width,
        img.bands,
        args.m,
        args.out.display()
    );
    Ok(())
}

fn cmd_eea(args: &EeaArgs) -> anyhow::Result<()> {
    if args.algos.is_empty() {
        return Err(Error::InvalidArgument("no EEA selected".into()).into());
    }
    std::fs::create_dir_all(&args.out)?;
    let img = load_image(&args.image)?;
    let sets = args
        .algos
        .iter()
        .map(|&a| run_eea(a, img.data.view(), args.m, args.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let ensembles = build_ensembles(&sets, args.m)?;
    for set in &sets {
        let path = args.out.join(format!("endmembers_{}.csv", set.source));
        save_matrix_csv(set.signatures.view(), &path)?;
        if set.degenerate {
            eprintln!("warning: {} flagged the input as degenerate", set.source);
        }
    }
    for (i, group) in ensembles.groups.iter().enumerate() {
        save_matrix_csv(group.view(), &args.out.join(format!("ensemble_{i}.csv")))?;
    }
    println!(
        "extracted {} endmembers with {} algorithms into {}",
        args.m,
        sets.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_unmix(args: &UnmixArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for pair in &args.sets {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set '{pair}' is not KEY=VALUE")))?;
        cfg.set(k.trim(), v)?;
    }
    macro_rules! over {
        ($field:expr, $key:literal) => {
            if let Some(v) = &$field {
                cfg.set($key, &v.to_string())?;
            }
        };
    }
    over!(args.m, "m");
    over!(args.lr, "lr");
    over!(args.batch, "batch");
    over!(args.epochs_an, "epochs_an");
    over!(args.epochs_stage1, "epochs_stage1");
    over!(args.epochs_stage2, "epochs_stage2");
    over!(args.nbhd, "nbhd");
    over!(args.algos, "algos");
    over!(args.seed_params, "seed_params");
    over!(args.seed_shuffle, "seed_shuffle");
    over!(args.seed_eea, "seed_eea");
    if let Some(img) = &args.image {
        cfg.image = Some(img.clone());
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.train.validate()?;

    let image_path = cfg
        .image
        .as_ref()
        .ok_or_else(|| Error::Config("missing key 'image'".into()))?;
    let out_dir = cfg
        .out_dir
        .as_ref()
        .ok_or_else(|| Error::Config("missing key 'out_dir'".into()))?
        .clone();
    let m = cfg.m.ok_or_else(|| Error::Config("missing key 'm'".into()))?;
    std::fs::create_dir_all(&out_dir)?;

    let img = load_image(image_path)?;
    let out = unmix(&img, m, &cfg.algos, &cfg.train, Some(&out_dir))?;
    save_matrix_csv(out.abundances.view(), &out_dir.join("abundances.csv"))?;
    save_matrix_csv(out.signatures.view(), &out_dir.join("signatures.csv"))?;
    save_checkpoint(&out.model, &out_dir.join("model.fscp"))?;
    let report = serde_json::to_string_pretty(&out.report)?;
    std::fs::write(out_dir.join("report.json"), report)?;
    println!(
        "unmixed {} pixels into {} endmembers; results in {}",
        img.num_pixels(),
        m,
        out_dir.display()
    );
    Ok(())
}

fn load_pair(dir: &Path) -> anyhow::Result<(Array2<f64>, Array2<f64>)> {
    let a = load_matrix_csv(&dir.join("abundances.csv"))?;
    let s = load_matrix_csv(&dir.join("signatures.csv"))?;
    Ok((a, s))
}

fn cmd_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let (a_pred, s_pred) = load_pair(&args.pred)?;
    let (a_true, s_true) = load_pair(&args.truth)?;
    let result = evaluate(s_pred.view(), a_pred.view(), s_true.view(), a_true.view())?;
    print!("{}", result.to_table());
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&result)?)?;
    }
    Ok(())
}

fn cmd_render(args: &RenderArgs) -> anyhow::Result<()> {
    let a = load_matrix_csv(&args.abundances)?;
    let paths = render_abundance_maps(a.view(), args.h, args.w, &args.out, args.format.0)?;
    println!("rendered {} maps to {}", paths.len(), args.out.display());
    Ok(())
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Eea(a) => cmd_eea(a),
        Command::Unmix(a) => cmd_unmix(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Render(a) => cmd_render(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
