use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use log::info;

use nucleitk_core::batch::{self, PreprocessConfig};
use nucleitk_core::binarize::Polarity;
use nucleitk_core::inpaint::InpaintConfig;
use nucleitk_core::mask::Connectivity;
use nucleitk_core::metrics::Metric;
use nucleitk_core::netspec::{self, Builtin, TensorShape};
use nucleitk_core::pipeline::{AugmentationSpec, Flip};
use nucleitk_core::schedule::{self, LrSchedule, ReadoutTrace};

mod config;

/// Nuclei segmentation toolkit: inpainting, preprocessing, evaluation,
/// training schedules and discriminator shape checks.
#[derive(Debug, Parser)]
#[command(name = "nucleitk", version, args_override_self = true)]
struct Cli {
    /// File of `key = value` lines supplying flags of the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Remove unannotated nuclei from a synthesized image.
    Inpaint(InpaintArgs),
    /// Cut, augment and filter training patches from a source directory.
    Preprocess(PreprocessArgs),
    /// Score predicted label maps against ground truth.
    Eval(EvalArgs),
    /// Per-pixel entropy of a softmax probability map.
    Entropy(EntropyArgs),
    /// Emit per-step loss weights and learning rates.
    Schedule(ScheduleArgs),
    /// Check discriminator shape tables or a custom layer chain.
    Netspec(NetspecArgs),
    /// Print version, build information and defaults.
    Version,
}

#[derive(Debug, Args)]
struct InpaintArgs {
    #[arg(long)]
    image: PathBuf,
    /// Annotation mask; nonzero pixels are annotated nuclei.
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the filled auxiliary mask.
    #[arg(long)]
    aux_out: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    radius: usize,
    #[arg(long, default_value = "dark")]
    polarity: Polarity,
    /// Weight samples by alignment with the front normal and extrapolate
    /// along the image gradient.
    #[arg(long)]
    use_gradient: bool,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// Directory with `images/` and optional `labels/`.
    #[arg(long)]
    src_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 256)]
    patch_size: usize,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 3)]
    min_objects: usize,
    /// Write `255 - p` so foreground is bright.
    #[arg(long)]
    invert: bool,
    /// Foreground polarity used when labels are derived by Otsu.
    #[arg(long, default_value = "dark")]
    polarity: Polarity,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Allowed rotations in degrees.
    #[arg(long, value_delimiter = ',', default_value = "0,90,180,270")]
    rotations: Vec<u32>,
    /// Allowed flips: none, h, v.
    #[arg(long, value_delimiter = ',', default_value = "none,h,v")]
    flips: Vec<Flip>,
    #[arg(long, default_value_t = 0.75)]
    scale_min: f64,
    #[arg(long, default_value_t = 1.25)]
    scale_max: f64,
    /// Plain crops: no rotation, flip or scaling.
    #[arg(long)]
    no_augment: bool,
    #[arg(long, default_value = "8")]
    connectivity: Connectivity,
    /// Rebuild instance ids from connected components of the labels.
    #[arg(long)]
    relabel: bool,
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "aji,pf1,of1")]
    metrics: Vec<Metric>,
    #[arg(long, default_value_t = 0.5)]
    iou_threshold: f64,
    /// Report CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV with header `pred,gt` pairing files explicitly.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
}

#[derive(Debug, Args)]
struct EntropyArgs {
    /// One PNG per class (value / 255), or a single float grid file.
    #[arg(long, num_args = 1.., required = true)]
    prob: Vec<PathBuf>,
    /// `.png` for a rescaled image, anything else for a float CSV.
    #[arg(long)]
    out: PathBuf,
    /// Divide PNG inputs by their per-pixel channel sum.
    #[arg(long)]
    renormalize: bool,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    #[arg(long)]
    total_steps: u64,
    #[arg(long, default_value_t = schedule::DEFAULT_BETA)]
    beta: f64,
    /// Discriminator readouts, CSV `step,p_s_img,p_s_sem,p_s_ins`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Schedule CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = schedule::DEFAULT_WARMUP_STEPS)]
    warmup_steps: u64,
    #[arg(long, default_value_t = schedule::DEFAULT_BASE_LR)]
    base_lr: f64,
    #[arg(long, default_value_t = schedule::DEFAULT_FINAL_LR)]
    final_lr: f64,
}

#[derive(Debug, Args)]
struct NetspecArgs {
    /// Built-in table to check: dimg, dsem, img_pool, ins_flatten or all.
    #[arg(long)]
    check: Option<String>,
    /// Layer chain CSV, rows `kind,k,s,p,out_channels,target`.
    #[arg(long)]
    custom: Option<PathBuf>,
    /// Input shape `CxHxW` for `--custom`.
    #[arg(long, default_value = "2x256x256")]
    input: TensorShape,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<nucleitk_core::Error> for Failure {
    fn from(e: nucleitk_core::Error) -> Self {
        Failure::Data(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let argv: Vec<OsString> = std::env::args_os().collect();
    let cli = match parse(&argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    info!("resolved config: {cli:?}");
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Parses the command line, folding in `--config` when present.
fn parse(argv: &[OsString]) -> Result<Cli, clap::Error> {
    let root = Cli::command();
    let lenient = root.clone().ignore_errors(true).try_get_matches_from(argv);
    let merged = match lenient {
        Ok(first) => match first
            .subcommand()
            .and_then(|(_, m)| m.get_one::<PathBuf>("config").cloned())
            .or_else(|| first.get_one::<PathBuf>("config").cloned())
        {
            Some(path) => config::read_config(&path)
                .and_then(|entries| {
                    config::merge_config(argv, &root, &first, &entries, &path.display().to_string())
                })
                .map_err(|e| root.clone().error(ErrorKind::InvalidValue, e))?,
            None => argv.to_vec(),
        },
        Err(_) => argv.to_vec(),
    };
    let matches = root.try_get_matches_from(merged)?;
    Cli::from_arg_matches(&matches)
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Inpaint(a) => inpaint(a),
        Cmd::Preprocess(a) => preprocess(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Entropy(a) => entropy(a),
        Cmd::Schedule(a) => run_schedule(a),
        Cmd::Netspec(a) => run_netspec(a),
        Cmd::Version => {
            print!("{}", nucleitk_core::version_and_provenance());
            Ok(())
        }
    }
}

fn inpaint(a: InpaintArgs) -> Result<(), Failure> {
    let cfg = InpaintConfig {
        radius: a.radius,
        use_gradient_term: a.use_gradient,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let filled = batch::inpaint_file(
        &a.image,
        &a.mask,
        &a.out,
        a.aux_out.as_deref(),
        &cfg,
        a.polarity,
    )?;
    info!("inpainted {filled} pixels into {}", a.out.display());
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<(), Failure> {
    let aug = if a.no_augment {
        AugmentationSpec::none(a.seed)
    } else {
        let rotations = a
            .rotations
            .iter()
            .map(|&d| match d {
                0 | 90 | 180 | 270 => Ok((d / 90) as u8),
                other => Err(Failure::Usage(format!(
                    "rotation must be 0, 90, 180 or 270, got {other}"
                ))),
            })
            .collect::<Result<_, _>>()?;
        AugmentationSpec {
            rotations,
            flips: a.flips,
            scale_range: (a.scale_min, a.scale_max),
            seed: a.seed,
        }
    };
    aug.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let cfg = PreprocessConfig {
        src_dir: a.src_dir,
        out_dir: a.out_dir,
        patch_size: a.patch_size,
        count: a.count,
        min_objects: a.min_objects,
        invert: a.invert,
        polarity: a.polarity,
        connectivity: a.connectivity,
        relabel: a.relabel,
        aug,
    };
    let summary = batch::with_jobs(a.jobs.max(1), || batch::preprocess_dir(&cfg))??;
    info!(
        "kept {} of {} patches from {} sources",
        summary.kept, summary.generated, summary.sources
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    if !(a.iou_threshold > 0.0 && a.iou_threshold <= 1.0) {
        return Err(Failure::Usage(format!(
            "--iou-threshold must lie in (0, 1], got {}",
            a.iou_threshold
        )));
    }
    let pairs = match &a.manifest {
        Some(m) => batch::pair_by_manifest(m, &a.pred, &a.gt)?,
        None => batch::pair_by_name(&a.pred, &a.gt)?,
    };
    let report = batch::with_jobs(a.jobs.max(1), || {
        batch::evaluate_pairs(&pairs, a.iou_threshold)
    })??;
    write_output(a.out.as_deref(), |w| {
        batch::write_report_csv(&report, &a.metrics, w)
    })?;
    for m in &a.metrics {
        let s = m.of_report(&report);
        info!(
            "{}: {:.4} +/- {:.4} over {} images",
            m.column(),
            s.mean,
            s.std,
            report.rows.len()
        );
    }
    Ok(())
}

fn entropy(a: EntropyArgs) -> Result<(), Failure> {
    let all_png = a.prob.iter().all(|p| has_png_extension(p));
    let prob = match (&a.prob[..], all_png) {
        (_, true) => batch::load_prob_pngs(&a.prob, a.renormalize)?,
        ([grid], false) => batch::load_prob_grid(grid)?,
        _ => {
            return Err(Failure::Usage(
                "--prob takes either PNG planes or a single grid file".into(),
            ))
        }
    };
    batch::entropy_file(&prob, &a.out)?;
    info!(
        "wrote {}x{} entropy map to {}",
        prob.width(),
        prob.height(),
        a.out.display()
    );
    Ok(())
}

fn has_png_extension(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn run_schedule(a: ScheduleArgs) -> Result<(), Failure> {
    let lr = LrSchedule {
        base: a.base_lr,
        final_lr: a.final_lr,
        warmup_steps: a.warmup_steps,
    };
    let trace = match &a.trace {
        Some(path) => {
            let f = File::open(path).map_err(|_| nucleitk_core::Error::NotFound(path.clone()))?;
            Some(ReadoutTrace::from_csv(f, &path.display().to_string())?)
        }
        None => None,
    };
    let rows = schedule::emit_schedule(a.total_steps, a.beta, trace.as_ref(), &lr)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    write_output(a.out.as_deref(), |w| schedule::write_schedule_csv(&rows, w))?;
    Ok(())
}

fn run_netspec(a: NetspecArgs) -> Result<(), Failure> {
    if a.check.is_none() && a.custom.is_none() {
        return Err(Failure::Usage(
            "netspec needs --check and/or --custom".into(),
        ));
    }
    let mut ok = true;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if let Some(which) = &a.check {
        let tables: Vec<Builtin> = if which.eq_ignore_ascii_case("all") {
            Builtin::ALL.to_vec()
        } else {
            vec![which
                .parse()
                .map_err(|e: nucleitk_core::Error| Failure::Usage(e.to_string()))?]
        };
        for t in tables {
            let report = netspec::validate_builtin(t);
            ok &= report.passed();
            write!(out, "{report}").context("writing report")?;
        }
    }
    if let Some(path) = &a.custom {
        let f = File::open(path).map_err(|_| nucleitk_core::Error::NotFound(path.clone()))?;
        let layers = netspec::parse_chain_csv(f, &path.display().to_string())?;
        let shapes = netspec::chain_shapes(a.input, &layers)?;
        writeln!(out, "input {}", a.input).context("writing report")?;
        for (i, s) in shapes.iter().enumerate() {
            writeln!(out, "layer {i}: {s}").context("writing report")?;
        }
    }
    if !ok {
        return Err(anyhow::anyhow!("shape table validation failed").into());
    }
    Ok(())
}

/// Writes to `path`, or to standard output when it is `None`.
fn write_output(
    path: Option<&Path>,
    f: impl FnOnce(&mut dyn Write) -> nucleitk_core::Result<()>,
) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let mut file =
                File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            f(&mut file)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
        }
    }
    Ok(())
}
