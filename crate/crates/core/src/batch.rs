//! File and directory drivers behind the command-line subcommands.
//!
//! Outputs are ordered by input name or patch index, never by completion
//! order, so parallel runs produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use crate::binarize::{otsu_segment, Polarity};
use crate::error::{Error, Result};
use crate::inpaint::InpaintConfig;
use crate::io;
use crate::mask::{
    connected_components, labelmap_to_binary, Connectivity, GrayImage, LabelMap, Raster,
};
use crate::metrics::{entropy_map, Metric, MetricReport, MetricRow, ProbMap};
use crate::pipeline::{
    filter_patches, invert_foreground, normalize_raster, nuclei_inpaint_channels, AugmentationSpec,
    PatchRecord, PatchSampler, PatchSource,
};

/// Runs `f` on a pool of `jobs` threads (0 means rayon's default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(f))
}

fn png_files(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// A prediction / ground-truth pair to score; `name` labels the report row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPair {
    pub name: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
}

/// Pairs `*.png` files by exact file name. Any file without a partner is an
/// error naming it.
pub fn pair_by_name(pred_dir: &Path, gt_dir: &Path) -> Result<Vec<EvalPair>> {
    let preds = png_files(pred_dir)?;
    let gts = png_files(gt_dir)?;
    let gt_set: std::collections::BTreeSet<&String> = gts.iter().collect();
    let pred_set: std::collections::BTreeSet<&String> = preds.iter().collect();
    if let Some(orphan) = preds.iter().find(|p| !gt_set.contains(p)) {
        return Err(Error::Unpaired(format!(
            "{} has no ground truth in {}",
            pred_dir.join(orphan).display(),
            gt_dir.display()
        )));
    }
    if let Some(orphan) = gts.iter().find(|g| !pred_set.contains(g)) {
        return Err(Error::Unpaired(format!(
            "{} has no prediction in {}",
            gt_dir.join(orphan).display(),
            pred_dir.display()
        )));
    }
    Ok(preds
        .into_iter()
        .map(|name| EvalPair {
            pred: pred_dir.join(&name),
            gt: gt_dir.join(&name),
            name,
        })
        .collect())
}

/// Pairs from a CSV manifest with header `pred,gt`; relative paths resolve
/// against `pred_dir` and `gt_dir` respectively.
pub fn pair_by_manifest(manifest: &Path, pred_dir: &Path, gt_dir: &Path) -> Result<Vec<EvalPair>> {
    let source = manifest.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(manifest)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                Error::NotFound(manifest.to_path_buf())
            }
            _ => Error::Csv(e),
        })?;
    if rdr.headers()?.iter().collect::<Vec<_>>() != ["pred", "gt"] {
        return Err(Error::Parse {
            path: source,
            line: 1,
            reason: "expected header pred,gt".into(),
        });
    }
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 || rec[0].is_empty() || rec[1].is_empty() {
            return Err(Error::Parse {
                path: source,
                line,
                reason: "expected two non-empty fields".into(),
            });
        }
        let pred = pred_dir.join(&rec[0]);
        let gt = gt_dir.join(&rec[1]);
        for p in [&pred, &gt] {
            if !p.is_file() {
                return Err(Error::Unpaired(format!(
                    "{} (manifest line {line}) does not exist",
                    p.display()
                )));
            }
        }
        pairs.push(EvalPair {
            name: rec[0].to_string(),
            pred,
            gt,
        });
    }
    Ok(pairs)
}

/// Scores every pair. The first failing file aborts the run.
pub fn evaluate_pairs(pairs: &[EvalPair], iou_threshold: f64) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::Validation(
            "nothing to evaluate: no image pairs".into(),
        ));
    }
    let rows: Vec<MetricRow> = pairs
        .par_iter()
        .map(|pair| {
            let score = || -> Result<MetricRow> {
                let pred = io::load_labelmap(&pair.pred)?;
                let gt = io::load_labelmap(&pair.gt)?;
                MetricRow::compute(pair.name.clone(), &pred, &gt, iou_threshold)
            };
            score().map_err(|e| e.in_file(pair.name.clone()))
        })
        .collect::<Result<_>>()?;
    Ok(MetricReport::from_rows(rows))
}

pub fn evaluate_set(pred_dir: &Path, gt_dir: &Path, iou_threshold: f64) -> Result<MetricReport> {
    evaluate_pairs(&pair_by_name(pred_dir, gt_dir)?, iou_threshold)
}

/// CSV with `filename` and one column per metric, then `MEAN` and `STD` rows.
pub fn write_report_csv(
    report: &MetricReport,
    metrics: &[Metric],
    writer: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["filename"];
    header.extend(metrics.iter().map(|m| m.column()));
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec = vec![row.name.clone()];
        rec.extend(metrics.iter().map(|m| m.of_row(row).to_string()));
        w.write_record(&rec)?;
    }
    let mut mean = vec!["MEAN".to_string()];
    mean.extend(metrics.iter().map(|m| m.of_report(report).mean.to_string()));
    w.write_record(&mean)?;
    let mut std = vec!["STD".to_string()];
    std.extend(metrics.iter().map(|m| m.of_report(report).std.to_string()));
    w.write_record(&std)?;
    w.flush()?;
    Ok(())
}

/// Inpaints one file; gray stays gray and RGB stays RGB.
pub fn inpaint_file(
    image: &Path,
    mask: &Path,
    out: &Path,
    aux_out: Option<&Path>,
    cfg: &InpaintConfig,
    polarity: Polarity,
) -> Result<usize> {
    let channels = io::load_channels(image)?;
    let m = io::load_mask(mask)?;
    let (filled, aux) = nuclei_inpaint_channels(&channels, &m, cfg, polarity)?;
    io::save_channels(&filled, out)?;
    if let Some(path) = aux_out {
        io::save_mask(&aux, path)?;
    }
    Ok(aux.count())
}

#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    /// Holds `images/*.png` and, optionally, `labels/*.png` with the same names.
    pub src_dir: PathBuf,
    pub out_dir: PathBuf,
    pub patch_size: usize,
    pub count: usize,
    pub min_objects: usize,
    pub invert: bool,
    /// Used to derive labels by Otsu when `labels/` is absent.
    pub polarity: Polarity,
    pub connectivity: Connectivity,
    /// Rebuild instance ids by connected components of the label foreground.
    pub relabel: bool,
    pub aug: AugmentationSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessSummary {
    pub sources: usize,
    pub generated: usize,
    pub kept: usize,
}

pub const MANIFEST_HEADER: [&str; 6] = [
    "patch_id",
    "source",
    "offset_x",
    "offset_y",
    "augmentation",
    "object_count",
];

fn load_sources(cfg: &PreprocessConfig) -> Result<Vec<PatchSource>> {
    let image_dir = cfg.src_dir.join("images");
    let label_dir = cfg.src_dir.join("labels");
    let names = png_files(&image_dir)?;
    if names.is_empty() {
        return Err(Error::Validation(format!(
            "no PNG images in {}",
            image_dir.display()
        )));
    }
    let with_labels = label_dir.is_dir();
    if with_labels {
        let labels = png_files(&label_dir)?;
        if let Some(orphan) = labels.iter().find(|l| !names.contains(l)) {
            return Err(Error::Unpaired(format!(
                "{} has no image",
                label_dir.join(orphan).display()
            )));
        }
    }
    names
        .par_iter()
        .map(|name| {
            let load = || -> Result<PatchSource> {
                let image = normalize_raster(&io::load_raw(image_dir.join(name))?)?;
                let labels = if with_labels {
                    let path = label_dir.join(name);
                    if !path.is_file() {
                        return Err(Error::Unpaired(format!(
                            "{} has no label map",
                            image_dir.join(name).display()
                        )));
                    }
                    let lm = io::load_labelmap(path)?;
                    if cfg.relabel {
                        connected_components(&labelmap_to_binary(&lm), cfg.connectivity)?
                    } else {
                        lm
                    }
                } else {
                    connected_components(&otsu_segment(&image, cfg.polarity)?, cfg.connectivity)?
                };
                PatchSource::new(name.clone(), image, labels)
            };
            load().map_err(|e| e.in_file(name.clone()))
        })
        .collect()
}

fn patch_name(index: usize) -> String {
    format!("patch_{index:05}.png")
}

/// Generates, filters and writes patches plus `manifest.csv` and a
/// `provenance.txt` sidecar describing the run.
pub fn preprocess_dir(cfg: &PreprocessConfig) -> Result<PreprocessSummary> {
    let sources = load_sources(cfg)?;
    let n_sources = sources.len();
    let sampler = PatchSampler::new(sources, cfg.patch_size, cfg.count, cfg.aug.clone())?;

    let image_out = cfg.out_dir.join("images");
    let label_out = cfg.out_dir.join("labels");
    fs::create_dir_all(&image_out)?;
    fs::create_dir_all(&label_out)?;

    let mut manifest = csv::Writer::from_path(cfg.out_dir.join("manifest.csv"))?;
    manifest.write_record(MANIFEST_HEADER)?;

    const CHUNK: usize = 64;
    let mut kept = 0usize;
    for start in (0..cfg.count).step_by(CHUNK) {
        let end = (start + CHUNK).min(cfg.count);
        let chunk: Vec<PatchRecord> = (start..end)
            .into_par_iter()
            .map(|i| sampler.patch(i))
            .collect::<Vec<_>>();
        let chunk: Vec<PatchRecord> = filter_patches(chunk, cfg.min_objects)
            .map(|mut p| {
                if cfg.invert {
                    p.image = invert_foreground(&p.image);
                }
                p
            })
            .collect();
        chunk
            .par_iter()
            .map(|p| -> Result<()> {
                let name = patch_name(p.index);
                io::save_gray(&p.image, image_out.join(&name))?;
                io::save_labelmap(&p.labels, label_out.join(&name))
            })
            .collect::<Result<()>>()?;
        for p in &chunk {
            let prov = &p.provenance;
            manifest.write_record([
                patch_name(p.index).trim_end_matches(".png").to_string(),
                prov.source.clone(),
                prov.offset.0.to_string(),
                prov.offset.1.to_string(),
                prov.augmentation.to_string(),
                p.object_count.to_string(),
            ])?;
        }
        kept += chunk.len();
    }
    manifest.flush()?;

    let mut sidecar = fs::File::create(cfg.out_dir.join("provenance.txt"))?;
    write!(sidecar, "{}", crate::provenance::version_and_provenance())?;
    writeln!(sidecar, "run:\n  {cfg:?}")?;
    info!(
        "preprocess: {} sources, {} generated, {kept} kept",
        n_sources, cfg.count
    );
    Ok(PreprocessSummary {
        sources: n_sources,
        generated: cfg.count,
        kept,
    })
}

/// Reads per-class probability planes from 8-bit PNGs (value / 255). With
/// `renormalize` each pixel is divided by its channel sum before validation.
pub fn load_prob_pngs(paths: &[PathBuf], renormalize: bool) -> Result<ProbMap> {
    let planes: Vec<Raster<f64>> = paths
        .iter()
        .map(|p| io::load_gray(p).map(|g| g.map(|&v| v as f64 / 255.0)))
        .collect::<Result<_>>()?;
    if !renormalize {
        return ProbMap::from_planes(&planes);
    }
    let first = planes
        .first()
        .ok_or_else(|| Error::Validation("no probability planes".into()))?;
    for p in &planes {
        first.ensure_same_dims(p)?;
    }
    let sums: Vec<f64> = (0..first.len())
        .map(|i| planes.iter().map(|p| p.as_slice()[i]).sum())
        .collect();
    let planes: Vec<Raster<f64>> = planes
        .iter()
        .map(|p| {
            let data = p
                .as_slice()
                .iter()
                .zip(&sums)
                .map(|(&v, &s)| if s > 0.0 { v / s } else { v })
                .collect();
            Raster::new(p.width(), p.height(), data)
        })
        .collect::<Result<_>>()?;
    ProbMap::from_planes(&planes)
}

/// Reads a text probability grid: a `width,height,channels` line, then one
/// line per pixel in row-major order with `channels` comma-separated values.
pub fn load_prob_grid(path: &Path) -> Result<ProbMap> {
    if !path.is_file() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let source = path.display().to_string();
    let bad = |line: usize, reason: String| Error::Parse {
        path: source.clone(),
        line: line as u64,
        reason,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|f| f.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad(1, "expected width,height,channels".into()))?;
    let [w, h, c] = dims[..] else {
        return Err(bad(1, "expected width,height,channels".into()));
    };
    let mut data = Vec::with_capacity(w * h * c);
    for (i, line) in lines {
        let values: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(i + 1, format!("bad number in {line:?}")))?;
        if values.len() != c {
            return Err(bad(
                i + 1,
                format!("expected {c} values, got {}", values.len()),
            ));
        }
        data.extend(values);
    }
    ProbMap::new(w, h, c, data)
}

pub fn write_float_csv(field: &Raster<f64>, writer: impl Write) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    for row in field.as_slice().chunks(field.width()) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Maps entropy onto `[0, 255]` with `ln(channels)` at full scale.
pub fn entropy_to_gray(entropy: &Raster<f64>, channels: usize) -> GrayImage {
    let max = (channels as f64).ln();
    entropy.map(|&e| (255.0 * e / max + 0.5).floor().clamp(0.0, 255.0) as u8)
}

/// Computes the entropy map and writes it as CSV or, for a `.png` target,
/// as a rescaled gray image.
pub fn entropy_file(prob: &ProbMap, out: &Path) -> Result<Raster<f64>> {
    let e = entropy_map(prob);
    let is_png = out
        .extension()
        .map(|x| x.eq_ignore_ascii_case("png"))
        .unwrap_or(false);
    if is_png {
        io::save_gray(&entropy_to_gray(&e, prob.channels()), out)?;
    } else {
        write_float_csv(&e, fs::File::create(out)?)?;
    }
    Ok(e)
}

/// Loads a label map, re-deriving instances from the foreground when asked.
pub fn load_instances(path: &Path, relabel: Option<Connectivity>) -> Result<LabelMap> {
    let lm = io::load_labelmap(path)?;
    match relabel {
        Some(c) => connected_components(&labelmap_to_binary(&lm), c),
        None => Ok(lm),
    }
}
