//! Instance segmentation scores and the entropy map of softmax outputs.
//!
//! Empty-vs-empty comparisons score 1.0 for every metric, so a correct
//! "no nuclei" prediction is not penalized; this affects set means.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, LabelMap, Raster};

/// Per-id pixel areas and pairwise overlaps of two label maps.
struct Overlap {
    pred_area: BTreeMap<u16, u64>,
    gt_area: BTreeMap<u16, u64>,
    /// (gt, pred) -> intersecting pixel count, only for non-zero overlaps.
    inter: BTreeMap<(u16, u16), u64>,
}

impl Overlap {
    fn new(pred: &LabelMap, gt: &LabelMap) -> Result<Self> {
        pred.ensure_same_dims(gt)?;
        let mut pred_area = BTreeMap::new();
        let mut gt_area = BTreeMap::new();
        let mut inter = BTreeMap::new();
        for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
            if p > 0 {
                *pred_area.entry(p).or_insert(0) += 1;
            }
            if g > 0 {
                *gt_area.entry(g).or_insert(0) += 1;
            }
            if p > 0 && g > 0 {
                *inter.entry((g, p)).or_insert(0) += 1;
            }
        }
        Ok(Self {
            pred_area,
            gt_area,
            inter,
        })
    }

    fn union(&self, g: u16, p: u16, i: u64) -> u64 {
        self.gt_area[&g] + self.pred_area[&p] - i
    }
}

/// `a.0 / a.1` compared with `b.0 / b.1` exactly.
fn cmp_ratio(a: (u64, u64), b: (u64, u64)) -> std::cmp::Ordering {
    (a.0 as u128 * b.1 as u128).cmp(&(b.0 as u128 * a.1 as u128))
}

/// Aggregated Jaccard Index.
///
/// Each ground-truth instance, in ascending id order, is paired with the
/// not-yet-used predicted instance of highest IoU (smaller id on ties). Only
/// overlapping predictions are candidates; a ground truth with none adds its
/// area to the union alone. Predictions left unpaired add their area to the
/// union at the end.
pub fn aggregated_jaccard_index(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    let ov = Overlap::new(pred, gt)?;
    match (ov.pred_area.is_empty(), ov.gt_area.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }

    let mut used = std::collections::BTreeSet::new();
    let (mut c, mut u) = (0u64, 0u64);
    for (&g, &g_area) in &ov.gt_area {
        let mut best: Option<(u16, u64, u64)> = None;
        for (&(_, p), &i) in ov.inter.range((g, 0)..=(g, u16::MAX)) {
            if used.contains(&p) {
                continue;
            }
            let un = ov.union(g, p, i);
            let better = match best {
                None => true,
                Some((_, bi, bu)) => cmp_ratio((i, un), (bi, bu)).is_gt(),
            };
            if better {
                best = Some((p, i, un));
            }
        }
        match best {
            Some((p, i, un)) => {
                used.insert(p);
                c += i;
                u += un;
            }
            None => u += g_area,
        }
    }
    u += ov
        .pred_area
        .iter()
        .filter(|(p, _)| !used.contains(*p))
        .map(|(_, &a)| a)
        .sum::<u64>();
    Ok(c as f64 / u as f64)
}

/// Dice / F1 of two foreground masks.
pub fn pixel_f1(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    pred.ensure_same_dims(gt)?;
    let (mut both, mut np, mut ng) = (0u64, 0u64, 0u64);
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        np += p as u64;
        ng += g as u64;
        both += (p && g) as u64;
    }
    if np + ng == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (np + ng) as f64)
}

/// Detection F1 under greedy one-to-one matching in descending IoU order.
/// Pairs with `IoU >= iou_threshold` count as true positives.
pub fn object_f1(pred: &LabelMap, gt: &LabelMap, iou_threshold: f64) -> Result<f64> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::Domain(format!(
            "IoU threshold must lie in (0, 1], got {iou_threshold}"
        )));
    }
    let ov = Overlap::new(pred, gt)?;
    let (n_pred, n_gt) = (ov.pred_area.len() as u64, ov.gt_area.len() as u64);
    if n_pred == 0 && n_gt == 0 {
        return Ok(1.0);
    }

    let mut pairs: Vec<(u16, u16, u64, u64)> = ov
        .inter
        .iter()
        .map(|(&(g, p), &i)| (g, p, i, ov.union(g, p, i)))
        .filter(|&(_, _, i, un)| i as f64 / un as f64 >= iou_threshold)
        .collect();
    pairs.sort_by(|a, b| {
        cmp_ratio((b.2, b.3), (a.2, a.3))
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });

    let mut gt_used = std::collections::BTreeSet::new();
    let mut pred_used = std::collections::BTreeSet::new();
    let mut tp = 0u64;
    for (g, p, _, _) in pairs {
        if !gt_used.contains(&g) && !pred_used.contains(&p) {
            gt_used.insert(g);
            pred_used.insert(p);
            tp += 1;
        }
    }
    let (fp, fn_) = (n_pred - tp, n_gt - tp);
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// Per-pixel class probabilities, stored pixel-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

impl ProbMap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 channels, got {channels}"
            )));
        }
        if width == 0 || height == 0 || data.len() != width * height * channels {
            return Err(Error::Validation(format!(
                "{width}x{height}x{channels} map needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        for (i, px) in data.chunks_exact(channels).enumerate() {
            let (x, y) = (i % width, i / width);
            if let Some(v) = px.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Validation(format!(
                    "probability {v} outside [0, 1] at ({x}, {y})"
                )));
            }
            let s: f64 = px.iter().sum();
            if (s - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "probabilities at ({x}, {y}) sum to {s}, not 1"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a map from one raster per class.
    pub fn from_planes(planes: &[Raster<f64>]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::Validation("no probability planes".into()))?;
        for p in planes {
            first.ensure_same_dims(p)?;
        }
        let n = first.len();
        let mut data = Vec::with_capacity(n * planes.len());
        for i in 0..n {
            data.extend(planes.iter().map(|p| p.as_slice()[i]));
        }
        Self::new(first.width(), first.height(), planes.len(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }
}

/// Shannon entropy in nats of each pixel's class distribution (0 ln 0 = 0).
pub fn entropy_map(p: &ProbMap) -> Raster<f64> {
    let data = p
        .data
        .chunks_exact(p.channels)
        .map(|px| {
            -px.iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| v * v.ln())
                .sum::<f64>()
        })
        .map(|e| if e == 0.0 { 0.0 } else { e })
        .collect();
    Raster::new(p.width, p.height, data).expect("prob map dimensions are validated")
}

/// Scores of one prediction / ground-truth pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub aji: f64,
    pub pixel_f1: f64,
    pub object_f1: f64,
}

impl MetricRow {
    pub fn compute(
        name: impl Into<String>,
        pred: &LabelMap,
        gt: &LabelMap,
        iou_threshold: f64,
    ) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            aji: aggregated_jaccard_index(pred, gt)?,
            pixel_f1: pixel_f1(
                &crate::mask::labelmap_to_binary(pred),
                &crate::mask::labelmap_to_binary(gt),
            )?,
            object_f1: object_f1(pred, gt, iou_threshold)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 for a single value.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = compensated_sum(values.iter().copied()) / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
            (ss / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

/// Neumaier summation.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Per-image rows plus mean and standard deviation of each metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub aji: Summary,
    pub pixel_f1: Summary,
    pub object_f1: Summary,
}

impl MetricReport {
    /// Rows are sorted by name so the report does not depend on input order.
    pub fn from_rows(mut rows: Vec<MetricRow>) -> Self {
        rows.sort_by(|a, b| a.name.cmp(&b.name));
        let col = |f: fn(&MetricRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        Self {
            aji: Summary::of(&col(|r| r.aji)),
            pixel_f1: Summary::of(&col(|r| r.pixel_f1)),
            object_f1: Summary::of(&col(|r| r.object_f1)),
            rows,
        }
    }
}

/// Metric columns selectable for reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Aji,
    PixelF1,
    ObjectF1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Aji, Metric::PixelF1, Metric::ObjectF1];

    pub fn column(self) -> &'static str {
        match self {
            Metric::Aji => "aji",
            Metric::PixelF1 => "pixel_f1",
            Metric::ObjectF1 => "object_f1",
        }
    }

    pub fn of_row(self, row: &MetricRow) -> f64 {
        match self {
            Metric::Aji => row.aji,
            Metric::PixelF1 => row.pixel_f1,
            Metric::ObjectF1 => row.object_f1,
        }
    }

    pub fn of_report(self, report: &MetricReport) -> Summary {
        match self {
            Metric::Aji => report.aji,
            Metric::PixelF1 => report.pixel_f1,
            Metric::ObjectF1 => report.object_f1,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aji" => Ok(Metric::Aji),
            "pf1" | "pixel_f1" => Ok(Metric::PixelF1),
            "of1" | "object_f1" => Ok(Metric::ObjectF1),
            other => Err(Error::Domain(format!("unknown metric {other:?}"))),
        }
    }
}
