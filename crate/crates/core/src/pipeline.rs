//! The nuclei inpainting mechanism and the patch preprocessing steps.
//!
//! Inpainting removes nuclei that appear in a synthesized image without an
//! annotation: `M_aux = (otsu(S_raw) | M) & !M` marks them, and the image is
//! then filled over `M_aux` by fast marching.
//!
//! Preprocessing normalizes source images to `[0, 255]`, draws seeded random
//! crops with quarter-turn rotation, flips and scaling, drops crops with too
//! few objects and optionally inverts intensities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binarize::{otsu_segment, Polarity};
use crate::error::{Error, Result};
use crate::inpaint::{inpaint_channels, InpaintConfig};
use crate::io::luminance;
use crate::mask::{
    compact_labels, count_objects, mask_difference, mask_union, BinaryMask, GrayImage, LabelMap,
    Raster,
};

pub const DEFAULT_PATCH_SIZE: usize = 256;
pub const DEFAULT_PATCH_COUNT: usize = 10_000;
pub const DEFAULT_MIN_OBJECTS: usize = 3;
pub const DEFAULT_SCALE_RANGE: (f64, f64) = (0.75, 1.25);

/// Nuclei found by Otsu in `s_raw` that the annotation `m` does not cover.
pub fn compute_aux_mask(
    s_raw: &GrayImage,
    m: &BinaryMask,
    polarity: Polarity,
) -> Result<BinaryMask> {
    s_raw.ensure_same_dims(m)?;
    let otsu = otsu_segment(s_raw, polarity)?;
    mask_difference(&mask_union(&otsu, m)?, m)
}

/// Removes unannotated nuclei from a synthesized gray image. Returns the
/// inpainted image and the auxiliary mask that was filled.
pub fn nuclei_inpaint(
    s_raw: &GrayImage,
    m: &BinaryMask,
    cfg: &InpaintConfig,
    polarity: Polarity,
) -> Result<(GrayImage, BinaryMask)> {
    let (mut out, aux) = nuclei_inpaint_channels(std::slice::from_ref(s_raw), m, cfg, polarity)?;
    Ok((out.remove(0), aux))
}

/// Multi-channel variant: the auxiliary mask comes from the luminance of
/// the channels (or the single channel itself), and every channel is then
/// filled over that shared mask.
pub fn nuclei_inpaint_channels(
    channels: &[GrayImage],
    m: &BinaryMask,
    cfg: &InpaintConfig,
    polarity: Polarity,
) -> Result<(Vec<GrayImage>, BinaryMask)> {
    let gray = match channels {
        [g] => g.clone(),
        [r, g, b] => {
            r.ensure_same_dims(g)?;
            r.ensure_same_dims(b)?;
            let (r, g, b) = (r.as_slice(), g.as_slice(), b.as_slice());
            Raster::new(
                channels[0].width(),
                channels[0].height(),
                (0..r.len()).map(|i| luminance(r[i], g[i], b[i])).collect(),
            )?
        }
        other => {
            return Err(Error::InvalidRaster(format!(
                "expected 1 or 3 channels, got {}",
                other.len()
            )))
        }
    };
    let aux = compute_aux_mask(&gray, m, polarity)?;
    let filled = inpaint_channels(channels, &aux, cfg)?;
    Ok((filled, aux))
}

/// Min-max maps `data` onto `[0, 255]`, rounding half up. A constant input
/// maps to all zeros.
pub fn normalize_image<T: Copy + Into<f64>>(
    width: usize,
    height: usize,
    data: &[T],
) -> Result<GrayImage> {
    let values: Vec<f64> = data.iter().map(|&v| v.into()).collect();
    normalize_raster(&Raster::new(width, height, values)?)
}

pub fn normalize_raster(raw: &Raster<f64>) -> Result<GrayImage> {
    if let Some(v) = raw.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "cannot normalize non-finite value {v}"
        )));
    }
    let (lo, hi) = raw
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi <= lo {
        return Ok(raw.map(|_| 0u8));
    }
    let span = hi - lo;
    Ok(raw.map(|&v| (255.0 * (v - lo) / span + 0.5).floor().clamp(0.0, 255.0) as u8))
}

/// `p -> 255 - p`.
pub fn invert_foreground(img: &GrayImage) -> GrayImage {
    img.map(|&v| 255 - v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flip {
    None,
    Horizontal,
    Vertical,
}

impl std::fmt::Display for Flip {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Flip::None => "none",
            Flip::Horizontal => "h",
            Flip::Vertical => "v",
        })
    }
}

impl std::str::FromStr for Flip {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Flip::None),
            "h" | "horizontal" => Ok(Flip::Horizontal),
            "v" | "vertical" => Ok(Flip::Vertical),
            other => Err(Error::Domain(format!("unknown flip {other:?}"))),
        }
    }
}

/// Random augmentation drawn per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    /// Allowed counter-clockwise quarter turns, each in `0..4`.
    pub rotations: Vec<u8>,
    pub flips: Vec<Flip>,
    /// Inclusive scale interval.
    pub scale_range: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            rotations: vec![0, 1, 2, 3],
            flips: vec![Flip::None, Flip::Horizontal, Flip::Vertical],
            scale_range: DEFAULT_SCALE_RANGE,
            seed: 0,
        }
    }
}

impl AugmentationSpec {
    /// Crops only.
    pub fn none(seed: u64) -> Self {
        Self {
            rotations: vec![0],
            flips: vec![Flip::None],
            scale_range: (1.0, 1.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotations.is_empty() || self.rotations.iter().any(|&r| r > 3) {
            return Err(Error::Domain(format!(
                "rotations must be a non-empty set of quarter turns in 0..=3, got {:?}",
                self.rotations
            )));
        }
        if self.flips.is_empty() {
            return Err(Error::Domain("flips must not be empty".into()));
        }
        let (lo, hi) = self.scale_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::Domain(format!("invalid scale range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// Augmentation actually applied to one patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub quarter_turns: u8,
    pub flip: Flip,
    pub scale: f64,
}

impl std::fmt::Display for Augmentation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "rot={};flip={};scale={:.6}",
            self.quarter_turns as u32 * 90,
            self.flip,
            self.scale
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub source: String,
    /// Top-left corner of the crop in the scaled source.
    pub offset: (usize, usize),
    pub augmentation: Augmentation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    /// Position in the generated sequence, before any filtering.
    pub index: usize,
    pub image: GrayImage,
    pub labels: LabelMap,
    pub provenance: Provenance,
    pub object_count: usize,
}

/// An annotated image patches are cut from.
#[derive(Debug, Clone)]
pub struct PatchSource {
    pub id: String,
    pub image: GrayImage,
    pub labels: LabelMap,
}

impl PatchSource {
    pub fn new(id: impl Into<String>, image: GrayImage, labels: LabelMap) -> Result<Self> {
        image.ensure_same_dims(&labels)?;
        Ok(Self {
            id: id.into(),
            image,
            labels,
        })
    }
}

/// Seeded random-access patch generator.
///
/// Patch `i` draws from its own ChaCha stream (`seed`, stream `i`), so any
/// patch can be produced independently of the others and in any order.
#[derive(Debug, Clone)]
pub struct PatchSampler {
    sources: Vec<PatchSource>,
    size: usize,
    count: usize,
    aug: AugmentationSpec,
}

impl PatchSampler {
    /// Checks every source can hold a `size` crop at the smallest scale.
    pub fn new(
        sources: Vec<PatchSource>,
        size: usize,
        count: usize,
        aug: AugmentationSpec,
    ) -> Result<Self> {
        aug.validate()?;
        if sources.is_empty() {
            return Err(Error::Domain("no source images".into()));
        }
        if size == 0 || count == 0 {
            return Err(Error::Domain(format!(
                "patch size and count must be positive, got size={size} count={count}"
            )));
        }
        for s in &sources {
            let (w, h) = scaled_dims(s.image.dims(), aug.scale_range.0);
            if w < size || h < size {
                return Err(Error::Domain(format!(
                    "source {} is {}x{} ({w}x{h} at scale {}); too small for {size}x{size} patches",
                    s.id,
                    s.image.width(),
                    s.image.height(),
                    aug.scale_range.0
                )));
            }
        }
        Ok(Self {
            sources,
            size,
            count,
            aug,
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn patch(&self, index: usize) -> PatchRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(self.aug.seed);
        rng.set_stream(index as u64);

        let src = &self.sources[rng.random_range(0..self.sources.len())];
        let quarter_turns = self.aug.rotations[rng.random_range(0..self.aug.rotations.len())];
        let flip = self.aug.flips[rng.random_range(0..self.aug.flips.len())];
        let (lo, hi) = self.aug.scale_range;
        let scale = if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        };
        let (sw, sh) = scaled_dims(src.image.dims(), scale);
        let ox = rng.random_range(0..=sw - self.size);
        let oy = rng.random_range(0..=sh - self.size);

        let (image, labels) = crop_scaled(src, (ox, oy), self.size, scale);
        let image = orient(&image, quarter_turns, flip);
        let labels = compact_labels(&orient(&labels, quarter_turns, flip));
        let object_count = count_objects(&labels);
        PatchRecord {
            index,
            image,
            labels,
            provenance: Provenance {
                source: src.id.clone(),
                offset: (ox, oy),
                augmentation: Augmentation {
                    quarter_turns,
                    flip,
                    scale,
                },
            },
            object_count,
        }
    }

    /// Patches in index order, produced lazily.
    pub fn iter(&self) -> impl Iterator<Item = PatchRecord> + '_ {
        (0..self.count).map(move |i| self.patch(i))
    }
}

/// Lazily produces `count` augmented `size x size` crops of one image.
/// Fails up front if the image cannot hold a crop at the smallest scale.
pub fn extract_patches(
    img: &GrayImage,
    labels: &LabelMap,
    size: usize,
    count: usize,
    aug: &AugmentationSpec,
) -> Result<impl Iterator<Item = PatchRecord>> {
    let source = PatchSource::new("image", img.clone(), labels.clone())?;
    let sampler = PatchSampler::new(vec![source], size, count, aug.clone())?;
    Ok((0..count).map(move |i| sampler.patch(i)))
}

/// Keeps patches with at least `min_objects` objects, preserving order.
pub fn filter_patches<I>(patches: I, min_objects: usize) -> impl Iterator<Item = PatchRecord>
where
    I: IntoIterator<Item = PatchRecord>,
{
    patches
        .into_iter()
        .filter(move |p| p.object_count >= min_objects)
}

fn scaled_dims((w, h): (usize, usize), scale: f64) -> (usize, usize) {
    (
        (w as f64 * scale).floor() as usize,
        (h as f64 * scale).floor() as usize,
    )
}

/// Samples the crop at `offset` of the source resized by `scale`: bilinear
/// for intensities, nearest neighbor for labels. Pixel centers map as
/// `u = (X + 0.5) / scale - 0.5`.
fn crop_scaled(
    src: &PatchSource,
    (ox, oy): (usize, usize),
    size: usize,
    scale: f64,
) -> (GrayImage, LabelMap) {
    let (w, h) = src.image.dims();
    let img = src.image.as_slice();
    let lab = src.labels.as_slice();
    let mut out_img = Vec::with_capacity(size * size);
    let mut out_lab = Vec::with_capacity(size * size);

    let axis = |start: usize, len: usize| -> Vec<(usize, usize, f64, usize)> {
        (0..size)
            .map(|c| {
                let centre = (start + c) as f64 + 0.5;
                let u = (centre / scale - 0.5).clamp(0.0, (len - 1) as f64);
                let i0 = u.floor() as usize;
                let i1 = (i0 + 1).min(len - 1);
                let nearest = ((centre / scale).floor() as usize).min(len - 1);
                (i0, i1, u - i0 as f64, nearest)
            })
            .collect()
    };
    let xs = axis(ox, w);
    let ys = axis(oy, h);

    for &(y0, y1, fy, ny) in &ys {
        for &(x0, x1, fx, nx) in &xs {
            let v = |x: usize, y: usize| img[y * w + x] as f64;
            let top = v(x0, y0) + (v(x1, y0) - v(x0, y0)) * fx;
            let bottom = v(x0, y1) + (v(x1, y1) - v(x0, y1)) * fx;
            let value = top + (bottom - top) * fy;
            out_img.push((value + 0.5).floor().clamp(0.0, 255.0) as u8);
            out_lab.push(lab[ny * w + nx]);
        }
    }
    (
        Raster::new(size, size, out_img).expect("crop is size x size"),
        Raster::new(size, size, out_lab).expect("crop is size x size"),
    )
}

/// Rotates a square raster by `quarter_turns` counter-clockwise, then flips.
fn orient<T: Copy>(r: &Raster<T>, quarter_turns: u8, flip: Flip) -> Raster<T> {
    let n = r.width();
    debug_assert_eq!(n, r.height());
    let source_of = |x: usize, y: usize| -> (usize, usize) {
        let (x, y) = match flip {
            Flip::None => (x, y),
            Flip::Horizontal => (n - 1 - x, y),
            Flip::Vertical => (x, n - 1 - y),
        };
        // inverse of a counter-clockwise turn applied k times
        match quarter_turns % 4 {
            0 => (x, y),
            1 => (n - 1 - y, x),
            2 => (n - 1 - x, n - 1 - y),
            _ => (y, n - 1 - x),
        }
    };
    Raster::from_fn(n, n, |x, y| {
        let (sx, sy) = source_of(x, y);
        r.get(sx, sy)
    })
    .expect("orientation preserves size")
}
