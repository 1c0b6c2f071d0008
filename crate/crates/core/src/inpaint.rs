//! Fast-marching inpainting.
//!
//! Hole pixels are visited in order of their arrival time `T`, the solution
//! of the unit-speed eikonal equation with `T = 0` on every known pixel.
//! Each visited pixel is filled with a weighted average of the known (or
//! already filled) pixels within `radius`, weighted by inverse distance and
//! by level-set proximity `1 / (1 + |T(p) - T(q)|)`. With the gradient term
//! enabled the weight also includes the alignment of `p - q` with `grad T`,
//! and each sample is extrapolated along the local image gradient.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, GrayImage, Raster};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InpaintConfig {
    /// Neighborhood radius in pixels for the weighted fill.
    pub radius: usize,
    pub use_gradient_term: bool,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self {
            radius: 3,
            use_gradient_term: false,
        }
    }
}

impl InpaintConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radius == 0 {
            return Err(Error::Domain("inpaint radius must be at least 1".into()));
        }
        Ok(())
    }
}

/// Arrival time plus pixel index; ties resolve by row-major index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Arrival(f64, usize);

impl Eq for Arrival {}

impl PartialOrd for Arrival {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Arrival {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Upwind two-neighbor eikonal update with unit speed and unit spacing.
#[inline]
pub(crate) fn eikonal_update(tx: f64, ty: f64) -> f64 {
    let (a, b) = if tx <= ty { (tx, ty) } else { (ty, tx) };
    if b.is_finite() && b - a < 1.0 {
        let d = b - a;
        (a + b + (2.0 - d * d).sqrt()) / 2.0
    } else {
        a + 1.0
    }
}

struct March {
    /// Arrival time for every pixel; 0 on known pixels.
    time: Vec<f64>,
    /// Hole pixels in the order they were finalized.
    order: Vec<usize>,
}

fn march(hole: &BinaryMask) -> Result<March> {
    let (w, h) = hole.dims();
    let holes = hole.as_slice();
    if holes.iter().all(|&b| b) {
        return Err(Error::NoKnownPixels);
    }

    let mut time: Vec<f64> = holes
        .iter()
        .map(|&b| if b { f64::INFINITY } else { 0.0 })
        .collect();
    let mut frozen: Vec<bool> = holes.iter().map(|&b| !b).collect();
    let mut heap = BinaryHeap::new();
    let mut order = Vec::with_capacity(holes.iter().filter(|&&b| b).count());

    let solve = |i: usize, time: &[f64], frozen: &[bool]| -> f64 {
        let (x, y) = (i % w, i / w);
        let pick = |j: usize| if frozen[j] { time[j] } else { f64::INFINITY };
        let mut tx = f64::INFINITY;
        if x > 0 {
            tx = tx.min(pick(i - 1));
        }
        if x + 1 < w {
            tx = tx.min(pick(i + 1));
        }
        let mut ty = f64::INFINITY;
        if y > 0 {
            ty = ty.min(pick(i - w));
        }
        if y + 1 < h {
            ty = ty.min(pick(i + w));
        }
        eikonal_update(tx, ty)
    };

    for i in 0..w * h {
        if holes[i] && has_frozen_neighbor(i, w, h, &frozen) {
            let t = solve(i, &time, &frozen);
            time[i] = t;
            heap.push(Reverse(Arrival(t, i)));
        }
    }

    let mut last = 0.0f64;
    while let Some(Reverse(Arrival(t, i))) = heap.pop() {
        if frozen[i] || t > time[i] {
            continue;
        }
        debug_assert!(t >= last, "front went backwards: {t} after {last}");
        last = t;
        frozen[i] = true;
        order.push(i);
        for n in neighbors4(i, w, h) {
            if frozen[n] {
                continue;
            }
            let candidate = solve(n, &time, &frozen);
            if candidate < time[n] {
                time[n] = candidate;
                heap.push(Reverse(Arrival(candidate, n)));
            }
        }
    }

    Ok(March { time, order })
}

#[inline]
fn neighbors4(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % w, i / w);
    [
        (y > 0).then(|| i - w),
        (x > 0).then(|| i - 1),
        (x + 1 < w).then(|| i + 1),
        (y + 1 < h).then(|| i + w),
    ]
    .into_iter()
    .flatten()
}

fn has_frozen_neighbor(i: usize, w: usize, h: usize, frozen: &[bool]) -> bool {
    neighbors4(i, w, h).any(|n| frozen[n])
}

/// Arrival-time field of the hole: 0 outside, eikonal distance inside.
pub fn eikonal_distance(hole: &BinaryMask) -> Result<Raster<f64>> {
    let March { time, .. } = march(hole)?;
    Raster::new(hole.width(), hole.height(), time)
}

pub fn fast_marching_inpaint(
    img: &GrayImage,
    hole: &BinaryMask,
    cfg: &InpaintConfig,
) -> Result<GrayImage> {
    let mut out = inpaint_channels(std::slice::from_ref(img), hole, cfg)?;
    Ok(out.remove(0))
}

/// Inpaints several channels that share one hole; the fill order and the
/// weights are computed once.
pub fn inpaint_channels(
    channels: &[GrayImage],
    hole: &BinaryMask,
    cfg: &InpaintConfig,
) -> Result<Vec<GrayImage>> {
    cfg.validate()?;
    for c in channels {
        c.ensure_same_dims(hole)?;
    }
    let mut out: Vec<GrayImage> = channels.to_vec();
    if !hole.any() {
        return Ok(out);
    }

    let (w, h) = hole.dims();
    let March { time, order } = march(hole)?;

    let r = cfg.radius as isize;
    let offsets: Vec<(isize, isize, f64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| (dx, dy) != (0, 0) && dx * dx + dy * dy <= r * r)
        .map(|(dx, dy)| (dx, dy, ((dx * dx + dy * dy) as f64).sqrt()))
        .collect();

    let mut known: Vec<bool> = hole.as_slice().iter().map(|&b| !b).collect();
    let mut acc = vec![0.0f64; channels.len()];

    for &p in &order {
        let (px, py) = ((p % w) as isize, (p / w) as isize);
        let grad_t = if cfg.use_gradient_term {
            Some(time_gradient(p, w, h, &time, &known))
        } else {
            None
        };

        acc.iter_mut().for_each(|a| *a = 0.0);
        let mut weight_sum = 0.0;
        for &(dx, dy, dist) in &offsets {
            let (qx, qy) = (px + dx, py + dy);
            if qx < 0 || qy < 0 || qx >= w as isize || qy >= h as isize {
                continue;
            }
            let q = qy as usize * w + qx as usize;
            if !known[q] {
                continue;
            }
            let level = 1.0 / (1.0 + (time[p] - time[q]).abs());
            let mut weight = level / dist;
            // p - q
            let (rx, ry) = (-dx as f64, -dy as f64);
            if let Some((gx, gy)) = grad_t {
                let norm = (gx * gx + gy * gy).sqrt();
                let align = if norm > 0.0 {
                    ((rx * gx + ry * gy) / (dist * norm)).abs().max(1e-6)
                } else {
                    1.0
                };
                weight *= align;
            }
            for (c, a) in out.iter().zip(acc.iter_mut()) {
                let mut sample = c.as_slice()[q] as f64;
                if grad_t.is_some() {
                    let (ix, iy) = image_gradient(c.as_slice(), q, w, h, &known);
                    sample += ix * rx + iy * ry;
                }
                *a += weight * sample;
            }
            weight_sum += weight;
        }

        debug_assert!(weight_sum > 0.0, "finalized pixel without a known neighbor");
        for (c, a) in out.iter_mut().zip(&acc) {
            let v = if weight_sum > 0.0 {
                a / weight_sum
            } else {
                0.0
            };
            c.as_mut_slice()[p] = round_half_up(v);
        }
        known[p] = true;
    }
    Ok(out)
}

#[inline]
fn round_half_up(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Central (or one-sided) difference of `field` at `i` using known samples only.
fn difference(
    field: impl Fn(usize) -> f64,
    i: usize,
    lo: Option<usize>,
    hi: Option<usize>,
    known: &[bool],
) -> f64 {
    let lo = lo.filter(|&j| known[j]);
    let hi = hi.filter(|&j| known[j]);
    match (lo, hi) {
        (Some(a), Some(b)) => (field(b) - field(a)) / 2.0,
        (Some(a), None) => field(i) - field(a),
        (None, Some(b)) => field(b) - field(i),
        (None, None) => 0.0,
    }
}

fn axis_neighbors(i: usize, w: usize, h: usize) -> [(Option<usize>, Option<usize>); 2] {
    let (x, y) = (i % w, i / w);
    [
        ((x > 0).then(|| i - 1), (x + 1 < w).then(|| i + 1)),
        ((y > 0).then(|| i - w), (y + 1 < h).then(|| i + w)),
    ]
}

fn time_gradient(p: usize, w: usize, h: usize, time: &[f64], known: &[bool]) -> (f64, f64) {
    let [(xl, xh), (yl, yh)] = axis_neighbors(p, w, h);
    let t = |j: usize| time[j];
    (
        difference(t, p, xl, xh, known),
        difference(t, p, yl, yh, known),
    )
}

fn image_gradient(data: &[u8], q: usize, w: usize, h: usize, known: &[bool]) -> (f64, f64) {
    let [(xl, xh), (yl, yh)] = axis_neighbors(q, w, h);
    let v = |j: usize| data[j] as f64;
    (
        difference(v, q, xl, xh, known),
        difference(v, q, yl, yh, known),
    )
}
