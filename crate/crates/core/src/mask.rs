//! Raster types shared by every stage of the toolkit, plus connected
//! component labeling and the mask set algebra.
//!
//! All rasters are row-major with `index = y * width + x`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// A dense, row-major 2-D raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// 8-bit single-channel intensity image.
pub type GrayImage = Raster<u8>;
/// Boolean mask.
pub type BinaryMask = Raster<bool>;
/// Instance label map; 0 is background, every positive id is one instance.
pub type LabelMap = Raster<u16>;

impl<T> Raster<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "{width}x{height} raster needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn ensure_same_dims<U>(&self, other: &Raster<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dims(self.dims(), other.dims()));
        }
        Ok(())
    }
}

impl<T: Copy> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }
}

impl<T: std::fmt::Debug> std::fmt::Debug for Raster<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("data", &self.data)
            .finish()
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    pub fn all(&self) -> bool {
        self.data.iter().all(|&b| b)
    }
}

/// Pixel adjacency used for labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl TryFrom<u32> for Connectivity {
    type Error = Error;

    fn try_from(value: u32) -> Result<Self> {
        match value {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::Domain(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

impl std::str::FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(Error::Domain(format!(
                "connectivity must be 4 or 8, got {other:?}"
            ))),
        }
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        Self { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the older root so provisional ids stay ordered
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Labels the connected foreground regions of `mask`.
///
/// Ids are assigned `1..=K` in the row-major order in which each component's
/// first pixel is met. Fails with [`Error::TooManyInstances`] when K exceeds
/// `u16::MAX`.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Result<LabelMap> {
    let (w, h) = mask.dims();
    const NONE: u32 = u32::MAX;
    let mut provisional = vec![NONE; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask.data[i] {
                continue;
            }
            let mut label = NONE;
            let visit = |n: usize, label: &mut u32, sets: &mut DisjointSet| {
                let l = provisional[n];
                if l != NONE {
                    if *label == NONE {
                        *label = l;
                    } else {
                        sets.union(*label, l);
                    }
                }
            };
            if x > 0 {
                visit(i - 1, &mut label, &mut sets);
            }
            if y > 0 {
                visit(i - w, &mut label, &mut sets);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        visit(i - w - 1, &mut label, &mut sets);
                    }
                    if x + 1 < w {
                        visit(i - w + 1, &mut label, &mut sets);
                    }
                }
            }
            provisional[i] = if label == NONE { sets.make() } else { label };
        }
    }

    let mut final_id = vec![0u16; sets.parent.len()];
    let mut next: usize = 0;
    let mut out = vec![0u16; w * h];
    for (i, &p) in provisional.iter().enumerate() {
        if p == NONE {
            continue;
        }
        let root = sets.find(p) as usize;
        if final_id[root] == 0 {
            next += 1;
            if next > u16::MAX as usize {
                return Err(Error::TooManyInstances(next));
            }
            final_id[root] = next as u16;
        }
        out[i] = final_id[root];
    }
    Raster::new(w, h, out)
}

fn zip_masks(
    a: &BinaryMask,
    b: &BinaryMask,
    op: impl Fn(bool, bool) -> bool,
) -> Result<BinaryMask> {
    a.ensure_same_dims(b)?;
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&p, &q)| op(p, q))
        .collect();
    Raster::new(a.width, a.height, data)
}

pub fn mask_union(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    zip_masks(a, b, |p, q| p || q)
}

/// Pixels set in `a` but not in `b`.
pub fn mask_difference(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    zip_masks(a, b, |p, q| p && !q)
}

pub fn mask_intersection(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    zip_masks(a, b, |p, q| p && q)
}

pub fn labelmap_to_binary(lm: &LabelMap) -> BinaryMask {
    lm.map(|&id| id > 0)
}

/// Number of distinct positive ids.
pub fn count_objects(lm: &LabelMap) -> usize {
    let mut seen = vec![false; u16::MAX as usize + 1];
    let mut n = 0;
    for &id in &lm.data {
        if id > 0 && !seen[id as usize] {
            seen[id as usize] = true;
            n += 1;
        }
    }
    n
}

/// Distinct positive ids in ascending order.
pub fn instance_ids(lm: &LabelMap) -> Vec<u16> {
    lm.data
        .iter()
        .copied()
        .filter(|&id| id > 0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Renumbers the ids of `lm` to `1..=K` in row-major first-encounter order.
pub fn compact_labels(lm: &LabelMap) -> LabelMap {
    let mut remap = vec![0u16; u16::MAX as usize + 1];
    let mut next = 0u16;
    lm.map(|&id| {
        if id == 0 {
            return 0;
        }
        let slot = &mut remap[id as usize];
        if *slot == 0 {
            next += 1;
            *slot = next;
        }
        *slot
    })
}
