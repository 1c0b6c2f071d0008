//! Brute-force reference implementations written straight from the metric
//! and algorithm definitions. They share no code with the library paths
//! they check.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use nucleitk_core::mask::{BinaryMask, GrayImage, LabelMap};
use rand::Rng;

/// Number of 4- or 8-connected foreground components by BFS flood fill.
pub fn flood_fill_count(mask: &BinaryMask, eight: bool) -> usize {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for start in 0..w * h {
        if !mask.as_slice()[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if (dx, dy) == (0, 0) || (!eight && dx != 0 && dy != 0) {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.as_slice()[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    count
}

/// Sizes of the components containing each foreground pixel, as a sorted
/// multiset, by flood fill.
pub fn component_sizes(mask: &BinaryMask, eight: bool) -> Vec<usize> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut sizes = Vec::new();
    for start in 0..w * h {
        if !mask.as_slice()[start] || seen[start] {
            continue;
        }
        let mut size = 0;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for (dx, dy) in [
                (-1, 0),
                (1, 0),
                (0, -1),
                (0, 1),
                (-1, -1),
                (1, -1),
                (-1, 1),
                (1, 1),
            ] {
                if !eight && dx != 0 && dy != 0 {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.as_slice()[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable();
    sizes
}

/// Otsu by exhaustive search: for every threshold, class weights and means
/// straight from the pixels; the first maximum wins.
pub fn otsu_oracle(img: &GrayImage) -> Option<u8> {
    let px: Vec<f64> = img.as_slice().iter().map(|&v| v as f64).collect();
    let n = px.len() as f64;
    let mut best: Option<(u8, f64)> = None;
    for t in 0..=255u8 {
        let lo: Vec<f64> = px.iter().copied().filter(|&v| v <= t as f64).collect();
        let hi: Vec<f64> = px.iter().copied().filter(|&v| v > t as f64).collect();
        if lo.is_empty() || hi.is_empty() {
            continue;
        }
        let (w0, w1) = (lo.len() as f64 / n, hi.len() as f64 / n);
        let m0 = lo.iter().sum::<f64>() / lo.len() as f64;
        let m1 = hi.iter().sum::<f64>() / hi.len() as f64;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        match best {
            Some((_, b)) if var <= b => {}
            _ => best = Some((t, var)),
        }
    }
    best.map(|(t, _)| t)
}

fn ids(lm: &LabelMap) -> Vec<u16> {
    lm.as_slice()
        .iter()
        .copied()
        .filter(|&v| v > 0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// (intersection, union) of instance `g` in `gt` and `p` in `pred`, by
/// scanning every pixel.
fn pair_counts(pred: &LabelMap, p: u16, gt: &LabelMap, g: u16) -> (u64, u64) {
    let (mut i, mut u) = (0, 0);
    for (&a, &b) in pred.as_slice().iter().zip(gt.as_slice()) {
        let (in_p, in_g) = (a == p, b == g);
        i += (in_p && in_g) as u64;
        u += (in_p || in_g) as u64;
    }
    (i, u)
}

fn area(lm: &LabelMap, id: u16) -> u64 {
    lm.as_slice().iter().filter(|&&v| v == id).count() as u64
}

/// AJI: ground truths in ascending id; each takes the unused overlapping
/// prediction of largest IoU (smallest id on ties); leftovers join the union.
pub fn aji_oracle(pred: &LabelMap, gt: &LabelMap) -> f64 {
    let (pids, gids) = (ids(pred), ids(gt));
    if pids.is_empty() && gids.is_empty() {
        return 1.0;
    }
    if pids.is_empty() || gids.is_empty() {
        return 0.0;
    }
    let mut used = BTreeSet::new();
    let (mut c, mut u) = (0u64, 0u64);
    for &g in &gids {
        let mut best: Option<(u16, u64, u64, f64)> = None;
        for &p in &pids {
            if used.contains(&p) {
                continue;
            }
            let (i, un) = pair_counts(pred, p, gt, g);
            if i == 0 {
                continue;
            }
            let iou = i as f64 / un as f64;
            if best.is_none_or(|b| iou > b.3) {
                best = Some((p, i, un, iou));
            }
        }
        match best {
            Some((p, i, un, _)) => {
                used.insert(p);
                c += i;
                u += un;
            }
            None => u += area(gt, g),
        }
    }
    for &p in &pids {
        if !used.contains(&p) {
            u += area(pred, p);
        }
    }
    c as f64 / u as f64
}

pub fn pixel_f1_oracle(pred: &BinaryMask, gt: &BinaryMask) -> f64 {
    let p = pred.as_slice().iter().filter(|&&b| b).count();
    let g = gt.as_slice().iter().filter(|&&b| b).count();
    if p + g == 0 {
        return 1.0;
    }
    let both = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .filter(|(&a, &b)| a && b)
        .count();
    2.0 * both as f64 / (p + g) as f64
}

/// Object F1: enumerate all pairs, sort by IoU descending (then gt id, pred
/// id), accept pairs at or above the threshold greedily one-to-one.
pub fn object_f1_oracle(pred: &LabelMap, gt: &LabelMap, threshold: f64) -> f64 {
    let (pids, gids) = (ids(pred), ids(gt));
    if pids.is_empty() && gids.is_empty() {
        return 1.0;
    }
    let mut pairs = Vec::new();
    for &g in &gids {
        for &p in &pids {
            let (i, un) = pair_counts(pred, p, gt, g);
            if i > 0 {
                pairs.push((i as f64 / un as f64, g, p));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let (mut gu, mut pu) = (BTreeSet::new(), BTreeSet::new());
    let mut tp = 0usize;
    for (iou, g, p) in pairs {
        if iou >= threshold && !gu.contains(&g) && !pu.contains(&p) {
            gu.insert(g);
            pu.insert(p);
            tp += 1;
        }
    }
    let (fp, fn_) = (pids.len() - tp, gids.len() - tp);
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Discrete eikonal solution by repeated Gauss-Seidel sweeps in the four
/// diagonal orderings until nothing changes (fast sweeping).
pub fn fast_sweeping(hole: &BinaryMask) -> Vec<f64> {
    let (w, h) = hole.dims();
    let mut t: Vec<f64> = hole
        .as_slice()
        .iter()
        .map(|&b| if b { f64::INFINITY } else { 0.0 })
        .collect();
    let at = |t: &[f64], x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            f64::INFINITY
        } else {
            t[y as usize * w + x as usize]
        }
    };
    loop {
        let mut changed = false;
        for (rx, ry) in [(false, false), (true, false), (false, true), (true, true)] {
            for yi in 0..h {
                for xi in 0..w {
                    let x = if rx { w - 1 - xi } else { xi } as i64;
                    let y = if ry { h - 1 - yi } else { yi } as i64;
                    let i = y as usize * w + x as usize;
                    if !hole.as_slice()[i] {
                        continue;
                    }
                    let a = at(&t, x - 1, y).min(at(&t, x + 1, y));
                    let b = at(&t, x, y - 1).min(at(&t, x, y + 1));
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    let cand = if !lo.is_finite() {
                        f64::INFINITY
                    } else if hi - lo < 1.0 {
                        (lo + hi + (2.0 - (hi - lo) * (hi - lo)).sqrt()) / 2.0
                    } else {
                        lo + 1.0
                    };
                    if cand < t[i] - 1e-13 {
                        t[i] = cand;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return t;
        }
    }
}

/// Shortest 4-neighbor path length (unit edges) from any known pixel.
pub fn grid_distance(hole: &BinaryMask) -> Vec<f64> {
    let (w, h) = hole.dims();
    let mut d = vec![f64::INFINITY; w * h];
    let mut queue = VecDeque::new();
    for (i, (&m, di)) in hole.as_slice().iter().zip(d.iter_mut()).enumerate() {
        if !m {
            *di = 0.0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut nbrs = Vec::new();
        if x > 0 {
            nbrs.push(i - 1);
        }
        if x + 1 < w {
            nbrs.push(i + 1);
        }
        if y > 0 {
            nbrs.push(i - w);
        }
        if y + 1 < h {
            nbrs.push(i + w);
        }
        for j in nbrs {
            if d[j].is_infinite() {
                d[j] = d[i] + 1.0;
                queue.push_back(j);
            }
        }
    }
    d
}

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density)).unwrap()
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random()).unwrap()
}

/// Label map made of up to `max_instances` random axis-aligned rectangles
/// painted in order with random ids (later ones overwrite).
pub fn random_labelmap(rng: &mut impl Rng, w: usize, h: usize, max_instances: usize) -> LabelMap {
    let mut lm = LabelMap::filled(w, h, 0).unwrap();
    let n = rng.random_range(0..=max_instances);
    for _ in 0..n {
        let id: u16 = rng.random_range(1..=40);
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        let (x1, y1) = (rng.random_range(x0..w), rng.random_range(y0..h));
        for y in y0..=y1 {
            for x in x0..=x1 {
                lm.set(x, y, id);
            }
        }
    }
    lm
}

/// A prediction derived from `gt` by shifting it and dropping or merging a
/// few ids, so that overlaps are common.
pub fn perturb_labelmap(rng: &mut impl Rng, gt: &LabelMap) -> LabelMap {
    let (w, h) = gt.dims();
    let (sx, sy) = (rng.random_range(-2i64..=2), rng.random_range(-2i64..=2));
    let remap: Vec<u16> = (0..=40u16)
        .map(|id| match rng.random_range(0..6) {
            0 => 0,
            1 => rng.random_range(1..=40),
            _ => id,
        })
        .collect();
    LabelMap::from_fn(w, h, |x, y| {
        let (ox, oy) = (x as i64 - sx, y as i64 - sy);
        if ox < 0 || oy < 0 || ox >= w as i64 || oy >= h as i64 {
            0
        } else {
            let id = gt.get(ox as usize, oy as usize);
            if id == 0 {
                0
            } else {
                remap[id as usize]
            }
        }
    })
    .unwrap()
}
