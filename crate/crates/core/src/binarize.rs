//! Global Otsu thresholding.

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, GrayImage};

/// Which side of the threshold is foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    /// Foreground is `pixel > t` (fluorescence nuclei).
    BrightForeground,
    /// Foreground is `pixel <= t` (H&E-like stained nuclei).
    DarkForeground,
}

impl std::str::FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "bright" | "bright_foreground" => Ok(Polarity::BrightForeground),
            "dark" | "dark_foreground" => Ok(Polarity::DarkForeground),
            other => Err(Error::Domain(format!(
                "polarity must be `bright` or `dark`, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Polarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Polarity::BrightForeground => "bright",
            Polarity::DarkForeground => "dark",
        })
    }
}

pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in img.as_slice() {
        hist[v as usize] += 1;
    }
    hist
}

/// Otsu threshold of a 256-bin histogram.
///
/// Returns the smallest `t` maximizing the between-class variance of the
/// split `{v <= t} | {v > t}`.
pub fn otsu_threshold_from_histogram(hist: &[u64; 256]) -> Result<u8> {
    let mut occupied = hist.iter().enumerate().filter(|(_, &c)| c > 0);
    let first = occupied.next().map(|(v, _)| v as u8);
    if occupied.next().is_none() {
        return Err(Error::DegenerateHistogram(first.unwrap_or(0)));
    }

    let total: u64 = hist.iter().sum();
    let total_sum: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();

    // sigma_b^2 * N^2 = (N*s0 - n0*S)^2 / (n0*n1); the numerator is formed in
    // exact integers so equal splits compare exactly equal.
    let mut best_t = 0u8;
    let mut best = -1.0f64;
    let (mut n0, mut s0) = (0u64, 0u64);
    for (t, &count) in hist.iter().enumerate().take(255) {
        n0 += count;
        s0 += t as u64 * count;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = total as i128 * s0 as i128 - n0 as i128 * total_sum as i128;
        let d = d as f64;
        let score = d * d / (n0 as f64 * n1 as f64);
        if score > best {
            best = score;
            best_t = t as u8;
        }
    }
    Ok(best_t)
}

pub fn otsu_threshold(img: &GrayImage) -> Result<u8> {
    otsu_threshold_from_histogram(&histogram(img))
}

pub fn apply_threshold(img: &GrayImage, t: u8, polarity: Polarity) -> BinaryMask {
    match polarity {
        Polarity::BrightForeground => img.map(|&v| v > t),
        Polarity::DarkForeground => img.map(|&v| v <= t),
    }
}

pub fn otsu_segment(img: &GrayImage, polarity: Polarity) -> Result<BinaryMask> {
    let t = otsu_threshold(img)?;
    Ok(apply_threshold(img, t, polarity))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_half() -> GrayImage {
        GrayImage::from_fn(8, 8, |x, _| if x < 4 { 50 } else { 200 }).unwrap()
    }

    #[test]
    fn two_level_image_picks_smallest_tied_threshold() {
        assert_eq!(otsu_threshold(&half_half()).unwrap(), 50);
    }

    #[test]
    fn constant_image_is_degenerate() {
        let img = GrayImage::filled(5, 5, 128).unwrap();
        assert!(matches!(
            otsu_threshold(&img),
            Err(Error::DegenerateHistogram(128))
        ));
        assert!(otsu_segment(&img, Polarity::DarkForeground).is_err());
    }

    #[test]
    fn threshold_application() {
        let img = half_half();
        assert!(!apply_threshold(&img, 255, Polarity::BrightForeground).any());
        let fg = apply_threshold(&img, 50, Polarity::BrightForeground);
        for (m, v) in fg.as_slice().iter().zip(img.as_slice()) {
            assert_eq!(*m, *v == 200);
        }
        let dark = apply_threshold(&img, 50, Polarity::DarkForeground);
        assert!(fg
            .as_slice()
            .iter()
            .zip(dark.as_slice())
            .all(|(a, b)| a != b));
        assert_eq!(otsu_segment(&img, Polarity::BrightForeground).unwrap(), fg);
    }

    #[test]
    fn extreme_bins() {
        let img = GrayImage::new(2, 1, vec![0, 255]).unwrap();
        assert_eq!(otsu_threshold(&img).unwrap(), 0);
        let img = GrayImage::new(3, 1, vec![254, 255, 255]).unwrap();
        assert_eq!(otsu_threshold(&img).unwrap(), 254);
    }

    #[test]
    fn polarity_parsing() {
        assert_eq!(
            "dark".parse::<Polarity>().unwrap(),
            Polarity::DarkForeground
        );
        assert_eq!(
            "bright-foreground".parse::<Polarity>().unwrap(),
            Polarity::BrightForeground
        );
        assert!("up".parse::<Polarity>().is_err());
    }
}
