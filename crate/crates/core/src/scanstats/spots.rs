use serde::{Deserialize, Serialize};

use crate::sim::Image;

/// Detected emission spot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spot {
    /// Centroid in pixel-index coordinates.
    pub x_px: f64,
    pub y_px: f64,
    /// Centroid in µm (pixel centers at `(i + 1/2) · pixel`).
    pub x_um: f64,
    pub y_um: f64,
    /// Background-subtracted counts in the 5x5 centroid window.
    pub intensity: f64,
}

const HALF_BOX: isize = 2;

/// Median pixel value, the background estimate of [`detect_spots`].
pub fn median_background(image: &Image) -> f64 {
    let mut v = image.data.clone();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Local maxima above `background + snr_threshold · √background`, where the background
/// is the image median.
///
/// A pixel qualifies if nothing within `min_sep` pixels (Chebyshev distance) is
/// brighter; equal neighbours are resolved in favour of the earlier pixel in row-major
/// order. Positions are refined by the background-subtracted centroid of the 5x5 box
/// around the maximum (clipped at the image border).
pub fn detect_spots(image: &Image, min_sep: usize, snr_threshold: f64) -> Vec<Spot> {
    let (w, h) = (image.width as isize, image.height as isize);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let bg = median_background(image);
    let threshold = bg + snr_threshold * bg.max(0.0).sqrt();
    let r = min_sep as isize;
    let mut spots = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let v = image.get(col as usize, row as usize);
            if v <= threshold {
                continue;
            }
            let idx = row * w + col;
            let mut is_max = true;
            'scan: for rr in (row - r).max(0)..=(row + r).min(h - 1) {
                for cc in (col - r).max(0)..=(col + r).min(w - 1) {
                    let q = image.get(cc as usize, rr as usize);
                    if q > v || (q == v && rr * w + cc < idx) {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if !is_max {
                continue;
            }
            let (mut sx, mut sy, mut sum) = (0.0, 0.0, 0.0);
            for rr in (row - HALF_BOX).max(0)..=(row + HALF_BOX).min(h - 1) {
                for cc in (col - HALF_BOX).max(0)..=(col + HALF_BOX).min(w - 1) {
                    let q = image.get(cc as usize, rr as usize) - bg;
                    sx += q * cc as f64;
                    sy += q * rr as f64;
                    sum += q;
                }
            }
            let (x_px, y_px) = if sum > 0.0 {
                (sx / sum, sy / sum)
            } else {
                (col as f64, row as f64)
            };
            let (x_um, y_um) = image.to_um(x_px, y_px);
            spots.push(Spot {
                x_px,
                y_px,
                x_um,
                y_um,
                intensity: sum.max(0.0),
            });
        }
    }
    spots
}
