use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hbt::estimate_emitter_count;

use super::spots::Spot;

/// One lattice cell of an implanted array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub lattice_index: (i64, i64),
    /// Spot centroid, or the lattice node for empty cells (µm).
    pub position_um: (f64, f64),
    pub intensity: f64,
    #[serde(default)]
    pub g2_zero: Option<f64>,
    pub n_emitters: u32,
}

impl SiteRecord {
    /// Re-estimate `n_emitters` from intensity and (if known) g²(0).
    pub fn classify(&mut self, single_ref_intensity: f64) -> Result<()> {
        self.n_emitters = estimate_emitter_count(
            self.g2_zero.unwrap_or(1.0),
            self.intensity,
            single_ref_intensity,
        )?;
        Ok(())
    }
}

/// Fitted square lattice `p = origin + pitch · R(θ) · (i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRegistration {
    pub origin_um: (f64, f64),
    pub rotation_deg: f64,
    pub pitch_um: f64,
    /// RMS distance between spots and their nodes (µm).
    pub residual_um: f64,
    /// Cells in the bounding box of the occupied nodes, row-major.
    pub sites: Vec<SiteRecord>,
    pub warnings: Vec<String>,
}

fn rotate(theta: f64, x: f64, y: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (c * x - s * y, s * x + c * y)
}

/// Lattice indices of every point for a given pose.
fn assign(pts: &[(f64, f64)], origin: (f64, f64), theta: f64, pitch: f64) -> Vec<(i64, i64)> {
    pts.iter()
        .map(|&(x, y)| {
            let (u, v) = rotate(-theta, x - origin.0, y - origin.1);
            ((u / pitch).round() as i64, (v / pitch).round() as i64)
        })
        .collect()
}

/// Rigid fit with fixed scale of `pitch · idx` onto `pts`: returns `(origin, theta)`.
fn procrustes(pts: &[(f64, f64)], idx: &[(i64, i64)], pitch: f64) -> ((f64, f64), f64) {
    let n = pts.len() as f64;
    let (px, py) = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (qx, qy) = idx.iter().fold((0.0, 0.0), |a, q| {
        (a.0 + pitch * q.0 as f64 / n, a.1 + pitch * q.1 as f64 / n)
    });
    let (mut dot, mut cross) = (0.0, 0.0);
    for (p, q) in pts.iter().zip(idx) {
        let (ax, ay) = (pitch * q.0 as f64 - qx, pitch * q.1 as f64 - qy);
        let (bx, by) = (p.0 - px, p.1 - py);
        dot += ax * bx + ay * by;
        cross += ax * by - ay * bx;
    }
    let theta = cross.atan2(dot);
    let (rx, ry) = rotate(theta, qx, qy);
    ((px - rx, py - ry), theta)
}

/// Initial lattice angle in `(-45°, 45°]` from nearest-neighbour bond directions.
fn bond_angle(pts: &[(f64, f64)]) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for (i, a) in pts.iter().enumerate() {
        let nearest = pts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, b)| (b.0 - a.0, b.1 - a.1))
            .min_by(|u, v| (u.0.hypot(u.1)).total_cmp(&v.0.hypot(v.1)));
        if let Some((dx, dy)) = nearest {
            let phi = 4.0 * dy.atan2(dx);
            s += phi.sin();
            c += phi.cos();
        }
    }
    s.atan2(c) / 4.0
}

fn collinear(pts: &[(f64, f64)]) -> bool {
    let n = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        sxx += (p.0 - mx).powi(2);
        syy += (p.1 - my).powi(2);
        sxy += (p.0 - mx) * (p.1 - my);
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    tr == 0.0 || det <= 1e-12 * tr * tr
}

/// Fit a square lattice of fixed `pitch_um` to spot positions and assign every spot to
/// its nearest node.
///
/// Indices are shifted so the smallest occupied row and column are 0. Rotation is
/// reported in `(-45°, 45°]`. Collinear input fixes the rotation at 0 and records a
/// warning. Every cell in the occupied bounding box gets a [`SiteRecord`]: present spots
/// start with `n_emitters = 1` and empty cells with 0 (see [`SiteRecord::classify`]).
pub fn register_grid(spots: &[Spot], pitch_um: f64) -> Result<GridRegistration> {
    if spots.len() < 3 {
        return Err(Error::invalid(
            "lattice registration needs at least 3 spots",
        ));
    }
    if !(pitch_um > 0.0) {
        return Err(Error::invalid("pitch must be positive"));
    }
    let pts: Vec<(f64, f64)> = spots.iter().map(|s| (s.x_um, s.y_um)).collect();
    let mut warnings = Vec::new();
    let fixed_rotation = collinear(&pts);
    let mut theta = if fixed_rotation {
        warnings.push("spots are collinear; rotation fixed to 0".to_string());
        0.0
    } else {
        bond_angle(&pts)
    };
    // anchor the first pass on the spot nearest the centroid
    let n = pts.len() as f64;
    let c = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let mut origin = *pts
        .iter()
        .min_by(|a, b| {
            (a.0 - c.0)
                .hypot(a.1 - c.1)
                .total_cmp(&(b.0 - c.0).hypot(b.1 - c.1))
        })
        .expect("nonempty");
    let mut idx = assign(&pts, origin, theta, pitch_um);
    for _ in 0..50 {
        let (o, t) = procrustes(&pts, &idx, pitch_um);
        origin = o;
        if fixed_rotation {
            // refit origin only
            let (qx, qy) = idx.iter().fold((0.0, 0.0), |a, q| {
                (
                    a.0 + pitch_um * q.0 as f64 / n,
                    a.1 + pitch_um * q.1 as f64 / n,
                )
            });
            origin = (c.0 - qx, c.1 - qy);
        } else {
            theta = t;
        }
        let next = assign(&pts, origin, theta, pitch_um);
        if next == idx {
            break;
        }
        idx = next;
    }
    // fold the angle into (-45°, 45°] by relabelling axes
    let quarter = std::f64::consts::FRAC_PI_2;
    let turns = (theta / quarter).round();
    if turns != 0.0 {
        theta -= turns * quarter;
        idx = assign(&pts, origin, theta, pitch_um);
    }
    let i0 = idx.iter().map(|q| q.0).min().expect("nonempty");
    let j0 = idx.iter().map(|q| q.1).min().expect("nonempty");
    let (sx, sy) = rotate(theta, pitch_um * i0 as f64, pitch_um * j0 as f64);
    origin = (origin.0 + sx, origin.1 + sy);
    let idx: Vec<(i64, i64)> = idx.iter().map(|q| (q.0 - i0, q.1 - j0)).collect();

    let node = |q: (i64, i64)| {
        let (x, y) = rotate(theta, pitch_um * q.0 as f64, pitch_um * q.1 as f64);
        (origin.0 + x, origin.1 + y)
    };
    let mut ss = 0.0;
    let mut occupied: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut clashes = 0;
    for (k, (&q, p)) in idx.iter().zip(&pts).enumerate() {
        let (nx, ny) = node(q);
        let d = (p.0 - nx).hypot(p.1 - ny);
        ss += d * d;
        match occupied.get(&q) {
            Some(&prev) => {
                clashes += 1;
                let (ox, oy) = pts[prev];
                if d < (ox - nx).hypot(oy - ny) {
                    occupied.insert(q, k);
                }
            }
            None => {
                occupied.insert(q, k);
            }
        }
    }
    if clashes > 0 {
        warnings.push(format!(
            "{clashes} spot(s) share a node with a closer spot and were dropped"
        ));
    }
    let imax = idx.iter().map(|q| q.0).max().expect("nonempty");
    let jmax = idx.iter().map(|q| q.1).max().expect("nonempty");
    let mut sites = Vec::new();
    for j in 0..=jmax {
        for i in 0..=imax {
            sites.push(match occupied.get(&(i, j)) {
                Some(&k) => SiteRecord {
                    lattice_index: (i, j),
                    position_um: pts[k],
                    intensity: spots[k].intensity,
                    g2_zero: None,
                    n_emitters: 1,
                },
                None => SiteRecord {
                    lattice_index: (i, j),
                    position_um: node((i, j)),
                    intensity: 0.0,
                    g2_zero: None,
                    n_emitters: 0,
                },
            });
        }
    }
    Ok(GridRegistration {
        origin_um: origin,
        rotation_deg: theta.to_degrees(),
        pitch_um,
        residual_um: (ss / n).sqrt(),
        sites,
        warnings,
    })
}
