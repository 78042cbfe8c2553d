use std::fs;
use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::core::RngSpec;
use crate::error::{Error, Result};
use crate::format::fmt_sig;

/// Row-major pixel image. Pixel `(col, row)` covers `[col, col+1) x [row, row+1)` in
/// pixel units, i.e. its center sits at `((col + 0.5) · pixel_um, (row + 0.5) · pixel_um)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixel_um: f64,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixel_um: f64) -> Self {
        Self {
            width,
            height,
            pixel_um,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    /// Physical position (µm) of a point given in pixel-index coordinates.
    pub fn to_um(&self, x_px: f64, y_px: f64) -> (f64, f64) {
        ((x_px + 0.5) * self.pixel_um, (y_px + 0.5) * self.pixel_um)
    }

    /// Circular shift by whole pixels.
    pub fn roll(&self, dx: isize, dy: isize) -> Image {
        let mut out = Image::new(self.width, self.height, self.pixel_um);
        let (w, h) = (self.width as isize, self.height as isize);
        for row in 0..h {
            for col in 0..w {
                let c = (col + dx).rem_euclid(w) as usize;
                let r = (row + dy).rem_euclid(h) as usize;
                out.set(c, r, self.get(col as usize, row as usize));
            }
        }
        out
    }

    /// Comma-separated matrix, one image row per line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for row in self.data.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|&v| fmt_sig(v)).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read_csv(path: &Path, pixel_um: f64) -> Result<Image> {
        let text = fs::read_to_string(path)?;
        let mut data = Vec::new();
        let mut width = None;
        let mut height = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 1,
                    msg: e.to_string(),
                })?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: i as u64 + 1,
                        msg: format!("row has {} values, expected {w}", row.len()),
                    })
                }
                _ => {}
            }
            data.extend(row);
            height += 1;
        }
        let width = width.ok_or_else(|| Error::invalid("empty image file"))?;
        Ok(Image {
            width,
            height,
            pixel_um,
            data,
        })
    }

    /// Binary 16-bit PGM (P5, big-endian); values are rounded and clamped to `0..=65535`.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for &v in &self.data {
            let q = v.round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read_pgm(path: &Path, pixel_um: f64) -> Result<Image> {
        let bytes = fs::read(path)?;
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: msg.to_string(),
        };
        // header: magic, width, height, maxval separated by whitespace, then one byte
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated PGM header"));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        if fields[0] != "P5" {
            return Err(bad("not a binary PGM (P5)"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad PGM header number"));
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        let wide = maxval > 255;
        let bpp = if wide { 2 } else { 1 };
        let body = bytes.get(pos..).ok_or_else(|| bad("missing PGM data"))?;
        if body.len() < width * height * bpp {
            return Err(bad("PGM data shorter than header says"));
        }
        let data = (0..width * height)
            .map(|i| {
                if wide {
                    u16::from_be_bytes([body[2 * i], body[2 * i + 1]]) as f64
                } else {
                    body[i] as f64
                }
            })
            .collect();
        Ok(Image {
            width,
            height,
            pixel_um,
            data,
        })
    }
}

/// One emitter site in a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSite {
    pub x_um: f64,
    pub y_um: f64,
    /// Expected counts integrated over the whole spot.
    pub counts: f64,
}

/// Synthetic confocal scan of point emitters under a Gaussian PSF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    /// Side of the square scan area, µm.
    pub extent_um: f64,
    pub pixel_um: f64,
    /// Lattice pitch the sites were laid out on, µm (informational for registration).
    pub spacing_um: f64,
    pub psf_sigma_um: f64,
    pub sites: Vec<ScanSite>,
    /// Expected background counts per pixel.
    pub background: f64,
}

impl ScanSpec {
    /// Square lattice filling the scan area, cell centers at `(i + 1/2) · spacing`,
    /// rotated by `rotation_deg` about the image center. Sites falling outside the
    /// area after rotation are dropped.
    pub fn square_lattice(
        extent_um: f64,
        pixel_um: f64,
        spacing_um: f64,
        rotation_deg: f64,
        psf_sigma_um: f64,
        site_counts: f64,
        background: f64,
    ) -> Self {
        let n = (extent_um / spacing_um).floor() as usize;
        let c = 0.5 * extent_um;
        let (s, co) = rotation_deg.to_radians().sin_cos();
        let mut sites = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (
                    (i as f64 + 0.5) * spacing_um - c,
                    (j as f64 + 0.5) * spacing_um - c,
                );
                let (xr, yr) = (c + co * x - s * y, c + s * x + co * y);
                if (0.0..extent_um).contains(&xr) && (0.0..extent_um).contains(&yr) {
                    sites.push(ScanSite {
                        x_um: xr,
                        y_um: yr,
                        counts: site_counts,
                    });
                }
            }
        }
        Self {
            extent_um,
            pixel_um,
            spacing_um,
            psf_sigma_um,
            sites,
            background,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_um > 0.0) {
            return Err(Error::invalid("pixel size must be positive"));
        }
        if !(self.extent_um > 0.0) || !(self.spacing_um > 0.0) || !(self.psf_sigma_um > 0.0) {
            return Err(Error::invalid(
                "extent, spacing and PSF width must be positive",
            ));
        }
        if !(self.background >= 0.0) {
            return Err(Error::invalid("background must be >= 0"));
        }
        for s in &self.sites {
            let inside = |v: f64| (0.0..=self.extent_um).contains(&v);
            if !inside(s.x_um) || !inside(s.y_um) {
                return Err(Error::invalid(format!(
                    "site ({}, {}) outside the scan area",
                    s.x_um, s.y_um
                )));
            }
            if !(s.counts >= 0.0) {
                return Err(Error::invalid("site counts must be >= 0"));
            }
        }
        Ok(())
    }

    /// Side length in pixels.
    pub fn pixels(&self) -> usize {
        (self.extent_um / self.pixel_um).round() as usize
    }

    /// Noise-free image: background plus each site's counts spread by the PSF
    /// (sampled at pixel centers, normalized to unit integral).
    pub fn expected_image(&self) -> Result<Image> {
        self.validate()?;
        let n = self.pixels();
        let mut img = Image::new(n, n, self.pixel_um);
        img.data.iter_mut().for_each(|v| *v = self.background);
        let two_s2 = 2.0 * self.psf_sigma_um * self.psf_sigma_um;
        let norm = self.pixel_um * self.pixel_um / (std::f64::consts::PI * two_s2);
        let reach = (6.0 * self.psf_sigma_um / self.pixel_um).ceil() as isize;
        for site in &self.sites {
            let cx = (site.x_um / self.pixel_um - 0.5).round() as isize;
            let cy = (site.y_um / self.pixel_um - 0.5).round() as isize;
            for row in (cy - reach).max(0)..(cy + reach + 1).min(n as isize) {
                for col in (cx - reach).max(0)..(cx + reach + 1).min(n as isize) {
                    let (x, y) = img.to_um(col as f64, row as f64);
                    let r2 = (x - site.x_um).powi(2) + (y - site.y_um).powi(2);
                    let v = site.counts * norm * (-r2 / two_s2).exp();
                    let i = row as usize * n + col as usize;
                    img.data[i] += v;
                }
            }
        }
        Ok(img)
    }
}

/// Poisson realization of [`ScanSpec::expected_image`].
pub fn synth_scan(spec: &ScanSpec, rng: RngSpec) -> Result<Image> {
    let mut img = spec.expected_image()?;
    let mut gen = rng.rng();
    for v in img.data.iter_mut() {
        *v = if *v > 0.0 {
            Poisson::new(*v).expect("positive mean").sample(&mut gen)
        } else {
            0.0
        };
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sites: Vec<ScanSite>, background: f64) -> ScanSpec {
        ScanSpec {
            extent_um: 4.0,
            pixel_um: 0.05,
            spacing_um: 2.0,
            psf_sigma_um: 0.15,
            sites,
            background,
        }
    }

    #[test]
    fn pure_background() {
        let img = synth_scan(&spec(vec![], 9.0), RngSpec::new(1, 0)).unwrap();
        let n = img.data.len() as f64;
        let mean = img.data.iter().sum::<f64>() / n;
        assert!((mean - 9.0).abs() < 3.0 * (9.0 / n).sqrt(), "{mean}");
    }

    #[test]
    fn single_site_moments() {
        let site = ScanSite {
            x_um: 1.93,
            y_um: 2.21,
            counts: 5000.0,
        };
        let img = synth_scan(&spec(vec![site], 0.0), RngSpec::new(2, 0)).unwrap();
        let total: f64 = img.data.iter().sum();
        assert!((total - 5000.0).abs() < 3.0 * 5000f64.sqrt(), "{total}");
        let (mut mx, mut my) = (0.0, 0.0);
        for row in 0..img.height {
            for col in 0..img.width {
                let (x, y) = img.to_um(col as f64, row as f64);
                mx += x * img.get(col, row);
                my += y * img.get(col, row);
            }
        }
        let tol = 0.15 / total.sqrt() * 3.0;
        assert!((mx / total - 1.93).abs() < tol, "{}", mx / total);
        assert!((my / total - 2.21).abs() < tol, "{}", my / total);
    }

    #[test]
    fn rejects_bad_pixel() {
        let mut s = spec(vec![], 1.0);
        s.pixel_um = 0.0;
        assert!(synth_scan(&s, RngSpec::new(0, 0)).is_err());
        s.pixel_um = -1.0;
        assert!(synth_scan(&s, RngSpec::new(0, 0)).is_err());
    }

    #[test]
    fn rejects_site_outside() {
        let s = spec(
            vec![ScanSite {
                x_um: 5.0,
                y_um: 1.0,
                counts: 1.0,
            }],
            1.0,
        );
        assert!(synth_scan(&s, RngSpec::new(0, 0)).is_err());
    }

    #[test]
    fn lattice_geometry() {
        let s = ScanSpec::square_lattice(16.0, 0.1, 2.0, 0.0, 0.15, 100.0, 1.0);
        assert_eq!(s.sites.len(), 64);
        assert_eq!((s.sites[0].x_um, s.sites[0].y_um), (1.0, 1.0));
        let r = ScanSpec::square_lattice(16.0, 0.1, 2.0, 3.0, 0.15, 100.0, 1.0);
        assert_eq!(r.sites.len(), 64);
    }

    #[test]
    fn image_file_roundtrips() {
        let img = synth_scan(&spec(vec![], 30.0), RngSpec::new(3, 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("i.csv");
        let pgm = dir.path().join("i.pgm");
        img.write_csv(&csv).unwrap();
        img.write_pgm(&pgm).unwrap();
        assert_eq!(Image::read_csv(&csv, 0.05).unwrap(), img);
        assert_eq!(Image::read_pgm(&pgm, 0.05).unwrap(), img);
    }
}
