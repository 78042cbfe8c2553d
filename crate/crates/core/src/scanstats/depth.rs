use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct DepthStats {
    pub mean_depth_nm: f64,
    /// Weighted standard deviation.
    pub straggle_nm: f64,
    pub total_weight: f64,
    pub profile: Vec<(f64, f64)>,
}

/// Weighted mean and (population) standard deviation of a `(depth_nm, weight)` table.
pub fn depth_stats(profile: &[(f64, f64)]) -> Result<DepthStats> {
    if profile.len() < 2 {
        return Err(Error::invalid("depth profile needs at least 2 rows"));
    }
    if profile
        .iter()
        .any(|&(d, w)| !d.is_finite() || !(w >= 0.0) || !w.is_finite())
    {
        return Err(Error::invalid("depths must be finite and weights >= 0"));
    }
    let total: f64 = profile.iter().map(|p| p.1).sum();
    if !(total > 0.0) {
        return Err(Error::invalid("depth profile weights sum to zero"));
    }
    let mean = profile.iter().map(|&(d, w)| d * w).sum::<f64>() / total;
    let var = profile
        .iter()
        .map(|&(d, w)| w * (d - mean).powi(2))
        .sum::<f64>()
        / total;
    Ok(DepthStats {
        mean_depth_nm: mean,
        straggle_nm: var.sqrt(),
        total_weight: total,
        profile: profile.to_vec(),
    })
}

/// Two-column CSV with header `depth_nm,weight`.
pub fn read_depth_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["depth_nm", "weight"] {
        return Err(err(1, "expected header `depth_nm,weight`".into()));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| err(line, "missing field".into()))?
                .parse::<f64>()
                .map_err(|e| err(line, e.to_string()))
        };
        rows.push((num(0)?, num(1)?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};

    #[test]
    fn delta_profile() {
        let s = depth_stats(&[(41.0, 0.0), (42.0, 3.0), (43.0, 0.0)]).unwrap();
        assert_eq!(s.mean_depth_nm, 42.0);
        assert_eq!(s.straggle_nm, 0.0);
    }

    #[test]
    fn uniform_profile() {
        // cell midpoints of [0, 100]
        let p: Vec<(f64, f64)> = (0..10_000)
            .map(|i| (0.01 * (i as f64 + 0.5), 1.0))
            .collect();
        let s = depth_stats(&p).unwrap();
        assert!((s.mean_depth_nm - 50.0).abs() < 1e-9);
        assert!((s.straggle_nm - 100.0 / 12f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn truncated_gaussian_profile() {
        let (mu, sigma) = (42.0, 35.0);
        let p: Vec<(f64, f64)> = (0..=400)
            .map(|d| {
                let x = d as f64;
                (x, (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp())
            })
            .collect();
        let s = depth_stats(&p).unwrap();
        let n = Normal::new(0.0, 1.0).unwrap();
        let alpha = -mu / sigma;
        let z = 1.0 - n.cdf(alpha);
        let lam = n.pdf(alpha) / z;
        let mean = mu + sigma * lam;
        let sd = sigma * (1.0 + alpha * lam - lam * lam).sqrt();
        assert!(
            (s.mean_depth_nm - mean).abs() < 0.5,
            "{} vs {mean}",
            s.mean_depth_nm
        );
        assert!(
            (s.straggle_nm - sd).abs() < 0.5,
            "{} vs {sd}",
            s.straggle_nm
        );
    }

    #[test]
    fn rejects_bad_profiles() {
        assert!(depth_stats(&[(1.0, 0.0), (2.0, 0.0)]).is_err());
        assert!(depth_stats(&[(1.0, 1.0)]).is_err());
        assert!(depth_stats(&[(1.0, 1.0), (2.0, -1.0)]).is_err());
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("p.csv");
        std::fs::write(&good, "depth_nm,weight\n10,1\n20,3\n").unwrap();
        assert_eq!(
            read_depth_csv(&good).unwrap(),
            vec![(10.0, 1.0), (20.0, 3.0)]
        );
        let bad = dir.path().join("b.csv");
        std::fs::write(&bad, "depth_nm,weight\n10,1\n20,x\n").unwrap();
        match read_depth_csv(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
