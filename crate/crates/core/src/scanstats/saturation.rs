use serde::Serialize;

use crate::core::FitResult;
use crate::error::{Error, Result};
use crate::numfit::{fit_nlls, saturation_model};

/// Fitted `I(P) = I_s / (1 + P0 / P)`.
#[derive(Debug, Clone, Serialize)]
pub struct SaturationFit {
    pub i_s_cps: f64,
    pub p0_mw: f64,
    pub fit: FitResult,
}

impl SaturationFit {
    pub fn intensity_at(&self, power_mw: f64) -> f64 {
        self.i_s_cps / (1.0 + self.p0_mw / power_mw)
    }
}

/// Unweighted saturation fit to `(power_mw, counts_per_s)` points, started from
/// `I_s = 1.1 · max(I)` and `P0 = median(P)`.
///
/// Points are sorted before fitting so the result does not depend on input order.
pub fn fit_saturation(points: &[(f64, f64)]) -> Result<SaturationFit> {
    let mut pts = points.to_vec();
    if pts.iter().any(|p| !(p.0 > 0.0) || !p.1.is_finite()) {
        return Err(Error::invalid("powers must be > 0 and intensities finite"));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut distinct: Vec<f64> = pts.iter().map(|p| p.0).collect();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::invalid(
            "saturation fit needs at least 3 distinct powers",
        ));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let max_i = ys.iter().cloned().fold(f64::MIN, f64::max);
    let median_p = {
        let n = xs.len();
        if n % 2 == 1 {
            xs[n / 2]
        } else {
            0.5 * (xs[n / 2 - 1] + xs[n / 2])
        }
    };
    let fit = fit_nlls(
        &saturation_model(),
        &[1.1 * max_i.max(0.0), median_p],
        &xs,
        &ys,
        None,
    )?;
    Ok(SaturationFit {
        i_s_cps: fit.get("I_s"),
        p0_mw: fit.get("P0"),
        fit,
    })
}
