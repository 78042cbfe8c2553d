use serde::Serialize;

use crate::error::{Error, Result};
use crate::numfit::{poisson_mle, ztp_mle, PoissonFit};

use super::grid::SiteRecord;

/// Nominal aperture diameter tolerance, nm.
pub const APERTURE_TOLERANCE_NM: f64 = 10.0;

/// Mean implanted ions through a circular aperture: `fluence · π (d/2)²`.
pub fn ions_per_aperture(fluence_per_cm2: f64, diameter_nm: f64) -> Result<f64> {
    if !(fluence_per_cm2 >= 0.0) || !(diameter_nm >= 0.0) {
        return Err(Error::invalid("fluence and diameter must be >= 0"));
    }
    let radius_cm = 0.5 * diameter_nm * 1e-7;
    Ok(fluence_per_cm2 * std::f64::consts::PI * radius_cm * radius_cm)
}

/// `(low, mean, high)` ions per aperture for a diameter of `d ± tolerance`.
pub fn ions_per_aperture_interval(
    fluence_per_cm2: f64,
    diameter_nm: f64,
    tolerance_nm: f64,
) -> Result<(f64, f64, f64)> {
    Ok((
        ions_per_aperture(fluence_per_cm2, (diameter_nm - tolerance_nm).max(0.0))?,
        ions_per_aperture(fluence_per_cm2, diameter_nm)?,
        ions_per_aperture(fluence_per_cm2, diameter_nm + tolerance_nm)?,
    ))
}

/// Lateral placement uncertainty: aperture radius and lateral straggle in quadrature.
pub fn lateral_uncertainty_nm(diameter_nm: f64, lateral_straggle_nm: f64) -> f64 {
    (0.5 * diameter_nm).hypot(lateral_straggle_nm)
}

/// Estimates over the occupied sites only (conditioned on `n ≥ 1`).
#[derive(Debug, Clone, Serialize)]
pub struct TruncatedYield {
    pub fit: PoissonFit,
    pub n_nonzero: usize,
    /// Fraction of occupied sites holding exactly one emitter.
    pub single_fraction: f64,
    /// `P(1 | n ≥ 1) = λ e^{-λ} / (1 - e^{-λ})` at the truncated estimate.
    pub single_fraction_model: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct YieldReport {
    pub lambda_hat: f64,
    pub lambda_stderr: f64,
    /// Fraction of all sites holding exactly one emitter.
    pub single_fraction: f64,
    /// `λ e^{-λ}` at the plain estimate.
    pub single_fraction_model: f64,
    pub ions_per_aperture: f64,
    /// Optional `(low, high)` range from the aperture tolerance.
    pub ions_per_aperture_range: Option<(f64, f64)>,
    pub conversion_yield: f64,
    pub n_sites: usize,
    /// `None` when fewer than two distinct nonzero counts make the truncated mean
    /// infeasible (all occupied sites singles).
    pub zero_truncated: Option<TruncatedYield>,
    pub zero_truncated_note: Option<String>,
}

/// Poisson yield statistics over sites, with a zero-truncated estimate over the
/// occupied ones.
pub fn yield_report(sites: &[SiteRecord], ions_per_aperture: f64) -> Result<YieldReport> {
    let counts: Vec<u64> = sites.iter().map(|s| s.n_emitters as u64).collect();
    yield_from_counts(&counts, ions_per_aperture)
}

pub fn yield_from_counts(counts: &[u64], ions_per_aperture: f64) -> Result<YieldReport> {
    if counts.is_empty() {
        return Err(Error::invalid("yield report needs at least one site"));
    }
    if !(ions_per_aperture > 0.0) {
        return Err(Error::invalid("ions per aperture must be > 0"));
    }
    let plain = poisson_mle(counts)?;
    let n = counts.len();
    let singles = counts.iter().filter(|&&c| c == 1).count();
    let nonzero: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    let (zero_truncated, note) = if nonzero.is_empty() {
        (None, Some("no occupied sites".to_string()))
    } else {
        match ztp_mle(&nonzero) {
            Ok(fit) => {
                let l = fit.lambda_hat;
                (
                    Some(TruncatedYield {
                        single_fraction: singles as f64 / nonzero.len() as f64,
                        single_fraction_model: l * (-l).exp() / -(-l).exp_m1(),
                        n_nonzero: nonzero.len(),
                        fit,
                    }),
                    None,
                )
            }
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let l = plain.lambda_hat;
    Ok(YieldReport {
        lambda_hat: l,
        lambda_stderr: plain.stderr,
        single_fraction: singles as f64 / n as f64,
        single_fraction_model: l * (-l).exp(),
        ions_per_aperture,
        ions_per_aperture_range: None,
        conversion_yield: l / ions_per_aperture,
        n_sites: n,
        zero_truncated,
        zero_truncated_note: note,
    })
}
