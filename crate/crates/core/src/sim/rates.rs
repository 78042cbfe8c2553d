use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::core::RngSpec;

use crate::error::{Error, Result};

/// Kinetic rates of a ground / excited / shelving emitter, all in 1/ns.
///
/// ```text
///   g --k_exc--> e --k_em--> g   (radiative)
///                e --k_isc-> s --k_des--> g
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterRates {
    #[serde(rename = "k_exc_per_ns")]
    pub k_exc: f64,
    #[serde(rename = "k_em_per_ns")]
    pub k_em: f64,
    #[serde(rename = "k_isc_per_ns")]
    pub k_isc: f64,
    #[serde(rename = "k_des_per_ns")]
    pub k_des: f64,
}

/// Photon detection and background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionModel {
    /// Probability that a radiated photon is detected.
    pub efficiency: f64,
    /// Uncorrelated background, counts/s summed over both channels.
    #[serde(rename = "background_cps")]
    pub background_rate: f64,
    /// Probability that a detected photon goes to channel 0.
    #[serde(default = "half")]
    pub split: f64,
}

fn half() -> f64 {
    0.5
}

impl DetectionModel {
    pub fn new(efficiency: f64, background_rate: f64) -> Self {
        Self {
            efficiency,
            background_rate,
            split: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid("detection efficiency must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.split) {
            return Err(Error::invalid("channel split must lie in [0, 1]"));
        }
        if !(self.background_rate >= 0.0) || !self.background_rate.is_finite() {
            return Err(Error::invalid("background rate must be >= 0"));
        }
        Ok(())
    }
}

/// Stationary level populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    pub p_g: f64,
    pub p_e: f64,
    pub p_s: f64,
    /// The shelving state traps the emitter (`k_des = 0` with `k_isc > 0`).
    pub absorbing: bool,
}

impl EmitterRates {
    pub fn new(k_exc: f64, k_em: f64, k_isc: f64, k_des: f64) -> Self {
        Self {
            k_exc,
            k_em,
            k_isc,
            k_des,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.k_exc, self.k_em, self.k_isc, self.k_des];
        if all.iter().any(|k| !(k >= &0.0) || !k.is_finite()) {
            return Err(Error::invalid("emitter rates must be finite and >= 0"));
        }
        if self.k_em <= 0.0 {
            return Err(Error::invalid("radiative rate k_em must be > 0"));
        }
        Ok(())
    }

    /// Rate matrix `M` of `dp/dt = M p` for `p = (p_g, p_e, p_s)`, row-major.
    pub fn generator(&self) -> [[f64; 3]; 3] {
        [
            [-self.k_exc, self.k_em, self.k_des],
            [self.k_exc, -(self.k_em + self.k_isc), 0.0],
            [0.0, self.k_isc, -self.k_des],
        ]
    }

    /// The two nonzero relaxation rates of the master equation, `(fast, slow)` in 1/ns.
    ///
    /// They are the roots of `λ² - Sλ + P = 0` with `S` the sum of all rates and `P` the
    /// sum of principal 2x2 minors of the generator.
    pub fn relaxation_rates(&self) -> (f64, f64) {
        let s = self.k_exc + self.k_em + self.k_isc + self.k_des;
        let p = self.k_exc * self.k_isc
            + self.k_exc * self.k_des
            + self.k_em * self.k_des
            + self.k_isc * self.k_des;
        let disc = (s * s - 4.0 * p).max(0.0).sqrt();
        let fast = 0.5 * (s + disc);
        // small root via Vieta to avoid cancellation
        let slow = if fast > 0.0 { p / fast } else { 0.0 };
        (fast, slow)
    }

    /// Closed-form `(a, tau1, tau2)` of `g²(τ) = 1 - (1+a) e^{-τ/τ1} + a e^{-τ/τ2}`.
    ///
    /// Uses `g²(0) = 0` and `g²'(0) = k_exc / p_e(∞)`. `tau2` is infinite when the slow
    /// rate vanishes (no shelving).
    pub fn g2_shape(&self) -> Result<(f64, f64, f64)> {
        let ss = steady_state(self)?;
        if ss.p_e <= 0.0 {
            return Err(Error::invalid(
                "emitter has no stationary excited population",
            ));
        }
        if self.k_isc == 0.0 {
            // shelving unreachable: two-level antibunching only
            return Ok((0.0, 1.0 / (self.k_exc + self.k_em), f64::INFINITY));
        }
        let (fast, slow) = self.relaxation_rates();
        if slow <= 0.0 || (fast - slow).abs() < 1e-15 * fast {
            // two-level: g² = 1 - e^{-fast τ}
            return Ok((0.0, 1.0 / fast, f64::INFINITY));
        }
        let slope0 = self.k_exc / ss.p_e;
        let c_fast = (slope0 - slow) / (slow - fast);
        let a = -1.0 - c_fast;
        Ok((a, 1.0 / fast, 1.0 / slow))
    }

    /// Rates reproducing the given g² time constants at a given pump level.
    ///
    /// `power_ratio` is `P / P0` of the saturation law at which the time constants
    /// apply, and `k_isc` fixes the remaining degree of freedom. Of the two solutions the
    /// one with the slower de-shelving rate is returned (the other has `k_em < 0` for all
    /// parameter sets of interest).
    pub fn from_g2_timescales(tau1: f64, tau2: f64, power_ratio: f64, k_isc: f64) -> Result<Self> {
        if !(tau1 > 0.0 && tau2 > tau1 && power_ratio > 0.0 && k_isc > 0.0) {
            return Err(Error::invalid(
                "need 0 < tau1 < tau2, power_ratio > 0 and k_isc > 0",
            ));
        }
        let (l1, l2) = (1.0 / tau1, 1.0 / tau2);
        let sum = l1 + l2;
        let prod = l1 * l2;
        // k_exc (k_isc + k_des) = X and (k_em + k_isc) k_des = Y, from the saturation law
        let x = prod / (1.0 + 1.0 / power_ratio);
        let y = prod - x;
        // remaining condition on k_des: X/(k_isc + k_des) + Y/k_des + k_des = S
        let f = |kd: f64| x / (k_isc + kd) + y / kd + kd - sum;
        let mut lo = 1e-12 * sum;
        let mut found = None;
        let steps = 4000;
        let ratio = (sum / lo).powf(1.0 / steps as f64);
        let mut flo = f(lo);
        for _ in 0..steps {
            let hi = lo * ratio;
            let fhi = f(hi);
            if flo.signum() != fhi.signum() {
                found = Some((lo, hi));
                break;
            }
            lo = hi;
            flo = fhi;
        }
        let (mut a, mut b) = found
            .ok_or_else(|| Error::Numerical("no rate set matches these time constants".into()))?;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if f(mid).signum() == f(a).signum() {
                a = mid;
            } else {
                b = mid;
            }
        }
        let k_des = 0.5 * (a + b);
        let k_em = y / k_des - k_isc;
        let k_exc = x / (k_isc + k_des);
        if k_em <= 0.0 {
            return Err(Error::Numerical(format!(
                "k_isc = {k_isc} leaves no positive radiative rate"
            )));
        }
        Ok(Self::new(k_exc, k_em, k_isc, k_des))
    }
}

/// Stationary populations of the three-level master equation.
///
/// Without excitation the emitter sits in the ground state; with a trapping shelving
/// state (`k_des = 0`, `k_isc > 0`, `k_exc > 0`) it ends in `s` and `absorbing` is set.
pub fn steady_state(rates: &EmitterRates) -> Result<SteadyState> {
    rates.validate()?;
    let EmitterRates {
        k_exc,
        k_em,
        k_isc,
        k_des,
    } = *rates;
    if k_exc == 0.0 {
        return Ok(SteadyState {
            p_g: 1.0,
            p_e: 0.0,
            p_s: 0.0,
            absorbing: false,
        });
    }
    if k_isc > 0.0 && k_des == 0.0 {
        return Ok(SteadyState {
            p_g: 0.0,
            p_e: 0.0,
            p_s: 1.0,
            absorbing: true,
        });
    }
    // relative weights g : e : s = (k_em + k_isc) k_des : k_exc k_des : k_exc k_isc
    let (wg, we, ws) = if k_isc == 0.0 {
        (k_em, k_exc, 0.0)
    } else {
        ((k_em + k_isc) * k_des, k_exc * k_des, k_exc * k_isc)
    };
    let total = wg + we + ws;
    Ok(SteadyState {
        p_g: wg / total,
        p_e: we / total,
        p_s: ws / total,
        absorbing: false,
    })
}

/// Mean detected emitter rate (counts/s, both channels), background excluded.
pub fn signal_rate(rates: &EmitterRates, det: &DetectionModel) -> Result<f64> {
    let ss = steady_state(rates)?;
    Ok(det.efficiency * rates.k_em * ss.p_e * 1e9)
}

/// Linear power-to-pump mapping `k_exc = c_p · P`, optional linear de-shelving growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerModel {
    /// Pump rate per unit power, 1/(ns·mW).
    pub c_p_per_ns_mw: f64,
    pub k_em_per_ns: f64,
    pub k_isc_per_ns: f64,
    pub k_des_per_ns: f64,
    /// Extra de-shelving rate per mW (0 keeps the shelving branch power independent).
    #[serde(default)]
    pub k_des_per_ns_mw: f64,
}

impl PowerModel {
    /// Model whose rates at `power_mw` equal `rates`.
    pub fn anchored(rates: &EmitterRates, power_mw: f64) -> Self {
        Self {
            c_p_per_ns_mw: rates.k_exc / power_mw,
            k_em_per_ns: rates.k_em,
            k_isc_per_ns: rates.k_isc,
            k_des_per_ns: rates.k_des,
            k_des_per_ns_mw: 0.0,
        }
    }

    pub fn rates_at(&self, power_mw: f64) -> EmitterRates {
        EmitterRates::new(
            self.c_p_per_ns_mw * power_mw,
            self.k_em_per_ns,
            self.k_isc_per_ns,
            self.k_des_per_ns + self.k_des_per_ns_mw * power_mw,
        )
    }

    /// `(I_s, P0)` of `I(P) = I_s / (1 + P0/P)` for power-independent shelving.
    ///
    /// `I_s = η k_em k_des / (k_des + k_isc)` and
    /// `P0 = (k_em + k_isc) k_des / (c_p (k_des + k_isc))`.
    pub fn saturation(&self, efficiency: f64) -> (f64, f64) {
        let (em, isc, des) = (self.k_em_per_ns, self.k_isc_per_ns, self.k_des_per_ns);
        let i_s = efficiency * em * des / (des + isc) * 1e9;
        let p0 = (em + isc) * des / (self.c_p_per_ns_mw * (des + isc));
        (i_s, p0)
    }

    /// Detected count rate at each power, with optional multiplicative Gaussian noise of
    /// relative width `noise_rel` (point `i` draws from `rng.child(i)`).
    pub fn curve(
        &self,
        efficiency: f64,
        powers_mw: &[f64],
        noise_rel: f64,
        rng: RngSpec,
    ) -> Result<Vec<(f64, f64)>> {
        if !(noise_rel >= 0.0) {
            return Err(Error::invalid("noise_rel must be >= 0"));
        }
        let det = DetectionModel::new(efficiency, 0.0);
        powers_mw
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                if !(p > 0.0) {
                    return Err(Error::invalid("powers must be > 0"));
                }
                let clean = signal_rate(&self.rates_at(p), &det)?;
                let z: f64 = if noise_rel > 0.0 {
                    StandardNormal.sample(&mut rng.child(i as u64).rng())
                } else {
                    0.0
                };
                Ok((p, clean * (1.0 + noise_rel * z)))
            })
            .collect()
    }
}
