//! Exact stochastic simulation of the three-level emitter.
//!
//! [`Gillespie`] walks the chain one jump at a time. [`simulate_stream`] produces
//! detector clicks with the same statistics but draws whole runs of undetected
//! excitation cycles at once: after every detected photon the emitter is back in the
//! ground state, so the time to the next detection is a sum of independent exponential
//! dwells whose counts (visits to `e`, excursions to `s`) are geometric and binomial.
//! Sums of `n` equal-rate exponentials are drawn as one Gamma(n) variate. The cost
//! therefore scales with detected photons rather than emitted photons.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Gamma, Geometric, Poisson};

use crate::core::{merge_streams, RngSpec, SimRng, StreamMeta, TimeTag, TimeTagStream, PS_PER_S};
use crate::error::{Error, Result};

use super::rates::{steady_state, DetectionModel, EmitterRates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Ground,
    Excited,
    Shelved,
}

impl Level {
    pub fn index(self) -> usize {
        match self {
            Level::Ground => 0,
            Level::Excited => 1,
            Level::Shelved => 2,
        }
    }
}

/// One transition of the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub from: Level,
    pub to: Level,
    /// Time spent in `from` before the jump, ns.
    pub dwell_ns: f64,
    /// The jump was radiative (`e -> g` via `k_em`).
    pub radiative: bool,
}

/// Jump-by-jump Gillespie trajectory. Ends when the current level has no way out.
pub struct Gillespie<'a, R: Rng> {
    rates: EmitterRates,
    level: Level,
    rng: &'a mut R,
}

impl<'a, R: Rng> Gillespie<'a, R> {
    pub fn new(rates: EmitterRates, start: Level, rng: &'a mut R) -> Self {
        Self {
            rates,
            level: start,
            rng,
        }
    }

    pub fn level(&self) -> Level {
        self.level
    }
}

impl<R: Rng> Iterator for Gillespie<'_, R> {
    type Item = Jump;

    fn next(&mut self) -> Option<Jump> {
        let r = &self.rates;
        let (total, to, radiative) = match self.level {
            Level::Ground => (r.k_exc, Level::Excited, false),
            Level::Shelved => (r.k_des, Level::Ground, false),
            Level::Excited => {
                let total = r.k_em + r.k_isc;
                if total <= 0.0 {
                    return None;
                }
                let u: f64 = self.rng.random::<f64>() * total;
                if u < r.k_em {
                    (total, Level::Ground, true)
                } else {
                    (total, Level::Shelved, false)
                }
            }
        };
        if total <= 0.0 {
            return None;
        }
        let dwell_ns = Exp::new(total).ok()?.sample(self.rng);
        let jump = Jump {
            from: self.level,
            to,
            dwell_ns,
            radiative,
        };
        self.level = to;
        Some(jump)
    }
}

/// Fraction of time spent in each level over `steps` jumps, starting from the ground state.
pub fn time_average_occupation(rates: &EmitterRates, steps: usize, rng: &mut SimRng) -> [f64; 3] {
    let mut time = [0.0; 3];
    for jump in Gillespie::new(*rates, Level::Ground, rng).take(steps) {
        time[jump.from.index()] += jump.dwell_ns;
    }
    let total: f64 = time.iter().sum();
    if total == 0.0 {
        return [1.0, 0.0, 0.0];
    }
    time.map(|t| t / total)
}

/// Sum of `n` independent Exp(rate) variates.
fn exp_sum(n: u64, rate: f64, rng: &mut SimRng) -> f64 {
    match n {
        0 => 0.0,
        1 => Exp::new(rate).expect("positive rate").sample(rng),
        _ => Gamma::new(n as f64, 1.0 / rate)
            .expect("positive shape and scale")
            .sample(rng),
    }
}

/// Samples the waiting time to the next detected photon.
struct DetectionClock {
    rates: EmitterRates,
    excited_exit: f64,
    /// Per visit to `e`: detected, undetected, shelved.
    p_detect: f64,
    p_shelve: f64,
    /// Geometric number of failed visits before the terminating one.
    failures: Option<Geometric>,
    /// Probability that a failed visit was a shelving excursion.
    shelf_share: f64,
    dead: bool,
}

impl DetectionClock {
    fn new(rates: &EmitterRates, efficiency: f64) -> Self {
        let excited_exit = rates.k_em + rates.k_isc;
        let p_detect = efficiency * rates.k_em / excited_exit;
        let p_undetected = (1.0 - efficiency) * rates.k_em / excited_exit;
        let p_shelve = rates.k_isc / excited_exit;
        let trapping = rates.k_des == 0.0 && p_shelve > 0.0;
        // visits end either in detection, or (if the shelf traps) in shelving
        let p_stop = if trapping {
            p_detect + p_shelve
        } else {
            p_detect
        };
        let failures =
            (p_stop > 0.0).then(|| Geometric::new(p_stop.min(1.0)).expect("p in (0, 1]"));
        let shelf_share = if trapping || p_undetected + p_shelve == 0.0 {
            0.0
        } else {
            p_shelve / (p_undetected + p_shelve)
        };
        Self {
            rates: *rates,
            excited_exit,
            p_detect,
            p_shelve,
            failures,
            shelf_share,
            dead: rates.k_exc == 0.0 || p_detect == 0.0,
        }
    }

    fn trapping(&self) -> bool {
        self.rates.k_des == 0.0 && self.p_shelve > 0.0
    }

    /// Time (ns) from the ground state to the next detection, or `None` if it never comes.
    fn from_ground(&mut self, rng: &mut SimRng) -> Option<f64> {
        if self.dead {
            return None;
        }
        let failures = self.failures.as_ref()?.sample(rng);
        let visits = failures + 1;
        let mut t =
            exp_sum(visits, self.rates.k_exc, rng) + exp_sum(visits, self.excited_exit, rng);
        if self.trapping() {
            // last visit ended in detection or in the trap
            let detect_share = self.p_detect / (self.p_detect + self.p_shelve);
            if rng.random::<f64>() >= detect_share {
                self.dead = true;
                return None;
            }
        } else if failures > 0 && self.shelf_share > 0.0 {
            let shelved = Binomial::new(failures, self.shelf_share)
                .expect("valid binomial")
                .sample(rng);
            t += exp_sum(shelved, self.rates.k_des, rng);
        }
        Some(t)
    }

    /// Time to the next detection from an arbitrary level.
    fn from_level(&mut self, level: Level, rng: &mut SimRng) -> Option<f64> {
        match level {
            Level::Ground => self.from_ground(rng),
            Level::Shelved => {
                if self.rates.k_des == 0.0 {
                    self.dead = true;
                    return None;
                }
                let t = exp_sum(1, self.rates.k_des, rng);
                self.from_ground(rng).map(|rest| t + rest)
            }
            Level::Excited => {
                let t = exp_sum(1, self.excited_exit, rng);
                let u: f64 = rng.random();
                let p_undetected = 1.0 - self.p_detect - self.p_shelve;
                if u < self.p_detect {
                    Some(t)
                } else if u < self.p_detect + p_undetected {
                    self.from_ground(rng).map(|rest| t + rest)
                } else {
                    self.from_level(Level::Shelved, rng).map(|rest| t + rest)
                }
            }
        }
    }
}

/// Detection times (ns) of one emitter over `[0, duration_ns)`, starting from the
/// stationary level distribution.
pub fn emitter_detections(
    rates: &EmitterRates,
    efficiency: f64,
    duration_ns: f64,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let ss = steady_state(rates)?;
    let mut clock = DetectionClock::new(rates, efficiency);
    let u: f64 = rng.random();
    let start = if u < ss.p_g {
        Level::Ground
    } else if u < ss.p_g + ss.p_e {
        Level::Excited
    } else {
        Level::Shelved
    };
    let mut out = Vec::new();
    let mut t = match clock.from_level(start, rng) {
        Some(t) => t,
        None => return Ok(out),
    };
    while t < duration_ns {
        out.push(t);
        match clock.from_ground(rng) {
            Some(dt) => t += dt,
            None => break,
        }
    }
    Ok(out)
}

/// Uniform Poisson arrivals over `[0, duration_ps)`.
fn poisson_tags(rate_cps: f64, duration_ps: u64, channel: u8, rng: &mut SimRng) -> Vec<TimeTag> {
    let mean = rate_cps * duration_ps as f64 / PS_PER_S;
    if mean <= 0.0 {
        return Vec::new();
    }
    let n = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
    (0..n)
        .map(|_| TimeTag::new(channel, rng.random_range(0..duration_ps)))
        .collect()
}

/// Two-channel HBT acquisition of one emitter plus background.
///
/// Each detected photon goes to channel 0 with probability `det.split`; background
/// clicks arrive as independent Poisson processes at `background_rate · split` and
/// `background_rate · (1 - split)`. Both streams share the clock and duration; tags are
/// sorted by time (ties by channel).
pub fn simulate_stream(
    rates: &EmitterRates,
    det: &DetectionModel,
    duration_s: f64,
    rng: RngSpec,
) -> Result<(TimeTagStream, TimeTagStream)> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::invalid("simulation duration must be positive"));
    }
    rates.validate()?;
    det.validate()?;
    let duration_ps = (duration_s * PS_PER_S).round() as u64;
    let duration_ns = duration_ps as f64 * 1e-3;
    let mut gen = rng.rng();

    let mut ch = [Vec::new(), Vec::new()];
    for t_ns in emitter_detections(rates, det.efficiency, duration_ns, &mut gen)? {
        let t_ps = ((t_ns * 1e3).round() as u64).min(duration_ps - 1);
        let c = if gen.random::<f64>() < det.split {
            0
        } else {
            1
        };
        ch[c].push(TimeTag::new(c as u8, t_ps));
    }
    ch[0].extend(poisson_tags(
        det.background_rate * det.split,
        duration_ps,
        0,
        &mut gen,
    ));
    ch[1].extend(poisson_tags(
        det.background_rate * (1.0 - det.split),
        duration_ps,
        1,
        &mut gen,
    ));

    let [c0, c1] = ch;
    let meta = |c: u8| StreamMeta {
        power_mw: 0.0,
        seed: rng.seed,
        stream_id: rng.stream_id,
        label: format!("emitter-sim ch{c}"),
    };
    Ok((
        TimeTagStream::from_unsorted(c0, duration_ps, meta(0))?,
        TimeTagStream::from_unsorted(c1, duration_ps, meta(1))?,
    ))
}

/// `n` independent emitters sharing one detection model, merged, plus the background.
///
/// Emitter `i` draws from `rng.child(i)`; the background uses `rng.child(n)`.
pub fn simulate_ensemble(
    rates: &EmitterRates,
    det: &DetectionModel,
    n: usize,
    duration_s: f64,
    rng: RngSpec,
) -> Result<(TimeTagStream, TimeTagStream)> {
    let dark = DetectionModel {
        background_rate: 0.0,
        ..*det
    };
    let bg = DetectionModel {
        efficiency: 0.0,
        ..*det
    };
    let (mut c0, mut c1) = simulate_stream(
        &EmitterRates::new(0.0, 1.0, 0.0, 0.0),
        &bg,
        duration_s,
        rng.child(n as u64),
    )?;
    for i in 0..n {
        let (a, b) = simulate_stream(rates, &dark, duration_s, rng.child(i as u64))?;
        c0 = merge_streams(&c0, &a)?;
        c1 = merge_streams(&c1, &b)?;
    }
    let meta = |c: u8| StreamMeta {
        power_mw: 0.0,
        seed: rng.seed,
        stream_id: rng.stream_id,
        label: format!("emitter-sim x{n} ch{c}"),
    };
    Ok((c0.with_meta(meta(0)), c1.with_meta(meta(1))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::count_rate;
    use crate::sim::signal_rate;

    fn generic() -> EmitterRates {
        EmitterRates::new(0.3, 0.5, 0.2, 0.25)
    }

    #[test]
    fn dark_emitter_gives_background_only() {
        let det = DetectionModel {
            efficiency: 0.5,
            background_rate: 20_000.0,
            split: 0.3,
        };
        let rates = EmitterRates::new(0.0, 0.1, 0.01, 0.01);
        let (a, b) = simulate_stream(&rates, &det, 1.0, RngSpec::new(5, 0)).unwrap();
        for (s, expect) in [(a, 6000.0), (b, 14000.0)] {
            let got = count_rate(&s);
            assert!(
                (got - expect).abs() <= 3.0 * f64::sqrt(expect),
                "{got} vs {expect}"
            );
        }
    }

    #[test]
    fn blind_detector_gives_empty_streams() {
        let det = DetectionModel::new(0.0, 0.0);
        let (a, b) = simulate_stream(&generic(), &det, 0.01, RngSpec::new(5, 0)).unwrap();
        assert!(a.is_empty() && b.is_empty());
    }

    #[test]
    fn bad_duration_rejected() {
        let det = DetectionModel::new(0.1, 0.0);
        assert!(simulate_stream(&generic(), &det, -1.0, RngSpec::new(0, 0)).is_err());
        assert!(simulate_stream(&generic(), &det, 0.0, RngSpec::new(0, 0)).is_err());
    }

    #[test]
    fn trapping_shelf_stops_emission() {
        let rates = EmitterRates::new(0.1, 0.1, 0.01, 0.0);
        let mut rng = RngSpec::new(3, 0).rng();
        // stationary state of a trap is the trap itself
        let t = emitter_detections(&rates, 1.0, 1e6, &mut rng).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn detected_rate_matches_steady_state() {
        let rates = generic();
        let det = DetectionModel::new(1e-3, 0.0);
        let expect = signal_rate(&rates, &det).unwrap();
        let (a, b) = simulate_stream(&rates, &det, 0.5, RngSpec::new(9, 2)).unwrap();
        let n = (a.len() + b.len()) as f64;
        // shelving makes the count slightly super-Poissonian; 4 sigma leaves room
        let expect_n = expect * 0.5;
        assert!(
            (n - expect_n).abs() <= 4.0 * expect_n.sqrt(),
            "{n} vs {expect_n}"
        );
    }

    #[test]
    fn deterministic_for_equal_spec() {
        let det = DetectionModel::new(1e-3, 1000.0);
        let x = simulate_stream(&generic(), &det, 0.05, RngSpec::new(1, 1)).unwrap();
        let y = simulate_stream(&generic(), &det, 0.05, RngSpec::new(1, 1)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn tags_sorted_and_in_range() {
        let det = DetectionModel::new(1e-2, 5000.0);
        let (a, b) = simulate_stream(&generic(), &det, 0.01, RngSpec::new(4, 4)).unwrap();
        for s in [a, b] {
            assert!(s
                .tags()
                .windows(2)
                .all(|w| (w[0].t, w[0].channel) <= (w[1].t, w[1].channel)));
            assert!(s.tags().iter().all(|t| t.t < s.duration()));
        }
    }

    #[test]
    fn gillespie_radiative_fraction() {
        let rates = generic();
        let mut rng = RngSpec::new(8, 0).rng();
        let (mut em, mut from_e) = (0usize, 0usize);
        for j in Gillespie::new(rates, Level::Ground, &mut rng).take(200_000) {
            if j.from == Level::Excited {
                from_e += 1;
                em += j.radiative as usize;
            }
        }
        let p = rates.k_em / (rates.k_em + rates.k_isc);
        let frac = em as f64 / from_e as f64;
        let sigma = (p * (1.0 - p) / from_e as f64).sqrt();
        assert!((frac - p).abs() < 4.0 * sigma);
    }

    /// Kolmogorov-Smirnov distance between a sample and Exp(rate).
    fn ks_exponential(mut xs: Vec<f64>, rate: f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 1.0 - (-rate * x).exp();
                (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn dwell_times_are_exponential() {
        let rates = generic();
        let mut rng = RngSpec::new(21, 0).rng();
        let mut dwell = [Vec::new(), Vec::new(), Vec::new()];
        for j in Gillespie::new(rates, Level::Ground, &mut rng) {
            dwell[j.from.index()].push(j.dwell_ns);
            if dwell.iter().all(|d| d.len() >= 100_000) {
                break;
            }
        }
        let exits = [rates.k_exc, rates.k_em + rates.k_isc, rates.k_des];
        for (d, rate) in dwell.into_iter().zip(exits) {
            let d: Vec<f64> = d.into_iter().take(100_000).collect();
            // asymptotic critical value at alpha = 0.01
            let crit = 1.628 / (d.len() as f64).sqrt();
            let ks = ks_exponential(d, rate);
            assert!(ks < crit, "KS {ks} >= {crit} for rate {rate}");
        }
    }

    #[test]
    fn occupation_matches_steady_state() {
        let rates = generic();
        let ss = steady_state(&rates).unwrap();
        let mut rng = RngSpec::new(17, 0).rng();
        let occ = time_average_occupation(&rates, 1_000_000, &mut rng);
        for (got, want) in occ.iter().zip([ss.p_g, ss.p_e, ss.p_s]) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn ensemble_rate_scales_with_count() {
        let rates = generic();
        let det = DetectionModel::new(1e-3, 2000.0);
        let s = signal_rate(&rates, &det).unwrap();
        let (a, b) = simulate_ensemble(&rates, &det, 3, 0.2, RngSpec::new(6, 0)).unwrap();
        let expect = (3.0 * s + 2000.0) * 0.2;
        let n = (a.len() + b.len()) as f64;
        assert!((n - expect).abs() < 4.0 * expect.sqrt(), "{n} vs {expect}");
    }
}
