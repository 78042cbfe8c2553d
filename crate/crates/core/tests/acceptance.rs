//! Acceptance criteria. Runs without the libtest harness so every criterion prints a
//! single `PASS`/`FAIL` line; exits nonzero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use defect_foundry::hbt::{background_correct, correlate, fit_g2};
use defect_foundry::numfit::poisson_mle;
use defect_foundry::odmr::{
    axial_transitions, fit_odmr, numeric_transitions, simulate_odmr, transition_frequencies,
    LineShape, OdmrProtocol, SpinSystem, SweepSpec, DEFAULT_ODMR_RATE_CPS,
};
use defect_foundry::scanstats::{
    depth_stats, detect_spots, fit_saturation, ions_per_aperture, photostability, register_grid,
    yield_from_counts,
};
use defect_foundry::sim::presets::{detection_for, hbt_preset, saturation_preset};
use defect_foundry::sim::{
    g2_oracle, poisson_trace, signal_rate, simulate_ensemble, simulate_stream, synth_scan,
    telegraph_trace, EmitterRates, ScanSpec,
};
use defect_foundry::RngSpec;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_fluence() -> Outcome {
    let n = ions_per_aperture(2.6e11, 65.0).map_err(|e| e.to_string())?;
    check(
        (n - 8.63).abs() <= 0.05,
        format!("ions_per_aperture(2.6e11 cm^-2, 65 nm) = {n:.4} (want 8.63 +/- 0.05)"),
    )
}

fn c2_yield() -> Outcome {
    // 100 sites with mean exactly 1.61
    let dist = [(0u64, 20), (1, 32), (2, 26), (3, 14), (4, 5), (5, 3)];
    let counts: Vec<u64> = dist
        .iter()
        .flat_map(|&(n, m)| std::iter::repeat(n).take(m))
        .collect();
    let r = yield_from_counts(&counts, 8.63).map_err(|e| e.to_string())?;
    check(
        (r.lambda_hat - 1.61).abs() < 1e-12 && (r.conversion_yield - 0.1866).abs() <= 0.002,
        format!(
            "conversion_yield(lambda {:.2}, 8.63 ions) = {:.5} (want 0.1866 +/- 0.002)",
            r.lambda_hat, r.conversion_yield
        ),
    )
}

fn c3_poisson() -> Outcome {
    let lambda: f64 = 1.61;
    let n = 10_000;
    let mut g = RngSpec::new(2024, 3).rng();
    let pois = Poisson::new(lambda).unwrap();
    let counts: Vec<u64> = (0..n).map(|_| pois.sample(&mut g) as u64).collect();
    let fit = poisson_mle(&counts).map_err(|e| e.to_string())?;
    let p1 = lambda * (-lambda).exp();
    let p1z = p1 / (1.0 - (-lambda).exp());
    let f1 = counts.iter().filter(|&&c| c == 1).count() as f64 / n as f64;
    let nz = counts.iter().filter(|&&c| c > 0).count() as f64;
    let f1z = counts.iter().filter(|&&c| c == 1).count() as f64 / nz;
    let s1 = (p1 * (1.0 - p1) / n as f64).sqrt();
    let s1z = (p1z * (1.0 - p1z) / nz).sqrt();
    let ok = (fit.lambda_hat - lambda).abs() <= 3.0 * fit.stderr
        && (p1 - 0.322).abs() < 5e-4
        && (p1z - 0.402).abs() < 5e-4
        && (f1 - p1).abs() <= 3.0 * s1
        && (f1z - p1z).abs() <= 3.0 * s1z;
    check(
        ok,
        format!(
            "lambda_hat {:.4} +/- {:.4}; P(1) {:.4} vs {:.4} (sigma {:.4}); P(1|n>=1) {:.4} vs {:.4} (sigma {:.4})",
            fit.lambda_hat, fit.stderr, f1, p1, s1, f1z, p1z, s1z
        ),
    )
}

fn c4_g2_roundtrip() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, name) in ["paper-0.5mW", "paper-2mW"].iter().enumerate() {
        let t0 = Instant::now();
        let p = hbt_preset(name).map_err(|e| e.to_string())?;
        let (a, b) = simulate_stream(&p.rates, &p.detection, 60.0, RngSpec::new(40 + i as u64, 0))
            .map_err(|e| e.to_string())?;
        let h = correlate(&a, &b, 1_000, 500_000).map_err(|e| e.to_string())?;
        let f = fit_g2(&h, 0.8).map_err(|e| e.to_string())?;
        let tau2 = f.tau2_ns.unwrap_or(f64::NAN);
        let e1 = (f.tau1_ns / p.tau1_ns - 1.0).abs();
        let e2 = (tau2 / p.tau2_ns - 1.0).abs();
        let secs = t0.elapsed().as_secs_f64();
        let this = e1 <= 0.10 && e2 <= 0.15 && f.g2_zero_measured < 0.3 && secs < 60.0;
        ok &= this;
        parts.push(format!(
            "{name}: tau1 {:.2} ns ({:+.1}%), tau2 {:.1} ns ({:+.1}%), g2(0) {:.3}, {secs:.0} s",
            f.tau1_ns,
            100.0 * (f.tau1_ns / p.tau1_ns - 1.0),
            tau2,
            100.0 * (tau2 / p.tau2_ns - 1.0),
            f.g2_zero_measured
        ));
    }
    check(ok, parts.join("; "))
}

/// Oracle averaged over the delays `[center - w/2, center + w/2]` by Simpson's rule.
fn bin_average(rates: &EmitterRates, center_ns: f64, w_ns: f64) -> Vec<f64> {
    let m = 20;
    let taus: Vec<f64> = (0..=m)
        .map(|k| center_ns - 0.5 * w_ns + w_ns * k as f64 / m as f64)
        .collect();
    let v = g2_oracle(rates, &taus).unwrap();
    let s: f64 = v
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let c = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * x
        })
        .sum();
    vec![s / (3.0 * m as f64)]
}

fn c5_oracle() -> Outcome {
    let grid_ns = [1u64, 2, 5, 10, 20, 50, 100, 200, 500, 1000];
    let mut g = RngSpec::new(5, 5).rng();
    let mut worst: f64 = 0.0;
    let mut n_cmp = 0;
    let mut n_out = 0;
    for set in 0..5 {
        let rates = EmitterRates::new(
            g.random_range(0.02..0.2),
            g.random_range(0.1..0.5),
            g.random_range(0.005..0.05),
            g.random_range(0.002..0.02),
        );
        let det = detection_for(&rates, 1.0e6, 1.0).map_err(|e| e.to_string())?;
        let (a, b) = simulate_stream(&rates, &det, 20.0, RngSpec::new(500 + set, 0))
            .map_err(|e| e.to_string())?;
        let h = correlate(&a, &b, 1_000, 1_100_000).map_err(|e| e.to_string())?;
        let c = h.center_index();
        for &t in &grid_ns {
            let k = t as usize;
            let raw = h.raw_pairs[c + k] + h.raw_pairs[c - k];
            let measured = raw as f64 / (2.0 * h.norm_factor);
            let sigma = (raw as f64).sqrt() / (2.0 * h.norm_factor);
            let expect = bin_average(&rates, t as f64, 1.0)[0];
            let z = (measured - expect) / sigma;
            worst = worst.max(z.abs());
            n_cmp += 1;
            if z.abs() > 3.0 {
                n_out += 1;
            }
        }
    }
    check(
        n_out == 0,
        format!("{n_cmp} (rate set, tau) points, {n_out} beyond 3 sigma, worst |z| = {worst:.2}"),
    )
}

fn c6_multi_emitter() -> Outcome {
    // tau1 near 10 ns keeps the zero-delay bin average within a fraction of sigma
    let rates = EmitterRates::new(0.05, 0.05, 0.001, 0.01);
    let single = detection_for(&rates, 300e3, 0.9).map_err(|e| e.to_string())?;
    let s = signal_rate(&rates, &single).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for n in 1..=3usize {
        let (a, b) = simulate_ensemble(&rates, &single, n, 20.0, RngSpec::new(60 + n as u64, 0))
            .map_err(|e| e.to_string())?;
        let h = correlate(&a, &b, 500, 50_000).map_err(|e| e.to_string())?;
        let rho = n as f64 * s / (n as f64 * s + single.background_rate);
        let hc = background_correct(&h, rho).map_err(|e| e.to_string())?;
        let g0 = hc.zero_delay();
        let sigma = hc.bin_errors()[hc.center_index()];
        let want = 1.0 - 1.0 / n as f64;
        let z = (g0 - want) / sigma;
        ok &= z.abs() <= 3.0;
        parts.push(format!(
            "n={n}: g2(0) {g0:.4} +/- {sigma:.4} vs {want:.4} ({z:+.2} sigma)"
        ));
    }
    check(ok, parts.join("; "))
}

fn c7_saturation() -> Outcome {
    let (model, eta) = saturation_preset().map_err(|e| e.to_string())?;
    // 8 log-spaced powers, 0.05 to 5 mW
    let powers: Vec<f64> = (0..8).map(|k| 0.05 * 100f64.powf(k as f64 / 7.0)).collect();
    let clean = model
        .curve(eta, &powers, 0.0, RngSpec::new(0, 0))
        .map_err(|e| e.to_string())?;
    let f = fit_saturation(&clean).map_err(|e| e.to_string())?;
    let ei = (f.i_s_cps / 7400.0 - 1.0).abs();
    let ep = (f.p0_mw / 0.43 - 1.0).abs();
    let mut err_i = Vec::new();
    let mut err_p = Vec::new();
    for seed in 0..100 {
        let pts = model
            .curve(eta, &powers, 0.05, RngSpec::new(700 + seed, 0))
            .map_err(|e| e.to_string())?;
        let f = fit_saturation(&pts).map_err(|e| e.to_string())?;
        err_i.push((f.i_s_cps / 7400.0 - 1.0).abs());
        err_p.push((f.p0_mw / 0.43 - 1.0).abs());
    }
    let p90 = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[89]
    };
    let (qi, qp) = (p90(&mut err_i), p90(&mut err_p));
    check(
        ei <= 1e-6 && ep <= 1e-6 && qi <= 0.10 && qp <= 0.10,
        format!(
            "noiseless I_s {:.3} cps ({ei:.1e}), P0 {:.6} mW ({ep:.1e}); 5% noise p90 error I_s {:.1}%, P0 {:.1}%",
            f.i_s_cps,
            f.p0_mw,
            100.0 * qi,
            100.0 * qp
        ),
    )
}

fn c8_odmr_physics() -> Outcome {
    let zero = transition_frequencies(&SpinSystem::new(35.0, [0.0; 3]));
    let unique = zero.len() == 1 && (zero[0] - 70.0).abs() <= 1e-9;
    let (b, db) = (5.0, 1.0);
    let at = |bz: f64| numeric_transitions(&SpinSystem::new(35.0, [0.0, 0.0, bz]));
    let (lo, hi) = (at(b), at(b + db));
    let sys = SpinSystem::new(35.0, [0.0; 3]);
    let gamma = sys.gyromag();
    let closed_lo = axial_transitions(35.0, gamma, b);
    let closed_hi = axial_transitions(35.0, gamma, b + db);
    let mut worst: f64 = 0.0;
    let mut slopes = Vec::new();
    for i in 0..lo.len().min(closed_lo.len()) {
        let s_num = (hi[i] - lo[i]) / db;
        let s_cf = (closed_hi[i] - closed_lo[i]) / db;
        worst = worst.max((s_num - s_cf).abs());
        slopes.push(s_num);
    }
    let outer =
        slopes.len() == 3 && (slopes[1] + gamma).abs() <= 1e-6 && (slopes[2] - gamma).abs() <= 1e-6;
    check(
        unique && outer && worst <= 1e-6 && lo.len() == 3,
        format!(
            "B=0 lines {zero:?}; slopes {:?} MHz/G vs closed form +/-{gamma:.6} (max diff {worst:.1e})",
            slopes.iter().map(|s| format!("{s:.6}")).collect::<Vec<_>>()
        ),
    )
}

fn c9_odmr_end_to_end() -> Outcome {
    let sys = SpinSystem::new(34.2, [0.0; 3]);
    let mut hits = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let s = simulate_odmr(
            &sys,
            &SweepSpec::default(),
            &LineShape::default(),
            DEFAULT_ODMR_RATE_CPS,
            &OdmrProtocol::default(),
            RngSpec::new(900 + seed, 0),
        )
        .map_err(|e| e.to_string())?;
        if let Ok(f) = fit_odmr(&s) {
            let d = (f.center_mhz - 68.4).abs();
            worst = worst.max(d);
            if d <= 0.5 {
                hits += 1;
            }
        }
    }
    check(
        hits >= 90,
        format!("{hits}/100 seeds within 0.5 MHz of 68.4 MHz (worst miss {worst:.3} MHz)"),
    )
}

fn c10_depth() -> Outcome {
    let (mu, sigma) = (42.0, 35.0);
    let h = 0.1;
    let profile: Vec<(f64, f64)> = (0..5000)
        .map(|i| {
            let z = (i as f64 + 0.5) * h;
            let u = (z - mu) / sigma;
            (z, (-0.5 * u * u).exp())
        })
        .collect();
    let s = depth_stats(&profile).map_err(|e| e.to_string())?;
    // truncated normal on [0, inf)
    let std = Normal::new(0.0, 1.0).unwrap();
    let alpha = -mu / sigma;
    let z = 1.0 - std.cdf(alpha);
    let lam = std.pdf(alpha) / z;
    let mean = mu + sigma * lam;
    let var = sigma * sigma * (1.0 + alpha * lam - lam * lam);
    let sd = var.sqrt();
    check(
        (s.mean_depth_nm - mean).abs() <= 0.5 && (s.straggle_nm - sd).abs() <= 0.5,
        format!(
            "mean {:.3} vs {mean:.3} nm, straggle {:.3} vs {sd:.3} nm",
            s.mean_depth_nm, s.straggle_nm
        ),
    )
}

fn c11_scan() -> Outcome {
    let (pixel, sigma, bg, rot) = (0.1, 0.15, 50.0, 3.0);
    let counts = 4.0 * bg * 2.0 * std::f64::consts::PI * sigma * sigma / (pixel * pixel);
    let spec = ScanSpec::square_lattice(16.0, pixel, 2.0, rot, sigma, counts, bg);
    if spec.sites.len() != 64 {
        return Err(format!("lattice has {} sites", spec.sites.len()));
    }
    let score = |seed: u64| -> Result<(usize, usize, f64), String> {
        let img = synth_scan(&spec, RngSpec::new(seed, 0)).map_err(|e| e.to_string())?;
        let spots = detect_spots(&img, 5, 5.0);
        let mut used = vec![false; spec.sites.len()];
        let mut false_pos = 0;
        for sp in &spots {
            let hit = spec.sites.iter().enumerate().position(|(k, site)| {
                !used[k] && (site.x_um - sp.x_um).hypot(site.y_um - sp.y_um) < 0.3
            });
            match hit {
                Some(k) => used[k] = true,
                None => false_pos += 1,
            }
        }
        let found = used.iter().filter(|&&u| u).count();
        let g = register_grid(&spots, 2.0).map_err(|e| e.to_string())?;
        Ok((found, false_pos, (g.rotation_deg - rot).abs()))
    };
    let (found, false_pos, drot) = score(1100)?;
    // extra seeds are reported only; a noise pixel above threshold 5 shows up in a few percent of images
    let mut fp_images = 0;
    let mut worst_rot: f64 = 0.0;
    for seed in 1101..1110 {
        let (_, fp, dr) = score(seed)?;
        fp_images += usize::from(fp > 0);
        worst_rot = worst_rot.max(dr);
    }
    check(
        found >= 63 && false_pos == 0 && drot <= 0.1,
        format!(
            "detected {found}/64, false positives {false_pos}, rotation error {drot:.4} deg; \
             9 more seeds: {fp_images} with false positives, worst rotation error {worst_rot:.4} deg"
        ),
    )
}

fn c12_stability() -> Outcome {
    let p =
        poisson_trace(10_000.0, 10.0, 10_000, RngSpec::new(12, 0)).map_err(|e| e.to_string())?;
    let sp = photostability(&p, 10.0).map_err(|e| e.to_string())?;
    let t = telegraph_trace(2_000.0, 10_000.0, 1.0, 10.0, 20.0, RngSpec::new(12, 1))
        .map_err(|e| e.to_string())?;
    let st = photostability(&t, 10.0).map_err(|e| e.to_string())?;
    check(
        (sp.fano - 1.0).abs() <= 0.05 && !sp.blinking && st.blinking,
        format!(
            "poisson fano {:.4}, blinking {}; telegraph fano {:.2}, blinking {}",
            sp.fano, sp.blinking, st.fano, st.blinking
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, u64); 12] = [
        ("1 fluence arithmetic", c1_fluence, 1),
        ("2 yield arithmetic", c2_yield, 1),
        ("3 poisson statistics", c3_poisson, 1),
        ("4 g2 round-trip", c4_g2_roundtrip, 120),
        ("5 oracle equivalence", c5_oracle, 300),
        ("6 multi-emitter law", c6_multi_emitter, 180),
        ("7 saturation", c7_saturation, 30),
        ("8 odmr physics", c8_odmr_physics, 1),
        ("9 odmr end-to-end", c9_odmr_end_to_end, 120),
        ("10 depth statistics", c10_depth, 1),
        ("11 scan pipeline", c11_scan, 10),
        ("12 photostability", c12_stability, 5),
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, f, budget_s) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let took = t0.elapsed();
        let over = took > Duration::from_secs(budget_s);
        let (tag, detail) = match outcome {
            Ok(d) if !over => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {budget_s} s budget")),
            Err(d) => ("FAIL", d),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!(
            "{tag} criterion {name}: {detail} [{:.2} s]",
            took.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
