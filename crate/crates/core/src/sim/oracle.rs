use crate::error::{Error, Result};

use super::rates::{steady_state, EmitterRates};

fn derivative(m: &[[f64; 3]; 3], p: &[f64; 3]) -> [f64; 3] {
    let mut d = [0.0; 3];
    for (i, row) in m.iter().enumerate() {
        d[i] = row[0] * p[0] + row[1] * p[1] + row[2] * p[2];
    }
    d
}

fn rk4_step(m: &[[f64; 3]; 3], p: &mut [f64; 3], h: f64) {
    let add =
        |a: &[f64; 3], b: &[f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = derivative(m, p);
    let k2 = derivative(m, &add(p, &k1, 0.5 * h));
    let k3 = derivative(m, &add(p, &k2, 0.5 * h));
    let k4 = derivative(m, &add(p, &k3, h));
    for i in 0..3 {
        p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Exact intensity correlation of a single three-level emitter,
/// `g²(τ) = p_e(|τ| | g at 0) / p_e(∞)`, by RK4 integration of the master equation.
///
/// The step never exceeds `1/100` of the fastest relaxation time. Delays are in ns and
/// may be given in any order or sign.
pub fn g2_oracle(rates: &EmitterRates, taus_ns: &[f64]) -> Result<Vec<f64>> {
    if !(rates.k_exc > 0.0 && rates.k_em > 0.0) {
        return Err(Error::invalid("g2_oracle needs k_exc > 0 and k_em > 0"));
    }
    let ss = steady_state(rates)?;
    if ss.absorbing || ss.p_e <= 0.0 {
        return Err(Error::invalid("emitter has no stationary emission"));
    }
    let m = rates.generator();
    let (fast, _) = rates.relaxation_rates();
    let h_max = 1.0 / fast / 100.0;

    let mut order: Vec<usize> = (0..taus_ns.len()).collect();
    order.sort_by(|&a, &b| taus_ns[a].abs().total_cmp(&taus_ns[b].abs()));
    let mut out = vec![0.0; taus_ns.len()];
    let mut p = [1.0, 0.0, 0.0];
    let mut t = 0.0;
    for i in order {
        let target = taus_ns[i].abs();
        if !target.is_finite() {
            return Err(Error::invalid("delays must be finite"));
        }
        while t < target {
            let remaining = target - t;
            let n = (remaining / h_max).ceil().max(1.0);
            // spread the remaining span evenly to land exactly on the target
            let h = remaining / n;
            for _ in 0..n as u64 {
                rk4_step(&m, &mut p, h);
            }
            t = target;
        }
        out[i] = p[1] / ss.p_e;
    }
    Ok(out)
}
