//! The shipped fit models. Each carries an analytic gradient for Jacobian checks.

use super::nlls::ModelSpec;

/// Peak-normalized Lorentzian with full width `width`: 1 at `x = center`, 1/2 at `center ± width/2`.
pub fn lorentzian(x: f64, center: f64, width: f64) -> f64 {
    let h = 0.5 * width;
    let d = x - center;
    h * h / (d * d + h * h)
}

/// `y = c + A (w/2)² / ((x - f0)² + (w/2)²)`, parameters `[A, f0, w, c]`.
pub fn lorentzian_model() -> ModelSpec {
    ModelSpec::new("lorentzian", &["A", "f0", "w", "c"], |p, x| {
        p[3] + p[0] * lorentzian(x, p[1], p[2])
    })
    .with_bounds(vec![
        (f64::NEG_INFINITY, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
        (1e-9, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
    ])
    .with_gradient(|p, x, g| {
        let (amp, f0, w) = (p[0], p[1], p[2]);
        let h = 0.5 * w;
        let d = x - f0;
        let den = d * d + h * h;
        g[0] = h * h / den;
        g[1] = amp * h * h * 2.0 * d / (den * den);
        g[2] = amp * d * d * h / (den * den);
        g[3] = 1.0;
    })
}

/// Three-level antibunching curve
/// `g²(τ) = 1 - (1 + a) exp(-|τ|/τ1) + a exp(-|τ|/τ2)`, parameters `[a, tau1, tau2]`
/// with delays in the same unit as the time constants.
pub fn g2_model() -> ModelSpec {
    ModelSpec::new("g2_three_level", &["a", "tau1", "tau2"], |p, x| {
        let t = x.abs();
        1.0 - (1.0 + p[0]) * (-t / p[1]).exp() + p[0] * (-t / p[2]).exp()
    })
    .with_bounds(vec![(0.0, 1e3), (1e-6, 1e9), (1e-6, 1e9)])
    .with_gradient(|p, x, g| {
        let t = x.abs();
        let e1 = (-t / p[1]).exp();
        let e2 = (-t / p[2]).exp();
        g[0] = -e1 + e2;
        g[1] = -(1.0 + p[0]) * e1 * t / (p[1] * p[1]);
        g[2] = p[0] * e2 * t / (p[2] * p[2]);
    })
}

/// Two-level antibunching `g²(τ) = 1 - exp(-|τ|/τ1)`, parameter `[tau1]`.
pub fn g2_two_level_model() -> ModelSpec {
    ModelSpec::new("g2_two_level", &["tau1"], |p, x| {
        1.0 - (-x.abs() / p[0]).exp()
    })
    .with_bounds(vec![(1e-6, 1e9)])
    .with_gradient(|p, x, g| {
        let t = x.abs();
        g[0] = -(-t / p[0]).exp() * t / (p[0] * p[0]);
    })
}

/// `I(P) = I_s / (1 + P0 / P)`, parameters `[I_s, P0]`.
pub fn saturation_model() -> ModelSpec {
    ModelSpec::new("saturation", &["I_s", "P0"], |p, x| p[0] * x / (x + p[1]))
        .with_bounds(vec![(0.0, f64::INFINITY), (1e-12, f64::INFINITY)])
        .with_gradient(|p, x, g| {
            let den = x + p[1];
            g[0] = x / den;
            g[1] = -p[0] * x / (den * den);
        })
}

/// `y = slope · x`.
pub fn linear_model() -> ModelSpec {
    ModelSpec::new("linear", &["slope"], |p, x| p[0] * x).with_gradient(|_, x, g| g[0] = x)
}
