use crate::core::FitResult;
use crate::error::{Error, Result};

use super::linalg::{cholesky_solve, invert_spd};

type EvalFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;

/// A scalar model `y = f(params, x)` with named parameters and optional box bounds.
pub struct ModelSpec {
    pub name: String,
    pub param_names: Vec<String>,
    pub bounds: Option<Vec<(f64, f64)>>,
    eval: Box<EvalFn>,
    gradient: Option<Box<GradFn>>,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("param_names", &self.param_names)
            .field("bounds", &self.bounds)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        param_names: &[&str],
        eval: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            param_names: param_names.iter().map(|s| s.to_string()).collect(),
            bounds: None,
            eval: Box::new(eval),
            gradient: None,
        }
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        assert_eq!(bounds.len(), self.arity(), "one bound pair per parameter");
        self.bounds = Some(bounds);
        self
    }

    /// Attach an analytic gradient `d f / d params` (used for Jacobian cross-checks).
    pub fn with_gradient(
        mut self,
        grad: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Box::new(grad));
        self
    }

    pub fn arity(&self) -> usize {
        self.param_names.len()
    }

    pub fn eval(&self, params: &[f64], x: f64) -> f64 {
        (self.eval)(params, x)
    }

    pub fn analytic_gradient(&self, params: &[f64], x: f64) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| {
            let mut out = vec![0.0; self.arity()];
            g(params, x, &mut out);
            out
        })
    }

    pub fn in_bounds(&self, params: &[f64]) -> bool {
        match &self.bounds {
            None => true,
            Some(b) => params
                .iter()
                .zip(b)
                .all(|(&p, &(lo, hi))| p >= lo && p <= hi),
        }
    }

    fn project(&self, params: &mut [f64]) {
        if let Some(b) = &self.bounds {
            for (p, &(lo, hi)) in params.iter_mut().zip(b) {
                *p = p.clamp(lo, hi);
            }
        }
    }
}

/// Stopping rules for [`fit_nlls`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Converged when an accepted step lowers the residual norm by less than this fraction.
    pub ftol: f64,
    /// Converged when the infinity norm of the gradient `Jᵀ W r` drops below this.
    pub gtol: f64,
    /// Converged when the damped step is this small relative to the parameters.
    pub xtol: f64,
    /// Starting Levenberg damping, relative to the diagonal of the normal matrix.
    pub lambda_init: f64,
    /// When set, a step is shortened so no parameter moves by more than this fraction
    /// of its current magnitude.
    pub max_relative_step: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-10,
            gtol: 1e-8,
            xtol: 1e-15,
            lambda_init: LAMBDA_INIT,
            max_relative_step: Some(0.5),
        }
    }
}

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_FACTOR: f64 = 10.0;
const LAMBDA_MAX: f64 = 1e20;

/// Central-difference Jacobian, step `max(1e-6, 1e-6 |p|)` per parameter.
///
/// Steps are shrunk toward the interior near a bound so the model is never evaluated
/// outside its box. Row-major `xs.len() x arity`.
pub fn finite_difference_jacobian(model: &ModelSpec, params: &[f64], xs: &[f64]) -> Vec<f64> {
    let m = model.arity();
    let mut jac = vec![0.0; xs.len() * m];
    let mut p = params.to_vec();
    for j in 0..m {
        let h = (1e-6 * params[j].abs()).max(1e-6);
        let (mut up, mut down) = (params[j] + h, params[j] - h);
        if let Some(b) = &model.bounds {
            let (lo, hi) = b[j];
            up = up.min(hi);
            down = down.max(lo);
        }
        let span = up - down;
        if span <= 0.0 {
            continue;
        }
        for (i, &x) in xs.iter().enumerate() {
            p[j] = up;
            let fu = model.eval(&p, x);
            p[j] = down;
            let fd = model.eval(&p, x);
            jac[i * m + j] = (fu - fd) / span;
        }
        p[j] = params[j];
    }
    jac
}

struct Problem<'a> {
    model: &'a ModelSpec,
    xs: &'a [f64],
    ys: &'a [f64],
    weights: Vec<f64>,
}

impl Problem<'_> {
    /// Weighted residuals `sqrt(w) (y - f)`, or `None` if the model is not finite.
    fn residuals(&self, p: &[f64]) -> Option<Vec<f64>> {
        let mut r = Vec::with_capacity(self.xs.len());
        for ((&x, &y), &w) in self.xs.iter().zip(self.ys).zip(&self.weights) {
            let f = self.model.eval(p, x);
            if !f.is_finite() {
                return None;
            }
            r.push(w.sqrt() * (y - f));
        }
        Some(r)
    }

    /// Normal matrix `JᵀWJ` and gradient `JᵀW r` at `p`.
    fn normal_equations(&self, p: &[f64], r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.model.arity();
        let jac = finite_difference_jacobian(self.model, p, self.xs);
        let mut a = vec![0.0; m * m];
        let mut g = vec![0.0; m];
        for (i, &w) in self.weights.iter().enumerate() {
            let sw = w.sqrt();
            let row = &jac[i * m..(i + 1) * m];
            for j in 0..m {
                let jj = sw * row[j];
                g[j] += jj * r[i];
                for k in 0..=j {
                    a[j * m + k] += jj * sw * row[k];
                }
            }
        }
        for j in 0..m {
            for k in j + 1..m {
                a[j * m + k] = a[k * m + j];
            }
        }
        (a, g)
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Damped Gauss–Newton (Levenberg–Marquardt) fit of `model` to `(xs, ys)`.
///
/// `sigmas`, when given, weight each residual by `1/σ²`. Standard errors come from the
/// inverse Gauss–Newton Hessian scaled by the reduced chi-square.
///
/// Returns `Err` for malformed input or a non-finite model at `p0`. Singular normal
/// equations or hitting the iteration cap give `converged = false` with a message.
pub fn fit_nlls(
    model: &ModelSpec,
    p0: &[f64],
    xs: &[f64],
    ys: &[f64],
    sigmas: Option<&[f64]>,
) -> Result<FitResult> {
    fit_nlls_with(model, p0, xs, ys, sigmas, FitOptions::default())
}

pub fn fit_nlls_with(
    model: &ModelSpec,
    p0: &[f64],
    xs: &[f64],
    ys: &[f64],
    sigmas: Option<&[f64]>,
    opts: FitOptions,
) -> Result<FitResult> {
    let m = model.arity();
    let n = xs.len();
    if p0.len() != m {
        return Err(Error::invalid(format!(
            "{}: expected {m} starting values, got {}",
            model.name,
            p0.len()
        )));
    }
    if ys.len() != n {
        return Err(Error::invalid("xs and ys differ in length"));
    }
    if n < m {
        return Err(Error::invalid(format!(
            "{}: {n} points cannot constrain {m} parameters",
            model.name
        )));
    }
    if !model.in_bounds(p0) {
        return Err(Error::invalid(format!("{}: p0 outside bounds", model.name)));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite data"));
    }
    let weights = match sigmas {
        None => vec![1.0; n],
        Some(s) => {
            if s.len() != n {
                return Err(Error::invalid("sigmas length differs from data"));
            }
            if s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::invalid("sigmas must be positive and finite"));
            }
            s.iter().map(|v| 1.0 / (v * v)).collect()
        }
    };
    let problem = Problem {
        model,
        xs,
        ys,
        weights,
    };

    let mut p = p0.to_vec();
    // magnitude floor for the step cap, so parameters starting at zero can still move
    let floor: Vec<f64> = p0
        .iter()
        .map(|v| if *v == 0.0 { 1.0 } else { 1e-3 * v.abs() })
        .collect();
    let mut r = problem
        .residuals(&p)
        .ok_or_else(|| Error::invalid(format!("{}: model is not finite at p0", model.name)))?;
    let mut ssr = sum_sq(&r);
    let mut lambda = opts.lambda_init;
    let mut converged = false;
    let mut message = String::from("iteration limit reached");
    let mut iterations = 0;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let (a, g) = problem.normal_equations(&p, &r);
        let gnorm = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if gnorm < opts.gtol || ssr == 0.0 {
            converged = true;
            message = "gradient norm below tolerance".into();
            // one undamped Gauss-Newton step to finish off near-linear problems
            if ssr > 0.0 {
                if let Some(step) = cholesky_solve(&a, m, &g) {
                    let mut trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
                    model.project(&mut trial);
                    if let Some(r_new) = problem.residuals(&trial) {
                        if sum_sq(&r_new) < ssr {
                            ssr = sum_sq(&r_new);
                            p = trial;
                            r = r_new;
                        }
                    }
                }
            }
            break;
        }
        let max_diag = (0..m).map(|j| a[j * m + j]).fold(0.0f64, f64::max);
        if let Some(j) = (0..m).find(|&j| a[j * m + j] <= 1e-30 * max_diag.max(f64::MIN_POSITIVE)) {
            message = format!(
                "singular normal equations: parameter `{}` has no effect on the model",
                model.param_names[j]
            );
            break;
        }

        loop {
            let mut damped = a.clone();
            for j in 0..m {
                damped[j * m + j] += lambda * a[j * m + j];
            }
            let Some(mut step) = cholesky_solve(&damped, m, &g) else {
                lambda *= LAMBDA_FACTOR;
                if lambda > LAMBDA_MAX {
                    message = "singular normal equations".into();
                    break 'outer;
                }
                continue;
            };
            if let Some(cap) = opts.max_relative_step {
                let worst = step
                    .iter()
                    .zip(p.iter().zip(&floor))
                    .map(|(d, (q, f))| d.abs() / (q.abs() + f))
                    .fold(0.0f64, f64::max);
                if worst > cap {
                    step.iter_mut().for_each(|d| *d *= cap / worst);
                }
            }
            let mut trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            model.project(&mut trial);
            let moved: f64 = trial
                .iter()
                .zip(&p)
                .map(|(t, q)| (t - q) * (t - q))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = p.iter().map(|q| q * q).sum::<f64>().sqrt();
            if moved <= opts.xtol * (scale + opts.xtol) {
                converged = true;
                message = "step size below tolerance".into();
                break 'outer;
            }
            match problem.residuals(&trial) {
                Some(r_new) if sum_sq(&r_new) < ssr => {
                    let ssr_new = sum_sq(&r_new);
                    let rel = (ssr - ssr_new) / ssr;
                    p = trial;
                    r = r_new;
                    ssr = ssr_new;
                    lambda = (lambda / LAMBDA_FACTOR).max(1e-12);
                    if rel < opts.ftol || ssr == 0.0 {
                        converged = true;
                        message = "relative residual decrease below tolerance".into();
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    lambda *= LAMBDA_FACTOR;
                    if lambda > LAMBDA_MAX {
                        converged = true;
                        message = "no descent step available; at numerical optimum".into();
                        break 'outer;
                    }
                }
            }
        }
    }

    let (a, _) = problem.normal_equations(&p, &r);
    let dof = n.saturating_sub(m);
    let s2 = if dof > 0 { ssr / dof as f64 } else { 0.0 };
    let stderr = match invert_spd(&a, m) {
        Some(cov) => (0..m)
            .map(|j| (cov[j * m + j] * s2).max(0.0).sqrt())
            .collect(),
        None => vec![f64::NAN; m],
    };

    Ok(FitResult {
        names: model.param_names.clone(),
        params: p,
        stderr,
        residual_norm: ssr,
        converged,
        iterations,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numfit::{g2_model, linear_model, lorentzian_model, saturation_model};
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let fit = fit_nlls(&linear_model(), &[1.0], &[1.0, 2.0], &[2.0, 4.0], None).unwrap();
        assert!(fit.converged);
        assert!((fit.get("slope") - 2.0).abs() < 1e-12);
        assert!(fit.residual_norm < 1e-20);
        assert!(fit.iterations >= 1);
    }

    #[test]
    fn noiseless_lorentzian_center() {
        let model = lorentzian_model();
        let truth = [0.01, 68.4, 8.0, 0.001];
        let xs: Vec<f64> = (0..61).map(|i| 40.0 + i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| model.eval(&truth, x)).collect();
        let fit = fit_nlls(&model, &[0.008, 66.0, 6.0, 0.0], &xs, &ys, None).unwrap();
        assert!(fit.converged, "{}", fit.message);
        assert!((fit.get("f0") - 68.4).abs() < 1e-6, "{}", fit.get("f0"));
    }

    #[test]
    fn noiseless_g2() {
        let model = g2_model();
        let truth = [0.5, 5.2, 89.1];
        let xs: Vec<f64> = (-500..=500).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| model.eval(&truth, x)).collect();
        let fit = fit_nlls(&model, &[0.6, 6.0, 75.0], &xs, &ys, None).unwrap();
        assert!(fit.converged, "{}", fit.message);
        for (got, want) in fit.params.iter().zip(truth) {
            assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn nan_at_start_rejected() {
        let model = ModelSpec::new("sqrt", &["a"], |p, x| (p[0] * x).sqrt());
        assert!(fit_nlls(&model, &[-1.0], &[1.0, 2.0], &[1.0, 1.0], None).is_err());
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(fit_nlls(
            &lorentzian_model(),
            &[1.0, 0.0, 1.0, 0.0],
            &[1.0],
            &[1.0],
            None
        )
        .is_err());
    }

    #[test]
    fn singular_reports_not_converged() {
        // `b` never enters the model
        let model = ModelSpec::new("flat", &["a", "b"], |p, _| p[0]);
        let fit = fit_nlls(
            &model,
            &[0.0, 1.0],
            &[0.0, 1.0, 2.0],
            &[1.0, 2.0, 3.0],
            None,
        )
        .unwrap();
        assert!(!fit.converged);
        assert!(fit.message.contains("singular"), "{}", fit.message);
    }

    #[test]
    fn weights_change_the_optimum() {
        let model = ModelSpec::new("const", &["c"], |p, _| p[0]);
        let xs = [0.0, 1.0];
        let ys = [0.0, 1.0];
        let even = fit_nlls(&model, &[0.2], &xs, &ys, None).unwrap();
        let skewed = fit_nlls(&model, &[0.2], &xs, &ys, Some(&[1.0, 0.5])).unwrap();
        assert!((even.get("c") - 0.5).abs() < 1e-9);
        // weights 1 and 4 -> weighted mean 0.8
        assert!((skewed.get("c") - 0.8).abs() < 1e-9);
    }

    #[test]
    fn bounds_are_respected() {
        let model = ModelSpec::new("const", &["c"], |p, _| p[0]).with_bounds(vec![(0.0, 0.3)]);
        let fit = fit_nlls(&model, &[0.1], &[0.0, 1.0], &[1.0, 1.0], None).unwrap();
        assert!(fit.get("c") <= 0.3 && fit.get("c") >= 0.299);
    }

    fn models_with_truth() -> Vec<(ModelSpec, Vec<f64>, Vec<f64>)> {
        vec![
            (
                lorentzian_model(),
                vec![0.01, 68.4, 8.0, 0.002],
                (0..61).map(|i| 40.0 + i as f64).collect(),
            ),
            (
                g2_model(),
                vec![0.5, 5.2, 89.1],
                (-500..=500).map(|i| i as f64).collect(),
            ),
            (
                saturation_model(),
                vec![7400.0, 0.43],
                vec![0.05, 0.1, 0.2, 0.4, 0.8, 1.2, 2.0, 3.0],
            ),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn fd_jacobian_matches_analytic(u in prop::collection::vec(0.5f64..1.5, 4), x in -3.0f64..3.0) {
            for (model, truth, xs) in models_with_truth() {
                let p: Vec<f64> = truth.iter().zip(&u).map(|(t, s)| t * s).collect();
                let span = xs[xs.len() - 1] - xs[0];
                let xv = xs[xs.len() / 2] + x * span / 6.0;
                let fd = finite_difference_jacobian(&model, &p, &[xv]);
                let an = model.analytic_gradient(&p, xv).unwrap();
                for (a, b) in fd.iter().zip(&an) {
                    let scale = a.abs().max(b.abs()).max(1e-3);
                    prop_assert!((a - b).abs() / scale < 1e-5, "{} {a} vs {b}", model.name);
                }
            }
        }

        #[test]
        fn noiseless_recovery_from_perturbed_start(u in prop::collection::vec(0.8f64..1.2, 4)) {
            for (model, truth, xs) in models_with_truth() {
                let ys: Vec<f64> = xs.iter().map(|&x| model.eval(&truth, x)).collect();
                let p0: Vec<f64> = truth.iter().zip(&u).map(|(t, s)| t * s).collect();
                let fit = fit_nlls(&model, &p0, &xs, &ys, None).unwrap();
                prop_assert!(fit.converged, "{}: {}", model.name, fit.message);
                for (got, want) in fit.params.iter().zip(&truth) {
                    prop_assert!(((got - want) / want).abs() < 1e-6, "{}: {got} vs {want}", model.name);
                }
            }
        }
    }
}
