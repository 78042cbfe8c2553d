use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

/// Outcome of a least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// One-sigma standard errors; NaN when the covariance is unavailable.
    pub stderr: Vec<f64>,
    /// Weighted sum of squared residuals at the returned parameters.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Why the solver stopped.
    pub message: String,
}

impl FitResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Value of a named parameter. Panics on an unknown name.
    pub fn get(&self, name: &str) -> f64 {
        self.params[self
            .index(name)
            .unwrap_or_else(|| panic!("no parameter `{name}`"))]
    }

    pub fn stderr_of(&self, name: &str) -> f64 {
        self.stderr[self
            .index(name)
            .unwrap_or_else(|| panic!("no parameter `{name}`"))]
    }
}

impl Serialize for FitResult {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Report<'a> {
            params: BTreeMap<&'a str, f64>,
            stderr: BTreeMap<&'a str, Option<f64>>,
            residual_norm: f64,
            converged: bool,
            iterations: usize,
            message: &'a str,
        }
        Report {
            params: self
                .names
                .iter()
                .map(String::as_str)
                .zip(self.params.iter().copied())
                .collect(),
            stderr: self
                .names
                .iter()
                .map(String::as_str)
                .zip(self.stderr.iter().map(|&e| e.is_finite().then_some(e)))
                .collect(),
            residual_norm: self.residual_norm,
            converged: self.converged,
            iterations: self.iterations,
            message: &self.message,
        }
        .serialize(s)
    }
}
