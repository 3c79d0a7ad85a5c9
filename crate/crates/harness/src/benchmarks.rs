//! Benchmark objectives used by the studies and the session service.

use std::f64::consts::PI;

/// Chained Rosenbrock: `Σ 100(x[i+1] - x[i]²)² + (1 - x[i])²`.
pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

/// Branin-Hoo on `[-5, 10] × [0, 15]`.
pub fn branin(x: &[f64]) -> f64 {
    let (a, b, c) = (1.0, 5.1 / (4.0 * PI * PI), 5.0 / PI);
    let (r, s, t) = (6.0, 10.0, 1.0 / (8.0 * PI));
    a * (x[1] - b * x[0] * x[0] + c * x[0] - r).powi(2) + s * (1.0 - t) * x[0].cos() + s
}

/// A named objective on a box, with its known global minimizers.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: &'static str,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub function: fn(&[f64]) -> f64,
    pub minimizers: Vec<Vec<f64>>,
    pub minimum: f64,
}

impl Benchmark {
    pub fn rosenbrock(dim: usize, bound: f64) -> Self {
        Self {
            name: "rosenbrock",
            lower: vec![-bound; dim],
            upper: vec![bound; dim],
            function: rosenbrock,
            minimizers: vec![vec![1.0; dim]],
            minimum: 0.0,
        }
    }

    pub fn rastrigin(dim: usize) -> Self {
        Self {
            name: "rastrigin",
            lower: vec![-5.12; dim],
            upper: vec![5.12; dim],
            function: rastrigin,
            minimizers: vec![vec![0.0; dim]],
            minimum: 0.0,
        }
    }

    pub fn branin() -> Self {
        Self {
            name: "branin",
            lower: vec![-5.0, 0.0],
            upper: vec![10.0, 15.0],
            function: branin,
            minimizers: vec![vec![-PI, 12.275], vec![PI, 2.275], vec![3.0 * PI, 2.475]],
            minimum: 5.0 / (4.0 * PI),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.function)(x)
    }
}
