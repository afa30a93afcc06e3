//! Gauss-Hermite quadrature nodes and weights.
//!
//! Nodes and weights are generated with the Golub-Welsch algorithm: the nodes
//! are the eigenvalues of the symmetric tridiagonal Jacobi matrix of the
//! physicists' Hermite recurrence (zero diagonal, off-diagonal `sqrt(i/2)`),
//! and the weights are `sqrt(pi)` times the squared first components of the
//! eigenvectors. The rule satisfies
//!
//! `integral f(t) exp(-t^2) dt  ~=  sum_i w_i f(t_i)`
//!
//! so the expectation of `g` under `N(m, s^2)` is
//! `sum_i (w_i / sqrt(pi)) g(m + sqrt(2) s t_i)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(degree: usize) -> Self {
        assert!(degree >= 1, "quadrature degree must be at least 1");
        if degree == 1 {
            return Self {
                nodes: vec![0.0],
                weights: vec![std::f64::consts::PI.sqrt()],
            };
        }
        let mut jacobi = DMatrix::zeros(degree, degree);
        for i in 1..degree {
            let off = (i as f64 / 2.0).sqrt();
            jacobi[(i - 1, i)] = off;
            jacobi[(i, i - 1)] = off;
        }
        let eig = jacobi.symmetric_eigen();
        let mu0 = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..degree)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Shared, lazily built rule. Rules are cached by degree because the hot
    /// loops request the same degree once per data row.
    pub fn cached(degree: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(degree)
            .or_insert_with(|| Arc::new(GaussHermite::new(degree)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Expectation of `g` under a normal law with the given mean and standard
    /// deviation.
    pub fn normal_expectation<F: FnMut(f64) -> f64>(&self, mean: f64, sd: f64, mut g: F) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sd;
        let norm = 1.0 / std::f64::consts::PI.sqrt();
        let mut acc = 0.0;
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * g(mean + scale * t);
        }
        acc * norm
    }
}
