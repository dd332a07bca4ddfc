//! Gauss–Legendre rules and a polar product rule over ellipse interiors.
//!
//! The polar rule is the brute-force reference for every closed-form
//! moment in this crate: `x = tx + R(α)(a ρ cos θ, b ρ sin θ)` with area
//! element `a b ρ dρ dθ`, Gauss–Legendre in `ρ ∈ [0, 1]` and the midpoint
//! rule in `θ`. Both factors are exact for the polynomial integrands that
//! occur here once the node counts exceed the polynomial degree.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of an n-point Gauss–Legendre rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d.is_finite() { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    /// Shared, lazily built rule of size `n`.
    pub fn cached(n: usize) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("quadrature cache poisoned");
        map.entry(n).or_insert_with(|| Arc::new(Self::new(n))).clone()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Midpoint nodes `θ_k = 2π (k + ½) / n` as `(cos, sin)` pairs.
pub fn angular_nodes(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
            let (s, c) = t.sin_cos();
            (c, s)
        })
        .collect()
}

/// Ellipse `((x', y') - t)` with semi-axes `a` along direction `alpha`.
#[derive(Debug, Clone, Copy)]
pub struct PolarEllipse {
    pub tx: f64,
    pub ty: f64,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
}

impl PolarEllipse {
    /// Area average of `f` using `n_rho` Gauss–Legendre × `n_theta` midpoint nodes.
    pub fn average(&self, n_rho: usize, n_theta: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
        let gl = GaussLegendre::cached(n_rho);
        let angles = angular_nodes(n_theta);
        let (sa, ca) = self.alpha.sin_cos();
        let mut total = 0.0;
        let mut weight = 0.0;
        for (&rho, &wr) in gl.nodes.iter().zip(&gl.weights) {
            let mut ring = 0.0;
            for &(c, s) in &angles {
                let u = self.a * rho * c;
                let v = self.b * rho * s;
                let x = self.tx + ca * u - sa * v;
                let y = self.ty + sa * u + ca * v;
                ring += f(x, y);
            }
            total += wr * rho * ring;
            weight += wr * rho * n_theta as f64;
        }
        total / weight
    }
}
