//! Gauss–Legendre quadrature on [0, 1].

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
///
/// Roots are located by Newton iteration on the three-term recurrence,
/// starting from the Chebyshev-like initial guess.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule over a set of breakpoints in [0, 1].
///
/// Every interval between consecutive breakpoints is split into panels no
/// wider than `max_panel`, and each panel receives `nodes_per_panel` points.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub const NODES_PER_PANEL: usize = 64;
pub const MAX_PANEL_WIDTH: f64 = 0.125;

impl CompositeRule {
    pub fn new(breakpoints: &[f64], nodes_per_panel: usize, max_panel: f64) -> Self {
        let (xs, ws) = gauss_legendre(nodes_per_panel);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for pair in breakpoints.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            if hi <= lo {
                continue;
            }
            let panels = ((hi - lo) / max_panel).ceil().max(1.0) as usize;
            let width = (hi - lo) / panels as f64;
            for p in 0..panels {
                let a = lo + p as f64 * width;
                let half = 0.5 * width;
                for (x, w) in xs.iter().zip(&ws) {
                    nodes.push(a + half * (x + 1.0));
                    weights.push(half * w);
                }
            }
        }
        Self { nodes, weights }
    }

    /// Default rule on the unit interval.
    pub fn unit() -> Self {
        Self::new(&[0.0, 1.0], NODES_PER_PANEL, MAX_PANEL_WIDTH)
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}
