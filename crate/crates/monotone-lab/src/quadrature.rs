//! Shared numerical-integration primitives: tensor Gauss-Legendre rules,
//! sphere and ball product rules, and the weakly singular Newtonian-kernel
//! moments where the `s^{n-1}` polar factor cancels the singularity.

use crate::error::{Error, Result};

/// Gauss-Legendre rule with nodes and weights mapped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `m`-node rule; exact for polynomials of degree `2m - 1`.
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        // Newton iteration on P_m over [-1, 1], then map to [0, 1].
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(m, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(m, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = 0.5 * (1.0 - x); // descending roots -> ascending nodes
            weights[i] = 0.5 * w;
        }
        nodes.reverse();
        weights.reverse();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes on `[0, 1]`, ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let len = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(a + len * x))
            .sum::<f64>()
            * len
    }
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let dp = (m as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Tensor Gauss-Legendre integral of `f(s, t)` over the unit square.
pub fn gauss_legendre_unit_square<F: FnMut(f64, f64) -> f64>(mut f: F, nodes_1d: usize) -> f64 {
    let rule = GaussLegendre::new(nodes_1d);
    let mut acc = 0.0;
    for (&s, &ws) in rule.nodes().iter().zip(rule.weights()) {
        for (&t, &wt) in rule.nodes().iter().zip(rule.weights()) {
            acc += ws * wt * f(s, t);
        }
    }
    acc
}

/// Adaptive tensor Gauss-Legendre integral of `f` over the unit square.
///
/// Cells where two refinement levels disagree are subdivided, with a
/// per-cell error budget proportional to the cell side (integrand
/// irregularities concentrate on lower-dimensional sets), so kinked or
/// mildly singular integrands still reach the requested absolute tolerance.
pub fn adaptive_unit_square<F: Fn(f64, f64) -> f64>(f: F, tolerance: f64) -> f64 {
    let rule = GaussLegendre::new(8);
    adaptive_cell(&f, &rule, 0.0, 0.0, 1.0, tolerance, 0)
}

fn gl_cell<F: Fn(f64, f64) -> f64>(f: &F, rule: &GaussLegendre, x0: f64, y0: f64, h: f64) -> f64 {
    let mut acc = 0.0;
    for (&s, &ws) in rule.nodes().iter().zip(rule.weights()) {
        for (&t, &wt) in rule.nodes().iter().zip(rule.weights()) {
            acc += ws * wt * f(x0 + h * s, y0 + h * t);
        }
    }
    acc * h * h
}

fn adaptive_cell<F: Fn(f64, f64) -> f64>(
    f: &F,
    rule: &GaussLegendre,
    x0: f64,
    y0: f64,
    h: f64,
    tolerance: f64,
    depth: usize,
) -> f64 {
    let coarse = gl_cell(f, rule, x0, y0, h);
    let h2 = h / 2.0;
    let quads = [(x0, y0), (x0 + h2, y0), (x0, y0 + h2), (x0 + h2, y0 + h2)];
    let fine: f64 = quads.iter().map(|&(a, b)| gl_cell(f, rule, a, b, h2)).sum();
    if (fine - coarse).abs() <= tolerance * h || depth >= 20 {
        return fine;
    }
    quads
        .iter()
        .map(|&(a, b)| adaptive_cell(f, rule, a, b, h2, tolerance, depth + 1))
        .sum()
}

/// Adaptive Gauss-Legendre integral of `f` over `[0, 1]`; the 1-D analog of
/// [`adaptive_unit_square`].
pub fn adaptive_unit_interval<F: Fn(f64) -> f64>(f: F, tolerance: f64) -> f64 {
    let rule = GaussLegendre::new(8);
    adaptive_interval(&f, &rule, 0.0, 1.0, tolerance, 0)
}

fn adaptive_interval<F: Fn(f64) -> f64>(
    f: &F,
    rule: &GaussLegendre,
    x0: f64,
    h: f64,
    tolerance: f64,
    depth: usize,
) -> f64 {
    let coarse = rule.integrate(x0, x0 + h, |x| f(x));
    let h2 = h / 2.0;
    let fine =
        rule.integrate(x0, x0 + h2, |x| f(x)) + rule.integrate(x0 + h2, x0 + h, |x| f(x));
    if (fine - coarse).abs() <= tolerance * h || depth >= 24 {
        return fine;
    }
    adaptive_interval(f, rule, x0, h2, tolerance, depth + 1)
        + adaptive_interval(f, rule, x0 + h2, h2, tolerance, depth + 1)
}

/// Node count and dual-path tolerance for the `[0,1]^2` integrals.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureSpec {
    pub nodes_1d: usize,
    pub tolerance: f64,
}

impl QuadratureSpec {
    pub fn new(nodes_1d: usize, tolerance: f64) -> Self {
        assert!(nodes_1d >= 2, "quadrature needs nodes_1d >= 2");
        Self { nodes_1d, tolerance }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { nodes_1d: 32, tolerance: 1e-8 }
    }
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * std::f64::consts::PI / n as f64,
    }
}

/// Newtonian fundamental solution `|x|^{2-n} / (n omega_n (2 - n))`, `n >= 3`.
pub fn fundamental_solution(x: &[f64], n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    let r = norm(x);
    if r == 0.0 {
        return Err(Error::Domain("fundamental solution is singular at 0".into()));
    }
    Ok(fundamental_solution_radial(r, n))
}

/// Radial profile of the fundamental solution at `|x| = s > 0`.
pub fn fundamental_solution_radial(s: f64, n: usize) -> f64 {
    s.powf(2.0 - n as f64) / (n as f64 * unit_ball_volume(n) * (2.0 - n as f64))
}

/// `int_{B_rho} (Gamma(x) - Gamma(rho)) g(|x|) dx` by 1-D radial quadrature.
///
/// The polar weight `n omega_n s^{n-1} Gamma(s) = s / (2 - n)` is bounded, so
/// the integrand carries no singularity.
pub fn radial_gamma_moment<G: FnMut(f64) -> f64>(
    rho: f64,
    n: usize,
    mut g: G,
    nodes: usize,
) -> Result<f64> {
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let rule = GaussLegendre::new(nodes);
    let nf = n as f64;
    let omega = unit_ball_volume(n);
    let gamma_rho = fundamental_solution_radial(rho, n);
    Ok(rule.integrate(0.0, rho, |s| {
        let weight = s / (2.0 - nf) - nf * omega * s.powf(nf - 1.0) * gamma_rho;
        weight * g(s)
    }))
}

/// Quadrature rule on the unit sphere `S^{n-1}`; weights sum to its area.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// Product rule in spherical coordinates: Gauss-Legendre in the polar
    /// angles (the `sin^k` weights are smooth) and a uniform rule in the
    /// periodic azimuthal angle.
    pub fn new(n: usize, resolution: usize) -> Self {
        assert!(n >= 2);
        assert!(resolution >= 2);
        if n == 2 {
            let m = 2 * resolution;
            let w = 2.0 * std::f64::consts::PI / m as f64;
            let points = (0..m)
                .map(|i| {
                    let th = w * (i as f64 + 0.5);
                    vec![th.cos(), th.sin()]
                })
                .collect();
            return Self { points, weights: vec![w; m] };
        }
        // Polar angles phi_1..phi_{n-2} in [0, pi], azimuth in [0, 2pi).
        let rule = GaussLegendre::new(resolution);
        let azimuth = 2 * resolution;
        let waz = 2.0 * std::f64::consts::PI / azimuth as f64;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut stack: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
        for axis in 0..n - 2 {
            let sin_power = (n - 2 - axis) as f64;
            let mut next = Vec::new();
            for (angles, w) in &stack {
                for (&x, &wx) in rule.nodes().iter().zip(rule.weights()) {
                    let phi = std::f64::consts::PI * x;
                    let mut a = angles.clone();
                    a.push(phi);
                    next.push((a, w * wx * std::f64::consts::PI * phi.sin().powf(sin_power)));
                }
            }
            stack = next;
        }
        for (angles, w) in stack {
            for i in 0..azimuth {
                let last = waz * (i as f64 + 0.5);
                let mut point = vec![0.0; n];
                let mut sin_prod = 1.0;
                for (k, &phi) in angles.iter().enumerate() {
                    point[k] = sin_prod * phi.cos();
                    sin_prod *= phi.sin();
                }
                point[n - 2] = sin_prod * last.cos();
                point[n - 1] = sin_prod * last.sin();
                points.push(point);
                weights.push(w * waz);
            }
        }
        Self { points, weights }
    }

    /// Integral of `f` over the sphere.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| w * f(p))
            .sum()
    }
}

/// Polar product rule over a ball: nonnegative weights summing to its volume.
#[derive(Debug, Clone)]
pub struct BallQuadrature {
    pub center: Vec<f64>,
    pub radius: f64,
    pub nodes: Vec<(Vec<f64>, f64)>,
}

impl BallQuadrature {
    pub fn polar(center: &[f64], radius: f64, radial_nodes: usize, angular_resolution: usize) -> Self {
        let n = center.len();
        let radial = GaussLegendre::new(radial_nodes);
        let sphere = SphereRule::new(n, angular_resolution);
        let mut nodes = Vec::with_capacity(radial.len() * sphere.points.len());
        for (&x, &wx) in radial.nodes().iter().zip(radial.weights()) {
            let s = radius * x;
            let ws = radius * wx * s.powf(n as f64 - 1.0);
            for (p, &wp) in sphere.points.iter().zip(&sphere.weights) {
                let point: Vec<f64> = center.iter().zip(p).map(|(c, d)| c + s * d).collect();
                nodes.push((point, ws * wp));
            }
        }
        Self { center: center.to_vec(), radius, nodes }
    }

    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().map(|(p, w)| w * f(p)).sum()
    }

    pub fn volume(&self) -> f64 {
        self.nodes.iter().map(|(_, w)| w).sum()
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
