//! Pointwise regularity diagnostics for sampled monotone maps: polynomial-
//! approximation profiles across shrinking balls, the growth profile of
//! `|Tx - Tx0|`, and the sign of the deformation inequality for the
//! composition `Dh(x - Tx)` against smooth nonnegative bumps.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::estimates::least_squares_slope;
use crate::map::{GridSpec, SampledMap};
use crate::quadrature::norm;

/// Outcome of a ratio profile across a radius decade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Ratios stay of one size across radii (max at most twice the median).
    Bounded,
    /// Ratios decay as the radius shrinks (fitted rate at least 0.2), or
    /// vanish identically.
    Decaying,
    Inconclusive,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::Bounded => "bounded",
            Classification::Decaying => "decaying",
            Classification::Inconclusive => "inconclusive",
        })
    }
}

/// Per-center diagnostic: one ratio per radius, the log-log slope of the
/// ratios against the radii, and the resulting classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityProfile {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    pub fitted_rate: f64,
    pub classification: Classification,
}

impl RegularityProfile {
    pub fn is_bounded(&self) -> bool {
        matches!(self.classification, Classification::Bounded | Classification::Decaying)
    }
}

/// Which polynomial degree the profile fits on each ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitDegree {
    Constant,
    Affine,
}

/// Exponent for the residual average; `None` means the supremum over nodes.
pub type ResidualNorm = Option<f64>;

fn validate_radii(map: &SampledMap, center: &[f64], radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::Input("need at least one radius".into()));
    }
    for w in radii.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Input("radii must be strictly decreasing".into()));
        }
    }
    if !(radii[radii.len() - 1] > 0.0) {
        return Err(Error::Input("radii must be positive".into()));
    }
    // Balls may be clipped by the domain boundary: each profile is taken
    // over the nodes in ball ∩ grid, so only the center must lie inside.
    let g = map.grid();
    for k in 0..g.dimension() {
        if center[k] < g.box_min[k] - 1e-12 || center[k] > g.box_max[k] + 1e-12 {
            return Err(Error::Input("profile center lies outside the domain".into()));
        }
    }
    Ok(())
}

fn classify(radii: &[f64], ratios: &[f64]) -> (f64, Classification) {
    let tiny = 1e-12;
    if ratios.iter().all(|&r| r <= tiny) {
        return (0.0, Classification::Decaying);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&r, &v) in radii.iter().zip(ratios) {
        if v > tiny {
            xs.push(r.ln());
            ys.push(v.ln());
        }
    }
    let rate = if xs.len() >= 2 { least_squares_slope(&xs, &ys) } else { 0.0 };
    let mut sorted = ratios.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = sorted.len();
    let median =
        if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
    let max = sorted[m - 1];
    let class = if rate >= 0.2 {
        Classification::Decaying
    } else if max <= 2.0 * median {
        Classification::Bounded
    } else {
        Classification::Inconclusive
    };
    (rate, class)
}

/// Least-squares polynomial fit of the map over the given nodes: a constant
/// (the componentwise mean) or an affine function of `x - center`.
fn fit_polynomial(
    map: &SampledMap,
    nodes: &[usize],
    center: &[f64],
    degree: FitDegree,
) -> Vec<Box<dyn Fn(&[f64]) -> f64>> {
    let n = map.dimension();
    match degree {
        FitDegree::Constant => (0..n)
            .map(|c| {
                let mean = nodes.iter().map(|&i| map.value(i)[c]).sum::<f64>()
                    / nodes.len() as f64;
                Box::new(move |_: &[f64]| mean) as Box<dyn Fn(&[f64]) -> f64>
            })
            .collect(),
        FitDegree::Affine => {
            let rows = nodes.len();
            let mut design = DMatrix::zeros(rows, n + 1);
            for (r, &i) in nodes.iter().enumerate() {
                design[(r, 0)] = 1.0;
                let x = map.node(i);
                for k in 0..n {
                    design[(r, k + 1)] = x[k] - center[k];
                }
            }
            let svd = design.svd(true, true);
            (0..n)
                .map(|c| {
                    let rhs =
                        DVector::from_iterator(rows, nodes.iter().map(|&i| map.value(i)[c]));
                    let coef = svd.solve(&rhs, 1e-12).expect("least-squares solve");
                    let center = center.to_vec();
                    Box::new(move |x: &[f64]| {
                        coef[0]
                            + (0..x.len()).map(|k| coef[k + 1] * (x[k] - center[k])).sum::<f64>()
                    }) as Box<dyn Fn(&[f64]) -> f64>
                })
                .collect()
        }
    }
}

/// Polynomial-approximation profile: on each ball `B_R(x0)` fit a polynomial
/// `P` of the allowed degree to the sampled map by least squares, then report
/// `(avg |T - P|^q)^{1/q} / R^k` (supremum over nodes when `q` is `None`).
pub fn tkp_profile(
    map: &SampledMap,
    center_node: usize,
    k: f64,
    q: ResidualNorm,
    degree: FitDegree,
    radii: &[f64],
) -> Result<RegularityProfile> {
    if !(k > 0.0) {
        return Err(Error::Input("profile exponent k must be positive".into()));
    }
    if let Some(qv) = q {
        if !(qv >= 1.0) {
            return Err(Error::Input("residual exponent q must be >= 1".into()));
        }
    }
    let center = map.node(center_node);
    validate_radii(map, &center, radii)?;
    let n = map.dimension();
    let mut ratios = Vec::with_capacity(radii.len());
    for &radius in radii {
        let nodes = map.nodes_in_ball(&center, radius);
        if nodes.len() < 2 * (n + 1) {
            return Err(Error::Resolution(format!(
                "{} nodes in ball of radius {radius}; need at least {}",
                nodes.len(),
                2 * (n + 1)
            )));
        }
        let fit = fit_polynomial(map, &nodes, &center, degree);
        let residual = |i: usize| -> f64 {
            let x = map.node(i);
            let t = map.value(i);
            let r: Vec<f64> = (0..n).map(|c| t[c] - fit[c](&x)).collect();
            norm(&r)
        };
        let value = match q {
            None => nodes.iter().map(|&i| residual(i)).fold(0.0f64, f64::max),
            Some(qv) => (nodes.iter().map(|&i| residual(i).powf(qv)).sum::<f64>()
                / nodes.len() as f64)
                .powf(1.0 / qv),
        };
        let ratio = value / radius.powf(k);
        if !ratio.is_finite() {
            return Err(Error::NonFinite("profile ratio"));
        }
        ratios.push(ratio);
    }
    let (fitted_rate, classification) = classify(radii, &ratios);
    Ok(RegularityProfile { center, radii: radii.to_vec(), ratios, fitted_rate, classification })
}

/// Growth profile `sup_{B_R(x0)} |Tx - Tx0| / R^{1/(p-1)}` across radii.
pub fn holder_profile(
    map: &SampledMap,
    center_node: usize,
    p: f64,
    radii: &[f64],
) -> Result<RegularityProfile> {
    if !(p >= 2.0) {
        return Err(Error::Input("exponent p must be at least 2".into()));
    }
    let center = map.node(center_node);
    let t0 = map.value(center_node).to_vec();
    validate_radii(map, &center, radii)?;
    let n = map.dimension();
    let exponent = 1.0 / (p - 1.0);
    let mut ratios = Vec::with_capacity(radii.len());
    for &radius in radii {
        let nodes = map.nodes_in_ball(&center, radius);
        if nodes.len() < 2 * (n + 1) {
            return Err(Error::Resolution(format!(
                "{} nodes in ball of radius {radius}; need at least {}",
                nodes.len(),
                2 * (n + 1)
            )));
        }
        let sup = nodes
            .iter()
            .map(|&i| {
                let d: Vec<f64> =
                    map.value(i).iter().zip(&t0).map(|(a, b)| a - b).collect();
                norm(&d)
            })
            .fold(0.0f64, f64::max);
        ratios.push(sup / radius.powf(exponent));
    }
    crate::error::ensure_finite(&ratios, "growth profile ratios")?;
    let (fitted_rate, classification) = classify(radii, &ratios);
    Ok(RegularityProfile { center, radii: radii.to_vec(), ratios, fitted_rate, classification })
}

/// Average-oscillation profile of the gradient composition:
/// `avg_{B_R(x0)} |Dh(x - Tx) - Dh(x0 - Tx0)| / R`.
pub fn dh_composition_t11_probe(
    cost: &CostFunction,
    map: &SampledMap,
    center_node: usize,
    radii: &[f64],
) -> Result<RegularityProfile> {
    let center = map.node(center_node);
    validate_radii(map, &center, radii)?;
    let n = map.dimension();
    let u0: Vec<f64> =
        center.iter().zip(map.value(center_node)).map(|(x, t)| x - t).collect();
    let g0 = cost.grad(&u0)?;
    let mut ratios = Vec::with_capacity(radii.len());
    for &radius in radii {
        let nodes = map.nodes_in_ball(&center, radius);
        if nodes.len() < 2 * (n + 1) {
            return Err(Error::Resolution(format!(
                "{} nodes in ball of radius {radius}; need at least {}",
                nodes.len(),
                2 * (n + 1)
            )));
        }
        let mut acc = 0.0;
        for &i in &nodes {
            let x = map.node(i);
            let u: Vec<f64> = x.iter().zip(map.value(i)).map(|(a, t)| a - t).collect();
            let g = cost.grad(&u)?;
            let d: Vec<f64> = g.iter().zip(&g0).map(|(a, b)| a - b).collect();
            acc += norm(&d);
        }
        ratios.push(acc / nodes.len() as f64 / radius);
    }
    crate::error::ensure_finite(&ratios, "gradient oscillation ratios")?;
    let (fitted_rate, classification) = classify(radii, &ratios);
    Ok(RegularityProfile { center, radii: radii.to_vec(), ratios, fitted_rate, classification })
}

/// Tensor-product smooth bump `prod_k exp(1 - 1/(1 - t_k^2))` with
/// `t_k = (x_k - center_k) / width_k`, supported on the box
/// `center ± width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: Vec<f64>,
}

fn bump_1d(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

fn bump_1d_deriv(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        let d = 1.0 - t * t;
        bump_1d(t) * (-2.0 * t / (d * d))
    }
}

impl Bump {
    pub fn new(center: Vec<f64>, width: Vec<f64>) -> Result<Self> {
        if center.len() != width.len() {
            return Err(Error::Input("bump center/width dimension mismatch".into()));
        }
        crate::error::ensure_finite(&center, "bump center")?;
        if width.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Input("bump widths must be positive".into()));
        }
        Ok(Self { center, width })
    }

    fn check_support_inside(&self, grid: &GridSpec) -> Result<()> {
        for k in 0..self.center.len() {
            if self.center[k] - self.width[k] < grid.box_min[k] - 1e-12
                || self.center[k] + self.width[k] > grid.box_max[k] + 1e-12
            {
                return Err(Error::Input("bump support escapes the domain box".into()));
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.center
            .iter()
            .zip(&self.width)
            .zip(x)
            .map(|((c, w), xi)| bump_1d((xi - c) / w))
            .product()
    }

    /// Directional derivative along a (not necessarily unit) vector.
    pub fn directional_derivative(&self, x: &[f64], xi: &[f64]) -> f64 {
        let n = x.len();
        let ts: Vec<f64> =
            (0..n).map(|k| (x[k] - self.center[k]) / self.width[k]).collect();
        let vals: Vec<f64> = ts.iter().map(|&t| bump_1d(t)).collect();
        (0..n)
            .map(|k| {
                if xi[k] == 0.0 {
                    return 0.0;
                }
                let mut partial = bump_1d_deriv(ts[k]) / self.width[k];
                for (j, &v) in vals.iter().enumerate() {
                    if j != k {
                        partial *= v;
                    }
                }
                xi[k] * partial
            })
            .sum()
    }

    /// Grid-quadrature mass `int bump dx` over the sampled domain.
    pub fn mass(&self, grid: &GridSpec) -> f64 {
        let cell = grid.cell_volume();
        (0..grid.node_count()).map(|i| self.value(&grid.node(i))).sum::<f64>() * cell
    }
}

/// Seeded family of bumps with supports inside the domain box.
pub fn bump_family(grid: &GridSpec, count: usize, seed: u64) -> Vec<Bump> {
    let n = grid.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut center = vec![0.0; n];
            let mut width = vec![0.0; n];
            for k in 0..n {
                let extent = grid.box_max[k] - grid.box_min[k];
                let w = extent * rng.gen_range(0.12..0.3);
                let lo = grid.box_min[k] + w;
                let hi = grid.box_max[k] - w;
                center[k] = rng.gen_range(lo..hi);
                width[k] = w;
            }
            Bump { center, width }
        })
        .collect()
}

/// Coordinate directions plus the normalized two-coordinate diagonals.
pub fn direction_set(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        out.push(e);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i + 1..n {
            for sign in [1.0, -1.0] {
                let mut d = vec![0.0; n];
                d[i] = s;
                d[j] = sign * s;
                out.push(d);
            }
        }
    }
    out
}

/// Grid-quadrature value of the deformation pairing for one bump:
/// `int <D2h(x-Tx) xi, xi> bump dx + int (Dh(x-Tx) . xi) d_xi bump dx`.
///
/// Nonnegative (up to quadrature error) when the sampled map is monotone
/// for this cost.
pub fn bd_value(
    cost: &CostFunction,
    map: &SampledMap,
    xi: &[f64],
    bump: &Bump,
) -> Result<f64> {
    let n = map.dimension();
    if xi.len() != n || bump.center.len() != n {
        return Err(Error::Input("direction/bump dimension mismatch".into()));
    }
    if (norm(xi) - 1.0).abs() > 1e-9 {
        return Err(Error::Input("direction must be a unit vector".into()));
    }
    bump.check_support_inside(map.grid())?;
    let cell = map.grid().cell_volume();
    let mut acc = 0.0;
    for i in 0..map.node_count() {
        let x = map.node(i);
        let phi = bump.value(&x);
        let dphi = bump.directional_derivative(&x, xi);
        if phi == 0.0 && dphi == 0.0 {
            continue;
        }
        let u: Vec<f64> = x.iter().zip(map.value(i)).map(|(a, t)| a - t).collect();
        let second = cost.hess_bilin(&u, xi, xi);
        let first: f64 = cost.grad(&u)?.iter().zip(xi).map(|(g, s)| g * s).sum();
        acc += second * phi + first * dphi;
    }
    Ok(acc * cell)
}

/// Minimum of [`bd_value`] over a bump family for one direction.
pub fn bd_inequality_min(
    cost: &CostFunction,
    map: &SampledMap,
    xi: &[f64],
    bumps: &[Bump],
) -> Result<f64> {
    if bumps.is_empty() {
        return Err(Error::Input("bump family is empty".into()));
    }
    let mut min = f64::INFINITY;
    for bump in bumps {
        min = min.min(bd_value(cost, map, xi, bump)?);
    }
    Ok(min)
}

/// Distributional pairing of the symmetrized entry
/// `a_ij = h_ij(x-Tx) - (d_j[h_i(x-Tx)] + d_i[h_j(x-Tx)]) / 2`
/// against a bump: the derivative terms are moved onto the bump (its
/// compact support kills the boundary terms), so only the bump is ever
/// differentiated.
pub fn a_entry_pairing(
    cost: &CostFunction,
    map: &SampledMap,
    i: usize,
    j: usize,
    bump: &Bump,
) -> Result<f64> {
    let n = map.dimension();
    if i >= n || j >= n {
        return Err(Error::Input("entry index out of range".into()));
    }
    bump.check_support_inside(map.grid())?;
    let mut ei = vec![0.0; n];
    ei[i] = 1.0;
    let mut ej = vec![0.0; n];
    ej[j] = 1.0;
    let cell = map.grid().cell_volume();
    let mut acc = 0.0;
    for idx in 0..map.node_count() {
        let x = map.node(idx);
        let phi = bump.value(&x);
        let di = bump.directional_derivative(&x, &ei);
        let dj = bump.directional_derivative(&x, &ej);
        if phi == 0.0 && di == 0.0 && dj == 0.0 {
            continue;
        }
        let u: Vec<f64> = x.iter().zip(map.value(idx)).map(|(a, t)| a - t).collect();
        let hij = cost.hess_bilin(&u, &ei, &ej);
        let g = cost.grad(&u)?;
        acc += hij * phi + 0.5 * (g[i] * dj + g[j] * di);
    }
    Ok(acc * cell)
}
