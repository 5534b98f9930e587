//! The local sup-norm estimate for monotone maps: the deviation integral,
//! its optimal-radius profile, the two-branch bound with explicit exponents,
//! and the Green representation identity on balls.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::lemmas::j_lower_constant;
use crate::map::SampledMap;
use crate::monotone::g_eval;
use crate::quadrature::{
    norm, unit_ball_volume, BallQuadrature, GaussLegendre, QuadratureSpec, SphereRule,
};

/// Affine reference frame `(A, b)`; the map deviation is
/// `u(x) = T(x) - A x - b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFrame {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
}

impl AffineFrame {
    pub fn new(a: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        if a.nrows() != b.len() || a.ncols() != b.len() {
            return Err(Error::Input("affine frame dimensions disagree".into()));
        }
        crate::error::ensure_finite(&b, "affine frame b")?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("affine frame A"));
        }
        Ok(Self { a, b })
    }

    /// Identity frame: the deviation is the displacement `T(x) - x`.
    pub fn identity(n: usize) -> Self {
        Self { a: DMatrix::identity(n, n), b: vec![0.0; n] }
    }

    /// Zero frame: the deviation is `T(x)` itself.
    pub fn zero(n: usize) -> Self {
        Self { a: DMatrix::zeros(n, n), b: vec![0.0; n] }
    }

    /// Largest singular value of `A`.
    pub fn operator_norm(&self) -> f64 {
        self.a.clone().svd(false, false).singular_values.max()
    }

    /// `u(x) = T(x) - A x - b` at one node.
    pub fn deviation(&self, x: &[f64], tx: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                tx[i] - self.b[i] - (0..x.len()).map(|j| self.a[(i, j)] * x[j]).sum::<f64>()
            })
            .collect()
    }
}

/// The ball `B_R(x0)` with its inner fraction `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub inner_fraction: f64,
}

impl BallSpec {
    pub fn new(center: Vec<f64>, radius: f64, inner_fraction: f64) -> Result<Self> {
        crate::error::ensure_finite(&center, "ball center")?;
        if !(radius > 0.0) {
            return Err(Error::Input("ball radius must be positive".into()));
        }
        if !(inner_fraction > 0.0 && inner_fraction < 1.0) {
            return Err(Error::Input("inner fraction must lie in (0, 1)".into()));
        }
        Ok(Self { center, radius, inner_fraction })
    }

    fn check_inside(&self, map: &SampledMap) -> Result<()> {
        let g = map.grid();
        for k in 0..g.dimension() {
            if self.center[k] - self.radius < g.box_min[k] - 1e-12
                || self.center[k] + self.radius > g.box_max[k] + 1e-12
            {
                return Err(Error::Input("ball extends outside the sampled domain".into()));
            }
        }
        Ok(())
    }
}

/// Which side of the data-size threshold the estimate is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Small,
    Large,
}

/// Every quantity of the sup-norm estimate, next to the empirical supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    /// `Delta = int_{B_R} |u|^{p-1} dx`.
    pub delta: f64,
    /// Data-size threshold separating the branches.
    pub delta0: f64,
    /// Minimizer of the radius profile.
    pub r_star: f64,
    /// `(avg |u|^{p-1})^{1/(p-1)}`, the branch-selection quantity.
    pub avg_root: f64,
    pub branch: Branch,
    /// Right-hand side of the two-branch estimate.
    pub bound: f64,
    /// `max |u|` over grid nodes in the inner ball.
    pub empirical_sup: f64,
    pub calibration_c: f64,
}

/// Riemann sum of `Delta = int_{B_R(x0)} |u(x)|^{p-1} dx` over grid nodes.
pub fn delta_integral(
    map: &SampledMap,
    frame: &AffineFrame,
    ball: &BallSpec,
    p: f64,
) -> Result<f64> {
    ball.check_inside(map)?;
    let nodes = map.nodes_in_ball(&ball.center, ball.radius);
    if nodes.len() < 8 {
        return Err(Error::Resolution(format!(
            "only {} grid nodes inside the ball; need at least 8",
            nodes.len()
        )));
    }
    let cell = map.grid().cell_volume();
    Ok(nodes
        .iter()
        .map(|&i| {
            let u = frame.deviation(&map.node(i), map.value(i));
            norm(&u).powf(p - 1.0)
        })
        .sum::<f64>()
        * cell)
}

/// Radius profile `H(r) = C (Delta r^{-n} + r^{p-1})`.
pub fn h_profile(delta: f64, r: f64, c: f64, n: usize, p: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain("profile radius must be positive".into()));
    }
    Ok(c * (delta * r.powf(-(n as f64)) + r.powf(p - 1.0)))
}

/// Minimizer of the radius profile: `(n Delta / (p-1))^{1/(n+p-1)}`.
pub fn r_star(delta: f64, n: usize, p: f64) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    (n as f64 * delta / (p - 1.0)).powf(1.0 / (n as f64 + p - 1.0))
}

/// Data-size threshold `Delta_0 = ((1-beta) R / 2)^{n+p-1} (p-1)/n`.
pub fn delta_threshold(radius: f64, beta: f64, n: usize, p: f64) -> f64 {
    ((1.0 - beta) * radius / 2.0).powf(n as f64 + p - 1.0) * (p - 1.0) / n as f64
}

fn small_branch_constant(n: usize, p: f64) -> f64 {
    let nf = n as f64;
    let base = nf / (p - 1.0);
    base.powf(-nf / (nf + p - 1.0)) + base.powf((p - 1.0) / (nf + p - 1.0))
}

fn large_branch_constant(n: usize, p: f64, beta: f64) -> f64 {
    (p + n as f64 - 1.0) / (p - 1.0) * ((1.0 - beta) / 2.0).powf(-(n as f64))
}

/// Computes the two-branch sup bound for `u = T - Ax - b` over the inner
/// ball and reports it next to the empirical supremum.
///
/// The exponents and the branch threshold are explicit; the absolute
/// constant is `calibration_c` (see [`fit_calibration`]).
pub fn linfty_bound(
    map: &SampledMap,
    frame: &AffineFrame,
    ball: &BallSpec,
    p: f64,
    calibration_c: f64,
) -> Result<EstimateReport> {
    if !(calibration_c > 0.0) {
        return Err(Error::Input("calibration constant must be positive".into()));
    }
    let n = map.dimension();
    let nf = n as f64;
    let delta = delta_integral(map, frame, ball, p)?;
    let radius = ball.radius;
    let beta = ball.inner_fraction;
    let delta0 = delta_threshold(radius, beta, n, p);
    let rs = r_star(delta, n, p);
    let avg = delta / (unit_ball_volume(n) * radius.powf(nf));
    let avg_root = avg.powf(1.0 / (p - 1.0));
    let branch = if delta <= delta0 { Branch::Small } else { Branch::Large };
    let bound = match branch {
        Branch::Small => (calibration_c
            * small_branch_constant(n, p)
            * delta.powf((p - 1.0) / (nf + p - 1.0)))
        .powf(1.0 / (p - 1.0)),
        Branch::Large => {
            (calibration_c * large_branch_constant(n, p, beta) * radius.powf(-nf) * delta)
                .powf(1.0 / (p - 1.0))
        }
    };
    let inner = map.nodes_in_ball(&ball.center, beta * radius);
    let empirical_sup = inner
        .iter()
        .map(|&i| norm(&frame.deviation(&map.node(i), map.value(i))))
        .fold(0.0f64, f64::max);
    Ok(EstimateReport {
        delta,
        delta0,
        r_star: rs,
        avg_root,
        branch,
        bound,
        empirical_sup,
        calibration_c,
    })
}

/// Smallest calibration constant making the bound hold on every training
/// pair; fitted once, then asserted on held-out maps.
pub fn fit_calibration(
    training: &[(&SampledMap, &AffineFrame)],
    ball: &BallSpec,
    p: f64,
) -> Result<f64> {
    if training.is_empty() {
        return Err(Error::Input("calibration needs at least one training map".into()));
    }
    let mut c = 0.0f64;
    for (map, frame) in training {
        let report = linfty_bound(map, frame, ball, p, 1.0)?;
        if report.bound > 0.0 {
            // bound scales as calibration_c^{1/(p-1)}.
            c = c.max((report.empirical_sup / report.bound).powf(p - 1.0));
        } else if report.empirical_sup > 0.0 {
            return Err(Error::Inconsistency(
                "zero bound with nonzero empirical supremum".into(),
            ));
        }
    }
    Ok(c.max(f64::MIN_POSITIVE))
}

/// Log-log slope of the bound against `(avg |u|^{p-1})^{1/(p-1)}` across a
/// map family; all members must land in the same branch.
pub fn scaling_exponent_probe(
    family: &[SampledMap],
    frame: &AffineFrame,
    ball: &BallSpec,
    p: f64,
) -> Result<f64> {
    if family.len() < 4 {
        return Err(Error::ProbeInvalid("need at least 4 family members".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut branch = None;
    for map in family {
        let report = linfty_bound(map, frame, ball, p, 1.0)?;
        match branch {
            None => branch = Some(report.branch),
            Some(b) if b != report.branch => {
                return Err(Error::ProbeInvalid(format!(
                    "family mixes branches: {b:?} and {:?}",
                    report.branch
                )));
            }
            _ => {}
        }
        if report.avg_root <= 0.0 || report.bound <= 0.0 {
            return Err(Error::ProbeInvalid("degenerate family member".into()));
        }
        xs.push(report.avg_root.ln());
        ys.push(report.bound.ln());
    }
    let span = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    if span < 10.0f64.ln() * 0.99 {
        return Err(Error::ProbeInvalid("family must span at least one decade".into()));
    }
    Ok(least_squares_slope(&xs, &ys))
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    sxy / sxx
}

/// Verifies the pointwise lower bound on the telescoped difference at one
/// node: `G(y - Ay - b + r w, y - Ay - b, u(y)) >= delta lambda C_p |u(y)|^2
/// g(y)^{p-2}` with `g(y) = max(|y - Ay - b|, |u(y)|)`, `r = delta |u(y)|`,
/// `w = u(y)/|u(y)|`.
///
/// Returns `None` when `u(y) = 0` (the inequality is vacuous there).
pub fn g_lower_bound_check(
    cost: &CostFunction,
    map: &SampledMap,
    frame: &AffineFrame,
    node: usize,
    delta: f64,
    quad: &QuadratureSpec,
) -> Result<Option<(f64, f64)>> {
    let p = cost.exponent();
    let (c_p, delta0) = j_lower_constant(p);
    if !(delta > 0.0 && delta <= delta0) {
        return Err(Error::Input(format!(
            "delta must lie in (0, {delta0}] for p={p}"
        )));
    }
    let y = map.node(node);
    let ty = map.value(node);
    let u = frame.deviation(&y, ty);
    let un = norm(&u);
    if un == 0.0 {
        return Ok(None);
    }
    // z2 = y - Ay - b is the frame deviation of the identity values.
    let z2 = frame.deviation(&y, &y);
    let r = delta * un;
    let z1: Vec<f64> = z2.iter().zip(&u).map(|(z, ui)| z + r * ui / un).collect();
    let (lhs, _) = g_eval(cost, &z1, &z2, &u, quad)?;
    let g = norm(&z2).max(un);
    let lambda = cost.ellipticity_bounds(256)?.lambda;
    let rhs = delta * lambda * c_p * un * un * crate::cost::pow_conv(g, p - 2.0);
    Ok(Some((lhs, rhs)))
}

type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A twice-differentiable test function with its analytic Laplacian.
#[derive(Clone)]
pub struct TestFunction {
    pub value: PointFn,
    pub laplacian: PointFn,
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        Self { value: Arc::new(move |_| c), laplacian: Arc::new(|_| 0.0) }
    }

    /// `v(x) = <a, x> + c`, harmonic.
    pub fn linear(a: Vec<f64>, c: f64) -> Self {
        let a2 = a.clone();
        Self {
            value: Arc::new(move |x| {
                x.iter().zip(&a2).map(|(xi, ai)| xi * ai).sum::<f64>() + c
            }),
            laplacian: Arc::new(|_| 0.0),
        }
    }

    /// `v(x) = |x - y0|^2`, with Laplacian `2n`.
    pub fn squared_distance(y0: Vec<f64>) -> Self {
        let n = y0.len();
        let y2 = y0.clone();
        Self {
            value: Arc::new(move |x| {
                x.iter().zip(&y2).map(|(xi, yi)| (xi - yi) * (xi - yi)).sum()
            }),
            laplacian: Arc::new(move |_| 2.0 * n as f64),
        }
    }

    /// `v(x) = exp(k x_1)`, smooth and non-harmonic.
    pub fn exponential(k: f64) -> Self {
        Self {
            value: Arc::new(move |x| (k * x[0]).exp()),
            laplacian: Arc::new(move |x| k * k * (k * x[0]).exp()),
        }
    }
}

/// Resolution knobs for the Green identity quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenResolution {
    pub radial_nodes: usize,
    pub angular_resolution: usize,
}

impl Default for GreenResolution {
    fn default() -> Self {
        Self { radial_nodes: 8, angular_resolution: 8 }
    }
}

impl GreenResolution {
    pub fn refined(&self) -> Self {
        Self {
            radial_nodes: 2 * self.radial_nodes,
            angular_resolution: 2 * self.angular_resolution,
        }
    }
}

/// Residual of the Green representation
/// `v(y) = avg_{B_r(y)} v + (n/r^n) int_0^r rho^{n-1}
/// int_{B_rho(y)} (Gamma(x-y) - Gamma(rho)) lap v dx drho`,
/// with the weakly singular kernel absorbed into the bounded polar weight
/// `s^{n-1} Gamma(s) = s / (n omega_n (2-n))`.
pub fn green_identity_residual(
    v: &TestFunction,
    y: &[f64],
    r: f64,
    n: usize,
    res: GreenResolution,
) -> Result<f64> {
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    if y.len() != n {
        return Err(Error::Input("center dimension mismatch".into()));
    }
    if !(r > 0.0) {
        return Err(Error::Input("ball radius must be positive".into()));
    }
    let nf = n as f64;
    let omega = unit_ball_volume(n);

    let ball = BallQuadrature::polar(y, r, res.radial_nodes, res.angular_resolution);
    let avg = ball.integrate(|x| (v.value)(x)) / ball.volume();

    let sphere = SphereRule::new(n, res.angular_resolution);
    let rho_rule = GaussLegendre::new(res.radial_nodes);
    let s_rule = GaussLegendre::new(res.radial_nodes);
    // Angular integrals of lap v: S(s) = int_{S^{n-1}} lap v(y + s theta);
    // the surface measure is carried by the sphere rule itself.
    let sphere_integral = |s: f64| -> f64 {
        sphere.integrate(|theta| {
            let x: Vec<f64> = y.iter().zip(theta).map(|(c, t)| c + s * t).collect();
            (v.laplacian)(&x)
        })
    };
    let correction = (nf / r.powf(nf))
        * rho_rule.integrate(0.0, r, |rho| {
            let gamma_rho = rho.powf(2.0 - nf) / (nf * omega * (2.0 - nf));
            let inner = s_rule.integrate(0.0, rho, |s| {
                // s^{n-1} (Gamma(s) - Gamma(rho)): bounded, the s^{n-1}
                // polar factor cancels the kernel singularity at s = 0.
                let weight = s / (nf * omega * (2.0 - nf)) - s.powf(nf - 1.0) * gamma_rho;
                weight * sphere_integral(s)
            });
            rho.powf(nf - 1.0) * inner
        });
    Ok(((v.value)(y) - avg - correction).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::GridSpec;
    use approx::assert_relative_eq;

    fn identity_map(n: usize, lo: f64, hi: f64, m: usize) -> SampledMap {
        SampledMap::from_fn(GridSpec::cube(n, lo, hi, m).unwrap(), |x| x.to_vec()).unwrap()
    }

    #[test]
    fn delta_integral_examples() {
        let ball = BallSpec::new(vec![0.0, 0.0], 1.0, 0.5).unwrap();

        // u == 0: T(x) = x with the identity frame.
        let map = identity_map(2, -2.0, 2.0, 33);
        let d = delta_integral(&map, &AffineFrame::identity(2), &ball, 2.0).unwrap();
        assert_eq!(d, 0.0);

        // u == c: T(x) = x + c; Delta = |c| * pi R^2 for p=2.
        let c = [0.3, -0.4];
        let shifted = SampledMap::from_fn(GridSpec::cube(2, -2.0, 2.0, 161).unwrap(), |x| {
            vec![x[0] + c[0], x[1] + c[1]]
        })
        .unwrap();
        let d = delta_integral(&shifted, &AffineFrame::identity(2), &ball, 2.0).unwrap();
        let want = 0.5 * std::f64::consts::PI;
        assert!((d - want).abs() <= 0.02 * want, "d={d} want={want}");

        // T identity with the zero frame: Delta = int |x| dx = 2 pi / 3.
        let map = identity_map(2, -2.0, 2.0, 129);
        let d = delta_integral(&map, &AffineFrame::zero(2), &ball, 2.0).unwrap();
        let want = 2.0 * std::f64::consts::PI / 3.0;
        assert!((d - want).abs() <= 0.02 * want, "d={d} want={want}");
    }

    #[test]
    fn delta_integral_rejects_bad_balls() {
        let map = identity_map(2, -1.0, 1.0, 9);
        let outside = BallSpec::new(vec![0.9, 0.0], 0.5, 0.5).unwrap();
        assert!(delta_integral(&map, &AffineFrame::identity(2), &outside, 2.0).is_err());
        let coarse = identity_map(2, -1.0, 1.0, 4);
        let tiny = BallSpec::new(vec![0.0, 0.0], 0.3, 0.5).unwrap();
        assert!(matches!(
            delta_integral(&coarse, &AffineFrame::identity(2), &tiny, 2.0),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn profile_and_minimizer_examples() {
        assert_relative_eq!(h_profile(0.0, 2.0, 1.5, 3, 2.0).unwrap(), 3.0);
        assert_relative_eq!(h_profile(1.0 / 3.0, 1.0, 1.0, 3, 2.0).unwrap(), 4.0 / 3.0);
        assert!(h_profile(1.0, 0.0, 1.0, 3, 2.0).is_err());

        assert_relative_eq!(r_star(1.0 / 3.0, 3, 2.0), 1.0);
        assert_eq!(r_star(0.0, 3, 2.0), 0.0);
        assert_relative_eq!(r_star(1.0, 2, 3.0), 1.0);

        // Local minimality.
        for &(delta, n, p) in &[(0.7, 2usize, 2.0), (2.0, 3, 3.0), (0.01, 2, 4.0)] {
            let r0 = r_star(delta, n, p);
            let h0 = h_profile(delta, r0, 1.0, n, p).unwrap();
            let eps = 1e-4 * r0;
            assert!(h_profile(delta, r0 - eps, 1.0, n, p).unwrap() > h0);
            assert!(h_profile(delta, r0 + eps, 1.0, n, p).unwrap() > h0);
            // Global over a 100-point log grid around r0.
            for k in 0..100 {
                let r = r0 * 10f64.powf(-1.0 + 2.0 * k as f64 / 99.0);
                assert!(h_profile(delta, r, 1.0, n, p).unwrap() >= h0 - 1e-12);
            }
        }
    }

    #[test]
    fn threshold_examples() {
        assert_relative_eq!(delta_threshold(2.0, 0.5, 2, 2.0), 1.0 / 16.0);
        assert_relative_eq!(delta_threshold(4.0, 0.5, 3, 2.0), 1.0 / 3.0);
        assert!(delta_threshold(1.0, 1.0 - 1e-12, 2, 2.0) < 1e-30);
    }

    #[test]
    fn branch_selection_matches_radius_comparison() {
        // Small branch iff r_star <= (1-beta) R / 2.
        let (n, p, radius, beta) = (2usize, 3.0, 1.0, 0.5);
        let d0 = delta_threshold(radius, beta, n, p);
        for &scale in &[0.1, 0.9, 1.1, 10.0] {
            let delta = d0 * scale;
            let small = delta <= d0;
            let rs = r_star(delta, n, p);
            assert_eq!(small, rs <= (1.0 - beta) * radius / 2.0 + 1e-12, "scale={scale}");
        }
    }

    #[test]
    fn zero_deviation_gives_zero_bound() {
        let map = identity_map(2, -2.0, 2.0, 33);
        let ball = BallSpec::new(vec![0.0, 0.0], 1.0, 0.5).unwrap();
        let r = linfty_bound(&map, &AffineFrame::identity(2), &ball, 2.0, 1.0).unwrap();
        assert_eq!(r.delta, 0.0);
        assert_eq!(r.bound, 0.0);
        assert_eq!(r.empirical_sup, 0.0);
        assert_eq!(r.r_star, 0.0);
    }

    #[test]
    fn bound_is_monotone_in_scaling() {
        let ball = BallSpec::new(vec![0.0, 0.0], 1.0, 0.5).unwrap();
        let mut last = 0.0;
        for k in 1..=8 {
            let eps = k as f64 * 0.05;
            let map = SampledMap::from_fn(GridSpec::cube(2, -2.0, 2.0, 65).unwrap(), |x| {
                vec![x[0] + eps * (x[0] * 1.2).sin(), x[1] + eps * (x[1] - 0.3).cos()]
            })
            .unwrap();
            let r = linfty_bound(&map, &AffineFrame::identity(2), &ball, 2.0, 1.0).unwrap();
            assert!(r.bound >= last, "bound decreased at eps={eps}");
            last = r.bound;
        }
    }

    #[test]
    fn scaling_probe_recovers_small_branch_exponent() {
        for &(n, p) in &[(2usize, 2.0f64), (2, 3.0), (3, 2.0)] {
            let ball = BallSpec::new(vec![0.0; n], 1.0, 0.5).unwrap();
            let m = if n == 2 { 65 } else { 17 };
            let family: Vec<SampledMap> = (0..5)
                .map(|k| {
                    let eps = 1e-5 * 10f64.powf(k as f64 / 3.5);
                    SampledMap::from_fn(GridSpec::cube(n, -2.0, 2.0, m).unwrap(), |x| {
                        x.iter().map(|xi| xi + eps * (xi * 0.7).sin()).collect()
                    })
                    .unwrap()
                })
                .collect();
            let slope =
                scaling_exponent_probe(&family, &AffineFrame::identity(n), &ball, p).unwrap();
            let want = (p - 1.0) / (n as f64 + p - 1.0);
            assert!((slope - want).abs() <= 0.1 * want, "n={n} p={p}: {slope} vs {want}");
        }
    }

    #[test]
    fn scaling_probe_recovers_large_branch_exponent() {
        let ball = BallSpec::new(vec![0.0, 0.0], 1.0, 0.5).unwrap();
        let family: Vec<SampledMap> = (0..5)
            .map(|k| {
                let eps = 10f64.powf(k as f64 / 3.5);
                SampledMap::from_fn(GridSpec::cube(2, -2.0, 2.0, 65).unwrap(), |x| {
                    x.iter().map(|xi| xi + eps * (1.0 + 0.2 * xi)).collect()
                })
                .unwrap()
            })
            .collect();
        let slope =
            scaling_exponent_probe(&family, &AffineFrame::identity(2), &ball, 2.0).unwrap();
        assert!((slope - 1.0).abs() <= 0.05, "slope={slope}");
    }

    #[test]
    fn scaling_probe_rejects_branch_mixing() {
        let ball = BallSpec::new(vec![0.0, 0.0], 1.0, 0.5).unwrap();
        let family: Vec<SampledMap> = (0..4)
            .map(|k| {
                let eps = 10f64.powf(k as f64 - 4.0); // crosses the threshold
                SampledMap::from_fn(GridSpec::cube(2, -2.0, 2.0, 65).unwrap(), |x| {
                    x.iter().map(|xi| xi + eps).collect()
                })
                .unwrap()
            })
            .collect();
        assert!(matches!(
            scaling_exponent_probe(&family, &AffineFrame::identity(2), &ball, 2.0),
            Err(Error::ProbeInvalid(_))
        ));
    }

    #[test]
    fn calibrated_bound_dominates_on_training_maps() {
        let ball = BallSpec::new(vec![0.0, 0.0], 1.0, 0.5).unwrap();
        let maps: Vec<SampledMap> = (1..=3)
            .map(|k| {
                let eps = 0.1 * k as f64;
                SampledMap::from_fn(GridSpec::cube(2, -2.0, 2.0, 65).unwrap(), |x| {
                    vec![x[0] + eps * (x[0]).sin(), x[1] + eps * (0.5 * x[1]).cos()]
                })
                .unwrap()
            })
            .collect();
        let frame = AffineFrame::identity(2);
        let training: Vec<(&SampledMap, &AffineFrame)> =
            maps.iter().map(|m| (m, &frame)).collect();
        let c = fit_calibration(&training, &ball, 2.0).unwrap();
        for map in &maps {
            let r = linfty_bound(map, &frame, &ball, 2.0, c).unwrap();
            assert!(
                r.empirical_sup <= r.bound * (1.0 + 1e-9),
                "sup={} bound={}",
                r.empirical_sup,
                r.bound
            );
        }
    }

    #[test]
    fn g_lower_bound_examples() {
        let quad = QuadratureSpec::default();
        // Quadratic cost, constant displacement.
        let cost = CostFunction::isotropic(2, 2.0).unwrap();
        let map = SampledMap::from_fn(GridSpec::cube(2, -1.0, 1.0, 9).unwrap(), |x| {
            vec![x[0] + 0.4, x[1] - 0.2]
        })
        .unwrap();
        let frame = AffineFrame::identity(2);
        let (_, delta0) = j_lower_constant(2.0);
        for node in [0usize, 12, 40, 80] {
            let (lhs, rhs) =
                g_lower_bound_check(&cost, &map, &frame, node, delta0 / 2.0, &quad)
                    .unwrap()
                    .unwrap();
            assert!(lhs >= rhs - 1e-10 * (1.0 + rhs.abs()), "node={node}: {lhs} < {rhs}");
        }
        // Vanishing deviation is skipped.
        let idmap = identity_map(2, -1.0, 1.0, 5);
        assert!(g_lower_bound_check(&cost, &idmap, &frame, 0, delta0 / 2.0, &quad)
            .unwrap()
            .is_none());
    }

    #[test]
    fn g_lower_bound_property_run() {
        use rand::{Rng, SeedableRng};
        let quad = QuadratureSpec::default();
        let frame = AffineFrame::identity(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for &p in &[2.0f64, 3.0] {
            let cost = CostFunction::isotropic(2, p).unwrap();
            let (_, delta0) = j_lower_constant(p);
            let map = SampledMap::from_fn(GridSpec::cube(2, -1.0, 1.0, 11).unwrap(), |x| {
                vec![x[0] + 0.3 * (x[0] + 0.2).sin(), x[1] + 0.25 * (x[1]).cos()]
            })
            .unwrap();
            for _ in 0..50 {
                let node = rng.gen_range(0..map.node_count());
                if let Some((lhs, rhs)) =
                    g_lower_bound_check(&cost, &map, &frame, node, delta0 / 2.0, &quad).unwrap()
                {
                    assert!(lhs >= rhs - 1e-9 * (1.0 + rhs.abs()), "p={p} node={node}");
                }
            }
        }
    }

    #[test]
    fn green_identity_exact_cases() {
        let y = [0.1, -0.2, 0.3];
        let res = GreenResolution::default();
        let r1 = green_identity_residual(&TestFunction::constant(4.2), &y, 1.0, 3, res).unwrap();
        assert!(r1 <= 1e-12, "constant residual {r1}");
        let lin = TestFunction::linear(vec![1.0, -2.0, 0.5], 0.7);
        let r2 = green_identity_residual(&lin, &y, 1.0, 3, res).unwrap();
        assert!(r2 <= 1e-9, "linear residual {r2}");
    }

    #[test]
    fn green_identity_squared_distance() {
        let y = [0.1, -0.2, 0.3];
        let res = GreenResolution::default();
        for &r in &[0.5f64, 1.0] {
            let v = TestFunction::squared_distance(y.to_vec());
            let resid = green_identity_residual(&v, &y, r, 3, res).unwrap();
            assert!(resid <= 1e-3 * r * r, "r={r} residual {resid}");
        }
    }

    #[test]
    fn green_identity_refinement_converges() {
        let y = [0.0, 0.0, 0.0];
        let coarse = GreenResolution { radial_nodes: 3, angular_resolution: 3 };
        let v = TestFunction::exponential(1.0);
        let r0 = green_identity_residual(&v, &y, 1.0, 3, coarse).unwrap();
        let r1 = green_identity_residual(&v, &y, 1.0, 3, coarse.refined()).unwrap();
        assert!(r0 >= 2.5 * r1, "r0={r0} r1={r1}");
        assert!(matches!(
            green_identity_residual(&v, &[0.0, 0.0], 1.0, 2, coarse),
            Err(Error::UnsupportedDimension(2))
        ));
    }
}
