//! Certified monotone-map generators: exact discrete optimal transport under
//! the cost `h(x - y)` (shortest-augmenting-path assignment solver), analytic
//! generators, and deliberate non-monotone negatives for testing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::map::{GridSpec, SampledMap};
use crate::monotone::check_map_monotone;

/// Largest assignment instance accepted by the exact solver.
pub const MAX_ASSIGNMENT: usize = 4096;

/// A globally optimal source-to-target pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub sources: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    /// `permutation[i]` is the target index paired with source `i`.
    pub permutation: Vec<usize>,
    pub total_cost: f64,
}

impl Assignment {
    /// Target point assigned to source `i`.
    pub fn target_of(&self, i: usize) -> &[f64] {
        &self.targets[self.permutation[i]]
    }

    /// Most negative pair defect over all index pairs (2-cycle optimality
    /// check); nonnegative up to rounding for an optimal assignment.
    pub fn worst_two_cycle_defect(&self, cost: &CostFunction) -> f64 {
        let n = self.sources.len();
        let mut worst = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = crate::monotone::pair_defect(
                    cost,
                    &self.sources[i],
                    &self.sources[j],
                    self.target_of(i),
                    self.target_of(j),
                );
                worst = worst.min(d);
            }
        }
        worst
    }
}

/// Solves the square assignment problem with costs `C_ij = h(x_i - y_j)`
/// exactly (Jonker-Volgenant: column reduction, reduction transfer, then a
/// shortest augmenting path per remaining free row).
pub fn solve_discrete_ot(
    cost: &CostFunction,
    sources: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<Assignment> {
    let n = sources.len();
    if n == 0 || targets.len() != n {
        return Err(Error::Input(format!(
            "need equal nonempty point lists, got {} sources and {} targets",
            n,
            targets.len()
        )));
    }
    if n > MAX_ASSIGNMENT {
        return Err(Error::Input(format!(
            "assignment size {n} exceeds the exact-solver cap {MAX_ASSIGNMENT}"
        )));
    }
    for p in sources.iter().chain(targets) {
        if p.len() != cost.dimension() {
            return Err(Error::Input("point dimension does not match the cost".into()));
        }
        crate::error::ensure_finite(p, "assignment points")?;
    }
    let mut c = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            c[i * n + j] = cost.eval_diff(&sources[i], &targets[j]);
        }
    }
    let rowsol = lapjv(n, &c);
    let total_cost = (0..n).map(|i| c[i * n + rowsol[i]]).sum();
    Ok(Assignment {
        sources: sources.to_vec(),
        targets: targets.to_vec(),
        permutation: rowsol,
        total_cost,
    })
}

const UNASSIGNED: usize = usize::MAX;

fn lapjv(n: usize, c: &[f64]) -> Vec<usize> {
    let at = |i: usize, j: usize| c[i * n + j];
    let mut rowsol = vec![UNASSIGNED; n];
    let mut colsol = vec![UNASSIGNED; n];
    let mut v = vec![0.0f64; n];

    // Column reduction: price each column at its cheapest row; a row keeps
    // the first column that claims it.
    let mut matches = vec![0usize; n];
    for j in (0..n).rev() {
        let mut imin = 0;
        for i in 1..n {
            if at(i, j) < at(imin, j) {
                imin = i;
            }
        }
        v[j] = at(imin, j);
        matches[imin] += 1;
        if matches[imin] == 1 {
            rowsol[imin] = j;
            colsol[j] = imin;
        }
    }

    // Reduction transfer for uniquely matched rows, free list for the rest.
    let mut free_rows = Vec::new();
    for i in 0..n {
        if matches[i] == 0 {
            free_rows.push(i);
        } else if matches[i] == 1 && n > 1 {
            let j1 = rowsol[i];
            let mut min = f64::INFINITY;
            for j in 0..n {
                if j != j1 {
                    min = min.min(at(i, j) - v[j]);
                }
            }
            v[j1] -= min;
        }
    }

    // Shortest augmenting path (dense Dijkstra with dual prices) per free row.
    let mut d = vec![0.0f64; n];
    let mut pred = vec![0usize; n];
    let mut collist: Vec<usize> = (0..n).collect();
    for &free_row in &free_rows {
        for j in 0..n {
            d[j] = at(free_row, j) - v[j];
            pred[j] = free_row;
            collist[j] = j;
        }
        let mut low = 0usize; // columns with final distance, below `low`
        let mut up = 0usize; // [low, up): candidates at the current minimum
        let mut last = 0usize;
        let mut min = 0.0f64;
        let endofpath;
        'dijkstra: loop {
            if up == low {
                last = low;
                min = d[collist[up]];
                up += 1;
                for k in up..n {
                    let j = collist[k];
                    let h = d[j];
                    if h <= min {
                        if h < min {
                            up = low;
                            min = h;
                        }
                        collist[k] = collist[up];
                        collist[up] = j;
                        up += 1;
                    }
                }
                for k in low..up {
                    if colsol[collist[k]] == UNASSIGNED {
                        endofpath = collist[k];
                        break 'dijkstra;
                    }
                }
            }
            let j1 = collist[low];
            low += 1;
            let i = colsol[j1];
            let h = at(i, j1) - v[j1] - min;
            for k in up..n {
                let j = collist[k];
                let v2 = at(i, j) - v[j] - h;
                if v2 < d[j] {
                    pred[j] = i;
                    if v2 == min {
                        if colsol[j] == UNASSIGNED {
                            endofpath = j;
                            break 'dijkstra;
                        }
                        collist[k] = collist[up];
                        collist[up] = j;
                        up += 1;
                    }
                    d[j] = v2;
                }
            }
        }
        // Update prices of columns whose distance became final.
        for &j in collist.iter().take(last) {
            v[j] += d[j] - min;
        }
        // Walk the alternating path back to the free row.
        let mut j = endofpath;
        loop {
            let i = pred[j];
            colsol[j] = i;
            std::mem::swap(&mut rowsol[i], &mut j);
            if i == free_row {
                break;
            }
        }
    }
    rowsol
}

/// Named density presets for grid sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform,
    Gaussian { center: Vec<f64>, sigma: f64 },
    /// Two Gaussian bumps at fixed relative positions in the box.
    TwoBump,
}

impl DensitySpec {
    fn weight(&self, x: &[f64], grid: &GridSpec) -> f64 {
        match self {
            DensitySpec::Uniform => 1.0,
            DensitySpec::Gaussian { center, sigma } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            DensitySpec::TwoBump => {
                let n = grid.dimension();
                let rel = |frac: f64| -> Vec<f64> {
                    (0..n)
                        .map(|k| grid.box_min[k] + frac * (grid.box_max[k] - grid.box_min[k]))
                        .collect()
                };
                let extent: f64 = (0..n)
                    .map(|k| grid.box_max[k] - grid.box_min[k])
                    .fold(f64::INFINITY, f64::min);
                let sigma = 0.15 * extent;
                let g = |c: &[f64]| -> f64 {
                    let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-d2 / (2.0 * sigma * sigma)).exp()
                };
                g(&rel(0.3)) + g(&rel(0.7))
            }
        }
    }
}

/// Analytic and transport-based generators of certified monotone maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    Identity,
    Translation { shift: Vec<f64> },
    Scaling { factor: f64 },
    /// Exact optimal transport between a uniform sample of the grid and a
    /// jittered, density-weighted resample of its nodes.
    OtGrid {
        source: DensitySpec,
        target: DensitySpec,
        seed: u64,
        /// Jitter amplitude as a fraction of the grid spacing.
        jitter: f64,
    },
}

impl GeneratorKind {
    /// OT generator with the default jitter (quarter of the grid spacing).
    pub fn ot_grid(target: DensitySpec, seed: u64) -> Self {
        GeneratorKind::OtGrid { source: DensitySpec::Uniform, target, seed, jitter: 0.25 }
    }
}

/// Deliberately non-monotone constructions used as negative controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NegativeKind {
    /// `T(x) = -x`.
    Reflection,
    /// An optimal assignment with one cost-increasing transposition applied.
    ShuffledOt { seed: u64 },
}

fn verification_budget(node_count: usize) -> usize {
    let total = node_count * (node_count - 1) / 2;
    total.min(50_000)
}

/// Builds the requested map and verifies it is monotone for `cost`;
/// a generator whose output fails verification is rejected.
pub fn make_generator_map(
    kind: &GeneratorKind,
    cost: &CostFunction,
    grid: &GridSpec,
) -> Result<SampledMap> {
    if grid.dimension() != cost.dimension() {
        return Err(Error::Input("grid dimension does not match the cost".into()));
    }
    let map = match kind {
        GeneratorKind::Identity => SampledMap::from_fn(grid.clone(), |x| x.to_vec())?,
        GeneratorKind::Translation { shift } => {
            if shift.len() != grid.dimension() {
                return Err(Error::Input("translation shift has wrong dimension".into()));
            }
            SampledMap::from_fn(grid.clone(), |x| {
                x.iter().zip(shift).map(|(a, b)| a + b).collect()
            })?
        }
        GeneratorKind::Scaling { factor } => {
            if !(*factor >= 0.0) {
                return Err(Error::Input("scaling factor must be >= 0".into()));
            }
            SampledMap::from_fn(grid.clone(), |x| x.iter().map(|v| factor * v).collect())?
        }
        GeneratorKind::OtGrid { source, target, seed, jitter } => {
            ot_grid_map(cost, grid, source, target, *seed, *jitter)?
        }
    };
    let report = check_map_monotone(cost, &map, verification_budget(map.node_count()), 0x6e6f6e)?;
    if !report.is_monotone() {
        return Err(Error::GeneratorRejected { report });
    }
    Ok(map)
}

fn sample_targets(
    grid: &GridSpec,
    density: &DensitySpec,
    seed: u64,
    jitter: f64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = grid.nodes();
    let mut cumulative = Vec::with_capacity(nodes.len());
    let mut total = 0.0;
    for x in &nodes {
        total += density.weight(x, grid);
        cumulative.push(total);
    }
    let sp = grid.spacing();
    (0..nodes.len())
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..total);
            let idx = cumulative.partition_point(|&c| c <= u).min(nodes.len() - 1);
            nodes[idx]
                .iter()
                .enumerate()
                .map(|(k, &x)| x + rng.gen_range(-1.0..1.0) * jitter * sp[k])
                .collect()
        })
        .collect()
}

fn ot_grid_map(
    cost: &CostFunction,
    grid: &GridSpec,
    source: &DensitySpec,
    target: &DensitySpec,
    seed: u64,
    jitter: f64,
) -> Result<SampledMap> {
    if *source != DensitySpec::Uniform {
        return Err(Error::Input(
            "ot_grid sources are the grid nodes themselves; only a uniform source density \
             is supported"
                .into(),
        ));
    }
    if !(0.0..=0.5).contains(&jitter) {
        return Err(Error::Input("jitter must lie in [0, 0.5]".into()));
    }
    let sources = grid.nodes();
    let targets = sample_targets(grid, target, seed, jitter);
    let assignment = solve_discrete_ot(cost, &sources, &targets)?;
    let values =
        (0..sources.len()).map(|i| assignment.target_of(i).to_vec()).collect();
    SampledMap::new(grid.clone(), values)
}

/// Builds a map designed to violate monotonicity and verifies that it does;
/// a negative control that accidentally passes is a hard error.
pub fn make_negative_map(
    kind: &NegativeKind,
    cost: &CostFunction,
    grid: &GridSpec,
) -> Result<SampledMap> {
    if grid.dimension() != cost.dimension() {
        return Err(Error::Input("grid dimension does not match the cost".into()));
    }
    let map = match kind {
        NegativeKind::Reflection => {
            SampledMap::from_fn(grid.clone(), |x| x.iter().map(|v| -v).collect())?
        }
        NegativeKind::ShuffledOt { seed } => {
            let sources = grid.nodes();
            let targets = sample_targets(grid, &DensitySpec::Uniform, *seed, 0.25);
            let assignment = solve_discrete_ot(cost, &sources, &targets)?;
            let n = sources.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
            let mut perm = assignment.permutation.clone();
            // Swap a pair whose exchange strictly increases the cost: that
            // pair then violates the monotonicity inequality.
            let mut swapped = false;
            for _ in 0..10_000 {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                if i == j {
                    continue;
                }
                let kept = cost.eval_diff(&sources[i], &targets[perm[i]])
                    + cost.eval_diff(&sources[j], &targets[perm[j]]);
                let exchanged = cost.eval_diff(&sources[i], &targets[perm[j]])
                    + cost.eval_diff(&sources[j], &targets[perm[i]]);
                if exchanged > kept + 1e-6 * (1.0 + kept) {
                    perm.swap(i, j);
                    swapped = true;
                    break;
                }
            }
            if !swapped {
                return Err(Error::ControlFailure(
                    "no cost-increasing transposition found for shuffled_ot".into(),
                ));
            }
            let values = (0..n).map(|i| targets[perm[i]].to_vec()).collect();
            SampledMap::new(grid.clone(), values)?
        }
    };
    let report = check_map_monotone(cost, &map, verification_budget(map.node_count()), 0x6e6567)?;
    if report.is_monotone() {
        return Err(Error::ControlFailure(format!(
            "negative control unexpectedly passed monotonicity: {report}"
        )));
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Potentials-based Hungarian algorithm, an independent oracle for the
    /// augmenting-path solver.
    fn hungarian_oracle(n: usize, c: &[f64]) -> f64 {
        let inf = f64::INFINITY;
        let mut u = vec![0.0; n + 1];
        let mut v = vec![0.0; n + 1];
        let mut p = vec![0usize; n + 1];
        let mut way = vec![0usize; n + 1];
        for i in 1..=n {
            p[0] = i;
            let mut j0 = 0usize;
            let mut minv = vec![inf; n + 1];
            let mut used = vec![false; n + 1];
            loop {
                used[j0] = true;
                let i0 = p[j0];
                let mut delta = inf;
                let mut j1 = 0usize;
                for j in 1..=n {
                    if !used[j] {
                        let cur = c[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                        if cur < minv[j] {
                            minv[j] = cur;
                            way[j] = j0;
                        }
                        if minv[j] < delta {
                            delta = minv[j];
                            j1 = j;
                        }
                    }
                }
                for j in 0..=n {
                    if used[j] {
                        u[p[j]] += delta;
                        v[j] -= delta;
                    } else {
                        minv[j] -= delta;
                    }
                }
                j0 = j1;
                if p[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = way[j0];
                p[j0] = p[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }
        (1..=n).map(|j| c[(p[j] - 1) * n + (j - 1)]).sum()
    }

    fn brute_force_min(n: usize, c: &[f64]) -> f64 {
        fn rec(n: usize, c: &[f64], used: &mut [bool], row: usize, acc: f64, best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(n, c, used, row + 1, acc + c[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(n, c, &mut vec![false; n], 0, 0.0, &mut best);
        best
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn two_point_example() {
        let cost = CostFunction::isotropic(2, 2.0).unwrap();
        let sources = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let targets = vec![vec![0.0, 1.0], vec![1.0, 1.0]];
        let a = solve_discrete_ot(&cost, &sources, &targets).unwrap();
        assert_eq!(a.permutation, vec![0, 1]);
        assert_relative_eq!(a.total_cost, 2.0);
    }

    #[test]
    fn single_point_and_identical_sets() {
        let cost = CostFunction::isotropic(2, 3.0).unwrap();
        let one = solve_discrete_ot(&cost, &[vec![0.3, 0.4]], &[vec![1.0, 1.0]]).unwrap();
        assert_eq!(one.permutation, vec![0]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = random_points(&mut rng, 20, 2);
        let a = solve_discrete_ot(&cost, &pts, &pts).unwrap();
        assert_eq!(a.permutation, (0..20).collect::<Vec<_>>());
        assert_relative_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let cost = CostFunction::isotropic(2, 2.0).unwrap();
        assert!(solve_discrete_ot(&cost, &[vec![0.0, 0.0]], &[]).is_err());
        assert!(solve_discrete_ot(&cost, &[vec![0.0]], &[vec![0.0]]).is_err());
    }

    #[test]
    fn matches_brute_force_up_to_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &p in &[2.0, 3.0] {
            for &dim in &[2usize, 3] {
                let cost = CostFunction::isotropic(dim, p).unwrap();
                for n in 2..=8 {
                    let s = random_points(&mut rng, n, dim);
                    let t = random_points(&mut rng, n, dim);
                    let a = solve_discrete_ot(&cost, &s, &t).unwrap();
                    let mut c = vec![0.0; n * n];
                    for i in 0..n {
                        for j in 0..n {
                            c[i * n + j] = cost.eval_diff(&s[i], &t[j]);
                        }
                    }
                    let best = brute_force_min(n, &c);
                    assert!(
                        (a.total_cost - best).abs() <= 1e-12 * (1.0 + best),
                        "n={n} p={p} dim={dim}: {} vs {best}",
                        a.total_cost
                    );
                }
            }
        }
    }

    #[test]
    fn matches_hungarian_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cost = CostFunction::isotropic(2, 2.0).unwrap();
        for &n in &[16usize, 32, 64] {
            for _ in 0..5 {
                let s = random_points(&mut rng, n, 2);
                let t = random_points(&mut rng, n, 2);
                let a = solve_discrete_ot(&cost, &s, &t).unwrap();
                let mut c = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        c[i * n + j] = cost.eval_diff(&s[i], &t[j]);
                    }
                }
                let oracle = hungarian_oracle(n, &c);
                assert!(
                    (a.total_cost - oracle).abs() <= 1e-10 * (1.0 + oracle),
                    "n={n}: {} vs {oracle}",
                    a.total_cost
                );
            }
        }
    }

    #[test]
    fn assignments_are_two_cycle_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for &p in &[2.0, 3.0] {
            let cost = CostFunction::isotropic(2, p).unwrap();
            let s = random_points(&mut rng, 64, 2);
            let t = random_points(&mut rng, 64, 2);
            let a = solve_discrete_ot(&cost, &s, &t).unwrap();
            let worst = a.worst_two_cycle_defect(&cost);
            assert!(worst >= -1e-9, "p={p} worst={worst}");
        }
    }

    #[test]
    fn analytic_generators_are_monotone() {
        let grid = GridSpec::cube(2, 0.0, 1.0, 5).unwrap();
        let c3 = CostFunction::isotropic(2, 3.0).unwrap();
        let c2 = CostFunction::isotropic(2, 2.0).unwrap();
        make_generator_map(&GeneratorKind::Identity, &c3, &grid).unwrap();
        make_generator_map(&GeneratorKind::Translation { shift: vec![5.0, 0.0] }, &c2, &grid)
            .unwrap();
        make_generator_map(&GeneratorKind::Scaling { factor: 0.0 }, &c2, &grid).unwrap();
        assert!(
            make_generator_map(&GeneratorKind::Scaling { factor: -1.0 }, &c2, &grid).is_err()
        );
    }

    #[test]
    fn ot_grid_generator_is_monotone() {
        let grid = GridSpec::cube(2, -1.0, 1.0, 8).unwrap();
        for &p in &[2.0, 3.0] {
            let cost = CostFunction::isotropic(2, p).unwrap();
            let kind = GeneratorKind::ot_grid(
                DensitySpec::Gaussian { center: vec![0.2, -0.1], sigma: 0.5 },
                7,
            );
            let map = make_generator_map(&kind, &cost, &grid).unwrap();
            let report = check_map_monotone(&cost, &map, usize::MAX >> 1, 0).unwrap();
            assert_eq!(report.violations, 0, "p={p}: {report}");
        }
    }

    #[test]
    fn ot_grid_rejects_nonuniform_source() {
        let grid = GridSpec::cube(2, -1.0, 1.0, 4).unwrap();
        let cost = CostFunction::isotropic(2, 2.0).unwrap();
        let kind = GeneratorKind::OtGrid {
            source: DensitySpec::TwoBump,
            target: DensitySpec::Uniform,
            seed: 1,
            jitter: 0.25,
        };
        assert!(make_generator_map(&kind, &cost, &grid).is_err());
    }

    #[test]
    fn negative_controls_violate() {
        let grid = GridSpec::cube(2, -1.0, 1.0, 6).unwrap();
        for &p in &[2.0, 3.0] {
            let cost = CostFunction::isotropic(2, p).unwrap();
            let map = make_negative_map(&NegativeKind::Reflection, &cost, &grid).unwrap();
            let report = check_map_monotone(&cost, &map, usize::MAX >> 1, 0).unwrap();
            assert!(report.violations > 0, "p={p}");
            if p == 2.0 {
                // Defect of a reflected pair is -2|x-y|^2; the worst over the
                // grid is at least as negative as the closest pair allows.
                let min_dist = 2.0 / 5.0;
                assert!(report.worst_defect <= -2.0 * min_dist * min_dist);
            }
        }
        let cost = CostFunction::isotropic(2, 2.0).unwrap();
        let map =
            make_negative_map(&NegativeKind::ShuffledOt { seed: 3 }, &cost, &grid).unwrap();
        let report = check_map_monotone(&cost, &map, usize::MAX >> 1, 0).unwrap();
        assert!(report.violations > 0);
    }
}
