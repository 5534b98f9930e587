//! Maps sampled on a regular tensor grid over an axis-aligned box, with
//! plain-text and JSON serialization.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::quadrature::norm;

/// Regular tensor grid over an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub box_min: Vec<f64>,
    pub box_max: Vec<f64>,
    pub shape: Vec<usize>,
}

impl GridSpec {
    pub fn new(box_min: Vec<f64>, box_max: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let n = box_min.len();
        if n == 0 || box_max.len() != n || shape.len() != n {
            return Err(Error::Input("grid spec dimensions disagree".into()));
        }
        ensure_finite(&box_min, "grid box_min")?;
        ensure_finite(&box_max, "grid box_max")?;
        for k in 0..n {
            if !(box_max[k] > box_min[k]) {
                return Err(Error::Input("grid box must have positive extent".into()));
            }
            if shape[k] < 2 {
                return Err(Error::Input("grid needs at least 2 points per axis".into()));
            }
        }
        Ok(Self { box_min, box_max, shape })
    }

    /// Uniform square/cubic grid on [lo, hi]^n with `m` points per axis.
    pub fn cube(n: usize, lo: f64, hi: f64, m: usize) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n], vec![m; n])
    }

    pub fn dimension(&self) -> usize {
        self.box_min.len()
    }

    pub fn node_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Per-axis spacing between adjacent nodes.
    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dimension())
            .map(|k| (self.box_max[k] - self.box_min[k]) / (self.shape[k] - 1) as f64)
            .collect()
    }

    /// Volume of the cell attached to one node (uniform Riemann weight).
    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    /// Coordinates of the node with flat index `idx` (row-major, last axis
    /// fastest).
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let n = self.dimension();
        let sp = self.spacing();
        let mut rem = idx;
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let i = rem % self.shape[k];
            rem /= self.shape[k];
            x[k] = self.box_min[k] + i as f64 * sp[k];
        }
        x
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.node_count()).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.box_min.iter().zip(&self.box_max))
            .all(|(v, (lo, hi))| *v >= lo - 1e-12 && *v <= hi + 1e-12)
    }

    pub fn diameter(&self) -> f64 {
        let d: Vec<f64> = self
            .box_max
            .iter()
            .zip(&self.box_min)
            .map(|(hi, lo)| hi - lo)
            .collect();
        norm(&d)
    }

    /// Flat index of the grid node nearest to `x`, if `x` is inside the box.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dimension() || !self.contains(x) {
            return None;
        }
        let sp = self.spacing();
        let mut idx = 0usize;
        for k in 0..self.dimension() {
            let i = ((x[k] - self.box_min[k]) / sp[k]).round() as usize;
            idx = idx * self.shape[k] + i.min(self.shape[k] - 1);
        }
        Some(idx)
    }
}

/// A map `T` given by its values at the nodes of a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledMap {
    grid: GridSpec,
    values: Vec<Vec<f64>>,
}

impl SampledMap {
    pub fn new(grid: GridSpec, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Input(format!(
                "expected {} values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        for v in &values {
            if v.len() != grid.dimension() {
                return Err(Error::Input("value dimension mismatch".into()));
            }
            ensure_finite(v, "map values")?;
        }
        Ok(Self { grid, values })
    }

    /// Builds a map by evaluating `f` at every grid node.
    pub fn from_fn<F: FnMut(&[f64]) -> Vec<f64>>(grid: GridSpec, mut f: F) -> Result<Self> {
        let values = (0..grid.node_count()).map(|i| f(&grid.node(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dimension(&self) -> usize {
        self.grid.dimension()
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.grid.node(idx)
    }

    pub fn value(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Value at the grid node nearest to `x`.
    pub fn value_at(&self, x: &[f64]) -> Option<&[f64]> {
        self.grid.nearest_node(x).map(|i| self.value(i))
    }

    /// Flat indices of grid nodes inside the closed ball `B_r(center)`.
    pub fn nodes_in_ball(&self, center: &[f64], radius: f64) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| {
                let x = self.grid.node(i);
                let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                norm(&d) <= radius
            })
            .collect()
    }

    /// Plain-text format: a header line `n shape.. box_min.. box_max..`
    /// followed by one `x.. T(x)..` row per node.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dimension();
        let mut header = vec![n.to_string()];
        header.extend(self.grid.shape.iter().map(|s| s.to_string()));
        header.extend(self.grid.box_min.iter().map(|v| format!("{v:.17e}")));
        header.extend(self.grid.box_max.iter().map(|v| format!("{v:.17e}")));
        writeln!(w, "{}", header.join(" "))?;
        for i in 0..self.node_count() {
            let mut row: Vec<String> =
                self.grid.node(i).iter().map(|v| format!("{v:.17e}")).collect();
            row.extend(self.values[i].iter().map(|v| format!("{v:.17e}")));
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty map file".into()))??;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.is_empty() {
            return Err(Error::Parse("empty map header".into()));
        }
        let n: usize = head[0]
            .parse()
            .map_err(|_| Error::Parse("bad dimension in map header".into()))?;
        if head.len() != 1 + 3 * n {
            return Err(Error::Parse(format!(
                "map header must have {} fields for n={n}, got {}",
                1 + 3 * n,
                head.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {s:?} in map file")))
        };
        let shape: Vec<usize> = head[1..1 + n]
            .iter()
            .map(|s| s.parse::<usize>().map_err(|_| Error::Parse("bad grid shape".into())))
            .collect::<Result<_>>()?;
        let box_min: Vec<f64> =
            head[1 + n..1 + 2 * n].iter().map(|s| parse_f(s)).collect::<Result<_>>()?;
        let box_max: Vec<f64> =
            head[1 + 2 * n..1 + 3 * n].iter().map(|s| parse_f(s)).collect::<Result<_>>()?;
        let grid = GridSpec::new(box_min, box_max, shape)?;
        let mut values = Vec::with_capacity(grid.node_count());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 * n {
                return Err(Error::Parse(format!(
                    "map row must have {} fields, got {}",
                    2 * n,
                    fields.len()
                )));
            }
            // The leading node coordinates are redundant with the grid; keep
            // only the values.
            let v: Vec<f64> = fields[n..].iter().map(|s| parse_f(s)).collect::<Result<_>>()?;
            values.push(v);
        }
        Self::new(grid, values)
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_text(std::io::BufWriter::new(file))
    }

    pub fn load_text(path: &Path) -> Result<Self> {
        Self::read_text(std::fs::File::open(path)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)
            .map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let map: SampledMap = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Parse(e.to_string()))?;
        SampledMap::new(map.grid, map.values)
    }

    /// Loads from either format, deciding by extension (`.json` vs text).
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "json") {
            Self::load_json(path)
        } else {
            Self::load_text(path)
        }
    }
}
