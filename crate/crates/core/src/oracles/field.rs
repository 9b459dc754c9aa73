use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Fd,
    Pielm,
}

/// Named fields sampled on a tensor grid; `values[[j, i]]` sits at
/// `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub names: Vec<String>,
    pub values: Vec<Array2<f64>>,
    pub provenance: Provenance,
}

impl GridField {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let monotone = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]);
        if !monotone(&xs) || !monotone(&ys) {
            return Err(Error::Oracle("grid axes must be strictly increasing with at least two nodes".into()));
        }
        Ok(GridField {
            xs,
            ys,
            names: Vec::new(),
            values: Vec::new(),
            provenance,
        })
    }

    pub fn push(&mut self, name: &str, values: Array2<f64>) -> Result<()> {
        if values.dim() != (self.ys.len(), self.xs.len()) {
            return Err(Error::Shape {
                expected: self.ys.len() * self.xs.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Oracle(format!("field `{name}` has non-finite values")));
        }
        self.names.push(name.to_string());
        self.values.push(values);
        Ok(())
    }

    pub fn field(&self, name: &str) -> Result<&Array2<f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.values[i])
            .ok_or_else(|| Error::Metric(format!("grid has no field `{name}`")))
    }

    /// Bilinear interpolation; points more than `1e-9` outside the grid are rejected.
    pub fn interpolate(&self, name: &str, p: Point) -> Result<f64> {
        let f = self.field(name)?;
        let (i, tx) = locate(&self.xs, p[0])?;
        let (j, ty) = locate(&self.ys, p[1])?;
        Ok((1.0 - tx) * (1.0 - ty) * f[[j, i]]
            + tx * (1.0 - ty) * f[[j, i + 1]]
            + (1.0 - tx) * ty * f[[j + 1, i]]
            + tx * ty * f[[j + 1, i + 1]])
    }

    /// CSV with columns `x,y,<names...>`, x varying fastest.
    pub fn to_csv(&self) -> String {
        let mut out = format!("x,y,{}\n", self.names.join(","));
        for (j, y) in self.ys.iter().enumerate() {
            for (i, x) in self.xs.iter().enumerate() {
                out.push_str(&format!("{x},{y}"));
                for v in &self.values {
                    out.push_str(&format!(",{}", v[[j, i]]));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_csv(text: &str, provenance: Provenance) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::parse("grid csv", "empty file"))?
            .split(',')
            .collect();
        if header.len() < 2 || header[0] != "x" || header[1] != "y" {
            return Err(Error::parse("grid csv", "header must start with x,y"));
        }
        let rows: Vec<Vec<f64>> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|e| Error::parse("grid csv", e)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        if rows.iter().any(|r| r.len() != header.len()) {
            return Err(Error::parse("grid csv", "ragged rows"));
        }
        let nx = rows.iter().take_while(|r| r[1] == rows[0][1]).count();
        if nx == 0 || rows.len() % nx != 0 {
            return Err(Error::parse("grid csv", "rows do not form a tensor grid"));
        }
        let ny = rows.len() / nx;
        let xs = rows[..nx].iter().map(|r| r[0]).collect();
        let ys = (0..ny).map(|j| rows[j * nx][1]).collect();
        let mut grid = GridField::new(xs, ys, provenance)?;
        for (c, name) in header.iter().enumerate().skip(2) {
            let values = Array2::from_shape_fn((ny, nx), |(j, i)| rows[j * nx + i][c]);
            grid.push(name, values)?;
        }
        Ok(grid)
    }
}

fn locate(axis: &[f64], v: f64) -> Result<(usize, f64)> {
    let (lo, hi) = (axis[0], axis[axis.len() - 1]);
    let tol = 1e-9 * (hi - lo);
    if v < lo - tol || v > hi + tol {
        return Err(Error::Metric(format!("probe coordinate {v} outside grid [{lo}, {hi}]")));
    }
    let v = v.clamp(lo, hi);
    let i = axis.partition_point(|&a| a <= v).saturating_sub(1).min(axis.len() - 2);
    Ok((i, (v - axis[i]) / (axis[i + 1] - axis[i])))
}
