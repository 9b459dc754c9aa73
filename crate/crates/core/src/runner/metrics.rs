//! Error metrics, the per-run metrics report and CSV exports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::basis::{predict_field, KernelSet};
use crate::error::{Error, Result};
use crate::geometry::{linspace, Domain, Point, MEMBERSHIP_TOL};
use crate::lsq::FieldWeights;
use crate::oracles::GridField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub rmse: f64,
    pub rel_l2: f64,
    pub max_abs: f64,
    pub n: usize,
}

/// RMSE, relative L2 and max-norm of `approx - exact`.
pub fn error_stats(approx: &[f64], exact: &[f64]) -> Result<ErrorStats> {
    if approx.len() != exact.len() {
        return Err(Error::Shape {
            expected: exact.len(),
            got: approx.len(),
        });
    }
    if approx.is_empty() {
        return Err(Error::Metric("no samples to compare".into()));
    }
    let (mut se, mut norm, mut max_abs) = (0.0, 0.0, 0.0f64);
    for (a, e) in approx.iter().zip(exact) {
        let d = a - e;
        se += d * d;
        norm += e * e;
        max_abs = max_abs.max(d.abs());
    }
    let stats = ErrorStats {
        rmse: (se / approx.len() as f64).sqrt(),
        rel_l2: (se / norm.max(f64::MIN_POSITIVE)).sqrt(),
        max_abs,
        n: approx.len(),
    };
    if !(stats.rmse.is_finite() && stats.max_abs.is_finite()) {
        return Err(Error::Metric("non-finite error statistics".into()));
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Stage the field belongs to, e.g. `t=0.2` or `re=100`.
    pub label: String,
    /// Compared quantity, e.g. `u`, `speed`, `p`.
    pub field: String,
    pub stats: ErrorStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LsqSummary {
    pub stages: usize,
    pub solves: usize,
    pub max_relative_residual: f64,
    pub min_effective_rank: usize,
    pub max_rows: usize,
    pub max_unknowns: usize,
}

impl LsqSummary {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a crate::lsq::LsqReport>, stages: usize) -> Self {
        let mut s = LsqSummary {
            stages,
            min_effective_rank: usize::MAX,
            ..Default::default()
        };
        for r in reports {
            s.solves += 1;
            s.max_relative_residual = s.max_relative_residual.max(r.relative_residual);
            s.min_effective_rank = s.min_effective_rank.min(r.effective_rank);
            s.max_rows = s.max_rows.max(r.n_rows);
            s.max_unknowns = s.max_unknowns.max(r.n_cols);
        }
        if s.solves == 0 {
            s.min_effective_rank = 0;
        }
        s
    }
}

/// Everything a run reports, free of wall-clock values so identical runs
/// produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub case: String,
    pub seed: u64,
    pub comparisons: Vec<Comparison>,
    pub scalars: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub counts: BTreeMap<String, usize>,
    pub lsq: LsqSummary,
    pub notes: Vec<String>,
}

impl MetricsReport {
    pub fn new(case: &str, seed: u64) -> Self {
        MetricsReport {
            case: case.to_string(),
            seed,
            comparisons: Vec::new(),
            scalars: BTreeMap::new(),
            series: BTreeMap::new(),
            counts: BTreeMap::new(),
            lsq: LsqSummary::default(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, label: &str, field: &str, stats: ErrorStats) {
        self.comparisons.push(Comparison {
            label: label.to_string(),
            field: field.to_string(),
            stats,
        });
    }

    pub fn comparison(&self, label: &str, field: &str) -> Option<&ErrorStats> {
        self.comparisons.iter().find(|c| c.label == label && c.field == field).map(|c| &c.stats)
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }

    pub fn set(&mut self, key: impl Into<String>, value: f64) {
        self.scalars.insert(key.into(), value);
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.comparisons {
            if !(c.stats.rmse >= 0.0 && c.stats.rmse.is_finite()) {
                return Err(Error::Metric(format!("bad RMSE for {} / {}", c.label, c.field)));
            }
        }
        if let Some((k, _)) = self.scalars.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Metric(format!("scalar `{k}` is not finite")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Plain-text table of the report.
    pub fn render(&self) -> String {
        let mut out = format!("case {}  seed {}\n", self.case, self.seed);
        if !self.comparisons.is_empty() {
            out.push_str(&format!("{:<14} {:<8} {:>12} {:>12} {:>12}\n", "stage", "field", "rmse", "rel_l2", "max_abs"));
            for c in &self.comparisons {
                out.push_str(&format!(
                    "{:<14} {:<8} {:>12.4e} {:>12.4e} {:>12.4e}\n",
                    c.label, c.field, c.stats.rmse, c.stats.rel_l2, c.stats.max_abs
                ));
            }
        }
        for (k, v) in &self.scalars {
            out.push_str(&format!("{k} = {v:.6e}\n"));
        }
        for (k, v) in &self.counts {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str(&format!(
            "lsq: {} stages, {} solves, max relative residual {:.3e}, min rank {}\n",
            self.lsq.stages, self.lsq.solves, self.lsq.max_relative_residual, self.lsq.min_effective_rank
        ));
        for n in &self.notes {
            out.push_str(&format!("note: {n}\n"));
        }
        out
    }
}

/// Uniform probe grid over the domain's bounding box, keeping nodes inside
/// the closed domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn points(&self, domain: &Domain) -> Result<Vec<Point>> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidCount(format!("probe grid {} x {} is too small", self.nx, self.ny)));
        }
        let (x0, x1, y0, y1) = domain.bounds();
        let xs = linspace(x0, x1, self.nx);
        let ys = linspace(y0, y1, self.ny);
        Ok(ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| [x, y]))
            .filter(|p| domain.contains(*p, 1e3 * MEMBERSHIP_TOL))
            .collect())
    }
}

/// CSV `x,y,u[,v,p]` of the network fields at the in-domain grid nodes.
pub fn export_field_grid(kernels: &KernelSet, weights: &FieldWeights, domain: &Domain, grid: GridSpec) -> Result<String> {
    let pts = grid.points(domain)?;
    let mut cols = vec![predict_field(kernels, weights.c_u.view(), &pts)?];
    let mut header = String::from("x,y,u");
    if let (Some(v), Some(p)) = (&weights.c_v, &weights.c_p) {
        cols.push(predict_field(kernels, v.view(), &pts)?);
        cols.push(predict_field(kernels, p.view(), &pts)?);
        header.push_str(",v,p");
    }
    let mut out = header;
    out.push('\n');
    for (i, p) in pts.iter().enumerate() {
        out.push_str(&format!("{},{}", p[0], p[1]));
        for c in &cols {
            out.push_str(&format!(",{}", c[i]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Side-by-side samples `x,y,<name>_pielm,<name>_ref` for later re-scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSamples {
    pub name: String,
    pub points: Vec<Point>,
    pub approx: Vec<f64>,
    pub reference: Vec<f64>,
}

impl PairedSamples {
    pub fn stats(&self) -> Result<ErrorStats> {
        error_stats(&self.approx, &self.reference)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("x,y,{0}_pielm,{0}_ref\n", self.name);
        for (i, p) in self.points.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", p[0], p[1], self.approx[i], self.reference[i]));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse("paired csv", "empty file"))?;
        let cols: Vec<&str> = header.split(',').collect();
        let name = cols
            .get(2)
            .and_then(|c| c.strip_suffix("_pielm"))
            .filter(|_| cols.len() == 4 && cols[0] == "x" && cols[1] == "y")
            .ok_or_else(|| Error::parse("paired csv", format!("unexpected header `{header}`")))?
            .to_string();
        let mut s = PairedSamples {
            name,
            points: Vec::new(),
            approx: Vec::new(),
            reference: Vec::new(),
        };
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let v = line
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| Error::parse("paired csv", e)))
                .collect::<Result<Vec<_>>>()?;
            if v.len() != 4 {
                return Err(Error::parse("paired csv", "expected 4 columns"));
            }
            s.points.push([v[0], v[1]]);
            s.approx.push(v[2]);
            s.reference.push(v[3]);
        }
        Ok(s)
    }
}

/// Bilinear oracle values of `field` at `points` paired with network values.
pub fn compare_to_oracle(name: &str, points: &[Point], approx: &[f64], oracle: &GridField, field: &str) -> Result<PairedSamples> {
    if points.len() != approx.len() {
        return Err(Error::Shape {
            expected: points.len(),
            got: approx.len(),
        });
    }
    let reference = points.iter().map(|&p| oracle.interpolate(field, p)).collect::<Result<Vec<_>>>()?;
    Ok(PairedSamples {
        name: name.to_string(),
        points: points.to_vec(),
        approx: approx.to_vec(),
        reference,
    })
}

pub fn speed(u: &[f64], v: &[f64]) -> Vec<f64> {
    u.iter().zip(v).map(|(a, b)| a.hypot(*b)).collect()
}
