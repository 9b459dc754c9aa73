//! Collocation systems `A c = b` for the Poisson, Burgers and steady
//! Navier-Stokes residuals.
//!
//! Vector problems order the unknowns as `[c_u; c_v; c_p]`, each block one
//! weight per kernel.

use std::fmt;
use std::io::Write;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::basis::KernelSet;
use crate::error::{Error, Result};
use crate::geometry::{BcTag, Point, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowTag {
    /// Interior residual of a scalar equation.
    Pde,
    Continuity,
    MomentumX,
    MomentumY,
    Boundary,
    InitialCondition,
    PressurePin,
}

impl RowTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RowTag::Pde => "pde",
            RowTag::Continuity => "continuity",
            RowTag::MomentumX => "x_momentum",
            RowTag::MomentumY => "y_momentum",
            RowTag::Boundary => "bc",
            RowTag::InitialCondition => "ic",
            RowTag::PressurePin => "pressure_pin",
        }
    }

    pub fn is_interior(self) -> bool {
        matches!(self, RowTag::Pde | RowTag::Continuity | RowTag::MomentumX | RowTag::MomentumY)
    }
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSystem {
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    pub tags: Vec<RowTag>,
    /// 1 for scalar problems, 3 for `(u, v, p)`.
    pub n_fields: usize,
    pub n_kernels: usize,
    pub kernel_id: u64,
}

const DUMP_MAGIC: &[u8; 8] = b"PIELMSYS";

impl ResidualSystem {
    fn with_capacity(n_rows: usize, n_fields: usize, kernels: &KernelSet) -> Self {
        ResidualSystem {
            a: Array2::zeros((n_rows, n_fields * kernels.len())),
            b: Array1::zeros(n_rows),
            tags: Vec::with_capacity(n_rows),
            n_fields,
            n_kernels: kernels.len(),
            kernel_id: kernels.id(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_unknowns(&self) -> usize {
        self.a.ncols()
    }

    pub fn is_overdetermined(&self) -> bool {
        self.n_rows() >= self.n_unknowns()
    }

    pub fn count(&self, tag: RowTag) -> usize {
        self.tags.iter().filter(|t| **t == tag).count()
    }

    /// `A c - b`.
    pub fn residual(&self, c: ArrayView1<f64>) -> Result<Array1<f64>> {
        if c.len() != self.n_unknowns() {
            return Err(Error::Shape {
                expected: self.n_unknowns(),
                got: c.len(),
            });
        }
        Ok(self.a.dot(&c) - &self.b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tags.len() != self.n_rows() || self.b.len() != self.n_rows() {
            return Err(Error::Assembly(format!(
                "row bookkeeping mismatch: {} rows, {} tags, {} rhs entries",
                self.n_rows(),
                self.tags.len(),
                self.b.len()
            )));
        }
        if let Some(i) = self.a.rows().into_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Assembly(format!("non-finite coefficient in row {i} ({})", self.tags[i])));
        }
        if self.b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Assembly("non-finite right-hand side".into()));
        }
        Ok(())
    }

    /// Binary dump: 8-byte magic, little-endian `u32` row and column counts,
    /// then `A` row-major and `b`, all as little-endian `f64`.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let dim = |v: usize| u32::try_from(v).map_err(|_| Error::Assembly(format!("dimension {v} too large to dump")));
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&dim(self.n_rows())?.to_le_bytes())?;
        out.write_all(&dim(self.n_unknowns())?.to_le_bytes())?;
        for v in self.a.iter().chain(self.b.iter()) {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a dump back as `(A, b)`.
    pub fn read_binary(path: &Path) -> Result<(Array2<f64>, Array1<f64>)> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 16 || &bytes[..8] != DUMP_MAGIC {
            return Err(Error::parse("system dump", "missing header"));
        }
        let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let expected = 16 + 8 * (rows * cols + rows);
        if bytes.len() != expected {
            return Err(Error::parse("system dump", format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let vals: Vec<f64> = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let a = Array2::from_shape_vec((rows, cols), vals[..rows * cols].to_vec()).expect("length checked");
        Ok((a, Array1::from(vals[rows * cols..].to_vec())))
    }

    pub fn tags_csv(&self) -> String {
        let mut out = String::from("row,tag\n");
        for (i, t) in self.tags.iter().enumerate() {
            out.push_str(&format!("{i},{t}\n"));
        }
        out
    }

    fn push_row(&mut self, tag: RowTag, rhs: f64) -> usize {
        let i = self.tags.len();
        self.tags.push(tag);
        self.b[i] = rhs;
        i
    }
}

/// Linearization point: velocities at the interior collocation points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceField {
    pub u_ref: Vec<f64>,
    /// Empty for scalar problems.
    pub v_ref: Vec<f64>,
}

impl ReferenceField {
    pub fn scalar(u_ref: Vec<f64>) -> Self {
        ReferenceField { u_ref, v_ref: Vec::new() }
    }

    pub fn vector(u_ref: Vec<f64>, v_ref: Vec<f64>) -> Self {
        ReferenceField { u_ref, v_ref }
    }

    pub fn len(&self) -> usize {
        self.u_ref.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_ref.is_empty()
    }

    fn check(&self, n_interior: usize, vector: bool) -> Result<()> {
        if self.u_ref.len() != n_interior {
            return Err(Error::Shape {
                expected: n_interior,
                got: self.u_ref.len(),
            });
        }
        if vector && self.v_ref.len() != n_interior {
            return Err(Error::Shape {
                expected: n_interior,
                got: self.v_ref.len(),
            });
        }
        if self.u_ref.iter().chain(&self.v_ref).any(|v| !v.is_finite()) {
            return Err(Error::Assembly("reference field has non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblyOptions {
    /// Multiplier applied to boundary and initial-condition rows.
    pub bc_weight: f64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { bc_weight: 1.0 }
    }
}

impl AssemblyOptions {
    fn check(&self) -> Result<()> {
        if self.bc_weight > 0.0 && self.bc_weight.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bc_weight must be positive, got {}", self.bc_weight)))
        }
    }
}

/// `-(u_xx + u_yy) = 1` inside, `u = g` on tagged boundary points.
pub fn assemble_poisson(kernels: &KernelSet, cloud: &PointCloud, opts: AssemblyOptions) -> Result<ResidualSystem> {
    opts.check()?;
    let mut sys = ResidualSystem::with_capacity(cloud.len(), 1, kernels);
    for &p in &cloud.interior {
        let i = sys.push_row(RowTag::Pde, 1.0);
        let mut row = sys.a.row_mut(i);
        for k in 0..kernels.len() {
            let e = kernels.eval(k, p);
            row[k] = -(e.dxx + e.dyy);
        }
    }
    let w = opts.bc_weight;
    for bp in &cloud.boundary {
        let BcTag::DirichletScalar(g) = bp.tag else {
            return Err(Error::Assembly(format!("Poisson rows need dirichlet_scalar tags, found {}", bp.tag)));
        };
        let i = sys.push_row(RowTag::Boundary, w * g);
        scalar_value_row(&mut sys, i, 0, kernels, bp.point(), w);
    }
    sys.validate()?;
    Ok(sys)
}

/// Space-time Burgers rows on points `(x, t)`:
/// `u_t + u_ref u_x - nu u_xx = 0` inside, `u = ic(x)` on the initial line and
/// `u = g` on the spatial boundary.
pub fn assemble_burgers(
    kernels: &KernelSet,
    cloud: &PointCloud,
    reference: &ReferenceField,
    nu: f64,
    ic: &dyn Fn(f64) -> f64,
    opts: AssemblyOptions,
) -> Result<ResidualSystem> {
    opts.check()?;
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("viscosity must be non-negative, got {nu}")));
    }
    reference.check(cloud.interior.len(), false)?;
    if cloud.count_tagged(|t| *t == BcTag::InitialCondition) == 0 {
        return Err(Error::Assembly("Burgers block has no initial-condition points".into()));
    }
    let mut sys = ResidualSystem::with_capacity(cloud.len(), 1, kernels);
    for (&p, &u) in cloud.interior.iter().zip(&reference.u_ref) {
        let i = sys.push_row(RowTag::Pde, 0.0);
        let mut row = sys.a.row_mut(i);
        for k in 0..kernels.len() {
            let e = kernels.eval(k, p);
            row[k] = e.dy + u * e.dx - nu * e.dxx;
        }
    }
    let w = opts.bc_weight;
    for bp in &cloud.boundary {
        let (tag, value) = match bp.tag {
            BcTag::InitialCondition => (RowTag::InitialCondition, ic(bp.x)),
            BcTag::DirichletScalar(g) => (RowTag::Boundary, g),
            other => return Err(Error::Assembly(format!("unsupported Burgers boundary tag {other}"))),
        };
        if !value.is_finite() {
            return Err(Error::Assembly(format!("initial profile is not finite at x = {}", bp.x)));
        }
        let i = sys.push_row(tag, w * value);
        scalar_value_row(&mut sys, i, 0, kernels, bp.point(), w);
    }
    sys.validate()?;
    Ok(sys)
}

/// Advection treatment for the momentum rows.
#[derive(Debug, Clone, Copy)]
pub enum FlowMode<'a> {
    /// Advection dropped.
    Stokes,
    /// Advecting velocity frozen at the reference field.
    QuasiLinear(&'a ReferenceField),
}

/// Number of rows a boundary tag contributes to a flow system.
pub fn flow_bc_rows(tag: &BcTag) -> Result<usize> {
    match tag {
        BcTag::NoSlip | BcTag::MovingLid | BcTag::DirichletVector { .. } | BcTag::InletProfile { .. } => Ok(2),
        BcTag::Outlet => Ok(3),
        BcTag::PressurePin => Ok(1),
        BcTag::DirichletScalar(_) | BcTag::InitialCondition => {
            Err(Error::Assembly(format!("tag {tag} does not apply to flow problems")))
        }
    }
}

/// Steady incompressible flow rows. Per interior point: continuity
/// `u_x + v_y = 0` and the momentum equations
/// `u_ref u_x + v_ref u_y - nu lap(u) + p_x = 0` (and the same for `v`
/// with `p_y`). `nu` is the dimensional kinematic viscosity coefficient.
pub fn assemble_navier_stokes(
    kernels: &KernelSet,
    cloud: &PointCloud,
    mode: FlowMode<'_>,
    nu: f64,
    opts: AssemblyOptions,
) -> Result<ResidualSystem> {
    opts.check()?;
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("viscosity must be positive, got {nu}")));
    }
    if let FlowMode::QuasiLinear(r) = mode {
        r.check(cloud.interior.len(), true)?;
    }
    let mut n_rows = 3 * cloud.interior.len();
    for bp in &cloud.boundary {
        n_rows += flow_bc_rows(&bp.tag)?;
    }
    let nk = kernels.len();
    let mut sys = ResidualSystem::with_capacity(n_rows, 3, kernels);

    for (j, &p) in cloud.interior.iter().enumerate() {
        let (ur, vr) = match mode {
            FlowMode::Stokes => (0.0, 0.0),
            FlowMode::QuasiLinear(r) => (r.u_ref[j], r.v_ref[j]),
        };
        let ic = sys.push_row(RowTag::Continuity, 0.0);
        let ix = sys.push_row(RowTag::MomentumX, 0.0);
        let iy = sys.push_row(RowTag::MomentumY, 0.0);
        for k in 0..nk {
            let e = kernels.eval(k, p);
            let transport = ur * e.dx + vr * e.dy - nu * (e.dxx + e.dyy);
            sys.a[[ic, k]] = e.dx;
            sys.a[[ic, nk + k]] = e.dy;
            sys.a[[ix, k]] = transport;
            sys.a[[ix, 2 * nk + k]] = e.dx;
            sys.a[[iy, nk + k]] = transport;
            sys.a[[iy, 2 * nk + k]] = e.dy;
        }
    }
    append_flow_bc_rows(&mut sys, kernels, cloud, opts.bc_weight)?;
    sys.validate()?;
    Ok(sys)
}

fn append_flow_bc_rows(sys: &mut ResidualSystem, kernels: &KernelSet, cloud: &PointCloud, w: f64) -> Result<()> {
    for bp in &cloud.boundary {
        let p = bp.point();
        let velocity = match bp.tag {
            BcTag::NoSlip => Some((0.0, 0.0)),
            BcTag::MovingLid => Some((1.0, 0.0)),
            BcTag::DirichletVector { u, v } => Some((u, v)),
            BcTag::InletProfile { u_max, half_width } => Some((u_max * (1.0 - (bp.y / half_width).powi(2)), 0.0)),
            _ => None,
        };
        match (velocity, bp.tag) {
            (Some((u, v)), _) => {
                let i = sys.push_row(RowTag::Boundary, w * u);
                scalar_value_row(sys, i, 0, kernels, p, w);
                let i = sys.push_row(RowTag::Boundary, w * v);
                scalar_value_row(sys, i, 1, kernels, p, w);
            }
            (None, BcTag::Outlet) => {
                let nk = kernels.len();
                let iu = sys.push_row(RowTag::Boundary, 0.0);
                let iv = sys.push_row(RowTag::Boundary, 0.0);
                for k in 0..nk {
                    let dx = kernels.eval(k, p).dx;
                    sys.a[[iu, k]] = w * dx;
                    sys.a[[iv, nk + k]] = w * dx;
                }
                let ip = sys.push_row(RowTag::Boundary, 0.0);
                scalar_value_row(sys, ip, 2, kernels, p, w);
            }
            (None, BcTag::PressurePin) => {
                let i = sys.push_row(RowTag::PressurePin, 0.0);
                scalar_value_row(sys, i, 2, kernels, p, w);
            }
            (None, other) => return Err(Error::Assembly(format!("tag {other} does not apply to flow problems"))),
        }
    }
    Ok(())
}

/// Writes `w * phi_k(p)` into field block `field` of row `i`.
fn scalar_value_row(sys: &mut ResidualSystem, i: usize, field: usize, kernels: &KernelSet, p: Point, w: f64) {
    let nk = kernels.len();
    let mut row = sys.a.slice_mut(s![i, field * nk..(field + 1) * nk]);
    for k in 0..nk {
        row[k] = w * kernels.phi(k, p);
    }
}
