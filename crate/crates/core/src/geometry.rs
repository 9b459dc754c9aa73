//! Computational domains, collocation point clouds and RBF center layouts.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Open01};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub type Point = [f64; 2];

/// Membership tolerance for generated points.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Symmetric channel with a smooth cosine constriction.
///
/// The walls sit at `y = ±half_width(x)`. The central part of the channel
/// narrows from `inlet_half_width` to `throat_half_width` at `x = length / 2`;
/// the straight inlet and outlet sections each span `straight_fraction * length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stenosis {
    pub length: f64,
    pub inlet_half_width: f64,
    pub throat_half_width: f64,
    pub straight_fraction: f64,
}

impl Default for Stenosis {
    fn default() -> Self {
        Stenosis {
            length: 1.0,
            inlet_half_width: 0.1,
            throat_half_width: 0.06,
            straight_fraction: 0.2,
        }
    }
}

impl Stenosis {
    pub fn validate(&self) -> Result<()> {
        let ok = self.length > 0.0
            && self.throat_half_width > 0.0
            && self.throat_half_width < self.inlet_half_width
            && self.straight_fraction > 0.0
            && self.straight_fraction < 0.5;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid stenosis geometry {self:?}")))
        }
    }

    pub fn throat_x(&self) -> f64 {
        0.5 * self.length
    }

    fn ramp_length(&self) -> f64 {
        self.length * (1.0 - 2.0 * self.straight_fraction)
    }

    /// Wall position `y_wall(x) >= 0`; the lower wall is its mirror image.
    pub fn half_width(&self, x: f64) -> f64 {
        let ramp = self.ramp_length();
        let s = x - self.throat_x();
        if s.abs() >= 0.5 * ramp {
            return self.inlet_half_width;
        }
        let depth = self.inlet_half_width - self.throat_half_width;
        self.inlet_half_width - 0.5 * depth * (1.0 + (2.0 * PI * s / ramp).cos())
    }

    /// Distance from `p` to the nearest no-slip wall, measured against a
    /// dense polyline of the wall profile.
    pub fn wall_distance(&self, p: Point) -> f64 {
        const SEGMENTS: usize = 2000;
        let dx = self.length / SEGMENTS as f64;
        let y = p[1].abs();
        let mut best = f64::INFINITY;
        let mut prev = [0.0, self.half_width(0.0)];
        for k in 1..=SEGMENTS {
            let x = k as f64 * dx;
            let next = [x, self.half_width(x)];
            best = best.min(segment_distance([p[0], y], prev, next));
            prev = next;
        }
        best
    }

    /// Density of interior samples along x, proportional to
    /// `exp(-|x - throat| / scale)` on `[0, length]`. Maps `u` in `[0, 1]`
    /// through the inverse cumulative distribution.
    pub fn clustered_x(&self, u: f64, scale: f64) -> f64 {
        let c = self.throat_x();
        let s = 2.0 * u - 1.0;
        let tail = 1.0 - (-c / scale).exp();
        let d = -scale * (1.0 - s.abs() * tail).ln();
        (c + s.signum() * d).clamp(0.0, self.length)
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (p[0] - a[0] - t * abx, p[1] - a[1] - t * aby);
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Domain {
    Rectangle {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
    UnitDisk,
    CavityUnitSquare,
    StenoticChannel(Stenosis),
}

impl Domain {
    pub fn rectangle(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let d = Domain::Rectangle {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Domain::Rectangle {
                x_min,
                x_max,
                y_min,
                y_max,
            } => {
                if x_min < x_max && y_min < y_max {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "degenerate rectangle [{x_min}, {x_max}] x [{y_min}, {y_max}]"
                    )))
                }
            }
            Domain::StenoticChannel(s) => s.validate(),
            Domain::UnitDisk | Domain::CavityUnitSquare => Ok(()),
        }
    }

    /// Axis-aligned bounding box `(x_min, x_max, y_min, y_max)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Domain::Rectangle {
                x_min,
                x_max,
                y_min,
                y_max,
            } => (x_min, x_max, y_min, y_max),
            Domain::UnitDisk => (-1.0, 1.0, -1.0, 1.0),
            Domain::CavityUnitSquare => (0.0, 1.0, 0.0, 1.0),
            Domain::StenoticChannel(s) => (0.0, s.length, -s.inlet_half_width, s.inlet_half_width),
        }
    }

    /// Closed-set membership with tolerance `tol`.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let [x, y] = p;
        match *self {
            Domain::UnitDisk => (x * x + y * y).sqrt() <= 1.0 + tol,
            Domain::StenoticChannel(s) => {
                x >= -tol && x <= s.length + tol && y.abs() <= s.half_width(x.clamp(0.0, s.length)) + tol
            }
            _ => {
                let (x0, x1, y0, y1) = self.bounds();
                x >= x0 - tol && x <= x1 + tol && y >= y0 - tol && y <= y1 + tol
            }
        }
    }

    /// Distance from `p` to the boundary, positive inside.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        let [x, y] = p;
        match *self {
            Domain::UnitDisk => 1.0 - (x * x + y * y).sqrt(),
            Domain::StenoticChannel(s) => {
                let walls = if self.contains(p, 0.0) {
                    s.wall_distance(p)
                } else {
                    -s.wall_distance(p)
                };
                walls.min(x).min(s.length - x)
            }
            _ => {
                let (x0, x1, y0, y1) = self.bounds();
                (x - x0).min(x1 - x).min(y - y0).min(y1 - y)
            }
        }
    }

    pub fn on_boundary(&self, p: Point, tol: f64) -> bool {
        self.boundary_distance(p).abs() <= tol
    }
}

/// Boundary-condition tag attached to a boundary point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcTag {
    DirichletVector { u: f64, v: f64 },
    DirichletScalar(f64),
    /// Initial-condition row of a space-time block; the value comes from the
    /// block's initial profile.
    InitialCondition,
    NoSlip,
    /// Lid moving with unit speed along +x.
    MovingLid,
    InletProfile { u_max: f64, half_width: f64 },
    Outlet,
    PressurePin,
}

impl fmt::Display for BcTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BcTag::DirichletVector { u, v } => write!(f, "dirichlet_vector({u};{v})"),
            BcTag::DirichletScalar(g) => write!(f, "dirichlet_scalar({g})"),
            BcTag::InitialCondition => f.write_str("initial_condition"),
            BcTag::NoSlip => f.write_str("no_slip"),
            BcTag::MovingLid => f.write_str("moving_lid"),
            BcTag::InletProfile { u_max, half_width } => write!(f, "inlet_profile({u_max};{half_width})"),
            BcTag::Outlet => f.write_str("outlet"),
            BcTag::PressurePin => f.write_str("pressure_pin"),
        }
    }
}

impl FromStr for BcTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) if s.ends_with(')') => (&s[..open], Some(&s[open + 1..s.len() - 1])),
            Some(_) => return Err(Error::parse("bc tag", format!("unbalanced parentheses in `{s}`"))),
            None => (s, None),
        };
        let values: Vec<f64> = match args {
            Some(a) => a
                .split(';')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::parse("bc tag", e)))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        let arity = |n: usize| -> Result<()> {
            if values.len() == n {
                Ok(())
            } else {
                Err(Error::parse("bc tag", format!("`{name}` takes {n} values, got {}", values.len())))
            }
        };
        let tag = match name {
            "dirichlet_vector" => {
                arity(2)?;
                BcTag::DirichletVector {
                    u: values[0],
                    v: values[1],
                }
            }
            "dirichlet_scalar" => {
                arity(1)?;
                BcTag::DirichletScalar(values[0])
            }
            "inlet_profile" => {
                arity(2)?;
                BcTag::InletProfile {
                    u_max: values[0],
                    half_width: values[1],
                }
            }
            "initial_condition" | "no_slip" | "moving_lid" | "outlet" | "pressure_pin" => {
                arity(0)?;
                match name {
                    "initial_condition" => BcTag::InitialCondition,
                    "no_slip" => BcTag::NoSlip,
                    "moving_lid" => BcTag::MovingLid,
                    "outlet" => BcTag::Outlet,
                    _ => BcTag::PressurePin,
                }
            }
            other => return Err(Error::parse("bc tag", format!("unknown tag `{other}`"))),
        };
        Ok(tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: f64,
    pub tag: BcTag,
}

impl BoundaryPoint {
    pub fn new(x: f64, y: f64, tag: BcTag) -> Self {
        BoundaryPoint { x, y, tag }
    }

    pub fn point(&self) -> Point {
        [self.x, self.y]
    }
}

/// Interior collocation points and tagged boundary points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub interior: Vec<Point>,
    pub boundary: Vec<BoundaryPoint>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count_tagged(&self, pred: impl Fn(&BcTag) -> bool) -> usize {
        self.boundary.iter().filter(|b| pred(&b.tag)).count()
    }

    /// Checks that every point lies in the closed domain and that interior
    /// points are not on the boundary.
    pub fn check_membership(&self, domain: &Domain) -> Result<()> {
        for p in &self.interior {
            if !domain.contains(*p, MEMBERSHIP_TOL) || domain.boundary_distance(*p) <= 0.0 {
                return Err(Error::OutsideDomain { x: p[0], y: p[1] });
            }
        }
        for b in &self.boundary {
            if !domain.contains(b.point(), MEMBERSHIP_TOL) {
                return Err(Error::OutsideDomain { x: b.x, y: b.y });
            }
        }
        Ok(())
    }

    /// CSV with header `x,y,tag`; interior points carry the tag `interior`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,tag\n");
        for p in &self.interior {
            out.push_str(&format!("{},{},interior\n", p[0], p[1]));
        }
        for b in &self.boundary {
            out.push_str(&format!("{},{},{}\n", b.x, b.y, b.tag));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("x,y,tag") => {}
            other => return Err(Error::parse("point csv", format!("bad header {other:?}"))),
        }
        let mut cloud = PointCloud::default();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ctx = || format!("point csv line {}", lineno + 2);
            let mut parts = line.splitn(3, ',');
            let x: f64 = parse_field(parts.next(), ctx)?;
            let y: f64 = parse_field(parts.next(), ctx)?;
            let tag = parts.next().ok_or_else(|| Error::parse(ctx(), "missing tag"))?.trim();
            if tag == "interior" {
                cloud.interior.push([x, y]);
            } else {
                cloud.boundary.push(BoundaryPoint::new(x, y, tag.parse()?));
            }
        }
        Ok(cloud)
    }
}

fn parse_field(field: Option<&str>, ctx: impl Fn() -> String) -> Result<f64> {
    field
        .ok_or_else(|| Error::parse(ctx(), "missing column"))?
        .trim()
        .parse()
        .map_err(|e| Error::parse(ctx(), e))
}

/// Center list as CSV `alpha_star,beta_star`.
pub fn centers_to_csv(centers: &[Point]) -> String {
    let mut out = String::from("alpha_star,beta_star\n");
    for c in centers {
        out.push_str(&format!("{},{}\n", c[0], c[1]));
    }
    out
}

pub fn centers_from_csv(text: &str) -> Result<Vec<Point>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("alpha_star,beta_star") {
        return Err(Error::parse("center csv", "bad header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let ctx = || format!("center csv line {}", i + 2);
            let mut parts = l.split(',');
            Ok([parse_field(parts.next(), ctx)?, parse_field(parts.next(), ctx)?])
        })
        .collect()
}

/// High-gradient band used to concentrate points and narrow kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockWindow {
    pub center: f64,
    pub half_width: f64,
    /// Share of points (and kernels) placed inside the band.
    pub fraction: f64,
}

impl ShockWindow {
    pub const DEFAULT_SIZE: f64 = 0.1;
    pub const DEFAULT_FRACTION: f64 = 0.3;

    pub fn new(center: f64, half_width: f64, fraction: f64) -> Result<Self> {
        let w = ShockWindow {
            center,
            half_width,
            fraction,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_width > 0.0 && self.fraction > 0.0 && self.fraction < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid shock window {self:?}")))
        }
    }

    pub fn left(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn right(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.left() && x <= self.right()
    }

    /// Number of items out of `n` that go inside the band: `ceil(fraction * n)`.
    pub fn inside_count(&self, n: usize) -> usize {
        // The small offset absorbs representation error in products such as 0.3 * 1500.
        ((self.fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockDetection {
    pub window: ShockWindow,
    /// Windowed gradient sum at the selected window.
    pub score: f64,
    pub no_gradient: bool,
}

/// Slides a window of width `window_size` across the sampled profile and
/// returns the placement maximizing `sum |du/dx|` over the grid segments it
/// covers. Windows that would extend past either end of the grid are not
/// considered.
pub fn detect_shock_window(xs: &[f64], u: &[f64], window_size: f64) -> Result<ShockDetection> {
    if xs.len() != u.len() {
        return Err(Error::Shape {
            expected: xs.len(),
            got: u.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::InvalidCount(format!("profile needs at least 3 samples, got {}", xs.len())));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("profile grid must be strictly increasing".into()));
    }
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    if !(window_size > 0.0 && window_size < hi - lo) {
        return Err(Error::InvalidParameter(format!(
            "window size {window_size} must lie in (0, {})",
            hi - lo
        )));
    }

    let slopes: Vec<f64> = xs
        .windows(2)
        .zip(u.windows(2))
        .map(|(x, v)| ((v[1] - v[0]) / (x[1] - x[0])).abs())
        .collect();
    let mut prefix = Vec::with_capacity(slopes.len() + 1);
    prefix.push(0.0);
    for s in &slopes {
        prefix.push(prefix.last().unwrap() + s);
    }

    let eps = 1e-9 * (hi - lo);
    let mut best: Option<(usize, f64)> = None;
    let mut end = 0;
    for start in 0..xs.len() {
        if xs[start] + window_size > hi + eps {
            break;
        }
        end = end.max(start);
        while end + 1 < xs.len() && xs[end + 1] - xs[start] <= window_size + eps {
            end += 1;
        }
        let score = prefix[end] - prefix[start];
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((start, score));
        }
    }
    let (start, score) = best.expect("window narrower than the grid always fits once");

    let half_width = 0.5 * window_size;
    if score <= 0.0 || !score.is_finite() {
        return Ok(ShockDetection {
            window: ShockWindow::new(0.5 * (lo + hi), half_width, ShockWindow::DEFAULT_FRACTION)?,
            score: 0.0,
            no_gradient: true,
        });
    }
    Ok(ShockDetection {
        window: ShockWindow::new(xs[start] + half_width, half_width, ShockWindow::DEFAULT_FRACTION)?,
        score,
        no_gradient: false,
    })
}

fn open01(rng: &mut Rng) -> f64 {
    Open01.sample(rng)
}

/// `n` values in `(a, b)`, one per equal-width stratum, in increasing order.
fn stratified(rng: &mut Rng, a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / n as f64;
    (0..n).map(|k| a + h * (k as f64 + open01(rng))).collect()
}

/// Stratified values over `[a, b]` with the band `[l, r]` removed.
fn stratified_outside(rng: &mut Rng, a: f64, b: f64, l: f64, r: f64, n: usize) -> Vec<f64> {
    let l = l.clamp(a, b);
    let r = r.clamp(a, b);
    let left = l - a;
    let total = left + (b - r);
    stratified(rng, 0.0, total, n)
        .into_iter()
        .map(|s| if s < left { a + s } else { r + (s - left) })
        .collect()
}

/// x-coordinates for `n` items on `[a, b]`, with `window.inside_count(n)` of
/// them inside the band when a window is given.
pub fn windowed_abscissae(rng: &mut Rng, a: f64, b: f64, n: usize, window: Option<&ShockWindow>) -> Vec<f64> {
    match window {
        None => stratified(rng, a, b, n),
        Some(w) => {
            let inside = w.inside_count(n);
            let (l, r) = (w.left().max(a), w.right().min(b));
            let mut xs = stratified(rng, l, r, inside);
            xs.extend(stratified_outside(rng, a, b, l, r, n - inside));
            xs
        }
    }
}

/// Tensor grid of `nx * ny` points on a rectangle; perimeter points are
/// tagged `dirichlet_scalar(0)`.
pub fn sample_rectangle_uniform(domain: &Domain, nx: usize, ny: usize) -> Result<PointCloud> {
    let Domain::Rectangle {
        x_min,
        x_max,
        y_min,
        y_max,
    } = *domain
    else {
        return Err(Error::DomainMismatch(format!("expected a rectangle, got {domain:?}")));
    };
    domain.validate()?;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidCount(format!("tensor grid needs nx, ny >= 2, got {nx} x {ny}")));
    }
    let xs = linspace(x_min, x_max, nx);
    let ys = linspace(y_min, y_max, ny);
    let mut cloud = PointCloud::default();
    for (j, &y) in ys.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                cloud.boundary.push(BoundaryPoint::new(x, y, BcTag::DirichletScalar(0.0)));
            } else {
                cloud.interior.push([x, y]);
            }
        }
    }
    Ok(cloud)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n).map(|k| if k == n - 1 { b } else { a + h * k as f64 }).collect()
        }
    }
}

/// Chebyshev–Gauss–Lobatto nodes mapped to `[0, 1]`, mirrored so that
/// `x_k + x_{n-1-k} = 1`.
pub fn chebyshev_nodes(n: usize) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::InvalidCount(format!("Chebyshev axis needs n >= 3, got {n}")));
    }
    let mut x = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let v = 0.5 * (1.0 - (PI * k as f64 / (n - 1) as f64).cos());
        x[k] = v;
        x[n - 1 - k] = 1.0 - v;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.5;
    }
    Ok(x)
}

/// Lid-driven cavity sampling on a Chebyshev tensor grid. The top edge
/// (corners excluded) carries the moving lid, the other walls and both top
/// corners are no-slip, and a pressure pin is added at the origin.
pub fn sample_chebyshev_square(n_per_axis: usize) -> Result<PointCloud> {
    let nodes = chebyshev_nodes(n_per_axis)?;
    let last = n_per_axis - 1;
    let mut cloud = PointCloud::default();
    for (j, &y) in nodes.iter().enumerate() {
        for (i, &x) in nodes.iter().enumerate() {
            let on_wall = i == 0 || j == 0 || i == last || j == last;
            if !on_wall {
                cloud.interior.push([x, y]);
            } else if j == last && i != 0 && i != last {
                cloud.boundary.push(BoundaryPoint::new(x, y, BcTag::MovingLid));
            } else {
                cloud.boundary.push(BoundaryPoint::new(x, y, BcTag::NoSlip));
            }
        }
    }
    cloud.boundary.push(BoundaryPoint::new(0.0, 0.0, BcTag::PressurePin));
    Ok(cloud)
}

/// Uniform-by-area interior points and equally spaced circle points tagged
/// `dirichlet_scalar(0)`.
pub fn sample_disk(n_interior: usize, n_boundary: usize, rng: &mut Rng) -> Result<PointCloud> {
    if n_interior == 0 || n_boundary == 0 {
        return Err(Error::InvalidCount(format!(
            "disk sampling needs positive counts, got {n_interior} interior / {n_boundary} boundary"
        )));
    }
    let interior = (0..n_interior)
        .map(|_| {
            let r = rng.gen::<f64>().sqrt();
            let theta = 2.0 * PI * rng.gen::<f64>();
            [r * theta.cos(), r * theta.sin()]
        })
        .collect();
    let boundary = (0..n_boundary)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / n_boundary as f64;
            BoundaryPoint::new(theta.cos(), theta.sin(), BcTag::DirichletScalar(0.0))
        })
        .collect();
    Ok(PointCloud { interior, boundary })
}

/// Point counts for one space-time Burgers block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockCounts {
    pub interior: usize,
    pub initial: usize,
    /// Split evenly between the two spatial boundaries.
    pub boundary: usize,
}

impl BlockCounts {
    /// Splits a total into `interior_fraction` PDE points; of the remainder,
    /// `boundary_per_side` points go to each spatial boundary and the rest to
    /// the initial line.
    pub fn split(total: usize, interior_fraction: f64, boundary_per_side: usize) -> Result<Self> {
        let interior = (total as f64 * interior_fraction).round() as usize;
        let rest = total.saturating_sub(interior);
        let boundary = 2 * boundary_per_side;
        if interior == 0 || rest <= boundary {
            return Err(Error::InvalidCount(format!(
                "cannot split {total} points with interior fraction {interior_fraction} and {boundary_per_side} boundary points per side"
            )));
        }
        Ok(BlockCounts {
            interior,
            initial: rest - boundary,
            boundary,
        })
    }

    pub fn total(&self) -> usize {
        self.interior + self.initial + self.boundary
    }
}

/// Points for the space-time block `[x_min, x_max] x [t0, t0 + dt]`.
///
/// Interior and initial-line abscissae are stratified and concentrated in the
/// shock window when one is given; boundary points sit at `x_min` and `x_max`
/// with homogeneous Dirichlet tags.
pub fn sample_space_time_block(
    x_range: (f64, f64),
    t0: f64,
    dt: f64,
    counts: BlockCounts,
    window: Option<&ShockWindow>,
    rng: &mut Rng,
) -> Result<PointCloud> {
    let (a, b) = x_range;
    if !(a < b && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("bad block [{a}, {b}] x [{t0}, +{dt}]")));
    }
    let mut cloud = PointCloud::default();
    let xs = windowed_abscissae(rng, a, b, counts.interior, window);
    cloud.interior = xs.into_iter().map(|x| [x, t0 + dt * open01(rng)]).collect();
    for x in windowed_abscissae(rng, a, b, counts.initial, window) {
        cloud.boundary.push(BoundaryPoint::new(x, t0, BcTag::InitialCondition));
    }
    let per_side = counts.boundary / 2;
    for side in [a, b] {
        for k in 0..per_side {
            let t = t0 + dt * (k as f64 + 1.0) / per_side as f64;
            cloud.boundary.push(BoundaryPoint::new(side, t, BcTag::DirichletScalar(0.0)));
        }
    }
    Ok(cloud)
}

/// Channel sampling: interior points clustered toward the throat along x and
/// uniform across the local width; boundary points split between inlet,
/// outlet and the two walls in proportion to their lengths.
pub fn sample_stenosis(
    geometry: &Stenosis,
    n_interior: usize,
    n_boundary: usize,
    cluster_scale: f64,
    u_max: f64,
    rng: &mut Rng,
) -> Result<PointCloud> {
    geometry.validate()?;
    if n_interior == 0 || n_boundary < 8 {
        return Err(Error::InvalidCount(format!(
            "stenosis sampling needs interior > 0 and boundary >= 8, got {n_interior} / {n_boundary}"
        )));
    }
    let r = geometry.inlet_half_width;
    let perimeter = 2.0 * geometry.length + 4.0 * r;
    let n_end = ((n_boundary as f64 * 2.0 * r / perimeter).round() as usize).max(2);
    let n_walls = n_boundary - 2 * n_end;
    let n_bottom = n_walls / 2;
    let n_top = n_walls - n_bottom;

    let mut cloud = PointCloud::default();
    cloud.interior = (0..n_interior)
        .map(|_| {
            let x = geometry.clustered_x(open01(rng), cluster_scale);
            let h = geometry.half_width(x);
            [x, h * (2.0 * open01(rng) - 1.0)]
        })
        .collect();

    let inlet = BcTag::InletProfile { u_max, half_width: r };
    for k in 0..n_end {
        let y = -r + 2.0 * r * (k as f64 + 0.5) / n_end as f64;
        cloud.boundary.push(BoundaryPoint::new(0.0, y, inlet));
    }
    for k in 0..n_end {
        let y = -r + 2.0 * r * (k as f64 + 0.5) / n_end as f64;
        cloud.boundary.push(BoundaryPoint::new(geometry.length, y, BcTag::Outlet));
    }
    for (n, sign) in [(n_top, 1.0), (n_bottom, -1.0)] {
        for k in 0..n {
            let x = geometry.clustered_x((k as f64 + 0.5) / n as f64, cluster_scale);
            cloud
                .boundary
                .push(BoundaryPoint::new(x, sign * geometry.half_width(x), BcTag::NoSlip));
        }
    }
    Ok(cloud)
}

/// Default x-clustering length for stenosis sampling.
pub const STENOSIS_CLUSTER_SCALE: f64 = 0.15;

/// RBF center layout following the domain's placement rule.
///
/// Rectangles place centers uniformly (stratified along x), concentrating
/// `window.inside_count(n)` of them inside the shock window when one is
/// given. The disk is uniform by area, the cavity is biased toward the walls
/// and the stenotic channel is clustered toward the throat.
pub fn place_centers(domain: &Domain, n_kernels: usize, window: Option<&ShockWindow>, rng: &mut Rng) -> Result<Vec<Point>> {
    if n_kernels == 0 {
        return Err(Error::InvalidCount("need at least one kernel".into()));
    }
    domain.validate()?;
    if window.is_some() && !matches!(domain, Domain::Rectangle { .. }) {
        return Err(Error::DomainMismatch("shock windows apply to rectangular domains only".into()));
    }
    let centers = match *domain {
        Domain::Rectangle {
            x_min,
            x_max,
            y_min,
            y_max,
        } => windowed_abscissae(rng, x_min, x_max, n_kernels, window)
            .into_iter()
            .map(|x| [x, y_min + (y_max - y_min) * rng.gen::<f64>()])
            .collect(),
        Domain::UnitDisk => (0..n_kernels)
            .map(|_| {
                let r = rng.gen::<f64>().sqrt();
                let theta = 2.0 * PI * rng.gen::<f64>();
                [r * theta.cos(), r * theta.sin()]
            })
            .collect(),
        Domain::CavityUnitSquare => (0..n_kernels)
            .map(|_| {
                let x = 0.5 * (1.0 - (PI * rng.gen::<f64>()).cos());
                let y = 0.5 * (1.0 - (PI * rng.gen::<f64>()).cos());
                [x, y]
            })
            .collect(),
        Domain::StenoticChannel(s) => (0..n_kernels)
            .map(|_| {
                let x = s.clustered_x(open01(rng), STENOSIS_CLUSTER_SCALE);
                let h = s.half_width(x);
                [x, h * (2.0 * open01(rng) - 1.0)]
            })
            .collect(),
    };
    Ok(centers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn rng() -> Rng {
        stream(42, Stream::Sampling, 0)
    }

    #[test]
    fn rectangle_grid_counts() {
        let unit = Domain::rectangle(0.0, 1.0, 0.0, 1.0).unwrap();
        let c = sample_rectangle_uniform(&unit, 2, 2).unwrap();
        assert_eq!((c.interior.len(), c.boundary.len()), (0, 4));
        let c = sample_rectangle_uniform(&unit, 3, 3).unwrap();
        assert_eq!((c.interior.len(), c.boundary.len()), (1, 8));
        assert_eq!(c.interior[0], [0.5, 0.5]);

        let burgers = Domain::rectangle(-1.0, 1.0, 0.0, 1.0).unwrap();
        let c = sample_rectangle_uniform(&burgers, 47, 45).unwrap();
        assert_eq!(c.len(), 2115);
        assert_eq!(c.boundary.len(), 2 * 47 + 2 * 43);
        c.check_membership(&burgers).unwrap();
    }

    #[test]
    fn rectangle_grid_rejects_other_domains_and_small_counts() {
        assert!(matches!(
            sample_rectangle_uniform(&Domain::UnitDisk, 3, 3),
            Err(Error::DomainMismatch(_))
        ));
        let unit = Domain::rectangle(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(matches!(sample_rectangle_uniform(&unit, 1, 3), Err(Error::InvalidCount(_))));
        assert!(Domain::rectangle(1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn chebyshev_axis_nodes() {
        assert_eq!(chebyshev_nodes(3).unwrap(), vec![0.0, 0.5, 1.0]);
        let five = chebyshev_nodes(5).unwrap();
        let expected = [0.0, 0.146_446_609_406_726_24, 0.5, 0.853_553_390_593_273_8, 1.0];
        for (a, b) in five.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        for n in 3..40 {
            let x = chebyshev_nodes(n).unwrap();
            for k in 0..n {
                assert!((x[k] + x[n - 1 - k] - 1.0).abs() <= 1e-14);
            }
        }
        assert!(matches!(chebyshev_nodes(2), Err(Error::InvalidCount(_))));
    }

    #[test]
    fn chebyshev_cavity_cloud() {
        let c = sample_chebyshev_square(25).unwrap();
        assert_eq!(c.interior.len(), 23 * 23);
        assert_eq!(c.boundary.len(), 96 + 1);
        assert_eq!(c.count_tagged(|t| *t == BcTag::MovingLid), 23);
        assert_eq!(c.count_tagged(|t| *t == BcTag::PressurePin), 1);
        assert!(c
            .boundary
            .iter()
            .filter(|b| b.y == 1.0 && (b.x == 0.0 || b.x == 1.0))
            .all(|b| b.tag == BcTag::NoSlip));
        c.check_membership(&Domain::CavityUnitSquare).unwrap();
        // Denser near the walls: first interior spacing is smaller than the central one.
        let n = chebyshev_nodes(25).unwrap();
        assert!(n[1] - n[0] < n[13] - n[12]);
    }

    #[test]
    fn disk_sampling() {
        let c = sample_disk(1, 4, &mut rng()).unwrap();
        let [x, y] = c.interior[0];
        assert!(x * x + y * y < 1.0);
        for (k, b) in c.boundary.iter().enumerate() {
            assert!((b.x * b.x + b.y * b.y - 1.0).abs() <= 1e-14);
            let angle = b.y.atan2(b.x).rem_euclid(2.0 * PI);
            assert!((angle - k as f64 * PI / 2.0).abs() < 1e-12);
        }
        let c = sample_disk(1605, 300, &mut rng()).unwrap();
        assert_eq!(c.len(), 1905);
        c.check_membership(&Domain::UnitDisk).unwrap();
        assert!(matches!(sample_disk(0, 4, &mut rng()), Err(Error::InvalidCount(_))));
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = sample_disk(50, 10, &mut rng()).unwrap();
        let b = sample_disk(50, 10, &mut rng()).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let w = ShockWindow::new(0.0, 0.05, 0.3).unwrap();
        let d = Domain::rectangle(-1.0, 1.0, 0.0, 0.001).unwrap();
        let a = place_centers(&d, 100, Some(&w), &mut rng()).unwrap();
        let b = place_centers(&d, 100, Some(&w), &mut rng()).unwrap();
        assert_eq!(centers_to_csv(&a), centers_to_csv(&b));
    }

    #[test]
    fn windowed_centers_have_exact_inside_count() {
        let d = Domain::rectangle(-1.0, 1.0, 0.0, 0.001).unwrap();
        let w = ShockWindow::new(0.0, 0.05, 0.3).unwrap();
        let c = place_centers(&d, 1500, Some(&w), &mut rng()).unwrap();
        let inside = c.iter().filter(|p| p[0].abs() <= 0.05).count();
        assert_eq!(inside, 450);
        assert!(c.iter().all(|p| d.contains(*p, MEMBERSHIP_TOL)));

        let single = place_centers(&Domain::rectangle(0.0, 1.0, 0.0, 1.0).unwrap(), 1, None, &mut rng()).unwrap();
        assert_eq!(single.len(), 1);
        assert!((0.0..=1.0).contains(&single[0][0]) && (0.0..=1.0).contains(&single[0][1]));
    }

    #[test]
    fn cavity_centers_bias_toward_walls() {
        let c = place_centers(&Domain::CavityUnitSquare, 300, None, &mut rng()).unwrap();
        assert!(c.iter().all(|p| Domain::CavityUnitSquare.contains(*p, 0.0)));
        let near_wall = |v: f64| !(0.25..0.75).contains(&v);
        let outer = c.iter().filter(|p| near_wall(p[0])).count();
        // Uniform placement would put half the centers in the outer quartiles.
        assert!(outer > 180, "outer-quartile count {outer}");
    }

    #[test]
    fn stenosis_geometry_and_sampling() {
        let s = Stenosis::default();
        assert_eq!(s.half_width(0.1), 0.1);
        assert_eq!(s.half_width(0.9), 0.1);
        assert!((s.half_width(0.5) - 0.06).abs() < 1e-15);
        assert!((s.half_width(0.2) - 0.1).abs() < 1e-15);
        assert!(s.wall_distance([0.1, 0.0]) > 0.099);
        let c = sample_stenosis(&s, 1000, 310, STENOSIS_CLUSTER_SCALE, 0.1, &mut rng()).unwrap();
        assert_eq!(c.interior.len(), 1000);
        assert_eq!(c.boundary.len(), 310);
        let domain = Domain::StenoticChannel(s);
        c.check_membership(&domain).unwrap();
        let near_throat = c.interior.iter().filter(|p| (p[0] - 0.5).abs() < 0.15).count();
        assert!(near_throat > 500, "throat count {near_throat}");
        let centers = place_centers(&domain, 800, None, &mut rng()).unwrap();
        assert!(centers.iter().all(|p| domain.contains(*p, MEMBERSHIP_TOL)));
    }

    #[test]
    fn clustered_inverse_cdf_is_monotone() {
        let s = Stenosis::default();
        let xs: Vec<f64> = (0..=100).map(|k| s.clustered_x(k as f64 / 100.0, 0.15)).collect();
        assert!(xs.windows(2).all(|w| w[1] >= w[0]));
        assert!(xs[0].abs() < 1e-12 && (xs[100] - 1.0).abs() < 1e-12);
        assert!((xs[50] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn block_sampling_layout() {
        let counts = BlockCounts::split(2113, 0.8, 10).unwrap();
        assert_eq!(counts.total(), 2113);
        assert_eq!(counts.interior, 1690);
        let w = ShockWindow::new(0.0, 0.05, 0.3).unwrap();
        let c = sample_space_time_block((-1.0, 1.0), 0.2, 0.001, counts, Some(&w), &mut rng()).unwrap();
        assert_eq!(c.len(), 2113);
        assert_eq!(c.count_tagged(|t| *t == BcTag::InitialCondition), counts.initial);
        let domain = Domain::rectangle(-1.0, 1.0, 0.2, 0.201).unwrap();
        c.check_membership(&domain).unwrap();
        let inside = c.interior.iter().filter(|p| w.contains(p[0])).count();
        assert_eq!(inside, w.inside_count(counts.interior));
    }

    #[test]
    fn csv_round_trip() {
        let c = sample_chebyshev_square(5).unwrap();
        let back = PointCloud::from_csv(&c.to_csv()).unwrap();
        assert_eq!(c, back);
        let s = sample_stenosis(&Stenosis::default(), 10, 20, 0.15, 0.1, &mut rng()).unwrap();
        assert_eq!(s, PointCloud::from_csv(&s.to_csv()).unwrap());
        let centers = vec![[0.25, -1.5], [1e-17, 3.0]];
        assert_eq!(centers_from_csv(&centers_to_csv(&centers)).unwrap(), centers);
        assert!(PointCloud::from_csv("a,b\n").is_err());
        assert!("bogus(1)".parse::<BcTag>().is_err());
    }

    /// Exhaustive window scan used as the reference for `detect_shock_window`.
    fn brute_force_best(xs: &[f64], u: &[f64], size: f64) -> f64 {
        let eps = 1e-9 * (xs[xs.len() - 1] - xs[0]);
        let mut best = f64::NEG_INFINITY;
        for s in 0..xs.len() {
            if xs[s] + size > xs[xs.len() - 1] + eps {
                break;
            }
            let mut sum = 0.0;
            let mut i = s;
            while i + 1 < xs.len() && xs[i + 1] - xs[s] <= size + eps {
                sum += ((u[i + 1] - u[i]) / (xs[i + 1] - xs[i])).abs();
                i += 1;
            }
            best = best.max(sum);
        }
        best
    }

    #[test]
    fn shock_window_on_sine_is_centered() {
        let xs = linspace(-1.0, 1.0, 2001);
        let u: Vec<f64> = xs.iter().map(|x| -(PI * x).sin()).collect();
        let d = detect_shock_window(&xs, &u, 0.1).unwrap();
        assert!(!d.no_gradient);
        assert!(d.window.center.abs() <= 1e-3 + 1e-12, "center {}", d.window.center);
        let best = brute_force_best(&xs, &u, 0.1);
        assert!((d.score - best).abs() <= 1e-9 * best);
    }

    #[test]
    fn shock_window_on_gaussian_hits_inflection() {
        let xs = linspace(-1.0, 1.0, 2001);
        let u: Vec<f64> = xs.iter().map(|x| (-30.0 * x * x).exp()).collect();
        let d = detect_shock_window(&xs, &u, 0.1).unwrap();
        // The slope profile is skewed about its peak, so the best window sits
        // a few grid cells outboard of the inflection point.
        let target = 1.0 / 60f64.sqrt();
        assert!((d.window.center.abs() - target).abs() <= 5e-3, "center {}", d.window.center);
        let best = brute_force_best(&xs, &u, 0.1);
        assert!((d.score - best).abs() <= 1e-9 * best);
    }

    #[test]
    fn shock_window_constant_profile() {
        let xs = linspace(-1.0, 1.0, 101);
        let d = detect_shock_window(&xs, &vec![0.0; 101], 0.1).unwrap();
        assert!(d.no_gradient);
        assert_eq!(d.window.center, 0.0);
        assert!(detect_shock_window(&xs[..2], &[0.0, 1.0], 0.1).is_err());
        assert!(detect_shock_window(&xs, &vec![0.0; 101], 5.0).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn shock_window_matches_brute_force(
            n in 3usize..400,
            size_frac in 0.02f64..0.9,
            coeffs in proptest::collection::vec(-3.0f64..3.0, 4),
            jitter in 0u64..1000,
        ) {
            let xs = linspace(-1.0, 1.0, n);
            let u: Vec<f64> = xs.iter().enumerate().map(|(i, x)| {
                coeffs[0] * (3.0 * x).sin() + coeffs[1] * x * x + coeffs[2] * (coeffs[3] * x).tanh()
                    + 1e-3 * (((i as u64 * 2654435761 + jitter) % 97) as f64)
            }).collect();
            let size = size_frac * 2.0;
            let d = detect_shock_window(&xs, &u, size).unwrap();
            let best = brute_force_best(&xs, &u, size);
            proptest::prop_assert!((d.score - best).abs() <= 1e-9 * best.abs().max(1.0));
        }
    }
}
