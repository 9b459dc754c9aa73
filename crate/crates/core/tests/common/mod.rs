#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pielm::assembly::{assemble_navier_stokes, AssemblyOptions, FlowMode};
use pielm::basis::KernelSet;
use pielm::geometry::{Point, PointCloud};
use pielm::lsq::lstsq;
use pielm::runner::{Case, RunConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One kernel with a center in the unit square and widths in [0.05, 0.5],
/// plus a point within three widths of the center.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (KernelSet, Point) {
    let c = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
    let (sx, sy) = (rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5));
    let p = [c[0] + sx * rng.gen_range(-3.0..3.0), c[1] + sy * rng.gen_range(-3.0..3.0)];
    (KernelSet::from_gaussians(&[c], &[sx], &[sy]).unwrap(), p)
}

/// Fourth-order central differences of `f` along `dir` with step `h`.
fn d1(f: &dyn Fn(Point) -> f64, p: Point, dir: [f64; 2], h: f64) -> f64 {
    let at = |s: f64| f([p[0] + s * dir[0], p[1] + s * dir[1]]);
    (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
}

fn d2(f: &dyn Fn(Point) -> f64, p: Point, dir: [f64; 2], h: f64) -> f64 {
    let at = |s: f64| f([p[0] + s * dir[0], p[1] + s * dir[1]]);
    (-at(2.0 * h) + 16.0 * at(h) - 30.0 * at(0.0) + 16.0 * at(-h) - at(-2.0 * h)) / (12.0 * h * h)
}

/// Relative error measured against the kernel's derivative scale: the
/// larger of the two values and `phi_max / sigma^order`, so that sign
/// changes of a derivative do not produce meaningless ratios.
fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(scale)
}

/// Worst relative error of the analytic first and second derivatives
/// against finite differences over `pairs` random (kernel, point) pairs.
pub fn derivative_errors(seed: u64, pairs: usize) -> (f64, f64) {
    let mut r = rng(seed);
    let (mut first, mut second) = (0.0f64, 0.0f64);
    for _ in 0..pairs {
        let (k, p) = random_pair(&mut r);
        let (sx, sy) = (k.sigma_x()[0], k.sigma_y()[0]);
        let f = |q: Point| k.phi(0, q);
        let e = k.eval(0, p);
        let (hx, hy) = (1e-2 * sx, 1e-2 * sy);
        first = first
            .max(rel(e.dx, d1(&f, p, [1.0, 0.0], hx), 1e-3 / sx))
            .max(rel(e.dy, d1(&f, p, [0.0, 1.0], hy), 1e-3 / sy));
        second = second
            .max(rel(e.dxx, d2(&f, p, [1.0, 0.0], hx), 1e-3 / (sx * sx)))
            .max(rel(e.dyy, d2(&f, p, [0.0, 1.0], hy), 1e-3 / (sy * sy)));
    }
    (first, second)
}

/// Worst relative mismatch between the viscous entry of an assembled
/// Stokes x-momentum row and `-(1/Re)` times a finite-difference Laplacian.
pub fn viscous_entry_error(seed: u64, pairs: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let (k, p) = random_pair(&mut r);
        let re = 10f64.powf(r.gen_range(-2.0..2.0));
        let cloud = PointCloud {
            interior: vec![p],
            boundary: Vec::new(),
        };
        let sys = assemble_navier_stokes(&k, &cloud, FlowMode::Stokes, 1.0 / re, AssemblyOptions::default()).unwrap();
        let entry = sys.a[[1, 0]];
        let (sx, sy) = (k.sigma_x()[0], k.sigma_y()[0]);
        let f = |q: Point| k.phi(0, q);
        let lap = d2(&f, p, [1.0, 0.0], 1e-2 * sx) + d2(&f, p, [0.0, 1.0], 1e-2 * sy);
        let scale = 1e-3 / (sx.min(sy).powi(2) * re);
        worst = worst.max(rel(entry, -lap / re, scale));
    }
    worst
}

/// Random `m x n` system of prescribed rank together with an orthonormal
/// basis of its null space (columns).
pub struct RandomSystem {
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    pub rank: usize,
    pub null_basis: Array2<f64>,
}

fn orthonormal(n: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = Array2::from_shape_fn((n, n), |_| r.gen_range(-1.0f64..1.0));
    for j in 0..n {
        for _ in 0..2 {
            for i in 0..j {
                let d = q.column(i).dot(&q.column(j));
                let qi = q.column(i).to_owned();
                q.column_mut(j).scaled_add(-d, &qi);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    q
}

pub fn random_system(r: &mut ChaCha8Rng, m: usize, n: usize, rank: usize) -> RandomSystem {
    let q = orthonormal(n, r);
    let g = Array2::from_shape_fn((m, rank), |_| r.gen_range(-1.0..1.0));
    let row_space = q.slice(ndarray::s![.., ..rank]).to_owned();
    let a = g.dot(&row_space.t());
    let b = Array1::from_shape_fn(m, |_| r.gen_range(-1.0..1.0));
    RandomSystem {
        a,
        b,
        rank,
        null_basis: q.slice(ndarray::s![.., rank..]).to_owned(),
    }
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

pub struct LsqCheck {
    /// Largest relative drop of the residual under perturbation (negative
    /// values mean the residual only grew).
    pub worst_decrease: f64,
    /// Null-space component of the solution relative to its norm.
    pub null_fraction: f64,
    pub rank_ok: bool,
    pub deterministic: bool,
}

pub fn check_lsq(sys: &RandomSystem, r: &mut ChaCha8Rng, trials: usize) -> LsqCheck {
    let sol = lstsq(sys.a.view(), sys.b.view(), 1e-10).unwrap();
    let again = lstsq(sys.a.view(), sys.b.view(), 1e-10).unwrap();
    let c = &sol.coefficients;
    let base = norm(&(sys.a.dot(c) - &sys.b));
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let mut d = Array1::from_shape_fn(c.len(), |_| r.gen_range(-1.0..1.0));
        let scale = 1e-6 * norm(c).max(1e-300) / norm(&d);
        d.mapv_inplace(|v| v * scale);
        let res = norm(&(sys.a.dot(&(c + &d)) - &sys.b));
        worst = worst.max((base - res) / base.max(1e-300));
    }
    let null = if sys.null_basis.ncols() > 0 {
        norm(&sys.null_basis.t().dot(c)) / norm(c).max(1e-300)
    } else {
        0.0
    };
    LsqCheck {
        worst_decrease: worst,
        null_fraction: null,
        rank_ok: sol.report.effective_rank == sys.rank,
        deterministic: sol.coefficients == again.coefficients,
    }
}

/// Runs the least-squares properties over `count` random systems, every
/// third of them rank deficient. Returns the worst decrease and null
/// fraction, and whether every rank and repeat check held.
pub fn lsq_properties(seed: u64, count: usize) -> (f64, f64, bool) {
    let mut r = rng(seed);
    let (mut dec, mut null, mut ok) = (f64::NEG_INFINITY, 0.0f64, true);
    for i in 0..count {
        let m = r.gen_range(4..60);
        let n = r.gen_range(2..50);
        let full = m.min(n);
        let rank = if i % 3 == 0 { full } else { r.gen_range(1..=full) };
        let sys = random_system(&mut r, m, n, rank);
        let c = check_lsq(&sys, &mut r, 20);
        dec = dec.max(c.worst_decrease);
        null = null.max(c.null_fraction);
        ok &= c.rank_ok && c.deterministic;
    }
    (dec, null, ok)
}

/// Small settings for every case, used for plumbing and determinism checks.
pub fn tiny(case: Case, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(case, seed);
    cfg.poisson.n_kernels = 120;
    cfg.poisson.n_interior = 200;
    cfg.poisson.n_boundary = 60;
    cfg.poisson.probe_grid = 21;

    let b = &mut cfg.burgers;
    b.n_kernels = 60;
    b.points_per_block = 150;
    b.boundary_per_side = 5;
    b.blocks = 4;
    b.dt = 0.005;
    b.snapshot_times = vec![0.01, 0.02];
    b.scan_points = 401;
    b.probe_points = 201;
    b.oracle_nx = 401;

    let c = &mut cfg.cavity;
    c.n_kernels = 40;
    c.chebyshev_per_axis = 9;
    c.re_target = 2.0;
    c.delta = 1.0;
    c.snapshots = vec![1.0];
    c.oracle_grid = 65;
    c.probe_grid = 11;

    let s = &mut cfg.stenosis;
    s.n_kernels = 50;
    s.n_interior = 120;
    s.n_boundary = 60;
    s.re_target = 20.0;
    s.delta = 10.0;
    s.snapshots = vec![10.0];
    s.probe_points = 200;
    s.refine_factor = 1.2;
    cfg
}

