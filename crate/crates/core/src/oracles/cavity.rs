//! Steady lid-driven cavity in streamfunction-vorticity form.
//!
//! Second-order central differences on a uniform grid, Thom's wall
//! vorticity, and Newton iterations on the coupled `(psi, omega)` system with
//! a banded direct solve. Velocities are recovered as `u = psi_y`,
//! `v = -psi_x`.

use std::os::raw::c_int;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::field::{GridField, Provenance};
use crate::error::{Error, Result};
use crate::geometry::linspace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityOracleConfig {
    pub re: f64,
    pub n_grid: usize,
    /// Newton step length.
    pub relaxation: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the max-norm of the Newton update.
    pub tol: f64,
}

impl CavityOracleConfig {
    pub fn new(re: f64) -> Self {
        CavityOracleConfig {
            re,
            n_grid: 129,
            relaxation: 1.0,
            max_iterations: 50,
            tol: 1e-10,
        }
    }

    fn cache_key(&self) -> String {
        let text = format!(
            "cavity_fd v1 re={:e} n={} relax={:e} iters={} tol={:e}",
            self.re, self.n_grid, self.relaxation, self.max_iterations, self.tol
        );
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CavityOracle {
    pub config: CavityOracleConfig,
    pub psi: Array2<f64>,
    pub omega: Array2<f64>,
    /// Grid with fields `u`, `v`, `psi`.
    pub field: GridField,
    pub iterations: usize,
    pub final_update: f64,
}

impl CavityOracle {
    /// `(y, u(0.5, y))` along the vertical centerline.
    pub fn u_centerline(&self) -> (Vec<f64>, Vec<f64>) {
        let u = self.field.field("u").expect("oracle grid carries u");
        let c = (self.field.xs.len() - 1) / 2;
        (self.field.ys.clone(), u.column(c).to_vec())
    }

    /// `(x, v(x, 0.5))` along the horizontal centerline.
    pub fn v_centerline(&self) -> (Vec<f64>, Vec<f64>) {
        let v = self.field.field("v").expect("oracle grid carries v");
        let c = (self.field.ys.len() - 1) / 2;
        (self.field.xs.clone(), v.row(c).to_vec())
    }
}

struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl Banded {
    fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Banded {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r + self.ku >= c && c + self.kl >= r);
        self.ab[self.kl + self.ku + r - c + c * self.ldab] += v;
    }

    fn solve(mut self, rhs: &mut [f64]) -> Result<()> {
        let as_int = |v: usize| c_int::try_from(v).map_err(|_| Error::Oracle("banded system too large".into()));
        let (n, kl, ku, ldab) = (as_int(self.n)?, as_int(self.kl)?, as_int(self.ku)?, as_int(self.ldab)?);
        let mut ipiv = vec![0 as c_int; self.n];
        let mut info: c_int = 0;
        let nrhs: c_int = 1;
        // SAFETY: ab holds ldab * n entries, ipiv n, rhs n.
        unsafe {
            lapack_sys::dgbsv_(&n, &kl, &ku, &nrhs, self.ab.as_mut_ptr(), &ldab, ipiv.as_mut_ptr(), rhs.as_mut_ptr(), &n, &mut info);
        }
        if info != 0 {
            return Err(Error::Lapack { routine: "dgbsv", info });
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Nb {
    Interior(usize),
    /// Wall node with its tangential wall speed.
    Wall(f64),
}

/// Newton system at iterate `x` on an `m x m` interior grid: returns the
/// Jacobian and the negated residual.
fn newton_system(m: usize, nu: f64, x: &[f64]) -> (Banded, Vec<f64>) {
    let h = 1.0 / (m + 1) as f64;
    let h2 = h * h;
    let nunk = 2 * m * m;
    let node = |i: usize, j: usize| j * m + i;
    let neighbors = |i: usize, j: usize| -> [Nb; 4] {
        // East, west, north, south.
        [
            if i + 1 < m { Nb::Interior(node(i + 1, j)) } else { Nb::Wall(0.0) },
            if i > 0 { Nb::Interior(node(i - 1, j)) } else { Nb::Wall(0.0) },
            if j + 1 < m { Nb::Interior(node(i, j + 1)) } else { Nb::Wall(1.0) },
            if j > 0 { Nb::Interior(node(i, j - 1)) } else { Nb::Wall(0.0) },
        ]
    };
    let psi = |p: usize| x[2 * p];
    let omega_of = |nb: Nb, p: usize| match nb {
        Nb::Interior(q) => x[2 * q + 1],
        Nb::Wall(speed) => -2.0 * psi(p) / h2 - 2.0 * speed / h,
    };
    let psi_of = |nb: Nb| match nb {
        Nb::Interior(q) => psi(q),
        Nb::Wall(_) => 0.0,
    };

    let mut jac = Banded::new(nunk, 2 * m + 1, 2 * m + 1);
    let mut rhs = vec![0.0; nunk];
    for j in 0..m {
        for i in 0..m {
            let p = node(i, j);
            let nbs = neighbors(i, j);
            let [e, w, nn, s] = nbs;
            let (rp, rw) = (2 * p, 2 * p + 1);

            // Streamfunction Poisson equation.
            let lap_sum: f64 = nbs.iter().map(|&nb| psi_of(nb)).sum();
            rhs[rp] = -((4.0 * psi(p) - lap_sum) / h2 - x[rw]);
            jac.add(rp, rp, 4.0 / h2);
            jac.add(rp, rw, -1.0);
            for nb in nbs {
                if let Nb::Interior(q) = nb {
                    jac.add(rp, 2 * q, -1.0 / h2);
                }
            }

            // Vorticity transport.
            let u = (psi_of(nn) - psi_of(s)) / (2.0 * h);
            let v = -(psi_of(e) - psi_of(w)) / (2.0 * h);
            let (oe, ow, on, os) = (omega_of(e, p), omega_of(w, p), omega_of(nn, p), omega_of(s, p));
            let op = x[rw];
            let f = u * (oe - ow) / (2.0 * h) + v * (on - os) / (2.0 * h) - nu * (oe + ow + on + os - 4.0 * op) / h2;
            rhs[rw] = -f;
            jac.add(rw, rw, 4.0 * nu / h2);
            let coef = [
                u / (2.0 * h) - nu / h2,
                -u / (2.0 * h) - nu / h2,
                v / (2.0 * h) - nu / h2,
                -v / (2.0 * h) - nu / h2,
            ];
            for (nb, c) in nbs.iter().zip(coef) {
                match *nb {
                    Nb::Interior(q) => jac.add(rw, 2 * q + 1, c),
                    Nb::Wall(_) => jac.add(rw, rp, c * (-2.0 / h2)),
                }
            }
            let dpsi = [
                -(on - os) / (4.0 * h2),
                (on - os) / (4.0 * h2),
                (oe - ow) / (4.0 * h2),
                -(oe - ow) / (4.0 * h2),
            ];
            for (nb, c) in nbs.iter().zip(dpsi) {
                if let Nb::Interior(q) = *nb {
                    jac.add(rw, 2 * q, c);
                }
            }
        }
    }
    (jac, rhs)
}

pub fn cavity_fd(cfg: CavityOracleConfig) -> Result<CavityOracle> {
    let n = cfg.n_grid;
    if n < 65 {
        return Err(Error::Oracle(format!("n_grid must be at least 65, got {n}")));
    }
    if !(cfg.re > 0.0 && cfg.re <= 200.0) {
        return Err(Error::Oracle(format!("Re must lie in (0, 200], got {}", cfg.re)));
    }
    if !(cfg.relaxation > 0.0 && cfg.relaxation <= 1.0) {
        return Err(Error::Oracle(format!("relaxation must lie in (0, 1], got {}", cfg.relaxation)));
    }
    let m = n - 2;
    let h = 1.0 / (n - 1) as f64;
    let h2 = h * h;
    let nu = 1.0 / cfg.re;
    let node = |i: usize, j: usize| j * m + i;

    let mut x = vec![0.0; 2 * m * m];
    let mut iterations = 0;
    let mut final_update = f64::INFINITY;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let (jac, mut rhs) = newton_system(m, nu, &x);
        jac.solve(&mut rhs)?;
        let mut scale = 1.0f64;
        final_update = 0.0;
        for (xi, di) in x.iter_mut().zip(&rhs) {
            *xi += cfg.relaxation * di;
            final_update = if di.is_finite() { final_update.max(di.abs()) } else { f64::NAN };
            scale = scale.max(xi.abs());
        }
        if !final_update.is_finite() {
            return Err(Error::Oracle(format!("Newton iteration {iterations} produced non-finite values")));
        }
        if final_update <= cfg.tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Oracle(format!(
            "cavity Newton did not converge after {iterations} iterations (last update {final_update:e})"
        )));
    }

    let mut psi = Array2::zeros((n, n));
    let mut omega = Array2::zeros((n, n));
    for j in 0..m {
        for i in 0..m {
            psi[[j + 1, i + 1]] = x[2 * node(i, j)];
            omega[[j + 1, i + 1]] = x[2 * node(i, j) + 1];
        }
    }
    for k in 1..n - 1 {
        omega[[n - 1, k]] = -2.0 * psi[[n - 2, k]] / h2 - 2.0 / h;
        omega[[0, k]] = -2.0 * psi[[1, k]] / h2;
        omega[[k, 0]] = -2.0 * psi[[k, 1]] / h2;
        omega[[k, n - 1]] = -2.0 * psi[[k, n - 2]] / h2;
    }
    let mut u = Array2::zeros((n, n));
    let mut v = Array2::zeros((n, n));
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            u[[j, i]] = (psi[[j + 1, i]] - psi[[j - 1, i]]) / (2.0 * h);
            v[[j, i]] = -(psi[[j, i + 1]] - psi[[j, i - 1]]) / (2.0 * h);
        }
    }
    // Lid; both top corners keep the wall value.
    for i in 1..n - 1 {
        u[[n - 1, i]] = 1.0;
    }
    let axis = linspace(0.0, 1.0, n);
    let mut field = GridField::new(axis.clone(), axis, Provenance::Fd)?;
    field.push("u", u)?;
    field.push("v", v)?;
    field.push("psi", psi.clone())?;
    Ok(CavityOracle {
        config: cfg,
        psi,
        omega,
        field,
        iterations,
        final_update,
    })
}

/// Grid `(u, v, psi)` from `cache_dir` when present, otherwise computed and
/// stored there under a name derived from the configuration hash.
pub fn cavity_fd_cached(cfg: CavityOracleConfig, cache_dir: Option<&Path>) -> Result<GridField> {
    let Some(dir) = cache_dir else {
        return Ok(cavity_fd(cfg)?.field);
    };
    let path = dir.join(format!("cavity_fd_{}.csv", cfg.cache_key()));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(grid) = GridField::from_csv(&text, Provenance::Fd) {
            return Ok(grid);
        }
    }
    let grid = cavity_fd(cfg)?.field;
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension("csv.tmp");
    std::fs::write(&tmp, grid.to_csv())?;
    std::fs::rename(&tmp, &path)?;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = 4;
        let nunk = 2 * m * m;
        let x: Vec<f64> = (0..nunk).map(|k| 0.01 * ((k * 7 % 11) as f64 - 5.0)).collect();
        let nu = 0.05;
        let (jac, minus_f) = newton_system(m, nu, &x);
        for c in 0..nunk {
            let step = 1e-6;
            let mut xp = x.clone();
            xp[c] += step;
            let (_, minus_fp) = newton_system(m, nu, &xp);
            for r in 0..nunk {
                let fd = -(minus_fp[r] - minus_f[r]) / step;
                let in_band = r + jac.ku >= c && c + jac.kl >= r;
                let an = if in_band { jac.ab[jac.kl + jac.ku + r - c + c * jac.ldab] } else { 0.0 };
                assert!((fd - an).abs() <= 1e-4 * (1.0 + an.abs()), "J[{r},{c}]: analytic {an}, fd {fd}");
            }
        }
    }

    #[test]
    fn newton_step_matches_dense_solve() {
        for m in [4usize, 9, 20] {
            let nunk = 2 * m * m;
            let x: Vec<f64> = (0..nunk).map(|k| 0.01 * ((k * 7 % 11) as f64 - 5.0)).collect();
            let (jac, rhs) = newton_system(m, 0.05, &x);
            let dense = ndarray::Array2::from_shape_fn((nunk, nunk), |(r, c)| {
                if r + jac.ku >= c && c + jac.kl >= r { jac.ab[jac.kl + jac.ku + r - c + c * jac.ldab] } else { 0.0 }
            });
            let reference = crate::lsq::lstsq(dense.view(), ndarray::ArrayView1::from(&rhs), 1e-14).unwrap().coefficients;
            let mut banded = rhs.clone();
            jac.solve(&mut banded).unwrap();
            let err = banded.iter().zip(reference.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = reference.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            assert!(err <= 1e-8 * scale, "m = {m}: {err} vs {scale}");
        }
    }

    #[test]
    fn banded_random() {
        for (n, kl) in [(32usize, 9usize), (162, 19), (162, 5), (50, 20)] {
            let mut b = Banded::new(n, kl, kl);
            let mut dense = ndarray::Array2::<f64>::zeros((n, n));
            for r in 0..n {
                for c in r.saturating_sub(kl)..(r + kl + 1).min(n) {
                    let v = if r == c { 10.0 } else { (((r * 31 + c * 17) % 13) as f64 - 6.0) / 7.0 };
                    b.add(r, c, v);
                    dense[[r, c]] = v;
                }
            }
            let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let mut rhs = dense.dot(&ndarray::ArrayView1::from(&x)).to_vec();
            b.solve(&mut rhs).unwrap();
            let err = rhs.iter().zip(&x).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "n = {n}, kl = {kl}: {err}");
        }
    }

    #[test]
    fn banded_solve_matches_dense_system() {
        // Tridiagonal 4 x 4 with known solution.
        let mut b = Banded::new(4, 1, 1);
        for i in 0..4 {
            b.add(i, i, 4.0);
            if i > 0 {
                b.add(i, i - 1, -1.0);
            }
            if i < 3 {
                b.add(i, i + 1, -2.0);
            }
        }
        let x = [1.0, 2.0, -1.0, 0.5];
        let mut rhs = vec![4.0 * 1.0 - 2.0 * 2.0, -1.0 + 8.0 + 2.0, -2.0 - 4.0 - 1.0, 1.0 + 2.0];
        b.solve(&mut rhs).unwrap();
        for (a, e) in rhs.iter().zip(x) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = CavityOracleConfig::new(10.0);
        c.n_grid = 33;
        assert!(cavity_fd(c).is_err());
        assert!(cavity_fd(CavityOracleConfig::new(500.0)).is_err());
    }

    fn asymmetry(o: &CavityOracle) -> f64 {
        let u = o.field.field("u").unwrap();
        let v = o.field.field("v").unwrap();
        let n = o.config.n_grid;
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((u[[j, i]] - u[[j, n - 1 - i]]).abs()).max((v[[j, i]] + v[[j, n - 1 - i]]).abs());
            }
        }
        worst
    }

    #[test]
    fn stokes_limit_is_mirror_symmetric_and_solenoidal() {
        let run = |re: f64| {
            let mut cfg = CavityOracleConfig::new(re);
            cfg.n_grid = 65;
            cavity_fd(cfg).unwrap()
        };
        let (a, b) = (run(0.01), run(0.001));
        // Inertia breaks the mirror symmetry linearly in Re.
        let (sa, sb) = (asymmetry(&a), asymmetry(&b));
        assert!(sb <= 1e-5 && sb <= 0.15 * sa, "asymmetry {sa} at Re 0.01, {sb} at Re 0.001");
        let u = b.field.field("u").unwrap();
        let v = b.field.field("v").unwrap();
        let n = b.config.n_grid;
        let h = 1.0 / (n - 1) as f64;
        for j in 2..n - 2 {
            for i in 2..n - 2 {
                let div = (u[[j, i + 1]] - u[[j, i - 1]]) / (2.0 * h) + (v[[j + 1, i]] - v[[j - 1, i]]) / (2.0 * h);
                assert!(div.abs() <= 1e-6, "divergence {div}");
            }
        }
    }

    #[test]
    fn re100_centerline_has_return_flow() {
        let o = cavity_fd(CavityOracleConfig::new(100.0)).unwrap();
        let (_, u) = o.u_centerline();
        let umin = u.iter().cloned().fold(f64::INFINITY, f64::min);
        // Ghia et al. report min u(0.5, y) = -0.2109 on a 129 grid.
        assert!((umin + 0.2109).abs() < 0.01, "min u = {umin}");
    }

    #[test]
    fn cache_round_trip() {
        let mut cfg = CavityOracleConfig::new(1.0);
        cfg.n_grid = 65;
        let dir = tempfile::tempdir().unwrap();
        let a = cavity_fd_cached(cfg, Some(dir.path())).unwrap();
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        let b = cavity_fd_cached(cfg, Some(dir.path())).unwrap();
        assert_eq!(a, b);
    }
}
