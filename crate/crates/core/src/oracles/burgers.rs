//! Finite-difference viscous Burgers on `[-1, 1]` with zero Dirichlet ends.
//!
//! Crank-Nicolson diffusion with an explicit Engquist-Osher flux for the
//! advection term. The flux is even under `(a, b) -> (-b, -a)`, so odd
//! initial data stay odd.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::linspace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurgersOracleConfig {
    pub nx: usize,
    pub cfl: f64,
}

impl Default for BurgersOracleConfig {
    fn default() -> Self {
        BurgersOracleConfig { nx: 1601, cfl: 0.4 }
    }
}

#[derive(Debug, Clone)]
pub struct BurgersOracle {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    /// `u[[n, i]]` at `(x[i], t[n])`.
    pub u: Array2<f64>,
}

impl BurgersOracle {
    pub fn dx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    /// Profile at time `t`, linear in time between stored steps.
    pub fn profile(&self, t: f64) -> Result<Vec<f64>> {
        let (t0, t1) = (self.t[0], self.t[self.t.len() - 1]);
        if t < t0 - 1e-12 || t > t1 + 1e-12 {
            return Err(Error::Oracle(format!("time {t} outside oracle range [{t0}, {t1}]")));
        }
        let n = self.t.partition_point(|&s| s <= t).saturating_sub(1).min(self.t.len() - 2);
        let w = ((t - self.t[n]) / (self.t[n + 1] - self.t[n])).clamp(0.0, 1.0);
        Ok(self
            .u
            .row(n)
            .iter()
            .zip(self.u.row(n + 1).iter())
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect())
    }

    /// Value at `(x, t)`, linear in both directions.
    pub fn value(&self, x: f64, t: f64) -> Result<f64> {
        let profile = self.profile(t)?;
        interp_linear(&self.x, &profile, x)
    }
}

pub(crate) fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> Result<f64> {
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    if x < lo - 1e-12 || x > hi + 1e-12 {
        return Err(Error::Metric(format!("x = {x} outside [{lo}, {hi}]")));
    }
    let i = xs.partition_point(|&s| s <= x).saturating_sub(1).min(xs.len() - 2);
    let w = ((x - xs[i]) / (xs[i + 1] - xs[i])).clamp(0.0, 1.0);
    Ok((1.0 - w) * ys[i] + w * ys[i + 1])
}

/// Step count that keeps `dt * max|u| / dx <= cfl` over `[0, t_end]`.
pub fn cfl_steps(u_max: f64, dx: f64, t_end: f64, cfl: f64) -> usize {
    let dt = cfl * dx / u_max.max(1e-12);
    ((t_end / dt).ceil() as usize).max(1)
}

fn eo_flux(a: f64, b: f64) -> f64 {
    let (p, m) = (a.max(0.0), b.min(0.0));
    0.5 * (p * p + m * m)
}

/// Integrates from `t = 0` to `t_end` in `nt` steps (or the CFL-derived count
/// when `nt` is `None`) and stores every step.
pub fn burgers_fd(ic: &dyn Fn(f64) -> f64, nu: f64, cfg: BurgersOracleConfig, nt: Option<usize>, t_end: f64) -> Result<BurgersOracle> {
    let nx = cfg.nx;
    if nx < 201 || nx % 2 == 0 {
        return Err(Error::Oracle(format!("nx must be odd and at least 201, got {nx}")));
    }
    if !(nu >= 0.0 && t_end > 0.0 && cfg.cfl > 0.0 && cfg.cfl <= 1.0) {
        return Err(Error::Oracle(format!("bad parameters nu = {nu}, t_end = {t_end}, cfl = {}", cfg.cfl)));
    }
    let x = linspace(-1.0, 1.0, nx);
    let dx = 2.0 / (nx - 1) as f64;
    let mut u: Vec<f64> = x.iter().map(|&v| ic(v)).collect();
    u[0] = 0.0;
    u[nx - 1] = 0.0;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Oracle("initial profile is not finite".into()));
    }
    let u0_max = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let nt = nt.unwrap_or_else(|| cfl_steps(u0_max, dx, t_end, cfg.cfl));
    let dt = t_end / nt as f64;
    if dt * u0_max / dx > 1.0 {
        return Err(Error::Oracle(format!("time step violates CFL: {}", dt * u0_max / dx)));
    }

    let m = nx - 2;
    let r = 0.5 * nu * dt / (dx * dx);
    let mut history = Array2::zeros((nt + 1, nx));
    history.row_mut(0).assign(&ndarray::ArrayView1::from(&u));
    let mut flux = vec![0.0; nx - 1];
    let mut rhs = vec![0.0; m];
    let mut c_prime = vec![0.0; m];
    let mut next = vec![0.0; nx];
    let limit = 10.0 * u0_max.max(1e-300);

    for n in 1..=nt {
        for (i, f) in flux.iter_mut().enumerate() {
            *f = eo_flux(u[i], u[i + 1]);
        }
        for k in 0..m {
            let i = k + 1;
            rhs[k] = u[i] - dt / dx * (flux[i] - flux[i - 1]) + r * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
        }
        // Thomas solve of (1 + 2r) v_i - r (v_{i-1} + v_{i+1}) = rhs_i.
        let (a, b) = (-r, 1.0 + 2.0 * r);
        c_prime[0] = a / b;
        rhs[0] /= b;
        for k in 1..m {
            let denom = b - a * c_prime[k - 1];
            c_prime[k] = a / denom;
            rhs[k] = (rhs[k] - a * rhs[k - 1]) / denom;
        }
        for k in (0..m - 1).rev() {
            rhs[k] -= c_prime[k] * rhs[k + 1];
        }
        next[0] = 0.0;
        next[nx - 1] = 0.0;
        next[1..nx - 1].copy_from_slice(&rhs);
        std::mem::swap(&mut u, &mut next);
        let peak = u.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if !peak.is_finite() || peak > limit {
            return Err(Error::Oracle(format!("instability at step {n}: max |u| = {peak}")));
        }
        history.row_mut(n).assign(&ndarray::ArrayView1::from(&u));
    }
    Ok(BurgersOracle {
        x,
        t: (0..=nt).map(|n| if n == nt { t_end } else { n as f64 * dt }).collect(),
        u: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const NU: f64 = 0.01 / PI;

    #[test]
    fn zero_stays_zero() {
        let o = burgers_fd(&|_| 0.0, NU, BurgersOracleConfig { nx: 201, cfl: 0.4 }, Some(10), 0.1).unwrap();
        assert!(o.u.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sine_stays_odd_and_shock_is_centered() {
        let o = burgers_fd(&|x| -(PI * x).sin(), NU, BurgersOracleConfig::default(), None, 0.5).unwrap();
        let c = (o.x.len() - 1) / 2;
        assert!(o.u.column(c).iter().all(|v| v.abs() <= 1e-10));
        let last = o.profile(0.5).unwrap();
        let dx = o.dx();
        let (imax, _) = last
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i, ((w[1] - w[0]) / dx).abs()))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        let xmid = 0.5 * (o.x[imax] + o.x[imax + 1]);
        assert!(xmid.abs() <= dx, "shock at {xmid}");
        // Odd symmetry of the full profile.
        for i in 0..o.x.len() {
            assert!((last[i] + last[o.x.len() - 1 - i]).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_grids_and_unstable_steps() {
        assert!(burgers_fd(&|_| 0.0, NU, BurgersOracleConfig { nx: 200, cfl: 0.4 }, None, 0.1).is_err());
        assert!(burgers_fd(&|_| 0.0, NU, BurgersOracleConfig { nx: 101, cfl: 0.4 }, None, 0.1).is_err());
        assert!(burgers_fd(&|x| -(PI * x).sin(), NU, BurgersOracleConfig { nx: 201, cfl: 0.4 }, Some(1), 0.5).is_err());
    }

    #[test]
    fn refinement_is_first_order_in_smooth_regions() {
        let ic = |x: f64| (-30.0 * x * x).exp();
        let t_end = 0.1;
        let coarse = burgers_fd(&ic, NU, BurgersOracleConfig { nx: 401, cfl: 0.4 }, None, t_end).unwrap();
        let fine = burgers_fd(&ic, NU, BurgersOracleConfig { nx: 801, cfl: 0.4 }, None, t_end).unwrap();
        let pc = coarse.profile(t_end).unwrap();
        let pf = fine.profile(t_end).unwrap();
        let dx = coarse.dx();
        let diff = coarse
            .x
            .iter()
            .enumerate()
            .filter(|(_, x)| x.abs() > 0.6)
            .map(|(i, _)| (pc[i] - pf[2 * i]).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 2.0 * dx, "refinement change {diff} vs dx {dx}");
    }

    #[test]
    fn mass_is_nearly_conserved() {
        let ic = |x: f64| (-30.0 * x * x).exp();
        let o = burgers_fd(&ic, NU, BurgersOracleConfig { nx: 801, cfl: 0.4 }, None, 0.2).unwrap();
        let dx = o.dx();
        let mass = |row: &[f64]| row.iter().sum::<f64>() * dx;
        let m0 = mass(&o.profile(0.0).unwrap());
        let m1 = mass(&o.profile(0.2).unwrap());
        assert!((m1 - m0).abs() / m0 < 1e-3, "{m0} -> {m1}");
    }
}
