//! Minimum-norm least squares through a truncated SVD.

use std::os::raw::c_int;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::assembly::ResidualSystem;
use crate::error::{Error, Result};

// The system OpenBLAS also provides LAPACK.
#[link(name = "openblas")]
extern "C" {}

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsqReport {
    pub relative_residual: f64,
    pub effective_rank: usize,
    pub sigma_max: f64,
    pub sigma_min_kept: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Wall-clock seconds spent in the factorization.
    pub solve_time: f64,
}

#[derive(Debug, Clone)]
pub struct LsqSolution {
    pub coefficients: Array1<f64>,
    pub report: LsqReport,
}

/// Solves `min ||A c - b||` and returns the minimum-norm minimizer, treating
/// singular values below `rank_tol * sigma_max` as zero.
pub fn lstsq(a: ArrayView2<f64>, b: ArrayView1<f64>, rank_tol: f64) -> Result<LsqSolution> {
    backend_check()?;
    lstsq_raw(a, b, rank_tol)
}

/// Solves a known 90 x 80 system once per process. Some OpenBLAS builds pick
/// kernels for newer CPUs that silently return wrong factorizations; setting
/// `OPENBLAS_CORETYPE` (e.g. `SkylakeX` or `Haswell`) avoids them.
pub fn backend_check() -> Result<()> {
    static CHECK: OnceLock<std::result::Result<(), String>> = OnceLock::new();
    CHECK
        .get_or_init(|| {
            let (m, n) = (90, 80);
            let a = Array2::from_shape_fn((m, n), |(i, j)| if i == j { 5.0 } else { ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5 });
            let x = Array1::from_iter((0..n).map(|i| (i as f64).sin()));
            let b = a.dot(&x);
            let sol = lstsq_raw(a.view(), b.view(), 1e-14).map_err(|e| e.to_string())?;
            let err = (&sol.coefficients - &x).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if err <= 1e-9 {
                Ok(())
            } else {
                let core = std::env::var("OPENBLAS_CORETYPE").unwrap_or_else(|_| "auto".into());
                Err(format!("LAPACK self-check error {err:e} (OPENBLAS_CORETYPE = {core}); try OPENBLAS_CORETYPE=Haswell"))
            }
        })
        .clone()
        .map_err(Error::Backend)
}

fn lstsq_raw(a: ArrayView2<f64>, b: ArrayView1<f64>, rank_tol: f64) -> Result<LsqSolution> {
    let (m, n) = a.dim();
    if b.len() != m {
        return Err(Error::Shape { expected: m, got: b.len() });
    }
    if m == 0 || n == 0 {
        return Err(Error::Degenerate(format!("empty system {m} x {n}")));
    }
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::InvalidParameter(format!("rank_tol {rank_tol} must lie in (0, 1)")));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("system contains non-finite entries".into()));
    }
    if a.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("matrix is identically zero".into()));
    }
    let to_int = |v: usize| c_int::try_from(v).map_err(|_| Error::Degenerate(format!("dimension {v} exceeds LAPACK range")));
    let (mi, ni) = (to_int(m)?, to_int(n)?);
    let ldb = m.max(n);

    let started = Instant::now();
    // Column-major copy of A; LAPACK overwrites it.
    let mut acol = Vec::with_capacity(m * n);
    for col in a.columns() {
        acol.extend(col.iter().copied());
    }
    let mut bvec = vec![0.0; ldb];
    bvec[..m].iter_mut().zip(b.iter()).for_each(|(d, s)| *d = *s);
    let mut sv = vec![0.0; m.min(n)];
    let mut rank: c_int = 0;
    let mut info: c_int = 0;
    let nrhs: c_int = 1;
    let ldb_i = to_int(ldb)?;

    let mut work_query = 0.0;
    let mut iwork_query: c_int = 0;
    let query: c_int = -1;
    // SAFETY: all buffers match the dimensions passed; lwork = -1 only writes the optimal sizes.
    unsafe {
        lapack_sys::dgelsd_(
            &mi, &ni, &nrhs, acol.as_mut_ptr(), &mi, bvec.as_mut_ptr(), &ldb_i, sv.as_mut_ptr(), &rank_tol, &mut rank,
            &mut work_query, &query, &mut iwork_query, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "dgelsd", info });
    }
    let lwork = work_query as usize + 1;
    let mut work = vec![0.0; lwork];
    let mut iwork = vec![0 as c_int; (iwork_query.max(1)) as usize];
    let lwork_i = to_int(lwork)?;
    // SAFETY: work and iwork are sized from the workspace query above.
    unsafe {
        lapack_sys::dgelsd_(
            &mi, &ni, &nrhs, acol.as_mut_ptr(), &mi, bvec.as_mut_ptr(), &ldb_i, sv.as_mut_ptr(), &rank_tol, &mut rank,
            work.as_mut_ptr(), &lwork_i, iwork.as_mut_ptr(), &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "dgelsd", info });
    }
    let solve_time = started.elapsed().as_secs_f64();

    let coefficients = Array1::from(bvec[..n].to_vec());
    let residual = a.dot(&coefficients) - b;
    let rnorm = residual.dot(&residual).sqrt();
    let bnorm = b.dot(&b).sqrt();
    let effective_rank = rank.max(0) as usize;
    let report = LsqReport {
        relative_residual: rnorm / bnorm.max(f64::MIN_POSITIVE),
        effective_rank,
        sigma_max: sv[0],
        sigma_min_kept: if effective_rank > 0 { sv[effective_rank - 1] } else { 0.0 },
        n_rows: m,
        n_cols: n,
        solve_time,
    };
    Ok(LsqSolution { coefficients, report })
}

/// Solves an assembled collocation system and splits the coefficients per field.
pub fn solve_least_squares(system: &ResidualSystem, rank_tol: f64, label: impl Into<String>) -> Result<(FieldWeights, LsqReport)> {
    system.validate()?;
    let sol = lstsq(system.a.view(), system.b.view(), rank_tol)?;
    let weights = FieldWeights::from_stacked(&sol.coefficients, system.n_kernels, system.kernel_id, label)?;
    Ok((weights, sol.report))
}

/// Trained outer-layer weights bound to one kernel set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldWeights {
    pub c_u: Array1<f64>,
    pub c_v: Option<Array1<f64>>,
    pub c_p: Option<Array1<f64>>,
    pub kernel_id: u64,
    pub label: String,
}

impl FieldWeights {
    pub fn scalar(c: Array1<f64>, kernel_id: u64, label: impl Into<String>) -> Self {
        FieldWeights {
            c_u: c,
            c_v: None,
            c_p: None,
            kernel_id,
            label: label.into(),
        }
    }

    pub fn zeros(n_kernels: usize, n_fields: usize, kernel_id: u64, label: impl Into<String>) -> Self {
        let z = || Array1::zeros(n_kernels);
        FieldWeights {
            c_u: z(),
            c_v: (n_fields == 3).then(z),
            c_p: (n_fields == 3).then(z),
            kernel_id,
            label: label.into(),
        }
    }

    /// Splits a stacked coefficient vector `[c_u; c_v; c_p]` or a scalar one.
    pub fn from_stacked(c: &Array1<f64>, n_kernels: usize, kernel_id: u64, label: impl Into<String>) -> Result<Self> {
        match c.len() / n_kernels.max(1) {
            1 if c.len() == n_kernels => Ok(FieldWeights::scalar(c.clone(), kernel_id, label)),
            3 if c.len() == 3 * n_kernels => Ok(FieldWeights {
                c_u: c.slice(s![..n_kernels]).to_owned(),
                c_v: Some(c.slice(s![n_kernels..2 * n_kernels]).to_owned()),
                c_p: Some(c.slice(s![2 * n_kernels..]).to_owned()),
                kernel_id,
                label: label.into(),
            }),
            _ => Err(Error::Shape {
                expected: n_kernels,
                got: c.len(),
            }),
        }
    }

    pub fn n_kernels(&self) -> usize {
        self.c_u.len()
    }

    pub fn is_vector(&self) -> bool {
        self.c_v.is_some()
    }

    pub fn all_finite(&self) -> bool {
        [Some(&self.c_u), self.c_v.as_ref(), self.c_p.as_ref()]
            .into_iter()
            .flatten()
            .all(|c| c.iter().all(|v| v.is_finite()))
    }
}

/// Row-major helper for building small dense systems in tests and examples.
pub fn dense(rows: &[&[f64]]) -> Array2<f64> {
    let n = rows.first().map_or(0, |r| r.len());
    Array2::from_shape_fn((rows.len(), n), |(i, j)| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_returns_rhs() {
        let a = Array2::eye(4);
        let b = array![1.0, -2.0, 3.5, 0.25];
        let sol = lstsq(a.view(), b.view(), DEFAULT_RANK_TOL).unwrap();
        for (c, v) in sol.coefficients.iter().zip(b.iter()) {
            assert!((c - v).abs() < 1e-14);
        }
        assert!(sol.report.relative_residual < 1e-15);
        assert_eq!(sol.report.effective_rank, 4);
    }

    #[test]
    fn tall_column_fit() {
        let a = dense(&[&[1.0], &[1.0]]);
        let sol = lstsq(a.view(), array![1.0, 3.0].view(), DEFAULT_RANK_TOL).unwrap();
        assert!((sol.coefficients[0] - 2.0).abs() < 1e-14);
        let expected = 2f64.sqrt() / 10f64.sqrt();
        assert!((sol.report.relative_residual - expected).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_min_norm() {
        let a = dense(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let sol = lstsq(a.view(), array![2.0, 2.0].view(), DEFAULT_RANK_TOL).unwrap();
        assert!((sol.coefficients[0] - 1.0).abs() < 1e-14);
        assert!((sol.coefficients[1] - 1.0).abs() < 1e-14);
        assert_eq!(sol.report.effective_rank, 1);
    }

    #[test]
    fn degenerate_inputs() {
        let z = Array2::<f64>::zeros((3, 2));
        assert!(matches!(lstsq(z.view(), array![1.0, 0.0, 0.0].view(), 1e-10), Err(Error::Degenerate(_))));
        let a = Array2::<f64>::eye(2);
        assert!(matches!(lstsq(a.view(), array![1.0].view(), 1e-10), Err(Error::Shape { .. })));
        assert!(lstsq(a.view(), array![1.0, f64::NAN].view(), 1e-10).is_err());
        assert!(lstsq(a.view(), array![1.0, 1.0].view(), 0.0).is_err());
    }

    #[test]
    fn stacked_split() {
        let c = Array1::from_iter((0..6).map(f64::from));
        let w = FieldWeights::from_stacked(&c, 2, 7, "re=1").unwrap();
        assert_eq!(w.c_u, array![0.0, 1.0]);
        assert_eq!(w.c_v.unwrap(), array![2.0, 3.0]);
        assert_eq!(w.c_p.unwrap(), array![4.0, 5.0]);
        let s = FieldWeights::from_stacked(&array![1.0, 2.0], 2, 7, "b").unwrap();
        assert!(!s.is_vector());
        assert!(FieldWeights::from_stacked(&array![1.0, 2.0, 3.0], 2, 7, "x").is_err());
    }

    #[test]
    fn bit_identical_repeats() {
        let a = Array2::from_shape_fn((40, 25), |(i, j)| ((i * 31 + j * 17) as f64 * 0.37).sin());
        let b = Array1::from_iter((0..40).map(|i| (i as f64).cos()));
        let x = lstsq(a.view(), b.view(), 1e-10).unwrap().coefficients;
        let y = lstsq(a.view(), b.view(), 1e-10).unwrap().coefficients;
        assert!(x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn recovers_known_solutions_past_the_small_block_size() {
        for n in [10usize, 30, 60, 162] {
            let a = Array2::from_shape_fn((n + 5, n), |(i, j)| if i == j { 5.0 } else { ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5 });
            let x = Array1::from_iter((0..n).map(|i| (i as f64).sin()));
            let sol = lstsq(a.view(), a.dot(&x).view(), 1e-14).unwrap();
            let err = (&sol.coefficients - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-11, "n = {n}: {err}");
            assert_eq!(sol.report.effective_rank, n);
        }
    }
}
