//! Gaussian RBF input layer and its feature matrices.
//!
//! Kernel `k` evaluates `phi_k = exp(-z_k^2)` with
//! `z_k^2 = (m_k x + alpha_k)^2 + (n_k y + beta_k)^2`. For space-time
//! problems the second coordinate is time.

use std::f64::consts::SQRT_2;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSet {
    alpha_star: Vec<f64>,
    beta_star: Vec<f64>,
    sigma_x: Vec<f64>,
    sigma_y: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    m: Vec<f64>,
    n: Vec<f64>,
    id: u64,
}

impl KernelSet {
    /// Builds the layer from Gaussian centers and per-axis standard deviations.
    pub fn from_gaussians(centers: &[Point], sigma_x: &[f64], sigma_y: &[f64]) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidCount("kernel set needs at least one kernel".into()));
        }
        for len in [sigma_x.len(), sigma_y.len()] {
            if len != centers.len() {
                return Err(Error::Shape {
                    expected: centers.len(),
                    got: len,
                });
            }
        }
        for (index, &value) in sigma_x.iter().chain(sigma_y).enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidWidth {
                    index: index % centers.len(),
                    value,
                });
            }
        }
        if let Some(c) = centers.iter().find(|c| !(c[0].is_finite() && c[1].is_finite())) {
            return Err(Error::InvalidParameter(format!("non-finite kernel center {c:?}")));
        }

        let alpha_star: Vec<f64> = centers.iter().map(|c| c[0]).collect();
        let beta_star: Vec<f64> = centers.iter().map(|c| c[1]).collect();
        let m: Vec<f64> = sigma_x.iter().map(|s| 1.0 / (SQRT_2 * s)).collect();
        let n: Vec<f64> = sigma_y.iter().map(|s| 1.0 / (SQRT_2 * s)).collect();
        let alpha = m.iter().zip(&alpha_star).map(|(m, a)| -m * a).collect();
        let beta = n.iter().zip(&beta_star).map(|(n, b)| -n * b).collect();

        let mut hasher = Sha256::new();
        for v in alpha_star.iter().chain(&beta_star).chain(sigma_x).chain(sigma_y) {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        let id = u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));

        Ok(KernelSet {
            alpha_star,
            beta_star,
            sigma_x: sigma_x.to_vec(),
            sigma_y: sigma_y.to_vec(),
            alpha,
            beta,
            m,
            n,
            id,
        })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Content fingerprint of the raw Gaussian parameters.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn alpha_star(&self) -> &[f64] {
        &self.alpha_star
    }

    pub fn beta_star(&self) -> &[f64] {
        &self.beta_star
    }

    pub fn sigma_x(&self) -> &[f64] {
        &self.sigma_x
    }

    pub fn sigma_y(&self) -> &[f64] {
        &self.sigma_y
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn n(&self) -> &[f64] {
        &self.n
    }

    pub fn centers(&self) -> Vec<Point> {
        self.alpha_star.iter().zip(&self.beta_star).map(|(&a, &b)| [a, b]).collect()
    }

    /// CSV `alpha_star,beta_star,sigma_x,sigma_y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha_star,beta_star,sigma_x,sigma_y\n");
        for k in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.alpha_star[k], self.beta_star[k], self.sigma_x[k], self.sigma_y[k]
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("alpha_star,beta_star,sigma_x,sigma_y") {
            return Err(Error::parse("kernel csv", "bad header"));
        }
        let (mut centers, mut sx, mut sy) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(format!("kernel csv line {}", i + 2), e))?;
            if vals.len() != 4 {
                return Err(Error::parse(format!("kernel csv line {}", i + 2), "expected 4 columns"));
            }
            centers.push([vals[0], vals[1]]);
            sx.push(vals[2]);
            sy.push(vals[3]);
        }
        KernelSet::from_gaussians(&centers, &sx, &sy)
    }
}

/// Values and spatial derivatives of every kernel at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelEval {
    pub phi: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dyy: f64,
}

impl KernelSet {
    /// Closed-form value and derivatives of kernel `k` at `p`.
    #[inline]
    pub fn eval(&self, k: usize, p: Point) -> KernelEval {
        let (m, n) = (self.m[k], self.n[k]);
        let a = m * p[0] + self.alpha[k];
        let b = n * p[1] + self.beta[k];
        let e = (-(a * a + b * b)).exp();
        KernelEval {
            phi: e,
            dx: -2.0 * e * m * a,
            dy: -2.0 * e * n * b,
            dxx: -2.0 * e * m * m * (1.0 - 2.0 * a * a),
            dyy: -2.0 * e * n * n * (1.0 - 2.0 * b * b),
        }
    }

    #[inline]
    pub fn phi(&self, k: usize, p: Point) -> f64 {
        let a = self.m[k] * p[0] + self.alpha[k];
        let b = self.n[k] * p[1] + self.beta[k];
        (-(a * a + b * b)).exp()
    }
}

/// Dense feature matrices, one row per point and one column per kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub phi: Array2<f64>,
    pub dphi_dx: Array2<f64>,
    pub dphi_dy: Array2<f64>,
    pub d2phi_dx2: Array2<f64>,
    pub d2phi_dy2: Array2<f64>,
}

impl FeatureBlock {
    pub fn n_points(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_kernels(&self) -> usize {
        self.phi.ncols()
    }
}

pub fn eval_features(kernels: &KernelSet, points: &[Point]) -> FeatureBlock {
    let shape = (points.len(), kernels.len());
    let mut fb = FeatureBlock {
        phi: Array2::zeros(shape),
        dphi_dx: Array2::zeros(shape),
        dphi_dy: Array2::zeros(shape),
        d2phi_dx2: Array2::zeros(shape),
        d2phi_dy2: Array2::zeros(shape),
    };
    for (i, &p) in points.iter().enumerate() {
        for k in 0..kernels.len() {
            let e = kernels.eval(k, p);
            fb.phi[[i, k]] = e.phi;
            fb.dphi_dx[[i, k]] = e.dx;
            fb.dphi_dy[[i, k]] = e.dy;
            fb.d2phi_dx2[[i, k]] = e.dxx;
            fb.d2phi_dy2[[i, k]] = e.dyy;
        }
    }
    fb
}

/// Network output `sum_k phi_k(p) c_k` at each point.
pub fn predict_field(kernels: &KernelSet, weights: ArrayView1<f64>, points: &[Point]) -> Result<Vec<f64>> {
    if weights.len() != kernels.len() {
        return Err(Error::Shape {
            expected: kernels.len(),
            got: weights.len(),
        });
    }
    Ok(points
        .iter()
        .map(|&p| (0..kernels.len()).map(|k| kernels.phi(k, p) * weights[k]).sum())
        .collect())
}

/// Output together with its first x-derivative, used for gradient probes.
pub fn predict_with_dx(kernels: &KernelSet, weights: ArrayView1<f64>, points: &[Point]) -> Result<Vec<(f64, f64)>> {
    if weights.len() != kernels.len() {
        return Err(Error::Shape {
            expected: kernels.len(),
            got: weights.len(),
        });
    }
    Ok(points
        .iter()
        .map(|&p| {
            (0..kernels.len()).fold((0.0, 0.0), |(u, ux), k| {
                let e = kernels.eval(k, p);
                (u + e.phi * weights[k], ux + e.dx * weights[k])
            })
        })
        .collect())
}

/// Weight column as CSV with a single header line naming the field.
pub fn weights_to_csv(name: &str, weights: ArrayView1<f64>) -> String {
    let mut out = format!("{name}\n");
    for w in weights {
        out.push_str(&format!("{w}\n"));
    }
    out
}

pub fn weights_from_csv(text: &str) -> Result<(String, Array1<f64>)> {
    let mut lines = text.lines();
    let name = lines
        .next()
        .ok_or_else(|| Error::parse("weights csv", "empty file"))?
        .trim()
        .to_string();
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().map_err(|e| Error::parse("weights csv", e)))
        .collect::<Result<Vec<_>>>()?;
    Ok((name, Array1::from(values)))
}

/// `Phi * c` for a dense block.
pub fn apply(block: &Array2<f64>, weights: ArrayView1<f64>) -> Array1<f64> {
    block.dot(&weights)
}

pub fn all_finite(a: &Array2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng as _;

    use crate::rng::{stream, Stream};

    const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn correspondence() {
        let k = KernelSet::from_gaussians(&[[0.0, 0.0]], &[INV_SQRT2], &[INV_SQRT2]).unwrap();
        assert!((k.m()[0] - 1.0).abs() < 1e-15 && (k.n()[0] - 1.0).abs() < 1e-15);
        assert_eq!(k.alpha()[0], 0.0);
        let k = KernelSet::from_gaussians(&[[0.5, 0.0]], &[0.2], &[0.3]).unwrap();
        assert!((k.m()[0] - 3.535_533_905_932_737_6).abs() < 1e-14);
        assert!((k.alpha()[0] + 1.767_766_952_966_368_8).abs() < 1e-14);
        assert!(matches!(
            KernelSet::from_gaussians(&[[0.0, 0.0]], &[0.0], &[1.0]),
            Err(Error::InvalidWidth { index: 0, .. })
        ));
        assert!(matches!(
            KernelSet::from_gaussians(&[[0.0, 0.0], [1.0, 1.0]], &[1.0, 1.0], &[1.0, -1.0]),
            Err(Error::InvalidWidth { index: 1, .. })
        ));
        assert!(KernelSet::from_gaussians(&[], &[], &[]).is_err());
    }

    #[test]
    fn center_and_unit_point_values() {
        let k = KernelSet::from_gaussians(&[[0.3, -0.2]], &[0.1], &[0.4]).unwrap();
        let e = k.eval(0, [0.3, -0.2]);
        assert_eq!(e.phi, 1.0);
        assert_eq!((e.dx, e.dy), (0.0, 0.0));
        assert!((e.dxx + 2.0 * k.m()[0].powi(2)).abs() < 1e-12);
        assert!((e.dyy + 2.0 * k.n()[0].powi(2)).abs() < 1e-12);

        let unit = KernelSet::from_gaussians(&[[0.0, 0.0]], &[INV_SQRT2], &[INV_SQRT2]).unwrap();
        let e = unit.eval(0, [1.0, 0.0]);
        let inv_e = (-1.0f64).exp();
        assert!((e.phi - inv_e).abs() < 1e-15);
        assert!((e.dx + 2.0 * inv_e).abs() < 1e-15);
        assert!((e.dxx - 2.0 * inv_e).abs() < 1e-15);
    }

    #[test]
    fn predictions() {
        let k = KernelSet::from_gaussians(&[[0.0, 0.0], [0.0, 0.0]], &[0.3, 0.3], &[0.5, 0.5]).unwrap();
        let pts = [[0.1, 0.2], [-0.4, 0.0]];
        assert_eq!(predict_field(&k, array![0.0, 0.0].view(), &pts).unwrap(), vec![0.0, 0.0]);
        let two = predict_field(&k, array![1.5, -0.25].view(), &pts).unwrap();
        for (v, p) in two.iter().zip(pts) {
            assert!((v - 1.25 * k.phi(0, p)).abs() < 1e-15);
        }
        let one = KernelSet::from_gaussians(&[[0.2, 0.7]], &[0.1], &[0.1]).unwrap();
        assert_eq!(predict_field(&one, array![1.0].view(), &[[0.2, 0.7]]).unwrap(), vec![1.0]);
        assert!(matches!(
            predict_field(&k, array![1.0].view(), &pts),
            Err(Error::Shape { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn feature_block_shape_and_range() {
        let mut rng = stream(3, Stream::Centers, 0);
        let centers: Vec<Point> = (0..20).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let sig: Vec<f64> = (0..20).map(|_| rng.gen_range(0.05..0.5)).collect();
        let k = KernelSet::from_gaussians(&centers, &sig, &sig).unwrap();
        let pts: Vec<Point> = (0..30).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let fb = eval_features(&k, &pts);
        assert_eq!((fb.n_points(), fb.n_kernels()), (30, 20));
        assert!(fb.phi.iter().all(|&v| (0.0..=1.0).contains(&v)));
        for a in [&fb.phi, &fb.dphi_dx, &fb.dphi_dy, &fb.d2phi_dx2, &fb.d2phi_dy2] {
            assert!(all_finite(a));
        }
        let c = Array1::from_iter((0..20).map(|i| (i as f64).sin()));
        let direct = predict_field(&k, c.view(), &pts).unwrap();
        let via_block = apply(&fb.phi, c.view());
        for (a, b) in direct.iter().zip(via_block.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn csv_round_trip() {
        let k = KernelSet::from_gaussians(&[[0.1, 0.2], [-0.3, 1e-9]], &[0.05, 0.7], &[0.3, 0.0002]).unwrap();
        let back = KernelSet::from_csv(&k.to_csv()).unwrap();
        assert_eq!(k, back);
        let w = array![1.0, -2.5e-12, 3.0];
        let (name, w2) = weights_from_csv(&weights_to_csv("c_u", w.view())).unwrap();
        assert_eq!(name, "c_u");
        assert_eq!(w, w2);
    }

    fn kernel_strategy() -> impl Strategy<Value = (Point, f64, f64, Point)> {
        (
            (-1.0f64..1.0, -1.0f64..1.0),
            0.05f64..1.0,
            0.05f64..1.0,
            (-1.0f64..1.0, -1.0f64..1.0),
        )
            .prop_map(|(c, sx, sy, p)| ([c.0, c.1], sx, sy, [p.0, p.1]))
    }

    proptest! {
        #[test]
        fn linearity(c1 in proptest::collection::vec(-5.0f64..5.0, 4),
                     c2 in proptest::collection::vec(-5.0f64..5.0, 4),
                     a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let k = KernelSet::from_gaussians(
                &[[0.0, 0.0], [0.5, 0.1], [-0.3, 0.7], [0.9, -0.9]],
                &[0.2, 0.3, 0.4, 0.5], &[0.5, 0.4, 0.3, 0.2]).unwrap();
            let pts = [[0.1, 0.1], [-0.5, 0.3], [0.8, -0.7]];
            let c1 = Array1::from(c1);
            let c2 = Array1::from(c2);
            let combo = &c1 * a + &c2 * b;
            let lhs = predict_field(&k, combo.view(), &pts).unwrap();
            let r1 = predict_field(&k, c1.view(), &pts).unwrap();
            let r2 = predict_field(&k, c2.view(), &pts).unwrap();
            for i in 0..pts.len() {
                let rhs = a * r1[i] + b * r2[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn translation_invariance((c, sx, sy, p) in kernel_strategy(),
                                  shift in (-2.0f64..2.0, -2.0f64..2.0)) {
            // Offsets are rounded to a coarse dyadic grid so that shifted
            // differences are exact in floating point.
            let dx = (shift.0 * 64.0).round() / 64.0;
            let dy = (shift.1 * 64.0).round() / 64.0;
            let c = [(c[0] * 1024.0).round() / 1024.0, (c[1] * 1024.0).round() / 1024.0];
            let p = [(p[0] * 1024.0).round() / 1024.0, (p[1] * 1024.0).round() / 1024.0];
            let k0 = KernelSet::from_gaussians(&[c], &[sx], &[sy]).unwrap();
            let k1 = KernelSet::from_gaussians(&[[c[0] + dx, c[1] + dy]], &[sx], &[sy]).unwrap();
            let e0 = k0.eval(0, p);
            let e1 = k1.eval(0, [p[0] + dx, p[1] + dy]);
            let scale = k0.m()[0].max(k0.n()[0]).powi(2).max(1.0);
            for (a, b) in [(e0.phi, e1.phi), (e0.dx, e1.dx), (e0.dy, e1.dy), (e0.dxx, e1.dxx), (e0.dyy, e1.dyy)] {
                prop_assert!((a - b).abs() <= 1e-14 * scale * 10.0, "{} vs {}", a, b);
            }
        }

        #[test]
        fn second_derivative_matches_central_difference((c, sx, sy, p) in kernel_strategy()) {
            let k = KernelSet::from_gaussians(&[c], &[sx], &[sy]).unwrap();
            let h = 1e-4;
            let e = k.eval(0, p);
            let fd_xx = (k.phi(0, [p[0] + h, p[1]]) - 2.0 * e.phi + k.phi(0, [p[0] - h, p[1]])) / (h * h);
            let fd_yy = (k.phi(0, [p[0], p[1] + h]) - 2.0 * e.phi + k.phi(0, [p[0], p[1] - h])) / (h * h);
            // Absolute floor scaled to the kernel's curvature for points where the derivative crosses zero.
            let floor_x = 1e-6 * k.m()[0].powi(2);
            let floor_y = 1e-6 * k.n()[0].powi(2);
            prop_assert!((e.dxx - fd_xx).abs() <= 1e-4 * e.dxx.abs() + floor_x);
            prop_assert!((e.dyy - fd_yy).abs() <= 1e-4 * e.dyy.abs() + floor_y);
        }
    }
}
