use crate::error::{Error, Result};
use crate::geometry::{Domain, Point, MEMBERSHIP_TOL};

/// `u = (1 - x^2 - y^2) / 4`, the solution of `-lap(u) = 1` on the unit disk
/// with zero boundary values.
pub fn poisson_exact_at(p: Point) -> f64 {
    0.25 * (1.0 - p[0] * p[0] - p[1] * p[1])
}

pub fn poisson_exact(points: &[Point]) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|&p| {
            if Domain::UnitDisk.contains(p, MEMBERSHIP_TOL) {
                Ok(poisson_exact_at(p))
            } else {
                Err(Error::OutsideDomain { x: p[0], y: p[1] })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        assert_eq!(poisson_exact(&[[0.0, 0.0]]).unwrap(), vec![0.25]);
        let v = poisson_exact(&[[0.6, 0.8], [1.0, 0.0], [0.0, -1.0]]).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-16));
        assert!(matches!(poisson_exact(&[[1.0, 1.0]]), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn five_point_laplacian_is_minus_one() {
        for h in [0.1, 0.05, 0.01] {
            for &(x, y) in &[(0.1, 0.2), (-0.3, 0.4), (0.0, 0.0)] {
                let lap = (poisson_exact_at([x + h, y]) + poisson_exact_at([x - h, y]) + poisson_exact_at([x, y + h])
                    + poisson_exact_at([x, y - h])
                    - 4.0 * poisson_exact_at([x, y]))
                    / (h * h);
                // Quadratic field: the stencil is exact up to rounding.
                assert!((lap + 1.0).abs() < 1e-10 / (h * h) + 1e-9, "h = {h}: {lap}");
            }
        }
    }
}
