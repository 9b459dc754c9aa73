use ndarray::ArrayView1;

use crate::basis::{predict_field, KernelSet};
use crate::error::{Error, Result};
use crate::geometry::Stenosis;

/// Composite Simpson rule on equally spaced samples; needs an odd count.
pub fn simpson(values: &[f64], h: f64) -> Result<f64> {
    let n = values.len();
    if n < 3 || n % 2 == 0 {
        return Err(Error::Metric(format!("Simpson rule needs an odd sample count >= 3, got {n}")));
    }
    let inner: f64 = values[1..n - 1]
        .iter()
        .enumerate()
        .map(|(k, v)| if k % 2 == 0 { 4.0 * v } else { 2.0 * v })
        .sum();
    Ok(h / 3.0 * (values[0] + inner + values[n - 1]))
}

/// Volume flux `Q(x) = int u(x, y) dy` across the local channel width at
/// each station, using `samples` points per section (at least 101).
pub fn flux_check(kernels: &KernelSet, c_u: ArrayView1<f64>, geometry: &Stenosis, stations: &[f64], samples: usize) -> Result<Vec<f64>> {
    let samples = if samples % 2 == 0 { samples + 1 } else { samples }.max(101);
    stations
        .iter()
        .map(|&x| {
            if !(0.0..=geometry.length).contains(&x) {
                return Err(Error::OutsideDomain { x, y: 0.0 });
            }
            let half = geometry.half_width(x);
            let h = 2.0 * half / (samples - 1) as f64;
            let pts: Vec<_> = (0..samples).map(|k| [x, -half + k as f64 * h]).collect();
            let u = predict_field(kernels, c_u, &pts)?;
            simpson(&u, h)
        })
        .collect()
}
