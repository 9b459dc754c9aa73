//! Kernel width selection.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point, MEMBERSHIP_TOL};
use crate::rng::Rng;

/// Distance from the cavity center to a corner.
pub const CAVITY_L_MAX: f64 = 0.7071;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SigmaRule {
    /// Narrow spatial widths inside `[x_left, x_right]`, wide ones outside,
    /// and temporal widths proportional to the block length `dt`. Without a
    /// band every kernel draws from the outside range.
    BurgersShock {
        band: Option<(f64, f64)>,
        dt: f64,
    },
    CavityWallDistance,
    StenosisWallDistance {
        throat_half_width: f64,
    },
    Constant(f64),
}

pub const SHOCK_SIGMA_INSIDE: (f64, f64) = (0.01, 0.04);
pub const SHOCK_SIGMA_OUTSIDE: (f64, f64) = (0.02, 0.6);
pub const SHOCK_SIGMA_TIME: (f64, f64) = (0.4, 0.6);

impl SigmaRule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SigmaRule::BurgersShock { band, dt } => dt > 0.0 && band.map_or(true, |(l, r)| l < r),
            SigmaRule::CavityWallDistance => true,
            SigmaRule::StenosisWallDistance { throat_half_width } => throat_half_width > 0.0,
            SigmaRule::Constant(s) => s > 0.0 && s.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid sigma rule {self:?}")))
        }
    }
}

/// Cavity width from the wall distance of a center.
pub fn cavity_sigma(l_min: f64) -> f64 {
    0.2 + 0.4 * (l_min / CAVITY_L_MAX).min(1.0)
}

/// Stenosis width from the wall distance of a center.
pub fn stenosis_sigma(l_min: f64, throat_half_width: f64) -> f64 {
    throat_half_width.min(0.02 + l_min)
}

/// Per-kernel `(sigma_x, sigma_y)` for the given centers.
pub fn assign_sigmas(rule: &SigmaRule, centers: &[Point], domain: &Domain, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    rule.validate()?;
    if let Some(c) = centers.iter().find(|c| !domain.contains(**c, MEMBERSHIP_TOL)) {
        return Err(Error::OutsideDomain { x: c[0], y: c[1] });
    }
    let mut sx = Vec::with_capacity(centers.len());
    let mut sy = Vec::with_capacity(centers.len());
    match *rule {
        SigmaRule::BurgersShock { band, dt } => {
            for c in centers {
                let inside = band.is_some_and(|(l, r)| c[0] >= l && c[0] <= r);
                let (lo, hi) = if inside { SHOCK_SIGMA_INSIDE } else { SHOCK_SIGMA_OUTSIDE };
                sx.push(rng.gen_range(lo..hi));
                sy.push(rng.gen_range(SHOCK_SIGMA_TIME.0 * dt..SHOCK_SIGMA_TIME.1 * dt));
            }
        }
        SigmaRule::CavityWallDistance => {
            if !matches!(domain, Domain::CavityUnitSquare) {
                return Err(Error::DomainMismatch("cavity width rule needs the cavity domain".into()));
            }
            for c in centers {
                let s = cavity_sigma(domain.boundary_distance(*c).max(0.0));
                sx.push(s);
                sy.push(s);
            }
        }
        SigmaRule::StenosisWallDistance { throat_half_width } => {
            let Domain::StenoticChannel(geometry) = domain else {
                return Err(Error::DomainMismatch("stenosis width rule needs the channel domain".into()));
            };
            for c in centers {
                let s = stenosis_sigma(geometry.wall_distance(*c), throat_half_width);
                sx.push(s);
                sy.push(s);
            }
        }
        SigmaRule::Constant(s) => {
            sx.resize(centers.len(), s);
            sy.resize(centers.len(), s);
        }
    }
    Ok((sx, sy))
}
