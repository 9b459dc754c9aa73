//! TOML run configuration with dotted-key overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Stenosis;
use crate::lsq::DEFAULT_RANK_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    PoissonDisk,
    BurgersStanding,
    BurgersTraveling,
    Cavity,
    Stenosis,
}

impl Case {
    pub const ALL: [Case; 5] = [Case::PoissonDisk, Case::BurgersStanding, Case::BurgersTraveling, Case::Cavity, Case::Stenosis];

    pub fn as_str(self) -> &'static str {
        match self {
            Case::PoissonDisk => "poisson_disk",
            Case::BurgersStanding => "burgers_standing",
            Case::BurgersTraveling => "burgers_traveling",
            Case::Cavity => "cavity",
            Case::Stenosis => "stenosis",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Case::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown case `{s}`; expected one of poisson_disk, burgers_standing, burgers_traveling, cavity, stenosis")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonConfig {
    pub n_kernels: usize,
    pub n_interior: usize,
    pub n_boundary: usize,
    /// Width shared by every kernel.
    pub sigma: f64,
    /// Side of the square probe grid; nodes outside the disk are skipped.
    pub probe_grid: usize,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        PoissonConfig {
            n_kernels: 2000,
            n_interior: 1524,
            n_boundary: 381,
            sigma: 0.3,
            probe_grid: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurgersConfig {
    pub n_kernels: usize,
    pub points_per_block: usize,
    pub interior_fraction: f64,
    pub boundary_per_side: usize,
    pub blocks: usize,
    pub dt: f64,
    /// Defaults to `0.01 / pi`.
    pub nu: Option<f64>,
    /// Concentrate points, centers and narrow widths in a detected window.
    pub window: bool,
    pub window_size: f64,
    pub window_fraction: f64,
    pub corrector: bool,
    pub scan_points: usize,
    pub snapshot_times: Vec<f64>,
    pub probe_points: usize,
    /// Half-width of the band around the shock left out of the RMSE.
    pub exclude_half_width: f64,
    pub oracle_nx: usize,
    pub oracle_cfl: f64,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        BurgersConfig {
            n_kernels: 1500,
            points_per_block: 2113,
            interior_fraction: 0.8,
            boundary_per_side: 20,
            blocks: 1000,
            dt: 0.001,
            nu: None,
            window: true,
            window_size: 0.1,
            window_fraction: 0.3,
            corrector: true,
            scan_points: 2001,
            snapshot_times: vec![0.05, 0.1, 0.2],
            probe_points: 2001,
            exclude_half_width: 0.05,
            oracle_nx: 1601,
            oracle_cfl: 0.4,
        }
    }
}

impl BurgersConfig {
    pub fn viscosity(&self) -> f64 {
        self.nu.unwrap_or(0.01 / std::f64::consts::PI)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavityConfig {
    pub n_kernels: usize,
    pub chebyshev_per_axis: usize,
    pub re_target: f64,
    pub delta: f64,
    /// Intermediate Reynolds numbers also compared against the oracle.
    pub snapshots: Vec<f64>,
    pub corrector: bool,
    pub oracle_grid: usize,
    pub probe_grid: usize,
    /// Allowed overshoot of the lid speed next to the lid.
    pub lid_slack: f64,
}

impl Default for CavityConfig {
    fn default() -> Self {
        CavityConfig {
            n_kernels: 300,
            chebyshev_per_axis: 25,
            re_target: 100.0,
            delta: 0.1,
            snapshots: vec![10.0],
            corrector: false,
            oracle_grid: 129,
            probe_grid: 41,
            lid_slack: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StenosisConfig {
    pub n_kernels: usize,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub geometry: Stenosis,
    pub u_max: f64,
    pub density: f64,
    pub cluster_scale: f64,
    pub re_target: f64,
    pub delta: f64,
    pub snapshots: Vec<f64>,
    pub corrector: bool,
    pub stations: Vec<f64>,
    pub flux_samples: usize,
    pub probe_points: usize,
    /// Kernel and point multiplier of the refined reference run.
    pub refine_factor: f64,
}

impl Default for StenosisConfig {
    fn default() -> Self {
        StenosisConfig {
            n_kernels: 800,
            n_interior: 1000,
            n_boundary: 310,
            geometry: Stenosis::default(),
            u_max: 0.1,
            density: 1.0,
            cluster_scale: crate::geometry::STENOSIS_CLUSTER_SCALE,
            re_target: 100.0,
            delta: 10.0,
            snapshots: vec![10.0, 50.0],
            corrector: false,
            stations: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            flux_samples: 101,
            probe_points: 2000,
            refine_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: Case,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "default_bc_weight")]
    pub bc_weight: f64,
    /// Directory for cached oracle fields; `None` disables caching.
    #[serde(default)]
    pub oracle_cache: Option<PathBuf>,
    #[serde(default)]
    pub poisson: PoissonConfig,
    #[serde(default)]
    pub burgers: BurgersConfig,
    #[serde(default)]
    pub cavity: CavityConfig,
    #[serde(default)]
    pub stenosis: StenosisConfig,
}

fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}

fn default_bc_weight() -> f64 {
    1.0
}

impl RunConfig {
    pub fn new(case: Case, seed: u64) -> Self {
        RunConfig {
            case,
            seed: Some(seed),
            rank_tol: DEFAULT_RANK_TOL,
            bc_weight: 1.0,
            oracle_cache: None,
            poisson: PoissonConfig::default(),
            burgers: BurgersConfig::default(),
            cavity: CavityConfig::default(),
            stenosis: StenosisConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("a seed is required (config key `seed` or --seed)".into()))
    }

    /// Applies `key.path=value` overrides; values are TOML literals, and
    /// anything that does not parse as one is taken as a bare string.
    pub fn with_overrides(self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut table = toml::Table::try_from(&self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
            let value = parse_value(raw.trim());
            set_path(&mut table, key.trim(), value).map_err(|e| Error::Config(format!("override `{item}`: {e}")))?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(format!("after overrides: {e}")))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.seed()?;
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return bad(format!("rank_tol = {} must lie in (0, 1)", self.rank_tol));
        }
        if !(self.bc_weight > 0.0 && self.bc_weight.is_finite()) {
            return bad(format!("bc_weight = {} must be positive", self.bc_weight));
        }
        match self.case {
            Case::PoissonDisk => {
                let p = &self.poisson;
                if p.n_kernels == 0 || p.n_interior == 0 || p.n_boundary == 0 || p.probe_grid < 2 {
                    return bad("poisson counts must be positive".into());
                }
                if !(p.sigma > 0.0) {
                    return bad(format!("poisson.sigma = {} must be positive", p.sigma));
                }
            }
            Case::BurgersStanding | Case::BurgersTraveling => {
                let b = &self.burgers;
                if b.n_kernels == 0 || b.blocks == 0 || !(b.dt > 0.0) {
                    return bad("burgers.n_kernels, burgers.blocks and burgers.dt must be positive".into());
                }
                if !(b.interior_fraction > 0.0 && b.interior_fraction < 1.0) {
                    return bad(format!("burgers.interior_fraction = {} must lie in (0, 1)", b.interior_fraction));
                }
                if b.viscosity() < 0.0 {
                    return bad("burgers.nu must be non-negative".into());
                }
                let t_end = b.blocks as f64 * b.dt;
                if let Some(t) = b.snapshot_times.iter().find(|t| !(**t > 0.0 && **t <= t_end + 1e-12)) {
                    return bad(format!("burgers.snapshot_times entry {t} outside (0, {t_end}]"));
                }
                if b.probe_points < 3 || b.scan_points < 3 {
                    return bad("burgers.probe_points and burgers.scan_points must be at least 3".into());
                }
            }
            Case::Cavity => {
                let c = &self.cavity;
                if c.n_kernels == 0 || c.chebyshev_per_axis < 3 || c.probe_grid < 3 {
                    return bad("cavity.n_kernels must be positive and grids at least 3 per axis".into());
                }
                if !(c.re_target > 0.0 && c.delta > 0.0) {
                    return bad("cavity.re_target and cavity.delta must be positive".into());
                }
                if c.re_target > 200.0 {
                    return bad(format!("cavity.re_target = {} exceeds the oracle range (200)", c.re_target));
                }
                if let Some(r) = c.snapshots.iter().find(|r| !(**r > 0.0 && **r <= c.re_target)) {
                    return bad(format!("cavity.snapshots entry {r} outside (0, re_target]"));
                }
            }
            Case::Stenosis => {
                let s = &self.stenosis;
                s.geometry.validate()?;
                if s.n_kernels == 0 || s.n_interior == 0 || s.n_boundary < 8 || s.probe_points == 0 {
                    return bad("stenosis counts must be positive and n_boundary at least 8".into());
                }
                if !(s.re_target > 0.0 && s.delta > 0.0 && s.u_max > 0.0 && s.density > 0.0 && s.refine_factor >= 1.0) {
                    return bad("stenosis re_target, delta, u_max, density must be positive and refine_factor >= 1".into());
                }
                if let Some(r) = s.snapshots.iter().find(|r| !(**r > 0.0 && **r <= s.re_target)) {
                    return bad(format!("stenosis.snapshots entry {r} outside (0, re_target]"));
                }
                if let Some(x) = s.stations.iter().find(|x| !(**x > 0.0 && **x < s.geometry.length)) {
                    return bad(format!("stenosis.stations entry {x} outside the channel"));
                }
            }
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> std::result::Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or("empty key")?;
    let mut current = table;
    for p in parts {
        current = current
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("`{p}` is not a section"))?;
    }
    // Integers given for float keys are widened so `re_target=10` works.
    let value = match (current.get(last), value) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    current.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = RunConfig::from_toml("case = \"cavity\"\nseed = 3\n").unwrap();
        assert_eq!(cfg.case, Case::Cavity);
        assert_eq!(cfg.cavity, CavityConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = RunConfig::from_toml("case = \"cavity\"\nseed = 3\n[cavity]\nre_targt = 5.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("re_targt") && msg.contains("line 4"), "{msg}");
        assert!(RunConfig::from_toml("case = \"cube\"").is_err());
    }

    #[test]
    fn overrides_apply_and_widen_integers() {
        let cfg = RunConfig::new(Case::Cavity, 1)
            .with_overrides(&["cavity.re_target=10".into(), "seed=9".into(), "cavity.snapshots=[1.0, 5.0]".into()])
            .unwrap();
        assert_eq!(cfg.cavity.re_target, 10.0);
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.cavity.snapshots, vec![1.0, 5.0]);
        assert!(RunConfig::new(Case::Cavity, 1).with_overrides(&["cavity.bogus=1".into()]).is_err());
        assert!(RunConfig::new(Case::Cavity, 1).with_overrides(&["noequals".into()]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::new(Case::Stenosis, 5);
        cfg.oracle_cache = Some(PathBuf::from("cache"));
        cfg.burgers.nu = Some(0.003);
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::new(Case::Cavity, 1);
        cfg.cavity.re_target = 400.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new(Case::BurgersStanding, 1);
        cfg.burgers.snapshot_times = vec![2.0];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new(Case::PoissonDisk, 1);
        cfg.seed = None;
        assert!(cfg.validate().is_err());
        assert_eq!("stenosis".parse::<Case>().unwrap(), Case::Stenosis);
    }
}
