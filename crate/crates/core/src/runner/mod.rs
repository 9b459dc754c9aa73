//! Case pipelines behind the command-line interface.
//!
//! A run writes into its output directory:
//! `config.toml` (resolved configuration), `metrics.json`, `trace.jsonl`,
//! `timing.json`, `summary.json` and the CSV artifacts listed in the summary.

mod cases;
pub mod config;
pub mod metrics;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cases::{precompute_oracles, stenosis_reference};
pub use config::{BurgersConfig, Case, CavityConfig, PoissonConfig, RunConfig, StenosisConfig};
pub use metrics::{compare_to_oracle, error_stats, export_field_grid, Comparison, ErrorStats, GridSpec, LsqSummary, MetricsReport, PairedSamples};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGENCE: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;

/// Process exit code for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Oracle(_) => EXIT_ORACLE,
        _ => EXIT_CONFIG,
    }
}

/// Files produced by a run, written as they are added.
pub struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            names: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        if !self.names.iter().any(|n| n == name) {
            self.names.push(name.to_string());
        }
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub solve_seconds: f64,
    pub oracle_seconds: f64,
    pub stages: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub case: String,
    pub seed: u64,
    pub artifacts: Vec<String>,
}

pub(crate) struct CaseOutput {
    pub metrics: MetricsReport,
    pub trace: crate::curriculum::SolveTrace,
    pub oracle_seconds: f64,
}

/// Runs one case end to end and writes its artifacts into `out`.
pub fn run_case(cfg: &RunConfig, out: &Path) -> Result<MetricsReport> {
    cfg.validate()?;
    let started = Instant::now();
    let mut artifacts = Artifacts::new(out)?;
    artifacts.write("config.toml", &cfg.to_toml()?)?;
    let output = cases::run(cfg, &mut artifacts)?;
    output.metrics.validate()?;

    artifacts.write("trace.jsonl", &output.trace.to_jsonl()?)?;
    let timing = Timing {
        total_seconds: started.elapsed().as_secs_f64(),
        solve_seconds: output.trace.total_solve_time(),
        oracle_seconds: output.oracle_seconds,
        stages: output
            .trace
            .records
            .iter()
            .map(|r| (r.label.clone(), r.predictor.solve_time + r.corrector.as_ref().map_or(0.0, |c| c.solve_time)))
            .collect(),
    };
    artifacts.write("timing.json", &serde_json::to_string_pretty(&timing)?)?;
    artifacts.write("metrics.json", &output.metrics.to_json()?)?;
    let summary = Summary {
        case: cfg.case.to_string(),
        seed: cfg.seed()?,
        artifacts: artifacts.names().to_vec(),
    };
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(output.metrics)
}

/// Re-reads a run directory, checks every listed artifact parses, re-scores
/// the stored paired samples against `metrics.json` and renders the report.
pub fn report(dir: &Path) -> Result<String> {
    let summary: Summary = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json"))?)?;
    let metrics = MetricsReport::from_json(&std::fs::read_to_string(dir.join("metrics.json"))?)?;
    let mut out = metrics.render();
    let mut rescored = 0;
    for name in &summary.artifacts {
        let path = dir.join(name);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Metric(format!("artifact {name}: {e}")))?;
        match Path::new(name).extension().and_then(|e| e.to_str()) {
            Some("json") => {
                serde_json::from_str::<serde_json::Value>(&text)?;
            }
            Some("jsonl") => {
                crate::curriculum::SolveTrace::from_jsonl(&text)?;
            }
            Some("toml") => {
                RunConfig::from_toml(&text)?;
            }
            Some("csv") if name.starts_with("compare_") => {
                let pair = PairedSamples::from_csv(&text)?;
                let stats = pair.stats()?;
                let (label, field) = parse_compare_name(name)?;
                let stored = metrics
                    .comparison(&label, &field)
                    .ok_or_else(|| Error::Metric(format!("{name} has no entry in metrics.json")))?;
                let tol = 1e-12 * stored.rmse.max(1e-300) + 1e-15;
                if (stats.rmse - stored.rmse).abs() > tol {
                    return Err(Error::Metric(format!("{name}: stored rmse {} but samples give {}", stored.rmse, stats.rmse)));
                }
                rescored += 1;
            }
            Some("csv") => {
                let mut lines = text.lines();
                let width = lines.next().map_or(0, |h| h.split(',').count());
                if width == 0 || lines.any(|l| l.split(',').count() != width) {
                    return Err(Error::parse(name.as_str(), "ragged csv"));
                }
            }
            _ => {}
        }
    }
    out.push_str(&format!("{} artifacts verified, {} comparisons re-scored\n", summary.artifacts.len(), rescored));
    Ok(out)
}

/// Artifact name for a comparison, `compare_<field>@<label>.csv`.
pub fn compare_name(label: &str, field: &str) -> String {
    format!("compare_{field}@{label}.csv")
}

fn parse_compare_name(name: &str) -> Result<(String, String)> {
    let stem = name
        .strip_prefix("compare_")
        .and_then(|s| s.strip_suffix(".csv"))
        .ok_or_else(|| Error::parse(name, "not a comparison artifact"))?;
    let (field, label) = stem.split_once('@').ok_or_else(|| Error::parse(name, "missing `@`"))?;
    Ok((label.to_string(), field.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_cover_error_kinds() {
        assert_eq!(
            exit_code(&Error::Divergence {
                stage: "re=1".into(),
                reason: "x".into()
            }),
            2
        );
        assert_eq!(exit_code(&Error::Oracle("x".into())), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 1);
    }

    #[test]
    fn compare_names_round_trip() {
        let n = compare_name("re=0.01", "speed");
        assert_eq!(parse_compare_name(&n).unwrap(), ("re=0.01".to_string(), "speed".to_string()));
    }
}
