use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Case, RunConfig, StenosisConfig};
use super::metrics::{compare_to_oracle, export_field_grid, speed, GridSpec, LsqSummary, MetricsReport, PairedSamples};
use super::{compare_name, Artifacts, CaseOutput};
use crate::assembly::{assemble_poisson, AssemblyOptions};
use crate::basis::{predict_field, predict_with_dx, weights_to_csv, KernelSet};
use crate::curriculum::{
    flow_fields, run_burgers, run_navier_stokes, BurgersRun, BurgersSetup, FlowRun, FlowSetup, ReynoldsLadder, SolveTrace, StageRecord,
    TimeBlocks, ViscosityLaw, WindowSettings, DIVERGENCE_RESIDUAL,
};
use crate::error::{Error, Result};
use crate::geometry::{
    linspace, place_centers, sample_chebyshev_square, sample_disk, sample_stenosis, BcTag, BlockCounts, Domain, Point, PointCloud,
};
use crate::lsq::{solve_least_squares, FieldWeights};
use crate::oracles::{burgers_fd, cavity_fd_cached, flux_check, poisson_exact, BurgersOracle, BurgersOracleConfig, CavityOracleConfig, GridField};
use crate::rng::{stream, Stream};
use crate::sigma::{assign_sigmas, SigmaRule};

pub(super) fn run(cfg: &RunConfig, art: &mut Artifacts) -> Result<CaseOutput> {
    match cfg.case {
        Case::PoissonDisk => poisson(cfg, art),
        Case::BurgersStanding | Case::BurgersTraveling => burgers(cfg, art),
        Case::Cavity => cavity(cfg, art),
        Case::Stenosis => stenosis(cfg, art),
    }
}

fn assembly(cfg: &RunConfig) -> AssemblyOptions {
    AssemblyOptions { bc_weight: cfg.bc_weight }
}

fn pushed(report: &mut MetricsReport, art: &mut Artifacts, label: &str, pair: &PairedSamples) -> Result<()> {
    report.push(label, &pair.name, pair.stats()?);
    art.write(&compare_name(label, &pair.name), &pair.to_csv())
}

fn kernels_for(domain: &Domain, n: usize, rule: &SigmaRule, seed: u64, salt: u64) -> Result<KernelSet> {
    let centers = place_centers(domain, n, None, &mut stream(seed, Stream::Centers, salt))?;
    let (sx, sy) = assign_sigmas(rule, &centers, domain, &mut stream(seed, Stream::Sigmas, salt))?;
    KernelSet::from_gaussians(&centers, &sx, &sy)
}

fn write_weights(art: &mut Artifacts, tag: &str, w: &FieldWeights) -> Result<()> {
    let mut text = weights_to_csv("u", w.c_u.view());
    if let (Some(v), Some(p)) = (&w.c_v, &w.c_p) {
        // One weight column per field, matching kernel order.
        let u_lines: Vec<&str> = text.lines().collect();
        let v_text = weights_to_csv("v", v.view());
        let p_text = weights_to_csv("p", p.view());
        text = u_lines
            .iter()
            .zip(v_text.lines())
            .zip(p_text.lines())
            .map(|((a, b), c)| format!("{a},{b},{c}\n"))
            .collect();
    }
    art.write(&format!("weights_{tag}.csv"), &text)
}

// Poisson

fn poisson(cfg: &RunConfig, art: &mut Artifacts) -> Result<CaseOutput> {
    let seed = cfg.seed()?;
    let p = &cfg.poisson;
    let domain = Domain::UnitDisk;
    let cloud = sample_disk(p.n_interior, p.n_boundary, &mut stream(seed, Stream::Sampling, 0))?;
    let kernels = kernels_for(&domain, p.n_kernels, &SigmaRule::Constant(p.sigma), seed, 0)?;
    let system = assemble_poisson(&kernels, &cloud, assembly(cfg))?;
    let (weights, lsq) = solve_least_squares(&system, cfg.rank_tol, "poisson")?;
    if !weights.all_finite() || !(lsq.relative_residual <= DIVERGENCE_RESIDUAL) {
        return Err(Error::Divergence {
            stage: "poisson".into(),
            reason: format!("relative residual {}", lsq.relative_residual),
        });
    }

    let mut report = MetricsReport::new(Case::PoissonDisk.as_str(), seed);
    let grid = GridSpec { nx: p.probe_grid, ny: p.probe_grid };
    let pts = grid.points(&domain)?;
    let pair = PairedSamples {
        name: "u".into(),
        approx: predict_field(&kernels, weights.c_u.view(), &pts)?,
        reference: poisson_exact(&pts)?,
        points: pts,
    };
    pushed(&mut report, art, "steady", &pair)?;
    report.set("u_center", predict_field(&kernels, weights.c_u.view(), &[[0.0, 0.0]])?[0]);
    report.counts.insert("kernels".into(), kernels.len());
    report.counts.insert("interior_points".into(), cloud.interior.len());
    report.counts.insert("boundary_points".into(), cloud.boundary.len());
    report.lsq = LsqSummary::from_reports([&lsq], 1);
    if !system.is_overdetermined() {
        report.notes.push(format!(
            "{} collocation rows for {} unknowns: minimum-norm solution of an underdetermined system",
            system.n_rows(),
            system.n_unknowns()
        ));
    }

    art.write("points.csv", &cloud.to_csv())?;
    art.write("kernels.csv", &kernels.to_csv())?;
    write_weights(art, "steady", &weights)?;
    art.write("fields_steady.csv", &export_field_grid(&kernels, &weights, &domain, grid)?)?;

    let trace = SolveTrace {
        records: vec![StageRecord {
            stage: 0,
            label: "steady".into(),
            parameter: 0.0,
            n_rows: system.n_rows(),
            n_unknowns: system.n_unknowns(),
            solves: 1,
            predictor: lsq,
            corrector: None,
            correction: None,
            ic_residual: None,
            window_center: None,
            probes: vec![report.scalars["u_center"]],
        }],
    };
    Ok(CaseOutput {
        metrics: report,
        trace,
        oracle_seconds: 0.0,
    })
}

// Burgers

/// Initial profile of a Burgers case.
pub fn burgers_ic(case: Case) -> Result<fn(f64) -> f64> {
    match case {
        Case::BurgersStanding => Ok(|x| -(PI * x).sin()),
        Case::BurgersTraveling => Ok(|x| (-30.0 * x * x).exp()),
        other => Err(Error::Config(format!("{other} is not a Burgers case"))),
    }
}

fn burgers_setup(cfg: &RunConfig) -> Result<BurgersSetup> {
    let b = &cfg.burgers;
    Ok(BurgersSetup {
        x_range: (-1.0, 1.0),
        t_start: 0.0,
        schedule: TimeBlocks { blocks: b.blocks, dt: b.dt },
        nu: b.viscosity(),
        n_kernels: b.n_kernels,
        counts: BlockCounts::split(b.points_per_block, b.interior_fraction, b.boundary_per_side)?,
        window: b.window.then_some(WindowSettings {
            size: b.window_size,
            fraction: b.window_fraction,
        }),
        rank_tol: cfg.rank_tol,
        assembly: assembly(cfg),
        corrector: b.corrector,
        scan_points: b.scan_points,
        probe_x: vec![-0.5, 0.0, 0.5],
        seed: cfg.seed()?,
    })
}

fn burgers_oracle(cfg: &RunConfig) -> Result<BurgersOracle> {
    let b = &cfg.burgers;
    let ic = burgers_ic(cfg.case)?;
    let t_end = b.snapshot_times.iter().copied().fold(0.0, f64::max);
    burgers_fd(
        &ic,
        b.viscosity(),
        BurgersOracleConfig {
            nx: b.oracle_nx,
            cfl: b.oracle_cfl,
        },
        None,
        t_end.max(b.dt),
    )
}

fn argmax_abs(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) })
        .0
}

fn burgers(cfg: &RunConfig, art: &mut Artifacts) -> Result<CaseOutput> {
    let seed = cfg.seed()?;
    let b = &cfg.burgers;
    let setup = burgers_setup(cfg)?;
    let ic = burgers_ic(cfg.case)?;
    let run: BurgersRun = run_burgers(&setup, &ic)?;

    let oracle_started = Instant::now();
    let oracle = burgers_oracle(cfg)?;
    let oracle_seconds = oracle_started.elapsed().as_secs_f64();

    let mut report = MetricsReport::new(cfg.case.as_str(), seed);
    let xs = linspace(-1.0, 1.0, b.probe_points);
    for &t in &b.snapshot_times {
        let label = format!("t={t}");
        let block = run.block_at(t)?;
        let pts: Vec<Point> = xs.iter().map(|&x| [x, t]).collect();
        let with_dx = predict_with_dx(&block.kernels, block.weights.c_u.view(), &pts)?;
        let approx: Vec<f64> = with_dx.iter().map(|p| p.0).collect();
        let slope: Vec<f64> = with_dx.iter().map(|p| p.1).collect();
        let exact = xs.iter().map(|&x| oracle.value(x, t)).collect::<Result<Vec<_>>>()?;

        // Band left out of the RMSE: around x = 0 for the standing shock,
        // around the steepest oracle gradient for the traveling one.
        let oracle_slope: Vec<f64> = exact.windows(2).map(|w| w[1] - w[0]).collect();
        let oracle_shock = 0.5 * (xs[argmax_abs(&oracle_slope)] + xs[argmax_abs(&oracle_slope) + 1]);
        let band_center = if cfg.case == Case::BurgersStanding { 0.0 } else { oracle_shock };
        let outside: Vec<usize> = (0..xs.len()).filter(|&i| (xs[i] - band_center).abs() > b.exclude_half_width).collect();
        let pick = |v: &[f64]| outside.iter().map(|&i| v[i]).collect::<Vec<f64>>();

        pushed(
            &mut report,
            art,
            &label,
            &PairedSamples {
                name: "u".into(),
                points: pts.clone(),
                approx: approx.clone(),
                reference: exact.clone(),
            },
        )?;
        pushed(
            &mut report,
            art,
            &label,
            &PairedSamples {
                name: "u_outside".into(),
                points: outside.iter().map(|&i| pts[i]).collect(),
                approx: pick(&approx),
                reference: pick(&exact),
            },
        )?;
        report.set(format!("shock_x@{label}"), xs[argmax_abs(&slope)]);
        report.set(format!("oracle_shock_x@{label}"), oracle_shock);
        report.set(format!("band_center@{label}"), band_center);
        if cfg.case == Case::BurgersStanding {
            let n = xs.len();
            let odd = (0..n).map(|i| (approx[i] + approx[n - 1 - i]).abs()).fold(0.0, f64::max);
            report.set(format!("odd_defect@{label}"), odd);
        }
    }

    let (mut w_t, mut w_c) = (Vec::new(), Vec::new());
    for blk in &run.blocks {
        if let Some(d) = blk.detection.filter(|d| !d.no_gradient) {
            w_t.push(blk.t0);
            w_c.push(d.window.center);
        }
    }
    report.series.insert("window_t0".into(), w_t);
    report.series.insert("window_center".into(), w_c);
    let ic_res: Vec<f64> = run.trace.records.iter().filter_map(|r| r.ic_residual).collect();
    report.set("max_ic_residual", ic_res.iter().copied().fold(0.0, f64::max));
    report.series.insert("ic_residual".into(), ic_res);

    report.counts.insert("blocks".into(), run.blocks.len());
    report.counts.insert("kernels_per_block".into(), b.n_kernels);
    report.counts.insert("interior_per_block".into(), setup.counts.interior);
    report.counts.insert("initial_per_block".into(), setup.counts.initial);
    report.counts.insert("boundary_per_block".into(), setup.counts.boundary);
    let reports = run.trace.records.iter().flat_map(|r| std::iter::once(&r.predictor).chain(r.corrector.as_ref()));
    report.lsq = LsqSummary::from_reports(reports, run.trace.records.len());
    if !b.window {
        report.notes.push("shock window disabled: uniform points, centers and widths".into());
    }

    let last = run.blocks.last().expect("validated schedule has blocks");
    art.write("kernels_last_block.csv", &last.kernels.to_csv())?;
    write_weights(art, "last_block", &last.weights)?;
    let snap = linspace(-1.0, 1.0, 401);
    let mut fields = String::from("x,t,u\n");
    for &t in &b.snapshot_times {
        for (x, u) in snap.iter().zip(run.profile(t, &snap)?) {
            fields.push_str(&format!("{x},{t},{u}\n"));
        }
    }
    art.write("fields_snapshots.csv", &fields)?;

    Ok(CaseOutput {
        metrics: report,
        trace: run.trace,
        oracle_seconds,
    })
}

// cavity

fn stage_label(re: f64) -> String {
    format!("re={re}")
}

fn cavity_oracle(cfg: &RunConfig, re: f64) -> Result<GridField> {
    let mut oc = CavityOracleConfig::new(re);
    oc.n_grid = cfg.cavity.oracle_grid;
    cavity_fd_cached(oc, cfg.oracle_cache.as_deref())
}

fn cavity(cfg: &RunConfig, art: &mut Artifacts) -> Result<CaseOutput> {
    let seed = cfg.seed()?;
    let c = &cfg.cavity;
    let domain = Domain::CavityUnitSquare;
    let kernels = kernels_for(&domain, c.n_kernels, &SigmaRule::CavityWallDistance, seed, 0)?;
    let cloud = sample_chebyshev_square(c.chebyshev_per_axis)?;
    let setup = FlowSetup {
        schedule: ReynoldsLadder {
            re_target: c.re_target,
            delta: c.delta,
        },
        viscosity: ViscosityLaw { scale: 1.0 },
        rank_tol: cfg.rank_tol,
        assembly: assembly(cfg),
        corrector: c.corrector,
        snapshots: c.snapshots.clone(),
        probes: vec![[0.5, 0.5], [0.5, 0.9]],
    };
    let run = run_navier_stokes(&kernels, &cloud, &setup)?;

    let mut report = MetricsReport::new(Case::Cavity.as_str(), seed);
    let grid = GridSpec { nx: c.probe_grid, ny: c.probe_grid };
    let pts = grid.points(&domain)?;
    let line = linspace(0.0, 1.0, c.probe_grid);
    let vertical: Vec<Point> = line.iter().map(|&y| [0.5, y]).collect();
    let horizontal: Vec<Point> = line.iter().map(|&x| [x, 0.5]).collect();
    let mut oracle_seconds = 0.0;

    // The Stokes stage is compared with the creeping-flow oracle; its
    // velocity does not depend on the viscosity.
    let mut stages: Vec<(String, f64, &FieldWeights)> = vec![("stokes".into(), 0.01, &run.stokes)];
    for &re in &c.snapshots {
        let w = run.snapshot(re).ok_or_else(|| Error::Metric(format!("no snapshot kept at Re = {re}")))?;
        stages.push((stage_label(re), re, w));
    }
    if !c.snapshots.iter().any(|&r| (r - c.re_target).abs() <= 1e-9 * c.re_target.max(1.0)) {
        stages.push((stage_label(c.re_target), c.re_target, &run.weights));
    }

    for (label, re, w) in &stages {
        let started = Instant::now();
        let oracle = cavity_oracle(cfg, *re)?;
        oracle_seconds += started.elapsed().as_secs_f64();

        let [u, v, _] = flow_fields(&kernels, w, &pts)?;
        let mut pair = compare_to_oracle("u", &pts, &u, &oracle, "u")?;
        let ou = pair.reference.clone();
        pushed(&mut report, art, label, &pair)?;
        pair = compare_to_oracle("v", &pts, &v, &oracle, "v")?;
        let ov = pair.reference.clone();
        pushed(&mut report, art, label, &pair)?;
        pushed(
            &mut report,
            art,
            label,
            &PairedSamples {
                name: "speed".into(),
                points: pts.clone(),
                approx: speed(&u, &v),
                reference: speed(&ou, &ov),
            },
        )?;

        let [cu, _, _] = flow_fields(&kernels, w, &vertical)?;
        pushed(&mut report, art, label, &compare_to_oracle("u_centerline", &vertical, &cu, &oracle, "u")?)?;
        let [_, cv, _] = flow_fields(&kernels, w, &horizontal)?;
        pushed(&mut report, art, label, &compare_to_oracle("v_centerline", &horizontal, &cv, &oracle, "v")?)?;
        let worst = report.comparison(label, "u_centerline").map_or(0.0, |s| s.max_abs);
        let worst = worst.max(report.comparison(label, "v_centerline").map_or(0.0, |s| s.max_abs));
        report.set(format!("centerline_max_error@{label}"), worst);

        art.write(&format!("fields_{label}.csv"), &export_field_grid(&kernels, w, &domain, grid)?)?;
    }

    // Mirror symmetry of the Stokes stage about x = 1/2, by grid index.
    let n = c.probe_grid;
    let full: Vec<Point> = line.iter().flat_map(|&y| line.iter().map(move |&x| [x, y])).collect();
    let [su, sv, _] = flow_fields(&kernels, &run.stokes, &full)?;
    let mut asym = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let (a, m) = (j * n + i, j * n + n - 1 - i);
            asym = asym.max((su[a] - su[m]).abs()).max((sv[a] + sv[m]).abs());
        }
    }
    report.set("stokes_symmetry_defect", asym);

    // Lid row: interior probe nodes on y = 1 should carry the lid speed.
    let lid: Vec<Point> = line[1..n - 1].iter().map(|&x| [x, 1.0]).collect();
    let [lu, lv, _] = flow_fields(&kernels, &run.weights, &lid)?;
    let lid_err = lu.iter().zip(&lv).map(|(a, b)| (a - 1.0).abs().max(b.abs())).fold(0.0, f64::max);
    report.set("lid_row_max_error", lid_err);
    let below: Vec<Point> = line[1..n - 1].iter().map(|&x| [x, line[n - 2]]).collect();
    let [bu, bv, _] = flow_fields(&kernels, &run.weights, &below)?;
    let max_speed = speed(&bu, &bv).into_iter().fold(0.0, f64::max);
    report.set("lid_adjacent_max_speed", max_speed);
    if max_speed > 1.0 + c.lid_slack {
        report.notes.push(format!("speed {max_speed:.3} next to the lid exceeds 1 + {}", c.lid_slack));
    }

    report.counts.insert("kernels".into(), kernels.len());
    report.counts.insert("interior_points".into(), cloud.interior.len());
    report.counts.insert("boundary_points".into(), cloud.boundary.len());
    let reports = run.trace.records.iter().flat_map(|r| std::iter::once(&r.predictor).chain(r.corrector.as_ref()));
    report.lsq = LsqSummary::from_reports(reports, run.trace.records.len());

    art.write("points.csv", &cloud.to_csv())?;
    art.write("kernels.csv", &kernels.to_csv())?;
    write_weights(art, "final", &run.weights)?;
    Ok(CaseOutput {
        metrics: report,
        trace: run.trace,
        oracle_seconds,
    })
}

// stenosis

/// Stenosis network run at a given resolution multiplier.
struct StenosisSolve {
    kernels: KernelSet,
    cloud: PointCloud,
    run: FlowRun,
}

fn stenosis_solve(cfg: &RunConfig, factor: f64, salt: u64) -> Result<StenosisSolve> {
    let seed = cfg.seed()?;
    let s = &cfg.stenosis;
    let scale = |n: usize| ((n as f64) * factor).round() as usize;
    let domain = Domain::StenoticChannel(s.geometry);
    let cloud = sample_stenosis(
        &s.geometry,
        scale(s.n_interior),
        scale(s.n_boundary),
        s.cluster_scale,
        s.u_max,
        &mut stream(seed, Stream::Sampling, salt),
    )?;
    let rule = SigmaRule::StenosisWallDistance {
        throat_half_width: s.geometry.throat_half_width,
    };
    let kernels = kernels_for(&domain, scale(s.n_kernels), &rule, seed, salt)?;
    let setup = FlowSetup {
        schedule: ReynoldsLadder {
            re_target: s.re_target,
            delta: s.delta,
        },
        viscosity: ViscosityLaw {
            scale: s.u_max * s.geometry.inlet_half_width,
        },
        rank_tol: cfg.rank_tol,
        assembly: assembly(cfg),
        corrector: s.corrector,
        snapshots: s.snapshots.clone(),
        probes: vec![[s.geometry.throat_x(), 0.0]],
    };
    let run = run_navier_stokes(&kernels, &cloud, &setup)?;
    Ok(StenosisSolve { kernels, cloud, run })
}

/// Stored refined-run weights at every compared Reynolds number.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StenosisReference {
    pub kernels_csv: String,
    pub stages: Vec<(f64, FieldWeights)>,
}

impl StenosisReference {
    fn kernels(&self) -> Result<KernelSet> {
        KernelSet::from_csv(&self.kernels_csv)
    }

    fn at(&self, re: f64) -> Result<&FieldWeights> {
        self.stages
            .iter()
            .find(|(r, _)| (r - re).abs() <= 1e-9 * re.max(1.0))
            .map(|(_, w)| w)
            .ok_or_else(|| Error::Oracle(format!("refined reference has no stage at Re = {re}")))
    }
}

const REFINED_SALT: u64 = 1;

fn reference_key(cfg: &RunConfig) -> Result<String> {
    let s: &StenosisConfig = &cfg.stenosis;
    let text = format!(
        "stenosis_ref v1 seed={} tol={:e} bc={:e} {}",
        cfg.seed()?,
        cfg.rank_tol,
        cfg.bc_weight,
        serde_json::to_string(&(
            s.n_kernels,
            s.n_interior,
            s.n_boundary,
            s.geometry,
            s.u_max,
            s.cluster_scale,
            s.re_target,
            s.delta,
            &s.snapshots,
            s.corrector,
            s.refine_factor
        ))?
    );
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}

/// Refined-resolution self-oracle for the stenosis case, read from or
/// written to the oracle cache when one is configured.
pub fn stenosis_reference(cfg: &RunConfig) -> Result<StenosisReference> {
    let path = match &cfg.oracle_cache {
        Some(dir) => Some(dir.join(format!("stenosis_ref_{}.json", reference_key(cfg)?))),
        None => None,
    };
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        let text = std::fs::read_to_string(p)?;
        if let Ok(r) = serde_json::from_str::<StenosisReference>(&text) {
            return Ok(r);
        }
    }
    let solved = match stenosis_solve(cfg, cfg.stenosis.refine_factor, REFINED_SALT) {
        Ok(s) => s,
        Err(Error::Divergence { stage, reason }) => {
            return Err(Error::Oracle(format!("refined stenosis reference diverged at {stage}: {reason}")))
        }
        Err(e) => return Err(e),
    };
    let mut stages = solved.run.snapshots.clone();
    stages.push((cfg.stenosis.re_target, solved.run.weights.clone()));
    let reference = StenosisReference {
        kernels_csv: solved.kernels.to_csv(),
        stages,
    };
    if let Some(p) = path {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = p.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string(&reference)?)?;
        std::fs::rename(&tmp, &p)?;
    }
    Ok(reference)
}

/// Cross-section samples `(x, y_k)` spanning the local channel width.
fn section(geometry: &crate::geometry::Stenosis, x: f64, n: usize) -> Vec<Point> {
    let h = geometry.half_width(x);
    linspace(-h, h, n).into_iter().map(|y| [x, y]).collect()
}

fn stenosis(cfg: &RunConfig, art: &mut Artifacts) -> Result<CaseOutput> {
    let seed = cfg.seed()?;
    let s = &cfg.stenosis;
    let g = s.geometry;
    let solved = stenosis_solve(cfg, 1.0, 0)?;
    let started = Instant::now();
    let reference = stenosis_reference(cfg)?;
    let oracle_seconds = started.elapsed().as_secs_f64();
    let ref_kernels = reference.kernels()?;
    let (kernels, run) = (&solved.kernels, &solved.run);

    let domain = Domain::StenoticChannel(g);
    let nx = ((s.probe_points as f64 * g.length / (2.0 * g.inlet_half_width)).sqrt().round() as usize).max(3);
    let ny = (s.probe_points / nx).max(3);
    let grid = GridSpec { nx, ny };
    let pts = grid.points(&domain)?;

    let mut report = MetricsReport::new(Case::Stenosis.as_str(), seed);
    let mut stages: Vec<(String, f64, &FieldWeights)> = Vec::new();
    for &re in &s.snapshots {
        let w = run.snapshot(re).ok_or_else(|| Error::Metric(format!("no snapshot kept at Re = {re}")))?;
        stages.push((stage_label(re), re, w));
    }
    if !s.snapshots.iter().any(|&r| (r - s.re_target).abs() <= 1e-9 * s.re_target.max(1.0)) {
        stages.push((stage_label(s.re_target), s.re_target, &run.weights));
    }

    let inlet_flux = 4.0 / 3.0 * s.u_max * g.inlet_half_width;
    let throat = section(&g, g.throat_x(), s.flux_samples);
    let inlet = section(&g, 0.0, s.flux_samples);
    let outlet = section(&g, g.length, s.flux_samples);
    for (label, re, w) in &stages {
        let [u, v, p] = flow_fields(kernels, w, &pts)?;
        let [ru, rv, rp] = flow_fields(&ref_kernels, reference.at(*re)?, &pts)?;
        let rho = s.density;
        let scaled = |q: Vec<f64>| q.into_iter().map(|x| rho * x).collect::<Vec<f64>>();
        for (name, a, r) in [
            ("u", u.clone(), ru.clone()),
            ("v", v.clone(), rv.clone()),
            ("speed", speed(&u, &v), speed(&ru, &rv)),
            ("p", scaled(p), scaled(rp)),
        ] {
            pushed(
                &mut report,
                art,
                label,
                &PairedSamples {
                    name: name.into(),
                    points: pts.clone(),
                    approx: a,
                    reference: r,
                },
            )?;
        }

        let q = flux_check(kernels, w.c_u.view(), &g, &s.stations, s.flux_samples)?;
        let defect = q.iter().map(|qx| (qx - inlet_flux).abs() / inlet_flux).fold(0.0, f64::max);
        report.set(format!("flux_defect@{label}"), defect);
        report.series.insert(format!("flux@{label}"), q);

        let max_speed = |section: &[Point]| -> Result<f64> {
            let [a, b, _] = flow_fields(kernels, w, section)?;
            Ok(speed(&a, &b).into_iter().fold(0.0, f64::max))
        };
        report.set(format!("throat_max_speed@{label}"), max_speed(&throat)?);
        report.set(format!("inlet_max_speed@{label}"), max_speed(&inlet)?);
        let [_, _, po] = flow_fields(kernels, w, &outlet)?;
        report.set(format!("outlet_pressure_mean@{label}"), rho * po.iter().sum::<f64>() / po.len() as f64);

        art.write(&format!("fields_{label}.csv"), &export_field_grid(kernels, w, &domain, grid)?)?;
    }
    report.series.insert("flux_stations".into(), s.stations.clone());
    report.set("inlet_flux", inlet_flux);

    report.counts.insert("kernels".into(), kernels.len());
    report.counts.insert("reference_kernels".into(), ref_kernels.len());
    report.counts.insert("interior_points".into(), solved.cloud.interior.len());
    report.counts.insert("boundary_points".into(), solved.cloud.boundary.len());
    report.counts.insert(
        "outlet_points".into(),
        solved.cloud.count_tagged(|t| matches!(t, BcTag::Outlet)),
    );
    let reports = run.trace.records.iter().flat_map(|r| std::iter::once(&r.predictor).chain(r.corrector.as_ref()));
    report.lsq = LsqSummary::from_reports(reports, run.trace.records.len());

    art.write("points.csv", &solved.cloud.to_csv())?;
    art.write("kernels.csv", &kernels.to_csv())?;
    write_weights(art, "final", &run.weights)?;
    Ok(CaseOutput {
        metrics: report,
        trace: solved.run.trace,
        oracle_seconds,
    })
}

// oracles

/// Fills the oracle cache for a case and returns a short description of
/// what was computed. Burgers oracles are fast and are written as snapshot
/// profiles into `out` instead.
pub fn precompute_oracles(cfg: &RunConfig, out: &Path) -> Result<String> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    match cfg.case {
        Case::PoissonDisk => {
            let grid = GridSpec {
                nx: cfg.poisson.probe_grid,
                ny: cfg.poisson.probe_grid,
            };
            let pts = grid.points(&Domain::UnitDisk)?;
            let exact = poisson_exact(&pts)?;
            let mut text = String::from("x,y,u\n");
            for (p, u) in pts.iter().zip(exact) {
                text.push_str(&format!("{},{},{u}\n", p[0], p[1]));
            }
            std::fs::write(out.join("poisson_exact.csv"), text)?;
            Ok(format!("exact Poisson field at {} nodes", pts.len()))
        }
        Case::BurgersStanding | Case::BurgersTraveling => {
            let oracle = burgers_oracle(cfg)?;
            let mut text = String::from("x,t,u\n");
            for &t in &cfg.burgers.snapshot_times {
                for (x, u) in oracle.x.iter().zip(oracle.profile(t)?) {
                    text.push_str(&format!("{x},{t},{u}\n"));
                }
            }
            let name = format!("{}_oracle.csv", cfg.case);
            std::fs::write(out.join(&name), text)?;
            Ok(format!("Burgers oracle profiles written to {name}"))
        }
        Case::Cavity => {
            if cfg.oracle_cache.is_none() {
                return Err(Error::Config("oracle precompute needs `oracle_cache`".into()));
            }
            let mut list = vec![0.01];
            list.extend(cfg.cavity.snapshots.iter().copied());
            list.push(cfg.cavity.re_target);
            for &re in &list {
                cavity_oracle(cfg, re)?;
            }
            Ok(format!("cavity oracles cached for Re in {list:?}"))
        }
        Case::Stenosis => {
            if cfg.oracle_cache.is_none() {
                return Err(Error::Config("oracle precompute needs `oracle_cache`".into()));
            }
            let r = stenosis_reference(cfg)?;
            Ok(format!("refined stenosis reference cached ({} stages)", r.stages.len()))
        }
    }
}
