//! Curriculum drivers: time-block marching for Burgers and Reynolds-number
//! continuation for steady Navier-Stokes.

use ndarray::{s, Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_burgers, assemble_navier_stokes, AssemblyOptions, FlowMode, ReferenceField, ResidualSystem, RowTag};
use crate::basis::{eval_features, predict_field, FeatureBlock, KernelSet};
use crate::error::{Error, Result};
use crate::geometry::{detect_shock_window, linspace, place_centers, sample_space_time_block, BlockCounts, Domain, Point, PointCloud, ShockDetection};
use crate::lsq::{solve_least_squares, FieldWeights, LsqReport};
use crate::rng::{stream, Stream};
use crate::sigma::{assign_sigmas, SigmaRule};

/// A stage whose relative residual exceeds this is treated as diverged.
pub const DIVERGENCE_RESIDUAL: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlocks {
    pub blocks: usize,
    pub dt: f64,
}

impl TimeBlocks {
    pub fn validate(&self) -> Result<()> {
        if self.blocks >= 1 && self.dt > 0.0 && self.dt.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("need blocks >= 1 and dt > 0, got {} / {}", self.blocks, self.dt)))
        }
    }

    pub fn duration(&self) -> f64 {
        self.blocks as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReynoldsLadder {
    pub re_target: f64,
    pub delta: f64,
}

impl ReynoldsLadder {
    pub fn validate(&self) -> Result<()> {
        if self.re_target > 0.0 && self.delta > 0.0 && self.re_target.is_finite() && self.delta.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "need re_target > 0 and delta > 0, got {} / {}",
                self.re_target, self.delta
            )))
        }
    }

    /// `delta, 2 delta, ...` up to and including `re_target`. Targets below
    /// `delta` give a single stage.
    pub fn stages(&self) -> Vec<f64> {
        let n = ((self.re_target / self.delta) - 1e-9).ceil().max(1.0) as usize;
        (1..=n).map(|k| if k == n { self.re_target } else { k as f64 * self.delta }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurriculumSchedule {
    TimeBlocks(TimeBlocks),
    Reynolds(ReynoldsLadder),
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            CurriculumSchedule::TimeBlocks(t) => t.validate(),
            CurriculumSchedule::Reynolds(r) => r.validate(),
        }
    }
}

/// One completed curriculum stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub label: String,
    /// Block start time or Reynolds number.
    pub parameter: f64,
    pub n_rows: usize,
    pub n_unknowns: usize,
    pub solves: usize,
    pub predictor: LsqReport,
    pub corrector: Option<LsqReport>,
    /// `max |u_corrector - u_predictor|` at the interior points.
    pub correction: Option<f64>,
    /// Largest absolute residual among initial-condition rows.
    pub ic_residual: Option<f64>,
    pub window_center: Option<f64>,
    pub probes: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<StageRecord>,
}

impl SolveTrace {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<StageRecord>, _>>()?;
        Ok(SolveTrace { records })
    }

    /// Copy with wall-clock timings zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> SolveTrace {
        let mut t = self.clone();
        for r in &mut t.records {
            r.predictor.solve_time = 0.0;
            if let Some(c) = r.corrector.as_mut() {
                c.solve_time = 0.0;
            }
        }
        t
    }

    pub fn total_solve_time(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.predictor.solve_time + r.corrector.as_ref().map_or(0.0, |c| c.solve_time))
            .sum()
    }
}

fn check_stage(stage: &str, weights: &FieldWeights, report: &LsqReport) -> Result<()> {
    if !weights.all_finite() {
        return Err(Error::Divergence {
            stage: stage.to_string(),
            reason: "non-finite weights".into(),
        });
    }
    if !(report.relative_residual <= DIVERGENCE_RESIDUAL) {
        return Err(Error::Divergence {
            stage: stage.to_string(),
            reason: format!("relative residual {}", report.relative_residual),
        });
    }
    Ok(())
}

/// Network velocities at `points`, the linearization point of the next solve.
pub fn reference_from_weights(kernels: &KernelSet, weights: &FieldWeights, points: &[Point]) -> Result<ReferenceField> {
    if weights.kernel_id != kernels.id() {
        return Err(Error::InvalidParameter(format!("weights `{}` belong to a different kernel set", weights.label)));
    }
    let u = predict_field(kernels, weights.c_u.view(), points)?;
    match &weights.c_v {
        Some(cv) => Ok(ReferenceField::vector(u, predict_field(kernels, cv.view(), points)?)),
        None => Ok(ReferenceField::scalar(u)),
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs_residual(sys: &ResidualSystem, c: ArrayView1<f64>, tag: RowTag) -> Result<Option<f64>> {
    let r = sys.residual(c)?;
    let worst = sys
        .tags
        .iter()
        .zip(r.iter())
        .filter(|(t, _)| **t == tag)
        .map(|(_, v)| v.abs())
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSettings {
    /// Total window width.
    pub size: f64,
    /// Share of points and kernels placed inside the window.
    pub fraction: f64,
}

impl Default for WindowSettings {
    fn default() -> Self {
        WindowSettings {
            size: crate::geometry::ShockWindow::DEFAULT_SIZE,
            fraction: crate::geometry::ShockWindow::DEFAULT_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurgersSetup {
    pub x_range: (f64, f64),
    pub t_start: f64,
    pub schedule: TimeBlocks,
    pub nu: f64,
    pub n_kernels: usize,
    pub counts: BlockCounts,
    /// `None` spreads points, centers and widths uniformly.
    pub window: Option<WindowSettings>,
    pub rank_tol: f64,
    pub assembly: AssemblyOptions,
    pub corrector: bool,
    /// Grid size used to scan each block's initial profile.
    pub scan_points: usize,
    /// Abscissae at which `u(x, t_end)` is recorded in the trace.
    pub probe_x: Vec<f64>,
    pub seed: u64,
}

impl BurgersSetup {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        let (a, b) = self.x_range;
        if !(a < b) {
            return Err(Error::InvalidParameter(format!("bad x range [{a}, {b}]")));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("viscosity {} must be non-negative", self.nu)));
        }
        if self.n_kernels == 0 {
            return Err(Error::InvalidCount("need at least one kernel".into()));
        }
        if self.scan_points < 3 {
            return Err(Error::InvalidCount("scan grid needs at least 3 points".into()));
        }
        if let Some(w) = self.window {
            crate::geometry::ShockWindow::new(0.5 * (a + b), 0.5 * w.size, w.fraction)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BurgersBlock {
    pub t0: f64,
    pub dt: f64,
    pub kernels: KernelSet,
    pub weights: FieldWeights,
    pub detection: Option<ShockDetection>,
}

impl BurgersBlock {
    pub fn t_end(&self) -> f64 {
        self.t0 + self.dt
    }

    pub fn profile(&self, t: f64, xs: &[f64]) -> Result<Vec<f64>> {
        let pts: Vec<Point> = xs.iter().map(|&x| [x, t]).collect();
        predict_field(&self.kernels, self.weights.c_u.view(), &pts)
    }
}

#[derive(Debug, Clone)]
pub struct BurgersRun {
    pub blocks: Vec<BurgersBlock>,
    pub trace: SolveTrace,
}

impl BurgersRun {
    /// Block owning time `t`. Shared block edges belong to the later block,
    /// except the final time which belongs to the last one.
    pub fn block_at(&self, t: f64) -> Result<&BurgersBlock> {
        let first = self.blocks.first().ok_or_else(|| Error::Metric("run has no blocks".into()))?;
        let last = self.blocks.last().unwrap();
        let tol = 1e-9 * first.dt;
        if t < first.t0 - tol || t > last.t_end() + tol {
            return Err(Error::Metric(format!("time {t} outside [{}, {}]", first.t0, last.t_end())));
        }
        let k = ((t - first.t0) / first.dt + 1e-9).floor().max(0.0) as usize;
        Ok(&self.blocks[k.min(self.blocks.len() - 1)])
    }

    pub fn profile(&self, t: f64, xs: &[f64]) -> Result<Vec<f64>> {
        self.block_at(t)?.profile(t, xs)
    }

    pub fn windows(&self) -> Vec<Option<ShockDetection>> {
        self.blocks.iter().map(|b| b.detection).collect()
    }
}

/// Time-block predictor-corrector marching for `u_t + u u_x = nu u_xx`.
///
/// Each block gets fresh points and kernels. The predictor freezes the
/// advecting velocity at the block's initial profile; the corrector freezes
/// it at the predictor field. The corrector's field at the block end is the
/// next block's initial condition.
pub fn run_burgers(setup: &BurgersSetup, ic: &dyn Fn(f64) -> f64) -> Result<BurgersRun> {
    setup.validate()?;
    let (a, b) = setup.x_range;
    let dt = setup.schedule.dt;
    let scan = linspace(a, b, setup.scan_points);
    let mut blocks: Vec<BurgersBlock> = Vec::with_capacity(setup.schedule.blocks);
    let mut trace = SolveTrace::default();

    for k in 0..setup.schedule.blocks {
        let t0 = setup.t_start + k as f64 * dt;
        let label = format!("block {k}");
        let salt = k as u64;
        let prev = blocks.last();
        let initial = |x: f64| -> f64 {
            match prev {
                None => ic(x),
                Some(p) => {
                    let c = p.weights.c_u.view();
                    (0..p.kernels.len()).map(|j| p.kernels.phi(j, [x, t0]) * c[j]).sum()
                }
            }
        };

        let detection = match setup.window {
            Some(w) => {
                let profile: Vec<f64> = scan.iter().map(|&x| initial(x)).collect();
                let mut d = detect_shock_window(&scan, &profile, w.size)?;
                d.window.fraction = w.fraction;
                Some(d)
            }
            None => None,
        };
        let window = detection.filter(|d| !d.no_gradient).map(|d| d.window);

        let domain = Domain::rectangle(a, b, t0, t0 + dt)?;
        let cloud = sample_space_time_block((a, b), t0, dt, setup.counts, window.as_ref(), &mut stream(setup.seed, Stream::Sampling, salt))?;
        let centers = place_centers(&domain, setup.n_kernels, window.as_ref(), &mut stream(setup.seed, Stream::Centers, salt))?;
        let rule = SigmaRule::BurgersShock {
            band: window.map(|w| (w.left(), w.right())),
            dt,
        };
        let (sx, st) = assign_sigmas(&rule, &centers, &domain, &mut stream(setup.seed, Stream::Sigmas, salt))?;
        let kernels = KernelSet::from_gaussians(&centers, &sx, &st)?;

        // The initial profile is needed at every IC point and, for the
        // predictor, at every interior abscissa.
        let u0: Vec<f64> = cloud.interior.iter().map(|p| initial(p[0])).collect();
        let predictor_sys = assemble_burgers(&kernels, &cloud, &ReferenceField::scalar(u0), setup.nu, &initial, setup.assembly)?;
        let (pred, pred_report) = solve_least_squares(&predictor_sys, setup.rank_tol, format!("{label} predictor"))?;
        check_stage(&format!("{label} predictor"), &pred, &pred_report)?;

        let (weights, corrector, correction, final_sys) = if setup.corrector {
            let u_pred = predict_field(&kernels, pred.c_u.view(), &cloud.interior)?;
            let sys = assemble_burgers(&kernels, &cloud, &ReferenceField::scalar(u_pred.clone()), setup.nu, &initial, setup.assembly)?;
            let (corr, report) = solve_least_squares(&sys, setup.rank_tol, label.clone())?;
            check_stage(&format!("{label} corrector"), &corr, &report)?;
            let u_corr = predict_field(&kernels, corr.c_u.view(), &cloud.interior)?;
            (corr, Some(report), Some(max_abs_diff(&u_corr, &u_pred)), sys)
        } else {
            let mut w = pred.clone();
            w.label = label.clone();
            (w, None, None, predictor_sys)
        };
        let ic_residual = max_abs_residual(&final_sys, weights.c_u.view(), RowTag::InitialCondition)?.map(|r| r / setup.assembly.bc_weight);

        let block = BurgersBlock {
            t0,
            dt,
            kernels,
            weights,
            detection,
        };
        let probes = block.profile(block.t_end(), &setup.probe_x)?;
        trace.records.push(StageRecord {
            stage: k,
            label,
            parameter: t0,
            n_rows: final_sys.n_rows(),
            n_unknowns: final_sys.n_unknowns(),
            solves: 1 + usize::from(corrector.is_some()),
            predictor: pred_report,
            corrector,
            correction,
            ic_residual,
            window_center: window.map(|w| w.center),
            probes,
        });
        blocks.push(block);
    }
    Ok(BurgersRun { blocks, trace })
}

/// Kinematic viscosity as a function of the Reynolds number, `nu = scale / Re`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscosityLaw {
    /// Velocity scale times length scale divided by density.
    pub scale: f64,
}

impl ViscosityLaw {
    pub fn nu(&self, re: f64) -> f64 {
        self.scale / re
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSetup {
    pub schedule: ReynoldsLadder,
    pub viscosity: ViscosityLaw,
    pub rank_tol: f64,
    pub assembly: AssemblyOptions,
    /// Re-linearize and solve again at every Reynolds number.
    pub corrector: bool,
    /// Reynolds numbers whose weights are kept besides the final ones.
    pub snapshots: Vec<f64>,
    /// Points at which `(u, v)` are recorded in the trace.
    pub probes: Vec<Point>,
}

impl FlowSetup {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.viscosity.scale > 0.0 && self.viscosity.scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("viscosity scale {} must be positive", self.viscosity.scale)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub stokes: FieldWeights,
    pub weights: FieldWeights,
    pub snapshots: Vec<(f64, FieldWeights)>,
    pub trace: SolveTrace,
}

impl FlowRun {
    pub fn snapshot(&self, re: f64) -> Option<&FieldWeights> {
        self.snapshots.iter().find(|(r, _)| (r - re).abs() <= 1e-9 * re.max(1.0)).map(|(_, w)| w)
    }
}

/// Flow system whose momentum rows are rewritten in place for each new
/// linearization point; kernels and points stay fixed across stages.
struct FlowTemplate {
    system: ResidualSystem,
    features: FeatureBlock,
}

impl FlowTemplate {
    fn new(kernels: &KernelSet, cloud: &PointCloud, nu: f64, opts: AssemblyOptions) -> Result<Self> {
        Ok(FlowTemplate {
            system: assemble_navier_stokes(kernels, cloud, FlowMode::Stokes, nu, opts)?,
            features: eval_features(kernels, &cloud.interior),
        })
    }

    fn update(&mut self, reference: Option<&ReferenceField>, nu: f64) {
        let nk = self.features.n_kernels();
        let f = &self.features;
        for j in 0..f.n_points() {
            let (ur, vr) = reference.map_or((0.0, 0.0), |r| (r.u_ref[j], r.v_ref[j]));
            let (ix, iy) = (3 * j + 1, 3 * j + 2);
            for k in 0..nk {
                let t = ur * f.dphi_dx[[j, k]] + vr * f.dphi_dy[[j, k]] - nu * (f.d2phi_dx2[[j, k]] + f.d2phi_dy2[[j, k]]);
                self.system.a[[ix, k]] = t;
                self.system.a[[iy, nk + k]] = t;
            }
        }
    }

    fn reference(&self, w: &FieldWeights) -> ReferenceField {
        let cv = w.c_v.as_ref().expect("flow weights carry c_v");
        ReferenceField::vector(self.features.phi.dot(&w.c_u).to_vec(), self.features.phi.dot(cv).to_vec())
    }
}

fn flow_probes(kernels: &KernelSet, w: &FieldWeights, probes: &[Point]) -> Result<Vec<f64>> {
    let u = predict_field(kernels, w.c_u.view(), probes)?;
    let v = predict_field(kernels, w.c_v.as_ref().expect("flow weights carry c_v").view(), probes)?;
    Ok(u.into_iter().zip(v).flat_map(|(a, b)| [a, b]).collect())
}

/// Reynolds continuation: a Stokes solve, then one quasi-linear solve per
/// rung of the ladder, each linearized about the previous rung's velocity at
/// the interior points.
pub fn run_navier_stokes(kernels: &KernelSet, cloud: &PointCloud, setup: &FlowSetup) -> Result<FlowRun> {
    setup.validate()?;
    let ladder = setup.schedule.stages();
    let mut template = FlowTemplate::new(kernels, cloud, setup.viscosity.nu(ladder[0]), setup.assembly)?;
    let mut trace = SolveTrace::default();
    let record = |stage: usize, label: String, re: f64, sys: &ResidualSystem, pred: LsqReport, corr: Option<LsqReport>, correction: Option<f64>, w: &FieldWeights| -> Result<StageRecord> {
        Ok(StageRecord {
            stage,
            label,
            parameter: re,
            n_rows: sys.n_rows(),
            n_unknowns: sys.n_unknowns(),
            solves: 1 + usize::from(corr.is_some()),
            predictor: pred,
            corrector: corr,
            correction,
            ic_residual: None,
            window_center: None,
            probes: flow_probes(kernels, w, &setup.probes)?,
        })
    };

    let (stokes, report) = solve_least_squares(&template.system, setup.rank_tol, "stokes")?;
    check_stage("stokes", &stokes, &report)?;
    trace.records.push(record(0, "stokes".into(), 0.0, &template.system, report, None, None, &stokes)?);

    let mut current = stokes.clone();
    let mut snapshots = Vec::new();
    for (i, &re) in ladder.iter().enumerate() {
        let label = format!("re={re}");
        let nu = setup.viscosity.nu(re);
        let reference = template.reference(&current);
        template.update(Some(&reference), nu);
        let (mut w, report) = solve_least_squares(&template.system, setup.rank_tol, label.clone())?;
        check_stage(&label, &w, &report)?;
        let mut corr = None;
        let mut correction = None;
        if setup.corrector {
            let r2 = template.reference(&w);
            template.update(Some(&r2), nu);
            let (w2, rep2) = solve_least_squares(&template.system, setup.rank_tol, label.clone())?;
            check_stage(&format!("{label} corrector"), &w2, &rep2)?;
            let r3 = template.reference(&w2);
            correction = Some(max_abs_diff(&r3.u_ref, &r2.u_ref).max(max_abs_diff(&r3.v_ref, &r2.v_ref)));
            corr = Some(rep2);
            w = w2;
        }
        trace.records.push(record(i + 1, label, re, &template.system, report, corr, correction, &w)?);
        if setup.snapshots.iter().any(|s| (s - re).abs() <= 1e-9 * re.max(1.0)) {
            snapshots.push((re, w.clone()));
        }
        current = w;
    }
    Ok(FlowRun {
        stokes,
        weights: current,
        snapshots,
        trace,
    })
}

/// Velocity and pressure of flow weights at `points`.
pub fn flow_fields(kernels: &KernelSet, w: &FieldWeights, points: &[Point]) -> Result<[Vec<f64>; 3]> {
    let zero = Array1::zeros(kernels.len());
    let cv = w.c_v.as_ref().unwrap_or(&zero);
    let cp = w.c_p.as_ref().unwrap_or(&zero);
    Ok([
        predict_field(kernels, w.c_u.view(), points)?,
        predict_field(kernels, cv.view(), points)?,
        predict_field(kernels, cp.view(), points)?,
    ])
}

/// Stacked `[c_u; c_v; c_p]` of flow weights.
pub fn stacked(w: &FieldWeights) -> Array1<f64> {
    let nk = w.n_kernels();
    let mut c = Array1::zeros(if w.is_vector() { 3 * nk } else { nk });
    c.slice_mut(s![..nk]).assign(&w.c_u);
    if let (Some(v), Some(p)) = (&w.c_v, &w.c_p) {
        c.slice_mut(s![nk..2 * nk]).assign(v);
        c.slice_mut(s![2 * nk..]).assign(p);
    }
    c
}
