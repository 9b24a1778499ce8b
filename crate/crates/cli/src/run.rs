//! Dispatch of a parsed configuration to the solver modules and artifact emission.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use curvlab::graph::{
    bound_probe_campaign, curvature_bound_probe, dirichlet_newton_solve, nonpositive_q_consistent,
    write_campaign_csv, write_solution_csv, CampaignRow, CampaignSpec, CurvatureBoundProbe, GraphField,
    GraphProblem, PlanarGrid,
};
use curvlab::inequality::{run_campaign, CampaignSummary};
use curvlab::measure::{
    homotopy_solve, initial_sphere_radius, verify_apriori_bounds, BoundsReport, HomotopyTrace, MeasureProblem,
    SURFACE_DIM,
};
use curvlab::newton::SolveReport;
use curvlab::sphere::{radial_geometry, write_csv, write_obj, RadialField, SphericalGrid};
use curvlab::study::{
    constant_field_study, ellipsoid_curvature_study, graph_recovery_study, structure_residual_study,
    successive_differences, with_orders, write_study_csv, RecoveryRun, StudyRow,
};
use serde::Serialize;

use crate::config::{parse_config, GraphConfig, MeasureConfig, Mode, RunConfig, StudyConfig};
use crate::manifest::{list_outputs, sha256_hex, timestamp, FileEntry, RunManifest, MANIFEST_NAME};
use crate::CliError;

pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

struct Ctx<'a> {
    out: &'a Path,
    quiet: bool,
}

impl Ctx<'_> {
    fn progress(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.out.join(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        Ok(BufWriter::new(file))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Usage(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> curvlab::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

pub fn execute(mode: Mode, config_path: &Path, opts: &Options) -> Result<(), CliError> {
    let started_at = timestamp();
    let (mut cfg, bytes) = parse_config(config_path, mode)?;
    if let Some(seed) = opts.seed {
        cfg.seed = Some(seed);
    }
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set output_dir".into()))?;
    fs::create_dir_all(&out)
        .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", out.display())))?;
    let ctx = Ctx { out: &out, quiet: opts.quiet };
    ctx.progress(format!("curvlab {}: writing to {}", mode.name(), out.display()));

    let result = match mode {
        Mode::SolveMeasure => solve_measure(&ctx, &cfg),
        Mode::SolveGraph => solve_graph(&ctx, &cfg),
        Mode::VerifyInequalities => verify_inequalities(&ctx, &cfg),
        Mode::ConvergenceStudy => convergence_study(&ctx, &cfg),
    };

    let (exit_code, status) = match &result {
        Ok(()) => (0, "ok".to_string()),
        Err(e) => (e.exit_code(), e.to_string()),
    };
    let mut files = list_outputs(&out)?;
    files.push(FileEntry { path: MANIFEST_NAME.into(), bytes: 0, sha256: None });
    let manifest = RunManifest {
        tool: "curvlab",
        version: env!("CARGO_PKG_VERSION"),
        mode: mode.name(),
        config: &cfg,
        config_path: config_path.display().to_string(),
        input_sha256: sha256_hex(&bytes),
        started_at,
        finished_at: timestamp(),
        exit_code,
        status,
        files,
    };
    ctx.json(MANIFEST_NAME, &manifest)?;
    ctx.progress(format!("done: exit code {exit_code}"));
    result
}

#[derive(Serialize)]
struct MeasureReport<'a> {
    problem: &'a MeasureConfig,
    warnings: &'a [String],
    start_radius: f64,
    /// `t` reached by the continuation.
    t_reached: f64,
    total_newton_iters: usize,
    bounds: Option<BoundsReport>,
    trace: &'a HomotopyTrace,
    error: Option<String>,
}

fn sphere_grid(g: (usize, usize)) -> Result<Arc<SphericalGrid>, CliError> {
    Ok(Arc::new(SphericalGrid::new(g.0, g.1)?))
}

fn solve_measure(ctx: &Ctx, cfg: &RunConfig) -> Result<(), CliError> {
    let m = cfg.measure.as_ref().expect("validated");
    let prob = MeasureProblem::new(m.operator, m.p, m.phi.clone(), sphere_grid(m.grid)?)?;
    for w in prob.warnings() {
        ctx.progress(format!("warning: {w}"));
    }
    let start_radius = initial_sphere_radius(&m.operator, m.p, SURFACE_DIM)?;
    ctx.progress(format!("homotopy from the sphere of radius {start_radius:.6} on a {:?} grid", m.grid));
    fn report<'a>(
        m: &'a MeasureConfig,
        warnings: &'a [String],
        start_radius: f64,
        trace: &'a HomotopyTrace,
        bounds: Option<BoundsReport>,
        error: Option<String>,
    ) -> MeasureReport<'a> {
        MeasureReport {
            problem: m,
            warnings,
            start_radius,
            t_reached: trace.t_reached(),
            total_newton_iters: trace.total_newton_iters(),
            bounds,
            trace,
            error,
        }
    }
    let report = |trace, bounds, error| report(m, prob.warnings(), start_radius, trace, bounds, error);
    let (field, trace) = match homotopy_solve(&prob, &cfg.solver.schedule()) {
        Ok(r) => r,
        Err(curvlab::Error::ContinuationFailure { t_reached, reason, trace }) => {
            let msg = format!("continuation stalled at t = {t_reached}: {reason}");
            ctx.json("report.json", &report(&trace, None, Some(msg.clone())))?;
            return Err(CliError::NonConvergence(msg));
        }
        Err(e) => {
            let err = CliError::from(e);
            ctx.json("report.json", &report(&HomotopyTrace::default(), None, Some(err.to_string())))?;
            return Err(err);
        }
    };
    let bounds = verify_apriori_bounds(&field, &prob)?;
    ctx.progress(format!(
        "t = 1 reached, {} Newton iterations, residual {:.3e}, u_min {:.6}",
        trace.total_newton_iters(),
        bounds.residual_max,
        bounds.u_min
    ));
    let geom = radial_geometry(&field)?;
    ctx.write_with("solution.csv", |w| write_csv(&geom, m.operator.k(), w))?;
    ctx.write_with("surface.obj", |w| write_obj(&field, w))?;
    let hard = bounds.hard_failure || !bounds.admissible;
    ctx.json("report.json", &report(&trace, Some(bounds.clone()), None))?;
    if hard {
        return Err(CliError::HardFailure(format!(
            "solution fails the a posteriori checks (admissible {}, u_min {:e})",
            bounds.admissible, bounds.u_min
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct GraphReport<'a> {
    problem: &'a GraphConfig,
    warnings: &'a [String],
    solve: Option<&'a SolveReport>,
    probe: Option<CurvatureBoundProbe>,
    /// `max |g − g_exact|` for a manufactured right-hand side.
    error_vs_exact: Option<f64>,
    campaign: Option<&'a [CampaignRow]>,
    /// Every `q ≤ 0` campaign row converged wherever a `q ∈ (0, 1]` row did.
    nonpositive_q_consistent: Option<bool>,
    error: Option<String>,
}

fn solve_graph(ctx: &Ctx, cfg: &RunConfig) -> Result<(), CliError> {
    let g = cfg.graph.as_ref().expect("validated");
    let grid = Arc::new(PlanarGrid::new(g.domain, g.nodes, g.nodes)?);
    let prob = GraphProblem::from_exact(grid.clone(), g.k, g.q, &g.boundary, g.rhs.clone())?;
    for w in prob.warnings() {
        ctx.progress(format!("warning: {w}"));
    }
    let exact = g.boundary.sample(&grid)?;
    let start = GraphField::new(&prob, exact.clone())?;
    let opts = cfg.solver.newton();
    let mut report = GraphReport {
        problem: g,
        warnings: prob.warnings(),
        solve: None,
        probe: None,
        error_vs_exact: None,
        campaign: None,
        nonpositive_q_consistent: None,
        error: None,
    };
    let (field, solve) = match dirichlet_newton_solve(&start, &prob, &opts) {
        Ok(r) => r,
        Err(curvlab::Error::NonConvergence { reason, report: solve }) => {
            let msg = format!("Newton iteration did not converge: {reason}");
            report.solve = Some(&solve);
            report.error = Some(msg.clone());
            ctx.json("report.json", &report)?;
            return Err(CliError::NonConvergence(msg));
        }
        Err(e) => {
            let err = CliError::from(e);
            report.error = Some(err.to_string());
            ctx.json("report.json", &report)?;
            return Err(err);
        }
    };
    ctx.progress(format!(
        "converged in {} iterations, residual {:.3e}",
        solve.iterations,
        solve.final_residual()
    ));
    ctx.write_with("solution.csv", |w| write_solution_csv(&field, w))?;
    report.solve = Some(&solve);
    report.probe = Some(curvature_bound_probe(&field, &prob)?);
    if g.rhs.is_none() {
        report.error_vs_exact = Some(field.max_distance(&exact));
    }
    let rows;
    if let Some(c) = &g.campaign {
        let spec = CampaignSpec {
            domain: g.domain,
            k: g.k,
            h: g.rhs.clone().expect("validated"),
            boundary: g.boundary.clone(),
            q_values: c.q_values.clone(),
            grids: c.grids.clone(),
        };
        ctx.progress(format!("curvature probe campaign: {} q values x {} grids", c.q_values.len(), c.grids.len()));
        rows = bound_probe_campaign(&spec, &opts)?;
        ctx.write_with("campaign.csv", |w| write_campaign_csv(&rows, w))?;
        report.nonpositive_q_consistent = Some(nonpositive_q_consistent(&rows));
        report.campaign = Some(&rows);
    }
    ctx.json("report.json", &report)
}

fn verify_inequalities(ctx: &Ctx, cfg: &RunConfig) -> Result<(), CliError> {
    let mut campaign = cfg.inequalities.clone().expect("validated");
    if let Some(seed) = cfg.seed {
        campaign.seed = seed;
    }
    let cases = campaign.cases()?;
    ctx.progress(format!(
        "{} (n, k) cases x {} samples, seed {}",
        cases.len(),
        campaign.sample_count,
        campaign.seed
    ));
    let mut summary: Option<CampaignSummary> = None;
    ctx.write_with("campaign.csv", |w| {
        summary = Some(run_campaign(&campaign, w)?);
        Ok(())
    })?;
    let summary = summary.expect("campaign ran");
    ctx.json("summary.json", &summary)?;
    ctx.progress(format!(
        "{} records, {} hard failures, {} implication violations",
        summary.total_records, summary.hard_failures, summary.implication_violations
    ));
    if !summary.all_passed() {
        return Err(CliError::HardFailure(format!(
            "{} hard failures in the inequality campaign",
            summary.hard_failures
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct StudyReport<'a> {
    study: &'a StudyConfig,
    rows: &'a [StudyRow],
    #[serde(skip_serializing_if = "Vec::is_empty")]
    recovery_runs: Vec<RecoveryRun>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    continuation: Vec<ContinuationSummary>,
    /// `false` when a sub-run failed and the table is partial.
    complete: bool,
    error: Option<String>,
}

#[derive(Serialize)]
struct ContinuationSummary {
    grid: (usize, usize),
    total_newton_iters: usize,
    steps: usize,
}

fn convergence_study(ctx: &Ctx, cfg: &RunConfig) -> Result<(), CliError> {
    let study = cfg.study.as_ref().expect("validated");
    let mut raw: Vec<(usize, usize, f64)> = Vec::new();
    let mut rows: Option<Vec<StudyRow>> = None;
    let mut recovery_runs = Vec::new();
    let mut continuation = Vec::new();
    let mut failure: Option<CliError> = None;
    // one sub-run per grid so that a failure still leaves a partial table
    let mut push = |r: curvlab::Result<Vec<StudyRow>>, raw: &mut Vec<(usize, usize, f64)>| match r {
        Ok(rs) => {
            raw.extend(rs.iter().map(|r| (r.grid.0, r.grid.1, r.error)));
            true
        }
        Err(e) => {
            failure = Some(e.into());
            false
        }
    };
    match study {
        StudyConfig::EllipsoidCurvature { axes, grids } => {
            for &g in grids {
                ctx.progress(format!("ellipsoid curvatures on {g:?}"));
                if !push(ellipsoid_curvature_study(*axes, &[g]), &mut raw) {
                    break;
                }
            }
        }
        StudyConfig::ConstantField { radius, grids } => {
            for &g in grids {
                if !push(constant_field_study(*radius, &[g]), &mut raw) {
                    break;
                }
            }
        }
        StudyConfig::StructureResidual { shape, grids } => {
            for &g in grids {
                ctx.progress(format!("structure residuals on {g:?}"));
                if !push(structure_residual_study(shape, &[g]), &mut raw) {
                    break;
                }
            }
        }
        StudyConfig::GraphRecovery { exact, domain, k, q, bump, node_counts } => {
            for &n in node_counts {
                ctx.progress(format!("graph recovery on {n}x{n} nodes"));
                match graph_recovery_study(exact, *domain, *k, *q, &[n], *bump, &cfg.solver.newton()) {
                    Ok((rs, runs)) => {
                        raw.extend(rs.iter().map(|r| (r.grid.0, r.grid.1, r.error)));
                        recovery_runs.extend(runs);
                    }
                    Err(e) => {
                        failure = Some(e.into());
                        break;
                    }
                }
            }
        }
        StudyConfig::MeasureRefinement { operator, p, phi, grids } => {
            let mut solutions: Vec<RadialField> = Vec::new();
            for &g in grids {
                ctx.progress(format!("measure problem on {g:?}"));
                let solved = sphere_grid(g).and_then(|grid| {
                    let prob = MeasureProblem::new(*operator, *p, phi.clone(), grid)?;
                    Ok(homotopy_solve(&prob, &cfg.solver.schedule())?)
                });
                match solved {
                    Ok((field, trace)) => {
                        continuation.push(ContinuationSummary {
                            grid: g,
                            total_newton_iters: trace.total_newton_iters(),
                            steps: trace.steps.len(),
                        });
                        solutions.push(field);
                    }
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            match successive_differences(&solutions) {
                Ok(r) => rows = Some(r),
                Err(e) => failure = failure.or(Some(e.into())),
            }
        }
    }
    let rows = rows.unwrap_or_else(|| with_orders(raw));
    ctx.write_with("study.csv", |w| write_study_csv(&rows, w))?;
    let report = StudyReport {
        study,
        rows: &rows,
        recovery_runs,
        continuation,
        complete: failure.is_none(),
        error: failure.as_ref().map(|e| e.to_string()),
    };
    ctx.json("report.json", &report)?;
    for r in &rows {
        let order = r.order.map_or("n/a".to_string(), |o| format!("{o:.3}"));
        ctx.progress(format!("{:?}: error {:.3e}, order {order}", r.grid, r.error));
    }
    failure.map_or(Ok(()), Err)
}
