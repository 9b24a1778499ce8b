//! Prescribed curvature measures on starshaped surfaces.
//!
//! Solves `F(A) = ⟨X,ν⟩^p φ(X)` for the radial function `ρ`, where `F` is
//! `σ_k` or the quotient `σ_k/σ_l` of the principal curvatures and `φ` is a
//! positive density on `S²` written as a polynomial in the unit direction.
//! The target problem is reached from the round sphere through the family
//! `φ_t = 1 − t + tφ`, `t ∈ [0, 1]`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::newton::{self, Admissibility, JacobianScheme, NewtonOptions, NonlinearSystem, SolveReport};
use crate::poly::Polynomial;
use crate::sphere::{local_shape, radial_geometry, RadialField, SphericalGrid};
use crate::symmfunc::{binomial, cone_membership_raw, sigma_all, OperatorSpec};

/// Dimension of the sphere the discretized solver works on.
pub const SURFACE_DIM: usize = 2;

/// Residual level below which a field counts as a solution in [`BoundsReport`].
pub const VERIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MeasureProblem {
    op: OperatorSpec,
    p: f64,
    phi: Polynomial,
    grid: Arc<SphericalGrid>,
    phi_values: Vec<f64>,
    warnings: Vec<String>,
}

impl MeasureProblem {
    pub fn new(op: OperatorSpec, p: f64, phi: Polynomial, grid: Arc<SphericalGrid>) -> Result<Self> {
        op.validate(SURFACE_DIM)?;
        if !p.is_finite() {
            return Err(Error::InvalidProblem(format!("exponent p = {p} is not finite")));
        }
        if p == 0.0 {
            return Err(Error::InvalidProblem(
                "exponent p must be nonzero: the gradient bound u = <X,nu> >= C > 0 \
                 requires p != 0"
                    .into(),
            ));
        }
        if (op.homogeneity() as f64 + p) == 0.0 {
            return Err(Error::InvalidProblem(format!(
                "k - l + p = 0 for {op:?}, p = {p}: no round start sphere"
            )));
        }
        phi.check_arity(3)?;
        let phi_values = grid.sample(|x| phi.eval(x));
        if let Some(i) = phi_values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidProblem(format!(
                "density phi must be positive at every node; phi = {} at node {i}",
                phi_values[i]
            )));
        }
        let mut warnings = Vec::new();
        if p > 1.0 {
            warnings.push(format!(
                "p = {p} > 1: outside the range with a curvature bound; continuation may fail"
            ));
        }
        if matches!(op, OperatorSpec::Quotient { .. }) {
            warnings.push("quotient operator: experimental, no existence guarantee".into());
        }
        Ok(Self { op, p, phi, grid, phi_values, warnings })
    }

    pub fn op(&self) -> OperatorSpec {
        self.op
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn phi(&self) -> &Polynomial {
        &self.phi
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn phi_values(&self) -> &[f64] {
        &self.phi_values
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Same operator, exponent and density on another grid.
    pub fn on_grid(&self, grid: Arc<SphericalGrid>) -> Result<Self> {
        Self::new(self.op, self.p, self.phi.clone(), grid)
    }

    fn phi_at(&self, t: f64) -> Vec<f64> {
        self.phi_values.iter().map(|v| 1.0 - t + t * v).collect()
    }
}

/// Radius `r` of the round sphere solving `F(1/r, …, 1/r) = r^p` (the `φ ≡ 1` problem).
pub fn initial_sphere_radius(op: &OperatorSpec, p: f64, n: usize) -> Result<f64> {
    op.validate(n)?;
    let ratio = binomial(n, op.k()) / binomial(n, op.l());
    let exponent = op.homogeneity() as f64 + p;
    if !exponent.is_finite() || exponent == 0.0 {
        return Err(Error::Start(format!(
            "degenerate exponent k - l + p = {exponent}: no positive root"
        )));
    }
    let r = ratio.powf(1.0 / exponent);
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Start(format!("radius {r} is not a positive number")));
    }
    Ok(r)
}

/// The discretized equation at a fixed homotopy parameter.
struct MeasureSystem<'a> {
    prob: &'a MeasureProblem,
    phi: Vec<f64>,
    dependents: Vec<Vec<usize>>,
    step_scale: Vec<f64>,
}

impl<'a> MeasureSystem<'a> {
    fn new(prob: &'a MeasureProblem, t: f64) -> Self {
        let grid = &prob.grid;
        let mut dependents = vec![Vec::new(); grid.len()];
        for i in 0..grid.len() {
            for &j in grid.stencil(i) {
                if !dependents[j].contains(&i) {
                    dependents[j].push(i);
                }
            }
        }
        // Stencil weights near node j scale like 1/s² with s the shortest local
        // spacing; s^{4/3} balances truncation against cancellation error.
        let dphi = 2.0 * std::f64::consts::PI / grid.n_phi() as f64;
        let step_scale = (0..grid.len())
            .map(|j| {
                let s = grid.spacing().min(grid.theta(j).sin() * dphi);
                s.powf(4.0 / 3.0).min(1.0)
            })
            .collect();
        Self { prob, phi: prob.phi_at(t), dependents, step_scale }
    }

    fn operator(&self, lambda: &[f64; 2]) -> (f64, f64) {
        let all = sigma_all(lambda);
        let k = self.prob.op.k();
        let value = match self.prob.op {
            OperatorSpec::SigmaK { .. } => all[k],
            OperatorSpec::Quotient { l, .. } => all[k] / all[l],
        };
        let margin = all[1..=k].iter().copied().fold(f64::INFINITY, f64::min);
        (value, margin)
    }
}

impl NonlinearSystem for MeasureSystem<'_> {
    fn dim(&self) -> usize {
        self.prob.grid.len()
    }

    fn residual(&self, x: &[f64], out: &mut [f64]) {
        let grid = &self.prob.grid;
        let p = self.prob.p;
        out.par_iter_mut().enumerate().for_each(|(i, r)| {
            let shape = local_shape(x[i], &grid.derivatives_at(x, i));
            let (value, _) = self.operator(&shape.lambda);
            *r = value - shape.support.powf(p) * self.phi[i];
        });
    }

    fn admissibility(&self, x: &[f64]) -> Admissibility {
        let grid = &self.prob.grid;
        if x.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Admissibility { min_cone_margin: f64::NEG_INFINITY, min_support: f64::NEG_INFINITY };
        }
        (0..x.len())
            .into_par_iter()
            .map(|i| {
                let shape = local_shape(x[i], &grid.derivatives_at(x, i));
                let (_, margin) = self.operator(&shape.lambda);
                (margin, shape.support)
            })
            .reduce(
                || (f64::INFINITY, f64::INFINITY),
                |a, b| (a.0.min(b.0), a.1.min(b.1)),
            )
            .into()
    }

    fn dependents(&self, j: usize) -> Vec<usize> {
        self.dependents[j].clone()
    }

    fn step_scale(&self, j: usize) -> f64 {
        self.step_scale[j]
    }
}

impl From<(f64, f64)> for Admissibility {
    fn from((min_cone_margin, min_support): (f64, f64)) -> Self {
        Self { min_cone_margin, min_support }
    }
}

fn check_field_grid(field: &RadialField, prob: &MeasureProblem) -> Result<()> {
    if !Arc::ptr_eq(field.grid(), prob.grid())
        && (field.grid().n_theta() != prob.grid().n_theta()
            || field.grid().n_phi() != prob.grid().n_phi())
    {
        return Err(Error::Shape("field and problem live on different grids".into()));
    }
    Ok(())
}

/// `F(A) − u^p φ` at every node.
///
/// Fails with the offending nodes if any spectrum leaves `Γ_k` or any
/// support value is non-positive.
pub fn residual(field: &RadialField, prob: &MeasureProblem) -> Result<Vec<f64>> {
    residual_at(field, prob, 1.0)
}

fn residual_at(field: &RadialField, prob: &MeasureProblem, t: f64) -> Result<Vec<f64>> {
    check_field_grid(field, prob)?;
    let geom = radial_geometry(field)?;
    let k = prob.op.k();
    let outside: Vec<usize> = geom
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| !cone_membership_raw(n.curvatures.values(), k).inside)
        .map(|(i, _)| i)
        .collect();
    if !outside.is_empty() {
        return Err(Error::ConeViolation { nodes: outside });
    }
    let sys = MeasureSystem::new(prob, t);
    let mut out = vec![0.0; field.rho().len()];
    sys.residual(field.rho(), &mut out);
    Ok(out)
}

/// Damped Newton on the discretized equation with `φ` replaced by `φ_t`.
pub fn newton_solve_at(
    start: &RadialField,
    prob: &MeasureProblem,
    t: f64,
    opts: &NewtonOptions,
) -> Result<(RadialField, SolveReport)> {
    // precondition: admissible, starshaped start
    residual_at(start, prob, t)?;
    let sys = MeasureSystem::new(prob, t);
    let (rho, report) = newton::newton_solve(&sys, start.rho(), opts)?;
    Ok((RadialField::new(prob.grid.clone(), rho)?, report))
}

/// Damped Newton on the target problem (`t = 1`).
pub fn newton_solve(
    start: &RadialField,
    prob: &MeasureProblem,
    opts: &NewtonOptions,
) -> Result<(RadialField, SolveReport)> {
    newton_solve_at(start, prob, 1.0, opts)
}

/// Finite-difference Jacobian of the residual at `field`, as a dense row-major matrix.
pub fn jacobian_dense(field: &RadialField, prob: &MeasureProblem, scheme: JacobianScheme) -> Vec<Vec<f64>> {
    let sys = MeasureSystem::new(prob, 1.0);
    let n = sys.dim();
    let mut f0 = vec![0.0; n];
    sys.residual(field.rho(), &mut f0);
    let groups = newton::color_columns(&sys);
    let jac = newton::fd_jacobian(&sys, field.rho(), &f0, &groups, scheme);
    (0..n).map(|i| (0..n).map(|j| jac.get(i, j)).collect()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomotopySchedule {
    pub dt_init: f64,
    pub dt_min: f64,
    pub newton: NewtonOptions,
}

impl Default for HomotopySchedule {
    fn default() -> Self {
        Self {
            dt_init: 0.1,
            dt_min: 1e-4,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomotopyStep {
    pub t: f64,
    pub newton_iters: usize,
    pub final_residual: f64,
    pub min_cone_margin: f64,
    pub min_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepAttempt {
    pub t_from: f64,
    pub t_to: f64,
    pub accepted: bool,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct HomotopyTrace {
    pub steps: Vec<HomotopyStep>,
    pub attempts: Vec<StepAttempt>,
}

impl HomotopyTrace {
    pub fn t_reached(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.t)
    }

    pub fn total_newton_iters(&self) -> usize {
        self.steps.iter().map(|s| s.newton_iters).sum()
    }
}

fn step_record(t: f64, report: &SolveReport, field: &RadialField, prob: &MeasureProblem) -> HomotopyStep {
    let adm = MeasureSystem::new(prob, t).admissibility(field.rho());
    HomotopyStep {
        t,
        newton_iters: report.iterations,
        final_residual: report.final_residual(),
        min_cone_margin: adm.min_cone_margin,
        min_u: adm.min_support,
    }
}

/// Continuation from the round sphere at `t = 0` to the target density at `t = 1`.
///
/// The `t`-step starts at `dt_init`, halves after a failed Newton solve and
/// doubles after two consecutive successes. Falling below `dt_min` aborts with
/// the partial trace.
pub fn homotopy_solve(
    prob: &MeasureProblem,
    schedule: &HomotopySchedule,
) -> Result<(RadialField, HomotopyTrace)> {
    let r0 = initial_sphere_radius(&prob.op, prob.p, SURFACE_DIM)?;
    let start = RadialField::constant(prob.grid.clone(), r0)?;
    let mut trace = HomotopyTrace::default();

    let (mut field, report) = newton_solve_at(&start, prob, 0.0, &schedule.newton)?;
    trace.steps.push(step_record(0.0, &report, &field, prob));

    if prob.phi_values.iter().all(|&v| v == 1.0) {
        // φ_t ≡ 1 for every t
        trace.attempts.push(StepAttempt {
            t_from: 0.0,
            t_to: 1.0,
            accepted: true,
            note: "constant density, homotopy is trivial".into(),
        });
        trace.steps.push(step_record(1.0, &report, &field, prob));
        return Ok((field, trace));
    }

    let mut t = 0.0;
    let mut dt = schedule.dt_init;
    let mut streak = 0;
    while t < 1.0 {
        let t_next = (t + dt).min(1.0);
        match newton_solve_at(&field, prob, t_next, &schedule.newton) {
            Ok((next, report)) => {
                trace.attempts.push(StepAttempt {
                    t_from: t,
                    t_to: t_next,
                    accepted: true,
                    note: format!("{} Newton iterations", report.iterations),
                });
                trace.steps.push(step_record(t_next, &report, &next, prob));
                field = next;
                t = t_next;
                streak += 1;
                if streak >= 2 {
                    dt *= 2.0;
                    streak = 0;
                }
            }
            Err(e) => {
                trace.attempts.push(StepAttempt {
                    t_from: t,
                    t_to: t_next,
                    accepted: false,
                    note: e.to_string(),
                });
                streak = 0;
                dt *= 0.5;
                if dt < schedule.dt_min {
                    return Err(Error::ContinuationFailure {
                        t_reached: t,
                        reason: format!("t-step fell below {:e}: {e}", schedule.dt_min),
                        trace: Box::new(trace),
                    });
                }
            }
        }
    }
    Ok((field, trace))
}

/// A posteriori quantities entering the a priori estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub rho_min: f64,
    pub rho_max: f64,
    pub u_min: f64,
    pub sigma1_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    /// Degree of homogeneity of the operator.
    pub homogeneity: usize,
    pub residual_max: f64,
    pub admissible: bool,
    /// `u_min ≤ 0`
    pub hard_failure: bool,
    /// Admissible, starshaped and with residual below [`VERIFY_TOL`].
    pub verified: bool,
}

pub fn verify_apriori_bounds(field: &RadialField, prob: &MeasureProblem) -> Result<BoundsReport> {
    check_field_grid(field, prob)?;
    let geom = match radial_geometry(field) {
        Ok(g) => Some(g),
        Err(Error::NotStarshaped { .. }) => None,
        Err(e) => return Err(e),
    };
    let sys = MeasureSystem::new(prob, 1.0);
    let mut res = vec![0.0; field.rho().len()];
    sys.residual(field.rho(), &mut res);
    let residual_max = res.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let adm = sys.admissibility(field.rho());
    let sigma1_max = geom.as_ref().map_or(f64::NAN, |g| {
        g.nodes()
            .iter()
            .map(|n| n.curvatures.values().iter().sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let (phi_min, phi_max) = prob
        .phi_values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let u_min = adm.min_support;
    let admissible = adm.is_admissible();
    Ok(BoundsReport {
        rho_min: field.min(),
        rho_max: field.max(),
        u_min,
        sigma1_max,
        phi_min,
        phi_max,
        homogeneity: prob.op.homogeneity(),
        residual_max,
        admissible,
        hard_failure: !(u_min > 0.0),
        verified: admissible && residual_max <= VERIFY_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRun {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    /// Max over pairs of converged runs of the max-node distance.
    pub max_distance: f64,
    pub runs: Vec<ProbeRun>,
    /// Every run converged.
    pub complete: bool,
}

/// Runs Newton from each start and compares the converged fields pairwise.
pub fn uniqueness_probe(
    prob: &MeasureProblem,
    starts: &[RadialField],
    opts: &NewtonOptions,
) -> UniquenessReport {
    let mut solutions = Vec::new();
    let mut runs = Vec::new();
    for start in starts {
        match newton_solve(start, prob, opts) {
            Ok((field, report)) => {
                runs.push(ProbeRun {
                    converged: true,
                    iterations: report.iterations,
                    final_residual: report.final_residual(),
                    error: None,
                });
                solutions.push(field);
            }
            Err(e) => runs.push(ProbeRun {
                converged: false,
                iterations: 0,
                final_residual: f64::NAN,
                error: Some(e.to_string()),
            }),
        }
    }
    let mut max_distance: f64 = 0.0;
    for (i, a) in solutions.iter().enumerate() {
        for b in &solutions[i + 1..] {
            max_distance = max_distance.max(a.distance(b));
        }
    }
    UniquenessReport {
        max_distance,
        complete: solutions.len() == starts.len(),
        runs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(nt: usize) -> Arc<SphericalGrid> {
        Arc::new(SphericalGrid::new(nt, 2 * nt).unwrap())
    }

    fn problem(nt: usize, p: f64, phi: Polynomial) -> MeasureProblem {
        MeasureProblem::new(OperatorSpec::SigmaK { k: 2 }, p, phi, grid(nt)).unwrap()
    }

    fn tilted() -> Polynomial {
        Polynomial::affine(1.0, &[0.0, 0.0, 0.2])
    }

    #[test]
    fn start_radius_examples() {
        let s2 = OperatorSpec::SigmaK { k: 2 };
        assert_relative_eq!(initial_sphere_radius(&s2, 1.0, 2).unwrap(), 1.0);
        assert_relative_eq!(
            initial_sphere_radius(&s2, 1.0, 3).unwrap(),
            1.442_249_570_307_408_3,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            initial_sphere_radius(&OperatorSpec::SigmaK { k: 1 }, 1.0, 3).unwrap(),
            3.0_f64.sqrt(),
            epsilon = 1e-14
        );
        // quotient σ₂/σ₁ in n = 3: (3/3)·r^{-1} = r^p
        assert_relative_eq!(
            initial_sphere_radius(&OperatorSpec::Quotient { k: 2, l: 1 }, 1.0, 3).unwrap(),
            1.0
        );
        assert!(matches!(initial_sphere_radius(&s2, -2.0, 2), Err(Error::Start(_))));
    }

    #[test]
    fn problem_validation() {
        let g = grid(8);
        let one = Polynomial::constant(1.0, 3);
        let s2 = OperatorSpec::SigmaK { k: 2 };
        assert!(MeasureProblem::new(s2, 0.0, one.clone(), g.clone())
            .unwrap_err()
            .to_string()
            .contains("p != 0"));
        assert!(MeasureProblem::new(OperatorSpec::SigmaK { k: 3 }, 1.0, one.clone(), g.clone()).is_err());
        assert!(MeasureProblem::new(s2, 1.0, Polynomial::affine(0.5, &[0.0, 0.0, 1.0]), g.clone()).is_err());
        let warn = MeasureProblem::new(s2, 2.0, one.clone(), g.clone()).unwrap();
        assert_eq!(warn.warnings().len(), 1);
        assert!(MeasureProblem::new(s2, 1.0, one, g).unwrap().warnings().is_empty());
    }

    #[test]
    fn residual_of_constant_fields() {
        let prob = problem(8, 1.0, Polynomial::constant(1.0, 3));
        let unit = RadialField::constant(prob.grid().clone(), 1.0).unwrap();
        assert!(residual(&unit, &prob).unwrap().iter().all(|r| r.abs() < 1e-10));
        let two = RadialField::constant(prob.grid().clone(), 2.0).unwrap();
        for r in residual(&two, &prob).unwrap() {
            assert_relative_eq!(r, -1.75, epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_rejects_inadmissible_fields() {
        let prob = problem(8, 1.0, Polynomial::constant(1.0, 3));
        // a sharp dent gives negative curvature at its center
        let g = prob.grid().clone();
        let mut rho = vec![1.0; g.len()];
        rho[g.index(4, 3)] = 0.8;
        let field = RadialField::new(g, rho).unwrap();
        match residual(&field, &prob) {
            Err(Error::ConeViolation { nodes }) => assert!(nodes.contains(&prob.grid().index(4, 3))),
            other => panic!("expected cone violation, got {other:?}"),
        }
        assert!(matches!(
            newton_solve(&field, &prob, &NewtonOptions::default()),
            Err(Error::ConeViolation { .. })
        ));
    }

    #[test]
    fn newton_contracts_to_unit_sphere() {
        let prob = problem(8, 1.0, Polynomial::constant(1.0, 3));
        let start = RadialField::constant(prob.grid().clone(), 1.2).unwrap();
        let (field, report) = newton_solve(&start, &prob, &NewtonOptions::default()).unwrap();
        assert!(report.converged);
        assert!(field.rho().iter().all(|r| (r - 1.0).abs() < 1e-10));
        for w in report.steps.windows(2) {
            assert!(w[1].residual_l2 < w[0].residual_l2);
        }
        let (again, report) = newton_solve(&field, &prob, &NewtonOptions::default()).unwrap();
        assert_eq!(report.iterations, 0);
        assert_eq!(again.rho(), field.rho());
    }

    #[test]
    fn jacobian_matches_directional_differences() {
        let prob = problem(8, 0.5, tilted());
        let field = RadialField::from_fn(prob.grid().clone(), |x| 1.0 + 0.05 * x[0] + 0.03 * x[2] * x[1]).unwrap();
        let jac = jacobian_dense(&field, &prob, JacobianScheme::Central);
        let sys = MeasureSystem::new(&prob, 1.0);
        let n = sys.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let jv: Vec<f64> = jac.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
            let eps = 1e-6;
            let plus: Vec<f64> = field.rho().iter().zip(&v).map(|(x, d)| x + eps * d).collect();
            let minus: Vec<f64> = field.rho().iter().zip(&v).map(|(x, d)| x - eps * d).collect();
            let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
            sys.residual(&plus, &mut fp);
            sys.residual(&minus, &mut fm);
            let fd: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            let num: f64 = jv.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let den: f64 = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(num / den <= 1e-5, "relative error {}", num / den);
        }
    }

    #[test]
    fn constant_density_homotopy_is_trivial() {
        let prob = problem(8, 1.0, Polynomial::constant(1.0, 3));
        let (field, trace) = homotopy_solve(&prob, &HomotopySchedule::default()).unwrap();
        assert_eq!(trace.steps.len(), 2);
        assert_eq!(trace.steps[0].t, 0.0);
        assert_eq!(trace.steps[1].t, 1.0);
        assert!(field.rho().iter().all(|r| (r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn tilted_density_homotopy_completes() {
        let prob = problem(12, 1.0, tilted());
        let sched = HomotopySchedule {
            newton: NewtonOptions { tol: 1e-10, ..Default::default() },
            ..Default::default()
        };
        let (field, trace) = homotopy_solve(&prob, &sched).unwrap();
        assert_eq!(trace.t_reached(), 1.0);
        for w in trace.steps.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        assert!(trace.steps.iter().all(|s| s.min_cone_margin > 0.0 && s.min_u > 0.0));
        let res = residual(&field, &prob).unwrap();
        assert!(res.iter().all(|r| r.abs() <= 1e-8));
        assert!(field.max() - field.min() > 1e-3, "solution should not be round");

        // axisymmetric density: the solution is invariant under every longitude shift
        let g = prob.grid();
        for i in 0..g.n_theta() {
            let ring = &field.rho()[g.index(i, 0)..g.index(i, 0) + g.n_phi()];
            let spread = ring.iter().fold(0.0_f64, |m, v| m.max((v - ring[0]).abs()));
            assert!(spread <= 1e-9, "ring {i} spread {spread}");
        }

        let b = verify_apriori_bounds(&field, &prob).unwrap();
        assert!(b.verified && !b.hard_failure && b.u_min > 0.0);
        assert!(b.rho_min <= b.rho_max && b.u_min <= b.rho_max);
    }

    #[test]
    fn exponent_changes_the_solution() {
        let a = homotopy_solve(&problem(10, 1.0, tilted()), &HomotopySchedule::default()).unwrap().0;
        let b = homotopy_solve(&problem(10, 0.5, tilted()), &HomotopySchedule::default()).unwrap().0;
        assert!(a.distance(&b) > 1e-3);
    }

    #[test]
    fn bounds_of_unit_sphere() {
        let prob = problem(8, 1.0, Polynomial::constant(1.0, 3));
        let field = RadialField::constant(prob.grid().clone(), 1.0).unwrap();
        let b = verify_apriori_bounds(&field, &prob).unwrap();
        assert_relative_eq!(b.rho_min, 1.0);
        assert_relative_eq!(b.rho_max, 1.0);
        assert_relative_eq!(b.u_min, 1.0, epsilon = 1e-14);
        assert_relative_eq!(b.sigma1_max, 2.0, epsilon = 1e-12);
        assert!(b.verified);
        let off = RadialField::constant(prob.grid().clone(), 1.5).unwrap();
        assert!(!verify_apriori_bounds(&off, &prob).unwrap().verified);
    }

    #[test]
    fn uniqueness_from_distinct_starts() {
        let prob = problem(8, 1.0, Polynomial::constant(1.0, 3));
        let g = prob.grid().clone();
        let starts = [
            RadialField::constant(g.clone(), 0.8).unwrap(),
            RadialField::constant(g.clone(), 1.3).unwrap(),
        ];
        let rep = uniqueness_probe(&prob, &starts, &NewtonOptions::default());
        assert!(rep.complete);
        assert!(rep.max_distance <= 1e-8);
        let same = [starts[0].clone(), starts[0].clone()];
        assert_eq!(uniqueness_probe(&prob, &same, &NewtonOptions::default()).max_distance, 0.0);
    }
}
