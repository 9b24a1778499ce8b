//! Grid-refinement studies: errors against closed forms or against the next
//! finer grid, and observed orders `log₂(e_coarse / e_fine)`.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{dirichlet_newton_solve, ExactGraph, GraphField, GraphProblem, PlanarGrid, Rectangle};
use crate::measure::{homotopy_solve, HomotopySchedule, HomotopyTrace, MeasureProblem};
use crate::newton::NewtonOptions;
use crate::poly::Polynomial;
use crate::sphere::{radial_geometry, structure_equation_residuals, RadialField, SphericalGrid};

/// Errors at or below this level are treated as round-off; no order is reported.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    /// `(n_θ, n_φ)` on the sphere, `(n_x, n_y)` in the plane.
    pub grid: (usize, usize),
    pub error: f64,
    /// Order against the previous row.
    pub order: Option<f64>,
}

/// Fills in `order` for consecutive rows whose errors exceed [`ROUNDOFF_FLOOR`].
pub fn with_orders(rows: Vec<(usize, usize, f64)>) -> Vec<StudyRow> {
    let mut out: Vec<StudyRow> = Vec::with_capacity(rows.len());
    for (i, &(a, b, error)) in rows.iter().enumerate() {
        let order = (i > 0)
            .then(|| rows[i - 1].2)
            .filter(|prev| *prev > ROUNDOFF_FLOOR && error > ROUNDOFF_FLOOR)
            .map(|prev| (prev / error).log2());
        out.push(StudyRow { grid: (a, b), error, order });
    }
    out
}

/// Writes `grid,error[,order]`; the order column is omitted for a single grid.
pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: &mut W) -> Result<()> {
    let with_order = rows.len() > 1;
    if with_order {
        writeln!(out, "n1,n2,error,order")?;
    } else {
        writeln!(out, "n1,n2,error")?;
    }
    for r in rows {
        write!(out, "{},{},{:.16e}", r.grid.0, r.grid.1, r.error)?;
        if with_order {
            match r.order {
                Some(o) => write!(out, ",{o:.16e}")?,
                None => write!(out, ",n/a")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Smooth radial functions with known geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialShape {
    Constant { radius: f64 },
    /// `ρ = (x₁²/a² + x₂²/b² + x₃²/c²)^{−1/2}`
    Ellipsoid { axes: [f64; 3] },
    /// Polynomial in the unit direction `(x₁, x₂, x₃)`.
    Polynomial { poly: Polynomial },
}

impl RadialShape {
    pub fn field(&self, grid: Arc<SphericalGrid>) -> Result<RadialField> {
        match self {
            RadialShape::Constant { radius } => RadialField::constant(grid, *radius),
            RadialShape::Ellipsoid { axes: [a, b, c] } => RadialField::from_fn(grid, |x| {
                (x[0] * x[0] / (a * a) + x[1] * x[1] / (b * b) + x[2] * x[2] / (c * c)).powf(-0.5)
            }),
            RadialShape::Polynomial { poly } => {
                poly.check_arity(3)?;
                RadialField::from_fn(grid, |x| poly.eval(x))
            }
        }
    }
}

/// Principal curvatures of the ellipsoid with semi-axes `(a, b, c)` at a surface point.
pub fn ellipsoid_curvatures(axes: [f64; 3], p: [f64; 3]) -> [f64; 2] {
    let [a, b, c] = axes;
    let (a2, b2, c2) = (a * a, b * b, c * c);
    let s = p[0] * p[0] / (a2 * a2) + p[1] * p[1] / (b2 * b2) + p[2] * p[2] / (c2 * c2);
    let abc2 = a2 * b2 * c2;
    let gauss = 1.0 / (abc2 * s * s);
    let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    let mean = -(r2 - a2 - b2 - c2) / (2.0 * abc2 * s.powf(1.5));
    let disc = (mean * mean - gauss).max(0.0).sqrt();
    [mean - disc, mean + disc]
}

fn sphere_grid(g: (usize, usize)) -> Result<Arc<SphericalGrid>> {
    Ok(Arc::new(SphericalGrid::new(g.0, g.1)?))
}

/// Max-node error of the computed principal curvatures against the closed form.
pub fn ellipsoid_curvature_study(axes: [f64; 3], grids: &[(usize, usize)]) -> Result<Vec<StudyRow>> {
    let mut rows = Vec::new();
    for &g in grids {
        let field = RadialShape::Ellipsoid { axes }.field(sphere_grid(g)?)?;
        let geom = radial_geometry(&field)?;
        let err = geom.nodes().iter().fold(0.0_f64, |m, n| {
            let exact = ellipsoid_curvatures(axes, n.position);
            let got = n.curvatures.values();
            m.max((got[0] - exact[0]).abs()).max((got[1] - exact[1]).abs())
        });
        rows.push((g.0, g.1, err));
    }
    Ok(with_orders(rows))
}

/// Max-node deviation of `u` and `λ` from `r` and `1/r` on a round sphere.
pub fn constant_field_study(radius: f64, grids: &[(usize, usize)]) -> Result<Vec<StudyRow>> {
    let mut rows = Vec::new();
    for &g in grids {
        let geom = radial_geometry(&RadialField::constant(sphere_grid(g)?, radius)?)?;
        let err = geom.nodes().iter().fold(0.0_f64, |m, n| {
            let l = n.curvatures.values();
            m.max((n.support - radius).abs())
                .max((l[0] - 1.0 / radius).abs())
                .max((l[1] - 1.0 / radius).abs())
        });
        rows.push((g.0, g.1, err));
    }
    Ok(with_orders(rows))
}

/// Max over nodes and both structure identities of the discrete residual.
pub fn structure_residual_study(shape: &RadialShape, grids: &[(usize, usize)]) -> Result<Vec<StudyRow>> {
    let mut rows = Vec::new();
    for &g in grids {
        let geom = radial_geometry(&shape.field(sphere_grid(g)?)?)?;
        let (_, max) = structure_equation_residuals(&geom);
        rows.push((g.0, g.1, max.gauss.max(max.support_gradient)));
    }
    Ok(with_orders(rows))
}

/// Each grid must double both counts of its predecessor.
pub fn check_refinements(grids: &[(usize, usize)]) -> Result<()> {
    for w in grids.windows(2) {
        if w[1].0 != 2 * w[0].0 || w[1].1 != 2 * w[0].1 {
            return Err(Error::Grid(format!("{:?} is not a 2x refinement of {:?}", w[1], w[0])));
        }
    }
    Ok(())
}

/// Solves the measure problem on each grid; row `i` holds
/// `max |ρ_i − R ρ_{i+1}|` with `R` the fine-to-coarse restriction.
/// The finest grid only serves as reference and gets no row.
/// Also returns every solution with its continuation trace, coarsest first.
pub fn measure_refinement_study(
    prob: &MeasureProblem,
    grids: &[(usize, usize)],
    schedule: &HomotopySchedule,
) -> Result<(Vec<StudyRow>, Vec<(RadialField, HomotopyTrace)>)> {
    if grids.len() < 2 {
        return Err(Error::Grid("a solution-difference study needs at least two grids".into()));
    }
    check_refinements(grids)?;
    let mut solutions = Vec::new();
    for &g in grids {
        let p = prob.on_grid(sphere_grid(g)?)?;
        solutions.push(homotopy_solve(&p, schedule)?);
    }
    let fields: Vec<RadialField> = solutions.iter().map(|s| s.0.clone()).collect();
    Ok((successive_differences(&fields)?, solutions))
}

/// Rows `max |ρ_i − R ρ_{i+1}|` for solutions on successively refined grids.
pub fn successive_differences(solutions: &[RadialField]) -> Result<Vec<StudyRow>> {
    let mut rows = Vec::new();
    for w in solutions.windows(2) {
        let (coarse, fine) = (&w[0], &w[1]);
        let restricted = coarse.grid().restrict_from_fine(fine.grid(), fine.rho())?;
        let err = coarse
            .rho()
            .iter()
            .zip(&restricted)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        rows.push((coarse.grid().n_theta(), coarse.grid().n_phi(), err));
    }
    Ok(with_orders(rows))
}

/// Outcome of a manufactured-solution recovery run on one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRun {
    pub nodes: usize,
    pub error: f64,
    pub iterations: usize,
    /// Smallest cone margin over all accepted iterates.
    pub min_cone_margin: f64,
}

/// Graph recovery: manufactured `H` from `exact`, Newton from `exact` plus a
/// bump vanishing on the boundary, error `max |g − g_exact|` per grid.
pub fn graph_recovery_study(
    exact: &ExactGraph,
    domain: Rectangle,
    k: usize,
    q: f64,
    node_counts: &[usize],
    bump: f64,
    opts: &NewtonOptions,
) -> Result<(Vec<StudyRow>, Vec<RecoveryRun>)> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &n in node_counts {
        let grid = Arc::new(PlanarGrid::new(domain, n, n)?);
        let prob = GraphProblem::from_exact(grid.clone(), k, q, exact, None)?;
        let truth = exact.sample(&grid)?;
        let Rectangle { x_min, x_max, y_min, y_max } = domain;
        let start = GraphField::from_fn(&prob, |[x, y]| {
            let v = exact.eval([x, y]).map_or(f64::NAN, |e| e.0);
            v + bump * (x - x_min) * (x_max - x) * (y - y_min) * (y_max - y)
        })?;
        let (sol, report) = dirichlet_newton_solve(&start, &prob, opts)?;
        let error = sol.max_distance(&truth);
        rows.push((n, n, error));
        runs.push(RecoveryRun {
            nodes: n,
            error,
            iterations: report.iterations,
            min_cone_margin: report.min_cone_margin(),
        });
    }
    Ok((with_orders(rows), runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ellipsoid_oracle_reduces_to_sphere() {
        let k = ellipsoid_curvatures([2.0, 2.0, 2.0], [0.0, 1.2, 1.6]);
        assert_relative_eq!(k[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(k[1], 0.5, epsilon = 1e-14);
        // at the tip of the a-axis the curvatures are a/b² and a/c²
        let k = ellipsoid_curvatures([1.0, 2.0, 3.0], [1.0, 0.0, 0.0]);
        assert_relative_eq!(k[0], 1.0 / 9.0, epsilon = 1e-14);
        assert_relative_eq!(k[1], 1.0 / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn ellipsoid_curvature_converges_at_second_order() {
        let rows = ellipsoid_curvature_study([1.0, 1.2, 0.9], &[(32, 64), (64, 128)]).unwrap();
        let order = rows[1].order.unwrap();
        assert!((1.8..2.3).contains(&order), "order {order}");
    }

    #[test]
    fn constant_study_is_exact() {
        let rows = constant_field_study(1.7, &[(8, 16), (16, 32)]).unwrap();
        assert!(rows.iter().all(|r| r.error < 1e-12 && r.order.is_none()));
        let mut buf = Vec::new();
        write_study_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().ends_with(",n/a"));
    }

    #[test]
    fn single_grid_table_has_no_order_column() {
        let rows = constant_field_study(1.0, &[(8, 16)]).unwrap();
        let mut buf = Vec::new();
        write_study_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().next().unwrap(), "n1,n2,error");
    }

    #[test]
    fn refinement_lists_are_checked() {
        assert!(check_refinements(&[(8, 16), (16, 32)]).is_ok());
        assert!(check_refinements(&[(8, 16), (12, 24)]).is_err());
    }
}
