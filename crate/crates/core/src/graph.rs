//! Dirichlet problem for curvature equations of graphs over a rectangle.
//!
//! Solves `σ_k(λ) = H(x, g)·(1 + |Dg|²)^{−q/2}` for the height `g`, with
//! exact Dirichlet values on the boundary nodes, and measures the interior
//! curvature bound `sup_Ω |A| ≤ C(1 + sup_∂Ω |A|)`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::newton::{self, Admissibility, NewtonOptions, NonlinearSystem, SolveReport};
use crate::poly::Polynomial;
use crate::sphere::sym_eig2;

type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rectangle {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rectangle {
    pub fn square(half_width: f64) -> Self {
        Self { x_min: -half_width, x_max: half_width, y_min: -half_width, y_max: half_width }
    }
}

/// Uniform node grid on a rectangle, boundary nodes included.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarGrid {
    rect: Rectangle,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    interior: Vec<usize>,
    /// Position of each node in `interior`, if it is interior.
    unknown_of: Vec<Option<usize>>,
}

impl PlanarGrid {
    /// At least 5 nodes per axis, so that one-sided boundary stencils fit.
    pub fn new(rect: Rectangle, nx: usize, ny: usize) -> Result<Self> {
        if nx < 5 || ny < 5 {
            return Err(Error::Grid(format!("need at least 5 nodes per axis, got {nx}x{ny}")));
        }
        if !(rect.x_max > rect.x_min && rect.y_max > rect.y_min)
            || ![rect.x_min, rect.x_max, rect.y_min, rect.y_max].iter().all(|v| v.is_finite())
        {
            return Err(Error::Grid(format!("degenerate rectangle {rect:?}")));
        }
        let mut interior = Vec::new();
        let mut unknown_of = vec![None; nx * ny];
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                unknown_of[i + nx * j] = Some(interior.len());
                interior.push(i + nx * j);
            }
        }
        Ok(Self {
            rect,
            nx,
            ny,
            hx: (rect.x_max - rect.x_min) / (nx - 1) as f64,
            hy: (rect.y_max - rect.y_min) / (ny - 1) as f64,
            interior,
            unknown_of,
        })
    }

    pub fn rect(&self) -> Rectangle {
        self.rect
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        let (i, j) = (node % self.nx, node / self.nx);
        [
            self.rect.x_min + i as f64 * self.hx,
            self.rect.y_min + j as f64 * self.hy,
        ]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.unknown_of[node].is_none()
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// First derivative along one axis at `(i, j)`: centered where both
    /// neighbours exist, second-order one-sided otherwise.
    fn axis_d1(&self, f: &[f64], i: usize, j: usize, axis: usize) -> f64 {
        let (pos, len, h) = if axis == 0 { (i, self.nx, self.hx) } else { (j, self.ny, self.hy) };
        let at = |m: usize| if axis == 0 { f[self.index(m, j)] } else { f[self.index(i, m)] };
        if pos == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else if pos == len - 1 {
            (3.0 * at(pos) - 4.0 * at(pos - 1) + at(pos - 2)) / (2.0 * h)
        } else {
            (at(pos + 1) - at(pos - 1)) / (2.0 * h)
        }
    }

    fn axis_d2(&self, f: &[f64], i: usize, j: usize, axis: usize) -> f64 {
        let (pos, len, h) = if axis == 0 { (i, self.nx, self.hx) } else { (j, self.ny, self.hy) };
        let at = |m: usize| if axis == 0 { f[self.index(m, j)] } else { f[self.index(i, m)] };
        if pos == 0 {
            (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / (h * h)
        } else if pos == len - 1 {
            (2.0 * at(pos) - 5.0 * at(pos - 1) + 4.0 * at(pos - 2) - at(pos - 3)) / (h * h)
        } else {
            (at(pos + 1) - 2.0 * at(pos) + at(pos - 1)) / (h * h)
        }
    }

    /// `(Dg, D²g)` at a node. Interior nodes get the standard centered
    /// 9-point stencils; boundary nodes get one-sided stencils across the edge.
    pub fn derivatives_at(&self, f: &[f64], node: usize) -> ([f64; 2], Mat2) {
        let (i, j) = (node % self.nx, node / self.nx);
        let dx = self.axis_d1(f, i, j, 0);
        let dy = self.axis_d1(f, i, j, 1);
        let dxx = self.axis_d2(f, i, j, 0);
        let dyy = self.axis_d2(f, i, j, 1);
        // D_y of the x-derivative, each with the stencil that fits
        let dx_at = |m: usize| self.axis_d1(f, i, m, 0);
        let dxy = if j == 0 {
            (-3.0 * dx_at(0) + 4.0 * dx_at(1) - dx_at(2)) / (2.0 * self.hy)
        } else if j == self.ny - 1 {
            (3.0 * dx_at(j) - 4.0 * dx_at(j - 1) + dx_at(j - 2)) / (2.0 * self.hy)
        } else {
            (dx_at(j + 1) - dx_at(j - 1)) / (2.0 * self.hy)
        };
        ([dx, dy], [[dxx, dxy], [dxy, dyy]])
    }

    /// Nodes whose centered stencil reads node `j`.
    fn stencil_neighbours(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = ((node % self.nx) as isize, (node / self.nx) as isize);
        (-1..=1).flat_map(move |dj| {
            (-1..=1).filter_map(move |di| {
                let (a, b) = (i + di, j + dj);
                (a >= 0 && b >= 0 && (a as usize) < self.nx && (b as usize) < self.ny)
                    .then(|| self.index(a as usize, b as usize))
            })
        })
    }
}

/// Principal curvatures of a graph with respect to the upward normal, and `|A|`.
///
/// The sign makes the upper hemisphere cap `√(R² − |x|²)` have `λ = (1/R, 1/R)`.
pub fn graph_shape(dg: [f64; 2], d2g: Mat2) -> ([f64; 2], f64) {
    let p2 = dg[0] * dg[0] + dg[1] * dg[1];
    let w = (1.0 + p2).sqrt();
    // G^{-1/2} = I − p pᵀ / (w(1 + w))
    let c = 1.0 / (w * (1.0 + w));
    let s = [
        [1.0 - c * dg[0] * dg[0], -c * dg[0] * dg[1]],
        [-c * dg[1] * dg[0], 1.0 - c * dg[1] * dg[1]],
    ];
    let mut m = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    acc += s[a][k] * d2g[k][l] * s[l][b];
                }
            }
            m[a][b] = -acc / w;
        }
    }
    m[0][1] = 0.5 * (m[0][1] + m[1][0]);
    m[1][0] = m[0][1];
    let lambda = sym_eig2(&m);
    (lambda, lambda[0].hypot(lambda[1]))
}

fn sigma2(lambda: &[f64; 2], k: usize) -> f64 {
    match k {
        1 => lambda[0] + lambda[1],
        _ => lambda[0] * lambda[1],
    }
}

/// Distance-like margin to the boundary of `Γ_k`. The mean curvature operator
/// is elliptic for every graph, so `k = 1` imposes no cone constraint.
fn cone_margin2(lambda: &[f64; 2], k: usize) -> f64 {
    if k == 1 {
        f64::INFINITY
    } else {
        (lambda[0] + lambda[1]).min(lambda[0] * lambda[1])
    }
}

/// Closed-form graphs used for boundary data, starts and manufactured solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExactGraph {
    /// `√(R² − |x − c|²)`
    Cap {
        radius: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// `α|x|²`
    Paraboloid { alpha: f64 },
    /// `√(R² − |x|²) + s·x`
    TiltedCap { radius: f64, slope: [f64; 2] },
    /// Polynomial in `(x₁, x₂)`.
    Polynomial { poly: Polynomial },
}

impl ExactGraph {
    pub fn validate(&self) -> Result<()> {
        match self {
            ExactGraph::Cap { radius, center } => {
                if !(radius.is_finite() && *radius > 0.0 && center.iter().all(|c| c.is_finite())) {
                    return Err(Error::InvalidProblem(format!("cap radius {radius} must be positive")));
                }
            }
            ExactGraph::TiltedCap { radius, slope } => {
                if !(radius.is_finite() && *radius > 0.0 && slope.iter().all(|c| c.is_finite())) {
                    return Err(Error::InvalidProblem(format!("cap radius {radius} must be positive")));
                }
            }
            ExactGraph::Paraboloid { alpha } => {
                if !alpha.is_finite() {
                    return Err(Error::NonFinite("paraboloid coefficient".into()));
                }
            }
            ExactGraph::Polynomial { poly } => poly.check_arity(2)?,
        }
        Ok(())
    }

    fn cap_derivs(r: f64, d: [f64; 2]) -> Option<(f64, [f64; 2], Mat2)> {
        let s = r * r - d[0] * d[0] - d[1] * d[1];
        if s <= 0.0 {
            return None;
        }
        let g = s.sqrt();
        let g3 = g * g * g;
        let grad = [-d[0] / g, -d[1] / g];
        let hess = [
            [-1.0 / g - d[0] * d[0] / g3, -d[0] * d[1] / g3],
            [-d[0] * d[1] / g3, -1.0 / g - d[1] * d[1] / g3],
        ];
        Some((g, grad, hess))
    }

    /// `(g, Dg, D²g)` at `x`, or `None` outside the domain of the formula.
    pub fn eval(&self, x: [f64; 2]) -> Option<(f64, [f64; 2], Mat2)> {
        match self {
            ExactGraph::Cap { radius, center } => {
                Self::cap_derivs(*radius, [x[0] - center[0], x[1] - center[1]])
            }
            ExactGraph::TiltedCap { radius, slope } => Self::cap_derivs(*radius, x).map(|(g, d, h)| {
                (
                    g + slope[0] * x[0] + slope[1] * x[1],
                    [d[0] + slope[0], d[1] + slope[1]],
                    h,
                )
            }),
            ExactGraph::Paraboloid { alpha } => Some((
                alpha * (x[0] * x[0] + x[1] * x[1]),
                [2.0 * alpha * x[0], 2.0 * alpha * x[1]],
                [[2.0 * alpha, 0.0], [0.0, 2.0 * alpha]],
            )),
            ExactGraph::Polynomial { poly } => {
                let (px, py) = (poly.partial(0), poly.partial(1));
                let pxy = px.partial(1).eval(&x);
                Some((
                    poly.eval(&x),
                    [px.eval(&x), py.eval(&x)],
                    [[px.partial(0).eval(&x), pxy], [pxy, py.partial(1).eval(&x)]],
                ))
            }
        }
    }

    pub fn sample(&self, grid: &PlanarGrid) -> Result<Vec<f64>> {
        (0..grid.len())
            .map(|node| {
                let x = grid.coords(node);
                self.eval(x).map(|v| v.0).ok_or_else(|| {
                    Error::InvalidProblem(format!("graph {self:?} undefined at {x:?}"))
                })
            })
            .collect()
    }
}

/// `H := σ_k(λ[g])·w^q` at every node, from closed-form derivatives, so that
/// `g` solves the equation exactly.
pub fn manufactured_h(exact: &ExactGraph, grid: &PlanarGrid, k: usize, q: f64) -> Result<Vec<f64>> {
    check_k(k)?;
    exact.validate()?;
    let mut bad = Vec::new();
    let h: Vec<f64> = (0..grid.len())
        .map(|node| match exact.eval(grid.coords(node)) {
            Some((_, dg, d2g)) => {
                let (lambda, _) = graph_shape(dg, d2g);
                if cone_margin2(&lambda, k) <= 0.0 {
                    bad.push(node);
                }
                let w = (1.0 + dg[0] * dg[0] + dg[1] * dg[1]).sqrt();
                sigma2(&lambda, k) * w.powf(q)
            }
            None => {
                bad.push(node);
                f64::NAN
            }
        })
        .collect();
    if !bad.is_empty() {
        return Err(Error::InvalidProblem(format!(
            "manufactured solution inadmissible at {} node(s), first {:?}",
            bad.len(),
            &bad[..bad.len().min(8)]
        )));
    }
    Ok(h)
}

fn check_k(k: usize) -> Result<()> {
    if !(1..=2).contains(&k) {
        return Err(Error::Domain(format!("graph equation needs 1 <= k <= 2, got k = {k}")));
    }
    Ok(())
}

/// Right-hand side `H`.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphRhs {
    /// Polynomial in `(x₁, x₂, g)`, evaluated at the current height.
    Polynomial(Polynomial),
    /// Fixed per-node values.
    Samples(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct GraphProblem {
    grid: Arc<PlanarGrid>,
    k: usize,
    q: f64,
    rhs: GraphRhs,
    boundary: Vec<f64>,
    warnings: Vec<String>,
}

impl GraphProblem {
    /// `boundary` holds a value for every node; only boundary nodes are used.
    pub fn new(grid: Arc<PlanarGrid>, k: usize, q: f64, rhs: GraphRhs, boundary: Vec<f64>) -> Result<Self> {
        check_k(k)?;
        if !q.is_finite() {
            return Err(Error::InvalidProblem(format!("q = {q} is not finite")));
        }
        if boundary.len() != grid.len() {
            return Err(Error::Shape(format!(
                "boundary has {} values for {} nodes",
                boundary.len(),
                grid.len()
            )));
        }
        if let Some(i) = boundary.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("boundary value at node {i}")));
        }
        let h_check: Vec<f64> = match &rhs {
            GraphRhs::Polynomial(p) => {
                p.check_arity(3)?;
                (0..grid.len())
                    .map(|n| {
                        let x = grid.coords(n);
                        p.eval(&[x[0], x[1], boundary[n]])
                    })
                    .collect()
            }
            GraphRhs::Samples(s) => {
                if s.len() != grid.len() {
                    return Err(Error::Shape(format!("H has {} samples for {} nodes", s.len(), grid.len())));
                }
                s.clone()
            }
        };
        if let Some(i) = h_check.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidProblem(format!(
                "H must be positive on the working range; H = {} at node {i}",
                h_check[i]
            )));
        }
        let mut warnings = Vec::new();
        if q > 1.0 {
            warnings.push(format!("q = {q} > 1: outside the range of the interior curvature bound"));
        }
        Ok(Self { grid, k, q, rhs, boundary, warnings })
    }

    /// Boundary values and, if `manufactured`, right-hand side taken from a closed-form graph.
    pub fn from_exact(
        grid: Arc<PlanarGrid>,
        k: usize,
        q: f64,
        exact: &ExactGraph,
        rhs: Option<Polynomial>,
    ) -> Result<Self> {
        exact.validate()?;
        let boundary = exact.sample(&grid)?;
        let rhs = match rhs {
            Some(p) => GraphRhs::Polynomial(p),
            None => GraphRhs::Samples(manufactured_h(exact, &grid, k, q)?),
        };
        Self::new(grid, k, q, rhs, boundary)
    }

    pub fn grid(&self) -> &Arc<PlanarGrid> {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn rhs(&self) -> &GraphRhs {
        &self.rhs
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn h_at(&self, node: usize, x: [f64; 2], g: f64) -> f64 {
        match &self.rhs {
            GraphRhs::Polynomial(p) => p.eval(&[x[0], x[1], g]),
            GraphRhs::Samples(s) => s[node],
        }
    }
}

/// Heights at every node; boundary nodes carry the Dirichlet data.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphField {
    grid: Arc<PlanarGrid>,
    g: Vec<f64>,
}

impl GraphField {
    /// Takes interior values from `values` and boundary values from `prob`.
    pub fn new(prob: &GraphProblem, values: Vec<f64>) -> Result<Self> {
        if values.len() != prob.grid.len() {
            return Err(Error::Shape(format!(
                "field has {} values for {} nodes",
                values.len(),
                prob.grid.len()
            )));
        }
        let mut g = values;
        for n in 0..g.len() {
            if prob.grid.is_boundary(n) {
                g[n] = prob.boundary[n];
            }
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("height at node {i}")));
        }
        Ok(Self { grid: prob.grid.clone(), g })
    }

    pub fn from_fn(prob: &GraphProblem, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..prob.grid.len()).map(|n| f(prob.grid.coords(n))).collect();
        Self::new(prob, values)
    }

    pub fn grid(&self) -> &Arc<PlanarGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.g
    }

    /// `√(1 + |Dg|²)` at every node.
    pub fn w(&self) -> Vec<f64> {
        (0..self.g.len())
            .map(|n| {
                let (d, _) = self.grid.derivatives_at(&self.g, n);
                (1.0 + d[0] * d[0] + d[1] * d[1]).sqrt()
            })
            .collect()
    }

    pub fn max_distance(&self, other: &[f64]) -> f64 {
        self.g.iter().zip(other).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

struct GraphSystem<'a> {
    prob: &'a GraphProblem,
}

impl GraphSystem<'_> {
    fn full(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.prob.boundary.clone();
        for (u, &node) in self.prob.grid.interior.iter().enumerate() {
            g[node] = x[u];
        }
        g
    }

    fn unknowns(&self, g: &[f64]) -> Vec<f64> {
        self.prob.grid.interior.iter().map(|&n| g[n]).collect()
    }

    /// `(residual, cone margin, 1/w)` at an interior node.
    fn local(&self, g: &[f64], node: usize) -> (f64, f64, f64) {
        let grid = &self.prob.grid;
        let (dg, d2g) = grid.derivatives_at(g, node);
        let (lambda, _) = graph_shape(dg, d2g);
        let w = (1.0 + dg[0] * dg[0] + dg[1] * dg[1]).sqrt();
        let h = self.prob.h_at(node, grid.coords(node), g[node]);
        let res = sigma2(&lambda, self.prob.k) - h * w.powf(-self.prob.q);
        (res, cone_margin2(&lambda, self.prob.k), 1.0 / w)
    }
}

impl NonlinearSystem for GraphSystem<'_> {
    fn dim(&self) -> usize {
        self.prob.grid.interior.len()
    }

    fn residual(&self, x: &[f64], out: &mut [f64]) {
        let g = self.full(x);
        let interior = &self.prob.grid.interior;
        out.par_iter_mut()
            .zip(interior.par_iter())
            .for_each(|(r, &node)| *r = self.local(&g, node).0);
    }

    fn admissibility(&self, x: &[f64]) -> Admissibility {
        if x.iter().any(|v| !v.is_finite()) {
            return Admissibility { min_cone_margin: f64::NEG_INFINITY, min_support: f64::NEG_INFINITY };
        }
        let g = self.full(x);
        let (m, s) = self
            .prob
            .grid
            .interior
            .par_iter()
            .map(|&node| {
                let (_, m, s) = self.local(&g, node);
                (m, s)
            })
            .reduce(|| (f64::INFINITY, f64::INFINITY), |a, b| (a.0.min(b.0), a.1.min(b.1)));
        Admissibility { min_cone_margin: m, min_support: s }
    }

    fn dependents(&self, j: usize) -> Vec<usize> {
        let grid = &self.prob.grid;
        grid.stencil_neighbours(grid.interior[j])
            .filter_map(|n| grid.unknown_of[n])
            .collect()
    }
}

fn check_field(field: &GraphField, prob: &GraphProblem) -> Result<()> {
    if field.grid.shape() != prob.grid.shape() || field.grid.rect() != prob.grid.rect() {
        return Err(Error::Shape("field and problem live on different grids".into()));
    }
    Ok(())
}

/// `σ_k(λ) − H(x, g)·w^{−q}` at every interior node, in [`PlanarGrid::interior`] order.
pub fn graph_residual(field: &GraphField, prob: &GraphProblem) -> Result<Vec<f64>> {
    check_field(field, prob)?;
    let sys = GraphSystem { prob };
    let outside: Vec<usize> = prob
        .grid
        .interior
        .iter()
        .copied()
        .filter(|&n| sys.local(&field.g, n).1 <= 0.0)
        .collect();
    if !outside.is_empty() {
        return Err(Error::ConeViolation { nodes: outside });
    }
    let x = sys.unknowns(&field.g);
    let mut out = vec![0.0; x.len()];
    sys.residual(&x, &mut out);
    Ok(out)
}

/// Damped Newton on the interior unknowns; boundary values stay fixed.
pub fn dirichlet_newton_solve(
    start: &GraphField,
    prob: &GraphProblem,
    opts: &NewtonOptions,
) -> Result<(GraphField, SolveReport)> {
    graph_residual(start, prob)?;
    let sys = GraphSystem { prob };
    let (x, report) = newton::newton_solve(&sys, &sys.unknowns(&start.g), opts)?;
    let g = sys.full(&x);
    Ok((GraphField { grid: prob.grid.clone(), g }, report))
}

/// Interior and boundary suprema of `|A|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureBoundProbe {
    pub sup_interior_a: f64,
    pub sup_boundary_a: f64,
    /// `sup_interior_a / (1 + sup_boundary_a)`
    pub ratio: f64,
    pub q: f64,
    pub k: usize,
    pub grid: (usize, usize),
}

/// `(λ, |A|)` at every node, one-sided stencils on the boundary.
pub fn node_curvatures(field: &GraphField) -> Vec<([f64; 2], f64)> {
    (0..field.g.len())
        .into_par_iter()
        .map(|n| {
            let (dg, d2g) = field.grid.derivatives_at(&field.g, n);
            graph_shape(dg, d2g)
        })
        .collect()
}

pub fn curvature_bound_probe(field: &GraphField, prob: &GraphProblem) -> Result<CurvatureBoundProbe> {
    check_field(field, prob)?;
    let curv = node_curvatures(field);
    let (mut sup_int, mut sup_bnd) = (0.0_f64, 0.0_f64);
    for (n, (_, a)) in curv.iter().enumerate() {
        if field.grid.is_boundary(n) {
            sup_bnd = sup_bnd.max(*a);
        } else {
            sup_int = sup_int.max(*a);
        }
    }
    Ok(CurvatureBoundProbe {
        sup_interior_a: sup_int,
        sup_boundary_a: sup_bnd,
        ratio: sup_int / (1.0 + sup_bnd),
        q: prob.q,
        k: prob.k,
        grid: field.grid.shape(),
    })
}

/// Fixed data for a sweep over `q` and grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub domain: Rectangle,
    pub k: usize,
    /// Polynomial in `(x₁, x₂, g)`.
    pub h: Polynomial,
    /// Dirichlet data, also the Newton start.
    pub boundary: ExactGraph,
    pub q_values: Vec<f64>,
    /// Nodes per axis, one entry per grid.
    pub grids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignRow {
    pub q: f64,
    pub grid: usize,
    pub sup_int_a: f64,
    pub sup_bnd_a: f64,
    pub ratio: f64,
    pub converged: bool,
    pub iterations: usize,
    pub min_cone_margin: f64,
}

/// Solves every `(q, grid)` pair and probes the curvature bound.
/// Failed solves become rows with `converged = false` and NaN probe values.
pub fn bound_probe_campaign(spec: &CampaignSpec, opts: &NewtonOptions) -> Result<Vec<CampaignRow>> {
    let mut rows = Vec::new();
    for &q in &spec.q_values {
        for &n in &spec.grids {
            let grid = Arc::new(PlanarGrid::new(spec.domain, n, n)?);
            let prob = GraphProblem::from_exact(grid, spec.k, q, &spec.boundary, Some(spec.h.clone()))?;
            let start = GraphField::new(&prob, prob.boundary.clone())?;
            let row = match dirichlet_newton_solve(&start, &prob, opts) {
                Ok((field, report)) => {
                    let probe = curvature_bound_probe(&field, &prob)?;
                    CampaignRow {
                        q,
                        grid: n,
                        sup_int_a: probe.sup_interior_a,
                        sup_bnd_a: probe.sup_boundary_a,
                        ratio: probe.ratio,
                        converged: true,
                        iterations: report.iterations,
                        min_cone_margin: report.min_cone_margin(),
                    }
                }
                Err(_) => CampaignRow {
                    q,
                    grid: n,
                    sup_int_a: f64::NAN,
                    sup_bnd_a: f64::NAN,
                    ratio: f64::NAN,
                    converged: false,
                    iterations: 0,
                    min_cone_margin: f64::NAN,
                },
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Whether every `q ≤ 0` row converged on each grid where some `q ∈ (0, 1]` row converged.
pub fn nonpositive_q_consistent(rows: &[CampaignRow]) -> bool {
    rows.iter().filter(|r| r.q > 0.0 && r.q <= 1.0 && r.converged).all(|ok| {
        rows.iter()
            .filter(|r| r.q <= 0.0 && r.grid == ok.grid)
            .all(|r| r.converged)
    })
}

pub fn write_campaign_csv<Wr: Write>(rows: &[CampaignRow], out: &mut Wr) -> Result<()> {
    writeln!(out, "q,grid,sup_int_A,sup_bnd_A,ratio,converged")?;
    for r in rows {
        writeln!(
            out,
            "{:.16e},{},{:.16e},{:.16e},{:.16e},{}",
            r.q, r.grid, r.sup_int_a, r.sup_bnd_a, r.ratio, r.converged
        )?;
    }
    Ok(())
}

/// Per-node solution table `x1,x2,g,lambda1,lambda2,abs_A`.
pub fn write_solution_csv<Wr: Write>(field: &GraphField, out: &mut Wr) -> Result<()> {
    writeln!(out, "x1,x2,g,lambda1,lambda2,abs_A")?;
    for (n, (lambda, a)) in node_curvatures(field).iter().enumerate() {
        let x = field.grid.coords(n);
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            x[0], x[1], field.g[n], lambda[0], lambda[1], a
        )?;
    }
    Ok(())
}
