//! Radial graphs `X(x) = ρ(x)·x` over the unit sphere `S²`.
//!
//! The grid is a latitude–longitude grid staggered in colatitude,
//! `θ_i = (i + ½)π/n_θ`, so no node sits on a pole. Stencils that reach past
//! a pole read the node at the same colatitude on the opposite meridian,
//! `(−1, j) ↦ (0, j + n_φ/2)`.
//!
//! Difference quotients use trigonometric weights, e.g.
//! `∂_θ f ≈ (f₊ − f₋) / (2 sin Δθ)` and `∂²_θ f ≈ (f₊ − 2f + f₋) / (2(1 − cos Δθ))`.
//! They are second-order accurate and exact on `span{1, cos, sin}` in each
//! coordinate, so constants and the restrictions of linear functions are
//! differentiated without error, including next to the poles where the
//! `1/sin θ` factors would otherwise amplify truncation error.
//!
//! Orientation: the outward normal is used with `h_ij = ⟨D_{e_i} ν, e_j⟩`,
//! which gives the round sphere of radius `r` the curvatures `+1/r`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::symmfunc::{sigma_raw, Spectrum, SymTensor2};

pub(crate) type Vec3 = [f64; 3];
pub(crate) type Mat2 = [[f64; 2]; 2];

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Slots of the 5×3 stencil, row-major over `dθ ∈ −2..=2`, `dφ ∈ −1..=1`.
const C: usize = 7;
const N: usize = 4; // (−1, 0)
const S: usize = 10; // (+1, 0)
const N2: usize = 1; // (−2, 0)
const S2: usize = 13; // (+2, 0)
const W: usize = 6; // (0, −1)
const E: usize = 8; // (0, +1)
const NW: usize = 3;
const NE: usize = 5;
const SW: usize = 9;
const SE: usize = 11;
const N2W: usize = 0;
const N2E: usize = 2;
const S2W: usize = 12;
const S2E: usize = 14;
const STENCIL: usize = 15;

#[derive(Debug, Clone, Copy)]
struct StencilWeights {
    /// `∂_θ f ≈ a(f₊₁ − f₋₁) + b(f₊₂ − f₋₂)`
    d1_theta: [f64; 2],
    d2_theta: f64,
    d1_phi: f64,
    d2_phi: f64,
}

#[derive(Debug, Clone)]
pub struct SphericalGrid {
    n_theta: usize,
    n_phi: usize,
    theta: Vec<f64>,
    phi: Vec<f64>,
    nodes: Vec<Vec3>,
    e_theta: Vec<Vec3>,
    e_phi: Vec<Vec3>,
    weights: Vec<f64>,
    stencils: Vec<[usize; STENCIL]>,
    coef: StencilWeights,
}

impl SphericalGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 8 || n_phi < 8 {
            return Err(Error::Grid(format!(
                "need n_theta >= 8 and n_phi >= 8, got ({n_theta}, {n_phi})"
            )));
        }
        if n_phi % 2 != 0 {
            return Err(Error::Grid(format!(
                "n_phi = {n_phi} is odd; cross-pole pairing needs an even longitude count"
            )));
        }
        let dtheta = PI / n_theta as f64;
        let dphi = 2.0 * PI / n_phi as f64;
        let theta: Vec<f64> = (0..n_theta).map(|i| (i as f64 + 0.5) * dtheta).collect();
        let phi: Vec<f64> = (0..n_phi).map(|j| j as f64 * dphi).collect();

        let len = n_theta * n_phi;
        let mut nodes = Vec::with_capacity(len);
        let mut e_theta = Vec::with_capacity(len);
        let mut e_phi = Vec::with_capacity(len);
        let mut weights = Vec::with_capacity(len);
        let mut stencils = Vec::with_capacity(len);
        for i in 0..n_theta {
            let (st, ct) = theta[i].sin_cos();
            let band = ((i as f64) * dtheta).cos() - ((i as f64 + 1.0) * dtheta).cos();
            for j in 0..n_phi {
                let (sp, cp) = phi[j].sin_cos();
                nodes.push([st * cp, st * sp, ct]);
                e_theta.push([ct * cp, ct * sp, -st]);
                e_phi.push([-sp, cp, 0.0]);
                weights.push(band * dphi);
                let mut s = [0; STENCIL];
                for (slot, (di, dj)) in (-2..=2)
                    .flat_map(|di| (-1..=1).map(move |dj| (di, dj)))
                    .enumerate()
                {
                    s[slot] = Self::wrap(n_theta, n_phi, i as isize + di, j as isize + dj);
                }
                stencils.push(s);
            }
        }
        Ok(Self {
            n_theta,
            n_phi,
            theta,
            phi,
            nodes,
            e_theta,
            e_phi,
            weights,
            stencils,
            coef: StencilWeights {
                d1_theta: theta_first_derivative(dtheta),
                d2_theta: 1.0 / (2.0 * (1.0 - dtheta.cos())),
                d1_phi: 1.0 / (2.0 * dphi.sin()),
                d2_phi: 1.0 / (2.0 * (1.0 - dphi.cos())),
            },
        })
    }

    fn wrap(n_theta: usize, n_phi: usize, i: isize, j: isize) -> usize {
        let nt = n_theta as isize;
        let np = n_phi as isize;
        let (i, j) = if i < 0 {
            (-1 - i, j + np / 2)
        } else if i >= nt {
            (2 * nt - 1 - i, j + np / 2)
        } else {
            (i, j)
        };
        (i * np + j.rem_euclid(np)) as usize
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_phi + j
    }

    pub fn theta(&self, node: usize) -> f64 {
        self.theta[node / self.n_phi]
    }

    pub fn phi(&self, node: usize) -> f64 {
        self.phi[node % self.n_phi]
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> Vec3 {
        self.nodes[idx]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Indices of the 5×3 stencil around `node`, pole ghosts already resolved.
    pub fn stencil(&self, node: usize) -> &[usize; STENCIL] {
        &self.stencils[node]
    }

    /// Colatitude spacing `π/n_θ`.
    pub fn spacing(&self) -> f64 {
        PI / self.n_theta as f64
    }

    /// Samples a function of the unit direction at every node.
    pub fn sample(&self, f: impl Fn(&Vec3) -> f64) -> Vec<f64> {
        self.nodes.iter().map(f).collect()
    }

    /// Quadrature `∫_{S²} f`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Covariant gradient and Hessian of `f` on the unit sphere at `node`,
    /// in the orthonormal frame `(e_θ, e_φ)`.
    pub fn derivatives_at(&self, f: &[f64], node: usize) -> TangentDerivs {
        let s = &self.stencils[node];
        let c = &self.coef;
        let i = node / self.n_phi;
        let (st, ct) = self.theta[i].sin_cos();
        let cot = ct / st;

        let [a, b] = c.d1_theta;
        let f_t = a * (f[s[S]] - f[s[N]]) + b * (f[s[S2]] - f[s[N2]]);
        let f_p = c.d1_phi * (f[s[E]] - f[s[W]]);
        let f_tt = c.d2_theta * (f[s[S]] - 2.0 * f[s[C]] + f[s[N]]);
        let f_pp = c.d2_phi * (f[s[E]] - 2.0 * f[s[C]] + f[s[W]]);
        let f_tp = c.d1_phi
            * (a * (f[s[SE]] - f[s[SW]] - f[s[NE]] + f[s[NW]])
                + b * (f[s[S2E]] - f[s[S2W]] - f[s[N2E]] + f[s[N2W]]));

        let off = (f_tp - cot * f_p) / st;
        TangentDerivs {
            grad: [f_t, f_p / st],
            hess: [[f_tt, off], [off, f_pp / (st * st) + cot * f_t]],
        }
    }

    fn gradient_at(&self, f: &[f64], node: usize) -> [f64; 2] {
        let s = &self.stencils[node];
        let st = self.theta[node / self.n_phi].sin();
        let [a, b] = self.coef.d1_theta;
        [
            a * (f[s[S]] - f[s[N]]) + b * (f[s[S2]] - f[s[N2]]),
            self.coef.d1_phi * (f[s[E]] - f[s[W]]) / st,
        ]
    }

    /// Restricts a field from the grid `(2n_θ, 2n_φ)` to this grid.
    ///
    /// Coarse colatitudes sit midway between two fine rows; values come from
    /// the four-point midpoint rule along the meridian (fourth order, with
    /// pole ghosting) and injection in longitude.
    pub fn restrict_from_fine(&self, fine: &SphericalGrid, values: &[f64]) -> Result<Vec<f64>> {
        if fine.n_theta != 2 * self.n_theta || fine.n_phi != 2 * self.n_phi {
            return Err(Error::Grid(format!(
                "fine grid ({}, {}) is not a refinement of ({}, {})",
                fine.n_theta, fine.n_phi, self.n_theta, self.n_phi
            )));
        }
        if values.len() != fine.len() {
            return Err(Error::Shape("fine field length mismatch".into()));
        }
        let at = |i: isize, j: usize| {
            values[Self::wrap(fine.n_theta, fine.n_phi, i, j as isize)]
        };
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.n_theta as isize {
            for j in 0..self.n_phi {
                let jf = 2 * j;
                let a = 2 * i;
                let v = (-at(a - 1, jf) + 9.0 * at(a, jf) + 9.0 * at(a + 1, jf) - at(a + 2, jf))
                    / 16.0;
                out.push(v);
            }
        }
        Ok(out)
    }
}

/// Weights `(a, b)` of the five-point `∂_θ` stencil exact on `cos kθ`, `sin kθ`
/// for `k ≤ 2`: `2(a sin kΔ + b sin 2kΔ) = k`.
fn theta_first_derivative(d: f64) -> [f64; 2] {
    let (s1, s2, s4) = (d.sin(), (2.0 * d).sin(), (4.0 * d).sin());
    let det = s1 * s4 - s2 * s2;
    [(0.5 * s4 - s2) / det, (s1 - 0.5 * s2) / det]
}

/// Covariant first and second derivatives in an orthonormal tangent frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentDerivs {
    pub grad: [f64; 2],
    pub hess: Mat2,
}

/// Positive radial function sampled on a [`SphericalGrid`].
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<SphericalGrid>,
    rho: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<SphericalGrid>, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::Shape(format!(
                "field has {} samples for {} nodes",
                rho.len(),
                grid.len()
            )));
        }
        if let Some(i) = rho.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Geometry {
                node: i,
                reason: format!("radial function must be positive and finite, got {}", rho[i]),
            });
        }
        Ok(Self { grid, rho })
    }

    pub fn constant(grid: Arc<SphericalGrid>, r: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![r; n])
    }

    pub fn from_fn(grid: Arc<SphericalGrid>, f: impl Fn(&Vec3) -> f64) -> Result<Self> {
        let rho = grid.sample(f);
        Self::new(grid, rho)
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn into_rho(self) -> Vec<f64> {
        self.rho
    }

    pub fn min(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.rho.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Max-norm distance to another field on the same grid.
    pub fn distance(&self, other: &RadialField) -> f64 {
        self.rho
            .iter()
            .zip(&other.rho)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// `∇ρ` and `∇²ρ` at every node.
pub fn tangential_derivatives(field: &RadialField) -> Vec<TangentDerivs> {
    let grid = field.grid();
    (0..grid.len())
        .into_par_iter()
        .map(|node| grid.derivatives_at(field.rho(), node))
        .collect()
}

/// Local shape data of the radial graph at one node.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LocalShape {
    pub support: f64,
    /// `√(ρ² + |∇ρ|²)`
    pub w: f64,
    /// Second fundamental form in the `(e_θ, e_φ)` coordinate frame.
    pub h_frame: Mat2,
    /// Second fundamental form in an orthonormal tangent frame.
    pub h_orth: Mat2,
    pub metric: Mat2,
    /// `g^{-1/2}` in the `(e_θ, e_φ)` frame.
    pub inv_sqrt_metric: Mat2,
    /// Principal curvatures, ascending.
    pub lambda: [f64; 2],
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

pub(crate) fn sym_eig2(m: &Mat2) -> [f64; 2] {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let half = 0.5 * (m[0][0] - m[1][1]);
    let off = 0.5 * (m[0][1] + m[1][0]);
    let d = half.hypot(off);
    [mean - d, mean + d]
}

pub(crate) fn local_shape(rho: f64, d: &TangentDerivs) -> LocalShape {
    let [p, q] = d.grad;
    let grad2 = p * p + q * q;
    let w = (rho * rho + grad2).sqrt();
    let rr = rho * rho;
    let h_frame = [
        [
            (rr + 2.0 * p * p - rho * d.hess[0][0]) / w,
            (2.0 * p * q - rho * d.hess[0][1]) / w,
        ],
        [
            (2.0 * p * q - rho * d.hess[1][0]) / w,
            (rr + 2.0 * q * q - rho * d.hess[1][1]) / w,
        ],
    ];
    let metric = [[rr + p * p, p * q], [p * q, rr + q * q]];
    let inv_sqrt_metric = if grad2 > 0.0 {
        let c = (rho / w - 1.0) / grad2;
        [
            [(1.0 + c * p * p) / rho, c * p * q / rho],
            [c * p * q / rho, (1.0 + c * q * q) / rho],
        ]
    } else {
        [[1.0 / rho, 0.0], [0.0, 1.0 / rho]]
    };
    let h_orth = mat_mul(&mat_mul(&inv_sqrt_metric, &h_frame), &inv_sqrt_metric);
    LocalShape {
        support: rr / w,
        w,
        h_frame,
        h_orth,
        metric,
        inv_sqrt_metric,
        lambda: sym_eig2(&h_orth),
    }
}

/// Geometric quantities of the radial graph at one node.
#[derive(Debug, Clone)]
pub struct NodeGeometry {
    pub position: Vec3,
    pub normal: Vec3,
    /// `u = ⟨X, ν⟩`
    pub support: f64,
    /// First fundamental form in the `(e_θ, e_φ)` frame of the unit sphere.
    pub metric: Mat2,
    /// Second fundamental form in an orthonormal tangent frame.
    pub second_form: SymTensor2,
    pub curvatures: Spectrum,
}

#[derive(Debug, Clone)]
pub struct SurfaceGeometry {
    field: RadialField,
    derivs: Vec<TangentDerivs>,
    nodes: Vec<NodeGeometry>,
}

impl SurfaceGeometry {
    pub fn field(&self) -> &RadialField {
        &self.field
    }

    pub fn nodes(&self) -> &[NodeGeometry] {
        &self.nodes
    }

    pub fn derivatives(&self) -> &[TangentDerivs] {
        &self.derivs
    }

    pub fn support_values(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.support).collect()
    }

    pub fn min_support(&self) -> f64 {
        self.nodes.iter().map(|n| n.support).fold(f64::INFINITY, f64::min)
    }
}

/// Position, normal, support function, metric, second fundamental form and
/// principal curvatures at every node.
pub fn radial_geometry(field: &RadialField) -> Result<SurfaceGeometry> {
    let grid = field.grid();
    let derivs = tangential_derivatives(field);
    let nodes = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let rho = field.rho()[i];
            let d = &derivs[i];
            if d.grad.iter().chain(d.hess.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::Geometry {
                    node: i,
                    reason: "non-finite tangential derivatives".into(),
                });
            }
            let shape = local_shape(rho, d);
            let m = shape.metric;
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if !(m[0][0] > 0.0 && det > 0.0) {
                return Err(Error::Geometry {
                    node: i,
                    reason: format!("metric not positive definite (det = {det})"),
                });
            }
            let x = grid.node(i);
            let et = grid.e_theta[i];
            let ep = grid.e_phi[i];
            let [p, q] = d.grad;
            let normal = std::array::from_fn(|c| (rho * x[c] - p * et[c] - q * ep[c]) / shape.w);
            let second_form = SymTensor2::from_matrix(DMatrix::from_fn(2, 2, |a, b| {
                shape.h_orth[a][b]
            }))?;
            Ok(NodeGeometry {
                position: [rho * x[0], rho * x[1], rho * x[2]],
                normal,
                support: shape.support,
                metric: m,
                second_form,
                curvatures: Spectrum::new(shape.lambda.to_vec())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bad: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| !(n.support > 0.0))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::NotStarshaped { nodes: bad });
    }
    Ok(SurfaceGeometry {
        field: field.clone(),
        derivs,
        nodes,
    })
}

/// Max-norm residuals of the discrete structure equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureResiduals {
    /// `∇_i∇_j X + h_ij ν`, with `∇²X` from the Gauss route and `h` from the
    /// Weingarten route `h_ij = ⟨∇_i ν, ∇_j X⟩` applied to the discrete normal field.
    pub gauss: f64,
    /// `∇_i⟨X,ν⟩ − h_il⟨∇_l X, X⟩`, differencing the discrete support function.
    pub support_gradient: f64,
}

/// Per-node structure residuals together with their maxima.
pub fn structure_equation_residuals(geom: &SurfaceGeometry) -> (Vec<StructureResiduals>, StructureResiduals) {
    let field = geom.field();
    let grid = field.grid();
    let rho = field.rho();
    let n = grid.len();
    let delta: [Vec<f64>; 3] = std::array::from_fn(|c| {
        (0..n).map(|i| geom.nodes[i].normal[c] - grid.nodes[i][c]).collect()
    });
    let support = geom.support_values();

    let per_node: Vec<StructureResiduals> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d = &geom.derivs[i];
            let shape = local_shape(rho[i], d);
            let x = grid.nodes[i];
            let frame = [grid.e_theta[i], grid.e_phi[i]];
            let dd: [[f64; 2]; 3] = std::array::from_fn(|c| grid.gradient_at(&delta[c], i));

            // Weingarten route: ∂_a ν = e_a + ∂_a(ν − x).
            let dnu: [Vec3; 2] = std::array::from_fn(|a| std::array::from_fn(|c| frame[a][c] + dd[c][a]));
            let dx: [Vec3; 2] = std::array::from_fn(|b| {
                std::array::from_fn(|c| d.grad[b] * x[c] + rho[i] * frame[b][c])
            });
            let mut diff = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    diff[a][b] = dot(&dnu[a], &dx[b]) - shape.h_frame[a][b];
                }
            }
            let p = shape.inv_sqrt_metric;
            let r = mat_mul(&mat_mul(&p, &diff), &p);
            let gauss = r.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();

            // ∂_a u = h_ab g^{bc} ⟨X_c, X⟩ with ⟨X_c, X⟩ = ρ ρ_c.
            let du = grid.gradient_at(&support, i);
            let m = shape.metric;
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let ginv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
            let xc = [rho[i] * d.grad[0], rho[i] * d.grad[1]];
            let v = [
                ginv[0][0] * xc[0] + ginv[0][1] * xc[1],
                ginv[1][0] * xc[0] + ginv[1][1] * xc[1],
            ];
            let h = shape.h_frame;
            let e = [
                du[0] - (h[0][0] * v[0] + h[0][1] * v[1]),
                du[1] - (h[1][0] * v[0] + h[1][1] * v[1]),
            ];
            let eo = [p[0][0] * e[0] + p[0][1] * e[1], p[1][0] * e[0] + p[1][1] * e[1]];
            StructureResiduals {
                gauss,
                support_gradient: eo[0].hypot(eo[1]),
            }
        })
        .collect();
    let max = per_node.iter().fold(
        StructureResiduals { gauss: 0.0, support_gradient: 0.0 },
        |m, r| StructureResiduals {
            gauss: m.gauss.max(r.gauss),
            support_gradient: m.support_gradient.max(r.support_gradient),
        },
    );
    (per_node, max)
}

/// Writes the surface as a Wavefront OBJ mesh.
///
/// Vertices are the positions `X` in node order. Each grid quad between
/// adjacent rings becomes two triangles; each polar ring is closed by a
/// triangle fan.
pub fn write_obj<Wr: Write>(field: &RadialField, out: &mut Wr) -> Result<()> {
    let grid = field.grid();
    let (nt, np) = (grid.n_theta(), grid.n_phi());
    writeln!(out, "# radial graph on a ({nt}, {np}) latitude-longitude grid")?;
    for (x, r) in grid.nodes().iter().zip(field.rho()) {
        writeln!(
            out,
            "v {:.16e} {:.16e} {:.16e}",
            r * x[0],
            r * x[1],
            r * x[2]
        )?;
    }
    // OBJ indices are 1-based
    let v = |i: usize, j: usize| grid.index(i, j % np) + 1;
    for i in 0..nt - 1 {
        for j in 0..np {
            writeln!(out, "f {} {} {}", v(i, j), v(i + 1, j), v(i + 1, j + 1))?;
            writeln!(out, "f {} {} {}", v(i, j), v(i + 1, j + 1), v(i, j + 1))?;
        }
    }
    for j in 1..np - 1 {
        writeln!(out, "f {} {} {}", v(0, 0), v(0, j + 1), v(0, j))?;
        writeln!(out, "f {} {} {}", v(nt - 1, 0), v(nt - 1, j), v(nt - 1, j + 1))?;
    }
    Ok(())
}

/// Writes per-node geometry as CSV with columns
/// `theta,phi,rho,u,lambda1,lambda2,sigma_k`.
pub fn write_csv<Wr: Write>(geom: &SurfaceGeometry, k: usize, out: &mut Wr) -> Result<()> {
    let field = geom.field();
    let grid = field.grid();
    writeln!(out, "theta,phi,rho,u,lambda1,lambda2,sigma_k")?;
    for (i, node) in geom.nodes().iter().enumerate() {
        let lam = node.curvatures.values();
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            grid.theta(i),
            grid.phi(i),
            field.rho()[i],
            node.support,
            lam[0],
            lam[1],
            sigma_raw(lam, k)
        )?;
    }
    Ok(())
}
