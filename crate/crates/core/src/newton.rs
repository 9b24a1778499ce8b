//! Damped Newton iteration for locally coupled discrete systems.
//!
//! The Jacobian is assembled by finite differences, one column per unknown:
//! central differences with step `ε^{1/3}·(1 + |x_j|)` by default, or forward
//! differences with step `√ε·(1 + |x_j|)`. Columns whose residual footprints
//! are disjoint share residual evaluations; every entry is still the
//! difference quotient of its own column. The Jacobian is stored banded and factored
//! by LU with partial pivoting.
//!
//! Steps are backtracked by halving until the Armijo condition
//! `‖F(x + αd)‖² ≤ (1 − 2cα)‖F(x)‖²` holds and the trial point is admissible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Admissibility summary of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    /// Smallest Gårding-cone margin over all nodes.
    pub min_cone_margin: f64,
    /// Smallest support value `⟨X,ν⟩`, or `+∞` where not applicable.
    pub min_support: f64,
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        self.min_cone_margin > 0.0 && self.min_support > 0.0
    }
}

/// A square nonlinear system `F(x) = 0` with a sparse dependency pattern.
pub trait NonlinearSystem: Sync {
    fn dim(&self) -> usize;

    /// Raw residual, with no admissibility veto.
    fn residual(&self, x: &[f64], out: &mut [f64]);

    fn admissibility(&self, x: &[f64]) -> Admissibility;

    /// Residual rows that depend on unknown `j`.
    fn dependents(&self, j: usize) -> Vec<usize>;

    /// Factor applied to the difference step of column `j`; stiff columns
    /// (large stencil weights) want shorter steps.
    fn step_scale(&self, _j: usize) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianScheme {
    /// `(F(x + s e_j) − F(x − s e_j)) / 2s`, `s = ε^{1/3}(1 + |x_j|)`.
    #[default]
    Central,
    /// `(F(x + s e_j) − F(x)) / s`, `s = √ε(1 + |x_j|)`.
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonOptions {
    /// Target max-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub min_damping: f64,
    pub jacobian: JacobianScheme,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            armijo: 1e-4,
            backtrack: 0.5,
            min_damping: 1.0 / 1024.0,
            jacobian: JacobianScheme::Central,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub damping: f64,
    pub backtracks: usize,
    /// Trial steps rejected because they left the admissible set.
    pub vetoed: usize,
    pub residual_max: f64,
    pub residual_l2: f64,
    pub min_cone_margin: f64,
    pub min_support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm of the residual, starting with the initial state.
    pub residual_history: Vec<f64>,
    pub steps: Vec<IterationRecord>,
    pub initial: Admissibility,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::NAN)
    }

    /// Smallest cone margin over the start and every accepted iterate.
    pub fn min_cone_margin(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.min_cone_margin)
            .fold(self.initial.min_cone_margin, f64::min)
    }

    pub fn min_support(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.min_support)
            .fold(self.initial.min_support, f64::min)
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Greedy column grouping: columns in one group touch disjoint residual rows.
pub fn color_columns<S: NonlinearSystem + ?Sized>(sys: &S) -> Vec<Vec<usize>> {
    let n = sys.dim();
    let deps: Vec<Vec<usize>> = (0..n).map(|j| sys.dependents(j)).collect();
    let mut row_cols: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, rows) in deps.iter().enumerate() {
        for &r in rows {
            row_cols[r].push(j);
        }
    }
    let mut color = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut forbidden = Vec::new();
    for j in 0..n {
        forbidden.clear();
        for &r in &deps[j] {
            for &other in &row_cols[r] {
                if color[other] != usize::MAX {
                    forbidden.push(color[other]);
                }
            }
        }
        let c = (0..).find(|c| !forbidden.contains(c)).unwrap();
        color[j] = c;
        if c == groups.len() {
            groups.push(Vec::new());
        }
        groups[c].push(j);
    }
    groups
}

/// Finite-difference Jacobian in banded storage.
pub fn fd_jacobian<S: NonlinearSystem + ?Sized>(
    sys: &S,
    x: &[f64],
    f0: &[f64],
    groups: &[Vec<usize>],
    scheme: JacobianScheme,
) -> BandedMatrix {
    let n = sys.dim();
    let deps: Vec<Vec<usize>> = (0..n).map(|j| sys.dependents(j)).collect();
    let (mut kl, mut ku) = (0, 0);
    for (j, rows) in deps.iter().enumerate() {
        for &r in rows {
            if r > j {
                kl = kl.max(r - j);
            } else {
                ku = ku.max(j - r);
            }
        }
    }
    let mut jac = BandedMatrix::zeros(n, kl, ku);
    let rel = match scheme {
        JacobianScheme::Central => f64::EPSILON.cbrt(),
        JacobianScheme::Forward => f64::EPSILON.sqrt(),
    };
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for group in groups {
        for &j in group {
            let h = rel * sys.step_scale(j) * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            xm[j] = x[j] - h;
        }
        sys.residual(&xp, &mut fp);
        match scheme {
            JacobianScheme::Central => {
                sys.residual(&xm, &mut fm);
                for &j in group {
                    let width = xp[j] - xm[j];
                    for &r in &deps[j] {
                        jac.set(r, j, (fp[r] - fm[r]) / width);
                    }
                }
            }
            JacobianScheme::Forward => {
                for &j in group {
                    let step = xp[j] - x[j];
                    for &r in &deps[j] {
                        jac.set(r, j, (fp[r] - f0[r]) / step);
                    }
                }
            }
        }
        for &j in group {
            xp[j] = x[j];
            xm[j] = x[j];
        }
    }
    jac
}

/// Damped Newton from `x0`; every accepted iterate is admissible.
pub fn newton_solve<S: NonlinearSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = sys.dim();
    if x0.len() != n {
        return Err(Error::Shape(format!("start has {} entries, system {n}", x0.len())));
    }
    let initial = sys.admissibility(x0);
    if !initial.is_admissible() {
        return Err(Error::Start(format!(
            "start state inadmissible (cone margin {:e}, support {:e})",
            initial.min_cone_margin, initial.min_support
        )));
    }
    let mut x = x0.to_vec();
    let mut f = vec![0.0; n];
    sys.residual(&x, &mut f);
    let mut report = SolveReport {
        iterations: 0,
        converged: false,
        residual_history: vec![max_norm(&f)],
        steps: Vec::new(),
        initial,
    };
    if max_norm(&f).is_nan() {
        return Err(Error::NonConvergence {
            reason: "residual is NaN at the start".into(),
            report: Box::new(report),
        });
    }
    let groups = color_columns(sys);
    let mut trial = vec![0.0; n];
    let mut f_trial = vec![0.0; n];

    for iter in 1..=opts.max_iter {
        if max_norm(&f) <= opts.tol {
            report.converged = true;
            return Ok((x, report));
        }
        let jac = fd_jacobian(sys, &x, &f, &groups, opts.jacobian);
        let lu = match jac.factor() {
            Ok(lu) => lu,
            Err(e) => {
                return Err(Error::NonConvergence {
                    reason: e.to_string(),
                    report: Box::new(report),
                })
            }
        };
        let mut dir: Vec<f64> = f.iter().map(|v| -v).collect();
        lu.solve_in_place(&mut dir);

        let merit = sq_norm(&f);
        let mut alpha = 1.0;
        let mut backtracks = 0;
        let mut vetoed = 0;
        let accepted = loop {
            for i in 0..n {
                trial[i] = x[i] + alpha * dir[i];
            }
            let adm = sys.admissibility(&trial);
            if adm.is_admissible() {
                sys.residual(&trial, &mut f_trial);
                let m = sq_norm(&f_trial);
                if m <= (1.0 - 2.0 * opts.armijo * alpha) * merit {
                    break Some(adm);
                }
            } else {
                vetoed += 1;
            }
            alpha *= opts.backtrack;
            backtracks += 1;
            if alpha < opts.min_damping {
                break None;
            }
        };
        let Some(adm) = accepted else {
            return Err(Error::NonConvergence {
                reason: format!(
                    "line search found no admissible decreasing step at iteration {iter} \
                     (residual {:e}, {vetoed} vetoed trials)",
                    max_norm(&f)
                ),
                report: Box::new(report),
            });
        };
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut f, &mut f_trial);
        report.iterations = iter;
        report.residual_history.push(max_norm(&f));
        report.steps.push(IterationRecord {
            iteration: iter,
            damping: alpha,
            backtracks,
            vetoed,
            residual_max: max_norm(&f),
            residual_l2: sq_norm(&f).sqrt(),
            min_cone_margin: adm.min_cone_margin,
            min_support: adm.min_support,
        });
    }
    if max_norm(&f) <= opts.tol {
        report.converged = true;
        return Ok((x, report));
    }
    Err(Error::NonConvergence {
        reason: format!(
            "max_iter = {} exceeded (residual {:e})",
            opts.max_iter,
            max_norm(&f)
        ),
        report: Box::new(report),
    })
}

/// Square band matrix with lower bandwidth `kl` and upper bandwidth `ku`.
///
/// Row `i` stores columns `i − kl ..= i + kl + ku`; the extra `kl` columns on
/// the right hold fill-in produced by row interchanges during factorization.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        (off >= 0 && (off as usize) < self.width).then(|| i * self.width + off as usize)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Panics if `(i, j)` lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside band ({}, {})",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j).unwrap();
        self.data[s] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// LU factorization with partial pivoting.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let reach = kl + self.ku;
        let mut piv = vec![0; n];
        for c in 0..n {
            let last_row = (c + kl).min(n - 1);
            let last_col = (c + reach).min(n - 1);
            let mut p = c;
            let mut best = self.data[self.slot(c, c).unwrap()].abs();
            for r in c + 1..=last_row {
                let v = self.data[self.slot(r, c).unwrap()].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularJacobian(c));
            }
            piv[c] = p;
            if p != c {
                for j in c..=last_col {
                    let a = self.slot(c, j).unwrap();
                    let b = self.slot(p, j).unwrap();
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(c, c).unwrap()];
            for r in c + 1..=last_row {
                let s = self.slot(r, c).unwrap();
                let m = self.data[s] / pivot;
                self.data[s] = m;
                if m != 0.0 {
                    for j in c + 1..=last_col {
                        let src = self.data[self.slot(c, j).unwrap()];
                        let dst = self.slot(r, j).unwrap();
                        self.data[dst] -= m * src;
                    }
                }
            }
        }
        Ok(BandedLu { lu: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.lu;
        let n = a.n;
        let reach = a.kl + a.ku;
        for c in 0..n {
            b.swap(c, self.piv[c]);
            let bc = b[c];
            if bc != 0.0 {
                for r in c + 1..=(c + a.kl).min(n - 1) {
                    b[r] -= a.data[a.slot(r, c).unwrap()] * bc;
                }
            }
        }
        for c in (0..n).rev() {
            let mut s = b[c];
            for j in c + 1..=(c + reach).min(n - 1) {
                s -= a.data[a.slot(c, j).unwrap()] * b[j];
            }
            b[c] = s / a.data[a.slot(c, c).unwrap()];
        }
    }
}
