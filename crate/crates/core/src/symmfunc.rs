//! Elementary symmetric functions of principal curvatures.
//!
//! `σ_l(λ)` is evaluated by the one-pass recurrence
//! `e_j ← e_j + λ_i e_{j-1}` over the entries of `λ`, which costs `O(n·l)`.
//! Matrix arguments go through a symmetric eigendecomposition; the gradient
//! of a spectral function at `A = Q diag(λ) Qᵀ` is `Q diag(∂f/∂λ) Qᵀ`.
//! Second directional derivatives are extracted as the `t²` coefficient of
//! the polynomial `t ↦ σ_l(A + tB)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest dimension accepted by [`sigma_subset_oracle`].
pub const ENUMERATION_LIMIT: usize = 12;

/// Principal curvatures at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("spectrum must have n >= 1 entries".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("spectrum entry {i}")));
        }
        Ok(Self(values))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// Largest absolute entry.
    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Symmetric `n×n` tensor, e.g. a second fundamental form in an orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor2(DMatrix<f64>);

impl SymTensor2 {
    /// Builds the tensor from a square matrix, symmetrizing `(M + Mᵀ)/2`.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Shape(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor entry".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self(sym))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("rows of unequal length".into()));
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::from_matrix(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// `self + t·other`
    pub fn add_scaled(&self, other: &SymTensor2, t: f64) -> Self {
        Self(&self.0 + &other.0 * t)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Eigenvalues in ascending order.
    pub fn spectrum(&self) -> Spectrum {
        let mut vals: Vec<f64> = if self.n() == 1 {
            vec![self.0[(0, 0)]]
        } else {
            self.0.clone().symmetric_eigenvalues().iter().copied().collect()
        };
        vals.sort_by(f64::total_cmp);
        Spectrum(vals)
    }

    fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        self.0.clone().symmetric_eigen()
    }
}

/// Curvature operator `F` acting on the second fundamental form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    /// `F = σ_k`
    SigmaK { k: usize },
    /// `F = σ_k / σ_l`
    Quotient { k: usize, l: usize },
}

impl OperatorSpec {
    pub fn k(&self) -> usize {
        match *self {
            OperatorSpec::SigmaK { k } | OperatorSpec::Quotient { k, .. } => k,
        }
    }

    /// Denominator index, `0` for plain `σ_k`.
    pub fn l(&self) -> usize {
        match *self {
            OperatorSpec::SigmaK { .. } => 0,
            OperatorSpec::Quotient { l, .. } => l,
        }
    }

    /// Degree of homogeneity in the curvatures.
    pub fn homogeneity(&self) -> usize {
        self.k() - self.l()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let k = self.k();
        if k < 1 || k > n {
            return Err(Error::Domain(format!("operator order k = {k} outside 1..={n}")));
        }
        if let OperatorSpec::Quotient { l, .. } = *self {
            if l >= k {
                return Err(Error::Domain(format!(
                    "quotient denominator l = {l} must satisfy 0 <= l < k = {k}"
                )));
            }
        }
        Ok(())
    }

    /// `F(λ)` evaluated directly on a spectrum.
    pub fn eval(&self, lambda: &[f64]) -> Result<f64> {
        let all = sigma_all(lambda);
        let num = all[self.k()];
        match *self {
            OperatorSpec::SigmaK { .. } => Ok(num),
            OperatorSpec::Quotient { l, .. } => {
                let den = all[l];
                if den <= 0.0 {
                    return Err(Error::ConeViolation { nodes: vec![] });
                }
                Ok(num / den)
            }
        }
    }
}

/// All elementary symmetric functions `σ_0..σ_n` in one pass.
pub fn sigma_all(lambda: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (count, &x) in lambda.iter().enumerate() {
        for j in (1..=count + 1).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// `σ_l` of a slice by the truncated recurrence; `l` must not exceed `lambda.len()`.
pub(crate) fn sigma_raw(lambda: &[f64], l: usize) -> f64 {
    if l == 0 {
        return 1.0;
    }
    let mut e = vec![0.0; l + 1];
    e[0] = 1.0;
    for (count, &x) in lambda.iter().enumerate() {
        let top = l.min(count + 1);
        for j in (1..=top).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e[l]
}

/// `σ_l(λ)`, with `σ_0 = 1`.
pub fn sigma(spec: &Spectrum, l: usize) -> Result<f64> {
    if l > spec.n() {
        return Err(Error::Domain(format!("sigma index {l} exceeds n = {}", spec.n())));
    }
    Ok(sigma_raw(spec.values(), l))
}

/// `σ_l` by explicit enumeration of all `l`-subsets. Test oracle only.
pub fn sigma_subset_oracle(spec: &Spectrum, l: usize) -> Result<f64> {
    let n = spec.n();
    if n > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { n, limit: ENUMERATION_LIMIT });
    }
    if l > n {
        return Err(Error::Domain(format!("sigma index {l} exceeds n = {n}")));
    }
    let v = spec.values();
    let mut total = 0.0;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != l {
            continue;
        }
        let mut prod = 1.0;
        for (i, x) in v.iter().enumerate() {
            if mask & (1 << i) != 0 {
                prod *= x;
            }
        }
        total += prod;
    }
    Ok(total)
}

/// `σ_{l-1}(λ|i)`, the spectrum with entry `i` removed.
pub(crate) fn sigma_deleted(lambda: &[f64], i: usize, l: usize) -> f64 {
    if l == 0 {
        return 1.0;
    }
    let mut e = vec![0.0; l + 1];
    e[0] = 1.0;
    let mut count = 0;
    for (idx, &x) in lambda.iter().enumerate() {
        if idx == i {
            continue;
        }
        let top = l.min(count + 1);
        for j in (1..=top).rev() {
            e[j] += x * e[j - 1];
        }
        count += 1;
    }
    e[l]
}

/// `∂σ_l/∂λ_i = σ_{l-1}(λ|i)` for every `i`.
pub fn sigma_grad(spec: &Spectrum, l: usize) -> Result<Vec<f64>> {
    let n = spec.n();
    if l < 1 || l > n {
        return Err(Error::Domain(format!("gradient index {l} outside 1..={n}")));
    }
    Ok((0..n).map(|i| sigma_deleted(spec.values(), i, l - 1)).collect())
}

/// `σ_l` of a symmetric matrix.
pub fn sigma_matrix(a: &SymTensor2, l: usize) -> Result<f64> {
    sigma(&a.spectrum(), l)
}

/// `d²/dt² σ_l(A + tB)` at `t = 0`, i.e. the quadratic form `σ_l^{ij,mq} B_ij B_mq`.
///
/// `t ↦ σ_l(A + tB)` is a polynomial of degree at most `l`; it is sampled at
/// `l + 1` Chebyshev nodes scaled to `‖A‖/‖B‖` and interpolated exactly.
pub fn sigma_hess_dir(a: &SymTensor2, b: &SymTensor2, l: usize) -> Result<f64> {
    let n = a.n();
    if b.n() != n {
        return Err(Error::Shape(format!("A is {n}x{n} but B is {}x{}", b.n(), b.n())));
    }
    if l < 1 || l > n {
        return Err(Error::Domain(format!("hessian index {l} outside 1..={n}")));
    }
    let b_norm = b.frobenius_norm();
    if l == 1 || b_norm == 0.0 {
        return Ok(0.0);
    }
    let a_norm = a.frobenius_norm();
    let scale = if a_norm > 0.0 { a_norm / b_norm } else { 1.0 / b_norm };

    let m = l + 1;
    let nodes: Vec<f64> = (0..m)
        .map(|j| (std::f64::consts::PI * (2 * j + 1) as f64 / (2 * m) as f64).cos())
        .collect();
    let vander = DMatrix::from_fn(m, m, |r, c| nodes[r].powi(c as i32));
    let mut rhs = DVector::zeros(m);
    for (r, &tau) in nodes.iter().enumerate() {
        rhs[r] = sigma_matrix(&a.add_scaled(b, tau * scale), l)?;
    }
    let coeffs = vander
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("interpolation matrix singular".into()))?;
    Ok(2.0 * coeffs[2] / (scale * scale))
}

/// Result of a Gårding cone membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeMembership {
    pub inside: bool,
    /// `min_{1≤l≤k} σ_l(λ)`, raw (not normalized).
    pub margin: f64,
}

/// Whether `λ ∈ Γ_k`, i.e. `σ_l(λ) > 0` for `l = 1..k`.
pub fn in_gamma_k(spec: &Spectrum, k: usize) -> Result<ConeMembership> {
    let n = spec.n();
    if k < 1 || k > n {
        return Err(Error::Domain(format!("cone order {k} outside 1..={n}")));
    }
    Ok(cone_membership_raw(spec.values(), k))
}

pub(crate) fn cone_membership_raw(lambda: &[f64], k: usize) -> ConeMembership {
    let all = sigma_all(lambda);
    let margin = all[1..=k].iter().copied().fold(f64::INFINITY, f64::min);
    ConeMembership { inside: margin > 0.0, margin }
}

/// `F(A)` and the symmetrized gradient `∂F/∂A_ij`.
pub fn operator_value_grad(a: &SymTensor2, op: &OperatorSpec) -> Result<(f64, SymTensor2)> {
    let n = a.n();
    op.validate(n)?;
    let eig = a.eigen();
    let lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let k = op.k();
    let num = sigma_raw(&lambda, k);
    let dnum: Vec<f64> = (0..n).map(|i| sigma_deleted(&lambda, i, k - 1)).collect();

    let (value, dvals) = match *op {
        OperatorSpec::SigmaK { .. } => (num, dnum),
        OperatorSpec::Quotient { l, .. } => {
            let den = sigma_raw(&lambda, l);
            if den <= 0.0 {
                return Err(Error::ConeViolation { nodes: vec![] });
            }
            let dden: Vec<f64> = if l == 0 {
                vec![0.0; n]
            } else {
                (0..n).map(|i| sigma_deleted(&lambda, i, l - 1)).collect()
            };
            let grad = dnum
                .iter()
                .zip(&dden)
                .map(|(dn, dd)| (dn * den - num * dd) / (den * den))
                .collect();
            (num / den, grad)
        }
    };

    let q = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&DVector::from_vec(dvals));
    let grad = q * d * q.transpose();
    Ok((value, SymTensor2::from_matrix(grad)?))
}

/// `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(&spec(&[1.0, 1.0, 1.0]), 2).unwrap(), 3.0);
        assert_eq!(sigma(&spec(&[0.3, -7.0]), 0).unwrap(), 1.0);
        assert_eq!(sigma(&spec(&[1.0, 2.0, 3.0]), 2).unwrap(), 11.0);
        assert!(matches!(sigma(&spec(&[1.0]), 2), Err(Error::Domain(_))));
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(sigma_subset_oracle(&spec(&[1.0, 1.0, 1.0]), 2).unwrap(), 3.0);
        assert_eq!(sigma_subset_oracle(&spec(&[2.0, -1.0]), 2).unwrap(), -2.0);
        assert_eq!(sigma_subset_oracle(&spec(&[1.0, 2.0, 3.0, 4.0]), 3).unwrap(), 50.0);
        let big = spec(&[1.0; 13]);
        assert!(matches!(
            sigma_subset_oracle(&big, 2),
            Err(Error::EnumerationTooLarge { n: 13, .. })
        ));
    }

    #[test]
    fn grad_examples() {
        assert_eq!(sigma_grad(&spec(&[1.0, 1.0, 1.0]), 2).unwrap(), vec![2.0, 2.0, 2.0]);
        assert_eq!(sigma_grad(&spec(&[1.0, 2.0, 3.0]), 2).unwrap(), vec![5.0, 4.0, 3.0]);
        assert_eq!(sigma_grad(&spec(&[4.0, -2.0, 0.5, 9.0]), 1).unwrap(), vec![1.0; 4]);
        assert!(sigma_grad(&spec(&[1.0, 2.0]), 0).is_err());
    }

    #[test]
    fn hess_dir_examples() {
        let id = SymTensor2::identity(3);
        assert_relative_eq!(sigma_hess_dir(&id, &id, 2).unwrap(), 6.0, epsilon = 1e-12);
        let a = SymTensor2::from_rows(&[
            vec![1.0, 0.2, -0.3],
            vec![0.2, 2.0, 0.1],
            vec![-0.3, 0.1, 0.5],
        ])
        .unwrap();
        assert_eq!(sigma_hess_dir(&a, &SymTensor2::zeros(3), 3).unwrap(), 0.0);
        assert_eq!(sigma_hess_dir(&a, &id, 1).unwrap(), 0.0);
        assert!(matches!(
            sigma_hess_dir(&a, &SymTensor2::identity(2), 2),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn hess_dir_matches_closed_form_at_diagonal() {
        // At A = diag(λ): Σ_{i≠j} σ_{l-2}(λ|ij) (B_ii B_jj − B_ij²).
        let lambda = [0.7, 1.3, -0.2, 2.1];
        let a = SymTensor2::diagonal(&lambda).unwrap();
        let b = SymTensor2::from_rows(&[
            vec![0.5, -0.4, 0.3, 0.1],
            vec![-0.4, -1.0, 0.2, 0.6],
            vec![0.3, 0.2, 0.9, -0.7],
            vec![0.1, 0.6, -0.7, 0.2],
        ])
        .unwrap();
        for l in 2..=4 {
            let mut expected = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    if i == j {
                        continue;
                    }
                    let rest: Vec<f64> = (0..4)
                        .filter(|&m| m != i && m != j)
                        .map(|m| lambda[m])
                        .collect();
                    let s = sigma_raw(&rest, l - 2);
                    expected += s * (b.get(i, i) * b.get(j, j) - b.get(i, j) * b.get(i, j));
                }
            }
            let got = sigma_hess_dir(&a, &b, l).unwrap();
            assert_relative_eq!(got, expected, epsilon = 1e-11, max_relative = 1e-11);
        }
    }

    #[test]
    fn cone_examples() {
        let m = in_gamma_k(&spec(&[1.0, 1.0, 1.0]), 3).unwrap();
        assert!(m.inside);
        assert_eq!(m.margin, 1.0);
        let m = in_gamma_k(&spec(&[1.0, 1.0, -0.1]), 2).unwrap();
        assert!(m.inside);
        assert_relative_eq!(m.margin, 0.8, epsilon = 1e-15);
        let m = in_gamma_k(&spec(&[1.0, 1.0, -0.1]), 3).unwrap();
        assert!(!m.inside);
        assert_relative_eq!(m.margin, -0.1, epsilon = 1e-15);
    }

    #[test]
    fn operator_examples() {
        let r: f64 = 1.7;
        let a = SymTensor2::identity(2).scaled(1.0 / r);
        let (v, g) = operator_value_grad(&a, &OperatorSpec::SigmaK { k: 2 }).unwrap();
        assert_relative_eq!(v, r.powi(-2), epsilon = 1e-15);
        assert_relative_eq!(g.matrix(), &(DMatrix::identity(2, 2) / r), epsilon = 1e-15);

        let (v, _) =
            operator_value_grad(&SymTensor2::identity(3), &OperatorSpec::Quotient { k: 2, l: 1 })
                .unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-15);

        let (v, g) =
            operator_value_grad(&SymTensor2::zeros(3), &OperatorSpec::SigmaK { k: 1 }).unwrap();
        assert_eq!(v, 0.0);
        assert_relative_eq!(g.matrix(), &DMatrix::identity(3, 3), epsilon = 1e-15);

        let bad = SymTensor2::diagonal(&[-1.0, -2.0, 0.5]).unwrap();
        assert!(matches!(
            operator_value_grad(&bad, &OperatorSpec::Quotient { k: 2, l: 1 }),
            Err(Error::ConeViolation { .. })
        ));
    }

    #[test]
    fn grad_matches_newton_tensor() {
        // ∂σ_k(A)/∂A = Σ_{j<k} (−1)^j σ_{k−1−j}(A) A^j, eigen-free.
        let a = SymTensor2::from_rows(&[
            vec![1.0, 0.4, -0.2],
            vec![0.4, 0.3, 0.8],
            vec![-0.2, 0.8, -0.6],
        ])
        .unwrap();
        for k in 1..=3 {
            let (_, g) = operator_value_grad(&a, &OperatorSpec::SigmaK { k }).unwrap();
            let mut t = DMatrix::zeros(3, 3);
            let mut power = DMatrix::identity(3, 3);
            for j in 0..k {
                let s = sigma_matrix(&a, k - 1 - j).unwrap();
                t += &power * (s * if j % 2 == 0 { 1.0 } else { -1.0 });
                power = &power * a.matrix();
            }
            assert_relative_eq!(g.matrix(), &t, epsilon = 1e-12);
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(2, 2), 1.0);
        assert_eq!(binomial(3, 2), 3.0);
        assert_eq!(binomial(6, 3), 20.0);
        assert_eq!(binomial(2, 3), 0.0);
    }

    fn spectrum_strategy() -> impl Strategy<Value = Vec<f64>> {
        (1usize..=8).prop_flat_map(|n| proptest::collection::vec(-2.0f64..2.0, n))
    }

    proptest! {
        #[test]
        fn recurrence_matches_enumeration(v in spectrum_strategy()) {
            let s = spec(&v);
            for l in 0..=s.n() {
                let a = sigma(&s, l).unwrap();
                let b = sigma_subset_oracle(&s, l).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn permutation_invariance(v in spectrum_strategy(), rot in 0usize..8) {
            let mut w = v.clone();
            let len = w.len();
            w.rotate_left(rot % len);
            w.reverse();
            for l in 0..=v.len() {
                let a = sigma(&spec(&v), l).unwrap();
                let b = sigma(&spec(&w), l).unwrap();
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * (1.0 + a.abs()) * len as f64);
            }
        }

        #[test]
        fn euler_identity(v in spectrum_strategy()) {
            let s = spec(&v);
            for l in 1..=s.n() {
                let g = sigma_grad(&s, l).unwrap();
                let lhs: f64 = v.iter().zip(&g).map(|(x, d)| x * d).sum();
                let rhs = l as f64 * sigma(&s, l).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn cone_nesting(v in spectrum_strategy()) {
            let s = spec(&v);
            for k in 1..=s.n() {
                if in_gamma_k(&s, k).unwrap().inside {
                    for l in 1..k {
                        prop_assert!(in_gamma_k(&s, l).unwrap().inside);
                    }
                }
            }
        }

        #[test]
        fn positive_orthant_is_admissible(v in (1usize..=8).prop_flat_map(|n| proptest::collection::vec(1e-3f64..3.0, n))) {
            let s = spec(&v);
            for k in 1..=s.n() {
                prop_assert!(in_gamma_k(&s, k).unwrap().inside);
            }
        }
    }
}
