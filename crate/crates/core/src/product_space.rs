//! The product space `X^m` and the block operators that live on it.
//!
//! Notation used in the docs below, for weights `λ` with complements `μ = 1 − λ`:
//!
//! * `R`: block `i` becomes `Σ_{j≠i} (λ_j/μ_i) x_j` (the weighted average of
//!   the *other* blocks). `R_k` does the same for block `k` only.
//! * `J`: block `i` becomes `J_{μ_i⁻¹A_i} x_i`. `J_k` touches block `k` only.
//! * `T = J_m R_m ⋯ J_1 R_1`: a Gauss–Seidel style sweep.
//! * `L x = Σ λ_i x_i`, with inverse `x ↦ (J_{A_i} x)_i` on the fixed points.
//!
//! `R`, `R*` and `R_k` act through the `m × m` coefficient matrix
//! `K_{ij} = λ_j/μ_i` (zero diagonal); nothing of size `mn × mn` is built.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{resolve, OperatorModel, Weights};
use crate::vector::{Metric, Vector};

/// An `m`-block vector; all blocks share one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vector>", into = "Vec<Vector>")]
pub struct ProductVector {
    blocks: Vec<Vector>,
}

impl ProductVector {
    pub fn new(blocks: Vec<Vector>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::InvalidArgument("product vector needs at least one block".into()))?;
        let n = first.dim();
        for b in &blocks {
            b.check_dim(n)?;
        }
        Ok(ProductVector { blocks })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        ProductVector { blocks: vec![Vector::zeros(n); m] }
    }

    /// `(c, c, …, c)`
    pub fn diagonal(c: &Vector, m: usize) -> Self {
        ProductVector { blocks: vec![c.clone(); m] }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_dim(&self) -> usize {
        self.blocks[0].dim()
    }

    pub fn blocks(&self) -> &[Vector] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Vector {
        &self.blocks[i]
    }

    pub fn into_blocks(self) -> Vec<Vector> {
        self.blocks
    }

    pub fn inner(&self, other: &ProductVector) -> f64 {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.blocks.iter().map(Vector::norm_squared).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(&self, other: &ProductVector) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                let d = a.distance(b);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn sub(&self, other: &ProductVector) -> ProductVector {
        ProductVector { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.sub(b)).collect() }
    }

    pub fn scaled(&self, s: f64) -> ProductVector {
        ProductVector { blocks: self.blocks.iter().map(|b| b.scaled(s)).collect() }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &ProductVector) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.axpy(s, b);
        }
    }

    fn check_shape(&self, m: usize, n: Option<usize>) -> Result<()> {
        if self.num_blocks() != m {
            return Err(Error::LengthMismatch { expected: m, found: self.num_blocks() });
        }
        if let Some(n) = n {
            self.blocks[0].check_dim(n)?;
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vector>> for ProductVector {
    type Error = Error;

    fn try_from(blocks: Vec<Vector>) -> Result<Self> {
        ProductVector::new(blocks)
    }
}

impl From<ProductVector> for Vec<Vector> {
    fn from(p: ProductVector) -> Self {
        p.blocks
    }
}

impl Metric for ProductVector {
    fn distance_to(&self, other: &Self) -> f64 {
        self.distance(other)
    }
}

/// `m` operators, their weights, and the common dimension `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct ProductProblem {
    models: Vec<OperatorModel>,
    weights: Weights,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct ProblemRepr {
    weights: Weights,
    models: Vec<OperatorModel>,
    dim: usize,
}

impl TryFrom<ProblemRepr> for ProductProblem {
    type Error = Error;

    fn try_from(r: ProblemRepr) -> Result<Self> {
        ProductProblem::new(r.models, r.weights, r.dim)
    }
}

impl From<ProductProblem> for ProblemRepr {
    fn from(p: ProductProblem) -> Self {
        ProblemRepr { weights: p.weights, models: p.models, dim: p.dim }
    }
}

impl ProductProblem {
    pub fn new(models: Vec<OperatorModel>, weights: Weights, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if models.len() != weights.len() {
            return Err(Error::LengthMismatch { expected: weights.len(), found: models.len() });
        }
        for model in &models {
            if let Some(d) = model.dim() {
                if d != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: d });
                }
            }
        }
        Ok(ProductProblem { models, weights, dim })
    }

    pub fn models(&self) -> &[OperatorModel] {
        &self.models
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_sets(&self) -> usize {
        self.models.len()
    }

    fn check(&self, x: &ProductVector) -> Result<()> {
        x.check_shape(self.num_sets(), Some(self.dim))
    }

    /// `J x`: block `i` becomes `J_{μ_i⁻¹A_i} x_i`.
    pub fn resolve_blocks(&self, x: &ProductVector) -> Result<ProductVector> {
        self.check(x)?;
        let blocks = x
            .blocks
            .iter()
            .zip(&self.models)
            .zip(self.weights.mu())
            .map(|((xi, model), mu)| resolve(model, 1.0 / mu, xi))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductVector { blocks })
    }

    /// `J_k R_k x`: only block `k` changes.
    pub fn local_step(&self, k: usize, x: &ProductVector) -> Result<ProductVector> {
        self.check(x)?;
        let mut out = x.clone();
        self.local_step_in_place(k, &mut out)?;
        Ok(out)
    }

    fn local_step_in_place(&self, k: usize, x: &mut ProductVector) -> Result<()> {
        let mixed = mix_others_into(&self.weights, k, x);
        x.blocks[k] = resolve(&self.models[k], 1.0 / self.weights.mu()[k], &mixed)?;
        Ok(())
    }

    /// `(J ∘ R) x`, one step of the parallel (Jacobi-style) iteration.
    pub fn jacobi_step(&self, x: &ProductVector) -> Result<ProductVector> {
        self.check(x)?;
        self.resolve_blocks(&average_others(&self.weights, x)?)
    }

    /// `T x = (J_m R_m ⋯ J_1 R_1) x`, updating blocks in index order and
    /// always mixing the most recent blocks.
    pub fn sweep(&self, x: &ProductVector) -> Result<ProductVector> {
        self.check(x)?;
        let mut out = x.clone();
        for k in 0..self.num_sets() {
            self.local_step_in_place(k, &mut out)?;
        }
        Ok(out)
    }

    /// `L⁻¹ x = (J_{A_i} x)_i`.
    pub fn split(&self, x: &Vector) -> Result<ProductVector> {
        x.check_dim(self.dim)?;
        let blocks = self
            .models
            .iter()
            .map(|model| resolve(model, 1.0, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductVector { blocks })
    }

    /// `‖x − (J ∘ R) x‖`; zero exactly on the solution set `Fix(J ∘ R)`.
    pub fn consensus_residual(&self, x: &ProductVector) -> Result<f64> {
        Ok(x.distance(&self.jacobi_step(x)?))
    }

    /// `L x = Σ λ_i x_i`.
    pub fn combine(&self, x: &ProductVector) -> Result<Vector> {
        self.check(x)?;
        combine(&self.weights, x)
    }
}

/// `K_{ij} = λ_j/μ_i` for `i ≠ j`, zero on the diagonal.
pub fn coefficient_matrix(w: &Weights) -> DMatrix<f64> {
    let (l, mu) = (w.lambda(), w.mu());
    DMatrix::from_fn(w.len(), w.len(), |i, j| if i == j { 0.0 } else { l[j] / mu[i] })
}

fn apply_coefficients(k: &DMatrix<f64>, x: &ProductVector) -> ProductVector {
    let n = x.block_dim();
    let blocks = (0..k.nrows())
        .map(|i| {
            let mut acc = Vector::zeros(n);
            for (j, xj) in x.blocks.iter().enumerate() {
                let c = k[(i, j)];
                if c != 0.0 {
                    acc.axpy(c, xj);
                }
            }
            acc
        })
        .collect();
    ProductVector { blocks }
}

/// `R x`: each block is replaced by the weighted average of the others.
pub fn average_others(w: &Weights, x: &ProductVector) -> Result<ProductVector> {
    x.check_shape(w.len(), None)?;
    Ok(apply_coefficients(&coefficient_matrix(w), x))
}

/// `R* x`, with `(R* x)_i = Σ_{j≠i} (λ_i/μ_j) x_j`.
pub fn average_others_adjoint(w: &Weights, x: &ProductVector) -> Result<ProductVector> {
    x.check_shape(w.len(), None)?;
    Ok(apply_coefficients(&coefficient_matrix(w).transpose(), x))
}

fn mix_others_into(w: &Weights, k: usize, x: &ProductVector) -> Vector {
    let mu_k = w.mu()[k];
    let mut acc = Vector::zeros(x.block_dim());
    for (j, (xj, lj)) in x.blocks.iter().zip(w.lambda()).enumerate() {
        if j != k {
            acc.axpy(lj / mu_k, xj);
        }
    }
    acc
}

/// `R_k x`: block `k` becomes the weighted average of the others; the rest stay.
pub fn average_others_at(w: &Weights, k: usize, x: &ProductVector) -> Result<ProductVector> {
    x.check_shape(w.len(), None)?;
    if k >= w.len() {
        return Err(Error::InvalidArgument(format!("block index {k} out of range for m = {}", w.len())));
    }
    let mut out = x.clone();
    out.blocks[k] = mix_others_into(w, k, x);
    Ok(out)
}

/// `L x = Σ λ_i x_i`.
pub fn combine(w: &Weights, x: &ProductVector) -> Result<Vector> {
    x.check_shape(w.len(), None)?;
    let mut out = Vector::zeros(x.block_dim());
    for (xi, l) in x.blocks.iter().zip(w.lambda()) {
        out.axpy(*l, xi);
    }
    Ok(out)
}

/// The isometric part `N = −Id + (2/m)(s, …, s)` with `s = Σ x_i`, so that
/// `R = (1 − α) Id + α N` for `α = m/(2m − 2)`.
///
/// Only defined for equal weights and `m >= 3`.
pub fn isometry_part(w: &Weights, x: &ProductVector) -> Result<ProductVector> {
    let m = w.len();
    if m < 3 {
        return Err(Error::InvalidWeights(format!("isometric decomposition needs m >= 3, got {m}")));
    }
    if !w.is_equal() {
        return Err(Error::InvalidWeights("isometric decomposition needs equal weights".into()));
    }
    x.check_shape(m, None)?;
    let mut sum = Vector::zeros(x.block_dim());
    for xi in &x.blocks {
        sum.axpy(1.0, xi);
    }
    let c = 2.0 / m as f64;
    let blocks = x
        .blocks
        .iter()
        .map(|xi| {
            let mut b = xi.scaled(-1.0);
            b.axpy(c, &sum);
            b
        })
        .collect();
    Ok(ProductVector { blocks })
}

/// Averagedness constant of `R` under equal weights, `m/(2m − 2)`.
pub fn averaging_constant(m: usize) -> f64 {
    m as f64 / (2.0 * m as f64 - 2.0)
}

/// Averagedness constant of `J ∘ R` under equal weights, `2m/(3m − 2)`.
pub fn composition_averaging_constant(m: usize) -> f64 {
    2.0 * m as f64 / (3.0 * m as f64 - 2.0)
}

/// `‖R‖`, the largest singular value of the coefficient matrix.
///
/// Since `R` is `K ⊗ Id`, this is exact and independent of the block dimension.
pub fn averaging_norm(w: &Weights) -> f64 {
    coefficient_matrix(w).singular_values().max()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    fn pv(blocks: &[&[f64]]) -> ProductVector {
        ProductVector::new(blocks.iter().map(|b| v(b)).collect()).unwrap()
    }

    fn assert_close(a: &ProductVector, b: &ProductVector, tol: f64) {
        let d = a.distance(b);
        assert!(d <= tol, "distance {d:e} > {tol:e}: {a:?} vs {b:?}");
    }

    #[test]
    fn rejects_ragged_blocks() {
        assert!(ProductVector::new(vec![v(&[1.0]), v(&[1.0, 2.0])]).is_err());
        assert!(ProductVector::new(vec![]).is_err());
    }

    #[test]
    fn average_others_examples() {
        let w = Weights::equal(3).unwrap();
        let r = average_others(&w, &pv(&[&[1.0], &[2.0], &[3.0]])).unwrap();
        assert_close(&r, &pv(&[&[2.5], &[2.0], &[1.5]]), 1e-15);

        let w2 = Weights::new(vec![0.3, 0.7]).unwrap();
        let x = pv(&[&[1.0, 2.0], &[-3.0, 4.0]]);
        let r = average_others(&w2, &x).unwrap();
        assert_close(&r, &pv(&[&[-3.0, 4.0], &[1.0, 2.0]]), 1e-15);

        let w = Weights::new(vec![0.2, 0.5, 0.3]).unwrap();
        let d = ProductVector::diagonal(&v(&[1.5, -2.0]), 3);
        assert_close(&average_others(&w, &d).unwrap(), &d, 1e-14);

        assert!(average_others(&w, &pv(&[&[1.0], &[2.0]])).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let w = Weights::equal(4).unwrap();
        let x = pv(&[&[1.0, 0.0], &[2.0, 1.0], &[-1.0, 3.0], &[0.5, 0.5]]);
        assert_close(&average_others_adjoint(&w, &x).unwrap(), &average_others(&w, &x).unwrap(), 1e-15);

        // x_i = μ_i u with |u| = 1: block i of R* x is λ_i (m − 1) u, |R* x|² = 4 Σ λ_i² = 1.5
        let w = Weights::new(vec![0.5, 0.25, 0.25]).unwrap();
        let u = v(&[0.6, 0.8]);
        let x = ProductVector::new(w.mu().iter().map(|m| u.scaled(*m)).collect()).unwrap();
        let rs = average_others_adjoint(&w, &x).unwrap();
        for (i, l) in w.lambda().iter().enumerate() {
            assert!(rs.block(i).distance(&u.scaled(2.0 * l)) < 1e-15);
        }
        assert!((rs.norm_squared() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn resolve_blocks_examples() {
        let w = Weights::equal(3).unwrap();
        let id = OperatorModel::linear(vec![vec![1.0]]).unwrap();
        let p = ProductProblem::new(vec![id.clone(), id.clone(), id], w, 1).unwrap();
        let y = p.resolve_blocks(&pv(&[&[2.0], &[2.0], &[2.0]])).unwrap();
        // (1 + 1/μ) y = 2 with μ = 2/3
        assert_close(&y, &pv(&[&[0.8], &[0.8], &[0.8]]), 1e-15);

        let h = |b| OperatorModel::hyperplane(v(&[1.0, 0.0]), b).unwrap();
        let p = ProductProblem::new(vec![h(1.0), h(-1.0)], Weights::new(vec![0.1, 0.9]).unwrap(), 2).unwrap();
        let y = p.resolve_blocks(&pv(&[&[5.0, 2.0], &[5.0, 3.0]])).unwrap();
        assert_close(&y, &pv(&[&[1.0, 2.0], &[-1.0, 3.0]]), 0.0);
    }

    #[test]
    fn sweep_with_zero_models() {
        let m = 4;
        let zero = ProductProblem::new(vec![OperatorModel::Zero; m], Weights::equal(m).unwrap(), 2).unwrap();
        let u = v(&[0.6, -0.8]);
        let mut blocks = vec![u.clone(); m];
        blocks[0] = Vector::zeros(2);
        let x = ProductVector::new(blocks).unwrap();
        let t = zero.sweep(&x).unwrap();
        assert_close(&t, &ProductVector::diagonal(&u, m), 1e-15);

        let d = ProductVector::diagonal(&v(&[3.0, 1.0]), m);
        assert_close(&zero.sweep(&d).unwrap(), &d, 1e-14);
    }

    #[test]
    fn sweep_two_sets_closed_form() {
        // T(x1, x2) = (J_{λ2⁻¹A1} x2, J_{λ1⁻¹A2} J_{λ2⁻¹A1} x2)
        let w = Weights::new(vec![0.25, 0.75]).unwrap();
        let a1 = OperatorModel::linear(vec![vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let a2 = OperatorModel::translation(v(&[1.0, -1.0]));
        let p = ProductProblem::new(vec![a1.clone(), a2.clone()], w, 2).unwrap();
        let x = pv(&[&[9.0, 9.0], &[1.0, 2.0]]);
        let t = p.sweep(&x).unwrap();
        let first = resolve(&a1, 1.0 / 0.75, x.block(1)).unwrap();
        let second = resolve(&a2, 1.0 / 0.25, &first).unwrap();
        assert_close(&t, &ProductVector::new(vec![first, second]).unwrap(), 1e-15);
    }

    #[test]
    fn combine_and_split_examples() {
        let w = Weights::equal(3).unwrap();
        assert!((combine(&w, &pv(&[&[1.0], &[2.0], &[3.0]])).unwrap()[0] - 2.0).abs() < 1e-15);
        let w = Weights::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(combine(&w, &pv(&[&[0.0], &[4.0], &[8.0]])).unwrap(), v(&[3.0]));
        let c = v(&[1.25, -7.0]);
        assert!(combine(&w, &ProductVector::diagonal(&c, 3)).unwrap().distance(&c) < 1e-15);

        let h = |b| OperatorModel::hyperplane(v(&[1.0]), b).unwrap();
        let p = ProductProblem::new(vec![h(1.0), h(2.0)], Weights::equal(2).unwrap(), 1).unwrap();
        let s = p.split(&v(&[1.5])).unwrap();
        assert_eq!(s, pv(&[&[1.0], &[2.0]]));
        assert_eq!(p.combine(&s).unwrap(), v(&[1.5]));
        assert!(p.consensus_residual(&s).unwrap() < 1e-15);

        let zero = ProductProblem::new(vec![OperatorModel::Zero; 3], Weights::equal(3).unwrap(), 2).unwrap();
        assert_eq!(zero.split(&c).unwrap(), ProductVector::diagonal(&c, 3));
    }

    #[test]
    fn residual_positive_off_solution_set() {
        let h = |a: &[f64], b| OperatorModel::hyperplane(v(a), b).unwrap();
        let p = ProductProblem::new(
            vec![h(&[1.0, 0.0], 1.0), h(&[0.0, 1.0], 2.0), h(&[1.0, 1.0], 0.0)],
            Weights::equal(3).unwrap(),
            2,
        )
        .unwrap();
        let x = pv(&[&[0.3, 0.1], &[-0.4, 2.0], &[5.0, 1.0]]);
        assert!(p.consensus_residual(&x).unwrap() > 0.1);

        let zero = ProductProblem::new(vec![OperatorModel::Zero; 3], Weights::equal(3).unwrap(), 2).unwrap();
        let d = ProductVector::diagonal(&v(&[2.0, 3.0]), 3);
        assert!(zero.consensus_residual(&d).unwrap() < 1e-14);
    }

    #[test]
    fn isometry_part_examples() {
        let w = Weights::equal(3).unwrap();
        let n = isometry_part(&w, &pv(&[&[1.0], &[0.0], &[0.0]])).unwrap();
        assert_close(&n, &pv(&[&[-1.0 / 3.0], &[2.0 / 3.0], &[2.0 / 3.0]]), 1e-15);
        assert!((n.norm() - 1.0).abs() < 1e-15);

        let d = ProductVector::diagonal(&v(&[4.0, -1.0]), 5);
        let w5 = Weights::equal(5).unwrap();
        assert_close(&isometry_part(&w5, &d).unwrap(), &d, 1e-14);

        assert!(isometry_part(&Weights::equal(2).unwrap(), &pv(&[&[1.0], &[2.0]])).is_err());
        let uneq = Weights::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert!(isometry_part(&uneq, &pv(&[&[1.0], &[2.0], &[3.0]])).is_err());
    }

    #[test]
    fn norm_examples() {
        for m in [3, 5, 55] {
            assert!((averaging_norm(&Weights::equal(m).unwrap()) - 1.0).abs() < 1e-12);
        }
        let w2 = Weights::new(vec![0.1, 0.9]).unwrap();
        assert!((averaging_norm(&w2) - 1.0).abs() < 1e-12);
        assert!(averaging_norm(&Weights::new(vec![0.5, 0.25, 0.25]).unwrap()) > 1.0);
    }

    #[test]
    fn json_shapes() {
        let x = pv(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(serde_json::to_string(&x).unwrap(), "[[1.0,2.0],[3.0,4.0]]");
        assert!(serde_json::from_str::<ProductVector>("[[1.0],[1.0,2.0]]").is_err());

        let p: ProductProblem = serde_json::from_str(
            r#"{"weights":[0.5,0.5],"models":[{"variant":"Zero"},
                {"variant":"NormalConeHyperplane","a":[1,0],"b":1}],"dim":2}"#,
        )
        .unwrap();
        assert_eq!(p.num_sets(), 2);
        let back: ProductProblem = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<ProductProblem>(
            r#"{"weights":[0.5,0.5],"models":[{"variant":"Zero"},
                {"variant":"NormalConeHyperplane","a":[1,0],"b":1}],"dim":3}"#,
        )
        .is_err());
    }
}
