//! Hyperplane systems `<a_i, x> = b_i` and their least-squares solutions.
//!
//! With unit-norm rows, `x` is a fixed point of `Σ λ_i P_i` exactly when it
//! solves the weighted normal equation `Aᵀ Λ A x = Aᵀ Λ b`. Rescaling a row
//! leaves the hyperplane (and so the fixed points) alone but changes the least
//! squares problem, which is why the weighted solve insists on normalized rows.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{averaged_resolvent, resolve, OperatorModel, Weights};
use crate::vector::Vector;

const UNIT_TOL: f64 = 1e-12;
/// Absolute threshold separating "zero" from "nonzero" residuals.
pub const EQUIVALENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemRepr", into = "SystemRepr")]
pub struct HyperplaneSystem {
    rows: Vec<Vector>,
    rhs: Vec<f64>,
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct SystemRepr {
    rows: Vec<Vector>,
    rhs: Vec<f64>,
}

impl TryFrom<SystemRepr> for HyperplaneSystem {
    type Error = Error;

    fn try_from(r: SystemRepr) -> Result<Self> {
        HyperplaneSystem::new(r.rows, r.rhs)
    }
}

impl From<HyperplaneSystem> for SystemRepr {
    fn from(s: HyperplaneSystem) -> Self {
        SystemRepr { rows: s.rows, rhs: s.rhs }
    }
}

impl HyperplaneSystem {
    pub fn new(rows: Vec<Vector>, rhs: Vec<f64>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidArgument("system needs at least one row".into()))?;
        if rows.len() != rhs.len() {
            return Err(Error::LengthMismatch { expected: rows.len(), found: rhs.len() });
        }
        let n = first.dim();
        for (i, row) in rows.iter().enumerate() {
            row.check_dim(n)?;
            if row.norm_squared() == 0.0 {
                return Err(Error::ZeroRow(i));
            }
        }
        if rhs.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("right-hand side has non-finite entries".into()));
        }
        let normalized = rows.iter().all(|r| (r.norm() - 1.0).abs() <= UNIT_TOL);
        Ok(HyperplaneSystem { rows, rhs, normalized })
    }

    pub fn rows(&self) -> &[Vector] {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].dim()
    }

    /// One normal-cone model per hyperplane; their resolvents are the projections `P_i`.
    pub fn to_models(&self) -> Vec<OperatorModel> {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| OperatorModel::Hyperplane { a: a.clone(), b: *b })
            .collect()
    }

    /// Parses one hyperplane per line: `a_1 … a_n b`, whitespace separated.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut values = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {tok:?}: {e}", lineno + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() < 2 {
                return Err(Error::Parse(format!("line {}: need at least one coefficient and a rhs", lineno + 1)));
            }
            rhs.push(values.pop().expect("len >= 2"));
            rows.push(Vector::new(values)?);
        }
        HyperplaneSystem::new(rows, rhs)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (row, b) in self.rows.iter().zip(&self.rhs) {
            for a in row.as_slice() {
                write!(out, "{a} ").expect("writing to String");
            }
            writeln!(out, "{b}").expect("writing to String");
        }
        out
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_rows(), self.dim(), |i, j| self.rows[i][j])
    }

    fn require_normalized(&self) -> Result<()> {
        match self.rows.iter().position(|r| (r.norm() - 1.0).abs() > UNIT_TOL) {
            Some(i) => Err(Error::NotNormalized(i)),
            None => Ok(()),
        }
    }

    fn check_weights(&self, w: &Weights) -> Result<()> {
        if w.len() != self.num_rows() {
            return Err(Error::LengthMismatch { expected: self.num_rows(), found: w.len() });
        }
        Ok(())
    }
}

/// Rescales every `(a_i, b_i)` by `1/‖a_i‖`; the hyperplanes themselves do not move.
/// Rows already of unit norm (within 1e-12) are kept bit for bit.
pub fn normalize_rows(sys: &HyperplaneSystem) -> Result<HyperplaneSystem> {
    let mut rows = Vec::with_capacity(sys.num_rows());
    let mut rhs = Vec::with_capacity(sys.num_rows());
    for (i, (a, b)) in sys.rows.iter().zip(&sys.rhs).enumerate() {
        let norm = a.norm();
        if norm == 0.0 {
            return Err(Error::ZeroRow(i));
        }
        if (norm - 1.0).abs() <= UNIT_TOL {
            rows.push(a.clone());
            rhs.push(*b);
            continue;
        }
        rows.push(a.scaled(1.0 / norm));
        rhs.push(b / norm);
    }
    HyperplaneSystem::new(rows, rhs)
}

/// Minimum-norm least-squares solution of `A x ≈ b` via the SVD.
fn min_norm_least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Result<Vector> {
    let (m, n) = a.shape();
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * m.max(n) as f64 * f64::EPSILON;
    let x = svd.solve(&b, eps).map_err(|e| Error::SolveFailed(e.to_string()))?;
    Vector::new(x.iter().copied().collect())
}

/// A solution of `AᵀA x = Aᵀ b`; the minimum-norm one when there are many.
pub fn normal_equation_solve(sys: &HyperplaneSystem) -> Result<Vector> {
    min_norm_least_squares(sys.matrix(), DVector::from_column_slice(&sys.rhs))
}

/// Minimum-norm solution of `(DA)ᵀ(DA) x = (DA)ᵀ D b` with `D = diag(√λ_i)`,
/// i.e. a fixed point of `Σ λ_i P_i`. Rows must be unit norm.
pub fn weighted_normal_equation_solve(sys: &HyperplaneSystem, w: &Weights) -> Result<Vector> {
    sys.require_normalized()?;
    sys.check_weights(w)?;
    let mut a = sys.matrix();
    let mut b = DVector::from_column_slice(&sys.rhs);
    for (i, l) in w.lambda().iter().enumerate() {
        let s = l.sqrt();
        a.row_mut(i).scale_mut(s);
        b[i] *= s;
    }
    min_norm_least_squares(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    /// `‖x − Σ λ_i P_i x‖`, through the projections.
    pub fp_residual: f64,
    /// `‖(DA)ᵀ(DA) x − (DA)ᵀ D b‖`, through the matrix.
    pub ne_residual: f64,
    /// Both residuals fall on the same side of [`EQUIVALENCE_TOL`].
    pub agree: bool,
}

/// Evaluates both sides of the fixed-point / weighted-normal-equation equivalence at `x`.
pub fn verify_fixed_point_equivalence(
    sys: &HyperplaneSystem,
    w: &Weights,
    x: &Vector,
) -> Result<EquivalenceReport> {
    sys.require_normalized()?;
    sys.check_weights(w)?;
    x.check_dim(sys.dim())?;

    let fp = averaged_resolvent(&sys.to_models(), w, x)?;
    let fp_residual = x.distance(&fp);

    let a = sys.matrix();
    let lam = DVector::from_column_slice(w.lambda());
    let xv = DVector::from_column_slice(x.as_slice());
    let bv = DVector::from_column_slice(&sys.rhs);
    // (DA)ᵀ(DA) = Aᵀ Λ A and (DA)ᵀ D b = Aᵀ Λ b
    let weighted = DMatrix::from_diagonal(&lam);
    let gram = a.transpose() * &weighted * &a;
    let rhs = a.transpose() * &weighted * bv;
    let ne_residual = (gram * xv - rhs).norm();

    let agree = (fp_residual <= EQUIVALENCE_TOL) == (ne_residual <= EQUIVALENCE_TOL);
    Ok(EquivalenceReport { fp_residual, ne_residual, agree })
}

/// `Σ ‖x − P_i x‖²`, which equals `‖Ax − b‖²` for unit-norm rows.
pub fn projection_residual_sq(sys: &HyperplaneSystem, x: &Vector) -> Result<f64> {
    let mut total = 0.0;
    for model in sys.to_models() {
        total += x.sub(&resolve(&model, 1.0, x)?).norm_squared();
    }
    Ok(total)
}

/// `‖Ax − b‖²`
pub fn system_residual_sq(sys: &HyperplaneSystem, x: &Vector) -> Result<f64> {
    x.check_dim(sys.dim())?;
    Ok(sys.rows.iter().zip(&sys.rhs).map(|(a, b)| (a.dot(x) - b).powi(2)).sum())
}
