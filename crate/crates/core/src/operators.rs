//! Maximally monotone operators with closed-form resolvents.
//!
//! Every model here can evaluate `J_{γA} = (Id + γA)^{-1}` exactly, which is
//! all the iterations downstream ever need. The averaged resolvent
//! `Σ λ_i J_{A_i}` is evaluated directly; the operator it is the resolvent of
//! is never formed.

use std::sync::Mutex;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::Vector;

/// Slack allowed in the firm nonexpansiveness inequality.
pub const FIRM_SLACK: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Convex coefficients `λ_i ∈ (0,1)` summing to one, with complements `μ_i = 1 − λ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Weights {
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

impl Weights {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() < 2 {
            return Err(Error::InvalidWeights(format!(
                "need at least 2 weights, got {}",
                lambda.len()
            )));
        }
        for (i, &l) in lambda.iter().enumerate() {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::InvalidWeights(format!("weight {i} = {l} is not in (0,1)")));
            }
        }
        let sum: f64 = lambda.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        let mu = lambda.iter().map(|l| 1.0 - l).collect();
        Ok(Weights { lambda, mu })
    }

    /// `λ_i = 1/m` for every `i`.
    pub fn equal(m: usize) -> Result<Self> {
        Weights::new(vec![1.0 / m as f64; m])
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `m Σ λ_i²`, which is at least one and equals one exactly for equal weights.
    pub fn concentration(&self) -> f64 {
        self.len() as f64 * self.lambda.iter().map(|l| l * l).sum::<f64>()
    }

    /// True when every weight is `1/m` to rounding.
    pub fn is_equal(&self) -> bool {
        let target = 1.0 / self.len() as f64;
        self.lambda.iter().all(|l| (l - target).abs() <= 1e-14)
    }
}

impl TryFrom<Vec<f64>> for Weights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Weights::new(v)
    }
}

impl From<Weights> for Vec<f64> {
    fn from(w: Weights) -> Self {
        w.lambda
    }
}

/// A symmetric positive-semidefinite matrix, checked at construction.
///
/// Keeps the Cholesky factor of `I + γM` for the last `γ` it was asked about.
pub struct PsdMatrix {
    matrix: DMatrix<f64>,
    cache: Mutex<Option<(u64, Cholesky<f64, Dyn>)>>,
}

impl PsdMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidModel("matrix must be nonempty".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::InvalidModel(format!("row {i} has wrong length for {n}x{n} matrix")));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("matrix has non-finite entries".into()));
        }
        let matrix = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidModel(format!("matrix is not symmetric (max |M - M^T| = {asym:e})")));
        }
        let min_eig = SymmetricEigen::new(matrix.clone()).eigenvalues.min();
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidModel(format!("matrix is not PSD (smallest eigenvalue {min_eig:e})")));
        }
        Ok(PsdMatrix { matrix, cache: Mutex::new(None) })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Solves `(I + γM) y = x`.
    fn solve_shifted(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        let rhs = DVector::from_column_slice(x.as_slice());
        let key = gamma.to_bits();
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        let hit = matches!(cache.as_ref(), Some((k, _)) if *k == key);
        if !hit {
            let n = self.dim();
            let shifted = DMatrix::identity(n, n) + &self.matrix * gamma;
            let chol = Cholesky::new(shifted).ok_or_else(|| {
                Error::SolveFailed(format!("I + {gamma}M is not positive definite"))
            })?;
            *cache = Some((key, chol));
        }
        let (_, chol) = cache.as_ref().expect("cache filled above");
        let y = chol.solve(&rhs);
        Ok(Vector::from_raw(y.iter().copied().collect()))
    }
}

impl Clone for PsdMatrix {
    fn clone(&self) -> Self {
        PsdMatrix { matrix: self.matrix.clone(), cache: Mutex::new(None) }
    }
}

impl PartialEq for PsdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl std::fmt::Debug for PsdMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PsdMatrix").field("matrix", &self.matrix).finish()
    }
}

/// A maximally monotone operator with a closed-form resolvent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub enum OperatorModel {
    /// `A ≡ 0`.
    Zero,
    /// The constant operator `A x = {c}`.
    Translation { c: Vector },
    /// Normal cone of `{x : <a,x> = b}`.
    Hyperplane { a: Vector, b: f64 },
    /// Normal cone of `{x : <a,x> <= b}`.
    Halfspace { a: Vector, b: f64 },
    /// Normal cone of the box `lo <= x <= hi`.
    Box { lo: Vector, hi: Vector },
    /// `A x = M x` with `M` symmetric PSD.
    Linear(PsdMatrix),
}

impl OperatorModel {
    pub fn translation(c: Vector) -> Self {
        OperatorModel::Translation { c }
    }

    pub fn hyperplane(a: Vector, b: f64) -> Result<Self> {
        check_normal(&a, b)?;
        Ok(OperatorModel::Hyperplane { a, b })
    }

    pub fn halfspace(a: Vector, b: f64) -> Result<Self> {
        check_normal(&a, b)?;
        Ok(OperatorModel::Halfspace { a, b })
    }

    pub fn box_set(lo: Vector, hi: Vector) -> Result<Self> {
        lo.check_dim(hi.dim())?;
        if let Some(i) = lo.as_slice().iter().zip(hi.as_slice()).position(|(l, h)| l > h) {
            return Err(Error::InvalidModel(format!("box has lo > hi in coordinate {i}")));
        }
        Ok(OperatorModel::Box { lo, hi })
    }

    pub fn linear(rows: Vec<Vec<f64>>) -> Result<Self> {
        Ok(OperatorModel::Linear(PsdMatrix::new(rows)?))
    }

    /// Dimension the model is tied to; `None` for `Zero`, which fits any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            OperatorModel::Zero => None,
            OperatorModel::Translation { c } => Some(c.dim()),
            OperatorModel::Hyperplane { a, .. } | OperatorModel::Halfspace { a, .. } => Some(a.dim()),
            OperatorModel::Box { lo, .. } => Some(lo.dim()),
            OperatorModel::Linear(m) => Some(m.dim()),
        }
    }

    /// Whether this is the normal cone of a closed convex set, i.e. its
    /// resolvent is a projection.
    pub fn is_normal_cone(&self) -> bool {
        matches!(
            self,
            OperatorModel::Hyperplane { .. } | OperatorModel::Halfspace { .. } | OperatorModel::Box { .. }
        )
    }

    fn check_input(&self, x: &Vector) -> Result<()> {
        match self.dim() {
            Some(n) => x.check_dim(n),
            None => Ok(()),
        }
    }
}

fn check_normal(a: &Vector, b: f64) -> Result<()> {
    if a.norm_squared() == 0.0 {
        return Err(Error::InvalidModel("normal vector must be nonzero".into()));
    }
    if !b.is_finite() {
        return Err(Error::InvalidModel("offset must be finite".into()));
    }
    Ok(())
}

/// Serialized shape: `{"variant": "...", fields...}`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "variant")]
enum ModelRepr {
    Zero,
    Translation { c: Vector },
    NormalConeHyperplane { a: Vector, b: f64 },
    NormalConeHalfspace { a: Vector, b: f64 },
    NormalConeBox { lo: Vector, hi: Vector },
    #[serde(rename = "LinearPSD")]
    LinearPsd {
        #[serde(rename = "M")]
        m: Vec<Vec<f64>>,
    },
}

impl TryFrom<ModelRepr> for OperatorModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        match r {
            ModelRepr::Zero => Ok(OperatorModel::Zero),
            ModelRepr::Translation { c } => Ok(OperatorModel::translation(c)),
            ModelRepr::NormalConeHyperplane { a, b } => OperatorModel::hyperplane(a, b),
            ModelRepr::NormalConeHalfspace { a, b } => OperatorModel::halfspace(a, b),
            ModelRepr::NormalConeBox { lo, hi } => OperatorModel::box_set(lo, hi),
            ModelRepr::LinearPsd { m } => OperatorModel::linear(m),
        }
    }
}

impl From<OperatorModel> for ModelRepr {
    fn from(m: OperatorModel) -> Self {
        match m {
            OperatorModel::Zero => ModelRepr::Zero,
            OperatorModel::Translation { c } => ModelRepr::Translation { c },
            OperatorModel::Hyperplane { a, b } => ModelRepr::NormalConeHyperplane { a, b },
            OperatorModel::Halfspace { a, b } => ModelRepr::NormalConeHalfspace { a, b },
            OperatorModel::Box { lo, hi } => ModelRepr::NormalConeBox { lo, hi },
            OperatorModel::Linear(p) => ModelRepr::LinearPsd { m: p.rows() },
        }
    }
}

/// Evaluates `J_{γA}(x)`, the unique `y` with `x ∈ y + γA(y)`.
///
/// Normal-cone models return the metric projection regardless of `γ`.
pub fn resolve(model: &OperatorModel, gamma: f64, x: &Vector) -> Result<Vector> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::NonPositiveScale(gamma));
    }
    model.check_input(x)?;
    let y = match model {
        OperatorModel::Zero => x.clone(),
        OperatorModel::Translation { c } => {
            let mut y = x.clone();
            y.axpy(-gamma, c);
            y
        }
        OperatorModel::Hyperplane { a, b } => project_hyperplane(a, *b, x),
        OperatorModel::Halfspace { a, b } => {
            if a.dot(x) <= *b {
                x.clone()
            } else {
                project_hyperplane(a, *b, x)
            }
        }
        OperatorModel::Box { lo, hi } => Vector::from_raw(
            x.as_slice()
                .iter()
                .zip(lo.as_slice().iter().zip(hi.as_slice()))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect(),
        ),
        OperatorModel::Linear(m) => m.solve_shifted(gamma, x)?,
    };
    Ok(y)
}

fn project_hyperplane(a: &Vector, b: f64, x: &Vector) -> Vector {
    let mut y = x.clone();
    y.axpy((b - a.dot(x)) / a.norm_squared(), a);
    y
}

/// `J_A(x) = Σ_i λ_i J_{A_i}(x)`.
pub fn averaged_resolvent(models: &[OperatorModel], w: &Weights, x: &Vector) -> Result<Vector> {
    if models.len() != w.len() {
        return Err(Error::LengthMismatch { expected: w.len(), found: models.len() });
    }
    let mut out = Vector::zeros(x.dim());
    for (model, &l) in models.iter().zip(w.lambda()) {
        model.check_input(x)?;
        match model {
            // the common cases accumulate in place
            OperatorModel::Zero => out.axpy(l, x),
            OperatorModel::Hyperplane { a, b } => {
                out.axpy(l, x);
                out.axpy(l * (b - a.dot(x)) / a.norm_squared(), a);
            }
            OperatorModel::Halfspace { a, b } => {
                out.axpy(l, x);
                let ax = a.dot(x);
                if ax > *b {
                    out.axpy(l * (b - ax) / a.norm_squared(), a);
                }
            }
            _ => out.axpy(l, &resolve(model, 1.0, x)?),
        }
    }
    Ok(out)
}

/// Outcome of sampling the inequality `‖Tx − Ty‖² ≤ <x − y, Tx − Ty>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirmReport {
    pub violations: usize,
    /// Smallest observed `<x − y, Tx − Ty> − ‖Tx − Ty‖²`.
    pub worst_margin: f64,
}

/// Samples firm nonexpansiveness of an arbitrary map on the given pairs.
pub fn check_firm_nonexpansive_map<F>(map: F, pairs: &[(Vector, Vector)]) -> Result<FirmReport>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("need at least one pair".into()));
    }
    let mut report = FirmReport { violations: 0, worst_margin: f64::INFINITY };
    for (x, y) in pairs {
        x.check_dim(y.dim())?;
        let tx = map(x)?;
        let ty = map(y)?;
        let dt = tx.sub(&ty);
        let margin = x.sub(y).dot(&dt) - dt.norm_squared();
        if margin < -FIRM_SLACK {
            report.violations += 1;
        }
        report.worst_margin = report.worst_margin.min(margin);
    }
    Ok(report)
}

/// Samples firm nonexpansiveness of `J_{γA}`.
pub fn check_firm_nonexpansive(
    model: &OperatorModel,
    gamma: f64,
    pairs: &[(Vector, Vector)],
) -> Result<FirmReport> {
    check_firm_nonexpansive_map(|x| resolve(model, gamma, x), pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn weights_validation() {
        assert!(Weights::new(vec![1.0]).is_err());
        assert!(Weights::new(vec![0.0, 1.0]).is_err());
        assert!(Weights::new(vec![0.5, 0.6]).is_err());
        let w = Weights::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(w.mu(), &[0.75, 0.25]);
        assert!(Weights::equal(55).unwrap().is_equal());
        assert!(!w.is_equal());
    }

    #[test]
    fn model_validation() {
        assert!(OperatorModel::hyperplane(v(&[0.0, 0.0]), 1.0).is_err());
        assert!(OperatorModel::box_set(v(&[1.0]), v(&[0.0])).is_err());
        assert!(OperatorModel::linear(vec![vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
        assert!(OperatorModel::linear(vec![vec![-1.0, 0.0], vec![0.0, 1.0]]).is_err());
        // tiny negative eigenvalue within tolerance is accepted
        assert!(OperatorModel::linear(vec![vec![-1e-11]]).is_ok());
    }

    #[test]
    fn resolve_examples() {
        let h = OperatorModel::hyperplane(v(&[1.0, 0.0]), 1.0).unwrap();
        assert_eq!(resolve(&h, 7.0, &v(&[3.0, 4.0])).unwrap(), v(&[1.0, 4.0]));

        let id = OperatorModel::linear(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let y = resolve(&id, 1.0, &v(&[2.0, 4.0])).unwrap();
        assert!(y.distance(&v(&[1.0, 2.0])) < 1e-15);

        let t = OperatorModel::translation(v(&[1.0]));
        assert_eq!(resolve(&t, 2.0, &v(&[5.0])).unwrap(), v(&[3.0]));
    }

    #[test]
    fn hyperplane_projection_matches_formula() {
        // oracle: x + (b - <a,x>) a / |a|^2 with a = (3,4), b = 5, x = 0
        let h = OperatorModel::hyperplane(v(&[3.0, 4.0]), 5.0).unwrap();
        let y = resolve(&h, 1.0, &v(&[0.0, 0.0])).unwrap();
        assert!((y[0] - 0.6).abs() < 1e-15 && (y[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn halfspace_and_box() {
        let hs = OperatorModel::halfspace(v(&[1.0, 1.0]), 0.0).unwrap();
        assert_eq!(resolve(&hs, 1.0, &v(&[-1.0, -1.0])).unwrap(), v(&[-1.0, -1.0]));
        let y = resolve(&hs, 1.0, &v(&[1.0, 1.0])).unwrap();
        assert!(y.norm() < 1e-15);

        let bx = OperatorModel::box_set(v(&[0.0, 0.0]), v(&[1.0, 2.0])).unwrap();
        assert_eq!(resolve(&bx, 3.0, &v(&[-1.0, 5.0])).unwrap(), v(&[0.0, 2.0]));
    }

    #[test]
    fn resolve_errors() {
        let h = OperatorModel::hyperplane(v(&[1.0, 0.0]), 1.0).unwrap();
        assert_eq!(resolve(&h, 0.0, &v(&[1.0, 1.0])), Err(Error::NonPositiveScale(0.0)));
        assert!(resolve(&h, -1.0, &v(&[1.0, 1.0])).is_err());
        assert!(matches!(
            resolve(&h, 1.0, &v(&[1.0])),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
        // within PSD tolerance but I + γM loses definiteness for huge γ
        let nearly = OperatorModel::linear(vec![vec![-1e-11]]).unwrap();
        assert!(matches!(resolve(&nearly, 1e12, &v(&[1.0])), Err(Error::SolveFailed(_))));
    }

    #[test]
    fn linear_cache_tracks_gamma() {
        let m = OperatorModel::linear(vec![vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let x = v(&[3.0, 3.0]);
        let a = resolve(&m, 0.5, &x).unwrap();
        let b = resolve(&m, 2.0, &x).unwrap();
        let c = resolve(&m, 0.5, &x).unwrap();
        assert!((a[0] - 2.0).abs() < 1e-15 && (a[1] - 1.5).abs() < 1e-15);
        assert!((b[0] - 1.0).abs() < 1e-15 && (b[1] - 0.6).abs() < 1e-15);
        assert_eq!(a, c);
    }

    #[test]
    fn averaged_resolvent_examples() {
        let models = [
            OperatorModel::hyperplane(v(&[1.0]), 1.0).unwrap(),
            OperatorModel::hyperplane(v(&[1.0]), 2.0).unwrap(),
        ];
        let half = Weights::new(vec![0.5, 0.5]).unwrap();
        let y = averaged_resolvent(&models, &half, &v(&[1.5])).unwrap();
        assert!((y[0] - 1.5).abs() < 1e-15);

        let third = Weights::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let y = averaged_resolvent(&models, &third, &v(&[5.0 / 3.0])).unwrap();
        assert!((y[0] - 5.0 / 3.0).abs() < 1e-15);

        let zeros = [OperatorModel::Zero, OperatorModel::Zero, OperatorModel::Zero];
        let w = Weights::new(vec![0.2, 0.3, 0.5]).unwrap();
        let x = v(&[1.0, -2.0, 3.5]);
        let y = averaged_resolvent(&zeros, &w, &x).unwrap();
        assert!(y.distance(&x) < 1e-15);

        assert!(averaged_resolvent(&models, &w, &v(&[1.0])).is_err());
    }

    #[test]
    fn identical_pair_has_zero_margin() {
        let m = OperatorModel::linear(vec![vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let x = v(&[0.3, -0.7]);
        let r = check_firm_nonexpansive(&m, 0.5, &[(x.clone(), x)]).unwrap();
        assert_eq!(r.violations, 0);
        assert_eq!(r.worst_margin, 0.0);
        assert!(check_firm_nonexpansive(&m, 0.5, &[]).is_err());
    }

    #[test]
    fn json_shape() {
        let h = OperatorModel::hyperplane(v(&[1.0, 0.0]), 2.0).unwrap();
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(s, r#"{"variant":"NormalConeHyperplane","a":[1.0,0.0],"b":2.0}"#);
        let back: OperatorModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);

        let lin: OperatorModel =
            serde_json::from_str(r#"{"variant":"LinearPSD","M":[[2,0],[0,1]]}"#).unwrap();
        assert_eq!(lin.dim(), Some(2));
        let zero: OperatorModel = serde_json::from_str(r#"{"variant":"Zero"}"#).unwrap();
        assert_eq!(zero, OperatorModel::Zero);

        assert!(serde_json::from_str::<OperatorModel>(
            r#"{"variant":"NormalConeHyperplane","a":[0,0],"b":1}"#
        )
        .is_err());
        assert!(serde_json::from_str::<OperatorModel>(r#"{"variant":"LinearPSD","M":[[1,1],[0,1]]}"#).is_err());
    }
}
