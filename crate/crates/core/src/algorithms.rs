//! Fixed-point drivers for the three iterations
//!
//! * `J_A`: plain iteration of the averaged resolvent on `X`.
//! * `J ∘ R`: the parallel product-space iteration, averaged (hence
//!   convergent when a solution exists) for equal weights and `m >= 3`.
//! * `T`: the sequential sweep. No convergence theory backs it; runs are
//!   tagged [`TraceTag::Heuristic`].
//!
//! Every run records one [`Record`] per iterate and ends in exactly one
//! [`Outcome`]. A run that reaches the divergence threshold stops there, which
//! is how the "no fixed point, norms blow up" branch shows up in finite
//! precision.

use std::cell::RefCell;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::operators::{averaged_resolvent, OperatorModel, Weights};
use crate::product_space::{combine, ProductProblem, ProductVector};
use crate::vector::{Metric, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub max_iters: usize,
    /// Converged once `‖x_{n+1} − x_n‖ <= step_tol`.
    pub step_tol: f64,
    /// Diverged once `‖x_n‖ >= divergence_threshold`.
    pub divergence_threshold: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule { max_iters: 10_000, step_tol: 1e-10, divergence_threshold: 1e12 }
    }
}

impl StoppingRule {
    pub fn new(max_iters: usize, step_tol: f64, divergence_threshold: f64) -> Result<Self> {
        let rule = StoppingRule { max_iters, step_tol, divergence_threshold };
        rule.validate()?;
        Ok(rule)
    }

    /// Runs exactly `iters` steps unless an iterate stops moving entirely.
    pub fn fixed(iters: usize) -> Self {
        StoppingRule { max_iters: iters, step_tol: 0.0, divergence_threshold: f64::INFINITY }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidRule("max_iters must be >= 1".into()));
        }
        if self.step_tol.is_nan() || self.step_tol < 0.0 {
            return Err(Error::InvalidRule(format!("step_tol must be >= 0, got {}", self.step_tol)));
        }
        if self.divergence_threshold.is_nan() || self.divergence_threshold <= 0.0 {
            return Err(Error::InvalidRule(format!(
                "divergence_threshold must be > 0, got {}",
                self.divergence_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    MaxIters,
    Diverged,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Converged => "Converged",
            Outcome::MaxIters => "MaxIters",
            Outcome::Diverged => "Diverged",
        })
    }
}

/// Caveats attached to a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceTag {
    /// Sequential sweep; no convergence guarantee.
    Heuristic,
    /// Product iteration with unequal weights, where `R` need not be nonexpansive.
    OutsideProvenTheory,
    /// Product iteration with two sets, where `R` is a swap and may 2-cycle.
    TwoSetOverride,
}

impl fmt::Display for TraceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceTag::Heuristic => "heuristic: no convergence guarantee",
            TraceTag::OutsideProvenTheory => "outside proven theory: unequal weights",
            TraceTag::TwoSetOverride => "two-set override: iteration may cycle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub iter: usize,
    /// `‖x_n − x_{n−1}‖`, zero for the starting point.
    pub step_norm: f64,
    pub iterate_norm: f64,
    /// Relative fixed-point error of the (projected) iterate in dB. `NaN` past
    /// the start when the starting point was already a fixed point of `J_A`.
    pub db_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace<P> {
    pub records: Vec<Record>,
    pub outcome: Outcome,
    pub final_point: P,
    pub tags: Vec<TraceTag>,
    /// Every iterate, starting with `x_0`, when requested.
    pub iterates: Option<Vec<P>>,
}

impl<P> IterationTrace<P> {
    /// Number of steps taken.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn db_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.db_error).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,step_norm,iterate_norm,db_error")?;
        for r in &self.records {
            writeln!(out, "{},{},{},{}", r.iter, r.step_norm, r.iterate_norm, r.db_error)?;
        }
        for tag in &self.tags {
            writeln!(out, "# tag={tag}")?;
        }
        writeln!(out, "# outcome={}", self.outcome)
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// A product-space run plus its image `Σ λ_i x_{n,i}` back in `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductRun {
    pub trace: IterationTrace<ProductVector>,
    /// `projected[n] = Σ λ_i x_{n,i}`, one entry per record.
    pub projected: Vec<Vector>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProductOptions {
    /// Permit `m = 2` in the parallel iteration.
    pub allow_two_sets: bool,
    pub keep_iterates: bool,
}

/// `‖J_A x − x‖²`
fn fixed_point_gap(models: &[OperatorModel], w: &Weights, x: &Vector) -> Result<f64> {
    let jx = averaged_resolvent(models, w, x)?;
    Ok(jx.sub(x).norm_squared())
}

/// `10 log10(‖J_A x_n − x_n‖² / ‖J_A x_0 − x_0‖²)`
pub fn relative_error_db(models: &[OperatorModel], w: &Weights, x0: &Vector, xn: &Vector) -> Result<f64> {
    let base = fixed_point_gap(models, w, x0)?;
    if base == 0.0 {
        return Err(Error::ZeroInitialResidual);
    }
    Ok(db_from_gaps(fixed_point_gap(models, w, xn)?, base))
}

fn db_from_gaps(gap: f64, base: f64) -> f64 {
    if base == 0.0 {
        f64::NAN
    } else {
        10.0 * (gap / base).log10()
    }
}

/// Largest observed `‖F x − F y‖ / ‖x − y‖` over the pairs, a lower bound on
/// the Lipschitz constant of `F`.
pub fn lipschitz_probe<P, F>(map: F, pairs: &[(P, P)]) -> Result<f64>
where
    P: Metric,
    F: Fn(&P) -> Result<P>,
{
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("need at least one pair".into()));
    }
    let mut worst: f64 = 0.0;
    for (i, (x, y)) in pairs.iter().enumerate() {
        let d = x.distance_to(y);
        if d == 0.0 {
            return Err(Error::CoincidentPair(i));
        }
        worst = worst.max(map(x)?.distance_to(&map(y)?) / d);
    }
    Ok(worst)
}

struct Driver<'a, P> {
    rule: &'a StoppingRule,
    keep_iterates: bool,
    norm: fn(&P) -> f64,
    distance: fn(&P, &P) -> f64,
}

impl<P: Clone> Driver<'_, P> {
    /// `gap` maps an iterate to its squared `J_A` residual (after projecting
    /// product iterates down); `on_iterate` sees every iterate in order.
    fn run<S, G, O>(&self, x0: P, step: S, gap: G, mut on_iterate: O) -> Result<IterationTrace<P>>
    where
        S: Fn(&P) -> Result<P>,
        G: Fn(&P) -> Result<f64>,
        O: FnMut(&P) -> Result<()>,
    {
        self.rule.validate()?;
        let base = gap(&x0)?;
        let norm0 = (self.norm)(&x0);
        let mut records = vec![Record { iter: 0, step_norm: 0.0, iterate_norm: norm0, db_error: 0.0 }];
        let mut iterates = self.keep_iterates.then(|| vec![x0.clone()]);
        on_iterate(&x0)?;

        let mut x = x0;
        let mut outcome = Outcome::MaxIters;
        if norm0 >= self.rule.divergence_threshold {
            outcome = Outcome::Diverged;
        } else {
            for iter in 1..=self.rule.max_iters {
                let next = step(&x)?;
                let step_norm = (self.distance)(&next, &x);
                let iterate_norm = (self.norm)(&next);
                let db_error = db_from_gaps(gap(&next)?, base);
                records.push(Record { iter, step_norm, iterate_norm, db_error });
                on_iterate(&next)?;
                if let Some(list) = iterates.as_mut() {
                    list.push(next.clone());
                }
                x = next;
                if !iterate_norm.is_finite() || iterate_norm >= self.rule.divergence_threshold {
                    outcome = Outcome::Diverged;
                    break;
                }
                if step_norm <= self.rule.step_tol {
                    outcome = Outcome::Converged;
                    break;
                }
            }
        }
        Ok(IterationTrace { records, outcome, final_point: x, tags: Vec::new(), iterates })
    }
}

/// Iterates `x_{n+1} = J_A x_n`.
pub fn iterate_averaged_resolvent(
    models: &[OperatorModel],
    w: &Weights,
    x0: &Vector,
    rule: &StoppingRule,
) -> Result<IterationTrace<Vector>> {
    if models.len() != w.len() {
        return Err(Error::LengthMismatch { expected: w.len(), found: models.len() });
    }
    let driver = Driver { rule, keep_iterates: false, norm: Vector::norm, distance: Vector::distance };
    // the residual of x_n already holds J_A x_n, which is the next step
    let last: RefCell<Option<(Vector, Vector)>> = RefCell::new(None);
    driver.run(
        x0.clone(),
        |x| match last.borrow_mut().take() {
            Some((at, jx)) if at == *x => Ok(jx),
            _ => averaged_resolvent(models, w, x),
        },
        |x| {
            let jx = averaged_resolvent(models, w, x)?;
            let gap = jx.sub(x).norm_squared();
            *last.borrow_mut() = Some((x.clone(), jx));
            Ok(gap)
        },
        |_| Ok(()),
    )
}

fn run_product<S>(
    p: &ProductProblem,
    x0: &ProductVector,
    rule: &StoppingRule,
    keep_iterates: bool,
    step: S,
) -> Result<ProductRun>
where
    S: Fn(&ProductVector) -> Result<ProductVector>,
{
    // shape check happens in combine via the problem
    p.combine(x0)?;
    let (models, w) = (p.models(), p.weights());
    let driver = Driver { rule, keep_iterates, norm: ProductVector::norm, distance: ProductVector::distance };
    let mut projected = Vec::new();
    let trace = driver.run(
        x0.clone(),
        step,
        |x| fixed_point_gap(models, w, &combine(w, x)?),
        |x| {
            projected.push(combine(w, x)?);
            Ok(())
        },
    )?;
    Ok(ProductRun { trace, projected })
}

/// Iterates `x_{n+1} = (J ∘ R) x_n` on the product space.
///
/// Two sets are refused unless `opts.allow_two_sets` is set: `R` is then a
/// swap and the iteration can cycle forever.
pub fn iterate_product(
    p: &ProductProblem,
    x0: &ProductVector,
    rule: &StoppingRule,
    opts: ProductOptions,
) -> Result<ProductRun> {
    let m = p.num_sets();
    if m < 3 && !opts.allow_two_sets {
        return Err(Error::TwoSetsRefused);
    }
    let mut run = run_product(p, x0, rule, opts.keep_iterates, |x| p.jacobi_step(x))?;
    if m < 3 {
        run.trace.tags.push(TraceTag::TwoSetOverride);
    }
    if !p.weights().is_equal() {
        run.trace.tags.push(TraceTag::OutsideProvenTheory);
    }
    Ok(run)
}

/// Iterates the sequential sweep `x_{n+1} = T x_n`. Outcomes are empirical only.
pub fn iterate_heuristic(
    p: &ProductProblem,
    x0: &ProductVector,
    rule: &StoppingRule,
    opts: ProductOptions,
) -> Result<ProductRun> {
    let mut run = run_product(p, x0, rule, opts.keep_iterates, |x| p.sweep(x))?;
    run.trace.tags.push(TraceTag::Heuristic);
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    fn two_points() -> (Vec<OperatorModel>, Weights) {
        let h = |b| OperatorModel::hyperplane(v(&[1.0]), b).unwrap();
        (vec![h(1.0), h(2.0)], Weights::equal(2).unwrap())
    }

    #[test]
    fn rule_validation() {
        assert!(StoppingRule::new(0, 1e-10, 1.0).is_err());
        assert!(StoppingRule::new(1, -1.0, 1.0).is_err());
        assert!(StoppingRule::new(1, f64::NAN, 1.0).is_err());
        assert!(StoppingRule::new(1, 0.0, 0.0).is_err());
        assert!(StoppingRule::new(1, 0.0, 1.0).is_ok());
        let d = StoppingRule::default();
        assert_eq!((d.max_iters, d.step_tol, d.divergence_threshold), (10_000, 1e-10, 1e12));
    }

    #[test]
    fn averaged_resolvent_converges_to_midpoint() {
        let (models, w) = two_points();
        let trace = iterate_averaged_resolvent(&models, &w, &v(&[0.0]), &StoppingRule::default()).unwrap();
        assert_eq!(trace.outcome, Outcome::Converged);
        assert!((trace.final_point[0] - 1.5).abs() < 1e-12);
        assert_eq!(trace.records[0].db_error, 0.0);
    }

    #[test]
    fn zero_models_stop_immediately() {
        let models = vec![OperatorModel::Zero; 3];
        let w = Weights::equal(3).unwrap();
        let x0 = v(&[1.0, 2.0]);
        let trace = iterate_averaged_resolvent(&models, &w, &x0, &StoppingRule::default()).unwrap();
        assert_eq!(trace.outcome, Outcome::Converged);
        assert_eq!(trace.iterations(), 1);
        assert_eq!(trace.records[1].step_norm, 0.0);
        assert_eq!(trace.final_point, x0);
        // metric undefined after the start
        assert!(trace.records[1].db_error.is_nan());
    }

    #[test]
    fn translations_diverge_linearly() {
        let models = vec![OperatorModel::translation(v(&[1.0])); 3];
        let w = Weights::equal(3).unwrap();
        let rule = StoppingRule::new(10_000, 1e-10, 49.5).unwrap();
        let trace = iterate_averaged_resolvent(&models, &w, &v(&[0.0]), &rule).unwrap();
        assert_eq!(trace.outcome, Outcome::Diverged);
        for r in &trace.records {
            assert!((r.iterate_norm - r.iter as f64).abs() < 1e-12);
        }
        assert_eq!(trace.iterations(), 50);
    }

    #[test]
    fn two_sets_refused_without_override() {
        let p = ProductProblem::new(vec![OperatorModel::Zero; 2], Weights::equal(2).unwrap(), 1).unwrap();
        let x0 = ProductVector::new(vec![v(&[1.0]), v(&[2.0])]).unwrap();
        let err = iterate_product(&p, &x0, &StoppingRule::default(), ProductOptions::default());
        assert_eq!(err.unwrap_err(), Error::TwoSetsRefused);
        let opts = ProductOptions { allow_two_sets: true, keep_iterates: false };
        let run = iterate_product(&p, &x0, &StoppingRule::fixed(4), opts).unwrap();
        assert_eq!(run.trace.outcome, Outcome::MaxIters);
        assert_eq!(run.trace.tags, vec![TraceTag::TwoSetOverride]);
        assert_eq!(run.trace.final_point, x0);
    }

    #[test]
    fn heuristic_two_sets_lands_on_diagonal() {
        let p = ProductProblem::new(vec![OperatorModel::Zero; 2], Weights::equal(2).unwrap(), 2).unwrap();
        let x0 = ProductVector::new(vec![v(&[1.0, 0.0]), v(&[3.0, -1.0])]).unwrap();
        let opts = ProductOptions { allow_two_sets: false, keep_iterates: true };
        let run = iterate_heuristic(&p, &x0, &StoppingRule::default(), opts).unwrap();
        assert_eq!(run.trace.outcome, Outcome::Converged);
        assert_eq!(run.trace.iterations(), 2);
        let iterates = run.trace.iterates.as_ref().unwrap();
        assert_eq!(iterates[1], ProductVector::diagonal(&v(&[3.0, -1.0]), 2));
        assert_eq!(run.trace.tags, vec![TraceTag::Heuristic]);
        assert_eq!(run.projected.len(), run.trace.records.len());
    }

    #[test]
    fn unequal_weights_are_tagged() {
        let w = Weights::new(vec![0.5, 0.25, 0.25]).unwrap();
        let h = |b| OperatorModel::hyperplane(v(&[1.0]), b).unwrap();
        let p = ProductProblem::new(vec![h(0.0), h(1.0), h(2.0)], w, 1).unwrap();
        let x0 = ProductVector::zeros(3, 1);
        let run = iterate_product(&p, &x0, &StoppingRule::fixed(5), ProductOptions::default()).unwrap();
        assert_eq!(run.trace.tags, vec![TraceTag::OutsideProvenTheory]);
    }

    #[test]
    fn db_examples() {
        let (models, w) = two_points();
        let x0 = v(&[0.0]);
        assert_eq!(relative_error_db(&models, &w, &x0, &x0).unwrap(), 0.0);
        // J_A x − x = 1.5 − x, so x = 1.35 leaves a tenth of the residual at 0
        let db = relative_error_db(&models, &w, &x0, &v(&[1.35])).unwrap();
        assert!((db + 20.0).abs() < 1e-12, "{db}");
        let db = relative_error_db(&models, &w, &x0, &v(&[0.75])).unwrap();
        assert!((db - 20.0 * 0.5f64.log10()).abs() < 1e-12);
        assert!((db + 6.020_599_913_279_624).abs() < 1e-12);
        assert_eq!(
            relative_error_db(&models, &w, &v(&[1.5]), &x0).unwrap_err(),
            Error::ZeroInitialResidual
        );
    }

    #[test]
    fn lipschitz_probe_identity_and_errors() {
        let pairs = vec![(v(&[0.0, 1.0]), v(&[2.0, -1.0])), (v(&[3.0, 3.0]), v(&[3.0, 3.5]))];
        assert_eq!(lipschitz_probe(|x: &Vector| Ok(x.clone()), &pairs).unwrap(), 1.0);
        let doubled = lipschitz_probe(|x: &Vector| Ok(x.scaled(2.0)), &pairs).unwrap();
        assert!((doubled - 2.0).abs() < 1e-15);
        let bad = vec![(v(&[1.0]), v(&[1.0]))];
        assert_eq!(lipschitz_probe(|x: &Vector| Ok(x.clone()), &bad).unwrap_err(), Error::CoincidentPair(0));
    }

    #[test]
    fn csv_layout() {
        let (models, w) = two_points();
        let trace = iterate_averaged_resolvent(&models, &w, &v(&[0.0]), &StoppingRule::fixed(2)).unwrap();
        let csv = trace.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "iter,step_norm,iterate_norm,db_error");
        assert_eq!(lines[1], "0,0,0,0");
        assert_eq!(lines.len(), 5);
        // 1-D projections are constant maps, so the second step does not move
        assert_eq!(*lines.last().unwrap(), "# outcome=Converged");
    }
}
