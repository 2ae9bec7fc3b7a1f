//! Seeded random hyperplane instances and averaged dB curves for the three
//! iterations.
//!
//! Random streams come from xoshiro256** seeded through SplitMix64, and
//! standard normals from the cosine branch of Box–Muller with two fresh draws
//! per sample (see the README for the exact rule). Instance `k` of an
//! experiment uses seed `seed + k` (wrapping).

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{iterate_averaged_resolvent, iterate_heuristic, iterate_product, ProductOptions, StoppingRule};
use crate::error::{Error, Result};
use crate::least_squares::{normalize_rows, HyperplaneSystem};
use crate::operators::{averaged_resolvent, Weights};
use crate::product_space::{ProductProblem, ProductVector};
use crate::vector::Vector;

/// Standard normal samples from a seeded xoshiro256** stream.
pub struct NormalStream {
    rng: Xoshiro256StarStar,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        NormalStream { rng: Xoshiro256StarStar::seed_from_u64(seed) }
    }

    /// Uniform on `(0, 1]`.
    fn open_unit(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[0, 1)`.
    fn half_open_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.open_unit();
        let u2 = self.half_open_unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// `m` hyperplanes in `R^n`: rows are standard normal then scaled to unit
/// norm, right-hand sides standard normal. Rows are drawn first (row-major),
/// then the right-hand sides.
pub fn generate_random_hyperplanes(n: usize, m: usize, seed: u64) -> Result<HyperplaneSystem> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("need n >= 1 and m >= 1".into()));
    }
    let mut stream = NormalStream::new(seed);
    let rows = (0..m)
        .map(|_| Vector::new((0..n).map(|_| stream.next_normal()).collect()))
        .collect::<Result<Vec<_>>>()?;
    let rhs: Vec<f64> = (0..m).map(|_| stream.next_normal()).collect();
    let raw = HyperplaneSystem::new(rows, vec![0.0; m])?;
    let unit = normalize_rows(&raw)?;
    HyperplaneSystem::new(unit.rows().to_vec(), rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Iterate the averaged resolvent `J_A`.
    #[serde(rename = "jA")]
    AveragedResolvent,
    /// Iterate `J ∘ R` on the product space.
    #[serde(rename = "jR")]
    Parallel,
    /// Iterate the sequential sweep `T`.
    #[serde(rename = "T")]
    Sweep,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::AveragedResolvent, Algorithm::Parallel, Algorithm::Sweep];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::AveragedResolvent => "jA",
            Algorithm::Parallel => "jR",
            Algorithm::Sweep => "T",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "jA" => Ok(Algorithm::AveragedResolvent),
            "jR" => Ok(Algorithm::Parallel),
            "T" => Ok(Algorithm::Sweep),
            other => Err(Error::Parse(format!("unknown algorithm {other:?} (expected jA, jR or T)"))),
        }
    }
}

/// `"equal"` or an explicit list of weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsMode {
    Named(EqualTag),
    List(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EqualTag {
    Equal,
}

impl WeightsMode {
    pub fn equal() -> Self {
        WeightsMode::Named(EqualTag::Equal)
    }

    pub fn resolve(&self, m: usize) -> Result<Weights> {
        match self {
            WeightsMode::Named(EqualTag::Equal) => Weights::equal(m),
            WeightsMode::List(l) => {
                if l.len() != m {
                    return Err(Error::InvalidWeights(format!("{} weights given for {m} sets", l.len())));
                }
                Weights::new(l.clone())
            }
        }
    }
}

impl FromStr for WeightsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "equal" {
            return Ok(WeightsMode::equal());
        }
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("weight {t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()
            .map(WeightsMode::List)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub num_sets: usize,
    pub weights: WeightsMode,
    pub seed: u64,
    pub instances: usize,
    pub iters: usize,
    pub algorithms: Vec<Algorithm>,
    pub output_path: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dim: 50,
            num_sets: 55,
            weights: WeightsMode::equal(),
            seed: 0,
            instances: 5,
            iters: 100,
            algorithms: Algorithm::ALL.to_vec(),
            output_path: PathBuf::from("curves.csv"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<Weights> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dim must be >= 1".into()));
        }
        if self.num_sets < 2 {
            return Err(Error::InvalidArgument("num_sets must be >= 2".into()));
        }
        if self.instances == 0 {
            return Err(Error::InvalidArgument("instances must be >= 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidArgument("select at least one algorithm".into()));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(Error::InvalidArgument(format!("algorithm {a} listed twice")));
            }
        }
        if self.num_sets < 3 && self.algorithms.contains(&Algorithm::Parallel) {
            return Err(Error::InvalidArgument("jR needs num_sets >= 3".into()));
        }
        self.weights.resolve(self.num_sets)
    }
}

/// Mean dB error per algorithm and iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub algorithms: Vec<Algorithm>,
    /// `curves[a][n]` is the mean over instances at iteration `n`.
    pub curves: Vec<Vec<f64>>,
    /// Seeds of the instances that contributed.
    pub used_seeds: Vec<u64>,
    /// Seeds skipped because the starting point was already a fixed point.
    pub skipped_seeds: Vec<u64>,
    pub equal_weights: bool,
    pub num_sets: usize,
}

impl CurveTable {
    pub fn iters(&self) -> usize {
        self.curves.first().map_or(0, |c| c.len().saturating_sub(1))
    }

    pub fn curve(&self, alg: Algorithm) -> Option<&[f64]> {
        self.algorithms.iter().position(|a| *a == alg).map(|i| self.curves[i].as_slice())
    }

    /// `iter,alg,mean_db`, iteration-major.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,alg,mean_db\n");
        for n in 0..=self.iters() {
            for (alg, curve) in self.algorithms.iter().zip(&self.curves) {
                writeln!(out, "{n},{alg},{}", curve[n]).expect("writing to String");
            }
        }
        out
    }

    /// Whitespace-separated columns `iter <alg>…` with a commented metadata header.
    pub fn to_columns(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# mean relative fixed-point error in dB over {} instance(s)", self.used_seeds.len())
            .expect("writing to String");
        for alg in &self.algorithms {
            let note = match alg {
                Algorithm::AveragedResolvent => "convergent (averaged resolvent)".to_string(),
                Algorithm::Parallel if self.equal_weights && self.num_sets >= 3 => {
                    "convergent (equal weights, m >= 3)".to_string()
                }
                Algorithm::Parallel => "outside proven theory (unequal weights)".to_string(),
                Algorithm::Sweep => "heuristic: no convergence guarantee".to_string(),
            };
            writeln!(out, "# {alg}: {note}").expect("writing to String");
        }
        if !self.skipped_seeds.is_empty() {
            writeln!(out, "# skipped seeds: {:?}", self.skipped_seeds).expect("writing to String");
        }
        let labels: Vec<&str> = self.algorithms.iter().map(|a| a.label()).collect();
        writeln!(out, "# iter {}", labels.join(" ")).expect("writing to String");
        for n in 0..=self.iters() {
            write!(out, "{n}").expect("writing to String");
            for curve in &self.curves {
                write!(out, " {}", curve[n]).expect("writing to String");
            }
            out.push('\n');
        }
        out
    }
}

fn pad_curve(mut curve: Vec<f64>, len: usize) -> Vec<f64> {
    // a run stops early only when an iterate is exactly fixed, so the error stays put
    let last = *curve.last().expect("curves hold at least the starting record");
    curve.resize(len, last);
    curve
}

fn instance_curves(cfg: &ExperimentConfig, w: &Weights, seed: u64) -> Result<Option<Vec<Vec<f64>>>> {
    let (n, m) = (cfg.dim, cfg.num_sets);
    let sys = generate_random_hyperplanes(n, m, seed)?;
    let models = sys.to_models();
    let x0 = Vector::zeros(n);
    if averaged_resolvent(&models, w, &x0)?.distance(&x0) == 0.0 {
        return Ok(None);
    }
    let len = cfg.iters + 1;
    if cfg.iters == 0 {
        return Ok(Some(vec![vec![0.0]; cfg.algorithms.len()]));
    }
    let rule = StoppingRule::fixed(cfg.iters);
    let problem = ProductProblem::new(models.clone(), w.clone(), n)?;
    let p0 = ProductVector::zeros(m, n);
    let opts = ProductOptions::default();
    cfg.algorithms
        .iter()
        .map(|alg| {
            let curve = match alg {
                Algorithm::AveragedResolvent => iterate_averaged_resolvent(&models, w, &x0, &rule)?.db_curve(),
                Algorithm::Parallel => iterate_product(&problem, &p0, &rule, opts)?.trace.db_curve(),
                Algorithm::Sweep => iterate_heuristic(&problem, &p0, &rule, opts)?.trace.db_curve(),
            };
            Ok(pad_curve(curve, len))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Runs every selected algorithm from the origin on each instance and
/// averages the dB curves. Instances run in parallel; the reduction is in
/// instance order, so results do not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<CurveTable> {
    let w = cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.instances as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
    let per_instance = seeds
        .par_iter()
        .map(|&s| instance_curves(cfg, &w, s))
        .collect::<Result<Vec<_>>>()?;

    let len = cfg.iters + 1;
    let mut sums = vec![vec![0.0; len]; cfg.algorithms.len()];
    let mut used_seeds = Vec::new();
    let mut skipped_seeds = Vec::new();
    for (seed, curves) in seeds.iter().zip(per_instance) {
        match curves {
            Some(curves) => {
                used_seeds.push(*seed);
                for (sum, curve) in sums.iter_mut().zip(curves) {
                    for (s, c) in sum.iter_mut().zip(curve) {
                        *s += c;
                    }
                }
            }
            None => skipped_seeds.push(*seed),
        }
    }
    if used_seeds.is_empty() {
        return Err(Error::ZeroInitialResidual);
    }
    let count = used_seeds.len() as f64;
    let curves = sums.into_iter().map(|s| s.into_iter().map(|v| v / count).collect()).collect();
    Ok(CurveTable {
        algorithms: cfg.algorithms.clone(),
        curves,
        used_seeds,
        skipped_seeds,
        equal_weights: w.is_equal(),
        num_sets: cfg.num_sets,
    })
}

/// Writes the CSV to `path` and the columns file next to it with extension
/// `.dat`. Returns both paths.
pub fn emit_plot_data(table: &CurveTable, path: &Path) -> Result<(PathBuf, PathBuf)> {
    if table.curves.is_empty() {
        return Err(Error::InvalidArgument("empty curve table".into()));
    }
    let columns_path = path.with_extension("dat");
    if columns_path == path {
        return Err(Error::InvalidArgument(format!(
            "output path {} collides with the columns file",
            path.display()
        )));
    }
    fs::write(path, table.to_csv())?;
    fs::write(&columns_path, table.to_columns())?;
    Ok((path.to_path_buf(), columns_path))
}
