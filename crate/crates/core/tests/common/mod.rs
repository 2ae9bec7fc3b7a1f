#![allow(dead_code)]

use resolvent_core::bench::NormalStream;
use resolvent_core::{OperatorModel, ProductProblem, ProductVector, Vector, Weights};

pub fn v(c: &[f64]) -> Vector {
    Vector::new(c.to_vec()).unwrap()
}

pub fn pv(blocks: &[&[f64]]) -> ProductVector {
    ProductVector::new(blocks.iter().map(|b| v(b)).collect()).unwrap()
}

pub struct Sampler(NormalStream);

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler(NormalStream::new(seed))
    }

    pub fn scalar(&mut self) -> f64 {
        self.0.next_normal()
    }

    pub fn vector(&mut self, n: usize) -> Vector {
        v(&(0..n).map(|_| self.scalar()).collect::<Vec<_>>())
    }

    pub fn unit(&mut self, n: usize) -> Vector {
        let x = self.vector(n);
        let s = 1.0 / x.norm();
        x.scaled(s)
    }

    pub fn product(&mut self, m: usize, n: usize) -> ProductVector {
        ProductVector::new((0..m).map(|_| self.vector(n)).collect()).unwrap()
    }

    pub fn vector_pairs(&mut self, n: usize, count: usize) -> Vec<(Vector, Vector)> {
        (0..count).map(|_| (self.vector(n), self.vector(n))).collect()
    }

    pub fn product_pairs(&mut self, m: usize, n: usize, count: usize) -> Vec<(ProductVector, ProductVector)> {
        (0..count).map(|_| (self.product(m, n), self.product(m, n))).collect()
    }

    /// Random weights in (0,1) that sum to one.
    pub fn weights(&mut self, m: usize) -> Weights {
        let raw: Vec<f64> = (0..m).map(|_| self.scalar().abs() + 0.1).collect();
        let total: f64 = raw.iter().sum();
        let mut lam: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let head: f64 = lam[..m - 1].iter().sum();
        lam[m - 1] = 1.0 - head;
        Weights::new(lam).unwrap()
    }

    /// `m` random hyperplanes through `z` in `R^n`.
    pub fn hyperplanes_through(&mut self, z: &Vector, m: usize) -> Vec<OperatorModel> {
        (0..m)
            .map(|_| {
                let a = self.vector(z.dim());
                let b = a.dot(z);
                OperatorModel::hyperplane(a, b).unwrap()
            })
            .collect()
    }

    /// A mix of every closed-form model kind on `R^n`.
    pub fn mixed_models(&mut self, n: usize) -> Vec<OperatorModel> {
        let lo = self.vector(n);
        let hi = lo.add(&v(&vec![1.5; n]));
        let mut rows = vec![vec![0.0; n]; n];
        // B Bᵀ is PSD
        let b: Vec<Vector> = (0..n).map(|_| self.vector(n)).collect();
        for i in 0..n {
            for j in 0..n {
                rows[i][j] = b[i].dot(&b[j]);
            }
        }
        vec![
            OperatorModel::Zero,
            OperatorModel::translation(self.vector(n)),
            OperatorModel::hyperplane(self.vector(n), self.scalar()).unwrap(),
            OperatorModel::halfspace(self.vector(n), self.scalar()).unwrap(),
            OperatorModel::box_set(lo, hi).unwrap(),
            OperatorModel::linear(rows).unwrap(),
        ]
    }
}

pub fn hyperplane_problem(s: &mut Sampler, m: usize, n: usize) -> (ProductProblem, Vector) {
    let z = s.vector(n);
    let models = s.hyperplanes_through(&z, m);
    (ProductProblem::new(models, Weights::equal(m).unwrap(), n).unwrap(), z)
}

pub fn max_block_diff(a: &ProductVector, b: &ProductVector) -> f64 {
    a.blocks()
        .iter()
        .zip(b.blocks())
        .flat_map(|(x, y)| x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}
