use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_dim, BatchSpec, Dataset, Objective};
use crate::error::{FzooError, Result};
use crate::matrix::Matrix;
use crate::perturbation::{derive_seed, ParamVector};

/// Hessian of a quadratic objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadraticSpec {
    Identity,
    Diagonal(Vec<f64>),
    /// `Q·diag(λ)·Qᵀ` with a seeded random rotation `Q` and eigenvalues
    /// log-spaced over `[1, condition]` (default 10).
    RandomSpd {
        seed: u64,
        #[serde(default)]
        condition: Option<f64>,
    },
}

/// `L(θ) = ½θᵀAθ − bᵀθ`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    hessian: Matrix,
    b: Vec<f64>,
    largest_eigenvalue: f64,
}

pub fn quadratic_objective(spec: &QuadraticSpec, b: Vec<f64>, d: usize) -> Result<QuadraticObjective> {
    if d == 0 {
        return Err(FzooError::InvalidDimension("quadratic needs d >= 1".into()));
    }
    if b.len() != d {
        return Err(FzooError::InvalidDimension(format!(
            "linear term has length {}, expected {d}",
            b.len()
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(FzooError::invalid("linear term must be finite"));
    }
    let (hessian, largest_eigenvalue) = match spec {
        QuadraticSpec::Identity => (Matrix::identity(d), 1.0),
        QuadraticSpec::Diagonal(diag) => {
            if diag.len() != d {
                return Err(FzooError::InvalidDimension(format!(
                    "diagonal has length {}, expected {d}",
                    diag.len()
                )));
            }
            if diag.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(FzooError::invalid("diagonal entries must be positive"));
            }
            let m = Matrix::from_fn(d, d, |r, c| if r == c { diag[r] } else { 0.0 });
            (m, diag.iter().copied().fold(0.0, f64::max))
        }
        QuadraticSpec::RandomSpd { seed, condition } => {
            let kappa = condition.unwrap_or(10.0);
            if !(kappa >= 1.0 && kappa.is_finite()) {
                return Err(FzooError::invalid(format!("condition number {kappa} must be >= 1")));
            }
            random_spd(d, *seed, kappa)
        }
    };
    Ok(QuadraticObjective {
        hessian,
        b,
        largest_eigenvalue,
    })
}

fn random_spd(d: usize, seed: u64, kappa: f64) -> (Matrix, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x5350_44]));
    // modified Gram-Schmidt on Gaussian columns
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for q in &basis {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    let eig: Vec<f64> = (0..d)
        .map(|i| if d == 1 { 1.0 } else { kappa.powf(i as f64 / (d - 1) as f64) })
        .collect();
    let m = Matrix::from_fn(d, d, |r, c| {
        (0..d).map(|k| basis[k][r] * eig[k] * basis[k][c]).sum()
    });
    // symmetrize away rounding
    let sym = Matrix::from_fn(d, d, |r, c| 0.5 * (m.get(r, c) + m.get(c, r)));
    (sym, eig[d - 1])
}

impl QuadraticObjective {
    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    pub fn linear_term(&self) -> &[f64] {
        &self.b
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn evaluate(&self, theta: &ParamVector, _batch: &BatchSpec) -> Result<f64> {
        check_dim(theta, self.dim())?;
        let t = theta.values();
        let at = self.hessian.matvec(t)?;
        Ok(t.iter()
            .zip(&at)
            .zip(&self.b)
            .map(|((x, ax), b)| 0.5 * x * ax - b * x)
            .sum())
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, theta: &ParamVector, _batch: &BatchSpec) -> Result<Vec<f64>> {
        check_dim(theta, self.dim())?;
        let mut g = self.hessian.matvec(theta.values())?;
        g.iter_mut().zip(&self.b).for_each(|(v, b)| *v -= b);
        Ok(g)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.largest_eigenvalue)
    }
}

/// `L(θ) = cᵀθ`.
#[derive(Debug, Clone)]
pub struct LinearObjective {
    c: Vec<f64>,
}

pub fn linear_objective(c: Vec<f64>) -> Result<LinearObjective> {
    if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
        return Err(FzooError::invalid("linear objective needs finite, non-empty coefficients"));
    }
    Ok(LinearObjective { c })
}

impl LinearObjective {
    pub fn coefficients(&self) -> &[f64] {
        &self.c
    }
}

impl Objective for LinearObjective {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn evaluate(&self, theta: &ParamVector, _batch: &BatchSpec) -> Result<f64> {
        check_dim(theta, self.dim())?;
        Ok(theta.values().iter().zip(&self.c).map(|(a, b)| a * b).sum())
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, theta: &ParamVector, _batch: &BatchSpec) -> Result<Vec<f64>> {
        check_dim(theta, self.dim())?;
        Ok(self.c.clone())
    }

    fn smoothness(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Chained Rosenbrock, `Σ 100(θ_{i+1} − θ_i²)² + (1 − θ_i)²`.
#[derive(Debug, Clone)]
pub struct RosenbrockObjective {
    d: usize,
}

pub fn rosenbrock_objective(d: usize) -> Result<RosenbrockObjective> {
    if d < 2 {
        return Err(FzooError::InvalidDimension("Rosenbrock needs d >= 2".into()));
    }
    Ok(RosenbrockObjective { d })
}

impl Objective for RosenbrockObjective {
    fn dim(&self) -> usize {
        self.d
    }

    fn evaluate(&self, theta: &ParamVector, _batch: &BatchSpec) -> Result<f64> {
        check_dim(theta, self.d)?;
        Ok(theta
            .values()
            .windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum())
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, theta: &ParamVector, _batch: &BatchSpec) -> Result<Vec<f64>> {
        check_dim(theta, self.d)?;
        let x = theta.values();
        let mut g = vec![0.0; self.d];
        for i in 0..self.d - 1 {
            let r = x[i + 1] - x[i] * x[i];
            g[i] += -400.0 * x[i] * r - 2.0 * (1.0 - x[i]);
            g[i + 1] += 200.0 * r;
        }
        Ok(g)
    }
}

/// Mean binary cross-entropy of a linear model plus `l2·‖θ‖²/2`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    dataset: Dataset,
    l2: f64,
}

pub fn logistic_objective(dataset: Dataset, l2: f64) -> Result<LogisticObjective> {
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(FzooError::invalid(format!("l2 weight {l2} must be >= 0")));
    }
    dataset.require_binary()?;
    Ok(LogisticObjective { dataset, l2 })
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticObjective {
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    fn score(&self, theta: &[f64], row: usize) -> f64 {
        self.dataset.row(row).iter().zip(theta).map(|(x, w)| x * w).sum()
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        0.5 * self.l2 * theta.iter().map(|v| v * v).sum::<f64>()
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.dataset.n_features()
    }

    fn evaluate(&self, theta: &ParamVector, batch: &BatchSpec) -> Result<f64> {
        check_dim(theta, self.dim())?;
        self.dataset.check_batch(batch)?;
        let t = theta.values();
        let total: f64 = batch
            .indices
            .iter()
            .map(|&i| softplus(self.score(t, i)) - self.dataset.label(i) * self.score(t, i))
            .sum();
        Ok(total / batch.indices.len() as f64 + self.penalty(t))
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, theta: &ParamVector, batch: &BatchSpec) -> Result<Vec<f64>> {
        check_dim(theta, self.dim())?;
        self.dataset.check_batch(batch)?;
        let t = theta.values();
        let inv = 1.0 / batch.indices.len() as f64;
        let mut g: Vec<f64> = t.iter().map(|w| self.l2 * w).collect();
        for &i in &batch.indices {
            let r = (logistic(self.score(t, i)) - self.dataset.label(i)) * inv;
            g.iter_mut().zip(self.dataset.row(i)).for_each(|(gv, x)| *gv += r * x);
        }
        Ok(g)
    }

    fn smoothness(&self) -> Option<f64> {
        let n = self.dataset.n_samples();
        let mean_sq: f64 = (0..n)
            .map(|i| self.dataset.row(i).iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        Some(0.25 * mean_sq + self.l2)
    }

    fn sample_count(&self) -> Option<usize> {
        Some(self.dataset.n_samples())
    }
}
