//! Forward-only loss functions and the data they read.
//!
//! Every loss is a mean over the rows of a mini-batch. Objectives that do not
//! read data (quadratic, Rosenbrock, linear) ignore the batch.

mod classifier;
mod dataset;
mod smooth;

pub use classifier::{mlp_objective, zero_one_objective, ClassifierLoss, ClassifierObjective, Scorer};
pub use dataset::{load_csv, sample_batch, write_csv, BatchSpec, Dataset};
pub use smooth::{
    linear_objective, logistic_objective, quadratic_objective, rosenbrock_objective,
    LinearObjective, LogisticObjective, QuadraticObjective, QuadraticSpec, RosenbrockObjective,
};

use crate::error::{FzooError, Result};
use crate::forward_engine::Architecture;
use crate::matrix::Matrix;
use crate::perturbation::{LayerShape, ParamVector};

/// A loss `L(θ; B)`. Implementations are immutable and thread-safe.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, theta: &ParamVector, batch: &BatchSpec) -> Result<f64>;

    fn has_gradient(&self) -> bool {
        false
    }

    /// Analytic gradient, when the objective has one.
    fn gradient(&self, _theta: &ParamVector, _batch: &BatchSpec) -> Result<Vec<f64>> {
        Err(FzooError::UnsupportedObjective(
            "objective has no gradient oracle".into(),
        ))
    }

    /// Upper bound on the Lipschitz constant of the gradient, when known.
    fn smoothness(&self) -> Option<f64> {
        None
    }

    /// Number of dataset rows, for objectives backed by data.
    fn sample_count(&self) -> Option<usize> {
        None
    }

    fn param_shapes(&self) -> Vec<LayerShape> {
        vec![LayerShape::new("theta", self.dim(), 1)]
    }

    fn layered(&self) -> Option<&dyn LayeredModel> {
        None
    }

    fn full_batch(&self) -> BatchSpec {
        match self.sample_count() {
            Some(n) => BatchSpec::full(n),
            None => BatchSpec::none(),
        }
    }

    /// A parameter vector of this objective's shape holding `values`.
    fn params(&self, values: Vec<f64>) -> Result<ParamVector> {
        ParamVector::new(values, self.param_shapes())
    }
}

/// Objectives whose loss is computed from the outputs of a layer stack.
pub trait LayeredModel {
    fn architecture(&self) -> &Architecture;

    /// Batch inputs, one sample per column.
    fn inputs(&self, batch: &BatchSpec) -> Result<Matrix>;

    fn loss_from_outputs(&self, outputs: &Matrix, batch: &BatchSpec) -> Result<f64>;
}

/// `a·L + b` for `a > 0`.
pub struct AffineLoss<O> {
    inner: O,
    scale: f64,
    shift: f64,
}

impl<O: Objective> AffineLoss<O> {
    pub fn new(inner: O, scale: f64, shift: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && shift.is_finite()) {
            return Err(FzooError::invalid(format!(
                "affine transform needs a finite positive scale, got ({scale}, {shift})"
            )));
        }
        Ok(AffineLoss { inner, scale, shift })
    }
}

impl<O: Objective> Objective for AffineLoss<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn evaluate(&self, theta: &ParamVector, batch: &BatchSpec) -> Result<f64> {
        Ok(self.scale * self.inner.evaluate(theta, batch)? + self.shift)
    }

    fn has_gradient(&self) -> bool {
        self.inner.has_gradient()
    }

    fn gradient(&self, theta: &ParamVector, batch: &BatchSpec) -> Result<Vec<f64>> {
        let mut g = self.inner.gradient(theta, batch)?;
        g.iter_mut().for_each(|v| *v *= self.scale);
        Ok(g)
    }

    fn smoothness(&self) -> Option<f64> {
        self.inner.smoothness().map(|l| l * self.scale)
    }

    fn sample_count(&self) -> Option<usize> {
        self.inner.sample_count()
    }

    fn param_shapes(&self) -> Vec<LayerShape> {
        self.inner.param_shapes()
    }
}

impl<O: Objective + ?Sized> Objective for Box<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, theta: &ParamVector, batch: &BatchSpec) -> Result<f64> {
        (**self).evaluate(theta, batch)
    }
    fn has_gradient(&self) -> bool {
        (**self).has_gradient()
    }
    fn gradient(&self, theta: &ParamVector, batch: &BatchSpec) -> Result<Vec<f64>> {
        (**self).gradient(theta, batch)
    }
    fn smoothness(&self) -> Option<f64> {
        (**self).smoothness()
    }
    fn sample_count(&self) -> Option<usize> {
        (**self).sample_count()
    }
    fn param_shapes(&self) -> Vec<LayerShape> {
        (**self).param_shapes()
    }
    fn layered(&self) -> Option<&dyn LayeredModel> {
        (**self).layered()
    }
}

pub(crate) fn check_dim(theta: &ParamVector, d: usize) -> Result<()> {
    if theta.dim() != d {
        return Err(FzooError::InvalidDimension(format!(
            "objective has dimension {d}, parameters have {}",
            theta.dim()
        )));
    }
    Ok(())
}
