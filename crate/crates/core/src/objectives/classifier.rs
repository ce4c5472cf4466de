use serde::{Deserialize, Serialize};

use super::{check_dim, BatchSpec, Dataset, LayeredModel, Objective};
use crate::error::{FzooError, Result};
use crate::forward_engine::{Activation, Architecture};
use crate::matrix::Matrix;
use crate::perturbation::{LayerShape, ParamVector};

/// Scorer producing one logit per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    Linear { classes: usize },
    /// One tanh hidden layer.
    Mlp { hidden: usize, classes: usize },
}

impl Scorer {
    pub fn classes(self) -> usize {
        match self {
            Scorer::Linear { classes } | Scorer::Mlp { classes, .. } => classes,
        }
    }

    fn architecture(self, input_dim: usize) -> Result<Architecture> {
        match self {
            Scorer::Linear { classes } => {
                Architecture::new(input_dim, vec![(classes, Activation::Identity)])
            }
            Scorer::Mlp { hidden, classes } => Architecture::new(
                input_dim,
                vec![(hidden, Activation::Tanh), (classes, Activation::Identity)],
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierLoss {
    /// Mean softmax cross-entropy.
    CrossEntropy,
    /// `1 − accuracy`; ties in the argmax go to the lowest class index.
    ZeroOne,
}

/// A layered classifier over a dataset with integer class labels.
#[derive(Debug, Clone)]
pub struct ClassifierObjective {
    architecture: Architecture,
    dataset: Dataset,
    loss: ClassifierLoss,
    classes: usize,
}

/// Cross-entropy objective of a one-hidden-layer network.
pub fn mlp_objective(
    dataset: Dataset,
    hidden: usize,
    activation: Activation,
    classes: usize,
) -> Result<ClassifierObjective> {
    let architecture = Architecture::new(
        dataset.n_features(),
        vec![(hidden, activation), (classes, Activation::Identity)],
    )?;
    ClassifierObjective::new(architecture, dataset, ClassifierLoss::CrossEntropy)
}

/// Piecewise-constant `1 − accuracy` objective; it has no gradient.
pub fn zero_one_objective(dataset: Dataset, scorer: Scorer) -> Result<ClassifierObjective> {
    let architecture = scorer.architecture(dataset.n_features())?;
    ClassifierObjective::new(architecture, dataset, ClassifierLoss::ZeroOne)
}

impl ClassifierObjective {
    pub fn new(architecture: Architecture, dataset: Dataset, loss: ClassifierLoss) -> Result<Self> {
        if architecture.input_dim != dataset.n_features() {
            return Err(FzooError::invalid(format!(
                "architecture expects {} inputs, dataset has {} features",
                architecture.input_dim,
                dataset.n_features()
            )));
        }
        let classes = architecture.output_dim();
        if classes < 2 {
            return Err(FzooError::invalid("a classifier needs at least two classes"));
        }
        dataset.require_classes(classes)?;
        Ok(ClassifierObjective {
            architecture,
            dataset,
            loss,
            classes,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn loss_kind(&self) -> ClassifierLoss {
        self.loss
    }

    /// Fraction of the batch classified correctly.
    pub fn accuracy(&self, theta: &ParamVector, batch: &BatchSpec) -> Result<f64> {
        let outputs = self.outputs(theta, batch)?;
        Ok(self.correct(&outputs, batch) as f64 / batch.indices.len() as f64)
    }

    fn outputs(&self, theta: &ParamVector, batch: &BatchSpec) -> Result<Matrix> {
        check_dim(theta, self.dim())?;
        let stack = self.architecture.build(theta)?;
        stack.forward(&self.inputs(batch)?)
    }

    fn correct(&self, outputs: &Matrix, batch: &BatchSpec) -> usize {
        batch
            .indices
            .iter()
            .enumerate()
            .filter(|&(col, &row)| argmax_column(outputs, col) as f64 == self.dataset.label(row))
            .count()
    }
}

fn argmax_column(m: &Matrix, col: usize) -> usize {
    let mut best = 0;
    for r in 1..m.rows() {
        if m.get(r, col) > m.get(best, col) {
            best = r;
        }
    }
    best
}

impl LayeredModel for ClassifierObjective {
    fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    fn inputs(&self, batch: &BatchSpec) -> Result<Matrix> {
        self.dataset.check_batch(batch)?;
        let rows = self.dataset.n_features();
        Ok(Matrix::from_fn(rows, batch.indices.len(), |r, c| {
            self.dataset.row(batch.indices[c])[r]
        }))
    }

    fn loss_from_outputs(&self, outputs: &Matrix, batch: &BatchSpec) -> Result<f64> {
        if outputs.rows() != self.classes || outputs.cols() != batch.indices.len() {
            return Err(FzooError::invalid("output shape does not match the batch"));
        }
        let b = batch.indices.len() as f64;
        match self.loss {
            ClassifierLoss::ZeroOne => Ok(1.0 - self.correct(outputs, batch) as f64 / b),
            ClassifierLoss::CrossEntropy => {
                let total: f64 = batch
                    .indices
                    .iter()
                    .enumerate()
                    .map(|(col, &row)| {
                        let max = (0..self.classes)
                            .map(|r| outputs.get(r, col))
                            .fold(f64::NEG_INFINITY, f64::max);
                        let lse = max
                            + (0..self.classes)
                                .map(|r| (outputs.get(r, col) - max).exp())
                                .sum::<f64>()
                                .ln();
                        lse - outputs.get(self.dataset.label(row) as usize, col)
                    })
                    .sum();
                Ok(total / b)
            }
        }
    }
}

impl Objective for ClassifierObjective {
    fn dim(&self) -> usize {
        self.architecture.param_count()
    }

    fn evaluate(&self, theta: &ParamVector, batch: &BatchSpec) -> Result<f64> {
        let outputs = self.outputs(theta, batch)?;
        self.loss_from_outputs(&outputs, batch)
    }

    fn sample_count(&self) -> Option<usize> {
        Some(self.dataset.n_samples())
    }

    fn param_shapes(&self) -> Vec<LayerShape> {
        self.architecture.param_shapes()
    }

    fn layered(&self) -> Option<&dyn LayeredModel> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced() -> Dataset {
        Dataset::new(vec![1.0, 2.0, -1.0, -2.0], 1, vec![1.0, 1.0, 0.0, 0.0], "toy").unwrap()
    }

    #[test]
    fn zero_parameters_break_ties_to_class_zero() {
        let obj = zero_one_objective(balanced(), Scorer::Linear { classes: 2 }).unwrap();
        let theta = obj.params(vec![0.0; obj.dim()]).unwrap();
        assert_eq!(obj.evaluate(&theta, &BatchSpec::full(4)).unwrap(), 0.5);
    }

    #[test]
    fn perfect_linear_classifier() {
        let obj = zero_one_objective(balanced(), Scorer::Linear { classes: 2 }).unwrap();
        // class 0 score −x, class 1 score +x; bias columns zero
        let theta = obj.params(vec![-1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(obj.evaluate(&theta, &BatchSpec::full(4)).unwrap(), 0.0);
        assert_eq!(obj.accuracy(&theta, &BatchSpec::full(4)).unwrap(), 1.0);
        assert!(!obj.has_gradient());
    }

    #[test]
    fn cross_entropy_at_zero_is_log_classes() {
        let d = Dataset::new(vec![0.5, 1.0, 2.0], 1, vec![0.0, 1.0, 2.0], "3c").unwrap();
        let obj = mlp_objective(d, 4, Activation::Tanh, 3).unwrap();
        let theta = obj.params(vec![0.0; obj.dim()]).unwrap();
        let l = obj.evaluate(&theta, &BatchSpec::full(3)).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-15);
        assert_eq!(obj.dim(), 4 * 2 + 3 * 5);
    }

    #[test]
    fn labels_must_be_class_indices() {
        let d = Dataset::new(vec![0.0, 1.0], 1, vec![0.0, 2.0], "bad").unwrap();
        assert!(zero_one_objective(d, Scorer::Linear { classes: 2 }).is_err());
    }
}
