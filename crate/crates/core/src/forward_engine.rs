//! Perturbed forward passes through layered models.
//!
//! A model is a chain of affine layers `Y ← act(W·[Y; 1])` whose weights
//! (bias as the last column) are laid out in the flat parameter vector in
//! layer order. Direction `u_i` is carved into one sign matrix `S_i^(j)` per
//! layer using that same layout, so perturbing all of θ by `ε·u_i` is the same
//! as replacing every `W^(j)` by `W^(j) + ε·S_i^(j)`.
//!
//! The sequential path does exactly that: perturb, forward, restore. The
//! batched path splits each layer into a shared clean product and a sign
//! correction, `W·Y + ε·S·Y`, and evaluates the clean product once for all
//! directions stacked along the column axis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FzooError, Result};
use crate::matrix::Matrix;
use crate::perturbation::{DirectionSeed, LayerShape, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    fn apply_all(self, m: &mut Matrix) {
        if self != Activation::Identity {
            for v in m.data_mut() {
                *v = self.apply(*v);
            }
        }
    }
}

/// Layer widths and activations, without weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub layers: Vec<(usize, Activation)>,
}

impl Architecture {
    pub fn new(input_dim: usize, layers: Vec<(usize, Activation)>) -> Result<Self> {
        if input_dim == 0 || layers.is_empty() || layers.iter().any(|(w, _)| *w == 0) {
            return Err(FzooError::InvalidDimension(
                "architecture needs positive widths and at least one layer".into(),
            ));
        }
        Ok(Architecture { input_dim, layers })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.0).unwrap_or(0)
    }

    /// Weight-block shapes in parameter order; bias is the last column.
    pub fn param_shapes(&self) -> Vec<LayerShape> {
        let mut fan_in = self.input_dim;
        self.layers
            .iter()
            .enumerate()
            .map(|(j, &(width, _))| {
                let s = LayerShape::new(format!("layer{j}.weight"), width, fan_in + 1);
                fan_in = width;
                s
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(LayerShape::len).sum()
    }

    pub fn build(&self, params: &ParamVector) -> Result<LayerStack> {
        let shapes = self.param_shapes();
        if params.shapes() != shapes.as_slice() {
            return Err(FzooError::invalid(
                "parameter shapes do not match the architecture",
            ));
        }
        let layers = params
            .block_ranges()
            .into_iter()
            .zip(&shapes)
            .zip(&self.layers)
            .map(|((range, shape), &(_, activation))| {
                Ok(Layer {
                    weight: Matrix::from_vec(
                        shape.rows,
                        shape.cols,
                        params.values()[range].to_vec(),
                    )?,
                    activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LayerStack::new(layers)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × (in + 1)`, bias in the last column.
    pub weight: Matrix,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(FzooError::InvalidDimension("empty layer stack".into()));
        };
        if first.weight.cols() < 2 {
            return Err(FzooError::InvalidDimension(
                "first layer needs at least one input".into(),
            ));
        }
        for (j, pair) in layers.windows(2).enumerate() {
            if pair[1].weight.cols() != pair[0].weight.rows() + 1 {
                return Err(FzooError::InvalidDimension(format!(
                    "layer {} expects {} inputs but layer {j} produces {}",
                    j + 1,
                    pair[1].weight.cols() - 1,
                    pair[0].weight.rows()
                )));
            }
        }
        let input_dim = first.weight.cols() - 1;
        let output_dim = layers.last().map(|l| l.weight.rows()).unwrap_or(0);
        Ok(LayerStack {
            layers,
            input_dim,
            output_dim,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| (l.weight.rows(), l.activation))
                .collect(),
        }
    }

    pub fn to_params(&self) -> ParamVector {
        let values = self
            .layers
            .iter()
            .flat_map(|l| l.weight.data().iter().copied())
            .collect();
        ParamVector::new(values, self.architecture().param_shapes())
            .expect("layer stack weights are finite and consistently shaped")
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.rows() != self.input_dim {
            return Err(FzooError::invalid(format!(
                "input has {} features but the stack expects {}",
                x.rows(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Clean forward pass. `x` holds one sample per column.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut y = x.clone();
        for layer in &self.layers {
            let mut z = layer.weight.matmul(&y.with_ones_row())?;
            layer.activation.apply_all(&mut z);
            y = z;
        }
        Ok(y)
    }
}

/// A ±1 matrix stored as sign bits (`true` is `+1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMatrix {
    rows: usize,
    cols: usize,
    positive: Vec<bool>,
}

impl SignMatrix {
    pub fn from_signs(rows: usize, cols: usize, signs: &[f64]) -> Result<Self> {
        if signs.len() != rows * cols {
            return Err(FzooError::invalid("sign count does not match shape"));
        }
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(FzooError::invalid("sign matrix entries must be ±1"));
        }
        Ok(SignMatrix {
            rows,
            cols,
            positive: signs.iter().map(|&s| s > 0.0).collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn negated(&self) -> SignMatrix {
        SignMatrix {
            rows: self.rows,
            cols: self.cols,
            positive: self.positive.iter().map(|p| !p).collect(),
        }
    }

    pub fn to_dense(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |r, c| {
            if self.positive[r * self.cols + c] {
                1.0
            } else {
                -1.0
            }
        })
    }

    /// Carves every layer's sign block out of the Rademacher direction `seed`.
    pub fn carve_all(seed: DirectionSeed, shapes: &[LayerShape]) -> Result<Vec<SignMatrix>> {
        let d: usize = shapes.iter().map(LayerShape::len).sum();
        let mut stream = seed.stream(d);
        shapes
            .iter()
            .map(|s| {
                let signs: Vec<f64> = stream.by_ref().take(s.len()).collect();
                SignMatrix::from_signs(s.rows, s.cols, &signs)
            })
            .collect()
    }

    /// Sign block of layer `layer` within direction `seed`.
    pub fn carve(seed: DirectionSeed, shapes: &[LayerShape], layer: usize) -> Result<SignMatrix> {
        if layer >= shapes.len() {
            return Err(FzooError::invalid(format!(
                "layer {layer} out of range for {} layers",
                shapes.len()
            )));
        }
        Self::carve_all(seed, &shapes[..=layer]).map(|mut v| v.pop().expect("non-empty"))
    }
}

/// `S·Y` by signed accumulation, row-major, with no multiplications.
pub fn sign_product(signs: &SignMatrix, y: &Matrix) -> Result<Matrix> {
    if signs.cols != y.rows() {
        return Err(FzooError::invalid(format!(
            "cannot multiply {}x{} sign matrix by {}x{}",
            signs.rows,
            signs.cols,
            y.rows(),
            y.cols()
        )));
    }
    let width = y.cols();
    let mut out = Matrix::zeros(signs.rows, width);
    for r in 0..signs.rows {
        let bits = &signs.positive[r * signs.cols..(r + 1) * signs.cols];
        let acc = &mut out.data_mut()[r * width..(r + 1) * width];
        for (k, &pos) in bits.iter().enumerate() {
            let y_row = y.row(k);
            if pos {
                for (a, &v) in acc.iter_mut().zip(y_row) {
                    *a += v;
                }
            } else {
                for (a, &v) in acc.iter_mut().zip(y_row) {
                    *a -= v;
                }
            }
        }
    }
    Ok(out)
}

/// Final-layer outputs of the `N` perturbed models, one slice per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedActivations {
    slices: Vec<Matrix>,
}

impl BatchedActivations {
    pub fn directions(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, i: usize) -> &Matrix {
        &self.slices[i]
    }

    pub fn slices(&self) -> &[Matrix] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<Matrix> {
        self.slices
    }
}

fn check_perturbation(seeds: &[DirectionSeed], eps: f64) -> Result<()> {
    if seeds.is_empty() {
        return Err(FzooError::invalid("at least one direction seed is required"));
    }
    if !eps.is_finite() || eps < 0.0 {
        return Err(FzooError::invalid(format!("perturbation scale {eps} must be finite and >= 0")));
    }
    Ok(())
}

/// Perturb, forward, restore; one direction at a time.
pub fn sequential_perturbed_forward(
    stack: &LayerStack,
    x: &Matrix,
    seeds: &[DirectionSeed],
    eps: f64,
) -> Result<Vec<Matrix>> {
    check_perturbation(seeds, eps)?;
    stack.check_input(x)?;
    let arch = stack.architecture();
    let mut params = stack.to_params();
    let mut outputs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        params.perturb_in_place(seed, eps)?;
        let result = arch.build(&params).and_then(|s| s.forward(x));
        params.perturb_in_place(seed, -eps)?;
        outputs.push(result?);
    }
    Ok(outputs)
}

/// All `N` perturbed forwards with the clean products shared per layer.
pub fn batched_perturbed_forward(
    stack: &LayerStack,
    x: &Matrix,
    seeds: &[DirectionSeed],
    eps: f64,
) -> Result<BatchedActivations> {
    check_perturbation(seeds, eps)?;
    stack.check_input(x)?;
    let shapes = stack.architecture().param_shapes();
    let signs: Vec<Vec<SignMatrix>> = seeds
        .par_iter()
        .map(|&s| SignMatrix::carve_all(s, &shapes))
        .collect::<Result<_>>()?;

    let batch = x.cols();
    let layers = stack.layers();

    // first layer: F = W·X is shared by every direction
    let x_aug = x.with_ones_row();
    let shared = layers[0].weight.matmul(&x_aug)?;
    let mut current: Vec<Matrix> = signs
        .par_iter()
        .map(|s| {
            let mut y = shared.clone();
            add_scaled(&mut y, &sign_product(&s[0], &x_aug)?, eps);
            layers[0].activation.apply_all(&mut y);
            Ok(y)
        })
        .collect::<Result<_>>()?;

    for (j, layer) in layers.iter().enumerate().skip(1) {
        let augmented: Vec<Matrix> = current.iter().map(Matrix::with_ones_row).collect();
        // one clean product over the directions stacked along the batch axis
        let clean = layer.weight.matmul(&Matrix::hstack(&augmented)?)?;
        current = signs
            .par_iter()
            .zip(augmented.par_iter())
            .enumerate()
            .map(|(i, (s, y_aug))| {
                let mut y = clean.column_block(i * batch, batch);
                add_scaled(&mut y, &sign_product(&s[j], y_aug)?, eps);
                layer.activation.apply_all(&mut y);
                Ok(y)
            })
            .collect::<Result<_>>()?;
    }
    Ok(BatchedActivations { slices: current })
}

fn add_scaled(target: &mut Matrix, m: &Matrix, scale: f64) {
    for (t, v) in target.data_mut().iter_mut().zip(m.data()) {
        *t += scale * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::generate_direction;

    fn identity_stack() -> LayerStack {
        // W = I₂ with zero bias
        let w = Matrix::from_vec(2, 3, vec![1., 0., 0., 0., 1., 0.]).unwrap();
        LayerStack::new(vec![Layer {
            weight: w,
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn layer_chain_validated() {
        let a = Layer {
            weight: Matrix::zeros(3, 3),
            activation: Activation::Tanh,
        };
        let bad = Layer {
            weight: Matrix::zeros(1, 3),
            activation: Activation::Identity,
        };
        assert!(LayerStack::new(vec![a.clone(), bad]).is_err());
        let good = Layer {
            weight: Matrix::zeros(1, 4),
            activation: Activation::Identity,
        };
        let s = LayerStack::new(vec![a, good]).unwrap();
        assert_eq!((s.input_dim(), s.output_dim()), (2, 1));
    }

    #[test]
    fn hand_checked_single_layer() {
        let stack = identity_stack();
        let x = Matrix::from_vec(2, 1, vec![1., 0.]).unwrap();
        let seed = DirectionSeed::rademacher(5);
        let u = generate_direction(seed, 6).unwrap();
        let eps = 0.25;
        let out = &sequential_perturbed_forward(&stack, &x, &[seed], eps).unwrap()[0];
        // y_r = δ_r0 + ε·(S[r,0]·1 + S[r,1]·0 + S[r,2]·1)
        for r in 0..2 {
            let expect = if r == 0 { 1.0 } else { 0.0 } + eps * (u[r * 3] + u[r * 3 + 2]);
            assert!((out.get(r, 0) - expect).abs() < 1e-15);
        }
        let batched = batched_perturbed_forward(&stack, &x, &[seed], eps).unwrap();
        assert!(batched.slice(0).max_abs_diff(out) < 1e-15);
    }

    #[test]
    fn zero_eps_matches_clean_forward() {
        let stack = identity_stack();
        let x = Matrix::from_vec(2, 3, vec![1., 2., 3., -1., 0.5, 0.]).unwrap();
        let clean = stack.forward(&x).unwrap();
        let seeds: Vec<_> = (0..4).map(DirectionSeed::rademacher).collect();
        for out in sequential_perturbed_forward(&stack, &x, &seeds, 0.0).unwrap() {
            assert!(out.max_abs_diff(&clean) <= 1e-12);
        }
        for out in batched_perturbed_forward(&stack, &x, &seeds, 0.0).unwrap().slices() {
            assert!(out.max_abs_diff(&clean) <= 1e-12);
        }
    }

    #[test]
    fn input_mismatch_rejected() {
        let stack = identity_stack();
        let x = Matrix::zeros(3, 1);
        let seeds = [DirectionSeed::rademacher(0)];
        assert!(sequential_perturbed_forward(&stack, &x, &seeds, 0.1).is_err());
        assert!(batched_perturbed_forward(&stack, &x, &seeds, 0.1).is_err());
        assert!(batched_perturbed_forward(&stack, &Matrix::zeros(2, 1), &[], 0.1).is_err());
    }

    #[test]
    fn all_positive_signs_sum_rows() {
        let s = SignMatrix::from_signs(2, 3, &[1.0; 6]).unwrap();
        let y = Matrix::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let p = sign_product(&s, &y).unwrap();
        assert_eq!(p.data(), &[9., 12., 9., 12.]);
    }

    #[test]
    fn negated_signs_negate_exactly() {
        let s = SignMatrix::carve(DirectionSeed::rademacher(3), &[LayerShape::new("w", 3, 4)], 0)
            .unwrap();
        let y = Matrix::from_fn(4, 5, |r, c| (r as f64 + 0.3).sin() * (c as f64 - 1.7));
        let a = sign_product(&s, &y).unwrap();
        let b = sign_product(&s.negated(), &y).unwrap();
        for (x, z) in a.data().iter().zip(b.data()) {
            assert_eq!(*x, -*z);
        }
        assert!(sign_product(&s, &Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn carve_matches_flat_direction() {
        let shapes = vec![LayerShape::new("a", 2, 3), LayerShape::new("b", 1, 3)];
        let seed = DirectionSeed::rademacher(77);
        let u = generate_direction(seed, 9).unwrap();
        let blocks = SignMatrix::carve_all(seed, &shapes).unwrap();
        assert_eq!(blocks[0].to_dense().data(), &u[..6]);
        assert_eq!(blocks[1].to_dense().data(), &u[6..]);
        assert_eq!(SignMatrix::carve(seed, &shapes, 1).unwrap(), blocks[1]);
    }
}
