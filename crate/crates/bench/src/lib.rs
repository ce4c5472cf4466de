//! Fixtures shared by the criterion benches.

use fzoo::forward_engine::{Activation, Architecture, LayerStack};
use fzoo::{DirectionSeed, Matrix, ParamVector};

/// A tanh stack `input → hidden → hidden → output` with deterministic weights.
pub fn tanh_stack(input: usize, hidden: usize, output: usize) -> LayerStack {
    let arch = Architecture::new(
        input,
        vec![
            (hidden, Activation::Tanh),
            (hidden, Activation::Tanh),
            (output, Activation::Identity),
        ],
    )
    .expect("valid architecture");
    let d = arch.param_count();
    let values: Vec<f64> = (0..d).map(|i| ((i * 7919) % 997) as f64 / 997.0 - 0.5).collect();
    let params = ParamVector::new(values, arch.param_shapes()).expect("finite parameters");
    arch.build(&params).expect("matching shapes")
}

pub fn inputs(features: usize, batch: usize) -> Matrix {
    Matrix::from_fn(features, batch, |r, c| ((r * 31 + c * 17) % 13) as f64 / 13.0 - 0.5)
}

pub fn seeds(n: usize) -> Vec<DirectionSeed> {
    (0..n as u64).map(|i| DirectionSeed::rademacher(1000 + i)).collect()
}
