//! Seeded perturbation directions and in-place parameter updates.
//!
//! Every direction is a pure function of `(seed, kind, d)`. The generator is
//! ChaCha8 from `rand_chacha` 0.3, keyed through `SeedableRng::seed_from_u64`;
//! both the key expansion and the ChaCha block function are value-stable for
//! that release line, so regenerated directions are bit-identical across
//! runs and platforms. Rademacher entries consume one bit each from
//! successive 64-bit words, least significant bit first, with bit 1 mapping
//! to `+1`. Gaussian entries are `rand_distr::StandardNormal` draws.
//!
//! Directions are never stored by the optimizers. Perturbing, restoring and
//! updating all regenerate the direction from its seed while streaming over
//! the parameters, so memory stays at one parameter vector.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FzooError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DirectionKind {
    Rademacher,
    Gaussian,
}

/// Seed of one perturbation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DirectionSeed {
    pub seed: u64,
    pub kind: DirectionKind,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a sequence of words into one well-mixed 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6a09_e667_f3bc_c908, |acc, &p| {
        mix64(acc.wrapping_add(GOLDEN_GAMMA) ^ mix64(p.wrapping_add(GOLDEN_GAMMA)))
    })
}

impl DirectionSeed {
    pub fn new(seed: u64, kind: DirectionKind) -> Self {
        DirectionSeed { seed, kind }
    }

    pub fn rademacher(seed: u64) -> Self {
        Self::new(seed, DirectionKind::Rademacher)
    }

    pub fn gaussian(seed: u64) -> Self {
        Self::new(seed, DirectionKind::Gaussian)
    }

    /// Seed of direction `index` at optimizer step `step` of run `run_seed`.
    pub fn derive(run_seed: u64, step: u64, index: u64, kind: DirectionKind) -> Self {
        let tag = match kind {
            DirectionKind::Rademacher => 0x5241_4445,
            DirectionKind::Gaussian => 0x4741_5553,
        };
        Self::new(derive_seed(&[run_seed, step, index, tag]), kind)
    }

    /// Streams the `d` entries of this direction.
    pub fn stream(&self, d: usize) -> DirectionStream {
        DirectionStream::new(*self, d)
    }
}

/// Draws Rademacher signs one bit at a time from an arbitrary generator.
#[derive(Debug)]
pub struct SignBits<R> {
    rng: R,
    word: u64,
    left: u32,
}

impl<R: RngCore> SignBits<R> {
    pub fn new(rng: R) -> Self {
        SignBits {
            rng,
            word: 0,
            left: 0,
        }
    }

    #[inline]
    pub fn next_sign(&mut self) -> f64 {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let bit = self.word & 1;
        self.word >>= 1;
        self.left -= 1;
        if bit == 1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_sign();
        }
    }
}

enum Source {
    Signs(SignBits<ChaCha8Rng>),
    Normal(ChaCha8Rng),
}

/// Iterator over the entries of a regenerated direction.
pub struct DirectionStream {
    source: Source,
    remaining: usize,
}

impl DirectionStream {
    fn new(seed: DirectionSeed, d: usize) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(seed.seed);
        let source = match seed.kind {
            DirectionKind::Rademacher => Source::Signs(SignBits::new(rng)),
            DirectionKind::Gaussian => Source::Normal(rng),
        };
        DirectionStream {
            source,
            remaining: d,
        }
    }
}

impl Iterator for DirectionStream {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(match &mut self.source {
            Source::Signs(bits) => bits.next_sign(),
            Source::Normal(rng) => StandardNormal.sample(rng),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for DirectionStream {}

/// Materializes the direction for `seed` in dimension `d`.
pub fn generate_direction(seed: DirectionSeed, d: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(FzooError::InvalidDimension(
            "direction dimension must be at least 1".into(),
        ));
    }
    Ok(seed.stream(d).collect())
}

/// Shape of one named block of the flat parameter vector, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        LayerShape {
            name: name.into(),
            rows,
            cols,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat trainable parameter vector with layer-shape metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    shapes: Vec<LayerShape>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, shapes: Vec<LayerShape>) -> Result<Self> {
        if values.is_empty() {
            return Err(FzooError::InvalidDimension(
                "parameter vector must be non-empty".into(),
            ));
        }
        let total: usize = shapes.iter().map(LayerShape::len).sum();
        if total != values.len() || shapes.iter().any(LayerShape::is_empty) {
            return Err(FzooError::InvalidDimension(format!(
                "shapes cover {total} entries but the vector has {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FzooError::invalid(format!("parameter {i} is not finite")));
        }
        Ok(ParamVector { values, shapes })
    }

    /// A single-block vector named `theta`.
    pub fn flat(values: Vec<f64>) -> Result<Self> {
        let d = values.len();
        Self::new(values, vec![LayerShape::new("theta", d, 1)])
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::flat(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Offsets of each shape block, in order.
    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.shapes
            .iter()
            .map(|s| {
                let r = start..start + s.len();
                start = r.end;
                r
            })
            .collect()
    }

    /// Overwrites all values, keeping the shapes. Used by first-order steps.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(FzooError::InvalidDimension(format!(
                "expected {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FzooError::invalid("update produced non-finite parameters"));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    /// `θ ← θ + scale·u(seed)`.
    pub fn perturb_in_place(&mut self, seed: DirectionSeed, scale: f64) -> Result<()> {
        if !scale.is_finite() {
            return Err(FzooError::invalid(format!(
                "perturbation scale {scale} is not finite"
            )));
        }
        if scale == 0.0 {
            return Ok(());
        }
        let d = self.values.len();
        for (v, u) in self.values.iter_mut().zip(seed.stream(d)) {
            *v += scale * u;
        }
        self.check_finite("perturbation")
    }

    /// `θ ← θ − Σ coefficients[k]·u(seeds[k])`, regenerating each direction.
    pub fn apply_update_from_seeds(
        &mut self,
        seeds: &[DirectionSeed],
        coefficients: &[f64],
    ) -> Result<()> {
        if seeds.len() != coefficients.len() {
            return Err(FzooError::invalid(format!(
                "{} seeds but {} coefficients",
                seeds.len(),
                coefficients.len()
            )));
        }
        if seeds.is_empty() {
            return Err(FzooError::invalid("update needs at least one direction"));
        }
        if let Some(c) = coefficients.iter().find(|c| !c.is_finite()) {
            return Err(FzooError::invalid(format!("update coefficient {c} is not finite")));
        }
        let d = self.values.len();
        for (seed, &c) in seeds.iter().zip(coefficients) {
            if c == 0.0 {
                continue;
            }
            for (v, u) in self.values.iter_mut().zip(seed.stream(d)) {
                *v -= c * u;
            }
        }
        self.check_finite("update")
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(FzooError::invalid(format!(
                "{what} made parameter {i} non-finite"
            ))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_is_deterministic() {
        let s = DirectionSeed::rademacher(42);
        assert_eq!(generate_direction(s, 5).unwrap(), generate_direction(s, 5).unwrap());
        let g = DirectionSeed::gaussian(42);
        let a = generate_direction(g, 7).unwrap();
        let b = generate_direction(g, 7).unwrap();
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn prefix_stable_across_lengths() {
        let s = DirectionSeed::rademacher(9);
        let short = generate_direction(s, 10).unwrap();
        let long = generate_direction(s, 200).unwrap();
        assert_eq!(short[..], long[..10]);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            generate_direction(DirectionSeed::rademacher(1), 0),
            Err(FzooError::InvalidDimension(_))
        ));
    }

    #[test]
    fn rademacher_entries_are_signs_with_small_mean() {
        let d = 10_000;
        for seed in [0u64, 1, 17, 123_456] {
            let u = generate_direction(DirectionSeed::rademacher(seed), d).unwrap();
            assert!(u.iter().all(|&x| x == 1.0 || x == -1.0));
            let mean = u.iter().sum::<f64>() / d as f64;
            assert!(mean.abs() <= 4.0 / (d as f64).sqrt(), "mean {mean}");
        }
    }

    #[test]
    fn gaussian_sample_variance() {
        let u = generate_direction(DirectionSeed::gaussian(7), 100_000).unwrap();
        let n = u.len() as f64;
        let mean = u.iter().sum::<f64>() / n;
        let var = u.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((0.97..=1.03).contains(&var), "variance {var}");
    }

    #[test]
    fn derived_seeds_differ() {
        let a = DirectionSeed::derive(1, 0, 0, DirectionKind::Rademacher);
        let b = DirectionSeed::derive(1, 0, 1, DirectionKind::Rademacher);
        let c = DirectionSeed::derive(1, 1, 0, DirectionKind::Rademacher);
        let g = DirectionSeed::derive(1, 0, 0, DirectionKind::Gaussian);
        assert_ne!(a.seed, b.seed);
        assert_ne!(a.seed, c.seed);
        assert_ne!(a.seed, g.seed);
    }

    #[test]
    fn zero_scale_is_bitwise_noop() {
        let mut p = ParamVector::flat(vec![0.1, -2.5, 3.25]).unwrap();
        let before = p.clone();
        p.perturb_in_place(DirectionSeed::rademacher(3), 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_scale_rejected() {
        let mut p = ParamVector::zeros(3).unwrap();
        assert!(p.perturb_in_place(DirectionSeed::rademacher(3), f64::NAN).is_err());
        assert!(p
            .perturb_in_place(DirectionSeed::rademacher(3), f64::INFINITY)
            .is_err());
    }

    #[test]
    fn perturb_matches_definition() {
        // find a seed whose first two signs are (+1, -1)
        let seed = (0..)
            .map(DirectionSeed::rademacher)
            .find(|s| generate_direction(*s, 2).unwrap() == [1.0, -1.0])
            .unwrap();
        let mut p = ParamVector::zeros(2).unwrap();
        p.perturb_in_place(seed, 0.5).unwrap();
        assert_eq!(p.values(), &[0.5, -0.5]);
    }

    #[test]
    fn update_with_zero_coefficients_is_noop() {
        let mut p = ParamVector::flat(vec![1.0, 2.0, 3.0]).unwrap();
        let before = p.clone();
        let seeds = [DirectionSeed::rademacher(1), DirectionSeed::rademacher(2)];
        p.apply_update_from_seeds(&seeds, &[0.0, 0.0]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn update_length_mismatch() {
        let mut p = ParamVector::zeros(3).unwrap();
        let seeds = [DirectionSeed::rademacher(1)];
        assert!(matches!(
            p.apply_update_from_seeds(&seeds, &[1.0, 2.0]),
            Err(FzooError::InvalidArgument(_))
        ));
    }

    #[test]
    fn update_roundtrip_drift() {
        let mut p = ParamVector::flat(vec![0.3, -1.7, 1e3, 5e-4]).unwrap();
        let before = p.values().to_vec();
        let seeds = [DirectionSeed::gaussian(11)];
        p.apply_update_from_seeds(&seeds, &[0.37]).unwrap();
        p.apply_update_from_seeds(&seeds, &[-0.37]).unwrap();
        for (a, b) in p.values().iter().zip(&before) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn opposite_directions_cancel() {
        let d = 4;
        let first = DirectionSeed::rademacher(0);
        let u1 = generate_direction(first, d).unwrap();
        let second = (1..)
            .map(DirectionSeed::rademacher)
            .find(|s| {
                let u2 = generate_direction(*s, d).unwrap();
                u1.iter().zip(&u2).all(|(a, b)| *a == -*b)
            })
            .unwrap();
        let theta = vec![0.25, -1.5, 2.0, 7.0];
        let mut p = ParamVector::flat(theta.clone()).unwrap();
        p.apply_update_from_seeds(&[first, second], &[0.8, 0.8]).unwrap();

        // dense oracle
        let u2 = generate_direction(second, d).unwrap();
        let dense: Vec<f64> = (0..d).map(|i| theta[i] - 0.8 * u1[i] - 0.8 * u2[i]).collect();
        for ((a, b), t) in p.values().iter().zip(&dense).zip(&theta) {
            assert!((a - t).abs() <= 1e-15 * t.abs().max(1.0));
            assert!((a - b).abs() <= 1e-15 * t.abs().max(1.0));
        }
    }

    #[test]
    fn param_vector_validation() {
        assert!(ParamVector::flat(vec![]).is_err());
        assert!(ParamVector::flat(vec![1.0, f64::NAN]).is_err());
        assert!(ParamVector::new(vec![0.0; 5], vec![LayerShape::new("w", 2, 2)]).is_err());
        let p = ParamVector::new(
            vec![0.0; 7],
            vec![LayerShape::new("w", 2, 3), LayerShape::new("b", 1, 1)],
        )
        .unwrap();
        assert_eq!(p.block_ranges(), vec![0..6, 6..7]);
    }
}
