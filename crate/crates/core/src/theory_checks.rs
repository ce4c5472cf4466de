//! Monte Carlo checks of the Rademacher moment identities behind the
//! one-sided estimator and its σ normalization.
//!
//! Samples are drawn in fixed-size chunks, each from its own seeded stream;
//! chunks run in parallel and their moments are merged in chunk order, so a
//! report depends only on `(seed, samples)` and never on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FzooError, Result};
use crate::estimators::sigma_of;
use crate::forward_engine::{
    batched_perturbed_forward, sequential_perturbed_forward, Activation, Architecture,
};
use crate::matrix::Matrix;
use crate::objectives::Objective;
use crate::perturbation::{derive_seed, DirectionKind, DirectionSeed, ParamVector, SignBits};

/// A check never passes on fewer samples than this.
pub const MIN_SAMPLES: usize = 10_000;
/// Relative tolerance floor applied on top of `3·SE`.
pub const DEFAULT_REL_TOL: f64 = 0.02;
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl std::fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheckReport {
    pub name: String,
    pub theoretical: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub samples: usize,
    pub rel_tolerance: f64,
    pub status: CheckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl MomentCheckReport {
    /// Compares `empirical ± SE` against `theoretical`: passes within
    /// `max(rel_tolerance·|theoretical|, 3·SE)`, or within `3·SE` when the
    /// theoretical value is zero.
    pub fn compare(
        name: impl Into<String>,
        theoretical: f64,
        empirical: f64,
        std_error: f64,
        samples: usize,
        rel_tolerance: f64,
    ) -> Self {
        let gap = (empirical - theoretical).abs();
        let allowed = if theoretical == 0.0 {
            3.0 * std_error
        } else {
            (rel_tolerance * theoretical.abs()).max(3.0 * std_error)
        };
        let (status, note) = if samples < MIN_SAMPLES {
            (CheckStatus::Fail, Some(format!("fewer than {MIN_SAMPLES} samples")))
        } else if gap <= allowed {
            (CheckStatus::Pass, None)
        } else {
            (CheckStatus::Fail, None)
        };
        MomentCheckReport {
            name: name.into(),
            theoretical,
            empirical,
            std_error,
            samples,
            rel_tolerance,
            status,
            note,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    pub fn relative_error(&self) -> f64 {
        if self.theoretical == 0.0 {
            (self.empirical - self.theoretical).abs()
        } else {
            ((self.empirical - self.theoretical) / self.theoretical).abs()
        }
    }

    fn inconclusive(mut self, why: impl Into<String>) -> Self {
        self.status = CheckStatus::Inconclusive;
        self.note = Some(why.into());
        self
    }
}

/// Running mean/variance for several statistics at once, mergeable in order.
#[derive(Debug, Clone)]
struct Moments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Moments {
            n: 0,
            mean: vec![0.0; k],
            m2: vec![0.0; k],
        }
    }

    fn push(&mut self, xs: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(xs) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }

    fn merge(mut self, other: &Moments) -> Self {
        if other.n == 0 {
            return self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.n += other.n;
        self
    }

    fn variance(&self, i: usize) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2[i] / (self.n - 1) as f64
        }
    }

    fn std_error(&self, i: usize) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        (self.variance(i) / self.n as f64).sqrt()
    }

    /// Sample covariance of statistics `i` and `j` is not tracked, so the
    /// ratio SE uses the delta method under independence; conservative when
    /// the two are positively correlated.
    fn ratio_std_error(&self, i: usize, j: usize) -> f64 {
        let r = self.mean[i] / self.mean[j];
        let ri = self.std_error(i) / self.mean[i];
        let rj = self.std_error(j) / self.mean[j];
        r.abs() * (ri * ri + rj * rj).sqrt()
    }
}

/// Runs `per_sample` over `samples` draws, each handed a Rademacher bit
/// source, and returns the merged moments of the `k` statistics it emits.
fn monte_carlo<F>(samples: usize, seed: u64, k: usize, per_sample: F) -> Moments
where
    F: Fn(&mut SignBits<ChaCha8Rng>, &mut [f64]) + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut bits = SignBits::new(ChaCha8Rng::seed_from_u64(derive_seed(&[seed, c as u64])));
            let mut m = Moments::new(k);
            let mut out = vec![0.0; k];
            for _ in 0..CHUNK.min(samples - c * CHUNK) {
                per_sample(&mut bits, &mut out);
                m.push(&out);
            }
            m
        })
        .collect();
    partial.iter().fold(Moments::new(k), |acc, m| acc.merge(m))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `E‖Σ_i u_i u_iᵀ x‖² = N(N + d − 1)‖x‖²`.
pub fn check_lemma_uut(x: &[f64], n: usize, samples: usize, seed: u64) -> Result<MomentCheckReport> {
    if x.is_empty() || n == 0 {
        return Err(FzooError::invalid("need d >= 1 and N >= 1"));
    }
    let d = x.len();
    let theoretical = (n * (n + d - 1)) as f64 * norm_sq(x);
    let m = monte_carlo(samples, seed, 1, |bits, out| {
        let mut u = vec![0.0; d];
        let mut acc = vec![0.0; d];
        for _ in 0..n {
            bits.fill(&mut u);
            let c = dot(&u, x);
            acc.iter_mut().zip(&u).for_each(|(a, ui)| *a += c * ui);
        }
        out[0] = norm_sq(&acc);
    });
    Ok(MomentCheckReport::compare(
        format!("rademacher_uut d={d} N={n}"),
        theoretical,
        m.mean[0],
        m.std_error(0),
        samples,
        DEFAULT_REL_TOL,
    ))
}

/// `Σ_i E⟨g, u_i − ū⟩² = (N − 1)‖g‖²`.
pub fn check_lemma_centered_inner(
    g: &[f64],
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<MomentCheckReport> {
    if g.is_empty() || n < 2 {
        return Err(FzooError::invalid("need d >= 1 and N >= 2"));
    }
    let d = g.len();
    let theoretical = (n - 1) as f64 * norm_sq(g);
    let m = monte_carlo(samples, seed, 1, |bits, out| {
        let mut u = vec![0.0; d];
        // ⟨g, u_i − ū⟩ = a_i − mean(a)
        let a: Vec<f64> = (0..n)
            .map(|_| {
                bits.fill(&mut u);
                dot(g, &u)
            })
            .collect();
        let mean = a.iter().sum::<f64>() / n as f64;
        out[0] = a.iter().map(|v| (v - mean) * (v - mean)).sum();
    });
    Ok(MomentCheckReport::compare(
        format!("centered_inner d={d} N={n}"),
        theoretical,
        m.mean[0],
        m.std_error(0),
        samples,
        DEFAULT_REL_TOL,
    ))
}

/// σ rule used by the moment check; swappable to mutation-test it.
pub type SigmaFn = fn(&[f64]) -> Result<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposition1Report {
    pub g_norm: MomentCheckReport,
    pub sigma: MomentCheckReport,
    pub ratio: MomentCheckReport,
}

impl Proposition1Report {
    pub fn rows(&self) -> [&MomentCheckReport; 3] {
        [&self.g_norm, &self.sigma, &self.ratio]
    }
}

/// Loss queries at fixed θ for one batch of Rademacher directions.
struct PointQuery<'a> {
    objective: &'a dyn Objective,
    theta: &'a ParamVector,
    base: f64,
    grad: Vec<f64>,
}

impl PointQuery<'_> {
    /// Fills `u` (N×d, row per direction) and returns `l_i − l₀`.
    fn differences(&self, u: &[f64], eps: f64, n: usize, scratch: &mut ParamVector) -> Vec<f64> {
        let d = self.theta.dim();
        (0..n)
            .map(|i| {
                let row = &u[i * d..(i + 1) * d];
                let shifted: Vec<f64> = self
                    .theta
                    .values()
                    .iter()
                    .zip(row)
                    .map(|(t, ui)| t + eps * ui)
                    .collect();
                scratch.set_values(&shifted).expect("finite perturbation");
                let batch = self.objective.full_batch();
                self.objective.evaluate(scratch, &batch).expect("objective evaluates") - self.base
            })
            .collect()
    }
}

fn point_query<'a>(objective: &'a dyn Objective, theta: &'a ParamVector) -> Result<PointQuery<'a>> {
    if !objective.has_gradient() {
        return Err(FzooError::UnsupportedObjective(
            "moment checks need a gradient oracle".into(),
        ));
    }
    let batch = objective.full_batch();
    Ok(PointQuery {
        objective,
        theta,
        base: objective.evaluate(theta, &batch)?,
        grad: objective.gradient(theta, &batch)?,
    })
}

/// Whether `ε·d·𝓛` is small next to `‖∇L‖`; `None` when 𝓛 is unknown.
fn asymptotic_regime(objective: &dyn Objective, eps: f64, d: usize, grad_norm: f64) -> bool {
    objective
        .smoothness()
        .map(|l| eps * d as f64 * l <= 0.1 * grad_norm)
        .unwrap_or(true)
}

pub fn check_proposition1(
    objective: &dyn Objective,
    theta: &ParamVector,
    n: usize,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<Proposition1Report> {
    check_proposition1_with(objective, theta, n, eps, samples, seed, sigma_of)
}

/// Leading-order moments of the one-sided estimate at fixed θ:
/// `E‖g‖² ≈ ((N + d − 1)/N)‖∇L‖²`, `E[σ²] ≈ ε²‖∇L‖²`, and their ratio
/// `(N + d − 1)/(N·ε²)`. Tolerances are 3% for the moments and 5% for the
/// ratio (each floored at `3·SE`).
pub fn check_proposition1_with(
    objective: &dyn Objective,
    theta: &ParamVector,
    n: usize,
    eps: f64,
    samples: usize,
    seed: u64,
    sigma: SigmaFn,
) -> Result<Proposition1Report> {
    if n < 2 || !(eps > 0.0) {
        return Err(FzooError::invalid("need N >= 2 and eps > 0"));
    }
    let q = point_query(objective, theta)?;
    let d = theta.dim();
    let gn2 = norm_sq(&q.grad);
    let m = monte_carlo(samples, seed, 2, |bits, out| {
        let mut u = vec![0.0; n * d];
        bits.fill(&mut u);
        let mut scratch = theta.clone();
        let diffs = q.differences(&u, eps, n, &mut scratch);
        let mut g = vec![0.0; d];
        for (i, &dl) in diffs.iter().enumerate() {
            let c = dl / (eps * n as f64);
            g.iter_mut().zip(&u[i * d..(i + 1) * d]).for_each(|(gv, ui)| *gv += c * ui);
        }
        out[0] = norm_sq(&g);
        // σ² of the losses l_i = l₀ + diff_i
        let losses: Vec<f64> = diffs.iter().map(|dl| q.base + dl).collect();
        out[1] = sigma(&losses).map(|s| s * s).unwrap_or(f64::NAN);
    });
    let g_theory = (n + d - 1) as f64 / n as f64 * gn2;
    let s_theory = eps * eps * gn2;
    let ratio_theory = (n + d - 1) as f64 / (n as f64 * eps * eps);
    let mut reports = Proposition1Report {
        g_norm: MomentCheckReport::compare(
            format!("moments E|g|^2 d={d} N={n} eps={eps:e}"),
            g_theory,
            m.mean[0],
            m.std_error(0),
            samples,
            0.03,
        ),
        sigma: MomentCheckReport::compare(
            format!("moments E[sigma^2] d={d} N={n} eps={eps:e}"),
            s_theory,
            m.mean[1],
            m.std_error(1),
            samples,
            0.03,
        ),
        ratio: MomentCheckReport::compare(
            format!("moments ratio d={d} N={n} eps={eps:e}"),
            ratio_theory,
            m.mean[0] / m.mean[1],
            m.ratio_std_error(0, 1),
            samples,
            0.05,
        ),
    };
    if !asymptotic_regime(objective, eps, d, gn2.sqrt()) {
        let why = "eps·d·L not small against |grad L|";
        reports.g_norm = reports.g_norm.inconclusive(why);
        reports.sigma = reports.sigma.inconclusive(why);
        reports.ratio = reports.ratio.inconclusive(why);
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderPoint {
    pub eps: f64,
    pub g_remainder: f64,
    pub g_std_error: f64,
    pub sigma_remainder: f64,
    pub sigma_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonScalingReport {
    pub points: Vec<RemainderPoint>,
    /// Log-log slope of `|γ(ε)|`; `None` when fewer than two ladder points
    /// rise above the Monte Carlo noise floor.
    pub g_slope: Option<f64>,
    pub sigma_slope: Option<f64>,
    pub samples: usize,
}

impl EpsilonScalingReport {
    pub fn inconclusive(&self) -> bool {
        self.g_slope.is_none() || self.sigma_slope.is_none()
    }
}

/// Measures the remainders `γ(ε) = E‖g‖² − ((N+d−1)/N)‖∇L‖²` and
/// `ζ(ε) = E[σ²] − ε²‖∇L‖²` along a ladder of ε and fits their log-log
/// slopes.
///
/// Each sample subtracts the linearized statistic computed on the same
/// directions (`‖(1/N)Σ u_i u_iᵀ∇L‖²` and `ε²·var(⟨∇L, u_i⟩)`), whose
/// expectations are exactly the leading terms, and pairs every direction
/// batch with its negation. Both are unbiased; they remove the O(1) sampling
/// noise of the leading term and the odd-order terms that vanish in
/// expectation. Every ε uses the same directions.
pub fn check_epsilon_scaling(
    objective: &dyn Objective,
    theta: &ParamVector,
    n: usize,
    ladder: &[f64],
    samples: usize,
    seed: u64,
) -> Result<EpsilonScalingReport> {
    if n < 2 {
        return Err(FzooError::invalid("need N >= 2"));
    }
    if ladder.len() < 4 || ladder.iter().any(|e| !(*e > 0.0)) {
        return Err(FzooError::invalid("need at least 4 positive eps values"));
    }
    let (lo, hi) = ladder
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if hi / lo < 100.0 * (1.0 - 1e-9) {
        return Err(FzooError::invalid("eps ladder must span two decades"));
    }
    let q = point_query(objective, theta)?;
    let d = theta.dim();
    let k = ladder.len();
    let pairs = samples.div_ceil(2);
    let m = monte_carlo(pairs, seed, 2 * k, |bits, out| {
        let mut u = vec![0.0; n * d];
        bits.fill(&mut u);
        let mut scratch = theta.clone();
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        out.iter_mut().for_each(|o| *o = 0.0);
        for dirs in [&u, &neg] {
            let a: Vec<f64> = (0..n).map(|i| dot(&q.grad, &dirs[i * d..(i + 1) * d])).collect();
            let mut lin = vec![0.0; d];
            for (i, &ai) in a.iter().enumerate() {
                lin.iter_mut()
                    .zip(&dirs[i * d..(i + 1) * d])
                    .for_each(|(l, ui)| *l += ai * ui / n as f64);
            }
            let lin_g = norm_sq(&lin);
            let lin_var = sigma_of(&a).expect("N >= 2").powi(2);
            for (j, &eps) in ladder.iter().enumerate() {
                let diffs = q.differences(dirs, eps, n, &mut scratch);
                let mut g = vec![0.0; d];
                for (i, &dl) in diffs.iter().enumerate() {
                    let c = dl / (eps * n as f64);
                    g.iter_mut().zip(&dirs[i * d..(i + 1) * d]).for_each(|(gv, ui)| *gv += c * ui);
                }
                let s2 = sigma_of(&diffs).expect("N >= 2").powi(2);
                out[2 * j] += 0.5 * (norm_sq(&g) - lin_g);
                out[2 * j + 1] += 0.5 * (s2 - eps * eps * lin_var);
            }
        }
    });
    let points: Vec<RemainderPoint> = ladder
        .iter()
        .enumerate()
        .map(|(j, &eps)| RemainderPoint {
            eps,
            g_remainder: m.mean[2 * j],
            g_std_error: m.std_error(2 * j),
            sigma_remainder: m.mean[2 * j + 1],
            sigma_std_error: m.std_error(2 * j + 1),
        })
        .collect();
    let fit = |value: fn(&RemainderPoint) -> (f64, f64)| {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter_map(|p| {
                let (r, se) = value(p);
                (r.abs() > 3.0 * se && r != 0.0).then(|| (p.eps.ln(), r.abs().ln()))
            })
            .collect();
        log_log_slope(&pts)
    };
    Ok(EpsilonScalingReport {
        g_slope: fit(|p| (p.g_remainder, p.g_std_error)),
        sigma_slope: fit(|p| (p.sigma_remainder, p.sigma_std_error)),
        points,
        samples: 2 * pairs,
    })
}

/// Least-squares slope of `y` on `x`; `None` for fewer than two points.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub stacks: usize,
    pub directions: usize,
    /// Largest `max|batched − sequential| / max|sequential|` over all stacks.
    pub max_relative_diff: f64,
    pub tolerance: f64,
    pub status: CheckStatus,
}

/// Compares batched and sequential perturbed forwards on `stacks` random
/// three-layer tanh networks.
pub fn check_forward_equivalence(
    stacks: usize,
    directions: usize,
    eps: f64,
    seed: u64,
) -> Result<EquivalenceReport> {
    if stacks == 0 || directions == 0 {
        return Err(FzooError::invalid("need at least one stack and one direction"));
    }
    let diffs: Vec<f64> = (0..stacks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, k as u64]));
            let dims: Vec<usize> = (0..4).map(|_| rng.gen_range(2..=9)).collect();
            let arch = Architecture::new(
                dims[0],
                dims[1..].iter().map(|&w| (w, Activation::Tanh)).collect(),
            )?;
            let shapes = arch.param_shapes();
            let values: Vec<f64> = shapes
                .iter()
                .flat_map(|s| {
                    let scale = 1.0 / (s.cols as f64).sqrt();
                    (0..s.len())
                        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                        .collect::<Vec<_>>()
                })
                .collect();
            let stack = arch.build(&ParamVector::new(values, shapes)?)?;
            let batch = rng.gen_range(1..=6);
            let x = Matrix::from_fn(dims[0], batch, |_, _| rng.sample(StandardNormal));
            let seeds: Vec<DirectionSeed> = (0..directions as u64)
                .map(|i| DirectionSeed::derive(seed, k as u64, i, DirectionKind::Rademacher))
                .collect();
            let seq = sequential_perturbed_forward(&stack, &x, &seeds, eps)?;
            let bat = batched_perturbed_forward(&stack, &x, &seeds, eps)?;
            Ok(seq
                .iter()
                .zip(bat.slices())
                .map(|(a, b)| a.max_abs_diff(b) / a.max_abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let max_relative_diff = diffs.into_iter().fold(0.0, f64::max);
    let tolerance = 1e-9;
    Ok(EquivalenceReport {
        stacks,
        directions,
        max_relative_diff,
        tolerance,
        status: if max_relative_diff <= tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::linear_objective;

    #[test]
    fn uut_one_dimensional_is_exact() {
        let r = check_lemma_uut(&[1.7], 1, MIN_SAMPLES, 0).unwrap();
        assert_eq!(r.empirical, 1.7 * 1.7);
        assert_eq!(r.std_error, 0.0);
        assert!(r.passed());
    }

    #[test]
    fn zero_vectors_give_zero() {
        let r = check_lemma_uut(&[0.0; 5], 3, MIN_SAMPLES, 1).unwrap();
        assert_eq!((r.theoretical, r.empirical), (0.0, 0.0));
        assert!(r.passed());
        let r = check_lemma_centered_inner(&[0.0; 5], 3, MIN_SAMPLES, 1).unwrap();
        assert_eq!((r.theoretical, r.empirical), (0.0, 0.0));
        assert!(r.passed());
    }

    #[test]
    fn centered_inner_two_directions_one_dimension() {
        // the four sign patterns give g²(u₁ − u₂)²/2 ∈ {0, 2g²}, mean g²
        let r = check_lemma_centered_inner(&[1.5], 2, 40_000, 5).unwrap();
        assert_eq!(r.theoretical, 2.25);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn too_few_samples_never_pass() {
        let r = check_lemma_uut(&[1.0], 1, MIN_SAMPLES - 1, 0).unwrap();
        assert_eq!(r.status, CheckStatus::Fail);
    }

    #[test]
    fn reports_are_deterministic() {
        let x = [0.3, -1.0, 2.0];
        assert_eq!(
            check_lemma_uut(&x, 4, 12_345, 9).unwrap(),
            check_lemma_uut(&x, 4, 12_345, 9).unwrap()
        );
    }

    #[test]
    fn linear_objective_moments_exact_leading_terms() {
        let obj = linear_objective(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let theta = ParamVector::flat(vec![0.1; 4]).unwrap();
        let r = check_proposition1(&obj, &theta, 4, 0.3, 20_000, 2).unwrap();
        for row in r.rows() {
            assert!(row.passed(), "{row:?}");
        }
    }

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut whole = Moments::new(1);
        xs.iter().for_each(|x| whole.push(&[*x]));
        let mut a = Moments::new(1);
        let mut b = Moments::new(1);
        xs[..37].iter().for_each(|x| a.push(&[*x]));
        xs[37..].iter().for_each(|x| b.push(&[*x]));
        let merged = a.merge(&b);
        assert!((merged.mean[0] - whole.mean[0]).abs() < 1e-14);
        assert!((merged.variance(0) - whole.variance(0)).abs() < 1e-13);
    }

    #[test]
    fn batched_forward_matches_sequential() {
        let r = check_forward_equivalence(5, 4, 0.1, 3).unwrap();
        assert_eq!(r.status, CheckStatus::Pass, "{r:?}");
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = [1e-1, 1e-2, 1e-3].iter().map(|e: &f64| (e.ln(), (5.0 * e.powi(3)).ln())).collect();
        assert!((log_log_slope(&pts).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(log_log_slope(&pts[..1]), None);
    }
}
