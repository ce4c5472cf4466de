//! Zeroth-order gradient statistics from loss queries.
//!
//! For base loss `l₀` and perturbed losses `l_i = L(θ + ε·u_i)`, the
//! one-sided estimate is `g = (1/(εN))·Σ (l_i − l₀)·u_i` and `σ` is the
//! Bessel-corrected standard deviation of `l_1..l_N` (never `l₀`). The
//! optimizers consume the seed form of the update: per-direction scalars
//! `(l_i − l₀)/(N·σ)`, which applied against regenerated `u_i` move θ by
//! `η·ε·g/σ`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{FzooError, Result};
use crate::forward_engine::batched_perturbed_forward;
use crate::objectives::{BatchSpec, Objective};
use crate::perturbation::{generate_direction, DirectionSeed, ParamVector};

/// Below this the loss spread is treated as zero and clamped.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Perturb, evaluate and restore one direction at a time.
    #[default]
    Sequential,
    /// Shared clean products with per-direction sign corrections. Falls back
    /// to the sequential path for objectives that are not layered.
    Batched,
}

/// Losses of one mini-batch at θ and at `θ + ε·u_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossQueryResult {
    pub base_loss: f64,
    pub perturbed_losses: Vec<f64>,
    pub seeds: Vec<DirectionSeed>,
    pub eps: f64,
    pub dim: usize,
    pub forward_passes: usize,
}

impl LossQueryResult {
    pub fn directions(&self) -> usize {
        self.perturbed_losses.len()
    }

    /// Standard deviation of the perturbed losses.
    pub fn sigma(&self) -> Result<f64> {
        sigma_of(&self.perturbed_losses)
    }

    fn validate(&self) -> Result<()> {
        let n = self.perturbed_losses.len();
        if n == 0 || n != self.seeds.len() {
            return Err(FzooError::invalid(format!(
                "{n} losses for {} seeds",
                self.seeds.len()
            )));
        }
        if !self.base_loss.is_finite() {
            return Err(FzooError::NonFiniteLoss { at: "base".into() });
        }
        if let Some(i) = self.perturbed_losses.iter().position(|l| !l.is_finite()) {
            return Err(FzooError::NonFiniteLoss {
                at: format!("direction {i}"),
            });
        }
        Ok(())
    }
}

/// Output of [`fzoo_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FzooEstimate {
    pub projected_grads: Vec<f64>,
    pub sigma: f64,
    /// σ fell below [`SIGMA_FLOOR`] and was clamped.
    pub degenerate: bool,
    pub forward_passes: usize,
}

/// Two-sided Gaussian estimate `((L(θ+εz) − L(θ−εz))/(2ε))·z` in seed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalEstimate {
    pub seed: DirectionSeed,
    /// The scalar multiplying `z`.
    pub projected_grad: f64,
    pub loss_plus: f64,
    pub loss_minus: f64,
    pub dim: usize,
    pub forward_passes: usize,
}

impl ClassicalEstimate {
    pub fn dense(&self) -> Result<Vec<f64>> {
        let mut z = generate_direction(self.seed, self.dim)?;
        z.iter_mut().for_each(|v| *v *= self.projected_grad);
        Ok(z)
    }
}

fn evaluate_finite(
    objective: &dyn Objective,
    theta: &ParamVector,
    batch: &BatchSpec,
    at: &str,
) -> Result<f64> {
    let l = objective.evaluate(theta, batch)?;
    if l.is_finite() {
        Ok(l)
    } else {
        Err(FzooError::NonFiniteLoss { at: at.into() })
    }
}

pub fn classical_zo_gradient(
    objective: &dyn Objective,
    theta: &mut ParamVector,
    batch: &BatchSpec,
    seed: DirectionSeed,
    eps: f64,
) -> Result<ClassicalEstimate> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(FzooError::invalid(format!("perturbation scale {eps} must be > 0")));
    }
    theta.perturb_in_place(seed, eps)?;
    let plus = evaluate_finite(objective, theta, batch, "θ+εz");
    theta.perturb_in_place(seed, -2.0 * eps)?;
    let minus = evaluate_finite(objective, theta, batch, "θ-εz");
    theta.perturb_in_place(seed, eps)?;
    let (loss_plus, loss_minus) = (plus?, minus?);
    Ok(ClassicalEstimate {
        seed,
        projected_grad: (loss_plus - loss_minus) / (2.0 * eps),
        loss_plus,
        loss_minus,
        dim: theta.dim(),
        forward_passes: 2,
    })
}

/// Evaluates `l₀` and `l_1..l_N` on one batch. θ is restored afterwards by
/// regenerate-and-subtract, so it may differ from its input by rounding.
pub fn query_losses(
    objective: &dyn Objective,
    theta: &mut ParamVector,
    batch: &BatchSpec,
    seeds: &[DirectionSeed],
    eps: f64,
    engine: Engine,
) -> Result<LossQueryResult> {
    if seeds.is_empty() {
        return Err(FzooError::invalid("at least one direction is required"));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(FzooError::invalid(format!("perturbation scale {eps} must be >= 0")));
    }
    let base_loss = evaluate_finite(objective, theta, batch, "base")?;
    let perturbed_losses = match (engine, objective.layered()) {
        (Engine::Batched, Some(model)) => {
            let stack = model.architecture().build(theta)?;
            let x = model.inputs(batch)?;
            let outputs = batched_perturbed_forward(&stack, &x, seeds, eps)?;
            outputs
                .slices()
                .iter()
                .enumerate()
                .map(|(i, out)| {
                    let l = model
                        .loss_from_outputs(out, batch)
                        .map_err(|e| FzooError::DirectionFailed {
                            index: i,
                            source: Box::new(e),
                        })?;
                    finite_or(i, l)
                })
                .collect::<Result<Vec<_>>>()?
        }
        _ => {
            let mut losses = Vec::with_capacity(seeds.len());
            for (i, &seed) in seeds.iter().enumerate() {
                theta.perturb_in_place(seed, eps)?;
                let l = objective.evaluate(theta, batch);
                theta.perturb_in_place(seed, -eps)?;
                let l = l.map_err(|e| FzooError::DirectionFailed {
                    index: i,
                    source: Box::new(e),
                })?;
                losses.push(finite_or(i, l)?);
            }
            losses
        }
    };
    Ok(LossQueryResult {
        base_loss,
        forward_passes: seeds.len() + 1,
        perturbed_losses,
        seeds: seeds.to_vec(),
        eps,
        dim: theta.dim(),
    })
}

fn finite_or(index: usize, l: f64) -> Result<f64> {
    if l.is_finite() {
        Ok(l)
    } else {
        Err(FzooError::DirectionFailed {
            index,
            source: Box::new(FzooError::NonFiniteLoss {
                at: format!("direction {index}"),
            }),
        })
    }
}

/// Bessel-corrected sample standard deviation, two-pass centered.
pub fn sigma_of(losses: &[f64]) -> Result<f64> {
    let n = losses.len();
    if n < 2 {
        return Err(FzooError::invalid(format!(
            "standard deviation needs at least 2 losses, got {n}"
        )));
    }
    let mean = losses.iter().sum::<f64>() / n as f64;
    let ss: f64 = losses.iter().map(|l| (l - mean) * (l - mean)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Projected gradients `(l_i − l₀)/(N·σ)`.
pub fn fzoo_estimate(query: &LossQueryResult, sigma_override: Option<f64>) -> Result<FzooEstimate> {
    query.validate()?;
    let n = query.directions();
    let raw = match sigma_override {
        Some(s) if s >= 0.0 && s.is_finite() => s,
        Some(s) => return Err(FzooError::invalid(format!("sigma override {s} must be >= 0"))),
        None => sigma_of(&query.perturbed_losses)?,
    };
    let degenerate = raw < SIGMA_FLOOR;
    if degenerate {
        warn!("loss spread {raw:e} below floor; clamping sigma to {SIGMA_FLOOR:e}");
    }
    let sigma = raw.max(SIGMA_FLOOR);
    let denom = n as f64 * sigma;
    Ok(FzooEstimate {
        projected_grads: query
            .perturbed_losses
            .iter()
            .map(|l| (l - query.base_loss) / denom)
            .collect(),
        sigma,
        degenerate,
        forward_passes: n + 1,
    })
}

/// Dense one-sided estimate `g = (1/(εN))·Σ (l_i − l₀)·u_i`.
pub fn reconstruct_g(query: &LossQueryResult) -> Result<Vec<f64>> {
    query.validate()?;
    if !(query.eps > 0.0) {
        return Err(FzooError::invalid("reconstruction needs eps > 0"));
    }
    let scale = 1.0 / (query.eps * query.directions() as f64);
    let mut g = vec![0.0; query.dim];
    for (&seed, &l) in query.seeds.iter().zip(&query.perturbed_losses) {
        let c = (l - query.base_loss) * scale;
        for (gv, u) in g.iter_mut().zip(seed.stream(query.dim)) {
            *gv += c * u;
        }
    }
    Ok(g)
}
