//! Step procedures and the budgeted run loop.
//!
//! Forward-pass accounting per step: FZOO `N + 1`, FZOO-R `N/2 + 1`, ZO-SGD
//! `2`, and every first-order method `4` forward-equivalents (one forward
//! plus a backward costed as three forwards).

use serde::{Deserialize, Serialize};

use crate::error::{FzooError, Result};
use crate::estimators::{classical_zo_gradient, fzoo_estimate, query_losses, sigma_of, Engine};
use crate::objectives::{sample_batch, BatchSpec, Objective};
use crate::perturbation::{DirectionKind, DirectionSeed, ParamVector};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const FIRST_ORDER_FORWARD_EQUIVALENTS: u64 = 4;
/// Normalized SGD skips the update below this gradient norm.
pub const ZERO_GRADIENT_GUARD: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "FZOO")]
    Fzoo,
    #[serde(rename = "FZOO_R")]
    FzooR,
    #[serde(rename = "ZO_SGD")]
    ZoSgd,
    #[serde(rename = "NORM_SGD")]
    NormSgd,
    #[serde(rename = "SGD")]
    Sgd,
    #[serde(rename = "ADAM")]
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::Fzoo,
        OptimizerKind::FzooR,
        OptimizerKind::ZoSgd,
        OptimizerKind::NormSgd,
        OptimizerKind::Sgd,
        OptimizerKind::Adam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Fzoo => "FZOO",
            OptimizerKind::FzooR => "FZOO_R",
            OptimizerKind::ZoSgd => "ZO_SGD",
            OptimizerKind::NormSgd => "NORM_SGD",
            OptimizerKind::Sgd => "SGD",
            OptimizerKind::Adam => "ADAM",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_first_order(self) -> bool {
        matches!(
            self,
            OptimizerKind::NormSgd | OptimizerKind::Sgd | OptimizerKind::Adam
        )
    }

    /// Forward-equivalents charged for one step with `directions` = N.
    pub fn forwards_per_step(self, directions: usize) -> u64 {
        match self {
            OptimizerKind::Fzoo => directions as u64 + 1,
            OptimizerKind::FzooR => (directions / 2) as u64 + 1,
            OptimizerKind::ZoSgd => 2,
            _ => FIRST_ORDER_FORWARD_EQUIVALENTS,
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Steps(u64),
    ForwardPasses(u64),
}

pub trait LrSchedule {
    fn lr(&self, step: u64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLr(pub f64);

impl LrSchedule for ConstantLr {
    fn lr(&self, _step: u64) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Perturbation scale; ignored by first-order kinds.
    pub eps: f64,
    /// Directions per step (N); ignored by ZO-SGD and first-order kinds.
    pub directions: usize,
    /// Mini-batch size for data-backed objectives; `None` uses every row.
    pub batch_size: Option<usize>,
    pub budget: Budget,
    pub run_seed: u64,
    #[serde(default)]
    pub engine: Engine,
    /// Upper bound on FZOO's effective step `η·ε/σ`, when set.
    #[serde(default)]
    pub max_effective_step: Option<f64>,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        OptimizerConfig {
            kind,
            lr,
            eps: 1e-3,
            directions: 8,
            batch_size: None,
            budget: Budget::Steps(0),
            run_seed: 0,
            engine: Engine::Sequential,
            max_effective_step: None,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_directions(mut self, n: usize) -> Self {
        self.directions = n;
        self
    }

    pub fn with_budget(mut self, budget: Budget) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run_seed = seed;
        self
    }

    pub fn with_batch_size(mut self, b: usize) -> Self {
        self.batch_size = Some(b);
        self
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_max_effective_step(mut self, cap: f64) -> Self {
        self.max_effective_step = Some(cap);
        self
    }

    pub fn forwards_per_step(&self) -> u64 {
        self.kind.forwards_per_step(self.directions)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(FzooError::invalid(format!("learning rate {} must be > 0", self.lr)));
        }
        if !self.kind.is_first_order() && !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(FzooError::invalid(format!("eps {} must be > 0", self.eps)));
        }
        match self.kind {
            OptimizerKind::Fzoo if self.directions < 2 => {
                return Err(FzooError::invalid("FZOO needs at least 2 directions"))
            }
            OptimizerKind::FzooR if self.directions < 2 || self.directions % 2 != 0 => {
                return Err(FzooError::invalid("FZOO_R needs an even number of directions >= 2"))
            }
            _ => {}
        }
        if self.batch_size == Some(0) {
            return Err(FzooError::invalid("batch size must be positive"));
        }
        if let Some(cap) = self.max_effective_step {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(FzooError::invalid("max_effective_step must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub theta: ParamVector,
    /// Completed steps.
    pub step: u64,
    /// Cumulative forward-equivalents.
    pub forward_passes: u64,
    /// FZOO-R: perturbed losses of the previous step.
    pub prev_losses: Option<Vec<f64>>,
    pub adam_m: Option<Vec<f64>>,
    pub adam_v: Option<Vec<f64>>,
    /// Steps whose σ was clamped to the floor.
    pub degenerate_sigma: u64,
}

impl OptimizerState {
    pub fn new(theta: ParamVector) -> Self {
        OptimizerState {
            theta,
            step: 0,
            forward_passes: 0,
            prev_losses: None,
            adam_m: None,
            adam_v: None,
            degenerate_sigma: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// 1-based index of this step.
    pub step: u64,
    /// Mini-batch loss at the pre-step parameters. ZO-SGD reports the mean
    /// of its two perturbed losses.
    pub loss: f64,
    pub sigma: Option<f64>,
    /// Scalar multiplying the search direction: `η·ε/σ` for FZOO kinds,
    /// `η/‖g‖` for normalized SGD, `η` otherwise.
    pub effective_step: f64,
    pub forward_passes: u64,
    pub forward_cum: u64,
    /// Full-batch gradient norm at the pre-step parameters, when available.
    pub grad_norm: Option<f64>,
    pub degenerate: bool,
    /// False when the step made no parameter change by rule (FZOO-R without
    /// a σ estimate, normalized SGD at a zero gradient).
    pub updated: bool,
}

fn step_batch(config: &OptimizerConfig, objective: &dyn Objective, step: u64) -> Result<BatchSpec> {
    match objective.sample_count() {
        Some(n) => sample_batch(n, config.batch_size.unwrap_or(n), config.run_seed, step),
        None => Ok(BatchSpec::none()),
    }
}

fn full_grad_norm(objective: &dyn Objective, theta: &ParamVector) -> Result<Option<f64>> {
    if !objective.has_gradient() {
        return Ok(None);
    }
    let g = objective.gradient(theta, &objective.full_batch())?;
    Ok(Some(norm(&g)))
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rademacher_seeds(config: &OptimizerConfig, step: u64, count: usize) -> Vec<DirectionSeed> {
    (0..count as u64)
        .map(|i| DirectionSeed::derive(config.run_seed, step, i, DirectionKind::Rademacher))
        .collect()
}

fn finish(state: &mut OptimizerState, forwards: u64) -> (u64, u64) {
    state.step += 1;
    state.forward_passes += forwards;
    (state.step, state.forward_passes)
}

/// Scales `coefficients` so that `η·ε/σ` does not exceed the configured cap;
/// returns the effective step actually applied.
fn apply_cap(config: &OptimizerConfig, sigma: f64, coefficients: &mut [f64]) -> f64 {
    let effective = config.lr * config.eps / sigma;
    match config.max_effective_step {
        Some(cap) if effective > cap => {
            let shrink = cap / effective;
            coefficients.iter_mut().for_each(|c| *c *= shrink);
            cap
        }
        _ => effective,
    }
}

/// One FZOO step: N+1 losses on one batch, σ-normalized seed-form update.
pub fn fzoo_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    objective: &dyn Objective,
) -> Result<StepReport> {
    let t = state.step;
    let batch = step_batch(config, objective, t)?;
    let grad_norm = full_grad_norm(objective, &state.theta)?;
    let seeds = rademacher_seeds(config, t, config.directions);
    let query = query_losses(objective, &mut state.theta, &batch, &seeds, config.eps, config.engine)?;
    let estimate = fzoo_estimate(&query, None)?;
    let lr = ConstantLr(config.lr).lr(t);
    let mut coefficients: Vec<f64> = estimate.projected_grads.iter().map(|p| lr * p).collect();
    let effective_step = apply_cap(config, estimate.sigma, &mut coefficients);
    state.theta.apply_update_from_seeds(&seeds, &coefficients)?;
    if estimate.degenerate {
        state.degenerate_sigma += 1;
    }
    let forwards = estimate.forward_passes as u64;
    let (step, forward_cum) = finish(state, forwards);
    Ok(StepReport {
        step,
        loss: query.base_loss,
        sigma: Some(estimate.sigma),
        effective_step,
        forward_passes: forwards,
        forward_cum,
        grad_norm,
        degenerate: estimate.degenerate,
        updated: true,
    })
}

/// One FZOO-R step: N/2 fresh directions, σ pooled with the previous step's
/// losses, projected gradients over the fresh directions only.
pub fn fzoo_r_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    objective: &dyn Objective,
) -> Result<StepReport> {
    let t = state.step;
    let fresh = config.directions / 2;
    let batch = step_batch(config, objective, t)?;
    let grad_norm = full_grad_norm(objective, &state.theta)?;
    let seeds = rademacher_seeds(config, t, fresh);
    let query = query_losses(objective, &mut state.theta, &batch, &seeds, config.eps, config.engine)?;

    let mut pooled = query.perturbed_losses.clone();
    if let Some(prev) = &state.prev_losses {
        pooled.extend_from_slice(prev);
    }
    state.prev_losses = Some(query.perturbed_losses.clone());
    let forwards = query.forward_passes as u64;

    if pooled.len() < 2 {
        // N = 2 on the first step: a single loss has no spread to normalize by
        let (step, forward_cum) = finish(state, forwards);
        return Ok(StepReport {
            step,
            loss: query.base_loss,
            sigma: None,
            effective_step: 0.0,
            forward_passes: forwards,
            forward_cum,
            grad_norm,
            degenerate: false,
            updated: false,
        });
    }
    let estimate = fzoo_estimate(&query, Some(sigma_of(&pooled)?))?;
    let lr = ConstantLr(config.lr).lr(t);
    let mut coefficients: Vec<f64> = estimate.projected_grads.iter().map(|p| lr * p).collect();
    let effective_step = apply_cap(config, estimate.sigma, &mut coefficients);
    state.theta.apply_update_from_seeds(&seeds, &coefficients)?;
    if estimate.degenerate {
        state.degenerate_sigma += 1;
    }
    let (step, forward_cum) = finish(state, forwards);
    Ok(StepReport {
        step,
        loss: query.base_loss,
        sigma: Some(estimate.sigma),
        effective_step,
        forward_passes: forwards,
        forward_cum,
        grad_norm,
        degenerate: estimate.degenerate,
        updated: true,
    })
}

/// One ZO-SGD (MeZO-style) step with a two-sided Gaussian estimate.
pub fn zo_sgd_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    objective: &dyn Objective,
) -> Result<StepReport> {
    let t = state.step;
    let batch = step_batch(config, objective, t)?;
    let grad_norm = full_grad_norm(objective, &state.theta)?;
    let seed = DirectionSeed::derive(config.run_seed, t, 0, DirectionKind::Gaussian);
    let est = classical_zo_gradient(objective, &mut state.theta, &batch, seed, config.eps)?;
    let lr = ConstantLr(config.lr).lr(t);
    state.theta.apply_update_from_seeds(&[seed], &[lr * est.projected_grad])?;
    let forwards = est.forward_passes as u64;
    let (step, forward_cum) = finish(state, forwards);
    Ok(StepReport {
        step,
        loss: 0.5 * (est.loss_plus + est.loss_minus),
        sigma: None,
        effective_step: lr,
        forward_passes: forwards,
        forward_cum,
        grad_norm,
        degenerate: false,
        updated: true,
    })
}

fn first_order_prelude(
    config: &OptimizerConfig,
    state: &OptimizerState,
    objective: &dyn Objective,
) -> Result<(BatchSpec, f64, Vec<f64>, Option<f64>)> {
    if !objective.has_gradient() {
        return Err(FzooError::UnsupportedObjective(format!(
            "{} needs a gradient oracle",
            config.kind
        )));
    }
    let batch = step_batch(config, objective, state.step)?;
    let loss = objective.evaluate(&state.theta, &batch)?;
    let g = objective.gradient(&state.theta, &batch)?;
    let grad_norm = full_grad_norm(objective, &state.theta)?;
    Ok((batch, loss, g, grad_norm))
}

fn first_order_report(
    state: &mut OptimizerState,
    loss: f64,
    effective_step: f64,
    grad_norm: Option<f64>,
    updated: bool,
) -> StepReport {
    let (step, forward_cum) = finish(state, FIRST_ORDER_FORWARD_EQUIVALENTS);
    StepReport {
        step,
        loss,
        sigma: None,
        effective_step,
        forward_passes: FIRST_ORDER_FORWARD_EQUIVALENTS,
        forward_cum,
        grad_norm,
        degenerate: false,
        updated,
    }
}

/// `θ ← θ − η·g/‖g‖` with the exact mini-batch gradient.
pub fn normalized_sgd_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    objective: &dyn Objective,
) -> Result<StepReport> {
    let (_, loss, g, grad_norm) = first_order_prelude(config, state, objective)?;
    let lr = ConstantLr(config.lr).lr(state.step);
    let gn = norm(&g);
    if gn < ZERO_GRADIENT_GUARD {
        return Ok(first_order_report(state, loss, 0.0, grad_norm, false));
    }
    let scale = lr / gn;
    let next: Vec<f64> = state.theta.values().iter().zip(&g).map(|(t, gi)| t - scale * gi).collect();
    state.theta.set_values(&next)?;
    Ok(first_order_report(state, loss, scale, grad_norm, true))
}

pub fn sgd_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    objective: &dyn Objective,
) -> Result<StepReport> {
    let (_, loss, g, grad_norm) = first_order_prelude(config, state, objective)?;
    let lr = ConstantLr(config.lr).lr(state.step);
    let next: Vec<f64> = state.theta.values().iter().zip(&g).map(|(t, gi)| t - lr * gi).collect();
    state.theta.set_values(&next)?;
    Ok(first_order_report(state, loss, lr, grad_norm, true))
}

pub fn adam_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    objective: &dyn Objective,
) -> Result<StepReport> {
    let (_, loss, g, grad_norm) = first_order_prelude(config, state, objective)?;
    let lr = ConstantLr(config.lr).lr(state.step);
    let d = g.len();
    let m = state.adam_m.get_or_insert_with(|| vec![0.0; d]);
    m.iter_mut().zip(&g).for_each(|(m, g)| *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g);
    let v = state.adam_v.get_or_insert_with(|| vec![0.0; d]);
    v.iter_mut().zip(&g).for_each(|(v, g)| *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g);
    let t = (state.step + 1) as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);
    let (m, v) = (state.adam_m.as_ref().unwrap(), state.adam_v.as_ref().unwrap());
    let next: Vec<f64> = state
        .theta
        .values()
        .iter()
        .zip(m.iter().zip(v))
        .map(|(th, (m, v))| th - lr * (m / bias1) / ((v / bias2).sqrt() + ADAM_EPS))
        .collect();
    state.theta.set_values(&next)?;
    Ok(first_order_report(state, loss, lr, grad_norm, true))
}

/// Dispatches one step of `config.kind`.
pub fn step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    objective: &dyn Objective,
) -> Result<StepReport> {
    let result = match config.kind {
        OptimizerKind::Fzoo => fzoo_step(config, state, objective),
        OptimizerKind::FzooR => fzoo_r_step(config, state, objective),
        OptimizerKind::ZoSgd => zo_sgd_step(config, state, objective),
        OptimizerKind::NormSgd => normalized_sgd_step(config, state, objective),
        OptimizerKind::Sgd => sgd_step(config, state, objective),
        OptimizerKind::Adam => adam_step(config, state, objective),
    };
    result.map_err(|e| FzooError::StepFailed {
        step: state.step + 1,
        source: Box::new(e),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub reports: Vec<StepReport>,
    pub state: OptimizerState,
    pub complete: bool,
    pub error: Option<String>,
}

/// Whether another step fits in the budget.
pub fn has_budget_for_step(config: &OptimizerConfig, state: &OptimizerState) -> bool {
    match config.budget {
        Budget::Steps(t) => state.step < t,
        Budget::ForwardPasses(b) => state.forward_passes + config.forwards_per_step() <= b,
    }
}

/// Steps until the budget is spent. A forward-pass budget is never exceeded.
pub fn run(
    config: &OptimizerConfig,
    objective: &dyn Objective,
    state: OptimizerState,
) -> Result<RunOutcome> {
    run_with(config, objective, state, |_, _| Ok(()))
}

/// [`run`] with a hook called after every step (used for checkpointing).
pub fn run_with(
    config: &OptimizerConfig,
    objective: &dyn Objective,
    mut state: OptimizerState,
    mut after_step: impl FnMut(&OptimizerState, &StepReport) -> Result<()>,
) -> Result<RunOutcome> {
    config.validate()?;
    if state.theta.dim() != objective.dim() {
        return Err(FzooError::InvalidDimension(format!(
            "initial parameters have {} entries, objective expects {}",
            state.theta.dim(),
            objective.dim()
        )));
    }
    let mut reports = Vec::new();
    while has_budget_for_step(config, &state) {
        let report = match step(config, &mut state, objective) {
            Ok(r) => r,
            Err(e) => {
                return Ok(RunOutcome {
                    reports,
                    state,
                    complete: false,
                    error: Some(e.to_string()),
                })
            }
        };
        after_step(&state, &report)?;
        reports.push(report);
    }
    Ok(RunOutcome {
        reports,
        state,
        complete: true,
        error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{linear_objective, quadratic_objective, QuadraticSpec};

    fn quad(d: usize) -> impl Objective {
        quadratic_objective(&QuadraticSpec::RandomSpd { seed: 3, condition: None }, vec![0.0; d], d).unwrap()
    }

    #[test]
    fn kind_codes_round_trip() {
        for k in OptimizerKind::ALL {
            assert_eq!(OptimizerKind::from_code(k.code()), Some(k));
        }
        assert_eq!(serde_json::to_string(&OptimizerKind::FzooR).unwrap(), "\"FZOO_R\"");
    }

    #[test]
    fn fzoo_descends_linear_1d() {
        let obj = linear_objective(vec![2.0]).unwrap();
        let cfg = OptimizerConfig::new(OptimizerKind::Fzoo, 0.1).with_directions(2).with_eps(0.01);
        for seed in 0..20 {
            let mut st = OptimizerState::new(ParamVector::flat(vec![1.0]).unwrap());
            let cfg = cfg.clone().with_seed(seed);
            let r = fzoo_step(&cfg, &mut st, &obj).unwrap();
            // both signs equal gives σ = 0 and no move; otherwise θ moves against c
            assert!(st.theta.values()[0] <= 1.0 + 1e-12, "{r:?}");
        }
    }

    #[test]
    fn fzoo_flat_objective_does_not_move() {
        let obj = linear_objective(vec![0.0; 3]).unwrap();
        let cfg = OptimizerConfig::new(OptimizerKind::Fzoo, 0.5).with_directions(4);
        let mut st = OptimizerState::new(ParamVector::flat(vec![1.0, -2.0, 3.0]).unwrap());
        let r = fzoo_step(&cfg, &mut st, &obj).unwrap();
        assert!(r.degenerate);
        assert_eq!(st.degenerate_sigma, 1);
        // only perturb/restore rounding remains
        for (a, b) in st.theta.values().iter().zip([1.0, -2.0, 3.0]) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn zo_sgd_descends_in_one_dimension() {
        let c = 3.0;
        let obj = linear_objective(vec![c]).unwrap();
        for seed in 0..10 {
            let cfg = OptimizerConfig::new(OptimizerKind::ZoSgd, 0.01).with_seed(seed);
            let mut st = OptimizerState::new(ParamVector::flat(vec![0.0]).unwrap());
            let r = zo_sgd_step(&cfg, &mut st, &obj).unwrap();
            assert_eq!(r.forward_passes, 2);
            let z = crate::perturbation::generate_direction(
                DirectionSeed::derive(seed, 0, 0, DirectionKind::Gaussian),
                1,
            )
            .unwrap()[0];
            let expect = -0.01 * c * z * z;
            assert!((st.theta.values()[0] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn normalized_step_has_length_lr() {
        let obj = quad(5);
        let cfg = OptimizerConfig::new(OptimizerKind::NormSgd, 0.3);
        let mut st = OptimizerState::new(ParamVector::flat(vec![1.0, 2.0, -1.0, 0.5, 3.0]).unwrap());
        let before = st.theta.values().to_vec();
        normalized_sgd_step(&cfg, &mut st, &obj).unwrap();
        let delta: Vec<f64> = st.theta.values().iter().zip(&before).map(|(a, b)| a - b).collect();
        assert!((norm(&delta) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn normalized_step_skips_zero_gradient() {
        let obj = quad(3);
        let cfg = OptimizerConfig::new(OptimizerKind::NormSgd, 0.3);
        let mut st = OptimizerState::new(ParamVector::zeros(3).unwrap());
        let r = normalized_sgd_step(&cfg, &mut st, &obj).unwrap();
        assert!(!r.updated);
        assert_eq!(st.theta.values(), &[0.0; 3]);
    }

    #[test]
    fn first_order_requires_oracle() {
        let d = crate::objectives::Dataset::linearly_separable(10, 2, 0).unwrap();
        let obj = crate::objectives::zero_one_objective(d, crate::objectives::Scorer::Linear { classes: 2 }).unwrap();
        let theta = obj.params(vec![0.0; obj.dim()]).unwrap();
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::NormSgd] {
            let mut st = OptimizerState::new(theta.clone());
            let err = step(&OptimizerConfig::new(kind, 0.1), &mut st, &obj).unwrap_err();
            assert!(matches!(
                err,
                FzooError::StepFailed { ref source, .. } if matches!(**source, FzooError::UnsupportedObjective(_))
            ));
        }
    }

    #[test]
    fn adam_first_step_hand_checked() {
        let obj = linear_objective(vec![0.5]).unwrap();
        let cfg = OptimizerConfig::new(OptimizerKind::Adam, 0.01);
        let mut st = OptimizerState::new(ParamVector::flat(vec![2.0]).unwrap());
        adam_step(&cfg, &mut st, &obj).unwrap();
        // m̂ = g, v̂ = g² after bias correction
        let m_hat = (1.0 - 0.9) * 0.5 / (1.0 - 0.9);
        let v_hat = (1.0 - 0.999) * 0.25 / (1.0 - 0.999);
        let expect = 2.0 - 0.01 * m_hat / (f64::sqrt(v_hat) + 1e-8);
        assert!((st.theta.values()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::new(OptimizerKind::Fzoo, 0.1).with_directions(1).validate().is_err());
        assert!(OptimizerConfig::new(OptimizerKind::FzooR, 0.1).with_directions(3).validate().is_err());
        assert!(OptimizerConfig::new(OptimizerKind::ZoSgd, 0.1).with_eps(0.0).validate().is_err());
        assert!(OptimizerConfig::new(OptimizerKind::Sgd, 0.1).with_eps(0.0).validate().is_ok());
        assert!(OptimizerConfig::new(OptimizerKind::Sgd, -1.0).validate().is_err());
    }

    #[test]
    fn zero_budget_runs_nothing() {
        let obj = quad(4);
        let theta = ParamVector::flat(vec![1.0; 4]).unwrap();
        for budget in [Budget::Steps(0), Budget::ForwardPasses(0), Budget::ForwardPasses(8)] {
            let cfg = OptimizerConfig::new(OptimizerKind::Fzoo, 0.1).with_budget(budget);
            let out = run(&cfg, &obj, OptimizerState::new(theta.clone())).unwrap();
            assert!(out.reports.is_empty() && out.complete);
            assert_eq!(out.state.theta, theta);
        }
    }

    #[test]
    fn failure_marks_run_incomplete() {
        struct Explodes;
        impl Objective for Explodes {
            fn dim(&self) -> usize {
                2
            }
            fn evaluate(&self, theta: &ParamVector, _: &BatchSpec) -> Result<f64> {
                Ok(if theta.values()[0] > 0.5 { f64::NAN } else { theta.values()[0] })
            }
        }
        let cfg = OptimizerConfig::new(OptimizerKind::Fzoo, 1.0)
            .with_directions(2)
            .with_eps(1.0)
            .with_budget(Budget::Steps(50));
        let out = run(&cfg, &Explodes, OptimizerState::new(ParamVector::flat(vec![0.0, 0.0]).unwrap())).unwrap();
        assert!(!out.complete);
        assert!(out.error.unwrap().contains("step"));
    }
}
