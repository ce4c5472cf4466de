use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::sigma_of;
use crate::objectives::{linear_objective, quadratic_objective, QuadraticSpec};
use crate::perturbation::ParamVector;
use crate::theory_checks::{
    check_epsilon_scaling, check_forward_equivalence, check_lemma_centered_inner, check_lemma_uut,
    check_proposition1_with, CheckStatus, MomentCheckReport, SigmaFn,
};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const SIGMA_SLOPE_MIN: f64 = 2.5;
pub const G_SLOPE_MIN: f64 = 0.8;

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub sigma: SigmaFn,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: DEFAULT_SAMPLES,
            seed: 0,
            sigma: sigma_of,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub name: String,
    pub status: CheckStatus,
    pub expected: String,
    pub observed: String,
}

impl VerifyRow {
    fn from_moment(r: &MomentCheckReport) -> Self {
        VerifyRow {
            name: r.name.clone(),
            status: r.status,
            expected: format!("{:.6e}", r.theoretical),
            observed: format!("{:.6e} ± {:.2e}", r.empirical, r.std_error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    /// True when nothing failed; inconclusive rows do not count as failures.
    pub fn ok(&self) -> bool {
        self.rows.iter().all(|r| r.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> Vec<&VerifyRow> {
        self.rows.iter().filter(|r| r.status == CheckStatus::Fail).collect()
    }

    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(8);
        let mut out = format!("{:<width$}  {:<12}  {:<16}  {}\n", "identity", "status", "expected", "observed");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:<12}  {:<16}  {}\n",
                r.name,
                r.status.to_string(),
                r.expected,
                r.observed
            ));
        }
        out
    }
}

fn unit_alternating(d: usize) -> Vec<f64> {
    let s = 1.0 / (d as f64).sqrt();
    (0..d).map(|i| if i % 2 == 0 { s } else { -s }).collect()
}

/// Runs the direction identity, moment, ε-scaling and forward-engine checks.
pub fn verify_suite(options: &VerifyOptions) -> Result<VerifyReport> {
    let VerifyOptions { samples, seed, sigma } = *options;
    let mut rows = Vec::new();
    for (d, n) in [(1, 1), (10, 4), (50, 8)] {
        rows.push(VerifyRow::from_moment(&check_lemma_uut(&unit_alternating(d), n, samples, seed)?));
    }
    for (d, n) in [(1, 2), (10, 8)] {
        let g: Vec<f64> = (0..d).map(|i| 0.5 + 0.1 * i as f64).collect();
        rows.push(VerifyRow::from_moment(&check_lemma_centered_inner(&g, n, samples, seed)?));
    }

    let d = 20;
    let quadratic = quadratic_objective(&QuadraticSpec::RandomSpd { seed: 11, condition: None }, vec![0.0; d], d)?;
    let theta = ParamVector::flat(vec![1.0; d])?;
    let prop1 = check_proposition1_with(&quadratic, &theta, 8, 1e-5, samples, seed, sigma)?;
    rows.extend(prop1.rows().iter().map(|r| VerifyRow::from_moment(r)));

    let linear = linear_objective((0..d).map(|i| 1.0 - 0.05 * i as f64).collect())?;
    let prop1_linear = check_proposition1_with(&linear, &theta, 4, 0.1, samples, seed, sigma)?;
    rows.extend(prop1_linear.rows().iter().map(|r| VerifyRow {
        name: format!("linear {}", r.name),
        ..VerifyRow::from_moment(r)
    }));

    let ladder = [1e-2, 1e-3, 1e-4, 1e-5];
    let scaling = check_epsilon_scaling(&quadratic, &theta, 8, &ladder, samples, seed)?;
    let slope_row = |name: &str, slope: Option<f64>, min: f64| VerifyRow {
        name: name.to_string(),
        status: match slope {
            None => CheckStatus::Inconclusive,
            Some(s) if s >= min => CheckStatus::Pass,
            Some(_) => CheckStatus::Fail,
        },
        expected: format!(">= {min}"),
        observed: slope.map(|s| format!("{s:.3}")).unwrap_or_else(|| "below noise".into()),
    };
    rows.push(slope_row("eps-scaling sigma remainder slope", scaling.sigma_slope, SIGMA_SLOPE_MIN));
    rows.push(slope_row("eps-scaling g remainder slope", scaling.g_slope, G_SLOPE_MIN));

    let eq = check_forward_equivalence(100, 8, 1e-3, seed)?;
    rows.push(VerifyRow {
        name: format!("batched forward == sequential ({} stacks, N={})", eq.stacks, eq.directions),
        status: eq.status,
        expected: format!("<= {:e}", eq.tolerance),
        observed: format!("{:.3e}", eq.max_relative_diff),
    });
    Ok(VerifyReport { rows })
}
