use fzoo::objectives::{
    linear_objective, quadratic_objective, zero_one_objective, AffineLoss, QuadraticSpec, Scorer,
};
use fzoo::optimizers::{fzoo_r_step, fzoo_step, normalized_sgd_step, run, sgd_step};
use fzoo::{
    Budget, Dataset, Objective, OptimizerConfig, OptimizerKind, OptimizerState, ParamVector,
};

fn quad(d: usize) -> impl Objective {
    quadratic_objective(&QuadraticSpec::RandomSpd { seed: 3, condition: None }, vec![0.0; d], d).unwrap()
}

fn delta(before: &ParamVector, after: &ParamVector) -> Vec<f64> {
    after.values().iter().zip(before.values()).map(|(a, b)| a - b).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn fzoo_step_points_along_normalized_gradient() {
    let d = 10;
    let obj = quad(d);
    let theta0 = ParamVector::flat((0..d).map(|i| 1.0 - 0.1 * i as f64).collect()).unwrap();
    let mut total = 0.0;
    for seed in 0..100 {
        let cfg = OptimizerConfig::new(OptimizerKind::Fzoo, 1e-2).with_directions(64).with_eps(1e-5).with_seed(seed);
        let mut a = OptimizerState::new(theta0.clone());
        fzoo_step(&cfg, &mut a, &obj).unwrap();
        let mut b = OptimizerState::new(theta0.clone());
        let ncfg = OptimizerConfig::new(OptimizerKind::NormSgd, 1e-2);
        normalized_sgd_step(&ncfg, &mut b, &obj).unwrap();
        total += cosine(&delta(&theta0, &a.theta), &delta(&theta0, &b.theta));
    }
    let mean = total / 100.0;
    assert!(mean > 0.9, "mean cosine {mean}");
}

#[test]
fn accounting_laws() {
    let obj = quad(6);
    let theta = ParamVector::flat(vec![1.0; 6]).unwrap();
    for (kind, per_step) in [
        (OptimizerKind::Fzoo, 9),
        (OptimizerKind::FzooR, 5),
        (OptimizerKind::ZoSgd, 2),
        (OptimizerKind::NormSgd, 4),
        (OptimizerKind::Sgd, 4),
        (OptimizerKind::Adam, 4),
    ] {
        let cfg = OptimizerConfig::new(kind, 1e-3).with_budget(Budget::Steps(7));
        let out = run(&cfg, &obj, OptimizerState::new(theta.clone())).unwrap();
        assert_eq!(out.reports.len(), 7);
        assert!(out.reports.iter().all(|r| r.forward_passes == per_step), "{kind}");
        let sum: u64 = out.reports.iter().map(|r| r.forward_passes).sum();
        assert_eq!(sum, out.state.forward_passes);
        assert_eq!(out.reports.last().unwrap().forward_cum, 7 * per_step);
    }
}

#[test]
fn forward_budget_is_never_exceeded() {
    let obj = quad(6);
    let theta = ParamVector::flat(vec![1.0; 6]).unwrap();
    for kind in OptimizerKind::ALL {
        let cfg = OptimizerConfig::new(kind, 1e-3).with_budget(Budget::ForwardPasses(50));
        let out = run(&cfg, &obj, OptimizerState::new(theta.clone())).unwrap();
        let per = cfg.forwards_per_step();
        assert!(out.state.forward_passes <= 50 && out.state.forward_passes + per > 50, "{kind}");
    }
}

#[test]
fn runs_are_bitwise_deterministic() {
    let obj = quad(8);
    let theta = ParamVector::flat(vec![0.7; 8]).unwrap();
    for kind in OptimizerKind::ALL {
        let cfg = OptimizerConfig::new(kind, 1e-2).with_budget(Budget::Steps(25)).with_seed(9);
        let a = run(&cfg, &obj, OptimizerState::new(theta.clone())).unwrap();
        let b = run(&cfg, &obj, OptimizerState::new(theta.clone())).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn fzoo_r_first_step_is_fzoo_with_half_directions() {
    let obj = quad(8);
    let theta = ParamVector::flat(vec![0.7; 8]).unwrap();
    let cfg_r = OptimizerConfig::new(OptimizerKind::FzooR, 0.05).with_directions(8).with_seed(4);
    let cfg = OptimizerConfig::new(OptimizerKind::Fzoo, 0.05).with_directions(4).with_seed(4);
    let mut a = OptimizerState::new(theta.clone());
    let mut b = OptimizerState::new(theta);
    let ra = fzoo_r_step(&cfg_r, &mut a, &obj).unwrap();
    let rb = fzoo_step(&cfg, &mut b, &obj).unwrap();
    assert_eq!(a.theta, b.theta);
    assert_eq!(ra.sigma, rb.sigma);
    assert_eq!(ra.forward_passes, 5);
    assert_eq!(a.prev_losses.as_ref().map(Vec::len), Some(4));
}

#[test]
fn sgd_contracts_on_quadratic() {
    let obj = quad(10);
    // smoothness hint is the top eigenvalue
    let lmax = obj.smoothness().unwrap();
    let cfg = OptimizerConfig::new(OptimizerKind::Sgd, 1.0 / lmax);
    let mut state = OptimizerState::new(ParamVector::flat(vec![1.0; 10]).unwrap());
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        sgd_step(&cfg, &mut state, &obj).unwrap();
        let dist = state.theta.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dist < last);
        last = dist;
    }
}

#[test]
fn affine_wrapped_objective_gives_identical_updates() {
    let d = 12;
    let theta = ParamVector::flat((0..d).map(|i| (i as f64).cos()).collect()).unwrap();
    let cfg = OptimizerConfig::new(OptimizerKind::Fzoo, 0.05).with_budget(Budget::Steps(30)).with_seed(2);
    let plain = run(&cfg, &quad(d), OptimizerState::new(theta.clone())).unwrap();
    for a in [0.1, 10.0] {
        let wrapped = AffineLoss::new(quad(d), a, 3.0).unwrap();
        let out = run(&cfg, &wrapped, OptimizerState::new(theta.clone())).unwrap();
        for (x, y) in out.state.theta.values().iter().zip(plain.state.theta.values()) {
            assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
        }
    }
}

#[test]
fn zero_one_loss_is_scale_invariant_for_linear_scorer() {
    let data = Dataset::linearly_separable(40, 3, 5).unwrap();
    let obj = zero_one_objective(data, Scorer::Linear { classes: 2 }).unwrap();
    let values: Vec<f64> = (0..obj.dim()).map(|i| (i as f64 * 1.3).sin()).collect();
    let base = obj.evaluate(&obj.params(values.clone()).unwrap(), &obj.full_batch()).unwrap();
    for scale in [1e-3, 0.5, 7.0, 1e4] {
        let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
        assert_eq!(obj.evaluate(&obj.params(scaled).unwrap(), &obj.full_batch()).unwrap(), base);
    }
}

#[test]
fn fzoo_lowers_zero_one_loss() {
    let data = Dataset::linearly_separable(100, 4, 1).unwrap();
    let obj = zero_one_objective(data, Scorer::Linear { classes: 2 }).unwrap();
    let theta = obj.params(vec![0.0; obj.dim()]).unwrap();
    let start = obj.evaluate(&theta, &obj.full_batch()).unwrap();
    let cfg = OptimizerConfig::new(OptimizerKind::Fzoo, 1.0)
        .with_eps(0.1)
        .with_batch_size(50)
        .with_budget(Budget::ForwardPasses(2000));
    let out = run(&cfg, &obj, OptimizerState::new(theta)).unwrap();
    let end = obj.evaluate(&out.state.theta, &obj.full_batch()).unwrap();
    assert!(end < start, "{start} -> {end}");
}

#[test]
fn linear_objective_descends() {
    let obj = linear_objective(vec![1.0, -1.0, 0.5]).unwrap();
    let cfg = OptimizerConfig::new(OptimizerKind::Fzoo, 0.1).with_budget(Budget::Steps(20));
    let out = run(&cfg, &obj, OptimizerState::new(ParamVector::zeros(3).unwrap())).unwrap();
    assert!(out.reports.last().unwrap().loss < out.reports[0].loss);
}
