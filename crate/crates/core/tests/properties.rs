use prfgame::analysis::{audit_concavity, build_counterexample, uniformity_deviation};
use prfgame::dynamics::{epsilon_gap, run_dynamics, run_fixed_rounds, DynamicsConfig};
use prfgame::experiments::{
    derive_seed, run_sweep, sample_instance, EcosystemSampler, InstanceShape, SweepSpec,
    SweptParameter,
};
use prfgame::learners::average_regret_at;
use prfgame::{Activation, ActivationFamily, LearnerSpec};

fn instance(family: ActivationFamily, seed: u64) -> prfgame::PublishersGame {
    sample_instance(
        &EcosystemSampler::UniformIid,
        &InstanceShape::defaults(Activation::with_default(family)),
        seed,
    )
    .unwrap()
}

#[test]
fn average_regret_shrinks_with_the_horizon() {
    let mut good = 0;
    for i in 0..100u64 {
        let game = instance(ActivationFamily::CONCAVE[(i % 3) as usize], derive_seed(17, &[i]));
        let (_, ledger) = run_fixed_rounds(&game, &LearnerSpec::default(), 1600).unwrap();
        let r: Vec<f64> = [100, 400, 1600]
            .iter()
            .map(|t| average_regret_at(&game, &ledger, *t, 1e-7).unwrap())
            .collect();
        if r[1] <= r[0] + 1e-9 && r[2] <= r[1] + 1e-9 {
            good += 1;
        }
    }
    assert!(good >= 95, "{good}/100 non-increasing");
}

#[test]
fn converged_runs_recertify_under_a_tighter_oracle() {
    let cfg = DynamicsConfig::default();
    for i in 0..30u64 {
        let game = instance(ActivationFamily::CONCAVE[(i % 3) as usize], derive_seed(18, &[i]));
        let run = run_dynamics(&game, &LearnerSpec::default(), &cfg, i).unwrap();
        assert!(run.report.converged);
        let gap = epsilon_gap(&game, &run.report.final_average, cfg.oracle_tolerance() / 10.0).unwrap();
        assert!(gap <= cfg.epsilon * 1.1, "gap {gap}");
    }
}

#[test]
fn counterexamples_are_caught_across_the_exponential_range() {
    for beta in [1.0, 2.0, 5.0, 10.0, 15.0, 20.0] {
        let act = Activation::exponential(beta).unwrap();
        let game = build_counterexample(&act, None).unwrap();
        let v = audit_concavity(&game, 2000, 3);
        assert!(!v.activation_concave);
        assert!(v.own_concavity_violations >= 1, "beta {beta}");
        assert!(v.witness.is_some());
    }
}

#[test]
fn extreme_hyperparameters_approach_uniform_ranking() {
    for act in [
        Activation::root(1e-4).unwrap(),
        Activation::linear(1e6).unwrap(),
        Activation::log(1e6).unwrap(),
    ] {
        let dev = uniformity_deviation(&act, 3, 3, 2000, 5).unwrap();
        assert!(dev <= 1e-3, "{:?}: {dev}", act.family());
    }
    let moderate = uniformity_deviation(&Activation::linear(1.0 + 1e-5).unwrap(), 3, 3, 2000, 5).unwrap();
    assert!(moderate > 1e-2);
}

#[test]
fn sweeps_are_reproducible_and_sane() {
    let mut spec = SweepSpec::new(SweptParameter::N, vec![2.0, 4.0]);
    spec.instances_per_point = 8;
    spec.bootstrap_resamples = 100;
    spec.seed = 31;
    let a = run_sweep(&spec).unwrap();
    let b = run_sweep(&spec).unwrap();
    assert_eq!(a, b);

    let mut csv_a = vec![];
    let mut csv_b = vec![];
    a.write_csv(&mut csv_a).unwrap();
    b.write_csv(&mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);

    for rec in &a.instances {
        let n = rec.value;
        assert!((0.0..=1.0).contains(&rec.users_welfare));
        assert!(rec.publishers_welfare >= 1.0 - spec.fixed.lambda * n - 1e-12);
        assert!(rec.publishers_welfare <= 1.0 + 1e-12);
    }
    for row in &a.rows {
        assert!(row.ci_low <= row.mean && row.mean <= row.ci_high);
    }
}
