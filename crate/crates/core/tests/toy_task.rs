use profit_core::mlp::{Activation, Architecture, Init, Mlp};
use profit_core::rng;
use profit_core::toy::{
    evaluate_domains, evaluate_error, finetune, sample_batch, train_baseline, train_plain, EvalGrid, ExperimentPlan,
    Strategy, ToyDataConfig, TrainSpec,
};
use profit_core::OptimizerSpec;

fn small_plan() -> ExperimentPlan {
    ExperimentPlan {
        architecture: Architecture::with_hidden(16, Activation::Relu),
        batch_size: 32,
        baseline: TrainSpec { optimizer: OptimizerSpec::rmsprop(1e-2), steps: 200 },
        finetune: TrainSpec { optimizer: OptimizerSpec::rmsprop(5e-4), steps: 50 },
        eval_resolution: 20,
        seeds: vec![0],
        ..ExperimentPlan::default()
    }
}

#[test]
fn flatten_roundtrip_over_seeds() {
    let arch = Architecture::with_hidden(12, Activation::Tanh);
    for seed in 0..100 {
        let model = Mlp::init(arch.clone(), Init::FanInUniform, &mut rng::stream(seed, rng::STREAM_INIT));
        let back = Mlp::unflatten(arch.clone(), model.flatten()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.flatten(), model.flatten());
    }
}

#[test]
fn new_domain_samples_are_uniform() {
    let config = ToyDataConfig { noise_std: 0.0, ..ToyDataConfig::NEW };
    let batch = sample_batch(&config, &mut rng::stream(5, rng::STREAM_FINETUNE), 5_000).unwrap();
    let xs = batch.inputs();
    assert_eq!(xs.len(), 10_000);
    assert!(xs.iter().all(|&x| (0.8..=1.5).contains(&x)));
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    // Standard error of the mean of U[0.8, 1.5] over 10^4 draws.
    let se = 0.7 / 12f64.sqrt() / 100.0;
    assert!((mean - 1.15).abs() <= 3.0 * se, "mean {mean}");
}

#[test]
fn zero_model_grid_errors() {
    // Mean of sin^2(10|x|) over each 100x100 grid, computed independently.
    let model = Mlp::zeros(Architecture::standard(Activation::Relu));
    let orig = evaluate_error(&model, &EvalGrid::new(&ToyDataConfig::ORIGINAL, 100).unwrap()).unwrap();
    let new = evaluate_error(&model, &EvalGrid::new(&ToyDataConfig::NEW, 100).unwrap()).unwrap();
    assert!((orig - 0.48814119117337257).abs() < 1e-12);
    assert!((new - 0.5058618407081682).abs() < 1e-12);
}

#[test]
fn domains_overlap_only_in_the_corner() {
    let orig = EvalGrid::new(&ToyDataConfig::ORIGINAL, 100).unwrap();
    let new = EvalGrid::new(&ToyDataConfig::NEW, 100).unwrap();
    for p in new.points() {
        let shared = ToyDataConfig::ORIGINAL.contains(p);
        let corner = p.iter().all(|&c| (0.8..=1.0).contains(&c));
        assert_eq!(shared, corner, "{p:?}");
    }
    for p in orig.points() {
        let shared = ToyDataConfig::NEW.contains(p);
        let corner = p.iter().all(|&c| (0.8..=1.0).contains(&c));
        assert_eq!(shared, corner, "{p:?}");
    }
}

#[test]
fn head_only_training_freezes_the_body() {
    let arch = Architecture::with_hidden(24, Activation::Relu);
    let start = Mlp::init(arch.clone(), Init::FanInUniform, &mut rng::stream(1, rng::STREAM_INIT)).into_params();
    let mut params = start.clone();
    let mut stream = ExperimentPlan::default().finetune_stream(1).unwrap();
    train_plain(&arch, &mut params, OptimizerSpec::rmsprop(1e-2), 100, &mut stream, true, None).unwrap();
    let head = arch.head_range();
    assert_eq!(params.as_slice()[..head.start], start.as_slice()[..head.start]);
    assert_ne!(params.as_slice()[head.clone()], start.as_slice()[head]);
}

#[test]
fn zero_finetune_steps_keep_the_baseline() {
    let plan = ExperimentPlan { finetune: TrainSpec { steps: 0, ..small_plan().finetune }, ..small_plan() };
    let grids = plan.grids().unwrap();
    let base = train_baseline(&plan, 0, None).unwrap();
    let expected = evaluate_domains(&base.model, &grids).unwrap();
    for strategy in Strategy::ALL {
        let out = finetune(&plan, &base.model, strategy, 0, None).unwrap();
        assert_eq!(evaluate_domains(&out.model, &grids).unwrap(), expected);
    }
}

#[test]
fn profit_accounting_and_determinism() {
    let plan = small_plan();
    let base = train_baseline(&plan, 0, None).unwrap();
    let a = finetune(&plan, &base.model, Strategy::Profit, 0, None).unwrap();
    let b = finetune(&plan, &base.model, Strategy::Profit, 0, None).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.traces.len(), 50);
    assert!(a.traces.iter().all(|t| t.batches_consumed == 2));
    assert_eq!(a.batches_consumed, 100);
}

#[test]
fn architecture_mismatch_is_rejected() {
    let plan = small_plan();
    let other = Mlp::zeros(Architecture::with_hidden(8, Activation::Relu));
    assert!(finetune(&plan, &other, Strategy::Full, 0, None).is_err());
}

#[test]
fn baseline_learns_something() {
    let plan = small_plan();
    let grids = plan.grids().unwrap();
    let init = evaluate_domains(&plan.initial_model(0), &grids).unwrap();
    let base = train_baseline(&plan, 0, None).unwrap();
    let trained = evaluate_domains(&base.model, &grids).unwrap();
    assert!(trained.original < init.original);
}
