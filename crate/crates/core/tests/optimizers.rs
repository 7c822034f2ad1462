use profit_core::{OptimizerSpec, OptimizerState, ParamVector};
use rand::{Rng, SeedableRng};
use rand::rngs::SmallRng;

fn random_vec(rng: &mut SmallRng, n: usize) -> ParamVector {
    ParamVector::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn specs() -> [OptimizerSpec; 3] {
    [OptimizerSpec::sgd(0.05), OptimizerSpec::rmsprop(1e-2), OptimizerSpec::adam(1e-3)]
}

#[test]
fn sgd_move_is_linear_in_the_gradient() {
    let mut rng = SmallRng::seed_from_u64(3);
    for _ in 0..20 {
        let theta = random_vec(&mut rng, 17);
        let g = random_vec(&mut rng, 17);
        let alpha = rng.random_range(-4.0..4.0);
        let moved = |grad: &ParamVector| {
            let mut t = theta.clone();
            OptimizerState::new(OptimizerSpec::sgd(0.1), 17).unwrap().step(&mut t, grad).unwrap();
            t.sub(&theta).unwrap()
        };
        let base = moved(&g).scaled(alpha).unwrap();
        let scaled = moved(&g.scaled(alpha).unwrap());
        assert!(scaled.sub(&base).unwrap().norm() <= 1e-14 * base.norm().max(1.0));
    }
}

#[test]
fn zero_gradient_is_a_fixed_point() {
    for spec in specs() {
        let mut state = OptimizerState::new(spec, 5).unwrap();
        let start = ParamVector::new(vec![0.1, -0.2, 0.3, 4.0, -5.0]).unwrap();
        let mut theta = start.clone();
        for _ in 0..10 {
            state.step(&mut theta, &ParamVector::zeros(5)).unwrap();
        }
        assert_eq!(theta, start, "{}", spec.kind.name());
    }
}

#[test]
fn identical_inputs_give_identical_trajectories() {
    for spec in specs() {
        let run = || {
            let mut rng = SmallRng::seed_from_u64(11);
            let mut state = OptimizerState::new(spec, 64).unwrap();
            let mut theta = random_vec(&mut rng, 64);
            for _ in 0..50 {
                let g = random_vec(&mut rng, 64);
                state.step(&mut theta, &g).unwrap();
            }
            (theta, state)
        };
        assert_eq!(run(), run());
    }
}

#[test]
fn adam_counts_its_steps() {
    let mut state = OptimizerState::new(OptimizerSpec::adam(1e-3), 2).unwrap();
    let mut theta = ParamVector::zeros(2);
    for k in 1..=7 {
        state.step(&mut theta, &ParamVector::new(vec![1.0, -1.0]).unwrap()).unwrap();
        assert_eq!(state.steps(), k);
    }
    // Constant gradient: bias-corrected moments are exactly g and g^2, so
    // every step moves by lr * |g| / (|g| + eps).
    let per_step = 1e-3 / (1.0 + 1e-8);
    assert!((theta.as_slice()[0] + 7.0 * per_step).abs() < 1e-15);
}

#[test]
fn overflowing_update_is_an_error() {
    let mut state = OptimizerState::new(OptimizerSpec::sgd(1e300), 1).unwrap();
    let mut theta = ParamVector::new(vec![1e300]).unwrap();
    assert!(state.step(&mut theta, &ParamVector::new(vec![-1e300]).unwrap()).is_err());
}
