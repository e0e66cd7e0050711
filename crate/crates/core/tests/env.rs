use poir::env::{generate_demos, run_episode, Env, EnvConfig, EnvName};
use poir::seed;

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[test]
fn reset_noise_has_requested_std() {
    for env_name in [EnvName::PointReach, EnvName::ToyLift] {
        let cfg = EnvConfig {
            env_name,
            sigma_init: 0.1,
            ..EnvConfig::default()
        };
        let nominal = Env::reset(EnvConfig { sigma_init: 0.0, ..cfg }, 0).unwrap().state()[0];
        let xs: Vec<f64> = (0..10_000)
            .map(|i| Env::reset(cfg, seed::derive(3, "reset-std", i)).unwrap().state()[0] - nominal)
            .collect();
        let (mean, std) = mean_std(&xs);
        assert!(mean.abs() < 0.005, "{env_name}: mean {mean}");
        assert!((std / 0.1 - 1.0).abs() < 0.05, "{env_name}: std {std}");
    }
}

#[test]
fn action_noise_propagates_linearly() {
    // From rest with zero command the one-step displacement is
    // gain * dt * noise, so its std is 0.1 * (0.2 * 0.1).
    let cfg = EnvConfig {
        env_name: EnvName::PointReach,
        sigma_init: 0.0,
        sigma_action: 0.1,
        horizon: 1,
    };
    let deltas: Vec<f64> = (0..10_000)
        .map(|i| {
            let mut env = Env::reset(cfg, seed::derive(5, "noise-prop", i)).unwrap();
            let before = env.state()[0];
            env.step(&[0.0, 0.0]).unwrap().next_state[0] - before
        })
        .collect();
    let (_, std) = mean_std(&deltas);
    let expected = 0.1 * (0.2 * 0.1);
    assert!(
        ((std * std) / (expected * expected) - 1.0).abs() < 0.1,
        "std {std} vs {expected}"
    );
}

#[test]
fn identical_calls_give_identical_states() {
    let cfg = EnvConfig::default();
    let mut a = Env::reset(cfg, 11).unwrap();
    let mut b = Env::reset(cfg, 11).unwrap();
    for _ in 0..10 {
        assert_eq!(a.step(&[0.3, -0.7]).unwrap(), b.step(&[0.3, -0.7]).unwrap());
    }
}

#[test]
fn scripted_experts_are_proficient() {
    for env_name in [EnvName::PointReach, EnvName::ToyLift] {
        let cfg = EnvConfig::demo(env_name, 100);
        let wins = (0..200)
            .filter(|&i| {
                run_episode(cfg, seed::derive(1, "expert-check", i), |s| {
                    Ok(env_name.scripted_expert(s))
                })
                .unwrap()
                .success
            })
            .count();
        assert!(wins >= 190, "{env_name}: {wins}/200");
    }
}

#[test]
fn random_policy_rarely_lifts() {
    use rand::Rng as _;
    let cfg = EnvConfig::demo(EnvName::ToyLift, 100);
    let mut rng = seed::rng(2);
    let wins = (0..200)
        .filter(|&i| {
            run_episode(cfg, seed::derive(1, "random-check", i), |_| {
                Ok((0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            })
            .unwrap()
            .success
        })
        .count();
    assert!(wins <= 10, "{wins}/200");
}

#[test]
fn demo_generation_is_seeded() {
    let a = generate_demos(EnvName::ToyLift, 100, 5, 9).unwrap();
    let b = generate_demos(EnvName::ToyLift, 100, 5, 9).unwrap();
    let c = generate_demos(EnvName::ToyLift, 100, 5, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
