use std::path::PathBuf;

use poir::data::save_dataset;
use poir::env::{generate_demos, EnvName};
use poir::harness::{
    evaluate_with, read_csv, run_offline, run_online, run_seed, run_sweep, write_csv, Agent, AgentKind, Bundle,
    ExperimentConfig, ExpertData, SweepAxis, SweepSpec,
};
use poir::reward::RewardSpec;
use poir::Error;

/// Small enough to train in well under a second.
fn tiny(agent: AgentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.agent = agent;
    cfg.seeds = vec![0];
    cfg.demos.episodes = 10;
    cfg.env.horizon = 30;
    cfg.network.hidden_width = 8;
    cfg.ensemble_size = 2;
    cfg.bc_train.epochs = 2;
    cfg.wm_train.epochs = 2;
    cfg.planner.num_trajectories = 10;
    cfg.planner.top_k = 1;
    cfg.schedule.total_env_steps = 60;
    cfg.schedule.eval_every = 30;
    cfg.schedule.eval_episodes = 2;
    cfg.schedule.train_every = 10;
    cfg.schedule.grad_steps_per_round = 5;
    cfg.schedule.batch_size = 16;
    cfg
}

#[test]
fn every_agent_kind_runs_through_the_same_loop() {
    for agent in [
        AgentKind::Poir,
        AgentKind::Ebc,
        AgentKind::BcSingle,
        AgentKind::PoirNoPrior,
    ] {
        let cfg = tiny(agent);
        let expert = ExpertData::prepare(&cfg).unwrap();
        let rs = run_seed(&cfg, 0);
        let report = run_online(run_offline(&cfg, &expert, rs).unwrap(), &cfg, &expert, 0, rs).unwrap();
        assert_eq!(report.rows.len(), 3, "{agent}");
        let steps: Vec<usize> = report.rows.iter().map(|r| r.env_step).collect();
        assert_eq!(steps, vec![0, 30, 60]);
        // evaluation episodes never enter the agent buffer
        assert_eq!(report.agent_transitions, 60);
        let expected_steps = if agent.uses_planner() { 6 * 5 } else { 0 };
        assert_eq!(report.gradient_steps, expected_steps, "{agent}");
    }
}

#[test]
fn zero_online_steps_reports_the_offline_evaluation() {
    let mut cfg = tiny(AgentKind::Poir);
    cfg.schedule.total_env_steps = 0;
    cfg.schedule.eval_every = 1;
    let expert = ExpertData::prepare(&cfg).unwrap();
    let rs = run_seed(&cfg, 0);
    let bundle = run_offline(&cfg, &expert, rs).unwrap();
    let offline = {
        let agent = Agent::new(&bundle, &cfg).unwrap();
        poir::harness::evaluate(
            &agent,
            cfg.env,
            cfg.schedule.eval_episodes,
            poir::seed::derive(rs, "eval", 0),
        )
        .unwrap()
    };
    let report = run_online(bundle, &cfg, &expert, 0, rs).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].success_rate, offline.success_rate);
    assert_eq!(report.rows[0].mean_return, offline.mean_return);
}

#[test]
fn disabled_training_keeps_the_models_fixed() {
    let mut cfg = tiny(AgentKind::Poir);
    cfg.schedule.train_every = 0;
    let expert = ExpertData::prepare(&cfg).unwrap();
    let rs = run_seed(&cfg, 0);
    let bundle = run_offline(&cfg, &expert, rs).unwrap();
    let before = bundle.world_model.as_ref().unwrap().live().clone();
    let report = run_online(bundle, &cfg, &expert, 0, rs).unwrap();
    assert_eq!(report.gradient_steps, 0);
    assert!(report.rows.iter().all(|r| r.mixture_ratio == 0.0));
    assert_eq!(report.bundle.world_model.as_ref().unwrap().live(), &before);
}

#[test]
fn success_rate_is_an_exact_fraction() {
    let cfg = tiny(AgentKind::Ebc);
    let expert = ExpertData::prepare(&cfg).unwrap();
    // a policy that succeeds on a fixed subset of episodes: the expert on
    // 13 of 20 episodes, zero action otherwise
    let mut episode = 0usize;
    let mut t = 0usize;
    let res = evaluate_with(
        |s, _| {
            let a = if episode % 20 < 13 {
                EnvName::PointReach.scripted_expert(s)
            } else {
                vec![0.0, 0.0]
            };
            t += 1;
            if t == cfg.env.horizon {
                t = 0;
                episode += 1;
            }
            Ok(a)
        },
        &RewardSpec::l2(expert.index.clone()),
        &expert.normalizer,
        cfg.env,
        20,
        7,
    )
    .unwrap();
    assert_eq!(res.successes, 13);
    assert_eq!(res.success_rate, 0.65);
}

#[test]
fn missing_demo_file_names_the_path() {
    let mut cfg = tiny(AgentKind::Poir);
    cfg.demos.path = Some(PathBuf::from("/nonexistent/demos.jsonl"));
    let err = ExpertData::prepare(&cfg).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
    assert!(err.to_string().contains("/nonexistent/demos.jsonl"));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn demo_files_feed_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demos.jsonl");
    save_dataset(&path, &generate_demos(EnvName::PointReach, 30, 10, 4).unwrap()).unwrap();
    let mut cfg = tiny(AgentKind::Ebc);
    cfg.demos.path = Some(path);
    let expert = ExpertData::prepare(&cfg).unwrap();
    assert_eq!(expert.demos.len(), 10);
    run_offline(&cfg, &expert, 1).unwrap();
}

#[test]
fn checkpoints_are_deterministic_and_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(AgentKind::Poir);
    let expert = ExpertData::prepare(&cfg).unwrap();
    let a = run_offline(&cfg, &expert, 5).unwrap();
    let b = run_offline(&cfg, &expert, 5).unwrap();
    let (pa, pb) = (dir.path().join("a.json"), dir.path().join("b.json"));
    a.save(&pa).unwrap();
    b.save(&pb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());

    let loaded = Bundle::load(&pa, &cfg, &expert).unwrap();
    let s = expert.demos[0].transitions()[3].state.clone();
    let act = |bundle: &Bundle| {
        Agent::new(bundle, &cfg)
            .unwrap()
            .act(&s, &mut poir::seed::rng(1))
            .unwrap()
    };
    assert_eq!(act(&a), act(&loaded));
}

#[test]
fn sweep_is_deterministic_and_parallel_safe() {
    let mut cfg = tiny(AgentKind::Poir);
    cfg.seeds = vec![0, 1];
    cfg.schedule.total_env_steps = 30;
    let expert = ExpertData::prepare(&cfg).unwrap();
    let spec = SweepSpec {
        axis: SweepAxis::SigmaInit,
        levels: vec![0.02, 0.2],
        agents: vec![AgentKind::Poir, AgentKind::Ebc],
    };
    let serial = run_sweep(&cfg, &spec, &expert).unwrap();
    assert!(serial.failures.is_empty());
    // two seeds x two agents x two levels, each run: two evaluations + two summaries
    assert_eq!(serial.rows.len(), 2 * 2 * 2 * 4);
    cfg.jobs = 3;
    let parallel = run_sweep(&cfg, &spec, &expert).unwrap();
    assert_eq!(serial.rows, parallel.rows);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    write_csv(&path, &serial.rows).unwrap();
    assert_eq!(read_csv(&path).unwrap(), serial.rows);
}

#[test]
fn sweep_rejects_empty_levels() {
    let cfg = tiny(AgentKind::Ebc);
    let expert = ExpertData::prepare(&cfg).unwrap();
    let spec = SweepSpec {
        axis: SweepAxis::SigmaAction,
        levels: vec![],
        agents: vec![AgentKind::Ebc],
    };
    assert!(matches!(run_sweep(&cfg, &spec, &expert), Err(Error::InvalidConfig(_))));
}
