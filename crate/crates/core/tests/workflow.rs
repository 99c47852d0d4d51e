use lsdn_core::demos::{build_demonstrators, generate_demos, DemoDataset, Demonstrator};
use lsdn_core::games::{run_episode, EnvId};
use lsdn_core::gradcore::Checkpoint;
use lsdn_core::lsdn::{train, LsdnPolicy, ModelBundle, ModelConfig};
use proptest::prelude::*;

fn demos(
    env: EnvId,
    leader: Demonstrator,
    follower: Demonstrator,
    episodes: usize,
    seed: u64,
) -> DemoDataset {
    let (l, f) = build_demonstrators(env, leader, follower, seed).unwrap();
    generate_demos(env, &l, &f, (leader.id(), follower.id()), episodes, seed).unwrap()
}

fn tiny(base: ModelConfig) -> ModelConfig {
    ModelConfig {
        total_iterations: 20,
        kl_anneal_iterations: 5,
        checkpoint_every: 5,
        batch_size: 4,
        seed: 3,
        ..base
    }
}

#[test]
fn ipd_demos_train_and_roll_out() {
    let ds = demos(EnvId::Ipd, Demonstrator::Q, Demonstrator::TftImp, 10, 3);
    let back = DemoDataset::from_reader(ds.to_bytes().as_slice()).unwrap();
    assert_eq!(back, ds);

    let trained = train::<f64>(EnvId::Ipd, tiny(ModelConfig::ipd()), &ds.trajectories).unwrap();
    assert_eq!(trained.history.checkpoints.len(), 4);
    assert!(trained.selected < 4);
    let policy = LsdnPolicy::new(trained.model);
    let t = run_episode(EnvId::Ipd, &policy, &policy, EnvId::Ipd.horizon(), 0, 99).unwrap();
    assert_eq!(t.records.len(), EnvId::Ipd.horizon());
    t.validate().unwrap();
    let again = run_episode(EnvId::Ipd, &policy, &policy, EnvId::Ipd.horizon(), 0, 99).unwrap();
    assert_eq!(t, again);
}

#[test]
fn model_checkpoint_round_trips_through_bytes() {
    let ds = demos(EnvId::Ipd, Demonstrator::Q, Demonstrator::TftDef, 6, 5);
    let model = train::<f64>(EnvId::Ipd, tiny(ModelConfig::ipd()), &ds.trajectories)
        .unwrap()
        .model;
    let ckpt = Checkpoint::from_bytes(&model.to_checkpoint().to_bytes()).unwrap();
    let loaded = ModelBundle::<f64>::from_checkpoint(&ckpt).unwrap();
    assert_eq!(loaded.config, model.config);
    let z = vec![0.3; model.config.latent_dim];
    assert_eq!(
        loaded.decode_values(&z).unwrap(),
        model.decode_values(&z).unwrap()
    );
}

#[test]
fn single_precision_model_trains() {
    let ds = demos(EnvId::Ipd, Demonstrator::Q, Demonstrator::TftImp, 6, 11);
    let trained = train::<f32>(EnvId::Ipd, tiny(ModelConfig::ipd()), &ds.trajectories).unwrap();
    assert!(trained
        .history
        .checkpoints
        .iter()
        .all(|c| c.kl.is_finite() && c.recon_nll.is_finite() && c.inverse_ce.is_finite()));
}

#[test]
fn predator_prey_model_rolls_out_full_episodes() {
    let ds = demos(
        EnvId::Predatorprey,
        Demonstrator::Chaser,
        Demonstrator::Evader,
        3,
        2,
    );
    let cfg = ModelConfig {
        total_iterations: 8,
        checkpoint_every: 2,
        kl_anneal_iterations: 2,
        ..tiny(ModelConfig::mpe_desk())
    };
    let trained = train::<f64>(EnvId::Predatorprey, cfg, &ds.trajectories).unwrap();
    let policy = LsdnPolicy::new(trained.model);
    let h = EnvId::Predatorprey.horizon();
    let t = run_episode(EnvId::Predatorprey, &policy, &policy, h, 1, 21).unwrap();
    assert_eq!(t.records.len(), h);
    assert!(t
        .records
        .iter()
        .all(|r| r.action < EnvId::Predatorprey.num_actions()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ipd_datasets_round_trip(seed in 0u64..1000, episodes in 1usize..6) {
        let ds = demos(EnvId::Ipd, Demonstrator::ConstC, Demonstrator::TftImp, episodes, seed);
        let back = DemoDataset::from_reader(ds.to_bytes().as_slice()).unwrap();
        prop_assert_eq!(back.to_bytes(), ds.to_bytes());
        prop_assert_eq!(back.trajectories.len(), episodes);
    }
}
