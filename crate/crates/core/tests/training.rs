use rpg_core::dataio::synthetic_dataset;
use rpg_core::geometry::PointCloud;
use rpg_core::metrics::reconstruction_cd;
use rpg_core::model::{GeneratorConfig, Rpg};
use rpg_core::training::{
    encode_checkpoint, fit, load_checkpoint, load_checkpoint_for, loss_and_grad, LossWeights, TrainConfig, TrainError,
};

fn small(vae: bool) -> GeneratorConfig {
    GeneratorConfig {
        k_schedule: vec![4, 4],
        latent_width: 16,
        embed_width: 8,
        mlp_hidden: vec![32, 32],
        encoder_hidden: vec![16, 32],
        vae_mode: vae,
    }
}

fn data() -> Vec<PointCloud<f32>> {
    synthetic_dataset(16, 1, 3, 0.0).unwrap().clouds()
}

fn train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 2,
        learning_rate: 3e-3,
        seed: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn training_reduces_reconstruction_error() {
    let clouds = data();
    let config = small(false);
    let before = reconstruction_cd(&Rpg::init(config.clone(), 4).unwrap(), &clouds).unwrap().mean;
    let out = fit(&clouds, &config, &train(60), None, |_| {}).unwrap();
    let after = reconstruction_cd(&Rpg::new(config, out.params).unwrap(), &clouds).unwrap().mean;
    assert!(after < 0.5 * before, "{before} -> {after}");
    assert_eq!(out.log.len(), 60);
    assert_eq!(out.optimizer.step, 60 * 3);
    for e in &out.log {
        assert!(e.reg > 0.0 && e.reg <= 1.0);
        assert_eq!(e.kl, 0.0);
    }
}

#[test]
fn same_seed_gives_identical_runs() {
    let clouds = data();
    for vae in [false, true] {
        let a = fit(&clouds, &small(vae), &train(5), None, |_| {}).unwrap();
        let b = fit(&clouds, &small(vae), &train(5), None, |_| {}).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.params, b.params);
        if vae {
            assert!(a.log.iter().all(|e| e.kl > 0.0));
        }
    }
}

#[test]
fn checkpoints_restore_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let clouds = data();
    let mut t = train(4);
    t.save_every = 2;
    let out = fit(&clouds, &small(true), &t, Some(dir.path()), |_| {}).unwrap();
    for name in ["epoch_00002.rpgk", "epoch_00004.rpgk", "final.rpgk"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }

    let ck = load_checkpoint(&dir.path().join("final.rpgk")).unwrap();
    assert_eq!(ck.params, out.params);
    assert_eq!(ck.optimizer, out.optimizer);
    assert_eq!(ck.train, t);
    assert_eq!(encode_checkpoint(&ck).unwrap(), std::fs::read(dir.path().join("final.rpgk")).unwrap());

    let z: Vec<f32> = (0..16).map(|i| (i as f32 * 0.3).cos()).collect();
    let fresh = Rpg::new(small(true), out.params).unwrap();
    let restored = Rpg::new(ck.generator, ck.params).unwrap();
    assert_eq!(fresh.generate(&z).unwrap(), restored.generate(&z).unwrap());

    let mut other = small(true);
    other.embed_width = 6;
    match load_checkpoint_for(&dir.path().join("final.rpgk"), &other) {
        Err(TrainError::ShapeMismatch { name, .. }) => assert!(name.starts_with("param/"), "{name}"),
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn reparameterised_gradients_reach_both_heads() {
    let config = small(true);
    let params = rpg_core::model::init_parameters::<f64>(&config, 1).unwrap();
    let clouds: Vec<PointCloud<f64>> = data().iter().take(2).map(|c| c.cast()).collect();
    let noise = vec![vec![0.7; 16], vec![-0.4; 16]];
    let w = LossWeights { lambda: 0.0, beta: 0.0 };
    let (_, g) = loss_and_grad(&params, &clouds, &config, w, Some(&noise)).unwrap();
    let norm = |name: &str| {
        g.map(|n, t| (n == name).then(|| t.data().iter().map(|v| v * v).sum::<f64>()))
            .into_values()
            .into_iter()
            .flatten()
            .next()
            .unwrap()
    };
    assert!(norm("encoder.head.weight") > 0.0);
    assert!(norm("encoder.logvar.weight") > 0.0);
}

#[test]
fn regulariser_gradient_grows_with_lambda() {
    let config = small(false);
    let params = rpg_core::model::init_parameters::<f64>(&config, 2).unwrap();
    let clouds: Vec<PointCloud<f64>> = data().iter().take(3).map(|c| c.cast()).collect();
    let scale_head = |lambda: f64| {
        let (_, g) = loss_and_grad(&params, &clouds, &config, LossWeights { lambda, beta: 0.0 }, None).unwrap();
        g.map(|n, t| n.contains("scale").then(|| t.data().to_vec())).into_values().into_iter().flatten().flatten().collect::<Vec<f64>>()
    };
    let base = scale_head(0.0);
    let one = scale_head(1e-2);
    let two = scale_head(2e-2);
    assert!(!base.is_empty());
    for i in 0..base.len() {
        let (r1, r2) = ((one[i] - base[i]).abs(), (two[i] - base[i]).abs());
        assert!(r2 + 1e-15 >= r1, "{i}: {r1} vs {r2}");
    }
}
