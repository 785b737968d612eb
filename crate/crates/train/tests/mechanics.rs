use std::path::Path;

use catwgan_core::losses::{conditional_entropy, ClassPosteriorBatch};
use catwgan_core::nets::ArchConfig;
use catwgan_core::{Checkpoint, Tensor};
use catwgan_train::{DaeTrainer, LabeledPool, Pools, TrainConfig, TrainError, TrainMode, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        image_side: 8,
        base_width: 4,
        feature_width: 8,
        latent_dim: 6,
        classes: 2,
        critic_depth: 1,
        critic_width: 4,
        plain_logit_head: false,
    }
}

fn tiny_config(mode: TrainMode) -> TrainConfig {
    TrainConfig {
        mode,
        batch_size: 8,
        max_g_iters: 100,
        checkpoint_every: 50,
        seed: 11,
        arch: tiny_arch(),
        ..TrainConfig::default()
    }
}

fn random_images(n: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * 3 * 64).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor::new(&[n, 3, 8, 8], data).unwrap()
}

fn pools(semi: bool) -> Pools {
    let labeled = semi.then(|| LabeledPool { images: random_images(10, 2), labels: (0..10).map(|i| i % 2).collect() });
    Pools { unlabeled: random_images(40, 1), labeled }
}

fn trainable(t: &Trainer) -> Vec<Vec<Tensor<f32>>> {
    [&t.g, &t.d1, &t.d2]
        .iter()
        .map(|n| n.params().iter().filter(|p| p.trainable).map(|p| p.value.clone()).collect())
        .collect()
}

fn all_params(t: &Trainer) -> Vec<Vec<Tensor<f32>>> {
    [&t.g, &t.d1, &t.d2].iter().map(|n| n.params().iter().map(|p| p.value.clone()).collect()).collect()
}

#[test]
fn one_iteration_updates_each_network_with_its_own_optimizer() {
    for mode in [TrainMode::Unsupervised, TrainMode::Semi] {
        let mut t = Trainer::new(tiny_config(mode)).unwrap();
        let before = trainable(&t);
        t.step(&pools(mode == TrainMode::Semi)).unwrap();
        assert_eq!((t.opt_d2.steps(), t.opt_d1.steps(), t.opt_g.steps()), (5, 1, 1));
        let after = trainable(&t);
        for (b, a) in before.iter().zip(&after) {
            assert!(b.iter().zip(a).all(|(x, y)| x != y), "every trainable tensor moves");
        }
        t.step(&pools(mode == TrainMode::Semi)).unwrap();
        assert_eq!((t.opt_d2.steps(), t.opt_d1.steps(), t.opt_g.steps()), (10, 2, 2));
    }
}

#[test]
fn critic_steps_sets_the_d2_ratio() {
    let mut t = Trainer::new(TrainConfig { critic_steps: 3, ..tiny_config(TrainMode::Unsupervised) }).unwrap();
    t.step(&pools(false)).unwrap();
    assert_eq!((t.opt_d2.steps(), t.opt_d1.steps(), t.opt_g.steps()), (3, 1, 1));
}

#[test]
fn evaluation_leaves_every_parameter_and_buffer_unchanged() {
    let mut t = Trainer::new(tiny_config(TrainMode::Semi)).unwrap();
    let before = all_params(&t);
    t.evaluate(&pools(true)).unwrap();
    assert_eq!(before, all_params(&t));
}

#[test]
fn zero_learning_rate_is_a_null_update() {
    let mut t = Trainer::new(TrainConfig { lr: 0.0, ..tiny_config(TrainMode::Semi) }).unwrap();
    let before = trainable(&t);
    t.step(&pools(true)).unwrap();
    assert_eq!(before, trainable(&t));
}

#[test]
fn step_stats_are_the_entropies_of_the_reported_posteriors() {
    let mut t = Trainer::new(tiny_config(TrainMode::Semi)).unwrap();
    let d = t.step(&pools(true)).unwrap();
    let s_r = conditional_entropy(&ClassPosteriorBatch::new(d.real_posteriors.clone()).unwrap()).unwrap();
    let s_g = conditional_entropy(&ClassPosteriorBatch::new(d.fake_posteriors.clone()).unwrap()).unwrap();
    assert!((d.stats.s_r - s_r as f64).abs() < 1e-5);
    assert!((d.stats.s_g - s_g as f64).abs() < 1e-5);
    assert!(d.stats.ce.is_some());
}

#[test]
fn semi_mode_without_labels_errors() {
    let mut t = Trainer::new(tiny_config(TrainMode::Semi)).unwrap();
    assert!(matches!(t.step(&pools(false)), Err(TrainError::MissingLabeled)));
}

#[test]
fn empty_pool_errors() {
    let mut t = Trainer::new(tiny_config(TrainMode::Unsupervised)).unwrap();
    let p = Pools { unlabeled: Tensor::zeros(&[0, 3, 8, 8]), labeled: None };
    assert!(matches!(t.step(&p), Err(TrainError::EmptyPool)));
}

#[test]
fn identical_seeds_give_identical_parameters() {
    let run = || {
        let mut t = Trainer::new(tiny_config(TrainMode::Semi)).unwrap();
        for _ in 0..3 {
            t.step(&pools(true)).unwrap();
        }
        all_params(&t)
    };
    assert_eq!(run(), run());
}

fn iterations(out: &Path) -> Vec<u64> {
    checkpoint_dirs(out).iter().map(|d| Checkpoint::read_manifest(d).unwrap().iteration).collect()
}

fn checkpoint_dirs(out: &Path) -> Vec<std::path::PathBuf> {
    let mut dirs: Vec<_> = std::fs::read_dir(out.join("checkpoints")).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    dirs
}

#[test]
fn checkpoint_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny_config(TrainMode::Unsupervised)).unwrap();
    t.run(&pools(false), Some(dir.path()), |_| {}).unwrap();
    assert_eq!(iterations(dir.path()), vec![0, 50, 100]);
    let g: Vec<u64> = t.stats().records.iter().map(|r| r.g_iter).collect();
    assert_eq!(g, vec![0, 50, 100]);
    assert!(dir.path().join("stats.csv").exists());

    let dir0 = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(TrainConfig { max_g_iters: 0, ..tiny_config(TrainMode::Unsupervised) }).unwrap();
    t.run(&pools(false), Some(dir0.path()), |_| {}).unwrap();
    assert_eq!(iterations(dir0.path()), vec![0]);
}

#[test]
fn resume_reproduces_an_uninterrupted_run_bit_exactly() {
    for mode in [TrainMode::Unsupervised, TrainMode::Semi] {
        let semi = mode == TrainMode::Semi;
        let full = tempfile::tempdir().unwrap();
        let mut a = Trainer::new(tiny_config(mode)).unwrap();
        a.run(&pools(semi), Some(full.path()), |_| {}).unwrap();

        let mid = Trainer::checkpoint_dir(full.path(), 50);
        let cont = tempfile::tempdir().unwrap();
        let mut b = Trainer::resume(&mid, tiny_config(mode)).unwrap();
        assert_eq!(b.g_iter(), 50);
        b.run(&pools(semi), Some(cont.path()), |_| {}).unwrap();

        assert_eq!(all_params(&a), all_params(&b));
        assert_eq!(a.stats().to_csv(), b.stats().to_csv());
        assert_eq!(a.checkpoint(), b.checkpoint());
        let end_a = Checkpoint::load(&Trainer::checkpoint_dir(full.path(), 100)).unwrap();
        let end_b = Checkpoint::load(&Trainer::checkpoint_dir(cont.path(), 100)).unwrap();
        assert_eq!(end_a, end_b);
    }
}

#[test]
fn resume_can_extend_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = Trainer::new(TrainConfig { max_g_iters: 50, ..tiny_config(TrainMode::Unsupervised) }).unwrap();
    a.run(&pools(false), Some(dir.path()), |_| {}).unwrap();
    let mut b = Trainer::resume(&Trainer::checkpoint_dir(dir.path(), 50), tiny_config(TrainMode::Unsupervised)).unwrap();
    b.run(&pools(false), None, |_| {}).unwrap();
    assert_eq!(b.g_iter(), 100);
    assert_eq!(b.stats().records.len(), 3);
}

#[test]
fn resume_with_a_changed_config_reports_the_difference() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(TrainConfig { max_g_iters: 0, ..tiny_config(TrainMode::Unsupervised) }).unwrap();
    t.run(&pools(false), Some(dir.path()), |_| {}).unwrap();
    let changed = TrainConfig { lambda_gp: 5.0, ..tiny_config(TrainMode::Unsupervised) };
    match Trainer::resume(&Trainer::checkpoint_dir(dir.path(), 0), changed) {
        Err(TrainError::ConfigMismatch(diff)) => {
            assert!(diff.contains("- lambda_gp = 10.0"), "{diff}");
            assert!(diff.contains("+ lambda_gp = 5.0"), "{diff}");
        }
        other => panic!("expected a mismatch, got {:?}", other.map(|t| t.g_iter())),
    }
}

#[test]
fn corrupted_blob_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let t = Trainer::new(tiny_config(TrainMode::Unsupervised)).unwrap();
    let ck_dir = dir.path().join("ck");
    t.checkpoint().save(&ck_dir).unwrap();
    let manifest = Checkpoint::read_manifest(&ck_dir).unwrap();
    let blob = ck_dir.join(&manifest.blobs[0].file);
    let mut bytes = std::fs::read(&blob).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    std::fs::write(&blob, bytes).unwrap();
    let err = Trainer::resume(&ck_dir, tiny_config(TrainMode::Unsupervised)).err().expect("corruption detected");
    assert!(err.to_string().contains(&manifest.blobs[0].name), "{err}");
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny_config(TrainMode::Semi)).unwrap();
    t.step(&pools(true)).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    t.checkpoint().save(&a).unwrap();
    Checkpoint::load(&a).unwrap().save(&b).unwrap();
    for e in Checkpoint::read_manifest(&a).unwrap().blobs {
        assert_eq!(std::fs::read(a.join(&e.file)).unwrap(), std::fs::read(b.join(&e.file)).unwrap());
    }
    assert_eq!(std::fs::read(a.join("manifest.toml")).unwrap(), std::fs::read(b.join("manifest.toml")).unwrap());
}

#[test]
fn dae_reconstruction_has_the_input_shape_and_sigma_zero_is_identity() {
    let x = random_images(4, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(catwgan_train::corrupt(&x, 0.0, &mut rng).unwrap(), x);
    let mut d = DaeTrainer::new(tiny_config(TrainMode::Unsupervised)).unwrap();
    assert_eq!(d.reconstruct(&x).unwrap().shape(), x.shape());
}

#[test]
fn dae_overfits_ten_images_monotonically() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut data = Vec::new();
    for _ in 0..10 {
        let (a, b, c): (f32, f32, f32) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.3..0.3));
        for ch in 0..3 {
            for y in 0..8 {
                for x in 0..8 {
                    data.push(c + 0.1 * ch as f32 + a * (x as f32 / 7.0 - 0.5) + b * (y as f32 / 7.0 - 0.5));
                }
            }
        }
    }
    let pool = Tensor::new(&[10, 3, 8, 8], data).unwrap();
    let cfg = TrainConfig {
        dae_noise_sigma: 0.0,
        batch_size: 10,
        lr: 2e-3,
        ..tiny_config(TrainMode::Unsupervised)
    };
    let mut d = DaeTrainer::new(cfg).unwrap();
    let mse: Vec<f64> = (0..20).map(|_| d.step_on(pool.clone()).unwrap()).collect();
    let violations = mse.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(violations <= 2, "{mse:?}");
    assert!(mse[19] < mse[0], "{mse:?}");
}
