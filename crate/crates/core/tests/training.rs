use compressnet::config::{ModelConfig, Variant};
use compressnet::data::{synthetic_corpus, synthetic_image, DataConfig, PatchDataset};
use compressnet::losses::{mse_loss, LossWeights};
use compressnet::train::{load_model, Checkpoint, TrainConfig, Trainer};
use compressnet::{Error, ImageTensor};

fn small_config(variant: Variant) -> TrainConfig {
    TrainConfig {
        model: ModelConfig::desk(variant, 4),
        epochs: 4,
        batch: 2,
        eval_every: 2,
        data: DataConfig { patch_size: 32, num_patches: 4, ..DataConfig::default() },
        ..TrainConfig::default()
    }
}

fn dataset(cfg: &TrainConfig) -> PatchDataset {
    PatchDataset::new(&synthetic_corpus(), &cfg.data).unwrap()
}

fn batch() -> Vec<ImageTensor> {
    vec![synthetic_image(2, 32), synthetic_image(5, 32)]
}

fn stacked(batch: &[ImageTensor]) -> autograd::Tensor {
    autograd::Tensor::stack(&batch.iter().map(ImageTensor::to_nchw).collect::<Vec<_>>())
}

#[test]
fn reconstruction_only_objective_lowers_mse_on_a_fixed_batch() {
    let cfg = TrainConfig {
        lambda_gan: 0.0,
        weights: LossWeights::new(1.0, 0.0, 0.0).unwrap(),
        lr_eg: 1e-3,
        ..small_config(Variant::Plain)
    };
    let mut trainer = Trainer::new(cfg).unwrap();
    let b = batch();
    let fake = trainer.generate(&b).unwrap();
    let first = trainer.train_step(&b).unwrap();
    // The reported MSE is the pixel MSE of the training-mode reconstruction.
    let expected: f64 = b
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let out = compressnet::Grid::from_nchw(&fake, i);
            mse_loss(img.grid(), &out).unwrap()
        })
        .sum::<f64>()
        / b.len() as f64;
    assert!((first.parts.mse - expected).abs() < 1e-12);
    let mut last = first.parts.mse;
    for _ in 0..15 {
        last = trainer.train_step(&b).unwrap().parts.mse;
    }
    assert!(last < 0.9 * first.parts.mse, "{} -> {last}", first.parts.mse);
}

#[test]
fn discriminator_update_touches_only_discriminator_parameters() {
    let trainer = Trainer::new(small_config(Variant::SaeSpn)).unwrap();
    let b = batch();
    let mut split = trainer.clone();
    let mut joint = trainer.clone();

    let fake = split.generate(&b).unwrap();
    let d_split = split.update_discriminator(&stacked(&b), &fake).unwrap();
    let original = trainer.model().stores();
    let updated = split.model().stores();
    let last = original.len() - 1;
    for (i, (a, u)) in original.iter().zip(&updated).enumerate() {
        let same = a.iter().zip(u.iter()).all(|((_, x), (_, y))| x == y);
        assert_eq!(same, i != last, "store {i}");
    }

    let m = joint.train_step(&b).unwrap();
    assert_eq!(m.d_loss, d_split);
    let disc = |t: &Trainer| t.model().stores()[last].iter().map(|(_, v)| v.clone()).collect::<Vec<_>>();
    assert_eq!(disc(&joint), disc(&split));
}

#[test]
fn equal_seeds_give_equal_runs() {
    let cfg = small_config(Variant::SaeAll);
    let data = dataset(&cfg);
    let mut a = Trainer::new(cfg.clone()).unwrap();
    let mut b = Trainer::new(cfg.clone()).unwrap();
    assert_eq!(a.run_epoch(&data).unwrap(), b.run_epoch(&data).unwrap());
    let mut c = Trainer::new(TrainConfig { seed: 7, ..cfg }).unwrap();
    assert_ne!(a.history(), std::slice::from_ref(&c.run_epoch(&data).unwrap()));
}

#[test]
fn learning_rates_decay_per_interval() {
    let cfg = TrainConfig { decay_interval: 1, epochs: 3, eval_every: 0, ..small_config(Variant::Plain) };
    let data = dataset(&cfg);
    let mut trainer = Trainer::new(cfg).unwrap();
    trainer.fit(&data).unwrap();
    let (g, d) = trainer.learning_rates();
    assert!((g - 5e-4).abs() < 1e-15, "{g}");
    assert!((d - 5e-6).abs() < 1e-18, "{d}");
}

#[test]
fn checkpoint_reproduces_the_model_bit_exactly() {
    let cfg = TrainConfig { epochs: 1, ..small_config(Variant::Swwae) };
    let data = dataset(&cfg);
    let mut trainer = Trainer::new(cfg).unwrap();
    trainer.fit(&data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    trainer.checkpoint().save(&path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded.digest(), trainer.model().digest());
    let img = synthetic_image(9, 32);
    assert_eq!(loaded.reconstruct(&img).unwrap(), trainer.model().reconstruct(&img).unwrap());
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.history, trainer.history());
    assert_eq!(back.config.to_key_values().render(), trainer.config().to_key_values().render());
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let cfg = small_config(Variant::SaeSpn);
    let data = dataset(&cfg);
    let mut straight = Trainer::new(cfg.clone()).unwrap();
    straight.fit(&data).unwrap();

    let mut first = Trainer::new(cfg).unwrap();
    first.fit_until(&data, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("half.ckpt");
    first.checkpoint().save(&path).unwrap();
    drop(first);
    let mut resumed = Trainer::from_checkpoint(Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(resumed.epoch(), 2);
    resumed.fit(&data).unwrap();

    assert_eq!(resumed.history(), straight.history());
    assert_eq!(resumed.model().digest(), straight.model().digest());
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let trainer = Trainer::new(small_config(Variant::Plain)).unwrap();
    let bytes = trainer.checkpoint().to_bytes().unwrap();
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 0x10;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::DigestMismatch { .. })));
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(Error::Corruption(_))));
    let mut version = bytes.clone();
    version[4] = 99;
    assert!(matches!(Checkpoint::from_bytes(&version), Err(Error::UnsupportedVersion(99))));
}

#[test]
fn non_finite_parameters_abort_training() {
    let trainer = Trainer::new(small_config(Variant::Plain)).unwrap();
    let mut ckpt = trainer.checkpoint();
    let disc = ckpt.params.last_mut().unwrap();
    disc[0].data_mut()[0] = f64::NAN;
    let mut broken = Trainer::from_checkpoint(ckpt).unwrap();
    match broken.train_step(&batch()) {
        Err(Error::TrainingAbort { component }) => assert_eq!(component, "d_loss"),
        other => panic!("expected an abort, got {other:?}"),
    }
}

#[test]
fn shipped_desk_config_parses() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.cfg");
    let kv = compressnet::config::KeyValues::load(path).unwrap();
    let cfg = TrainConfig::from_key_values(&kv).unwrap();
    assert_eq!(cfg.model, ModelConfig::desk(Variant::SaeSpn, 4));
    assert_eq!((cfg.batch, cfg.decay_interval, cfg.epochs), (1, 100, 200));
    assert_eq!(cfg.data.patch_size, 64);
    assert!(cfg.data_dir.is_none());
}
