use finnger_core::model::{FinngerModel, ModelError};
use finnger_core::nn::{nll_backward, nll_loss, Mode};
use finnger_core::optimizer::{Adam, AdamConfig};
use finnger_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(n: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * 3 * 96 * 96).map(|_| rng.random::<f32>()).collect();
    Tensor::from_vec(&[n, 3, 96, 96], data).unwrap()
}

#[test]
fn full_width_shape_trace() {
    let model = FinngerModel::build(42, 1.0).unwrap();
    let trace = model.shape_trace(&random_batch(1, 1)).unwrap();
    let shapes: Vec<(&str, &[usize])> = trace.iter().map(|(n, s)| (n.as_str(), s.as_slice())).collect();
    let want: Vec<(&str, &[usize])> = vec![
        ("C1.conv1", &[64, 96, 96]),
        ("C1.bn1", &[64, 96, 96]),
        ("C1.conv2", &[64, 96, 96]),
        ("C1.bn2", &[64, 96, 96]),
        ("C1.maxpool", &[64, 48, 48]),
        ("C1.dropout", &[64, 48, 48]),
        ("C2.conv1", &[128, 48, 48]),
        ("C2.bn1", &[128, 48, 48]),
        ("C2.conv2", &[128, 48, 48]),
        ("C2.bn2", &[128, 48, 48]),
        ("C2.maxpool", &[128, 24, 24]),
        ("C2.dropout", &[128, 24, 24]),
        ("C3.conv1", &[128, 24, 24]),
        ("C3.bn1", &[128, 24, 24]),
        ("C3.conv2", &[128, 24, 24]),
        ("C3.bn2", &[128, 24, 24]),
        ("C3.maxpool", &[128, 12, 12]),
        ("C3.dropout", &[128, 12, 12]),
        ("flatten", &[18432]),
        ("fc1", &[128]),
        ("fc2.log_softmax", &[6]),
    ];
    assert_eq!(shapes, want);
}

#[test]
fn quarter_width_channels() {
    let model = FinngerModel::build(42, 0.25).unwrap();
    let channels: Vec<usize> = model.blocks.iter().map(|b| b.conv1.out_channels()).collect();
    assert_eq!(channels, [16, 32, 32]);
    assert_eq!(model.fc1.inputs(), 32 * 12 * 12);
    assert_eq!(model.fc1.outputs(), 32);
    let trace = model.shape_trace(&random_batch(3, 2)).unwrap();
    assert_eq!(trace.last().unwrap().1, vec![6]);
}

#[test]
fn invalid_width_scale() {
    assert!(matches!(FinngerModel::build(1, 0.3), Err(ModelError::InvalidWidthScale(_))));
    assert!(matches!(FinngerModel::build(1, 2.0), Err(ModelError::InvalidWidthScale(_))));
}

#[test]
fn seeding_is_deterministic() {
    let a = FinngerModel::build(7, 0.125).unwrap();
    let b = FinngerModel::build(7, 0.125).unwrap();
    let c = FinngerModel::build(8, 0.125).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn forward_emits_log_probabilities() {
    let mut model = FinngerModel::build(3, 0.25).unwrap();
    let x = random_batch(4, 3);
    let out = model.infer(&x).unwrap();
    assert_eq!(out.dims(), &[4, 6]);
    for row in out.data().chunks(6) {
        let total: f64 = row.iter().map(|&v| (v as f64).exp()).sum();
        assert!((total - 1.0).abs() < 1e-5);
    }
    let again = model.infer(&x).unwrap();
    assert_eq!(out.data(), again.data());
    assert!(model.predict(&x).unwrap().iter().all(|&c| c < 6));

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    model.set_mode(Mode::Train);
    let train = model.forward(&x, &mut rng).unwrap();
    assert_eq!(train.dims(), &[4, 6]);
}

#[test]
fn rejects_wrong_input_shape() {
    let model = FinngerModel::build(3, 0.125).unwrap();
    let x = Tensor::zeros(&[1, 3, 64, 64]).unwrap();
    assert!(matches!(model.infer(&x), Err(ModelError::InputShape(_))));
    let x = Tensor::zeros(&[1, 1, 96, 96]).unwrap();
    assert!(matches!(model.infer(&x), Err(ModelError::InputShape(_))));
}

fn trained_a_little(seed: u64) -> FinngerModel {
    let mut model = FinngerModel::build(seed, 0.125).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_batch(2, seed);
    let cache = model.forward_train(&x, &mut rng).unwrap();
    let g = nll_backward(cache.log_probs(), &[1, 4]).unwrap();
    let grads = model.backward(&cache, &g).unwrap();
    let mut adam = Adam::new(AdamConfig::default(), model.parameters());
    adam.step(&mut model.parameters_mut(), &grads).unwrap();
    model
}

#[test]
fn save_load_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.fngr");
    let model = trained_a_little(5);
    let info = model.save(&path).unwrap();
    let (loaded, loaded_info) = FinngerModel::load_with_info(&path).unwrap();
    assert_eq!(info, loaded_info);
    assert_eq!(loaded.width_scale(), model.width_scale());
    assert_eq!(loaded, model);
    let x = random_batch(2, 9);
    let a = model.infer(&x).unwrap();
    let b = loaded.infer(&x).unwrap();
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert!(info.version_string().starts_with("fngr-v1-w0.125-"));
}

#[test]
fn corrupted_files_are_rejected() {
    let bytes = trained_a_little(6).to_bytes();

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(FinngerModel::from_bytes(&bad_magic), Err(ModelError::BadMagic)));

    let mut bad_version = bytes.clone();
    bad_version[4] = 2;
    assert!(matches!(FinngerModel::from_bytes(&bad_version), Err(ModelError::UnsupportedVersion(2))));

    let truncated = &bytes[..bytes.len() / 2];
    assert!(matches!(FinngerModel::from_bytes(truncated), Err(ModelError::Truncated)));
    assert!(matches!(FinngerModel::from_bytes(&bytes[..6]), Err(ModelError::Truncated)));

    let mut flipped = bytes.clone();
    let mid = bytes.len() - 100;
    flipped[mid] ^= 0x40;
    assert!(matches!(FinngerModel::from_bytes(&flipped), Err(ModelError::Checksum { .. })));

    let mut bad_width = bytes.clone();
    bad_width[8..12].copy_from_slice(&0.3f32.to_le_bytes());
    assert!(matches!(FinngerModel::from_bytes(&bad_width), Err(ModelError::Architecture(_))));
}

#[test]
fn one_step_reduces_batch_loss() {
    let mut improved = 0;
    for seed in 0..20u64 {
        let mut model = FinngerModel::build(seed, 0.25).unwrap();
        let x = random_batch(4, 100 + seed);
        let labels = [0, 2, 4, 5];
        let loss_with = |m: &mut FinngerModel| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cache = m.forward_train(&x, &mut rng).unwrap();
            (nll_loss(cache.log_probs(), &labels).unwrap(), cache)
        };
        let (before, cache) = loss_with(&mut model);
        let grads = model.backward(&cache, &nll_backward(cache.log_probs(), &labels).unwrap()).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), model.parameters());
        adam.step(&mut model.parameters_mut(), &grads).unwrap();
        let (after, _) = loss_with(&mut model);
        if after < before {
            improved += 1;
        }
    }
    assert!(improved >= 19, "{improved}/20 steps reduced the loss");
}
