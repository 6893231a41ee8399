//! Training-loop behavior: window arithmetic, loss baselines, descent,
//! checkpoint round trips, determinism, and resume equivalence.

use albumgen::audio_io::AudioClip;
use albumgen::dataset::{chunk, shuffle_split, Corpus, DatasetManifest, Split};
use albumgen::model::{init_model, ModelConfig, RecurrentState};
use albumgen::numeric::AdamConfig;
use albumgen::trainer::{
    check_resume_config, evaluate, load_checkpoint, resume, save_checkpoint, train, Checkpoint,
    TrainConfig, TrainError,
};

fn test_config() -> ModelConfig {
    ModelConfig {
        q_levels: 256,
        embed_dim: 8,
        hidden_dim: 16,
        n_rnn_layers: 1,
        frame_size: 4,
        sample_rate: 2000,
        tbptt_len: 32,
        batch_size: 4,
        ..ModelConfig::default()
    }
}

/// Sine-heavy corpus plus manifest with chunks of exactly `chunk_len`
/// samples, so every optimizer step is a state-reset boundary.
fn corpus_and_manifest(
    cfg: &ModelConfig,
    seconds: f64,
    chunk_len: usize,
    n_chunks: usize,
    fractions: (f64, f64, f64),
) -> (Corpus, DatasetManifest) {
    let rate = cfg.sample_rate;
    let n = (seconds * f64::from(rate)).round() as usize;
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(rate);
            0.6 * (std::f64::consts::TAU * 50.0 * t).sin()
                + 0.2 * (std::f64::consts::TAU * 120.0 * t).sin()
        })
        .collect();
    let clip = AudioClip::new(samples, rate).unwrap();
    let chunks = chunk(&clip, chunk_len as f64 / f64::from(rate), n_chunks).unwrap();
    let manifest = shuffle_split(
        "album",
        &chunks,
        9,
        rate,
        chunk_len as f64 / f64::from(rate),
        fractions,
    )
    .unwrap();
    let mut corpus = Corpus::new();
    corpus.insert("album", clip);
    (corpus, manifest)
}

fn train_dir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn one_minimal_chunk_is_one_step() {
    let cfg = test_config();
    let window = cfg.tbptt_len + cfg.frame_size;
    let (corpus, manifest) =
        corpus_and_manifest(&cfg, 0.5, window, 1, (1.0, 0.0, 0.0));
    assert_eq!(manifest.records.len(), 1);
    let model = init_model(&cfg, 3).unwrap();
    let tc = TrainConfig {
        epochs: 1,
        preview_seconds: 0.0,
        ..TrainConfig::default()
    };
    let dir = train_dir();
    let (_, report) = train(model, &manifest, &corpus, &tc, dir.path()).unwrap();
    assert_eq!(report.steps, 1);
}

#[test]
fn fresh_model_loss_is_near_uniform_baseline() {
    let cfg = test_config();
    let (corpus, manifest) =
        corpus_and_manifest(&cfg, 2.0, cfg.tbptt_len + cfg.frame_size, 16, (1.0, 0.0, 0.0));
    let model = init_model(&cfg, 7).unwrap();
    let bits = evaluate(&model, &manifest, Split::Train, &corpus).unwrap();
    assert!((bits - 8.0).abs() < 0.5, "got {bits} bits/sample");
}

#[test]
fn zeroed_predictor_model_scores_exactly_log2_q() {
    let cfg = test_config();
    let (corpus, manifest) =
        corpus_and_manifest(&cfg, 1.0, cfg.tbptt_len + cfg.frame_size, 8, (1.0, 0.0, 0.0));
    let mut model = init_model(&cfg, 7).unwrap();
    for wn in [&mut model.pred1.w, &mut model.pred2.w, &mut model.pred3.w] {
        for x in wn.g.data_mut() {
            *x = 0.0;
        }
    }
    let bits = evaluate(&model, &manifest, Split::Train, &corpus).unwrap();
    assert!((bits - 8.0).abs() < 1e-12, "got {bits} bits/sample");
}

#[test]
fn evaluate_is_pure() {
    let cfg = test_config();
    let (corpus, manifest) =
        corpus_and_manifest(&cfg, 1.0, cfg.tbptt_len + cfg.frame_size, 8, (0.5, 0.0, 0.5));
    let model = init_model(&cfg, 11).unwrap();
    let a = evaluate(&model, &manifest, Split::Valid, &corpus).unwrap();
    let b = evaluate(&model, &manifest, Split::Valid, &corpus).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert!(matches!(
        evaluate(&model, &manifest, Split::Test, &corpus),
        Err(TrainError::InvalidInput { .. })
    ));
}

#[test]
fn single_adam_step_descends_on_fixed_batch() {
    let cfg = test_config();
    let window = cfg.tbptt_len + cfg.frame_size;
    // one batch of exactly batch_size chunks, all of one window
    let (corpus, manifest) =
        corpus_and_manifest(&cfg, 2.0, window, cfg.batch_size, (1.0, 0.0, 0.0));
    let model = init_model(&cfg, 5).unwrap();
    let before = evaluate(&model, &manifest, Split::Train, &corpus).unwrap();
    let tc = TrainConfig {
        epochs: 1,
        max_steps: Some(1),
        preview_seconds: 0.0,
        adam: AdamConfig { lr: 1e-4, ..AdamConfig::default() },
        seed: 1,
        ..TrainConfig::default()
    };
    let dir = train_dir();
    let (trained, report) = train(model, &manifest, &corpus, &tc, dir.path()).unwrap();
    assert_eq!(report.steps, 1);
    let after = evaluate(&trained, &manifest, Split::Train, &corpus).unwrap();
    assert!(after < before, "loss did not descend: {before} -> {after}");
}

#[test]
fn state_carry_differs_from_reset_but_stays_finite() {
    let cfg = test_config();
    let mut rng = albumgen::numeric::Rng::new(4);
    let model = init_model(&cfg, 21).unwrap();
    let window_len = cfg.tbptt_len + cfg.frame_size;
    let seq: Vec<u16> = (0..cfg.tbptt_len + window_len)
        .map(|_| (rng.next_u64() % 256) as u16)
        .collect();
    let first: Vec<Vec<u16>> = vec![seq[..window_len].to_vec()];
    let second: Vec<Vec<u16>> = vec![seq[cfg.tbptt_len..].to_vec()];

    let mut g1 = model.graph().unwrap();
    let out1 = g1
        .forward_window(&first, &RecurrentState::zeros(&cfg, 1))
        .unwrap();

    let mut g_carry = model.graph().unwrap();
    let carried = g_carry.forward_window(&second, &out1.state_out).unwrap();
    let mut g_reset = model.graph().unwrap();
    let reset = g_reset
        .forward_window(&second, &RecurrentState::zeros(&cfg, 1))
        .unwrap();

    let carried_logits = g_carry.tape.value(carried.logits);
    let reset_logits = g_reset.tape.value(reset.logits);
    assert!(carried_logits.all_finite() && reset_logits.all_finite());
    assert_ne!(carried_logits.data(), reset_logits.data());
}

#[test]
fn training_is_deterministic() {
    let cfg = test_config();
    let (corpus, manifest) =
        corpus_and_manifest(&cfg, 2.0, cfg.tbptt_len + cfg.frame_size, 12, (0.75, 0.0, 0.25));
    let tc = TrainConfig {
        epochs: 2,
        preview_seconds: 0.0,
        seed: 8,
        ..TrainConfig::default()
    };
    let run = |dir: &std::path::Path| {
        let model = init_model(&cfg, 2).unwrap();
        train(model, &manifest, &corpus, &tc, dir).unwrap()
    };
    let (m1, r1) = run(train_dir().path());
    let (m2, r2) = run(train_dir().path());
    assert_eq!(m1, m2);
    for (a, b) in r1.epochs.iter().zip(&r2.epochs) {
        assert_eq!(a.train_bits_per_sample.to_bits(), b.train_bits_per_sample.to_bits());
        assert_eq!(
            a.valid_bits_per_sample.map(f64::to_bits),
            b.valid_bits_per_sample.map(f64::to_bits)
        );
    }
}

#[test]
fn checkpoint_round_trip_preserves_forward_outputs() {
    let cfg = test_config();
    let (corpus, manifest) =
        corpus_and_manifest(&cfg, 1.0, cfg.tbptt_len + cfg.frame_size, 6, (1.0, 0.0, 0.0));
    let model = init_model(&cfg, 13).unwrap();
    let tc = TrainConfig {
        epochs: 1,
        preview_seconds: 0.0,
        seed: 3,
        ..TrainConfig::default()
    };
    let dir = train_dir();
    let (trained, report) = train(model, &manifest, &corpus, &tc, dir.path()).unwrap();
    let ckpt_path = report.checkpoints.last().unwrap();
    let loaded = load_checkpoint(ckpt_path).unwrap();
    let restored = loaded.model().unwrap();
    assert_eq!(restored, trained);

    let before = evaluate(&trained, &manifest, Split::Train, &corpus).unwrap();
    let after = evaluate(&restored, &manifest, Split::Train, &corpus).unwrap();
    assert_eq!(before.to_bits(), after.to_bits());
}

#[test]
fn checkpoint_error_paths_are_distinct() {
    let cfg = test_config();
    let dir = train_dir();
    let tc = TrainConfig::default();
    let ckpt = albumgen::trainer::initial_checkpoint(&cfg, 1, &tc).unwrap();
    let path = dir.path().join("x.ckpt");
    save_checkpoint(&path, &ckpt).unwrap();

    // corrupt magic
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    let bad_magic = dir.path().join("bad_magic.ckpt");
    std::fs::write(&bad_magic, &bytes).unwrap();
    assert!(matches!(
        load_checkpoint(&bad_magic),
        Err(TrainError::NotACheckpoint { .. })
    ));

    // truncated
    let good = std::fs::read(&path).unwrap();
    let cut = dir.path().join("cut.ckpt");
    std::fs::write(&cut, &good[..good.len() / 2]).unwrap();
    assert!(matches!(
        load_checkpoint(&cut),
        Err(TrainError::CorruptCheckpoint { .. })
    ));

    // config mismatch guard on resume
    let other = ModelConfig { hidden_dim: 32, ..cfg.clone() };
    let loaded = load_checkpoint(&path).unwrap();
    assert!(check_resume_config(&loaded, &cfg).is_ok());
    assert!(matches!(
        check_resume_config(&loaded, &other),
        Err(TrainError::ConfigMismatch { .. })
    ));
}

#[test]
fn checkpoint_bytes_round_trip_exactly() {
    let cfg = test_config();
    let tc = TrainConfig::default();
    let ckpt: Checkpoint = albumgen::trainer::initial_checkpoint(&cfg, 77, &tc).unwrap();
    let dir = train_dir();
    let path = dir.path().join("rt.ckpt");
    save_checkpoint(&path, &ckpt).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, ckpt);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let cfg = test_config();
    let (corpus, manifest) =
        corpus_and_manifest(&cfg, 2.0, cfg.tbptt_len + cfg.frame_size, 12, (1.0, 0.0, 0.0));
    // 12 chunks, batch 4 -> 3 steps/epoch; run 2 epochs straight vs 3+3
    let straight_cfg = TrainConfig {
        epochs: 2,
        preview_seconds: 0.0,
        seed: 5,
        ..TrainConfig::default()
    };
    let dir_a = train_dir();
    let (straight, _) =
        train(init_model(&cfg, 1).unwrap(), &manifest, &corpus, &straight_cfg, dir_a.path())
            .unwrap();

    let half_cfg = TrainConfig {
        epochs: 2,
        max_steps: Some(3),
        steps_per_checkpoint: 3,
        preview_seconds: 0.0,
        seed: 5,
        ..TrainConfig::default()
    };
    let dir_b = train_dir();
    let (_, half_report) =
        train(init_model(&cfg, 1).unwrap(), &manifest, &corpus, &half_cfg, dir_b.path()).unwrap();
    assert_eq!(half_report.steps, 3);
    let ckpt = load_checkpoint(half_report.checkpoints.last().unwrap()).unwrap();
    assert_eq!(ckpt.step, 3);

    let resume_cfg = TrainConfig {
        epochs: 2,
        preview_seconds: 0.0,
        seed: 999, // ignored: the checkpoint carries the schedule seed
        ..TrainConfig::default()
    };
    let dir_c = train_dir();
    let (resumed, resumed_report) =
        resume(ckpt, &manifest, &corpus, &resume_cfg, dir_c.path()).unwrap();
    assert_eq!(resumed_report.steps, 6);
    assert_eq!(resumed, straight);
}

#[test]
fn huge_learning_rate_aborts_on_non_finite_loss() {
    let cfg = test_config();
    let (corpus, manifest) =
        corpus_and_manifest(&cfg, 1.0, cfg.tbptt_len + cfg.frame_size, 8, (1.0, 0.0, 0.0));
    let model = init_model(&cfg, 5).unwrap();
    let tc = TrainConfig {
        epochs: 50,
        preview_seconds: 0.0,
        adam: AdamConfig { lr: 1e200, ..AdamConfig::default() },
        seed: 1,
        ..TrainConfig::default()
    };
    let dir = train_dir();
    match train(model, &manifest, &corpus, &tc, dir.path()) {
        Err(TrainError::NonFiniteLoss { .. }) => {}
        other => panic!("expected non-finite abort, got {other:?}"),
    }
}

#[test]
fn previews_are_written_at_checkpoints() {
    let cfg = test_config();
    let (corpus, manifest) =
        corpus_and_manifest(&cfg, 1.0, cfg.tbptt_len + cfg.frame_size, 4, (1.0, 0.0, 0.0));
    let model = init_model(&cfg, 5).unwrap();
    let tc = TrainConfig {
        epochs: 1,
        preview_seconds: 0.05,
        seed: 1,
        ..TrainConfig::default()
    };
    let dir = train_dir();
    let (_, report) = train(model, &manifest, &corpus, &tc, dir.path()).unwrap();
    assert_eq!(report.previews.len(), report.checkpoints.len());
    for p in &report.previews {
        let clip = albumgen::audio_io::load_wav(p).unwrap();
        assert_eq!(clip.sample_rate(), cfg.sample_rate);
        assert_eq!(clip.len(), 100); // 0.05 s at 2 kHz
    }
    // epoch-end artifacts follow the naming scheme
    assert!(report
        .checkpoints
        .iter()
        .any(|p| p.file_name().unwrap().to_str().unwrap() == "epoch1_step1.ckpt"));
    assert!(report
        .previews
        .iter()
        .any(|p| p.file_name().unwrap().to_str().unwrap() == "epoch1_step1.wav"));
}
