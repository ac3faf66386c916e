//! Checkpoint format: byte-level round trips, self-description via the
//! embedded spec block, and rejection of corrupted or incomplete files.

use pulsebench_nn::{
    load_checkpoint, save_checkpoint, Backbone, Error, Model, ModelSpec, NormStats, Target,
};

fn spec() -> ModelSpec {
    ModelSpec {
        backbone: Backbone::LeNet1d,
        use_demographics: true,
        target: Target::Dbp,
        input_length: 96,
        seed: 12345,
    }
}

#[test]
fn save_load_round_trip_preserves_everything() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let mut model = Model::new(spec(), NormStats::from_array([48.0, 11.5, 23.0, 2.2])).unwrap();
    // Make the state non-trivial so running statistics round-trip too.
    let ppg: Vec<f32> = (0..4 * 96).map(|i| (i as f32 * 0.07).sin()).collect();
    let demos: Vec<f32> = (0..12).map(|i| i as f32 * 0.1).collect();
    model
        .train_batch(&ppg, 4, Some(&demos), &[110.0, 112.0, 108.0, 115.0])
        .unwrap();

    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.spec, model.spec);
    assert_eq!(loaded.params, model.params);
    assert_eq!(loaded.state, model.state);
    assert_eq!(loaded.norm, model.norm);

    // Saving the loaded model again must reproduce the file byte for byte.
    let path2 = dir.path().join("model2.ckpt");
    save_checkpoint(&loaded, &path2).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&path2).unwrap()
    );
}

#[test]
fn loaded_model_predicts_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = Model::new(spec(), NormStats::identity()).unwrap();
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();

    let ppg: Vec<f32> = (0..2 * 96).map(|i| (i as f32 * 0.11).cos()).collect();
    let demos: Vec<f32> = vec![0.5, 1.0, -0.2, -1.1, 0.0, 0.8];
    assert_eq!(
        model.predict_batch(&ppg, 2, Some(&demos)).unwrap(),
        loaded.predict_batch(&ppg, 2, Some(&demos)).unwrap()
    );
}

#[test]
fn wrong_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = Model::new(spec(), NormStats::identity()).unwrap();
    save_checkpoint(&model, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    let err = load_checkpoint(&path).unwrap_err();
    assert!(matches!(err, Error::MalformedCheckpoint { .. }), "{err}");
    assert!(err.to_string().contains("magic"), "{err}");
}

#[test]
fn unsupported_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = Model::new(spec(), NormStats::identity()).unwrap();
    save_checkpoint(&model, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[4] = 99;
    std::fs::write(&path, &bytes).unwrap();
    let err = load_checkpoint(&path).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
}

#[test]
fn truncation_anywhere_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = Model::new(spec(), NormStats::identity()).unwrap();
    save_checkpoint(&model, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    // Cut at several depths: inside the header, inside the spec block,
    // mid-tensor, and one byte short of the end.
    for cut in [2, 9, 40, bytes.len() / 2, bytes.len() - 1] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(
            matches!(err, Error::MalformedCheckpoint { .. }),
            "cut at {cut}: {err}"
        );
    }
}

#[test]
fn trailing_garbage_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = Model::new(spec(), NormStats::identity()).unwrap();
    save_checkpoint(&model, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.extend_from_slice(&[0, 1, 2, 3]);
    std::fs::write(&path, &bytes).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn missing_tensor_coverage_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = Model::new(spec(), NormStats::identity()).unwrap();
    save_checkpoint(&model, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    // Drop the final tensor (the norm block) but fix up the tensor count so
    // the file still parses structurally.
    let norm_name = b"norm.demographics";
    let pos = bytes
        .windows(norm_name.len())
        .rposition(|w| w == norm_name)
        .unwrap();
    let tensor_start = pos - 4;
    let mut cut = bytes[..tensor_start].to_vec();
    let spec_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count_at = 12 + spec_len;
    let count = u32::from_le_bytes(bytes[count_at..count_at + 4].try_into().unwrap());
    cut[count_at..count_at + 4].copy_from_slice(&(count - 1).to_le_bytes());
    std::fs::write(&path, &cut).unwrap();

    let err = load_checkpoint(&path).unwrap_err();
    assert!(matches!(err, Error::MalformedCheckpoint { .. }), "{err}");
}

#[test]
fn checkpoints_are_self_describing_across_specs() {
    let dir = tempfile::tempdir().unwrap();
    for (i, backbone) in [Backbone::LeNet1d, Backbone::S4].into_iter().enumerate() {
        for multimodal in [false, true] {
            let s = ModelSpec {
                backbone,
                use_demographics: multimodal,
                target: Target::Sbp,
                input_length: 64,
                seed: 7 + i as u64,
            };
            let path = dir.path().join(format!("{i}_{multimodal}.ckpt"));
            let model = Model::new(s.clone(), NormStats::identity()).unwrap();
            save_checkpoint(&model, &path).unwrap();
            let loaded = load_checkpoint(&path).unwrap();
            assert_eq!(loaded.spec, s);
            assert_eq!(loaded.param_count(), model.param_count());
        }
    }
}
