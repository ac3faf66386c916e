//! Prediction file round-trips and malformed-input handling.

use pulsebench_eval::{
    load_predictions, save_predictions, Error, PredictionRecord, PredictionSet, Protocol,
};
use pulsebench_nn::Target;

fn sample_set() -> PredictionSet {
    PredictionSet {
        target: Target::Sbp,
        protocol: Protocol::CalFree,
        records: vec![
            PredictionRecord {
                subject_id: "subj-001".into(),
                y_true: 120.5,
                y_pred: 118.337,
            },
            PredictionRecord {
                subject_id: "subj-002".into(),
                y_true: 1.0 / 3.0,
                y_pred: -0.0,
            },
            PredictionRecord {
                subject_id: "subj-002".into(),
                y_true: 97.25,
                y_pred: 103.0625,
            },
        ],
    }
}

#[test]
fn round_trip_preserves_everything_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds.csv");
    let set = sample_set();
    save_predictions(&set, &path).unwrap();
    let back = load_predictions(&path).unwrap();
    assert_eq!(back.target, Target::Sbp);
    assert_eq!(back.protocol, Protocol::CalFree);
    assert_eq!(back.records.len(), 3);
    for (a, b) in set.records.iter().zip(&back.records) {
        assert_eq!(a.subject_id, b.subject_id);
        assert_eq!(a.y_true.to_bits(), b.y_true.to_bits());
        assert_eq!(a.y_pred.to_bits(), b.y_pred.to_bits());
    }
}

#[test]
fn file_layout_is_header_plus_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds.csv");
    save_predictions(&sample_set(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "#target=sbp protocol=cal_free");
    assert_eq!(lines[1], "subj-001,120.500,118.337");
    assert_eq!(lines.len(), 4);
    assert!(text.ends_with('\n'));
}

#[test]
fn saving_rejects_ids_that_break_the_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds.csv");
    let mut set = sample_set();
    set.records[0].subject_id = "a,b".into();
    assert!(matches!(
        save_predictions(&set, &path),
        Err(Error::DataMismatch(_))
    ));
}

#[test]
fn malformed_files_are_reported_with_reasons() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    };
    let cases = [
        ("empty.csv", ""),
        ("no_header.csv", "s1,120,118\n"),
        ("bad_target.csv", "#target=map protocol=cal_free\n"),
        ("bad_protocol.csv", "#target=sbp protocol=holdout\n"),
        ("bad_key.csv", "#target=sbp protocol=cal_free split=x\n"),
        ("missing_protocol.csv", "#target=sbp\n"),
        ("short_row.csv", "#target=sbp protocol=cal_free\ns1,120\n"),
        ("long_row.csv", "#target=sbp protocol=cal_free\ns1,120,118,3\n"),
        ("bad_float.csv", "#target=sbp protocol=cal_free\ns1,120,abc\n"),
    ];
    for (name, body) in cases {
        let p = write(name, body);
        match load_predictions(&p) {
            Err(Error::MalformedFile { .. }) => {}
            other => panic!("{name}: expected MalformedFile, got {other:?}"),
        }
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    match load_predictions(&dir.path().join("absent.csv")) {
        Err(Error::Io { .. }) => {}
        other => panic!("expected Io error, got {other:?}"),
    }
}

#[test]
fn empty_record_list_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds.csv");
    let set = PredictionSet {
        target: Target::Dbp,
        protocol: Protocol::CalBased,
        records: vec![],
    };
    save_predictions(&set, &path).unwrap();
    let back = load_predictions(&path).unwrap();
    assert_eq!(back.target, Target::Dbp);
    assert_eq!(back.protocol, Protocol::CalBased);
    assert!(back.records.is_empty());
}
