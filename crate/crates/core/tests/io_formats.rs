use std::path::Path;

use divdis_core::io::{self, PredictionFile, PredictionFileHeader, HEADER_LEN};
use divdis_core::synth::{generate_world, SynthConfig};
use divdis_core::{Error, Pairing};
use proptest::prelude::*;

fn header(magic: &[u8; 4], version: u16, flags: u16, n: u32, k: u32) -> Vec<u8> {
    let mut b = Vec::with_capacity(HEADER_LEN);
    b.extend_from_slice(magic);
    b.extend_from_slice(&version.to_le_bytes());
    b.extend_from_slice(&flags.to_le_bytes());
    b.extend_from_slice(&n.to_le_bytes());
    b.extend_from_slice(&k.to_le_bytes());
    b
}

fn small_file(logits: bool) -> PredictionFile {
    PredictionFile {
        n: 3,
        k: 4,
        probs: vec![
            0.7, 0.1, 0.1, 0.1, //
            0.25, 0.25, 0.25, 0.25, //
            0.0, 0.0, 1.0, 0.0,
        ],
        logits: logits.then(|| (0..12).map(|i| i as f32 * 0.5 - 3.0).collect()),
    }
}

#[test]
fn payload_sizes_follow_shape() {
    assert_eq!(small_file(false).encode().len(), HEADER_LEN + 48);
    assert_eq!(small_file(true).encode().len(), HEADER_LEN + 96);
    let h = PredictionFileHeader::parse(&small_file(true).encode()).unwrap();
    assert_eq!((h.n, h.k, h.has_logits()), (3, 4, true));
}

#[test]
fn round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    for logits in [false, true] {
        let file = small_file(logits);
        let path = dir.path().join(format!("f{logits}.ddpm"));
        io::write_prediction_file(&file, &path).unwrap();
        assert_eq!(io::read_prediction_file(&path).unwrap(), file);
        let set = io::read_predictions(&path, "m", "s").unwrap();
        assert_eq!(set.n_samples(), 3);
        assert_eq!(set.has_logits(), logits);
    }
}

proptest! {
    #[test]
    fn encode_decode_is_identity(
        n in 1u32..20,
        k in 2u32..12,
        logits in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let len = (n * k) as usize;
        let mut x = seed | 1;
        let mut next = || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 40) as f32 / (1u64 << 24) as f32
        };
        let probs: Vec<f32> = (0..len).map(|_| next()).collect();
        let file = PredictionFile {
            n,
            k,
            probs,
            logits: logits.then(|| (0..len).map(|_| next() * 10.0 - 5.0).collect()),
        };
        let bytes = file.encode();
        prop_assert_eq!(bytes.len(), HEADER_LEN + len * 4 * if logits { 2 } else { 1 });
        prop_assert_eq!(PredictionFile::decode(&bytes).unwrap(), file);
    }
}

type MalformedCase = (&'static str, Vec<u8>, fn(&Error) -> bool);

#[test]
fn malformed_corpus_is_rejected_with_specific_errors() {
    let payload = vec![0u8; 48];
    let good = |mut h: Vec<u8>| {
        h.extend_from_slice(&payload);
        h
    };
    let cases: Vec<MalformedCase> = vec![
        (
            "bad magic",
            good(header(b"DDPX", 1, 0, 3, 4)),
            |e| matches!(e, Error::BadMagic(m) if m == b"DDPX"),
        ),
        ("bad version", good(header(b"DDPM", 2, 0, 3, 4)), |e| {
            matches!(e, Error::BadVersion(2))
        }),
        ("unknown flags", good(header(b"DDPM", 1, 0b110, 3, 4)), |e| {
            matches!(e, Error::UnknownFlags(6))
        }),
        ("truncated header", header(b"DDPM", 1, 0, 3, 4)[..11].to_vec(), |e| {
            matches!(e, Error::TruncatedHeader(11))
        }),
        (
            "truncated payload",
            {
                let mut b = header(b"DDPM", 1, 0, 3, 4);
                b.extend_from_slice(&payload[..47]);
                b
            },
            |e| {
                matches!(
                    e,
                    Error::TruncatedPayload {
                        expected: 48,
                        found: 47
                    }
                )
            },
        ),
        ("missing logits block", good(header(b"DDPM", 1, 1, 3, 4)), |e| {
            matches!(
                e,
                Error::TruncatedPayload {
                    expected: 96,
                    found: 48
                }
            )
        }),
        (
            "trailing bytes",
            {
                let mut b = good(header(b"DDPM", 1, 0, 3, 4));
                b.extend_from_slice(&[0, 0, 0]);
                b
            },
            |e| matches!(e, Error::TrailingBytes(3)),
        ),
        ("shape overflow", header(b"DDPM", 1, 0, 1 << 16, (1 << 15) + 1), |e| {
            matches!(e, Error::ShapeOverflow { .. })
        }),
        ("empty shape", header(b"DDPM", 1, 0, 0, 4), |e| {
            matches!(e, Error::EmptyShape { n: 0, k: 4 })
        }),
    ];
    for (name, bytes, check) in cases {
        let err = PredictionFile::decode(&bytes).expect_err(name);
        assert!(check(&err), "{name}: unexpected {err:?}");
    }
}

#[test]
fn decoded_matrices_are_validated() {
    let mut file = small_file(false);
    file.probs[0] = 0.9; // row sums to 1.2
    let bytes = file.encode();
    let decoded = PredictionFile::decode(&bytes).unwrap();
    assert!(matches!(
        decoded.to_prediction_set("m", "s"),
        Err(Error::RowSumViolation { row: 0, .. })
    ));
    file.probs[0] = f32::NAN;
    let decoded = PredictionFile::decode(&file.encode()).unwrap();
    assert!(matches!(
        decoded.to_prediction_set("m", "s"),
        Err(Error::NonFinite { row: 0, col: 0 })
    ));
}

#[test]
fn labels_csv() {
    let lv = io::parse_labels("label\n0\n2\n 1 \n\n3\n", "s").unwrap();
    assert_eq!(lv.labels, vec![0, 2, 1, 3]);
    assert!(matches!(io::parse_labels("label\n", "s"), Err(Error::EmptyLabels)));
    assert!(matches!(
        io::parse_labels("0\n-1\n", "s"),
        Err(Error::BadLabel { line: 2, .. })
    ));
    assert!(matches!(
        io::parse_labels("0\nx\n", "s"),
        Err(Error::BadLabel { line: 2, .. })
    ));
    assert!(matches!(
        lv.validate(3),
        Err(Error::LabelOutOfRange {
            index: 3,
            label: 3,
            k: 3
        })
    ));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.csv");
    io::write_labels(&lv, &path).unwrap();
    assert_eq!(io::read_labels(&path, "s").unwrap(), lv);
}

#[test]
fn prediction_csv_import() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    std::fs::write(&path, "p0,p1,p2,y\n0.5,0.25,0.25,0\n0.1,0.8,0.1,1\n").unwrap();
    let (file, labels) = io::import_prediction_csv(&path).unwrap();
    assert_eq!((file.n, file.k), (2, 3));
    assert_eq!(file.probs, vec![0.5, 0.25, 0.25, 0.1, 0.8, 0.1]);
    assert_eq!(labels, Some(vec![0, 1]));

    std::fs::write(&path, "p0,p1\n0.5,0.5\n").unwrap();
    let (file, labels) = io::import_prediction_csv(&path).unwrap();
    assert_eq!((file.n, file.k, labels), (1, 2, None));

    std::fs::write(&path, "p0,q1\n0.5,0.5\n").unwrap();
    assert!(matches!(io::import_prediction_csv(&path), Err(Error::Manifest { .. })));
}

fn write_world(dir: &Path) -> std::path::PathBuf {
    let cfg = SynthConfig {
        n_models: 3,
        n_samples: 50,
        n_classes: 4,
        severities: vec![1.0],
        ..SynthConfig::default()
    };
    generate_world(&cfg)
        .unwrap()
        .write(dir, Pairing::AllPairs, false)
        .unwrap()
}

fn edit_manifest(path: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

#[test]
fn manifest_loads_with_resolved_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_world(dir.path());
    let m = io::load_manifest(&path).unwrap();
    assert_eq!(m.k, 4);
    assert_eq!(m.splits(), vec!["id".to_string(), "shift1".to_string()]);
    assert!(m
        .models
        .iter()
        .all(|e| e.predictions.values().all(|p| p.is_absolute() || p.exists())));
    assert_eq!(m.severity_of("shift1"), Some(1));
}

#[test]
fn manifest_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_world(dir.path());
    let original = std::fs::read_to_string(&path).unwrap();
    let reset = || std::fs::write(&path, &original).unwrap();

    edit_manifest(&path, |v| v["pairing"] = serde_json::json!({"anchor": "clip"}));
    assert!(matches!(io::load_manifest(&path), Err(Error::AnchorNotFound(a)) if a == "clip"));
    reset();

    edit_manifest(&path, |v| v["models"][1]["id"] = "m00".into());
    assert!(matches!(io::load_manifest(&path), Err(Error::DuplicateModel(_))));
    reset();

    edit_manifest(&path, |v| {
        v["models"][2]["predictions"]["shift1"] = "nowhere.ddpm".into()
    });
    assert!(matches!(io::load_manifest(&path), Err(Error::DanglingPath { .. })));
    reset();

    edit_manifest(&path, |v| {
        v["models"][2]["predictions"].as_object_mut().unwrap().remove("shift1");
    });
    assert!(matches!(io::load_manifest(&path), Err(Error::MissingSplit { .. })));
    reset();

    edit_manifest(&path, |v| v["surprise"] = 1.into());
    assert!(matches!(io::load_manifest(&path), Err(Error::Manifest { .. })));
    reset();

    // a file with fewer samples than its siblings
    let short = PredictionFile {
        n: 2,
        k: 4,
        probs: vec![0.25; 8],
        logits: None,
    };
    io::write_prediction_file(&short, &dir.path().join("m02/shift1.ddpm")).unwrap();
    assert!(matches!(io::load_manifest(&path), Err(Error::ShapeMismatch(_))));

    let wrong_k = PredictionFile {
        n: 50,
        k: 5,
        probs: vec![0.2; 250],
        logits: None,
    };
    io::write_prediction_file(&wrong_k, &dir.path().join("m02/shift1.ddpm")).unwrap();
    assert!(matches!(
        io::load_manifest(&path),
        Err(Error::ClassCountMismatch { expected: 4, found: 5 })
    ));
}

#[test]
fn writing_refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    write_world(dir.path());
    let cfg = SynthConfig {
        n_models: 3,
        n_samples: 50,
        n_classes: 4,
        severities: vec![1.0],
        ..SynthConfig::default()
    };
    let world = generate_world(&cfg).unwrap();
    assert!(matches!(
        world.write(dir.path(), Pairing::AllPairs, false),
        Err(Error::WouldOverwrite(_))
    ));
    world.write(dir.path(), Pairing::AllPairs, true).unwrap();
}
