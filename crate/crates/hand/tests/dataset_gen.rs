//! Dataset generator contracts: determinism, unpaired splits, event yield.

use evhand_event::io::read_event_file;
use evhand_hand::dataset::{generate_dataset, sample_path, GenConfig, Manifest};
use evhand_hand::Amplitude;

fn small_config() -> GenConfig {
    GenConfig {
        rgb_samples: 5,
        event_samples: 4,
        finetune_samples: 2,
        eval_samples: 2,
        flow_sequences: 2,
        ..GenConfig::default()
    }
}

#[test]
fn same_seed_gives_byte_identical_dataset() {
    let cfg = small_config();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let m1 = generate_dataset::<f64>(99, &cfg, d1.path()).unwrap();
    let _m2 = generate_dataset::<f64>(99, &cfg, d2.path()).unwrap();
    assert_eq!(
        std::fs::read(d1.path().join("manifest.json")).unwrap(),
        std::fs::read(d2.path().join("manifest.json")).unwrap()
    );
    for (split, records) in &m1.splits {
        for rec in records {
            for rel in rec.files.values() {
                let a = std::fs::read(d1.path().join(rel)).unwrap();
                let b = std::fs::read(d2.path().join(rel)).unwrap();
                assert_eq!(a, b, "split {split} file {rel}");
            }
        }
    }
}

#[test]
fn manifest_round_trips_and_lists_every_sample() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset::<f64>(123, &cfg, dir.path()).unwrap();
    let loaded = Manifest::load(dir.path()).unwrap();
    assert_eq!(loaded.split("rgb").len(), 5);
    assert_eq!(loaded.split("event").len(), 4);
    assert_eq!(loaded.split("finetune").len(), 2);
    assert_eq!(loaded.split("eval").len(), 2);
    assert_eq!(loaded.split("flow").len(), 2);
    for (split, records) in &m.splits {
        for rec in records {
            for rel in rec.files.values() {
                assert!(
                    dir.path().join(rel).exists(),
                    "missing {rel} in split {split}"
                );
            }
        }
    }
}

#[test]
fn zero_event_samples_yield_empty_split() {
    let cfg = GenConfig {
        rgb_samples: 2,
        event_samples: 0,
        finetune_samples: 0,
        eval_samples: 0,
        flow_sequences: 0,
        ..GenConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset::<f64>(5, &cfg, dir.path()).unwrap();
    assert!(m.split("event").is_empty());
    assert_eq!(m.split("rgb").len(), 2);
}

#[test]
fn rgb_and_event_splits_share_no_script_seed() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset::<f64>(7, &cfg, dir.path()).unwrap();
    let rgb: std::collections::BTreeSet<u64> =
        m.split("rgb").iter().map(|r| r.script_seed).collect();
    let ev: std::collections::BTreeSet<u64> =
        m.split("event").iter().map(|r| r.script_seed).collect();
    assert!(rgb.is_disjoint(&ev));
}

#[test]
fn moving_samples_emit_events() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset::<f64>(11, &cfg, dir.path()).unwrap();
    let mut saw_high = false;
    for rec in m.split("event") {
        let stream = read_event_file(&sample_path(dir.path(), rec, "events").unwrap()).unwrap();
        if rec.amplitude == Amplitude::High {
            saw_high = true;
            assert!(!stream.is_empty(), "high-amplitude sample {} empty", rec.id);
        }
    }
    assert!(saw_high, "config should produce at least one high-amplitude sample");
}

#[test]
fn invalid_config_is_rejected() {
    let cfg = GenConfig {
        keyframes: 1,
        ..GenConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    assert!(generate_dataset::<f64>(1, &cfg, dir.path()).is_err());
}
